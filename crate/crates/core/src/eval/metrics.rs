use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `100 |f_ref - f_pred| / |f_ref|`.
pub fn optimality_gap(f_ref: f64, f_pred: f64) -> Result<f64> {
    if f_ref == 0.0 {
        return Err(Error::UndefinedGap);
    }
    Ok(100.0 * (f_ref - f_pred).abs() / f_ref.abs())
}

/// Percentage gap, or the absolute difference (flagged `true`) when the
/// reference objective is zero.
pub fn gap_or_absolute(f_ref: f64, f_pred: f64) -> (f64, bool) {
    match optimality_gap(f_ref, f_pred) {
        Ok(g) => (g, false),
        Err(_) => ((f_ref - f_pred).abs(), true),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Violations {
    pub max_eq: f64,
    pub mean_eq: f64,
    pub max_ineq: f64,
    pub mean_ineq: f64,
}

/// Max and mean of `|h_j|` and `max(g_j, 0)`; empty constraint sets give 0.
pub fn violations<T: Scalar>(eq: &[T], ineq: &[T]) -> Violations {
    let stats = |v: &mut dyn Iterator<Item = f64>| {
        let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
        for x in v {
            max = max.max(x);
            sum += x;
            n += 1;
        }
        (max, if n == 0 { 0.0 } else { sum / n as f64 })
    };
    let (max_eq, mean_eq) = stats(&mut eq.iter().map(|h| h.to_f64_lossless().abs()));
    let (max_ineq, mean_ineq) = stats(&mut ineq.iter().map(|g| g.to_f64_lossless().max(0.0)));
    Violations {
        max_eq,
        mean_eq,
        max_ineq,
        mean_ineq,
    }
}

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        (s[m - 1] + s[m]) / 2.0
    } else {
        s[m]
    }
}
