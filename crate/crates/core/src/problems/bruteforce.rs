use super::family::{FamilyData, Instance};
use super::traits::ConstrainedProblem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BRUTEFORCE_MAX_VARS: usize = 20;

/// Exact minimizer of a QCQP instance over `{-1, 1}^n` by enumeration.
///
/// Candidates are visited in lexicographic order (with `-1 < 1`) and only a
/// strictly smaller objective replaces the incumbent, so ties resolve to the
/// lexicographically smallest point.
pub fn qcqp_bruteforce<T: Scalar>(inst: &Instance<'_, T>) -> Result<(Vec<T>, T)> {
    let a = match inst.family().data() {
        FamilyData::Qcqp(d) => &d.a,
        FamilyData::Qp(_) => return Err(Error::Contract("brute force applies to QCQP instances".into())),
    };
    let n = inst.num_vars();
    if n > BRUTEFORCE_MAX_VARS {
        return Err(Error::Budget {
            n,
            limit: BRUTEFORCE_MAX_VARS,
        });
    }
    let x = inst.x();
    let m = x.len();
    let mut y = vec![-T::one(); n];
    let mut best_y = y.clone();
    let mut best = T::infinity();
    let mut res = vec![T::zero(); m];
    for code in 0u64..(1u64 << n) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = if code >> (n - 1 - j) & 1 == 1 {
                T::one()
            } else {
                -T::one()
            };
        }
        for (i, r) in res.iter_mut().enumerate() {
            *r = crate::autodiff::dot(a.row(i), &y) - x[i];
        }
        let f: T = res.iter().map(|&v| v * v).sum();
        if f < best {
            best = f;
            best_y.copy_from_slice(&y);
        }
    }
    Ok((best_y, best))
}
