//! Polak-Ribiere (PR+) nonlinear conjugate gradient with a backtracking
//! Armijo line search.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct NcgResult<T> {
    pub y: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub grad_norm: T,
    /// False when the iteration cap was hit or no descent step was found.
    pub converged: bool,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sup_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// Minimizes `fg` from `y0` until `|grad|_inf <= tol` or `cap` iterations.
/// `fg(y, grad)` returns the value and writes the gradient.
pub fn minimize<T: Scalar>(
    mut fg: impl FnMut(&[T], &mut [T]) -> T,
    y0: &[T],
    tol: T,
    cap: usize,
) -> Result<NcgResult<T>> {
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut grad = vec![T::zero(); n];
    let mut value = fg(&y, &mut grad);
    check(&y, value, &grad, 0)?;
    let mut dir: Vec<T> = grad.iter().map(|&g| -g).collect();
    let mut trial = vec![T::zero(); n];
    let mut trial_grad = vec![T::zero(); n];
    let mut step = T::one() / sup_norm(&grad).max(T::one());
    let mut prev_slope = T::zero();
    let c = T::cast(ARMIJO_C);
    let half = T::cast(0.5);

    for it in 0..cap {
        let gnorm = sup_norm(&grad);
        if gnorm <= tol {
            return Ok(NcgResult {
                y,
                value,
                iterations: it,
                grad_norm: gnorm,
                converged: true,
            });
        }
        let mut slope = dot(&grad, &dir);
        if slope >= T::zero() {
            dir.iter_mut().zip(&grad).for_each(|(d, &g)| *d = -g);
            slope = -dot(&grad, &grad);
        }
        if it > 0 && prev_slope < T::zero() {
            step = (step * prev_slope / slope).min(T::cast(1e6));
        }
        // Quadratic fit along the ray picks the first trial; backtracking
        // enforces sufficient decrease.
        let mut t = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            axpy(&y, t, &dir, &mut trial);
            let ft = fg(&trial, &mut trial_grad);
            if ft.is_finite() && ft <= value + c * t * slope {
                let curv = (ft - value - slope * t) / (t * t);
                if curv > T::zero() {
                    let t_star = -slope / (curv + curv);
                    if t_star > t * T::cast(1.01) || t_star < t * T::cast(0.99) {
                        let mut alt = vec![T::zero(); n];
                        let mut alt_grad = vec![T::zero(); n];
                        axpy(&y, t_star, &dir, &mut alt);
                        let fa = fg(&alt, &mut alt_grad);
                        if fa.is_finite() && fa < ft && fa <= value + c * t_star * slope {
                            accepted = Some((t_star, fa, alt, alt_grad));
                            break;
                        }
                    }
                }
                accepted = Some((t, ft, trial.clone(), trial_grad.clone()));
                break;
            }
            let curv = (ft - value - slope * t) / (t * t);
            let t_int = if ft.is_finite() && curv > T::zero() {
                -slope / (curv + curv)
            } else {
                t * half
            };
            t = t_int.max(t * T::cast(0.1)).min(t * half);
        }
        let Some((t, ft, y_new, g_new)) = accepted else {
            return Ok(NcgResult {
                y,
                value,
                iterations: it,
                grad_norm: gnorm,
                converged: false,
            });
        };
        check(&y_new, ft, &g_new, it + 1)?;
        // PR+: beta = max(0, g_new'(g_new - g) / g'g)
        let gg = dot(&grad, &grad);
        let beta = ((dot(&g_new, &g_new) - dot(&g_new, &grad)) / gg).max(T::zero());
        for (d, &gn) in dir.iter_mut().zip(&g_new) {
            *d = -gn + beta * *d;
        }
        y = y_new;
        grad = g_new;
        value = ft;
        step = t;
        prev_slope = slope;
    }
    let gnorm = sup_norm(&grad);
    Ok(NcgResult {
        y,
        value,
        iterations: cap,
        grad_norm: gnorm,
        converged: gnorm <= tol,
    })
}

fn axpy<T: Scalar>(y: &[T], t: T, d: &[T], out: &mut [T]) {
    for ((o, &yi), &di) in out.iter_mut().zip(y).zip(d) {
        *o = yi + t * di;
    }
}

fn check<T: Scalar>(y: &[T], value: T, grad: &[T], iteration: usize) -> Result<()> {
    if value.is_finite() && y.iter().chain(grad).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate {
            iteration,
            iterate: y.iter().map(|v| v.to_f64_lossless()).collect(),
        })
    }
}
