//! Training losses. Every loss is a mean over the instances of a batch; `y`
//! is a `[B, n]` decision node and `xs` the matching `[B, p]` parameters.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::problems::ProblemFamily;
use crate::scalar::Scalar;

use super::config::Norm;

fn batch_mean<T: Scalar>(g: &mut Graph<T>, total: Var, batch: usize) -> Result<Var> {
    g.scale(total, T::one() / T::cast(batch as f64))
}

fn weighted_sum<T: Scalar>(g: &mut Graph<T>, weights: &Tensor<T>, v: Var) -> Result<Var> {
    if weights.shape() != g.shape(v) {
        return Err(Error::dim(
            "weighted_sum",
            format!("{:?}", g.shape(v)),
            format!("{:?}", weights.shape()),
        ));
    }
    let w = g.constant(weights.clone());
    let p = g.mul(w, v)?;
    g.sum(p)
}

/// `sum(max(g, 0)^2) + sum(h^2)` over the whole batch.
fn squared_violations<T: Scalar>(g: &mut Graph<T>, gv: Var, hv: Var) -> Result<Var> {
    let pos = g.max_with_zero(gv)?;
    let pg = g.l2_norm_squared(pos)?;
    let ph = g.l2_norm_squared(hv)?;
    g.add(pg, ph)
}

/// Primal PDL loss: batch mean of
/// `f + lg'g + lh'h + rho/2 (|max(g, 0)|^2 + |h|^2)` with the multipliers
/// held constant.
pub fn primal_loss_pdl<T: Scalar>(
    g: &mut Graph<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    lambda_g: &Tensor<T>,
    lambda_h: &Tensor<T>,
    rho: T,
) -> Result<Var> {
    if lambda_g.data().iter().any(|&l| l < T::zero()) {
        return Err(Error::Contract("inequality multipliers must be nonnegative".into()));
    }
    let b = xs.rows();
    let f = fam.objective_batch(g, xs, y)?;
    let fs = g.sum(f)?;
    let gv = fam.ineq_batch(g, xs, y)?;
    let hv = fam.eq_batch(g, xs, y)?;
    let lin_g = weighted_sum(g, lambda_g, gv)?;
    let lin_h = weighted_sum(g, lambda_h, hv)?;
    let pen = squared_violations(g, gv, hv)?;
    let pen = g.scale(pen, rho * T::cast(0.5))?;
    let total = g.add(fs, lin_g)?;
    let total = g.add(total, lin_h)?;
    let total = g.add(total, pen)?;
    batch_mean(g, total, b)
}

/// Self-supervised squared penalty: batch mean of
/// `f + rho/2 (|max(g, 0)|^2 + |h|^2)`.
pub fn squared_penalty_loss<T: Scalar>(
    g: &mut Graph<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    rho: T,
) -> Result<Var> {
    let b = xs.rows();
    let f = fam.objective_batch(g, xs, y)?;
    let fs = g.sum(f)?;
    let gv = fam.ineq_batch(g, xs, y)?;
    let hv = fam.eq_batch(g, xs, y)?;
    let pen = squared_violations(g, gv, hv)?;
    let pen = g.scale(pen, rho * T::cast(0.5))?;
    let total = g.add(fs, pen)?;
    batch_mean(g, total, b)
}

/// Dual targets `[max(lg_k + rho g, 0), lh_k + rho h]`, concatenated per row
/// in the dual network's output layout.
pub fn dual_targets<T: Scalar>(
    lambda_gk: &Tensor<T>,
    lambda_hk: &Tensor<T>,
    gv: &Tensor<T>,
    hv: &Tensor<T>,
    rho: T,
) -> Result<Tensor<T>> {
    if lambda_gk.shape() != gv.shape() || lambda_hk.shape() != hv.shape() {
        return Err(Error::dim(
            "dual_targets",
            format!("{:?} and {:?}", gv.shape(), hv.shape()),
            format!("{:?} and {:?}", lambda_gk.shape(), lambda_hk.shape()),
        ));
    }
    let tg = lambda_gk.zip_map(gv, |l, v| (l + rho * v).max(T::zero()));
    let th = lambda_hk.zip_map(hv, |l, v| l + rho * v);
    hcat(&tg, &th)
}

/// Dual PDL loss: batch mean of the per-instance norm of
/// `D(x) - targets`; the targets are constants.
pub fn dual_loss_pdl<T: Scalar>(g: &mut Graph<T>, lambda: Var, targets: &Tensor<T>, norm: Norm) -> Result<Var> {
    if g.shape(lambda) != targets.shape() {
        return Err(Error::dim(
            "dual_loss",
            format!("{:?}", targets.shape()),
            format!("{:?}", g.shape(lambda)),
        ));
    }
    let b = targets.rows();
    let t = g.constant(targets.clone());
    let d = g.sub(lambda, t)?;
    let total = match norm {
        Norm::L1 => g.l1_norm(d)?,
        Norm::L2Squared => g.l2_norm_squared(d)?,
    };
    batch_mean(g, total, b)
}

/// Mean absolute or mean squared error over all entries.
pub fn naive_supervised_loss<T: Scalar>(g: &mut Graph<T>, y: Var, y_true: &Tensor<T>, norm: Norm) -> Result<Var> {
    if g.shape(y) != y_true.shape() {
        return Err(Error::dim(
            "naive_supervised_loss",
            format!("{:?}", y_true.shape()),
            format!("{:?}", g.shape(y)),
        ));
    }
    let t = g.constant(y_true.clone());
    let d = g.sub(y, t)?;
    let e = match norm {
        Norm::L1 => g.abs(d)?,
        Norm::L2Squared => g.square(d)?,
    };
    g.mean(e)
}

/// Batch mean of `sum_j rho_g,j max(g_j, 0) + sum_j rho_h,j |h_j|`.
pub fn penalty_terms<T: Scalar>(
    g: &mut Graph<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    rho_g: &[T],
    rho_h: &[T],
) -> Result<Var> {
    let b = xs.rows();
    let gv = fam.ineq_batch(g, xs, y)?;
    let hv = fam.eq_batch(g, xs, y)?;
    if rho_g.len() != fam.num_ineq() || rho_h.len() != fam.num_eq() {
        return Err(Error::dim(
            "penalty_terms",
            format!("{} + {} weights", fam.num_ineq(), fam.num_eq()),
            format!("{} + {}", rho_g.len(), rho_h.len()),
        ));
    }
    let wg = g.constant(Tensor::vector(rho_g.to_vec()));
    let wh = g.constant(Tensor::vector(rho_h.to_vec()));
    let pos = g.max_with_zero(gv)?;
    let pg = g.mul_row(pos, wg)?;
    let pg = g.sum(pg)?;
    let ah = g.abs(hv)?;
    let ph = g.mul_row(ah, wh)?;
    let ph = g.sum(ph)?;
    let total = g.add(pg, ph)?;
    batch_mean(g, total, b)
}

/// Naive loss plus weighted absolute violations.
#[allow(clippy::too_many_arguments)]
pub fn supervised_penalty_loss<T: Scalar>(
    g: &mut Graph<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    y_true: &Tensor<T>,
    norm: Norm,
    rho_g: &[T],
    rho_h: &[T],
) -> Result<Var> {
    let base = naive_supervised_loss(g, y, y_true, norm)?;
    let pen = penalty_terms(g, fam, xs, y, rho_g, rho_h)?;
    g.add(base, pen)
}

/// Self-supervised penalty loss: batch mean of `f` plus weighted absolute
/// violations.
pub fn ssl_penalty_loss<T: Scalar>(
    g: &mut Graph<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    rho_g: &[T],
    rho_h: &[T],
) -> Result<Var> {
    let b = xs.rows();
    let f = fam.objective_batch(g, xs, y)?;
    let fs = g.sum(f)?;
    let fm = batch_mean(g, fs, b)?;
    let pen = penalty_terms(g, fam, xs, y, rho_g, rho_h)?;
    g.add(fm, pen)
}

/// Subgradient step on per-constraint weights: `rho_j += gamma * nu_j`.
pub fn ld_update<T: Scalar>(weights: &mut [T], mean_violation: &[T], gamma: T) -> Result<()> {
    if weights.len() != mean_violation.len() {
        return Err(Error::dim("ld_update", weights.len(), mean_violation.len()));
    }
    for (w, &v) in weights.iter_mut().zip(mean_violation) {
        *w += gamma * v;
    }
    Ok(())
}

/// Column-wise concatenation of two `[B, *]` matrices.
pub(crate) fn hcat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rows() != b.rows() {
        return Err(Error::dim("hcat", a.rows(), b.rows()));
    }
    let (ca, cb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..a.rows() {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    Tensor::matrix(a.rows(), ca + cb, data)
}
