use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::problems::{ConstrainedProblem, GraphProblem};
use crate::scalar::Scalar;

fn check_duals<T: Scalar>(m_g: usize, m_h: usize, lambda_g: &[T], lambda_h: &[T]) -> Result<()> {
    if lambda_g.len() != m_g || lambda_h.len() != m_h {
        return Err(Error::dim(
            "augmented_lagrangian",
            format!("{m_g} + {m_h} multipliers"),
            format!("{} + {}", lambda_g.len(), lambda_h.len()),
        ));
    }
    Ok(())
}

/// `L_rho = f + lg'g + lh'h + rho/2 (|max(g, 0)|^2 + |h|^2)` as a graph node.
pub fn augmented_lagrangian<T: Scalar, P: GraphProblem<T>>(
    p: &P,
    g: &mut Graph<T>,
    y: Var,
    lambda_g: &[T],
    lambda_h: &[T],
    rho: T,
) -> Result<Var> {
    let f = p.objective_node(g, y)?;
    let gv = p.ineq_node(g, y)?;
    let hv = p.eq_node(g, y)?;
    let (gs, hs) = (g.shape(gv).to_vec(), g.shape(hv).to_vec());
    check_duals(gs.iter().product(), hs.iter().product(), lambda_g, lambda_h)?;
    let lg = g.constant(Tensor::new(&gs, lambda_g.to_vec())?);
    let lh = g.constant(Tensor::new(&hs, lambda_h.to_vec())?);
    let lin_g = g.mul(lg, gv)?;
    let lin_g = g.sum(lin_g)?;
    let lin_h = g.mul(lh, hv)?;
    let lin_h = g.sum(lin_h)?;
    let pos = g.max_with_zero(gv)?;
    let pen_g = g.l2_norm_squared(pos)?;
    let pen_h = g.l2_norm_squared(hv)?;
    let pen = g.add(pen_g, pen_h)?;
    let pen = g.scale(pen, rho * T::cast(0.5))?;
    let out = g.add(f, lin_g)?;
    let out = g.add(out, lin_h)?;
    g.add(out, pen)
}

/// Value and gradient of `L_rho` at `y` without a tape.
pub fn augmented_lagrangian_value<T: Scalar, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    y: &[T],
    lambda_g: &[T],
    lambda_h: &[T],
    rho: T,
    grad: Option<&mut [T]>,
) -> T {
    let mut gv = vec![T::zero(); p.num_ineq()];
    let mut hv = vec![T::zero(); p.num_eq()];
    p.ineq_residuals(y, &mut gv);
    p.eq_residuals(y, &mut hv);
    let half = T::cast(0.5);
    let mut val = p.objective(y);
    for (&gj, &lj) in gv.iter().zip(lambda_g) {
        let pos = gj.max(T::zero());
        val += lj * gj + half * rho * pos * pos;
    }
    for (&hi, &li) in hv.iter().zip(lambda_h) {
        val += li * hi + half * rho * hi * hi;
    }
    if let Some(out) = grad {
        p.objective_grad(y, out);
        let wg: Vec<T> = gv
            .iter()
            .zip(lambda_g)
            .map(|(&gj, &lj)| lj + rho * gj.max(T::zero()))
            .collect();
        let wh: Vec<T> = hv.iter().zip(lambda_h).map(|(&hi, &li)| li + rho * hi).collect();
        p.ineq_vjp(y, &wg, out);
        p.eq_vjp(y, &wh, out);
    }
    val
}

/// `lg' = max(lg + rho g, 0)`, `lh' = lh + rho h`.
pub fn dual_update<T: Scalar>(lambda_g: &[T], lambda_h: &[T], g: &[T], h: &[T], rho: T) -> (Vec<T>, Vec<T>) {
    let lg = lambda_g
        .iter()
        .zip(g)
        .map(|(&l, &gj)| (l + rho * gj).max(T::zero()))
        .collect();
    let lh = lambda_h.iter().zip(h).map(|(&l, &hi)| l + rho * hi).collect();
    (lg, lh)
}

/// `v = max(|h|_inf, |sigma|_inf)` with `sigma_j = max(g_j, -lg_j / rho)`.
pub fn violation<T: Scalar>(h: &[T], g: &[T], lambda_g: &[T], rho: T) -> T {
    let vh = h.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    g.iter()
        .zip(lambda_g)
        .fold(vh, |m, (&gj, &lj)| m.max(gj.max(-lj / rho).abs()))
}

/// Penalty growth: `min(alpha rho, rho_max)` when `v_k > tau v_{k-1}`. There
/// is no previous violation at the first iteration, so `rho` is kept.
pub fn update_rho<T: Scalar>(rho: T, v_k: T, v_prev: Option<T>, alpha: T, tau: T, rho_max: T) -> T {
    match v_prev {
        Some(vp) if v_k > tau * vp => (alpha * rho).min(rho_max),
        _ => rho,
    }
}
