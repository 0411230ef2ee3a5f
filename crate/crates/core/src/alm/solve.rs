use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AlmConfig;
use super::lagrangian::{augmented_lagrangian_value, dual_update, update_rho, violation};
use super::ncg::{minimize, NcgResult};
use crate::error::{Error, Result};
use crate::problems::ConstrainedProblem;
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_for};

/// Current iterate of one ALM run.
#[derive(Clone, Debug, PartialEq)]
pub struct AlmState<T> {
    pub y: Vec<T>,
    pub lambda_g: Vec<T>,
    pub lambda_h: Vec<T>,
    pub rho: T,
    pub v_prev: Option<T>,
    pub k: usize,
}

/// One CSV row of a convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmTraceRow {
    pub k: usize,
    pub f: f64,
    pub v_k: f64,
    pub rho: f64,
    pub inner_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlmOutcome<T> {
    pub state: AlmState<T>,
    pub objective: T,
    pub trace: Vec<AlmTraceRow>,
    pub converged: bool,
    pub diverged: bool,
    /// Outer iterations whose inner solve stopped before reaching tolerance.
    pub inner_failures: usize,
}

impl<T: Scalar> AlmOutcome<T> {
    pub fn y(&self) -> &[T] {
        &self.state.y
    }

    pub fn final_violation(&self) -> Option<f64> {
        self.trace.last().map(|r| r.v_k)
    }
}

/// Minimizes `L_rho(., lambda_g, lambda_h)` from `y0`.
pub fn inner_solve<T: Scalar, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    y0: &[T],
    lambda_g: &[T],
    lambda_h: &[T],
    rho: T,
    tol: T,
    cap: usize,
) -> Result<NcgResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Config("inner tolerance must be positive".into()));
    }
    if y0.len() != p.num_vars() || lambda_g.len() != p.num_ineq() || lambda_h.len() != p.num_eq() {
        return Err(Error::dim("inner_solve", p.num_vars(), y0.len()));
    }
    minimize(
        |y, g| augmented_lagrangian_value(p, y, lambda_g, lambda_h, rho, Some(g)),
        y0,
        tol,
        cap,
    )
}

/// Maximum absolute equality residual and positive inequality residual.
pub fn max_violation<T: Scalar, P: ConstrainedProblem<T> + ?Sized>(p: &P, y: &[T]) -> T {
    let mut g = vec![T::zero(); p.num_ineq()];
    let mut h = vec![T::zero(); p.num_eq()];
    p.ineq_residuals(y, &mut g);
    p.eq_residuals(y, &mut h);
    let vh = h.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    g.iter().fold(vh, |m, &v| m.max(v))
}

pub fn alm_solve<T: Scalar, P: ConstrainedProblem<T> + ?Sized>(
    p: &P,
    config: &AlmConfig,
    y0: &[T],
    lambda_g0: &[T],
    lambda_h0: &[T],
) -> Result<AlmOutcome<T>> {
    config.validate()?;
    if lambda_g0.len() != p.num_ineq() || lambda_h0.len() != p.num_eq() {
        return Err(Error::dim(
            "alm_solve",
            format!("{} + {} multipliers", p.num_ineq(), p.num_eq()),
            format!("{} + {}", lambda_g0.len(), lambda_h0.len()),
        ));
    }
    if lambda_g0.iter().any(|&l| l < T::zero()) {
        return Err(Error::Contract("inequality multipliers must be nonnegative".into()));
    }
    let cast = T::cast;
    let cap = config.inner_cap_per_var * p.num_vars().max(1);
    let mut state = AlmState {
        y: y0.to_vec(),
        lambda_g: lambda_g0.to_vec(),
        lambda_h: lambda_h0.to_vec(),
        rho: cast(config.rho),
        v_prev: None,
        k: 0,
    };
    let mut trace = Vec::new();
    let mut g = vec![T::zero(); p.num_ineq()];
    let mut h = vec![T::zero(); p.num_eq()];
    let (mut converged, mut diverged) = (false, false);
    let mut growth = 0;
    let mut inner_failures = 0;
    for k in 1..=config.max_outer {
        state.k = k;
        let inner = inner_solve(
            p,
            &state.y,
            &state.lambda_g,
            &state.lambda_h,
            state.rho,
            cast(config.inner_tol),
            cap,
        )?;
        if !inner.converged {
            inner_failures += 1;
        }
        state.y = inner.y;
        p.ineq_residuals(&state.y, &mut g);
        p.eq_residuals(&state.y, &mut h);
        let v = violation(&h, &g, &state.lambda_g, state.rho);
        let (lg, lh) = dual_update(&state.lambda_g, &state.lambda_h, &g, &h, state.rho);
        state.lambda_g = lg;
        state.lambda_h = lh;
        trace.push(AlmTraceRow {
            k,
            f: p.objective(&state.y).to_f64_lossless(),
            v_k: v.to_f64_lossless(),
            rho: state.rho.to_f64_lossless(),
            inner_iters: inner.iterations,
        });
        if v < cast(config.epsilon) {
            converged = true;
            break;
        }
        let at_max = state.rho >= cast(config.rho_max);
        growth = match state.v_prev {
            Some(vp) if at_max && v > vp => growth + 1,
            _ => 0,
        };
        if growth >= config.divergence_window {
            diverged = true;
            break;
        }
        state.rho = update_rho(
            state.rho,
            v,
            state.v_prev,
            cast(config.alpha),
            cast(config.tau),
            cast(config.rho_max),
        );
        state.v_prev = Some(v);
    }
    let objective = p.objective(&state.y);
    Ok(AlmOutcome {
        state,
        objective,
        trace,
        converged,
        diverged,
        inner_failures,
    })
}

/// Random start for run `stream`: `y ~ U(-r, r)`, inequality multipliers at
/// zero and equality multipliers `U(-r_d, r_d)` (zero when `r_d = 0`).
pub fn random_start<T: Scalar>(
    config: &AlmConfig,
    n: usize,
    m_eq: usize,
    m_ineq: usize,
    seed: u64,
    stream: u64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut rng = rng_for(seed, stream);
    let mut draw = |r: f64, len: usize| -> Vec<T> {
        (0..len)
            .map(|_| {
                if r > 0.0 {
                    T::cast(rng.gen_range(-r..r))
                } else {
                    T::zero()
                }
            })
            .collect()
    };
    let y = draw(config.init_radius, n);
    let lh = draw(config.dual_init_radius, m_eq);
    (y, vec![T::zero(); m_ineq], lh)
}

/// Best of `num_starts` independent runs: among runs whose final point is
/// feasible to `feasibility_tol`, the lowest objective; if none is, the
/// least-violating run. Ties go to the earliest start. Runs that hit a
/// non-finite iterate are discarded.
pub fn alm_multistart<T: Scalar, P: ConstrainedProblem<T> + Sync + ?Sized>(
    p: &P,
    config: &AlmConfig,
    num_starts: usize,
    seed: u64,
) -> Result<AlmOutcome<T>> {
    if num_starts == 0 {
        return Err(Error::Config("num_starts must be at least 1".into()));
    }
    config.validate()?;
    let runs: Vec<Result<(AlmOutcome<T>, T)>> = (0..num_starts)
        .into_par_iter()
        .map(|s| {
            let (y0, lg0, lh0) = random_start(config, p.num_vars(), p.num_eq(), p.num_ineq(), seed, s as u64);
            let out = alm_solve(p, config, &y0, &lg0, &lh0)?;
            let viol = max_violation(p, out.y());
            Ok((out, viol))
        })
        .collect();
    let tol = T::cast(config.feasibility_tol);
    let mut best: Option<(AlmOutcome<T>, T)> = None;
    let mut last_err = None;
    for run in runs {
        let (out, viol) = match run {
            Ok(r) => r,
            Err(e @ Error::NonFiniteIterate { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some((b, bv)) => {
                let (feas, bfeas) = (viol <= tol, *bv <= tol);
                match (feas, bfeas) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => out.objective < b.objective,
                    (false, false) => viol < *bv,
                }
            }
        };
        if better {
            best = Some((out, viol));
        }
    }
    match best {
        Some((out, _)) => Ok(out),
        None => Err(last_err.unwrap_or_else(|| Error::Contract("no ALM run completed".into()))),
    }
}

/// Solves many problems in parallel. Problem `i` uses seed
/// `derive_seed(seed, i)`, so results do not depend on scheduling.
pub fn alm_solve_all<T, P, F>(
    count: usize,
    make: F,
    config: &AlmConfig,
    num_starts: usize,
    seed: u64,
) -> Result<Vec<AlmOutcome<T>>>
where
    T: Scalar,
    P: ConstrainedProblem<T> + Sync,
    F: Fn(usize) -> Result<P> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let p = make(i)?;
            alm_multistart(&p, config, num_starts, derive_seed(seed, i as u64))
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(w: W, rows: &[AlmTraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
