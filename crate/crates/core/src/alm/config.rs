use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the augmented Lagrangian method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlmConfig {
    pub rho: f64,
    pub alpha: f64,
    pub tau: f64,
    pub rho_max: f64,
    pub max_outer: usize,
    /// Sup-norm gradient tolerance of the inner solve.
    pub inner_tol: f64,
    /// Inner iteration cap is `inner_cap_per_var * n`.
    pub inner_cap_per_var: usize,
    /// Stop once the violation drops below this.
    pub epsilon: f64,
    /// Initial points are drawn from `U(-init_radius, init_radius)`.
    pub init_radius: f64,
    /// Equality multipliers start from `U(-r, r)`; zero when `r = 0`.
    pub dual_init_radius: f64,
    /// Runs whose max violation is within this are treated as feasible when
    /// picking the best of several starts.
    pub feasibility_tol: f64,
    /// Consecutive violation increases at `rho_max` that flag divergence.
    pub divergence_window: usize,
}

impl AlmConfig {
    pub fn qp_default() -> Self {
        Self {
            rho: 1.0,
            alpha: 10.0,
            tau: 0.5,
            rho_max: 1e6,
            max_outer: 20,
            inner_tol: 1e-4,
            inner_cap_per_var: 1000,
            epsilon: 1e-4,
            init_radius: 1.0,
            dual_init_radius: 0.0,
            feasibility_tol: 1e-3,
            divergence_window: 5,
        }
    }

    pub fn qcqp_default() -> Self {
        Self {
            rho: 0.1,
            alpha: 1.2,
            tau: 0.5,
            max_outer: 50,
            init_radius: 2.0,
            dual_init_radius: 2.0,
            ..Self::qp_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("alm: {m}")));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha must exceed 1");
        }
        if !(self.rho > 0.0 && self.rho <= self.rho_max) {
            return bad("need 0 < rho <= rho_max");
        }
        if self.max_outer == 0 || self.inner_cap_per_var == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.inner_tol > 0.0 && self.epsilon >= 0.0 && self.init_radius >= 0.0 && self.dual_init_radius >= 0.0) {
            return bad("tolerances and radii must be nonnegative (inner_tol positive)");
        }
        Ok(())
    }
}
