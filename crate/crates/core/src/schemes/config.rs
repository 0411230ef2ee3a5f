use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemKind;

/// Training scheme tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Pdl,
    NaiveMae,
    NaiveMse,
    MaePenalty,
    MsePenalty,
    Ld,
    PenaltySsl,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Pdl,
        Scheme::NaiveMae,
        Scheme::NaiveMse,
        Scheme::MaePenalty,
        Scheme::MsePenalty,
        Scheme::Ld,
        Scheme::PenaltySsl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Pdl => "pdl",
            Scheme::NaiveMae => "naive-mae",
            Scheme::NaiveMse => "naive-mse",
            Scheme::MaePenalty => "mae-penalty",
            Scheme::MsePenalty => "mse-penalty",
            Scheme::Ld => "ld",
            Scheme::PenaltySsl => "penalty-ssl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_supervised(self) -> bool {
        !matches!(self, Scheme::Pdl | Scheme::PenaltySsl)
    }

    pub fn supervised_norm(self) -> Option<Norm> {
        match self {
            Scheme::NaiveMae | Scheme::MaePenalty | Scheme::Ld => Some(Norm::L1),
            Scheme::NaiveMse | Scheme::MsePenalty => Some(Norm::L2Squared),
            _ => None,
        }
    }

    pub fn penalized(self) -> bool {
        matches!(
            self,
            Scheme::MaePenalty | Scheme::MsePenalty | Scheme::Ld | Scheme::PenaltySsl
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    L1,
    L2Squared,
}

/// What one unit of the training budget means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// Passes over the training set; validation after each epoch.
    Epochs,
    /// Mini-batches of freshly sampled parameters; validation every
    /// `valid_every` iterations.
    Iterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdlConfig {
    pub rho: f64,
    pub alpha: f64,
    pub tau: f64,
    pub rho_max: f64,
    pub outer_iters: usize,
    /// Inner epochs or iterations per primal and per dual subproblem.
    pub inner_iters: usize,
    pub budget: Budget,
    pub valid_every: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub dual_norm: Norm,
    pub hidden: Vec<usize>,
}

impl PdlConfig {
    pub fn qp_default() -> Self {
        Self {
            rho: 0.5,
            alpha: 10.0,
            tau: 0.8,
            rho_max: 5000.0,
            outer_iters: 10,
            inner_iters: 500,
            budget: Budget::Epochs,
            valid_every: 1,
            batch_size: 200,
            lr: 1e-4,
            lr_decay: 0.99,
            dual_norm: Norm::L1,
            hidden: vec![500, 500],
        }
    }

    pub fn qcqp_default() -> Self {
        Self {
            rho: 1.0,
            alpha: 1.5,
            tau: 0.8,
            rho_max: 10000.0,
            inner_iters: 5000,
            budget: Budget::Iterations,
            valid_every: 500,
            ..Self::qp_default()
        }
    }

    pub fn default_for(kind: ProblemKind) -> Self {
        if kind.is_qp() {
            Self::qp_default()
        } else {
            Self::qcqp_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pdl: {m}")));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha must exceed 1");
        }
        if !(self.rho > 0.0 && self.rho <= self.rho_max) {
            return bad("need 0 < rho <= rho_max");
        }
        if self.outer_iters == 0 || self.inner_iters == 0 || self.batch_size == 0 || self.valid_every == 0 {
            return bad("iteration counts and batch size must be positive");
        }
        if !(self.lr > 0.0 && self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("need lr > 0 and 0 < lr_decay <= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}

/// Initial penalty weights and LD multiplier-update settings. Weights are
/// shared scalars here and expanded per constraint during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub rho_g: f64,
    pub rho_h: f64,
    #[serde(default)]
    pub ld_step: f64,
    #[serde(default = "default_period")]
    pub ld_period: usize,
}

fn default_period() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub scheme: Scheme,
    pub iters: usize,
    pub budget: Budget,
    pub valid_every: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub penalty: PenaltyConfig,
    pub hidden: Vec<usize>,
}

impl BaselineConfig {
    /// Tuned settings per scheme and family. The epoch budget equals the
    /// PDL default `outer_iters * 2 * inner_iters`.
    pub fn default_for(scheme: Scheme, kind: ProblemKind) -> Result<Self> {
        if scheme == Scheme::Pdl {
            return Err(Error::Config("PDL is configured with PdlConfig".into()));
        }
        let qp = kind.is_qp();
        let (rho_g, rho_h, ld_step) = match (qp, scheme) {
            (true, _) => (5.0, 5.0, 1e-3),
            (false, Scheme::MsePenalty) => (1.0, 1.0, 0.0),
            (false, Scheme::PenaltySsl) => (100.0, 100.0, 0.0),
            (false, _) => (0.1, 0.1, 1.0),
        };
        let (iters, budget, valid_every) = match (qp, scheme) {
            (true, _) => (10_000, Budget::Epochs, 1),
            (false, Scheme::PenaltySsl) => (100_000, Budget::Iterations, 500),
            (false, _) => (2000, Budget::Epochs, 1),
        };
        let (rho_g, rho_h) = if scheme.penalized() { (rho_g, rho_h) } else { (0.0, 0.0) };
        Ok(Self {
            scheme,
            iters,
            budget,
            valid_every,
            batch_size: 200,
            lr: 1e-4,
            penalty: PenaltyConfig {
                rho_g,
                rho_h,
                ld_step: if scheme == Scheme::Ld { ld_step } else { 0.0 },
                ld_period: 50,
            },
            hidden: vec![500, 500],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.scheme.name())));
        if self.scheme == Scheme::Pdl {
            return bad("PDL is configured with PdlConfig");
        }
        if self.iters == 0 || self.batch_size == 0 || self.valid_every == 0 || self.penalty.ld_period == 0 {
            return bad("iteration counts, batch size and LD period must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.penalty.rho_g >= 0.0 && self.penalty.rho_h >= 0.0 && self.penalty.ld_step >= 0.0) {
            return bad("penalty weights and LD step must be nonnegative");
        }
        Ok(())
    }
}
