use std::fs;
use std::path::{Path, PathBuf};

use pdl_core::alm::AlmConfig;
use pdl_core::problems::{Dims, FamilySpec, ProblemKind, SplitRatio};
use pdl_core::schemes::{BaselineConfig, PdlConfig, Scheme, SchemeConfig};
use pdl_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub ratio: SplitRatio,
    /// Solve every instance during `generate` and write `reference.csv`.
    #[serde(default = "yes")]
    pub reference: bool,
}

fn yes() -> bool {
    true
}

/// Solver used for reference solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSolver {
    /// ALM for QPs; brute force for small QCQPs, multi-start ALM otherwise.
    Auto,
    Alm,
    Bruteforce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlmSection {
    pub num_starts: usize,
    pub seed: u64,
    pub solver: AlmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    /// Training seeds; several seeds give several models (best-of-N eval).
    pub seeds: Vec<u64>,
    pub reference: ReferenceSolver,
    pub family: FamilySpec,
    pub data: DataConfig,
    pub alm: AlmSection,
    pub scheme: SchemeConfig,
}

pub const PRESETS: [&str; 2] = ["qp-default", "qcqp-default"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (kind, dims, seeds, starts) = match name {
            "qp-default" => (ProblemKind::ConvexQp, Dims::qp(50, 25, 25), vec![0], 1),
            "qcqp-default" => (ProblemKind::Qcqp, Dims::qcqp(12, 18), (0..10).collect(), 50),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}`; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let solver = if kind.is_qp() {
            AlmConfig::qp_default()
        } else {
            AlmConfig::qcqp_default()
        };
        Ok(Self {
            out: PathBuf::from("runs").join(name),
            seeds,
            reference: ReferenceSolver::Auto,
            family: FamilySpec { kind, dims, seed: 1 },
            data: DataConfig {
                count: 1200,
                seed: 2,
                ratio: SplitRatio::default(),
                reference: true,
            },
            alm: AlmSection {
                num_starts: starts,
                seed: 3,
                solver,
            },
            scheme: SchemeConfig::Pdl(PdlConfig::default_for(kind)),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let at = e.span().map_or(String::new(), |s| format!(" at byte {}", s.start));
            Error::Config(format!("{}{at}: {}", path.display(), e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        if self.data.count == 0 {
            return Err(Error::Config("`data.count` must be positive".into()));
        }
        self.data.ratio.sizes(self.data.count)?;
        if self.alm.num_starts == 0 {
            return Err(Error::Config("`alm.num_starts` must be positive".into()));
        }
        self.alm.solver.validate()?;
        match &self.scheme {
            SchemeConfig::Pdl(c) => c.validate(),
            SchemeConfig::Baseline(c) => c.validate(),
        }
    }

    pub fn scheme_tag(&self) -> Scheme {
        match &self.scheme {
            SchemeConfig::Pdl(_) => Scheme::Pdl,
            SchemeConfig::Baseline(c) => c.scheme,
        }
    }

    /// Replaces the scheme section with the tuned defaults for `scheme`.
    pub fn with_scheme(mut self, scheme: Scheme) -> Result<Self> {
        self.scheme = match scheme {
            Scheme::Pdl => SchemeConfig::Pdl(PdlConfig::default_for(self.family.kind)),
            s => SchemeConfig::Baseline(BaselineConfig::default_for(s, self.family.kind)?),
        };
        Ok(self)
    }

    pub fn dataset_path(&self, split: &str) -> PathBuf {
        self.out.join("data").join(format!("{split}.pdl"))
    }

    pub fn reference_path(&self) -> PathBuf {
        self.out.join("data").join("reference.csv")
    }

    pub fn model_dir(&self, scheme: Scheme, seed: u64) -> PathBuf {
        self.out.join("models").join(scheme.name()).join(format!("seed-{seed}"))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    pub fn alm_dir(&self) -> PathBuf {
        self.out.join("alm")
    }
}
