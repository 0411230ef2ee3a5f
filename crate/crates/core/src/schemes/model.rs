use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BaselineConfig, PdlConfig, Scheme};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, Mlp, OutputHead};
use crate::problems::{ProblemFamily, ProblemKind};
use crate::scalar::Scalar;

/// One row of a training trace. `v_k` and `rho` are empty for baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_k: usize,
    pub inner_step: usize,
    pub scheme: String,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub v_k: Option<f64>,
    pub rho: Option<f64>,
    pub lr: f64,
}

pub fn write_trace_csv<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    if rows.is_empty() {
        out.write_record([
            "outer_k",
            "inner_step",
            "scheme",
            "train_loss",
            "valid_loss",
            "v_k",
            "rho",
            "lr",
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    for r in rows {
        out.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchemeConfig {
    Pdl(PdlConfig),
    Baseline(BaselineConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub scheme: Scheme,
    pub kind: ProblemKind,
    pub primal: Mlp<T>,
    pub dual: Option<Mlp<T>>,
    pub config: SchemeConfig,
    pub trace: Vec<TraceRow>,
    /// Final penalty coefficient (PDL).
    pub rho: Option<f64>,
    /// Final per-constraint penalty weights `(rho_g, rho_h)` (penalty schemes).
    pub weights: Option<(Vec<f64>, Vec<f64>)>,
}

/// Rounds to `{-1, 1}`; zero maps to `+1`.
pub fn round_to_sign<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    scheme: Scheme,
    kind: ProblemKind,
    rho: Option<f64>,
    config: SchemeConfig,
}

impl<T: Scalar> TrainedModel<T> {
    /// Raw network outputs `[B, n]`.
    pub fn predict(&self, xs: &Tensor<T>) -> Result<Tensor<T>> {
        self.primal.predict(xs)
    }

    /// Decisions used for evaluation: QCQP outputs are rounded to signs.
    pub fn decisions(&self, xs: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.predict(xs)?;
        Ok(match self.kind {
            ProblemKind::Qcqp => y.map(round_to_sign),
            _ => y,
        })
    }

    /// Multiplier estimates `(lambda_g, lambda_h)`, with `lambda_g` clamped
    /// at zero. Errors for schemes without a dual network.
    pub fn duals(&self, fam: &ProblemFamily<T>, xs: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let dual = self
            .dual
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("scheme {} has no dual network", self.scheme.name())))?;
        read_duals(dual, fam, xs)
    }

    /// Writes `primal.ckpt`, optionally `dual.ckpt`, `model.toml` and
    /// `trace.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_checkpoint(&dir.join("primal.ckpt"), &self.primal, 0)?;
        if let Some(d) = &self.dual {
            save_checkpoint(&dir.join("dual.ckpt"), d, 0)?;
        }
        let manifest = ModelManifest {
            scheme: self.scheme,
            kind: self.kind,
            rho: self.rho,
            config: self.config.clone(),
        };
        fs::write(
            dir.join("model.toml"),
            toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?,
        )?;
        write_trace_csv(fs::File::create(dir.join("trace.csv"))?, &self.trace)
    }

    /// Loads a model written by [`TrainedModel::save`]; the trace is not read back.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("model.toml");
        let text = fs::read_to_string(&path)?;
        let m: ModelManifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            location: e.span().map_or("file".into(), |s| format!("byte {}", s.start)),
            message: e.message().to_string(),
        })?;
        let (primal, _) = load_checkpoint(&dir.join("primal.ckpt"))?;
        let dual = if m.scheme == Scheme::Pdl {
            Some(load_checkpoint(&dir.join("dual.ckpt"))?.0)
        } else {
            None
        };
        Ok(Self {
            scheme: m.scheme,
            kind: m.kind,
            primal,
            dual,
            config: m.config,
            trace: Vec::new(),
            rho: m.rho,
            weights: None,
        })
    }
}

pub(crate) fn read_duals<T: Scalar>(
    dual: &Mlp<T>,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let out = dual.predict(xs)?;
    let m_g = fam.num_ineq();
    let lg = out.columns(0, m_g)?.map(|v| v.max(T::zero()));
    let lh = out.columns(m_g, fam.num_eq())?;
    Ok((lg, lh))
}

pub(crate) fn primal_head<T: Scalar>(kind: ProblemKind) -> OutputHead<T> {
    match kind {
        ProblemKind::Qcqp => OutputHead::ScaledSigmoid,
        _ => OutputHead::Identity,
    }
}
