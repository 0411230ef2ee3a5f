use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{gap_or_absolute, median, violations};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::problems::{Dataset, GroundTruth, ProblemFamily};
use crate::scalar::Scalar;
use crate::schemes::{Scheme, TrainedModel};

/// Table header, matching the published layout.
pub const TABLE_HEADER: [&str; 8] = [
    "Method",
    "Type",
    "Obj.",
    "Opt. Gap(%)",
    "Max eq.",
    "Max ineq.",
    "Mean eq.",
    "Mean ineq.",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub objective: f64,
    pub reference: f64,
    pub gap: f64,
    /// `gap` is an absolute difference because the reference objective is zero.
    pub gap_absolute: bool,
    pub max_eq: f64,
    pub mean_eq: f64,
    pub max_ineq: f64,
    pub mean_ineq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: usize,
    pub objective: f64,
    pub gap_mean: f64,
    pub gap_min: f64,
    pub gap_median: f64,
    pub gap_max: f64,
    pub max_eq: f64,
    pub max_ineq: f64,
    pub mean_eq: f64,
    pub mean_ineq: f64,
    pub absolute_gaps: usize,
}

impl Aggregates {
    /// Means over instances; "max" columns average the per-instance maxima.
    pub fn from_records(records: &[InstanceRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("cannot aggregate an empty evaluation".into()));
        }
        let n = records.len() as f64;
        let mean = |f: fn(&InstanceRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
        Ok(Self {
            count: records.len(),
            objective: mean(|r| r.objective),
            gap_mean: mean(|r| r.gap),
            gap_min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
            gap_median: median(&gaps),
            gap_max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_eq: mean(|r| r.max_eq),
            max_ineq: mean(|r| r.max_ineq),
            mean_eq: mean(|r| r.mean_eq),
            mean_ineq: mean(|r| r.mean_ineq),
            absolute_gaps: records.iter().filter(|r| r.gap_absolute).count(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub kind: String,
    pub inference_seconds: f64,
    pub aggregates: Aggregates,
    #[serde(skip)]
    pub records: Vec<InstanceRecord>,
}

/// Table "Type" column for a method.
pub fn method_type(method: &str) -> &'static str {
    match Scheme::parse(method) {
        Some(s) if s.is_supervised() => "SL",
        Some(_) => "SSL",
        None => "Solver",
    }
}

impl EvalReport {
    /// Builds a report from decisions `[N, n]` aligned with `data` and one
    /// reference objective per row.
    pub fn from_decisions<T: Scalar>(
        method: &str,
        data: &Dataset<T>,
        ys: &Tensor<T>,
        references: &[f64],
        inference_seconds: f64,
    ) -> Result<Self> {
        let fam = data.family();
        if ys.shape() != [data.len(), fam.num_vars()] {
            return Err(Error::dim(
                "evaluate",
                format!("[{}, {}]", data.len(), fam.num_vars()),
                format!("{:?}", ys.shape()),
            ));
        }
        if references.len() != data.len() {
            return Err(Error::dim("evaluate", data.len(), references.len()));
        }
        let records = (0..data.len())
            .into_par_iter()
            .map(|i| instance_record(fam, data.indices()[i], data.x(i), ys.row(i), references[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            method: method.to_string(),
            kind: fam.kind().code().to_string(),
            inference_seconds,
            aggregates: Aggregates::from_records(&records)?,
            records,
        })
    }

    pub fn summary_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_instances_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn instance_record<T: Scalar>(
    fam: &ProblemFamily<T>,
    index: usize,
    x: &[T],
    y: &[T],
    reference: f64,
) -> Result<InstanceRecord> {
    let objective = fam.objective(x, y)?.to_f64_lossless();
    let v = violations(&fam.eq_constraints(x, y)?, &fam.ineq_constraints(x, y)?);
    let (gap, gap_absolute) = gap_or_absolute(reference, objective);
    Ok(InstanceRecord {
        index,
        objective,
        reference,
        gap,
        gap_absolute,
        max_eq: v.max_eq,
        mean_eq: v.mean_eq,
        max_ineq: v.max_ineq,
        mean_ineq: v.mean_ineq,
    })
}

/// Evaluates one trained model against reference solutions.
pub fn evaluate<T: Scalar>(model: &TrainedModel<T>, data: &Dataset<T>, reference: &GroundTruth) -> Result<EvalReport> {
    let refs = reference.objectives_for(data)?;
    let t0 = Instant::now();
    let ys = model.decisions(data.xs())?;
    let secs = t0.elapsed().as_secs_f64();
    EvalReport::from_decisions(model.scheme.name(), data, &ys, &refs, secs)
}

/// Per-instance decision with the lowest objective among candidates; ties
/// keep the earliest candidate.
pub fn best_of<T: Scalar>(data: &Dataset<T>, candidates: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::Config("best-of selection needs at least one model".into()))?;
    let fam = data.family();
    let mut best = first.clone();
    let mut best_f = fam.objective_values_batch(data.xs(), first)?;
    for c in &candidates[1..] {
        let f = fam.objective_values_batch(data.xs(), c)?;
        let n = fam.num_vars();
        for i in 0..data.len() {
            if f.data()[i] < best_f.data()[i] {
                best_f.data_mut()[i] = f.data()[i];
                best.data_mut()[i * n..(i + 1) * n].copy_from_slice(c.row(i));
            }
        }
    }
    Ok(best)
}

/// Best-of-N evaluation over several trained models.
pub fn evaluate_best_of<T: Scalar>(
    models: &[TrainedModel<T>],
    data: &Dataset<T>,
    reference: &GroundTruth,
) -> Result<EvalReport> {
    let first = models
        .first()
        .ok_or_else(|| Error::Config("best-of evaluation needs at least one model".into()))?;
    let refs = reference.objectives_for(data)?;
    let t0 = Instant::now();
    let ys = models
        .iter()
        .map(|m| m.decisions(data.xs()))
        .collect::<Result<Vec<_>>>()?;
    let secs = t0.elapsed().as_secs_f64();
    let best = best_of(data, &ys)?;
    let method = if models.len() == 1 {
        first.scheme.name().to_string()
    } else {
        format!("{} (best of {})", first.scheme.name(), models.len())
    };
    EvalReport::from_decisions(&method, data, &best, &refs, secs)
}

/// Writes one table row per report under [`TABLE_HEADER`].
pub fn write_table_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Data(e.to_string());
    out.write_record(TABLE_HEADER).map_err(err)?;
    for r in reports {
        let a = &r.aggregates;
        let base = r.method.split(' ').next().unwrap_or("");
        out.write_record([
            r.method.clone(),
            method_type(base).to_string(),
            format!("{:.3}", a.objective),
            format!("{:.3}", a.gap_mean),
            format!("{:.3}", a.max_eq),
            format!("{:.3}", a.max_ineq),
            format!("{:.3}", a.mean_eq),
            format!("{:.3}", a.mean_ineq),
        ])
        .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}
