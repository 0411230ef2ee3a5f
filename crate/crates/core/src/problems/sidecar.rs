//! Ground-truth sidecar: a CSV with header `index,objective,y0,y1,...`
//! mapping instance indices to reference solutions.

use std::collections::BTreeMap;
use std::path::Path;

use super::dataset::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub objective: f64,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    entries: BTreeMap<usize, Solution>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize, solution: Solution) {
        self.entries.insert(index, solution);
    }

    pub fn get(&self, index: usize) -> Option<&Solution> {
        self.entries.get(&index)
    }

    /// Solution for `index` or a data error naming the missing instance.
    pub fn require(&self, index: usize) -> Result<&Solution> {
        self.get(index).ok_or_else(|| {
            Error::Data(format!(
                "no ground truth for instance {index}; run `generate` with a reference solver"
            ))
        })
    }

    /// Reference decisions `[N, n]` aligned with the rows of `data`.
    pub fn targets_for<T: Scalar>(&self, data: &Dataset<T>) -> Result<Tensor<T>> {
        let n = data.family().num_vars();
        let mut out = Vec::with_capacity(data.len() * n);
        for &i in data.indices() {
            let s = self.require(i)?;
            if s.y.len() != n {
                return Err(Error::Data(format!(
                    "ground truth for instance {i} has {} entries, expected {n}",
                    s.y.len()
                )));
            }
            out.extend(s.y.iter().map(|&v| T::cast(v)));
        }
        Tensor::matrix(data.len(), n, out)
    }

    /// Reference objectives aligned with the rows of `data`.
    pub fn objectives_for<T: Scalar>(&self, data: &Dataset<T>) -> Result<Vec<f64>> {
        data.indices().iter().map(|&i| Ok(self.require(i)?.objective)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Solution)> {
        self.entries.iter().map(|(&i, s)| (i, s))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.entries.values().next().map_or(0, |s| s.y.len());
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        let mut header = vec!["index".to_string(), "objective".to_string()];
        header.extend((0..n).map(|j| format!("y{j}")));
        w.write_record(&header).map_err(csv_io)?;
        for (i, s) in &self.entries {
            if s.y.len() != n {
                return Err(Error::dim("ground_truth_save", n, s.y.len()));
            }
            let mut rec = vec![i.to_string(), s.objective.to_string()];
            rec.extend(s.y.iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
        let parse = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {line}"),
            message,
        };
        let header = r.headers().map_err(csv_io)?.clone();
        if header.get(0) != Some("index") || header.get(1) != Some("objective") {
            return Err(parse(1, "header must start with `index,objective`".into()));
        }
        let mut out = Self::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let index: usize = rec[0].parse().map_err(|e| parse(line, format!("index: {e}")))?;
            let mut vals = Vec::with_capacity(rec.len() - 1);
            for field in rec.iter().skip(1) {
                vals.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| parse(line, format!("`{field}`: {e}")))?,
                );
            }
            let objective = vals.remove(0);
            out.insert(index, Solution { objective, y: vals });
        }
        Ok(out)
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}
