//! Instance datasets and their binary file format.
//!
//! Layout (all integers and floats little-endian):
//! magic `PDLDATA\0`, `u32` version, `u8` kind, `u8` split, four `u64` dims
//! (`n, n_eq, n_ineq, n_aff`), `u64` family seed, `u64` sample seed, `u64`
//! instance count, `u64` array count, then each family array as `u64` length
//! followed by `f64` values, then `count` `u64` instance indices, then the
//! `count x p` parameter matrix as `f64`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::family::{Dims, ProblemFamily, ProblemKind};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::rng_for;

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PDLDATA\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    All,
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn code(self) -> u8 {
        match self {
            Split::All => 0,
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [Split::All, Split::Train, Split::Valid, Split::Test]
            .get(c as usize)
            .copied()
    }
}

/// Split ratio `train : valid : test`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub valid: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 10,
            valid: 1,
            test: 1,
        }
    }
}

impl SplitRatio {
    /// Sizes `(train, valid, test)` for `n` instances: valid and test get
    /// `floor(n * share)` and train takes the remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        if self.train == 0 || self.valid == 0 || self.test == 0 {
            return Err(Error::Config(format!(
                "split ratio components must be positive: {self:?}"
            )));
        }
        let total = (self.train + self.valid + self.test) as usize;
        let valid = n * self.valid as usize / total;
        let test = n * self.test as usize / total;
        Ok((n - valid - test, valid, test))
    }
}

/// A set of instances of one family. `indices` are positions in the
/// originally sampled corpus, so splits stay disjoint and traceable.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    family: Arc<ProblemFamily<T>>,
    split: Split,
    seed: u64,
    indices: Vec<usize>,
    xs: Tensor<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        family: Arc<ProblemFamily<T>>,
        split: Split,
        seed: u64,
        indices: Vec<usize>,
        xs: Tensor<T>,
    ) -> Result<Self> {
        let p = family.num_params();
        if xs.rank() != 2 || xs.cols() != p || xs.rows() != indices.len() {
            return Err(Error::dim(
                "dataset",
                format!("[{}, {p}]", indices.len()),
                format!("{:?}", xs.shape()),
            ));
        }
        Ok(Self {
            family,
            split,
            seed,
            indices,
            xs,
        })
    }

    /// Draws `count` parameter vectors `x ~ U(-1, 1)^p`; instance `i` uses
    /// its own derived stream, so any prefix is independent of `count`.
    pub fn sample(family: Arc<ProblemFamily<T>>, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("instance count must be positive".into()));
        }
        let p = family.num_params();
        let mut data = Vec::with_capacity(count * p);
        for i in 0..count {
            let mut rng = rng_for(seed, i as u64);
            data.extend((0..p).map(|_| T::cast(rng.gen_range(-1.0..1.0))));
        }
        let xs = Tensor::matrix(count, p, data)?;
        Self::new(family, Split::All, seed, (0..count).collect(), xs)
    }

    pub fn family(&self) -> &ProblemFamily<T> {
        &self.family
    }

    pub fn family_arc(&self) -> &Arc<ProblemFamily<T>> {
        &self.family
    }

    pub fn split_tag(&self) -> Split {
        self.split
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn xs(&self) -> &Tensor<T> {
        &self.xs
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn x(&self, i: usize) -> &[T] {
        self.xs.row(i)
    }

    /// Rows `rows` of this dataset as a new dataset with the same tag.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            family: self.family.clone(),
            split: self.split,
            seed: self.seed,
            indices: rows.iter().map(|&r| self.indices[r]).collect(),
            xs: self.xs.select_rows(rows),
        }
    }

    fn block(&self, split: Split, start: usize, len: usize) -> Self {
        let rows: Vec<usize> = (start..start + len).collect();
        Self {
            split,
            ..self.subset(&rows)
        }
    }

    /// Contiguous `(train, valid, test)` blocks in that order.
    pub fn split(&self, ratio: SplitRatio) -> Result<(Self, Self, Self)> {
        let (tr, va, te) = ratio.sizes(self.len())?;
        Ok((
            self.block(Split::Train, 0, tr),
            self.block(Split::Valid, tr, va),
            self.block(Split::Test, tr + va, te),
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        b.push(self.family.kind().code());
        b.push(self.split.code());
        let d = self.family.dims();
        for v in [d.n, d.n_eq, d.n_ineq, d.n_aff] {
            b.extend_from_slice(&(v as u64).to_le_bytes());
        }
        b.extend_from_slice(&self.family.seed().to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&(self.len() as u64).to_le_bytes());
        let arrays = self.family.stored_arrays();
        b.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
        for a in &arrays {
            b.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for v in a {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &i in &self.indices {
            b.extend_from_slice(&(i as u64).to_le_bytes());
        }
        for v in self.xs.data() {
            b.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
        }
        fs::write(path, b)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };
        if r.take(8)? != MAGIC {
            return Err(r.error(0, "bad magic; not a dataset file"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: DATASET_VERSION,
                found: version,
            });
        }
        let at = r.pos;
        let kind = ProblemKind::from_code(r.take(1)?[0]).ok_or_else(|| r.error(at, "unknown problem kind"))?;
        let split = Split::from_code(r.take(1)?[0]).ok_or_else(|| r.error(at + 1, "unknown split tag"))?;
        let dims = Dims {
            n: r.usize()?,
            n_eq: r.usize()?,
            n_ineq: r.usize()?,
            n_aff: r.usize()?,
        };
        let family_seed = r.u64()?;
        let seed = r.u64()?;
        let count = r.usize()?;
        let narrays = r.usize()?;
        let expected_arrays = if kind.is_qp() { 5 } else { 1 };
        if narrays != expected_arrays {
            return Err(r.error(
                r.pos - 8,
                &format!("expected {expected_arrays} family arrays, found {narrays}"),
            ));
        }
        let mut arrays = Vec::with_capacity(narrays);
        for _ in 0..narrays {
            let len = r.usize()?;
            arrays.push(r.f64s(len)?);
        }
        let family = ProblemFamily::from_stored(kind, dims, family_seed, &arrays)?;
        let p = family.num_params();
        let mut indices = Vec::with_capacity(count);
        for _ in 0..count {
            indices.push(r.usize()?);
        }
        let xs = r.f64s(count * p)?;
        if r.pos != bytes.len() {
            return Err(r.error(r.pos, "trailing bytes after parameter matrix"));
        }
        let xs = Tensor::matrix(count, p, xs.into_iter().map(T::cast).collect())?;
        Self::new(Arc::new(family), split, seed, indices, xs)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn error(&self, offset: usize, message: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            location: format!("byte {offset}"),
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(
                self.bytes.len(),
                &format!("file truncated: needed {n} bytes at offset {}", self.pos),
            )),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        usize::try_from(self.u64()?).map_err(|_| self.error(at, "value exceeds platform usize"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| self.error(self.pos, "array length overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
