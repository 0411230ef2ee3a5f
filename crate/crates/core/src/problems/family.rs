use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::rng_for;

use super::traits::{ConstrainedProblem, GraphProblem};

/// Benchmark problem families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `min 1/2 y'Qy + r'y  s.t.  Ay = x, Gy <= h`
    ConvexQp,
    /// `min 1/2 y'Qy + r' sin(y)  s.t.  Ay = x, Gy <= h`
    NonconvexQp,
    /// `min |Ay - x|^2  s.t.  y_i^2 = 1`
    Qcqp,
}

impl ProblemKind {
    pub fn code(self) -> u8 {
        match self {
            ProblemKind::ConvexQp => 0,
            ProblemKind::NonconvexQp => 1,
            ProblemKind::Qcqp => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ProblemKind::ConvexQp),
            1 => Some(ProblemKind::NonconvexQp),
            2 => Some(ProblemKind::Qcqp),
            _ => None,
        }
    }

    pub fn is_qp(self) -> bool {
        !matches!(self, ProblemKind::Qcqp)
    }
}

/// Problem sizes. QP families use `n`, `n_eq`, `n_ineq`; the QCQP family uses
/// `n` and `n_aff` (its `n` equality constraints are implied).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    #[serde(default)]
    pub n_eq: usize,
    #[serde(default)]
    pub n_ineq: usize,
    #[serde(default)]
    pub n_aff: usize,
}

impl Dims {
    pub fn qp(n: usize, n_eq: usize, n_ineq: usize) -> Self {
        Self {
            n,
            n_eq,
            n_ineq,
            n_aff: 0,
        }
    }

    pub fn qcqp(n: usize, n_aff: usize) -> Self {
        Self {
            n,
            n_eq: 0,
            n_ineq: 0,
            n_aff,
        }
    }
}

/// Structured-text family descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: ProblemKind,
    #[serde(flatten)]
    pub dims: Dims,
    pub seed: u64,
}

impl FamilySpec {
    pub fn generate<T: Scalar>(&self) -> Result<ProblemFamily<T>> {
        ProblemFamily::generate(self.kind, self.dims, self.seed)
    }
}

/// Fixed data of a QP family; `q` holds the diagonal of `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpData<T> {
    pub q: Vec<T>,
    pub r: Vec<T>,
    pub a: Tensor<T>,
    pub g: Tensor<T>,
    pub h: Vec<T>,
    pub a_pinv: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QcqpData<T> {
    pub a: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyData<T> {
    Qp(QpData<T>),
    Qcqp(QcqpData<T>),
}

/// A parametric problem family: fixed data plus the rule mapping a parameter
/// vector `x` to an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFamily<T> {
    kind: ProblemKind,
    dims: Dims,
    seed: u64,
    data: FamilyData<T>,
    // Transposes cached for batched products `Y A'` and `Y G'`.
    a_t: Tensor<T>,
    g_t: Tensor<T>,
}

const RANK_RETRIES: usize = 100;
const PINV_CUTOFF: f64 = 1e-10;

fn to_dmatrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Moore-Penrose pseudo-inverse by SVD, discarding singular values below
/// `1e-10 * sigma_max`. Returns the inverse (row-major) and the numerical rank.
pub fn pseudo_inverse(rows: usize, cols: usize, data: &[f64]) -> (Vec<f64>, usize) {
    let m = to_dmatrix(rows, cols, data);
    let svd = m.svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * sigma_max;
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let mut pinv = DMatrix::<f64>::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            pinv += (vk * uk.transpose()) / s;
        }
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..cols {
        for j in 0..rows {
            out.push(pinv[(i, j)]);
        }
    }
    (out, rank)
}

fn cast_vec<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::cast(x)).collect()
}

impl<T: Scalar> ProblemFamily<T> {
    /// Draws the fixed data of a family.
    ///
    /// QP: `Q` diagonal, `r`, `A` and `G` entries i.i.d. `U(0, 1)`, and
    /// `h_i = sum_j |G A+|_ij`, which keeps `y = A+ x` feasible for every
    /// `x` in `[-1, 1]^n_eq`. QCQP: `A` entries i.i.d. standard normal,
    /// redrawn until `A` has full column rank.
    pub fn generate(kind: ProblemKind, dims: Dims, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, 0);
        match kind {
            ProblemKind::ConvexQp | ProblemKind::NonconvexQp => {
                let Dims { n, n_eq, n_ineq, .. } = dims;
                if n == 0 || n_eq == 0 {
                    return Err(Error::Config(format!("QP dimensions must be positive: {dims:?}")));
                }
                if n_eq > n {
                    return Err(Error::Config(format!(
                        "QP requires n_eq <= n, got n_eq = {n_eq}, n = {n}"
                    )));
                }
                let mut unif = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(0.0..1.0)).collect() };
                let q = unif(n);
                let a = unif(n_eq * n);
                let g = unif(n_ineq * n);
                let r = unif(n);
                Self::qp_from_data(kind, seed, &q, &r, &a, &g, dims)
            }
            ProblemKind::Qcqp => {
                let Dims { n, n_aff, .. } = dims;
                if n == 0 || n_aff == 0 {
                    return Err(Error::Config(format!("QCQP dimensions must be positive: {dims:?}")));
                }
                if n_aff < n {
                    return Err(Error::Generation(format!(
                        "A ({n_aff} x {n}) cannot have full column rank with n_aff < n"
                    )));
                }
                for _ in 0..RANK_RETRIES {
                    let a: Vec<f64> = (0..n_aff * n).map(|_| rng.sample(StandardNormal)).collect();
                    let (_, rank) = pseudo_inverse(n_aff, n, &a);
                    if rank == n {
                        return Self::qcqp_from_data(seed, n_aff, n, &a);
                    }
                }
                Err(Error::Generation(format!(
                    "no full-column-rank A after {RANK_RETRIES} draws"
                )))
            }
        }
    }

    /// Builds a QP family from explicit data; `h` follows the pseudo-inverse rule.
    pub fn qp_from_data(
        kind: ProblemKind,
        seed: u64,
        q: &[f64],
        r: &[f64],
        a: &[f64],
        g: &[f64],
        dims: Dims,
    ) -> Result<Self> {
        let Dims { n, n_eq, n_ineq, .. } = dims;
        if !kind.is_qp() {
            return Err(Error::Config("qp_from_data needs a QP kind".into()));
        }
        if q.len() != n || r.len() != n || a.len() != n_eq * n || g.len() != n_ineq * n {
            return Err(Error::dim(
                "qp_from_data",
                format!("{dims:?}"),
                "mismatched data lengths",
            ));
        }
        if q.iter().any(|&v| v < 0.0) {
            return Err(Error::Config("Q must be positive semidefinite".into()));
        }
        let (a_pinv, _) = pseudo_inverse(n_eq, n, a);
        // h_i = sum_j |(G A+)_ij|
        let mut h = vec![0.0; n_ineq];
        for (i, hi) in h.iter_mut().enumerate() {
            for j in 0..n_eq {
                let gij: f64 = (0..n).map(|k| g[i * n + k] * a_pinv[k * n_eq + j]).sum();
                *hi += gij.abs();
            }
        }
        let a_t = Tensor::matrix(n_eq, n, cast_vec(a))?.transpose();
        let g_t = Tensor::new(&[n_ineq, n], cast_vec(g))?.transpose();
        Ok(Self {
            kind,
            dims: Dims::qp(n, n_eq, n_ineq),
            seed,
            data: FamilyData::Qp(QpData {
                q: cast_vec(q),
                r: cast_vec(r),
                a: Tensor::matrix(n_eq, n, cast_vec(a))?,
                g: Tensor::new(&[n_ineq, n], cast_vec(g))?,
                h: cast_vec(&h),
                a_pinv: Tensor::matrix(n, n_eq, cast_vec(&a_pinv))?,
            }),
            a_t,
            g_t,
        })
    }

    pub fn qcqp_from_data(seed: u64, n_aff: usize, n: usize, a: &[f64]) -> Result<Self> {
        let a = Tensor::matrix(n_aff, n, cast_vec(a))?;
        Ok(Self {
            kind: ProblemKind::Qcqp,
            dims: Dims::qcqp(n, n_aff),
            seed,
            a_t: a.transpose(),
            g_t: Tensor::zeros(&[n, 0]),
            data: FamilyData::Qcqp(QcqpData { a }),
        })
    }

    /// Rebuilds a family from stored arrays (the dataset file layout).
    pub(crate) fn from_stored(kind: ProblemKind, dims: Dims, seed: u64, arrays: &[Vec<f64>]) -> Result<Self> {
        match kind {
            ProblemKind::Qcqp => Self::qcqp_from_data(seed, dims.n_aff, dims.n, &arrays[0]),
            _ => {
                let mut fam = Self::qp_from_data(kind, seed, &arrays[0], &arrays[1], &arrays[2], &arrays[3], dims)?;
                // Keep the stored h bit-for-bit.
                if let FamilyData::Qp(d) = &mut fam.data {
                    d.h = cast_vec(&arrays[4]);
                }
                Ok(fam)
            }
        }
    }

    /// Arrays written to dataset files: `q, r, A, G, h` or `A`.
    pub(crate) fn stored_arrays(&self) -> Vec<Vec<f64>> {
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossless()).collect::<Vec<f64>>();
        match &self.data {
            FamilyData::Qp(d) => vec![f(&d.q), f(&d.r), f(d.a.data()), f(d.g.data()), f(&d.h)],
            FamilyData::Qcqp(d) => vec![f(d.a.data())],
        }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> FamilySpec {
        FamilySpec {
            kind: self.kind,
            dims: self.dims,
            seed: self.seed,
        }
    }

    pub fn data(&self) -> &FamilyData<T> {
        &self.data
    }

    pub fn num_vars(&self) -> usize {
        self.dims.n
    }

    /// Length of the parameter vector `x`.
    pub fn num_params(&self) -> usize {
        match self.kind {
            ProblemKind::Qcqp => self.dims.n_aff,
            _ => self.dims.n_eq,
        }
    }

    pub fn num_eq(&self) -> usize {
        match self.kind {
            ProblemKind::Qcqp => self.dims.n,
            _ => self.dims.n_eq,
        }
    }

    pub fn num_ineq(&self) -> usize {
        match self.kind {
            ProblemKind::Qcqp => 0,
            _ => self.dims.n_ineq,
        }
    }

    /// Single-instance view for parameter `x`.
    pub fn instance<'a>(&'a self, x: &'a [T]) -> Result<Instance<'a, T>> {
        if x.len() != self.num_params() {
            return Err(Error::dim("instance", self.num_params(), x.len()));
        }
        Ok(Instance { family: self, x })
    }

    /// `y = A+ x`, feasible for QP instances with `x` in `[-1, 1]^n_eq`.
    pub fn feasibility_witness(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.data {
            FamilyData::Qp(d) => Ok(d.a_pinv.matvec(&Tensor::vector(x.to_vec()))?.into_data()),
            FamilyData::Qcqp(_) => Err(Error::Contract("feasibility witness is defined for QP families".into())),
        }
    }

    fn check_y(&self, y: &[T]) -> Result<()> {
        if y.len() != self.dims.n {
            return Err(Error::dim("problem", self.dims.n, y.len()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[T], y: &[T]) -> Result<T> {
        self.check_y(y)?;
        Ok(self.instance(x)?.objective(y))
    }

    /// `h_x(y)`
    pub fn eq_constraints(&self, x: &[T], y: &[T]) -> Result<Vec<T>> {
        self.check_y(y)?;
        let mut out = vec![T::zero(); self.num_eq()];
        self.instance(x)?.eq_residuals(y, &mut out);
        Ok(out)
    }

    /// `g_x(y)`; feasibility means every entry is `<= 0`.
    pub fn ineq_constraints(&self, x: &[T], y: &[T]) -> Result<Vec<T>> {
        self.check_y(y)?;
        let mut out = vec![T::zero(); self.num_ineq()];
        self.instance(x)?.ineq_residuals(y, &mut out);
        Ok(out)
    }

    fn check_batch(&self, g: &Graph<T>, xs: &Tensor<T>, y: Var) -> Result<usize> {
        let b = xs.rows();
        if xs.rank() != 2 || xs.cols() != self.num_params() {
            return Err(Error::dim(
                "batch",
                format!("[B, {}] parameters", self.num_params()),
                format!("{:?}", xs.shape()),
            ));
        }
        if g.shape(y) != [b, self.dims.n] {
            return Err(Error::dim(
                "batch",
                format!("[{b}, {}] decisions", self.dims.n),
                format!("{:?}", g.shape(y)),
            ));
        }
        Ok(b)
    }

    /// Per-instance objectives `[B]` of a `[B, n]` decision node.
    pub fn objective_batch(&self, g: &mut Graph<T>, xs: &Tensor<T>, y: Var) -> Result<Var> {
        self.check_batch(g, xs, y)?;
        match &self.data {
            FamilyData::Qp(d) => {
                let q = g.constant(Tensor::vector(d.q.clone()));
                let r = g.constant(Tensor::vector(d.r.clone()));
                let sq = g.square(y)?;
                let quad = g.matvec(sq, q)?;
                let quad = g.scale(quad, T::cast(0.5))?;
                let lin_in = if self.kind == ProblemKind::NonconvexQp {
                    g.sin(y)?
                } else {
                    y
                };
                let lin = g.matvec(lin_in, r)?;
                g.add(quad, lin)
            }
            FamilyData::Qcqp(_) => {
                let res = self.affine_residual_batch(g, xs, y)?;
                let sq = g.square(res)?;
                let ones = g.constant(Tensor::full(&[self.dims.n_aff], T::one()));
                g.matvec(sq, ones)
            }
        }
    }

    fn affine_residual_batch(&self, g: &mut Graph<T>, xs: &Tensor<T>, y: Var) -> Result<Var> {
        let at = g.constant(self.a_t.clone());
        let ay = g.matmul(y, at)?;
        let x = g.constant(xs.clone());
        g.sub(ay, x)
    }

    /// Equality residuals `[B, n_eq]`.
    pub fn eq_batch(&self, g: &mut Graph<T>, xs: &Tensor<T>, y: Var) -> Result<Var> {
        self.check_batch(g, xs, y)?;
        match &self.data {
            FamilyData::Qp(_) => self.affine_residual_batch(g, xs, y),
            FamilyData::Qcqp(_) => {
                let sq = g.square(y)?;
                g.shift(sq, -T::one())
            }
        }
    }

    /// Inequality residuals `[B, n_ineq]` (an empty `[B, 0]` node for QCQP).
    pub fn ineq_batch(&self, g: &mut Graph<T>, xs: &Tensor<T>, y: Var) -> Result<Var> {
        let b = self.check_batch(g, xs, y)?;
        match &self.data {
            FamilyData::Qp(d) => {
                let gt = g.constant(self.g_t.clone());
                let gy = g.matmul(y, gt)?;
                let neg_h = g.constant(Tensor::vector(d.h.iter().map(|&v| -v).collect()));
                g.add_row(gy, neg_h)
            }
            FamilyData::Qcqp(_) => Ok(g.constant(Tensor::zeros(&[b, 0]))),
        }
    }

    /// Batched equality residuals without a tape.
    pub fn eq_residuals_batch(&self, xs: &Tensor<T>, ys: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let y = g.constant(ys.clone());
        let h = self.eq_batch(&mut g, xs, y)?;
        Ok(g.value(h).clone())
    }

    /// Batched inequality residuals without a tape.
    pub fn ineq_residuals_batch(&self, xs: &Tensor<T>, ys: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let y = g.constant(ys.clone());
        let v = self.ineq_batch(&mut g, xs, y)?;
        Ok(g.value(v).clone())
    }

    /// Batched objectives without a tape.
    pub fn objective_values_batch(&self, xs: &Tensor<T>, ys: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let y = g.constant(ys.clone());
        let f = self.objective_batch(&mut g, xs, y)?;
        Ok(g.value(f).clone())
    }
}

/// One problem instance: a family together with a parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct Instance<'a, T> {
    family: &'a ProblemFamily<T>,
    x: &'a [T],
}

impl<'a, T: Scalar> Instance<'a, T> {
    pub fn family(&self) -> &'a ProblemFamily<T> {
        self.family
    }

    pub fn x(&self) -> &'a [T] {
        self.x
    }

    fn affine_residual(&self, a: &Tensor<T>, y: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::autodiff::dot(a.row(i), y) - self.x[i];
        }
    }
}

fn add_transpose_product<T: Scalar>(m: &Tensor<T>, w: &[T], out: &mut [T]) {
    for (i, &wi) in w.iter().enumerate() {
        if wi == T::zero() {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(m.row(i)) {
            *o += mij * wi;
        }
    }
}

impl<T: Scalar> ConstrainedProblem<T> for Instance<'_, T> {
    fn num_vars(&self) -> usize {
        self.family.num_vars()
    }

    fn num_eq(&self) -> usize {
        self.family.num_eq()
    }

    fn num_ineq(&self) -> usize {
        self.family.num_ineq()
    }

    fn objective(&self, y: &[T]) -> T {
        match &self.family.data {
            FamilyData::Qp(d) => {
                let half = T::cast(0.5);
                let nonconvex = self.family.kind == ProblemKind::NonconvexQp;
                y.iter()
                    .zip(d.q.iter().zip(&d.r))
                    .map(|(&yi, (&qi, &ri))| half * qi * yi * yi + ri * if nonconvex { yi.sin() } else { yi })
                    .sum()
            }
            FamilyData::Qcqp(d) => {
                let mut res = vec![T::zero(); self.x.len()];
                self.affine_residual(&d.a, y, &mut res);
                res.iter().map(|&v| v * v).sum()
            }
        }
    }

    fn objective_grad(&self, y: &[T], out: &mut [T]) {
        match &self.family.data {
            FamilyData::Qp(d) => {
                let nonconvex = self.family.kind == ProblemKind::NonconvexQp;
                for (i, o) in out.iter_mut().enumerate() {
                    let lin = if nonconvex { d.r[i] * y[i].cos() } else { d.r[i] };
                    *o = d.q[i] * y[i] + lin;
                }
            }
            FamilyData::Qcqp(d) => {
                let mut res = vec![T::zero(); self.x.len()];
                self.affine_residual(&d.a, y, &mut res);
                res.iter_mut().for_each(|v| *v *= T::cast(2.0));
                out.iter_mut().for_each(|v| *v = T::zero());
                add_transpose_product(&d.a, &res, out);
            }
        }
    }

    fn eq_residuals(&self, y: &[T], out: &mut [T]) {
        match &self.family.data {
            FamilyData::Qp(d) => self.affine_residual(&d.a, y, out),
            FamilyData::Qcqp(_) => {
                for (o, &yi) in out.iter_mut().zip(y) {
                    *o = yi * yi - T::one();
                }
            }
        }
    }

    fn ineq_residuals(&self, y: &[T], out: &mut [T]) {
        if let FamilyData::Qp(d) = &self.family.data {
            for (i, o) in out.iter_mut().enumerate() {
                *o = crate::autodiff::dot(d.g.row(i), y) - d.h[i];
            }
        }
    }

    fn eq_vjp(&self, y: &[T], w: &[T], out: &mut [T]) {
        match &self.family.data {
            FamilyData::Qp(d) => add_transpose_product(&d.a, w, out),
            FamilyData::Qcqp(_) => {
                let two = T::cast(2.0);
                for ((o, &yi), &wi) in out.iter_mut().zip(y).zip(w) {
                    *o += two * yi * wi;
                }
            }
        }
    }

    fn ineq_vjp(&self, _y: &[T], w: &[T], out: &mut [T]) {
        if let FamilyData::Qp(d) = &self.family.data {
            add_transpose_product(&d.g, w, out);
        }
    }
}

impl<T: Scalar> GraphProblem<T> for Instance<'_, T> {
    fn objective_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var> {
        let xs = Tensor::from_parts(vec![1, self.x.len()], self.x.to_vec());
        let f = self.family.objective_batch(g, &xs, y)?;
        g.sum(f)
    }

    fn eq_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var> {
        let xs = Tensor::from_parts(vec![1, self.x.len()], self.x.to_vec());
        self.family.eq_batch(g, &xs, y)
    }

    fn ineq_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var> {
        let xs = Tensor::from_parts(vec![1, self.x.len()], self.x.to_vec());
        self.family.ineq_batch(g, &xs, y)
    }

    fn decision_shape(&self) -> Vec<usize> {
        vec![1, self.family.num_vars()]
    }
}
