use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{dot, gemm, Mat, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op<T> {
    Constant,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Dot(Var, Var),
    Scale(Var, T),
    Shift(Var, T),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    HardSigmoid(Var),
    Sin(Var),
    Square(Var),
    Abs(Var),
    MaxWithZero(Var),
    Maximum(Var, Var),
    L1Norm(Var),
    L2NormSq(Var),
    LinfNorm(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::MatVec(..) => "matvec",
            Op::Dot(..) => "dot",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::HardSigmoid(..) => "hardsigmoid",
            Op::Sin(..) => "sin",
            Op::Square(..) => "square",
            Op::Abs(..) => "abs",
            Op::MaxWithZero(..) => "max_with_zero",
            Op::Maximum(..) => "maximum",
            Op::L1Norm(..) => "l1_norm",
            Op::L2NormSq(..) => "l2_norm_squared",
            Op::LinfNorm(..) => "linf_norm",
        }
    }
}

/// A computation node: its value, the operation that produced it and
/// whether any trainable leaf lies upstream.
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of a single differentiable computation.
///
/// Nodes are appended in topological order, so the graph is acyclic by
/// construction. [`Graph::backward`] consumes the tape; training loops build
/// a fresh graph per mini-batch.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub(crate) fn hardsigmoid<T: Scalar>(x: T) -> T {
    (x / T::cast(6.0) + T::cast(0.5)).max(T::zero()).min(T::one())
}

#[inline]
fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[inline]
fn step<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

fn is_scalar<T>(t: &Tensor<T>) -> bool
where
    T: Scalar,
{
    t.rank() == 0
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, Op::Constant, false)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Trainable leaf; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, Op::Param, true)
    }

    fn push_leaf(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn parents(&self, op: &Op<T>) -> Vec<Var> {
        match *op {
            Op::Constant | Op::Param => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::MatVec(a, b)
            | Op::Dot(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::Maximum(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Shift(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::HardSigmoid(a)
            | Op::Sin(a)
            | Op::Square(a)
            | Op::Abs(a)
            | Op::MaxWithZero(a)
            | Op::L1Norm(a)
            | Op::L2NormSq(a)
            | Op::LinfNorm(a) => vec![a],
        }
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = if ta.shape() == tb.shape() {
            ta.zip_map(tb, f)
        } else if is_scalar(tb) {
            let s = tb.data()[0];
            ta.map(|x| f(x, s))
        } else if is_scalar(ta) {
            let s = ta.data()[0];
            tb.map(|x| f(s, x))
        } else {
            return Err(Error::dim(
                op.name(),
                format!("{:?}", ta.shape()),
                format!("{:?}", tb.shape()),
            ));
        };
        self.push(out, op)
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    fn reduce(&mut self, a: Var, op: Op<T>, f: impl Fn(&Tensor<T>) -> T) -> Result<Var> {
        let out = Tensor::scalar(f(self.value(a)));
        self.push(out, op)
    }

    /// Elementwise sum; either operand may be a rank-0 scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product; either operand may be a rank-0 scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise maximum. Ties pass no gradient to either operand.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Maximum(a, b), |x, y| x.max(y))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matvec(&mut self, a: Var, v: Var) -> Result<Var> {
        let out = self.value(a).matvec(self.value(v))?;
        self.push(out, Op::MatVec(a, v))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(Error::dim(
                "dot",
                format!("{:?}", ta.shape()),
                format!("{:?}", tb.shape()),
            ));
        }
        let out = Tensor::scalar(dot(ta.data(), tb.data()));
        self.push(out, Op::Dot(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, s: T) -> Result<Var> {
        self.unary(a, Op::Shift(a, s), |x| x + s)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -T::one())
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<(usize, usize)> {
        let (ta, tr) = (self.value(a), self.value(row));
        if ta.rank() != 2 || tr.rank() != 1 || ta.cols() != tr.len() {
            return Err(Error::dim(
                op,
                format!("[r,{}] with row {:?}", tr.len(), tr.shape()),
                format!("{:?}", ta.shape()),
            ));
        }
        Ok((ta.rows(), ta.cols()))
    }

    /// Adds a row vector to every row of a matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.check_row("add_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for (v, &b) in data[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *v += b;
            }
        }
        self.push(Tensor::from_parts(vec![r, c], data), Op::AddRow(a, row))
    }

    /// Multiplies every row of a matrix elementwise by a row vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.check_row("mul_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for (v, &b) in data[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *v *= b;
            }
        }
        self.push(Tensor::from_parts(vec![r, c], data), Op::MulRow(a, row))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Op::Sum(a), |t| t.sum())
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::dim("mean", "non-empty tensor", 0));
        }
        self.reduce(a, Op::Mean(a), |t| t.sum() / T::from_usize(n).unwrap())
    }

    /// `max{x, 0}`; the gradient at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `clamp(x / 6 + 1/2, 0, 1)`.
    pub fn hardsigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::HardSigmoid(a), hardsigmoid)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sin(a), |x| x.sin())
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    /// Same map as [`Graph::relu`], used for constraint hinges.
    pub fn max_with_zero(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::MaxWithZero(a), |x| x.max(T::zero()))
    }

    pub fn l1_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Op::L1Norm(a), |t| t.data().iter().map(|v| v.abs()).sum())
    }

    pub fn l2_norm_squared(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Op::L2NormSq(a), |t| t.data().iter().map(|&v| v * v).sum())
    }

    pub fn linf_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Op::LinfNorm(a), |t| t.max_abs())
    }

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Consumes the tape and returns the gradient of the root with respect
    /// to every trainable leaf.
    pub fn backward(self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let root_shape = self.shape(root).to_vec();
        grads[root.0] = Some(Tensor::full(&root_shape, T::one()));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Param | Op::Constant) {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &upstream, &mut grads);
            grads[id] = Some(upstream);
        }

        let mut params = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            params.push(match node.op {
                Op::Param => Some(g.unwrap_or_else(|| node.value.zeros_like())),
                _ => None,
            });
        }
        Ok(Gradients { grads: params })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, id: usize, up: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        match node.op {
            Op::Constant | Op::Param => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(a, up.clone(), grads);
                self.accumulate_broadcast(b, up.clone(), grads);
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(a, up.clone(), grads);
                if self.wants(b) {
                    self.accumulate_broadcast(b, up.map(|g| -g), grads);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if self.wants(a) {
                    self.accumulate_broadcast(a, broadcast_mul(up, tb), grads);
                }
                if self.wants(b) {
                    self.accumulate_broadcast(b, broadcast_mul(up, ta), grads);
                }
            }
            Op::Maximum(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let pick = |first: bool| {
                    let mut g = up.clone();
                    for (i, v) in g.data_mut().iter_mut().enumerate() {
                        let x = ta.data()[if is_scalar(ta) { 0 } else { i }];
                        let y = tb.data()[if is_scalar(tb) { 0 } else { i }];
                        let wins = if first { x > y } else { y > x };
                        if !wins {
                            *v = T::zero();
                        }
                    }
                    g
                };
                if self.wants(a) {
                    self.accumulate_broadcast(a, pick(true), grads);
                }
                if self.wants(b) {
                    self.accumulate_broadcast(b, pick(false), grads);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.wants(a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(
                        Mat::plain(up.data(), m, n),
                        Mat::transposed(tb.data(), k, n),
                        T::zero(),
                        &mut da,
                    );
                    accumulate(grads, a, Tensor::from_parts(vec![m, k], da));
                }
                if self.wants(b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(
                        Mat::transposed(ta.data(), m, k),
                        Mat::plain(up.data(), m, n),
                        T::zero(),
                        &mut db,
                    );
                    accumulate(grads, b, Tensor::from_parts(vec![k, n], db));
                }
            }
            Op::MatVec(a, v) => {
                let (ta, tv) = (self.value(a), self.value(v));
                let (m, k) = (ta.rows(), ta.cols());
                if self.wants(a) {
                    let mut da = Vec::with_capacity(m * k);
                    for &g in up.data() {
                        da.extend(tv.data().iter().map(|&x| g * x));
                    }
                    accumulate(grads, a, Tensor::from_parts(vec![m, k], da));
                }
                if self.wants(v) {
                    let mut dv = vec![T::zero(); k];
                    gemm(
                        Mat::transposed(ta.data(), m, k),
                        Mat::plain(up.data(), m, 1),
                        T::zero(),
                        &mut dv,
                    );
                    accumulate(grads, v, Tensor::from_parts(vec![k], dv));
                }
            }
            Op::Dot(a, b) => {
                let g = up.data()[0];
                if self.wants(a) {
                    accumulate(grads, a, self.value(b).map(|x| g * x));
                }
                if self.wants(b) {
                    accumulate(grads, b, self.value(a).map(|x| g * x));
                }
            }
            Op::Scale(a, s) => accumulate(grads, a, up.map(|g| g * s)),
            Op::Shift(a, _) => accumulate(grads, a, up.clone()),
            Op::AddRow(a, row) => {
                if self.wants(a) {
                    accumulate(grads, a, up.clone());
                }
                if self.wants(row) {
                    accumulate(grads, row, column_sums(up));
                }
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (self.value(a), self.value(row));
                let c = tr.len();
                if self.wants(a) {
                    let mut g = up.clone();
                    for (i, v) in g.data_mut().iter_mut().enumerate() {
                        *v *= tr.data()[i % c];
                    }
                    accumulate(grads, a, g);
                }
                if self.wants(row) {
                    accumulate(grads, row, column_sums(&up.zip_map(ta, |g, x| g * x)));
                }
            }
            Op::Sum(a) => {
                let g = up.data()[0];
                accumulate(grads, a, Tensor::full(self.shape(a), g));
            }
            Op::Mean(a) => {
                let n = T::from_usize(self.value(a).len()).unwrap();
                accumulate(grads, a, Tensor::full(self.shape(a), up.data()[0] / n));
            }
            Op::Relu(a) | Op::MaxWithZero(a) => {
                accumulate(grads, a, up.zip_map(self.value(a), |g, x| g * step(x)));
            }
            Op::Sigmoid(a) => {
                accumulate(grads, a, up.zip_map(out, |g, s| g * s * (T::one() - s)));
            }
            Op::HardSigmoid(a) => {
                let three = T::cast(3.0);
                let slope = T::one() / T::cast(6.0);
                accumulate(
                    grads,
                    a,
                    up.zip_map(self.value(a), |g, x| {
                        if x > -three && x < three {
                            g * slope
                        } else {
                            T::zero()
                        }
                    }),
                );
            }
            Op::Sin(a) => accumulate(grads, a, up.zip_map(self.value(a), |g, x| g * x.cos())),
            Op::Square(a) => {
                let two = T::cast(2.0);
                accumulate(grads, a, up.zip_map(self.value(a), |g, x| g * two * x));
            }
            Op::Abs(a) => accumulate(grads, a, up.zip_map(self.value(a), |g, x| g * sign(x))),
            Op::L1Norm(a) => {
                let g = up.data()[0];
                accumulate(grads, a, self.value(a).map(|x| g * sign(x)));
            }
            Op::L2NormSq(a) => {
                let g = up.data()[0] * T::cast(2.0);
                accumulate(grads, a, self.value(a).map(|x| g * x));
            }
            Op::LinfNorm(a) => {
                let ta = self.value(a);
                let mut d = ta.zeros_like();
                let target = out.data()[0];
                if let Some(i) = ta.data().iter().position(|x| x.abs() == target) {
                    d.data_mut()[i] = up.data()[0] * sign(ta.data()[i]);
                }
                accumulate(grads, a, d);
            }
        }
    }

    /// Accumulates `g` into `v`, summing it down when `v` is a broadcast scalar.
    fn accumulate_broadcast(&self, v: Var, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        if !self.wants(v) {
            return;
        }
        let target = self.value(v);
        if target.shape() == g.shape() {
            accumulate(grads, v, g);
        } else {
            accumulate(grads, v, Tensor::from_parts(target.shape().to_vec(), vec![g.sum()]));
        }
    }
}

fn broadcast_mul<T: Scalar>(up: &Tensor<T>, other: &Tensor<T>) -> Tensor<T> {
    if other.shape() == up.shape() {
        up.zip_map(other, |g, x| g * x)
    } else {
        let s = other.data()[0];
        up.map(|g| g * s)
    }
}

fn column_sums<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let c = t.cols();
    let mut out = vec![T::zero(); c];
    for i in 0..t.rows() {
        for (o, &v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    Tensor::from_parts(vec![c], out)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += *d;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a scalar root with respect to the trainable leaves of a graph.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a trainable leaf; `None` for constants and interior nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves a leaf gradient out of the map.
    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
