use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{hardsigmoid, sigmoid, Gradients, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activation applied after the final affine layer.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputHead<T> {
    Identity,
    /// `2 * sigmoid(z) - 1`, with values in `(-1, 1)`.
    ScaledSigmoid,
    /// `lo + (hi - lo) * hardsigmoid(z)`, a convex combination of the bounds.
    BoundMix {
        lo: Vec<T>,
        hi: Vec<T>,
    },
}

impl<T> OutputHead<T> {
    pub fn name(&self) -> &'static str {
        match self {
            OutputHead::Identity => "identity",
            OutputHead::ScaledSigmoid => "scaled-sigmoid",
            OutputHead::BoundMix { .. } => "bound-mix",
        }
    }
}

/// Affine layer `x W + b` with `W` stored as `[inputs, outputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Fully connected network with ReLU hidden activations.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    layers: Vec<Dense<T>>,
    head: OutputHead<T>,
    zero_final: bool,
    seed: u64,
}

/// Parameters of an [`Mlp`] registered as leaves of one graph.
pub struct BoundMlp {
    vars: Vec<Var>,
}

impl BoundMlp {
    /// Gradients in [`Mlp::params_mut`] order.
    pub fn gradients<T: Scalar>(&self, grads: &mut Gradients<T>) -> Result<Vec<Tensor<T>>> {
        self.vars
            .iter()
            .map(|&v| {
                grads
                    .take(v)
                    .ok_or_else(|| Error::Contract("network was bound as frozen; no gradients".into()))
            })
            .collect()
    }
}

impl<T: Scalar> Mlp<T> {
    /// Builds a network with layer widths `[input, hidden.., output]`.
    ///
    /// Weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    /// With `zero_final` the last layer starts at exactly zero.
    pub fn new(widths: &[usize], head: OutputHead<T>, zero_final: bool, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!("an MLP needs at least 2 widths, got {widths:?}")));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {widths:?}")));
        }
        let out = *widths.last().unwrap();
        if let OutputHead::BoundMix { lo, hi } = &head {
            if lo.len() != out || hi.len() != out {
                return Err(Error::Config(format!("bound-mix head needs {out} bounds")));
            }
            if lo.iter().zip(hi).any(|(l, h)| l > h) {
                return Err(Error::Config("bound-mix head requires lo <= hi".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw =
                    |len: usize| -> Vec<T> { (0..len).map(|_| T::cast(rng.gen_range(-bound..bound))).collect() };
                let (weight, bias) = (draw(fan_in * fan_out), draw(fan_out));
                if zero_final && i == last {
                    Dense {
                        weight: Tensor::zeros(&[fan_in, fan_out]),
                        bias: Tensor::zeros(&[fan_out]),
                    }
                } else {
                    Dense {
                        weight: Tensor::from_parts(vec![fan_in, fan_out], weight),
                        bias: Tensor::vector(bias),
                    }
                }
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            head,
            zero_final,
            seed,
        })
    }

    /// Reassembles a network from stored parameters.
    pub fn from_parts(
        widths: &[usize],
        head: OutputHead<T>,
        zero_final: bool,
        seed: u64,
        params: &[T],
    ) -> Result<Self> {
        let mut net = Self::new(widths, head, zero_final, seed)?;
        if params.len() != net.num_parameters() {
            return Err(Error::dim("mlp_from_parts", net.num_parameters(), params.len()));
        }
        let mut offset = 0;
        for p in net.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn head(&self) -> &OutputHead<T> {
        &self.head
    }

    pub fn zero_final(&self) -> bool {
        self.zero_final
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in the order `w0, b0, w1, b1, ..`.
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Flattened copy of all parameters.
    pub fn flat_parameters(&self) -> Vec<T> {
        self.parameters()
            .into_iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Registers the parameters in `g`, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> BoundMlp {
        let vars = self
            .parameters()
            .into_iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect();
        BoundMlp { vars }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(Error::dim(
                "mlp_forward",
                format!("[batch, {}]", self.input_width()),
                format!("{shape:?}"),
            ));
        }
        Ok(())
    }

    /// Differentiable forward pass of a `[batch, input]` node.
    pub fn forward(&self, g: &mut Graph<T>, bound: &BoundMlp, x: Var) -> Result<Var> {
        self.check_input(g.shape(x))?;
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, pair) in bound.vars.chunks(2).enumerate() {
            let z = g.matmul(h, pair[0])?;
            h = g.add_row(z, pair[1])?;
            if i < last {
                h = g.relu(h)?;
            }
        }
        match &self.head {
            OutputHead::Identity => Ok(h),
            OutputHead::ScaledSigmoid => {
                let s = g.sigmoid(h)?;
                let s = g.scale(s, T::cast(2.0))?;
                g.shift(s, -T::one())
            }
            OutputHead::BoundMix { lo, hi } => {
                let s = g.hardsigmoid(h)?;
                let span = g.constant(Tensor::vector(lo.iter().zip(hi).map(|(&l, &u)| u - l).collect()));
                let lo = g.constant(Tensor::vector(lo.clone()));
                let s = g.mul_row(s, span)?;
                g.add_row(s, lo)
            }
        }
    }

    /// Tape-free forward pass; bitwise identical to [`Mlp::forward`].
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight)?;
            add_row_assign(&mut h, layer.bias.data());
            if i < last {
                h.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
        }
        match &self.head {
            OutputHead::Identity => {}
            OutputHead::ScaledSigmoid => {
                let two = T::cast(2.0);
                h.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v) * two + -T::one());
            }
            OutputHead::BoundMix { lo, hi } => {
                let span: Vec<T> = lo.iter().zip(hi).map(|(&l, &u)| u - l).collect();
                h.data_mut().iter_mut().for_each(|v| *v = hardsigmoid(*v));
                mul_row_assign(&mut h, &span);
                add_row_assign(&mut h, lo);
            }
        }
        if !h.is_finite() {
            return Err(Error::NonFinite { op: "mlp_predict" });
        }
        Ok(h)
    }
}

fn add_row_assign<T: Scalar>(m: &mut Tensor<T>, row: &[T]) {
    let c = row.len();
    for chunk in m.data_mut().chunks_mut(c) {
        for (v, &b) in chunk.iter_mut().zip(row) {
            *v += b;
        }
    }
}

fn mul_row_assign<T: Scalar>(m: &mut Tensor<T>, row: &[T]) {
    let c = row.len();
    for chunk in m.data_mut().chunks_mut(c) {
        for (v, &b) in chunk.iter_mut().zip(row) {
            *v *= b;
        }
    }
}
