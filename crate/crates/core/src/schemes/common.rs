use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::Budget;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::problems::{Dataset, ProblemFamily};
use crate::scalar::Scalar;

/// One Adam step of `net` on `loss(graph, net(xs))`; returns the loss value.
pub(crate) fn train_step<T: Scalar>(
    net: &mut Mlp<T>,
    adam: &mut Adam<T>,
    xs: &Tensor<T>,
    loss: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
) -> Result<T> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g, true);
    let x = g.constant(xs.clone());
    let y = net.forward(&mut g, &bound, x)?;
    let l = loss(&mut g, y)?;
    let value = g.value(l).item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite { op: "training_loss" });
    }
    let mut grads = g.backward(l)?;
    let gs = bound.gradients(&mut grads)?;
    adam.step(&mut net.params_mut(), &gs)?;
    Ok(value)
}

/// Loss value of fixed outputs `y` without a trainable tape.
pub(crate) fn eval_loss<T: Scalar>(y: &Tensor<T>, loss: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>) -> Result<T> {
    let mut g = Graph::new();
    let yv = g.constant(y.clone());
    let l = loss(&mut g, yv)?;
    let v = g.value(l).item()?;
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "validation_loss" });
    }
    Ok(v)
}

/// Mini-batches for one budget unit: a shuffled pass over the training set
/// (epochs), or a single batch of freshly sampled parameters (iterations).
pub(crate) enum Batch<T> {
    Rows(Vec<usize>),
    Fresh(Tensor<T>),
}

pub(crate) fn unit_batches<T: Scalar>(
    budget: Budget,
    train: &Dataset<T>,
    fam: &ProblemFamily<T>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch<T>>> {
    match budget {
        Budget::Epochs => {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(rng);
            Ok(order.chunks(batch_size).map(|c| Batch::Rows(c.to_vec())).collect())
        }
        Budget::Iterations => {
            let p = fam.num_params();
            let data = (0..batch_size * p).map(|_| T::cast(rng.gen_range(-1.0..1.0))).collect();
            Ok(vec![Batch::Fresh(Tensor::matrix(batch_size, p, data)?)])
        }
    }
}

pub(crate) fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        T::zero()
    } else {
        v.iter().copied().sum::<T>() / T::cast(v.len() as f64)
    }
}

pub(crate) fn network_widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}
