use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// A single constrained problem `min f(y) s.t. h(y) = 0, g(y) <= 0` with
/// plain evaluations and hand-written vector-Jacobian products.
pub trait ConstrainedProblem<T: Scalar> {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn objective(&self, y: &[T]) -> T;
    /// Overwrites `out` with `grad f(y)`.
    fn objective_grad(&self, y: &[T], out: &mut [T]);
    fn eq_residuals(&self, y: &[T], out: &mut [T]);
    fn ineq_residuals(&self, y: &[T], out: &mut [T]);
    /// Accumulates `J_h(y)' w` into `out`.
    fn eq_vjp(&self, y: &[T], w: &[T], out: &mut [T]);
    /// Accumulates `J_g(y)' w` into `out`.
    fn ineq_vjp(&self, y: &[T], w: &[T], out: &mut [T]);
}

/// Differentiable graph versions of `f`, `h` and `g` for one problem. The
/// decision node has shape [`GraphProblem::decision_shape`]; `objective_node`
/// is a scalar and the constraint nodes are `[1, m]`.
pub trait GraphProblem<T: Scalar> {
    fn decision_shape(&self) -> Vec<usize>;
    fn objective_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var>;
    fn eq_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var>;
    fn ineq_node(&self, g: &mut Graph<T>, y: Var) -> Result<Var>;
}
