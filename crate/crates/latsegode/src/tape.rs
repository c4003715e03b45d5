//! Reverse-mode automatic differentiation over tensor primitives.
//!
//! A [`Tape`] records every primitive operation applied to [`Var`] handles in
//! execution order; [`Tape::backward`] replays that record in exact reverse,
//! accumulating vector-Jacobian products into per-node gradients. Nodes are
//! arena-indexed so backward steps reference forward values by id instead of
//! cloning them.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy)]
enum UnaryOp {
    Neg,
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Ln,
    Scale(f64),
    AddScalar(f64),
    MaxScalar(f64),
}

#[derive(Debug, Clone, Copy)]
enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Step {
    Leaf,
    Unary { x: NodeId, op: UnaryOp },
    Binary { a: NodeId, b: NodeId, op: BinaryOp },
    /// y = W x, W: [m, n], x: [n]
    MatVec { w: NodeId, x: NodeId },
    /// y = Σ cᵢ xᵢ, all same shape
    Lincomb { terms: Vec<(f64, NodeId)> },
    /// contiguous slice x[start .. start+len]
    Slice { x: NodeId, start: usize },
    Dot { a: NodeId, b: NodeId },
    Sum { x: NodeId },
}

struct TapeInner {
    values: Vec<Tensor>,
    steps: Vec<Step>,
}

/// Operation record for one forward pass.
///
/// Topological order is construction order: a node's inputs always precede it.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner { values: Vec::new(), steps: Vec::new() }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, step: Step) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        let id = inner.values.len();
        inner.values.push(value);
        inner.steps.push(step);
        id
    }

    /// Register a leaf node (parameter or constant input).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let id = self.push(value, Step::Leaf);
        Var { tape: self, id }
    }

    /// Leaf from a scalar.
    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(x))
    }

    fn value_of(&self, id: NodeId) -> Tensor {
        self.inner.borrow().values[id].clone()
    }

    fn shape_of(&self, id: NodeId) -> Vec<usize> {
        self.inner.borrow().values[id].shape().to_vec()
    }

    /// Reverse pass from a scalar output node.
    ///
    /// Leaves not reachable from `output` simply receive no gradient and read
    /// back as zeros.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let inner = self.inner.borrow();
        let n = inner.values.len();
        if inner.values[output.id].numel() != 1 {
            return Err(Error::invalid(format!(
                "backward requires a scalar output, got {} elements",
                inner.values[output.id].numel()
            )));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[output.id] = Some(Tensor::scalar(1.0));

        for id in (0..=output.id).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &inner.steps[id] {
                Step::Leaf => {
                    grads[id] = Some(g); // keep for collection
                    continue;
                }
                Step::Unary { x, op } => {
                    let contrib = match op {
                        UnaryOp::Neg => g.scale(-1.0),
                        UnaryOp::Tanh => {
                            let y = &inner.values[id];
                            g.zip_with(y, |gi, yi| gi * (1.0 - yi * yi))
                        }
                        UnaryOp::Sigmoid => {
                            let y = &inner.values[id];
                            g.zip_with(y, |gi, yi| gi * yi * (1.0 - yi))
                        }
                        UnaryOp::Relu => {
                            let xin = &inner.values[*x];
                            g.zip_with(xin, |gi, xi| if xi > 0.0 { gi } else { 0.0 })
                        }
                        UnaryOp::Exp => {
                            let y = &inner.values[id];
                            g.zip_with(y, |gi, yi| gi * yi)
                        }
                        UnaryOp::Ln => {
                            let xin = &inner.values[*x];
                            g.zip_with(xin, |gi, xi| gi / xi)
                        }
                        UnaryOp::Scale(c) => g.scale(*c),
                        UnaryOp::AddScalar(_) => g.clone(),
                        UnaryOp::MaxScalar(c) => {
                            let xin = &inner.values[*x];
                            g.zip_with(xin, |gi, xi| if xi > *c { gi } else { 0.0 })
                        }
                    };
                    accumulate(&mut grads, *x, contrib);
                }
                Step::Binary { a, b, op } => match op {
                    BinaryOp::Add => {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g);
                    }
                    BinaryOp::Sub => {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g.scale(-1.0));
                    }
                    BinaryOp::Mul => {
                        let av = &inner.values[*a];
                        let bv = &inner.values[*b];
                        accumulate(&mut grads, *a, g.mul(bv));
                        accumulate(&mut grads, *b, g.mul(av));
                    }
                },
                Step::MatVec { w, x } => {
                    let wv = &inner.values[*w];
                    let xv = &inner.values[*x];
                    accumulate(&mut grads, *w, Tensor::outer(&g, xv));
                    accumulate(&mut grads, *x, wv.matvec_t(&g));
                }
                Step::Lincomb { terms } => {
                    for &(c, t) in terms {
                        accumulate(&mut grads, t, g.scale(c));
                    }
                }
                Step::Slice { x, start } => {
                    let mut full = Tensor::zeros(&inner.values[*x].shape().to_vec());
                    full.data_mut()[*start..*start + g.numel()].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, full);
                }
                Step::Dot { a, b } => {
                    let gs = g.item();
                    let av = &inner.values[*a];
                    let bv = &inner.values[*b];
                    accumulate(&mut grads, *a, bv.scale(gs));
                    accumulate(&mut grads, *b, av.scale(gs));
                }
                Step::Sum { x } => {
                    let gs = g.item();
                    let shape = inner.values[*x].shape().to_vec();
                    accumulate(&mut grads, *x, Tensor::full(&shape, gs));
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contrib: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.axpy(1.0, &contrib),
        slot @ None => *slot = Some(contrib),
    }
}

/// Per-node gradients produced by a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the output w.r.t. `v`; zeros when `v` was unreachable.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&v.shape()),
        }
    }
}

/// Handle to a node on a [`Tape`]. Cheap to copy; all arithmetic on `Var`s
/// records onto the owning tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().values[self.id].numel()
    }

    /// Read forward values without cloning the tensor.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.inner.borrow().values[self.id])
    }

    fn unary(&self, op: UnaryOp) -> Var<'t> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            match op {
                UnaryOp::Neg => x.scale(-1.0),
                UnaryOp::Tanh => x.map(f64::tanh),
                UnaryOp::Sigmoid => x.map(|v| 1.0 / (1.0 + (-v).exp())),
                UnaryOp::Relu => x.map(|v| v.max(0.0)),
                UnaryOp::Exp => x.map(f64::exp),
                UnaryOp::Ln => x.map(f64::ln),
                UnaryOp::Scale(c) => x.scale(c),
                UnaryOp::AddScalar(c) => x.map(|v| v + c),
                UnaryOp::MaxScalar(c) => x.map(|v| v.max(c)),
            }
        };
        let id = self.tape.push(value, Step::Unary { x: self.id, op });
        Var { tape: self.tape, id }
    }

    fn binary(&self, other: Var<'t>, op: BinaryOp) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.values[self.id];
            let b = &inner.values[other.id];
            debug_assert!(a.same_shape(b), "shape mismatch in binary op");
            match op {
                BinaryOp::Add => a.add(b),
                BinaryOp::Sub => a.sub(b),
                BinaryOp::Mul => a.mul(b),
            }
        };
        let id = self.tape.push(value, Step::Binary { a: self.id, b: other.id, op });
        Var { tape: self.tape, id }
    }

    pub fn add(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: Var<'t>) -> Var<'t> {
        self.binary(other, BinaryOp::Mul)
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(UnaryOp::Neg)
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(UnaryOp::Tanh)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(UnaryOp::Relu)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(UnaryOp::Exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(UnaryOp::Ln)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::Scale(c))
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::AddScalar(c))
    }

    /// Elementwise max(x, c); gradient flows only where x > c.
    pub fn max_scalar(&self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::MaxScalar(c))
    }

    /// y = W x where self is a [m, n] matrix var.
    pub fn matvec(&self, x: Var<'t>) -> Var<'t> {
        let value = {
            let inner = self.tape.inner.borrow();
            inner.values[self.id].matvec(&inner.values[x.id])
        };
        let id = self.tape.push(value, Step::MatVec { w: self.id, x: x.id });
        Var { tape: self.tape, id }
    }

    pub fn dot(&self, other: Var<'t>) -> Var<'t> {
        let value = {
            let inner = self.tape.inner.borrow();
            Tensor::scalar(inner.values[self.id].dot(&inner.values[other.id]))
        };
        let id = self.tape.push(value, Step::Dot { a: self.id, b: other.id });
        Var { tape: self.tape, id }
    }

    pub fn sum(&self) -> Var<'t> {
        let value = {
            let inner = self.tape.inner.borrow();
            Tensor::scalar(inner.values[self.id].sum())
        };
        let id = self.tape.push(value, Step::Sum { x: self.id });
        Var { tape: self.tape, id }
    }

    pub fn slice(&self, start: usize, len: usize) -> Var<'t> {
        let value = {
            let inner = self.tape.inner.borrow();
            let x = &inner.values[self.id];
            debug_assert!(start + len <= x.numel());
            Tensor::vector(x.data()[start..start + len].to_vec())
        };
        let id = self.tape.push(value, Step::Slice { x: self.id, start });
        Var { tape: self.tape, id }
    }

    /// Σ cᵢ xᵢ over same-shaped vars; the workhorse of unrolled solver steps.
    pub fn lincomb(terms: &[(f64, Var<'t>)]) -> Var<'t> {
        assert!(!terms.is_empty(), "lincomb needs at least one term");
        let tape = terms[0].1.tape;
        let value = {
            let inner = tape.inner.borrow();
            let mut acc = Tensor::zeros_like(&inner.values[terms[0].1.id]);
            for &(c, v) in terms {
                acc.axpy(c, &inner.values[v.id]);
            }
            acc
        };
        let step = Step::Lincomb { terms: terms.iter().map(|&(c, v)| (c, v.id)).collect() };
        let id = tape.push(value, step);
        Var { tape, id }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_gradient() {
        // f(x) = x², x = 3 → df/dx = 6
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let y = x.mul(x);
        let g = tape.backward(y).unwrap();
        assert_relative_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn product_plus_linear_gradient() {
        // f(x, y) = x·y + y at (2, 5) → (5, 3)
        let tape = Tape::new();
        let x = tape.scalar(2.0);
        let y = tape.scalar(5.0);
        let f = x.mul(y).add(y);
        let g = tape.backward(f).unwrap();
        assert_relative_eq!(g.get(x).item(), 5.0);
        assert_relative_eq!(g.get(y).item(), 3.0);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let tape = Tape::new();
        let x = tape.scalar(1.0);
        let unused = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = x.mul(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn fanout_accumulates() {
        // f = x·x + x → df/dx = 2x + 1
        let tape = Tape::new();
        let x = tape.scalar(4.0);
        let f = x.mul(x).add(x);
        let g = tape.backward(f).unwrap();
        assert_relative_eq!(g.get(x).item(), 9.0);
    }

    #[test]
    fn matvec_slice_sum_chain() {
        let tape = Tape::new();
        let w = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let x = tape.leaf(Tensor::vector(vec![0.5, -1.0]));
        let y = w.matvec(x); // [-1.5, -2.5]
        let first = y.slice(0, 1);
        let loss = first.sum();
        let g = tape.backward(loss).unwrap();
        // d loss / dW = [[0.5, -1.0], [0, 0]], d loss / dx = first row of W
        assert_eq!(g.get(w).data(), &[0.5, -1.0, 0.0, 0.0]);
        assert_eq!(g.get(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn gradients_match_central_differences() {
        // f(x) = Σ tanh(x) ⊙ σ(x) + exp(x₀)·ln(x₀² + 1), numeric twin below.
        let numeric = |x: &[f64]| -> f64 {
            let s: f64 = x
                .iter()
                .map(|&v| v.tanh() * (1.0 / (1.0 + (-v).exp())))
                .sum();
            s + x[0].exp() * (x[0] * x[0] + 1.0).ln()
        };
        let x0 = [0.37, -1.21, 0.85];

        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(x0.to_vec()));
        let sq = x.slice(0, 1).mul(x.slice(0, 1)).add_scalar(1.0);
        let extra = x.slice(0, 1).exp().mul(sq.ln());
        let loss = x.tanh().mul(x.sigmoid()).sum().add(extra.sum());
        let grad = tape.backward(loss).unwrap().get(x);

        let h = 1e-5;
        for i in 0..x0.len() {
            let mut plus = x0;
            let mut minus = x0;
            plus[i] += h;
            minus[i] -= h;
            let fd = (numeric(&plus) - numeric(&minus)) / (2.0 * h);
            let rel = (grad.data()[i] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel <= 1e-4, "component {i}: ad {} vs fd {fd}", grad.data()[i]);
        }
    }

    #[test]
    fn deterministic_forward() {
        let run = || {
            let tape = Tape::new();
            let x = tape.leaf(Tensor::vector(vec![0.3, -0.7, 0.9]));
            let y = x.tanh().mul(x.sigmoid()).sum();
            y.value().item()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
