//! Adamax optimizer and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adamax state: first-moment EMA and infinity-norm accumulator per
/// parameter tensor, plus the shared step count and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamaxState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor>,
    u: Vec<Tensor>,
}

impl AdamaxState {
    pub fn new(param_shapes: &[Vec<usize>], learning_rate: f64) -> Self {
        AdamaxState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            u: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }
}

/// One Adamax update, in place:
///   m ← β₁ m + (1 − β₁) g
///   u ← max(β₂ u, |g|)
///   p ← p − lr · m / ((1 − β₁ᵗ) · max(u, ε))
///
/// Entries with an exactly-zero gradient decay their accumulators but do not
/// move the parameter, so an all-zero gradient leaves parameters bit-identical.
///
/// `names` is only consulted to report which parameter carried a non-finite
/// gradient.
pub fn adamax_step(
    state: &mut AdamaxState,
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
) -> Result<()> {
    assert_eq!(params.len(), state.m.len(), "param count mismatch with state");
    assert_eq!(params.len(), grads.len(), "grad count mismatch");
    for (i, g) in grads.iter().enumerate() {
        if !g.is_finite() {
            let name = names.get(i).map(String::as_str).unwrap_or("<unnamed>");
            return Err(Error::numerical(format!(
                "non-finite gradient for parameter {name}"
            )));
        }
        if !g.same_shape(params[i]) {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not mirror parameter shape {:?}",
                g.shape(),
                params[i].shape()
            )));
        }
    }

    state.step += 1;
    let bias_correction = 1.0 - state.beta1.powi(state.step as i32);
    let lr_t = state.learning_rate / bias_correction;

    for ((p, g), (m, u)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.u.iter_mut()))
    {
        for k in 0..g.numel() {
            let gk = g.data()[k];
            let mk = state.beta1 * m.data()[k] + (1.0 - state.beta1) * gk;
            let uk = (state.beta2 * u.data()[k]).max(gk.abs());
            m.data_mut()[k] = mk;
            u.data_mut()[k] = uk;
            if gk != 0.0 {
                p.data_mut()[k] -= lr_t * mk / uk.max(state.epsilon);
            }
        }
    }
    Ok(())
}

/// Scale all gradients by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads
        .iter()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}
