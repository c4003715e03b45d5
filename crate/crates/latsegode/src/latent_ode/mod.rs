//! The Latent ODE base model: a GRU-ODE encoder produces a variational
//! posterior over the latent initial state, a latent Neural ODE evolves it,
//! and a decoder maps the latent trajectory back to data space.
//!
//! Forward passes run on a [`Tape`](crate::tape::Tape) so training
//! differentiates through the unrolled solver steps; the plain-value wrappers
//! at the bottom run the same code on a throwaway tape.

mod checkpoint;
mod marginal;
mod train;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointMeta,
    CHECKPOINT_VERSION,
};
pub use marginal::{
    build_query_plan, logsumexp, marginal_log_likelihood, marginal_log_terms,
    marginal_log_terms_planned, MarginalLikelihoodConfig, QueryPlan,
};
pub use train::{train, EpochStats, TrainConfig, TrainReport};

#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use crate::nn::{Activation, MlpLayer, MlpParams};

    /// 1-D latent, 1-D data, identity decoder, frozen latent dynamics: the
    /// generative model is x ~ N(z0, σ²), z0 ~ N(0, 1), whose evidence at a
    /// single time point is N(x | 0, σ² + 1).
    pub(crate) fn linear_gaussian_toy(obs_variance: f64) -> LatentOdeModel {
        let config = ModelConfig {
            data_dim: 1,
            latent_dim: 1,
            encoder_hidden_dim: 2,
            encoder_field_hidden: vec![4],
            latent_field_hidden: vec![4],
            decoder_hidden: vec![],
            obs_variance,
            encoder_substeps: 5,
            latent_solver: SolverConfig::dopri5(1e-8, 1e-8),
        };
        let mut model = LatentOdeModel::new(config, 1234).unwrap();
        model.latent_field = MlpParams::zeros(&[1, 4, 1], Activation::Tanh);
        model.decoder = MlpParams {
            layers: vec![MlpLayer {
                weight: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
                bias: Tensor::zeros(&[1]),
                activation: Activation::Identity,
            }],
        };
        model
    }
}

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gru_cell_step, mlp_forward, Activation, BoundGru, BoundMlp, GruParams, MlpParams};
use crate::ode::{ode_solve, SolverConfig};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Posterior scale floor applied after `exp(log σ)`.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Architecture description; everything needed to rebuild parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden_dim: usize,
    /// Hidden widths of the encoder ODE field f_θ (tanh).
    pub encoder_field_hidden: Vec<usize>,
    /// Hidden widths of the latent ODE field f_Ψ (tanh).
    pub latent_field_hidden: Vec<usize>,
    /// Hidden widths of the decoder f_Φ (relu).
    pub decoder_hidden: Vec<usize>,
    /// Fixed observation variance σ² shared by the ELBO and the marginal
    /// likelihood.
    pub obs_variance: f64,
    /// Euler substeps per inter-observation gap in the encoder.
    pub encoder_substeps: usize,
    /// Default solver for the latent dynamics.
    pub latent_solver: SolverConfig,
}

impl ModelConfig {
    /// Small 1-D configuration used for sine-wave flows.
    pub fn sine_default() -> Self {
        ModelConfig {
            data_dim: 1,
            latent_dim: 5,
            encoder_hidden_dim: 10,
            encoder_field_hidden: vec![100, 100],
            latent_field_hidden: vec![100, 100],
            decoder_hidden: vec![100, 100],
            obs_variance: 1.0,
            encoder_substeps: 5,
            latent_solver: SolverConfig::dopri5(1e-5, 1e-6),
        }
    }

    /// 2-D configuration used for Lotka-Volterra flows.
    pub fn lotka_volterra_default() -> Self {
        ModelConfig {
            data_dim: 2,
            latent_dim: 8,
            encoder_hidden_dim: 16,
            encoder_field_hidden: vec![100, 100, 100],
            latent_field_hidden: vec![100, 100, 100],
            decoder_hidden: vec![100, 100],
            obs_variance: 0.01,
            encoder_substeps: 5,
            latent_solver: SolverConfig::dopri5(1e-4, 1e-4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim >= self.encoder_hidden_dim {
            return Err(Error::invalid(format!(
                "latent dimension ({}) must be smaller than the encoder hidden dimension ({})",
                self.latent_dim, self.encoder_hidden_dim
            )));
        }
        if self.obs_variance <= 0.0 {
            return Err(Error::invalid("observation variance must be positive"));
        }
        if self.data_dim == 0 || self.encoder_substeps == 0 {
            return Err(Error::invalid("data_dim and encoder_substeps must be >= 1"));
        }
        self.latent_solver.validate()
    }
}

/// Variational posterior over the latent initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// All learnable parameters plus architecture metadata.
#[derive(Debug, Clone)]
pub struct LatentOdeModel {
    pub config: ModelConfig,
    pub encoder_gru: GruParams,
    pub encoder_field: MlpParams,
    /// Affine head mapping the final hidden state to (μ_z0, log σ_z0).
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub latent_field: MlpParams,
    pub decoder: MlpParams,
    /// Seeds that shaped this model (init seed first, then training seeds).
    pub seed_lineage: Vec<u64>,
}

impl LatentOdeModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng::rng_from_seed(seed);
        let h = config.encoder_hidden_dim;
        let l = config.latent_dim;
        let d = config.data_dim;

        let mut enc_dims = vec![h];
        enc_dims.extend(&config.encoder_field_hidden);
        enc_dims.push(h);
        let mut lat_dims = vec![l];
        lat_dims.extend(&config.latent_field_hidden);
        lat_dims.push(l);
        let mut dec_dims = vec![l];
        dec_dims.extend(&config.decoder_hidden);
        dec_dims.push(d);

        Ok(LatentOdeModel {
            encoder_gru: GruParams::new(d, h, &mut rng),
            encoder_field: MlpParams::new(&enc_dims, Activation::Tanh, &mut rng),
            head_weight: crate::nn::init_matrix(2 * l, h, &mut rng),
            head_bias: Tensor::zeros(&[2 * l]),
            latent_field: MlpParams::new(&lat_dims, Activation::Tanh, &mut rng),
            decoder: MlpParams::new(&dec_dims, Activation::Relu, &mut rng),
            seed_lineage: vec![seed],
            config,
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundModel<'t> {
        BoundModel {
            gru: self.encoder_gru.bind(tape),
            encoder_field: self.encoder_field.bind(tape),
            head_weight: tape.leaf(self.head_weight.clone()),
            head_bias: tape.leaf(self.head_bias.clone()),
            latent_field: self.latent_field.bind(tape),
            decoder: self.decoder.bind(tape),
            data_dim: self.config.data_dim,
            latent_dim: self.config.latent_dim,
            hidden_dim: self.config.encoder_hidden_dim,
            encoder_substeps: self.config.encoder_substeps,
        }
    }

    /// Visit parameters with stable names, in the same canonical order used
    /// by [`Self::for_each_param_mut`] and [`BoundModel::leaf_vars`].
    pub fn for_each_param(&self, f: &mut impl FnMut(String, &Tensor)) {
        self.encoder_gru.for_each_param("encoder_gru", f);
        self.encoder_field.for_each_param("encoder_field", f);
        f("head.weight".into(), &self.head_weight);
        f("head.bias".into(), &self.head_bias);
        self.latent_field.for_each_param("latent_field", f);
        self.decoder.for_each_param("decoder", f);
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut Tensor)) {
        self.encoder_gru.for_each_param_mut(f);
        self.encoder_field.for_each_param_mut(f);
        f(&mut self.head_weight);
        f(&mut self.head_bias);
        self.latent_field.for_each_param_mut(f);
        self.decoder.for_each_param_mut(f);
    }

    /// Mutable references to all parameters in canonical order, for the
    /// optimizer.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.encoder_gru.collect_params_mut(&mut out);
        self.encoder_field.collect_params_mut(&mut out);
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        self.latent_field.collect_params_mut(&mut out);
        self.decoder.collect_params_mut(&mut out);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param(&mut |n, _| names.push(n));
        names
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        self.for_each_param(&mut |_, t| shapes.push(t.shape().to_vec()));
        shapes
    }

    pub fn n_scalar_params(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, t| n += t.numel());
        n
    }
}

/// Model bound to a tape for one forward pass.
pub struct BoundModel<'t> {
    gru: BoundGru<'t>,
    encoder_field: BoundMlp<'t>,
    head_weight: Var<'t>,
    head_bias: Var<'t>,
    latent_field: BoundMlp<'t>,
    decoder: BoundMlp<'t>,
    data_dim: usize,
    latent_dim: usize,
    hidden_dim: usize,
    encoder_substeps: usize,
}

/// Posterior parameters as tape nodes.
pub struct PosteriorVars<'t> {
    pub mean: Var<'t>,
    pub std: Var<'t>,
}

impl<'t> BoundModel<'t> {
    /// Parameter leaves in canonical order (matches `for_each_param`).
    pub fn leaf_vars(&self) -> Vec<Var<'t>> {
        let mut vars = self.gru.leaf_vars();
        vars.extend(self.encoder_field.leaf_vars());
        vars.push(self.head_weight);
        vars.push(self.head_bias);
        vars.extend(self.latent_field.leaf_vars());
        vars.extend(self.decoder.leaf_vars());
        vars
    }

    /// GRU-ODE encoder. Observations are consumed in reverse chronological
    /// order; between observations the hidden state is evolved backwards in
    /// time by fixed-step Euler on f_θ, and at each observation the GRU cell
    /// updates it. The final hidden state maps affinely to (μ, log σ).
    pub fn encode(
        &self,
        tape: &'t Tape,
        values: &[Vec<f64>],
        times: &[f64],
    ) -> Result<PosteriorVars<'t>> {
        if values.is_empty() {
            return Err(Error::invalid("encode needs at least one observation"));
        }
        if values.len() != times.len() {
            return Err(Error::invalid("values and times must have equal length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("encode times must be strictly increasing"));
        }
        for v in values {
            if v.len() != self.data_dim {
                return Err(Error::invalid(format!(
                    "observation dimension {} does not match data_dim {}",
                    v.len(),
                    self.data_dim
                )));
            }
        }

        let n = values.len();
        let mut hidden = tape.leaf(Tensor::zeros(&[self.hidden_dim]));
        for i in (0..n).rev() {
            if i < n - 1 {
                // evolve from t_{i+1} back to t_i: ds = −dt on the field
                let gap = times[i + 1] - times[i];
                let reversed = |_s: f64, h: &Var<'t>| -> Result<Var<'t>> {
                    Ok(mlp_forward(&self.encoder_field, *h)?.neg())
                };
                let cfg = SolverConfig::euler(gap / self.encoder_substeps as f64);
                let sol = ode_solve(reversed, &hidden, &[0.0, gap], &cfg)?;
                hidden = sol.states[1];
            }
            let x = tape.leaf(Tensor::vector(values[i].clone()));
            hidden = gru_cell_step(&self.gru, hidden, x)?;
        }

        let head = self.head_weight.matvec(hidden).add(self.head_bias);
        let mean = head.slice(0, self.latent_dim);
        let log_std = head.slice(self.latent_dim, self.latent_dim);
        let std = log_std.exp().max_scalar(SIGMA_FLOOR);
        Ok(PosteriorVars { mean, std })
    }

    /// Solve the latent trajectory from `z0` (the state at `times[0]`) and
    /// decode it pointwise. Output has one [data_dim] vector per query time.
    pub fn decode(
        &self,
        z0: Var<'t>,
        times: &[f64],
        solver: &SolverConfig,
    ) -> Result<Vec<Var<'t>>> {
        if times.is_empty() {
            return Err(Error::invalid("decode needs at least one query time"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("decode times must be strictly increasing"));
        }
        let latents = self.solve_latents(z0, times, solver)?;
        latents
            .into_iter()
            .map(|z| mlp_forward(&self.decoder, z))
            .collect()
    }

    /// Latent states at query times expressed relative to the anchor of `z0`
    /// (time 0). Times may be negative; the backward branch integrates −f_Ψ.
    pub fn decode_around(
        &self,
        z0: Var<'t>,
        rel_times: &[f64],
        solver: &SolverConfig,
    ) -> Result<Vec<Var<'t>>> {
        if rel_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("decode times must be strictly increasing"));
        }
        let split = rel_times.partition_point(|&t| t < 0.0);
        let mut out: Vec<Option<Var<'t>>> = vec![None; rel_times.len()];

        if split > 0 {
            // backward sweep: s = −t, increasing from 0
            let mut back_times = vec![0.0];
            back_times.extend(rel_times[..split].iter().rev().map(|&t| -t));
            let reversed = |_s: f64, z: &Var<'t>| -> Result<Var<'t>> {
                Ok(mlp_forward(&self.latent_field, *z)?.neg())
            };
            let sol = ode_solve(reversed, &z0, &back_times, solver)?;
            for (j, state) in sol.states.iter().skip(1).enumerate() {
                out[split - 1 - j] = Some(*state);
            }
        }
        if split < rel_times.len() {
            let starts_at_zero = rel_times[split] == 0.0;
            let mut fwd_times = Vec::with_capacity(rel_times.len() - split + 1);
            if !starts_at_zero {
                fwd_times.push(0.0);
            }
            fwd_times.extend(&rel_times[split..]);
            let sol = self.solve_latents(z0, &fwd_times, solver)?;
            let skip = usize::from(!starts_at_zero);
            for (j, state) in sol.into_iter().skip(skip).enumerate() {
                out[split + j] = Some(state);
            }
        }

        out.into_iter()
            .map(|z| mlp_forward(&self.decoder, z.expect("all query times assigned")))
            .collect()
    }

    pub(crate) fn solve_latents(
        &self,
        z0: Var<'t>,
        times: &[f64],
        solver: &SolverConfig,
    ) -> Result<Vec<Var<'t>>> {
        if times.len() == 1 {
            return Ok(vec![z0]);
        }
        let field = |_t: f64, z: &Var<'t>| -> Result<Var<'t>> {
            mlp_forward(&self.latent_field, *z)
        };
        // solve with times shifted to start at 0; autonomous field, so only
        // gaps matter
        let t0 = times[0];
        let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
        let sol = ode_solve(field, &z0, &shifted, solver)?;
        Ok(sol.states)
    }

    /// Gaussian log-likelihood of constant observations under decoded means
    /// with fixed variance σ².
    fn gaussian_loglik(
        &self,
        tape: &'t Tape,
        values: &[Vec<f64>],
        means: &[Var<'t>],
        obs_variance: f64,
    ) -> Var<'t> {
        let mut sse_terms: Vec<(f64, Var<'t>)> = Vec::with_capacity(values.len());
        for (x, m) in values.iter().zip(means.iter()) {
            let xc = tape.leaf(Tensor::vector(x.clone()));
            let diff = xc.sub(*m);
            sse_terms.push((1.0, diff.dot(diff)));
        }
        let sse = Var::lincomb(&sse_terms);
        let n_points = (values.len() * self.data_dim) as f64;
        let log_norm = -0.5 * n_points * (2.0 * std::f64::consts::PI * obs_variance).ln();
        sse.scale(-0.5 / obs_variance).add_scalar(log_norm)
    }

    /// Monte Carlo ELBO with reparameterized z0 samples and analytic
    /// diagonal-Gaussian KL against the standard-normal prior.
    #[allow(clippy::too_many_arguments)]
    pub fn elbo(
        &self,
        tape: &'t Tape,
        values: &[Vec<f64>],
        times: &[f64],
        kl_weight: f64,
        n_samples: usize,
        obs_variance: f64,
        solver: &SolverConfig,
        rng: &mut Rng,
    ) -> Result<Var<'t>> {
        if n_samples == 0 {
            return Err(Error::invalid("elbo needs at least one z0 sample"));
        }
        let posterior = self.encode(tape, values, times)?;
        let mut sample_logliks = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let eps: Vec<f64> = (0..self.latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let eps = tape.leaf(Tensor::vector(eps));
            let z0 = posterior.mean.add(posterior.std.mul(eps));
            let means = self.decode(z0, times, solver)?;
            sample_logliks.push((
                1.0 / n_samples as f64,
                self.gaussian_loglik(tape, values, &means, obs_variance),
            ));
        }
        let expected_loglik = Var::lincomb(&sample_logliks);

        // KL[N(μ, σ²) || N(0, I)] = ½ Σ (μ² + σ² − 1 − ln σ²)
        let var = posterior.std.mul(posterior.std);
        let kl = posterior
            .mean
            .dot(posterior.mean)
            .add(var.sum())
            .add_scalar(-(self.latent_dim as f64))
            .sub(var.ln().sum())
            .scale(0.5);

        Ok(expected_loglik.sub(kl.scale(kl_weight)))
    }
}

// ---- evaluation-only forward passes (no tape) ----
//
// These mirror the bound forward passes operation for operation, so taped
// and pure results agree bit-for-bit; the unit tests pin that equivalence.

/// Encode observations into the variational posterior.
pub fn encode(model: &LatentOdeModel, values: &[Vec<f64>], times: &[f64]) -> Result<Posterior> {
    use crate::nn::{gru_eval, mlp_eval};
    if values.is_empty() {
        return Err(Error::invalid("encode needs at least one observation"));
    }
    if values.len() != times.len() {
        return Err(Error::invalid("values and times must have equal length"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("encode times must be strictly increasing"));
    }
    let d = model.config.data_dim;
    for v in values {
        if v.len() != d {
            return Err(Error::invalid(format!(
                "observation dimension {} does not match data_dim {d}",
                v.len()
            )));
        }
    }

    let n = values.len();
    let mut hidden = Tensor::zeros(&[model.config.encoder_hidden_dim]);
    for i in (0..n).rev() {
        if i < n - 1 {
            let gap = times[i + 1] - times[i];
            let reversed = |_s: f64, h: &Tensor| -> Result<Tensor> {
                Ok(mlp_eval(&model.encoder_field, h)?.scale(-1.0))
            };
            let cfg = SolverConfig::euler(gap / model.config.encoder_substeps as f64);
            let sol = ode_solve(reversed, &hidden, &[0.0, gap], &cfg)?;
            hidden = sol.states.into_iter().nth(1).expect("two query times");
        }
        let x = Tensor::vector(values[i].clone());
        hidden = gru_eval(&model.encoder_gru, &hidden, &x)?;
    }

    let mut head = model.head_weight.matvec(&hidden);
    head.axpy(1.0, &model.head_bias);
    let l = model.config.latent_dim;
    let mean = head.data()[..l].to_vec();
    let std = head.data()[l..2 * l]
        .iter()
        .map(|&v| v.exp().max(SIGMA_FLOOR))
        .collect();
    Ok(Posterior { mean, std })
}

/// Latent states at the given times (z0 at `times[0]`), no decoding.
fn solve_latents_eval(
    model: &LatentOdeModel,
    z0: &Tensor,
    times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Tensor>> {
    use crate::nn::mlp_eval;
    if times.len() == 1 {
        return Ok(vec![z0.clone()]);
    }
    let field = |_t: f64, z: &Tensor| mlp_eval(&model.latent_field, z);
    let t0 = times[0];
    let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
    Ok(ode_solve(field, z0, &shifted, solver)?.states)
}

/// Decode a latent initial state at the given times (z0 sits at `times[0]`).
pub fn decode(
    model: &LatentOdeModel,
    z0: &[f64],
    times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    use crate::nn::mlp_eval;
    if z0.len() != model.config.latent_dim {
        return Err(Error::invalid(format!(
            "z0 length {} does not match latent dimension {}",
            z0.len(),
            model.config.latent_dim
        )));
    }
    if times.is_empty() {
        return Err(Error::invalid("decode needs at least one query time"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("decode times must be strictly increasing"));
    }
    let latents = solve_latents_eval(model, &Tensor::vector(z0.to_vec()), times, solver)?;
    latents
        .iter()
        .map(|z| Ok(mlp_eval(&model.decoder, z)?.data().to_vec()))
        .collect()
}

/// Evaluation-only counterpart of [`BoundModel::decode_around`]: query times
/// relative to z0's anchor at zero, negatives integrate backwards.
pub fn decode_around(
    model: &LatentOdeModel,
    z0: &[f64],
    rel_times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    use crate::nn::mlp_eval;
    if rel_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("decode times must be strictly increasing"));
    }
    let z0 = Tensor::vector(z0.to_vec());
    let split = rel_times.partition_point(|&t| t < 0.0);
    let mut out: Vec<Option<Tensor>> = vec![None; rel_times.len()];

    if split > 0 {
        let mut back_times = vec![0.0];
        back_times.extend(rel_times[..split].iter().rev().map(|&t| -t));
        let reversed = |_s: f64, z: &Tensor| -> Result<Tensor> {
            Ok(mlp_eval(&model.latent_field, z)?.scale(-1.0))
        };
        let sol = ode_solve(reversed, &z0, &back_times, solver)?;
        for (j, state) in sol.states.into_iter().skip(1).enumerate() {
            out[split - 1 - j] = Some(state);
        }
    }
    if split < rel_times.len() {
        let starts_at_zero = rel_times[split] == 0.0;
        let mut fwd_times = Vec::with_capacity(rel_times.len() - split + 1);
        if !starts_at_zero {
            fwd_times.push(0.0);
        }
        fwd_times.extend(&rel_times[split..]);
        let states = solve_latents_eval(model, &z0, &fwd_times, solver)?;
        let skip = usize::from(!starts_at_zero);
        for (j, state) in states.into_iter().skip(skip).enumerate() {
            out[split + j] = Some(state);
        }
    }

    out.into_iter()
        .map(|z| Ok(mlp_eval(&model.decoder, &z.expect("all query times assigned"))?.data().to_vec()))
        .collect()
}

/// Monte Carlo ELBO of one trajectory (visible points).
pub fn elbo(
    model: &LatentOdeModel,
    values: &[Vec<f64>],
    times: &[f64],
    kl_weight: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let tape = Tape::new();
    let bound = model.bind(&tape);
    let v = bound.elbo(
        &tape,
        values,
        times,
        kl_weight,
        n_samples,
        model.config.obs_variance,
        &model.config.latent_solver,
        rng,
    )?;
    Ok(v.value().item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            data_dim: 1,
            latent_dim: 2,
            encoder_hidden_dim: 4,
            encoder_field_hidden: vec![8],
            latent_field_hidden: vec![8],
            decoder_hidden: vec![8],
            obs_variance: 1.0,
            encoder_substeps: 5,
            latent_solver: SolverConfig::rk4(0.05),
        }
    }

    #[test]
    fn latent_dim_must_stay_below_hidden_dim() {
        let mut cfg = tiny_config();
        cfg.latent_dim = 4;
        assert!(LatentOdeModel::new(cfg, 0).is_err());
    }

    #[test]
    fn single_observation_skips_ode_evolution() {
        // with one observation the posterior equals head(GRU(0, x1)); check by
        // comparing against a model whose encoder field is huge — it must not
        // matter
        let mut model = LatentOdeModel::new(tiny_config(), 3).unwrap();
        let p1 = encode(&model, &[vec![0.7]], &[2.5]).unwrap();
        model
            .encoder_field
            .for_each_param_mut(&mut |t| *t = Tensor::full(&t.shape().to_vec(), 1e3));
        let p2 = encode(&model, &[vec![0.7]], &[2.5]).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn zero_encoder_field_matches_plain_gru_path() {
        // with f_θ ≡ 0 the hidden state is unchanged between updates, so the
        // encoding must be invariant to the gap widths
        let mut model = LatentOdeModel::new(tiny_config(), 4).unwrap();
        model
            .encoder_field
            .for_each_param_mut(&mut |t| *t = Tensor::zeros(&t.shape().to_vec()));
        let values = vec![vec![0.3], vec![-0.6]];
        let a = encode(&model, &values, &[0.0, 1.0]).unwrap();
        let b = encode(&model, &values, &[0.0, 37.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_std_is_positive() {
        let model = LatentOdeModel::new(tiny_config(), 5).unwrap();
        let p = encode(&model, &[vec![100.0], vec![-100.0]], &[0.0, 1.0]).unwrap();
        assert!(p.std.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn encode_rejects_non_increasing_times() {
        let model = LatentOdeModel::new(tiny_config(), 5).unwrap();
        assert!(encode(&model, &[vec![1.0], vec![2.0]], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn decode_single_time_is_pure_decoder() {
        let model = LatentOdeModel::new(tiny_config(), 6).unwrap();
        let z0 = vec![0.4, -0.2];
        let out = decode(&model, &z0, &[3.0], &model.config.latent_solver).unwrap();
        // reference: apply decoder directly
        let tape = Tape::new();
        let z = tape.leaf(Tensor::vector(z0.clone()));
        let want = mlp_forward(&model.decoder.bind(&tape), z).unwrap().value();
        assert_eq!(out[0], want.data());
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn zero_latent_field_gives_constant_output() {
        let mut model = LatentOdeModel::new(tiny_config(), 7).unwrap();
        model
            .latent_field
            .for_each_param_mut(&mut |t| *t = Tensor::zeros(&t.shape().to_vec()));
        let out = decode(&model, &[0.3, 0.9], &[0.0, 1.0, 2.0], &model.config.latent_solver)
            .unwrap();
        assert_eq!(out.len(), 3);
        for row in &out[1..] {
            for (a, b) in row.iter().zip(out[0].iter()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn decode_shape_contract() {
        let model = LatentOdeModel::new(tiny_config(), 8).unwrap();
        let out = decode(&model, &[0.1, 0.2], &[0.0, 0.5, 1.5, 2.0], &model.config.latent_solver)
            .unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|r| r.len() == model.config.data_dim));
    }

    #[test]
    fn decode_around_matches_forward_decode_on_positive_times() {
        let model = LatentOdeModel::new(tiny_config(), 9).unwrap();
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let z0 = tape.leaf(Tensor::vector(vec![0.5, -0.5]));
        let times = [0.0, 0.4, 1.1];
        let a = bound.decode(z0, &times, &model.config.latent_solver).unwrap();
        let b = bound.decode_around(z0, &times, &model.config.latent_solver).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.value().data(), y.value().data());
        }
    }

    #[test]
    fn decode_around_backward_inverts_forward() {
        // solve forward from z0 to t, then decode_around from the arrival
        // state with a negative query must recover the decoded start
        let model = LatentOdeModel::new(tiny_config(), 10).unwrap();
        let solver = SolverConfig::rk4(0.01);
        let tape = Tape::new();
        let bound = model.bind(&tape);
        let z0 = tape.leaf(Tensor::vector(vec![0.3, 0.1]));
        let fwd = bound.decode(z0, &[0.0, 0.8], &solver).unwrap();

        // recover z(0.8) by re-solving; decode_around anchors there
        let z_end = bound.solve_latents(z0, &[0.0, 0.8], &solver).unwrap()[1];
        let back = bound.decode_around(z_end, &[-0.8, 0.0], &solver).unwrap();
        for (a, b) in fwd[0].value().data().iter().zip(back[0].value().data()) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn elbo_kl_is_zero_when_posterior_equals_prior() {
        // directly check the analytic KL expression embedded in elbo by
        // constructing μ = 0, σ = 1 and kl_weight switching
        let model = LatentOdeModel::new(tiny_config(), 11).unwrap();
        let values = vec![vec![0.2], vec![0.4], vec![0.1]];
        let times = vec![0.0, 0.5, 1.0];
        let mut r1 = crate::rng::rng_from_seed(99);
        let mut r2 = crate::rng::rng_from_seed(99);
        let with_kl = elbo(&model, &values, &times, 1.0, 1, &mut r1).unwrap();
        let without = elbo(&model, &values, &times, 0.0, 1, &mut r2).unwrap();
        // kl >= 0 always, so elbo with kl weight is <= reconstruction term
        assert!(with_kl <= without + 1e-12);
    }

    #[test]
    fn analytic_kl_value() {
        // KL for μ = [1, 0], σ = [1, 1] vs N(0, I) is 0.5
        let mu = [1.0, 0.0];
        let sigma = [1.0, 1.0];
        let kl: f64 = mu
            .iter()
            .zip(sigma.iter())
            .map(|(&m, &s): (&f64, &f64)| 0.5 * (m * m + s * s - 1.0 - (s * s).ln()))
            .sum();
        assert_relative_eq!(kl, 0.5);
    }

    #[test]
    fn decode_is_deterministic() {
        let model = LatentOdeModel::new(tiny_config(), 12).unwrap();
        let z0 = vec![0.7, 0.2];
        let times = [0.0, 0.3, 0.9];
        let a = decode(&model, &z0, &times, &model.config.latent_solver).unwrap();
        let b = decode(&model, &z0, &times, &model.config.latent_solver).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_and_taped_encode_agree_bit_for_bit() {
        let model = LatentOdeModel::new(tiny_config(), 21).unwrap();
        let values = vec![vec![0.4], vec![-0.9], vec![0.3], vec![1.2]];
        let times = vec![0.1, 0.5, 0.8, 1.7];
        let pure = encode(&model, &values, &times).unwrap();

        let tape = Tape::new();
        let bound = model.bind(&tape);
        let taped = bound.encode(&tape, &values, &times).unwrap();
        let taped_mean = taped.mean.value();
        let taped_std = taped.std.value();
        for (a, b) in pure.mean.iter().zip(taped_mean.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in pure.std.iter().zip(taped_std.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pure_and_taped_decode_agree_bit_for_bit() {
        let mut model = LatentOdeModel::new(tiny_config(), 22).unwrap();
        model.config.latent_solver = SolverConfig::dopri5(1e-6, 1e-6);
        let z0 = vec![0.35, -0.15];
        let times = vec![0.0, 0.4, 1.3, 2.0];
        let pure = decode(&model, &z0, &times, &model.config.latent_solver).unwrap();

        let tape = Tape::new();
        let bound = model.bind(&tape);
        let z0v = tape.leaf(Tensor::vector(z0.clone()));
        let taped = bound.decode(z0v, &times, &model.config.latent_solver).unwrap();
        for (p, t) in pure.iter().zip(taped.iter()) {
            let tv = t.value();
            for (a, b) in p.iter().zip(tv.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn pure_decode_around_matches_taped() {
        let model = LatentOdeModel::new(tiny_config(), 23).unwrap();
        let solver = SolverConfig::rk4(0.05);
        let z0 = vec![0.2, 0.6];
        let rel = vec![-0.7, -0.1, 0.0, 0.5];
        let pure = decode_around(&model, &z0, &rel, &solver).unwrap();

        let tape = Tape::new();
        let bound = model.bind(&tape);
        let z0v = tape.leaf(Tensor::vector(z0.clone()));
        let taped = bound.decode_around(z0v, &rel, &solver).unwrap();
        for (p, t) in pure.iter().zip(taped.iter()) {
            let tv = t.value();
            for (a, b) in p.iter().zip(tv.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
