//! Numerical ODE integration: fixed-step Euler and RK4 plus adaptive
//! Dormand–Prince 5(4) with dense output.
//!
//! Solvers are generic over the state type so the same stepping code
//! integrates plain [`Tensor`] states (data generation, evaluation) and taped
//! [`Var`] states (training, where gradients flow through every accepted
//! step while step-size control stays non-differentiable).

pub mod dopri5;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Vector-space operations a solver state must support. `snapshot` exposes
/// numeric values for error control and finiteness checks only; it never
/// participates in differentiation.
pub trait OdeState: Clone {
    fn lincomb(terms: &[(f64, &Self)]) -> Self;
    fn snapshot(&self) -> Vec<f64>;
}

impl OdeState for Tensor {
    fn lincomb(terms: &[(f64, &Self)]) -> Self {
        let mut acc = Tensor::zeros_like(terms[0].1);
        for &(c, t) in terms {
            acc.axpy(c, t);
        }
        acc
    }

    fn snapshot(&self) -> Vec<f64> {
        self.data().to_vec()
    }
}

impl<'t> OdeState for Var<'t> {
    fn lincomb(terms: &[(f64, &Self)]) -> Self {
        let owned: Vec<(f64, Var<'t>)> = terms.iter().map(|&(c, v)| (c, *v)).collect();
        Var::lincomb(&owned)
    }

    fn snapshot(&self) -> Vec<f64> {
        self.with_value(|t| t.data().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Euler,
    Rk4,
    Dopri5,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Fixed step size for Euler/RK4; gaps are split into equal substeps no
    /// longer than this.
    pub step_size: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl SolverConfig {
    pub fn euler(step_size: f64) -> Self {
        SolverConfig {
            method: SolverMethod::Euler,
            step_size,
            rtol: 0.0,
            atol: 0.0,
            max_steps: 1_000_000,
            safety: 0.9,
            min_scale: 0.2,
            max_scale: 5.0,
        }
    }

    pub fn rk4(step_size: f64) -> Self {
        SolverConfig { method: SolverMethod::Rk4, ..SolverConfig::euler(step_size) }
    }

    pub fn dopri5(rtol: f64, atol: f64) -> Self {
        SolverConfig {
            method: SolverMethod::Dopri5,
            step_size: 0.0,
            rtol,
            atol,
            max_steps: 100_000,
            safety: 0.9,
            min_scale: 0.2,
            max_scale: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            SolverMethod::Euler | SolverMethod::Rk4 => {
                if self.step_size <= 0.0 {
                    return Err(Error::invalid("fixed-step methods need step_size > 0"));
                }
            }
            SolverMethod::Dopri5 => {
                if self.rtol <= 0.0 || self.atol <= 0.0 {
                    return Err(Error::invalid("dopri5 needs positive tolerances"));
                }
            }
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        Ok(())
    }
}

/// States reported at the requested query times plus solver effort counters.
#[derive(Debug, Clone)]
pub struct OdeSolution<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub field_evals: usize,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("query times must be non-empty"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("query times must be strictly increasing"));
    }
    Ok(())
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrate `field` from `times[0]`, reporting the state at every query
/// time. `initial_state` is the state at the first query time.
pub fn ode_solve<S, F>(
    field: F,
    initial_state: &S,
    times: &[f64],
    config: &SolverConfig,
) -> Result<OdeSolution<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> Result<S>,
{
    config.validate()?;
    check_times(times)?;
    match config.method {
        SolverMethod::Euler => fixed_step(field, initial_state, times, config, 1),
        SolverMethod::Rk4 => fixed_step(field, initial_state, times, config, 4),
        SolverMethod::Dopri5 => dopri5::solve(field, initial_state, times, config),
    }
}

/// Shared fixed-step driver; `stages` selects Euler (1) or RK4 (4).
fn fixed_step<S, F>(
    field: F,
    initial_state: &S,
    times: &[f64],
    config: &SolverConfig,
    stages: usize,
) -> Result<OdeSolution<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> Result<S>,
{
    let mut states = Vec::with_capacity(times.len());
    states.push(initial_state.clone());
    let mut y = initial_state.clone();
    let mut accepted = 0usize;
    let mut evals = 0usize;

    for gap in times.windows(2) {
        let (t_from, t_to) = (gap[0], gap[1]);
        let span = t_to - t_from;
        let n_sub = (span / config.step_size).ceil().max(1.0) as usize;
        if accepted + n_sub > config.max_steps {
            return Err(Error::NonConvergence {
                t_reached: t_from,
                msg: format!("fixed-step budget of {} steps exhausted", config.max_steps),
            });
        }
        let h = span / n_sub as f64;
        for k in 0..n_sub {
            let t = t_from + k as f64 * h;
            y = match stages {
                1 => {
                    let d = field(t, &y)?;
                    evals += 1;
                    S::lincomb(&[(1.0, &y), (h, &d)])
                }
                _ => {
                    let k1 = field(t, &y)?;
                    let y2 = S::lincomb(&[(1.0, &y), (0.5 * h, &k1)]);
                    let k2 = field(t + 0.5 * h, &y2)?;
                    let y3 = S::lincomb(&[(1.0, &y), (0.5 * h, &k2)]);
                    let k3 = field(t + 0.5 * h, &y3)?;
                    let y4 = S::lincomb(&[(1.0, &y), (h, &k3)]);
                    let k4 = field(t + h, &y4)?;
                    evals += 4;
                    S::lincomb(&[
                        (1.0, &y),
                        (h / 6.0, &k1),
                        (h / 3.0, &k2),
                        (h / 3.0, &k3),
                        (h / 6.0, &k4),
                    ])
                }
            };
            accepted += 1;
        }
        if !finite(&y.snapshot()) {
            return Err(Error::numerical(format!(
                "non-finite state at t = {t_to}"
            )));
        }
        states.push(y.clone());
    }

    Ok(OdeSolution {
        times: times.to_vec(),
        states,
        accepted_steps: accepted,
        rejected_steps: 0,
        field_evals: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_field(_t: f64, y: &Tensor) -> Result<Tensor> {
        Ok(y.clone())
    }

    #[test]
    fn zero_field_is_constant() {
        let y0 = Tensor::vector(vec![3.0, -1.0]);
        for cfg in [SolverConfig::euler(0.1), SolverConfig::rk4(0.1), SolverConfig::dopri5(1e-8, 1e-8)] {
            let sol = ode_solve(|_, y: &Tensor| Ok(Tensor::zeros_like(y)), &y0, &[0.0, 0.5, 2.0], &cfg)
                .unwrap();
            for s in &sol.states {
                assert_eq!(s.data(), y0.data());
            }
        }
    }

    #[test]
    fn dopri5_exponential_growth_hits_e() {
        let y0 = Tensor::scalar(1.0);
        let sol = ode_solve(exp_field, &y0, &[0.0, 1.0], &SolverConfig::dopri5(1e-8, 1e-8)).unwrap();
        assert!((sol.states[1].item() - std::f64::consts::E).abs() <= 1e-6);
    }

    #[test]
    fn dopri5_global_error_within_tolerance_budget() {
        for rtol in [1e-6, 1e-8] {
            let y0 = Tensor::scalar(1.0);
            let sol = ode_solve(exp_field, &y0, &[0.0, 1.0], &SolverConfig::dopri5(rtol, rtol)).unwrap();
            let err = (sol.states[1].item() - std::f64::consts::E).abs();
            assert!(err <= 100.0 * rtol, "rtol {rtol}: error {err}");
        }
    }

    #[test]
    fn euler_first_order_convergence() {
        let run = |h: f64| {
            let y0 = Tensor::scalar(1.0);
            let sol = ode_solve(exp_field, &y0, &[0.0, 1.0], &SolverConfig::euler(h)).unwrap();
            (sol.states[1].item() - std::f64::consts::E).abs()
        };
        let ratio = run(0.01) / run(0.005);
        assert!((1.8..=2.2).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn lotka_volterra_first_integral_is_conserved() {
        // dx/dt = αx − βxy, dy/dt = δxy − γy with (α, β, δ, γ) = (1, 1, 2, 1);
        // V(x, y) = δx − γ ln x + βy − α ln y is constant along solutions.
        let (alpha, beta, delta, gamma) = (1.0, 1.0, 2.0, 1.0);
        let field = move |_t: f64, s: &Tensor| -> Result<Tensor> {
            let (x, y) = (s.data()[0], s.data()[1]);
            Ok(Tensor::vector(vec![alpha * x - beta * x * y, delta * x * y - gamma * y]))
        };
        let v = |x: f64, y: f64| delta * x - gamma * x.ln() + beta * y - alpha * y.ln();
        let y0 = Tensor::vector(vec![2.0, 1.0]);
        let times: Vec<f64> = (0..=60).map(|i| i as f64 * 0.25).collect();
        let sol = ode_solve(field, &y0, &times, &SolverConfig::dopri5(1e-8, 1e-8)).unwrap();
        let v0 = v(2.0, 1.0);
        for s in &sol.states {
            let drift = (v(s.data()[0], s.data()[1]) - v0).abs() / v0.abs();
            assert!(drift <= 1e-5, "conserved-quantity drift {drift}");
        }
    }

    #[test]
    fn fixed_step_split_call_invariance() {
        let y0 = Tensor::scalar(1.0);
        for cfg in [SolverConfig::euler(0.07), SolverConfig::rk4(0.07)] {
            let joint = ode_solve(exp_field, &y0, &[0.0, 0.6, 1.1], &cfg).unwrap();
            let first = ode_solve(exp_field, &y0, &[0.0, 0.6], &cfg).unwrap();
            let second = ode_solve(exp_field, &first.states[1], &[0.6, 1.1], &cfg).unwrap();
            let diff = (joint.states[2].item() - second.states[1].item()).abs();
            assert!(diff <= 1e-9, "split invariance violated by {diff}");
        }
    }

    #[test]
    fn non_increasing_times_rejected() {
        let y0 = Tensor::scalar(1.0);
        let err = ode_solve(exp_field, &y0, &[0.0, 0.0], &SolverConfig::euler(0.1));
        assert!(err.is_err());
    }

    #[test]
    fn initial_state_reported_at_first_query_time() {
        let y0 = Tensor::scalar(4.2);
        let sol = ode_solve(exp_field, &y0, &[1.0, 2.0], &SolverConfig::dopri5(1e-6, 1e-6)).unwrap();
        assert_relative_eq!(sol.states[0].item(), 4.2);
    }

    #[test]
    fn max_steps_exceeded_reports_last_time() {
        let y0 = Tensor::scalar(1.0);
        let mut cfg = SolverConfig::euler(1e-6);
        cfg.max_steps = 10;
        let err = ode_solve(exp_field, &y0, &[0.0, 1.0], &cfg).unwrap_err();
        match err {
            Error::NonConvergence { t_reached, .. } => assert_eq!(t_reached, 0.0),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
