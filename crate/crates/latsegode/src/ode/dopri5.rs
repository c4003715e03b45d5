//! Adaptive Dormand–Prince 5(4) with FSAL and 4th-order dense output.

use crate::error::{Error, Result};

use super::{OdeSolution, OdeState, SolverConfig};

// Classic RKDP tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// 5th-order weights (row 7 of A; the pair is FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// b5 − b4: weights of the embedded 4th-order error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense-output weights for the 5th stage polynomial term.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Outcome of a single trial step from `(t, y)` with step `h`.
pub struct StepResult<S> {
    /// 5th-order proposal at `t + h`.
    pub proposed: S,
    /// Embedded 4th-order error estimate vector.
    pub error_estimate: S,
    /// Mixed rtol/atol weighted RMS norm of the error; accept iff <= 1.
    pub error_norm: f64,
    /// Controller suggestion for the next step size.
    pub next_h: f64,
    pub accept: bool,
    /// All seven stage derivatives (k7 doubles as the FSAL derivative).
    pub stages: Vec<S>,
}

/// One Dormand–Prince trial step. `k1` is f(t, y), reused under FSAL.
pub fn dopri5_step<S, F>(
    field: &F,
    t: f64,
    y: &S,
    h: f64,
    k1: S,
    config: &SolverConfig,
) -> Result<StepResult<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> Result<S>,
{
    debug_assert!(h > 0.0, "dopri5_step needs h > 0");
    let mut k: Vec<S> = Vec::with_capacity(7);
    k.push(k1);
    for stage in 1..6 {
        let mut terms: Vec<(f64, &S)> = vec![(1.0, y)];
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage - 1][j];
            if a != 0.0 {
                terms.push((h * a, kj));
            }
        }
        let yi = S::lincomb(&terms);
        k.push(field(t + C[stage] * h, &yi)?);
    }

    // 5th-order proposal; its derivative is stage 7 (FSAL).
    let mut terms: Vec<(f64, &S)> = vec![(1.0, y)];
    for (j, kj) in k.iter().enumerate() {
        if B5[j] != 0.0 {
            terms.push((h * B5[j], kj));
        }
    }
    let proposed = S::lincomb(&terms);
    k.push(field(t + h, &proposed)?);

    let mut err_terms: Vec<(f64, &S)> = Vec::with_capacity(7);
    for (j, kj) in k.iter().enumerate() {
        if E[j] != 0.0 {
            err_terms.push((h * E[j], kj));
        }
    }
    let error_estimate = S::lincomb(&err_terms);

    let y0v = y.snapshot();
    let y1v = proposed.snapshot();
    let ev = error_estimate.snapshot();
    let error_norm = if y1v.iter().chain(ev.iter()).all(|x| x.is_finite()) {
        let mut acc = 0.0;
        for i in 0..ev.len() {
            let scale = config.atol + config.rtol * y0v[i].abs().max(y1v[i].abs());
            let r = ev[i] / scale;
            acc += r * r;
        }
        (acc / ev.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };

    let accept = error_norm <= 1.0;
    let factor = if error_norm == 0.0 {
        config.max_scale
    } else if error_norm.is_finite() {
        (config.safety * error_norm.powf(-0.2)).clamp(config.min_scale, config.max_scale)
    } else {
        config.min_scale
    };

    Ok(StepResult {
        proposed,
        error_estimate,
        error_norm,
        next_h: h * factor,
        accept,
        stages: k,
    })
}

/// Dense-output segment covering one accepted step.
struct DenseSegment<S> {
    t: f64,
    h: f64,
    rcont: [S; 5],
}

impl<S: OdeState> DenseSegment<S> {
    fn new(t: f64, h: f64, y0: &S, y1: &S, stages: &[S]) -> Self {
        let ydiff = S::lincomb(&[(1.0, y1), (-1.0, y0)]);
        let bspl = S::lincomb(&[(h, &stages[0]), (-1.0, &ydiff)]);
        // ydiff − h·k7 − bspl
        let r4 = S::lincomb(&[(1.0, &ydiff), (-h, &stages[6]), (-1.0, &bspl)]);
        let mut d_terms: Vec<(f64, &S)> = Vec::with_capacity(7);
        for (j, kj) in stages.iter().enumerate() {
            if D[j] != 0.0 {
                d_terms.push((h * D[j], kj));
            }
        }
        let r5 = S::lincomb(&d_terms);
        DenseSegment { t, h, rcont: [y0.clone(), ydiff, bspl, r4, r5] }
    }

    /// Evaluate the interpolant at `tq` ∈ [t, t + h].
    fn eval(&self, tq: f64) -> S {
        let theta = ((tq - self.t) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        // r1 + θ r2 + θθ1 r3 + θ²θ1 r4 + θ²θ1² r5
        let coeff = [
            1.0,
            theta,
            theta * theta1,
            theta * theta * theta1,
            theta * theta * theta1 * theta1,
        ];
        let terms: Vec<(f64, &S)> = coeff.iter().copied().zip(self.rcont.iter()).collect();
        S::lincomb(&terms)
    }
}

pub(super) fn solve<S, F>(
    field: F,
    initial_state: &S,
    times: &[f64],
    config: &SolverConfig,
) -> Result<OdeSolution<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> Result<S>,
{
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let mut states = Vec::with_capacity(times.len());
    states.push(initial_state.clone());
    if times.len() == 1 {
        return Ok(OdeSolution {
            times: times.to_vec(),
            states,
            accepted_steps: 0,
            rejected_steps: 0,
            field_evals: 0,
        });
    }

    let span = t_end - t0;
    let mut t = t0;
    let mut y = initial_state.clone();
    let mut h = span / 100.0;
    let mut k1 = field(t, &y)?;
    let mut evals = 1usize;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut next_query = 1usize; // index into times

    while t < t_end {
        if accepted + rejected >= config.max_steps {
            return Err(Error::NonConvergence {
                t_reached: t,
                msg: format!("dopri5 exceeded max_steps = {}", config.max_steps),
            });
        }
        let h_trial = h.min(t_end - t);
        if t + h_trial == t {
            return Err(Error::numerical(format!(
                "dopri5 step size underflow at t = {t}"
            )));
        }
        let step = dopri5_step(&field, t, &y, h_trial, k1.clone(), config)?;
        evals += 6;
        if step.accept {
            let seg = DenseSegment::new(t, h_trial, &y, &step.proposed, &step.stages);
            let t_new = t + h_trial;
            while next_query < times.len() && times[next_query] <= t_new + 1e-14 * span.abs() {
                states.push(seg.eval(times[next_query]));
                next_query += 1;
            }
            if !step.proposed.snapshot().iter().all(|x| x.is_finite()) {
                return Err(Error::numerical(format!(
                    "dopri5 produced a non-finite state at t = {t_new}"
                )));
            }
            k1 = step.stages[6].clone(); // FSAL
            y = step.proposed;
            t = t_new;
            accepted += 1;
            h = step.next_h;
        } else {
            rejected += 1;
            h = step.next_h;
        }
    }

    // Trailing queries that coincide with t_end within roundoff.
    while next_query < times.len() {
        states.push(y.clone());
        next_query += 1;
    }

    Ok(OdeSolution {
        times: times.to_vec(),
        states,
        accepted_steps: accepted,
        rejected_steps: rejected,
        field_evals: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{ode_solve, SolverConfig};
    use crate::tensor::Tensor;

    fn exp_field(_t: f64, y: &Tensor) -> crate::error::Result<Tensor> {
        Ok(y.clone())
    }

    #[test]
    fn zero_field_step_has_zero_error_and_accepts() {
        let cfg = SolverConfig::dopri5(1e-8, 1e-8);
        let y = Tensor::vector(vec![1.0, 2.0]);
        let field = |_t: f64, s: &Tensor| Ok(Tensor::zeros_like(s));
        let k1 = field(0.0, &y).unwrap();
        let step = dopri5_step(&field, 0.0, &y, 0.5, k1, &cfg).unwrap();
        assert!(step.accept);
        assert_eq!(step.error_norm, 0.0);
        assert_eq!(step.proposed.data(), y.data());
        // zero error drives the controller to its max growth factor
        assert_eq!(step.next_h, 0.5 * cfg.max_scale);
    }

    #[test]
    fn single_step_matches_exponential() {
        let cfg = SolverConfig::dopri5(1e-8, 1e-8);
        let y = Tensor::scalar(1.0);
        let k1 = exp_field(0.0, &y).unwrap();
        let step = dopri5_step(&exp_field, 0.0, &y, 0.1, k1, &cfg).unwrap();
        assert!((step.proposed.item() - 0.1f64.exp()).abs() <= 1e-9);
    }

    #[test]
    fn controller_scaling_matches_error_norm_32() {
        // err = 32 → 32^(−1/5) = 1/2 → next h = h · safety / 2
        let cfg = SolverConfig::dopri5(1e-8, 1e-8);
        let factor = (cfg.safety * 32f64.powf(-0.2)).clamp(cfg.min_scale, cfg.max_scale);
        assert!((factor - cfg.safety / 2.0).abs() < 1e-14);
    }

    #[test]
    fn dense_output_matches_direct_solve() {
        // query many interior points; compare against separate solves that
        // end exactly at each point
        let cfg = SolverConfig::dopri5(1e-10, 1e-10);
        let y0 = Tensor::scalar(1.0);
        let queries: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let sol = ode_solve(exp_field, &y0, &queries, &cfg).unwrap();
        for (t, s) in queries.iter().zip(sol.states.iter()) {
            let direct = t.exp();
            assert!(
                (s.item() - direct).abs() <= 1e-7,
                "dense output at t={t}: {} vs {direct}",
                s.item()
            );
        }
    }

    #[test]
    fn reports_rejections_on_stiff_start() {
        // large initial step on a fast field forces at least one rejection
        let field = |_t: f64, y: &Tensor| Ok(y.scale(-50.0));
        let y0 = Tensor::scalar(1.0);
        let cfg = SolverConfig::dopri5(1e-9, 1e-9);
        let sol = ode_solve(field, &y0, &[0.0, 1.0], &cfg).unwrap();
        assert!(sol.rejected_steps > 0);
        assert!((sol.states[1].item() - (-50f64).exp()).abs() <= 1e-6);
    }
}
