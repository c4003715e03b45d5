//! Lotka-Volterra hybrid trajectories.
//!
//! Each smooth flow integrates dx/dt = αx − βxy, dy/dt = δxy − γy with
//! coefficients drawn per flow. The JD variant restarts populations at each
//! changepoint; the SD variant keeps populations continuous and switches only
//! the coefficient vector.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{ode_solve, SolverConfig};
use crate::rng;
use crate::tensor::Tensor;

use super::{segment_times, uniform_count, uniform_in, MaskClass, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LvVariant {
    /// Jump discontinuity: populations restart from fresh draws at changepoints.
    Jd,
    /// Switching dynamics: populations stay continuous, coefficients switch.
    Sd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvSpec {
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub delta_range: (f64, f64),
    pub gamma_range: (f64, f64),
    /// Initial predator population x.
    pub x0_range: (f64, f64),
    /// Initial prey population y.
    pub y0_range: (f64, f64),
    pub obs_count_range: (usize, usize),
    /// Local end time of each flow.
    pub end_time_range: (f64, f64),
    /// Minimum L2 change of the coefficient vector between flows.
    pub min_coeff_change: f64,
    pub noise_std: f64,
    pub changepoint_range: (usize, usize),
    pub variant: LvVariant,
    pub aligned_times: bool,
    /// Bounded retries when the integrator fails on a pathological draw.
    pub max_retries: usize,
}

impl Default for LvSpec {
    fn default() -> Self {
        LvSpec {
            alpha_range: (0.5, 1.5),
            beta_range: (0.5, 1.5),
            delta_range: (1.5, 2.5),
            gamma_range: (0.5, 1.5),
            x0_range: (1.5, 2.5),
            y0_range: (0.5, 1.5),
            obs_count_range: (175, 225),
            end_time_range: (14.0, 16.0),
            min_coeff_change: 0.6,
            noise_std: 0.01,
            changepoint_range: (0, 2),
            variant: LvVariant::Jd,
            aligned_times: true,
            max_retries: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LvCoeffs {
    alpha: f64,
    beta: f64,
    delta: f64,
    gamma: f64,
}

impl LvCoeffs {
    fn draw(rng: &mut rng::Rng, spec: &LvSpec) -> Self {
        LvCoeffs {
            alpha: uniform_in(rng, spec.alpha_range),
            beta: uniform_in(rng, spec.beta_range),
            delta: uniform_in(rng, spec.delta_range),
            gamma: uniform_in(rng, spec.gamma_range),
        }
    }

    fn distance(&self, other: &LvCoeffs) -> f64 {
        ((self.alpha - other.alpha).powi(2)
            + (self.beta - other.beta).powi(2)
            + (self.delta - other.delta).powi(2)
            + (self.gamma - other.gamma).powi(2))
        .sqrt()
    }
}

fn lv_field(c: LvCoeffs) -> impl Fn(f64, &Tensor) -> Result<Tensor> {
    move |_t, s| {
        let (x, y) = (s.data()[0], s.data()[1]);
        Ok(Tensor::vector(vec![
            c.alpha * x - c.beta * x * y,
            c.delta * x * y - c.gamma * y,
        ]))
    }
}

pub fn gen_lv(spec: &LvSpec, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if count < 1 {
        return Err(Error::invalid("count must be >= 1"));
    }
    if spec.noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be >= 0"));
    }
    (0..count).map(|i| gen_one(spec, seed, i as u64)).collect()
}

fn gen_one(spec: &LvSpec, seed: u64, index: u64) -> Result<Trajectory> {
    let mut rng = rng::rng_for(seed, &[0x6c6f746b61, index]);
    let n_cp = uniform_count(&mut rng, spec.changepoint_range);
    let n_seg = n_cp + 1;
    let solver = SolverConfig::dopri5(1e-8, 1e-8);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("noise std");

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut changepoints = Vec::new();
    let mut segment_params = Vec::new();

    let mut prev_coeffs: Option<LvCoeffs> = None;
    let mut carry_state: Option<Vec<f64>> = None; // SD chaining
    let mut global_offset = 0.0;

    for j in 0..n_seg {
        let mut attempt = 0;
        let (seg_times_local, states, coeffs, init, end_time) = loop {
            // coefficients with the minimum inter-flow change
            let coeffs = {
                let mut tries = 0;
                loop {
                    let cand = LvCoeffs::draw(&mut rng, spec);
                    let ok = match prev_coeffs {
                        Some(prev) => cand.distance(&prev) >= spec.min_coeff_change,
                        None => true,
                    };
                    if ok {
                        break cand;
                    }
                    tries += 1;
                    if tries > 10_000 {
                        return Err(Error::invalid(
                            "could not satisfy min_coeff_change within the coefficient ranges",
                        ));
                    }
                }
            };
            let init: Vec<f64> = match (&carry_state, spec.variant) {
                (Some(state), LvVariant::Sd) => state.clone(),
                _ => vec![
                    uniform_in(&mut rng, spec.x0_range),
                    uniform_in(&mut rng, spec.y0_range),
                ],
            };
            let end_time = uniform_in(&mut rng, spec.end_time_range);
            let n_obs = uniform_count(&mut rng, spec.obs_count_range);
            let obs_local = segment_times(
                seed,
                index,
                j as u64,
                n_obs,
                spec.aligned_times,
                0.0,
                end_time,
            );

            // query grid: initial time, the observations, and the terminal
            // time needed to chain the SD variant
            let mut query = Vec::with_capacity(n_obs + 2);
            query.push(0.0);
            query.extend(&obs_local);
            if *query.last().unwrap() < end_time {
                query.push(end_time);
            }

            let y0 = Tensor::vector(init.clone());
            match ode_solve(lv_field(coeffs), &y0, &query, &solver) {
                Ok(sol) => break (obs_local, sol.states, coeffs, init, end_time),
                Err(e) => {
                    attempt += 1;
                    if attempt > spec.max_retries {
                        return Err(e);
                    }
                }
            }
        };

        // states[0] is the initial condition; the last entry is the state at
        // end_time used to chain the SD variant
        let n_obs = seg_times_local.len();
        for s in states.iter().skip(1).take(n_obs) {
            let (x, y) = (s.data()[0], s.data()[1]);
            let (ex, ey) = if spec.noise_std > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            values.push(vec![x + ex, y + ey]);
        }
        times.extend(seg_times_local.iter().map(|t| t + global_offset));
        carry_state = Some(states.last().unwrap().data().to_vec());
        global_offset += end_time;

        if j + 1 < n_seg {
            changepoints.push(times.len() - 1);
        }
        segment_params.push(format!(
            "alpha={:.6} beta={:.6} delta={:.6} gamma={:.6} x0={:.6} y0={:.6}",
            coeffs.alpha, coeffs.beta, coeffs.delta, coeffs.gamma, init[0], init[1]
        ));
        prev_coeffs = Some(coeffs);
    }

    let n = values.len();
    let traj = Trajectory {
        times,
        values,
        mask: vec![MaskClass::Visible; n],
        changepoints,
        segment_params,
    };
    traj.validate()?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_system_matches_analytic_exponentials() {
        // β = δ = 0 → x = x0 e^{αt}, y = y0 e^{−γt}
        let spec = LvSpec {
            alpha_range: (0.7, 0.7),
            beta_range: (0.0, 0.0),
            delta_range: (0.0, 0.0),
            gamma_range: (0.4, 0.4),
            x0_range: (2.0, 2.0),
            y0_range: (1.0, 1.0),
            noise_std: 0.0,
            changepoint_range: (0, 0),
            min_coeff_change: 0.0,
            obs_count_range: (50, 50),
            end_time_range: (5.0, 5.0),
            ..LvSpec::default()
        };
        let t = &gen_lv(&spec, 1, 3).unwrap()[0];
        for (time, v) in t.times.iter().zip(&t.values) {
            let wx = 2.0 * (0.7 * time).exp();
            let wy = 1.0 * (-0.4 * time).exp();
            assert!((v[0] - wx).abs() / wx <= 1e-6, "x {} vs {wx}", v[0]);
            assert!((v[1] - wy).abs() / wy.max(1e-9) <= 1e-6, "y {} vs {wy}", v[1]);
        }
    }

    #[test]
    fn first_integral_conserved_within_each_flow() {
        let spec = LvSpec { noise_std: 0.0, changepoint_range: (2, 2), ..LvSpec::default() };
        let t = &gen_lv(&spec, 1, 5).unwrap()[0];
        // V = δx − γ ln x + βy − α ln y per flow
        let mut boundaries = vec![0usize];
        boundaries.extend(t.changepoints.iter().map(|&c| c + 1));
        boundaries.push(t.len());
        for (j, w) in boundaries.windows(2).enumerate() {
            let p = &t.segment_params[j];
            let get = |k: &str| -> f64 {
                p.split_whitespace()
                    .find_map(|kv| kv.strip_prefix(k).map(|s| s.parse().unwrap()))
                    .unwrap()
            };
            let (a, b, d, g) = (get("alpha="), get("beta="), get("delta="), get("gamma="));
            let v = |x: f64, y: f64| d * x - g * x.ln() + b * y - a * y.ln();
            let first = &t.values[w[0]];
            let v0 = v(first[0], first[1]);
            for row in &t.values[w[0]..w[1]] {
                let drift = (v(row[0], row[1]) - v0).abs() / v0.abs().max(1e-9);
                assert!(drift <= 1e-5, "flow {j}: drift {drift}");
            }
        }
    }

    #[test]
    fn populations_stay_positive() {
        let spec = LvSpec { noise_std: 0.0, ..LvSpec::default() };
        for t in gen_lv(&spec, 20, 8).unwrap() {
            assert!(t.values.iter().all(|v| v[0] > 0.0 && v[1] > 0.0));
        }
    }

    #[test]
    fn sd_variant_is_continuous_at_changepoints() {
        let spec = LvSpec {
            variant: LvVariant::Sd,
            noise_std: 0.0,
            changepoint_range: (1, 1),
            ..LvSpec::default()
        };
        for t in gen_lv(&spec, 5, 10).unwrap() {
            let cp = t.changepoints[0];
            // rate of change across the boundary stays comparable to the
            // steepest within-segment rate: continuity, not a jump
            let rate = |i: usize| {
                let dt = t.times[i + 1] - t.times[i];
                ((t.values[i + 1][0] - t.values[i][0]).abs()
                    + (t.values[i + 1][1] - t.values[i][1]).abs())
                    / dt
            };
            let cross = rate(cp);
            let max_within = (0..t.len() - 1)
                .filter(|&i| i != cp)
                .map(rate)
                .fold(0.0f64, f64::max);
            assert!(
                cross <= 5.0 * max_within,
                "cross-boundary rate {cross} vs within-segment max {max_within}"
            );
        }
    }

    #[test]
    fn jd_variant_resamples_initial_populations() {
        let spec = LvSpec {
            variant: LvVariant::Jd,
            noise_std: 0.0,
            changepoint_range: (1, 1),
            ..LvSpec::default()
        };
        let trajs = gen_lv(&spec, 10, 11).unwrap();
        // at least one trajectory must visibly jump at its changepoint
        let any_jump = trajs.iter().any(|t| {
            let cp = t.changepoints[0];
            let jump = (t.values[cp + 1][0] - t.values[cp][0]).abs();
            jump > 0.3
        });
        assert!(any_jump);
    }

    #[test]
    fn coefficient_change_respected() {
        let spec = LvSpec { changepoint_range: (2, 2), ..LvSpec::default() };
        for t in gen_lv(&spec, 10, 12).unwrap() {
            let coeffs: Vec<Vec<f64>> = t
                .segment_params
                .iter()
                .map(|p| {
                    ["alpha=", "beta=", "delta=", "gamma="]
                        .iter()
                        .map(|k| {
                            p.split_whitespace()
                                .find_map(|kv| kv.strip_prefix(k).map(|s| s.parse().unwrap()))
                                .unwrap()
                        })
                        .collect()
                })
                .collect();
            for w in coeffs.windows(2) {
                let dist: f64 = w[0]
                    .iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist >= 0.6 - 1e-9, "coefficient change {dist}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_lv(&LvSpec::default(), 3, 99).unwrap();
        let b = gen_lv(&LvSpec::default(), 3, 99).unwrap();
        assert_eq!(a, b);
    }
}
