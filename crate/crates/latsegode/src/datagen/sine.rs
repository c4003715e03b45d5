//! Sine-wave hybrid trajectories: piecewise sinusoids with per-segment
//! amplitude, frequency and phase, jump discontinuities at changepoints.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::{allocate_counts, segment_times, uniform_count, uniform_in, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSpec {
    pub amplitude_range: (f64, f64),
    pub frequency_range: (f64, f64),
    /// Duration of each smooth flow, in time units.
    pub duration_range: (f64, f64),
    /// Observations per smooth flow.
    pub obs_count_range: (usize, usize),
    /// Minimum |Δ amplitude| between consecutive flows.
    pub min_amplitude_change: f64,
    pub noise_std: f64,
    /// Inclusive range of changepoints per trajectory.
    pub changepoint_range: (usize, usize),
    /// When set, the trajectory carries exactly this many observations,
    /// split across flows proportionally to duration.
    pub samples_per_trajectory: Option<usize>,
    /// Share observation-time fractions across the dataset (batch-friendly
    /// grids); independent per-trajectory times otherwise.
    pub aligned_times: bool,
}

impl Default for SineSpec {
    fn default() -> Self {
        SineSpec {
            amplitude_range: (-8.0, 8.0),
            frequency_range: (2.0, 4.0),
            duration_range: (3.0, 5.0),
            obs_count_range: (50, 150),
            min_amplitude_change: 2.5,
            noise_std: 0.025,
            changepoint_range: (0, 2),
            samples_per_trajectory: None,
            aligned_times: true,
        }
    }
}

impl SineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(Error::invalid("noise_std must be >= 0"));
        }
        if self.obs_count_range.0 < 2 {
            return Err(Error::invalid("each flow needs at least 2 observations"));
        }
        let span = (self.amplitude_range.1 - self.amplitude_range.0).abs();
        if self.min_amplitude_change > 0.0 && span > 0.0 && self.min_amplitude_change >= span {
            return Err(Error::invalid(
                "min_amplitude_change is unsatisfiable within the amplitude range",
            ));
        }
        Ok(())
    }
}

pub fn gen_sine(spec: &SineSpec, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if count < 1 {
        return Err(Error::invalid("count must be >= 1"));
    }
    spec.validate()?;
    (0..count).map(|i| gen_one(spec, seed, i as u64)).collect()
}

fn gen_one(spec: &SineSpec, seed: u64, index: u64) -> Result<Trajectory> {
    let mut rng = rng::rng_for(seed, &[0x73696e65, index]);
    let n_cp = uniform_count(&mut rng, spec.changepoint_range);
    let n_seg = n_cp + 1;

    let durations: Vec<f64> = (0..n_seg).map(|_| uniform_in(&mut rng, spec.duration_range)).collect();
    let counts: Vec<usize> = match spec.samples_per_trajectory {
        Some(total) => allocate_counts(total, &durations),
        None => (0..n_seg).map(|_| uniform_count(&mut rng, spec.obs_count_range)).collect(),
    };

    // amplitudes with the minimum inter-flow change
    let mut amplitudes = Vec::with_capacity(n_seg);
    amplitudes.push(uniform_in(&mut rng, spec.amplitude_range));
    for j in 1..n_seg {
        let prev: f64 = amplitudes[j - 1];
        let mut tries = 0;
        let a = loop {
            let cand = uniform_in(&mut rng, spec.amplitude_range);
            if (cand - prev).abs() >= spec.min_amplitude_change || spec.min_amplitude_change <= 0.0
            {
                break cand;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::invalid(
                    "could not satisfy min_amplitude_change within the amplitude range",
                ));
            }
        };
        amplitudes.push(a);
    }

    let frequencies: Vec<f64> =
        (0..n_seg).map(|_| uniform_in(&mut rng, spec.frequency_range)).collect();
    let phases: Vec<f64> =
        (0..n_seg).map(|_| uniform_in(&mut rng, (0.0, 2.0 * std::f64::consts::PI))).collect();

    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("valid noise std");
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut changepoints = Vec::new();
    let mut segment_params = Vec::new();
    let mut start = 0.0;
    for j in 0..n_seg {
        let seg_times = segment_times(
            seed,
            index,
            j as u64,
            counts[j],
            spec.aligned_times,
            start,
            durations[j],
        );
        for &t in &seg_times {
            let eps = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            values.push(vec![amplitudes[j] * (frequencies[j] * t + phases[j]).sin() + eps]);
        }
        times.extend(seg_times);
        if j + 1 < n_seg {
            changepoints.push(times.len() - 1);
        }
        segment_params.push(format!(
            "amplitude={:.6} frequency={:.6} phase={:.6}",
            amplitudes[j], frequencies[j], phases[j]
        ));
        start += durations[j];
    }

    let n = values.len();
    let traj = Trajectory {
        times,
        values,
        mask: vec![super::MaskClass::Visible; n],
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
    fn collapsed_spec_is_exact_closed_form() {
        let spec = SineSpec {
            amplitude_range: (3.0, 3.0),
            frequency_range: (2.0, 2.0),
            noise_std: 0.0,
            changepoint_range: (0, 0),
            min_amplitude_change: 0.0,
            ..SineSpec::default()
        };
        let t = &gen_sine(&spec, 1, 4).unwrap()[0];
        let params = &t.segment_params[0];
        let phase: f64 = params
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix("phase=").map(|s| s.parse().unwrap()))
            .unwrap();
        for (time, v) in t.times.iter().zip(&t.values) {
            let want = 3.0 * (2.0 * time + phase).sin();
            assert!((v[0] - want).abs() <= 3.0 * 1e-6, "{} vs {want}", v[0]);
        }
    }

    #[test]
    fn sampled_parameters_stay_in_ranges() {
        let spec = SineSpec::default();
        let trajs = gen_sine(&spec, 200, 9).unwrap();
        for t in &trajs {
            for p in &t.segment_params {
                let get = |k: &str| -> f64 {
                    p.split_whitespace()
                        .find_map(|kv| kv.strip_prefix(k).map(|s| s.parse().unwrap()))
                        .unwrap()
                };
                let a = get("amplitude=");
                let f = get("frequency=");
                assert!((-8.0..8.0).contains(&a), "amplitude {a}");
                assert!((2.0..4.0).contains(&f), "frequency {f}");
            }
        }
    }

    #[test]
    fn consecutive_amplitudes_differ_enough() {
        let trajs = gen_sine(&SineSpec::default(), 100, 11).unwrap();
        for t in &trajs {
            let amps: Vec<f64> = t
                .segment_params
                .iter()
                .map(|p| {
                    p.split_whitespace()
                        .find_map(|kv| kv.strip_prefix("amplitude=").map(|s| s.parse().unwrap()))
                        .unwrap()
                })
                .collect();
            for w in amps.windows(2) {
                assert!((w[1] - w[0]).abs() >= 2.5 - 1e-9);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_output() {
        let a = gen_sine(&SineSpec::default(), 5, 123).unwrap();
        let b = gen_sine(&SineSpec::default(), 5, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn changepoint_labels_valid() {
        let trajs = gen_sine(&SineSpec::default(), 50, 13).unwrap();
        for t in &trajs {
            t.validate().unwrap();
            assert!(t.changepoints.len() <= 2);
        }
    }

    #[test]
    fn fixed_total_samples_allocation() {
        let spec = SineSpec { samples_per_trajectory: Some(100), ..SineSpec::default() };
        let trajs = gen_sine(&spec, 20, 17).unwrap();
        for t in &trajs {
            assert_eq!(t.len(), 100);
        }
    }
}
