//! Synthetic hybrid-trajectory factories and the trajectory container shared
//! across the crate: irregularly sampled observations, a visibility mask, and
//! ground-truth changepoint labels.

mod csvio;
mod lv;
mod sine;

pub use csvio::{
    format_f64, read_dataset_split, read_trajectory_csv, write_dataset_split,
    write_trajectory_csv, DatasetManifest, CSV_FORMAT_VERSION,
};
pub use lv::{gen_lv, LvSpec, LvVariant};
pub use sine::{gen_sine, SineSpec};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskClass {
    /// Available during training and at segmentation time.
    Visible,
    /// Internal point held out for interpolation scoring.
    InterpHeldout,
    /// Trailing point held out for extrapolation scoring.
    ExtrapHeldout,
}

impl MaskClass {
    pub fn to_code(self) -> u8 {
        match self {
            MaskClass::Visible => 0,
            MaskClass::InterpHeldout => 1,
            MaskClass::ExtrapHeldout => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(MaskClass::Visible),
            1 => Ok(MaskClass::InterpHeldout),
            2 => Ok(MaskClass::ExtrapHeldout),
            other => Err(Error::invalid(format!("unknown mask code {other}"))),
        }
    }
}

/// One multivariate time series with observation mask and segment labels.
///
/// Changepoints use the crate-wide convention: a changepoint is the 0-based
/// index of the *last* observation of a segment, so valid values lie in
/// `[0, len − 2]` and the final index is never a changepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<MaskClass>,
    pub changepoints: Vec<usize>,
    /// Per-segment generator parameters, for diagnostics only (not part of
    /// the CSV contract).
    pub segment_params: Vec<String>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        let n = times.len();
        Trajectory {
            times,
            values,
            mask: vec![MaskClass::Visible; n],
            changepoints: Vec::new(),
            segment_params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map(Vec::len).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.values.len() != n || self.mask.len() != n {
            return Err(Error::invalid("times, values and mask lengths must agree"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        let d = self.dim();
        if self.values.iter().any(|v| v.len() != d) {
            return Err(Error::invalid("all value rows must share one dimension"));
        }
        if self.changepoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("changepoints must be strictly increasing"));
        }
        if let Some(&last) = self.changepoints.last() {
            if n < 2 || last > n - 2 {
                return Err(Error::invalid("changepoints must lie in [0, len - 2]"));
            }
        }
        Ok(())
    }

    /// Times/values/original-indices of the visible observations.
    pub fn visible(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<usize>) {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut idx = Vec::new();
        for i in 0..self.len() {
            if self.mask[i] == MaskClass::Visible {
                times.push(self.times[i]);
                values.push(self.values[i].clone());
                idx.push(i);
            }
        }
        (times, values, idx)
    }

    /// Split at the labelled changepoints. Each returned segment is a
    /// standalone trajectory with times re-based to start at zero and no
    /// internal changepoints; values are copied verbatim.
    pub fn extract_sdfs(&self) -> Vec<Trajectory> {
        let n = self.len();
        let mut boundaries = Vec::with_capacity(self.changepoints.len() + 2);
        boundaries.push(0usize);
        boundaries.extend(self.changepoints.iter().map(|&c| c + 1));
        boundaries.push(n);
        boundaries
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                let (s, e) = (w[0], w[1]);
                let t0 = self.times[s];
                Trajectory {
                    times: self.times[s..e].iter().map(|t| t - t0).collect(),
                    values: self.values[s..e].to_vec(),
                    mask: self.mask[s..e].to_vec(),
                    changepoints: Vec::new(),
                    segment_params: self.segment_params.get(j).cloned().into_iter().collect(),
                }
            })
            .collect()
    }
}

/// Hold out the last 20% of timepoints for extrapolation and 25% of the
/// remaining internal timepoints for interpolation, uniformly at random.
///
/// The internal pattern is a pure function of `(seed, len)`: passing one
/// shared seed for a whole dataset reproduces the shared-mask protocol, while
/// per-trajectory derived seeds give independent patterns.
pub fn apply_masking(traj: &Trajectory, seed: u64) -> Result<Trajectory> {
    let n = traj.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "masking needs at least 10 observations, got {n}"
        )));
    }
    let n_extrap = (0.2 * n as f64).round() as usize;
    let internal = n - n_extrap;
    let n_interp = (0.25 * internal as f64).round() as usize;

    let mut mask = vec![MaskClass::Visible; n];
    for m in mask.iter_mut().skip(internal) {
        *m = MaskClass::ExtrapHeldout;
    }

    // partial Fisher-Yates over the internal indices
    let mut rng = rng::rng_for(seed, &[n as u64, 0x6d61736b]);
    let mut pool: Vec<usize> = (0..internal).collect();
    for k in 0..n_interp {
        let j = rng.random_range(k..pool.len());
        pool.swap(k, j);
        mask[pool[k]] = MaskClass::InterpHeldout;
    }

    let mut out = traj.clone();
    out.mask = mask;
    Ok(out)
}

/// Draw from a possibly-collapsed f64 range.
pub(crate) fn uniform_in(rng: &mut rng::Rng, range: (f64, f64)) -> f64 {
    if range.1 <= range.0 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

pub(crate) fn uniform_count(rng: &mut rng::Rng, range: (usize, usize)) -> usize {
    if range.1 <= range.0 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

/// Sorted observation times for one segment slot. With `aligned` set the
/// fractions depend only on `(seed, slot, count)`, so every trajectory in a
/// dataset sharing that slot shape reuses the same relative positions.
pub(crate) fn segment_times(
    master_seed: u64,
    traj_index: u64,
    slot: u64,
    count: usize,
    aligned: bool,
    start: f64,
    duration: f64,
) -> Vec<f64> {
    let mut rng = if aligned {
        rng::rng_for(master_seed, &[0x616c69676e, slot, count as u64])
    } else {
        rng::rng_for(master_seed, &[0x74696d6573, traj_index, slot])
    };
    // strictly positive fractions keep segment boundaries strictly ordered
    let mut fracs: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
    fracs.retain(|&f| f > 0.0);
    fracs.sort_by(f64::total_cmp);
    fracs.dedup();
    while fracs.len() < count {
        let f: f64 = rng.random();
        if f > 0.0 {
            fracs.push(f);
        }
        fracs.sort_by(f64::total_cmp);
        fracs.dedup();
    }
    fracs.into_iter().map(|f| start + f * duration).collect()
}

/// Allocate a fixed total observation count across segments proportionally
/// to their durations (largest-remainder rounding, minimum 2 per segment).
pub(crate) fn allocate_counts(total: usize, durations: &[f64]) -> Vec<usize> {
    let k = durations.len();
    let total = total.max(2 * k);
    let sum: f64 = durations.iter().sum();
    let exact: Vec<f64> = durations.iter().map(|d| d / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x.floor() as usize).max(2)).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor()))
    });
    let mut i = 0;
    while assigned < total {
        counts[order[i % k]] += 1;
        assigned += 1;
        i += 1;
    }
    while assigned > total {
        let j = order[i % k];
        if counts[j] > 2 {
            counts[j] -= 1;
            assigned -= 1;
        }
        i += 1;
    }
    counts
}
