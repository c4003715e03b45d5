//! Classic changepoint cost functions — RBF kernel mean-change, Gaussian
//! log-determinant, autoregressive least squares — plus linear-interpolation
//! preprocessing and the known-changepoint-count search used to benchmark
//! them fairly.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::datagen::{MaskClass, Trajectory};
use crate::error::{Error, Result};
use crate::segmentation::{CostFunction, Segmentation};

// ---- RBF kernel mean-change ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RbfBandwidth {
    Explicit(f64),
    /// γ = 1 / median of pairwise squared distances over the whole trajectory.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfCostConfig {
    pub bandwidth: RbfBandwidth,
}

impl Default for RbfCostConfig {
    fn default() -> Self {
        RbfCostConfig { bandwidth: RbfBandwidth::MedianHeuristic }
    }
}

/// Kernelized mean-change cost via the kernel trick:
/// c(I) = Σ_t k(x_t, x_t) − (1/|I|) Σ_{s,t} k(x_s, x_t).
pub struct RbfCost {
    config: RbfCostConfig,
    gamma: OnceLock<f64>,
}

impl RbfCost {
    pub fn new(config: RbfCostConfig) -> Result<Self> {
        if let RbfBandwidth::Explicit(g) = config.bandwidth {
            if g <= 0.0 {
                return Err(Error::invalid("RBF bandwidth must be > 0"));
            }
        }
        Ok(RbfCost { config, gamma: OnceLock::new() })
    }

    fn gamma_for(&self, values: &[Vec<f64>]) -> f64 {
        match self.config.bandwidth {
            RbfBandwidth::Explicit(g) => g,
            RbfBandwidth::MedianHeuristic => *self.gamma.get_or_init(|| {
                let n = values.len();
                let mut dists = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        dists.push(sq_dist(&values[i], &values[j]));
                    }
                }
                if dists.is_empty() {
                    return 1.0;
                }
                dists.sort_by(f64::total_cmp);
                let median = dists[dists.len() / 2];
                if median > 0.0 {
                    1.0 / median
                } else {
                    1.0
                }
            }),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl CostFunction for RbfCost {
    fn cost(&self, values: &[Vec<f64>], _times: &[f64], start: usize, end: usize) -> Result<f64> {
        let n = end - start + 1;
        if n < 2 {
            return Err(Error::invalid("RBF cost needs a segment of length >= 2"));
        }
        let gamma = self.gamma_for(values);
        // k(x, x) = 1, so Σ_t k(x_t, x_t) = n
        let mut gram = 0.0;
        for i in start..=end {
            gram += 1.0; // diagonal
            for j in (i + 1)..=end {
                gram += 2.0 * (-gamma * sq_dist(&values[i], &values[j])).exp();
            }
        }
        Ok(n as f64 - gram / n as f64)
    }

    fn min_segment_len(&self) -> usize {
        2
    }
}

// ---- Gaussian log-determinant ----

const NORM_RIDGE: f64 = 1e-6;

/// c(I) = |I| · log det(Σ̂_I + λI) with the empirical (maximum-likelihood)
/// covariance and a small ridge for rank safety.
pub struct NormCost {
    dim: usize,
}

impl NormCost {
    pub fn new(dim: usize) -> Self {
        NormCost { dim }
    }
}

impl CostFunction for NormCost {
    fn cost(&self, values: &[Vec<f64>], _times: &[f64], start: usize, end: usize) -> Result<f64> {
        let n = end - start + 1;
        let d = values[start].len();
        if n < d + 1 {
            return Err(Error::invalid(format!(
                "Gaussian cost needs at least dim + 1 = {} points, got {n}",
                d + 1
            )));
        }
        let mut mean = vec![0.0; d];
        for row in &values[start..=end] {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for row in &values[start..=end] {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..d {
                    cov[i * d + j] += di * (row[j] - mean[j]);
                }
            }
        }
        for (idx, c) in cov.iter_mut().enumerate() {
            *c /= n as f64;
            if idx % (d + 1) == 0 {
                *c += NORM_RIDGE;
            }
        }
        let chol = cholesky(&cov, d).ok_or_else(|| {
            Error::numerical("covariance not positive definite even after ridge")
        })?;
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[i * d + i].ln()).sum();
        Ok(n as f64 * log_det)
    }

    fn min_segment_len(&self) -> usize {
        self.dim + 1
    }
}

/// Lower-triangular Cholesky factor of a d×d SPD matrix, or None.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solve A x = b for SPD A via Cholesky.
fn solve_spd(a: &[f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, d)?;
    // forward substitution L y = b
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * y[k];
        }
        y[i] = sum / l[i * d + i];
    }
    // back substitution Lᵀ x = y
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in (i + 1)..d {
            sum -= l[k * d + i] * x[k];
        }
        x[i] = sum / l[i * d + i];
    }
    Some(x)
}

// ---- autoregressive least squares ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArCostConfig {
    /// Lag order p.
    pub order: usize,
}

impl Default for ArCostConfig {
    fn default() -> Self {
        ArCostConfig { order: 10 }
    }
}

const AR_RIDGE: f64 = 1e-8;

/// Least-squares residual of an order-p autoregression fit within the
/// segment, per data dimension (own lags only), summed. The lag vector is
/// extended with an intercept term.
pub struct ArCost {
    config: ArCostConfig,
}

impl ArCost {
    pub fn new(config: ArCostConfig) -> Result<Self> {
        if config.order < 1 {
            return Err(Error::invalid("AR order must be >= 1"));
        }
        Ok(ArCost { config })
    }
}

impl CostFunction for ArCost {
    fn cost(&self, values: &[Vec<f64>], _times: &[f64], start: usize, end: usize) -> Result<f64> {
        let p = self.config.order;
        let n = end - start + 1;
        if n < p + 2 {
            return Err(Error::invalid(format!(
                "AR cost needs a segment of length >= p + 2 = {}, got {n}",
                p + 2
            )));
        }
        let d = values[start].len();
        let cols = p + 1; // lags + intercept
        let mut total = 0.0;
        for dim in 0..d {
            // normal equations over rows t = start+p ..= end
            let mut ata = vec![0.0; cols * cols];
            let mut aty = vec![0.0; cols];
            let mut row = vec![0.0; cols];
            for t in (start + p)..=end {
                for (k, slot) in row.iter_mut().enumerate().take(p) {
                    *slot = values[t - 1 - k][dim];
                }
                row[p] = 1.0;
                let y = values[t][dim];
                for i in 0..cols {
                    aty[i] += row[i] * y;
                    for j in 0..cols {
                        ata[i * cols + j] += row[i] * row[j];
                    }
                }
            }
            // plain normal equations first; the ridge only rescues rank
            // deficiency so exact processes still fit to machine precision
            let delta = match solve_spd(&ata, &aty, cols) {
                Some(d) => d,
                None => {
                    let mut ridged = ata.clone();
                    for i in 0..cols {
                        ridged[i * cols + i] += AR_RIDGE;
                    }
                    solve_spd(&ridged, &aty, cols)
                        .ok_or_else(|| Error::numerical("AR normal equations not solvable"))?
                }
            };
            // direct residual pass — the quadratic-form identity cancels
            // catastrophically on near-exact fits
            let mut rss = 0.0;
            for t in (start + p)..=end {
                let mut pred = delta[p]; // intercept
                for k in 0..p {
                    pred += delta[k] * values[t - 1 - k][dim];
                }
                let r = values[t][dim] - pred;
                rss += r * r;
            }
            total += rss;
        }
        Ok(total)
    }

    fn min_segment_len(&self) -> usize {
        self.config.order + 2
    }
}

// ---- linear interpolation preprocessing ----

/// Visible points resampled onto a uniform grid, with the mapping back to
/// original indices needed to compare detected changepoints against labels.
#[derive(Debug, Clone)]
pub struct GridInterpolation {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    original_times: Vec<f64>,
}

impl GridInterpolation {
    /// Nearest original observation index for a grid index.
    pub fn map_to_original(&self, grid_index: usize) -> usize {
        let t = self.times[grid_index];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &ot) in self.original_times.iter().enumerate() {
            let d = (ot - t).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Linearly interpolate the visible points onto a `grid_size`-point uniform
/// grid spanning their time range.
pub fn interpolate_to_grid(traj: &Trajectory, grid_size: usize) -> Result<GridInterpolation> {
    if grid_size < 2 {
        return Err(Error::invalid("grid size must be >= 2"));
    }
    let visible: Vec<(f64, &Vec<f64>)> = traj
        .times
        .iter()
        .zip(&traj.values)
        .zip(&traj.mask)
        .filter(|(_, &m)| m == MaskClass::Visible)
        .map(|((t, v), _)| (*t, v))
        .collect();
    if visible.len() < 2 {
        return Err(Error::invalid("interpolation needs at least 2 visible observations"));
    }
    let d = visible[0].1.len();
    let (t_first, t_last) = (visible[0].0, visible[visible.len() - 1].0);
    let mut times = Vec::with_capacity(grid_size);
    let mut values = Vec::with_capacity(grid_size);
    let mut seg = 0usize; // index into visible such that t ∈ [t_seg, t_{seg+1}]
    for g in 0..grid_size {
        let t = t_first + (t_last - t_first) * g as f64 / (grid_size - 1) as f64;
        while seg + 2 < visible.len() && visible[seg + 1].0 < t {
            seg += 1;
        }
        let (t0, v0) = (visible[seg].0, visible[seg].1);
        let (t1, v1) = (visible[seg + 1].0, visible[seg + 1].1);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let row: Vec<f64> = (0..d).map(|k| v0[k] + w * (v1[k] - v0[k])).collect();
        times.push(t);
        values.push(row);
    }
    Ok(GridInterpolation { times, values, original_times: traj.times.clone() })
}

// ---- exact search with known changepoint count ----

/// Minimum-cost segmentation with exactly `k` changepoints (β excluded),
/// by dynamic programming over (consumed points, segments used).
pub fn segment_known_k(
    values: &[Vec<f64>],
    times: &[f64],
    cost: &dyn CostFunction,
    k: usize,
    min_segment_len: usize,
) -> Result<(Segmentation, f64)> {
    if k < 1 {
        return Err(Error::invalid("known-k search needs k >= 1"));
    }
    let n = values.len();
    let min_len = min_segment_len.max(cost.min_segment_len()).max(1);
    let segments = k + 1;
    if segments * min_len > n {
        return Err(Error::invalid(format!(
            "k = {k} changepoints infeasible: {segments} segments × min length {min_len} > {n}"
        )));
    }

    let inf = f64::INFINITY;
    // b[m][p]: best cost of splitting the first p points into m segments
    let mut b = vec![vec![inf; n + 1]; segments + 1];
    let mut back = vec![vec![usize::MAX; n + 1]; segments + 1];
    for p in min_len..=n {
        b[1][p] = cost.cost(values, times, 0, p - 1)?;
    }
    for m in 2..=segments {
        for p in (m * min_len)..=n {
            for q in ((m - 1) * min_len)..=(p - min_len) {
                if !b[m - 1][q].is_finite() {
                    continue;
                }
                let total = b[m - 1][q] + cost.cost(values, times, q, p - 1)?;
                if total < b[m][p] {
                    b[m][p] = total;
                    back[m][p] = q;
                }
            }
        }
    }
    if !b[segments][n].is_finite() {
        return Err(Error::invalid("no feasible segmentation with the requested k"));
    }
    let mut cps = Vec::with_capacity(k);
    let mut p = n;
    for m in (2..=segments).rev() {
        let q = back[m][p];
        cps.push(q - 1);
        p = q;
    }
    cps.reverse();
    Ok((Segmentation::new(cps, n)?, b[segments][n]))
}
