//! Offline changepoint search: exact optimal partitioning, PELT with its
//! pruned candidate set, marginal-likelihood segment costs, and segment-wise
//! reconstruction.

mod cost;
mod reconstruct;
mod search;

pub use cost::{joint_log_probability, ConjugateMeanCost, CostFunction, MarginalCost, TableCost};
pub use reconstruct::{reconstruct, restrict_segmentation};
pub use search::{optimal_partition, pelt_segment, PeltConfig, SearchOutcome, SearchStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered set of changepoints partitioning `n` observations into
/// contiguous segments.
///
/// A changepoint is the 0-based index of the last observation of a segment;
/// the final index `n − 1` is never a changepoint. Consecutive segments obey
/// `start_{i+1} = end_i + 1` by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    changepoints: Vec<usize>,
}

impl Segmentation {
    pub fn new(changepoints: Vec<usize>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("segmentation needs at least one observation"));
        }
        if changepoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("changepoints must be strictly increasing"));
        }
        if let Some(&last) = changepoints.last() {
            if last + 1 >= n {
                return Err(Error::invalid(format!(
                    "changepoint {last} leaves an empty final segment for n = {n}"
                )));
            }
        }
        Ok(Segmentation { changepoints })
    }

    pub fn single_segment() -> Self {
        Segmentation { changepoints: Vec::new() }
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    pub fn n_changepoints(&self) -> usize {
        self.changepoints.len()
    }

    /// Inclusive `(start, end)` index ranges of all segments.
    pub fn segments(&self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.changepoints.len() + 1);
        let mut start = 0;
        for &cp in &self.changepoints {
            out.push((start, cp));
            start = cp + 1;
        }
        out.push((start, n - 1));
        out
    }

    /// Index of the segment containing observation `i`.
    pub fn segment_of(&self, i: usize) -> usize {
        self.changepoints.partition_point(|&cp| cp < i)
    }

    /// Shortest segment length.
    pub fn min_segment_len(&self, n: usize) -> usize {
        self.segments(n).iter().map(|(s, e)| e - s + 1).min().unwrap_or(0)
    }
}
