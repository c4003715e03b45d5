//! Segment-wise reconstruction: encode each segment's observations, seed the
//! latent dynamics from the posterior mean, decode at that segment's query
//! times, and concatenate. The output may jump at changepoints by design.

use crate::error::{Error, Result};
use crate::latent_ode::LatentOdeModel;
use crate::ode::SolverConfig;

use super::Segmentation;

/// Predict data values at `query_times` given observed points and a
/// segmentation over those points.
///
/// Query times are assigned to the latest segment whose first observation is
/// not after them; times before the first segment's start extrapolate that
/// segment backwards, and times past the last observation continue the last
/// segment's dynamical mode.
pub fn reconstruct(
    model: &LatentOdeModel,
    values: &[Vec<f64>],
    times: &[f64],
    segmentation: &Segmentation,
    query_times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    if values.is_empty() || values.len() != times.len() {
        return Err(Error::invalid("reconstruct needs non-empty matching values/times"));
    }
    if query_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("query times must be strictly increasing"));
    }
    let n = values.len();
    let segments = segmentation.segments(n);
    for (s, e) in &segments {
        if e < s {
            return Err(Error::DegenerateSegment(format!("segment ({s}, {e}) is empty")));
        }
    }

    // segment i owns queries in [start_time_i, start_time_{i+1}); the first
    // segment also owns everything earlier
    let starts: Vec<f64> = segments.iter().map(|&(s, _)| times[s]).collect();
    let assign = |q: f64| -> usize {
        match starts[1..].iter().position(|&b| q < b) {
            Some(i) => i,
            None => segments.len() - 1,
        }
    };

    let mut out: Vec<Option<Vec<f64>>> = vec![None; query_times.len()];
    for (i, &(s, e)) in segments.iter().enumerate() {
        let assigned: Vec<usize> =
            (0..query_times.len()).filter(|&k| assign(query_times[k]) == i).collect();
        if assigned.is_empty() {
            continue;
        }
        let t0 = times[s];
        let seg_times: Vec<f64> = times[s..=e].iter().map(|t| t - t0).collect();
        let seg_values = values[s..=e].to_vec();
        let posterior = crate::latent_ode::encode(model, &seg_values, &seg_times)?;
        let rel_queries: Vec<f64> = assigned.iter().map(|&k| query_times[k] - t0).collect();
        let decoded =
            crate::latent_ode::decode_around(model, &posterior.mean, &rel_queries, solver)?;
        for (&k, d) in assigned.iter().zip(decoded.into_iter()) {
            out[k] = Some(d);
        }
    }

    Ok(out.into_iter().map(|o| o.expect("every query assigned")).collect())
}

/// Restrict a segmentation labelled on a full index set to a subset of
/// indices (e.g. the visible points after masking). Errors when a segment
/// would end up with no points.
pub fn restrict_segmentation(
    segmentation: &Segmentation,
    n_full: usize,
    kept_indices: &[usize],
) -> Result<Segmentation> {
    if kept_indices.is_empty() {
        return Err(Error::DegenerateSegment("no points survive the restriction".into()));
    }
    let segments = segmentation.segments(n_full);
    let mut counts = vec![0usize; segments.len()];
    for &idx in kept_indices {
        counts[segmentation.segment_of(idx)] += 1;
    }
    if let Some(pos) = counts.iter().position(|&c| c == 0) {
        let (s, e) = segments[pos];
        return Err(Error::DegenerateSegment(format!(
            "segment covering original indices {s}..={e} has no points after masking"
        )));
    }
    let mut cps = Vec::new();
    let mut acc = 0;
    for &c in counts.iter().take(counts.len() - 1) {
        acc += c;
        cps.push(acc - 1);
    }
    Segmentation::new(cps, kept_indices.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent_ode::testkit::linear_gaussian_toy;
    use crate::latent_ode::{encode, decode};

    fn toy_data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let values = times.iter().map(|&t| vec![(3.0 * t).sin()]).collect();
        (values, times)
    }

    #[test]
    fn single_segment_matches_plain_reconstruction() {
        let model = linear_gaussian_toy(0.5);
        let (values, times) = toy_data(8);
        let seg = Segmentation::single_segment();
        let got = reconstruct(&model, &values, &times, &seg, &times, &model.config.latent_solver)
            .unwrap();

        // reference: encode whole trajectory, decode posterior mean
        let rel: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
        let posterior = encode(&model, &values, &rel).unwrap();
        let want =
            decode(&model, &posterior.mean, &rel, &model.config.latent_solver).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn queries_before_a_later_segment_use_the_earlier_one() {
        let model = linear_gaussian_toy(0.5);
        let (values, times) = toy_data(10);
        let seg = Segmentation::new(vec![4], 10).unwrap();
        // query strictly inside segment 0's span
        let q = [times[1], times[3]];
        let got = reconstruct(&model, &values, &times, &seg, &q, &model.config.latent_solver)
            .unwrap();

        // reference: reconstruct segment 0 alone
        let seg0_vals = values[..=4].to_vec();
        let seg0_times = times[..=4].to_vec();
        let alone = reconstruct(
            &model,
            &seg0_vals,
            &seg0_times,
            &Segmentation::single_segment(),
            &q,
            &model.config.latent_solver,
        )
        .unwrap();
        for (a, b) in got.iter().zip(&alone) {
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn extrapolation_continues_last_segment() {
        let model = linear_gaussian_toy(0.5);
        let (values, times) = toy_data(10);
        let seg = Segmentation::new(vec![4], 10).unwrap();
        let q = [times[9] + 0.5, times[9] + 1.0];
        let got = reconstruct(&model, &values, &times, &seg, &q, &model.config.latent_solver)
            .unwrap();
        let seg1_vals = values[5..].to_vec();
        let seg1_times = times[5..].to_vec();
        let alone = reconstruct(
            &model,
            &seg1_vals,
            &seg1_times,
            &Segmentation::single_segment(),
            &q,
            &model.config.latent_solver,
        )
        .unwrap();
        for (a, b) in got.iter().zip(&alone) {
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn restriction_maps_indices_and_detects_empty_segments() {
        let seg = Segmentation::new(vec![3, 7], 12).unwrap();
        // keep two points per segment
        let kept = vec![0, 2, 4, 6, 8, 11];
        let restricted = restrict_segmentation(&seg, 12, &kept).unwrap();
        assert_eq!(restricted.changepoints(), &[1, 3]);

        // drop the middle segment entirely
        let kept = vec![0, 2, 8, 11];
        match restrict_segmentation(&seg, 12, &kept) {
            Err(Error::DegenerateSegment(_)) => {}
            other => panic!("expected DegenerateSegment, got {other:?}"),
        }
    }
}
