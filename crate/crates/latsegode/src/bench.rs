//! Benchmark harness: run the marginal-likelihood segmenter and/or the
//! classic known-k baselines over a labelled test set, collect per-trajectory
//! and aggregate metrics, and emit plot data.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    interpolate_to_grid, segment_known_k, ArCost, ArCostConfig, NormCost, RbfCost, RbfCostConfig,
};
use crate::datagen::{MaskClass, Trajectory};
use crate::error::{Error, Result};
use crate::latent_ode::{LatentOdeModel, MarginalLikelihoodConfig};
use crate::metrics::{mse_split, seg_metrics, ReconMetrics, SegMetrics};
use crate::rng::derive_seed;
use crate::segmentation::{
    pelt_segment, reconstruct, CostFunction, MarginalCost, PeltConfig, SearchStats, Segmentation,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LatSegOde,
    /// Vanilla no-segmentation mode: one segment for the whole trajectory.
    LatentOde,
    RptRbf,
    RptAr,
    RptNorm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::LatSegOde => "latsegode",
            Method::LatentOde => "latent_ode",
            Method::RptRbf => "rpt_rbf",
            Method::RptAr => "rpt_ar",
            Method::RptNorm => "rpt_norm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "latsegode" => Ok(Method::LatSegOde),
            "latent_ode" | "latentode" | "no_segment" => Ok(Method::LatentOde),
            "rbf" | "rpt_rbf" => Ok(Method::RptRbf),
            "ar" | "rpt_ar" => Ok(Method::RptAr),
            "norm" | "rpt_norm" => Ok(Method::RptNorm),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Method::LatSegOde | Method::LatentOde)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub pelt: PeltConfig,
    /// Monte Carlo samples for the marginal-likelihood cost.
    pub ml_samples: usize,
    /// Uniform grid size for baseline interpolation; `None` uses each
    /// trajectory's own length.
    pub grid_size: Option<usize>,
    pub f1_tolerance: usize,
    pub ar_order: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::LatSegOde, Method::RptRbf, Method::RptAr, Method::RptNorm],
            pelt: PeltConfig::default(),
            ml_samples: 100,
            grid_size: None,
            f1_tolerance: 10,
            ar_order: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub trajectory: usize,
    pub method: String,
    pub true_changepoints: Vec<usize>,
    pub predicted_changepoints: Vec<usize>,
    pub seg: SegMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon: Option<ReconMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_log_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_stats: Option<SearchStats>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub n_trajectories: usize,
    pub mean_rand_index: f64,
    pub mean_f1: f64,
    /// Mean over trajectories where the Hausdorff distance is defined
    /// (both sides have at least one changepoint).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_hausdorff: Option<f64>,
    pub hausdorff_defined: usize,
    pub mean_annotation_error: f64,
    pub mean_abs_annotation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_total_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_interp_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_extrap_mse: Option<f64>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub seed: u64,
    pub config: BenchConfig,
    pub rows: Vec<TrajectoryRow>,
    pub aggregates: Vec<MethodAggregate>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

/// Segment one trajectory's visible points with the marginal-likelihood cost
/// and reconstruct at every original time. `single_segment` forces the
/// vanilla no-segmentation mode.
pub fn evaluate_latsegode(
    model: &LatentOdeModel,
    traj: &Trajectory,
    index: usize,
    config: &BenchConfig,
    single_segment: bool,
) -> Result<TrajectoryRow> {
    let start = Instant::now();
    let (vis_times, vis_values, vis_idx) = traj.visible();
    if vis_times.len() < 2 {
        return Err(Error::invalid(format!("trajectory {index} has < 2 visible points")));
    }
    let ml = MarginalLikelihoodConfig::new(
        config.ml_samples,
        model.config.obs_variance,
        derive_seed(config.seed, &[0x636f7374, index as u64]),
    );

    let (seg_vis, objective, stats) = if single_segment {
        (Segmentation::single_segment(), None, None)
    } else {
        let cost = MarginalCost::new(model, ml, config.pelt.time_round_decimals)?;
        let out = pelt_segment(&vis_values, &vis_times, &cost, &config.pelt)?;
        (out.segmentation, Some(out.objective), Some(out.stats))
    };

    // map visible-space changepoints to original indices for the metrics
    let pred_full: Vec<usize> = seg_vis.changepoints().iter().map(|&c| vis_idx[c]).collect();
    let pred_seg_full = Segmentation::new(pred_full.clone(), traj.len())?;
    let truth = Segmentation::new(traj.changepoints.clone(), traj.len())?;

    let predictions = reconstruct(
        model,
        &vis_values,
        &vis_times,
        &seg_vis,
        &traj.times,
        &model.config.latent_solver,
    )?;
    let pred_rows: Vec<Option<Vec<f64>>> = predictions.into_iter().map(Some).collect();
    let recon = mse_split(&traj.values, &pred_rows, &traj.mask)?;
    let seg = seg_metrics(&truth, &pred_seg_full, traj.len(), config.f1_tolerance)?;

    let joint = objective
        .map(|obj| -(obj - config.pelt.beta * seg_vis.n_changepoints() as f64));

    Ok(TrajectoryRow {
        trajectory: index,
        method: if single_segment { Method::LatentOde } else { Method::LatSegOde }
            .name()
            .to_string(),
        true_changepoints: traj.changepoints.clone(),
        predicted_changepoints: pred_full,
        seg,
        recon: Some(recon),
        objective,
        joint_log_probability: joint,
        search_stats: stats,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Reconstruction rows for plot emission (prediction at every original time).
pub fn latsegode_predictions(
    model: &LatentOdeModel,
    traj: &Trajectory,
    index: usize,
    config: &BenchConfig,
    single_segment: bool,
) -> Result<(Segmentation, Vec<Vec<f64>>)> {
    let (vis_times, vis_values, _) = traj.visible();
    let ml = MarginalLikelihoodConfig::new(
        config.ml_samples,
        model.config.obs_variance,
        derive_seed(config.seed, &[0x636f7374, index as u64]),
    );
    let seg_vis = if single_segment {
        Segmentation::single_segment()
    } else {
        let cost = MarginalCost::new(model, ml, config.pelt.time_round_decimals)?;
        pelt_segment(&vis_values, &vis_times, &cost, &config.pelt)?.segmentation
    };
    let predictions = reconstruct(
        model,
        &vis_values,
        &vis_times,
        &seg_vis,
        &traj.times,
        &model.config.latent_solver,
    )?;
    Ok((seg_vis, predictions))
}

/// Run one classic baseline with the true changepoint count on the
/// interpolation grid. Returns None for zero-changepoint trajectories, which
/// are excluded from the baseline comparison.
pub fn evaluate_baseline(
    method: Method,
    traj: &Trajectory,
    index: usize,
    config: &BenchConfig,
) -> Result<Option<TrajectoryRow>> {
    let k = traj.changepoints.len();
    if k == 0 {
        return Ok(None);
    }
    let start = Instant::now();
    let grid_size = config.grid_size.unwrap_or(traj.len());
    let grid = interpolate_to_grid(traj, grid_size)?;
    let grid_times: Vec<f64> = grid.times.clone();

    let cost: Box<dyn CostFunction> = match method {
        Method::RptRbf => Box::new(RbfCost::new(RbfCostConfig::default())?),
        Method::RptAr => Box::new(ArCost::new(ArCostConfig { order: config.ar_order })?),
        Method::RptNorm => Box::new(NormCost::new(traj.dim())),
        _ => return Err(Error::Config("evaluate_baseline expects a baseline method".into())),
    };
    let (seg_grid, objective) = segment_known_k(
        &grid.values,
        &grid_times,
        cost.as_ref(),
        k,
        config.pelt.min_segment_len,
    )?;

    let pred_full: Vec<usize> = {
        let mut mapped: Vec<usize> =
            seg_grid.changepoints().iter().map(|&c| grid.map_to_original(c)).collect();
        mapped.sort_unstable();
        mapped.dedup();
        mapped.retain(|&c| c + 1 < traj.len());
        mapped
    };
    let pred_seg = Segmentation::new(pred_full.clone(), traj.len())?;
    let truth = Segmentation::new(traj.changepoints.clone(), traj.len())?;
    let seg = seg_metrics(&truth, &pred_seg, traj.len(), config.f1_tolerance)?;

    Ok(Some(TrajectoryRow {
        trajectory: index,
        method: method.name().to_string(),
        true_changepoints: traj.changepoints.clone(),
        predicted_changepoints: pred_full,
        seg,
        recon: None,
        objective: Some(objective),
        joint_log_probability: None,
        search_stats: None,
        runtime_secs: start.elapsed().as_secs_f64(),
    }))
}

fn aggregate(method: &str, rows: &[&TrajectoryRow]) -> MethodAggregate {
    let n = rows.len();
    let mean = |xs: &mut dyn Iterator<Item = f64>| -> (f64, usize) {
        let collected: Vec<f64> = xs.collect();
        if collected.is_empty() {
            (f64::NAN, 0)
        } else {
            (collected.iter().sum::<f64>() / collected.len() as f64, collected.len())
        }
    };
    let (rand, _) = mean(&mut rows.iter().map(|r| r.seg.rand_index));
    let (f1, _) = mean(&mut rows.iter().map(|r| r.seg.f1_score));
    let (haus, haus_n) = mean(&mut rows.iter().filter_map(|r| r.seg.hausdorff));
    let (annot, _) = mean(&mut rows.iter().map(|r| r.seg.annotation_error as f64));
    let (abs_annot, _) = mean(&mut rows.iter().map(|r| r.seg.annotation_error.unsigned_abs() as f64));
    let (total, total_n) = mean(&mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.total_mse)));
    let (interp, interp_n) =
        mean(&mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.interp_mse)));
    let (extrap, extrap_n) =
        mean(&mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.extrap_mse)));
    MethodAggregate {
        method: method.to_string(),
        n_trajectories: n,
        mean_rand_index: rand,
        mean_f1: f1,
        mean_hausdorff: (haus_n > 0).then_some(haus),
        hausdorff_defined: haus_n,
        mean_annotation_error: annot,
        mean_abs_annotation_error: abs_annot,
        mean_total_mse: (total_n > 0).then_some(total),
        mean_interp_mse: (interp_n > 0).then_some(interp),
        mean_extrap_mse: (extrap_n > 0).then_some(extrap),
        runtime_secs: rows.iter().map(|r| r.runtime_secs).sum(),
    }
}

/// Evaluate every configured method over the test set.
pub fn run_benchmark(
    model: Option<&LatentOdeModel>,
    test_set: &[Trajectory],
    config: &BenchConfig,
) -> Result<BenchmarkReport> {
    if test_set.is_empty() {
        return Err(Error::invalid("benchmark needs at least one test trajectory"));
    }
    if config.methods.iter().any(Method::needs_model) && model.is_none() {
        return Err(Error::Config("the selected methods require a trained model checkpoint".into()));
    }

    let mut timings = BTreeMap::new();
    let mut rows: Vec<TrajectoryRow> = Vec::new();

    for &method in &config.methods {
        let phase = Instant::now();
        let method_rows: Vec<Result<Option<TrajectoryRow>>> = test_set
            .par_iter()
            .enumerate()
            .map(|(i, traj)| match method {
                Method::LatSegOde => {
                    evaluate_latsegode(model.unwrap(), traj, i, config, false).map(Some)
                }
                Method::LatentOde => {
                    evaluate_latsegode(model.unwrap(), traj, i, config, true).map(Some)
                }
                _ => evaluate_baseline(method, traj, i, config),
            })
            .collect();
        for r in method_rows {
            if let Some(row) = r? {
                rows.push(row);
            }
        }
        timings.insert(method.name().to_string(), phase.elapsed().as_secs_f64());
    }

    let mut aggregates = Vec::new();
    for &method in &config.methods {
        let name = method.name();
        let method_rows: Vec<&TrajectoryRow> =
            rows.iter().filter(|r| r.method == name).collect();
        if !method_rows.is_empty() {
            aggregates.push(aggregate(name, &method_rows));
        }
    }

    Ok(BenchmarkReport {
        format_version: REPORT_VERSION,
        seed: config.seed,
        config: config.clone(),
        rows,
        aggregates,
        timings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KSweepRow {
    pub pruning_k: f64,
    pub mean_rand_index: f64,
    pub mean_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_hausdorff: Option<f64>,
    pub mean_abs_annotation_error: f64,
    /// Per-trajectory PELT objectives, index-aligned with the test set.
    pub objectives: Vec<f64>,
    pub pruned_candidates: Vec<usize>,
    pub runtime_secs: f64,
}

/// Re-run the marginal-likelihood segmenter across a grid of pruning
/// constants on a fixed model and test set.
pub fn run_k_sweep(
    model: &LatentOdeModel,
    test_set: &[Trajectory],
    ks: &[f64],
    config: &BenchConfig,
) -> Result<Vec<KSweepRow>> {
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let phase = Instant::now();
        let mut cfg = config.clone();
        cfg.pelt.pruning_k = k;
        cfg.methods = vec![Method::LatSegOde];
        let report = run_benchmark(Some(model), test_set, &cfg)?;
        let rows = &report.rows;
        let agg = &report.aggregates[0];
        out.push(KSweepRow {
            pruning_k: k,
            mean_rand_index: agg.mean_rand_index,
            mean_f1: agg.mean_f1,
            mean_hausdorff: agg.mean_hausdorff,
            mean_abs_annotation_error: agg.mean_abs_annotation_error,
            objectives: rows.iter().map(|r| r.objective.unwrap_or(f64::NAN)).collect(),
            pruned_candidates: rows
                .iter()
                .map(|r| r.search_stats.map(|s| s.pruned_candidates).unwrap_or(0))
                .collect(),
            runtime_secs: phase.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

/// Plot data for one trajectory: truth/prediction overlay plus segment bands
/// for truth and prediction.
pub fn emit_trajectory_plot(
    dir: &std::path::Path,
    stem: &str,
    traj: &Trajectory,
    predictions: &[Vec<f64>],
    pred_seg_full: &Segmentation,
) -> Result<()> {
    use crate::plot::{band_color, Band, LinePlot, Series};
    use std::io::Write as _;

    std::fs::create_dir_all(dir)?;
    // CSV: t, truth dims, prediction dims, mask
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    let d = traj.dim();
    let tcols: Vec<String> = (0..d).map(|i| format!("truth_{i}")).collect();
    let pcols: Vec<String> = (0..d).map(|i| format!("pred_{i}")).collect();
    writeln!(w, "t,{},{},mask", tcols.join(","), pcols.join(","))?;
    for i in 0..traj.len() {
        let tv: Vec<String> = traj.values[i].iter().map(|x| format!("{x:.9}")).collect();
        let pv: Vec<String> = predictions[i].iter().map(|x| format!("{x:.9}")).collect();
        writeln!(
            w,
            "{:.9},{},{},{}",
            traj.times[i],
            tv.join(","),
            pv.join(","),
            traj.mask[i].to_code()
        )?;
    }
    w.flush()?;

    // segment band table
    let bands_path = dir.join(format!("{stem}_segments.csv"));
    let mut w = std::io::BufWriter::new(std::fs::File::create(&bands_path)?);
    writeln!(w, "which,segment,start_index,end_index,start_time,end_time")?;
    for (which, seg) in [
        ("truth", &Segmentation::new(traj.changepoints.clone(), traj.len())?),
        ("predicted", pred_seg_full),
    ] {
        for (j, (s, e)) in seg.segments(traj.len()).into_iter().enumerate() {
            writeln!(
                w,
                "{which},{j},{s},{e},{:.9},{:.9}",
                traj.times[s], traj.times[e]
            )?;
        }
    }
    w.flush()?;

    // SVG overlay (first dimension)
    let mut plot = LinePlot::new(format!("{stem}: truth vs prediction"));
    for (j, (s, e)) in pred_seg_full.segments(traj.len()).into_iter().enumerate() {
        plot.bands.push(Band {
            x0: traj.times[s],
            x1: traj.times[e],
            color: band_color(j).to_string(),
        });
    }
    plot.series.push(Series {
        label: "observed".into(),
        points: traj
            .times
            .iter()
            .zip(&traj.values)
            .zip(&traj.mask)
            .filter(|(_, &m)| m == MaskClass::Visible)
            .map(|((t, v), _)| (*t, v[0]))
            .collect(),
        color: "#222222".into(),
        scatter: true,
    });
    plot.series.push(Series {
        label: "truth".into(),
        points: traj.times.iter().zip(&traj.values).map(|(t, v)| (*t, v[0])).collect(),
        color: "#999999".into(),
        scatter: false,
    });
    plot.series.push(Series {
        label: "prediction".into(),
        points: traj.times.iter().zip(predictions).map(|(t, v)| (*t, v[0])).collect(),
        color: "#c44e52".into(),
        scatter: false,
    });
    plot.render_to(&dir.join(format!("{stem}.svg")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{apply_masking, gen_sine, SineSpec};
    use crate::latent_ode::testkit::linear_gaussian_toy;

    fn tiny_set(n: usize) -> Vec<Trajectory> {
        let spec = SineSpec {
            obs_count_range: (24, 30),
            changepoint_range: (1, 2),
            samples_per_trajectory: None,
            ..SineSpec::default()
        };
        gen_sine(&spec, n, 5)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, t)| apply_masking(&t, 100 + i as u64).unwrap())
            .collect()
    }

    fn quick_config() -> BenchConfig {
        BenchConfig {
            methods: vec![Method::RptRbf, Method::RptAr, Method::RptNorm],
            pelt: PeltConfig { min_segment_len: 3, ..PeltConfig::default() },
            ml_samples: 4,
            grid_size: Some(40),
            f1_tolerance: 10,
            ar_order: 2,
            seed: 3,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn baselines_run_and_exclude_zero_changepoint_trajectories() {
        let mut set = tiny_set(4);
        set[0].changepoints.clear(); // force a zero-cp trajectory
        let report = run_benchmark(None, &set, &quick_config()).unwrap();
        for agg in &report.aggregates {
            assert_eq!(agg.n_trajectories, 3, "method {}", agg.method);
        }
        // every row belongs to a trajectory with changepoints
        assert!(report.rows.iter().all(|r| !r.true_changepoints.is_empty()));
    }

    #[test]
    fn aggregate_means_equal_row_means() {
        let set = tiny_set(5);
        let report = run_benchmark(None, &set, &quick_config()).unwrap();
        for agg in &report.aggregates {
            let rows: Vec<&TrajectoryRow> =
                report.rows.iter().filter(|r| r.method == agg.method).collect();
            let mean_rand =
                rows.iter().map(|r| r.seg.rand_index).sum::<f64>() / rows.len() as f64;
            assert!((agg.mean_rand_index - mean_rand).abs() <= 1e-12);
        }
    }

    #[test]
    fn model_required_when_latsegode_selected() {
        let set = tiny_set(2);
        let mut cfg = quick_config();
        cfg.methods = vec![Method::LatSegOde];
        assert!(run_benchmark(None, &set, &cfg).is_err());
    }

    #[test]
    fn no_segment_mode_reconstructs_with_single_segment() {
        // 1-d toy model over a tiny trajectory: the latent_ode method must
        // place zero changepoints and still produce predictions everywhere
        let model = linear_gaussian_toy(0.5);
        let set = tiny_set(1);
        let mut cfg = quick_config();
        cfg.methods = vec![Method::LatentOde];
        cfg.pelt.min_segment_len = 2;
        let report = run_benchmark(Some(&model), &set, &cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].predicted_changepoints.is_empty());
        assert!(report.rows[0].recon.is_some());
    }

    #[test]
    fn report_round_trips_through_json() {
        let set = tiny_set(2);
        let report = run_benchmark(None, &set, &quick_config()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: BenchmarkReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows.len(), report.rows.len());
        assert_eq!(back.format_version, REPORT_VERSION);
    }
}
