//! Implementations behind the five subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{
    emit_trajectory_plot, latsegode_predictions, run_benchmark, run_k_sweep, BenchConfig, Method,
};
use crate::datagen::{
    apply_masking, gen_lv, gen_sine, read_dataset_split, read_trajectory_csv, write_dataset_split,
    DatasetManifest, LvSpec, LvVariant, MaskClass, SineSpec, Trajectory, CSV_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::latent_ode::{
    load_checkpoint, save_checkpoint, LatentOdeModel, MarginalLikelihoodConfig, ModelConfig,
    TrainConfig,
};
use crate::metrics::{mse_split, seg_metrics, ReconMetrics, SegMetrics};
use crate::rng::derive_seed;
use crate::segmentation::{
    pelt_segment, reconstruct, MarginalCost, PeltConfig, SearchStats, Segmentation,
};

use super::opts::*;

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| Error::Config(format!("cannot create output dir {}: {e}", path.display())))
}

fn require<T: Clone>(opt: &Option<T>, name: &str) -> Result<T> {
    opt.clone()
        .ok_or_else(|| Error::Config(format!("missing required option --{name}")))
}

fn json_to_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

// ---- generate ----

pub fn cmd_generate(opts: GenerateOpts, seed: u64, out: &Path) -> Result<()> {
    let family = opts.family.clone().unwrap_or_else(|| "sine".into()).to_ascii_lowercase();
    let (default_train, default_val, default_test) = match family.as_str() {
        "sine" => (7050, 300, 150),
        "lv" | "lotka_volterra" => (34_000, 600, 150),
        other => return Err(Error::Config(format!("unknown family `{other}`"))),
    };
    let counts = [
        opts.count_train.unwrap_or(default_train),
        opts.count_val.unwrap_or(default_val),
        opts.count_test.unwrap_or(default_test),
    ];
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Config("dataset would be empty".into()));
    }
    ensure_dir(out)?;

    let shared_mask = opts.shared_mask.unwrap_or(true);
    let cp_range = (
        opts.changepoints_min.unwrap_or(0),
        opts.changepoints_max.unwrap_or(2),
    );

    let (trajs, spec_json, kind) = match family.as_str() {
        "sine" => {
            let mut spec = SineSpec {
                changepoint_range: cp_range,
                samples_per_trajectory: opts.samples_per_trajectory,
                ..SineSpec::default()
            };
            if let Some(ns) = opts.noise_std {
                spec.noise_std = ns;
            }
            if let Some(a) = opts.aligned_times {
                spec.aligned_times = a;
            }
            if let (Some(lo), Some(hi)) = (opts.obs_count_min, opts.obs_count_max) {
                spec.obs_count_range = (lo, hi);
            }
            let trajs = gen_sine(&spec, total, derive_seed(seed, &[0x67656e]))?;
            (trajs, serde_json::to_value(&spec)?, "sine".to_string())
        }
        _ => {
            let mut spec = LvSpec {
                changepoint_range: cp_range,
                ..LvSpec::default()
            };
            if let Some(ns) = opts.noise_std {
                spec.noise_std = ns;
            }
            if let Some(a) = opts.aligned_times {
                spec.aligned_times = a;
            }
            if let (Some(lo), Some(hi)) = (opts.obs_count_min, opts.obs_count_max) {
                spec.obs_count_range = (lo, hi);
            }
            if let Some(v) = &opts.variant {
                spec.variant = match v.to_ascii_lowercase().as_str() {
                    "jd" => LvVariant::Jd,
                    "sd" => LvVariant::Sd,
                    other => return Err(Error::Config(format!("unknown variant `{other}`"))),
                };
            }
            let trajs = gen_lv(&spec, total, derive_seed(seed, &[0x67656e]))?;
            (trajs, serde_json::to_value(&spec)?, "lotka_volterra".to_string())
        }
    };

    // mask, then split in generation order
    let masked: Vec<Trajectory> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mask_seed = if shared_mask {
                derive_seed(seed, &[0x6d61736b])
            } else {
                derive_seed(seed, &[0x6d61736b, i as u64])
            };
            apply_masking(t, mask_seed)
        })
        .collect::<Result<_>>()?;

    let mut split_counts = BTreeMap::new();
    let mut offset = 0usize;
    for (name, count) in [("train", counts[0]), ("val", counts[1]), ("test", counts[2])] {
        if count == 0 {
            continue;
        }
        write_dataset_split(out, name, &masked[offset..offset + count])?;
        split_counts.insert(name.to_string(), count);
        offset += count;
    }

    if opts.extract_sdfs.unwrap_or(false) {
        for (src, dst) in [("train", "train_sdf"), ("val", "val_sdf")] {
            if !split_counts.contains_key(src) {
                continue;
            }
            let hybrids = read_dataset_split(out, src)?;
            let mut sdfs = Vec::new();
            for (i, h) in hybrids.iter().enumerate() {
                for (j, sdf) in h.extract_sdfs().into_iter().enumerate() {
                    // each flow is an independent training trajectory; re-run
                    // the masking protocol per flow when it is long enough
                    let masked = if sdf.len() >= 10 {
                        let mask_seed = if shared_mask {
                            derive_seed(seed, &[0x7364666d])
                        } else {
                            derive_seed(seed, &[0x7364666d, i as u64, j as u64])
                        };
                        apply_masking(&sdf, mask_seed)?
                    } else {
                        sdf
                    };
                    sdfs.push(masked);
                }
            }
            write_dataset_split(out, dst, &sdfs)?;
            split_counts.insert(dst.to_string(), sdfs.len());
        }
    }

    let manifest = DatasetManifest {
        format_version: CSV_FORMAT_VERSION,
        kind,
        seed,
        counts: split_counts,
        spec: spec_json,
        shared_mask,
    };
    manifest.write(out)?;
    println!("wrote dataset to {}", out.display());
    Ok(())
}

// ---- train ----

#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    dataset: String,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epochs_run: usize,
    best_epoch: usize,
    best_val_neg_elbo: Option<f64>,
    n_train_flows: usize,
    n_val_flows: usize,
    wall_clock_secs: f64,
}

fn resolve_model_config(preset: &str, opts: &TrainOpts) -> Result<ModelConfig> {
    let mut config = match preset {
        "sine" => ModelConfig::sine_default(),
        "lv" | "lotka_volterra" => ModelConfig::lotka_volterra_default(),
        other => return Err(Error::Config(format!("unknown model preset `{other}`"))),
    };
    if let Some(l) = opts.latent_dim {
        config.latent_dim = l;
    }
    if let Some(h) = opts.encoder_hidden_dim {
        config.encoder_hidden_dim = h;
    }
    if let Some(v) = opts.obs_variance {
        config.obs_variance = v;
    }
    if let Some(s) = opts.encoder_substeps {
        config.encoder_substeps = s;
    }
    if let Some(rtol) = opts.latent_rtol {
        config.latent_solver.rtol = rtol;
    }
    if let Some(atol) = opts.latent_atol {
        config.latent_solver.atol = atol;
    }
    Ok(config)
}

pub fn cmd_train(opts: TrainOpts, seed: u64, out: &Path) -> Result<()> {
    let started = Instant::now();
    let dataset = require(&opts.dataset, "dataset")?;
    let manifest = DatasetManifest::read(&dataset)?;
    ensure_dir(out)?;

    let split = opts.split.clone().unwrap_or_else(|| "train_sdf".into());
    let val_split = opts.val_split.clone().unwrap_or_else(|| "val_sdf".into());
    let mut train_set = read_dataset_split(&dataset, &split)?;
    if let Some(cap) = opts.max_train_flows {
        train_set.truncate(cap);
    }
    let val_set = match read_dataset_split(&dataset, &val_split) {
        Ok(v) => v,
        Err(Error::Io(_)) => Vec::new(),
        Err(e) => return Err(e),
    };

    let preset = opts
        .model
        .clone()
        .unwrap_or_else(|| if manifest.kind == "sine" { "sine".into() } else { "lv".into() });
    let is_sine = preset == "sine";

    let mut model = match &opts.checkpoint_in {
        Some(path) => {
            let model = load_checkpoint(path)?;
            if let Some(l) = opts.latent_dim {
                if model.config.latent_dim != l {
                    return Err(Error::invalid(format!(
                        "checkpoint latent_dim {} does not match the requested {}",
                        model.config.latent_dim, l
                    )));
                }
            }
            model
        }
        None => {
            let config = resolve_model_config(&preset, &opts)?;
            LatentOdeModel::new(config, derive_seed(seed, &[0x696e6974]))?
        }
    };

    let train_config = TrainConfig {
        epochs: opts.epochs.unwrap_or(50),
        batch_size: opts.batch_size.unwrap_or(256),
        learning_rate: opts.learning_rate.unwrap_or(if is_sine { 0.01 } else { 5e-3 }),
        lr_decay_factor: opts.lr_decay_factor.unwrap_or(0.1),
        lr_plateau_patience: opts.lr_plateau_patience.unwrap_or(10),
        kl_anneal_epochs: opts.kl_anneal_epochs.unwrap_or(if is_sine { 5 } else { 10 }),
        z0_samples: opts.z0_samples.unwrap_or(1),
        grad_clip_norm: opts.grad_clip_norm.unwrap_or(2.0),
        subsample_range: match (opts.subsample_min, opts.subsample_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        },
        truncate_range: match (opts.truncate_min, opts.truncate_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        },
        seed: derive_seed(seed, &[0x747261696e]),
        latent_solver: None,
        encoder_substeps: None,
    };

    if train_config.epochs == 0 {
        save_checkpoint(&model, &out.join("model_init.ckpt"))?;
        let summary = TrainSummary {
            seed,
            dataset: dataset.display().to_string(),
            model_config: model.config.clone(),
            train_config,
            epochs_run: 0,
            best_epoch: 0,
            best_val_neg_elbo: None,
            n_train_flows: train_set.len(),
            n_val_flows: val_set.len(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
        };
        json_to_file(&out.join("train_summary.json"), &summary)?;
        println!("zero-epoch run: wrote initial checkpoint only");
        return Ok(());
    }

    let report = crate::latent_ode::train(&mut model, &train_set, &val_set, &train_config)?;

    save_checkpoint(&report.best_model, &out.join("model_best.ckpt"))?;
    save_checkpoint(&model, &out.join("model_final.ckpt"))?;

    let mut w = BufWriter::new(fs::File::create(out.join("loss_history.csv"))?);
    writeln!(w, "epoch,train_neg_elbo,val_neg_elbo,kl_weight,learning_rate")?;
    for h in &report.history {
        writeln!(
            w,
            "{},{},{},{},{}",
            h.epoch, h.train_neg_elbo, h.val_neg_elbo, h.kl_weight, h.learning_rate
        )?;
    }
    w.flush()?;

    let summary = TrainSummary {
        seed,
        dataset: dataset.display().to_string(),
        model_config: model.config.clone(),
        train_config,
        epochs_run: report.history.len(),
        best_epoch: report.best_epoch,
        best_val_neg_elbo: report.best_val_neg_elbo.is_finite().then_some(report.best_val_neg_elbo),
        n_train_flows: train_set.len(),
        n_val_flows: val_set.len(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    json_to_file(&out.join("train_summary.json"), &summary)?;
    println!(
        "trained {} epochs; best validation -ELBO {:.4} at epoch {}",
        report.history.len(),
        report.best_val_neg_elbo,
        report.best_epoch
    );
    Ok(())
}

// ---- segment ----

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentationRecord {
    pub format_version: u32,
    pub trajectory: usize,
    pub seed: u64,
    /// Changepoints in the full (original) index space.
    pub changepoints: Vec<usize>,
    /// Changepoints in visible-index space (what the search saw).
    pub visible_changepoints: Vec<usize>,
    pub n_points: usize,
    pub n_visible: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_log_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_stats: Option<SearchStats>,
    pub runtime_secs: f64,
    pub pelt: PeltConfig,
    pub ml_samples: usize,
    pub no_segment: bool,
}

fn resolve_pelt(
    beta: Option<f64>,
    pruning_k: Option<f64>,
    min_segment_len: Option<usize>,
    time_round_decimals: Option<i32>,
    dataset_kind: Option<&str>,
) -> PeltConfig {
    let default_k = match dataset_kind {
        Some("sine") => 200.0,
        _ => 100.0,
    };
    PeltConfig {
        beta: beta.unwrap_or(0.0),
        pruning_k: pruning_k.unwrap_or(default_k),
        min_segment_len: min_segment_len.unwrap_or(20),
        time_round_decimals: match time_round_decimals {
            Some(d) if d < 0 => None,
            Some(d) => Some(d as u32),
            None => Some(2),
        },
    }
}

fn segment_one(
    model: &LatentOdeModel,
    traj: &Trajectory,
    index: usize,
    pelt: &PeltConfig,
    ml_samples: usize,
    seed: u64,
    no_segment: bool,
) -> Result<(SegmentationRecord, Vec<Vec<f64>>)> {
    let started = Instant::now();
    let (vis_times, vis_values, vis_idx) = traj.visible();
    if vis_times.len() < 2 {
        return Err(Error::invalid(format!("trajectory {index} has < 2 visible points")));
    }
    let ml = MarginalLikelihoodConfig::new(
        ml_samples,
        model.config.obs_variance,
        derive_seed(seed, &[0x636f7374, index as u64]),
    );
    let (seg_vis, objective, stats) = if no_segment {
        (Segmentation::single_segment(), None, None)
    } else {
        let cost = MarginalCost::new(model, ml, pelt.time_round_decimals)?;
        let out = pelt_segment(&vis_values, &vis_times, &cost, pelt)?;
        (out.segmentation, Some(out.objective), Some(out.stats))
    };
    let predictions = reconstruct(
        model,
        &vis_values,
        &vis_times,
        &seg_vis,
        &traj.times,
        &model.config.latent_solver,
    )?;
    let full: Vec<usize> = seg_vis.changepoints().iter().map(|&c| vis_idx[c]).collect();
    let joint =
        objective.map(|obj| -(obj - pelt.beta * seg_vis.n_changepoints() as f64));
    let record = SegmentationRecord {
        format_version: 1,
        trajectory: index,
        seed,
        changepoints: full,
        visible_changepoints: seg_vis.changepoints().to_vec(),
        n_points: traj.len(),
        n_visible: vis_times.len(),
        objective,
        joint_log_probability: joint,
        search_stats: stats,
        runtime_secs: started.elapsed().as_secs_f64(),
        pelt: *pelt,
        ml_samples,
        no_segment,
    };
    Ok((record, predictions))
}

fn write_reconstruction_csv(path: &Path, traj: &Trajectory, predictions: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let d = traj.dim();
    let cols: Vec<String> = (0..d).map(|i| format!("pred_{i}")).collect();
    writeln!(w, "t,{},mask", cols.join(","))?;
    for i in 0..traj.len() {
        let pv: Vec<String> =
            predictions[i].iter().map(|x| crate::datagen::format_f64(*x)).collect();
        writeln!(
            w,
            "{},{},{}",
            crate::datagen::format_f64(traj.times[i]),
            pv.join(","),
            traj.mask[i].to_code()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_segment(opts: SegmentOpts, seed: u64, out: &Path) -> Result<()> {
    let checkpoint = require(&opts.checkpoint, "checkpoint")?;
    let model = load_checkpoint(&checkpoint)?;
    ensure_dir(out)?;

    let (trajs, kind): (Vec<Trajectory>, Option<String>) = match (&opts.csv, &opts.dataset) {
        (Some(csv), _) => (vec![read_trajectory_csv(csv)?], None),
        (None, Some(dir)) => {
            let manifest = DatasetManifest::read(dir)?;
            let split = opts.split.clone().unwrap_or_else(|| "test".into());
            (read_dataset_split(dir, &split)?, Some(manifest.kind))
        }
        (None, None) => {
            return Err(Error::Config("segment needs --csv or --dataset".into()));
        }
    };

    let pelt = resolve_pelt(
        opts.beta,
        opts.pruning_k,
        opts.min_segment_len,
        opts.time_round_decimals,
        kind.as_deref(),
    );
    let ml_samples = opts.ml_samples.unwrap_or(100);
    let no_segment = opts.no_segment.unwrap_or(false);

    let results: Vec<Result<(SegmentationRecord, Vec<Vec<f64>>)>> = trajs
        .par_iter()
        .enumerate()
        .map(|(i, t)| segment_one(&model, t, i, &pelt, ml_samples, seed, no_segment))
        .collect();

    let mut records = Vec::with_capacity(trajs.len());
    for (i, r) in results.into_iter().enumerate() {
        let (record, predictions) = r?;
        json_to_file(&out.join(format!("segmentation_{i:05}.json")), &record)?;
        write_reconstruction_csv(
            &out.join(format!("reconstruction_{i:05}.csv")),
            &trajs[i],
            &predictions,
        )?;
        records.push(record);
    }

    #[derive(Serialize)]
    struct SegmentSummary<'a> {
        format_version: u32,
        seed: u64,
        pelt: PeltConfig,
        ml_samples: usize,
        no_segment: bool,
        n_trajectories: usize,
        total_runtime_secs: f64,
        total_cost_evaluations: usize,
        total_pruned_candidates: usize,
        records: &'a [SegmentationRecord],
    }
    let summary = SegmentSummary {
        format_version: 1,
        seed,
        pelt,
        ml_samples,
        no_segment,
        n_trajectories: records.len(),
        total_runtime_secs: records.iter().map(|r| r.runtime_secs).sum(),
        total_cost_evaluations: records
            .iter()
            .filter_map(|r| r.search_stats.map(|s| s.cost_evaluations))
            .sum(),
        total_pruned_candidates: records
            .iter()
            .filter_map(|r| r.search_stats.map(|s| s.pruned_candidates))
            .sum(),
        records: &records,
    };
    json_to_file(&out.join("segment_summary.json"), &summary)?;
    println!("segmented {} trajectories into {}", records.len(), out.display());
    Ok(())
}

// ---- benchmark ----

fn write_rows_csv(path: &Path, report: &crate::bench::BenchmarkReport) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "trajectory,method,rand_index,f1_score,hausdorff,annotation_error,total_mse,interp_mse,extrap_mse,objective,runtime_secs"
    )?;
    let fmt = |o: Option<f64>| o.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.trajectory,
            r.method,
            r.seg.rand_index,
            r.seg.f1_score,
            fmt(r.seg.hausdorff),
            r.seg.annotation_error,
            fmt(r.recon.and_then(|m| m.total_mse)),
            fmt(r.recon.and_then(|m| m.interp_mse)),
            fmt(r.recon.and_then(|m| m.extrap_mse)),
            fmt(r.objective),
            r.runtime_secs
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_aggregates_csv(path: &Path, report: &crate::bench::BenchmarkReport) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "method,n,rand_index,f1_score,hausdorff,annotation_error,abs_annotation_error,total_mse,interp_mse,extrap_mse,runtime_secs"
    )?;
    let fmt = |o: Option<f64>| o.map(|x| x.to_string()).unwrap_or_default();
    for a in &report.aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.method,
            a.n_trajectories,
            a.mean_rand_index,
            a.mean_f1,
            fmt(a.mean_hausdorff),
            a.mean_annotation_error,
            a.mean_abs_annotation_error,
            fmt(a.mean_total_mse),
            fmt(a.mean_interp_mse),
            fmt(a.mean_extrap_mse),
            a.runtime_secs
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_benchmark(opts: BenchmarkOpts, seed: u64, out: &Path) -> Result<()> {
    let dataset = require(&opts.dataset, "dataset")?;
    let manifest = DatasetManifest::read(&dataset)?;
    let split = opts.split.clone().unwrap_or_else(|| "test".into());
    let test_set = read_dataset_split(&dataset, &split)?;
    ensure_dir(out)?;

    let model = match &opts.checkpoint {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };

    let methods: Vec<Method> = match &opts.methods {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Method::parse)
            .collect::<Result<_>>()?,
        None => {
            if model.is_some() {
                vec![Method::LatSegOde, Method::RptRbf, Method::RptAr, Method::RptNorm]
            } else {
                vec![Method::RptRbf, Method::RptAr, Method::RptNorm]
            }
        }
    };

    let pelt = resolve_pelt(
        opts.beta,
        opts.pruning_k,
        opts.min_segment_len,
        opts.time_round_decimals,
        Some(manifest.kind.as_str()),
    );
    let config = BenchConfig {
        methods,
        pelt,
        ml_samples: opts.ml_samples.unwrap_or(100),
        grid_size: opts.grid_size,
        f1_tolerance: opts.f1_tolerance.unwrap_or(10),
        ar_order: opts.ar_order.unwrap_or(10),
        seed,
    };

    if let Some(sweep) = &opts.k_sweep {
        let ks: Vec<f64> = sweep
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad k_sweep entry `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let model = model
            .as_ref()
            .ok_or_else(|| Error::Config("k_sweep needs --checkpoint".into()))?;
        let rows = run_k_sweep(model, &test_set, &ks, &config)?;
        json_to_file(&out.join("k_sweep.json"), &rows)?;
        let mut w = BufWriter::new(fs::File::create(out.join("k_sweep.csv"))?);
        writeln!(
            w,
            "pruning_k,rand_index,f1_score,hausdorff,abs_annotation_error,mean_objective,total_pruned,runtime_secs"
        )?;
        for r in &rows {
            let mean_obj =
                r.objectives.iter().sum::<f64>() / r.objectives.len().max(1) as f64;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.pruning_k,
                r.mean_rand_index,
                r.mean_f1,
                r.mean_hausdorff.map(|x| x.to_string()).unwrap_or_default(),
                r.mean_abs_annotation_error,
                mean_obj,
                r.pruned_candidates.iter().sum::<usize>(),
                r.runtime_secs
            )?;
        }
        w.flush()?;
        println!("k-sweep over {} values written to {}", rows.len(), out.display());
        return Ok(());
    }

    let report = run_benchmark(model.as_ref(), &test_set, &config)?;
    json_to_file(&out.join("report.json"), &report)?;
    write_rows_csv(&out.join("rows.csv"), &report)?;
    write_aggregates_csv(&out.join("aggregates.csv"), &report)?;

    if let (Some(n_plots), Some(model)) = (opts.plots, model.as_ref()) {
        let plot_dir = out.join("plots");
        for (i, traj) in test_set.iter().take(n_plots).enumerate() {
            let (seg_vis, predictions) =
                latsegode_predictions(model, traj, i, &config, false)?;
            let (_, _, vis_idx) = traj.visible();
            let full: Vec<usize> =
                seg_vis.changepoints().iter().map(|&c| vis_idx[c]).collect();
            let seg_full = Segmentation::new(full, traj.len())?;
            emit_trajectory_plot(&plot_dir, &format!("traj_{i:05}"), traj, &predictions, &seg_full)?;
        }
    }

    for a in &report.aggregates {
        println!(
            "{:>12}: n={:<4} rand={:.4} f1={:.4} hausdorff={} mse={}",
            a.method,
            a.n_trajectories,
            a.mean_rand_index,
            a.mean_f1,
            a.mean_hausdorff.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
            a.mean_total_mse.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}

// ---- metrics ----

#[derive(Debug, Serialize)]
struct MetricsRow {
    trajectory: usize,
    seg: SegMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    recon: Option<ReconMetrics>,
}

pub fn cmd_metrics(opts: MetricsOpts, seed: u64, out: &Path) -> Result<()> {
    let dataset = require(&opts.dataset, "dataset")?;
    let predictions = require(&opts.predictions, "predictions")?;
    let split = opts.split.clone().unwrap_or_else(|| "test".into());
    let f1_tol = opts.f1_tolerance.unwrap_or(10);
    let truth = read_dataset_split(&dataset, &split)?;
    ensure_dir(out)?;

    let mut rows = Vec::new();
    for (i, traj) in truth.iter().enumerate() {
        let seg_path = predictions.join(format!("segmentation_{i:05}.json"));
        let record: SegmentationRecord = serde_json::from_str(
            &fs::read_to_string(&seg_path).map_err(|e| Error::MalformedFile {
                path: seg_path.display().to_string(),
                msg: format!("missing prediction: {e}"),
            })?,
        )?;
        if record.n_points != traj.len() {
            return Err(Error::invalid(format!(
                "prediction {i} covers {} points but the trajectory has {}",
                record.n_points,
                traj.len()
            )));
        }
        let pred_seg = Segmentation::new(record.changepoints.clone(), traj.len())?;
        let truth_seg = Segmentation::new(traj.changepoints.clone(), traj.len())?;
        let seg = seg_metrics(&truth_seg, &pred_seg, traj.len(), f1_tol)?;

        let recon_path = predictions.join(format!("reconstruction_{i:05}.csv"));
        let recon = if recon_path.exists() {
            let pred = read_prediction_csv(&recon_path, traj)?;
            Some(mse_split(&traj.values, &pred, &traj.mask)?)
        } else {
            None
        };
        rows.push(MetricsRow { trajectory: i, seg, recon });
    }

    #[derive(Serialize)]
    struct MetricsReport {
        format_version: u32,
        seed: u64,
        n_trajectories: usize,
        mean_rand_index: f64,
        mean_f1: f64,
        mean_hausdorff: Option<f64>,
        mean_annotation_error: f64,
        mean_abs_annotation_error: f64,
        mean_total_mse: Option<f64>,
        mean_interp_mse: Option<f64>,
        mean_extrap_mse: Option<f64>,
        rows: Vec<MetricsRow>,
    }
    let n = rows.len() as f64;
    let mean_opt = |it: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = it.collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let report = MetricsReport {
        format_version: 1,
        seed,
        n_trajectories: rows.len(),
        mean_rand_index: rows.iter().map(|r| r.seg.rand_index).sum::<f64>() / n,
        mean_f1: rows.iter().map(|r| r.seg.f1_score).sum::<f64>() / n,
        mean_hausdorff: mean_opt(&mut rows.iter().filter_map(|r| r.seg.hausdorff)),
        mean_annotation_error: rows.iter().map(|r| r.seg.annotation_error as f64).sum::<f64>()
            / n,
        mean_abs_annotation_error: rows
            .iter()
            .map(|r| r.seg.annotation_error.unsigned_abs() as f64)
            .sum::<f64>()
            / n,
        mean_total_mse: mean_opt(&mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.total_mse))),
        mean_interp_mse: mean_opt(
            &mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.interp_mse)),
        ),
        mean_extrap_mse: mean_opt(
            &mut rows.iter().filter_map(|r| r.recon.and_then(|m| m.extrap_mse)),
        ),
        rows,
    };
    json_to_file(&out.join("metrics_report.json"), &report)?;

    let mut w = BufWriter::new(fs::File::create(out.join("metrics_report.csv"))?);
    writeln!(
        w,
        "trajectory,rand_index,f1_score,hausdorff,annotation_error,total_mse,interp_mse,extrap_mse"
    )?;
    let fmt = |o: Option<f64>| o.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.trajectory,
            r.seg.rand_index,
            r.seg.f1_score,
            fmt(r.seg.hausdorff),
            r.seg.annotation_error,
            fmt(r.recon.and_then(|m| m.total_mse)),
            fmt(r.recon.and_then(|m| m.interp_mse)),
            fmt(r.recon.and_then(|m| m.extrap_mse)),
        )?;
    }
    w.flush()?;
    println!(
        "metrics over {} trajectories: rand={:.4} f1={:.4}",
        report.n_trajectories, report.mean_rand_index, report.mean_f1
    );
    Ok(())
}

/// Read a reconstruction CSV (written by `segment`) back into per-point
/// prediction rows aligned with the truth trajectory.
fn read_prediction_csv(path: &Path, traj: &Trajectory) -> Result<Vec<Option<Vec<f64>>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedFile {
        path: path.display().to_string(),
        msg: "empty file".into(),
    })?;
    let d = header.split(',').filter(|c| c.starts_with("pred_")).count();
    if d == 0 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            msg: "no pred_* columns".into(),
        });
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < d + 2 {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                msg: format!("expected {} fields, got {}", d + 2, fields.len()),
            });
        }
        let row: Vec<f64> = fields[1..=d]
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::MalformedFile {
                    path: path.display().to_string(),
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(Some(row));
    }
    if rows.len() != traj.len() {
        return Err(Error::invalid(format!(
            "prediction rows {} do not match trajectory length {}",
            rows.len(),
            traj.len()
        )));
    }
    let _ = MaskClass::Visible; // mask column is carried but re-derived from truth
    Ok(rows)
}
