//! A miniature benchmark: the marginal-likelihood segmenter against the
//! known-k baselines on a handful of labelled trajectories, with the report
//! and plot artifacts the `benchmark` subcommand would write.
//!
//!     cargo run --release --example benchmark_small

use latsegode::bench::{
    emit_trajectory_plot, latsegode_predictions, run_benchmark, BenchConfig, Method,
};
use latsegode::datagen::{apply_masking, gen_sine, SineSpec, Trajectory};
use latsegode::latent_ode::{train, LatentOdeModel, ModelConfig, TrainConfig};
use latsegode::ode::SolverConfig;
use latsegode::segmentation::{PeltConfig, Segmentation};

fn main() {
    let spec = SineSpec { samples_per_trajectory: Some(70), changepoint_range: (1, 2), ..SineSpec::default() };
    let hybrids = gen_sine(&spec, 90, 31).unwrap();
    let flows: Vec<Trajectory> = hybrids
        .iter()
        .flat_map(|t| t.extract_sdfs())
        .map(|s| if s.len() >= 10 { apply_masking(&s, 32).unwrap() } else { s })
        .collect();
    let (train_flows, val_flows) = flows.split_at(flows.len() - 15);

    let config = ModelConfig {
        data_dim: 1,
        latent_dim: 4,
        encoder_hidden_dim: 8,
        encoder_field_hidden: vec![48],
        latent_field_hidden: vec![48],
        decoder_hidden: vec![48],
        obs_variance: 1.0,
        encoder_substeps: 3,
        latent_solver: SolverConfig::dopri5(1e-5, 1e-6),
    };
    let mut model = LatentOdeModel::new(config, 33).unwrap();
    let tc = TrainConfig {
        epochs: 12,
        batch_size: 32,
        kl_anneal_epochs: 4,
        subsample_range: Some((30, 70)),
        seed: 34,
        ..TrainConfig::default()
    };
    println!("training on {} flows...", train_flows.len());
    let model = train(&mut model, train_flows, val_flows, &tc).unwrap().best_model;

    let test_set: Vec<Trajectory> = gen_sine(&spec, 5, 3100)
        .unwrap()
        .into_iter()
        .map(|t| apply_masking(&t, 3101).unwrap())
        .collect();

    let bench = BenchConfig {
        methods: vec![Method::LatSegOde, Method::RptRbf, Method::RptAr, Method::RptNorm],
        pelt: PeltConfig { beta: 0.0, pruning_k: 200.0, min_segment_len: 10, time_round_decimals: Some(2) },
        ml_samples: 30,
        grid_size: None,
        f1_tolerance: 10,
        ar_order: 5,
        seed: 3102,
    };
    println!("benchmarking {} test trajectories...", test_set.len());
    let report = run_benchmark(Some(&model), &test_set, &bench).unwrap();
    for a in &report.aggregates {
        println!(
            "{:>10}: n={} rand {:.4}  f1 {:.3}  hausdorff {}  total MSE {}",
            a.method,
            a.n_trajectories,
            a.mean_rand_index,
            a.mean_f1,
            a.mean_hausdorff.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into()),
            a.mean_total_mse.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
        );
    }

    // plot artifacts: overlay CSV, segment-band table, SVG
    let dir = std::env::temp_dir().join("latsegode_benchmark_plots");
    let traj = &test_set[0];
    let (seg_vis, preds) = latsegode_predictions(&model, traj, 0, &bench, false).unwrap();
    let (_, _, vis_idx) = traj.visible();
    let full: Vec<usize> = seg_vis.changepoints().iter().map(|&c| vis_idx[c]).collect();
    let seg_full = Segmentation::new(full, traj.len()).unwrap();
    emit_trajectory_plot(&dir, "traj_00000", traj, &preds, &seg_full).unwrap();
    println!("plot data + SVG written under {}", dir.display());
}
