//! End to end: train a small base model on smooth sine flows, then segment a
//! held-out hybrid trajectory by maximizing the joint marginal likelihood
//! with PELT, and reconstruct through the detected changepoints.
//!
//! Runs in a few minutes on one core — the model is deliberately compact.
//!
//!     cargo run --release --example segment_trajectory

use latsegode::datagen::{apply_masking, gen_sine, SineSpec, Trajectory};
use latsegode::latent_ode::{train, LatentOdeModel, MarginalLikelihoodConfig, ModelConfig, TrainConfig};
use latsegode::metrics::seg_metrics;
use latsegode::ode::SolverConfig;
use latsegode::segmentation::{
    joint_log_probability, pelt_segment, reconstruct, MarginalCost, PeltConfig, Segmentation,
};

fn main() {
    // base-model training data: flows only, no changepoints
    let spec = SineSpec { samples_per_trajectory: Some(80), ..SineSpec::default() };
    let hybrids = gen_sine(&spec, 120, 21).unwrap();
    let flows: Vec<Trajectory> = hybrids
        .iter()
        .flat_map(|t| t.extract_sdfs())
        .map(|s| if s.len() >= 10 { apply_masking(&s, 22).unwrap() } else { s })
        .collect();
    let n_val = flows.len() / 10;
    let (train_flows, val_flows) = flows.split_at(flows.len() - n_val);

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
    let mut model = LatentOdeModel::new(config, 23).unwrap();
    let tc = TrainConfig {
        epochs: 14,
        batch_size: 32,
        learning_rate: 0.01,
        kl_anneal_epochs: 4,
        subsample_range: Some((30, 80)),
        seed: 24,
        ..TrainConfig::default()
    };
    println!("training the base model on {} flows...", train_flows.len());
    let report = train(&mut model, train_flows, val_flows, &tc).unwrap();
    let model = report.best_model;
    println!("best validation -ELBO {:.3}", report.best_val_neg_elbo);

    // a held-out hybrid trajectory with jump discontinuities
    let test = apply_masking(&gen_sine(&spec, 40, 900).unwrap()[39], 901).unwrap();
    let (vis_times, vis_values, vis_idx) = test.visible();
    println!(
        "segmenting a {}-point trajectory ({} visible), true changepoints {:?}",
        test.len(),
        vis_times.len(),
        test.changepoints
    );

    let ml = MarginalLikelihoodConfig::new(50, model.config.obs_variance, 902);
    let cost = MarginalCost::new(&model, ml, Some(2)).unwrap();
    let pelt = PeltConfig { beta: 0.0, pruning_k: 200.0, min_segment_len: 12, time_round_decimals: Some(2) };
    let out = pelt_segment(&vis_values, &vis_times, &cost, &pelt).unwrap();

    let pred_full: Vec<usize> =
        out.segmentation.changepoints().iter().map(|&c| vis_idx[c]).collect();
    println!(
        "detected changepoints {:?} (visible-space {:?}), objective {:.2}",
        pred_full,
        out.segmentation.changepoints(),
        out.objective
    );
    println!(
        "search effort: {} cost evaluations, {} candidates pruned",
        out.stats.cost_evaluations, out.stats.pruned_candidates
    );

    // the search objective at β = 0 is the negated joint log probability
    let jlp = joint_log_probability(&model, &vis_values, &vis_times, &out.segmentation, ml, Some(2))
        .unwrap();
    println!("joint log probability of the segmentation: {jlp:.2} (= -objective)");

    // segment-wise reconstruction at every original time
    let preds =
        reconstruct(&model, &vis_values, &vis_times, &out.segmentation, &test.times, &model.config.latent_solver)
            .unwrap();
    let mse: f64 = preds
        .iter()
        .zip(&test.values)
        .map(|(p, t)| (p[0] - t[0]).powi(2))
        .sum::<f64>()
        / preds.len() as f64;
    println!("reconstruction MSE over all {} points: {mse:.4}", preds.len());

    let truth = Segmentation::new(test.changepoints.clone(), test.len()).unwrap();
    let pred_seg = Segmentation::new(pred_full, test.len()).unwrap();
    let m = seg_metrics(&truth, &pred_seg, test.len(), 10).unwrap();
    println!(
        "metrics: rand {:.4}, f1 {:.3}, hausdorff {:?}, annotation error {:+}",
        m.rand_index, m.f1_score, m.hausdorff, m.annotation_error
    );
}
