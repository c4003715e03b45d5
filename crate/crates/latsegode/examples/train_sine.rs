//! Train a compact Latent ODE base model on sine-wave flows and round-trip
//! it through a checkpoint. A scaled-down version of the real training runs
//! driven by the `latsegode train` subcommand.
//!
//!     cargo run --release --example train_sine

use latsegode::datagen::{apply_masking, gen_sine, SineSpec, Trajectory};
use latsegode::latent_ode::{
    load_checkpoint, save_checkpoint, train, LatentOdeModel, ModelConfig, TrainConfig,
};
use latsegode::ode::SolverConfig;

fn main() {
    // hybrid trajectories -> masked flows, exactly like the CLI pipeline
    let spec = SineSpec { samples_per_trajectory: Some(80), ..SineSpec::default() };
    let hybrids = gen_sine(&spec, 60, 1).unwrap();
    let flows: Vec<Trajectory> = hybrids
        .iter()
        .flat_map(|t| t.extract_sdfs())
        .map(|s| if s.len() >= 10 { apply_masking(&s, 2).unwrap() } else { s })
        .collect();
    let n_val = flows.len() / 10;
    let (train_flows, val_flows) = flows.split_at(flows.len() - n_val);
    println!("{} training flows, {} validation flows", train_flows.len(), val_flows.len());

    // compact architecture so the example finishes in about a minute
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
    let mut model = LatentOdeModel::new(config, 3).unwrap();
    println!("model has {} scalar parameters", model.n_scalar_params());

    let train_config = TrainConfig {
        epochs: 10,
        batch_size: 32,
        learning_rate: 0.01,
        kl_anneal_epochs: 4,
        subsample_range: Some((30, 80)),
        seed: 4,
        ..TrainConfig::default()
    };
    let report = train(&mut model, train_flows, val_flows, &train_config).unwrap();
    for h in &report.history {
        println!(
            "epoch {:>2}: train -ELBO {:>9.3}  val -ELBO {:>9.3}  kl weight {:.2}",
            h.epoch, h.train_neg_elbo, h.val_neg_elbo, h.kl_weight
        );
    }
    println!(
        "best validation -ELBO {:.3} at epoch {}",
        report.best_val_neg_elbo, report.best_epoch
    );

    // checkpoints round-trip bit-exactly
    let path = std::env::temp_dir().join("latsegode_example_model.ckpt");
    save_checkpoint(&report.best_model, &path).unwrap();
    let reloaded = load_checkpoint(&path).unwrap();
    let p = latsegode::latent_ode::encode(
        &reloaded,
        &[vec![0.3], vec![-0.5]],
        &[0.0, 0.5],
    )
    .unwrap();
    println!("checkpoint reloaded from {}; posterior mean {:?}", path.display(), p.mean);
}
