//! Per-command option structs. Every field is optional so JSON config keys
//! and same-named command-line flags merge cleanly (flags win); defaults are
//! resolved at execution time.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

macro_rules! merge_fields {
    ($cli:expr, $json:expr; $($field:ident),* $(,)?) => {{
        let mut merged = $cli;
        $( if merged.$field.is_none() { merged.$field = $json.$field; } )*
        merged
    }};
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateOpts {
    /// Trajectory family: "sine" or "lv".
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub count_train: Option<usize>,
    #[arg(long)]
    pub count_val: Option<usize>,
    #[arg(long)]
    pub count_test: Option<usize>,
    /// Also split labelled training/validation hybrids into per-flow files
    /// (train_sdf/, val_sdf/) for base-model training.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub extract_sdfs: Option<bool>,
    /// Share the internal heldout-mask pattern across the whole dataset.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shared_mask: Option<bool>,
    /// Share observation-time fractions across trajectories.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub aligned_times: Option<bool>,
    /// Fixed total observations per trajectory (split across flows).
    #[arg(long)]
    pub samples_per_trajectory: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub changepoints_min: Option<usize>,
    #[arg(long)]
    pub changepoints_max: Option<usize>,
    #[arg(long)]
    pub obs_count_min: Option<usize>,
    #[arg(long)]
    pub obs_count_max: Option<usize>,
    /// Lotka-Volterra variant: "jd" (jump discontinuity) or "sd" (switching
    /// dynamics).
    #[arg(long)]
    pub variant: Option<String>,
}

impl GenerateOpts {
    pub fn merge(self, json: GenerateOpts) -> GenerateOpts {
        merge_fields!(self, json;
            family, count_train, count_val, count_test, extract_sdfs, shared_mask,
            aligned_times, samples_per_trajectory, noise_std, changepoints_min,
            changepoints_max, obs_count_min, obs_count_max, variant)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Split holding the training flows.
    #[arg(long)]
    pub split: Option<String>,
    /// Split holding the validation flows.
    #[arg(long)]
    pub val_split: Option<String>,
    /// Architecture preset: "sine" or "lv" (defaults to the dataset kind).
    #[arg(long)]
    pub model: Option<String>,
    /// Resume from an existing checkpoint instead of a fresh init.
    #[arg(long)]
    pub checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub encoder_hidden_dim: Option<usize>,
    #[arg(long)]
    pub obs_variance: Option<f64>,
    #[arg(long)]
    pub encoder_substeps: Option<usize>,
    #[arg(long)]
    pub latent_rtol: Option<f64>,
    #[arg(long)]
    pub latent_atol: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    #[arg(long)]
    pub lr_plateau_patience: Option<usize>,
    #[arg(long)]
    pub kl_anneal_epochs: Option<usize>,
    #[arg(long)]
    pub z0_samples: Option<usize>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub subsample_min: Option<usize>,
    #[arg(long)]
    pub subsample_max: Option<usize>,
    #[arg(long)]
    pub truncate_min: Option<usize>,
    #[arg(long)]
    pub truncate_max: Option<usize>,
    /// Cap on how many training flows to use (ablation knob).
    #[arg(long)]
    pub max_train_flows: Option<usize>,
}

impl TrainOpts {
    pub fn merge(self, json: TrainOpts) -> TrainOpts {
        merge_fields!(self, json;
            dataset, split, val_split, model, checkpoint_in, latent_dim,
            encoder_hidden_dim, obs_variance, encoder_substeps, latent_rtol,
            latent_atol, epochs, batch_size, learning_rate, lr_decay_factor,
            lr_plateau_patience, kl_anneal_epochs, z0_samples, grad_clip_norm,
            subsample_min, subsample_max, truncate_min, truncate_max,
            max_train_flows)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentOpts {
    /// Trained model checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory (use with --split), or
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// a single trajectory CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Pruning constant K; "inf" disables pruning.
    #[arg(long)]
    pub pruning_k: Option<f64>,
    #[arg(long)]
    pub min_segment_len: Option<usize>,
    /// Decimal places for decode-time rounding; negative disables rounding.
    #[arg(long)]
    pub time_round_decimals: Option<i32>,
    /// Monte Carlo samples for the marginal-likelihood cost.
    #[arg(long)]
    pub ml_samples: Option<usize>,
    /// Skip the search and reconstruct with a single segment (vanilla mode).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_segment: Option<bool>,
}

impl SegmentOpts {
    pub fn merge(self, json: SegmentOpts) -> SegmentOpts {
        merge_fields!(self, json;
            checkpoint, dataset, split, csv, beta, pruning_k, min_segment_len,
            time_round_decimals, ml_samples, no_segment)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkOpts {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated methods: latsegode, latent_ode, rbf, ar, norm.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub pruning_k: Option<f64>,
    #[arg(long)]
    pub min_segment_len: Option<usize>,
    #[arg(long)]
    pub time_round_decimals: Option<i32>,
    #[arg(long)]
    pub ml_samples: Option<usize>,
    /// Baseline interpolation grid size (defaults to trajectory length).
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub f1_tolerance: Option<usize>,
    #[arg(long)]
    pub ar_order: Option<usize>,
    /// Comma-separated pruning constants; runs the K-sweep mode.
    #[arg(long)]
    pub k_sweep: Option<String>,
    /// Emit plot data (CSV + SVG) for the first N trajectories.
    #[arg(long)]
    pub plots: Option<usize>,
}

impl BenchmarkOpts {
    pub fn merge(self, json: BenchmarkOpts) -> BenchmarkOpts {
        merge_fields!(self, json;
            checkpoint, dataset, split, methods, beta, pruning_k, min_segment_len,
            time_round_decimals, ml_samples, grid_size, f1_tolerance, ar_order,
            k_sweep, plots)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOpts {
    /// Labelled dataset directory (ground truth).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Directory of segmentation_*.json / reconstruction_*.csv predictions.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub f1_tolerance: Option<usize>,
}

impl MetricsOpts {
    pub fn merge(self, json: MetricsOpts) -> MetricsOpts {
        merge_fields!(self, json; dataset, split, predictions, f1_tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_flags_override_json_keys() {
        let cli = GenerateOpts { family: Some("lv".into()), ..GenerateOpts::default() };
        let json: GenerateOpts = serde_json::from_str(
            r#"{"family": "sine", "count_train": 10, "noise_std": 0.5}"#,
        )
        .unwrap();
        let merged = cli.merge(json);
        assert_eq!(merged.family.as_deref(), Some("lv"));
        assert_eq!(merged.count_train, Some(10));
        assert_eq!(merged.noise_std, Some(0.5));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let bad: std::result::Result<TrainOpts, _> =
            serde_json::from_str(r#"{"epochs": 3, "nonsense": 1}"#);
        assert!(bad.is_err());
    }
}
