//! Segmentation agreement metrics and mask-split reconstruction error.
//!
//!     cargo run --release --example evaluate_metrics

use latsegode::datagen::MaskClass;
use latsegode::metrics::{
    annotation_error, f1_score, hausdorff, mse_split, rand_index, rand_index_pairwise,
    seg_metrics,
};
use latsegode::segmentation::Segmentation;

fn main() {
    let n = 120;
    let truth = Segmentation::new(vec![39, 79], n).unwrap();
    let close = Segmentation::new(vec![42, 77], n).unwrap();
    let off = Segmentation::new(vec![15], n).unwrap();

    for (name, pred) in [("close prediction", &close), ("poor prediction", &off)] {
        let m = seg_metrics(&truth, pred, n, 10).unwrap();
        println!(
            "{name}: rand {:.4}, f1 {:.3}, hausdorff {:?}, annotation error {:+}",
            m.rand_index, m.f1_score, m.hausdorff, m.annotation_error
        );
    }

    // the fast Rand index equals brute-force pair enumeration
    let fast = rand_index(&truth, &close, n).unwrap();
    let slow = rand_index_pairwise(&truth, &close, n).unwrap();
    assert_eq!(fast.to_bits(), slow.to_bits());
    println!("segment-overlap Rand index equals O(n²) pair enumeration: {fast:.6}");

    // Hausdorff is undefined when either side has no changepoints
    println!(
        "hausdorff with an empty side: {:?} (excluded from aggregates)",
        hausdorff(truth.changepoints(), &[])
    );

    // F1 matching is one-to-one within the tolerance window
    println!(
        "f1 with duplicate nearby predictions: {:.3}",
        f1_score(&[100], &[98, 102], 10)
    );
    println!("signed annotation error: {:+}", annotation_error(&[40, 80], &[40]));

    // reconstruction error split by mask class
    let truth_vals: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
    let preds: Vec<Option<Vec<f64>>> = (0..10)
        .map(|i| Some(vec![i as f64 + if i >= 8 { 2.0 } else { 0.1 }]))
        .collect();
    let mask: Vec<MaskClass> = (0..10)
        .map(|i| match i {
            0..=5 => MaskClass::Visible,
            6 | 7 => MaskClass::InterpHeldout,
            _ => MaskClass::ExtrapHeldout,
        })
        .collect();
    let recon = mse_split(&truth_vals, &preds, &mask).unwrap();
    println!(
        "MSE total {:?}, interpolation {:?}, extrapolation {:?}",
        recon.total_mse, recon.interp_mse, recon.extrap_mse
    );
}
