//! Classic changepoint costs — RBF kernel mean-change, Gaussian
//! log-determinant, autoregressive least squares — with linear-interpolation
//! preprocessing and the known-count search.
//!
//!     cargo run --release --example classic_baselines

use latsegode::baselines::{
    interpolate_to_grid, segment_known_k, ArCost, ArCostConfig, NormCost, RbfCost, RbfCostConfig,
};
use latsegode::datagen::{apply_masking, gen_sine, SineSpec};
use latsegode::segmentation::{optimal_partition, CostFunction};

fn main() {
    // step data: three constant levels with noise
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut rng_state = 0x9e3779b97f4a7c15u64;
    let mut noise = move || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.4
    };
    for level in [0.0, 4.0, 1.5] {
        for _ in 0..30 {
            values.push(vec![level + noise()]);
        }
    }
    let times: Vec<f64> = (0..90).map(|i| i as f64).collect();

    // penalized exact search with the Gaussian cost
    let norm = NormCost::new(1);
    let out = optimal_partition(&values, &times, &norm, 8.0, 5).unwrap();
    println!(
        "NORM + optimal partitioning (β = 8): changepoints {:?} (truth [29, 59])",
        out.segmentation.changepoints()
    );

    // known-count search per cost function
    let rbf = RbfCost::new(RbfCostConfig::default()).unwrap();
    let ar = ArCost::new(ArCostConfig { order: 3 }).unwrap();
    let costs: [(&str, &dyn CostFunction); 3] = [("rbf", &rbf), ("norm", &norm), ("ar", &ar)];
    for (name, cost) in costs {
        let (seg, objective) = segment_known_k(&values, &times, cost, 2, 5).unwrap();
        println!("{name:>5} known-k (k = 2): {:?}  objective {objective:.3}", seg.changepoints());
    }

    // irregular sampling handled by linear interpolation onto a grid
    let traj = apply_masking(&gen_sine(&SineSpec::default(), 1, 5).unwrap()[0], 6).unwrap();
    let grid = interpolate_to_grid(&traj, traj.len()).unwrap();
    println!(
        "interpolated {}-point irregular trajectory onto a {}-point grid",
        traj.len(),
        grid.times.len()
    );
    if !traj.changepoints.is_empty() {
        let k = traj.changepoints.len();
        let (seg, _) = segment_known_k(&grid.values, &grid.times, &rbf, k, 20).unwrap();
        let mapped: Vec<usize> =
            seg.changepoints().iter().map(|&c| grid.map_to_original(c)).collect();
        println!(
            "RBF known-k on the grid: grid cps {:?} → original indices {:?} (truth {:?})",
            seg.changepoints(),
            mapped,
            traj.changepoints
        );
    }
}
