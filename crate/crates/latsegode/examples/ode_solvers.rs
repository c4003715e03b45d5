//! Fixed-step Euler/RK4 and adaptive Dormand–Prince 5(4) on predator-prey
//! dynamics, with the first integral as an accuracy witness.
//!
//!     cargo run --release --example ode_solvers

use latsegode::ode::{ode_solve, SolverConfig};
use latsegode::tensor::Tensor;

fn main() {
    // dx/dt = αx − βxy, dy/dt = δxy − γy
    let (alpha, beta, delta, gamma) = (1.0, 1.0, 2.0, 1.0);
    let field = move |_t: f64, s: &Tensor| -> latsegode::Result<Tensor> {
        let (x, y) = (s.data()[0], s.data()[1]);
        Ok(Tensor::vector(vec![alpha * x - beta * x * y, delta * x * y - gamma * y]))
    };
    // V(x, y) = δx − γ ln x + βy − α ln y is constant along solutions
    let v = |x: f64, y: f64| delta * x - gamma * x.ln() + beta * y - alpha * y.ln();

    let y0 = Tensor::vector(vec![2.0, 1.0]);
    let times: Vec<f64> = (0..=60).map(|i| i as f64 * 0.25).collect();
    let v0 = v(2.0, 1.0);

    for (name, cfg) in [
        ("euler h=0.001", SolverConfig::euler(0.001)),
        ("rk4   h=0.05", SolverConfig::rk4(0.05)),
        ("dopri5 1e-8", SolverConfig::dopri5(1e-8, 1e-8)),
    ] {
        let sol = ode_solve(field, &y0, &times, &cfg).unwrap();
        let drift = sol
            .states
            .iter()
            .map(|s| ((v(s.data()[0], s.data()[1]) - v0) / v0).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{name:/<14} steps: {:>6} acc / {:>3} rej, field evals {:>7}, max |ΔV/V| = {drift:.2e}",
            sol.accepted_steps, sol.rejected_steps, sol.field_evals
        );
    }

    // order-1 convergence of Euler on dy/dt = y
    let run = |h: f64| {
        let sol = ode_solve(
            |_t, y: &Tensor| Ok(y.clone()),
            &Tensor::scalar(1.0),
            &[0.0, 1.0],
            &SolverConfig::euler(h),
        )
        .unwrap();
        (sol.states[1].item() - std::f64::consts::E).abs()
    };
    let (e1, e2) = (run(0.01), run(0.005));
    println!("euler error at h=0.01: {e1:.3e}; at h=0.005: {e2:.3e}; ratio {:.2} (≈2 expected)", e1 / e2);

    // adaptive solver hits the analytic solution of dy/dt = y
    let sol = ode_solve(
        |_t, y: &Tensor| Ok(y.clone()),
        &Tensor::scalar(1.0),
        &[0.0, 1.0],
        &SolverConfig::dopri5(1e-8, 1e-8),
    )
    .unwrap();
    println!(
        "dopri5 y(1) = {:.12} vs e = {:.12} (|err| = {:.1e})",
        sol.states[1].item(),
        std::f64::consts::E,
        (sol.states[1].item() - std::f64::consts::E).abs()
    );
}
