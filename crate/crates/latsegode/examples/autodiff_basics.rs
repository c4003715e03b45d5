//! Reverse-mode autodiff on the tape: build a composite expression, pull
//! gradients back to every leaf, and cross-check against central finite
//! differences.
//!
//!     cargo run --release --example autodiff_basics

use latsegode::tape::Tape;
use latsegode::tensor::Tensor;

fn main() {
    // f(x, W) = Σ tanh(W x) with a scalar loss
    let tape = Tape::new();
    let w = tape.leaf(Tensor::matrix(2, 3, vec![0.4, -0.2, 0.7, 0.1, 0.9, -0.5]).unwrap());
    let x = tape.leaf(Tensor::vector(vec![0.3, -1.2, 0.8]));
    let loss = w.matvec(x).tanh().sum();
    println!("loss = {:.6}", loss.value().item());

    let grads = tape.backward(loss).unwrap();
    println!("dL/dW = {:?}", grads.get(w).data());
    println!("dL/dx = {:?}", grads.get(x).data());

    // finite-difference check on x
    let f = |xv: &[f64]| -> f64 {
        let tape = Tape::new();
        let w = tape.leaf(Tensor::matrix(2, 3, vec![0.4, -0.2, 0.7, 0.1, 0.9, -0.5]).unwrap());
        let x = tape.leaf(Tensor::vector(xv.to_vec()));
        w.matvec(x).tanh().sum().value().item()
    };
    let x0 = [0.3, -1.2, 0.8];
    let h = 1e-5;
    let analytic = grads.get(x);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let mut p = x0;
        let mut m = x0;
        p[i] += h;
        m[i] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        let rel = (analytic.data()[i] - fd).abs() / fd.abs().max(1e-12);
        worst = worst.max(rel);
        println!("dL/dx[{i}]: tape {:+.8}  fd {fd:+.8}  rel err {rel:.2e}", analytic.data()[i]);
    }
    assert!(worst < 1e-4);
    println!("tape gradients agree with finite differences (worst rel err {worst:.2e})");

    // second example: gradients flow through shared subexpressions
    let tape = Tape::new();
    let a = tape.scalar(2.0);
    let b = tape.scalar(5.0);
    let g = a.mul(b).add(b); // d/da = b, d/db = a + 1
    let grads = tape.backward(g).unwrap();
    println!(
        "f(a,b) = a·b + b at (2, 5): df/da = {}, df/db = {}",
        grads.get(a).item(),
        grads.get(b).item()
    );
}
