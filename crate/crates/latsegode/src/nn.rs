//! Neural building blocks: multilayer perceptrons and a GRU cell.
//!
//! Parameters live as plain [`Tensor`]s; a forward pass first binds them onto
//! a [`Tape`] and then runs arithmetic on the bound [`Var`] handles, so the
//! same code path serves taped training and throwaway evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
            Activation::Identity => x,
        }
    }
}

/// Uniform(−1/√fan_in, +1/√fan_in) matrix, the initialization used for every
/// weight in the crate. Biases start at zero.
pub fn init_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("init shape")
}

// ---- MLP ----

#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub weight: Tensor, // [out, in]
    pub bias: Tensor,   // [out]
    pub activation: Activation,
}

/// Fully connected network; consecutive layer dimensions must chain.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub layers: Vec<MlpLayer>,
}

impl MlpParams {
    /// `dims = [in, h1, ..., out]`; hidden layers get `hidden_act`, the output
    /// layer is linear.
    pub fn new(dims: &[usize], hidden_act: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| MlpLayer {
                weight: init_matrix(w[1], w[0], rng),
                bias: Tensor::zeros(&[w[1]]),
                activation: if i + 2 == dims.len() { Activation::Identity } else { hidden_act },
            })
            .collect();
        MlpParams { layers }
    }

    /// All-zero network with the given chain, useful for degenerate setups.
    pub fn zeros(dims: &[usize], hidden_act: Activation) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| MlpLayer {
                weight: Tensor::zeros(&[w[1], w[0]]),
                bias: Tensor::zeros(&[w[1]]),
                activation: if i + 2 == dims.len() { Activation::Identity } else { hidden_act },
            })
            .collect();
        MlpParams { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(Error::invalid(format!(
                    "mlp layer dimensions do not chain: {} -> {}",
                    pair[0].weight.rows(),
                    pair[1].weight.cols()
                )));
            }
        }
        for layer in &self.layers {
            if layer.bias.numel() != layer.weight.rows() {
                return Err(Error::invalid("mlp bias length must equal layer output size"));
            }
        }
        Ok(())
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()), l.activation))
                .collect(),
        }
    }

    pub fn for_each_param(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            f(format!("{prefix}.layer{i}.weight"), &l.weight);
            f(format!("{prefix}.layer{i}.bias"), &l.bias);
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut Tensor)) {
        for l in &mut self.layers {
            f(&mut l.weight);
            f(&mut l.bias);
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
    }
}

/// Tape-bound MLP ready for forward passes.
pub struct BoundMlp<'t> {
    layers: Vec<(Var<'t>, Var<'t>, Activation)>,
}

impl<'t> BoundMlp<'t> {
    pub fn leaf_vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|(w, b, _)| [*w, *b]).collect()
    }
}

/// Affine + activation per layer.
pub fn mlp_forward<'t>(mlp: &BoundMlp<'t>, input: Var<'t>) -> Result<Var<'t>> {
    let mut x = input;
    for (w, b, act) in &mlp.layers {
        let expected = w.shape()[1];
        if x.numel() != expected {
            return Err(Error::invalid(format!(
                "mlp_forward: input length {} does not match layer input size {}",
                x.numel(),
                expected
            )));
        }
        x = act.apply(w.matvec(x).add(*b));
    }
    Ok(x)
}

/// Evaluation-only MLP forward on plain tensors: identical arithmetic to the
/// taped path, no recording.
pub fn mlp_eval(params: &MlpParams, input: &Tensor) -> Result<Tensor> {
    let mut x = input.clone();
    for l in &params.layers {
        if x.numel() != l.weight.cols() {
            return Err(Error::invalid(format!(
                "mlp_eval: input length {} does not match layer input size {}",
                x.numel(),
                l.weight.cols()
            )));
        }
        let mut y = l.weight.matvec(&x);
        y.axpy(1.0, &l.bias);
        x = match l.activation {
            Activation::Tanh => y.map(f64::tanh),
            Activation::Relu => y.map(|v| v.max(0.0)),
            Activation::Identity => y,
        };
    }
    Ok(x)
}

// ---- GRU cell ----

/// Gate parameters follow the input/hidden split: for each of the update (z),
/// reset (r) and candidate (c) paths there is an input matrix, a hidden
/// matrix, and one bias per path.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_wz: Tensor,
    pub b_uz: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_wr: Tensor,
    pub b_ur: Tensor,
    pub w_c: Tensor,
    pub u_c: Tensor,
    pub b_wc: Tensor,
    pub b_uc: Tensor,
    pub hidden_size: usize,
    pub input_size: usize,
}

impl GruParams {
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let w = |rng: &mut _| init_matrix(hidden_size, input_size, rng);
        let u = |rng: &mut _| init_matrix(hidden_size, hidden_size, rng);
        GruParams {
            w_z: w(rng),
            u_z: u(rng),
            b_wz: Tensor::zeros(&[hidden_size]),
            b_uz: Tensor::zeros(&[hidden_size]),
            w_r: w(rng),
            u_r: u(rng),
            b_wr: Tensor::zeros(&[hidden_size]),
            b_ur: Tensor::zeros(&[hidden_size]),
            w_c: w(rng),
            u_c: u(rng),
            b_wc: Tensor::zeros(&[hidden_size]),
            b_uc: Tensor::zeros(&[hidden_size]),
            hidden_size,
            input_size,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_size, input_size]);
        let u = || Tensor::zeros(&[hidden_size, hidden_size]);
        let b = || Tensor::zeros(&[hidden_size]);
        GruParams {
            w_z: w(),
            u_z: u(),
            b_wz: b(),
            b_uz: b(),
            w_r: w(),
            u_r: u(),
            b_wr: b(),
            b_ur: b(),
            w_c: w(),
            u_c: u(),
            b_wc: b(),
            b_uc: b(),
            hidden_size,
            input_size,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundGru<'t> {
        let l = |t: &Tensor| tape.leaf(t.clone());
        BoundGru {
            w_z: l(&self.w_z),
            u_z: l(&self.u_z),
            b_wz: l(&self.b_wz),
            b_uz: l(&self.b_uz),
            w_r: l(&self.w_r),
            u_r: l(&self.u_r),
            b_wr: l(&self.b_wr),
            b_ur: l(&self.b_ur),
            w_c: l(&self.w_c),
            u_c: l(&self.u_c),
            b_wc: l(&self.b_wc),
            b_uc: l(&self.b_uc),
            hidden_size: self.hidden_size,
            input_size: self.input_size,
        }
    }

    pub fn for_each_param(&self, prefix: &str, f: &mut impl FnMut(String, &Tensor)) {
        let items: [(&str, &Tensor); 12] = [
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_wz", &self.b_wz),
            ("b_uz", &self.b_uz),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_wr", &self.b_wr),
            ("b_ur", &self.b_ur),
            ("w_c", &self.w_c),
            ("u_c", &self.u_c),
            ("b_wc", &self.b_wc),
            ("b_uc", &self.b_uc),
        ];
        for (name, t) in items {
            f(format!("{prefix}.{name}"), t);
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut Tensor)) {
        for t in [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_wz,
            &mut self.b_uz,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_wr,
            &mut self.b_ur,
            &mut self.w_c,
            &mut self.u_c,
            &mut self.b_wc,
            &mut self.b_uc,
        ] {
            f(t);
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.w_z);
        out.push(&mut self.u_z);
        out.push(&mut self.b_wz);
        out.push(&mut self.b_uz);
        out.push(&mut self.w_r);
        out.push(&mut self.u_r);
        out.push(&mut self.b_wr);
        out.push(&mut self.b_ur);
        out.push(&mut self.w_c);
        out.push(&mut self.u_c);
        out.push(&mut self.b_wc);
        out.push(&mut self.b_uc);
    }
}

pub struct BoundGru<'t> {
    w_z: Var<'t>,
    u_z: Var<'t>,
    b_wz: Var<'t>,
    b_uz: Var<'t>,
    w_r: Var<'t>,
    u_r: Var<'t>,
    b_wr: Var<'t>,
    b_ur: Var<'t>,
    w_c: Var<'t>,
    u_c: Var<'t>,
    b_wc: Var<'t>,
    b_uc: Var<'t>,
    hidden_size: usize,
    input_size: usize,
}

impl<'t> BoundGru<'t> {
    pub fn leaf_vars(&self) -> Vec<Var<'t>> {
        vec![
            self.w_z, self.u_z, self.b_wz, self.b_uz, self.w_r, self.u_r, self.b_wr, self.b_ur,
            self.w_c, self.u_c, self.b_wc, self.b_uc,
        ]
    }
}

/// One GRU update:
///   z = σ(W_z x + b_wz + U_z h + b_uz)
///   r = σ(W_r x + b_wr + U_r h + b_ur)
///   c = tanh(W_c x + b_wc + r ⊙ (U_c h + b_uc))
///   h' = (1 − z) ⊙ h + z ⊙ c
pub fn gru_cell_step<'t>(gru: &BoundGru<'t>, hidden: Var<'t>, input: Var<'t>) -> Result<Var<'t>> {
    if hidden.numel() != gru.hidden_size {
        return Err(Error::invalid(format!(
            "gru_cell_step: hidden length {} does not match hidden size {}",
            hidden.numel(),
            gru.hidden_size
        )));
    }
    if input.numel() != gru.input_size {
        return Err(Error::invalid(format!(
            "gru_cell_step: input length {} does not match input size {}",
            input.numel(),
            gru.input_size
        )));
    }
    let z = gru
        .w_z
        .matvec(input)
        .add(gru.b_wz)
        .add(gru.u_z.matvec(hidden))
        .add(gru.b_uz)
        .sigmoid();
    let r = gru
        .w_r
        .matvec(input)
        .add(gru.b_wr)
        .add(gru.u_r.matvec(hidden))
        .add(gru.b_ur)
        .sigmoid();
    let c = gru
        .w_c
        .matvec(input)
        .add(gru.b_wc)
        .add(r.mul(gru.u_c.matvec(hidden).add(gru.b_uc)))
        .tanh();
    let one_minus_z = z.neg().add_scalar(1.0);
    Ok(one_minus_z.mul(hidden).add(z.mul(c)))
}

/// Evaluation-only GRU update on plain tensors; operation order matches
/// [`gru_cell_step`] exactly so both paths agree bit-for-bit.
pub fn gru_eval(params: &GruParams, hidden: &Tensor, input: &Tensor) -> Result<Tensor> {
    if hidden.numel() != params.hidden_size {
        return Err(Error::invalid(format!(
            "gru_eval: hidden length {} does not match hidden size {}",
            hidden.numel(),
            params.hidden_size
        )));
    }
    if input.numel() != params.input_size {
        return Err(Error::invalid(format!(
            "gru_eval: input length {} does not match input size {}",
            input.numel(),
            params.input_size
        )));
    }
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z = params
        .w_z
        .matvec(input)
        .add(&params.b_wz)
        .add(&params.u_z.matvec(hidden))
        .add(&params.b_uz)
        .map(sigmoid);
    let r = params
        .w_r
        .matvec(input)
        .add(&params.b_wr)
        .add(&params.u_r.matvec(hidden))
        .add(&params.b_ur)
        .map(sigmoid);
    let c = params
        .w_c
        .matvec(input)
        .add(&params.b_wc)
        .add(&r.mul(&params.u_c.matvec(hidden).add(&params.b_uc)))
        .map(f64::tanh);
    let one_minus_z = z.map(|v| -v + 1.0);
    Ok(one_minus_z.mul(hidden).add(&z.mul(&c)))
}
