use ndarray::{Array2, ArrayView2};

use super::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Fully connected network. Layer `i` computes `h . W_i + b_i`; the hidden
/// activation follows every layer except the last, whose output is linear.
///
/// Parameters are stored as `[W_0, b_0, W_1, b_1, ...]` with `W_i` of shape
/// `(in, out)` and `b_i` of shape `(1, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn new(sizes: &[usize], hidden: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = || bound * (2.0 * rng::open01(rng) - 1.0);
            params.push(Array2::from_shape_simple_fn((w[0], w[1]), &mut draw));
            params.push(Array2::from_shape_simple_fn((1, w[1]), &mut draw));
        }
        Mlp { sizes: sizes.to_vec(), hidden, params }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let params = sizes
            .windows(2)
            .flat_map(|w| [Array2::zeros((w[0], w[1])), Array2::zeros((1, w[1]))])
            .collect();
        Mlp { sizes: sizes.to_vec(), hidden, params }
    }

    pub fn from_params(sizes: &[usize], hidden: Activation, params: Vec<Array2<f64>>) -> Result<Self> {
        let shapes = Self::zeros(sizes, hidden).params.iter().map(|p| p.dim()).collect::<Vec<_>>();
        let got: Vec<_> = params.iter().map(|p| p.dim()).collect();
        if shapes != got {
            return Err(Error::ShapeMismatch(format!("expected parameter shapes {shapes:?}, got {got:?}")));
        }
        Ok(Mlp { sizes: sizes.to_vec(), hidden, params })
    }

    /// Zero the last layer so the output starts at exactly 0.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        self.params[n - 2].fill(0.0);
        self.params[n - 1].fill(0.0);
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Batched forward pass without recording gradients.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            let mut next = h.dot(&self.params[2 * l]);
            next += &self.params[2 * l + 1];
            if l + 1 < self.n_layers() {
                let act = self.hidden;
                next.mapv_inplace(|v| act.apply(v));
            }
            h = next;
        }
        Ok(h)
    }

    /// Put the parameters on `tape` as differentiable leaves.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for l in 0..self.n_layers() {
            h = tape.affine(h, vars[2 * l], vars[2 * l + 1])?;
            if l + 1 < self.n_layers() {
                h = self.hidden.on_tape(tape, h);
            }
        }
        Ok(h)
    }
}

/// Single-input forward pass.
pub fn mlp_forward(p: &Mlp, input: &[f64]) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(p.forward(x)?.into_raw_vec_and_offset().0)
}
