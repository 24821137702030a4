use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors, Activation, Mlp, Tape};
use crate::rng::{self, tags, Rng};
use crate::scm::{LabeledDataset, ParentSet, VarLayout};

/// Where the gate probabilities come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateSource {
    /// The gate network `g`.
    Learned,
    /// Hard ground-truth local parent masks from the data (diagnostic only).
    Oracle,
    /// Every gate open: a plain conditional density regressor.
    AllOpen,
}

/// Exponential anneal from `start` to `end` over the epochs, never below `floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Temperature {
    pub start: f64,
    pub end: f64,
    pub floor: f64,
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature { start: 1.0, end: 0.3, floor: 0.3 }
    }
}

impl Temperature {
    /// Temperature during epoch `epoch` (0-based) of `epochs`.
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        let frac = if epochs <= 1 { 0.0 } else { epoch as f64 / (epochs - 1) as f64 };
        (self.start * (self.end / self.start).powf(frac)).max(self.floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NcdHyper {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Monte-Carlo gate samples per data point.
    pub n_mc: usize,
    pub temperature: Temperature,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the `sum |pi|` penalty.
    pub l1_lambda: f64,
    pub gates: GateSource,
    pub seed: u64,
}

impl Default for NcdHyper {
    fn default() -> Self {
        NcdHyper {
            hidden: vec![128, 128, 128],
            activation: Activation::Tanh,
            n_mc: 5,
            temperature: Temperature::default(),
            lr: 1e-2,
            weight_decay: 1e-5,
            batch_size: 1000,
            epochs: 100,
            l1_lambda: 0.0,
            gates: GateSource::Learned,
            seed: 0,
        }
    }
}

impl NcdHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, r: String| Err(Error::invalid_config(k, r));
        if self.n_mc == 0 {
            return bad("n_mc", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.l1_lambda >= 0.0) {
            return bad("lr", "lr must be positive, weight_decay and l1_lambda non-negative".into());
        }
        let t = self.temperature;
        if !(t.start > 0.0 && t.end > 0.0 && t.floor > 0.0) {
            return bad("temperature", format!("{t:?} must be positive"));
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive".into());
        }
        Ok(())
    }
}

/// Inputs, targets and ground-truth masks for one target variable.
#[derive(Clone, Debug)]
pub struct NcdData {
    pub layout: VarLayout,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub truth: Vec<ParentSet>,
}

impl NcdData {
    /// Columns of target `target` (0-based) of a dataset.
    pub fn from_dataset(ds: &LabeledDataset, target: usize) -> Result<Self> {
        let meta = &ds.meta;
        if target >= meta.n_targets {
            return Err(Error::invalid_config("target", format!("{target} >= {} targets", meta.n_targets)));
        }
        let (dx, tw) = (meta.x_dim(), meta.target_width);
        let mut x = Array2::zeros((ds.len(), dx));
        let mut y = Array2::zeros((ds.len(), tw));
        let mut truth = Vec::with_capacity(ds.len());
        for (i, row) in ds.rows.iter().enumerate() {
            if row.x.len() != dx || row.y.len() != meta.y_dim() || row.masks.len() != meta.n_targets {
                return Err(Error::ShapeMismatch(format!("row {i} does not match the dataset layout")));
            }
            x.row_mut(i).assign(&ndarray::aview1(&row.x));
            y.row_mut(i).assign(&ndarray::aview1(&row.y[target * tw..(target + 1) * tw]));
            truth.push(row.masks[target]);
        }
        Ok(NcdData { layout: meta.layout(), x, y, truth })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> NcdData {
        NcdData {
            layout: self.layout.clone(),
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            truth: rows.iter().map(|&i| self.truth[i]).collect(),
        }
    }
}

/// `(x_1 z_1, ..., x_d z_d, z_1, ..., z_d)`.
pub fn build_masked_input(x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if x.len() != z.len() {
        return Err(Error::ShapeMismatch(format!("x has {} entries, z has {}", x.len(), z.len())));
    }
    Ok(x.iter().zip(z).map(|(a, b)| a * b).chain(z.iter().copied()).collect())
}

/// Loss value and parameter gradients for one minibatch.
pub struct LossEval {
    pub loss: f64,
    /// Negative log-likelihood part, summed over the batch.
    pub nll: f64,
    pub grads_f: Vec<Array2<f64>>,
    pub grads_g: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NcdModel {
    pub hyper: NcdHyper,
    layout: VarLayout,
    y_dim: usize,
    pub f: Mlp,
    pub g: Mlp,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
}

impl NcdModel {
    /// Fresh model with identity standardization.
    pub fn new(layout: VarLayout, y_dim: usize, hyper: NcdHyper) -> Result<Self> {
        hyper.validate()?;
        let (dx, nv) = (layout.dim(), layout.n_vars());
        let mut f_sizes = vec![dx + nv];
        f_sizes.extend(&hyper.hidden);
        f_sizes.push(2 * y_dim);
        let mut g_sizes = vec![dx];
        g_sizes.extend(&hyper.hidden);
        g_sizes.push(nv);
        let f = Mlp::new(&f_sizes, hyper.activation, &mut rng::seeded(rng::derive_seed(hyper.seed, tags::INIT_F)));
        let mut g = Mlp::new(&g_sizes, hyper.activation, &mut rng::seeded(rng::derive_seed(hyper.seed, tags::INIT_G)));
        // pi starts at exactly 1/2 for every input.
        g.zero_output_layer();
        Ok(NcdModel {
            hyper,
            layout,
            y_dim,
            f,
            g,
            x_mean: vec![0.0; dx],
            x_std: vec![1.0; dx],
            y_mean: vec![0.0; y_dim],
            y_std: vec![1.0; y_dim],
        })
    }

    /// Fresh model standardizing inputs and targets by the statistics of `train`.
    pub fn for_data(train: &NcdData, hyper: NcdHyper) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut m = Self::new(train.layout.clone(), train.y.ncols(), hyper)?;
        let stats = |a: &Array2<f64>| -> (Vec<f64>, Vec<f64>) {
            let mean = a.mean_axis(Axis(0)).unwrap();
            let std = a.std_axis(Axis(0), 0.0);
            let std = std.mapv(|s| if s > 1e-12 { s } else { 1.0 });
            (mean.to_vec(), std.to_vec())
        };
        (m.x_mean, m.x_std) = stats(&train.x);
        (m.y_mean, m.y_std) = stats(&train.y);
        Ok(m)
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn y_dim(&self) -> usize {
        self.y_dim
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn standardize_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.x_mean[j]) / self.x_std[j]);
        }
        out
    }

    pub fn standardize_y(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.y_mean[j]) / self.y_std[j]);
        }
        out
    }

    /// Gate probabilities for raw (unstandardized) inputs, one row per input.
    pub fn parent_scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let logits = self.g.forward(self.standardize_x(x).view())?;
        Ok(logits.mapv(crate::nn::sigmoid))
    }

    /// Density-head output `(mean, log_var)` in standardized units for a raw
    /// input and a gate vector.
    pub fn density(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.layout.dim() || z.len() != self.n_vars() {
            return Err(Error::ShapeMismatch(format!(
                "density input: x {} (want {}), z {} (want {})",
                x.len(),
                self.layout.dim(),
                z.len(),
                self.n_vars()
            )));
        }
        let xs = self.standardize_x(ArrayView2::from_shape((1, x.len()), x).unwrap());
        let zx = expand(z, self.layout.widths());
        let mut input: Vec<f64> = xs.iter().zip(&zx).map(|(a, b)| a * b).collect();
        input.extend_from_slice(z);
        crate::nn::mlp_forward(&self.f, &input)
    }

    /// Logistic noise for `n_mc` gate draws of `rows` rows.
    pub fn draw_noise(&self, rows: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((self.hyper.n_mc * rows, self.n_vars()), || rng::logistic(rng))
    }

    /// Loss and gradients on standardized `x`, `y` with the supplied gate noise.
    /// `truth` is only read for [`GateSource::Oracle`].
    pub fn loss_and_grad(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        truth: &[ParentSet],
        noise: &Array2<f64>,
        tau: f64,
    ) -> Result<LossEval> {
        self.evaluate(x, y, truth, noise, tau, true)
    }

    pub fn loss_only(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        truth: &[ParentSet],
        noise: &Array2<f64>,
        tau: f64,
    ) -> Result<f64> {
        Ok(self.evaluate(x, y, truth, noise, tau, false)?.loss)
    }

    fn evaluate(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        truth: &[ParentSet],
        noise: &Array2<f64>,
        tau: f64,
        with_grad: bool,
    ) -> Result<LossEval> {
        let b = x.nrows();
        if b == 0 {
            return Err(Error::EmptyInput);
        }
        if !(tau > 0.0) {
            return Err(Error::invalid_config("temperature", format!("{tau} must be positive")));
        }
        let n = self.hyper.n_mc;
        let nv = self.n_vars();
        let mut t = Tape::new();
        let fv = self.f.register(&mut t);
        let gv = self.g.register(&mut t);
        let xv = t.constant(x.clone());
        let (z, logits) = match self.hyper.gates {
            GateSource::Learned => {
                let logits = self.g.forward_tape(&mut t, &gv, xv)?;
                let tiled = t.tile_rows(logits, n);
                (t.binary_concrete(tiled, noise, tau)?, Some(logits))
            }
            GateSource::Oracle | GateSource::AllOpen => {
                let mut z = Array2::ones((b, nv));
                if self.hyper.gates == GateSource::Oracle {
                    for (i, m) in truth.iter().enumerate().take(b) {
                        for j in 0..nv {
                            z[[i, j]] = if m.contains(j) { 1.0 } else { 0.0 };
                        }
                    }
                }
                let zc = t.constant(z);
                (t.tile_rows(zc, n), None)
            }
        };
        let zx = t.expand_cols(z, self.layout.widths())?;
        let x_tiled = t.tile_rows(xv, n);
        let masked = t.mul(x_tiled, zx)?;
        let input = t.concat_cols(&[masked, z])?;
        let out = self.f.forward_tape(&mut t, &fv, input)?;
        let mean = t.slice_cols(out, 0, self.y_dim)?;
        let log_var = t.slice_cols(out, self.y_dim, 2 * self.y_dim)?;
        let yc = t.constant(y.clone());
        let y_tiled = t.tile_rows(yc, n);
        let ll = t.gaussian_loglik(y_tiled, mean, log_var)?;
        let ll_row = t.row_sum(ll);
        let lme = t.log_mean_exp_groups(ll_row, n)?;
        let total = t.sum_all(lme);
        let nll_v = t.scale(total, -1.0);
        let nll = t.scalar(nll_v);
        let loss_v = match (logits, self.hyper.l1_lambda) {
            (Some(logits), lambda) if lambda > 0.0 => {
                let pi = t.sigmoid(logits);
                let l1 = t.sum_all(pi);
                let pen = t.scale(l1, lambda);
                t.add(nll_v, pen)?
            }
            _ => nll_v,
        };
        let loss = t.scalar(loss_v);
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: format!("loss = {loss} on a batch of {b} rows") });
        }
        let (grads_f, grads_g) = if with_grad {
            let mut grads = t.backward(loss_v)?;
            let gf = fv.iter().zip(self.f.params()).map(|(&v, p)| grads.take_or_zeros(v, p.dim())).collect();
            let gg = gv.iter().zip(self.g.params()).map(|(&v, p)| grads.take_or_zeros(v, p.dim())).collect();
            (gf, gg)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(LossEval { loss, nll, grads_f, grads_g })
    }

    /// Per-row negative log-likelihood (standardized units) under fresh gate
    /// samples drawn from `seed`.
    pub fn mean_nll(&self, data: &NcdData, tau: f64, seed: u64) -> Result<f64> {
        let x = self.standardize_x(data.x.view());
        let y = self.standardize_y(data.y.view());
        let mut rng = rng::seeded(seed);
        let chunk = self.hyper.batch_size.max(1);
        let mut total = 0.0;
        let mut start = 0;
        while start < data.len() {
            let end = (start + chunk).min(data.len());
            let xb = x.slice(s![start..end, ..]).to_owned();
            let yb = y.slice(s![start..end, ..]).to_owned();
            let noise = self.draw_noise(end - start, &mut rng);
            total += self.evaluate(&xb, &yb, &data.truth[start..end], &noise, tau, false)?.nll;
            start = end;
        }
        Ok(total / data.len().max(1) as f64)
    }

    /// Write `<stem>.bin` / `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut named = Vec::new();
        for (i, p) in self.f.params().iter().enumerate() {
            named.push((format!("f.{i}"), p));
        }
        for (i, p) in self.g.params().iter().enumerate() {
            named.push((format!("g.{i}"), p));
        }
        let extra = serde_json::json!({
            "hyper": self.hyper,
            "widths": self.layout.widths(),
            "y_dim": self.y_dim,
            "x_mean": self.x_mean,
            "x_std": self.x_std,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        });
        save_tensors(stem, &named, extra)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (manifest, tensors) = load_tensors(stem)?;
        let json = stem.with_extension("json");
        let field = |k: &str| manifest.extra.get(k).cloned().ok_or_else(|| Error::parse(&json, format!("missing `{k}`")));
        let de = |k: &str| -> Result<serde_json::Value> { field(k) };
        let hyper: NcdHyper = serde_json::from_value(de("hyper")?).map_err(|e| Error::parse(&json, e))?;
        let widths: Vec<usize> = serde_json::from_value(de("widths")?).map_err(|e| Error::parse(&json, e))?;
        let y_dim: usize = serde_json::from_value(de("y_dim")?).map_err(|e| Error::parse(&json, e))?;
        let vecf = |k: &str| -> Result<Vec<f64>> { serde_json::from_value(de(k)?).map_err(|e| Error::parse(&json, e)) };
        let mut m = NcdModel::new(VarLayout::blocks(widths), y_dim, hyper)?;
        m.x_mean = vecf("x_mean")?;
        m.x_std = vecf("x_std")?;
        m.y_mean = vecf("y_mean")?;
        m.y_std = vecf("y_std")?;
        let take = |prefix: &str| -> Vec<Array2<f64>> {
            tensors.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.clone()).collect()
        };
        m.f = Mlp::from_params(&m.f.sizes().to_vec(), m.f.hidden(), take("f."))?;
        m.g = Mlp::from_params(&m.g.sizes().to_vec(), m.g.hidden(), take("g."))?;
        Ok(m)
    }
}

fn expand(z: &[f64], widths: &[usize]) -> Vec<f64> {
    z.iter().zip(widths).flat_map(|(&v, &w)| std::iter::repeat_n(v, w)).collect()
}

/// Negative Monte-Carlo objective summed over a raw batch: standardizes,
/// draws gate noise from `rng`, and evaluates without gradients.
pub fn ncd_loss(model: &NcdModel, batch: &NcdData, tau: f64, rng: &mut Rng) -> Result<f64> {
    let x = model.standardize_x(batch.x.view());
    let y = model.standardize_y(batch.y.view());
    let noise = model.draw_noise(batch.len(), rng);
    model.loss_only(&x, &y, &batch.truth, &noise, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hyper() -> NcdHyper {
        NcdHyper { hidden: vec![8, 8], n_mc: 3, ..Default::default() }
    }

    fn toy_data(n: usize, seed: u64) -> NcdData {
        let mut r = rng::seeded(seed);
        let x = Array2::from_shape_simple_fn((n, 3), || rng::standard_normal(&mut r));
        let y = Array2::from_shape_fn((n, 1), |(i, _)| x[[i, 0]] + 0.1 * x[[i, 2]]);
        NcdData { layout: VarLayout::scalar(3), x, y, truth: vec![ParentSet::from_bits(0b101); n] }
    }

    #[test]
    fn masked_input_worked_example() {
        let v = build_masked_input(&[1.5, 2.5, 3.5], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(v, vec![1.5, 0.0, 3.5, 1.0, 0.0, 1.0]);
        assert_eq!(build_masked_input(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(build_masked_input(&[1.0, 2.0], &[1.0, 1.0]).unwrap(), vec![1.0, 2.0, 1.0, 1.0]);
        assert!(build_masked_input(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn untrained_gates_are_one_half() {
        let m = NcdModel::for_data(&toy_data(50, 1), small_hyper()).unwrap();
        let pi = m.parent_scores(toy_data(10, 2).x.view()).unwrap();
        assert!(pi.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn saturated_gates_reduce_to_plain_nll() {
        let data = toy_data(20, 3);
        let mut hyper = small_hyper();
        hyper.n_mc = 1;
        let mut m = NcdModel::for_data(&data, hyper).unwrap();
        // Huge final-layer bias: every gate is open.
        let n = m.g.params().len();
        m.g.params_mut()[n - 1].fill(60.0);
        let x = m.standardize_x(data.x.view());
        let y = m.standardize_y(data.y.view());
        let noise = m.draw_noise(data.len(), &mut rng::seeded(4));
        let loss = m.loss_only(&x, &y, &data.truth, &noise, 0.5).unwrap();
        let mut expect = 0.0;
        for i in 0..data.len() {
            let mut input: Vec<f64> = x.row(i).to_vec();
            input.extend([1.0; 3]);
            let o = crate::nn::mlp_forward(&m.f, &input).unwrap();
            expect -= crate::nn::gaussian_loglik(y[[i, 0]], o[0], o[1]);
        }
        assert!((loss - expect).abs() < 1e-9 * expect.abs().max(1.0), "{loss} vs {expect}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = NcdModel::for_data(&toy_data(30, 5), small_hyper()).unwrap();
        let stem = dir.path().join("model");
        m.save(&stem).unwrap();
        assert_eq!(NcdModel::load(&stem).unwrap(), m);
    }

    #[test]
    fn temperature_schedule() {
        let t = Temperature::default();
        assert_eq!(t.at(0, 100), 1.0);
        assert!((t.at(99, 100) - 0.3).abs() < 1e-12);
        assert!(t.at(50, 100) < 1.0 && t.at(50, 100) > 0.3);
        let steep = Temperature { start: 1.0, end: 0.01, floor: 0.3 };
        assert_eq!(steep.at(99, 100), 0.3);
    }
}
