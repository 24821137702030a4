//! Structural causal models with a known contextual decomposition.

mod context;
mod dataset;
mod decomposition;
mod layout;
mod parent_set;

pub use context::{argmax_block, ContextKind, ContextSet, Interval, Labeler};
pub use dataset::{DatasetMeta, LabeledDataset, Row};
pub use decomposition::{ground_truth_parents, region_of, ContextualDecomposition, Region};
pub use layout::VarLayout;
pub use parent_set::ParentSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags};
use crate::synth::RandomFunction;

/// Marginal law of every parent coordinate (coordinates are independent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentLaw {
    Uniform01,
    StandardNormal,
}

impl ParentLaw {
    pub fn draw(self, rng: &mut rng::Rng) -> f64 {
        match self {
            ParentLaw::Uniform01 => rng::open01(rng),
            ParentLaw::StandardNormal => rng::standard_normal(rng),
        }
    }

    /// Log density of one coordinate.
    pub fn log_density(self, v: f64) -> f64 {
        match self {
            ParentLaw::Uniform01 if (0.0..1.0).contains(&v) => 0.0,
            ParentLaw::Uniform01 => f64::NEG_INFINITY,
            ParentLaw::StandardNormal => -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln(),
        }
    }
}

/// Mechanism of one region. It sees only the coordinates of its local parents,
/// concatenated in variable order, and a standard-normal noise draw `u`.
#[derive(Clone, Debug)]
pub enum Mechanism {
    /// `w . x_A + offset + scale * u`
    Linear { weights: Vec<f64>, offset: f64, noise_scale: f64 },
    /// `f(x_A) + scale * u`
    Additive { f: RandomFunction, noise_scale: f64 },
    /// `f([x_A, u])`
    NonAdditive(RandomFunction),
}

impl Mechanism {
    pub fn linear(weights: Vec<f64>, noise_scale: f64) -> Self {
        Mechanism::Linear { weights, offset: 0.0, noise_scale }
    }

    pub fn eval(&self, local: &[f64], u: f64) -> f64 {
        match self {
            Mechanism::Linear { weights, offset, noise_scale } => {
                weights.iter().zip(local).map(|(w, x)| w * x).sum::<f64>() + offset + noise_scale * u
            }
            Mechanism::Additive { f, noise_scale } => f.eval_scalar(local) + noise_scale * u,
            Mechanism::NonAdditive(f) => {
                let mut input = Vec::with_capacity(local.len() + 1);
                input.extend_from_slice(local);
                input.push(u);
                f.eval_scalar(&input)
            }
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Mechanism::Linear { weights, .. } => weights.len(),
            Mechanism::Additive { f, .. } => f.input_dim(),
            Mechanism::NonAdditive(f) => f.input_dim() - 1,
        }
    }
}

/// Executable SCM `Y = f_k(X_{A_k}, U)` for `X` in region `k`.
#[derive(Clone, Debug)]
pub struct Scm {
    name: String,
    layout: VarLayout,
    parent_law: ParentLaw,
    decomposition: ContextualDecomposition,
    /// Aligned with the decomposition's regions; `None` only for an empty remainder.
    mechanisms: Vec<Option<Mechanism>>,
}

impl Scm {
    pub fn new(
        name: impl Into<String>,
        layout: VarLayout,
        parent_law: ParentLaw,
        decomposition: ContextualDecomposition,
        mechanisms: Vec<Option<Mechanism>>,
    ) -> Result<Self> {
        if layout.n_vars() != decomposition.d() {
            return Err(Error::ShapeMismatch(format!(
                "layout has {} variables, decomposition {}",
                layout.n_vars(),
                decomposition.d()
            )));
        }
        if mechanisms.len() != decomposition.n_regions() {
            return Err(Error::ShapeMismatch(format!(
                "{} mechanisms for {} regions",
                mechanisms.len(),
                decomposition.n_regions()
            )));
        }
        for (k, m) in mechanisms.iter().enumerate() {
            let region = decomposition.region(k);
            let Some(m) = m else {
                if k == 0 && matches!(region.context, ContextSet::Empty) {
                    continue;
                }
                return Err(Error::invalid_config(format!("mechanisms[{k}]"), "missing mechanism"));
            };
            let want: usize = region.parents.iter().map(|v| layout.widths()[v]).sum();
            if m.input_dim() != want {
                return Err(Error::ShapeMismatch(format!(
                    "mechanism {k} reads {} coordinates, parents {} span {want}",
                    m.input_dim(),
                    region.parents
                )));
            }
        }
        Ok(Scm { name: name.into(), layout, parent_law, decomposition, mechanisms })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn parent_law(&self) -> ParentLaw {
        self.parent_law
    }

    pub fn decomposition(&self) -> &ContextualDecomposition {
        &self.decomposition
    }

    pub fn mechanism(&self, k: usize) -> Option<&Mechanism> {
        self.mechanisms[k].as_ref()
    }

    /// Evaluate `y` at `x` with noise `u`; returns `(y, region)`.
    pub fn eval(&self, x: &[f64], u: f64) -> Result<(f64, usize)> {
        let k = self.decomposition.region_of(x)?;
        let m = self.mechanisms[k].as_ref().ok_or_else(|| Error::NoRegion(x.to_vec()))?;
        let local = self.layout.gather(x, self.decomposition.parents(k));
        Ok((m.eval(&local, u), k))
    }

    pub fn draw_x(&self, rng: &mut rng::Rng) -> Vec<f64> {
        (0..self.layout.dim()).map(|_| self.parent_law.draw(rng)).collect()
    }

    /// Draw `n` rows. Row `i` reads its own substream, so the result does not
    /// depend on evaluation order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        let key = rng::derive_seed(seed, tags::SAMPLE);
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::substream(key, i as u64);
                let x = self.draw_x(&mut r);
                let u = rng::standard_normal(&mut r);
                let (y, k) = self.eval(&x, u)?;
                let mask = self.decomposition.parents(k);
                Ok(Row { x, y: vec![y], region: k, masks: vec![mask] })
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = DatasetMeta::new(&self.name, seed, self.layout.clone(), 1, 1);
        Ok(LabeledDataset::new(meta, rows))
    }
}

pub fn sample(scm: &Scm, n: usize, seed: u64) -> Result<LabeledDataset> {
    scm.sample(n, seed)
}
