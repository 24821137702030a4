//! Synthetic SCMs: the d = 9 benchmark family, the worked example systems, and
//! the two-block toy system used for decision-boundary plots.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::rng::{self, tags};
use crate::scm::{
    ContextSet, ContextualDecomposition, Interval, Labeler, LabeledDataset, Mechanism, ParentLaw,
    ParentSet, Region, Scm, VarLayout,
};

/// Small frozen network with Gaussian weights of variance `1/fan_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFunction {
    widths: Vec<usize>,
    activation: Activation,
    /// Per layer, `out x in` row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl RandomFunction {
    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// True when the function is affine in its input.
    pub fn is_linear(&self) -> bool {
        self.widths.len() <= 2 || self.activation == Activation::Identity
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "random function input width");
        let mut h = x.to_vec();
        let n_layers = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = h.len();
            let mut next: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + w[o * fan_in..(o + 1) * fan_in].iter().zip(&h).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = next;
        }
        h
    }

    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        self.eval(x)[0]
    }
}

pub fn make_random_function(widths: &[usize], activation: Activation, seed: u64) -> Result<RandomFunction> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::invalid_config("widths", format!("{widths:?} must be nonempty and positive")));
    }
    let mut r = rng::seeded(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in widths.windows(2) {
        let sd = 1.0 / (w[0] as f64).sqrt();
        weights.push((0..w[0] * w[1]).map(|_| sd * rng::standard_normal(&mut r)).collect());
        biases.push((0..w[1]).map(|_| sd * rng::standard_normal(&mut r)).collect());
    }
    Ok(RandomFunction { widths: widths.to_vec(), activation, weights, biases })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentLayout {
    /// Regions own the thirds `{1,2,3}`, `{4,5,6}`, `{7,8,9}`.
    Uniform,
    /// Regions own `{1,2,3}`, `{4,...,9}`, and the full set.
    Nonuniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    LinearArgmax,
    NormBand,
    NonlinearArgmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Additive,
    NonAdditive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    pub parent_layout: ParentLayout,
    pub boundary: Boundary,
    pub noise: NoiseKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_d() -> usize {
    9
}

fn default_n_samples() -> usize {
    50_000
}

pub(crate) fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

const TAGS: [(&str, &[&str]); 3] = [
    ("parent_layout", &["uniform", "nonuniform"]),
    ("boundary", &["linear-argmax", "norm-band", "nonlinear-argmax"]),
    ("noise", &["additive", "non-additive"]),
];

impl SynthConfig {
    pub fn new(parent_layout: ParentLayout, boundary: Boundary, noise: NoiseKind, seed: u64) -> Self {
        SynthConfig {
            d: default_d(),
            parent_layout,
            boundary,
            noise,
            seed,
            n_samples: default_n_samples(),
            split: default_split(),
        }
    }

    /// Parse a JSON value, naming the offending key on bad tags.
    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        for (key, allowed) in TAGS {
            match v.get(key) {
                None => return Err(Error::invalid_config(key, "missing")),
                Some(serde_json::Value::String(s)) if allowed.contains(&s.as_str()) => {}
                Some(other) => {
                    return Err(Error::invalid_config(key, format!("unknown tag {other}, expected one of {allowed:?}")))
                }
            }
        }
        let cfg: SynthConfig =
            serde_json::from_value(v.clone()).map_err(|e| Error::invalid_config("dataset", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 || self.d % 3 != 0 || self.d > ParentSet::MAX_VARS {
            return Err(Error::invalid_config("d", format!("{} is not a positive multiple of 3", self.d)));
        }
        if self.n_samples < 10 * self.d {
            return Err(Error::invalid_config("n_samples", format!("{} < 10 * d", self.n_samples)));
        }
        if self.split.iter().any(|r| !(*r >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_config("split", format!("{:?} must be non-negative and sum to 1", self.split)));
        }
        Ok(())
    }
}

/// Thirds of `0..d` and the residue classes mod 3 (the `{1,4,7}`-style triples).
fn thirds(d: usize) -> [ParentSet; 3] {
    let t = d / 3;
    [0, 1, 2].map(|k| ParentSet::from_indices(k * t..(k + 1) * t))
}

fn residue_blocks(d: usize) -> Vec<Vec<usize>> {
    (0..3).map(|r| (r..d).step_by(3).collect()).collect()
}

const MIN_OCCUPANCY: f64 = 0.05;
const OCCUPANCY_DRAWS: usize = 50_000;
const MAX_RESEEDS: u64 = 32;

/// Build the SCM of a synthetic configuration. Argmax boundaries whose
/// smallest region holds less than 5% of the mass are redrawn.
pub fn build_config(cfg: &SynthConfig) -> Result<Scm> {
    cfg.validate()?;
    for attempt in 0..MAX_RESEEDS {
        let seed = if attempt == 0 { cfg.seed } else { rng::derive_seed(cfg.seed, tags::RESEED + 100 * attempt) };
        let scm = build_once(cfg, seed)?;
        if cfg.boundary == Boundary::NormBand || min_occupancy(&scm, OCCUPANCY_DRAWS, seed)? >= MIN_OCCUPANCY {
            return Ok(scm);
        }
    }
    Err(Error::invalid_config("seed", "no boundary with every region populated after reseeding"))
}

fn build_once(cfg: &SynthConfig, seed: u64) -> Result<Scm> {
    let d = cfg.d;
    let contexts: Vec<ContextSet> = match cfg.boundary {
        Boundary::LinearArgmax | Boundary::NonlinearArgmax => {
            let g = if cfg.boundary == Boundary::LinearArgmax {
                make_random_function(&[d / 3, 1], Activation::Identity, rng::derive_seed(seed, tags::BOUNDARY_FN))?
            } else {
                make_random_function(&[d / 3, 10, 1], Activation::Tanh, rng::derive_seed(seed, tags::BOUNDARY_FN))?
            };
            let score = Arc::new(g);
            let blocks = Arc::new(residue_blocks(d));
            (0..3)
                .map(|w| ContextSet::Argmax { score: score.clone(), blocks: blocks.clone(), winner: w })
                .collect()
        }
        Boundary::NormBand => {
            let (c1, c2) = calibrate_norm_thresholds(d, rng::derive_seed(seed, tags::CALIBRATE));
            vec![
                ContextSet::NormBand { lo: 0.0, hi: c1 },
                ContextSet::NormBand { lo: c1, hi: c2 },
                ContextSet::NormBand { lo: c2, hi: f64::INFINITY },
            ]
        }
    };
    let sets = match cfg.parent_layout {
        ParentLayout::Uniform => thirds(d).to_vec(),
        ParentLayout::Nonuniform => {
            let t = thirds(d);
            vec![t[0], t[1].union(t[2]), ParentSet::full(d)]
        }
    };
    let layout = VarLayout::scalar(d);
    let mech = |k: usize, parents: ParentSet| -> Result<Mechanism> {
        let fseed = rng::derive_seed(seed, tags::MECHANISM + 100 * k as u64);
        Ok(match cfg.noise {
            NoiseKind::Additive => Mechanism::Additive {
                f: make_random_function(&[parents.len(), 10, 1], Activation::Tanh, fseed)?,
                noise_scale: 1.0,
            },
            NoiseKind::NonAdditive => {
                Mechanism::NonAdditive(make_random_function(&[parents.len() + 1, 10, 1], Activation::Tanh, fseed)?)
            }
        })
    };
    let full = ParentSet::full(d);
    let mut listed = Vec::new();
    let mut mechanisms = Vec::new();
    let mut remainder = None;
    for (k, (ctx, parents)) in contexts.into_iter().zip(sets).enumerate() {
        let m = mech(k + 1, parents)?;
        if parents == full {
            remainder = Some((ctx, m));
        } else {
            listed.push(Region::new(ctx, parents));
            mechanisms.push(Some(m));
        }
    }
    let (cd, m0) = match remainder {
        // The full-parent region is the complement of the other two.
        Some((_, m)) => (ContextualDecomposition::with_remainder(d, listed)?, Some(m)),
        None => (ContextualDecomposition::covering(d, listed)?, None),
    };
    mechanisms.insert(0, m0);
    let name = format!(
        "synthetic/{}/{}/{}",
        serde_plain(&cfg.parent_layout),
        serde_plain(&cfg.boundary),
        serde_plain(&cfg.noise)
    );
    Scm::new(name, layout, ParentLaw::StandardNormal, cd, mechanisms)
}

fn serde_plain<T: Serialize>(t: &T) -> String {
    serde_json::to_value(t).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Smallest empirical region mass over `n` parent draws.
pub fn min_occupancy(scm: &Scm, n: usize, seed: u64) -> Result<f64> {
    let counts = region_counts(scm, n, rng::derive_seed(seed, tags::OCCUPANCY))?;
    let populated = counts.iter().enumerate().filter(|(k, _)| {
        *k != 0 || !matches!(scm.decomposition().region(0).context, ContextSet::Empty)
    });
    Ok(populated.map(|(_, &c)| c as f64 / n as f64).fold(f64::INFINITY, f64::min))
}

pub fn region_counts(scm: &Scm, n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut counts = vec![0; scm.decomposition().n_regions()];
    let mut r = rng::seeded(seed);
    for _ in 0..n {
        let x = scm.draw_x(&mut r);
        counts[scm.decomposition().region_of(&x)?] += 1;
    }
    Ok(counts)
}

/// One-third and two-thirds quantiles of `||x||` for `x ~ N(0, I_d)`,
/// estimated from 10^5 draws.
pub fn calibrate_norm_thresholds(d: usize, seed: u64) -> (f64, f64) {
    const N: usize = 100_000;
    let mut r = rng::seeded(seed);
    let mut norms: Vec<f64> = (0..N)
        .map(|_| (0..d).map(|_| rng::standard_normal(&mut r).powi(2)).sum::<f64>().sqrt())
        .collect();
    norms.sort_by(f64::total_cmp);
    (norms[N / 3], norms[2 * N / 3])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Example1,
    Example2,
    CanonicalExample,
    Toy2d,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 4] =
        [ExampleKind::Example1, ExampleKind::Example2, ExampleKind::CanonicalExample, ExampleKind::Toy2d];

    pub fn name(self) -> &'static str {
        match self {
            ExampleKind::Example1 => "example1",
            ExampleKind::Example2 => "example2",
            ExampleKind::CanonicalExample => "canonical_example",
            ExampleKind::Toy2d => "toy2d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid_config("example", format!("unknown example `{s}`")))
    }
}

/// Noise scale of the toy system's additive mechanisms.
pub const TOY2D_NOISE: f64 = 0.1;
const TOY2D_SEED: u64 = 0x7079_3264;

/// Radius splitting `N(0, I_6)` mass in half: the median of a chi distribution
/// with six degrees of freedom.
pub fn toy2d_radius() -> f64 {
    ChiSquared::new(6.0).expect("dof > 0").inverse_cdf(0.5).sqrt()
}

pub fn make_example(which: ExampleKind) -> Scm {
    let x = |i: usize| ParentSet::from_one_based(&[i]);
    let lin = |w: Vec<f64>, s: f64| Some(Mechanism::linear(w, s));
    let built = match which {
        ExampleKind::Example1 => {
            let labeler = Labeler::new("x1*x2 < 1/2", |x: &[f64]| if x[0] * x[1] < 0.5 { 1 } else { 2 });
            let cd = ContextualDecomposition::covering(
                2,
                vec![
                    Region::new(ContextSet::Labeled { labeler: labeler.clone(), index: 1 }, x(1)),
                    Region::new(ContextSet::Labeled { labeler, index: 2 }, x(2)),
                ],
            );
            cd.and_then(|cd| {
                Scm::new("example1", VarLayout::scalar(2), ParentLaw::Uniform01, cd, vec![
                    None,
                    lin(vec![1.0], 1.0),
                    lin(vec![1.0], 1.0),
                ])
            })
        }
        ExampleKind::Example2 => {
            let lo = Interval::below(0.5);
            let hi = Interval::at_least(0.5);
            let cd = ContextualDecomposition::with_remainder(
                3,
                vec![
                    Region::new(ContextSet::Intervals(vec![lo, lo, Interval::ALL]), x(3)),
                    Region::new(ContextSet::Intervals(vec![hi, hi, Interval::ALL]), x(3)),
                ],
            );
            cd.and_then(|cd| {
                Scm::new("example2", VarLayout::scalar(3), ParentLaw::Uniform01, cd, vec![
                    lin(vec![1.0, 1.0, 1.0], 1.0),
                    lin(vec![1.0], 1.0),
                    lin(vec![1.0], 2.0),
                ])
            })
        }
        ExampleKind::CanonicalExample => {
            let cd = ContextualDecomposition::covering(
                2,
                vec![
                    Region::new(ContextSet::Intervals(vec![Interval::ALL, Interval::at_least(0.8)]), x(1)),
                    Region::new(ContextSet::Intervals(vec![Interval::below(0.5), Interval::below(0.8)]), x(2)),
                    Region::new(ContextSet::Intervals(vec![Interval::at_least(0.5), Interval::below(0.8)]), x(2)),
                ],
            );
            cd.and_then(|cd| {
                Scm::new("canonical_example", VarLayout::scalar(2), ParentLaw::Uniform01, cd, vec![
                    None,
                    lin(vec![1.0], 1.0),
                    lin(vec![1.0], 1.0),
                    lin(vec![1.0], 2.0),
                ])
            })
        }
        ExampleKind::Toy2d => {
            let eps = toy2d_radius();
            let f = |k: u64| -> Result<Mechanism> {
                Ok(Mechanism::Additive {
                    f: make_random_function(&[3, 10, 1], Activation::Tanh, rng::derive_seed(TOY2D_SEED, k))?,
                    noise_scale: TOY2D_NOISE,
                })
            };
            let cd = ContextualDecomposition::covering(
                2,
                vec![
                    Region::new(ContextSet::NormBand { lo: 0.0, hi: eps }, x(1)),
                    Region::new(ContextSet::NormBand { lo: eps, hi: f64::INFINITY }, x(2)),
                ],
            );
            cd.and_then(|cd| {
                Scm::new("toy2d", VarLayout::blocks(vec![3, 3]), ParentLaw::StandardNormal, cd, vec![
                    None,
                    Some(f(1)?),
                    Some(f(2)?),
                ])
            })
        }
    };
    built.expect("example systems are well-formed")
}

/// Shuffle-and-cut split of a dataset; see [`LabeledDataset::split`].
pub fn split(ds: &LabeledDataset, ratios: [f64; 3]) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    ds.split(ratios)
}

/// Generate and split a synthetic configuration.
pub fn generate(cfg: &SynthConfig) -> Result<(Scm, LabeledDataset)> {
    let scm = build_config(cfg)?;
    let mut ds = scm.sample(cfg.n_samples, cfg.seed)?;
    ds.meta.extra.insert("config".into(), serde_json::to_value(cfg).expect("serializable"));
    Ok((scm, ds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_function_is_reproducible_and_seed_dependent() {
        let f = make_random_function(&[3, 10, 1], Activation::Tanh, 5).unwrap();
        let f2 = make_random_function(&[3, 10, 1], Activation::Tanh, 5).unwrap();
        let g = make_random_function(&[3, 10, 1], Activation::Tanh, 6).unwrap();
        assert!(f.eval(&[0.0; 3])[0].is_finite());
        assert_eq!(f.eval(&[0.0; 3]), f2.eval(&[0.0; 3]));
        let mut r = rng::seeded(1);
        let mut max_diff: f64 = 0.0;
        for _ in 0..10 {
            let p: Vec<f64> = (0..3).map(|_| rng::standard_normal(&mut r)).collect();
            max_diff = max_diff.max((f.eval_scalar(&p) - g.eval_scalar(&p)).abs());
        }
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn linear_boundary_function_is_linear() {
        let g = make_random_function(&[3, 1], Activation::Identity, 1).unwrap();
        assert!(g.is_linear());
        let a = [0.3, -1.0, 2.0];
        let b = [1.5, 0.5, -0.25];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let lhs = g.eval_scalar(&mid);
        let rhs = 0.5 * (g.eval_scalar(&a) + g.eval_scalar(&b));
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(!make_random_function(&[3, 10, 1], Activation::Tanh, 1).unwrap().is_linear());
        assert!(make_random_function(&[], Activation::Tanh, 1).is_err());
    }

    #[test]
    fn norm_thresholds() {
        let (c1, c2) = calibrate_norm_thresholds(1, 2);
        assert!(0.0 < c1 && c1 < c2);
        assert_eq!(calibrate_norm_thresholds(9, 3), calibrate_norm_thresholds(9, 3));
        let (c1, c2) = calibrate_norm_thresholds(9, 3);
        let mut r = rng::seeded(99);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let norm = (0..9).map(|_| rng::standard_normal(&mut r).powi(2)).sum::<f64>().sqrt();
            counts[if norm < c1 { 0 } else if norm < c2 { 1 } else { 2 }] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn toy2d_radius_is_chi6_median() {
        // Median of chi^2_6 from the regularized incomplete gamma closed form:
        // P(chi^2_6 <= t) = 1 - exp(-t/2) (1 + t/2 + t^2/8).
        let cdf = |t: f64| 1.0 - (-t / 2.0).exp() * (1.0 + t / 2.0 + t * t / 8.0);
        let r = toy2d_radius();
        assert!((cdf(r * r) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bad_tag_names_key() {
        let v = serde_json::json!({"parent_layout": "uniform", "boundary": "zigzag", "noise": "additive"});
        match SynthConfig::from_value(&v) {
            Err(Error::InvalidConfig { key, .. }) => assert_eq!(key, "boundary"),
            other => panic!("{other:?}"),
        }
    }
}
