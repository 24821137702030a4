use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{GateSource, NcdData, NcdModel};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::rng::{self, tags};
use crate::scm::{ContextSet, ContextualDecomposition, ParentSet, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    /// Mean per-row negative log-likelihood over the epoch's minibatches.
    pub train_nll: f64,
    pub val_nll: f64,
    pub temperature: f64,
    /// Mean gate probability per parent variable on the validation rows.
    pub mean_pi: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<TrainingRecord>,
}

/// Minibatch Adam on the NCD objective for `model.hyper.epochs` epochs.
pub fn train(model: NcdModel, train: &NcdData, val: &NcdData) -> Result<(NcdModel, TrainingHistory)> {
    train_with(model, train, val, |_, _| Ok(()))
}

/// As [`train`], calling `on_epoch(epoch, model)` after every completed epoch
/// (1-based), e.g. to write periodic checkpoints.
pub fn train_with(
    mut model: NcdModel,
    train: &NcdData,
    val: &NcdData,
    mut on_epoch: impl FnMut(usize, &NcdModel) -> Result<()>,
) -> Result<(NcdModel, TrainingHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hyper = model.hyper.clone();
    let learn_gates = hyper.gates == GateSource::Learned;
    let x = model.standardize_x(train.x.view());
    let y = model.standardize_y(train.y.view());
    let adam_cfg = AdamConfig { lr: hyper.lr, weight_decay: hyper.weight_decay, ..Default::default() };
    let mut shapes: Vec<_> = model.f.params().iter().map(|p| p.dim()).collect();
    if learn_gates {
        shapes.extend(model.g.params().iter().map(|p| p.dim()));
    }
    let mut adam = AdamState::new(adam_cfg, shapes);
    let shuffle_key = rng::derive_seed(hyper.seed, tags::SHUFFLE);
    let gumbel_key = rng::derive_seed(hyper.seed, tags::GUMBEL);
    let val_seed = rng::derive_seed(hyper.seed, tags::VALIDATE);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..hyper.epochs {
        let tau = hyper.temperature.at(epoch, hyper.epochs);
        order.sort_unstable();
        order.shuffle(&mut rng::substream(shuffle_key, epoch as u64));
        let mut gumbel = rng::substream(gumbel_key, epoch as u64);
        let mut nll_sum = 0.0;
        for (bi, rows) in order.chunks(hyper.batch_size).enumerate() {
            let xb = x.select(Axis(0), rows);
            let yb = y.select(Axis(0), rows);
            let truth: Vec<ParentSet> = rows.iter().map(|&i| train.truth[i]).collect();
            let noise = model.draw_noise(rows.len(), &mut gumbel);
            let ev = model.loss_and_grad(&xb, &yb, &truth, &noise, tau).map_err(|e| match e {
                Error::NonFinite { context } => {
                    Error::NonFinite { context: format!("epoch {}, batch {bi}: {context}", epoch + 1) }
                }
                other => other,
            })?;
            nll_sum += ev.nll;
            let mut params: Vec<&mut Array2<f64>> = model.f.params_mut().iter_mut().collect();
            let mut grads: Vec<&Array2<f64>> = ev.grads_f.iter().collect();
            if learn_gates {
                params.extend(model.g.params_mut().iter_mut());
                grads.extend(ev.grads_g.iter());
            }
            adam.step(&mut params, &grads)?;
        }
        let val_nll = model.mean_nll(val, tau, val_seed)?;
        let pi = model.parent_scores(val.x.view())?;
        let mean_pi = pi.mean_axis(Axis(0)).unwrap().to_vec();
        history.records.push(TrainingRecord {
            epoch: epoch + 1,
            train_nll: nll_sum / train.len() as f64,
            val_nll,
            temperature: tau,
            mean_pi,
        });
        on_epoch(epoch + 1, &model)?;
    }
    Ok((model, history))
}

/// Gate probabilities at a single raw input.
pub fn infer_parent_scores(model: &NcdModel, x: &[f64]) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(model.parent_scores(view)?.row(0).to_vec())
}

/// Regions read off a trained model: one region per observed hard gate pattern.
#[derive(Clone, Debug)]
pub struct PredictedDecomposition {
    pub cd: ContextualDecomposition,
    /// Patterns with their sample counts, most frequent first.
    pub patterns: Vec<(ParentSet, usize)>,
}

/// Threshold the gates at `threshold` on each sample, group samples by pattern
/// and turn each group into an explicit-grid region with cell side `cell`.
pub fn extract_decomposition(
    model: &NcdModel,
    samples: &[Vec<f64>],
    threshold: f64,
    cell: f64,
) -> Result<PredictedDecomposition> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = model.n_vars();
    let dim = model.layout().dim();
    let mut flat = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        if s.len() != dim {
            return Err(Error::ShapeMismatch(format!("sample of length {}, model expects {dim}", s.len())));
        }
        flat.extend_from_slice(s);
    }
    let x = Array2::from_shape_vec((samples.len(), dim), flat).unwrap();
    let pi = model.parent_scores(x.view())?;
    let mut groups: BTreeMap<ParentSet, Vec<usize>> = BTreeMap::new();
    for (i, row) in pi.rows().into_iter().enumerate() {
        let pattern = ParentSet::from_indices((0..d).filter(|&j| row[j] >= threshold));
        groups.entry(pattern).or_default().push(i);
    }
    let mut patterns: Vec<(ParentSet, usize)> = groups.iter().map(|(p, v)| (*p, v.len())).collect();
    patterns.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let full = ParentSet::full(d);
    let region_of = |p: ParentSet| {
        ContextSet::grid_from_points(cell, groups[&p].iter().map(|&i| samples[i].as_slice()))
    };
    if patterns.len() == 1 && patterns[0].0 == full {
        return Ok(PredictedDecomposition { cd: ContextualDecomposition::trivial(d), patterns });
    }
    let listed: Vec<Region> = patterns
        .iter()
        .filter(|(p, _)| *p != full)
        .map(|(p, _)| Region::new(region_of(*p), *p))
        .collect();
    let remainder = if groups.contains_key(&full) { region_of(full) } else { ContextSet::Empty };
    let cd = ContextualDecomposition::new(d, remainder, listed)?;
    Ok(PredictedDecomposition { cd, patterns })
}
