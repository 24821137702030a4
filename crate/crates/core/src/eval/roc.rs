//! Pooled ROC over every (row, parent) pair.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncd::{NcdData, NcdModel};
use crate::scm::ParentSet;

/// Gate probabilities of one test row next to its true local parent set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub scores: Vec<f64>,
    pub truth: ParentSet,
}

impl ScoredPrediction {
    pub fn new(scores: Vec<f64>, truth: ParentSet) -> Result<Self> {
        if !truth.is_within(scores.len()) {
            return Err(Error::ShapeMismatch(format!("truth {truth} for {} scores", scores.len())));
        }
        Ok(ScoredPrediction { scores, truth })
    }

    pub fn d(&self) -> usize {
        self.scores.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn fpr(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tn) as f64
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Counts for the predicted set `{j : scores[j] >= tau}` against `truth`.
pub fn confusion(scores: &[f64], truth: ParentSet, tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for (j, &s) in scores.iter().enumerate() {
        match (s >= tau, truth.contains(j)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Sum of per-row confusions at one threshold.
pub fn pooled_confusion(preds: &[ScoredPrediction], tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for p in preds {
        c += confusion(&p.scores, p.truth, tau);
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub counts: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Thresholds descending, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Threshold above every score, so nothing is predicted.
pub const TOP_THRESHOLD: f64 = 1.0 + 1e-9;

/// Exact pooled ROC: one point per distinct score plus `1 + ε` and `0`, AUC by
/// the trapezoid rule.
pub fn roc(preds: &[ScoredPrediction]) -> Result<RocCurve> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = preds[0].d();
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(preds.len() * d);
    for p in preds {
        if p.d() != d {
            return Err(Error::ShapeMismatch(format!("rows with {} and {} scores", d, p.d())));
        }
        for (j, &s) in p.scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite { context: "ROC score".into() });
            }
            pairs.push((s, p.truth.contains(j)));
        }
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels { positives, negatives });
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let point = |threshold: f64, tp: usize, fp: usize| RocPoint {
        threshold,
        fpr: fp as f64 / negatives as f64,
        tpr: tp as f64 / positives as f64,
        counts: Confusion { tp, fp, fn_: positives - tp, tn: negatives - fp },
    };
    let top = pairs[0].0.max(1.0) + TOP_THRESHOLD - 1.0;
    let mut points = vec![point(top, 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(s, tp, fp));
    }
    if points.last().expect("nonempty").threshold > 0.0 {
        points.push(point(0.0, positives, negatives));
    }
    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

/// Gate probabilities of `model` on every row of `data`.
pub fn score_rows(model: &NcdModel, data: &NcdData) -> Result<Vec<ScoredPrediction>> {
    score_matrix(model.parent_scores(data.x.view())?.view(), &data.truth)
}

pub fn score_matrix(scores: ArrayView2<f64>, truth: &[ParentSet]) -> Result<Vec<ScoredPrediction>> {
    if scores.nrows() != truth.len() {
        return Err(Error::ShapeMismatch(format!("{} score rows for {} truths", scores.nrows(), truth.len())));
    }
    scores.rows().into_iter().zip(truth).map(|(r, &t)| ScoredPrediction::new(r.to_vec(), t)).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn p(scores: &[f64], truth: &[usize]) -> ScoredPrediction {
        ScoredPrediction::new(scores.to_vec(), ParentSet::from_one_based(truth)).unwrap()
    }

    #[test]
    fn worked_confusion_example() {
        let mut scores = vec![0.1; 9];
        scores[0] = 0.9;
        scores[1] = 0.7;
        let c = confusion(&scores, ParentSet::from_one_based(&[1]), 0.5);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 0, 7));
        let all = confusion(&scores, ParentSet::from_one_based(&[1, 4]), 0.0);
        assert_eq!((all.tp, all.fp, all.fn_, all.tn), (2, 7, 0, 0));
        let none = confusion(&scores, ParentSet::from_one_based(&[1, 4]), 1.5);
        assert_eq!((none.tp, none.fp, none.fn_, none.tn), (0, 0, 2, 7));
    }

    #[test]
    fn perfect_and_constant_scores() {
        let perfect = roc(&[p(&[1.0, 0.0, 0.0], &[1]), p(&[0.0, 1.0, 1.0], &[2, 3])]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        let constant = roc(&[p(&[0.5, 0.5], &[1]), p(&[0.5, 0.5], &[2])]).unwrap();
        assert_eq!(constant.auc, 0.5);
        assert_eq!(constant.points.len(), 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(roc(&[]), Err(Error::EmptyInput)));
        assert!(matches!(roc(&[p(&[0.3, 0.2], &[1, 2])]), Err(Error::DegenerateLabels { positives: 2, negatives: 0 })));
        assert!(ScoredPrediction::new(vec![0.1], ParentSet::from_one_based(&[2])).is_err());
    }

    #[test]
    fn random_scores_give_chance_auc() {
        let mut r = rng::seeded(11);
        let preds: Vec<ScoredPrediction> = (0..10_000)
            .map(|_| {
                let scores: Vec<f64> = (0..3).map(|_| rng::open01(&mut r)).collect();
                let truth = ParentSet::from_indices((0..3).filter(|_| rng::open01(&mut r) < 0.4));
                ScoredPrediction { scores, truth }
            })
            .collect();
        let auc = roc(&preds).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[0.9]), (0.9, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    /// Mann-Whitney statistic with half credit for ties.
    fn rank_auc(preds: &[ScoredPrediction]) -> f64 {
        let mut pos = vec![];
        let mut neg = vec![];
        for p in preds {
            for (j, &s) in p.scores.iter().enumerate() {
                if p.truth.contains(j) { pos.push(s) } else { neg.push(s) }
            }
        }
        let mut acc = 0.0;
        for a in &pos {
            for b in &neg {
                acc += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        acc / (pos.len() * neg.len()) as f64
    }

    fn preds_strategy() -> impl Strategy<Value = Vec<ScoredPrediction>> {
        let row = (prop::collection::vec(0u8..=10, 4), 1u64..15).prop_map(|(s, t)| ScoredPrediction {
            scores: s.into_iter().map(|v| v as f64 / 10.0).collect(),
            truth: ParentSet::from_bits(t),
        });
        prop::collection::vec(row, 1..25)
    }

    proptest! {
        #[test]
        fn curve_invariants(preds in preds_strategy()) {
            let Ok(curve) = roc(&preds) else { return Ok(()); };
            let first = curve.points.first().unwrap();
            let last = curve.points.last().unwrap();
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in curve.points.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
            for pt in &curve.points {
                prop_assert_eq!(pt.counts.total(), preds.len() * 4);
                prop_assert_eq!(pt.counts, pooled_confusion(&preds, pt.threshold));
            }
            prop_assert!((0.0..=1.0).contains(&curve.auc));
            prop_assert!((curve.auc - rank_auc(&preds)).abs() < 1e-12);
        }

        #[test]
        fn complement_identities(preds in preds_strategy()) {
            let Ok(curve) = roc(&preds) else { return Ok(()); };
            let flipped: Vec<ScoredPrediction> = preds
                .iter()
                .map(|p| ScoredPrediction { scores: p.scores.iter().map(|s| 1.0 - s).collect(), truth: p.truth })
                .collect();
            let both: Vec<ScoredPrediction> = flipped
                .iter()
                .map(|p| ScoredPrediction { scores: p.scores.clone(), truth: p.truth.complement(4) })
                .collect();
            prop_assert!((roc(&flipped).unwrap().auc - (1.0 - curve.auc)).abs() < 1e-12);
            prop_assert!((roc(&both).unwrap().auc - curve.auc).abs() < 1e-12);
        }
    }
}
