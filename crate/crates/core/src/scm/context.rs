use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::synth::RandomFunction;

/// Half-open interval `[lo, hi)`; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn below(hi: f64) -> Self {
        Interval { lo: f64::NEG_INFINITY, hi }
    }

    pub fn at_least(lo: f64) -> Self {
        Interval { lo, hi: f64::INFINITY }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContextKind {
    HalfspaceArgmax,
    NormBand,
    FunctionArgmax,
    ProductOfIntervals,
    ExplicitGrid,
    RegionIndex,
    /// The whole outcome space, the empty set, or a complement of other sets.
    Structural,
}

/// Deterministic region labeler used by the hand-written example systems.
#[derive(Clone)]
pub struct Labeler {
    name: Arc<str>,
    f: Arc<dyn Fn(&[f64]) -> usize + Send + Sync>,
}

impl Labeler {
    pub fn new(name: &str, f: impl Fn(&[f64]) -> usize + Send + Sync + 'static) -> Self {
        Labeler { name: Arc::from(name), f: Arc::new(f) }
    }

    pub fn label(&self, x: &[f64]) -> usize {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for Labeler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Labeler({})", self.name)
    }
}

/// A subset of the parent outcome space, given by a pure membership test.
#[derive(Clone, Debug)]
pub enum ContextSet {
    All,
    Empty,
    /// Product of half-open intervals, one per coordinate.
    Intervals(Vec<Interval>),
    /// `lo <= ||x|| < hi` (Euclidean norm over all coordinates).
    NormBand { lo: f64, hi: f64 },
    /// Points where block `winner` attains the maximum of `score` over the
    /// coordinate blocks; ties go to the lowest block index.
    Argmax { score: Arc<RandomFunction>, blocks: Arc<Vec<Vec<usize>>>, winner: usize },
    /// Points the labeler assigns to `index`.
    Labeled { labeler: Labeler, index: usize },
    /// Union of cubic cells of side `cell` on the lattice `cell * k`.
    ExplicitGrid { cell: f64, cells: Arc<BTreeSet<Vec<i64>>> },
    /// Points outside every listed set.
    Complement(Vec<ContextSet>),
}

impl ContextSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ContextSet::All => true,
            ContextSet::Empty => false,
            ContextSet::Intervals(iv) => {
                iv.len() == x.len() && iv.iter().zip(x).all(|(i, &v)| i.contains(v))
            }
            ContextSet::NormBand { lo, hi } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                *lo <= r && r < *hi
            }
            ContextSet::Argmax { score, blocks, winner } => {
                argmax_block(score, blocks, x) == *winner
            }
            ContextSet::Labeled { labeler, index } => labeler.label(x) == *index,
            ContextSet::ExplicitGrid { cell, cells } => cells.contains(&grid_key(x, *cell)),
            ContextSet::Complement(sets) => !sets.iter().any(|s| s.contains(x)),
        }
    }

    pub fn kind(&self) -> ContextKind {
        match self {
            ContextSet::All | ContextSet::Empty | ContextSet::Complement(_) => ContextKind::Structural,
            ContextSet::Intervals(_) => ContextKind::ProductOfIntervals,
            ContextSet::NormBand { .. } => ContextKind::NormBand,
            ContextSet::Argmax { score, .. } => {
                if score.is_linear() {
                    ContextKind::HalfspaceArgmax
                } else {
                    ContextKind::FunctionArgmax
                }
            }
            ContextSet::Labeled { .. } => ContextKind::RegionIndex,
            ContextSet::ExplicitGrid { .. } => ContextKind::ExplicitGrid,
        }
    }

    /// Lattice cells of side `cell` containing the given points.
    pub fn grid_from_points<'a>(cell: f64, points: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let cells = points.into_iter().map(|x| grid_key(x, cell)).collect();
        ContextSet::ExplicitGrid { cell, cells: Arc::new(cells) }
    }
}

pub(crate) fn grid_key(x: &[f64], cell: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell).floor() as i64).collect()
}

/// Index of the block with the largest score; first block wins ties.
pub fn argmax_block(score: &RandomFunction, blocks: &[Vec<usize>], x: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    let mut buf = Vec::new();
    for (b, idx) in blocks.iter().enumerate() {
        buf.clear();
        buf.extend(idx.iter().map(|&i| x[i]));
        let s = score.eval_scalar(&buf);
        if s > best.1 {
            best = (b, s);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_are_half_open() {
        let e = ContextSet::Intervals(vec![Interval::below(0.5), Interval::ALL]);
        assert!(e.contains(&[0.49, 10.0]));
        assert!(!e.contains(&[0.5, 0.0]));
        assert_eq!(e.kind(), ContextKind::ProductOfIntervals);
    }

    #[test]
    fn complement_excludes_members() {
        let a = ContextSet::NormBand { lo: 0.0, hi: 1.0 };
        let c = ContextSet::Complement(vec![a.clone()]);
        for x in [[0.1, 0.2], [0.9, 0.9], [2.0, 0.0]] {
            assert_ne!(a.contains(&x), c.contains(&x));
        }
    }

    #[test]
    fn explicit_grid_membership() {
        let pts: Vec<Vec<f64>> = vec![vec![0.05, 0.15], vec![0.95, 0.95]];
        let e = ContextSet::grid_from_points(0.1, pts.iter().map(|p| p.as_slice()));
        assert!(e.contains(&[0.01, 0.19]));
        assert!(!e.contains(&[0.15, 0.15]));
    }
}
