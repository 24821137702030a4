//! Finite SCM tables and grid regions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scm::{Mechanism, ParentLaw, ParentSet, Scm};

/// Total-variation distance below which two conditionals count as equal.
pub const DEFAULT_TOL: f64 = 1e-9;
const SUM_TOL: f64 = 1e-12;

// Cells are mixed-radix indexed with the last variable varying fastest.
pub(crate) fn coords_of(dims: &[usize], mut cell: usize) -> Vec<usize> {
    let mut c = vec![0; dims.len()];
    for i in (0..dims.len()).rev() {
        c[i] = cell % dims[i];
        cell /= dims[i];
    }
    c
}

pub(crate) fn index_of(dims: &[usize], coords: &[usize]) -> usize {
    coords.iter().zip(dims).fold(0, |acc, (&c, &n)| acc * n + c)
}

pub(crate) fn project(coords: &[usize], set: ParentSet) -> Vec<usize> {
    set.iter().map(|i| coords[i]).collect()
}

/// Parents with finite domains, a conditional table `p(y | x)` per cell and a
/// strictly positive joint `p(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFiniteScm", into = "RawFiniteScm")]
pub struct FiniteScm {
    dims: Vec<usize>,
    y_card: usize,
    cond: Vec<Vec<f64>>,
    joint: Vec<f64>,
    tol: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFiniteScm {
    dims: Vec<usize>,
    y_card: usize,
    cond: Vec<Vec<f64>>,
    joint: Vec<f64>,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl TryFrom<RawFiniteScm> for FiniteScm {
    type Error = Error;

    fn try_from(r: RawFiniteScm) -> Result<Self> {
        FiniteScm::new(r.dims, r.cond, r.joint).map(|m| m.with_tolerance(r.tol))
    }
}

impl From<FiniteScm> for RawFiniteScm {
    fn from(m: FiniteScm) -> Self {
        RawFiniteScm { dims: m.dims, y_card: m.y_card, cond: m.cond, joint: m.joint, tol: m.tol }
    }
}

impl FiniteScm {
    pub fn new(dims: Vec<usize>, cond: Vec<Vec<f64>>, joint: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 64 || dims.contains(&0) {
            return Err(Error::invalid_config("dims", format!("{dims:?}")));
        }
        let n: usize = dims.iter().product();
        if cond.len() != n || joint.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} cells but {} conditionals and {} joint entries",
                cond.len(),
                joint.len()
            )));
        }
        let y_card = cond[0].len();
        if y_card == 0 {
            return Err(Error::invalid_config("cond", "empty y-domain"));
        }
        for (c, p) in cond.iter().enumerate() {
            if p.len() != y_card {
                return Err(Error::ShapeMismatch(format!("cell {c}: {} y-values, expected {y_card}", p.len())));
            }
            if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (p.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid_config("cond", format!("cell {c} is not a distribution")));
            }
        }
        if joint.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid_config("joint", "every parent cell needs positive probability"));
        }
        if (joint.iter().sum::<f64>() - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid_config("joint", "does not sum to 1"));
        }
        Ok(FiniteScm { dims, y_card, cond, joint, tol: DEFAULT_TOL })
    }

    /// Uniform joint over the cells.
    pub fn with_uniform_joint(dims: Vec<usize>, cond: Vec<Vec<f64>>) -> Result<Self> {
        let n = cond.len().max(1);
        Self::new(dims, cond, vec![1.0 / n as f64; n])
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn y_card(&self) -> usize {
        self.y_card
    }

    pub fn n_cells(&self) -> usize {
        self.joint.len()
    }

    pub fn cond(&self, cell: usize) -> &[f64] {
        &self.cond[cell]
    }

    pub fn joint(&self, cell: usize) -> f64 {
        self.joint[cell]
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        coords_of(&self.dims, cell)
    }

    pub fn cell(&self, coords: &[usize]) -> usize {
        index_of(&self.dims, coords)
    }

    pub fn mass(&self, e: &GridRegion) -> f64 {
        e.iter().map(|c| self.joint[c]).sum()
    }

    pub fn full_region(&self) -> GridRegion {
        GridRegion::full(self.dims.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("<json>", e))
    }
}

/// Total-variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Set of cells of a finite product space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRegion {
    dims: Vec<usize>,
    cells: BTreeSet<usize>,
}

impl GridRegion {
    pub fn empty(dims: Vec<usize>) -> Self {
        GridRegion { dims, cells: BTreeSet::new() }
    }

    pub fn full(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        GridRegion { dims, cells: (0..n).collect() }
    }

    pub fn from_cells(dims: Vec<usize>, cells: impl IntoIterator<Item = usize>) -> Self {
        let n: usize = dims.iter().product();
        GridRegion { cells: cells.into_iter().filter(|&c| c < n).collect(), dims }
    }

    pub fn from_predicate(dims: Vec<usize>, pred: impl Fn(&[usize]) -> bool) -> Self {
        let n: usize = dims.iter().product();
        let cells = (0..n).filter(|&c| pred(&coords_of(&dims, c))).collect();
        GridRegion { dims, cells }
    }

    /// Product of half-open index ranges, one per variable.
    pub fn rectangle(dims: Vec<usize>, ranges: &[std::ops::Range<usize>]) -> Self {
        Self::from_predicate(dims, |c| c.iter().zip(ranges).all(|(v, r)| r.contains(v)))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.contains(&cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().copied()
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        coords_of(&self.dims, cell)
    }

    pub fn union(&self, other: &GridRegion) -> GridRegion {
        GridRegion { dims: self.dims.clone(), cells: self.cells.union(&other.cells).copied().collect() }
    }

    pub fn intersection(&self, other: &GridRegion) -> GridRegion {
        GridRegion { dims: self.dims.clone(), cells: self.cells.intersection(&other.cells).copied().collect() }
    }

    pub fn difference(&self, other: &GridRegion) -> GridRegion {
        GridRegion { dims: self.dims.clone(), cells: self.cells.difference(&other.cells).copied().collect() }
    }

    pub fn symmetric_difference(&self, other: &GridRegion) -> GridRegion {
        GridRegion {
            dims: self.dims.clone(),
            cells: self.cells.symmetric_difference(&other.cells).copied().collect(),
        }
    }

    /// Cells whose coordinates on `set` equal `values` (given in variable order).
    pub fn restrict(&self, set: ParentSet, values: &[usize]) -> GridRegion {
        let cells = self.iter().filter(|&c| project(&self.coords(c), set) == values).collect();
        GridRegion { dims: self.dims.clone(), cells }
    }

    /// `proj_set(self)`.
    pub fn project(&self, set: ParentSet) -> BTreeSet<Vec<usize>> {
        self.iter().map(|c| project(&self.coords(c), set)).collect()
    }

    /// Inclusive per-variable index bounds, `None` when empty.
    pub fn bounding_box(&self) -> Option<Vec<(usize, usize)>> {
        let mut it = self.iter();
        let first = self.coords(it.next()?);
        let mut bb: Vec<(usize, usize)> = first.iter().map(|&v| (v, v)).collect();
        for c in it {
            for (b, v) in bb.iter_mut().zip(self.coords(c)) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Some(bb)
    }

    /// Product of index intervals: the grid analogue of a convex set.
    pub fn is_rectangle(&self) -> bool {
        match self.bounding_box() {
            None => false,
            Some(bb) => bb.iter().map(|(lo, hi)| hi - lo + 1).product::<usize>() == self.len(),
        }
    }

    /// Variables along which the region takes at least two values.
    pub fn varying(&self) -> ParentSet {
        match self.bounding_box() {
            None => ParentSet::empty(),
            Some(bb) => ParentSet::from_indices(bb.iter().enumerate().filter(|(_, (lo, hi))| hi > lo).map(|(i, _)| i)),
        }
    }
}

/// A continuous example binned onto a uniform grid, with the region of each cell.
#[derive(Clone, Debug)]
pub struct Discretized {
    pub table: FiniteScm,
    /// `(cells, parent set)` per region of the source decomposition; index 0 is the remainder.
    pub regions: Vec<(GridRegion, ParentSet)>,
}

/// Bin `[0,1]^d` into `bins` cells per axis and `y` into `y_bins` bins. Each cell
/// takes the mechanism and region of its center, and its `y` table is computed
/// from Gaussian CDF differences (outer bins are open-ended).
pub fn discretize(scm: &Scm, bins: usize, y_bins: usize) -> Result<Discretized> {
    if scm.parent_law() != ParentLaw::Uniform01 || !scm.layout().is_scalar() {
        return Err(Error::Unsupported("discretization needs scalar uniform parents".into()));
    }
    if bins == 0 || y_bins < 2 {
        return Err(Error::invalid_config("bins", format!("bins = {bins}, y_bins = {y_bins}")));
    }
    let d = scm.d();
    let dims = vec![bins; d];
    let n: usize = dims.iter().product();
    let cd = scm.decomposition();
    let mut gauss = Vec::with_capacity(n);
    let mut region_cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for cell in 0..n {
        let x: Vec<f64> = coords_of(&dims, cell).iter().map(|&i| (i as f64 + 0.5) / bins as f64).collect();
        let k = cd.region_of(&x)?;
        let mech = scm.mechanism(k).ok_or_else(|| Error::NoRegion(x.clone()))?;
        let local = scm.layout().gather(&x, cd.parents(k));
        let (mean, scale) = match mech {
            Mechanism::Linear { noise_scale, .. } => (mech.eval(&local, 0.0), *noise_scale),
            Mechanism::Additive { f, noise_scale } => (f.eval_scalar(&local), *noise_scale),
            Mechanism::NonAdditive(_) => {
                return Err(Error::Unsupported("non-additive mechanisms have no closed-form table".into()))
            }
        };
        if !(scale > 0.0) {
            return Err(Error::Unsupported("noise scale must be positive".into()));
        }
        gauss.push((mean, scale));
        region_cells.entry(k).or_default().push(cell);
    }
    let lo = gauss.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
    let hi = gauss.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
    let s_max = gauss.iter().map(|g| g.1).fold(0.0, f64::max);
    let (lo, hi) = (lo - 4.0 * s_max, hi + 4.0 * s_max);
    let edges: Vec<f64> = (1..y_bins).map(|b| lo + (hi - lo) * b as f64 / y_bins as f64).collect();
    let cond = gauss
        .iter()
        .map(|&(mean, scale)| {
            let normal = Normal::new(mean, scale).expect("positive scale");
            let mut cdf: Vec<f64> = Vec::with_capacity(y_bins + 1);
            cdf.push(0.0);
            cdf.extend(edges.iter().map(|&e| normal.cdf(e)));
            cdf.push(1.0);
            cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
        })
        .collect();
    let table = FiniteScm::with_uniform_joint(dims.clone(), cond)?;
    let regions = (0..cd.n_regions())
        .map(|k| {
            let cells = region_cells.remove(&k).unwrap_or_default();
            (GridRegion::from_cells(dims.clone(), cells), cd.parents(k))
        })
        .collect();
    Ok(Discretized { table, regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_example, ExampleKind};

    #[test]
    fn indexing_is_last_fastest() {
        let dims = [2, 3, 4];
        assert_eq!(index_of(&dims, &[0, 0, 1]), 1);
        assert_eq!(index_of(&dims, &[0, 1, 0]), 4);
        assert_eq!(index_of(&dims, &[1, 0, 0]), 12);
        for c in 0..24 {
            assert_eq!(index_of(&dims, &coords_of(&dims, c)), c);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        let ok = vec![vec![0.5, 0.5]; 2];
        assert!(FiniteScm::with_uniform_joint(vec![2], ok.clone()).is_ok());
        assert!(FiniteScm::with_uniform_joint(vec![3], ok.clone()).is_err());
        assert!(FiniteScm::with_uniform_joint(vec![2], vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(FiniteScm::new(vec![2], ok, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = FiniteScm::new(vec![2], vec![vec![0.25, 0.75], vec![1.0, 0.0]], vec![0.3, 0.7]).unwrap();
        let back = FiniteScm::from_json(&m.to_json()).unwrap();
        assert_eq!(back.dims(), m.dims());
        assert_eq!(back.cond(0), m.cond(0));
        assert_eq!(back.joint(1), 0.7);
        assert!(FiniteScm::from_json(r#"{"dims":[2],"y_card":1,"cond":[[1.0]],"joint":[1.0]}"#).is_err());
    }

    #[test]
    fn rectangles_and_slices() {
        let r = GridRegion::rectangle(vec![4, 4], &[1..3, 0..2]);
        assert_eq!(r.len(), 4);
        assert!(r.is_rectangle());
        assert_eq!(r.varying(), ParentSet::full(2));
        let l = r.union(&GridRegion::rectangle(vec![4, 4], &[3..4, 3..4]));
        assert!(!l.is_rectangle());
        let s = r.restrict(ParentSet::singleton(0), &[2]);
        assert_eq!(s.len(), 2);
        assert_eq!(r.project(ParentSet::singleton(1)).len(), 2);
    }

    #[test]
    fn discretized_example1_is_normalized_and_labeled() {
        let dz = discretize(&make_example(ExampleKind::Example1), 10, 50).unwrap();
        assert_eq!(dz.table.n_cells(), 100);
        for c in 0..100 {
            assert!((dz.table.cond(c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(dz.regions[0].0.is_empty());
        let (r1, a1) = &dz.regions[1];
        assert_eq!(*a1, ParentSet::singleton(0));
        for c in r1.iter() {
            let x = r1.coords(c);
            assert!((x[0] as f64 + 0.5) * (x[1] as f64 + 0.5) < 50.0);
        }
        assert_eq!(dz.regions[1].0.len() + dz.regions[2].0.len(), 100);
    }
}
