//! Hard-gate pattern labels on a 2-D slice of the input space.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncd::NcdModel;
use crate::scm::{ContextualDecomposition, ParentLaw, ParentSet};

/// Integer code of a gate pattern, first variable most significant: with two
/// variables `(1,0)` is 2 and `(0,1)` is 1.
pub fn pattern_label(set: ParentSet, d: usize) -> u32 {
    (0..d).filter(|&j| set.contains(j)).map(|j| 1u32 << (d - 1 - j)).sum()
}

/// A square window onto the plane spanned by input coordinates `plane.0`
/// (horizontal) and `plane.1` (vertical); other coordinates are held at `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
    pub plane: (usize, usize),
    pub base: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::invalid_config("resolution", "must be positive"));
        }
        let dim = self.base.len();
        if self.plane.0 >= dim || self.plane.1 >= dim || self.plane.0 == self.plane.1 {
            return Err(Error::invalid_config("plane", format!("{:?} in {dim} coordinates", self.plane)));
        }
        if !(self.x_range.0 < self.x_range.1 && self.y_range.0 < self.y_range.1) {
            return Err(Error::invalid_config("bounds", "empty interval"));
        }
        Ok(())
    }

    fn center(range: (f64, f64), i: usize, n: usize) -> f64 {
        range.0 + (i as f64 + 0.5) * (range.1 - range.0) / n as f64
    }

    /// Input at cell `(row, col)`; row 0 is the bottom of the window.
    pub fn point(&self, row: usize, col: usize) -> Vec<f64> {
        let mut x = self.base.clone();
        x[self.plane.0] = Self::center(self.x_range, col, self.resolution);
        x[self.plane.1] = Self::center(self.y_range, row, self.resolution);
        x
    }

    /// All cell inputs, row-major.
    pub fn points(&self) -> Array2<f64> {
        let n = self.resolution;
        let mut out = Array2::zeros((n * n, self.base.len()));
        for r in 0..n {
            for c in 0..n {
                for (k, v) in self.point(r, c).into_iter().enumerate() {
                    out[[r * n + c, k]] = v;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub spec: GridSpec,
    /// Number of gate variables the labels encode.
    pub d: usize,
    /// Row-major labels, `resolution²` entries.
    pub labels: Vec<u32>,
}

impl BoundaryGrid {
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.spec.resolution + col]
    }

    /// Fraction of cells (optionally restricted by `mask`) where two grids agree.
    pub fn agreement(&self, other: &BoundaryGrid, mask: Option<&[bool]>) -> Result<f64> {
        if self.labels.len() != other.labels.len() {
            return Err(Error::ShapeMismatch("grids of different size".into()));
        }
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let (mut same, mut total) = (0usize, 0usize);
        for i in (0..self.labels.len()).filter(|&i| keep(i)) {
            total += 1;
            same += usize::from(self.labels[i] == other.labels[i]);
        }
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(same as f64 / total as f64)
    }
}

/// Hard gates `z = 1{π >= 0.5}` of `model` over the window, as pattern labels.
pub fn boundary_grid(model: &NcdModel, spec: &GridSpec) -> Result<BoundaryGrid> {
    spec.validate()?;
    if spec.base.len() != model.layout().dim() {
        return Err(Error::ShapeMismatch(format!("{} coordinates for a {}-dim model", spec.base.len(), model.layout().dim())));
    }
    let pi = model.parent_scores(spec.points().view())?;
    let d = model.n_vars();
    let labels = pi
        .rows()
        .into_iter()
        .map(|r| pattern_label(ParentSet::from_indices((0..d).filter(|&j| r[j] >= 0.5)), d))
        .collect();
    Ok(BoundaryGrid { spec: spec.clone(), d, labels })
}

/// Ground-truth labels of a decomposition over the same window.
pub fn truth_grid(cd: &ContextualDecomposition, spec: &GridSpec) -> Result<BoundaryGrid> {
    spec.validate()?;
    let n = spec.resolution;
    let mut labels = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            labels.push(pattern_label(cd.ground_truth_parents(&spec.point(r, c))?, cd.d()));
        }
    }
    Ok(BoundaryGrid { spec: spec.clone(), d: cd.d(), labels })
}

/// Cells whose parent-law density (all coordinates, including the fixed ones)
/// is at least the median over the window.
pub fn density_mask(law: ParentLaw, spec: &GridSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    let n = spec.resolution;
    let logp: Vec<f64> = (0..n * n)
        .map(|i| spec.point(i / n, i % n).iter().map(|&v| law.log_density(v)).sum())
        .collect();
    let mut sorted = logp.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(logp.iter().map(|&l| l >= median).collect())
}
