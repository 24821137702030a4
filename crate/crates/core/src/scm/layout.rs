use std::ops::Range;

use serde::{Deserialize, Serialize};

/// How parent variables map onto coordinates of the flat input vector.
///
/// Scalar parents have width 1; the toy and dynamics systems have vector-valued
/// parents (width 3 and 2). Parent sets and gates act on variables, masking acts
/// on every coordinate of a variable at once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    widths: Vec<usize>,
}

impl VarLayout {
    pub fn scalar(d: usize) -> Self {
        VarLayout { widths: vec![1; d] }
    }

    pub fn blocks(widths: Vec<usize>) -> Self {
        assert!(widths.iter().all(|&w| w > 0), "variable widths must be positive");
        VarLayout { widths }
    }

    pub fn n_vars(&self) -> usize {
        self.widths.len()
    }

    pub fn dim(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn coords(&self, var: usize) -> Range<usize> {
        let start: usize = self.widths[..var].iter().sum();
        start..start + self.widths[var]
    }

    /// Variable that owns coordinate `c`.
    pub fn var_of(&self, c: usize) -> usize {
        let mut acc = 0;
        for (v, &w) in self.widths.iter().enumerate() {
            acc += w;
            if c < acc {
                return v;
            }
        }
        panic!("coordinate {c} out of range for dim {}", self.dim())
    }

    /// Coordinates of the variables in `set`, in variable order.
    pub fn gather(&self, x: &[f64], set: super::ParentSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for v in set.iter() {
            out.extend_from_slice(&x[self.coords(v)]);
        }
        out
    }

    pub fn is_scalar(&self) -> bool {
        self.widths.iter().all(|&w| w == 1)
    }
}
