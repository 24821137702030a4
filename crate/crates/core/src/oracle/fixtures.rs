//! Fixed systems from the worked examples, binned onto grids.

use std::collections::BTreeSet;

use super::table::{discretize, Discretized, FiniteScm, GridRegion};
use crate::error::Result;
use crate::scm::ParentSet;
use crate::synth::{make_example, ExampleKind};

pub const Y_BINS: usize = 50;

pub fn example1(bins: usize) -> Result<Discretized> {
    discretize(&make_example(ExampleKind::Example1), bins, Y_BINS)
}

pub fn example2(bins: usize) -> Result<Discretized> {
    discretize(&make_example(ExampleKind::Example2), bins, Y_BINS)
}

/// Union of the two listed regions of example 2 with the two sets that each
/// induce CSSI there; their intersection `{X3}` does not.
pub fn non_convex_witness() -> Result<(FiniteScm, GridRegion, ParentSet, ParentSet)> {
    let dz = example2(10)?;
    let e = dz.regions[1].0.union(&dz.regions[2].0);
    Ok((dz.table, e, ParentSet::from_one_based(&[2, 3]), ParentSet::from_one_based(&[1, 3])))
}

/// The canonical example on a 5x5 grid with its two canonical decompositions:
/// the one it is defined by, and the one whose `{X2}` regions trade halves.
pub fn two_canonical_decompositions() -> Result<(FiniteScm, Vec<(GridRegion, ParentSet)>, Vec<(GridRegion, ParentSet)>)> {
    let dz = discretize(&make_example(ExampleKind::CanonicalExample), 5, Y_BINS)?;
    let dims = dz.table.dims().to_vec();
    let x2 = ParentSet::from_one_based(&[2]);
    // Columns index x1, rows index x2; centers 0.1, 0.3, ..., 0.9.
    let f2 = GridRegion::from_predicate(dims.clone(), |c| (c[0] < 2 && (2..4).contains(&c[1])) || (c[0] >= 2 && c[1] < 2));
    let f3 = GridRegion::from_predicate(dims.clone(), |c| (c[0] < 2 && c[1] < 2) || (c[0] >= 2 && (2..4).contains(&c[1])));
    let f = vec![dz.regions[0].clone(), dz.regions[1].clone(), (f2, x2), (f3, x2)];
    Ok((dz.table, dz.regions, f))
}

/// `Y ⊥ X1 | x1 ∈ D, X2 = c` in example 1: with `x2` at its top bin, the cells
/// with `x1 x2 >= 1/2` all follow `X2 + U`.
pub fn example1_pci(bins: usize) -> Result<(FiniteScm, ParentSet, BTreeSet<Vec<usize>>, ParentSet, Vec<usize>)> {
    let dz = example1(bins)?;
    let c_bin = bins - 1;
    let c = (c_bin as f64 + 0.5) / bins as f64;
    let domain = (0..bins).filter(|&i| (i as f64 + 0.5) / bins as f64 * c >= 0.5).map(|i| vec![i]).collect();
    Ok((dz.table, ParentSet::from_one_based(&[1]), domain, ParentSet::from_one_based(&[2]), vec![c_bin]))
}

/// Two 2x2 blocks on a 4x4 grid that are not grid-adjacent. When `linked`,
/// their `X1`-projections overlap; otherwise both projections are disjoint.
pub fn diagonal_blocks(linked: bool) -> (GridRegion, ParentSet, ParentSet) {
    let dims = vec![4, 4];
    let first = GridRegion::rectangle(dims.clone(), &[0..2, 0..2]);
    let second = if linked {
        GridRegion::rectangle(dims, &[1..3, 3..4])
    } else {
        GridRegion::rectangle(dims, &[2..4, 2..4])
    };
    (first.union(&second), ParentSet::from_one_based(&[1]), ParentSet::from_one_based(&[2]))
}
