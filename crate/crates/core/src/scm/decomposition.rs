use super::{ContextSet, ParentSet};
use crate::error::{Error, Result};

/// One cell of a contextual decomposition.
#[derive(Clone, Debug)]
pub struct Region {
    pub context: ContextSet,
    pub parents: ParentSet,
}

impl Region {
    pub fn new(context: ContextSet, parents: ParentSet) -> Self {
        Region { context, parents }
    }
}

/// Partition of the parent outcome space into regions with local parent sets.
///
/// Index 0 is the remainder region, whose parent set is always the full parent
/// set; indices `1..=N` are the listed regions with proper subsets. The
/// remainder may be empty (zero mass) when the listed regions already cover the
/// space.
#[derive(Clone, Debug)]
pub struct ContextualDecomposition {
    d: usize,
    regions: Vec<Region>,
}

impl ContextualDecomposition {
    pub fn new(d: usize, remainder: ContextSet, listed: Vec<Region>) -> Result<Self> {
        if d == 0 || d > ParentSet::MAX_VARS {
            return Err(Error::invalid_config("d", format!("{d} parent variables")));
        }
        let full = ParentSet::full(d);
        for (k, r) in listed.iter().enumerate() {
            if !r.parents.is_proper_subset(full) {
                return Err(Error::invalid_config(
                    format!("regions[{}].parents", k + 1),
                    format!("{} is not a proper subset of {}", r.parents, full),
                ));
            }
        }
        let mut regions = Vec::with_capacity(listed.len() + 1);
        regions.push(Region::new(remainder, full));
        regions.extend(listed);
        Ok(ContextualDecomposition { d, regions })
    }

    /// Listed regions cover the space; the remainder is empty.
    pub fn covering(d: usize, listed: Vec<Region>) -> Result<Self> {
        Self::new(d, ContextSet::Empty, listed)
    }

    /// Remainder is the complement of the listed regions.
    pub fn with_remainder(d: usize, listed: Vec<Region>) -> Result<Self> {
        let rest = ContextSet::Complement(listed.iter().map(|r| r.context.clone()).collect());
        Self::new(d, rest, listed)
    }

    /// The single-region decomposition `{(whole space, Pa(Y))}`.
    pub fn trivial(d: usize) -> Self {
        Self::new(d, ContextSet::All, Vec::new()).expect("valid d")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of regions including the remainder.
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, k: usize) -> &Region {
        &self.regions[k]
    }

    pub fn parents(&self, k: usize) -> ParentSet {
        self.regions[k].parents
    }

    /// Smallest-index listed region containing `x`, falling back to the remainder.
    pub fn region_of(&self, x: &[f64]) -> Result<usize> {
        let listed = (1..self.regions.len()).find(|&k| self.regions[k].context.contains(x));
        match listed {
            Some(k) => Ok(k),
            None if self.regions[0].context.contains(x) => Ok(0),
            None => Err(Error::NoRegion(x.to_vec())),
        }
    }

    pub fn ground_truth_parents(&self, x: &[f64]) -> Result<ParentSet> {
        self.region_of(x).map(|k| self.regions[k].parents)
    }

    /// Every region whose predicate accepts `x`. A well-formed decomposition
    /// returns exactly one index.
    pub fn accepting(&self, x: &[f64]) -> Vec<usize> {
        (0..self.regions.len()).filter(|&k| self.regions[k].context.contains(x)).collect()
    }
}

pub fn region_of(cd: &ContextualDecomposition, x: &[f64]) -> Result<usize> {
    cd.region_of(x)
}

pub fn ground_truth_parents(cd: &ContextualDecomposition, x: &[f64]) -> Result<ParentSet> {
    cd.ground_truth_parents(x)
}
