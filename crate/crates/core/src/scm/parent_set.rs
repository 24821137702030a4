use std::fmt;

use serde::{Deserialize, Serialize};

/// A set of parent-variable indices stored as a bitmask.
///
/// Bit `i` stands for the (0-based) parent variable `i`, printed as `X{i+1}`.
/// The decimal value of the mask is what the dataset files store.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParentSet(u64);

impl ParentSet {
    pub const MAX_VARS: usize = 64;

    pub const fn empty() -> Self {
        ParentSet(0)
    }

    pub fn full(d: usize) -> Self {
        assert!(d <= Self::MAX_VARS, "at most {} parent variables", Self::MAX_VARS);
        if d == Self::MAX_VARS {
            ParentSet(u64::MAX)
        } else {
            ParentSet((1u64 << d) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        ParentSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(i: usize) -> Self {
        ParentSet(1u64 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(ParentSet(0), |s, i| s.with(i))
    }

    /// Build from 1-based variable numbers, e.g. `&[1, 2, 3]` for {X1, X2, X3}.
    pub fn from_one_based(vars: &[usize]) -> Self {
        Self::from_indices(vars.iter().map(|&v| v - 1))
    }

    pub fn contains(self, i: usize) -> bool {
        i < Self::MAX_VARS && self.0 & (1u64 << i) != 0
    }

    pub fn with(self, i: usize) -> Self {
        ParentSet(self.0 | (1u64 << i))
    }

    pub fn without(self, i: usize) -> Self {
        ParentSet(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ParentSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset(self, other: ParentSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn union(self, other: ParentSet) -> Self {
        ParentSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ParentSet) -> Self {
        ParentSet(self.0 & other.0)
    }

    pub fn difference(self, other: ParentSet) -> Self {
        ParentSet(self.0 & !other.0)
    }

    pub fn complement(self, d: usize) -> Self {
        ParentSet(!self.0 & Self::full(d).0)
    }

    pub fn is_within(self, d: usize) -> bool {
        self.is_subset(Self::full(d))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    /// All `2^d` subsets of `{0..d}`, in increasing mask order.
    pub fn all_subsets(d: usize) -> impl Iterator<Item = ParentSet> {
        assert!(d < Self::MAX_VARS);
        (0..(1u64 << d)).map(ParentSet)
    }

    /// All subsets of `self`, including the empty set and `self`.
    pub fn subsets(self) -> impl Iterator<Item = ParentSet> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(ParentSet(cur))
        })
    }
}

impl fmt::Debug for ParentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ParentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, i) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "X{}", i + 1)?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_is_one_based() {
        assert_eq!(ParentSet::from_one_based(&[1, 3]).to_string(), "{X1,X3}");
        assert_eq!(ParentSet::empty().to_string(), "{}");
    }

    #[test]
    fn subsets_enumerates_power_set() {
        let s = ParentSet::from_indices([0, 2, 5]);
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|t| t.is_subset(s)));
        assert_eq!(ParentSet::empty().subsets().count(), 1);
    }

    proptest! {
        #[test]
        fn set_algebra_matches_bit_semantics(a in 0u64..4096, b in 0u64..4096) {
            let (sa, sb) = (ParentSet::from_bits(a), ParentSet::from_bits(b));
            let ia: Vec<_> = sa.iter().collect();
            prop_assert_eq!(ia.len(), sa.len());
            prop_assert!(ia.iter().all(|&i| sa.contains(i)));
            prop_assert_eq!(sa.intersection(sb).is_subset(sa), true);
            prop_assert!(sa.is_subset(sa.union(sb)));
            prop_assert_eq!(sa.is_subset(sb), sa.union(sb) == sb);
            prop_assert_eq!(sa.difference(sb).intersection(sb), ParentSet::empty());
            prop_assert_eq!(sa.complement(12).complement(12), sa);
        }
    }
}
