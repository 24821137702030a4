//! CSSI statements decided by exhaustive comparison of conditional tables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::table::{index_of, project, tv_distance, FiniteScm, GridRegion};
use crate::error::{Error, Result};
use crate::scm::ParentSet;

/// Regions with parent sets; index 0 is the remainder `E_0`.
pub type GridDecomposition = [(GridRegion, ParentSet)];

/// Largest region searched exhaustively by [`is_canonical_with`].
pub const EXHAUSTIVE_LIMIT: usize = 20;

fn same_grid(m: &FiniteScm, e: &GridRegion) -> Result<()> {
    if e.dims() != m.dims() {
        return Err(Error::ShapeMismatch(format!("region grid {:?} vs table {:?}", e.dims(), m.dims())));
    }
    Ok(())
}

fn groups(e: &GridRegion, a: ParentSet) -> BTreeMap<Vec<usize>, Vec<usize>> {
    let mut g: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for c in e.iter() {
        g.entry(project(&e.coords(c), a)).or_default().push(c);
    }
    g
}

fn group_is_constant(m: &FiniteScm, cells: &[usize]) -> bool {
    let tol = m.tol();
    let first = m.cond(cells[0]);
    // Within tol/2 of one member implies within tol of each other.
    if cells[1..].iter().all(|&c| tv_distance(first, m.cond(c)) <= tol / 2.0) {
        return true;
    }
    for (i, &p) in cells.iter().enumerate() {
        for &q in &cells[i + 1..] {
            if tv_distance(m.cond(p), m.cond(q)) > tol {
                return false;
            }
        }
    }
    true
}

/// `Y ⊥ X_{A^c} | X_A, E`: cells of `e` agreeing on `a` share their `y` table.
pub fn check_cssi(m: &FiniteScm, e: &GridRegion, a: ParentSet) -> Result<bool> {
    same_grid(m, e)?;
    if e.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(groups(e, a).values().all(|g| group_is_constant(m, g)))
}

/// CSSI holds for `a` and fails for every one-element removal.
pub fn is_regular(m: &FiniteScm, e: &GridRegion, a: ParentSet) -> Result<bool> {
    if !check_cssi(m, e, a)? {
        return Ok(false);
    }
    for j in a.iter() {
        if check_cssi(m, e, a.without(j))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All inclusion-minimal parent sets inducing CSSI on `e`.
pub fn minimal_parent_sets(m: &FiniteScm, e: &GridRegion) -> Result<Vec<ParentSet>> {
    let d = m.d();
    if d > 12 {
        return Err(Error::TooManyParents(d));
    }
    same_grid(m, e)?;
    if e.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut all: Vec<ParentSet> = ParentSet::all_subsets(d).collect();
    all.sort_by_key(|s| (s.len(), s.bits()));
    let mut found: Vec<ParentSet> = Vec::new();
    for s in all {
        if found.iter().any(|f| f.is_subset(s)) {
            continue;
        }
        if check_cssi(m, e, s)? {
            found.push(s);
        }
    }
    Ok(found)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanonicalSearch {
    /// Every sub-region; limited to [`EXHAUSTIVE_LIMIT`] cells.
    Exhaustive,
    /// Only 2-wide blocks: sound when it finds a witness, incomplete otherwise.
    Rectangles,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CanonicalVerdict {
    pub canonical: bool,
    /// False when the verdict is "canonical under rectangle search" only.
    pub exhaustive: bool,
}

pub fn is_canonical(m: &FiniteScm, e: &GridRegion, a: ParentSet) -> Result<bool> {
    Ok(is_canonical_with(m, e, a, CanonicalSearch::Auto)?.canonical)
}

/// No sub-region of `e` induces CSSI with a proper subset of `a`.
///
/// On a grid every single cell trivially induces CSSI with the empty set, so
/// sub-regions other than `e` itself only count when they are thick: each of
/// their cells has a grid neighbor inside the sub-region along every variable
/// on which `e` varies. This stands in for "positive probability" of the
/// continuous definition, where a set with mass contains small boxes.
pub fn is_canonical_with(
    m: &FiniteScm,
    e: &GridRegion,
    a: ParentSet,
    mode: CanonicalSearch,
) -> Result<CanonicalVerdict> {
    same_grid(m, e)?;
    if e.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let exhaustive = match mode {
        CanonicalSearch::Exhaustive if e.len() > EXHAUSTIVE_LIMIT => return Err(Error::RegionTooLarge(e.len())),
        CanonicalSearch::Exhaustive => true,
        CanonicalSearch::Rectangles => false,
        CanonicalSearch::Auto => e.len() <= EXHAUSTIVE_LIMIT,
    };
    let verdict = |canonical| Ok(CanonicalVerdict { canonical, exhaustive });
    for j in a.iter() {
        if check_cssi(m, e, a.without(j))? {
            return verdict(false);
        }
    }
    // CSSI with any B ⊊ a entails CSSI with some a ∖ {j}.
    for j in a.iter() {
        let b = a.without(j);
        let hit = if exhaustive { thick_witness(m, e, b) } else { block_witness(m, e, b)? };
        if hit {
            return verdict(false);
        }
    }
    verdict(true)
}

fn bits(mut m: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let i = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(i)
    })
}

struct ThickSearch {
    /// Per cell, one mask of in-region grid neighbors per varying variable.
    nbr: Vec<Vec<u32>>,
    /// Per cell, cells with the same `b`-projection and a different table.
    conflict: Vec<u32>,
}

impl ThickSearch {
    fn feasible(&self, inc: u32, mut avail: u32) -> bool {
        loop {
            let pool = inc | avail;
            let next = bits(avail).fold(avail, |acc, i| {
                if self.nbr[i].iter().any(|&n| n & pool == 0) {
                    acc & !(1 << i)
                } else {
                    acc
                }
            });
            if next == avail {
                break;
            }
            avail = next;
        }
        let pool = inc | avail;
        let mut pending = None;
        for i in bits(inc) {
            for &n in &self.nbr[i] {
                if n & pool == 0 {
                    return false;
                }
                if n & inc == 0 && pending.is_none() {
                    pending = Some(n & avail);
                }
            }
        }
        match pending {
            None => inc != 0,
            Some(cands) => {
                for k in bits(cands) {
                    if self.feasible(inc | 1 << k, avail & !(1 << k) & !self.conflict[k]) {
                        return true;
                    }
                    avail &= !(1 << k);
                }
                false
            }
        }
    }
}

fn thick_witness(m: &FiniteScm, e: &GridRegion, b: ParentSet) -> bool {
    let cells: Vec<usize> = e.iter().collect();
    let n = cells.len();
    let pos: BTreeMap<usize, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let varying: Vec<usize> = e.varying().iter().collect();
    let dims = e.dims();
    let nbr = cells
        .iter()
        .map(|&c| {
            let x = e.coords(c);
            varying
                .iter()
                .map(|&v| {
                    let mut mask = 0u32;
                    for step in [x[v].wrapping_sub(1), x[v] + 1] {
                        if step < dims[v] {
                            let mut y = x.clone();
                            y[v] = step;
                            if let Some(&i) = pos.get(&index_of(dims, &y)) {
                                mask |= 1 << i;
                            }
                        }
                    }
                    mask
                })
                .collect()
        })
        .collect();
    let proj: Vec<Vec<usize>> = cells.iter().map(|&c| project(&e.coords(c), b)).collect();
    let conflict = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| proj[i] == proj[j] && tv_distance(m.cond(cells[i]), m.cond(cells[j])) > m.tol())
                .fold(0u32, |acc, j| acc | 1 << j)
        })
        .collect();
    let search = ThickSearch { nbr, conflict };
    let mut avail = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    for i in 0..n {
        avail &= !(1 << i);
        if search.feasible(1 << i, avail & !search.conflict[i]) {
            return true;
        }
    }
    false
}

fn block_witness(m: &FiniteScm, e: &GridRegion, b: ParentSet) -> Result<bool> {
    let varying: Vec<usize> = e.varying().iter().collect();
    let dims = e.dims().to_vec();
    for base in e.iter() {
        let x = e.coords(base);
        let ranges: Vec<std::ops::Range<usize>> = x
            .iter()
            .enumerate()
            .map(|(v, &lo)| if varying.contains(&v) { lo..lo + 2 } else { lo..lo + 1 })
            .collect();
        if ranges.iter().zip(&dims).any(|(r, &n)| r.end > n) {
            continue;
        }
        let block = GridRegion::rectangle(dims.clone(), &ranges);
        if block.iter().all(|c| e.contains(c)) && check_cssi(m, &block, b)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn check_partition(m: &FiniteScm, cd: &GridDecomposition) -> Result<()> {
    if cd.is_empty() {
        return Err(Error::NotAPartition("no regions".into()));
    }
    let mut owner: Vec<Option<usize>> = vec![None; m.n_cells()];
    for (k, (e, _)) in cd.iter().enumerate() {
        same_grid(m, e)?;
        for c in e.iter() {
            if let Some(j) = owner[c] {
                return Err(Error::NotAPartition(format!("cell {:?} lies in regions {j} and {k}", m.coords(c))));
            }
            owner[c] = Some(k);
        }
    }
    if let Some(c) = owner.iter().position(Option::is_none) {
        return Err(Error::NotAPartition(format!("cell {:?} is not covered", m.coords(c))));
    }
    Ok(())
}

/// Contextual decomposition check: `A_0` is the full set, every other region is
/// nonempty with a proper subset that induces regular CSSI there.
pub fn verify_decomposition(m: &FiniteScm, cd: &GridDecomposition) -> Result<bool> {
    check_partition(m, cd)?;
    let full = ParentSet::full(m.d());
    if cd[0].1 != full {
        return Ok(false);
    }
    for (e, a) in &cd[1..] {
        if e.is_empty() || !a.is_proper_subset(full) || !is_regular(m, e, *a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn grid_components(e: &GridRegion) -> Vec<Vec<usize>> {
    let dims = e.dims();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for start in e.iter() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let x = e.coords(c);
            for v in 0..dims.len() {
                for step in [x[v].wrapping_sub(1), x[v] + 1] {
                    if step >= dims[v] {
                        continue;
                    }
                    let mut y = x.clone();
                    y[v] = step;
                    let nb = index_of(dims, &y);
                    if e.contains(nb) && seen.insert(nb) {
                        comp.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// Whether the slice `E|_{x_A}` is coordinate-wise connected w.r.t. `s` and `t`:
/// its grid-connected components, linked when their `s`- or `t`-projections
/// meet, form a connected graph.
pub fn coordinatewise_connected(
    e: &GridRegion,
    a: ParentSet,
    x_a: &[usize],
    s: ParentSet,
    t: ParentSet,
) -> Result<bool> {
    let d = e.dims().len();
    if !s.union(t).union(a).is_within(d) || !s.intersection(t).is_empty() || !s.union(t).intersection(a).is_empty() {
        return Err(Error::PreconditionFailed(format!("{s} and {t} must be disjoint subsets of the complement of {a}")));
    }
    if x_a.len() != a.len() {
        return Err(Error::ShapeMismatch(format!("{} values for {a}", x_a.len())));
    }
    let slice = e.restrict(a, x_a);
    if slice.is_empty() {
        return Err(Error::EmptySlice);
    }
    let comps = grid_components(&slice);
    let proj = |cells: &[usize], set: ParentSet| -> BTreeSet<Vec<usize>> {
        cells.iter().map(|&c| project(&slice.coords(c), set)).collect()
    };
    let ps: Vec<_> = comps.iter().map(|c| proj(c, s)).collect();
    let pt: Vec<_> = comps.iter().map(|c| proj(c, t)).collect();
    let mut parent: Vec<usize> = (0..comps.len()).collect();
    for i in 0..comps.len() {
        for j in i + 1..comps.len() {
            if !ps[i].is_disjoint(&ps[j]) || !pt[i].is_disjoint(&pt[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let root = find(&mut parent, 0);
    Ok((0..comps.len()).all(|i| find(&mut parent, i) == root))
}

/// Every slice of `e` at fixed `X_{A∩B}` is coordinate-wise connected w.r.t.
/// `A∖B` and `B∖A`; under this condition CSSI with `a` and `b` yields CSSI with `a ∩ b`.
pub fn intersection_precondition(e: &GridRegion, a: ParentSet, b: ParentSet) -> Result<bool> {
    let i = a.intersection(b);
    for x in e.project(i) {
        if !coordinatewise_connected(e, i, &x, a.difference(b), b.difference(a))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Given CSSI with `a` and with `b` on `e`, whether CSSI with `a ∩ b` holds.
pub fn check_intersection_property(m: &FiniteScm, e: &GridRegion, a: ParentSet, b: ParentSet) -> Result<bool> {
    if !check_cssi(m, e, a)? || !check_cssi(m, e, b)? {
        return Err(Error::PreconditionFailed(format!("CSSI with {a} and {b} must both hold")));
    }
    check_cssi(m, e, a.intersection(b))
}

/// Joint table of `(X, Z, Y)` where `Z` is the index of the region holding `X`.
struct AugmentedTable {
    z_card: usize,
    /// `p(x, z, y)` at `[cell * z_card + z]`.
    joint: Vec<Vec<f64>>,
}

impl AugmentedTable {
    fn build(m: &FiniteScm, cd: &GridDecomposition) -> Self {
        let z_card = cd.len() + 1;
        let none = cd.len();
        let mut joint = Vec::with_capacity(m.n_cells() * z_card);
        for c in 0..m.n_cells() {
            let zc = cd.iter().position(|(e, _)| e.contains(c)).unwrap_or(none);
            for z in 0..z_card {
                let w = if z == zc { m.joint(c) } else { 0.0 };
                joint.push(m.cond(c).iter().map(|p| w * p).collect());
            }
        }
        AugmentedTable { z_card, joint }
    }

    /// `Y ⊥ X_{A^c} | X_A = x_A, Z = z` for every `x_A`.
    fn csi_holds(&self, m: &FiniteScm, a: ParentSet, z: usize, tol: f64) -> bool {
        let mut groups: BTreeMap<Vec<usize>, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
        for c in 0..m.n_cells() {
            let pxyz = &self.joint[c * self.z_card + z];
            let pxz: f64 = pxyz.iter().sum();
            if pxz > 0.0 {
                let cond = pxyz.iter().map(|p| p / pxz).collect();
                groups.entry(project(&m.coords(c), a)).or_default().push((pxz, cond));
            }
        }
        groups.values().all(|members| {
            let total: f64 = members.iter().map(|m| m.0).sum();
            let mut marginal = vec![0.0; m.y_card()];
            for (w, p) in members {
                for (acc, v) in marginal.iter_mut().zip(p) {
                    *acc += w / total * v;
                }
            }
            members.iter().all(|(_, p)| tv_distance(p, &marginal) <= tol)
        })
    }
}

/// Every `(E_k, A_k)` of `cd` re-expressed as the CSI `Y ⊥ X_{A_k^c} | X_{A_k}, Z = k`
/// with the partition indicator `Z`, and checked on the augmented joint table.
pub fn piv_equivalence(m: &FiniteScm, cd: &GridDecomposition) -> bool {
    let aug = AugmentedTable::build(m, cd);
    cd.iter().enumerate().all(|(k, (_, a))| aug.csi_holds(m, *a, k, m.tol()))
}

fn check_split(d: usize, b: ParentSet, a: ParentSet) -> Result<()> {
    if !a.intersection(b).is_empty() || a.union(b) != ParentSet::full(d) {
        return Err(Error::PreconditionFailed(format!("{a} and {b} must partition the parents")));
    }
    Ok(())
}

fn context_cells(m: &FiniteScm, a: ParentSet, x_a: &[usize]) -> Result<GridRegion> {
    if x_a.len() != a.len() || a.iter().zip(x_a).any(|(i, &v)| v >= m.dims()[i]) {
        return Err(Error::ShapeMismatch(format!("context {x_a:?} for {a}")));
    }
    Ok(m.full_region().restrict(a, x_a))
}

/// Context set for the CSI `Y ⊥ X_B | X_A = x_A`: all cells with `X_A = x_A`.
pub fn embed_csi(m: &FiniteScm, b: ParentSet, a: ParentSet, x_a: &[usize]) -> Result<GridRegion> {
    check_split(m.d(), b, a)?;
    let e = context_cells(m, a, x_a)?;
    let total = m.mass(&e);
    let mut marginal = vec![0.0; m.y_card()];
    for c in e.iter() {
        for (acc, p) in marginal.iter_mut().zip(m.cond(c)) {
            *acc += m.joint(c) / total * p;
        }
    }
    if e.iter().any(|c| tv_distance(m.cond(c), &marginal) > m.tol()) {
        return Err(Error::CsiDoesNotHold);
    }
    Ok(e)
}

/// Context set for the PCI `Y ⊥ X_B | D_B, X_A = x_A`: cells with `X_A = x_A`
/// and `x_B ∈ D_B`.
pub fn embed_pci(
    m: &FiniteScm,
    b: ParentSet,
    domain_b: &BTreeSet<Vec<usize>>,
    a: ParentSet,
    x_a: &[usize],
) -> Result<GridRegion> {
    check_split(m.d(), b, a)?;
    let ctx = context_cells(m, a, x_a)?;
    let cells: Vec<usize> = ctx.iter().filter(|&c| domain_b.contains(&project(&m.coords(c), b))).collect();
    if cells.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if !group_is_constant(m, &cells) {
        return Err(Error::CsiDoesNotHold);
    }
    Ok(GridRegion::from_cells(m.dims().to_vec(), cells))
}

fn is_canonical_cd(m: &FiniteScm, cd: &GridDecomposition) -> Result<bool> {
    if !verify_decomposition(m, cd)? {
        return Ok(false);
    }
    for (e, a) in cd {
        if !e.is_empty() && !is_canonical(m, e, *a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn union_with(cd: &GridDecomposition, c: ParentSet, dims: &[usize]) -> GridRegion {
    cd.iter().filter(|(_, a)| *a == c).fold(GridRegion::empty(dims.to_vec()), |acc, (e, _)| acc.union(e))
}

fn is_distinctive(cd: &GridDecomposition) -> bool {
    let sets: BTreeSet<u64> = cd.iter().map(|(_, a)| a.bits()).collect();
    sets.len() == cd.len()
}

/// Two canonical decompositions of one system agree: intersecting regions share
/// parent sets, and per parent set the unions differ by a null set. For two
/// distinctive decompositions the regions also match one to one.
pub fn check_canonical_cd_agreement(m: &FiniteScm, cd1: &GridDecomposition, cd2: &GridDecomposition) -> Result<bool> {
    for (name, cd) in [("first", cd1), ("second", cd2)] {
        if !is_canonical_cd(m, cd)? {
            return Err(Error::PreconditionFailed(format!("{name} decomposition is not canonical")));
        }
    }
    let dims = m.dims();
    for (e, a) in cd1 {
        for (f, b) in cd2 {
            if m.mass(&e.intersection(f)) > 0.0 && a != b {
                return Ok(false);
            }
        }
    }
    let sets: BTreeSet<u64> = cd1.iter().chain(cd2).map(|(_, a)| a.bits()).collect();
    for c in sets {
        let c = ParentSet::from_bits(c);
        if m.mass(&union_with(cd1, c, dims).symmetric_difference(&union_with(cd2, c, dims))) > 0.0 {
            return Ok(false);
        }
    }
    if is_distinctive(cd1) && is_distinctive(cd2) {
        if cd1.len() != cd2.len() {
            return Ok(false);
        }
        for (e, _) in cd1 {
            for (f, _) in cd2 {
                if m.mass(&e.intersection(f)) > 0.0 && m.mass(&e.symmetric_difference(f)) > 0.0 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
