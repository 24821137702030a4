//! Randomized property campaigns over planted finite systems.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::check::*;
use super::fixtures;
use super::table::{project, FiniteScm, GridRegion};
use crate::error::{Error, Result};
use crate::rng::{self, tags, Rng};
use crate::scm::ParentSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Campaign {
    Entailment,
    Intersection,
    Uniqueness,
    Piv,
    CanonicalAgreement,
    Subsumption,
    Connectedness,
}

impl Campaign {
    pub const ALL: [Campaign; 7] = [
        Campaign::Entailment,
        Campaign::Intersection,
        Campaign::Uniqueness,
        Campaign::Piv,
        Campaign::CanonicalAgreement,
        Campaign::Subsumption,
        Campaign::Connectedness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Campaign::Entailment => "entailment",
            Campaign::Intersection => "intersection",
            Campaign::Uniqueness => "uniqueness",
            Campaign::Piv => "piv",
            Campaign::CanonicalAgreement => "canonical-agreement",
            Campaign::Subsumption => "subsumption",
            Campaign::Connectedness => "connectedness",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::UnknownCampaign(s.to_string()))
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixtureResult {
    pub name: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CampaignReport {
    pub campaign: String,
    pub seed: u64,
    pub instances: usize,
    pub checks: usize,
    pub violations: usize,
    /// First few violation messages.
    pub failures: Vec<String>,
    pub fixtures: Vec<FixtureResult>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.fixtures.iter().all(|f| f.passed)
    }
}

#[derive(Default)]
struct Outcome {
    checks: usize,
    violations: Vec<String>,
}

impl Outcome {
    fn expect(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(msg());
        }
    }
}

const MAX_REPORTED: usize = 10;

/// Run `n` random instances of `campaign` (concurrently) plus its fixed fixtures.
pub fn run_campaign(campaign: Campaign, seed: u64, n: usize) -> Result<CampaignReport> {
    let key = rng::derive_seed(rng::derive_seed(seed, tags::ORACLE), campaign as u64);
    let outcomes: Vec<Outcome> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(key, i as u64);
            let mut out = Outcome::default();
            if let Err(e) = instance(campaign, &mut r, &mut out) {
                out.violations.push(format!("oracle error: {e}"));
            }
            for v in &mut out.violations {
                *v = format!("instance {i}: {v}");
            }
            out
        })
        .collect();
    let mut failures = Vec::new();
    let mut violations = 0;
    let mut checks = 0;
    for o in outcomes {
        checks += o.checks;
        violations += o.violations.len();
        failures.extend(o.violations.into_iter().take(MAX_REPORTED.saturating_sub(failures.len())));
    }
    Ok(CampaignReport {
        campaign: campaign.name().to_string(),
        seed,
        instances: n,
        checks,
        violations,
        failures,
        fixtures: fixture_checks(campaign)?,
    })
}

fn fixture_checks(campaign: Campaign) -> Result<Vec<FixtureResult>> {
    let fx = |name: &str, passed: bool| FixtureResult { name: name.to_string(), passed };
    Ok(match campaign {
        Campaign::Intersection => {
            let (m, e, a, b) = fixtures::non_convex_witness()?;
            let fails = !check_intersection_property(&m, &e, a, b)?;
            let unconnected = !intersection_precondition(&e, a, b)?;
            vec![fx("non-convex union fails the intersection property", fails && unconnected)]
        }
        Campaign::Piv => {
            let ex1 = fixtures::example1(10)?;
            let trivial = vec![(ex1.table.full_region(), ParentSet::full(2))];
            vec![
                fx("discretized example 1", piv_equivalence(&ex1.table, &ex1.regions)),
                fx("trivial decomposition", piv_equivalence(&ex1.table, &trivial)),
            ]
        }
        Campaign::CanonicalAgreement => {
            let (m, cd1, cd2) = fixtures::two_canonical_decompositions()?;
            vec![fx("two canonical decompositions of the canonical example", check_canonical_cd_agreement(&m, &cd1, &cd2)?)]
        }
        Campaign::Subsumption => {
            let (m, b, domain, a, x_a) = fixtures::example1_pci(10)?;
            let e = embed_pci(&m, b, &domain, a, &x_a)?;
            vec![fx("PCI of example 1 embeds as CSSI", check_cssi(&m, &e, a)?)]
        }
        Campaign::Connectedness => {
            let (e, s, t) = fixtures::diagonal_blocks(true);
            let linked = coordinatewise_connected(&e, ParentSet::empty(), &[], s, t)?;
            let (e, s, t) = fixtures::diagonal_blocks(false);
            let apart = coordinatewise_connected(&e, ParentSet::empty(), &[], s, t)?;
            vec![fx("blocks sharing a projection", linked), fx("blocks with disjoint projections", !apart)]
        }
        Campaign::Entailment | Campaign::Uniqueness => vec![],
    })
}

fn instance(campaign: Campaign, r: &mut Rng, out: &mut Outcome) -> Result<()> {
    match campaign {
        Campaign::Entailment => entailment(r, out),
        Campaign::Intersection => intersection(r, out),
        Campaign::Uniqueness => uniqueness(r, out),
        Campaign::Piv => piv(r, out),
        Campaign::CanonicalAgreement => agreement(r, out),
        Campaign::Subsumption => subsumption(r, out),
        Campaign::Connectedness => connectedness(r, out),
    }
}

/// System with a known rectangle partition and a random table per rectangle
/// that reads only the rectangle's planted parents.
#[derive(Clone, Debug)]
pub struct Planted {
    pub table: FiniteScm,
    pub boxes: Vec<(GridRegion, ParentSet)>,
}

fn random_dist(r: &mut Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -rng::open01(r).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn random_set(r: &mut Rng, d: usize) -> ParentSet {
    ParentSet::from_indices((0..d).filter(|_| r.random_bool(0.5)))
}

fn random_rectangle(r: &mut Rng, dims: &[usize]) -> GridRegion {
    let ranges: Vec<_> = dims
        .iter()
        .map(|&n| {
            let lo = r.random_range(0..n);
            lo..r.random_range(lo + 1..=n)
        })
        .collect();
    GridRegion::rectangle(dims.to_vec(), &ranges)
}

fn random_subregion(r: &mut Rng, e: &GridRegion, keep: f64) -> GridRegion {
    let cells: Vec<usize> = e.iter().filter(|_| r.random_bool(keep)).collect();
    if cells.is_empty() {
        let all: Vec<usize> = e.iter().collect();
        return GridRegion::from_cells(e.dims().to_vec(), [all[r.random_range(0..all.len())]]);
    }
    GridRegion::from_cells(e.dims().to_vec(), cells)
}

pub fn planted(r: &mut Rng, d: usize, max_bins: usize) -> Planted {
    let dims: Vec<usize> = (0..d).map(|_| r.random_range(2..=max_bins)).collect();
    let mut boxes: Vec<Vec<std::ops::Range<usize>>> = vec![dims.iter().map(|&n| 0..n).collect()];
    for _ in 0..r.random_range(0..=3) {
        let k = r.random_range(0..boxes.len());
        let wide: Vec<usize> = (0..d).filter(|&v| boxes[k][v].len() >= 2).collect();
        if wide.is_empty() {
            continue;
        }
        let v = wide[r.random_range(0..wide.len())];
        let range = boxes[k][v].clone();
        let cut = r.random_range(range.start + 1..range.end);
        let mut other = boxes[k].clone();
        boxes[k][v] = range.start..cut;
        other[v] = cut..range.end;
        boxes.push(other);
    }
    let y_card = r.random_range(3..=4);
    let n: usize = dims.iter().product();
    let mut cond = vec![Vec::new(); n];
    let mut planted_boxes = Vec::new();
    for ranges in boxes {
        let region = GridRegion::rectangle(dims.clone(), &ranges);
        let a = random_set(r, d);
        let mut tables: std::collections::BTreeMap<Vec<usize>, Vec<f64>> = Default::default();
        for c in region.iter() {
            let key = project(&region.coords(c), a);
            cond[c] = tables.entry(key).or_insert_with(|| random_dist(r, y_card)).clone();
        }
        planted_boxes.push((region, a));
    }
    let joint = random_dist(r, n);
    let table = FiniteScm::new(dims, cond, joint).expect("planted tables are valid");
    Planted { table, boxes: planted_boxes }
}

/// Decomposition read off the planted rectangles: each gets its unique minimal
/// parent set, and rectangles needing every parent form the remainder.
pub fn planted_decomposition(p: &Planted) -> Result<Vec<(GridRegion, ParentSet)>> {
    let m = &p.table;
    let full = ParentSet::full(m.d());
    let mut rest = GridRegion::empty(m.dims().to_vec());
    let mut listed = Vec::new();
    for (e, _) in &p.boxes {
        let mins = minimal_parent_sets(m, e)?;
        if mins.len() != 1 {
            return Err(Error::PreconditionFailed(format!("rectangle with {} minimal sets", mins.len())));
        }
        if mins[0] == full {
            rest = rest.union(e);
        } else {
            listed.push((e.clone(), mins[0]));
        }
    }
    let mut cd = vec![(rest, full)];
    cd.extend(listed);
    Ok(cd)
}

fn entailment(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let p = planted(r, d, 4);
    let m = &p.table;
    for (e, a) in &p.boxes {
        out.expect(check_cssi(m, e, *a)?, || format!("planted CSSI with {a} fails"));
    }
    let e = match r.random_range(0..3) {
        0 => p.boxes[r.random_range(0..p.boxes.len())].0.clone(),
        1 => random_rectangle(r, m.dims()),
        _ => random_subregion(r, &m.full_region(), 0.4),
    };
    for min in minimal_parent_sets(m, &e)? {
        for sup in ParentSet::full(d).subsets().filter(|s| min.is_subset(*s)) {
            out.expect(check_cssi(m, &e, sup)?, || format!("{min} holds but superset {sup} fails"));
        }
        for _ in 0..5 {
            let f = random_subregion(r, &e, 0.5);
            out.expect(check_cssi(m, &f, min)?, || format!("{min} holds on a region but not on a subset"));
        }
    }
    Ok(())
}

fn uniqueness(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=4);
    let p = planted(r, d, if d == 4 { 3 } else { 4 });
    let e = random_rectangle(r, p.table.dims());
    let mins = minimal_parent_sets(&p.table, &e)?;
    out.expect(mins.len() == 1, || format!("rectangle with minimal sets {mins:?}"));
    Ok(())
}

fn intersection(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let p = planted(r, d, 4);
    let m = &p.table;
    let e = match r.random_range(0..3) {
        0 => random_rectangle(r, m.dims()),
        1 => {
            let i = r.random_range(0..p.boxes.len());
            let j = r.random_range(0..p.boxes.len());
            p.boxes[i].0.union(&p.boxes[j].0)
        }
        _ => random_subregion(r, &m.full_region(), 0.6),
    };
    let mins = minimal_parent_sets(m, &e)?;
    let a = mins[r.random_range(0..mins.len())].union(random_set(r, d));
    let b = mins[r.random_range(0..mins.len())].union(random_set(r, d));
    let connected = intersection_precondition(&e, a, b)?;
    if e.is_rectangle() {
        out.expect(connected, || format!("rectangle not coordinate-wise connected for {a}, {b}"));
    }
    let holds = check_intersection_property(m, &e, a, b)?;
    out.expect(!connected || holds, || format!("connected region but CSSI with {a} and {b} does not give their intersection"));
    Ok(())
}

fn piv(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let p = planted(r, d, 4);
    let m = &p.table;
    let cd = planted_decomposition(&p)?;
    out.expect(verify_decomposition(m, &cd)?, || "planted decomposition does not verify".into());
    out.expect(piv_equivalence(m, &cd), || "verified decomposition fails the indicator CSI".into());
    for k in 1..cd.len() {
        for j in cd[k].1.iter() {
            let mut bad = cd.clone();
            bad[k].1 = cd[k].1.without(j);
            let direct = check_cssi(m, &bad[k].0, bad[k].1)?;
            out.expect(!direct && !piv_equivalence(m, &bad), || format!("dropping X{} from region {k} kept the verdict", j + 1));
        }
    }
    if cd.len() >= 3 {
        let mut swapped = cd.clone();
        let (a1, a2) = (cd[1].1, cd[2].1);
        swapped[1].1 = a2;
        swapped[2].1 = a1;
        let mut direct = true;
        for (e, a) in &swapped {
            direct &= e.is_empty() || check_cssi(m, e, *a)?;
        }
        out.expect(direct == piv_equivalence(m, &swapped), || "indicator CSI disagrees with direct check after a swap".into());
    }
    Ok(())
}

fn subsumption(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let dims: Vec<usize> = (0..d).map(|_| r.random_range(2..=4)).collect();
    let mut a = random_set(r, d);
    if a == ParentSet::full(d) {
        a = a.without(r.random_range(0..d));
    }
    let b = a.complement(d);
    let x_a: Vec<usize> = a.iter().map(|i| r.random_range(0..dims[i])).collect();
    let n: usize = dims.iter().product();
    let y_card = 3;
    let probe = GridRegion::full(dims.clone());
    let shared = random_dist(r, y_card);
    let cond: Vec<Vec<f64>> = (0..n)
        .map(|c| if project(&probe.coords(c), a) == x_a { shared.clone() } else { random_dist(r, y_card) })
        .collect();
    let m = FiniteScm::new(dims.clone(), cond, random_dist(r, n))?;
    let e = embed_csi(&m, b, a, &x_a)?;
    let expected: usize = b.iter().map(|i| dims[i]).product();
    out.expect(e.len() == expected, || format!("embedded region has {} cells, expected {expected}", e.len()));
    out.expect(check_cssi(&m, &e, a)?, || "embedded CSI is not a CSSI".into());
    if a.is_empty() {
        out.expect(e.len() == n, || "CSI with empty context must embed as the full grid".into());
    }
    let other: Vec<usize> = a.iter().map(|i| r.random_range(0..dims[i])).collect();
    if other != x_a {
        out.expect(matches!(embed_csi(&m, b, a, &other), Err(Error::CsiDoesNotHold)), || "generic context accepted as CSI".into());
    }

    // PCI: equal tables only on a domain of X_B.
    let b_values: Vec<Vec<usize>> = probe.project(b).into_iter().collect();
    let domain: BTreeSet<Vec<usize>> = b_values.iter().filter(|_| r.random_bool(0.5)).cloned().collect();
    if !domain.is_empty() {
        let shared = random_dist(r, y_card);
        let cond: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let x = probe.coords(c);
                if project(&x, a) == x_a && domain.contains(&project(&x, b)) {
                    shared.clone()
                } else {
                    random_dist(r, y_card)
                }
            })
            .collect();
        let m = FiniteScm::new(dims, cond, random_dist(r, n))?;
        let e = embed_pci(&m, b, &domain, a, &x_a)?;
        out.expect(e.len() == domain.len(), || "PCI region has the wrong size".into());
        out.expect(check_cssi(&m, &e, a)?, || "embedded PCI is not a CSSI".into());
    }
    Ok(())
}

/// Slice cells linked by grid adjacency or a shared `s`/`t` projection; the
/// slice is coordinate-wise connected iff this cell graph is connected.
fn cell_graph_connected(slice: &GridRegion, s: ParentSet, t: ParentSet) -> bool {
    let cells: Vec<usize> = slice.iter().collect();
    let xs: Vec<Vec<usize>> = cells.iter().map(|&c| slice.coords(c)).collect();
    let linked = |i: usize, j: usize| {
        let diff: usize = xs[i].iter().zip(&xs[j]).map(|(a, b)| a.abs_diff(*b)).sum();
        diff == 1 || project(&xs[i], s) == project(&xs[j], s) || project(&xs[i], t) == project(&xs[j], t)
    };
    let mut seen = vec![false; cells.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..cells.len() {
            if !seen[j] && linked(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|v| v)
}

fn connectedness(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let dims: Vec<usize> = (0..d).map(|_| r.random_range(2..=5)).collect();
    let full = GridRegion::full(dims.clone());
    let e = match r.random_range(0..3) {
        0 => random_rectangle(r, &dims),
        1 => random_rectangle(r, &dims).union(&random_rectangle(r, &dims)),
        _ => random_subregion(r, &full, 0.35),
    };
    let a = random_set(r, d);
    let xs: Vec<Vec<usize>> = e.project(a).into_iter().collect();
    let x_a = xs[r.random_range(0..xs.len())].clone();
    let (mut s, mut t) = (ParentSet::empty(), ParentSet::empty());
    for v in a.complement(d).iter() {
        match r.random_range(0..3) {
            0 => s = s.with(v),
            1 => t = t.with(v),
            _ => {}
        }
    }
    let got = coordinatewise_connected(&e, a, &x_a, s, t)?;
    let slice = e.restrict(a, &x_a);
    out.expect(got == cell_graph_connected(&slice, s, t), || format!("disagrees with the cell graph for S = {s}, T = {t}"));
    if e.is_rectangle() {
        out.expect(got, || "rectangle slice reported disconnected".into());
    }
    if s.is_empty() || t.is_empty() {
        out.expect(got, || "an empty projection set always links components".into());
    }
    if got {
        let (s2, t2) = (s.without(s.iter().next().unwrap_or(0)), t);
        out.expect(coordinatewise_connected(&e, a, &x_a, s2, t2)?, || "connectedness not monotone in S".into());
    }
    Ok(())
}

fn split_region(r: &mut Rng, e: &GridRegion, a: ParentSet) -> Vec<GridRegion> {
    let bb = e.bounding_box().expect("nonempty");
    let choices: Vec<usize> = (0..bb.len())
        .filter(|&v| {
            let width = bb[v].1 - bb[v].0 + 1;
            if a.contains(v) { width >= 4 } else { width >= 2 }
        })
        .collect();
    if choices.is_empty() {
        return vec![e.clone()];
    }
    let v = choices[r.random_range(0..choices.len())];
    let lo = bb[v].0 + if a.contains(v) { 2 } else { 1 };
    let hi = bb[v].1 + 1 - if a.contains(v) { 2 } else { 1 };
    let cut = r.random_range(lo..=hi);
    let left = GridRegion::from_cells(e.dims().to_vec(), e.iter().filter(|&c| e.coords(c)[v] < cut));
    let right = e.difference(&left);
    vec![left, right]
}

fn agreement(r: &mut Rng, out: &mut Outcome) -> Result<()> {
    let d = r.random_range(2..=3);
    let p = planted(r, d, 4);
    let m = &p.table;
    let cd1 = planted_decomposition(&p)?;
    let mut cd2 = vec![cd1[0].clone()];
    for (e, a) in &cd1[1..] {
        cd2.extend(split_region(r, e, *a).into_iter().map(|f| (f, *a)));
    }
    // Also try regrouping all cells with one parent set along a random cut.
    let sets: BTreeSet<u64> = cd1[1..].iter().map(|(_, a)| a.bits()).collect();
    let c = ParentSet::from_bits(*sets.iter().nth(r.random_range(0..sets.len().max(1))).unwrap_or(&0));
    let union = cd1[1..].iter().filter(|(_, a)| *a == c).fold(GridRegion::empty(m.dims().to_vec()), |u, (e, _)| u.union(e));
    if !union.is_empty() {
        let v = r.random_range(0..d);
        let cut = r.random_range(0..m.dims()[v]);
        let low = GridRegion::from_cells(m.dims().to_vec(), union.iter().filter(|&x| union.coords(x)[v] <= cut));
        let high = union.difference(&low);
        let mut regrouped: Vec<(GridRegion, ParentSet)> = cd1.iter().filter(|(_, a)| *a != c).cloned().collect();
        regrouped.extend([low, high].into_iter().filter(|g| !g.is_empty()).map(|g| (g, c)));
        if matches!(verify_decomposition(m, &regrouped), Ok(true)) {
            if let Ok(ok) = check_canonical_cd_agreement(m, &cd1, &regrouped) {
                out.expect(ok, || format!("regrouped decomposition for {c} disagrees"));
            }
        }
    }
    match check_canonical_cd_agreement(m, &cd1, &cd2) {
        Ok(ok) => out.expect(ok, || "split decomposition disagrees".into()),
        Err(Error::PreconditionFailed(msg)) => out.expect(false, || format!("planted decomposition rejected: {msg}")),
        Err(e) => return Err(e),
    }
    Ok(())
}
