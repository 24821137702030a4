//! Brute-force CSSI oracle on finite tables.
//!
//! Continuous examples are binned onto grids with exact conditional tables, so
//! every verdict here is a finite computation. "Convex" on a grid means a
//! product of index intervals.

mod campaign;
mod check;
pub mod fixtures;
mod table;

pub use campaign::{planted, planted_decomposition, run_campaign, Campaign, CampaignReport, FixtureResult, Planted};
pub use check::{
    check_canonical_cd_agreement, check_cssi, check_intersection_property, coordinatewise_connected, embed_csi,
    embed_pci, intersection_precondition, is_canonical, is_canonical_with, is_regular, minimal_parent_sets,
    piv_equivalence, verify_decomposition, CanonicalSearch, CanonicalVerdict, GridDecomposition, EXHAUSTIVE_LIMIT,
};
pub use table::{discretize, tv_distance, Discretized, FiniteScm, GridRegion, DEFAULT_TOL};
