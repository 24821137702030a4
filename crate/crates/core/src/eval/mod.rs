//! Scoring a trained model: pooled ROC, boundary grids and their CSV/SVG output.

mod boundary;
mod emit;
mod roc;

pub use boundary::{boundary_grid, density_mask, pattern_label, truth_grid, BoundaryGrid, GridSpec};
pub use emit::{emit, roc_from_csv, roc_svg, Artifact, Format};
pub use roc::{confusion, mean_std, pooled_confusion, roc, score_matrix, score_rows, Confusion, RocCurve, RocPoint, ScoredPrediction, TOP_THRESHOLD};
