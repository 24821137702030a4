//! Neural contextual decomposition.
//!
//! A gate network `g` maps `x` to Bernoulli probabilities `pi`, one per parent
//! variable. A density network `f` sees `(x * z, z)` for a gate sample `z` and
//! outputs a Gaussian over `y`. Training maximizes the Monte-Carlo estimate of
//! `log E_z[p(y | x * z, z)]` with binary-concrete relaxed samples of `z`.

mod gradcheck;
mod model;
mod train;

pub use gradcheck::{finite_difference_check, GradCheck, GRAD_FLOOR};
pub use model::{build_masked_input, ncd_loss, GateSource, LossEval, NcdData, NcdHyper, NcdModel, Temperature};
pub use train::{extract_decomposition, infer_parent_scores, train, train_with, PredictedDecomposition, TrainingHistory, TrainingRecord};
