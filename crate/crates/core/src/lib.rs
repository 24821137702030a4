//! Context-set specific independence (CSSI) toolkit.
//!
//! * [`scm`]: structural causal models whose mechanism switches with the region
//!   of the parent space, with the ground-truth contextual decomposition attached.
//! * [`synth`] and [`dynamics`]: dataset generators.
//! * [`nn`] and [`ncd`]: neural contextual decomposition, a gate network that
//!   learns which parents matter where, trained through a masked conditional
//!   density model.
//! * [`oracle`]: exhaustive checks of CSSI statements on finite tables.
//! * [`eval`]: pooled ROC/AUC and decision-boundary plots.

pub mod dynamics;
pub mod error;
pub mod eval;
pub mod ncd;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod scm;
pub mod synth;

pub use error::{Error, Result};
pub use scm::{
    ContextKind, ContextSet, ContextualDecomposition, DatasetMeta, LabeledDataset, Mechanism, ParentLaw,
    ParentSet, Region, Row, Scm, VarLayout,
};
pub use synth::{ExampleKind, RandomFunction, SynthConfig};
