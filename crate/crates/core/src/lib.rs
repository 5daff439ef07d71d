//! Classical entanglement of partially coherent light: Schmidt decomposition
//! of a beam's polarization and spatial modes, analyzer measurements, CHSH
//! evaluation, stochastic sampling and a virtual intensity-only bench.

pub mod bench;
pub mod chsh;
pub mod error;
pub mod format;
pub mod measurement;
pub mod model;
pub mod stats;
pub mod stochastic;

pub use chsh::{AngleSet, SValue};
pub use error::{Error, Result};
pub use model::{Angle, CoherenceMatrix, SchmidtBeam};
pub use stats::Estimate;
