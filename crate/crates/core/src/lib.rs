pub mod baselines;
pub mod discrimination;
pub mod error;
pub mod linalg;
pub mod memory;
pub mod mps_rollup;
pub mod ncopy;
pub mod pipeline;
pub mod random;
pub mod scenario;
pub mod states;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, ToleranceConfig, C64};

use serde::{Deserialize, Serialize};

/// How much of the global state a roll-up keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Apparatus states only.
    #[default]
    Compact,
    /// Dense global states, enabling decoupling diagnostics.
    Full,
}
