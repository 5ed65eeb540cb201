//! Roll-up followed by the final measurement, for either hypothesis family.

use crate::discrimination::{solve, DiscriminationResult, MeasurementKind};
use crate::error::Result;
use crate::linalg::{CMatrix, ToleranceConfig};
use crate::mps_rollup::{extract_apparatus_ensemble, run_mps_protocol};
use crate::ncopy::run_ncopy_protocol;
use crate::states::{Ensemble, GramMatrix, MpsEnsemble, ProductHypotheses};
use crate::Mode;

/// Hypotheses accepted by the roll-up engines.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypotheses {
    Product(ProductHypotheses),
    Mps(MpsEnsemble),
}

impl Hypotheses {
    pub fn len(&self) -> usize {
        match self {
            Self::Product(h) => h.len(),
            Self::Mps(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn priors(&self) -> &[f64] {
        match self {
            Self::Product(h) => h.priors(),
            Self::Mps(m) => m.priors(),
        }
    }

    pub fn site_dims(&self) -> Vec<usize> {
        match self {
            Self::Product(h) => h.site_dims(),
            Self::Mps(m) => m.physical_dims(),
        }
    }

    /// Gram matrix of the full hypothesis states, without densifying.
    pub fn gram(&self) -> CMatrix {
        match self {
            Self::Product(h) => h.product_gram(),
            Self::Mps(m) => m.gram_matrix(),
        }
    }

    /// Dense hypothesis states, refused above `limit` amplitudes.
    pub fn to_dense(&self, limit: usize) -> Result<Ensemble> {
        match self {
            Self::Product(h) => h.to_dense(limit),
            Self::Mps(m) => {
                let dim = crate::states::checked_power_product(&m.physical_dims(), limit)?;
                debug_assert!(dim <= limit);
                m.to_dense()
            }
        }
    }
}

/// Everything produced by one protocol run and its final measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub final_ensemble: Ensemble,
    pub initial_gram: CMatrix,
    pub final_gram: CMatrix,
    /// `max |final_gram - initial_gram|`.
    pub gram_error: f64,
    /// Full mode only.
    pub decoupling_max: Option<f64>,
    pub schmidt_rank_max: usize,
    pub apparatus_dim: usize,
    pub unitarity_defect_max: f64,
    pub discarded_weight: f64,
    pub measurement: DiscriminationResult,
}

fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rolls the hypotheses into the apparatus and measures it.
pub fn run_protocol(
    hypotheses: &Hypotheses,
    mode: Mode,
    measurement: MeasurementKind,
    tol: &ToleranceConfig,
) -> Result<ProtocolOutcome> {
    let initial_gram = hypotheses.gram();
    let (final_ensemble, decoupling_max, schmidt_rank_max, apparatus_dim, defect, discarded) =
        match hypotheses {
            Hypotheses::Product(h) => {
                let (trace, fin) = run_ncopy_protocol(h, mode, tol)?;
                let dec = (mode == Mode::Full)
                    .then(|| trace.decoupling_residuals.iter().copied().fold(0.0, f64::max));
                (fin, dec, trace.max_rank(), h.len(), trace.max_unitarity_defect(), 0.0)
            }
            Hypotheses::Mps(m) => {
                let (trace, state) = run_mps_protocol(m, mode, tol)?;
                let fin = extract_apparatus_ensemble(&state, m.priors())?;
                let dec = (mode == Mode::Full)
                    .then(|| trace.decoupling_residuals.iter().copied().fold(0.0, f64::max));
                (
                    fin,
                    dec,
                    trace.max_schmidt_rank(),
                    trace.apparatus_dim,
                    trace.max_unitarity_defect(),
                    trace.total_discarded_weight(),
                )
            }
        };
    let final_gram = final_ensemble.gram_matrix();
    let measurement = solve(&final_ensemble, measurement, tol)?;
    Ok(ProtocolOutcome {
        gram_error: max_entry_diff(&final_gram, &initial_gram),
        initial_gram,
        final_gram,
        final_ensemble,
        decoupling_max,
        schmidt_rank_max,
        apparatus_dim,
        unitarity_defect_max: defect,
        discarded_weight: discarded,
        measurement,
    })
}
