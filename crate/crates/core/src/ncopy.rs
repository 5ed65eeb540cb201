//! Sequential roll-up for product-state hypotheses.
//!
//! A K-dimensional apparatus starts in `|0>` and meets the samples one at a
//! time. At site `n` the K joint states `|psi_k^(n-1)>_A |psi_{k,n}>_S` are
//! orthonormalised into `{|phi_j>}` and the step unitary maps
//! `|phi_j> -> |j>_A |0>_S`, leaving the sample in `|0>` and the whole
//! hypothesis information in the apparatus. The first site uses the same
//! construction with the apparatus in `|0>`, which is a rank-detected
//! isometry from `Span{|psi_k>}` into the apparatus.
//!
//! Joint indices are `a * d + s` (apparatus most significant).

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_local, basis_vector, complete_isometry, gram_schmidt, kron, nonzero_digit_weight,
    CMatrix, CVector, OrthonormalBasis, ToleranceConfig,
};
use crate::states::{Ensemble, GramMatrix, ProductHypotheses, PureState};
use crate::Mode;

/// Largest product of sample dimensions full mode will simulate densely.
pub const FULL_MODE_LIMIT: usize = 1 << 14;

/// Roll-up interaction between the apparatus and one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepUnitary {
    /// 1-based site index.
    pub site_index: usize,
    pub apparatus_dim: usize,
    pub sample_dim: usize,
    /// Unitary on the `apparatus_dim * sample_dim` joint space.
    pub matrix: CMatrix,
    /// Dimension of the joint hypothesis span actually found.
    pub rank: usize,
    pub basis: OrthonormalBasis,
    /// `max |U^dagger U - I|`, recorded for diagnostics.
    pub unitarity_defect: f64,
}

impl StepUnitary {
    /// Builds `U = sum_j |j>_A|0>_S <basis_j|`, completed on the complement.
    ///
    /// The completion columns of the isometry are sent to the remaining joint
    /// indices in increasing order.
    pub fn from_basis(
        site_index: usize,
        basis: OrthonormalBasis,
        apparatus_dim: usize,
        sample_dim: usize,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let joint = apparatus_dim * sample_dim;
        if basis.rank > apparatus_dim {
            return Err(Error::ApparatusOverflow {
                rank: basis.rank,
                dim: apparatus_dim,
            });
        }
        let w = complete_isometry(&basis, joint, tol)?;
        let mut targets: Vec<usize> = (0..basis.rank).map(|j| j * sample_dim).collect();
        targets.extend((0..joint).filter(|i| !(i % sample_dim == 0 && i / sample_dim < basis.rank)));

        let mut matrix = CMatrix::zeros(joint, joint);
        for (col, &row) in targets.iter().enumerate() {
            for c in 0..joint {
                matrix[(row, c)] = w[(c, col)].conj();
            }
        }
        let unitarity_defect = linalg::unitarity_defect(&matrix);
        Ok(Self {
            site_index,
            apparatus_dim,
            sample_dim,
            matrix,
            rank: basis.rank,
            basis,
            unitarity_defect,
        })
    }

    pub fn joint_dim(&self) -> usize {
        self.apparatus_dim * self.sample_dim
    }

    /// `(<0|_S (x) I_A) U |joint>` as an apparatus vector (unnormalised).
    pub fn apparatus_part(&self, joint: &CVector) -> CVector {
        let out = &self.matrix * joint;
        CVector::from_fn(self.apparatus_dim, |a, _| out[a * self.sample_dim])
    }

    /// Weight of `U |joint>` outside the `|0>_S` subspace.
    pub fn leakage(&self, joint: &CVector) -> f64 {
        let out = &self.matrix * joint;
        out.iter()
            .enumerate()
            .filter(|(i, _)| i % self.sample_dim != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum()
    }
}

/// Builds one step unitary from the current apparatus states and the
/// hypotheses' states of the next sample, returning the next apparatus states.
pub fn build_step_unitary(
    apparatus_states: &[CVector],
    sample_states: &[CVector],
    tol: &ToleranceConfig,
) -> Result<(StepUnitary, Vec<CVector>)> {
    build_step_unitary_capped(apparatus_states, sample_states, tol, None)
}

/// As [`build_step_unitary`], keeping at most `rank_cap` basis vectors.
///
/// A cap below the true rank produces a unitary that fails to decouple the
/// sample; this exists as a negative control for the decoupling diagnostics.
pub fn build_step_unitary_capped(
    apparatus_states: &[CVector],
    sample_states: &[CVector],
    tol: &ToleranceConfig,
    rank_cap: Option<usize>,
) -> Result<(StepUnitary, Vec<CVector>)> {
    if apparatus_states.is_empty() {
        return Err(Error::EmptyInput);
    }
    if apparatus_states.len() != sample_states.len() {
        return Err(Error::InvalidArgument(format!(
            "{} apparatus states but {} sample states",
            apparatus_states.len(),
            sample_states.len()
        )));
    }
    let a_dim = apparatus_states[0].len();
    let d = sample_states[0].len();
    for (a, s) in apparatus_states.iter().zip(sample_states) {
        if a.len() != a_dim {
            return Err(Error::DimensionMismatch {
                expected: a_dim,
                got: a.len(),
            });
        }
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
    }

    let joints: Vec<CVector> = apparatus_states
        .iter()
        .zip(sample_states)
        .map(|(a, s)| kron(a, s))
        .collect();
    let basis = match gram_schmidt(&joints, tol) {
        Err(Error::AllDegenerate) => return Err(Error::ZeroState),
        other => other?,
    };
    let basis = match rank_cap {
        Some(cap) if cap < basis.rank => basis.truncated(cap.max(1)),
        _ => basis,
    };
    let step = StepUnitary::from_basis(0, basis, a_dim, d, tol)?;
    let next = joints
        .iter()
        .map(|j| {
            let v = step.apparatus_part(j);
            let n = v.norm();
            if n == 0.0 {
                Err(Error::ZeroState)
            } else {
                Ok(v.unscale(n))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((step, next))
}

/// Dense record kept by full mode: the K global states over
/// `S_1 ... S_N (x) A`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStates {
    pub dims: Vec<usize>,
    pub states: Vec<CVector>,
}

impl GlobalStates {
    /// Apparatus components of the global states with every sample projected
    /// onto `|0>` (unnormalised).
    pub fn apparatus_components(&self) -> Vec<CVector> {
        let a_dim = *self.dims.last().expect("apparatus subsystem");
        self.states
            .iter()
            .map(|s| CVector::from_fn(a_dim, |a, _| s[a]))
            .collect()
    }
}

/// Everything recorded by one N-copy roll-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTrace {
    pub mode: Mode,
    pub steps: Vec<StepUnitary>,
    /// Apparatus states after each step.
    pub apparatus_states: Vec<Vec<CVector>>,
    /// Gram matrix of the apparatus states after each step.
    pub gram_history: Vec<CMatrix>,
    /// Full mode only: per step, max over hypotheses of the swept sample's
    /// weight outside `|0>`.
    pub decoupling_residuals: Vec<f64>,
    pub global: Option<GlobalStates>,
}

impl ProtocolTrace {
    pub fn ranks(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.rank).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(0)
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.steps.iter().map(|s| s.unitarity_defect).fold(0.0, f64::max)
    }

    pub fn final_gram(&self) -> Option<&CMatrix> {
        self.gram_history.last()
    }
}

fn gram_of(states: &[CVector]) -> CMatrix {
    let k = states.len();
    CMatrix::from_fn(k, k, |i, j| states[i].dotc(&states[j]))
}

/// Rolls every sample into a K-dimensional apparatus.
///
/// Returns the trace and the final apparatus ensemble (priors unchanged).
pub fn run_ncopy_protocol(
    hypotheses: &ProductHypotheses,
    mode: Mode,
    tol: &ToleranceConfig,
) -> Result<(ProtocolTrace, Ensemble)> {
    run_ncopy_protocol_capped(hypotheses, mode, tol, None)
}

/// As [`run_ncopy_protocol`] with every step's rank capped at `rank_cap`.
pub fn run_ncopy_protocol_capped(
    hypotheses: &ProductHypotheses,
    mode: Mode,
    tol: &ToleranceConfig,
    rank_cap: Option<usize>,
) -> Result<(ProtocolTrace, Ensemble)> {
    tol.validate()?;
    let k = hypotheses.len();
    let n = hypotheses.site_count();
    let site_dims = hypotheses.site_dims();

    let mut global = match mode {
        Mode::Compact => None,
        Mode::Full => {
            let mut dense = 1usize;
            for d in &site_dims {
                dense = dense.saturating_mul(*d);
                if dense > FULL_MODE_LIMIT {
                    return Err(Error::TooLargeForFullMode {
                        dim: dense,
                        limit: FULL_MODE_LIMIT,
                    });
                }
            }
            let mut dims = site_dims.clone();
            dims.push(k);
            let dense_hyp = hypotheses.to_dense(FULL_MODE_LIMIT)?;
            let a0 = basis_vector(k, 0);
            let states = dense_hyp
                .states()
                .iter()
                .map(|s| kron(s.amplitudes(), &a0))
                .collect();
            Some(GlobalStates { dims, states })
        }
    };

    let mut apparatus: Vec<CVector> = vec![basis_vector(k, 0); k];
    let mut trace = ProtocolTrace {
        mode,
        steps: Vec::with_capacity(n),
        apparatus_states: Vec::with_capacity(n),
        gram_history: Vec::with_capacity(n),
        decoupling_residuals: Vec::new(),
        global: None,
    };

    for site in 0..n {
        let samples: Vec<CVector> = hypotheses
            .site(site)
            .iter()
            .map(|s| s.amplitudes().clone())
            .collect();
        let (mut step, next) = build_step_unitary_capped(&apparatus, &samples, tol, rank_cap)?;
        step.site_index = site + 1;

        if let Some(g) = global.as_mut() {
            let a_index = g.dims.len() - 1;
            let mut worst = 0.0f64;
            for state in g.states.iter_mut() {
                *state = apply_local(state, &g.dims, &[a_index, site], &step.matrix)?;
                let total = state.norm_squared();
                worst = worst.max(nonzero_digit_weight(state, &g.dims, site) / total);
            }
            trace.decoupling_residuals.push(worst);
        }

        trace.gram_history.push(gram_of(&next));
        trace.apparatus_states.push(next.clone());
        trace.steps.push(step);
        apparatus = next;
    }
    trace.global = global;

    let states = apparatus
        .into_iter()
        .map(PureState::normalized)
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(states, hypotheses.priors().to_vec())?;
    Ok((trace, ensemble))
}

/// Per-site decoupling residuals measured on the final global states.
#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingReport {
    /// `residuals[n]` = max over hypotheses of `1 - <0|rho_n|0>` for site n.
    pub residuals: Vec<f64>,
    pub max: f64,
    pub pass: bool,
}

/// Checks that every sample ends in `|0>`. Requires a full-mode trace.
pub fn verify_decoupling(trace: &ProtocolTrace, threshold: f64) -> Result<DecouplingReport> {
    let g = trace.global.as_ref().ok_or(Error::CompactModeHasNoGlobalState)?;
    let sites = g.dims.len() - 1;
    let residuals: Vec<f64> = (0..sites)
        .map(|site| {
            g.states
                .iter()
                .map(|s| nonzero_digit_weight(s, &g.dims, site) / s.norm_squared())
                .fold(0.0, f64::max)
        })
        .collect();
    let max = residuals.iter().copied().fold(0.0, f64::max);
    Ok(DecouplingReport {
        pass: max <= threshold,
        residuals,
        max,
    })
}

/// Largest entrywise deviation of the final apparatus Gram from the closed
/// form `prod_n <psi_{j,n}|psi_{k,n}>`.
pub fn gram_power_law_error(hypotheses: &ProductHypotheses, final_ensemble: &Ensemble) -> f64 {
    let expected = hypotheses.product_gram();
    let got = final_ensemble.gram_matrix();
    (got - expected).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
