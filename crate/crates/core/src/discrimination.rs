//! Final measurements on a K-hypothesis ensemble.
//!
//! Minimum-error discrimination starts from the square-root measurement and
//! iterates the fixed point `Pi_k -> S^{-1/2} A_k Pi_k A_k S^{-1/2}` with
//! `A_k = p_k rho_k` and `S = sum_k A_k Pi_k A_k`. Optimality is certified
//! by the dual conditions `Upsilon - A_k >= 0`, `Upsilon = sum_k A_k Pi_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermiticity_defect, CMatrix, ToleranceConfig};
use crate::states::{validate_priors, Ensemble};

/// PSD floor and completeness tolerance every returned POVM satisfies.
pub const POVM_TOL: f64 = 1e-10;

/// Relative eigenvalue cutoff below which a Hermitian matrix is treated as
/// singular when forming `M^{-1/2}`.
const PINV_REL_TOL: f64 = 1e-12;

/// Guarantee a success-probability step may lose before the solver stops.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Hypothesis(usize),
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    #[default]
    MinError,
    Helstrom,
    Unambiguous,
}

/// Hermitian effects with outcome labels; PSD and complete within
/// [`POVM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    effects: Vec<CMatrix>,
    labels: Vec<Outcome>,
}

fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

impl Povm {
    pub fn new(effects: Vec<CMatrix>, labels: Vec<Outcome>) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        if effects.len() != labels.len() {
            return Err(Error::InvalidPovm(format!(
                "{} effects but {} labels",
                effects.len(),
                labels.len()
            )));
        }
        let d = effects[0].nrows();
        for e in &effects {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: e.nrows().max(e.ncols()),
                });
            }
            let h = hermiticity_defect(e);
            if h > POVM_TOL {
                return Err(Error::NotHermitian(h));
            }
        }
        let povm = Self {
            effects: effects.iter().map(symmetrize).collect(),
            labels,
        };
        let floor = povm.min_eigenvalue()?;
        if floor < -POVM_TOL {
            return Err(Error::InvalidPovm(format!("effect eigenvalue {floor:e} below zero")));
        }
        let defect = povm.completeness_defect();
        if defect > POVM_TOL {
            return Err(Error::InvalidPovm(format!("effects miss identity by {defect:e}")));
        }
        Ok(povm)
    }

    pub fn effects(&self) -> &[CMatrix] {
        &self.effects
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    /// `max |sum_i E_i - I|`.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.dim();
        let sum = self
            .effects
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, e| acc + e);
        (sum - CMatrix::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all effects.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut floor = f64::INFINITY;
        for e in &self.effects {
            floor = floor.min(hermitian_eigen(e)?.values[0]);
        }
        Ok(floor)
    }

    /// Effect assigned to hypothesis `k`, if any.
    pub fn effect_for(&self, k: usize) -> Option<&CMatrix> {
        self.labels
            .iter()
            .position(|l| *l == Outcome::Hypothesis(k))
            .map(|i| &self.effects[i])
    }

    /// `{U E_i U^dagger}` with the same labels.
    pub fn transformed(&self, u: &CMatrix) -> Self {
        Self {
            effects: self
                .effects
                .iter()
                .map(|e| symmetrize(&(u * e * u.adjoint())))
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Priors with density matrices; validated Hermitian, PSD and unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedEnsemble {
    priors: Vec<f64>,
    densities: Vec<CMatrix>,
}

impl MixedEnsemble {
    pub fn new(densities: Vec<CMatrix>, priors: Vec<f64>) -> Result<Self> {
        if densities.is_empty() {
            return Err(Error::EmptyInput);
        }
        validate_priors(&priors, densities.len())?;
        let d = densities[0].nrows();
        for rho in &densities {
            if rho.nrows() != d || rho.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: rho.nrows().max(rho.ncols()),
                });
            }
            let tr = rho.trace();
            if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
                return Err(Error::InvalidDensity(format!("trace {tr}")));
            }
            let floor = hermitian_eigen(rho)?.values[0];
            if floor < -1e-10 {
                return Err(Error::InvalidDensity(format!("eigenvalue {floor:e}")));
            }
        }
        Ok(Self {
            priors,
            densities: densities.iter().map(symmetrize).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.densities[0].nrows()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn densities(&self) -> &[CMatrix] {
        &self.densities
    }

    /// `p_k rho_k` for every k.
    fn weighted(&self) -> Vec<CMatrix> {
        self.densities
            .iter()
            .zip(&self.priors)
            .map(|(r, p)| r.scale(*p))
            .collect()
    }
}

impl From<&Ensemble> for MixedEnsemble {
    fn from(e: &Ensemble) -> Self {
        Self {
            priors: e.priors().to_vec(),
            densities: e.densities(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationResult {
    pub kind: MeasurementKind,
    pub povm: Povm,
    pub success_probability: f64,
    /// `conditionals[(k, i)] = Tr(rho_k E_i)`.
    pub conditionals: DMatrix<f64>,
    /// Dual residual for minimum-error results; `None` for unambiguous.
    pub certificate_residual: Option<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Success probability of every accepted iterate, starting value first.
    pub success_history: Vec<f64>,
}

impl DiscriminationResult {
    /// Probability of the inconclusive outcome, averaged over priors.
    pub fn inconclusive_probability(&self, priors: &[f64]) -> f64 {
        self.povm
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Outcome::Inconclusive)
            .map(|(i, _)| {
                priors
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * self.conditionals[(k, i)])
                    .sum::<f64>()
            })
            .sum()
    }
}

fn check_dims(ens: &MixedEnsemble, povm: &Povm) -> Result<()> {
    if ens.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: ens.dim(),
            got: povm.dim(),
        });
    }
    Ok(())
}

/// Hypothesis labels must lie in `0..k` and appear at most once.
fn check_labels(povm: &Povm, k: usize, require_all: bool) -> Result<()> {
    let mut seen = vec![false; k];
    for l in povm.labels() {
        if let Outcome::Hypothesis(i) = l {
            if *i >= k {
                return Err(Error::LabelMismatch(format!("label {i} with {k} hypotheses")));
            }
            if seen[*i] {
                return Err(Error::LabelMismatch(format!("label {i} repeated")));
            }
            seen[*i] = true;
        }
    }
    if require_all {
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::LabelMismatch(format!("no outcome for hypothesis {i}")));
        }
    }
    Ok(())
}

fn conditionals(ens: &MixedEnsemble, povm: &Povm) -> DMatrix<f64> {
    DMatrix::from_fn(ens.len(), povm.len(), |k, i| {
        (&ens.densities[k] * &povm.effects[i]).trace().re
    })
}

fn success_from(ens: &MixedEnsemble, povm: &Povm, cond: &DMatrix<f64>) -> f64 {
    povm.labels()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Outcome::Hypothesis(k) => Some(ens.priors[*k] * cond[(*k, i)]),
            Outcome::Inconclusive => None,
        })
        .sum()
}

/// `sum_k p_k Tr(rho_k E_k)` for a mixed ensemble.
pub fn success_probability_mixed(ens: &MixedEnsemble, povm: &Povm) -> Result<f64> {
    check_dims(ens, povm)?;
    check_labels(povm, ens.len(), true)?;
    Ok(success_from(ens, povm, &conditionals(ens, povm)))
}

/// `sum_k p_k <psi_k|E_k|psi_k>`.
pub fn success_probability(ensemble: &Ensemble, povm: &Povm) -> Result<f64> {
    success_probability_mixed(&MixedEnsemble::from(ensemble), povm)
}

/// Dual residual for a K-outcome minimum-error POVM.
pub fn ykl_certificate_mixed(ens: &MixedEnsemble, povm: &Povm) -> Result<f64> {
    check_dims(ens, povm)?;
    if povm.len() != ens.len() {
        return Err(Error::LabelMismatch(format!(
            "{} outcomes for {} hypotheses",
            povm.len(),
            ens.len()
        )));
    }
    check_labels(povm, ens.len(), true)?;
    let weighted = ens.weighted();
    let d = ens.dim();
    let mut upsilon = CMatrix::zeros(d, d);
    for (l, e) in povm.labels().iter().zip(povm.effects()) {
        if let Outcome::Hypothesis(k) = l {
            upsilon += &weighted[*k] * e;
        }
    }
    let defect = hermiticity_defect(&upsilon);
    let sym = symmetrize(&upsilon);
    let mut worst = 0.0f64;
    for a in &weighted {
        let low = hermitian_eigen(&(&sym - a))?.values[0];
        worst = worst.max(-low);
    }
    Ok(worst + defect)
}

pub fn ykl_certificate(ensemble: &Ensemble, povm: &Povm) -> Result<f64> {
    ykl_certificate_mixed(&MixedEnsemble::from(ensemble), povm)
}

fn finish(
    kind: MeasurementKind,
    ens: &MixedEnsemble,
    povm: Povm,
    certificate_residual: Option<f64>,
    iterations_used: usize,
    converged: bool,
    success_history: Vec<f64>,
) -> DiscriminationResult {
    let cond = conditionals(ens, &povm);
    let success_probability = success_from(ens, &povm, &cond);
    DiscriminationResult {
        kind,
        povm,
        success_probability,
        conditionals: cond,
        certificate_residual,
        iterations_used,
        converged,
        success_history,
    }
}

/// Helstrom measurement for two weighted density matrices.
///
/// The null space of `p1 rho1 - p2 rho2` goes to the first outcome.
pub fn helstrom_two_state(p1: f64, rho1: &CMatrix, p2: f64, rho2: &CMatrix) -> Result<DiscriminationResult> {
    let ens = MixedEnsemble::new(vec![rho1.clone(), rho2.clone()], vec![p1, p2])?;
    helstrom_mixed(&ens)
}

fn helstrom_mixed(ens: &MixedEnsemble) -> Result<DiscriminationResult> {
    if ens.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "Helstrom measurement needs 2 hypotheses, got {}",
            ens.len()
        )));
    }
    let gamma = ens.densities[0].scale(ens.priors[0]) - ens.densities[1].scale(ens.priors[1]);
    let eig = hermitian_eigen(&symmetrize(&gamma))?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let cut = -1e-12 * scale;
    let d = ens.dim();
    let pi1 = eig.map_spectrum(|l| if l >= cut { 1.0 } else { 0.0 });
    let pi2 = CMatrix::identity(d, d) - &pi1;
    let povm = Povm::new(vec![pi1, pi2], vec![Outcome::Hypothesis(0), Outcome::Hypothesis(1)])?;
    let residual = ykl_certificate_mixed(ens, &povm)?;
    let mut res = finish(MeasurementKind::Helstrom, ens, povm, Some(residual), 0, true, Vec::new());
    res.success_history.push(res.success_probability);
    Ok(res)
}

/// Helstrom measurement for a two-state pure ensemble.
pub fn helstrom_ensemble(ensemble: &Ensemble) -> Result<DiscriminationResult> {
    helstrom_mixed(&MixedEnsemble::from(ensemble))
}

/// `(M^{-1/2} on its support, projector onto its kernel)`.
fn inverse_sqrt_with_kernel(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let eig = hermitian_eigen(&symmetrize(m))?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let cut = PINV_REL_TOL * top;
    let inv = eig.map_spectrum(|l| if l > cut && top > 0.0 { 1.0 / l.sqrt() } else { 0.0 });
    let kernel = eig.map_spectrum(|l| if l > cut && top > 0.0 { 0.0 } else { 1.0 });
    Ok((inv, kernel))
}

fn hypothesis_labels(k: usize) -> Vec<Outcome> {
    (0..k).map(Outcome::Hypothesis).collect()
}

/// Square-root measurement, with the kernel of `sum_k p_k rho_k` added to
/// the first outcome.
pub fn square_root_measurement_mixed(ens: &MixedEnsemble) -> Result<Povm> {
    let weighted = ens.weighted();
    let d = ens.dim();
    let total = weighted.iter().fold(CMatrix::zeros(d, d), |acc, a| acc + a);
    let (inv, kernel) = inverse_sqrt_with_kernel(&total)?;
    let mut effects: Vec<CMatrix> = weighted.iter().map(|a| symmetrize(&(&inv * a * &inv))).collect();
    effects[0] += kernel;
    Povm::new(effects, hypothesis_labels(ens.len()))
}

pub fn square_root_measurement(ensemble: &Ensemble) -> Result<Povm> {
    square_root_measurement_mixed(&MixedEnsemble::from(ensemble))
}

fn fixed_point_step(weighted: &[CMatrix], povm: &Povm) -> Result<Povm> {
    let d = povm.dim();
    let sandwiches: Vec<CMatrix> = weighted
        .iter()
        .zip(povm.effects())
        .map(|(a, e)| symmetrize(&(a * e * a)))
        .collect();
    let s = sandwiches.iter().fold(CMatrix::zeros(d, d), |acc, x| acc + x);
    let (inv, kernel) = inverse_sqrt_with_kernel(&s)?;
    let mut effects: Vec<CMatrix> = sandwiches.iter().map(|x| symmetrize(&(&inv * x * &inv))).collect();
    effects[0] += kernel;
    Povm::new(effects, povm.labels().to_vec())
}

/// Minimum-error POVM for a mixed ensemble.
///
/// Never fails on non-convergence: the best iterate comes back with
/// `converged = false`.
pub fn min_error_povm_mixed(ens: &MixedEnsemble, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    tol.validate()?;
    let weighted = ens.weighted();
    let mut povm = square_root_measurement_mixed(ens)?;
    let mut success = success_from(ens, &povm, &conditionals(ens, &povm));
    let mut history = vec![success];
    let mut residual = ykl_certificate_mixed(ens, &povm)?;
    let mut iterations = 0usize;
    while residual > tol.certificate_tol && iterations < tol.max_iterations {
        let next = fixed_point_step(&weighted, &povm)?;
        iterations += 1;
        let s = success_from(ens, &next, &conditionals(ens, &next));
        if s < success - MONOTONE_SLACK {
            break;
        }
        povm = next;
        success = s;
        history.push(s);
        residual = ykl_certificate_mixed(ens, &povm)?;
    }
    let converged = residual <= tol.certificate_tol;
    Ok(finish(
        MeasurementKind::MinError,
        ens,
        povm,
        Some(residual),
        iterations,
        converged,
        history,
    ))
}

pub fn min_error_povm(ensemble: &Ensemble, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    min_error_povm_mixed(&MixedEnsemble::from(ensemble), tol)
}

/// Optimal unambiguous measurement for two pure states.
///
/// Outcome `k` projects onto the direction orthogonal to the other state,
/// scaled by a weight chosen for the prior regime.
pub fn unambiguous_two_state(ensemble: &Ensemble) -> Result<DiscriminationResult> {
    if ensemble.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "unambiguous discrimination needs 2 hypotheses, got {}",
            ensemble.len()
        )));
    }
    let psi1 = ensemble.states()[0].amplitudes();
    let psi2 = ensemble.states()[1].amplitudes();
    let (p1, p2) = (ensemble.priors()[0], ensemble.priors()[1]);
    let c = psi1.dotc(psi2).norm();
    if c >= 1.0 - 1e-12 {
        return Err(Error::IdenticalStates);
    }
    // perp2 is orthogonal to psi2, perp1 to psi1
    let perp2 = {
        let v = psi1 - psi2 * psi2.dotc(psi1);
        v.unscale(v.norm())
    };
    let perp1 = {
        let v = psi2 - psi1 * psi1.dotc(psi2);
        v.unscale(v.norm())
    };
    let one_minus = 1.0 - c * c;
    let (a1, a2) = if c * (p2 / p1).sqrt() >= 1.0 {
        (0.0, 1.0)
    } else if c * (p1 / p2).sqrt() >= 1.0 {
        (1.0, 0.0)
    } else {
        (
            ((1.0 - c * (p2 / p1).sqrt()) / one_minus).min(1.0),
            ((1.0 - c * (p1 / p2).sqrt()) / one_minus).min(1.0),
        )
    };
    let e1 = symmetrize(&(&perp2 * perp2.adjoint()).scale(a1));
    let e2 = symmetrize(&(&perp1 * perp1.adjoint()).scale(a2));
    let d = ensemble.dim();
    let inc = CMatrix::identity(d, d) - &e1 - &e2;
    let povm = Povm::new(
        vec![e1, e2, inc],
        vec![Outcome::Hypothesis(0), Outcome::Hypothesis(1), Outcome::Inconclusive],
    )?;
    let ens = MixedEnsemble::from(ensemble);
    let mut res = finish(MeasurementKind::Unambiguous, &ens, povm, None, 0, true, Vec::new());
    res.success_history.push(res.success_probability);
    Ok(res)
}

/// Dispatches to the requested measurement. `MinError` with a single
/// hypothesis returns the identity effect.
pub fn solve(ensemble: &Ensemble, kind: MeasurementKind, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    match kind {
        MeasurementKind::MinError => min_error_povm(ensemble, tol),
        MeasurementKind::Helstrom => helstrom_ensemble(ensemble),
        MeasurementKind::Unambiguous => unambiguous_two_state(ensemble),
    }
}

/// `1/2 (1 + sqrt(1 - 4 p1 p2 |<psi1|psi2>|^2))`.
pub fn helstrom_pure_closed_form(p1: f64, p2: f64, overlap_abs: f64) -> f64 {
    0.5 * (1.0 + (1.0 - 4.0 * p1 * p2 * overlap_abs * overlap_abs).max(0.0).sqrt())
}
