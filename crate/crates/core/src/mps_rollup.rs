//! Roll-up for matrix-product-state hypotheses.
//!
//! The ensemble is purified into `sum_k sqrt(p_k) |psi_k> |k>_R` and brought
//! into right-canonical form. The sweep then carries an apparatus coefficient
//! matrix `X[a, beta]` such that the global state is
//! `sum X[a, beta] |a>_A |0...0>_{swept} |right(beta)>`. Each step forms the
//! two-tensor block `Theta[(a, s), gamma]`, takes its Schmidt decomposition
//! and rotates the left Schmidt vectors onto `|j>_A |0>_S`.
//!
//! The apparatus register has fixed dimension `D * K`.

use crate::error::{Error, Result};
use crate::linalg::{
    self, apply_local, basis_vector, kron, nonzero_digit_weight, schmidt_decompose, CMatrix,
    CVector, OrthonormalBasis, ToleranceConfig, C64,
};
use crate::ncopy::StepUnitary;
use crate::states::{mps_to_statevector, purify_ensemble, Ensemble, MpsEnsemble, PureState, SiteTensor};
use crate::Mode;

/// Largest dense dimension over `A (x) S_1..S_N (x) R` simulated by full mode.
pub const MPS_FULL_MODE_LIMIT: usize = 1 << 14;

/// Dense record over `[A, S_1, ..., S_N, R]` kept by full mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsGlobalState {
    pub dims: Vec<usize>,
    pub state: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsProtocolTrace {
    pub mode: Mode,
    /// Fixed apparatus register dimension `D * K`.
    pub apparatus_dim: usize,
    pub physical_dims: Vec<usize>,
    pub priors: Vec<f64>,
    pub steps: Vec<StepUnitary>,
    /// Retained Schmidt coefficients at each cut.
    pub schmidt_spectra: Vec<Vec<f64>>,
    /// Active apparatus dimension (Schmidt rank) after each step.
    pub apparatus_dim_history: Vec<usize>,
    /// Squared Schmidt weight dropped at each cut.
    pub discarded_weights: Vec<f64>,
    /// Weight dropped while right-canonicalising the purified chain.
    pub canonicalization_discarded: f64,
    /// Weight of each step's output outside `|0>` on the swept site.
    pub step_leakage: Vec<f64>,
    /// Full mode only: per step, max over hypotheses of the swept site's
    /// weight outside `|0>`.
    pub decoupling_residuals: Vec<f64>,
    /// `Psi[a, k]` stored at `a * K + k`.
    pub final_state: CVector,
    /// `<a_j|a_k>` of the unnormalised apparatus components, i.e.
    /// `sqrt(p_j p_k) <psi_j|psi_k>`.
    pub weighted_gram: CMatrix,
    /// Gram matrix of the renormalised apparatus states.
    pub apparatus_gram: CMatrix,
    pub global: Option<MpsGlobalState>,
}

impl MpsProtocolTrace {
    pub fn max_schmidt_rank(&self) -> usize {
        self.apparatus_dim_history.iter().copied().max().unwrap_or(0)
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.steps.iter().map(|s| s.unitarity_defect).fold(0.0, f64::max)
    }

    pub fn total_discarded_weight(&self) -> f64 {
        self.canonicalization_discarded + self.discarded_weights.iter().sum::<f64>()
    }
}

/// Right-canonicalises sites `1..` in place, absorbing the remainders into
/// site 0. Returns the discarded weight.
fn right_canonicalize(tensors: &mut [SiteTensor], tol: &ToleranceConfig) -> Result<f64> {
    let mut discarded = 0.0;
    for i in (1..tensors.len()).rev() {
        let phys = tensors[i].phys;
        let m = tensors[i].as_right_matrix();
        let dec = linalg::svd(m, true, true)?;
        let u = dec.u.as_ref().expect("u requested");
        let v_t = dec.v_t.as_ref().expect("v_t requested");
        let s = &dec.singular_values;
        let s_max = s.iter().copied().fold(0.0, f64::max);
        if s_max == 0.0 {
            return Err(Error::ZeroState);
        }
        let cutoff = tol.svd_truncation_tol * s_max;
        let mut keep: Vec<usize> = (0..s.len()).filter(|&j| s[j] > cutoff).collect();
        keep.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        discarded += (0..s.len())
            .filter(|j| !keep.contains(j))
            .map(|j| s[j] * s[j])
            .sum::<f64>();

        let q = CMatrix::from_fn(keep.len(), v_t.ncols(), |r, c| v_t[(keep[r], c)]);
        let l = CMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])] * s[keep[c]]);
        tensors[i] = SiteTensor::from_right_matrix(&q, phys);

        let prev = &tensors[i - 1];
        let prev_phys = prev.phys;
        let absorbed = prev.as_left_matrix() * l;
        tensors[i - 1] = SiteTensor::from_left_matrix(&absorbed, prev_phys);
    }
    Ok(discarded)
}

fn weighted_columns(final_state: &CVector, k: usize) -> Vec<CVector> {
    let a_dim = final_state.len() / k;
    (0..k)
        .map(|col| CVector::from_fn(a_dim, |a, _| final_state[a * k + col]))
        .collect()
}

/// Rolls the purified ensemble into the apparatus.
///
/// Returns the trace and the final `A (x) R` state.
pub fn run_mps_protocol(
    ensemble: &MpsEnsemble,
    mode: Mode,
    tol: &ToleranceConfig,
) -> Result<(MpsProtocolTrace, CVector)> {
    tol.validate()?;
    let k = ensemble.len();
    let a_dim = ensemble.max_bond_dim() * k;
    let physical_dims = ensemble.physical_dims();
    let n = physical_dims.len();

    let purified = purify_ensemble(ensemble)?;
    let mut global = match mode {
        Mode::Compact => None,
        Mode::Full => {
            let mut dims = Vec::with_capacity(n + 2);
            dims.push(a_dim);
            dims.extend(&physical_dims);
            dims.push(k);
            let mut dense = 1usize;
            for d in &dims {
                dense = dense.saturating_mul(*d);
            }
            if dense > MPS_FULL_MODE_LIMIT {
                return Err(Error::TooLargeForFullMode {
                    dim: dense,
                    limit: MPS_FULL_MODE_LIMIT,
                });
            }
            let chain = mps_to_statevector(&purified.mps)?;
            let state = kron(&basis_vector(a_dim, 0), &chain);
            Some(MpsGlobalState { dims, state })
        }
    };

    let mut tensors = purified.mps.tensors().to_vec();
    let canonicalization_discarded = right_canonicalize(&mut tensors, tol)?;

    let mut trace = MpsProtocolTrace {
        mode,
        apparatus_dim: a_dim,
        physical_dims: physical_dims.clone(),
        priors: ensemble.priors().to_vec(),
        steps: Vec::with_capacity(n),
        schmidt_spectra: Vec::with_capacity(n),
        apparatus_dim_history: Vec::with_capacity(n),
        discarded_weights: Vec::with_capacity(n),
        canonicalization_discarded,
        step_leakage: Vec::with_capacity(n),
        decoupling_residuals: Vec::new(),
        final_state: CVector::zeros(0),
        weighted_gram: CMatrix::zeros(0, 0),
        apparatus_gram: CMatrix::zeros(0, 0),
        global: None,
    };

    // x[a, beta]: apparatus coefficients against the left bond of the next site
    let mut x = CMatrix::zeros(a_dim, 1);
    x[(0, 0)] = C64::new(1.0, 0.0);

    for site in 0..n {
        let t = &tensors[site];
        let d = t.phys;
        let chi = t.right;
        let rows = a_dim * d;
        let mut theta = CMatrix::zeros(rows, chi);
        for a in 0..a_dim {
            for beta in 0..t.left {
                let xa = x[(a, beta)];
                if xa == C64::new(0.0, 0.0) {
                    continue;
                }
                for s in 0..d {
                    for g in 0..chi {
                        theta[(a * d + s, g)] += xa * t.get(beta, s, g);
                    }
                }
            }
        }
        let flat = CVector::from_fn(rows * chi, |i, _| theta[(i / chi, i % chi)]);
        let schmidt = schmidt_decompose(&flat, rows, chi, tol)?;
        if schmidt.rank > a_dim {
            return Err(Error::SchmidtRankOverflow {
                rank: schmidt.rank,
                limit: a_dim,
            });
        }
        let basis = OrthonormalBasis::from_orthonormal(schmidt.left.clone());
        let step = StepUnitary::from_basis(site + 1, basis, a_dim, d, tol)?;

        let rotated = &step.matrix * &theta;
        let total = theta.norm_squared();
        let leak: f64 = (0..rows)
            .filter(|r| r % d != 0)
            .map(|r| rotated.row(r).norm_squared())
            .sum();
        x = CMatrix::from_fn(a_dim, chi, |a, g| rotated[(a * d, g)]);

        if let Some(g) = global.as_mut() {
            g.state = apply_local(&g.state, &g.dims, &[0, site + 1], &step.matrix)?;
            trace
                .decoupling_residuals
                .push(per_hypothesis_residual(&g.state, &g.dims, site + 1));
        }

        trace.step_leakage.push(leak / total);
        trace.apparatus_dim_history.push(schmidt.rank);
        trace.schmidt_spectra.push(schmidt.values.clone());
        trace.discarded_weights.push(schmidt.discarded_weight);
        trace.steps.push(step);
    }

    let reference = &tensors[n];
    let final_state = CVector::from_fn(a_dim * k, |i, _| {
        let (a, kk) = (i / k, i % k);
        (0..reference.left)
            .map(|beta| x[(a, beta)] * reference.get(beta, kk, 0))
            .sum()
    });

    let cols = weighted_columns(&final_state, k);
    trace.weighted_gram = CMatrix::from_fn(k, k, |i, j| cols[i].dotc(&cols[j]));
    let normed: Vec<CVector> = cols
        .iter()
        .map(|c| {
            let nrm = c.norm();
            if nrm > 0.0 {
                c.unscale(nrm)
            } else {
                c.clone()
            }
        })
        .collect();
    trace.apparatus_gram = CMatrix::from_fn(k, k, |i, j| normed[i].dotc(&normed[j]));
    trace.final_state = final_state.clone();
    trace.global = global;
    Ok((trace, final_state))
}

/// Max over reference labels `k` of the weight of the `k` branch outside
/// `|0>` on `site`, relative to the branch norm.
fn per_hypothesis_residual(state: &CVector, dims: &[usize], site: usize) -> f64 {
    let k = *dims.last().expect("reference subsystem");
    let rest: Vec<usize> = dims[..dims.len() - 1].to_vec();
    (0..k)
        .map(|kk| {
            let branch = CVector::from_fn(state.len() / k, |i, _| state[i * k + kk]);
            let w = branch.norm_squared();
            if w == 0.0 {
                0.0
            } else {
                nonzero_digit_weight(&branch, &rest, site) / w
            }
        })
        .fold(0.0, f64::max)
}

/// Full-mode check that every swept site ends in `|0>`, per hypothesis.
pub fn mps_decoupling_residuals(trace: &MpsProtocolTrace) -> Result<Vec<f64>> {
    let g = trace.global.as_ref().ok_or(Error::CompactModeHasNoGlobalState)?;
    Ok((1..g.dims.len() - 1)
        .map(|site| per_hypothesis_residual(&g.state, &g.dims, site))
        .collect())
}

/// Splits `sum_k |a_k>_A |k>_R` into the ensemble `{|a_k>/|a_k|}` and
/// checks `|a_k| = sqrt(p_k)` within 1e-8.
pub fn extract_apparatus_ensemble(final_state: &CVector, priors: &[f64]) -> Result<Ensemble> {
    let k = priors.len();
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    if !final_state.len().is_multiple_of(k) || final_state.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: k * (final_state.len() / k).max(1),
            got: final_state.len(),
        });
    }
    let cols = weighted_columns(final_state, k);
    let mut states = Vec::with_capacity(k);
    for (index, (c, p)) in cols.into_iter().zip(priors).enumerate() {
        let found = c.norm();
        let expected = p.max(0.0).sqrt();
        if (found - expected).abs() > 1e-8 {
            return Err(Error::NormMismatch {
                index,
                found,
                expected,
            });
        }
        states.push(PureState::normalized(c)?);
    }
    let total: f64 = priors.iter().sum();
    Ensemble::new(states, priors.iter().map(|p| p / total).collect())
}

/// Runs the recorded step unitaries backwards from
/// `|final apparatus state of k>_A |0...0>`, returning the system state.
pub fn reverse_prepare(trace: &MpsProtocolTrace, hypothesis: usize) -> Result<CVector> {
    if trace.global.is_none() {
        return Err(Error::CompactModeHasNoGlobalState);
    }
    let k = trace.priors.len();
    if hypothesis >= k {
        return Err(Error::InvalidArgument(format!(
            "hypothesis {hypothesis} out of range for {k} hypotheses"
        )));
    }
    let a_dim = trace.apparatus_dim;
    let apparatus = PureState::normalized(weighted_columns(&trace.final_state, k).swap_remove(hypothesis))?;

    let mut dims = Vec::with_capacity(trace.physical_dims.len() + 1);
    dims.push(a_dim);
    dims.extend(&trace.physical_dims);
    let sys: usize = trace.physical_dims.iter().product();
    let mut state = kron(apparatus.amplitudes(), &basis_vector(sys, 0));
    for step in trace.steps.iter().rev() {
        state = apply_local(&state, &dims, &[0, step.site_index], &step.matrix.adjoint())?;
    }
    Ok(CVector::from_fn(sys, |i, _| state[i]))
}

/// `|<a|b>|^2` for unit vectors.
pub fn fidelity(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr() / (a.norm_squared() * b.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncopy::run_ncopy_protocol;
    use crate::states::{noon_mps, GramMatrix, Mps, ProductHypotheses};

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn up4() -> Mps {
        Mps::product(&vec![PureState::basis(2, 0); 4]).unwrap()
    }

    fn ghz(n: usize, sign: f64) -> Mps {
        let mut v = CVector::zeros(1 << n);
        v[0] = C64::new(1.0, 0.0);
        v[(1 << n) - 1] = C64::new(sign, 0.0);
        Mps::from_statevector(&v.unscale(2f64.sqrt()), &vec![2; n], &tol()).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn product_ensemble_matches_ncopy() {
        let e = Ensemble::new(
            vec![
                PureState::basis(2, 0),
                PureState::from_real(&[1.0, 1.0]).unwrap(),
                PureState::from_real(&[0.3, -0.8]).unwrap(),
            ],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        let hyp = ProductHypotheses::copies(&e, 3).unwrap();
        let (_, fin) = run_ncopy_protocol(&hyp, Mode::Compact, &tol()).unwrap();
        let mps_e = hyp.to_mps_ensemble().unwrap();
        let (trace, state) = run_mps_protocol(&mps_e, Mode::Full, &tol()).unwrap();
        let ext = extract_apparatus_ensemble(&state, mps_e.priors()).unwrap();
        assert!(max_diff(&ext.gram_matrix(), &fin.gram_matrix()) < 1e-10);
        assert!(trace.decoupling_residuals.iter().all(|&r| r < 1e-10));
        assert_eq!(trace.apparatus_dim, 3);
    }

    #[test]
    fn noon_versus_all_up() {
        let e = MpsEnsemble::uniform(vec![noon_mps(4).unwrap(), up4()]).unwrap();
        let (trace, state) = run_mps_protocol(&e, Mode::Full, &tol()).unwrap();
        let ext = extract_apparatus_ensemble(&state, e.priors()).unwrap();
        let g = ext.gram_matrix();
        assert!((g[(0, 1)].norm() - 0.5f64.sqrt()).abs() < 1e-10);
        assert!(max_diff(&g, &e.gram_matrix()) < 1e-10);
        assert!(trace.max_schmidt_rank() <= 4);
        assert!(trace.decoupling_residuals.iter().all(|&r| r < 1e-10));
        assert!(mps_decoupling_residuals(&trace).unwrap().iter().all(|&r| r < 1e-10));
        assert!(max_diff(&trace.apparatus_gram, &e.gram_matrix()) < 1e-10);
    }

    #[test]
    fn ghz_pair_is_orthogonal() {
        let e = MpsEnsemble::uniform(vec![ghz(3, 1.0), ghz(3, -1.0)]).unwrap();
        let (_, state) = run_mps_protocol(&e, Mode::Compact, &tol()).unwrap();
        let ext = extract_apparatus_ensemble(&state, e.priors()).unwrap();
        assert!(ext.gram_matrix()[(0, 1)].norm() < 1e-10);
    }

    #[test]
    fn extraction_examples() {
        let one = MpsEnsemble::uniform(vec![noon_mps(2).unwrap()]).unwrap();
        let (_, state) = run_mps_protocol(&one, Mode::Compact, &tol()).unwrap();
        let ext = extract_apparatus_ensemble(&state, &[1.0]).unwrap();
        assert_eq!(ext.len(), 1);
        assert!((ext.states()[0].amplitudes().norm() - 1.0).abs() < 1e-12);

        let e = ProductHypotheses::copies(
            &Ensemble::uniform(vec![
                PureState::basis(2, 0),
                PureState::from_real(&[1.0, 1.0]).unwrap(),
            ])
            .unwrap(),
            3,
        )
        .unwrap()
        .to_mps_ensemble()
        .unwrap();
        let (_, state) = run_mps_protocol(&e, Mode::Compact, &tol()).unwrap();
        let ext = extract_apparatus_ensemble(&state, e.priors()).unwrap();
        assert!((ext.gram_matrix()[(0, 1)].norm() - 0.5f64.sqrt().powi(3)).abs() < 1e-10);
        for (p, q) in ext.priors().iter().zip(e.priors()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn norm_mismatch_is_reported() {
        let state = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let r = extract_apparatus_ensemble(&state, &[0.5, 0.5]);
        assert!(matches!(r, Err(Error::NormMismatch { .. })));
    }

    #[test]
    fn reverse_prepares_noon() {
        let e = MpsEnsemble::uniform(vec![noon_mps(3).unwrap(), ghz(3, -1.0)]).unwrap();
        let (trace, _) = run_mps_protocol(&e, Mode::Full, &tol()).unwrap();
        let back = reverse_prepare(&trace, 0).unwrap();
        let target = mps_to_statevector(&noon_mps(3).unwrap()).unwrap();
        assert!(fidelity(&back, &target) >= 1.0 - 1e-9);
        assert!((back.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reverse_prepare_needs_full_mode() {
        let e = MpsEnsemble::uniform(vec![noon_mps(2).unwrap()]).unwrap();
        let (trace, _) = run_mps_protocol(&e, Mode::Compact, &tol()).unwrap();
        assert_eq!(reverse_prepare(&trace, 0), Err(Error::CompactModeHasNoGlobalState));
    }

    #[test]
    fn tiling_matches_copies() {
        let e = MpsEnsemble::uniform(vec![noon_mps(2).unwrap(), ghz(2, -1.0)]).unwrap();
        let tiled = e.tiled(2).unwrap();
        let (_, s1) = run_mps_protocol(&tiled, Mode::Compact, &tol()).unwrap();
        let g1 = extract_apparatus_ensemble(&s1, tiled.priors()).unwrap().gram_matrix();
        let g0 = e.gram_matrix();
        let squared = g0.map(|z| z * z);
        assert!(max_diff(&g1, &squared) < 1e-10);
    }
}
