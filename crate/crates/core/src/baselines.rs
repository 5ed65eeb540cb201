//! Reference values for the roll-up: the joint-measurement optimum computed
//! from dense hypothesis states, and the best identical per-copy projective
//! measurement followed by Bayes post-processing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrimination::{min_error_povm, DiscriminationResult, MeasurementKind};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, ToleranceConfig, C64};
use crate::pipeline::{run_protocol, Hypotheses};
use crate::states::{Ensemble, ProductHypotheses, PureState};
use crate::Mode;

/// Largest dense dimension the joint oracle will build.
pub const ORACLE_LIMIT: usize = 1 << 14;

/// Largest number of copies the local baseline enumerates.
pub const LOCAL_MAX_SITES: usize = 12;

/// Description of the measurement class searched by the local baseline.
pub const LOCAL_CLASS: &str =
    "identical projective qubit measurement on every copy, Bayes-optimal decision on the outcome string";

/// Isometric reduction of an ensemble onto the span of its states.
///
/// With `M = [psi_1 ... psi_K] = U S V^dagger`, the reduced states are the
/// columns of `S_r V_r^dagger`, where `r` counts singular values above
/// `rank_tol * s_max`. Inner products are preserved exactly.
pub fn span_reduce(ensemble: &Ensemble, tol: &ToleranceConfig) -> Result<Ensemble> {
    let k = ensemble.len();
    let d = ensemble.dim();
    let m = CMatrix::from_fn(d, k, |i, j| ensemble.states()[j].amplitudes()[i]);
    let dec = linalg::svd(m, false, true)?;
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let s = &dec.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > tol.rank_tol * s_max).collect();
    keep.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let states = (0..k)
        .map(|j| {
            let v = CVector::from_fn(keep.len(), |r, _| v_t[(keep[r], j)] * s[keep[r]]);
            PureState::normalized(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(states, ensemble.priors().to_vec())
}

/// Minimum-error optimum over all joint measurements on the given dense
/// ensemble. The returned POVM acts on span coordinates.
pub fn joint_oracle_dense(ensemble: &Ensemble, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    if ensemble.dim() > ORACLE_LIMIT {
        return Err(Error::TooLarge {
            dim: ensemble.dim(),
            limit: ORACLE_LIMIT,
        });
    }
    min_error_povm(&span_reduce(ensemble, tol)?, tol)
}

/// Joint optimum for `N` copies of every hypothesis.
pub fn joint_oracle(ensemble: &Ensemble, copies: usize, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    joint_oracle_dense(&ensemble.tensor_power(copies, ORACLE_LIMIT)?, tol)
}

/// Joint optimum for arbitrary hypotheses, densified under [`ORACLE_LIMIT`].
pub fn joint_oracle_hypotheses(hypotheses: &Hypotheses, tol: &ToleranceConfig) -> Result<DiscriminationResult> {
    joint_oracle_dense(&hypotheses.to_dense(ORACLE_LIMIT)?, tol)
}

/// Search schedule for the local baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSearch {
    /// Polar grid points, endpoints included.
    pub theta_points: usize,
    /// Azimuthal grid points; the grid is offset by a seeded fraction.
    pub phi_points: usize,
    /// Grid points refined by pattern search.
    pub refine_starts: usize,
    /// Maximum pattern-search iterations per start.
    pub refine_rounds: usize,
    pub seed: u64,
}

impl Default for LocalSearch {
    fn default() -> Self {
        Self {
            theta_points: 65,
            phi_points: 64,
            refine_starts: 4,
            refine_rounds: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBaselineResult {
    pub success_probability: f64,
    pub theta: f64,
    pub phi: f64,
    /// Outcome-0 vector of the per-copy measurement.
    pub measurement: [C64; 2],
    pub evaluations: usize,
    pub class: &'static str,
}

fn measurement_vector(theta: f64, phi: f64) -> [C64; 2] {
    [
        C64::new((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ]
}

/// Per-site probabilities of outcome 0, `q[n][k]`.
fn outcome_zero_probabilities(hyp: &ProductHypotheses, m: &[C64; 2]) -> Vec<Vec<f64>> {
    (0..hyp.site_count())
        .map(|n| {
            hyp.site(n)
                .iter()
                .map(|s| {
                    let a = s.amplitudes();
                    (m[0].conj() * a[0] + m[1].conj() * a[1]).norm_sqr().min(1.0)
                })
                .collect()
        })
        .collect()
}

/// Exact success of the Bayes rule over all `2^N` outcome strings.
fn local_success(hyp: &ProductHypotheses, theta: f64, phi: f64) -> f64 {
    let q = outcome_zero_probabilities(hyp, &measurement_vector(theta, phi));
    let k = hyp.len();
    // joint[k][string], built site by site
    let mut joint: Vec<Vec<f64>> = hyp.priors().iter().map(|p| vec![*p]).collect();
    for qn in &q {
        for (kk, dist) in joint.iter_mut().enumerate() {
            let mut next = Vec::with_capacity(dist.len() * 2);
            for &x in dist.iter() {
                next.push(x * qn[kk]);
                next.push(x * (1.0 - qn[kk]));
            }
            *dist = next;
        }
    }
    let strings = joint[0].len();
    (0..strings)
        .map(|s| (0..k).map(|kk| joint[kk][s]).fold(0.0, f64::max))
        .sum()
}

/// Best identical per-copy projective measurement for qubit product
/// hypotheses, found by a seeded grid followed by pattern search.
pub fn local_baseline_product(hyp: &ProductHypotheses, search: &LocalSearch) -> Result<LocalBaselineResult> {
    if let Some(&d) = hyp.site_dims().iter().find(|&&d| d != 2) {
        return Err(Error::UnsupportedDimension(d));
    }
    if hyp.site_count() > LOCAL_MAX_SITES {
        return Err(Error::InvalidArgument(format!(
            "local baseline enumerates at most {LOCAL_MAX_SITES} copies, got {}",
            hyp.site_count()
        )));
    }
    if search.theta_points < 2 || search.phi_points < 1 {
        return Err(Error::InvalidArgument("local search grid too small".into()));
    }
    let pi = std::f64::consts::PI;
    let offset: f64 = ChaCha8Rng::seed_from_u64(search.seed).random();
    let dtheta = pi / (search.theta_points - 1) as f64;
    let dphi = 2.0 * pi / search.phi_points as f64;
    let grid: Vec<(f64, f64)> = (0..search.theta_points)
        .flat_map(|i| (0..search.phi_points).map(move |j| (i, j)))
        .map(|(i, j)| (i as f64 * dtheta, (j as f64 + offset) * dphi))
        .collect();
    let scores: Vec<f64> = grid.par_iter().map(|&(t, p)| local_success(hyp, t, p)).collect();

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let starts: Vec<usize> = order.into_iter().take(search.refine_starts.max(1)).collect();

    let refined: Vec<(f64, f64, f64, usize)> = starts
        .par_iter()
        .map(|&i| {
            let (mut t, mut p) = grid[i];
            let mut best = scores[i];
            let (mut st, mut sp) = (dtheta, dphi);
            let mut evals = 0usize;
            for _ in 0..search.refine_rounds {
                let mut moved = false;
                for (a, b) in [(st, 0.0), (-st, 0.0), (0.0, sp), (0.0, -sp)] {
                    let (nt, np) = ((t + a).clamp(0.0, pi), p + b);
                    let s = local_success(hyp, nt, np);
                    evals += 1;
                    if s > best {
                        best = s;
                        t = nt;
                        p = np;
                        moved = true;
                    }
                }
                if !moved {
                    st *= 0.5;
                    sp *= 0.5;
                    if st < 1e-12 && sp < 1e-12 {
                        break;
                    }
                }
            }
            (best, t, p, evals)
        })
        .collect();

    let mut evaluations = grid.len();
    let mut winner = (f64::NEG_INFINITY, 0.0, 0.0);
    for &(s, t, p, e) in &refined {
        evaluations += e;
        if s > winner.0 {
            winner = (s, t, p);
        }
    }
    let (success_probability, theta, phi) = winner;
    Ok(LocalBaselineResult {
        success_probability,
        theta,
        phi: phi.rem_euclid(2.0 * pi),
        measurement: measurement_vector(theta, phi),
        evaluations,
        class: LOCAL_CLASS,
    })
}

/// Local baseline for `N` copies of a qubit ensemble.
pub fn local_nonadaptive_baseline(
    ensemble: &Ensemble,
    copies: usize,
    search: &LocalSearch,
) -> Result<LocalBaselineResult> {
    if ensemble.dim() != 2 {
        return Err(Error::UnsupportedDimension(ensemble.dim()));
    }
    local_baseline_product(&ProductHypotheses::copies(ensemble, copies)?, search)
}

/// Side-by-side protocol, joint-oracle and local-baseline results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub p_protocol: f64,
    pub p_joint_oracle: Option<f64>,
    pub p_local_baseline: Option<f64>,
    /// `p_protocol - p_local_baseline`.
    pub local_gap: Option<f64>,
    pub gram_error: f64,
    pub decoupling_max: Option<f64>,
    /// Protocol certificate first, then the oracle's when present.
    pub certificate_residuals: Vec<f64>,
}

/// Which references to compute alongside the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BaselineSelection {
    pub joint_oracle: bool,
    pub local: Option<LocalSearch>,
}

/// Runs the protocol with a minimum-error final measurement and the
/// selected references.
pub fn compare_protocol_vs_oracle(
    hypotheses: &Hypotheses,
    mode: Mode,
    baselines: BaselineSelection,
    tol: &ToleranceConfig,
) -> Result<ComparisonReport> {
    let outcome = run_protocol(hypotheses, mode, MeasurementKind::MinError, tol)?;
    let p_protocol = outcome.measurement.success_probability;
    let mut certificate_residuals: Vec<f64> = outcome.measurement.certificate_residual.into_iter().collect();
    let p_joint_oracle = if baselines.joint_oracle {
        let r = joint_oracle_hypotheses(hypotheses, tol)?;
        certificate_residuals.extend(r.certificate_residual);
        Some(r.success_probability)
    } else {
        None
    };
    let p_local_baseline = match (baselines.local, hypotheses) {
        (Some(search), Hypotheses::Product(h)) => Some(local_baseline_product(h, &search)?.success_probability),
        (Some(_), Hypotheses::Mps(_)) => {
            return Err(Error::InvalidArgument(
                "the local baseline needs product hypotheses".into(),
            ))
        }
        (None, _) => None,
    };
    Ok(ComparisonReport {
        p_protocol,
        p_joint_oracle,
        p_local_baseline,
        local_gap: p_local_baseline.map(|l| p_protocol - l),
        gram_error: outcome.gram_error,
        decoupling_max: outcome.decoupling_max,
        certificate_residuals,
    })
}
