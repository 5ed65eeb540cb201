//! Seeded generators for random states, ensembles and MPS, used by property
//! tests and the acceptance suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{CMatrix, CVector, C64};
use crate::states::{Ensemble, Mps, MpsEnsemble, ProductHypotheses, PureState, SiteTensor};

fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state of dimension `dim`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> PureState {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian_c64(rng));
        if let Ok(s) = PureState::normalized(v) {
            return s;
        }
    }
}

/// Haar-random unitary via QR of a complex Gaussian matrix with the
/// phases of `R`'s diagonal removed.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| gaussian_c64(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let col = q.column(j) * phase;
        q.set_column(j, &col);
    }
    q
}

/// Priors bounded away from zero, summing to one.
pub fn random_priors<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    let mut priors: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    // fold rounding residue into the last prior
    let head: f64 = priors[..k - 1].iter().sum();
    priors[k - 1] = 1.0 - head;
    priors
}

pub fn random_ensemble<R: Rng + ?Sized>(rng: &mut R, k: usize, dim: usize) -> Result<Ensemble> {
    let states = (0..k).map(|_| random_state(rng, dim)).collect();
    let priors = random_priors(rng, k);
    Ensemble::new(states, priors)
}

/// Independent random site states for every hypothesis and site.
pub fn random_product_hypotheses<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    site_dims: &[usize],
) -> Result<ProductHypotheses> {
    let per_hyp: Vec<Vec<PureState>> = (0..k)
        .map(|_| site_dims.iter().map(|&d| random_state(rng, d)).collect())
        .collect();
    ProductHypotheses::from_hypotheses(&per_hyp, random_priors(rng, k))
}

/// Random normalized MPS with interior bonds capped at `bond`.
pub fn random_mps<R: Rng + ?Sized>(rng: &mut R, phys_dims: &[usize], bond: usize) -> Result<Mps> {
    let n = phys_dims.len();
    // bond at cut i (after site i) limited by the dimensions on either side
    let mut bonds = vec![1usize; n + 1];
    for cut in 1..n {
        let left: usize = phys_dims[..cut].iter().product();
        let right: usize = phys_dims[cut..].iter().product();
        bonds[cut] = bond.min(left).min(right).max(1);
    }
    let tensors = (0..n)
        .map(|i| {
            let (l, d, r) = (bonds[i], phys_dims[i], bonds[i + 1]);
            let data = (0..l * d * r).map(|_| gaussian_c64(rng)).collect();
            SiteTensor::new(l, d, r, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Mps::new_normalized(tensors)
}

pub fn random_mps_ensemble<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    phys_dims: &[usize],
    bond: usize,
) -> Result<MpsEnsemble> {
    let members = (0..k)
        .map(|_| random_mps(rng, phys_dims, bond))
        .collect::<Result<Vec<_>>>()?;
    MpsEnsemble::new(members, random_priors(rng, k))
}
