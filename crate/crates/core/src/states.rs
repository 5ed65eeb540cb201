//! Hypothesis data model: pure-state ensembles, matrix product states and
//! their purification with a reference site.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, kron, CMatrix, CVector, ToleranceConfig, C64, ONE, ZERO};

/// Priors below this are rejected rather than dropped.
pub const MIN_PRIOR: f64 = 1e-12;
/// Largest dense statevector `mps_to_statevector` will build.
pub const STATEVECTOR_LIMIT: usize = 1 << 20;

const STATE_NORM_TOL: f64 = 1e-12;
const MPS_NORM_TOL: f64 = 1e-10;

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Requires `|amplitudes| = 1` within 1e-12.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() {
            return Err(Error::ZeroState);
        }
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm.
    pub fn normalized(mut amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() || norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        amplitudes.unscale_mut(norm);
        Ok(Self { amplitudes })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalized(CVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        Self {
            amplitudes: linalg::basis_vector(dim, index),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `<self|other>`
    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn density(&self) -> CMatrix {
        linalg::outer(&self.amplitudes)
    }
}

pub(crate) fn validate_priors(priors: &[f64], count: usize) -> Result<()> {
    if priors.len() != count {
        return Err(Error::InvalidPriors(format!(
            "expected {count} priors, got {}",
            priors.len()
        )));
    }
    if let Some((k, p)) = priors
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < MIN_PRIOR)
    {
        return Err(Error::InvalidPriors(format!(
            "prior {k} is {p}; every prior must be at least {MIN_PRIOR}"
        )));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPriors(format!("priors sum to {sum}, not 1")));
    }
    Ok(())
}

fn uniform_priors(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Pairwise inner products `G[j][k] = <psi_j|psi_k>`.
pub trait GramMatrix {
    fn gram_matrix(&self) -> CMatrix;
}

/// K pure states of equal dimension with strictly positive priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    states: Vec<PureState>,
    priors: Vec<f64>,
}

impl Ensemble {
    pub fn new(states: Vec<PureState>, priors: Vec<f64>) -> Result<Self> {
        let dim = states.first().ok_or(Error::EmptyInput)?.dim();
        if let Some(s) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.dim(),
            });
        }
        validate_priors(&priors, states.len())?;
        Ok(Self { states, priors })
    }

    pub fn uniform(states: Vec<PureState>) -> Result<Self> {
        let k = states.len().max(1);
        Self::new(states, uniform_priors(k))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn vectors(&self) -> Vec<CVector> {
        self.states.iter().map(|s| s.amplitudes.clone()).collect()
    }

    pub fn densities(&self) -> Vec<CMatrix> {
        self.states.iter().map(PureState::density).collect()
    }

    /// Conjugates every state by `u`.
    pub fn transformed(&self, u: &CMatrix) -> Result<Self> {
        let states = self
            .states
            .iter()
            .map(|s| PureState::normalized(u * &s.amplitudes))
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, self.priors.clone())
    }

    /// Dense `copies`-fold tensor power of every hypothesis.
    pub fn tensor_power(&self, copies: usize, limit: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidArgument("copies must be at least 1".into()));
        }
        let dim = checked_power(self.dim(), copies, limit)?;
        let states = self
            .states
            .iter()
            .map(|s| {
                let mut v = s.amplitudes.clone();
                for _ in 1..copies {
                    v = kron(&v, &s.amplitudes);
                }
                debug_assert_eq!(v.len(), dim);
                PureState::normalized(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, self.priors.clone())
    }
}

impl GramMatrix for Ensemble {
    fn gram_matrix(&self) -> CMatrix {
        let k = self.len();
        CMatrix::from_fn(k, k, |i, j| self.states[i].overlap(&self.states[j]))
    }
}

pub(crate) fn checked_power(base: usize, exp: usize, limit: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..exp {
        dim = dim.saturating_mul(base);
        if dim > limit {
            return Err(Error::TooLarge { dim, limit });
        }
    }
    Ok(dim)
}

/// Product of `dims`, refused above `limit`.
pub(crate) fn checked_power_product(dims: &[usize], limit: usize) -> Result<usize> {
    let mut dim = 1usize;
    for d in dims {
        dim = dim.saturating_mul(*d);
        if dim > limit {
            return Err(Error::TooLarge { dim, limit });
        }
    }
    Ok(dim)
}

/// Site tensor indexed `(left bond, physical, right bond)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    pub left: usize,
    pub phys: usize,
    pub right: usize,
    pub data: Vec<C64>,
}

impl SiteTensor {
    pub fn new(left: usize, phys: usize, right: usize, data: Vec<C64>) -> Result<Self> {
        if left == 0 || phys == 0 || right == 0 {
            return Err(Error::InvalidMps("tensor dimensions must be positive".into()));
        }
        if data.len() != left * phys * right {
            return Err(Error::InvalidMps(format!(
                "tensor of shape ({left}, {phys}, {right}) needs {} entries, got {}",
                left * phys * right,
                data.len()
            )));
        }
        Ok(Self {
            left,
            phys,
            right,
            data,
        })
    }

    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Self {
            left,
            phys,
            right,
            data: vec![ZERO; left * phys * right],
        }
    }

    #[inline]
    fn idx(&self, l: usize, p: usize, r: usize) -> usize {
        (l * self.phys + p) * self.right + r
    }

    #[inline]
    pub fn get(&self, l: usize, p: usize, r: usize) -> C64 {
        self.data[self.idx(l, p, r)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, p: usize, r: usize, v: C64) {
        let i = self.idx(l, p, r);
        self.data[i] = v;
    }

    /// `(left) x (phys * right)` matrix view.
    pub(crate) fn as_right_matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(self.left, self.phys * self.right, &self.data)
    }

    /// `(left * phys) x (right)` matrix view.
    pub(crate) fn as_left_matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(self.left * self.phys, self.right, &self.data)
    }

    pub(crate) fn from_right_matrix(m: &CMatrix, phys: usize) -> Self {
        let left = m.nrows();
        let right = m.ncols() / phys;
        let data = (0..left)
            .flat_map(|l| (0..m.ncols()).map(move |c| (l, c)))
            .map(|(l, c)| m[(l, c)])
            .collect();
        Self {
            left,
            phys,
            right,
            data,
        }
    }

    pub(crate) fn from_left_matrix(m: &CMatrix, phys: usize) -> Self {
        let left = m.nrows() / phys;
        let right = m.ncols();
        let data = (0..m.nrows())
            .flat_map(|r| (0..right).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();
        Self {
            left,
            phys,
            right,
            data,
        }
    }
}

/// Open-boundary matrix product state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    tensors: Vec<SiteTensor>,
}

impl Mps {
    /// Validates shapes and requires unit norm within 1e-10.
    pub fn new(tensors: Vec<SiteTensor>) -> Result<Self> {
        let mps = Self::from_tensors_unchecked(tensors)?;
        let norm = mps.norm();
        if (norm - 1.0).abs() > MPS_NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(mps)
    }

    /// Validates shapes and rescales the first tensor to unit norm.
    pub fn new_normalized(tensors: Vec<SiteTensor>) -> Result<Self> {
        let mut mps = Self::from_tensors_unchecked(tensors)?;
        let norm = mps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        mps.tensors[0].data.iter_mut().for_each(|z| *z /= norm);
        Ok(mps)
    }

    fn from_tensors_unchecked(tensors: Vec<SiteTensor>) -> Result<Self> {
        let (first, last) = match (tensors.first(), tensors.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidMps("no sites".into())),
        };
        if first.left != 1 || last.right != 1 {
            return Err(Error::InvalidMps("boundary bond dimensions must be 1".into()));
        }
        for (i, pair) in tensors.windows(2).enumerate() {
            if pair[0].right != pair[1].left {
                return Err(Error::InvalidMps(format!(
                    "bond {i}: right dim {} does not match next left dim {}",
                    pair[0].right, pair[1].left
                )));
            }
        }
        Ok(Self { tensors })
    }

    /// Bond dimension 1 product of the given site states.
    pub fn product(sites: &[PureState]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidMps("no sites".into()));
        }
        let tensors = sites
            .iter()
            .map(|s| SiteTensor::new(1, s.dim(), 1, s.amplitudes.iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tensors)
    }

    /// Exact left-to-right SVD factorisation of a dense vector.
    pub fn from_statevector(state: &CVector, phys_dims: &[usize], tol: &ToleranceConfig) -> Result<Self> {
        let total: usize = phys_dims.iter().product();
        if phys_dims.is_empty() || phys_dims.contains(&0) {
            return Err(Error::InvalidMps("physical dimensions must be positive".into()));
        }
        if state.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: state.len(),
            });
        }
        let mut tensors = Vec::with_capacity(phys_dims.len());
        // remainder: (bond) x (rest) in row-major
        let mut bond = 1usize;
        let mut rest = CMatrix::from_row_slice(1, total, state.as_slice());
        for (i, &d) in phys_dims.iter().enumerate() {
            let rest_cols = rest.ncols() / d;
            if i + 1 == phys_dims.len() {
                let m = CMatrix::from_fn(bond * d, 1, |r, _| rest[(r / d, (r % d) * rest_cols)]);
                tensors.push(SiteTensor::from_left_matrix(&m, d));
                break;
            }
            let m = CMatrix::from_fn(bond * d, rest_cols, |r, c| rest[(r / d, (r % d) * rest_cols + c)]);
            let dec = linalg::svd(m, true, true)?;
            let u = dec.u.expect("u");
            let v_t = dec.v_t.expect("v_t");
            let s = &dec.singular_values;
            let s_max = s.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..s.len())
                .filter(|&j| s[j] > tol.svd_truncation_tol * s_max)
                .collect();
            let keep = if keep.is_empty() { vec![0] } else { keep };
            let left = CMatrix::from_columns(&keep.iter().map(|&j| u.column(j).into_owned()).collect::<Vec<_>>());
            tensors.push(SiteTensor::from_left_matrix(&left, d));
            rest = CMatrix::from_fn(keep.len(), rest_cols, |r, c| {
                v_t[(keep[r], c)] * Complex::new(s[keep[r]], 0.0)
            });
            bond = keep.len();
        }
        Self::new_normalized(tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[SiteTensor] {
        &self.tensors
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.phys).collect()
    }

    /// Bond dimension at each of the `N - 1` interior cuts.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.tensors.len() - 1]
            .iter()
            .map(|t| t.right)
            .collect()
    }

    /// Largest interior bond dimension (1 for a single site).
    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `<self|other>` by left-to-right transfer contraction.
    pub fn overlap(&self, other: &Mps) -> Result<C64> {
        if self.physical_dims() != other.physical_dims() {
            return Err(Error::InvalidMps("site structures differ".into()));
        }
        // env[a][b]: a = bra bond, b = ket bond
        let mut env = CMatrix::from_element(1, 1, ONE);
        for (bra, ket) in self.tensors.iter().zip(&other.tensors) {
            let mut next = CMatrix::zeros(bra.right, ket.right);
            for a in 0..bra.left {
                for b in 0..ket.left {
                    let e = env[(a, b)];
                    if e == ZERO {
                        continue;
                    }
                    for p in 0..bra.phys {
                        for ar in 0..bra.right {
                            let x = bra.get(a, p, ar).conj() * e;
                            if x == ZERO {
                                continue;
                            }
                            for br in 0..ket.right {
                                next[(ar, br)] += x * ket.get(b, p, br);
                            }
                        }
                    }
                }
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    pub fn norm(&self) -> f64 {
        self.overlap(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }
}

/// Dense contraction, site 0 most significant.
pub fn mps_to_statevector(mps: &Mps) -> Result<CVector> {
    let dims = mps.physical_dims();
    let mut total = 1usize;
    for d in &dims {
        total = total.saturating_mul(*d);
        if total > STATEVECTOR_LIMIT {
            return Err(Error::TooLarge {
                dim: total,
                limit: STATEVECTOR_LIMIT,
            });
        }
    }
    // acc: (prefix index) x (bond)
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for t in &mps.tensors {
        let mut next = CMatrix::zeros(acc.nrows() * t.phys, t.right);
        for x in 0..acc.nrows() {
            for l in 0..t.left {
                let a = acc[(x, l)];
                if a == ZERO {
                    continue;
                }
                for p in 0..t.phys {
                    for r in 0..t.right {
                        next[(x * t.phys + p, r)] += a * t.get(l, p, r);
                    }
                }
            }
        }
        acc = next;
    }
    Ok(acc.column(0).into_owned())
}

/// Builds the N00N state `(|0...0> + |1...1>)/sqrt(2)` with bond dimension 2.
pub fn noon_mps(n: usize) -> Result<Mps> {
    if n == 0 {
        return Err(Error::InvalidArgument("N00N state needs at least one site".into()));
    }
    let h = C64::new(0.5f64.sqrt(), 0.0);
    if n == 1 {
        return Mps::new(vec![SiteTensor::new(1, 2, 1, vec![h, h])?]);
    }
    let mut tensors = Vec::with_capacity(n);
    let mut first = SiteTensor::zeros(1, 2, 2);
    first.set(0, 0, 0, h);
    first.set(0, 1, 1, h);
    tensors.push(first);
    for _ in 1..n - 1 {
        let mut mid = SiteTensor::zeros(2, 2, 2);
        mid.set(0, 0, 0, ONE);
        mid.set(1, 1, 1, ONE);
        tensors.push(mid);
    }
    let mut last = SiteTensor::zeros(2, 2, 1);
    last.set(0, 0, 0, ONE);
    last.set(1, 1, 0, ONE);
    tensors.push(last);
    Mps::new(tensors)
}

/// Lines up `copies` copies of `mps` as one chain; copy boundaries have bond 1.
pub fn mps_tile(mps: &Mps, copies: usize) -> Result<Mps> {
    if copies == 0 {
        return Err(Error::InvalidArgument("copies must be at least 1".into()));
    }
    let tensors = (0..copies).flat_map(|_| mps.tensors.iter().cloned()).collect();
    Mps::new(tensors)
}

/// K matrix product states over identical site structures.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsEnsemble {
    members: Vec<Mps>,
    priors: Vec<f64>,
}

impl MpsEnsemble {
    pub fn new(members: Vec<Mps>, priors: Vec<f64>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyInput)?;
        let dims = first.physical_dims();
        for m in &members[1..] {
            if m.len() != first.len() {
                return Err(Error::SiteCountMismatch(first.len(), m.len()));
            }
            if m.physical_dims() != dims {
                return Err(Error::InvalidMps("members have different physical dimensions".into()));
            }
        }
        validate_priors(&priors, members.len())?;
        Ok(Self { members, priors })
    }

    pub fn uniform(members: Vec<Mps>) -> Result<Self> {
        let k = members.len().max(1);
        Self::new(members, uniform_priors(k))
    }

    pub fn members(&self) -> &[Mps] {
        &self.members
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn site_count(&self) -> usize {
        self.members[0].len()
    }

    pub fn physical_dims(&self) -> Vec<usize> {
        self.members[0].physical_dims()
    }

    /// Largest bond dimension over all members.
    pub fn max_bond_dim(&self) -> usize {
        self.members.iter().map(Mps::max_bond_dim).max().unwrap_or(1)
    }

    /// Tiles every member `copies` times.
    pub fn tiled(&self, copies: usize) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|m| mps_tile(m, copies))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, self.priors.clone())
    }

    /// Dense ensemble over the full chain.
    pub fn to_dense(&self) -> Result<Ensemble> {
        let states = self
            .members
            .iter()
            .map(|m| mps_to_statevector(m).and_then(PureState::normalized))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(states, self.priors.clone())
    }
}

impl GramMatrix for MpsEnsemble {
    fn gram_matrix(&self) -> CMatrix {
        let k = self.len();
        CMatrix::from_fn(k, k, |i, j| {
            self.members[i]
                .overlap(&self.members[j])
                .expect("members share site structure")
        })
    }
}

/// `product_ensemble`: hypothesis k is the product of `site_states[k][n]`.
pub fn product_ensemble(site_states: &[Vec<PureState>], priors: Vec<f64>) -> Result<MpsEnsemble> {
    let hyp = ProductHypotheses::from_hypotheses(site_states, priors)?;
    hyp.to_mps_ensemble()
}

/// Product-state hypotheses stored site by site: `sites[n][k]` is the state
/// of site `n` under hypothesis `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductHypotheses {
    sites: Vec<Vec<PureState>>,
    priors: Vec<f64>,
}

impl ProductHypotheses {
    /// `copies` identical copies of each hypothesis in `ensemble`.
    pub fn copies(ensemble: &Ensemble, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidArgument("copies must be at least 1".into()));
        }
        Ok(Self {
            sites: vec![ensemble.states.clone(); copies],
            priors: ensemble.priors.clone(),
        })
    }

    /// `per_hypothesis[k][n]` is the state of site `n` under hypothesis `k`.
    pub fn from_hypotheses(per_hypothesis: &[Vec<PureState>], priors: Vec<f64>) -> Result<Self> {
        let first = per_hypothesis.first().ok_or(Error::EmptyInput)?;
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidArgument("hypotheses need at least one site".into()));
        }
        for h in per_hypothesis {
            if h.len() != n {
                return Err(Error::SiteCountMismatch(n, h.len()));
            }
            for (a, b) in h.iter().zip(first) {
                if a.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: b.dim(),
                        got: a.dim(),
                    });
                }
            }
        }
        validate_priors(&priors, per_hypothesis.len())?;
        let sites = (0..n)
            .map(|site| per_hypothesis.iter().map(|h| h[site].clone()).collect())
            .collect();
        Ok(Self { sites, priors })
    }

    /// Repeats the whole site block `copies` times.
    pub fn repeated(&self, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidArgument("copies must be at least 1".into()));
        }
        let sites = (0..copies).flat_map(|_| self.sites.iter().cloned()).collect();
        Ok(Self {
            sites,
            priors: self.priors.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s[0].dim()).collect()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// States of every hypothesis at `site`.
    pub fn site(&self, site: usize) -> &[PureState] {
        &self.sites[site]
    }

    /// Closed-form Gram matrix: the entrywise product of per-site Grams.
    pub fn product_gram(&self) -> CMatrix {
        let k = self.len();
        CMatrix::from_fn(k, k, |i, j| {
            self.sites
                .iter()
                .map(|s| s[i].overlap(&s[j]))
                .fold(ONE, |acc, z| acc * z)
        })
    }

    pub fn hypothesis(&self, k: usize) -> Vec<PureState> {
        self.sites.iter().map(|s| s[k].clone()).collect()
    }

    pub fn to_mps_ensemble(&self) -> Result<MpsEnsemble> {
        let members = (0..self.len())
            .map(|k| Mps::product(&self.hypothesis(k)))
            .collect::<Result<Vec<_>>>()?;
        MpsEnsemble::new(members, self.priors.clone())
    }

    /// Dense product vectors, guarded by `limit`.
    pub fn to_dense(&self, limit: usize) -> Result<Ensemble> {
        let mut total = 1usize;
        for d in self.site_dims() {
            total = total.saturating_mul(d);
            if total > limit {
                return Err(Error::TooLarge { dim: total, limit });
            }
        }
        let states = (0..self.len())
            .map(|k| {
                let v = self.sites.iter().skip(1).fold(
                    self.sites[0][k].amplitudes.clone(),
                    |acc, s| kron(&acc, &s[k].amplitudes),
                );
                PureState::normalized(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(states, self.priors.clone())
    }
}

/// Chain over the N system sites followed by a reference site R of
/// dimension K, encoding `sum_k sqrt(p_k) |psi_k> |k>_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifiedMps {
    pub mps: Mps,
    pub weights: Vec<f64>,
}

impl PurifiedMps {
    pub fn reference_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn system_sites(&self) -> usize {
        self.mps.len() - 1
    }
}

/// Direct-sum purification: interior bonds are block diagonal over members,
/// the bond into R has dimension K, and R carries the weights `sqrt(p_k)`.
pub fn purify_ensemble(ensemble: &MpsEnsemble) -> Result<PurifiedMps> {
    let k_count = ensemble.len();
    let n = ensemble.site_count();
    let members = ensemble.members();
    let mut tensors = Vec::with_capacity(n + 1);
    for site in 0..n {
        let lefts: Vec<usize> = members.iter().map(|m| m.tensors[site].left).collect();
        let rights: Vec<usize> = members.iter().map(|m| m.tensors[site].right).collect();
        let phys = members[0].tensors[site].phys;
        let left_dim = if site == 0 { 1 } else { lefts.iter().sum() };
        let right_dim: usize = rights.iter().sum();
        let mut t = SiteTensor::zeros(left_dim, phys, right_dim);
        let (mut loff, mut roff) = (0usize, 0usize);
        for (k, m) in members.iter().enumerate() {
            let src = &m.tensors[site];
            for l in 0..src.left {
                for p in 0..phys {
                    for r in 0..src.right {
                        t.set(loff + l, p, roff + r, src.get(l, p, r));
                    }
                }
            }
            if site > 0 {
                loff += lefts[k];
            }
            roff += rights[k];
        }
        tensors.push(t);
    }
    let weights: Vec<f64> = ensemble.priors().iter().map(|p| p.sqrt()).collect();
    let mut reference = SiteTensor::zeros(k_count, k_count, 1);
    for (k, w) in weights.iter().enumerate() {
        reference.set(k, k, 0, C64::new(*w, 0.0));
    }
    tensors.push(reference);
    Ok(PurifiedMps {
        mps: Mps::new(tensors)?,
        weights,
    })
}
