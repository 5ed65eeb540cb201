//! Dense complex linear algebra shared by the protocol, solver and oracle layers.
//!
//! Everything here is a pure function of its inputs. Phase and ordering
//! conventions are fixed so that repeated calls give bit-identical output:
//!
//! - Gram-Schmidt vectors have their first component above the rank cutoff
//!   real and positive.
//! - Schmidt left vectors have their largest-magnitude component real and
//!   positive; near-degenerate singular values are ordered by comparing the
//!   left vectors lexicographically.
//! - Isometry completion draws canonical basis vectors in index order.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

const EIGEN_MAX_ITER: usize = 100_000;
const HERMITIAN_TOL: f64 = 1e-10;

/// Numerical cutoffs used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Relative residual-norm cutoff for Gram-Schmidt rank detection.
    pub rank_tol: f64,
    /// Singular values below `svd_truncation_tol * max` are discarded.
    pub svd_truncation_tol: f64,
    /// Max-norm deviation from identity accepted for step unitaries.
    pub unitarity_tol: f64,
    /// Negative-eigenvalue floor accepted by the optimality certificate.
    pub certificate_tol: f64,
    /// Iteration cap for the minimum-error solver.
    pub max_iterations: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            svd_truncation_tol: 1e-12,
            unitarity_tol: 1e-10,
            certificate_tol: 1e-7,
            max_iterations: 10_000,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rank_tol", self.rank_tol),
            ("svd_truncation_tol", self.svd_truncation_tol),
            ("unitarity_tol", self.unitarity_tol),
            ("certificate_tol", self.certificate_tol),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidTolerance(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidTolerance(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Orthonormal basis for the span of a list of input vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    /// Retained basis vectors, in the order they were produced.
    pub vectors: Vec<CVector>,
    pub rank: usize,
    /// `coefficients[i][j] = <vectors[j] | input_i>`.
    pub coefficients: Vec<CVector>,
}

impl OrthonormalBasis {
    /// Wraps vectors that are already orthonormal; each vector is its own input.
    pub fn from_orthonormal(vectors: Vec<CVector>) -> Self {
        let rank = vectors.len();
        let coefficients = (0..rank)
            .map(|i| CVector::from_fn(rank, |j, _| if i == j { ONE } else { ZERO }))
            .collect();
        Self {
            vectors,
            rank,
            coefficients,
        }
    }

    /// Ambient dimension of the basis vectors (0 for an empty basis).
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    /// Basis vectors as the columns of a `dim x rank` matrix.
    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dim(), self.rank, |i, j| self.vectors[j][i])
    }

    /// Keeps only the first `rank` vectors.
    pub fn truncated(&self, rank: usize) -> Self {
        let rank = rank.min(self.rank);
        Self {
            vectors: self.vectors[..rank].to_vec(),
            rank,
            coefficients: self
                .coefficients
                .iter()
                .map(|c| c.rows(0, rank).into_owned())
                .collect(),
        }
    }

    /// Largest deviation of the pairwise inner products from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((a.dotc(b) - target).norm());
            }
        }
        worst
    }
}

/// Rotates `v` so that its first component with magnitude above `threshold`
/// is real and positive. Returns the applied phase factor.
fn fix_phase_first(v: &mut CVector, threshold: f64) -> C64 {
    let Some(idx) = v.iter().position(|z| z.norm() > threshold) else {
        return ONE;
    };
    let z = v[idx];
    let phase = z.conj() / z.norm();
    v.iter_mut().for_each(|x| *x *= phase);
    v[idx] = C64::new(v[idx].re, 0.0);
    phase
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass.
///
/// Inputs are processed in order. A vector whose residual after projection
/// has norm below `rank_tol * max_input_norm` is dropped.
pub fn gram_schmidt(inputs: &[CVector], tol: &ToleranceConfig) -> Result<OrthonormalBasis> {
    let dim = inputs.first().ok_or(Error::EmptyInput)?.len();
    for v in inputs {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let max_norm = inputs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max_norm == 0.0 || !max_norm.is_finite() {
        return Err(Error::AllDegenerate);
    }
    let cutoff = tol.rank_tol * max_norm;

    let mut basis: Vec<CVector> = Vec::new();
    for v in inputs {
        if basis.len() == dim {
            break;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&r);
                r.axpy(-c, q, ONE);
            }
        }
        let n = r.norm();
        if n < cutoff || n == 0.0 {
            continue;
        }
        r.unscale_mut(n);
        fix_phase_first(&mut r, tol.rank_tol);
        basis.push(r);
    }
    if basis.is_empty() {
        return Err(Error::AllDegenerate);
    }

    let rank = basis.len();
    let coefficients = inputs
        .iter()
        .map(|v| CVector::from_iterator(rank, basis.iter().map(|q| q.dotc(v))))
        .collect();
    Ok(OrthonormalBasis {
        vectors: basis,
        rank,
        coefficients,
    })
}

/// Extends orthonormal columns to a full unitary on `ambient_dim` dimensions.
///
/// The first `rank` columns are the inputs; the rest come from canonical basis
/// vectors taken in index order, each accepted when its squared residual after
/// projection exceeds `1 / (4 ambient_dim)`. That threshold always leaves
/// enough candidates to fill the complement.
pub fn complete_isometry(
    columns: &OrthonormalBasis,
    ambient_dim: usize,
    tol: &ToleranceConfig,
) -> Result<CMatrix> {
    if columns.rank > ambient_dim {
        return Err(Error::DimensionMismatch {
            expected: ambient_dim,
            got: columns.rank,
        });
    }
    for v in &columns.vectors {
        if v.len() != ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: ambient_dim,
                got: v.len(),
            });
        }
    }
    let defect = columns.orthonormality_defect();
    if defect > tol.rank_tol {
        return Err(Error::NotOrthonormal(defect));
    }

    let accept = 1.0 / (4.0 * ambient_dim as f64);
    let mut cols: Vec<CVector> = columns.vectors.clone();
    for i in 0..ambient_dim {
        if cols.len() == ambient_dim {
            break;
        }
        let mut r = CVector::zeros(ambient_dim);
        r[i] = ONE;
        for _ in 0..2 {
            for q in &cols {
                let c = q.dotc(&r);
                r.axpy(-c, q, ONE);
            }
        }
        let n2 = r.norm_squared();
        if n2 > accept {
            r.unscale_mut(n2.sqrt());
            cols.push(r);
        }
    }
    debug_assert_eq!(cols.len(), ambient_dim);
    Ok(CMatrix::from_columns(&cols))
}

/// Bipartite Schmidt decomposition `state = sum_j c_j |left_j> (x) |right_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtDecomposition {
    /// Strictly positive, sorted descending.
    pub values: Vec<f64>,
    pub left: Vec<CVector>,
    pub right: Vec<CVector>,
    pub rank: usize,
    /// Sum of squared singular values dropped by the truncation cutoff.
    pub discarded_weight: f64,
}

impl SchmidtDecomposition {
    pub fn reconstruct(&self) -> CVector {
        let dl = self.left.first().map_or(0, |v| v.len());
        let dr = self.right.first().map_or(0, |v| v.len());
        let mut out = CVector::zeros(dl * dr);
        for ((c, l), r) in self.values.iter().zip(&self.left).zip(&self.right) {
            out.axpy(C64::new(*c, 0.0), &kron(l, r), ONE);
        }
        out
    }
}

pub(crate) fn svd(m: CMatrix, compute_u: bool, compute_v: bool) -> Result<SVD<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m, compute_u, compute_v, f64::EPSILON, 0).ok_or(Error::NoConvergence("SVD"))
}

/// Lexicographic comparison over (re, im) pairs.
fn lex_cmp(a: &CVector, b: &CVector) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Schmidt decomposition of `state` viewed as a `dim_left x dim_right` matrix
/// with the left index most significant.
pub fn schmidt_decompose(
    state: &CVector,
    dim_left: usize,
    dim_right: usize,
    tol: &ToleranceConfig,
) -> Result<SchmidtDecomposition> {
    if state.len() != dim_left * dim_right {
        return Err(Error::DimensionMismatch {
            expected: dim_left * dim_right,
            got: state.len(),
        });
    }
    let norm = state.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroState);
    }
    let m = CMatrix::from_fn(dim_left, dim_right, |l, r| state[l * dim_right + r]);
    let dec = svd(m, true, true)?;
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");

    let c_max = dec.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = tol.svd_truncation_tol * c_max;
    let mut triples = Vec::new();
    let mut discarded_weight = 0.0;
    for (j, &c) in dec.singular_values.iter().enumerate() {
        if c < cutoff || c <= 0.0 {
            discarded_weight += c * c;
            continue;
        }
        let mut left = u.column(j).into_owned();
        let mut right = v_t.row(j).transpose();
        let max_mag = left.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let idx = left
            .iter()
            .position(|z| z.norm() >= max_mag - 1e-12)
            .unwrap_or(0);
        let phase = left[idx].conj() / left[idx].norm();
        left.iter_mut().for_each(|z| *z *= phase);
        left[idx] = C64::new(left[idx].re, 0.0);
        let back = phase.conj();
        right.iter_mut().for_each(|z| *z *= back);
        triples.push((c, left, right));
    }

    triples.sort_by(|a, b| b.0.total_cmp(&a.0));
    // order near-degenerate runs by their left vectors
    let tie = 1e-12 * c_max;
    let mut start = 0;
    while start < triples.len() {
        let mut end = start + 1;
        while end < triples.len() && (triples[start].0 - triples[end].0).abs() <= tie {
            end += 1;
        }
        if end - start > 1 {
            triples[start..end].sort_by(|a, b| lex_cmp(&a.1, &b.1).reverse());
        }
        start = end;
    }

    let rank = triples.len();
    let mut values = Vec::with_capacity(rank);
    let mut left = Vec::with_capacity(rank);
    let mut right = Vec::with_capacity(rank);
    for (c, l, r) in triples {
        values.push(c);
        left.push(l);
        right.push(r);
    }
    Ok(SchmidtDecomposition {
        values,
        left,
        right,
        rank,
        discarded_weight,
    })
}

/// Trace over every subsystem not listed in `keep`. Subsystem 0 is the most
/// significant index; kept subsystems stay in their original order.
pub fn partial_trace(density: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if density.nrows() != total || density.ncols() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: density.nrows(),
        });
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&i| i >= dims.len()) {
        return Err(Error::InvalidArgument(format!(
            "keep set {keep:?} is not a subset of 0..{}",
            dims.len()
        )));
    }

    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let offsets = |subsystems: &[usize]| -> Vec<usize> {
        let mut offs = vec![0usize];
        for &s in subsystems {
            let mut next = Vec::with_capacity(offs.len() * dims[s]);
            for &o in &offs {
                for digit in 0..dims[s] {
                    next.push(o + digit * strides[s]);
                }
            }
            offs = next;
        }
        offs
    };
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep_sorted.contains(i)).collect();
    let kept_off = offsets(&keep_sorted);
    let traced_off = offsets(&traced);

    let n = kept_off.len();
    Ok(CMatrix::from_fn(n, n, |a, b| {
        traced_off
            .iter()
            .map(|&t| density[(kept_off[a] + t, kept_off[b] + t)])
            .sum()
    }))
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// Rebuilds `sum_i f(lambda_i) |v_i><v_i|`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (i, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(i);
            out += (v * v.adjoint()).scale(w);
        }
        out
    }
}

/// Largest entry of `|m - m^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let defect = hermiticity_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::NoConvergence("Hermitian eigensolver"))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(HermitianEigen { values, vectors })
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(hermitian_eigen(m)?.values.iter().map(|v| v.abs()).sum())
}

/// Tensor product with `a` as the more significant factor.
pub fn kron(a: &CVector, b: &CVector) -> CVector {
    let nb = b.len();
    CVector::from_fn(a.len() * nb, |i, _| a[i / nb] * b[i % nb])
}

/// `|v><v|`
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `max |U^dagger U - I|`
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// Canonical basis vector.
pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = ONE;
    v
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Applies `op` to the joint space of `targets` (first target most
/// significant) inside a dense multipartite state.
pub fn apply_local(state: &CVector, dims: &[usize], targets: &[usize], op: &CMatrix) -> Result<CVector> {
    let total: usize = dims.iter().product();
    if state.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: state.len(),
        });
    }
    let local: usize = targets.iter().map(|&t| dims[t]).product();
    if op.nrows() != local || op.ncols() != local {
        return Err(Error::DimensionMismatch {
            expected: local,
            got: op.nrows(),
        });
    }
    let st = strides(dims);
    // offset of each local basis state
    let mut local_off = vec![0usize];
    for &t in targets {
        let mut next = Vec::with_capacity(local_off.len() * dims[t]);
        for &o in &local_off {
            for digit in 0..dims[t] {
                next.push(o + digit * st[t]);
            }
        }
        local_off = next;
    }
    let others: Vec<usize> = (0..dims.len()).filter(|i| !targets.contains(i)).collect();
    let mut outer_off = vec![0usize];
    for &s in &others {
        let mut next = Vec::with_capacity(outer_off.len() * dims[s]);
        for &o in &outer_off {
            for digit in 0..dims[s] {
                next.push(o + digit * st[s]);
            }
        }
        outer_off = next;
    }

    let mut out = CVector::zeros(total);
    let mut buf = CVector::zeros(local);
    for &base in &outer_off {
        for (i, &o) in local_off.iter().enumerate() {
            buf[i] = state[base + o];
        }
        let res = op * &buf;
        for (i, &o) in local_off.iter().enumerate() {
            out[base + o] = res[i];
        }
    }
    Ok(out)
}

/// Weight of `state` on basis states whose digit at `site` is nonzero.
pub fn nonzero_digit_weight(state: &CVector, dims: &[usize], site: usize) -> f64 {
    let st = strides(dims);
    state
        .iter()
        .enumerate()
        .filter(|(i, _)| !(i / st[site]).is_multiple_of(dims[site]))
        .map(|(_, z)| z.norm_sqr())
        .sum()
}
