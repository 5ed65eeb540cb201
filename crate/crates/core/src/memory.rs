//! Register accounting for the Schur-basis decomposition of `N` copies of a
//! `d`-level system: Young diagram counts, the largest `SU(d)` irrep and
//! the resulting qubit budget. The permutation register costs nothing.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of partitions of `n` into at most `d` parts.
pub fn young_count(n: usize, d: usize) -> BigUint {
    young_count_table(n, d).pop().expect("table has n + 1 entries")
}

/// `young_count(m, d)` for every `m` in `0..=n_max`.
pub fn young_count_table(n_max: usize, d: usize) -> Vec<BigUint> {
    if d == 0 {
        return (0..=n_max)
            .map(|m| if m == 0 { BigUint::one() } else { BigUint::zero() })
            .collect();
    }
    // parts of size at most k, conjugate to at most k rows
    let mut row = vec![BigUint::zero(); n_max + 1];
    row[0] = BigUint::one();
    for k in 1..=d {
        for m in k..=n_max {
            let add = row[m - k].clone();
            row[m] += add;
        }
    }
    row
}

/// `binom(n, d) / d!`, the smooth approximation to the diagram count.
pub fn young_count_formula(n: usize, d: usize) -> f64 {
    if n < d {
        return 0.0;
    }
    let mut value = 1.0f64;
    for i in 0..d {
        value *= (n - i) as f64 / (i + 1) as f64;
        value /= (i + 1) as f64;
    }
    value
}

/// Every partition of `n` into at most `max_parts` parts, non-increasing
/// rows, in reverse lexicographic order.
pub fn partitions(n: usize, max_parts: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, cap: usize, parts_left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        if parts_left == 0 {
            return;
        }
        for p in (1..=rest.min(cap)).rev() {
            cur.push(p);
            rec(rest - p, p, parts_left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, max_parts, &mut Vec::new(), &mut out);
    out
}

/// Weyl dimension `prod_{i<j} (l_i - l_j + j - i) / (j - i)` of the `SU(d)`
/// irrep with row lengths `lambda` (padded with zeros to `d` rows).
pub fn weyl_dimension(lambda: &[usize], d: usize) -> BigUint {
    let row = |i: usize| lambda.get(i).copied().unwrap_or(0);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..d {
        for j in i + 1..d {
            num *= BigUint::from(row(i) - row(j) + j - i);
            den *= BigUint::from(j - i);
        }
    }
    num / den
}

fn log_weyl(lambda: &[usize]) -> f64 {
    let d = lambda.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            s += ((lambda[i] - lambda[j] + j - i) as f64).ln();
        }
    }
    s
}

/// `(n + d - 1)^{d(d-1)/2}`.
pub fn max_irrep_dim_bound(n: usize, d: usize) -> BigUint {
    let exp = (d * d.saturating_sub(1) / 2) as u32;
    BigUint::from(n + d.saturating_sub(1)).pow(exp)
}

/// Largest irrep and a partition attaining it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrrepMax {
    pub dim: BigUint,
    pub partition: Vec<usize>,
}

fn is_partition(l: &[usize]) -> bool {
    l.windows(2).all(|w| w[0] >= w[1])
}

/// Moves of one box (`pairs = false`) or two boxes (`pairs = true`).
fn neighbours(l: &[usize], pairs: bool) -> Vec<Vec<usize>> {
    let d = l.len();
    let mut out = Vec::new();
    let single = |l: &[usize], from: usize, to: usize| -> Option<Vec<usize>> {
        if from == to || l[from] == 0 {
            return None;
        }
        let mut m = l.to_vec();
        m[from] -= 1;
        m[to] += 1;
        is_partition(&m).then_some(m)
    };
    for from in 0..d {
        for to in 0..d {
            if let Some(m) = single(l, from, to) {
                if pairs {
                    for f2 in 0..d {
                        for t2 in 0..d {
                            if let Some(m2) = single(&m, f2, t2) {
                                out.push(m2);
                            }
                        }
                    }
                } else {
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Hill-climbs `lambda` in place on the log dimension, then settles
/// near-ties exactly.
fn climb(lambda: &mut Vec<usize>) {
    let d = lambda.len();
    if d <= 1 {
        return;
    }
    let mut best = log_weyl(lambda);
    loop {
        let mut improved = false;
        for pairs in [false, true] {
            let mut pick: Option<(f64, Vec<usize>)> = None;
            for m in neighbours(lambda, pairs) {
                let v = log_weyl(&m);
                if v > best + 1e-12 && pick.as_ref().is_none_or(|(pv, _)| v > *pv) {
                    pick = Some((v, m));
                }
            }
            if let Some((v, m)) = pick {
                best = v;
                *lambda = m;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    // exact resolution among candidates indistinguishable in floating point
    let mut exact = weyl_dimension(lambda, d);
    let mut candidates: Vec<Vec<usize>> = neighbours(lambda, false);
    candidates.extend(neighbours(lambda, true));
    candidates.sort();
    candidates.dedup();
    for m in candidates {
        if (log_weyl(&m) - best).abs() <= 1e-9 * best.abs().max(1.0) {
            let e = weyl_dimension(&m, d);
            if e > exact || (e == exact && m > *lambda) {
                exact = e;
                *lambda = m;
            }
        }
    }
}

/// Largest `SU(d)` irrep dimension over partitions of `n` with at most `d`
/// rows.
pub fn max_irrep_dim(n: usize, d: usize) -> IrrepMax {
    if d == 0 {
        return IrrepMax {
            dim: BigUint::one(),
            partition: Vec::new(),
        };
    }
    // balanced start close to the continuous optimum
    let mut lambda = vec![0usize; d];
    let mut rest = n;
    for i in 0..d {
        let share = rest.div_ceil(d - i);
        lambda[i] = share;
        rest -= share;
    }
    climb(&mut lambda);
    finish_max(lambda, d)
}

fn finish_max(lambda: Vec<usize>, d: usize) -> IrrepMax {
    let dim = weyl_dimension(&lambda, d);
    let partition = lambda.into_iter().filter(|&x| x > 0).collect();
    IrrepMax { dim, partition }
}

/// `max_irrep_dim(m, d)` for every `m` in `0..=n_max`, each search warm
/// started from the previous maximiser with one box added.
pub fn max_irrep_dim_table(n_max: usize, d: usize) -> Vec<IrrepMax> {
    if d == 0 {
        return (0..=n_max).map(|m| max_irrep_dim(m, 0)).collect();
    }
    let mut lambda = vec![0usize; d];
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(finish_max(lambda.clone(), d));
    for _ in 1..=n_max {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for i in 0..d {
            let mut m = lambda.clone();
            m[i] += 1;
            if is_partition(&m) {
                let v = log_weyl(&m);
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, m));
                }
            }
        }
        lambda = best.expect("adding to the first row is always valid").1;
        climb(&mut lambda);
        out.push(finish_max(lambda.clone(), d));
    }
    out
}

/// `ceil(log2 x)` for `x >= 1`; zero for `x <= 1`.
pub fn ceil_log2(x: &BigUint) -> u64 {
    if *x <= BigUint::one() {
        0
    } else {
        (x - 1u32).bits()
    }
}

fn serialize_big<S: Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    match x.to_u64() {
        Some(v) => s.serialize_u64(v),
        None => s.serialize_str(&x.to_string()),
    }
}

fn deserialize_big<'de, D: Deserializer<'de>>(de: D) -> Result<BigUint, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Small(u64),
        Text(String),
    }
    match Repr::deserialize(de)? {
        Repr::Small(v) => Ok(BigUint::from(v)),
        Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
    }
}

/// Qubit budget for the label and unitary registers.
///
/// Integers that do not fit in 64 bits serialize as decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurBudget {
    pub n: usize,
    pub d: usize,
    #[serde(serialize_with = "serialize_big", deserialize_with = "deserialize_big")]
    pub lambda_count_exact: BigUint,
    pub lambda_count_paper_formula: f64,
    #[serde(serialize_with = "serialize_big", deserialize_with = "deserialize_big")]
    pub max_irrep_dim_exact: BigUint,
    #[serde(serialize_with = "serialize_big", deserialize_with = "deserialize_big")]
    pub max_irrep_dim_paper_bound: BigUint,
    pub maximizing_partition: Vec<usize>,
    pub qubits_label: u64,
    pub qubits_unitary: u64,
    pub qubits_total: u64,
}

impl SchurBudget {
    fn assemble(n: usize, d: usize, count: BigUint, max: IrrepMax) -> Self {
        let qubits_label = ceil_log2(&count);
        let qubits_unitary = ceil_log2(&max.dim);
        Self {
            n,
            d,
            lambda_count_paper_formula: young_count_formula(n, d),
            lambda_count_exact: count,
            max_irrep_dim_paper_bound: max_irrep_dim_bound(n, d),
            max_irrep_dim_exact: max.dim,
            maximizing_partition: max.partition,
            qubits_label,
            qubits_unitary,
            qubits_total: qubits_label + qubits_unitary,
        }
    }

    /// `d(d-1)/2 log2(N+d-1) + (d-1) log2(N+1) + 2`.
    pub fn scaling_bound(&self) -> f64 {
        let (n, d) = (self.n as f64, self.d as f64);
        0.5 * d * (d - 1.0) * (n + d - 1.0).log2() + (d - 1.0) * (n + 1.0).log2() + 2.0
    }
}

pub fn schur_memory_qubits(n: usize, d: usize) -> SchurBudget {
    SchurBudget::assemble(n, d, young_count(n, d), max_irrep_dim(n, d))
}

/// Budgets for `1 <= N <= n_max` and `1 <= d <= d_max`, ordered by `d`
/// then `N`.
pub fn budget_table(n_max: usize, d_max: usize) -> Vec<SchurBudget> {
    let mut out = Vec::with_capacity(n_max * d_max);
    for d in 1..=d_max {
        let counts = young_count_table(n_max, d);
        let maxima = max_irrep_dim_table(n_max, d);
        for (n, (c, m)) in counts.into_iter().zip(maxima).enumerate().skip(1) {
            out.push(SchurBudget::assemble(n, d, c, m));
        }
    }
    out
}
