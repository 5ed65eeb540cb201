//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cohmeas::baselines::{compare_protocol_vs_oracle, joint_oracle, BaselineSelection, LocalSearch};
use cohmeas::discrimination::{helstrom_ensemble, helstrom_pure_closed_form, min_error_povm, MeasurementKind};
use cohmeas::memory::{budget_table, schur_memory_qubits, young_count};
use cohmeas::mps_rollup::{fidelity, reverse_prepare, run_mps_protocol};
use cohmeas::ncopy::{gram_power_law_error, run_ncopy_protocol, verify_decoupling};
use cohmeas::pipeline::{run_protocol, Hypotheses};
use cohmeas::random::{random_ensemble, random_mps_ensemble, random_product_hypotheses};
use cohmeas::states::{mps_to_statevector, noon_mps, Ensemble, Mps, MpsEnsemble, ProductHypotheses, PureState};
use cohmeas::{CMatrix, Mode, ToleranceConfig, C64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn gram(ens: &Ensemble) -> CMatrix {
    let v = ens.vectors();
    CMatrix::from_fn(v.len(), v.len(), |i, j| v[i].dotc(&v[j]))
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z: &C64| z.norm()).fold(0.0, f64::max)
}

fn zero_plus(copies: usize) -> ProductHypotheses {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let ens = Ensemble::uniform(vec![PureState::basis(2, 0), PureState::from_real(&[h, h]).unwrap()]).unwrap();
    ProductHypotheses::copies(&ens, copies).unwrap()
}

fn all_up(n: usize) -> Mps {
    Mps::product(&vec![PureState::basis(2, 0); n]).unwrap()
}

fn gram_power_law() -> Outcome {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let hyp = random_product_hypotheses(&mut rng, k, &vec![d; n]).map_err(|e| e.to_string())?;
        let (_, fin) = run_ncopy_protocol(&hyp, Mode::Compact, &tol).map_err(|e| e.to_string())?;
        worst = worst.max(gram_power_law_error(&hyp, &fin));
    }
    let t = start.elapsed();
    check(worst <= 1e-10 && within(t, 5.0), format!("max error {worst:.2e} over 100 ensembles in {t:.2?}"))
}

/// Scenarios shared by the optimality and decoupling criteria.
fn optimality_scenarios() -> Vec<ProductHypotheses> {
    let mut out: Vec<_> = (1..=4).map(zero_plus).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let k = rng.random_range(2..=3);
        let d = rng.random_range(2..=3);
        let n = rng.random_range(1..=3);
        out.push(random_product_hypotheses(&mut rng, k, &vec![d; n]).unwrap());
    }
    out
}

fn protocol_optimality() -> Outcome {
    let tol = ToleranceConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut pinned = Vec::new();
    for (i, hyp) in optimality_scenarios().into_iter().enumerate() {
        let sel = BaselineSelection { joint_oracle: true, local: None };
        let r = compare_protocol_vs_oracle(&Hypotheses::Product(hyp), Mode::Full, sel, &tol)
            .map_err(|e| e.to_string())?;
        worst = worst.max((r.p_protocol - r.p_joint_oracle.unwrap()).abs());
        if i < 2 {
            pinned.push(r.p_protocol);
        }
    }
    let pins_ok = (pinned[0] - 0.853553390593).abs() <= 1e-8 && (pinned[1] - 0.933012701892).abs() <= 1e-8;
    let t = start.elapsed();
    check(
        worst <= 1e-8 && pins_ok && within(t, 30.0),
        format!("max |p_protocol - p_joint| {worst:.2e} over 24 scenarios, N=1,2 give {:.12} {:.12}, {t:.2?}", pinned[0], pinned[1]),
    )
}

fn decoupling() -> Outcome {
    let tol = ToleranceConfig::default();
    let mut worst = 0.0f64;
    for hyp in optimality_scenarios() {
        let (trace, _) = run_ncopy_protocol(&hyp, Mode::Full, &tol).map_err(|e| e.to_string())?;
        worst = worst.max(verify_decoupling(&trace, 1e-10).map_err(|e| e.to_string())?.max);
    }
    check(worst <= 1e-10, format!("max residual {worst:.2e} over 24 full-mode runs"))
}

fn mps_protocol() -> Outcome {
    let tol = ToleranceConfig::default();
    let start = Instant::now();
    let ens = MpsEnsemble::uniform(vec![noon_mps(8).unwrap(), all_up(8)]).unwrap();
    let (trace, _) = run_mps_protocol(&ens, Mode::Compact, &tol).map_err(|e| e.to_string())?;
    let out = run_protocol(&Hypotheses::Mps(ens.clone()), Mode::Compact, MeasurementKind::MinError, &tol)
        .map_err(|e| e.to_string())?;
    let dense = joint_oracle(&ens.to_dense().unwrap(), 1, &tol).map_err(|e| e.to_string())?;
    let p = out.measurement.success_probability;
    let t = start.elapsed();
    check(
        trace.apparatus_dim <= 4
            && trace.max_schmidt_rank() <= 4
            && (p - 0.853553390593).abs() <= 1e-8
            && (p - dense.success_probability).abs() <= 1e-8
            && within(t, 5.0),
        format!(
            "apparatus {} ranks {:?} p {p:.12} dense {:.12} in {t:.2?}",
            trace.apparatus_dim, trace.apparatus_dim_history, dense.success_probability
        ),
    )
}

fn bond_one_reduction() -> Outcome {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(2..=3)).collect();
        let hyp = random_product_hypotheses(&mut rng, k, &dims).unwrap();
        let (_, fin) = run_ncopy_protocol(&hyp, Mode::Compact, &tol).map_err(|e| e.to_string())?;
        let (trace, _) = run_mps_protocol(&hyp.to_mps_ensemble().unwrap(), Mode::Compact, &tol)
            .map_err(|e| e.to_string())?;
        worst = worst.max(max_diff(&gram(&fin), &trace.apparatus_gram));
    }
    check(worst <= 1e-10, format!("max Gram difference {worst:.2e} over 20 cases"))
}

fn reverse_preparation() -> Outcome {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = vec![MpsEnsemble::uniform(vec![noon_mps(4).unwrap(), all_up(4)]).unwrap()];
    for _ in 0..10 {
        cases.push(random_mps_ensemble(&mut rng, 2, &[2, 2, 2, 2], 2).unwrap());
    }
    let mut worst = 1.0f64;
    for ens in &cases {
        let (trace, _) = run_mps_protocol(ens, Mode::Full, &tol).map_err(|e| e.to_string())?;
        for (k, m) in ens.members().iter().enumerate() {
            let back = reverse_prepare(&trace, k).map_err(|e| e.to_string())?;
            worst = worst.min(fidelity(&back, &mps_to_statevector(m).unwrap()));
        }
    }
    check(worst >= 1.0 - 1e-9, format!("min fidelity 1 - {:.2e} over 11 ensembles", 1.0 - worst))
}

fn local_gap() -> Outcome {
    let tol = ToleranceConfig::default();
    let start = Instant::now();
    let sel = BaselineSelection { joint_oracle: false, local: Some(LocalSearch::default()) };
    let r = compare_protocol_vs_oracle(&Hypotheses::Product(zero_plus(2)), Mode::Compact, sel, &tol)
        .map_err(|e| e.to_string())?;
    let gap = r.local_gap.unwrap();
    let t = start.elapsed();
    check(
        gap > 1e-4 && within(t, 10.0),
        format!("local {:.12} protocol {:.12} gap {gap:.6e} in {t:.2?}", r.p_local_baseline.unwrap(), r.p_protocol),
    )
}

fn solver_correctness() -> Outcome {
    let tol = ToleranceConfig::default();
    let trine: Vec<PureState> = (0..3)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            PureState::from_real(&[a.cos(), a.sin()]).unwrap()
        })
        .collect();
    let r = min_error_povm(&Ensemble::uniform(trine).unwrap(), &tol).map_err(|e| e.to_string())?;
    let residual = r.certificate_residual.unwrap_or(f64::INFINITY);
    let trine_ok = (r.success_probability - 2.0 / 3.0).abs() <= 1e-6 && residual <= 1e-7;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(2..=4);
        let ens = random_ensemble(&mut rng, 2, d).unwrap();
        let c = ens.states()[0].overlap(&ens.states()[1]).norm();
        let want = helstrom_pure_closed_form(ens.priors()[0], ens.priors()[1], c);
        let general = min_error_povm(&ens, &tol).map_err(|e| e.to_string())?.success_probability;
        let helstrom = helstrom_ensemble(&ens).map_err(|e| e.to_string())?.success_probability;
        worst = worst.max((general - want).abs()).max((helstrom - want).abs());
    }
    check(
        trine_ok && worst <= 1e-8,
        format!("trine {:.12} residual {residual:.2e}; K=2 max deviation {worst:.2e} over 200", r.success_probability),
    )
}

/// Non-increasing `d`-tuples summing to `n`, by exhaustive enumeration.
fn brute_partition_count(n: usize, d: usize) -> usize {
    let mut count = 0;
    let mut rows = vec![0usize; d];
    loop {
        if rows.iter().sum::<usize>() == n && rows.windows(2).all(|w| w[0] >= w[1]) {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == d {
                return count;
            }
            if rows[i] < n {
                rows[i] += 1;
                break;
            }
            rows[i] = 0;
            i += 1;
        }
    }
}

fn memory_accounting() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for n in 1..=20 {
        for d in 1..=4 {
            if young_count(n, d) != brute_partition_count(n, d).into() {
                mismatches += 1;
            }
        }
    }
    let small = schur_memory_qubits(4, 2).qubits_total;
    let table = budget_table(10_000, 6);
    let violations = table
        .iter()
        .filter(|b| {
            let (n, d) = (b.n as f64, b.d as f64);
            let bound = 0.5 * d * (d - 1.0) * (n + d - 1.0).log2() + (d - 1.0) * (n + 1.0).log2() + 2.0;
            b.qubits_total as f64 > bound
        })
        .count();
    let t = start.elapsed();
    check(
        mismatches == 0 && small == 5 && violations == 0 && within(t, 5.0),
        format!(
            "{mismatches} count mismatches, (4,2) budget {small} qubits, {violations} bound violations over {} rows, {t:.2?}",
            table.len()
        ),
    )
}

fn strip_runtime(text: &str, csv: bool) -> String {
    text.lines()
        .filter(|l| !l.contains("\"runtime_ms\""))
        .map(|l| if csv { l.rsplit_once(',').map_or(l, |(head, _)| head) } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_determinism(suite_start: Instant) -> Outcome {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut specs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    specs.sort();
    let mut runs = 0;
    for spec in &specs {
        for (format, csv) in [("json", false), ("csv", true)] {
            let mut outputs = Vec::new();
            for _ in 0..2 {
                let o = Command::new(env!("CARGO_BIN_EXE_cohmeas"))
                    .args(["run", "--format", format])
                    .arg(spec)
                    .output()
                    .map_err(|e| e.to_string())?;
                if !o.status.success() {
                    return Err(format!("{} exited {:?}", spec.display(), o.status.code()));
                }
                outputs.push(strip_runtime(&String::from_utf8_lossy(&o.stdout), csv));
                runs += 1;
            }
            if outputs[0] != outputs[1] {
                return Err(format!("{} differs between runs ({format})", spec.display()));
            }
        }
    }
    let t = suite_start.elapsed();
    check(
        !specs.is_empty() && within(t, 120.0),
        format!("{} scenarios, {runs} runs identical; suite so far {t:.2?}", specs.len()),
    )
}

fn main() {
    let suite_start = Instant::now();
    let criteria: Vec<Criterion> = vec![
        ("gram power law", Box::new(gram_power_law)),
        ("protocol optimality", Box::new(protocol_optimality)),
        ("decoupling", Box::new(decoupling)),
        ("mps protocol", Box::new(mps_protocol)),
        ("bond-one reduction", Box::new(bond_one_reduction)),
        ("reverse preparation", Box::new(reverse_preparation)),
        ("local gap", Box::new(local_gap)),
        ("solver correctness", Box::new(solver_correctness)),
        ("memory accounting", Box::new(memory_accounting)),
        ("cli determinism", Box::new(move || cli_determinism(suite_start))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("acceptance {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
