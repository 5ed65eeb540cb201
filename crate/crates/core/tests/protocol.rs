use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cohmeas::baselines::{compare_protocol_vs_oracle, joint_oracle, BaselineSelection, LocalSearch};
use cohmeas::discrimination::{helstrom_pure_closed_form, MeasurementKind};
use cohmeas::mps_rollup::{fidelity, reverse_prepare, run_mps_protocol};
use cohmeas::ncopy::{gram_power_law_error, run_ncopy_protocol, verify_decoupling};
use cohmeas::pipeline::{run_protocol, Hypotheses};
use cohmeas::random::{random_mps_ensemble, random_product_hypotheses, random_unitary};
use cohmeas::scenario::{emit_report, parse_scenario, run_scenario, Format};
use cohmeas::states::{mps_to_statevector, noon_mps, Ensemble, Mps, MpsEnsemble, ProductHypotheses, PureState};
use cohmeas::{Mode, ToleranceConfig};

const JOINT_ZERO_PLUS: [f64; 4] = [
    0.8535533905932737,
    0.9330127018922193,
    0.9677071733467426,
    0.984122918275927,
];

fn zero_plus(copies: usize) -> ProductHypotheses {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let ens = Ensemble::uniform(vec![PureState::basis(2, 0), PureState::from_real(&[h, h]).unwrap()]).unwrap();
    ProductHypotheses::copies(&ens, copies).unwrap()
}

#[test]
fn zero_plus_matches_external_joint_values() {
    let tol = ToleranceConfig::default();
    for (i, &want) in JOINT_ZERO_PLUS.iter().enumerate() {
        let hyp = Hypotheses::Product(zero_plus(i + 1));
        for mode in [Mode::Compact, Mode::Full] {
            let out = run_protocol(&hyp, mode, MeasurementKind::MinError, &tol).unwrap();
            assert!((out.measurement.success_probability - want).abs() < 1e-10, "N={} {mode:?}", i + 1);
        }
        let c = 0.5f64.powf((i + 1) as f64 / 2.0);
        assert!((helstrom_pure_closed_form(0.5, 0.5, c) - want).abs() < 1e-12);
    }
}

#[test]
fn compact_and_full_modes_agree() {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let hyp = random_product_hypotheses(&mut rng, 3, &[2, 3, 2, 2]).unwrap();
        let (tc, ec) = run_ncopy_protocol(&hyp, Mode::Compact, &tol).unwrap();
        let (tf, ef) = run_ncopy_protocol(&hyp, Mode::Full, &tol).unwrap();
        assert_eq!(tc.ranks(), tf.ranks());
        for (a, b) in ec.vectors().iter().zip(ef.vectors()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(gram_power_law_error(&hyp, &ef) < 1e-10);
        assert!(verify_decoupling(&tf, 1e-10).unwrap().pass);
    }
}

#[test]
fn local_site_unitaries_leave_success_unchanged() {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hyp = random_product_hypotheses(&mut rng, 3, &[3, 2, 3]).unwrap();
    let dims = hyp.site_dims();
    let us: Vec<_> = dims.iter().map(|&d| random_unitary(&mut rng, d)).collect();
    let rotated: Vec<Vec<PureState>> = (0..hyp.len())
        .map(|k| {
            hyp.hypothesis(k)
                .iter()
                .zip(&us)
                .map(|(s, u)| PureState::new(u * s.amplitudes()).unwrap())
                .collect()
        })
        .collect();
    let rotated = ProductHypotheses::from_hypotheses(&rotated, hyp.priors().to_vec()).unwrap();
    let a = run_protocol(&Hypotheses::Product(hyp), Mode::Compact, MeasurementKind::MinError, &tol).unwrap();
    let b = run_protocol(&Hypotheses::Product(rotated), Mode::Compact, MeasurementKind::MinError, &tol).unwrap();
    assert!((a.measurement.success_probability - b.measurement.success_probability).abs() < 1e-9);
}

#[test]
fn protocol_never_beats_the_joint_optimum() {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 2..=4 {
        let hyp = random_product_hypotheses(&mut rng, k, &[2, 2, 2]).unwrap();
        let r = compare_protocol_vs_oracle(
            &Hypotheses::Product(hyp),
            Mode::Full,
            BaselineSelection { joint_oracle: true, local: None },
            &tol,
        )
        .unwrap();
        let joint = r.p_joint_oracle.unwrap();
        assert!((r.p_protocol - joint).abs() < 1e-8, "K={k}");
        assert!(r.certificate_residuals.iter().all(|&c| c <= 1e-7));
    }
}

#[test]
fn local_baseline_trails_protocol_and_oracle() {
    let tol = ToleranceConfig::default();
    let hyp = Hypotheses::Product(zero_plus(2));
    let sel = BaselineSelection { joint_oracle: true, local: Some(LocalSearch::default()) };
    let r = compare_protocol_vs_oracle(&hyp, Mode::Compact, sel, &tol).unwrap();
    let local = r.p_local_baseline.unwrap();
    assert!(local < r.p_joint_oracle.unwrap());
    assert!(r.local_gap.unwrap() > 1e-4);
    assert!((local - 0.9162738334954359).abs() < 1e-6);
}

#[test]
fn mps_noon_vs_all_up_equals_dense_oracle() {
    let tol = ToleranceConfig::default();
    let up = Mps::product(&vec![PureState::basis(2, 0); 8]).unwrap();
    let ens = MpsEnsemble::uniform(vec![noon_mps(8).unwrap(), up]).unwrap();
    let hyp = Hypotheses::Mps(ens.clone());
    let out = run_protocol(&hyp, Mode::Compact, MeasurementKind::MinError, &tol).unwrap();
    assert!(out.apparatus_dim <= 4 && out.schmidt_rank_max <= 4);
    let dense = joint_oracle(&ens.to_dense().unwrap(), 1, &tol).unwrap();
    assert!((out.measurement.success_probability - dense.success_probability).abs() < 1e-8);
    assert!((out.measurement.success_probability - 0.853553390593).abs() < 1e-8);
}

#[test]
fn random_mps_round_trip() {
    let tol = ToleranceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ens = random_mps_ensemble(&mut rng, 3, &[2, 2, 2, 2], 2).unwrap();
    let (trace, _) = run_mps_protocol(&ens, Mode::Full, &tol).unwrap();
    for (k, m) in ens.members().iter().enumerate() {
        let back = reverse_prepare(&trace, k).unwrap();
        assert!(fidelity(&back, &mps_to_statevector(m).unwrap()) > 1.0 - 1e-9);
    }
}

#[test]
fn scenario_text_to_report() {
    let text = r#"{
        "task": "ncopy",
        "states": [{"vector": [[1,0],[0,0]]}, {"vector": [[1,0],[1,0]]}],
        "copies": 3,
        "mode": "full",
        "baselines": ["joint_oracle"]
    }"#;
    let spec = parse_scenario(text).unwrap();
    let report = run_scenario(&spec).unwrap();
    assert_eq!(report.p_protocol, Some(0.967707173347));
    assert_eq!(report.p_joint_oracle, report.p_protocol);
    let json = emit_report(&report, Format::Json);
    let keys: Vec<&str> = json
        .lines()
        .filter_map(|l| l.strip_prefix("  \"").and_then(|r| r.split('"').next()))
        .collect();
    assert_eq!(&keys[..3], ["version", "scenario", "p_protocol"]);
    assert_eq!(keys.last(), Some(&"runtime_ms"));
}
