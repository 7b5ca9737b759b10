mod common;

use common::SIGMA;
use okpitch::equilibria::{
    continue_branch, detect_bifurcations, galerkin_residual, newton_equilibrium, trivial_branch, BifurcationKind,
    StepPolicy,
};
use okpitch::model::{primary_lambda, ModelParams};
use okpitch::spectral::CosineSeries;
use okpitch::symmetry::{class_mass, SymClass};

#[test]
fn trivial_branch_primaries_match_closed_form() {
    let lmax = primary_lambda(SIGMA, 8).unwrap() + 5.0;
    let b = trivial_branch(SIGMA, (10.0, lmax), 2.0, 16).unwrap();
    let recs = detect_bifurcations(SIGMA, &b, None).unwrap();
    assert_eq!(recs.len(), 8);
    for (k, r) in (1..=8).zip(&recs) {
        let exact = primary_lambda(SIGMA, k).unwrap();
        assert!((r.lambda0 - exact).abs() <= 1e-6 * exact, "k={k}: {} vs {exact}", r.lambda0);
        assert_eq!(r.kind, BifurcationKind::Primary);
    }
    assert!((recs[0].lambda0 - 25.1729).abs() < 1e-4);
}

#[test]
fn fifth_primary_value() {
    let l5 = primary_lambda(SIGMA, 5).unwrap();
    assert!((l5 - 252.889).abs() < 1e-3, "{l5}");
}

#[test]
fn newton_keeps_class_a() {
    for n in [3usize, 4, 5] {
        let p = ModelParams::new(SIGMA, primary_lambda(SIGMA, n).unwrap() + 30.0, Some(n)).unwrap();
        let mut seed = CosineSeries::mode(n, 0.3).resized(48);
        seed.set(3 * n, 0.01);
        let u = newton_equilibrium(&p, &seed, 48).unwrap();
        let off = common::off_classes(&u, n, &[SymClass::A]);
        assert!(off <= 1e-12, "n={n}: {off:e}");
        assert!(galerkin_residual(&p, &u, 48) < 1e-9);
    }
}

#[test]
fn eigenvectors_are_class_pure() {
    let b = continue_branch(SIGMA, 4, (0.0, 300.0), 48, &StepPolicy::default()).unwrap();
    let s = &b[b.len() / 2];
    let p = ModelParams::new(SIGMA, s.lambda, Some(4)).unwrap();
    let spec = okpitch::equilibria::galerkin_spectrum(&p, &s.u, 48);
    for i in 0..spec.values.len() {
        let col: Vec<f64> = spec.vectors.column(i).iter().copied().collect();
        let m = class_mass(&col, 4);
        let best = m.iter().cloned().fold(0.0, f64::max);
        assert!(best >= 1.0 - 1e-10, "eigvec {i}: {m:?}");
    }
}

#[test]
fn symmetric_branches_report_expected_cases() {
    use okpitch::symmetry::CaseLabel;
    let cases = [(3usize, 115.69, CaseLabel::D), (5, 315.57, CaseLabel::D), (4, 336.05, CaseLabel::A)];
    for (k, target, case) in cases {
        let r = common::detected(k, target);
        assert!((r.lambda0 - target).abs() < 0.05, "k={k}: {}", r.lambda0);
        assert_eq!(r.scenario.map(|s| s.case_label), Some(case), "k={k}");
        assert!(r.resolved);
    }
}

#[test]
fn trivial_branch_has_only_primaries() {
    let b = trivial_branch(SIGMA, (10.0, 350.0), 1.0, 24).unwrap();
    let recs = detect_bifurcations(SIGMA, &b, None).unwrap();
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r.kind == BifurcationKind::Primary && r.scenario.is_none()));
}
