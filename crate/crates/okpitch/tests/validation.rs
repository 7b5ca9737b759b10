mod common;

use common::SIGMA;
use nalgebra::DVector;
use okpitch::extended::{fe_apply, ExtendedPoint, NormalizationFunctional};
use okpitch::interval::{iv_poly_range, Interval};
use okpitch::model::{primary_lambda, Nonlinearity};
use okpitch::spectral::CosineSeries;
use okpitch::validation::{
    branch_box, eta_for, inverse_k, lipschitz_bundle, make_certificate, residual_rho, slant_and_eta, BoxInputs,
    CertConfig, Stage,
};
use rand::Rng;
use std::f64::consts::SQRT_2;

/// `u = 0`, `v = sqrt(2) cos(2 pi x)` at the second primary value, `n_sym = 1`.
fn trivial(n: usize) -> (ExtendedPoint, NormalizationFunctional) {
    let v = CosineSeries::mode(2, SQRT_2).resized(n);
    let w = ExtendedPoint::new(primary_lambda(SIGMA, 2).unwrap(), 1, CosineSeries::zeros(n), v.clone()).unwrap();
    (w, NormalizationFunctional::new(v).unwrap())
}

fn table_inputs(rho: f64) -> BoxInputs {
    BoxInputs {
        rho: Interval::point(rho),
        k: Interval::point(73.453),
        m1: Interval::point(54.859),
        m2: Interval::point(1.0),
        m3: Interval::point(1.0),
        m4: Interval::ZERO,
        eta: Interval::ZERO,
        norm_w_slant: Interval::ZERO,
        d_w: 1.24e-4,
        d_sigma: 1.24e-4,
    }
}

#[test]
fn trivial_residual_vanishes() {
    let (w, ell) = trivial(16);
    let rho = residual_rho(SIGMA, &w, &ell).unwrap();
    assert!(rho.hi() <= 1e-12, "{rho:?}");
}

#[test]
fn doubled_eigenvector_breaks_normalization() {
    let (w, ell) = trivial(16);
    let w2 = ExtendedPoint::new(w.lambda, 1, w.u.clone(), w.v.scale(2.0)).unwrap();
    let r = fe_apply::<Interval>(SIGMA, &w2, &ell).unwrap();
    assert!((r.r1.mag() - 1.0).abs() <= 1e-14, "{:?}", r.r1);
    let cert = make_certificate(SIGMA, &w2, &ell, &CertConfig::default()).unwrap();
    assert!(!cert.valid);
    assert_eq!(cert.failure.unwrap().stage, Stage::Residual);
}

#[test]
fn trivial_k_close_to_true_inverse_norm() {
    // The multiplication tail decays like lambda / ((N+1) pi)^2, so N must be moderate.
    let (w, ell) = trivial(200);
    let inv = inverse_k(SIGMA, &w, &ell, None).unwrap();
    // At u = 0 the operator is the computed block joined with a diagonal tail of norm <= 1.
    let j = okpitch::extended::assemble_dwfe(SIGMA, &w, &ell).unwrap();
    let smin = j.clone().svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let exact = (1.0 / smin).max(1.0);
    let ratio = inv.k.hi() / exact;
    assert!((1.0..=1.1).contains(&ratio), "K = {:e}, 1/smin = {exact:e}", inv.k.hi());
}

#[test]
fn longer_tail_does_not_raise_k() {
    let p = common::refined(3, 96, 115.69);
    let a = inverse_k(SIGMA, &p.w, &p.ell, None).unwrap();
    let b = inverse_k(SIGMA, &p.w, &p.ell, Some(6 * 96)).unwrap();
    assert!(b.k.hi() <= a.k.hi(), "{:e} vs {:e}", b.k.hi(), a.k.hi());
}

#[test]
fn trivial_lipschitz_constants() {
    let (w, _) = trivial(16);
    let b = lipschitz_bundle(SIGMA, &w, 0.0, 0.0).unwrap();
    assert_eq!(b.f_max_ell[0].hi(), 1.0);
    for (name, c) in [("c4", b.c4), ("c6", b.c6), ("c9", b.c9), ("M4", b.M4)] {
        assert_eq!(c.mag(), 0.0, "{name}");
    }
    assert!(b.c10.lo() > 0.0);

    let v = CosineSeries::mode(1, 1.0).resized(8);
    let w = ExtendedPoint::new(10.0, 1, CosineSeries::zeros(8), v).unwrap();
    let b = lipschitz_bundle(SIGMA, &w, 0.0, 0.0).unwrap();
    assert_eq!(b.f_max_ell[0].hi(), 1.0);
    assert_eq!((b.c4.mag(), b.c6.mag(), b.c9.mag(), b.M4.mag()), (0.0, 0.0, 0.0, 0.0));
    // f''' = -6 is constant, so c10 survives a zero radius.
    let c10 = 0.149072 * 6.0 * 10.0 / std::f64::consts::PI.powi(2);
    assert!(b.c10.contains(c10) || (b.c10.mid() / c10 - 1.0).abs() < 1e-12);
}

#[test]
fn derivative_range_hand_check() {
    // |1 - 3u^2| on |u| <= r: the exact maximum is max(1, 3r^2 - 1), never above 1 + 3r^2.
    for r in [0.1, 0.5, 0.8, 1.0, 1.5, 3.0] {
        let m = iv_poly_range(&Nonlinearity::DF, Interval::hull_of(-r, r)).mag();
        let exact = f64::max(1.0, 3.0 * r * r - 1.0);
        assert!(m >= exact && m <= exact * (1.0 + 1e-12) + 1e-15, "r={r}: {m}");
        assert!(m <= 1.0 + 3.0 * r * r);
    }
}

#[test]
fn eta_without_slant_matches_formula() {
    let p = common::refined(5, 96, 315.57);
    let s = slant_and_eta(SIGMA, &p.w, &p.ell).unwrap();
    let uy = p.w.u.norm_y();
    let vy = p.w.v.norm_y();
    let formula = p.w.lambda.abs() * (uy * uy + vy * vy).sqrt();
    assert!((s.eta_zero.mid() / formula - 1.0).abs() <= 1e-12);
    assert!(s.eta.hi() * 10.0 <= s.eta_zero.lo(), "{:e} vs {:e}", s.eta.hi(), s.eta_zero.lo());

    let w0 = ExtendedPoint::new(0.0, p.w.n_sym, p.w.u.clone(), p.w.v.clone()).unwrap();
    let zero = okpitch::extended::ExtTriple {
        r1: 0.0,
        r2: CosineSeries::zeros(96),
        r3: CosineSeries::zeros(96),
    };
    assert!(eta_for(SIGMA, &w0, &p.ell, &zero).unwrap().hi() <= 1e-15);
}

#[test]
fn box_feasible_for_exact_zero() {
    let inp = BoxInputs { rho: Interval::ZERO, ..table_inputs(0.0) };
    let r = branch_box(&inp, 40, 1e-12).unwrap();
    assert!(r.checks.all());
    assert_eq!(r.delta_sigma, inp.d_sigma);
}

#[test]
fn box_contraction_threshold() {
    let ok = table_inputs(8.3e-7);
    assert!(branch_box(&ok, 40, 1e-12).is_ok());
    let bad = table_inputs(8.5e-7);
    assert!(branch_box(&bad, 40, 1e-12).is_err());
}

#[test]
fn smaller_residual_never_shrinks_box() {
    let mut r = common::rng(11);
    for _ in 0..50 {
        let rho = r.gen_range(1e-10..8.3e-7);
        let mut a = table_inputs(rho);
        a.eta = Interval::point(r.gen_range(0.0..10.0));
        a.norm_w_slant = Interval::point(r.gen_range(0.0..5.0));
        let b = BoxInputs { rho: Interval::point(rho / 10.0), ..a };
        if let Ok(ra) = branch_box(&a, 40, 1e-12) {
            let rb = branch_box(&b, 40, 1e-12).expect("smaller residual");
            assert!(rb.delta_sigma >= ra.delta_sigma);
        }
    }
}

#[test]
fn box_second_condition_holds_directly() {
    let p = common::refined(3, 178, 115.69);
    let cfg = CertConfig { record_timings: false, ..CertConfig::default() };
    let c = make_certificate(SIGMA, &p.w, &p.ell, &cfg).unwrap();
    assert!(c.valid, "{:?}", c.failure);
    let (ds, dw) = (c.delta_sigma.unwrap().hi(), c.delta_w.unwrap().hi());
    let d_w = c.bundle.as_ref().unwrap().d_w;
    assert!(ds > 0.0 && dw > 0.0 && dw <= d_w);
    assert!(ds * c.norm_w_slant.unwrap().hi() + dw < d_w);
    assert!(c.checks.boxes.eq24);
}

#[test]
fn certificate_is_deterministic() {
    let p = common::refined(3, 178, 115.69);
    let cfg = CertConfig { record_timings: false, ..CertConfig::default() };
    let a = serde_json::to_string(&make_certificate(SIGMA, &p.w, &p.ell, &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&make_certificate(SIGMA, &p.w, &p.ell, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lipschitz_bounds_hold_on_samples() {
    let p = common::refined(3, 178, 115.69);
    let c = make_certificate(SIGMA, &p.w, &p.ell, &CertConfig::default()).unwrap();
    let b = c.bundle.unwrap();
    let worst = common::lipschitz_worst(SIGMA, &p.w, &p.ell, &b, 100, 7);
    assert!(worst <= 1.0, "worst ratio {worst}");
}

#[test]
fn k_bounds_inverse_on_random_vectors() {
    let p = common::refined(3, 178, 115.69);
    let k = inverse_k(SIGMA, &p.w, &p.ell, None).unwrap().k.hi();
    // The band holds every nonzero row of the operator on P_N.
    let j = common::full_band(SIGMA, &p.w, &p.ell);
    let mut r = common::rng(3);
    for _ in 0..200 {
        let x = DVector::from_fn(j.ncols(), |_, _| r.gen_range(-1.0..1.0));
        let y = &j * &x;
        assert!(x.norm() <= k * y.norm() * (1.0 + 1e-6));
    }
}
