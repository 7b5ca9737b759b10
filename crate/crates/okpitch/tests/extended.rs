mod common;

use common::SIGMA;
use okpitch::extended::{assemble_dwfe, ext_residual, fe_apply, ExtendedPoint, Slot};
use okpitch::interval::Interval;
use okpitch::symmetry::{class_of, SymClass};

#[test]
fn interval_residual_encloses_float() {
    let p = common::refined(3, 96, 115.69);
    let fi = fe_apply::<Interval>(SIGMA, &p.w, &p.ell).unwrap();
    let ff = fe_apply::<f64>(SIGMA, &p.w, &p.ell).unwrap();
    assert!(fi.r1.contains(ff.r1) || fi.r1.rad() <= 1e-15);
    for (a, b) in [(&fi.r2, &ff.r2), (&fi.r3, &ff.r3)] {
        for k in 1..=a.len() {
            let (i, f) = (a.coeff(k), b.coeff(k));
            assert!(i.contains(f) || (i.mid() - f).abs() <= 1e-12 * (1.0 + f.abs()), "mode {k}");
        }
    }
    assert!(fi.norm_y().hi() < 1e-9);
}

#[test]
fn refined_points_near_anchors() {
    for (k, target) in [(3usize, 115.69), (5, 315.57), (4, 336.05)] {
        let p = common::refined(k, 128, target);
        assert!((p.w.lambda / target - 1.0).abs() <= 0.005, "k={k}: {}", p.w.lambda);
        assert!(ext_residual(SIGMA, &p.w, &p.ell).unwrap() <= 1e-11);
        assert!(common::off_classes(&p.w.u, k, &[SymClass::A]) == 0.0);
    }
}

#[test]
fn derivative_blocks_respect_classes() {
    let p = common::refined(5, 60, 315.57);
    let j = assemble_dwfe(SIGMA, &p.w, &p.ell).unwrap();
    let slots = p.w.layout().cols();
    for (r, rs) in slots.iter().enumerate() {
        for (c, cs) in slots.iter().enumerate() {
            let x = j[(r, c)];
            match (rs, cs) {
                // u-equation does not see v.
                (Slot::U(_), Slot::V(_)) => assert_eq!(x, 0.0),
                // v-equation, v-columns: block diagonal in the class of the mode.
                (Slot::V(a), Slot::V(b)) if class_of(*a, 5) != class_of(*b, 5) => {
                    assert!(x.abs() <= 1e-12, "({a},{b}) = {x:e}")
                }
                _ => {}
            }
        }
    }
}

#[test]
fn refined_point_json_roundtrip() {
    let p = common::refined(4, 64, 336.05);
    let s = serde_json::to_string(&p.w).unwrap();
    let back: ExtendedPoint = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p.w);
}
