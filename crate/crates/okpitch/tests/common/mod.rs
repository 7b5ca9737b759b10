#![allow(dead_code)]

use nalgebra::DMatrix;
use okpitch::equilibria::{continue_branch, detect_bifurcations, BifurcationRecord, StepPolicy};
use okpitch::extended::{assemble_scaled, dsigma_fe, ExtTriple, ExtendedPoint, NormalizationFunctional};
use okpitch::interval::Interval;
use okpitch::model::ModelParams;
use okpitch::spectral::CosineSeries;
use okpitch::symmetry::{class_of, SymClass};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const SIGMA: f64 = 6.0;

pub struct Refined {
    pub n_sym: usize,
    pub rec: BifurcationRecord,
    pub w: ExtendedPoint,
    pub ell: NormalizationFunctional,
}

/// Detected crossing on the mode-`k` branch closest to `target`.
pub fn detected(k: usize, target: f64) -> BifurcationRecord {
    let b = continue_branch(SIGMA, k, (0.0, target + 20.0), 64, &StepPolicy::default()).expect("branch");
    let recs = detect_bifurcations(SIGMA, &b, Some(k)).expect("detect");
    recs.into_iter()
        .min_by(|a, b| (a.lambda0 - target).abs().total_cmp(&(b.lambda0 - target).abs()))
        .expect("a crossing")
}

pub fn refined(k: usize, n: usize, target: f64) -> Refined {
    let rec = detected(k, target);
    let (w0, ell) = ExtendedPoint::from_record(&rec, 64).expect("seed");
    let w = okpitch::extended::newton_extended(SIGMA, &w0, &ell, n).expect("extended Newton");
    Refined { n_sym: k, rec, w, ell }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random series of length `m` restricted to class `tag` of `n`, with
/// coefficients decaying like `1/k^2`.
pub fn random_in_class(r: &mut StdRng, m: usize, n: usize, tag: SymClass) -> CosineSeries {
    CosineSeries::new(
        (1..=m)
            .map(|k| {
                if class_of(k, n) == tag {
                    r.gen_range(-1.0..1.0) / (k * k) as f64
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

pub fn random_series(r: &mut StdRng, m: usize) -> CosineSeries {
    CosineSeries::new((1..=m).map(|k| r.gen_range(-1.0..1.0) / (k * k) as f64).collect())
}

/// Largest coefficient outside the classes in `allowed`, relative to the largest overall.
pub fn off_classes(u: &CosineSeries, n: usize, allowed: &[SymClass]) -> f64 {
    let scale = u.max_abs_coeff().max(1e-300);
    (1..=u.len())
        .filter(|&k| !allowed.contains(&class_of(k, n)))
        .map(|k| u.coeff(k).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Class-inclusion residuals of the operators on one random draw; all must vanish.
pub fn equivariance_residuals(r: &mut StdRng, n: usize) -> Vec<(String, f64)> {
    use SymClass::*;
    let m = 6 * n;
    let p = ModelParams::new(SIGMA, r.gen_range(10.0..300.0), Some(n)).unwrap();
    let u = random_in_class(r, m, n, A);
    let mut out = Vec::new();
    out.push(("F".into(), off_classes(&p.f_apply(&u), n, &[A])));
    out.push(("DlamF".into(), off_classes(&p.dlamf(&u), n, &[A])));
    for tag in SymClass::ALL {
        let v = random_in_class(r, m, n, tag);
        out.push((format!("DuF[{tag}]"), off_classes(&p.duf_apply(&u, &v), n, &[tag])));
        out.push((format!("DlamuF[{tag}]"), off_classes(&p.dlamuf_apply(&u, &v), n, &[tag])));
    }
    let ra = |r: &mut StdRng| random_in_class(r, m, n, A);
    let rb = |r: &mut StdRng| random_in_class(r, m, n, B);
    let rc = |r: &mut StdRng| random_in_class(r, m, n, C);
    let (a1, a2, b1, b2, c1, c2) = (ra(r), ra(r), rb(r), rb(r), rc(r), rc(r));
    let duu = |v: &CosineSeries, w: &CosineSeries| p.duuf_apply(&u, v, w);
    out.push(("Duu(i)".into(), off_classes(&duu(&a1, &a2), n, &[A])));
    out.push(("Duu(ii)".into(), off_classes(&duu(&a1.add(&b1), &a2.add(&b2)), n, &[A, B])));
    out.push(("Duu(iii)".into(), off_classes(&duu(&a1, &b1), n, &[B])));
    out.push(("Duu(iv)".into(), off_classes(&duu(&c1, &c2), n, &[A, B])));
    out.push(("Duu(v)".into(), off_classes(&duu(&a1.add(&b1), &c1), n, &[C])));
    out
}

/// Dense `D_w Fe` in scaled coordinates with rows up to `3N`.
pub fn full_band(sigma: f64, w: &ExtendedPoint, ell: &NormalizationFunctional) -> DMatrix<f64> {
    let (rows, cols, data) = assemble_scaled::<f64>(sigma, w, ell, 3 * w.n()).unwrap();
    DMatrix::from_row_slice(rows.len(), cols.len(), &data)
}

pub fn opnorm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}

/// Power iteration on `M^T M`; a lower estimate of `||M||_2`.
pub fn opnorm_power(m: &DMatrix<f64>, iters: usize) -> f64 {
    let mut x = nalgebra::DVector::from_fn(m.ncols(), |i, _| 1.0 + 0.37 * ((i * 7919) % 13) as f64);
    let mut s = 0.0;
    for _ in 0..iters {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        x /= nx;
        let y = m * &x;
        s = y.norm();
        x = m.transpose() * y;
    }
    s
}

/// Random perturbation of `w` with X-norm exactly `radius`; `u` stays in class A.
pub fn perturb(r: &mut StdRng, w: &ExtendedPoint, radius: f64) -> ExtendedPoint {
    let n = w.n();
    let du = random_in_class(r, n, w.n_sym, SymClass::A);
    let dv = random_series(r, n);
    let t = ExtTriple {
        r1: r.gen_range(-1.0..1.0),
        r2: du,
        r3: dv,
    };
    let s = radius / t.norm_x();
    ExtendedPoint::new(
        w.lambda + s * t.r1,
        w.n_sym,
        w.u.add(&t.r2.scale(s)),
        w.v.add(&t.r3.scale(s)),
    )
    .unwrap()
}

pub fn x_distance(a: &ExtendedPoint, b: &ExtendedPoint) -> f64 {
    ExtTriple {
        r1: a.lambda - b.lambda,
        r2: a.u.sub(&b.u),
        r3: a.v.sub(&b.v),
    }
    .norm_x()
}

/// Worst ratio of sampled operator differences to the Lipschitz bounds.
pub fn lipschitz_worst(
    sigma: f64,
    w: &ExtendedPoint,
    ell: &NormalizationFunctional,
    b: &okpitch::validation::LipschitzBundle,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let base = full_band(sigma, w, ell);
    let ds0 = dsigma_fe::<f64>(w);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let rad = b.d_w * r.gen_range(0.05..1.0);
        let w1 = perturb(&mut r, w, rad);
        let s1 = sigma + b.d_sigma * r.gen_range(-1.0..1.0);
        let d = &full_band(s1, &w1, ell) - &base;
        let dw = x_distance(&w1, w);
        let lhs = opnorm_power(&d, 40);
        let rhs = b.M1.hi() * dw + b.M2.hi() * (s1 - sigma).abs();
        worst = worst.max(lhs / rhs);
        let ds1 = dsigma_fe::<f64>(&w1);
        let dd = ExtTriple {
            r1: 0.0,
            r2: ds1.r2.sub(&ds0.r2),
            r3: ds1.r3.sub(&ds0.r3),
        };
        worst = worst.max(dd.norm_y() / (b.M3.hi() * dw));
    }
    worst
}

/// Random interval enclosure checks; returns the number of failures.
pub fn interval_enclosure_failures(count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut fails = 0;
    let draw = |r: &mut StdRng| {
        let e: i32 = r.gen_range(-8..8);
        let a = r.gen_range(-1.0..1.0) * 10f64.powi(e);
        let w = r.gen_range(0.0..1.0) * 10f64.powi(e - r.gen_range(0..6));
        (Interval::new(a, a + w).unwrap(), a, a + w)
    };
    for _ in 0..count {
        let (x, xl, xh) = draw(&mut r);
        let (y, yl, yh) = draw(&mut r);
        let sx = xl + (xh - xl) * r.gen_range(0.0..=1.0);
        let sy = yl + (yh - yl) * r.gen_range(0.0..=1.0);
        let sx = sx.clamp(xl, xh);
        let sy = sy.clamp(yl, yh);
        let mut ok = (x + y).contains(sx + sy) && (x - y).contains(sx - sy) && (x * y).contains(sx * sy);
        if let Ok(q) = x.try_div(y) {
            ok &= q.contains(sx / sy);
        }
        ok &= x.sqr().contains(sx * sx);
        if xl >= 0.0 {
            ok &= x.sqrt().map(|s| s.contains(sx.sqrt())).unwrap_or(false);
        }
        if !ok {
            fails += 1;
        }
    }
    fails
}

/// Observed order of a central difference, or `None` when the difference is
/// exact to rounding at both step sizes (operators linear in the direction).
pub fn fd_order(err_h: f64, err_h2: f64, scale: f64) -> Option<f64> {
    let floor = 1e-9 * scale.max(1.0);
    if err_h <= floor && err_h2 <= floor {
        None
    } else {
        Some((err_h / err_h2).log2())
    }
}

fn rel_err(a: &CosineSeries, b: &CosineSeries) -> (f64, f64) {
    let d = a.sub(b).norm_y();
    (d, b.norm_y())
}

/// Central-difference checks of the five derivative operators at a random
/// point: `(name, observed order or None when exact to rounding)`.
pub fn derivative_orders(seed: u64) -> Vec<(String, Option<f64>)> {
    let mut r = rng(seed);
    let m = 12;
    let u = random_series(&mut r, m);
    let v = random_series(&mut r, m);
    let w = random_series(&mut r, m);
    let z = random_series(&mut r, m);
    let lam = 120.0;
    let p = ModelParams::new(SIGMA, lam, None).unwrap();
    let at = |l: f64| p.with_lambda(l);
    let (h1, h2) = (1e-2, 5e-3);
    let mut out = Vec::new();
    let mut push = |name: &str, f: &dyn Fn(f64) -> CosineSeries, exact: &CosineSeries| {
        let (e1, s) = rel_err(&f(h1), exact);
        let (e2, _) = rel_err(&f(h2), exact);
        out.push((name.to_string(), fd_order(e1 / s.max(1e-300), e2 / s.max(1e-300), 1e-3)));
    };
    push(
        "D_uF",
        &|h| p.f_apply(&u.add(&v.scale(h))).sub(&p.f_apply(&u.sub(&v.scale(h)))).scale(0.5 / h),
        &p.duf_apply(&u, &v),
    );
    push(
        "D_lambdaF",
        &|h| at(lam + h).f_apply(&u).sub(&at(lam - h).f_apply(&u)).scale(0.5 / h),
        &p.dlamf(&u),
    );
    push(
        "D_lambdauF",
        &|h| {
            let c = |l: f64| {
                let q = at(l);
                q.f_apply(&u.add(&v.scale(h))).sub(&q.f_apply(&u.sub(&v.scale(h)))).scale(0.5 / h)
            };
            c(lam + h).sub(&c(lam - h)).scale(0.5 / h)
        },
        &p.dlamuf_apply(&u, &v),
    );
    push(
        "D_uuF",
        &|h| p.duf_apply(&u.add(&w.scale(h)), &v).sub(&p.duf_apply(&u.sub(&w.scale(h)), &v)).scale(0.5 / h),
        &p.duuf_apply(&u, &v, &w),
    );
    push(
        "D_uuuF",
        &|h| {
            p.duuf_apply(&u.add(&z.scale(h)), &v, &w)
                .sub(&p.duuf_apply(&u.sub(&z.scale(h)), &v, &w))
                .scale(0.5 / h)
        },
        &p.duuuf_apply(&v, &w, &z),
    );
    out
}
