//! Interval-verified bounds for a zero of the extended system and the
//! box inequalities that turn them into a branch certificate.
//!
//! All matrices work in the scaled coordinates of [`crate::extended`], where
//! Euclidean norms are the X and Y norms of the product spaces.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extended::{
    assemble_dwfe, assemble_dwfe_interval, dsigma_fe, dwfe_matvec, fe_apply, lift, ExtTriple, ExtendedError,
    ExtendedPoint, NormalizationFunctional, Slot,
};
use crate::interval::{iv_matmul_point_left, iv_poly_range, spectral_norm_bound, Interval, IntervalError, IntervalMatrix};
use crate::model::{fprime_of, fsecond_of, Nonlinearity};
use crate::spectral::{conv_full, CosineSeries};
use crate::symmetry::{classify_tests, kernel_tests, KernelTests, ScenarioRecord};

/// Upper bound of the constant in `||u||_inf <= C ||u||_X` for mean-zero `u`.
pub const CBAR1: f64 = 0.149072;

pub const CERT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("defect bound {defect:.3e} >= 1; increase N or tail_N")]
    DefectNotContractive { defect: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("extended Jacobian is numerically singular")]
    SingularExtendedJacobian,
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Extended(#[from] ExtendedError),
}

type Result<T> = std::result::Result<T, ValidationError>;

fn pt(x: f64) -> Interval {
    Interval::point(x)
}

fn div(a: Interval, b: Interval) -> Result<Interval> {
    Ok(a.try_div(b)?)
}

fn sum_abs(c: &[Interval]) -> Interval {
    let mut s = Interval::ZERO;
    for x in c {
        s += x.abs();
    }
    s
}

fn pi2() -> Interval {
    Interval::pi().sqr()
}

/// `||F(sigma*, w*)||` enclosure in the product Y norm.
pub fn residual_rho(sigma_star: f64, w_star: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<Interval> {
    Ok(fe_apply::<Interval>(sigma_star, w_star, ell)?.norm_y())
}

/// Sup-norm data of the starred point shared by the inverse and Lipschitz bounds.
#[derive(Debug, Clone, Copy)]
struct StarSup {
    u: Interval,
    v: Interval,
    fp_u: Interval,
    fpp_u_v: Interval,
}

impl StarSup {
    fn new(w: &ExtendedPoint) -> Self {
        let ui = lift::<Interval>(&w.u);
        let vi = lift::<Interval>(&w.v);
        let u = sum_abs(ui.coeffs());
        let v = sum_abs(vi.coeffs());
        let by_coeffs = sum_abs(&fprime_of(&ui)).hi();
        let by_range = iv_poly_range(&Nonlinearity::DF, Interval::hull_of(-u.hi(), u.hi())).mag();
        let fpp_u_v = sum_abs(&conv_full(&fsecond_of(&ui), &vi.to_full()));
        StarSup {
            u,
            v,
            fp_u: pt(by_coeffs.min(by_range)),
            fpp_u_v,
        }
    }
}

/// Output of the inverse bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseBound {
    #[serde(rename = "K")]
    pub k: Interval,
    pub defect: Interval,
    pub norm_b: Interval,
    pub e11: Interval,
    pub e21: Interval,
    pub tau: Interval,
    pub n_block: usize,
    pub tail_n: usize,
}

/// Spectral norm of a nonnegative 2x2 matrix `[[a, b], [c, d]]`.
fn norm_2x2(a: Interval, b: Interval, c: Interval, d: Interval) -> Interval {
    let p = a.sqr() + c.sqr();
    let r = b.sqr() + d.sqr();
    let q = a * b + c * d;
    let half = (p - r) * 0.5;
    let lam = (p + r) * 0.5 + (half.sqr() + q.sqr()).sqrt_nonneg();
    lam.max(Interval::ZERO).sqrt_nonneg()
}

/// `||D_w Fe(sigma*, w*)^{-1}|| <= K` by a Neumann argument.
///
/// The approximate inverse is the float inverse of the `N` block joined with
/// `-I` on the tail (the dominant bilaplacian is `-I` in scaled coordinates).
/// Rows up to `tail_n` (at least `3N`) catch every entry of the finite columns.
pub fn inverse_k(
    sigma_star: f64,
    w_star: &ExtendedPoint,
    ell: &NormalizationFunctional,
    tail_n: Option<usize>,
) -> Result<InverseBound> {
    let n = w_star.n();
    if ell.representer.degree() > n {
        return Err(ValidationError::BadInput(format!(
            "normalization representer has degree {} > N = {n}",
            ell.representer.degree()
        )));
    }
    let r = tail_n.unwrap_or(3 * n).max(3 * n);
    let (rows, s) = assemble_dwfe_interval(sigma_star, w_star, ell, r)?;
    let in_block = |sl: &Slot| match *sl {
        Slot::Lead => true,
        Slot::U(j) | Slot::V(j) => j <= n,
    };
    let fi: Vec<usize> = (0..rows.len()).filter(|&i| in_block(&rows[i])).collect();
    let ti: Vec<usize> = (0..rows.len()).filter(|&i| !in_block(&rows[i])).collect();
    let dim = s.cols();
    if fi.len() != dim {
        return Err(ValidationError::BadInput(format!("block has {} rows for {dim} columns", fi.len())));
    }
    let pick = |idx: &[usize]| -> Result<IntervalMatrix> {
        let mut data = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            for j in 0..dim {
                data.push(s.get(i, j));
            }
        }
        Ok(IntervalMatrix::new(idx.len(), dim, data)?)
    };
    let sff = pick(&fi)?;
    let stf = pick(&ti)?;
    let b = sff
        .mid()
        .try_inverse()
        .ok_or(ValidationError::SingularExtendedJacobian)?;
    let bs = iv_matmul_point_left(&b, &sff)?;
    let e11 = IntervalMatrix::identity(dim).sub(&bs)?.frobenius();
    let e21 = stf.frobenius();
    let norm_b = spectral_norm_bound(&IntervalMatrix::from_point(&b));

    let sup = StarSup::new(w_star);
    let lam = pt(w_star.lambda).abs();
    let m2 = Interval::kpi2(n + 1);
    let eps_u = div(lam * sup.fp_u + div(lam * sigma_star.abs(), m2)?, m2)?;
    let eps_uv = div(lam * sup.fpp_u_v, m2)?;
    let tau = norm_2x2(eps_u, Interval::ZERO, eps_uv, eps_u);
    let defect = norm_2x2(e11, norm_b * tau, e21, tau);
    if !(defect.hi() < 1.0) {
        return Err(ValidationError::DefectNotContractive { defect: defect.hi() });
    }
    let a_norm = norm_b.max(Interval::ONE);
    // Any number above the true norm is a valid K; keep the certified end.
    let k = pt(div(a_norm, Interval::ONE - defect)?.hi());
    Ok(InverseBound {
        k,
        defect,
        norm_b,
        e11,
        e21,
        tau,
        n_block: dim,
        tail_n: r,
    })
}

/// Lipschitz data on the ball `||w - w*|| <= d_w`, `|sigma - sigma*| <= d_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LipschitzBundle {
    pub c1: Interval,
    pub c2: Interval,
    pub c3: Interval,
    pub c4: Interval,
    pub c5: Interval,
    pub c6: Interval,
    pub c7: Interval,
    pub c8: Interval,
    pub c9: Interval,
    pub c10: Interval,
    pub c11: Interval,
    pub M1: Interval,
    pub M2: Interval,
    pub M3: Interval,
    pub M4: Interval,
    /// Bounds of `|f'|, |f''|, |f'''|` on the sup ball.
    pub f_max_ell: [Interval; 3],
    pub d_w: f64,
    pub d_sigma: f64,
    #[serde(rename = "Cbar1")]
    pub cbar1: f64,
}

pub fn lipschitz_bundle(sigma_star: f64, w_star: &ExtendedPoint, d_w: f64, d_sigma: f64) -> Result<LipschitzBundle> {
    if !(d_w >= 0.0 && d_sigma >= 0.0 && d_w.is_finite() && d_sigma.is_finite()) {
        return Err(ValidationError::BadInput(format!("radii must be nonnegative (d_w={d_w}, d_sigma={d_sigma})")));
    }
    let sup = StarSup::new(w_star);
    let cb = pt(CBAR1);
    let (dw, ds) = (pt(d_w), pt(d_sigma));
    let r = sup.u + cb * dw;
    let ball = Interval::hull_of(-r.hi(), r.hi());
    let fm = |c: &[f64]| pt(iv_poly_range(c, ball).mag());
    let f1 = fm(&Nonlinearity::DF);
    let f2 = fm(&Nonlinearity::D2F);
    let f3 = fm(&Nonlinearity::D3F);

    let p2 = pi2();
    let p4 = p2.sqr();
    let sig = pt(sigma_star).abs();
    let lam = pt(w_star.lambda).abs();
    let lam_r = lam + dw;
    let uy = lift::<Interval>(&w_star.u).norm_y();
    let vy = lift::<Interval>(&w_star.v).norm_y();
    let fpp_sup = sup.u * 6.0;

    let c1 = div(p2 * f1 + sig + ds, p4)?;
    let c2 = uy;
    let c3 = div(p2 * sup.fp_u + sig + ds, p4)?;
    let c4 = div(cb * f2 * lam_r, p2)?;
    let c5 = div(lam, p4)?;
    let c6 = div(f2 * sup.v, p2)?;
    let c7 = c1;
    let c8 = vy;
    let c9 = div(sup.fpp_u_v, p2)?;
    let c10 = div(cb * f3 * lam_r * (sup.v + cb * dw), p2)?;
    let c11 = div(cb * fpp_sup * lam_r, p2)?;

    let s2 = Interval::sqrt2();
    let a = c3.sqr() + (c1 + c4).sqr();
    let b = (c3 + c9).sqr() + (c4 + c6 + c10).sqr() + (c7 + c11).sqr();
    let m1 = (a.max(b) * 2.0).sqrt_nonneg();
    let m2 = s2 * (c2 + c5).max(c5 + c8);
    let m3 = s2 * div(lam_r, p4)?.max((uy.sqr() + vy.sqr()).sqrt_nonneg());
    Ok(LipschitzBundle {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c11,
        M1: m1,
        M2: m2,
        M3: m3,
        M4: Interval::ZERO,
        f_max_ell: [f1, f2, f3],
        d_w,
        d_sigma,
        cbar1: CBAR1,
    })
}

/// Slant direction of the box and the defect it leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Slant {
    pub w_slant: ExtTriple,
    pub norm_w_slant: Interval,
    pub eta: Interval,
    /// `eta` for the trivial choice `w_slant = 0`.
    pub eta_zero: Interval,
}

fn lift_triple(t: &ExtTriple) -> ExtTriple<Interval> {
    ExtTriple {
        r1: pt(t.r1),
        r2: lift(&t.r2),
        r3: lift(&t.r3),
    }
}

pub fn eta_for(sigma_star: f64, w_star: &ExtendedPoint, ell: &NormalizationFunctional, slant: &ExtTriple) -> Result<Interval> {
    let ds = dsigma_fe::<Interval>(w_star);
    let dw = dwfe_matvec(sigma_star, w_star, ell, &lift_triple(slant))?;
    let t = ExtTriple {
        r1: ds.r1 + dw.r1,
        r2: ds.r2.add(&dw.r2),
        r3: ds.r3.add(&dw.r3),
    };
    Ok(t.norm_y())
}

pub fn slant_and_eta(sigma_star: f64, w_star: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<Slant> {
    let n = w_star.n();
    let lay = w_star.layout();
    let j = assemble_dwfe(sigma_star, w_star, ell)?;
    let rhs = lay.residual_scaled(&dsigma_fe::<f64>(w_star), n);
    let x = j.lu().solve(&(-rhs)).ok_or(ValidationError::SingularExtendedJacobian)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ValidationError::SingularExtendedJacobian);
    }
    let w_slant = lay.from_scaled(&x);
    let norm_w_slant = lift_triple(&w_slant).norm_x();
    let eta = eta_for(sigma_star, w_star, ell, &w_slant)?;
    let zero = ExtTriple {
        r1: 0.0,
        r2: CosineSeries::zeros(n),
        r3: CosineSeries::zeros(n),
    };
    let eta_zero = eta_for(sigma_star, w_star, ell, &zero)?;
    Ok(Slant {
        w_slant,
        norm_w_slant,
        eta,
        eta_zero,
    })
}

/// Named outcomes of the box inequalities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxChecks {
    pub eq23_contraction: bool,
    pub eq23_radius: bool,
    pub eq24: bool,
    pub eq25: bool,
    pub eq26: bool,
}

impl BoxChecks {
    pub fn all(&self) -> bool {
        self.eq23_contraction && self.eq23_radius && self.eq24 && self.eq25 && self.eq26
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxInputs {
    pub rho: Interval,
    pub k: Interval,
    pub m1: Interval,
    pub m2: Interval,
    pub m3: Interval,
    pub m4: Interval,
    pub eta: Interval,
    pub norm_w_slant: Interval,
    pub d_w: f64,
    pub d_sigma: f64,
}

impl BoxInputs {
    pub fn from_parts(rho: Interval, k: Interval, b: &LipschitzBundle, eta: Interval, norm_w_slant: Interval) -> Self {
        BoxInputs {
            rho,
            k,
            m1: b.M1,
            m2: b.M2,
            m3: b.M3,
            m4: b.M4,
            eta,
            norm_w_slant,
            d_w: b.d_w,
            d_sigma: b.d_sigma,
        }
    }

    fn eq23(&self) -> (bool, bool) {
        let k = self.k;
        let c = (k.sqr() * self.rho * self.m1 * 4.0).hi() < 1.0;
        let r = (k * self.rho * 2.0).hi() < self.d_w;
        (c, r)
    }

    fn eq26_lhs(&self, ds: Interval) -> Interval {
        let w = self.norm_w_slant;
        let quad = self.m1 * w.sqr() + (self.m2 + self.m3) * w + self.m4;
        self.k * 2.0 * (self.rho + self.eta * ds + quad * ds.sqr())
    }

    fn eq25_lhs(&self, ds: Interval, dw: Interval) -> Interval {
        self.k * 2.0 * (self.m1 * dw + (self.m1 * self.norm_w_slant + self.m2) * ds)
    }

    /// Checks at a candidate pair; computed sides compare with interval strictness.
    pub fn checks(&self, delta_sigma: f64, delta_w: f64) -> BoxChecks {
        let (c, r) = self.eq23();
        let (ds, dw) = (pt(delta_sigma), pt(delta_w));
        let eq24 = delta_sigma > 0.0
            && delta_sigma <= self.d_sigma
            && delta_w > 0.0
            && delta_w <= self.d_w
            && (ds * self.norm_w_slant + dw).hi() < self.d_w;
        BoxChecks {
            eq23_contraction: c,
            eq23_radius: r,
            eq24,
            eq25: self.eq25_lhs(ds, dw).hi() < 1.0,
            eq26: self.eq26_lhs(ds).hi() < delta_w,
        }
    }

    /// Admissible `delta_w` range at fixed `delta_sigma`, rounded inward.
    fn dw_window(&self, delta_sigma: f64) -> Result<(f64, f64)> {
        let ds = pt(delta_sigma);
        let lo = self.eq26_lhs(ds).hi();
        let u24 = (pt(self.d_w) - ds * self.norm_w_slant).lo();
        let num = Interval::ONE - self.k * 2.0 * (self.m1 * self.norm_w_slant + self.m2) * ds;
        let u25 = div(num, self.k * 2.0 * self.m1)?.lo();
        Ok((lo, u24.min(u25).min(self.d_w)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxResult {
    pub delta_sigma: f64,
    pub delta_w: f64,
    pub checks: BoxChecks,
}

/// Largest grid `delta_sigma` with a feasible `delta_w`; the grid has
/// `per_decade` log-spaced points from `d_sigma` down to `ds_min`.
pub fn branch_box(inp: &BoxInputs, per_decade: usize, ds_min: f64) -> Result<BoxResult> {
    let (c, r) = inp.eq23();
    if !(c && r) {
        return Err(ValidationError::Infeasible(format!(
            "4K^2 rho M1 < 1: {c}, 2K rho < d_w: {r} (K={:.4e}, rho={:.4e}, M1={:.4e}, d_w={:.4e})",
            inp.k.hi(),
            inp.rho.hi(),
            inp.m1.hi(),
            inp.d_w
        )));
    }
    if !(inp.d_sigma > 0.0 && ds_min > 0.0 && per_decade > 0) {
        return Err(ValidationError::BadInput("grid needs d_sigma, ds_min and per_decade positive".into()));
    }
    let decades = (inp.d_sigma / ds_min).log10().max(0.0);
    let steps = (decades * per_decade as f64).ceil() as usize;
    for i in 0..=steps {
        let ds = inp.d_sigma * 10f64.powf(-(i as f64) / per_decade as f64);
        let (lo, hi) = inp.dw_window(ds)?;
        if !(lo < hi) {
            continue;
        }
        let dw = 0.5 * (lo + hi);
        let checks = inp.checks(ds, dw);
        if checks.all() {
            return Ok(BoxResult {
                delta_sigma: ds,
                delta_w: dw,
                checks,
            });
        }
    }
    Err(ValidationError::Infeasible(format!(
        "no delta_sigma in [{ds_min:.1e}, {:.3e}] admits a delta_w",
        inp.d_sigma
    )))
}

/// Kernel tests widened by the uncertainty `|v - v*| <= Cbar1 delta_w`.
pub fn widened_kernel_tests(v: &CosineSeries, n: usize, delta_w: f64) -> KernelTests {
    let t = kernel_tests(&lift::<Interval>(v), n);
    let e = (pt(CBAR1) * pt(delta_w)).hi();
    let one = Interval::hull_of(-e, e);
    let two = one * 2.0;
    KernelTests {
        at_half_period: t.at_half_period + one,
        sum_ends: t.sum_ends + two,
        diff_ends: t.diff_ends + two,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertConfig {
    /// Radius of the Lipschitz ball in w; `None` picks `1/(2 K M1)`.
    pub d_w: Option<f64>,
    /// Radius in sigma; `None` means `d_w`.
    pub d_sigma: Option<f64>,
    pub tail_n: Option<usize>,
    /// Residual stage fails when `|l(v*) - 1|` exceeds this.
    pub normalization_tol: f64,
    pub grid_per_decade: usize,
    pub delta_sigma_min: f64,
    pub record_timings: bool,
}

impl Default for CertConfig {
    fn default() -> Self {
        CertConfig {
            d_w: None,
            d_sigma: None,
            tail_n: None,
            normalization_tol: 1e-8,
            grid_per_decade: 40,
            delta_sigma_min: 1e-12,
            record_timings: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Residual,
    Inverse,
    Lipschitz,
    Slant,
    Box,
    Scenario,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    #[serde(flatten)]
    pub boxes: BoxChecks,
    pub normalization_residual: bool,
    pub defect_below_one: bool,
    pub scenario_rigorous: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub residual_s: f64,
    pub inverse_s: f64,
    pub lipschitz_s: f64,
    pub slant_s: f64,
    pub box_s: f64,
    pub scenario_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCertificate {
    pub schema: u32,
    pub valid: bool,
    pub failure: Option<StageFailure>,
    pub sigma_star: Interval,
    pub n: usize,
    pub w_star: ExtendedPoint,
    pub ell: NormalizationFunctional,
    pub config: CertConfig,
    pub rho: Option<Interval>,
    pub inverse: Option<InverseBound>,
    #[serde(rename = "K")]
    pub k: Option<Interval>,
    pub bundle: Option<LipschitzBundle>,
    pub w_slant: Option<ExtendedPoint>,
    pub norm_w_slant: Option<Interval>,
    pub eta: Option<Interval>,
    pub eta_zero_slant: Option<Interval>,
    pub delta_sigma: Option<Interval>,
    pub delta_w: Option<Interval>,
    pub checks: Checks,
    pub scenario: Option<ScenarioRecord>,
    pub timings: Option<Timings>,
}

impl ValidationCertificate {
    fn fail(&mut self, stage: Stage, message: impl Into<String>) {
        self.valid = false;
        self.failure = Some(StageFailure {
            stage,
            message: message.into(),
        });
    }
}

fn default_dw(sigma: f64, w: &ExtendedPoint, k: Interval) -> Result<f64> {
    let mut d = 0.0;
    for _ in 0..6 {
        let b = lipschitz_bundle(sigma, w, d, d)?;
        d = div(Interval::ONE, k * b.M1 * 2.0)?.lo();
    }
    Ok(d)
}

/// Runs every stage in order; a failing stage stops the run and is named in
/// `failure`. Hard input errors are returned as `Err`.
pub fn make_certificate(
    sigma_star: f64,
    w_star: &ExtendedPoint,
    ell: &NormalizationFunctional,
    config: &CertConfig,
) -> Result<ValidationCertificate> {
    if !(sigma_star > 0.0 && sigma_star.is_finite()) {
        return Err(ValidationError::BadInput(format!("sigma* = {sigma_star}")));
    }
    if w_star.n() == 0 {
        return Err(ValidationError::BadInput("empty Galerkin point".into()));
    }
    let mut cert = ValidationCertificate {
        schema: CERT_SCHEMA,
        valid: false,
        failure: None,
        sigma_star: pt(sigma_star),
        n: w_star.n(),
        w_star: w_star.clone(),
        ell: ell.clone(),
        config: config.clone(),
        rho: None,
        inverse: None,
        k: None,
        bundle: None,
        w_slant: None,
        norm_w_slant: None,
        eta: None,
        eta_zero_slant: None,
        delta_sigma: None,
        delta_w: None,
        checks: Checks::default(),
        scenario: None,
        timings: None,
    };
    let mut tm = Timings::default();
    let finish = |mut c: ValidationCertificate, tm: Timings| {
        if config.record_timings {
            c.timings = Some(tm);
        }
        c
    };

    let t0 = Instant::now();
    let res = fe_apply::<Interval>(sigma_star, w_star, ell)?;
    let rho = res.norm_y();
    tm.residual_s = t0.elapsed().as_secs_f64();
    cert.rho = Some(rho);
    // The normalization equation is finite, so a large first component means
    // a wrong point rather than a coarse truncation.
    cert.checks.normalization_residual = res.r1.mag() <= config.normalization_tol && rho.hi().is_finite();
    if !cert.checks.normalization_residual {
        cert.fail(
            Stage::Residual,
            format!(
                "|l(v) - 1| <= {:.3e} exceeds {:.1e} (rho <= {:.3e})",
                res.r1.mag(),
                config.normalization_tol,
                rho.hi()
            ),
        );
        return Ok(finish(cert, tm));
    }

    let t0 = Instant::now();
    let inv = inverse_k(sigma_star, w_star, ell, config.tail_n);
    tm.inverse_s = t0.elapsed().as_secs_f64();
    let inv = match inv {
        Ok(v) => v,
        Err(e @ (ValidationError::DefectNotContractive { .. } | ValidationError::SingularExtendedJacobian)) => {
            cert.fail(Stage::Inverse, e.to_string());
            return Ok(finish(cert, tm));
        }
        Err(e) => return Err(e),
    };
    cert.checks.defect_below_one = true;
    let k = inv.k;
    cert.k = Some(k);
    cert.inverse = Some(inv);

    let t0 = Instant::now();
    let d_w = match config.d_w {
        Some(d) => d,
        None => default_dw(sigma_star, w_star, k)?,
    };
    let d_sigma = config.d_sigma.unwrap_or(d_w);
    if !(d_w > 0.0 && d_sigma > 0.0) {
        cert.fail(Stage::Lipschitz, format!("radii must be positive (d_w={d_w:.3e}, d_sigma={d_sigma:.3e})"));
        return Ok(finish(cert, tm));
    }
    let bundle = lipschitz_bundle(sigma_star, w_star, d_w, d_sigma)?;
    tm.lipschitz_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let slant = slant_and_eta(sigma_star, w_star, ell);
    tm.slant_s = t0.elapsed().as_secs_f64();
    let slant = match slant {
        Ok(s) => s,
        Err(e @ ValidationError::SingularExtendedJacobian) => {
            cert.bundle = Some(bundle);
            cert.fail(Stage::Slant, e.to_string());
            return Ok(finish(cert, tm));
        }
        Err(e) => return Err(e),
    };
    cert.w_slant = Some(ExtendedPoint::new(
        slant.w_slant.r1,
        w_star.n_sym,
        slant.w_slant.r2.clone(),
        slant.w_slant.r3.clone(),
    )?);
    cert.norm_w_slant = Some(slant.norm_w_slant);
    cert.eta = Some(slant.eta);
    cert.eta_zero_slant = Some(slant.eta_zero);

    let t0 = Instant::now();
    let inp = BoxInputs::from_parts(rho, k, &bundle, slant.eta, slant.norm_w_slant);
    cert.bundle = Some(bundle);
    let bx = branch_box(&inp, config.grid_per_decade, config.delta_sigma_min);
    tm.box_s = t0.elapsed().as_secs_f64();
    let bx = match bx {
        Ok(b) => b,
        Err(e @ ValidationError::Infeasible(_)) => {
            let (c, r) = inp.eq23();
            cert.checks.boxes.eq23_contraction = c;
            cert.checks.boxes.eq23_radius = r;
            cert.fail(Stage::Box, e.to_string());
            return Ok(finish(cert, tm));
        }
        Err(e) => return Err(e),
    };
    cert.checks.boxes = bx.checks;
    cert.delta_sigma = Some(pt(bx.delta_sigma));
    cert.delta_w = Some(pt(bx.delta_w));

    let t0 = Instant::now();
    let tests = widened_kernel_tests(&w_star.v, w_star.n_sym, bx.delta_w);
    let sc = classify_tests(&tests, w_star.n_sym);
    tm.scenario_s = t0.elapsed().as_secs_f64();
    match sc {
        Ok(s) => {
            cert.scenario = Some(s);
            cert.checks.scenario_rigorous = true;
        }
        Err(e) => {
            cert.fail(Stage::Scenario, e.to_string());
            return Ok(finish(cert, tm));
        }
    }
    cert.valid = cert.checks.boxes.all() && cert.checks.scenario_rigorous;
    if !cert.valid {
        cert.fail(Stage::Box, "box inequalities not all verified");
    }
    Ok(finish(cert, tm))
}

/// Largest singular value of a float matrix, for comparisons in tests.
pub fn float_opnorm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max)
}
