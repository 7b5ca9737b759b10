//! Floating-point Galerkin equilibria: Newton, continuation in lambda,
//! eigenvalue-crossing detection and pitchfork shape diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Scalar;
use crate::model::{galerkin_duf_scaled, galerkin_symmetric, primary_lambda, ModelError, ModelParams};
use crate::spectral::CosineSeries;
use crate::symmetry::{class_mass, class_modes, classify_kernel, project_class, ScenarioRecord, SymClass};

pub const NEWTON_TOL: f64 = 1e-13;
pub const MAX_NEWTON: usize = 50;
pub const DETECT_TOL: f64 = 1e-10;
pub const MAX_BISECTION: usize = 50;
pub const SEED_AMPLITUDE: f64 = 1e-2;
pub const CLASS_MASS_MIN: f64 = 0.99;
const PIVOT_MIN: f64 = 1e-14;
const BLOCK_COND_MAX: f64 = 1e12;
/// Newton stops at the rounding floor when the step is this small relative to `u`.
const STAGNATION: f64 = 1e-14;
const NEAREST: usize = 4;
/// Relative size of `psi*(D_uu F[phi, phi])` above which a crossing is not a pitchfork.
const QUADRATIC_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EquilibriaError {
    #[error("Newton did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("Galerkin Jacobian is numerically singular (pivot ratio {0:.3e})")]
    SingularJacobian(f64),
    #[error("class-A block is nearly singular (condition {0:.3e})")]
    NearSingularBlock(f64),
    #[error("nondegeneracy pairing vanishes numerically ({value:.3e} against scale {scale:.3e})")]
    Degenerate { value: f64, scale: f64 },
    #[error("mode {k} has no primary bifurcation at sigma = {sigma}")]
    NoPrimary { k: usize, sigma: f64 },
    #[error("continuation stopped after {} samples: {source}", samples.len())]
    ContinuationFailure {
        samples: Vec<BranchSample>,
        source: Box<EquilibriaError>,
    },
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, EquilibriaError>;

fn kpi2(k: usize) -> f64 {
    <f64 as Scalar>::kpi2(k)
}

fn inv_kpi2(k: usize) -> f64 {
    <f64 as Scalar>::inv_kpi2(k)
}

/// Wave numbers carrying Newton unknowns: class A of `n_sym`, or all of `1..=n`.
pub fn newton_modes(n_sym: Option<usize>, n: usize) -> Vec<usize> {
    match n_sym {
        Some(m) => class_modes(m, SymClass::A, n),
        None => (1..=n).collect(),
    }
}

/// `||P_N F(p, u)||_Y`.
pub fn galerkin_residual(p: &ModelParams, u: &CosineSeries, n: usize) -> f64 {
    p.f_apply(u).project_pn(n).norm_y()
}

fn solve_checked(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let lu = m.lu();
    let d = lu.u().diagonal();
    let big = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let small = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let ratio = if big > 0.0 { small / big } else { 0.0 };
    if !(ratio > PIVOT_MIN) {
        return Err(EquilibriaError::SingularJacobian(ratio));
    }
    lu.solve(&rhs).ok_or(EquilibriaError::SingularJacobian(ratio))
}

/// Newton on the Galerkin system; returns the solution and the iteration count.
pub fn newton_with_count(p: &ModelParams, u_init: &CosineSeries, n: usize) -> Result<(CosineSeries, usize)> {
    if u_init.degree() > n {
        return Err(EquilibriaError::BadInput(format!(
            "initial guess has degree {} > N = {n}",
            u_init.degree()
        )));
    }
    let modes = newton_modes(p.n_sym, n);
    let mut u = CosineSeries::zeros(n);
    for &k in &modes {
        u.set(k, u_init.coeff(k));
    }
    let mut res = f64::INFINITY;
    for it in 0..=MAX_NEWTON {
        let r = p.f_apply(&u).project_pn(n);
        res = r.norm_y();
        if res <= NEWTON_TOL {
            return Ok((u, it));
        }
        if it == MAX_NEWTON {
            break;
        }
        let s = galerkin_duf_scaled(p, &u, &modes, &modes);
        let rhs = DVector::from_iterator(modes.len(), modes.iter().map(|&j| -r.coeff(j) * inv_kpi2(j)));
        let dx = solve_checked(s, rhs)?;
        // Deflation of u = 0: Newton on (1 + 1/|u|^2) F rescales the step by tau.
        let uu = u.inner_l2(&u);
        let tau = if uu > 0.0 {
            let ud: f64 = modes.iter().enumerate().map(|(i, &k)| u.coeff(k) * dx[i] * inv_kpi2(k)).sum::<f64>() * 0.5;
            let m = 1.0 + 1.0 / uu;
            1.0 / (1.0 + 2.0 * ud / (uu * uu * m))
        } else {
            1.0
        };
        let mut step = 0.0;
        for (i, &k) in modes.iter().enumerate() {
            let d = tau * dx[i] * inv_kpi2(k);
            step += (tau * dx[i]).powi(2);
            u.set(k, u.coeff(k) + d);
        }
        let step = (0.5 * step).sqrt();
        if step <= STAGNATION * u.norm_x().max(1.0) && res <= 1e3 * NEWTON_TOL * u.norm_x().max(1.0) {
            let r = galerkin_residual(p, &u, n);
            if r <= res {
                return Ok((u, it + 1));
            }
        }
    }
    Err(EquilibriaError::NoConvergence {
        iters: MAX_NEWTON,
        residual: res,
    })
}

/// Galerkin Newton solve for `F(sigma, lambda, u) = 0` on modes `1..=n`,
/// restricted to class A when `p.n_sym` is set. A nonzero start never
/// converges to the trivial solution: that root is deflated.
pub fn newton_equilibrium(p: &ModelParams, u_init: &CosineSeries, n: usize) -> Result<CosineSeries> {
    newton_with_count(p, u_init, n).map(|(u, _)| u)
}

/// Eigen-decomposition of the symmetric form of `D_u F` on modes `1..=n`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `i` holds the raw cosine coefficients of eigenvector `i`.
    pub vectors: DMatrix<f64>,
    pub classes: Vec<Option<SymClass>>,
}

impl Spectrum {
    /// Bucket of eigenvector `i`: class index, or 3 when no class applies.
    pub fn bucket(&self, i: usize) -> usize {
        self.classes[i].map_or(3, SymClass::index)
    }

    /// Positive eigenvalue counts per bucket.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for (i, &v) in self.values.iter().enumerate() {
            if v > 0.0 {
                c[self.bucket(i)] += 1;
            }
        }
        c
    }

    /// Index of the eigenvalue in `bucket` closest to zero.
    pub fn nearest_in(&self, bucket: usize) -> Option<usize> {
        (0..self.values.len())
            .filter(|&i| self.bucket(i) == bucket)
            .min_by(|&a, &b| self.values[a].abs().total_cmp(&self.values[b].abs()))
    }

    pub fn stability_index(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn smallest(&self, m: usize) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        v.truncate(m);
        v
    }
}

pub fn galerkin_spectrum(p: &ModelParams, u: &CosineSeries, n: usize) -> Spectrum {
    let modes: Vec<usize> = (1..=n).collect();
    let h = galerkin_symmetric(p, u, &modes);
    let eig = SymmetricEigen::new(h);
    let classes = (0..n)
        .map(|i| {
            let m = p.n_sym?;
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let mass = class_mass(&col, m);
            SymClass::ALL.into_iter().find(|c| mass[c.index()] >= CLASS_MASS_MIN)
        })
        .collect();
    Spectrum {
        values: eig.eigenvalues.iter().copied().collect(),
        vectors: eig.eigenvectors,
        classes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub lambda: f64,
    pub u: CosineSeries,
    #[serde(rename = "normX")]
    pub norm_x: f64,
    pub smallest_eigs: Vec<f64>,
    pub stability_index: usize,
}

impl BranchSample {
    pub fn at(p: &ModelParams, u: CosineSeries) -> Self {
        let s = galerkin_spectrum(p, &u, u.len());
        BranchSample {
            lambda: p.lambda,
            norm_x: u.norm_x(),
            smallest_eigs: s.smallest(NEAREST),
            stability_index: s.stability_index(),
            u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub grow: f64,
    /// Steps that converge in at most this many iterations grow `h`.
    pub fast_iters: usize,
    /// Largest accepted corrector size relative to `||u||_X`.
    pub max_correction: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy {
            h_init: 0.25,
            h_min: 1e-7,
            h_max: 4.0,
            grow: 1.5,
            fast_iters: 4,
            max_correction: 0.2,
        }
    }
}

/// Seed for the primary branch of mode `k`: `lambda` with `u = eps cos(k pi x)`
/// solving the mode-`k` equation up to higher harmonics.
pub fn primary_seed(sigma: f64, k: usize, eps: f64) -> Option<f64> {
    primary_lambda(sigma, k)?;
    let k2 = kpi2(k);
    let d = k2 * (1.0 - 0.75 * eps * eps) - sigma;
    (d > 0.0).then(|| k2 * k2 / d)
}

/// Natural-parameter continuation of the primary branch of mode `k` on
/// `lambda_range`, with `n_sym = k` and `n` Galerkin modes.
pub fn continue_branch(
    sigma: f64,
    k: usize,
    lambda_range: (f64, f64),
    n: usize,
    policy: &StepPolicy,
) -> Result<Vec<BranchSample>> {
    if k == 0 || n < k {
        return Err(EquilibriaError::BadInput(format!("need 1 <= k <= N (k = {k}, N = {n})")));
    }
    let (lo, hi) = lambda_range;
    let eps = SEED_AMPLITUDE;
    let lam0 = primary_seed(sigma, k, eps).ok_or(EquilibriaError::NoPrimary { k, sigma })?;
    let mut samples: Vec<BranchSample> = Vec::new();
    if lam0 > hi {
        return Ok(samples);
    }
    let fail = |samples: &Vec<BranchSample>, e: EquilibriaError| EquilibriaError::ContinuationFailure {
        samples: samples.iter().filter(|s| s.lambda >= lo).cloned().collect(),
        source: Box::new(e),
    };
    let p = ModelParams::new(sigma, lam0, Some(k))?;
    let u0 = newton_equilibrium(&p, &CosineSeries::mode(k, eps).resized(n), n).map_err(|e| fail(&samples, e))?;
    if u0.norm_l2() < 0.25 * eps / 2f64.sqrt() {
        return Err(fail(&samples, EquilibriaError::BadInput("seed collapsed onto the trivial branch".into())));
    }
    samples.push(BranchSample::at(&p, u0.clone()));
    let mut prev: Option<(f64, CosineSeries)> = None;
    let mut cur = (lam0, u0);
    let mut h = policy.h_init;
    let mut last_err = None;
    while cur.0 < hi {
        let mut lam = cur.0 + h;
        if lam >= hi - 1e-12 * hi.abs().max(1.0) {
            lam = hi;
        }
        let step = lam - cur.0;
        let pred = match &prev {
            Some((lp, up)) => cur.1.add(&cur.1.sub(up).scale(step / (cur.0 - lp))),
            None => cur.1.clone(),
        };
        let pl = p.with_lambda(lam);
        let out = newton_with_count(&pl, &pred, n);
        let accepted = match out {
            Ok((u, it)) => {
                let corr = u.sub(&pred).norm_x();
                let collapsed = u.norm_l2() < 0.25 * eps / 2f64.sqrt();
                if corr <= policy.max_correction * cur.1.norm_x() && !collapsed {
                    Some((u, it))
                } else {
                    None
                }
            }
            Err(e @ (EquilibriaError::NoConvergence { .. } | EquilibriaError::SingularJacobian(_))) => {
                last_err = Some(e);
                None
            }
            Err(e) => return Err(fail(&samples, e)),
        };
        match accepted {
            Some((u, it)) => {
                samples.push(BranchSample::at(&pl, u.clone()));
                prev = Some(std::mem::replace(&mut cur, (lam, u)));
                if it <= policy.fast_iters {
                    h = (h * policy.grow).min(policy.h_max);
                }
            }
            None => {
                h *= 0.5;
                if h < policy.h_min {
                    let e = last_err.take().unwrap_or(EquilibriaError::NoConvergence {
                        iters: MAX_NEWTON,
                        residual: f64::NAN,
                    });
                    return Err(fail(&samples, e));
                }
            }
        }
    }
    samples.retain(|s| s.lambda >= lo);
    Ok(samples)
}

/// Samples of the trivial branch `u = 0` on `[lo, hi]` with spacing `step`.
pub fn trivial_branch(sigma: f64, lambda_range: (f64, f64), step: f64, n: usize) -> Result<Vec<BranchSample>> {
    let (lo, hi) = lambda_range;
    if !(step > 0.0) || !(hi >= lo) {
        return Err(EquilibriaError::BadInput("bad trivial-branch range".into()));
    }
    let m = ((hi - lo) / step).ceil() as usize;
    (0..=m)
        .map(|i| {
            let lam = (lo + i as f64 * step).min(hi);
            let p = ModelParams::new(sigma, lam, None)?;
            Ok(BranchSample::at(&p, CosineSeries::zeros(n)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    /// Crossing on the trivial branch.
    Primary,
    /// Crossing of a class B or C eigenvalue on a symmetric branch.
    SymmetryBreaking,
    /// Crossing on a branch without symmetry information.
    Unclassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRecord {
    pub sigma: f64,
    pub lambda0: f64,
    pub u0: CosineSeries,
    /// Kernel, unit L2 norm, largest coefficient positive.
    pub phi0: CosineSeries,
    pub n_sym: Option<usize>,
    pub kind: BifurcationKind,
    pub kernel_class: Option<SymClass>,
    pub scenario: Option<ScenarioRecord>,
    pub note: Option<String>,
    /// Crossing eigenvalue of the symmetric form at `(lambda0, u0)`.
    pub eigenvalue: f64,
    pub bracket: [f64; 2],
    pub resolved: bool,
    pub shape_rho: Option<f64>,
    pub nondegeneracy_value: Option<f64>,
}

struct State {
    lambda: f64,
    u: CosineSeries,
    spec: Spectrum,
}

impl State {
    fn new(p: &ModelParams, u: CosineSeries) -> Self {
        let spec = galerkin_spectrum(p, &u, u.len());
        State {
            lambda: p.lambda,
            u,
            spec,
        }
    }

    fn mu(&self, bucket: usize) -> f64 {
        self.spec.nearest_in(bucket).map_or(f64::NAN, |i| self.spec.values[i])
    }
}

fn solve_at(base: &ModelParams, lam: f64, a: &State, b: &State) -> Result<State> {
    let t = (lam - a.lambda) / (b.lambda - a.lambda);
    let guess = a.u.add(&b.u.sub(&a.u).scale(t));
    let p = base.with_lambda(lam);
    let u = if guess.max_abs_coeff() == 0.0 {
        guess
    } else {
        newton_equilibrium(&p, &guess, a.u.len())?
    };
    Ok(State::new(&p, u))
}

/// Safeguarded secant/bisection for the zero of the bucket's eigenvalue.
fn refine(base: &ModelParams, a0: &State, b0: &State, bucket: usize) -> Result<(State, [f64; 2], bool)> {
    let c0 = a0.spec.counts()[bucket];
    let mut a = solve_at(base, a0.lambda, a0, b0)?;
    let mut b = solve_at(base, b0.lambda, a0, b0)?;
    let mut best: Option<State> = None;
    for it in 0..MAX_BISECTION {
        let (ma, mb) = (a.mu(bucket), b.mu(bucket));
        let w = b.lambda - a.lambda;
        let lam = if it % 3 != 2 && ma * mb < 0.0 {
            let s = a.lambda - ma * w / (mb - ma);
            s.clamp(a.lambda + 0.02 * w, b.lambda - 0.02 * w)
        } else {
            a.lambda + 0.5 * w
        };
        if !(lam > a.lambda && lam < b.lambda) {
            break;
        }
        let m = solve_at(base, lam, &a, &b)?;
        let mm = m.mu(bucket);
        if mm.abs() <= DETECT_TOL {
            return Ok((m, [a.lambda, b.lambda], true));
        }
        let keep = best.as_ref().is_none_or(|s| mm.abs() < s.mu(bucket).abs());
        let go_right = m.spec.counts()[bucket] == c0;
        let snapshot = if keep {
            Some(State {
                lambda: m.lambda,
                u: m.u.clone(),
                spec: m.spec.clone(),
            })
        } else {
            None
        };
        if go_right {
            a = m;
        } else {
            b = m;
        }
        if let Some(s) = snapshot {
            best = Some(s);
        }
    }
    let bracket = [a.lambda, b.lambda];
    let s = best.unwrap_or(if a.mu(bucket).abs() < b.mu(bucket).abs() { a } else { b });
    Ok((s, bracket, false))
}

/// Kernel of the bucket's nearest-zero eigenvalue: projected onto its class,
/// unit L2 norm, largest-magnitude coefficient positive.
pub fn extract_kernel(spec: &Spectrum, bucket: usize, n_sym: Option<usize>) -> Option<CosineSeries> {
    let i = spec.nearest_in(bucket)?;
    let mut phi = CosineSeries::new(spec.vectors.column(i).iter().copied().collect());
    if let (Some(n), Some(c)) = (n_sym, spec.classes[i]) {
        phi = project_class(&phi, n, c);
    }
    let nrm = phi.norm_l2();
    if nrm == 0.0 {
        return None;
    }
    let big = phi
        .coeffs()
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    Some(phi.scale(big.signum() / nrm))
}

fn record_at(
    sigma: f64,
    n_sym: Option<usize>,
    st: &State,
    bucket: usize,
    bracket: [f64; 2],
    resolved: bool,
) -> Option<BifurcationRecord> {
    let phi0 = extract_kernel(&st.spec, bucket, n_sym)?;
    let kernel_class = (bucket < 3).then(|| SymClass::ALL[bucket]);
    let trivial = st.u.max_abs_coeff() == 0.0;
    let kind = match (trivial, kernel_class) {
        (true, _) => BifurcationKind::Primary,
        (false, Some(SymClass::B | SymClass::C)) => BifurcationKind::SymmetryBreaking,
        _ => BifurcationKind::Unclassified,
    };
    let mut rec = BifurcationRecord {
        sigma,
        lambda0: st.lambda,
        u0: st.u.clone(),
        phi0,
        n_sym,
        kind,
        kernel_class,
        scenario: None,
        note: None,
        eigenvalue: st.mu(bucket),
        bracket,
        resolved,
        shape_rho: None,
        nondegeneracy_value: None,
    };
    let mut notes = Vec::new();
    if kind == BifurcationKind::SymmetryBreaking {
        let n = n_sym.expect("symmetric branch");
        match classify_kernel(&rec.phi0.to_interval(), n) {
            Ok(s) => {
                if Some(s.kernel_class) != kernel_class {
                    notes.push(format!(
                        "point-value tests give class {} but the coefficient support is class {}",
                        s.kernel_class,
                        kernel_class.expect("class")
                    ));
                }
                rec.scenario = Some(s);
            }
            Err(e) => notes.push(format!("scenario: {e}")),
        }
        match shape_diagnostics(&rec) {
            Ok(d) => {
                rec.shape_rho = Some(d.shape_rho);
                rec.nondegeneracy_value = Some(d.nondegeneracy_value);
                if d.quadratic_pairing.abs() > QUADRATIC_TOL * d.nondegeneracy_scale {
                    notes.push(format!(
                        "quadratic pairing {:.6e} is nonzero: the crossing is transcritical and shape_rho does not describe it",
                        d.quadratic_pairing
                    ));
                }
            }
            Err(e) => notes.push(format!("shape diagnostics: {e}")),
        }
    }
    if !notes.is_empty() {
        rec.note = Some(notes.join("; "));
    }
    Some(rec)
}

fn scan(
    base: &ModelParams,
    a: &State,
    b: &State,
    depth: usize,
    out: &mut Vec<BifurcationRecord>,
) -> Result<()> {
    let (ca, cb) = (a.spec.counts(), b.spec.counts());
    let skip_a = base.n_sym.is_some();
    let changed: Vec<usize> = (0..4)
        .filter(|&i| ca[i] != cb[i] && !(skip_a && i == SymClass::A.index()))
        .collect();
    if changed.is_empty() {
        return Ok(());
    }
    if depth < 8 && changed.iter().any(|&i| ca[i].abs_diff(cb[i]) > 1) {
        let m = solve_at(base, 0.5 * (a.lambda + b.lambda), a, b)?;
        scan(base, a, &m, depth + 1, out)?;
        return scan(base, &m, b, depth + 1, out);
    }
    for bucket in changed {
        let (st, bracket, resolved) = refine(base, a, b, bucket)?;
        if let Some(r) = record_at(base.sigma, base.n_sym, &st, bucket, bracket, resolved) {
            out.push(r);
        }
    }
    Ok(())
}

/// Eigenvalue crossings along a branch. Class-A crossings on symmetric
/// branches are skipped.
pub fn detect_bifurcations(sigma: f64, branch: &[BranchSample], n_sym: Option<usize>) -> Result<Vec<BifurcationRecord>> {
    if branch.len() < 2 {
        return Err(EquilibriaError::BadInput("branch needs at least 2 samples".into()));
    }
    let base = ModelParams::new(sigma, branch[0].lambda, n_sym)?;
    let states: Vec<State> = branch
        .iter()
        .map(|s| State::new(&base.with_lambda(s.lambda), s.u.clone()))
        .collect();
    let mut out = Vec::new();
    for w in states.windows(2) {
        scan(&base, &w[0], &w[1], 0, &mut out)?;
    }
    Ok(out)
}

/// Re-run the crossing search inside `bracket` for the record's kernel class.
pub fn rebisect(rec: &BifurcationRecord, a: &BranchSample, b: &BranchSample) -> Result<BifurcationRecord> {
    let base = ModelParams::new(rec.sigma, a.lambda, rec.n_sym)?;
    let sa = State::new(&base, a.u.clone());
    let sb = State::new(&base.with_lambda(b.lambda), b.u.clone());
    let bucket = rec.kernel_class.map_or(3, SymClass::index);
    let (st, bracket, resolved) = refine(&base, &sa, &sb, bucket)?;
    record_at(rec.sigma, rec.n_sym, &st, bucket, bracket, resolved)
        .ok_or_else(|| EquilibriaError::BadInput("no kernel in bracket".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDiagnostics {
    pub xi0: CosineSeries,
    pub zeta0: CosineSeries,
    pub shape_rho: f64,
    pub nondegeneracy_value: f64,
    pub nondegeneracy_scale: f64,
    /// `psi*(D_uu F[phi, phi])`; zero at a pitchfork, nonzero at a transcritical point.
    pub quadratic_pairing: f64,
}

/// Pairing with the left kernel: `psi*(y) = sum phi_k y_k / (k pi)^2`.
fn psi_pair(phi: &CosineSeries, y: &CosineSeries) -> f64 {
    (1..=phi.len()).map(|k| phi.coeff(k) * y.coeff(k) * inv_kpi2(k)).sum()
}

/// `(I - P) y`, with `P` the Y-orthogonal projector onto `(-Delta) phi`.
fn complement(phi: &CosineSeries, y: &CosineSeries) -> CosineSeries {
    let nn: f64 = phi.coeffs().iter().map(|c| c * c).sum();
    let c = psi_pair(phi, y) / nn;
    let m = y.len().max(phi.len());
    let mut out = y.resized(m);
    for k in 1..=phi.len() {
        out.set(k, out.coeff(k) - c * kpi2(k) * phi.coeff(k));
    }
    out
}

/// Solve `D_u F(u0) x = -q` in the Galerkin space on `modes`, where `q` lies in
/// the range of `D_u F(u0)`, through the symmetric form bordered by `phi`.
fn solve_range(p: &ModelParams, u0: &CosineSeries, phi: &CosineSeries, q: &CosineSeries, modes: &[usize]) -> Result<CosineSeries> {
    let m = modes.len();
    let h = galerkin_symmetric(p, u0, modes);
    let border: Vec<f64> = modes.iter().map(|&k| phi.coeff(k)).collect();
    let bordered = border.iter().any(|&c| c != 0.0);
    let dim = if bordered { m + 1 } else { m };
    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (m, m)).copy_from(&h);
    let mut rhs = DVector::zeros(dim);
    for (i, &j) in modes.iter().enumerate() {
        rhs[i] = -q.coeff(j) * inv_kpi2(j);
        if bordered {
            a[(i, m)] = border[i];
            a[(m, i)] = border[i];
        }
    }
    if !bordered {
        let sv = h.singular_values();
        let (mx, mn) = (sv.max(), sv.min());
        let cond = if mn > 0.0 { mx / mn } else { f64::INFINITY };
        if cond > BLOCK_COND_MAX {
            return Err(EquilibriaError::NearSingularBlock(cond));
        }
    }
    let x = solve_checked(a, rhs)?;
    let mut out = CosineSeries::zeros(u0.len().max(phi.len()));
    for (i, &k) in modes.iter().enumerate() {
        out.set(k, x[i]);
    }
    Ok(out)
}

/// `xi0`, `zeta0`, the shape constant and the nondegeneracy pairing at a
/// recorded crossing.
pub fn shape_diagnostics(rec: &BifurcationRecord) -> Result<ShapeDiagnostics> {
    let n = rec.u0.len().max(rec.phi0.len());
    let p = ModelParams::new(rec.sigma, rec.lambda0, rec.n_sym)?;
    let (u0, phi) = (&rec.u0, &rec.phi0);
    let all: Vec<usize> = (1..=n).collect();
    let xi_modes = match (rec.n_sym, rec.kernel_class) {
        (Some(m), Some(SymClass::B | SymClass::C)) => class_modes(m, SymClass::A, n),
        _ => all.clone(),
    };
    let dl = complement(phi, &p.dlamf(u0));
    let xi0 = solve_range(&p, u0, phi, &dl, &xi_modes)?;
    let duu = p.duuf_apply(u0, phi, phi);
    let quadratic_pairing = psi_pair(phi, &duu);
    let q = complement(phi, &duu);
    let zeta0 = solve_range(&p, u0, phi, &q, &all)?;
    let t1 = psi_pair(phi, &p.dlamuf_apply(u0, phi));
    let t2 = psi_pair(phi, &p.duuf_apply(u0, phi, &xi0));
    let den = t1 + t2;
    let scale = t1.abs() + t2.abs();
    if !(den.abs() > 1e-6 * scale) || scale == 0.0 {
        return Err(EquilibriaError::Degenerate { value: den, scale });
    }
    let num = psi_pair(phi, &p.duuuf_apply(phi, phi, phi)) + 3.0 * psi_pair(phi, &p.duuf_apply(u0, phi, &zeta0));
    Ok(ShapeDiagnostics {
        xi0,
        zeta0,
        shape_rho: num / den,
        nondegeneracy_value: den,
        nondegeneracy_scale: scale,
        quadratic_pairing,
    })
}

/// Point `(lambda, u)` on the bifurcating branch with `l(u - u0) = eps`, where
/// `l(w) = <phi0, w>_X / <phi0, phi0>_X`. Full Galerkin space, no symmetry.
pub fn secondary_probe(rec: &BifurcationRecord, eps: f64) -> Result<(f64, CosineSeries)> {
    let n = rec.u0.len().max(rec.phi0.len());
    let mut p = ModelParams::new(rec.sigma, rec.lambda0, None)?;
    let phi = rec.phi0.resized(n);
    let phx = phi.inner_x(&phi);
    let u0 = rec.u0.resized(n);
    let mut u = u0.add(&phi.scale(eps));
    let all: Vec<usize> = (1..=n).collect();
    let mut res = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let r = p.f_apply(&u).project_pn(n);
        let rl = u.sub(&u0).inner_x(&phi) / phx - eps;
        res = r.norm_y().max(rl.abs());
        if res <= 1e-12 {
            return Ok((p.lambda, u));
        }
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 1), (n, n)).copy_from(&galerkin_duf_scaled(&p, &u, &all, &all));
        let dl = p.dlamf(&u);
        let mut rhs = DVector::zeros(n + 1);
        for k in 1..=n {
            j[(k - 1, 0)] = dl.coeff(k) * inv_kpi2(k);
            j[(n, k)] = 0.5 * phi.coeff(k) * kpi2(k) / phx;
            rhs[k - 1] = -r.coeff(k) * inv_kpi2(k);
        }
        rhs[n] = -rl;
        let d = solve_checked(j, rhs)?;
        p = p.with_lambda(p.lambda + d[0]);
        for k in 1..=n {
            u.set(k, u.coeff(k) + d[k] * inv_kpi2(k));
        }
    }
    Err(EquilibriaError::NoConvergence {
        iters: MAX_NEWTON,
        residual: res,
    })
}
