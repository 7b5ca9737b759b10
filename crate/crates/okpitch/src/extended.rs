//! Extended system `(l(v) - 1, F(u), D_u F(u)[v])`, its derivative and a
//! float Newton solver.
//!
//! Dense matrices use scaled coordinates: `x_k = a_k (k pi)^2 / sqrt 2` on the
//! domain side and `y_k = b_k / ((k pi)^2 sqrt 2)` on the image side, so that
//! Euclidean norms are X and Y norms and `-Delta^2` becomes `-I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::BifurcationRecord;
use crate::interval::{Interval, IntervalMatrix, Scalar};
use crate::model::{fprime_of, fsecond_of, mult_entry, ModelError, ModelParams};
use crate::spectral::{conv_full, CosineSeries};
use crate::symmetry::{class_modes, class_of, project_class, SymClass};

pub const EXT_TOL: f64 = 1e-12;
pub const MAX_EXT_NEWTON: usize = 50;
const PIVOT_MIN: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ExtendedError {
    #[error("extended Newton did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("extended Jacobian is numerically singular (pivot ratio {0:.3e})")]
    SingularExtendedJacobian(f64),
    #[error("dimension mismatch: {0}")]
    DimError(String),
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, ExtendedError>;

/// Series with coefficients converted to `T`.
pub fn lift<T: Scalar>(u: &CosineSeries<f64>) -> CosineSeries<T> {
    CosineSeries::new(u.coeffs().iter().map(|&c| T::from_f64(c)).collect())
}

fn sqrt2<T: Scalar>() -> T {
    T::from_f64(2.0).sqrt_nonneg()
}

/// `l(v) = <phi, v>_X / <phi, phi>_X` for a fixed representer `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationFunctional {
    pub representer: CosineSeries,
}

impl NormalizationFunctional {
    pub fn new(representer: CosineSeries) -> Result<Self> {
        if representer.max_abs_coeff() == 0.0 {
            return Err(ExtendedError::BadInput("zero representer".into()));
        }
        Ok(NormalizationFunctional { representer })
    }

    pub fn apply<T: Scalar>(&self, v: &CosineSeries<T>) -> T {
        let r = lift::<T>(&self.representer);
        r.inner_x(v) * r.inner_x(&r).recip_pos()
    }

    /// Coefficient of `x_k`, `k = 1..=n`, in scaled coordinates.
    pub fn scaled_row<T: Scalar>(&self, n: usize) -> Vec<T> {
        let r = lift::<T>(&self.representer);
        let c = (sqrt2::<T>() * r.inner_x(&r)).recip_pos();
        (1..=n).map(|k| r.coeff(k) * T::kpi2(k) * c).collect()
    }
}

/// Point `(lambda, u, v)` with `u` supported on the class-A modes of `n_sym`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExtendedPointJson", try_from = "ExtendedPointJson")]
pub struct ExtendedPoint {
    pub lambda: f64,
    pub n_sym: usize,
    pub u: CosineSeries,
    pub v: CosineSeries,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExtendedPointJson {
    lambda: f64,
    n_sym: usize,
    #[serde(rename = "u_coeffs_classA")]
    u_coeffs_class_a: Vec<f64>,
    v_coeffs: Vec<f64>,
}

impl From<ExtendedPoint> for ExtendedPointJson {
    fn from(w: ExtendedPoint) -> Self {
        let modes = class_modes(w.n_sym, SymClass::A, w.n());
        ExtendedPointJson {
            lambda: w.lambda,
            n_sym: w.n_sym,
            u_coeffs_class_a: modes.iter().map(|&k| w.u.coeff(k)).collect(),
            v_coeffs: w.v.into_coeffs(),
        }
    }
}

impl TryFrom<ExtendedPointJson> for ExtendedPoint {
    type Error = ExtendedError;

    fn try_from(j: ExtendedPointJson) -> Result<Self> {
        let n = j.v_coeffs.len();
        if j.n_sym == 0 {
            return Err(ExtendedError::BadInput("n_sym must be positive".into()));
        }
        let modes = class_modes(j.n_sym, SymClass::A, n);
        if modes.len() != j.u_coeffs_class_a.len() {
            return Err(ExtendedError::DimError(format!(
                "{} class-A coefficients for N = {n}, expected {}",
                j.u_coeffs_class_a.len(),
                modes.len()
            )));
        }
        let mut u = CosineSeries::zeros(n);
        for (&k, &c) in modes.iter().zip(&j.u_coeffs_class_a) {
            u.set(k, c);
        }
        ExtendedPoint::new(j.lambda, j.n_sym, u, CosineSeries::new(j.v_coeffs))
    }
}

impl ExtendedPoint {
    pub fn new(lambda: f64, n_sym: usize, u: CosineSeries, v: CosineSeries) -> Result<Self> {
        if n_sym == 0 {
            return Err(ExtendedError::BadInput("n_sym must be positive".into()));
        }
        let n = v.len();
        if u.len() > n && u.coeffs()[n..].iter().any(|&c| c != 0.0) {
            return Err(ExtendedError::DimError(format!("u has degree {} > N = {n}", u.degree())));
        }
        let u = u.resized(n);
        if let Some(k) = (1..=n).find(|&k| u.coeff(k) != 0.0 && class_of(k, n_sym) != SymClass::A) {
            return Err(ExtendedError::DimError(format!("u has a nonzero coefficient at mode {k} outside class A")));
        }
        Ok(ExtendedPoint { lambda, n_sym, u, v })
    }

    /// Galerkin truncation `N`.
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn layout(&self) -> ExtLayout {
        ExtLayout::new(self.n_sym, self.n())
    }

    pub fn params(&self, sigma: f64) -> Result<ModelParams> {
        Ok(ModelParams::new(sigma, self.lambda, Some(self.n_sym))?)
    }

    /// Seed from a detected crossing: `u0` restricted to class A, `v = phi0`,
    /// and `l` built on `phi0`.
    pub fn from_record(rec: &BifurcationRecord, n: usize) -> Result<(Self, NormalizationFunctional)> {
        let m = rec
            .n_sym
            .ok_or_else(|| ExtendedError::BadInput("record has no symmetry index".into()))?;
        if rec.u0.degree() > n || rec.phi0.degree() > n {
            return Err(ExtendedError::DimError(format!("record needs N >= {}", rec.u0.degree().max(rec.phi0.degree()))));
        }
        let u = project_class(&rec.u0.resized(n), m, SymClass::A);
        let v = rec.phi0.resized(n);
        let ell = NormalizationFunctional::new(v.clone())?;
        Ok((ExtendedPoint::new(rec.lambda0, m, u, v)?, ell))
    }

    /// Same point with Galerkin truncation `n` (zero-padded or cut).
    pub fn resized(&self, n: usize) -> Result<Self> {
        ExtendedPoint::new(self.lambda, self.n_sym, self.u.resized(n), self.v.resized(n))
    }
}

/// Three-component value in `R x Y x Y` (or a tangent in `R x X x X`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtTriple<T: Scalar = f64> {
    pub r1: T,
    pub r2: CosineSeries<T>,
    pub r3: CosineSeries<T>,
}

impl<T: Scalar> ExtTriple<T> {
    pub fn norm_y(&self) -> T {
        let (a, b) = (self.r2.norm_y(), self.r3.norm_y());
        (self.r1 * self.r1 + a * a + b * b).sqrt_nonneg()
    }

    pub fn norm_x(&self) -> T {
        let (a, b) = (self.r2.norm_x(), self.r3.norm_x());
        (self.r1 * self.r1 + a * a + b * b).sqrt_nonneg()
    }

    pub fn project_pn(&self, n: usize) -> Self {
        ExtTriple {
            r1: self.r1,
            r2: self.r2.project_pn(n),
            r3: self.r3.project_pn(n),
        }
    }
}

/// `Fe(sigma, w) = (l(v) - 1, F(u), D_u F(u)[v])`.
pub fn fe_apply<T: Scalar>(sigma: f64, w: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<ExtTriple<T>> {
    let p = w.params(sigma)?;
    let (u, v) = (lift::<T>(&w.u), lift::<T>(&w.v));
    Ok(ExtTriple {
        r1: ell.apply(&v) + T::from_f64(-1.0),
        r2: p.f_apply(&u),
        r3: p.duf_apply(&u, &v),
    })
}

/// `D_w Fe(sigma, w)[t]` for a tangent `t = (lambda~, u~, v~)`.
pub fn dwfe_matvec<T: Scalar>(
    sigma: f64,
    w: &ExtendedPoint,
    ell: &NormalizationFunctional,
    t: &ExtTriple<T>,
) -> Result<ExtTriple<T>> {
    if let Some(k) = (1..=t.r2.len()).find(|&k| !t.r2.coeff(k).is_zero() && class_of(k, w.n_sym) != SymClass::A) {
        return Err(ExtendedError::DimError(format!("tangent u has mode {k} outside class A")));
    }
    let p = w.params(sigma)?;
    let (u, v) = (lift::<T>(&w.u), lift::<T>(&w.v));
    let r2 = p.dlamf(&u).scale(t.r1).add(&p.duf_apply(&u, &t.r2));
    let r3 = p
        .dlamuf_apply(&u, &v)
        .scale(t.r1)
        .add(&p.duuf_apply(&u, &v, &t.r2))
        .add(&p.duf_apply(&u, &t.r3));
    Ok(ExtTriple {
        r1: ell.apply(&t.r3),
        r2,
        r3,
    })
}

/// `D_sigma Fe(sigma, w) = (0, -lambda u, -lambda v)`.
pub fn dsigma_fe<T: Scalar>(w: &ExtendedPoint) -> ExtTriple<T> {
    let l = T::from_f64(-w.lambda);
    ExtTriple {
        r1: T::zero(),
        r2: lift::<T>(&w.u).scale(l),
        r3: lift::<T>(&w.v).scale(l),
    }
}

/// Index of a row or column of the dense extended matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// `lambda~` column or `l`-equation row.
    Lead,
    U(usize),
    V(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtLayout {
    pub n_sym: usize,
    pub n: usize,
    pub a_modes: Vec<usize>,
}

impl ExtLayout {
    pub fn new(n_sym: usize, n: usize) -> Self {
        ExtLayout {
            n_sym,
            n,
            a_modes: class_modes(n_sym, SymClass::A, n),
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.a_modes.len() + self.n
    }

    pub fn cols(&self) -> Vec<Slot> {
        self.slots(self.n)
    }

    /// Rows `[l | U(j), class A, j <= limit | V(j), j <= limit]`.
    pub fn slots(&self, limit: usize) -> Vec<Slot> {
        let mut s = vec![Slot::Lead];
        s.extend(class_modes(self.n_sym, SymClass::A, limit).into_iter().map(Slot::U));
        s.extend((1..=limit).map(Slot::V));
        s
    }

    /// Scaled coordinates of a tangent.
    pub fn to_scaled(&self, t: &ExtTriple) -> DVector<f64> {
        let s = 2f64.sqrt().recip();
        DVector::from_iterator(
            self.dim(),
            self.cols().into_iter().map(|c| match c {
                Slot::Lead => t.r1,
                Slot::U(k) => t.r2.coeff(k) * <f64 as Scalar>::kpi2(k) * s,
                Slot::V(k) => t.r3.coeff(k) * <f64 as Scalar>::kpi2(k) * s,
            }),
        )
    }

    pub fn from_scaled(&self, x: &DVector<f64>) -> ExtTriple {
        let s = 2f64.sqrt();
        let mut t = ExtTriple {
            r1: 0.0,
            r2: CosineSeries::zeros(self.n),
            r3: CosineSeries::zeros(self.n),
        };
        for (i, c) in self.cols().into_iter().enumerate() {
            match c {
                Slot::Lead => t.r1 = x[i],
                Slot::U(k) => t.r2.set(k, x[i] * s * <f64 as Scalar>::inv_kpi2(k)),
                Slot::V(k) => t.r3.set(k, x[i] * s * <f64 as Scalar>::inv_kpi2(k)),
            }
        }
        t
    }

    /// Scaled coordinates of a residual on rows up to `limit`.
    pub fn residual_scaled(&self, r: &ExtTriple, limit: usize) -> DVector<f64> {
        let s = 2f64.sqrt().recip();
        let rows = self.slots(limit);
        DVector::from_iterator(
            rows.len(),
            rows.into_iter().map(|c| match c {
                Slot::Lead => r.r1,
                Slot::U(k) => r.r2.coeff(k) * <f64 as Scalar>::inv_kpi2(k) * s,
                Slot::V(k) => r.r3.coeff(k) * <f64 as Scalar>::inv_kpi2(k) * s,
            }),
        )
    }
}

/// Data for entries of the scaled extended matrix at a point.
pub struct ExtCoeffs<T: Scalar> {
    g: Vec<T>,
    h: Vec<T>,
    dl: CosineSeries<T>,
    dlu: CosineSeries<T>,
    lam: T,
    ls: T,
    ell_row: Vec<T>,
    inv_sqrt2: T,
}

impl<T: Scalar> ExtCoeffs<T> {
    pub fn new(sigma: f64, w: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<Self> {
        let p = w.params(sigma)?;
        let (u, v) = (lift::<T>(&w.u), lift::<T>(&w.v));
        let lam = T::from_f64(w.lambda);
        Ok(ExtCoeffs {
            g: fprime_of(&u),
            h: conv_full(&fsecond_of(&u), &v.to_full()),
            dl: p.dlamf(&u),
            dlu: p.dlamuf_apply(&u, &v),
            lam,
            ls: lam * T::from_f64(sigma),
            ell_row: ell.scaled_row(w.n()),
            inv_sqrt2: sqrt2::<T>().recip_pos(),
        })
    }

    fn s_entry(&self, j: usize, k: usize) -> T {
        let mut e = self.lam * mult_entry(&self.g, j, k) * T::inv_kpi2(k);
        if j == k {
            e = e + T::from_f64(-1.0) + -(self.ls * T::inv_kpi4(k));
        }
        e
    }

    pub fn entry(&self, row: Slot, col: Slot) -> T {
        match (row, col) {
            (Slot::Lead, Slot::V(k)) => self.ell_row.get(k - 1).copied().unwrap_or_else(T::zero),
            (Slot::Lead, _) => T::zero(),
            (Slot::U(j), Slot::Lead) => self.dl.coeff(j) * T::inv_kpi2(j) * self.inv_sqrt2,
            (Slot::V(j), Slot::Lead) => self.dlu.coeff(j) * T::inv_kpi2(j) * self.inv_sqrt2,
            (Slot::U(j), Slot::U(k)) | (Slot::V(j), Slot::V(k)) => self.s_entry(j, k),
            (Slot::U(_), Slot::V(_)) => T::zero(),
            (Slot::V(j), Slot::U(k)) => self.lam * mult_entry(&self.h, j, k) * T::inv_kpi2(k),
        }
    }
}

/// Scaled dense matrix of `D_w Fe` with rows `layout.slots(row_limit)`,
/// row-major.
pub fn assemble_scaled<T: Scalar>(
    sigma: f64,
    w: &ExtendedPoint,
    ell: &NormalizationFunctional,
    row_limit: usize,
) -> Result<(Vec<Slot>, Vec<Slot>, Vec<T>)> {
    let lay = w.layout();
    let (rows, cols) = (lay.slots(row_limit), lay.cols());
    let c = ExtCoeffs::<T>::new(sigma, w, ell)?;
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &q in &cols {
            data.push(c.entry(r, q));
        }
    }
    Ok((rows, cols, data))
}

/// Square Galerkin matrix of `D_w Fe` in scaled coordinates.
pub fn assemble_dwfe(sigma: f64, w: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<DMatrix<f64>> {
    let (rows, cols, data) = assemble_scaled::<f64>(sigma, w, ell, w.n())?;
    Ok(DMatrix::from_row_slice(rows.len(), cols.len(), &data))
}

/// Interval version of the scaled matrix with rows up to `row_limit`.
pub fn assemble_dwfe_interval(
    sigma: f64,
    w: &ExtendedPoint,
    ell: &NormalizationFunctional,
    row_limit: usize,
) -> Result<(Vec<Slot>, IntervalMatrix)> {
    let (rows, cols, data) = assemble_scaled::<Interval>(sigma, w, ell, row_limit)?;
    let m = IntervalMatrix::new(rows.len(), cols.len(), data).map_err(|e| ExtendedError::DimError(e.to_string()))?;
    Ok((rows, m))
}

/// Euclidean norm of the scaled Galerkin residual (`P_N Fe` in the Y-type norm).
pub fn ext_residual(sigma: f64, w: &ExtendedPoint, ell: &NormalizationFunctional) -> Result<f64> {
    let r = fe_apply::<f64>(sigma, w, ell)?;
    Ok(w.layout().residual_scaled(&r, w.n()).norm())
}

/// Newton for `Fe = 0` on the Galerkin space; `u` stays in class A.
pub fn newton_extended(sigma: f64, w_init: &ExtendedPoint, ell: &NormalizationFunctional, n: usize) -> Result<ExtendedPoint> {
    let mut w = w_init.resized(n)?;
    let lay = w.layout();
    let mut res = f64::INFINITY;
    for _ in 0..MAX_EXT_NEWTON {
        let r = fe_apply::<f64>(sigma, &w, ell)?;
        let y = lay.residual_scaled(&r, n);
        res = y.norm();
        if res <= EXT_TOL {
            return Ok(w);
        }
        let j = assemble_dwfe(sigma, &w, ell)?;
        let lu = j.lu();
        let d = lu.u().diagonal();
        let big = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let small = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let ratio = if big > 0.0 { small / big } else { 0.0 };
        if !(ratio > PIVOT_MIN) {
            return Err(ExtendedError::SingularExtendedJacobian(ratio));
        }
        let dz = lu.solve(&(-y)).ok_or(ExtendedError::SingularExtendedJacobian(ratio))?;
        let t = lay.from_scaled(&dz);
        w.lambda += t.r1;
        w.u = w.u.add(&t.r2);
        w.v = w.v.add(&t.r3);
        let step = dz.norm();
        let scale = w.u.norm_x().max(w.v.norm_x()).max(w.lambda.abs()).max(1.0);
        if step <= 1e-14 * scale && res <= 1e-10 * scale {
            let after = ext_residual(sigma, &w, ell)?;
            if after <= res {
                return Ok(w);
            }
        }
    }
    Err(ExtendedError::NoConvergence {
        iters: MAX_EXT_NEWTON,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::primary_lambda;

    #[test]
    fn trivial_zero() {
        let l = primary_lambda(6.0, 3).unwrap();
        let v = CosineSeries::mode(3, 2f64.sqrt()).resized(12);
        let ell = NormalizationFunctional::new(v.clone()).unwrap();
        let w = ExtendedPoint::new(l, 3, CosineSeries::zeros(12), v).unwrap();
        let r = fe_apply::<f64>(6.0, &w, &ell).unwrap();
        assert!(r.norm_y() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let mut u = CosineSeries::zeros(10);
        u.set(3, 0.5);
        u.set(9, -0.1);
        let w = ExtendedPoint::new(100.0, 3, u, CosineSeries::mode(1, 1.0).resized(10)).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("u_coeffs_classA"));
        let back: ExtendedPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn rejects_off_class() {
        let u = CosineSeries::mode(2, 0.1).resized(8);
        assert!(ExtendedPoint::new(10.0, 3, u, CosineSeries::zeros(8)).is_err());
    }

    #[test]
    fn columns_match_matvec() {
        let mut u = CosineSeries::zeros(9);
        u.set(3, 0.7);
        u.set(9, 0.05);
        let mut v = CosineSeries::zeros(9);
        v.set(1, 1.2);
        v.set(5, -0.3);
        v.set(2, 0.1);
        let ell = NormalizationFunctional::new(v.clone()).unwrap();
        let w = ExtendedPoint::new(80.0, 3, u, v).unwrap();
        let lay = w.layout();
        let (rows, cols, data) = assemble_scaled::<f64>(6.0, &w, &ell, 27).unwrap();
        for (c, _) in cols.iter().enumerate() {
            let mut e = DVector::zeros(lay.dim());
            e[c] = 1.0;
            let t = lay.from_scaled(&e);
            let r = dwfe_matvec(6.0, &w, &ell, &t).unwrap();
            let y = lay.residual_scaled(&r, 27);
            for i in 0..rows.len() {
                let a = data[i * cols.len() + c];
                assert!((a - y[i]).abs() <= 1e-14 * (1.0 + a.abs()), "row {:?} col {:?}: {a} vs {}", rows[i], cols[c], y[i]);
            }
            assert!(y.norm() <= DVector::from_iterator(rows.len(), (0..rows.len()).map(|i| data[i * cols.len() + c])).norm() * (1.0 + 1e-13));
        }
    }
}
