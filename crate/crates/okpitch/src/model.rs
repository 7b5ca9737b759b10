//! The equilibrium operator `F(sigma, lambda, u) = -Delta^2 u - lambda Delta f(u) - lambda sigma u`
//! with `f(u) = u - u^3`, and its derivatives, in cosine coefficients.
//!
//! Every operator is an exact finite computation on the coefficients; the
//! mean of a product is dropped by the outer `-Delta`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Scalar;
use crate::spectral::{conv_full, CosineSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sigma must be positive and finite (got {0})")]
    BadSigma(f64),
    #[error("lambda must be finite (got {0})")]
    BadLambda(f64),
    #[error("symmetry parameter n must be at least 1 (got {0})")]
    BadN(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sigma: f64,
    pub lambda: f64,
    /// Expected `T_n` symmetry of the solutions being sought.
    pub n_sym: Option<usize>,
}

/// `f(u) = u - u^3` and its derivatives.
pub struct Nonlinearity;

impl Nonlinearity {
    /// Polynomial coefficients, lowest degree first.
    pub const F: [f64; 4] = [0.0, 1.0, 0.0, -1.0];
    pub const DF: [f64; 3] = [1.0, 0.0, -3.0];
    pub const D2F: [f64; 2] = [0.0, -6.0];
    pub const D3F: [f64; 1] = [-6.0];

    pub fn f(u: f64) -> f64 {
        u - u * u * u
    }
    pub fn df(u: f64) -> f64 {
        1.0 - 3.0 * u * u
    }
    pub fn d2f(u: f64) -> f64 {
        -6.0 * u
    }
    pub fn d3f(_u: f64) -> f64 {
        -6.0
    }
}

/// `f(u)` as a mean-inclusive array.
pub fn f_of<T: Scalar>(u: &CosineSeries<T>) -> Vec<T> {
    let uf = u.to_full();
    let u2 = conv_full(&uf, &uf);
    let u3 = conv_full(&u2, &uf);
    let mut out = u3;
    for v in out.iter_mut() {
        *v = -*v;
    }
    for (i, &c) in uf.iter().enumerate() {
        out[i] += c;
    }
    out
}

/// `f'(u) = 1 - 3u^2` as a mean-inclusive array.
pub fn fprime_of<T: Scalar>(u: &CosineSeries<T>) -> Vec<T> {
    let uf = u.to_full();
    let mut out = conv_full(&uf, &uf);
    if out.is_empty() {
        out.push(T::zero());
    }
    let m3 = T::from_f64(-3.0);
    for v in out.iter_mut() {
        *v = m3 * *v;
    }
    out[0] += T::from_f64(1.0);
    out
}

/// `f''(u) = -6u` as a mean-inclusive array.
pub fn fsecond_of<T: Scalar>(u: &CosineSeries<T>) -> Vec<T> {
    let m6 = T::from_f64(-6.0);
    u.to_full().into_iter().map(|c| m6 * c).collect()
}

fn full_of<T: Scalar>(u: &CosineSeries<T>) -> Vec<T> {
    u.to_full()
}

/// `a * (-Delta) g` from a mean-inclusive array, dropping the mean.
fn neg_lap<T: Scalar>(g: &[T], a: T) -> CosineSeries<T> {
    let m = g.len().saturating_sub(1);
    CosineSeries::new((1..=m).map(|k| a * T::kpi2(k) * g[k]).collect())
}

/// `c_u u + c_b (-Delta)^2 u`-style linear combination helper:
/// returns `sum_i s_i * series_i` over a common length.
fn combine<T: Scalar>(parts: &[(T, &CosineSeries<T>)]) -> CosineSeries<T> {
    let m = parts.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let mut out = vec![T::zero(); m];
    for (s, series) in parts {
        for (i, &c) in series.coeffs().iter().enumerate() {
            if !c.is_zero() {
                out[i] += *s * c;
            }
        }
    }
    CosineSeries::new(out)
}

fn bilaplacian<T: Scalar>(u: &CosineSeries<T>) -> CosineSeries<T> {
    u.map(|k, c| T::kpi4(k) * c)
}

impl ModelParams {
    pub fn new(sigma: f64, lambda: f64, n_sym: Option<usize>) -> Result<Self, ModelError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(ModelError::BadSigma(sigma));
        }
        if !lambda.is_finite() {
            return Err(ModelError::BadLambda(lambda));
        }
        if let Some(n) = n_sym {
            if n < 1 {
                return Err(ModelError::BadN(n));
            }
        }
        Ok(ModelParams {
            sigma,
            lambda,
            n_sym,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ModelParams { lambda, ..*self }
    }

    fn sl<T: Scalar>(&self) -> (T, T) {
        (T::from_f64(self.sigma), T::from_f64(self.lambda))
    }

    /// `F(sigma, lambda, u)`.
    pub fn f_apply<T: Scalar>(&self, u: &CosineSeries<T>) -> CosineSeries<T> {
        let (s, l) = self.sl::<T>();
        let nl = neg_lap(&f_of(u), l);
        let b = bilaplacian(u);
        combine(&[
            (T::from_f64(-1.0), &b),
            (T::from_f64(1.0), &nl),
            (-(l * s), u),
        ])
    }

    /// `D_u F[w] = -Delta^2 w - lambda Delta (f'(u) w) - lambda sigma w`.
    pub fn duf_apply<T: Scalar>(&self, u: &CosineSeries<T>, w: &CosineSeries<T>) -> CosineSeries<T> {
        let (s, l) = self.sl::<T>();
        let g = conv_full(&fprime_of(u), &full_of(w));
        let nl = neg_lap(&g, l);
        let b = bilaplacian(w);
        combine(&[
            (T::from_f64(-1.0), &b),
            (T::from_f64(1.0), &nl),
            (-(l * s), w),
        ])
    }

    /// `D_lambda F = -Delta f(u) - sigma u`.
    pub fn dlamf<T: Scalar>(&self, u: &CosineSeries<T>) -> CosineSeries<T> {
        let (s, _) = self.sl::<T>();
        let nl = neg_lap(&f_of(u), T::from_f64(1.0));
        combine(&[(T::from_f64(1.0), &nl), (-s, u)])
    }

    /// `D_sigma F = -lambda u`.
    pub fn dsigf<T: Scalar>(&self, u: &CosineSeries<T>) -> CosineSeries<T> {
        let (_, l) = self.sl::<T>();
        u.scale(-l)
    }

    /// `D_{lambda u} F[v] = -Delta(f'(u) v) - sigma v`.
    pub fn dlamuf_apply<T: Scalar>(&self, u: &CosineSeries<T>, v: &CosineSeries<T>) -> CosineSeries<T> {
        let (s, _) = self.sl::<T>();
        let g = conv_full(&fprime_of(u), &full_of(v));
        let nl = neg_lap(&g, T::from_f64(1.0));
        combine(&[(T::from_f64(1.0), &nl), (-s, v)])
    }

    /// `D_{uu} F[v, w] = -Delta(lambda f''(u) v w)`.
    pub fn duuf_apply<T: Scalar>(
        &self,
        u: &CosineSeries<T>,
        v: &CosineSeries<T>,
        w: &CosineSeries<T>,
    ) -> CosineSeries<T> {
        let (_, l) = self.sl::<T>();
        let g = conv_full(&conv_full(&fsecond_of(u), &full_of(v)), &full_of(w));
        neg_lap(&g, l)
    }

    /// `D_{uuu} F[v1, v2, v3] = -Delta(lambda f''' v1 v2 v3)`.
    pub fn duuuf_apply<T: Scalar>(
        &self,
        v1: &CosineSeries<T>,
        v2: &CosineSeries<T>,
        v3: &CosineSeries<T>,
    ) -> CosineSeries<T> {
        let (_, l) = self.sl::<T>();
        let g = conv_full(&conv_full(&full_of(v1), &full_of(v2)), &full_of(v3));
        neg_lap(&g, l * T::from_f64(-6.0))
    }

    /// Linear coefficient of `F` at `u = 0` on mode `k`.
    pub fn trivial_eigenvalue(&self, k: usize) -> f64 {
        let k2 = <f64 as Scalar>::kpi2(k);
        k2 * self.lambda - k2 * k2 - self.lambda * self.sigma
    }
}

/// Primary bifurcation value `(k pi)^4 / ((k pi)^2 - sigma)` from the trivial branch.
pub fn primary_lambda(sigma: f64, k: usize) -> Option<f64> {
    let k2 = <f64 as Scalar>::kpi2(k);
    if k2 <= sigma {
        None
    } else {
        Some(k2 * k2 / (k2 - sigma))
    }
}

/// Entry `(j, k)` of the matrix of `w -> g w` on cosine modes, for a
/// mean-inclusive `g`.
#[inline]
pub fn mult_entry<T: Scalar>(g: &[T], j: usize, k: usize) -> T {
    let at = |m: usize| if m < g.len() { g[m] } else { T::zero() };
    let d = at(j.abs_diff(k));
    let d = if j == k { d + d } else { d };
    (d + at(j + k)).half()
}

/// Galerkin matrix of `D_u F(u)` on the given wave numbers, in raw coefficients.
pub fn galerkin_duf(p: &ModelParams, u: &CosineSeries<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let g = fprime_of(u);
    let (s, l) = (p.sigma, p.lambda);
    DMatrix::from_fn(rows.len(), cols.len(), |i, c| {
        let (j, k) = (rows[i], cols[c]);
        let mut v = l * <f64 as Scalar>::kpi2(j) * mult_entry(&g, j, k);
        if j == k {
            v -= <f64 as Scalar>::kpi4(j) + l * s;
        }
        v
    })
}

/// Galerkin matrix in scaled coordinates, where the `(-Delta)^2` part is `-I`.
pub fn galerkin_duf_scaled(
    p: &ModelParams,
    u: &CosineSeries<f64>,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<f64> {
    let g = fprime_of(u);
    let (s, l) = (p.sigma, p.lambda);
    DMatrix::from_fn(rows.len(), cols.len(), |i, c| {
        let (j, k) = (rows[i], cols[c]);
        let mut v = l * mult_entry(&g, j, k) * <f64 as Scalar>::inv_kpi2(k);
        if j == k {
            v -= 1.0 + l * s * <f64 as Scalar>::inv_kpi4(k);
        }
        v
    })
}

/// Symmetric form `(-Delta)^{-1} D_u F(u)` on modes `1..=n`. It has the same
/// kernel as `D_u F` and, by congruence, the same inertia.
pub fn galerkin_symmetric(p: &ModelParams, u: &CosineSeries<f64>, modes: &[usize]) -> DMatrix<f64> {
    let g = fprime_of(u);
    let (s, l) = (p.sigma, p.lambda);
    let m = DMatrix::from_fn(modes.len(), modes.len(), |i, c| {
        let (j, k) = (modes[i], modes[c]);
        let mut v = l * mult_entry(&g, j, k);
        if j == k {
            v -= <f64 as Scalar>::kpi2(j) + l * s * <f64 as Scalar>::inv_kpi2(j);
        }
        v
    });
    (&m + m.transpose()) * 0.5
}
