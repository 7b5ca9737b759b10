//! Cosine-series algebra on (0,1).
//!
//! A [`CosineSeries`] stores `a_1..a_M` of `u(x) = sum a_k cos(k pi x)`.
//! Products are exact convolutions; the mean term they create is returned
//! separately.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{Interval, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("series is not even: sine coefficient of size {0:e}")]
    NotEvenError(f64),
    #[error("laplacian power must be one of -2, -1, 1, 2 (got {0})")]
    BadPower(i32),
    #[error("evaluation point outside [0, 1]")]
    OutOfDomain,
}

/// Tolerance for treating a sine coefficient as zero in [`TrigSeries2::restrict_even`].
pub const EVEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CosineSeries<T: Scalar = f64> {
    coeffs: Vec<T>,
}

/// The four norms of a series. `sup_bound` is `sum |a_k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub norm_x: T,
    pub norm_y: T,
    pub norm_l2: T,
    pub sup_bound: T,
}

impl<T: Scalar> Default for CosineSeries<T> {
    fn default() -> Self {
        CosineSeries { coeffs: Vec::new() }
    }
}

impl<T: Scalar> CosineSeries<T> {
    /// `coeffs[i]` is the coefficient of `cos((i+1) pi x)`.
    pub fn new(coeffs: Vec<T>) -> Self {
        CosineSeries { coeffs }
    }

    pub fn zeros(m: usize) -> Self {
        CosineSeries {
            coeffs: vec![T::zero(); m],
        }
    }

    /// `amp * cos(k pi x)`.
    pub fn mode(k: usize, amp: T) -> Self {
        assert!(k >= 1, "wave numbers start at 1");
        let mut s = Self::zeros(k);
        s.coeffs[k - 1] = amp;
        s
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of `cos(k pi x)`; zero outside the stored range.
    #[inline]
    pub fn coeff(&self, k: usize) -> T {
        if k >= 1 && k <= self.coeffs.len() {
            self.coeffs[k - 1]
        } else {
            T::zero()
        }
    }

    pub fn set(&mut self, k: usize, v: T) {
        assert!(k >= 1);
        if k > self.coeffs.len() {
            self.coeffs.resize(k, T::zero());
        }
        self.coeffs[k - 1] = v;
    }

    /// Largest wave number with a nonzero coefficient (0 for the zero series).
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| !c.is_zero())
            .map_or(0, |i| i + 1)
    }

    pub fn trimmed(&self) -> Self {
        CosineSeries {
            coeffs: self.coeffs[..self.degree()].to_vec(),
        }
    }

    /// Zero-padded or truncated copy with exactly `m` coefficients.
    pub fn resized(&self, m: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(m, T::zero());
        CosineSeries { coeffs: c }
    }

    /// Mean-inclusive array: index 0 is the mean, index k is `a_k`.
    pub fn to_full(&self) -> Vec<T> {
        let mut f = Vec::with_capacity(self.coeffs.len() + 1);
        f.push(T::zero());
        f.extend_from_slice(&self.coeffs);
        f
    }

    /// Drop the mean of a mean-inclusive array.
    pub fn from_full(full: &[T]) -> (T, Self) {
        if full.is_empty() {
            return (T::zero(), Self::default());
        }
        (full[0], CosineSeries::new(full[1..].to_vec()))
    }

    pub fn map(&self, f: impl Fn(usize, T) -> T) -> Self {
        CosineSeries {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| f(i + 1, c))
                .collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|_, c| s * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        let m = self.len().max(other.len());
        CosineSeries {
            coeffs: (1..=m).map(|k| self.coeff(k) + other.coeff(k)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let m = self.len().max(other.len());
        CosineSeries {
            coeffs: (1..=m).map(|k| self.coeff(k) - other.coeff(k)).collect(),
        }
    }

    /// `Delta^power`, i.e. `a_k -> (-(k pi)^2)^power a_k`.
    pub fn laplacian(&self, power: i32) -> Result<Self, SpectralError> {
        Ok(match power {
            1 => self.map(|k, c| -(T::kpi2(k) * c)),
            2 => self.map(|k, c| T::kpi4(k) * c),
            -1 => self.map(|k, c| -(T::inv_kpi2(k) * c)),
            -2 => self.map(|k, c| T::inv_kpi4(k) * c),
            p => return Err(SpectralError::BadPower(p)),
        })
    }

    /// Keep modes `k <= n`.
    pub fn project_pn(&self, n: usize) -> Self {
        CosineSeries {
            coeffs: self.coeffs[..n.min(self.coeffs.len())].to_vec(),
        }
    }

    pub fn norms(&self) -> Norms<T> {
        let (mut x, mut y, mut l, mut s) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let k = i + 1;
            let c2 = c * c;
            x += T::kpi4(k) * c2;
            y += T::inv_kpi4(k) * c2;
            l += c2;
            s += c.abs_val();
        }
        Norms {
            norm_x: x.half().sqrt_nonneg(),
            norm_y: y.half().sqrt_nonneg(),
            norm_l2: l.half().sqrt_nonneg(),
            sup_bound: s,
        }
    }

    pub fn norm_x(&self) -> T {
        self.inner_x(self).sqrt_nonneg()
    }

    pub fn norm_y(&self) -> T {
        self.inner_y(self).sqrt_nonneg()
    }

    pub fn norm_l2(&self) -> T {
        self.inner_l2(self).sqrt_nonneg()
    }

    /// `<Delta u, Delta v>_{L2}`.
    pub fn inner_x(&self, other: &Self) -> T {
        self.weighted_inner(other, T::kpi4)
    }

    /// `<Delta^{-1} u, Delta^{-1} v>_{L2}`.
    pub fn inner_y(&self, other: &Self) -> T {
        self.weighted_inner(other, T::inv_kpi4)
    }

    pub fn inner_l2(&self, other: &Self) -> T {
        self.weighted_inner(other, |_| T::from_f64(1.0))
    }

    fn weighted_inner(&self, other: &Self, w: impl Fn(usize) -> T) -> T {
        let m = self.len().min(other.len());
        let mut s = T::zero();
        for k in 1..=m {
            let (a, b) = (self.coeffs[k - 1], other.coeffs[k - 1]);
            if a.is_zero() || b.is_zero() {
                continue;
            }
            s += w(k) * a * b;
        }
        s.half()
    }

    /// Interval enclosure of `u(x)`.
    pub fn eval_interval(&self, x: Interval) -> Interval {
        let mut s = Interval::ZERO;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let t = Interval::point((i + 1) as f64) * x;
            s += c.to_interval() * cos_pi(t);
        }
        s
    }

    /// Upper bound of `sup |u|` given by `sum |a_k|`.
    pub fn sup_bound(&self) -> f64 {
        let mut s = Interval::ZERO;
        for c in &self.coeffs {
            s += Interval::point(c.mag());
        }
        s.hi()
    }
}

impl CosineSeries<f64> {
    pub fn eval_at(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * ((i + 1) as f64 * std::f64::consts::PI * x).cos())
            .sum()
    }

    /// Like [`eval_at`](Self::eval_at), rejecting points outside `[0,1]`.
    pub fn try_eval_at(&self, x: f64) -> Result<f64, SpectralError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(SpectralError::OutOfDomain);
        }
        Ok(self.eval_at(x))
    }

    pub fn to_interval(&self) -> CosineSeries<Interval> {
        CosineSeries {
            coeffs: self.coeffs.iter().map(|&c| Interval::point(c)).collect(),
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn embed_even(&self) -> TrigSeries2 {
        TrigSeries2 {
            cos: self.coeffs.clone(),
            sin: vec![0.0; self.coeffs.len()],
        }
    }
}

impl Serialize for CosineSeries<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coeffs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CosineSeries<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(CosineSeries::new(Vec::<f64>::deserialize(d)?))
    }
}

impl CosineSeries<Interval> {
    pub fn mid(&self) -> CosineSeries<f64> {
        CosineSeries {
            coeffs: self.coeffs.iter().map(|c| c.mid()).collect(),
        }
    }
}

/// Exact convolution of mean-inclusive cosine arrays.
///
/// Uses `cos(a)cos(b) = (cos(a+b) + cos(|a-b|))/2`; zero entries are skipped,
/// which keeps products of symmetry-restricted series cheap.
pub fn conv_full<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    let nz_b: Vec<(usize, T)> = b
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_zero())
        .map(|(i, &v)| (i, v.half()))
        .collect();
    for (j, &aj) in a.iter().enumerate() {
        if aj.is_zero() {
            continue;
        }
        for &(k, hbk) in &nz_b {
            let t = aj * hbk;
            out[j + k] += t;
            out[j.abs_diff(k)] += t;
        }
    }
    out
}

/// Product of two series: the mean term and the zero-mean remainder.
pub fn product<T: Scalar>(u: &CosineSeries<T>, v: &CosineSeries<T>) -> (T, CosineSeries<T>) {
    let full = conv_full(&u.to_full(), &v.to_full());
    CosineSeries::from_full(&full)
}

/// Enclosure of `cos(pi t)`.
///
/// Argument reduction is exact; the reduced value in `[0, 1/2]` goes through
/// a Taylor series with an explicit remainder term.
pub fn cos_pi(t: Interval) -> Interval {
    if t.lo() == t.hi() {
        return cos_pi_point(t.lo());
    }
    let mut r = cos_pi_point(t.lo()).hull(cos_pi_point(t.hi()));
    let first = t.lo().ceil();
    let last = t.hi().floor();
    if first <= last {
        let parity_hits = if last - first >= 1.0 {
            vec![first, first + 1.0]
        } else {
            vec![first]
        };
        for m in parity_hits {
            let v = if (m / 2.0).fract() == 0.0 { 1.0 } else { -1.0 };
            r = r.hull(Interval::point(v));
        }
    }
    Interval::new(r.lo().max(-1.0), r.hi().min(1.0)).unwrap_or(r)
}

fn cos_pi_point(t: f64) -> Interval {
    let m = (t / 2.0).round();
    let r = t - 2.0 * m;
    let mut s = r.abs();
    let mut sign = 1.0;
    if s > 0.5 {
        s = 1.0 - s;
        sign = -1.0;
    }
    if s == 0.0 {
        return Interval::point(sign);
    }
    if s == 0.5 {
        return Interval::ZERO;
    }
    let y = Interval::pi() * Interval::point(s);
    let y2 = y.sqr();
    let mut term = Interval::ONE;
    let mut sum = Interval::ONE;
    const J: usize = 12;
    for j in 1..=J {
        let d = ((2 * j - 1) * (2 * j)) as f64;
        term = (term * y2)
            .try_div(Interval::point(d))
            .expect("nonzero divisor");
        if j % 2 == 1 {
            sum = sum - term;
        } else {
            sum += term;
        }
    }
    // remainder y^(2J+2)/(2J+2)!
    let mut rem = term * y2;
    rem = rem
        .try_div(Interval::point(((2 * J + 1) * (2 * J + 2)) as f64))
        .expect("nonzero divisor");
    let rb = rem.hi();
    let v = sum + Interval::new(-rb, rb).expect("ordered");
    let v = Interval::new(v.lo().max(-1.0), v.hi().min(1.0)).unwrap_or(v);
    v * sign
}

/// 2-periodic trigonometric series with cosine and sine parts, `k >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSeries2 {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries2 {
    pub fn zeros(m: usize) -> Self {
        TrigSeries2 {
            cos: vec![0.0; m],
            sin: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty()
    }

    pub fn restrict_even(&self) -> Result<CosineSeries<f64>, SpectralError> {
        let m = self.sin.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if m > EVEN_TOL {
            return Err(SpectralError::NotEvenError(m));
        }
        Ok(CosineSeries::new(self.cos.clone()))
    }

    /// `L2(0,2)` norm.
    pub fn norm_l2(&self) -> f64 {
        self.cos
            .iter()
            .chain(&self.sin)
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        let m = self.len().max(other.len());
        let g = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
        TrigSeries2 {
            cos: (0..m).map(|i| g(&self.cos, i) + g(&other.cos, i)).collect(),
            sin: (0..m).map(|i| g(&self.sin, i) + g(&other.sin, i)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        TrigSeries2 {
            cos: self.cos.iter().map(|c| c * s).collect(),
            sin: self.sin.iter().map(|c| c * s).collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        (0..self.len())
            .map(|i| {
                let t = (i + 1) as f64 * pi * x;
                self.cos[i] * t.cos() + self.sin[i] * t.sin()
            })
            .sum()
    }
}

/// Serialized form of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub n_sym: Option<usize>,
    pub coeffs: Vec<f64>,
}

impl SeriesJson {
    pub fn from_series(u: &CosineSeries<f64>, n_sym: Option<usize>) -> Self {
        SeriesJson {
            n_sym,
            coeffs: u.coeffs().to_vec(),
        }
    }

    pub fn series(&self) -> CosineSeries<f64> {
        CosineSeries::new(self.coeffs.clone())
    }
}
