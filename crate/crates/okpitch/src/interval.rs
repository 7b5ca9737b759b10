//! Directed-rounding interval arithmetic.
//!
//! Rounding is emulated under round-to-nearest: every endpoint that is not
//! exactly representable is pushed one ulp outward. Exactness is detected with
//! error-free transforms (TwoSum, FMA residuals), so exact operations on
//! integers and dyadic rationals do not widen.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("interval endpoint is NaN")]
    Nan,
    #[error("inverted interval [{lo}, {hi}]")]
    Inverted { lo: f64, hi: f64 },
    #[error("division by an interval containing zero")]
    DivByZeroInterval,
    #[error("dimension mismatch: {0}")]
    DimError(String),
    #[error("square root of an interval with a negative part")]
    NegativeSqrt,
    #[error("weights must be strictly positive")]
    BadWeight,
}

// Below this magnitude an FMA residual may itself underflow.
const TINY: f64 = 1e-290;

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
fn widen_down(x: f64, exact: bool) -> f64 {
    if exact {
        x
    } else {
        x.next_down()
    }
}

#[inline]
fn widen_up(x: f64, exact: bool) -> f64 {
    if exact {
        x
    } else {
        x.next_up()
    }
}

#[inline]
fn add_exact(a: f64, b: f64, s: f64) -> bool {
    s.is_finite() && two_sum_err(a, b, s) == 0.0
}

#[inline]
fn mul_exact(a: f64, b: f64, p: f64) -> bool {
    if !p.is_finite() {
        return a.is_infinite() || b.is_infinite();
    }
    if p == 0.0 {
        return a == 0.0 || b == 0.0;
    }
    p.abs() >= TINY && a.mul_add(b, -p) == 0.0
}

#[inline]
fn div_exact(a: f64, b: f64, q: f64) -> bool {
    if !q.is_finite() {
        return false;
    }
    if q == 0.0 {
        return a == 0.0;
    }
    q.abs() >= TINY && (-q).mul_add(b, a) == 0.0
}

/// Lower bound of `a + b`.
#[inline]
pub fn add_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    widen_down(s, add_exact(a, b, s))
}

/// Upper bound of `a + b`.
#[inline]
pub fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    widen_up(s, add_exact(a, b, s))
}

#[inline]
pub fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    widen_down(p, mul_exact(a, b, p))
}

#[inline]
pub fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    widen_up(p, mul_exact(a, b, p))
}

/// A closed interval `[lo, hi]` of reals.
#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.lo, self.hi].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [lo, hi] = <[f64; 2]>::deserialize(d)?;
        Interval::new(lo, hi).map_err(D::Error::custom)
    }
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if lo.is_nan() || hi.is_nan() {
            return Err(IntervalError::Nan);
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// Degenerate interval `[x, x]`. Panics on NaN.
    pub fn point(x: f64) -> Self {
        assert!(!x.is_nan(), "NaN interval endpoint");
        Interval { lo: x, hi: x }
    }

    /// Smallest interval containing both arguments, in either order.
    pub fn hull_of(a: f64, b: f64) -> Self {
        Interval::point(a).hull(Interval::point(b))
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        0.5 * self.lo + 0.5 * self.hi
    }

    /// Radius about `mid()`, rounded up so that `[mid-rad, mid+rad]` covers `self`.
    pub fn rad(&self) -> f64 {
        if self.lo == self.hi {
            return 0.0;
        }
        let m = self.mid();
        (self.hi - m).max(m - self.lo).next_up()
    }

    pub fn width(&self) -> f64 {
        add_up(self.hi, -self.lo)
    }

    /// Upper bound of `|x|` over the interval.
    #[inline]
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Lower bound of `|x|` over the interval.
    pub fn mig(&self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Certainly `self < other`.
    pub fn certainly_lt(&self, other: &Interval) -> bool {
        self.hi < other.lo
    }

    pub fn certainly_le(&self, other: &Interval) -> bool {
        self.hi <= other.lo
    }

    pub fn certainly_pos(&self) -> bool {
        self.lo > 0.0
    }

    pub fn certainly_neg(&self) -> bool {
        self.hi < 0.0
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval {
                lo: 0.0,
                hi: self.mag(),
            }
        }
    }

    pub fn sqr(self) -> Interval {
        let a = self.abs();
        Interval {
            lo: mul_down(a.lo, a.lo),
            hi: mul_up(a.hi, a.hi),
        }
    }

    pub fn powi(self, n: u32) -> Interval {
        match n {
            0 => Interval::ONE,
            1 => self,
            _ if n % 2 == 0 => self.powi(n / 2).sqr(),
            _ => self * self.powi(n - 1),
        }
    }

    pub fn sqrt(self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::NegativeSqrt);
        }
        let sd = |x: f64| {
            let s = x.sqrt();
            widen_down(s, s.is_finite() && (-s).mul_add(s, x) == 0.0 && (s == 0.0 || s >= TINY))
        };
        let su = |x: f64| {
            let s = x.sqrt();
            widen_up(s, s.is_finite() && (-s).mul_add(s, x) == 0.0 && (s == 0.0 || s >= TINY))
        };
        Ok(Interval {
            lo: sd(self.lo).max(0.0),
            hi: su(self.hi),
        })
    }

    /// Square root after clamping negative rounding debris to zero.
    pub fn sqrt_nonneg(self) -> Interval {
        Interval {
            lo: self.lo.max(0.0),
            hi: self.hi.max(0.0),
        }
        .sqrt()
        .expect("clamped interval is nonnegative")
    }

    pub fn try_div(self, rhs: Interval) -> Result<Interval, IntervalError> {
        if rhs.contains_zero() {
            return Err(IntervalError::DivByZeroInterval);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in [self.lo, self.hi] {
            for b in [rhs.lo, rhs.hi] {
                let q = a / b;
                let ex = div_exact(a, b, q);
                lo = lo.min(widen_down(q, ex));
                hi = hi.max(widen_up(q, ex));
            }
        }
        Ok(Interval { lo, hi })
    }

    pub fn recip(self) -> Result<Interval, IntervalError> {
        Interval::ONE.try_div(self)
    }

    /// Interval maximum: encloses `max(x, y)` for all `x in self`, `y in other`.
    pub fn max(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn min(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    /// Enclosure of pi.
    pub fn pi() -> Interval {
        Interval {
            lo: std::f64::consts::PI,
            hi: std::f64::consts::PI.next_up(),
        }
    }

    pub fn sqrt2() -> Interval {
        Interval::point(2.0).sqrt().expect("positive")
    }

    /// `(k pi)^2` from the cached table.
    pub fn kpi2(k: usize) -> Interval {
        let t = pi_table();
        if k < t.k2.len() {
            t.k2[k]
        } else {
            (Interval::point(k as f64) * Interval::pi()).sqr()
        }
    }

    /// `(k pi)^4` from the cached table.
    pub fn kpi4(k: usize) -> Interval {
        let t = pi_table();
        if k < t.k4.len() {
            t.k4[k]
        } else {
            Interval::kpi2(k).sqr()
        }
    }

    /// `1/(k pi)^2`, `k >= 1`.
    pub fn inv_kpi2(k: usize) -> Interval {
        let t = pi_table();
        if k < t.ik2.len() {
            t.ik2[k]
        } else {
            Interval::kpi2(k).recip().expect("k >= 1")
        }
    }

    /// `1/(k pi)^4`, `k >= 1`.
    pub fn inv_kpi4(k: usize) -> Interval {
        let t = pi_table();
        if k < t.ik4.len() {
            t.ik4[k]
        } else {
            Interval::kpi4(k).recip().expect("k >= 1")
        }
    }
}

struct PiTable {
    k2: Vec<Interval>,
    k4: Vec<Interval>,
    ik2: Vec<Interval>,
    ik4: Vec<Interval>,
}

const PI_TABLE_LEN: usize = 8192;

fn pi_table() -> &'static PiTable {
    static TABLE: OnceLock<PiTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let pi = Interval::pi();
        let k2: Vec<Interval> = (0..PI_TABLE_LEN)
            .map(|k| (Interval::point(k as f64) * pi).sqr())
            .collect();
        let k4: Vec<Interval> = k2.iter().map(|x| x.sqr()).collect();
        let inv = |v: &Vec<Interval>| -> Vec<Interval> {
            v.iter()
                .map(|x| x.recip().unwrap_or(Interval::ZERO))
                .collect()
        };
        let ik2 = inv(&k2);
        let ik4 = inv(&k4);
        PiTable { k2, k4, ik2, ik4 }
    })
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, rhs.lo),
            hi: add_up(self.hi, rhs.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, rhs: Interval) -> Interval {
        self + (-rhs)
    }
}

impl Mul for Interval {
    type Output = Interval;
    #[inline]
    fn mul(self, rhs: Interval) -> Interval {
        if self.lo == self.hi && rhs.lo == rhs.hi {
            let (a, b) = (self.lo, rhs.lo);
            let p = a * b;
            let ex = mul_exact(a, b, p);
            return Interval {
                lo: widen_down(p, ex),
                hi: widen_up(p, ex),
            };
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in [self.lo, self.hi] {
            for b in [rhs.lo, rhs.hi] {
                let p = a * b;
                let ex = mul_exact(a, b, p);
                lo = lo.min(widen_down(p, ex));
                hi = hi.max(widen_up(p, ex));
            }
        }
        Interval { lo, hi }
    }
}

impl AddAssign for Interval {
    #[inline]
    fn add_assign(&mut self, rhs: Interval) {
        *self = *self + rhs;
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, rhs: f64) -> Interval {
        self + Interval::point(rhs)
    }
}

impl Sub<f64> for Interval {
    type Output = Interval;
    fn sub(self, rhs: f64) -> Interval {
        self - Interval::point(rhs)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, rhs: f64) -> Interval {
        self * Interval::point(rhs)
    }
}

impl Mul<Interval> for f64 {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        Interval::point(self) * rhs
    }
}

/// Binary arithmetic operation selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn iv_arith(op: ArithOp, a: Interval, b: Interval) -> Result<Interval, IntervalError> {
    match op {
        ArithOp::Add => Ok(a + b),
        ArithOp::Sub => Ok(a - b),
        ArithOp::Mul => Ok(a * b),
        ArithOp::Div => a.try_div(b),
    }
}

/// Scalars that the series algebra can run on: plain floats for the
/// numerical path, intervals for the rigorous one.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn zero() -> Self;
    fn from_f64(x: f64) -> Self;
    fn is_zero(&self) -> bool;
    /// Upper bound of the magnitude.
    fn mag(&self) -> f64;
    fn kpi2(k: usize) -> Self;
    fn kpi4(k: usize) -> Self;
    fn inv_kpi2(k: usize) -> Self;
    fn inv_kpi4(k: usize) -> Self;
    fn sqrt_nonneg(self) -> Self;
    fn half(self) -> Self;
    fn to_interval(self) -> Interval;
    fn abs_val(self) -> Self;
    /// Reciprocal of a positive quantity. Not certified positive gives `[0, inf]`.
    fn recip_pos(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn mag(&self) -> f64 {
        self.abs()
    }
    fn kpi2(k: usize) -> Self {
        let t = k as f64 * std::f64::consts::PI;
        t * t
    }
    fn kpi4(k: usize) -> Self {
        let t = <f64 as Scalar>::kpi2(k);
        t * t
    }
    fn inv_kpi2(k: usize) -> Self {
        1.0 / <f64 as Scalar>::kpi2(k)
    }
    fn inv_kpi4(k: usize) -> Self {
        1.0 / <f64 as Scalar>::kpi4(k)
    }
    fn sqrt_nonneg(self) -> Self {
        self.max(0.0).sqrt()
    }
    fn half(self) -> Self {
        0.5 * self
    }
    fn to_interval(self) -> Interval {
        Interval::point(self)
    }
    fn abs_val(self) -> Self {
        self.abs()
    }
    fn recip_pos(self) -> Self {
        1.0 / self
    }
}

impl Scalar for Interval {
    fn zero() -> Self {
        Interval::ZERO
    }
    fn from_f64(x: f64) -> Self {
        Interval::point(x)
    }
    fn is_zero(&self) -> bool {
        self.lo == 0.0 && self.hi == 0.0
    }
    fn mag(&self) -> f64 {
        Interval::mag(self)
    }
    fn kpi2(k: usize) -> Self {
        Interval::kpi2(k)
    }
    fn kpi4(k: usize) -> Self {
        Interval::kpi4(k)
    }
    fn inv_kpi2(k: usize) -> Self {
        Interval::inv_kpi2(k)
    }
    fn inv_kpi4(k: usize) -> Self {
        Interval::inv_kpi4(k)
    }
    fn sqrt_nonneg(self) -> Self {
        Interval::sqrt_nonneg(self)
    }
    fn half(self) -> Self {
        self * 0.5
    }
    fn to_interval(self) -> Interval {
        self
    }
    fn abs_val(self) -> Self {
        self.abs()
    }
    fn recip_pos(self) -> Self {
        if self.lo > 0.0 {
            self.recip().expect("positive")
        } else {
            Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            }
        }
    }
}

/// Horner evaluation in interval arithmetic; `coeffs[i]` multiplies `x^i`.
pub fn iv_horner(coeffs: &[f64], x: Interval) -> Interval {
    let mut acc = Interval::ZERO;
    for &c in coeffs.iter().rev() {
        acc = acc * x + Interval::point(c);
    }
    acc
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * i as f64)
        .collect()
}

fn trimmed(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

/// Real roots of `c0 + c1 x + c2 x^2` (approximate, used only as split points).
fn poly_roots_le2(c: &[f64]) -> Vec<f64> {
    match c.len() {
        0 | 1 => vec![],
        2 => vec![-c[0] / c[1]],
        _ => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                // near-double root: keep the vertex as a split point
                return vec![-b / (2.0 * a)];
            }
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            let mut r = Vec::new();
            if q != 0.0 {
                r.push(cc / q);
                r.push(q / a);
            } else {
                r.push(0.0);
            }
            r
        }
    }
}

/// Range enclosure of a polynomial of degree at most 3 over `domain`.
///
/// The domain is split at small neighborhoods of the critical points (and
/// of the inflection point). On each remaining gap the derivative has a
/// certified constant sign, so endpoint values give the exact range there;
/// neighborhoods use a mean-value form. Higher degrees fall back to Horner.
pub fn iv_poly_range(coeffs: &[f64], domain: Interval) -> Interval {
    let c = trimmed(coeffs);
    if c.is_empty() {
        return Interval::ZERO;
    }
    if c.len() > 4 {
        return iv_horner(c, domain);
    }
    let (lo, hi) = (domain.lo(), domain.hi());
    if lo == hi {
        return iv_horner(c, domain);
    }
    let d1 = derivative(c);
    let d2 = derivative(&d1);
    let mut specials = poly_roots_le2(trimmed(&d1));
    specials.extend(poly_roots_le2(trimmed(&d2)));
    let mut cuts: Vec<(f64, f64)> = specials
        .into_iter()
        .filter(|s| s.is_finite())
        .map(|s| {
            let del = 1e-10 * s.abs().max(1.0);
            ((s - del).max(lo), (s + del).min(hi))
        })
        .filter(|(a, b)| a <= b)
        .collect();
    cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    // merge overlapping neighborhoods
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in cuts {
        if let Some(last) = merged.last_mut() {
            if a <= last.1 {
                last.1 = last.1.max(b);
                continue;
            }
        }
        merged.push((a, b));
    }
    let mean_value = |a: f64, b: f64| -> Interval {
        let m = 0.5 * a + 0.5 * b;
        let iv = Interval::hull_of(a, b);
        let dev = iv - Interval::point(m);
        let mv = iv_horner(c, Interval::point(m)) + iv_horner(&d1, iv) * dev;
        let hv = iv_horner(c, iv);
        Interval {
            lo: mv.lo.max(hv.lo),
            hi: mv.hi.min(hv.hi),
        }
    };
    let mut out: Option<Interval> = None;
    let mut push = |x: Interval| {
        out = Some(match out {
            Some(o) => o.hull(x),
            None => x,
        })
    };
    let mut x = lo;
    for (a, b) in merged.iter().copied().chain(std::iter::once((hi, hi))) {
        if a > x {
            let pa = iv_horner(&d1, Interval::point(x));
            let pb = iv_horner(&d1, Interval::point(a));
            let monotone =
                (pa.certainly_pos() && pb.certainly_pos()) || (pa.certainly_neg() && pb.certainly_neg());
            if monotone || d1.is_empty() {
                push(iv_horner(c, Interval::point(x)));
                push(iv_horner(c, Interval::point(a)));
            } else {
                push(mean_value(x, a));
            }
        }
        if b > a {
            push(mean_value(a, b));
        } else {
            push(iv_horner(c, Interval::point(a)));
        }
        x = x.max(b);
    }
    out.unwrap_or_else(|| iv_horner(c, domain))
}

/// Fixed-length vector of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    data: Vec<Interval>,
}

impl IntervalVector {
    pub fn new(data: Vec<Interval>) -> Self {
        IntervalVector { data }
    }

    pub fn zeros(n: usize) -> Self {
        IntervalVector {
            data: vec![Interval::ZERO; n],
        }
    }

    pub fn from_points(x: &[f64]) -> Self {
        IntervalVector {
            data: x.iter().map(|&v| Interval::point(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.data
    }

    pub fn get(&self, i: usize) -> Interval {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: Interval) {
        self.data[i] = v;
    }

    /// Enclosure of the Euclidean norm.
    pub fn norm2(&self) -> Interval {
        norm2(&self.data)
    }
}

/// Enclosure of `sqrt(sum x_i^2)`.
pub fn norm2(x: &[Interval]) -> Interval {
    let mut s = Interval::ZERO;
    for v in x {
        s += v.sqr();
    }
    s.sqrt_nonneg()
}

/// Dense row-major interval matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Interval>) -> Result<Self, IntervalError> {
        if data.len() != rows * cols {
            return Err(IntervalError::DimError(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(IntervalMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntervalMatrix {
            rows,
            cols,
            data: vec![Interval::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Interval::ONE);
        }
        m
    }

    pub fn from_point(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(Interval::point(a[(i, j)]));
            }
        }
        IntervalMatrix { rows, cols, data }
    }

    /// Build from column vectors of equal length.
    pub fn from_columns(rows: usize, columns: &[Vec<Interval>]) -> Result<Self, IntervalError> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(IntervalError::DimError(format!(
                    "column {j} has {} rows, expected {rows}",
                    c.len()
                )));
            }
            for (i, v) in c.iter().enumerate() {
                m.data[i * cols + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Interval) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mid(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mid())
    }

    pub fn rad(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).rad())
    }

    pub fn transpose(&self) -> IntervalMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Enclosure of the Frobenius norm.
    pub fn frobenius(&self) -> Interval {
        norm2(&self.data)
    }

    pub fn sub(&self, other: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(IntervalError::DimError("matrix difference".into()));
        }
        Ok(IntervalMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a - *b)
                .collect(),
        })
    }
}

pub fn iv_matvec(a: &IntervalMatrix, x: &IntervalVector) -> Result<IntervalVector, IntervalError> {
    if a.cols != x.len() {
        return Err(IntervalError::DimError(format!(
            "{}x{} matrix times vector of length {}",
            a.rows,
            a.cols,
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(a.rows);
    for i in 0..a.rows {
        let mut s = Interval::ZERO;
        for j in 0..a.cols {
            s += a.get(i, j) * x.get(j);
        }
        out.push(s);
    }
    Ok(IntervalVector::new(out))
}

// Relative error bound for a length-k float dot product, with slack for the
// radius arithmetic itself (valid while (k+4) u < 0.05).
fn gamma(k: usize) -> f64 {
    (k as f64 + 4.0) * 1.2e-16
}

/// Midpoint-radius product of interval matrices using floating-point matmul.
///
/// For `A = <Ac, Ar>`, `B = <Bc, Br>` the exact product set lies in
/// `fl(Ac Bc) +- [g |Ac||Bc| + |Ac| Br + Ar (|Bc| + Br)]`, inflated by
/// `(1 + 2g)` to absorb rounding in the radius computation and by a small
/// absolute term for underflow.
pub fn iv_matmul(a: &IntervalMatrix, b: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
    if a.cols != b.rows {
        return Err(IntervalError::DimError(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (ac, ar) = (a.mid(), a.rad());
    let (bc, br) = (b.mid(), b.rad());
    Ok(mr_product(&ac, &ar, &bc, &br))
}

/// Product of a point matrix with an interval matrix.
pub fn iv_matmul_point_left(
    a: &DMatrix<f64>,
    b: &IntervalMatrix,
) -> Result<IntervalMatrix, IntervalError> {
    if a.ncols() != b.rows {
        return Err(IntervalError::DimError(format!(
            "{}x{} times {}x{}",
            a.nrows(),
            a.ncols(),
            b.rows,
            b.cols
        )));
    }
    let ar = DMatrix::zeros(a.nrows(), a.ncols());
    Ok(mr_product(a, &ar, &b.mid(), &b.rad()))
}

fn mr_product(
    ac: &DMatrix<f64>,
    ar: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    br: &DMatrix<f64>,
) -> IntervalMatrix {
    let k = ac.ncols();
    let g = gamma(k);
    let c = ac * bc;
    let aa = ac.abs();
    let ba = bc.abs();
    let mut r = (&aa * &ba) * g;
    let a_has_rad = ar.iter().any(|&x| x != 0.0);
    let b_has_rad = br.iter().any(|&x| x != 0.0);
    if b_has_rad {
        r += &aa * br;
    }
    if a_has_rad {
        r += ar * (&ba + br);
    }
    let infl = 1.0 + 2.0 * g;
    let floor = (k as f64 + 4.0) * f64::MIN_POSITIVE;
    let (rows, cols) = c.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let rad = (r[(i, j)] * infl + floor).next_up();
            let m = c[(i, j)];
            data.push(Interval {
                lo: (m - rad).next_down(),
                hi: (m + rad).next_up(),
            });
        }
    }
    IntervalMatrix { rows, cols, data }
}

/// Method used by [`iv_weighted_opnorm_bound_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormBound {
    /// `||M||_2 <= ||M||_F`.
    Frobenius,
    /// `lambda_max(M^T M)` bounded after deflating the dominant eigenpairs of
    /// the midpoint Gram matrix: with `G = M^T M`, approximate top eigenpairs
    /// `(mu_i, q_i)` and a shift `s`,
    /// `lambda_max(G) <= s + max_i(mu_i - s) ||Q^T Q|| + ||G - s I - Q D Q^T||_F`.
    DeflatedGram,
}

/// Upper bound of the operator norm of `A` from the weighted space
/// `||x|| = ||diag(win) x||_2` into `||y|| = ||diag(wout) y||_2`.
///
/// Uses the smaller of the Frobenius and deflated-Gram bounds. The returned
/// interval encloses the chosen bound; its upper end is the certified value.
pub fn iv_weighted_opnorm_bound(
    a: &IntervalMatrix,
    win: &[f64],
    wout: &[f64],
) -> Result<Interval, IntervalError> {
    let f = iv_weighted_opnorm_bound_with(a, win, wout, NormBound::Frobenius)?;
    let g = iv_weighted_opnorm_bound_with(a, win, wout, NormBound::DeflatedGram)?;
    Ok(if g.hi() < f.hi() { g } else { f })
}

pub fn iv_weighted_opnorm_bound_with(
    a: &IntervalMatrix,
    win: &[f64],
    wout: &[f64],
    method: NormBound,
) -> Result<Interval, IntervalError> {
    if win.len() != a.cols || wout.len() != a.rows {
        return Err(IntervalError::DimError("weight vector length".into()));
    }
    if win.iter().chain(wout).any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(IntervalError::BadWeight);
    }
    let mut m = a.clone();
    for j in 0..a.cols {
        let iw = Interval::point(win[j]).recip()?;
        for i in 0..a.rows {
            let v = a.get(i, j) * Interval::point(wout[i]) * iw;
            m.set(i, j, v);
        }
    }
    match method {
        NormBound::Frobenius => Ok(m.frobenius()),
        NormBound::DeflatedGram => deflated_gram_bound(&m),
    }
}

/// Rigorous upper bound of the spectral norm via the deflated Gram bound.
pub fn spectral_norm_bound(m: &IntervalMatrix) -> Interval {
    let f = m.frobenius();
    match deflated_gram_bound(m) {
        Ok(g) if g.hi() < f.hi() => g,
        _ => f,
    }
}

fn deflated_gram_bound(m: &IntervalMatrix) -> Result<Interval, IntervalError> {
    let n = m.cols;
    if n == 0 || m.rows == 0 {
        return Ok(Interval::ZERO);
    }
    let g = iv_matmul(&m.transpose(), m)?;
    let gc = g.mid();
    let gs = (&gc + gc.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let p = n.min(32);
    let shift = if p < n {
        let rest: Vec<f64> = order[p..].iter().map(|&i| eig.eigenvalues[i]).collect();
        (rest.iter().sum::<f64>() / rest.len() as f64).max(0.0)
    } else {
        0.0
    };
    let mut q = DMatrix::zeros(n, p);
    let mut d = Vec::with_capacity(p);
    for (c, &i) in order[..p].iter().enumerate() {
        q.set_column(c, &eig.eigenvectors.column(i));
        d.push((eig.eigenvalues[i] - shift).max(0.0));
    }
    let qi = IntervalMatrix::from_point(&q);
    let mut qd = qi.clone();
    for i in 0..n {
        for c in 0..p {
            qd.set(i, c, qi.get(i, c) * Interval::point(d[c]));
        }
    }
    let low = iv_matmul(&qd, &qi.transpose())?;
    let mut e = g.sub(&low)?;
    for i in 0..n {
        let v = e.get(i, i) - Interval::point(shift);
        e.set(i, i, v);
    }
    let efro = e.frobenius();
    let qtq = iv_matmul(&qi.transpose(), &qi)?;
    let qerr = qtq.sub(&IntervalMatrix::identity(p))?.frobenius();
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let lam = Interval::point(shift) + Interval::point(dmax) * (Interval::ONE + qerr) + efro;
    Ok(Interval {
        lo: 0.0,
        hi: lam.sqrt_nonneg().hi(),
    })
}
