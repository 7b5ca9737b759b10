//! The cyclic operator `T_n u(x) = -u(x + 1/n)` and the induced splitting
//! of cosine series into classes A, B and C.
//!
//! Class A is the fixed space of `T_n`. On cosine modes this means `k/n` is
//! an odd integer: `cos(k pi (x + 1/n)) = (-1)^(k/n) cos(k pi x)` when `n | k`,
//! so even multiples of `n` are negated and belong to the parity classes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{Interval, Scalar};
use crate::spectral::{CosineSeries, TrigSeries2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("kernel classification inconclusive: {0}")]
    Inconclusive(String),
    #[error("symmetry parameter n must be at least 2 (got {0})")]
    BadN(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymClass {
    A,
    B,
    C,
}

impl fmt::Display for SymClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymClass::A => "A",
            SymClass::B => "B",
            SymClass::C => "C",
        };
        f.write_str(s)
    }
}

impl SymClass {
    pub const ALL: [SymClass; 3] = [SymClass::A, SymClass::B, SymClass::C];

    pub fn index(self) -> usize {
        match self {
            SymClass::A => 0,
            SymClass::B => 1,
            SymClass::C => 2,
        }
    }
}

/// A class tag together with the layer count it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryClass {
    pub tag: SymClass,
    pub n: usize,
}

/// Class of wave number `k >= 1` under `T_n`, `n >= 1`.
pub fn class_of(k: usize, n: usize) -> SymClass {
    debug_assert!(k >= 1 && n >= 1);
    if k % n == 0 && (k / n) % 2 == 1 {
        return SymClass::A;
    }
    let k_even = k % 2 == 0;
    if n % 2 == 0 {
        if k_even {
            SymClass::B
        } else {
            SymClass::C
        }
    } else if k_even {
        SymClass::C
    } else {
        SymClass::B
    }
}

/// Wave numbers `1..=max_k` in class `tag`.
pub fn class_modes(n: usize, tag: SymClass, max_k: usize) -> Vec<usize> {
    (1..=max_k).filter(|&k| class_of(k, n) == tag).collect()
}

pub fn project_class<T: Scalar>(u: &CosineSeries<T>, n: usize, tag: SymClass) -> CosineSeries<T> {
    u.map(|k, c| if class_of(k, n) == tag { c } else { T::zero() })
}

/// Fraction of `sum a_k^2` carried by each class, indexed by [`SymClass::index`].
pub fn class_mass(coeffs: &[f64], n: usize) -> [f64; 3] {
    let mut m = [0.0; 3];
    for (i, c) in coeffs.iter().enumerate() {
        m[class_of(i + 1, n).index()] += c * c;
    }
    let tot: f64 = m.iter().sum();
    if tot > 0.0 {
        for v in &mut m {
            *v /= tot;
        }
    }
    m
}

/// Largest coefficient magnitude outside class `tag`.
pub fn off_class_max<T: Scalar>(u: &CosineSeries<T>, n: usize, tag: SymClass) -> f64 {
    u.coeffs()
        .iter()
        .enumerate()
        .filter(|(i, _)| class_of(i + 1, n) != tag)
        .fold(0.0, |m, (_, c)| m.max(c.mag()))
}

fn shift_angle(k: usize, n: usize) -> (f64, f64) {
    // cos and sin of k pi / n, reduced so multiples of pi/2 come out exact
    let r = k % (2 * n);
    if (2 * r) % n == 0 {
        return match 2 * r / n {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
    }
    let t = std::f64::consts::PI * r as f64 / n as f64;
    (t.cos(), t.sin())
}

/// `T_n` on 2-periodic series.
pub fn apply_tn(v: &TrigSeries2, n: usize) -> TrigSeries2 {
    let mut out = TrigSeries2::zeros(v.len());
    for i in 0..v.len() {
        let (c, s) = shift_angle(i + 1, n);
        let (a, b) = (v.cos[i], v.sin[i]);
        // -[a cos(kpi x + t) + b sin(kpi x + t)]
        out.cos[i] = -a * c - b * s;
        out.sin[i] = a * s - b * c;
    }
    out
}

/// `|| m_tag(T_n) v ||` in `L2(0,2)`, with `m_a = t - 1`,
/// `m_b = 1 + t + ... + t^(n-1)`, `m_c = t^n + 1`.
pub fn annihilator_residual(v: &TrigSeries2, n: usize, tag: SymClass) -> f64 {
    match tag {
        SymClass::A => apply_tn(v, n).add(&v.scale(-1.0)).norm_l2(),
        SymClass::B => {
            let mut acc = v.clone();
            let mut p = v.clone();
            for _ in 1..n {
                p = apply_tn(&p, n);
                acc = acc.add(&p);
            }
            acc.norm_l2()
        }
        SymClass::C => {
            let mut p = v.clone();
            for _ in 0..n {
                p = apply_tn(&p, n);
            }
            p.add(v).norm_l2()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseLabel {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "d")]
    D,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseLabel::A => "a",
            CaseLabel::B => "b",
            CaseLabel::C => "c",
            CaseLabel::D => "d",
        };
        f.write_str(s)
    }
}

/// Bifurcation scenario of a symmetry-breaking kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub n_parity: Parity,
    pub kernel_class: SymClass,
    /// Symmetry of the kernel about x = 1/2.
    pub kernel_symmetry: Parity,
    /// Symmetry of the bifurcating solution about x = 1/2.
    pub u0_symmetry: Parity,
    #[serde(rename = "case")]
    pub case_label: CaseLabel,
}

impl ScenarioRecord {
    /// Scenario for a kernel of class `kernel_class` (B or C) under `T_n`.
    pub fn from_class(n: usize, kernel_class: SymClass) -> Option<Self> {
        let n_even = n % 2 == 0;
        let (case_label, kernel_symmetry) = match (n_even, kernel_class) {
            (true, SymClass::B) => (CaseLabel::A, Parity::Even),
            (true, SymClass::C) => (CaseLabel::B, Parity::Odd),
            (false, SymClass::C) => (CaseLabel::C, Parity::Even),
            (false, SymClass::B) => (CaseLabel::D, Parity::Odd),
            (_, SymClass::A) => return None,
        };
        let n_parity = if n_even { Parity::Even } else { Parity::Odd };
        Some(ScenarioRecord {
            n_parity,
            kernel_class,
            kernel_symmetry,
            u0_symmetry: n_parity,
            case_label,
        })
    }
}

/// Point values used by the kernel tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTests {
    pub at_half_period: Interval,
    pub sum_ends: Interval,
    pub diff_ends: Interval,
}

pub fn kernel_tests<T: Scalar>(phi: &CosineSeries<T>, n: usize) -> KernelTests {
    let x = Interval::ONE
        .try_div(Interval::point((2 * n) as f64))
        .expect("positive divisor");
    let p0 = phi.eval_interval(Interval::ZERO);
    let p1 = phi.eval_interval(Interval::ONE);
    KernelTests {
        at_half_period: phi.eval_interval(x),
        sum_ends: p0 + p1,
        diff_ends: p0 - p1,
    }
}

/// Rigorous B/C classification of a kernel from interval point values.
///
/// For even `n`: `phi(1/(2n)) != 0` and `phi(0)+phi(1) != 0` give class B;
/// `phi(0)-phi(1) != 0` gives class C. For odd `n` the roles of the sum and
/// difference swap. A kernel passing both tests is reported as inconclusive.
pub fn classify_kernel<T: Scalar>(
    phi: &CosineSeries<T>,
    n: usize,
) -> Result<ScenarioRecord, SymmetryError> {
    if n < 2 {
        return Err(SymmetryError::BadN(n));
    }
    classify_tests(&kernel_tests(phi, n), n)
}

/// Decision rule of [`classify_kernel`] applied to precomputed test values.
pub fn classify_tests(t: &KernelTests, n: usize) -> Result<ScenarioRecord, SymmetryError> {
    if n < 2 {
        return Err(SymmetryError::BadN(n));
    }
    let (b_side, c_side) = if n % 2 == 0 {
        (t.sum_ends, t.diff_ends)
    } else {
        (t.diff_ends, t.sum_ends)
    };
    let is_b = !t.at_half_period.contains_zero() && !b_side.contains_zero();
    let is_c = !c_side.contains_zero();
    match (is_b, is_c) {
        (true, false) => Ok(ScenarioRecord::from_class(n, SymClass::B).expect("B")),
        (false, true) => Ok(ScenarioRecord::from_class(n, SymClass::C).expect("C")),
        (true, true) => Err(SymmetryError::Inconclusive(
            "kernel passes both the B and the C test".into(),
        )),
        (false, false) => Err(SymmetryError::Inconclusive(format!(
            "no test excludes zero: phi(1/(2n)) in {:?}, phi(0)+phi(1) in {:?}, phi(0)-phi(1) in {:?}",
            t.at_half_period, t.sum_ends, t.diff_ends
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_examples() {
        assert_eq!(class_of(5, 5), SymClass::A);
        assert_eq!(class_of(15, 5), SymClass::A);
        assert_eq!(class_of(10, 5), SymClass::C);
        assert_eq!(class_of(3, 5), SymClass::B);
        assert_eq!(class_of(4, 5), SymClass::C);
        assert_eq!(class_of(4, 4), SymClass::A);
        assert_eq!(class_of(8, 4), SymClass::B);
        assert_eq!(class_of(3, 4), SymClass::C);
    }

    #[test]
    fn project_example() {
        let u = CosineSeries::new(vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        let a = project_class(&u, 5, SymClass::A);
        assert_eq!(a.trimmed(), CosineSeries::mode(5, 1.0));
    }

    #[test]
    fn tn_fixes_cos5_for_n5() {
        let v = CosineSeries::mode(5, 1.0).embed_even();
        let w = apply_tn(&v, 5);
        assert!((w.cos[4] - 1.0).abs() < 1e-15 && w.sin[4].abs() < 1e-15);
        assert!(annihilator_residual(&v, 5, SymClass::A) < 1e-12);
        let v = CosineSeries::mode(3, 1.0).embed_even();
        assert!(annihilator_residual(&v, 5, SymClass::B) < 1e-10);
        let v = CosineSeries::mode(4, 1.0).embed_even();
        assert!(annihilator_residual(&v, 5, SymClass::C) < 1e-10);
    }

    #[test]
    fn tn_period() {
        let v = TrigSeries2 {
            cos: vec![0.3, -0.2, 0.7, 1.1, 0.0, 0.4],
            sin: vec![0.1, 0.5, -0.3, 0.0, 0.9, -0.6],
        };
        for n in 2..=7 {
            let mut p = v.clone();
            for _ in 0..2 * n {
                p = apply_tn(&p, n);
            }
            assert!(p.add(&v.scale(-1.0)).norm_l2() < 1e-12);
        }
    }

    #[test]
    fn classify_cos3_n5() {
        let s = classify_kernel(&CosineSeries::mode(3, 1.0), 5).unwrap();
        assert_eq!(s.kernel_class, SymClass::B);
        assert_eq!(s.case_label, CaseLabel::D);
        let s = classify_kernel(&CosineSeries::mode(2, 1.0), 5).unwrap();
        assert_eq!(s.case_label, CaseLabel::C);
        let s = classify_kernel(&CosineSeries::mode(2, 1.0), 4).unwrap();
        assert_eq!(s.case_label, CaseLabel::A);
        let s = classify_kernel(&CosineSeries::mode(3, 1.0), 4).unwrap();
        assert_eq!(s.case_label, CaseLabel::B);
        assert!(classify_kernel(&CosineSeries::mode(5, 1.0), 5).is_err());
    }

    #[test]
    fn scenario_json() {
        let s = ScenarioRecord::from_class(5, SymClass::B).unwrap();
        let j = serde_json::to_value(s).unwrap();
        assert_eq!(j["case"], "d");
        assert_eq!(j["kernel_class"], "B");
        assert_eq!(j["n_parity"], "odd");
    }
}
