//! Truncated asymptotic series in a formal positive infinitesimal `ε`.
//!
//! An [`AsymptoticNumber`] stores `Σ_j c_j ε^(k₀+j)` for `j = 0..=K`, where
//! `k₀` is the leading order (negative for infinite numbers) and `K` is the
//! truncation order shared by every number in a computation. Results are
//! always cut back to `K + 1` coefficients after the leading one.
//!
//! Because the window is relative to the leading order, cancellation can
//! push a number's window past what its inputs actually determined. Each
//! number therefore also tracks the absolute order through which it is
//! known exactly (`None` when nothing has been truncated yet). The relation
//! predicates use that bound to tell a true verdict from one that merely
//! reflects missing terms.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Truncation order used when callers have no reason to pick another.
pub const DEFAULT_TRUNCATION: usize = 8;

/// Coefficients below this fraction of the operand scale are rounding noise.
const FLUSH_RELATIVE: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{op} needs a finite argument, got leading order {leading_order}")]
    InfiniteInput {
        op: &'static str,
        leading_order: i32,
    },
    #[error("infinite number has no shadow")]
    NoShadow,
    #[error("truncation orders differ ({left} vs {right})")]
    TruncationMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analytic {
    Sin,
    Cos,
    Exp,
}

/// Outcome of a relation test on truncated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Holds,
    Fails,
    /// Every computed coefficient of the discriminating quantity vanished,
    /// but the quantity is only known through `through_order`. The
    /// `truncated_answer` is what the truncated values say.
    Undecidable {
        through_order: i32,
        truncated_answer: bool,
    },
}

impl Decision {
    /// The verdict as computed from the truncated values.
    pub fn as_bool(self) -> bool {
        match self {
            Decision::Holds => true,
            Decision::Fails => false,
            Decision::Undecidable {
                truncated_answer, ..
            } => truncated_answer,
        }
    }
}

/// Leading term of a quantity that is expected to be small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Defect {
    /// Exactly zero at every order.
    None,
    /// Zero through the given order; nothing is known beyond it.
    VanishesThrough(i32),
    Leading {
        order: i32,
        coeff: Complex64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticNumber {
    leading_order: i32,
    coeffs: Vec<Complex64>,
    truncation: usize,
    known_through: Option<i32>,
}

fn min_known(a: Option<i32>, b: Option<i32>) -> Option<i32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

fn max_norm(coeffs: &[Complex64]) -> f64 {
    coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

impl AsymptoticNumber {
    pub fn zero(truncation: usize) -> Self {
        Self {
            leading_order: 0,
            coeffs: Vec::new(),
            truncation,
            known_through: None,
        }
    }

    pub fn constant(value: impl Into<Complex64>, truncation: usize) -> Self {
        Self::monomial(value, 0, truncation)
    }

    /// `value · ε^order`.
    pub fn monomial(value: impl Into<Complex64>, order: i32, truncation: usize) -> Self {
        let value = value.into();
        if value == ZERO {
            return Self::zero(truncation);
        }
        let mut coeffs = vec![ZERO; truncation + 1];
        coeffs[0] = value;
        Self {
            leading_order: order,
            coeffs,
            truncation,
            known_through: None,
        }
    }

    /// The base infinitesimal `ε`.
    pub fn epsilon(truncation: usize) -> Self {
        Self::monomial(1.0, 1, truncation)
    }

    /// Builds `Σ coeffs[j] ε^(leading_order + j)`, normalizing and truncating.
    pub fn from_coeffs(leading_order: i32, coeffs: Vec<Complex64>, truncation: usize) -> Self {
        let scale = max_norm(&coeffs);
        Self::normalize(leading_order, coeffs, None, truncation, scale)
    }

    fn normalize(
        lead: i32,
        mut dense: Vec<Complex64>,
        mut known: Option<i32>,
        truncation: usize,
        scale: f64,
    ) -> Self {
        let floor = FLUSH_RELATIVE * scale.max(max_norm(&dense));
        for (j, c) in dense.iter_mut().enumerate() {
            let beyond_known = known.is_some_and(|k| lead + j as i32 > k);
            if c.norm() < floor || beyond_known {
                *c = ZERO;
            }
        }
        let Some(first) = dense.iter().position(|c| *c != ZERO) else {
            return Self {
                known_through: known,
                ..Self::zero(truncation)
            };
        };
        let new_lead = lead + first as i32;
        let end = (first + truncation + 1).min(dense.len());
        if dense[end..].iter().any(|c| *c != ZERO) {
            known = min_known(known, Some(new_lead + truncation as i32));
        }
        let mut coeffs = dense[first..end].to_vec();
        coeffs.resize(truncation + 1, ZERO);
        Self {
            leading_order: new_lead,
            coeffs,
            truncation,
            known_through: known,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Leading order `k₀`; zero for the canonical zero.
    pub fn leading_order(&self) -> i32 {
        self.leading_order
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Coefficients `c_0..=c_K` relative to the leading order (empty for zero).
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Absolute order through which this number is exact, or `None` if no
    /// truncation has affected it.
    pub fn known_through(&self) -> Option<i32> {
        self.known_through
    }

    /// Coefficient of `ε^order`; zero outside the stored window.
    pub fn coeff(&self, order: i32) -> Complex64 {
        let j = order - self.leading_order;
        if j < 0 {
            return ZERO;
        }
        self.coeffs.get(j as usize).copied().unwrap_or(ZERO)
    }

    pub fn is_finite(&self) -> bool {
        self.is_zero() || self.leading_order >= 0
    }

    pub fn is_infinitesimal(&self) -> bool {
        self.is_zero() || self.leading_order >= 1
    }

    fn check_truncation(&self, other: &Self) -> Result<(), SeriesError> {
        if self.truncation == other.truncation {
            Ok(())
        } else {
            Err(SeriesError::TruncationMismatch {
                left: self.truncation,
                right: other.truncation,
            })
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_truncation(other)?;
        let known = min_known(self.known_through, other.known_through);
        let scale = max_norm(&self.coeffs).max(max_norm(&other.coeffs));
        match (self.is_zero(), other.is_zero()) {
            (true, true) => {
                return Ok(Self {
                    known_through: known,
                    ..Self::zero(self.truncation)
                })
            }
            (true, false) => return Ok(other.clone().with_known(known)),
            (false, true) => return Ok(self.clone().with_known(known)),
            (false, false) => {}
        }
        let lead = self.leading_order.min(other.leading_order);
        let top = (self.leading_order + self.coeffs.len() as i32)
            .max(other.leading_order + other.coeffs.len() as i32);
        let mut dense = vec![ZERO; (top - lead) as usize];
        for src in [self, other] {
            let offset = (src.leading_order - lead) as usize;
            for (j, c) in src.coeffs.iter().enumerate() {
                dense[offset + j] += c;
            }
        }
        Ok(Self::normalize(lead, dense, known, self.truncation, scale))
    }

    fn with_known(self, known: Option<i32>) -> Self {
        let lead = self.leading_order;
        let truncation = self.truncation;
        let scale = max_norm(&self.coeffs);
        Self::normalize(lead, self.coeffs, known, truncation, scale)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.checked_add(&other.neg_ref())
    }

    fn neg_ref(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            ..self.clone()
        }
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_truncation(other)?;
        let k = self.truncation;
        match (self.is_zero(), other.is_zero()) {
            (true, true) => {
                let known = match (self.known_through, other.known_through) {
                    (Some(a), Some(b)) => Some(a + b + 1),
                    _ => None,
                };
                return Ok(Self {
                    known_through: known,
                    ..Self::zero(k)
                });
            }
            (true, false) => {
                let known = self.known_through.map(|a| a + other.leading_order);
                return Ok(Self {
                    known_through: known,
                    ..Self::zero(k)
                });
            }
            (false, true) => return other.checked_mul(self),
            (false, false) => {}
        }
        // error terms: exact(a)·O(err b) + exact(b)·O(err a)
        let known = min_known(
            other.known_through.map(|kb| self.leading_order + kb),
            self.known_through.map(|ka| other.leading_order + ka),
        );
        let mut dense = vec![ZERO; 2 * k + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                dense[i + j] += a * b;
            }
        }
        let scale = max_norm(&self.coeffs) * max_norm(&other.coeffs);
        Ok(Self::normalize(
            self.leading_order + other.leading_order,
            dense,
            known,
            k,
            scale,
        ))
    }

    /// Multiplicative inverse by series reversion of the normalized number.
    pub fn recip(&self) -> Result<Self, SeriesError> {
        if self.is_zero() {
            return Err(SeriesError::DivisionByZero);
        }
        let k = self.truncation;
        let beta = self.coeffs[0];
        let mut q = vec![ZERO; k + 1];
        q[0] = beta.inv();
        for n in 1..=k {
            let s: Complex64 = (1..=n).map(|j| self.coeffs[j] * q[n - j]).sum();
            q[n] = -s / beta;
        }
        let lead = -self.leading_order;
        let mut known = self.known_through.map(|kb| kb - 2 * self.leading_order);
        if self.coeffs[1..].iter().any(|c| *c != ZERO) {
            // the geometric series does not terminate
            known = min_known(known, Some(lead + k as i32));
        }
        let scale = max_norm(&q);
        Ok(Self::normalize(lead, q, known, k, scale))
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_truncation(other)?;
        self.checked_mul(&other.recip()?)
    }

    /// Multiplies by a standard complex constant.
    pub fn scale(&self, factor: impl Into<Complex64>) -> Self {
        let factor = factor.into();
        if factor == ZERO {
            return Self::zero(self.truncation);
        }
        let coeffs: Vec<Complex64> = self.coeffs.iter().map(|c| c * factor).collect();
        let scale = max_norm(&coeffs);
        Self::normalize(
            self.leading_order,
            coeffs,
            self.known_through,
            self.truncation,
            scale,
        )
    }

    /// Shadow of a finite number: its order-0 coefficient.
    pub fn standard_part(&self) -> Result<Complex64, SeriesError> {
        if !self.is_finite() {
            return Err(SeriesError::NoShadow);
        }
        Ok(self.coeff(0))
    }

    fn require_finite(&self, op: &'static str) -> Result<(), SeriesError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(SeriesError::InfiniteInput {
                op,
                leading_order: self.leading_order,
            })
        }
    }

    pub fn sin(&self) -> Result<Self, SeriesError> {
        compose_analytic(Analytic::Sin, self)
    }

    pub fn cos(&self) -> Result<Self, SeriesError> {
        compose_analytic(Analytic::Cos, self)
    }

    pub fn exp(&self) -> Result<Self, SeriesError> {
        compose_analytic(Analytic::Exp, self)
    }

    /// Leading term of `self`, read as a defect that should vanish.
    pub fn defect(&self) -> Defect {
        if !self.is_zero() {
            return Defect::Leading {
                order: self.leading_order,
                coeff: self.coeffs[0],
            };
        }
        match self.known_through {
            None => Defect::None,
            Some(k) => Defect::VanishesThrough(k),
        }
    }
}

/// Checked entry point for the four field operations.
pub fn arith(
    op: ArithOp,
    a: &AsymptoticNumber,
    b: &AsymptoticNumber,
) -> Result<AsymptoticNumber, SeriesError> {
    match op {
        ArithOp::Add => a.checked_add(b),
        ArithOp::Sub => a.checked_sub(b),
        ArithOp::Mul => a.checked_mul(b),
        ArithOp::Div => a.checked_div(b),
    }
}

/// Evaluates `f(s)` for a finite `s = c + h` (`c` standard, `h`
/// infinitesimal) via the addition law at `c` and the Taylor series in `h`.
pub fn compose_analytic(
    f: Analytic,
    s: &AsymptoticNumber,
) -> Result<AsymptoticNumber, SeriesError> {
    let op = match f {
        Analytic::Sin => "sin",
        Analytic::Cos => "cos",
        Analytic::Exp => "exp",
    };
    s.require_finite(op)?;
    let k = s.truncation;
    let (c, h) = if !s.is_zero() && s.leading_order == 0 {
        let tail = s.coeffs[1..].to_vec();
        let scale = max_norm(&s.coeffs);
        let h = AsymptoticNumber::normalize(1, tail, s.known_through, k, scale);
        (s.coeffs[0], h)
    } else {
        (ZERO, s.clone())
    };

    // p_j = h^j / j!, enough terms to fill every window that can appear
    let one = AsymptoticNumber::constant(ONE, k);
    let mut powers = vec![one];
    if !h.is_zero() {
        for j in 1..=k + 1 {
            let next = powers[j - 1].checked_mul(&h)?.scale(1.0 / j as f64);
            powers.push(next);
        }
    }
    let omitted = (!h.is_zero()).then(|| (k as i32 + 2) * h.leading_order - 1);
    let series = |keep: &dyn Fn(usize) -> Option<f64>| -> Result<AsymptoticNumber, SeriesError> {
        let mut acc = AsymptoticNumber::zero(k);
        for (j, p) in powers.iter().enumerate() {
            if let Some(sign) = keep(j) {
                acc = acc.checked_add(&p.scale(sign))?;
            }
        }
        let known = min_known(acc.known_through, omitted);
        Ok(acc.with_known(known))
    };
    let alternating = |j: usize| if (j / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let cos_h = || series(&|j| (j % 2 == 0).then(|| alternating(j)));
    let sin_h = || series(&|j| (j % 2 == 1).then(|| alternating(j)));

    match f {
        Analytic::Sin => cos_h()?
            .scale(c.sin())
            .checked_add(&sin_h()?.scale(c.cos())),
        Analytic::Cos => cos_h()?
            .scale(c.cos())
            .checked_sub(&sin_h()?.scale(c.sin())),
        Analytic::Exp => Ok(series(&|_| Some(1.0))?.scale(c.exp())),
    }
}

/// `z ≈ w`: the difference is infinitesimal (or zero).
pub fn decide_infinitely_close(
    z: &AsymptoticNumber,
    w: &AsymptoticNumber,
) -> Result<Decision, SeriesError> {
    z.require_finite("infinitely_close")?;
    w.require_finite("infinitely_close")?;
    let d = z.checked_sub(w)?;
    Ok(infinitesimal_decision(&d))
}

fn infinitesimal_decision(d: &AsymptoticNumber) -> Decision {
    if !d.is_zero() {
        return if d.leading_order >= 1 {
            Decision::Holds
        } else {
            Decision::Fails
        };
    }
    match d.known_through {
        Some(k) if k < 0 => Decision::Undecidable {
            through_order: k,
            truncated_answer: true,
        },
        _ => Decision::Holds,
    }
}

pub fn infinitely_close(z: &AsymptoticNumber, w: &AsymptoticNumber) -> Result<bool, SeriesError> {
    decide_infinitely_close(z, w).map(Decision::as_bool)
}

/// `z ≍ w`: either `z/w ≈ 1` or both are zero.
pub fn decide_adequal(z: &AsymptoticNumber, w: &AsymptoticNumber) -> Result<Decision, SeriesError> {
    z.check_truncation(w)?;
    match (z.is_zero(), w.is_zero()) {
        (true, true) => {
            return Ok(match min_known(z.known_through, w.known_through) {
                None => Decision::Holds,
                Some(k) => Decision::Undecidable {
                    through_order: k,
                    truncated_answer: true,
                },
            })
        }
        (true, false) | (false, true) => {
            let zero = if z.is_zero() { z } else { w };
            return Ok(match zero.known_through {
                None => Decision::Fails,
                Some(k) => Decision::Undecidable {
                    through_order: k,
                    truncated_answer: false,
                },
            });
        }
        (false, false) => {}
    }
    let ratio = z.checked_div(w)?;
    let d = ratio.checked_sub(&AsymptoticNumber::constant(ONE, z.truncation))?;
    Ok(infinitesimal_decision(&d))
}

pub fn adequal(z: &AsymptoticNumber, w: &AsymptoticNumber) -> Result<bool, SeriesError> {
    decide_adequal(z, w).map(Decision::as_bool)
}

/// Leading term of `z/w − 1`.
pub fn adequality_defect(
    z: &AsymptoticNumber,
    w: &AsymptoticNumber,
) -> Result<Defect, SeriesError> {
    let ratio = z.checked_div(w)?;
    Ok(ratio
        .checked_sub(&AsymptoticNumber::constant(ONE, z.truncation))?
        .defect())
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&AsymptoticNumber> for &AsymptoticNumber {
            type Output = AsymptoticNumber;
            /// Panics if the truncation orders differ.
            fn $method(self, rhs: &AsymptoticNumber) -> AsymptoticNumber {
                self.$checked(rhs).expect("mismatched truncation orders")
            }
        }
        impl $trait for AsymptoticNumber {
            type Output = AsymptoticNumber;
            fn $method(self, rhs: AsymptoticNumber) -> AsymptoticNumber {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for &AsymptoticNumber {
    type Output = AsymptoticNumber;
    fn neg(self) -> AsymptoticNumber {
        self.neg_ref()
    }
}

impl Neg for AsymptoticNumber {
    type Output = AsymptoticNumber;
    fn neg(self) -> AsymptoticNumber {
        self.neg_ref()
    }
}

fn fmt_coeff(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("({}{:+}i)", c.re, c.im)
    }
}

impl fmt::Display for AsymptoticNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for (j, c) in self.coeffs.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let order = self.leading_order + j as i32;
            let coeff = fmt_coeff(*c);
            terms.push(match order {
                0 => coeff,
                1 => format!("{coeff}·ε"),
                _ => format!("{coeff}·ε^{order}"),
            });
        }
        if terms.is_empty() {
            terms.push("0".to_string());
        }
        let body = terms.join(" + ").replace("+ -", "- ");
        match self.known_through {
            Some(k) => write!(f, "{body} + O(ε^{})", k + 1),
            None => write!(f, "{body}"),
        }
    }
}
