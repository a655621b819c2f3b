//! Scalar abstraction shared by plain evaluation and reverse-mode AD.
//!
//! Geometry and loss kernels are written once, generic over [`Real`]. With
//! `f64` they evaluate values; with [`crate::tape::Var`] they additionally
//! record the computation on a tape for a later backward sweep. Branch
//! decisions inside kernels (clipping, boundary clamps, singularity guards)
//! are made on [`Real::value`], so both instantiations follow identical
//! control flow and produce identical primal values.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Differentiable scalar: `f64` or a tape variable.
///
/// The `f64`-on-the-right operator bounds cover expressions like `x * 2.0`;
/// [`Real::rsub`] and [`Real::rdiv`] cover the `f64`-on-the-left forms
/// (`1.0 - x`, `2.0 / x`) that generic code cannot express with `std::ops`
/// alone.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Current numeric value, used for branches and diagnostics.
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn atanh(self) -> Self;

    /// `lhs - self`.
    fn rsub(self, lhs: f64) -> Self;

    /// `lhs / self`.
    fn rdiv(self, lhs: f64) -> Self;

    /// `max(self, 0)`, with the derivative of the active branch.
    fn relu(self) -> Self;
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn atanh(self) -> Self {
        f64::atanh(self)
    }

    fn rsub(self, lhs: f64) -> Self {
        lhs - self
    }

    fn rdiv(self, lhs: f64) -> Self {
        lhs / self
    }

    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}

/// Sum of a slice of scalars; zero-length slices are rejected by callers.
pub fn sum<S: Real>(xs: &[S]) -> S {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = acc + x;
    }
    acc
}

/// Squared Euclidean norm.
pub fn norm_sq<S: Real>(xs: &[S]) -> S {
    let mut acc = xs[0] * xs[0];
    for &x in &xs[1..] {
        acc = acc + x * x;
    }
    acc
}

/// Dot product of equal-length slices.
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Log-sum-exp with max subtraction: `ln(sum_i exp(a_i))`.
///
/// The maximum is treated as a constant shift, which leaves the derivative
/// exact while keeping every `exp` argument non-positive.
pub fn log_sum_exp<S: Real>(xs: &[S]) -> S {
    let m = xs
        .iter()
        .map(|x| x.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut acc = (xs[0] - m).exp();
    for &x in &xs[1..] {
        acc = acc + (x - m).exp();
    }
    acc.ln() + m
}
