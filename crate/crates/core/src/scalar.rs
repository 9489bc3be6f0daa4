//! Number traits shared by the crate.
//!
//! [`Field`] is the minimal exact-or-floating arithmetic needed by the
//! canonical-form construction and the actuator-bound algebra; it is
//! implemented for `f32`, `f64` and [`Rational`]. [`Scalar`] adds the real
//! analysis (square roots, eigenvalues) that the game, graph and simulation
//! code needs and is implemented for `f32` and `f64` only.

use std::fmt::Display;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use nalgebra as na;
use num_traits as nt;

/// Arbitrary precision rational number.
pub type Rational = num_rational::BigRational;

pub trait Field:
    na::Scalar
    + Clone
    + PartialOrd
    + Display
    + nt::Num
    + nt::Signed
    + nt::FromPrimitive
    + nt::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Converts an `f64` literal. Exact types receive the exact binary value.
    fn lit(v: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(v).expect("finite literal")
    }

    /// `num / den` computed in the field.
    fn ratio(num: i64, den: i64) -> Self {
        let n = <Self as nt::FromPrimitive>::from_i64(num).expect("representable");
        let d = <Self as nt::FromPrimitive>::from_i64(den).expect("representable");
        n / d
    }

    fn from_usize_exact(v: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(v).expect("representable integer")
    }

    fn to_f64_lossy(&self) -> f64 {
        nt::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_val(&self) -> Self {
        nt::Signed::abs(self)
    }
}

impl Field for f32 {
    const EXACT: bool = false;
}

impl Field for f64 {
    const EXACT: bool = false;
}

impl Field for Rational {
    const EXACT: bool = true;
}

/// Real floating point scalar.
pub trait Scalar: Field + na::RealField + Copy {
    fn is_finite_value(self) -> bool {
        self.to_f64_lossy().is_finite()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `base^exp` for a non-negative integer exponent.
pub fn powi<F: Field>(base: &F, exp: usize) -> F {
    let mut acc = F::one();
    for _ in 0..exp {
        acc *= base.clone();
    }
    acc
}

/// Largest absolute entry of a matrix (zero for an empty matrix).
pub fn max_abs<F: Field>(m: &na::DMatrix<F>) -> F {
    m.iter()
        .map(|v| v.abs_val())
        .fold(F::zero(), |acc, v| if v > acc { v } else { acc })
}
