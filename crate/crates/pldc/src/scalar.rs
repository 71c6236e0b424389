//! Generic field arithmetic so the solvers run both in `f64` (with
//! tolerances) and in exact rational arithmetic (`BigRational`, tolerance
//! zero). Conversions from `f64` are exact in the rational instance: every
//! finite `f64` is a dyadic rational.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Exact embedding of a finite `f64`.
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// `2^k` for possibly negative `k`.
    fn pow2(k: i32) -> Self;
    fn abs(&self) -> Self;
    fn is_zero(&self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pow2(k: i32) -> Self {
        (k as f64).exp2()
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as One>::one()
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite f64 converts exactly")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn pow2(k: i32) -> Self {
        let two = BigInt::from(2);
        if k >= 0 {
            BigRational::from_integer(two.pow(k as u32))
        } else {
            BigRational::new(BigInt::from(1), two.pow((-k) as u32))
        }
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}
