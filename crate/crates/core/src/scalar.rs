//! Scalar types the simulator computes over.
//!
//! Every matrix product in the crate goes through [`Element`]: products are
//! formed in a wider accumulator type and narrowed exactly once per output
//! element. For [`Fixed`] the accumulator is an exact 64-bit integer, so the
//! result is independent of summation order and every dataflow can be checked
//! bit-for-bit against the dense reference.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

/// Number of fractional bits in [`Fixed`].
pub const FRAC_BITS: u32 = 16;
const ONE_RAW: i32 = 1 << FRAC_BITS;

/// Signed Q16.16 fixed-point value.
///
/// Multiplication truncates toward negative infinity after a 64-bit
/// intermediate product. Addition wraps like a 32-bit datapath would.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed(pub i32);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(ONE_RAW);
    pub const MIN: Fixed = Fixed(i32::MIN);
    pub const MAX: Fixed = Fixed(i32::MAX);

    pub const fn from_raw(raw: i32) -> Self {
        Fixed(raw)
    }

    pub const fn raw(self) -> i32 {
        self.0
    }

    pub const fn from_int(v: i16) -> Self {
        Fixed((v as i32) << FRAC_BITS)
    }

    /// Rounds toward negative infinity and saturates at the representable range.
    pub fn from_f64(v: f64) -> Self {
        let scaled = (v * ONE_RAW as f64).floor();
        if scaled.is_nan() {
            Fixed(0)
        } else {
            Fixed(scaled.clamp(i32::MIN as f64, i32::MAX as f64) as i32)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    /// Narrows a sum of raw products (Q32.32) back to Q16.16.
    pub fn from_wide(acc: i64) -> Self {
        let shifted = acc >> FRAC_BITS;
        Fixed(shifted.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    pub fn wide_mul(self, rhs: Fixed) -> i64 {
        self.0 as i64 * rhs.0 as i64
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}q", self.to_f64())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.wrapping_sub(rhs.0))
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(self.0.wrapping_neg())
    }
}

impl Mul for Fixed {
    type Output = Fixed;
    fn mul(self, rhs: Fixed) -> Fixed {
        Fixed::from_wide(self.wide_mul(rhs))
    }
}

impl Zero for Fixed {
    fn zero() -> Self {
        Fixed::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl One for Fixed {
    fn one() -> Self {
        Fixed::ONE
    }
}

/// A matrix element type with a widened accumulator.
pub trait Element:
    Copy + PartialEq + PartialOrd + fmt::Debug + Zero + One + Send + Sync + 'static
{
    /// Accumulator for sums of products.
    type Acc: Copy + PartialEq + fmt::Debug + Zero + Add<Output = Self::Acc> + Send + Sync;

    fn widen_mul(self, rhs: Self) -> Self::Acc;
    fn narrow(acc: Self::Acc) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn relu(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

impl Element for Fixed {
    type Acc = i64;

    fn widen_mul(self, rhs: Self) -> i64 {
        self.wide_mul(rhs)
    }
    fn narrow(acc: i64) -> Self {
        Fixed::from_wide(acc)
    }
    fn from_f64(v: f64) -> Self {
        Fixed::from_f64(v)
    }
    fn to_f64(self) -> f64 {
        Fixed::to_f64(self)
    }
}

impl Element for f32 {
    type Acc = f64;

    fn widen_mul(self, rhs: Self) -> f64 {
        self as f64 * rhs as f64
    }
    fn narrow(acc: f64) -> Self {
        acc as f32
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    type Acc = f64;

    fn widen_mul(self, rhs: Self) -> f64 {
        self * rhs
    }
    fn narrow(acc: f64) -> Self {
        acc
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
