//! Scalar element types backing tensors.
//!
//! `f64` is the checked, correctness-grade element; `f32` is the
//! benchmark-grade element used where throughput matters.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// On-disk dtype tag used by the tensor container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64 = 0,
    F32 = 1,
}

impl DType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F64),
            1 => Some(DType::F32),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn byte_width(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
        }
    }
}

/// Real scalar usable as a tensor element.
pub trait Element:
    Copy
    + Debug
    + PartialOrd
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    const ZERO: Self;
    const ONE: Self;
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite_val(self) -> bool;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn minimum(self, other: Self) -> Self;
    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
}

impl Element for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn maximum(self, other: f64) -> f64 {
        if other > self {
            other
        } else {
            self
        }
    }
    fn minimum(self, other: f64) -> f64 {
        if other < self {
            other
        } else {
            self
        }
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}

impl Element for f32 {
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn exp(self) -> f32 {
        exp_f32(self)
    }
    fn sqrt(self) -> f32 {
        f32::sqrt(self)
    }
    fn tanh(self) -> f32 {
        f32::tanh(self)
    }
    fn abs(self) -> f32 {
        f32::abs(self)
    }
    fn maximum(self, other: f32) -> f32 {
        if other > self {
            other
        } else {
            self
        }
    }
    fn minimum(self, other: f32) -> f32 {
        if other < self {
            other
        } else {
            self
        }
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

const EXPF_LOG2E: f32 = std::f32::consts::LOG2_E;
// ln(2) split into a coarse part and a correction so `x - n*ln2` stays exact.
const EXPF_C1: f32 = 0.693_359_375;
const EXPF_C2: f32 = -2.121_944_4e-4;
const EXPF_LO: f32 = -87.336_54;
const EXPF_HI: f32 = 88.722_83;

/// Branch-free single-precision exponential (Cephes polynomial, ~2 ulp).
///
/// Written without calls or branches in the hot path so that softmax loops
/// over attention rows auto-vectorize; `f32::exp` cannot.
pub fn exp_f32(x: f32) -> f32 {
    let x = x.clamp(EXPF_LO, EXPF_HI);
    let n = (x * EXPF_LOG2E + 0.5).floor();
    let r = x - n * EXPF_C1 - n * EXPF_C2;
    let r2 = r * r;
    let mut p = 1.987_569_2e-4_f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let poly = p * r2 + r + 1.0;
    // 2^n by exponent-field construction; n is within [-127, 127] after clamp.
    let scale = f32::from_bits((((n as i32) + 127) as u32) << 23);
    poly * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_f32_matches_f64_reference() {
        let mut worst = 0.0f64;
        let mut x = -87.0f64;
        while x < 20.0 {
            let got = exp_f32(x as f32) as f64;
            let want = x.exp();
            let rel = (got - want).abs() / want;
            if rel > worst {
                worst = rel;
            }
            x += 0.0137;
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn exp_f32_special_points() {
        assert_eq!(exp_f32(0.0), 1.0);
        assert!((exp_f32(1.0) - std::f32::consts::E).abs() < 1e-6);
        // Deep underflow clamps instead of producing NaN.
        assert!(exp_f32(-1000.0) > 0.0);
        assert!(exp_f32(-1000.0) < 1e-37);
    }
}
