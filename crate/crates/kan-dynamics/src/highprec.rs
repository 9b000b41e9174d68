//! Fixed-point big-number arithmetic for residual-critical log computations.
//!
//! Values are stored as `mantissa / 2^PRECISION_BITS` with a `BigInt`
//! mantissa. 192 fractional bits keep Diophantine residuals trustworthy for
//! iterate counts up to 10^6, where plain f64 logs would lose the signal.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

pub const PRECISION_BITS: u32 = 192;

/// Fixed-point real with 192 fractional bits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FixedReal(BigInt);

impl FixedReal {
    pub fn zero() -> Self {
        FixedReal(BigInt::zero())
    }

    pub fn one() -> Self {
        FixedReal(BigInt::from(1) << PRECISION_BITS)
    }

    pub fn from_int(n: i64) -> Self {
        FixedReal(BigInt::from(n) << PRECISION_BITS)
    }

    /// Exact conversion: every finite f64 is a dyadic rational.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "FixedReal::from_f64 requires a finite value");
        // decompose x = m * 2^e with integer m
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 {
            (frac as i128, -1074i64)
        } else {
            ((frac | (1 << 52)) as i128, exp - 1075)
        };
        let mut v = BigInt::from(sign as i128 * m);
        let shift = e + PRECISION_BITS as i64;
        if shift >= 0 {
            v <<= shift as u32;
        } else {
            v = shr_round(&v, (-shift) as u32);
        }
        FixedReal(v)
    }

    /// Rounded conversion of `num/den`.
    pub fn from_ratio(num: &BigInt, den: &BigInt) -> Self {
        assert!(!den.is_zero());
        let scaled = (num << PRECISION_BITS) * den.signum();
        let d = den.abs();
        // round to nearest
        let q = (&scaled * 2 + &d * scaled.signum()) / (&d * 2);
        FixedReal(q)
    }

    pub fn to_f64(&self) -> f64 {
        // split into integer and fractional parts to stay in range
        let int = &self.0 >> PRECISION_BITS;
        let frac = &self.0 - (&int << PRECISION_BITS);
        int.to_f64().unwrap_or(f64::NAN)
            + frac.to_f64().unwrap_or(0.0) / 2f64.powi(PRECISION_BITS as i32)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        FixedReal(self.0.abs())
    }

    pub fn neg(&self) -> Self {
        FixedReal(-&self.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        FixedReal(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        FixedReal(&self.0 - &other.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        FixedReal(shr_round(&(&self.0 * &other.0), PRECISION_BITS))
    }

    pub fn mul_int(&self, k: i64) -> Self {
        FixedReal(&self.0 * k)
    }

    pub fn div(&self, other: &Self) -> Self {
        assert!(!other.0.is_zero());
        Self::from_ratio(&self.0, &other.0)
    }

    /// Natural logarithm of a positive value.
    ///
    /// Reduces the argument into `[1,2)` by binary shifting, then sums the
    /// atanh series `ln s = 2 * sum z^(2j+1)/(2j+1)` with `z = (s-1)/(s+1)`.
    pub fn ln(&self) -> Self {
        assert!(self.0.is_positive(), "ln requires a positive argument");
        let nbits = self.0.bits() as i64; // value in [2^(n-1), 2^n) / 2^PREC
        let e = nbits - 1 - PRECISION_BITS as i64; // self = s * 2^e, s in [1,2)
        let s = if e >= 0 {
            FixedReal(shr_round(&self.0, e as u32))
        } else {
            FixedReal(&self.0 << (-e) as u32)
        };
        let ln_s = ln_reduced(&s);
        ln_s.add(&ln2().mul_int(e))
    }
}

fn shr_round(v: &BigInt, bits: u32) -> BigInt {
    if bits == 0 {
        return v.clone();
    }
    let half = BigInt::from(1) << (bits - 1);
    (v + half * v.signum()) >> bits
}

/// `ln s` for `s` in `[1,2)` via the atanh series (z <= 1/3, ~63 terms).
fn ln_reduced(s: &FixedReal) -> FixedReal {
    let one = FixedReal::one();
    let z = s.sub(&one).div(&s.add(&one));
    let z2 = z.mul(&z);
    let mut term = z.clone();
    let mut sum = FixedReal::zero();
    let mut k = 1i64;
    loop {
        let contrib = FixedReal(&term.0 / k);
        if contrib.0.is_zero() {
            break;
        }
        sum = sum.add(&contrib);
        term = term.mul(&z2);
        k += 2;
        if k > 4000 {
            break;
        }
    }
    sum.mul_int(2)
}

/// `ln 2` at full precision (`2 atanh(1/3)`).
pub fn ln2() -> FixedReal {
    let three = FixedReal::from_int(3);
    let s = FixedReal::from_int(2);
    // direct series on z = (2-1)/(2+1) = 1/3
    let z = FixedReal::one().div(&three);
    let z2 = z.mul(&z);
    let mut term = z;
    let mut sum = FixedReal::zero();
    let mut k = 1i64;
    loop {
        let contrib = FixedReal(&term.0 / k);
        if contrib.0.is_zero() {
            break;
        }
        sum = sum.add(&contrib);
        term = term.mul(&z2);
        k += 2;
    }
    let _ = s;
    sum.mul_int(2)
}

/// High-precision `ln(num/den)` for positive integers.
pub fn ln_ratio(num: i64, den: i64) -> FixedReal {
    assert!(num > 0 && den > 0);
    FixedReal::from_ratio(&BigInt::from(num), &BigInt::from(den)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn f64_round_trip() {
        // exact for dyadics with scale above 2^-192; tiny values round
        for &x in &[0.0, 1.0, -1.0, 0.5, 31.0 / 32.0, 1e-30, 12345.6789] {
            assert_eq!(FixedReal::from_f64(x).to_f64(), x);
        }
    }

    #[test]
    fn ln2_matches_f64() {
        assert_abs_diff_eq!(ln2().to_f64(), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn ln_various() {
        for &x in &[0.03125, 0.5, 0.96875, 1.0, 1.03125, 2.0, 3.0, 1e6] {
            assert_abs_diff_eq!(
                FixedReal::from_f64(x).ln().to_f64(),
                x.ln(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn ln_is_high_precision() {
        // ln(31/32) + ln(32/31) must cancel to far below f64 epsilon
        let a = ln_ratio(31, 32);
        let b = ln_ratio(32, 31);
        let s = a.add(&b);
        assert!(s.abs().to_f64() < 1e-55);
    }

    #[test]
    fn arithmetic_identities() {
        let x = FixedReal::from_f64(0.1234);
        let y = FixedReal::from_f64(5.678);
        assert_abs_diff_eq!(x.mul(&y).to_f64(), 0.1234 * 5.678, epsilon = 1e-15);
        assert_abs_diff_eq!(x.div(&y).to_f64(), 0.1234 / 5.678, epsilon = 1e-15);
        assert!(x.sub(&x).is_zero());
    }
}
