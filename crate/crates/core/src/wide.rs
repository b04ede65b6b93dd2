//! Scalar abstraction for the recursion engines plus a double-double type.
//!
//! Every generating-function recursion in this crate is a polynomial
//! iteration: it only needs ring operations and division. Making the engine
//! generic over [`Scalar`] lets the same code run in plain `f64` and, behind
//! a configuration flag, in double-double arithmetic (about 31 significant
//! decimal digits) for very deep sweeps. Evaluation points are constructed
//! in `f64` and promoted exactly, so no wide transcendentals are needed.
//!
//! The double-double algorithms (two_sum, Dekker split and product, sloppy
//! division refined by two remainder steps) are the classic error-free
//! transformations; no fused multiply-add is assumed.

use core::cmp::Ordering;
use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Integer power by repeated squaring; `powi(0, 0) == 1`.
    fn powi(self, n: u32) -> Self {
        let mut base = self;
        let mut exp = n;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            exp >>= 1;
            if exp > 0 {
                base = base * base;
            }
        }
        acc
    }
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;

    #[inline]
    fn from_f64(x: f64) -> f64 {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum of two doubles with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Dekker split into high and low 26-bit halves.
#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = 134_217_729.0 * a; // 2^27 + 1
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ahi, alo) = split(a);
    let (bhi, blo) = split(b);
    let err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    (p, err)
}

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, o.hi);
        let p2 = p2 + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        let (hi, lo) = quick_two_sum(s, e + q3);
        Dd { hi, lo }
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            other => other,
        }
    }
}

impl Scalar for Dd {
    const ZERO: Dd = Dd::new(0.0, 0.0);
    const ONE: Dd = Dd::new(1.0, 0.0);

    fn from_f64(x: f64) -> Dd {
        Dd::from(x)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS2: f64 = 2.5e-32; // roughly ulp^2 of 1.0

    #[test]
    fn addition_keeps_tiny_terms() {
        let one = Dd::from(1.0);
        let tiny = Dd::from(1e-20);
        let sum = one + tiny;
        assert_eq!((sum - one).to_f64(), 1e-20);
    }

    #[test]
    fn product_carries_exact_error_term() {
        // (1 + 2^-30)^2 = 1 + 2^-29 + 2^-60, exactly representable as hi+lo.
        let x = Dd::from(1.0 + 2f64.powi(-30));
        let sq = x * x;
        let expect_hi = 1.0 + 2f64.powi(-29) + 2f64.powi(-60);
        assert_eq!(sq.hi, expect_hi);
    }

    #[test]
    fn division_round_trips() {
        let a = Dd::from(0.7306);
        let b = Dd::from(0.9401);
        let q = a / b;
        let back = q * b;
        assert!((back - a).to_f64().abs() < EPS2 * 10.0);
    }

    #[test]
    fn powi_matches_f64_at_double_precision() {
        let x = Dd::from(0.93);
        let p = Scalar::powi(x, 17);
        let naive = 0.93f64.powi(17);
        assert!((p.to_f64() - naive).abs() < 1e-15 * naive);
    }

    #[test]
    fn wide_sum_recovers_cancellation() {
        // (1 + eps) - 1 in double-double keeps eps even when eps^2 is far
        // below f64 resolution of the intermediate sum.
        let eps = 1e-25;
        let x = Dd::from(1.0) + Dd::from(eps);
        let d = x - Dd::from(1.0);
        assert!((d.to_f64() - eps).abs() < EPS2);
    }
}
