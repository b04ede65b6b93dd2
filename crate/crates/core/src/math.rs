//! Float helpers that compile with and without `std`.
//!
//! The transcendental surface of `f64` lives in `std`, so every call site in
//! this crate goes through these wrappers and picks `libm` when `std` is
//! absent. Integer powers use binary exponentiation everywhere so that both
//! builds evaluate polynomials identically.

#[cfg(feature = "std")]
macro_rules! dispatch {
    ($std:expr, $libm:expr) => {
        $std
    };
}

#[cfg(not(feature = "std"))]
macro_rules! dispatch {
    ($std:expr, $libm:expr) => {
        $libm
    };
}

#[inline]
pub fn abs(x: f64) -> f64 {
    f64::from_bits(x.to_bits() & !(1u64 << 63))
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    dispatch!(x.sqrt(), libm::sqrt(x))
}

#[inline]
pub fn exp(x: f64) -> f64 {
    dispatch!(x.exp(), libm::exp(x))
}

#[inline]
pub fn exp_m1(x: f64) -> f64 {
    dispatch!(x.exp_m1(), libm::expm1(x))
}

#[inline]
pub fn ln(x: f64) -> f64 {
    dispatch!(x.ln(), libm::log(x))
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    dispatch!(x.ln_1p(), libm::log1p(x))
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    dispatch!(x.powf(y), libm::pow(x, y))
}

#[inline]
pub fn cosh(x: f64) -> f64 {
    dispatch!(x.cosh(), libm::cosh(x))
}

#[inline]
pub fn sinh(x: f64) -> f64 {
    dispatch!(x.sinh(), libm::sinh(x))
}

#[inline]
pub fn round(x: f64) -> f64 {
    dispatch!(x.round(), libm::round(x))
}

/// `x^n` by repeated squaring. `powi(0.0, 0) == 1.0`.
#[inline]
pub fn powi(x: f64, n: u32) -> f64 {
    let mut base = x;
    let mut exp = n;
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        exp >>= 1;
        if exp > 0 {
            base *= base;
        }
    }
    acc
}

/// `x^n` for exponents that may not fit in `u32` (progeny counts).
#[inline]
pub fn powu(x: f64, n: u64) -> f64 {
    let mut base = x;
    let mut exp = n;
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        exp >>= 1;
        if exp > 0 {
            base *= base;
        }
    }
    acc
}

#[inline]
pub fn max(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else {
        b
    }
}

#[inline]
pub fn min(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}
