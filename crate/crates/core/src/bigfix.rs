//! Scaled-integer arithmetic kernel.
//!
//! A value `v` is carried as a `BigInt` mantissa `m` with `v = m / 2^bits`.
//! Everything the rest of the crate needs from extended precision lives here:
//! multiplication with truncation, exact reduction mod 1, `pi`, `ln`, square
//! roots of rationals, and `sin`/`cos` of `2*pi*t` for exact rational or
//! fixed-point `t`. Each primitive keeps its rounding error within a few
//! units in the last place; callers budget for that with guard bits.

use num::bigint::Sign;
use num::integer::Integer;
use num::traits::{One, Signed, ToPrimitive, Zero};
use num::{BigInt, BigRational, BigUint};
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Arithmetic context: the number of fractional bits shared by all mantissas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FxCtx {
    pub bits: u32,
}

fn constant_cache() -> &'static Mutex<HashMap<u32, ConstSet>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, ConstSet>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

#[derive(Clone)]
struct ConstSet {
    pi: BigInt,
    ln2: BigInt,
}

impl FxCtx {
    pub fn new(bits: u32) -> Self {
        assert!(bits >= 16, "fixed-point context needs at least 16 bits");
        FxCtx { bits }
    }

    pub fn one(&self) -> BigInt {
        BigInt::one() << self.bits
    }

    /// Nearest fixed-point mantissa for `num/den` (`den > 0`).
    pub fn from_ratio(&self, num: &BigInt, den: &BigInt) -> BigInt {
        debug_assert!(den.is_positive());
        let scaled = (num << (self.bits + 1)) + den;
        scaled.div_floor(&(den << 1))
    }

    pub fn from_rational(&self, r: &BigRational) -> BigInt {
        self.from_ratio(r.numer(), r.denom())
    }

    pub fn from_f64(&self, v: f64) -> BigInt {
        let r = BigRational::from_float(v).expect("finite float");
        self.from_rational(&r)
    }

    /// `(a * b) >> bits`; floor-truncated, error below one ulp.
    pub fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        (a * b) >> self.bits
    }

    /// Fractional part in `[0, 1)` as a mantissa (exact; Euclidean mod 2^bits).
    pub fn frac(&self, a: &BigInt) -> BigInt {
        a.mod_floor(&self.one())
    }

    /// Convert a mantissa back to `f64` (value `m / 2^bits`), within 2 ulp.
    pub fn to_f64(&self, a: &BigInt) -> f64 {
        if a.is_zero() {
            return 0.0;
        }
        let neg = a.is_negative();
        let mag = a.magnitude();
        let nb = mag.bits();
        let v = if nb <= 63 {
            let top = mag.to_u64().unwrap() as f64;
            ldexp(top, -(self.bits as i64))
        } else {
            let shift = nb - 54;
            let top = (mag >> shift).to_u64().unwrap() as f64;
            ldexp(top, shift as i64 - self.bits as i64)
        };
        if neg {
            -v
        } else {
            v
        }
    }

    /// Fractional part as `f64` in `[0, 1)`; a value rounding up to 1.0 wraps to 0.0.
    pub fn frac_to_f64(&self, a: &BigInt) -> f64 {
        let v = self.to_f64(&self.frac(a));
        if v >= 1.0 {
            0.0
        } else {
            v
        }
    }

    fn constants(&self) -> ConstSet {
        let mut cache = constant_cache().lock().unwrap();
        if let Some(c) = cache.get(&self.bits) {
            return c.clone();
        }
        let c = ConstSet {
            pi: compute_pi(self.bits),
            ln2: compute_ln2(self.bits),
        };
        cache.insert(self.bits, c.clone());
        c
    }

    pub fn pi(&self) -> BigInt {
        self.constants().pi
    }

    pub fn ln2(&self) -> BigInt {
        self.constants().ln2
    }

    /// Natural logarithm of an integer `n >= 1`.
    pub fn ln_u64(&self, n: u64) -> BigInt {
        assert!(n >= 1);
        if n == 1 {
            return BigInt::zero();
        }
        let b = 63 - n.leading_zeros() as u64; // n in [2^b, 2^{b+1})
        let ln2 = self.ln2();
        let base = BigInt::from(b) * &ln2;
        if n == 1u64 << b {
            return base;
        }
        // ln(n / 2^b) = 2 atanh(z), z = (n - 2^b) / (n + 2^b) in (0, 1/3)
        let num = BigInt::from(n - (1u64 << b));
        let den = BigInt::from(n + (1u64 << b));
        let z = self.from_ratio(&num, &den);
        base + (self.atanh(&z) << 1)
    }

    /// atanh for |z| < 1/2 as mantissa.
    fn atanh(&self, z: &BigInt) -> BigInt {
        let z2 = self.mul(z, z);
        let mut term = z.clone();
        let mut sum = z.clone();
        let mut k: u64 = 1;
        loop {
            term = self.mul(&term, &z2);
            if term.is_zero() {
                break;
            }
            sum += &term / BigInt::from(2 * k + 1);
            k += 1;
            debug_assert!(k < 1_000_000);
        }
        sum
    }

    /// sqrt(num/den) for non-negative rational input.
    pub fn sqrt_ratio(&self, num: &BigUint, den: &BigUint) -> BigInt {
        assert!(!den.is_zero());
        let scaled: BigUint = (num << (2 * self.bits)) / den;
        BigInt::from_biguint(Sign::Plus, scaled.sqrt())
    }

    pub fn sqrt_rational(&self, r: &BigRational) -> BigInt {
        assert!(!r.is_negative(), "sqrt of negative rational");
        self.sqrt_ratio(r.numer().magnitude(), r.denom().magnitude())
    }

    /// (sin, cos) of `2*pi*u` where the mantissa `u` is interpreted mod 1.
    pub fn sincos2pi(&self, u: &BigInt) -> (BigInt, BigInt) {
        let u = self.frac(u);
        let quarter_bits = self.bits - 2;
        let quadrant = (&u >> quarter_bits).to_u8().unwrap(); // 0..=3
        let r = &u - (BigInt::from(quadrant) << quarter_bits);
        let eighth = BigInt::one() << (self.bits - 3);
        let (s, c) = if r <= eighth {
            self.sincos_kernel(&r)
        } else {
            let mirrored = (BigInt::one() << quarter_bits) - &r;
            let (s2, c2) = self.sincos_kernel(&mirrored);
            (c2, s2)
        };
        match quadrant {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    pub fn sincos2pi_rational(&self, t: &BigRational) -> (BigInt, BigInt) {
        let u = t - t.floor();
        let m = self.from_rational(&u);
        self.sincos2pi(&m)
    }

    /// Taylor kernel on `r` in `[0, 1/8]`: returns (sin, cos) of `2*pi*r`.
    fn sincos_kernel(&self, r: &BigInt) -> (BigInt, BigInt) {
        let two_pi = self.pi() << 1;
        let x = self.mul(&two_pi, r); // <= pi/4 < 1
        let x2 = self.mul(&x, &x);
        // sin
        let mut term = x.clone();
        let mut sin = x.clone();
        let mut k: u64 = 1;
        loop {
            term = -(self.mul(&term, &x2) / BigInt::from((2 * k) * (2 * k + 1)));
            if term.is_zero() {
                break;
            }
            sin += &term;
            k += 1;
        }
        // cos
        let mut term = self.one();
        let mut cos = self.one();
        let mut k: u64 = 1;
        loop {
            term = -(self.mul(&term, &x2) / BigInt::from((2 * k - 1) * (2 * k)));
            if term.is_zero() {
                break;
            }
            cos += &term;
            k += 1;
        }
        (sin, cos)
    }
}

fn ldexp(x: f64, e: i64) -> f64 {
    if e >= -1020 && e <= 1020 {
        x * f64::powi(2.0, e as i32)
    } else if e < 0 {
        // stay clear of double-rounding through subnormals in two steps
        let half = e / 2;
        x * f64::powi(2.0, half as i32) * f64::powi(2.0, (e - half) as i32)
    } else {
        f64::INFINITY * x.signum()
    }
}

/// arctan(1/x) for small integer x, at `bits` fractional bits.
fn atan_inv(x: u64, bits: u32) -> BigInt {
    let mut term = (BigInt::one() << bits) / BigInt::from(x);
    let x2 = BigInt::from(x * x);
    let mut sum = term.clone();
    let mut k: u64 = 1;
    loop {
        term = &term / &x2;
        if term.is_zero() {
            break;
        }
        let contrib = &term / BigInt::from(2 * k + 1);
        if k % 2 == 1 {
            sum -= contrib;
        } else {
            sum += contrib;
        }
        k += 1;
    }
    sum
}

fn compute_pi(bits: u32) -> BigInt {
    let g = bits + 24;
    let v = atan_inv(5, g) * 16 - atan_inv(239, g) * 4;
    (v + (BigInt::one() << 23)) >> 24
}

fn compute_ln2(bits: u32) -> BigInt {
    // 2 * atanh(1/3)
    let g = bits + 24;
    let mut term = (BigInt::one() << g) / BigInt::from(3);
    let mut sum = term.clone();
    let mut k: u64 = 1;
    loop {
        term = &term / BigInt::from(9);
        if term.is_zero() {
            break;
        }
        sum += &term / BigInt::from(2 * k + 1);
        k += 1;
    }
    ((sum << 1) + (BigInt::one() << 23)) >> 24
}
