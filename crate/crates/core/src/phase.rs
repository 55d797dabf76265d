//! Reduction of dilated curve samples to the unit torus.
//!
//! The quantity of interest is `frac(rho * phi_i(x, t))` for coordinates
//! `phi_i` of a curve family, a dilation factor `rho` that can be astronomically
//! large, and rational sample times `t`. Doing this in `f64` destroys all
//! fractional information once `rho` exceeds `2^52`, so the reduction runs in
//! fixed-point arithmetic with `64 + magnitude_bits(rho) + 16` fractional bits
//! and returns each coordinate together with a certified error bound (measured
//! as distance mod 1). When the coordinate and the dilation are both exactly
//! rational the reduction is exact and the bound collapses to `0` or one ulp.

use crate::bigfix::FxCtx;
use crate::curvekit::{rational_to_f64, CurveError, CurveFamily, FamilyKind};
use num::traits::{One, Signed, ToPrimitive, Zero};
use num::{BigInt, BigRational, BigUint};
use thiserror::Error;

/// Fixed-point working precision is capped here.
pub const MAX_WORKING_BITS: u32 = 4096;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("sample count must be positive")]
    EmptySample,
}

/// Dilation factor for a curve family.
#[derive(Clone, Debug, PartialEq)]
pub enum Dilation {
    /// exact integer
    Exact(BigInt),
    /// an `f64` (every finite `f64` is an exact rational)
    Real(f64),
    /// `factor * ln(log_arg)`, for dilations proportional to a logarithm
    IntTimesLog { factor: BigInt, log_arg: u64 },
}

impl Dilation {
    pub fn exact_u64(q: u64) -> Self {
        Dilation::Exact(BigInt::from(q))
    }

    /// Bits in the integer part of `|rho|`.
    pub fn magnitude_bits(&self) -> u32 {
        match self {
            Dilation::Exact(q) => q.magnitude().bits() as u32,
            Dilation::Real(v) => {
                let a = v.abs();
                if a < 1.0 {
                    0
                } else {
                    a.log2().floor() as u32 + 1
                }
            }
            Dilation::IntTimesLog { factor, log_arg } => {
                let log_bits = (*log_arg as f64).ln().max(1.0).log2().ceil().max(0.0) as u32;
                factor.magnitude().bits() as u32 + log_bits + 1
            }
        }
    }

    pub fn approx_f64(&self) -> f64 {
        match self {
            Dilation::Exact(q) => q.to_f64().unwrap_or(f64::INFINITY),
            Dilation::Real(v) => *v,
            Dilation::IntTimesLog { factor, log_arg } => {
                factor.to_f64().unwrap_or(f64::INFINITY) * (*log_arg as f64).ln()
            }
        }
    }

    /// Exact rational value, when the dilation has one.
    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            Dilation::Exact(q) => Some(BigRational::from_integer(q.clone())),
            Dilation::Real(v) => BigRational::from_float(*v),
            Dilation::IntTimesLog { .. } => None,
        }
    }
}

/// Fractional bits used for a given dilation.
pub fn working_bits(dilation: &Dilation) -> u32 {
    (64 + dilation.magnitude_bits() + 16).min(MAX_WORKING_BITS)
}

/// One torus coordinate of a reduced sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedPhase {
    /// value in `[0, 1)`
    pub value: f64,
    /// certified bound on the mod-1 distance to the true value
    /// (`0.0` means the reduction was exact and the value is exact in `f64`)
    pub error_bound: f64,
}

/// `e(v) = (cos 2 pi v, sin 2 pi v)`, exact at quarter phases.
pub fn unit_character(v: f64) -> (f64, f64) {
    if v == 0.0 {
        (1.0, 0.0)
    } else if v == 0.25 {
        (0.0, 1.0)
    } else if v == 0.5 {
        (-1.0, 0.0)
    } else if v == 0.75 {
        (0.0, -1.0)
    } else {
        let a = std::f64::consts::TAU * v;
        (a.cos(), a.sin())
    }
}

/// Exact rational (when possible) or fixed-point coordinate value.
pub(crate) enum CoordVal {
    Exact(BigRational),
    /// mantissa at the evaluator precision, with an error estimate in ulps
    Fx { m: BigInt, err_ulps: f64 },
}

/// Coordinate values `phi_i(x, t)` of a family at a rational time, one entry
/// per dimension, computed at the precision of `ctx` (exact when the
/// coordinate is rational in `t`).
pub(crate) fn coordinate_values(
    family: &CurveFamily,
    x: &[f64],
    t: &BigRational,
    ctx: &FxCtx,
) -> Vec<CoordVal> {
    match &family.kind {
        FamilyKind::Poly(coords) => coords
            .iter()
            .map(|c| {
                let all_rational = c.terms.values().all(|co| co.as_rational().is_some());
                if all_rational {
                    let mut acc = BigRational::zero();
                    for (&deg, co) in &c.terms {
                        acc += co.as_rational().unwrap() * rational_pow(t, deg);
                    }
                    CoordVal::Exact(acc)
                } else {
                    let mut m = BigInt::zero();
                    let mut err = 0.0f64;
                    for (&deg, co) in &c.terms {
                        let tp = ctx.from_rational(&rational_pow(t, deg));
                        m += ctx.mul(&co.eval_fx(ctx), &tp);
                        err += 4.0 * (1.0 + co.abs_f64().ceil());
                    }
                    CoordVal::Fx { m, err_ulps: err }
                }
            })
            .collect(),
        FamilyKind::Trig(coords) => coords.iter().map(|c| trig_fx(c, t, ctx)).collect(),
        FamilyKind::Composed { base, post } => {
            let base_vals: Vec<(BigInt, f64)> = base
                .iter()
                .map(|c| match trig_fx(c, t, ctx) {
                    CoordVal::Fx { m, err_ulps } => (m, err_ulps),
                    CoordVal::Exact(r) => (ctx.from_rational(&r), 1.0),
                })
                .collect();
            let x0 = x
                .first()
                .and_then(|&v| BigRational::from_float(v))
                .unwrap_or_else(BigRational::zero);
            (0..family.dim())
                .map(|i| {
                    let mut m = BigInt::zero();
                    let mut err = 0.0f64;
                    for (k, (bm, berr)) in base_vals.iter().enumerate() {
                        let w = post[k][i].eval_exact(&x0);
                        if w.is_zero() {
                            continue;
                        }
                        m += ctx.mul(&ctx.from_rational(&w), bm);
                        err += berr * (1.0 + rational_to_f64(&w).abs().ceil()) + 2.0;
                    }
                    CoordVal::Fx { m, err_ulps: err }
                })
                .collect()
        }
    }
}

fn trig_fx(c: &crate::curvekit::TrigCoord, t: &BigRational, ctx: &FxCtx) -> CoordVal {
    debug_assert_eq!(c.pi_pow, 0, "families are built with pi_pow = 0");
    let mut m = c
        .constant
        .as_rational()
        .map(|r| ctx.from_rational(r))
        .unwrap_or_else(|| c.constant.eval_fx(ctx));
    let mut err = 2.0f64;
    for (freq, (a, b)) in &c.terms {
        let arg = freq * t;
        let (s, co) = ctx.sincos2pi_rational(&arg);
        if !a.is_zero() {
            m += ctx.mul(&a.eval_fx(ctx), &co);
        }
        if !b.is_zero() {
            m += ctx.mul(&b.eval_fx(ctx), &s);
        }
        err += 8.0 * (1.0 + a.abs_f64().ceil() + b.abs_f64().ceil());
    }
    CoordVal::Fx { m, err_ulps: err }
}

/// Caches reduced torus coordinates of `phi(x, k/n + offset)`, `k = 1..=n`,
/// under a fixed dilation.
pub struct PhaseEvaluator {
    family: CurveFamily,
    x: Vec<f64>,
    dilation: Dilation,
    n: usize,
    offset: BigRational,
    ctx: FxCtx,
    points: Vec<Vec<ReducedPhase>>,
}

impl PhaseEvaluator {
    pub fn new(
        family: &CurveFamily,
        x: &[f64],
        dilation: &Dilation,
        n: usize,
    ) -> Result<Self, PhaseError> {
        Self::with_offset(family, x, dilation, n, BigRational::zero())
    }

    /// Samples at `t = k/n + offset` instead of `k/n`.
    pub fn with_offset(
        family: &CurveFamily,
        x: &[f64],
        dilation: &Dilation,
        n: usize,
        offset: BigRational,
    ) -> Result<Self, PhaseError> {
        if n == 0 {
            return Err(PhaseError::EmptySample);
        }
        // validate the parameter vector once
        family.eval(x, 0.0)?;
        let ctx = FxCtx::new(working_bits(dilation));
        let mut ev = PhaseEvaluator {
            family: family.clone(),
            x: x.to_vec(),
            dilation: dilation.clone(),
            n,
            offset,
            ctx,
            points: Vec::with_capacity(n),
        };
        let den = BigInt::from(n as u64);
        for k in 1..=n {
            let t = BigRational::new(BigInt::from(k as u64), den.clone()) + &ev.offset;
            let p = ev.reduce_at_inner(&t);
            ev.points.push(p);
        }
        Ok(ev)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn bits(&self) -> u32 {
        self.ctx.bits
    }

    pub fn dilation(&self) -> &Dilation {
        &self.dilation
    }

    /// Reduced coordinates of sample `k` (1-based, `t = k/n + offset`).
    pub fn point(&self, k: usize) -> &[ReducedPhase] {
        assert!(k >= 1 && k <= self.n, "sample index out of range");
        &self.points[k - 1]
    }

    pub fn points(&self) -> &[Vec<ReducedPhase>] {
        &self.points
    }

    /// Reduce at an arbitrary rational time.
    pub fn reduce_at(&self, t: &BigRational) -> Vec<ReducedPhase> {
        self.reduce_at_inner(t)
    }

    fn reduce_at_inner(&self, t: &BigRational) -> Vec<ReducedPhase> {
        let coords = self.coord_values(t);
        coords.into_iter().map(|c| self.apply_dilation(c)).collect()
    }

    /// Coordinate values `phi_i(x, t)` before dilation.
    fn coord_values(&self, t: &BigRational) -> Vec<CoordVal> {
        coordinate_values(&self.family, &self.x, t, &self.ctx)
    }

    /// Multiply a coordinate by the dilation, take the fractional part, and
    /// convert to `f64` with a certified bound.
    fn apply_dilation(&self, c: CoordVal) -> ReducedPhase {
        let ctx = &self.ctx;
        let mag = self.dilation.magnitude_bits() as f64;
        let bits = ctx.bits as f64;
        match (c, &self.dilation) {
            (CoordVal::Exact(r), d) if d.as_rational().is_some() => {
                let prod = r * d.as_rational().unwrap();
                let f = &prod - prod.floor();
                if f.is_zero() {
                    ReducedPhase {
                        value: 0.0,
                        error_bound: 0.0,
                    }
                } else {
                    let mut v = rational_to_f64(&f);
                    if v >= 1.0 {
                        v = 0.0;
                    }
                    ReducedPhase {
                        value: v,
                        error_bound: f64::powi(2.0, -53),
                    }
                }
            }
            (CoordVal::Exact(r), Dilation::IntTimesLog { factor, log_arg }) => {
                // promote the exact coordinate to a mantissa, then fall through
                let m = ctx.from_rational(&r);
                let coord_mag = rational_to_f64(&r).abs().ceil().max(1.0);
                let rho_m = ctx.ln_u64(*log_arg) * factor;
                let prod = ctx.mul(&rho_m, &m);
                let err = 4.0 * coord_mag + 4.0 * 0.5 + 2.0;
                self.finish_fx(prod, err, mag, bits)
            }
            (CoordVal::Fx { m, err_ulps }, Dilation::Exact(q)) => {
                let prod = m * q;
                self.finish_fx(prod, err_ulps, mag, bits)
            }
            (CoordVal::Fx { m, err_ulps }, Dilation::Real(v)) => {
                let q = BigRational::from_float(*v).unwrap_or_else(BigRational::zero);
                let prod = ctx.mul(&m, &ctx.from_rational(&q));
                self.finish_fx(prod, err_ulps + 2.0, mag, bits)
            }
            (CoordVal::Fx { m, err_ulps }, Dilation::IntTimesLog { factor, log_arg }) => {
                let rho_m = ctx.ln_u64(*log_arg) * factor;
                let prod = ctx.mul(&rho_m, &m);
                // ln error (4 ulps) is amplified by the coordinate magnitude,
                // which is modest for the supported families
                let coord_mag = 64.0;
                self.finish_fx(prod, err_ulps * 4.0 + 4.0 * coord_mag + 2.0, mag, bits)
            }
            (CoordVal::Exact(_), _) => unreachable!("exact cases handled above"),
        }
    }

    fn finish_fx(&self, prod: BigInt, err_ulps: f64, mag: f64, bits: f64) -> ReducedPhase {
        let f = self.ctx.frac(&prod);
        let value = self.ctx.frac_to_f64(&f);
        // err_ulps is pre-dilation; the dilation scales it by at most 2^mag
        let bound = (err_ulps + 4.0) * f64::exp2(mag - bits);
        let bound = bound.max(f64::exp2(-120.0)) + f64::powi(2.0, -53);
        ReducedPhase {
            value,
            error_bound: bound,
        }
    }
}

fn rational_pow(t: &BigRational, deg: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..deg {
        acc *= t;
    }
    acc
}

/// Exact floor of `n^{c}` for rational exponent `c = p/q`: the largest integer
/// `r` with `r^q <= n^p`. Used to build integer dilations from power rules.
pub fn integer_power_floor(n: u64, p: u32, q: u32) -> BigInt {
    assert!(q >= 1);
    let target = BigUint::from(n).pow(p);
    // binary search on bit length
    let bits = (target.bits() / q as u64) + 2;
    let mut lo = BigUint::zero();
    let mut hi = BigUint::one() << bits;
    while &lo + 1u32 < hi {
        let mid: BigUint = (&lo + &hi) >> 1;
        if mid.pow(q) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BigInt::from_biguint(num::bigint::Sign::Plus, lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvekit::Coeff;
    use approx::assert_relative_eq;

    fn mod1_close(a: f64, b: f64, tol: f64) -> bool {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d) <= tol
    }

    #[test]
    fn working_bits_tracks_magnitude() {
        assert_eq!(working_bits(&Dilation::exact_u64(1)), 81);
        let big = Dilation::Exact(BigInt::one() << 100);
        assert_eq!(working_bits(&big), 64 + 101 + 16);
        let huge = Dilation::Exact(BigInt::one() << 5000);
        assert_eq!(working_bits(&huge), MAX_WORKING_BITS);
        assert_eq!(working_bits(&Dilation::Real(0.5)), 80);
    }

    #[test]
    fn exact_path_polynomial_square_dilation() {
        // (t^2, t^3) at t = k/9 with rho = 81: phases 81 k^2/81 = k^2 are integers
        let fam = CurveFamily::monomial(2);
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(81), 9).unwrap();
        for k in 1..=9 {
            let p = ev.point(k);
            assert_eq!(p[0].value, 0.0);
            assert_eq!(p[0].error_bound, 0.0);
        }
        // second coordinate 81 k^3 / 729 = k^3 / 9: exact rational, nonzero for k not divisible by 3
        let p = ev.point(1);
        assert_relative_eq!(p[1].value, 1.0 / 9.0, max_relative = 1e-15);
        assert!(p[1].error_bound <= f64::powi(2.0, -53));
    }

    #[test]
    fn exact_path_real_dilation() {
        // (t, 3/7 t), rho = 2.5 exactly, t = 1/4: second coordinate 2.5 * 3/28 = 15/56
        let fam = CurveFamily::line(Coeff::from_ratio(3, 7));
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::Real(2.5), 4).unwrap();
        let p = ev.point(1);
        assert_relative_eq!(p[1].value, 15.0 / 56.0, max_relative = 1e-15);
        assert!(p[1].error_bound <= f64::powi(2.0, -53));
    }

    #[test]
    fn huge_integer_dilation_on_circle() {
        // frac(10^30 sin(2 pi / 3)) and frac(10^30 cos(2 pi / 3)); the second
        // is exactly 0 (10^30 * (-1/2) is an integer), so compare mod 1.
        let rho = Dilation::Exact(BigInt::from(10u32).pow(30));
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &rho, 3).unwrap();
        let p = ev.point(1);
        assert!(mod1_close(p[0].value, 0.93618347140262690519, 1e-12));
        assert!(mod1_close(p[1].value, 0.0, 1e-12));
        assert!(p[0].error_bound < f64::powi(2.0, -50));
        assert!(p[1].error_bound < f64::powi(2.0, -50));
    }

    #[test]
    fn power_of_two_dilation_matches_reference() {
        // frac(2^100 sin(2 pi 7/200))
        let rho = Dilation::Exact(BigInt::one() << 100);
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &rho, 200).unwrap();
        let p = ev.point(7);
        assert!(mod1_close(p[0].value, 0.848293534561164223182, 1e-12));
    }

    #[test]
    fn log_dilation_matches_reference() {
        // frac(9 ln 6 cos(2 pi / 6))
        let rho = Dilation::IntTimesLog {
            factor: BigInt::from(9),
            log_arg: 6,
        };
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &rho, 6).unwrap();
        let p = ev.point(1);
        assert!(mod1_close(p[1].value, 0.06291761152624750366, 1e-12));
        assert!(p[1].error_bound < f64::powi(2.0, -50));
    }

    #[test]
    fn offset_sampling() {
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(1), 4).unwrap();
        let t = BigRational::new(BigInt::one(), BigInt::from(8));
        let p = ev.reduce_at(&t);
        // sin(pi/4) = sqrt(2)/2
        assert!(mod1_close(p[0].value, 0.70710678118654752440, 1e-13));
    }

    #[test]
    fn error_bounds_stay_certified() {
        let rho = Dilation::Exact(BigInt::from(10u32).pow(30));
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &rho, 64).unwrap();
        for p in ev.points() {
            for c in p {
                assert!(c.value >= 0.0 && c.value < 1.0);
                assert!(c.error_bound < f64::powi(2.0, -50));
            }
        }
    }

    #[test]
    fn composed_family_reduces() {
        let fam = CurveFamily::ellipse();
        let ev =
            PhaseEvaluator::new(&fam, &[0.5], &Dilation::exact_u64(1000), 16).unwrap();
        for (k, p) in ev.points().iter().enumerate() {
            // compare against a direct f64 computation (rho is small enough)
            let t = (k + 1) as f64 / 16.0;
            let coords = fam.eval(&[0.5], t).unwrap();
            for (c, &raw) in p.iter().zip(&coords) {
                assert!(mod1_close(c.value, (1000.0 * raw).rem_euclid(1.0), 1e-9));
                assert!(c.error_bound < f64::powi(2.0, -50));
            }
        }
    }

    #[test]
    fn unit_character_quarter_phases_exact() {
        assert_eq!(unit_character(0.0), (1.0, 0.0));
        assert_eq!(unit_character(0.25), (0.0, 1.0));
        assert_eq!(unit_character(0.5), (-1.0, 0.0));
        assert_eq!(unit_character(0.75), (0.0, -1.0));
        let (c, s) = unit_character(0.125);
        assert_relative_eq!(c, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(s, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn integer_power_floor_cases() {
        assert_eq!(integer_power_floor(10, 2, 1), BigInt::from(100));
        // floor(10^(3/2)) = 31
        assert_eq!(integer_power_floor(10, 3, 2), BigInt::from(31));
        // floor(2^(1/2)) = 1
        assert_eq!(integer_power_floor(2, 1, 2), BigInt::one());
        assert_eq!(integer_power_floor(0, 2, 1), BigInt::zero());
        // floor(7^(5/3)) = floor(25.61...) = 25
        assert_eq!(integer_power_floor(7, 5, 3), BigInt::from(25));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let fam = CurveFamily::circle();
        assert!(matches!(
            PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(1), 0),
            Err(PhaseError::EmptySample)
        ));
        assert!(PhaseEvaluator::new(&fam, &[0.1], &Dilation::exact_u64(1), 4).is_err());
    }
}
