//! Simultaneous rational approximation by incremental denominator scan, and
//! the two dilation constructions built on top of it: a polynomial-pairing
//! construction that freezes a Weyl sum away from zero, and a log-scaled
//! construction that pins every sample of a curve near the integer lattice.

use num::bigint::{BigInt, BigUint};
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use serde_json::json;
use thiserror::Error;

use crate::bigfix::FxCtx;
use crate::curvekit::{rational_to_f64, Coeff, CurveFamily};
use crate::equidist::{sample_measure, weyl_sum_abs, SampleCloud};
use crate::phase::{coordinate_values, CoordVal, Dilation, PhaseError, PhaseEvaluator};

/// Default ceiling on the number of denominators examined by [`dirichlet`].
pub const DEFAULT_SCAN_CAP: u64 = 1 << 32;

/// Default ceiling on `n * dim` for [`bad_dilation_generic`]; the modulus of
/// that scan is `3^(n*dim)`, so the cost grows exponentially in the product.
pub const GENERIC_PRODUCT_CAP: usize = 20;

const FRAC_BITS: u32 = 128;

#[derive(Debug, Error)]
pub enum DiophError {
    #[error("input vector must be non-empty")]
    EmptyInput,
    #[error("modulus must be a positive integer")]
    BadModulus,
    #[error("scan cap must be positive")]
    BadCap,
    #[error("degree must be at least 1 and match the coefficient count (got {coeffs} coefficients for degree {kappa})")]
    BadDegree { kappa: u32, coeffs: usize },
    #[error("sample count must be at least 2")]
    BadSampleCount,
    #[error("n * dim = {got} exceeds the budget {cap} for the exponential scan")]
    ProductCapExceeded { got: usize, cap: usize },
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("verifier requires a polynomial-tag construction")]
    WrongTag,
    #[error("confinement radius must lie in (0, 1/2)")]
    BadRadius,
    #[error(transparent)]
    Phase(#[from] PhaseError),
}

// ---------------------------------------------------------------------------
// Real inputs for the scan
// ---------------------------------------------------------------------------

/// A real scan coordinate, held either as an exact rational or as a
/// fixed-point mantissa with 128 fractional bits. Comparisons against the
/// approximation threshold are exact with respect to this representation.
#[derive(Clone, Debug)]
pub struct DioReal {
    /// `round(x * 2^128)`, always present
    mantissa: BigInt,
    /// present when `x` is exactly rational
    exact: Option<BigRational>,
}

impl DioReal {
    pub fn from_rational(r: BigRational) -> Self {
        let mantissa = mantissa_of_rational(&r);
        DioReal {
            mantissa,
            exact: Some(r),
        }
    }

    pub fn from_f64(v: f64) -> Self {
        let r = BigRational::from_float(v).unwrap_or_else(BigRational::zero);
        Self::from_rational(r)
    }

    /// Exact when the coefficient is rational, otherwise a 128-bit mantissa
    /// computed at 192 working bits and rounded down to 128.
    pub fn from_coeff(c: &Coeff) -> Self {
        if let Some(r) = c.as_rational() {
            return Self::from_rational(r.clone());
        }
        let ctx = FxCtx::new(192);
        let m = c.eval_fx(&ctx);
        Self::from_mantissa_bits(m, 192)
    }

    /// Interprets `m / 2^bits` as the coordinate value, `bits >= 128`.
    pub fn from_mantissa_bits(m: BigInt, bits: u32) -> Self {
        assert!(bits >= FRAC_BITS, "need at least 128 fractional bits");
        let mantissa = if bits == FRAC_BITS {
            m
        } else {
            (m + (BigInt::one() << (bits - FRAC_BITS - 1))) >> (bits - FRAC_BITS)
        };
        DioReal {
            mantissa,
            exact: None,
        }
    }

    pub fn approx_f64(&self) -> f64 {
        match &self.exact {
            Some(r) => rational_to_f64(r),
            None => rational_to_f64(&BigRational::new(
                self.mantissa.clone(),
                BigInt::one() << FRAC_BITS,
            )),
        }
    }

    /// Fractional step for the incremental scan.
    fn scan_state(&self) -> ScanState {
        match &self.exact {
            Some(r) => {
                let den = r.denom().magnitude().clone();
                let num_mod = r.numer().mod_floor(r.denom()).magnitude().clone();
                ScanState::Exact {
                    num_mod,
                    den,
                    acc: BigUint::zero(),
                }
            }
            None => {
                let modulus = BigInt::one() << FRAC_BITS;
                let step = self
                    .mantissa
                    .mod_floor(&modulus)
                    .to_u128()
                    .expect("residue fits in 128 bits");
                ScanState::Fixed { step, acc: 0 }
            }
        }
    }

    /// Exact distance of `q * x` to the nearest integer, as a rational in the
    /// coordinate's own representation.
    fn exact_err(&self, q: u64) -> BigRational {
        match &self.exact {
            Some(r) => {
                let den = r.denom();
                let s = (r.numer() * BigInt::from(q)).mod_floor(den);
                let dist = s.clone().min(den - &s);
                BigRational::new(dist, den.clone())
            }
            None => {
                let modulus = BigInt::one() << FRAC_BITS;
                let c = (&self.mantissa * BigInt::from(q)).mod_floor(&modulus);
                let dist = c.clone().min(&modulus - &c);
                BigRational::new(dist, modulus)
            }
        }
    }

    /// Nearest integer to `q * x`.
    fn nearest_multiple(&self, q: u64) -> BigInt {
        match &self.exact {
            Some(r) => {
                let num = r.numer() * BigInt::from(q) * BigInt::from(2) + r.denom();
                num.div_floor(&(r.denom() * BigInt::from(2)))
            }
            None => {
                let scaled = &self.mantissa * BigInt::from(q) + (BigInt::one() << (FRAC_BITS - 1));
                scaled >> FRAC_BITS
            }
        }
    }
}

enum ScanState {
    Fixed { step: u128, acc: u128 },
    Exact { num_mod: BigUint, den: BigUint, acc: BigUint },
}

impl ScanState {
    fn advance(&mut self) {
        match self {
            ScanState::Fixed { step, acc } => *acc = acc.wrapping_add(*step),
            ScanState::Exact { num_mod, den, acc } => {
                *acc += &*num_mod;
                if &*acc >= den {
                    *acc -= &*den;
                }
            }
        }
    }

    fn err_f64(&self) -> f64 {
        match self {
            ScanState::Fixed { acc, .. } => {
                let e = (*acc).min(acc.wrapping_neg());
                e as f64 * f64::exp2(-(FRAC_BITS as f64))
            }
            ScanState::Exact { den, acc, .. } => {
                let dist = acc.clone().min(den - acc);
                rational_to_f64(&BigRational::new(dist.into(), BigInt::from(den.clone())))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The denominator scan
// ---------------------------------------------------------------------------

/// Result of the minimal-denominator approximation scan.
#[derive(Clone, Debug)]
pub struct DirichletSolution {
    /// denominator, minimal among all that beat the threshold strictly
    pub q: u64,
    /// nearest integer to `q * x_i` per coordinate
    pub p: Vec<BigInt>,
    /// `max_i |q x_i - p_i|`
    pub err: f64,
    /// whether `err <= M^(-1/N)` (non-strict)
    pub bound_met: bool,
    /// number of denominators examined
    pub scanned: u64,
}

/// Scans denominators `q = 1, 2, ...` up to `min(M, cap)` and stops at the
/// first `q` whose worst coordinate error `max_i |q x_i - p_i|` is strictly
/// below `M^(-1/N)`; by pigeonhole such a `q <= M` always exists. If the cap
/// bites first, the best denominator seen is returned and `bound_met` records
/// whether it still meets the threshold non-strictly.
///
/// Threshold comparisons are exact: for error `a/b` the test `a^N * M < b^N`
/// is evaluated in integer arithmetic, so near-threshold decisions do not
/// depend on floating-point rounding.
pub fn dirichlet(x: &[DioReal], m: &BigInt, cap: u64) -> Result<DirichletSolution, DiophError> {
    if x.is_empty() {
        return Err(DiophError::EmptyInput);
    }
    if !m.is_positive() {
        return Err(DiophError::BadModulus);
    }
    if cap == 0 {
        return Err(DiophError::BadCap);
    }
    let n_len = x.len() as u32;
    let limit = m.to_u64().map_or(cap, |mv| mv.min(cap));

    let thr = rational_to_f64(&BigRational::from_integer(m.clone())).powf(-1.0 / n_len as f64);
    // anything with a strictly larger f64 error than this cannot pass the
    // exact test; the margin covers conversion rounding
    let thr_hi = thr * (1.0 + 1e-9) + f64::MIN_POSITIVE;

    let mut states: Vec<ScanState> = x.iter().map(|c| c.scan_state()).collect();
    let mut best_q = 1u64;
    let mut best_err = f64::INFINITY;

    for q in 1..=limit {
        let mut worst = 0.0f64;
        for s in states.iter_mut() {
            s.advance();
            worst = worst.max(s.err_f64());
        }
        if worst < best_err {
            best_err = worst;
            best_q = q;
        }
        if worst <= thr_hi {
            let exact = max_exact_err(x, q);
            if pow_cmp(&exact, n_len, m) == std::cmp::Ordering::Less {
                return Ok(solution_at(x, q, q, true));
            }
        }
    }

    let exact = max_exact_err(x, best_q);
    let bound_met = pow_cmp(&exact, n_len, m) != std::cmp::Ordering::Greater;
    Ok(solution_at(x, best_q, limit, bound_met))
}

fn max_exact_err(x: &[DioReal], q: u64) -> BigRational {
    x.iter()
        .map(|c| c.exact_err(q))
        .max()
        .expect("non-empty input")
}

/// Compares `err^N * M` with `1`, i.e. `err` with `M^(-1/N)`, exactly.
fn pow_cmp(err: &BigRational, n_len: u32, m: &BigInt) -> std::cmp::Ordering {
    let lhs = err.numer().pow(n_len) * m;
    let rhs = err.denom().pow(n_len);
    lhs.cmp(&rhs)
}

fn solution_at(x: &[DioReal], q: u64, scanned: u64, bound_met: bool) -> DirichletSolution {
    let p = x.iter().map(|c| c.nearest_multiple(q)).collect();
    let err = rational_to_f64(&max_exact_err(x, q));
    DirichletSolution {
        q,
        p,
        err,
        bound_met,
        scanned,
    }
}

// ---------------------------------------------------------------------------
// Dilation constructions
// ---------------------------------------------------------------------------

/// Which construction produced a [`BadDilation`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstructionTag {
    /// polynomial pairing of degree `kappa`, dilation `n^kappa * q`
    PolyKappa { kappa: u32 },
    /// log-scaled construction over `dim` coordinates
    GenericLog { dim: usize },
}

/// Scale applied to the curve samples targeted by the generic construction.
/// `Unit` is a test hook that drops the logarithmic factor so rational
/// fixtures stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenericScale {
    LogN,
    Unit,
}

/// A dilation engineered so the sample cloud stays far from uniform, together
/// with the approximation certificate that proves it.
#[derive(Clone, Debug)]
pub struct BadDilation {
    pub n: u64,
    pub rho: Dilation,
    pub rho_tilde: BigInt,
    pub tag: ConstructionTag,
    /// signed per-target errors `q * x_i - p_i`
    pub certificate: Vec<f64>,
    pub scanned: u64,
    /// soft sanity bound `rho <= 3.5^(n*dim)` for the generic construction,
    /// `None` when not applicable
    pub soft_bound_ok: Option<bool>,
}

impl BadDilation {
    /// Machine-checkable certificate: construction parameters, the scanned
    /// denominator as a decimal string, and the signed target errors.
    pub fn certificate_json(&self) -> String {
        let mut obj = json!({
            "n": self.n,
            "rho_tilde": self.rho_tilde.to_string(),
            "q_scanned": self.scanned,
            "errors": self.certificate,
        });
        match &self.tag {
            ConstructionTag::PolyKappa { kappa } => {
                obj["kappa"] = json!(kappa);
            }
            ConstructionTag::GenericLog { dim } => {
                obj["d"] = json!(dim);
            }
        }
        serde_json::to_string_pretty(&obj).expect("certificate serializes")
    }
}

/// Builds a dilation `rho = n^kappa * q` for a polynomial pairing with
/// coefficients `a_kappa, ..., a_1` (highest degree first, constant term
/// excluded: it only contributes a global phase). The denominator `q` is
/// found by [`dirichlet`] with modulus `n^(kappa^2+1)`, which makes every
/// certificate error at most `n^-(kappa + 1/kappa)`.
pub fn bad_dilation_poly(
    coeffs: &[Coeff],
    kappa: u32,
    n: u64,
    cap: u64,
) -> Result<BadDilation, DiophError> {
    if kappa == 0 || coeffs.len() != kappa as usize {
        return Err(DiophError::BadDegree {
            kappa,
            coeffs: coeffs.len(),
        });
    }
    if n < 2 {
        return Err(DiophError::BadSampleCount);
    }
    let m = BigInt::from(n).pow(kappa * kappa + 1);
    let x: Vec<DioReal> = coeffs.iter().map(DioReal::from_coeff).collect();
    let sol = dirichlet(&x, &m, cap)?;
    if !sol.bound_met {
        return Err(DiophError::ConstructionFailed(format!(
            "no denominator within budget ({} scanned) met the bound",
            sol.scanned
        )));
    }
    let certificate = signed_errors(&x, &sol);
    let rho_value = BigInt::from(n).pow(kappa) * BigInt::from(sol.q);
    debug_assert!(rho_value >= BigInt::from(n).pow(kappa));
    debug_assert!(rho_value <= BigInt::from(n).pow((kappa + 1) * (kappa + 1)));
    Ok(BadDilation {
        n,
        rho: Dilation::Exact(rho_value),
        rho_tilde: BigInt::from(sol.q),
        tag: ConstructionTag::PolyKappa { kappa },
        certificate,
        scanned: sol.scanned,
        soft_bound_ok: None,
    })
}

/// Builds a dilation `rho = q * log n` (or `rho = q` under the `Unit` scale)
/// that drags every curve sample `phi(x, j/n)`, `j = 1..n`, within `1/3` of
/// the integer lattice. The targets are scanned jointly with modulus
/// `3^(n*dim)`, so the cost is exponential in `n * dim`.
pub fn bad_dilation_generic(
    family: &CurveFamily,
    x: &[f64],
    n: u64,
    scale: GenericScale,
) -> Result<BadDilation, DiophError> {
    bad_dilation_generic_with(family, x, n, scale, GENERIC_PRODUCT_CAP, DEFAULT_SCAN_CAP)
}

pub fn bad_dilation_generic_with(
    family: &CurveFamily,
    x: &[f64],
    n: u64,
    scale: GenericScale,
    product_cap: usize,
    scan_cap: u64,
) -> Result<BadDilation, DiophError> {
    if n < 2 {
        return Err(DiophError::BadSampleCount);
    }
    let dim = family.dim();
    let product = n as usize * dim;
    if product > product_cap {
        return Err(DiophError::ProductCapExceeded {
            got: product,
            cap: product_cap,
        });
    }
    family
        .eval(x, 0.0)
        .map_err(|e| DiophError::ConstructionFailed(e.to_string()))?;

    let ctx = FxCtx::new(192);
    let ln_n = ctx.ln_u64(n);
    let mut targets = Vec::with_capacity(product);
    for j in 1..=n {
        let t = BigRational::new(BigInt::from(j), BigInt::from(n));
        for cv in coordinate_values(family, x, &t, &ctx) {
            targets.push(target_value(cv, scale, &ctx, &ln_n));
        }
    }

    let m = BigInt::from(3u32).pow(product as u32);
    let sol = dirichlet(&targets, &m, scan_cap)?;
    if !sol.bound_met {
        return Err(DiophError::ConstructionFailed(format!(
            "no denominator within budget ({} scanned) met the bound",
            sol.scanned
        )));
    }
    let certificate = signed_errors(&targets, &sol);
    let rho = match scale {
        GenericScale::LogN => Dilation::IntTimesLog {
            factor: BigInt::from(sol.q),
            log_arg: n,
        },
        GenericScale::Unit => Dilation::Exact(BigInt::from(sol.q)),
    };
    let soft_bound_ok = if n >= 3 {
        Some(rho.approx_f64() <= 3.5f64.powi(product as i32))
    } else {
        None
    };
    Ok(BadDilation {
        n,
        rho,
        rho_tilde: BigInt::from(sol.q),
        tag: ConstructionTag::GenericLog { dim },
        certificate,
        scanned: sol.scanned,
        soft_bound_ok,
    })
}

fn target_value(cv: CoordVal, scale: GenericScale, ctx: &FxCtx, ln_n: &BigInt) -> DioReal {
    match (cv, scale) {
        (CoordVal::Exact(r), GenericScale::Unit) => DioReal::from_rational(r),
        (CoordVal::Exact(r), GenericScale::LogN) => {
            let m = ctx.mul(&ctx.from_rational(&r), ln_n);
            DioReal::from_mantissa_bits(m, ctx.bits)
        }
        (CoordVal::Fx { m, .. }, GenericScale::Unit) => DioReal::from_mantissa_bits(m, ctx.bits),
        (CoordVal::Fx { m, .. }, GenericScale::LogN) => {
            let scaled = ctx.mul(&m, ln_n);
            DioReal::from_mantissa_bits(scaled, ctx.bits)
        }
    }
}

/// Signed residuals `q * x_i - p_i` at the solution, one per target.
fn signed_errors(x: &[DioReal], sol: &DirichletSolution) -> Vec<f64> {
    x.iter()
        .zip(&sol.p)
        .map(|(c, p)| match &c.exact {
            Some(r) => rational_to_f64(
                &(r * BigInt::from(sol.q) - BigRational::from_integer(p.clone())),
            ),
            None => {
                let diff = &c.mantissa * BigInt::from(sol.q) - (p << FRAC_BITS);
                rational_to_f64(&BigRational::new(diff, BigInt::one() << FRAC_BITS))
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Verifiers
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct NondecayReport {
    /// `|S_n(h)|` under the constructed dilation, phases reduced exactly
    /// where possible
    pub abs_s: f64,
    /// `abs_s >= c0`
    pub pass: bool,
    /// largest `|delta_{n,j}|` reconstructed from the certificate;
    /// bounded by `kappa * n^(-1/kappa)`
    pub max_delta: f64,
}

/// Checks that the polynomial construction actually freezes the Weyl sum:
/// recomputes `|S_n(h)|` under `bad.rho` and reconstructs the phase
/// perturbations `delta_{n,j} = sum_i n^(kappa-i) j^i (q a_i - p_i)` from the
/// certificate.
pub fn verify_nondecay(
    family: &CurveFamily,
    x: &[f64],
    h: &[i64],
    bad: &BadDilation,
    c0: f64,
) -> Result<NondecayReport, DiophError> {
    let kappa = match &bad.tag {
        ConstructionTag::PolyKappa { kappa } => *kappa,
        ConstructionTag::GenericLog { .. } => return Err(DiophError::WrongTag),
    };
    let ev = PhaseEvaluator::new(family, x, &bad.rho, bad.n as usize)?;
    let cloud = sample_measure(&ev);
    let abs_s = weyl_sum_abs(&cloud, h);

    let n = bad.n as f64;
    let mut max_delta = 0.0f64;
    for j in 1..=bad.n {
        let mut delta = 0.0f64;
        for (idx, e) in bad.certificate.iter().enumerate() {
            // certificate order is a_kappa .. a_1, so entry idx has degree
            // kappa - idx and carries a factor n^idx * j^(kappa - idx)
            let deg = kappa - idx as u32;
            delta += n.powi(idx as i32) * (j as f64).powi(deg as i32) * e;
        }
        max_delta = max_delta.max(delta.abs());
    }
    Ok(NondecayReport {
        abs_s,
        pass: abs_s >= c0,
        max_delta,
    })
}

#[derive(Clone, Debug)]
pub struct ConfinementReport {
    /// largest circle distance of any reduced coordinate to the lattice
    pub max_distance: f64,
    pub confined: bool,
}

/// Checks that every reduced coordinate of the cloud lies within circle
/// distance `radius` of the integer lattice, `radius` in `(0, 1/2)`.
pub fn verify_confinement(
    cloud: &SampleCloud,
    radius: f64,
) -> Result<ConfinementReport, DiophError> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(DiophError::BadRadius);
    }
    let mut max_distance = 0.0f64;
    for p in &cloud.points {
        for &v in p {
            let d = v.min(1.0 - v);
            max_distance = max_distance.max(d);
        }
    }
    Ok(ConfinementReport {
        max_distance,
        confined: max_distance <= radius,
    })
}

fn mantissa_of_rational(r: &BigRational) -> BigInt {
    let scaled = r * BigRational::new(BigInt::one() << FRAC_BITS, BigInt::one());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    (scaled + half).floor().to_integer()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equidist::box_discrepancy;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rational(num: i64, den: i64) -> DioReal {
        DioReal::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    #[test]
    fn exact_rational_scan_hits_denominator() {
        // x = (1/3), M = 3: q = 1 and 2 sit exactly on the threshold 1/3 and
        // do not pass strictly; q = 3 is an exact hit
        let sol = dirichlet(&[rational(1, 3)], &BigInt::from(3), DEFAULT_SCAN_CAP).unwrap();
        assert_eq!(sol.q, 3);
        assert_eq!(sol.p, vec![BigInt::one()]);
        assert_eq!(sol.err, 0.0);
        assert!(sol.bound_met);
        assert_eq!(sol.scanned, 3);
    }

    #[test]
    fn sqrt2_scan_matches_worked_example() {
        let x = [DioReal::from_coeff(&Coeff::sqrt_int(2))];
        let sol = dirichlet(&x, &BigInt::from(10), DEFAULT_SCAN_CAP).unwrap();
        assert_eq!(sol.q, 5);
        assert_eq!(sol.p, vec![BigInt::from(7)]);
        assert_abs_diff_eq!(sol.err, 5.0 * std::f64::consts::SQRT_2 - 7.0, epsilon = 1e-12);
        assert!(sol.bound_met);
    }

    #[test]
    fn single_coordinate_matches_continued_fraction_denominators() {
        // convergent denominators of sqrt(2): q_{k+1} = 2 q_k + q_{k-1}
        let x = [DioReal::from_coeff(&Coeff::sqrt_int(2))];
        for m in [10u64, 100, 10_000] {
            let sol = dirichlet(&x, &BigInt::from(m), DEFAULT_SCAN_CAP).unwrap();
            // brute-force oracle: the minimal q whose error strictly beats
            // the threshold, computed independently in floating point
            let thr = (m as f64).powf(-1.0);
            let mut expect = None;
            for q in 1..=m {
                let v = q as f64 * std::f64::consts::SQRT_2;
                let e = (v - v.round()).abs();
                if e < thr * (1.0 - 1e-12) {
                    expect = Some(q);
                    break;
                }
            }
            assert_eq!(sol.q, expect.unwrap());
            // and that q is a continued-fraction denominator
            let (mut a, mut b) = (1u64, 2u64);
            let mut cf = vec![a, b];
            while b < m {
                let c = 2 * b + a;
                cf.push(c);
                a = b;
                b = c;
            }
            assert!(cf.contains(&sol.q), "q = {} not a convergent", sol.q);
        }
    }

    #[test]
    fn minimality_of_returned_denominator() {
        // every q' < q must fail the strict threshold test
        let x = [
            DioReal::from_coeff(&Coeff::sqrt_int(2)),
            DioReal::from_coeff(&Coeff::sqrt_int(3)),
        ];
        let m = BigInt::from(400);
        let sol = dirichlet(&x, &m, DEFAULT_SCAN_CAP).unwrap();
        assert!(sol.bound_met);
        for q in 1..sol.q {
            let err = max_exact_err(&x, q);
            assert_ne!(
                pow_cmp(&err, 2, &m),
                std::cmp::Ordering::Less,
                "q = {} already passes",
                q
            );
        }
    }

    #[test]
    fn cap_exhaustion_returns_best_seen() {
        // x = 1/10, M = 10: every q < 10 sits at or above the threshold 1/10,
        // so a cap of 5 exhausts; the best error 1/10 still meets the bound
        // non-strictly
        let x = [rational(1, 10)];
        let sol = dirichlet(&x, &BigInt::from(10), 5).unwrap();
        assert_eq!(sol.scanned, 5);
        assert_eq!(sol.q, 1);
        assert!(sol.bound_met);
        assert_abs_diff_eq!(sol.err, 0.1, epsilon = 1e-15);

        // with a tighter modulus the capped scan genuinely fails the bound
        let x = [rational(1, 97)];
        let sol = dirichlet(&x, &BigInt::from(1000), 5).unwrap();
        assert_eq!(sol.scanned, 5);
        assert!(!sol.bound_met);
        assert_abs_diff_eq!(sol.err, 1.0 / 97.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            dirichlet(&[], &BigInt::from(5), 10),
            Err(DiophError::EmptyInput)
        ));
        assert!(matches!(
            dirichlet(&[rational(1, 2)], &BigInt::zero(), 10),
            Err(DiophError::BadModulus)
        ));
        assert!(matches!(
            dirichlet(&[rational(1, 2)], &BigInt::from(5), 0),
            Err(DiophError::BadCap)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scan_meets_bound_within_modulus(
            xs in proptest::collection::vec(0.0f64..1.0, 1..=3),
            m in 2u64..10_000,
        ) {
            let x: Vec<DioReal> = xs.iter().map(|&v| DioReal::from_f64(v)).collect();
            let sol = dirichlet(&x, &BigInt::from(m), DEFAULT_SCAN_CAP).unwrap();
            prop_assert!(sol.bound_met);
            prop_assert!(sol.q <= m);
            // p_i really is the nearest integer
            for (c, p) in x.iter().zip(&sol.p) {
                let v = c.approx_f64() * sol.q as f64;
                prop_assert!((v - rational_to_f64(&BigRational::from_integer(p.clone()))).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn integer_coefficients_give_trivial_construction() {
        // pairing t^2 with integer coefficients: q = 1, zero errors
        let coeffs = [Coeff::from_int(1), Coeff::zero()];
        let bad = bad_dilation_poly(&coeffs, 2, 8, DEFAULT_SCAN_CAP).unwrap();
        assert_eq!(bad.rho_tilde, BigInt::one());
        assert!(bad.certificate.iter().all(|&e| e == 0.0));
        assert_eq!(bad.rho, Dilation::Exact(BigInt::from(64)));
    }

    #[test]
    fn quadratic_irrational_construction_meets_error_bound() {
        let coeffs = [Coeff::sqrt_int(2), Coeff::sqrt_int(3)];
        let n = 10u64;
        let bad = bad_dilation_poly(&coeffs, 2, n, DEFAULT_SCAN_CAP).unwrap();
        // rho_tilde <= M = n^5
        assert!(bad.rho_tilde <= BigInt::from(n).pow(5));
        let thr = (n as f64).powf(-2.5);
        for e in &bad.certificate {
            assert!(e.abs() <= thr * (1.0 + 1e-12), "error {} above {}", e, thr);
        }
        // rho sits in the window [n^kappa, n^(kappa+1)^2]
        let rho = bad.rho.as_rational().unwrap().to_integer();
        assert!(rho >= BigInt::from(n).pow(2));
        assert!(rho <= BigInt::from(n).pow(9));
    }

    #[test]
    fn poly_construction_rejects_bad_shapes() {
        assert!(matches!(
            bad_dilation_poly(&[Coeff::from_int(1)], 2, 8, DEFAULT_SCAN_CAP),
            Err(DiophError::BadDegree { .. })
        ));
        assert!(matches!(
            bad_dilation_poly(&[Coeff::from_int(1)], 1, 1, DEFAULT_SCAN_CAP),
            Err(DiophError::BadSampleCount)
        ));
    }

    #[test]
    fn nondecay_monomial_square_is_exact() {
        // phases n^2 (j/n)^2 = j^2 are integers: |S| = 1 and delta = 0
        let fam = CurveFamily::monomial(2);
        let coeffs = [Coeff::from_int(1), Coeff::zero()];
        let bad = bad_dilation_poly(&coeffs, 2, 16, DEFAULT_SCAN_CAP).unwrap();
        let rep = verify_nondecay(&fam, &[], &[1, 0], &bad, 0.5).unwrap();
        assert_abs_diff_eq!(rep.abs_s, 1.0, epsilon = 1e-12);
        assert_eq!(rep.max_delta, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn nondecay_quadratic_irrational_passes_at_n20() {
        // curve (sqrt2 t^2, sqrt3 t) paired with h = (1, 1) gives the
        // polynomial sqrt2 t^2 + sqrt3 t
        let fam = CurveFamily::poly_from_coeffs(
            "aniso",
            vec![
                vec![(2, Coeff::sqrt_int(2))],
                vec![(1, Coeff::sqrt_int(3))],
            ],
        )
        .unwrap();
        let n = 20u64;
        let coeffs = [Coeff::sqrt_int(2), Coeff::sqrt_int(3)];
        let bad = bad_dilation_poly(&coeffs, 2, n, DEFAULT_SCAN_CAP).unwrap();
        let rep = verify_nondecay(&fam, &[], &[1, 1], &bad, 0.5).unwrap();
        assert!(rep.pass, "|S| = {} fell below 1/2", rep.abs_s);
        assert!(rep.max_delta <= 2.0 * (n as f64).powf(-0.5) + 1e-12);

        // the phase of sample j reconstructs from the certificate alone:
        // frac(<h, rho phi(j/n)>) = frac(delta_{n,j}) for these pairings
        let ev = PhaseEvaluator::new(&fam, &[], &bad.rho, n as usize).unwrap();
        for j in 1..=n {
            let mut delta = 0.0f64;
            for (idx, e) in bad.certificate.iter().enumerate() {
                let deg = 2 - idx as u32;
                delta += (n as f64).powi(idx as i32) * (j as f64).powi(deg as i32) * e;
            }
            let phase: f64 = ev
                .point(j as usize)
                .iter()
                .map(|c| c.value)
                .sum::<f64>()
                .rem_euclid(1.0);
            let want = delta.rem_euclid(1.0);
            let diff = (phase - want).abs();
            let circ = diff.min(1.0 - diff);
            assert!(circ < 1e-6, "sample {}: phase {} vs delta {}", j, phase, want);
        }
    }

    #[test]
    fn nondecay_rejects_generic_tag() {
        let fam = CurveFamily::circle();
        let bad = bad_dilation_generic(&fam, &[], 4, GenericScale::Unit).unwrap();
        assert!(matches!(
            verify_nondecay(&fam, &[], &[1, 0], &bad, 0.5),
            Err(DiophError::WrongTag)
        ));
    }

    #[test]
    fn rational_samples_give_exact_generic_hit() {
        // polynomial family (t, 2t) sampled at quarters: all values have
        // denominator 4 and intermediate q fail the 1/3 test, so the scan
        // lands on an exact hit with zero errors
        let cfg = "kind = poly\nd = 2\nrow = 1, 1, 1, 1\nrow = 2, 1, 2, 1\n";
        let fam = CurveFamily::from_config_str(cfg).unwrap();
        let bad = bad_dilation_generic(&fam, &[], 4, GenericScale::Unit).unwrap();
        assert!(bad.rho_tilde <= BigInt::from(4));
        assert!(bad.certificate.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn circle_generic_construction_confines_the_cloud() {
        let fam = CurveFamily::circle();
        let n = 8u64;
        let bad = bad_dilation_generic(&fam, &[], n, GenericScale::LogN).unwrap();
        assert!(bad.rho_tilde <= BigInt::from(3u32).pow(16));
        let thr = 1.0 / 3.0;
        assert_eq!(bad.certificate.len(), 16);
        for e in &bad.certificate {
            assert!(e.abs() <= thr + 1e-12);
        }
        assert_eq!(bad.soft_bound_ok, Some(true));

        // the reduced cloud is confined within circle distance 1/3
        let ev = PhaseEvaluator::new(&fam, &[], &bad.rho, n as usize).unwrap();
        let cloud = sample_measure(&ev);
        let rep = verify_confinement(&cloud, 1.0 / 3.0 + 1e-9).unwrap();
        assert!(
            rep.confined,
            "max distance {} exceeds 1/3",
            rep.max_distance
        );

        // and the discrepancy stays macroscopically large
        let disc = box_discrepancy(&cloud, 12).unwrap();
        let floor = 1.0 - (2.0f64 / 3.0).powi(2) - 0.05;
        assert!(disc >= floor, "discrepancy {} below {}", disc, floor);
    }

    #[test]
    fn generic_product_cap_enforced() {
        let fam = CurveFamily::circle();
        assert!(matches!(
            bad_dilation_generic(&fam, &[], 16, GenericScale::LogN),
            Err(DiophError::ProductCapExceeded { got: 32, cap: 20 })
        ));
    }

    #[test]
    fn confinement_rejects_bad_radius_and_detects_spread() {
        let cloud = SampleCloud::from_points(vec![vec![0.1, 0.9], vec![0.5, 0.2]]);
        assert!(matches!(
            verify_confinement(&cloud, 0.0),
            Err(DiophError::BadRadius)
        ));
        assert!(matches!(
            verify_confinement(&cloud, 0.5),
            Err(DiophError::BadRadius)
        ));
        let rep = verify_confinement(&cloud, 0.3).unwrap();
        assert!(!rep.confined);
        assert_abs_diff_eq!(rep.max_distance, 0.5, epsilon = 1e-15);

        let tight = SampleCloud::from_points(vec![vec![0.05], vec![0.97]]);
        let rep = verify_confinement(&tight, 0.1).unwrap();
        assert!(rep.confined);
        assert_abs_diff_eq!(rep.max_distance, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn certificate_serializes_with_decimal_rho() {
        let coeffs = [Coeff::sqrt_int(2), Coeff::sqrt_int(3)];
        let bad = bad_dilation_poly(&coeffs, 2, 6, DEFAULT_SCAN_CAP).unwrap();
        let json = bad.certificate_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["n"], 6);
        assert_eq!(parsed["kappa"], 2);
        assert_eq!(parsed["rho_tilde"], bad.rho_tilde.to_string().as_str());
        assert_eq!(
            parsed["errors"].as_array().unwrap().len(),
            bad.certificate.len()
        );
        assert!(parsed["q_scanned"].as_u64().unwrap() >= 1);
    }

    #[test]
    fn mixed_mode_scan_agrees_with_pure_modes() {
        // one rational and one irrational coordinate together
        let x = [rational(1, 4), DioReal::from_coeff(&Coeff::sqrt_int(2))];
        let sol = dirichlet(&x, &BigInt::from(100), DEFAULT_SCAN_CAP).unwrap();
        assert!(sol.bound_met);
        // verify against a direct floating-point rescan
        let thr = (100f64).powf(-0.5);
        for q in 1..sol.q {
            let e1 = (q as f64 * 0.25 - (q as f64 * 0.25).round()).abs();
            let v2 = q as f64 * std::f64::consts::SQRT_2;
            let e2 = (v2 - v2.round()).abs();
            assert!(e1.max(e2) >= thr * (1.0 - 1e-9), "q = {} passes early", q);
        }
    }
}
