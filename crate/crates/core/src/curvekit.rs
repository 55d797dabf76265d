//! Curve families on `[0,1]^m x [0,1] -> R^d` with exact derivative and
//! pairing bookkeeping.
//!
//! Three kinds are supported:
//!
//! * polynomial coordinates `sum_k c_k t^k`;
//! * trigonometric coordinates `c_0 + sum_nu A cos(2 pi nu t) + B sin(2 pi nu t)`
//!   with positive rational frequencies (1-periodic iff every `nu` is an
//!   integer);
//! * affine-composed: a trigonometric base row-vector multiplied by a
//!   parameter-dependent matrix (used for the ellipse-type family).
//!
//! Coefficients live in the ring `Q + Q*sqrt(r)` (square-free radicands), so
//! derivatives of any order and integer pairings stay exact; zero tests on
//! pairings are algebraic except for the composed kind, which falls back to a
//! dense sample against a scaled threshold and says so in its report.

use crate::bigfix::FxCtx;
use num::traits::{One, Signed, ToPrimitive, Zero};
use num::{BigInt, BigRational, BigUint};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Hard cap on derivative order (protects jet lengths and factorials).
pub const MAX_DERIVATIVE: u32 = 64;
/// Default frequency box radius for order scans.
pub const DEFAULT_H_BOX: u32 = 5;
/// Default derivative ceiling for order scans.
pub const DEFAULT_J_MAX: u32 = 16;
/// Default points per parameter axis for order scans.
pub const DEFAULT_X_GRID: usize = 17;

const SAMPLED_ZERO_POINTS: usize = 257;
const SAMPLED_ZERO_THRESHOLD: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("parameter vector has length {got}, family expects {want}")]
    ParamLen { got: usize, want: usize },
    #[error("frequency vector has length {got}, family dimension is {want}")]
    FreqLen { got: usize, want: usize },
    #[error("derivative order {0} exceeds the supported maximum {1}")]
    DerivativeOrder(u32, u32),
    #[error("order scan supports at most 3 parameter axes, family has {0}")]
    ParamGrid(usize),
    #[error("curve config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config export needs a polynomial or trig kind with rational coefficients")]
    ConfigUnsupported,
}

// ---------------------------------------------------------------------------
// Coefficients: rational plus rational multiples of square roots
// ---------------------------------------------------------------------------

/// Exact coefficient `q + sum_i s_i * sqrt(r_i)` with square-free radicands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coeff {
    rat: BigRational,
    irr: BTreeMap<BigUint, BigRational>,
}

impl Coeff {
    pub fn zero() -> Self {
        Coeff {
            rat: BigRational::zero(),
            irr: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        Coeff::from_int(1)
    }

    pub fn from_int(v: i64) -> Self {
        Coeff {
            rat: BigRational::from_integer(BigInt::from(v)),
            irr: BTreeMap::new(),
        }
    }

    pub fn from_rational(r: BigRational) -> Self {
        Coeff {
            rat: r,
            irr: BTreeMap::new(),
        }
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Coeff::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// `sqrt(r)` for non-negative rational `r`, normalized so the radicand is
    /// a square-free integer (`sqrt(p/q) = sqrt(p q)/q`, squares extracted).
    pub fn sqrt_of(r: BigRational) -> Self {
        assert!(!r.is_negative(), "sqrt of a negative rational");
        if r.is_zero() {
            return Coeff::zero();
        }
        let p = r.numer().magnitude().clone();
        let q = r.denom().magnitude().clone();
        let (square, free) = split_square(&(p * &q));
        let scale = BigRational::new(
            BigInt::from(square),
            BigInt::from_biguint(num::bigint::Sign::Plus, q),
        );
        if free.is_one() {
            Coeff::from_rational(scale)
        } else {
            let mut irr = BTreeMap::new();
            irr.insert(free, scale);
            Coeff {
                rat: BigRational::zero(),
                irr,
            }
        }
    }

    pub fn sqrt_int(n: u64) -> Self {
        Coeff::sqrt_of(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn is_zero(&self) -> bool {
        self.rat.is_zero() && self.irr.is_empty()
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        if self.irr.is_empty() {
            Some(&self.rat)
        } else {
            None
        }
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        let mut out = self.clone();
        out.rat += &other.rat;
        for (rad, s) in &other.irr {
            let entry = out
                .irr
                .entry(rad.clone())
                .or_insert_with(BigRational::zero);
            *entry += s;
        }
        out.irr.retain(|_, s| !s.is_zero());
        out
    }

    pub fn neg(&self) -> Coeff {
        let mut out = self.clone();
        out.rat = -out.rat;
        for s in out.irr.values_mut() {
            *s = -s.clone();
        }
        out
    }

    pub fn scaled(&self, f: &BigRational) -> Coeff {
        if f.is_zero() {
            return Coeff::zero();
        }
        let mut out = self.clone();
        out.rat *= f;
        for s in out.irr.values_mut() {
            *s *= f;
        }
        out
    }

    pub fn scaled_int(&self, f: i64) -> Coeff {
        self.scaled(&BigRational::from_integer(BigInt::from(f)))
    }

    pub fn eval_f64(&self) -> f64 {
        let mut v = rational_to_f64(&self.rat);
        for (rad, s) in &self.irr {
            v += rational_to_f64(s) * rad.to_f64().unwrap_or(f64::NAN).sqrt();
        }
        v
    }

    /// Magnitude upper estimate (used only for sampled zero thresholds).
    pub fn abs_f64(&self) -> f64 {
        let mut v = rational_to_f64(&self.rat).abs();
        for (rad, s) in &self.irr {
            v += rational_to_f64(s).abs() * rad.to_f64().unwrap_or(f64::NAN).sqrt();
        }
        v
    }

    /// Fixed-point mantissa of the coefficient value.
    pub fn eval_fx(&self, ctx: &FxCtx) -> BigInt {
        let mut m = ctx.from_rational(&self.rat);
        for (rad, s) in &self.irr {
            let root = ctx.sqrt_ratio(rad, &BigUint::one());
            m += ctx.mul(&ctx.from_rational(s), &root);
        }
        m
    }
}

/// Split `n = square^2 * free` with `free` square-free (trial division by
/// small primes, then a perfect-square check on the remainder).
fn split_square(n: &BigUint) -> (BigUint, BigUint) {
    let mut square = BigUint::one();
    let mut rem = n.clone();
    let mut p = 2u64;
    while p <= 1000 {
        let pp = BigUint::from(p * p);
        while (&rem % &pp).is_zero() {
            rem /= &pp;
            square *= BigUint::from(p);
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let root = rem.sqrt();
    if &root * &root == rem {
        square *= &root;
        rem = BigUint::one();
    }
    (square, rem)
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    // correctly-rounded enough for reporting: top-53-bit division
    let num = r.numer();
    let den = r.denom();
    if num.is_zero() {
        return 0.0;
    }
    let nb = num.magnitude().bits() as i64;
    let db = den.magnitude().bits() as i64;
    let shift = 64 - (nb - db); // scale numerator so quotient has ~64 bits
    let (scaled_num, back) = if shift >= 0 {
        (num.magnitude() << shift as u64, shift)
    } else {
        (num.magnitude().clone(), 0)
    };
    let q = if back == 0 && shift < 0 {
        // |num/den| >= 2^64: take the quotient directly
        return (num / den).to_f64().unwrap_or(f64::NAN) * 1.0;
    } else {
        scaled_num / den.magnitude()
    };
    let v = q.to_f64().unwrap_or(f64::NAN) * f64::powi(2.0, -(back as i32));
    if num.is_negative() {
        -v
    } else {
        v
    }
}

// ---------------------------------------------------------------------------
// Coordinate series
// ---------------------------------------------------------------------------

/// Sparse polynomial coordinate: degree -> coefficient.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PolyCoord {
    pub terms: BTreeMap<u32, Coeff>,
}

impl PolyCoord {
    fn new() -> Self {
        PolyCoord {
            terms: BTreeMap::new(),
        }
    }

    fn insert(&mut self, deg: u32, c: Coeff) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(deg).or_insert_with(Coeff::zero);
        *entry = entry.add(&c);
        if entry.is_zero() {
            self.terms.remove(&deg);
        }
    }

    fn derivative(&self) -> PolyCoord {
        let mut out = PolyCoord::new();
        for (&deg, c) in &self.terms {
            if deg == 0 {
                continue;
            }
            out.insert(deg - 1, c.scaled_int(deg as i64));
        }
        out
    }

    fn eval_f64(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(&deg, c)| c.eval_f64() * t.powi(deg as i32))
            .sum()
    }
}

/// Trigonometric coordinate `(2 pi)^p (c0 + sum_nu A cos(2 pi nu t) + B sin(2 pi nu t))`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct TrigCoord {
    pub pi_pow: u32,
    pub constant: Coeff,
    /// frequency -> (cosine coefficient, sine coefficient)
    pub terms: BTreeMap<BigRational, (Coeff, Coeff)>,
}

impl TrigCoord {
    fn new() -> Self {
        TrigCoord {
            pi_pow: 0,
            constant: Coeff::zero(),
            terms: BTreeMap::new(),
        }
    }

    fn insert(&mut self, freq: BigRational, cos_c: Coeff, sin_c: Coeff) {
        assert!(freq.is_positive(), "trig frequency must be positive");
        let entry = self
            .terms
            .entry(freq)
            .or_insert_with(|| (Coeff::zero(), Coeff::zero()));
        entry.0 = entry.0.add(&cos_c);
        entry.1 = entry.1.add(&sin_c);
    }

    fn prune(&mut self) {
        self.terms.retain(|_, (a, b)| !a.is_zero() || !b.is_zero());
    }

    /// d/dt: `[A cos + B sin]' = 2 pi nu [B cos - A sin]`.
    fn derivative(&self) -> TrigCoord {
        let mut out = TrigCoord::new();
        out.pi_pow = self.pi_pow + 1;
        for (freq, (a, b)) in &self.terms {
            let new_cos = b.scaled(freq);
            let new_sin = a.scaled(freq).neg();
            out.insert(freq.clone(), new_cos, new_sin);
        }
        out.prune();
        out
    }

    fn eval_f64(&self, t: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let mut v = self.constant.eval_f64();
        for (freq, (a, b)) in &self.terms {
            let ang = tau * rational_to_f64(freq) * t;
            v += a.eval_f64() * ang.cos() + b.eval_f64() * ang.sin();
        }
        v * tau.powi(self.pi_pow as i32)
    }

    fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.terms.values().all(|(a, b)| a.is_zero() && b.is_zero())
    }

    fn closed(&self) -> bool {
        self.terms.keys().all(|f| f.is_integer())
    }

    /// Upper estimate of `sup_t` of the absolute value.
    fn magnitude_bound(&self) -> f64 {
        let tau = std::f64::consts::TAU;
        let mut v = self.constant.abs_f64();
        for (a, b) in self.terms.values() {
            v += a.abs_f64() + b.abs_f64();
        }
        v * tau.powi(self.pi_pow as i32)
    }
}

/// Polynomial in the first curve parameter (entries of composed post-maps).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ParamPoly {
    pub terms: Vec<(u32, BigRational)>,
}

impl ParamPoly {
    pub(crate) fn constant(v: i64) -> Self {
        ParamPoly {
            terms: vec![(0, BigRational::from_integer(BigInt::from(v)))],
        }
    }

    pub(crate) fn eval_f64(&self, x: &[f64]) -> f64 {
        let x0 = x.first().copied().unwrap_or(0.0);
        self.terms
            .iter()
            .map(|(e, c)| rational_to_f64(c) * x0.powi(*e as i32))
            .sum()
    }

    pub(crate) fn eval_exact(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut p = BigRational::one();
            for _ in 0..*e {
                p *= x;
            }
            acc += c * p;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum FamilyKind {
    Poly(Vec<PolyCoord>),
    Trig(Vec<TrigCoord>),
    /// `phi_i(x,t) = sum_k base_k(t) * post[k][i](x)`
    Composed {
        base: Vec<TrigCoord>,
        post: Vec<Vec<ParamPoly>>,
    },
}

// ---------------------------------------------------------------------------
// Pairing series
// ---------------------------------------------------------------------------

/// Coefficient form of `t -> <h, d^j/dt^j phi(x, t)>`.
#[derive(Clone, Debug, PartialEq)]
pub enum PairingForm {
    /// `sum c t^deg`
    Poly { terms: Vec<(u32, Coeff)> },
    /// `(2 pi)^p (c0 + sum A cos(2 pi nu t) + B sin(2 pi nu t))`, exact coefficients
    Trig {
        pi_pow: u32,
        constant: Coeff,
        terms: Vec<(BigRational, Coeff, Coeff)>,
    },
    /// same shape, numeric coefficients (parameter-dependent composed kind)
    TrigNumeric {
        pi_pow: u32,
        constant: f64,
        terms: Vec<(BigRational, f64, f64)>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingSeries {
    pub form: PairingForm,
    /// true iff the function vanishes identically in `t`
    pub zero: bool,
    /// true iff `zero` was decided by sampling rather than exact algebra
    pub numerical: bool,
}

impl PairingSeries {
    pub fn eval_f64(&self, t: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        match &self.form {
            PairingForm::Poly { terms } => terms
                .iter()
                .map(|(deg, c)| c.eval_f64() * t.powi(*deg as i32))
                .sum(),
            PairingForm::Trig {
                pi_pow,
                constant,
                terms,
            } => {
                let mut v = constant.eval_f64();
                for (freq, a, b) in terms {
                    let ang = tau * rational_to_f64(freq) * t;
                    v += a.eval_f64() * ang.cos() + b.eval_f64() * ang.sin();
                }
                v * tau.powi(*pi_pow as i32)
            }
            PairingForm::TrigNumeric {
                pi_pow,
                constant,
                terms,
            } => {
                let mut v = *constant;
                for (freq, a, b) in terms {
                    let ang = tau * rational_to_f64(freq) * t;
                    v += a * ang.cos() + b * ang.sin();
                }
                v * tau.powi(*pi_pow as i32)
            }
        }
    }

    /// Upper estimate of `sup_{t in [0,1]}` of the absolute value.
    pub fn magnitude_bound(&self) -> f64 {
        let tau = std::f64::consts::TAU;
        match &self.form {
            PairingForm::Poly { terms } => terms.iter().map(|(_, c)| c.abs_f64()).sum(),
            PairingForm::Trig {
                pi_pow,
                constant,
                terms,
            } => {
                let s: f64 = constant.abs_f64()
                    + terms
                        .iter()
                        .map(|(_, a, b)| a.abs_f64() + b.abs_f64())
                        .sum::<f64>();
                s * tau.powi(*pi_pow as i32)
            }
            PairingForm::TrigNumeric {
                pi_pow,
                constant,
                terms,
            } => {
                let s: f64 = constant.abs()
                    + terms.iter().map(|(_, a, b)| a.abs() + b.abs()).sum::<f64>();
                s * tau.powi(*pi_pow as i32)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Order reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderEstimate {
    Finite(u32),
    AtLeast(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderWitness {
    /// frequency vector whose pairing vanishes identically
    pub h: Vec<i64>,
    /// parameter point at which it vanishes
    pub x: Vec<f64>,
    /// derivative order it kills
    pub j: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderReport {
    pub order: OrderEstimate,
    pub witness: Option<OrderWitness>,
    /// some zero decision relied on sampling
    pub numerical: bool,
    pub h_box: u32,
    /// present when enlarging the frequency box by one changes the estimate
    pub next_box: Option<(u32, OrderEstimate)>,
}

// ---------------------------------------------------------------------------
// The family type
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct CurveFamily {
    name: String,
    dim: usize,
    param_dim: usize,
    pub(crate) kind: FamilyKind,
}

impl CurveFamily {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// 1-periodic in `t`?
    pub fn is_closed(&self) -> bool {
        match &self.kind {
            FamilyKind::Poly(coords) => coords
                .iter()
                .all(|c| c.terms.keys().all(|&deg| deg == 0)),
            FamilyKind::Trig(coords) => coords.iter().all(|c| c.closed()),
            FamilyKind::Composed { base, .. } => base.iter().all(|c| c.closed()),
        }
    }

    // -- built-in families -------------------------------------------------

    /// `(sin 2 pi t, cos 2 pi t)`
    pub fn circle() -> Self {
        let mut c1 = TrigCoord::new();
        c1.insert(BigRational::one(), Coeff::zero(), Coeff::one());
        let mut c2 = TrigCoord::new();
        c2.insert(BigRational::one(), Coeff::one(), Coeff::zero());
        CurveFamily {
            name: "circle".into(),
            dim: 2,
            param_dim: 0,
            kind: FamilyKind::Trig(vec![c1, c2]),
        }
    }

    /// `(t^kappa, t^{kappa+1})`, `kappa >= 1`
    pub fn monomial(kappa: u32) -> Self {
        assert!(kappa >= 1);
        let mut c1 = PolyCoord::new();
        c1.insert(kappa, Coeff::one());
        let mut c2 = PolyCoord::new();
        c2.insert(kappa + 1, Coeff::one());
        CurveFamily {
            name: format!("monomial:{kappa}"),
            dim: 2,
            param_dim: 0,
            kind: FamilyKind::Poly(vec![c1, c2]),
        }
    }

    /// `(t, alpha t)`
    pub fn line(alpha: Coeff) -> Self {
        let mut c1 = PolyCoord::new();
        c1.insert(1, Coeff::one());
        let mut c2 = PolyCoord::new();
        c2.insert(1, alpha);
        CurveFamily {
            name: "line".into(),
            dim: 2,
            param_dim: 0,
            kind: FamilyKind::Poly(vec![c1, c2]),
        }
    }

    /// Polynomial family with explicit coefficients: one inner vector per
    /// coordinate, each term `(degree, coefficient)`. Coefficients may carry
    /// square roots, which the config format cannot express.
    pub fn poly_from_coeffs(
        name: &str,
        coords: Vec<Vec<(u32, Coeff)>>,
    ) -> Result<Self, CurveError> {
        if coords.is_empty() {
            return Err(CurveError::Config {
                line: 0,
                msg: "need at least one coordinate".into(),
            });
        }
        let dim = coords.len();
        let mut built = Vec::with_capacity(dim);
        for terms in coords {
            let mut c = PolyCoord::new();
            for (deg, co) in terms {
                c.insert(deg, co);
            }
            built.push(c);
        }
        Ok(CurveFamily {
            name: name.into(),
            dim,
            param_dim: 0,
            kind: FamilyKind::Poly(built),
        })
    }

    /// `(sin(pi t / 2), alpha sin(pi t / 2))` (frequency 1/4; open curve)
    pub fn sine_line(alpha: Coeff) -> Self {
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        let mut c1 = TrigCoord::new();
        c1.insert(quarter.clone(), Coeff::zero(), Coeff::one());
        let mut c2 = TrigCoord::new();
        c2.insert(quarter, Coeff::zero(), alpha);
        CurveFamily {
            name: "sine-line".into(),
            dim: 2,
            param_dim: 0,
            kind: FamilyKind::Trig(vec![c1, c2]),
        }
    }

    /// `(cos 2 pi t, sin 2 pi t) * psi(x)` with
    /// `psi(x) = [[1 + x/2, x/4], [0, 1]]` (invertible for all x in [0,1]).
    pub fn ellipse() -> Self {
        let mut b1 = TrigCoord::new();
        b1.insert(BigRational::one(), Coeff::one(), Coeff::zero()); // cos
        let mut b2 = TrigCoord::new();
        b2.insert(BigRational::one(), Coeff::zero(), Coeff::one()); // sin
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
        let psi_11 = ParamPoly {
            terms: vec![(0, BigRational::one()), (1, half)],
        };
        let psi_12 = ParamPoly {
            terms: vec![(1, quarter)],
        };
        let psi_21 = ParamPoly { terms: vec![] };
        let psi_22 = ParamPoly::constant(1);
        CurveFamily {
            name: "ellipse".into(),
            dim: 2,
            param_dim: 1,
            kind: FamilyKind::Composed {
                base: vec![b1, b2],
                post: vec![vec![psi_11, psi_12], vec![psi_21, psi_22]],
            },
        }
    }

    // -- evaluation --------------------------------------------------------

    fn check_x(&self, x: &[f64]) -> Result<(), CurveError> {
        if x.len() != self.param_dim {
            return Err(CurveError::ParamLen {
                got: x.len(),
                want: self.param_dim,
            });
        }
        Ok(())
    }

    fn check_h(&self, h: &[i64]) -> Result<(), CurveError> {
        if h.len() != self.dim {
            return Err(CurveError::FreqLen {
                got: h.len(),
                want: self.dim,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>, CurveError> {
        self.derivative(x, t, 0)
    }

    /// `j`-th `t`-derivative at `(x, t)`; exact series differentiation for
    /// polynomial/trig kinds, truncated power-series (jet) arithmetic for the
    /// composed kind.
    pub fn derivative(&self, x: &[f64], t: f64, j: u32) -> Result<Vec<f64>, CurveError> {
        self.check_x(x)?;
        if j > MAX_DERIVATIVE {
            return Err(CurveError::DerivativeOrder(j, MAX_DERIVATIVE));
        }
        match &self.kind {
            FamilyKind::Poly(coords) => Ok(coords
                .iter()
                .map(|c| {
                    let mut d = c.clone();
                    for _ in 0..j {
                        d = d.derivative();
                    }
                    d.eval_f64(t)
                })
                .collect()),
            FamilyKind::Trig(coords) => Ok(coords
                .iter()
                .map(|c| {
                    let mut d = c.clone();
                    for _ in 0..j {
                        d = d.derivative();
                    }
                    d.eval_f64(t)
                })
                .collect()),
            FamilyKind::Composed { base, post } => {
                let base_jets: Vec<jet::Jet> =
                    base.iter().map(|c| jet::trig_jet(c, t, j as usize)).collect();
                let mut out = vec![0.0; self.dim];
                for (i, slot) in out.iter_mut().enumerate() {
                    let mut jet_acc = jet::Jet::zeros(j as usize + 1);
                    for (k, bj) in base_jets.iter().enumerate() {
                        jet_acc.add_scaled(bj, post[k][i].eval_f64(x));
                    }
                    *slot = jet_acc.derivative_value(j as usize);
                }
                Ok(out)
            }
        }
    }

    // -- pairings ----------------------------------------------------------

    /// Coefficient form of `t -> <h, d^j phi(x, t)>` with a zero flag.
    pub fn pairing_series(
        &self,
        x: &[f64],
        h: &[i64],
        j: u32,
    ) -> Result<PairingSeries, CurveError> {
        self.check_x(x)?;
        self.check_h(h)?;
        if j > MAX_DERIVATIVE {
            return Err(CurveError::DerivativeOrder(j, MAX_DERIVATIVE));
        }
        match &self.kind {
            FamilyKind::Poly(coords) => {
                let mut acc = PolyCoord::new();
                for (i, c) in coords.iter().enumerate() {
                    if h[i] == 0 {
                        continue;
                    }
                    let mut d = c.clone();
                    for _ in 0..j {
                        d = d.derivative();
                    }
                    for (&deg, coeff) in &d.terms {
                        acc.insert(deg, coeff.scaled_int(h[i]));
                    }
                }
                let zero = acc.terms.is_empty();
                Ok(PairingSeries {
                    form: PairingForm::Poly {
                        terms: acc.terms.into_iter().collect(),
                    },
                    zero,
                    numerical: false,
                })
            }
            FamilyKind::Trig(coords) => {
                let mut acc = TrigCoord::new();
                acc.pi_pow = 0;
                let mut first = true;
                for (i, c) in coords.iter().enumerate() {
                    let mut d = c.clone();
                    for _ in 0..j {
                        d = d.derivative();
                    }
                    if first {
                        acc.pi_pow = d.pi_pow;
                        first = false;
                    }
                    debug_assert_eq!(acc.pi_pow, d.pi_pow);
                    if h[i] == 0 {
                        continue;
                    }
                    acc.constant = acc.constant.add(&d.constant.scaled_int(h[i]));
                    for (freq, (a, b)) in &d.terms {
                        acc.insert(freq.clone(), a.scaled_int(h[i]), b.scaled_int(h[i]));
                    }
                }
                acc.prune();
                let zero = acc.is_zero();
                Ok(PairingSeries {
                    form: PairingForm::Trig {
                        pi_pow: acc.pi_pow,
                        constant: acc.constant,
                        terms: acc
                            .terms
                            .into_iter()
                            .map(|(f, (a, b))| (f, a, b))
                            .collect(),
                    },
                    zero,
                    numerical: false,
                })
            }
            FamilyKind::Composed { base, post } => {
                // weights w_k = sum_i post[k][i](x) h_i
                let w: Vec<f64> = (0..base.len())
                    .map(|k| {
                        (0..self.dim)
                            .map(|i| post[k][i].eval_f64(x) * h[i] as f64)
                            .sum()
                    })
                    .collect();
                let mut derived: Vec<TrigCoord> = Vec::with_capacity(base.len());
                for c in base {
                    let mut d = c.clone();
                    for _ in 0..j {
                        d = d.derivative();
                    }
                    derived.push(d);
                }
                let pi_pow = derived.first().map(|d| d.pi_pow).unwrap_or(0);
                let mut constant = 0.0;
                let mut terms: BTreeMap<BigRational, (f64, f64)> = BTreeMap::new();
                for (k, d) in derived.iter().enumerate() {
                    constant += d.constant.eval_f64() * w[k];
                    for (freq, (a, b)) in &d.terms {
                        let e = terms.entry(freq.clone()).or_insert((0.0, 0.0));
                        e.0 += a.eval_f64() * w[k];
                        e.1 += b.eval_f64() * w[k];
                    }
                }
                // scale of the summands, for the sampled zero threshold
                let scale: f64 = derived
                    .iter()
                    .zip(&w)
                    .map(|(d, wk)| d.magnitude_bound() * wk.abs())
                    .sum::<f64>()
                    .max(f64::MIN_POSITIVE);
                let series = PairingSeries {
                    form: PairingForm::TrigNumeric {
                        pi_pow,
                        constant,
                        terms: terms.into_iter().map(|(f, (a, b))| (f, a, b)).collect(),
                    },
                    zero: false,
                    numerical: true,
                };
                let mut max_abs: f64 = 0.0;
                for i in 0..SAMPLED_ZERO_POINTS {
                    let t = 0.5
                        * (1.0
                            + (std::f64::consts::PI * i as f64
                                / (SAMPLED_ZERO_POINTS - 1) as f64)
                                .cos());
                    max_abs = max_abs.max(series.eval_f64(t).abs());
                }
                let zero = max_abs <= SAMPLED_ZERO_THRESHOLD * scale;
                Ok(PairingSeries { zero, ..series })
            }
        }
    }

    // -- non-degeneracy order ----------------------------------------------

    /// Largest `j <= j_max` such that no frequency in the box of radius
    /// `h_box` kills any derivative order up to `j` at any grid parameter.
    /// Also scanned at `h_box + 1`; a disagreement is surfaced in the report.
    pub fn rnd_order(
        &self,
        h_box: u32,
        j_max: u32,
        x_grid_per_axis: usize,
    ) -> Result<OrderReport, CurveError> {
        if self.param_dim > 3 {
            return Err(CurveError::ParamGrid(self.param_dim));
        }
        let grid = self.param_grid(x_grid_per_axis);
        let main = self.order_scan(h_box, j_max, &grid)?;
        let wider = self.order_scan(h_box + 1, j_max, &grid)?;
        let next_box = if wider.0 != main.0 {
            Some((h_box + 1, wider.0))
        } else {
            None
        };
        Ok(OrderReport {
            order: main.0,
            witness: main.1,
            numerical: main.2 || wider.2,
            h_box,
            next_box,
        })
    }

    fn param_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        if self.param_dim == 0 {
            return vec![vec![]];
        }
        let per_axis = per_axis.max(2);
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| i as f64 / (per_axis - 1) as f64)
            .collect();
        let mut grid = vec![vec![]];
        for _ in 0..self.param_dim {
            let mut next = Vec::with_capacity(grid.len() * per_axis);
            for g in &grid {
                for &v in &axis {
                    let mut g2 = g.clone();
                    g2.push(v);
                    next.push(g2);
                }
            }
            grid = next;
        }
        grid
    }

    fn order_scan(
        &self,
        h_box: u32,
        j_max: u32,
        grid: &[Vec<f64>],
    ) -> Result<(OrderEstimate, Option<OrderWitness>, bool), CurveError> {
        let mut numerical = false;
        for j in 1..=j_max {
            for x in grid {
                for h in canonical_box(self.dim, h_box) {
                    let p = self.pairing_series(x, &h, j)?;
                    numerical |= p.numerical;
                    if p.zero {
                        return Ok((
                            OrderEstimate::Finite(j - 1),
                            Some(OrderWitness {
                                h,
                                x: x.clone(),
                                j,
                            }),
                            numerical,
                        ));
                    }
                }
            }
        }
        Ok((OrderEstimate::AtLeast(j_max), None, numerical))
    }

    // -- config ------------------------------------------------------------

    /// Parse the line-oriented curve config format:
    ///
    /// ```text
    /// kind = poly            # or: trig
    /// d = 2
    /// m = 0
    /// row = 1, 2, 1, 1       # coord, degree, numer, denom
    /// row = 2, sin:1/4, 3, 5 # trig rows carry sin:freq or cos:freq
    /// ```
    pub fn from_config_str(text: &str) -> Result<Self, CurveError> {
        let mut kind_tag: Option<String> = None;
        let mut d: Option<usize> = None;
        let mut m: Option<usize> = None;
        let mut rows: Vec<(usize, usize, String, BigRational)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CurveError::Config {
                line: line_no,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "kind" => kind_tag = Some(value.to_string()),
                "d" => {
                    d = Some(value.parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad dimension `{value}`"),
                    })?)
                }
                "m" => {
                    m = Some(value.parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad parameter count `{value}`"),
                    })?)
                }
                "row" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 4 {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: "row needs `coord, term, numer, denom`".into(),
                        });
                    }
                    let coord: usize = parts[0].parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad coordinate `{}`", parts[0]),
                    })?;
                    if coord == 0 {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: "coordinates are 1-based".into(),
                        });
                    }
                    let numer: BigInt = parts[2].parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad numerator `{}`", parts[2]),
                    })?;
                    let denom: BigInt = parts[3].parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad denominator `{}`", parts[3]),
                    })?;
                    if denom.is_zero() {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: "zero denominator".into(),
                        });
                    }
                    rows.push((
                        line_no,
                        coord,
                        parts[1].to_string(),
                        BigRational::new(numer, denom),
                    ));
                }
                other => {
                    return Err(CurveError::Config {
                        line: line_no,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        let kind_tag = kind_tag.ok_or_else(|| CurveError::Config {
            line: 0,
            msg: "missing `kind`".into(),
        })?;
        let d = d.ok_or_else(|| CurveError::Config {
            line: 0,
            msg: "missing `d`".into(),
        })?;
        let m = m.unwrap_or(0);
        if d == 0 {
            return Err(CurveError::Config {
                line: 0,
                msg: "dimension must be positive".into(),
            });
        }
        if m != 0 {
            return Err(CurveError::Config {
                line: 0,
                msg: "config rows describe parameter-free families (m = 0)".into(),
            });
        }
        match kind_tag.as_str() {
            "poly" => {
                let mut coords = vec![PolyCoord::new(); d];
                for (line_no, coord, term, c) in rows {
                    if coord > d {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: format!("coordinate {coord} exceeds d = {d}"),
                        });
                    }
                    let deg: u32 = term.parse().map_err(|_| CurveError::Config {
                        line: line_no,
                        msg: format!("bad degree `{term}`"),
                    })?;
                    coords[coord - 1].insert(deg, Coeff::from_rational(c));
                }
                Ok(CurveFamily {
                    name: "config:poly".into(),
                    dim: d,
                    param_dim: 0,
                    kind: FamilyKind::Poly(coords),
                })
            }
            "trig" => {
                let mut coords = vec![TrigCoord::new(); d];
                for (line_no, coord, term, c) in rows {
                    if coord > d {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: format!("coordinate {coord} exceeds d = {d}"),
                        });
                    }
                    let (func, freq_text) =
                        term.split_once(':').ok_or_else(|| CurveError::Config {
                            line: line_no,
                            msg: format!("trig term `{term}` needs `sin:freq` or `cos:freq`"),
                        })?;
                    let freq = parse_rational(freq_text).ok_or_else(|| CurveError::Config {
                        line: line_no,
                        msg: format!("bad frequency `{freq_text}`"),
                    })?;
                    if !freq.is_positive() {
                        return Err(CurveError::Config {
                            line: line_no,
                            msg: "frequency must be positive".into(),
                        });
                    }
                    let coeff = Coeff::from_rational(c);
                    match func {
                        "sin" => coords[coord - 1].insert(freq, Coeff::zero(), coeff),
                        "cos" => coords[coord - 1].insert(freq, coeff, Coeff::zero()),
                        other => {
                            return Err(CurveError::Config {
                                line: line_no,
                                msg: format!("unknown trig function `{other}`"),
                            })
                        }
                    }
                }
                for c in &mut coords {
                    c.prune();
                }
                Ok(CurveFamily {
                    name: "config:trig".into(),
                    dim: d,
                    param_dim: 0,
                    kind: FamilyKind::Trig(coords),
                })
            }
            other => Err(CurveError::Config {
                line: 0,
                msg: format!("unknown kind `{other}`"),
            }),
        }
    }

    /// Inverse of [`from_config_str`] for rational polynomial/trig families;
    /// rationals round-trip bit-exactly.
    pub fn to_config_string(&self) -> Result<String, CurveError> {
        let mut out = String::new();
        match &self.kind {
            FamilyKind::Poly(coords) => {
                writeln!(out, "kind = poly").unwrap();
                writeln!(out, "d = {}", self.dim).unwrap();
                writeln!(out, "m = 0").unwrap();
                for (i, c) in coords.iter().enumerate() {
                    for (deg, coeff) in &c.terms {
                        let r = coeff.as_rational().ok_or(CurveError::ConfigUnsupported)?;
                        writeln!(out, "row = {}, {}, {}, {}", i + 1, deg, r.numer(), r.denom())
                            .unwrap();
                    }
                }
            }
            FamilyKind::Trig(coords) => {
                writeln!(out, "kind = trig").unwrap();
                writeln!(out, "d = {}", self.dim).unwrap();
                writeln!(out, "m = 0").unwrap();
                for (i, c) in coords.iter().enumerate() {
                    if !c.constant.is_zero() || c.pi_pow != 0 {
                        return Err(CurveError::ConfigUnsupported);
                    }
                    for (freq, (a, b)) in &c.terms {
                        for (tag, coeff) in [("cos", a), ("sin", b)] {
                            if coeff.is_zero() {
                                continue;
                            }
                            let r = coeff.as_rational().ok_or(CurveError::ConfigUnsupported)?;
                            let freq_text = if freq.is_integer() {
                                format!("{}", freq.numer())
                            } else {
                                format!("{}/{}", freq.numer(), freq.denom())
                            };
                            writeln!(
                                out,
                                "row = {}, {}:{}, {}, {}",
                                i + 1,
                                tag,
                                freq_text,
                                r.numer(),
                                r.denom()
                            )
                            .unwrap();
                        }
                    }
                }
            }
            FamilyKind::Composed { .. } => return Err(CurveError::ConfigUnsupported),
        }
        Ok(out)
    }
}

fn parse_rational(text: &str) -> Option<BigRational> {
    match text.split_once('/') {
        Some((p, q)) => {
            let num: BigInt = p.trim().parse().ok()?;
            let den: BigInt = q.trim().parse().ok()?;
            if den.is_zero() {
                None
            } else {
                Some(BigRational::new(num, den))
            }
        }
        None => {
            let num: BigInt = text.trim().parse().ok()?;
            Some(BigRational::from_integer(num))
        }
    }
}

/// All nonzero `h` in the sup-ball of radius `r` whose first nonzero entry is
/// positive (one representative per `{h, -h}` pair), in lexicographic order.
pub fn canonical_box(dim: usize, r: u32) -> impl Iterator<Item = Vec<i64>> {
    let r = r as i64;
    let mut cursor = vec![-r; dim];
    let mut done = dim == 0;
    std::iter::from_fn(move || {
        loop {
            if done {
                return None;
            }
            let h = cursor.clone();
            // advance
            let mut i = dim;
            loop {
                if i == 0 {
                    done = true;
                    break;
                }
                i -= 1;
                cursor[i] += 1;
                if cursor[i] <= r {
                    break;
                }
                cursor[i] = -r;
            }
            let first_nonzero = h.iter().find(|&&v| v != 0);
            if let Some(&v) = first_nonzero {
                if v > 0 {
                    return Some(h);
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Truncated power series (jets) for the composed kind
// ---------------------------------------------------------------------------

pub(crate) mod jet {
    use super::TrigCoord;

    /// Taylor coefficients `c[k] = f^{(k)}(t0) / k!`.
    #[derive(Clone, Debug)]
    pub struct Jet {
        pub c: Vec<f64>,
    }

    impl Jet {
        pub fn zeros(len: usize) -> Self {
            Jet { c: vec![0.0; len] }
        }

        pub fn add_scaled(&mut self, other: &Jet, s: f64) {
            for (a, b) in self.c.iter_mut().zip(&other.c) {
                *a += b * s;
            }
        }

        /// `f^{(k)}(t0) = k! * c[k]`
        pub fn derivative_value(&self, k: usize) -> f64 {
            let mut fact = 1.0f64;
            for i in 1..=k {
                fact *= i as f64;
            }
            self.c[k] * fact
        }
    }

    /// (sin u, cos u) for a jet `u`, by the standard recurrence
    /// `k s_k = sum_{j=1..k} j u_j c_{k-j}`, `k c_k = -sum_{j=1..k} j u_j s_{k-j}`.
    pub fn sincos(u: &Jet) -> (Jet, Jet) {
        let n = u.c.len();
        let mut s = Jet::zeros(n);
        let mut c = Jet::zeros(n);
        s.c[0] = u.c[0].sin();
        c.c[0] = u.c[0].cos();
        for k in 1..n {
            let mut sk = 0.0;
            let mut ck = 0.0;
            for j in 1..=k {
                sk += j as f64 * u.c[j] * c.c[k - j];
                ck -= j as f64 * u.c[j] * s.c[k - j];
            }
            s.c[k] = sk / k as f64;
            c.c[k] = ck / k as f64;
        }
        (s, c)
    }

    /// Jet of a trig coordinate at `t0`, truncated at order `order`.
    pub fn trig_jet(coord: &TrigCoord, t0: f64, order: usize) -> Jet {
        let tau = std::f64::consts::TAU;
        let n = order + 1;
        let mut acc = Jet::zeros(n);
        acc.c[0] = coord.constant.eval_f64();
        for (freq, (a, b)) in &coord.terms {
            let f = super::rational_to_f64(freq);
            let mut u = Jet::zeros(n);
            u.c[0] = tau * f * t0;
            if n > 1 {
                u.c[1] = tau * f;
            }
            let (s, c) = sincos(&u);
            acc.add_scaled(&c, a.eval_f64());
            acc.add_scaled(&s, b.eval_f64());
        }
        let scale = tau.powi(coord.pi_pow as i32);
        for v in acc.c.iter_mut() {
            *v *= scale;
        }
        acc
    }
}
