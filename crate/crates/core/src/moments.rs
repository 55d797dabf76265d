//! Fourth moments of the sample exponential sum over a rotation offset,
//! their expansion into one-dimensional oscillatory integrals indexed by
//! 4-tuples of sample indices, and the lattice geometry of the near-singular
//! tuples that dominate the expansion.

use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::bigfix::FxCtx;
use crate::curvekit::{CurveError, CurveFamily, PairingForm};
use crate::equidist::{pairwise_complex, sample_measure, weyl_sum_abs};
use crate::phase::{unit_character, working_bits, Dilation, PhaseError, PhaseEvaluator};

/// Hard floor on quadrature nodes; also the minimum term count accepted from
/// the expansion route so every report carries comparable resolution.
pub const MIN_NODES: usize = 4096;

/// Largest sample count accepted by the singular-tuple counter.
pub const SINGULAR_N_CAP: u64 = 256;

#[derive(Debug, Error)]
pub enum MomentsError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("alternating pairings need a closed (1-periodic) family")]
    OpenFamily,
    #[error("tuple entries must lie in 1..=n")]
    BadTuple,
    #[error("sample count must be positive")]
    BadSampleCount,
    #[error("quadrature needs {required} nodes, budget is {budget}")]
    NodeBudget { required: u64, budget: u64 },
    #[error("expansion route needs a single integer-frequency pairing")]
    NotSingleFrequency,
    #[error("expansion route needs n^4 >= {MIN_NODES} terms (n >= 8)")]
    TooFewTerms,
    #[error("no frequency up to {0} carries energy; the pairing is degenerate")]
    Degenerate(u32),
    #[error("search bound must be positive")]
    BadSearchBound,
    #[error("sample count {0} above the cap {SINGULAR_N_CAP}")]
    SingularCap(u64),
    #[error("translate denominator j0 must be positive")]
    BadJ0,
    #[error("proximity radius must be positive")]
    BadRadius,
}

// ---------------------------------------------------------------------------
// Alternating pairings
// ---------------------------------------------------------------------------

/// `<h, phi(x, k1/n + w) - phi(x, k2/n + w) + phi(x, k3/n + w) - phi(x, k4/n + w)>`
/// — the phase function of one expansion term. Requires a closed family so
/// the offset `w` acts as a genuine rotation.
pub fn f_alternating(
    family: &CurveFamily,
    x: &[f64],
    n: usize,
    k: &[usize; 4],
    omega: f64,
    h: &[i64],
) -> Result<f64, MomentsError> {
    if n == 0 {
        return Err(MomentsError::BadSampleCount);
    }
    if !family.is_closed() {
        return Err(MomentsError::OpenFamily);
    }
    if k.iter().any(|&ki| ki == 0 || ki > n) {
        return Err(MomentsError::BadTuple);
    }
    let ps = family.pairing_series(x, h, 0)?;
    // Group as (u1 + u3) - (u2 + u4): commutativity of f64 addition then makes
    // the value exactly zero on tuples where the positive and negative pairs
    // coincide as multisets, instead of leaving a one-ulp residue.
    let u: Vec<f64> = k
        .iter()
        .map(|&ki| ps.eval_f64(ki as f64 / n as f64 + omega))
        .collect();
    Ok((u[0] + u[2]) - (u[1] + u[3]))
}

// ---------------------------------------------------------------------------
// Fourth moment
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentRoute {
    /// trapezoid quadrature when the node rule fits the budget, else expansion
    Auto,
    Trapezoid,
    Expansion,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub n: usize,
    /// magnitude of the dilation in bits
    pub rho_bits: u32,
    pub h: Vec<i64>,
    /// estimate of the mean of `|S_n|^4` over a full rotation period
    pub estimate: f64,
    /// quadrature nodes, or expansion terms (`n^4`)
    pub node_count: usize,
    /// node-doubling difference for quadrature; floating-point noise floor
    /// for the closed-form expansion
    pub quadrature_error_estimate: f64,
    pub route: MomentRoute,
}

/// Mean of `|S_n(h)|^4` over the rotation offset `w in [0,1)`, where
/// `S_n(h) = (1/n) sum_k e(<h, rho phi(x, k/n + w)>)`.
///
/// Two routes are available. The trapezoid route reduces phases exactly at
/// each node and needs `max(4096, 8 ceil(rho |h|_1 L))` nodes (`L` a sup
/// bound on the coordinate derivatives); it refuses with the required count
/// if the budget is too small. The expansion route writes the moment as
/// `(1/n^4) sum_k integral of e(rho f_k)` and evaluates each integral in
/// closed form through the order-zero Bessel function; it applies only to
/// single integer-frequency pairings but its cost does not grow with `rho`.
pub fn fourth_moment(
    family: &CurveFamily,
    x: &[f64],
    rho: &Dilation,
    n: usize,
    h: &[i64],
    node_budget: usize,
    route: MomentRoute,
) -> Result<MomentReport, MomentsError> {
    if n == 0 {
        return Err(MomentsError::BadSampleCount);
    }
    if !family.is_closed() {
        return Err(MomentsError::OpenFamily);
    }
    // validates x and h once
    family.pairing_series(x, h, 0)?;

    match route {
        MomentRoute::Trapezoid => {
            let required = trapezoid_nodes_required(family, x, rho, h)?;
            if required > node_budget as u64 {
                return Err(MomentsError::NodeBudget {
                    required,
                    budget: node_budget as u64,
                });
            }
            trapezoid_moment(family, x, rho, n, h, required as usize)
        }
        MomentRoute::Expansion => expansion_moment(family, x, rho, n, h),
        MomentRoute::Auto => {
            let required = trapezoid_nodes_required(family, x, rho, h)?;
            if required <= node_budget as u64 {
                trapezoid_moment(family, x, rho, n, h, required as usize)
            } else {
                match expansion_moment(family, x, rho, n, h) {
                    Ok(rep) => Ok(rep),
                    Err(MomentsError::NotSingleFrequency) | Err(MomentsError::TooFewTerms) => {
                        Err(MomentsError::NodeBudget {
                            required,
                            budget: node_budget as u64,
                        })
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// Node rule for resolving `|S_n|^4`: eight nodes per unit of total phase
/// variation, floored at [`MIN_NODES`] and rounded up to even so the
/// half-node error estimate reuses the even nodes.
fn trapezoid_nodes_required(
    family: &CurveFamily,
    x: &[f64],
    rho: &Dilation,
    h: &[i64],
) -> Result<u64, MomentsError> {
    let mut deriv_sup = 0.0f64;
    for i in 0..family.dim() {
        let mut e = vec![0i64; family.dim()];
        e[i] = 1;
        deriv_sup = deriv_sup.max(family.pairing_series(x, &e, 1)?.magnitude_bound());
    }
    let h_l1: f64 = h.iter().map(|v| v.abs() as f64).sum();
    let rho_f = rho.approx_f64().abs();
    let raw = 8.0 * (rho_f * h_l1 * deriv_sup).ceil();
    let req = if raw.is_finite() {
        raw.max(MIN_NODES as f64)
    } else {
        return Ok(u64::MAX);
    };
    if req >= u64::MAX as f64 {
        return Ok(u64::MAX);
    }
    let mut req = req as u64;
    if req % 2 == 1 {
        req += 1;
    }
    Ok(req)
}

fn trapezoid_moment(
    family: &CurveFamily,
    x: &[f64],
    rho: &Dilation,
    n: usize,
    h: &[i64],
    nodes: usize,
) -> Result<MomentReport, MomentsError> {
    debug_assert!(nodes >= MIN_NODES && nodes % 2 == 0);
    let mut full = 0.0f64;
    let mut half = 0.0f64;
    if let Some(mut walker) = TrigNodeWalker::try_new(family, x, rho, n, h, nodes as u64) {
        for r in 0..nodes {
            let v = abs_mean_character(&walker.next_phases()).powi(4);
            full += v;
            if r % 2 == 0 {
                half += v;
            }
        }
    } else {
        let den = BigInt::from(nodes as u64);
        for r in 0..nodes {
            let offset = BigRational::new(BigInt::from(r as u64), den.clone());
            let ev = PhaseEvaluator::with_offset(family, x, rho, n, offset)?;
            let cloud = sample_measure(&ev);
            let v = weyl_sum_abs(&cloud, h).powi(4);
            full += v;
            if r % 2 == 0 {
                half += v;
            }
        }
    }
    let full = full / nodes as f64;
    let half = half / (nodes / 2) as f64;
    Ok(MomentReport {
        n,
        rho_bits: rho.magnitude_bits(),
        h: h.to_vec(),
        estimate: full,
        node_count: nodes,
        quadrature_error_estimate: (full - half).abs(),
        route: MomentRoute::Trapezoid,
    })
}

/// `|(1/n) sum_k e(v_k)|` with the same deterministic pairwise reduction as
/// the full Weyl sum.
fn abs_mean_character(phases: &[f64]) -> f64 {
    let terms: Vec<(f64, f64)> = phases.iter().map(|&v| unit_character(v)).collect();
    let (re, im) = pairwise_complex(&terms);
    let n = phases.len() as f64;
    (re / n).hypot(im / n)
}

/// Nodes between exact resynchronizations of the recurrence in
/// [`TrigNodeWalker`]; the drift over one window stays below `~8 *
/// RENORM_EVERY` ulps of the working precision, far under the `f64` output
/// resolution.
const RENORM_EVERY: u64 = 1024;

enum RhoApply {
    Int(BigInt),
    Mantissa(BigInt),
}

impl RhoApply {
    fn apply(&self, ctx: &FxCtx, m: &BigInt) -> BigInt {
        match self {
            RhoApply::Int(q) => m * q,
            RhoApply::Mantissa(rm) => ctx.mul(rm, m),
        }
    }
}

struct FreqChannel {
    freq: BigRational,
    /// `e(freq / R)` as a fixed-point `(sin, cos)` pair
    step: (BigInt, BigInt),
    /// `e(freq r / R)` at the current node
    cur: (BigInt, BigInt),
    /// folded per-sample coefficients: the term value at sample `k` is
    /// `p[k] * cur.cos + q[k] * cur.sin`
    p: Vec<BigInt>,
    q: Vec<BigInt>,
}

/// Streams the reduced scalar phases `frac(rho <h, phi(x, k/n + r/R)>)`,
/// `k = 1..=n`, over the uniform node grid `r = 0..R`.
///
/// For an exact trig pairing `c0 + sum_nu (A cos(2 pi nu t) + B sin(2 pi nu
/// t))` the angle splits as `2 pi nu k/n + 2 pi nu r/R`; folding the
/// sample-side sines and cosines into per-sample tables leaves one
/// `(cos, sin)` pair per frequency that advances across nodes by a single
/// complex multiplication, so a node costs a few fixed-point multiplies per
/// sample instead of a fresh high-precision trig evaluation per coordinate.
struct TrigNodeWalker {
    ctx: FxCtx,
    rho: RhoApply,
    n: usize,
    nodes: u64,
    r: u64,
    constant: BigInt,
    channels: Vec<FreqChannel>,
}

impl TrigNodeWalker {
    /// `None` when the pairing is not an exact trig series (the caller then
    /// falls back to per-node phase evaluators).
    fn try_new(
        family: &CurveFamily,
        x: &[f64],
        rho: &Dilation,
        n: usize,
        h: &[i64],
        nodes: u64,
    ) -> Option<Self> {
        let ps = family.pairing_series(x, h, 0).ok()?;
        let PairingForm::Trig {
            pi_pow: 0,
            constant,
            terms,
        } = ps.form
        else {
            return None;
        };
        let ctx = FxCtx::new(working_bits(rho));
        let rho = match rho {
            Dilation::Exact(q) => RhoApply::Int(q.clone()),
            Dilation::Real(v) => RhoApply::Mantissa(ctx.from_rational(
                &BigRational::from_float(*v).unwrap_or_else(BigRational::zero),
            )),
            Dilation::IntTimesLog { factor, log_arg } => {
                RhoApply::Mantissa(ctx.ln_u64(*log_arg) * factor)
            }
        };
        let den_n = BigInt::from(n as u64);
        let den_r = BigInt::from(nodes);
        let channels = terms
            .iter()
            .filter(|(_, a, b)| !(a.is_zero() && b.is_zero()))
            .map(|(freq, a, b)| {
                let a_m = a.eval_fx(&ctx);
                let b_m = b.eval_fx(&ctx);
                let mut p = Vec::with_capacity(n);
                let mut q = Vec::with_capacity(n);
                for k in 1..=n {
                    let arg = freq * BigRational::new(BigInt::from(k as u64), den_n.clone());
                    let (s, c) = ctx.sincos2pi_rational(&arg);
                    p.push(ctx.mul(&a_m, &c) + ctx.mul(&b_m, &s));
                    q.push(ctx.mul(&b_m, &c) - ctx.mul(&a_m, &s));
                }
                let step = ctx
                    .sincos2pi_rational(&(freq * BigRational::new(BigInt::one(), den_r.clone())));
                FreqChannel {
                    freq: freq.clone(),
                    step,
                    cur: (BigInt::zero(), ctx.one()),
                    p,
                    q,
                }
            })
            .collect();
        Some(TrigNodeWalker {
            ctx,
            rho,
            n,
            nodes,
            r: 0,
            constant: constant.eval_fx(&ctx),
            channels,
        })
    }

    /// Phases of the current node, then advance to the next one.
    fn next_phases(&mut self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let mut m = self.constant.clone();
            for ch in &self.channels {
                m += self.ctx.mul(&ch.p[k], &ch.cur.1) + self.ctx.mul(&ch.q[k], &ch.cur.0);
            }
            out.push(self.ctx.frac_to_f64(&self.rho.apply(&self.ctx, &m)));
        }
        self.advance();
        out
    }

    fn advance(&mut self) {
        self.r += 1;
        if self.r % RENORM_EVERY == 0 {
            let den = BigInt::from(self.nodes);
            for ch in &mut self.channels {
                let arg = &ch.freq * BigRational::new(BigInt::from(self.r), den.clone());
                ch.cur = self.ctx.sincos2pi_rational(&arg);
            }
        } else {
            for ch in &mut self.channels {
                let (s, c) = &ch.cur;
                let (step_s, step_c) = &ch.step;
                let ns = self.ctx.mul(s, step_c) + self.ctx.mul(c, step_s);
                let nc = self.ctx.mul(c, step_c) - self.ctx.mul(s, step_s);
                ch.cur = (ns, nc);
            }
        }
    }
}

/// Single integer frequency and combined amplitude `sqrt(A^2 + B^2)` of a
/// pairing `c0 + A cos(2 pi nu t) + B sin(2 pi nu t)`; the constant drops out
/// of every alternating combination.
fn single_frequency(
    family: &CurveFamily,
    x: &[f64],
    h: &[i64],
) -> Result<(u64, f64), MomentsError> {
    let ps = family.pairing_series(x, h, 0)?;
    let reduce = |terms: Vec<(BigRational, f64, f64)>| -> Result<(u64, f64), MomentsError> {
        match terms.len() {
            0 => Ok((1, 0.0)),
            1 => {
                let (freq, a, b) = &terms[0];
                if !freq.is_integer() {
                    return Err(MomentsError::NotSingleFrequency);
                }
                let nu = freq
                    .to_integer()
                    .to_u64()
                    .ok_or(MomentsError::NotSingleFrequency)?;
                Ok((nu, a.hypot(*b)))
            }
            _ => Err(MomentsError::NotSingleFrequency),
        }
    };
    match ps.form {
        PairingForm::Trig {
            pi_pow: 0, terms, ..
        } => reduce(
            terms
                .into_iter()
                .map(|(f, a, b)| (f, a.eval_f64(), b.eval_f64()))
                .collect(),
        ),
        PairingForm::TrigNumeric {
            pi_pow: 0, terms, ..
        } => reduce(terms),
        _ => Err(MomentsError::NotSingleFrequency),
    }
}

fn expansion_moment(
    family: &CurveFamily,
    x: &[f64],
    rho: &Dilation,
    n: usize,
    h: &[i64],
) -> Result<MomentReport, MomentsError> {
    let terms = (n as u64)
        .checked_pow(4)
        .ok_or(MomentsError::BadSampleCount)?;
    if terms < MIN_NODES as u64 {
        return Err(MomentsError::TooFewTerms);
    }
    let (nu, amp) = single_frequency(family, x, h)?;
    let rho_f = rho.approx_f64().abs();
    let tau = std::f64::consts::TAU;

    // e(nu k / n) for k = 1..=n, then all n^2 pair sums u_k1 + u_k3;
    // each tuple contributes J0(2 pi rho amp |(u1+u3) - (u2+u4)|)
    let units: Vec<(f64, f64)> = (1..=n)
        .map(|k| {
            let ang = tau * nu as f64 * k as f64 / n as f64;
            (ang.cos(), ang.sin())
        })
        .collect();
    let mut pairs = Vec::with_capacity(n * n);
    for a in &units {
        for b in &units {
            pairs.push((a.0 + b.0, a.1 + b.1));
        }
    }
    let scale = tau * rho_f * amp;
    let mut total = 0.0f64;
    for a in &pairs {
        let mut row = 0.0f64;
        for b in &pairs {
            let r = (a.0 - b.0).hypot(a.1 - b.1);
            // an exactly singular tuple can leave a ~1e-16 residue from the
            // trigonometric table; at astronomical dilations that residue
            // would otherwise destroy the J0(0) = 1 contribution. Genuine
            // nonzero root-of-unity combinations stay far above this snap.
            let r = if r < 1e-12 { 0.0 } else { r };
            row += libm::j0(scale * r);
        }
        total += row;
    }
    let estimate = total / terms as f64;
    Ok(MomentReport {
        n,
        rho_bits: rho.magnitude_bits(),
        h: h.to_vec(),
        estimate,
        node_count: terms as usize,
        quadrature_error_estimate: 1e-13,
        route: MomentRoute::Expansion,
    })
}

// ---------------------------------------------------------------------------
// Frequency detection
// ---------------------------------------------------------------------------

/// Smallest frequency `j <= j_search` carrying a nonzero Fourier coefficient
/// of the curvature field `psi(t) = d^2/dt^2 <h, phi(x, t)>`, detected from a
/// DFT at `4 * j_search` nodes with threshold `1e-8 ||psi||_2`.
pub fn j0_fourier(
    family: &CurveFamily,
    x: &[f64],
    h: &[i64],
    j_search: u32,
) -> Result<u32, MomentsError> {
    if j_search == 0 {
        return Err(MomentsError::BadSearchBound);
    }
    let ps = family.pairing_series(x, h, 2)?;
    let m = 4 * j_search as usize;
    let tau = std::f64::consts::TAU;
    let samples: Vec<f64> = (0..m).map(|r| ps.eval_f64(r as f64 / m as f64)).collect();
    let norm2 = (samples.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
    if norm2 == 0.0 {
        return Err(MomentsError::Degenerate(j_search));
    }
    let threshold = 1e-8 * norm2;
    for j in 1..=j_search {
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        for (r, v) in samples.iter().enumerate() {
            let ang = tau * j as f64 * r as f64 / m as f64;
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        re /= m as f64;
        im /= m as f64;
        if re.hypot(im) > threshold {
            return Ok(j);
        }
    }
    Err(MomentsError::Degenerate(j_search))
}

// ---------------------------------------------------------------------------
// Singular tuple geometry
// ---------------------------------------------------------------------------

/// One translated singular plane `H_i + ((l1+l2)/j0, 0, (l2-l1)/j0, 0)`,
/// with `H_1 = {(a,a,b,b)}` and `H_2 = {(a,b,b,a)}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HTranslate {
    pub plane: u8,
    pub l1: i64,
    pub l2: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SingularGeometry {
    pub j0: u32,
    /// translates that actually meet the unit 4-cube
    pub translates: Vec<HTranslate>,
    /// tuples `k in [n]^4` with `k/n` within the proximity radius of some
    /// translate
    pub count_near: u64,
}

/// Counts tuples within Euclidean distance `1/n^2` of the translated
/// singular planes. All distance comparisons are exact integer arithmetic.
pub fn singular_proximity_count(n: u64, j0: u32) -> Result<SingularGeometry, MomentsError> {
    singular_proximity_count_with_radius(n, j0, 1, n * n)
}

/// Same with an explicit proximity radius `radius_num / radius_den`.
pub fn singular_proximity_count_with_radius(
    n: u64,
    j0: u32,
    radius_num: u64,
    radius_den: u64,
) -> Result<SingularGeometry, MomentsError> {
    if n == 0 {
        return Err(MomentsError::BadSampleCount);
    }
    if n > SINGULAR_N_CAP {
        return Err(MomentsError::SingularCap(n));
    }
    if j0 == 0 {
        return Err(MomentsError::BadJ0);
    }
    if radius_num == 0 || radius_den == 0 {
        return Err(MomentsError::BadRadius);
    }

    let ni = n as i128;
    let j = j0 as i128;
    let rn = radius_num as i128;
    let rd = radius_den as i128;
    // distance^2 from y = k/n to H + (s/j0, 0, t/j0, 0) in normal coordinates
    // is ((da j0 - s n)^2 + (db j0 - t n)^2) / (2 n^2 j0^2); comparing with
    // (rn/rd)^2 cross-multiplies to the test below
    let rhs = 2 * ni * ni * j * j * rn * rn;
    // feasible translate offsets (s, t) = (l1 + l2, l2 - l1) with
    // |l1|, |l2| <= j0, i.e. s = t mod 2 and |s + t|, |s - t| <= 2 j0
    let span = 2 * j0 as i64;
    let near = |da: i64, db: i64| -> bool {
        for s in -span..=span {
            for t in -span..=span {
                if (s + t) % 2 != 0 || (s + t).abs() > span || (s - t).abs() > span {
                    continue;
                }
                let u = da as i128 * j - s as i128 * ni;
                let v = db as i128 * j - t as i128 * ni;
                if (u * u + v * v) * rd * rd <= rhs {
                    return true;
                }
            }
        }
        false
    };

    // predicate table over difference pairs; symmetric under sign flips and
    // argument swap, so one table serves both planes
    let w = 2 * n as usize - 1;
    let off = n as i64 - 1;
    let mut table = vec![false; w * w];
    let mut rows: Vec<Vec<i64>> = vec![Vec::new(); w];
    for da in -(n as i64 - 1)..=(n as i64 - 1) {
        for db in -(n as i64 - 1)..=(n as i64 - 1) {
            if near(da, db) {
                table[(da + off) as usize * w + (db + off) as usize] = true;
                rows[(da + off) as usize].push(db);
            }
        }
    }
    let hit = |da: i64, db: i64| table[(da + off) as usize * w + (db + off) as usize];

    // union over both plane families without enumerating all n^4 tuples:
    // for fixed (k1, k2, k3) the admissible k4 form two small sets
    let mut count = 0u64;
    for k1 in 1..=n as i64 {
        for k2 in 1..=n as i64 {
            let row_a = &rows[(k1 - k2 + off) as usize];
            for k3 in 1..=n as i64 {
                let d23 = k2 - k3;
                let row_b = &rows[(d23 + off) as usize];
                let mut a = 0u64;
                let mut overlap = 0u64;
                for &d34 in row_a {
                    let k4 = k3 - d34;
                    if k4 >= 1 && k4 <= n as i64 {
                        a += 1;
                        if hit(k1 - k4, d23) {
                            overlap += 1;
                        }
                    }
                }
                let mut b = 0u64;
                for &d14 in row_b {
                    let k4 = k1 - d14;
                    if k4 >= 1 && k4 <= n as i64 {
                        b += 1;
                    }
                }
                count += a + b - overlap;
            }
        }
    }

    let mut translates = Vec::new();
    for plane in 1u8..=2 {
        for l1 in -(j0 as i64)..=j0 as i64 {
            for l2 in -(j0 as i64)..=j0 as i64 {
                if (l1 + l2).unsigned_abs() <= j0 as u64 && (l2 - l1).unsigned_abs() <= j0 as u64 {
                    translates.push(HTranslate { plane, l1, l2 });
                }
            }
        }
    }

    Ok(SingularGeometry {
        j0,
        translates,
        count_near: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tau() -> f64 {
        std::f64::consts::TAU
    }

    #[test]
    fn alternating_sum_vanishes_on_singular_patterns() {
        let fam = CurveFamily::circle();
        for omega in [0.0, 0.17, 0.93] {
            // (a, a, b, b): terms cancel in pairs
            let v = f_alternating(&fam, &[], 8, &[3, 3, 5, 5], omega, &[1, 0]).unwrap();
            assert_eq!(v, 0.0);
            // (a, b, b, a): likewise
            let v = f_alternating(&fam, &[], 8, &[2, 7, 7, 2], omega, &[1, 0]).unwrap();
            assert_eq!(v, 0.0);
        }
        // a generic tuple does not cancel
        let v = f_alternating(&fam, &[], 8, &[1, 2, 3, 5], 0.1, &[1, 0]).unwrap();
        assert!(v.abs() > 1e-3);
    }

    #[test]
    fn alternating_sum_closed_form_on_circle() {
        let fam = CurveFamily::circle();
        let (n, omega) = (4usize, 0.1f64);
        let v = f_alternating(&fam, &[], n, &[1, 2, 3, 4], omega, &[1, 0]).unwrap();
        let s = |k: f64| (tau() * (k / 4.0 + omega)).sin();
        let want = s(1.0) - s(2.0) + s(3.0) - s(4.0);
        assert_abs_diff_eq!(v, want, epsilon = 1e-12);
    }

    #[test]
    fn alternating_sum_validates_inputs() {
        let fam = CurveFamily::circle();
        assert!(matches!(
            f_alternating(&fam, &[], 8, &[0, 1, 2, 3], 0.0, &[1, 0]),
            Err(MomentsError::BadTuple)
        ));
        assert!(matches!(
            f_alternating(&fam, &[], 8, &[1, 2, 3, 9], 0.0, &[1, 0]),
            Err(MomentsError::BadTuple)
        ));
        let open = CurveFamily::monomial(2);
        assert!(matches!(
            f_alternating(&open, &[], 8, &[1, 2, 3, 4], 0.0, &[1, 0]),
            Err(MomentsError::OpenFamily)
        ));
    }

    #[test]
    fn single_sample_and_zero_dilation_give_unit_moment() {
        let fam = CurveFamily::circle();
        let rep = fourth_moment(
            &fam,
            &[],
            &Dilation::Exact(BigInt::from(5)),
            1,
            &[1, 0],
            1 << 16,
            MomentRoute::Trapezoid,
        )
        .unwrap();
        assert_abs_diff_eq!(rep.estimate, 1.0, epsilon = 1e-12);
        assert!(rep.node_count >= MIN_NODES);

        let rep = fourth_moment(
            &fam,
            &[],
            &Dilation::Exact(BigInt::from(0)),
            8,
            &[1, 0],
            1 << 16,
            MomentRoute::Trapezoid,
        )
        .unwrap();
        assert_abs_diff_eq!(rep.estimate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn routes_agree_at_desk_scale() {
        let fam = CurveFamily::circle();
        let rho = Dilation::Exact(BigInt::from(64));
        let trap = fourth_moment(&fam, &[], &rho, 8, &[1, 0], 1 << 20, MomentRoute::Trapezoid)
            .unwrap();
        let exp = fourth_moment(&fam, &[], &rho, 8, &[1, 0], 1 << 20, MomentRoute::Expansion)
            .unwrap();
        assert_eq!(exp.node_count, 4096);
        assert!(trap.node_count >= MIN_NODES);
        assert!(
            (trap.estimate - exp.estimate).abs() < 1e-6,
            "trapezoid {} vs expansion {}",
            trap.estimate,
            exp.estimate
        );
        assert!(trap.estimate >= 0.0 && trap.estimate <= 1.0);
        assert!(exp.estimate >= 0.0 && exp.estimate <= 1.0);
    }

    #[test]
    fn node_walker_matches_per_node_evaluators() {
        let fam = CurveFamily::circle();
        let (n, h) = (5usize, [2i64, -1]);
        let nodes = 4096u64;
        let mod1 = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d)
        };
        for rho in [
            Dilation::Exact(BigInt::from(37)),
            Dilation::Real(2.5),
            Dilation::IntTimesLog {
                factor: BigInt::from(3),
                log_arg: 7,
            },
        ] {
            let mut walker = TrigNodeWalker::try_new(&fam, &[], &rho, n, &h, nodes).unwrap();
            // spans the resynchronization boundary of the recurrence
            for r in 0..1100u64 {
                let phases = walker.next_phases();
                if ![0, 1, 513, 1023, 1024, 1025, 1099].contains(&r) {
                    continue;
                }
                let offset = BigRational::new(BigInt::from(r), BigInt::from(nodes));
                let ev = PhaseEvaluator::with_offset(&fam, &[], &rho, n, offset).unwrap();
                for k in 1..=n {
                    let combined: f64 = ev
                        .point(k)
                        .iter()
                        .zip(&h)
                        .map(|(p, &hi)| hi as f64 * p.value)
                        .sum();
                    assert!(
                        mod1(phases[k - 1], combined.rem_euclid(1.0)) < 1e-9,
                        "node {} sample {}: {} vs {}",
                        r,
                        k,
                        phases[k - 1],
                        combined
                    );
                }
            }
        }
        // composed families have parameter-dependent pairings: no fast path
        let ell = CurveFamily::ellipse();
        assert!(
            TrigNodeWalker::try_new(&ell, &[2.0, 1.0], &Dilation::Exact(BigInt::from(5)), 4, &[1, 0], 4096)
                .is_none()
        );
    }

    #[test]
    fn quadrature_matches_term_oracle_for_small_n() {
        // independent oracle: expand the moment term by term and average each
        // e(rho f_k) over a full period, tracking the imaginary part. For
        // periodic analytic integrands the node average converges faster than
        // any power, so 512 nodes per term are exact to machine precision.
        let fam = CurveFamily::circle();
        let n = 4usize;
        let rho_int = 5u32;
        let rho = Dilation::Exact(BigInt::from(rho_int));
        let rep = fourth_moment(&fam, &[], &rho, n, &[1, 0], 1 << 16, MomentRoute::Trapezoid)
            .unwrap();

        let nodes = 512usize;
        let mut oracle_re = 0.0f64;
        let mut oracle_im = 0.0f64;
        for k1 in 1..=n {
            for k2 in 1..=n {
                for k3 in 1..=n {
                    for k4 in 1..=n {
                        let mut ire = 0.0;
                        let mut iim = 0.0;
                        for r in 0..nodes {
                            let w = r as f64 / nodes as f64;
                            let f = f_alternating(&fam, &[], n, &[k1, k2, k3, k4], w, &[1, 0])
                                .unwrap();
                            let ph = tau() * rho_int as f64 * f;
                            ire += ph.cos();
                            iim += ph.sin();
                        }
                        oracle_re += ire / nodes as f64;
                        oracle_im += iim / nodes as f64;
                    }
                }
            }
        }
        let n4 = (n * n * n * n) as f64;
        oracle_re /= n4;
        oracle_im /= n4;
        assert!(
            oracle_im.abs() <= 1e-10,
            "imaginary residue {} too large",
            oracle_im
        );
        assert_abs_diff_eq!(rep.estimate, oracle_re, epsilon = 1e-8);
    }

    #[test]
    fn expansion_rejects_small_n_and_open_families() {
        let fam = CurveFamily::circle();
        let rho = Dilation::Exact(BigInt::from(5));
        assert!(matches!(
            fourth_moment(&fam, &[], &rho, 4, &[1, 0], 1 << 16, MomentRoute::Expansion),
            Err(MomentsError::TooFewTerms)
        ));
        let open = CurveFamily::monomial(2);
        assert!(matches!(
            fourth_moment(&open, &[], &rho, 8, &[1, 0], 1 << 16, MomentRoute::Auto),
            Err(MomentsError::OpenFamily)
        ));
    }

    #[test]
    fn node_rule_refuses_huge_dilations_and_auto_falls_back() {
        let fam = CurveFamily::circle();
        let rho = Dilation::Exact(BigInt::from(1u128 << 100));
        let refusal =
            fourth_moment(&fam, &[], &rho, 8, &[1, 0], 1 << 20, MomentRoute::Trapezoid);
        match refusal {
            Err(MomentsError::NodeBudget { required, budget }) => {
                assert!(required > budget);
            }
            other => panic!("expected node budget refusal, got {:?}", other.map(|r| r.route)),
        }
        // Auto reroutes to the expansion, which is insensitive to rho's size
        let rep =
            fourth_moment(&fam, &[], &rho, 8, &[1, 0], 1 << 20, MomentRoute::Auto).unwrap();
        assert_eq!(rep.route, MomentRoute::Expansion);
        assert!(rep.estimate >= 0.0 && rep.estimate <= 1.0);
    }

    #[test]
    fn multi_frequency_pairing_cannot_use_expansion() {
        // two distinct frequencies: sin(2 pi t) + sin(4 pi t)
        let cfg = "kind = trig\nd = 2\nrow = 1, sin:1, 1, 1\nrow = 1, sin:2, 1, 1\nrow = 2, cos:1, 1, 1\n";
        let fam = CurveFamily::from_config_str(cfg).unwrap();
        let rho = Dilation::Exact(BigInt::from(64));
        assert!(matches!(
            fourth_moment(&fam, &[], &rho, 8, &[1, 0], 1 << 20, MomentRoute::Expansion),
            Err(MomentsError::NotSingleFrequency)
        ));
    }

    #[test]
    fn j0_fourier_detects_base_and_higher_frequencies() {
        let fam = CurveFamily::circle();
        assert_eq!(j0_fourier(&fam, &[], &[1, 0], 8).unwrap(), 1);
        assert_eq!(j0_fourier(&fam, &[], &[0, 1], 8).unwrap(), 1);

        let cfg = "kind = trig\nd = 2\nrow = 1, sin:3, 1, 1\nrow = 2, cos:3, 1, 1\n";
        let fam3 = CurveFamily::from_config_str(cfg).unwrap();
        assert_eq!(j0_fourier(&fam3, &[], &[1, 0], 8).unwrap(), 3);

        // zero pairing has no energy at any frequency
        assert!(matches!(
            j0_fourier(&fam, &[], &[0, 0], 8),
            Err(MomentsError::Degenerate(8))
        ));
        assert!(matches!(
            j0_fourier(&fam, &[], &[1, 0], 0),
            Err(MomentsError::BadSearchBound)
        ));
    }

    /// Independent oracle: distance to each translated plane via the explicit
    /// orthogonal projection, checked against the proximity radius in i128
    /// cross-multiplied arithmetic.
    fn brute_count(n: u64, j0: u32, rn: u64, rd: u64) -> u64 {
        let ni = n as i128;
        let j = j0 as i128;
        let rhs = 2 * ni * ni * j * j * (rn as i128) * (rn as i128);
        let mut count = 0u64;
        for k1 in 1..=n as i64 {
            for k2 in 1..=n as i64 {
                for k3 in 1..=n as i64 {
                    'tuple: for k4 in 1..=n as i64 {
                        for l1 in -(j0 as i64)..=j0 as i64 {
                            for l2 in -(j0 as i64)..=j0 as i64 {
                                let s = (l1 + l2) as i128;
                                let t = (l2 - l1) as i128;
                                // plane 1: y1 - y2 vs s/j0, y3 - y4 vs t/j0
                                let u = (k1 - k2) as i128 * j - s * ni;
                                let v = (k3 - k4) as i128 * j - t * ni;
                                if (u * u + v * v) * (rd as i128) * (rd as i128) <= rhs {
                                    count += 1;
                                    continue 'tuple;
                                }
                                // plane 2: y1 - y4 vs s/j0, y3 - y2 vs t/j0
                                let u = (k1 - k4) as i128 * j - s * ni;
                                let v = (k3 - k2) as i128 * j - t * ni;
                                if (u * u + v * v) * (rd as i128) * (rd as i128) <= rhs {
                                    count += 1;
                                    continue 'tuple;
                                }
                            }
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn singular_count_matches_brute_force() {
        for (n, j0) in [(2u64, 1u32), (3, 1), (3, 2), (5, 2), (6, 3)] {
            let geo = singular_proximity_count(n, j0).unwrap();
            let brute = brute_count(n, j0, 1, n * n);
            assert_eq!(geo.count_near, brute, "n = {}, j0 = {}", n, j0);
        }
        // and with a fatter radius, where translates genuinely matter
        for (n, j0) in [(4u64, 1u32), (5, 2)] {
            let geo = singular_proximity_count_with_radius(n, j0, 1, n).unwrap();
            let brute = brute_count(n, j0, 1, n);
            assert_eq!(geo.count_near, brute, "n = {}, j0 = {} (radius 1/n)", n, j0);
        }
    }

    #[test]
    fn on_plane_tuples_are_counted_exactly() {
        // at radius 1/n^2 with j0 = 1 only the exact lattice points of the
        // two planes qualify: n^2 + n^2 - n of them
        for n in [4u64, 8, 16, 32] {
            let geo = singular_proximity_count(n, 1).unwrap();
            assert_eq!(geo.count_near, 2 * n * n - n, "n = {}", n);
        }
    }

    #[test]
    fn count_is_monotone_in_radius() {
        let n = 6u64;
        let tight = singular_proximity_count_with_radius(n, 2, 1, n * n).unwrap();
        let mid = singular_proximity_count_with_radius(n, 2, 2, n * n).unwrap();
        let wide = singular_proximity_count_with_radius(n, 2, 1, n).unwrap();
        assert!(tight.count_near <= mid.count_near);
        assert!(mid.count_near <= wide.count_near);
        // everything is within distance sqrt(2) of the diagonal planes, so a
        // huge radius counts all n^4 tuples
        let all = singular_proximity_count_with_radius(n, 1, 2, 1).unwrap();
        assert_eq!(all.count_near, n * n * n * n);
    }

    #[test]
    fn translates_meet_the_unit_cube() {
        let geo = singular_proximity_count(4, 2).unwrap();
        for tr in &geo.translates {
            assert!((tr.l1 + tr.l2).unsigned_abs() <= 2);
            assert!((tr.l2 - tr.l1).unsigned_abs() <= 2);
        }
        // plane tags come in both flavors and the list is duplicate-free
        assert!(geo.translates.iter().any(|t| t.plane == 1));
        assert!(geo.translates.iter().any(|t| t.plane == 2));
        let mut seen = geo.translates.clone();
        seen.dedup();
        assert_eq!(seen.len(), geo.translates.len());
    }

    #[test]
    fn singular_counter_validates_inputs() {
        assert!(matches!(
            singular_proximity_count(0, 1),
            Err(MomentsError::BadSampleCount)
        ));
        assert!(matches!(
            singular_proximity_count(300, 1),
            Err(MomentsError::SingularCap(300))
        ));
        assert!(matches!(
            singular_proximity_count(4, 0),
            Err(MomentsError::BadJ0)
        ));
        assert!(matches!(
            singular_proximity_count_with_radius(4, 1, 0, 1),
            Err(MomentsError::BadRadius)
        ));
    }
}
