//! Sub-level structure of scalar fields `F(x, t)` on `[0,1]^N x [0,1]`.
//!
//! For a threshold `delta > 0` the set `{t : |F(x,t)| >= delta}` of an
//! analytic field is a finite union of closed intervals. This module locates
//! those intervals numerically (grid scan + bisection), fits the exponent
//! `alpha` for which the complement measure at `delta = eps^alpha` is
//! dominated linearly by `eps`, and implements the window-cover membership
//! test together with the measure bound it implies.

use crate::curvekit::{CurveError, CurveFamily, PairingSeries};
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_GRID: usize = 1024;
pub const DEFAULT_BISECT_TOL: f64 = 1e-12;
/// Fields whose sup over the t-grid falls below this are treated as
/// identically zero in the parameter (the zero locus).
pub const ZERO_LOCUS_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SublevelError {
    #[error("delta must be positive")]
    BadDelta,
    #[error("grid size must be at least 64")]
    GridTooSmall,
    #[error("epsilon grid needs at least 6 values in (0, 1)")]
    BadEpsilonGrid,
    #[error("parameter vector has length {got}, field expects {want}")]
    ParamLen { got: usize, want: usize },
    #[error("no alpha in [0.25, 8] dominates linearly; (alpha, ratio slope) pairs: {0:?}")]
    NoAlphaInRange(Vec<(f64, f64)>),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Scalar field on `[0,1]^N x [0,1]`.
pub trait ScalarField {
    fn param_dim(&self) -> usize;
    fn value(&self, x: &[f64], t: f64) -> f64;

    /// A single-parameter view `t -> F(x, t)`; implementations with
    /// expensive per-call setup should override this to hoist it.
    fn section<'a>(&'a self, x: &'a [f64]) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let x = x.to_vec();
        Box::new(move |t| self.value(&x, t))
    }
}

/// Closure-backed field.
pub struct FnField<F: Fn(&[f64], f64) -> f64> {
    pub param_dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], f64) -> f64> ScalarField for FnField<F> {
    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        (self.f)(x, t)
    }
}

/// `F(x, t) = <h, d^j/dt^j phi(x, t)>` for a curve family.
pub struct PairingField {
    family: CurveFamily,
    h: Vec<i64>,
    j: u32,
}

impl PairingField {
    pub fn new(family: CurveFamily, h: Vec<i64>, j: u32) -> Result<Self, SublevelError> {
        // validate dimensions once up front
        family.pairing_series(&vec![0.0; family.param_dim()], &h, j)?;
        Ok(PairingField { family, h, j })
    }

    fn series_at(&self, x: &[f64]) -> PairingSeries {
        self.family
            .pairing_series(x, &self.h, self.j)
            .expect("dimensions validated at construction")
    }
}

impl ScalarField for PairingField {
    fn param_dim(&self) -> usize {
        self.family.param_dim()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.series_at(x).eval_f64(t)
    }

    fn section<'a>(&'a self, x: &'a [f64]) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let series = self.series_at(x);
        Box::new(move |t| series.eval_f64(t))
    }
}

/// Interval decomposition of `{t in [0,1] : |F(x,t)| >= delta}`.
#[derive(Clone, Debug, Serialize)]
pub struct SublevelProfile {
    pub delta: f64,
    /// disjoint closed intervals, ordered
    pub intervals: Vec<(f64, f64)>,
    pub total_measure: f64,
    pub complement_measure: f64,
    pub component_count: usize,
    /// a crossing cluster narrower than two grid cells survived refinement
    pub tangency_warning: bool,
}

fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if (glo >= 0.0) == (gm >= 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn scan_crossings(
    g: &dyn Fn(f64) -> f64,
    grid_size: usize,
    tol: f64,
) -> (Vec<f64>, bool) {
    let mut crossings = Vec::new();
    let mut prev_t = 0.0f64;
    let mut prev_in = g(0.0) >= 0.0;
    for i in 1..=grid_size {
        let t = i as f64 / grid_size as f64;
        let now_in = g(t) >= 0.0;
        if now_in != prev_in {
            crossings.push(bisect(g, prev_t, t, tol));
        }
        prev_t = t;
        prev_in = now_in;
    }
    let cluster = crossings
        .windows(2)
        .any(|w| w[1] - w[0] < 2.0 / grid_size as f64);
    (crossings, cluster)
}

/// Locate `{|F(x, .)| >= delta}` by sign scan on a uniform grid followed by
/// bisection of each bracket. A suspected tangency (two crossings within two
/// grid cells) triggers a single 8x grid refinement; if the cluster survives,
/// the profile carries a warning.
pub fn sublevel_intervals(
    field: &dyn ScalarField,
    x: &[f64],
    delta: f64,
    grid_size: usize,
    bisect_tol: f64,
) -> Result<SublevelProfile, SublevelError> {
    if !(delta > 0.0) {
        return Err(SublevelError::BadDelta);
    }
    if grid_size < 64 {
        return Err(SublevelError::GridTooSmall);
    }
    if x.len() != field.param_dim() {
        return Err(SublevelError::ParamLen {
            got: x.len(),
            want: field.param_dim(),
        });
    }
    let section = field.section(x);
    let g = move |t: f64| section(t).abs() - delta;
    let (crossings, suspected) = scan_crossings(&g, grid_size, bisect_tol);
    let (crossings, warning) = if suspected {
        let (refined, still) = scan_crossings(&g, grid_size * 8, bisect_tol);
        (refined, still)
    } else {
        (crossings, false)
    };

    // walk the segments between consecutive boundaries, keeping those whose
    // midpoint lies in the set
    let mut bounds = Vec::with_capacity(crossings.len() + 2);
    bounds.push(0.0);
    bounds.extend(crossings);
    bounds.push(1.0);
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        if g(0.5 * (a + b)) >= 0.0 {
            match intervals.last_mut() {
                Some(last) if (a - last.1).abs() <= bisect_tol => last.1 = b,
                _ => intervals.push((a, b)),
            }
        }
    }
    let total: f64 = intervals.iter().map(|(a, b)| b - a).sum();
    let complement = {
        let mut c = 0.0;
        let mut cursor = 0.0;
        for &(a, b) in &intervals {
            c += a - cursor;
            cursor = b;
        }
        c + (1.0 - cursor)
    };
    let component_count = {
        let mut n = 0;
        let mut last_end = f64::NEG_INFINITY;
        for &(a, b) in &intervals {
            if a - last_end > bisect_tol {
                n += 1;
            }
            last_end = b;
        }
        n
    };
    Ok(SublevelProfile {
        delta,
        intervals,
        total_measure: total,
        complement_measure: complement,
        component_count,
        tangency_warning: warning,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaFit {
    /// smallest grid alpha whose complement/epsilon ratio is stable
    pub alpha_hat: f64,
    /// fitted domination constant: max over the grid of complement / epsilon
    pub fitted_c: f64,
    pub max_component_count: usize,
    pub worst_ratio: f64,
}

/// Search `alpha` in `{0.25, 0.5, ..., 8}` for linear domination
/// `complement(delta = eps^alpha) <= C eps` across all parameters and all
/// epsilons. Domination is accepted when the log-log slope of the ratio
/// against `eps` is at least `-0.1` (a shrinking-`eps` blow-up shows as a
/// clearly negative slope), or when the complement vanishes outright.
pub fn alpha_fit(
    field: &dyn ScalarField,
    x_grid: &[Vec<f64>],
    eps_grid: &[f64],
    grid_size: usize,
    bisect_tol: f64,
) -> Result<AlphaFit, SublevelError> {
    if eps_grid.len() < 6 || eps_grid.iter().any(|&e| !(0.0 < e && e < 1.0)) {
        return Err(SublevelError::BadEpsilonGrid);
    }
    let mut eps: Vec<f64> = eps_grid.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut rejections: Vec<(f64, f64)> = Vec::new();
    let mut max_count_global = 0usize;
    for step in 1..=32 {
        let alpha = step as f64 * 0.25;
        let mut ratios: Vec<f64> = Vec::with_capacity(eps.len());
        let mut max_count = 0usize;
        for &e in &eps {
            let delta = e.powf(alpha);
            let mut worst = 0.0f64;
            for x in x_grid {
                let p = sublevel_intervals(field, x, delta, grid_size, bisect_tol)?;
                worst = worst.max(p.complement_measure / e);
                max_count = max_count.max(p.component_count);
            }
            ratios.push(worst);
        }
        max_count_global = max_count_global.max(max_count);
        let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        if worst_ratio < 1e-9 {
            return Ok(AlphaFit {
                alpha_hat: alpha,
                fitted_c: worst_ratio,
                max_component_count: max_count,
                worst_ratio,
            });
        }
        // slope of ln(ratio) against ln(eps)
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .zip(&ratios)
            .map(|(&e, &r)| (e.ln(), r.max(1e-300).ln()))
            .collect();
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        if slope >= -0.1 {
            return Ok(AlphaFit {
                alpha_hat: alpha,
                fitted_c: worst_ratio,
                max_component_count: max_count,
                worst_ratio,
            });
        }
        rejections.push((alpha, slope));
    }
    Err(SublevelError::NoAlphaInRange(rejections))
}

/// Membership test: does every window `(xi - eps/2, xi + eps/2)` around the
/// grid points meet `{|F(x, .)| >= delta}`? The grid should be dense at step
/// `<= eps/4`.
pub fn gap_cover_check(
    field: &dyn ScalarField,
    x: &[f64],
    eps: f64,
    delta: f64,
    xi_grid: &[f64],
    grid_size: usize,
    bisect_tol: f64,
) -> Result<bool, SublevelError> {
    let profile = sublevel_intervals(field, x, delta, grid_size, bisect_tol)?;
    Ok(xi_grid.iter().all(|&xi| {
        let (lo, hi) = (xi - eps / 2.0, xi + eps / 2.0);
        profile
            .intervals
            .iter()
            .any(|&(a, b)| a < hi && b > lo)
    }))
}

/// The measure bound implied by a successful cover: the complement of the
/// sub-level set is at most `eps (M + 1)` when `M` bounds the component count.
pub fn cover_measure_check(profile: &SublevelProfile, eps: f64, m: usize) -> bool {
    profile.complement_measure <= eps * (m as f64 + 1.0)
}

/// Keep the parameter points whose field section is not numerically zero and
/// which stay at Euclidean distance `>= eps` from the detected zero locus.
pub fn filter_params_off_zero_locus(
    field: &dyn ScalarField,
    candidates: &[Vec<f64>],
    eps: f64,
    t_grid: usize,
) -> Vec<Vec<f64>> {
    let sup = |x: &[f64]| -> f64 {
        let section = field.section(x);
        (0..=t_grid)
            .map(|i| section(i as f64 / t_grid as f64).abs())
            .fold(0.0, f64::max)
    };
    let locus: Vec<&Vec<f64>> = candidates.iter().filter(|x| sup(x) < ZERO_LOCUS_TOL).collect();
    candidates
        .iter()
        .filter(|x| {
            sup(x) >= ZERO_LOCUS_TOL
                && locus.iter().all(|z| {
                    let d2: f64 = x
                        .iter()
                        .zip(z.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    d2.sqrt() >= eps
                })
        })
        .cloned()
        .collect()
}
