//! Empirical measures on the torus and their equidistribution diagnostics.
//!
//! A [`SampleCloud`] is the pushforward of `n` reduced curve samples to
//! `[0,1)^d`. Two diagnostics quantify how uniform it is:
//!
//! * exponential sums `S(h) = (1/n) sum_k e(<h, p_k>)` over a frequency box —
//!   these go to zero for every `h != 0` exactly when the clouds
//!   equidistribute;
//! * a box-counting discrepancy: the worst absolute difference between
//!   empirical mass and volume over *wrapped* axis-aligned boxes on a dyadic
//!   grid (wrapped boxes matter: clouds concentrated around `0 == 1` look
//!   spuriously uniform to anchored boxes).
//!
//! Summation uses a fixed-shape pairwise tree, so results are bit-for-bit
//! reproducible regardless of chunking.

use crate::phase::{unit_character, PhaseEvaluator};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EquidistError {
    #[error("verdict needs at least {want} rows, got {got}")]
    TooFewRows { want: usize, got: usize },
    #[error("verdict rows must have strictly increasing sample counts")]
    UnsortedRows,
    #[error("resolution must be positive")]
    ZeroResolution,
}

/// `n` points in `[0,1)^d` with a per-point error bound (mod-1 distance).
#[derive(Clone, Debug, Serialize)]
pub struct SampleCloud {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub error_bounds: Vec<f64>,
}

impl SampleCloud {
    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        assert!(!points.is_empty());
        let dim = points[0].len();
        assert!(points.iter().all(|p| p.len() == dim));
        let n = points.len();
        SampleCloud {
            dim,
            points,
            error_bounds: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_error(&self) -> f64 {
        self.error_bounds.iter().cloned().fold(0.0, f64::max)
    }
}

/// Push the cached evaluator samples to the torus.
pub fn sample_measure(ev: &PhaseEvaluator) -> SampleCloud {
    let mut points = Vec::with_capacity(ev.n());
    let mut errs = Vec::with_capacity(ev.n());
    for p in ev.points() {
        points.push(p.iter().map(|c| c.value).collect());
        errs.push(p.iter().map(|c| c.error_bound).fold(0.0, f64::max));
    }
    SampleCloud {
        dim: ev.dim(),
        points,
        error_bounds: errs,
    }
}

/// Fixed-shape pairwise sum of complex terms (deterministic, cancellation-safe).
pub(crate) fn pairwise_complex(v: &[(f64, f64)]) -> (f64, f64) {
    if v.len() <= 8 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (a, b) in v {
            re += a;
            im += b;
        }
        (re, im)
    } else {
        let mid = v.len() / 2;
        let (l, r) = (pairwise_complex(&v[..mid]), pairwise_complex(&v[mid..]));
        (l.0 + r.0, l.1 + r.1)
    }
}

/// `S(h) = (1/n) sum_k e(<h, p_k>)` as `(re, im)`.
///
/// Valid for integer `h` because `frac(sum h_i frac(w_i)) = frac(sum h_i w_i)`.
pub fn weyl_sum(cloud: &SampleCloud, h: &[i64]) -> (f64, f64) {
    assert_eq!(h.len(), cloud.dim, "frequency dimension mismatch");
    let terms: Vec<(f64, f64)> = cloud
        .points
        .iter()
        .map(|p| {
            let mut s = 0.0f64;
            for (hi, xi) in h.iter().zip(p) {
                s += *hi as f64 * xi;
            }
            unit_character(s.rem_euclid(1.0))
        })
        .collect();
    let (re, im) = pairwise_complex(&terms);
    let n = cloud.len() as f64;
    (re / n, im / n)
}

pub fn weyl_sum_abs(cloud: &SampleCloud, h: &[i64]) -> f64 {
    let (re, im) = weyl_sum(cloud, h);
    re.hypot(im)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylEntry {
    pub h: Vec<i64>,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

/// Exponential sums over one representative of each `{h, -h}` pair in the
/// sup-ball of radius `h_box` (the mirrored sum is the complex conjugate).
#[derive(Clone, Debug, Serialize)]
pub struct WeylReport {
    pub n: usize,
    pub h_box: u32,
    pub entries: Vec<WeylEntry>,
    pub max_abs: f64,
    /// worst-case phase perturbation: `2 pi * max ||h||_1 * max point error`
    pub phase_error: f64,
}

pub fn weyl_report(cloud: &SampleCloud, h_box: u32) -> WeylReport {
    let mut entries = Vec::new();
    let mut max_abs = 0.0f64;
    let mut max_l1 = 0i64;
    for h in crate::curvekit::canonical_box(cloud.dim, h_box) {
        let (re, im) = weyl_sum(cloud, &h);
        let abs = re.hypot(im);
        max_abs = max_abs.max(abs);
        max_l1 = max_l1.max(h.iter().map(|v| v.abs()).sum());
        entries.push(WeylEntry { h, re, im, abs });
    }
    WeylReport {
        n: cloud.len(),
        h_box,
        entries,
        max_abs,
        phase_error: std::f64::consts::TAU * max_l1 as f64 * cloud.max_error(),
    }
}

/// Worst absolute deviation `|mass(B)/n - vol(B)|` over all wrapped boxes
/// `prod_i [a_i/R, (a_i+l_i)/R)` with `a_i in 0..R`, `l_i in 1..=R`.
///
/// Exhaustive (via prefix sums on a doubled grid) for `d <= 2`; for `d >= 3`
/// the anchor/length grid is subsampled deterministically with stride
/// `max(1, R/8)`, which makes the result a lower estimate.
pub fn box_discrepancy(cloud: &SampleCloud, resolution: u32) -> Result<f64, EquidistError> {
    if resolution == 0 {
        return Err(EquidistError::ZeroResolution);
    }
    let r = resolution as usize;
    let n = cloud.len() as f64;
    let cell = |x: f64| -> usize { ((x * r as f64).floor() as usize).min(r - 1) };
    match cloud.dim {
        1 => {
            let mut counts = vec![0u32; r];
            for p in &cloud.points {
                counts[cell(p[0])] += 1;
            }
            // doubled prefix sums: prefix[i] = points in cells [0, i)
            let mut prefix = vec![0u64; 2 * r + 1];
            for i in 0..2 * r {
                prefix[i + 1] = prefix[i] + counts[i % r] as u64;
            }
            let mut worst = 0.0f64;
            for a in 0..r {
                for l in 1..=r {
                    let mass = (prefix[a + l] - prefix[a]) as f64 / n;
                    let vol = l as f64 / r as f64;
                    worst = worst.max((mass - vol).abs());
                }
            }
            Ok(worst)
        }
        2 => {
            let mut counts = vec![vec![0u32; r]; r];
            for p in &cloud.points {
                counts[cell(p[0])][cell(p[1])] += 1;
            }
            let m = 2 * r;
            let mut prefix = vec![vec![0u64; m + 1]; m + 1];
            for i in 0..m {
                for j in 0..m {
                    prefix[i + 1][j + 1] = counts[i % r][j % r] as u64 + prefix[i][j + 1]
                        + prefix[i + 1][j]
                        - prefix[i][j];
                }
            }
            let rect =
                |i0: usize, j0: usize, i1: usize, j1: usize| -> u64 {
                    prefix[i1][j1] + prefix[i0][j0] - prefix[i0][j1] - prefix[i1][j0]
                };
            let mut worst = 0.0f64;
            for a0 in 0..r {
                for l0 in 1..=r {
                    for a1 in 0..r {
                        for l1 in 1..=r {
                            let mass = rect(a0, a1, a0 + l0, a1 + l1) as f64 / n;
                            let vol = (l0 * l1) as f64 / (r * r) as f64;
                            worst = worst.max((mass - vol).abs());
                        }
                    }
                }
            }
            Ok(worst)
        }
        d => {
            let stride = (r / 8).max(1);
            let anchors: Vec<usize> = (0..r).step_by(stride).collect();
            let lengths: Vec<usize> = (stride..=r).step_by(stride).collect();
            let mut worst = 0.0f64;
            // iterate over the product anchor/length grid one axis pair at a time
            let combos = anchors.len() * lengths.len();
            let total = combos.pow(d as u32);
            for flat in 0..total {
                let mut f = flat;
                let mut lo = vec![0.0f64; d];
                let mut len = vec![0.0f64; d];
                for i in 0..d {
                    let c = f % combos;
                    f /= combos;
                    lo[i] = anchors[c / lengths.len()] as f64 / r as f64;
                    len[i] = lengths[c % lengths.len()] as f64 / r as f64;
                }
                let mut count = 0u64;
                for p in &cloud.points {
                    let inside = p.iter().zip(lo.iter().zip(&len)).all(|(x, (a, l))| {
                        let dxy = (x - a).rem_euclid(1.0);
                        dxy < *l
                    });
                    if inside {
                        count += 1;
                    }
                }
                let vol: f64 = len.iter().product();
                worst = worst.max((count as f64 / n - vol).abs());
            }
            Ok(worst)
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VerdictRow {
    pub n: usize,
    pub max_weyl: f64,
    pub discrepancy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Equidistributed,
    Obstructed,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquidistVerdict {
    pub verdict: Verdict,
    /// least-squares slope of `log max_weyl` against `log n`
    pub weyl_slope: f64,
    pub final_discrepancy: f64,
    pub final_max_weyl: f64,
}

/// Classify a sequence of diagnostics at increasing sample counts:
/// decaying exponential sums (`slope <= -0.1`) with small final discrepancy
/// (`< 0.1`) count as equidistributed; persistently large final discrepancy
/// (`> 0.5`) counts as obstructed; anything else is inconclusive.
pub fn equidist_verdict(rows: &[VerdictRow]) -> Result<EquidistVerdict, EquidistError> {
    if rows.len() < 3 {
        return Err(EquidistError::TooFewRows {
            want: 3,
            got: rows.len(),
        });
    }
    if rows.windows(2).any(|w| w[0].n >= w[1].n) {
        return Err(EquidistError::UnsortedRows);
    }
    let logs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.max_weyl.max(1e-300).ln()))
        .collect();
    let m = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let last = rows.last().unwrap();
    let verdict = if slope <= -0.1 && last.discrepancy < 0.1 {
        Verdict::Equidistributed
    } else if last.discrepancy > 0.5 {
        Verdict::Obstructed
    } else {
        Verdict::Inconclusive
    };
    Ok(EquidistVerdict {
        verdict,
        weyl_slope: slope,
        final_discrepancy: last.discrepancy,
        final_max_weyl: last.max_weyl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvekit::CurveFamily;
    use crate::phase::Dilation;
    use approx::assert_relative_eq;

    fn lattice_1d(n: usize) -> SampleCloud {
        SampleCloud::from_points((0..n).map(|k| vec![k as f64 / n as f64]).collect())
    }

    #[test]
    fn lattice_weyl_sums_detect_divisibility() {
        let cloud = lattice_1d(8);
        assert_relative_eq!(weyl_sum_abs(&cloud, &[8]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(weyl_sum_abs(&cloud, &[16]), 1.0, epsilon = 1e-12);
        assert!(weyl_sum_abs(&cloud, &[3]) < 1e-12);
        assert!(weyl_sum_abs(&cloud, &[1]) < 1e-12);
    }

    #[test]
    fn point_mass_at_origin_has_unit_sums_exactly() {
        let cloud = SampleCloud::from_points(vec![vec![0.0, 0.0]; 17]);
        for h in [[1, 0], [0, 1], [3, -2]] {
            let (re, im) = weyl_sum(&cloud, &h);
            assert_eq!(re, 1.0);
            assert_eq!(im, 0.0);
        }
    }

    #[test]
    fn circle_sum_matches_reference_value() {
        // n = 64 unit dilation, h = (1, 0): |S| = 0.2202769085399344...
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(1), 64).unwrap();
        let cloud = sample_measure(&ev);
        let (re, im) = weyl_sum(&cloud, &[1, 0]);
        assert_relative_eq!(
            re.hypot(im),
            0.220276908539934462276881650721,
            max_relative = 1e-12
        );
        assert!(im.abs() < 1e-12);
    }

    #[test]
    fn mirrored_frequency_conjugates() {
        let fam = CurveFamily::circle();
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(3), 37).unwrap();
        let cloud = sample_measure(&ev);
        let (re, im) = weyl_sum(&cloud, &[2, -1]);
        let (re2, im2) = weyl_sum(&cloud, &[-2, 1]);
        assert_relative_eq!(re, re2, epsilon = 1e-12);
        assert_relative_eq!(im, -im2, epsilon = 1e-12);
    }

    #[test]
    fn pairwise_matches_sequential() {
        let terms: Vec<(f64, f64)> = (0..1000)
            .map(|i| {
                let a = (i as f64 * 0.7).sin();
                (a, a * 0.5 - 0.1)
            })
            .collect();
        let (re, im) = pairwise_complex(&terms);
        let sre: f64 = terms.iter().map(|t| t.0).sum();
        let sim: f64 = terms.iter().map(|t| t.1).sum();
        assert_relative_eq!(re, sre, max_relative = 1e-12);
        assert_relative_eq!(im, sim, max_relative = 1e-12);
    }

    #[test]
    fn report_covers_half_the_box() {
        let cloud = SampleCloud::from_points(vec![vec![0.1, 0.7]; 5]);
        let rep = weyl_report(&cloud, 2);
        assert_eq!(rep.entries.len(), ((5 * 5) - 1) / 2);
        let manual = rep.entries.iter().map(|e| e.abs).fold(0.0, f64::max);
        assert_eq!(rep.max_abs, manual);
    }

    #[test]
    fn uniform_grid_has_zero_discrepancy() {
        let r = 8usize;
        let mut pts = Vec::new();
        for u in 0..r {
            for v in 0..r {
                pts.push(vec![u as f64 / r as f64, v as f64 / r as f64]);
            }
        }
        let cloud = SampleCloud::from_points(pts);
        let d = box_discrepancy(&cloud, r as u32).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn point_mass_discrepancy_is_extremal() {
        let cloud = SampleCloud::from_points(vec![vec![0.0, 0.0]; 10]);
        let d = box_discrepancy(&cloud, 4).unwrap();
        assert_relative_eq!(d, 1.0 - 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn wrapped_boxes_see_concentration_across_the_seam() {
        // all mass within 1/16 of the seam 0 == 1
        let mut pts = Vec::new();
        for _ in 0..8 {
            pts.push(vec![0.96875]);
            pts.push(vec![0.03125]);
        }
        let cloud = SampleCloud::from_points(pts);
        let d = box_discrepancy(&cloud, 16).unwrap();
        // wrapped box [15/16, 17/16) holds everything at volume 1/8
        assert!(d >= 0.875 - 1e-12, "got {d}");
    }

    #[test]
    fn sampled_high_dim_discrepancy_runs() {
        let cloud = SampleCloud::from_points(vec![
            vec![0.1, 0.2, 0.3],
            vec![0.6, 0.7, 0.8],
            vec![0.9, 0.1, 0.5],
            vec![0.4, 0.5, 0.6],
        ]);
        let d = box_discrepancy(&cloud, 8).unwrap();
        assert!(d > 0.0 && d <= 1.0);
    }

    #[test]
    fn verdict_classifies() {
        let good = vec![
            VerdictRow { n: 64, max_weyl: 0.4, discrepancy: 0.3 },
            VerdictRow { n: 256, max_weyl: 0.2, discrepancy: 0.15 },
            VerdictRow { n: 1024, max_weyl: 0.1, discrepancy: 0.05 },
        ];
        let v = equidist_verdict(&good).unwrap();
        assert_eq!(v.verdict, Verdict::Equidistributed);
        assert!(v.weyl_slope < -0.2);

        let bad = vec![
            VerdictRow { n: 64, max_weyl: 0.99, discrepancy: 0.9 },
            VerdictRow { n: 256, max_weyl: 0.99, discrepancy: 0.9 },
            VerdictRow { n: 1024, max_weyl: 0.99, discrepancy: 0.9 },
        ];
        assert_eq!(equidist_verdict(&bad).unwrap().verdict, Verdict::Obstructed);

        let meh = vec![
            VerdictRow { n: 64, max_weyl: 0.5, discrepancy: 0.3 },
            VerdictRow { n: 256, max_weyl: 0.5, discrepancy: 0.3 },
            VerdictRow { n: 1024, max_weyl: 0.5, discrepancy: 0.3 },
        ];
        assert_eq!(
            equidist_verdict(&meh).unwrap().verdict,
            Verdict::Inconclusive
        );
    }

    #[test]
    fn verdict_input_validation() {
        let rows = vec![
            VerdictRow { n: 64, max_weyl: 0.4, discrepancy: 0.3 },
            VerdictRow { n: 256, max_weyl: 0.2, discrepancy: 0.15 },
        ];
        assert!(matches!(
            equidist_verdict(&rows),
            Err(EquidistError::TooFewRows { .. })
        ));
        let unsorted = vec![
            VerdictRow { n: 256, max_weyl: 0.4, discrepancy: 0.3 },
            VerdictRow { n: 64, max_weyl: 0.2, discrepancy: 0.15 },
            VerdictRow { n: 512, max_weyl: 0.1, discrepancy: 0.05 },
        ];
        assert!(matches!(
            equidist_verdict(&unsorted),
            Err(EquidistError::UnsortedRows)
        ));
        let cloud = lattice_1d(4);
        assert!(matches!(
            box_discrepancy(&cloud, 0),
            Err(EquidistError::ZeroResolution)
        ));
    }

    #[test]
    fn exact_zero_cloud_gives_exact_unit_sum() {
        // the all-integer-phase path: every point exactly at the origin
        let fam = CurveFamily::monomial(2);
        let ev = PhaseEvaluator::new(&fam, &[], &Dilation::exact_u64(81), 9).unwrap();
        let cloud = sample_measure(&ev);
        // first coordinate is exactly 0 for all k; second is k^3/9 mod 1
        for p in &cloud.points {
            assert_eq!(p[0], 0.0);
        }
        let (re, im) = weyl_sum(&cloud, &[1, 0]);
        assert_eq!((re, im), (1.0, 0.0));
    }
}
