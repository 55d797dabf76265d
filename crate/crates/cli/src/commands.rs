//! One function per subcommand. Every command resolves its settings from
//! flags merged over an optional config file, validates them (exit 2 on
//! violation), computes (exit 3 on failure), and writes a CSV table, a
//! deterministic `summary.json`, and a timestamped `run_meta.json`.

use anyhow::anyhow;
use clap::{Args, Subcommand};
use num::{BigInt, BigRational, One};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use std::path::PathBuf;

use weylab::curvekit::{CurveFamily, OrderEstimate, PairingForm};
use weylab::dioph::{
    bad_dilation_generic, bad_dilation_poly, verify_confinement, verify_nondecay, BadDilation,
    GenericScale, DEFAULT_SCAN_CAP,
};
use weylab::equidist::{
    box_discrepancy, equidist_verdict, sample_measure, weyl_report, Verdict, VerdictRow,
};
use weylab::moments::{fourth_moment, MomentRoute};
use weylab::phase::{integer_power_floor, Dilation, PhaseEvaluator};
use weylab::sublevel::{alpha_fit, sublevel_intervals, PairingField};
use weylab::vdc::{lambda_grid, schedule_sweep};
use weylab::Coeff;

use crate::config::{
    need, parse_f64_list, parse_family, parse_h, parse_n_list, parse_u32_list, parse_x, pick,
    FileConfig, RhoRule,
};
use crate::output::{inputs_hash, join_f64, join_i64, loglog_slope, OutDir};

/// Failure classification behind the exit-code contract: 2 for invalid
/// configuration, 3 for a computation that could not complete.
pub enum Failure {
    Config(anyhow::Error),
    Compute(anyhow::Error),
}

type RunResult = Result<(), Failure>;

fn cfg<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn compute<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Compute(e.into())
}

fn cfg_msg(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(msg.into()))
}

// ---------------------------------------------------------------------------
// Shared argument blocks
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat TOML config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: Option<String>,
    /// Curve family: circle | ellipse | line[:a/b] | sine-line[:a/b] |
    /// monomial:k | @curve-file
    #[arg(long)]
    pub family: Option<String>,
    /// Family parameter point, comma-separated
    #[arg(long)]
    pub x: Option<String>,
}

struct Resolved {
    file: FileConfig,
    out: OutDir,
    family: CurveFamily,
    family_desc: String,
    x: Vec<f64>,
}

fn resolve_common(common: &CommonArgs, default_family: Option<&str>) -> Result<Resolved, Failure> {
    let file = FileConfig::load(common.config.as_deref()).map_err(cfg)?;
    let family_spec = match default_family {
        Some(d) => pick(&common.family, &file.family, d.to_string()),
        None => need(&common.family, &file.family, "family").map_err(cfg)?,
    };
    let (family, family_desc) = parse_family(&family_spec).map_err(cfg)?;
    let x_spec = pick(&common.x, &file.x, String::new());
    let x = parse_x(&x_spec, family.param_dim()).map_err(cfg)?;
    let out = OutDir::create(&pick(&common.out, &file.out, "out".into())).map_err(cfg)?;
    Ok(Resolved {
        file,
        out,
        family,
        family_desc,
        x,
    })
}

fn omega_rational(w: f64) -> Result<BigRational, Failure> {
    if !w.is_finite() {
        return Err(cfg_msg("rotation offset must be finite"));
    }
    BigRational::from_float(w).ok_or_else(|| cfg_msg("rotation offset must be finite"))
}

/// `constructed` dilation rule: families of finite order get the polynomial
/// counterexample dilation (witness frequency and pairing coefficients taken
/// from the order report), everything else the log-scaled generic one.
fn constructed_dilation(
    family: &CurveFamily,
    x: &[f64],
    n: u64,
) -> Result<Dilation, Failure> {
    let report = family.rnd_order(5, 8, 9).map_err(compute)?;
    match (report.order, &report.witness) {
        (OrderEstimate::Finite(k), Some(w)) if k >= 1 => {
            let coeffs = pairing_poly_coeffs(family, x, &w.h, k)?;
            let bad = bad_dilation_poly(&coeffs, k, n, DEFAULT_SCAN_CAP).map_err(compute)?;
            Ok(bad.rho)
        }
        _ => {
            let bad = bad_dilation_generic(family, x, n, GenericScale::LogN).map_err(compute)?;
            Ok(bad.rho)
        }
    }
}

fn resolve_rho(
    rule: &RhoRule,
    family: &CurveFamily,
    x: &[f64],
    n: u64,
    idx: usize,
    count: usize,
) -> Result<Dilation, Failure> {
    match rule {
        RhoRule::Constructed => constructed_dilation(family, x, n),
        other => other.dilation(n, idx, count).map_err(cfg),
    }
}

/// Descending-degree coefficients `a_k .. a_1` of the polynomial pairing
/// `<h, phi>`; the constant term is excluded (it only shifts the global
/// phase).
fn pairing_poly_coeffs(
    family: &CurveFamily,
    x: &[f64],
    h: &[i64],
    kappa: u32,
) -> Result<Vec<Coeff>, Failure> {
    let ps = family.pairing_series(x, h, 0).map_err(compute)?;
    let PairingForm::Poly { terms } = ps.form else {
        return Err(cfg_msg(
            "polynomial dilation construction needs a polynomial pairing; this family is trigonometric",
        ));
    };
    if terms.iter().any(|(deg, c)| *deg > kappa && !c.is_zero()) {
        return Err(cfg_msg(format!(
            "pairing degree exceeds the requested order {kappa}"
        )));
    }
    let mut out = Vec::with_capacity(kappa as usize);
    for deg in (1..=kappa).rev() {
        let c = terms
            .iter()
            .find(|(d, _)| *d == deg)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(Coeff::zero);
        out.push(c);
    }
    Ok(out)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Equidistributed => "equidistributing",
        Verdict::Obstructed => "non-equidistributing",
        Verdict::Inconclusive => "inconclusive",
    }
}

// ---------------------------------------------------------------------------
// weyl
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct WeylArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sample counts: comma list (1e3,1e4) or inclusive range (10..40)
    #[arg(long)]
    pub n: Option<String>,
    /// Dilation rule: poly:c | exact:list | pow2:p/q | constructed
    #[arg(long = "rho-rule")]
    pub rho_rule: Option<String>,
    /// Frequency box radius H (all nonzero h with sup-norm <= H)
    #[arg(long = "h-max")]
    pub h_max: Option<u32>,
    /// Fixed rotation offset (closed families only)
    #[arg(long)]
    pub omega: Option<f64>,
    /// Box-discrepancy grid resolution
    #[arg(long)]
    pub resolution: Option<u32>,
}

pub fn run_weyl(args: &WeylArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let ns = parse_n_list(&need(&args.n, &rc.file.n, "n").map_err(cfg)?).map_err(cfg)?;
    let rule =
        RhoRule::parse(&need(&args.rho_rule, &rc.file.rho_rule, "rho_rule").map_err(cfg)?)
            .map_err(cfg)?;
    let h_max = pick(&args.h_max, &rc.file.h_max, 5);
    if h_max == 0 {
        return Err(cfg_msg("h-max must be >= 1"));
    }
    let resolution = pick(&args.resolution, &rc.file.resolution, 16);
    if resolution < 2 {
        return Err(cfg_msg("resolution must be >= 2"));
    }
    let omega = args.omega.or(rc.file.omega);
    if omega.is_some() && !rc.family.is_closed() {
        return Err(cfg_msg("rotation offsets need a closed (periodic) family"));
    }

    let resolved = json!({
        "command": "weyl",
        "family": rc.family_desc,
        "x": rc.x,
        "n": ns,
        "rho_rule": rule.describe(),
        "h_max": h_max,
        "omega": omega,
        "resolution": resolution,
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv("weyl.csv", &["n", "rho_bits", "h", "abs_S", "discrepancy"])
        .map_err(compute)?;
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let rho = resolve_rho(&rule, &rc.family, &rc.x, n, i, ns.len())?;
        let ev = match omega {
            None => PhaseEvaluator::new(&rc.family, &rc.x, &rho, n as usize),
            Some(w) => PhaseEvaluator::with_offset(
                &rc.family,
                &rc.x,
                &rho,
                n as usize,
                omega_rational(w)?,
            ),
        }
        .map_err(compute)?;
        let cloud = sample_measure(&ev);
        let report = weyl_report(&cloud, h_max);
        let disc = box_discrepancy(&cloud, resolution).map_err(compute)?;
        for e in &report.entries {
            wtr.write_record([
                n.to_string(),
                rho.magnitude_bits().to_string(),
                join_i64(&e.h),
                e.abs.to_string(),
                disc.to_string(),
            ])
            .map_err(compute)?;
        }
        per_n.push(json!({
            "n": n,
            "rho_bits": rho.magnitude_bits(),
            "max_abs": report.max_abs,
            "discrepancy": disc,
        }));
        rows.push(VerdictRow {
            n: n as usize,
            max_weyl: report.max_abs,
            discrepancy: disc,
        });
    }
    wtr.flush().map_err(compute)?;

    let verdict = if rows.len() >= 3 {
        let v = equidist_verdict(&rows).map_err(compute)?;
        json!({
            "status": verdict_name(v.verdict),
            "weyl_slope": v.weyl_slope,
            "final_max_weyl": v.final_max_weyl,
            "final_discrepancy": v.final_discrepancy,
        })
    } else {
        Value::Null
    };
    rc.out
        .write_summary(&json!({
            "command": "weyl",
            "inputs_hash": hash,
            "per_n": per_n,
            "verdict": verdict,
        }))
        .map_err(compute)?;
    rc.out.write_meta("weyl").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// discrepancy
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DiscrepancyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long = "rho-rule")]
    pub rho_rule: Option<String>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub resolution: Option<u32>,
}

pub fn run_discrepancy(args: &DiscrepancyArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let ns = parse_n_list(&need(&args.n, &rc.file.n, "n").map_err(cfg)?).map_err(cfg)?;
    let rule =
        RhoRule::parse(&need(&args.rho_rule, &rc.file.rho_rule, "rho_rule").map_err(cfg)?)
            .map_err(cfg)?;
    let resolution = pick(&args.resolution, &rc.file.resolution, 16);
    if resolution < 2 {
        return Err(cfg_msg("resolution must be >= 2"));
    }
    let omega = args.omega.or(rc.file.omega);
    if omega.is_some() && !rc.family.is_closed() {
        return Err(cfg_msg("rotation offsets need a closed (periodic) family"));
    }

    let resolved = json!({
        "command": "discrepancy",
        "family": rc.family_desc,
        "x": rc.x,
        "n": ns,
        "rho_rule": rule.describe(),
        "omega": omega,
        "resolution": resolution,
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv(
            "discrepancy.csv",
            &["n", "rho_bits", "resolution", "discrepancy"],
        )
        .map_err(compute)?;
    let mut per_n = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let rho = resolve_rho(&rule, &rc.family, &rc.x, n, i, ns.len())?;
        let ev = match omega {
            None => PhaseEvaluator::new(&rc.family, &rc.x, &rho, n as usize),
            Some(w) => PhaseEvaluator::with_offset(
                &rc.family,
                &rc.x,
                &rho,
                n as usize,
                omega_rational(w)?,
            ),
        }
        .map_err(compute)?;
        let cloud = sample_measure(&ev);
        let disc = box_discrepancy(&cloud, resolution).map_err(compute)?;
        wtr.write_record([
            n.to_string(),
            rho.magnitude_bits().to_string(),
            resolution.to_string(),
            disc.to_string(),
        ])
        .map_err(compute)?;
        per_n.push(json!({"n": n, "rho_bits": rho.magnitude_bits(), "discrepancy": disc}));
    }
    wtr.flush().map_err(compute)?;
    rc.out
        .write_summary(&json!({
            "command": "discrepancy",
            "inputs_hash": hash,
            "per_n": per_n,
        }))
        .map_err(compute)?;
    rc.out.write_meta("discrepancy").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rnd-order
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct RndOrderArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "h-max")]
    pub h_max: Option<u32>,
    /// Largest derivative order probed
    #[arg(long = "j-max")]
    pub j_max: Option<u32>,
    /// Parameter-grid points per axis
    #[arg(long = "param-grid")]
    pub param_grid: Option<usize>,
}

fn order_string(o: OrderEstimate) -> String {
    match o {
        OrderEstimate::Finite(k) => k.to_string(),
        OrderEstimate::AtLeast(j) => format!(">={j}"),
    }
}

pub fn run_rnd_order(args: &RndOrderArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let h_max = pick(&args.h_max, &rc.file.h_max, 5);
    let j_max = pick(&args.j_max, &rc.file.j_max, 16);
    let grid = pick(&args.param_grid, &rc.file.param_grid, 17);
    if h_max == 0 || j_max == 0 || grid == 0 {
        return Err(cfg_msg("h-max, j-max and param-grid must be >= 1"));
    }

    let resolved = json!({
        "command": "rnd-order",
        "family": rc.family_desc,
        "h_max": h_max,
        "j_max": j_max,
        "param_grid": grid,
    });
    let hash = inputs_hash(&resolved);

    let report = rc.family.rnd_order(h_max, j_max, grid).map_err(compute)?;
    let mut wtr = rc
        .out
        .csv(
            "rnd_order.csv",
            &[
                "family",
                "h_box",
                "j_max",
                "order",
                "witness_h",
                "witness_j",
                "numerical",
                "next_box_order",
            ],
        )
        .map_err(compute)?;
    let (wh, wj) = match &report.witness {
        Some(w) => (join_i64(&w.h), w.j.to_string()),
        None => (String::new(), String::new()),
    };
    let next = match &report.next_box {
        Some((_, o)) => order_string(*o),
        None => String::new(),
    };
    wtr.write_record([
        rc.family.name().to_string(),
        report.h_box.to_string(),
        j_max.to_string(),
        order_string(report.order),
        wh.clone(),
        wj.clone(),
        report.numerical.to_string(),
        next.clone(),
    ])
    .map_err(compute)?;
    wtr.flush().map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "rnd-order",
            "inputs_hash": hash,
            "order": order_string(report.order),
            "witness_h": wh,
            "witness_j": wj,
            "numerical": report.numerical,
            "next_box_order": next,
        }))
        .map_err(compute)?;
    rc.out.write_meta("rnd-order").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sublevel / alpha-fit
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SublevelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pairing frequency vector (default: first unit vector)
    #[arg(long)]
    pub h: Option<String>,
    /// Derivative order of the probed pairing
    #[arg(long = "deriv-order")]
    pub deriv_order: Option<u32>,
    /// Threshold list, comma-separated
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long = "grid-size")]
    pub grid_size: Option<usize>,
    #[arg(long = "bisect-tol")]
    pub bisect_tol: Option<f64>,
    /// Parameter points per axis when the family has parameters
    #[arg(long = "param-grid")]
    pub param_grid: Option<usize>,
}

fn default_h(dim: usize) -> Vec<i64> {
    let mut h = vec![0i64; dim];
    h[0] = 1;
    h
}

/// Parameter points probed by the sub-level commands: the single empty point
/// for parameter-free families, otherwise cell midpoints of a per-axis grid
/// (these avoid the parameter-space boundary).
fn sublevel_x_grid(rc: &Resolved, per_axis: usize) -> Vec<Vec<f64>> {
    let m = rc.family.param_dim();
    if m == 0 {
        return vec![vec![]];
    }
    if !rc.x.is_empty() {
        return vec![rc.x.clone()];
    }
    let axis: Vec<f64> = (0..per_axis)
        .map(|j| (2 * j + 1) as f64 / (2 * per_axis) as f64)
        .collect();
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::new();
        for g in &grid {
            for &a in &axis {
                let mut v = g.clone();
                v.push(a);
                next.push(v);
            }
        }
        grid = next;
    }
    grid
}

pub fn run_sublevel(args: &SublevelArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let h_spec = pick(&args.h, &rc.file.h, join_i64(&default_h(rc.family.dim())));
    let h = parse_h(&h_spec, rc.family.dim()).map_err(cfg)?;
    let j = pick(&args.deriv_order, &rc.file.deriv_order, 0);
    let deltas =
        parse_f64_list(&need(&args.delta, &rc.file.delta, "delta").map_err(cfg)?, "delta")
            .map_err(cfg)?;
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(cfg_msg("thresholds must be positive"));
    }
    let grid_size = pick(&args.grid_size, &rc.file.grid_size, 4096);
    let tol = pick(&args.bisect_tol, &rc.file.bisect_tol, 1e-12);
    let per_axis = pick(&args.param_grid, &rc.file.param_grid, 5);
    if per_axis == 0 {
        return Err(cfg_msg("param-grid must be >= 1"));
    }
    let xs = sublevel_x_grid(&rc, per_axis);

    let resolved = json!({
        "command": "sublevel",
        "family": rc.family_desc,
        "h": h,
        "deriv_order": j,
        "delta": deltas,
        "grid_size": grid_size,
        "bisect_tol": tol,
        "x_points": xs,
    });
    let hash = inputs_hash(&resolved);

    let field = PairingField::new(rc.family.clone(), h.clone(), j).map_err(cfg)?;
    let mut wtr = rc
        .out
        .csv(
            "sublevel.csv",
            &["x", "delta", "component_count", "complement_measure"],
        )
        .map_err(compute)?;
    let mut profiles = Vec::new();
    let mut max_count = 0usize;
    let mut tangencies = 0usize;
    for x in &xs {
        for &d in &deltas {
            let p = sublevel_intervals(&field, x, d, grid_size, tol).map_err(compute)?;
            wtr.write_record([
                join_f64(x),
                d.to_string(),
                p.component_count.to_string(),
                p.complement_measure.to_string(),
            ])
            .map_err(compute)?;
            max_count = max_count.max(p.component_count);
            tangencies += p.tangency_warning as usize;
            profiles.push(json!({
                "x": x,
                "delta": d,
                "component_count": p.component_count,
                "complement_measure": p.complement_measure,
                "total_measure": p.total_measure,
                "intervals": p.intervals,
                "tangency_warning": p.tangency_warning,
            }));
        }
    }
    wtr.flush().map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "sublevel",
            "inputs_hash": hash,
            "max_component_count": max_count,
            "tangency_warnings": tangencies,
            "profiles": profiles,
        }))
        .map_err(compute)?;
    rc.out.write_meta("sublevel").map_err(compute)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AlphaFitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long = "deriv-order")]
    pub deriv_order: Option<u32>,
    /// Decades spanned by the epsilon grid (1e-1 down to 1e-decades)
    #[arg(long = "eps-decades")]
    pub eps_decades: Option<u32>,
    #[arg(long = "eps-per-decade")]
    pub eps_per_decade: Option<u32>,
    #[arg(long = "grid-size")]
    pub grid_size: Option<usize>,
    #[arg(long = "bisect-tol")]
    pub bisect_tol: Option<f64>,
    #[arg(long = "param-grid")]
    pub param_grid: Option<usize>,
}

pub fn run_alpha_fit(args: &AlphaFitArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let h_spec = pick(&args.h, &rc.file.h, join_i64(&default_h(rc.family.dim())));
    let h = parse_h(&h_spec, rc.family.dim()).map_err(cfg)?;
    let j = pick(&args.deriv_order, &rc.file.deriv_order, 0);
    let decades = pick(&args.eps_decades, &rc.file.eps_decades, 10);
    let per_decade = pick(&args.eps_per_decade, &rc.file.eps_per_decade, 1);
    if decades * per_decade < 6 {
        return Err(cfg_msg("epsilon grid needs at least 6 points"));
    }
    let grid_size = pick(&args.grid_size, &rc.file.grid_size, 4096);
    let tol = pick(&args.bisect_tol, &rc.file.bisect_tol, 1e-12);
    let per_axis = pick(&args.param_grid, &rc.file.param_grid, 5);
    if per_axis == 0 {
        return Err(cfg_msg("param-grid must be >= 1"));
    }
    let xs = sublevel_x_grid(&rc, per_axis);
    let eps: Vec<f64> = (1..=decades * per_decade)
        .map(|k| 10f64.powf(-(k as f64) / per_decade as f64))
        .collect();

    let resolved = json!({
        "command": "alpha-fit",
        "family": rc.family_desc,
        "h": h,
        "deriv_order": j,
        "eps": eps,
        "grid_size": grid_size,
        "bisect_tol": tol,
        "x_points": xs,
    });
    let hash = inputs_hash(&resolved);

    let field = PairingField::new(rc.family.clone(), h.clone(), j).map_err(cfg)?;
    let fit = alpha_fit(&field, &xs, &eps, grid_size, tol).map_err(compute)?;

    let mut wtr = rc
        .out
        .csv(
            "alpha_fit.csv",
            &["x", "epsilon", "delta", "component_count", "complement_measure"],
        )
        .map_err(compute)?;
    for x in &xs {
        for &e in &eps {
            let d = e.powf(fit.alpha_hat);
            let p = sublevel_intervals(&field, x, d, grid_size, tol).map_err(compute)?;
            wtr.write_record([
                join_f64(x),
                e.to_string(),
                d.to_string(),
                p.component_count.to_string(),
                p.complement_measure.to_string(),
            ])
            .map_err(compute)?;
        }
    }
    wtr.flush().map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "alpha-fit",
            "inputs_hash": hash,
            "alpha_hat": fit.alpha_hat,
            "fitted_c": fit.fitted_c,
            "max_component_count": fit.max_component_count,
            "worst_ratio": fit.worst_ratio,
        }))
        .map_err(compute)?;
    rc.out.write_meta("alpha-fit").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// vdc-sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct VdcSweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Largest derivative orders to sweep, comma-separated
    #[arg(long)]
    pub l: Option<String>,
    /// Sample count entering the exponent formulas
    #[arg(long = "schedule-n")]
    pub schedule_n: Option<u64>,
    /// Lower margin of the dilation exponent window (default 1/ln n)
    #[arg(long = "delta-n")]
    pub delta_n: Option<f64>,
    /// Upper margin of the dilation exponent window (default 1/ln n)
    #[arg(long = "eta-n")]
    pub eta_n: Option<f64>,
    /// Sub-level exponents: one value for all orders, or one per order
    #[arg(long)]
    pub alpha: Option<String>,
    /// Grid points across the exponent window
    #[arg(long = "grid-points")]
    pub grid_points: Option<usize>,
}

pub fn run_vdc_sweep(args: &VdcSweepArgs) -> RunResult {
    // no curve family involved; reuse only config/out plumbing
    let file = FileConfig::load(args.common.config.as_deref()).map_err(cfg)?;
    if args.common.family.is_some() || args.common.x.is_some() {
        return Err(cfg_msg("vdc-sweep does not take a curve family"));
    }
    let out = OutDir::create(&pick(&args.common.out, &file.out, "out".into())).map_err(cfg)?;
    let ls = parse_u32_list(&pick(&args.l, &file.l, "2,3,4,5".into()), "l").map_err(cfg)?;
    if ls.iter().any(|&l| l < 2) {
        return Err(cfg_msg("every l must be >= 2"));
    }
    let n = pick(&args.schedule_n, &file.schedule_n, 1000);
    if n < 3 {
        return Err(cfg_msg("schedule-n must be >= 3"));
    }
    let default_margin = 1.0 / (n as f64).ln();
    let delta_n = pick(&args.delta_n, &file.delta_n, default_margin);
    let eta_n = pick(&args.eta_n, &file.eta_n, default_margin);
    let alphas = parse_f64_list(&pick(&args.alpha, &file.alpha, "1".into()), "alpha").map_err(cfg)?;
    let points = pick(&args.grid_points, &file.grid_points, 101);
    if points < 2 {
        return Err(cfg_msg("grid-points must be >= 2"));
    }

    let resolved = json!({
        "command": "vdc-sweep",
        "l": ls,
        "n": n,
        "delta_n": delta_n,
        "eta_n": eta_n,
        "alpha": alphas,
        "grid_points": points,
    });
    let hash = inputs_hash(&resolved);

    let mut per_l = Vec::new();
    let mut all_negative = true;
    for &l in &ls {
        let table: Vec<f64> = if alphas.len() == 1 {
            vec![alphas[0]; (l - 1) as usize]
        } else if alphas.len() == (l - 1) as usize {
            alphas.clone()
        } else {
            return Err(cfg_msg(format!(
                "alpha table has {} entries, l={l} needs 1 or {}",
                alphas.len(),
                l - 1
            )));
        };
        let grid = lambda_grid(l, delta_n, eta_n, points);
        let report = schedule_sweep(l, delta_n, eta_n, &table, n, &grid).map_err(compute)?;
        let mut wtr = out
            .csv(
                &format!("vdc_sweep_l{l}.csv"),
                &["lambda", "j", "nu", "epsilon", "t1", "t2"],
            )
            .map_err(compute)?;
        for row in &report.rows {
            wtr.write_record([
                row.lambda.to_string(),
                row.j.to_string(),
                row.nu.to_string(),
                row.epsilon.to_string(),
                row.t1.to_string(),
                row.t2.to_string(),
            ])
            .map_err(compute)?;
        }
        wtr.flush().map_err(compute)?;
        let negative = report.t1_uniform < 0.0 && report.t2_uniform < 0.0;
        all_negative &= negative;
        per_l.push(json!({
            "l": l,
            "t1_uniform": report.t1_uniform,
            "t2_uniform": report.t2_uniform,
            "max_t1": report.max_t1,
            "max_t2": report.max_t2,
            "uniform_bounds_negative": negative,
        }));
    }

    out.write_summary(&json!({
        "command": "vdc-sweep",
        "inputs_hash": hash,
        "per_l": per_l,
        "all_uniform_bounds_negative": all_negative,
    }))
    .map_err(compute)?;
    out.write_meta("vdc-sweep").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fourth-moment
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct FourthMomentArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<String>,
    /// Dilation exponents tau (rho = n^tau), comma-separated rationals
    #[arg(long)]
    pub tau: Option<String>,
    /// Frequency vector
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long = "node-budget")]
    pub node_budget: Option<usize>,
    /// Quadrature route: auto | trapezoid | expansion
    #[arg(long)]
    pub route: Option<String>,
}

fn parse_route(s: &str) -> Result<MomentRoute, Failure> {
    match s {
        "auto" => Ok(MomentRoute::Auto),
        "trapezoid" => Ok(MomentRoute::Trapezoid),
        "expansion" => Ok(MomentRoute::Expansion),
        other => Err(cfg_msg(format!(
            "unknown route `{other}` (auto, trapezoid, expansion)"
        ))),
    }
}

pub fn run_fourth_moment(args: &FourthMomentArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let ns = parse_n_list(&pick(&args.n, &rc.file.n, "8,16,32,64".into())).map_err(cfg)?;
    let taus_spec = pick(&args.tau, &rc.file.tau, "6".into());
    let taus: Vec<(u32, u32, String)> = taus_spec
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let t = t.trim();
            crate::config::parse_exponent(t).map(|(p, q)| (p, q, t.to_string()))
        })
        .collect::<Result<_, _>>()
        .map_err(cfg)?;
    if taus.is_empty() {
        return Err(cfg_msg("tau list is empty"));
    }
    let h_spec = pick(&args.h, &rc.file.h, join_i64(&default_h(rc.family.dim())));
    let h = parse_h(&h_spec, rc.family.dim()).map_err(cfg)?;
    let budget = pick(&args.node_budget, &rc.file.node_budget, 1 << 22);
    let route = parse_route(&pick(&args.route, &rc.file.route, "auto".into()))?;
    if !rc.family.is_closed() {
        return Err(cfg_msg("fourth moments average over rotations of a closed family"));
    }

    let resolved = json!({
        "command": "fourth-moment",
        "family": rc.family_desc,
        "x": rc.x,
        "n": ns,
        "tau": taus.iter().map(|t| format!("{}/{}", t.0, t.1)).collect::<Vec<_>>(),
        "h": h,
        "node_budget": budget,
        "route": format!("{route:?}"),
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv("fourth_moment.csv", &["n", "tau", "estimate", "slope"])
        .map_err(compute)?;
    let mut per_tau = Vec::new();
    for (p, q, label) in &taus {
        let mut estimates = Vec::new();
        let mut reports = Vec::new();
        for &n in &ns {
            let rho = Dilation::Exact(integer_power_floor(n, *p, *q));
            let rep = fourth_moment(&rc.family, &rc.x, &rho, n as usize, &h, budget, route)
                .map_err(compute)?;
            estimates.push(rep.estimate);
            reports.push(rep);
        }
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let slope = loglog_slope(&xs, &estimates);
        for (i, &n) in ns.iter().enumerate() {
            wtr.write_record([
                n.to_string(),
                label.clone(),
                estimates[i].to_string(),
                slope.to_string(),
            ])
            .map_err(compute)?;
        }
        per_tau.push(json!({
            "tau": label,
            "slope": slope,
            "rows": reports.iter().map(|r| json!({
                "n": r.n,
                "rho_bits": r.rho_bits,
                "estimate": r.estimate,
                "node_count": r.node_count,
                "quadrature_error_estimate": r.quadrature_error_estimate,
                "route": format!("{:?}", r.route),
            })).collect::<Vec<_>>(),
        }));
    }
    wtr.flush().map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "fourth-moment",
            "inputs_hash": hash,
            "per_tau": per_tau,
        }))
        .map_err(compute)?;
    rc.out.write_meta("fourth-moment").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bad-dilation
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum BadDilationCmd {
    /// Polynomial-pairing counterexample dilations with non-decay checks
    Poly(BadPolyArgs),
    /// Log-scaled generic counterexample dilations with confinement checks
    Generic(BadGenericArgs),
}

#[derive(Debug, Args)]
pub struct BadPolyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<String>,
    /// Pairing degree (default: from the family order report)
    #[arg(long)]
    pub kappa: Option<u32>,
    /// Witness frequency (default: from the family order report)
    #[arg(long)]
    pub h: Option<String>,
    /// Non-decay acceptance level for |S_n|
    #[arg(long)]
    pub c0: Option<f64>,
    /// Denominator scan cap
    #[arg(long)]
    pub cap: Option<u64>,
}

fn certificates_json(bads: &[BadDilation]) -> Result<String, Failure> {
    let vals: Vec<Value> = bads
        .iter()
        .map(|b| serde_json::from_str(&b.certificate_json()))
        .collect::<Result<_, _>>()
        .map_err(compute)?;
    serde_json::to_string_pretty(&Value::Array(vals))
        .map(|s| s + "\n")
        .map_err(compute)
}

pub fn run_bad_poly(args: &BadPolyArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let ns = parse_n_list(&need(&args.n, &rc.file.n, "n").map_err(cfg)?).map_err(cfg)?;
    let c0 = pick(&args.c0, &rc.file.c0, 0.5);
    let cap = pick(&args.cap, &rc.file.cap, DEFAULT_SCAN_CAP);
    let kappa_flag = args.kappa.or(rc.file.kappa);
    let h_flag = match &pick(&args.h, &rc.file.h, String::new()) {
        s if s.is_empty() => None,
        s => Some(parse_h(s, rc.family.dim()).map_err(cfg)?),
    };
    let (kappa, h) = match (kappa_flag, h_flag) {
        (Some(k), Some(h)) => (k, h),
        (k, h) => {
            let report = rc.family.rnd_order(5, 8, 9).map_err(compute)?;
            let (OrderEstimate::Finite(found), Some(w)) = (report.order, report.witness) else {
                return Err(cfg_msg(
                    "family shows no finite-order witness; pass --kappa and --h explicitly",
                ));
            };
            (k.unwrap_or(found), h.unwrap_or(w.h))
        }
    };
    if kappa == 0 {
        return Err(cfg_msg("kappa must be >= 1"));
    }
    let coeffs = pairing_poly_coeffs(&rc.family, &rc.x, &h, kappa)?;

    let resolved = json!({
        "command": "bad-dilation poly",
        "family": rc.family_desc,
        "x": rc.x,
        "n": ns,
        "kappa": kappa,
        "h": h,
        "c0": c0,
        "cap": cap,
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv(
            "bad_dilation_poly.csv",
            &[
                "n",
                "kappa",
                "q_scanned",
                "rho_tilde",
                "rho_bits",
                "max_error",
                "abs_S",
                "max_delta",
                "pass",
            ],
        )
        .map_err(compute)?;
    let mut bads = Vec::new();
    let mut all_pass = true;
    let mut bounds_ok = true;
    let mut errors_ok = true;
    let mut min_abs_s = f64::INFINITY;
    let mut max_delta = 0.0f64;
    for &n in &ns {
        let bad = bad_dilation_poly(&coeffs, kappa, n, cap).map_err(compute)?;
        let nd = verify_nondecay(&rc.family, &rc.x, &h, &bad, c0).map_err(compute)?;
        let max_err = bad.certificate.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        // dilation window n^kappa <= rho <= n^((kappa+1)^2), exact integers
        if let Dilation::Exact(v) = &bad.rho {
            let lo = BigInt::from(n).pow(kappa);
            let hi = BigInt::from(n).pow((kappa + 1) * (kappa + 1));
            bounds_ok &= &lo <= v && v <= &hi;
        }
        let err_bound = (n as f64).powf(-(kappa as f64 + 1.0 / kappa as f64));
        errors_ok &= max_err <= err_bound * (1.0 + 1e-12);
        wtr.write_record([
            n.to_string(),
            kappa.to_string(),
            bad.scanned.to_string(),
            bad.rho_tilde.to_string(),
            bad.rho.magnitude_bits().to_string(),
            max_err.to_string(),
            nd.abs_s.to_string(),
            nd.max_delta.to_string(),
            nd.pass.to_string(),
        ])
        .map_err(compute)?;
        all_pass &= nd.pass;
        min_abs_s = min_abs_s.min(nd.abs_s);
        max_delta = max_delta.max(nd.max_delta);
        bads.push(bad);
    }
    wtr.flush().map_err(compute)?;
    rc.out
        .write_text("certificates.json", &certificates_json(&bads)?)
        .map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "bad-dilation poly",
            "inputs_hash": hash,
            "kappa": kappa,
            "h": h,
            "all_pass": all_pass,
            "min_abs_S": min_abs_s,
            "max_delta": max_delta,
            "dilation_window_ok": bounds_ok,
            "certificate_errors_ok": errors_ok,
        }))
        .map_err(compute)?;
    rc.out.write_meta("bad-dilation poly").map_err(compute)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct BadGenericArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<String>,
    /// Confinement radius checked on the sample cloud
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub resolution: Option<u32>,
}

pub fn run_bad_generic(args: &BadGenericArgs) -> RunResult {
    let rc = resolve_common(&args.common, None)?;
    let ns = parse_n_list(&need(&args.n, &rc.file.n, "n").map_err(cfg)?).map_err(cfg)?;
    let radius = pick(&args.radius, &rc.file.radius, 1.0 / 3.0);
    if !(radius > 0.0 && radius < 0.5) {
        return Err(cfg_msg("radius must lie in (0, 1/2)"));
    }
    let resolution = pick(&args.resolution, &rc.file.resolution, 12);
    if resolution < 2 {
        return Err(cfg_msg("resolution must be >= 2"));
    }

    let resolved = json!({
        "command": "bad-dilation generic",
        "family": rc.family_desc,
        "x": rc.x,
        "n": ns,
        "radius": radius,
        "resolution": resolution,
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv(
            "bad_dilation_generic.csv",
            &[
                "n",
                "dim",
                "q_scanned",
                "rho_bits",
                "max_error",
                "soft_bound_ok",
                "confined",
                "max_distance",
                "discrepancy",
            ],
        )
        .map_err(compute)?;
    let mut bads = Vec::new();
    let mut all_confined = true;
    let mut min_disc = f64::INFINITY;
    for &n in &ns {
        let bad =
            bad_dilation_generic(&rc.family, &rc.x, n, GenericScale::LogN).map_err(compute)?;
        let ev =
            PhaseEvaluator::new(&rc.family, &rc.x, &bad.rho, n as usize).map_err(compute)?;
        let cloud = sample_measure(&ev);
        let conf = verify_confinement(&cloud, radius).map_err(compute)?;
        let disc = box_discrepancy(&cloud, resolution).map_err(compute)?;
        let max_err = bad.certificate.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        wtr.write_record([
            n.to_string(),
            rc.family.dim().to_string(),
            bad.scanned.to_string(),
            bad.rho.magnitude_bits().to_string(),
            max_err.to_string(),
            bad.soft_bound_ok.map(|b| b.to_string()).unwrap_or_default(),
            conf.confined.to_string(),
            conf.max_distance.to_string(),
            disc.to_string(),
        ])
        .map_err(compute)?;
        all_confined &= conf.confined;
        min_disc = min_disc.min(disc);
        bads.push(bad);
    }
    wtr.flush().map_err(compute)?;
    rc.out
        .write_text("certificates.json", &certificates_json(&bads)?)
        .map_err(compute)?;

    rc.out
        .write_summary(&json!({
            "command": "bad-dilation generic",
            "inputs_hash": hash,
            "radius": radius,
            "all_confined": all_confined,
            "min_discrepancy": min_disc,
        }))
        .map_err(compute)?;
    rc.out.write_meta("bad-dilation generic").map_err(compute)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rotations
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct RotationsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Single sample count
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long = "rho-rule")]
    pub rho_rule: Option<String>,
    #[arg(long = "h-max")]
    pub h_max: Option<u32>,
    /// Monte-Carlo draws of the rotation offset
    #[arg(long)]
    pub draws: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Equidistribution acceptance level for max |S_n|
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Sample count for the constructed-dilation contrast (0 disables)
    #[arg(long = "contrast-n")]
    pub contrast_n: Option<u64>,
}

pub fn run_rotations(args: &RotationsArgs) -> RunResult {
    let rc = resolve_common(&args.common, Some("circle"))?;
    if !rc.family.is_closed() {
        return Err(cfg_msg("rotation experiments need a closed (periodic) family"));
    }
    let ns = parse_n_list(&pick(&args.n, &rc.file.n, "200".into())).map_err(cfg)?;
    if ns.len() != 1 {
        return Err(cfg_msg("rotations takes a single sample count"));
    }
    let n = ns[0];
    let rule = RhoRule::parse(&pick(&args.rho_rule, &rc.file.rho_rule, "pow2:1/2".into()))
        .map_err(cfg)?;
    if matches!(rule, RhoRule::Constructed) {
        return Err(cfg_msg(
            "rotations needs a concrete dilation; use bad-dilation for constructed ones",
        ));
    }
    let rho = rule.dilation(n, 0, 1).map_err(cfg)?;
    let h_max = pick(&args.h_max, &rc.file.h_max, 1);
    if h_max == 0 {
        return Err(cfg_msg("h-max must be >= 1"));
    }
    let draws = pick(&args.draws, &rc.file.draws, 256);
    if draws == 0 {
        return Err(cfg_msg("draws must be >= 1"));
    }
    let seed = pick(&args.seed, &rc.file.seed, 7);
    let threshold = pick(&args.threshold, &rc.file.threshold, 0.2);
    if !(threshold > 0.0) {
        return Err(cfg_msg("threshold must be positive"));
    }
    let contrast_n = pick(&args.contrast_n, &rc.file.contrast_n, 6);

    let resolved = json!({
        "command": "rotations",
        "family": rc.family_desc,
        "x": rc.x,
        "n": n,
        "rho_rule": rule.describe(),
        "h_max": h_max,
        "draws": draws,
        "seed": seed,
        "threshold": threshold,
        "contrast_n": contrast_n,
    });
    let hash = inputs_hash(&resolved);

    let mut wtr = rc
        .out
        .csv("rotations.csv", &["draw", "omega", "max_abs"])
        .map_err(compute)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut within = 0u32;
    for draw in 0..draws {
        let w: f64 = rng.gen();
        let ev = PhaseEvaluator::with_offset(
            &rc.family,
            &rc.x,
            &rho,
            n as usize,
            BigRational::from_float(w).unwrap_or_else(BigRational::one),
        )
        .map_err(compute)?;
        let cloud = sample_measure(&ev);
        let report = weyl_report(&cloud, h_max);
        if report.max_abs <= threshold {
            within += 1;
        }
        wtr.write_record([draw.to_string(), w.to_string(), report.max_abs.to_string()])
            .map_err(compute)?;
    }
    wtr.flush().map_err(compute)?;
    let fraction = within as f64 / draws as f64;

    let contrast = if contrast_n >= 2
        && rc.family.dim() as u64 * contrast_n <= 20
    {
        let bad = bad_dilation_generic(&rc.family, &rc.x, contrast_n, GenericScale::LogN)
            .map_err(compute)?;
        let ev = PhaseEvaluator::new(&rc.family, &rc.x, &bad.rho, contrast_n as usize)
            .map_err(compute)?;
        let cloud = sample_measure(&ev);
        let conf = verify_confinement(&cloud, 1.0 / 3.0).map_err(compute)?;
        let disc = box_discrepancy(&cloud, 12).map_err(compute)?;
        json!({
            "n": contrast_n,
            "rho_bits": bad.rho.magnitude_bits(),
            "confined": conf.confined,
            "max_distance": conf.max_distance,
            "discrepancy": disc,
        })
    } else {
        Value::Null
    };

    rc.out
        .write_summary(&json!({
            "command": "rotations",
            "inputs_hash": hash,
            "n": n,
            "rho_bits": rho.magnitude_bits(),
            "draws": draws,
            "seed": seed,
            "threshold": threshold,
            "fraction_within": fraction,
            "contrast": contrast,
        }))
        .map_err(compute)?;
    rc.out.write_meta("rotations").map_err(compute)?;
    Ok(())
}
