//! Config-file loading and the small parsers shared by every subcommand.
//!
//! A config file is flat TOML whose keys mirror the long flags; a flag given
//! on the command line always wins over the file value.

use anyhow::{anyhow, bail, Context, Result};
use num::BigInt;
use serde::Deserialize;
use std::fs;
use std::path::Path;
use weylab::curvekit::CurveFamily;
use weylab::phase::{integer_power_floor, Dilation};
use weylab::Coeff;

/// Every recognized file key. One flat namespace keeps configs reusable
/// across subcommands; unknown keys are rejected so typos surface as config
/// errors instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub family: Option<String>,
    pub x: Option<String>,
    pub n: Option<String>,
    pub rho_rule: Option<String>,
    pub h: Option<String>,
    pub h_max: Option<u32>,
    pub omega: Option<f64>,
    pub resolution: Option<u32>,
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub draws: Option<u32>,
    pub threshold: Option<f64>,
    pub contrast_n: Option<u64>,
    pub delta: Option<String>,
    pub deriv_order: Option<u32>,
    pub grid_size: Option<usize>,
    pub bisect_tol: Option<f64>,
    pub eps_decades: Option<u32>,
    pub eps_per_decade: Option<u32>,
    pub j_max: Option<u32>,
    pub param_grid: Option<usize>,
    pub l: Option<String>,
    pub schedule_n: Option<u64>,
    pub delta_n: Option<f64>,
    pub eta_n: Option<f64>,
    pub alpha: Option<String>,
    pub grid_points: Option<usize>,
    pub tau: Option<String>,
    pub node_budget: Option<usize>,
    pub route: Option<String>,
    pub kappa: Option<u32>,
    pub c0: Option<f64>,
    pub cap: Option<u64>,
    pub radius: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

/// Flag value if present, else file value, else the built-in default.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// Flag value if present, else file value, else an error naming the key.
pub fn need<T: Clone>(flag: &Option<T>, file: &Option<T>, key: &str) -> Result<T> {
    flag.clone()
        .or_else(|| file.clone())
        .ok_or_else(|| anyhow!("missing required setting `{key}` (flag or config file)"))
}

// ---------------------------------------------------------------------------
// Curve family specs
// ---------------------------------------------------------------------------

/// Resolve a family spec: a builtin name (`circle`, `ellipse`, `line[:a/b]`,
/// `sine-line[:a/b]`, `monomial:k`) or `@path` pointing at a curve config
/// file. Returns the family plus a canonical description used for hashing.
pub fn parse_family(spec: &str) -> Result<(CurveFamily, String)> {
    if let Some(path) = spec.strip_prefix('@') {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading curve file {path}"))?;
        let fam = CurveFamily::from_config_str(&text)
            .map_err(|e| anyhow!("curve file {path}: {e}"))?;
        return Ok((fam, format!("file:{text}")));
    }
    let (head, arg) = match spec.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (spec, None),
    };
    let slope = |arg: Option<&str>| -> Result<Coeff> {
        match arg {
            None => Ok(Coeff::sqrt_int(2)),
            Some(s) => {
                let (p, q) = parse_ratio(s)?;
                Ok(Coeff::from_ratio(p, q))
            }
        }
    };
    let fam = match head {
        "circle" => CurveFamily::circle(),
        "ellipse" => CurveFamily::ellipse(),
        "line" => CurveFamily::line(slope(arg)?),
        "sine-line" => CurveFamily::sine_line(slope(arg)?),
        "monomial" => {
            let k: u32 = arg
                .ok_or_else(|| anyhow!("monomial needs a degree, e.g. monomial:2"))?
                .parse()
                .context("monomial degree")?;
            if k == 0 {
                bail!("monomial degree must be >= 1");
            }
            CurveFamily::monomial(k)
        }
        other => bail!(
            "unknown family `{other}` (expected circle, ellipse, line, sine-line, monomial:k or @file)"
        ),
    };
    Ok((fam, spec.to_string()))
}

fn parse_ratio(s: &str) -> Result<(i64, i64)> {
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().context("ratio numerator")?;
            let q: i64 = q.trim().parse().context("ratio denominator")?;
            if q == 0 {
                bail!("ratio denominator is zero");
            }
            Ok((p, q))
        }
        None => Ok((s.trim().parse::<i64>().context("ratio")?, 1)),
    }
}

// ---------------------------------------------------------------------------
// Numeric lists
// ---------------------------------------------------------------------------

/// Sample-count lists: either `a..b` (inclusive) or a comma list whose items
/// may use scientific notation (`1e3`). Must be non-empty and strictly
/// increasing.
pub fn parse_n_list(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let list: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().context("range start")?;
        let b = b.trim().trim_start_matches('=');
        let b: u64 = b.parse().context("range end")?;
        if a > b {
            bail!("empty range {a}..{b}");
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(parse_count)
            .collect::<Result<_>>()?
    };
    if list.is_empty() {
        bail!("sample-count list is empty");
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("sample-count list must be strictly increasing");
    }
    if list[0] == 0 {
        bail!("sample counts must be >= 1");
    }
    Ok(list)
}

fn parse_count(tok: &str) -> Result<u64> {
    let t = tok.trim();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = t.parse().with_context(|| format!("sample count `{t}`"))?;
    if !(f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= 2f64.powi(53)) {
        bail!("sample count `{t}` is not a non-negative integer");
    }
    Ok(f as u64)
}

pub fn parse_f64_list(s: &str, key: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("{key} item `{t}`")))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        bail!("{key} list is empty");
    }
    Ok(v)
}

pub fn parse_u32_list(s: &str, key: &str) -> Result<Vec<u32>> {
    let v: Vec<u32> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u32>().with_context(|| format!("{key} item `{t}`")))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        bail!("{key} list is empty");
    }
    Ok(v)
}

/// Frequency vectors like `1,0` or `-2;3` (both separators accepted).
pub fn parse_h(s: &str, dim: usize) -> Result<Vec<i64>> {
    let v: Vec<i64> = s
        .split([',', ';'])
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<i64>().with_context(|| format!("frequency item `{t}`")))
        .collect::<Result<_>>()?;
    if v.len() != dim {
        bail!("frequency vector has {} entries, family dimension is {dim}", v.len());
    }
    if v.iter().all(|&c| c == 0) {
        bail!("frequency vector must be nonzero");
    }
    Ok(v)
}

/// Parameter points like `0.25` or `0.1,0.9`; empty string means no
/// parameters.
pub fn parse_x(s: &str, param_dim: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("parameter item `{t}`")))
        .collect::<Result<_>>()?;
    if v.len() != param_dim {
        bail!("parameter point has {} entries, family takes {param_dim}", v.len());
    }
    if v.iter().any(|c| !c.is_finite()) {
        bail!("parameter values must be finite");
    }
    Ok(v)
}

/// A non-negative rational exponent written as `p/q`, an integer, or a short
/// decimal (`1.5` -> `3/2`).
pub fn parse_exponent(s: &str) -> Result<(u32, u32)> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: u32 = p.trim().parse().context("exponent numerator")?;
        let q: u32 = q.trim().parse().context("exponent denominator")?;
        if q == 0 {
            bail!("exponent denominator is zero");
        }
        return Ok(reduce(p, q));
    }
    if let Ok(p) = s.parse::<u32>() {
        return Ok((p, 1));
    }
    match s.split_once('.') {
        Some((int, frac)) if !frac.is_empty() && frac.len() <= 6 => {
            let scale = 10u32.pow(frac.len() as u32);
            let int: u32 = if int.is_empty() { 0 } else { int.parse().context("exponent")? };
            let frac: u32 = frac.parse().context("exponent")?;
            let p = int
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac))
                .ok_or_else(|| anyhow!("exponent `{s}` too large"))?;
            Ok(reduce(p, scale))
        }
        _ => bail!("cannot parse exponent `{s}`"),
    }
}

fn reduce(p: u32, q: u32) -> (u32, u32) {
    let g = num::integer::gcd(p, q).max(1);
    (p / g, q / g)
}

// ---------------------------------------------------------------------------
// Dilation rules
// ---------------------------------------------------------------------------

/// How the dilation is chosen per sample count.
#[derive(Debug, Clone)]
pub enum RhoRule {
    /// `floor(n^{p/q})`, exact integer
    Poly { p: u32, q: u32 },
    /// explicit integer list, one per `n`
    Exact(Vec<BigInt>),
    /// `floor(2^{n p/q})`, exact integer
    Pow2 { p: u32, q: u32 },
    /// delegate to the counterexample constructors
    Constructed,
}

impl RhoRule {
    pub fn parse(s: &str) -> Result<RhoRule> {
        let s = s.trim();
        if s == "constructed" {
            return Ok(RhoRule::Constructed);
        }
        let (head, arg) = s
            .split_once(':')
            .ok_or_else(|| anyhow!("cannot parse rho rule `{s}`"))?;
        match head {
            "poly" => {
                let (p, q) = parse_exponent(arg)?;
                Ok(RhoRule::Poly { p, q })
            }
            "pow2" => {
                let (p, q) = parse_exponent(arg)?;
                Ok(RhoRule::Pow2 { p, q })
            }
            "exact" => {
                let vals: Vec<BigInt> = arg
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| {
                        t.trim()
                            .parse::<BigInt>()
                            .with_context(|| format!("exact dilation `{t}`"))
                    })
                    .collect::<Result<_>>()?;
                if vals.is_empty() {
                    bail!("exact dilation list is empty");
                }
                Ok(RhoRule::Exact(vals))
            }
            other => bail!("unknown rho rule `{other}` (poly:c, exact:list, pow2:p/q, constructed)"),
        }
    }

    /// The dilation for the `idx`-th entry of the n list. `Constructed` is
    /// resolved by the caller (it needs the family) and is rejected here.
    pub fn dilation(&self, n: u64, idx: usize, n_count: usize) -> Result<Dilation> {
        match self {
            RhoRule::Poly { p, q } => Ok(Dilation::Exact(integer_power_floor(n, *p, *q))),
            RhoRule::Pow2 { p, q } => {
                let np = (n as u32)
                    .checked_mul(*p)
                    .ok_or_else(|| anyhow!("pow2 exponent overflow at n={n}"))?;
                Ok(Dilation::Exact(integer_power_floor(2, np, *q)))
            }
            RhoRule::Exact(list) => {
                if list.len() != n_count {
                    bail!(
                        "exact dilation list has {} entries for {} sample counts",
                        list.len(),
                        n_count
                    );
                }
                Ok(Dilation::Exact(list[idx].clone()))
            }
            RhoRule::Constructed => bail!("constructed rho rule not resolved"),
        }
    }

    /// Canonical text used in the inputs hash.
    pub fn describe(&self) -> String {
        match self {
            RhoRule::Poly { p, q } => format!("poly:{p}/{q}"),
            RhoRule::Pow2 { p, q } => format!("pow2:{p}/{q}"),
            RhoRule::Exact(v) => format!(
                "exact:{}",
                v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
            ),
            RhoRule::Constructed => "constructed".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_lists_parse_and_validate() {
        assert_eq!(parse_n_list("1e3,1e4").unwrap(), vec![1000, 10000]);
        assert_eq!(parse_n_list("10..12").unwrap(), vec![10, 11, 12]);
        assert_eq!(parse_n_list("10..=12").unwrap(), vec![10, 11, 12]);
        assert!(parse_n_list("").is_err());
        assert!(parse_n_list("5,5").is_err());
        assert!(parse_n_list("8,4").is_err());
        assert!(parse_n_list("1.5").is_err());
    }

    #[test]
    fn exponents_reduce() {
        assert_eq!(parse_exponent("1.5").unwrap(), (3, 2));
        assert_eq!(parse_exponent("2").unwrap(), (2, 1));
        assert_eq!(parse_exponent("6/4").unwrap(), (3, 2));
        assert!(parse_exponent("x").is_err());
        assert!(parse_exponent("1/0").is_err());
    }

    #[test]
    fn rho_rules_produce_exact_integers() {
        let r = RhoRule::parse("poly:1.5").unwrap();
        match r.dilation(100, 0, 1).unwrap() {
            Dilation::Exact(v) => assert_eq!(v, BigInt::from(1000)),
            other => panic!("unexpected {other:?}"),
        }
        let r = RhoRule::parse("pow2:1/2").unwrap();
        match r.dilation(9, 0, 1).unwrap() {
            // floor(2^4.5) = 22
            Dilation::Exact(v) => assert_eq!(v, BigInt::from(22)),
            other => panic!("unexpected {other:?}"),
        }
        let r = RhoRule::parse("exact:7,9").unwrap();
        assert!(r.dilation(4, 0, 1).is_err()); // list length mismatch
        match r.dilation(4, 1, 2).unwrap() {
            Dilation::Exact(v) => assert_eq!(v, BigInt::from(9)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn family_specs_resolve() {
        let (fam, _) = parse_family("circle").unwrap();
        assert_eq!(fam.dim(), 2);
        let (fam, _) = parse_family("monomial:3").unwrap();
        assert_eq!(fam.dim(), 2);
        assert!(parse_family("monomial").is_err());
        assert!(parse_family("klein-bottle").is_err());
        let (fam, _) = parse_family("line:3/2").unwrap();
        assert!(!fam.is_closed());
    }

    #[test]
    fn frequency_and_parameter_vectors_check_dims() {
        assert_eq!(parse_h("1;0", 2).unwrap(), vec![1, 0]);
        assert!(parse_h("0,0", 2).is_err());
        assert!(parse_h("1", 2).is_err());
        assert_eq!(parse_x("", 0).unwrap(), Vec::<f64>::new());
        assert!(parse_x("0.5", 0).is_err());
        assert!(parse_x("nan", 1).is_err());
    }
}
