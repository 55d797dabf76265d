//! Artifact writing: CSV tables, the deterministic `summary.json`, and the
//! separate (timestamped, non-deterministic) `run_meta.json`.

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn create(path: &str) -> Result<Self> {
        let path = PathBuf::from(path);
        fs::create_dir_all(&path)
            .with_context(|| format!("creating output directory {}", path.display()))?;
        Ok(OutDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Open `name` and write the header row. RFC-4180-style quoting is the
    /// `csv` crate default.
    pub fn csv(&self, name: &str, header: &[&str]) -> Result<csv::Writer<File>> {
        let p = self.file(name);
        let mut w = csv::Writer::from_path(&p)
            .with_context(|| format!("creating {}", p.display()))?;
        w.write_record(header)?;
        Ok(w)
    }

    /// `summary.json`: everything here must be a pure function of the
    /// resolved inputs, so re-runs are byte-identical.
    pub fn write_summary(&self, summary: &Value) -> Result<()> {
        let p = self.file("summary.json");
        let text = serde_json::to_string_pretty(summary)?;
        fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }

    /// `run_meta.json`: wall-clock metadata, deliberately kept out of the
    /// deterministic artifacts.
    pub fn write_meta(&self, command: &str) -> Result<()> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = json!({
            "command": command,
            "unix_time": now,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let p = self.file("run_meta.json");
        fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form of the resolved inputs. `serde_json`
/// objects iterate in sorted key order, so the serialization is canonical.
pub fn inputs_hash(resolved: &Value) -> String {
    let text = serde_json::to_string(resolved).expect("resolved inputs serialize");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Least-squares slope of `ln y` against `ln x`; NaN-safe for positive data.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

pub fn join_i64(v: &[i64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

pub fn join_f64(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}
