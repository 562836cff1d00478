//! Table formatting, file outputs and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use pkmkit::jacobian::Tolerances;
use pkmkit::kinetostatics::Factor;
use serde::Serialize;

/// Nine significant digits, trailing zeros dropped.
pub fn sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..=9).contains(&mag) {
        let s = format!("{v:.8e}");
        let (m, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{e}", trim(m));
    }
    let decimals = (8 - mag).max(0) as usize;
    trim(&format!("{v:.decimals$}"))
}

fn trim(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

pub fn factor(f: Factor) -> String {
    match f {
        Factor::Finite(v) => sig(v),
        Factor::Infinite => "inf".into(),
    }
}

pub fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| sig(x)).collect();
    format!("({})", parts.join(", "))
}

pub fn matrix(name: &str, m: &DMatrix<f64>) -> String {
    let cells: Vec<Vec<String>> = m
        .row_iter()
        .map(|r| r.iter().map(|&v| sig(v)).collect())
        .collect();
    let width = cells.iter().flatten().map(|c| c.len()).max().unwrap_or(1);
    let mut out = format!("{name} =\n");
    for row in cells {
        let padded: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        out.push_str(&format!("  [ {} ]\n", padded.join("  ")));
    }
    out
}

/// Records what produced a set of output files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: String,
    pub geometry_hash: String,
    pub tolerances: Tolerances,
    pub outputs: Vec<String>,
    pub version: String,
    pub timestamp_unix: u64,
}

/// Collects written files and emits one manifest next to each.
pub struct Outputs {
    config: String,
    geometry_hash: String,
    tolerances: Tolerances,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(config: &Path, geometry_hash: String, tolerances: Tolerances) -> Self {
        Outputs {
            config: config.display().to_string(),
            geometry_hash,
            tolerances,
            written: Vec::new(),
        }
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, &text)
    }

    pub fn finish(self) -> Result<()> {
        if self.written.is_empty() {
            return Ok(());
        }
        let manifest = RunManifest {
            command: std::env::args().collect(),
            config: self.config,
            geometry_hash: self.geometry_hash,
            tolerances: self.tolerances,
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        for p in &self.written {
            let mut name = p.as_os_str().to_owned();
            name.push(".manifest.json");
            let mp = PathBuf::from(name);
            std::fs::write(&mp, &text).with_context(|| format!("writing {}", mp.display()))?;
        }
        Ok(())
    }
}
