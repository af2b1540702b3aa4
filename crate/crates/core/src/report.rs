//! Machine-readable run artifacts: JSON reports, a deterministic run
//! manifest (config hash, tool version, seeds), and CSV plot data. Nothing
//! here records wall-clock time, so identical runs produce identical bytes.

use crate::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// FNV-1a 64-bit hash of the serialized config, hex-encoded. Stable across
/// platforms; used only to key manifests, not for security.
pub fn config_hash(config_text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in config_text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Run manifest pinning everything needed to reproduce a run bit-for-bit.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub suite: String,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, seed: u64, threads: usize, suite: &str) -> Self {
        Manifest {
            tool: "patternspectra".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(config_text),
            seed,
            threads,
            suite: suite.to_string(),
        }
    }
}

/// Pretty-printed JSON with trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("json encode: {e}")))?;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{s}")?;
    Ok(())
}

/// CSV with a header row; floats use Rust's shortest round-trip formatting,
/// so output is deterministic.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Diagnostic time series rows (t, p, norm) for one labeled series.
pub fn diagnostics_rows(p: f64, series: &[(f64, f64)]) -> Vec<Vec<f64>> {
    series.iter().map(|&(t, v)| vec![t, p, v]).collect()
}

/// One pass/fail line for a check table; returns the pass flag.
pub fn print_check(label: &str, detail: &str, pass: bool) -> bool {
    println!("{} {label}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
