//! Shared CLI plumbing: value-range parsing, provenance sidecars, CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parse `start:step:end` (inclusive end, within tolerance) or a comma list.
pub fn parse_values(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("cannot parse value list '{spec}'"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].parse().map_err(|_| bad())?;
        let step: f64 = parts[1].parse().map_err(|_| bad())?;
        let end: f64 = parts[2].parse().map_err(|_| bad())?;
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(CliError::Usage(format!(
                "range '{spec}' needs a positive step and end ≥ start"
            )));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    } else {
        spec.split(',')
            .map(|tok| tok.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

/// Parse `lo:hi:count` into a histogram bin spec.
pub fn parse_bins(spec: &str) -> CliResult<crate::metrics::BinSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("cannot parse bin spec '{spec}' (expected lo:hi:count)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let bins = crate::metrics::BinSpec {
        lo: parts[0].parse().map_err(|_| bad())?,
        hi: parts[1].parse().map_err(|_| bad())?,
        count: parts[2].parse().map_err(|_| bad())?,
    };
    bins.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(bins)
}

/// FNV-1a 64-bit hash, used to fingerprint configurations in sidecars.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Provenance sidecar written next to every data artifact as `<file>.json`.
pub struct Sidecar<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config: Value,
    pub extra: Value,
}

impl Sidecar<'_> {
    pub fn write_for(&self, artifact: &Path) -> CliResult<()> {
        let config_text = serde_json::to_string(&self.config).map_err(crate::Error::from)?;
        let body = json!({
            "tool": "twise",
            "version": TOOL_VERSION,
            "command": self.command,
            "file": artifact.file_name().and_then(|n| n.to_str()).unwrap_or_default(),
            "seed": self.seed,
            "config_hash": format!("fnv1a64:{:016x}", fnv1a64(config_text.as_bytes())),
            "config": self.config,
            "stats": self.extra,
        });
        let path = sidecar_path(artifact);
        let text = serde_json::to_string_pretty(&body).map_err(crate::Error::from)?;
        fs::write(path, text + "\n").map_err(crate::Error::from)?;
        Ok(())
    }
}

pub fn sidecar_path(artifact: &Path) -> std::path::PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".json");
    std::path::PathBuf::from(name)
}

/// Write text to a file, or stdout when no path is given.
pub fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(crate::Error::from)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Serialize a value as pretty JSON with a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(crate::Error::from)?;
    text.push('\n');
    Ok(text)
}

/// Format a loss-trace CSV.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        let v = parse_values("-2:0.5:2").unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], -2.0);
        assert_eq!(v[8], 2.0);
        assert_eq!(parse_values("0.1,0.5,0.9").unwrap(), vec![0.1, 0.5, 0.9]);
        assert!(parse_values("a:b:c").is_err());
        assert!(parse_values("2:-1:0").is_err());
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
