//! Run artifacts: JSON reports with provenance, CSV exports, and merging of
//! reports into a single verdict document.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stability::{stability_verdict, CheckResult, MeasureEstimate, OmegaOrbit, StabilityVerdict};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: Option<String>,
    /// Input config as parsed plus every command-line override.
    pub resolved_config: Value,
    pub seed: Option<u64>,
    pub derived_seed: Option<u64>,
    pub network_fingerprint: Option<String>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance {
            tool: "hetnet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: None,
            resolved_config: Value::Null,
            seed: None,
            derived_seed: None,
            network_fingerprint: None,
        }
    }

    /// One-line summary used as the first line of CSV exports.
    pub fn csv_comment(&self) -> String {
        let mut s = format!("# {} {} command={}", self.tool, self.version, self.command);
        if let Some(h) = &self.config_sha256 {
            let _ = write!(s, " config_sha256={h}");
        }
        if let Some(seed) = self.seed {
            let _ = write!(s, " seed={seed}");
        }
        if let Some(fp) = &self.network_fingerprint {
            let _ = write!(s, " network={fp}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub checks: Vec<CheckResult>,
    pub result: Value,
    /// File names of CSVs written next to the report.
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(provenance: Provenance) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance,
            checks: Vec::new(),
            result: Value::Null,
            artifacts: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// CSV text: provenance comment, header, rows.
pub fn csv_text(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = prov.csv_comment();
    s.push('\n');
    s.push_str(&header.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub const MEASURE_HEADER: [&str; 8] = ["node", "eps", "delta", "ratio", "half_width", "bound", "n", "seed"];
pub const OMEGA_HEADER: [&str; 4] = ["loop", "x_norm", "wedge_defect", "dist_to_y_plus"];

pub fn measure_rows(estimates: &[MeasureEstimate]) -> Vec<Vec<String>> {
    estimates
        .iter()
        .map(|e| {
            vec![
                e.node.clone(),
                fmt_f64(e.eps),
                fmt_f64(e.delta),
                fmt_f64(e.ratio),
                fmt_f64(e.half_width),
                e.analytic_bound.map_or_else(String::new, fmt_f64),
                e.n_samples.to_string(),
                e.seed.to_string(),
            ]
        })
        .collect()
}

pub fn omega_rows(orbit: &OmegaOrbit) -> Vec<Vec<String>> {
    (0..orbit.points.len())
        .map(|k| {
            vec![
                k.to_string(),
                fmt_f64(orbit.x_norms[k]),
                fmt_f64(orbit.wedge_defects[k]),
                fmt_f64(orbit.dist_to_y_plus[k]),
            ]
        })
        .collect()
}

pub fn trajectory_header(dim: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("x{i}")))
        .collect()
}

pub fn trajectory_rows(times: &[f64], states: &[Vec<f64>]) -> Vec<Vec<String>> {
    times
        .iter()
        .zip(states)
        .map(|(t, x)| std::iter::once(fmt_f64(*t)).chain(x.iter().map(|v| fmt_f64(*v))).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleInput {
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bundle {
    pub schema_version: u32,
    pub network_fingerprint: Option<String>,
    pub inputs: Vec<BundleInput>,
    pub verdict: StabilityVerdict,
}

/// Merges per-command reports into one summary with a verdict. Reports about
/// different networks are never merged.
pub fn report_bundle(reports: &[Report]) -> Result<Bundle> {
    if reports.is_empty() {
        return Err(Error::Parameter("no reports to merge".into()));
    }
    let mut fingerprint: Option<&String> = None;
    for r in reports {
        if let Some(fp) = &r.provenance.network_fingerprint {
            match fingerprint {
                None => fingerprint = Some(fp),
                Some(prev) if prev != fp => {
                    return Err(Error::MergeRefused(format!(
                        "network fingerprints differ: {prev} vs {fp}"
                    )))
                }
                _ => {}
            }
        }
    }
    let checks: Vec<CheckResult> = reports.iter().flat_map(|r| r.checks.iter().cloned()).collect();
    Ok(Bundle {
        schema_version: REPORT_SCHEMA_VERSION,
        network_fingerprint: fingerprint.cloned(),
        inputs: reports
            .iter()
            .map(|r| BundleInput {
                command: r.provenance.command.clone(),
                config_sha256: r.provenance.config_sha256.clone(),
                seed: r.provenance.seed,
                artifacts: r.artifacts.clone(),
            })
            .collect(),
        verdict: stability_verdict(&checks),
    })
}
