use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hormander_lab::calculus::RepresentationReport;
use hormander_lab::kernel_checks::CzReport;
use hormander_lab::rbounds::ThetaFit;
use hormander_lab::space::SpaceCertificate;
use hormander_lab::{BoundReport, RBoundEstimate};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// A threshold comparison. `asserted` checks decide the exit status in
/// assertion mode; the others are reported for reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub comparison: String,
    pub asserted: bool,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            comparison: "<=".into(),
            asserted: true,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            comparison: ">=".into(),
            asserted: true,
            passed: value >= threshold,
        }
    }

    pub fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<[f64; 2]>,
}

impl Series {
    pub fn new(name: &str, x_label: &str, y_label: &str, points: Vec<[f64; 2]>) -> Self {
        Series {
            name: name.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub theta: f64,
    pub modulus: f64,
    /// `Re z` is large against the grid spacing.
    pub resolved: bool,
    pub model_constant: f64,
    pub closed_form_constant: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundSeries {
    pub p: f64,
    pub thetas: Vec<f64>,
    pub estimates: Vec<RBoundEstimate>,
    pub fit: Option<ThetaFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalculusSeries {
    pub p: f64,
    pub coarse: BoundReport,
    pub fine: Option<BoundReport>,
    pub relative_change: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    CertifySpace {
        certificate: SpaceCertificate,
    },
    KernelBounds {
        normalization: f64,
        closed_form: Vec<BoundReport>,
        model: Vec<ModelCheck>,
    },
    LemmaProfile {
        report: BoundReport,
    },
    CzProfile {
        report: BoundReport,
        per_theta: Vec<CzReport>,
    },
    RboundScaling {
        proved_exponent: f64,
        sharper_exponent: f64,
        per_p: Vec<RBoundSeries>,
    },
    CalculusNorms {
        hormander_norms: Vec<(String, f64)>,
        per_p: Vec<CalculusSeries>,
        representation: Option<RepresentationSummary>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSummary {
    pub residual: f64,
    pub tail_bound: f64,
    pub basis_size: usize,
}

impl From<RepresentationReport> for RepresentationSummary {
    fn from(r: RepresentationReport) -> Self {
        RepresentationSummary {
            residual: r.residual,
            tail_bound: r.tail_bound,
            basis_size: r.basis_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub payload: Payload,
    pub checks: Vec<Check>,
    pub series: Vec<Series>,
}

impl ExperimentReport {
    pub fn assertions_hold(&self) -> bool {
        self.checks.iter().all(|c| !c.asserted || c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.asserted && !c.passed)
    }

    /// Everything that must reproduce from config and seed: the payload,
    /// checks and series, without the timestamps.
    pub fn reproducible_json(&self) -> String {
        serde_json::to_string(&(&self.payload, &self.checks, &self.series)).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("report: {e}")))
    }

    /// `series,x,y` rows for external plotting.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("series,x,y\n");
        for s in &self.series {
            for [x, y] in &s.points {
                writeln!(out, "{},{x:?},{y:?}", s.name).expect("write to string");
            }
        }
        out
    }

    /// Write the report to `path` and the plot series next to it with a
    /// `.csv` extension. Returns the CSV path.
    pub fn write(&self, path: &Path) -> Result<PathBuf, CliError> {
        let unwritable = |e: std::io::Error, p: &Path| CliError::Input(format!("cannot write {}: {e}", p.display()));
        std::fs::write(path, self.to_json()).map_err(|e| unwritable(e, path))?;
        let csv = path.with_extension("csv");
        std::fs::write(&csv, self.series_csv()).map_err(|e| unwritable(e, &csv))?;
        Ok(csv)
    }
}
