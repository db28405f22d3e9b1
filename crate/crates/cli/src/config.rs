use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::path::{Path, PathBuf};

use hormander_lab::{MultiplierSpec, SearchBudget};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CertifySpace,
    KernelBounds,
    LemmaProfile,
    CzProfile,
    RboundScaling,
    CalculusNorms,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::CertifySpace,
        ExperimentKind::KernelBounds,
        ExperimentKind::LemmaProfile,
        ExperimentKind::CzProfile,
        ExperimentKind::RboundScaling,
        ExperimentKind::CalculusNorms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CertifySpace => "certify-space",
            ExperimentKind::KernelBounds => "kernel-bounds",
            ExperimentKind::LemmaProfile => "lemma-profile",
            ExperimentKind::CzProfile => "cz-profile",
            ExperimentKind::RboundScaling => "rbound-scaling",
            ExperimentKind::CalculusNorms => "calculus-norms",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub n_per_axis: usize,
    pub side_length: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 1,
            n_per_axis: 256,
            side_length: 256.0,
        }
    }
}

/// Pass/fail thresholds checked in assertion mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// `|C(θ=0) − c_d|` for the closed-form kernel.
    pub kernel_theta0_tolerance: f64,
    /// Allowed factor between `C(θ)` and `c_d` away from the real axis.
    pub kernel_uniformity_factor: f64,
    /// Relative gap between torus-model and closed-form constants.
    pub model_cross_check_tolerance: f64,
    pub lemma_variation_max: f64,
    /// Slack over `b − 1` for the fitted lemma exponent.
    pub lemma_exponent_slack: f64,
    /// Slack over `(d+1)/2` for the fitted CZ exponent.
    pub cz_exponent_slack: f64,
    /// Allowed max/min spread of the small-scale CZ branch.
    pub cz_small_branch_factor: f64,
    /// Slack over `(d+1)/2` for the fitted R-bound exponent.
    pub rbound_exponent_slack: f64,
    pub p2_ceiling_slack: f64,
    /// Allowed relative change of the calculus sup under refinement.
    pub calculus_refinement_change: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            kernel_theta0_tolerance: 1e-6,
            kernel_uniformity_factor: 3.0,
            model_cross_check_tolerance: 0.10,
            lemma_variation_max: 10.0,
            lemma_exponent_slack: 0.05,
            cz_exponent_slack: 0.1,
            cz_small_branch_factor: 3.0,
            rbound_exponent_slack: 0.25,
            p2_ceiling_slack: 1e-9,
            calculus_refinement_change: 0.15,
        }
    }
}

/// One experiment run. Fields left out take per-kind defaults, and
/// [`ExperimentConfig::resolve`] fills them in so the echoed config is
/// complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_range: Option<(i32, i32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Annulus exponent for the lemma profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Separation `ρ(y, ȳ)` for the CZ profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<MultiplierSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilations: Option<(i32, i32)>,
    /// Repeat the calculus experiment on the doubled grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    /// Keep per-sample rows and witness vectors in the report (large).
    #[serde(default)]
    pub keep_samples: bool,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default)]
    pub thresholds: Thresholds,
}

pub fn cone_thetas(k_max: u32) -> Vec<f64> {
    (1..=k_max).map(|k| FRAC_PI_2 - 10f64.powf(-(k as f64) / 2.0)).collect()
}

/// Twenty multipliers spanning the built-in families.
pub fn default_family() -> Vec<MultiplierSpec> {
    let mut v = Vec::new();
    for m in [-1, 0, 1] {
        v.push(MultiplierSpec::BumpDilate { m, amplitude: 1.0 });
    }
    for center in [0.7, 1.0, 1.5] {
        v.push(MultiplierSpec::Gaussian { center, width: 0.3 });
    }
    for freq in [0.5, 1.0, 2.0, 4.0] {
        v.push(MultiplierSpec::SineModulated { freq });
    }
    for gamma in [0.5, 1.0, 2.0] {
        v.push(MultiplierSpec::Resolvent { gamma });
    }
    for s in [0.25, 0.5, 1.0] {
        v.push(MultiplierSpec::PowerIs { s });
    }
    for (re, im) in [(1.0, 0.0), (1.0, 1.0), (0.2, 1.0)] {
        v.push(MultiplierSpec::Exponential { re, im });
    }
    v.push(MultiplierSpec::Constant { value: 1.0 });
    v
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            seed: 0,
            output: None,
            model: ModelConfig::default(),
            thetas: None,
            t: None,
            j_range: None,
            p_list: None,
            alpha: None,
            b: None,
            delta: None,
            n_terms: None,
            multipliers: None,
            dilations: None,
            refine: None,
            sample_size: None,
            keep_samples: false,
            budget: SearchBudget::default(),
            thresholds: Thresholds::default(),
        }
    }

    /// Parse JSON or TOML, chosen by extension (`.toml` is TOML, anything
    /// else JSON).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    /// Fill every kind-specific default.
    pub fn resolve(mut self) -> Self {
        use ExperimentKind::*;
        let kind = self.kind;
        self.thetas.get_or_insert_with(|| match kind {
            KernelBounds => vec![0.0, FRAC_PI_4, -FRAC_PI_4, FRAC_PI_2 - 0.01, -(FRAC_PI_2 - 0.01)],
            RboundScaling => cone_thetas(6),
            _ => cone_thetas(6),
        });
        self.t.get_or_insert(0.75);
        self.j_range.get_or_insert(match kind {
            RboundScaling => (-2, 7),
            _ => (-40, 40),
        });
        self.p_list.get_or_insert_with(|| match kind {
            RboundScaling => vec![4.0 / 3.0, 2.0, 4.0],
            _ => vec![4.0 / 3.0, 4.0],
        });
        self.alpha.get_or_insert(1.6);
        self.b.get_or_insert(1.5);
        self.delta.get_or_insert(1.0);
        self.n_terms.get_or_insert(10);
        self.multipliers.get_or_insert_with(default_family);
        self.dilations.get_or_insert((-6, 6));
        self.refine.get_or_insert(kind == CalculusNorms);
        self.sample_size.get_or_insert(512);
        self
    }

    /// Check every range the dispatched experiment depends on. Call on a
    /// resolved config.
    pub fn validate(&self, assert_mode: bool) -> Result<(), CliError> {
        use ExperimentKind::*;
        let bad = |m: String| Err(CliError::Input(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let m = &self.model;
        if m.d == 0 || m.n_per_axis < 2 || !(m.side_length > 0.0 && m.side_length.is_finite()) {
            return bad(format!(
                "model needs d >= 1, n_per_axis >= 2 and a positive side_length, got {m:?}"
            ));
        }
        let thetas = self.thetas.as_deref().unwrap_or_default();
        if thetas.iter().any(|t| !(t.abs() < FRAC_PI_2)) {
            return bad("every theta must satisfy |theta| < pi/2".into());
        }
        let t = self.t.unwrap_or(0.75);
        let (j0, j1) = self.j_range.unwrap_or((0, 0));
        if j0 > j1 {
            return bad(format!("empty j_range [{j0}, {j1}]"));
        }
        let ps = self.p_list.as_deref().unwrap_or_default();
        if ps.iter().any(|p| !(*p > 1.0 && p.is_finite())) {
            return bad("every p must lie in (1, inf)".into());
        }
        let d = m.d as f64;
        match self.kind {
            CertifySpace => {
                if self.sample_size == Some(0) {
                    return bad("sample_size must be positive".into());
                }
            }
            KernelBounds => {
                if thetas.is_empty() {
                    return bad("kernel-bounds needs at least one theta".into());
                }
            }
            LemmaProfile => {
                let b = self.b.unwrap_or(1.5);
                if !(b > d / 2.0) {
                    return bad(format!(
                        "lemma-profile requires b > d/2 for the annulus integral to converge; got b = {b}, d = {}",
                        m.d
                    ));
                }
                if thetas.len() < 2 {
                    return bad("lemma-profile needs at least two thetas".into());
                }
            }
            CzProfile => {
                if m.d != 1 {
                    return bad("cz-profile uses the closed-form line kernel and needs d = 1".into());
                }
                if !(0.5..=1.0).contains(&t) {
                    return bad(format!("cz-profile needs t in [1/2, 1], got {t}"));
                }
                if !(self.delta.unwrap_or(1.0) > 0.0) {
                    return bad("delta must be positive".into());
                }
                if thetas.len() < 2 {
                    return bad("cz-profile needs at least two thetas".into());
                }
            }
            RboundScaling => {
                if !(t > 0.0) {
                    return bad(format!("t must be positive, got {t}"));
                }
                if thetas.len() < 4 {
                    return bad("rbound-scaling fits an exponent and needs at least four thetas".into());
                }
                if self.n_terms == Some(0) {
                    return bad("n_terms must be positive".into());
                }
            }
            CalculusNorms => {
                let alpha = self.alpha.unwrap_or(1.6);
                if !(alpha > 0.5) {
                    return bad(format!("calculus-norms needs alpha > 1/2, got {alpha}"));
                }
                if assert_mode && !(alpha > (d + 2.0) / 2.0) {
                    return bad(format!(
                        "asserted calculus bounds need alpha > (d+2)/2 = {}, got {alpha}",
                        (d + 2.0) / 2.0
                    ));
                }
                if self.multipliers.as_ref().is_some_and(|f| f.is_empty()) {
                    return bad("calculus-norms needs at least one multiplier".into());
                }
                let (a, b) = self.dilations.unwrap_or((0, 0));
                if a > b {
                    return bad(format!("empty dilation range [{a}, {b}]"));
                }
            }
        }
        Ok(())
    }
}
