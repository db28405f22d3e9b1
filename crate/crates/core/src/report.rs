//! Result records shared by the certification and scaling experiments.

use serde::{Deserialize, Serialize};

/// Markers attached to a report when something about the run deserves a
/// second look.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// A tested quantity exceeded the candidate constant beyond tolerance.
    Violation,
    /// A quadrature or resolution-doubling check did not meet its tolerance.
    NotConverged,
    /// Fit data carried no signal (constant or collinear inputs).
    Degenerate,
    /// Some samples were skipped as degenerate; see `skipped`.
    SkippedSamples,
    /// Radii were limited by the diameter of a compact space.
    DiameterLimited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub ratio: f64,
}

/// Least-squares power-law fit `log y = exponent * log x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Outcome of a bound certification or scaling experiment.
///
/// `best_constant` is always the maximum of `per_sample` ratios when samples
/// are present, and `argmax_witness` is the input of that sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub label: String,
    pub best_constant: f64,
    pub input_labels: Vec<String>,
    pub argmax_witness: Vec<f64>,
    pub per_sample: Vec<Sample>,
    pub fit: Option<PowerFit>,
    pub flags: Vec<Flag>,
    pub skipped: usize,
}

impl BoundReport {
    pub fn from_samples(label: &str, input_labels: &[&str], per_sample: Vec<Sample>) -> Self {
        let mut best = 0.0;
        let mut witness = Vec::new();
        for s in &per_sample {
            if s.ratio > best || witness.is_empty() {
                best = s.ratio;
                witness = s.input.clone();
            }
        }
        BoundReport {
            label: label.to_string(),
            best_constant: best,
            input_labels: input_labels.iter().map(|s| s.to_string()).collect(),
            argmax_witness: witness,
            per_sample,
            fit: None,
            flags: Vec::new(),
            skipped: 0,
        }
    }

    pub fn has_flag(&self, flag: &Flag) -> bool {
        self.flags.contains(flag)
    }

    pub fn flag(&mut self, flag: Flag) {
        if !self.flags.contains(&flag) {
            self.flags.push(flag);
        }
    }

    pub fn min_ratio(&self) -> f64 {
        self.per_sample
            .iter()
            .map(|s| s.ratio)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ordinary least squares of `ys` on `xs`. Returns `None` when the `xs` are
/// all equal.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<PowerFit> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Some(PowerFit {
        exponent: slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Growth exponent of `values` against the cone distance `π/2 − |θ|`:
/// fits `log value = γ · (−log(π/2 − |θ|)) + c` and returns `γ`.
pub fn cone_growth_fit(thetas: &[f64], values: &[f64]) -> Option<PowerFit> {
    let xs: Vec<f64> = thetas
        .iter()
        .map(|t| -(std::f64::consts::FRAC_PI_2 - t.abs()).ln())
        .collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    linear_fit(&xs, &ys)
}
