use std::f64::consts::FRAC_PI_2;
use std::time::{SystemTime, UNIX_EPOCH};

use hormander_lab::calculus::{calculus_norm_experiment, representation_check, CalculusExperiment, RepresentationOptions};
use hormander_lab::kernel_checks::{cz_theta_profile, lemma_ratio_profile, poisson_bound_constant, CzPair, KernelSource};
use hormander_lab::norms::hormander_norm;
use hormander_lab::operators::{build_poisson_model, poisson_normalization};
use hormander_lab::rbounds::{estimate_rbound, fit_theta_exponent, OperatorFamily};
use hormander_lab::space::{build_torus_grid, certify_space};
use hormander_lab::{BoundReport, ComplexTime, DyadicPartition, Multiplier, SpectralModel};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{CalculusSeries, Check, ExperimentReport, ModelCheck, Payload, Provenance, RBoundSeries, Series};
use crate::CliError;

/// Distances sampled per complex time for closed-form kernel constants.
const CLOSED_FORM_RHO_POINTS: usize = 2001;
/// Torus-model rows enter the cross-check only when `Re z` spans this many
/// grid spacings; below that the lattice cannot resolve the kernel.
const RESOLVED_RE_SPACINGS: f64 = 2.0;
/// Partition and norm window for `H^α` norms.
const NORM_PARTITION: (i32, i32) = (-40, 40);
const NORM_WINDOW: (i32, i32) = (-16, 16);

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |a, v| (a.0.min(v), a.1.max(v)));
    hi / lo
}

fn compact(mut r: BoundReport, keep: bool) -> BoundReport {
    if !keep {
        r.per_sample.clear();
    }
    r
}

/// Resolve, validate and execute one experiment.
pub fn run(config: ExperimentConfig, assert_mode: bool) -> Result<ExperimentReport, CliError> {
    let config = config.resolve();
    config.validate(assert_mode)?;
    let started_unix = unix_now();
    let (payload, checks, series) = match config.kind {
        ExperimentKind::CertifySpace => run_certify_space(&config)?,
        ExperimentKind::KernelBounds => run_kernel_bounds(&config)?,
        ExperimentKind::LemmaProfile => run_lemma_profile(&config)?,
        ExperimentKind::CzProfile => run_cz_profile(&config)?,
        ExperimentKind::RboundScaling => run_rbound_scaling(&config)?,
        ExperimentKind::CalculusNorms => run_calculus_norms(&config)?,
    };
    Ok(ExperimentReport {
        schema_version: config.schema_version,
        provenance: Provenance {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            started_unix,
            finished_unix: unix_now(),
        },
        config,
        payload,
        checks,
        series,
    })
}

type Outcome = (Payload, Vec<Check>, Vec<Series>);

fn model_of(c: &ExperimentConfig, n: usize) -> Result<SpectralModel, CliError> {
    let grid = build_torus_grid(c.model.d, n, c.model.side_length)?;
    Ok(build_poisson_model(&grid)?)
}

fn run_certify_space(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let grid = build_torus_grid(c.model.d, c.model.n_per_axis, c.model.side_length)?;
    let mut cert = certify_space(&grid, c.sample_size.unwrap_or(512))?;
    let doubling: Vec<[f64; 2]> = cert.doubling.per_sample.iter().map(|s| [s.input[1], s.ratio]).collect();
    let annulus: Vec<[f64; 2]> = cert.annulus.per_sample.iter().map(|s| [s.input[2], s.ratio]).collect();
    let mut checks = Vec::new();
    if let Some(k) = cert.candidates {
        let tol = 1.0 + hormander_lab::space::CERTIFICATION_TOLERANCE;
        checks.push(Check::at_most("doubling-constant", cert.doubling.best_constant, k.doubling * tol));
        checks.push(Check::at_most("annulus-constant", cert.annulus.best_constant, k.annulus * tol));
    }
    if !c.keep_samples {
        cert.doubling.per_sample.clear();
        cert.annulus.per_sample.clear();
    }
    Ok((
        Payload::CertifySpace { certificate: cert },
        checks,
        vec![
            Series::new("doubling-ratio", "r", "ratio", doubling),
            Series::new("annulus-ratio", "R", "ratio", annulus),
        ],
    ))
}

fn run_kernel_bounds(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let d = c.model.d;
    let thetas = c.thetas.clone().unwrap_or_default();
    let norm = poisson_normalization(d);
    let th = &c.thresholds;
    let moduli: Vec<f64> = (-4..=4).map(|k| 2f64.powi(k)).collect();
    let mut closed = Vec::new();
    for &theta in &thetas {
        let zs = moduli.iter().map(|&s| ComplexTime::from_polar(s, theta)).collect::<hormander_lab::Result<Vec<_>>>()?;
        let r = poisson_bound_constant(&KernelSource::ClosedForm { d, rho_points: CLOSED_FORM_RHO_POINTS }, &zs, 512.0)?;
        closed.push(r);
    }
    let mut checks = Vec::new();
    for (theta, r) in thetas.iter().zip(&closed) {
        if *theta == 0.0 {
            checks.push(Check::at_most("closed-form-theta0-gap", (r.best_constant - norm).abs(), th.kernel_theta0_tolerance));
        }
    }
    let factor = closed
        .iter()
        .map(|r| (r.best_constant / norm).max(norm / r.best_constant))
        .fold(1.0, f64::max);
    checks.push(Check::at_most("closed-form-uniformity-factor", factor, th.kernel_uniformity_factor));

    let model = model_of(c, c.model.n_per_axis)?;
    let l = c.model.side_length;
    let mut model_rows = Vec::new();
    for &theta in &thetas {
        for div in [64.0, 32.0, 16.0, 8.0] {
            let z = ComplexTime::from_polar(l / div, theta)?;
            let m = poisson_bound_constant(&KernelSource::Model(&model), &[z], l / 8.0)?;
            let cf = poisson_bound_constant(&KernelSource::ClosedForm { d, rho_points: CLOSED_FORM_RHO_POINTS }, &[z], l / 8.0)?;
            model_rows.push(ModelCheck {
                theta,
                modulus: l / div,
                resolved: z.z().re >= RESOLVED_RE_SPACINGS * model.grid().spacing(),
                model_constant: m.best_constant,
                closed_form_constant: cf.best_constant,
                relative_gap: (m.best_constant - cf.best_constant).abs() / cf.best_constant,
            });
        }
    }
    let gap_at = |max_scale: f64| {
        model_rows
            .iter()
            .filter(|r| r.resolved && r.modulus <= max_scale)
            .map(|r| r.relative_gap)
            .fold(0.0, f64::max)
    };
    checks.push(Check::at_most("model-gap-scales-le-L/8", gap_at(l / 8.0), th.model_cross_check_tolerance));
    checks.push(Check::at_most("model-gap-scales-le-L/16", gap_at(l / 16.0), th.model_cross_check_tolerance).informational());
    let series = vec![
        Series::new(
            "closed-form-constant",
            "theta",
            "C",
            thetas.iter().zip(&closed).map(|(&t, r)| [t, r.best_constant]).collect(),
        ),
        Series::new(
            "model-gap",
            "modulus",
            "relative_gap",
            model_rows.iter().map(|r| [r.modulus, r.relative_gap]).collect(),
        ),
    ];
    let closed = closed.into_iter().map(|r| compact(r, c.keep_samples)).collect();
    Ok((
        Payload::KernelBounds {
            normalization: norm,
            closed_form: closed,
            model: model_rows,
        },
        checks,
        series,
    ))
}

fn cone_series(name: &str, thetas: &[f64], ys: impl Iterator<Item = f64>) -> Series {
    Series::new(name, "cone_distance", "value", thetas.iter().zip(ys).map(|(t, y)| [FRAC_PI_2 - t.abs(), y]).collect())
}

fn run_lemma_profile(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let thetas = c.thetas.clone().unwrap_or_default();
    let b = c.b.unwrap_or(1.5);
    let r = lemma_ratio_profile(c.model.d, b, &thetas)?;
    let th = &c.thresholds;
    let mut checks = vec![Check::at_most("ratio-variation", spread(r.per_sample.iter().map(|s| s.ratio)), th.lemma_variation_max)];
    let exponent = r.fit.map_or(f64::NAN, |f| f.exponent);
    checks.push(Check::at_most("fitted-exponent", exponent, b - 1.0 + th.lemma_exponent_slack));
    let series = vec![
        cone_series("annulus-integral", &thetas, r.per_sample.iter().map(|s| s.input[1])),
        cone_series("normalized-ratio", &thetas, r.per_sample.iter().map(|s| s.ratio)),
    ];
    Ok((Payload::LemmaProfile { report: r }, checks, series))
}

fn run_cz_profile(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let thetas = c.thetas.clone().unwrap_or_default();
    let pair = CzPair::Line { delta: c.delta.unwrap_or(1.0) };
    let (r, per) = cz_theta_profile(&pair, &thetas, c.t.unwrap_or(0.75), c.j_range.unwrap_or((-40, 40)))?;
    let th = &c.thresholds;
    let exponent = r.fit.map_or(f64::NAN, |f| f.exponent);
    let checks = vec![
        Check::at_most("fitted-exponent", exponent, (c.model.d as f64 + 1.0) / 2.0 + th.cz_exponent_slack),
        Check::at_most("small-branch-spread", spread(per.iter().map(|p| p.small_branch)), th.cz_small_branch_factor),
    ];
    let series = vec![
        cone_series("sup-integral", &thetas, per.iter().map(|p| p.sup_integral)),
        cone_series("small-branch", &thetas, per.iter().map(|p| p.small_branch)),
        cone_series("large-branch", &thetas, per.iter().map(|p| p.large_branch)),
    ];
    Ok((Payload::CzProfile { report: r, per_theta: per }, checks, series))
}

fn run_rbound_scaling(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = model_of(c, c.model.n_per_axis)?;
    let thetas = c.thetas.clone().unwrap_or_default();
    let d = c.model.d as f64;
    let proved = (d + 1.0) / 2.0;
    let sharper = (d - 1.0) / 2.0;
    let th = &c.thresholds;
    let n_terms = c.n_terms.unwrap_or(10);
    let mut per_p = Vec::new();
    let mut checks = Vec::new();
    let mut series = Vec::new();
    for &p in c.p_list.as_deref().unwrap_or_default() {
        let mut estimates = Vec::new();
        for &theta in &thetas {
            let fam = OperatorFamily::poisson(&model, theta, c.t.unwrap_or(0.75), c.j_range.unwrap_or((-2, 7)))?;
            let mut e = estimate_rbound(&fam, p, n_terms, &c.budget, c.seed)?;
            if !c.keep_samples {
                e.witness.vectors.clear();
            }
            estimates.push(e);
        }
        let values: Vec<f64> = estimates.iter().map(|e| e.lower_estimate).collect();
        let fit = fit_theta_exponent(&thetas, &values)?;
        if p == 2.0 {
            let top = values.iter().copied().fold(0.0, f64::max);
            checks.push(Check::at_most("p2-ceiling", top, 1.0 + th.p2_ceiling_slack));
        } else {
            let name = format!("fitted-exponent-p{p:.4}");
            checks.push(Check::at_most(&name, fit.fit.exponent, proved + th.rbound_exponent_slack));
            checks.push(Check::at_most(&format!("{name}-sharper-target"), fit.fit.exponent, sharper + th.rbound_exponent_slack).informational());
        }
        series.push(cone_series(&format!("rbound-p{p:.4}"), &thetas, values.iter().copied()));
        per_p.push(RBoundSeries {
            p,
            thetas: thetas.clone(),
            estimates,
            fit: Some(fit),
        });
    }
    Ok((
        Payload::RboundScaling {
            proved_exponent: proved,
            sharper_exponent: sharper,
            per_p,
        },
        checks,
        series,
    ))
}

fn run_calculus_norms(c: &ExperimentConfig) -> Result<Outcome, CliError> {
    let alpha = c.alpha.unwrap_or(1.6);
    let family: Vec<Multiplier> = c.multipliers.clone().unwrap_or_default().iter().map(Multiplier::from_spec).collect();
    let partition = DyadicPartition::new(NORM_PARTITION.0, NORM_PARTITION.1)?;
    let mut hormander_norms = Vec::new();
    for f in &family {
        hormander_norms.push((f.label().to_string(), hormander_norm(f, alpha, &partition, NORM_WINDOW)?.value));
    }
    let n = c.model.n_per_axis;
    let coarse_model = model_of(c, n)?;
    let fine_model = if c.refine.unwrap_or(true) { Some(model_of(c, 2 * n)?) } else { None };
    let th = &c.thresholds;
    let experiment = |model: &SpectralModel, p: f64| CalculusExperiment {
        model: model.clone(),
        partition,
        norm_window: NORM_WINDOW,
        alpha,
        p,
        family: family.clone(),
        dilations: c.dilations.unwrap_or((-6, 6)),
        budget: c.budget,
        seed: c.seed,
    };
    let mut per_p = Vec::new();
    let mut checks = Vec::new();
    let mut series = Vec::new();
    for &p in c.p_list.as_deref().unwrap_or_default() {
        let coarse = calculus_norm_experiment(&experiment(&coarse_model, p))?;
        let name = format!("p{p:.4}");
        checks.push(Check::at_most(&format!("sup-ratio-finite-{name}"), coarse.best_constant, f64::MAX));
        let (fine, change) = match &fine_model {
            Some(m) => {
                let f = calculus_norm_experiment(&experiment(m, p))?;
                let change = (f.best_constant - coarse.best_constant).abs() / coarse.best_constant;
                checks.push(Check::at_most(&format!("refinement-change-{name}"), change, th.calculus_refinement_change));
                (Some(f), Some(change))
            }
            None => (None, None),
        };
        series.push(Series::new(
            &format!("calculus-ratio-{name}"),
            "m",
            "ratio",
            coarse.per_sample.iter().map(|s| [s.input[1], s.ratio]).collect(),
        ));
        per_p.push(CalculusSeries {
            p,
            coarse: compact(coarse, c.keep_samples),
            fine: fine.map(|f| compact(f, c.keep_samples)),
            relative_change: change,
        });
    }
    let g = Multiplier::gaussian(1.0, 0.05);
    let representation = representation_check(&coarse_model, &g, alpha, alpha + 0.6, 0, &RepresentationOptions::default())
        .ok()
        .map(Into::into);
    Ok((
        Payload::CalculusNorms {
            hormander_norms,
            per_p,
            representation,
        },
        checks,
        series,
    ))
}
