//! Experiments on the `H^α` functional calculus of a grid model:
//! Paley–Littlewood equivalence, the Fourier representation of
//! `g(2^k A)(1 + 2^k A)^{−α}`, and normalized operator norms of multiplier
//! families.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multiplier::Multiplier;
use crate::norms::hormander_norm;
use crate::operators::{apply_multiplier, SpectralModel};
use crate::partition::DyadicPartition;
use crate::rbounds::{estimate_rbound, lp_norm, square_function_norm, OperatorFamily, RBoundEstimate, SearchBudget};
use crate::report::{BoundReport, Sample};

/// Relative size of the mean below which a vector counts as mean-zero.
pub const MEAN_TOLERANCE: f64 = 1e-12;

/// `(‖v‖_p / S, S / ‖v‖_p)` with `S = ‖(Σ_k |φ_k(A) v|²)^{1/2}‖_p` over the
/// partition indices in `k_range`.
pub fn paley_littlewood_ratio(
    model: &SpectralModel,
    v: &[Complex64],
    partition: &DyadicPartition,
    p: f64,
    k_range: (i32, i32),
) -> Result<(f64, f64)> {
    let grid = model.grid();
    if v.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "vector of length {} on a model of {} points",
            v.len(),
            grid.len()
        )));
    }
    let (lo, hi) = k_range;
    if lo > hi || lo < partition.n_min || hi > partition.n_max {
        return Err(Error::InvalidArgument(format!(
            "k range [{lo}, {hi}] not inside partition range [{}, {}]",
            partition.n_min, partition.n_max
        )));
    }
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mean: Complex64 = v.iter().zip(grid.weights()).map(|(c, w)| c * w).sum::<Complex64>() / grid.total_measure();
    if mean.norm() > MEAN_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NonzeroMean(mean.norm()));
    }
    for &l in model.eigenvalues() {
        if l > 0.0 && !(2f64.powi(lo)..=2f64.powi(hi)).contains(&l) {
            return Err(Error::InvalidArgument(format!(
                "k range [{lo}, {hi}] does not cover the eigenvalue {l}"
            )));
        }
    }
    let pieces = (lo..=hi)
        .map(|k| model.apply_symbol(|l| Ok(Complex64::new(if l > 0.0 { partition.eval(k, l)? } else { 0.0 }, 0.0)), v))
        .collect::<Result<Vec<_>>>()?;
    let s = square_function_norm(&pieces, p, grid)?;
    let nv = lp_norm(v, p, grid)?;
    if s == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument("zero vector has no Paley-Littlewood ratio".into()));
    }
    Ok((nv / s, s / nv))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepresentationOptions {
    /// Truncation `|t| ≤ quad_t` of the inversion integral.
    pub quad_t: f64,
    /// Trapezoid nodes on `[−quad_t, quad_t]`.
    pub quad_n: usize,
    /// Trapezoid nodes for `ĝ(t) = ∫_{1/2}^{2} g(μ) e^{−itμ} dμ`.
    pub transform_n: usize,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        RepresentationOptions {
            quad_t: 200.0,
            quad_n: 1 << 14,
            transform_n: 1 << 13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepresentationReport {
    /// Max over the basis of `‖L x − R x‖_2 / ‖x‖_2`, relative to `sup |g|`.
    pub residual: f64,
    /// Bound on the truncated tail `(1/2π) ∫_{|t|>T} |ĝ|`, from the
    /// `(1+|t|)^{−β}` decay of `ĝ`; infinite when `β ≤ 1`.
    pub tail_bound: f64,
    /// `sup_{|t| ≤ T} |ĝ(t)| (1+|t|)^β` on the quadrature nodes.
    pub weighted_transform_sup: f64,
    pub basis_size: usize,
}

impl RepresentationReport {
    pub fn budget(&self) -> f64 {
        self.residual + self.tail_bound
    }
}

fn check_representation(g: &Multiplier, alpha: f64, beta: f64, opts: &RepresentationOptions) -> Result<f64> {
    if !(beta > alpha + 0.5) {
        return Err(Error::NonIntegrableWeight {
            beta,
            bound: alpha + 0.5,
        });
    }
    if !(opts.quad_t > 0.0) || opts.quad_n < 3 || opts.transform_n < 3 {
        return Err(Error::InvalidArgument("quadrature needs a positive range and at least 3 nodes".into()));
    }
    let gmax = (0..=64)
        .map(|i| g.eval(0.5 + 1.5 * i as f64 / 64.0).map(|c| c.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let edge = g.eval(0.5)?.norm().max(g.eval(2.0)?.norm());
    if gmax == 0.0 || edge > 1e-12 * gmax {
        return Err(Error::InvalidArgument(format!(
            "`{}` must be supported in (1/2, 2): edge value {edge:e}",
            g.label()
        )));
    }
    Ok(gmax)
}

/// Left and right symbols of the representation on the eigenvalues `mu`
/// (already multiplied by `2^k`), plus the transform statistics.
fn representation_symbols(
    g: &Multiplier,
    alpha: f64,
    beta: f64,
    mu: &[f64],
    opts: &RepresentationOptions,
) -> Result<(Vec<Complex64>, Vec<Complex64>, f64, f64)> {
    let gmax = check_representation(g, alpha, beta, opts)?;
    let m = opts.transform_n;
    let hm = 1.5 / (m - 1) as f64;
    let gs = (0..m)
        .map(|i| {
            let w = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
            g.eval(0.5 + i as f64 * hm).map(|c| c * (w * hm))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = opts.quad_n;
    let ht = 2.0 * opts.quad_t / (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|j| -opts.quad_t + j as f64 * ht).collect();
    let transform: Vec<Complex64> = ts
        .par_iter()
        .map(|&t| {
            // e^{−itμ_i} by a rotation recurrence along the uniform μ grid
            let step = Complex64::from_polar(1.0, -t * hm);
            let mut phase = Complex64::from_polar(1.0, -t * 0.5);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, gi) in gs.iter().enumerate() {
                if i % 256 == 0 {
                    phase = Complex64::from_polar(1.0, -t * (0.5 + i as f64 * hm));
                }
                acc += gi * phase;
                phase *= step;
            }
            acc
        })
        .collect();
    let weighted_sup = ts
        .iter()
        .zip(&transform)
        .map(|(t, gh)| gh.norm() * (1.0 + t.abs()).powf(beta))
        .fold(0.0, f64::max);
    let tail = if beta > 1.0 {
        weighted_sup * 2.0 * (1.0 + opts.quad_t).powf(1.0 - beta) / (beta - 1.0) / (2.0 * PI)
    } else {
        f64::INFINITY
    };
    let left = mu
        .iter()
        .map(|&u| {
            let gv = if u > 0.5 && u < 2.0 { g.eval(u)? } else { Complex64::new(0.0, 0.0) };
            Ok(gv * (1.0 + u).powf(-alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    let right = mu
        .par_iter()
        .map(|&u| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, (t, gh)) in ts.iter().zip(&transform).enumerate() {
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                acc += gh * Complex64::from_polar(w, t * u);
            }
            acc * (ht / (2.0 * PI)) * (1.0 + u).powf(-alpha)
        })
        .collect();
    Ok((left, right, tail / gmax, weighted_sup))
}

/// The representation compared on raw eigenvalues `Λ` at dyadic shift `k`:
/// maximum `|L(λ) − R(λ)|` relative to `sup |g|`.
pub fn representation_check_on_eigenvalues(
    eigenvalues: &[f64],
    g: &Multiplier,
    alpha: f64,
    beta: f64,
    k: i32,
    opts: &RepresentationOptions,
) -> Result<RepresentationReport> {
    let gmax = check_representation(g, alpha, beta, opts)?;
    let mu: Vec<f64> = eigenvalues.iter().map(|l| l * 2f64.powi(k)).collect();
    let (left, right, tail, wsup) = representation_symbols(g, alpha, beta, &mu, opts)?;
    let residual = left.iter().zip(&right).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / gmax;
    Ok(RepresentationReport {
        residual,
        tail_bound: tail,
        weighted_transform_sup: wsup,
        basis_size: eigenvalues.len(),
    })
}

/// Compare `g(2^k A)(1 + 2^k A)^{−α} x` computed spectrally with the
/// truncated Fourier inversion `(1/2π) ∫ ĝ(t) (1 + 2^k A)^{−α} e^{i 2^k t A} x dt`
/// on the Fourier modes whose eigenvalues fall in the band of `g(2^k ·)`.
pub fn representation_check(
    model: &SpectralModel,
    g: &Multiplier,
    alpha: f64,
    beta: f64,
    k: i32,
    opts: &RepresentationOptions,
) -> Result<RepresentationReport> {
    let gmax = check_representation(g, alpha, beta, opts)?;
    let eigs = model.eigenvalues();
    let scale = 2f64.powi(k);
    let mu: Vec<f64> = eigs.iter().map(|l| l * scale).collect();
    let (_, right, tail, wsup) = representation_symbols(g, alpha, beta, &mu, opts)?;
    let band: Vec<usize> = (0..eigs.len()).filter(|&i| mu[i] > 0.5 && mu[i] < 2.0).collect();
    let lhs_mult = g.dilated(k).product(&Multiplier::resolvent(alpha).dilated(k));
    let mut residual: f64 = 0.0;
    for &i in &band {
        let mut e = vec![Complex64::new(0.0, 0.0); eigs.len()];
        e[i] = Complex64::new(1.0, 0.0);
        let x = model.backward(&e)?;
        let lhs = apply_multiplier(model, &lhs_mult, &x)?;
        let rhs = model.backward(&e.iter().zip(&right).map(|(a, b)| a * b).collect::<Vec<_>>())?;
        let diff: f64 = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        residual = residual.max(diff / nx);
    }
    Ok(RepresentationReport {
        residual: residual / gmax,
        tail_bound: tail,
        weighted_transform_sup: wsup,
        basis_size: band.len(),
    })
}

/// A multiplier family to be measured against its `H^α` norms.
#[derive(Clone)]
pub struct CalculusExperiment {
    pub model: SpectralModel,
    pub partition: DyadicPartition,
    /// Window of dyadic pieces in the Hörmander norm.
    pub norm_window: (i32, i32),
    pub alpha: f64,
    pub p: f64,
    pub family: Vec<Multiplier>,
    /// Dilations `m` applied as `f(2^m ·)`.
    pub dilations: (i32, i32),
    pub budget: SearchBudget,
    pub seed: u64,
}

impl CalculusExperiment {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5) {
            return Err(Error::InvalidArgument(format!("alpha = {} must exceed 1/2", self.alpha)));
        }
        if self.family.is_empty() {
            return Err(Error::InvalidArgument("empty multiplier family".into()));
        }
        if self.dilations.0 > self.dilations.1 {
            return Err(Error::InvalidArgument("empty dilation range".into()));
        }
        Ok(())
    }

    /// The family with each member divided by its `H^α` norm.
    pub fn normalized_family(&self) -> Result<Vec<(Multiplier, f64)>> {
        self.validate()?;
        self.family
            .iter()
            .map(|f| {
                let r = hormander_norm(f, self.alpha, &self.partition, self.norm_window)?;
                if !r.value.is_finite() || !(r.value > 0.0) {
                    return Err(Error::InfiniteNorm(f.label().to_string()));
                }
                Ok((f.scaled(Complex64::new(1.0 / r.value, 0.0)), r.value))
            })
            .collect()
    }
}

/// `L^p → L^p` norm of `f(A)`: exact at `p = 2`, a witness lower estimate
/// otherwise.
pub fn operator_norm(model: &SpectralModel, f: &Multiplier, scale: f64, p: f64, budget: &SearchBudget, seed: u64) -> Result<f64> {
    if p == 2.0 {
        return model
            .eigenvalues()
            .iter()
            .map(|&l| f.eval(l).map(|c| c.norm()))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max));
    }
    let fam = OperatorFamily::from_multipliers(model, std::slice::from_ref(f), &[scale])?;
    Ok(estimate_rbound(&fam, p, 1, budget, seed)?.lower_estimate)
}

/// `sup_{f, m} ‖f(2^m A)‖_p / ‖f‖_{H^α}`; sample inputs are `[member, m]`.
pub fn calculus_norm_experiment(exp: &CalculusExperiment) -> Result<BoundReport> {
    let normalized = exp.normalized_family()?;
    let cases: Vec<(usize, i32)> = (0..normalized.len())
        .flat_map(|i| (exp.dilations.0..=exp.dilations.1).map(move |m| (i, m)))
        .collect();
    let samples = cases
        .par_iter()
        .map(|&(i, m)| {
            let f = normalized[i].0.dilated(m);
            let ratio = operator_norm(&exp.model, &f, 2f64.powi(m), exp.p, &exp.budget, exp.seed)?;
            Ok(Sample {
                input: vec![i as f64, m as f64],
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport::from_samples("calculus-norm", &["member", "m"], samples))
}

/// Witness search for the R-bound of the normalized family over all
/// dilations.
pub fn rbounded_calculus_probe(exp: &CalculusExperiment, n_terms: usize, seed: u64) -> Result<RBoundEstimate> {
    let normalized = exp.normalized_family()?;
    let mut fs = Vec::new();
    let mut scales = Vec::new();
    for (f, _) in &normalized {
        for m in exp.dilations.0..=exp.dilations.1 {
            fs.push(f.dilated(m));
            scales.push(2f64.powi(m));
        }
    }
    let fam = OperatorFamily::from_multipliers(&exp.model, &fs, &scales)?;
    estimate_rbound(&fam, exp.p, n_terms, &exp.budget, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{apply_semigroup, build_poisson_model, ComplexTime};
    use crate::rbounds::Identity;
    use crate::rbounds::LinearOperator;
    use crate::space::build_torus_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, l: f64) -> SpectralModel {
        build_poisson_model(&build_torus_grid(1, n, l).unwrap()).unwrap()
    }

    fn mean_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
        v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn paley_littlewood_p2_window() {
        let m = model(128, 128.0);
        let part = DyadicPartition::new(-12, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let v = mean_zero(&mut rng, 128);
            let (lo, hi) = paley_littlewood_ratio(&m, &v, &part, 2.0, (-8, 3)).unwrap();
            assert!(lo >= 1.0 - 1e-12 && lo <= 2f64.sqrt() + 1e-9, "{lo}");
            assert!((lo * hi - 1.0).abs() < 1e-12);
            let (lo2, _) = paley_littlewood_ratio(&m, &v.iter().map(|c| c * 7.5).collect::<Vec<_>>(), &part, 2.0, (-8, 3)).unwrap();
            assert!((lo - lo2).abs() < 1e-12);
        }
    }

    #[test]
    fn paley_littlewood_single_frequency() {
        let m = model(64, 64.0);
        let part = DyadicPartition::new(-10, 6).unwrap();
        let mut e = vec![Complex64::new(0.0, 0.0); 64];
        e[5] = Complex64::new(1.0, 0.0);
        let v = m.backward(&e).unwrap();
        let lambda = m.eigenvalues()[5];
        let sq: f64 = (-8..=3).map(|k| part.eval(k, lambda).unwrap().powi(2)).sum();
        let (_, hi) = paley_littlewood_ratio(&m, &v, &part, 2.0, (-8, 3)).unwrap();
        assert!((hi - sq.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn paley_littlewood_rejects_mean_and_short_range() {
        let m = model(64, 64.0);
        let part = DyadicPartition::new(-10, 6).unwrap();
        let v = vec![Complex64::new(1.0, 0.0); 64];
        assert!(matches!(paley_littlewood_ratio(&m, &v, &part, 2.0, (-8, 3)), Err(Error::NonzeroMean(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = mean_zero(&mut rng, 64);
        assert!(paley_littlewood_ratio(&m, &w, &part, 2.0, (-2, 3)).is_err());
    }

    #[test]
    fn representation_narrow_bump() {
        let m = model(64, 64.0);
        let g = Multiplier::gaussian(1.0, 0.05);
        let r = representation_check(&m, &g, 1.6, 2.2, 2, &RepresentationOptions::default()).unwrap();
        assert!(r.basis_size > 0);
        assert!(r.residual <= 1e-6, "{r:?}");
        assert!(r.tail_bound.is_finite());
    }

    #[test]
    fn representation_shift_covariance() {
        let m = model(64, 64.0);
        let g = Multiplier::gaussian(1.0, 0.05);
        let opts = RepresentationOptions { quad_n: 1 << 12, ..Default::default() };
        let a = representation_check_on_eigenvalues(m.eigenvalues(), &g, 1.6, 2.2, 3, &opts).unwrap();
        let scaled: Vec<f64> = m.eigenvalues().iter().map(|l| l * 8.0).collect();
        let b = representation_check_on_eigenvalues(&scaled, &g, 1.6, 2.2, 0, &opts).unwrap();
        assert!((a.residual - b.residual).abs() <= 1e-10);
    }

    #[test]
    fn representation_rejects_weight() {
        let m = model(16, 16.0);
        let g = Multiplier::gaussian(1.0, 0.05);
        let e = representation_check(&m, &g, 1.6, 2.0, 0, &RepresentationOptions::default());
        assert!(matches!(e, Err(Error::NonIntegrableWeight { .. })));
    }

    fn experiment(family: Vec<Multiplier>, p: f64) -> CalculusExperiment {
        CalculusExperiment {
            model: model(64, 64.0),
            partition: DyadicPartition::new(-30, 30).unwrap(),
            norm_window: (-12, 12),
            alpha: 1.6,
            p,
            family,
            dilations: (-2, 2),
            budget: SearchBudget { greedy_steps: 8, ..SearchBudget::default() },
            seed: 5,
        }
    }

    #[test]
    fn identity_ratio_is_reciprocal_norm() {
        let one = Multiplier::constant(Complex64::new(1.0, 0.0));
        let exp = experiment(vec![one.clone()], 4.0);
        let norm = hormander_norm(&one, 1.6, &exp.partition, exp.norm_window).unwrap().value;
        let r = calculus_norm_experiment(&exp).unwrap();
        assert!((r.best_constant - 1.0 / norm).abs() < 1e-12, "{} vs {}", r.best_constant, 1.0 / norm);
    }

    #[test]
    fn unimodular_power_has_unit_l2_norm() {
        let m = model(64, 64.0);
        for s in [0.5, 2.0] {
            let n = operator_norm(&m, &Multiplier::power_is(s), 1.0, 2.0, &SearchBudget::default(), 0).unwrap();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_norm_rejected() {
        let f = Multiplier::custom("no-zero", |l| Complex64::new(l.cos(), 0.0), None);
        assert!(matches!(calculus_norm_experiment(&experiment(vec![f], 2.0)), Err(Error::InfiniteNorm(_))));
    }

    #[test]
    fn homomorphism_and_semigroup_consistency() {
        let m = model(64, 64.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<Complex64> = (0..64).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let f = Multiplier::gaussian(1.0, 0.4);
        let g = Multiplier::sine_modulated(3.0);
        let fg = apply_multiplier(&m, &f.product(&g), &v).unwrap();
        let f_of_g = apply_multiplier(&m, &f, &apply_multiplier(&m, &g, &v).unwrap()).unwrap();
        assert!(fg.iter().zip(&f_of_g).all(|(a, b)| (a - b).norm() < 1e-12));
        let z = Complex64::new(0.7, 0.3);
        let a = apply_multiplier(&m, &Multiplier::exponential(z), &v).unwrap();
        let b = apply_semigroup(&m, ComplexTime::new(z).unwrap(), &v).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
        assert_eq!(Identity.apply(&v).unwrap(), v);
    }

    #[test]
    fn dilation_covariance_at_p2() {
        let m = model(64, 64.0);
        let f = Multiplier::gaussian(1.0, 0.3);
        let a = operator_norm(&m, &f.dilated(3), 8.0, 2.0, &SearchBudget::default(), 0).unwrap();
        let direct = m.eigenvalues().iter().map(|l| f.eval(l * 8.0).unwrap().norm()).fold(0.0, f64::max);
        assert_eq!(a, direct);
    }

    #[test]
    fn probe_single_term_matches_norm_experiment() {
        let exp = CalculusExperiment {
            dilations: (0, 0),
            ..experiment(vec![Multiplier::sine_modulated(2.0)], 4.0)
        };
        let single = calculus_norm_experiment(&exp).unwrap().best_constant;
        let probe = rbounded_calculus_probe(&exp, 1, exp.seed).unwrap().lower_estimate;
        assert!((single - probe).abs() <= 1e-12 * single);
    }

    #[test]
    fn probe_mixed_family_stable_across_seeds() {
        let exp = experiment(
            vec![Multiplier::sine_modulated(2.0), Multiplier::gaussian(1.0, 0.3), Multiplier::resolvent(1.0), Multiplier::power_is(1.0)],
            4.0,
        );
        let single = calculus_norm_experiment(&exp).unwrap().best_constant;
        for seed in [1, 2, 3] {
            let e = rbounded_calculus_probe(&exp, 8, seed).unwrap().lower_estimate;
            assert!(e <= 4.0 * single && e >= single / 4.0, "seed {seed}: {e} vs {single}");
        }
    }
}
