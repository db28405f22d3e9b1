//! Hörmander-class norms `‖f‖_{H^α}` and the classical Hörmander condition.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::Multiplier;
use crate::partition::DyadicPartition;
use crate::quad::{integrate, QuadOptions};

/// Samples must fall below this at both window ends.
pub const ENDPOINT_DECAY: f64 = 1e-12;
pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_HALF_WIDTH: f64 = 2.0;
pub const DEFAULT_WINDOW: (i32, i32) = (-16, 16);
/// Relative change under resolution doubling above which a norm is flagged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Samples `g(x_j)`, `x_j = −T + j h`, `h = 2T / N`, with `N` a power of two.
#[derive(Clone, Debug, PartialEq)]
pub struct SobolevSample {
    values: Vec<Complex64>,
    half_width: f64,
    order: f64,
}

impl SobolevSample {
    pub fn new(values: Vec<Complex64>, half_width: f64, order: f64) -> Result<Self> {
        if values.len() < 2 || !values.len().is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "sample count must be a power of two, got {}",
                values.len()
            )));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if !(order >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Sobolev order must be nonnegative, got {order}"
            )));
        }
        Ok(SobolevSample {
            values,
            half_width,
            order,
        })
    }

    pub fn from_fn<G: Fn(f64) -> Complex64>(g: G, half_width: f64, n: usize, order: f64) -> Result<Self> {
        let h = 2.0 * half_width / n as f64;
        let values = (0..n).map(|j| g(-half_width + j as f64 * h)).collect();
        Self::new(values, half_width, order)
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.values.len() as f64
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }
}

/// `((1/2π) ∫ (1+ξ²)^α |ĝ(ξ)|² dξ)^{1/2}` with `ĝ(ξ) = ∫ g(x) e^{−ixξ} dx`,
/// discretized by the FFT on the sample grid.
pub fn sobolev_norm(g: &SobolevSample) -> Result<f64> {
    let n = g.values.len();
    let sup = g.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = ENDPOINT_DECAY * sup.max(1.0);
    for &endpoint in &[g.values[0].norm(), g.values[n - 1].norm()] {
        if endpoint > tol {
            return Err(Error::WindowTooSmall {
                endpoint,
                tolerance: tol,
            });
        }
    }
    if sup == 0.0 {
        return Ok(0.0);
    }
    let mut buf = g.values.clone();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let h = g.step();
    let dxi = 2.0 * PI / (n as f64 * h);
    let total: f64 = buf
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let xi = kk * dxi;
            (1.0 + xi * xi).powf(g.order) * c.norm_sqr()
        })
        .sum();
    // |ĝ|² = h² |DFT|², and (1/2π) Δξ h² = h / N
    Ok((total * h / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HormanderOptions {
    /// Samples per dyadic window (a power of two).
    pub samples: usize,
    /// Half-width `T` of the log-scale window around `n ln 2`.
    pub half_width: f64,
    /// Recompute at doubled resolution and flag changes above tolerance.
    pub check_convergence: bool,
}

impl Default for HormanderOptions {
    fn default() -> Self {
        HormanderOptions {
            samples: DEFAULT_SAMPLES,
            half_width: DEFAULT_HALF_WIDTH,
            check_convergence: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormanderNormReport {
    pub label: String,
    pub alpha: f64,
    /// `|f(0)| + max` of the per-window terms; infinite when `f(0)` is
    /// undeclared.
    pub value: f64,
    pub f_at_zero: f64,
    /// `(n, ‖(φ_n f)∘exp‖_{W^α_2})` in increasing `n`.
    pub per_n_terms: Vec<(i32, f64)>,
    pub n_window: (i32, i32),
    pub samples: usize,
    pub converged: bool,
    /// Largest relative change of a per-window term under resolution doubling.
    pub resolution_change: f64,
}

impl HormanderNormReport {
    pub fn sup_term(&self) -> f64 {
        self.per_n_terms.iter().map(|t| t.1).fold(0.0, f64::max)
    }

    pub fn argmax_n(&self) -> Option<i32> {
        self.per_n_terms
            .iter()
            .fold(None, |best: Option<(i32, f64)>, &(n, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((n, v)),
            })
            .map(|b| b.0)
    }
}

fn dyadic_term(
    f: &Multiplier,
    alpha: f64,
    partition: &DyadicPartition,
    n: i32,
    samples: usize,
    half_width: f64,
) -> Result<f64> {
    let h = 2.0 * half_width / samples as f64;
    let scale = 2f64.powi(n);
    let mut values = Vec::with_capacity(samples);
    for j in 0..samples {
        // λ = 2^n e^{s'}: the power-of-two factor keeps dilations bit-exact
        let e = (-half_width + j as f64 * h).exp();
        let phi = partition.bump.eval(e);
        if phi == 0.0 {
            values.push(Complex64::new(0.0, 0.0));
        } else {
            values.push(f.eval(e * scale)? * phi);
        }
    }
    sobolev_norm(&SobolevSample::new(values, half_width, alpha)?)
}

/// `‖f‖_{H^α}` with the supremum over `n` truncated to `n_window`.
pub fn hormander_norm(
    f: &Multiplier,
    alpha: f64,
    partition: &DyadicPartition,
    n_window: (i32, i32),
) -> Result<HormanderNormReport> {
    hormander_norm_with(f, alpha, partition, n_window, HormanderOptions::default())
}

pub fn hormander_norm_with(
    f: &Multiplier,
    alpha: f64,
    partition: &DyadicPartition,
    n_window: (i32, i32),
    opts: HormanderOptions,
) -> Result<HormanderNormReport> {
    if !(alpha > 0.5) {
        return Err(Error::InvalidArgument(format!(
            "Hörmander order must exceed 1/2, got {alpha}"
        )));
    }
    let (lo, hi) = n_window;
    if lo > hi || lo < partition.n_min || hi > partition.n_max {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] not inside partition range [{}, {}]",
            partition.n_min, partition.n_max
        )));
    }
    if opts.half_width <= LN_2 {
        return Err(Error::InvalidArgument(format!(
            "half-width {} does not cover the bump support (needs > ln 2)",
            opts.half_width
        )));
    }
    let terms: Vec<Result<(f64, f64)>> = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let v = dyadic_term(f, alpha, partition, n, opts.samples, opts.half_width)?;
            let change = if opts.check_convergence {
                let fine = dyadic_term(f, alpha, partition, n, 2 * opts.samples, opts.half_width)?;
                if fine == 0.0 && v == 0.0 {
                    0.0
                } else {
                    (fine - v).abs() / fine.abs().max(v.abs())
                }
            } else {
                0.0
            };
            Ok((v, change))
        })
        .collect();
    let mut per_n_terms = Vec::with_capacity(terms.len());
    let mut resolution_change: f64 = 0.0;
    for (n, t) in (lo..=hi).zip(terms) {
        let (v, c) = t?;
        per_n_terms.push((n, v));
        resolution_change = resolution_change.max(c);
    }
    let f_at_zero = f.value_at_zero().map_or(f64::INFINITY, |c| c.norm());
    let sup = per_n_terms.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(HormanderNormReport {
        label: f.label().to_string(),
        alpha,
        value: f_at_zero + sup,
        f_at_zero,
        per_n_terms,
        n_window,
        samples: opts.samples,
        converged: resolution_change < CONVERGENCE_TOLERANCE,
        resolution_change,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub value: f64,
    /// `(k, R)` attaining the maximum.
    pub argmax: (usize, f64),
    /// Derivatives came from finite differences instead of exact jets.
    pub finite_difference: bool,
    pub converged: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central finite difference of order `k` with an `O(h²)` error.
fn fd_derivative(f: &Multiplier, t: f64, k: usize) -> Result<Complex64> {
    if k == 0 {
        return f.eval(t);
    }
    let h = t * f64::EPSILON.powf(1.0 / (k as f64 + 2.0));
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..=k {
        let x = t + (k as f64 / 2.0 - i as f64) * h;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += f.eval(x)? * (sign * binomial(k, i));
    }
    Ok(acc / h.powi(k as i32))
}

/// `max_{k ≤ N, R ∈ R_grid} ∫_{R/2}^{2R} |t^k f^{(k)}(t)|² dt/t`.
pub fn classical_hormander_sup(
    f: &Multiplier,
    order: usize,
    r_grid: &[f64],
    allow_finite_difference: bool,
) -> Result<ClassicalReport> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("R grid must be nonempty and positive".into()));
    }
    let exact = f.has_derivatives();
    if !exact && !allow_finite_difference {
        return Err(Error::MissingDerivatives(f.label().to_string()));
    }
    let mut best = 0.0;
    let mut argmax = (0, r_grid[0]);
    let mut converged = true;
    for &r in r_grid {
        // t = e^u turns dt/t into du
        let (a, b) = (r.ln() - LN_2, r.ln() + LN_2);
        let mut failure = None;
        let integrand = |u: f64, k: usize| -> f64 {
            let t = u.exp();
            let d = if exact {
                f.derivatives(t, k).map(|d| d[k])
            } else {
                fd_derivative(f, t, k).ok()
            };
            match d {
                Some(d) => (d * t.powi(k as i32)).norm_sqr(),
                None => f64::NAN,
            }
        };
        for k in 0..=order {
            let res = integrate(|u| integrand(u, k), &[a, 0.5 * (a + b), b], QuadOptions::default());
            if !res.value.is_finite() {
                failure = Some(Error::UndefinedMultiplier {
                    label: f.label().to_string(),
                    lambda: r,
                });
                break;
            }
            converged &= res.converged;
            if res.value > best {
                best = res.value;
                argmax = (k, r);
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(ClassicalReport {
        value: best,
        argmax,
        finite_difference: !exact,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    /// Measured `max ‖fg‖ / (‖f‖ ‖g‖)` over the pairs.
    pub constant: f64,
    pub ratios: Vec<f64>,
}

/// Measured algebra constant `K` with `‖fg‖_{H^α} ≤ K ‖f‖_{H^α} ‖g‖_{H^α}`.
pub fn algebra_constant(
    pairs: &[(Multiplier, Multiplier)],
    alpha: f64,
    partition: &DyadicPartition,
    n_window: (i32, i32),
) -> Result<AlgebraReport> {
    let opts = HormanderOptions {
        check_convergence: false,
        ..HormanderOptions::default()
    };
    let mut ratios = Vec::with_capacity(pairs.len());
    for (f, g) in pairs {
        let nf = hormander_norm_with(f, alpha, partition, n_window, opts)?.value;
        let ng = hormander_norm_with(g, alpha, partition, n_window, opts)?.value;
        let nfg = hormander_norm_with(&f.product(g), alpha, partition, n_window, opts)?.value;
        ratios.push(if nf * ng > 0.0 { nfg / (nf * ng) } else { 0.0 });
    }
    Ok(AlgebraReport {
        constant: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_to_infinity;
    use proptest::prelude::*;

    fn gaussian(order: f64) -> SobolevSample {
        SobolevSample::from_fn(|x| Complex64::new((-x * x).exp(), 0.0), 12.0, 4096, order).unwrap()
    }

    fn partition() -> DyadicPartition {
        DyadicPartition::new(-30, 30).unwrap()
    }

    #[test]
    fn gaussian_l2() {
        let v = sobolev_norm(&gaussian(0.0)).unwrap();
        assert!((v - (PI / 2.0).powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_h1_against_analytic_transform() {
        // ĝ(ξ) = √π e^{−ξ²/4}
        let q = integrate_to_infinity(
            |xi| (1.0 + xi * xi) * PI * (-xi * xi / 2.0).exp(),
            0.0,
            &[2.0, 6.0],
            QuadOptions::default(),
        );
        let oracle = (2.0 * q.value / (2.0 * PI)).sqrt();
        let v = sobolev_norm(&gaussian(1.0)).unwrap();
        assert!((v - oracle).abs() / oracle < 1e-3);
    }

    #[test]
    fn zero_and_window_errors() {
        let z = SobolevSample::new(vec![Complex64::new(0.0, 0.0); 64], 1.0, 1.0).unwrap();
        assert_eq!(sobolev_norm(&z).unwrap(), 0.0);
        let wide = SobolevSample::from_fn(|x| Complex64::new((-x * x).exp(), 0.0), 2.0, 256, 0.0).unwrap();
        assert!(matches!(sobolev_norm(&wide), Err(Error::WindowTooSmall { .. })));
        assert!(SobolevSample::new(vec![Complex64::new(0.0, 0.0); 100], 1.0, 0.0).is_err());
    }

    #[test]
    fn parseval_at_order_zero() {
        let g = SobolevSample::from_fn(
            |x| Complex64::new((-x * x).exp() * (3.0 * x).cos(), x * (-2.0 * x * x).exp()),
            8.0,
            2048,
            0.0,
        )
        .unwrap();
        let direct: f64 = g.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.step();
        let v = sobolev_norm(&g).unwrap();
        assert!((v * v - direct).abs() / direct < 1e-10);
    }

    #[test]
    fn constant_multiplier_profile_is_flat() {
        let p = partition();
        let r = hormander_norm(&Multiplier::constant(Complex64::new(1.0, 0.0)), 1.6, &p, (-4, 4)).unwrap();
        let first = r.per_n_terms[0].1;
        assert!(r.per_n_terms.iter().all(|t| t.1 == first));
        assert_eq!(r.value, 1.0 + first);
        assert!(r.converged);
        let zero = hormander_norm(&Multiplier::constant(Complex64::new(0.0, 0.0)), 1.6, &p, (-4, 4)).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn power_is_profile_matches_brute_force() {
        let p = partition();
        let f = Multiplier::power_is(5.0);
        let r = hormander_norm(&f, 1.6, &p, (0, 7)).unwrap();
        // independent oracle: Riemann-free quadrature of the continuous transform
        let brute = |n: i32| {
            let c = n as f64 * LN_2;
            let g = |s: f64| -> Complex64 {
                let phi = p.bump.eval((s - c).exp());
                Complex64::new(0.0, 5.0 * s).exp() * phi
            };
            let transform = |xi: f64| -> f64 {
                let re = integrate(|s| (g(s) * Complex64::new(0.0, -xi * s).exp()).re,
                    &[c - LN_2, c, c + LN_2], QuadOptions::default()).value;
                let im = integrate(|s| (g(s) * Complex64::new(0.0, -xi * s).exp()).im,
                    &[c - LN_2, c, c + LN_2], QuadOptions::default()).value;
                re * re + im * im
            };
            let pts: Vec<f64> = (0..=240).map(|i| -60.0 + 0.5 * i as f64).collect();
            let q = integrate(|xi| (1.0 + xi * xi).powf(1.6) * transform(xi), &pts,
                QuadOptions { abs_tol: 1e-10, rel_tol: 1e-8, max_intervals: 4000 });
            (q.value / (2.0 * PI)).sqrt()
        };
        for n in [0, 7] {
            let term = r.per_n_terms.iter().find(|t| t.0 == n).unwrap().1;
            let o = brute(n);
            assert!((term - o).abs() / o < 5e-3, "n={n}: {term} vs {o}");
        }
        let first = r.per_n_terms[0].1;
        assert!(r.per_n_terms.iter().all(|t| (t.1 - first).abs() / first < 1e-9));
    }

    #[test]
    fn dilation_permutes_profile() {
        let p = partition();
        let f = Multiplier::sine_modulated(2.0);
        let m = 3;
        let a = hormander_norm(&f, 1.2, &p, (-10, 10)).unwrap();
        let b = hormander_norm(&f.dilated(m), 1.2, &p, (-10 - m, 10 - m)).unwrap();
        for (ta, tb) in a.per_n_terms.iter().zip(&b.per_n_terms) {
            assert_eq!(ta.0, tb.0 + m);
            assert_eq!(ta.1, tb.1);
        }
    }

    #[test]
    fn undeclared_zero_is_infinite() {
        let f = Multiplier::custom("sin", |x| Complex64::new(x.sin(), 0.0), None);
        let r = hormander_norm(&f, 1.0, &partition(), (-2, 2)).unwrap();
        assert!(r.value.is_infinite());
    }

    #[test]
    fn rejects_small_alpha_and_bad_window() {
        let f = Multiplier::resolvent(1.0);
        assert!(hormander_norm(&f, 0.5, &partition(), (-2, 2)).is_err());
        assert!(hormander_norm(&f, 1.0, &partition(), (-40, 2)).is_err());
    }

    #[test]
    fn classical_condition_examples() {
        let one = Multiplier::constant(Complex64::new(1.0, 0.0));
        let r = classical_hormander_sup(&one, 3, &[0.5, 1.0, 8.0], false).unwrap();
        assert!((r.value - 4f64.ln()).abs() < 1e-10);
        let zero = Multiplier::constant(Complex64::new(0.0, 0.0));
        assert_eq!(classical_hormander_sup(&zero, 2, &[1.0], false).unwrap().value, 0.0);
    }

    #[test]
    fn classical_power_is_is_scale_free() {
        // |t^k (d/dt)^k t^{is}| = |is (is−1) ... (is−k+1)|
        let s = 1.5;
        let f = Multiplier::power_is(s);
        let falling = |k: usize| (0..k).fold(1.0, |acc, j| acc * (s * s + (j * j) as f64)).sqrt();
        let expect = (0..=2).map(|k| falling(k).powi(2) * 4f64.ln()).fold(0.0, f64::max);
        for r in [0.01, 1.0, 300.0] {
            let v = classical_hormander_sup(&f, 2, &[r], false).unwrap().value;
            assert!((v - expect).abs() / expect < 1e-9);
        }
    }

    #[test]
    fn classical_finite_difference_flagged() {
        let f = Multiplier::custom("res", |x| Complex64::new(1.0 / (1.0 + x), 0.0), Some(Complex64::new(1.0, 0.0)));
        assert!(classical_hormander_sup(&f, 2, &[1.0], false).is_err());
        let r = classical_hormander_sup(&f, 2, &[1.0], true).unwrap();
        assert!(r.finite_difference);
        let exact = classical_hormander_sup(&Multiplier::resolvent(1.0), 2, &[1.0], false).unwrap();
        assert!((r.value - exact.value).abs() / exact.value < 1e-4);
    }

    #[test]
    fn algebra_constant_is_recorded() {
        let fams = [
            Multiplier::resolvent(0.5),
            Multiplier::sine_modulated(1.0),
            Multiplier::bump_dilate(1, 1.0),
        ];
        let pairs: Vec<_> = fams
            .iter()
            .flat_map(|f| fams.iter().map(move |g| (f.clone(), g.clone())))
            .collect();
        let r = algebra_constant(&pairs, 1.0, &partition(), (-6, 6)).unwrap();
        assert!(r.constant.is_finite() && r.constant > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn monotone_in_alpha(a1 in 0.6f64..2.0, da in 0.0f64..1.0, w in 0.1f64..4.0) {
            let p = partition();
            let f = Multiplier::sine_modulated(w);
            let opts = HormanderOptions { check_convergence: false, ..Default::default() };
            let lo = hormander_norm_with(&f, a1, &p, (-3, 3), opts).unwrap().value;
            let hi = hormander_norm_with(&f, a1 + da, &p, (-3, 3), opts).unwrap().value;
            prop_assert!(lo <= hi * (1.0 + 1e-14));
        }
    }
}
