//! Lower estimates of R-bounds through Rademacher averages and square
//! functions on `L^p` of a grid, with witness search over finite families.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::Multiplier;
use crate::operators::{ComplexTime, SpectralModel};
use crate::partition::SmoothBump;
use crate::report::{cone_growth_fit, PowerFit};
use crate::space::MetricMeasureGrid;

/// Largest family size for exact sign enumeration.
pub const MAX_EXACT_TERMS: usize = 14;
/// Monte Carlo signs are drawn in chunks with one RNG stream per chunk, so
/// results do not depend on the thread count.
const MC_CHUNK: usize = 4096;

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::ExponentOutOfRange(p));
    }
    Ok(())
}

/// `Σ |v_i|^p μ_i`, with a fast path for the common even exponents.
fn lp_power_sum(v: &[Complex64], p: f64, weights: &[f64]) -> f64 {
    let mut s = 0.0;
    if p == 2.0 {
        for (x, w) in v.iter().zip(weights) {
            s += x.norm_sqr() * w;
        }
    } else if p == 4.0 {
        for (x, w) in v.iter().zip(weights) {
            let q = x.norm_sqr();
            s += q * q * w;
        }
    } else {
        let half = 0.5 * p;
        for (x, w) in v.iter().zip(weights) {
            s += x.norm_sqr().powf(half) * w;
        }
    }
    s
}

/// `‖v‖_{L^p(μ)}`.
pub fn lp_norm(v: &[Complex64], p: f64, grid: &MetricMeasureGrid) -> Result<f64> {
    check_p(p)?;
    if v.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "vector of length {} on a grid of {} points",
            v.len(),
            grid.len()
        )));
    }
    Ok(lp_power_sum(v, p, grid.weights()).powf(1.0 / p))
}

/// `‖(Σ_k |x_k|²)^{1/2}‖_{L^p(μ)}`.
pub fn square_function_norm(vectors: &[Vec<Complex64>], p: f64, grid: &MetricMeasureGrid) -> Result<f64> {
    check_p(p)?;
    let n = check_vectors(vectors, grid.len())?;
    let pointwise: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(vectors.iter().map(|v| v[i].norm_sqr()).sum::<f64>().sqrt(), 0.0))
        .collect();
    lp_norm(&pointwise, p, grid)
}

fn check_vectors(vectors: &[Vec<Complex64>], len: usize) -> Result<usize> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("empty vector family".into()));
    }
    if vectors.iter().any(|v| v.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "all vectors must have the grid length {len}"
        )));
    }
    Ok(len)
}

/// A bounded operator on functions over a grid.
pub trait LinearOperator: Sync {
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>>;
    /// Adjoint with respect to `Σ_i u_i conj(v_i)`.
    fn apply_adjoint(&self, v: &[Complex64]) -> Result<Vec<Complex64>>;
}

pub struct Identity;

impl LinearOperator for Identity {
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(v.to_vec())
    }
    fn apply_adjoint(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(v.to_vec())
    }
}

/// `f(A)` with the symbol precomputed on the eigenvalues of a model.
#[derive(Clone)]
pub struct SpectralOperator<'a> {
    model: &'a SpectralModel,
    symbol: Vec<Complex64>,
}

impl<'a> SpectralOperator<'a> {
    pub fn from_multiplier(model: &'a SpectralModel, f: &Multiplier) -> Result<Self> {
        let symbol = model.eigenvalues().iter().map(|&l| f.eval(l)).collect::<Result<_>>()?;
        Ok(SpectralOperator { model, symbol })
    }

    pub fn semigroup(model: &'a SpectralModel, z: ComplexTime) -> Self {
        let z = z.z();
        let symbol = model.eigenvalues().iter().map(|&l| (-z * l).exp()).collect();
        SpectralOperator { model, symbol }
    }

    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    pub fn model(&self) -> &SpectralModel {
        self.model
    }
}

impl LinearOperator for SpectralOperator<'_> {
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut hat = self.model.forward(v)?;
        for (c, s) in hat.iter_mut().zip(&self.symbol) {
            *c *= s;
        }
        self.model.backward(&hat)
    }

    fn apply_adjoint(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut hat = self.model.forward(v)?;
        for (c, s) in hat.iter_mut().zip(&self.symbol) {
            *c *= s.conj();
        }
        self.model.backward(&hat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum RademacherMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherResult {
    /// `(𝔼 ‖Σ ε_k y_k‖_p²)^{1/2}`.
    pub value: f64,
    /// Standard error of `value` (zero for exact enumeration).
    pub std_error: f64,
    pub patterns: usize,
}

/// Rademacher average of precomputed vectors `y_k`.
pub fn rademacher_of_vectors(
    ys: &[Vec<Complex64>],
    p: f64,
    grid: &MetricMeasureGrid,
    mode: RademacherMode,
) -> Result<RademacherResult> {
    check_p(p)?;
    let len = check_vectors(ys, grid.len())?;
    let n = ys.len();
    let w = grid.weights();
    let sq_norm = |s: &[Complex64]| lp_power_sum(s, p, w).powf(2.0 / p);
    match mode {
        RademacherMode::Exact => {
            if n > MAX_EXACT_TERMS {
                return Err(Error::TooManyTerms {
                    got: n,
                    max: MAX_EXACT_TERMS,
                });
            }
            // ε and −ε give the same norm: fix ε_0 = +1 and walk a Gray code
            // over the remaining signs
            let mut signs = vec![1.0f64; n];
            let mut s: Vec<Complex64> = (0..len).map(|i| ys.iter().map(|y| y[i]).sum()).collect();
            let patterns = 1usize << (n - 1);
            let mut total = sq_norm(&s);
            for g in 1..patterns {
                let k = g.trailing_zeros() as usize + 1;
                let delta = -2.0 * signs[k];
                signs[k] = -signs[k];
                for (si, yi) in s.iter_mut().zip(&ys[k]) {
                    *si += yi * delta;
                }
                total += sq_norm(&s);
            }
            Ok(RademacherResult {
                value: (total / patterns as f64).sqrt(),
                std_error: 0.0,
                patterns,
            })
        }
        RademacherMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("Monte Carlo needs at least 2 samples".into()));
            }
            let chunks = samples.div_ceil(MC_CHUNK);
            let partial: Vec<(f64, f64)> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(c as u64);
                    let count = MC_CHUNK.min(samples - c * MC_CHUNK);
                    let mut s = vec![Complex64::new(0.0, 0.0); len];
                    let (mut acc, mut acc2) = (0.0, 0.0);
                    for _ in 0..count {
                        s.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
                        for y in ys {
                            let e = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            for (si, yi) in s.iter_mut().zip(y) {
                                *si += yi * e;
                            }
                        }
                        let v = sq_norm(&s);
                        acc += v;
                        acc2 += v * v;
                    }
                    (acc, acc2)
                })
                .collect();
            let (sum, sum2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let m = samples as f64;
            let mean = sum / m;
            let var = ((sum2 / m - mean * mean) * m / (m - 1.0)).max(0.0);
            let value = mean.sqrt();
            let se_mean = (var / m).sqrt();
            Ok(RademacherResult {
                value,
                std_error: if value > 0.0 { se_mean / (2.0 * value) } else { 0.0 },
                patterns: samples,
            })
        }
    }
}

/// `(𝔼 ‖Σ ε_k T_k x_k‖_p²)^{1/2}`.
pub fn rademacher_average(
    operators: &[&dyn LinearOperator],
    vectors: &[Vec<Complex64>],
    p: f64,
    grid: &MetricMeasureGrid,
    mode: RademacherMode,
) -> Result<RademacherResult> {
    if operators.len() != vectors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} operators for {} vectors",
            operators.len(),
            vectors.len()
        )));
    }
    let ys = operators
        .iter()
        .zip(vectors)
        .map(|(t, x)| t.apply(x))
        .collect::<Result<Vec<_>>>()?;
    rademacher_of_vectors(&ys, p, grid, mode)
}

/// Boyd's power iteration for `‖T‖_{p→p}` on a uniform grid. Returns the
/// best ratio seen and the vector attaining it; the value is a lower
/// estimate that is exact for entrywise nonnegative kernels.
pub fn boyd_power_iteration(
    op: &dyn LinearOperator,
    p: f64,
    start: &[Complex64],
    max_iter: usize,
) -> Result<(f64, Vec<Complex64>)> {
    check_p(p)?;
    let q = p / (p - 1.0);
    let ones = vec![1.0; start.len()];
    let norm = |v: &[Complex64], r: f64| lp_power_sum(v, r, &ones).powf(1.0 / r);
    // duality map v ↦ |v|^{r−1} sgn(v) / ‖v‖_r^{r−1}
    let dual = |v: &[Complex64], r: f64| -> Vec<Complex64> {
        let nv = norm(v, r);
        if nv == 0.0 {
            return vec![Complex64::new(0.0, 0.0); v.len()];
        }
        v.iter()
            .map(|x| {
                let a = x.norm();
                if a == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    x / a * (a / nv).powf(r - 1.0)
                }
            })
            .collect()
    };
    let n0 = norm(start, p);
    if n0 == 0.0 {
        return Err(Error::InvalidArgument("Boyd iteration needs a nonzero start".into()));
    }
    let mut x: Vec<Complex64> = start.iter().map(|v| v / n0).collect();
    let mut best = (0.0, x.clone());
    for _ in 0..max_iter {
        let y = op.apply(&x)?;
        let ny = norm(&y, p);
        if ny > best.0 {
            best = (ny, x.clone());
        }
        if ny == 0.0 {
            break;
        }
        let z = op.apply_adjoint(&dual(&y, p))?;
        let nz = norm(&z, q);
        let pairing: f64 = z.iter().zip(&x).map(|(a, b)| (a * b.conj()).re).sum();
        if nz <= pairing * (1.0 + 1e-13) {
            break;
        }
        x = dual(&z, q);
    }
    Ok(best)
}

/// Dense kernel operator `(Kv)_x = Σ_y K_{xy} v_y` (counting measure).
pub struct DenseOperator {
    size: usize,
    data: Vec<Complex64>,
}

impl DenseOperator {
    pub fn new(size: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::InvalidArgument("dense operator must be square".into()));
        }
        Ok(DenseOperator { size, data })
    }

    /// The matrix of a spectral operator in the point basis.
    pub fn from_operator(op: &dyn LinearOperator, size: usize) -> Result<Self> {
        let mut data = vec![Complex64::new(0.0, 0.0); size * size];
        for y in 0..size {
            let mut e = vec![Complex64::new(0.0, 0.0); size];
            e[y] = Complex64::new(1.0, 0.0);
            let col = op.apply(&e)?;
            for x in 0..size {
                data[x * size + y] = col[x];
            }
        }
        Ok(DenseOperator { size, data })
    }

    /// Entrywise modulus `|K|`.
    pub fn modulus(&self) -> Self {
        DenseOperator {
            size: self.size,
            data: self.data.iter().map(|c| Complex64::new(c.norm(), 0.0)).collect(),
        }
    }
}

impl LinearOperator for DenseOperator {
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok((0..self.size)
            .map(|x| self.data[x * self.size..(x + 1) * self.size].iter().zip(v).map(|(k, u)| k * u).sum())
            .collect())
    }

    fn apply_adjoint(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.size];
        for x in 0..self.size {
            for y in 0..self.size {
                out[y] += self.data[x * self.size + y].conj() * v[x];
            }
        }
        Ok(out)
    }
}

/// A finite operator family on a model, each member acting at a
/// characteristic scale used to target band-limited witnesses.
pub struct OperatorFamily<'a> {
    model: &'a SpectralModel,
    members: Vec<SpectralOperator<'a>>,
    scales: Vec<f64>,
    labels: Vec<String>,
}

impl<'a> OperatorFamily<'a> {
    /// `{exp(−e^{iθ} 2^j t A) : j ∈ j_range}`.
    pub fn poisson(model: &'a SpectralModel, theta: f64, t: f64, j_range: (i32, i32)) -> Result<Self> {
        if j_range.0 > j_range.1 {
            return Err(Error::InvalidArgument("empty j range".into()));
        }
        let mut members = Vec::new();
        let mut scales = Vec::new();
        let mut labels = Vec::new();
        for j in j_range.0..=j_range.1 {
            let s = 2f64.powi(j) * t;
            members.push(SpectralOperator::semigroup(model, ComplexTime::from_polar(s, theta)?));
            scales.push(s);
            labels.push(format!("j={j}"));
        }
        Ok(OperatorFamily {
            model,
            members,
            scales,
            labels,
        })
    }

    /// `{f_i(A)}` with scales `scales[i]` (the reciprocal of the spectral
    /// band each member is localized to).
    pub fn from_multipliers(model: &'a SpectralModel, fs: &[Multiplier], scales: &[f64]) -> Result<Self> {
        if fs.len() != scales.len() || fs.is_empty() {
            return Err(Error::InvalidArgument("one positive scale per multiplier required".into()));
        }
        Ok(OperatorFamily {
            model,
            members: fs.iter().map(|f| SpectralOperator::from_multiplier(model, f)).collect::<Result<_>>()?,
            scales: scales.to_vec(),
            labels: fs.iter().map(|f| f.label().to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &SpectralOperator<'a> {
        &self.members[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn model(&self) -> &SpectralModel {
        self.model
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactEnumeration,
    MonteCarlo,
    SquareFunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub gaussian_trials: usize,
    /// Band offsets `o`: vectors `φ_0(2^o s_k A) g` for member scale `s_k`.
    pub band_offsets: (i32, i32),
    pub bump_trials: usize,
    pub boyd_trials: usize,
    pub boyd_iterations: usize,
    pub greedy_steps: usize,
    /// Monte Carlo sample count used when the family exceeds exact size, or
    /// when `method` asks for it.
    pub mc_samples: usize,
    pub method: Method,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            gaussian_trials: 12,
            band_offsets: (-2, 6),
            bump_trials: 6,
            boyd_trials: 4,
            boyd_iterations: 40,
            greedy_steps: 24,
            mc_samples: 10_000,
            method: Method::ExactEnumeration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub members: Vec<usize>,
    pub vectors: Vec<Vec<Complex64>>,
    pub strategy: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundEstimate {
    pub lower_estimate: f64,
    pub p: f64,
    pub method: Method,
    pub witness: Witness,
    /// Best ratio found among families of each size `m = 1..=n_terms`.
    pub per_size: Vec<f64>,
    pub candidates: usize,
    pub seed: u64,
    /// Standard error of the ratio when sampled (zero when exact).
    pub std_error: f64,
}

struct Ratio {
    value: f64,
    std_error: f64,
}

fn witness_ratio(family: &OperatorFamily, members: &[usize], vectors: &[Vec<Complex64>], p: f64, budget: &SearchBudget, seed: u64) -> Result<Ratio> {
    let grid = family.model.grid();
    let ys = members
        .iter()
        .zip(vectors)
        .map(|(&k, x)| family.members[k].apply(x))
        .collect::<Result<Vec<_>>>()?;
    let method = effective_method(budget, members.len());
    let (num, den) = match method {
        Method::SquareFunction => (
            Ratio { value: square_function_norm(&ys, p, grid)?, std_error: 0.0 },
            Ratio { value: square_function_norm(vectors, p, grid)?, std_error: 0.0 },
        ),
        _ => {
            let mode = if method == Method::ExactEnumeration {
                RademacherMode::Exact
            } else {
                RademacherMode::MonteCarlo { samples: budget.mc_samples, seed }
            };
            let a = rademacher_of_vectors(&ys, p, grid, mode)?;
            let b = rademacher_of_vectors(vectors, p, grid, mode)?;
            (
                Ratio { value: a.value, std_error: a.std_error },
                Ratio { value: b.value, std_error: b.std_error },
            )
        }
    };
    if den.value == 0.0 {
        return Ok(Ratio { value: 0.0, std_error: 0.0 });
    }
    let value = num.value / den.value;
    let rel = (num.std_error / num.value.max(f64::MIN_POSITIVE)).hypot(den.std_error / den.value);
    Ok(Ratio { value, std_error: value * rel })
}

fn effective_method(budget: &SearchBudget, n: usize) -> Method {
    match budget.method {
        Method::ExactEnumeration if n > MAX_EXACT_TERMS => Method::MonteCarlo,
        m => m,
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect()
}

fn band_vector(model: &SpectralModel, rng: &mut ChaCha8Rng, scale: f64) -> Result<Option<Vec<Complex64>>> {
    let bump = SmoothBump;
    let g = gaussian_vector(rng, model.len());
    let mut hat = model.forward(&g)?;
    let mut any = false;
    for (c, &l) in hat.iter_mut().zip(model.eigenvalues()) {
        let w = bump.eval(scale * l);
        any |= w > 0.0;
        *c *= w;
    }
    if !any {
        return Ok(None);
    }
    // real symbol keeps the vector real up to rounding
    Ok(Some(model.backward(&hat)?.into_iter().map(|c| Complex64::new(c.re, 0.0)).collect()))
}

fn bump_vector(model: &SpectralModel, rng: &mut ChaCha8Rng, scale: f64) -> Result<Vec<Complex64>> {
    let n = model.len();
    let mut delta = vec![Complex64::new(0.0, 0.0); n];
    delta[rng.random_range(0..n)] = Complex64::new(1.0, 0.0);
    let t = ComplexTime::real(scale.max(model.grid().spacing()))?;
    let out = crate::operators::apply_semigroup(model, t, &delta)?;
    Ok(out.into_iter().map(|c| Complex64::new(c.re.max(0.0), 0.0)).collect())
}

fn search_size(family: &OperatorFamily, p: f64, m: usize, budget: &SearchBudget, seed: u64) -> Result<(f64, f64, Witness, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    let n = family.model.len();
    let size = m.min(family.len());
    let mut best: Option<(f64, f64, Witness)> = None;
    let mut candidates = 0usize;
    let mut consider = |members: Vec<usize>, vectors: Vec<Vec<Complex64>>, strategy: &str, rng: &mut ChaCha8Rng| -> Result<()> {
        let mc_seed = rng.random::<u64>();
        let r = witness_ratio(family, &members, &vectors, p, budget, mc_seed)?;
        candidates += 1;
        if best.as_ref().is_none_or(|b| r.value > b.0) {
            best = Some((r.value, r.std_error, Witness { members, vectors, strategy: strategy.to_string() }));
        }
        Ok(())
    };
    let pick = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut v = sample_indices(rng, family.len(), size).into_vec();
        v.sort_unstable();
        v
    };
    for _ in 0..budget.gaussian_trials {
        let members = pick(&mut rng);
        let vectors = members.iter().map(|_| gaussian_vector(&mut rng, n)).collect();
        consider(members, vectors, "gaussian", &mut rng)?;
    }
    for o in budget.band_offsets.0..=budget.band_offsets.1 {
        let members = pick(&mut rng);
        let mut vectors = Vec::with_capacity(size);
        for &k in &members {
            match band_vector(family.model, &mut rng, 2f64.powi(o) * family.scales[k])? {
                Some(v) => vectors.push(v),
                None => break,
            }
        }
        if vectors.len() == members.len() {
            consider(members, vectors, &format!("band({o})"), &mut rng)?;
        }
    }
    // bottom of the spectrum: the zero mode and the lowest nonzero band
    {
        let members = pick(&mut rng);
        let vectors = members.iter().map(|_| vec![Complex64::new(1.0, 0.0); n]).collect();
        consider(members, vectors, "constant", &mut rng)?;
    }
    if let Some(&lowest) = family.model.eigenvalues().iter().filter(|&&l| l > 0.0).min_by(|a, b| a.total_cmp(b)) {
        let members = pick(&mut rng);
        let vectors = members
            .iter()
            .map(|_| band_vector(family.model, &mut rng, 1.0 / lowest).map(|v| v.expect("band holds the lowest eigenvalue")))
            .collect::<Result<_>>()?;
        consider(members, vectors, "lowest-band", &mut rng)?;
    }
    for _ in 0..budget.bump_trials {
        let members = pick(&mut rng);
        let vectors = members
            .iter()
            .map(|&k| bump_vector(family.model, &mut rng, family.scales[k]))
            .collect::<Result<_>>()?;
        consider(members, vectors, "positive-bump", &mut rng)?;
    }
    // per-member norm maximizers from Boyd's iteration started at bumps
    for _ in 0..budget.boyd_trials {
        let members = pick(&mut rng);
        let mut vectors = Vec::with_capacity(size);
        for &k in &members {
            let start = bump_vector(family.model, &mut rng, family.scales[k])?;
            vectors.push(boyd_power_iteration(&family.members[k], p, &start, budget.boyd_iterations)?.1);
        }
        consider(members, vectors, "boyd", &mut rng)?;
    }
    let Some((mut value, mut se, mut witness)) = best else {
        return Ok((0.0, 0.0, Witness { members: vec![], vectors: vec![], strategy: "none".into() }, candidates));
    };
    // greedy coordinate ascent on the vectors of the best witness
    let mut step = 0.5;
    for _ in 0..budget.greedy_steps {
        let i = rng.random_range(0..witness.vectors.len());
        let dir = if rng.random::<bool>() {
            gaussian_vector(&mut rng, n)
        } else {
            band_vector(family.model, &mut rng, family.scales[witness.members[i]])?.unwrap_or_else(|| gaussian_vector(&mut rng, n))
        };
        let scale = step * lp_norm(&witness.vectors[i], 2.0, family.model.grid())? / lp_norm(&dir, 2.0, family.model.grid())?.max(f64::MIN_POSITIVE);
        let mut trial = witness.vectors.clone();
        for (a, b) in trial[i].iter_mut().zip(&dir) {
            *a += b * scale;
        }
        let mc_seed = rng.random::<u64>();
        let r = witness_ratio(family, &witness.members, &trial, p, budget, mc_seed)?;
        candidates += 1;
        if r.value > value {
            value = r.value;
            se = r.std_error;
            witness.vectors = trial;
            witness.strategy = format!("{}+greedy", witness.strategy.trim_end_matches("+greedy"));
        } else {
            step *= 0.8;
        }
    }
    Ok((value, se, witness, candidates))
}

/// Largest witnessed Rademacher ratio `Rad(T_{k_i} f_i) / Rad(f_i)` over
/// families of size `1..=n_terms`. Each size uses its own seeded stream, so
/// estimates for nested `n_terms` with one seed are nondecreasing.
pub fn estimate_rbound(family: &OperatorFamily, p: f64, n_terms: usize, budget: &SearchBudget, seed: u64) -> Result<RBoundEstimate> {
    check_p(p)?;
    if n_terms == 0 {
        return Err(Error::InvalidArgument("n_terms must be positive".into()));
    }
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty operator family".into()));
    }
    let runs: Vec<(f64, f64, Witness, usize)> = (1..=n_terms)
        .into_par_iter()
        .map(|m| search_size(family, p, m, budget, seed))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.0 > runs[best].0 {
            best = i;
        }
    }
    let candidates = runs.iter().map(|r| r.3).sum();
    let per_size = runs.iter().map(|r| r.0).collect();
    let (value, se, witness, _) = runs.into_iter().nth(best).expect("at least one size");
    Ok(RBoundEstimate {
        lower_estimate: value,
        p,
        method: effective_method(budget, witness.members.len()),
        witness,
        per_size,
        candidates,
        seed,
        std_error: se,
    })
}

/// Recompute the ratio realized by a stored witness.
pub fn reevaluate(family: &OperatorFamily, estimate: &RBoundEstimate, budget: &SearchBudget, mc_seed: u64) -> Result<f64> {
    Ok(witness_ratio(family, &estimate.witness.members, &estimate.witness.vectors, estimate.p, budget, mc_seed)?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub base: f64,
    pub widened: f64,
    pub relative_change: f64,
    pub saturated: bool,
}

/// Compare the estimate on `j_range` with the range widened by 4 (two on
/// each side); saturated when the change is below 1%.
pub fn j_range_saturation(
    model: &SpectralModel,
    theta: f64,
    t: f64,
    j_range: (i32, i32),
    p: f64,
    n_terms: usize,
    budget: &SearchBudget,
    seed: u64,
) -> Result<Saturation> {
    let base = estimate_rbound(&OperatorFamily::poisson(model, theta, t, j_range)?, p, n_terms, budget, seed)?.lower_estimate;
    let wide = (j_range.0 - 2, j_range.1 + 2);
    let widened = estimate_rbound(&OperatorFamily::poisson(model, theta, t, wide)?, p, n_terms, budget, seed)?.lower_estimate;
    let relative_change = (widened - base).abs() / base.max(f64::MIN_POSITIVE);
    Ok(Saturation {
        base,
        widened,
        relative_change,
        saturated: relative_change < 0.01,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub fit: PowerFit,
    /// Estimates (or angles) carried no signal; the exponent is reported as 0.
    pub degenerate: bool,
}

/// Least-squares slope of `log estimate` against `−log(π/2 − |θ|)`.
pub fn fit_theta_exponent(thetas: &[f64], estimates: &[f64]) -> Result<ThetaFit> {
    if thetas.len() < 4 || thetas.len() != estimates.len() {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 matching (theta, estimate) pairs, got {} and {}",
            thetas.len(),
            estimates.len()
        )));
    }
    if estimates.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("estimates must be positive".into()));
    }
    if thetas.iter().any(|t| !(t.abs() < FRAC_PI_2)) {
        return Err(Error::InvalidArgument("angles must satisfy |theta| < pi/2".into()));
    }
    let constant = estimates.iter().all(|e| *e == estimates[0]);
    match cone_growth_fit(thetas, estimates) {
        Some(fit) if !constant => Ok(ThetaFit { fit, degenerate: false }),
        _ => Ok(ThetaFit {
            fit: PowerFit {
                exponent: 0.0,
                intercept: estimates[0].ln(),
                residual: 0.0,
            },
            degenerate: true,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_poisson_model;
    use crate::space::build_torus_grid;

    fn model(n: usize, l: f64) -> SpectralModel {
        build_poisson_model(&build_torus_grid(1, n, l).unwrap()).unwrap()
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn square_function_examples() {
        let g = build_torus_grid(1, 16, 16.0).unwrap();
        let a: Vec<Complex64> = (0..16).map(|i| c(if i < 4 { 1.0 } else { 0.0 })).collect();
        let b: Vec<Complex64> = (0..16).map(|i| c(if (8..10).contains(&i) { 2.0 } else { 0.0 })).collect();
        assert!((square_function_norm(std::slice::from_ref(&a), 3.0, &g).unwrap() - lp_norm(&a, 3.0, &g).unwrap()).abs() < 1e-15);
        // disjoint supports at p = 4: (4·1 + 2·16)^{1/4}
        let s = square_function_norm(&[a.clone(), b.clone()], 4.0, &g).unwrap();
        assert!((s - 36f64.powf(0.25)).abs() < 1e-14);
        let s2 = square_function_norm(&[a.clone(), b.clone()], 2.0, &g).unwrap();
        let fubini = (lp_norm(&a, 2.0, &g).unwrap().powi(2) + lp_norm(&b, 2.0, &g).unwrap().powi(2)).sqrt();
        assert!((s2 - fubini).abs() < 1e-14);
        assert!(matches!(square_function_norm(&[a], 1.0, &g), Err(Error::ExponentOutOfRange(_))));
    }

    #[test]
    fn rademacher_examples() {
        let g = build_torus_grid(1, 16, 16.0).unwrap();
        let x: Vec<Complex64> = (0..16).map(|i| c((i as f64).sin())).collect();
        let r = rademacher_average(&[&Identity], std::slice::from_ref(&x), 3.0, &g, RademacherMode::Exact).unwrap();
        assert!((r.value - lp_norm(&x, 3.0, &g).unwrap()).abs() < 1e-14);
        let a: Vec<Complex64> = (0..16).map(|i| c(if i < 8 { 1.0 } else { 0.0 })).collect();
        let b: Vec<Complex64> = (0..16).map(|i| c(if i >= 8 { 3.0 } else { 0.0 })).collect();
        let r = rademacher_average(&[&Identity, &Identity], &[a.clone(), b.clone()], 2.0, &g, RademacherMode::Exact).unwrap();
        let direct = (lp_norm(&a, 2.0, &g).unwrap().powi(2) + lp_norm(&b, 2.0, &g).unwrap().powi(2)).sqrt();
        assert!((r.value - direct).abs() < 1e-13);
        let many = vec![x.clone(); 15];
        assert!(matches!(
            rademacher_of_vectors(&many, 2.0, &g, RademacherMode::Exact),
            Err(Error::TooManyTerms { .. })
        ));
    }

    #[test]
    fn exact_enumeration_matches_brute_force() {
        let g = build_torus_grid(1, 8, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ys: Vec<Vec<Complex64>> = (0..5).map(|_| gaussian_vector(&mut rng, 8)).collect();
        let exact = rademacher_of_vectors(&ys, 4.0 / 3.0, &g, RademacherMode::Exact).unwrap().value;
        let mut total = 0.0;
        for mask in 0..32u32 {
            let s: Vec<Complex64> = (0..8)
                .map(|i| ys.iter().enumerate().map(|(k, y)| y[i] * if mask >> k & 1 == 1 { -1.0 } else { 1.0 }).sum())
                .collect();
            total += lp_norm(&s, 4.0 / 3.0, &g).unwrap().powi(2);
        }
        assert!((exact - (total / 32.0).sqrt()).abs() < 1e-12 * exact);
    }

    #[test]
    fn monte_carlo_close_to_exact_and_reproducible() {
        let g = build_torus_grid(1, 32, 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ys: Vec<Vec<Complex64>> = (0..8).map(|_| gaussian_vector(&mut rng, 32)).collect();
        let exact = rademacher_of_vectors(&ys, 4.0, &g, RademacherMode::Exact).unwrap().value;
        let mode = RademacherMode::MonteCarlo { samples: 20_000, seed: 1 };
        let mc = rademacher_of_vectors(&ys, 4.0, &g, mode).unwrap();
        assert!((mc.value - exact).abs() < 5.0 * mc.std_error + 1e-3 * exact);
        assert_eq!(mc, rademacher_of_vectors(&ys, 4.0, &g, mode).unwrap());
    }

    #[test]
    fn p_two_ceiling_and_lower_witness() {
        let m = model(64, 64.0);
        for theta in [0.0, 1.0, FRAC_PI_2 - 0.01] {
            let fam = OperatorFamily::poisson(&m, theta, 0.75, (-1, 4)).unwrap();
            let e = estimate_rbound(&fam, 2.0, 4, &SearchBudget::default(), 3).unwrap();
            assert!(e.lower_estimate <= 1.0 + 1e-9, "theta={theta}: {}", e.lower_estimate);
            assert!(e.lower_estimate >= 0.99, "theta={theta}: {}", e.lower_estimate);
        }
    }

    #[test]
    fn witness_reproduces_estimate() {
        let m = model(64, 64.0);
        let fam = OperatorFamily::poisson(&m, 1.2, 0.75, (0, 5)).unwrap();
        let budget = SearchBudget::default();
        let e = estimate_rbound(&fam, 4.0, 4, &budget, 11).unwrap();
        let again = reevaluate(&fam, &e, &budget, 0).unwrap();
        assert!((again - e.lower_estimate).abs() <= 1e-10 * e.lower_estimate);
    }

    #[test]
    fn nested_sizes_monotone_and_deterministic() {
        let m = model(64, 64.0);
        let fam = OperatorFamily::poisson(&m, 1.3, 0.75, (0, 6)).unwrap();
        let budget = SearchBudget { greedy_steps: 8, ..SearchBudget::default() };
        let mut prev = 0.0;
        for n in 1..=5 {
            let e = estimate_rbound(&fam, 4.0, n, &budget, 21).unwrap();
            assert!(e.lower_estimate >= prev);
            prev = e.lower_estimate;
        }
        let a = estimate_rbound(&fam, 4.0 / 3.0, 3, &budget, 2).unwrap();
        let b = estimate_rbound(&fam, 4.0 / 3.0, 3, &budget, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn theta_symmetry() {
        let m = model(64, 64.0);
        let budget = SearchBudget { greedy_steps: 8, ..SearchBudget::default() };
        let plus = estimate_rbound(&OperatorFamily::poisson(&m, 1.1, 0.75, (0, 5)).unwrap(), 4.0, 3, &budget, 4).unwrap();
        let minus = estimate_rbound(&OperatorFamily::poisson(&m, -1.1, 0.75, (0, 5)).unwrap(), 4.0, 3, &budget, 4).unwrap();
        assert!((plus.lower_estimate - minus.lower_estimate).abs() < 1e-9 * plus.lower_estimate);
    }

    #[test]
    fn single_member_against_boyd_on_modulus() {
        let m = model(64, 64.0);
        let fam = OperatorFamily::poisson(&m, 0.0, 0.75, (2, 2)).unwrap();
        let e = estimate_rbound(&fam, 4.0, 1, &SearchBudget::default(), 1).unwrap();
        let dense = DenseOperator::from_operator(fam.member(0), 64).unwrap().modulus();
        let start = vec![c(1.0); 64];
        let (oracle, _) = boyd_power_iteration(&dense, 4.0, &start, 200).unwrap();
        assert!(e.lower_estimate <= oracle * (1.0 + 1e-9));
        assert!(e.lower_estimate >= 0.99 * oracle);
    }

    #[test]
    fn real_time_estimate_stable_in_t() {
        let m = model(64, 64.0);
        let budget = SearchBudget { greedy_steps: 8, ..SearchBudget::default() };
        let vals: Vec<f64> = [0.5, 0.75, 1.0]
            .iter()
            .map(|&t| estimate_rbound(&OperatorFamily::poisson(&m, 0.0, t, (0, 4)).unwrap(), 4.0, 4, &budget, 8).unwrap().lower_estimate)
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
        assert!(hi.is_finite() && hi / lo < 1.5, "{vals:?}");
    }

    #[test]
    fn boyd_recovers_known_norms() {
        // diagonal operator: ‖diag(d)‖_{p→p} = max |d_i|
        let diag = DenseOperator::new(3, vec![c(0.5), c(0.0), c(0.0), c(0.0), c(2.0), c(0.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let (v, _) = boyd_power_iteration(&diag, 3.0, &[c(1.0), c(1.0), c(1.0)], 100).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn theta_fit_examples() {
        let th: Vec<f64> = (1..=5).map(|k| FRAC_PI_2 - 10f64.powf(-(k as f64) / 2.0)).collect();
        let inv: Vec<f64> = th.iter().map(|t| 1.0 / (FRAC_PI_2 - t)).collect();
        let f = fit_theta_exponent(&th, &inv).unwrap();
        assert!((f.fit.exponent - 1.0).abs() < 1e-12 && !f.degenerate);
        let flat = fit_theta_exponent(&th, &[5.0; 5]).unwrap();
        assert_eq!(flat.fit.exponent, 0.0);
        assert!(flat.degenerate);
        assert!(fit_theta_exponent(&th[..3], &inv[..3]).is_err());
    }

    #[test]
    fn saturation_reported() {
        let m = model(64, 64.0);
        let budget = SearchBudget { greedy_steps: 4, gaussian_trials: 4, bump_trials: 2, ..SearchBudget::default() };
        let s = j_range_saturation(&m, 0.0, 0.75, (0, 3), 2.0, 3, &budget, 1).unwrap();
        assert!(s.base > 0.0 && s.widened > 0.0);
    }
}
