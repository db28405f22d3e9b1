//! The model operator `A = √(−Δ)` on a torus grid, its complex-time Poisson
//! semigroup `exp(−zA)`, kernels and the functional calculus `f(A)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiplier::Multiplier;
use crate::space::{MetricMeasureGrid, Topology};

/// Default cap on the number of grid points for dense kernel matrices.
pub const DENSE_CAP: usize = 1 << 14;

/// `z` in the closed right half-plane, `z ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexTime(Complex64);

impl ComplexTime {
    pub fn new(z: Complex64) -> Result<Self> {
        if z.re < 0.0 || z.re.is_nan() || z.im.is_nan() {
            return Err(Error::NegativeRealPart(z.re));
        }
        if z.norm() == 0.0 {
            return Err(Error::ZeroTime);
        }
        Ok(ComplexTime(z))
    }

    pub fn real(t: f64) -> Result<Self> {
        Self::new(Complex64::new(t, 0.0))
    }

    /// `z = r e^{iθ}`, `|θ| ≤ π/2`.
    pub fn from_polar(r: f64, theta: f64) -> Result<Self> {
        if theta.abs() > FRAC_PI_2 {
            return Err(Error::NegativeRealPart(r * theta.cos()));
        }
        if theta.abs() == FRAC_PI_2 {
            // cos(±π/2) rounds to a tiny positive number
            return Self::new(Complex64::new(0.0, r * theta.signum()));
        }
        Self::new(Complex64::from_polar(r, theta))
    }

    pub fn z(&self) -> Complex64 {
        self.0
    }

    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    pub fn theta(&self) -> f64 {
        self.0.arg()
    }
}

/// Self-adjoint nonnegative operator diagonalized by the orthonormal DFT of
/// a uniform torus grid.
#[derive(Clone)]
pub struct SpectralModel {
    grid: MetricMeasureGrid,
    eigenvalues: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralModel")
            .field("points", &self.grid.len())
            .field("axes", &self.grid.axes())
            .finish()
    }
}

fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

pub fn build_poisson_model(grid: &MetricMeasureGrid) -> Result<SpectralModel> {
    if grid.topology() != Topology::Torus {
        return Err(Error::UnsupportedTopology(grid.topology().tag().to_string()));
    }
    let n = grid.n_per_axis();
    let axes = grid.axes();
    if n == 0 || n.pow(axes as u32) != grid.len() {
        return Err(Error::UnsupportedTopology(
            "torus model needs a uniform lattice".to_string(),
        ));
    }
    let omega = 2.0 * PI / grid.side_length();
    let eigenvalues = (0..grid.len())
        .map(|i| {
            let sq: f64 = grid
                .multi_index(i)
                .iter()
                .map(|&k| signed_frequency(k, n).powi(2))
                .sum();
            omega * sq.sqrt()
        })
        .collect();
    let mut planner = FftPlanner::new();
    Ok(SpectralModel {
        grid: grid.clone(),
        eigenvalues,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    })
}

impl SpectralModel {
    pub fn grid(&self) -> &MetricMeasureGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue of each frequency slot, in transform order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn transform(&self, v: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n_per_axis();
        let axes = self.grid.axes();
        let total = v.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..axes {
            let stride = n.pow((axes - 1 - axis) as u32);
            for start in 0..total {
                // first element of each line along this axis
                if !(start / stride).is_multiple_of(n) {
                    continue;
                }
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = v[start + k * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (k, val) in line.iter().enumerate() {
                    v[start + k * stride] = *val;
                }
            }
        }
        let scale = 1.0 / (total as f64).sqrt();
        for x in v.iter_mut() {
            *x *= scale;
        }
    }

    /// Orthonormal forward transform (point space to frequency space).
    pub fn forward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(v.len())?;
        let mut out = v.to_vec();
        self.transform(&mut out, &self.forward);
        Ok(out)
    }

    pub fn backward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(v.len())?;
        let mut out = v.to_vec();
        self.transform(&mut out, &self.inverse);
        Ok(out)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::InvalidArgument(format!(
                "vector of length {len} does not match a model of {} points",
                self.len()
            )));
        }
        Ok(())
    }

    /// `backward(symbol(λ_k) · forward(v))`.
    pub fn apply_symbol<S: Fn(f64) -> Result<Complex64>>(
        &self,
        symbol: S,
        v: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let mut hat = self.forward(v)?;
        for (c, &lam) in hat.iter_mut().zip(&self.eigenvalues) {
            *c *= symbol(lam)?;
        }
        let mut out = hat;
        self.transform(&mut out, &self.inverse);
        Ok(out)
    }
}

pub fn apply_semigroup(model: &SpectralModel, z: ComplexTime, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let z = z.z();
    model.apply_symbol(|lam| Ok((-z * lam).exp()), v)
}

pub fn apply_multiplier(model: &SpectralModel, f: &Multiplier, v: &[Complex64]) -> Result<Vec<Complex64>> {
    model.apply_symbol(|lam| f.eval(lam), v)
}

/// `k_z(·, y_0)` for the first grid point: `apply_semigroup(z, δ_0 / μ_0)`.
/// On the torus every other column is a translate of this one.
pub fn kernel_column_at_origin(model: &SpectralModel, z: ComplexTime) -> Result<Vec<Complex64>> {
    let mut delta = vec![Complex64::new(0.0, 0.0); model.len()];
    delta[0] = Complex64::new(1.0 / model.grid.weight(0), 0.0);
    apply_semigroup(model, z, &delta)
}

/// Index of the lattice point `x − y` (componentwise, modulo the period),
/// so that `k(x, y) = k(x − y, 0)` on the torus.
pub fn translation_offset(grid: &MetricMeasureGrid, x: usize, y: usize) -> usize {
    let n = grid.n_per_axis();
    let (mut a, mut b) = (x, y);
    let mut out = 0;
    let mut place = 1;
    for _ in 0..grid.axes() {
        out += ((a % n + n - b % n) % n) * place;
        place *= n;
        a /= n;
        b /= n;
    }
    out
}

/// Dense square kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    size: usize,
    data: Vec<Complex64>,
}

impl KernelMatrix {
    pub fn from_row_major(size: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form a {size}x{size} matrix",
                data.len()
            )));
        }
        Ok(KernelMatrix { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[x * self.size + y]
    }

    pub fn row(&self, x: usize) -> &[Complex64] {
        &self.data[x * self.size..(x + 1) * self.size]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Raw dump: row-major `(re, im)` pairs of little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 16);
        for c in &self.data {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    /// Inverse of [`to_bytes`](Self::to_bytes); the size is inferred from
    /// the byte count.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(16) {
            return Err(Error::Parse(format!(
                "kernel dump length {} is not a multiple of 16",
                bytes.len()
            )));
        }
        let entries = bytes.len() / 16;
        let size = (entries as f64).sqrt().round() as usize;
        if size * size != entries {
            return Err(Error::Parse(format!("{entries} entries do not form a square matrix")));
        }
        let mut data = Vec::with_capacity(entries);
        for chunk in bytes.chunks_exact(16) {
            let re = f64::from_le_bytes(chunk[..8].try_into().expect("8-byte slice"));
            let im = f64::from_le_bytes(chunk[8..].try_into().expect("8-byte slice"));
            data.push(Complex64::new(re, im));
        }
        Ok(KernelMatrix { size, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// `k_z(x, y)` with `(T_z f)(x) = Σ_y k_z(x, y) f(y) μ({y})`.
pub fn kernel_matrix(model: &SpectralModel, z: ComplexTime) -> Result<KernelMatrix> {
    kernel_matrix_capped(model, z, DENSE_CAP)
}

pub fn kernel_matrix_capped(model: &SpectralModel, z: ComplexTime, cap: usize) -> Result<KernelMatrix> {
    let size = model.len();
    if size > cap {
        return Err(Error::DenseCapExceeded { points: size, cap });
    }
    let col0 = kernel_column_at_origin(model, z)?;
    let mut data = vec![Complex64::new(0.0, 0.0); size * size];
    for x in 0..size {
        for y in 0..size {
            data[x * size + y] = col0[translation_offset(&model.grid, x, y)];
        }
    }
    Ok(KernelMatrix { size, data })
}

fn gamma_half_integer(m: usize) -> f64 {
    // Γ(m/2) for m ≥ 1
    if m == 1 {
        PI.sqrt()
    } else if m == 2 {
        1.0
    } else {
        (m as f64 / 2.0 - 1.0) * gamma_half_integer(m - 2)
    }
}

/// Normalization `Γ((d+1)/2) / π^{(d+1)/2}` of the Poisson kernel on `ℝ^d`.
pub fn poisson_normalization(d: usize) -> f64 {
    gamma_half_integer(d + 1) / PI.powf((d as f64 + 1.0) / 2.0)
}

/// `(z² + ρ²)^{-e}` on the principal branch, continued to the imaginary axis
/// from the right half-plane.
pub fn light_cone_power(z: Complex64, rho: f64, e: f64) -> Result<Complex64> {
    let w = z * z + rho * rho;
    let scale = z.norm_sqr() + rho * rho;
    if w.norm() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::BranchPoint {
            re: z.re,
            im: z.im,
            rho,
        });
    }
    let arg = if w.im == 0.0 && w.re < 0.0 {
        if z.im >= 0.0 {
            PI
        } else {
            -PI
        }
    } else {
        w.arg()
    };
    Ok(Complex64::from_polar(w.norm().powf(-e), -e * arg))
}

/// `c_d · z · (z² + ρ²)^{−(d+1)/2}`.
pub fn closed_form_poisson_kernel(d: usize, z: ComplexTime, rho: f64) -> Result<Complex64> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be nonnegative, got {rho}")));
    }
    let e = (d as f64 + 1.0) / 2.0;
    Ok(z.z() * light_cone_power(z.z(), rho, e)? * poisson_normalization(d))
}
