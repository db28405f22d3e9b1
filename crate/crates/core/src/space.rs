//! Finite metric measure spaces standing in for a space of homogeneous type
//! with controlled annuli.
//!
//! The builders produce uniform grids on the flat torus (wrap-around metric)
//! and on a line segment. Every grid records certified doubling and annulus
//! constants, obtained as suprema over a deterministic quasi-random sample of
//! centers and radii inside a [`SampleWindow`].

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{BoundReport, Flag, Sample};

/// Sample size used when a builder certifies a fresh grid.
pub const BUILD_SAMPLE_SIZE: usize = 512;

/// Relative slack allowed before [`certify_space`] flags a violation of the
/// constants recorded on the grid.
pub const CERTIFICATION_TOLERANCE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Torus,
    LineSegment,
}

impl Topology {
    pub fn tag(&self) -> &'static str {
        match self {
            Topology::Torus => "torus",
            Topology::LineSegment => "line-segment",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "torus" => Ok(Topology::Torus),
            "line-segment" => Ok(Topology::LineSegment),
            other => Err(Error::Parse(format!("unknown topology tag `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConstants {
    pub doubling: f64,
    pub annulus: f64,
}

/// Radii admitted by the sampled certification.
///
/// Balls resolving fewer than a couple of grid cells, and annuli thinner than
/// a few cells, carry pure lattice effects; the window excludes them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    /// Smallest radius tested in the doubling check.
    pub min_radius: f64,
    /// Smallest admissible `R - r` in the annulus check.
    pub min_width: f64,
    /// Largest radius tested (`R` for annuli, `r` for doubling balls).
    pub max_radius: f64,
}

impl SampleWindow {
    pub fn for_grid(grid: &MetricMeasureGrid) -> Self {
        let max_radius = grid.side_length / 4.0;
        SampleWindow {
            min_radius: (2.0 * grid.spacing).min(0.5 * max_radius),
            min_width: (8.0 * grid.spacing).min(0.5 * max_radius),
            max_radius,
        }
    }
}

/// Discretized `(Ω, μ, ρ)`: points, positive weights, a metric, and the
/// homogeneous dimension `d` used in the annulus condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMeasureGrid {
    axes: usize,
    dim: f64,
    n_per_axis: usize,
    side_length: f64,
    spacing: f64,
    topology: Topology,
    /// Flattened coordinates, `axes` per point.
    coords: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
    constants: Option<SpaceConstants>,
}

fn check_side(side_length: f64) -> Result<()> {
    if !(side_length.is_finite() && side_length > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "side length must be positive, got {side_length}"
        )));
    }
    Ok(())
}

/// Uniform grid on the `d`-torus with the geodesic metric and uniform weights
/// `(side_length / n_per_axis)^d`.
pub fn build_torus_grid(d: usize, n_per_axis: usize, side_length: f64) -> Result<MetricMeasureGrid> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    if n_per_axis < 8 {
        return Err(Error::InvalidGrid(format!(
            "n_per_axis = {n_per_axis} is too coarse (minimum 8)"
        )));
    }
    if !n_per_axis.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("n_per_axis = {n_per_axis} must be even")));
    }
    check_side(side_length)?;
    let weights = vec![(side_length / n_per_axis as f64).powi(d as i32); n_per_axis.pow(d as u32)];
    uniform_grid(d, n_per_axis, side_length, Topology::Torus, weights)
}

/// Uniform grid of cell midpoints on `[0, length]` with the Euclidean metric.
pub fn build_segment_grid(n: usize, length: f64) -> Result<MetricMeasureGrid> {
    if n == 0 {
        return Err(Error::InvalidGrid("segment needs at least one point".into()));
    }
    check_side(length)?;
    let weights = vec![length / n as f64; n];
    uniform_grid(1, n, length, Topology::LineSegment, weights)
}

fn uniform_grid(
    d: usize,
    n: usize,
    side_length: f64,
    topology: Topology,
    weights: Vec<f64>,
) -> Result<MetricMeasureGrid> {
    let spacing = side_length / n as f64;
    let total = n.pow(d as u32);
    if weights.len() != total {
        return Err(Error::InvalidGrid(format!(
            "expected {total} weights, got {}",
            weights.len()
        )));
    }
    let offset = match topology {
        Topology::Torus => 0.0,
        Topology::LineSegment => 0.5,
    };
    let mut coords = Vec::with_capacity(total * d);
    for idx in 0..total {
        let mut rem = idx;
        let mut c = vec![0.0; d];
        for axis in (0..d).rev() {
            c[axis] = (rem % n) as f64 * spacing + offset * spacing;
            rem /= n;
        }
        coords.extend(c);
    }
    let uniform = weights.windows(2).all(|w| w[0] == w[1]);
    let mut grid = MetricMeasureGrid {
        axes: d,
        dim: d as f64,
        n_per_axis: n,
        side_length,
        spacing,
        topology,
        coords,
        weights,
        uniform,
        constants: None,
    };
    grid.validate_weights()?;
    grid.constants = Some(grid.measure_constants(BUILD_SAMPLE_SIZE));
    Ok(grid)
}

impl MetricMeasureGrid {
    /// General constructor from explicit coordinates (flattened, `axes` per
    /// point). The metric is Euclidean, or per-axis wrap-around for the torus
    /// tag with period `side_length`. `spacing` sets the resolution floor of
    /// the certification window.
    pub fn from_points(
        axes: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        dim: f64,
        topology: Topology,
        side_length: f64,
        spacing: f64,
    ) -> Result<Self> {
        if axes == 0 || coords.len() != axes * weights.len() || weights.is_empty() {
            return Err(Error::InvalidGrid(
                "coordinate count does not match weights".into(),
            ));
        }
        if !(dim.is_finite() && dim > 0.0) {
            return Err(Error::InvalidGrid(format!("dimension must be positive, got {dim}")));
        }
        check_side(side_length)?;
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid("spacing must be positive".into()));
        }
        let mut grid = MetricMeasureGrid {
            axes,
            dim,
            n_per_axis: 0,
            side_length,
            spacing,
            topology,
            coords,
            weights,
            uniform: false,
            constants: None,
        };
        grid.validate_weights()?;
        grid.constants = Some(grid.measure_constants(BUILD_SAMPLE_SIZE));
        Ok(grid)
    }

    fn validate_weights(&self) -> Result<()> {
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidGrid(format!("weights must be positive, found {w}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of coordinate axes.
    pub fn axes(&self) -> usize {
        self.axes
    }

    /// Homogeneous dimension `d`.
    pub fn dim(&self) -> f64 {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.axes..(i + 1) * self.axes]
    }

    pub fn constants(&self) -> Option<SpaceConstants> {
        self.constants
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Whether the builder produced an index-addressable uniform lattice
    /// (enables exact integer-offset distances).
    fn is_lattice(&self) -> bool {
        self.n_per_axis > 0 && self.n_per_axis.pow(self.axes as u32) == self.len()
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let n = self.n_per_axis;
        let mut rem = i;
        let mut idx = vec![0; self.axes];
        for axis in (0..self.axes).rev() {
            idx[axis] = rem % n;
            rem /= n;
        }
        idx
    }

    /// Distance `ρ(x_i, x_j)`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if self.is_lattice() {
            let n = self.n_per_axis;
            let (mut a, mut b) = (i, j);
            let mut sq = 0usize;
            for _ in 0..self.axes {
                let (ai, bi) = (a % n, b % n);
                let mut diff = ai.abs_diff(bi);
                if self.topology == Topology::Torus {
                    diff = diff.min(n - diff);
                }
                sq += diff * diff;
                a /= n;
                b /= n;
            }
            return (sq as f64).sqrt() * self.spacing;
        }
        let (p, q) = (self.point(i), self.point(j));
        let mut sq = 0.0;
        for (x, y) in p.iter().zip(q) {
            let mut diff = (x - y).abs();
            if self.topology == Topology::Torus {
                diff = diff.rem_euclid(self.side_length);
                diff = diff.min(self.side_length - diff);
            }
            sq += diff * diff;
        }
        sq.sqrt()
    }

    pub fn diameter(&self) -> f64 {
        match self.topology {
            Topology::Torus => 0.5 * self.side_length * (self.axes as f64).sqrt(),
            Topology::LineSegment => {
                let n = self.len();
                (0..n).map(|j| self.distance(0, j)).fold(0.0, f64::max)
            }
        }
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: x,
                len: self.len(),
            });
        }
        Ok(())
    }

    /// `μ(B(x, r))` for the open ball.
    pub fn ball_measure(&self, x: usize, r: f64) -> Result<f64> {
        self.annulus_measure(x, 0.0, r)
    }

    /// `μ(B(x, r, R)) = Σ_{y : r ≤ ρ(x,y) < R} μ({y})`.
    pub fn annulus_measure(&self, x: usize, r: f64, big_r: f64) -> Result<f64> {
        self.check_index(x)?;
        if r.is_nan() || big_r.is_nan() || r < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "annulus radii must be nonnegative, got ({r}, {big_r})"
            )));
        }
        if big_r < r {
            return Err(Error::InvalidArgument(format!(
                "outer radius {big_r} is smaller than inner radius {r}"
            )));
        }
        if big_r == r {
            return Ok(0.0);
        }
        Ok((0..self.len())
            .filter(|&y| {
                let d = self.distance(x, y);
                d >= r && d < big_r
            })
            .map(|y| self.weights[y])
            .sum())
    }

    fn measure_constants(&self, sample_size: usize) -> SpaceConstants {
        let window = SampleWindow::for_grid(self);
        let (doubling, annulus) = sample_ratios(self, &window, sample_size);
        let max = |s: &[Sample]| s.iter().map(|s| s.ratio).fold(0.0, f64::max);
        SpaceConstants {
            doubling: max(&doubling),
            annulus: max(&annulus),
        }
    }

    /// Serialize as the text exchange format: a header followed by the
    /// per-point weight table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "hormander-grid v1");
        let _ = writeln!(out, "d {}", self.axes);
        let _ = writeln!(out, "n_per_axis {}", self.n_per_axis);
        let _ = writeln!(out, "side_length {}", self.side_length);
        let _ = writeln!(out, "topology {}", self.topology.tag());
        let _ = writeln!(out, "weights {}", self.len());
        for w in &self.weights {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let magic = lines.next().unwrap_or_default();
        if magic != "hormander-grid v1" {
            return Err(Error::Parse(format!("unrecognized grid header `{magic}`")));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing `{name}` line")))?;
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("malformed line `{line}`")))?;
            if key != name {
                return Err(Error::Parse(format!("expected `{name}`, found `{key}`")));
            }
            Ok(value.trim().to_string())
        };
        let parse_err = |e: &dyn std::fmt::Display| Error::Parse(e.to_string());
        let d: usize = field("d")?.parse().map_err(|e| parse_err(&e))?;
        let n: usize = field("n_per_axis")?.parse().map_err(|e| parse_err(&e))?;
        let side: f64 = field("side_length")?.parse().map_err(|e| parse_err(&e))?;
        let topology = Topology::from_tag(&field("topology")?)?;
        let count: usize = field("weights")?.parse().map_err(|e| parse_err(&e))?;
        let weights = lines
            .map(|l| l.parse::<f64>().map_err(|e| parse_err(&e)))
            .collect::<Result<Vec<_>>>()?;
        if weights.len() != count {
            return Err(Error::Parse(format!(
                "header announces {count} weights, found {}",
                weights.len()
            )));
        }
        if topology == Topology::LineSegment && d != 1 {
            return Err(Error::Parse("line-segment grids are one-dimensional".into()));
        }
        check_side(side)?;
        if n == 0 || d == 0 {
            return Err(Error::Parse("empty grid".into()));
        }
        uniform_grid(d, n, side, topology, weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Plastic-number (R3) low-discrepancy sequence in the unit cube.
fn r3_point(i: usize) -> [f64; 3] {
    const G: f64 = 1.324_717_957_244_746;
    let a = [1.0 / G, 1.0 / (G * G), 1.0 / (G * G * G)];
    let k = i as f64 + 1.0;
    [
        (0.5 + a[0] * k).fract(),
        (0.5 + a[1] * k).fract(),
        (0.5 + a[2] * k).fract(),
    ]
}

/// Deterministic sample of doubling ratios `μ(B(x,2r))/μ(B(x,r))` and annulus
/// ratios `μ(B(x,r,R))/(R^d − r^d)`.
fn sample_ratios(
    grid: &MetricMeasureGrid,
    window: &SampleWindow,
    sample_size: usize,
) -> (Vec<Sample>, Vec<Sample>) {
    let n = grid.len();
    let d = grid.dim;
    let rows: Vec<(Sample, Sample)> = (0..sample_size)
        .into_par_iter()
        .map(|i| {
            let [u, v, w] = r3_point(i);
            let x = ((u * n as f64) as usize).min(n - 1);
            let span = (window.max_radius - window.min_radius).max(0.0);
            let r = window.min_radius + v * span;
            let inner = grid.ball_measure(x, r).unwrap_or(0.0);
            let outer = grid.ball_measure(x, 2.0 * r).unwrap_or(0.0);
            let doubling = Sample {
                input: vec![x as f64, r],
                ratio: if inner > 0.0 { outer / inner } else { f64::INFINITY },
            };
            let free = (window.max_radius - window.min_width).max(0.0);
            let ra = v * free;
            let rb = ra + window.min_width + w * (free - ra);
            let mass = grid.annulus_measure(x, ra, rb).unwrap_or(0.0);
            let annulus = Sample {
                input: vec![x as f64, ra, rb],
                ratio: mass / (rb.powf(d) - ra.powf(d)),
            };
            (doubling, annulus)
        })
        .collect();
    rows.into_iter().unzip()
}

/// Certified doubling and annulus constants of a grid over a deterministic
/// sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceCertificate {
    pub doubling: BoundReport,
    pub annulus: BoundReport,
    pub window: SampleWindow,
    /// Candidate constants the sample was checked against.
    pub candidates: Option<SpaceConstants>,
    pub violation: bool,
}

impl SpaceCertificate {
    pub fn constants(&self) -> SpaceConstants {
        SpaceConstants {
            doubling: self.doubling.best_constant,
            annulus: self.annulus.best_constant,
        }
    }
}

/// Sample `sample_size` centers and radii, report the suprema of the doubling
/// and annulus ratios, and flag a violation when either exceeds the grid's
/// recorded constants by more than [`CERTIFICATION_TOLERANCE`].
pub fn certify_space(grid: &MetricMeasureGrid, sample_size: usize) -> Result<SpaceCertificate> {
    if sample_size == 0 {
        return Err(Error::InvalidArgument("sample_size must be at least 1".into()));
    }
    let window = SampleWindow::for_grid(grid);
    let (doubling, annulus) = sample_ratios(grid, &window, sample_size);
    let mut doubling = BoundReport::from_samples("doubling", &["x", "r"], doubling);
    let mut annulus = BoundReport::from_samples("annulus", &["x", "r", "R"], annulus);
    let candidates = grid.constants;
    let mut violation = false;
    if let Some(c) = candidates {
        if doubling.best_constant > c.doubling * (1.0 + CERTIFICATION_TOLERANCE) {
            doubling.flag(Flag::Violation);
            violation = true;
        }
        if annulus.best_constant > c.annulus * (1.0 + CERTIFICATION_TOLERANCE) {
            annulus.flag(Flag::Violation);
            violation = true;
        }
    }
    if grid.topology == Topology::Torus {
        annulus.flag(Flag::DiameterLimited);
    }
    Ok(SpaceCertificate {
        doubling,
        annulus,
        window,
        candidates,
        violation,
    })
}
