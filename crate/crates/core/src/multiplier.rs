//! Scalar multipliers `f : [0, ∞) → ℂ` with exact derivatives.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::partition;

/// Named multiplier families, selectable from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MultiplierSpec {
    /// `f ≡ value`.
    Constant { value: f64 },
    /// `λ^{is}`; the zero mode is assigned the value 1.
    PowerIs { s: f64 },
    /// `amplitude · φ_0(2^{-m} λ)`.
    BumpDilate {
        m: i32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `sin(freq · ln(1 + λ))`.
    SineModulated { freq: f64 },
    /// `(1 + λ)^{-gamma}`.
    Resolvent { gamma: f64 },
    /// `exp(-z λ)` with `z = re + i im`.
    Exponential { re: f64, im: f64 },
    /// `exp(-(λ - center)^2 / (2 width^2))`.
    Gaussian { center: f64, width: f64 },
}

fn one() -> f64 {
    1.0
}

type CustomFn = dyn Fn(f64) -> Complex64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    Constant(Complex64),
    PowerIs(f64),
    Bump { m: i32, amplitude: f64 },
    SineModulated(f64),
    Resolvent(f64),
    Exponential(Complex64),
    Gaussian { center: f64, width: f64 },
    Dilate(Arc<Multiplier>, i32),
    Product(Arc<Multiplier>, Arc<Multiplier>),
    Scale(Arc<Multiplier>, Complex64),
    Custom {
        f: Arc<CustomFn>,
        at_zero: Option<Complex64>,
    },
}

/// A bounded function on `[0, ∞)` evaluated pointwise, with Taylor jets for
/// every family except user closures.
#[derive(Clone)]
pub struct Multiplier {
    kind: Kind,
    label: String,
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multiplier({})", self.label)
    }
}

impl Multiplier {
    fn new(kind: Kind, label: String) -> Self {
        Multiplier { kind, label }
    }

    pub fn from_spec(spec: &MultiplierSpec) -> Self {
        match *spec {
            MultiplierSpec::Constant { value } => Self::constant(Complex64::new(value, 0.0)),
            MultiplierSpec::PowerIs { s } => Self::power_is(s),
            MultiplierSpec::BumpDilate { m, amplitude } => Self::bump_dilate(m, amplitude),
            MultiplierSpec::SineModulated { freq } => Self::sine_modulated(freq),
            MultiplierSpec::Resolvent { gamma } => Self::resolvent(gamma),
            MultiplierSpec::Exponential { re, im } => Self::exponential(Complex64::new(re, im)),
            MultiplierSpec::Gaussian { center, width } => Self::gaussian(center, width),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(Kind::Constant(c), format!("constant({c})"))
    }

    pub fn power_is(s: f64) -> Self {
        Self::new(Kind::PowerIs(s), format!("power-is({s})"))
    }

    pub fn bump_dilate(m: i32, amplitude: f64) -> Self {
        Self::new(Kind::Bump { m, amplitude }, format!("bump-dilate({m}, {amplitude})"))
    }

    pub fn sine_modulated(freq: f64) -> Self {
        Self::new(Kind::SineModulated(freq), format!("sine-modulated({freq})"))
    }

    pub fn resolvent(gamma: f64) -> Self {
        Self::new(Kind::Resolvent(gamma), format!("resolvent({gamma})"))
    }

    /// The semigroup symbol `λ ↦ e^{-zλ}`.
    pub fn exponential(z: Complex64) -> Self {
        Self::new(Kind::Exponential(z), format!("exponential({z})"))
    }

    pub fn gaussian(center: f64, width: f64) -> Self {
        Self::new(
            Kind::Gaussian { center, width },
            format!("gaussian({center}, {width})"),
        )
    }

    /// A closure without derivative information. `at_zero` declares the
    /// value used on the zero mode.
    pub fn custom<F>(label: &str, f: F, at_zero: Option<Complex64>) -> Self
    where
        F: Fn(f64) -> Complex64 + Send + Sync + 'static,
    {
        Self::new(
            Kind::Custom {
                f: Arc::new(f),
                at_zero,
            },
            label.to_string(),
        )
    }

    /// `λ ↦ f(2^m λ)`.
    pub fn dilated(&self, m: i32) -> Self {
        if m == 0 {
            return self.clone();
        }
        Self::new(
            Kind::Dilate(Arc::new(self.clone()), m),
            format!("{}(2^{m}·)", self.label),
        )
    }

    pub fn product(&self, other: &Multiplier) -> Self {
        Self::new(
            Kind::Product(Arc::new(self.clone()), Arc::new(other.clone())),
            format!("{}*{}", self.label, other.label),
        )
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::new(
            Kind::Scale(Arc::new(self.clone()), c),
            format!("{c}*{}", self.label),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether exact derivatives are available.
    pub fn has_derivatives(&self) -> bool {
        match &self.kind {
            Kind::Custom { .. } => false,
            Kind::Dilate(f, _) | Kind::Scale(f, _) => f.has_derivatives(),
            Kind::Product(f, g) => f.has_derivatives() && g.has_derivatives(),
            _ => true,
        }
    }

    /// The value assigned to `λ = 0`, if the multiplier declares one.
    pub fn value_at_zero(&self) -> Option<Complex64> {
        match &self.kind {
            Kind::Constant(c) => Some(*c),
            Kind::PowerIs(_) => Some(Complex64::new(1.0, 0.0)),
            Kind::Bump { .. } => Some(Complex64::new(0.0, 0.0)),
            Kind::SineModulated(_) => Some(Complex64::new(0.0, 0.0)),
            Kind::Resolvent(_) => Some(Complex64::new(1.0, 0.0)),
            Kind::Exponential(_) => Some(Complex64::new(1.0, 0.0)),
            Kind::Gaussian { center, width } => Some(Complex64::new(
                (-(center * center) / (2.0 * width * width)).exp(),
                0.0,
            )),
            Kind::Dilate(f, _) => f.value_at_zero(),
            Kind::Product(f, g) => Some(f.value_at_zero()? * g.value_at_zero()?),
            Kind::Scale(f, c) => Some(f.value_at_zero()? * c),
            Kind::Custom { at_zero, .. } => *at_zero,
        }
    }

    /// `f(λ)` for `λ > 0`; `λ = 0` returns the declared zero-mode value.
    pub fn eval(&self, lambda: f64) -> Result<Complex64> {
        if lambda < 0.0 || lambda.is_nan() {
            return Err(self.undefined(lambda));
        }
        if lambda == 0.0 {
            return self.value_at_zero().ok_or_else(|| self.undefined(0.0));
        }
        let v = self.eval_positive(lambda);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(self.undefined(lambda))
        }
    }

    fn undefined(&self, lambda: f64) -> Error {
        Error::UndefinedMultiplier {
            label: self.label.clone(),
            lambda,
        }
    }

    fn eval_positive(&self, x: f64) -> Complex64 {
        let re = |v: f64| Complex64::new(v, 0.0);
        match &self.kind {
            Kind::Constant(c) => *c,
            Kind::PowerIs(s) => Complex64::new(0.0, s * x.ln()).exp(),
            Kind::Bump { m, amplitude } => re(amplitude * partition::SmoothBump.eval(x * 2f64.powi(-m))),
            Kind::SineModulated(w) => re((w * x.ln_1p()).sin()),
            Kind::Resolvent(g) => re((1.0 + x).powf(-g)),
            Kind::Exponential(z) => (-z * x).exp(),
            Kind::Gaussian { center, width } => {
                let u = (x - center) / width;
                re((-0.5 * u * u).exp())
            }
            Kind::Dilate(f, m) => f.eval_positive(x * 2f64.powi(*m)),
            Kind::Product(f, g) => f.eval_positive(x) * g.eval_positive(x),
            Kind::Scale(f, c) => f.eval_positive(x) * c,
            Kind::Custom { f, .. } => f(x),
        }
    }

    /// Taylor jet of `f ∘ x` for an argument jet `x` with positive value.
    pub fn compose_jet(&self, x: &Jet<Complex64>) -> Option<Jet<Complex64>> {
        let order = x.order();
        let c = |v: f64| Complex64::new(v, 0.0);
        Some(match &self.kind {
            Kind::Constant(v) => Jet::constant(*v, order),
            Kind::PowerIs(s) => x.powc(Complex64::new(0.0, *s)),
            Kind::Bump { m, amplitude } => {
                partition::bump_jet(&x.scale(c(2f64.powi(-m)))).scale(c(*amplitude))
            }
            Kind::SineModulated(w) => x.add_scalar(c(1.0)).ln().scale(c(*w)).sin_cos().0,
            Kind::Resolvent(g) => x.add_scalar(c(1.0)).powc(c(-g)),
            Kind::Exponential(z) => x.scale(-z).exp(),
            Kind::Gaussian { center, width } => {
                let u = x.add_scalar(c(-center)).scale(c(1.0 / width));
                (u.clone() * u).scale(c(-0.5)).exp()
            }
            Kind::Dilate(f, m) => f.compose_jet(&x.scale(c(2f64.powi(*m))))?,
            Kind::Product(f, g) => f.compose_jet(x)? * g.compose_jet(x)?,
            Kind::Scale(f, k) => f.compose_jet(x)?.scale(*k),
            Kind::Custom { .. } => return None,
        })
    }

    /// `f^{(k)}(λ)` for `k = 0..=order`, when exact derivatives exist.
    pub fn derivatives(&self, lambda: f64, order: usize) -> Option<Vec<Complex64>> {
        if !(lambda > 0.0) {
            return None;
        }
        self.compose_jet(&Jet::variable(Complex64::new(lambda, 0.0), order))
            .map(|j| j.derivatives())
    }
}
