//! Smooth dyadic partition of unity `φ_n = φ_0(2^{-n} ·)`.
//!
//! The bump is a telescoping difference `φ_0(t) = η(t) − η(t/2)` of a smooth
//! step `η` that vanishes on `(−∞, 1/2]` and equals one on `[1, ∞)`. Summing
//! `φ_0(2^{-n} t)` over `n` telescopes to `η(∞) − η(0) = 1`, so the
//! partition property holds as an algebraic identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, JetScalar};

pub const SUPPORT_LO: f64 = 0.5;
pub const SUPPORT_HI: f64 = 2.0;
/// Highest derivative order exposed by [`SmoothBump::derivatives`].
pub const K_MAX: usize = 4;

fn glue(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// The smooth step `η(t)`.
pub fn smooth_step(t: f64) -> f64 {
    let u = 2.0 * t - 1.0;
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = glue(u);
    a / (a + glue(1.0 - u))
}

/// Jet of `η` composed with the jet `t`.
pub fn smooth_step_jet<T: JetScalar>(t: &Jet<T>) -> Jet<T> {
    let order = t.order();
    let u = t.scale(T::from_f64(2.0)).add_scalar(T::from_f64(-1.0));
    let u0 = u.value().real();
    if u0 <= 0.0 {
        return Jet::constant(T::from_f64(0.0), order);
    }
    if u0 >= 1.0 {
        return Jet::constant(T::from_f64(1.0), order);
    }
    let one = Jet::constant(T::from_f64(1.0), order);
    let a = (-u.recip()).exp();
    let b = (-(one - u).recip()).exp();
    a.clone() / (a + b)
}

/// `φ_0` jet composed with `t`.
pub fn bump_jet<T: JetScalar>(t: &Jet<T>) -> Jet<T> {
    smooth_step_jet(t) - smooth_step_jet(&t.scale(T::from_f64(0.5)))
}

/// The bump `φ_0 ∈ C_c^∞(1/2, 2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump;

pub fn make_bump() -> SmoothBump {
    SmoothBump
}

impl SmoothBump {
    pub fn support(&self) -> (f64, f64) {
        (SUPPORT_LO, SUPPORT_HI)
    }

    pub fn k_max(&self) -> usize {
        K_MAX
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= SUPPORT_LO || t >= SUPPORT_HI {
            return 0.0;
        }
        if t <= 1.0 {
            smooth_step(t)
        } else {
            1.0 - smooth_step(0.5 * t)
        }
    }

    /// `φ_0^{(k)}(t)` for `k = 0..=order`, `order ≤ K_MAX`.
    pub fn derivatives(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        if order > K_MAX {
            return Err(Error::InvalidArgument(format!(
                "derivative order {order} exceeds k_max = {K_MAX}"
            )));
        }
        Ok(bump_jet(&Jet::variable(t, order)).derivatives())
    }
}

/// `{φ_n : n_min ≤ n ≤ n_max}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub bump: SmoothBump,
    pub n_min: i32,
    pub n_max: i32,
}

impl DyadicPartition {
    pub fn new(n_min: i32, n_max: i32) -> Result<Self> {
        if n_min > n_max {
            return Err(Error::InvalidArgument(format!(
                "empty dyadic range [{n_min}, {n_max}]"
            )));
        }
        Ok(DyadicPartition {
            bump: make_bump(),
            n_min,
            n_max,
        })
    }

    /// `φ_n(t) = φ_0(2^{-n} t)`. The dilation is an exact power-of-two
    /// scaling, so `eval(n, t) == eval(0, 2^{-n} t)` bit for bit.
    pub fn eval(&self, n: i32, t: f64) -> Result<f64> {
        eval_partition(self, n, t)
    }

    /// `Σ_{n_min ≤ n ≤ n_max} φ_n(t)`; equals one on `[2^{n_min}, 2^{n_max}]`.
    pub fn sum(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
        }
        let (lo, hi) = active_indices(t);
        Ok((lo..=hi)
            .filter(|n| (self.n_min..=self.n_max).contains(n))
            .map(|n| self.bump.eval(dilate(t, n)))
            .sum())
    }
}

fn dilate(t: f64, n: i32) -> f64 {
    t * 2f64.powi(-n)
}

/// The (at most two) indices `n` with `2^{-n} t ∈ (1/2, 2)`.
pub fn active_indices(t: f64) -> (i32, i32) {
    let l = t.log2().floor() as i32;
    (l - 1, l + 1)
}

pub fn eval_partition(partition: &DyadicPartition, n: i32, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    Ok(partition.bump.eval(dilate(t, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bump_values() {
        let b = make_bump();
        assert_eq!(b.eval(0.5), 0.0);
        assert_eq!(b.eval(2.0), 0.0);
        assert_eq!(b.eval(1.0), 1.0);
        assert_eq!(b.eval(3.0), 0.0);
        for i in 0..200 {
            let t = 0.4 + 1.8 * i as f64 / 200.0;
            let v = b.eval(t);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn partition_examples() {
        let p = DyadicPartition::new(-30, 30).unwrap();
        assert_eq!(p.eval(0, 1.0).unwrap(), 1.0);
        assert_eq!(p.eval(3, 8.0).unwrap(), 1.0);
        assert_eq!(p.eval(0, 3.0).unwrap(), 0.0);
        assert!(p.eval(0, 0.0).is_err());
        assert!(p.eval(0, -1.0).is_err());
        let s: f64 = (-30..=30).map(|n| p.eval(n, 3.7).unwrap()).sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn at_most_two_overlap() {
        let p = DyadicPartition::new(-25, 25).unwrap();
        for i in 0..1000 {
            let t = 2f64.powf(-20.0 + 40.0 * i as f64 / 1000.0);
            let count = (-25..=25).filter(|&n| p.eval(n, t).unwrap() > 0.0).count();
            assert!(count <= 2);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = make_bump();
        let h = 1e-4;
        for i in 0..10 {
            let t = 0.55 + 1.4 * (i as f64 + 0.5) / 10.0;
            let d = b.derivatives(t, 4).unwrap();
            assert_relative_eq!(d[0], b.eval(t), epsilon = 1e-15);
            // centered differences of the next-lower derivative, O(h^2)
            for k in 1..=4 {
                let lo = b.derivatives(t - h, k - 1).unwrap()[k - 1];
                let hi = b.derivatives(t + h, k - 1).unwrap()[k - 1];
                let fd = (hi - lo) / (2.0 * h);
                let scale = 1.0 + d[k].abs();
                assert!((fd - d[k]).abs() / scale < 5e-3, "k={k} t={t}: {fd} vs {}", d[k]);
            }
        }
    }

    #[test]
    fn finite_difference_order_of_convergence() {
        // error of the centered first difference should drop ~4x per halving
        let b = make_bump();
        for i in 0..10 {
            let t = 0.6 + 1.3 * (i as f64 + 0.5) / 10.0;
            let exact = b.derivatives(t, 1).unwrap()[1];
            let err = |h: f64| ((b.eval(t + h) - b.eval(t - h)) / (2.0 * h) - exact).abs();
            let (e1, e2) = (err(4e-3), err(2e-3));
            if e1 > 1e-9 {
                let order = (e1 / e2).log2();
                assert!(order > 1.7 && order < 2.3, "t={t} order={order}");
            }
        }
    }

    #[test]
    fn derivative_order_capped() {
        assert!(make_bump().derivatives(1.0, 5).is_err());
    }

    proptest! {
        #[test]
        fn telescoping_sum_is_one(e in -20.0f64..20.0) {
            let p = DyadicPartition::new(-21, 21).unwrap();
            let t = 2f64.powf(e);
            prop_assert!((p.sum(t).unwrap() - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn dilation_covariance(n in -12i32..12, t in 0.01f64..100.0) {
            let p = DyadicPartition::new(-30, 30).unwrap();
            prop_assert_eq!(p.eval(n, t).unwrap(), p.eval(0, t * 2f64.powi(-n)).unwrap());
        }
    }
}
