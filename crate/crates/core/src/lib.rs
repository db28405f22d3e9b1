//! Numerical laboratory for spectral multipliers of `A = √(−Δ)` on discrete
//! doubling metric measure spaces, driven by complex-time Poisson kernel
//! bounds.

// `!(x > y)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod calculus;
pub mod error;
pub mod jet;
pub mod kernel_checks;
pub mod multiplier;
pub mod norms;
pub mod operators;
pub mod partition;
pub mod quad;
pub mod rbounds;
pub mod report;
pub mod space;

pub use error::{Error, Result};
pub use multiplier::{Multiplier, MultiplierSpec};
pub use operators::{ComplexTime, SpectralModel};
pub use partition::{DyadicPartition, SmoothBump};
pub use rbounds::{RBoundEstimate, SearchBudget};
pub use report::{BoundReport, Flag, PowerFit, Sample};
pub use space::{MetricMeasureGrid, SpaceConstants, Topology};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/space.md")]
    mod space {}
    #[doc = include_str!("../../../book/src/partition.md")]
    mod partition {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/kernel_checks.md")]
    mod kernel_checks {}
    #[doc = include_str!("../../../book/src/rbounds.md")]
    mod rbounds {}
    #[doc = include_str!("../../../book/src/calculus.md")]
    mod calculus {}
}
