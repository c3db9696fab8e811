//! Hierarchical array priors for cell means of cross-classified data.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod decomposition;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod layout;
pub mod linalg;
pub mod pillai;
pub mod rng;
pub mod samplers;
pub mod sim;
pub mod stats;
pub mod tensor;

pub use decomposition::{anova_decompose, ase, cell_means, effect_magnitude, Decomposition};
pub use error::{Error, Result};
pub use layout::{EffectKey, Layout};
pub use rng::RngStream;
pub use stats::{ols_cell_means, CellStats};
pub use tensor::{SymMatrix, Tensor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/arrays.md")]
    mod arrays {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
