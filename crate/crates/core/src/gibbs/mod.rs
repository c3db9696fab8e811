//! Gibbs sampler for the hierarchical array prior.
//!
//! The model for cell `c` and response `r` is `μ_{c,r} = μ_r + Σ_S E_S[c_S, r]`.
//! Effects on the factor set `S` have prior covariance
//! `γ_{S,r}⁻¹ · (⊗_{d∈S} Σ_d)`, with `γ = 1` for main effects, so factor
//! covariances are shared by every effect containing the factor.

mod chain;
mod hyper;
mod preprocess;
mod state;
mod update;

pub use chain::{method_label, read_chain_columns, run_chain, run_chain_from, run_chains, Augmentation, Chain, ChainConfig, Draw, RecordSet};
pub use hyper::{default_hyperparameters, inflated_sq_norm, ols_decomposition, FactorPrior, GammaPrior, HaHyper, OlsFit};
pub use preprocess::{manova_preprocess, PreprocessConfig, Transform, TransformRecord};
pub use state::{HaState, ModelSpec, PriorKind};
pub use update::{
    factor_eigens, gibbs_sweep, impute_balance, sigma_posterior_dof, update_effect, update_gamma, update_mu, update_sigma,
    update_sigma2, update_sigma_y, Balanced,
};
