//! Simulation regimes, dataset simulation and the study driver.

mod generators;
mod study;

pub use generators::{
    allocate_unbalanced, gen_additive, gen_cubic, gen_order_consistent, gen_order_inconsistent, gen_sb_prior,
    permute_effects, reference_order_consistent, simulate_dataset, ADDITIVE_TARGETS, ORDER_CONSISTENT_TARGETS,
    REFERENCE_SEED, STUDY_DIMS,
};
pub use study::{run_study, Method, Regime, Runtime, StudyReport, StudyRow, StudySpec, STUDY_KEYS};
