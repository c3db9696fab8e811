use std::collections::BTreeMap;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::linalg::chol;
use crate::tensor::SymMatrix;

use super::hyper::HaHyper;

/// Which covariance structure the effects get.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Per-factor covariances shared by every effect containing the factor,
    /// plus one precision per interaction and response.
    Ha,
    /// Identity covariances and one sampled precision per effect and response,
    /// main effects included.
    Sb,
}

/// Prior kind plus the effect keys present in the mean model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub prior: PriorKind,
    pub keys: Vec<EffectKey>,
}

impl ModelSpec {
    pub fn full(layout: &Layout, prior: PriorKind) -> Self {
        ModelSpec {
            prior,
            keys: layout.all_keys(),
        }
    }

    /// Main effects only.
    pub fn additive(layout: &Layout, prior: PriorKind) -> Self {
        ModelSpec {
            prior,
            keys: layout.main_keys(),
        }
    }

    /// Whether the precision of `key` is a sampled parameter.
    pub fn samples_gamma(&self, key: &EffectKey) -> bool {
        self.prior == PriorKind::Sb || key.degree() >= 2
    }

    /// Whether the covariance of factor `d` is a sampled parameter.
    pub fn samples_sigma(&self, d: usize) -> bool {
        self.prior == PriorKind::Ha && self.keys.iter().any(|k| k.contains(d))
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.keys.is_empty() {
            return Err(Error::InvalidParameter("model has no effects".into()));
        }
        let mut sorted = self.keys.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.keys {
            return Err(Error::InvalidParameter("model keys must be sorted and distinct".into()));
        }
        if let Some(k) = self.keys.iter().find(|k| k.factors().iter().any(|&d| d >= layout.factors())) {
            return Err(Error::InvalidParameter(format!("key {k} names a factor outside the layout")));
        }
        Ok(())
    }
}

/// Current values of every sampled quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct HaState {
    /// Unconstrained grand mean and effects.
    pub dec: Decomposition,
    /// Error covariance (`1 × 1` holds `σ²` for a single response).
    pub sigma_y: SymMatrix,
    /// Per-factor covariances.
    pub sigma: Vec<SymMatrix>,
    /// Precision per model key and response (held at 1 where not sampled).
    pub gamma: BTreeMap<EffectKey, Vec<f64>>,
}

impl HaState {
    /// Effects at zero, grand mean at its prior mean, unit error variance,
    /// identity covariances, unit precisions.
    pub fn initial(layout: &Layout, spec: &ModelSpec, hyper: &HaHyper) -> Self {
        let p = layout.responses();
        let mut dec = Decomposition::zeros(layout, &spec.keys);
        dec.mu = hyper.mu0.clone();
        HaState {
            dec,
            sigma_y: SymMatrix::identity(p),
            sigma: layout.levels().iter().map(|&m| SymMatrix::identity(m)).collect(),
            gamma: spec.keys.iter().map(|k| (k.clone(), vec![1.0; p])).collect(),
        }
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_y[(0, 0)]
    }

    /// Everything finite, covariances positive definite, precisions positive.
    pub fn check(&self) -> Result<()> {
        let finite = self.dec.mu.iter().all(|v| v.is_finite())
            && self.dec.effects.values().all(|e| e.data().iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("non-finite mean parameter".into()));
        }
        chol(&self.sigma_y)?;
        for s in &self.sigma {
            chol(s)?;
        }
        if !self.gamma.values().flatten().all(|&g| g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter("non-positive precision".into()));
        }
        Ok(())
    }
}
