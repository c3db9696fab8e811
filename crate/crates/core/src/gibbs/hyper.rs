//! Prior hyperparameters and their data-driven defaults.

use std::collections::BTreeMap;

use crate::decomposition::{anova_decompose, cell_means, Decomposition};
use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::stats::{ols_cell_means, CellStats};
use crate::tensor::{SymMatrix, Tensor};

/// Inverse-Wishart prior for one factor covariance: mean `scale/(eta − m − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPrior {
    pub eta: f64,
    pub scale: SymMatrix,
}

/// `gamma(nu/2, tau_sq/2)` prior (shape/rate) on a precision parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub nu: f64,
    pub tau_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaHyper {
    /// Grand-mean prior `N(mu0_r, tau0_sq_r)`, per response.
    pub mu0: Vec<f64>,
    pub tau0_sq: Vec<f64>,
    /// Error-variance prior, inverse-gamma`(nu0/2, nu0·sigma0_sq/2)` (one response).
    pub nu0: f64,
    pub sigma0_sq: f64,
    /// Error-covariance prior, inverse-Wishart with mean `s_y0/(eta_y0 − p − 1)` (several responses).
    pub eta_y0: f64,
    pub s_y0: SymMatrix,
    /// One prior per factor.
    pub factors: Vec<FactorPrior>,
    /// Precision priors per key and response. Main-effect entries are only
    /// used when main-effect precisions are sampled (the independent prior).
    pub gamma: BTreeMap<EffectKey, Vec<GammaPrior>>,
}

impl HaHyper {
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        let p = layout.responses();
        let bad = |what: &str| Err(Error::InvalidParameter(format!("hyperparameter {what}")));
        if self.mu0.len() != p || self.tau0_sq.len() != p {
            return bad("mu0/tau0_sq length differs from the response count");
        }
        if !self.tau0_sq.iter().all(|&t| t > 0.0 && t.is_finite()) || self.mu0.iter().any(|m| !m.is_finite()) {
            return bad("tau0_sq must be positive");
        }
        if !(self.nu0 > 0.0 && self.sigma0_sq > 0.0) {
            return bad("nu0 and sigma0_sq must be positive");
        }
        if self.s_y0.order() != p || !(self.eta_y0 > p as f64 - 1.0) {
            return bad("eta_y0/s_y0 do not fit the response count");
        }
        if self.factors.len() != layout.factors() {
            return bad("factor prior count differs from the factor count");
        }
        for (d, f) in self.factors.iter().enumerate() {
            let m = layout.levels()[d];
            if f.scale.order() != m || !(f.eta > m as f64 + 1.0) {
                return bad(&format!("for factor {d}: need eta > m + 1 and an m × m scale"));
            }
        }
        for (key, priors) in &self.gamma {
            if priors.len() != p || !priors.iter().all(|g| g.nu > 0.0 && g.tau_sq > 0.0) {
                return bad(&format!("gamma prior for {key} is invalid"));
            }
        }
        Ok(())
    }

    pub fn gamma_prior(&self, key: &EffectKey, r: usize) -> Result<GammaPrior> {
        self.gamma
            .get(key)
            .and_then(|g| g.get(r).copied())
            .ok_or_else(|| Error::InvalidParameter(format!("no gamma prior for {key}, response {r}")))
    }
}

/// OLS decomposition of the cell means with, per key, a flag for every effect
/// entry that is estimable (some cell projecting to it has data).
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub dec: Decomposition,
    pub available: BTreeMap<EffectKey, Vec<bool>>,
}

/// Sum-to-zero OLS decomposition. Empty cells are filled by alternating
/// between decomposing and reconstructing with the unavailable effect
/// entries set to zero.
pub fn ols_decomposition(stats: &CellStats) -> Result<OlsFit> {
    let layout = stats.layout();
    let keys = layout.all_keys();
    let empty = stats.empty_cells();
    if empty.len() == layout.cells() {
        return Err(Error::NoData);
    }
    let available: BTreeMap<EffectKey, Vec<bool>> = keys
        .iter()
        .map(|k| {
            let mut flags = vec![false; layout.key_len(k)];
            for (c, &j) in layout.projection(k).iter().enumerate() {
                flags[j] |= stats.counts()[c] > 0;
            }
            (k.clone(), flags)
        })
        .collect();

    let mut m = ols_cell_means(stats).means;
    if empty.is_empty() {
        return Ok(OlsFit {
            dec: anova_decompose(layout, &m)?,
            available,
        });
    }
    let cells = layout.cells();
    let p = layout.responses();
    // Start empty cells at the mean of the observed cell means.
    for r in 0..p {
        let slot = &mut m.data_mut()[r * cells..(r + 1) * cells];
        let (sum, n) = (0..cells)
            .filter(|&c| stats.counts()[c] > 0)
            .fold((0.0, 0usize), |(s, n), c| (s + slot[c], n + 1));
        for &c in &empty {
            slot[c] = sum / n as f64;
        }
    }
    let mut dec = anova_decompose(layout, &m)?;
    for _ in 0..200 {
        zero_unavailable(layout, &mut dec, &available);
        let fitted = cell_means(layout, &dec);
        let mut change: f64 = 0.0;
        for r in 0..p {
            for &c in &empty {
                let at = r * cells + c;
                change = change.max((fitted.data()[at] - m.data()[at]).abs());
                m.data_mut()[at] = fitted.data()[at];
            }
        }
        dec = anova_decompose(layout, &m)?;
        if change < 1e-12 {
            break;
        }
    }
    zero_unavailable(layout, &mut dec, &available);
    Ok(OlsFit { dec, available })
}

fn zero_unavailable(layout: &Layout, dec: &mut Decomposition, available: &BTreeMap<EffectKey, Vec<bool>>) {
    for (key, effect) in dec.effects.iter_mut() {
        let flags = &available[key];
        let len = layout.key_len(key);
        for r in 0..layout.responses() {
            for (j, &ok) in flags.iter().enumerate() {
                if !ok {
                    effect.data_mut()[r * len + j] = 0.0;
                }
            }
        }
    }
}

/// Squared norm of one response slice of an OLS effect, inflated by
/// `len / available` when some entries are not estimable.
pub fn inflated_sq_norm(layout: &Layout, fit: &OlsFit, key: &EffectKey, r: usize) -> f64 {
    let len = layout.key_len(key);
    let effect: &Tensor = &fit.dec.effects[key];
    let sq: f64 = effect.data()[r * len..(r + 1) * len].iter().map(|v| v * v).sum();
    let avail = fit.available[key].iter().filter(|&&a| a).count();
    if avail == 0 {
        0.0
    } else {
        sq * len as f64 / avail as f64
    }
}

/// Empirical-Bayes defaults matched to the OLS fit.
///
/// * factor `d`: `eta = m_d + 2`, `scale = ‖â_d‖²·I/m_d` (averaged over responses),
///   so the prior mean of `tr Σ_d` is `‖â_d‖²`;
/// * interaction `S`, response `r`: `nu = 1`, `tau_sq = ∏_{d∈S}‖â_{d,r}‖² / ‖Ŝ_r‖²`;
/// * main effect `d`, response `r` (independent prior only): `nu = 1`, `tau_sq = ‖â_{d,r}‖²/m_d`;
/// * grand mean centered at the mean of the observed cell means with the
///   variance of one observation; error variance centered at its MLE with one
///   degree of freedom.
pub fn default_hyperparameters(stats: &CellStats) -> Result<HaHyper> {
    let layout = stats.layout();
    let n = stats.total();
    if n == 0 {
        return Err(Error::NoData);
    }
    let p = layout.responses();
    let fit = ols_decomposition(stats)?;
    let total = stats.total_sscp() / n as f64;
    let within = stats.within_sscp() / n as f64;
    let tau0_sq: Vec<f64> = (0..p).map(|r| floor_positive(total[(r, r)], 1.0)).collect();
    let floor: Vec<f64> = tau0_sq.iter().map(|t| 1e-10 * t).collect();

    let cells = layout.cells();
    let means = ols_cell_means(stats).means;
    let mu0 = (0..p)
        .map(|r| {
            let (s, k) = (0..cells)
                .filter(|&c| stats.counts()[c] > 0)
                .fold((0.0, 0usize), |(s, k), c| (s + means.data()[r * cells + c], k + 1));
            s / k as f64
        })
        .collect();

    let sq: BTreeMap<EffectKey, Vec<f64>> = layout
        .all_keys()
        .into_iter()
        .map(|k| {
            let v = (0..p).map(|r| inflated_sq_norm(layout, &fit, &k, r).max(floor[r])).collect();
            (k, v)
        })
        .collect();

    let factors = (0..layout.factors())
        .map(|d| {
            let m = layout.levels()[d];
            let norm = sq[&EffectKey::main(d)].iter().sum::<f64>() / p as f64;
            FactorPrior {
                eta: m as f64 + 2.0,
                scale: SymMatrix::identity(m).scale(norm / m as f64),
            }
        })
        .collect();

    let gamma = sq
        .iter()
        .map(|(key, norms)| {
            let priors = (0..p)
                .map(|r| {
                    let tau_sq = if key.degree() == 1 {
                        norms[r] / layout.levels()[key.factors()[0]] as f64
                    } else {
                        key.factors().iter().map(|&d| sq[&EffectKey::main(d)][r]).product::<f64>() / norms[r]
                    };
                    GammaPrior { nu: 1.0, tau_sq }
                })
                .collect();
            (key.clone(), priors)
        })
        .collect();

    let sigma0_sq = if p == 1 {
        floor_positive(within[(0, 0)], tau0_sq[0])
    } else {
        1.0
    };
    let s_y0 = {
        let w = SymMatrix::symmetrize(within.clone());
        if crate::linalg::chol(&w).is_ok() {
            w
        } else {
            SymMatrix::symmetrize(total.clone())
        }
    };
    Ok(HaHyper {
        mu0,
        tau0_sq,
        nu0: 1.0,
        sigma0_sq,
        eta_y0: p as f64 + 2.0,
        s_y0,
        factors,
        gamma,
    })
}

fn floor_positive(v: f64, fallback: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        fallback
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_from_means(layout: &Layout, means: &Tensor, counts: &[usize]) -> CellStats {
        let mut stats = CellStats::new(layout.clone());
        let cells = layout.cells();
        for c in 0..cells {
            for k in 0..counts[c] {
                // Two observations straddling the mean keep within variance positive.
                let shift = if k % 2 == 0 { 0.5 } else { -0.5 };
                stats.add(c, &[means.data()[c] + shift]).unwrap();
            }
        }
        stats
    }

    #[test]
    fn factor_prior_matches_main_effect_norm() {
        let layout = Layout::new(&[2], 1).unwrap();
        let m = Tensor::from_vec(&[2, 1], vec![1.0, -1.0]).unwrap();
        let hyper = default_hyperparameters(&stats_from_means(&layout, &m, &[2, 2])).unwrap();
        assert_eq!(hyper.factors[0].eta, 4.0);
        assert_eq!(hyper.factors[0].scale, SymMatrix::identity(2));
        // E[tr Σ] = tr S/(η − m − 1) = ‖â‖².
        assert_eq!(hyper.factors[0].scale.trace() / (4.0 - 2.0 - 1.0), 2.0);
        hyper.validate(&layout).unwrap();
    }

    #[test]
    fn interaction_ratio() {
        // ‖â‖² = 2, ‖b̂‖² = 2, ‖(ab)‖² = 1.
        let layout = Layout::new(&[2, 2], 1).unwrap();
        let a = [-1.0, 1.0];
        let m = Tensor::from_fn(&layout.cell_dims(), |ix| {
            let ab = if ix[0] == ix[1] { 0.5 } else { -0.5 };
            a[ix[0]] + a[ix[1]] + ab
        });
        let hyper = default_hyperparameters(&stats_from_means(&layout, &m, &[2, 2, 2, 2])).unwrap();
        let g = hyper.gamma[&layout.all_keys()[2]][0];
        assert_eq!(g.nu, 1.0);
        assert!((g.tau_sq - 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_empty_cell_inflates_interaction() {
        let layout = Layout::new(&[3, 4], 1).unwrap();
        let m = Tensor::from_fn(&layout.cell_dims(), |ix| (ix[0] as f64 * 1.3 - ix[1] as f64).sin() * 2.0);
        let mut counts = vec![2; 12];
        counts[5] = 0;
        let stats = stats_from_means(&layout, &m, &counts);
        let fit = ols_decomposition(&stats).unwrap();
        let key = layout.all_keys()[2].clone();
        assert_eq!(fit.available[&key].iter().filter(|a| !**a).count(), 1);
        let raw: f64 = fit.dec.effects[&key].data().iter().map(|v| v * v).sum();
        assert!((inflated_sq_norm(&layout, &fit, &key, 0) - raw * 12.0 / 11.0).abs() < 1e-12);
        // The filled cell reproduces every observed cell exactly.
        let fitted = cell_means(&layout, &fit.dec);
        let observed = ols_cell_means(&stats).means;
        let unexplained: f64 = (0..12)
            .filter(|&c| c != 5)
            .map(|c| (fitted.data()[c] - observed.data()[c]).abs())
            .sum();
        assert!(unexplained < 1e-9);
    }

    #[test]
    fn no_data_is_an_error() {
        let stats = CellStats::new(Layout::new(&[2], 1).unwrap());
        assert!(matches!(default_hyperparameters(&stats), Err(Error::NoData)));
    }
}
