//! Full-conditional updates and the sweep that chains them.

use nalgebra::DMatrix;
use rand::Rng;

use crate::decomposition::{cell_means, response_slice};
use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::linalg::{chol, chol_jittered, eigen, jitter, Eigen};
use crate::samplers::{sample_effect_kron, sample_gamma, sample_inverse_gamma, sample_inverse_wishart, std_normal};
use crate::stats::CellStats;
use crate::tensor::{full_quadratic, mode_quadratic, SymMatrix, Tensor};

use super::hyper::HaHyper;
use super::state::{HaState, ModelSpec, PriorKind};

/// Cell means of a balanced data set: every cell carries `n` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub layout: Layout,
    pub means: Tensor,
    pub n: usize,
}

/// Fills every cell up to `n_max` observations by drawing the mean of the
/// missing ones from `N(μ_cell, Σ_y/(n_max − n_cell))`, then pooling with the
/// observed mean. Cells already at `n_max` are copied without a draw.
pub fn impute_balance<R: Rng + ?Sized>(stats: &CellStats, state: &HaState, rng: &mut R) -> Result<Balanced> {
    let layout = stats.layout();
    let n_max = stats.n_max();
    if n_max == 0 {
        return Err(Error::NoData);
    }
    let cells = layout.cells();
    let p = layout.responses();
    let mut means = stats.sums().clone();
    let needs_draw = stats.counts().iter().any(|&n| n < n_max);
    let mu = if needs_draw {
        Some((cell_means(layout, &state.dec), chol_jittered(&state.sigma_y)?.0))
    } else {
        None
    };
    let data = means.data_mut();
    let mut z = vec![0.0; p];
    for (c, &n) in stats.counts().iter().enumerate() {
        if n == n_max {
            for r in 0..p {
                data[r * cells + c] /= n as f64;
            }
            continue;
        }
        let (fitted, l) = mu.as_ref().expect("imputation inputs");
        let missing = (n_max - n) as f64;
        z.iter_mut().for_each(|v| *v = std_normal(rng));
        for r in 0..p {
            let noise: f64 = (0..=r).map(|j| l.lower()[(r, j)] * z[j]).sum();
            let drawn = fitted.data()[r * cells + c] + noise / missing.sqrt();
            let at = r * cells + c;
            data[at] = (data[at] + missing * drawn) / n_max as f64;
        }
    }
    Ok(Balanced {
        layout: layout.clone(),
        means,
        n: n_max,
    })
}

/// Regression of each response on the others under the error covariance:
/// `coef[(r, j)]` for `j ≠ r` and residual variances `cond_var[r]`.
#[derive(Debug, Clone)]
struct Regression {
    coef: DMatrix<f64>,
    cond_var: Vec<f64>,
}

fn regression(sigma_y: &SymMatrix) -> Result<Regression> {
    let p = sigma_y.order();
    if p == 1 {
        return Ok(Regression {
            coef: DMatrix::zeros(1, 1),
            cond_var: vec![sigma_y[(0, 0)]],
        });
    }
    let omega = chol_jittered(sigma_y)?.0.inverse();
    let mut coef = DMatrix::zeros(p, p);
    let mut cond_var = vec![0.0; p];
    for r in 0..p {
        cond_var[r] = 1.0 / omega[(r, r)];
        for j in 0..p {
            if j != r {
                coef[(r, j)] = -omega[(r, j)] / omega[(r, r)];
            }
        }
    }
    Ok(Regression { coef, cond_var })
}

/// Per-cell residual of response `r` after removing the current fit and the
/// part explained by the other responses' residuals.
fn adjusted_residuals(data: &Balanced, fitted: &Tensor, reg: &Regression, r: usize) -> Vec<f64> {
    let p = reg.cond_var.len();
    let cells = fitted.len() / p;
    let y = data.means.data();
    let m = fitted.data();
    (0..cells)
        .map(|c| {
            let mut e = y[r * cells + c] - m[r * cells + c];
            for j in (0..p).filter(|&j| j != r) {
                e -= reg.coef[(r, j)] * (y[j * cells + c] - m[j * cells + c]);
            }
            e
        })
        .collect()
}

/// Grand-mean update, one response at a time. The data precision is
/// `n·cells/s²_r` and the data mean is the grand mean of the adjusted residuals.
pub fn update_mu<R: Rng + ?Sized>(state: &mut HaState, data: &Balanced, hyper: &HaHyper, rng: &mut R) -> Result<()> {
    let p = state.dec.mu.len();
    let reg = regression(&state.sigma_y)?;
    let cells = data.means.len() / p;
    for r in 0..p {
        let fitted = cell_means(&data.layout, &state.dec);
        let current = state.dec.mu[r];
        let resid = adjusted_residuals(data, &fitted, &reg, r);
        let rbar = current + resid.iter().sum::<f64>() / cells as f64;
        let kappa = (data.n * cells) as f64 / reg.cond_var[r];
        let prec = 1.0 / hyper.tau0_sq[r] + kappa;
        let mean = (hyper.mu0[r] / hyper.tau0_sq[r] + kappa * rbar) / prec;
        state.dec.mu[r] = mean + std_normal(rng) / prec.sqrt();
    }
    Ok(())
}

/// Eigendecompositions of the current factor covariances (identities under
/// the independent prior).
pub fn factor_eigens(state: &HaState, spec: &ModelSpec) -> Result<Vec<Eigen>> {
    state
        .sigma
        .iter()
        .map(|s| match spec.prior {
            PriorKind::Sb => Ok(Eigen::identity(s.order())),
            PriorKind::Ha => eigen(s).or_else(|_| eigen(&jitter(s))),
        })
        .collect()
}

/// Effect update for every response slice of `key`, each conditional on the
/// rest. Prior precision `γ_{key,r}·(⊗_{d∈key} Σ_d)⁻¹`, data precision
/// `n·(cells/len)/s²_r`, data mean the per-entry average of adjusted residuals.
pub fn update_effect<R: Rng + ?Sized>(
    state: &mut HaState,
    key: &EffectKey,
    data: &Balanced,
    eig: &[Eigen],
    rng: &mut R,
) -> Result<()> {
    let layout = &data.layout;
    let p = layout.responses();
    let proj = layout.projection(key);
    let len = layout.key_len(key);
    let cells = layout.cells();
    let key_dims = layout.key_dims(key);
    let key_eig: Vec<&Eigen> = key.factors().iter().map(|&d| &eig[d]).collect();
    let reg = regression(&state.sigma_y)?;
    let per_entry = (cells / len) as f64;
    for r in 0..p {
        let fitted = cell_means(layout, &state.dec);
        let resid = adjusted_residuals(data, &fitted, &reg, r);
        let effect = state.dec.effects.get_mut(key).ok_or_else(|| {
            Error::InvalidParameter(format!("state has no effect {key}"))
        })?;
        let own = &effect.data()[r * len..(r + 1) * len];
        let mut rbar = own.to_vec();
        for (e, &j) in resid.iter().zip(&proj) {
            rbar[j] += e / per_entry;
        }
        let rbar = Tensor::from_vec(&key_dims, rbar)?;
        let kappa = data.n as f64 * per_entry / reg.cond_var[r];
        let gamma = state.gamma[key][r];
        let draw = sample_effect_kron(&rbar, &key_eig, gamma, kappa, rng)?;
        effect.data_mut()[r * len..(r + 1) * len].copy_from_slice(draw.data());
    }
    Ok(())
}

/// `σ² ~ inverse-gamma((ν0 + N)/2, (ν0σ0² + SSR)/2)` over the observed data.
pub fn update_sigma2<R: Rng + ?Sized>(state: &mut HaState, stats: &CellStats, hyper: &HaHyper, rng: &mut R) -> Result<()> {
    let layout = stats.layout();
    if layout.responses() != 1 {
        return Err(Error::Dimension("update_sigma2 needs a single response".into()));
    }
    let ssr = stats.residual_sscp(&cell_means(layout, &state.dec))[(0, 0)];
    let shape = (hyper.nu0 + stats.total() as f64) / 2.0;
    let rate = (hyper.nu0 * hyper.sigma0_sq + ssr) / 2.0;
    let s2 = sample_inverse_gamma(shape, rate, rng)?;
    state.sigma_y = SymMatrix::from_diagonal(&[s2]);
    Ok(())
}

/// `Σ_y ~ inverse-Wishart(η_y0 + N)` with scale `S_y0 + residual SSCP`.
pub fn update_sigma_y<R: Rng + ?Sized>(state: &mut HaState, stats: &CellStats, hyper: &HaHyper, rng: &mut R) -> Result<()> {
    let layout = stats.layout();
    let sscp = stats.residual_sscp(&cell_means(layout, &state.dec));
    let scale = SymMatrix::symmetrize(hyper.s_y0.as_matrix() + sscp);
    state.sigma_y = sample_inverse_wishart(hyper.eta_y0 + stats.total() as f64, &scale, rng)?;
    Ok(())
}

fn update_error<R: Rng + ?Sized>(state: &mut HaState, stats: &CellStats, hyper: &HaHyper, rng: &mut R) -> Result<()> {
    if stats.layout().responses() == 1 {
        update_sigma2(state, stats, hyper, rng)
    } else {
        update_sigma_y(state, stats, hyper, rng)
    }
}

/// Degrees of freedom `η_d1` of the factor-covariance full conditional.
pub fn sigma_posterior_dof(levels: &[usize], responses: usize, spec: &ModelSpec, d: usize, eta0: f64) -> f64 {
    spec.keys
        .iter()
        .filter(|k| k.contains(d))
        .map(|k| {
            let others: usize = k.factors().iter().filter(|&&e| e != d).map(|&e| levels[e]).product();
            (responses * others) as f64
        })
        .sum::<f64>()
        + eta0
}

/// `Σ_d ~ inverse-Wishart(η_d1)` with scale
/// `S_d0 + Σ_{key∋d, r} γ_{key,r}·E_(d)(⊗_{e≠d} Σ_e)⁻¹E_(d)ᵀ`.
pub fn update_sigma<R: Rng + ?Sized>(
    state: &mut HaState,
    spec: &ModelSpec,
    d: usize,
    hyper: &HaHyper,
    rng: &mut R,
) -> Result<()> {
    let levels: Vec<usize> = state.sigma.iter().map(|s| s.order()).collect();
    let p = state.dec.mu.len();
    let inverses = factor_inverses(state)?;
    let prior = &hyper.factors[d];
    let mut scale = prior.scale.as_matrix().clone();
    for key in spec.keys.iter().filter(|k| k.contains(d)) {
        let mode = key.mode_of(d).expect("key contains d");
        let others: Vec<&DMatrix<f64>> = key.factors().iter().filter(|&&e| e != d).map(|&e| &inverses[e]).collect();
        let effect = state.dec.effect(key)?;
        for r in 0..p {
            let q = mode_quadratic(&response_slice(effect, r), mode, &others)?;
            scale += q.as_matrix() * state.gamma[key][r];
        }
    }
    let eta = sigma_posterior_dof(&levels, p, spec, d, prior.eta);
    state.sigma[d] = sample_inverse_wishart(eta, &SymMatrix::symmetrize(scale), rng)?;
    Ok(())
}

fn factor_inverses(state: &HaState) -> Result<Vec<DMatrix<f64>>> {
    state
        .sigma
        .iter()
        .map(|s| Ok(chol_jittered(s)?.0.inverse().into_matrix()))
        .collect()
}

/// `γ ~ gamma((ν0 + len)/2, (τ0² + q)/2)` with `q = vec(E)ᵀ(⊗Σ)⁻¹vec(E)`.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut HaState,
    spec: &ModelSpec,
    key: &EffectKey,
    r: usize,
    hyper: &HaHyper,
    rng: &mut R,
) -> Result<()> {
    let slice = response_slice(state.dec.effect(key)?, r);
    let q = match spec.prior {
        PriorKind::Sb => slice.sum_sq(),
        PriorKind::Ha => {
            let inv: Vec<DMatrix<f64>> = key
                .factors()
                .iter()
                .map(|&d| Ok(chol(&state.sigma[d]).or_else(|_| chol(&jitter(&state.sigma[d])))?.inverse().into_matrix()))
                .collect::<Result<_>>()?;
            let refs: Vec<&DMatrix<f64>> = inv.iter().collect();
            full_quadratic(&slice, &refs)?
        }
    };
    let prior = hyper.gamma_prior(key, r)?;
    let len = slice.len() as f64;
    let g = sample_gamma((prior.nu + len) / 2.0, (prior.tau_sq + q) / 2.0, rng)?;
    state.gamma.get_mut(key).expect("gamma for model key")[r] = g;
    Ok(())
}

/// One sweep: balance → μ → effects (by degree, then lexicographic) →
/// error covariance → factor covariances → precisions.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut HaState,
    stats: &CellStats,
    hyper: &HaHyper,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<()> {
    let data = impute_balance(stats, state, rng)?;
    update_mu(state, &data, hyper, rng)?;
    let eig = factor_eigens(state, spec)?;
    for key in &spec.keys {
        update_effect(state, key, &data, &eig, rng)?;
    }
    update_error(state, stats, hyper, rng)?;
    for d in 0..state.sigma.len() {
        if spec.samples_sigma(d) {
            update_sigma(state, spec, d, hyper, rng)?;
        }
    }
    for key in &spec.keys {
        if spec.samples_gamma(key) {
            for r in 0..state.dec.mu.len() {
                update_gamma(state, spec, key, r, hyper, rng)?;
            }
        }
    }
    debug_assert!(state.check().is_ok(), "invalid state after sweep: {:?}", state.check());
    Ok(())
}
