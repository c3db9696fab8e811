//! Comparator estimators: the independent-effects prior and additive fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, Chain, ChainConfig, HaHyper, ModelSpec, PriorKind};
use crate::layout::{EffectKey, Layout};
use crate::stats::CellStats;
use crate::tensor::Tensor;

/// Chain under the independent-effects prior: identity factor covariances and
/// one sampled precision per effect, with the same precision hyperpriors.
pub fn sb_chain(stats: &CellStats, hyper: &HaHyper, config: &ChainConfig, stream: u64) -> Result<Chain> {
    let spec = ModelSpec::full(stats.layout(), PriorKind::Sb);
    run_chain(stats, hyper, &spec, config, stream)
}

/// Sum-to-zero (effect) coding of `key` for every cell: `cells × ∏_{d∈key}(m_d − 1)`.
/// Columns run with the first factor of the key fastest.
pub fn effect_coding(layout: &Layout, key: &EffectKey) -> DMatrix<f64> {
    let cells = layout.cells();
    let widths: Vec<usize> = key.factors().iter().map(|&d| layout.levels()[d] - 1).collect();
    let ncol: usize = widths.iter().product();
    let mut x = DMatrix::zeros(cells, ncol);
    for c in 0..cells {
        let ix = layout.cell_index(c);
        let mut col = vec![0usize; widths.len()];
        for j in 0..ncol {
            let mut v = 1.0;
            for (slot, &d) in key.factors().iter().enumerate() {
                let last = layout.levels()[d] - 1;
                v *= if ix[d] == col[slot] {
                    1.0
                } else if ix[d] == last {
                    -1.0
                } else {
                    0.0
                };
            }
            x[(c, j)] = v;
            crate::tensor::increment(&mut col, &widths);
        }
    }
    x
}

/// Weighted least-squares fit of the main-effects model to the cell means,
/// weighted by cell counts. Returns fitted means for every cell, empty ones included.
pub fn additive_ols(stats: &CellStats) -> Result<Tensor> {
    let layout = stats.layout();
    let cells = layout.cells();
    let p = layout.responses();
    let mut blocks = vec![DMatrix::from_element(cells, 1, 1.0)];
    blocks.extend(layout.main_keys().iter().map(|k| effect_coding(layout, k)));
    let ncol: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut x = DMatrix::zeros(cells, ncol);
    let mut at = 0;
    for b in &blocks {
        x.view_mut((0, at), (cells, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    let w: Vec<f64> = stats.counts().iter().map(|&n| n as f64).collect();
    let mut xtwx = DMatrix::zeros(ncol, ncol);
    for c in 0..cells {
        if w[c] > 0.0 {
            let row = x.row(c);
            xtwx += row.transpose() * row * w[c];
        }
    }
    let chol = xtwx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("additive model is not estimable from the occupied cells".into()))?;
    // Cholesky accepts exactly singular systems with a roundoff pivot; compare pivots.
    let diag_min = chol.l().diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
    let diag_max = chol.l().diagonal().iter().cloned().fold(0.0, f64::max);
    if !(diag_min * diag_min > 1e-10 * diag_max * diag_max) {
        return Err(Error::RankDeficient("additive model is not estimable from the occupied cells".into()));
    }
    let mut out = Tensor::zeros(&layout.cell_dims());
    for r in 0..p {
        let mut xtwy = nalgebra::DVector::zeros(ncol);
        for c in 0..cells {
            if w[c] > 0.0 {
                let ybar = stats.sums().data()[r * cells + c] / w[c];
                xtwy += x.row(c).transpose() * (w[c] * ybar);
            }
        }
        let beta = chol.solve(&xtwy);
        let fitted = &x * beta;
        out.data_mut()[r * cells..(r + 1) * cells].copy_from_slice(fitted.as_slice());
    }
    Ok(out)
}

/// Main-effects-only estimates: least squares and an independent-prior chain.
#[derive(Debug, Clone)]
pub struct AdditiveFits {
    pub aols: Tensor,
    pub asb: Chain,
}

pub fn additive_fits(stats: &CellStats, hyper: &HaHyper, config: &ChainConfig, stream: u64) -> Result<AdditiveFits> {
    let aols = additive_ols(stats)?;
    let spec = ModelSpec::additive(stats.layout(), PriorKind::Sb);
    let asb = run_chain(stats, hyper, &spec, config, stream)?;
    Ok(AdditiveFits { aols, asb })
}
