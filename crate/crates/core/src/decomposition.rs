//! ANOVA/MANOVA decompositions of cell-mean arrays.
//!
//! Arrays indexed by cells carry a trailing response mode, so a cell-means
//! array has shape `m_1 × … × m_K × p` and the effect for key `S` has shape
//! `(m_d, d ∈ S) × p`. [`anova_decompose`] uses unweighted sum-to-zero
//! identification: each effect sums to zero over each of its own indices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Grand mean, one entry per response.
    pub mu: Vec<f64>,
    /// Effect arrays of shape `key dims × p`. Absent keys are zero.
    pub effects: BTreeMap<EffectKey, Tensor>,
}

impl Decomposition {
    /// All-zero decomposition over `keys`.
    pub fn zeros(layout: &Layout, keys: &[EffectKey]) -> Self {
        let p = layout.responses();
        let effects = keys
            .iter()
            .map(|k| {
                let mut dims = layout.key_dims(k);
                dims.push(p);
                (k.clone(), Tensor::zeros(&dims))
            })
            .collect();
        Decomposition {
            mu: vec![0.0; p],
            effects,
        }
    }

    pub fn effect(&self, key: &EffectKey) -> Result<&Tensor> {
        self.effects
            .get(key)
            .ok_or_else(|| Error::InvalidParameter(format!("no effect for key {key}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &EffectKey> {
        self.effects.keys()
    }
}

/// Response slice `r` of an effect array (shape without the response mode).
pub fn response_slice(effect: &Tensor, r: usize) -> Tensor {
    let dims = effect.dims();
    let inner = &dims[..dims.len() - 1];
    let len: usize = inner.iter().product();
    let data = effect.data()[r * len..(r + 1) * len].to_vec();
    if inner.is_empty() {
        return Tensor::from_vec(&[1], data).expect("scalar slice");
    }
    Tensor::from_vec(inner, data).expect("slice shape")
}

/// `μ_cell = μ + Σ_S effect_S[cell_S]` for every cell and response.
pub fn cell_means(layout: &Layout, dec: &Decomposition) -> Tensor {
    let cells = layout.cells();
    let p = layout.responses();
    let mut out = Tensor::zeros(&layout.cell_dims());
    let data = out.data_mut();
    for r in 0..p {
        data[r * cells..(r + 1) * cells].fill(dec.mu[r]);
    }
    for (key, effect) in &dec.effects {
        let proj = layout.projection(key);
        let len = layout.key_len(key);
        let e = effect.data();
        for r in 0..p {
            let slot = &mut data[r * cells..(r + 1) * cells];
            for (v, &j) in slot.iter_mut().zip(&proj) {
                *v += e[r * len + j];
            }
        }
    }
    out
}

/// Unweighted marginal means of a cell array over the factors outside `key`.
/// `key = None` gives the grand mean per response.
pub fn marginal_means(layout: &Layout, m: &Tensor, key: Option<&EffectKey>) -> Vec<f64> {
    let cells = layout.cells();
    let p = layout.responses();
    let (proj, len) = match key {
        Some(k) => (layout.projection(k), layout.key_len(k)),
        None => (vec![0; cells], 1),
    };
    let per = (cells / len) as f64;
    let mut out = vec![0.0; len * p];
    for r in 0..p {
        let src = &m.data()[r * cells..(r + 1) * cells];
        for (v, &j) in src.iter().zip(&proj) {
            out[r * len + j] += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= per);
    out
}

/// Decomposes `m` (shape `layout.cell_dims()`) into grand mean and all
/// `2^K − 1` effects by iterated unweighted marginal means.
pub fn anova_decompose(layout: &Layout, m: &Tensor) -> Result<Decomposition> {
    if m.dims() != layout.cell_dims().as_slice() {
        return Err(Error::Dimension(format!(
            "cell array has shape {:?}, layout expects {:?}",
            m.dims(),
            layout.cell_dims()
        )));
    }
    let p = layout.responses();
    let mu = marginal_means(layout, m, None);
    let mut effects: BTreeMap<EffectKey, Tensor> = BTreeMap::new();
    for key in layout.all_keys() {
        let mut data = marginal_means(layout, m, Some(&key));
        let len = layout.key_len(&key);
        let dims = layout.key_dims(&key);
        for r in 0..p {
            for v in &mut data[r * len..(r + 1) * len] {
                *v -= mu[r];
            }
        }
        // Subtract every lower-order effect whose factors are a proper subset.
        for (sub, effect) in &effects {
            if !sub.factors().iter().all(|&d| key.contains(d)) {
                continue;
            }
            let sub_len = layout.key_len(sub);
            let map = sub_projection(&dims, &key, sub);
            for r in 0..p {
                let e = &effect.data()[r * sub_len..(r + 1) * sub_len];
                for (v, &j) in data[r * len..(r + 1) * len].iter_mut().zip(&map) {
                    *v -= e[j];
                }
            }
        }
        let mut shape = dims.clone();
        shape.push(p);
        effects.insert(key, Tensor::from_vec(&shape, data)?);
    }
    Ok(Decomposition { mu, effects })
}

/// For each entry of an effect on `key` (dims `dims`), the flat index of the
/// entry of the effect on `sub ⊆ key` that it projects to.
fn sub_projection(dims: &[usize], key: &EffectKey, sub: &EffectKey) -> Vec<usize> {
    let len: usize = dims.iter().product();
    let modes: Vec<usize> = sub.factors().iter().map(|&d| key.mode_of(d).unwrap()).collect();
    let mut out = Vec::with_capacity(len);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..len {
        let mut at = 0;
        let mut step = 1;
        for &mode in &modes {
            at += idx[mode] * step;
            step *= dims[mode];
        }
        out.push(at);
        crate::tensor::increment(&mut idx, dims);
    }
    out
}

/// Effect magnitude `‖effect‖² / ∏_{d∈key} m_d`, per response and summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnitude {
    pub total: f64,
    pub per_response: Vec<f64>,
}

/// Squared norm summed in ascending order of the squares, which makes the
/// result invariant to any reordering of the entries.
fn ordered_sum_sq(values: &[f64]) -> f64 {
    let mut sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    sq.iter().sum()
}

pub fn effect_magnitude(layout: &Layout, dec: &Decomposition, key: &EffectKey) -> Result<Magnitude> {
    let effect = dec.effect(key)?;
    let len = layout.key_len(key);
    let per_response: Vec<f64> = (0..layout.responses())
        .map(|r| ordered_sum_sq(&effect.data()[r * len..(r + 1) * len]) / len as f64)
        .collect();
    Ok(Magnitude {
        total: per_response.iter().sum(),
        per_response,
    })
}

/// Average squared error `‖M̂ − M‖² / (number of entries)`.
pub fn ase(estimate: &Tensor, truth: &Tensor) -> Result<f64> {
    if estimate.dims() != truth.dims() {
        return Err(Error::Dimension(format!(
            "estimate {:?} vs truth {:?}",
            estimate.dims(),
            truth.dims()
        )));
    }
    let ss: f64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ss / truth.len() as f64)
}
