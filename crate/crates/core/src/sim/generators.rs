//! Truth generators and data simulation for the simulation regimes.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::decomposition::{anova_decompose, cell_means, effect_magnitude, Decomposition};
use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::rng::{stream_id, RngStream};
use crate::samplers::{sample_gamma, std_normal};
use crate::stats::CellStats;
use crate::tensor::{increment, Tensor};

/// Effect magnitudes of the order-consistent truth, in key order
/// `a, b, c, ab, ac, bc, abc`.
pub const ORDER_CONSISTENT_TARGETS: [f64; 7] = [5.267, 0.012, 0.004, 1.365, 1.312, 0.384, 0.474];

/// Main-effect magnitudes of the additive truth.
pub const ADDITIVE_TARGETS: [f64; 3] = [3.0, 1.3, 0.3];

/// Seed of the frozen reference order-consistent array.
pub const REFERENCE_SEED: u64 = 20_120_815;

/// Default study dimensions.
pub const STUDY_DIMS: [usize; 3] = [15, 7, 3];

const MAX_REDRAWS: u64 = 100;

fn single_response(dims: &[usize]) -> Result<Layout> {
    Layout::new(dims, 1)
}

/// Bin centers of `m` equal bins on `[−1, 1]`.
fn bin_centers(m: usize) -> Vec<f64> {
    (0..m).map(|i| -1.0 + (2 * i + 1) as f64 / m as f64).collect()
}

/// Exponent vectors of every monomial of total degree at most 3 in `k` variables.
fn cubic_monomials(k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut e = vec![0u32; k];
    loop {
        if e.iter().sum::<u32>() <= 3 {
            out.push(e.clone());
        }
        let mut d = 0;
        loop {
            if d == k {
                return out;
            }
            e[d] += 1;
            if e[d] <= 3 {
                break;
            }
            e[d] = 0;
            d += 1;
        }
    }
}

/// A random cubic in `K` continuous variables (standard normal coefficients
/// on every monomial of degree ≤ 3) evaluated at the bin centers of the grid.
pub fn gen_cubic(dims: &[usize], seed: u64) -> Result<Tensor> {
    let layout = single_response(dims)?;
    let mut rng = RngStream::new(seed, stream_id(&[0xC0B1C]));
    let monomials = cubic_monomials(dims.len());
    let coef: Vec<f64> = monomials.iter().map(|_| std_normal(&mut rng)).collect();
    let centers: Vec<Vec<f64>> = dims.iter().map(|&m| bin_centers(m)).collect();
    Ok(Tensor::from_fn(&layout.cell_dims(), |ix| {
        monomials
            .iter()
            .zip(&coef)
            .map(|(e, c)| c * e.iter().enumerate().map(|(d, &p)| centers[d][ix[d]].powi(p as i32)).product::<f64>())
            .sum()
    }))
}

/// Rescales every effect of `dec` to the matching magnitude in `targets`
/// (key order) and zeroes the grand mean. Fails if an effect is degenerate.
fn rescale(layout: &Layout, dec: &mut Decomposition, targets: &[f64]) -> Result<()> {
    let keys: Vec<EffectKey> = dec.keys().cloned().collect();
    for (key, &target) in keys.iter().zip(targets) {
        let current = effect_magnitude(layout, dec, key)?.total;
        if !(current > 1e-10) {
            return Err(Error::InvalidParameter(format!("effect {key} is degenerate")));
        }
        let f = (target / current).sqrt();
        dec.effects.get_mut(key).expect("key").data_mut().iter_mut().for_each(|v| *v *= f);
    }
    dec.mu = vec![0.0; layout.responses()];
    Ok(())
}

/// Order-consistent truth: a random cubic, decomposed, with every effect
/// rescaled to [`ORDER_CONSISTENT_TARGETS`]. Needs three factors.
pub fn gen_order_consistent(dims: &[usize], seed: u64) -> Result<Tensor> {
    if dims.len() != 3 {
        return Err(Error::InvalidParameter("calibrated generator needs three factors".into()));
    }
    let layout = single_response(dims)?;
    for attempt in 0..MAX_REDRAWS {
        let m = gen_cubic(dims, stream_id(&[seed, attempt]))?;
        let mut dec = anova_decompose(&layout, &m)?;
        if rescale(&layout, &mut dec, &ORDER_CONSISTENT_TARGETS).is_ok() {
            return Ok(cell_means(&layout, &dec));
        }
    }
    Err(Error::InvalidParameter("no non-degenerate cubic after bounded redraws".into()))
}

/// The frozen order-consistent array at the default study dimensions.
pub fn reference_order_consistent() -> Tensor {
    gen_order_consistent(&STUDY_DIMS, REFERENCE_SEED).expect("reference seed gives a valid draw")
}

/// Permutes the levels of each factor independently within each effect.
pub fn permute_effects<R: Rng + ?Sized>(layout: &Layout, dec: &Decomposition, rng: &mut R) -> Decomposition {
    let mut out = dec.clone();
    for (key, effect) in out.effects.iter_mut() {
        let perms: Vec<Vec<usize>> = key
            .factors()
            .iter()
            .map(|&d| {
                let mut p: Vec<usize> = (0..layout.levels()[d]).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        let dims = effect.dims().to_vec();
        let src = effect.clone();
        let mut idx = vec![0usize; dims.len()];
        let mut from = vec![0usize; dims.len()];
        for slot in effect.data_mut().iter_mut() {
            from.copy_from_slice(&idx);
            for (mode, perm) in perms.iter().enumerate() {
                from[mode] = perm[idx[mode]];
            }
            *slot = src.get(&from);
            increment(&mut idx, &dims);
        }
    }
    out
}

/// Order-inconsistent truth: the effects of `m` with independently permuted levels.
pub fn gen_order_inconsistent(dims: &[usize], m: &Tensor, seed: u64) -> Result<Tensor> {
    let layout = single_response(dims)?;
    let dec = anova_decompose(&layout, m)?;
    let mut rng = RngStream::new(seed, stream_id(&[0x9E4]));
    Ok(cell_means(&layout, &permute_effects(&layout, &dec, &mut rng)))
}

/// Truth drawn from the independent-effects prior: one precision
/// `γ ~ gamma(ν/2, τ²/2)` per effect, entries i.i.d. `N(0, 1/γ)`, zero grand mean.
pub fn gen_sb_prior(dims: &[usize], nu: f64, tau_sq: f64, seed: u64) -> Result<Tensor> {
    let layout = single_response(dims)?;
    let mut rng = RngStream::new(seed, stream_id(&[0x5B]));
    let mut dec = Decomposition::zeros(&layout, &layout.all_keys());
    for effect in dec.effects.values_mut() {
        let gamma = sample_gamma(nu / 2.0, tau_sq / 2.0, &mut rng)?;
        let sd = 1.0 / gamma.sqrt();
        effect.data_mut().iter_mut().for_each(|v| *v = sd * std_normal(&mut rng));
    }
    Ok(cell_means(&layout, &dec))
}

/// Additive truth: binned linear main effects with random signs, rescaled to
/// [`ADDITIVE_TARGETS`]; every interaction is zero.
pub fn gen_additive(dims: &[usize], seed: u64) -> Result<Tensor> {
    if dims.len() != 3 {
        return Err(Error::InvalidParameter("calibrated additive generator needs three factors".into()));
    }
    let layout = single_response(dims)?;
    let mut rng = RngStream::new(seed, stream_id(&[0xADD]));
    let mut dec = Decomposition::zeros(&layout, &layout.main_keys());
    for (d, effect) in dec.effects.values_mut().enumerate() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        effect.data_mut().copy_from_slice(&bin_centers(dims[d]).iter().map(|u| sign * u).collect::<Vec<_>>());
    }
    rescale(&layout, &mut dec, &ADDITIVE_TARGETS)?;
    Ok(cell_means(&layout, &dec))
}

/// One observation per cell, the remaining `n − cells` spread uniformly at random.
pub fn allocate_unbalanced<R: Rng + ?Sized>(n: usize, dims: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let cells: usize = dims.iter().product();
    if n < cells {
        return Err(Error::InvalidParameter(format!("{n} observations cannot cover {cells} cells")));
    }
    let mut counts = vec![1usize; cells];
    for _ in cells..n {
        counts[rng.random_range(0..cells)] += 1;
    }
    Ok(counts)
}

/// Draws `counts[c]` observations `N(M_c, σ²)` per cell (independently per response).
pub fn simulate_dataset<R: Rng + ?Sized>(
    layout: &Layout,
    m: &Tensor,
    counts: &[usize],
    sigma: f64,
    rng: &mut R,
) -> Result<CellStats> {
    if m.dims() != layout.cell_dims().as_slice() || counts.len() != layout.cells() {
        return Err(Error::Dimension("truth or counts do not match the layout".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("error sd {sigma} must be nonnegative")));
    }
    let cells = layout.cells();
    let p = layout.responses();
    let mut stats = CellStats::new(layout.clone());
    let mut y = vec![0.0; p];
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            for (r, v) in y.iter_mut().enumerate() {
                *v = m.data()[r * cells + c] + sigma * std_normal(rng);
            }
            stats.add(c, &y)?;
        }
    }
    Ok(stats)
}
