//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use ha_array::diagnostics::mcse;
use ha_array::gibbs::{default_hyperparameters, run_chain, ChainConfig, FactorPrior, ModelSpec, PriorKind};
use ha_array::samplers::std_normal;
use ha_array::{CellStats, Layout, RngStream, SymMatrix};

/// Respondent counts by age (rows), then ethnicity blocks of five education
/// levels. The one blank entry of the published cross-tabulation is taken as 3,
/// the value that makes the total 2134 and the error df 2034.
const NHANES_COUNTS: [[usize; 20]; 5] = [
    [21, 24, 23, 17, 13, 12, 8, 10, 11, 1, 3, 37, 56, 55, 56, 1, 13, 31, 35, 16],
    [26, 10, 19, 14, 6, 11, 9, 10, 9, 3, 10, 25, 56, 57, 50, 2, 25, 21, 25, 17],
    [29, 11, 10, 14, 10, 17, 6, 12, 13, 11, 10, 24, 46, 57, 57, 3, 23, 23, 24, 14],
    [31, 7, 5, 11, 5, 19, 4, 11, 6, 7, 15, 23, 56, 46, 54, 16, 34, 20, 33, 14],
    [27, 2, 3, 1, 3, 10, 8, 5, 2, 7, 61, 37, 93, 72, 68, 16, 10, 11, 7, 12],
];

pub fn nhanes_layout(responses: usize) -> Layout {
    let labels = vec![
        vec!["P", "S", "HD", "AD", "BD"],
        vec!["Mexican", "Hispanic", "White", "Black"],
        vec!["31-40", "41-50", "51-60", "61-70", "71-80"],
    ];
    Layout::with_labels(
        vec!["Education".into(), "Ethnicity".into(), "Age".into()],
        labels.into_iter().map(|l| l.into_iter().map(String::from).collect()).collect(),
        responses,
    )
    .unwrap()
}

/// Cell counts in layout order (Education fastest, then Ethnicity, then Age).
pub fn nhanes_counts() -> Vec<usize> {
    let mut out = vec![0; 100];
    for (age, row) in NHANES_COUNTS.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            let (eth, edu) = (j / 5, j % 5);
            out[edu + 5 * (eth + 4 * age)] = n;
        }
    }
    out
}

/// Synthetic data on the NHANES layout: smooth cell means plus correlated noise.
pub fn nhanes_stats(responses: usize, seed: u64) -> CellStats {
    let layout = nhanes_layout(responses);
    let counts = nhanes_counts();
    let mut rng = RngStream::new(seed, 0);
    let mut stats = CellStats::new(layout.clone());
    let mut y = vec![0.0; responses];
    for (c, &n) in counts.iter().enumerate() {
        let ix = layout.cell_index(c);
        let base = 0.3 * ix[0] as f64 - 0.2 * ix[1] as f64 + 0.1 * (ix[0] * ix[2]) as f64;
        for _ in 0..n {
            let shared = std_normal(&mut rng);
            for (r, v) in y.iter_mut().enumerate() {
                *v = base * (r + 1) as f64 + 0.5 * shared + std_normal(&mut rng);
            }
            stats.add(c, &y).unwrap();
        }
    }
    stats
}

/// Balanced-or-not one-factor data with given per-cell observations.
pub fn stats_from_cells(levels: &[usize], responses: usize, cells: &[Vec<Vec<f64>>]) -> CellStats {
    let layout = Layout::new(levels, responses).unwrap();
    let mut stats = CellStats::new(layout);
    for (c, obs) in cells.iter().enumerate() {
        for y in obs {
            stats.add(c, y).unwrap();
        }
    }
    stats
}

/// One factor with two levels, unbalanced counts 20 and 30, Σ_a and σ² pinned
/// by very concentrated priors: the cell-mean posterior is then Gaussian.
/// Returns the largest deviation of the chain's cell-mean posterior mean and
/// variance from the analytic values, in Monte Carlo standard errors.
pub fn conjugate_toy_deviation(rng: &mut RngStream) -> f64 {
    let (s, tau0_sq, mu0) = (0.5, 4.0, 0.0);
    let truth = [1.2, 0.4];
    let counts = [20usize, 30];
    let obs: Vec<Vec<Vec<f64>>> = counts
        .iter()
        .zip(truth)
        .map(|(&n, t)| (0..n).map(|_| vec![t + std_normal(rng)]).collect())
        .collect();
    let stats = stats_from_cells(&[2], 1, &obs);
    let mut hyper = default_hyperparameters(&stats).unwrap();
    let eta = 1e7;
    hyper.mu0 = vec![mu0];
    hyper.tau0_sq = vec![tau0_sq];
    hyper.nu0 = 1e7;
    hyper.sigma0_sq = 1.0;
    hyper.factors = vec![FactorPrior {
        eta,
        scale: SymMatrix::identity(2).scale(s * (eta - 3.0)),
    }];

    // θ = (μ, a_1, a_2); y = μ + a_i + ε with ε ~ N(0, 1).
    let prior_prec = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / tau0_sq, 1.0 / s, 1.0 / s]));
    let mut xtx = DMatrix::zeros(3, 3);
    let mut xty = DVector::zeros(3);
    for (c, cell) in obs.iter().enumerate() {
        let x = DVector::from_vec(vec![1.0, (c == 0) as u8 as f64, (c == 1) as u8 as f64]);
        for y in cell {
            xtx += &x * x.transpose();
            xty += &x * y[0];
        }
    }
    let post_cov = (prior_prec + xtx).try_inverse().unwrap();
    let post_mean = &post_cov * xty;
    let l = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    let m_mean = &l * post_mean;
    let m_cov = &l * post_cov * l.transpose();

    let config = ChainConfig {
        iterations: 41_000,
        burn_in: 1_000,
        thin: 2,
        seed: 11,
        ..ChainConfig::default()
    };
    let chain = run_chain(&stats, &hyper, &ModelSpec::full(stats.layout(), PriorKind::Ha), &config, 0).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        let series: Vec<f64> = chain.draws.iter().map(|d| d.m[c]).collect();
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        worst = worst.max((mean - m_mean[c]).abs() / mcse(&series).unwrap());
        // MCSE of the second moment, from the squared centered series.
        let sq: Vec<f64> = series.iter().map(|v| (v - m_mean[c]).powi(2)).collect();
        let var = sq.iter().sum::<f64>() / n;
        worst = worst.max((var - m_cov[(c, c)]).abs() / mcse(&sq).unwrap());
    }
    worst
}

