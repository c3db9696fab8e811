//! Markov-chain and posterior summaries.

use std::path::Path;

use nalgebra::DMatrix;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::gibbs::Chain;
use crate::layout::Layout;
use crate::tensor::{SymMatrix, Tensor};

pub fn is_constant(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[0] == w[1])
}

fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// Biased (`1/n`) autocovariance at `lag`.
fn autocov(series: &[f64], m: f64, lag: usize) -> f64 {
    let n = series.len();
    series[..n - lag]
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Sample autocorrelation at `lag`. A constant series reports 0 (see [`is_constant`]).
pub fn autocorr(series: &[f64], lag: usize) -> Result<f64> {
    if series.len() < lag + 1 {
        return Err(Error::InvalidParameter(format!(
            "autocorrelation at lag {lag} needs at least {} values",
            lag + 1
        )));
    }
    if is_constant(series) {
        return Ok(0.0);
    }
    let m = mean(series);
    Ok(autocov(series, m, lag) / autocov(series, m, 0))
}

/// Integrated autocorrelation time by Geyer's initial positive sequence.
fn iact(series: &[f64]) -> f64 {
    let n = series.len();
    let m = mean(series);
    let c0 = autocov(series, m, 0);
    if !(c0 > 0.0) {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(series, m, 2 * k) + autocov(series, m, 2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    // τ = −1 + 2·Σ Γ_k, since Γ_0 includes the lag-0 term.
    (2.0 * sum - 1.0).max(1.0 / 1.05)
}

/// Effective sample size `n/τ`, clamped to at most `1.05·n`. A constant
/// series has ESS `n`.
pub fn ess(series: &[f64]) -> Result<f64> {
    check_len(series)?;
    let n = series.len() as f64;
    if is_constant(series) {
        return Ok(n);
    }
    Ok((n / iact(series)).min(1.05 * n))
}

/// Geweke's z: mean of the first 10% against the last 50%, each with a
/// spectral variance `var·τ`. A constant series gives 0.
pub fn geweke_z(series: &[f64]) -> Result<f64> {
    check_len(series)?;
    if is_constant(series) {
        return Ok(0.0);
    }
    let n = series.len();
    let a = &series[..(n / 10).max(1)];
    let b = &series[n - n / 2..];
    let spectral = |w: &[f64]| {
        let m = mean(w);
        let var = w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / w.len() as f64;
        var * iact(w) / w.len() as f64
    };
    let mut se2 = spectral(a) + spectral(b);
    if !(se2 > 0.0) {
        // Both windows constant: fall back to the whole-series variance.
        let m = mean(series);
        let var = series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        se2 = var * (1.0 / a.len() as f64 + 1.0 / b.len() as f64);
    }
    Ok((mean(a) - mean(b)) / se2.sqrt())
}

fn check_len(series: &[f64]) -> Result<()> {
    if series.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "series of length {} is too short (need 10)",
            series.len()
        )));
    }
    Ok(())
}

/// Monte Carlo standard error of the series mean.
pub fn mcse(series: &[f64]) -> Result<f64> {
    let n = series.len() as f64;
    let m = mean(series);
    let var = series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / ess(series)?).sqrt())
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central posterior intervals per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalReport {
    pub level: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per cell, whether the interval contains the truth (when supplied).
    pub covered: Option<Vec<bool>>,
}

impl IntervalReport {
    pub fn coverage(&self) -> Option<f64> {
        self.covered
            .as_ref()
            .map(|c| c.iter().filter(|&&x| x).count() as f64 / c.len() as f64)
    }

    pub fn mean_width(&self) -> f64 {
        let total: f64 = self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).sum();
        total / self.lower.len() as f64
    }

    /// One row per cell: index, mean, sd, lower, upper (and covered).
    pub fn write_csv(&self, layout: &Layout, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cell".to_string()];
        header.extend(layout.factor_names().iter().cloned());
        header.extend(["response", "mean", "sd", "lower", "upper"].map(String::from));
        if self.covered.is_some() {
            header.push("covered".into());
        }
        w.write_record(&header)?;
        let cells = layout.cells();
        for i in 0..self.mean.len() {
            let (r, c) = (i / cells, i % cells);
            let mut row = vec![(i + 1).to_string()];
            row.extend(layout.cell_label(c).iter().map(|s| s.to_string()));
            row.push((r + 1).to_string());
            for v in [self.mean[i], self.sd[i], self.lower[i], self.upper[i]] {
                row.push(format!("{v}"));
            }
            if let Some(c) = &self.covered {
                row.push(u8::from(c[i]).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }
}

/// Intervals from a matrix of draws (`draws[i]` is draw `i` over all entries).
pub fn interval_report_from_draws(draws: &[&[f64]], level: f64, truth: Option<&[f64]>) -> Result<IntervalReport> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no draws".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("interval level {level} outside (0, 1)")));
    }
    let width = draws[0].len();
    if let Some(t) = truth {
        if t.len() != width {
            return Err(Error::Dimension(format!("truth has {} entries, draws {width}", t.len())));
        }
    }
    let n = draws.len() as f64;
    let alpha = (1.0 - level) / 2.0;
    let mut report = IntervalReport {
        level,
        mean: Vec::with_capacity(width),
        sd: Vec::with_capacity(width),
        lower: Vec::with_capacity(width),
        upper: Vec::with_capacity(width),
        covered: truth.map(|_| Vec::with_capacity(width)),
    };
    let mut column = vec![0.0; draws.len()];
    for j in 0..width {
        for (c, d) in column.iter_mut().zip(draws) {
            *c = d[j];
        }
        let m = column.iter().sum::<f64>() / n;
        let var = if draws.len() > 1 {
            column.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        column.sort_by(f64::total_cmp);
        let lo = quantile_sorted(&column, alpha);
        let hi = quantile_sorted(&column, 1.0 - alpha);
        report.mean.push(m);
        report.sd.push(var.sqrt());
        report.lower.push(lo);
        report.upper.push(hi);
        if let (Some(cov), Some(t)) = (report.covered.as_mut(), truth) {
            cov.push(lo <= t[j] && t[j] <= hi);
        }
    }
    Ok(report)
}

/// Central `level` intervals for every cell mean of a chain.
pub fn interval_report(chain: &Chain, level: f64, truth: Option<&Tensor>) -> Result<IntervalReport> {
    let draws: Vec<&[f64]> = chain.draws.iter().map(|d| d.m.as_slice()).collect();
    interval_report_from_draws(&draws, level, truth.map(|t| t.data()))
}

/// Pearson correlation matrix between rows of `rows`; rows with zero
/// variance get 0 off-diagonal and are listed in the second return value.
fn row_correlations(rows: &DMatrix<f64>) -> (SymMatrix, Vec<usize>) {
    let (m, k) = rows.shape();
    let mut centered = rows.clone();
    let mut norms = vec![0.0; m];
    for i in 0..m {
        let mu = centered.row(i).sum() / k as f64;
        for j in 0..k {
            centered[(i, j)] -= mu;
        }
        norms[i] = centered.row(i).norm_squared().sqrt();
    }
    let degenerate: Vec<usize> = (0..m).filter(|&i| !(norms[i] > 0.0)).collect();
    let mut out = DMatrix::identity(m, m);
    for i in 0..m {
        for j in 0..i {
            let c = if norms[i] > 0.0 && norms[j] > 0.0 {
                (centered.row(i).dot(&centered.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[(i, j)] = c;
            out[(j, i)] = c;
        }
    }
    (SymMatrix::symmetrize(out), degenerate)
}

/// Level-by-level correlation matrix for factor `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCorrelation {
    pub matrix: SymMatrix,
    /// Levels whose coefficient row has zero variance.
    pub degenerate: Vec<usize>,
}

/// Correlations between the levels of factor `d`, taken across every
/// main-effect and two-way coefficient involving `d` (all responses).
pub fn effect_level_correlations(layout: &Layout, dec: &Decomposition, d: usize) -> Result<LevelCorrelation> {
    if d >= layout.factors() {
        return Err(Error::InvalidParameter(format!("factor {d} outside the layout")));
    }
    let m = layout.levels()[d];
    let p = layout.responses();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (key, effect) in &dec.effects {
        if !key.contains(d) || key.degree() > 2 {
            continue;
        }
        let mode = key.mode_of(d).expect("key contains d");
        let len = layout.key_len(key);
        for r in 0..p {
            let slice = crate::decomposition::response_slice(effect, r);
            let mat = if key.degree() == 1 {
                DMatrix::from_column_slice(m, 1, &slice.data()[..len])
            } else {
                slice.matricize(mode)?
            };
            for col in mat.column_iter() {
                columns.push(col.iter().copied().collect());
            }
        }
    }
    if columns.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "factor {d} has {} coefficient columns, need at least 2",
            columns.len()
        )));
    }
    let rows = DMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
    let (matrix, degenerate) = row_correlations(&rows);
    Ok(LevelCorrelation { matrix, degenerate })
}

/// Posterior mean of the correlation matrix `C_d` for every recorded factor.
pub fn posterior_correlation_matrices(chain: &Chain) -> Result<Vec<(usize, SymMatrix)>> {
    if chain.sigma_factors.is_empty() {
        return Err(Error::InvalidParameter("chain did not record factor covariances".into()));
    }
    let mut out = Vec::new();
    for &d in &chain.sigma_factors {
        let draws = chain.sigma_draws(d).expect("recorded factor");
        let m = chain.layout.levels()[d];
        let mut acc = DMatrix::zeros(m, m);
        for s in &draws {
            acc += correlation(s);
        }
        let n = draws.len().max(1) as f64;
        out.push((d, SymMatrix::symmetrize(acc / n)));
    }
    Ok(out)
}

/// `C_ij = S_ij/√(S_ii·S_jj)` with an exact unit diagonal.
pub fn correlation(s: &SymMatrix) -> DMatrix<f64> {
    let m = s.order();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            (s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    })
}

/// Per-column convergence summary of a chain file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    pub geweke_z: f64,
    pub autocorr: f64,
    pub constant: bool,
}

impl SeriesSummary {
    pub fn flagged(&self) -> bool {
        self.geweke_z.abs() > 2.0
    }
}

pub fn summarize_series(name: &str, series: &[f64], lag: usize) -> Result<SeriesSummary> {
    Ok(SeriesSummary {
        name: name.to_string(),
        mean: mean(series),
        ess: ess(series)?,
        geweke_z: geweke_z(series)?,
        autocorr: autocorr(series, lag)?,
        constant: is_constant(series),
    })
}

pub fn write_series_csv(summaries: &[SeriesSummary], lag: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "series".to_string(),
        "mean".into(),
        "ess".into(),
        "geweke_z".into(),
        format!("autocorr_lag{lag}"),
        "constant".into(),
        "flag_geweke".into(),
    ])?;
    for s in summaries {
        w.write_record([
            s.name.clone(),
            format!("{}", s.mean),
            format!("{}", s.ess),
            format!("{}", s.geweke_z),
            format!("{}", s.autocorr),
            u8::from(s.constant).to_string(),
            u8::from(s.flagged()).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Writes an `m × m` matrix with level labels as a CSV table.
pub fn write_matrix_csv(labels: &[String], matrix: &SymMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["level".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..labels.len()).map(|j| format!("{}", matrix[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
