//! Sequential MANOVA tests with Pillai's trace.

use std::path::Path;

use nalgebra::{DMatrix, SVD};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::baselines::effect_coding;
use crate::error::{Error, Result};
use crate::stats::CellStats;

#[derive(Debug, Clone, PartialEq)]
pub struct PillaiRow {
    pub effect: String,
    pub pillai: f64,
    pub approx_f: f64,
    pub num_df: f64,
    pub den_df: f64,
    pub p_value: f64,
}

/// Pillai's trace `V = tr(H(H + E)⁻¹)` and its F approximation:
/// with `s = min(p, q)`, `m = (|p − q| − 1)/2`, `nn = (df_E − p − 1)/2`,
/// `F = (2nn + s + 1)/(2m + s + 1) · V/(s − V)` on `s(2m + s + 1)` and
/// `s(2nn + s + 1)` degrees of freedom.
pub fn pillai_f(h: &DMatrix<f64>, e: &DMatrix<f64>, q: usize, df_e: usize) -> Result<(f64, f64, f64, f64, f64)> {
    let p = h.nrows();
    let total = (h + e).cholesky().ok_or_else(|| Error::RankDeficient("H + E is singular".into()))?;
    let v = total.solve(h).trace();
    let (pf, qf, dfe) = (p as f64, q as f64, df_e as f64);
    let s = pf.min(qf);
    let m = ((pf - qf).abs() - 1.0) / 2.0;
    let nn = (dfe - pf - 1.0) / 2.0;
    let df1 = s * (2.0 * m + s + 1.0);
    let df2 = s * (2.0 * nn + s + 1.0);
    let f = (2.0 * nn + s + 1.0) / (2.0 * m + s + 1.0) * v / (s - v);
    let p_value = if f.is_finite() && df1 > 0.0 && df2 > 0.0 {
        let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        dist.sf(f).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok((v, f, df1, df2, p_value))
}

/// Type I (sequential) tests for every effect in key order on the
/// full-interaction model, with the pooled within-cell SSCP as error.
pub fn pillai_tests(stats: &CellStats) -> Result<Vec<PillaiRow>> {
    let layout = stats.layout();
    let p = layout.responses();
    let cells = layout.cells();
    let occupied: Vec<usize> = (0..cells).filter(|&c| stats.counts()[c] > 0).collect();
    if occupied.is_empty() {
        return Err(Error::NoData);
    }
    let sqrt_w: Vec<f64> = occupied.iter().map(|&c| (stats.counts()[c] as f64).sqrt()).collect();
    let y = DMatrix::from_fn(occupied.len(), p, |i, r| {
        let c = occupied[i];
        sqrt_w[i] * stats.sums().data()[r * cells + c] / stats.counts()[c] as f64
    });

    let mut basis = weighted_rows(&DMatrix::from_element(cells, 1, 1.0), &occupied, &sqrt_w);
    basis = orthonormal(&basis, None).0;
    let mut steps = Vec::new();
    for key in layout.all_keys() {
        let x = weighted_rows(&effect_coding(layout, &key), &occupied, &sqrt_w);
        let (new, q) = orthonormal(&x, Some(&basis));
        if q == 0 {
            log::warn!("effect {} has no estimable contrasts; skipped", layout.key_name(&key));
            continue;
        }
        let proj = new.transpose() * &y;
        let h = proj.transpose() * proj;
        steps.push((layout.key_name(&key), h, q));
        basis = concat(&basis, &new);
    }
    let rank = basis.ncols();
    let n = stats.total();
    if n <= rank + p {
        return Err(Error::RankDeficient(format!(
            "{n} observations leave too few error degrees of freedom for {p} responses"
        )));
    }
    let df_e = n - rank;
    let e = stats.within_sscp();
    if e.clone().cholesky().is_none() {
        return Err(Error::RankDeficient("error SSCP is singular".into()));
    }
    steps
        .into_iter()
        .map(|(effect, h, q)| {
            let (pillai, approx_f, num_df, den_df, p_value) = pillai_f(&h, &e, q, df_e)?;
            Ok(PillaiRow {
                effect,
                pillai,
                approx_f,
                num_df,
                den_df,
                p_value,
            })
        })
        .collect()
}

fn weighted_rows(x: &DMatrix<f64>, rows: &[usize], w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| w[i] * x[(rows[i], j)])
}

fn concat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// Orthonormal basis of the part of `span(x)` orthogonal to `basis`, and its rank.
fn orthonormal(x: &DMatrix<f64>, basis: Option<&DMatrix<f64>>) -> (DMatrix<f64>, usize) {
    let mut r = x.clone();
    if let Some(q) = basis {
        for _ in 0..2 {
            r -= q * (q.transpose() * &r);
        }
    }
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let svd = SVD::new(r, true, false);
    let u = svd.u.expect("left singular vectors");
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let out = DMatrix::from_fn(u.nrows(), keep.len(), |i, j| u[(i, keep[j])]);
    (out, keep.len())
}

pub fn write_pillai_csv(rows: &[PillaiRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["effect", "pillai", "approx_f", "num_df", "den_df", "p_value"])?;
    for r in rows {
        w.write_record([
            r.effect.clone(),
            format!("{}", r.pillai),
            format!("{}", r.approx_f),
            format!("{}", r.num_df),
            format!("{}", r.den_df),
            format!("{}", r.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
