//! Response transforms applied before a multivariate fit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    /// `y ↦ y^{1/4}`; responses must be nonnegative.
    QuarterPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    pub transform: Transform,
    pub standardize: bool,
}

/// What was done to each response column, for reporting on the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRecord {
    pub transform: Transform,
    /// Column means and standard deviations (`N − 1` divisor) after the
    /// transform; empty when not standardized.
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

/// Transforms and optionally standardizes response rows in place.
pub fn manova_preprocess(rows: &mut [Vec<f64>], config: PreprocessConfig) -> Result<TransformRecord> {
    let p = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("response rows differ in length".into()));
    }
    if config.transform == Transform::QuarterPower {
        for (i, row) in rows.iter_mut().enumerate() {
            for v in row.iter_mut() {
                if *v < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative response {v} in row {} cannot take a quarter power",
                        i + 1
                    )));
                }
                *v = v.powf(0.25);
            }
        }
    }
    let mut record = TransformRecord {
        transform: config.transform,
        means: Vec::new(),
        sds: Vec::new(),
    };
    if !config.standardize {
        return Ok(record);
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::InvalidParameter("standardizing needs at least two rows".into()));
    }
    for j in 0..p {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(Error::InvalidParameter(format!("response column {} has zero variance", j + 1)));
        }
        let sd = var.sqrt();
        for row in rows.iter_mut() {
            row[j] = (row[j] - mean) / sd;
        }
        record.means.push(mean);
        record.sds.push(sd);
    }
    Ok(record)
}
