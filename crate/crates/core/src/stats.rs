//! Per-cell sufficient statistics, OLS cell means, and long-format CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::tensor::Tensor;

/// Counts, response sums, and within-cell centered cross-products for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    layout: Layout,
    counts: Vec<usize>,
    sums: Tensor,
    /// Per cell, row-major `p × p` sums of `(y − ȳ_cell)(y − ȳ_cell)ᵀ`.
    centered: Vec<f64>,
    /// Running means used for the online cross-product update.
    running: Vec<f64>,
}

impl CellStats {
    pub fn new(layout: Layout) -> Self {
        let cells = layout.cells();
        let p = layout.responses();
        CellStats {
            counts: vec![0; cells],
            sums: Tensor::zeros(&layout.cell_dims()),
            centered: vec![0.0; cells * p * p],
            running: vec![0.0; cells * p],
            layout,
        }
    }

    /// Adds one observation `y` (length `p`) to cell `cell`.
    pub fn add(&mut self, cell: usize, y: &[f64]) -> Result<()> {
        let p = self.layout.responses();
        let cells = self.layout.cells();
        if cell >= cells || y.len() != p {
            return Err(Error::Dimension(format!(
                "observation of length {} for cell {cell} in a {cells}-cell, p = {p} layout",
                y.len()
            )));
        }
        self.counts[cell] += 1;
        let n = self.counts[cell] as f64;
        let mean = &mut self.running[cell * p..(cell + 1) * p];
        let delta: Vec<f64> = y.iter().zip(mean.iter()).map(|(v, m)| v - m).collect();
        for (m, d) in mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        let block = &mut self.centered[cell * p * p..(cell + 1) * p * p];
        for i in 0..p {
            for j in 0..p {
                block[i * p + j] += delta[i] * (y[j] - mean[j]);
            }
        }
        let sums = self.sums.data_mut();
        for (r, v) in y.iter().enumerate() {
            sums[r * cells + cell] += v;
        }
        Ok(())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn counts_tensor(&self) -> Tensor {
        let data = self.counts.iter().map(|&n| n as f64).collect();
        Tensor::from_vec(self.layout.levels(), data).expect("layout shape")
    }

    pub fn sums(&self) -> &Tensor {
        &self.sums
    }

    /// Within-cell centered cross-product block for `cell` (row-major `p × p`).
    pub fn centered_cross(&self, cell: usize) -> &[f64] {
        let p = self.layout.responses();
        &self.centered[cell * p * p..(cell + 1) * p * p]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_max(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn empty_cells(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&c| self.counts[c] == 0).collect()
    }

    pub fn is_balanced(&self) -> bool {
        self.counts.iter().all(|&n| n == self.counts[0])
    }

    pub fn cell_mean(&self, cell: usize, r: usize) -> Option<f64> {
        let n = self.counts[cell];
        (n > 0).then(|| self.sums.data()[r * self.layout.cells() + cell] / n as f64)
    }

    /// Pooled within-cell SSCP, `Σ_cells Σ_obs (y − ȳ_cell)(y − ȳ_cell)ᵀ`.
    pub fn within_sscp(&self) -> DMatrix<f64> {
        let p = self.layout.responses();
        let mut out = DMatrix::zeros(p, p);
        for block in self.centered.chunks(p * p) {
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += block[i * p + j];
                }
            }
        }
        (&out + out.transpose()) * 0.5
    }

    /// `Σ_obs (y − μ_cell)(y − μ_cell)ᵀ` for a cell-means array `mu` of shape
    /// `layout.cell_dims()`.
    pub fn residual_sscp(&self, mu: &Tensor) -> DMatrix<f64> {
        let p = self.layout.responses();
        let cells = self.layout.cells();
        let mut out = self.within_sscp();
        let mut dev = vec![0.0; p];
        for c in 0..cells {
            let n = self.counts[c];
            if n == 0 {
                continue;
            }
            for (r, d) in dev.iter_mut().enumerate() {
                *d = self.sums.data()[r * cells + c] / n as f64 - mu.data()[r * cells + c];
            }
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += n as f64 * dev[i] * dev[j];
                }
            }
        }
        out
    }

    /// Grand mean of all observations, per response.
    pub fn grand_mean(&self) -> Vec<f64> {
        let cells = self.layout.cells();
        let n = self.total() as f64;
        (0..self.layout.responses())
            .map(|r| self.sums.data()[r * cells..(r + 1) * cells].iter().sum::<f64>() / n)
            .collect()
    }

    /// Total SSCP of all observations about the grand mean.
    pub fn total_sscp(&self) -> DMatrix<f64> {
        let p = self.layout.responses();
        let grand = self.grand_mean();
        let mu = Tensor::from_fn(&self.layout.cell_dims(), |ix| grand[ix[ix.len() - 1]]);
        let out = self.residual_sscp(&mu);
        debug_assert_eq!(out.nrows(), p);
        out
    }
}

/// Per-cell sample means with the empty cells listed.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsMeans {
    /// Sample means; zero in empty cells.
    pub means: Tensor,
    pub missing: Vec<usize>,
}

impl OlsMeans {
    /// The means, or [`Error::EmptyCells`] if any cell has no data.
    pub fn complete(self) -> Result<Tensor> {
        if self.missing.is_empty() {
            Ok(self.means)
        } else {
            Err(Error::EmptyCells { cells: self.missing })
        }
    }
}

/// Full-interaction OLS: the sample mean of every cell.
pub fn ols_cell_means(stats: &CellStats) -> OlsMeans {
    let layout = stats.layout();
    let cells = layout.cells();
    let mut means = stats.sums().clone();
    for (c, &n) in stats.counts().iter().enumerate() {
        for r in 0..layout.responses() {
            let v = &mut means.data_mut()[r * cells + c];
            *v = if n > 0 { *v / n as f64 } else { 0.0 };
        }
    }
    OlsMeans {
        means,
        missing: stats.empty_cells(),
    }
}

/// Column mapping for long-format CSV input.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    pub factors: Vec<String>,
    pub responses: Vec<String>,
    /// Declared level order per factor; `None` collects levels in order of appearance.
    pub levels: Vec<Option<Vec<String>>>,
    /// Append levels missing from a declared list instead of failing.
    pub extend_levels: bool,
}

/// Observation-level data: one cell index and one response vector per row.
#[derive(Debug, Clone)]
pub struct RawData {
    pub layout: Layout,
    pub cells: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl RawData {
    pub fn cell_stats(&self) -> Result<CellStats> {
        let mut stats = CellStats::new(self.layout.clone());
        for (&c, y) in self.cells.iter().zip(&self.rows) {
            stats.add(c, y)?;
        }
        Ok(stats)
    }
}

/// Reads a long-format CSV (header row, string factor columns, numeric response columns).
pub fn read_long_csv(path: &Path, schema: &CsvSchema) -> Result<RawData> {
    if schema.factors.is_empty() || schema.responses.is_empty() {
        return Err(Error::Config("schema needs factor and response columns".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found in {}", path.display())))
    };
    let factor_cols = schema.factors.iter().map(|f| column(f)).collect::<Result<Vec<_>>>()?;
    let response_cols = schema.responses.iter().map(|r| column(r)).collect::<Result<Vec<_>>>()?;

    let k = schema.factors.len();
    let mut labels: Vec<Vec<String>> = (0..k)
        .map(|d| schema.levels.get(d).cloned().flatten().unwrap_or_default())
        .collect();
    let declared: Vec<bool> = (0..k)
        .map(|d| matches!(schema.levels.get(d), Some(Some(_))))
        .collect();
    let mut lookup: Vec<HashMap<String, usize>> = labels
        .iter()
        .map(|l| l.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
        .collect();

    let mut level_rows = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            row: line,
            message,
        };
        let mut idx = Vec::with_capacity(k);
        for d in 0..k {
            let value = record
                .get(factor_cols[d])
                .filter(|v| !v.is_empty())
                .ok_or_else(|| malformed(format!("missing factor `{}`", schema.factors[d])))?;
            let i = match lookup[d].get(value) {
                Some(&i) => i,
                None if declared[d] && !schema.extend_levels => {
                    return Err(malformed(format!(
                        "unknown level `{value}` for factor `{}`",
                        schema.factors[d]
                    )))
                }
                None => {
                    labels[d].push(value.to_string());
                    lookup[d].insert(value.to_string(), labels[d].len() - 1);
                    labels[d].len() - 1
                }
            };
            idx.push(i);
        }
        let mut y = Vec::with_capacity(response_cols.len());
        for (r, &col) in response_cols.iter().enumerate() {
            let raw = record
                .get(col)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| malformed(format!("missing response `{}`", schema.responses[r])))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| malformed(format!("non-numeric response `{raw}` in `{}`", schema.responses[r])))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite response in `{}`", schema.responses[r])));
            }
            y.push(v);
        }
        level_rows.push(idx);
        rows.push(y);
    }
    let layout = Layout::with_labels(schema.factors.clone(), labels, schema.responses.len())?;
    let cells = level_rows
        .iter()
        .map(|idx| crate::tensor::linear_index(layout.levels(), idx))
        .collect();
    Ok(RawData { layout, cells, rows })
}

/// Reads a long-format CSV straight into sufficient statistics.
pub fn ingest_long_csv(path: &Path, schema: &CsvSchema) -> Result<CellStats> {
    read_long_csv(path, schema)?.cell_stats()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> CsvSchema {
        CsvSchema {
            factors: vec!["f1".into(), "f2".into()],
            responses: vec!["y".into()],
            levels: vec![],
            extend_levels: false,
        }
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn four_rows_two_by_two() {
        let f = write("f1,f2,y\na,x,1\na,y,2\nb,x,3\nb,y,4\n");
        let stats = ingest_long_csv(f.path(), &schema()).unwrap();
        assert_eq!(stats.counts(), &[1, 1, 1, 1]);
        assert_eq!(stats.layout().labels()[0], vec!["a", "b"]);
        assert_eq!(ols_cell_means(&stats).complete().unwrap().data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn duplicates_accumulate() {
        let f = write("f1,f2,y\na,x,1\na,x,5\nb,y,4\na,y,0\nb,x,2\n");
        let stats = ingest_long_csv(f.path(), &schema()).unwrap();
        assert_eq!(stats.counts(), &[2, 1, 1, 1]);
        assert_eq!(stats.sums().data()[0], 6.0);
        assert_eq!(stats.centered_cross(0), &[8.0]);
    }

    #[test]
    fn missing_response_names_row() {
        let f = write("f1,f2,y\na,x,1\na,y,\n");
        let err = ingest_long_csv(f.path(), &schema()).unwrap_err();
        match err {
            Error::Malformed { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("missing response"));
            }
            other => panic!("unexpected {other}"),
        }
        let f = write("f1,f2,y\na,x,abc\n");
        assert!(matches!(ingest_long_csv(f.path(), &schema()), Err(Error::Malformed { row: 2, .. })));
    }

    #[test]
    fn declared_levels_and_extension() {
        let f = write("f1,f2,y\nb,x,1\na,y,2\nc,x,3\na,x,1\nb,y,1\n");
        let mut s = schema();
        s.levels = vec![Some(vec!["a".into(), "b".into()]), None];
        assert!(matches!(ingest_long_csv(f.path(), &s), Err(Error::Malformed { row: 4, .. })));
        s.extend_levels = true;
        let stats = ingest_long_csv(f.path(), &s).unwrap();
        assert_eq!(stats.layout().labels()[0], vec!["a", "b", "c"]);
        assert_eq!(stats.empty_cells(), vec![5]);
    }

    #[test]
    fn ols_means_and_empty_cells() {
        let layout = Layout::new(&[2], 1).unwrap();
        let mut stats = CellStats::new(layout);
        stats.add(0, &[2.0]).unwrap();
        stats.add(0, &[4.0]).unwrap();
        stats.add(1, &[5.0]).unwrap();
        assert_eq!(ols_cell_means(&stats).means.data(), &[3.0, 5.0]);

        let mut sparse = CellStats::new(Layout::new(&[3], 1).unwrap());
        sparse.add(1, &[1.0]).unwrap();
        let ols = ols_cell_means(&sparse);
        assert_eq!(ols.missing, vec![0, 2]);
        assert!(matches!(ols.complete(), Err(Error::EmptyCells { cells }) if cells == vec![0, 2]));
    }

    #[test]
    fn residual_sscp_matches_direct_sum() {
        let layout = Layout::new(&[2], 2).unwrap();
        let obs = [(0, [1.0, 2.0]), (0, [3.0, -1.0]), (1, [0.5, 0.5]), (1, [2.0, 1.0]), (1, [1.0, 4.0])];
        let mut stats = CellStats::new(layout.clone());
        for (c, y) in &obs {
            stats.add(*c, y).unwrap();
        }
        let mu = Tensor::from_vec(&layout.cell_dims(), vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        let mut direct = DMatrix::zeros(2, 2);
        for (c, y) in &obs {
            let d = [y[0] - mu.data()[*c], y[1] - mu.data()[2 + *c]];
            for i in 0..2 {
                for j in 0..2 {
                    direct[(i, j)] += d[i] * d[j];
                }
            }
        }
        assert!((stats.residual_sscp(&mu) - direct).norm() < 1e-12);
    }
}
