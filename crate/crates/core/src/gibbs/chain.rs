//! Chain configuration, the chain runner, and chain files.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layout::{EffectKey, Layout};
use crate::rng::RngStream;
use crate::stats::CellStats;
use crate::tensor::{SymMatrix, Tensor};

use super::hyper::HaHyper;
use super::state::{HaState, ModelSpec, PriorKind};
use super::update::gibbs_sweep;

/// Whether unbalanced data may be balanced by imputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    /// Impute whenever cell counts differ.
    Auto,
    /// Refuse unbalanced data.
    Off,
}

/// Quantities recorded besides the cell means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordSet {
    pub error: bool,
    pub sigma: bool,
    pub gamma: bool,
}

impl Default for RecordSet {
    fn default() -> Self {
        RecordSet {
            error: true,
            sigma: true,
            gamma: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub augmentation: Augmentation,
    pub record: RecordSet,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 11_000,
            burn_in: 1_000,
            thin: 10,
            seed: 0,
            chains: 1,
            augmentation: Augmentation::Auto,
            record: RecordSet::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        Ok(())
    }

    /// Number of recorded draws, `(iterations − burn_in)/thin`.
    pub fn draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One recorded draw. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// Cell means in vec order (response mode last).
    pub m: Vec<f64>,
    /// `σ²`, or `Σ_y` row-major.
    pub error: Vec<f64>,
    /// One row-major matrix per recorded factor.
    pub sigma: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub layout: Layout,
    pub method: String,
    pub config: ChainConfig,
    pub stream: u64,
    /// Factors whose covariance draws are recorded.
    pub sigma_factors: Vec<usize>,
    /// Key and response of every recorded precision.
    pub gamma_keys: Vec<(EffectKey, usize)>,
    pub draws: Vec<Draw>,
    pub build: String,
}

/// Short method label for a model: `ha`, `sb`, or `a` + label for additive models.
pub fn method_label(layout: &Layout, spec: &ModelSpec) -> String {
    let base = match spec.prior {
        PriorKind::Ha => "ha",
        PriorKind::Sb => "sb",
    };
    if spec.keys.len() < layout.all_keys().len() {
        format!("a{base}")
    } else {
        base.to_string()
    }
}

/// Runs one chain on stream `stream` of `config.seed`, starting from [`HaState::initial`].
pub fn run_chain(stats: &CellStats, hyper: &HaHyper, spec: &ModelSpec, config: &ChainConfig, stream: u64) -> Result<Chain> {
    let initial = HaState::initial(stats.layout(), spec, hyper);
    run_chain_from(stats, hyper, spec, config, stream, initial)
}

/// Runs one chain from a given starting state.
pub fn run_chain_from(
    stats: &CellStats,
    hyper: &HaHyper,
    spec: &ModelSpec,
    config: &ChainConfig,
    stream: u64,
    initial: HaState,
) -> Result<Chain> {
    config.validate()?;
    let layout = stats.layout();
    spec.validate(layout)?;
    hyper.validate(layout)?;
    if stats.total() == 0 {
        return Err(Error::NoData);
    }
    if config.augmentation == Augmentation::Off && !stats.is_balanced() {
        return Err(Error::Config("data are unbalanced and augmentation is off".into()));
    }
    let p = layout.responses();
    let sigma_factors: Vec<usize> = if config.record.sigma {
        (0..layout.factors()).filter(|&d| spec.samples_sigma(d)).collect()
    } else {
        Vec::new()
    };
    let gamma_keys: Vec<(EffectKey, usize)> = if config.record.gamma {
        spec.keys
            .iter()
            .filter(|k| spec.samples_gamma(k))
            .flat_map(|k| (0..p).map(move |r| (k.clone(), r)))
            .collect()
    } else {
        Vec::new()
    };

    let mut rng = RngStream::new(config.seed, stream);
    let mut state = initial;
    let mut draws = Vec::with_capacity(config.draws());
    for t in 1..=config.iterations {
        gibbs_sweep(&mut state, stats, hyper, spec, &mut rng)?;
        if t > config.burn_in && (t - config.burn_in).is_multiple_of(config.thin) {
            draws.push(record(layout, &state, config.record, &sigma_factors, &gamma_keys));
        }
    }
    Ok(Chain {
        layout: layout.clone(),
        method: method_label(layout, spec),
        config: config.clone(),
        stream,
        sigma_factors,
        gamma_keys,
        draws,
        build: build_id(),
    })
}

/// Runs `config.chains` chains in parallel on streams `0..chains`.
pub fn run_chains(stats: &CellStats, hyper: &HaHyper, spec: &ModelSpec, config: &ChainConfig) -> Result<Vec<Chain>> {
    config.validate()?;
    (0..config.chains as u64)
        .into_par_iter()
        .map(|stream| run_chain(stats, hyper, spec, config, stream))
        .collect()
}

fn build_id() -> String {
    format!("ha-array {}", env!("CARGO_PKG_VERSION"))
}

fn record(layout: &Layout, state: &HaState, set: RecordSet, sigma_factors: &[usize], gamma_keys: &[(EffectKey, usize)]) -> Draw {
    let m = crate::decomposition::cell_means(layout, &state.dec).into_vec();
    let error = if set.error {
        if layout.responses() == 1 {
            vec![state.sigma_sq()]
        } else {
            state.sigma_y.row_major()
        }
    } else {
        Vec::new()
    };
    Draw {
        m,
        error,
        sigma: sigma_factors.iter().map(|&d| state.sigma[d].row_major()).collect(),
        gamma: gamma_keys.iter().map(|(k, r)| state.gamma[k][*r]).collect(),
    }
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Posterior mean of the cell-means array.
    pub fn posterior_mean(&self) -> Tensor {
        let dims = self.layout.cell_dims();
        let mut acc = vec![0.0; dims.iter().product()];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(&d.m) {
                *a += v;
            }
        }
        let n = self.draws.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Tensor::from_vec(&dims, acc).expect("cell dims")
    }

    /// Draws of `Σ_d` for a recorded factor.
    pub fn sigma_draws(&self, factor: usize) -> Option<Vec<SymMatrix>> {
        let slot = self.sigma_factors.iter().position(|&d| d == factor)?;
        let m = self.layout.levels()[factor];
        Some(
            self.draws
                .iter()
                .map(|d| {
                    SymMatrix::symmetrize(nalgebra::DMatrix::from_row_slice(m, m, &d.sigma[slot]))
                })
                .collect(),
        )
    }

    /// Column names in file order.
    pub fn column_names(&self) -> Vec<String> {
        let layout = &self.layout;
        let p = layout.responses();
        let mut names = Vec::new();
        let cells = layout.cells();
        for r in 0..p {
            for c in 0..cells {
                let ix: Vec<String> = layout.cell_index(c).iter().map(|i| (i + 1).to_string()).collect();
                let mut name = format!("M.{}", ix.join("."));
                if p > 1 {
                    name.push_str(&format!(".{}", r + 1));
                }
                names.push(name);
            }
        }
        if self.config.record.error {
            if p == 1 {
                names.push("sigma2".into());
            } else {
                for i in 1..=p {
                    for j in 1..=p {
                        names.push(format!("Sigma_y.{i}.{j}"));
                    }
                }
            }
        }
        for &d in &self.sigma_factors {
            let m = layout.levels()[d];
            for i in 1..=m {
                for j in 1..=m {
                    names.push(format!("Sigma.{}.{i}.{j}", layout.factor_names()[d]));
                }
            }
        }
        for (k, r) in &self.gamma_keys {
            let mut name = format!("gamma.{}", layout.key_name(k));
            if p > 1 {
                name.push_str(&format!(".{}", r + 1));
            }
            names.push(name);
        }
        names
    }

    fn row(&self, i: usize) -> Vec<f64> {
        let d = &self.draws[i];
        let mut row = d.m.clone();
        row.extend(&d.error);
        for s in &d.sigma {
            row.extend(s);
        }
        row.extend(&d.gamma);
        row
    }

    /// One row per draw, values in shortest round-trip decimal form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.column_names())?;
        for i in 0..self.draws.len() {
            w.write_record(self.row(i).iter().map(|v| format!("{v}")))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn meta(&self) -> Vec<(String, String)> {
        let c = &self.config;
        let layout = &self.layout;
        let mut kv = vec![
            ("method".to_string(), self.method.clone()),
            ("seed".into(), c.seed.to_string()),
            ("stream".into(), self.stream.to_string()),
            ("iterations".into(), c.iterations.to_string()),
            ("burn_in".into(), c.burn_in.to_string()),
            ("thin".into(), c.thin.to_string()),
            ("draws".into(), self.draws.len().to_string()),
            (
                "augmentation".into(),
                match c.augmentation {
                    Augmentation::Auto => "auto",
                    Augmentation::Off => "off",
                }
                .into(),
            ),
            ("factors".into(), layout.factor_names().join(",")),
            (
                "levels".into(),
                layout.levels().iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("responses".into(), layout.responses().to_string()),
        ];
        for (name, labels) in layout.factor_names().iter().zip(layout.labels()) {
            kv.push((format!("labels.{name}"), labels.join(",")));
        }
        kv.push(("build".into(), self.build.clone()));
        kv
    }

    pub fn write_meta(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        for (k, v) in self.meta() {
            writeln!(f, "{k}={v}").map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

/// Reads a chain file back as named numeric columns.
pub fn read_chain_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                row: line,
                message: format!("non-numeric value `{field}` in column `{}`", names[j]),
            })?;
            columns[j].push(v);
        }
    }
    Ok((names, columns))
}
