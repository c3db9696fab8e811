//! The simulation-study driver and its tidy report.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::additive_ols;
use crate::config::KvConfig;
use crate::decomposition::{anova_decompose, ase, effect_magnitude};
use crate::diagnostics::interval_report;
use crate::error::{Error, Result};
use crate::gibbs::{default_hyperparameters, run_chain, ChainConfig, ModelSpec, PriorKind, RecordSet};
use crate::layout::Layout;
use crate::rng::{stream_id, RngStream};
use crate::stats::ols_cell_means;
use crate::tensor::Tensor;

use super::generators::{
    allocate_unbalanced, gen_additive, gen_order_consistent, gen_order_inconsistent, gen_sb_prior,
    simulate_dataset, REFERENCE_SEED, STUDY_DIMS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    OrderConsistent,
    OrderInconsistent,
    SbGenerated,
    Additive,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::OrderConsistent,
        Regime::OrderInconsistent,
        Regime::SbGenerated,
        Regime::Additive,
    ];

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::OrderConsistent => "order-consistent",
            Regime::OrderInconsistent => "order-inconsistent",
            Regime::SbGenerated => "sb-generated",
            Regime::Additive => "additive",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown regime `{s}` (expected order-consistent, order-inconsistent, sb-generated or additive)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ols,
    Sb,
    Ha,
    Aols,
    Asb,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ols, Method::Sb, Method::Ha, Method::Aols, Method::Asb];

    fn code(self) -> u64 {
        self as u64 + 1
    }

    /// Whether the method produces posterior intervals.
    pub fn is_bayes(self) -> bool {
        matches!(self, Method::Sb | Method::Ha | Method::Asb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ols => "ols",
            Method::Sb => "sb",
            Method::Ha => "ha",
            Method::Aols => "aols",
            Method::Asb => "asb",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected ols, sb, ha, aols or asb)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub regime: Regime,
    pub dims: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Error standard deviation.
    pub sigma: f64,
    /// Posterior interval level.
    pub level: f64,
}

/// Keys accepted in a study config file.
pub const STUDY_KEYS: [&str; 12] = [
    "regime",
    "preset",
    "dims",
    "sample_sizes",
    "replicates",
    "methods",
    "seed",
    "iterations",
    "burn_in",
    "thin",
    "sigma",
    "level",
];

impl StudySpec {
    fn default_methods(regime: Regime) -> Vec<Method> {
        match regime {
            Regime::Additive => Method::ALL.to_vec(),
            _ => vec![Method::Ols, Method::Sb, Method::Ha],
        }
    }

    /// Desk scale: 20 replicates, n ∈ {400, 1000}, 3000 iterations.
    pub fn desk(regime: Regime) -> Self {
        StudySpec {
            regime,
            dims: STUDY_DIMS.to_vec(),
            sample_sizes: vec![400, 1000],
            replicates: 20,
            methods: Self::default_methods(regime),
            seed: 1,
            iterations: 3000,
            burn_in: 500,
            thin: 5,
            sigma: 1.0,
            level: 0.95,
        }
    }

    /// Full scale: 50 replicates, n ∈ {400, 1000, 5000, 10000}, 11000 iterations.
    pub fn full(regime: Regime) -> Self {
        StudySpec {
            sample_sizes: vec![400, 1000, 5000, 10000],
            replicates: 50,
            iterations: 11_000,
            burn_in: 1000,
            thin: 10,
            ..Self::desk(regime)
        }
    }

    /// Reads a spec from a config: `regime` is required, `preset` (desk | full)
    /// picks the defaults, and every other key overrides one field.
    pub fn from_config(config: &KvConfig) -> Result<Self> {
        config.check_keys(&STUDY_KEYS)?;
        let regime: Regime = config
            .get("regime")
            .ok_or_else(|| Error::Config("missing key `regime`".into()))?
            .parse()?;
        let mut spec = match config.get("preset").unwrap_or("desk") {
            "desk" => StudySpec::desk(regime),
            "full" => StudySpec::full(regime),
            other => return Err(Error::Config(format!("unknown preset `{other}` (expected desk or full)"))),
        };
        if let Some(v) = config.list("dims")? {
            spec.dims = v;
        }
        if let Some(v) = config.list("sample_sizes")? {
            spec.sample_sizes = v;
        }
        if let Some(v) = config.list::<String>("methods")? {
            spec.methods = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        macro_rules! scalar {
            ($($field:ident),*) => {$(
                if let Some(v) = config.parsed(stringify!($field))? {
                    spec.$field = v;
                }
            )*};
        }
        scalar!(replicates, seed, iterations, burn_in, thin, sigma, level);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::Config("methods and sample_sizes must be non-empty".into()));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&m| m < 2) {
            return Err(Error::Config(format!("dims {:?} need at least two levels each", self.dims)));
        }
        if matches!(self.regime, Regime::OrderConsistent | Regime::OrderInconsistent | Regime::Additive)
            && self.dims.len() != 3
        {
            return Err(Error::Config(format!("regime {} needs three factors", self.regime)));
        }
        let cells: usize = self.dims.iter().product();
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < cells) {
            return Err(Error::Config(format!("sample size {n} is below the {cells} cells")));
        }
        if !(self.sigma >= 0.0) || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("sigma must be ≥ 0 and level in (0, 1)".into()));
        }
        self.chain_config().validate()
    }

    fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            chains: 1,
            record: RecordSet {
                error: false,
                sigma: false,
                gamma: false,
            },
            ..ChainConfig::default()
        }
    }

    /// Metric names recorded per method, in report order.
    pub fn metrics(&self) -> Vec<String> {
        let layout = Layout::new(&self.dims, 1).expect("validated dims");
        let mut out = vec!["ase".to_string(), "ase_mu".to_string()];
        out.extend(layout.all_keys().iter().map(|k| format!("ase_{k}")));
        out.push("coverage".into());
        out.push("width".into());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub regime: Regime,
    pub n: usize,
    pub replicate: usize,
    pub method: Method,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Runtime {
    pub n: usize,
    pub replicate: usize,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub spec: StudySpec,
    pub rows: Vec<StudyRow>,
    /// Wall-clock time per fit; kept out of the CSV so reports stay reproducible.
    pub runtimes: Vec<Runtime>,
}

struct Fit {
    estimate: Tensor,
    coverage: f64,
    width: f64,
}

/// The truth shared by every replicate of a study, if the regime has one.
fn fixed_truth(spec: &StudySpec) -> Result<Option<Tensor>> {
    Ok(match spec.regime {
        Regime::OrderConsistent => Some(gen_order_consistent(&spec.dims, REFERENCE_SEED)?),
        Regime::OrderInconsistent => {
            let m = gen_order_consistent(&spec.dims, REFERENCE_SEED)?;
            Some(gen_order_inconsistent(&spec.dims, &m, spec.seed)?)
        }
        Regime::Additive => Some(gen_additive(&spec.dims, spec.seed)?),
        Regime::SbGenerated => None,
    })
}

fn fit_method(
    spec: &StudySpec,
    method: Method,
    stats: &crate::stats::CellStats,
    hyper: &crate::gibbs::HaHyper,
    truth: &Tensor,
    stream: u64,
) -> Result<Fit> {
    let layout = stats.layout();
    let config = spec.chain_config();
    let bayes = |model: ModelSpec| -> Result<Fit> {
        let chain = run_chain(stats, hyper, &model, &config, stream)?;
        let intervals = interval_report(&chain, spec.level, Some(truth))?;
        Ok(Fit {
            estimate: chain.posterior_mean(),
            coverage: intervals.coverage().expect("truth supplied"),
            width: intervals.mean_width(),
        })
    };
    let point = |estimate: Tensor| Fit {
        estimate,
        coverage: f64::NAN,
        width: f64::NAN,
    };
    match method {
        Method::Ols => Ok(point(ols_cell_means(stats).complete()?)),
        Method::Aols => Ok(point(additive_ols(stats)?)),
        Method::Ha => bayes(ModelSpec::full(layout, PriorKind::Ha)),
        Method::Sb => bayes(ModelSpec::full(layout, PriorKind::Sb)),
        Method::Asb => bayes(ModelSpec::additive(layout, PriorKind::Sb)),
    }
}

/// Metric values for one fit, in [`StudySpec::metrics`] order.
fn fit_metrics(layout: &Layout, fit: &Fit, truth: &Tensor) -> Result<Vec<f64>> {
    let mut diff = fit.estimate.clone();
    diff.data_mut().iter_mut().zip(truth.data()).for_each(|(a, b)| *a -= b);
    let dec = anova_decompose(layout, &diff)?;
    let mut out = vec![ase(&fit.estimate, truth)?, dec.mu.iter().map(|m| m * m).sum()];
    for key in layout.all_keys() {
        out.push(effect_magnitude(layout, &dec, &key)?.total);
    }
    out.push(fit.coverage);
    out.push(fit.width);
    Ok(out)
}

/// One replicate at one sample size: per-method metric vectors and runtimes.
fn run_replicate(spec: &StudySpec, fixed: Option<&Tensor>, n: usize, rep: usize) -> Vec<(Method, Vec<f64>, f64)> {
    let n_metrics = spec.metrics().len();
    let failed = |reason: &Error| {
        log::warn!("{} n={n} replicate {rep}: data generation failed: {reason}", spec.regime);
        spec.methods.iter().map(|&m| (m, vec![f64::NAN; n_metrics], 0.0)).collect()
    };
    let layout = Layout::new(&spec.dims, 1).expect("validated dims");
    let base = [spec.regime.code(), n as u64, rep as u64];
    let data = (|| -> Result<_> {
        let truth = match fixed {
            Some(t) => t.clone(),
            None => gen_sb_prior(&spec.dims, 4.0, 2.0, stream_id(&[spec.seed, n as u64, rep as u64]))?,
        };
        let mut rng = RngStream::new(spec.seed, stream_id(&[base[0], base[1], base[2], 0]));
        let counts = allocate_unbalanced(n, &spec.dims, &mut rng)?;
        let stats = simulate_dataset(&layout, &truth, &counts, spec.sigma, &mut rng)?;
        let hyper = default_hyperparameters(&stats)?;
        Ok((truth, stats, hyper))
    })();
    let (truth, stats, hyper) = match data {
        Ok(d) => d,
        Err(e) => return failed(&e),
    };
    spec.methods
        .iter()
        .map(|&method| {
            let stream = stream_id(&[base[0], base[1], base[2], method.code()]);
            let start = Instant::now();
            let values = fit_method(spec, method, &stats, &hyper, &truth, stream)
                .and_then(|fit| fit_metrics(&layout, &fit, &truth))
                .unwrap_or_else(|e| {
                    log::warn!("{} n={n} replicate {rep} method {method}: {e}", spec.regime);
                    vec![f64::NAN; n_metrics]
                });
            (method, values, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Runs every (sample size, replicate) task in parallel and merges the
/// results in a fixed order. Failures become NaN rows.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.validate()?;
    let fixed = fixed_truth(spec)?;
    let tasks: Vec<(usize, usize)> = spec
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..spec.replicates).map(move |r| (n, r)))
        .collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(n, rep)| run_replicate(spec, fixed.as_ref(), n, rep))
        .collect();
    let metrics = spec.metrics();
    let mut rows = Vec::new();
    let mut runtimes = Vec::new();
    for (&(n, replicate), per_method) in tasks.iter().zip(results) {
        for (method, values, seconds) in per_method {
            for (metric, value) in metrics.iter().zip(values) {
                rows.push(StudyRow {
                    regime: spec.regime,
                    n,
                    replicate,
                    method,
                    metric: metric.clone(),
                    value,
                });
            }
            runtimes.push(Runtime {
                n,
                replicate,
                method,
                seconds,
            });
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        rows,
        runtimes,
    })
}

impl StudyReport {
    /// Values of `metric` for `method` at sample size `n`, by replicate.
    pub fn values(&self, n: usize, method: Method, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.method == method && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// Mean over replicates, ignoring NaN rows.
    pub fn mean(&self, n: usize, method: Method, metric: &str) -> f64 {
        let v: Vec<f64> = self.values(n, method, metric).into_iter().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Fraction of replicates in which `a` has strictly smaller ASE than `b`.
    /// Replicates where either failed count as losses for `a`.
    pub fn fraction_better(&self, n: usize, a: Method, b: Method) -> f64 {
        let va = self.values(n, a, "ase");
        let vb = self.values(n, b, "ase");
        let wins = va.iter().zip(&vb).filter(|(x, y)| x < y).count();
        wins as f64 / va.len().max(1) as f64
    }

    /// Ratio of mean ASEs `mean(a)/mean(b)` at sample size `n`.
    pub fn risk_ratio(&self, n: usize, a: Method, b: Method) -> f64 {
        self.mean(n, a, "ase") / self.mean(n, b, "ase")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["regime", "n", "replicate", "method", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([
                r.regime.to_string(),
                r.n.to_string(),
                (r.replicate + 1).to_string(),
                r.method.to_string(),
                r.metric.clone(),
                format!("{}", r.value),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    /// Plain-text summary: mean metrics per (n, method), pairwise win rates,
    /// and mean-ASE ratios against SB.
    pub fn summary(&self) -> String {
        let spec = &self.spec;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "regime {}  dims {:?}  replicates {}  seed {}",
            spec.regime, spec.dims, spec.replicates, spec.seed
        );
        for &n in &spec.sample_sizes {
            let _ = writeln!(s, "\nn = {n}");
            let _ = writeln!(s, "{:<6} {:>12} {:>10} {:>10} {:>7}", "method", "mean ASE", "coverage", "width", "failed");
            for &m in &spec.methods {
                let failed = self.values(n, m, "ase").iter().filter(|v| v.is_nan()).count();
                let _ = writeln!(
                    s,
                    "{:<6} {:>12.5} {:>10.4} {:>10.4} {:>7}",
                    m,
                    self.mean(n, m, "ase"),
                    self.mean(n, m, "coverage"),
                    self.mean(n, m, "width"),
                    failed
                );
            }
            for (a, b) in [(Method::Ha, Method::Sb), (Method::Sb, Method::Ols), (Method::Ha, Method::Ols)] {
                if spec.methods.contains(&a) && spec.methods.contains(&b) {
                    let _ = writeln!(s, "P(ASE {a} < ASE {b}) = {:.3}", self.fraction_better(n, a, b));
                }
            }
            if spec.methods.contains(&Method::Sb) {
                for &m in spec.methods.iter().filter(|&&m| m != Method::Sb) {
                    let _ = writeln!(s, "mean ASE sb/{m} = {:.4}", self.risk_ratio(n, Method::Sb, m));
                }
            }
        }
        s
    }

    /// Total and per-method mean runtimes, in seconds.
    pub fn runtime_summary(&self) -> Vec<(Method, f64, f64)> {
        self.spec
            .methods
            .iter()
            .map(|&m| {
                let t: Vec<f64> = self.runtimes.iter().filter(|r| r.method == m).map(|r| r.seconds).collect();
                let total: f64 = t.iter().sum();
                (m, total, total / t.len().max(1) as f64)
            })
            .collect()
    }
}
