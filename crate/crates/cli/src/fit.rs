//! `ha-array fit`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::DMatrix;

use ha_array::baselines::additive_ols;
use ha_array::config::{parse_bool, KvConfig};
use ha_array::diagnostics::{
    interval_report_from_draws, posterior_correlation_matrices, summarize_series, write_matrix_csv, write_series_csv,
};
use ha_array::gibbs::{
    default_hyperparameters, manova_preprocess, read_chain_columns, run_chains, Chain, ChainConfig, ModelSpec,
    PreprocessConfig, PriorKind, Transform,
};
use ha_array::sim::Method;
use ha_array::stats::{read_long_csv, CsvSchema};
use ha_array::{ols_cell_means, CellStats, Layout, SymMatrix, Tensor};

use crate::manifest::{create_out_dir, read_input, RunManifest, EFFECTIVE_CONFIG};
use crate::{usage, FitArgs, MethodArg, TransformArg};

const FIT_KEYS: [&str; 15] = [
    "data",
    "factors",
    "responses",
    "levels.",
    "extend_levels",
    "method",
    "iterations",
    "burn_in",
    "thin",
    "chains",
    "seed",
    "transform",
    "standardize",
    "level",
    "lag",
];

/// Settings after merging config file, flags and defaults.
struct FitSettings {
    data: PathBuf,
    schema: CsvSchema,
    method: Method,
    chain: ChainConfig,
    transform: Transform,
    standardize: bool,
    level: f64,
    lag: usize,
}

fn transform_name(t: Transform) -> &'static str {
    match t {
        Transform::None => "none",
        Transform::QuarterPower => "quarter-power",
    }
}

fn required_list(config: &KvConfig, key: &str) -> Result<Vec<String>> {
    config
        .list::<String>(key)?
        .filter(|v| !v.is_empty())
        .ok_or_else(|| usage(format!("config must set `{key}`")))
}

fn settings(args: &FitArgs, config: &mut KvConfig) -> Result<FitSettings> {
    config.check_keys(&FIT_KEYS)?;
    // Flags override the file; the merged result is what gets hashed and saved.
    if let Some(d) = &args.data {
        config.set("data", d.display().to_string());
    }
    if let Some(m) = args.method {
        let name = match m {
            MethodArg::Ha => "ha",
            MethodArg::Sb => "sb",
            MethodArg::Aols => "aols",
            MethodArg::Asb => "asb",
            MethodArg::Ols => "ols",
        };
        config.set("method", name);
    }
    for (key, value) in [
        ("iterations", args.iterations.map(|v| v.to_string())),
        ("burn_in", args.burn_in.map(|v| v.to_string())),
        ("thin", args.thin.map(|v| v.to_string())),
        ("chains", args.chains.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ] {
        if let Some(v) = value {
            config.set(key, v);
        }
    }
    if let Some(t) = args.transform {
        config.set(
            "transform",
            match t {
                TransformArg::None => "none",
                TransformArg::QuarterPower => "quarter-power",
            },
        );
    }
    if args.standardize {
        config.set("standardize", "true");
    }

    let data = PathBuf::from(config.get("data").ok_or_else(|| usage("no data file: pass --data or set `data`"))?);
    let factors = required_list(config, "factors")?;
    let responses = required_list(config, "responses")?;
    let levels = factors
        .iter()
        .map(|f| config.list::<String>(&format!("levels.{f}")))
        .collect::<ha_array::Result<Vec<_>>>()?;
    let extend_levels = config.get("extend_levels").map(|v| parse_bool("extend_levels", v)).transpose()?.unwrap_or(false);
    let defaults = ChainConfig::default();
    let chain = ChainConfig {
        iterations: config.parsed("iterations")?.unwrap_or(defaults.iterations),
        burn_in: config.parsed("burn_in")?.unwrap_or(defaults.burn_in),
        thin: config.parsed("thin")?.unwrap_or(defaults.thin),
        chains: config.parsed("chains")?.unwrap_or(1),
        seed: config.parsed("seed")?.unwrap_or(0),
        ..defaults
    };
    chain.validate()?;
    let transform = match config.get("transform").unwrap_or("none") {
        "none" => Transform::None,
        "quarter-power" => Transform::QuarterPower,
        other => return Err(usage(format!("unknown transform `{other}` (expected none or quarter-power)"))),
    };
    let standardize = config.get("standardize").map(|v| parse_bool("standardize", v)).transpose()?.unwrap_or(false);
    let level: f64 = config.parsed("level")?.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(usage(format!("interval level {level} outside (0, 1)")));
    }
    let settings = FitSettings {
        data,
        schema: CsvSchema {
            factors,
            responses,
            levels,
            extend_levels,
        },
        method: config.parsed("method")?.unwrap_or(Method::Ha),
        chain,
        transform,
        standardize,
        level,
        lag: config.parsed("lag")?.unwrap_or(1),
    };

    // Materialize every default so the saved config pins the run completely.
    config.set("method", settings.method.to_string());
    config.set("iterations", settings.chain.iterations.to_string());
    config.set("burn_in", settings.chain.burn_in.to_string());
    config.set("thin", settings.chain.thin.to_string());
    config.set("chains", settings.chain.chains.to_string());
    config.set("seed", settings.chain.seed.to_string());
    config.set("transform", transform_name(transform));
    config.set("standardize", standardize.to_string());
    config.set("extend_levels", extend_levels.to_string());
    config.set("level", format!("{level}"));
    config.set("lag", settings.lag.to_string());
    Ok(settings)
}

fn write_estimates(layout: &Layout, m: &Tensor, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cell".to_string()];
    header.extend(layout.factor_names().iter().cloned());
    header.extend(["response".to_string(), "estimate".to_string()]);
    w.write_record(&header)?;
    let cells = layout.cells();
    for (i, v) in m.data().iter().enumerate() {
        let (r, c) = (i / cells, i % cells);
        let mut row = vec![(i + 1).to_string()];
        row.extend(layout.cell_label(c).iter().map(|s| s.to_string()));
        row.push((r + 1).to_string());
        row.push(format!("{v}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Posterior mean of each factor's correlation matrix, averaged over chains.
fn write_correlations(chains: &[Chain], dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    if chains[0].sigma_factors.is_empty() {
        return Ok(());
    }
    let per_chain = chains.iter().map(posterior_correlation_matrices).collect::<ha_array::Result<Vec<_>>>()?;
    let layout = &chains[0].layout;
    for (j, &(d, _)) in per_chain[0].iter().enumerate() {
        let m = layout.levels()[d];
        let mut acc = DMatrix::zeros(m, m);
        for c in &per_chain {
            acc += c[j].1.as_matrix();
        }
        let mean = SymMatrix::symmetrize(acc / per_chain.len() as f64);
        let name = format!("correlation_{}.csv", layout.factor_names()[d]);
        write_matrix_csv(&layout.labels()[d], &mean, &dir.join(&name))?;
        manifest.output(name);
    }
    Ok(())
}

/// Diagnostics for every column of a chain file.
pub fn diagnose_file(chain: &Path, lag: usize, out: &Path) -> Result<usize> {
    let (names, columns) = read_chain_columns(chain)?;
    let summaries = names
        .iter()
        .zip(&columns)
        .map(|(n, c)| summarize_series(n, c, lag))
        .collect::<ha_array::Result<Vec<_>>>()
        .with_context(|| format!("summarizing {}", chain.display()))?;
    write_series_csv(&summaries, lag, out)?;
    Ok(summaries.iter().filter(|s| s.flagged()).count())
}

fn fit_chains(
    stats: &CellStats,
    s: &FitSettings,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let hyper = default_hyperparameters(stats)?;
    let spec = match s.method {
        Method::Ha => ModelSpec::full(stats.layout(), PriorKind::Ha),
        Method::Sb => ModelSpec::full(stats.layout(), PriorKind::Sb),
        Method::Asb => ModelSpec::additive(stats.layout(), PriorKind::Sb),
        Method::Ols | Method::Aols => unreachable!("least-squares methods have no chain"),
    };
    let start = Instant::now();
    let chains = run_chains(stats, &hyper, &spec, &s.chain)?;
    manifest.timing("chains", start.elapsed().as_secs_f64());

    for (k, chain) in chains.iter().enumerate() {
        let name = format!("chain_{}.csv", k + 1);
        chain.write_csv(&dir.join(&name))?;
        manifest.output(name.clone());
        let meta = format!("chain_{}.meta", k + 1);
        chain.write_meta(&dir.join(&meta))?;
        manifest.output(meta);
        let diag = format!("diagnostics_{}.csv", k + 1);
        diagnose_file(&dir.join(&name), s.lag, &dir.join(&diag))?;
        manifest.output(diag);
    }

    let draws: Vec<&[f64]> = chains.iter().flat_map(|c| c.draws.iter().map(|d| d.m.as_slice())).collect();
    let report = interval_report_from_draws(&draws, s.level, None)?;
    report.write_csv(stats.layout(), &dir.join("summary.csv"))?;
    manifest.output("summary.csv");
    write_correlations(&chains, dir, manifest)
}

pub fn run(args: &FitArgs) -> Result<()> {
    let config_bytes = read_input(&args.config)?;
    let mut config = KvConfig::parse(std::str::from_utf8(&config_bytes).map_err(|_| usage("config is not UTF-8"))?)?;
    let s = settings(args, &mut config)?;
    let data_bytes = read_input(&s.data)?;
    let dir = &args.out_dir;
    create_out_dir(dir)?;

    let canonical = config.canonical();
    let mut manifest = RunManifest::new("fit", &canonical, s.chain.seed);
    manifest.input(&args.config, &config_bytes);
    manifest.input(&s.data, &data_bytes);
    std::fs::write(dir.join(EFFECTIVE_CONFIG), &canonical)?;
    manifest.output(EFFECTIVE_CONFIG);

    let mut raw = read_long_csv(&s.data, &s.schema)?;
    if s.transform != Transform::None || s.standardize {
        let record = manova_preprocess(
            &mut raw.rows,
            PreprocessConfig {
                transform: s.transform,
                standardize: s.standardize,
            },
        )?;
        if s.standardize {
            let mut w = csv::Writer::from_path(dir.join("transform.csv"))?;
            w.write_record(["response", "transform", "mean", "sd"])?;
            for (j, name) in s.schema.responses.iter().enumerate() {
                w.write_record([
                    name.clone(),
                    transform_name(record.transform).to_string(),
                    format!("{}", record.means[j]),
                    format!("{}", record.sds[j]),
                ])?;
            }
            w.flush()?;
            manifest.output("transform.csv");
        }
    }
    let stats = raw.cell_stats()?;

    match s.method {
        Method::Ols | Method::Aols => {
            let start = Instant::now();
            let m = if s.method == Method::Ols {
                ols_cell_means(&stats).complete()?
            } else {
                additive_ols(&stats)?
            };
            manifest.timing("fit", start.elapsed().as_secs_f64());
            write_estimates(stats.layout(), &m, &dir.join("estimates.csv"))?;
            manifest.output("estimates.csv");
        }
        _ => fit_chains(&stats, &s, dir, &mut manifest)?,
    }
    manifest.finish(dir)?;
    println!("fit ({}) written to {}", s.method, dir.display());
    Ok(())
}
