//! `ha-array simulate`.

use anyhow::Result;

use ha_array::config::KvConfig;
use ha_array::sim::{run_study, StudySpec};

use crate::manifest::{create_out_dir, read_input, RunManifest, EFFECTIVE_CONFIG};
use crate::{usage, SimulateArgs};

pub fn run(args: &SimulateArgs) -> Result<()> {
    let bytes = read_input(&args.config)?;
    let mut config = KvConfig::parse(std::str::from_utf8(&bytes).map_err(|_| usage("config is not UTF-8"))?)?;
    if let Some(seed) = args.seed {
        config.set("seed", seed.to_string());
    }
    let spec = StudySpec::from_config(&config)?;
    spec.validate()?;
    config.set("seed", spec.seed.to_string());

    let dir = &args.out_dir;
    create_out_dir(dir)?;
    let canonical = config.canonical();
    let mut manifest = RunManifest::new("simulate", &canonical, spec.seed);
    manifest.input(&args.config, &bytes);
    std::fs::write(dir.join(EFFECTIVE_CONFIG), &canonical)?;
    manifest.output(EFFECTIVE_CONFIG);

    let report = run_study(&spec)?;
    report.write_csv(&dir.join("report.csv"))?;
    manifest.output("report.csv");
    let summary = report.summary();
    std::fs::write(dir.join("summary.txt"), &summary)?;
    manifest.output("summary.txt");
    for (method, total, mean) in report.runtime_summary() {
        manifest.timing(format!("{method}.total"), total);
        manifest.timing(format!("{method}.mean"), mean);
    }
    manifest.finish(dir)?;
    print!("{summary}");
    Ok(())
}
