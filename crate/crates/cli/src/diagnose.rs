//! `ha-array diagnose`.

use anyhow::Result;

use crate::fit::diagnose_file;
use crate::manifest::{create_out_dir, read_input, RunManifest, EFFECTIVE_CONFIG};
use crate::{usage, DiagnoseArgs};

pub fn run(args: &DiagnoseArgs) -> Result<()> {
    if args.lag == 0 {
        return Err(usage("lag must be at least 1"));
    }
    let inputs = args.chains.iter().map(|p| read_input(p).map(|b| (p, b))).collect::<Result<Vec<_>>>()?;
    let dir = &args.out_dir;
    create_out_dir(dir)?;
    let mut canonical = format!("lag={}\n", args.lag);
    for (i, p) in args.chains.iter().enumerate() {
        canonical.push_str(&format!("chain.{}={}\n", i + 1, p.display()));
    }
    let mut manifest = RunManifest::new("diagnose", &canonical, 0);
    std::fs::write(dir.join(EFFECTIVE_CONFIG), &canonical)?;
    manifest.output(EFFECTIVE_CONFIG);
    for (i, (path, bytes)) in inputs.iter().enumerate() {
        manifest.input(path, bytes);
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("chain{}", i + 1));
        let name = format!("{stem}.diagnostics.csv");
        let flagged = diagnose_file(path, args.lag, &dir.join(&name))?;
        println!("{}: {flagged} series with |z| > 2", path.display());
        manifest.output(name);
    }
    manifest.finish(dir)
}
