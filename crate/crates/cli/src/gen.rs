use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use crate::config::{generate, parse_family, ExperimentConfig};
use crate::fail::{usage, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    z_prob: Option<f64>,
    #[arg(long)]
    cz_prob: Option<f64>,
    #[arg(long)]
    ccz_prob: Option<f64>,
    #[arg(long)]
    clifford_gates: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
}

pub fn run(global: &Global, args: GenArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(global)?;
    let family = match (&args.family, cfg.family) {
        (Some(name), _) => parse_family(name)?,
        (None, Some(f)) => f,
        (None, None) => return Err(usage("--family is required")),
    };
    let n = args.n.or(cfg.n).ok_or_else(|| usage("--n is required"))?;
    let count = args.count.or(cfg.count).unwrap_or(1);
    let mut params = cfg.instance.clone().unwrap_or_default();
    if let Some(p) = args.z_prob {
        params.z_prob = p;
    }
    if let Some(p) = args.cz_prob {
        params.cz_prob = p;
    }
    if let Some(p) = args.ccz_prob {
        params.ccz_prob = p;
    }
    if let Some(g) = args.clifford_gates {
        params.clifford_gates = Some(g);
    }
    if let Some(d) = args.depth {
        params.depth = d;
    }
    let seed = cfg.seed(global);
    let mut files = Vec::with_capacity(count);
    for i in 0..count {
        let decomp = generate(family, n, &params, seed, i as u64)?;
        let path = args.out_dir.join(format!("{family}-n{n}-{i:04}.json"));
        io::write_atomic(&path, io::to_json(&decomp)?.as_bytes())?;
        files.push(path);
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "gen",
        "config": { "family": family, "n": n, "count": count, "seed": seed, "instance": params },
        "files": files,
    });
    io::emit(&summary, None)
}
