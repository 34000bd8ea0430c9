use std::path::PathBuf;

use clap::Args;
use ctecs::fourier::NoiseSpec;
use ctecs::oracle::{anti_concentration_alpha, apply_depolarizing_exact, output_distribution};
use ctecs::FourierTable;
use serde_json::{json, Value};

use crate::config::{generate, parse_family, ExperimentConfig};
use crate::fail::{usage, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Args, Debug)]
pub struct ExactArgs {
    /// Circuit or family JSON.
    #[arg(long, conflicts_with_all = ["family", "count"])]
    circuit: Option<PathBuf>,
    /// Summarize `α` over a seeded batch of this family instead.
    #[arg(long, requires = "n")]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Uniform depolarizing rate (model A).
    #[arg(long, conflicts_with = "epsilons")]
    epsilon: Option<f64>,
    /// Comma-separated per-qubit rates (model B).
    #[arg(long)]
    epsilons: Option<String>,
    /// Highest Fourier degree listed in the report; all degrees by default.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn noise_of(args: &ExactArgs, cfg: &ExperimentConfig) -> CliResult<Option<NoiseSpec>> {
    Ok(match (args.epsilon, &args.epsilons) {
        (Some(e), _) => Some(NoiseSpec::uniform(e)?),
        (None, Some(list)) => Some(NoiseSpec::per_qubit(io::parse_list(list, "rate")?)?),
        (None, None) => cfg.noise.clone(),
    })
}

fn summary(values: &mut [f64]) -> Value {
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    json!({
        "count": values.len(),
        "min": values[0],
        "median": values[values.len() / 2],
        "mean": mean,
        "max": values[values.len() - 1],
    })
}

pub fn run(global: &Global, args: ExactArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(global)?;
    let cap = global.dense_cap;
    let noise = noise_of(&args, &cfg)?;
    if let Some(name) = &args.family {
        let family = parse_family(name)?;
        let n = args.n.ok_or_else(|| usage("--n is required with --family"))?;
        let seed = cfg.seed(global);
        let params = cfg.instance.clone().unwrap_or_default();
        let mut alphas = Vec::with_capacity(args.count);
        for i in 0..args.count as u64 {
            let d = generate(family, n, &params, seed, i)?;
            alphas.push(anti_concentration_alpha(&output_distribution(&d.defining_circuit(), cap)?));
        }
        if alphas.is_empty() {
            return Err(usage("--count must be at least 1"));
        }
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "exact",
            "config": { "family": family, "n": n, "count": args.count, "seed": seed, "instance": params, "dense_cap": cap },
            "alphas": alphas.clone(),
            "alpha_summary": summary(&mut alphas),
        });
        return io::emit(&report, args.out.as_deref());
    }
    let path = args.circuit.clone().or(cfg.circuit.clone()).ok_or_else(|| usage("--circuit or --family is required"))?;
    let circuit = io::load_circuit(&path)?.circuit();
    let n = circuit.n();
    let p = output_distribution(&circuit, cap)?;
    let noisy = match &noise {
        Some(spec) => {
            let model = if matches!(spec, NoiseSpec::UniformA(_)) { "A" } else { "B" };
            Some(json!({ "model": model, "noise": spec, "distribution": apply_depolarizing_exact(&p, spec)? }))
        }
        None => None,
    };
    let degree = args.degree.unwrap_or(n).min(n);
    let fourier = FourierTable::from_dense(p.probs(), degree)?;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "exact",
        "config": { "circuit": path, "noise": noise, "dense_cap": cap, "degree": degree },
        "n": n,
        "alpha": anti_concentration_alpha(&p),
        "distribution": p,
        "noisy": noisy,
        "fourier": fourier,
    });
    io::emit(&report, args.out.as_deref())
}
