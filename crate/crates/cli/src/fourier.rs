use std::path::PathBuf;

use clap::Args;
use ctecs::fourier::{build_low_degree_table, estimate_fourier_coefficient};
use ctecs::oracle::{fourier_transform, output_distribution};
use ctecs::{bits, seed, CoefficientSource};
use serde_json::json;

use crate::config::{ExperimentConfig, SourceChoice, SourceKind};
use crate::fail::{usage, CliError, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Args, Debug)]
pub struct FourierArgs {
    /// Family JSON.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Mask bitstring to estimate; repeatable.
    #[arg(long = "mask", conflicts_with = "degree")]
    masks: Vec<String>,
    /// Build the table of every mask up to this weight instead.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_enum)]
    source: Option<SourceKind>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batch_count: Option<usize>,
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    mask_budget: Option<usize>,
    /// Compare against the dense oracle.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(global: &Global, args: FourierArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(global)?;
    let path = args.circuit.clone().or(cfg.circuit.clone()).ok_or_else(|| usage("--circuit is required"))?;
    let decomp = io::load_circuit(&path)?.decomposition()?;
    let n = decomp.n();
    let master = cfg.seed(global);
    let mut choice = cfg.source.clone().unwrap_or_default();
    choice.kind = args.source.or(choice.kind).or(Some(SourceKind::Estimator));
    merge(&mut choice, &args);
    let source = choice.resolve(master, global.dense_cap)?;
    let dense = if args.verify {
        Some(fourier_transform(output_distribution(&decomp.defining_circuit(), global.dense_cap)?.probs()))
    } else {
        None
    };
    let scale = (1u64 << n) as f64;
    let tolerance = match &source {
        CoefficientSource::Estimator { config, .. } => {
            config.target_accuracy.unwrap_or(2.0 / (config.batch_size as f64).sqrt())
        }
        CoefficientSource::Exact { .. } => 1e-9,
    };

    if let Some(c) = args.degree {
        let budget = args.mask_budget.or(cfg.mask_budget).unwrap_or(1 << 20);
        let (table, stats) = build_low_degree_table(&decomp, c, &source, budget)?;
        let verification = dense.as_ref().map(|truth| {
            let max_error =
                table.entries().iter().map(|&(s, v)| scale * (v - truth[s as usize]).abs()).fold(0.0, f64::max);
            json!({ "max_error": max_error, "tolerance": tolerance, "pass": max_error <= tolerance })
        });
        let failed = verification.as_ref().is_some_and(|v| v["pass"] == false);
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "fourier",
            "config": { "circuit": path, "seed": master, "degree": c, "source": source, "mask_budget": budget },
            "table": table,
            "stats": stats,
            "verification": verification,
        });
        io::emit(&report, args.out.as_deref())?;
        return verdict(failed, "table coefficients exceed the tolerance");
    }

    if args.masks.is_empty() {
        return Err(usage("give --mask at least once, or --degree"));
    }
    let CoefficientSource::Estimator { config, limits } = &source else {
        return Err(usage("single-mask mode estimates coefficients; use --degree with the exact source"));
    };
    let mut rows = Vec::new();
    let mut failed = false;
    for text in &args.masks {
        let (s, width) = bits::parse(text)?;
        if width != n {
            return Err(usage(format!("mask {text} has {width} bits, circuit has {n} qubits")));
        }
        let cfg_s = config.with_seed(seed::stream_seed(config.seed, "coef", s));
        let (value, est) = estimate_fourier_coefficient(&decomp, s, &cfg_s, limits)?;
        let mut row = json!({
            "s": text,
            "value": value,
            "expectation": est.value,
            "second_moment": est.second_moment,
            "samples": est.samples,
            "rejected": est.rejected,
        });
        if let Some(truth) = &dense {
            let err = scale * (value - truth[s as usize]).abs();
            failed |= err > tolerance;
            row["exact"] = json!(truth[s as usize]);
            row["error"] = json!(err);
            row["within_tolerance"] = json!(err <= tolerance);
        }
        rows.push(row);
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fourier",
        "config": { "circuit": path, "seed": master, "source": source, "tolerance": tolerance },
        "coefficients": rows,
    });
    io::emit(&report, args.out.as_deref())?;
    verdict(failed, "coefficient estimates exceed the tolerance")
}

fn merge(choice: &mut SourceChoice, args: &FourierArgs) {
    choice.batch_size = args.batch_size.or(choice.batch_size);
    choice.batch_count = args.batch_count.or(choice.batch_count);
    choice.accuracy = args.accuracy.or(choice.accuracy);
    choice.confidence = args.confidence.or(choice.confidence);
}

fn verdict(failed: bool, what: &str) -> CliResult<()> {
    if failed {
        Err(CliError::Verification(what.into()))
    } else {
        Ok(())
    }
}
