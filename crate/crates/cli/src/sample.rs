use std::path::PathBuf;

use clap::Args;
use ctecs::fourier::{build_low_degree_table, build_marginal_table, NoiseSpec};
use ctecs::oracle::{
    anti_concentration_alpha, apply_depolarizing_rates, empirical_distribution, l1_distance, marginal_distribution,
    output_distribution,
};
use ctecs::sampler::{
    enumerate_alg_distribution, enumerate_model_b, simulate_marginal, simulate_model_a, simulate_model_b,
    ModelAParams, ModelBParams,
};
use ctecs::{bits, CoefficientSource, CtEcsDecomposition, DistVector, FourierTable, ModelBPlan, PipelineConfig};
use serde_json::{json, Value};

use crate::config::{generate, parse_family, AlphaChoice, CMax, ExperimentConfig, OutputFormat, SourceKind};
use crate::fail::{usage, CliError, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Family JSON; otherwise an instance is generated from --family/--n.
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// True uniform rate (model A).
    #[arg(long, conflicts_with = "epsilons")]
    epsilon: Option<f64>,
    /// True per-qubit rates, comma-separated (model B).
    #[arg(long)]
    epsilons: Option<String>,
    /// Assumed `α`, or `measure` to take it from the dense oracle.
    #[arg(long)]
    alpha: Option<AlphaChoice>,
    #[arg(long)]
    delta: Option<f64>,
    /// Known rate for model A; defaults to the true rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Known per-qubit rates for model B; default to the true rates.
    #[arg(long)]
    lambdas: Option<String>,
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
    /// Degree cap, or `none`.
    #[arg(long)]
    c_max: Option<CMax>,
    #[arg(long)]
    mask_budget: Option<usize>,
    #[arg(long = "samples")]
    num_samples: Option<usize>,
    /// Comma-separated measured qubits; switches to marginal sampling.
    #[arg(long)]
    measured: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report path for the `lines` format.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Compare the sampled distribution against the dense oracle.
    #[arg(long)]
    verify: bool,
}

fn merge(args: &SampleArgs, mut cfg: ExperimentConfig) -> CliResult<ExperimentConfig> {
    if let Some(p) = &args.circuit {
        cfg.circuit = Some(p.clone());
    }
    if let Some(f) = &args.family {
        cfg.family = Some(parse_family(f)?);
    }
    cfg.n = args.n.or(cfg.n);
    if let Some(e) = args.epsilon {
        cfg.noise = Some(NoiseSpec::uniform(e)?);
    }
    if let Some(list) = &args.epsilons {
        cfg.noise = Some(NoiseSpec::per_qubit(io::parse_list(list, "rate")?)?);
    }
    cfg.alpha = args.alpha.or(cfg.alpha);
    cfg.delta = args.delta.or(cfg.delta);
    cfg.lambda = args.lambda.or(cfg.lambda);
    if let Some(list) = &args.lambdas {
        cfg.lambdas = Some(io::parse_list(list, "rate")?);
    }
    let mut source = cfg.source.take().unwrap_or_default();
    source.kind = args.source.or(source.kind);
    source.batch_size = args.batch_size.or(source.batch_size);
    source.batch_count = args.batch_count.or(source.batch_count);
    source.accuracy = args.accuracy.or(source.accuracy);
    source.confidence = args.confidence.or(source.confidence);
    cfg.source = Some(source);
    cfg.c_max = args.c_max.or(cfg.c_max);
    cfg.mask_budget = args.mask_budget.or(cfg.mask_budget);
    cfg.num_samples = args.num_samples.or(cfg.num_samples);
    if let Some(list) = &args.measured {
        cfg.measured = Some(io::parse_list(list, "qubit")?);
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    if let Some(r) = &args.report {
        cfg.report = Some(r.clone());
    }
    cfg.format = args.format.or(cfg.format);
    if args.verify {
        cfg.verify = Some(true);
    }
    Ok(cfg)
}

fn instance(cfg: &ExperimentConfig, master: u64) -> CliResult<CtEcsDecomposition> {
    match (&cfg.circuit, cfg.family) {
        (Some(path), _) => io::load_circuit(path)?.decomposition(),
        (None, Some(family)) => {
            let n = cfg.n.ok_or_else(|| usage("--n is required with --family"))?;
            generate(family, n, &cfg.instance.clone().unwrap_or_default(), master, 0)
        }
        (None, None) => Err(usage("--circuit or --family is required")),
    }
}

struct Oracle {
    p: Option<DistVector>,
}

impl Oracle {
    fn get(&mut self, decomp: &CtEcsDecomposition, cap: usize) -> CliResult<&DistVector> {
        if self.p.is_none() {
            self.p = Some(output_distribution(&decomp.defining_circuit(), cap)?);
        }
        Ok(self.p.as_ref().expect("just filled"))
    }
}

/// Per-mask error of the estimated table on the expectation scale, with the
/// attenuation of each entry divided out.
fn coefficient_check(estimated: &FourierTable, exact: &FourierTable, damp: impl Fn(u64) -> f64, tolerance: f64) -> Value {
    let scale = (1u64 << estimated.n()) as f64;
    let mut max_error = 0.0f64;
    let mut exceeded = 0;
    for &(s, v) in estimated.entries() {
        if s == 0 {
            continue;
        }
        let err = scale * (v - exact.get(s)).abs() / damp(s);
        max_error = max_error.max(err);
        if err > tolerance {
            exceeded += 1;
        }
    }
    json!({
        "tolerance": tolerance,
        "max_error": max_error,
        "exceeded_masks": exceeded,
        "flagged": exceeded > 0,
    })
}

fn tolerance_of(source: &CoefficientSource) -> Option<f64> {
    match source {
        CoefficientSource::Estimator { config, .. } => {
            Some(config.target_accuracy.unwrap_or(2.0 / (config.batch_size as f64).sqrt()))
        }
        CoefficientSource::Exact { .. } => None,
    }
}

pub fn run(global: &Global, args: SampleArgs) -> CliResult<()> {
    let cfg = merge(&args, ExperimentConfig::load(global)?)?;
    let master = cfg.seed(global);
    let cap = global.dense_cap;
    let decomp = instance(&cfg, master)?;
    let n = decomp.n();
    let source = cfg.source.clone().unwrap_or_default().resolve(master, cap)?;
    let pipeline = PipelineConfig {
        seed: master,
        c_max: cfg.c_max.map_or(PipelineConfig::default().c_max, CMax::get),
        mask_budget: cfg.mask_budget.unwrap_or(PipelineConfig::default().mask_budget),
    };
    let num_samples = cfg.num_samples.unwrap_or(1000);
    let verify = cfg.verify.unwrap_or(false);
    let mut oracle = Oracle { p: None };
    let mut notes: Vec<String> = Vec::new();
    let mut verification = None;
    let mut failed = false;

    let (samples, width, mode, report) = if let Some(measured) = cfg.measured.clone() {
        if cfg.noise.is_some() {
            notes.push("marginal mode samples the noiseless circuit; the noise spec is ignored".into());
        }
        let out = simulate_marginal(&decomp, &measured, &source, &pipeline, num_samples)?;
        if verify {
            let truth = marginal_distribution(oracle.get(&decomp, cap)?, &measured)?;
            let alg = enumerate_alg_distribution(&out.table, cap)?;
            let delta = cfg.delta.unwrap_or(0.05);
            let l1 = l1_distance(alg.probs(), truth.probs());
            let empirical = l1_distance(empirical_distribution(&out.samples, measured.len())?.probs(), truth.probs());
            let mut v = json!({ "l1": l1, "bound": delta, "pass": l1 <= delta, "empirical_l1": empirical });
            if let Some(tol) = tolerance_of(&source) {
                let (exact, _) = build_marginal_table(&decomp, &measured, &CoefficientSource::Exact { dense_cap: cap })?;
                v["coefficients"] = coefficient_check(&out.table, &exact, |_| 1.0, tol);
            }
            failed = l1 > delta;
            verification = Some(v);
        }
        (out.samples, measured.len(), "marginal", serde_json::to_value(&out.report).map_err(anyhow::Error::from)?)
    } else {
        let noise = cfg.noise.clone().ok_or_else(|| usage("a noise spec (--epsilon or --epsilons) is required"))?;
        let delta = cfg.delta.ok_or_else(|| usage("--delta is required"))?;
        let alpha = match cfg.alpha.unwrap_or(AlphaChoice::Keyword(crate::config::AlphaKeyword::Measure)) {
            AlphaChoice::Assume(a) => a,
            AlphaChoice::Keyword(_) => {
                let a = anti_concentration_alpha(oracle.get(&decomp, cap)?);
                notes.push(format!("α measured by the dense oracle: {a:.6}"));
                a
            }
        };
        let rates = noise.rates(n)?;
        match noise {
            NoiseSpec::UniformA(eps) => {
                let lambda = cfg.lambda.unwrap_or(eps);
                if cfg.lambda.is_none() {
                    notes.push("λ not given; using the true rate".into());
                }
                let params = ModelAParams { alpha, delta, lambda, epsilon: Some(eps) };
                let out = simulate_model_a(&decomp, &params, &source, &pipeline, num_samples)?;
                if verify {
                    let truth = apply_depolarizing_rates(oracle.get(&decomp, cap)?, &rates)?;
                    let alg = enumerate_alg_distribution(&out.table, cap)?;
                    let q = out.table.to_dense(cap)?;
                    let l1 = l1_distance(alg.probs(), truth.probs());
                    let mut v = json!({
                        "l1": l1,
                        "bound": delta,
                        "pass": l1 <= delta,
                        "l1_q": l1_distance(&q, truth.probs()),
                        "negative_mass": q.iter().map(|v| (-v).max(0.0)).sum::<f64>(),
                        "empirical_l1": l1_distance(empirical_distribution(&out.samples, n)?.probs(), truth.probs()),
                    });
                    if let Some(tol) = tolerance_of(&source) {
                        let (exact, _) = build_low_degree_table(&decomp, out.report.c_used, &CoefficientSource::Exact { dense_cap: cap }, pipeline.mask_budget)?;
                        let exact = exact.attenuate(lambda)?;
                        let damp = |s: u64| (1.0 - lambda).powi(s.count_ones() as i32);
                        v["coefficients"] = coefficient_check(&out.table, &exact, damp, tol);
                    }
                    failed = l1 > delta;
                    verification = Some(v);
                }
                (out.samples, n, "model_a", serde_json::to_value(&out.report).map_err(anyhow::Error::from)?)
            }
            NoiseSpec::PerQubitB(eps) => {
                let lambdas = cfg.lambdas.clone().unwrap_or_else(|| eps.clone());
                if lambdas.len() != n {
                    return Err(usage(format!("{} known rates for {n} qubits", lambdas.len())));
                }
                let plan = ModelBPlan::from_rates(&lambdas)?;
                if plan.is_degenerate() {
                    notes.push("all known rates are equal; model B reduces to model A at λ_min".into());
                }
                let params = ModelBParams { alpha, delta, epsilons: Some(eps.clone()) };
                let out = simulate_model_b(&decomp, &params, &plan, &source, &pipeline, num_samples)?;
                if verify {
                    let truth = apply_depolarizing_rates(oracle.get(&decomp, cap)?, &rates)?;
                    let got = enumerate_model_b(&out.table, &plan, cap)?;
                    let l1 = l1_distance(got.probs(), truth.probs());
                    let bound = plan.error_bound(delta);
                    let mut v = json!({
                        "l1": l1,
                        "bound": bound,
                        "pass": l1 <= bound,
                        "empirical_l1": l1_distance(empirical_distribution(&out.samples, n)?.probs(), truth.probs()),
                    });
                    if let Some(tol) = tolerance_of(&source) {
                        let c = out.report.model_a.c_used;
                        let (exact, _) = build_low_degree_table(&decomp, c, &CoefficientSource::Exact { dense_cap: cap }, pipeline.mask_budget)?;
                        let lm = plan.lambda_min();
                        let exact = exact.attenuate(lm)?;
                        let damp = |s: u64| (1.0 - lm).powi(s.count_ones() as i32);
                        v["coefficients"] = coefficient_check(&out.table, &exact, damp, tol);
                    }
                    failed = l1 > bound;
                    verification = Some(v);
                }
                (out.samples, n, "model_b", serde_json::to_value(&out.report).map_err(anyhow::Error::from)?)
            }
        }
    };

    if let Some(flagged) = verification.as_ref().and_then(|v| v["coefficients"]["flagged"].as_bool()) {
        if flagged {
            notes.push("measured coefficient error exceeds the estimator tolerance".into());
        }
    }
    let full = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "sample",
        "mode": mode,
        "config": cfg,
        "resolved": { "seed": master, "n": n, "family": decomp.family(), "source": source, "pipeline": pipeline, "num_samples": num_samples, "dense_cap": cap },
        "pipeline_report": report,
        "verification": verification,
        "notes": notes,
    });
    let strings: Vec<String> = samples.iter().map(|&x| bits::format(x, width)).collect();
    match cfg.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => io::emit(&json!({ "samples": strings, "report": full }), cfg.output.as_deref())?,
        OutputFormat::Lines => {
            let report_path = cfg
                .report
                .clone()
                .or_else(|| cfg.output.as_ref().map(|p| p.with_extension("report.json")))
                .ok_or_else(|| usage("the lines format needs --out or --report"))?;
            let mut text = strings.join("\n");
            text.push('\n');
            match cfg.output.as_deref() {
                Some(p) => io::write_atomic(p, text.as_bytes())?,
                None => print!("{text}"),
            }
            io::emit(&full, Some(&report_path))?;
        }
    }
    if failed {
        return Err(CliError::Verification("sampled distribution is farther from the oracle than the bound".into()));
    }
    Ok(())
}
