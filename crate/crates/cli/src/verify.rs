use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use ctecs::circuit::InstanceParams;
use ctecs::ecs::{ecs_for, EcsLimits};
use ctecs::fourier::noise_operator_apply;
use ctecs::oracle::{
    apply_depolarizing_rates, dense_unitary, expectation_exact, flip_convolution, fourier_attenuation,
    fourier_transform, l1_distance, matrix_from_columns, max_abs_diff, max_abs_diff_up_to_phase,
    model_b_factorization_check, noisy_input_distribution_iqp, output_distribution, z_string_matrix,
};
use ctecs::sampler::enumerate_alg_distribution;
use ctecs::seed::{self, StreamRng};
use ctecs::{bits, CtEcsDecomposition, DistVector, Family, FourierTable};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{generate, ExperimentConfig};
use crate::fail::{usage, CliError, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Suite {
    FourierIdentity,
    NoiseAlgebra,
    Lemma9,
    Ecs,
    SamplerFix,
    InputNoise,
    Decomposition,
}

const SUITES: [(&str, Suite); 7] = [
    ("fourier-identity", Suite::FourierIdentity),
    ("noise-algebra", Suite::NoiseAlgebra),
    ("lemma9", Suite::Lemma9),
    ("ecs", Suite::Ecs),
    ("sampler-fix", Suite::SamplerFix),
    ("input-noise", Suite::InputNoise),
    ("decomposition", Suite::Decomposition),
];

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SUITES.iter().find(|(name, _)| *name == s).map(|(_, suite)| *suite).ok_or_else(|| s.to_string())
    }
}

impl Suite {
    fn name(self) -> &'static str {
        SUITES.iter().find(|(_, s)| *s == self).map(|(n, _)| *n).expect("listed")
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Suite name, or `all`.
    suite: String,
    /// Instances per family or per check.
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    metric: f64,
    tolerance: f64,
    cases: usize,
}

fn check(name: impl Into<String>, metric: f64, tolerance: f64, cases: usize) -> Check {
    Check { name: name.into(), pass: metric <= tolerance, metric, tolerance, cases }
}

struct Ctx {
    master: u64,
    instances: usize,
    n_max: usize,
    cap: usize,
}

impl Ctx {
    fn instance(&self, family: Family, n: usize, label: &str, i: usize) -> CliResult<CtEcsDecomposition> {
        let index = seed::stream_seed(seed::stream_seed(self.master, label, i as u64), family.name(), n as u64);
        generate(family, n, &InstanceParams::default(), index, 0)
    }

    fn rng(&self, label: &str) -> StreamRng {
        seed::stream(self.master, label, 0)
    }

    fn sizes(&self, lo: usize, hi: usize) -> impl Iterator<Item = usize> + '_ {
        let hi = hi.min(self.n_max).max(lo);
        (0..self.instances).map(move |i| lo + i % (hi - lo + 1))
    }
}

fn random_dist(n: usize, rng: &mut StreamRng) -> DistVector {
    let raw: Vec<f64> = (0..1 << n).map(|_| rng.gen::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    DistVector::new(n, raw.iter().map(|v| v / total).collect()).expect("normalized")
}

fn random_rates(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.01..0.99)).collect()
}

fn fourier_identity(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for family in Family::ALL {
        let mut worst = 0.0f64;
        for (i, n) in ctx.sizes(2, 8).enumerate() {
            let d = ctx.instance(family, n, "verify-fourier", i)?;
            let circuit = d.defining_circuit();
            let coeffs = fourier_transform(output_distribution(&circuit, ctx.cap)?.probs());
            let scale = 1.0 / (1u64 << n) as f64;
            for s in 0..1u64 << n {
                worst = worst.max((coeffs[s as usize] - scale * expectation_exact(&circuit, s, ctx.cap)?).abs());
            }
        }
        out.push(check(format!("{family}: transform vs forward-inverse evolution"), worst, 1e-10, ctx.instances));
    }
    Ok(out)
}

fn noise_algebra(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut rng = ctx.rng("verify-noise");
    let (mut uniform, mut per_qubit, mut routes) = (0.0f64, 0.0f64, 0.0f64);
    for n in ctx.sizes(1, 8) {
        let p = random_dist(n, &mut rng);
        let table = FourierTable::from_dense(p.probs(), n)?;
        let eps = rng.gen_range(0.01..0.99);
        let a = table.attenuate(eps)?.to_dense(ctx.cap)?;
        uniform = uniform.max(l1_distance(&a, &flip_convolution(p.probs(), &vec![eps; n])));
        let rates = random_rates(n, &mut rng);
        let b = table.attenuate_per_qubit(&rates)?.to_dense(ctx.cap)?;
        per_qubit = per_qubit.max(l1_distance(&b, &flip_convolution(p.probs(), &rates)));
        routes = routes.max(l1_distance(&fourier_attenuation(p.probs(), &rates), &flip_convolution(p.probs(), &rates)));
    }
    let mut contraction = 0.0f64;
    let trials = 100 * ctx.instances;
    for _ in 0..trials {
        let n = rng.gen_range(1..=ctx.n_max.clamp(1, 8));
        let f: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tf = noise_operator_apply(n, rng.gen_range(0..n), rng.gen(), &f);
        let norm = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        contraction = contraction.max(norm(&tf) - norm(&f));
    }
    Ok(vec![
        check("uniform attenuation vs flip convolution", uniform, 1e-9, ctx.instances),
        check("per-qubit attenuation vs flip convolution", per_qubit, 1e-9, ctx.instances),
        check("oracle routes agree", routes, 1e-9, ctx.instances),
        check("noise operator is an l1 contraction", contraction, 1e-12, trials),
    ])
}

fn lemma9(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut rng = ctx.rng("verify-lemma9");
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (i, n) in ctx.sizes(1, 8).enumerate() {
        let family = Family::ALL[i % 4];
        for p in [random_dist(n, &mut rng), output_distribution(&ctx.instance(family, n, "verify-lemma9", i)?.defining_circuit(), ctx.cap)?] {
            let (lhs, rhs) = model_b_factorization_check(&p, &random_rates(n, &mut rng))?;
            worst = worst.max(l1_distance(lhs.probs(), rhs.probs()));
            cases += 1;
        }
    }
    Ok(vec![check("per-qubit noise = uniform noise at ε_min then T^j", worst, 1e-9, cases)])
}

fn ecs(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for family in Family::ALL {
        let (mut dense, mut square, mut cases) = (0.0f64, 0.0f64, 0);
        for (i, n) in ctx.sizes(1, 6).enumerate() {
            let d = ctx.instance(family, n, "verify-ecs", i)?;
            let v = dense_unitary(d.v_block())?;
            for s in bits::masks_up_to(n, 3).into_iter().filter(|&s| s != 0) {
                let op = ecs_for(&d, s, &EcsLimits::default())?;
                let want = v.adjoint() * z_string_matrix(n, s) * &v;
                let got = matrix_from_columns(&op)?;
                dense = dense.max(max_abs_diff(&got, &want));
                square = square.max(max_abs_diff(&(&got * &got), &z_string_matrix(n, 0)));
                cases += 1;
            }
        }
        out.push(check(format!("{family}: columns vs dense V†ZˢV"), dense, 1e-9, cases));
        out.push(check(format!("{family}: A² = I"), square, 1e-9, cases));
    }
    Ok(out)
}

fn sampler_fix(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut rng = ctx.rng("verify-sampler");
    let (mut fix, mut nonneg) = (0.0f64, 0.0f64);
    let trials = 10 * ctx.instances;
    for i in 0..trials {
        let n = rng.gen_range(1..=ctx.n_max.clamp(1, 10));
        let c = rng.gen_range(0..=n.min(4));
        let scale = 1.0 / (1u64 << n) as f64;
        let entries: Vec<(u64, f64)> = bits::masks_up_to(n, c)
            .into_iter()
            .filter(|&s| s != 0)
            .map(|s| (s, rng.gen_range(-1.0..1.0) * scale))
            .collect();
        let table = FourierTable::new(n, c, entries)?;
        let q = table.to_dense(ctx.cap)?;
        let alg = enumerate_alg_distribution(&table, ctx.cap)?;
        let neg: f64 = q.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        fix = fix.max((l1_distance(&q, alg.probs()) - 2.0 * neg).abs());
        if i % 2 == 0 {
            let p = random_dist(n, &mut rng);
            let table = FourierTable::from_dense(p.probs(), n)?;
            nonneg = nonneg.max(l1_distance(enumerate_alg_distribution(&table, ctx.cap)?.probs(), p.probs()));
        }
    }
    Ok(vec![
        check("‖q − Alg(q)‖₁ = 2 × negative mass", fix, 1e-9, trials),
        check("Alg(q) = q for nonnegative q", nonneg, 1e-12, trials.div_ceil(2)),
    ])
}

fn input_noise(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut rng = ctx.rng("verify-input");
    let (mut uniform, mut per_qubit) = (0.0f64, 0.0f64);
    for (i, n) in ctx.sizes(1, 8).enumerate() {
        let d = ctx.instance(Family::Iqp, n, "verify-input", i)?;
        let p = output_distribution(&d.defining_circuit(), ctx.cap)?;
        let eps = vec![rng.gen_range(0.01..0.99); n];
        let out = apply_depolarizing_rates(&p, &eps)?;
        uniform = uniform.max(l1_distance(out.probs(), noisy_input_distribution_iqp(&d, &eps, ctx.cap)?.probs()));
        let rates = random_rates(n, &mut rng);
        let out = apply_depolarizing_rates(&p, &rates)?;
        per_qubit = per_qubit.max(l1_distance(out.probs(), noisy_input_distribution_iqp(&d, &rates, ctx.cap)?.probs()));
    }
    Ok(vec![
        check("IQP input noise = output noise, uniform", uniform, 1e-10, ctx.instances),
        check("IQP input noise = output noise, per qubit", per_qubit, 1e-10, ctx.instances),
    ])
}

fn decomposition(ctx: &Ctx) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for family in Family::ALL {
        let (mut compose, mut native, mut json_ok) = (0.0f64, 0.0f64, 0usize);
        for (i, n) in ctx.sizes(2, 8).enumerate() {
            let d = ctx.instance(family, n, "verify-decomposition", i)?;
            let defining = dense_unitary(&d.defining_circuit())?;
            compose = compose.max(max_abs_diff(&dense_unitary(&d.composed())?, &defining));
            native = native.max(max_abs_diff_up_to_phase(&dense_unitary(&d.defining_circuit().to_native())?, &defining));
            let text = serde_json::to_string(&d).map_err(anyhow::Error::from)?;
            let back: CtEcsDecomposition = serde_json::from_str(&text).map_err(anyhow::Error::from)?;
            if back == d {
                json_ok += 1;
            }
        }
        out.push(check(format!("{family}: V·U = defining circuit"), compose, 1e-9, ctx.instances));
        out.push(check(format!("{family}: native gate set up to phase"), native, 1e-9, ctx.instances));
        out.push(check(format!("{family}: JSON round trip"), (ctx.instances - json_ok) as f64, 0.0, ctx.instances));
    }
    Ok(out)
}

fn run_suite(suite: Suite, ctx: &Ctx) -> CliResult<Vec<Check>> {
    match suite {
        Suite::FourierIdentity => fourier_identity(ctx),
        Suite::NoiseAlgebra => noise_algebra(ctx),
        Suite::Lemma9 => lemma9(ctx),
        Suite::Ecs => ecs(ctx),
        Suite::SamplerFix => sampler_fix(ctx),
        Suite::InputNoise => input_noise(ctx),
        Suite::Decomposition => decomposition(ctx),
    }
}

pub fn run(global: &Global, args: VerifyArgs) -> CliResult<()> {
    let suites: Vec<Suite> = if args.suite == "all" {
        SUITES.iter().map(|(_, s)| *s).collect()
    } else {
        vec![args.suite.parse().map_err(|s| {
            let names: Vec<&str> = SUITES.iter().map(|(n, _)| *n).collect();
            usage(format!("unknown suite {s:?}; expected all or one of {}", names.join(", ")))
        })?]
    };
    if args.instances == 0 || args.n_max == 0 {
        return Err(usage("--instances and --n-max must be positive"));
    }
    let cfg = ExperimentConfig::load(global)?;
    let ctx = Ctx { master: cfg.seed(global), instances: args.instances, n_max: args.n_max, cap: global.dense_cap };
    let mut results = Vec::new();
    let mut pass = true;
    for suite in suites {
        let checks = run_suite(suite, &ctx)?;
        let ok = checks.iter().all(|c| c.pass);
        pass &= ok;
        results.push(json!({ "suite": suite.name(), "pass": ok, "checks": checks }));
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": { "suite": args.suite, "instances": ctx.instances, "n_max": ctx.n_max, "seed": ctx.master, "dense_cap": ctx.cap },
        "pass": pass,
        "suites": results,
    });
    io::emit(&report, args.out.as_deref())?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Verification(format!("suite {} failed", args.suite)))
    }
}
