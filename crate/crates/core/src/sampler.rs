//! The sequential marginal sampler and the end-to-end pipelines.
//!
//! For a table `q̂` the sampler fixes one bit per step. With prefix `y` of
//! length `k`,
//!
//! ```text
//! S_y = 2^{n−k} Σ_{s supported on the first k qubits} q̂(s) (−1)^{s·y}
//! ```
//!
//! and the next bit is 0 with probability `S_{y0}/S_y`, except that a child
//! with negative mass is never entered. The output distribution `Alg(q)`
//! satisfies `‖q − Alg(q)‖₁ = 2 Σ_{q<0} |q|`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::circuit::CtEcsDecomposition;
use crate::error::{Error, Result};
use crate::fourier::{
    build_low_degree_table, build_marginal_table, choose_degree, noise_operator_apply, theory_constants,
    validate_lambda, validate_lambda_j, CoefficientSource, FourierTable, LambdaCheck, TableStats, TheoryConstants,
};
use crate::oracle::{self, DistVector};
use crate::seed;

/// `S_y` for the prefix held in the top `k` qubits of `y`.
pub fn marginal_sum(table: &FourierTable, y: u64, k: usize) -> Result<f64> {
    let n = table.n();
    if k > n {
        return Err(Error::invalid(format!("prefix length {k} exceeds {n}")));
    }
    let prefix = bits::full(n) & !bits::full(n - k);
    if y & !prefix != 0 {
        return Err(Error::invalid(format!("prefix {} has bits beyond position {k}", bits::format(y, n))));
    }
    let sum: f64 = table.entries().iter().filter(|(s, _)| s & !prefix == 0).map(|&(s, v)| v * bits::sign(s, y)).sum();
    Ok(sum * 2f64.powi((n - k) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    Zero,
    One,
    /// Enter the 0 child with this probability.
    Split(f64),
}

fn branch(s_y: f64, s0: f64) -> Branch {
    assert!(s_y >= 0.0, "visited prefix with negative mass {s_y}");
    let s1 = s_y - s0;
    assert!(!(s0 < 0.0 && s1 < 0.0), "both children negative under S_y = {s_y}");
    if s0 < 0.0 {
        Branch::One
    } else if s1 < 0.0 {
        Branch::Zero
    } else if s_y == 0.0 {
        Branch::Split(0.5)
    } else {
        Branch::Split((s0 / s_y).clamp(0.0, 1.0))
    }
}

/// `Alg(q)` for one table, with masks grouped by their last qubit so each
/// step touches only the masks that become visible at that step.
#[derive(Debug, Clone)]
pub struct AlgSampler {
    n: usize,
    /// `groups[k]`: masks whose highest qubit index is `k`.
    groups: Vec<Vec<(u64, f64)>>,
    /// `2^{n−k−1}`.
    scales: Vec<f64>,
}

impl AlgSampler {
    pub fn new(table: &FourierTable) -> Self {
        let n = table.n();
        let mut groups = vec![Vec::new(); n];
        for &(s, v) in table.entries() {
            if s != 0 {
                // highest qubit index is the lowest set bit
                let k = n - 1 - s.trailing_zeros() as usize;
                groups[k].push((s, v));
            }
        }
        let scales = (0..n).map(|k| 2f64.powi((n - k - 1) as i32)).collect();
        AlgSampler { n, groups, scales }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(S_{y0}, y0)` at step `k` given `S_y`.
    #[inline]
    fn child0(&self, k: usize, y: u64, s_y: f64) -> f64 {
        let g: f64 = self.groups[k].iter().map(|&(s, v)| v * bits::sign(s, y)).sum();
        s_y / 2.0 + self.scales[k] * g
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let mut y = 0u64;
        // S_ε = 2ⁿ q̂(0ⁿ) = 1
        let mut s_y = 1.0;
        for k in 0..self.n {
            let s0 = self.child0(k, y, s_y);
            let zero = match branch(s_y, s0) {
                Branch::Zero => true,
                Branch::One => false,
                Branch::Split(p) => rng.gen::<f64>() < p,
            };
            if zero {
                s_y = s0;
            } else {
                y |= bits::qubit_bit(self.n, k);
                s_y -= s0;
            }
        }
        y
    }

    /// Draws `count` samples, sample `i` from stream `("sample", i)`.
    pub fn draw(&self, master: u64, count: usize) -> Vec<u64> {
        (0..count as u64).into_par_iter().map(|i| self.sample(&mut seed::stream(master, "sample", i))).collect()
    }

    /// Exact distribution of [`AlgSampler::sample`], walking every path.
    pub fn enumerate(&self, cap: usize) -> Result<DistVector> {
        oracle::check_cap(self.n, cap)?;
        let mut p = vec![0.0; 1 << self.n];
        self.walk(0, 0, 1.0, 1.0, &mut p);
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::SelfCheck(format!("enumerated mass is {total}")));
        }
        DistVector::new(self.n, p)
    }

    fn walk(&self, k: usize, y: u64, s_y: f64, mass: f64, out: &mut [f64]) {
        if k == self.n {
            out[y as usize] += mass;
            return;
        }
        let s0 = self.child0(k, y, s_y);
        let y1 = y | bits::qubit_bit(self.n, k);
        match branch(s_y, s0) {
            Branch::Zero => self.walk(k + 1, y, s0, mass, out),
            Branch::One => self.walk(k + 1, y1, s_y - s0, mass, out),
            Branch::Split(p) => {
                if p > 0.0 {
                    self.walk(k + 1, y, s0, mass * p, out);
                }
                if p < 1.0 {
                    self.walk(k + 1, y1, s_y - s0, mass * (1.0 - p), out);
                }
            }
        }
    }
}

pub fn sample_alg<R: Rng + ?Sized>(table: &FourierTable, rng: &mut R) -> u64 {
    AlgSampler::new(table).sample(rng)
}

pub fn enumerate_alg_distribution(table: &FourierTable, cap: usize) -> Result<DistVector> {
    AlgSampler::new(table).enumerate(cap)
}

/// Settings shared by the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Cap on the degree from [`choose_degree`]; `None` uses it as is.
    pub c_max: Option<usize>,
    pub mask_budget: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { seed: 0, c_max: Some(4), mask_budget: 1 << 20 }
    }
}

/// Inputs of the model A pipeline. `epsilon`, when known, is only used for
/// the advisory rate check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelAParams {
    pub alpha: f64,
    pub delta: f64,
    pub lambda: f64,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAReport {
    pub c_theory: usize,
    pub c_used: usize,
    pub masks: usize,
    pub theory: TheoryConstants,
    pub lambda_check: Option<LambdaCheck>,
    pub table_stats: TableStats,
    pub table_seconds: f64,
    pub sample_seconds: f64,
    pub warnings: Vec<String>,
}

/// The attenuated table `q` plus the report, without drawing samples.
pub fn prepare_model_a(
    decomp: &CtEcsDecomposition,
    params: &ModelAParams,
    source: &CoefficientSource,
    cfg: &PipelineConfig,
) -> Result<(FourierTable, ModelAReport)> {
    let c_theory = choose_degree(params.alpha, params.delta, params.lambda)?;
    let c_used = cfg.c_max.map_or(c_theory, |m| c_theory.min(m));
    let theory = theory_constants(decomp.n(), params.alpha, params.delta, params.lambda)?;
    let mut warnings = Vec::new();
    let lambda_check = match params.epsilon {
        Some(e) => {
            let check = validate_lambda(params.alpha, params.delta, params.lambda, e)?;
            if !check.ok {
                warnings.push(format!(
                    "ε/λ = {:.6} is outside [1, {:.6}]; the error guarantee does not apply",
                    check.ratio, check.upper_bound
                ));
            }
            Some(check)
        }
        None => None,
    };
    if c_used < c_theory {
        warnings.push(format!("degree capped at {c_used} (theory value {c_theory}); truncation error is not guaranteed"));
    }
    let t0 = Instant::now();
    let (table, table_stats) = build_low_degree_table(decomp, c_used, source, cfg.mask_budget)?;
    let table = table.attenuate(params.lambda)?;
    let report = ModelAReport {
        c_theory,
        c_used,
        masks: table.len(),
        theory,
        lambda_check,
        table_stats,
        table_seconds: t0.elapsed().as_secs_f64(),
        sample_seconds: 0.0,
        warnings,
    };
    Ok((table, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<R> {
    pub samples: Vec<u64>,
    pub table: FourierTable,
    pub report: R,
}

pub fn simulate_model_a(
    decomp: &CtEcsDecomposition,
    params: &ModelAParams,
    source: &CoefficientSource,
    cfg: &PipelineConfig,
    num_samples: usize,
) -> Result<Outcome<ModelAReport>> {
    let (table, mut report) = prepare_model_a(decomp, params, source, cfg)?;
    let t0 = Instant::now();
    let samples = AlgSampler::new(&table).draw(cfg.seed, num_samples);
    report.sample_seconds = t0.elapsed().as_secs_f64();
    Ok(Outcome { samples, table, report })
}

/// Known per-qubit rates for model B and the bit-flip probabilities they
/// induce on top of a model A sample at `λ_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBPlan {
    lambda_min: f64,
    lambdas: Vec<f64>,
    /// `δ′_j = (λ_j − λ_min)/(1 − λ_min)`.
    delta_primes: Vec<f64>,
}

impl ModelBPlan {
    /// `known` lists `(j, λ_j)` for the qubits whose rate differs from
    /// `λ_min`; every other qubit gets `λ_min`.
    pub fn new(n: usize, lambda_min: f64, known: &[(usize, f64)]) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min < 1.0) {
            return Err(Error::invalid(format!("λ_min = {lambda_min} outside (0, 1)")));
        }
        let mut lambdas = vec![lambda_min; n];
        let mut seen = vec![false; n];
        for &(j, l) in known {
            if j >= n {
                return Err(Error::invalid(format!("qubit {j} outside the {n}-qubit register")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("qubit {j} listed twice")));
            }
            lambdas[j] = l;
        }
        let delta_primes: Vec<f64> = lambdas.iter().map(|l| (l - lambda_min) / (1.0 - lambda_min)).collect();
        if let Some((j, d)) = delta_primes.iter().enumerate().find(|(_, d)| !(0.0..=1.0).contains(*d)) {
            return Err(Error::invalid(format!("qubit {j} has δ′ = {d} outside [0, 1]; λ_j must lie in [λ_min, 1]")));
        }
        Ok(ModelBPlan { lambda_min, lambdas, delta_primes })
    }

    /// Plan with `λ_min = min_j λ_j`.
    pub fn from_rates(lambdas: &[f64]) -> Result<Self> {
        let lambda_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let known: Vec<(usize, f64)> =
            lambdas.iter().copied().enumerate().filter(|&(_, l)| l != lambda_min).collect();
        ModelBPlan::new(lambdas.len(), lambda_min, &known)
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn delta_primes(&self) -> &[f64] {
        &self.delta_primes
    }

    /// `δ′_j / 2`.
    pub fn flip_probability(&self, j: usize) -> f64 {
        self.delta_primes[j] / 2.0
    }

    /// All rates equal `λ_min`, so no bit is ever flipped.
    pub fn is_degenerate(&self) -> bool {
        self.delta_primes.iter().all(|&d| d == 0.0)
    }

    /// `(1 + 1/(1 − λ_min)) δ`.
    pub fn error_bound(&self, delta: f64) -> f64 {
        (1.0 + 1.0 / (1.0 - self.lambda_min)) * delta
    }

    fn flip<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> u64 {
        let n = self.n();
        let mut y = x;
        for j in 0..n {
            let p = self.flip_probability(j);
            if p > 0.0 && rng.gen::<f64>() < p {
                y ^= bits::qubit_bit(n, j);
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBReport {
    pub model_a: ModelAReport,
    pub lambda_min: f64,
    pub delta_primes: Vec<f64>,
    pub flip_probabilities: Vec<f64>,
    pub degenerate: bool,
    pub error_bound: f64,
    /// Per-qubit rate checks, when the true rates were given.
    pub lambda_j_ok: Option<Vec<bool>>,
}

/// Model B inputs. `epsilons`, when known, feed the advisory checks only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBParams {
    pub alpha: f64,
    pub delta: f64,
    pub epsilons: Option<Vec<f64>>,
}

/// The model A table at `λ_min` and the model B report.
pub fn prepare_model_b(
    decomp: &CtEcsDecomposition,
    params: &ModelBParams,
    plan: &ModelBPlan,
    source: &CoefficientSource,
    cfg: &PipelineConfig,
) -> Result<(FourierTable, ModelBReport)> {
    if plan.n() != decomp.n() {
        return Err(Error::invalid(format!("plan covers {} qubits, circuit has {}", plan.n(), decomp.n())));
    }
    if let Some(e) = &params.epsilons {
        if e.len() != plan.n() {
            return Err(Error::invalid(format!("{} rates for {} qubits", e.len(), plan.n())));
        }
    }
    let eps_min = params.epsilons.as_ref().map(|e| e.iter().copied().fold(f64::INFINITY, f64::min));
    let a_params = ModelAParams { alpha: params.alpha, delta: params.delta, lambda: plan.lambda_min, epsilon: eps_min };
    let (table, mut model_a) = prepare_model_a(decomp, &a_params, source, cfg)?;
    let lambda_j_ok = match &params.epsilons {
        Some(eps) => Some(
            eps.iter()
                .zip(plan.lambdas())
                .map(|(&e, &l)| validate_lambda_j(params.alpha, params.delta, plan.lambda_min, l, e))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    if let Some(bad) = lambda_j_ok.as_ref().and_then(|v| v.iter().position(|ok| !ok)) {
        model_a.warnings.push(format!("λ_{bad} is outside the admissible window below ε_{bad}"));
    }
    if plan.is_degenerate() {
        model_a.warnings.push("all rates equal λ_min; model B reduces to model A".into());
    }
    let report = ModelBReport {
        model_a,
        lambda_min: plan.lambda_min,
        delta_primes: plan.delta_primes.clone(),
        flip_probabilities: (0..plan.n()).map(|j| plan.flip_probability(j)).collect(),
        degenerate: plan.is_degenerate(),
        error_bound: plan.error_bound(params.delta),
        lambda_j_ok,
    };
    Ok((table, report))
}

/// Sample `i` is an `Alg(q)` draw from stream `("sample", i)` followed by
/// biased flips from stream `("flip", i)`.
pub fn simulate_model_b(
    decomp: &CtEcsDecomposition,
    params: &ModelBParams,
    plan: &ModelBPlan,
    source: &CoefficientSource,
    cfg: &PipelineConfig,
    num_samples: usize,
) -> Result<Outcome<ModelBReport>> {
    let (table, mut report) = prepare_model_b(decomp, params, plan, source, cfg)?;
    let t0 = Instant::now();
    let alg = AlgSampler::new(&table);
    let samples = (0..num_samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = alg.sample(&mut seed::stream(cfg.seed, "sample", i));
            plan.flip(x, &mut seed::stream(cfg.seed, "flip", i))
        })
        .collect();
    report.model_a.sample_seconds = t0.elapsed().as_secs_f64();
    Ok(Outcome { samples, table, report })
}

/// Exact distribution of [`simulate_model_b`]: the enumerated `Alg(q)` at
/// `λ_min` pushed through `T^j_{δ′_j}` for every `j`.
pub fn enumerate_model_b(table: &FourierTable, plan: &ModelBPlan, cap: usize) -> Result<DistVector> {
    let base = enumerate_alg_distribution(table, cap)?;
    let n = base.n();
    let mut f = base.into_probs();
    for j in 0..n {
        f = noise_operator_apply(n, j, plan.delta_primes[j], &f);
    }
    DistVector::new(n, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub measured: Vec<usize>,
    pub masks: usize,
    pub table_stats: TableStats,
    pub table_seconds: f64,
    pub sample_seconds: f64,
}

/// Outcomes of `measured` only; bit `k` of each sample is `measured[k]`.
pub fn simulate_marginal(
    decomp: &CtEcsDecomposition,
    measured: &[usize],
    source: &CoefficientSource,
    cfg: &PipelineConfig,
    num_samples: usize,
) -> Result<Outcome<MarginalReport>> {
    let t0 = Instant::now();
    let (table, table_stats) = build_marginal_table(decomp, measured, source)?;
    let table_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let samples = AlgSampler::new(&table).draw(cfg.seed, num_samples);
    let report = MarginalReport {
        measured: measured.to_vec(),
        masks: table.len(),
        table_stats,
        table_seconds,
        sample_seconds: t1.elapsed().as_secs_f64(),
    };
    Ok(Outcome { samples, table, report })
}
