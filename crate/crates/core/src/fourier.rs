//! Fourier-side machinery: estimating `p̂(s)` through `V† Zˢ V`, choosing the
//! degree cutoff, building and attenuating low-degree tables, and the
//! single-bit noise operators `T^j_δ`.
//!
//! All logarithms are base 2.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::circuit::{Circuit, CtEcsDecomposition};
use crate::ctstate::{ct_state_of, CtState};
use crate::ecs::{ecs_for, Column, ColumnOracle, EcsLimits};
use crate::error::{Error, Result};
use crate::oracle::{self, expectation_exact, output_distribution};
use crate::seed;

/// Low-degree Fourier table: masks `s` with `|s| ≤ c` and their coefficients.
///
/// Entries are ordered by weight, then lexicographically by qubit tuple. The
/// `0ⁿ` entry is always present and equals `1/2ⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTable {
    n: usize,
    c: usize,
    entries: Vec<(u64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    n: usize,
    c: usize,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    s: String,
    v: f64,
}

fn order_key(s: u64) -> (u32, std::cmp::Reverse<u64>) {
    (s.count_ones(), std::cmp::Reverse(s))
}

impl FourierTable {
    /// Table from `(mask, value)` pairs. The `0ⁿ` entry is added if missing
    /// and must equal `1/2ⁿ` (1e−12) if given.
    pub fn new(n: usize, c: usize, entries: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        if n == 0 || n > bits::MAX_QUBITS {
            return Err(Error::invalid(format!("table width must be in 1..={}", bits::MAX_QUBITS)));
        }
        let pin = 0.5f64.powi(n as i32);
        let mut map: HashMap<u64, f64> = HashMap::new();
        for (s, v) in entries {
            if s & !bits::full(n) != 0 {
                return Err(Error::invalid(format!("mask {s:#b} wider than {n} bits")));
            }
            if s.count_ones() as usize > c {
                return Err(Error::invalid(format!("mask {} exceeds degree {c}", bits::format(s, n))));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("coefficient for {} is not finite", bits::format(s, n))));
            }
            if map.insert(s, v).is_some() {
                return Err(Error::invalid(format!("duplicate mask {}", bits::format(s, n))));
            }
        }
        match map.get(&0) {
            Some(&v) if (v - pin).abs() > 1e-12 * pin => {
                return Err(Error::invalid(format!("0ⁿ entry is {v}, expected 2^-{n}")));
            }
            _ => {
                map.insert(0, pin);
            }
        }
        let mut entries: Vec<(u64, f64)> = map.into_iter().collect();
        entries.sort_by_key(|&(s, _)| order_key(s));
        Ok(FourierTable { n, c, entries })
    }

    /// Only the `0ⁿ` entry: the uniform distribution.
    pub fn uniform(n: usize) -> Result<Self> {
        FourierTable::new(n, 0, [])
    }

    /// All coefficients of a dense function up to degree `c`.
    pub fn from_dense(values: &[f64], c: usize) -> Result<Self> {
        let n = values.len().trailing_zeros() as usize;
        if !values.len().is_power_of_two() {
            return Err(Error::invalid("dense function length must be a power of two"));
        }
        let coeffs = oracle::fourier_transform(values);
        let c = c.min(n);
        let masks = bits::masks_up_to(n, c);
        let pin = 0.5f64.powi(n as i32);
        FourierTable::new(n, c, masks.into_iter().map(|s| (s, if s == 0 { pin } else { coeffs[s as usize] })))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.c
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: u64) -> f64 {
        self.entries.iter().find(|(m, _)| *m == s).map_or(0.0, |e| e.1)
    }

    /// `q(x) = Σ_s q̂(s) (−1)^{s·x}`.
    pub fn eval(&self, x: u64) -> f64 {
        self.entries.iter().map(|&(s, v)| v * bits::sign(s, x)).sum()
    }

    /// `q` on all of `{0,1}ⁿ`.
    pub fn to_dense(&self, cap: usize) -> Result<Vec<f64>> {
        oracle::check_cap(self.n, cap)?;
        let mut coeffs = vec![0.0; 1 << self.n];
        for &(s, v) in &self.entries {
            coeffs[s as usize] = v;
        }
        Ok(oracle::inverse_fourier(&coeffs))
    }

    /// Multiplies every entry by `(1 − rate)^{|s|}`.
    pub fn attenuate(&self, rate: f64) -> Result<FourierTable> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("attenuation rate {rate} outside [0, 1)")));
        }
        let entries = self.entries.iter().map(|&(s, v)| (s, v * (1.0 - rate).powi(s.count_ones() as i32))).collect();
        Ok(FourierTable { n: self.n, c: self.c, entries })
    }

    /// Multiplies every entry by `Π_j (1 − rates[j])^{s_j}`.
    pub fn attenuate_per_qubit(&self, rates: &[f64]) -> Result<FourierTable> {
        if rates.len() != self.n {
            return Err(Error::invalid(format!("expected {} rates, got {}", self.n, rates.len())));
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::invalid(format!("attenuation rate {r} outside [0, 1)")));
        }
        let n = self.n;
        let entries = self
            .entries
            .iter()
            .map(|&(s, v)| (s, v * bits::qubits_of(s, n).iter().map(|&j| 1.0 - rates[j]).product::<f64>()))
            .collect();
        Ok(FourierTable { n, c: self.c, entries })
    }
}

impl Serialize for FourierTable {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        TableRecord {
            n: self.n,
            c: self.c,
            entries: self.entries.iter().map(|&(s, v)| EntryRecord { s: bits::format(s, self.n), v }).collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FourierTable {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = TableRecord::deserialize(de)?;
        let entries = r
            .entries
            .iter()
            .map(|e| {
                let (s, len) = bits::parse(&e.s)?;
                if len != r.n {
                    return Err(Error::invalid(format!("mask {} is not {} bits", e.s, r.n)));
                }
                Ok((s, e.v))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        FourierTable::new(r.n, r.c, entries).map_err(D::Error::custom)
    }
}

/// `(T^j_δ f)(x) = (1 − δ/2) f(x) + (δ/2) f(x ⊕ e_j)` on a dense function.
pub fn noise_operator_apply(n: usize, j: usize, delta: f64, f: &[f64]) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&delta), "δ = {delta} outside [0, 1]");
    assert!(j < n && f.len() == 1 << n, "qubit or length out of range");
    let bit = bits::qubit_bit(n, j) as usize;
    let (keep, flip) = (1.0 - delta / 2.0, delta / 2.0);
    (0..f.len()).map(|x| keep * f[x] + flip * f[x ^ bit]).collect()
}

/// Depolarizing rates, each in the open interval `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRecord", into = "NoiseRecord")]
pub enum NoiseSpec {
    /// Model A: one rate on every qubit.
    UniformA(f64),
    /// Model B: rate `ε_j` on qubit `j`.
    PerQubitB(Vec<f64>),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "model")]
enum NoiseRecord {
    A { epsilon: f64 },
    B { epsilons: Vec<f64> },
}

impl TryFrom<NoiseRecord> for NoiseSpec {
    type Error = Error;
    fn try_from(r: NoiseRecord) -> Result<Self> {
        match r {
            NoiseRecord::A { epsilon } => NoiseSpec::uniform(epsilon),
            NoiseRecord::B { epsilons } => NoiseSpec::per_qubit(epsilons),
        }
    }
}

impl From<NoiseSpec> for NoiseRecord {
    fn from(s: NoiseSpec) -> Self {
        match s {
            NoiseSpec::UniformA(epsilon) => NoiseRecord::A { epsilon },
            NoiseSpec::PerQubitB(epsilons) => NoiseRecord::B { epsilons },
        }
    }
}

fn check_open_rate(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("noise rate {r} outside (0, 1)")))
    }
}

impl NoiseSpec {
    pub fn uniform(epsilon: f64) -> Result<Self> {
        check_open_rate(epsilon)?;
        Ok(NoiseSpec::UniformA(epsilon))
    }

    pub fn per_qubit(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::invalid("per-qubit noise needs at least one rate"));
        }
        epsilons.iter().try_for_each(|&e| check_open_rate(e))?;
        Ok(NoiseSpec::PerQubitB(epsilons))
    }

    pub fn rates(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            NoiseSpec::UniformA(e) => Ok(vec![*e; n]),
            NoiseSpec::PerQubitB(v) if v.len() == n => Ok(v.clone()),
            NoiseSpec::PerQubitB(v) => Err(Error::invalid(format!("{} rates for {n} qubits", v.len()))),
        }
    }

    pub fn min_rate(&self) -> f64 {
        match self {
            NoiseSpec::UniformA(e) => *e,
            NoiseSpec::PerQubitB(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Median-of-means parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub batch_size: usize,
    pub batch_count: usize,
    pub seed: u64,
    /// Accuracy the batch size was derived from, if any. Not enforced.
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(batch_size: usize, batch_count: usize, seed: u64) -> Result<Self> {
        let cfg = EstimatorConfig { batch_size, batch_count, seed, target_accuracy: None, confidence: None };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `B = ⌈4/τ²⌉`, `K` the smallest odd integer `≥ 8 ln(2/η)`.
    pub fn from_accuracy(tau: f64, eta: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("accuracy τ = {tau} must be positive")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("confidence η = {eta} outside (0, 1)")));
        }
        let b = (4.0 / (tau * tau)).ceil();
        if b > usize::MAX as f64 / 2.0 {
            return Err(Error::invalid(format!("τ = {tau} needs an unrepresentable batch size")));
        }
        let mut k = (8.0 * (2.0 / eta).ln()).ceil() as usize;
        if k % 2 == 0 {
            k += 1;
        }
        Ok(EstimatorConfig {
            batch_size: b as usize,
            batch_count: k.max(1),
            seed,
            target_accuracy: Some(tau),
            confidence: Some(eta),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.batch_count == 0 || self.batch_count % 2 == 0 {
            return Err(Error::invalid(format!("batch count {} must be odd", self.batch_count)));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        EstimatorConfig { seed, ..self }
    }
}

/// Outcome of one median-of-means run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub batch_means: Vec<f64>,
    /// Mean of `f(x)²` over all samples.
    pub second_moment: f64,
    pub max_abs_sample: f64,
    /// Samples redrawn because their amplitude underflowed to zero.
    pub rejected: u64,
    pub samples: u64,
}

struct BatchStats {
    mean: f64,
    sum_sq: f64,
    max_abs: f64,
    rejected: u64,
}

/// Samples whose columns are cross-checked for Hermiticity and unit norm.
const CHECKED_SAMPLES: usize = 4;
const CHECK_TOL: f64 = 1e-9;

fn check_column<O: ColumnOracle>(op: &O, x: u64, col: &Column, scratch: &mut Column) -> Result<()> {
    let norm: f64 = col.iter().map(|(b, _)| b.norm_sqr()).sum();
    if (norm - 1.0).abs() > CHECK_TOL {
        return Err(Error::SelfCheck(format!("column {x} has squared norm {norm}; operator is not unitary")));
    }
    for &(beta, gamma) in col {
        scratch.clear();
        op.columns_into(gamma, scratch);
        let back = scratch.iter().filter(|(_, g)| *g == x).map(|(b, _)| *b).sum::<num_complex::Complex64>();
        if (back - beta.conj()).norm() > CHECK_TOL {
            return Err(Error::SelfCheck(format!("entries ({gamma}, {x}) and ({x}, {gamma}) are not conjugate")));
        }
    }
    Ok(())
}

fn run_batch<S: CtState, O: ColumnOracle>(state: &S, op: &O, cfg: &EstimatorConfig, index: u64) -> Result<BatchStats> {
    let mut rng = seed::stream(cfg.seed, "batch", index);
    let mut col = Vec::with_capacity(op.sparsity_bound().min(64));
    let mut scratch = Vec::new();
    let (mut sum, mut sum_sq, mut max_abs, mut rejected) = (0.0, 0.0, 0.0f64, 0u64);
    for i in 0..cfg.batch_size {
        let (x, ax) = loop {
            let x = state.sample(&mut rng);
            let a = state.amplitude(x);
            if a.norm_sqr() > 0.0 {
                break (x, a);
            }
            rejected += 1;
            if rejected > 1_000_000 {
                return Err(Error::SelfCheck("sampler keeps drawing zero-amplitude strings".into()));
            }
        };
        col.clear();
        op.columns_into(x, &mut col);
        if i < CHECKED_SAMPLES {
            check_column(op, x, &col, &mut scratch)?;
        }
        let total: num_complex::Complex64 = col.iter().map(|&(b, g)| b.conj() * state.amplitude(g)).sum();
        let f = (total / ax).re;
        sum += f;
        sum_sq += f * f;
        max_abs = max_abs.max(f.abs());
    }
    Ok(BatchStats { mean: sum / cfg.batch_size as f64, sum_sq, max_abs, rejected })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median of `K` batch means of `f(x) = Re[Σ_j conj(β_j(x)) φ(γ_j(x)) / φ(x)]`
/// with `x ~ |φ(x)|²`, an unbiased estimate of `⟨φ|A|φ⟩` for Hermitian `A`.
pub fn estimate_expectation<S, O>(state: &S, op: &O, cfg: &EstimatorConfig) -> Result<EstimateReport>
where
    S: CtState + Sync,
    O: ColumnOracle + Sync,
{
    cfg.validate()?;
    if state.n() != op.n() {
        return Err(Error::invalid(format!("state has {} qubits, operator {}", state.n(), op.n())));
    }
    let batches = (0..cfg.batch_count as u64)
        .into_par_iter()
        .map(|k| run_batch(state, op, cfg, k))
        .collect::<Result<Vec<_>>>()?;
    let batch_means: Vec<f64> = batches.iter().map(|b| b.mean).collect();
    let samples = (cfg.batch_size * cfg.batch_count) as u64;
    Ok(EstimateReport {
        value: median(&batch_means),
        second_moment: batches.iter().map(|b| b.sum_sq).sum::<f64>() / samples as f64,
        max_abs_sample: batches.iter().map(|b| b.max_abs).fold(0.0, f64::max),
        rejected: batches.iter().map(|b| b.rejected).sum(),
        batch_means,
        samples,
    })
}

/// Estimate of `p̂(s)`, i.e. the estimate of `⟨φ|V†ZˢV|φ⟩` divided by `2ⁿ`.
pub fn estimate_fourier_coefficient(
    decomp: &CtEcsDecomposition,
    s: u64,
    cfg: &EstimatorConfig,
    limits: &EcsLimits,
) -> Result<(f64, EstimateReport)> {
    if s == 0 {
        return Err(Error::invalid("the 0ⁿ coefficient is fixed at 2^-n and never estimated"));
    }
    let state = ct_state_of(decomp.u_block())?;
    let op = ecs_for(decomp, s, limits)?;
    let report = estimate_expectation(&state, &op, cfg)?;
    Ok((report.value / (1u64 << decomp.n()) as f64, report))
}

/// `(lhs, rhs)` with `lhs = 2⁻ⁿ Σ_x p(x)(−1)^{s·x}` from the output
/// distribution and `rhs = 2⁻ⁿ ⟨0ⁿ|C†ZˢC|0ⁿ⟩` from forward and inverse
/// evolution.
pub fn exact_fourier_identity_check(circuit: &Circuit, s: u64, cap: usize) -> Result<(f64, f64)> {
    let n = circuit.n();
    let p = output_distribution(circuit, cap)?;
    let scale = 1.0 / (1u64 << n) as f64;
    let lhs = scale * p.probs().iter().enumerate().map(|(x, v)| v * bits::sign(s, x as u64)).sum::<f64>();
    let rhs = scale * expectation_exact(circuit, s, cap)?;
    Ok((lhs, rhs))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} outside (0, 1)")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("α = {alpha} must be at least 1")))
    }
}

/// `10√α/δ`, the quantity under every logarithm of the degree bounds.
fn ratio(alpha: f64, delta: f64) -> f64 {
    10.0 * alpha.sqrt() / delta
}

/// `c = ⌈(1/λ) log₂(10√α/δ)⌉`.
pub fn choose_degree(alpha: f64, delta: f64, lambda: f64) -> Result<usize> {
    check_alpha(alpha)?;
    check_unit("δ", delta)?;
    check_unit("λ", lambda)?;
    Ok((ratio(alpha, delta).log2() / lambda).ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub ok: bool,
    /// `ε/λ`.
    pub ratio: f64,
    /// `1 + 1/((10√α/δ) log₂(10√α/δ))`.
    pub upper_bound: f64,
    /// `upper_bound − 1`, the admissible relative overshoot of `ε` over `λ`.
    pub slack: f64,
    /// `upper_bound − ratio`; negative when the bound is violated above.
    pub margin: f64,
}

/// Whether `1 ≤ ε/λ ≤ 1 + 1/((10√α/δ) log₂(10√α/δ))`.
pub fn validate_lambda(alpha: f64, delta: f64, lambda: f64, epsilon: f64) -> Result<LambdaCheck> {
    check_alpha(alpha)?;
    check_unit("δ", delta)?;
    check_unit("λ", lambda)?;
    check_unit("ε", epsilon)?;
    let a = ratio(alpha, delta);
    let slack = 1.0 / (a * a.log2());
    let upper_bound = 1.0 + slack;
    let r = epsilon / lambda;
    Ok(LambdaCheck { ok: (1.0..=upper_bound).contains(&r), ratio: r, upper_bound, slack, margin: upper_bound - r })
}

/// Whether `0 ≤ ε_j − λ_j ≤ λ_min / ((10√α/δ) log₂(10√α/δ))`.
pub fn validate_lambda_j(alpha: f64, delta: f64, lambda_min: f64, lambda_j: f64, epsilon_j: f64) -> Result<bool> {
    check_alpha(alpha)?;
    check_unit("δ", delta)?;
    check_unit("λ_min", lambda_min)?;
    check_unit("λ_j", lambda_j)?;
    check_unit("ε_j", epsilon_j)?;
    let a = ratio(alpha, delta);
    let gap = epsilon_j - lambda_j;
    Ok(gap >= 0.0 && gap <= lambda_min / (a * a.log2()))
}

/// Constants of the worst-case analysis, reported but never executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c: usize,
    /// `f(n) = 10(nᶜ + 1)/δ`; coefficients need accuracy `1/f(n)` before the `1/2ⁿ` scaling.
    pub f_n: f64,
    /// `nᶜ + 1`, the mask-count bound used by the analysis.
    pub mask_bound: f64,
    /// Exact number of masks with `|s| ≤ c`.
    pub mask_count: f64,
    /// `⌈4 f(n)²⌉`, the batch size the default rule would need.
    pub implied_batch_size: f64,
}

pub fn theory_constants(n: usize, alpha: f64, delta: f64, lambda: f64) -> Result<TheoryConstants> {
    let c = choose_degree(alpha, delta, lambda)?;
    let nc = (n as f64).powi(c as i32);
    let f_n = 10.0 * (nc + 1.0) / delta;
    Ok(TheoryConstants {
        c,
        f_n,
        mask_bound: nc + 1.0,
        mask_count: bits::count_masks_up_to(n, c) as f64,
        implied_batch_size: (4.0 * f_n * f_n).ceil(),
    })
}

/// Where table coefficients come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CoefficientSource {
    Estimator { config: EstimatorConfig, #[serde(default)] limits: EcsLimits },
    /// Dense simulation of the output distribution and its transform.
    Exact { dense_cap: usize },
}

impl CoefficientSource {
    pub fn estimator(config: EstimatorConfig) -> Self {
        CoefficientSource::Estimator { config, limits: EcsLimits::default() }
    }

    pub fn exact() -> Self {
        CoefficientSource::Exact { dense_cap: oracle::DEFAULT_DENSE_CAP }
    }
}

/// Diagnostics of a table build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub masks: usize,
    pub samples: u64,
    pub rejected: u64,
    pub max_second_moment: f64,
    pub max_sparsity: usize,
}

/// Coefficients of the nonzero `masks`: estimated with one seed per mask and
/// scaled by `2^-scale_bits`, or read from the dense transform.
fn coefficients(
    decomp: &CtEcsDecomposition,
    masks: &[u64],
    dense_index: &[u64],
    scale_bits: usize,
    source: &CoefficientSource,
    dense: impl FnOnce(usize) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, TableStats)> {
    let mut stats = TableStats { masks: masks.len() + 1, ..TableStats::default() };
    match source {
        CoefficientSource::Exact { dense_cap } => {
            let coeffs = dense(*dense_cap)?;
            Ok((dense_index.iter().map(|&i| coeffs[i as usize]).collect(), stats))
        }
        CoefficientSource::Estimator { config, limits } => {
            config.validate()?;
            let state = ct_state_of(decomp.u_block())?;
            let scale = 0.5f64.powi(scale_bits as i32);
            let mut values = Vec::with_capacity(masks.len());
            for &s in masks {
                let op = ecs_for(decomp, s, limits)?;
                let cfg = config.with_seed(seed::stream_seed(config.seed, "coef", s));
                let r = estimate_expectation(&state, &op, &cfg)?;
                stats.samples += r.samples;
                stats.rejected += r.rejected;
                stats.max_second_moment = stats.max_second_moment.max(r.second_moment);
                stats.max_sparsity = stats.max_sparsity.max(op.sparsity_bound());
                values.push(r.value * scale);
            }
            Ok((values, stats))
        }
    }
}

/// Table of `p̂′(s)` for all `|s| ≤ c`, with `0ⁿ ↦ 1/2ⁿ`.
pub fn build_low_degree_table(
    decomp: &CtEcsDecomposition,
    c: usize,
    source: &CoefficientSource,
    mask_budget: usize,
) -> Result<(FourierTable, TableStats)> {
    let n = decomp.n();
    let c = c.min(n);
    let count = bits::count_masks_up_to(n, c);
    if count > mask_budget as u128 {
        return Err(Error::MaskBudget { count: count.min(usize::MAX as u128) as usize, budget: mask_budget });
    }
    let masks: Vec<u64> = bits::masks_up_to(n, c).into_iter().filter(|&s| s != 0).collect();
    let (values, stats) = coefficients(decomp, &masks, &masks, n, source, |cap| {
        let p = output_distribution(&decomp.defining_circuit(), cap)?;
        Ok(oracle::fourier_transform(p.probs()))
    })?;
    let table = FourierTable::new(n, c, masks.into_iter().zip(values))?;
    Ok((table, stats))
}

/// Table over the `m` measured qubits: all `2^m` coefficients of the
/// marginal, `p̂(s) = 2⁻ᵐ ⟨φ|V†(Zˢ ⊗ I)V|φ⟩`, with bit `k` of the table
/// standing for `measured[k]`.
pub fn build_marginal_table(
    decomp: &CtEcsDecomposition,
    measured: &[usize],
    source: &CoefficientSource,
) -> Result<(FourierTable, TableStats)> {
    let n = decomp.n();
    let m = measured.len();
    if m == 0 || m > n || measured.iter().any(|&q| q >= n) {
        return Err(Error::invalid(format!("measured qubits must be distinct indices below {n}")));
    }
    let mut seen = measured.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("measured qubits must be distinct"));
    }
    if m > 20 {
        return Err(Error::MaskBudget { count: 1 << m.min(62), budget: 1 << 20 });
    }
    let local: Vec<u64> = (1..1u64 << m).collect();
    let global = |t: u64| -> u64 {
        (0..m).filter(|&k| bits::get(t, m, k)).map(|k| bits::qubit_bit(n, measured[k])).fold(0, |a, b| a | b)
    };
    let full_masks: Vec<u64> = local.iter().map(|&t| global(t)).collect();
    let (values, stats) = coefficients(decomp, &full_masks, &local, m, source, |cap| {
        let p = output_distribution(&decomp.defining_circuit(), cap)?;
        let marginal = oracle::marginal_distribution(&p, measured)?;
        Ok(oracle::fourier_transform(marginal.probs()))
    })?;
    let table = FourierTable::new(m, m, local.into_iter().zip(values))?;
    Ok((table, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_iqp, random_family_instance, Family, Gate, InstanceParams};
    use crate::ctstate::ProductState;
    use crate::ecs::SignedPauli;
    use crate::oracle::{l1_distance, DistVector, DEFAULT_DENSE_CAP};

    #[test]
    fn identity_fourier_examples() {
        let id = Circuit::empty(2).unwrap();
        for s in 0..4 {
            let (l, r) = exact_fourier_identity_check(&id, s, DEFAULT_DENSE_CAP).unwrap();
            assert!((l - 0.25).abs() < 1e-15 && (r - 0.25).abs() < 1e-15);
        }
        let h = Circuit::new(1, vec![Gate::h(0)]).unwrap();
        let (l, r) = exact_fourier_identity_check(&h, 1, DEFAULT_DENSE_CAP).unwrap();
        assert!(l.abs() < 1e-15 && r.abs() < 1e-15);
        let (l, r) = exact_fourier_identity_check(&h, 0, DEFAULT_DENSE_CAP).unwrap();
        assert!((l - 0.5).abs() < 1e-15 && (r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_holds_for_random_iqp() {
        let mut rng = seed::stream(11, "test", 0);
        let d = random_family_instance(Family::Iqp, 6, &InstanceParams::default(), &mut rng).unwrap();
        let c = d.defining_circuit();
        for s in 0..64 {
            let (l, r) = exact_fourier_identity_check(&c, s, DEFAULT_DENSE_CAP).unwrap();
            assert!((l - r).abs() <= 1e-10);
        }
    }

    #[test]
    fn degree_examples() {
        assert_eq!(choose_degree(1.0, 0.5, 0.5).unwrap(), 9);
        assert_eq!(choose_degree(1.0, 0.9, 0.9).unwrap(), 4);
        assert!(choose_degree(0.5, 0.5, 0.5).is_err());
        assert!(choose_degree(1.0, 1.0, 0.5).is_err());
        assert!(choose_degree(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        assert!(validate_lambda(1.0, 0.5, 0.5, 0.5).unwrap().ok);
        let near = validate_lambda(1.0, 0.5, 0.4999, 0.5).unwrap();
        assert!(near.ok);
        assert!((near.upper_bound - 1.011_57).abs() < 1e-5);
        assert!(!validate_lambda(1.0, 0.5, 0.5 / 1.5, 0.5).unwrap().ok);
        // λ above ε violates the lower side
        assert!(!validate_lambda(1.0, 0.5, 0.6, 0.5).unwrap().ok);
    }

    #[test]
    fn estimator_config_defaults() {
        let cfg = EstimatorConfig::from_accuracy(0.01, 0.01, 0).unwrap();
        assert_eq!(cfg.batch_size, 40_000);
        // 8 ln 200 = 42.39
        assert_eq!(cfg.batch_count, 43);
        assert!(EstimatorConfig::new(10, 4, 0).is_err());
        assert!(EstimatorConfig::new(0, 3, 0).is_err());
    }

    #[test]
    fn estimator_on_basis_state_is_exact() {
        let state = ProductState::zero(3).unwrap();
        let op = SignedPauli::z_string(3, 0b100);
        let r = estimate_expectation(&state, &op, &EstimatorConfig::new(100, 3, 1).unwrap()).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.second_moment, 1.0);
    }

    #[test]
    fn estimator_on_plus_state_is_centered() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let state = ProductState::new(vec![[num_complex::Complex64::new(r, 0.0); 2]]).unwrap();
        let op = SignedPauli::z_string(1, 1);
        let mut within = 0;
        for rep in 0..100 {
            let est = estimate_expectation(&state, &op, &EstimatorConfig::new(40_000, 1, rep).unwrap()).unwrap();
            within += (est.value.abs() <= 0.02) as usize;
        }
        assert!(within >= 99, "{within}/100");
    }

    #[test]
    fn non_hermitian_operator_is_rejected() {
        let state = ProductState::zero(1).unwrap();
        // i X is anti-Hermitian
        let op = SignedPauli::new(1, 1, 1, 0).unwrap();
        let r = estimate_expectation(&state, &op, &EstimatorConfig::new(10, 1, 0).unwrap());
        assert!(matches!(r, Err(Error::SelfCheck(_))));
    }

    #[test]
    fn zero_mask_is_never_estimated() {
        let d = build_iqp(2, vec![]).unwrap();
        let cfg = EstimatorConfig::new(10, 1, 0).unwrap();
        assert!(estimate_fourier_coefficient(&d, 0, &cfg, &EcsLimits::default()).is_err());
    }

    #[test]
    fn empty_iqp_coefficients() {
        // H·H = I, so p is a point mass at 0 and every p̂(s) = 1/4
        let d = build_iqp(2, vec![]).unwrap();
        let cfg = EstimatorConfig::new(1000, 3, 5).unwrap();
        for s in 1..4 {
            let (v, _) = estimate_fourier_coefficient(&d, s, &cfg, &EcsLimits::default()).unwrap();
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_examples() {
        let u = FourierTable::uniform(3).unwrap();
        assert!((0..8).all(|x| (u.eval(x) - 0.125).abs() < 1e-15));
        let t = FourierTable::new(1, 1, [(0, 0.5), (1, 0.7)]).unwrap();
        assert!((t.eval(0) - 1.2).abs() < 1e-15);
        assert!((t.eval(1) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn table_validation() {
        assert!(FourierTable::new(2, 1, [(0, 0.3)]).is_err());
        assert!(FourierTable::new(2, 1, [(0b11, 0.1)]).is_err());
        assert!(FourierTable::new(2, 2, [(0b11, 0.1), (0b11, 0.2)]).is_err());
        let t = FourierTable::new(2, 2, [(0b01, 0.1)]).unwrap();
        assert_eq!(t.get(0), 0.25);
    }

    #[test]
    fn table_ordering_and_json() {
        let d = build_iqp(4, vec![Gate::cz(0, 1), Gate::ccz(1, 2, 3)]).unwrap();
        let (t, _) = build_low_degree_table(&d, 2, &CoefficientSource::exact(), 1000).unwrap();
        let masks: Vec<u64> = t.entries().iter().map(|e| e.0).collect();
        assert_eq!(masks[..6], [0b0000, 0b1000, 0b0100, 0b0010, 0b0001, 0b1100]);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains(r#""s":"1100""#));
        let back: FourierTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<FourierTable>(r#"{"n":2,"c":1,"entries":[{"s":"11","v":0.1}]}"#).is_err());
    }

    #[test]
    fn degree_zero_and_full_tables() {
        let mut rng = seed::stream(12, "test", 0);
        let d = random_family_instance(Family::CliffordMagic, 5, &InstanceParams::default(), &mut rng).unwrap();
        let (t0, _) = build_low_degree_table(&d, 0, &CoefficientSource::exact(), 10).unwrap();
        assert_eq!(t0.len(), 1);
        let q0 = t0.to_dense(DEFAULT_DENSE_CAP).unwrap();
        assert!(l1_distance(&q0, DistVector::uniform(5).probs()) < 1e-15);

        let (tn, _) = build_low_degree_table(&d, 5, &CoefficientSource::exact(), 100).unwrap();
        let p = output_distribution(&d.defining_circuit(), DEFAULT_DENSE_CAP).unwrap();
        assert!(l1_distance(&tn.to_dense(DEFAULT_DENSE_CAP).unwrap(), p.probs()) < 1e-9);
        let total: f64 = (0..32).map(|x| tn.eval(x)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_budget_is_enforced() {
        let d = build_iqp(10, vec![]).unwrap();
        let r = build_low_degree_table(&d, 3, &CoefficientSource::exact(), 100);
        assert!(matches!(r, Err(Error::MaskBudget { count: 176, budget: 100 })));
    }

    #[test]
    fn attenuation_examples() {
        let id = build_iqp(2, vec![]).unwrap();
        let (t, _) = build_low_degree_table(&id, 2, &CoefficientSource::exact(), 10).unwrap();
        assert_eq!(t.attenuate(0.0).unwrap(), t);
        let noisy = t.attenuate(0.5).unwrap();
        assert!((noisy.eval(0) - 9.0 / 16.0).abs() < 1e-15);
        let near_one = t.attenuate(1.0 - f64::EPSILON).unwrap();
        assert!((0..4).all(|x| (near_one.eval(x) - 0.25).abs() < 1e-12));
        assert!(t.attenuate(1.0).is_err());
        assert!(t.attenuate(-0.1).is_err());
    }

    #[test]
    fn noise_operator_examples() {
        let f = vec![0.1, -0.4, 0.7, 0.2];
        assert_eq!(noise_operator_apply(2, 0, 0.0, &f), f);
        let mixed = noise_operator_apply(2, 1, 1.0, &f);
        assert_eq!(mixed[0], mixed[1]);
        assert_eq!(mixed[2], mixed[3]);
    }

    #[test]
    fn noise_spec_json() {
        let a: NoiseSpec = serde_json::from_str(r#"{"model":"A","epsilon":0.2}"#).unwrap();
        assert_eq!(a, NoiseSpec::UniformA(0.2));
        let b: NoiseSpec = serde_json::from_str(r#"{"model":"B","epsilons":[0.2,0.3]}"#).unwrap();
        assert_eq!(b.min_rate(), 0.2);
        assert!(serde_json::from_str::<NoiseSpec>(r#"{"model":"A","epsilon":0.0}"#).is_err());
        assert!(serde_json::from_str::<NoiseSpec>(r#"{"model":"B","epsilons":[0.2,1.0]}"#).is_err());
        assert!(b.rates(3).is_err());
    }

    #[test]
    fn theory_constants_example() {
        let t = theory_constants(10, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(t.c, 9);
        assert_eq!(t.mask_bound, 1e9 + 1.0);
        assert!((t.f_n - 20.0 * (1e9 + 1.0)).abs() < 1e-3);
    }
}
