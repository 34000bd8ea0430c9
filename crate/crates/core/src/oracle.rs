//! Dense small-n ground truth.
//!
//! Everything here is exponential in `n` and exists to check the polynomial
//! pipelines: state-vector simulation, exact output and noisy distributions,
//! the Walsh–Hadamard transform with `1/2ⁿ` normalization, the noise-model
//! identities, anti-concentration and distance metrics.
//!
//! Vectors are indexed by the big-endian value of the bitstring (qubit 0 is
//! the most significant bit).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::circuit::{Circuit, CtEcsDecomposition, Family, Gate, GateKind};
use crate::ecs::ColumnOracle;
use crate::error::{Error, Result};
use crate::fourier::{noise_operator_apply, NoiseSpec};

/// Default for every dense API: `2^20` complex amplitudes, 16 MiB.
pub const DEFAULT_DENSE_CAP: usize = 20;

/// Dense unitaries are `4^n` entries; kept much smaller than state vectors.
pub const MATRIX_CAP: usize = 10;

const NORM_TOL: f64 = 1e-9;

pub fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::DenseCap { n, cap })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn basis(n: usize, x: u64, cap: usize) -> Result<Self> {
        check_cap(n, cap)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[x as usize] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    pub fn zero(n: usize, cap: usize) -> Result<Self> {
        StateVector::basis(n, 0, cap)
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n {
            return Err(Error::invalid(format!("expected {} amplitudes, got {}", 1usize << n, amps.len())));
        }
        Ok(StateVector { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, x: u64) -> Complex64 {
        self.amps[x as usize]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply_gate(&mut self, gate: &Gate) {
        let n = self.n;
        let q = gate.qubits();
        match gate.kind() {
            GateKind::Cz | GateKind::Ccz => {
                let m = bits::mask_of(n, q);
                for (x, a) in self.amps.iter_mut().enumerate() {
                    if x as u64 & m == m {
                        *a = -*a;
                    }
                }
            }
            kind => {
                let u = kind.matrix_1q().expect("single-qubit kind");
                let bit = bits::qubit_bit(n, q[0]) as usize;
                for x in 0..self.amps.len() {
                    if x & bit == 0 {
                        let a0 = self.amps[x];
                        let a1 = self.amps[x | bit];
                        self.amps[x] = u[0][0] * a0 + u[0][1] * a1;
                        self.amps[x | bit] = u[1][0] * a0 + u[1][1] * a1;
                    }
                }
            }
        }
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) {
        assert_eq!(circuit.n(), self.n, "circuit width mismatch");
        for g in circuit.gates() {
            self.apply_gate(g);
        }
    }

    /// Multiplies by `Z^s`.
    pub fn apply_z_string(&mut self, s: u64) {
        for (x, a) in self.amps.iter_mut().enumerate() {
            if bits::parity(x as u64 & s) {
                *a = -*a;
            }
        }
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn distribution(&self) -> DistVector {
        DistVector { n: self.n, p: self.amps.iter().map(|a| a.norm_sqr()).collect() }
    }
}

/// `C|0ⁿ⟩`.
pub fn simulate(circuit: &Circuit, cap: usize) -> Result<StateVector> {
    let mut psi = StateVector::zero(circuit.n(), cap)?;
    psi.apply_circuit(circuit);
    Ok(psi)
}

/// Dense probability vector over `{0,1}ⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistRecord")]
pub struct DistVector {
    n: usize,
    p: Vec<f64>,
}

#[derive(Deserialize)]
struct DistRecord {
    n: usize,
    p: Vec<f64>,
}

impl TryFrom<DistRecord> for DistVector {
    type Error = Error;
    fn try_from(r: DistRecord) -> Result<Self> {
        DistVector::new(r.n, r.p)
    }
}

impl DistVector {
    /// Checks length, nonnegativity and normalization (1e−9).
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if n > bits::MAX_QUBITS || p.len() != 1usize << n {
            return Err(Error::invalid(format!("distribution over {n} bits needs 2^{n} entries")));
        }
        if let Some(v) = p.iter().find(|v| !(**v >= -NORM_TOL)) {
            return Err(Error::invalid(format!("negative probability {v}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(DistVector { n, p })
    }

    pub fn uniform(n: usize) -> Self {
        let len = 1usize << n;
        DistVector { n, p: vec![1.0 / len as f64; len] }
    }

    pub fn point(n: usize, x: u64) -> Self {
        let mut p = vec![0.0; 1 << n];
        p[x as usize] = 1.0;
        DistVector { n, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, x: u64) -> f64 {
        self.p[x as usize]
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.p
    }
}

/// Exact Born distribution `|⟨x|C|0ⁿ⟩|²`.
pub fn output_distribution(circuit: &Circuit, cap: usize) -> Result<DistVector> {
    Ok(simulate(circuit, cap)?.distribution())
}

/// Marginal over `qubits`, with output bit `k` holding `qubits[k]`.
pub fn marginal_distribution(dist: &DistVector, qubits: &[usize]) -> Result<DistVector> {
    let n = dist.n;
    let m = qubits.len();
    if qubits.iter().any(|&q| q >= n) {
        return Err(Error::invalid("marginal qubit out of range"));
    }
    let mut p = vec![0.0; 1 << m];
    for (x, &v) in dist.p.iter().enumerate() {
        let mut y = 0usize;
        for &q in qubits {
            y = (y << 1) | bits::get(x as u64, n, q) as usize;
        }
        p[y] += v;
    }
    Ok(DistVector { n: m, p })
}

/// In-place unnormalized Walsh–Hadamard butterfly.
fn walsh_hadamard(values: &mut [f64]) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        for block in (0..len).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `f̂(s) = 2⁻ⁿ Σ_x f(x) (−1)^{s·x}` for all `s`.
pub fn fourier_transform(values: &[f64]) -> Vec<f64> {
    assert!(values.len().is_power_of_two(), "length must be 2^n");
    let mut out = values.to_vec();
    walsh_hadamard(&mut out);
    let scale = 1.0 / values.len() as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// `f(x) = Σ_s f̂(s) (−1)^{s·x}`.
pub fn inverse_fourier(coeffs: &[f64]) -> Vec<f64> {
    assert!(coeffs.len().is_power_of_two(), "length must be 2^n");
    let mut out = coeffs.to_vec();
    walsh_hadamard(&mut out);
    out
}

fn check_rates(n: usize, rates: &[f64]) -> Result<()> {
    if rates.len() != n {
        return Err(Error::invalid(format!("expected {n} rates, got {}", rates.len())));
    }
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid(format!("rate {r} outside [0, 1]")));
    }
    Ok(())
}

/// Flip bit `j` independently with probability `rates[j] / 2`.
pub fn flip_convolution(values: &[f64], rates: &[f64]) -> Vec<f64> {
    let n = rates.len();
    let mut f = values.to_vec();
    for (j, &r) in rates.iter().enumerate() {
        f = noise_operator_apply(n, j, r, &f);
    }
    f
}

/// Multiply `f̂(s)` by `Π_j (1 − rates[j])^{s_j}`.
pub fn fourier_attenuation(values: &[f64], rates: &[f64]) -> Vec<f64> {
    let n = rates.len();
    let mut coeffs = fourier_transform(values);
    for (s, c) in coeffs.iter_mut().enumerate() {
        let damp: f64 = (0..n).filter(|&j| bits::get(s as u64, n, j)).map(|j| 1.0 - rates[j]).product();
        *c *= damp;
    }
    inverse_fourier(&coeffs)
}

/// Depolarizing noise on every output qubit, rates in `[0, 1]`. Computed by
/// bit-flip convolution and by Fourier attenuation; the two must agree.
pub fn apply_depolarizing_rates(dist: &DistVector, rates: &[f64]) -> Result<DistVector> {
    check_rates(dist.n, rates)?;
    let flipped = flip_convolution(&dist.p, rates);
    let damped = fourier_attenuation(&dist.p, rates);
    let gap = l1_distance(&flipped, &damped);
    if gap > 1e-9 {
        return Err(Error::SelfCheck(format!("flip convolution and Fourier attenuation differ by {gap:e}")));
    }
    Ok(DistVector { n: dist.n, p: flipped })
}

pub fn apply_depolarizing_exact(dist: &DistVector, spec: &NoiseSpec) -> Result<DistVector> {
    apply_depolarizing_rates(dist, &spec.rates(dist.n)?)
}

/// Returns `(direct model B, model A at ε_min followed by T^j_{δ_j})` with
/// `δ_j = (ε_j − ε_min)/(1 − ε_min)`.
pub fn model_b_factorization_check(dist: &DistVector, eps: &[f64]) -> Result<(DistVector, DistVector)> {
    check_rates(dist.n, eps)?;
    let lhs = apply_depolarizing_rates(dist, eps)?;
    let eps_min = eps.iter().copied().fold(f64::INFINITY, f64::min);
    if eps_min >= 1.0 {
        return Err(Error::invalid("ε_min = 1 leaves δ_j undefined"));
    }
    let model_a = apply_depolarizing_rates(dist, &vec![eps_min; dist.n])?;
    let mut rhs = model_a.p;
    for (j, &e) in eps.iter().enumerate() {
        rhs = noise_operator_apply(dist.n, j, (e - eps_min) / (1.0 - eps_min), &rhs);
    }
    Ok((lhs, DistVector { n: dist.n, p: rhs }))
}

/// Output distribution of an IQP circuit when each input qubit passes through
/// a depolarizing channel first: the mixture over `X^y|0ⁿ⟩` with weights
/// `Π_j (1 − ε_j/2)^{1−y_j} (ε_j/2)^{y_j}`, each branch simulated directly.
pub fn noisy_input_distribution_iqp(decomp: &CtEcsDecomposition, eps: &[f64], cap: usize) -> Result<DistVector> {
    if decomp.family() != Family::Iqp {
        return Err(Error::invalid(format!(
            "input-noise equivalence holds for IQP circuits, got {}",
            decomp.family()
        )));
    }
    let n = decomp.n();
    check_rates(n, eps)?;
    check_cap(n, cap)?;
    let circuit = decomp.defining_circuit();
    let mut p = vec![0.0; 1 << n];
    for y in 0..1u64 << n {
        let w: f64 = (0..n)
            .map(|j| if bits::get(y, n, j) { eps[j] / 2.0 } else { 1.0 - eps[j] / 2.0 })
            .product();
        if w == 0.0 {
            continue;
        }
        let mut psi = StateVector::basis(n, y, cap)?;
        psi.apply_circuit(&circuit);
        for (acc, a) in p.iter_mut().zip(psi.amps.iter()) {
            *acc += w * a.norm_sqr();
        }
    }
    Ok(DistVector { n, p })
}

/// `α = 2ⁿ Σ_x p(x)²`.
pub fn anti_concentration_alpha(dist: &DistVector) -> f64 {
    (1u64 << dist.n) as f64 * dist.p.iter().map(|v| v * v).sum::<f64>()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn empirical_distribution(samples: &[u64], n: usize) -> Result<DistVector> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let mut p = vec![0.0; 1 << n];
    for &x in samples {
        if x >> n != 0 {
            return Err(Error::invalid(format!("sample {x} wider than {n} bits")));
        }
        p[x as usize] += 1.0;
    }
    let scale = 1.0 / samples.len() as f64;
    p.iter_mut().for_each(|v| *v *= scale);
    Ok(DistVector { n, p })
}

/// `⟨0ⁿ|C† Zˢ C|0ⁿ⟩`, evaluated as the overlap of `C|0ⁿ⟩` with
/// `Zˢ C|0ⁿ⟩` walked back through `C†`.
pub fn expectation_exact(circuit: &Circuit, s: u64, cap: usize) -> Result<f64> {
    let mut psi = simulate(circuit, cap)?;
    psi.apply_z_string(s);
    psi.apply_circuit(&circuit.inverse());
    Ok(psi.amplitude(0).re)
}

/// Dense unitary of a circuit, column `x` = `C|x⟩`.
pub fn dense_unitary(circuit: &Circuit) -> Result<DMatrix<Complex64>> {
    let n = circuit.n();
    check_cap(n, MATRIX_CAP)?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        let mut psi = StateVector::basis(n, x as u64, MATRIX_CAP)?;
        psi.apply_circuit(circuit);
        for (r, a) in psi.amps.iter().enumerate() {
            m[(r, x)] = *a;
        }
    }
    Ok(m)
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

/// `i^k X^x Z^z` built as a Kronecker product of 2×2 factors, qubit 0 leftmost.
pub fn pauli_string_matrix(n: usize, phase: u8, xmask: u64, zmask: u64) -> DMatrix<Complex64> {
    let c = Complex64::new;
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for j in 0..n {
        let x = bits::get(xmask, n, j);
        let z = bits::get(zmask, n, j);
        // X^x Z^z on one qubit
        let f = match (x, z) {
            (false, false) => DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
            (true, false) => DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
            (false, true) => DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
            (true, true) => DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        };
        m = kron(&m, &f);
    }
    let ph = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)][(phase % 4) as usize];
    m * ph
}

/// Diagonal `Zˢ`.
pub fn z_string_matrix(n: usize, s: u64) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    DMatrix::from_fn(dim, dim, |r, c| {
        if r != c {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(bits::sign(s, r as u64), 0.0)
        }
    })
}

/// Dense matrix assembled from a column oracle.
pub fn matrix_from_columns<O: ColumnOracle + ?Sized>(op: &O) -> Result<DMatrix<Complex64>> {
    let n = op.n();
    check_cap(n, MATRIX_CAP)?;
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        for (beta, gamma) in op.columns(x as u64) {
            m[(gamma as usize, x)] += beta;
        }
    }
    Ok(m)
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Entrywise distance after removing the best global phase.
pub fn max_abs_diff_up_to_phase(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let (idx, _) = b.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, v)| {
        if v.norm() > bv {
            (i, v.norm())
        } else {
            (bi, bv)
        }
    });
    let (ai, bi) = (a.as_slice()[idx], b.as_slice()[idx]);
    if ai.norm() < 1e-12 {
        return f64::INFINITY;
    }
    let phase = bi / ai;
    let phase = phase / phase.norm();
    max_abs_diff(&(a * phase), b)
}
