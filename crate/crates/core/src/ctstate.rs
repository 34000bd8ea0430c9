//! Computationally tractable states.
//!
//! A [`CtState`] answers exact amplitude queries and draws exact samples from
//! its Born distribution. Two implementations cover the U-blocks of the four
//! families: [`ProductState`] and [`PhaseState`] (a product state followed by
//! diagonal gates).

use num_complex::Complex64;
use rand::Rng;

use crate::bits;
use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

pub trait CtState {
    fn n(&self) -> usize;

    /// `⟨x|φ⟩`.
    fn amplitude(&self, x: u64) -> Complex64;

    /// One draw of `x` with probability `|⟨x|φ⟩|²`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64;

    fn probability(&self, x: u64) -> f64 {
        self.amplitude(x).norm_sqr()
    }

    /// Amplitude with a width check on `x`.
    fn checked_amplitude(&self, x: u64) -> Result<Complex64> {
        let n = self.n();
        if n < 64 && x >> n != 0 {
            return Err(Error::invalid(format!("basis string {x:#b} is wider than {n} qubits")));
        }
        Ok(self.amplitude(x))
    }
}

/// `⊗_j (a_j|0⟩ + b_j|1⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    factors: Vec<[Complex64; 2]>,
    /// `P(bit j = 1)` for qubits whose outcome is random.
    random: Vec<(u64, f64)>,
    /// Bits that are 1 with certainty.
    fixed: u64,
    /// Every qubit is an unbiased coin.
    unbiased: bool,
}

impl ProductState {
    pub fn new(factors: Vec<[Complex64; 2]>) -> Result<Self> {
        let n = factors.len();
        if n == 0 || n > bits::MAX_QUBITS {
            return Err(Error::invalid(format!("product state needs 1..={} qubits", bits::MAX_QUBITS)));
        }
        for (j, [a, b]) in factors.iter().enumerate() {
            let norm = a.norm_sqr() + b.norm_sqr();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::invalid(format!("qubit {j} factor has squared norm {norm}")));
            }
        }
        let mut random = Vec::new();
        let mut fixed = 0;
        for (j, [_, b]) in factors.iter().enumerate() {
            let p1 = b.norm_sqr();
            let bit = bits::qubit_bit(n, j);
            if p1 >= 1.0 {
                fixed |= bit;
            } else if p1 > 0.0 {
                random.push((bit, p1));
            }
        }
        let unbiased = random.len() == n && random.iter().all(|&(_, p)| (p - 0.5).abs() < 1e-15);
        Ok(ProductState { factors, random, fixed, unbiased })
    }

    /// `|0ⁿ⟩`.
    pub fn zero(n: usize) -> Result<Self> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        ProductState::new(vec![[one, zero]; n])
    }

    pub fn factors(&self) -> &[[Complex64; 2]] {
        &self.factors
    }

    /// Applies a single-qubit gate to factor `j`.
    fn apply(&mut self, j: usize, u: [[Complex64; 2]; 2]) {
        let [a, b] = self.factors[j];
        self.factors[j] = [u[0][0] * a + u[0][1] * b, u[1][0] * a + u[1][1] * b];
    }
}

impl CtState for ProductState {
    fn n(&self) -> usize {
        self.factors.len()
    }

    fn amplitude(&self, x: u64) -> Complex64 {
        let n = self.factors.len();
        self.factors
            .iter()
            .enumerate()
            .map(|(j, f)| f[bits::get(x, n, j) as usize])
            .product()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.unbiased {
            return rng.gen::<u64>() & bits::full(self.factors.len());
        }
        let mut x = self.fixed;
        for &(bit, p1) in &self.random {
            if rng.gen::<f64>() < p1 {
                x |= bit;
            }
        }
        x
    }
}

/// A product state followed by diagonal gates. The diagonal part is compiled
/// into sign masks and summed `RZ` angles so that evaluation is one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    base: ProductState,
    diagonal: Vec<Gate>,
    /// Net `Z` flips.
    z_mask: u64,
    /// `CZ`/`CCZ` supports; each contributes `−1` when fully set.
    controlled: Vec<u64>,
    /// Per-qubit `RZ` angle in radians, applied as `e^{∓iθ/2}`.
    rz: Vec<(u64, f64)>,
    /// `e^{−i Σθ/2}`, the phase of `|0ⁿ⟩` under the `RZ` part.
    rz_offset: f64,
}

impl PhaseState {
    pub fn new(base: ProductState, diagonal: Vec<Gate>) -> Result<Self> {
        let n = base.n();
        Circuit::new(n, diagonal.clone())?;
        let mut z_mask = 0;
        let mut controlled = Vec::new();
        let mut angles = vec![0.0f64; n];
        for g in &diagonal {
            let q = g.qubits();
            match g.kind() {
                GateKind::Z => z_mask ^= bits::qubit_bit(n, q[0]),
                GateKind::Cz | GateKind::Ccz => controlled.push(bits::mask_of(n, q)),
                GateKind::Rz(a) => angles[q[0]] += a.radians(),
                GateKind::S => angles[q[0]] += std::f64::consts::FRAC_PI_2,
                GateKind::T => angles[q[0]] += std::f64::consts::FRAC_PI_4,
                k => return Err(Error::invalid(format!("{} is not diagonal", k.name()))),
            }
        }
        let rz: Vec<(u64, f64)> = angles
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (bits::qubit_bit(n, j), a))
            .collect();
        let rz_offset = -rz.iter().map(|(_, a)| a / 2.0).sum::<f64>();
        Ok(PhaseState { base, diagonal, z_mask, controlled, rz, rz_offset })
    }

    pub fn base(&self) -> &ProductState {
        &self.base
    }

    pub fn diagonal(&self) -> &[Gate] {
        &self.diagonal
    }

    /// Unit-modulus factor applied to the base amplitude.
    pub fn phase(&self, x: u64) -> Complex64 {
        let mut negative = bits::parity(x & self.z_mask);
        for &m in &self.controlled {
            negative ^= x & m == m;
        }
        let mut angle = self.rz_offset;
        for &(bit, a) in &self.rz {
            if x & bit != 0 {
                angle += a;
            }
        }
        let p = if angle == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::from_polar(1.0, angle) };
        if negative {
            -p
        } else {
            p
        }
    }
}

impl CtState for PhaseState {
    fn n(&self) -> usize {
        self.base.n()
    }

    fn amplitude(&self, x: u64) -> Complex64 {
        self.phase(x) * self.base.amplitude(x)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.base.sample(rng)
    }

    fn probability(&self, x: u64) -> f64 {
        self.base.amplitude(x).norm_sqr()
    }
}

/// `U|0ⁿ⟩` for a U-block made of single-qubit gates on fresh wires followed
/// by diagonal gates.
///
/// A single-qubit gate is folded into the product factor of its qubit as long
/// as no multi-qubit gate has touched that qubit. After that, only diagonal
/// gates are accepted on it.
pub fn ct_state_of(u_block: &Circuit) -> Result<PhaseState> {
    let n = u_block.n();
    let mut base = ProductState::zero(n)?;
    let mut entangled = vec![false; n];
    let mut diagonal = Vec::new();
    for g in u_block.gates() {
        let q = g.qubits();
        match g.kind() {
            GateKind::Cz | GateKind::Ccz => {
                q.iter().for_each(|&j| entangled[j] = true);
                diagonal.push(g.clone());
            }
            kind if !entangled[q[0]] => base.apply(q[0], kind.matrix_1q().expect("single-qubit kind")),
            kind if kind.is_diagonal() => diagonal.push(g.clone()),
            kind => {
                return Err(Error::invalid(format!(
                    "U-block applies non-diagonal {} to qubit {} after an entangling gate",
                    kind.name(),
                    q[0]
                )))
            }
        }
    }
    // refresh the sampling tables after folding
    let base = ProductState::new(base.factors)?;
    PhaseState::new(base, diagonal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_clifford_magic, build_iqp, random_family_instance, DyadicAngle, Family, InstanceParams};
    use crate::oracle::{simulate, DEFAULT_DENSE_CAP};
    use crate::seed;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn plus(n: usize) -> ProductState {
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        ProductState::new(vec![[r, r]; n]).unwrap()
    }

    fn assert_matches_dense(state: &PhaseState, circuit: &Circuit) {
        let psi = simulate(circuit, DEFAULT_DENSE_CAP).unwrap();
        for x in 0..1u64 << circuit.n() {
            assert!((state.amplitude(x) - psi.amplitude(x)).norm() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn basis_state_amplitudes() {
        let z = ProductState::zero(3).unwrap();
        assert_eq!(z.amplitude(0), Complex64::new(1.0, 0.0));
        assert!((1..8).all(|x| z.amplitude(x) == Complex64::new(0.0, 0.0)));
        let mut rng = seed::stream(0, "test", 0);
        assert!((0..100).all(|_| z.sample(&mut rng) == 0));
    }

    #[test]
    fn phase_state_cz_example() {
        let s = PhaseState::new(plus(2), vec![Gate::cz(0, 1)]).unwrap();
        assert!((s.amplitude(0b11) - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!((s.amplitude(0b01) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn magic_single_qubit_amplitudes() {
        // T is RZ(π/4), so the amplitudes match (1, e^{iπ/4})/√2 up to a global phase
        let d = build_clifford_magic(1, vec![]).unwrap();
        let s = ct_state_of(d.u_block()).unwrap();
        let (a0, a1) = (s.amplitude(0), s.amplitude(1));
        assert!((a0.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a1.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a1 / a0 - Complex64::from_polar(1.0, FRAC_PI_4)).norm() < 1e-15);
    }

    #[test]
    fn width_checked() {
        let s = ProductState::zero(2).unwrap();
        assert!(s.checked_amplitude(4).is_err());
        assert!(s.checked_amplitude(3).is_ok());
    }

    #[test]
    fn rejects_unnormalized_factors() {
        let one = Complex64::new(1.0, 0.0);
        assert!(ProductState::new(vec![[one, one]]).is_err());
    }

    #[test]
    fn ct_state_shapes() {
        let h = Circuit::new(3, (0..3).map(Gate::h).collect()).unwrap();
        let s = ct_state_of(&h).unwrap();
        assert!(s.diagonal().is_empty());
        assert_matches_dense(&s, &h);

        let id = Circuit::empty(3).unwrap();
        assert_eq!(ct_state_of(&id).unwrap().amplitude(0), Complex64::new(1.0, 0.0));

        let d = build_iqp(3, vec![Gate::z(0), Gate::ccz(0, 1, 2)]).unwrap();
        assert_matches_dense(&ct_state_of(d.u_block()).unwrap(), d.u_block());
    }

    #[test]
    fn rejects_unrecognized_shape() {
        let c = Circuit::new(2, vec![Gate::h(0), Gate::cz(0, 1), Gate::h(0)]).unwrap();
        assert!(ct_state_of(&c).is_err());
        let ok = Circuit::new(2, vec![Gate::h(0), Gate::h(1), Gate::cz(0, 1), Gate::t(0)]).unwrap();
        assert_matches_dense(&ct_state_of(&ok).unwrap(), &ok);
    }

    #[test]
    fn family_u_blocks_match_dense() {
        let mut rng = seed::stream(5, "test", 0);
        for family in Family::ALL {
            for _ in 0..10 {
                let d = random_family_instance(family, 5, &InstanceParams::default(), &mut rng).unwrap();
                let s = ct_state_of(d.u_block()).unwrap();
                assert_matches_dense(&s, d.u_block());
                let total: f64 = (0..32).map(|x| s.amplitude(x).norm_sqr()).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unbiased_sampling_frequencies() {
        let s = plus(3);
        let mut rng = seed::stream(6, "test", 0);
        let draws = 100_000;
        let mut ones = [0u32; 3];
        for _ in 0..draws {
            let x = s.sample(&mut rng);
            for (j, o) in ones.iter_mut().enumerate() {
                *o += bits::get(x, 3, j) as u32;
            }
        }
        let sigma = (draws as f64 * 0.25).sqrt();
        for o in ones {
            assert!((o as f64 - draws as f64 / 2.0).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn rotated_product_passes_chi_square() {
        let theta = DyadicAngle::new(1, 3).unwrap();
        let phi = DyadicAngle::new(-1, 2).unwrap();
        let mut gates = Vec::new();
        for q in 0..4 {
            gates.push(Gate::rx(theta, q));
            gates.push(Gate::rz(phi, q));
        }
        let u = Circuit::new(4, gates).unwrap();
        let s = ct_state_of(&u).unwrap();
        let p = simulate(&u, DEFAULT_DENSE_CAP).unwrap().distribution();
        let mut rng = seed::stream(7, "test", 0);
        let draws = 100_000usize;
        let mut counts = vec![0usize; 16];
        for _ in 0..draws {
            counts[s.sample(&mut rng) as usize] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(p.probs())
            .map(|(&o, &q)| {
                let e = q * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // 15 degrees of freedom, upper 1e−3 quantile
        assert!(chi2 < 37.70, "chi2 = {chi2}");
    }
}
