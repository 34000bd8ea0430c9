//! Efficiently computable sparse operations.
//!
//! Every operator is exposed through its column oracle: column `x` lists the
//! nonzero entries `(β_j, γ_j)` with `A|x⟩ = Σ_j β_j |γ_j⟩`. Entry order is
//! deterministic (ascending `γ` for merged columns) but carries no meaning.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits;
use crate::circuit::{Circuit, CtEcsDecomposition, DyadicAngle, FamilyParams, Gate, GateKind};
use crate::error::{Error, Result};
use crate::oracle::StateVector;

/// Entries below this modulus are dropped when columns are merged.
pub const DROP_TOL: f64 = 1e-12;

pub const DEFAULT_SUPPORT_CAP: usize = 12;

pub const DEFAULT_SPARSITY_CAP: usize = 1 << 12;

pub type Column = Vec<(Complex64, u64)>;

pub trait ColumnOracle {
    fn n(&self) -> usize;

    /// Appends the nonzero entries of column `x` to `out`.
    fn columns_into(&self, x: u64, out: &mut Column);

    /// Upper bound on the number of entries in any column.
    fn sparsity_bound(&self) -> usize;

    fn columns(&self, x: u64) -> Column {
        let mut out = Vec::with_capacity(self.sparsity_bound().min(64));
        self.columns_into(x, &mut out);
        out
    }
}

fn i_pow(k: u8) -> Complex64 {
    [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ][(k & 3) as usize]
}

/// Sorts by row and sums duplicates, dropping cancelled entries.
fn merge_column(col: &mut Column) {
    if col.len() < 2 {
        col.retain(|(b, _)| b.norm() >= DROP_TOL);
        return;
    }
    col.sort_by_key(|&(_, g)| g);
    let mut w = 0;
    for r in 0..col.len() {
        if w > 0 && col[w - 1].1 == col[r].1 {
            let b = col[r].0;
            col[w - 1].0 += b;
        } else {
            col[w] = col[r];
            w += 1;
        }
    }
    col.truncate(w);
    col.retain(|(b, _)| b.norm() >= DROP_TOL);
}

/// `i^k X^x Z^z` on `n` qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedPauli {
    n: usize,
    k: u8,
    x: u64,
    z: u64,
}

impl SignedPauli {
    pub fn new(n: usize, k: u8, xmask: u64, zmask: u64) -> Result<Self> {
        if n == 0 || n > bits::MAX_QUBITS {
            return Err(Error::invalid(format!("Pauli width must be in 1..={}", bits::MAX_QUBITS)));
        }
        let full = bits::full(n);
        if xmask & !full != 0 || zmask & !full != 0 {
            return Err(Error::invalid(format!("Pauli masks wider than {n} qubits")));
        }
        Ok(SignedPauli { n, k: k & 3, x: xmask, z: zmask })
    }

    pub fn identity(n: usize) -> Self {
        SignedPauli { n, k: 0, x: 0, z: 0 }
    }

    /// `Zˢ`.
    pub fn z_string(n: usize, s: u64) -> Self {
        SignedPauli { n, k: 0, x: 0, z: s }
    }

    /// `Xˢ`.
    pub fn x_string(n: usize, s: u64) -> Self {
        SignedPauli { n, k: 0, x: s, z: 0 }
    }

    /// `Y_j = i X_j Z_j`.
    pub fn y_on(n: usize, j: usize) -> Self {
        let b = bits::qubit_bit(n, j);
        SignedPauli { n, k: 1, x: b, z: b }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn phase_exponent(&self) -> u8 {
        self.k
    }

    pub fn xmask(&self) -> u64 {
        self.x
    }

    pub fn zmask(&self) -> u64 {
        self.z
    }

    pub fn phase(&self) -> Complex64 {
        i_pow(self.k)
    }

    pub fn is_hermitian(&self) -> bool {
        self.k % 2 == ((self.x & self.z).count_ones() % 2) as u8
    }

    /// `P|y⟩ = β|γ⟩`.
    pub fn apply(&self, y: u64) -> (Complex64, u64) {
        let k = self.k + if bits::parity(self.z & y) { 2 } else { 0 };
        (i_pow(k), y ^ self.x)
    }

    /// `self · other`.
    pub fn mul(&self, other: &SignedPauli) -> SignedPauli {
        assert_eq!(self.n, other.n, "Pauli width mismatch");
        let swap = if (self.z & other.x).count_ones() % 2 == 1 { 2 } else { 0 };
        SignedPauli { n: self.n, k: (self.k + other.k + swap) & 3, x: self.x ^ other.x, z: self.z ^ other.z }
    }

    fn with_phase(mut self, dk: u8) -> Self {
        self.k = (self.k + dk) & 3;
        self
    }
}

impl ColumnOracle for SignedPauli {
    fn n(&self) -> usize {
        self.n
    }

    fn columns_into(&self, x: u64, out: &mut Column) {
        out.push(self.apply(x));
    }

    fn sparsity_bound(&self) -> usize {
        1
    }
}

/// `g† P g` for one gate; `None` if `g` does not normalize the Pauli group.
fn conjugate_by_gate(g: &Gate, p: SignedPauli) -> Option<SignedPauli> {
    let n = p.n;
    let q = g.qubits();
    let bit = bits::qubit_bit(n, q[0]);
    let a = p.x & bit != 0;
    let b = p.z & bit != 0;
    let ab = (a && b) as u8;
    // phase-only conjugations, expressed through which of X and Z flip sign
    let flip = |p: SignedPauli, x_flips: bool, z_flips: bool| {
        let odd = (x_flips && a) ^ (z_flips && b);
        p.with_phase(if odd { 2 } else { 0 })
    };
    let s_like = |p: SignedPauli, dk: u8| {
        // S†XS = −iXZ, S X S† = iXZ, Z fixed
        let mut r = p;
        if a {
            r.z ^= bit;
            r = r.with_phase(dk);
        }
        r
    };
    Some(match g.kind() {
        GateKind::H => {
            let mut r = p;
            r.x = (p.x & !bit) | if b { bit } else { 0 };
            r.z = (p.z & !bit) | if a { bit } else { 0 };
            r.with_phase(2 * ab)
        }
        GateKind::X => flip(p, false, true),
        GateKind::Z => flip(p, true, false),
        GateKind::Y => flip(p, true, true),
        GateKind::S => s_like(p, 3),
        GateKind::Rz(angle) if angle.t() == 1 => flip(p, true, false),
        GateKind::Rz(angle) if angle.t() == 2 => s_like(p, if angle.sign() > 0 { 3 } else { 1 }),
        GateKind::Rx(angle) if angle.t() == 1 => flip(p, false, true),
        GateKind::Cz => {
            let (ba, bb) = (bit, bits::qubit_bit(n, q[1]));
            // CZ X_a CZ = X_a Z_b, CZ X_b CZ = Z_a X_b, Z unchanged
            let mut r = SignedPauli { n, k: p.k, x: p.x & !(ba | bb), z: 0 };
            if p.x & ba != 0 {
                r = r.mul(&SignedPauli { n, k: 0, x: ba, z: bb });
            }
            if p.x & bb != 0 {
                r = r.mul(&SignedPauli { n, k: 0, x: bb, z: ba });
            }
            r.mul(&SignedPauli { n, k: 0, x: 0, z: p.z })
        }
        _ => return None,
    })
}

/// `E† P E` where `E` applies `gates` in order. Accepts `H, S, CZ, X, Y, Z`
/// and the Clifford rotations `RZ(±π)`, `RZ(±π/2)`, `RX(±π)`.
pub fn conjugate_pauli_by_clifford(gates: &[Gate], p: SignedPauli) -> Result<SignedPauli> {
    let mut r = p;
    for g in gates.iter().rev() {
        if g.qubits().iter().any(|&q| q >= p.n) {
            return Err(Error::invalid(format!("{g} is outside the {}-qubit register", p.n)));
        }
        r = conjugate_by_gate(g, r).ok_or_else(|| Error::invalid(format!("{g} is not a Clifford gate")))?;
    }
    Ok(r)
}

/// `Σ_t c_t P_t`, kept merged by Pauli word with phases folded into the
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliCombination {
    n: usize,
    terms: Vec<(Complex64, SignedPauli)>,
    /// Distinct X masks; each contributes one row per column.
    distinct_x: usize,
}

impl PauliCombination {
    pub fn new(n: usize, terms: Vec<(Complex64, SignedPauli)>) -> Result<Self> {
        if let Some((_, p)) = terms.iter().find(|(_, p)| p.n != n) {
            return Err(Error::invalid(format!("term of width {} in a {n}-qubit combination", p.n)));
        }
        let mut words: BTreeMap<(u64, u64), Complex64> = BTreeMap::new();
        for (c, p) in terms {
            *words.entry((p.x, p.z)).or_default() += c * p.phase();
        }
        let terms: Vec<(Complex64, SignedPauli)> = words
            .into_iter()
            .filter(|(_, c)| c.norm() >= DROP_TOL)
            .map(|((x, z), c)| (c, SignedPauli { n, k: 0, x, z }))
            .collect();
        let mut xs: Vec<u64> = terms.iter().map(|(_, p)| p.x).collect();
        xs.dedup();
        Ok(PauliCombination { n, terms, distinct_x: xs.len() })
    }

    pub fn terms(&self) -> &[(Complex64, SignedPauli)] {
        &self.terms
    }

    pub fn mul(&self, other: &PauliCombination) -> PauliCombination {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, p) in &self.terms {
            for (b, q) in &other.terms {
                terms.push((a * b, p.mul(q)));
            }
        }
        PauliCombination::new(self.n, terms).expect("widths agree")
    }

    /// Conjugates every term by the same Clifford block.
    pub fn conjugate_by_clifford(&self, gates: &[Gate]) -> Result<PauliCombination> {
        let terms = self
            .terms
            .iter()
            .map(|(c, p)| Ok((*c, conjugate_pauli_by_clifford(gates, *p)?)))
            .collect::<Result<Vec<_>>>()?;
        PauliCombination::new(self.n, terms)
    }
}

impl From<SignedPauli> for PauliCombination {
    fn from(p: SignedPauli) -> Self {
        PauliCombination::new(p.n, vec![(Complex64::new(1.0, 0.0), p)]).expect("single term")
    }
}

impl ColumnOracle for PauliCombination {
    fn n(&self) -> usize {
        self.n
    }

    fn columns_into(&self, x: u64, out: &mut Column) {
        let start = out.len();
        for (c, p) in &self.terms {
            let (b, g) = p.apply(x);
            out.push((c * b, g));
        }
        let mut tail = out.split_off(start);
        merge_column(&mut tail);
        out.extend(tail);
    }

    fn sparsity_bound(&self) -> usize {
        self.distinct_x
    }
}

/// Coefficients `(α_I, α_Z, α_X, α_Y)` of `M = RZ(φ) RX(θ) Z RX(−θ) RZ(−φ)`.
/// `None` stands for an absent rotation (angle 0).
pub fn conjugated_z_decomposition(phi: Option<DyadicAngle>, theta: Option<DyadicAngle>) -> [Complex64; 4] {
    let phi = phi.map_or(0.0, DyadicAngle::radians);
    let theta = theta.map_or(0.0, DyadicAngle::radians);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let r = |v: f64| Complex64::new(v, 0.0);
    [r(0.0), r(ct), r(st * sp), r(-st * cp)]
}

/// Dense operator on a few qubits, identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    n: usize,
    support: Vec<usize>,
    block: DMatrix<Complex64>,
    /// Per local column, its nonzero `(β, local row)` entries.
    sparse: Vec<Vec<(Complex64, usize)>>,
}

impl LocalOperator {
    /// `support` must be sorted and distinct; `block` is indexed with
    /// `support[0]` as the most significant local bit.
    pub fn new(n: usize, support: Vec<usize>, block: DMatrix<Complex64>, cap: usize) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) || support.iter().any(|&q| q >= n) {
            return Err(Error::invalid("support must be sorted, distinct and in range"));
        }
        if support.len() > cap {
            return Err(Error::SupportCap { qubit: support[0], size: support.len(), cap });
        }
        let dim = 1usize << support.len();
        if block.shape() != (dim, dim) {
            return Err(Error::invalid(format!("block must be {dim}×{dim}")));
        }
        let herm = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .map(|(r, c)| (block[(r, c)] - block[(c, r)].conj()).norm())
            .fold(0.0, f64::max);
        if herm > 1e-9 {
            return Err(Error::SelfCheck(format!("local block is not Hermitian ({herm:e})")));
        }
        if dim <= 256 {
            let sq = &block * &block;
            let dev = (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .map(|(r, c)| (sq[(r, c)] - if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).norm())
                .fold(0.0, f64::max);
            if dev > 1e-9 {
                return Err(Error::SelfCheck(format!("local block is not an involution ({dev:e})")));
            }
        }
        let sparse = (0..dim)
            .map(|c| (0..dim).filter(|&r| block[(r, c)].norm() >= DROP_TOL).map(|r| (block[(r, c)], r)).collect())
            .collect();
        Ok(LocalOperator { n, support, block, sparse })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn block(&self) -> &DMatrix<Complex64> {
        &self.block
    }

    fn local_index(&self, x: u64) -> usize {
        self.support.iter().fold(0, |acc, &q| (acc << 1) | bits::get(x, self.n, q) as usize)
    }

    fn scatter(&self, x: u64, local: usize) -> u64 {
        let m = self.support.len();
        let mut y = x;
        for (i, &q) in self.support.iter().enumerate() {
            let bit = bits::qubit_bit(self.n, q);
            if (local >> (m - 1 - i)) & 1 == 1 {
                y |= bit;
            } else {
                y &= !bit;
            }
        }
        y
    }
}

impl ColumnOracle for LocalOperator {
    fn n(&self) -> usize {
        self.n
    }

    fn columns_into(&self, x: u64, out: &mut Column) {
        for &(b, r) in &self.sparse[self.local_index(x)] {
            out.push((b, self.scatter(x, r)));
        }
    }

    fn sparsity_bound(&self) -> usize {
        self.sparse.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Ordered product `F₁ F₂ ⋯ F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EcsProduct {
    n: usize,
    factors: Vec<EcsOperation>,
}

impl EcsProduct {
    pub fn factors(&self) -> &[EcsOperation] {
        &self.factors
    }
}

impl ColumnOracle for EcsProduct {
    fn n(&self) -> usize {
        self.n
    }

    fn columns_into(&self, x: u64, out: &mut Column) {
        let mut cur: Column = vec![(Complex64::new(1.0, 0.0), x)];
        let mut next = Vec::new();
        let mut scratch = Vec::new();
        for f in self.factors.iter().rev() {
            next.clear();
            for &(c, y) in &cur {
                scratch.clear();
                f.columns_into(y, &mut scratch);
                next.extend(scratch.iter().map(|&(b, g)| (c * b, g)));
            }
            merge_column(&mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        out.extend(cur);
    }

    fn sparsity_bound(&self) -> usize {
        self.factors.iter().map(ColumnOracle::sparsity_bound).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EcsOperation {
    Pauli(SignedPauli),
    Combination(PauliCombination),
    Local(LocalOperator),
    Product(EcsProduct),
}

impl EcsOperation {
    /// Product of factors with Pauli-level simplification.
    pub fn product(n: usize, factors: Vec<EcsOperation>) -> Result<EcsOperation> {
        if let Some(f) = factors.iter().find(|f| f.n() != n) {
            return Err(Error::invalid(format!("factor of width {} in a {n}-qubit product", f.n())));
        }
        let mut out: Vec<EcsOperation> = Vec::new();
        for f in factors {
            let f = match f {
                EcsOperation::Product(p) => {
                    for g in p.factors {
                        push_simplified(&mut out, g);
                    }
                    continue;
                }
                f => f,
            };
            push_simplified(&mut out, f);
        }
        Ok(match out.len() {
            0 => EcsOperation::Pauli(SignedPauli::identity(n)),
            1 => out.pop().expect("one factor"),
            _ => EcsOperation::Product(EcsProduct { n, factors: out }),
        })
    }

    pub fn factor_count(&self) -> usize {
        match self {
            EcsOperation::Product(p) => p.factors.len(),
            _ => 1,
        }
    }
}

fn push_simplified(out: &mut Vec<EcsOperation>, f: EcsOperation) {
    let merged = match (out.last(), &f) {
        (Some(EcsOperation::Pauli(a)), EcsOperation::Pauli(b)) => Some(EcsOperation::Pauli(a.mul(b))),
        (Some(EcsOperation::Pauli(a)), EcsOperation::Combination(b)) => {
            Some(EcsOperation::Combination(PauliCombination::from(*a).mul(b)))
        }
        (Some(EcsOperation::Combination(a)), EcsOperation::Pauli(b)) => {
            Some(EcsOperation::Combination(a.mul(&PauliCombination::from(*b))))
        }
        (Some(EcsOperation::Combination(a)), EcsOperation::Combination(b)) => Some(EcsOperation::Combination(a.mul(b))),
        _ => None,
    };
    match merged {
        Some(m) => {
            out.pop();
            out.push(m);
        }
        None => out.push(f),
    }
}

impl ColumnOracle for EcsOperation {
    fn n(&self) -> usize {
        match self {
            EcsOperation::Pauli(p) => p.n(),
            EcsOperation::Combination(c) => c.n(),
            EcsOperation::Local(l) => l.n(),
            EcsOperation::Product(p) => p.n(),
        }
    }

    fn columns_into(&self, x: u64, out: &mut Column) {
        match self {
            EcsOperation::Pauli(p) => p.columns_into(x, out),
            EcsOperation::Combination(c) => c.columns_into(x, out),
            EcsOperation::Local(l) => l.columns_into(x, out),
            EcsOperation::Product(p) => p.columns_into(x, out),
        }
    }

    fn sparsity_bound(&self) -> usize {
        match self {
            EcsOperation::Pauli(p) => p.sparsity_bound(),
            EcsOperation::Combination(c) => c.sparsity_bound(),
            EcsOperation::Local(l) => l.sparsity_bound(),
            EcsOperation::Product(p) => p.sparsity_bound(),
        }
    }
}

/// Reverse lightcone of qubit `j` through `circuit`, sorted.
pub fn lightcone(circuit: &Circuit, j: usize, cap: usize) -> Result<Vec<usize>> {
    Ok(lightcone_of_mask(circuit, bits::qubit_bit(circuit.n(), j), j, cap)?.0)
}

/// Support and the gates (in circuit order) that intersect it.
fn lightcone_of_mask(circuit: &Circuit, start: u64, qubit: usize, cap: usize) -> Result<(Vec<usize>, Vec<Gate>)> {
    let n = circuit.n();
    if start == 0 || start & !bits::full(n) != 0 {
        return Err(Error::invalid("lightcone start outside the register"));
    }
    let mut support = start;
    let mut hit = Vec::new();
    for g in circuit.gates().iter().rev() {
        let m = crate::circuit::gate_mask(n, g);
        if m & support != 0 {
            support |= m;
            hit.push(g.clone());
            let size = support.count_ones() as usize;
            if size > cap {
                return Err(Error::SupportCap { qubit, size, cap });
            }
        }
    }
    hit.reverse();
    Ok((bits::qubits_of(support, n), hit))
}

/// `V† Zˢ V` as a dense block on the reverse lightcone of `s`, built from the
/// intersecting gates only.
pub fn local_conjugated_z(v: &Circuit, s: u64, cap: usize) -> Result<LocalOperator> {
    let n = v.n();
    let first = bits::qubits_of(s, n).first().copied().unwrap_or(0);
    let (support, gates) = lightcone_of_mask(v, s, first, cap)?;
    let m = support.len();
    let local_of = |q: usize| support.binary_search(&q).expect("gate inside lightcone");
    let local_gates = gates
        .iter()
        .map(|g| Gate::new(g.kind(), g.qubits().iter().map(|&q| local_of(q)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let local = Circuit::new(m, local_gates)?;
    let back = local.inverse();
    let local_s = bits::mask_of(m, &bits::qubits_of(s, n).into_iter().map(local_of).collect::<Vec<_>>());
    let dim = 1usize << m;
    let mut block = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let mut psi = StateVector::basis(m, c as u64, cap)?;
        psi.apply_circuit(&local);
        psi.apply_z_string(local_s);
        psi.apply_circuit(&back);
        for (r, a) in psi.amplitudes().iter().enumerate() {
            block[(r, c)] = *a;
        }
    }
    LocalOperator::new(n, support, block, cap)
}

/// Resource limits for [`ecs_for`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcsLimits {
    pub support_cap: usize,
    pub sparsity_cap: usize,
}

impl Default for EcsLimits {
    fn default() -> Self {
        EcsLimits { support_cap: DEFAULT_SUPPORT_CAP, sparsity_cap: DEFAULT_SPARSITY_CAP }
    }
}

/// `V† Zˢ V` for a decomposition, as a product of per-qubit factors with
/// Pauli-level and lightcone-level merging.
pub fn ecs_for(decomp: &CtEcsDecomposition, s: u64, limits: &EcsLimits) -> Result<EcsOperation> {
    let n = decomp.n();
    if s == 0 || s & !bits::full(n) != 0 {
        return Err(Error::invalid(format!("mask must be a nonzero {n}-bit string")));
    }
    let weight = s.count_ones() as usize;
    let op = match decomp.params() {
        FamilyParams::Iqp { .. } | FamilyParams::CliffordMagic { .. } => EcsOperation::Pauli(
            conjugate_pauli_by_clifford(decomp.v_block().gates(), SignedPauli::z_string(n, s))?,
        ),
        FamilyParams::ConjugatedClifford { phi, theta, clifford } => {
            let [ai, az, ax, ay] = conjugated_z_decomposition(*phi, *theta);
            let factors = bits::qubits_of(s, n)
                .into_iter()
                .map(|j| {
                    let b = bits::qubit_bit(n, j);
                    let m = PauliCombination::new(
                        n,
                        vec![
                            (ai, SignedPauli::identity(n)),
                            (az, SignedPauli::z_string(n, b)),
                            (ax, SignedPauli::x_string(n, b)),
                            (ay, SignedPauli::y_on(n, j)),
                        ],
                    )?;
                    Ok(EcsOperation::Combination(m.conjugate_by_clifford(clifford)?))
                })
                .collect::<Result<Vec<_>>>()?;
            EcsOperation::product(n, factors)?
        }
        FamilyParams::ConstantDepth { .. } => {
            let v = decomp.v_block();
            let mut groups: Vec<(u64, u64)> = Vec::new();
            for j in bits::qubits_of(s, n) {
                let (cone, _) = lightcone_of_mask(v, bits::qubit_bit(n, j), j, limits.support_cap)?;
                let cone = bits::mask_of(n, &cone);
                match groups.iter_mut().find(|(_, c)| (c | cone).count_ones() as usize <= limits.support_cap) {
                    Some((zs, c)) => {
                        *zs |= bits::qubit_bit(n, j);
                        *c |= cone;
                    }
                    None => groups.push((bits::qubit_bit(n, j), cone)),
                }
            }
            let factors = groups
                .into_iter()
                .map(|(zs, _)| local_conjugated_z(v, zs, limits.support_cap).map(EcsOperation::Local))
                .collect::<Result<Vec<_>>>()?;
            EcsOperation::product(n, factors)?
        }
    };
    let bound = op.sparsity_bound();
    if bound > limits.sparsity_cap {
        return Err(Error::SparsityCap { weight, bound, cap: limits.sparsity_cap });
    }
    Ok(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{
        build_clifford_magic, build_constant_depth, build_conjugated_clifford, build_iqp, random_family_instance, Family,
        InstanceParams,
    };
    use crate::oracle::{dense_unitary, matrix_from_columns, max_abs_diff, pauli_string_matrix, z_string_matrix};
    use crate::seed;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_p(p: &SignedPauli) -> DMatrix<Complex64> {
        pauli_string_matrix(p.n(), p.phase_exponent(), p.xmask(), p.zmask())
    }

    fn dense_conjugated_z(decomp: &CtEcsDecomposition, s: u64) -> DMatrix<Complex64> {
        let v = dense_unitary(decomp.v_block()).unwrap();
        v.adjoint() * z_string_matrix(decomp.n(), s) * v
    }

    #[test]
    fn pauli_columns() {
        let x0 = SignedPauli::x_string(2, 0b10);
        assert_eq!(x0.columns(0b00), vec![(c(1.0, 0.0), 0b10)]);
        let z0 = SignedPauli::z_string(2, 0b10);
        assert_eq!(z0.columns(0b10), vec![(c(-1.0, 0.0), 0b10)]);
    }

    #[test]
    fn pauli_action_and_hermiticity_match_dense() {
        for n in 1..=3usize {
            let dim = 1u64 << n;
            for k in 0..4u8 {
                for x in 0..dim {
                    for z in 0..dim {
                        let p = SignedPauli::new(n, k, x, z).unwrap();
                        let m = dense_p(&p);
                        assert!(max_abs_diff(&matrix_from_columns(&p).unwrap(), &m) < 1e-15);
                        let herm = max_abs_diff(&m, &m.adjoint()) < 1e-15;
                        assert_eq!(p.is_hermitian(), herm);
                    }
                }
            }
        }
    }

    #[test]
    fn pauli_product_matches_dense() {
        let mut rng = seed::stream(1, "test", 0);
        use rand::Rng;
        for _ in 0..200 {
            let n = rng.gen_range(1..=4);
            let f = bits::full(n);
            let a = SignedPauli::new(n, rng.gen(), rng.gen::<u64>() & f, rng.gen::<u64>() & f).unwrap();
            let b = SignedPauli::new(n, rng.gen(), rng.gen::<u64>() & f, rng.gen::<u64>() & f).unwrap();
            assert!(max_abs_diff(&dense_p(&a.mul(&b)), &(dense_p(&a) * dense_p(&b))) < 1e-14);
        }
    }

    #[test]
    fn conjugation_examples() {
        let x0 = SignedPauli::x_string(1, 1);
        let z0 = SignedPauli::z_string(1, 1);
        assert_eq!(conjugate_pauli_by_clifford(&[Gate::h(0)], z0).unwrap(), x0);
        // S† X S = [[0, i], [−i, 0]] = −Y
        let r = conjugate_pauli_by_clifford(&[Gate::s(0)], x0).unwrap();
        assert_eq!(r, SignedPauli::new(1, 3, 1, 1).unwrap());
        assert!(max_abs_diff(&dense_p(&r), &DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)])) < 1e-15);
        let x0 = SignedPauli::x_string(2, 0b10);
        let r = conjugate_pauli_by_clifford(&[Gate::cz(0, 1)], x0).unwrap();
        assert_eq!(r, SignedPauli::new(2, 0, 0b10, 0b01).unwrap());
        assert!(conjugate_pauli_by_clifford(&[Gate::t(0)], x0).is_err());
    }

    #[test]
    fn every_conjugation_rule_matches_dense() {
        let pos = |t| DyadicAngle::new(1, t).unwrap();
        let neg = |t| DyadicAngle::new(-1, t).unwrap();
        let gates = vec![
            Gate::h(1),
            Gate::s(0),
            Gate::x(1),
            Gate::y(0),
            Gate::z(1),
            Gate::cz(0, 1),
            Gate::cz(1, 0),
            Gate::rz(pos(1), 0),
            Gate::rz(neg(1), 1),
            Gate::rz(pos(2), 0),
            Gate::rz(neg(2), 1),
            Gate::rx(pos(1), 0),
            Gate::rx(neg(1), 1),
        ];
        for g in gates {
            let u = dense_unitary(&Circuit::new(2, vec![g.clone()]).unwrap()).unwrap();
            for k in 0..4u8 {
                for x in 0..4 {
                    for z in 0..4 {
                        let p = SignedPauli::new(2, k, x, z).unwrap();
                        let r = conjugate_pauli_by_clifford(std::slice::from_ref(&g), p).unwrap();
                        let want = u.adjoint() * dense_p(&p) * &u;
                        assert!(max_abs_diff(&dense_p(&r), &want) < 1e-12, "{g} on {p:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn random_clifford_blocks_match_dense() {
        let mut rng = seed::stream(2, "test", 0);
        for _ in 0..20 {
            let d = random_family_instance(Family::CliffordMagic, 4, &InstanceParams::default(), &mut rng).unwrap();
            for j in 0..4 {
                let s = bits::qubit_bit(4, j);
                let op = ecs_for(&d, s, &EcsLimits::default()).unwrap();
                assert!(matches!(op, EcsOperation::Pauli(_)));
                assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &dense_conjugated_z(&d, s)) < 1e-9);
            }
        }
    }

    #[test]
    fn iqp_gives_x_strings() {
        let d = build_iqp(3, vec![Gate::ccz(0, 1, 2)]).unwrap();
        for s in 1..8 {
            let op = ecs_for(&d, s, &EcsLimits::default()).unwrap();
            assert_eq!(op, EcsOperation::Pauli(SignedPauli::x_string(3, s)));
            assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &dense_conjugated_z(&d, s)) < 1e-12);
        }
    }

    #[test]
    fn clifford_magic_pair_is_one_pauli() {
        let d = build_clifford_magic(2, vec![Gate::h(0)]).unwrap();
        let op = ecs_for(&d, 0b10, &EcsLimits::default()).unwrap();
        assert_eq!(op, EcsOperation::Pauli(SignedPauli::x_string(2, 0b10)));
        let pair = ecs_for(&d, 0b11, &EcsLimits::default()).unwrap();
        assert_eq!(pair.sparsity_bound(), 1);
        assert!(max_abs_diff(&matrix_from_columns(&pair).unwrap(), &dense_conjugated_z(&d, 0b11)) < 1e-12);
    }

    fn trace_coefficients(m: &DMatrix<Complex64>) -> [Complex64; 4] {
        let paulis = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 1, 1)];
        paulis.map(|(k, x, z)| (pauli_string_matrix(1, k, x, z) * m).trace() / 2.0)
    }

    #[test]
    fn conjugated_z_matches_trace_formula() {
        let mut angles: Vec<Option<DyadicAngle>> = vec![None];
        for t in 1..=5 {
            angles.push(Some(DyadicAngle::new(1, t).unwrap()));
            angles.push(Some(DyadicAngle::new(-1, t).unwrap()));
        }
        for &phi in &angles {
            for &theta in &angles {
                // circuit order is right to left in M
                let mut gates = Vec::new();
                if let Some(ph) = phi {
                    gates.push(Gate::rz(ph.inverse(), 0));
                }
                if let Some(th) = theta {
                    gates.push(Gate::rx(th.inverse(), 0));
                }
                gates.push(Gate::z(0));
                if let Some(th) = theta {
                    gates.push(Gate::rx(th, 0));
                }
                if let Some(ph) = phi {
                    gates.push(Gate::rz(ph, 0));
                }
                let m = dense_unitary(&Circuit::new(1, gates).unwrap()).unwrap();
                let want = trace_coefficients(&m);
                let got = conjugated_z_decomposition(phi, theta);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).norm() < 1e-12, "φ={phi:?} θ={theta:?}");
                }
            }
        }
    }

    #[test]
    fn conjugated_z_examples() {
        let none = conjugated_z_decomposition(None, None);
        assert!((none[1] - 1.0).norm() < 1e-15 && none[0].norm() + none[2].norm() + none[3].norm() < 1e-15);
        let quarter = Some(DyadicAngle::new(1, 2).unwrap());
        let y = conjugated_z_decomposition(None, quarter);
        assert!(y[0].norm() + y[1].norm() + y[2].norm() < 1e-15 && (y[3] + 1.0).norm() < 1e-15);
        let both = conjugated_z_decomposition(quarter, quarter);
        assert!((both[2] - 1.0).norm() < 1e-15);
    }

    #[test]
    fn minus_y_column() {
        let d = build_conjugated_clifford(1, None, Some(DyadicAngle::new(1, 2).unwrap()), vec![]).unwrap();
        let op = ecs_for(&d, 1, &EcsLimits::default()).unwrap();
        let col = op.columns(0);
        assert_eq!(col.len(), 1);
        assert_eq!(col[0].1, 1);
        assert!((col[0].0 - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn inverse_pair_reduces_to_clifford() {
        let d = build_conjugated_clifford(2, None, None, vec![Gate::h(0), Gate::cz(0, 1)]).unwrap();
        let op = ecs_for(&d, 0b10, &EcsLimits::default()).unwrap();
        let EcsOperation::Combination(comb) = &op else { panic!("expected a combination") };
        assert_eq!(comb.terms().len(), 1);
        assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &dense_conjugated_z(&d, 0b10)) < 1e-12);
    }

    #[test]
    fn lightcones() {
        let h = Circuit::new(4, (0..4).map(Gate::h).collect()).unwrap();
        for j in 0..4 {
            assert_eq!(lightcone(&h, j, 12).unwrap(), vec![j]);
        }
        let layered = Circuit::new(4, vec![Gate::cz(0, 1), Gate::cz(2, 3), Gate::cz(1, 2)]).unwrap();
        assert_eq!(lightcone(&layered, 1, 12).unwrap(), vec![0, 1, 2, 3]);
        assert!(matches!(lightcone(&layered, 1, 3), Err(Error::SupportCap { .. })));
        assert_eq!(lightcone(&Circuit::empty(2).unwrap(), 1, 12).unwrap(), vec![1]);

        let d = build_constant_depth(layered, 2).unwrap();
        let op = ecs_for(&d, 0b0100, &EcsLimits::default()).unwrap();
        assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &dense_conjugated_z(&d, 0b0100)) < 1e-12);

        let empty = build_constant_depth(Circuit::empty(2).unwrap(), 1).unwrap();
        let op = ecs_for(&empty, 0b01, &EcsLimits::default()).unwrap();
        assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &z_string_matrix(2, 0b01)) < 1e-15);
    }

    #[test]
    fn split_lightcones_form_products() {
        let mut rng = seed::stream(3, "test", 0);
        let params = InstanceParams { depth: 4, ..InstanceParams::default() };
        let limits = EcsLimits { support_cap: 3, sparsity_cap: 1 << 12 };
        let d = random_family_instance(Family::ConstantDepth, 6, &params, &mut rng).unwrap();
        for s in [0b100001u64, 0b110000, 0b101010] {
            match ecs_for(&d, s, &limits) {
                Ok(op) => {
                    assert!(max_abs_diff(&matrix_from_columns(&op).unwrap(), &dense_conjugated_z(&d, s)) < 1e-9);
                }
                Err(e) => assert!(e.is_resource()),
            }
        }
    }

    #[test]
    fn sparsity_cap_is_reported() {
        let d = build_conjugated_clifford(3, Some(DyadicAngle::new(1, 3).unwrap()), Some(DyadicAngle::new(1, 3).unwrap()), vec![])
            .unwrap();
        let limits = EcsLimits { support_cap: 12, sparsity_cap: 2 };
        assert!(matches!(ecs_for(&d, 0b111, &limits), Err(Error::SparsityCap { weight: 3, .. })));
    }

    #[test]
    fn zero_mask_rejected() {
        let d = build_iqp(2, vec![]).unwrap();
        assert!(ecs_for(&d, 0, &EcsLimits::default()).is_err());
    }
}
