//! Gates, circuits and the four CT-ECS circuit families.
//!
//! The native gate set is `{RX(θ), RZ(θ), CZ}` with dyadic angles
//! `θ = ±2π/2^t`. `H`, `X`, `Y`, `Z`, `S`, `T` and `CCZ` are kept as
//! first-class kinds so diagonal phases stay exact; each has a fixed
//! decomposition into native gates that agrees up to global phase
//! ([`Gate::to_native`]).
//!
//! Matrix semantics: `RX(θ) = cos(θ/2) I − i sin(θ/2) X`,
//! `RZ(θ) = cos(θ/2) I − i sin(θ/2) Z`, `S = RZ(π/2)` and `T = RZ(π/4)` exactly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{self, MAX_QUBITS};
use crate::error::{Error, Result};

/// Rotation angle `sign · 2π / 2^t` with `t ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AngleRecord")]
pub struct DyadicAngle {
    sign: i8,
    t: u32,
}

#[derive(Deserialize)]
struct AngleRecord {
    sign: i64,
    t: i64,
}

impl TryFrom<AngleRecord> for DyadicAngle {
    type Error = Error;
    fn try_from(r: AngleRecord) -> Result<Self> {
        let sign = i8::try_from(r.sign).map_err(|_| Error::invalid("angle sign must be ±1"))?;
        let t = u32::try_from(r.t).map_err(|_| Error::invalid("angle exponent t must be ≥ 1"))?;
        DyadicAngle::new(sign, t)
    }
}

impl DyadicAngle {
    /// Largest exponent accepted; `2^t` must stay exactly representable.
    pub const MAX_T: u32 = 60;

    pub fn new(sign: i8, t: u32) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::invalid(format!("angle sign must be ±1, got {sign}")));
        }
        if !(1..=Self::MAX_T).contains(&t) {
            return Err(Error::invalid(format!(
                "angle exponent t must be in 1..={}, got {t}",
                Self::MAX_T
            )));
        }
        Ok(DyadicAngle { sign, t })
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    pub fn t(self) -> u32 {
        self.t
    }

    pub fn radians(self) -> f64 {
        self.sign as f64 * 2.0 * PI / (1u64 << self.t) as f64
    }

    pub fn inverse(self) -> Self {
        DyadicAngle { sign: -self.sign, t: self.t }
    }

    fn pos(t: u32) -> Self {
        DyadicAngle { sign: 1, t }
    }

    fn neg(t: u32) -> Self {
        DyadicAngle { sign: -1, t }
    }
}

impl fmt::Display for DyadicAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign < 0 { "-" } else { "" };
        write!(f, "{s}2π/2^{}", self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Rx(DyadicAngle),
    Rz(DyadicAngle),
    Cz,
    Ccz,
    H,
    X,
    Y,
    Z,
    S,
    T,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cz => 2,
            GateKind::Ccz => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx(_) => "RX",
            GateKind::Rz(_) => "RZ",
            GateKind::Cz => "CZ",
            GateKind::Ccz => "CCZ",
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::S => "S",
            GateKind::T => "T",
        }
    }

    /// Diagonal in the computational basis.
    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            GateKind::Rz(_) | GateKind::Cz | GateKind::Ccz | GateKind::Z | GateKind::S | GateKind::T
        )
    }

    /// Members of the Clifford generating set used by Clifford blocks.
    pub fn is_clifford(self) -> bool {
        matches!(
            self,
            GateKind::H | GateKind::S | GateKind::Cz | GateKind::X | GateKind::Y | GateKind::Z
        )
    }

    /// 2×2 matrix of a single-qubit kind, row-major `[[m00, m01], [m10, m11]]`.
    pub fn matrix_1q(self) -> Option<[[Complex64; 2]; 2]> {
        let c = Complex64::new;
        let z = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let rz = |theta: f64| {
            [[Complex64::from_polar(1.0, -theta / 2.0), z], [z, Complex64::from_polar(1.0, theta / 2.0)]]
        };
        Some(match self {
            GateKind::Rx(a) => {
                let h = a.radians() / 2.0;
                let (s, co) = h.sin_cos();
                [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
            }
            GateKind::Rz(a) => rz(a.radians()),
            GateKind::S => rz(PI / 2.0),
            GateKind::T => rz(PI / 4.0),
            GateKind::H => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]]
            }
            GateKind::X => [[z, one], [one, z]],
            GateKind::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
            GateKind::Z => [[one, z], [z, -one]],
            GateKind::Cz | GateKind::Ccz => return None,
        })
    }

    /// Phase applied to a basis state by a diagonal kind, given the gate's
    /// qubit values in gate order. `None` for non-diagonal kinds.
    pub fn diagonal_phase(self, bits: &[bool]) -> Option<Complex64> {
        let minus = Complex64::new(-1.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let rz = |theta: f64, b: bool| Complex64::from_polar(1.0, if b { theta / 2.0 } else { -theta / 2.0 });
        Some(match self {
            GateKind::Rz(a) => rz(a.radians(), bits[0]),
            GateKind::S => rz(PI / 2.0, bits[0]),
            GateKind::T => rz(PI / 4.0, bits[0]),
            GateKind::Z => {
                if bits[0] {
                    minus
                } else {
                    one
                }
            }
            GateKind::Cz | GateKind::Ccz => {
                if bits.iter().all(|&b| b) {
                    minus
                } else {
                    one
                }
            }
            _ => return None,
        })
    }
}

/// A gate kind applied to specific qubits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GateRecord", into = "GateRecord")]
pub struct Gate {
    kind: GateKind,
    qubits: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct GateRecord {
    g: String,
    q: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sign: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<u32>,
}

impl From<Gate> for GateRecord {
    fn from(g: Gate) -> Self {
        let (sign, t) = match g.kind {
            GateKind::Rx(a) | GateKind::Rz(a) => (Some(a.sign), Some(a.t)),
            _ => (None, None),
        };
        GateRecord { g: g.kind.name().to_string(), q: g.qubits, sign, t }
    }
}

impl TryFrom<GateRecord> for Gate {
    type Error = Error;
    fn try_from(r: GateRecord) -> Result<Self> {
        let angle = || -> Result<DyadicAngle> {
            match (r.sign, r.t) {
                (Some(s), Some(t)) => DyadicAngle::new(s, t),
                _ => Err(Error::invalid(format!("{} gate needs \"sign\" and \"t\"", r.g))),
            }
        };
        let kind = match r.g.as_str() {
            "RX" => GateKind::Rx(angle()?),
            "RZ" => GateKind::Rz(angle()?),
            other => {
                if r.sign.is_some() || r.t.is_some() {
                    return Err(Error::invalid(format!("{other} gate takes no angle")));
                }
                match other {
                    "CZ" => GateKind::Cz,
                    "CCZ" => GateKind::Ccz,
                    "H" => GateKind::H,
                    "X" => GateKind::X,
                    "Y" => GateKind::Y,
                    "Z" => GateKind::Z,
                    "S" => GateKind::S,
                    "T" => GateKind::T,
                    _ => return Err(Error::invalid(format!("unknown gate {other:?}"))),
                }
            }
        };
        Gate::new(kind, r.q)
    }
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(Error::invalid(format!(
                "{} acts on {} qubit(s), got {:?}",
                kind.name(),
                kind.arity(),
                qubits
            )));
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[..i].contains(q) {
                return Err(Error::invalid(format!("{} has repeated qubit {q}", kind.name())));
            }
        }
        Ok(Gate { kind, qubits })
    }

    fn one(kind: GateKind, q: usize) -> Self {
        Gate { kind, qubits: vec![q] }
    }

    pub fn h(q: usize) -> Self {
        Gate::one(GateKind::H, q)
    }
    pub fn x(q: usize) -> Self {
        Gate::one(GateKind::X, q)
    }
    pub fn y(q: usize) -> Self {
        Gate::one(GateKind::Y, q)
    }
    pub fn z(q: usize) -> Self {
        Gate::one(GateKind::Z, q)
    }
    pub fn s(q: usize) -> Self {
        Gate::one(GateKind::S, q)
    }
    pub fn t(q: usize) -> Self {
        Gate::one(GateKind::T, q)
    }
    pub fn rx(angle: DyadicAngle, q: usize) -> Self {
        Gate::one(GateKind::Rx(angle), q)
    }
    pub fn rz(angle: DyadicAngle, q: usize) -> Self {
        Gate::one(GateKind::Rz(angle), q)
    }

    /// # Panics
    /// If `a == b`.
    pub fn cz(a: usize, b: usize) -> Self {
        Gate::new(GateKind::Cz, vec![a, b]).expect("distinct CZ qubits")
    }

    /// # Panics
    /// If the qubits are not distinct.
    pub fn ccz(a: usize, b: usize, c: usize) -> Self {
        Gate::new(GateKind::Ccz, vec![a, b, c]).expect("distinct CCZ qubits")
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn inverse(&self) -> Gate {
        let kind = match self.kind {
            GateKind::Rx(a) => GateKind::Rx(a.inverse()),
            GateKind::Rz(a) => GateKind::Rz(a.inverse()),
            GateKind::S => GateKind::Rz(DyadicAngle::neg(2)),
            GateKind::T => GateKind::Rz(DyadicAngle::neg(3)),
            k => k,
        };
        Gate { kind, qubits: self.qubits.clone() }
    }

    /// Decomposition into `{RX, RZ, CZ}`, equal to this gate up to global phase.
    pub fn to_native(&self) -> Vec<Gate> {
        let q = &self.qubits;
        match self.kind {
            GateKind::Rx(_) | GateKind::Rz(_) | GateKind::Cz => vec![self.clone()],
            GateKind::X => vec![Gate::rx(DyadicAngle::pos(1), q[0])],
            GateKind::Z => vec![Gate::rz(DyadicAngle::pos(1), q[0])],
            GateKind::Y => vec![Gate::rz(DyadicAngle::pos(1), q[0]), Gate::rx(DyadicAngle::pos(1), q[0])],
            GateKind::S => vec![Gate::rz(DyadicAngle::pos(2), q[0])],
            GateKind::T => vec![Gate::rz(DyadicAngle::pos(3), q[0])],
            GateKind::H => native_h(q[0]),
            GateKind::Ccz => native_ccz(q[0], q[1], q[2]),
        }
    }
}

fn native_h(q: usize) -> Vec<Gate> {
    let quarter = DyadicAngle::pos(2);
    vec![Gate::rz(quarter, q), Gate::rx(quarter, q), Gate::rz(quarter, q)]
}

/// CNOT as `H(t) CZ(c, t) H(t)` in native gates.
fn native_cx(c: usize, t: usize) -> Vec<Gate> {
    let mut out = native_h(t);
    out.push(Gate::cz(c, t));
    out.extend(native_h(t));
    out
}

/// Phase-polynomial CCZ: seven T/T† rotations on parities prepared by CNOTs.
fn native_ccz(a: usize, b: usize, c: usize) -> Vec<Gate> {
    let t = |q| Gate::rz(DyadicAngle::pos(3), q);
    let tdg = |q| Gate::rz(DyadicAngle::neg(3), q);
    let mut out = Vec::new();
    out.extend(native_cx(b, c));
    out.push(tdg(c));
    out.extend(native_cx(a, c));
    out.push(t(c));
    out.extend(native_cx(b, c));
    out.push(tdg(c));
    out.extend(native_cx(a, c));
    out.push(t(b));
    out.push(t(c));
    out.extend(native_cx(a, b));
    out.push(t(a));
    out.push(tdg(b));
    out.extend(native_cx(a, b));
    out
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GateKind::Rx(a) | GateKind::Rz(a) => write!(f, "{}({a}) {:?}", self.kind.name(), self.qubits),
            k => write!(f, "{} {:?}", k.name(), self.qubits),
        }
    }
}

/// Ordered gate list on `n` qubits; matrix is the product in reverse order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CircuitRecord")]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
}

#[derive(Deserialize)]
struct CircuitRecord {
    n: usize,
    gates: Vec<Gate>,
}

impl TryFrom<CircuitRecord> for Circuit {
    type Error = Error;
    fn try_from(r: CircuitRecord) -> Result<Self> {
        Circuit::new(r.n, r.gates)
    }
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<Gate>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!("qubit count must be in 1..={MAX_QUBITS}, got {n}")));
        }
        for g in &gates {
            if let Some(&q) = g.qubits.iter().find(|&&q| q >= n) {
                return Err(Error::invalid(format!("gate {g} uses qubit {q} outside 0..{n}")));
            }
        }
        Ok(Circuit { n, gates })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Circuit::new(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn size(&self) -> usize {
        self.gates.len()
    }

    /// Order-preserving greedy layering: each gate lands one layer after the
    /// latest gate sharing a qubit. An upper bound on the minimum depth.
    pub fn depth(&self) -> usize {
        let mut level = vec![0usize; self.n];
        let mut depth = 0;
        for g in &self.gates {
            let l = g.qubits.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
            for &q in &g.qubits {
                level[q] = l;
            }
            depth = depth.max(l);
        }
        depth
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&q) = gate.qubits.iter().find(|&&q| q >= self.n) {
            return Err(Error::invalid(format!("gate {gate} uses qubit {q} outside 0..{}", self.n)));
        }
        self.gates.push(gate);
        Ok(())
    }

    /// The circuit `V · U`: `u` runs first, then `v`.
    pub fn compose(v: &Circuit, u: &Circuit) -> Result<Circuit> {
        if v.n != u.n {
            return Err(Error::invalid(format!("cannot compose {} and {} qubit circuits", v.n, u.n)));
        }
        let mut gates = u.gates.clone();
        gates.extend(v.gates.iter().cloned());
        Ok(Circuit { n: u.n, gates })
    }

    /// `C†`: reversed gate order with each gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit { n: self.n, gates: self.gates.iter().rev().map(Gate::inverse).collect() }
    }

    pub fn to_native(&self) -> Circuit {
        Circuit { n: self.n, gates: self.gates.iter().flat_map(Gate::to_native).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Iqp,
    CliffordMagic,
    ConjugatedClifford,
    ConstantDepth,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::Iqp, Family::CliffordMagic, Family::ConjugatedClifford, Family::ConstantDepth];

    pub fn name(self) -> &'static str {
        match self {
            Family::Iqp => "iqp",
            Family::CliffordMagic => "clifford_magic",
            Family::ConjugatedClifford => "conjugated_clifford",
            Family::ConstantDepth => "constant_depth",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown family {s:?}")))
    }
}

/// Family-specific data a decomposition was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyParams {
    /// `C = H^⊗n D H^⊗n` with `D` over `{Z, CZ, CCZ}`.
    Iqp { diagonal: Vec<Gate> },
    /// `C = E T^⊗n H^⊗n` with `E` over `{H, S, CZ}`.
    CliffordMagic { clifford: Vec<Gate> },
    /// `C = RX(−θ)^⊗n RZ(−φ)^⊗n E RZ(φ)^⊗n RX(θ)^⊗n`; `None` omits that rotation layer.
    ConjugatedClifford { phi: Option<DyadicAngle>, theta: Option<DyadicAngle>, clifford: Vec<Gate> },
    /// Any circuit whose greedy depth is at most `depth_bound`.
    ConstantDepth { depth_bound: usize },
}

/// A CT-ECS circuit split as `C = V U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtEcsDecomposition {
    params: FamilyParams,
    u_block: Circuit,
    v_block: Circuit,
}

impl CtEcsDecomposition {
    pub fn n(&self) -> usize {
        self.u_block.n
    }

    pub fn family(&self) -> Family {
        match self.params {
            FamilyParams::Iqp { .. } => Family::Iqp,
            FamilyParams::CliffordMagic { .. } => Family::CliffordMagic,
            FamilyParams::ConjugatedClifford { .. } => Family::ConjugatedClifford,
            FamilyParams::ConstantDepth { .. } => Family::ConstantDepth,
        }
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn u_block(&self) -> &Circuit {
        &self.u_block
    }

    pub fn v_block(&self) -> &Circuit {
        &self.v_block
    }

    /// `V · U` as one circuit.
    pub fn composed(&self) -> Circuit {
        Circuit::compose(&self.v_block, &self.u_block).expect("blocks share n")
    }

    /// The family's defining gate sequence, built directly from the params
    /// rather than from the blocks.
    pub fn defining_circuit(&self) -> Circuit {
        let n = self.n();
        let mut gates = Vec::new();
        match &self.params {
            FamilyParams::Iqp { diagonal } => {
                gates.extend((0..n).map(Gate::h));
                gates.extend(diagonal.iter().cloned());
                gates.extend((0..n).map(Gate::h));
            }
            FamilyParams::CliffordMagic { clifford } => {
                gates.extend((0..n).map(Gate::h));
                gates.extend((0..n).map(Gate::t));
                gates.extend(clifford.iter().cloned());
            }
            FamilyParams::ConjugatedClifford { phi, theta, clifford } => {
                if let Some(th) = theta {
                    gates.extend((0..n).map(|q| Gate::rx(*th, q)));
                }
                if let Some(ph) = phi {
                    gates.extend((0..n).map(|q| Gate::rz(*ph, q)));
                }
                gates.extend(clifford.iter().cloned());
                if let Some(ph) = phi {
                    gates.extend((0..n).map(|q| Gate::rz(ph.inverse(), q)));
                }
                if let Some(th) = theta {
                    gates.extend((0..n).map(|q| Gate::rx(th.inverse(), q)));
                }
            }
            FamilyParams::ConstantDepth { .. } => return self.v_block.clone(),
        }
        Circuit { n, gates }
    }
}

fn check_qubits(n: usize, gates: &[Gate]) -> Result<()> {
    Circuit::new(n, gates.to_vec()).map(|_| ())
}

/// IQP circuit `H^⊗n D H^⊗n` split as `U = D H^⊗n`, `V = H^⊗n`.
pub fn build_iqp(n: usize, diagonal: Vec<Gate>) -> Result<CtEcsDecomposition> {
    check_qubits(n, &diagonal)?;
    if let Some(g) = diagonal.iter().find(|g| !matches!(g.kind, GateKind::Z | GateKind::Cz | GateKind::Ccz)) {
        return Err(Error::invalid(format!("IQP diagonal admits Z, CZ, CCZ only, got {g}")));
    }
    let mut u = Circuit::new(n, (0..n).map(Gate::h).collect())?;
    u.gates.extend(diagonal.iter().cloned());
    let v = Circuit::new(n, (0..n).map(Gate::h).collect())?;
    Ok(CtEcsDecomposition { params: FamilyParams::Iqp { diagonal }, u_block: u, v_block: v })
}

/// Clifford Magic circuit `E T^⊗n H^⊗n` split as `U = T^⊗n H^⊗n`, `V = E`.
pub fn build_clifford_magic(n: usize, clifford: Vec<Gate>) -> Result<CtEcsDecomposition> {
    check_qubits(n, &clifford)?;
    if let Some(g) = clifford.iter().find(|g| !matches!(g.kind, GateKind::H | GateKind::S | GateKind::Cz)) {
        return Err(Error::invalid(format!("Clifford block admits H, S, CZ only, got {g}")));
    }
    let mut u = Circuit::new(n, (0..n).map(Gate::h).collect())?;
    u.gates.extend((0..n).map(Gate::t));
    let v = Circuit::new(n, clifford.clone())?;
    Ok(CtEcsDecomposition { params: FamilyParams::CliffordMagic { clifford }, u_block: u, v_block: v })
}

/// Conjugated Clifford circuit split as `U = RZ(φ)^⊗n RX(θ)^⊗n` and
/// `V = RX(−θ)^⊗n RZ(−φ)^⊗n E`. A `None` angle leaves that layer out.
pub fn build_conjugated_clifford(
    n: usize,
    phi: Option<DyadicAngle>,
    theta: Option<DyadicAngle>,
    clifford: Vec<Gate>,
) -> Result<CtEcsDecomposition> {
    check_qubits(n, &clifford)?;
    if let Some(g) = clifford.iter().find(|g| !g.kind.is_clifford()) {
        return Err(Error::invalid(format!("Clifford block admits H, S, CZ, X, Y, Z only, got {g}")));
    }
    let mut u = Circuit::empty(n)?;
    let mut v = Circuit::new(n, clifford.clone())?;
    if let Some(th) = theta {
        u.gates.extend((0..n).map(|q| Gate::rx(th, q)));
    }
    if let Some(ph) = phi {
        u.gates.extend((0..n).map(|q| Gate::rz(ph, q)));
        v.gates.extend((0..n).map(|q| Gate::rz(ph.inverse(), q)));
    }
    if let Some(th) = theta {
        v.gates.extend((0..n).map(|q| Gate::rx(th.inverse(), q)));
    }
    Ok(CtEcsDecomposition {
        params: FamilyParams::ConjugatedClifford { phi, theta, clifford },
        u_block: u,
        v_block: v,
    })
}

/// Constant-depth circuit split as `U = I`, `V = C`.
pub fn build_constant_depth(circuit: Circuit, depth_bound: usize) -> Result<CtEcsDecomposition> {
    let d = circuit.depth();
    if d > depth_bound {
        return Err(Error::invalid(format!("circuit depth {d} exceeds the bound {depth_bound}")));
    }
    Ok(CtEcsDecomposition {
        params: FamilyParams::ConstantDepth { depth_bound },
        u_block: Circuit::empty(circuit.n)?,
        v_block: circuit,
    })
}

/// Knobs for [`random_family_instance`].
///
/// - IQP: every qubit gets `Z` with probability `z_prob`, every pair `CZ`
///   with `cz_prob`, every triple `CCZ` with `ccz_prob`, independently, in
///   lexicographic order of the index tuples.
/// - Clifford Magic: `clifford_gates` gates (default `3n`), each uniformly one
///   of `H(q)`, `S(q)`, `CZ(a, b)` with uniform qubits.
/// - Conjugated Clifford: `φ` and `θ` with uniform sign and `t` uniform in
///   `1..=4`; `E` drawn like the Clifford Magic block.
/// - Constant depth: `depth` layers alternating a full layer of single-qubit
///   gates (uniform over `H, S, T, X, RX, RZ`, rotation `t` uniform in `1..=4`)
///   with a CZ brick layer on pairs `(2i, 2i+1)` then `(2i+1, 2i+2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceParams {
    pub z_prob: f64,
    pub cz_prob: f64,
    pub ccz_prob: f64,
    pub clifford_gates: Option<usize>,
    pub depth: usize,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams { z_prob: 0.5, cz_prob: 0.5, ccz_prob: 0.5, clifford_gates: None, depth: 5 }
    }
}

impl InstanceParams {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("z_prob", self.z_prob), ("cz_prob", self.cz_prob), ("ccz_prob", self.ccz_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        Ok(())
    }
}

fn random_clifford<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<Gate> {
    (0..count)
        .map(|_| {
            let pick = if n < 2 { rng.gen_range(0..2) } else { rng.gen_range(0..3) };
            match pick {
                0 => Gate::h(rng.gen_range(0..n)),
                1 => Gate::s(rng.gen_range(0..n)),
                _ => {
                    let a = rng.gen_range(0..n);
                    let mut b = rng.gen_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    Gate::cz(a, b)
                }
            }
        })
        .collect()
}

fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> DyadicAngle {
    let sign = if rng.gen::<bool>() { 1 } else { -1 };
    DyadicAngle { sign, t: rng.gen_range(1..=4) }
}

/// Seeded random instance of `family` on `n` qubits.
pub fn random_family_instance<R: Rng + ?Sized>(
    family: Family,
    n: usize,
    params: &InstanceParams,
    rng: &mut R,
) -> Result<CtEcsDecomposition> {
    params.validate()?;
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count must be in 1..={MAX_QUBITS}, got {n}")));
    }
    let clifford_gates = params.clifford_gates.unwrap_or(3 * n);
    match family {
        Family::Iqp => {
            let mut d = Vec::new();
            for a in 0..n {
                if rng.gen_bool(params.z_prob) {
                    d.push(Gate::z(a));
                }
            }
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(params.cz_prob) {
                        d.push(Gate::cz(a, b));
                    }
                }
            }
            for a in 0..n {
                for b in a + 1..n {
                    for c in b + 1..n {
                        if rng.gen_bool(params.ccz_prob) {
                            d.push(Gate::ccz(a, b, c));
                        }
                    }
                }
            }
            build_iqp(n, d)
        }
        Family::CliffordMagic => build_clifford_magic(n, random_clifford(n, clifford_gates, rng)),
        Family::ConjugatedClifford => {
            let phi = random_angle(rng);
            let theta = random_angle(rng);
            build_conjugated_clifford(n, Some(phi), Some(theta), random_clifford(n, clifford_gates, rng))
        }
        Family::ConstantDepth => {
            let mut gates = Vec::new();
            for layer in 0..params.depth {
                if layer % 2 == 0 {
                    for q in 0..n {
                        gates.push(match rng.gen_range(0..6) {
                            0 => Gate::h(q),
                            1 => Gate::s(q),
                            2 => Gate::t(q),
                            3 => Gate::x(q),
                            4 => Gate::rx(random_angle(rng), q),
                            _ => Gate::rz(random_angle(rng), q),
                        });
                    }
                } else {
                    let offset = (layer / 2) % 2;
                    let mut a = offset;
                    while a + 1 < n {
                        gates.push(Gate::cz(a, a + 1));
                        a += 2;
                    }
                }
            }
            build_constant_depth(Circuit::new(n, gates)?, params.depth)
        }
    }
}

/// Family JSON: circuit JSON (`n`, `gates` = the composed `V U`) plus `family`
/// and that family's parameters.
#[derive(Serialize, Deserialize)]
struct DecompositionRecord {
    family: Family,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagonal: Option<Vec<Gate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clifford: Option<Vec<Gate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi: Option<DyadicAngle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<DyadicAngle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_bound: Option<usize>,
    gates: Vec<Gate>,
}

impl Serialize for CtEcsDecomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut rec = DecompositionRecord {
            family: self.family(),
            n: self.n(),
            diagonal: None,
            clifford: None,
            phi: None,
            theta: None,
            depth_bound: None,
            gates: self.composed().gates,
        };
        match &self.params {
            FamilyParams::Iqp { diagonal } => rec.diagonal = Some(diagonal.clone()),
            FamilyParams::CliffordMagic { clifford } => rec.clifford = Some(clifford.clone()),
            FamilyParams::ConjugatedClifford { phi, theta, clifford } => {
                rec.phi = *phi;
                rec.theta = *theta;
                rec.clifford = Some(clifford.clone());
            }
            FamilyParams::ConstantDepth { depth_bound } => rec.depth_bound = Some(*depth_bound),
        }
        rec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CtEcsDecomposition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = DecompositionRecord::deserialize(d)?;
        let missing = |field: &str| D::Error::custom(format!("{} family needs \"{field}\"", rec.family));
        let decomp = match rec.family {
            Family::Iqp => build_iqp(rec.n, rec.diagonal.clone().ok_or_else(|| missing("diagonal"))?),
            Family::CliffordMagic => {
                build_clifford_magic(rec.n, rec.clifford.clone().ok_or_else(|| missing("clifford"))?)
            }
            Family::ConjugatedClifford => build_conjugated_clifford(
                rec.n,
                rec.phi,
                rec.theta,
                rec.clifford.clone().ok_or_else(|| missing("clifford"))?,
            ),
            Family::ConstantDepth => {
                let bound = rec.depth_bound.ok_or_else(|| missing("depth_bound"))?;
                Circuit::new(rec.n, rec.gates.clone()).and_then(|c| build_constant_depth(c, bound))
            }
        }
        .map_err(D::Error::custom)?;
        if decomp.composed().gates != rec.gates {
            return Err(D::Error::custom("\"gates\" does not match the family parameters"));
        }
        Ok(decomp)
    }
}

/// Support of a gate list as a mask, for quick intersection tests.
pub(crate) fn gate_mask(n: usize, g: &Gate) -> u64 {
    bits::mask_of(n, &g.qubits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn angle_bounds() {
        assert!(DyadicAngle::new(1, 0).is_err());
        assert!(DyadicAngle::new(2, 3).is_err());
        let a = DyadicAngle::new(-1, 2).unwrap();
        assert_eq!(a.radians(), -PI / 2.0);
        assert_eq!(a.inverse().radians(), PI / 2.0);
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::new(GateKind::Cz, vec![1, 1]).is_err());
        assert!(Gate::new(GateKind::H, vec![0, 1]).is_err());
        assert!(Circuit::new(2, vec![Gate::h(2)]).is_err());
        assert!(Circuit::new(0, vec![]).is_err());
    }

    #[test]
    fn greedy_depth() {
        let layer = Circuit::new(4, vec![Gate::cz(0, 1), Gate::cz(2, 3)]).unwrap();
        assert_eq!(layer.size(), 2);
        assert_eq!(layer.depth(), 1);
        let mut c = layer.clone();
        c.push(Gate::cz(1, 2)).unwrap();
        assert_eq!(c.depth(), 2);
        c.push(Gate::h(0)).unwrap();
        assert_eq!(c.depth(), 2);
        assert_eq!(Circuit::empty(3).unwrap().depth(), 0);
    }

    #[test]
    fn builders_reject_wrong_kinds() {
        assert!(build_iqp(2, vec![Gate::h(0)]).is_err());
        assert!(build_iqp(2, vec![Gate::s(0)]).is_err());
        assert!(build_clifford_magic(2, vec![Gate::t(0)]).is_err());
        assert!(build_conjugated_clifford(2, None, None, vec![Gate::t(0)]).is_err());
        let deep = Circuit::new(2, vec![Gate::h(0), Gate::h(0), Gate::h(0)]).unwrap();
        assert!(build_constant_depth(deep.clone(), 2).is_err());
        assert!(build_constant_depth(deep, 3).is_ok());
    }

    #[test]
    fn random_instances_are_seed_deterministic() {
        for family in Family::ALL {
            let p = InstanceParams::default();
            let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            let a = random_family_instance(family, 6, &p, &mut r1).unwrap();
            let b = random_family_instance(family, 6, &p, &mut r2).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.family(), family);
        }
    }

    #[test]
    fn constant_depth_instances_respect_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = InstanceParams { depth: 5, ..Default::default() };
        for _ in 0..20 {
            let d = random_family_instance(Family::ConstantDepth, 9, &p, &mut rng).unwrap();
            assert!(d.v_block().depth() <= 5);
        }
    }

    #[test]
    fn family_json_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for family in Family::ALL {
            let d = random_family_instance(family, 4, &InstanceParams::default(), &mut rng).unwrap();
            let text = serde_json::to_string(&d).unwrap();
            let back: CtEcsDecomposition = serde_json::from_str(&text).unwrap();
            assert_eq!(back, d);
            // family files double as plain circuit files
            let plain: Circuit = serde_json::from_str(&text).unwrap();
            assert_eq!(plain, d.composed());
        }
    }

    #[test]
    fn circuit_json_schema() {
        let text = r#"{"n": 2, "gates": [{"g": "H", "q": [0]}, {"g": "RZ", "q": [1], "sign": -1, "t": 3}, {"g": "CZ", "q": [0, 1]}]}"#;
        let c: Circuit = serde_json::from_str(text).unwrap();
        assert_eq!(c.gates()[1].kind(), GateKind::Rz(DyadicAngle::new(-1, 3).unwrap()));
        let out = serde_json::to_value(&c).unwrap();
        assert_eq!(out["gates"][1]["t"], 3);
        assert!(out["gates"][0].get("sign").is_none());
        for bad in [
            r#"{"n": 1, "gates": [{"g": "RX", "q": [0], "sign": 1, "t": 0}]}"#,
            r#"{"n": 1, "gates": [{"g": "RX", "q": [0]}]}"#,
            r#"{"n": 1, "gates": [{"g": "H", "q": [0], "t": 2}]}"#,
            r#"{"n": 1, "gates": [{"g": "U3", "q": [0]}]}"#,
            r#"{"n": 1, "gates": [{"g": "H", "q": [1]}]}"#,
        ] {
            assert!(serde_json::from_str::<Circuit>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn tampered_family_file_is_rejected() {
        let d = build_iqp(2, vec![Gate::cz(0, 1)]).unwrap();
        let mut v = serde_json::to_value(&d).unwrap();
        v["gates"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<CtEcsDecomposition>(v).is_err());
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("clifford-magic".parse::<Family>().unwrap(), Family::CliffordMagic);
        assert_eq!("IQP".parse::<Family>().unwrap(), Family::Iqp);
        assert!("surface".parse::<Family>().is_err());
    }
}
