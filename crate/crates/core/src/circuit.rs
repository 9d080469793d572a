//! CNOT+T circuits: parsing, phase-polynomial extraction, signature tensors,
//! resynthesis from factorizations and Clifford-equivalence checks.

use std::fmt;

use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVec, MultilinearPoly8, SymmetricTensor, MAX_QUBITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Cnot { control: usize, target: usize },
    T(usize),
    Tdg(usize),
    S(usize),
    Sdg(usize),
    Z(usize),
    Cz(usize, usize),
    Ccz(usize, usize, usize),
    X(usize),
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::Cnot { .. } => "CNOT",
            Gate::T(_) => "T",
            Gate::Tdg(_) => "Tdg",
            Gate::S(_) => "S",
            Gate::Sdg(_) => "Sdg",
            Gate::Z(_) => "Z",
            Gate::Cz(..) => "CZ",
            Gate::Ccz(..) => "CCZ",
            Gate::X(_) => "X",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Cnot { control, target } => vec![control, target],
            Gate::T(q) | Gate::Tdg(q) | Gate::S(q) | Gate::Sdg(q) | Gate::Z(q) | Gate::X(q) => {
                vec![q]
            }
            Gate::Cz(a, b) => vec![a, b],
            Gate::Ccz(a, b, c) => vec![a, b, c],
        }
    }

    fn from_parts(name: &str, q: &[usize], line: usize) -> Result<Gate> {
        let arity_err = |want: usize| Error::Parse {
            line,
            msg: format!("{name} takes {want} qubit(s), got {}", q.len()),
        };
        let kind = name.to_ascii_uppercase();
        let want = match kind.as_str() {
            "CNOT" | "CX" | "CZ" => 2,
            "CCZ" => 3,
            "T" | "TDG" | "S" | "SDG" | "Z" | "X" => 1,
            _ => return Err(Error::UnknownGate { line, name: name.to_string() }),
        };
        if q.len() != want {
            return Err(arity_err(want));
        }
        Ok(match kind.as_str() {
            "CNOT" | "CX" => Gate::Cnot { control: q[0], target: q[1] },
            "CZ" => Gate::Cz(q[0], q[1]),
            "CCZ" => Gate::Ccz(q[0], q[1], q[2]),
            "T" => Gate::T(q[0]),
            "TDG" => Gate::Tdg(q[0]),
            "S" => Gate::S(q[0]),
            "SDG" => Gate::Sdg(q[0]),
            "Z" => Gate::Z(q[0]),
            _ => Gate::X(q[0]),
        })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Circuit> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::UnsupportedQubits(n_qubits));
        }
        Ok(Circuit { n_qubits, gates: Vec::new() })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Appends a gate after checking its operands.
    pub fn push(&mut self, gate: Gate) -> Result<()> {
        check_operands(&gate, self.n_qubits, 0)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch(self.n_qubits, other.n_qubits));
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    pub fn t_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::T(_) | Gate::Tdg(_))).count()
    }

    /// Parses the line-oriented circuit format (`qubits N`, then one gate per
    /// line). Gate names are case-insensitive; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Circuit> {
        let mut circuit: Option<Circuit> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let head = fields.next().unwrap_or_default();
            let args: Vec<&str> = fields.collect();
            let Some(c) = circuit.as_mut() else {
                if !head.eq_ignore_ascii_case("qubits") || args.len() != 1 {
                    return Err(Error::MissingHeader { line });
                }
                let n: usize = args[0]
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: "bad qubit count".into() })?;
                if !(1..=MAX_QUBITS).contains(&n) {
                    return Err(Error::Parse { line, msg: format!("qubit count {n} outside 1..=16") });
                }
                circuit = Some(Circuit { n_qubits: n, gates: Vec::new() });
                continue;
            };
            let qubits: Vec<usize> = args
                .iter()
                .map(|a| {
                    a.parse::<usize>()
                        .map_err(|_| Error::Parse { line, msg: format!("bad qubit index `{a}`") })
                })
                .collect::<Result<_>>()?;
            let gate = Gate::from_parts(head, &qubits, line)?;
            check_operands(&gate, c.n_qubits, line)?;
            c.gates.push(gate);
        }
        circuit.ok_or(Error::MissingHeader { line: 1 })
    }

    /// Exact phase polynomial by enumerating all 2^N basis inputs.
    pub fn phase_polynomial(&self) -> Result<PhasePoly> {
        let n = self.n_qubits;
        let mut wires: Vec<BitVec> = (0..n).map(|i| BitVec::unit(i, n)).collect();
        let mut offset = BitVec::zero(n);
        let mut table = vec![0u8; 1 << n];
        let wire_value = |wires: &[BitVec], offset: &BitVec, q: usize, x: u32| -> u8 {
            (((wires[q].bits() & x).count_ones() & 1) as u8) ^ offset.get(q) as u8
        };
        let add_phase = |table: &mut Vec<u8>, weight: u8, qs: &[usize], wires: &[BitVec], offset: &BitVec| {
            for (x, entry) in table.iter_mut().enumerate() {
                let prod = qs.iter().all(|&q| wire_value(wires, offset, q, x as u32) == 1);
                if prod {
                    *entry = (*entry + weight) % 8;
                }
            }
        };
        for gate in &self.gates {
            match *gate {
                Gate::Cnot { control, target } => {
                    wires[target] = wires[target].xor(&wires[control]);
                    let c = offset.get(control) ^ offset.get(target);
                    offset.set(target, c);
                }
                Gate::X(q) => {
                    let c = !offset.get(q);
                    offset.set(q, c);
                }
                Gate::T(q) => add_phase(&mut table, 1, &[q], &wires, &offset),
                Gate::Tdg(q) => add_phase(&mut table, 7, &[q], &wires, &offset),
                Gate::S(q) => add_phase(&mut table, 2, &[q], &wires, &offset),
                Gate::Sdg(q) => add_phase(&mut table, 6, &[q], &wires, &offset),
                Gate::Z(q) => add_phase(&mut table, 4, &[q], &wires, &offset),
                Gate::Cz(a, b) => add_phase(&mut table, 4, &[a, b], &wires, &offset),
                Gate::Ccz(a, b, c) => add_phase(&mut table, 4, &[a, b, c], &wires, &offset),
            }
        }
        let mut linear_part = BitMatrix::zeros(n, n);
        for (r, w) in wires.iter().enumerate() {
            for c in w.ones() {
                linear_part.set(r, c, true);
            }
        }
        Ok(PhasePoly { linear_part, offset, phase: MultilinearPoly8::mobius_from_truth_table(&table)? })
    }

    /// Signature tensor via the exact truth-table path.
    pub fn signature_tensor(&self) -> Result<SymmetricTensor> {
        let t = self.phase_polynomial()?.phase.to_tensor();
        debug_assert!(
            !matches!(t, Err(Error::NonCliffordResidue { .. })),
            "CNOT+T circuit produced a non-Clifford residue"
        );
        t
    }

    /// Parities whose cubes XOR to the signature tensor: one per T/Tdg gate
    /// and seven per CCZ (the nonzero combinations of its three parities).
    /// Wire offsets from X gates are dropped since they never change the
    /// tensor.
    pub fn t_parities(&self) -> Vec<BitVec> {
        let n = self.n_qubits;
        let mut wires: Vec<BitVec> = (0..n).map(|i| BitVec::unit(i, n)).collect();
        let mut out = Vec::new();
        for gate in &self.gates {
            match *gate {
                Gate::Cnot { control, target } => wires[target] = wires[target].xor(&wires[control]),
                Gate::T(q) | Gate::Tdg(q) => out.push(wires[q]),
                Gate::Ccz(a, b, c) => {
                    let (pa, pb, pc) = (wires[a], wires[b], wires[c]);
                    for sel in 1u32..8 {
                        let mut v = BitVec::zero(n);
                        for (bit, p) in [pa, pb, pc].iter().enumerate() {
                            if (sel >> bit) & 1 == 1 {
                                v = v.xor(p);
                            }
                        }
                        if !v.is_zero() {
                            out.push(v);
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Signature tensor by XOR-accumulating cubes of the T parities.
    pub fn streaming_signature_tensor(&self) -> SymmetricTensor {
        let mut t = SymmetricTensor::zero(self.n_qubits);
        for p in self.t_parities() {
            t.xor_cube(&p);
        }
        t
    }

    /// One CNOT ladder + T + inverse ladder per factor, pivoting on the lowest
    /// set bit. The linear part is the identity.
    pub fn from_factors(factors: &[BitVec], n: usize) -> Result<Circuit> {
        let mut c = Circuit::new(n)?;
        for u in factors {
            if u.len() != n {
                return Err(Error::DimensionMismatch(u.len(), n));
            }
            let pivot = u.lowest().ok_or(Error::ZeroFactor)?;
            let others: Vec<usize> = u.ones().filter(|&q| q != pivot).collect();
            for &q in &others {
                c.gates.push(Gate::Cnot { control: q, target: pivot });
            }
            c.gates.push(Gate::T(pivot));
            for &q in others.iter().rev() {
                c.gates.push(Gate::Cnot { control: q, target: pivot });
            }
        }
        Ok(c)
    }

    /// CNOT-only circuit whose linear part (row r = parity on wire r) is `a`.
    pub fn synthesize_linear(a: &BitMatrix) -> Result<Circuit> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch(a.rows(), a.cols()));
        }
        let mut m = a.clone();
        // Row op `row_t ^= row_c` is CNOT(c, t) applied after the circuit.
        let mut ops = Vec::new();
        for col in 0..n {
            if !m.get(col, col) {
                let src = (col + 1..n).find(|&r| m.get(r, col)).ok_or(Error::SingularMatrix)?;
                m.add_row(src, col);
                ops.push((src, col));
            }
            for r in 0..n {
                if r != col && m.get(r, col) {
                    m.add_row(col, r);
                    ops.push((col, r));
                }
            }
        }
        debug_assert!(m.is_identity());
        let mut c = Circuit::new(n)?;
        for &(control, target) in ops.iter().rev() {
            c.gates.push(Gate::Cnot { control, target });
        }
        Ok(c)
    }

    /// Rebuilds a circuit from a factorization, then appends CNOTs and X gates
    /// so the linear part and offsets match `target`.
    pub fn reconstruct(factors: &[BitVec], target: &PhasePoly) -> Result<Circuit> {
        let n = target.offset.len();
        let mut c = Circuit::from_factors(factors, n)?;
        c.extend(&Circuit::synthesize_linear(&target.linear_part)?)?;
        for q in target.offset.ones() {
            c.gates.push(Gate::X(q));
        }
        Ok(c)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits {}", self.n_qubits)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

fn check_operands(gate: &Gate, n: usize, line: usize) -> Result<()> {
    let qs = gate.qubits();
    for (i, &q) in qs.iter().enumerate() {
        if q >= n {
            return Err(Error::QubitOutOfRange { line, qubit: q, n });
        }
        if qs[..i].contains(&q) {
            return Err(Error::DuplicateOperand { line, qubit: q });
        }
    }
    Ok(())
}

/// Affine linear part plus mod-8 phase function of a CNOT+T circuit:
/// input `x` maps to `A x ⊕ offset` with phase ω^{phase(x)}, ω = e^{iπ/4}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasePoly {
    pub linear_part: BitMatrix,
    pub offset: BitVec,
    pub phase: MultilinearPoly8,
}

impl PhasePoly {
    pub fn n(&self) -> usize {
        self.offset.len()
    }

    /// Equal up to Clifford phases: same affine part, and every coefficient
    /// difference vanishes mod 2 (degree 1), mod 4 (degree 2) or mod 8
    /// (degree >= 3). The constant term is a global phase and is ignored.
    pub fn clifford_equivalent(&self, other: &PhasePoly) -> Result<bool> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch(self.n(), other.n()));
        }
        if self.linear_part != other.linear_part || self.offset != other.offset {
            return Ok(false);
        }
        let mut masks: Vec<u32> = self.phase.terms().map(|(m, _)| m).collect();
        masks.extend(other.phase.terms().map(|(m, _)| m));
        Ok(masks.into_iter().all(|m| {
            let d = (self.phase.coeff(m) + 8 - other.phase.coeff(m)) % 8;
            match m.count_ones() {
                0 => true,
                1 => d % 2 == 0,
                2 => d % 4 == 0,
                _ => d == 0,
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVec {
        BitVec::parse(s).unwrap()
    }

    #[test]
    fn parse_basic() {
        let c = Circuit::parse("qubits 2\nCNOT 0 1\nT 1").unwrap();
        assert_eq!(c.n_qubits(), 2);
        assert_eq!(c.gates(), &[Gate::Cnot { control: 0, target: 1 }, Gate::T(1)]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Circuit::parse("qubits 1\nH 0"), Err(Error::UnknownGate { line: 2, .. })));
        assert!(matches!(
            Circuit::parse("qubits 2\nCZ 1 1"),
            Err(Error::DuplicateOperand { line: 2, qubit: 1 })
        ));
        assert!(matches!(
            Circuit::parse("qubits 2\nT 2"),
            Err(Error::QubitOutOfRange { line: 2, qubit: 2, n: 2 })
        ));
        assert!(matches!(Circuit::parse("T 0"), Err(Error::MissingHeader { line: 1 })));
        assert!(matches!(Circuit::parse("# nothing\n"), Err(Error::MissingHeader { .. })));
    }

    #[test]
    fn parse_is_case_insensitive_with_comments() {
        let c = Circuit::parse("# demo\nQUBITS 3\nccz 0 1 2 # toffoli core\ntdg 2\n").unwrap();
        assert_eq!(c.gates(), &[Gate::Ccz(0, 1, 2), Gate::Tdg(2)]);
        assert_eq!(Circuit::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn phase_of_single_t() {
        let p = Circuit::parse("qubits 1\nT 0").unwrap().phase_polynomial().unwrap();
        assert_eq!(p.phase, MultilinearPoly8::from_terms(1, &[(1, 1)]));
        assert!(p.linear_part.is_identity());
    }

    #[test]
    fn phase_of_parity_t() {
        let p = Circuit::parse("qubits 2\nCNOT 0 1\nT 1").unwrap().phase_polynomial().unwrap();
        assert_eq!(p.phase, MultilinearPoly8::from_terms(2, &[(1, 1), (2, 1), (3, 6)]));
    }

    #[test]
    fn t_squared_is_s() {
        let c = Circuit::parse("qubits 1\nT 0\nT 0").unwrap();
        let p = c.phase_polynomial().unwrap();
        assert_eq!(p.phase, MultilinearPoly8::from_terms(1, &[(1, 2)]));
        assert!(c.signature_tensor().unwrap().is_zero());
    }

    #[test]
    fn signature_examples() {
        let c = Circuit::parse("qubits 2\nCNOT 0 1\nT 1").unwrap();
        assert_eq!(c.signature_tensor().unwrap(), SymmetricTensor::cube(&bv("11")).unwrap());
        let c = Circuit::parse("qubits 1\nT 0\nX 0\nT 0").unwrap();
        assert!(c.signature_tensor().unwrap().is_zero());
        let c = Circuit::parse("qubits 3\nCCZ 0 1 2").unwrap();
        assert_eq!(c.signature_tensor().unwrap().canonical_entries(), vec![(0, 1, 2)]);
        assert_eq!(c.streaming_signature_tensor(), c.signature_tensor().unwrap());
    }

    #[test]
    fn from_factors_examples() {
        let c = Circuit::from_factors(&[bv("1")], 1).unwrap();
        assert_eq!(c.gates(), &[Gate::T(0)]);
        let c = Circuit::from_factors(&[bv("11")], 2).unwrap();
        assert_eq!(
            c.gates(),
            &[Gate::Cnot { control: 1, target: 0 }, Gate::T(0), Gate::Cnot { control: 1, target: 0 }]
        );
        let u = bv("1011");
        let c = Circuit::from_factors(&[u, u], 4).unwrap();
        assert!(c.signature_tensor().unwrap().is_zero());
        assert!(matches!(Circuit::from_factors(&[BitVec::zero(2)], 2), Err(Error::ZeroFactor)));
    }

    #[test]
    fn synthesize_linear_examples() {
        assert!(Circuit::synthesize_linear(&BitMatrix::identity(3)).unwrap().gates().is_empty());
        let a = BitMatrix::from_rows(&[vec![true, false], vec![true, true]]);
        let c = Circuit::synthesize_linear(&a).unwrap();
        assert_eq!(c.gates(), &[Gate::Cnot { control: 0, target: 1 }]);
        assert_eq!(c.phase_polynomial().unwrap().linear_part, a);
        let s = BitMatrix::from_rows(&[vec![true, true], vec![true, true]]);
        assert!(matches!(Circuit::synthesize_linear(&s), Err(Error::SingularMatrix)));
    }

    #[test]
    fn clifford_equivalence_examples() {
        let empty = Circuit::new(1).unwrap().phase_polynomial().unwrap();
        let tt = Circuit::parse("qubits 1\nT 0\nT 0").unwrap().phase_polynomial().unwrap();
        let t = Circuit::parse("qubits 1\nT 0").unwrap().phase_polynomial().unwrap();
        assert!(tt.clifford_equivalent(&tt).unwrap());
        assert!(tt.clifford_equivalent(&empty).unwrap());
        assert!(!t.clifford_equivalent(&empty).unwrap());
        let two = Circuit::new(2).unwrap().phase_polynomial().unwrap();
        assert!(matches!(t.clifford_equivalent(&two), Err(Error::DimensionMismatch(1, 2))));
    }

    #[test]
    fn reconstruct_matches_original() {
        let c = Circuit::parse("qubits 3\nX 1\nCNOT 0 1\nT 1\nCNOT 1 2\nTdg 2\nCCZ 0 1 2\nS 0").unwrap();
        let target = c.phase_polynomial().unwrap();
        let factors = c.t_parities();
        let r = Circuit::reconstruct(&factors, &target).unwrap();
        assert!(r.phase_polynomial().unwrap().clifford_equivalent(&target).unwrap());
    }
}
