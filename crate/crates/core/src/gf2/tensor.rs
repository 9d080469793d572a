use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{BitVec, MAX_QUBITS};

/// Magic header of the dense binary tensor format.
pub const BINARY_MAGIC: &[u8; 8] = b"SIGT0001";

/// Symmetric N×N×N tensor over GF(2).
///
/// Stored as N² rows of 16-bit masks: bit `k` of row `(i, j)` is entry
/// `(i, j, k)`. Every mutation writes all permuted index triples.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SymmetricTensor {
    n: usize,
    rows: Vec<u16>,
}

impl SymmetricTensor {
    /// Zero tensor on `n` qubits. Panics unless `1 <= n <= 16`.
    pub fn zero(n: usize) -> Self {
        assert!((1..=MAX_QUBITS).contains(&n), "tensor dimension {n} outside 1..=16");
        SymmetricTensor { n, rows: vec![0; n * n] }
    }

    pub fn try_zero(n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::UnsupportedQubits(n));
        }
        Ok(Self::zero(n))
    }

    /// The rank-1 term u⊗u⊗u.
    pub fn cube(u: &BitVec) -> Result<Self> {
        if u.is_zero() {
            return Err(Error::ZeroFactor);
        }
        let mut t = Self::try_zero(u.len())?;
        t.xor_cube(u);
        Ok(t)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        (self.rows[i * self.n + j] >> k) & 1 == 1
    }

    /// Fiber `(i, j, ·)` as a bitmask over `k`.
    #[inline]
    pub fn fiber(&self, i: usize, j: usize) -> u32 {
        self.rows[i * self.n + j] as u32
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        for (a, b, c) in permutations(i, j, k) {
            let row = &mut self.rows[a * self.n + b];
            if value {
                *row |= 1 << c;
            } else {
                *row &= !(1 << c);
            }
        }
    }

    /// In-place `self ⊕= u⊗u⊗u`. A zero `u` leaves the tensor unchanged.
    #[inline]
    pub fn xor_cube(&mut self, u: &BitVec) {
        debug_assert_eq!(u.len(), self.n);
        let bits = u.bits() as u16;
        let mut a = bits;
        while a != 0 {
            let i = a.trailing_zeros() as usize;
            a &= a - 1;
            let mut b = bits;
            while b != 0 {
                let j = b.trailing_zeros() as usize;
                b &= b - 1;
                self.rows[i * self.n + j] ^= bits;
            }
        }
    }

    pub fn xor(&self, other: &SymmetricTensor) -> Result<SymmetricTensor> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a ^ b).collect();
        Ok(SymmetricTensor { n: self.n, rows })
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    /// Set entries with `i <= j <= k`.
    pub fn canonical_entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                let row = self.rows[i * self.n + j] >> j;
                for k in ones(row as u32) {
                    out.push((i, j, j + k));
                }
            }
        }
        out
    }

    /// Number of set canonical entries.
    pub fn weight(&self) -> u32 {
        let mut w = 0;
        for i in 0..self.n {
            for j in i..self.n {
                w += (self.rows[i * self.n + j] >> j).count_ones();
            }
        }
        w
    }

    /// Checks that entries `(i,i,j)` and `(i,j,j)` agree, a property of every
    /// sum of cubes and of every tensor built from a phase polynomial.
    pub fn check_waring(&self) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, i, j) != self.get(i, j, j) {
                    return Err(Error::NotWaring(i, j));
                }
            }
        }
        Ok(())
    }

    /// Relabels qubit `q` as `perm[q]`.
    pub fn permute(&self, perm: &[usize]) -> SymmetricTensor {
        assert_eq!(perm.len(), self.n);
        let mut out = SymmetricTensor::zero(self.n);
        for (i, j, k) in self.canonical_entries() {
            out.set(perm[i], perm[j], perm[k], true);
        }
        out
    }

    /// Embeds into a larger qubit count; new qubits carry no entries.
    pub fn pad_to(&self, n: usize) -> Result<SymmetricTensor> {
        if n < self.n {
            return Err(Error::DimensionMismatch(self.n, n));
        }
        let mut out = Self::try_zero(n)?;
        for i in 0..self.n {
            for j in 0..self.n {
                out.rows[i * n + j] = self.rows[i * self.n + j];
            }
        }
        Ok(out)
    }

    /// Monomials recovered from the tensor's mod-2 encoding: linear terms
    /// from the diagonal, quadratic from `(i,i,j)`, cubic from distinct triples.
    pub fn monomials(&self) -> Monomials {
        let mut m = Monomials::default();
        for i in 0..self.n {
            if self.get(i, i, i) {
                m.linear.push(i);
            }
            for j in i + 1..self.n {
                if self.get(i, i, j) {
                    m.quadratic.push((i, j));
                }
                for k in ones((self.rows[i * self.n + j] as u32) >> (j + 1)) {
                    m.cubic.push((i, j, j + 1 + k));
                }
            }
        }
        m
    }

    /// Upper bound on the symmetric rank: 1 per linear, 3 per quadratic and
    /// 7 per cubic monomial.
    pub fn naive_completion_bound(&self) -> u32 {
        let mut total = 0;
        for i in 0..self.n {
            let diag = self.rows[i * self.n + i] as u32;
            total += (diag >> i) & 1;
            total += 3 * (diag >> (i + 1)).count_ones();
            for j in i + 1..self.n {
                total += 7 * ((self.rows[i * self.n + j] as u32) >> (j + 1)).count_ones();
            }
        }
        total
    }

    /// Factor list realizing the naive bound. Its cubes XOR to `self` when the
    /// tensor is a sum of cubes.
    pub fn monomial_factorization(&self) -> Vec<BitVec> {
        let n = self.n;
        let m = self.monomials();
        let mut out = Vec::with_capacity(self.naive_completion_bound() as usize);
        for &i in &m.linear {
            out.push(BitVec::unit(i, n));
        }
        for &(i, j) in &m.quadratic {
            out.extend(span_nonzero(&[i, j], n));
        }
        for &(i, j, k) in &m.cubic {
            out.extend(span_nonzero(&[i, j, k], n));
        }
        out
    }

    /// Rank of the n × n² flattening. Each cube adds a rank-one term to it,
    /// so this is a lower bound on the number of cubes.
    pub fn flattening_rank(&self) -> u32 {
        let n = self.n;
        let rows: Vec<Vec<bool>> =
            (0..n).map(|i| (0..n).flat_map(|j| (0..n).map(move |k| (i, j, k))).map(|(i, j, k)| self.get(i, j, k)).collect()).collect();
        if n == 0 {
            return 0;
        }
        super::BitMatrix::from_rows(&rows).rank() as u32
    }

    /// Canonical text format: `N` then one `i j k` line per canonical entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (i, j, k) in self.canonical_entries() {
            let _ = writeln!(s, "{i} {j} {k}");
        }
        s
    }

    /// Parses the text format. `#` starts a comment; index triples in any
    /// order are closed under symmetry.
    pub fn from_text(text: &str) -> Result<SymmetricTensor> {
        let mut tensor: Option<SymmetricTensor> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
            let fields: Vec<usize> = line
                .split_whitespace()
                .map(|f| f.parse::<usize>().map_err(|_| parse_err("expected integers")))
                .collect::<Result<_>>()?;
            match (&mut tensor, fields.as_slice()) {
                (None, &[n]) => tensor = Some(Self::try_zero(n)?),
                (None, _) => return Err(parse_err("expected qubit count on first line")),
                (Some(t), &[i, j, k]) => {
                    if i.max(j).max(k) >= t.n {
                        return Err(parse_err("index out of range"));
                    }
                    t.set(i, j, k, true);
                }
                (Some(_), _) => return Err(parse_err("expected `i j k`")),
            }
        }
        tensor.ok_or(Error::Parse { line: 1, msg: "empty tensor file".into() })
    }

    /// Dense binary format: magic, one byte N, then N² little-endian u16 fibers.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 2 * self.rows.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.push(self.n as u8);
        for r in &self.rows {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SymmetricTensor> {
        let bad = |msg: &str| Error::Parse { line: 0, msg: msg.to_string() };
        if bytes.len() < 9 || &bytes[..8] != BINARY_MAGIC {
            return Err(bad("missing SIGT0001 header"));
        }
        let n = bytes[8] as usize;
        let mut t = Self::try_zero(n)?;
        let body = &bytes[9..];
        if body.len() != 2 * n * n {
            return Err(bad("binary tensor body has wrong length"));
        }
        for i in 0..n {
            for j in 0..n {
                let o = 2 * (i * n + j);
                let fiber = u16::from_le_bytes([body[o], body[o + 1]]) as u32;
                for k in ones(fiber) {
                    if k >= n {
                        return Err(bad("entry index out of range"));
                    }
                    t.set(i, j, k, true);
                }
            }
        }
        Ok(t)
    }

    /// Loads either format, detected by the binary magic.
    pub fn load(path: &Path) -> Result<SymmetricTensor> {
        let bytes = std::fs::read(path)?;
        let t = if bytes.starts_with(BINARY_MAGIC) {
            Self::from_bytes(&bytes)?
        } else {
            Self::from_text(&String::from_utf8_lossy(&bytes))?
        };
        t.check_waring()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Monomials {
    pub linear: Vec<usize>,
    pub quadratic: Vec<(usize, usize)>,
    pub cubic: Vec<(usize, usize, usize)>,
}

fn permutations(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
}

fn ones(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (mask != 0).then(|| {
            let b = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            b
        })
    })
}

/// The nonzero vectors of the span of the given unit vectors.
fn span_nonzero(indices: &[usize], n: usize) -> Vec<BitVec> {
    let k = indices.len();
    (1u32..(1 << k))
        .map(|sel| {
            let mut v = BitVec::zero(n);
            for (b, &i) in indices.iter().enumerate() {
                if (sel >> b) & 1 == 1 {
                    v.set(i, true);
                }
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVec {
        BitVec::parse(s).unwrap()
    }

    #[test]
    fn cube_of_basis_vector_is_single_entry() {
        let t = SymmetricTensor::cube(&bv("100")).unwrap();
        assert_eq!(t.canonical_entries(), vec![(0, 0, 0)]);
    }

    #[test]
    fn cube_of_two_bit_vector_fills_subcube() {
        let t = SymmetricTensor::cube(&bv("110")).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(t.get(i, j, k), i < 2 && j < 2 && k < 2);
                }
            }
        }
    }

    #[test]
    fn cube_of_zero_fails() {
        assert!(matches!(SymmetricTensor::cube(&BitVec::zero(3)), Err(Error::ZeroFactor)));
    }

    #[test]
    fn xor_is_involutive_and_has_identity() {
        let a = SymmetricTensor::cube(&bv("1101")).unwrap();
        assert!(a.xor(&a).unwrap().is_zero());
        assert_eq!(a.xor(&SymmetricTensor::zero(4)).unwrap(), a);
        let b = SymmetricTensor::zero(3);
        assert!(matches!(a.xor(&b), Err(Error::DimensionMismatch(4, 3))));
    }

    #[test]
    fn disjoint_diagonal_cubes() {
        let t = SymmetricTensor::cube(&bv("100"))
            .unwrap()
            .xor(&SymmetricTensor::cube(&bv("010")).unwrap())
            .unwrap();
        assert_eq!(t.canonical_entries(), vec![(0, 0, 0), (1, 1, 1)]);
    }

    #[test]
    fn flattening_rank_examples() {
        assert_eq!(SymmetricTensor::zero(3).flattening_rank(), 0);
        assert_eq!(SymmetricTensor::cube(&bv("111")).unwrap().flattening_rank(), 1);
        let mut t = SymmetricTensor::cube(&bv("100")).unwrap();
        t.xor_cube(&bv("011"));
        assert_eq!(t.flattening_rank(), 2);
    }

    #[test]
    fn naive_bound_examples() {
        assert_eq!(SymmetricTensor::zero(3).naive_completion_bound(), 0);
        assert_eq!(SymmetricTensor::cube(&bv("100")).unwrap().naive_completion_bound(), 1);
        assert_eq!(SymmetricTensor::cube(&bv("110")).unwrap().naive_completion_bound(), 5);
        assert_eq!(SymmetricTensor::cube(&bv("111")).unwrap().naive_completion_bound(), 3 + 9 + 7);
    }

    #[test]
    fn monomial_factorization_reconstructs() {
        let mut t = SymmetricTensor::zero(5);
        for u in ["11100", "01011", "10001", "11111"] {
            t.xor_cube(&bv(u));
        }
        let f = t.monomial_factorization();
        assert_eq!(f.len() as u32, t.naive_completion_bound());
        let mut acc = SymmetricTensor::zero(5);
        for u in &f {
            acc.xor_cube(u);
        }
        assert_eq!(acc, t);
    }

    #[test]
    fn text_round_trip_and_closure() {
        let mut t = SymmetricTensor::zero(4);
        t.xor_cube(&bv("1011"));
        t.xor_cube(&bv("0110"));
        assert_eq!(SymmetricTensor::from_text(&t.to_text()).unwrap(), t);
        let closed = SymmetricTensor::from_text("# header\n3\n2 0 1\n").unwrap();
        assert!(closed.get(0, 1, 2) && closed.get(2, 1, 0));
        assert!(SymmetricTensor::from_text("3\n0 0 3\n").is_err());
    }

    #[test]
    fn binary_round_trip() {
        let mut t = SymmetricTensor::zero(7);
        t.xor_cube(&bv("1011001"));
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..8], BINARY_MAGIC);
        assert_eq!(SymmetricTensor::from_bytes(&bytes).unwrap(), t);
        assert!(SymmetricTensor::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn waring_check_rejects_unbalanced_pairs() {
        let mut t = SymmetricTensor::zero(2);
        t.set(0, 0, 1, true);
        assert!(matches!(t.check_waring(), Err(Error::NotWaring(0, 1))));
    }

    #[test]
    fn permute_moves_entries() {
        let t = SymmetricTensor::cube(&bv("110")).unwrap();
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p, SymmetricTensor::cube(&bv("101")).unwrap());
    }
}
