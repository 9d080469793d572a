use std::fmt;

use crate::error::{Error, Result};

use super::MAX_QUBITS;

/// Fixed-width GF(2) vector of at most 16 bits. Bit `i` is qubit `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    bits: u16,
    len: u8,
}

impl BitVec {
    pub fn zero(len: usize) -> Self {
        assert!(len <= MAX_QUBITS, "BitVec length {len} exceeds {MAX_QUBITS}");
        BitVec { bits: 0, len: len as u8 }
    }

    /// Builds a vector from a bitmask; bits at or above `len` are dropped.
    pub fn from_bits(bits: u32, len: usize) -> Self {
        assert!(len <= MAX_QUBITS, "BitVec length {len} exceeds {MAX_QUBITS}");
        let mask = if len == 16 { 0xffff } else { (1u32 << len) - 1 };
        BitVec { bits: (bits & mask) as u16, len: len as u8 }
    }

    pub fn unit(i: usize, len: usize) -> Self {
        assert!(i < len);
        Self::from_bits(1 << i, len)
    }

    pub fn from_indices(indices: &[usize], len: usize) -> Self {
        let mut v = Self::zero(len);
        for &i in indices {
            v.set(i, true);
        }
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits as u32
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        (self.bits >> i) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len(), "bit {i} out of range for length {}", self.len);
        if value {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Index of the lowest set bit.
    pub fn lowest(&self) -> Option<usize> {
        (self.bits != 0).then(|| self.bits.trailing_zeros() as usize)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.get(i))
    }

    #[inline]
    pub fn xor(&self, other: &BitVec) -> BitVec {
        debug_assert_eq!(self.len, other.len);
        BitVec { bits: self.bits ^ other.bits, len: self.len }
    }

    /// GF(2) inner product.
    #[inline]
    pub fn dot(&self, other: &BitVec) -> bool {
        (self.bits & other.bits).count_ones() & 1 == 1
    }

    /// Same bits viewed at another width; fails if set bits would be lost.
    pub fn resize(&self, len: usize) -> Result<BitVec> {
        let v = BitVec::from_bits(self.bits(), len);
        if v.bits != self.bits {
            return Err(Error::DimensionMismatch(self.len(), len));
        }
        Ok(v)
    }

    /// Parses a 0/1 string where the first character is qubit 0.
    pub fn parse(s: &str) -> Option<BitVec> {
        let s = s.trim();
        if s.is_empty() || s.len() > MAX_QUBITS {
            return None;
        }
        let mut v = BitVec::zero(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                _ => return None,
            }
        }
        Some(v)
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

/// All nonzero vectors of length `n`, ordered by bitmask value.
pub fn all_nonzero(n: usize) -> impl Iterator<Item = BitVec> {
    (1u32..(1u32 << n)).map(move |b| BitVec::from_bits(b, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_puts_qubit_zero_first() {
        let v = BitVec::from_indices(&[0, 2], 4);
        assert_eq!(v.to_string(), "1010");
        assert_eq!(BitVec::parse("1010"), Some(v));
        assert_eq!(BitVec::parse("10a0"), None);
    }

    #[test]
    fn resize_rejects_lost_bits() {
        let v = BitVec::from_indices(&[3], 5);
        assert!(v.resize(8).is_ok());
        assert!(v.resize(3).is_err());
    }

    #[test]
    fn dot_and_xor() {
        let a = BitVec::from_bits(0b0111, 4);
        let b = BitVec::from_bits(0b0101, 4);
        assert!(!a.dot(&b));
        assert_eq!(a.xor(&b).bits(), 0b0010);
        assert_eq!(all_nonzero(3).count(), 7);
    }
}
