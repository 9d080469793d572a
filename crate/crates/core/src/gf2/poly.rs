use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{SymmetricTensor, MAX_QUBITS};

/// Multilinear polynomial with coefficients in Z/8, keyed by variable-subset
/// bitmask. Zero coefficients are never stored. The empty subset is the
/// global phase.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MultilinearPoly8 {
    n: usize,
    coeffs: BTreeMap<u32, u8>,
}

impl MultilinearPoly8 {
    pub fn new(n: usize) -> Self {
        MultilinearPoly8 { n, coeffs: BTreeMap::new() }
    }

    pub fn from_terms(n: usize, terms: &[(u32, u8)]) -> Self {
        let mut p = Self::new(n);
        for &(mask, c) in terms {
            p.add(mask, c);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeff(&self, mask: u32) -> u8 {
        self.coeffs.get(&mask).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u8)> + '_ {
        self.coeffs.iter().map(|(&m, &c)| (m, c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Adds `c` (mod 8) to the coefficient of `mask`.
    pub fn add(&mut self, mask: u32, c: u8) {
        let v = (self.coeff(mask) + c % 8) % 8;
        if v == 0 {
            self.coeffs.remove(&mask);
        } else {
            self.coeffs.insert(mask, v);
        }
    }

    /// Interpolates the unique multilinear form of a table of 2^n values mod 8.
    /// Entry `x` of the table is the value at the assignment with bitmask `x`.
    pub fn mobius_from_truth_table(values: &[u8]) -> Result<Self> {
        let len = values.len();
        if !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_QUBITS {
            return Err(Error::BadLength { got: len });
        }
        let n = len.trailing_zeros() as usize;
        let mut f: Vec<u8> = values.iter().map(|v| v % 8).collect();
        for i in 0..n {
            let bit = 1 << i;
            for x in 0..len {
                if x & bit != 0 {
                    f[x] = (f[x] + 8 - f[x ^ bit]) % 8;
                }
            }
        }
        let coeffs = f
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(m, &c)| (m as u32, c))
            .collect();
        Ok(MultilinearPoly8 { n, coeffs })
    }

    /// Value at the assignment `x` (bitmask), mod 8.
    pub fn evaluate(&self, x: u32) -> u8 {
        self.coeffs
            .iter()
            .filter(|(&m, _)| m & x == m)
            .fold(0u8, |acc, (_, &c)| (acc + c) % 8)
    }

    pub fn truth_table(&self) -> Vec<u8> {
        (0..1u32 << self.n).map(|x| self.evaluate(x)).collect()
    }

    /// Signature tensor of the phase function: linear coefficients give the
    /// diagonal mod 2, even quadratic coefficients give `(c/2) mod 2` and
    /// cubic coefficients divisible by 4 give `(c/4) mod 2`.
    pub fn to_tensor(&self) -> Result<SymmetricTensor> {
        let mut t = SymmetricTensor::try_zero(self.n)?;
        for (&mask, &c) in &self.coeffs {
            let idx: Vec<usize> = (0..self.n).filter(|&i| (mask >> i) & 1 == 1).collect();
            match idx.as_slice() {
                [] => {}
                &[i] => {
                    if c % 2 == 1 {
                        t.set(i, i, i, true);
                    }
                }
                &[i, j] => {
                    if c % 2 != 0 {
                        return Err(Error::NonCliffordResidue { mask, coeff: c });
                    }
                    if (c / 2) % 2 == 1 {
                        t.set(i, i, j, true);
                        t.set(i, j, j, true);
                    }
                }
                &[i, j, k] => {
                    if c % 4 != 0 {
                        return Err(Error::NonCliffordResidue { mask, coeff: c });
                    }
                    if (c / 4) % 2 == 1 {
                        t.set(i, j, k, true);
                    }
                }
                more => return Err(Error::DegreeTooHigh(more.len())),
            }
        }
        Ok(t)
    }
}
