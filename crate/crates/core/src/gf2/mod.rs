//! GF(2) vectors, matrices and symmetric rank-3 tensors, plus the mod-8
//! multilinear transform linking phase functions to signature tensors.

mod bitvec;
mod matrix;
mod poly;
mod tensor;

pub use bitvec::{all_nonzero, BitVec};
pub use matrix::BitMatrix;
pub use poly::MultilinearPoly8;
pub use tensor::{Monomials, SymmetricTensor, BINARY_MAGIC};

/// Largest supported qubit count.
pub const MAX_QUBITS: usize = 16;

/// XOR of the cubes of all factors.
pub fn sum_of_cubes(factors: &[BitVec], n: usize) -> crate::Result<SymmetricTensor> {
    let mut t = SymmetricTensor::try_zero(n)?;
    for u in factors {
        if u.len() != n {
            return Err(crate::Error::DimensionMismatch(u.len(), n));
        }
        t.xor_cube(u);
    }
    Ok(t)
}
