//! T-count minimization for CNOT+T circuits.
//!
//! A circuit's non-Clifford content is captured by its signature tensor, a
//! symmetric GF(2) tensor whose symmetric (Waring) rank equals the minimal
//! number of T gates. Optimization is a single-player game that subtracts
//! cubes u⊗u⊗u from the tensor, searched with PUCT tree search guided by a
//! small permutation-equivariant axial-attention policy/value network.

pub mod bench;
pub mod circuit;
pub mod error;
pub mod game;
pub mod gf2;
pub mod model;
pub mod search;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
