use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("factor must be a nonzero vector")]
    ZeroFactor,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("qubit count {0} outside supported range 1..=16")]
    UnsupportedQubits(usize),
    #[error("truth table has length {got}, expected a power of two 2^n with n <= 16")]
    BadLength { got: usize },
    #[error("monomial of degree {0} cannot be encoded in a rank-3 tensor")]
    DegreeTooHigh(usize),
    #[error("coefficient {coeff} on monomial {mask:#b} is not a valid CNOT+T phase term")]
    NonCliffordResidue { mask: u32, coeff: u8 },
    #[error("tensor is not a sum of cubes: entries ({0},{0},{1}) and ({0},{1},{1}) differ")]
    NotWaring(usize, usize),

    #[error("line {line}: missing `qubits N` header")]
    MissingHeader { line: usize },
    #[error("line {line}: unknown gate `{name}`")]
    UnknownGate { line: usize, name: String },
    #[error("line {line}: qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { line: usize, qubit: usize, n: usize },
    #[error("line {line}: repeated operand {qubit}")]
    DuplicateOperand { line: usize, qubit: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("{n} qubits exceeds the action enumeration cap of {cap}")]
    TooManyActions { n: usize, cap: usize },
    #[error("state is terminal")]
    TerminalState,
    #[error("policy is empty")]
    EmptyPolicy,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("configuration conflict: {0}")]
    ConfigConflict(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint version mismatch: file {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("missing fixture {0}")]
    MissingFixture(String),
    #[error("unknown circuit id `{0}`")]
    UnknownId(String),
    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
