use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("p = 2 is not supported")]
    EvenPrime,
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {p} is too small for precision {e}")]
    PrimeTooSmall { p: u64, e: u32 },
    #[error("precision exponent must be at least 1")]
    ZeroPrecision,
    #[error("operands live in different rings: {0}^{1} vs {2}^{3}")]
    RingMismatch(u64, u32, u64, u32),
    #[error("argument is not congruent to 1 mod {0}")]
    NotOneModP(u64),
    #[error("argument is not divisible by {0}")]
    NotZeroModP(u64),
    #[error("{0} divides the numerator or denominator")]
    DivisibleByP(u64),
    #[error("element is not a unit mod {0}")]
    NotUnit(u64),
    #[error("matrix dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cut point {cut} exceeds generator length {len}")]
    CutPointTooLarge { cut: usize, len: usize },
    #[error("prime {0} appears more than once")]
    DuplicatePrime(u64),
    #[error("primes must be strictly increasing")]
    UnsortedPrimes,
    #[error("alpha and beta share the entry {0}")]
    DisjointnessViolation(String),
    #[error("not Galois-stable: {0}")]
    GaloisStabilityViolation(String),
    #[error("alpha has {0} entries but beta has {1}")]
    LengthMismatch(usize, usize),
    #[error("entry {0} is outside [0, 1)")]
    OutOfRange(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("z must be a rational number other than 0 and 1")]
    InvalidZ,
    #[error("residue admits two integer lifts within the bound")]
    AmbiguousLift,
    #[error("range denominator is not a unit mod {0}")]
    DenominatorCollision(u64),
    #[error("p^e = {p}^{e} exceeds the direct-evaluation bound")]
    OracleBoundExceeded { p: u64, e: u32 },
    #[error("no gamma table entry for d = {d}, p = {p}")]
    MissingGammaEntry { d: u64, p: u64 },
    #[error("prime {0} is not good for this datum")]
    NonGoodPrime(u64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
