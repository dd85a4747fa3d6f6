use thiserror::Error;

use crate::model::Setting;

#[derive(Debug, Error)]
pub enum Error {
    #[error("joint type space has {size} vectors, above the enumeration cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("conditional probability of type {denominator} for buyer {buyer} is zero given the other types")]
    ZeroConditional { buyer: usize, denominator: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("payment {0} is not an integer; the seller-utility setting needs integral payments")]
    NonIntegerPayment(f64),

    #[error("seller utility undefined at revenue {0} (no table entry and interpolation disabled)")]
    MissingUtility(i64),

    #[error("scenario feasible set is empty: {0}")]
    InfeasibleScenario(String),

    #[error("inequality-mode oracle received negative dual {value} at buyer {buyer}, item {item}")]
    NegativeDual { buyer: usize, item: usize, value: f64 },

    #[error(
        "realized interim allocation is zero for buyer {buyer}, item {item}, type {ty} while the target is {target}"
    )]
    DegenerateRatio {
        buyer: usize,
        item: usize,
        ty: usize,
        target: f64,
    },

    #[error("violation {value} on row {row} exceeds its width bound {width}")]
    WidthViolation { row: usize, value: f64, width: f64 },

    #[error("transcript is incomplete")]
    IncompleteTranscript,

    #[error("mechanism is for {mechanism:?}, got {requested:?}")]
    SettingMismatch { mechanism: Setting, requested: Setting },

    #[error("invalid type vector: {0}")]
    InvalidTypes(String),

    #[error("document version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
