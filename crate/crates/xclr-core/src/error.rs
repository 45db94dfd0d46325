//! Error type shared by every fallible operation in the crate.

use core::fmt;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// All failure modes of the core algorithms.
///
/// Variants carry enough context to diagnose the offending input without a
/// backtrace; none of them allocate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Backing buffer length does not equal `rows * cols`.
    DataLength { expected: usize, got: usize },
    /// Two matrix operands have incompatible shapes.
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Row had near-zero Euclidean norm where a direction was required.
    ZeroNormRow(usize),
    /// Column had near-zero Euclidean norm where a direction was required.
    ZeroNormColumn(usize),
    /// A non-finite value appeared where finite input is required.
    NonFinite(&'static str),
    /// Temperature parameters must be strictly positive.
    NonPositiveTemperature(f64),
    /// Softmax support is empty after exclusions.
    EmptySupport,
    /// Target and predicted distributions disagree on length, exclusion, or
    /// where mass is allowed to sit.
    SupportMismatch,
    /// Operation needs more samples than were provided.
    TooFewSamples { got: usize, need: usize },
    /// Two collections that must align per-index have different lengths.
    SizeMismatch { left: usize, right: usize },
    /// Batch pairing is not an involution of the expected shape.
    BadPairing(&'static str),
    /// Labels were required for the requested mode but not supplied.
    MissingLabels,
    /// A label is outside the declared class range.
    LabelOutOfRange { label: usize, classes: usize },
    /// A class id has no entry in the lookup being consulted.
    UnknownClass(usize),
    /// Hierarchy is unusable: no root, a cycle, a dangling class, or zero
    /// diameter over distinct classes.
    DegenerateTree(&'static str),
    /// An index points outside its collection.
    IndexOutOfRange { index: usize, len: usize },
    /// A scalar argument is outside its documented domain.
    InvalidArgument(&'static str),
    /// Tensor shapes do not line up inside the encoder stack.
    ShapeMismatch(&'static str),
    /// A requested split or subset came out empty.
    EmptySplit,
    /// Neighbor count must satisfy `1 <= k <= n_train`.
    KOutOfRange { k: usize, train: usize },
    /// At least two distinct classes are required.
    SingleClass,
    /// Per-class structure is too thin for the requested statistic.
    DegenerateClasses(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DataLength { expected, got } => {
                write!(f, "buffer holds {got} values but shape needs {expected}")
            }
            Error::DimMismatch { left, right } => write!(
                f,
                "incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::ZeroNormRow(i) => write!(f, "row {i} has (near-)zero norm"),
            Error::ZeroNormColumn(i) => write!(f, "column {i} has (near-)zero norm"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::NonPositiveTemperature(t) => {
                write!(f, "temperature must be > 0, got {t}")
            }
            Error::EmptySupport => write!(f, "softmax support is empty"),
            Error::SupportMismatch => {
                write!(f, "target and predicted distributions have mismatched support")
            }
            Error::TooFewSamples { got, need } => {
                write!(f, "need at least {need} samples, got {got}")
            }
            Error::SizeMismatch { left, right } => {
                write!(f, "aligned collections differ in length: {left} vs {right}")
            }
            Error::BadPairing(why) => write!(f, "bad view pairing: {why}"),
            Error::MissingLabels => write!(f, "labels are required for this mode"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} outside class range 0..{classes}")
            }
            Error::UnknownClass(c) => write!(f, "class {c} has no entry"),
            Error::DegenerateTree(why) => write!(f, "degenerate hierarchy: {why}"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
            Error::ShapeMismatch(why) => write!(f, "shape mismatch: {why}"),
            Error::EmptySplit => write!(f, "split produced an empty part"),
            Error::KOutOfRange { k, train } => {
                write!(f, "k = {k} outside 1..={train}")
            }
            Error::SingleClass => write!(f, "need at least two distinct classes"),
            Error::DegenerateClasses(why) => write!(f, "degenerate class structure: {why}"),
        }
    }
}

impl core::error::Error for Error {}
