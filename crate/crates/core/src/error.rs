//! Error type shared by every module of the crate.

/// Everything that can go wrong when building states, scenarios, models
/// or running the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A vector with (numerically) zero norm cannot be normalized.
    #[error("cannot normalize a vector with zero norm")]
    ZeroNorm,

    /// An input contained NaN or ±∞.
    #[error("input contains a non-finite entry")]
    NonFinite,

    /// A dimension outside the supported range (or unusable for the
    /// requested operation).
    #[error("unsupported dimension {dim} ({detail})")]
    BadDimension { dim: usize, detail: &'static str },

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A nominally real-field object carries a nonzero imaginary part.
    #[error("field is declared real but an amplitude has a nonzero imaginary part")]
    FieldMismatch,

    /// The number of non-reference states is out of range.
    #[error("unsupported number of states n = {n} ({detail})")]
    BadN { n: usize, detail: &'static str },

    /// Two keyed collections (pair → value) disagree about their key set.
    #[error("pair key mismatch: {detail}")]
    KeyMismatch { detail: String },

    /// The overlap denominator Σ_j ω_Q(ψ_0, ψ_j) is too close to zero
    /// for the score to mean anything.
    #[error("degenerate overlap denominator Σω_Q = {sum:.3e} (must exceed 1e-6)")]
    DegenerateDenominator { sum: f64 },

    /// Detection efficiency outside [0, 1].
    #[error("detection efficiency η = {eta} outside [0, 1]")]
    EtaOutOfRange { eta: f64 },

    /// The critical-efficiency formula has a non-positive denominator, so
    /// no finite threshold exists for this scenario.
    #[error("no finite detection-efficiency threshold for this scenario")]
    NoThreshold,

    /// Noise robustness is only defined for violating scenarios (S < 1).
    #[error("scenario does not violate the inequality (S = {s:.6}), ε0 undefined")]
    NotViolating { s: f64 },

    /// A scenario-level invariant failed (normalization, POVM validity,
    /// field consistency, ...). The message names the first failure.
    #[error("invalid scenario: {detail}")]
    InvalidScenario { detail: String },

    /// A probability entry left [0, 1] by more than the tolerance.
    #[error("probability out of range for pair ({j1},{j2}) outcome {outcome}: {value}")]
    ProbabilityOutOfRange {
        j1: usize,
        j2: usize,
        outcome: usize,
        value: f64,
    },

    /// A count record has zero heralds for some setting, so the relative
    /// frequency for that setting is undefined.
    #[error("no heralded events for pair ({j1},{j2}) outcome {outcome}")]
    EmptySetting { j1: usize, j2: usize, outcome: usize },

    /// Two slices that must have equal length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A vector that must be a probability distribution is not.
    #[error("not a probability distribution: {detail}")]
    NotADistribution { detail: String },

    /// Invalid options passed to an algorithm (non-positive tolerance,
    /// zero restarts, bad noise parameters, ...).
    #[error("invalid options: {detail}")]
    BadOptions { detail: String },
}
