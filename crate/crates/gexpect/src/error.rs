use thiserror::Error;

/// Errors shared by every engine in the crate.
///
/// Construction errors (`InvalidCoefficients`, `InvalidGrid`, ...) fire when a
/// type invariant cannot be established; evaluation errors fire when an
/// operation is asked to run outside its stated preconditions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volatility coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid volatility grid: {0}")]
    InvalidGrid(String),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("payoff requires {0}, which the evaluation state does not carry")]
    MissingStateComponent(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("projected node count {projected} exceeds the cap of {cap}")]
    NodeCapExceeded { projected: usize, cap: usize },

    #[error("payoff incompatible with tree state space: {0}")]
    PayoffTreeIncompatible(String),

    #[error("time {0} is not on the tree time lattice")]
    OffLattice(f64),

    #[error("CFL condition violated: dt * sigma_high_sq / dx^2 = {0} > 1")]
    CflViolation(f64),

    #[error("domain half-width {half_width} is below the required {required}")]
    DomainTooNarrow { half_width: f64, required: f64 },

    #[error("cylinder payoffs support at most {max} time points, got {got}")]
    CylinderTooLong { max: usize, got: usize },

    #[error("selection enumeration would produce {projected} selections, above the cap of {cap}")]
    SelectionCapExceeded { projected: u128, cap: u128 },

    #[error("volatility selection inconsistent with the tree: {0}")]
    InconsistentSelection(String),

    #[error("events do not partition the level: {0}")]
    InvalidPartition(String),

    #[error("pasted parts disagree on the common selection before the cut level")]
    PasteBaseMismatch,

    #[error("interval set is empty")]
    EmptyIntervalSet,

    #[error("scheme violates its claimed monotonicity: {0}")]
    MonotonicityViolation(String),

    #[error("Cauchy certificate violated: {0}")]
    CertificateViolated(String),

    #[error("upward dominated extension must be presented as a negated downward scheme")]
    UpSchemeNotNegatedDown,

    #[error("volatility grid has no point with squared value inside ({lo}, {hi})")]
    NoBandPoint { lo: f64, hi: f64 },

    #[error("operation requires sigma_low_sq > 0")]
    DegenerateVolatility,

    #[error("stopping rules violate the required ordering: {0}")]
    RuleOrdering(String),

    #[error("tree time lattice does not refine the dyadic grid: {0}")]
    LatticeIncompatible(String),

    #[error("operation requires the non-recombined (path) tree variant")]
    PathsRequired,

    #[error("conditional evaluation is not supported by this engine")]
    UnsupportedConditional,
}

pub type Result<T> = std::result::Result<T, Error>;
