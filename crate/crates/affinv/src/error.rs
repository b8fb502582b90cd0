use thiserror::Error;

/// Single error type for the whole library.
///
/// Numeric kernels never silently wrap or saturate: any i128/u128 overflow in
/// the exact-rational layer surfaces as `Overflow`, and any floor of a real
/// expression whose enclosing interval straddles an integer surfaces as
/// `AmbiguousFloor` instead of picking a side.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modular inverse of a zero divisor (mod {p})")]
    ZeroDivisor { p: u64 },

    #[error("integer overflow in {context}")]
    Overflow { context: &'static str },

    #[error("denominator {den} is divisible by the modulus {p}")]
    BadDenominator { den: i128, p: u64 },

    #[error("affine map has zero slope{}", if *.reduced { " after reduction" } else { "" })]
    ZeroSlope { reduced: bool },

    #[error("operands live over different moduli ({left} vs {right})")]
    MismatchedModulus { left: u64, right: u64 },

    #[error("floor of {expr} is ambiguous: enclosure [{lo}, {hi}] straddles an integer")]
    AmbiguousFloor { expr: &'static str, lo: f64, hi: f64 },

    #[error("invalid override: {reason}")]
    InvalidOverride { reason: String },

    #[error("parameters degenerate at this scale: {reason}")]
    DegenerateParams { reason: String },

    #[error("shift outside the admissible range: slope {a}, intercept {b}, bound {k}")]
    InvalidShift { a: i64, b: i64, k: u64 },

    #[error("family has an even number of maps ({n}); majority votes can tie")]
    EvenFamily { n: u128 },

    #[error("reduction collisions present and strict mode requested ({detail})")]
    CollisionDetected { detail: String },

    #[error("no attempt out of {attempts} met the density window {window}")]
    ExhaustedRetries { attempts: u32, window: f64 },

    #[error("dilation factor reduces to zero mod {p}")]
    ZeroDilation { p: u64 },

    #[error("accuracy self-check failed: {context} (error {error:.3e}, bound {bound:.3e})")]
    AccuracyViolation {
        context: &'static str,
        error: f64,
        bound: f64,
    },

    #[error("spectrum is degenerate: {reason}")]
    DegenerateSpectrum { reason: String },

    #[error("frequency interval is empty (radius {n_radius})")]
    EmptyInterval { n_radius: u64 },

    #[error("parity constraint violated: {reason}")]
    BadParity { reason: String },

    #[error("search space of {size} candidates exceeds the cap {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("reduction scan over {size} maps exceeds the cap {cap}")]
    ScanTooLarge { size: u128, cap: u128 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
