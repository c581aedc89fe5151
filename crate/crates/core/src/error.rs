//! Error type shared by every module in the crate.

/// Failure conditions surfaced by the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The coherent overlap of the two vacuum-projection bounds is zero, so
    /// the equivalent intensity diverges.
    #[error(
        "degenerate source mapping: vacuum projections {v_strong} and {v_weak} \
         have zero coherent overlap (equivalent intensity diverges)"
    )]
    DegenerateMapping { v_strong: f64, v_weak: f64 },

    /// An argument fell outside its mathematical domain.
    #[error("{name} = {value} outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// The linear detection model only covers the symmetric case.
    #[error("detection model assumes symmetric intensities, got mu_A = {mu_a}, mu_B = {mu_b}")]
    Asymmetry { mu_a: f64, mu_b: f64 },

    /// Phase-flip error rate is undefined without effective Z windows.
    #[error("no effective Z windows: phase-flip error rate undefined")]
    ZeroWindows,

    /// Every point evaluated by the optimizer yielded a zero key rate.
    #[error("no searched parameter point yields a positive coherent-attack key rate")]
    NoPositiveRate,

    /// A counting-matrix row sums to zero, so no ratio can be formed.
    #[error("counting matrix row sums to zero; cannot estimate the phase")]
    EmptyMatrix,

    /// A record field failed validation.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
