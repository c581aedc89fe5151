//! Configuration and result records shared across the toolkit.
//!
//! All records are plain immutable data: construct them through the checked
//! constructors (which reject out-of-range fields) or fill the public fields
//! directly and run [`validate`], which reports every violated invariant.
//!
//! Failure probabilities deserve a note: the coherent-attack budget splits
//! the aggregate `eps_coh / (N+1)^(d^2-1)` into four components. At
//! `N = 1e13, d = 8` each component is of order `2^-2756`, far below the
//! smallest subnormal `f64`, so [`EpsilonBudget`] carries the components as
//! base-2 logarithms and downstream code never leaves log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cvt, log2_add, Real};

/// Lower bounds on the vacuum projections of the four source states.
///
/// `a0`/`a_o0` describe Alice's strong/weak source, `b0`/`b_o0` Bob's.
/// The protocol requires every bound to sit in `[0.5, 1.0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct SourceBounds<F: Real> {
    pub a0: F,
    pub a_o0: F,
    pub b0: F,
    pub b_o0: F,
}

impl<F: Real> SourceBounds<F> {
    pub fn new(a0: F, a_o0: F, b0: F, b_o0: F) -> Result<Self> {
        let bounds = SourceBounds { a0, a_o0, b0, b_o0 };
        for (name, v) in bounds.fields() {
            if !(v >= cvt(0.5) && v <= F::one()) {
                return Err(Error::invalid(
                    name,
                    format!("{:?} outside [0.5, 1.0]", v),
                ));
            }
        }
        Ok(bounds)
    }

    pub(crate) fn fields(&self) -> [(&'static str, F); 4] {
        [
            ("a0", self.a0),
            ("a_o0", self.a_o0),
            ("b0", self.b0),
            ("b_o0", self.b_o0),
        ]
    }
}

/// Component failure probabilities of the finite-key analysis, stored as
/// base-2 logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct EpsilonBudget<F: Real> {
    /// log2 of the error-correction failure probability.
    pub log2_eps_cor: F,
    /// log2 of the privacy-amplification failure probability.
    pub log2_eps_pa: F,
    /// log2 of the smooth-min-entropy estimation coefficient.
    pub log2_eps_bar: F,
    /// log2 of the per-estimation fluctuation failure probability.
    pub log2_eps: F,
}

impl<F: Real> EpsilonBudget<F> {
    /// Split `eps_coh / (N+1)^(d^2-1)` equally four ways:
    /// `eps_cor = eps_PA = eps_bar = 3*eps`.
    pub fn derive(eps_coh: F, n_windows: F, d: u32) -> Result<Self> {
        if !(eps_coh > F::zero() && eps_coh < F::one()) {
            return Err(Error::invalid("eps_coh", "must lie in (0, 1)"));
        }
        if n_windows < F::one() {
            return Err(Error::invalid("N", "must be >= 1"));
        }
        let dim_exp = cvt::<F>(f64::from(d * d - 1));
        let log2_budget = eps_coh.log2() - dim_exp * (n_windows + F::one()).log2();
        let quarter = log2_budget - cvt(2.0);
        Ok(EpsilonBudget {
            log2_eps_cor: quarter,
            log2_eps_pa: quarter,
            log2_eps_bar: quarter,
            log2_eps: quarter - cvt::<F>(3.0).log2(),
        })
    }

    /// Budget from explicitly chosen (representable) component probabilities.
    pub fn explicit(eps_cor: F, eps_pa: F, eps_bar: F, eps: F) -> Result<Self> {
        for (name, v) in [
            ("eps_cor", eps_cor),
            ("eps_PA", eps_pa),
            ("eps_bar", eps_bar),
            ("eps", eps),
        ] {
            if !(v > F::zero() && v < F::one()) {
                return Err(Error::invalid(name, format!("{:?} outside (0, 1)", v)));
            }
        }
        Ok(EpsilonBudget {
            log2_eps_cor: eps_cor.log2(),
            log2_eps_pa: eps_pa.log2(),
            log2_eps_bar: eps_bar.log2(),
            log2_eps: eps.log2(),
        })
    }

    /// Coherent-attack security coefficient implied by this budget:
    /// `(eps_cor + eps_PA + eps_bar + 3 eps) * (N+1)^(d^2-1)`.
    pub fn eps_coh(&self, n_windows: F, d: u32) -> F {
        let sum = log2_add(
            log2_add(self.log2_eps_cor, self.log2_eps_pa),
            log2_add(self.log2_eps_bar, cvt::<F>(3.0).log2() + self.log2_eps),
        );
        let dim_exp = cvt::<F>(f64::from(d * d - 1));
        (sum + dim_exp * (n_windows + F::one()).log2()).exp2()
    }

    fn components(&self) -> [(&'static str, F); 4] {
        [
            ("eps_cor", self.log2_eps_cor),
            ("eps_PA", self.log2_eps_pa),
            ("eps_bar", self.log2_eps_bar),
            ("eps", self.log2_eps),
        ]
    }
}

/// Protocol-side parameters: equivalent intensities, send probabilities,
/// window count and the security-epsilon budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct ProtocolParams<F: Real> {
    /// Equivalent intensity of Alice's strong source.
    #[serde(rename = "mu_A")]
    pub mu_a: F,
    /// Equivalent intensity of Bob's strong source.
    #[serde(rename = "mu_B")]
    pub mu_b: F,
    /// Probability of choosing the strong source in a window.
    pub p_x: F,
    /// Probability of the weak source; the protocol fixes `p_o = 1 - p_x`.
    pub p_o: F,
    /// Number of time windows.
    #[serde(rename = "N")]
    pub n_windows: F,
    /// Error-correction inefficiency (>= 1).
    pub f_ec: F,
    /// Dimension of the local states (8 for this protocol).
    pub d: u32,
    /// Target coherent-attack security coefficient.
    pub eps_coh: F,
    /// Explicit component failure probabilities; `None` derives them from
    /// `eps_coh` via the equal four-way split.
    pub eps_override: Option<EpsilonBudget<F>>,
    /// Relative half-width of the source intensity fluctuation.
    pub intensity_fluct: F,
}

impl<F: Real> ProtocolParams<F> {
    /// Checked constructor; `f_ec`, `d` and `intensity_fluct` get their
    /// documented defaults (1.1, 8, 0.0065).
    pub fn new(mu_a: F, mu_b: F, p_x: F, n_windows: F, eps_coh: F) -> Result<Self> {
        let params = ProtocolParams {
            mu_a,
            mu_b,
            p_x,
            p_o: F::one() - p_x,
            n_windows,
            f_ec: cvt(1.1),
            d: 8,
            eps_coh,
            eps_override: None,
            intensity_fluct: cvt(0.0065),
        };
        let report = validate_protocol(&params);
        match report.violations.first() {
            None => Ok(params),
            Some(v) => Err(Error::invalid(v.field.clone(), v.message.clone())),
        }
    }

    /// Resolved epsilon budget (override if present, else derived).
    pub fn epsilons(&self) -> Result<EpsilonBudget<F>> {
        match self.eps_override {
            Some(b) => Ok(b),
            None => EpsilonBudget::derive(self.eps_coh, self.n_windows, self.d),
        }
    }
}

/// Channel and detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct ChannelParams<F: Real> {
    /// Fiber length between Alice and Bob in km.
    pub distance_km: F,
    /// Fiber attenuation in dB/km.
    pub atten_db_per_km: F,
    /// Additional insertion loss across the full path in dB.
    pub extra_loss_db: F,
    /// Detector efficiency.
    pub det_efficiency: F,
    /// Dark-count probability per detector per time window.
    #[serde(rename = "P_dc")]
    pub p_dc: F,
    /// Optical misalignment error probability.
    pub e_d: F,
    /// System repetition rate in Hz.
    pub clock_hz: F,
    /// Fraction of each frame carrying quantum signal.
    pub duty_cycle: F,
}

impl<F: Real> ChannelParams<F> {
    /// Documented defaults: 0.18 dB/km fiber, 69% detectors, 0.1 Hz dark
    /// counts at a 1.25 GHz clock, half-frame quantum duty cycle.
    pub fn defaults(distance_km: F) -> Self {
        ChannelParams {
            distance_km,
            atten_db_per_km: cvt(0.18),
            extra_loss_db: F::zero(),
            det_efficiency: cvt(0.69),
            p_dc: cvt(0.1 / 1.25e9),
            e_d: cvt(0.03),
            clock_hz: cvt(1.25e9),
            duty_cycle: cvt(0.5),
        }
    }

    /// Secret bits per second for a given per-window rate.
    pub fn bits_per_second(&self, r_per_window: F) -> F {
        r_per_window * self.clock_hz * self.duty_cycle
    }
}

/// Effective-window counts observed (or simulated) over a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct ObservedStatistics<F: Real> {
    /// Effective Z windows (exactly one party sent the strong source).
    #[serde(rename = "n_Z")]
    pub n_z: F,
    /// Effective O windows (both weak).
    #[serde(rename = "n_O")]
    pub n_o: F,
    /// Effective B windows (both strong).
    #[serde(rename = "n_B")]
    pub n_b: F,
    /// Survived raw-key bits.
    #[serde(rename = "M_S")]
    pub m_s: F,
    /// Bit-flip error rate of the raw key.
    #[serde(rename = "E_t")]
    pub e_t: F,
}

impl<F: Real> ObservedStatistics<F> {
    pub fn new(n_z: F, n_o: F, n_b: F, m_s: F, e_t: F) -> Result<Self> {
        for (name, v) in [("n_Z", n_z), ("n_O", n_o), ("n_B", n_b), ("M_S", m_s)] {
            if !(v >= F::zero()) {
                return Err(Error::invalid(name, "count must be >= 0"));
            }
        }
        if !(e_t >= F::zero() && e_t <= F::one()) {
            return Err(Error::invalid("E_t", "must lie in [0, 1]"));
        }
        if m_s < n_z {
            return Err(Error::invalid("M_S", "must be >= n_Z"));
        }
        Ok(ObservedStatistics { n_z, n_o, n_b, m_s, e_t })
    }

    /// Build the full record from the three effective-window counts.
    ///
    /// Z-window bits agree while O- and B-window bits always disagree under
    /// the protocol's bit assignment, so every effective window survives
    /// sifting and the error rate is the O+B fraction.
    pub fn from_counts(n_z: F, n_o: F, n_b: F) -> Result<Self> {
        let m_s = n_z + n_o + n_b;
        let e_t = if m_s > F::zero() {
            (n_o + n_b) / m_s
        } else {
            F::zero()
        };
        ObservedStatistics::new(n_z, n_o, n_b, m_s, e_t)
    }
}

/// Every term of the key-length accounting, in bits.
///
/// `n_windows * r_unclamped + error_correction + cor_cost + pa_cost +
/// entropy_dev_cost` reconstructs `untagged_gain` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct CostBreakdown<F: Real> {
    /// Leading term `n_Z * [1 - H(e_ph)]`.
    pub untagged_gain: F,
    /// Error-correction leakage `f * M_S * H(E_t)`.
    pub error_correction: F,
    /// Correctness-check cost `log2(2 / eps_cor)`.
    pub cor_cost: F,
    /// Privacy-amplification cost `2 log2(1 / eps_PA)`.
    pub pa_cost: F,
    /// Smooth-min-entropy deviation `7 sqrt(n_Z log2(2 / eps_bar))`.
    pub entropy_dev_cost: F,
    /// Post-selection shortening `2 (d^2 - 1) log2(N + 1)`.
    pub coherent_correction: F,
    /// Collective-attack rate before the clamp at zero.
    pub r_unclamped: F,
}

/// Full key-rate evaluation result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct KeyRateReport<F: Real> {
    /// Secret bits per window under collective attacks.
    pub r: F,
    /// Secret bits per window under coherent attacks.
    pub r_coh: F,
    /// Secret key rate in bits per second.
    pub skr_bps: F,
    /// Upper bound on the phase-flip error rate.
    pub e_ph: F,
    /// Upper bound on the phase-error count.
    pub n_ph_bar: F,
    /// Chernoff upper bound on the expected O-window count.
    #[serde(rename = "n_O_exp_U")]
    pub n_o_exp_upper: F,
    /// Chernoff upper bound on the expected B-window count.
    #[serde(rename = "n_B_exp_U")]
    pub n_b_exp_upper: F,
    /// Coherent-attack security coefficient recomputed from the budget.
    pub eps_coh: F,
    /// The statistics the rate was computed from.
    pub stats: ObservedStatistics<F>,
    pub cost_breakdown: CostBreakdown<F>,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Report-style validation outcome; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

fn validate_protocol<F: Real>(params: &ProtocolParams<F>) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !(params.p_x >= F::zero() && params.p_x <= F::one()) {
        report.push("p_x", format!("{:?} out of [0,1]", params.p_x));
    }
    if (params.p_o - (F::one() - params.p_x)).abs() > cvt(1e-12) {
        report.push("p_o", "p_o must equal 1 - p_x");
    }
    if !(params.mu_a > F::zero()) {
        report.push("mu_A", format!("{:?} must be > 0", params.mu_a));
    }
    if !(params.mu_b > F::zero()) {
        report.push("mu_B", format!("{:?} must be > 0", params.mu_b));
    }
    if !(params.n_windows >= F::one()) {
        report.push("N", format!("{:?} must be >= 1", params.n_windows));
    }
    if !(params.f_ec >= F::one()) {
        report.push("f_ec", format!("{:?} must be >= 1", params.f_ec));
    }
    if params.d < 2 {
        report.push("d", format!("{} must be >= 2", params.d));
    }
    if !(params.eps_coh > F::zero() && params.eps_coh < F::one()) {
        report.push("eps_coh", format!("{:?} out of (0,1)", params.eps_coh));
    }
    if let Some(budget) = params.eps_override {
        for (name, log2) in budget.components() {
            if !(log2 < F::zero() && log2.is_finite()) {
                report.push(name, "must lie in (0,1)");
            }
        }
    }
    if !(params.intensity_fluct >= F::zero()) {
        report.push(
            "intensity_fluct",
            format!("{:?} must be >= 0", params.intensity_fluct),
        );
    }
    report
}

fn validate_channel<F: Real>(channel: &ChannelParams<F>) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (name, v) in [
        ("distance_km", channel.distance_km),
        ("atten_db_per_km", channel.atten_db_per_km),
        ("extra_loss_db", channel.extra_loss_db),
        ("clock_hz", channel.clock_hz),
    ] {
        if !(v >= F::zero()) {
            report.push(name, format!("{:?} must be >= 0", v));
        }
    }
    for (name, v) in [
        ("det_efficiency", channel.det_efficiency),
        ("P_dc", channel.p_dc),
        ("e_d", channel.e_d),
        ("duty_cycle", channel.duty_cycle),
    ] {
        if !(v >= F::zero() && v <= F::one()) {
            report.push(name, format!("{:?} out of [0,1]", v));
        }
    }
    report
}

/// List every violated invariant across the given records; an empty report
/// means the configuration is valid.
pub fn validate<F: Real>(
    params: &ProtocolParams<F>,
    channel: &ChannelParams<F>,
    bounds: Option<&SourceBounds<F>>,
) -> ValidationReport {
    let mut report = validate_protocol(params);
    report
        .violations
        .extend(validate_channel(channel).violations);
    if let Some(b) = bounds {
        for (name, v) in b.fields() {
            if !(v >= cvt(0.5) && v <= F::one()) {
                report.push(name, format!("{:?} outside [0.5, 1.0]", v));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> ProtocolParams<f64> {
        ProtocolParams::new(0.01, 0.01, 0.25, 1e12, 1e-10).unwrap()
    }

    #[test]
    fn defaults_validate_clean() {
        let params = default_params();
        let channel = ChannelParams::defaults(100.0);
        let bounds = SourceBounds::new(0.9, 0.999, 0.9, 0.999).unwrap();
        let report = validate(&params, &channel, Some(&bounds));
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn out_of_range_vacuum_bound_is_rejected_and_reported() {
        let err = SourceBounds::new(0.4f64, 0.999, 0.9, 0.999).unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "a0"));

        let bounds = SourceBounds { a0: 0.4, a_o0: 0.999, b0: 0.9, b_o0: 0.999 };
        let report = validate(&default_params(), &ChannelParams::defaults(0.0), Some(&bounds));
        assert!(report.violations.iter().any(|v| v.field == "a0"));
    }

    #[test]
    fn p_x_out_of_range_is_reported() {
        let mut params = default_params();
        params.p_x = 1.3;
        params.p_o = -0.3;
        let report = validate(&params, &ChannelParams::defaults(0.0), None);
        assert!(report.violations.iter().any(|v| v.field == "p_x"));
    }

    #[test]
    fn derived_budget_reproduces_eps_coh() {
        let params = ProtocolParams::new(0.01f64, 0.01, 0.25, 1e13, 1e-10).unwrap();
        let budget = params.epsilons().unwrap();
        let back = budget.eps_coh(params.n_windows, params.d);
        assert!((back / 1e-10 - 1.0).abs() < 1e-9, "eps_coh -> {back}");
        // Components must be deep in log space at this N.
        assert!(budget.log2_eps_cor < -2000.0);
    }

    #[test]
    fn explicit_budget_round_trips_components() {
        let budget = EpsilonBudget::explicit(1e-10f64, 1e-10, 1e-10, 1e-10).unwrap();
        assert!((budget.log2_eps_cor - 1e-10f64.log2()).abs() < 1e-12);
        assert!(EpsilonBudget::explicit(0.0f64, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn stats_from_counts_sets_survivors_and_error_rate() {
        let stats = ObservedStatistics::from_counts(90.0f64, 6.0, 4.0).unwrap();
        assert_eq!(stats.m_s, 100.0);
        assert!((stats.e_t - 0.1).abs() < 1e-15);
        assert!(ObservedStatistics::new(10.0f64, 0.0, 0.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn records_round_trip_through_serde() {
        let params = default_params();
        let json = serde_json::to_string(&params).unwrap();
        let back: ProtocolParams<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(params, back);

        let channel = ChannelParams::<f64>::defaults(150.0);
        let json = serde_json::to_string(&channel).unwrap();
        let back: ChannelParams<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(channel, back);

        let bounds = SourceBounds::new(0.9f64, 0.999, 0.9, 0.999).unwrap();
        let json = serde_json::to_string(&bounds).unwrap();
        let back: SourceBounds<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(bounds, back);

        let stats = ObservedStatistics::from_counts(90.0f64, 6.0, 4.0).unwrap();
        let json = serde_json::to_string(&stats).unwrap();
        let back: ObservedStatistics<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(stats, back);
    }
}
