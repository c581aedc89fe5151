//! Phase-flip error bound and the finite-key secure key rates.
//!
//! The phase-error expectation combines Chernoff upper bounds on the O- and
//! B-window counts with the coefficients
//! `c0 = e^{-(mu_A+mu_B)/4}`, `c1 = e^{(mu_A+mu_B)/4}` and
//! `c2_bar^2 = (c0 + c1 - 2 e^{-mu_A/2})(c0 + c1 - 2 e^{-mu_B/2})`;
//! the realized phase-error count is then bounded through the
//! expected-to-real Chernoff direction and divided by the untagged count.
//!
//! The collective-attack rate subtracts error-correction leakage, the
//! correctness check, privacy amplification and the smooth-min-entropy
//! deviation from the untagged gain; the coherent-attack rate additionally
//! pays the post-selection shortening `2 (d^2-1) log2(N+1)` bits.

use crate::channel::{arm_transmittance, expected_counts};
use crate::error::{Error, Result};
use crate::mapping::equivalent_pair;
use crate::model::{
    ChannelParams, CostBreakdown, KeyRateReport, ObservedStatistics, ProtocolParams,
    SourceBounds,
};
use crate::scalar::{cvt, Real};
use crate::stats::{binary_entropy, expected_upper, real_upper, FailureProb};

/// Intermediate quantities of the phase-error estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorTerms<F: Real> {
    pub c0: F,
    pub c1: F,
    /// `c2_bar` is kept squared; its root is taken only where a square root
    /// appears, with tiny negative rounding floored at zero.
    pub c2_bar_sq: F,
    pub n_o_exp_upper: F,
    pub n_b_exp_upper: F,
    /// Expected number of phase errors.
    pub n_ph_expected: F,
}

/// Expected phase-error count from the observed statistics.
///
/// Uses `xi = eps` (the budget's per-estimation failure probability) for
/// both count estimations.
pub fn phase_error_expectation<F: Real>(
    params: &ProtocolParams<F>,
    stats: &ObservedStatistics<F>,
) -> Result<PhaseErrorTerms<F>> {
    let p_0 = params.p_o;
    let p_x = params.p_x;
    if !(p_0 > F::zero()) || !(p_x > F::zero()) {
        // The Chernoff upper bounds are strictly positive even for zero
        // counts, so a vanishing send probability always divides by zero.
        return Err(Error::Domain {
            name: "p_o * p_x",
            value: (p_0 * p_x).to_f64().unwrap_or(f64::NAN),
            domain: "(0, 1)",
        });
    }
    let eps = FailureProb::from_log2(params.epsilons()?.log2_eps)?;
    let n_o_u = expected_upper(stats.n_o, eps).value;
    let n_b_u = expected_upper(stats.n_b, eps).value;

    let quarter_sum = (params.mu_a + params.mu_b) * cvt(0.25);
    let c0 = (-quarter_sum).exp();
    let c1 = quarter_sum.exp();
    let two = cvt::<F>(2.0);
    let c2_bar_sq = (c0 + c1 - two * (-params.mu_a * cvt(0.5)).exp())
        * (c0 + c1 - two * (-params.mu_b * cvt(0.5)).exp());
    let c2 = c2_bar_sq.max(F::zero()).sqrt();

    let n = params.n_windows;
    let half = cvt::<F>(0.5);
    let n_ph_expected = half * (p_x / p_0) * c0 * c0 * n_o_u
        + half * (p_0 / p_x) * c1 * c1 * n_b_u
        + c0 * c1 * (n_o_u * n_b_u).sqrt()
        + p_x * c0 * c2 * (n * n_o_u).sqrt()
        + p_0 * c1 * c2 * (n * n_b_u).sqrt()
        + half * p_0 * p_x * c2_bar_sq * n;

    Ok(PhaseErrorTerms {
        c0,
        c1,
        c2_bar_sq,
        n_o_exp_upper: n_o_u,
        n_b_exp_upper: n_b_u,
        n_ph_expected,
    })
}

/// Upper bound on the phase-flip error rate:
/// `e_ph = real_upper(<N_ph>) / n_Z`, clamped into `[0, 1]`.
pub fn phase_error_rate<F: Real>(
    terms: &PhaseErrorTerms<F>,
    n_z: F,
    eps: FailureProb<F>,
) -> Result<F> {
    if !(n_z > F::zero()) {
        return Err(Error::ZeroWindows);
    }
    let bound = real_upper(terms.n_ph_expected, eps);
    Ok((bound / n_z).min(F::one()).max(F::zero()))
}

/// Collective-attack key rate with the full cost accounting.
pub fn key_rate_collective<F: Real>(
    params: &ProtocolParams<F>,
    stats: &ObservedStatistics<F>,
    e_ph: F,
) -> Result<KeyRateReport<F>> {
    let budget = params.epsilons()?;
    // The entropy bound saturates at e_ph = 1/2: beyond it no key survives.
    let untagged_gain = if e_ph < cvt(0.5) {
        stats.n_z * (F::one() - binary_entropy(e_ph)?)
    } else {
        F::zero()
    };
    let error_correction = params.f_ec * stats.m_s * binary_entropy(stats.e_t)?;
    let cor_cost = F::one() - budget.log2_eps_cor;
    let pa_cost = -(budget.log2_eps_pa + budget.log2_eps_pa);
    let entropy_dev_cost =
        cvt::<F>(7.0) * (stats.n_z * (F::one() - budget.log2_eps_bar)).sqrt();

    let r_unclamped =
        (untagged_gain - error_correction - cor_cost - pa_cost - entropy_dev_cost)
            / params.n_windows;
    let r = r_unclamped.max(F::zero());

    Ok(KeyRateReport {
        r,
        r_coh: F::zero(),
        skr_bps: F::zero(),
        e_ph,
        n_ph_bar: F::zero(),
        n_o_exp_upper: F::zero(),
        n_b_exp_upper: F::zero(),
        eps_coh: F::zero(),
        stats: *stats,
        cost_breakdown: CostBreakdown {
            untagged_gain,
            error_correction,
            cor_cost,
            pa_cost,
            entropy_dev_cost,
            coherent_correction: F::zero(),
            r_unclamped,
        },
    })
}

/// Lift the collective rate to coherent attacks via the post-selection
/// shortening, and report the security coefficient the budget implies.
pub fn key_rate_coherent<F: Real>(
    mut report: KeyRateReport<F>,
    params: &ProtocolParams<F>,
) -> Result<KeyRateReport<F>> {
    let dim_exp = cvt::<F>(f64::from(params.d * params.d - 1));
    let correction_bits =
        cvt::<F>(2.0) * dim_exp * (params.n_windows + F::one()).log2();
    report.cost_breakdown.coherent_correction = correction_bits;
    report.r_coh = (report.r - correction_bits / params.n_windows).max(F::zero());
    report.eps_coh = params.epsilons()?.eps_coh(params.n_windows, params.d);
    Ok(report)
}

fn evaluate_at<F: Real>(
    params: &ProtocolParams<F>,
    channel: &ChannelParams<F>,
) -> Result<KeyRateReport<F>> {
    let eps = FailureProb::from_log2(params.epsilons()?.log2_eps)?;
    let eta = arm_transmittance(channel);
    let stats = expected_counts(params, eta, channel)?;
    let terms = phase_error_expectation(params, &stats)?;
    let e_ph = phase_error_rate(&terms, stats.n_z, eps)?;
    let mut report = key_rate_collective(params, &stats, e_ph)?;
    report = key_rate_coherent(report, params)?;
    report.n_ph_bar = real_upper(terms.n_ph_expected, eps);
    report.n_o_exp_upper = terms.n_o_exp_upper;
    report.n_b_exp_upper = terms.n_b_exp_upper;
    report.skr_bps = channel.bits_per_second(report.r_coh);
    Ok(report)
}

/// Full pipeline: optional source-bound mapping, closed-form statistics,
/// phase-error bound, both key rates, and the worst-case intensity corner.
///
/// When `bounds` is given the equivalent intensities replace `params.mu_*`;
/// otherwise the params' intensities are used directly. A nonzero
/// `intensity_fluct` evaluates the chain at `mu (1 +/- fluct)` and keeps the
/// corner with the smaller coherent rate.
pub fn evaluate<F: Real>(
    params: &ProtocolParams<F>,
    channel: &ChannelParams<F>,
    bounds: Option<&SourceBounds<F>>,
) -> Result<KeyRateReport<F>> {
    let mut base = *params;
    if let Some(b) = bounds {
        let (mu_a, mu_b) = equivalent_pair(b)?;
        base.mu_a = mu_a;
        base.mu_b = mu_b;
    }
    let fluct = base.intensity_fluct;
    if fluct == F::zero() {
        return evaluate_at(&base, channel);
    }
    let mut worst: Option<KeyRateReport<F>> = None;
    for factor in [F::one() - fluct, F::one() + fluct] {
        let mut corner = base;
        corner.mu_a = base.mu_a * factor;
        corner.mu_b = base.mu_b * factor;
        let report = evaluate_at(&corner, channel)?;
        worst = match worst {
            Some(w) if w.r_coh <= report.r_coh => Some(w),
            _ => Some(report),
        };
    }
    Ok(worst.expect("at least one corner evaluated"))
}
