//! Detection statistics: the closed-form linear model for the effective
//! window counts, plus a window-level Monte Carlo sampler that serves as an
//! independent oracle for it.
//!
//! Conventions: `eta` is the single-arm transmittance from one user to the
//! detectors, *including* detector efficiency; the measurement node sits
//! halfway, so each arm spans half the Alice-Bob distance. An effective
//! event is "the right detector clicks and the left does not".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{ChannelParams, ObservedStatistics, ProtocolParams};
use crate::scalar::{cvt, Real};

/// Single-arm transmittance in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmittance<F: Real> {
    pub eta: F,
}

impl<F: Real> Transmittance<F> {
    pub fn new(eta: F) -> Result<Self> {
        if !(eta >= F::zero() && eta <= F::one()) {
            return Err(Error::Domain {
                name: "eta",
                value: eta.to_f64().unwrap_or(f64::NAN),
                domain: "[0, 1]",
            });
        }
        Ok(Transmittance { eta })
    }
}

/// `eta = det_efficiency * 10^-(atten * distance/2 + extra/2) / 10`.
pub fn arm_transmittance<F: Real>(channel: &ChannelParams<F>) -> Transmittance<F> {
    let arm_db = channel.atten_db_per_km * channel.distance_km * cvt(0.5)
        + channel.extra_loss_db * cvt(0.5);
    Transmittance {
        eta: channel.det_efficiency * cvt::<F>(10.0).powf(-arm_db / cvt(10.0)),
    }
}

/// Per-window event probabilities shared by the closed form and the sampler.
struct WindowProbs<F: Real> {
    p_x: F,
    /// no-click of a dark-count-only detector
    quiet: F,
    /// no-click of a detector seeing mean eta*mu/2 photons
    z_no_click: F,
    /// no-click of a detector seeing mean 2*eta*mu photons
    b_no_click: F,
    e_d: F,
}

impl<F: Real> WindowProbs<F> {
    fn build(
        params: &ProtocolParams<F>,
        eta: Transmittance<F>,
        channel: &ChannelParams<F>,
    ) -> Result<Self> {
        let diff = (params.mu_a - params.mu_b).abs();
        if diff > cvt(1e-12) {
            return Err(Error::Asymmetry {
                mu_a: params.mu_a.to_f64().unwrap_or(f64::NAN),
                mu_b: params.mu_b.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mu = params.mu_a;
        let quiet = F::one() - channel.p_dc;
        Ok(WindowProbs {
            p_x: params.p_x,
            quiet,
            z_no_click: quiet * (-eta.eta * mu * cvt(0.5)).exp(),
            b_no_click: quiet * (-(eta.eta + eta.eta) * mu).exp(),
            e_d: channel.e_d,
        })
    }

    fn p_o(&self) -> F {
        F::one() - self.p_x
    }

    /// P(effective | Z window): the lit detector keeps quiet, the other fires.
    fn z_effective(&self) -> F {
        self.z_no_click * (F::one() - self.z_no_click)
    }

    /// P(effective | O window): dark count on one side only.
    fn o_effective(&self) -> F {
        (F::one() - self.quiet) * self.quiet
    }

    /// P(effective | B window): misaligned light reaches the heralding
    /// detector, or a dark count fires while the bright port stays dark.
    fn b_effective(&self) -> F {
        self.e_d * self.quiet * (F::one() - self.b_no_click)
            + (F::one() - self.e_d) * (F::one() - self.quiet) * self.b_no_click
    }
}

/// Closed-form expected counts under the symmetric linear model.
pub fn expected_counts<F: Real>(
    params: &ProtocolParams<F>,
    eta: Transmittance<F>,
    channel: &ChannelParams<F>,
) -> Result<ObservedStatistics<F>> {
    let probs = WindowProbs::build(params, eta, channel)?;
    let n = params.n_windows;
    let two = cvt::<F>(2.0);
    let n_z = two * probs.p_o() * probs.p_x * probs.z_effective() * n;
    let n_o = probs.p_o() * probs.p_o() * probs.o_effective() * n;
    let n_b = probs.p_x * probs.p_x * probs.b_effective() * n;
    ObservedStatistics::from_counts(n_z, n_o, n_b)
}

/// One sampled time window of the Monte Carlo oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSample {
    pub alice_sent: bool,
    pub bob_sent: bool,
    pub left_click: bool,
    pub right_click: bool,
}

impl WindowSample {
    /// Charlie heralds on "right clicks, left does not".
    pub fn effective(&self) -> bool {
        self.right_click && !self.left_click
    }
}

fn sample_window<F: Real>(probs: &WindowProbs<F>, rng: &mut ChaCha12Rng) -> WindowSample {
    let p = |v: F| v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
    let px = p(probs.p_x);
    let alice_sent = rng.random_bool(px);
    let bob_sent = rng.random_bool(px);
    let (left_no, right_no) = match (alice_sent, bob_sent) {
        (false, false) => (probs.quiet, probs.quiet),
        (true, true) => {
            if rng.random_bool(p(probs.e_d)) {
                // misaligned: the bright output lands on the heralding port
                (probs.quiet, probs.b_no_click)
            } else {
                (probs.b_no_click, probs.quiet)
            }
        }
        // one strong pulse splits evenly over both ports
        _ => (probs.z_no_click, probs.z_no_click),
    };
    WindowSample {
        alice_sent,
        bob_sent,
        left_click: !rng.random_bool(p(left_no)),
        right_click: !rng.random_bool(p(right_no)),
    }
}

/// Window-by-window Monte Carlo aggregate; deterministic for a fixed seed.
pub fn monte_carlo_counts<F: Real>(
    params: &ProtocolParams<F>,
    eta: Transmittance<F>,
    channel: &ChannelParams<F>,
    windows: u64,
    seed: u64,
) -> Result<ObservedStatistics<F>> {
    if windows > 1_000_000_000 {
        return Err(Error::invalid("windows", "Monte Carlo capped at 1e9 windows"));
    }
    let probs = WindowProbs::build(params, eta, channel)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (mut n_z, mut n_o, mut n_b) = (0u64, 0u64, 0u64);
    for _ in 0..windows {
        let w = sample_window(&probs, &mut rng);
        if w.effective() {
            match (w.alice_sent, w.bob_sent) {
                (false, false) => n_o += 1,
                (true, true) => n_b += 1,
                _ => n_z += 1,
            }
        }
    }
    ObservedStatistics::from_counts(
        cvt(n_z as f64),
        cvt(n_o as f64),
        cvt(n_b as f64),
    )
}

/// Per-window effective probabilities for each window class; the binomial
/// standard deviations derived from these calibrate the oracle comparison.
pub fn effective_probabilities<F: Real>(
    params: &ProtocolParams<F>,
    eta: Transmittance<F>,
    channel: &ChannelParams<F>,
) -> Result<[F; 3]> {
    let probs = WindowProbs::build(params, eta, channel)?;
    let two = cvt::<F>(2.0);
    Ok([
        two * probs.p_o() * probs.p_x * probs.z_effective(),
        probs.p_o() * probs.p_o() * probs.o_effective(),
        probs.p_x * probs.p_x * probs.b_effective(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelParams, ProtocolParams};

    fn params(mu: f64, p_x: f64, n: f64) -> ProtocolParams<f64> {
        ProtocolParams::new(mu, mu, p_x, n, 1e-10).unwrap()
    }

    #[test]
    fn transmittance_matches_the_stated_losses() {
        let mut ch = ChannelParams::<f64>::defaults(200.0);
        let eta = arm_transmittance(&ch);
        // 36 dB total loss at 200 km; frozen direct evaluation
        assert!((eta.eta - 0.010935763027981682).abs() < 1e-15, "{}", eta.eta);

        ch.distance_km = 0.0;
        ch.det_efficiency = 1.0;
        assert_eq!(arm_transmittance(&ch).eta, 1.0);

        ch = ChannelParams::defaults(100.0);
        ch.det_efficiency = 1.0;
        let total_db = -10.0 * arm_transmittance(&ch).eta.log10() * 2.0;
        assert!((total_db - 18.0).abs() < 1e-9, "total loss {total_db} dB");
    }

    #[test]
    fn closed_form_matches_frozen_example() {
        let mut ch = ChannelParams::defaults(0.0);
        ch.p_dc = 0.0;
        let eta = Transmittance::new(0.01).unwrap();
        let stats = expected_counts(&params(0.1, 0.5, 1e12), eta, &ch).unwrap();
        // direct high-precision evaluation of the closed form
        assert!(
            (stats.n_z - 249812572.89712924).abs() / stats.n_z < 1e-12,
            "n_Z = {}",
            stats.n_z
        );
    }

    #[test]
    fn no_strong_pulses_means_no_z_or_b_windows() {
        let mut p = params(0.1, 0.5, 1e10);
        p.p_x = 0.0;
        p.p_o = 1.0;
        let ch = ChannelParams::defaults(50.0);
        let stats = expected_counts(&p, arm_transmittance(&ch), &ch).unwrap();
        assert_eq!(stats.n_z, 0.0);
        assert_eq!(stats.n_b, 0.0);
        assert!(stats.n_o > 0.0);
    }

    #[test]
    fn noiseless_channel_has_no_o_or_b_clicks() {
        let mut ch = ChannelParams::defaults(50.0);
        ch.p_dc = 0.0;
        ch.e_d = 0.0;
        let stats = expected_counts(&params(0.1, 0.5, 1e10), arm_transmittance(&ch), &ch).unwrap();
        assert_eq!(stats.n_o, 0.0);
        assert_eq!(stats.n_b, 0.0);
        assert!(stats.n_z > 0.0);
        assert_eq!(stats.e_t, 0.0);
    }

    #[test]
    fn counts_are_linear_in_n_and_bounded() {
        let ch = ChannelParams::defaults(100.0);
        let eta = arm_transmittance(&ch);
        let a = expected_counts(&params(0.05, 0.3, 1e10), eta, &ch).unwrap();
        let b = expected_counts(&params(0.05, 0.3, 3e10), eta, &ch).unwrap();
        assert!((b.n_z / a.n_z - 3.0).abs() < 1e-12);
        assert!((b.n_o / a.n_o - 3.0).abs() < 1e-12);
        assert!((b.n_b / a.n_b - 3.0).abs() < 1e-12);
        assert!(a.n_z >= 0.0 && a.n_z <= 1e10);
        assert!(a.m_s <= 1e10);
    }

    #[test]
    fn asymmetric_intensities_are_rejected() {
        let mut p = params(0.05, 0.3, 1e10);
        p.mu_b = 0.06;
        let ch = ChannelParams::defaults(100.0);
        assert!(matches!(
            expected_counts(&p, arm_transmittance(&ch), &ch),
            Err(Error::Asymmetry { .. })
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let ch = ChannelParams::defaults(100.0);
        let eta = arm_transmittance(&ch);
        let p = params(0.1, 0.4, 1e5);
        let a = monte_carlo_counts(&p, eta, &ch, 100_000, 7).unwrap();
        let b = monte_carlo_counts(&p, eta, &ch, 100_000, 7).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_counts(&p, eta, &ch, 100_000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn monte_carlo_all_strong_noiseless_has_only_b_events() {
        let mut ch = ChannelParams::defaults(50.0);
        ch.p_dc = 0.0;
        ch.e_d = 0.0;
        let mut p = params(0.2, 0.5, 1e5);
        p.p_x = 1.0;
        p.p_o = 0.0;
        let stats = monte_carlo_counts(&p, arm_transmittance(&ch), &ch, 100_000, 3).unwrap();
        assert_eq!(stats.n_z, 0.0);
        assert_eq!(stats.n_o, 0.0);
    }

    #[test]
    fn monte_carlo_tracks_the_closed_form_within_5_sigma() {
        let windows = 1_000_000u64;
        let n = windows as f64;
        for (i, (mu, px, dist, pdc, ed)) in [
            (0.1, 0.5, 50.0, 1e-6, 0.02),
            (0.05, 0.25, 100.0, 1e-7, 0.05),
            (0.3, 0.7, 25.0, 1e-5, 0.01),
        ]
        .into_iter()
        .enumerate()
        {
            let mut ch = ChannelParams::defaults(dist);
            ch.p_dc = pdc;
            ch.e_d = ed;
            let mut p = params(mu, px, n);
            p.p_x = px;
            p.p_o = 1.0 - px;
            let eta = arm_transmittance(&ch);
            let expected = expected_counts(&p, eta, &ch).unwrap();
            let mc = monte_carlo_counts(&p, eta, &ch, windows, 1000 + i as u64).unwrap();
            let probs = effective_probabilities(&p, eta, &ch).unwrap();
            for (name, exp, got, prob) in [
                ("n_Z", expected.n_z, mc.n_z, probs[0]),
                ("n_O", expected.n_o, mc.n_o, probs[1]),
                ("n_B", expected.n_b, mc.n_b, probs[2]),
            ] {
                let sigma = (n * prob * (1.0 - prob)).sqrt();
                assert!(
                    (got - exp).abs() <= 5.0 * sigma.max(1.0),
                    "set {i} {name}: |{got} - {exp}| > 5 * {sigma}"
                );
            }
        }
    }
}
