//! Mapping from imperfect-source vacuum-projection bounds to the equivalent
//! perfect-protocol intensities.
//!
//! Only the projection probability onto vacuum is needed for each real
//! state; the closed form maps a (strong, weak) pair of lower bounds to the
//! intensity of the perfect coherent state the protocol is equivalent to:
//! `e^{-mu} = |sqrt(v_s v_w) - sqrt((1-v_s)(1-v_w))|^2`.

use crate::error::{Error, Result};
use crate::model::SourceBounds;
use crate::scalar::{cvt, Real};

fn check_projection<F: Real>(name: &'static str, v: F) -> Result<()> {
    if !(v >= cvt(0.5) && v <= F::one()) {
        return Err(Error::Domain {
            name,
            value: v.to_f64().unwrap_or(f64::NAN),
            domain: "[0.5, 1]",
        });
    }
    Ok(())
}

/// Equivalent intensity for one party:
/// `mu = -ln(|sqrt(v_s v_w) - sqrt((1-v_s)(1-v_w))|^2)`.
///
/// The inputs are the measurable lower bounds, so the result is the largest
/// (most conservative) intensity consistent with them.
pub fn equivalent_intensity<F: Real>(v_strong: F, v_weak: F) -> Result<F> {
    check_projection("v_strong", v_strong)?;
    check_projection("v_weak", v_weak)?;
    let overlap = (v_strong * v_weak).sqrt()
        - ((F::one() - v_strong) * (F::one() - v_weak)).sqrt();
    let modulus_sq = overlap * overlap;
    if modulus_sq <= F::zero() {
        return Err(Error::DegenerateMapping {
            v_strong: v_strong.to_f64().unwrap_or(f64::NAN),
            v_weak: v_weak.to_f64().unwrap_or(f64::NAN),
        });
    }
    // overlap is in (0, 1] for valid inputs, so mu is finite and >= 0.
    Ok(-modulus_sq.ln().min(F::zero()))
}

/// Equivalent intensities `(mu_A, mu_B)` for both parties.
pub fn equivalent_pair<F: Real>(bounds: &SourceBounds<F>) -> Result<(F, F)> {
    let mu_a = equivalent_intensity(bounds.a0, bounds.a_o0)?;
    let mu_b = equivalent_intensity(bounds.b0, bounds.b_o0)?;
    Ok((mu_a, mu_b))
}

/// Vacuum projection of the weak ("off") source given the signal intensity
/// and the modulator extinction ratio in dB: `e^{-mu 10^(-ER/10)}`.
///
/// Bridges a lab-measurable extinction ratio to the protocol input `v_weak`.
pub fn vacuum_projection_from_extinction<F: Real>(signal_mu: F, extinction_db: F) -> F {
    let leakage = signal_mu * cvt::<F>(10.0).powf(-extinction_db / cvt(10.0));
    (-leakage).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn perfect_vacuum_recovers_the_original_intensity() {
        let mu = equivalent_intensity((-0.1f64).exp(), 1.0).unwrap();
        assert!((mu - 0.1).abs() < 1e-14, "mu = {mu}");
    }

    #[test]
    fn imperfect_pair_matches_frozen_oracle() {
        // independently evaluated closed form at high precision
        let mu = equivalent_intensity(0.9f64, 0.999).unwrap();
        assert!((mu - 0.12756542645029481).abs() < 1e-14, "mu = {mu}");
    }

    #[test]
    fn degenerate_pair_is_an_error() {
        assert!(matches!(
            equivalent_intensity(0.5f64, 0.5),
            Err(Error::DegenerateMapping { .. })
        ));
    }

    #[test]
    fn pair_maps_both_parties() {
        let bounds = crate::model::SourceBounds::new(
            (-0.05f64).exp(),
            1.0,
            (-0.07f64).exp(),
            1.0,
        )
        .unwrap();
        let (mu_a, mu_b) = equivalent_pair(&bounds).unwrap();
        assert!((mu_a - 0.05).abs() < 1e-14);
        assert!((mu_b - 0.07).abs() < 1e-14);

        let sym = crate::model::SourceBounds::new(0.9f64, 0.999, 0.9, 0.999).unwrap();
        let (a, b) = equivalent_pair(&sym).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.12756542645029481).abs() < 1e-14);
    }

    #[test]
    fn monotone_decreasing_in_the_strong_bound() {
        let weak = 0.999f64;
        let mut prev = f64::INFINITY;
        for i in 1..=40 {
            let v = 0.5 + 0.5 * i as f64 / 40.0;
            let mu = equivalent_intensity(v, weak).unwrap();
            assert!(mu < prev, "mu({v}) = {mu} not below {prev}");
            prev = mu;
        }
    }

    #[test]
    fn boundary_and_symmetry_identities() {
        for i in 1..=20 {
            let v = 0.5 + 0.5 * i as f64 / 20.0;
            // v_weak = 1 collapses to -ln(v_strong)
            let mu = equivalent_intensity(v, 1.0).unwrap();
            assert!((mu + v.ln()).abs() < 1e-12);
        }
        for (a, b) in [(0.7f64, 0.95), (0.51, 0.99), (0.85, 0.85)] {
            let ab = equivalent_intensity(a, b).unwrap();
            let ba = equivalent_intensity(b, a).unwrap();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn extinction_helper_matches_direct_leakage() {
        // 40.1 dB extinction at mu = 0.01: leakage = mu * 10^-4.01
        let v = vacuum_projection_from_extinction(0.01f64, 40.1);
        let leak = 0.01 * 10f64.powf(-4.01);
        assert!((v - (-leak).exp()).abs() < 1e-15);
        assert!(v > 0.5, "weak-source projection stays a valid bound");
    }

    #[test]
    fn out_of_domain_projection_is_rejected() {
        assert!(equivalent_intensity(0.4f64, 0.9).is_err());
        assert!(equivalent_intensity(0.9f64, 1.1).is_err());
    }
}
