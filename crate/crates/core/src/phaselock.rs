//! Discrete-time simulator of fiber phase drift and the two-phase-scan
//! feedback loop.
//!
//! The interference model is `C_left = C0 cos(phi) + C0 + C_d` with the
//! complementary port shifted by pi; the phase seen by the detectors is
//! `phi_eff(V) = phi_true + pi V / V_pi`. Each 40 us frame performs one
//! scan — counts `(N0, M0)` at the probing voltage `V_i` and `(N1, M1)` at
//! `V_i + V_pi/2` — inverts the counting matrix to the zero-phase voltage
//! `V0`, and (when the loop is enabled) applies it. Channel drift is a
//! Wiener process, the only noise source besides Poisson counting noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cvt, Real};

/// Default QBER floor (misalignment plus dark counts), calibrated so the
/// default drift and timing land the binned trace mean at 3.6%.
pub const DEFAULT_QBER_FLOOR: f64 = 0.0359;

/// Frame structure of the time-multiplexed link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct FrameTiming<F: Real> {
    pub frame_us: F,
    /// Reference window; two equal halves, one per phase setting.
    pub reference_us: F,
    pub quantum_us: F,
    pub recovery_us: F,
    pub clock_hz: F,
}

impl<F: Real> Default for FrameTiming<F> {
    fn default() -> Self {
        FrameTiming {
            frame_us: cvt(40.0),
            reference_us: cvt(19.6),
            quantum_us: cvt(20.0),
            recovery_us: cvt(0.4),
            clock_hz: cvt(1.25e9),
        }
    }
}

impl<F: Real> FrameTiming<F> {
    pub fn validate(&self) -> Result<()> {
        let sum = self.reference_us + self.quantum_us + self.recovery_us;
        if (sum - self.frame_us).abs() > cvt(1e-9) {
            return Err(Error::invalid(
                "frame_us",
                "reference + quantum + recovery must sum to the frame period",
            ));
        }
        if !(self.frame_us > F::zero() && self.clock_hz > F::zero()) {
            return Err(Error::invalid("frame_us/clock_hz", "must be > 0"));
        }
        Ok(())
    }

    pub fn frame_period_s(&self) -> F {
        self.frame_us * cvt(1e-6)
    }
}

/// Interference amplitudes and the modulator's electrical limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct InterferenceModel<F: Real> {
    /// Interference amplitude: counts per reference half-window.
    pub c0: F,
    /// Background counts per half-window (dark counts and leakage).
    pub cd: F,
    /// Half-wave voltage of the phase modulator.
    pub v_pi: F,
    pub v_min: F,
    pub v_max: F,
}

impl<F: Real> Default for InterferenceModel<F> {
    fn default() -> Self {
        // 2 C0 + C_d anchors the locked trace near 90000 counts.
        InterferenceModel {
            c0: cvt(44950.0),
            cd: cvt(100.0),
            v_pi: cvt(7.5),
            v_min: cvt(-15.54),
            v_max: cvt(15.96),
        }
    }
}

impl<F: Real> InterferenceModel<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > F::zero()) {
            return Err(Error::invalid("C0", "must be > 0"));
        }
        if !(self.cd >= F::zero()) {
            return Err(Error::invalid("Cd", "must be >= 0"));
        }
        if !(self.v_pi > F::zero()) {
            return Err(Error::invalid("V_pi", "must be > 0"));
        }
        if self.v_min > -self.v_pi || self.v_max < self.v_pi + self.v_pi / cvt(2.0) {
            return Err(Error::invalid(
                "v_range",
                "must cover [-V_pi, 1.5 V_pi] so wrapped probing voltages stay applicable",
            ));
        }
        Ok(())
    }
}

/// Wiener-process channel drift: `dphi = sigma sqrt(dt) N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct DriftModel<F: Real> {
    pub sigma_rad_per_sqrt_s: F,
    pub seed: u64,
}

impl<F: Real> Default for DriftModel<F> {
    fn default() -> Self {
        DriftModel { sigma_rad_per_sqrt_s: cvt(0.5), seed: 1 }
    }
}

/// Counts recorded at the two probing voltages: `(N, M)` are the left and
/// right detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct CountingMatrix<F: Real> {
    pub n0: F,
    pub m0: F,
    pub n1: F,
    pub m1: F,
}

impl<F: Real> Default for CountingMatrix<F> {
    fn default() -> Self {
        CountingMatrix { n0: F::zero(), m0: F::zero(), n1: F::zero(), m1: F::zero() }
    }
}

/// State of the feedback loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct PhaseLockState<F: Real> {
    /// Channel phase drift in radians.
    pub phi_true: F,
    /// Voltage currently applied to the modulator.
    pub v_current: F,
    pub counting_matrix: CountingMatrix<F>,
    /// Most recent zero-phase voltage estimate.
    pub v0_estimate: F,
}

fn wrap_to_pi<F: Real>(x: F) -> F {
    let two_pi = F::PI() + F::PI();
    let mut r = x % two_pi;
    if r > F::PI() {
        r -= two_pi;
    } else if r <= -F::PI() {
        r += two_pi;
    }
    r
}

/// Wrap a voltage into `(-V_pi, V_pi]`; shifting by `2 V_pi` is an optical
/// no-op, so this keeps the modulator inside its electrical range.
fn wrap_voltage<F: Real>(v: F, v_pi: F) -> F {
    let period = v_pi + v_pi;
    let mut r = v % period;
    if r > v_pi {
        r -= period;
    } else if r <= -v_pi {
        r += period;
    }
    r
}

fn poisson_sample<F: Real>(mean: F, rng: &mut ChaCha12Rng) -> F {
    let lambda = mean.to_f64().unwrap_or(0.0);
    if lambda <= 0.0 {
        return F::zero();
    }
    cvt(Poisson::new(lambda).expect("positive mean").sample(rng))
}

/// Mean (or Poisson-sampled) counts of the two detectors at a given
/// effective phase.
pub fn detector_counts<F: Real>(
    phi_eff: F,
    model: &InterferenceModel<F>,
    noisy: bool,
    rng: &mut ChaCha12Rng,
) -> (F, F) {
    let left = model.c0 * phi_eff.cos() + model.c0 + model.cd;
    let right = model.c0 * (phi_eff + F::PI()).cos() + model.c0 + model.cd;
    if noisy {
        (poisson_sample(left, rng), poisson_sample(right, rng))
    } else {
        (left, right)
    }
}

/// One two-phase scan: counts at `V_i` and at `V_i + V_pi/2`.
pub fn two_phase_scan<F: Real>(
    state: &PhaseLockState<F>,
    model: &InterferenceModel<F>,
    noisy: bool,
    rng: &mut ChaCha12Rng,
) -> CountingMatrix<F> {
    let phase_of = |v: F| state.phi_true + F::PI() * v / model.v_pi;
    let (n0, m0) = detector_counts(phase_of(state.v_current), model, noisy, rng);
    let half = model.v_pi / cvt(2.0);
    let (n1, m1) = detector_counts(phase_of(state.v_current + half), model, noisy, rng);
    CountingMatrix { n0, m0, n1, m1 }
}

/// Invert a counting matrix to the zero-phase voltage.
///
/// `V'0` comes from the arccos branch, `V''0` from the arcsin branch; the
/// two are reconciled modulo `2 V_pi` and averaged. Ratios are clamped to
/// `[-1, 1]` against Poisson overshoot. Background counts are neglected
/// during estimation; they only bias the ratios slightly towards zero.
pub fn estimate_v0<F: Real>(matrix: &CountingMatrix<F>, v_i: F, v_pi: F) -> Result<F> {
    let s0 = matrix.n0 + matrix.m0;
    let s1 = matrix.n1 + matrix.m1;
    if !(s0 > F::zero()) || !(s1 > F::zero()) {
        return Err(Error::EmptyMatrix);
    }
    let clamp1 = |x: F| x.min(F::one()).max(-F::one());
    let r_c = clamp1((matrix.n0 - matrix.m0) / s0);
    let r_s = clamp1((matrix.n1 - matrix.m1) / s1);
    let v_c = v_pi / F::PI() * r_c.acos();
    let v_s = v_pi / F::PI() * r_s.asin();

    let v0_cos = if -r_s > F::zero() { v_i - v_c } else { v_i + v_c };
    let v0_sin = if r_c > F::zero() {
        v_i + v_s
    } else {
        v_i - v_s - v_pi
    };
    // The two branches can land one 2 V_pi period apart; bring the arcsin
    // estimate next to the arccos one before averaging.
    let period = v_pi + v_pi;
    let shift = ((v0_cos - v0_sin) / period).round();
    let v0_sin = v0_sin + shift * period;
    Ok((v0_cos + v0_sin) / cvt(2.0))
}

/// One recorded point of a feedback run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct FeedbackSample<F: Real> {
    pub time_s: F,
    /// Left-detector counts of the first reference half-window.
    pub counts: F,
    /// Residual interference phase after this frame's correction.
    pub phi_residual_rad: F,
    pub v_applied: F,
}

/// Stateful frame-by-frame simulator, stepped once per 40 us frame.
pub struct FeedbackLoop<F: Real> {
    timing: FrameTiming<F>,
    model: InterferenceModel<F>,
    sigma: F,
    state: PhaseLockState<F>,
    rng: ChaCha12Rng,
    time_s: F,
}

impl<F: Real> FeedbackLoop<F> {
    pub fn new(
        timing: FrameTiming<F>,
        model: InterferenceModel<F>,
        drift: DriftModel<F>,
        seed: u64,
    ) -> Result<Self> {
        timing.validate()?;
        model.validate()?;
        if !(drift.sigma_rad_per_sqrt_s >= F::zero()) {
            return Err(Error::invalid("sigma_rad_per_sqrt_s", "must be >= 0"));
        }
        Ok(FeedbackLoop {
            timing,
            model,
            sigma: drift.sigma_rad_per_sqrt_s,
            state: PhaseLockState {
                phi_true: F::zero(),
                v_current: F::zero(),
                counting_matrix: CountingMatrix::default(),
                v0_estimate: F::zero(),
            },
            rng: ChaCha12Rng::seed_from_u64(seed),
            time_s: F::zero(),
        })
    }

    pub fn state(&self) -> &PhaseLockState<F> {
        &self.state
    }

    /// Advance one frame: drift, scan, and (when enabled) correct.
    pub fn step(&mut self, enabled: bool) -> FeedbackSample<F> {
        let dt = self.timing.frame_period_s();
        let z: f64 = self.rng.sample(rand_distr::StandardNormal);
        self.state.phi_true += self.sigma * dt.sqrt() * cvt(z);

        let matrix = two_phase_scan(&self.state, &self.model, true, &mut self.rng);
        let counts = matrix.n0;
        self.state.counting_matrix = matrix;
        if enabled {
            if let Ok(v0) = estimate_v0(&matrix, self.state.v_current, self.model.v_pi) {
                let wrapped = wrap_voltage(v0, self.model.v_pi);
                self.state.v0_estimate = wrapped;
                self.state.v_current = wrapped.max(self.model.v_min).min(self.model.v_max);
            }
        }
        self.time_s += dt;
        FeedbackSample {
            time_s: self.time_s,
            counts,
            phi_residual_rad: wrap_to_pi(
                self.state.phi_true + F::PI() * self.state.v_current / self.model.v_pi,
            ),
            v_applied: self.state.v_current,
        }
    }
}

fn check_duration<F: Real>(duration_s: F) -> Result<()> {
    if !(duration_s >= F::zero() && duration_s <= cvt(3600.0)) {
        return Err(Error::invalid("duration_s", "must lie in [0, 3600] seconds"));
    }
    Ok(())
}

/// Run the loop for `duration_s` with the feedback always on or always off,
/// recording every `record_every`-th frame.
pub fn run_feedback<F: Real>(
    duration_s: F,
    timing: FrameTiming<F>,
    model: InterferenceModel<F>,
    drift: DriftModel<F>,
    enabled: bool,
    seed: u64,
    record_every: usize,
) -> Result<Vec<FeedbackSample<F>>> {
    run_pattern(&[(enabled, duration_s)], timing, model, drift, seed, record_every)
}

/// Run a sequence of (enabled, duration) segments over one shared loop.
pub fn run_pattern<F: Real>(
    segments: &[(bool, F)],
    timing: FrameTiming<F>,
    model: InterferenceModel<F>,
    drift: DriftModel<F>,
    seed: u64,
    record_every: usize,
) -> Result<Vec<FeedbackSample<F>>> {
    let total: F = segments.iter().map(|&(_, d)| d).sum();
    check_duration(total)?;
    let stride = record_every.max(1);
    let mut lock = FeedbackLoop::new(timing, model, drift, seed)?;
    let dt = timing.frame_period_s();
    let mut trace = Vec::new();
    let mut frame_index = 0usize;
    for &(enabled, seg_duration) in segments {
        if !(seg_duration >= F::zero()) {
            return Err(Error::invalid("pattern", "segment durations must be >= 0"));
        }
        let frames = (seg_duration / dt).floor().to_usize().unwrap_or(0);
        for _ in 0..frames {
            let sample = lock.step(enabled);
            frame_index += 1;
            if frame_index % stride == 0 {
                trace.push(sample);
            }
        }
    }
    Ok(trace)
}

/// One 10-second QBER bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct QberSample<F: Real> {
    pub time_s: F,
    pub qber: F,
}

/// Quantum-window QBER under active compensation, binned over 10 s.
///
/// Per frame the instantaneous error rate is
/// `e_floor + (1 - cos(phi_residual)) / 2`.
pub fn qber_trace<F: Real>(
    duration_s: F,
    timing: FrameTiming<F>,
    model: InterferenceModel<F>,
    drift: DriftModel<F>,
    e_floor: F,
    seed: u64,
) -> Result<Vec<QberSample<F>>> {
    check_duration(duration_s)?;
    if !(e_floor >= F::zero() && e_floor <= F::one()) {
        return Err(Error::invalid("e_floor", "must lie in [0, 1]"));
    }
    let mut lock = FeedbackLoop::new(timing, model, drift, seed)?;
    let dt = timing.frame_period_s();
    let frames = (duration_s / dt).floor().to_usize().unwrap_or(0);
    let bin_frames = (cvt::<F>(10.0) / dt).round().to_usize().unwrap_or(1).max(1);
    let mut trace = Vec::new();
    let mut acc = F::zero();
    let mut in_bin = 0usize;
    for _ in 0..frames {
        let sample = lock.step(true);
        acc += e_floor + (F::one() - sample.phi_residual_rad.cos()) * cvt(0.5);
        in_bin += 1;
        if in_bin == bin_frames {
            trace.push(QberSample {
                time_s: sample.time_s,
                qber: acc / cvt(in_bin as f64),
            });
            acc = F::zero();
            in_bin = 0;
        }
    }
    Ok(trace)
}
