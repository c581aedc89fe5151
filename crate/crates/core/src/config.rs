//! TOML configuration files.
//!
//! A config has up to five sections — `[protocol]`, `[channel]`,
//! `[source_bounds]`, `[phaselock]`, `[optimizer]` — every field optional
//! except the source bounds (the whole section may simply be omitted).
//! Unknown keys are rejected so typos surface as errors instead of silently
//! falling back to defaults.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{
    validate, ChannelParams, EpsilonBudget, ProtocolParams, SourceBounds, ValidationReport,
};
use crate::optimizer::GridSpec;
use crate::phaselock::{DriftModel, FrameTiming, InterferenceModel, DEFAULT_QBER_FLOOR};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    #[serde(rename = "mu_B")]
    pub mu_b: f64,
    pub p_x: f64,
    /// Defaults to `1 - p_x` when omitted.
    pub p_o: Option<f64>,
    #[serde(rename = "N")]
    pub n: f64,
    pub f_ec: f64,
    pub d: u32,
    pub eps_coh: f64,
    /// Explicit epsilon components; give all four or none.
    pub eps_cor: Option<f64>,
    #[serde(rename = "eps_PA")]
    pub eps_pa: Option<f64>,
    pub eps_bar: Option<f64>,
    pub eps: Option<f64>,
    pub intensity_fluct: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            mu_a: 0.01,
            mu_b: 0.01,
            p_x: 0.25,
            p_o: None,
            n: 1e12,
            f_ec: 1.1,
            d: 8,
            eps_coh: 1e-10,
            eps_cor: None,
            eps_pa: None,
            eps_bar: None,
            eps: None,
            intensity_fluct: 0.0065,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub distance_km: f64,
    pub atten_db_per_km: f64,
    pub extra_loss_db: f64,
    pub det_efficiency: f64,
    /// Detector dark-count rate; divided by the clock when `P_dc` is absent.
    pub dark_rate_hz: f64,
    #[serde(rename = "P_dc")]
    pub p_dc: Option<f64>,
    pub e_d: f64,
    pub clock_hz: f64,
    pub duty_cycle: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            distance_km: 0.0,
            atten_db_per_km: 0.18,
            extra_loss_db: 0.0,
            det_efficiency: 0.69,
            dark_rate_hz: 0.1,
            p_dc: None,
            e_d: 0.03,
            clock_hz: 1.25e9,
            duty_cycle: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBoundsSection {
    pub a0: f64,
    pub a_o0: f64,
    pub b0: f64,
    pub b_o0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseLockSection {
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "Cd")]
    pub cd: f64,
    #[serde(rename = "V_pi")]
    pub v_pi: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub sigma_rad_per_sqrt_s: f64,
    pub e_floor: f64,
    pub seed: u64,
    pub frame_us: f64,
    pub reference_us: f64,
    pub quantum_us: f64,
    pub recovery_us: f64,
}

impl Default for PhaseLockSection {
    fn default() -> Self {
        let model = InterferenceModel::<f64>::default();
        let timing = FrameTiming::<f64>::default();
        let drift = DriftModel::<f64>::default();
        PhaseLockSection {
            c0: model.c0,
            cd: model.cd,
            v_pi: model.v_pi,
            v_min: model.v_min,
            v_max: model.v_max,
            sigma_rad_per_sqrt_s: drift.sigma_rad_per_sqrt_s,
            e_floor: DEFAULT_QBER_FLOOR,
            seed: drift.seed,
            frame_us: timing.frame_us,
            reference_us: timing.reference_us,
            quantum_us: timing.quantum_us,
            recovery_us: timing.recovery_us,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub mu_points: usize,
    pub px_points: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub px_min: f64,
    pub px_max: f64,
    pub refine: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let grid = GridSpec::<f64>::default();
        OptimizerSection {
            mu_points: grid.mu_points,
            px_points: grid.px_points,
            mu_min: grid.mu_min,
            mu_max: grid.mu_max,
            px_min: grid.px_min,
            px_max: grid.px_max,
            refine: grid.refine,
        }
    }
}

/// A parsed (not yet validated) configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub protocol: ProtocolSection,
    pub channel: ChannelSection,
    pub source_bounds: Option<SourceBoundsSection>,
    pub phaselock: PhaseLockSection,
    pub optimizer: OptimizerSection,
}

/// Domain objects assembled from a validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: ProtocolParams<f64>,
    pub channel: ChannelParams<f64>,
    pub bounds: Option<SourceBounds<f64>>,
    pub timing: FrameTiming<f64>,
    pub interference: InterferenceModel<f64>,
    pub drift: DriftModel<f64>,
    pub e_floor: f64,
    pub grid: GridSpec<f64>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> crate::error::Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn to_toml_string(&self) -> crate::error::Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    /// Build the domain records and validate every invariant; the error side
    /// carries one entry per violated field.
    pub fn resolve(&self) -> Result<Resolved, ValidationReport> {
        let mut report = ValidationReport::default();

        let p = &self.protocol;
        let eps_override = match (p.eps_cor, p.eps_pa, p.eps_bar, p.eps) {
            (None, None, None, None) => None,
            (Some(cor), Some(pa), Some(bar), Some(eps)) => {
                match EpsilonBudget::explicit(cor, pa, bar, eps) {
                    Ok(budget) => Some(budget),
                    Err(e) => {
                        report.push("protocol.eps_*", e.to_string());
                        None
                    }
                }
            }
            _ => {
                report.push(
                    "protocol.eps_*",
                    "give all four of eps_cor/eps_PA/eps_bar/eps, or none",
                );
                None
            }
        };
        let params = ProtocolParams {
            mu_a: p.mu_a,
            mu_b: p.mu_b,
            p_x: p.p_x,
            p_o: p.p_o.unwrap_or(1.0 - p.p_x),
            n_windows: p.n,
            f_ec: p.f_ec,
            d: p.d,
            eps_coh: p.eps_coh,
            eps_override,
            intensity_fluct: p.intensity_fluct,
        };

        let c = &self.channel;
        let channel = ChannelParams {
            distance_km: c.distance_km,
            atten_db_per_km: c.atten_db_per_km,
            extra_loss_db: c.extra_loss_db,
            det_efficiency: c.det_efficiency,
            p_dc: c.p_dc.unwrap_or(c.dark_rate_hz / c.clock_hz),
            e_d: c.e_d,
            clock_hz: c.clock_hz,
            duty_cycle: c.duty_cycle,
        };

        let bounds = self.source_bounds.as_ref().map(|b| SourceBounds {
            a0: b.a0,
            a_o0: b.a_o0,
            b0: b.b0,
            b_o0: b.b_o0,
        });

        report
            .violations
            .extend(validate(&params, &channel, bounds.as_ref()).violations);

        let pl = &self.phaselock;
        let timing = FrameTiming {
            frame_us: pl.frame_us,
            reference_us: pl.reference_us,
            quantum_us: pl.quantum_us,
            recovery_us: pl.recovery_us,
            clock_hz: c.clock_hz,
        };
        if let Err(e) = timing.validate() {
            report.push("phaselock.timing", e.to_string());
        }
        let interference = InterferenceModel {
            c0: pl.c0,
            cd: pl.cd,
            v_pi: pl.v_pi,
            v_min: pl.v_min,
            v_max: pl.v_max,
        };
        if let Err(e) = interference.validate() {
            report.push("phaselock.interference", e.to_string());
        }
        if !(pl.sigma_rad_per_sqrt_s >= 0.0) {
            report.push("phaselock.sigma_rad_per_sqrt_s", "must be >= 0");
        }
        if !(pl.e_floor >= 0.0 && pl.e_floor <= 1.0) {
            report.push("phaselock.e_floor", "must lie in [0, 1]");
        }

        let o = &self.optimizer;
        let grid = GridSpec {
            mu_points: o.mu_points,
            px_points: o.px_points,
            mu_min: o.mu_min,
            mu_max: o.mu_max,
            px_min: o.px_min,
            px_max: o.px_max,
            refine: o.refine,
            ..GridSpec::default()
        };
        if let Err(e) = grid.validate() {
            report.push("optimizer", e.to_string());
        }

        if !report.is_valid() {
            return Err(report);
        }
        Ok(Resolved {
            params,
            channel,
            bounds,
            timing,
            interference,
            drift: DriftModel {
                sigma_rad_per_sqrt_s: pl.sigma_rad_per_sqrt_s,
                seed: pl.seed,
            },
            e_floor: pl.e_floor,
            grid,
        })
    }
}
