//! Global optimization of `(mu, p_x)` for a given channel.
//!
//! Two stages: a coarse grid over `mu in [0, 0.5] x p_x in [0, 1]` (the mu
//! axis is log-spaced — the optimum migrates towards 1e-3 at long distance,
//! where a uniform 32-point axis has no support at all), then a bounded
//! Nelder-Mead simplex started from the best grid cell. Both stages are
//! fully deterministic; grid ties resolve to the lowest `mu`, then the
//! lowest `p_x`.

use crate::error::{Error, Result};
use crate::keyrate::evaluate;
use crate::model::{ChannelParams, KeyRateReport, ProtocolParams};
use crate::scalar::{cvt, Real};

/// Search-grid geometry and refinement knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<F: Real> {
    pub mu_points: usize,
    pub px_points: usize,
    /// Smallest nonzero intensity on the (log-spaced) grid.
    pub mu_min: F,
    pub mu_max: F,
    pub px_min: F,
    pub px_max: F,
    /// Run the simplex refinement after the grid stage.
    pub refine: bool,
    pub refine_rel_tol: F,
    pub refine_max_iter: usize,
}

impl<F: Real> Default for GridSpec<F> {
    fn default() -> Self {
        GridSpec {
            mu_points: 32,
            px_points: 32,
            mu_min: cvt(1e-4),
            mu_max: cvt(0.5),
            px_min: F::zero(),
            px_max: F::one(),
            refine: true,
            refine_rel_tol: cvt(1e-6),
            refine_max_iter: 200,
        }
    }
}

impl<F: Real> GridSpec<F> {
    pub fn validate(&self) -> Result<()> {
        if self.mu_points < 8 || self.px_points < 8 {
            return Err(Error::invalid(
                "grid",
                "at least 8 points per axis are required",
            ));
        }
        if !(self.mu_min > F::zero() && self.mu_min < self.mu_max) {
            return Err(Error::invalid("mu_min", "need 0 < mu_min < mu_max"));
        }
        if !(self.px_min >= F::zero() && self.px_min < self.px_max && self.px_max <= F::one()) {
            return Err(Error::invalid("px range", "need 0 <= px_min < px_max <= 1"));
        }
        Ok(())
    }

    fn mu_at(&self, i: usize) -> F {
        let t = cvt::<F>(i as f64 / (self.mu_points - 1) as f64);
        self.mu_min * (self.mu_max / self.mu_min).powf(t)
    }

    fn px_at(&self, j: usize) -> F {
        let t = cvt::<F>(j as f64 / (self.px_points - 1) as f64);
        self.px_min + (self.px_max - self.px_min) * t
    }
}

fn with_point<F: Real>(fixed: &ProtocolParams<F>, mu: F, p_x: F) -> ProtocolParams<F> {
    let mut p = *fixed;
    p.mu_a = mu;
    p.mu_b = mu;
    p.p_x = p_x;
    p.p_o = F::one() - p_x;
    p
}

/// `r_coh` at a candidate point; infeasible points count as no rate.
fn objective<F: Real>(
    channel: &ChannelParams<F>,
    fixed: &ProtocolParams<F>,
    mu: F,
    p_x: F,
) -> Option<KeyRateReport<F>> {
    evaluate(&with_point(fixed, mu, p_x), channel, None)
        .ok()
        .filter(|r| r.r_coh.is_finite())
}

/// Bounded Nelder-Mead descent on `-r_coh`, started from the best grid cell.
fn refine_simplex<F: Real>(
    channel: &ChannelParams<F>,
    fixed: &ProtocolParams<F>,
    grid: &GridSpec<F>,
    start: (F, F),
) -> Option<(F, F, KeyRateReport<F>)> {
    let clamp = |mu: F, px: F| {
        (
            mu.max(F::zero()).min(grid.mu_max),
            px.max(grid.px_min).min(grid.px_max),
        )
    };
    let value = |mu: F, px: F| {
        objective(channel, fixed, mu, px)
            .map(|r| -r.r_coh)
            .unwrap_or_else(F::infinity)
    };

    // Initial simplex: the grid cell plus one geometric step per axis.
    let mu_ratio = (grid.mu_max / grid.mu_min)
        .powf(F::one() / cvt((grid.mu_points - 1) as f64));
    let px_step = (grid.px_max - grid.px_min) / cvt((grid.px_points - 1) as f64);
    let (mu0, px0) = start;
    let mu1 = if mu0 * mu_ratio <= grid.mu_max { mu0 * mu_ratio } else { mu0 / mu_ratio };
    let px1 = if px0 + px_step <= grid.px_max { px0 + px_step } else { px0 - px_step };
    let mut simplex = [
        (mu0, px0, value(mu0, px0)),
        (mu1, px0, value(mu1, px0)),
        (mu0, px1, value(mu0, px1)),
    ];

    let (alpha, gamma, rho, sigma) = (cvt::<F>(1.0), cvt::<F>(2.0), cvt::<F>(0.5), cvt::<F>(0.5));
    for _ in 0..grid.refine_max_iter {
        simplex.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal));
        let [best, mid, worst] = simplex;

        let mu_spread = (best.0 - worst.0).abs().max((best.0 - mid.0).abs());
        let px_spread = (best.1 - worst.1).abs().max((best.1 - mid.1).abs());
        if mu_spread <= grid.refine_rel_tol * grid.mu_max
            && px_spread <= grid.refine_rel_tol * (grid.px_max - grid.px_min)
        {
            break;
        }

        let half = cvt::<F>(0.5);
        let cen = ((best.0 + mid.0) * half, (best.1 + mid.1) * half);
        let reflect = clamp(
            cen.0 + alpha * (cen.0 - worst.0),
            cen.1 + alpha * (cen.1 - worst.1),
        );
        let f_reflect = value(reflect.0, reflect.1);

        let replacement = if f_reflect < best.2 {
            let expand = clamp(
                cen.0 + gamma * (reflect.0 - cen.0),
                cen.1 + gamma * (reflect.1 - cen.1),
            );
            let f_expand = value(expand.0, expand.1);
            if f_expand < f_reflect {
                (expand.0, expand.1, f_expand)
            } else {
                (reflect.0, reflect.1, f_reflect)
            }
        } else if f_reflect < mid.2 {
            (reflect.0, reflect.1, f_reflect)
        } else {
            let contract = if f_reflect < worst.2 {
                clamp(
                    cen.0 + rho * (reflect.0 - cen.0),
                    cen.1 + rho * (reflect.1 - cen.1),
                )
            } else {
                clamp(
                    cen.0 + rho * (worst.0 - cen.0),
                    cen.1 + rho * (worst.1 - cen.1),
                )
            };
            let f_contract = value(contract.0, contract.1);
            if f_contract < worst.2.min(f_reflect) {
                (contract.0, contract.1, f_contract)
            } else {
                // shrink towards the best vertex
                let s1 = clamp(
                    best.0 + sigma * (mid.0 - best.0),
                    best.1 + sigma * (mid.1 - best.1),
                );
                let s2 = clamp(
                    best.0 + sigma * (worst.0 - best.0),
                    best.1 + sigma * (worst.1 - best.1),
                );
                simplex = [
                    best,
                    (s1.0, s1.1, value(s1.0, s1.1)),
                    (s2.0, s2.1, value(s2.0, s2.1)),
                ];
                continue;
            }
        };
        simplex = [best, mid, replacement];
    }

    simplex
        .iter()
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal))
        .filter(|v| v.2.is_finite())
        .and_then(|&(mu, px, _)| objective(channel, fixed, mu, px).map(|r| (mu, px, r)))
}

/// Maximize `r_coh` over `(mu, p_x)`; returns the optimizing parameters and
/// their full report.
pub fn optimize<F: Real>(
    channel: &ChannelParams<F>,
    fixed: &ProtocolParams<F>,
    grid: &GridSpec<F>,
) -> Result<(ProtocolParams<F>, KeyRateReport<F>)> {
    grid.validate()?;
    let mut best: Option<(F, F, KeyRateReport<F>)> = None;
    for i in 0..grid.mu_points {
        let mu = grid.mu_at(i);
        for j in 0..grid.px_points {
            let px = grid.px_at(j);
            if let Some(report) = objective(channel, fixed, mu, px) {
                let better = match &best {
                    Some((_, _, cur)) => report.r_coh > cur.r_coh,
                    None => report.r_coh > F::zero(),
                };
                if better {
                    best = Some((mu, px, report));
                }
            }
        }
    }
    let (grid_mu, grid_px, grid_report) = best.ok_or(Error::NoPositiveRate)?;

    let (mu, px, report) = if grid.refine {
        match refine_simplex(channel, fixed, grid, (grid_mu, grid_px)) {
            Some(refined) if refined.2.r_coh >= grid_report.r_coh => refined,
            _ => (grid_mu, grid_px, grid_report),
        }
    } else {
        (grid_mu, grid_px, grid_report)
    };

    Ok((with_point(fixed, mu, px), report))
}

/// One line of a distance sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<F: Real> {
    pub distance_km: F,
    pub mu: F,
    pub p_x: F,
    pub r: F,
    pub r_coh: F,
    pub skr_bps: F,
    pub e_ph: F,
    pub n_z: F,
}

/// Optimize once per distance; distances that support no key produce an
/// all-zero row so the output stays rectangular.
pub fn sweep<F: Real>(
    channel_template: &ChannelParams<F>,
    distances: &[F],
    fixed: &ProtocolParams<F>,
    grid: &GridSpec<F>,
) -> Result<Vec<SweepRow<F>>> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(distances.len());
    for &distance_km in distances {
        let mut channel = *channel_template;
        channel.distance_km = distance_km;
        let row = match optimize(&channel, fixed, grid) {
            Ok((params, report)) => SweepRow {
                distance_km,
                mu: params.mu_a,
                p_x: params.p_x,
                r: report.r,
                r_coh: report.r_coh,
                skr_bps: report.skr_bps,
                e_ph: report.e_ph,
                n_z: report.stats.n_z,
            },
            Err(Error::NoPositiveRate) => SweepRow {
                distance_km,
                mu: F::zero(),
                p_x: F::zero(),
                r: F::zero(),
                r_coh: F::zero(),
                skr_bps: F::zero(),
                e_ph: F::zero(),
                n_z: F::zero(),
            },
            Err(other) => return Err(other),
        };
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelParams, ProtocolParams};

    fn fixed(n: f64) -> ProtocolParams<f64> {
        ProtocolParams::new(0.01, 0.01, 0.25, n, 1e-10).unwrap()
    }

    fn fast_grid() -> GridSpec<f64> {
        GridSpec {
            mu_points: 12,
            px_points: 12,
            refine_max_iter: 60,
            ..GridSpec::default()
        }
    }

    #[test]
    fn rejects_a_coarse_grid() {
        let grid = GridSpec { mu_points: 4, ..GridSpec::default() };
        let ch = ChannelParams::defaults(50.0);
        assert!(matches!(
            optimize(&ch, &fixed(1e11), &grid),
            Err(Error::Invalid { .. })
        ));
    }

    #[test]
    fn optimum_respects_the_search_box() {
        let ch = ChannelParams::defaults(50.0);
        let (params, report) = optimize(&ch, &fixed(1e11), &fast_grid()).unwrap();
        assert!(params.mu_a >= 0.0 && params.mu_a <= 0.5);
        assert!(params.p_x >= 0.0 && params.p_x <= 1.0);
        assert!(report.r_coh > 0.0);
        assert_eq!(params.mu_a, params.mu_b);
        assert!((params.p_o - (1.0 - params.p_x)).abs() < 1e-15);
    }

    #[test]
    fn absurd_loss_has_no_positive_rate() {
        let mut ch = ChannelParams::defaults(50.0);
        ch.extra_loss_db = 200.0;
        assert!(matches!(
            optimize(&ch, &fixed(1e11), &fast_grid()),
            Err(Error::NoPositiveRate)
        ));
    }

    #[test]
    fn refinement_never_loses_to_the_grid() {
        let ch = ChannelParams::defaults(75.0);
        let coarse = GridSpec { refine: false, ..fast_grid() };
        let (_, grid_only) = optimize(&ch, &fixed(1e11), &coarse).unwrap();
        let (_, refined) = optimize(&ch, &fixed(1e11), &fast_grid()).unwrap();
        assert!(refined.r_coh >= grid_only.r_coh);
    }

    #[test]
    fn optimize_is_deterministic() {
        let ch = ChannelParams::defaults(60.0);
        let a = optimize(&ch, &fixed(1e11), &fast_grid()).unwrap();
        let b = optimize(&ch, &fixed(1e11), &fast_grid()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn sweep_emits_one_row_per_distance() {
        let ch = ChannelParams::defaults(0.0);
        let rows = sweep(&ch, &[25.0, 50.0], &fixed(1e11), &fast_grid()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].r_coh >= rows[1].r_coh);
        assert!(rows.iter().all(|r| r.skr_bps > 0.0));

        let empty = sweep(&ch, &[], &fixed(1e11), &fast_grid()).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn sweep_pads_infeasible_distances_with_zero_rows() {
        let ch = ChannelParams::defaults(0.0);
        let rows = sweep(&ch, &[50.0, 2000.0], &fixed(1e10), &fast_grid()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].r_coh > 0.0);
        assert_eq!(rows[1].r_coh, 0.0);
        assert_eq!(rows[1].skr_bps, 0.0);
    }
}
