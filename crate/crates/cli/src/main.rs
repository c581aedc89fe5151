//! `scsqkd` — finite-key rates, parameter optimization and phase-lock
//! simulation from a TOML configuration.
//!
//! Exit codes: 0 success (positive key rate where applicable), 1 bad
//! configuration or arguments, 2 zero key rate / infeasible channel.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use scsqkd::config::{ConfigFile, Resolved};
use scsqkd::keyrate::evaluate;
use scsqkd::mapping::equivalent_pair;
use scsqkd::optimizer::{optimize, sweep};
use scsqkd::phaselock::{qber_trace, run_pattern};
use scsqkd::{Error, KeyRateReport};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NO_KEY: u8 = 2;

#[derive(Parser)]
#[command(name = "scsqkd", version, about = "Side-channel-secure QKD finite-key toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TraceKind {
    /// Detector counts / residual phase of the feedback loop (on/off pattern).
    Feedback,
    /// 10 s binned QBER with the loop always on.
    Qber,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the finite-key secure rates for one configuration.
    Keyrate {
        #[arg(long)]
        config: PathBuf,
        /// Also write the result as a one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize per distance over a range and write the curve as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dmin: f64,
        #[arg(long)]
        dmax: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Globally optimize (mu, p_x) for the configured channel.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the phase-compensation loop and write the trace as CSV.
    Phaselock {
        #[arg(long)]
        config: PathBuf,
        /// Total simulated seconds; defaults to one pass of the pattern
        /// (feedback) or 300 s (qber).
        #[arg(long)]
        duration: Option<f64>,
        /// Feedback schedule, e.g. "on:60,off:60"; repeated cyclically when
        /// --duration exceeds one pass.
        #[arg(long, default_value = "on:60,off:60")]
        pattern: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TraceKind::Feedback)]
        trace: TraceKind,
        /// Overrides the [phaselock] seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Record every n-th frame (1 = all 25000 frames per second).
        #[arg(long, default_value_t = 1250)]
        stride: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn load_config(path: &Path) -> Result<Resolved> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config = ConfigFile::from_toml_str(&text).context("cannot parse config")?;
    match config.resolve() {
        Ok(resolved) => Ok(resolved),
        Err(report) => {
            for v in &report.violations {
                eprintln!("config error: {}: {}", v.field, v.message);
            }
            bail!("{} invalid field(s) in {}", report.violations.len(), path.display());
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Keyrate { config, out } => cmd_keyrate(&config, out.as_deref()),
        Command::Sweep { config, dmin, dmax, step, out } => {
            cmd_sweep(&config, dmin, dmax, step, &out)
        }
        Command::Optimize { config } => cmd_optimize(&config),
        Command::Phaselock { config, duration, pattern, out, trace, seed, stride } => {
            cmd_phaselock(&config, duration, &pattern, &out, trace, seed, stride)
        }
    }
}

const SWEEP_HEADER: &str = "distance_km,mu,p_x,R,R_coh,skr_bps,e_ph,n_Z";

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut file = fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(())
}

fn report_row(distance_km: f64, mu: f64, p_x: f64, r: &KeyRateReport) -> String {
    format!(
        "{distance_km},{mu},{p_x},{},{},{},{},{}",
        r.r, r.r_coh, r.skr_bps, r.e_ph, r.stats.n_z
    )
}

fn print_report(resolved: &Resolved, mu: (f64, f64), report: &KeyRateReport) {
    let ch = &resolved.channel;
    let total_loss = ch.atten_db_per_km * ch.distance_km + ch.extra_loss_db;
    println!("finite-key report");
    println!("  {:<22} {}", "distance_km", ch.distance_km);
    println!("  {:<22} {:.2}", "total_loss_db", total_loss);
    println!("  {:<22} {:e} / {:e}", "mu_A / mu_B", mu.0, mu.1);
    println!("  {:<22} {}", "p_x", resolved.params.p_x);
    println!("  {:<22} {:e}", "N", resolved.params.n_windows);
    let s = &report.stats;
    println!("  {:<22} {:.6e}", "n_Z", s.n_z);
    println!("  {:<22} {:.6e} / {:.6e}", "n_O / n_B", s.n_o, s.n_b);
    println!("  {:<22} {:.6e} / {:.4e}", "M_S / E_t", s.m_s, s.e_t);
    println!("  {:<22} {:.6e} / {:.6e}", "<n_O>^U / <n_B>^U", report.n_o_exp_upper, report.n_b_exp_upper);
    println!("  {:<22} {:.6e}", "N_ph upper bound", report.n_ph_bar);
    println!("  {:<22} {:.6}", "e_ph", report.e_ph);
    let b = &report.cost_breakdown;
    println!("  cost breakdown (bits)");
    println!("    {:<20} {:.6e}", "untagged gain", b.untagged_gain);
    println!("    {:<20} {:.6e}", "error correction", b.error_correction);
    println!("    {:<20} {:.6e}", "correctness check", b.cor_cost);
    println!("    {:<20} {:.6e}", "privacy amp", b.pa_cost);
    println!("    {:<20} {:.6e}", "entropy deviation", b.entropy_dev_cost);
    println!("    {:<20} {:.6e}", "coherent shortening", b.coherent_correction);
    println!("  {:<22} {:.6e}", "R (collective)", report.r);
    println!("  {:<22} {:.6e}", "R_coh (coherent)", report.r_coh);
    println!("  {:<22} {:.3e}", "eps_coh", report.eps_coh);
    println!("  {:<22} {:.4}", "skr_bps", report.skr_bps);
}

fn cmd_keyrate(config: &Path, out: Option<&Path>) -> Result<u8> {
    let resolved = load_config(config)?;
    let report = match evaluate(&resolved.params, &resolved.channel, resolved.bounds.as_ref()) {
        Ok(report) => report,
        Err(Error::Invalid { .. }) | Err(Error::Domain { .. }) => {
            return Err(anyhow::anyhow!("configuration does not evaluate"));
        }
        Err(e) => {
            eprintln!("no usable key rate: {e}");
            return Ok(EXIT_NO_KEY);
        }
    };
    let mu = match resolved.bounds.as_ref() {
        Some(b) => equivalent_pair(b).context("source bounds do not map")?,
        None => (resolved.params.mu_a, resolved.params.mu_b),
    };
    print_report(&resolved, mu, &report);
    if let Some(path) = out {
        let row = report_row(resolved.channel.distance_km, mu.0, resolved.params.p_x, &report);
        write_csv(path, SWEEP_HEADER, &[row])?;
    }
    Ok(if report.r_coh > 0.0 { EXIT_OK } else { EXIT_NO_KEY })
}

fn cmd_sweep(config: &Path, dmin: f64, dmax: f64, step: f64, out: &Path) -> Result<u8> {
    if !(step > 0.0) || !(dmin <= dmax) || !dmin.is_finite() || !dmax.is_finite() {
        bail!("invalid range: need dmin <= dmax and step > 0");
    }
    let resolved = load_config(config)?;
    let mut distances = Vec::new();
    let mut d = dmin;
    while d <= dmax + 1e-9 {
        distances.push(d);
        d += step;
    }
    let rows = sweep(&resolved.channel, &distances, &resolved.params, &resolved.grid)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.distance_km, r.mu, r.p_x, r.r, r.r_coh, r.skr_bps, r.e_ph, r.n_z
            )
        })
        .collect();
    write_csv(out, SWEEP_HEADER, &csv_rows)?;
    for r in &rows {
        println!(
            "{:>7.1} km: skr {:>12.4} bps (mu {:.5}, p_x {:.4}, e_ph {:.4})",
            r.distance_km, r.skr_bps, r.mu, r.p_x, r.e_ph
        );
    }
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(EXIT_OK)
}

fn cmd_optimize(config: &Path) -> Result<u8> {
    let resolved = load_config(config)?;
    match optimize(&resolved.channel, &resolved.params, &resolved.grid) {
        Ok((best, report)) => {
            println!("optimum for {} km:", resolved.channel.distance_km);
            println!("  {:<22} {}", "mu", best.mu_a);
            println!("  {:<22} {}", "p_x", best.p_x);
            print_report(&resolved, (best.mu_a, best.mu_b), &report);
            Ok(EXIT_OK)
        }
        Err(Error::NoPositiveRate) => {
            println!("no positive rate for this channel");
            Ok(EXIT_NO_KEY)
        }
        Err(e) => Err(anyhow::anyhow!("{e}")),
    }
}

fn parse_pattern(text: &str) -> Result<Vec<(bool, f64)>> {
    let mut segments = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (state, duration) = part
            .split_once(':')
            .with_context(|| format!("segment '{part}' must look like on:SECONDS"))?;
        let enabled = match state.trim() {
            "on" => true,
            "off" => false,
            other => bail!("segment state '{other}' must be 'on' or 'off'"),
        };
        let seconds: f64 = duration
            .trim()
            .parse()
            .with_context(|| format!("bad duration in segment '{part}'"))?;
        if !(seconds >= 0.0) || !seconds.is_finite() {
            bail!("segment duration must be a finite number >= 0");
        }
        segments.push((enabled, seconds));
    }
    if segments.is_empty() {
        bail!("empty pattern");
    }
    Ok(segments)
}

/// Repeat the pattern cyclically until `total` seconds are scheduled.
fn schedule(pattern: &[(bool, f64)], total: Option<f64>) -> Vec<(bool, f64)> {
    let Some(total) = total else {
        return pattern.to_vec();
    };
    let one_pass: f64 = pattern.iter().map(|s| s.1).sum();
    let mut remaining = total;
    let mut out = Vec::new();
    if one_pass <= 0.0 || remaining <= 0.0 {
        return out;
    }
    'fill: loop {
        for &(enabled, seconds) in pattern {
            if seconds <= 0.0 {
                continue;
            }
            let take = seconds.min(remaining);
            out.push((enabled, take));
            remaining -= take;
            if remaining <= 1e-12 {
                break 'fill;
            }
        }
    }
    out
}

fn cmd_phaselock(
    config: &Path,
    duration: Option<f64>,
    pattern: &str,
    out: &Path,
    trace: TraceKind,
    seed: Option<u64>,
    stride: usize,
) -> Result<u8> {
    let resolved = load_config(config)?;
    let seed = seed.unwrap_or(resolved.drift.seed);
    let drift = scsqkd::DriftModel { seed, ..resolved.drift };
    match trace {
        TraceKind::Feedback => {
            let segments = schedule(&parse_pattern(pattern)?, duration);
            let samples = run_pattern(
                &segments,
                resolved.timing,
                resolved.interference,
                drift,
                seed,
                stride,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let rows: Vec<String> = samples
                .iter()
                .map(|s| format!("{},{},{},{}", s.time_s, s.counts, s.phi_residual_rad, s.v_applied))
                .collect();
            write_csv(out, "time_s,counts,phi_residual_rad,v_applied", &rows)?;
            println!("wrote {} samples to {}", rows.len(), out.display());
        }
        TraceKind::Qber => {
            let bins = qber_trace(
                duration.unwrap_or(300.0),
                resolved.timing,
                resolved.interference,
                drift,
                resolved.e_floor,
                seed,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let rows: Vec<String> = bins
                .iter()
                .map(|b| format!("{},{}", b.time_s, b.qber))
                .collect();
            write_csv(out, "time_s,qber", &rows)?;
            println!("wrote {} bins to {}", rows.len(), out.display());
        }
    }
    Ok(EXIT_OK)
}
