use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use skellam::dme::{run_dme_sweep, write_csv, DmeConfig, Sidecar, STREAM_NOTE};
use skellam::pld::{pld_compose, pld_delta, pld_epsilon, skellam_pld, PldConfig};
use skellam::rdp::{rdp_to_dp, Mechanism, MechanismSpec, RdpCurve};
use skellam::rng::{derive_rng, Domain};
use skellam::skellam::sample_skellam;
use skellam::stats::{mean_and_variance, skellam_chi_square};
use skellam::verify::run_all;

#[derive(Parser)]
#[command(name = "skellam", version, about = "Skellam mechanism accounting and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Skellam,
    Gaussian,
    Dgaussian,
}

#[derive(Subcommand)]
enum Command {
    /// RDP curve of a mechanism and its (eps, delta) conversion.
    Account {
        #[arg(long, value_enum, default_value = "skellam")]
        mechanism: MechanismArg,
        /// L1 sensitivity; defaults to the L2 sensitivity (scalar queries).
        #[arg(long = "delta-1")]
        delta_1: Option<f64>,
        #[arg(long = "delta-2")]
        delta_2: f64,
        /// Noise variance in unscaled units.
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// `lo..hi` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "2..256")]
        orders: String,
        #[arg(long, default_value_t = 1)]
        rounds: u64,
        #[arg(long = "dp-delta", default_value_t = 1e-5)]
        dp_delta: f64,
    },
    /// Privacy loss distribution accounting for the scalar mechanism.
    Pld {
        #[arg(long = "delta-sens", default_value_t = 1)]
        delta_sens: u64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1)]
        rounds: u64,
        #[arg(long = "dp-delta", default_value_t = 1e-5)]
        dp_delta: f64,
        #[arg(long, default_value_t = 1e-4)]
        grid: f64,
        #[arg(long, default_value_t = 1e-12)]
        tail: f64,
    },
    /// Distributed mean estimation sweep.
    Dme {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Numeric self-checks; exits non-zero on any violation.
    Verify {
        #[arg(long)]
        quick: bool,
    },
    /// Raw Skellam samples on stdout, goodness-of-fit summary on stderr.
    Sample {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_orders(text: &str) -> anyhow::Result<Vec<u32>> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo.trim().parse().context("order range start")?;
        let hi: u32 = hi.trim().parse().context("order range end")?;
        if lo > hi {
            bail!("empty order range {text}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u32>().with_context(|| format!("bad order `{s}`")))
        .collect()
}

fn account(
    mechanism: MechanismArg,
    delta_1: Option<f64>,
    delta_2: f64,
    mu: f64,
    scale: f64,
    orders: &str,
    rounds: u64,
    dp_delta: f64,
) -> anyhow::Result<()> {
    let orders = parse_orders(orders)?;
    let spec = MechanismSpec::new(delta_1.unwrap_or(delta_2), delta_2, mu, scale)?;
    let mechanism = match mechanism {
        MechanismArg::Skellam => Mechanism::Skellam,
        MechanismArg::Gaussian => Mechanism::Gaussian,
        MechanismArg::Dgaussian => Mechanism::DiscreteGaussian,
    };
    let curve = RdpCurve::for_mechanism(mechanism, &spec, &orders)?.repeated(rounds);
    let dp = rdp_to_dp(&curve, dp_delta)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "alpha,eps_rdp")?;
    for (alpha, eps) in curve.iter() {
        writeln!(out, "{alpha},{eps}")?;
    }
    writeln!(out, "# eps_dp={} alpha={} delta={dp_delta}", dp.epsilon, dp.order)?;
    Ok(())
}

fn pld(delta_sens: u64, mu: f64, rounds: u64, dp_delta: f64, grid: f64, tail: f64) -> anyhow::Result<()> {
    let config = PldConfig {
        grid_spacing: grid,
        tail_mass: tail,
        ..PldConfig::default()
    };
    let composed = pld_compose(&skellam_pld(delta_sens, mu, &config)?, rounds, &config)?;
    let eps = pld_epsilon(&composed, dp_delta)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "epsilon,delta")?;
    let top = if eps > 0.0 { 2.0 * eps } else { 1.0 };
    for i in 0..=40 {
        let e = top * i as f64 / 40.0;
        writeln!(out, "{e},{}", pld_delta(&composed, e))?;
    }
    writeln!(out, "# eps={eps} delta={dp_delta}")?;
    Ok(())
}

fn dme(config: &PathBuf, out: &PathBuf, seed: u64) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let sweep = DmeConfig::from_json(&text)?;
    let reports = run_dme_sweep(&sweep, seed)?;
    write_csv(&reports, File::create(out).with_context(|| format!("creating {}", out.display()))?)?;
    let sidecar = Sidecar {
        seed,
        config: &sweep,
        streams: STREAM_NOTE,
        reports: &reports,
    };
    let json_path = out.with_extension("json");
    serde_json::to_writer_pretty(File::create(&json_path)?, &sidecar)?;
    for r in &reports {
        if let Some(e) = &r.error {
            eprintln!("b={} d={} n={} eps={}: {e}", r.bit_width, r.point.dim, r.point.num_clients, r.epsilon);
        }
    }
    Ok(())
}

fn sample(mu: f64, count: usize, seed: u64) -> anyhow::Result<()> {
    let mut rng = derive_rng(seed, Domain::Sample, 0, 0);
    let draws = sample_skellam(mu, count, &mut rng)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for d in &draws {
        writeln!(out, "{d}")?;
    }
    out.flush()?;
    let as_f64: Vec<f64> = draws.iter().map(|&d| d as f64).collect();
    let (mean, var) = mean_and_variance(&as_f64);
    let fit = skellam_chi_square(&draws, mu, 5.0)?;
    eprintln!(
        "count={count} mean={mean:.6} variance={var:.6} chi2={:.3} dof={} p={:.4}",
        fit.statistic, fit.dof, fit.p_value
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Account {
            mechanism,
            delta_1,
            delta_2,
            mu,
            scale,
            orders,
            rounds,
            dp_delta,
        } => account(mechanism, delta_1, delta_2, mu, scale, &orders, rounds, dp_delta),
        Command::Pld {
            delta_sens,
            mu,
            rounds,
            dp_delta,
            grid,
            tail,
        } => pld(delta_sens, mu, rounds, dp_delta, grid, tail),
        Command::Dme { config, out, seed } => dme(&config, &out, seed),
        Command::Verify { quick } => {
            let report = run_all(quick);
            let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&report).unwrap());
            if !report.passed {
                return ExitCode::FAILURE;
            }
            Ok(())
        }
        Command::Sample { mu, count, seed } => sample(mu, count, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
