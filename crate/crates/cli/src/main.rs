mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfo_lab::bounds::crb;
use cfo_lab::estimator::{estimate_with, wrap_cfo, CfoEstimate, EstimatorMode};
use cfo_lab::harness::{
    run_crb_sweep, run_sweep_detailed, trial_frame, write_results, Scenario, SweepResult,
};
use clap::{Args, Parser, Subcommand};

use config::{CliConfig, CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "cfo-lab",
    version,
    about = "Blind CP-based CFO estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo MSE sweep over SNR; writes CSV and .meta.json.
    Sweep(Common),
    /// One trial at one SNR with estimator diagnostics.
    Trial(Common),
    /// Mean Cramér-Rao bound over channel draws.
    Crb(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; the sidecar goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed, decimal or 0x-prefixed hex.
    #[arg(long, value_parser = config::seed_arg)]
    seed: Option<u64>,
    /// Run only this mode: coarse, fixed_fine or adaptive_fine.
    #[arg(long)]
    mode: Option<String>,
    /// Subset size for fixed_fine.
    #[arg(long)]
    lambda: Option<usize>,
    /// Iterations for adaptive_fine.
    #[arg(long)]
    iter: Option<usize>,
    /// SNR list in dB, comma separated (`inf` for no noise).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
}

impl Common {
    fn load(&self) -> Result<CliConfig, CliError> {
        let overrides = Overrides {
            out: self.out.clone(),
            trials: self.trials,
            seed: self.seed,
            mode: self.mode.clone(),
            lambda: self.lambda,
            iter: self.iter,
            snr: self.snr.clone(),
        };
        config::load(&self.config, &overrides)
    }
}

fn sci(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
}

fn write(result: &SweepResult, out: &Path) -> Result<(), CliError> {
    write_results(result, out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn merged(parts: Vec<SweepResult>) -> Option<SweepResult> {
    let mut parts = parts.into_iter();
    let mut all = parts.next()?;
    for part in parts {
        all.merge(part);
    }
    Some(all)
}

fn cmd_sweep(args: &Common) -> Result<(), CliError> {
    let cfg = args.load()?;
    let out = cfg.out.clone().ok_or_else(|| {
        CliError::Config("no output path: set `out` in the config or pass --out".into())
    })?;
    println!(
        "{:>4} {:>4} {:>7}  {:<14} {:>11} {:>11} {:>8} {:>11}",
        "K", "M", "SNR", "mode", "MSE", "CRB", "MSE/CRB", "bias"
    );
    let mut parts = Vec::new();
    for s in &cfg.scenarios {
        let (result, cells) = run_sweep_detailed(s).map_err(CliError::Run)?;
        for c in &cells {
            let ratio = c.crb_mean.map(|b| format!("{:.3}", c.mse / b));
            println!(
                "{:>4} {:>4} {:>7.1}  {:<14} {:>11} {:>11} {:>8} {:>11.3e}",
                s.config.n_symbols,
                s.config.n_antennas,
                c.snr_db,
                c.mode.to_string(),
                sci((c.trials > 0).then_some(c.mse)),
                sci(c.crb_mean),
                ratio.unwrap_or_else(|| "-".into()),
                c.bias
            );
        }
        parts.push(result);
    }
    write(&merged(parts).expect("at least one scenario"), &out)
}

fn cmd_crb(args: &Common) -> Result<(), CliError> {
    let cfg = args.load()?;
    println!("{:>4} {:>4} {:>7} {:>11}", "K", "M", "SNR", "mean CRB");
    let mut parts = Vec::new();
    for s in &cfg.scenarios {
        let result = run_crb_sweep(s).map_err(CliError::Run)?;
        for row in &result.rows {
            println!(
                "{:>4} {:>4} {:>7.1} {:>11}",
                row.k_symbols,
                row.m_antennas,
                row.snr_db,
                sci(row.crb_mean)
            );
        }
        parts.push(result);
    }
    match &cfg.out {
        Some(out) => write(&merged(parts).expect("at least one scenario"), out),
        None => Ok(()),
    }
}

fn print_energies(est: &CfoEstimate) {
    if let Some(r) = &est.lag_energies {
        for (chunk_index, chunk) in r.r_of_l.chunks(8).enumerate() {
            let values: Vec<String> = chunk.iter().map(|v| format!("{v:.3e}")).collect();
            println!("    R({:>2}..) {}", chunk_index * 8, values.join(" "));
        }
    }
    if let (Some(lambda), Some(subset)) = (est.lambda_used, &est.subset) {
        println!("    S({lambda}) = {subset:?}");
    }
}

fn cmd_trial(args: &Common) -> Result<(), CliError> {
    let cfg = args.load()?;
    let [s]: [Scenario; 1] = cfg.scenarios.try_into().map_err(|_| {
        CliError::Config("trial needs a single k_symbols and m_antennas value".into())
    })?;
    let snr_db = s.snr_db_list[0];
    let scenario = Scenario {
        snr_db_list: vec![snr_db],
        ..s
    };
    let (channel, frame) = trial_frame(&scenario, 0, 0).map_err(CliError::Run)?;
    let cfg = &scenario.config;
    println!(
        "K = {}, M = {}, SNR = {snr_db} dB, seed = {:#x}",
        cfg.n_symbols, cfg.n_antennas, scenario.base_seed
    );
    println!("theta = {:.10}", scenario.cfo);
    match crb(&channel, cfg.signal_power, frame.noise_power, cfg.n_symbols) {
        Ok(bound) => println!("CRB = {bound:.4e}"),
        Err(e) => println!("CRB: {}: {e}", e.kind()),
    }
    for &mode in &scenario.modes {
        match estimate_with(&frame, mode, scenario.adaptive_rule) {
            Ok(est) => {
                let err = wrap_cfo(est.xi - scenario.cfo);
                println!(
                    "{:<14} theta_hat = {:.10}  error = {err:+.3e}",
                    mode.to_string(),
                    est.xi
                );
                if let EstimatorMode::AdaptiveFine { .. } = mode {
                    println!("    Lambda_opt per iteration: {:?}", est.lambda_trace);
                }
                print_energies(&est);
            }
            Err(e) => println!("{:<14} {}: {e}", mode.to_string(), e.kind()),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Trial(args) => cmd_trial(args),
        Command::Crb(args) => cmd_crb(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
