//! Monte-Carlo experiment engine.
//!
//! Every trial draws its own channel, data and noise from a ChaCha stream
//! seeded by [`trial_seed`], so results do not depend on how trials are
//! scheduled across threads. All configured modes are run on the same
//! frame.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::crb;
use crate::channel::{
    check_cfo, draw_channel, propagate, ChannelRealization, PowerProfile, ReceivedFrame,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_with, wrap_cfo, AdaptiveRule, EstimatorMode};
use crate::frame::{random_stream, OfdmConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: [&str; 9] = [
    "snr_db",
    "mode",
    "k_symbols",
    "m_antennas",
    "lambda",
    "iter",
    "trials",
    "mse",
    "crb_mean",
];

/// Mode label used for rows that only carry the bound.
pub const CRB_ONLY: &str = "crb_only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: OfdmConfig,
    pub profile: PowerProfile,
    pub cfo: f64,
    pub snr_db_list: Vec<f64>,
    pub modes: Vec<EstimatorMode>,
    pub trials: usize,
    pub base_seed: u64,
    /// Prepend a warm-up symbol that is excluded from every estimator sum.
    pub skip_first_symbol: bool,
    pub adaptive_rule: AdaptiveRule,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            config: OfdmConfig::default(),
            profile: PowerProfile::default(),
            cfo: 0.295,
            snr_db_list: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            modes: vec![
                EstimatorMode::Coarse,
                EstimatorMode::FixedFine { lambda: 16 },
                EstimatorMode::AdaptiveFine { iter: 2 },
            ],
            trials: 10_000,
            base_seed: 0x5eed,
            skip_first_symbol: true,
            adaptive_rule: AdaptiveRule::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        check_cfo(self.cfo)?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.snr_db_list.is_empty() {
            return Err(Error::InvalidConfig("snr_db_list is empty".into()));
        }
        // +inf is the noiseless case
        if let Some(bad) = self
            .snr_db_list
            .iter()
            .find(|s| s.is_nan() || **s == f64::NEG_INFINITY)
        {
            return Err(Error::InvalidConfig(format!("snr_db {bad} is not a level")));
        }
        if self.profile.len() > self.config.cp_len {
            return Err(Error::InvalidProfile(format!(
                "{} taps exceed the prefix length {}",
                self.profile.len(),
                self.config.cp_len
            )));
        }
        let max = self.config.lag_count();
        for mode in &self.modes {
            if let EstimatorMode::FixedFine { lambda } = mode {
                if *lambda == 0 || *lambda > max {
                    return Err(Error::LambdaOutOfRange {
                        lambda: *lambda,
                        max,
                    });
                }
            }
        }
        Ok(())
    }

    /// `σ_z²` for a given SNR; unit-power tap profiles make this the
    /// per-antenna received SNR.
    pub fn noise_power(&self, snr_db: f64) -> f64 {
        self.config.signal_power / 10f64.powf(snr_db / 10.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial's random stream: SplitMix64 folded over
/// `(base_seed, snr_index, trial_index)`.
pub fn trial_seed(base_seed: u64, snr_index: usize, trial_index: usize) -> u64 {
    let a = splitmix64(base_seed);
    let b = splitmix64(a ^ snr_index as u64);
    splitmix64(b ^ (trial_index as u64).rotate_left(32))
}

/// Draws channel, data and noise for one frame of the scenario.
pub fn simulate_frame(
    scenario: &Scenario,
    noise_power: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ChannelRealization, ReceivedFrame)> {
    let cfg = scenario.config;
    let channel = draw_channel(rng, cfg.n_antennas, &scenario.profile, cfg.cp_len)?;
    let tx_cfg = OfdmConfig {
        n_symbols: cfg.n_symbols + usize::from(scenario.skip_first_symbol),
        ..cfg
    };
    let tx = random_stream(rng, &tx_cfg)?;
    let frame = propagate(&tx, &channel, scenario.cfo, noise_power, rng)?;
    let frame = if scenario.skip_first_symbol {
        frame.skip_first_symbol()?
    } else {
        frame
    };
    Ok((channel, frame))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Wrapped signed error `θ̂ ⊖ θ` per configured mode; `None` when the
    /// estimator failed on this frame.
    pub errors: Vec<Option<f64>>,
    pub crb: Option<f64>,
}

impl TrialOutcome {
    pub fn squared_errors(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.errors.iter().map(|e| e.map(|v| v * v))
    }
}

/// The channel and frame of one trial, exactly as [`run_trial`] sees them.
pub fn trial_frame(
    scenario: &Scenario,
    snr_index: usize,
    trial_index: usize,
) -> Result<(ChannelRealization, ReceivedFrame)> {
    let snr_db = *scenario
        .snr_db_list
        .get(snr_index)
        .ok_or_else(|| Error::InvalidConfig(format!("no SNR at index {snr_index}")))?;
    let noise = scenario.noise_power(snr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(scenario.base_seed, snr_index, trial_index));
    simulate_frame(scenario, noise, &mut rng)
}

pub fn run_trial(
    scenario: &Scenario,
    snr_index: usize,
    trial_index: usize,
) -> Result<TrialOutcome> {
    let (channel, frame) = trial_frame(scenario, snr_index, trial_index)?;
    let noise = frame.noise_power;
    let errors = scenario
        .modes
        .iter()
        .map(|&mode| {
            estimate_with(&frame, mode, scenario.adaptive_rule)
                .ok()
                .map(|est| wrap_cfo(est.xi - scenario.cfo))
        })
        .collect();
    let crb = crb(
        &channel,
        scenario.config.signal_power,
        noise,
        scenario.config.n_symbols,
    )
    .ok();
    Ok(TrialOutcome { errors, crb })
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub mode: String,
    pub k_symbols: usize,
    pub m_antennas: usize,
    pub lambda: Option<usize>,
    pub iter: Option<usize>,
    pub trials: usize,
    /// Empty for `crb_only` rows and for cells where every trial failed.
    pub mse: Option<f64>,
    pub crb_mean: Option<f64>,
}

/// Sidecar metadata written next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub n_fft: usize,
    pub cp_len: usize,
    pub k_symbols: Vec<usize>,
    pub m_antennas: Vec<usize>,
    pub qam_order: usize,
    pub signal_power: f64,
    pub tap_variances: Vec<f64>,
    pub cfo: f64,
    pub base_seed: u64,
    pub skip_first_symbol: bool,
    pub artifact_version: String,
    pub trials: usize,
    pub snr_db_list: Vec<f64>,
    pub modes: Vec<EstimatorMode>,
    pub adaptive_rule: AdaptiveRule,
    pub snr_definition: String,
    pub error_metric: String,
    pub crb_mean_definition: String,
}

impl SweepMetadata {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let cfg = &scenario.config;
        Self {
            n_fft: cfg.n_fft,
            cp_len: cfg.cp_len,
            k_symbols: vec![cfg.n_symbols],
            m_antennas: vec![cfg.n_antennas],
            qam_order: cfg.qam_order,
            signal_power: cfg.signal_power,
            tap_variances: scenario.profile.tap_variances().to_vec(),
            cfo: scenario.cfo,
            base_seed: scenario.base_seed,
            skip_first_symbol: scenario.skip_first_symbol,
            artifact_version: ARTIFACT_VERSION.to_string(),
            trials: scenario.trials,
            snr_db_list: scenario.snr_db_list.clone(),
            modes: scenario.modes.clone(),
            adaptive_rule: scenario.adaptive_rule,
            snr_definition: "10*log10(signal_power/noise_power), tap variances sum to 1".into(),
            error_metric: "mean squared wrapped error on [-0.5, 0.5)".into(),
            crb_mean_definition: "mean over trials of 1/I(theta) for each channel draw".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    /// Appends the rows of a sweep over a different `(K, M)` pair.
    pub fn merge(&mut self, other: SweepResult) {
        for k in other.metadata.k_symbols {
            if !self.metadata.k_symbols.contains(&k) {
                self.metadata.k_symbols.push(k);
            }
        }
        for m in other.metadata.m_antennas {
            if !self.metadata.m_antennas.contains(&m) {
                self.metadata.m_antennas.push(m);
            }
        }
        self.rows.extend(other.rows);
    }
}

/// Per-cell statistics beyond what the CSV carries.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub snr_db: f64,
    pub mode: EstimatorMode,
    pub trials: usize,
    pub mse: f64,
    /// Mean signed wrapped error.
    pub bias: f64,
    /// Standard error of the mean signed error.
    pub bias_se: f64,
    /// Sample standard deviation of the squared error.
    pub sq_error_std: f64,
    pub crb_mean: Option<f64>,
}

impl CellStats {
    /// Bias is statistically indistinguishable from zero at three standard
    /// errors.
    pub fn is_unbiased(&self) -> bool {
        self.bias.abs() < 3.0 * self.bias_se
    }
}

/// Runs all trials at one SNR in parallel; output order is trial order.
pub fn run_snr(scenario: &Scenario, snr_index: usize) -> Result<Vec<TrialOutcome>> {
    (0..scenario.trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, snr_index, t))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_sweep_detailed(scenario: &Scenario) -> Result<(SweepResult, Vec<CellStats>)> {
    scenario.validate()?;
    let cfg = &scenario.config;
    let mut cells = Vec::new();
    for (snr_index, &snr_db) in scenario.snr_db_list.iter().enumerate() {
        let outcomes = run_snr(scenario, snr_index)?;
        let crbs: Vec<f64> = outcomes.iter().filter_map(|o| o.crb).collect();
        let crb_mean = (crbs.len() == outcomes.len()).then(|| mean_std(&crbs).0);
        for (i, &mode) in scenario.modes.iter().enumerate() {
            let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.errors[i]).collect();
            let squared: Vec<f64> = errors.iter().map(|e| e * e).collect();
            let (mse, sq_error_std) = mean_std(&squared);
            let (bias, err_std) = mean_std(&errors);
            cells.push(CellStats {
                snr_db,
                mode,
                trials: errors.len(),
                mse,
                bias,
                bias_se: err_std / (errors.len() as f64).sqrt(),
                sq_error_std,
                crb_mean,
            });
        }
    }
    cells.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then_with(|| a.mode.name().cmp(b.mode.name()))
            .then_with(|| a.mode.lambda().cmp(&b.mode.lambda()))
            .then_with(|| a.mode.iter().cmp(&b.mode.iter()))
    });
    let rows = cells
        .iter()
        .map(|c| SweepRow {
            snr_db: c.snr_db,
            mode: c.mode.name().to_string(),
            k_symbols: cfg.n_symbols,
            m_antennas: cfg.n_antennas,
            lambda: c.mode.lambda(),
            iter: c.mode.iter(),
            trials: c.trials,
            mse: (c.trials > 0).then_some(c.mse),
            crb_mean: c.crb_mean,
        })
        .collect();
    Ok((
        SweepResult {
            rows,
            metadata: SweepMetadata::from_scenario(scenario),
        },
        cells,
    ))
}

/// MSE per (SNR, mode) cell with the mean CRB of the same channel draws.
pub fn run_sweep(scenario: &Scenario) -> Result<SweepResult> {
    run_sweep_detailed(scenario).map(|(result, _)| result)
}

/// CRB averaged over `trials` channel draws per SNR, one `crb_only` row each.
pub fn run_crb_sweep(scenario: &Scenario) -> Result<SweepResult> {
    scenario.validate()?;
    let cfg = &scenario.config;
    let mut rows = Vec::new();
    for (snr_index, &snr_db) in scenario.snr_db_list.iter().enumerate() {
        let noise = scenario.noise_power(snr_db);
        let bounds: Vec<f64> = (0..scenario.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(trial_seed(scenario.base_seed, snr_index, t));
                let channel =
                    draw_channel(&mut rng, cfg.n_antennas, &scenario.profile, cfg.cp_len)?;
                crb(&channel, cfg.signal_power, noise, cfg.n_symbols)
            })
            .collect::<Result<_>>()?;
        rows.push(SweepRow {
            snr_db,
            mode: CRB_ONLY.to_string(),
            k_symbols: cfg.n_symbols,
            m_antennas: cfg.n_antennas,
            lambda: None,
            iter: None,
            trials: scenario.trials,
            mse: None,
            crb_mean: Some(mean_std(&bounds).0),
        });
    }
    rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(SweepResult {
        rows,
        metadata: SweepMetadata::from_scenario(scenario),
    })
}

/// `out.csv` → `out.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Renders the CSV body.
pub fn render_csv(rows: &[SweepRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    writer.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        writer
            .write_record([
                fmt_float(row.snr_db),
                row.mode.clone(),
                row.k_symbols.to_string(),
                row.m_antennas.to_string(),
                fmt_opt(row.lambda),
                fmt_opt(row.iter),
                row.trials.to_string(),
                row.mse.map(fmt_float).unwrap_or_default(),
                row.crb_mean.map(fmt_float).unwrap_or_default(),
            ])
            .map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the CSV body and its `.meta.json` sidecar.
pub fn write_results(result: &SweepResult, path: &Path) -> Result<()> {
    let body = render_csv(&result.rows)?;
    File::create(path)?.write_all(body.as_bytes())?;
    let meta =
        serde_json::to_string_pretty(&result.metadata).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{}:{line}", path.display()),
        message: message.into(),
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let mut index = [0usize; 9];
    for (slot, name) in index.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))?;
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| record.get(index[col]).unwrap_or("");
        fn num<T: std::str::FromStr>(raw: &str, name: &str, path: &Path, line: u64) -> Result<T> {
            raw.parse().map_err(|_| {
                parse_err(path, line, format!("column `{name}`: cannot parse `{raw}`"))
            })
        }
        let opt = |col: usize| -> Result<Option<String>> {
            let raw = field(col);
            Ok((!raw.is_empty()).then(|| raw.to_string()))
        };
        let opt_num = |col: usize| -> Result<Option<f64>> {
            opt(col)?
                .map(|raw| num(&raw, CSV_HEADER[col], path, line))
                .transpose()
        };
        let opt_int = |col: usize| -> Result<Option<usize>> {
            opt(col)?
                .map(|raw| num(&raw, CSV_HEADER[col], path, line))
                .transpose()
        };
        rows.push(SweepRow {
            snr_db: num(field(0), CSV_HEADER[0], path, line)?,
            mode: field(1).to_string(),
            k_symbols: num(field(2), CSV_HEADER[2], path, line)?,
            m_antennas: num(field(3), CSV_HEADER[3], path, line)?,
            lambda: opt_int(4)?,
            iter: opt_int(5)?,
            trials: num(field(6), CSV_HEADER[6], path, line)?,
            mse: opt_num(7)?,
            crb_mean: opt_num(8)?,
        });
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_csv(&text, path)?;
    let meta_path = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&meta_path)?;
    let metadata = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        location: format!("{}:{}", meta_path.display(), e.line()),
        message: e.to_string(),
    })?;
    Ok(SweepResult { rows, metadata })
}
