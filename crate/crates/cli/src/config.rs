//! Flat `key = value` scenario files and command-line overrides.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cfo_lab::channel::PowerProfile;
use cfo_lab::estimator::{AdaptiveRule, EstimatorMode};
use cfo_lab::harness::Scenario;

const KEYS: &[&str] = &[
    "n_fft",
    "cp_len",
    "k_symbols",
    "m_antennas",
    "km_pairs",
    "qam_order",
    "signal_power",
    "tap_variances",
    "n_taps",
    "cfo",
    "snr_db_list",
    "modes",
    "trials",
    "base_seed",
    "skip_first_symbol",
    "adaptive_rule",
    "out",
];

#[derive(Debug)]
pub enum CliError {
    /// Bad config file, bad override or invalid scenario.
    Config(String),
    /// Output could not be written.
    Io(String),
    /// The simulation itself failed.
    Run(cfo_lab::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Run(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "I/O error: {msg}"),
            CliError::Run(err) => write!(f, "{}: {err}", err.kind()),
        }
    }
}

/// Scenario grid (one per `k_symbols` × `m_antennas` pair) plus output path.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub scenarios: Vec<Scenario>,
    pub out: Option<PathBuf>,
}

/// Flag values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub lambda: Option<usize>,
    pub iter: Option<usize>,
    pub snr: Option<Vec<f64>>,
}

struct Entry {
    value: String,
    line: usize,
}

struct Fields<'a> {
    path: &'a Path,
    entries: HashMap<String, Entry>,
}

impl Fields<'_> {
    fn err(&self, key: &str, msg: impl fmt::Display) -> CliError {
        let line = self.entries.get(key).map(|e| e.line).unwrap_or(0);
        CliError::Config(format!(
            "{}:{line}: key `{key}`: {msg}",
            self.path.display()
        ))
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn one<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| self.err(key, format!("cannot parse `{raw}`")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.raw(key)
            .map(|raw| {
                raw.split(',')
                    .map(|item| {
                        let item = item.trim();
                        item.parse()
                            .map_err(|_| self.err(key, format!("cannot parse `{item}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn parse_seed(raw: &str) -> Option<u64> {
    match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16).ok(),
        None => raw.replace('_', "").parse().ok(),
    }
}

/// `KxM`, e.g. `64x1`.
fn parse_pair(raw: &str) -> Option<(usize, usize)> {
    let (k, m) = raw.trim().split_once('x')?;
    Some((k.trim().parse().ok()?, m.trim().parse().ok()?))
}

/// `coarse`, `fixed_fine[:λ]` or `adaptive_fine[:ITER]`.
pub fn parse_mode(raw: &str) -> Option<EstimatorMode> {
    let (name, param) = match raw.split_once(':') {
        Some((name, param)) => (name.trim(), Some(param.trim().parse().ok()?)),
        None => (raw.trim(), None),
    };
    match (name, param) {
        ("coarse", None) => Some(EstimatorMode::Coarse),
        ("fixed_fine", p) => Some(EstimatorMode::FixedFine {
            lambda: p.unwrap_or(16),
        }),
        ("adaptive_fine", p) => Some(EstimatorMode::AdaptiveFine {
            iter: p.unwrap_or(2),
        }),
        _ => None,
    }
}

/// `--seed` accepts the same decimal or `0x` hex forms as the file.
pub fn seed_arg(raw: &str) -> Result<u64, String> {
    parse_seed(raw).ok_or_else(|| format!("`{raw}` is not a 64-bit integer"))
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<CliConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse(&text, path)?;
    apply(&mut config, overrides)?;
    validate(&config, path)?;
    Ok(config)
}

pub fn parse(text: &str, path: &Path) -> Result<CliConfig, CliError> {
    let mut entries = HashMap::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let at = |msg: String| CliError::Config(format!("{}:{line}: {msg}", path.display()));
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(at(format!("unknown key `{key}`")));
        }
        let entry = Entry {
            value: value.trim().to_string(),
            line,
        };
        if entries.insert(key.to_string(), entry).is_some() {
            return Err(at(format!("duplicate key `{key}`")));
        }
    }
    let f = Fields { path, entries };

    let mut base = Scenario::default();
    let cfg = &mut base.config;
    cfg.n_fft = f.one("n_fft")?.unwrap_or(cfg.n_fft);
    cfg.cp_len = f.one("cp_len")?.unwrap_or(cfg.cp_len);
    cfg.qam_order = f.one("qam_order")?.unwrap_or(cfg.qam_order);
    cfg.signal_power = f.one("signal_power")?.unwrap_or(cfg.signal_power);
    base.cfo = f.one("cfo")?.unwrap_or(base.cfo);
    base.trials = f.one("trials")?.unwrap_or(base.trials);
    base.skip_first_symbol = f
        .one("skip_first_symbol")?
        .unwrap_or(base.skip_first_symbol);
    base.adaptive_rule = f
        .one::<AdaptiveRule>("adaptive_rule")?
        .unwrap_or(base.adaptive_rule);
    if let Some(snrs) = f.list("snr_db_list")? {
        base.snr_db_list = snrs;
    }
    if let Some(raw) = f.raw("base_seed") {
        base.base_seed =
            parse_seed(raw).ok_or_else(|| f.err("base_seed", format!("cannot parse `{raw}`")))?;
    }
    if let Some(raw) = f.raw("modes") {
        base.modes = raw
            .split(',')
            .map(|m| {
                parse_mode(m).ok_or_else(|| f.err("modes", format!("unknown mode `{}`", m.trim())))
            })
            .collect::<Result<_, _>>()?;
    }
    base.profile = match (f.list::<f64>("tap_variances")?, f.one::<usize>("n_taps")?) {
        (Some(_), Some(_)) => return Err(f.err("n_taps", "conflicts with `tap_variances`")),
        (Some(v), None) => PowerProfile::new(v).map_err(|e| f.err("tap_variances", e))?,
        (None, Some(t)) => PowerProfile::uniform(t).map_err(|e| f.err("n_taps", e))?,
        (None, None) => base.profile,
    };

    let pairs = match f.raw("km_pairs") {
        Some(_) if f.raw("k_symbols").is_some() || f.raw("m_antennas").is_some() => {
            return Err(f.err("km_pairs", "conflicts with `k_symbols`/`m_antennas`"))
        }
        Some(raw) => raw
            .split(',')
            .map(|p| {
                parse_pair(p)
                    .ok_or_else(|| f.err("km_pairs", format!("expected KxM, found `{}`", p.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            let ks = f.list("k_symbols")?.unwrap_or(vec![base.config.n_symbols]);
            let ms = f
                .list("m_antennas")?
                .unwrap_or(vec![base.config.n_antennas]);
            ks.iter()
                .flat_map(|&k| ms.iter().map(move |&m| (k, m)))
                .collect()
        }
    };
    let scenarios = pairs
        .into_iter()
        .map(|(k, m)| {
            let mut s = base.clone();
            s.config.n_symbols = k;
            s.config.n_antennas = m;
            s
        })
        .collect();
    let out = f.raw("out").map(PathBuf::from);
    Ok(CliConfig { scenarios, out })
}

pub fn apply(config: &mut CliConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(out) = &o.out {
        config.out = Some(out.clone());
    }
    let mode = o
        .mode
        .as_deref()
        .map(|name| match name {
            "coarse" if o.lambda.is_none() && o.iter.is_none() => Ok(EstimatorMode::Coarse),
            "coarse" => Err(CliError::Config(
                "--lambda/--iter do not apply to coarse".into(),
            )),
            "fixed_fine" => Ok(EstimatorMode::FixedFine {
                lambda: o.lambda.unwrap_or(16),
            }),
            "adaptive_fine" => Ok(EstimatorMode::AdaptiveFine {
                iter: o.iter.unwrap_or(2),
            }),
            other => Err(CliError::Config(format!("--mode: unknown mode `{other}`"))),
        })
        .transpose()?;
    for s in &mut config.scenarios {
        if let Some(t) = o.trials {
            s.trials = t;
        }
        if let Some(seed) = o.seed {
            s.base_seed = seed;
        }
        if let Some(snr) = &o.snr {
            s.snr_db_list = snr.clone();
        }
        if let Some(mode) = mode {
            s.modes = vec![mode];
            continue;
        }
        for m in &mut s.modes {
            match m {
                EstimatorMode::FixedFine { lambda } => *lambda = o.lambda.unwrap_or(*lambda),
                EstimatorMode::AdaptiveFine { iter } => *iter = o.iter.unwrap_or(*iter),
                EstimatorMode::Coarse => {}
            }
        }
    }
    if mode.is_none() {
        let has = |f: fn(&EstimatorMode) -> bool| config.scenarios[0].modes.iter().any(f);
        if o.lambda.is_some() && !has(|m| m.lambda().is_some()) {
            return Err(CliError::Config(
                "--lambda given but no fixed_fine mode is configured".into(),
            ));
        }
        if o.iter.is_some() && !has(|m| m.iter().is_some()) {
            return Err(CliError::Config(
                "--iter given but no adaptive_fine mode is configured".into(),
            ));
        }
    }
    Ok(())
}

/// Config key an invalid scenario traces back to.
fn offending_key(err: &cfo_lab::Error) -> Option<&'static str> {
    use cfo_lab::Error::*;
    match err {
        InvalidConstellation(_) => Some("qam_order"),
        CfoOutOfRange(_) => Some("cfo"),
        InvalidProfile(_) => Some("tap_variances"),
        LambdaOutOfRange { .. } => Some("modes"),
        _ => None,
    }
}

pub fn validate(config: &CliConfig, path: &Path) -> Result<(), CliError> {
    for s in &config.scenarios {
        s.validate().map_err(|e| {
            let msg = match offending_key(&e) {
                Some(key) => format!("{}: key `{key}`: {e}", path.display()),
                None => format!("{}: {e}", path.display()),
            };
            CliError::Config(msg)
        })?;
    }
    Ok(())
}
