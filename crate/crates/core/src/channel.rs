//! Multipath Rayleigh channel, CFO rotation and AWGN.

use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{OfdmConfig, TxStream};

/// Average power of each channel tap; sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    tap_variances: Vec<f64>,
}

impl PowerProfile {
    pub fn new(tap_variances: Vec<f64>) -> Result<Self> {
        if tap_variances.is_empty() {
            return Err(Error::InvalidProfile("no taps".into()));
        }
        if tap_variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidProfile(
                "tap variances must be finite and >= 0".into(),
            ));
        }
        let total: f64 = tap_variances.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProfile(format!(
                "tap variances sum to {total}, not 1"
            )));
        }
        Ok(Self { tap_variances })
    }

    /// Equal power on each of `taps` taps.
    pub fn uniform(taps: usize) -> Result<Self> {
        if taps == 0 {
            return Err(Error::InvalidProfile("no taps".into()));
        }
        Ok(Self {
            tap_variances: vec![1.0 / taps as f64; taps],
        })
    }

    pub fn tap_variances(&self) -> &[f64] {
        &self.tap_variances
    }

    pub fn len(&self) -> usize {
        self.tap_variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tap_variances.is_empty()
    }
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self::uniform(5).expect("five taps")
    }
}

/// Per-antenna tap vectors, each zero-padded to the prefix length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Vec<Complex64>>,
    pub profile: PowerProfile,
}

impl ChannelRealization {
    /// Wraps explicit tap vectors, e.g. for deterministic test channels.
    pub fn from_taps(taps: Vec<Vec<Complex64>>, profile: PowerProfile) -> Result<Self> {
        let width = taps.first().map(Vec::len).unwrap_or(0);
        if taps.is_empty() || width < profile.len() {
            return Err(Error::InvalidProfile(
                "need at least one antenna and as many taps as the profile".into(),
            ));
        }
        if taps.iter().any(|t| t.len() != width) {
            return Err(Error::InvalidProfile(
                "antennas have different tap counts".into(),
            ));
        }
        Ok(Self { taps, profile })
    }

    /// Every antenna sees the single tap `gain`.
    pub fn flat(m_antennas: usize, cp_len: usize, gain: Complex64) -> Self {
        let mut taps = vec![Complex64::default(); cp_len];
        taps[0] = gain;
        Self {
            taps: vec![taps; m_antennas],
            profile: PowerProfile::uniform(1).expect("one tap"),
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.taps.len()
    }
}

/// Circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Independent Rayleigh taps for each antenna, padded with zeros to `cp_len`.
pub fn draw_channel<R: Rng + ?Sized>(
    rng: &mut R,
    m_antennas: usize,
    profile: &PowerProfile,
    cp_len: usize,
) -> Result<ChannelRealization> {
    if profile.is_empty() {
        return Err(Error::InvalidProfile("no taps".into()));
    }
    if profile.len() > cp_len {
        return Err(Error::InvalidProfile(format!(
            "{} taps exceed the prefix length {cp_len}",
            profile.len()
        )));
    }
    if m_antennas == 0 {
        return Err(Error::InvalidConfig(
            "at least one antenna is required".into(),
        ));
    }
    let taps = (0..m_antennas)
        .map(|_| {
            let mut h = vec![Complex64::default(); cp_len];
            for (tap, var) in h.iter_mut().zip(profile.tap_variances()) {
                if *var > 0.0 {
                    *tap = complex_gaussian(rng, *var);
                }
            }
            h
        })
        .collect();
    Ok(ChannelRealization {
        taps,
        profile: profile.clone(),
    })
}

/// Per-antenna received stream plus the ground truth needed for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    /// One stream per antenna, `n_symbols * span + 2 * cp_len` samples each.
    pub samples: Vec<Vec<Complex64>>,
    pub true_cfo: f64,
    pub noise_power: f64,
    pub config: OfdmConfig,
    first_symbol: usize,
}

impl ReceivedFrame {
    pub fn new(
        samples: Vec<Vec<Complex64>>,
        true_cfo: f64,
        noise_power: f64,
        config: OfdmConfig,
    ) -> Result<Self> {
        check_cfo(true_cfo)?;
        let expected = Self::stream_len(&config);
        if samples.is_empty() {
            return Err(Error::InvalidConfig("frame has no antennas".into()));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != expected) {
            return Err(Error::FrameShape {
                expected,
                actual: bad.len(),
            });
        }
        Ok(Self {
            samples,
            true_cfo,
            noise_power,
            config,
            first_symbol: 0,
        })
    }

    fn stream_len(config: &OfdmConfig) -> usize {
        config.n_symbols * config.symbol_span() + config.lag_count()
    }

    /// Drops symbol 0 from every estimator sum, removing the cold-start
    /// transient of the channel convolution.
    pub fn skip_first_symbol(mut self) -> Result<Self> {
        if self.config.n_symbols < 2 {
            return Err(Error::InvalidConfig(
                "skipping the first symbol needs at least two symbols".into(),
            ));
        }
        self.first_symbol = 1;
        Ok(self)
    }

    /// Symbol indices summed over by the estimators.
    pub fn symbols(&self) -> Range<usize> {
        self.first_symbol..self.config.n_symbols
    }

    pub fn n_antennas(&self) -> usize {
        self.samples.len()
    }
}

pub(crate) fn check_cfo(cfo: f64) -> Result<()> {
    if (-0.5..0.5).contains(&cfo) {
        Ok(())
    } else {
        Err(Error::CfoOutOfRange(cfo))
    }
}

/// Applies the continuous CFO phase ramp, the per-antenna channel and AWGN.
pub fn propagate<R: Rng + ?Sized>(
    tx: &TxStream,
    channel: &ChannelRealization,
    cfo: f64,
    noise_power: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    check_cfo(cfo)?;
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise_power {noise_power} must be >= 0"
        )));
    }
    let config = tx.config;
    let out_len = ReceivedFrame::stream_len(&config);
    if tx.samples.len() < out_len {
        return Err(Error::FrameShape {
            expected: out_len,
            actual: tx.samples.len(),
        });
    }

    let step = 2.0 * std::f64::consts::PI * cfo / config.n_fft as f64;
    let rotated: Vec<Complex64> = tx.samples[..out_len]
        .iter()
        .enumerate()
        .map(|(n, x)| x * Complex64::from_polar(1.0, step * n as f64))
        .collect();

    let samples = channel
        .taps
        .iter()
        .map(|taps| {
            (0..out_len)
                .map(|i| {
                    let mut acc = Complex64::default();
                    for (l, h) in taps.iter().enumerate().take(i + 1) {
                        acc += rotated[i - l] * h;
                    }
                    if noise_power > 0.0 {
                        acc += complex_gaussian(rng, noise_power);
                    }
                    acc
                })
                .collect()
        })
        .collect();

    ReceivedFrame::new(samples, cfo, noise_power, config)
}
