//! Transmit side: square-QAM symbol generation and cyclic-prefixed OFDM
//! modulation into one contiguous baseband stream.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static frame geometry and modulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    /// DFT size.
    pub n_fft: usize,
    /// Cyclic prefix length.
    pub cp_len: usize,
    /// OFDM symbols available to the estimator.
    pub n_symbols: usize,
    /// Receive antennas sharing one oscillator.
    pub n_antennas: usize,
    /// Square QAM order (4, 16, 64, ...).
    pub qam_order: usize,
    /// Average power per time-domain sample.
    pub signal_power: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n_fft: 64,
            cp_len: 16,
            n_symbols: 16,
            n_antennas: 1,
            qam_order: 16,
            signal_power: 1.0,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.cp_len == 0 || self.n_symbols == 0 || self.n_antennas == 0 {
            return Err(Error::InvalidConfig(
                "n_fft, cp_len, n_symbols and n_antennas must be positive".into(),
            ));
        }
        if self.cp_len >= self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "cp_len {} must be smaller than n_fft {}",
                self.cp_len, self.n_fft
            )));
        }
        qam_side(self.qam_order)?;
        if !(self.signal_power.is_finite() && self.signal_power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "signal_power {} must be positive",
                self.signal_power
            )));
        }
        Ok(())
    }

    /// Samples per OFDM symbol including its prefix.
    pub fn symbol_span(&self) -> usize {
        self.n_fft + self.cp_len
    }

    /// Number of lags the estimators correlate over (twice the prefix).
    pub fn lag_count(&self) -> usize {
        2 * self.cp_len
    }
}

/// Transmitted time-domain samples: `n_symbols + 1` prefixed symbols, the
/// last one a guard so every lag of the final data symbol is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct TxStream {
    pub samples: Vec<Complex64>,
    pub config: OfdmConfig,
}

fn qam_side(order: usize) -> Result<usize> {
    let side = (order as f64).sqrt().round() as usize;
    if order < 4 || side * side != order {
        return Err(Error::InvalidConstellation(order));
    }
    Ok(side)
}

/// All points of a square QAM grid scaled to the requested average power.
pub fn qam_constellation(order: usize, power: f64) -> Result<Vec<Complex64>> {
    let side = qam_side(order)?;
    let raw_power = 2.0 * (order as f64 - 1.0) / 3.0;
    let scale = (power / raw_power).sqrt();
    let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
    Ok((0..side)
        .flat_map(|i| (0..side).map(move |q| (i, q)))
        .map(|(i, q)| Complex64::new(level(i), level(q)))
        .collect())
}

/// Draws `count` symbols uniformly from a square QAM constellation whose
/// average power is `power`.
pub fn draw_qam_symbols<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    order: usize,
    power: f64,
) -> Result<Vec<Complex64>> {
    let points = qam_constellation(order, power)?;
    Ok((0..count)
        .map(|_| points[rng.random_range(0..points.len())])
        .collect())
}

/// Unitary inverse DFT per symbol, cyclic prefix insertion and
/// concatenation. Expects `(n_symbols + 1) * n_fft` frequency-domain values.
pub fn modulate_stream(freq_symbols: &[Complex64], config: &OfdmConfig) -> Result<TxStream> {
    config.validate()?;
    let n = config.n_fft;
    let l = config.cp_len;
    let blocks = config.n_symbols + 1;
    if freq_symbols.len() != blocks * n {
        return Err(Error::FrameShape {
            expected: blocks * n,
            actual: freq_symbols.len(),
        });
    }

    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let norm = 1.0 / (n as f64).sqrt();
    let mut samples = Vec::with_capacity(blocks * config.symbol_span());
    let mut buf = vec![Complex64::default(); n];
    for block in freq_symbols.chunks_exact(n) {
        buf.copy_from_slice(block);
        ifft.process(&mut buf);
        buf.iter_mut().for_each(|v| *v *= norm);
        samples.extend_from_slice(&buf[n - l..]);
        samples.extend_from_slice(&buf);
    }
    Ok(TxStream {
        samples,
        config: *config,
    })
}

/// Random QAM data on every subcarrier of every symbol (guard included).
pub fn random_stream<R: Rng + ?Sized>(rng: &mut R, config: &OfdmConfig) -> Result<TxStream> {
    config.validate()?;
    let count = (config.n_symbols + 1) * config.n_fft;
    let freq = draw_qam_symbols(rng, count, config.qam_order, config.signal_power)?;
    modulate_stream(&freq, config)
}
