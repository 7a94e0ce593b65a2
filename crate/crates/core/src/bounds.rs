//! Per-lag signal energies, the theoretical lag-pair covariance, and the
//! Cramér-Rao bound for fractional CFO estimation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

/// Signal energy `η` of one antenna and its lag-dependent partial sums `η_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSignalEnergy {
    pub eta_total: f64,
    /// One entry per lag `0..2L`.
    pub eta_of_l: Vec<f64>,
}

impl LagSignalEnergy {
    pub fn cp_len(&self) -> usize {
        self.eta_of_l.len() / 2
    }
}

/// `η_l` is the energy of the taps whose contribution to `r[kÑ+l]` comes
/// from a prefix sample, i.e. the part of the lag product that is perfectly
/// correlated with its copy `N` samples later:
///
/// * `l < L`: taps `0..=l`
/// * `l >= L`: taps `l−L+1..L`
pub fn eta_profile(taps: &[Complex64], signal_power: f64) -> Result<LagSignalEnergy> {
    let cp_len = taps.len();
    if cp_len == 0 {
        return Err(Error::Shape {
            expected: 1,
            actual: 0,
        });
    }
    let power: Vec<f64> = taps.iter().map(|h| signal_power * h.norm_sqr()).collect();
    let eta_total: f64 = power.iter().sum();
    let eta_of_l = (0..2 * cp_len)
        .map(|l| {
            if l < cp_len {
                power[..=l].iter().sum()
            } else {
                power[l - cp_len + 1..].iter().sum()
            }
        })
        .collect();
    Ok(LagSignalEnergy {
        eta_total,
        eta_of_l,
    })
}

/// [`eta_profile`] that also checks the tap vector length against `L`.
pub fn eta_profile_checked(
    taps: &[Complex64],
    cp_len: usize,
    signal_power: f64,
) -> Result<LagSignalEnergy> {
    if taps.len() != cp_len {
        return Err(Error::Shape {
            expected: cp_len,
            actual: taps.len(),
        });
    }
    eta_profile(taps, signal_power)
}

/// Covariance of `[r[kÑ+l], r[kÑ+N+l]]`:
/// `[[η+σ², η_l e^{-j2πθ}], [η_l e^{j2πθ}, η+σ²]]`.
///
/// The off-diagonal phase matches the simulator's lag-product phase.
pub fn lag_covariance(
    eta: &LagSignalEnergy,
    lag: usize,
    noise_power: f64,
    theta: f64,
) -> Result<[[Complex64; 2]; 2]> {
    let max = eta.eta_of_l.len();
    if lag >= max {
        return Err(Error::LagOutOfRange { lag, max });
    }
    let diag = Complex64::new(eta.eta_total + noise_power, 0.0);
    let off = Complex64::from_polar(eta.eta_of_l[lag], -2.0 * PI * theta);
    Ok([[diag, off], [off.conj(), diag]])
}

/// `I(θ) = 8Kπ² Σ_m Σ_l η_l² / ((η+σ²)² − η_l²)` over all `2L` lags.
pub fn fisher_information(
    channel: &ChannelRealization,
    signal_power: f64,
    noise_power: f64,
    k_symbols: usize,
) -> Result<f64> {
    let energies = channel
        .taps
        .iter()
        .map(|taps| eta_profile(taps, signal_power))
        .collect::<Result<Vec<_>>>()?;
    fisher_from_energies(&energies, noise_power, k_symbols)
}

/// Fisher information from per-antenna lag energies.
pub fn fisher_from_energies(
    energies: &[LagSignalEnergy],
    noise_power: f64,
    k_symbols: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for eta in energies {
        let diag = eta.eta_total + noise_power;
        for (lag, eta_l) in eta.eta_of_l.iter().enumerate() {
            let denom = diag * diag - eta_l * eta_l;
            if denom <= 0.0 {
                return Err(Error::SingularFisher { lag });
            }
            total += eta_l * eta_l / denom;
        }
    }
    Ok(8.0 * k_symbols as f64 * PI * PI * total)
}

/// Cramér-Rao bound `1 / I(θ)`; does not depend on `θ`.
pub fn crb(
    channel: &ChannelRealization,
    signal_power: f64,
    noise_power: f64,
    k_symbols: usize,
) -> Result<f64> {
    Ok(1.0 / fisher_information(channel, signal_power, noise_power, k_symbols)?)
}
