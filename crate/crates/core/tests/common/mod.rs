//! Independent oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use cfo_lab::bounds::eta_profile;
use cfo_lab::bounds::lag_covariance;
use cfo_lab::channel::{propagate, ChannelRealization, ReceivedFrame};
use cfo_lab::estimator::empirical_cost;
use cfo_lab::frame::{random_stream, OfdmConfig};
use num_complex::Complex64;
use rand::Rng;

/// `k` transient-free symbols over a fixed channel (one warm-up symbol is
/// generated and skipped).
pub fn frame_on_channel<R: Rng>(
    rng: &mut R,
    channel: &ChannelRealization,
    k: usize,
    theta: f64,
    noise: f64,
) -> ReceivedFrame {
    let cfg = OfdmConfig {
        n_symbols: k + 1,
        n_antennas: channel.taps.len(),
        ..Default::default()
    };
    let tx = random_stream(rng, &cfg).unwrap();
    propagate(&tx, channel, theta, noise, rng)
        .unwrap()
        .skip_first_symbol()
        .unwrap()
}

/// `(r[kÑ+l], r[kÑ+N+l])` for every used symbol and antenna.
pub fn lag_pairs(frame: &ReceivedFrame, lag: usize) -> Vec<(Complex64, Complex64)> {
    let (n, span) = (frame.config.n_fft, frame.config.symbol_span());
    let mut out = Vec::new();
    for k in frame.symbols() {
        for stream in &frame.samples {
            out.push((stream[k * span + lag], stream[k * span + n + lag]));
        }
    }
    out
}

/// Sample mean of `r[kÑ+l]·conj(r[kÑ+N+l])`.
pub fn lag_correlation(frame: &ReceivedFrame, lag: usize) -> Complex64 {
    let pairs = lag_pairs(frame, lag);
    let sum: Complex64 = pairs.iter().map(|(a, b)| a * b.conj()).sum();
    sum / pairs.len() as f64
}

/// Brute-force minimizer of `empirical_cost` over `[-0.5, 0.5)`.
pub fn grid_argmin(frame: &ReceivedFrame, step: f64) -> f64 {
    let lags: Vec<usize> = (0..frame.config.lag_count()).collect();
    let points = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..points {
        let xi = -0.5 + i as f64 * step;
        let c = empirical_cost(frame, xi, &lags).unwrap();
        if c < best.0 {
            best = (c, xi);
        }
    }
    best.1
}

/// Pair log-likelihood up to θ-independent terms:
/// `−Σ v^H C(θ)^{-1} v` over every lag pair of every frame.
fn log_likelihood(
    frames: &[ReceivedFrame],
    channel: &ChannelRealization,
    noise: f64,
    theta: f64,
) -> f64 {
    let mut total = 0.0;
    for (m, taps) in channel.taps.iter().enumerate() {
        let eta = eta_profile(taps, 1.0).unwrap();
        for lag in 0..eta.eta_of_l.len() {
            let c = lag_covariance(&eta, lag, noise, theta).unwrap();
            let det = (c[0][0] * c[1][1] - c[0][1] * c[1][0]).re;
            for frame in frames {
                let (n, span) = (frame.config.n_fft, frame.config.symbol_span());
                for k in frame.symbols() {
                    let a = frame.samples[m][k * span + lag];
                    let b = frame.samples[m][k * span + n + lag];
                    let quad = c[1][1] * a.norm_sqr() + c[0][0] * b.norm_sqr()
                        - c[0][1] * a.conj() * b
                        - c[1][0] * b.conj() * a;
                    total -= quad.re / det;
                }
            }
        }
    }
    total
}

/// Average negative second difference of the log-likelihood at `theta`.
pub fn curvature_fisher(
    frames: &[ReceivedFrame],
    channel: &ChannelRealization,
    noise: f64,
    theta: f64,
    delta: f64,
) -> f64 {
    let ll = |t: f64| log_likelihood(frames, channel, noise, t);
    let second = (ll(theta + delta) - 2.0 * ll(theta) + ll(theta - delta)) / (delta * delta);
    -second / frames.len() as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn lag_phase(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * theta)
}
