//! Cyclic-prefix correlation estimators: the closed-form coarse estimate,
//! per-lag residual energies, and the fixed and adaptive subset refinements.
//!
//! A lag product `r[kÑ + l] * conj(r[kÑ + N + l])` carries phase `-2πθ`
//! under the continuous phase-ramp channel model, so every angle
//! extraction and every compensation factor uses [`CFO_SIGN`] to map that
//! phase back onto `θ`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::eta_profile;
use crate::channel::{ChannelRealization, ReceivedFrame};
use crate::error::{Error, Result};
use crate::frame::OfdmConfig;

/// Sign relating the lag-product phase to the CFO: `θ = CFO_SIGN * arg / 2π`.
pub const CFO_SIGN: f64 = -1.0;

/// Wraps onto the fractional CFO circle `[-0.5, 0.5)`.
pub fn wrap_cfo(x: f64) -> f64 {
    let w = (x + 0.5).rem_euclid(1.0) - 0.5;
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Distance between two fractional CFOs on the unit circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_cfo(a - b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EstimatorMode {
    Coarse,
    FixedFine { lambda: usize },
    AdaptiveFine { iter: usize },
}

impl EstimatorMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::Coarse => "coarse",
            EstimatorMode::FixedFine { .. } => "fixed_fine",
            EstimatorMode::AdaptiveFine { .. } => "adaptive_fine",
        }
    }

    pub fn lambda(&self) -> Option<usize> {
        match self {
            EstimatorMode::FixedFine { lambda } => Some(*lambda),
            _ => None,
        }
    }

    pub fn iter(&self) -> Option<usize> {
        match self {
            EstimatorMode::AdaptiveFine { iter } => Some(*iter),
            _ => None,
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorMode::Coarse => write!(f, "coarse"),
            EstimatorMode::FixedFine { lambda } => write!(f, "f-fine({lambda})"),
            EstimatorMode::AdaptiveFine { iter } => write!(f, "a-fine({iter})"),
        }
    }
}

/// Empirical residual energy `R(l)` for each of the `2L` lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LagEnergies {
    pub r_of_l: Vec<f64>,
}

impl LagEnergies {
    pub fn total(&self) -> f64 {
        self.r_of_l.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfoEstimate {
    pub xi: f64,
    pub mode: EstimatorMode,
    /// Subset size of the final fine estimate.
    pub lambda_used: Option<usize>,
    /// Lags of the final fine estimate, ascending.
    pub subset: Option<Vec<usize>>,
    /// `R(l)` evaluated at the estimate the final subset was chosen from.
    pub lag_energies: Option<LagEnergies>,
    pub iterations: usize,
    /// Adaptive mode only: the chosen subset size of every iteration.
    pub lambda_trace: Vec<usize>,
}

/// All lags `0..2L`.
pub fn full_lag_set(config: &OfdmConfig) -> Vec<usize> {
    (0..config.lag_count()).collect()
}

fn check_lags(frame: &ReceivedFrame, lag_set: &[usize]) -> Result<()> {
    if lag_set.is_empty() {
        return Err(Error::EmptySubset);
    }
    let max = frame.config.lag_count();
    match lag_set.iter().find(|&&l| l >= max) {
        Some(&lag) => Err(Error::LagOutOfRange { lag, max }),
        None => Ok(()),
    }
}

/// Per-lag correlation `Σ_k Σ_m r[kÑ+l] conj(r[kÑ+N+l])`, one entry per lag.
fn lag_table(frame: &ReceivedFrame) -> Vec<Complex64> {
    let cfg = &frame.config;
    let (n, span) = (cfg.n_fft, cfg.symbol_span());
    (0..cfg.lag_count())
        .map(|l| {
            let mut acc = Complex64::default();
            for k in frame.symbols() {
                let i = k * span + l;
                for stream in &frame.samples {
                    acc += stream[i] * stream[i + n].conj();
                }
            }
            acc
        })
        .collect()
}

fn subset_sum(table: &[Complex64], lag_set: &[usize]) -> Complex64 {
    lag_set.iter().map(|&l| table[l]).sum()
}

fn angle_to_cfo(sum: Complex64) -> Result<f64> {
    if sum == Complex64::default() {
        return Err(Error::DegenerateCorrelation);
    }
    Ok(wrap_cfo(CFO_SIGN * sum.arg() / (2.0 * PI)))
}

/// Sum of lag products over symbols, antennas and the given lags.
pub fn lag_products(frame: &ReceivedFrame, lag_set: &[usize]) -> Result<Complex64> {
    check_lags(frame, lag_set)?;
    Ok(subset_sum(&lag_table(frame), lag_set))
}

/// `Σ_k Σ_m Σ_l |r[kÑ+l] - e^{j2π·s·ξ} r[kÑ+N+l]|²` over the given lags.
pub fn empirical_cost(frame: &ReceivedFrame, xi: f64, lag_set: &[usize]) -> Result<f64> {
    check_lags(frame, lag_set)?;
    let r = lag_energy_profile(frame, xi);
    Ok(lag_set.iter().map(|&l| r.r_of_l[l]).sum())
}

/// Expected full-lag-set cost contributed by one OFDM symbol, over data and
/// noise for a fixed channel:
/// `2L·Ση·(1 − cos 2π(ξ−θ)) + 2L·Ση + 4L·M·σ_z²`.
///
/// Lags `L..2L` never fully overlap their copy, so the cost keeps a floor of
/// `2L·Ση` even at `ξ = θ` with no noise.
pub fn theoretical_cost(
    channel: &ChannelRealization,
    config: &OfdmConfig,
    xi: f64,
    theta: f64,
    noise_power: f64,
) -> f64 {
    let cos = (2.0 * PI * (xi - theta)).cos();
    channel
        .taps
        .iter()
        .map(|taps| {
            let eta =
                eta_profile(taps, config.signal_power).expect("channel taps are prefix-length");
            eta.eta_of_l
                .iter()
                .map(|eta_l| 2.0 * (eta.eta_total + noise_power) - 2.0 * eta_l * cos)
                .sum::<f64>()
        })
        .sum()
}

/// `R(l) = Σ_k Σ_m |y_k^(m)[l](ξ)|²` for every lag.
pub fn lag_energy_profile(frame: &ReceivedFrame, xi: f64) -> LagEnergies {
    let cfg = &frame.config;
    let (n, span) = (cfg.n_fft, cfg.symbol_span());
    let comp = Complex64::from_polar(1.0, 2.0 * PI * CFO_SIGN * xi);
    let r_of_l = (0..cfg.lag_count())
        .map(|l| {
            let mut acc = 0.0;
            for k in frame.symbols() {
                let i = k * span + l;
                for stream in &frame.samples {
                    acc += (stream[i] - comp * stream[i + n]).norm_sqr();
                }
            }
            acc
        })
        .collect();
    LagEnergies { r_of_l }
}

/// Indices of the `lambda` smallest `R(l)`, ascending; ties go to the
/// smaller index.
pub fn select_subset(energies: &LagEnergies, lambda: usize) -> Result<Vec<usize>> {
    let max = energies.r_of_l.len();
    if lambda == 0 || lambda > max {
        return Err(Error::LambdaOutOfRange { lambda, max });
    }
    let mut order: Vec<usize> = (0..max).collect();
    order.sort_by(|&a, &b| {
        energies.r_of_l[a]
            .total_cmp(&energies.r_of_l[b])
            .then(a.cmp(&b))
    });
    order.truncate(lambda);
    order.sort_unstable();
    Ok(order)
}

/// How adaptive refinement picks the subset size of each iteration
/// among the candidates `φ(Λ)`, `Λ ∈ [1, 2L−1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveRule {
    /// Smallest estimated error variance of `φ(Λ)`: the subset's minimum
    /// residual cost `Σ_S R(l; φ(Λ))` divided by `|Σ_S lag products|²`.
    #[default]
    ResidualRatio,
    /// The `φ(Λ)` circularly closest to the current estimate.
    ClosestToCurrent,
}

impl AdaptiveRule {
    pub fn name(&self) -> &'static str {
        match self {
            AdaptiveRule::ResidualRatio => "residual_ratio",
            AdaptiveRule::ClosestToCurrent => "closest_to_current",
        }
    }
}

impl std::str::FromStr for AdaptiveRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual_ratio" => Ok(AdaptiveRule::ResidualRatio),
            "closest_to_current" => Ok(AdaptiveRule::ClosestToCurrent),
            other => Err(Error::InvalidConfig(format!(
                "unknown adaptive rule `{other}`"
            ))),
        }
    }
}

/// Per-lag sums shared by all modes evaluated on one frame.
struct Correlator {
    /// `Σ_k Σ_m r[kÑ+l] conj(r[kÑ+N+l])`
    products: Vec<Complex64>,
    /// `Σ_k Σ_m |r[kÑ+l]|² + |r[kÑ+N+l]|²`, only filled for adaptive runs.
    powers: Vec<f64>,
}

impl Correlator {
    fn new(frame: &ReceivedFrame) -> Self {
        Self {
            products: lag_table(frame),
            powers: Vec::new(),
        }
    }

    fn with_powers(frame: &ReceivedFrame) -> Self {
        let cfg = &frame.config;
        let (n, span) = (cfg.n_fft, cfg.symbol_span());
        let powers = (0..cfg.lag_count())
            .map(|l| {
                let mut acc = 0.0;
                for k in frame.symbols() {
                    let i = k * span + l;
                    for stream in &frame.samples {
                        acc += stream[i].norm_sqr() + stream[i + n].norm_sqr();
                    }
                }
                acc
            })
            .collect();
        Self {
            products: lag_table(frame),
            powers,
        }
    }

    fn coarse(&self) -> Result<f64> {
        angle_to_cfo(self.products.iter().sum())
    }

    fn fine(&self, energies: &LagEnergies, lambda: usize) -> Result<(f64, Vec<usize>)> {
        let subset = select_subset(energies, lambda)?;
        let xi = angle_to_cfo(subset_sum(&self.products, &subset))?;
        Ok((xi, subset))
    }

    /// `min_ξ Σ_S R(l; ξ) / |Σ_S P_l|²`; the minimum is attained at the
    /// subset's own angle estimate and equals `Σ_S A_l − 2|Σ_S P_l|`.
    fn residual_ratio(&self, subset: &[usize]) -> f64 {
        let corr = subset_sum(&self.products, subset).norm();
        let power: f64 = subset.iter().map(|&l| self.powers[l]).sum();
        (power - 2.0 * corr).max(0.0) / (corr * corr)
    }
}

/// Closed-form estimate over the full lag set.
pub fn coarse_estimate(frame: &ReceivedFrame) -> Result<CfoEstimate> {
    let xi = Correlator::new(frame).coarse()?;
    Ok(CfoEstimate {
        xi,
        mode: EstimatorMode::Coarse,
        lambda_used: None,
        subset: None,
        lag_energies: None,
        iterations: 0,
        lambda_trace: Vec::new(),
    })
}

/// Coarse estimate, `R(l)` at that estimate, then the closed form restricted
/// to the `lambda` lags with the smallest residual energy.
pub fn fixed_fine(frame: &ReceivedFrame, lambda: usize) -> Result<CfoEstimate> {
    let max = frame.config.lag_count();
    if lambda == 0 || lambda > max {
        return Err(Error::LambdaOutOfRange { lambda, max });
    }
    let corr = Correlator::new(frame);
    let coarse = corr.coarse()?;
    let energies = lag_energy_profile(frame, coarse);
    let (xi, subset) = corr.fine(&energies, lambda)?;
    Ok(CfoEstimate {
        xi,
        mode: EstimatorMode::FixedFine { lambda },
        lambda_used: Some(lambda),
        subset: Some(subset),
        lag_energies: Some(energies),
        iterations: 1,
        lambda_trace: Vec::new(),
    })
}

/// Iterative subset-size selection with the default [`AdaptiveRule`].
pub fn adaptive_fine(frame: &ReceivedFrame, iter: usize) -> Result<CfoEstimate> {
    adaptive_fine_with(frame, iter, AdaptiveRule::default())
}

/// Each iteration recomputes `R(l)` at the current estimate, forms the fine
/// estimate `φ(Λ)` for every `Λ ∈ [1, 2L−1]`, and moves to the candidate
/// preferred by `rule` (smallest `Λ` on ties).
pub fn adaptive_fine_with(
    frame: &ReceivedFrame,
    iter: usize,
    rule: AdaptiveRule,
) -> Result<CfoEstimate> {
    let corr = Correlator::with_powers(frame);
    let mut theta = corr.coarse()?;
    let mut last: Option<(usize, Vec<usize>, LagEnergies)> = None;
    let mut trace = Vec::with_capacity(iter);

    for _ in 0..iter {
        let energies = lag_energy_profile(frame, theta);
        let mut chosen: Option<(f64, usize, f64, Vec<usize>)> = None;
        for lambda in 1..frame.config.lag_count() {
            let (phi, subset) = corr.fine(&energies, lambda)?;
            let score = match rule {
                AdaptiveRule::ResidualRatio => corr.residual_ratio(&subset),
                AdaptiveRule::ClosestToCurrent => circular_distance(theta, phi),
            };
            if chosen.as_ref().is_none_or(|(best, ..)| score < *best) {
                chosen = Some((score, lambda, phi, subset));
            }
        }
        let (_, lambda, phi, subset) = chosen.expect("at least one subset size");
        theta = phi;
        trace.push(lambda);
        last = Some((lambda, subset, energies));
    }

    let (lambda_used, subset, lag_energies) = match last {
        Some((l, s, e)) => (Some(l), Some(s), Some(e)),
        None => (None, None, None),
    };
    Ok(CfoEstimate {
        xi: theta,
        mode: EstimatorMode::AdaptiveFine { iter },
        lambda_used,
        subset,
        lag_energies,
        iterations: iter,
        lambda_trace: trace,
    })
}

pub fn estimate(frame: &ReceivedFrame, mode: EstimatorMode) -> Result<CfoEstimate> {
    estimate_with(frame, mode, AdaptiveRule::default())
}

pub fn estimate_with(
    frame: &ReceivedFrame,
    mode: EstimatorMode,
    rule: AdaptiveRule,
) -> Result<CfoEstimate> {
    match mode {
        EstimatorMode::Coarse => coarse_estimate(frame),
        EstimatorMode::FixedFine { lambda } => fixed_fine(frame, lambda),
        EstimatorMode::AdaptiveFine { iter } => adaptive_fine_with(frame, iter, rule),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, propagate, PowerProfile};
    use crate::frame::random_stream;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: usize, m: usize) -> OfdmConfig {
        OfdmConfig {
            n_symbols: k,
            n_antennas: m,
            ..Default::default()
        }
    }

    fn flat_frame(theta: f64, k: usize, seed: u64) -> ReceivedFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tx = random_stream(&mut rng, &cfg(k, 1)).unwrap();
        let ch = ChannelRealization::flat(1, 16, Complex64::new(0.6, 0.8));
        propagate(&tx, &ch, theta, 0.0, &mut rng).unwrap()
    }

    fn noisy_frame(theta: f64, k: usize, m: usize, noise: f64, seed: u64) -> ReceivedFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = draw_channel(&mut rng, m, &PowerProfile::uniform(5).unwrap(), 16).unwrap();
        let tx = random_stream(&mut rng, &cfg(k, m)).unwrap();
        propagate(&tx, &ch, theta, noise, &mut rng).unwrap()
    }

    fn zero_frame() -> ReceivedFrame {
        let c = cfg(2, 2);
        let len = 2 * 80 + 32;
        ReceivedFrame::new(vec![vec![Complex64::default(); len]; 2], 0.1, 0.0, c).unwrap()
    }

    fn prefix_lags() -> Vec<usize> {
        (0..16).collect()
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_cfo(0.5), -0.5);
        assert_eq!(wrap_cfo(-0.5), -0.5);
        assert!((wrap_cfo(0.7) + 0.3).abs() < 1e-15);
        assert!((circular_distance(0.49, -0.49) - 0.02).abs() < 1e-12);
        assert!(wrap_cfo(-1e-18) < 0.5);
    }

    proptest! {
        #[test]
        fn wrap_lands_in_range(x in -100.0f64..100.0) {
            let w = wrap_cfo(x);
            prop_assert!((-0.5..0.5).contains(&w));
            prop_assert!(((x - w) - (x - w).round()).abs() < 1e-9);
        }

        #[test]
        fn selected_subset_has_minimal_energy(
            r in proptest::collection::vec(0.0f64..10.0, 8),
            lambda in 1usize..=8,
            other in proptest::sample::subsequence((0..8).collect::<Vec<_>>(), 1..=8),
        ) {
            let e = LagEnergies { r_of_l: r.clone() };
            let s = select_subset(&e, lambda).unwrap();
            prop_assert_eq!(s.len(), lambda);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            if other.len() == lambda {
                let a: f64 = s.iter().map(|&l| r[l]).sum();
                let b: f64 = other.iter().map(|&l| r[l]).sum();
                prop_assert!(a <= b + 1e-12);
            }
        }
    }

    #[test]
    fn lag_products_of_zero_frame() {
        let f = zero_frame();
        assert_eq!(
            lag_products(&f, &full_lag_set(&f.config)).unwrap(),
            Complex64::default()
        );
        assert_eq!(coarse_estimate(&f), Err(Error::DegenerateCorrelation));
        assert_eq!(lag_products(&f, &[]), Err(Error::EmptySubset));
        assert_eq!(
            lag_products(&f, &[3, 32]),
            Err(Error::LagOutOfRange { lag: 32, max: 32 })
        );
    }

    #[test]
    fn prefix_lag_products_carry_minus_two_pi_theta() {
        let f = flat_frame(0.295, 3, 1);
        let p = lag_products(&f, &prefix_lags()).unwrap();
        let want = Complex64::from_polar(1.0, -2.0 * PI * 0.295);
        assert!((p / p.norm() - want).norm() < 1e-12);
    }

    #[test]
    fn lag_products_match_triple_loop() {
        let f = noisy_frame(0.2, 3, 2, 0.1, 2);
        let lags = [0, 5, 17, 31];
        let mut want = Complex64::default();
        for k in 0..3 {
            for m in 0..2 {
                for &l in &lags {
                    want += f.samples[m][k * 80 + l] * f.samples[m][k * 80 + 64 + l].conj();
                }
            }
        }
        let got = lag_products(&f, &lags).unwrap();
        assert!((got - want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn coarse_is_close_but_not_exact_without_noise() {
        // lags L..2L pair data with the next symbol's prefix: self-noise only
        let f = flat_frame(0.295, 16, 3);
        let err = circular_distance(coarse_estimate(&f).unwrap().xi, 0.295);
        assert!(err < 5e-3, "{err}");
        assert!(err > 1e-9);
    }

    #[test]
    fn sign_convention_pin() {
        for i in 0..99 {
            let theta = -0.49 + 0.01 * i as f64;
            let f = flat_frame(theta, 16, 40 + i as u64);
            let p = lag_products(&f, &prefix_lags()).unwrap();
            let xi = wrap_cfo(CFO_SIGN * p.arg() / (2.0 * PI));
            assert!(circular_distance(xi, theta) < 1e-9);
            for lambda in [1, 8, 16] {
                let est = fixed_fine(&f, lambda).unwrap();
                assert!(circular_distance(est.xi, theta) < 1e-9, "{theta} {lambda}");
            }
            assert!(circular_distance(adaptive_fine(&f, 2).unwrap().xi, theta) < 1e-9);
        }
    }

    #[test]
    fn estimates_stay_in_range() {
        for seed in 0..20 {
            let f = noisy_frame(0.49, 1, 1, 1.0, seed);
            for mode in [
                EstimatorMode::Coarse,
                EstimatorMode::FixedFine { lambda: 4 },
                EstimatorMode::AdaptiveFine { iter: 2 },
            ] {
                let xi = estimate(&f, mode).unwrap().xi;
                assert!((-0.5..0.5).contains(&xi));
            }
        }
    }

    #[test]
    fn cost_of_zero_frame_is_zero() {
        let f = zero_frame();
        assert_eq!(
            empirical_cost(&f, 0.3, &full_lag_set(&f.config)).unwrap(),
            0.0
        );
        assert!(lag_energy_profile(&f, 0.1).r_of_l.iter().all(|&r| r == 0.0));
        assert_eq!(empirical_cost(&f, 0.3, &[]), Err(Error::EmptySubset));
    }

    #[test]
    fn cost_cancels_on_prefix_lags_at_true_cfo() {
        let f = flat_frame(0.295, 4, 5);
        let power: f64 = f.samples[0].iter().map(|v| v.norm_sqr()).sum();
        let cost = empirical_cost(&f, 0.295, &prefix_lags()).unwrap();
        assert!(cost <= 1e-18 * power.max(1.0) * 1e3, "{cost}");
        let r = lag_energy_profile(&f, 0.295);
        assert!(r.r_of_l[..16].iter().all(|&v| v < 1e-20 * power * 1e6));
        assert!(r.r_of_l[16..].iter().filter(|&&v| v > 1e-3).count() >= 14);
    }

    #[test]
    fn lag_energies_sum_to_cost() {
        let f = noisy_frame(0.1, 4, 2, 0.05, 6);
        let r = lag_energy_profile(&f, -0.2);
        assert_eq!(
            r.total(),
            empirical_cost(&f, -0.2, &full_lag_set(&f.config)).unwrap()
        );
    }

    /// Linear least-squares fit of `c0 + c1 cos 2πξ + c2 sin 2πξ`.
    fn cosine_fit(xs: &[f64], ys: &[f64]) -> [f64; 3] {
        let basis = |x: f64| [1.0, (2.0 * PI * x).cos(), (2.0 * PI * x).sin()];
        let mut a = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for (&x, &y) in xs.iter().zip(ys) {
            let f = basis(x);
            for i in 0..3 {
                b[i] += f[i] * y;
                for j in 0..3 {
                    a[i][j] += f[i] * f[j];
                }
            }
        }
        // Gaussian elimination; the system is well conditioned on a full period
        for col in 0..3 {
            for row in col + 1..3 {
                let factor = a[row][col] / a[col][col];
                let pivot = a[col];
                for (x, p) in a[row].iter_mut().zip(pivot).skip(col) {
                    *x -= factor * p;
                }
                b[row] -= factor * b[col];
            }
        }
        let mut c = [0.0; 3];
        for i in (0..3).rev() {
            let s: f64 = (i + 1..3).map(|j| a[i][j] * c[j]).sum();
            c[i] = (b[i] - s) / a[i][i];
        }
        c
    }

    #[test]
    fn cost_is_a_cosine_in_xi() {
        let f = noisy_frame(0.295, 8, 2, 0.1, 7);
        let lags = full_lag_set(&f.config);
        let xs: Vec<f64> = (0..400).map(|i| -0.5 + i as f64 / 400.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| empirical_cost(&f, x, &lags).unwrap())
            .collect();
        let c = cosine_fit(&xs, &ys);
        let amp = c[0];
        for (&x, &y) in xs.iter().zip(&ys) {
            let fit = c[0] + c[1] * (2.0 * PI * x).cos() + c[2] * (2.0 * PI * x).sin();
            assert!((fit - y).abs() < 1e-6 * amp);
        }
        // the fitted minimum sits at the closed-form estimate
        let fit_min = wrap_cfo((-c[2]).atan2(-c[1]) / (2.0 * PI));
        let coarse = coarse_estimate(&f).unwrap().xi;
        assert!(circular_distance(fit_min, coarse) < 1e-9);
    }

    #[test]
    fn theoretical_cost_examples() {
        let c = cfg(1, 1);
        let ch = ChannelRealization::flat(1, 16, Complex64::new(1.0, 0.0));
        // floor: 2L·η from the non-overlapping lags plus 4L·M·σ²
        let at_theta = theoretical_cost(&ch, &c, 0.2, 0.2, 0.5);
        assert!((at_theta - (32.0 + 4.0 * 16.0 * 0.5)).abs() < 1e-12);
        let far = theoretical_cost(&ch, &c, 0.5, 0.0, 0.0);
        let near = theoretical_cost(&ch, &c, 0.0, 0.0, 0.0);
        assert!((far - near - 64.0).abs() < 1e-12);
    }

    #[test]
    fn select_subset_examples() {
        let e = LagEnergies {
            r_of_l: vec![3.0, 1.0, 2.0, 1.0],
        };
        assert_eq!(select_subset(&e, 2).unwrap(), vec![1, 3]);
        let e = LagEnergies {
            r_of_l: vec![2.0, 2.0, 2.0],
        };
        assert_eq!(select_subset(&e, 2).unwrap(), vec![0, 1]);
        assert_eq!(select_subset(&e, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(
            select_subset(&e, 0),
            Err(Error::LambdaOutOfRange { lambda: 0, max: 3 })
        );
        assert_eq!(
            select_subset(&e, 4),
            Err(Error::LambdaOutOfRange { lambda: 4, max: 3 })
        );
    }

    #[test]
    fn full_subset_reproduces_coarse_bit_exactly() {
        for seed in 0..10 {
            let f = noisy_frame(-0.3, 4, 3, 0.3, seed);
            let fine = fixed_fine(&f, 32).unwrap();
            assert_eq!(fine.xi, coarse_estimate(&f).unwrap().xi);
            assert_eq!(fine.subset.unwrap(), full_lag_set(&f.config));
        }
        assert!(matches!(
            fixed_fine(&flat_frame(0.0, 1, 0), 33),
            Err(Error::LambdaOutOfRange { .. })
        ));
    }

    #[test]
    fn fine_diagnostics_are_consistent() {
        let f = noisy_frame(0.1, 4, 1, 0.01, 9);
        let est = fixed_fine(&f, 16).unwrap();
        assert_eq!(est.lambda_used, Some(16));
        assert_eq!(est.subset.as_ref().unwrap().len(), 16);
        assert_eq!(est.lag_energies.as_ref().unwrap().r_of_l.len(), 32);
        let est = adaptive_fine(&f, 2).unwrap();
        assert_eq!(est.lambda_trace.len(), 2);
        let lambda = est.lambda_used.unwrap();
        assert!((1..32).contains(&lambda));
        assert_eq!(est.subset.unwrap().len(), lambda);
        assert_eq!(*est.lambda_trace.last().unwrap(), lambda);
    }

    #[test]
    fn zero_iterations_is_coarse() {
        let f = noisy_frame(0.3, 2, 2, 0.1, 10);
        let est = adaptive_fine(&f, 0).unwrap();
        assert_eq!(est.xi, coarse_estimate(&f).unwrap().xi);
        assert!(est.lambda_used.is_none() && est.lambda_trace.is_empty());
    }

    #[test]
    fn literal_rule_stays_near_coarse() {
        let f = flat_frame(0.295, 16, 11);
        let coarse = coarse_estimate(&f).unwrap().xi;
        let est = adaptive_fine_with(&f, 2, AdaptiveRule::ClosestToCurrent).unwrap();
        assert!(est.lambda_trace.iter().all(|&l| l > 16));
        assert!(circular_distance(est.xi, coarse) < circular_distance(est.xi, 0.295));
        assert_eq!(
            "closest_to_current".parse::<AdaptiveRule>().unwrap(),
            AdaptiveRule::ClosestToCurrent
        );
        assert!("nearest".parse::<AdaptiveRule>().is_err());
    }

    #[test]
    fn residual_rule_avoids_imperfect_lags() {
        // noiseless multipath: only lags T−1..L−1 overlap their copy fully
        let f = noisy_frame(0.295, 16, 1, 0.0, 12);
        let est = adaptive_fine(&f, 2).unwrap();
        assert!(est.subset.unwrap().iter().all(|l| (4..16).contains(l)));
        assert!(circular_distance(est.xi, 0.295) < 1e-9);
    }
}
