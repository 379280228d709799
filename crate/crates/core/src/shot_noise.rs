//! Shot-noise-limited detection: modulated drives, projected optical powers,
//! spectral demodulation, analytic signal-to-noise ratios and a Poisson
//! Monte Carlo of the photon counting.
//!
//! Projected powers follow the leading-order law
//! `I_k = n(n+1)/(2n+1)^2 (g~_k^tot)^2 I0` with `g~^tot = g~^bias + g~(t)`.
//! The spectral line at the drive frequency is linear in both the bias and
//! the modulation, while the shot noise is proportional to the bias, so the
//! signal-to-noise ratio is bias independent.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::beam::{experiment_params, min_detectable_displacement_tilt, ExperimentGeometry, MinDetectable};
use crate::config::ExperimentConfig;
use crate::error::{QmetError, Result};
use crate::weak::{normalization_scales, WEAKNESS_LIMIT, WEAKNESS_WARN};

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Largest allowed modulation-to-bias ratio.
pub const BIAS_DOMINANCE: f64 = 0.1;
/// Minimum number of Monte Carlo trials.
pub const MIN_TRIALS: usize = 100;
/// Minimum number of drive periods covered by a demodulated series.
pub const MIN_PERIODS: f64 = 10.0;
/// Means above this are sampled with a library Poisson sampler instead of inversion.
const INVERSION_LIMIT: f64 = 30.0;

/// How the weak-value magnitude follows from the post-selection angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakValueModel {
    /// `|A_w| = 1/epsilon`.
    SmallAngle,
    /// `|A_w| = (cot(epsilon/2) + 1)/2`, the full weak value of the horizontal
    /// projector between the diagonal pre-selection and the tilted post-selection.
    Exact,
}

impl WeakValueModel {
    pub fn magnitude(self, epsilon: f64) -> f64 {
        match self {
            Self::SmallAngle => 1.0 / epsilon,
            Self::Exact => (1.0 / (epsilon / 2.0).tan() + 1.0) / 2.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SmallAngle => "small_angle",
            Self::Exact => "exact",
        }
    }
}

impl fmt::Display for WeakValueModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeakValueModel {
    type Err = QmetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small_angle" => Ok(Self::SmallAngle),
            "exact" => Ok(Self::Exact),
            other => Err(QmetError::Config(format!("unknown weak value model {other:?}"))),
        }
    }
}

/// Two-actuator mirror drive with static biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSignal {
    /// Peak-to-peak actuator voltage.
    pub amplitude_volts: f64,
    /// Hz.
    pub freq: f64,
    /// Relative actuator phase, radians.
    pub theta: f64,
    /// Static beam displacement, meters.
    pub d_bias: f64,
    /// Static beam tilt, radians.
    pub phi_bias: f64,
    /// Displacement per volt with in-phase actuators, m/V.
    pub d_per_volt: f64,
    /// Tilt per volt with antiphase actuators, rad/V.
    pub phi_per_volt: f64,
}

/// Displacement and tilt amplitudes `(d, phi)` produced by the drive. The two
/// motions are in quadrature: `d(t) = d cos(wt)`, `phi(t) = phi sin(wt)`.
pub fn drive_to_signal(drive: &DriveSignal) -> (f64, f64) {
    let half = drive.theta / 2.0;
    (
        drive.amplitude_volts * drive.d_per_volt * half.cos(),
        drive.amplitude_volts * drive.phi_per_volt * half.sin(),
    )
}

/// Modulation amplitudes per volt `(g1_unit, g2_unit)` in the experiment
/// parameterization.
pub fn unit_gains(drive: &DriveSignal, geom: &ExperimentGeometry) -> (f64, f64) {
    let unit = DriveSignal { amplitude_volts: 1.0, ..*drive };
    let (d, phi) = drive_to_signal(&unit);
    ((d * d + (geom.z1 * phi).powi(2)).sqrt(), geom.k * phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Power on the reference projection, watts.
    pub i0: f64,
    /// Effective detected sample number.
    pub nu: f64,
    /// Detection time, seconds.
    pub tau: f64,
    /// Joules per photon.
    pub photon_energy: f64,
    /// Hz.
    pub rbw: f64,
    /// Watts.
    pub saturation: f64,
}

impl DetectorModel {
    /// Builds the detector from the sample number, detection time and
    /// wavelength; `I0 = gamma nu / tau`.
    pub fn new(nu: f64, tau: f64, wavelength: f64, rbw: f64, saturation: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("tau", tau), ("wavelength", wavelength), ("rbw", rbw), ("saturation", saturation)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QmetError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        let photon_energy = PLANCK * SPEED_OF_LIGHT / wavelength;
        let model = Self { i0: photon_energy * nu / tau, nu, tau, photon_energy, rbw, saturation };
        if model.rbw_mismatch() > 0.01 {
            log::warn!("detection time {tau} s differs from 1/RBW = {} s", 1.0 / rbw);
        }
        Ok(model)
    }

    /// Detected photons per second on the reference projection.
    pub fn photon_rate(&self) -> f64 {
        self.nu / self.tau
    }

    /// Shot-noise power fluctuation `gamma sqrt(nu) / tau`.
    pub fn shot_noise(&self) -> f64 {
        self.photon_energy * self.nu.sqrt() / self.tau
    }

    /// `|tau rbw - 1|`.
    pub fn rbw_mismatch(&self) -> f64 {
        (self.tau * self.rbw - 1.0).abs()
    }

    /// Relative deviation of `I0` from `gamma nu / tau`.
    pub fn power_defect(&self) -> f64 {
        (self.i0 - self.photon_energy * self.nu / self.tau).abs() / self.i0
    }

    pub fn check_saturation(&self, peak_power: f64) -> bool {
        let ok = peak_power <= self.saturation;
        if !ok {
            log::warn!("peak power {peak_power:e} W exceeds detector saturation {:e} W", self.saturation);
        }
        ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    Pi1,
    Pi2,
    Reference,
}

impl Projector {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pi1 => "pi1",
            Self::Pi2 => "pi2",
            Self::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    G1,
    G2,
}

impl Channel {
    pub fn projector(self) -> Projector {
        match self {
            Self::G1 => Projector::Pi1,
            Self::G2 => Projector::Pi2,
        }
    }
}

/// Everything needed to evaluate projected powers for one pointer mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModel {
    pub n: usize,
    pub sigma0: f64,
    pub weak_value_abs: f64,
    pub geom: ExperimentGeometry,
    pub drive: DriveSignal,
    pub detector: DetectorModel,
}

/// Normalized coupling `a + b cos(wt) + c sin(wt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub bias: f64,
    pub cos: f64,
    pub sin: f64,
}

impl Modulation {
    pub fn at(&self, phase: f64) -> f64 {
        self.bias + self.cos * phase.cos() + self.sin * phase.sin()
    }

    pub fn amplitude(&self) -> f64 {
        self.cos.hypot(self.sin)
    }

    /// Phase `psi` with `b cos + c sin = A cos(wt - psi)`.
    pub fn phase(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    /// Mean of the square over `[p0, p1]` in phase.
    fn mean_square(&self, p0: f64, p1: f64) -> f64 {
        let (a, b, c) = (self.bias, self.cos, self.sin);
        let width = p1 - p0;
        let int_cos = p1.sin() - p0.sin();
        let int_sin = p0.cos() - p1.cos();
        let int_cos2 = (2.0 * p1).sin() - (2.0 * p0).sin();
        let int_sin2 = (2.0 * p0).cos() - (2.0 * p1).cos();
        let constant = (a * a + (b * b + c * c) / 2.0) * width;
        let first = 2.0 * a * (b * int_cos + c * int_sin);
        let second = (b * b - c * c) / 4.0 * int_cos2 + b * c / 2.0 * int_sin2;
        (constant + first + second) / width
    }
}

impl SignalModel {
    pub fn new(
        n: usize,
        sigma0: f64,
        weak_value_abs: f64,
        geom: ExperimentGeometry,
        drive: DriveSignal,
        detector: DetectorModel,
    ) -> Result<Self> {
        if n == 0 {
            return Err(QmetError::Degenerate("projection readout needs n >= 1".into()));
        }
        if !(sigma0 > 0.0 && weak_value_abs > 0.0 && weak_value_abs.is_finite()) {
            return Err(QmetError::Domain("sigma0 and |A_w| must be positive".into()));
        }
        if !(drive.freq > 0.0 && drive.amplitude_volts >= 0.0) {
            return Err(QmetError::Domain("drive frequency must be positive and amplitude non-negative".into()));
        }
        Ok(Self { n, sigma0, weak_value_abs, geom, drive, detector })
    }

    pub fn from_config(config: &ExperimentConfig, n: usize, volts: f64) -> Result<Self> {
        Self::new(
            n,
            config.sigma0,
            config.weak_value_model.magnitude(config.epsilon()),
            config.geometry()?,
            config.drive(n, volts),
            config.detector()?,
        )
    }

    pub fn with_volts(&self, volts: f64) -> Self {
        Self { drive: DriveSignal { amplitude_volts: volts, ..self.drive }, ..*self }
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        let wavelength = 2.0 * PI / self.geom.k;
        let d = &self.detector;
        Ok(Self { detector: DetectorModel::new(nu, d.tau, wavelength, d.rbw, d.saturation)?, ..*self })
    }

    /// `n(n+1)/(2n+1)^2`.
    pub fn projection_coefficient(&self) -> f64 {
        let nf = self.n as f64;
        nf * (nf + 1.0) / (2.0 * nf + 1.0).powi(2)
    }

    /// Normalized `g~1(t)` and `g~2(t)`.
    pub fn modulations(&self) -> (Modulation, Modulation) {
        let (s1, s2) = normalization_scales(self.n, self.sigma0, self.weak_value_abs);
        let (g1_bias, g2_bias) = experiment_params(self.drive.d_bias, self.drive.phi_bias, &self.geom);
        let (d, phi) = drive_to_signal(&self.drive);
        (
            Modulation { bias: s1 * g1_bias, cos: s1 * d, sin: s1 * self.geom.z1 * phi },
            Modulation { bias: s2 * g2_bias, cos: 0.0, sin: s2 * self.geom.k * phi },
        )
    }

    fn modulation_for(&self, projector: Projector) -> Option<Modulation> {
        let (m1, m2) = self.modulations();
        match projector {
            Projector::Pi1 => Some(m1),
            Projector::Pi2 => Some(m2),
            Projector::Reference => None,
        }
    }

    /// Checks weakness of the peak total coupling and dominance of the biases.
    pub fn check_preconditions(&self, projector: Projector) -> Result<()> {
        let (m1, m2) = self.modulations();
        let peak1 = m1.bias.abs() + m1.amplitude();
        let peak2 = m2.bias.abs() + m2.amplitude();
        let amplified = peak1.hypot(peak2) / 2.0;
        if amplified >= WEAKNESS_LIMIT {
            return Err(QmetError::Precondition(format!(
                "peak amplified coupling {amplified:.3e} violates the weak regime (< {WEAKNESS_LIMIT})"
            )));
        }
        if amplified > WEAKNESS_WARN {
            log::warn!("peak amplified coupling {amplified:.3e} is above {WEAKNESS_WARN}");
        }
        let channels: &[Modulation] = match projector {
            Projector::Pi1 => std::slice::from_ref(&m1),
            Projector::Pi2 => std::slice::from_ref(&m2),
            Projector::Reference => &[m1, m2],
        };
        for m in channels {
            if m.amplitude() > 0.0 && !(m.amplitude() < BIAS_DOMINANCE * m.bias.abs()) {
                return Err(QmetError::Precondition(format!(
                    "modulation {:.3e} is not dominated by bias {:.3e} (ratio must stay below {BIAS_DOMINANCE})",
                    m.amplitude(),
                    m.bias
                )));
            }
        }
        Ok(())
    }

    /// Projection probability at drive phase `wt`.
    pub fn probability(&self, projector: Projector, phase: f64) -> f64 {
        let (m1, m2) = self.modulations();
        match projector {
            Projector::Pi1 => self.projection_coefficient() * m1.at(phase).powi(2),
            Projector::Pi2 => self.projection_coefficient() * m2.at(phase).powi(2),
            Projector::Reference => 1.0 / (1.0 + (m1.at(phase).powi(2) + m2.at(phase).powi(2)) / 4.0),
        }
    }

    /// Mean projection probability over the phase interval `[p0, p1]`.
    fn mean_probability(&self, projector: Projector, p0: f64, p1: f64) -> f64 {
        match self.modulation_for(projector) {
            Some(m) => self.projection_coefficient() * m.mean_square(p0, p1),
            None => {
                const NODES: usize = 16;
                (0..NODES)
                    .map(|i| self.probability(projector, p0 + (p1 - p0) * (i as f64 + 0.5) / NODES as f64))
                    .sum::<f64>()
                    / NODES as f64
            }
        }
    }

    /// Amplitude of the projected power at the drive frequency, watts.
    pub fn f_line_amplitude(&self, projector: Projector) -> f64 {
        match self.modulation_for(projector) {
            Some(m) => 2.0 * self.projection_coefficient() * m.bias.abs() * m.amplitude() * self.detector.i0,
            None => 0.0,
        }
    }

    /// Shot-noise standard deviation of the projected power, watts.
    pub fn shot_noise(&self, projector: Projector) -> f64 {
        let dc = match self.modulation_for(projector) {
            Some(m) => self.projection_coefficient() * m.bias * m.bias,
            None => 1.0,
        };
        dc.sqrt() * self.detector.shot_noise()
    }

    /// Analytic signal-to-noise ratio of the drive-frequency line.
    pub fn analytic_snr(&self, channel: Channel) -> f64 {
        let (m1, m2) = self.modulations();
        let m = match channel {
            Channel::G1 => m1,
            Channel::G2 => m2,
        };
        analytic_snr_normalized(self.n, self.detector.nu, m.amplitude())
    }
}

/// Projected optical power at each time in `t_grid`, watts.
pub fn projected_power_timeseries(model: &SignalModel, projector: Projector, t_grid: &[f64]) -> Result<Vec<f64>> {
    model.check_preconditions(projector)?;
    let omega = 2.0 * PI * model.drive.freq;
    let series: Vec<f64> =
        t_grid.iter().map(|&t| model.probability(projector, omega * t) * model.detector.i0).collect();
    let peak = series.iter().copied().fold(0.0, f64::max);
    model.detector.check_saturation(peak);
    Ok(series)
}

/// Single-bin Fourier magnitude at `f` of the mean-removed series, normalized
/// so that a pure cosine of amplitude `A` returns `A`.
pub fn demodulate_peak(series: &[f64], sample_rate: f64, f: f64) -> Result<f64> {
    Ok(single_bin(series, sample_rate, f)?.norm())
}

fn single_bin(series: &[f64], sample_rate: f64, f: f64) -> Result<Complex64> {
    if !(sample_rate > 0.0 && f > 0.0) {
        return Err(QmetError::Sampling(format!("sample rate {sample_rate} and frequency {f} must be positive")));
    }
    if f >= sample_rate / 2.0 {
        return Err(QmetError::Sampling(format!("frequency {f} Hz is at or above Nyquist {} Hz", sample_rate / 2.0)));
    }
    let periods = series.len() as f64 * f / sample_rate;
    if periods < MIN_PERIODS {
        return Err(QmetError::Sampling(format!("series covers {periods:.2} periods, need at least {MIN_PERIODS}")));
    }
    let len = series.len() as f64;
    let mean = series.iter().sum::<f64>() / len;
    let step = 2.0 * PI * f / sample_rate;
    let sum: Complex64 = series
        .iter()
        .enumerate()
        .map(|(k, &x)| Complex64::from_polar(x - mean, -step * k as f64))
        .sum();
    Ok(sum * (2.0 / len))
}

/// Signal-to-noise ratio for normalized modulation amplitude `g~`:
/// `2 |g~| sqrt(nu n(n+1)) / (2n+1)`.
pub fn analytic_snr_normalized(n: usize, nu: f64, g_tilde: f64) -> f64 {
    let nf = n as f64;
    2.0 * g_tilde.abs() * (nu * nf * (nf + 1.0)).sqrt() / (2.0 * nf + 1.0)
}

/// Shot-noise-limited signal-to-noise ratio of channel `g1` or `g2` with
/// modulation amplitude `g` and the small-angle weak value `1/epsilon`.
pub fn analytic_snr(n: usize, nu: f64, epsilon: f64, sigma0: f64, channel: Channel, g: f64) -> Result<f64> {
    if n == 0 {
        return Err(QmetError::Degenerate("projection readout needs n >= 1".into()));
    }
    let nf = n as f64;
    let root = (nf * (nf + 1.0) * nu / ((2.0 * nf + 1.0) * epsilon * epsilon)).sqrt();
    Ok(match channel {
        Channel::G1 => root * 2.0 * g.abs() / sigma0,
        Channel::G2 => root * 4.0 * sigma0 * g.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSettings {
    pub trials: usize,
    pub seed: u64,
    pub bins_per_period: usize,
    pub noise_bins: usize,
    pub bisection_tol: f64,
    pub bracket_factor: f64,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        ExperimentConfig::default().monte_carlo()
    }
}

/// Mean statistics over trials at one drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStats {
    pub mean_snr: f64,
    pub se_snr: f64,
    /// Mean in-phase line amplitude, watts.
    pub mean_signal: f64,
    /// Mean noise-floor estimate, watts.
    pub mean_noise: f64,
    /// Expected noise floor `sqrt(mean counts per bin / bins)` in watts.
    pub expected_noise: f64,
}

/// Monte Carlo threshold where the mean SNR crosses one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub volts: f64,
    pub volts_se: f64,
    /// Modulation amplitude of the channel parameter at threshold.
    pub value: f64,
    pub value_se: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub n: usize,
    pub snr1: f64,
    pub snr1_se: f64,
    pub snr2: f64,
    pub snr2_se: f64,
    pub analytic_snr1: f64,
    pub analytic_snr2: f64,
    pub min_detectable: MinDetectable,
    pub threshold1: Threshold,
    pub threshold2: Threshold,
    pub analytic_min_detectable: MinDetectable,
    /// Mean in-phase line amplitudes `(I1, I2)`, watts.
    pub spectrum_peaks: (f64, f64),
    pub trials_used: usize,
    pub seed: u64,
}

/// Photon-counting simulation of one projector at one drive amplitude.
struct CountingExperiment {
    bins: usize,
    bin_width: f64,
    /// Expected counts per bin.
    means: Vec<f64>,
    /// `exp(-mean)` per bin.
    zero_probs: Vec<f64>,
    /// Fractional part of `f T` and its integer part.
    line_bin: usize,
    line_frac: f64,
    reference_phase: f64,
    noise_bins: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
}

impl CountingExperiment {
    fn new(model: &SignalModel, projector: Projector, settings: &MonteCarloSettings, fft: Arc<dyn Fft<f64>>) -> Result<Self> {
        model.check_preconditions(projector)?;
        let bins = fft.len();
        let bin_width = 1.0 / (settings.bins_per_period as f64 * model.drive.freq);
        let omega = 2.0 * PI * model.drive.freq;
        let rate = model.detector.photon_rate() * bin_width;
        let means: Vec<f64> = (0..bins)
            .map(|k| {
                let p0 = omega * bin_width * k as f64;
                rate * model.mean_probability(projector, p0, p0 + omega * bin_width)
            })
            .collect();
        let zero_probs = means.iter().map(|m| (-m).exp()).collect();
        let cycles = bins as f64 / settings.bins_per_period as f64;
        let line_bin = cycles.floor() as usize;
        let line_frac = cycles - line_bin as f64;
        let double_line = 2.0 * cycles;
        let mut noise_bins = Vec::with_capacity(2 * settings.noise_bins);
        for j in 2..settings.noise_bins + 2 {
            for bin in [line_bin.checked_sub(j), Some(line_bin + j)].into_iter().flatten() {
                let freq = bin as f64 + line_frac;
                if bin == 0 || freq >= bins as f64 / 2.0 || (freq - double_line).abs() < 1.5 {
                    return Err(QmetError::Sampling(format!(
                        "noise bin {bin} collides with DC, the second harmonic or Nyquist; reduce noise_bins"
                    )));
                }
                noise_bins.push(bin);
            }
        }
        let reference_phase = model.modulation_for(projector).map_or(0.0, |m| m.phase());
        Ok(Self { bins, bin_width, means, zero_probs, line_bin, line_frac, reference_phase, noise_bins, fft })
    }

    fn draw(&self, index: usize, uniform: f64, rng: &mut ChaCha8Rng) -> f64 {
        let mean = self.means[index];
        if mean <= 0.0 {
            return 0.0;
        }
        if mean > INVERSION_LIMIT {
            return Poisson::new(mean).map_or(mean, |p| p.sample(rng));
        }
        let mut term = self.zero_probs[index];
        let mut cdf = term;
        let mut count = 0.0;
        while uniform > cdf && term > 0.0 {
            count += 1.0;
            term *= mean / count;
            cdf += term;
        }
        count
    }

    /// Returns `(in-phase line amplitude, noise floor)` in counts per bin.
    fn trial(&self, settings: &MonteCarloSettings, trial: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(trial as u64);
        let mut counts = Vec::with_capacity(self.bins);
        for k in 0..self.bins {
            let u: f64 = rng.random();
            counts.push(self.draw(k, u, &mut rng));
        }
        let mean = counts.iter().sum::<f64>() / self.bins as f64;
        let shift = -2.0 * PI * self.line_frac / self.bins as f64;
        let mut buffer: Vec<Complex64> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| Complex64::from_polar(c - mean, shift * k as f64))
            .collect();
        self.fft.process(&mut buffer);
        let scale = 2.0 / self.bins as f64;
        let half_bin = PI * (self.line_bin as f64 + self.line_frac) / self.bins as f64;
        let line = buffer[self.line_bin] * Complex64::from_polar(scale, self.reference_phase - half_bin);
        let mut magnitudes: Vec<f64> = self.noise_bins.iter().map(|&b| scale * buffer[b].norm()).collect();
        magnitudes.sort_by(f64::total_cmp);
        let mid = magnitudes.len() / 2;
        let median = if magnitudes.len() % 2 == 0 { (magnitudes[mid - 1] + magnitudes[mid]) / 2.0 } else { magnitudes[mid] };
        (line.re, median / (2.0 * LN_2.sqrt()))
    }

    fn run(&self, settings: &MonteCarloSettings, photon_energy: f64) -> TrialStats {
        let results: Vec<(f64, f64)> = (0..settings.trials).into_par_iter().map(|t| self.trial(settings, t)).collect();
        let count = results.len() as f64;
        let snrs: Vec<f64> = results.iter().map(|&(s, n)| if n > 0.0 { s / n } else { 0.0 }).collect();
        let mean_snr = snrs.iter().sum::<f64>() / count;
        let var = snrs.iter().map(|s| (s - mean_snr).powi(2)).sum::<f64>() / (count - 1.0);
        let watts = photon_energy / self.bin_width;
        let mean_counts = self.means.iter().sum::<f64>() / self.bins as f64;
        TrialStats {
            mean_snr,
            se_snr: (var / count).sqrt(),
            mean_signal: watts * results.iter().map(|r| r.0).sum::<f64>() / count,
            mean_noise: watts * results.iter().map(|r| r.1).sum::<f64>() / count,
            expected_noise: watts * (mean_counts / self.bins as f64).sqrt(),
        }
    }
}

/// Reusable Monte Carlo engine for one pointer mode.
pub struct MonteCarlo {
    model: SignalModel,
    settings: MonteCarloSettings,
    fft: Arc<dyn Fft<f64>>,
}

impl MonteCarlo {
    pub fn new(model: SignalModel, settings: MonteCarloSettings) -> Result<Self> {
        if settings.trials < MIN_TRIALS {
            return Err(QmetError::Sampling(format!(
                "{} trials requested; at least {MIN_TRIALS} are needed for a standard-error estimate",
                settings.trials
            )));
        }
        if settings.bins_per_period < 4 {
            return Err(QmetError::Sampling("need at least 4 bins per drive period".into()));
        }
        let bins = (model.detector.tau * model.drive.freq * settings.bins_per_period as f64).round() as usize;
        let periods = bins as f64 / settings.bins_per_period as f64;
        if periods < MIN_PERIODS {
            return Err(QmetError::Sampling(format!("detection time covers {periods:.2} drive periods")));
        }
        let fft = FftPlanner::new().plan_fft_forward(bins);
        Ok(Self { model, settings, fft })
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    pub fn bins(&self) -> usize {
        self.fft.len()
    }

    /// Statistics of `projector` at drive amplitude `volts`.
    pub fn stats(&self, projector: Projector, volts: f64) -> Result<TrialStats> {
        let model = self.model.with_volts(volts);
        let experiment = CountingExperiment::new(&model, projector, &self.settings, Arc::clone(&self.fft))?;
        Ok(experiment.run(&self.settings, model.detector.photon_energy))
    }

    /// Volts per unit of the channel parameter.
    fn unit_gain(&self, channel: Channel) -> f64 {
        let (u1, u2) = unit_gains(&self.model.drive, &self.model.geom);
        match channel {
            Channel::G1 => u1,
            Channel::G2 => u2,
        }
    }

    /// Drive amplitude at which the analytic SNR equals one.
    pub fn analytic_threshold_volts(&self, channel: Channel) -> f64 {
        let snr = self.model.with_volts(1.0).analytic_snr(channel);
        1.0 / snr
    }

    /// Bisection on the drive amplitude for mean SNR equal to one, using the
    /// same random streams at every amplitude.
    pub fn threshold(&self, channel: Channel) -> Result<Threshold> {
        let projector = channel.projector();
        let mut lo = 0.0;
        let mut hi = self.settings.bracket_factor * self.analytic_threshold_volts(channel);
        let mut evaluations = 1;
        let top = self.stats(projector, hi)?;
        if !(top.mean_snr > 1.0) {
            return Err(QmetError::Sampling(format!(
                "mean SNR {:.3} at the upper bracket does not exceed one; increase bracket_factor",
                top.mean_snr
            )));
        }
        while hi - lo > self.settings.bisection_tol * hi {
            let mid = 0.5 * (lo + hi);
            evaluations += 1;
            if self.stats(projector, mid)?.mean_snr < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let volts = 0.5 * (lo + hi);
        let at = self.stats(projector, volts)?;
        evaluations += 1;
        let rel_se = at.se_snr / at.mean_snr.abs().max(f64::MIN_POSITIVE);
        let gain = self.unit_gain(channel);
        Ok(Threshold { volts, volts_se: volts * rel_se, value: volts * gain, value_se: volts * gain * rel_se, evaluations })
    }
}

/// Monte Carlo signal-to-noise ratios at the configured drive and
/// minimum-detectable values for mode `n`.
pub fn monte_carlo_snr(config: &ExperimentConfig, n: usize) -> Result<SimResult> {
    config.validate()?;
    let model = SignalModel::from_config(config, n, config.drive_volts)?;
    let settings = config.monte_carlo();
    let mc = MonteCarlo::new(model, settings)?;
    let s1 = mc.stats(Projector::Pi1, config.drive_volts)?;
    let s2 = mc.stats(Projector::Pi2, config.drive_volts)?;
    let threshold1 = mc.threshold(Channel::G1)?;
    let threshold2 = mc.threshold(Channel::G2)?;
    let geom = model.geom;
    let g1 = threshold1.value;
    let g2 = threshold2.value;
    let min_detectable =
        MinDetectable { g1, g2, d: (g1 * g1 + (geom.z1 / geom.k * g2).powi(2)).sqrt(), phi: g2 / geom.k };
    let analytic_min_detectable = analytic_min_detectable(config, n)?;
    Ok(SimResult {
        n,
        snr1: s1.mean_snr,
        snr1_se: s1.se_snr,
        snr2: s2.mean_snr,
        snr2_se: s2.se_snr,
        analytic_snr1: model.analytic_snr(Channel::G1),
        analytic_snr2: model.analytic_snr(Channel::G2),
        min_detectable,
        threshold1,
        threshold2,
        analytic_min_detectable,
        spectrum_peaks: (s1.mean_signal.abs(), s2.mean_signal.abs()),
        trials_used: settings.trials,
        seed: settings.seed,
    })
}

/// Minimum-detectable values for the configured weak-value model.
pub fn analytic_min_detectable(config: &ExperimentConfig, n: usize) -> Result<MinDetectable> {
    let aw = config.weak_value_model.magnitude(config.epsilon());
    min_detectable_displacement_tilt(n, config.nu, 1.0 / aw, config.sigma0, &config.geometry()?)
}

/// Measured reference row: drive voltages at unit SNR and the minimum detected
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub n: usize,
    pub volts1: f64,
    pub volts2: f64,
    pub values: MinDetectable,
}

const fn reference_row(n: usize, mv1: f64, mv2: f64, g1_nm: f64, g2: f64, d_nm: f64, phi_nrad: f64) -> ReferenceRow {
    ReferenceRow {
        n,
        volts1: mv1 * 1e-3,
        volts2: mv2 * 1e-3,
        values: MinDetectable { g1: g1_nm * 1e-9, g2, d: d_nm * 1e-9, phi: phi_nrad * 1e-9 },
    }
}

/// Laboratory results for HG1 to HG5.
pub const REFERENCE_TABLE: [ReferenceRow; 5] = [
    reference_row(1, 73.10, 107.03, 1.90, 6.62e-2, 2.94, 8.22),
    reference_row(2, 54.53, 79.67, 1.42, 4.93e-2, 2.19, 6.12),
    reference_row(3, 45.59, 66.56, 1.19, 4.12e-2, 1.83, 5.11),
    reference_row(4, 40.01, 58.39, 1.04, 3.62e-2, 1.60, 4.48),
    reference_row(5, 36.12, 53.14, 0.94, 3.29e-2, 1.45, 4.08),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub n: usize,
    pub analytic: MinDetectable,
    pub reference: ReferenceRow,
    /// Reference voltages times the unit gains of the configured drive.
    pub voltage_g1: f64,
    pub voltage_g2: f64,
    /// Displacement and tilt implied by the reference `g1`, `g2` columns.
    pub implied_d: f64,
    pub implied_phi: f64,
    pub unit_g1: f64,
    pub unit_g2: f64,
    pub monte_carlo: Option<SimResult>,
}

impl Table1Row {
    /// Largest relative deviation of the analytic values from the reference columns.
    pub fn analytic_deviation(&self) -> f64 {
        relative_deviations(&self.analytic, &self.reference.values).into_iter().fold(0.0, f64::max)
    }

    /// Largest relative deviation of the voltage-consistency columns.
    pub fn voltage_deviation(&self) -> f64 {
        let r = &self.reference.values;
        [
            (self.voltage_g1 - r.g1).abs() / r.g1,
            (self.voltage_g2 - r.g2).abs() / r.g2,
            (self.implied_d - r.d).abs() / r.d,
            (self.implied_phi - r.phi).abs() / r.phi,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn relative_deviations(a: &MinDetectable, b: &MinDetectable) -> [f64; 4] {
    [(a.g1 - b.g1).abs() / b.g1, (a.g2 - b.g2).abs() / b.g2, (a.d - b.d).abs() / b.d, (a.phi - b.phi).abs() / b.phi]
}

/// Analytic minimum-detectable values, voltage consistency and, when
/// `with_monte_carlo` is set, Monte Carlo estimates for HG1 to HG5.
pub fn table1_reproduction(config: &ExperimentConfig, with_monte_carlo: bool) -> Result<Vec<Table1Row>> {
    config.validate()?;
    let geom = config.geometry()?;
    let (unit_g1, unit_g2) = unit_gains(&config.drive(1, 1.0), &geom);
    REFERENCE_TABLE
        .iter()
        .map(|reference| {
            let n = reference.n;
            let r = &reference.values;
            Ok(Table1Row {
                n,
                analytic: analytic_min_detectable(config, n)?,
                reference: *reference,
                voltage_g1: reference.volts1 * unit_g1,
                voltage_g2: reference.volts2 * unit_g2,
                implied_d: (r.g1 * r.g1 + (geom.z1 / geom.k * r.g2).powi(2)).sqrt(),
                implied_phi: r.g2 / geom.k,
                unit_g1,
                unit_g2,
                monte_carlo: if with_monte_carlo { Some(monte_carlo_snr(config, n)?) } else { None },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model(n: usize, volts: f64) -> SignalModel {
        SignalModel::from_config(&ExperimentConfig::default(), n, volts).unwrap()
    }

    fn settings(trials: usize) -> MonteCarloSettings {
        MonteCarloSettings { trials, ..MonteCarloSettings::default() }
    }

    #[test]
    fn drive_examples() {
        let base = ExperimentConfig::default().drive(1, 1.0);
        let zero = DriveSignal { theta: 0.0, ..base };
        let (d, phi) = drive_to_signal(&zero);
        assert_relative_eq!(d, 15.56e-9, max_relative = 1e-12);
        assert_eq!(phi, 0.0);
        let (d, phi) = drive_to_signal(&base);
        assert!((d - 15.55e-9).abs() < 0.01e-9);
        assert!((phi - 76.78e-9).abs() < 0.01e-9);
        let anti = DriveSignal { theta: PI, ..base };
        let (d, phi) = drive_to_signal(&anti);
        assert!(d.abs() < 1e-20);
        assert_relative_eq!(phi, 2.2e-6, max_relative = 1e-12);
        let geom = ExperimentConfig::default().geometry().unwrap();
        let (u1, u2) = unit_gains(&base, &geom);
        assert!((u1 - 26.03e-9).abs() < 0.02e-9);
        assert!((u2 - 0.62).abs() < 0.002);
    }

    #[test]
    fn detector_constants() {
        let d = ExperimentConfig::default().detector().unwrap();
        assert!(d.power_defect() < 1e-6);
        assert!((d.i0 - 49.06e-12).abs() < 0.05e-12);
        assert!(d.rbw_mismatch() < 1e-3);
        assert!((d.photon_rate() - 1.92e8).abs() < 0.01e8);
        assert!(d.check_saturation(d.i0));
        assert!(!d.check_saturation(2e-9));
        assert!(DetectorModel::new(0.0, 1.0, 1e-6, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_weak_value_model_matches_two_level_weak_value() {
        use crate::weak::{weak_value, SystemOperator, TwoLevelState};
        let eps = 5f64.to_radians();
        let aw = weak_value(&TwoLevelState::diagonal(), &TwoLevelState::postselection(eps), &SystemOperator::horizontal_projector())
            .unwrap();
        assert_relative_eq!(WeakValueModel::Exact.magnitude(eps), aw.value.norm(), max_relative = 1e-12);
        assert_eq!("exact".parse::<WeakValueModel>().unwrap(), WeakValueModel::Exact);
        assert!("x".parse::<WeakValueModel>().is_err());
    }

    #[test]
    fn zero_modulation_is_constant() {
        let m = model(3, 0.0);
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 1e-5).collect();
        let series = projected_power_timeseries(&m, Projector::Pi1, &t).unwrap();
        assert!(series.iter().all(|&p| (p - series[0]).abs() <= 1e-15 * series[0]));
        assert!(series[0] > 0.0);
    }

    #[test]
    fn f_line_matches_closed_form() {
        let config = ExperimentConfig::default();
        for n in 1..=5 {
            let m = model(n, 0.05);
            let geom = m.geom;
            let (g1_bias, _) = experiment_params(m.drive.d_bias, m.drive.phi_bias, &geom);
            let (g1_unit, _) = unit_gains(&m.drive, &geom);
            let g1 = 0.05 * g1_unit;
            let nf = n as f64;
            let eps = config.epsilon();
            let expected = 2.0 * nf * (nf + 1.0) / ((2.0 * nf + 1.0) * config.sigma0.powi(2) * eps * eps)
                * g1_bias
                * g1
                * m.detector.i0;
            assert_relative_eq!(m.f_line_amplitude(Projector::Pi1), expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn demodulated_series_matches_f_line() {
        let m = model(2, 0.05);
        let fs = 200e3;
        let periods = 200;
        let t: Vec<f64> = (0..(periods * 100)).map(|k| k as f64 / fs).collect();
        for projector in [Projector::Pi1, Projector::Pi2] {
            let series = projected_power_timeseries(&m, projector, &t).unwrap();
            let peak = demodulate_peak(&series, fs, m.drive.freq).unwrap();
            assert_relative_eq!(peak, m.f_line_amplitude(projector), max_relative = 1e-3);
        }
    }

    #[test]
    fn f_line_linear_in_bias() {
        let mut config = ExperimentConfig::default();
        let a = SignalModel::from_config(&config, 2, 0.01).unwrap().f_line_amplitude(Projector::Pi1);
        config.bias_g1_tilde *= 2.0;
        let b = SignalModel::from_config(&config, 2, 0.01).unwrap().f_line_amplitude(Projector::Pi1);
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn demodulation_calibration() {
        let fs = 100e3;
        let f = 2e3;
        let cosine: Vec<f64> = (0..5000).map(|k| 1e-12 * (2.0 * PI * f * k as f64 / fs).cos()).collect();
        assert_relative_eq!(demodulate_peak(&cosine, fs, f).unwrap(), 1e-12, max_relative = 1e-12);
        let dc = vec![3e-12; 5000];
        assert!(demodulate_peak(&dc, fs, f).unwrap() < 1e-25);
        assert!(matches!(demodulate_peak(&cosine, fs, 60e3), Err(QmetError::Sampling(_))));
        assert!(matches!(demodulate_peak(&cosine[..100], fs, f), Err(QmetError::Sampling(_))));
    }

    #[test]
    fn weakness_and_bias_preconditions() {
        let mut config = ExperimentConfig::default();
        config.bias_g1_tilde = 0.2;
        let m = SignalModel::from_config(&config, 1, 0.0).unwrap();
        assert!(matches!(projected_power_timeseries(&m, Projector::Pi1, &[0.0]), Err(QmetError::Precondition(_))));
        let m = model(5, 1.0);
        assert!(matches!(projected_power_timeseries(&m, Projector::Pi1, &[0.0]), Err(QmetError::Precondition(_))));
    }

    #[test]
    fn analytic_snr_inverts_to_min_detectable() {
        let c = ExperimentConfig::default();
        let geom = c.geometry().unwrap();
        for n in 1..=5 {
            let md = min_detectable_displacement_tilt(n, c.nu, c.epsilon(), c.sigma0, &geom).unwrap();
            let s1 = analytic_snr(n, c.nu, c.epsilon(), c.sigma0, Channel::G1, md.g1).unwrap();
            let s2 = analytic_snr(n, c.nu, c.epsilon(), c.sigma0, Channel::G2, md.g2).unwrap();
            assert_relative_eq!(s1, 1.0, max_relative = 1e-12);
            assert_relative_eq!(s2, 1.0, max_relative = 1e-12);
        }
        let md = min_detectable_displacement_tilt(5, c.nu, c.epsilon(), c.sigma0, &geom).unwrap();
        assert!((md.g2 - 0.0340).abs() < 5e-5);
        let base = analytic_snr(3, c.nu, 0.1, 1e-4, Channel::G1, 1e-9).unwrap();
        let scaled = analytic_snr(3, 4.0 * c.nu, 0.1, 1e-4, Channel::G1, 1e-9).unwrap();
        assert_relative_eq!(scaled, 2.0 * base, max_relative = 1e-12);
        assert!(analytic_snr(0, 1.0, 0.1, 1.0, Channel::G1, 1.0).is_err());
    }

    #[test]
    fn model_snr_matches_power_ratio_and_is_bias_independent() {
        let mut config = ExperimentConfig::default();
        let m = SignalModel::from_config(&config, 4, 0.03).unwrap();
        for (ch, p) in [(Channel::G1, Projector::Pi1), (Channel::G2, Projector::Pi2)] {
            assert_relative_eq!(m.analytic_snr(ch), m.f_line_amplitude(p) / m.shot_noise(p), max_relative = 1e-12);
        }
        config.bias_g1_tilde = 0.02;
        let m2 = SignalModel::from_config(&config, 4, 0.03).unwrap();
        let ratio = m2.f_line_amplitude(Projector::Pi1) / m2.shot_noise(Projector::Pi1);
        assert_relative_eq!(ratio, m.analytic_snr(Channel::G1), max_relative = 1e-12);
    }

    #[test]
    fn bin_integration_matches_quadrature() {
        let m = model(2, 0.05).modulations().0;
        let (p0, p1) = (0.3, 0.45);
        let nodes = 2000;
        let numeric = (0..nodes)
            .map(|i| m.at(p0 + (p1 - p0) * (i as f64 + 0.5) / nodes as f64).powi(2))
            .sum::<f64>()
            / nodes as f64;
        assert_relative_eq!(m.mean_square(p0, p1), numeric, max_relative = 1e-8);
    }

    #[test]
    fn trials_are_deterministic_and_need_minimum() {
        let m = model(2, 0.05);
        assert!(matches!(MonteCarlo::new(m, settings(50)), Err(QmetError::Sampling(_))));
        let mc = MonteCarlo::new(m, settings(100)).unwrap();
        let a = mc.stats(Projector::Pi1, 0.05).unwrap();
        let b = mc.stats(Projector::Pi1, 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(mc.bins(), 5453);
    }

    #[test]
    fn zero_drive_snr_consistent_with_zero() {
        let mc = MonteCarlo::new(model(3, 0.0), settings(400)).unwrap();
        for p in [Projector::Pi1, Projector::Pi2] {
            let s = mc.stats(p, 0.0).unwrap();
            assert!(s.mean_snr.abs() < 3.0 * s.se_snr, "{s:?}");
        }
    }

    #[test]
    fn monte_carlo_snr_agrees_with_analytic() {
        for n in 1..=5 {
            let m = model(n, 0.0);
            let mc = MonteCarlo::new(m, settings(400)).unwrap();
            for ch in [Channel::G1, Channel::G2] {
                let volts = 2.0 * mc.analytic_threshold_volts(ch);
                let analytic = m.with_volts(volts).analytic_snr(ch);
                let s = mc.stats(ch.projector(), volts).unwrap();
                assert!((s.mean_snr - analytic).abs() < 3.0 * s.se_snr + 0.01 * analytic, "n={n} {ch:?} {s:?} {analytic}");
            }
        }
    }

    #[test]
    fn noise_floor_follows_shot_noise() {
        for scale in [1.0, 10.0, 100.0] {
            let m = model(2, 0.02).with_nu(1.05e7 * scale).unwrap();
            let mc = MonteCarlo::new(m, settings(100)).unwrap();
            let s = mc.stats(Projector::Pi1, 0.02).unwrap();
            assert!((s.mean_noise / s.expected_noise - 1.0).abs() < 0.05, "scale {scale}: {s:?}");
        }
    }

    #[test]
    fn monte_carlo_threshold_matches_analytic_and_sqrt_nu_law() {
        let m = model(5, 0.0);
        let mc = MonteCarlo::new(m, settings(400)).unwrap();
        let t = mc.threshold(Channel::G1).unwrap();
        assert!((t.value - 0.978e-9).abs() < 3.0 * t.value_se, "{t:?}");
        let quad = MonteCarlo::new(m.with_nu(4.0 * m.detector.nu).unwrap(), settings(400)).unwrap();
        let q = quad.threshold(Channel::G1).unwrap();
        let combined = (q.value_se.powi(2) + (t.value_se / 2.0).powi(2)).sqrt();
        assert!((q.value - t.value / 2.0).abs() < 3.0 * combined, "{q:?} vs {t:?}");
    }

    #[test]
    fn reference_table_voltage_consistency() {
        let rows = table1_reproduction(&ExperimentConfig::default(), false).unwrap();
        for row in &rows {
            assert!(row.voltage_deviation() < 0.01, "{row:?}");
            assert!(row.analytic_deviation() < 0.08, "{row:?}");
        }
        let r5 = &rows[4];
        assert!((r5.analytic.d - 1.51e-9).abs() < 0.01e-9);
        assert!((r5.analytic.g1 - 0.978e-9).abs() < 0.001e-9);
        assert!((r5.analytic.phi - 4.21e-9).abs() < 0.01e-9);
    }
}
