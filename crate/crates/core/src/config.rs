//! Flat `key = value` run configuration with laboratory defaults.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Unknown keys and unparsable values are errors.

use std::collections::BTreeMap;
use std::fmt;

use crate::beam::ExperimentGeometry;
use crate::error::{QmetError, Result};
use crate::shot_noise::{DetectorModel, DriveSignal, MonteCarloSettings, WeakValueModel, MIN_TRIALS};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Inverse meters.
    pub wave_number: f64,
    /// Waist standard deviation, meters.
    pub sigma0: f64,
    /// Waist to signal mirror, meters.
    pub z1: f64,
    /// Signal mirror to measurement plane, meters.
    pub z2: f64,
    /// Post-selection angle, degrees.
    pub epsilon_deg: f64,
    pub weak_value_model: WeakValueModel,
    /// Effective detected sample number.
    pub nu: f64,
    /// Detection time, seconds.
    pub tau: f64,
    /// Spectrum-analyzer resolution bandwidth, Hz.
    pub rbw: f64,
    /// Detector saturation power, watts.
    pub saturation: f64,
    /// Drive frequency, Hz.
    pub drive_freq: f64,
    /// Relative phase of the two actuators, degrees.
    pub theta_deg: f64,
    /// Drive amplitude used for single-point simulations, volts.
    pub drive_volts: f64,
    /// Beam displacement per volt with in-phase actuators, meters.
    pub d_per_volt: f64,
    /// Beam tilt per volt with antiphase actuators, radians.
    pub phi_per_volt: f64,
    /// Static bias of `g1` in normalized units.
    pub bias_g1_tilde: f64,
    /// Static bias of `g2` in normalized units.
    pub bias_g2_tilde: f64,
    /// Hermite-Gaussian orders to analyze.
    pub modes: Vec<usize>,
    /// Levels kept above the highest mode.
    pub dim_buffer: usize,
    /// Points per bound curve.
    pub num_points: usize,
    /// Normalized offset for Fisher-information evaluation.
    pub cfim_offset: f64,
    /// Normalized central-difference step.
    pub fd_step: f64,
    /// Imaging grid refinement relative to a `sigma0/50` step.
    pub grid_refine: usize,
    pub trials: usize,
    pub seed: u64,
    /// Photon-count bins per drive period.
    pub bins_per_period: usize,
    /// Number of spectral bins on each side of the line used for the noise floor.
    pub noise_bins: usize,
    /// Relative bracket width at which amplitude bisection stops.
    pub bisection_tol: f64,
    /// Upper bisection bracket in units of the analytic threshold.
    pub bracket_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            wave_number: 8.06e6,
            sigma0: 120e-6,
            z1: -0.272,
            z2: 0.64,
            epsilon_deg: 5.0,
            weak_value_model: WeakValueModel::SmallAngle,
            nu: 1.05e7,
            tau: 54.53e-3,
            rbw: 18.34,
            saturation: 1.54e-9,
            drive_freq: 2e3,
            theta_deg: 4.0,
            drive_volts: 0.1,
            d_per_volt: 15.56e-9,
            phi_per_volt: 2.2e-6,
            bias_g1_tilde: 1e-2,
            bias_g2_tilde: 1e-2,
            modes: vec![1, 2, 3, 4, 5],
            dim_buffer: 6,
            num_points: 200,
            cfim_offset: 1e-2,
            fd_step: 1e-4,
            grid_refine: 4,
            trials: 400,
            seed: 1,
            bins_per_period: 50,
            noise_bins: 32,
            bisection_tol: 1e-3,
            bracket_factor: 2.5,
        }
    }
}

/// Every recognized key, in canonical order.
pub const KEYS: &[&str] = &[
    "wave_number",
    "sigma0",
    "z1",
    "z2",
    "epsilon_deg",
    "weak_value_model",
    "nu",
    "tau",
    "rbw",
    "saturation",
    "drive_freq",
    "theta_deg",
    "drive_volts",
    "d_per_volt",
    "phi_per_volt",
    "bias_g1_tilde",
    "bias_g2_tilde",
    "modes",
    "dim_buffer",
    "num_points",
    "cfim_offset",
    "fd_step",
    "grid_refine",
    "trials",
    "seed",
    "bins_per_period",
    "noise_bins",
    "bisection_tol",
    "bracket_factor",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| QmetError::Config(format!("invalid value for {key}: {value:?}")))
}

/// Parses a comma-separated list of non-negative integers.
pub fn parse_modes(value: &str) -> Result<Vec<usize>> {
    let modes: Vec<usize> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("modes", s))
        .collect::<Result<_>>()?;
    if modes.is_empty() {
        return Err(QmetError::Config("modes list is empty".into()));
    }
    Ok(modes)
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "wave_number" => self.wave_number = parse_num(key, value)?,
            "sigma0" => self.sigma0 = parse_num(key, value)?,
            "z1" => self.z1 = parse_num(key, value)?,
            "z2" => self.z2 = parse_num(key, value)?,
            "epsilon_deg" => self.epsilon_deg = parse_num(key, value)?,
            "weak_value_model" => self.weak_value_model = value.trim().parse()?,
            "nu" => self.nu = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "rbw" => self.rbw = parse_num(key, value)?,
            "saturation" => self.saturation = parse_num(key, value)?,
            "drive_freq" => self.drive_freq = parse_num(key, value)?,
            "theta_deg" => self.theta_deg = parse_num(key, value)?,
            "drive_volts" => self.drive_volts = parse_num(key, value)?,
            "d_per_volt" => self.d_per_volt = parse_num(key, value)?,
            "phi_per_volt" => self.phi_per_volt = parse_num(key, value)?,
            "bias_g1_tilde" => self.bias_g1_tilde = parse_num(key, value)?,
            "bias_g2_tilde" => self.bias_g2_tilde = parse_num(key, value)?,
            "modes" => self.modes = parse_modes(value)?,
            "dim_buffer" => self.dim_buffer = parse_num(key, value)?,
            "num_points" => self.num_points = parse_num(key, value)?,
            "cfim_offset" => self.cfim_offset = parse_num(key, value)?,
            "fd_step" => self.fd_step = parse_num(key, value)?,
            "grid_refine" => self.grid_refine = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "bins_per_period" => self.bins_per_period = parse_num(key, value)?,
            "noise_bins" => self.noise_bins = parse_num(key, value)?,
            "bisection_tol" => self.bisection_tol = parse_num(key, value)?,
            "bracket_factor" => self.bracket_factor = parse_num(key, value)?,
            other => return Err(QmetError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| QmetError::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(key, value)
    }

    /// Applies every assignment in a configuration text over `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_override(line)
                .map_err(|e| QmetError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wave_number", self.wave_number),
            ("sigma0", self.sigma0),
            ("nu", self.nu),
            ("tau", self.tau),
            ("rbw", self.rbw),
            ("saturation", self.saturation),
            ("drive_freq", self.drive_freq),
            ("d_per_volt", self.d_per_volt),
            ("phi_per_volt", self.phi_per_volt),
            ("bias_g1_tilde", self.bias_g1_tilde),
            ("bias_g2_tilde", self.bias_g2_tilde),
            ("cfim_offset", self.cfim_offset),
            ("fd_step", self.fd_step),
            ("bisection_tol", self.bisection_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QmetError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.epsilon_deg > 0.0 && self.epsilon_deg < 90.0) {
            return Err(QmetError::Config(format!("epsilon_deg must lie in (0, 90), got {}", self.epsilon_deg)));
        }
        if !(self.z1.is_finite() && self.z2.is_finite() && self.theta_deg.is_finite() && self.drive_volts >= 0.0) {
            return Err(QmetError::Config("distances, theta and drive must be finite; drive >= 0".into()));
        }
        if self.modes.is_empty() {
            return Err(QmetError::Config("modes list is empty".into()));
        }
        if self.dim_buffer < 4 {
            return Err(QmetError::Config("dim_buffer must be at least 4".into()));
        }
        if self.num_points < 2 || self.grid_refine == 0 || self.bins_per_period < 4 || self.noise_bins < 4 {
            return Err(QmetError::Config(
                "num_points >= 2, grid_refine >= 1, bins_per_period >= 4 and noise_bins >= 4 required".into(),
            ));
        }
        if self.trials < MIN_TRIALS {
            return Err(QmetError::Config(format!("trials must be at least {MIN_TRIALS}, got {}", self.trials)));
        }
        if !(self.bracket_factor > 1.0) {
            return Err(QmetError::Config("bracket_factor must exceed 1".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_deg.to_radians()
    }

    pub fn theta(&self) -> f64 {
        self.theta_deg.to_radians()
    }

    pub fn geometry(&self) -> Result<ExperimentGeometry> {
        ExperimentGeometry::from_wave_number(self.wave_number, self.sigma0, self.z1, self.z2)
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        DetectorModel::new(self.nu, self.tau, 2.0 * std::f64::consts::PI / self.wave_number, self.rbw, self.saturation)
    }

    /// Drive at `volts` with biases converted from normalized units for mode `n`.
    pub fn drive(&self, n: usize, volts: f64) -> DriveSignal {
        let aw = self.weak_value_model.magnitude(self.epsilon());
        let root = ((2 * n + 1) as f64).sqrt();
        let g1_bias = self.bias_g1_tilde * self.sigma0 / (aw * root);
        let g2_bias = self.bias_g2_tilde / (2.0 * aw * self.sigma0 * root);
        // static biases expressed as mirror displacement and tilt
        let phi_bias = g2_bias / self.wave_number;
        let d_bias = g1_bias - self.z1 * phi_bias;
        DriveSignal {
            amplitude_volts: volts,
            freq: self.drive_freq,
            theta: self.theta(),
            d_bias,
            phi_bias,
            d_per_volt: self.d_per_volt,
            phi_per_volt: self.phi_per_volt,
        }
    }

    pub fn monte_carlo(&self) -> MonteCarloSettings {
        MonteCarloSettings {
            trials: self.trials,
            seed: self.seed,
            bins_per_period: self.bins_per_period,
            noise_bins: self.noise_bins,
            bisection_tol: self.bisection_tol,
            bracket_factor: self.bracket_factor,
        }
    }

    /// Canonical `key = value` rendering, parseable by [`ExperimentConfig::from_text`].
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let modes = self.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",");
        let values = [
            self.wave_number.to_string(),
            self.sigma0.to_string(),
            self.z1.to_string(),
            self.z2.to_string(),
            self.epsilon_deg.to_string(),
            self.weak_value_model.to_string(),
            self.nu.to_string(),
            self.tau.to_string(),
            self.rbw.to_string(),
            self.saturation.to_string(),
            self.drive_freq.to_string(),
            self.theta_deg.to_string(),
            self.drive_volts.to_string(),
            self.d_per_volt.to_string(),
            self.phi_per_volt.to_string(),
            self.bias_g1_tilde.to_string(),
            self.bias_g2_tilde.to_string(),
            modes,
            self.dim_buffer.to_string(),
            self.num_points.to_string(),
            self.cfim_offset.to_string(),
            self.fd_step.to_string(),
            self.grid_refine.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
            self.bins_per_period.to_string(),
            self.noise_bins.to_string(),
            self.bisection_tol.to_string(),
            self.bracket_factor.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
