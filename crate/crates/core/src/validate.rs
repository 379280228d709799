//! Invariant suite: the ten acceptance criteria plus supporting checks, each
//! reported as named pass/fail measurements against a tolerance.

use std::fmt;

use num_complex::Complex64;

use crate::beam::{experiment_unitary_equivalence, gouy_phase_defect, min_detectable_displacement_tilt, propagation_unitary};
use crate::config::ExperimentConfig;
use crate::error::{QmetError, Result};
use crate::estimation::{
    holevo_tradeoff_tangency, qfim_finite_difference, quantum_geometry, symmetric_eigenvalues, tradeoff_endpoints,
    GeneratorPair, TradeoffBound,
};
use crate::fisher::{
    cfim_direct_imaging, cfim_direct_imaging_numeric, cfim_nonorthogonal, cfim_numeric, nonorthogonal_povms,
    nonorthogonal_precision, Cfim, CfimMethod, ImagingGrid,
};
use crate::fock::{fock_state, hermite_wavefunctions, quadrature_operators, FockSpace, OperatorMatrix, PointerState};
use crate::shot_noise::{table1_reproduction, Channel, MonteCarlo, SignalModel};
use crate::weak::{
    final_pointer_exact, final_pointer_first_order, first_order_error_ratio, normalization_scales, NormalizedParams,
    WeakScheme,
};

/// How a measured value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `value < tolerance`.
    Below,
    /// `value <= tolerance`.
    AtMost,
    /// `value >= tolerance`.
    AtLeast,
}

impl Comparison {
    fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Self::Below => value < tolerance,
            Self::AtMost => value <= tolerance,
            Self::AtLeast => value >= tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::Below => "<",
            Self::AtMost => "<=",
            Self::AtLeast => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, tolerance: f64) -> Self {
        let passed = value.is_finite() && comparison.holds(value, tolerance);
        Self { name: name.into(), value, tolerance, comparison, passed }
    }

    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, Comparison::Below, tolerance)
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Comparison::AtLeast, 1.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "  [{}] {}: {:.6e} {} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.comparison.symbol(),
            self.tolerance
        )
    }
}

/// A named group of checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: String,
    pub title: String,
    pub checks: Vec<Check>,
}

impl Criterion {
    fn new(id: impl Into<String>, title: impl Into<String>, checks: Vec<Check>) -> Self {
        Self { id: id.into(), title: title.into(), checks }
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}: {}", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.title)?;
        for check in &self.checks {
            writeln!(f, "{check}")?;
        }
        Ok(())
    }
}

/// Weak scheme with normalized couplings `g` at the configured post-selection angle.
fn scheme_at(config: &ExperimentConfig, n: usize, g: (f64, f64)) -> Result<WeakScheme> {
    WeakScheme::from_normalized(n, config.sigma0, config.epsilon(), NormalizedParams { g1_tilde: g.0, g2_tilde: g.1 })
}

fn exact_family(config: &ExperimentConfig, n: usize) -> impl Fn(f64, f64) -> Result<PointerState> + '_ {
    move |a, b| Ok(final_pointer_exact(&scheme_at(config, n, (a, b))?)?.pointer)
}

fn first_order_family(config: &ExperimentConfig, n: usize) -> impl Fn(f64, f64) -> Result<PointerState> + '_ {
    move |a, b| final_pointer_first_order(&scheme_at(config, n, (a, b))?)?.normalize()
}

/// Non-orthogonal readout of the exact pointer: numeric and analytic CFIMs in
/// normalized coordinates.
pub fn nonorthogonal_pair(config: &ExperimentConfig, n: usize, g_tilde: f64) -> Result<(Cfim, Cfim)> {
    let scheme = scheme_at(config, n, (g_tilde, g_tilde))?;
    let aw = scheme.weak_value()?.value;
    let povms = nonorthogonal_povms(n, scheme.space)?;
    let numeric = cfim_numeric(&povms, exact_family(config, n), (g_tilde, g_tilde), config.fd_step)?;
    let scales = normalization_scales(n, config.sigma0, aw.norm());
    Ok((numeric, cfim_nonorthogonal(n, config.sigma0, aw)?.in_normalized(scales)))
}

/// Direct imaging of the first-order pointer: numeric and analytic CFIMs in
/// normalized coordinates.
pub fn direct_imaging_pair(config: &ExperimentConfig, n: usize, g_tilde: f64) -> Result<(Cfim, Cfim)> {
    let scheme = scheme_at(config, n, (g_tilde, g_tilde))?;
    let aw = scheme.weak_value()?.value;
    let grid = ImagingGrid::for_mode(n, config.sigma0, config.grid_refine);
    let scales = normalization_scales(n, config.sigma0, aw.norm());
    let numeric = cfim_direct_imaging_numeric(n, config.sigma0, aw, &grid, (g_tilde, g_tilde), config.fd_step)?;
    let analytic = cfim_direct_imaging(n, config.sigma0, aw, &grid)?;
    Ok((numeric.in_normalized(scales), analytic.in_normalized(scales)))
}

/// Numeric CFIM of one readout next to its analytic form and the QFIM of the
/// same state family, all in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CfimReport {
    pub n: usize,
    pub method: CfimMethod,
    pub g_tilde: f64,
    pub numeric: Cfim,
    pub analytic: Cfim,
    pub qfim: [[f64; 2]; 2],
}

impl CfimReport {
    pub fn relative_defect(&self) -> f64 {
        self.numeric.relative_defect(&self.analytic)
    }

    /// Smallest eigenvalue of `QFIM - CFIM`.
    pub fn ordering_gap(&self) -> f64 {
        ordering_gap(self.qfim, &self.numeric)
    }
}

/// Builds a [`CfimReport`] for the non-orthogonal readout of the exact pointer
/// or for direct imaging of the first-order pointer.
pub fn cfim_report(config: &ExperimentConfig, n: usize, method: CfimMethod, g_tilde: f64) -> Result<CfimReport> {
    let g = (g_tilde, g_tilde);
    let (numeric, analytic, qfim) = match method {
        CfimMethod::NonOrthogonal => {
            let (numeric, analytic) = nonorthogonal_pair(config, n, g_tilde)?;
            (numeric, analytic, qfim_finite_difference(exact_family(config, n), g, config.fd_step)?)
        }
        CfimMethod::DirectImaging => {
            let (numeric, analytic) = direct_imaging_pair(config, n, g_tilde)?;
            (numeric, analytic, qfim_finite_difference(first_order_family(config, n), g, config.fd_step)?)
        }
        CfimMethod::NumericOracle => {
            return Err(QmetError::Config("choose nonorthogonal or direct_imaging".into()));
        }
    };
    Ok(CfimReport { n, method, g_tilde, numeric, analytic, qfim })
}

/// Smallest eigenvalue of `QFIM - CFIM`.
pub fn ordering_gap(qfim: [[f64; 2]; 2], cfim: &Cfim) -> f64 {
    let mut diff = qfim;
    for (r, row) in diff.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v -= cfim.matrix[r][c];
        }
    }
    diff[0][1] = 0.5 * (diff[0][1] + diff[1][0]);
    diff[1][0] = diff[0][1];
    symmetric_eigenvalues(diff)[0]
}

pub fn criterion_1(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 0..=10 {
        let space = FockSpace::new(n + 8, config.sigma0)?;
        let (p, x) = quadrature_operators(space);
        let geometry = quantum_geometry(&GeneratorPair::new(p, x, fock_state(space, n)?)?)?;
        let expected = ((2 * n + 1) as f64).powi(2);
        checks.push(Check::below(format!("n={n} relative error of S12"), (geometry.qmec - expected).abs() / expected, 1e-9));
    }
    Ok(Criterion::new("C1", "incompatibility criterion equals (2n+1)^2", checks))
}

pub fn criterion_2() -> Result<Criterion> {
    let mut checks = Vec::new();
    for (n, expected) in [(1, 1.060_660), (5, 1.004_158)] {
        let (left, right) = tradeoff_endpoints(n)?;
        checks.push(Check::below(format!("n={n} endpoint vs {expected}"), (left.y - expected).abs(), 1e-6));
        let from_curve = TradeoffBound::for_mode(n).left_endpoint().map_or(f64::NAN, |p| p.y);
        checks.push(Check::below(format!("n={n} curve endpoint vs closed form"), (from_curve - left.y).abs(), 1e-9));
        checks.push(Check::below(format!("n={n} endpoint symmetry"), (right.x - left.y).abs(), 1e-15));
    }
    let values: Vec<f64> = (1..=200).map(|n| tradeoff_endpoints(n).map(|e| e.0.y)).collect::<Result<_>>()?;
    let monotone = values.windows(2).all(|w| w[1] < w[0] && w[1] > 1.0);
    checks.push(Check::flag("endpoints decrease strictly towards 1 for n=1..200", monotone));
    checks.push(Check::below("n=200 endpoint distance from 1", values[199] - 1.0, 1e-5));
    Ok(Criterion::new("C2", "trade-off endpoints", checks))
}

pub fn criterion_3() -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 1..=5 {
        let s = ((2 * n + 1) as f64).powi(2);
        let t = holevo_tradeoff_tangency(s)?;
        checks.push(Check::below(format!("n={n} Holevo to trade-off distance"), t.distance, 1e-6));
        checks.push(Check::below(format!("n={n} tangency off the diagonal |x-y|"), (t.at.x - t.at.y).abs(), 1e-4));
    }
    Ok(Criterion::new("C3", "Holevo line tangent to the trade-off curve at x=y", checks))
}

pub fn criterion_4(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 1..=5 {
        for (g, tol) in [(1e-2, 1e-2), (5e-3, 2.5e-3)] {
            let (numeric, analytic) = nonorthogonal_pair(config, n, g)?;
            checks.push(Check::below(
                format!("n={n} non-orthogonal numeric vs analytic at g~={g:e}"),
                numeric.relative_defect(&analytic),
                tol,
            ));
        }
        let (numeric, analytic) = direct_imaging_pair(config, n, 1e-2)?;
        checks.push(Check::below(
            format!("n={n} direct imaging numeric vs analytic at g~=1e-2"),
            numeric.relative_defect(&analytic),
            1e-2,
        ));
    }
    Ok(Criterion::new("C4", "classical Fisher oracle", checks))
}

pub fn criterion_5(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 1..=5 {
        for method in [CfimMethod::NonOrthogonal, CfimMethod::DirectImaging] {
            let report = cfim_report(config, n, method, config.cfim_offset)?;
            checks.push(Check::new(
                format!("n={n} min eig(QFIM - CFIM) {}", method.as_str()),
                report.ordering_gap(),
                Comparison::AtLeast,
                -1e-8,
            ));
        }
    }
    Ok(Criterion::new("C5", "quantum-classical ordering", checks))
}

pub fn criterion_6(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 1..=5 {
        let ratios: Vec<f64> = [1e-3, 2e-3, 4e-3]
            .iter()
            .map(|&g| first_order_error_ratio(&scheme_at(config, n, (g, g))?))
            .collect::<Result<_>>()?;
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::new(format!("n={n} spread max/min of error ratio"), max / min, Comparison::AtMost, 2.0));
        checks.push(Check::below(format!("n={n} error ratio C"), max, 1.0));
    }
    Ok(Criterion::new("C6", "first-order pointer error is quadratic", checks))
}

pub fn criterion_7(config: &ExperimentConfig) -> Result<Criterion> {
    let geom = config.geometry()?;
    let n = 5;
    let g = config.cfim_offset;
    let scheme = scheme_at(config, n, (g, g))?.with_space(FockSpace::new(24, config.sigma0)?)?;
    let report = experiment_unitary_equivalence(&scheme, &geom)?;
    Ok(Criterion::new(
        "C7",
        "laboratory operator identity at dim 24",
        vec![
            Check::below("operator equivalence defect", report.defect, 1e-9),
            Check::below("propagated state defect", report.propagated_state_defect, 1e-9),
            Check::below("projection probability defect", report.projection_defect, 1e-9),
        ],
    ))
}

pub fn criterion_8(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for row in table1_reproduction(config, false)? {
        checks.push(Check::below(format!("HG{} analytic vs measured columns", row.n), row.analytic_deviation(), 0.08));
        checks.push(Check::below(format!("HG{} voltage consistency", row.n), row.voltage_deviation(), 0.01));
    }
    Ok(Criterion::new("C8", "table reproduction", checks))
}

pub fn criterion_9(config: &ExperimentConfig) -> Result<Criterion> {
    let n = 5;
    let model = SignalModel::from_config(config, n, 0.0)?;
    let mc = MonteCarlo::new(model, config.monte_carlo())?;
    let threshold = mc.threshold(Channel::G1)?;
    let analytic = crate::shot_noise::analytic_min_detectable(config, n)?.g1;
    Ok(Criterion::new(
        "C9",
        "Monte Carlo minimum-detectable g1 for HG5",
        vec![
            Check::new("trials", config.trials as f64, Comparison::AtLeast, 400.0),
            Check::below(
                format!("|MC - analytic| in standard errors (MC {:.4e} m, analytic {analytic:.4e} m)", threshold.value),
                (threshold.value - analytic).abs() / threshold.value_se,
                3.0,
            ),
        ],
    ))
}

pub fn criterion_10(config: &ExperimentConfig) -> Result<Criterion> {
    let geom = config.geometry()?;
    let space = FockSpace::new(40, config.sigma0)?;
    let (p, x) = quadrature_operators(space);
    let comm = x.commutator(&p)?;
    let target = OperatorMatrix::identity(space).scale(Complex64::new(0.0, 1.0));
    let mut checks = vec![Check::below("[X,P] - i on safe block", comm.max_abs_diff_on(&target, space.safe_levels())?, 1e-10)];

    let space = FockSpace::new(30, config.sigma0)?;
    let a = propagation_unitary(0.3, &geom, space);
    let b = propagation_unitary(-0.7, &geom, space);
    let ab = propagation_unitary(-0.4, &geom, space);
    checks.push(Check::below("U(z1)U(z2) - U(z1+z2)", a.matmul(&b)?.max_abs_diff_on(&ab, space.safe_levels())?, 1e-10));

    for n in [0, 1, 3] {
        checks.push(Check::below(format!("n={n} Gouy phase of propagated mode"), gouy_phase_defect(n, 0.2 * geom.b, &geom, 60)?, 1e-8));
    }

    let worst = (0..=10).map(|n| (hermite_norm(n, config.sigma0) - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::below("Hermite wavefunction normalization n=0..10", worst, 1e-8));
    Ok(Criterion::new("C10", "operator algebra", checks))
}

/// Trapezoid integral of `psi_n(x)^2`.
pub fn hermite_norm(n: usize, sigma0: f64) -> f64 {
    let extent = 12.0 * ((2 * n + 1) as f64).sqrt() * sigma0;
    let count = 4000;
    let h = 2.0 * extent / count as f64;
    (0..=count)
        .map(|i| {
            let x = -extent + h * i as f64;
            let w = if i == 0 || i == count { 0.5 } else { 1.0 };
            w * hermite_wavefunctions(n, sigma0, x)[n].powi(2)
        })
        .sum::<f64>()
        * h
}

/// Checks that complement the acceptance criteria.
pub fn supporting_checks(config: &ExperimentConfig) -> Result<Criterion> {
    let mut checks = Vec::new();
    for n in 1..=5 {
        let endpoint = tradeoff_endpoints(n)?.0.y;
        checks.push(Check::below(
            format!("n={n} non-orthogonal precision on trade-off endpoint"),
            (nonorthogonal_precision(n)? - endpoint).abs(),
            1e-9,
        ));
        let space = FockSpace::for_mode(n, config.sigma0)?;
        let (p, x) = quadrature_operators(space);
        let geometry = quantum_geometry(&GeneratorPair::new(p, x, fock_state(space, n)?)?)?;
        checks.push(Check::below(
            format!("n={n} normalized curvature 1/(2n+1)"),
            (geometry.normalized_curvature.abs() - 1.0 / (2 * n + 1) as f64).abs(),
            1e-12,
        ));
        let g = config.cfim_offset;
        let (imaging, imaging_analytic) = direct_imaging_pair(config, n, g)?;
        let (imaging_half, _) = direct_imaging_pair(config, n, g / 2.0)?;
        let (nonorth, _) = nonorthogonal_pair(config, n, g)?;
        checks.push(Check::below(
            format!("n={n} direct imaging analytic F22"),
            imaging_analytic.matrix[1][1].abs(),
            1e-12,
        ));
        checks.push(Check::below(format!("n={n} direct imaging numeric F22 / g~^2"), imaging.matrix[1][1].abs() / (g * g), 1.0));
        checks.push(Check::below(
            format!("n={n} direct imaging numeric F22 halving ratio minus 4"),
            (imaging.matrix[1][1] / imaging_half.matrix[1][1] - 4.0).abs(),
            0.5,
        ));
        checks.push(Check::new(
            format!("n={n} projection F22"),
            nonorth.matrix[1][1],
            Comparison::AtLeast,
            0.1,
        ));
    }
    let geom = config.geometry()?;
    let g1s: Vec<(f64, f64)> = (1..=10)
        .map(|n| min_detectable_displacement_tilt(n, config.nu, config.epsilon(), config.sigma0, &geom).map(|m| (m.g1, m.g2)))
        .collect::<Result<_>>()?;
    checks.push(Check::flag(
        "minimum-detectable g1 and g2 decrease strictly for n=1..10",
        g1s.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1),
    ));
    let detector = config.detector()?;
    checks.push(Check::below("I0 = gamma nu / tau", detector.power_defect(), 1e-6));
    Ok(Criterion::new("S", "supporting invariants", checks))
}

/// All ten acceptance criteria.
pub fn acceptance_criteria(config: &ExperimentConfig) -> Result<Vec<Criterion>> {
    Ok(vec![
        criterion_1(config)?,
        criterion_2()?,
        criterion_3()?,
        criterion_4(config)?,
        criterion_5(config)?,
        criterion_6(config)?,
        criterion_7(config)?,
        criterion_8(config)?,
        criterion_9(config)?,
        criterion_10(config)?,
    ])
}

/// Acceptance criteria followed by the supporting checks.
pub fn invariant_suite(config: &ExperimentConfig) -> Result<Vec<Criterion>> {
    let mut all = acceptance_criteria(config)?;
    all.push(supporting_checks(config)?);
    Ok(all)
}
