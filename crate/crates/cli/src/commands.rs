//! Subcommand implementations. Each returns its rendered output together
//! with the invariants that failed while producing it.

use qmet_core::config::ExperimentConfig;
use qmet_core::estimation::{
    ccr_lines, holevo_bound, ql_point, tradeoff_curve, tradeoff_endpoints, BoundCurve, BoundKind, BoundPoint,
    TradeoffBound,
};
use qmet_core::fisher::CfimMethod;
use qmet_core::shot_noise::{monte_carlo_snr, table1_reproduction};
use qmet_core::validate::{cfim_report, invariant_suite};
use qmet_core::QmetError;

use crate::output::{sci, Table};

/// Lower edge of every normalized-error coordinate.
const COORDINATE_FLOOR: f64 = 1.0 - 1e-9;
/// Largest accepted numeric versus analytic CFIM defect.
const CFIM_DEFECT_LIMIT: f64 = 1e-2;
/// Smallest accepted eigenvalue of `QFIM - CFIM`.
const ORDERING_LIMIT: f64 = -1e-8;
/// Largest accepted deviation of analytic minimum-detectable values from the reference table.
const TABLE_ANALYTIC_LIMIT: f64 = 0.08;
/// Largest accepted deviation of the voltage-consistency columns.
const TABLE_VOLTAGE_LIMIT: f64 = 0.01;
/// Monte Carlo agreement bound in standard errors.
const MC_SIGMAS: f64 = 3.0;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(QmetError),
}

impl From<QmetError> for Failure {
    fn from(err: QmetError) -> Self {
        match err {
            QmetError::Config(msg) => Failure::Usage(msg),
            other => Failure::Numeric(other),
        }
    }
}

pub type CommandResult = Result<Report, Failure>;

#[derive(Debug, Default)]
pub struct Report {
    pub body: String,
    pub violations: Vec<String>,
}

impl Report {
    fn from_table(table: &Table, violations: Vec<String>) -> CommandResult {
        let body = table.to_csv().map_err(|e| Failure::Usage(format!("cannot serialize CSV: {e}")))?;
        Ok(Report { body, violations })
    }
}

fn opt_sci(value: Option<f64>) -> String {
    value.map_or_else(String::new, sci)
}

fn push_points(table: &mut Table, kind: &str, n: Option<usize>, s: Option<f64>, points: &[BoundPoint]) {
    for p in points {
        table.push(vec![kind.into(), n.map_or_else(String::new, |n| n.to_string()), opt_sci(s), sci(p.x), sci(p.y)]);
    }
}

fn check_curve(curve: &BoundCurve, label: &str, violations: &mut Vec<String>) {
    if curve.points.is_empty() {
        violations.push(format!("{label}: curve is empty"));
    }
    for p in &curve.points {
        if !(p.x.is_finite() && p.y.is_finite() && p.x >= COORDINATE_FLOOR && p.y >= COORDINATE_FLOOR) {
            violations.push(format!("{label}: point ({}, {}) leaves the physical region", p.x, p.y));
            break;
        }
    }
    if curve.kind == BoundKind::Tradeoff && !curve.points.windows(2).all(|w| w[1].x > w[0].x) {
        violations.push(format!("{label}: points are not ordered by increasing x"));
    }
}

/// Trade-off curves, Holevo lines, endpoints, QCR lines and the QL point.
pub fn bounds(config: &ExperimentConfig, modes: &[usize], s_override: Option<f64>) -> CommandResult {
    if modes.is_empty() && s_override.is_none() {
        return Err(Failure::Usage("the mode list is empty".into()));
    }
    let mut table = Table::new(&["kind", "n", "s", "x", "y"]);
    let mut violations = Vec::new();
    let families: Vec<(Option<usize>, f64)> = match s_override {
        Some(s) => vec![(None, s)],
        None => modes.iter().map(|&n| (Some(n), TradeoffBound::for_mode(n).s())).collect(),
    };
    for (n, s) in families {
        let label = n.map_or_else(|| format!("s={s}"), |n| format!("n={n}"));
        let tradeoff = tradeoff_curve(s, config.num_points)?;
        check_curve(&tradeoff, &label, &mut violations);
        push_points(&mut table, tradeoff.kind.as_str(), n, Some(s), &tradeoff.points);
        let holevo = holevo_bound((1.0 / s).sqrt(), config.num_points)?;
        check_curve(&holevo, &label, &mut violations);
        push_points(&mut table, holevo.kind.as_str(), n, Some(s), &holevo.points);
        let endpoints = match n {
            Some(0) => None,
            Some(n) => Some(tradeoff_endpoints(n)?),
            None => TradeoffBound::new(s)?
                .left_endpoint()
                .filter(|p| p.y.is_finite())
                .map(|p| (p, BoundPoint::new(p.y, p.x))),
        };
        if let Some((left, right)) = endpoints {
            if s.is_finite() {
                let from_curve = TradeoffBound::new(s)?.left_endpoint().map_or(f64::NAN, |p| p.y);
                if !((from_curve - left.y).abs() < 1e-9) {
                    violations.push(format!("{label}: endpoint {} disagrees with the curve {from_curve}", left.y));
                }
            }
            push_points(&mut table, "endpoint", n, Some(s), &[left, right]);
        }
    }
    let lines = ccr_lines(config.num_points);
    push_points(&mut table, lines.kind.as_str(), None, Some(lines.s_value), &lines.points);
    push_points(&mut table, BoundKind::QlPoint.as_str(), None, None, &ql_point().points);
    Report::from_table(&table, violations)
}

pub fn parse_method(name: &str) -> Result<Vec<CfimMethod>, Failure> {
    match name {
        "all" => Ok(vec![CfimMethod::NonOrthogonal, CfimMethod::DirectImaging]),
        "nonorthogonal" => Ok(vec![CfimMethod::NonOrthogonal]),
        "direct_imaging" => Ok(vec![CfimMethod::DirectImaging]),
        other => Err(Failure::Usage(format!(
            "unknown method {other:?}; expected nonorthogonal, direct_imaging or all"
        ))),
    }
}

/// Numeric versus analytic CFIMs in normalized coordinates.
pub fn cfim(config: &ExperimentConfig, modes: &[usize], methods: &[CfimMethod]) -> CommandResult {
    if modes.is_empty() {
        return Err(Failure::Usage("the mode list is empty".into()));
    }
    let mut table = Table::new(&[
        "n",
        "method",
        "g_tilde",
        "f11",
        "f12",
        "f22",
        "analytic_f11",
        "analytic_f12",
        "analytic_f22",
        "relative_defect",
        "qfim_gap",
    ]);
    let mut violations = Vec::new();
    for &n in modes {
        for &method in methods {
            let r = cfim_report(config, n, method, config.cfim_offset)?;
            let (f, a) = (r.numeric.matrix, r.analytic.matrix);
            let (defect, gap) = (r.relative_defect(), r.ordering_gap());
            if !(defect < CFIM_DEFECT_LIMIT) {
                violations.push(format!("n={n} {}: numeric defect {defect:e}", method.as_str()));
            }
            if !(gap >= ORDERING_LIMIT) {
                violations.push(format!("n={n} {}: QFIM - CFIM eigenvalue {gap:e}", method.as_str()));
            }
            table.push(vec![
                n.to_string(),
                method.as_str().into(),
                sci(r.g_tilde),
                sci(f[0][0]),
                sci(f[0][1]),
                sci(f[1][1]),
                sci(a[0][0]),
                sci(a[0][1]),
                sci(a[1][1]),
                sci(defect),
                sci(gap),
            ]);
        }
    }
    Report::from_table(&table, violations)
}

fn mc_agreement(label: &str, value: f64, se: f64, analytic: f64, violations: &mut Vec<String>) {
    if !(value.is_finite() && se > 0.0 && (value - analytic).abs() < MC_SIGMAS * se) {
        violations.push(format!("{label}: Monte Carlo {value:e} +/- {se:e} vs analytic {analytic:e}"));
    }
}

/// Analytic, reference, voltage-consistency and Monte Carlo columns for HG1 to HG5.
pub fn table1(config: &ExperimentConfig, with_monte_carlo: bool) -> CommandResult {
    let mut table = Table::new(&[
        "n",
        "analytic_g1",
        "analytic_g2",
        "analytic_d",
        "analytic_phi",
        "table_g1",
        "table_g2",
        "table_d",
        "table_phi",
        "table_volts1",
        "table_volts2",
        "unit_g1",
        "unit_g2",
        "volts1_x_unit_g1",
        "volts2_x_unit_g2",
        "implied_d",
        "implied_phi",
        "analytic_deviation",
        "voltage_deviation",
        "mc_g1",
        "mc_g1_se",
        "mc_g2",
        "mc_g2_se",
        "mc_d",
        "mc_phi",
    ]);
    let mut violations = Vec::new();
    for row in table1_reproduction(config, with_monte_carlo)? {
        let (a, r) = (row.analytic, row.reference.values);
        if !(row.analytic_deviation() < TABLE_ANALYTIC_LIMIT) {
            violations.push(format!("HG{}: analytic deviation {:e}", row.n, row.analytic_deviation()));
        }
        if !(row.voltage_deviation() < TABLE_VOLTAGE_LIMIT) {
            violations.push(format!("HG{}: voltage deviation {:e}", row.n, row.voltage_deviation()));
        }
        let mut fields = vec![
            row.n.to_string(),
            sci(a.g1),
            sci(a.g2),
            sci(a.d),
            sci(a.phi),
            sci(r.g1),
            sci(r.g2),
            sci(r.d),
            sci(r.phi),
            sci(row.reference.volts1),
            sci(row.reference.volts2),
            sci(row.unit_g1),
            sci(row.unit_g2),
            sci(row.voltage_g1),
            sci(row.voltage_g2),
            sci(row.implied_d),
            sci(row.implied_phi),
            sci(row.analytic_deviation()),
            sci(row.voltage_deviation()),
        ];
        match &row.monte_carlo {
            Some(mc) => {
                let label = format!("HG{}", row.n);
                mc_agreement(&format!("{label} g1"), mc.threshold1.value, mc.threshold1.value_se, a.g1, &mut violations);
                mc_agreement(&format!("{label} g2"), mc.threshold2.value, mc.threshold2.value_se, a.g2, &mut violations);
                let m = mc.min_detectable;
                fields.extend([
                    sci(m.g1),
                    sci(mc.threshold1.value_se),
                    sci(m.g2),
                    sci(mc.threshold2.value_se),
                    sci(m.d),
                    sci(m.phi),
                ]);
            }
            None => fields.extend(std::iter::repeat(String::new()).take(6)),
        }
        table.push(fields);
    }
    Report::from_table(&table, violations)
}

/// Monte Carlo signal-to-noise ratios and minimum-detectable values, one row
/// per mode and sample-number scale.
pub fn montecarlo(config: &ExperimentConfig, modes: &[usize], nu_scales: &[f64]) -> CommandResult {
    if modes.is_empty() || nu_scales.is_empty() {
        return Err(Failure::Usage("mode and nu-scale lists must be non-empty".into()));
    }
    if let Some(bad) = nu_scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Failure::Usage(format!("nu scales must be positive, got {bad}")));
    }
    let mut table = Table::new(&[
        "n",
        "nu",
        "seed",
        "trials",
        "drive_volts",
        "snr1",
        "snr1_se",
        "analytic_snr1",
        "snr2",
        "snr2_se",
        "analytic_snr2",
        "i1_peak",
        "i2_peak",
        "mc_g1",
        "mc_g1_se",
        "analytic_g1",
        "mc_g2",
        "mc_g2_se",
        "analytic_g2",
        "mc_d",
        "analytic_d",
        "mc_phi",
        "analytic_phi",
    ]);
    let mut violations = Vec::new();
    for &n in modes {
        for &scale in nu_scales {
            let mut scaled = config.clone();
            scaled.nu *= scale;
            let r = monte_carlo_snr(&scaled, n)?;
            let (m, a) = (r.min_detectable, r.analytic_min_detectable);
            let label = format!("n={n} nu={}", scaled.nu);
            mc_agreement(&format!("{label} g1"), m.g1, r.threshold1.value_se, a.g1, &mut violations);
            mc_agreement(&format!("{label} g2"), m.g2, r.threshold2.value_se, a.g2, &mut violations);
            if !(r.spectrum_peaks.0 >= 0.0 && r.spectrum_peaks.1 >= 0.0) {
                violations.push(format!("{label}: negative spectrum peak"));
            }
            table.push(vec![
                n.to_string(),
                sci(scaled.nu),
                r.seed.to_string(),
                r.trials_used.to_string(),
                sci(scaled.drive_volts),
                sci(r.snr1),
                sci(r.snr1_se),
                sci(r.analytic_snr1),
                sci(r.snr2),
                sci(r.snr2_se),
                sci(r.analytic_snr2),
                sci(r.spectrum_peaks.0),
                sci(r.spectrum_peaks.1),
                sci(m.g1),
                sci(r.threshold1.value_se),
                sci(a.g1),
                sci(m.g2),
                sci(r.threshold2.value_se),
                sci(a.g2),
                sci(m.d),
                sci(a.d),
                sci(m.phi),
                sci(a.phi),
            ]);
        }
    }
    Report::from_table(&table, violations)
}

/// Full invariant suite as a plain-text report.
pub fn validate(config: &ExperimentConfig) -> CommandResult {
    let suite = invariant_suite(config)?;
    let mut body = String::new();
    let mut violations = Vec::new();
    for criterion in &suite {
        body.push_str(&criterion.to_string());
        for check in criterion.checks.iter().filter(|c| !c.passed) {
            violations.push(format!("{}: {}", criterion.id, check.name));
        }
    }
    let passed = suite.iter().filter(|c| c.passed()).count();
    body.push_str(&format!("{passed}/{} groups passed\n", suite.len()));
    Ok(Report { body, violations })
}
