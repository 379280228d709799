//! Quantum geometry of two-parameter pure-state models and the precision
//! bounds derived from it.
//!
//! Bound curves live in the plane of normalized errors
//! `(sqrt(nu) dg~_i, sqrt(nu) dg~_j)`, where the QCR bound of each parameter
//! sits at 1. Internally the trade-off relation is handled in the inverse
//! squared coordinates `a = 1/(nu dg~_i^2)` and `b = 1/(nu dg~_j^2)`, in which
//! it reads `2 - a - b + 2 sqrt(1 - 1/S) sqrt((1-a)(1-b)) >= 1/S`.

use num_complex::Complex64;

use crate::error::{QmetError, Result};
use crate::fock::{OperatorMatrix, PointerState, NORMALIZATION_TOLERANCE};

/// Upper edge of the plotted window in normalized-error units.
pub const PLOT_WINDOW: f64 = 10.0;

/// Root acceptance tolerance when checking a squared-away square root.
pub const ROOT_TOLERANCE: f64 = 1e-9;

/// Commutator magnitude below which two parameters count as compatible.
pub const COMPATIBLE_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct GeneratorPair {
    first: OperatorMatrix,
    second: OperatorMatrix,
    probe: PointerState,
}

impl GeneratorPair {
    pub fn new(first: OperatorMatrix, second: OperatorMatrix, probe: PointerState) -> Result<Self> {
        if first.space() != second.space() || first.space() != probe.space() {
            return Err(QmetError::Dimension("generators and probe must share a space".into()));
        }
        for (name, op) in [("first", &first), ("second", &second)] {
            if !op.is_hermitian() {
                return Err(QmetError::Precondition(format!(
                    "{name} generator is not Hermitian (defect {:.3e})",
                    op.hermiticity_defect()
                )));
            }
        }
        Ok(Self { first, second, probe })
    }

    pub fn probe(&self) -> &PointerState {
        &self.probe
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumGeometry {
    /// Quantum Fisher information matrix.
    pub qfim: [[f64; 2]; 2],
    /// Quantum geometric tensor; `Re = qfim / 4`, `Im = -berry / 2`.
    pub qgt: [[Complex64; 2]; 2],
    /// Off-diagonal Berry curvature, `-2 Im qgt[0][1]`.
    pub berry: f64,
    /// Incompatibility criterion `4 Var_i Var_j / |<[H_i, H_j]>|^2`; infinite
    /// for compatible parameters.
    pub qmec: f64,
    /// `2 berry / sqrt(Q_ii Q_jj)`, in `[-1, 1]`.
    pub normalized_curvature: f64,
    pub compatible: bool,
}

impl QuantumGeometry {
    /// The criterion recomputed from the metric and curvature, `Q_ii Q_jj / (4 C^2)`.
    pub fn qmec_from_metric(&self) -> f64 {
        if self.berry == 0.0 {
            return f64::INFINITY;
        }
        self.qfim[0][0] * self.qfim[1][1] / (4.0 * self.berry * self.berry)
    }

    /// Multiplies metric and curvature by a common factor; the criterion and
    /// normalized curvature are unchanged.
    pub fn scaled(&self, factor: f64) -> QuantumGeometry {
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.qfim[r][c] *= factor;
                out.qgt[r][c] *= factor;
            }
        }
        out.berry *= factor;
        out
    }

    pub fn qfim_eigenvalues(&self) -> [f64; 2] {
        symmetric_eigenvalues(self.qfim)
    }
}

/// Eigenvalues of a real symmetric 2x2 matrix, ascending.
pub fn symmetric_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let off = 0.5 * (m[0][1] + m[1][0]);
    let radius = half_diff.hypot(off);
    [mean - radius, mean + radius]
}

pub fn quantum_geometry(pair: &GeneratorPair) -> Result<QuantumGeometry> {
    let probe = &pair.probe;
    if (probe.norm_sqr() - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(QmetError::Precondition("probe must be normalized".into()));
    }
    probe.check_support()?;

    let h1 = pair.first.apply(probe)?;
    let h2 = pair.second.apply(probe)?;
    let mean1 = probe.inner(&h1)?.re;
    let mean2 = probe.inner(&h2)?.re;
    let mean = [mean1, mean2];
    let applied = [&h1, &h2];

    let mut qgt = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            qgt[r][c] = applied[r].inner(applied[c])? - mean[r] * mean[c];
        }
    }
    let mut qfim = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            qfim[r][c] = 4.0 * qgt[r][c].re;
        }
    }
    let berry = -2.0 * qgt[0][1].im;
    // <[H_i, H_j]> = 2 i Im T_ij
    let commutator = 2.0 * qgt[0][1].im;
    let var1 = qgt[0][0].re;
    let var2 = qgt[1][1].re;
    let scale = (4.0 * var1 * var2).sqrt().max(1.0);
    let compatible = commutator.abs() < COMPATIBLE_TOLERANCE * scale;

    let (qmec, normalized_curvature) = if compatible {
        (f64::INFINITY, 0.0)
    } else {
        (
            4.0 * var1 * var2 / (commutator * commutator),
            2.0 * berry / (qfim[0][0] * qfim[1][1]).sqrt(),
        )
    };
    Ok(QuantumGeometry { qfim, qgt, berry, qmec, normalized_curvature, compatible })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub x: f64,
    pub y: f64,
}

impl BoundPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &BoundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Tradeoff,
    Holevo,
    QlPoint,
    CcrLines,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::Tradeoff => "tradeoff",
            BoundKind::Holevo => "holevo",
            BoundKind::QlPoint => "ql_point",
            BoundKind::CcrLines => "ccr_lines",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub s_value: f64,
    /// Ordered by increasing `x`.
    pub points: Vec<BoundPoint>,
}

/// The equality locus of the two-parameter trade-off relation for a given
/// incompatibility criterion `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffBound {
    s: f64,
}

impl TradeoffBound {
    pub fn new(s: f64) -> Result<Self> {
        if !(s >= 1.0) {
            return Err(QmetError::Domain(format!("criterion must be >= 1, got {s}")));
        }
        Ok(Self { s })
    }

    /// Bound for a Hermite-Gaussian probe of order `n`, `s = (2n+1)^2`.
    pub fn for_mode(n: usize) -> Self {
        let m = (2 * n + 1) as f64;
        Self { s: m * m }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    fn root_weight(&self) -> f64 {
        (1.0 - 1.0 / self.s).max(0.0).sqrt()
    }

    /// Left side minus right side of the trade-off relation; zero on the bound,
    /// negative in the forbidden region.
    pub fn residual(&self, a: f64, b: f64) -> f64 {
        let r = self.root_weight();
        2.0 - a - b + 2.0 * r * ((1.0 - a) * (1.0 - b)).max(0.0).sqrt() - 1.0 / self.s
    }

    /// Smallest admissible `a`; at this value `b = 1`.
    pub fn a_min(&self) -> f64 {
        1.0 - 1.0 / self.s
    }

    /// Solves the equality for `b` given `a`.
    ///
    /// With `u = 1 - a`, `v = 1 - b`, `c = 1/S` and `r^2 = 1 - 1/S` the relation
    /// is `u + v + 2 r sqrt(u v) = c`. Isolating the root and squaring gives
    /// `v^2 - 2 (c - u + 2 r^2 u) v + (c - u)^2 = 0`; each root is checked against
    /// the unsquared relation.
    pub fn b_of_a(&self, a: f64) -> Option<f64> {
        if !(a <= 1.0 + ROOT_TOLERANCE) || a < self.a_min() - ROOT_TOLERANCE {
            return None;
        }
        let a = a.min(1.0);
        let c = 1.0 / self.s;
        let r2 = 1.0 - c;
        let u = 1.0 - a;
        let half_linear = c - u + 2.0 * r2 * u;
        let disc = (half_linear * half_linear - (c - u) * (c - u)).max(0.0);
        let roots = [half_linear - disc.sqrt(), half_linear + disc.sqrt()];
        let mut feasible: Vec<f64> = roots
            .iter()
            .filter(|&&v| v >= -ROOT_TOLERANCE)
            .map(|&v| 1.0 - v.max(0.0))
            .filter(|&b| b <= 1.0 + ROOT_TOLERANCE && self.residual(a, b).abs() < ROOT_TOLERANCE)
            .collect();
        feasible.sort_by(f64::total_cmp);
        feasible.first().copied().map(|b| b.min(1.0))
    }

    pub fn point(&self, a: f64) -> Option<BoundPoint> {
        let b = self.b_of_a(a)?;
        if a <= 0.0 || b <= 0.0 {
            return None;
        }
        Some(BoundPoint::new(1.0 / a.sqrt(), 1.0 / b.sqrt()))
    }

    /// The `a` interval that keeps both coordinates inside the plot window.
    pub fn window(&self) -> (f64, f64) {
        let floor = 1.0 / (PLOT_WINDOW * PLOT_WINDOW);
        let lo = self.a_min().max(floor);
        // the curve is symmetric under a <-> b
        let hi = match self.b_of_a(1.0) {
            Some(b) if b >= floor => 1.0,
            _ => self.b_of_a(floor).unwrap_or(1.0),
        };
        (lo, hi)
    }

    /// Left endpoint `(1, sqrt(S/(S-1)))`, where the first parameter sits at
    /// its QCR bound.
    pub fn left_endpoint(&self) -> Option<BoundPoint> {
        self.point(1.0)
    }
}

pub fn tradeoff_curve(s: f64, num_points: usize) -> Result<BoundCurve> {
    if num_points < 2 {
        return Err(QmetError::Domain("a curve needs at least two points".into()));
    }
    let bound = TradeoffBound::new(s)?;
    if s.is_infinite() {
        return Ok(ccr_lines(num_points));
    }
    let (lo, hi) = bound.window();
    let mut points = Vec::with_capacity(num_points);
    for i in 0..num_points {
        // descending a gives ascending x
        let a = hi - (hi - lo) * i as f64 / (num_points - 1) as f64;
        if let Some(p) = bound.point(a) {
            points.push(p);
        }
    }
    Ok(BoundCurve { kind: BoundKind::Tradeoff, s_value: s, points })
}

/// The two QCR lines `x = 1` and `y = 1` clipped to the plot window, which is
/// what the trade-off curve collapses to for compatible parameters.
pub fn ccr_lines(num_points: usize) -> BoundCurve {
    let half = (num_points / 2).max(2);
    let mut points = Vec::with_capacity(2 * half);
    for i in 0..half {
        let y = PLOT_WINDOW - (PLOT_WINDOW - 1.0) * i as f64 / (half - 1) as f64;
        points.push(BoundPoint::new(1.0, y));
    }
    for i in 1..half {
        let x = 1.0 + (PLOT_WINDOW - 1.0) * i as f64 / (half - 1) as f64;
        points.push(BoundPoint::new(x, 1.0));
    }
    BoundCurve { kind: BoundKind::CcrLines, s_value: f64::INFINITY, points }
}

pub fn ql_point() -> BoundCurve {
    BoundCurve {
        kind: BoundKind::QlPoint,
        s_value: f64::NAN,
        points: vec![BoundPoint::new(1.0, 1.0)],
    }
}

/// Left and right trade-off endpoints for a Hermite-Gaussian probe of order `n`.
pub fn tradeoff_endpoints(n: usize) -> Result<(BoundPoint, BoundPoint)> {
    if n == 0 {
        return Err(QmetError::Degenerate(
            "Gaussian probe: trade-off endpoints lie at infinity".into(),
        ));
    }
    let nf = n as f64;
    let y = (2.0 * nf + 1.0) / (2.0 * (nf * (nf + 1.0)).sqrt());
    Ok((BoundPoint::new(1.0, y), BoundPoint::new(y, 1.0)))
}

/// Right side of the pure-state two-parameter Holevo bound on the mean
/// squared normalized error, `2 / (1 + sqrt(1 - C~^2))`.
pub fn holevo_rhs(c_tilde: f64) -> Result<f64> {
    if !(c_tilde.abs() <= 1.0) {
        return Err(QmetError::Domain(format!("|normalized curvature| must be <= 1, got {c_tilde}")));
    }
    Ok(2.0 / (1.0 + (1.0 - c_tilde * c_tilde).sqrt()))
}

/// Samples `(x^2 + y^2) / 2 = holevo_rhs(c_tilde)` with `x, y >= 1`,
/// uniformly in `x^2`.
pub fn holevo_bound(c_tilde: f64, num_points: usize) -> Result<BoundCurve> {
    if num_points < 2 {
        return Err(QmetError::Domain("a curve needs at least two points".into()));
    }
    let rhs = holevo_rhs(c_tilde)?;
    let x2_max = 2.0 * rhs - 1.0;
    let points = (0..num_points)
        .map(|i| {
            let x2 = 1.0 + (x2_max - 1.0) * i as f64 / (num_points - 1) as f64;
            BoundPoint::new(x2.sqrt(), (2.0 * rhs - x2).max(1.0).sqrt())
        })
        .collect();
    let s_value = if c_tilde == 0.0 { f64::INFINITY } else { 1.0 / (c_tilde * c_tilde) };
    Ok(BoundCurve { kind: BoundKind::Holevo, s_value, points })
}

/// Holevo `y` at a given `x`, or `None` outside the line's extent.
pub fn holevo_y(c_tilde: f64, x: f64) -> Result<Option<f64>> {
    let rhs = holevo_rhs(c_tilde)?;
    let y2 = 2.0 * rhs - x * x;
    Ok((y2 >= 1.0 - ROOT_TOLERANCE).then(|| y2.max(1.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangency {
    pub distance: f64,
    pub at: BoundPoint,
}

/// Closest approach of the Holevo line to the trade-off curve for the same
/// criterion `s` (with `C~^2 = 1/S`).
pub fn holevo_tradeoff_tangency(s: f64) -> Result<Tangency> {
    let bound = TradeoffBound::new(s)?;
    if s.is_infinite() {
        return Ok(Tangency { distance: 0.0, at: BoundPoint::new(1.0, 1.0) });
    }
    let rhs = holevo_rhs((1.0 / s).sqrt())?;
    let x2_max = 2.0 * rhs - 1.0;
    let holevo_at = |t: f64| {
        let x2 = 1.0 + (x2_max - 1.0) * t;
        BoundPoint::new(x2.sqrt(), (2.0 * rhs - x2).max(1.0).sqrt())
    };
    let (lo, hi) = (bound.a_min(), 1.0);
    let curve_distance = |p: BoundPoint| {
        minimize_scalar(
            |a| bound.point(a).map_or(f64::INFINITY, |q| q.distance(&p)),
            lo,
            hi,
        )
        .1
    };
    let (t_best, distance) = minimize_scalar(|t| curve_distance(holevo_at(t)), 0.0, 1.0);
    Ok(Tangency { distance, at: holevo_at(t_best) })
}

/// Grid search followed by golden-section refinement; returns `(arg, value)`.
fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const SAMPLES: usize = 400;
    let step = (hi - lo) / SAMPLES as f64;
    let mut best = (lo, f(lo));
    for i in 1..=SAMPLES {
        let t = lo + step * i as f64;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    if fm < best.1 {
        (mid, fm)
    } else {
        best
    }
}

/// Finite-difference pure-state QFI, `8 (1 - |<psi_g|psi_{g+dg}>|) / dg^2`.
///
/// Independent of the generator route; used to cross-check
/// [`quantum_geometry`].
pub fn qfi_fidelity_oracle<F>(family: F, g: f64, dg: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<PointerState>,
{
    if !(dg > 0.0) {
        return Err(QmetError::Precondition("dg must be positive".into()));
    }
    let here = family(g)?;
    let there = family(g + dg)?;
    for state in [&here, &there] {
        if (state.norm_sqr() - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(QmetError::Precondition("family must produce normalized states".into()));
        }
    }
    let overlap = here.inner(&there)?.norm().min(1.0);
    Ok(8.0 * (1.0 - overlap) / (dg * dg))
}

/// Two-parameter pure-state QFIM by central differences of the state family,
/// `4 Re(<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>)`.
pub fn qfim_finite_difference<F>(family: F, g: (f64, f64), dg: f64) -> Result<[[f64; 2]; 2]>
where
    F: Fn(f64, f64) -> Result<PointerState>,
{
    if !(dg > 0.0) {
        return Err(QmetError::Precondition("dg must be positive".into()));
    }
    let centre = family(g.0, g.1)?;
    if (centre.norm_sqr() - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(QmetError::Precondition("family must produce normalized states".into()));
    }
    let derivative = |plus: PointerState, minus: PointerState| -> Result<PointerState> {
        Ok(plus.sub(&minus)?.scale(Complex64::new(0.5 / dg, 0.0)))
    };
    let d = [
        derivative(family(g.0 + dg, g.1)?, family(g.0 - dg, g.1)?)?,
        derivative(family(g.0, g.1 + dg)?, family(g.0, g.1 - dg)?)?,
    ];
    let mut q = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let term = d[i].inner(&d[j])? - d[i].inner(&centre)? * centre.inner(&d[j])?;
            q[i][j] = 4.0 * term.re;
        }
    }
    Ok(q)
}
