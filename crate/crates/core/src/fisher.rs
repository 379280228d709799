//! Classical Fisher information of concrete pointer measurements.
//!
//! `F_ij = sum_l (d_i p_l)(d_j p_l) / p_l` for outcome probabilities
//! `p_l = <psi_g| E_l |psi_g>`, evaluated by central finite differences of
//! the probabilities. Analytic leading-order matrices are provided for direct
//! imaging and for the non-orthogonal projection readout.
//!
//! The non-orthogonal readout uses the two projectors onto `|psi_X^perp>` and
//! `|psi_P^perp>`. Those projectors overlap (`<psi_X^perp|psi_P^perp> = 1/(2n+1)`),
//! so `I - Pi_1 - Pi_2` has a negative eigenvalue and the triple is not a valid
//! POVM. The readout is therefore modeled as two binary measurements
//! `{Pi_k, I - Pi_k}`, each read out on its own channel with the full sample
//! budget, and the Fisher matrix is the sum of the two.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{QmetError, Result};
use crate::fock::{hermite_wavefunctions, FockSpace, OperatorMatrix, PointerState};
use crate::weak::{normalization_scales, orthogonal_projector_states};

/// Elements with probability below this are skipped in the Fisher sum.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Allowed negative eigenvalue of a POVM element.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Allowed `max |sum E_l - I|`.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;
/// Default symmetric evaluation offset in normalized units.
pub const DEFAULT_OFFSET: f64 = 1e-2;
/// Default central-difference step in normalized units.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Required half-extent of an imaging grid in units of `sqrt(2n+1) sigma0`.
pub const GRID_EXTENT: f64 = 6.0;
/// Coarsest allowed imaging grid step in units of `sigma0`.
pub const GRID_MAX_STEP: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<OperatorMatrix>,
    completeness_defect: f64,
}

impl Povm {
    pub fn new(elements: Vec<OperatorMatrix>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| QmetError::Precondition("a POVM needs at least one element".into()))?;
        let space = first.space();
        let mut total = Array2::<Complex64>::zeros((space.dim(), space.dim()));
        for (idx, e) in elements.iter().enumerate() {
            if e.space() != space {
                return Err(QmetError::Dimension("POVM elements must share a space".into()));
            }
            if !e.is_hermitian() {
                return Err(QmetError::Precondition(format!("POVM element {idx} is not Hermitian")));
            }
            if !is_positive_semidefinite(e.entries(), PSD_TOLERANCE) {
                return Err(QmetError::Precondition(format!("POVM element {idx} is not positive semidefinite")));
            }
            total = total + e.entries();
        }
        let completeness_defect = total
            .indexed_iter()
            .map(|((r, c), z)| (z - if r == c { 1.0 } else { 0.0 }).norm())
            .fold(0.0, f64::max);
        if completeness_defect >= COMPLETENESS_TOLERANCE {
            return Err(QmetError::Precondition(format!(
                "POVM elements do not sum to identity (defect {completeness_defect:.3e})"
            )));
        }
        Ok(Self { elements, completeness_defect })
    }

    /// `{|psi><psi|, I - |psi><psi|}` for a normalized `psi`.
    pub fn binary(projector_state: &PointerState) -> Result<Self> {
        let projector = rank_one(projector_state)?;
        let complement = OperatorMatrix::identity(projector_state.space()).sub(&projector)?;
        Self::new(vec![projector, complement])
    }

    pub fn elements(&self) -> &[OperatorMatrix] {
        &self.elements
    }

    pub fn completeness_defect(&self) -> f64 {
        self.completeness_defect
    }

    pub fn probabilities(&self, state: &PointerState) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|e| Ok(state.inner(&e.apply(state)?)?.re))
            .collect()
    }
}

fn rank_one(state: &PointerState) -> Result<OperatorMatrix> {
    let amps = state.amplitudes();
    let n = amps.len();
    let entries = Array2::from_shape_fn((n, n), |(r, c)| amps[r] * amps[c].conj());
    OperatorMatrix::new(state.space(), entries)
}

/// Cholesky of `m + tol I`; succeeds exactly when the smallest eigenvalue of
/// the Hermitian `m` exceeds `-tol`.
fn is_positive_semidefinite(m: &Array2<Complex64>, tol: f64) -> bool {
    let n = m.nrows();
    let mut l = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut diag = m[[j, j]].re + tol;
        for k in 0..j {
            diag -= l[[j, k]].norm_sqr();
        }
        if !(diag > 0.0) {
            return false;
        }
        let d = diag.sqrt();
        l[[j, j]] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = m[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / d;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfimMethod {
    DirectImaging,
    NonOrthogonal,
    NumericOracle,
}

impl CfimMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CfimMethod::DirectImaging => "direct_imaging",
            CfimMethod::NonOrthogonal => "nonorthogonal",
            CfimMethod::NumericOracle => "numeric_oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cfim {
    pub matrix: [[f64; 2]; 2],
    pub method: CfimMethod,
    /// Number of outcomes dropped because their probability was below
    /// [`PROBABILITY_FLOOR`].
    pub skipped: usize,
}

impl Cfim {
    fn analytic(matrix: [[f64; 2]; 2], method: CfimMethod) -> Self {
        Self { matrix, method, skipped: 0 }
    }

    /// `F_ij / (s_i s_j)`: the matrix in coordinates `g~_i = s_i g_i`.
    pub fn in_normalized(&self, scales: (f64, f64)) -> Cfim {
        let s = [scales.0, scales.1];
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.matrix[r][c] /= s[r] * s[c];
            }
        }
        out
    }

    /// `F_ij s_i s_j`: inverse of [`Cfim::in_normalized`].
    pub fn in_physical(&self, scales: (f64, f64)) -> Cfim {
        self.in_normalized((1.0 / scales.0, 1.0 / scales.1))
    }

    /// `max |F - other| / max |other|`.
    pub fn relative_defect(&self, reference: &Cfim) -> f64 {
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                diff = diff.max((self.matrix[r][c] - reference.matrix[r][c]).abs());
                scale = scale.max(reference.matrix[r][c].abs());
            }
        }
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Central-difference Fisher matrix summed over independent measurements.
pub fn cfim_numeric<F>(povms: &[Povm], family: F, g: (f64, f64), dg: f64) -> Result<Cfim>
where
    F: Fn(f64, f64) -> Result<PointerState>,
{
    if !(dg > 0.0) {
        return Err(QmetError::Precondition("dg must be positive".into()));
    }
    if povms.is_empty() {
        return Err(QmetError::Precondition("no measurements given".into()));
    }
    let center = family(g.0, g.1)?;
    let shifted = [
        (family(g.0 + dg, g.1)?, family(g.0 - dg, g.1)?),
        (family(g.0, g.1 + dg)?, family(g.0, g.1 - dg)?),
    ];
    let mut matrix = [[0.0; 2]; 2];
    let mut skipped = 0;
    let mut used = 0;
    for povm in povms {
        let p0 = povm.probabilities(&center)?;
        let mut deriv = [Vec::new(), Vec::new()];
        for (axis, (plus, minus)) in shifted.iter().enumerate() {
            let pp = povm.probabilities(plus)?;
            let pm = povm.probabilities(minus)?;
            deriv[axis] = pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * dg)).collect();
        }
        for (l, &p) in p0.iter().enumerate() {
            if p < PROBABILITY_FLOOR {
                skipped += 1;
                continue;
            }
            used += 1;
            for r in 0..2 {
                for c in 0..2 {
                    matrix[r][c] += deriv[r][l] * deriv[c][l] / p;
                }
            }
        }
    }
    if used == 0 {
        return Err(QmetError::Degenerate("all outcome probabilities vanish".into()));
    }
    Ok(Cfim { matrix, method: CfimMethod::NumericOracle, skipped })
}

/// The two binary readouts `{Pi_1, I - Pi_1}` and `{Pi_2, I - Pi_2}` onto
/// `|psi_X^perp>` and `|psi_P^perp>`.
pub fn nonorthogonal_povms(n: usize, space: FockSpace) -> Result<Vec<Povm>> {
    let (x_perp, p_perp) = orthogonal_projector_states(n, space)?;
    Ok(vec![Povm::binary(&x_perp)?, Povm::binary(&p_perp)?])
}

/// Leading-order non-orthogonal projection CFIM,
/// `|A_w|^2 diag(4n(n+1)/((2n+1) sigma0^2), 16 n(n+1) sigma0^2/(2n+1))`.
pub fn cfim_nonorthogonal(n: usize, sigma0: f64, weak_value: Complex64) -> Result<Cfim> {
    if n == 0 {
        return Err(QmetError::ZeroInformation(
            "non-orthogonal projection carries no information for n = 0".into(),
        ));
    }
    let nf = n as f64;
    let m = 2.0 * nf + 1.0;
    let aw2 = weak_value.norm_sqr();
    let core = nf * (nf + 1.0) / m;
    Ok(Cfim::analytic(
        [[aw2 * 4.0 * core / (sigma0 * sigma0), 0.0], [0.0, aw2 * 16.0 * core * sigma0 * sigma0]],
        CfimMethod::NonOrthogonal,
    ))
}

/// Normalized single-parameter error floor of the non-orthogonal readout,
/// `(2n+1) / (2 sqrt(n(n+1)))`, shared by both parameters.
pub fn nonorthogonal_precision(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(QmetError::ZeroInformation("n = 0".into()));
    }
    let nf = n as f64;
    Ok((2.0 * nf + 1.0) / (2.0 * (nf * (nf + 1.0)).sqrt()))
}

/// Upper bound `4n(n+1)/(2n+1)^2` on `1/(nu dg~1^2) + 1/(nu dg~2^2)` under
/// direct imaging.
pub fn direct_imaging_joint_bound(n: usize) -> f64 {
    let nf = n as f64;
    4.0 * nf * (nf + 1.0) / ((2.0 * nf + 1.0) * (2.0 * nf + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingGrid {
    pub x_max: f64,
    pub step: f64,
}

impl ImagingGrid {
    /// Minimal compliant grid for mode `n`, refined by `refine`.
    pub fn for_mode(n: usize, sigma0: f64, refine: usize) -> Self {
        Self {
            x_max: GRID_EXTENT * ((2 * n + 1) as f64).sqrt() * sigma0,
            step: GRID_MAX_STEP * sigma0 / refine.max(1) as f64,
        }
    }

    pub fn check(&self, n: usize, sigma0: f64) -> Result<()> {
        let needed = GRID_EXTENT * ((2 * n + 1) as f64).sqrt() * sigma0;
        if self.x_max < needed * (1.0 - 1e-12) {
            return Err(QmetError::Coverage(format!("x_max {} below required {}", self.x_max, needed)));
        }
        if !(self.step > 0.0) || self.step > GRID_MAX_STEP * sigma0 * (1.0 + 1e-12) {
            return Err(QmetError::Coverage(format!(
                "step {} exceeds sigma0/50 = {}",
                self.step,
                GRID_MAX_STEP * sigma0
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let count = (2.0 * self.x_max / self.step).ceil() as usize;
        let h = 2.0 * self.x_max / count as f64;
        (0..=count).map(|i| -self.x_max + h * i as f64).collect()
    }
}

/// Leading-order direct-imaging CFIM.
pub fn cfim_direct_imaging(n: usize, sigma0: f64, weak_value: Complex64, grid: &ImagingGrid) -> Result<Cfim> {
    grid.check(n, sigma0)?;
    let m = (2 * n + 1) as f64;
    let (re, im) = (weak_value.re, weak_value.im);
    Ok(Cfim::analytic(
        [
            [m * re * re / (sigma0 * sigma0), 2.0 * re * im],
            [2.0 * re * im, 4.0 * m * sigma0 * sigma0 * im * im],
        ],
        CfimMethod::DirectImaging,
    ))
}

/// Direct-imaging CFIM by trapezoid integration of the position density of
/// the normalized first-order pointer
/// `|n> - i A_w (g1 P + g2 X)|n>`, differentiated centrally in normalized
/// coordinates at `g_tilde` with step `dg`. Returned in physical units.
pub fn cfim_direct_imaging_numeric(
    n: usize,
    sigma0: f64,
    weak_value: Complex64,
    grid: &ImagingGrid,
    g_tilde: (f64, f64),
    dg: f64,
) -> Result<Cfim> {
    grid.check(n, sigma0)?;
    if !(dg > 0.0) {
        return Err(QmetError::Precondition("dg must be positive".into()));
    }
    let aw_abs = weak_value.norm();
    if aw_abs == 0.0 {
        return Err(QmetError::ZeroInformation("weak value vanishes".into()));
    }
    let scales = normalization_scales(n, sigma0, aw_abs);
    let xs = grid.points();
    let h = xs[1] - xs[0];
    let top = n + 1;

    // first-order amplitudes on |n-1>, |n>, |n+1> as functions of physical g
    let nf = n as f64;
    let (lo, hi) = (nf.sqrt(), (nf + 1.0).sqrt());
    let amplitudes = |g1t: f64, g2t: f64| {
        let (g1, g2) = (g1t / scales.0, g2t / scales.1);
        // -i A_w (g1 P + g2 X)|n>, with P|n> = (lo|n-1> - hi|n+1>)/(2 i sigma0)
        // and X|n> = sigma0 (lo|n-1> + hi|n+1>)
        let minus_i_aw = Complex64::new(0.0, -1.0) * weak_value;
        let p_coef = Complex64::new(0.0, -1.0 / (2.0 * sigma0)) * g1;
        let x_coef = Complex64::new(sigma0 * g2, 0.0);
        let below = minus_i_aw * (p_coef * lo + x_coef * lo);
        let above = minus_i_aw * (-p_coef * hi + x_coef * hi);
        let norm = (1.0 + below.norm_sqr() + above.norm_sqr()).sqrt();
        (below / norm, Complex64::new(1.0 / norm, 0.0), above / norm)
    };
    let points = [
        g_tilde,
        (g_tilde.0 + dg, g_tilde.1),
        (g_tilde.0 - dg, g_tilde.1),
        (g_tilde.0, g_tilde.1 + dg),
        (g_tilde.0, g_tilde.1 - dg),
    ];
    let coeffs: Vec<_> = points.iter().map(|&(a, b)| amplitudes(a, b)).collect();

    let mut f = [[0.0; 2]; 2];
    for (idx, &x) in xs.iter().enumerate() {
        let basis = hermite_wavefunctions(top, sigma0, x);
        let below_fn = if n >= 1 { basis[n - 1] } else { 0.0 };
        let density = |(b, c, a): (Complex64, Complex64, Complex64)| {
            (b * below_fn + c * basis[n] + a * basis[n + 1]).norm_sqr()
        };
        let p: Vec<f64> = coeffs.iter().map(|&c| density(c)).collect();
        if p[0] < f64::MIN_POSITIVE {
            continue;
        }
        let d = [(p[1] - p[2]) / (2.0 * dg), (p[3] - p[4]) / (2.0 * dg)];
        let weight = if idx == 0 || idx == xs.len() - 1 { 0.5 * h } else { h };
        for r in 0..2 {
            for c in 0..2 {
                f[r][c] += weight * d[r] * d[c] / p[0];
            }
        }
    }
    Ok(Cfim { matrix: f, method: CfimMethod::NumericOracle, skipped: 0 }.in_physical(scales))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fock_state;
    use crate::weak::{final_pointer_exact, final_pointer_first_order, NormalizedParams, WeakScheme};
    use approx::assert_relative_eq;

    const EPS5: f64 = 5.0 * std::f64::consts::PI / 180.0;

    fn exact_family(n: usize, sigma0: f64) -> impl Fn(f64, f64) -> Result<PointerState> {
        move |a, b| {
            let scheme = WeakScheme::from_normalized(n, sigma0, EPS5, NormalizedParams { g1_tilde: a, g2_tilde: b })?;
            Ok(final_pointer_exact(&scheme)?.pointer)
        }
    }

    #[test]
    fn analytic_nonorthogonal_values() {
        let f = cfim_nonorthogonal(1, 1.0, Complex64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(f.matrix[0][0], 8.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(f.matrix[1][1], 32.0 / 3.0, epsilon = 1e-14);
        assert!(matches!(cfim_nonorthogonal(0, 1.0, Complex64::new(1.0, 0.0)), Err(QmetError::ZeroInformation(_))));
        assert_relative_eq!(nonorthogonal_precision(5).unwrap(), 1.004_158, epsilon = 1e-6);
    }

    #[test]
    fn joint_bound_value() {
        assert_relative_eq!(direct_imaging_joint_bound(1), 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn binary_povm_is_valid() {
        let space = FockSpace::new(10, 1.0).unwrap();
        let povms = nonorthogonal_povms(2, space).unwrap();
        for p in &povms {
            assert!(p.completeness_defect() < 1e-12);
        }
    }

    #[test]
    fn triple_is_not_a_povm() {
        let space = FockSpace::new(10, 1.0).unwrap();
        let (xp, pp) = orthogonal_projector_states(2, space).unwrap();
        let pi1 = rank_one(&xp).unwrap();
        let pi2 = rank_one(&pp).unwrap();
        let rest = OperatorMatrix::identity(space).sub(&pi1).unwrap().sub(&pi2).unwrap();
        assert!(matches!(Povm::new(vec![pi1, pi2, rest]), Err(QmetError::Precondition(_))));
    }

    #[test]
    fn incomplete_povm_rejected() {
        let space = FockSpace::new(6, 1.0).unwrap();
        let proj = rank_one(&fock_state(space, 1).unwrap()).unwrap();
        assert!(matches!(Povm::new(vec![proj]), Err(QmetError::Precondition(_))));
    }

    #[test]
    fn constant_family_has_no_information() {
        let space = FockSpace::new(10, 1.0).unwrap();
        let povms = nonorthogonal_povms(2, space).unwrap();
        let f = cfim_numeric(&povms, |_, _| fock_state(space, 2), (0.0, 0.0), 1e-4).unwrap();
        assert_eq!(f.matrix, [[0.0; 2]; 2]);
        assert_eq!(f.skipped, 2);
    }

    #[test]
    fn number_projector_is_stationary() {
        let n = 2;
        let space = WeakScheme::standard(n, 1.0, EPS5, 0.0, 0.0).unwrap().space;
        let povm = vec![Povm::binary(&fock_state(space, n).unwrap()).unwrap()];
        let family = |a, b| {
            let s = WeakScheme::from_normalized(n, 1.0, EPS5, NormalizedParams { g1_tilde: a, g2_tilde: b })?;
            final_pointer_first_order(&s)
        };
        let f = cfim_numeric(&povm, family, (0.0, 0.0), 1e-4).unwrap();
        assert!(f.matrix[0][0].abs() < 1e-6 && f.matrix[1][1].abs() < 1e-6);
    }

    #[test]
    fn numeric_nonorthogonal_matches_analytic() {
        let n = 2;
        let sigma0 = 1.0;
        let scheme = WeakScheme::standard(n, sigma0, EPS5, 0.0, 0.0).unwrap();
        let aw = scheme.weak_value().unwrap().value;
        let povms = nonorthogonal_povms(n, scheme.space).unwrap();
        let numeric = cfim_numeric(&povms, exact_family(n, sigma0), (1e-2, 1e-2), 1e-4).unwrap();
        let scales = normalization_scales(n, sigma0, aw.norm());
        let analytic = cfim_nonorthogonal(n, sigma0, aw).unwrap().in_normalized(scales);
        assert!(numeric.relative_defect(&analytic) < 1e-2, "{:?} vs {:?}", numeric, analytic);
    }

    #[test]
    fn grid_coverage_enforced() {
        let bad = ImagingGrid { x_max: 1.0, step: 0.01 };
        assert!(matches!(cfim_direct_imaging(1, 1.0, Complex64::new(1.0, 0.0), &bad), Err(QmetError::Coverage(_))));
        let coarse = ImagingGrid { x_max: 20.0, step: 0.1 };
        assert!(matches!(coarse.check(1, 1.0), Err(QmetError::Coverage(_))));
    }

    #[test]
    fn direct_imaging_real_weak_value_is_blind_to_g2() {
        let grid = ImagingGrid::for_mode(1, 1.0, 1);
        let f = cfim_direct_imaging(1, 1.0, Complex64::new(11.95, 0.0), &grid).unwrap();
        assert_eq!(f.matrix[1][1], 0.0);
        assert_eq!(f.matrix[0][1], 0.0);
        let g = cfim_direct_imaging(0, 1.0, Complex64::new(0.0, 3.0), &ImagingGrid::for_mode(0, 1.0, 1)).unwrap();
        assert_eq!(g.matrix[0][0], 0.0);
        assert!(g.matrix[1][1] > 0.0);
    }

    #[test]
    fn direct_imaging_numeric_matches_analytic() {
        for (n, aw) in [(1, Complex64::new(11.95, 0.0)), (3, Complex64::new(11.95, 0.0)), (2, Complex64::new(3.0, 4.0))] {
            let sigma0 = 1.3;
            let grid = ImagingGrid::for_mode(n, sigma0, 4);
            let analytic = cfim_direct_imaging(n, sigma0, aw, &grid).unwrap();
            let numeric = cfim_direct_imaging_numeric(n, sigma0, aw, &grid, (1e-2, 1e-2), 1e-4).unwrap();
            let scales = normalization_scales(n, sigma0, aw.norm());
            let defect = numeric.in_normalized(scales).relative_defect(&analytic.in_normalized(scales));
            assert!(defect < 1e-2, "n={n} defect {defect}");
        }
    }
}
