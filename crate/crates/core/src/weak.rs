//! Post-selected weak measurement of a transverse pointer mode.
//!
//! A two-level system (polarization basis `|H>, |V>`) couples to the pointer
//! through `exp(-i (g1 P + g2 X) (x) A)`. After pre-selection `|i>` and
//! post-selection `|f>`, the pointer to first order in the couplings is
//! `|n> - i A_w (g1 P + g2 X) |n>`, with weak value `A_w = <f|A|i>/<f|i>`.
//!
//! First-order pointer states are kept unnormalized: normalization is a
//! second-order correction, and the projection probabilities below are
//! stated for the unnormalized form.

use log::warn;
use num_complex::Complex64;

use crate::error::{QmetError, Result};
use crate::estimation::{quantum_geometry, GeneratorPair, QuantumGeometry};
use crate::fock::{fock_state, quadrature_operators, variance, FockSpace, PointerState, MODE_BUFFER};

/// Amplified coupling `|A_w| |g_i| sqrt(Var)` above which the scheme is rejected.
pub const WEAKNESS_LIMIT: f64 = 0.05;
/// Amplified coupling above which a warning is logged.
pub const WEAKNESS_WARN: f64 = 0.01;
/// Weak-value magnitude above which a warning is logged.
pub const WEAK_VALUE_WARN: f64 = 1e6;
/// Smallest admissible `|<f|i>|`.
pub const OVERLAP_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    amplitudes: [Complex64; 2],
}

impl TwoLevelState {
    /// Normalizes the given amplitudes on `{|H>, |V>}`.
    pub fn new(h: Complex64, v: Complex64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(QmetError::Precondition("two-level state must be nonzero".into()));
        }
        Ok(Self { amplitudes: [h / norm, v / norm] })
    }

    pub fn horizontal() -> Self {
        Self { amplitudes: [ONE, ZERO] }
    }

    pub fn vertical() -> Self {
        Self { amplitudes: [ZERO, ONE] }
    }

    /// Diagonal pre-selection `(|H> + |V>)/sqrt(2)`.
    pub fn diagonal() -> Self {
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { amplitudes: [c, c] }
    }

    /// Post-selection `cos(pi/4 - eps/2)|H> - sin(pi/4 - eps/2)|V>`, nearly
    /// orthogonal to [`TwoLevelState::diagonal`] for small `eps`.
    pub fn postselection(epsilon: f64) -> Self {
        let angle = std::f64::consts::FRAC_PI_4 - 0.5 * epsilon;
        Self { amplitudes: [Complex64::new(angle.cos(), 0.0), Complex64::new(-angle.sin(), 0.0)] }
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        self.amplitudes
    }

    /// `<self|other>`
    pub fn inner(&self, other: &TwoLevelState) -> Complex64 {
        self.amplitudes[0].conj() * other.amplitudes[0] + self.amplitudes[1].conj() * other.amplitudes[1]
    }
}

/// Hermitian 2x2 system observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemOperator {
    entries: [[Complex64; 2]; 2],
}

impl SystemOperator {
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Self> {
        let scale = entries.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = (entries[0][1] - entries[1][0].conj())
            .norm()
            .max(entries[0][0].im.abs())
            .max(entries[1][1].im.abs());
        if defect > 1e-12 * scale {
            return Err(QmetError::Precondition(format!("system operator is not Hermitian (defect {defect:.3e})")));
        }
        Ok(Self { entries })
    }

    /// `(I + sigma_z)/2 = |H><H|`.
    pub fn horizontal_projector() -> Self {
        Self { entries: [[ONE, ZERO], [ZERO, ZERO]] }
    }

    pub fn entries(&self) -> [[Complex64; 2]; 2] {
        self.entries
    }

    pub fn apply(&self, state: &TwoLevelState) -> [Complex64; 2] {
        let a = state.amplitudes;
        [
            self.entries[0][0] * a[0] + self.entries[0][1] * a[1],
            self.entries[1][0] * a[0] + self.entries[1][1] * a[1],
        ]
    }

    /// Eigenvalues (ascending) with orthonormal eigenvectors.
    pub fn eigen(&self) -> [(f64, TwoLevelState); 2] {
        let a = self.entries[0][0].re;
        let d = self.entries[1][1].re;
        let b = self.entries[0][1];
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        if b.norm() < 1e-300 {
            let (h, v) = (TwoLevelState::horizontal(), TwoLevelState::vertical());
            return if a <= d { [(a, h), (d, v)] } else { [(d, v), (a, h)] };
        }
        let eigvec = |lambda: f64| {
            // (A - lambda) x = 0 with x = (b, lambda - a)
            TwoLevelState::new(b, Complex64::new(lambda - a, 0.0)).expect("nonzero eigenvector")
        };
        [(mean - radius, eigvec(mean - radius)), (mean + radius, eigvec(mean + radius))]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakValue {
    pub value: Complex64,
}

pub fn weak_value(pre: &TwoLevelState, post: &TwoLevelState, a: &SystemOperator) -> Result<WeakValue> {
    let overlap = post.inner(pre);
    if overlap.norm() <= OVERLAP_FLOOR {
        return Err(QmetError::DivideByZero(format!(
            "pre- and post-selection are orthogonal (|<f|i>| = {:.3e})",
            overlap.norm()
        )));
    }
    let applied = a.apply(pre);
    let post_amps = post.amplitudes();
    let numerator = post_amps[0].conj() * applied[0] + post_amps[1].conj() * applied[1];
    let value = numerator / overlap;
    if value.norm() > WEAK_VALUE_WARN {
        warn!("weak value magnitude {:.3e} exceeds {WEAK_VALUE_WARN:.0e}", value.norm());
    }
    Ok(WeakValue { value })
}

/// Dimensionless couplings `A_w sqrt(2n+1) (g1/sigma0, 2 sigma0 g2)`, using
/// `|A_w|` for the amplification factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedParams {
    pub g1_tilde: f64,
    pub g2_tilde: f64,
}

/// Conversion factors `(s1, s2)` with `g~_i = s_i g_i`.
pub fn normalization_scales(n: usize, sigma0: f64, weak_value_abs: f64) -> (f64, f64) {
    let root = ((2 * n + 1) as f64).sqrt();
    (weak_value_abs * root / sigma0, 2.0 * weak_value_abs * sigma0 * root)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakScheme {
    pub n: usize,
    pub space: FockSpace,
    pub pre: TwoLevelState,
    pub post: TwoLevelState,
    pub system_op: SystemOperator,
    /// Transverse displacement coupling, meters.
    pub g1: f64,
    /// Transverse momentum kick, inverse meters.
    pub g2: f64,
    /// Post-selection angle, radians.
    pub epsilon: f64,
}

impl WeakScheme {
    /// Diagonal pre-selection, post-selection at angle `epsilon`, and
    /// `A = |H><H|`, in the standard space for mode `n`.
    pub fn standard(n: usize, sigma0: f64, epsilon: f64, g1: f64, g2: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < std::f64::consts::FRAC_PI_2) {
            return Err(QmetError::Domain(format!("post-selection angle must lie in (0, pi/2), got {epsilon}")));
        }
        let scheme = Self {
            n,
            space: FockSpace::new(n + MODE_BUFFER, sigma0)?,
            pre: TwoLevelState::diagonal(),
            post: TwoLevelState::postselection(epsilon),
            system_op: SystemOperator::horizontal_projector(),
            g1,
            g2,
            epsilon,
        };
        scheme.check_weakness()?;
        Ok(scheme)
    }

    /// Standard scheme with couplings given in normalized units.
    pub fn from_normalized(n: usize, sigma0: f64, epsilon: f64, params: NormalizedParams) -> Result<Self> {
        let probe = Self::standard(n, sigma0, epsilon, 0.0, 0.0)?;
        let (s1, s2) = normalization_scales(n, sigma0, probe.weak_value()?.value.norm());
        Self::standard(n, sigma0, epsilon, params.g1_tilde / s1, params.g2_tilde / s2)
    }

    pub fn with_space(mut self, space: FockSpace) -> Result<Self> {
        self.space = space;
        self.check_weakness()?;
        Ok(self)
    }

    pub fn with_couplings(mut self, g1: f64, g2: f64) -> Result<Self> {
        self.g1 = g1;
        self.g2 = g2;
        self.check_weakness()?;
        Ok(self)
    }

    pub fn sigma0(&self) -> f64 {
        self.space.sigma0()
    }

    pub fn weak_value(&self) -> Result<WeakValue> {
        weak_value(&self.pre, &self.post, &self.system_op)
    }

    pub fn normalized(&self) -> Result<NormalizedParams> {
        let (s1, s2) = normalization_scales(self.n, self.sigma0(), self.weak_value()?.value.norm());
        Ok(NormalizedParams { g1_tilde: s1 * self.g1, g2_tilde: s2 * self.g2 })
    }

    /// Amplified couplings `|A_w| |g_i| sqrt(Var_i)` for `(P, X)` on `|n>`.
    pub fn amplified_couplings(&self) -> Result<(f64, f64)> {
        let probe = fock_state(self.space, self.n)?;
        let (p, x) = quadrature_operators(self.space);
        let aw = self.weak_value()?.value.norm();
        Ok((
            aw * self.g1.abs() * variance(&p, &probe)?.sqrt(),
            aw * self.g2.abs() * variance(&x, &probe)?.sqrt(),
        ))
    }

    pub fn check_weakness(&self) -> Result<()> {
        if self.n + 1 >= self.space.dim() {
            return Err(QmetError::TruncationEdge { level: self.n + 1, dim: self.space.dim() });
        }
        let (c1, c2) = self.amplified_couplings()?;
        let worst = c1.max(c2);
        if worst >= WEAKNESS_LIMIT {
            return Err(QmetError::Precondition(format!(
                "coupling not weak: amplified strength {worst:.3e} >= {WEAKNESS_LIMIT}"
            )));
        }
        if worst > WEAKNESS_WARN {
            warn!("amplified coupling {worst:.3e} exceeds {WEAKNESS_WARN}; first-order error grows");
        }
        Ok(())
    }
}

fn ladder_state(space: FockSpace, n: usize, lower: f64, upper: f64) -> Result<PointerState> {
    if n + 1 >= space.dim() {
        return Err(QmetError::TruncationEdge { level: n + 1, dim: space.dim() });
    }
    let mut amps = ndarray::Array1::zeros(space.dim());
    if n >= 1 {
        amps[n - 1] = Complex64::new(lower, 0.0);
    }
    amps[n + 1] = Complex64::new(upper, 0.0);
    PointerState::from_normalized(space, amps)
}

/// States generated from `|n>` by `P` and `X`:
/// `|psi_P> = (sqrt(n)|n-1> - sqrt(n+1)|n+1>)/sqrt(2n+1)` and
/// `|psi_X> = (sqrt(n)|n-1> + sqrt(n+1)|n+1>)/sqrt(2n+1)`.
pub fn generated_states(n: usize, space: FockSpace) -> Result<(PointerState, PointerState)> {
    let (lo, hi) = ((n as f64).sqrt(), ((n + 1) as f64).sqrt());
    Ok((ladder_state(space, n, lo, -hi)?, ladder_state(space, n, lo, hi)?))
}

/// Projector states orthogonal to the cross-parameter generated states:
/// `|psi_X^perp> = (sqrt(n+1)|n-1> - sqrt(n)|n+1>)/sqrt(2n+1)` and
/// `|psi_P^perp> = (sqrt(n+1)|n-1> + sqrt(n)|n+1>)/sqrt(2n+1)`.
pub fn orthogonal_projector_states(n: usize, space: FockSpace) -> Result<(PointerState, PointerState)> {
    if n == 0 {
        return Err(QmetError::ZeroInformation(
            "projector states need n >= 1; for n = 0 they coincide with the generated states".into(),
        ));
    }
    let (lo, hi) = ((n as f64).sqrt(), ((n + 1) as f64).sqrt());
    Ok((ladder_state(space, n, hi, -lo)?, ladder_state(space, n, hi, lo)?))
}

/// Unnormalized first-order pointer `|n> - i A_w (g1 P + g2 X)|n>`.
pub fn final_pointer_first_order(scheme: &WeakScheme) -> Result<PointerState> {
    scheme.check_weakness()?;
    let space = scheme.space;
    let probe = fock_state(space, scheme.n)?;
    let (p, x) = quadrature_operators(space);
    let aw = scheme.weak_value()?.value;
    let kicked = p.apply(&probe)?.scale(ONE * scheme.g1).add(&x.apply(&probe)?.scale(ONE * scheme.g2))?;
    probe.add(&kicked.scale(-I * aw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPointer {
    /// Normalized post-selected pointer.
    pub pointer: PointerState,
    /// `|| <f| U |i>|n> ||^2`.
    pub postselect_prob: f64,
    /// Norm of the joint state before post-selection.
    pub joint_norm: f64,
}

/// Pointer after the exact joint unitary `exp(-i (g1 P + g2 X) (x) A)` and
/// post-selection.
///
/// `A` is diagonalized as `sum_k lambda_k |k><k|`, so the joint unitary is
/// block diagonal, `sum_k |k><k| (x) exp(-i lambda_k G)`, and the post-selected
/// pointer is `sum_k <f|k><k|i> exp(-i lambda_k G)|n>`.
pub fn final_pointer_exact(scheme: &WeakScheme) -> Result<ExactPointer> {
    let space = scheme.space;
    let probe = fock_state(space, scheme.n)?;
    let (p, x) = quadrature_operators(space);
    let generator = p.scale_real(scheme.g1).add(&x.scale_real(scheme.g2))?;

    let mut pointer = PointerState::new(space, ndarray::Array1::zeros(space.dim()))?;
    let mut joint_norm_sqr = 0.0;
    for (lambda, eigvec) in scheme.system_op.eigen() {
        let branch = if lambda == 0.0 { probe.clone() } else { generator.evolution(lambda).apply(&probe)? };
        let pre_weight = eigvec.inner(&scheme.pre);
        joint_norm_sqr += pre_weight.norm_sqr() * branch.norm_sqr();
        let weight = scheme.post.inner(&eigvec) * pre_weight;
        pointer = pointer.add(&branch.scale(weight))?;
    }
    let postselect_prob = pointer.norm_sqr();
    if !(postselect_prob > 0.0) {
        return Err(QmetError::DivideByZero("post-selection probability vanishes".into()));
    }
    Ok(ExactPointer { pointer: pointer.normalize()?, postselect_prob, joint_norm: joint_norm_sqr.sqrt() })
}

/// `|<projector|state>|^2`.
pub fn projection_probability(state: &PointerState, projector_state: &PointerState) -> Result<f64> {
    Ok(projector_state.inner(state)?.norm_sqr())
}

/// First-order projection probability `n(n+1) g~^2 / (2n+1)^2`.
pub fn projection_probability_first_order(n: usize, g_tilde: f64) -> f64 {
    let nf = n as f64;
    let m = 2.0 * nf + 1.0;
    nf * (nf + 1.0) * g_tilde * g_tilde / (m * m)
}

/// Pointer QFIM and criterion: the post-selection-free geometry of `(P, X)`
/// on `|n>`, scaled by `|A_w|^2`. The criterion is weak-value independent.
pub fn scheme_geometry(scheme: &WeakScheme) -> Result<QuantumGeometry> {
    let space = scheme.space;
    let (p, x) = quadrature_operators(space);
    let pair = GeneratorPair::new(p, x, fock_state(space, scheme.n)?)?;
    let aw = scheme.weak_value()?.value.norm();
    Ok(quantum_geometry(&pair)?.scaled(aw * aw))
}

/// `||exact - normalize(first_order)|| / (|g~1| + |g~2|)^2`, after aligning
/// both global phases on level `n`.
pub fn first_order_error_ratio(scheme: &WeakScheme) -> Result<f64> {
    let params = scheme.normalized()?;
    let scale = params.g1_tilde.abs() + params.g2_tilde.abs();
    if scale == 0.0 {
        return Err(QmetError::DivideByZero("couplings are zero".into()));
    }
    let exact = final_pointer_exact(scheme)?.pointer.align_phase(scheme.n);
    let first = final_pointer_first_order(scheme)?.normalize()?.align_phase(scheme.n);
    Ok(exact.distance(&first)? / (scale * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const EPS5: f64 = 5.0 * std::f64::consts::PI / 180.0;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn standard_weak_value() {
        let w = weak_value(&TwoLevelState::diagonal(), &TwoLevelState::postselection(EPS5), &SystemOperator::horizontal_projector())
            .unwrap();
        let expected = 0.5 * (1.0 / (EPS5 / 2.0).tan() + 1.0);
        assert_relative_eq!(w.value.re, expected, max_relative = 1e-13);
        assert_relative_eq!(w.value.re, 11.951_9, epsilon = 1e-4);
        assert!(w.value.im.abs() < 1e-14);
    }

    #[test]
    fn no_postselection_gives_expectation() {
        let i = TwoLevelState::diagonal();
        let w = weak_value(&i, &i, &SystemOperator::horizontal_projector()).unwrap();
        assert_relative_eq!(w.value.re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn orthogonal_selection_fails() {
        let r = weak_value(&TwoLevelState::horizontal(), &TwoLevelState::vertical(), &SystemOperator::horizontal_projector());
        assert!(matches!(r, Err(QmetError::DivideByZero(_))));
    }

    #[test]
    fn postselection_overlap() {
        let overlap = TwoLevelState::postselection(EPS5).inner(&TwoLevelState::diagonal());
        assert_relative_eq!(overlap.re, (EPS5 / 2.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn non_hermitian_operator_rejected() {
        let r = SystemOperator::new([[c(1.0), c(1.0)], [c(0.0), c(0.0)]]);
        assert!(matches!(r, Err(QmetError::Precondition(_))));
    }

    #[test]
    fn eigen_decomposition_reconstructs() {
        let op = SystemOperator::new([[c(0.3), Complex64::new(0.2, -0.5)], [Complex64::new(0.2, 0.5), c(-1.1)]]).unwrap();
        let eig = op.eigen();
        for (lambda, v) in eig {
            let av = op.apply(&v);
            let amps = v.amplitudes();
            assert!((av[0] - amps[0] * lambda).norm() < 1e-14);
            assert!((av[1] - amps[1] * lambda).norm() < 1e-14);
        }
        assert!(eig[0].1.inner(&eig[1].1).norm() < 1e-14);
    }

    #[test]
    fn generated_state_values() {
        let space = FockSpace::new(8, 1.0).unwrap();
        let (psi_p, psi_x) = generated_states(1, space).unwrap();
        assert_relative_eq!(psi_p.amplitude(0).re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(psi_p.amplitude(2).re, -(2.0 / 3f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(psi_p.inner(&psi_x).unwrap().re, -1.0 / 3.0, epsilon = 1e-15);
        let (p0, x0) = generated_states(0, space).unwrap();
        assert_eq!(p0.amplitude(1), c(-1.0));
        assert_eq!(x0.amplitude(1), c(1.0));
    }

    #[test]
    fn projector_orthogonality() {
        let space = FockSpace::new(12, 1.0).unwrap();
        for n in 1..=5 {
            let (psi_p, psi_x) = generated_states(n, space).unwrap();
            let (x_perp, p_perp) = orthogonal_projector_states(n, space).unwrap();
            assert!(x_perp.inner(&psi_x).unwrap().norm() < 1e-12);
            assert!(p_perp.inner(&psi_p).unwrap().norm() < 1e-12);
            let nf = n as f64;
            assert_relative_eq!(
                x_perp.inner(&psi_p).unwrap().re,
                2.0 * (nf * (nf + 1.0)).sqrt() / (2.0 * nf + 1.0),
                epsilon = 1e-14
            );
            assert_eq!(x_perp.inner(&fock_state(space, n).unwrap()).unwrap().norm(), 0.0);
        }
        assert!(matches!(orthogonal_projector_states(0, space), Err(QmetError::ZeroInformation(_))));
    }

    #[test]
    fn generated_state_edge() {
        let space = FockSpace::new(6, 1.0).unwrap();
        assert!(matches!(generated_states(5, space), Err(QmetError::TruncationEdge { .. })));
    }

    #[test]
    fn first_order_matches_normalized_form() {
        let scheme = WeakScheme::standard(2, 0.8, EPS5, 1e-5, 2e-5).unwrap();
        let params = scheme.normalized().unwrap();
        let (psi_p, psi_x) = generated_states(2, scheme.space).unwrap();
        let expected = fock_state(scheme.space, 2)
            .unwrap()
            .sub(&psi_p.scale(c(0.5 * params.g1_tilde)).add(&psi_x.scale(I * 0.5 * params.g2_tilde)).unwrap())
            .unwrap();
        let got = final_pointer_first_order(&scheme).unwrap();
        assert!(got.distance(&expected).unwrap() < 1e-14);
        assert!(!got.is_normalized());
    }

    #[test]
    fn zero_coupling() {
        let scheme = WeakScheme::standard(3, 1.0, EPS5, 0.0, 0.0).unwrap();
        let first = final_pointer_first_order(&scheme).unwrap();
        assert_eq!(first.distance(&fock_state(scheme.space, 3).unwrap()).unwrap(), 0.0);
        let exact = final_pointer_exact(&scheme).unwrap();
        assert!(exact.pointer.distance(&fock_state(scheme.space, 3).unwrap()).unwrap() < 1e-14);
        assert_relative_eq!(exact.postselect_prob, (EPS5 / 2.0).sin().powi(2), epsilon = 1e-15);
    }

    #[test]
    fn eigenstate_preselection() {
        let mut scheme = WeakScheme::standard(2, 1.0, EPS5, 1e-4, 3e-4).unwrap();
        scheme.pre = TwoLevelState::horizontal();
        scheme.post = TwoLevelState::horizontal();
        let (p, x) = quadrature_operators(scheme.space);
        let g = p.scale_real(1e-4).add(&x.scale_real(3e-4)).unwrap();
        let expected = g.evolution(1.0).apply(&fock_state(scheme.space, 2).unwrap()).unwrap();
        let exact = final_pointer_exact(&scheme).unwrap();
        assert!(exact.pointer.distance(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn exact_preserves_joint_norm() {
        let scheme = WeakScheme::standard(4, 1.0, EPS5, 1e-3, 1e-3).unwrap();
        assert!((final_pointer_exact(&scheme).unwrap().joint_norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weakness_enforced() {
        assert!(matches!(WeakScheme::standard(1, 1.0, EPS5, 0.1, 0.0), Err(QmetError::Precondition(_))));
        assert!(matches!(WeakScheme::standard(1, 1.0, 0.0, 0.0, 0.0), Err(QmetError::Domain(_))));
    }

    #[test]
    fn normalized_round_trip() {
        let params = NormalizedParams { g1_tilde: 3e-3, g2_tilde: -2e-3 };
        let scheme = WeakScheme::from_normalized(3, 120e-6, EPS5, params).unwrap();
        let back = scheme.normalized().unwrap();
        assert_relative_eq!(back.g1_tilde, params.g1_tilde, max_relative = 1e-12);
        assert_relative_eq!(back.g2_tilde, params.g2_tilde, max_relative = 1e-12);
    }

    #[test]
    fn first_order_projection_probabilities() {
        for n in 1..=4 {
            let g1t = 2e-3;
            let scheme = WeakScheme::from_normalized(n, 1.0, EPS5, NormalizedParams { g1_tilde: g1t, g2_tilde: 3e-3 }).unwrap();
            let state = final_pointer_first_order(&scheme).unwrap();
            let (x_perp, p_perp) = orthogonal_projector_states(n, scheme.space).unwrap();
            assert_relative_eq!(
                projection_probability(&state, &x_perp).unwrap(),
                projection_probability_first_order(n, g1t),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                projection_probability(&state, &p_perp).unwrap(),
                projection_probability_first_order(n, 3e-3),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn scheme_geometry_values() {
        let scheme = WeakScheme::standard(3, 0.5, EPS5, 0.0, 0.0).unwrap();
        let g = scheme_geometry(&scheme).unwrap();
        let aw = scheme.weak_value().unwrap().value.norm();
        assert_relative_eq!(g.qmec, 49.0, max_relative = 1e-12);
        assert_relative_eq!(g.qfim[0][0], aw * aw * 7.0 / 0.25, max_relative = 1e-12);
        assert!(g.qfim[0][1].abs() < 1e-12);
        let gauss = scheme_geometry(&WeakScheme::standard(0, 0.5, EPS5, 0.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(gauss.qmec, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn first_order_ratio_is_bounded() {
        let scheme = WeakScheme::from_normalized(2, 1.0, EPS5, NormalizedParams { g1_tilde: 2e-3, g2_tilde: 2e-3 }).unwrap();
        let ratio = first_order_error_ratio(&scheme).unwrap();
        assert!(ratio > 0.0 && ratio < 10.0, "ratio {ratio}");
    }
}
