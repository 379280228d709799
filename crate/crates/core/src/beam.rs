//! Paraxial propagation of Hermite-Gaussian modes and the mapping from
//! laboratory mirror motion to pointer couplings.
//!
//! Free propagation over a distance `z` is `U(z) = exp(-i P^2 z / (2k))`, under
//! which `P(z) = U P U^dagger = P` and `X(z) = U X U^dagger = X - (z/k) P`.
//!
//! A truncated `P^2` only approximates the propagator: over the laboratory
//! distances a mode spreads across hundreds of number states. Operator
//! identities are therefore evaluated in a padded working space and compared
//! on the leading block of the requested dimension.

use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::{QmetError, Result};
use crate::fock::{
    fock_state, hermite_wavefunctions, position_wavefunction, quadrature_operators, FockSpace, OperatorMatrix,
};
use crate::weak::WeakScheme;

/// Smallest padded working dimension for propagation identities.
pub const MIN_WORKING_DIM: usize = 400;
/// Tolerance on the successive-padding change of an identity defect.
pub const PADDING_CONVERGENCE: f64 = 1e-12;
const PADDING_STEP: usize = 80;
const MAX_WORKING_DIM: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentGeometry {
    /// Meters.
    pub wavelength: f64,
    /// Inverse meters, `2 pi / wavelength`.
    pub k: f64,
    /// Waist to signal mirror, meters; negative when the mirror precedes the waist.
    pub z1: f64,
    /// Signal mirror to measurement plane, meters.
    pub z2: f64,
    /// `z1 + z2`.
    pub z0: f64,
    /// Rayleigh range `2 k sigma0^2`, meters.
    pub b: f64,
    /// Waist standard deviation, meters.
    pub sigma0: f64,
}

impl ExperimentGeometry {
    pub fn from_wave_number(k: f64, sigma0: f64, z1: f64, z2: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(QmetError::Domain(format!("wave number must be positive, got {k}")));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(QmetError::Domain(format!("sigma0 must be positive, got {sigma0}")));
        }
        if !(z1.is_finite() && z2.is_finite()) {
            return Err(QmetError::Domain("distances must be finite".into()));
        }
        Ok(Self {
            wavelength: 2.0 * std::f64::consts::PI / k,
            k,
            z1,
            z2,
            z0: z1 + z2,
            b: 2.0 * k * sigma0 * sigma0,
            sigma0,
        })
    }

    pub fn from_wavelength(wavelength: f64, sigma0: f64, z1: f64, z2: f64) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(QmetError::Domain(format!("wavelength must be positive, got {wavelength}")));
        }
        Self::from_wave_number(2.0 * std::f64::consts::PI / wavelength, sigma0, z1, z2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    /// Meters.
    pub sigma_z: f64,
    /// Gouy phase, radians.
    pub gouy: f64,
    /// Inverse radius of curvature; real for a Gaussian beam in this convention.
    pub q_inv: Complex64,
}

impl BeamGeometry {
    /// `1/(2 sigma^2) - i k / q`, which equals `k / (b + i z)`.
    pub fn complex_beam_parameter(&self, k: f64) -> Complex64 {
        Complex64::new(0.5 / (self.sigma_z * self.sigma_z), 0.0) - Complex64::new(0.0, k) * self.q_inv
    }
}

pub fn beam_geometry(z: f64, geom: &ExperimentGeometry) -> BeamGeometry {
    let b = geom.b;
    BeamGeometry {
        sigma_z: geom.sigma0 * (1.0 + (z / b).powi(2)).sqrt(),
        gouy: z.atan2(b),
        q_inv: Complex64::new(z / (z * z + b * b), 0.0),
    }
}

/// `exp(-i P^2 z / (2k))` on the given space.
pub fn propagation_unitary(z: f64, geom: &ExperimentGeometry, space: FockSpace) -> OperatorMatrix {
    let (p, _) = quadrature_operators(space);
    let p2 = p.matmul(&p).expect("same space");
    p2.evolution(z / (2.0 * geom.k))
}

/// Closed-form `(P(z), X(z)) = (P, X - (z/k) P)`.
pub fn heisenberg_quadratures(z: f64, geom: &ExperimentGeometry, space: FockSpace) -> (OperatorMatrix, OperatorMatrix) {
    let (p, x) = quadrature_operators(space);
    let xz = x.sub(&p.scale_real(z / geom.k)).expect("same space");
    (p, xz)
}

fn leading_block(m: &Array2<Complex64>, dim: usize) -> Array2<Complex64> {
    m.slice(s![..dim, ..dim]).to_owned()
}

/// `max |a - b| / max(1, max |b|)`.
fn relative_max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// Runs `defect(working_space)` with growing padding until two successive
/// working dimensions agree.
fn converge_padding<F>(dim: usize, sigma0: f64, defect: F) -> Result<(f64, usize)>
where
    F: Fn(FockSpace) -> Result<f64>,
{
    let mut working = MIN_WORKING_DIM.max(4 * dim);
    let mut previous = defect(FockSpace::new(working, sigma0)?)?;
    loop {
        working += PADDING_STEP;
        let current = defect(FockSpace::new(working, sigma0)?)?;
        if (current - previous).abs() < PADDING_CONVERGENCE || working >= MAX_WORKING_DIM {
            return Ok((current, working));
        }
        previous = current;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// Relative defect on the leading block, evaluated in a padded space.
    pub defect: f64,
    /// The same defect evaluated directly in the requested dimension.
    pub unpadded_defect: f64,
    pub working_dim: usize,
}

/// Checks `U(z) P U^dagger(z) = P` and `U(z) X U^dagger(z) = X - (z/k) P` on
/// the leading `dim x dim` block. Position entries are measured in units of
/// `sigma0` and momentum entries in units of `1/(2 sigma0)`.
pub fn heisenberg_conjugation_check(z: f64, geom: &ExperimentGeometry, dim: usize) -> Result<IdentityCheck> {
    let sigma0 = geom.sigma0;
    let defect_in = |space: FockSpace| -> Result<f64> {
        let u = propagation_unitary(z, geom, space);
        let ud = u.dagger();
        let (p, x) = quadrature_operators(space);
        let (pz, xz) = heisenberg_quadratures(z, geom, space);
        let conj_p = u.matmul(&p)?.matmul(&ud)?;
        let conj_x = u.matmul(&x)?.matmul(&ud)?;
        let block = dim.min(space.dim());
        let p_scale = 2.0 * sigma0;
        let x_scale = 1.0 / sigma0;
        let dp = relative_max_diff(
            &leading_block(conj_p.entries(), block).mapv(|v| v * p_scale),
            &leading_block(pz.entries(), block).mapv(|v| v * p_scale),
        );
        let dx = relative_max_diff(
            &leading_block(conj_x.entries(), block).mapv(|v| v * x_scale),
            &leading_block(xz.entries(), block).mapv(|v| v * x_scale),
        );
        Ok(dp.max(dx))
    };
    let unpadded = defect_in(FockSpace::new(dim, sigma0)?)?;
    let (defect, working_dim) = converge_padding(dim, sigma0, defect_in)?;
    Ok(IdentityCheck { defect, unpadded_defect: unpadded, working_dim })
}

/// `(g1, g2) = (d + z1 phi, k phi)`.
pub fn experiment_params(d: f64, phi: f64, geom: &ExperimentGeometry) -> (f64, f64) {
    (d + geom.z1 * phi, geom.k * phi)
}

/// `(d, phi) = (g1 - (z1/k) g2, g2 / k)`.
pub fn experiment_params_inverse(g1: f64, g2: f64, geom: &ExperimentGeometry) -> (f64, f64) {
    (g1 - geom.z1 / geom.k * g2, g2 / geom.k)
}

/// Joint operator `sum_k |k><k| (x) E_k` from per-eigenvalue pointer blocks,
/// with the system index slow.
fn joint_from_blocks(scheme: &WeakScheme, blocks: &[Array2<Complex64>; 2]) -> Array2<Complex64> {
    let dim = blocks[0].nrows();
    let eig = scheme.system_op.eigen();
    let mut joint = Array2::zeros((2 * dim, 2 * dim));
    for (k, (_, vec)) in eig.iter().enumerate() {
        let v = vec.amplitudes();
        for s in 0..2 {
            for t in 0..2 {
                let w = v[s] * v[t].conj();
                if w.norm() == 0.0 {
                    continue;
                }
                let mut target = joint.slice_mut(s![s * dim..(s + 1) * dim, t * dim..(t + 1) * dim]);
                target.zip_mut_with(&blocks[k], |a, b| *a += w * b);
            }
        }
    }
    joint
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// `max |LHS - RHS|` of the joint operators on the leading block.
    pub defect: f64,
    pub unpadded_defect: f64,
    pub working_dim: usize,
    /// `|| U(z0)|psi_f> - |u_f(z0)> ||` for the first-order pointers.
    pub propagated_state_defect: f64,
    /// Largest difference between projection probabilities computed at the
    /// waist and with propagated projector states.
    pub projection_defect: f64,
}

/// Checks `U(z2) U_w U^dagger(z2) = exp(-i (g1 P(z0) + g2 X(z0)) (x) A)`,
/// where the mirror applies `U_w = exp(-i (d P + k phi X) (x) A)` and
/// `(d, phi)` follow from the scheme couplings by the inverse mapping.
///
/// Also checks that the experiment-frame first-order pointer equals the
/// propagated waist-frame pointer, and that projection probabilities are
/// the same in both frames.
pub fn experiment_unitary_equivalence(scheme: &WeakScheme, geom: &ExperimentGeometry) -> Result<EquivalenceReport> {
    let dim = scheme.space.dim();
    let sigma0 = scheme.sigma0();
    if (sigma0 - geom.sigma0).abs() > 1e-15 * sigma0 {
        return Err(QmetError::Precondition("scheme and geometry disagree on sigma0".into()));
    }
    let (d, phi) = experiment_params_inverse(scheme.g1, scheme.g2, geom);
    let eig = scheme.system_op.eigen();

    let defect_in = |space: FockSpace| -> Result<f64> {
        let (p, x) = quadrature_operators(space);
        let u2 = propagation_unitary(geom.z2, geom, space);
        let mirror = p.scale_real(d).add(&x.scale_real(geom.k * phi))?;
        let (p0, x0) = heisenberg_quadratures(geom.z0, geom, space);
        let lab = p0.scale_real(scheme.g1).add(&x0.scale_real(scheme.g2))?;
        let block = dim.min(space.dim());
        let mut lhs_blocks = [Array2::zeros((block, block)), Array2::zeros((block, block))];
        let mut rhs_blocks = lhs_blocks.clone();
        for (k, (lambda, _)) in eig.iter().enumerate() {
            let lhs = u2.matmul(&mirror.evolution(*lambda))?.matmul(&u2.dagger())?;
            lhs_blocks[k] = leading_block(lhs.entries(), block);
            rhs_blocks[k] = leading_block(lab.evolution(*lambda).entries(), block);
        }
        let lhs = joint_from_blocks(scheme, &lhs_blocks);
        let rhs = joint_from_blocks(scheme, &rhs_blocks);
        Ok(lhs.iter().zip(rhs.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    };
    let unpadded_defect = defect_in(scheme.space)?;
    let (defect, working_dim) = converge_padding(dim, sigma0, defect_in)?;

    // frame consistency of the first-order pointer and projection probabilities
    let working = FockSpace::new(working_dim, sigma0)?;
    let n = scheme.n;
    let aw = scheme.weak_value()?.value;
    let probe = fock_state(working, n)?;
    let (p, x) = quadrature_operators(working);
    let waist_pointer = probe.sub(
        &p.scale_real(scheme.g1).add(&x.scale_real(scheme.g2))?.apply(&probe)?.scale(Complex64::new(0.0, 1.0) * aw),
    )?;
    let u0 = propagation_unitary(geom.z0, geom, working);
    let propagated = u0.apply(&waist_pointer)?;
    let (p0, x0) = heisenberg_quadratures(geom.z0, geom, working);
    let mode_z0 = u0.apply(&probe)?;
    let lab_pointer = mode_z0.sub(
        &p0.scale_real(scheme.g1)
            .add(&x0.scale_real(scheme.g2))?
            .apply(&mode_z0)?
            .scale(Complex64::new(0.0, 1.0) * aw),
    )?;
    let propagated_state_defect = propagated.distance(&lab_pointer)?;

    let mut projection_defect: f64 = 0.0;
    if n >= 1 {
        let (x_perp, p_perp) = crate::weak::orthogonal_projector_states(n, working)?;
        for proj in [x_perp, p_perp] {
            let waist = crate::weak::projection_probability(&waist_pointer, &proj)?;
            let lab = crate::weak::projection_probability(&lab_pointer, &u0.apply(&proj)?)?;
            projection_defect = projection_defect.max((waist - lab).abs());
        }
    }

    Ok(EquivalenceReport { defect, unpadded_defect, working_dim, propagated_state_defect, projection_defect })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinDetectable {
    /// Meters.
    pub g1: f64,
    /// Inverse meters.
    pub g2: f64,
    /// Meters.
    pub d: f64,
    /// Radians.
    pub phi: f64,
}

/// Shot-noise-limited minimum detectable couplings and mirror motions for
/// mode `n`, `nu` detected samples and post-selection angle `epsilon`
/// (small-angle weak value `1/epsilon`).
pub fn min_detectable_displacement_tilt(
    n: usize,
    nu: f64,
    epsilon: f64,
    sigma0: f64,
    geom: &ExperimentGeometry,
) -> Result<MinDetectable> {
    if n == 0 {
        return Err(QmetError::Degenerate("projection readout needs n >= 1".into()));
    }
    if !(nu > 0.0) {
        return Err(QmetError::Domain(format!("sample number must be positive, got {nu}")));
    }
    let nf = n as f64;
    let root = ((2.0 * nf + 1.0) * epsilon * epsilon / (nf * (nf + 1.0) * nu)).sqrt();
    let g1 = root * sigma0 / 2.0;
    let g2 = root / (4.0 * sigma0);
    let d = (g1 * g1 + (geom.z1 / geom.k * g2).powi(2)).sqrt();
    Ok(MinDetectable { g1, g2, d, phi: g2 / geom.k })
}

/// Closed-form propagated mode `u_n(x, z)`: the Hermite-Gaussian of width
/// `sigma(z)` times the curvature phase `exp(i k x^2 / (2q))` and the Gouy
/// phase `exp(-i (n + 1/2) chi)`.
pub fn propagated_mode(n: usize, x: f64, z: f64, geom: &ExperimentGeometry) -> Complex64 {
    let bg = beam_geometry(z, geom);
    let profile = hermite_wavefunctions(n, bg.sigma_z, x)[n];
    let phase = 0.5 * geom.k * x * x * bg.q_inv.re - (n as f64 + 0.5) * bg.gouy;
    Complex64::from_polar(profile, phase)
}

/// `max_x |<x|U(z)|n> - u_n(x, z)| / max_x |u_n(x, z)|` on a grid covering the
/// propagated mode, with `U(z)|n>` computed in a space of dimension `dim`.
pub fn gouy_phase_defect(n: usize, z: f64, geom: &ExperimentGeometry, dim: usize) -> Result<f64> {
    let space = FockSpace::new(dim, geom.sigma0)?;
    let state = propagation_unitary(z, geom, space).apply(&fock_state(space, n)?)?;
    let sigma_z = beam_geometry(z, geom).sigma_z;
    let half = 6.0 * ((2 * n + 1) as f64).sqrt() * sigma_z;
    let count = 400;
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..=count {
        let x = -half + 2.0 * half * i as f64 / count as f64;
        let expected = propagated_mode(n, x, z, geom);
        let got = position_wavefunction(&state, x);
        worst = worst.max((got - expected).norm());
        peak = peak.max(expected.norm());
    }
    Ok(worst / peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lab() -> ExperimentGeometry {
        ExperimentGeometry::from_wave_number(8.06e6, 120e-6, -0.272, 0.64).unwrap()
    }

    #[test]
    fn geometry_invariants() {
        let g = lab();
        assert_relative_eq!(g.k, 2.0 * std::f64::consts::PI / g.wavelength, max_relative = 1e-12);
        assert_eq!(g.z0, g.z1 + g.z2);
        assert_relative_eq!(g.b, 0.232_13, epsilon = 1e-5);
        assert!(ExperimentGeometry::from_wave_number(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ExperimentGeometry::from_wavelength(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn beam_at_waist_and_rayleigh_range() {
        let g = lab();
        let w = beam_geometry(0.0, &g);
        assert_eq!(w.sigma_z, g.sigma0);
        assert_eq!(w.gouy, 0.0);
        let r = beam_geometry(g.b, &g);
        assert_relative_eq!(r.sigma_z, 2f64.sqrt() * g.sigma0, max_relative = 1e-14);
        assert_relative_eq!(r.gouy, std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
    }

    #[test]
    fn complex_beam_parameter_identity() {
        let g = lab();
        for z in [-0.5, -0.1, 0.0, 0.3, 0.64, 2.0] {
            let bg = beam_geometry(z, &g);
            let lhs = bg.complex_beam_parameter(g.k);
            let rhs = Complex64::new(g.k, 0.0) / Complex64::new(g.b, z);
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm());
            assert!((bg.gouy.tan() - z / g.b).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_at_zero() {
        let g = lab();
        let space = FockSpace::new(10, g.sigma0).unwrap();
        let u = propagation_unitary(0.0, &g, space);
        assert!(u.max_abs_diff_on(&OperatorMatrix::identity(space), 10).unwrap() < 1e-15);
        let (pz, xz) = heisenberg_quadratures(0.0, &g, space);
        let (p, x) = quadrature_operators(space);
        assert_eq!(pz, p);
        assert_eq!(xz, x);
    }

    #[test]
    fn heisenberg_commutator_is_canonical() {
        let g = lab();
        let space = FockSpace::new(20, g.sigma0).unwrap();
        let (pz, xz) = heisenberg_quadratures(0.64, &g, space);
        let comm = xz.commutator(&pz).unwrap();
        let target = OperatorMatrix::identity(space).scale(Complex64::new(0.0, 1.0));
        assert!(comm.max_abs_diff_on(&target, space.safe_levels()).unwrap() < 1e-10);
    }

    #[test]
    fn group_law() {
        let g = lab();
        let space = FockSpace::new(30, g.sigma0).unwrap();
        let a = propagation_unitary(0.3, &g, space);
        let b = propagation_unitary(-0.7, &g, space);
        let ab = propagation_unitary(-0.4, &g, space);
        assert!(a.matmul(&b).unwrap().max_abs_diff_on(&ab, space.safe_levels()).unwrap() < 1e-10);
    }

    #[test]
    fn params_round_trip() {
        let g = lab();
        let (g1, g2) = experiment_params(15.55e-9, 0.0, &g);
        assert_eq!((g1, g2), (15.55e-9, 0.0));
        let (d, phi) = experiment_params_inverse(3e-9, 0.04, &g);
        let (h1, h2) = experiment_params(d, phi, &g);
        assert_relative_eq!(h1, 3e-9, max_relative = 1e-12);
        assert_relative_eq!(h2, 0.04, max_relative = 1e-12);
    }

    #[test]
    fn min_detectable_values() {
        let g = lab();
        let eps = 5f64.to_radians();
        let m = min_detectable_displacement_tilt(5, 1.05e7, eps, 120e-6, &g).unwrap();
        assert_relative_eq!(m.g1, 0.978e-9, max_relative = 2e-3);
        assert_relative_eq!(m.g2, 0.0340, max_relative = 3e-3);
        assert_relative_eq!(m.d, 1.51e-9, max_relative = 5e-3);
        assert_relative_eq!(m.phi, 4.21e-9, max_relative = 5e-3);
        let closed = (1.0 + (g.z1 / g.b).powi(2)).sqrt() * m.g1;
        assert_relative_eq!(m.d, closed, max_relative = 1e-12);
        assert!(matches!(min_detectable_displacement_tilt(0, 1.0, eps, 1.0, &g), Err(QmetError::Degenerate(_))));
    }

    #[test]
    fn conjugation_identity_in_padded_space() {
        let g = lab();
        let check = heisenberg_conjugation_check(0.05, &g, 12).unwrap();
        assert!(check.defect < 1e-9, "{check:?}");
    }

    #[test]
    fn equivalence_without_second_leg_is_exact() {
        let g = ExperimentGeometry::from_wave_number(8.06e6, 120e-6, 0.0, 0.0).unwrap();
        let scheme = WeakScheme::standard(2, 120e-6, 5f64.to_radians(), 1e-9, 0.02).unwrap();
        let report = experiment_unitary_equivalence(&scheme, &g).unwrap();
        assert!(report.defect < 1e-12, "{report:?}");
        assert!(report.unpadded_defect < 1e-12);
        assert!(report.projection_defect < 1e-9);
    }

    #[test]
    fn gouy_closed_form_matches_propagation() {
        let g = lab();
        for n in [0, 1, 3] {
            let defect = gouy_phase_defect(n, 0.2 * g.b, &g, 60).unwrap();
            assert!(defect < 1e-8, "n={n} defect {defect}");
        }
    }
}

