//! Property tests for the algebraic, estimation, weak-measurement, Fisher,
//! propagation and shot-noise invariants.

use ndarray::Array1;
use num_complex::Complex64;
use proptest::prelude::*;

use qmet_core::beam::{
    experiment_params, experiment_params_inverse, heisenberg_conjugation_check, min_detectable_displacement_tilt,
    propagation_unitary, ExperimentGeometry,
};
use qmet_core::config::ExperimentConfig;
use qmet_core::estimation::{
    holevo_tradeoff_tangency, holevo_y, qfi_fidelity_oracle, quantum_geometry, tradeoff_curve, tradeoff_endpoints,
    GeneratorPair, TradeoffBound,
};
use qmet_core::fisher::{cfim_numeric, nonorthogonal_povms, Cfim};
use qmet_core::fock::{
    commutator_expectation, expectation, fock_state, hermite_wavefunction, position_wavefunction,
    quadrature_operators, variance, FockSpace, PointerState,
};
use qmet_core::shot_noise::{Channel, SignalModel};
use qmet_core::weak::{
    final_pointer_exact, orthogonal_projector_states, projection_probability, projection_probability_first_order,
    scheme_geometry, NormalizedParams, WeakScheme,
};

const SIGMA0: f64 = 120e-6;
const K: f64 = 8.06e6;
const Z1: f64 = -0.272;
const Z2: f64 = 0.64;
const EPS5: f64 = 5.0 * std::f64::consts::PI / 180.0;

fn geometry() -> ExperimentGeometry {
    ExperimentGeometry::from_wave_number(K, SIGMA0, Z1, Z2).unwrap()
}

/// Normalized state from raw (re, im) pairs on the leading levels of `space`.
fn state_from(space: FockSpace, raw: &[(f64, f64)]) -> Option<PointerState> {
    let mut amps = Array1::zeros(space.dim());
    for (level, &(re, im)) in raw.iter().enumerate() {
        amps[level] = Complex64::new(re, im);
    }
    let norm: f64 = amps.iter().map(|z: &Complex64| z.norm_sqr()).sum();
    if norm < 1e-6 {
        return None;
    }
    PointerState::new(space, amps).ok()?.normalize().ok()
}

fn amplitudes(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
}

fn normalized_scheme(n: usize, epsilon: f64, g: (f64, f64)) -> WeakScheme {
    WeakScheme::from_normalized(n, SIGMA0, epsilon, NormalizedParams { g1_tilde: g.0, g2_tilde: g.1 }).unwrap()
}

fn exact_projections(n: usize, g: (f64, f64)) -> (f64, f64) {
    let scheme = normalized_scheme(n, EPS5, g);
    let pointer = final_pointer_exact(&scheme).unwrap().pointer;
    let (pi1, pi2) = orthogonal_projector_states(n, scheme.space).unwrap();
    (projection_probability(&pointer, &pi1).unwrap(), projection_probability(&pointer, &pi2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heisenberg_product_bounds_commutator(raw in amplitudes(10), sigma0 in 1e-5..1e-2f64) {
        let space = FockSpace::new(12, sigma0).unwrap();
        if let Some(state) = state_from(space, &raw) {
            let (p, x) = quadrature_operators(space);
            let product = variance(&p, &state).unwrap() * variance(&x, &state).unwrap();
            let bound = commutator_expectation(&p, &x, &state).unwrap().norm_sqr() / 4.0;
            prop_assert!(product >= bound - 1e-10 * bound.max(1.0), "product {product} bound {bound}");
        }
    }

    #[test]
    fn fock_state_variances_and_parity(n in 0usize..20, sigma0 in 1e-5..1e-2f64) {
        let space = FockSpace::new(n + 6, sigma0).unwrap();
        let state = fock_state(space, n).unwrap();
        let (p, x) = quadrature_operators(space);
        let m = (2 * n + 1) as f64;
        let product = variance(&p, &state).unwrap() * variance(&x, &state).unwrap();
        prop_assert!((product - m * m / 4.0).abs() <= 1e-10 * m * m);
        prop_assert!(expectation(&p, &state).unwrap().norm() * sigma0 < 1e-12);
        prop_assert!(expectation(&x, &state).unwrap().norm() / sigma0 < 1e-12);
    }

    #[test]
    fn hermite_matches_position_expansion(n in 0usize..30, xi in -8.0..8.0f64) {
        let space = FockSpace::new(n + 6, SIGMA0).unwrap();
        let state = fock_state(space, n).unwrap();
        let x = xi * SIGMA0;
        let direct = hermite_wavefunction(n, SIGMA0, x);
        let expanded = position_wavefunction(&state, x);
        let scale = SIGMA0.sqrt();
        prop_assert!((expanded - direct).norm() * scale < 1e-8);
    }

    #[test]
    fn incompatibility_criterion_at_least_one(raw in amplitudes(8)) {
        let space = FockSpace::new(12, 1.0).unwrap();
        if let Some(state) = state_from(space, &raw) {
            let (p, x) = quadrature_operators(space);
            let geometry = quantum_geometry(&GeneratorPair::new(p, x, state).unwrap()).unwrap();
            prop_assert!(geometry.qmec >= 1.0 - 1e-9, "qmec {}", geometry.qmec);
            let from_metric = geometry.qmec_from_metric();
            prop_assert!((from_metric - geometry.qmec).abs() <= 1e-9 * geometry.qmec);
        }
    }

    #[test]
    fn holevo_never_exceeds_tradeoff(n in 1usize..8, frac in 0.0..1.0f64) {
        let bound = TradeoffBound::for_mode(n);
        let s = bound.s();
        let c_tilde = 1.0 / s.sqrt();
        let tangency = holevo_tradeoff_tangency(s).unwrap();
        let a = bound.a_min() + frac * (1.0 - bound.a_min());
        if let Some(point) = bound.point(a) {
            if let Some(y_holevo) = holevo_y(c_tilde, point.x).unwrap() {
                prop_assert!(y_holevo <= point.y + 1e-9, "x {} holevo {y_holevo} tradeoff {}", point.x, point.y);
                if (point.x - tangency.at.x).abs() > 1e-3 {
                    prop_assert!(y_holevo < point.y);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qfi_matches_fidelity_oracle(raw in amplitudes(6), g in -0.5..0.5f64) {
        let space = FockSpace::new(12, 0.5).unwrap();
        if let Some(probe) = state_from(space, &raw) {
            let (p, x) = quadrature_operators(space);
            let geometry = quantum_geometry(&GeneratorPair::new(p.clone(), x, probe.clone()).unwrap()).unwrap();
            let family = |t: f64| p.evolution(t).apply(&probe);
            let oracle = qfi_fidelity_oracle(family, g, 1e-4).unwrap();
            let q11 = geometry.qfim[0][0];
            prop_assume!(q11 > 1e-3);
            prop_assert!((oracle - q11).abs() <= 1e-3 * q11, "oracle {oracle} qfim {q11}");
        }
    }

    #[test]
    fn criterion_independent_of_postselection(n in 1usize..8, g in 1e-4..5e-3f64) {
        let reference = scheme_geometry(&normalized_scheme(n, EPS5, (g, g))).unwrap().qmec;
        for degrees in [2.0f64, 20.0] {
            let other = scheme_geometry(&normalized_scheme(n, degrees.to_radians(), (g, g))).unwrap().qmec;
            prop_assert!((other - reference).abs() <= 1e-10 * reference);
        }
        let m = (2 * n + 1) as f64;
        prop_assert!((reference - m * m).abs() <= 1e-9 * m * m);
    }

    #[test]
    fn joint_evolution_preserves_norm(n in 0usize..8, g1 in -5e-3..5e-3f64, g2 in -5e-3..5e-3f64, degrees in 1.0..30.0f64) {
        let scheme = normalized_scheme(n, degrees.to_radians(), (g1, g2));
        let exact = final_pointer_exact(&scheme).unwrap();
        prop_assert!((exact.joint_norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projections_invariant_under_propagation(raw_state in amplitudes(10), raw_proj in amplitudes(10), z in -1.0..1.0f64) {
        let space = FockSpace::new(16, SIGMA0).unwrap();
        if let (Some(state), Some(proj)) = (state_from(space, &raw_state), state_from(space, &raw_proj)) {
            let u = propagation_unitary(z, &geometry(), space);
            let before = projection_probability(&state, &proj).unwrap();
            let after = projection_probability(&u.apply(&state).unwrap(), &u.apply(&proj).unwrap()).unwrap();
            prop_assert!((after - before).abs() < 1e-9);
        }
    }

    #[test]
    fn mapping_linear_and_invertible(d in -1e-6..1e-6f64, phi in -1e-4..1e-4f64, s in -3.0..3.0f64, d2 in -1e-6..1e-6f64, phi2 in -1e-4..1e-4f64) {
        let geom = geometry();
        let (g1, g2) = experiment_params(d, phi, &geom);
        let (back_d, back_phi) = experiment_params_inverse(g1, g2, &geom);
        prop_assert!((back_d - d).abs() <= 1e-12 * (d.abs() + phi.abs() * Z1.abs()).max(1e-30));
        prop_assert!((back_phi - phi).abs() <= 1e-12 * phi.abs().max(1e-30));
        let (h1, h2) = experiment_params(s * d + d2, s * phi + phi2, &geom);
        let (a1, a2) = experiment_params(d2, phi2, &geom);
        prop_assert!((h1 - (s * g1 + a1)).abs() <= 1e-12 * (h1.abs() + g1.abs() + a1.abs() + 1e-30));
        prop_assert!((h2 - (s * g2 + a2)).abs() <= 1e-12 * (h2.abs() + g2.abs() + a2.abs() + 1e-30));
    }

    #[test]
    fn min_detectable_follows_linear_error_propagation(n in 1usize..10, nu in 1e5..1e9f64) {
        let geom = geometry();
        let md = min_detectable_displacement_tilt(n, nu, EPS5, SIGMA0, &geom).unwrap();
        let (d_from_g1, _) = experiment_params_inverse(md.g1, 0.0, &geom);
        let (d_from_g2, phi_from_g2) = experiment_params_inverse(0.0, md.g2, &geom);
        let expected_d = d_from_g1.hypot(d_from_g2);
        prop_assert!((md.d - expected_d).abs() <= 1e-12 * expected_d);
        prop_assert!((md.phi - phi_from_g2).abs() <= 1e-12 * phi_from_g2);
    }

    #[test]
    fn snr_independent_of_bias(n in 1usize..6, scale1 in 0.01..0.1f64, scale2 in 0.01..0.1f64) {
        let base = SignalModel::from_config(&ExperimentConfig::default(), n, 0.1).unwrap();
        let mut config = ExperimentConfig::default();
        config.bias_g1_tilde = scale1 * 0.1;
        config.bias_g2_tilde = scale2 * 0.1;
        let scaled = SignalModel::from_config(&config, n, 0.1).unwrap();
        for channel in [Channel::G1, Channel::G2] {
            let (a, b) = (base.analytic_snr(channel), scaled.analytic_snr(channel));
            prop_assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn config_text_round_trip(trials in 100usize..5000, seed in any::<u64>(), volts in 1e-3..1.0f64, n_max in 1usize..9) {
        let mut config = ExperimentConfig::default();
        config.trials = trials;
        config.seed = seed;
        config.drive_volts = volts;
        config.modes = (1..=n_max).collect();
        let parsed = ExperimentConfig::from_text(&config.to_text()).unwrap();
        prop_assert_eq!(parsed, config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn propagation_group_law(z1 in -1.0..1.0f64, z2 in -1.0..1.0f64) {
        let geom = geometry();
        let space = FockSpace::new(30, SIGMA0).unwrap();
        let joint = propagation_unitary(z1, &geom, space).matmul(&propagation_unitary(z2, &geom, space)).unwrap();
        let direct = propagation_unitary(z1 + z2, &geom, space);
        prop_assert!(joint.max_abs_diff_on(&direct, space.safe_levels()).unwrap() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn closed_form_equals_conjugation(z in -1.0..1.0f64) {
        let check = heisenberg_conjugation_check(z, &geometry(), 12).unwrap();
        prop_assert!(check.defect < 1e-10, "defect {}", check.defect);
    }
}

#[test]
fn endpoint_consistency() {
    for n in 1..8 {
        let s = ((2 * n + 1) as f64).powi(2);
        let curve = tradeoff_curve(s, 50).unwrap();
        let (_, right) = tradeoff_endpoints(n).unwrap();
        let at_one = curve.points.last().unwrap();
        assert!(at_one.distance(&right) < 1e-9, "n={n}: {at_one:?} vs {right:?}");
    }
}

#[test]
fn projection_residual_is_quadratic() {
    for n in 1..=5 {
        let residuals: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&g| {
                let (p1, p2) = exact_projections(n, (g, g));
                let first = projection_probability_first_order(n, g);
                ((p1 - first) / first).abs().max(((p2 - first) / first).abs())
            })
            .collect();
        for pair in residuals.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((3.0..5.0).contains(&ratio), "n={n}: residuals {residuals:?}");
        }
    }
}

#[test]
fn projectors_are_parameter_selective() {
    let h = 1e-6;
    for n in 1..=5 {
        for g in [4e-3, 2e-3, 1e-3] {
            let d1_own = (exact_projections(n, (g + h, 0.0)).0 - exact_projections(n, (g - h, 0.0)).0) / (2.0 * h);
            let d1_cross = (exact_projections(n, (g, h)).0 - exact_projections(n, (g, -h)).0) / (2.0 * h);
            let d2_own = (exact_projections(n, (0.0, g + h)).1 - exact_projections(n, (0.0, g - h)).1) / (2.0 * h);
            let d2_cross = (exact_projections(n, (h, g)).1 - exact_projections(n, (-h, g)).1) / (2.0 * h);
            assert!(d1_cross.abs() <= 2.0 * g * d1_own.abs(), "n={n} g={g}: {d1_cross} vs {d1_own}");
            assert!(d2_cross.abs() <= 2.0 * g * d2_own.abs(), "n={n} g={g}: {d2_cross} vs {d2_own}");
        }
    }
}

#[test]
fn cfim_numeric_converges_quadratically_in_step() {
    let n = 2;
    let g = (1e-2, 1e-2);
    let space = normalized_scheme(n, EPS5, g).space;
    let povms = nonorthogonal_povms(n, space).unwrap();
    let family = |a: f64, b: f64| Ok(final_pointer_exact(&normalized_scheme(n, EPS5, (a, b)))?.pointer);
    let at = |dg: f64| -> Cfim { cfim_numeric(&povms, family, g, dg).unwrap() };
    let reference = at(1e-4);
    let coarse = at(4e-3).relative_defect(&reference);
    let fine = at(2e-3).relative_defect(&reference);
    let ratio = coarse / fine;
    assert!((3.0..5.0).contains(&ratio), "coarse {coarse} fine {fine}");
}

#[test]
fn min_detectable_decreases_with_mode() {
    let geom = geometry();
    let values: Vec<_> = (1..=10).map(|n| min_detectable_displacement_tilt(n, 1.05e7, EPS5, SIGMA0, &geom).unwrap()).collect();
    for pair in values.windows(2) {
        assert!(pair[1].g1 < pair[0].g1);
        assert!(pair[1].g2 < pair[0].g2);
    }
}
