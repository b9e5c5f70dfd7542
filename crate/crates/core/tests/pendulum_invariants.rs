use std::f64::consts::{FRAC_PI_2, PI, TAU};

use approx::assert_relative_eq;
use hyperwalk::flows::walk;
use hyperwalk::pendulum::{
    choose_lambda, energy_drift_rate, exact_period_oracle, make_fields, measure_period,
    reversal_defect, walk_period, PendulumParams,
};

/// `4√(ℓ/g)·∫₀^{π/2} dφ/√(1 − k² sin²φ)` with `k = sin(a/2)`, by composite
/// Simpson's rule. Independent of the AGM route.
fn quadrature_period(a: f64, g: f64, length: f64) -> f64 {
    let k2 = (a / 2.0).sin().powi(2);
    let n = 20_000;
    let h = FRAC_PI_2 / n as f64;
    let f = |phi: f64| 1.0 / (1.0 - k2 * phi.sin().powi(2)).sqrt();
    let mut sum = f(0.0) + f(FRAC_PI_2);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    4.0 * (length / g).sqrt() * sum * h / 3.0
}

#[test]
fn agm_period_matches_quadrature() {
    for a in [0.01, 0.1, 0.5, 1.0, 2.0, 3.0] {
        for (g, l) in [(1.0, 1.0), (9.81, 0.5)] {
            let t = exact_period_oracle(a, g, l).unwrap();
            assert_relative_eq!(t, quadrature_period(a, g, l), max_relative = 1e-12);
        }
    }
}

#[test]
fn rotation_walk_keeps_modulus_and_period() {
    let params = PendulumParams::new(4.0, 1.0, 0.7).unwrap();
    let mesh = choose_lambda(params.omega(), 10_000).unwrap();
    let fields = make_fields(&params, mesh).unwrap();
    let traj = walk(&fields.rotation, params.initial_state(), 30_000, 1).unwrap();
    for s in &traj.samples {
        assert_relative_eq!(s.z.norm(), 0.7, max_relative = 1e-10);
    }
    let est = measure_period(&traj).unwrap();
    assert_relative_eq!(est.period, PI, max_relative = 1e-12);
}

#[test]
fn linear_walk_spirals_out_at_the_euler_rate() {
    let params = PendulumParams::new(1.0, 1.0, 0.2).unwrap();
    let mesh = 1e-3;
    let fields = make_fields(&params, mesh).unwrap();
    let traj = walk(&fields.linear, params.initial_state(), 10_000, 100).unwrap();
    for s in &traj.samples {
        let expected = 0.2 * (1.0 + mesh * mesh).powf(s.n as f64 / 2.0);
        assert_relative_eq!(s.z.norm(), expected, max_relative = 1e-12);
    }
}

#[test]
fn nonlinear_walk_gains_energy_at_order_mesh() {
    // Euler on a centre gains energy; the rate scales with λ
    let params = PendulumParams::new(1.0, 1.0, 0.3).unwrap();
    let rate = |n: u64| {
        let mesh = choose_lambda(1.0, n).unwrap();
        let fields = make_fields(&params, mesh).unwrap();
        let traj = walk(&fields.nonlinear, params.initial_state(), 4 * n, n / 100).unwrap();
        energy_drift_rate(&traj, 1.0)
    };
    let (coarse, fine) = (rate(10_000), rate(100_000));
    assert!(coarse > 0.0 && fine > 0.0);
    assert_relative_eq!(coarse / fine, 10.0, max_relative = 0.05);
}

#[test]
fn nonlinear_walk_is_nearly_time_reversible() {
    let params = PendulumParams::new(1.0, 1.0, 0.5).unwrap();
    let n = 10_000u64;
    let fields = make_fields(&params, choose_lambda(1.0, n).unwrap()).unwrap();
    let oracle = exact_period_oracle(0.5, 1.0, 1.0).unwrap();
    let steps = (oracle / fields.nonlinear.mesh()).round() as usize;
    let traj = walk(
        &fields.nonlinear,
        params.initial_state(),
        steps as u64 + 10,
        1,
    )
    .unwrap();
    let defect = reversal_defect(&traj, steps).unwrap();
    assert!(defect > 0.0 && defect < 0.5 * 0.05, "{defect}");
}

#[test]
fn nonlinear_period_converges_to_the_oracle() {
    let a = 0.4;
    let params = PendulumParams::new(1.0, 1.0, a).unwrap();
    let oracle = exact_period_oracle(a, 1.0, 1.0).unwrap();
    let gaps: Vec<f64> = [2_000u64, 4_000, 8_000]
        .iter()
        .map(|&n| {
            let fields = make_fields(&params, choose_lambda(1.0, n).unwrap()).unwrap();
            (walk_period(&fields.nonlinear, a, oracle, 2).unwrap().period - oracle).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[2] < 1e-3 * TAU);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(PendulumParams::new(0.0, 1.0, 0.1).is_err());
    assert!(PendulumParams::new(1.0, -1.0, 0.1).is_err());
    assert!(PendulumParams::new(1.0, 1.0, PI).is_err());
    assert!(PendulumParams::new(1.0, 1.0, f64::NAN).is_err());
    assert!(choose_lambda(1.0, 4).is_err());
    assert!(exact_period_oracle(0.0, 1.0, 1.0).is_err());
}
