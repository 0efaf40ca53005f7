mod common;

use barrier_core::estimator::EstimatorDesign;
use barrier_core::sim::{
    freq_response_ge, original_input, run, run_batch, worst_sine, Disturbance, OriginalController,
    Scenario, Trapezoid,
};
use barrier_core::supervisor::{replay, Mode, SupervisorConfig};
use common::fixture;
use nalgebra::{DMatrix, DVector};

fn scenario(name: &str) -> Scenario {
    let f = fixture();
    f.config.scenario(name, &f.pair, &f.design).unwrap()
}

#[test]
fn identical_scenarios_give_identical_traces() {
    let mut sc = scenario("main");
    sc.duration = 15.0;
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn equilibrium_stays_at_rest() {
    let sc = scenario("quiet");
    let trace = run(&sc).unwrap();
    for s in &trace.samples {
        assert!(s.x_p.iter().chain(s.x_k.iter()).all(|v| *v == 0.0));
        assert_eq!((s.u, s.b, s.mode), (0.0, 0.0, Mode::Original));
        assert_eq!(s.b_bar, sc.design.r_e);
    }
}

/// Disturbance-free loop that stays in the original mode.
fn smooth_loop(dt: f64) -> Vec<DVector<f64>> {
    let mut sc = scenario("main");
    sc.disturbance = Disturbance::Zero;
    sc.reference = Trapezoid {
        levels: vec![0.0, 0.3],
        ramp_rate: 0.25,
        dwell: 0.0,
        start: 0.0,
    };
    sc.duration = 2.0;
    sc.dt = dt;
    let trace = run(&sc).unwrap();
    assert!(trace.samples.iter().all(|s| s.mode == Mode::Original));
    trace.samples.into_iter().map(|s| s.x_p).collect()
}

#[test]
fn loop_integration_is_fourth_order() {
    let reference = smooth_loop(1e-5);
    let error = |dt: f64| {
        let coarse = smooth_loop(dt);
        let stride = (dt / 1e-5).round() as usize;
        coarse
            .iter()
            .enumerate()
            .map(|(k, x)| (x - &reference[k * stride]).amax())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (error(8e-3), error(4e-3), error(2e-3));
    let order_a = (e1 / e2).log2();
    let order_b = (e2 / e3).log2();
    assert!(
        order_a > 3.5 && order_b > 3.5,
        "orders {order_a}, {order_b} ({e1:e}, {e2:e}, {e3:e})"
    );
}

#[test]
fn mode_sequence_replays_from_b_bar() {
    let sc = scenario("main");
    let trace = run(&sc).unwrap();
    let b_bar: Vec<f64> = trace.samples.iter().map(|s| s.b_bar).collect();
    assert_eq!(
        replay(&b_bar, &sc.supervisor, Mode::Original),
        trace.modes()
    );
    assert!(trace.summary.engagements > 0);
}

#[test]
fn monotone_excursion_switches_twice() {
    let cfg = SupervisorConfig::default();
    let up = (0..=100).map(|i| i as f64 / 100.0);
    let down = (0..=100).rev().map(|i| i as f64 / 100.0);
    let modes = replay(&up.chain(down).collect::<Vec<_>>(), &cfg, Mode::Original);
    let switches = modes.windows(2).filter(|w| w[0] != w[1]).count();
    assert_eq!(switches, 2);
}

#[test]
fn main_scenario_is_safe_and_bounded() {
    let sc = scenario("main");
    let s = run(&sc).unwrap().summary;
    assert_eq!(s.violations(), 0);
    assert!(s.bounds_hold(), "{s:?}");
    assert!(s.engagements >= 1 && s.releases >= 1);
    // Every engagement is released again (finite-time return below ε̲).
    assert!(s.releases + 1 >= s.engagements);
    assert!(s.max_b_at_engagement < 1.0);
    assert!(s.max_b <= 1.0);
}

#[test]
fn randomized_runs_keep_certified_bounds() {
    let mut sc = scenario("main");
    sc.duration = 20.0;
    let report = run_batch(&sc, 12, 2024).unwrap();
    assert_eq!(report.bound_violations(), 0);
    for r in &report.runs {
        assert_eq!(r.summary.violations(), 0, "seed {}", r.seed);
        assert!(r.summary.max_b_at_engagement < 1.0);
        assert!(r.disturbance.amplitude() <= sc.plant.w_bar);
    }
    assert_eq!(report, run_batch(&sc, 12, 2024).unwrap());
}

#[test]
fn scalar_frequency_response() {
    let design = EstimatorDesign::from_gain(DVector::from_element(1, 2.0), 0.0, 1.0);
    let x = DMatrix::identity(1, 1);
    // A_z = −2, b_z = 2: |G(j2πf)| = 2 / sqrt(4 + (2πf)²)
    for f in [0.0, 0.1, 1.0, 10.0] {
        let w = std::f64::consts::TAU * f;
        let expected = 2.0 / (4.0 + w * w).sqrt();
        assert!((freq_response_ge(&x, &design, &[f])[0] - expected).abs() < 1e-12);
    }
    assert!(freq_response_ge(&x, &design, &[1e6])[0] < 1e-5);
    let (f_e, dist) = worst_sine(&x, &design, 0.1, (1e-3, 1e2)).unwrap();
    assert!((f_e - 1e-3).abs() < 1e-4);
    assert_eq!(dist.amplitude(), 0.1);
}

#[test]
fn original_input_examples() {
    let gains = OriginalController::default();
    assert_eq!(original_input(1.0, 1.0, 0.0, &gains), 0.0);
    assert!(original_input(1.0, 0.0, 0.0, &gains) > 0.0);
    let limited = OriginalController {
        u_limit: Some(2.0),
        ..gains
    };
    assert_eq!(original_input(100.0, 0.0, 0.0, &limited), 2.0);
}
