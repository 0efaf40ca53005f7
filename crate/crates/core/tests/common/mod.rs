#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use barrier_core::config::ProjectConfig;
use barrier_core::estimator::{design_bz, EstimatorDesign};
use barrier_core::model::{SafetySpec, UncertainPlant};
use barrier_core::synthesis::{synthesize, BarrierPair};

pub fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mass_spring.toml")
}

pub struct Fixture {
    pub config: ProjectConfig,
    pub plant: UncertainPlant,
    pub spec: SafetySpec,
    pub pair: BarrierPair,
    pub design: EstimatorDesign,
}

/// The bundled mass-spring design, synthesized once per test binary.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = ProjectConfig::load(config_path()).expect("bundled config loads");
        let plant = config.plant().unwrap();
        let spec = config.safety.clone();
        let pair = synthesize(&plant, &spec, &config.synthesis_options()).expect("synthesis");
        let design = design_bz(&pair.x, plant.w_bar, &config.estimator_options()).expect("design");
        Fixture {
            config,
            plant,
            spec,
            pair,
            design,
        }
    })
}

use barrier_core::estimator::{e_from_controllability, estimate_at, filter_rates, EstimatorState};
use barrier_core::linalg::rk4_step;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth bounded test signal: a sum of three random sinusoids.
#[derive(Debug, Clone)]
pub struct MultiSine(Vec<(f64, f64, f64)>);

impl MultiSine {
    pub fn random(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        Self(
            (0..3)
                .map(|_| {
                    (
                        amplitude * rng.random_range(0.1..1.0),
                        rng.random_range(0.05..2.0) * std::f64::consts::TAU,
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect(),
        )
    }

    pub fn at(&self, t: f64) -> f64 {
        self.0.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
    }
}

/// Largest `‖x_p − x̂_p(δ)‖∞` over a disturbance-free run of the true plant
/// at a random `δ` driven by a random input, integrated jointly with the
/// estimator filters from zero initial state.
pub fn exactness_error(
    plant: &UncertainPlant,
    design: &EstimatorDesign,
    seed: u64,
    duration: f64,
    dt: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = plant.n;
    let delta: Vec<f64> = (0..plant.n_p())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let input = MultiSine::random(&mut rng, 5.0);
    let (b_y, b_u) = plant.parameters_at(&delta);
    let mut state = vec![0.0; n + EstimatorState::flat_len(n)];
    let steps = (duration / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let est = EstimatorState::from_flat(n, &state[n..], t);
        let x_hat = estimate_at(&est, plant, design, &delta);
        let x_p = DVector::from_column_slice(&state[..n]);
        worst = worst.max((x_p - x_hat).amax());
        state = rk4_step(&state, dt, |off, s, out| {
            let u = input.at(t + off);
            let y = s[n - 1];
            for i in 0..n {
                let shift = if i == 0 { 0.0 } else { s[i - 1] };
                out[i] = shift + b_y[i] * y + b_u[i] * u;
            }
            filter_rates(&design.a_z, &s[n..], y, u, &mut out[n..]);
        });
    }
    worst
}

/// Monic polynomial coefficients (ascending, without the leading 1) with
/// the given roots.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c.pop();
    c
}

/// Largest deviation between the integrated `E_y`, `E_u` and the
/// controllability-matrix formula over a run with random bounded `(y, u)`
/// and a random stabilizing `b_z`.
pub fn e_matrix_deviation(n: usize, seed: u64, duration: f64, dt: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots: Vec<f64> = (0..n).map(|_| -rng.random_range(0.3..3.0)).collect();
    let b_z = DVector::from_vec(poly_from_roots(&roots));
    let design = EstimatorDesign::from_gain(b_z, 0.0, 1.0);
    let y = MultiSine::random(&mut rng, 2.0);
    let u = MultiSine::random(&mut rng, 2.0);
    let mut state = EstimatorState::zeros(n);
    let steps = (duration / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 0..=steps {
        let e_y = e_from_controllability(&design.a_z, &state.z_y).unwrap();
        let e_u = e_from_controllability(&design.a_z, &state.z_u).unwrap();
        worst = worst
            .max((e_y - &state.e_y).amax())
            .max((e_u - &state.e_u).amax());
        let t = k as f64 * dt;
        state = barrier_core::estimator::step(&state, y.at(t), u.at(t), &design, dt);
    }
    worst
}
