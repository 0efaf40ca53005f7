//! End-to-end acceptance suite on the bundled mass-spring configuration.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use barrier_core::config::ProjectConfig;
use barrier_core::estimator::design_bz;
use barrier_core::model::canonical_realization;
use barrier_core::sim::{freq_response_ge, run, run_batch, worst_sine};
use barrier_core::synthesis::{
    congruence_transform, invariance_matrix, q_form_matrix, synthesize, transform_controller,
    verify_barrier_pair,
};
use common::{config_path, e_matrix_deviation, exactness_error};
use nalgebra::DMatrix;

struct Outcome {
    passed: usize,
    failed: usize,
}

impl Outcome {
    fn report(&mut self, id: u32, title: &str, ok: bool, elapsed: Duration, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!(
            "{tag} [{id}] {title} ({:.2} s): {detail}",
            elapsed.as_secs_f64()
        );
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn main() -> ExitCode {
    let mut out = Outcome {
        passed: 0,
        failed: 0,
    };
    let config = ProjectConfig::load(config_path()).expect("bundled config loads");
    let plant = config.plant().unwrap();
    let spec = config.safety.clone();

    // 1. Synthesis and certificate margins.
    let (synth, t1) = timed(|| {
        let bp = synthesize(&plant, &spec, &config.synthesis_options())?;
        let report = verify_barrier_pair(&plant, &spec, &bp, config.synthesis.verify_tol)?;
        Ok::<_, barrier_core::Error>((bp, report))
    });
    let (pair, report) = match synth {
        Ok(v) => v,
        Err(e) => {
            out.report(1, "certified barrier pair", false, t1, e.to_string());
            println!("acceptance: cannot continue without a barrier pair");
            return ExitCode::FAILURE;
        }
    };
    let margins: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{}={:.3e}", c.name, c.margin))
        .collect();
    let ok = report.checks.len() == 4
        && report.checks.iter().all(|c| c.margin <= -1e-7)
        && t1 <= Duration::from_secs(60);
    out.report(1, "certified barrier pair", ok, t1, margins.join(", "));

    // 2. Estimator radius.
    let (design, t2) = timed(|| design_bz(&pair.x, plant.w_bar, &config.estimator_options()));
    let design = match design {
        Ok(d) => d,
        Err(e) => {
            out.report(2, "estimator radius", false, t2, e.to_string());
            println!("acceptance: cannot continue without an estimator");
            return ExitCode::FAILURE;
        }
    };
    let ok = (0.03..=0.07).contains(&design.r_e) && t2 <= Duration::from_secs(10);
    out.report(
        2,
        "estimator radius",
        ok,
        t2,
        format!("r_e = {:.5}, mu_e = {:.4e}", design.r_e, design.mu_e),
    );

    // 3. Frequency-response peak.
    let (peak, t3) = timed(|| {
        let (f_e, _) = worst_sine(
            &pair.x,
            &design,
            plant.w_bar,
            (config.freqresp.f_min, config.freqresp.f_max),
        )?;
        Ok::<_, barrier_core::Error>((f_e, freq_response_ge(&pair.x, &design, &[f_e])[0]))
    });
    match peak {
        Ok((f_e, mag)) => {
            let ok = (0.85..=1.35).contains(&mag)
                && (0.05..=0.15).contains(&f_e)
                && t3 <= Duration::from_secs(5);
            out.report(
                3,
                "error-channel peak",
                ok,
                t3,
                format!("peak = {mag:.4} at f_e = {f_e:.4} Hz"),
            );
        }
        Err(e) => out.report(3, "error-channel peak", false, t3, e.to_string()),
    }

    // 4 & 5. Main scenario and randomized batch.
    let scenario = config
        .scenario("main", &pair, &design)
        .expect("main scenario");
    let (main_run, t_main) = timed(|| run(&scenario));
    let (batch, t_batch) = timed(|| run_batch(&scenario, 100, 1));
    match (&main_run, &batch) {
        (Ok(trace), Ok(batch)) => {
            let s = &trace.summary;
            let ok = s.bounds_hold()
                && batch.bound_violations() == 0
                && t_batch <= Duration::from_secs(120);
            out.report(
                4,
                "certified bounds hold",
                ok,
                t_main + t_batch,
                format!(
                    "main: max(B - B_bar) = {:.3e}, max(|e|_X - r_e) = {:.3e}; batch of {}: {} runs violating, max(B - B_bar) = {:.3e}, max(|e|_X - r_e) = {:.3e}",
                    s.max_bound_gap,
                    s.max_residual_gap,
                    batch.runs.len(),
                    batch.bound_violations(),
                    batch.max_bound_gap(),
                    batch.max_residual_gap()
                ),
            );
            let ok = s.violations() == 0 && s.engagements >= 1 && s.releases >= 1;
            out.report(
                5,
                "safety enforcement",
                ok,
                t_main,
                format!(
                    "{} state and {} input violations, {} engagements, {} releases, max B = {:.4}",
                    s.state_violations, s.input_violations, s.engagements, s.releases, s.max_b
                ),
            );
        }
        (a, b) => {
            let msg = format!("{:?} / {:?}", a.as_ref().err(), b.as_ref().err());
            out.report(
                4,
                "certified bounds hold",
                false,
                t_main + t_batch,
                msg.clone(),
            );
            out.report(5, "safety enforcement", false, t_main, msg);
        }
    }

    // 6. Disturbance-free estimation is exact.
    let (worst, t6) = timed(|| {
        (0..10)
            .map(|seed| exactness_error(&plant, &design, seed, 10.0, 1e-4))
            .fold(0.0, f64::max)
    });
    out.report(
        6,
        "estimator exactness",
        worst <= 1e-6,
        t6,
        format!("max |x_p - x_hat| = {worst:.3e} over 10 runs"),
    );

    // 7. Integrated E matrices against the closed-form expression.
    let (dev, t7) = timed(|| {
        (0..10u64)
            .map(|seed| e_matrix_deviation(1 + (seed as usize % 4), seed, 10.0, 1e-3))
            .fold(0.0, f64::max)
    });
    out.report(
        7,
        "E-matrix equivalence",
        dev <= 1e-6,
        t7,
        format!("max deviation = {dev:.3e}"),
    );

    // 8. Algebraic round-trips.
    let (alg, t8) = timed(|| {
        let real = canonical_realization(&plant).unwrap();
        let n2 = 2 * pair.n();
        let pq = (&pair.p * pair.q_from_blocks() - DMatrix::identity(n2, n2)).amax();
        let tv = transform_controller(&real, &pair.x, &pair.y, &pair.v, &pair.w, &pair.controller);
        let efg = (&tv.e - &pair.transformed.e)
            .amax()
            .max((&tv.f - &pair.transformed.f).amax())
            .max((&tv.g - &pair.transformed.g).amax());
        let lin = invariance_matrix(
            &real,
            pair.epsilon,
            plant.w_bar,
            pair.mu_w,
            &pair.mu_p,
            &pair.transformed,
        );
        let t = congruence_transform(&pair, real.n_p());
        let cong =
            (lin - t.transpose() * q_form_matrix(&real, &pair, plant.w_bar).unwrap() * &t).amax();
        (pq, efg, cong)
    });
    let (pq, efg, cong) = alg;
    out.report(
        8,
        "algebraic round-trips",
        pq <= 1e-8 && efg <= 1e-8 && cong <= 1e-6,
        t8,
        format!("|PQ - I| = {pq:.3e}, |EFG| = {efg:.3e}, congruence = {cong:.3e}"),
    );

    println!("acceptance: {} passed, {} failed", out.passed, out.failed);
    if out.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
