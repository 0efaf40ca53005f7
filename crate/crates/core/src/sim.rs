//! Closed-loop simulation of the true plant with the supervisor, the
//! estimator and the safety controller, plus frequency analysis of the
//! estimation-error channel.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    barrier_upper_bound, estimate_at, filter_rates, vertex_estimates, EstimatorDesign,
    EstimatorState,
};
use crate::linalg::{rk4_step, sym_sqrt, weighted_norm};
use crate::model::{SafetySpec, UncertainPlant};
use crate::supervisor::{next_mode, Mode, SupervisorConfig};
use crate::synthesis::BarrierPair;

/// Exogenous signal `w(t)` added to the measured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Disturbance {
    Zero,
    Sinusoid {
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    Square {
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Uniform levels in `[−amplitude, amplitude]` held for `hold` seconds.
    RandomPiecewise {
        amplitude: f64,
        hold: f64,
        seed: u64,
    },
}

impl Disturbance {
    pub fn amplitude(&self) -> f64 {
        match self {
            Disturbance::Zero => 0.0,
            Disturbance::Sinusoid { amplitude, .. }
            | Disturbance::Square { amplitude, .. }
            | Disturbance::RandomPiecewise { amplitude, .. } => *amplitude,
        }
    }

    pub fn validate(&self, w_bar: f64) -> Result<()> {
        let a = self.amplitude();
        if !(a >= 0.0) || a > w_bar * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "disturbance amplitude {a} must lie in [0, w_bar = {w_bar}]"
            )));
        }
        match self {
            Disturbance::Sinusoid {
                frequency_hz,
                phase,
                ..
            }
            | Disturbance::Square {
                frequency_hz,
                phase,
                ..
            } if !(*frequency_hz >= 0.0 && frequency_hz.is_finite() && phase.is_finite()) => Err(
                Error::InvalidConfig("disturbance frequency must be finite and >= 0".into()),
            ),
            Disturbance::RandomPiecewise { hold, .. } if !(*hold > 0.0) => Err(
                Error::InvalidConfig("random disturbance hold must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Materializes the signal over `[0, duration]`.
    pub fn signal(&self, duration: f64) -> DisturbanceSignal {
        let levels = match self {
            Disturbance::RandomPiecewise {
                amplitude,
                hold,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let count = (duration / hold).ceil() as usize + 2;
                (0..count)
                    .map(|_| rng.random_range(-1.0..=1.0) * amplitude)
                    .collect()
            }
            _ => Vec::new(),
        };
        DisturbanceSignal {
            kind: self.clone(),
            levels,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DisturbanceSignal {
    kind: Disturbance,
    levels: Vec<f64>,
}

impl DisturbanceSignal {
    pub fn at(&self, t: f64) -> f64 {
        match &self.kind {
            Disturbance::Zero => 0.0,
            Disturbance::Sinusoid {
                amplitude,
                frequency_hz,
                phase,
            } => amplitude * (2.0 * PI * frequency_hz * t + phase).sin(),
            Disturbance::Square {
                amplitude,
                frequency_hz,
                phase,
            } => {
                if (2.0 * PI * frequency_hz * t + phase).sin() >= 0.0 {
                    *amplitude
                } else {
                    -amplitude
                }
            }
            Disturbance::RandomPiecewise { hold, .. } => {
                let k = ((t / hold).floor().max(0.0) as usize).min(self.levels.len() - 1);
                self.levels[k]
            }
        }
    }
}

/// Piecewise-linear reference visiting `levels` in order: starts at
/// `levels[0]`, waits `start`, then ramps to each next level at
/// `ramp_rate` and dwells there for `dwell` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    pub levels: Vec<f64>,
    pub ramp_rate: f64,
    pub dwell: f64,
    #[serde(default)]
    pub start: f64,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 2.5, 0.0],
            ramp_rate: 0.25,
            dwell: 20.0,
            start: 0.0,
        }
    }
}

impl Trapezoid {
    pub fn constant(level: f64) -> Self {
        Self {
            levels: vec![level],
            ramp_rate: 1.0,
            dwell: 0.0,
            start: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || !self.levels.iter().all(|l| l.is_finite()) {
            return Err(Error::InvalidConfig("reference needs finite levels".into()));
        }
        if !(self.ramp_rate > 0.0) || !(self.dwell >= 0.0) || !(self.start >= 0.0) {
            return Err(Error::InvalidConfig(
                "reference ramp rate must be positive, dwell and start nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Time at which the last level has been reached and dwelt on.
    pub fn total_time(&self) -> f64 {
        self.start
            + self
                .levels
                .windows(2)
                .map(|w| (w[1] - w[0]).abs() / self.ramp_rate + self.dwell)
                .sum::<f64>()
    }

    pub fn at(&self, t: f64) -> f64 {
        let mut t0 = self.start;
        if t <= t0 {
            return self.levels[0];
        }
        for w in self.levels.windows(2) {
            let ramp = (w[1] - w[0]).abs() / self.ramp_rate;
            if t < t0 + ramp {
                return w[0] + (w[1] - w[0]) * (t - t0) / ramp;
            }
            t0 += ramp + self.dwell;
            if t < t0 {
                return w[1];
            }
        }
        *self.levels.last().unwrap()
    }
}

/// PD tracking law `û = k_p e + k_d ė_f` with `e = r − y` and a first-order
/// derivative filter `ξ̇ = (e − ξ)/τ`, `ė_f = (e − ξ)/τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalController {
    pub kp: f64,
    pub kd: f64,
    pub tau: f64,
    /// Optional actuator saturation applied to `û`.
    #[serde(default)]
    pub u_limit: Option<f64>,
}

impl Default for OriginalController {
    fn default() -> Self {
        Self {
            kp: 4.0,
            kd: 1.0,
            tau: 0.05,
            u_limit: None,
        }
    }
}

impl OriginalController {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kd.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidConfig(
                "original controller gains must be finite and tau positive".into(),
            ));
        }
        if let Some(l) = self.u_limit {
            if !(l > 0.0) {
                return Err(Error::InvalidConfig("u_limit must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `û` from the reference, the measured output and the filter state `ξ`.
pub fn original_input(reference: f64, y: f64, xi: f64, gains: &OriginalController) -> f64 {
    let e = reference - y;
    let u = gains.kp * e + gains.kd * (e - xi) / gains.tau;
    match gains.u_limit {
        Some(l) => u.clamp(-l, l),
        None => u,
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: UncertainPlant,
    pub spec: SafetySpec,
    pub pair: BarrierPair,
    pub design: EstimatorDesign,
    pub supervisor: SupervisorConfig,
    pub delta_true: Vec<f64>,
    pub disturbance: Disturbance,
    pub reference: Trapezoid,
    pub original: OriginalController,
    pub duration: f64,
    pub dt: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.n;
        self.plant.validate()?;
        self.spec.validate(Some(n))?;
        if self.pair.n() != n || self.design.n() != n {
            return Err(Error::InvalidConfig(
                "barrier pair, estimator and plant orders differ".into(),
            ));
        }
        if self.delta_true.len() != self.plant.n_p()
            || self.delta_true.iter().any(|d| !(d.abs() <= 1.0))
        {
            return Err(Error::InvalidConfig(format!(
                "delta_true must have {} entries in [-1, 1]",
                self.plant.n_p()
            )));
        }
        self.supervisor.validate(self.pair.epsilon)?;
        self.disturbance.validate(self.plant.w_bar)?;
        self.reference.validate()?;
        self.original.validate()?;
        if !(self.dt > 0.0) || !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig(
                "dt must be positive and duration finite".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One recorded time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x_p: DVector<f64>,
    pub x_k: DVector<f64>,
    pub y: f64,
    pub u: f64,
    pub mode: Mode,
    pub b: f64,
    pub b_bar: f64,
    pub e_norm: f64,
    pub reference: f64,
}

/// Aggregate statistics of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub samples: usize,
    pub state_violations: usize,
    pub input_violations: usize,
    pub engagements: usize,
    pub releases: usize,
    pub max_b: f64,
    pub max_b_bar: f64,
    /// `max (B − B̄)`; must stay nonpositive.
    pub max_bound_gap: f64,
    pub max_e_norm: f64,
    /// `max (‖e‖_X − r_e)`; must stay nonpositive.
    pub max_residual_gap: f64,
    /// First time safety mode engaged.
    pub first_engagement: Option<f64>,
    /// Largest `B` at an instant safety mode engaged.
    pub max_b_at_engagement: f64,
}

impl TraceSummary {
    pub fn violations(&self) -> usize {
        self.state_violations + self.input_violations
    }

    pub fn bounds_hold(&self) -> bool {
        self.max_bound_gap <= 0.0 && self.max_residual_gap <= 0.0
    }
}

struct SummaryBuilder<'a> {
    spec: &'a SafetySpec,
    f: Vec<DVector<f64>>,
    r_e: f64,
    s: TraceSummary,
    prev: Option<Mode>,
}

impl<'a> SummaryBuilder<'a> {
    fn new(spec: &'a SafetySpec, r_e: f64) -> Self {
        Self {
            spec,
            f: spec.f_vectors(),
            r_e,
            s: TraceSummary {
                max_b: f64::NEG_INFINITY,
                max_b_bar: f64::NEG_INFINITY,
                max_bound_gap: f64::NEG_INFINITY,
                max_e_norm: f64::NEG_INFINITY,
                max_residual_gap: f64::NEG_INFINITY,
                ..Default::default()
            },
            prev: None,
        }
    }

    fn push(&mut self, x: &Sample) {
        let s = &mut self.s;
        s.samples += 1;
        if self.f.iter().any(|f| f.dot(&x.x_p).abs() > 1.0) {
            s.state_violations += 1;
        }
        if x.u.abs() > self.spec.u_bar {
            s.input_violations += 1;
        }
        match (self.prev, x.mode) {
            (Some(Mode::Original) | None, Mode::Safety) => {
                s.engagements += 1;
                s.first_engagement.get_or_insert(x.t);
                s.max_b_at_engagement = s.max_b_at_engagement.max(x.b);
            }
            (Some(Mode::Safety), Mode::Original) => s.releases += 1,
            _ => {}
        }
        self.prev = Some(x.mode);
        s.max_b = s.max_b.max(x.b);
        s.max_b_bar = s.max_b_bar.max(x.b_bar);
        s.max_bound_gap = s.max_bound_gap.max(x.b - x.b_bar);
        s.max_e_norm = s.max_e_norm.max(x.e_norm);
        s.max_residual_gap = s.max_residual_gap.max(x.e_norm - self.r_e);
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub samples: Vec<Sample>,
    pub summary: TraceSummary,
}

impl SimTrace {
    pub fn csv_header(n: usize) -> String {
        let mut h = String::from("t");
        for i in 1..=n {
            write!(h, ",x{i}").unwrap();
        }
        for i in 1..=n {
            write!(h, ",xk{i}").unwrap();
        }
        h.push_str(",y,u,mode,B,B_bar,e_norm,ref");
        h
    }

    /// Trace as CSV with full float precision.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.x_p.len());
        let mut out = Self::csv_header(n);
        out.push('\n');
        for s in &self.samples {
            write!(out, "{:?}", s.t).unwrap();
            for v in s.x_p.iter().chain(s.x_k.iter()) {
                write!(out, ",{v:?}").unwrap();
            }
            writeln!(
                out,
                ",{:?},{:?},{},{:?},{:?},{:?},{:?}",
                s.y,
                s.u,
                s.mode.code(),
                s.b,
                s.b_bar,
                s.e_norm,
                s.reference
            )
            .unwrap();
        }
        out
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.samples.iter().map(|s| s.mode).collect()
    }
}

/// Flat joint state: `[x_p | x_k | ξ | estimator filters]`.
struct Layout {
    n: usize,
}

impl Layout {
    fn xk(&self) -> usize {
        self.n
    }
    fn xi(&self) -> usize {
        2 * self.n
    }
    fn est(&self) -> usize {
        2 * self.n + 1
    }
    fn len(&self) -> usize {
        self.est() + EstimatorState::flat_len(self.n)
    }
}

fn simulate(scenario: &Scenario, mut record: impl FnMut(&Sample)) -> Result<()> {
    scenario.validate()?;
    let n = scenario.plant.n;
    let lay = Layout { n };
    let (b_y, b_u) = scenario.plant.parameters_at(&scenario.delta_true);
    let ctrl = &scenario.pair.controller;
    let design = &scenario.design;
    let dist = scenario.disturbance.signal(scenario.duration + scenario.dt);
    let reference = &scenario.reference;
    let tau = scenario.original.tau;

    let mut state: Vec<f64> = vec![0.0; lay.len()];
    let mut mode = Mode::Original;
    let steps = scenario.steps();
    let mut x_cl = DVector::zeros(2 * n);

    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t });
        }
        let x_p = DVector::from_column_slice(&state[..n]);
        let x_k = DVector::from_column_slice(&state[lay.xk()..lay.xk() + n]);
        let y = x_p[n - 1] + dist.at(t);
        let r = reference.at(t);
        let est = EstimatorState::from_flat(n, &state[lay.est()..], t);

        let vertices = vertex_estimates(&est, &scenario.plant, design)?;
        let b_bar = barrier_upper_bound(&vertices, &x_k, &scenario.pair.p, design.r_e);
        x_cl.rows_mut(0, n).copy_from(&x_p);
        x_cl.rows_mut(n, n).copy_from(&x_k);
        let b = weighted_norm(&scenario.pair.p, &x_cl);
        let err = &x_p - estimate_at(&est, &scenario.plant, design, &scenario.delta_true);
        let e_norm = weighted_norm(&scenario.pair.x, &err);

        mode = next_mode(mode, b_bar, &scenario.supervisor);
        // The mode is held over a step; the active input law is evaluated
        // at every stage so the loop keeps RK4 accuracy between switches.
        let input = |ts: f64, s: &[f64], y: f64| match mode {
            Mode::Safety => (0..n).map(|j| ctrl.c_k[j] * s[lay.xk() + j]).sum(),
            Mode::Original => original_input(reference.at(ts), y, s[lay.xi()], &scenario.original),
        };
        let u = input(t, &state, y);
        record(&Sample {
            t,
            x_p,
            x_k,
            y,
            u,
            mode,
            b,
            b_bar,
            e_norm,
            reference: r,
        });
        if k == steps {
            break;
        }

        state = rk4_step(&state, scenario.dt, |offset, s, out| {
            let ts = t + offset;
            let y = s[n - 1] + dist.at(ts);
            let u = input(ts, s, y);
            // x_p' = A₀ x_p + b_y y + b_u u
            for i in 0..n {
                let shift = if i == 0 { 0.0 } else { s[i - 1] };
                out[i] = shift + b_y[i] * y + b_u[i] * u;
            }
            let xk = &s[lay.xk()..lay.xk() + n];
            for i in 0..n {
                out[lay.xk() + i] =
                    (0..n).map(|j| ctrl.a_k[(i, j)] * xk[j]).sum::<f64>() + ctrl.b_k[i] * y;
            }
            out[lay.xi()] = (reference.at(ts) - y - s[lay.xi()]) / tau;
            filter_rates(&design.a_z, &s[lay.est()..], y, u, &mut out[lay.est()..]);
        });
    }
    Ok(())
}

/// Simulates the scenario, recording every sample.
pub fn run(scenario: &Scenario) -> Result<SimTrace> {
    let mut samples = Vec::with_capacity(scenario.steps() + 1);
    let mut builder = SummaryBuilder::new(&scenario.spec, scenario.design.r_e);
    simulate(scenario, |s| {
        builder.push(s);
        samples.push(s.clone());
    })?;
    Ok(SimTrace {
        samples,
        summary: builder.s,
    })
}

/// Simulates the scenario keeping only aggregate statistics.
pub fn run_summary(scenario: &Scenario) -> Result<TraceSummary> {
    let mut builder = SummaryBuilder::new(&scenario.spec, scenario.design.r_e);
    simulate(scenario, |s| builder.push(s))?;
    Ok(builder.s)
}

/// `‖X^{1/2} (j2πf I − A_z)⁻¹ b_z‖₂` per frequency.
pub fn freq_response_ge(x: &DMatrix<f64>, design: &EstimatorDesign, freqs: &[f64]) -> Vec<f64> {
    let root = sym_sqrt(x).map(|v| Complex::new(v, 0.0));
    let b = design.b_z.map(|v| Complex::new(v, 0.0));
    let n = design.n();
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let m = DMatrix::from_fn(n, n, |i, j| {
                Complex::new(-design.a_z[(i, j)], if i == j { w } else { 0.0 })
            });
            match m.lu().solve(&b) {
                Some(v) => (&root * v).norm(),
                None => f64::INFINITY,
            }
        })
        .collect()
}

/// Log-spaced frequencies with `per_decade` points per decade, inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=count)
        .map(|i| lo * 10f64.powf(decades * i as f64 / count as f64))
        .collect()
}

/// Frequency of the largest `G_e` gain in `range` and the matching
/// worst-case sinusoid `w̄ sin(2π f_e t)`.
pub fn worst_sine(
    x: &DMatrix<f64>,
    design: &EstimatorDesign,
    w_bar: f64,
    range: (f64, f64),
) -> Result<(f64, Disturbance)> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "frequency range [{lo}, {hi}] must be positive and nonempty"
        )));
    }
    let grid = log_grid(lo, hi, 200);
    let mags = freq_response_ge(x, design, &grid);
    let (i, _) = mags
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &m)| {
            if m > acc.1 {
                (i, m)
            } else {
                acc
            }
        });
    let gain = |f: f64| freq_response_ge(x, design, &[f])[0];

    // Golden-section refinement between the neighbouring grid points.
    let mut a = grid[i.saturating_sub(1)];
    let mut b = grid[(i + 1).min(grid.len() - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (gain(c), gain(d));
    while b - a > 1e-4 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = gain(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = gain(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f_e = if gain(mid) >= mags[i] { mid } else { grid[i] };
    Ok((
        f_e,
        Disturbance::Sinusoid {
            amplitude: w_bar,
            frequency_hz: f_e,
            phase: 0.0,
        },
    ))
}

/// One randomized Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub seed: u64,
    pub delta_true: Vec<f64>,
    pub disturbance: Disturbance,
    pub summary: TraceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub runs: Vec<BatchRun>,
}

impl BatchReport {
    pub fn bound_violations(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| !r.summary.bounds_hold())
            .count()
    }

    pub fn max_bound_gap(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| r.summary.max_bound_gap)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_residual_gap(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| r.summary.max_residual_gap)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Random `δ_true` in the box and a random disturbance with amplitude `w̄`:
/// a sinusoid or square wave (log-uniform 0.01–1 Hz, uniform phase) or a
/// random piecewise-constant signal (log-uniform hold 0.05–5 s).
pub fn randomize(base: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = base.clone();
    s.delta_true = (0..base.plant.n_p())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let amplitude = base.plant.w_bar;
    let frequency_hz = 10f64.powf(rng.random_range(-2.0..=0.0));
    let phase = rng.random_range(0.0..2.0 * PI);
    s.disturbance = match rng.random_range(0..3) {
        0 => Disturbance::Sinusoid {
            amplitude,
            frequency_hz,
            phase,
        },
        1 => Disturbance::Square {
            amplitude,
            frequency_hz,
            phase,
        },
        _ => Disturbance::RandomPiecewise {
            amplitude,
            hold: 10f64.powf(rng.random_range(-1.3..=0.7)),
            seed: rng.random(),
        },
    };
    s
}

/// Runs `runs` randomized variants of `base` with seeds `seed, seed+1, …`.
pub fn run_batch(base: &Scenario, runs: usize, seed: u64) -> Result<BatchReport> {
    base.validate()?;
    let one = |i: usize| -> Result<BatchRun> {
        let run_seed = seed.wrapping_add(i as u64);
        let sc = randomize(base, run_seed);
        let summary = run_summary(&sc)?;
        Ok(BatchRun {
            seed: run_seed,
            delta_true: sc.delta_true,
            disturbance: sc.disturbance,
            summary,
        })
    };
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<_>> = {
        use rayon::prelude::*;
        (0..runs).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<_>> = (0..runs).map(one).collect();
    Ok(BatchReport { runs: runs? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_timeline() {
        let r = Trapezoid::default();
        assert_eq!(r.total_time(), 60.0);
        assert_eq!(r.at(0.0), 0.0);
        assert!((r.at(4.0) - 1.0).abs() < 1e-12);
        assert_eq!(r.at(10.0), 2.5);
        assert_eq!(r.at(29.9), 2.5);
        assert!((r.at(35.0) - 1.25).abs() < 1e-12);
        assert_eq!(r.at(45.0), 0.0);
        assert_eq!(r.at(100.0), 0.0);
    }

    #[test]
    fn disturbances_stay_bounded() {
        for d in [
            Disturbance::Sinusoid {
                amplitude: 0.05,
                frequency_hz: 0.3,
                phase: 1.0,
            },
            Disturbance::Square {
                amplitude: 0.05,
                frequency_hz: 0.3,
                phase: 1.0,
            },
            Disturbance::RandomPiecewise {
                amplitude: 0.05,
                hold: 0.2,
                seed: 7,
            },
        ] {
            let s = d.signal(10.0);
            assert!((0..1000).all(|k| s.at(k as f64 * 0.01).abs() <= 0.05));
        }
        let sq = Disturbance::Square {
            amplitude: 1.0,
            frequency_hz: 1.0,
            phase: 0.0,
        }
        .signal(1.0);
        assert_eq!((sq.at(0.25), sq.at(0.75)), (1.0, -1.0));
    }

    #[test]
    fn random_disturbance_is_seeded() {
        let d = Disturbance::RandomPiecewise {
            amplitude: 1.0,
            hold: 0.5,
            seed: 3,
        };
        let (a, b) = (d.signal(5.0), d.signal(5.0));
        assert!((0..50).all(|k| a.at(k as f64 * 0.1) == b.at(k as f64 * 0.1)));
    }

    #[test]
    fn original_input_signs() {
        let g = OriginalController::default();
        assert_eq!(original_input(1.0, 1.0, 0.0, &g), 0.0);
        assert!(original_input(1.0, 0.0, 0.0, &g) > 0.0);
        let sat = OriginalController {
            u_limit: Some(10.0),
            ..g
        };
        assert_eq!(original_input(100.0, 0.0, 0.0, &sat), 10.0);
    }

    #[test]
    fn scalar_frequency_response() {
        // A_z = −a, X = 1 ⇒ |b_z| / sqrt(a² + (2πf)²)
        let d = EstimatorDesign::from_gain(DVector::from_element(1, 3.0), 0.0, 0.0);
        let x = DMatrix::identity(1, 1);
        let f = [0.0, 0.5, 10.0];
        let m = freq_response_ge(&x, &d, &f);
        for (fi, mi) in f.iter().zip(&m) {
            let exact = 3.0 / (9.0 + (2.0 * PI * fi).powi(2)).sqrt();
            assert!((mi - exact).abs() < 1e-14);
        }
        let (f_e, _) = worst_sine(&x, &d, 0.1, (1e-3, 1e2)).unwrap();
        assert!((f_e - 1e-3).abs() < 1e-4);
        assert!(worst_sine(&x, &d, 0.1, (1.0, 1.0)).is_err());
    }

    #[test]
    fn csv_header_layout() {
        assert_eq!(
            SimTrace::csv_header(2),
            "t,x1,x2,xk1,xk2,y,u,mode,B,B_bar,e_norm,ref"
        );
    }
}
