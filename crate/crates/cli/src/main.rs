use std::path::PathBuf;
use std::process::ExitCode;

use barrier_core::artifact::{load_json, save_json, BarrierPairArtifact, EstimatorArtifact};
use barrier_core::config::ProjectConfig;
use barrier_core::estimator::design_bz;
use barrier_core::sim::{freq_response_ge, log_grid, run, run_batch, worst_sine};
use barrier_core::synthesis::{synthesize, verify_barrier_pair};
use barrier_core::Error;
use clap::{Args, Parser, Subcommand};

/// Barrier pair synthesis, estimator design and supervised simulation.
#[derive(Parser)]
#[command(name = "bpair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Project configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and verify a barrier pair
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Override the solver tolerance
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Design the estimator gain b_z minimizing r_e
    DesignEstimator {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        barrier_pair: PathBuf,
        /// Override the solver tolerance
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Frequency response of the estimation-error channel (CSV)
    Freqresp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        barrier_pair: PathBuf,
        #[arg(long)]
        estimator: PathBuf,
        #[arg(long)]
        f_min: Option<f64>,
        #[arg(long)]
        f_max: Option<f64>,
    },
    /// Simulate a scenario (CSV trace) or a randomized batch (JSON report)
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        barrier_pair: PathBuf,
        #[arg(long)]
        estimator: PathBuf,
        #[arg(long, default_value = "main")]
        scenario: String,
        /// Run N randomized variants instead of the scenario itself
        #[arg(long, value_name = "N")]
        batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Core(Error),
    BoundViolation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SynthesisInfeasible { .. } | Error::DesignInfeasible { .. } => 3,
        Error::Recovery(_)
        | Error::VerificationFailed { .. }
        | Error::NotHurwitz { .. }
        | Error::Numerical(_)
        | Error::Diverged { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if let Error::SynthesisInfeasible { attempts } = &e {
                for a in attempts {
                    eprintln!("  mu_w = {:e}, mu_p = {:?}: {}", a.mu_w, a.mu_p, a.status);
                }
            }
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::BoundViolation(msg)) => {
            eprintln!("certified bound violated: {msg}");
            ExitCode::from(5)
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synthesize { common, tol } => {
            let cfg = ProjectConfig::load(&common.config)?;
            let plant = cfg.plant()?;
            let mut opts = cfg.synthesis_options();
            if let Some(t) = tol {
                opts.tol = t;
            }
            let bp = synthesize(&plant, &cfg.safety, &opts)?;
            let report = verify_barrier_pair(&plant, &cfg.safety, &bp, opts.verify_tol)?;
            save_json(
                &common.out,
                &BarrierPairArtifact::new(&plant, &bp, Some(&report)),
            )?;
            println!("logdet(Y) = {:.6}", bp.log_det_y);
            println!("mu_w = {:e}, mu_p = {:?}", bp.mu_w, bp.mu_p);
            for c in &report.checks {
                println!("certificate {:<12} margin {:e}", c.name, c.margin);
            }
        }
        Command::DesignEstimator {
            common,
            barrier_pair,
            tol,
        } => {
            let cfg = ProjectConfig::load(&common.config)?;
            let plant = cfg.plant()?;
            let bp = load_json::<BarrierPairArtifact>(&barrier_pair)?.to_pair(&plant)?;
            let mut opts = cfg.estimator_options();
            if let Some(t) = tol {
                opts.tol = t;
            }
            let design = design_bz(&bp.x, plant.w_bar, &opts)?;
            save_json(&common.out, &EstimatorArtifact::new(&plant, &design))?;
            println!("r_e = {:.6}", design.r_e);
            println!("mu_e = {:e}", design.mu_e);
            println!("b_z = {:?}", design.b_z.as_slice());
        }
        Command::Freqresp {
            common,
            barrier_pair,
            estimator,
            f_min,
            f_max,
        } => {
            let cfg = ProjectConfig::load(&common.config)?;
            let plant = cfg.plant()?;
            let bp = load_json::<BarrierPairArtifact>(&barrier_pair)?.to_pair(&plant)?;
            let design = load_json::<EstimatorArtifact>(&estimator)?.to_design(&plant)?;
            let lo = f_min.unwrap_or(cfg.freqresp.f_min);
            let hi = f_max.unwrap_or(cfg.freqresp.f_max);
            let (f_e, _) = worst_sine(&bp.x, &design, plant.w_bar, (lo, hi))?;
            let freqs = log_grid(lo, hi, cfg.freqresp.per_decade);
            let mags = freq_response_ge(&bp.x, &design, &freqs);
            let mut csv = String::from("f_hz,magnitude\n");
            for (f, m) in freqs.iter().zip(&mags) {
                csv.push_str(&format!("{f:?},{m:?}\n"));
            }
            std::fs::write(&common.out, csv).map_err(Error::from)?;
            let peak = freq_response_ge(&bp.x, &design, &[f_e])[0];
            println!("peak = {peak:.6}");
            println!("f_e = {f_e:.6} Hz");
        }
        Command::Simulate {
            common,
            barrier_pair,
            estimator,
            scenario,
            batch,
            seed,
        } => {
            let cfg = ProjectConfig::load(&common.config)?;
            let plant = cfg.plant()?;
            let bp = load_json::<BarrierPairArtifact>(&barrier_pair)?.to_pair(&plant)?;
            let design = load_json::<EstimatorArtifact>(&estimator)?.to_design(&plant)?;
            let sc = cfg.scenario(&scenario, &bp, &design)?;
            match batch {
                Some(runs) => {
                    let report = run_batch(&sc, runs, seed)?;
                    save_json(&common.out, &report)?;
                    println!("runs = {runs}");
                    println!("bound violations = {}", report.bound_violations());
                    println!("max B - B_bar = {:e}", report.max_bound_gap());
                    println!("max |e|_X - r_e = {:e}", report.max_residual_gap());
                    if report.bound_violations() > 0 {
                        return Err(Failure::BoundViolation(format!(
                            "{} of {runs} runs",
                            report.bound_violations()
                        )));
                    }
                }
                None => {
                    let trace = run(&sc)?;
                    std::fs::write(&common.out, trace.to_csv()).map_err(Error::from)?;
                    let s = &trace.summary;
                    println!("violations = {}", s.violations());
                    println!("engagements = {}", s.engagements);
                    println!("releases = {}", s.releases);
                    println!("max B = {:.6}", s.max_b);
                    println!("max B - B_bar = {:e}", s.max_bound_gap);
                    println!("max |e|_X - r_e = {:e}", s.max_residual_gap);
                    if !s.bounds_hold() {
                        return Err(Failure::BoundViolation(format!(
                            "max B - B_bar = {:e}, max |e|_X - r_e = {:e}",
                            s.max_bound_gap, s.max_residual_gap
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}
