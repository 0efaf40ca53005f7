//! TOML project configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorDesign, EstimatorOptions};
use crate::lmi::{BarrierSolver, DEFAULT_MARGIN};
use crate::model::{SafetySpec, UncertainPlant, UncertaintyDirection};
use crate::sim::{worst_sine, Disturbance, OriginalController, Scenario, Trapezoid};
use crate::supervisor::SupervisorConfig;
use crate::synthesis::{log_space, BarrierPair, MultiplierGrid, SynthesisOptions};

/// Either explicit values or `points` log-spaced values in `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Log { min: f64, max: f64, points: usize },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Log { min, max, points } => log_space(*min, *max, *points),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let v = self.values();
        if v.is_empty() || v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{what} grid must be nonempty with finite nonnegative values"
            )));
        }
        if let GridSpec::Log { min, max, .. } = self {
            if !(*min > 0.0 && max >= min) {
                return Err(Error::InvalidConfig(format!(
                    "{what} log grid needs 0 < min <= max"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub n: usize,
    /// Denominator coefficients `α₁ … αₙ` (descending powers of `s`).
    pub alpha: Vec<f64>,
    /// Numerator coefficients `β₁ … βₙ`.
    pub beta: Vec<f64>,
    #[serde(default)]
    pub uncertainty: Vec<UncertaintyDirection>,
    pub w_bar: f64,
}

impl PlantSection {
    pub fn to_plant(&self) -> Result<UncertainPlant> {
        let plant = UncertainPlant {
            n: self.n,
            alpha_bar: self.alpha.clone(),
            beta_bar: self.beta.clone(),
            uncertainty: self.uncertainty.clone(),
            w_bar: self.w_bar,
        };
        plant.validate()?;
        Ok(plant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub mu_w: GridSpec,
    pub mu_p: GridSpec,
    /// Strictness margin applied to every synthesis LMI.
    pub margin: f64,
    pub tol: f64,
    pub verify_tol: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            mu_w: GridSpec::Log {
                min: 1e-2,
                max: 1e3,
                points: 13,
            },
            mu_p: GridSpec::Log {
                min: 1e-2,
                max: 1e3,
                points: 7,
            },
            margin: DEFAULT_MARGIN,
            tol: 1e-7,
            verify_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub mu_e: GridSpec,
    pub margin: f64,
    pub tol: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            mu_e: GridSpec::Log {
                min: 1e-2,
                max: 1e3,
                points: 25,
            },
            margin: 1e-9,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreqSection {
    pub f_min: f64,
    pub f_max: f64,
    /// Points per decade for the exported curve.
    pub per_decade: usize,
}

impl Default for FreqSection {
    fn default() -> Self {
        Self {
            f_min: 1e-3,
            f_max: 1e2,
            per_decade: 200,
        }
    }
}

/// Disturbance as written in a config; `worst_sine` is resolved against
/// the designed estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    Zero,
    WorstSine {
        #[serde(default)]
        phase: f64,
    },
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
    RandomPiecewise {
        amplitude: f64,
        hold: f64,
        seed: u64,
    },
}

fn default_duration() -> f64 {
    60.0
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub delta_true: Vec<f64>,
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub reference: Trapezoid,
    #[serde(default)]
    pub original: OriginalController,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub plant: PlantSection,
    pub safety: SafetySpec,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    #[serde(default)]
    pub freqresp: FreqSection,
    #[serde(default)]
    pub scenarios: BTreeMap<String, ScenarioConfig>,
}

impl ProjectConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant.to_plant()?;
        self.safety.validate(Some(plant.n))?;
        self.synthesis.mu_w.validate("mu_w")?;
        self.synthesis.mu_p.validate("mu_p")?;
        self.estimator.mu_e.validate("mu_e")?;
        for (name, v) in [
            ("synthesis.margin", self.synthesis.margin),
            ("synthesis.verify_tol", self.synthesis.verify_tol),
            ("estimator.margin", self.estimator.margin),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative")));
            }
        }
        for (name, v) in [
            ("synthesis.tol", self.synthesis.tol),
            ("estimator.tol", self.estimator.tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.freqresp.f_min > 0.0 && self.freqresp.f_max > self.freqresp.f_min)
            || self.freqresp.per_decade == 0
        {
            return Err(Error::InvalidConfig(
                "freqresp needs 0 < f_min < f_max and per_decade >= 1".into(),
            ));
        }
        self.supervisor.validate(self.safety.epsilon)?;
        for (name, sc) in &self.scenarios {
            if sc.delta_true.len() != plant.n_p() || sc.delta_true.iter().any(|d| !(d.abs() <= 1.0))
            {
                return Err(Error::InvalidConfig(format!(
                    "scenario {name}: delta_true needs {} entries in [-1, 1]",
                    plant.n_p()
                )));
            }
            if !(sc.dt > 0.0) || !(sc.duration >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "scenario {name}: dt must be positive and duration nonnegative"
                )));
            }
            sc.reference.validate()?;
            sc.original.validate()?;
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<UncertainPlant> {
        self.plant.to_plant()
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            grid: MultiplierGrid {
                mu_w: self.synthesis.mu_w.values(),
                mu_p: self.synthesis.mu_p.values(),
            },
            margin: self.synthesis.margin,
            tol: self.synthesis.tol,
            verify_tol: self.synthesis.verify_tol,
            solver: BarrierSolver::default(),
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            mu_grid: self.estimator.mu_e.values(),
            margin: self.estimator.margin,
            tol: self.estimator.tol,
            solver: BarrierSolver::default(),
        }
    }

    /// Assembles a runnable scenario from synthesized artifacts.
    pub fn scenario(
        &self,
        name: &str,
        pair: &BarrierPair,
        design: &EstimatorDesign,
    ) -> Result<Scenario> {
        let sc = self
            .scenarios
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario {name:?}")))?;
        let plant = self.plant()?;
        let disturbance = match &sc.disturbance {
            DisturbanceConfig::Zero => Disturbance::Zero,
            DisturbanceConfig::WorstSine { phase } => {
                let (f_e, _) = worst_sine(
                    &pair.x,
                    design,
                    plant.w_bar,
                    (self.freqresp.f_min, self.freqresp.f_max),
                )?;
                Disturbance::Sinusoid {
                    amplitude: plant.w_bar,
                    frequency_hz: f_e,
                    phase: *phase,
                }
            }
            DisturbanceConfig::Sinusoid {
                amplitude,
                frequency_hz,
                phase,
            } => Disturbance::Sinusoid {
                amplitude: *amplitude,
                frequency_hz: *frequency_hz,
                phase: *phase,
            },
            DisturbanceConfig::Square {
                amplitude,
                frequency_hz,
                phase,
            } => Disturbance::Square {
                amplitude: *amplitude,
                frequency_hz: *frequency_hz,
                phase: *phase,
            },
            DisturbanceConfig::RandomPiecewise {
                amplitude,
                hold,
                seed,
            } => Disturbance::RandomPiecewise {
                amplitude: *amplitude,
                hold: *hold,
                seed: *seed,
            },
        };
        let scenario = Scenario {
            plant,
            spec: self.safety.clone(),
            pair: pair.clone(),
            design: design.clone(),
            supervisor: self.supervisor,
            delta_true: sc.delta_true.clone(),
            disturbance,
            reference: sc.reference.clone(),
            original: sc.original,
            duration: sc.duration,
            dt: sc.dt,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
