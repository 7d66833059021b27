use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actors::ActorKind;
use crate::critics::CriticKind;
use crate::envs::{COUNTEREXAMPLE_BEHAVIOR_P1, COUNTEREXAMPLE_DISCOUNT};
use crate::error::{Error, Result};
use crate::schedule::{StepSchedule, TimescaleRegime, DEFAULT_TAU};

fn default_gamma() -> f64 {
    COUNTEREXAMPLE_DISCOUNT
}

fn default_p1() -> f64 {
    COUNTEREXAMPLE_BEHAVIOR_P1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    #[serde(rename = "random_walk_19")]
    RandomWalk19,
    Counterexample {
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_p1")]
        behavior_p1: f64,
    },
    RandomMdp {
        seed: u64,
        n_states: usize,
        n_actions: usize,
        n_features: usize,
    },
    /// An MDP document with a `features` table.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub critic: CriticKind,
    /// Critic-only evaluation of the environment's target policy when absent.
    #[serde(default)]
    pub actor: Option<ActorKind>,
    pub lambda: Vec<f64>,
    #[serde(default = "default_normalize")]
    pub normalize: Vec<bool>,
    /// Tabular preference for action 1 in every state at `w₀` (two-state
    /// environment only).
    #[serde(default)]
    pub initial_preference: f64,
    /// Box bound on `‖w‖_∞`; `inf` disables it.
    #[serde(default = "default_projection")]
    pub projection: f64,
}

fn default_normalize() -> Vec<bool> {
    vec![false]
}

fn default_projection() -> f64 {
    1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleShape {
    #[default]
    Constant,
    Decaying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Critic step sizes `α₀`; one grid axis.
    pub alpha: Vec<f64>,
    /// Actor step sizes `β₀`; one grid axis.
    #[serde(default = "zero_beta")]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub shape: ScheduleShape,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_alpha_kappa")]
    pub alpha_kappa: f64,
    #[serde(default = "default_beta_kappa")]
    pub beta_kappa: f64,
    #[serde(default)]
    pub regime: TimescaleRegime,
}

fn zero_beta() -> Vec<f64> {
    vec![0.0]
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_alpha_kappa() -> f64 {
    0.75
}

fn default_beta_kappa() -> f64 {
    1.0
}

impl ScheduleSpec {
    pub fn critic(&self, alpha: f64) -> StepSchedule {
        self.build(alpha, self.alpha_kappa)
    }

    pub fn actor(&self, beta: f64) -> StepSchedule {
        self.build(beta, self.beta_kappa)
    }

    fn build(&self, initial: f64, kappa: f64) -> StepSchedule {
        match self.shape {
            ScheduleShape::Constant => StepSchedule::Constant { value: initial },
            ScheduleShape::Decaying => StepSchedule::Decaying {
                initial,
                tau: self.tau,
                kappa,
            },
        }
    }
}

/// Run length: a number of transitions, or of completed episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    Steps(u64),
    Episodes(u64),
}

impl Horizon {
    pub fn length(&self) -> u64 {
        match *self {
            Horizon::Steps(n) | Horizon::Episodes(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Weighted RMS of `Φθ − V^π`.
    Rms,
    /// Exact `J(w)` of the current policy.
    Objective,
    /// `π_w(a = 1 | s = 1)`.
    #[serde(rename = "prob_a1")]
    ProbActionOne,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rms => "rms",
            Metric::Objective => "objective",
            Metric::ProbActionOne => "prob_a1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub plots: bool,
}

fn yes() -> bool {
    true
}

/// A declarative sweep over `λ × normalize × α₀ × β₀`, each grid point run
/// `runs` times with seeds `seed, seed + 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmSpec,
    pub schedule: ScheduleSpec,
    pub horizon: Horizon,
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
    pub metrics: Vec<Metric>,
    /// Metrics are recorded every `record_every` steps (or episodes) and at
    /// the end of each run.
    #[serde(default = "one")]
    pub record_every: u64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

fn one() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            what: "experiment config",
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "experiment config",
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let alg = &self.algorithm;
        if alg.lambda.is_empty()
            || alg.normalize.is_empty()
            || self.schedule.alpha.is_empty()
            || self.schedule.beta.is_empty()
        {
            return bad("every grid axis needs at least one value".into());
        }
        if let Some(l) = alg.lambda.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return bad(format!("λ = {l} outside [0, 1]"));
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !(alg.projection > 0.0) {
            return bad("projection bound must be positive".into());
        }
        if matches!(self.horizon, Horizon::Episodes(_))
            && !matches!(self.environment, EnvironmentSpec::RandomWalk19)
        {
            return bad("episode horizons need an episodic environment".into());
        }
        let two_state = matches!(self.environment, EnvironmentSpec::Counterexample { .. });
        if self.metrics.contains(&Metric::ProbActionOne) && !two_state {
            return bad("prob_a1 is only defined for the two-state environment".into());
        }
        if self.metrics.contains(&Metric::Objective)
            && matches!(self.environment, EnvironmentSpec::RandomWalk19)
        {
            return bad("objective needs a continuing environment".into());
        }
        match alg.actor {
            Some(ActorKind::GradientAc) => {
                if alg.critic != CriticKind::Gtd || alg.lambda.iter().any(|l| *l != 1.0) {
                    return bad("gradient_ac needs critic = \"gtd\" and lambda = [1.0]".into());
                }
            }
            Some(ActorKind::EmphaticAc) if alg.critic != CriticKind::Emphatic => {
                return bad("emphatic_ac needs critic = \"emphatic\"".into());
            }
            Some(ActorKind::OffPac) if alg.critic != CriticKind::Gtd => {
                return bad("off_pac needs critic = \"gtd\"".into());
            }
            Some(ActorKind::OnPolicy) if alg.critic == CriticKind::Emphatic => {
                return bad("on_policy needs critic = \"td\" or \"gtd\"".into());
            }
            _ => {}
        }
        for &a in &self.schedule.alpha {
            self.schedule.critic(a).validate()?;
        }
        for &b in &self.schedule.beta {
            self.schedule.actor(b).validate()?;
        }
        if alg.actor.is_some() && self.schedule.shape == ScheduleShape::Decaying {
            for &a in &self.schedule.alpha {
                for &b in &self.schedule.beta {
                    if b > 0.0 {
                        self.schedule
                            .regime
                            .validate(&self.schedule.critic(a), &self.schedule.actor(b))?;
                    }
                }
            }
        }
        Ok(())
    }
}
