use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::record::mean_stderr;
use crate::actors::{ActorCritic, ActorKind, Steps};
use crate::critics::{Critic, CriticConfig, CriticKind};
use crate::envs::{
    make_counterexample, Counterexample, StreamGenerator, COUNTEREXAMPLE_BEHAVIOR_P1,
    COUNTEREXAMPLE_DISCOUNT,
};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::oracle::{
    expected_actor_update, td_fixed_point, ActorEstimator, ProjectionWeights, TraceKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleOptions {
    pub gamma: f64,
    pub behavior_p1: f64,
    /// Tabular preference for action 1 in both states.
    pub margin: f64,
    pub runs: u64,
    /// Transitions per run; zero skips the sampled tests.
    pub steps: u64,
    pub seed: u64,
    /// One-sided confidence level of the sign tests.
    pub confidence: f64,
}

impl Default for CounterexampleOptions {
    fn default() -> Self {
        Self {
            gamma: COUNTEREXAMPLE_DISCOUNT,
            behavior_p1: COUNTEREXAMPLE_BEHAVIOR_P1,
            margin: 3.0,
            runs: 100,
            steps: 10_000,
            seed: 0,
            confidence: 0.99,
        }
    }
}

/// Projection of an actor's sampled direction on `∇π(a = 1 | s = 1)` with
/// the critic frozen at its fixed point for the current policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub actor: ActorKind,
    pub lambda: f64,
    pub theta: f64,
    /// `+1` if the actor should move toward action 1, `−1` if away.
    pub expected_sign: f64,
    pub exact_projection: f64,
    /// Mean over runs of the per-run average projection.
    pub mean: f64,
    pub stderr: f64,
    pub t: f64,
    pub critical: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub options: CounterexampleOptions,
    /// `2 / (3 − 4γ)`.
    pub td0_closed_form: f64,
    /// λ = 0 fixed point under the optimal policy.
    pub td0_optimal: f64,
    /// λ = 1 fixed point under the optimal policy.
    pub gtd1_optimal: f64,
    pub tests: Vec<SignTest>,
}

pub fn run_counterexample_comparison(
    options: &CounterexampleOptions,
) -> Result<CounterexampleReport> {
    if !(0.5..1.0).contains(&options.confidence) {
        return Err(Error::InvalidConfig(format!(
            "confidence {} outside [0.5, 1)",
            options.confidence
        )));
    }
    let cx = make_counterexample(options.gamma, options.behavior_p1)?;
    let weights = ProjectionWeights::from_behavior(&cx.mdp, &cx.behavior)?;
    let optimal = Counterexample::optimal_policy();
    let fixed = |lambda| {
        td_fixed_point(
            &cx.mdp,
            &cx.features,
            &optimal,
            &weights,
            lambda,
            TraceKind::Standard,
        )
    };
    let td0_optimal = fixed(0.0)?.theta[0];
    let gtd1_optimal = fixed(1.0)?.theta[0];

    let policy = Counterexample::favoring_action_one(options.margin);
    let direction = policy.prob_gradient(0, 0);
    let mut tests = Vec::new();
    for (actor, lambda, estimator, expected_sign) in [
        (ActorKind::OffPac, 0.0, ActorEstimator::OffPac, -1.0),
        (ActorKind::GradientAc, 1.0, ActorEstimator::GradientAc, 1.0),
    ] {
        let theta = td_fixed_point(
            &cx.mdp,
            &cx.features,
            &policy,
            &weights,
            lambda,
            TraceKind::Standard,
        )?
        .theta;
        let exact = expected_actor_update(
            &cx.mdp,
            &cx.features,
            &policy,
            &cx.behavior,
            &weights,
            &theta,
            estimator,
        )?;
        let per_run: Vec<f64> = (0..if options.steps == 0 { 0 } else { options.runs })
            .into_par_iter()
            .map(|r| {
                let mut critic = Critic::new(
                    CriticKind::Gtd,
                    1,
                    CriticConfig::new(options.gamma, lambda)?,
                );
                critic.state.theta = theta.clone();
                let mut ac = ActorCritic::new(actor, critic, policy.clone())?;
                let mut stream = StreamGenerator::new(&cx.mdp, &cx.behavior, options.seed + r)?;
                let mut total = 0.0;
                for _ in 0..options.steps {
                    ac.advance(&mut stream, &cx.features, Steps::frozen())?;
                    total += dot(&ac.actor.increment, &direction);
                }
                Ok(total / options.steps as f64)
            })
            .collect::<Result<_>>()?;
        let summary = mean_stderr(&per_run);
        let t = summary.mean / summary.stderr;
        let critical = if summary.n >= 2 {
            StudentsT::new(0.0, 1.0, (summary.n - 1) as f64)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .inverse_cdf(options.confidence)
        } else {
            f64::NAN
        };
        tests.push(SignTest {
            actor,
            lambda,
            theta: theta[0],
            expected_sign,
            exact_projection: dot(&exact, &direction),
            mean: summary.mean,
            stderr: summary.stderr,
            t,
            critical,
            passed: expected_sign * t > critical,
        });
    }
    Ok(CounterexampleReport {
        options: options.clone(),
        td0_closed_form: 2.0 / (3.0 - 4.0 * options.gamma),
        td0_optimal,
        gtd1_optimal,
        tests,
    })
}

impl CounterexampleReport {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "counterexample report",
            message: e.to_string(),
        })
    }

    pub fn test(&self, actor: ActorKind) -> Option<&SignTest> {
        self.tests.iter().find(|t| t.actor == actor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_values_without_sampling() {
        let report = run_counterexample_comparison(&CounterexampleOptions {
            steps: 0,
            ..Default::default()
        })
        .unwrap();
        assert!((report.td0_optimal - report.td0_closed_form).abs() < 1e-9);
        assert!(report.td0_optimal < 0.0);
        assert!((report.gtd1_optimal - 200.0 / 3.0).abs() < 1e-6);
        let off = report.test(ActorKind::OffPac).unwrap();
        assert!(off.exact_projection < 0.0);
        assert!(!off.passed);
        assert!(report.test(ActorKind::GradientAc).unwrap().exact_projection > 0.0);
        assert!(report.to_toml_string().unwrap().contains("td0_closed_form"));
    }
}
