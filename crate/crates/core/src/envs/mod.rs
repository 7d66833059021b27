//! Benchmark environments and seeded transition streams.

mod stream;

pub use stream::{StreamGenerator, Transition};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::mdp::{FiniteMdp, FixedPolicy, LinearFeatureMap, ParametricPolicy};

/// Two-state, two-action deterministic MDP on which Off-PAC ascends the wrong
/// way.
///
/// Index 0 is "state 1" / "action 1" and index 1 is "state 2" / "action 2".
/// Action 1 moves to state 2 and action 2 moves to state 1 from either
/// state; arriving in state 2 pays 1. Features are the single column
/// `φ(state 1) = 1`, `φ(state 2) = 2`.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub mdp: FiniteMdp,
    pub features: LinearFeatureMap,
    pub behavior: FixedPolicy,
}

/// Behavior probability of action 1 that reproduces `θ = 2/(3 − 4γ)` at λ = 0.
pub const COUNTEREXAMPLE_BEHAVIOR_P1: f64 = 1.0 / 3.0;
pub const COUNTEREXAMPLE_DISCOUNT: f64 = 0.99;

pub fn make_counterexample(gamma: f64, behavior_p1: f64) -> Result<Counterexample> {
    if !(behavior_p1 > 0.0 && behavior_p1 < 1.0) {
        return Err(Error::InvalidPolicy(format!(
            "behavior_p1 = {behavior_p1} outside (0, 1)"
        )));
    }
    let mdp = FiniteMdp::from_entries(
        2,
        2,
        gamma,
        [
            (0, 0, 1, 1.0, 1.0),
            (0, 1, 0, 1.0, 0.0),
            (1, 0, 1, 1.0, 1.0),
            (1, 1, 0, 1.0, 0.0),
        ],
    )?;
    let features = LinearFeatureMap::new(vec![vec![1.0], vec![2.0]])?;
    let behavior = FixedPolicy::state_independent(2, &[behavior_p1, 1.0 - behavior_p1])?;
    Ok(Counterexample {
        mdp,
        features,
        behavior,
    })
}

impl Counterexample {
    /// Tabular-softmax parameters with preference `margin` for action 1 in
    /// both states (`w = [margin, 0, margin, 0]`).
    pub fn favoring_action_one(margin: f64) -> ParametricPolicy {
        ParametricPolicy::tabular(2, 2, vec![margin, 0.0, margin, 0.0]).expect("valid shape")
    }

    /// The deterministic optimal policy "always action 1".
    pub fn optimal_policy() -> FixedPolicy {
        FixedPolicy::state_independent(2, &[1.0, 0.0]).expect("valid table")
    }
}

/// The 19-state random walk: states 1..=19 in a chain between two absorbing
/// terminals (index 0 on the left, index 20 on the right).
#[derive(Debug, Clone)]
pub struct RandomWalk {
    pub mdp: FiniteMdp,
    /// One indicator per non-terminal state; terminal rows are zero.
    pub features: LinearFeatureMap,
    pub behavior: FixedPolicy,
    pub terminals: Vec<bool>,
    pub start: usize,
}

pub const WALK_STATES: usize = 19;
/// Stand-in for γ = 1 in oracle solves; absorption keeps values finite.
pub const WALK_DISCOUNT: f64 = 1.0 - 1e-9;

pub fn make_random_walk_19() -> RandomWalk {
    let total = WALK_STATES + 2;
    let right = total - 1;
    let mut entries = vec![
        (0, 0, 0, 1.0, 0.0),
        (0, 1, 0, 1.0, 0.0),
        (right, 0, right, 1.0, 0.0),
        (right, 1, right, 1.0, 0.0),
    ];
    for s in 1..=WALK_STATES {
        let reward = |next: usize| match next {
            0 => -1.0,
            n if n == right => 1.0,
            _ => 0.0,
        };
        entries.push((s, 0, s - 1, 1.0, reward(s - 1)));
        entries.push((s, 1, s + 1, 1.0, reward(s + 1)));
    }
    let mdp =
        FiniteMdp::from_entries(total, 2, WALK_DISCOUNT, entries).expect("walk model is valid");
    let rows = (0..total)
        .map(|s| {
            let mut row = vec![0.0; WALK_STATES];
            if (1..=WALK_STATES).contains(&s) {
                row[s - 1] = 1.0;
            }
            row
        })
        .collect();
    let features = LinearFeatureMap::new(rows).expect("indicator features have full rank");
    let mut terminals = vec![false; total];
    terminals[0] = true;
    terminals[right] = true;
    RandomWalk {
        mdp,
        features,
        behavior: FixedPolicy::uniform(total, 2),
        terminals,
        start: WALK_STATES / 2 + 1,
    }
}

impl RandomWalk {
    /// Indices of the non-terminal states.
    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        1..=WALK_STATES
    }

    pub fn stream(&self, seed: u64) -> Result<StreamGenerator> {
        StreamGenerator::new(&self.mdp, &self.behavior, seed)?
            .episodic(self.terminals.clone(), self.start)
    }
}

/// A seeded random test instance.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub mdp: FiniteMdp,
    pub features: LinearFeatureMap,
    pub behavior: FixedPolicy,
    pub target: ParametricPolicy,
}

pub const RANDOM_MDP_DISCOUNT: f64 = 0.9;
const MAX_FEATURE_DRAWS: usize = 10;
const TARGET_NOISE: f64 = 0.3;

fn dirichlet_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Renormalises so the row sums to one within the model tolerance.
fn normalised(mut row: Vec<f64>) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

/// Random MDP with discount [`RANDOM_MDP_DISCOUNT`].
///
/// Transition rows are flat-Dirichlet draws mixed with the uniform row so that
/// every entry is at least `min(0.01, 0.5/|S|)`; rewards are uniform on
/// `[−1, 1]`; features are standard normal with the last column set to 1;
/// the behavior policy is an even mix of uniform and a Dirichlet draw; the
/// target is a tabular softmax at `log π_b` plus `N(0, 0.3²)` noise.
pub fn make_random_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    n_features: usize,
) -> Result<RandomInstance> {
    make_random_mdp_with_discount(seed, n_states, n_actions, n_features, RANDOM_MDP_DISCOUNT)
}

pub fn make_random_mdp_with_discount(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    n_features: usize,
    discount: f64,
) -> Result<RandomInstance> {
    if n_features < 2 || n_features > n_states {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= n_features <= n_states, got {n_features} features for {n_states} states"
        )));
    }
    if n_actions == 0 {
        return Err(Error::InvalidConfig("need at least one action".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = (0.01_f64).min(0.5 / n_states as f64);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row = dirichlet_row(&mut rng, n_states);
        transition.extend(normalised(
            row.into_iter()
                .map(|p| floor + (1.0 - floor * n_states as f64) * p)
                .collect(),
        ));
    }
    let reward = (0..n_states * n_actions * n_states)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let mdp = FiniteMdp::new(n_states, n_actions, discount, transition, reward)?;

    let mut features = None;
    for _ in 0..MAX_FEATURE_DRAWS {
        let rows: Vec<Vec<f64>> = (0..n_states)
            .map(|_| {
                let mut row: Vec<f64> = (0..n_features - 1)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                row.push(1.0);
                row
            })
            .collect();
        if let Ok(map) = LinearFeatureMap::with_intercept(rows) {
            if condition_number(&map.matrix()) < 1e8 {
                features = Some(map);
                break;
            }
        }
    }
    let features = features.ok_or_else(|| {
        Error::RankDeficient(format!(
            "no full-rank feature draw in {MAX_FEATURE_DRAWS} attempts"
        ))
    })?;

    let uniform = 1.0 / n_actions as f64;
    let behavior_rows = (0..n_states)
        .map(|_| {
            normalised(
                dirichlet_row(&mut rng, n_actions)
                    .into_iter()
                    .map(|p| 0.5 * uniform + 0.5 * p)
                    .collect(),
            )
        })
        .collect();
    let behavior = FixedPolicy::new(behavior_rows)?;

    let params = (0..n_states * n_actions)
        .map(|i| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            behavior.row(i / n_actions)[i % n_actions].ln() + TARGET_NOISE * noise
        })
        .collect();
    let target = ParametricPolicy::tabular(n_states, n_actions, params)?;
    Ok(RandomInstance {
        mdp,
        features,
        behavior,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{
        exact_value_function, policy_transition_matrix, stationary_distribution,
        ActionProbabilities,
    };
    use crate::oracle::{td_fixed_point, ProjectionWeights, TraceKind};

    #[test]
    fn same_seed_same_instance() {
        let a = make_random_mdp(77, 5, 3, 3).unwrap();
        let b = make_random_mdp(77, 5, 3, 3).unwrap();
        assert_eq!(a.mdp, b.mdp);
        assert_eq!(a.features, b.features);
        assert_eq!(a.behavior, b.behavior);
        assert_eq!(a.target, b.target);
        assert_ne!(a.mdp, make_random_mdp(78, 5, 3, 3).unwrap().mdp);
    }

    #[test]
    fn instances_satisfy_model_invariants() {
        for seed in 0..100 {
            let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
            inst.behavior.ensure_coverage().unwrap();
            assert!(inst.features.has_intercept());
            for s in 0..5 {
                for a in 0..3 {
                    assert!(inst
                        .mdp
                        .next_distribution(s, a)
                        .iter()
                        .all(|p| *p >= 0.01 - 1e-15));
                }
            }
            let p = policy_transition_matrix(&inst.mdp, &inst.behavior).unwrap();
            stationary_distribution(&p).unwrap();
        }
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(make_random_mdp(0, 5, 3, 1).is_err());
        assert!(make_random_mdp(0, 3, 3, 4).is_err());
    }

    #[test]
    fn lambda_zero_conditioning_is_mostly_moderate() {
        let mut good = 0;
        for seed in 0..1000 {
            let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
            let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
            let fp = td_fixed_point(
                &inst.mdp,
                &inst.features,
                &inst.target,
                &w,
                0.0,
                TraceKind::Standard,
            );
            if fp.is_ok_and(|fp| fp.condition <= 1e6) {
                good += 1;
            }
        }
        assert!(
            good >= 950,
            "only {good} of 1000 draws have cond(A(0)) <= 1e6"
        );
    }

    #[test]
    fn counterexample_target_values() {
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let v = exact_value_function(&cx.mdp, &Counterexample::optimal_policy()).unwrap();
        assert!(v.iter().all(|x| (x - 100.0).abs() < 1e-9));
        let pi = Counterexample::favoring_action_one(3.0);
        assert!(pi.prob(0, 0) > 0.95);
        assert!(make_counterexample(0.99, 1.0).is_err());
    }

    #[test]
    fn walk_true_values() {
        let walk = make_random_walk_19();
        let v = exact_value_function(&walk.mdp, &walk.behavior).unwrap();
        for i in walk.interior() {
            assert!(
                (v[i] - (i as f64 / 10.0 - 1.0)).abs() < 1e-6,
                "state {i}: {}",
                v[i]
            );
        }
        assert!(v[10].abs() < 1e-9);
        assert!(v[0].abs() < 1e-9 && v[20].abs() < 1e-9);
        let rms = (walk.interior().map(|i| v[i] * v[i]).sum::<f64>() / 19.0).sqrt();
        assert!((rms - 0.3_f64.sqrt()).abs() < 1e-6);
    }
}
