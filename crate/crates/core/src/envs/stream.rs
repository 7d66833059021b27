use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionProbabilities, FiniteMdp, FixedPolicy, LinearFeatureMap};

/// One step of experience `(φ(s_t), a_t, r_{t+1}, φ(s_{t+1}))` with the
/// importance ratio of the sampled action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    /// Successor state; for an episode end this is the terminal state entered.
    pub next_state: usize,
    pub features: &'a [f64],
    /// Zero when the step enters a terminal state.
    pub next_features: &'a [f64],
    pub rho: f64,
    /// The step entered a terminal state; traces are cleared after it.
    pub episode_end: bool,
}

#[derive(Debug, Clone)]
struct Episodic {
    terminals: Vec<bool>,
    restart: usize,
}

/// Samples `a ~ π_b(·|s)` and `s' ~ P(·|s,a)` from a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    mdp: FiniteMdp,
    behavior: FixedPolicy,
    rng: ChaCha8Rng,
    state: usize,
    episodic: Option<Episodic>,
    action_cdf: Vec<f64>,
    next_cdf: Vec<f64>,
}

fn cumulative(rows: impl Iterator<Item = f64>, width: usize) -> Vec<f64> {
    let mut out: Vec<f64> = rows.collect();
    for chunk in out.chunks_mut(width) {
        let mut acc = 0.0;
        for p in chunk.iter_mut() {
            acc += *p;
            *p = acc;
        }
    }
    out
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let total = cdf[cdf.len() - 1];
    let u = u * total;
    // last index with positive mass as the fallback for rounding at the top
    let fallback = cdf.iter().rposition(|c| *c < total).map_or(0, |i| i + 1);
    cdf.iter().position(|c| u < *c).unwrap_or(fallback)
}

impl StreamGenerator {
    /// Continuing stream; the initial state is drawn uniformly.
    pub fn new(mdp: &FiniteMdp, behavior: &FixedPolicy, seed: u64) -> Result<Self> {
        behavior.ensure_coverage()?;
        Self::build(mdp, behavior, seed)
    }

    /// Stream generated by a policy that may give some actions zero
    /// probability. Only use with a target equal to `policy`, so every
    /// sampled action has a finite ratio.
    pub fn on_policy(mdp: &FiniteMdp, policy: &FixedPolicy, seed: u64) -> Result<Self> {
        Self::build(mdp, policy, seed)
    }

    fn build(mdp: &FiniteMdp, behavior: &FixedPolicy, seed: u64) -> Result<Self> {
        if behavior.n_states() != mdp.n_states() || behavior.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension(
                "behavior policy does not match the MDP".into(),
            ));
        }
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = rng.random_range(0..ns);
        let action_cdf = cumulative((0..ns).flat_map(|s| behavior.row(s).to_vec()), na);
        let next_cdf = cumulative(
            (0..ns).flat_map(|s| (0..na).flat_map(move |a| mdp.next_distribution(s, a).to_vec())),
            ns,
        );
        Ok(Self {
            mdp: mdp.clone(),
            behavior: behavior.clone(),
            rng,
            state,
            episodic: None,
            action_cdf,
            next_cdf,
        })
    }

    /// Switches to episodic mode: entering a terminal emits one transition
    /// with zero successor features and restarts at `restart`.
    pub fn episodic(mut self, terminals: Vec<bool>, restart: usize) -> Result<Self> {
        if terminals.len() != self.mdp.n_states()
            || restart >= self.mdp.n_states()
            || terminals[restart]
        {
            return Err(Error::InvalidConfig(
                "bad terminal set or restart state".into(),
            ));
        }
        self.state = restart;
        self.episodic = Some(Episodic { terminals, restart });
        Ok(self)
    }

    pub fn with_start(mut self, state: usize) -> Result<Self> {
        if state >= self.mdp.n_states() {
            return Err(Error::Dimension(format!(
                "start state {state} out of range"
            )));
        }
        self.state = state;
        Ok(self)
    }

    /// Replaces the behavior policy, e.g. to keep an on-policy stream in step
    /// with a learning policy. No coverage check is made.
    pub fn set_behavior(&mut self, behavior: FixedPolicy) -> Result<()> {
        if behavior.n_states() != self.mdp.n_states()
            || behavior.n_actions() != self.mdp.n_actions()
        {
            return Err(Error::Dimension(
                "behavior policy does not match the MDP".into(),
            ));
        }
        let na = self.mdp.n_actions();
        self.action_cdf = cumulative(
            (0..self.mdp.n_states()).flat_map(|s| behavior.row(s).to_vec()),
            na,
        );
        self.behavior = behavior;
        Ok(())
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn behavior(&self) -> &FixedPolicy {
        &self.behavior
    }

    pub fn next_transition<'f>(
        &mut self,
        target: &impl ActionProbabilities,
        features: &'f LinearFeatureMap,
    ) -> Transition<'f> {
        let (ns, na) = (self.mdp.n_states(), self.mdp.n_actions());
        let s = self.state;
        let a = pick(&self.action_cdf[s * na..][..na], self.rng.random());
        let next = pick(&self.next_cdf[(s * na + a) * ns..][..ns], self.rng.random());
        let reward = self.mdp.reward(s, a, next);
        let rho = target.prob(s, a) / self.behavior.prob(s, a);
        let episode_end = self.episodic.as_ref().is_some_and(|e| e.terminals[next]);
        self.state = match (&self.episodic, episode_end) {
            (Some(e), true) => e.restart,
            _ => next,
        };
        Transition {
            state: s,
            action: a,
            reward,
            next_state: next,
            features: features.row(s),
            next_features: if episode_end {
                features.zero_row()
            } else {
                features.row(next)
            },
            rho,
            episode_end,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_counterexample, make_random_mdp, make_random_walk_19, Counterexample};
    use crate::mdp::{policy_transition_matrix, stationary_distribution};

    #[test]
    fn identical_seeds_identical_streams() {
        let inst = make_random_mdp(1, 5, 3, 3).unwrap();
        let mut a = StreamGenerator::new(&inst.mdp, &inst.behavior, 42).unwrap();
        let mut b = StreamGenerator::new(&inst.mdp, &inst.behavior, 42).unwrap();
        for _ in 0..1000 {
            assert_eq!(
                a.next_transition(&inst.target, &inst.features),
                b.next_transition(&inst.target, &inst.features)
            );
        }
    }

    #[test]
    fn counterexample_step_structure() {
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let target = Counterexample::optimal_policy();
        let mut g = StreamGenerator::new(&cx.mdp, &cx.behavior, 3)
            .unwrap()
            .with_start(0)
            .unwrap();
        loop {
            let x = g.next_transition(&target, &cx.features);
            if x.state == 0 && x.action == 0 {
                assert_eq!(
                    (x.features, x.reward, x.next_features),
                    (&[1.0][..], 1.0, &[2.0][..])
                );
                assert!((x.rho - 3.0).abs() < 1e-12);
                break;
            }
            if x.action == 1 {
                assert_eq!(x.rho, 0.0);
            }
        }
    }

    #[test]
    fn optimal_policy_on_policy_stays_in_state_two() {
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let target = Counterexample::optimal_policy();
        let mut g = StreamGenerator::on_policy(&cx.mdp, &target, 9)
            .unwrap()
            .with_start(0)
            .unwrap();
        for t in 0..1000 {
            let x = g.next_transition(&target, &cx.features);
            assert_eq!(x.next_state, 1);
            if t > 0 {
                assert_eq!(x.state, 1);
            }
            assert_eq!(x.rho, 1.0);
        }
    }

    #[test]
    fn empirical_frequencies_match_the_model() {
        let inst = make_random_mdp(4, 5, 3, 3).unwrap();
        let d =
            stationary_distribution(&policy_transition_matrix(&inst.mdp, &inst.behavior).unwrap())
                .unwrap();
        let mut g = StreamGenerator::new(&inst.mdp, &inst.behavior, 17).unwrap();
        let steps = 1_000_000;
        let mut visits = [0usize; 5];
        let mut actions = [[0usize; 3]; 5];
        for _ in 0..steps {
            let x = g.next_transition(&inst.target, &inst.features);
            visits[x.state] += 1;
            actions[x.state][x.action] += 1;
        }
        for s in 0..5 {
            let freq = visits[s] as f64 / steps as f64;
            assert!(
                (freq - d[s]).abs() <= 0.01 * d[s],
                "state {s}: {freq} vs {}",
                d[s]
            );
            for a in 0..3 {
                let fa = actions[s][a] as f64 / visits[s] as f64;
                let pb = inst.behavior.row(s)[a];
                assert!(
                    (fa - pb).abs() <= 0.01 * pb.max(0.1),
                    "({s},{a}): {fa} vs {pb}"
                );
            }
        }
    }

    #[test]
    fn walk_episodes_restart_in_the_middle() {
        let walk = make_random_walk_19();
        let mut g = walk.stream(5).unwrap();
        let mut ends = 0;
        let mut prev_end = true;
        for _ in 0..20_000 {
            let x = g.next_transition(&walk.behavior, &walk.features);
            if prev_end {
                assert_eq!(x.state, walk.start);
            }
            assert!(walk.interior().contains(&x.state));
            if x.episode_end {
                ends += 1;
                assert!(x.next_features.iter().all(|v| *v == 0.0));
                assert!(x.reward == 1.0 || x.reward == -1.0);
            } else {
                assert_eq!(x.reward, 0.0);
            }
            prev_end = x.episode_end;
        }
        assert!(ends > 50);
    }
}
