//! Policy-improvement learners driven by a linear critic.
//!
//! Each actor step first advances its own traces with `ρ_{t−1}`, then lets
//! the critic update and produce `δ_t`, and finally moves the policy
//! parameters along its sampled direction. Scores `∇log π_w(a|s)` are
//! evaluated at the parameters in force before the step's actor update.

use serde::{Deserialize, Serialize};

use crate::critics::{Critic, CriticKind};
use crate::envs::{StreamGenerator, Transition};
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::mdp::{LinearFeatureMap, ParametricPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    /// `w ← w + βρδψ`, `ψ_t = f_t∇log π_t + γρ_{t−1}ψ_{t−1}`; GTD(1) critic.
    GradientAc,
    /// `ψ_t = f^λ_t∇log π_t + z_t + γλρ_{t−1}ψ_{t−1}`; Emphatic-TD(λ) critic.
    EmphaticAc,
    /// `w ← w + βρδ∇log π`; GTD(λ) critic.
    OffPac,
    /// `w ← w + βδ∇log π` on an on-policy stream.
    OnPolicy,
}

/// Box constraint `‖w‖_∞ ≤ w_max` applied after every actor update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub w_max: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Self { w_max: 1e3 }
    }
}

impl Projection {
    pub fn apply(&self, w: &mut [f64]) {
        for x in w {
            *x = x.clamp(-self.w_max, self.w_max);
        }
    }
}

/// Step sizes for one combined update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steps {
    pub alpha: f64,
    pub alpha_u: f64,
    pub beta: f64,
}

impl Steps {
    /// `α_u = α`.
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            alpha_u: alpha,
            beta,
        }
    }

    /// Critic and actor both frozen; traces and directions still advance.
    pub fn frozen() -> Self {
        Self::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorState {
    pub gamma: f64,
    pub lambda: f64,
    /// Score trace.
    pub psi: Vec<f64>,
    /// Followon weight (Gradient-AC).
    pub f: f64,
    /// Emphasis (Emphatic-AC).
    pub m: f64,
    /// λ-followon (Emphatic-AC).
    pub f_lambda: f64,
    pub z: Vec<f64>,
    pub rho_prev: f64,
    pub t: u64,
    /// The last sampled direction before scaling by β (e.g. `ρδψ`).
    pub increment: Vec<f64>,
    prev: Option<(usize, usize)>,
    m_prev: f64,
    score: Vec<f64>,
    prev_score: Vec<f64>,
}

impl ActorState {
    pub fn new(n_params: usize, gamma: f64, lambda: f64) -> Self {
        Self {
            gamma,
            lambda,
            psi: vec![0.0; n_params],
            f: 0.0,
            m: lambda,
            f_lambda: 0.0,
            z: vec![0.0; n_params],
            rho_prev: 0.0,
            t: 0,
            increment: vec![0.0; n_params],
            prev: None,
            m_prev: lambda,
            score: vec![0.0; n_params],
            prev_score: vec![0.0; n_params],
        }
    }

    /// Episode boundary: clears every trace.
    pub fn reset_traces(&mut self) {
        self.psi.iter_mut().for_each(|x| *x = 0.0);
        self.z.iter_mut().for_each(|x| *x = 0.0);
        self.f = 0.0;
        self.f_lambda = 0.0;
        self.m = self.lambda;
        self.m_prev = self.lambda;
        self.rho_prev = 0.0;
        self.prev = None;
    }
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(what.into()))
    }
}

/// `ψ ← f·score (+ z) + decay·ψ`.
fn accumulate_psi(psi: &mut [f64], f: f64, score: &[f64], z: Option<&[f64]>, decay: f64) {
    match z {
        None => {
            for (p, g) in psi.iter_mut().zip(score) {
                *p = f * g + decay * *p;
            }
        }
        Some(z) => {
            for ((p, g), zi) in psi.iter_mut().zip(score).zip(z) {
                *p = f * g + zi + decay * *p;
            }
        }
    }
}

/// `w ← Γ(w + β·coef·direction)` and bookkeeping shared by all actors.
fn apply(
    actor: &mut ActorState,
    policy: &mut ParametricPolicy,
    x: &Transition<'_>,
    coef: f64,
    use_psi: bool,
    beta: f64,
    projection: Option<&Projection>,
) -> Result<()> {
    let direction = if use_psi { &actor.psi } else { &actor.score };
    for (inc, g) in actor.increment.iter_mut().zip(direction) {
        *inc = coef * g;
    }
    let w = policy.params_mut();
    for (wi, inc) in w.iter_mut().zip(&actor.increment) {
        *wi += beta * inc;
    }
    if let Some(p) = projection {
        p.apply(w);
    }
    if !all_finite(w) || !all_finite(&actor.psi) {
        return Err(Error::Divergence {
            step: actor.t,
            what: "actor parameters".into(),
        });
    }
    actor.rho_prev = x.rho;
    actor.prev = Some((x.state, x.action));
    actor.m_prev = actor.m;
    actor.t += 1;
    if x.episode_end {
        actor.reset_traces();
    }
    Ok(())
}

/// One Gradient-AC step with a GTD(1) critic; returns δ.
pub fn gradient_ac_step(
    actor: &mut ActorState,
    critic: &mut Critic,
    policy: &mut ParametricPolicy,
    x: &Transition<'_>,
    steps: Steps,
    projection: Option<&Projection>,
) -> Result<f64> {
    require(
        critic.kind == CriticKind::Gtd && critic.state.config.lambda == 1.0,
        "Gradient-AC needs a GTD(1) critic",
    )?;
    let decay = actor.gamma * actor.rho_prev;
    actor.f = 1.0 + decay * actor.f;
    policy.score_into(x.state, x.action, &mut actor.score);
    accumulate_psi(&mut actor.psi, actor.f, &actor.score, None, decay);
    let delta = critic.step(x, steps.alpha, steps.alpha_u)?;
    apply(
        actor,
        policy,
        x,
        x.rho * delta,
        true,
        steps.beta,
        projection,
    )?;
    Ok(delta)
}

/// One Emphatic-AC step with an Emphatic-TD(λ) critic of the same λ; returns δ.
///
/// `m_t = 1 + γρ_{t−1}(m_{t−1} − λ)`, `f^λ_t = m_t + γλρ_{t−1}f^λ_{t−1}`,
/// `z_t = γρ_{t−1}((m_{t−1} − λ)∇log π(a_{t−1}|s_{t−1}) + z_{t−1})`, with the
/// previous score re-evaluated at the current parameters.
pub fn emphatic_ac_step(
    actor: &mut ActorState,
    critic: &mut Critic,
    policy: &mut ParametricPolicy,
    x: &Transition<'_>,
    steps: Steps,
    projection: Option<&Projection>,
) -> Result<f64> {
    let lambda = actor.lambda;
    require(
        critic.kind == CriticKind::Emphatic && critic.state.config.lambda == lambda,
        "Emphatic-AC needs an Emphatic-TD critic with the actor's λ",
    )?;
    let gamma = actor.gamma;
    let rho_prev = actor.rho_prev;
    actor.m = 1.0 + gamma * rho_prev * (actor.m - lambda);
    let decay = gamma * lambda * rho_prev;
    actor.f_lambda = actor.m + decay * actor.f_lambda;
    policy.score_into(x.state, x.action, &mut actor.score);
    let z = if lambda < 1.0 {
        let excess = actor.m_prev - lambda;
        match actor.prev {
            Some((s, a)) => {
                policy.score_into(s, a, &mut actor.prev_score);
                for (zi, g) in actor.z.iter_mut().zip(&actor.prev_score) {
                    *zi = gamma * rho_prev * (excess * g + *zi);
                }
            }
            None => actor.z.iter_mut().for_each(|zi| *zi = 0.0),
        }
        Some(actor.z.as_slice())
    } else {
        None
    };
    accumulate_psi(&mut actor.psi, actor.f_lambda, &actor.score, z, decay);
    let delta = critic.step(x, steps.alpha, steps.alpha_u)?;
    apply(
        actor,
        policy,
        x,
        x.rho * delta,
        true,
        steps.beta,
        projection,
    )?;
    Ok(delta)
}

/// One Off-PAC step, `w ← w + βρδ∇log π_w(a|s)`; returns δ.
pub fn offpac_actor_step(
    actor: &mut ActorState,
    critic: &mut Critic,
    policy: &mut ParametricPolicy,
    x: &Transition<'_>,
    steps: Steps,
    projection: Option<&Projection>,
) -> Result<f64> {
    require(
        critic.kind == CriticKind::Gtd,
        "Off-PAC needs a GTD(λ) critic",
    )?;
    policy.score_into(x.state, x.action, &mut actor.score);
    let delta = critic.step(x, steps.alpha, steps.alpha_u)?;
    apply(
        actor,
        policy,
        x,
        x.rho * delta,
        false,
        steps.beta,
        projection,
    )?;
    Ok(delta)
}

/// One classical on-policy step, `w ← w + βδ∇log π_w(a|s)`; returns δ.
pub fn onpolicy_ac_step(
    actor: &mut ActorState,
    critic: &mut Critic,
    policy: &mut ParametricPolicy,
    x: &Transition<'_>,
    steps: Steps,
    projection: Option<&Projection>,
) -> Result<f64> {
    require(
        matches!(critic.kind, CriticKind::Td | CriticKind::Gtd),
        "the on-policy actor needs a TD(λ) or GTD(λ) critic",
    )?;
    debug_assert!(x.rho == 1.0, "on-policy actor fed ρ = {}", x.rho);
    policy.score_into(x.state, x.action, &mut actor.score);
    let delta = critic.step(x, steps.alpha, steps.alpha_u)?;
    apply(actor, policy, x, delta, false, steps.beta, projection)?;
    Ok(delta)
}

/// An actor, its critic and the policy it improves.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub kind: ActorKind,
    pub actor: ActorState,
    pub critic: Critic,
    pub policy: ParametricPolicy,
    pub projection: Option<Projection>,
}

impl ActorCritic {
    /// Pairs an actor with a critic, checking that the two are compatible.
    pub fn new(kind: ActorKind, critic: Critic, policy: ParametricPolicy) -> Result<Self> {
        let cfg = critic.state.config;
        match kind {
            ActorKind::GradientAc => require(
                critic.kind == CriticKind::Gtd && cfg.lambda == 1.0,
                "Gradient-AC needs a GTD(1) critic",
            )?,
            ActorKind::EmphaticAc => require(
                critic.kind == CriticKind::Emphatic,
                "Emphatic-AC needs an Emphatic-TD critic",
            )?,
            ActorKind::OffPac => require(
                critic.kind == CriticKind::Gtd,
                "Off-PAC needs a GTD(λ) critic",
            )?,
            ActorKind::OnPolicy => require(
                matches!(critic.kind, CriticKind::Td | CriticKind::Gtd),
                "the on-policy actor needs a TD(λ) or GTD(λ) critic",
            )?,
        }
        let actor = ActorState::new(policy.n_params(), cfg.gamma, cfg.lambda);
        Ok(Self {
            kind,
            actor,
            critic,
            policy,
            projection: Some(Projection::default()),
        })
    }

    pub fn with_projection(mut self, projection: Option<Projection>) -> Self {
        self.projection = projection;
        self
    }

    /// Consumes one transition generated under the current policy; returns δ.
    pub fn step(&mut self, x: &Transition<'_>, steps: Steps) -> Result<f64> {
        let proj = self.projection.as_ref();
        let (a, c, p) = (&mut self.actor, &mut self.critic, &mut self.policy);
        match self.kind {
            ActorKind::GradientAc => gradient_ac_step(a, c, p, x, steps, proj),
            ActorKind::EmphaticAc => emphatic_ac_step(a, c, p, x, steps, proj),
            ActorKind::OffPac => offpac_actor_step(a, c, p, x, steps, proj),
            ActorKind::OnPolicy => onpolicy_ac_step(a, c, p, x, steps, proj),
        }
    }

    /// Draws the next transition from `stream` and learns from it.
    pub fn advance(
        &mut self,
        stream: &mut StreamGenerator,
        features: &LinearFeatureMap,
        steps: Steps,
    ) -> Result<f64> {
        let x = stream.next_transition(&self.policy, features);
        self.step(&x, steps)
    }
}
