//! Incremental linear policy-evaluation learners: TD(λ), GTD(λ) and
//! Emphatic-TD(λ).
//!
//! Every step costs `O(n)` in the feature count. Trace recursions consume the
//! previous step's importance ratio `ρ_{t−1}` before it is replaced by `ρ_t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, dot, norm2};

/// Norms at or below this are left alone by [`normalize_trace`].
pub const NORMALIZE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// On-policy TD(λ) with accumulating traces.
    Td,
    Gtd,
    Emphatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Scale the trace to unit length before each θ update.
    #[serde(default)]
    pub normalize: bool,
}

impl CriticConfig {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("γ = {gamma} outside [0, 1)")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidConfig(format!("λ = {lambda} outside [0, 1]")));
        }
        Ok(Self {
            gamma,
            lambda,
            normalize: false,
        })
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub config: CriticConfig,
    pub theta: Vec<f64>,
    /// Eligibility trace.
    pub e: Vec<f64>,
    /// Secondary weights (GTD only).
    pub u: Vec<f64>,
    /// Emphasis (Emphatic-TD only); `λ` before the first step.
    pub m: f64,
    pub rho_prev: f64,
    pub t: u64,
    scratch: Vec<f64>,
}

impl CriticState {
    pub fn new(n_features: usize, config: CriticConfig) -> Self {
        Self::with_theta(vec![0.0; n_features], config)
    }

    pub fn with_theta(theta: Vec<f64>, config: CriticConfig) -> Self {
        let n = theta.len();
        Self {
            config,
            theta,
            e: vec![0.0; n],
            u: vec![0.0; n],
            m: config.lambda,
            rho_prev: 0.0,
            t: 0,
            scratch: vec![0.0; n],
        }
    }

    /// Clears traces and secondary weights; θ and the step count are kept.
    pub fn reset(&mut self) {
        self.reset_traces();
        self.u.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Episode boundary: clears the traces but keeps learned weights.
    pub fn reset_traces(&mut self) {
        self.e.iter_mut().for_each(|x| *x = 0.0);
        self.m = self.config.lambda;
        self.rho_prev = 0.0;
    }

    pub fn n_features(&self) -> usize {
        self.theta.len()
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        dot(&self.theta, features)
    }

    fn td_error(&self, x: &Transition<'_>) -> f64 {
        x.reward + self.config.gamma * dot(&self.theta, x.next_features)
            - dot(&self.theta, x.features)
    }

    fn trace_decay(&self) -> f64 {
        self.config.gamma * self.config.lambda * self.rho_prev
    }

    fn finish(&mut self, x: &Transition<'_>) -> Result<()> {
        if !all_finite(&self.theta) || !all_finite(&self.u) || !all_finite(&self.e) {
            return Err(Error::Divergence {
                step: self.t,
                what: "critic weights".into(),
            });
        }
        self.rho_prev = x.rho;
        self.t += 1;
        if x.episode_end {
            self.reset_traces();
        }
        Ok(())
    }

    fn check_dims(&self, x: &Transition<'_>) {
        debug_assert_eq!(x.features.len(), self.theta.len());
        debug_assert_eq!(x.next_features.len(), self.theta.len());
    }
}

/// `e / ‖e‖₂`, or `e` unchanged when its norm is at most [`NORMALIZE_FLOOR`].
pub fn normalize_trace(e: &[f64]) -> Vec<f64> {
    let mut out = e.to_vec();
    normalize_in_place(&mut out);
    out
}

/// The trace used in updates: `e` itself, or its normalized copy.
fn update_trace<'a>(e: &'a [f64], scratch: &'a mut [f64], normalize: bool) -> &'a [f64] {
    if normalize {
        scratch.copy_from_slice(e);
        normalize_in_place(scratch);
        scratch
    } else {
        e
    }
}

fn normalize_in_place(e: &mut [f64]) {
    let norm = norm2(e);
    if norm > NORMALIZE_FLOOR {
        e.iter_mut().for_each(|x| *x /= norm);
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `e ← scale·φ + decay·e`.
fn accumulate(e: &mut [f64], scale: f64, phi: &[f64], decay: f64) {
    for (ei, fi) in e.iter_mut().zip(phi) {
        *ei = scale * fi + decay * *ei;
    }
}

/// One GTD(λ) step; returns δ.
///
/// `θ ← θ + αρ[δe − γ(1−λ)φ′(e⊤u)]`, `u ← u + α_u[ρδe − (u⊤φ)φ]`. At λ = 1
/// the correction term vanishes and `u` no longer influences θ.
pub fn gtd_lambda_step(
    state: &mut CriticState,
    x: &Transition<'_>,
    alpha: f64,
    alpha_u: f64,
) -> Result<f64> {
    state.check_dims(x);
    let decay = state.trace_decay();
    accumulate(&mut state.e, 1.0, x.features, decay);
    let delta = state.td_error(x);
    let CriticConfig { gamma, lambda, .. } = state.config;
    let u_phi = dot(&state.u, x.features);
    let e = update_trace(&state.e, &mut state.scratch, state.config.normalize);
    let coef = alpha * x.rho * delta;
    axpy(&mut state.theta, coef, e);
    if lambda < 1.0 {
        let correction = alpha * x.rho * gamma * (1.0 - lambda) * dot(e, &state.u);
        axpy(&mut state.theta, -correction, x.next_features);
    }
    axpy(&mut state.u, alpha_u * x.rho * delta, e);
    axpy(&mut state.u, -alpha_u * u_phi, x.features);
    state.finish(x)?;
    Ok(delta)
}

/// One Emphatic-TD(λ) step; returns δ.
///
/// `m ← 1 + γρ_{t−1}(m − λ)`, `e ← mφ + γλρ_{t−1}e`, `θ ← θ + αρδe`.
pub fn emphatic_td_step(state: &mut CriticState, x: &Transition<'_>, alpha: f64) -> Result<f64> {
    state.check_dims(x);
    let CriticConfig { gamma, lambda, .. } = state.config;
    state.m = 1.0 + gamma * state.rho_prev * (state.m - lambda);
    if !(state.m > 0.0) {
        return Err(Error::InvariantViolation {
            step: state.t,
            what: format!("emphasis m = {}", state.m),
        });
    }
    let decay = state.trace_decay();
    let m = state.m;
    accumulate(&mut state.e, m, x.features, decay);
    let delta = state.td_error(x);
    let coef = alpha * x.rho * delta;
    let e = update_trace(&state.e, &mut state.scratch, state.config.normalize);
    axpy(&mut state.theta, coef, e);
    state.finish(x)?;
    Ok(delta)
}

/// One on-policy TD(λ) step; returns δ.
pub fn td_lambda_step(state: &mut CriticState, x: &Transition<'_>, alpha: f64) -> Result<f64> {
    debug_assert!(
        x.rho == 1.0,
        "TD(λ) needs an on-policy stream, got ρ = {}",
        x.rho
    );
    state.check_dims(x);
    let CriticConfig { gamma, lambda, .. } = state.config;
    accumulate(&mut state.e, 1.0, x.features, gamma * lambda);
    let delta = state.td_error(x);
    let coef = alpha * delta;
    let e = update_trace(&state.e, &mut state.scratch, state.config.normalize);
    axpy(&mut state.theta, coef, e);
    state.finish(x)?;
    Ok(delta)
}

/// A critic of a fixed kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub kind: CriticKind,
    pub state: CriticState,
}

impl Critic {
    pub fn new(kind: CriticKind, n_features: usize, config: CriticConfig) -> Self {
        Self {
            kind,
            state: CriticState::new(n_features, config),
        }
    }

    /// One update; `alpha_u` is ignored by the single-weight critics.
    pub fn step(&mut self, x: &Transition<'_>, alpha: f64, alpha_u: f64) -> Result<f64> {
        match self.kind {
            CriticKind::Td => td_lambda_step(&mut self.state, x, alpha),
            CriticKind::Gtd => gtd_lambda_step(&mut self.state, x, alpha, alpha_u),
            CriticKind::Emphatic => emphatic_td_step(&mut self.state, x, alpha),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.state.theta
    }
}

/// Per-step CSV log with columns `t,delta,trace_norm,m,theta_0,…`.
pub struct TraceLog<W: Write> {
    writer: csv::Writer<W>,
    n_features: usize,
}

impl<W: Write> TraceLog<W> {
    pub fn new(sink: W, n_features: usize) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec![
            "t".to_string(),
            "delta".into(),
            "trace_norm".into(),
            "m".into(),
        ];
        header.extend((0..n_features).map(|i| format!("theta_{i}")));
        writer.write_record(&header)?;
        Ok(Self { writer, n_features })
    }

    /// Logs the state after a step that produced `delta`.
    pub fn record(&mut self, state: &CriticState, delta: f64) -> Result<()> {
        if state.n_features() != self.n_features {
            return Err(Error::Dimension("trace log width".into()));
        }
        let mut row = vec![
            (state.t - 1).to_string(),
            delta.to_string(),
            norm2(&state.e).to_string(),
            state.m.to_string(),
        ];
        row.extend(state.theta.iter().map(f64::to_string));
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step<'a>(phi: &'a [f64], next: &'a [f64], reward: f64, rho: f64) -> Transition<'a> {
        Transition {
            state: 0,
            action: 0,
            reward,
            next_state: 0,
            features: phi,
            next_features: next,
            rho,
            episode_end: false,
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_trace(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalize_trace(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(normalize_trace(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn first_emphatic_step_from_reset() {
        let mut s = CriticState::new(2, CriticConfig::new(0.9, 0.3).unwrap());
        emphatic_td_step(&mut s, &step(&[1.0, 2.0], &[0.5, 0.5], 1.0, 2.0), 0.1).unwrap();
        assert_eq!(s.m, 1.0);
        assert_eq!(s.e, vec![1.0, 2.0]);
        assert_eq!(s.rho_prev, 2.0);
        // δ = 1, θ += 0.1·2·1·e
        assert_eq!(s.theta, vec![0.2, 0.4]);
    }

    #[test]
    fn zero_steps_only_move_traces() {
        let mut s = CriticState::new(2, CriticConfig::new(0.9, 0.5).unwrap());
        for _ in 0..5 {
            gtd_lambda_step(&mut s, &step(&[1.0, 0.0], &[0.0, 1.0], 1.0, 1.5), 0.0, 0.0).unwrap();
        }
        assert_eq!(s.theta, vec![0.0, 0.0]);
        assert_eq!(s.u, vec![0.0, 0.0]);
        assert_eq!(s.rho_prev, 1.5);
        assert!(s.e[0] > 1.0);
    }

    #[test]
    fn lambda_zero_trace_is_the_feature() {
        let mut s = CriticState::new(2, CriticConfig::new(0.9, 0.0).unwrap());
        for k in 0..4 {
            let phi = [k as f64, 1.0];
            gtd_lambda_step(&mut s, &step(&phi, &[0.0, 1.0], 0.3, 1.2), 0.05, 0.05).unwrap();
            assert_eq!(s.e, phi.to_vec());
        }
    }

    #[test]
    fn td_zero_is_one_step_td() {
        let mut s = CriticState::with_theta(vec![0.5, -0.5], CriticConfig::new(0.9, 0.0).unwrap());
        let delta = td_lambda_step(&mut s, &step(&[1.0, 0.0], &[0.0, 1.0], 1.0, 1.0), 0.1).unwrap();
        assert!((delta - (1.0 - 0.45 - 0.5)).abs() < 1e-15);
        assert!((s.theta[0] - (0.5 + 0.1 * delta)).abs() < 1e-15);
        assert_eq!(s.theta[1], -0.5);
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = CriticState::new(1, CriticConfig::new(0.9, 0.0).unwrap());
        let err = gtd_lambda_step(&mut s, &step(&[1.0], &[1.0], f64::INFINITY, 1.0), 0.1, 0.1)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }));
    }

    #[test]
    fn episode_end_clears_traces() {
        let mut s = CriticState::new(1, CriticConfig::new(0.9, 0.7).unwrap());
        let mut x = step(&[1.0], &[0.0], 1.0, 1.0);
        x.episode_end = true;
        emphatic_td_step(&mut s, &x, 0.1).unwrap();
        assert_eq!((s.e[0], s.m, s.rho_prev), (0.0, 0.7, 0.0));
        assert!(s.theta[0] > 0.0);
    }

    #[test]
    fn normalized_trace_keeps_raw_recursion() {
        let cfg = CriticConfig::new(0.9, 1.0).unwrap();
        let mut raw = CriticState::new(1, cfg);
        let mut unit = CriticState::new(1, cfg.normalized(true));
        for _ in 0..3 {
            let x = step(&[2.0], &[2.0], 0.0, 1.0);
            td_lambda_step(&mut raw, &x, 0.0).unwrap();
            td_lambda_step(&mut unit, &x, 0.0).unwrap();
        }
        assert_eq!(raw.e, unit.e);
        let x = step(&[2.0], &[0.0], 1.0, 1.0);
        td_lambda_step(&mut unit, &x, 0.5).unwrap();
        // δ = 1 and the normalized trace is 1
        assert_eq!(unit.theta[0], 0.5);
    }

    #[test]
    fn trace_log_rows() {
        let mut s = CriticState::new(2, CriticConfig::new(0.5, 0.5).unwrap());
        let mut log = TraceLog::new(Vec::new(), 2).unwrap();
        let d = emphatic_td_step(&mut s, &step(&[1.0, 0.0], &[0.0, 0.0], 1.0, 1.0), 0.5).unwrap();
        log.record(&s, d).unwrap();
        let text = String::from_utf8(log.into_inner().unwrap()).unwrap();
        assert_eq!(
            text,
            "t,delta,trace_norm,m,theta_0,theta_1\n0,1,1,1,0.5,0\n"
        );
    }
}
