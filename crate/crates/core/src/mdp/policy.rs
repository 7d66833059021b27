use crate::error::{Error, Result};

use super::LinearFeatureMap;

/// Anything that can report `π(a|s)` over a finite action set.
pub trait ActionProbabilities {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn prob(&self, s: usize, a: usize) -> f64;
}

/// A stationary policy given as a probability table. Used for behavior
/// policies and for fixed (possibly deterministic) target policies.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy {
    n_states: usize,
    n_actions: usize,
    table: Vec<f64>,
}

impl FixedPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty probability table".into()));
        }
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Dimension("ragged policy table".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} has an invalid probability"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPolicy(format!("state {s} sums to {sum}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            table: rows.into_iter().flatten().collect(),
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            table: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Same action distribution in every state.
    pub fn state_independent(n_states: usize, probs: &[f64]) -> Result<Self> {
        Self::new(vec![probs.to_vec(); n_states])
    }

    /// Copies any policy's current probabilities into a table.
    pub fn snapshot(policy: &impl ActionProbabilities) -> Self {
        let (ns, na) = (policy.n_states(), policy.n_actions());
        let table = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| policy.prob(s, a))
            .collect();
        Self {
            n_states: ns,
            n_actions: na,
            table,
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.n_actions..][..self.n_actions]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }

    /// Fails unless every action has probability at least `1e-12` everywhere.
    pub fn ensure_coverage(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let p = self.prob(s, a);
                if p < super::chain::COVERAGE_FLOOR {
                    return Err(Error::CoverageViolation {
                        state: s,
                        action: a,
                        prob: p,
                    });
                }
            }
        }
        Ok(())
    }
}

impl ActionProbabilities for FixedPolicy {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn prob(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.n_actions + a]
    }
}

/// How action preferences are computed from the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// One preference per `(s, a)`: `h(s,a) = w[s·|A| + a]`.
    TabularSoftmax,
    /// `h(s,a) = w_a·φ(s)` with `w_a = w[a·n .. (a+1)·n]`.
    FeatureSoftmax(LinearFeatureMap),
}

/// Softmax policy `π_w(a|s) ∝ exp h_w(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricPolicy {
    kind: PolicyKind,
    n_states: usize,
    n_actions: usize,
    params: Vec<f64>,
}

impl ParametricPolicy {
    pub fn tabular(n_states: usize, n_actions: usize, params: Vec<f64>) -> Result<Self> {
        Self::new(PolicyKind::TabularSoftmax, n_states, n_actions, params)
    }

    pub fn feature_softmax(
        features: LinearFeatureMap,
        n_actions: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let n_states = features.n_states();
        Self::new(
            PolicyKind::FeatureSoftmax(features),
            n_states,
            n_actions,
            params,
        )
    }

    pub fn new(
        kind: PolicyKind,
        n_states: usize,
        n_actions: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty state or action set".into()));
        }
        let expected = match &kind {
            PolicyKind::TabularSoftmax => n_states * n_actions,
            PolicyKind::FeatureSoftmax(phi) => {
                if phi.n_states() != n_states {
                    return Err(Error::Dimension(
                        "policy features cover wrong state count".into(),
                    ));
                }
                n_actions * phi.n_features()
            }
        };
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "policy expects {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidPolicy("non-finite parameter".into()));
        }
        Ok(Self {
            kind,
            n_states,
            n_actions,
            params,
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// A copy of this policy with a different parameter vector.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.kind.clone(), self.n_states, self.n_actions, params)
    }

    fn preference(&self, s: usize, a: usize) -> f64 {
        match &self.kind {
            PolicyKind::TabularSoftmax => self.params[s * self.n_actions + a],
            PolicyKind::FeatureSoftmax(phi) => {
                let n = phi.n_features();
                crate::linalg::dot(&self.params[a * n..][..n], phi.row(s))
            }
        }
    }

    /// Writes `π_w(·|s)` into `out` and returns `log Σ_a exp h(s,a)`.
    fn fill_probabilities(&self, s: usize, out: &mut [f64]) -> f64 {
        debug_assert_eq!(out.len(), self.n_actions);
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.preference(s, a);
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        max + total.ln()
    }

    pub fn probabilities(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        self.fill_probabilities(s, &mut out);
        out
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        let mut scratch = vec![0.0; self.n_actions];
        let log_z = self.fill_probabilities(s, &mut scratch);
        self.preference(s, a) - log_z
    }

    /// Writes the score `∇_w log π_w(a|s)` into `out` (length `n_params`).
    pub fn score_into(&self, s: usize, a: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.params.len());
        let probs = self.probabilities(s);
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.kind {
            PolicyKind::TabularSoftmax => {
                let block = &mut out[s * self.n_actions..][..self.n_actions];
                for (b, o) in block.iter_mut().enumerate() {
                    *o = if b == a { 1.0 } else { 0.0 } - probs[b];
                }
            }
            PolicyKind::FeatureSoftmax(phi) => {
                let n = phi.n_features();
                let row = phi.row(s);
                for (b, p) in probs.iter().enumerate() {
                    let coef = if b == a { 1.0 } else { 0.0 } - p;
                    for (o, f) in out[b * n..][..n].iter_mut().zip(row) {
                        *o = coef * f;
                    }
                }
            }
        }
    }

    pub fn score(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.params.len()];
        self.score_into(s, a, &mut out);
        out
    }

    /// `∇_w π_w(a|s) = π_w(a|s) ∇_w log π_w(a|s)`.
    pub fn prob_gradient(&self, s: usize, a: usize) -> Vec<f64> {
        let p = self.prob(s, a);
        self.score(s, a).into_iter().map(|g| p * g).collect()
    }
}

impl ActionProbabilities for ParametricPolicy {
    fn n_states(&self) -> usize {
        self.n_states
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn prob(&self, s: usize, a: usize) -> f64 {
        let mut scratch = vec![0.0; self.n_actions];
        self.fill_probabilities(s, &mut scratch);
        scratch[a]
    }
}
