//! Finite MDPs, linear feature maps, policies and exact chain analysis.

mod chain;
mod file;
mod policy;

pub use chain::{
    exact_value_function, expected_rewards, importance_ratio, policy_transition_matrix,
    stationary_distribution, DENSE_STATIONARY_LIMIT, MIN_STATE_WEIGHT,
};
pub use file::MdpDocument;
pub use policy::{ActionProbabilities, FixedPolicy, ParametricPolicy, PolicyKind};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, Matrix};

/// Tolerance on every `Σ_{s'} P(s'|s,a) = 1` row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Tabular model: `P(s'|s,a)` and `r(s,a,s')` stored densely, indexed
/// `[state][action][next_state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp(
                "need at least one state and one action".into(),
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        let len = n_states * n_actions * n_states;
        if transition.len() != len || reward.len() != len {
            return Err(Error::Dimension(format!(
                "expected {len} transition and reward entries, got {} and {}",
                transition.len(),
                reward.len()
            )));
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return Err(Error::InvalidMdp(format!(
                        "P(.|{s},{a}) has invalid entry {p}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidMdp(format!(
                        "P(.|{s},{a}) sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            discount,
            transition,
            reward,
        })
    }

    /// Builds a model from sparse `(s, a, s', prob, reward)` entries; every
    /// entry not listed has probability and reward zero.
    pub fn from_entries<I>(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        entries: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, f64, f64)>,
    {
        let len = n_states * n_actions * n_states;
        let mut transition = vec![0.0; len];
        let mut reward = vec![0.0; len];
        for (s, a, next, p, r) in entries {
            if s >= n_states || a >= n_actions || next >= n_states {
                return Err(Error::Dimension(format!(
                    "entry ({s},{a},{next}) out of range for {n_states} states, {n_actions} actions"
                )));
            }
            let i = (s * n_actions + a) * n_states + next;
            transition[i] = p;
            reward[i] = r;
        }
        Self::new(n_states, n_actions, discount, transition, reward)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.offset(s, a) + next]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[self.offset(s, a) + next]
    }

    /// `P(·|s,a)` as a slice over next states.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[self.offset(s, a)..][..self.n_states]
    }

    pub fn rewards_from(&self, s: usize, a: usize) -> &[f64] {
        &self.reward[self.offset(s, a)..][..self.n_states]
    }

    /// `Σ_{s'} P(s'|s,a) r(s,a,s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.next_distribution(s, a)
            .iter()
            .zip(self.rewards_from(s, a))
            .map(|(p, r)| p * r)
            .sum()
    }

    /// Same dynamics with every reward multiplied by `c`.
    pub fn scale_rewards(&self, c: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.discount,
            self.transition.clone(),
            self.reward.iter().map(|r| r * c).collect(),
        )
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            discount,
            self.transition.clone(),
            self.reward.clone(),
        )
    }
}

/// State features `Φ` (one row per state).
///
/// Columns must be linearly independent. The unit intercept in the last
/// column is reported by [`LinearFeatureMap::has_intercept`] rather than
/// enforced, because tabular features and the two-state counterexample do not
/// carry one; [`LinearFeatureMap::with_intercept`] enforces it.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeatureMap {
    n_states: usize,
    n_features: usize,
    rows: Vec<f64>,
    zeros: Vec<f64>,
}

impl LinearFeatureMap {
    /// Relative singular-value threshold below which `Φ` counts as rank deficient.
    pub const RANK_TOLERANCE: f64 = 1e-10;

    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_features == 0 {
            return Err(Error::InvalidFeatures("empty feature matrix".into()));
        }
        if rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::Dimension("ragged feature rows".into()));
        }
        if n_features > n_states {
            return Err(Error::RankDeficient(format!(
                "{n_features} features over only {n_states} states"
            )));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeatures("non-finite feature value".into()));
        }
        let map = Self {
            n_states,
            n_features,
            rows: flat,
            zeros: vec![0.0; n_features],
        };
        let cond = condition_number(&map.matrix());
        if !(cond.is_finite() && cond < 1.0 / Self::RANK_TOLERANCE) {
            return Err(Error::RankDeficient(format!("condition number {cond:e}")));
        }
        Ok(map)
    }

    /// Like [`LinearFeatureMap::new`] but also requires `φ_n(s) = 1` for every state.
    pub fn with_intercept(rows: Vec<Vec<f64>>) -> Result<Self> {
        let map = Self::new(rows)?;
        if !map.has_intercept() {
            return Err(Error::InvalidFeatures(
                "last feature is not identically 1".into(),
            ));
        }
        Ok(map)
    }

    /// Identity features: one indicator per state.
    pub fn tabular(n_states: usize) -> Self {
        let mut rows = vec![0.0; n_states * n_states];
        for s in 0..n_states {
            rows[s * n_states + s] = 1.0;
        }
        Self {
            n_states,
            n_features: n_states,
            rows,
            zeros: vec![0.0; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.rows[s * self.n_features..][..self.n_features]
    }

    /// An all-zero feature vector, used for the successor of a terminal step.
    pub fn zero_row(&self) -> &[f64] {
        &self.zeros
    }

    pub fn has_intercept(&self) -> bool {
        (0..self.n_states).all(|s| self.row(s)[self.n_features - 1] == 1.0)
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n_states, self.n_features, &self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteMdp::from_entries(2, 1, 0.5, [(0, 0, 0, 0.5, 0.0), (1, 0, 1, 1.0, 0.0)]);
        assert!(matches!(err, Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn rejects_unit_discount() {
        let err = FiniteMdp::from_entries(1, 1, 1.0, [(0, 0, 0, 1.0, 0.0)]);
        assert!(matches!(err, Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn rejects_collinear_features() {
        let err = LinearFeatureMap::new(vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(err, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn intercept_detection() {
        let phi = LinearFeatureMap::with_intercept(vec![vec![0.3, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(phi.has_intercept());
        assert!(!LinearFeatureMap::tabular(3).has_intercept());
        assert!(LinearFeatureMap::with_intercept(vec![vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn expected_reward_mixes_next_states() {
        let mdp = FiniteMdp::from_entries(
            2,
            1,
            0.9,
            [
                (0, 0, 0, 0.25, 4.0),
                (0, 0, 1, 0.75, -4.0),
                (1, 0, 1, 1.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(mdp.expected_reward(0, 0), -2.0);
        assert_eq!(mdp.expected_reward(1, 0), 1.0);
    }
}
