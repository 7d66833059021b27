//! Closed-form ground truth for the quantities the incremental learners
//! estimate.
//!
//! Everything here is computed from the model by dense linear solves. With
//! `P` the target chain `P^π`, `D = diag(d)` the behavior weighting and
//! `Φ` the features, the expected (d-weighted) eligibility trace is
//!
//! * standard traces: `Ē = (I − γλP⊤)⁻¹ D Φ`
//! * emphatic traces: `Ē = (I − γλP⊤)⁻¹ diag(d∘m) Φ`, where the expected
//!   emphasis solves `D m = d + γP⊤D(m − λ1)`.
//!
//! The fixed point of `E[ρ δ e] = 0` is then `A θ = b` with
//! `A = Ē⊤(I − γP)Φ` and `b = Ē⊤R^π`.

mod gradient;

pub use gradient::{
    central_difference, emphasis_vectors, eta_vector, exact_objective, expected_actor_update,
    f_vector, finite_difference_grad_j, followon_vector, gradient_weight_residual,
    gradient_weights, ActorEstimator, EmphasisVectors,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, solve, solve_matrix, Matrix, Vector};
use crate::mdp::{
    exact_value_function, expected_rewards, policy_transition_matrix, stationary_distribution,
    ActionProbabilities, FiniteMdp, FixedPolicy, LinearFeatureMap, MIN_STATE_WEIGHT,
};

/// Fixed points whose `A(λ)` has a larger condition number than this are
/// treated as unreliable by the test suites.
pub const ILL_CONDITIONED: f64 = 1e10;

/// Which eligibility-trace recursion defines the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// `e_t = φ_t + γλρ_{t−1} e_{t−1}` (TD(λ) / GTD(λ)).
    Standard,
    /// `e_t = m_t φ_t + γλρ_{t−1} e_{t−1}` (Emphatic-TD(λ)).
    Emphatic,
}

/// State weighting `d` used for projections; strictly positive, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights(Vector);

impl ProjectionWeights {
    pub fn new(d: Vector) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Dimension("empty weight vector".into()));
        }
        if let Some(w) = d
            .iter()
            .find(|w| !(**w > MIN_STATE_WEIGHT && w.is_finite()))
        {
            return Err(Error::ChainNotErgodic(format!(
                "state weight {w:e} is not positive"
            )));
        }
        if (d.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidConfig(format!("weights sum to {}", d.sum())));
        }
        Ok(Self(d))
    }

    pub fn uniform(n: usize) -> Self {
        Self(Vector::from_element(n, 1.0 / n as f64))
    }

    /// Stationary distribution of the behavior chain.
    pub fn from_behavior(mdp: &FiniteMdp, behavior: &FixedPolicy) -> Result<Self> {
        let p = policy_transition_matrix(mdp, behavior)?;
        Self::new(stationary_distribution(&p)?)
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn diagonal(&self) -> Matrix {
        Matrix::from_diagonal(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("λ = {lambda} outside [0, 1]")));
    }
    Ok(())
}

fn check_dims(
    mdp: &FiniteMdp,
    features: Option<&LinearFeatureMap>,
    weights: &ProjectionWeights,
) -> Result<()> {
    if weights.len() != mdp.n_states() || features.is_some_and(|f| f.n_states() != mdp.n_states()) {
        return Err(Error::Dimension(
            "weights/features do not match the state count".into(),
        ));
    }
    Ok(())
}

/// `(Φ⊤DΦ)⁻¹ Φ⊤D V^π`, the d-weighted least-squares fit of the true values.
pub fn mse_solution(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
) -> Result<Vector> {
    check_dims(mdp, Some(features), weights)?;
    let v = exact_value_function(mdp, target)?;
    let phi = features.matrix();
    let phi_t_d = phi.transpose() * weights.diagonal();
    let gram = &phi_t_d * &phi;
    solve(&gram, &(phi_t_d * v), "Gram matrix Φ⊤DΦ")
        .map_err(|_| Error::RankDeficient("Φ⊤DΦ is singular".into()))
}

/// `d(s)·m(s)` for every state, where `m(s)` is the limiting expected emphasis.
pub fn emphasis_weights(
    mdp: &FiniteMdp,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
) -> Result<Vector> {
    check_lambda(lambda)?;
    check_dims(mdp, None, weights)?;
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let pt = policy_transition_matrix(mdp, target)?.transpose();
    let d = weights.as_vector();
    let system = Matrix::identity(n, n) - &pt * gamma;
    let rhs = d - (&pt * d) * (gamma * lambda);
    solve(&system, &rhs, "emphasis balance equations")
}

/// Row `s` is `d(s) · lim E[e_t | s_t = s]`.
pub fn expected_trace_matrix(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
    kind: TraceKind,
) -> Result<Matrix> {
    check_lambda(lambda)?;
    check_dims(mdp, Some(features), weights)?;
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let scale = match kind {
        TraceKind::Standard => weights.as_vector().clone(),
        TraceKind::Emphatic => emphasis_weights(mdp, target, weights, lambda)?,
    };
    let weighted = Matrix::from_diagonal(&scale) * features.matrix();
    let pt = policy_transition_matrix(mdp, target)?.transpose();
    let system = Matrix::identity(n, n) - pt * (gamma * lambda);
    solve_matrix(&system, &weighted, "trace recursion (I − γλP⊤)")
}

/// Solution of `A θ = b` for one trace kind and λ, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub theta: Vec<f64>,
    /// `A(λ)`, row major.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// 2-norm condition number of `A(λ)`.
    pub condition: f64,
    /// `‖Aθ − b‖₂`.
    pub residual: f64,
}

impl FixedPointReport {
    pub fn theta_vector(&self) -> Vector {
        Vector::from_column_slice(&self.theta)
    }

    pub fn a_matrix(&self) -> Matrix {
        let n = self.b.len();
        Matrix::from_row_iterator(n, n, self.a.iter().flatten().cloned())
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.condition <= ILL_CONDITIONED
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "fixed-point report",
            message: e.to_string(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "fixed-point report",
            message: e.to_string(),
        })
    }
}

/// Fixed point of `E[ρ_t δ_t e_t] = 0` for the given trace kind.
pub fn td_fixed_point(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
    kind: TraceKind,
) -> Result<FixedPointReport> {
    let traces = expected_trace_matrix(mdp, features, target, weights, lambda, kind)?;
    let n_states = mdp.n_states();
    let phi = features.matrix();
    let p = policy_transition_matrix(mdp, target)?;
    let residual_op = (Matrix::identity(n_states, n_states) - p * mdp.discount()) * &phi;
    let a = traces.transpose() * residual_op;
    let b = traces.transpose() * expected_rewards(mdp, target)?;
    let theta = solve(&a, &b, "A(λ)").map_err(|_| {
        Error::Singular(
            "A(λ) is singular: features need full column rank and the behavior chain must reach every state"
                .into(),
        )
    })?;
    let residual = (&a * &theta - &b).norm();
    if residual > 1e-8 * (1.0 + b.norm()) {
        return Err(Error::Singular(format!("A(λ) solve residual {residual:e}")));
    }
    let n = features.n_features();
    Ok(FixedPointReport {
        theta: theta.iter().cloned().collect(),
        a: (0..n).map(|i| a.row(i).iter().cloned().collect()).collect(),
        b: b.iter().cloned().collect(),
        condition: condition_number(&a),
        residual,
    })
}
