use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix, Vector};

use super::{ActionProbabilities, FiniteMdp};

/// Behavior probabilities below this count as missing coverage.
pub(crate) const COVERAGE_FLOOR: f64 = 1e-12;

/// Stationary weights at or below this mean the chain is not irreducible.
pub const MIN_STATE_WEIGHT: f64 = 1e-12;

/// Largest chain solved with a dense linear system; bigger chains use power iteration.
pub const DENSE_STATIONARY_LIMIT: usize = 1000;

const POWER_ITERATION_CAP: usize = 1_000_000;
const STATIONARY_RESIDUAL: f64 = 1e-10;

fn check_shape(mdp: &FiniteMdp, policy: &impl ActionProbabilities) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(format!(
            "policy is {}x{}, MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `P^π(s'|s) = Σ_a π(a|s) P(s'|s,a)`.
pub fn policy_transition_matrix(
    mdp: &FiniteMdp,
    policy: &impl ActionProbabilities,
) -> Result<Matrix> {
    check_shape(mdp, policy)?;
    let n = mdp.n_states();
    let mut p = Matrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (next, q) in mdp.next_distribution(s, a).iter().enumerate() {
                p[(s, next)] += pa * q;
            }
        }
    }
    Ok(p)
}

/// `R^π(s) = Σ_{a,s'} π(a|s) P(s'|s,a) r(s,a,s')`.
pub fn expected_rewards(mdp: &FiniteMdp, policy: &impl ActionProbabilities) -> Result<Vector> {
    check_shape(mdp, policy)?;
    Ok(Vector::from_iterator(
        mdp.n_states(),
        (0..mdp.n_states()).map(|s| {
            (0..mdp.n_actions())
                .map(|a| policy.prob(s, a) * mdp.expected_reward(s, a))
                .sum::<f64>()
        }),
    ))
}

/// Stationary distribution `d` of a row-stochastic matrix (`d⊤P = d⊤`, `Σd = 1`).
///
/// Chains up to [`DENSE_STATIONARY_LIMIT`] states are solved directly by
/// replacing one balance equation with the normalisation constraint; larger
/// chains use power iteration. Either way the result is rejected unless
/// every state has weight above [`MIN_STATE_WEIGHT`].
pub fn stationary_distribution(p: &Matrix) -> Result<Vector> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::Dimension(
            "transition matrix must be square and non-empty".into(),
        ));
    }
    let d = if n <= DENSE_STATIONARY_LIMIT {
        let mut system = p.transpose() - Matrix::identity(n, n);
        system.row_mut(n - 1).fill(1.0);
        let mut rhs = Vector::zeros(n);
        rhs[n - 1] = 1.0;
        solve(&system, &rhs, "stationary balance equations")
            .map_err(|_| Error::ChainNotErgodic("balance equations are singular".into()))?
    } else {
        power_iteration(p)?
    };
    if let Some((s, w)) = d.iter().enumerate().find(|(_, w)| **w <= MIN_STATE_WEIGHT) {
        return Err(Error::ChainNotErgodic(format!(
            "state {s} has stationary weight {w:e}"
        )));
    }
    let residual = (p.transpose() * &d - &d).amax();
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::ChainNotErgodic(format!(
            "balance residual {residual:e}"
        )));
    }
    Ok(d)
}

fn power_iteration(p: &Matrix) -> Result<Vector> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut d = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITERATION_CAP {
        let next = &pt * &d;
        let change = (&next - &d).amax();
        d = next;
        if change < STATIONARY_RESIDUAL * 1e-2 {
            let total = d.sum();
            return Ok(d / total);
        }
    }
    Err(Error::ChainNotErgodic(format!(
        "power iteration did not converge in {POWER_ITERATION_CAP} sweeps"
    )))
}

/// `V^π = (I − γP^π)^{-1} R^π`.
pub fn exact_value_function(mdp: &FiniteMdp, policy: &impl ActionProbabilities) -> Result<Vector> {
    let p = policy_transition_matrix(mdp, policy)?;
    let r = expected_rewards(mdp, policy)?;
    let n = mdp.n_states();
    let system = Matrix::identity(n, n) - p * mdp.discount();
    solve(&system, &r, "Bellman system")
}

/// `ρ = π(a|s) / π_b(a|s)`.
pub fn importance_ratio(
    target: &impl ActionProbabilities,
    behavior: &impl ActionProbabilities,
    s: usize,
    a: usize,
) -> Result<f64> {
    let b = behavior.prob(s, a);
    if !(b >= COVERAGE_FLOOR) {
        return Err(Error::CoverageViolation {
            state: s,
            action: a,
            prob: b,
        });
    }
    Ok(target.prob(s, a) / b)
}
