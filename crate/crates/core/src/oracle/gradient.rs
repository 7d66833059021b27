//! Followon and emphasis vectors, `η(λ)`, the objective `J(w)` and its
//! gradient, both by finite differences and as the exact stationary
//! expectation of each actor's sampled update direction.

use crate::error::{Error, Result};
use crate::linalg::{solve, solve_matrix, Matrix, Vector};
use crate::mdp::{
    policy_transition_matrix, ActionProbabilities, FiniteMdp, FixedPolicy, LinearFeatureMap,
    ParametricPolicy,
};

use super::{
    check_lambda, emphasis_weights, td_fixed_point, FixedPointReport, ProjectionWeights, TraceKind,
};

/// Limiting `E[f_t | s_t = s]` for `f_t = 1 + γλρ_{t−1} f_{t−1}`:
/// `D⁻¹(I − γλP⊤)⁻¹ d`. This is also the expected last component of a
/// standard trace when the features carry a unit intercept.
pub fn followon_vector(
    mdp: &FiniteMdp,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
) -> Result<Vector> {
    check_lambda(lambda)?;
    let n = mdp.n_states();
    let pt = policy_transition_matrix(mdp, target)?.transpose();
    let d = weights.as_vector();
    let system = Matrix::identity(n, n) - pt * (mdp.discount() * lambda);
    let df = solve(&system, d, "followon recursion")?;
    Ok(df.component_div(d))
}

/// The followon weights `f(s) = D⁻¹(I − γP⊤)⁻¹ d` used by Gradient-AC.
pub fn f_vector(
    mdp: &FiniteMdp,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
) -> Result<Vector> {
    followon_vector(mdp, target, weights, 1.0)
}

/// Limiting conditional expectations of the emphatic-trace scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct EmphasisVectors {
    /// `lim E[m_t | s_t = s]`.
    pub m: Vec<f64>,
    /// `lim E[f^λ_t | s_t = s]` with `f^λ_t = m_t + γλρ_{t−1} f^λ_{t−1}`.
    pub f: Vec<f64>,
}

pub fn emphasis_vectors(
    mdp: &FiniteMdp,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
) -> Result<EmphasisVectors> {
    let dm = emphasis_weights(mdp, target, weights, lambda)?;
    let n = mdp.n_states();
    let pt = policy_transition_matrix(mdp, target)?.transpose();
    let system = Matrix::identity(n, n) - pt * (mdp.discount() * lambda);
    let df = solve(&system, &dm, "emphatic followon recursion")?;
    let d = weights.as_vector();
    let m: Vec<f64> = dm.component_div(d).iter().cloned().collect();
    if let Some(bad) = m.iter().find(|m| **m <= 0.0) {
        return Err(Error::InvariantViolation {
            step: 0,
            what: format!("expected emphasis {bad} is not positive"),
        });
    }
    Ok(EmphasisVectors {
        m,
        f: df.component_div(d).iter().cloned().collect(),
    })
}

/// `η(λ) = A(λ)⊤⁻¹ Φ⊤d`.
pub fn eta_vector(
    report: &FixedPointReport,
    features: &LinearFeatureMap,
    weights: &ProjectionWeights,
) -> Result<Vector> {
    let rhs = features.matrix().transpose() * weights.as_vector();
    solve(&report.a_matrix().transpose(), &rhs, "A(λ)⊤")
}

/// Gradient weights `f^λ(s) = lim E[e_t | s_t = s]⊤ η(λ)`, given the
/// d-weighted expected trace matrix.
pub fn gradient_weights(
    trace_matrix: &Matrix,
    eta: &Vector,
    weights: &ProjectionWeights,
) -> Vector {
    (trace_matrix * eta).component_div(weights.as_vector())
}

/// `‖Σ_s d(s) f(s) (φ(s) − γ(P^πΦ)(s)) − Σ_s d(s) φ(s)‖_∞`.
pub fn gradient_weight_residual(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    f: &Vector,
) -> Result<f64> {
    let n = mdp.n_states();
    let phi = features.matrix();
    let p = policy_transition_matrix(mdp, target)?;
    let d = weights.as_vector();
    let lhs =
        ((Matrix::identity(n, n) - p * mdp.discount()) * &phi).transpose() * d.component_mul(f);
    Ok((lhs - phi.transpose() * d).amax())
}

/// `J = d⊤Φθ*` for the fixed point selected by `(λ, kind)` under `target`.
pub fn exact_objective(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    target: &impl ActionProbabilities,
    weights: &ProjectionWeights,
    lambda: f64,
    kind: TraceKind,
) -> Result<f64> {
    let fp = td_fixed_point(mdp, features, target, weights, lambda, kind)?;
    let values = features.matrix() * fp.theta_vector();
    Ok(weights.as_vector().dot(&values))
}

/// Central differences `(f(w + εu_k) − f(w − εu_k)) / 2ε` along each axis.
pub fn central_difference<F>(f: F, w: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference ε = {eps:e} outside [1e-7, 1e-3]"
        )));
    }
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|k| {
            probe[k] = w[k] + eps;
            let up = f(&probe)?;
            probe[k] = w[k] - eps;
            let down = f(&probe)?;
            probe[k] = w[k];
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

/// Finite-difference `∇J(w)` for the policy's current parameters.
pub fn finite_difference_grad_j(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    policy: &ParametricPolicy,
    weights: &ProjectionWeights,
    lambda: f64,
    kind: TraceKind,
    eps: f64,
) -> Result<Vec<f64>> {
    central_difference(
        |w| {
            let pi = policy.with_params(w.to_vec())?;
            exact_objective(mdp, features, &pi, weights, lambda, kind)
        },
        policy.params(),
        eps,
    )
}

/// Which sampled actor direction to take the stationary expectation of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActorEstimator {
    /// `ρ_t δ_t ψ_t` with `ψ_t = f_t ∇log π_t + γρ_{t−1}ψ_{t−1}`.
    GradientAc,
    /// `ρ_t δ_t ψ_t` with the emphatic followon and `z_t` terms.
    EmphaticAc { lambda: f64 },
    /// `ρ_t δ_t ∇log π_t`.
    OffPac,
    /// `δ_t ∇log π_t`, no importance weighting.
    Classical,
}

/// Exact `lim E[·]` of an actor's per-step direction under the behavior
/// chain, with the critic frozen at `theta`.
///
/// Each trace's d-weighted conditional expectation satisfies a linear
/// recursion over the target chain, so the limit reduces to a few solves.
pub fn expected_actor_update(
    mdp: &FiniteMdp,
    features: &LinearFeatureMap,
    policy: &ParametricPolicy,
    behavior: &FixedPolicy,
    weights: &ProjectionWeights,
    theta: &[f64],
    estimator: ActorEstimator,
) -> Result<Vec<f64>> {
    let (ns, na, k) = (mdp.n_states(), mdp.n_actions(), policy.n_params());
    let gamma = mdp.discount();
    let d = weights.as_vector();
    let values = features.matrix() * Vector::from_column_slice(theta);
    let td_error = |s: usize, a: usize| {
        mdp.next_distribution(s, a)
            .iter()
            .zip(mdp.rewards_from(s, a))
            .enumerate()
            .map(|(t, (p, r))| p * (r + gamma * values[t]))
            .sum::<f64>()
            - values[s]
    };
    let scores: Vec<Vec<Vec<f64>>> = (0..ns)
        .map(|s| (0..na).map(|a| policy.score(s, a)).collect())
        .collect();

    let mut total = vec![0.0; k];
    let simple = |weight: &dyn Fn(usize, usize) -> f64| {
        let mut out = vec![0.0; k];
        for s in 0..ns {
            for a in 0..na {
                let c = d[s] * weight(s, a) * td_error(s, a);
                for (o, g) in out.iter_mut().zip(&scores[s][a]) {
                    *o += c * g;
                }
            }
        }
        out
    };
    let (followon, emphasis_src, decay) = match estimator {
        ActorEstimator::OffPac => return Ok(simple(&|s, a| policy.prob(s, a))),
        ActorEstimator::Classical => return Ok(simple(&|s, a| behavior.prob(s, a))),
        ActorEstimator::GradientAc => {
            let df = f_vector(mdp, policy, weights)?.component_mul(d);
            (df, None, gamma)
        }
        ActorEstimator::EmphaticAc { lambda } => {
            let dm = emphasis_weights(mdp, policy, weights, lambda)?;
            let pt = policy_transition_matrix(mdp, policy)?.transpose();
            let df = solve(
                &(Matrix::identity(ns, ns) - &pt * (gamma * lambda)),
                &dm,
                "emphatic followon recursion",
            )?;
            (df, Some(dm - d * lambda), gamma * lambda)
        }
    };

    let pi = |s: usize, a: usize| policy.prob(s, a);
    // Pushes a per-(s, a) source one step along the target chain.
    let propagate = |source: &dyn Fn(usize, usize, usize) -> f64| {
        let mut out = Matrix::zeros(ns, k);
        for s in 0..ns {
            for a in 0..na {
                let pa = pi(s, a);
                for (t, q) in mdp.next_distribution(s, a).iter().enumerate() {
                    let w = pa * q;
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        out[(t, j)] += w * source(s, a, j);
                    }
                }
            }
        }
        out
    };
    let pt = policy_transition_matrix(mdp, policy)?.transpose();

    // Z(s) = d(s) E[z_t | s_t = s]
    let z = match &emphasis_src {
        Some(excess) => {
            let src = propagate(&|s, a, j| excess[s] * scores[s][a][j]);
            solve_matrix(
                &(Matrix::identity(ns, ns) - &pt * gamma),
                &(src * gamma),
                "z recursion",
            )?
        }
        None => Matrix::zeros(ns, k),
    };
    // Ψ(s) = d(s) E[decay·ρ_{t−1}ψ_{t−1} | s_t = s]
    let src = propagate(&|s, a, j| followon[s] * scores[s][a][j] + z[(s, j)]);
    let carried = solve_matrix(
        &(Matrix::identity(ns, ns) - &pt * decay),
        &(src * decay),
        "ψ recursion",
    )?;

    for s in 0..ns {
        for a in 0..na {
            let c = pi(s, a) * td_error(s, a);
            for (j, t) in total.iter_mut().enumerate() {
                *t += c * (followon[s] * scores[s][a][j] + z[(s, j)] + carried[(s, j)]);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_counterexample, make_random_mdp};
    use crate::mdp::exact_value_function;

    fn always_first() -> FixedPolicy {
        FixedPolicy::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn counterexample_f_vector_golden() {
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let w = ProjectionWeights::from_behavior(&cx.mdp, &cx.behavior).unwrap();
        let f = f_vector(&cx.mdp, &always_first(), &w).unwrap();
        // hand solve: d∘f = (I − γP⊤)⁻¹ d with every transition into state 2
        assert!((f[0] - 1.0).abs() < 1e-10);
        assert!((f[1] - 298.0).abs() < 1e-9);
        assert!(
            gradient_weight_residual(&cx.mdp, &cx.features, &always_first(), &w, &f).unwrap()
                <= 1e-10
        );
    }

    #[test]
    fn on_policy_followon_values() {
        let inst = make_random_mdp(3, 5, 3, 3).unwrap();
        let gamma = inst.mdp.discount();
        let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
        let f = f_vector(&inst.mdp, &inst.behavior, &w).unwrap();
        assert!(f.iter().all(|v| (v - 1.0 / (1.0 - gamma)).abs() < 1e-10));
        for lambda in [0.0, 0.5, 0.9] {
            let fl = followon_vector(&inst.mdp, &inst.behavior, &w, lambda).unwrap();
            assert!(fl
                .iter()
                .all(|v| (v - 1.0 / (1.0 - gamma * lambda)).abs() < 1e-10));
            // the emphatic followon folds the constant emphasis back in
            let ev = emphasis_vectors(&inst.mdp, &inst.behavior, &w, lambda).unwrap();
            assert!(ev.f.iter().all(|v| (v - 1.0 / (1.0 - gamma)).abs() < 1e-10));
            assert!(ev
                .m
                .iter()
                .all(|v| (v - (1.0 - gamma * lambda) / (1.0 - gamma)).abs() < 1e-10));
        }
    }

    #[test]
    fn myopic_f_vector_is_one() {
        let inst = make_random_mdp(3, 5, 3, 3).unwrap();
        let mdp = inst.mdp.with_discount(0.0).unwrap();
        let w = ProjectionWeights::from_behavior(&mdp, &inst.behavior).unwrap();
        assert!(f_vector(&mdp, &inst.target, &w)
            .unwrap()
            .iter()
            .all(|v| *v == 1.0));
    }

    #[test]
    fn f_vector_at_least_one() {
        for seed in 0..30 {
            let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
            let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
            assert!(f_vector(&inst.mdp, &inst.target, &w)
                .unwrap()
                .iter()
                .all(|v| *v >= 1.0 - 1e-12));
        }
    }

    #[test]
    fn eta_is_last_basis_vector_where_promised() {
        for seed in 0..20 {
            let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
            let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
            let cases = [
                (1.0, TraceKind::Standard),
                (0.5, TraceKind::Emphatic),
                (0.0, TraceKind::Emphatic),
            ];
            for (lambda, kind) in cases {
                let fp = td_fixed_point(&inst.mdp, &inst.features, &inst.target, &w, lambda, kind)
                    .unwrap();
                let eta = eta_vector(&fp, &inst.features, &w).unwrap();
                let mut basis = Vector::zeros(3);
                basis[2] = 1.0;
                assert!(
                    (eta - basis).amax() < 1e-8,
                    "seed {seed} λ={lambda} {kind:?}"
                );
            }
        }
    }

    #[test]
    fn tabular_on_policy_eta_solves_its_system() {
        let inst = make_random_mdp(6, 5, 3, 3).unwrap();
        let tab = LinearFeatureMap::tabular(5);
        let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
        let fp = td_fixed_point(
            &inst.mdp,
            &tab,
            &inst.behavior,
            &w,
            0.0,
            TraceKind::Standard,
        )
        .unwrap();
        let eta = eta_vector(&fp, &tab, &w).unwrap();
        let lhs = fp.a_matrix().transpose() * eta;
        assert!((lhs - w.as_vector()).amax() < 1e-12);
    }

    #[test]
    fn quadratic_fixture_gradient() {
        let w = [0.3, -1.2, 2.0];
        let g = central_difference(|x| Ok(x.iter().map(|v| v * v).sum()), &w, 1e-5).unwrap();
        for (gi, wi) in g.iter().zip(w) {
            assert!((gi - 2.0 * wi).abs() < 1e-6);
        }
        assert!(central_difference(|_| Ok(0.0), &w, 1e-2).is_err());
    }

    #[test]
    fn zero_rewards_give_zero_objective_and_gradient() {
        let inst = make_random_mdp(9, 5, 3, 3).unwrap();
        let mdp = inst.mdp.scale_rewards(0.0).unwrap();
        let w = ProjectionWeights::from_behavior(&mdp, &inst.behavior).unwrap();
        for kind in [TraceKind::Standard, TraceKind::Emphatic] {
            assert_eq!(
                exact_objective(&mdp, &inst.features, &inst.target, &w, 0.5, kind).unwrap(),
                0.0
            );
            let g =
                finite_difference_grad_j(&mdp, &inst.features, &inst.target, &w, 0.5, kind, 1e-5)
                    .unwrap();
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn counterexample_objective_at_the_optimum() {
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let w = ProjectionWeights::from_behavior(&cx.mdp, &cx.behavior).unwrap();
        let j = exact_objective(
            &cx.mdp,
            &cx.features,
            &always_first(),
            &w,
            1.0,
            TraceKind::Standard,
        )
        .unwrap();
        assert!((j - 800.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn tabular_objective_is_the_weighted_value() {
        let inst = make_random_mdp(12, 5, 3, 3).unwrap();
        let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
        let v = exact_value_function(&inst.mdp, &inst.target).unwrap();
        let j = exact_objective(
            &inst.mdp,
            &LinearFeatureMap::tabular(5),
            &inst.target,
            &w,
            0.3,
            TraceKind::Standard,
        )
        .unwrap();
        assert!((j - w.as_vector().dot(&v)).abs() < 1e-10);
    }

    #[test]
    fn counterexample_gradient_golden() {
        // two step sizes agree to 4 digits; frozen from the ε = 1e-5 run
        let cx = make_counterexample(0.99, 1.0 / 3.0).unwrap();
        let w = ProjectionWeights::from_behavior(&cx.mdp, &cx.behavior).unwrap();
        let pi = ParametricPolicy::tabular(2, 2, vec![0.0; 4]).unwrap();
        let coarse = finite_difference_grad_j(
            &cx.mdp,
            &cx.features,
            &pi,
            &w,
            1.0,
            TraceKind::Standard,
            1e-4,
        )
        .unwrap();
        let fine = finite_difference_grad_j(
            &cx.mdp,
            &cx.features,
            &pi,
            &w,
            1.0,
            TraceKind::Standard,
            1e-5,
        )
        .unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            assert!((c - f).abs() <= 1e-4 * f.abs().max(1.0));
        }
        let golden = [100.0 / 9.0, -100.0 / 9.0, 100.0 / 9.0, -100.0 / 9.0];
        for (f, g) in fine.iter().zip(golden) {
            assert!((f - g).abs() < 1e-5, "{f} vs {g}");
        }
    }

    #[test]
    fn exact_actor_expectations_match_the_gradient_with_intercept() {
        for seed in 0..10 {
            let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
            let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
            let cases = [
                (ActorEstimator::GradientAc, 1.0, TraceKind::Standard),
                (
                    ActorEstimator::EmphaticAc { lambda: 0.0 },
                    0.0,
                    TraceKind::Emphatic,
                ),
                (
                    ActorEstimator::EmphaticAc { lambda: 0.5 },
                    0.5,
                    TraceKind::Emphatic,
                ),
                (
                    ActorEstimator::EmphaticAc { lambda: 1.0 },
                    1.0,
                    TraceKind::Emphatic,
                ),
            ];
            for (est, lambda, kind) in cases {
                let fp = td_fixed_point(&inst.mdp, &inst.features, &inst.target, &w, lambda, kind)
                    .unwrap();
                let exact = expected_actor_update(
                    &inst.mdp,
                    &inst.features,
                    &inst.target,
                    &inst.behavior,
                    &w,
                    &fp.theta,
                    est,
                )
                .unwrap();
                let fd = finite_difference_grad_j(
                    &inst.mdp,
                    &inst.features,
                    &inst.target,
                    &w,
                    lambda,
                    kind,
                    1e-5,
                )
                .unwrap();
                let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                for (e, g) in exact.iter().zip(&fd) {
                    assert!(
                        (e - g).abs() <= 1e-7 * scale.max(1.0),
                        "seed {seed} {est:?}: {e} vs {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn tabular_on_policy_classical_actor_is_scaled_gradient() {
        let inst = make_random_mdp(21, 5, 3, 3).unwrap();
        let gamma = inst.mdp.discount();
        let tab = LinearFeatureMap::tabular(5);
        let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
        let n_params = 15;
        let params = (0..n_params)
            .map(|k| inst.behavior.prob(k / 3, k % 3).ln())
            .collect();
        let pi = ParametricPolicy::tabular(5, 3, params).unwrap();
        for lambda in [0.0, 0.5, 1.0] {
            let fp = td_fixed_point(&inst.mdp, &tab, &pi, &w, lambda, TraceKind::Standard).unwrap();
            let classical = expected_actor_update(
                &inst.mdp,
                &tab,
                &pi,
                &inst.behavior,
                &w,
                &fp.theta,
                ActorEstimator::Classical,
            )
            .unwrap();
            let fd = finite_difference_grad_j(
                &inst.mdp,
                &tab,
                &pi,
                &w,
                lambda,
                TraceKind::Standard,
                1e-5,
            )
            .unwrap();
            for (c, g) in classical.iter().zip(&fd) {
                assert!(
                    (c - (1.0 - gamma) * g).abs() < 1e-7,
                    "λ={lambda}: {c} vs {}",
                    (1.0 - gamma) * g
                );
            }
        }
    }
}
