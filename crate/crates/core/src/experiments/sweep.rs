use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EnvironmentSpec, ExperimentConfig, Horizon, Metric};
use super::plot::{LineChart, Series};
use super::record::{mean_stderr, write_records, write_rows, MeanStderr, RunRecord, DIVERGED};
use crate::actors::{ActorCritic, ActorKind, Projection, Steps};
use crate::critics::{Critic, CriticConfig, CriticKind};
use crate::envs::{
    make_counterexample, make_random_mdp, make_random_walk_19, Counterexample, StreamGenerator,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, Vector};
use crate::mdp::{
    exact_value_function, policy_transition_matrix, stationary_distribution, ActionProbabilities,
    FiniteMdp, FixedPolicy, LinearFeatureMap, MdpDocument, ParametricPolicy,
};
use crate::oracle::{exact_objective, ProjectionWeights, TraceKind};

/// An environment ready to generate streams.
#[derive(Debug, Clone)]
pub struct PreparedEnv {
    pub mdp: FiniteMdp,
    pub features: LinearFeatureMap,
    pub behavior: FixedPolicy,
    /// Initial (or fixed, for critic-only runs) target policy.
    pub target: ParametricPolicy,
    /// Terminal flags and restart state for episodic environments.
    pub episodic: Option<(Vec<bool>, usize)>,
    /// State weights of the RMS metric.
    pub rms_weights: Vec<f64>,
}

const LOG_FLOOR: f64 = 1e-12;

impl PreparedEnv {
    pub fn new(spec: &EnvironmentSpec, initial_preference: f64) -> Result<Self> {
        let stationary = |mdp: &FiniteMdp, behavior: &FixedPolicy| -> Result<Vec<f64>> {
            Ok(
                stationary_distribution(&policy_transition_matrix(mdp, behavior)?)?
                    .iter()
                    .cloned()
                    .collect(),
            )
        };
        match spec {
            EnvironmentSpec::RandomWalk19 => {
                let walk = make_random_walk_19();
                let n = walk.mdp.n_states();
                let interior = walk.interior().count() as f64;
                let rms_weights = (0..n)
                    .map(|s| {
                        if walk.terminals[s] {
                            0.0
                        } else {
                            1.0 / interior
                        }
                    })
                    .collect();
                Ok(Self {
                    target: ParametricPolicy::tabular(n, 2, vec![0.0; 2 * n])?,
                    episodic: Some((walk.terminals.clone(), walk.start)),
                    rms_weights,
                    mdp: walk.mdp,
                    features: walk.features,
                    behavior: walk.behavior,
                })
            }
            EnvironmentSpec::Counterexample { gamma, behavior_p1 } => {
                let cx = make_counterexample(*gamma, *behavior_p1)?;
                let rms_weights = stationary(&cx.mdp, &cx.behavior)?;
                Ok(Self {
                    target: Counterexample::favoring_action_one(initial_preference),
                    episodic: None,
                    rms_weights,
                    mdp: cx.mdp,
                    features: cx.features,
                    behavior: cx.behavior,
                })
            }
            EnvironmentSpec::RandomMdp {
                seed,
                n_states,
                n_actions,
                n_features,
            } => {
                let inst = make_random_mdp(*seed, *n_states, *n_actions, *n_features)?;
                let rms_weights = stationary(&inst.mdp, &inst.behavior)?;
                Ok(Self {
                    mdp: inst.mdp,
                    features: inst.features,
                    behavior: inst.behavior,
                    target: inst.target,
                    episodic: None,
                    rms_weights,
                })
            }
            EnvironmentSpec::File { path } => {
                let doc = MdpDocument::read(path)?;
                let features = doc.features.ok_or_else(|| {
                    Error::InvalidConfig(format!("{} has no features table", path.display()))
                })?;
                let fixed = doc.target.unwrap_or_else(|| doc.behavior.clone());
                let (ns, na) = (doc.mdp.n_states(), doc.mdp.n_actions());
                let params = (0..ns)
                    .flat_map(|s| {
                        fixed
                            .row(s)
                            .iter()
                            .map(|p| p.max(LOG_FLOOR).ln())
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let rms_weights = stationary(&doc.mdp, &doc.behavior)?;
                Ok(Self {
                    target: ParametricPolicy::tabular(ns, na, params)?,
                    episodic: None,
                    rms_weights,
                    mdp: doc.mdp,
                    features,
                    behavior: doc.behavior,
                })
            }
        }
    }

    fn stream(&self, seed: u64, on_policy: bool) -> Result<StreamGenerator> {
        let g = if on_policy {
            StreamGenerator::on_policy(&self.mdp, &FixedPolicy::snapshot(&self.target), seed)?
        } else {
            StreamGenerator::new(&self.mdp, &self.behavior, seed)?
        };
        match &self.episodic {
            Some((terminals, start)) => g.episodic(terminals.clone(), *start),
            None => Ok(g),
        }
    }

    fn is_on_policy(&self) -> bool {
        (0..self.mdp.n_states()).all(|s| {
            (0..self.mdp.n_actions())
                .all(|a| (self.target.prob(s, a) - self.behavior.prob(s, a)).abs() <= 1e-12)
        })
    }

    /// `√Σ_s w(s)(θ⊤φ(s) − V(s))²`.
    pub fn rms(&self, theta: &[f64], values: &[f64]) -> f64 {
        self.rms_weights
            .iter()
            .enumerate()
            .map(|(s, w)| w * (dot(theta, self.features.row(s)) - values[s]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// One `(λ, normalize, α₀, β₀)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub grid: usize,
    pub lambda: f64,
    pub normalize: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl GridPoint {
    pub fn label(&self) -> String {
        let norm = if self.normalize { " normalized" } else { "" };
        format!("λ={}{norm} β={}", self.lambda, self.beta)
    }
}

pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &lambda in &cfg.algorithm.lambda {
        for &normalize in &cfg.algorithm.normalize {
            for &alpha in &cfg.schedule.alpha {
                for &beta in &cfg.schedule.beta {
                    out.push(GridPoint {
                        grid: out.len(),
                        lambda,
                        normalize,
                        alpha,
                        beta,
                    });
                }
            }
        }
    }
    out
}

/// Mean ± standard error of one metric at one step over a grid point's runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid: usize,
    pub lambda: f64,
    pub normalize: bool,
    pub alpha: f64,
    pub beta: f64,
    pub metric: String,
    pub step: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunRow {
    run: u64,
    grid: usize,
    seed: u64,
    lambda: f64,
    normalize: bool,
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub config: ExperimentConfig,
    pub grid: Vec<GridPoint>,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

struct Learner {
    critic_only: Option<Critic>,
    pair: Option<ActorCritic>,
}

impl Learner {
    fn policy<'a>(&'a self, fixed: &'a ParametricPolicy) -> &'a ParametricPolicy {
        self.pair.as_ref().map_or(fixed, |p| &p.policy)
    }

    fn theta(&self) -> &[f64] {
        match (&self.critic_only, &self.pair) {
            (Some(c), _) => c.theta(),
            (_, Some(p)) => p.critic.theta(),
            _ => unreachable!("learner has a critic"),
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    env: &PreparedEnv,
    point: &GridPoint,
    run: u64,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let alg = &cfg.algorithm;
    let gamma = env.mdp.discount();
    let critic_cfg = CriticConfig::new(gamma, point.lambda)?.normalized(point.normalize);
    let critic = Critic::new(alg.critic, env.features.n_features(), critic_cfg);
    let on_policy_actor = alg.actor == Some(ActorKind::OnPolicy);
    let needs_on_policy = on_policy_actor || alg.critic == CriticKind::Td;
    if needs_on_policy && !env.is_on_policy() {
        return Err(Error::InvalidConfig(
            "TD(λ) and the on-policy actor need behavior = target".into(),
        ));
    }
    let mut stream = env.stream(seed, on_policy_actor)?;
    let mut learner = match alg.actor {
        None => Learner {
            critic_only: Some(critic),
            pair: None,
        },
        Some(kind) => {
            let ac = ActorCritic::new(kind, critic, env.target.clone())?.with_projection(
                alg.projection.is_finite().then_some(Projection {
                    w_max: alg.projection,
                }),
            );
            Learner {
                critic_only: None,
                pair: Some(ac),
            }
        }
    };
    let alpha = cfg.schedule.critic(point.alpha);
    let beta = cfg.schedule.actor(point.beta);
    let trace_kind = if alg.critic == CriticKind::Emphatic {
        TraceKind::Emphatic
    } else {
        TraceKind::Standard
    };
    let weights = match env.episodic {
        None => Some(ProjectionWeights::new(Vector::from_column_slice(
            &env.rms_weights,
        ))?),
        Some(_) => None,
    };
    let fixed_values = match alg.actor {
        None => Some(exact_value_function(&env.mdp, &env.target)?),
        Some(_) => None,
    };

    let mut records = Vec::new();
    let emit = |learner: &Learner, step: u64, records: &mut Vec<RunRecord>| -> Result<()> {
        let policy = learner.policy(&env.target);
        for metric in &cfg.metrics {
            let value = match metric {
                Metric::Rms => {
                    let values = match &fixed_values {
                        Some(v) => v.clone(),
                        None => exact_value_function(&env.mdp, policy)?,
                    };
                    env.rms(learner.theta(), values.as_slice())
                }
                Metric::Objective => {
                    let w = weights
                        .as_ref()
                        .expect("validated: objective needs a continuing environment");
                    exact_objective(&env.mdp, &env.features, policy, w, point.lambda, trace_kind)
                        .unwrap_or(f64::NAN)
                }
                Metric::ProbActionOne => policy.prob(0, 0),
            };
            records.push(RunRecord {
                run,
                seed,
                step,
                metric: metric.name().into(),
                value,
            });
        }
        Ok(())
    };

    let total = cfg.horizon.length();
    let (mut t, mut progress) = (0u64, 0u64);
    while progress < total {
        let steps = Steps::new(alpha.at(t), beta.at(t));
        let result = match (&mut learner.critic_only, &mut learner.pair) {
            (Some(c), _) => {
                let x = stream.next_transition(&env.target, &env.features);
                c.step(&x, steps.alpha, steps.alpha_u)
                    .map(|_| x.episode_end)
            }
            (_, Some(p)) => {
                let x = stream.next_transition(&p.policy, &env.features);
                let end = x.episode_end;
                let r = p.step(&x, steps).map(|_| end);
                if on_policy_actor && r.is_ok() {
                    stream.set_behavior(FixedPolicy::snapshot(&p.policy))?;
                }
                r
            }
            _ => unreachable!("learner has a critic"),
        };
        let episode_end = match result {
            Ok(end) => end,
            Err(Error::Divergence { step, .. } | Error::InvariantViolation { step, .. }) => {
                records.push(RunRecord {
                    run,
                    seed,
                    step,
                    metric: DIVERGED.into(),
                    value: step as f64,
                });
                return Ok(records);
            }
            Err(e) => return Err(e),
        };
        t += 1;
        let advanced = match cfg.horizon {
            Horizon::Steps(_) => true,
            Horizon::Episodes(_) => episode_end,
        };
        if advanced {
            progress += 1;
            if progress % cfg.record_every == 0 || progress == total {
                emit(&learner, progress, &mut records)?;
            }
        }
    }
    Ok(records)
}

/// Runs every grid point `runs` times on the rayon pool; records are ordered
/// by run id, so the output does not depend on the degree of parallelism.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let env = PreparedEnv::new(&cfg.environment, cfg.algorithm.initial_preference)?;
    let grid = grid_points(cfg);
    let jobs: Vec<(GridPoint, u64, u64)> = grid
        .iter()
        .flat_map(|p| (0..cfg.runs).map(move |r| (*p, p.grid as u64 * cfg.runs + r, cfg.seed + r)))
        .collect();
    let per_run: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|(point, run, seed)| run_one(cfg, &env, point, *run, *seed))
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = per_run.into_iter().flatten().collect();
    let summary = summarize(&grid, cfg.runs, &records);
    Ok(SweepOutput {
        config: cfg.clone(),
        grid,
        records,
        summary,
    })
}

/// Same as [`run_sweep`] on a dedicated pool of `jobs` threads.
pub fn run_sweep_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(cfg))
}

/// Aggregates finite, non-divergence records by `(grid point, metric, step)`.
pub fn summarize(grid: &[GridPoint], runs: u64, records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String, u64), Vec<f64>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.metric != DIVERGED && r.value.is_finite())
    {
        let g = (r.run / runs) as usize;
        groups
            .entry((g, r.metric.clone(), r.step))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((g, metric, step), values)| {
            let MeanStderr { mean, stderr, n } = mean_stderr(&values);
            let p = grid[g];
            SummaryRow {
                grid: g,
                lambda: p.lambda,
                normalize: p.normalize,
                alpha: p.alpha,
                beta: p.beta,
                metric,
                step,
                mean,
                stderr,
                n,
            }
        })
        .collect()
}

impl SweepOutput {
    /// The last recorded summary row of `metric` for every grid point.
    pub fn final_rows(&self, metric: Metric) -> Vec<&SummaryRow> {
        let mut last: BTreeMap<usize, &SummaryRow> = BTreeMap::new();
        for row in self.summary.iter().filter(|r| r.metric == metric.name()) {
            let entry = last.entry(row.grid).or_insert(row);
            if row.step > entry.step {
                *entry = row;
            }
        }
        last.into_values().collect()
    }

    /// Lowest final mean of `metric` over α₀ for a `(λ, normalize)` pair.
    pub fn best_over_alpha(
        &self,
        metric: Metric,
        lambda: f64,
        normalize: bool,
    ) -> Option<&SummaryRow> {
        self.final_rows(metric)
            .into_iter()
            .filter(|r| r.lambda == lambda && r.normalize == normalize)
            .min_by(|a, b| a.mean.total_cmp(&b.mean))
    }

    pub fn diverged_runs(&self) -> usize {
        self.records.iter().filter(|r| r.metric == DIVERGED).count()
    }

    /// Writes `records.csv`, `runs.csv`, `summary.csv` and, if asked, SVG plots.
    pub fn write(&self, dir: &Path, plots: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_records(
            BufWriter::new(File::create(dir.join("records.csv"))?),
            &self.records,
        )?;
        let runs = self.config.runs;
        let rows: Vec<RunRow> = self
            .grid
            .iter()
            .flat_map(|p| {
                (0..runs).map(move |r| RunRow {
                    run: p.grid as u64 * runs + r,
                    grid: p.grid,
                    seed: self.config.seed + r,
                    lambda: p.lambda,
                    normalize: p.normalize,
                    alpha: p.alpha,
                    beta: p.beta,
                })
            })
            .collect();
        write_rows(
            BufWriter::new(File::create(dir.join("runs.csv"))?),
            &[
                "run",
                "grid",
                "seed",
                "lambda",
                "normalize",
                "alpha",
                "beta",
            ],
            &rows,
        )?;
        write_rows(
            BufWriter::new(File::create(dir.join("summary.csv"))?),
            &[
                "grid",
                "lambda",
                "normalize",
                "alpha",
                "beta",
                "metric",
                "step",
                "mean",
                "stderr",
                "n",
            ],
            &self.summary,
        )?;
        if plots {
            for (name, chart) in self.charts() {
                std::fs::write(dir.join(name), chart.to_svg())?;
            }
        }
        Ok(())
    }

    /// Final metric vs α₀ (one series per λ/normalize/β) and learning curves
    /// (one series per grid point).
    pub fn charts(&self) -> Vec<(String, LineChart)> {
        let mut out = Vec::new();
        for metric in &self.config.metrics {
            let finals = self.final_rows(*metric);
            if self.config.schedule.alpha.len() > 1 {
                let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                for row in &finals {
                    series
                        .entry(self.grid[row.grid].label())
                        .or_default()
                        .push((row.alpha, row.mean));
                }
                out.push((
                    format!("{}_vs_alpha.svg", metric.name()),
                    LineChart {
                        title: format!(
                            "{}: final {} vs step size",
                            self.config.name,
                            metric.name()
                        ),
                        x_label: "α₀".into(),
                        y_label: metric.name().into(),
                        log2_x: true,
                        series: series
                            .into_iter()
                            .map(|(name, points)| Series { name, points })
                            .collect(),
                    },
                ));
            }
            let curves = self
                .grid
                .iter()
                .map(|p| Series {
                    name: format!("α₀={} {}", p.alpha, p.label()),
                    points: self
                        .summary
                        .iter()
                        .filter(|r| r.grid == p.grid && r.metric == metric.name())
                        .map(|r| (r.step as f64, r.mean))
                        .collect(),
                })
                .collect();
            out.push((
                format!("{}_curves.svg", metric.name()),
                LineChart {
                    title: format!("{}: {}", self.config.name, metric.name()),
                    x_label: match self.config.horizon {
                        Horizon::Steps(_) => "step".into(),
                        Horizon::Episodes(_) => "episode".into(),
                    },
                    y_label: metric.name().into(),
                    log2_x: false,
                    series: curves,
                },
            ));
        }
        out
    }
}
