use convergent_ac::experiments::{
    read_records, run_sweep, run_sweep_with_jobs, summarize, ExperimentConfig, Metric, DIVERGED,
};

const CX: &str = r#"
name = "cx"
runs = 3
seed = 11
metrics = ["objective", "prob_a1", "rms"]
horizon = { steps = 2000 }
record_every = 500

[environment]
kind = "counterexample"
gamma = 0.9

[algorithm]
critic = "emphatic"
actor = "emphatic_ac"
lambda = [0.0, 1.0]

[schedule]
alpha = [0.01, 0.02]
beta = [0.001]
"#;

const WALK: &str = r#"
name = "walk"
runs = 4
metrics = ["rms"]
horizon = { episodes = 6 }
record_every = 2

[environment]
kind = "random_walk_19"

[algorithm]
critic = "td"
lambda = [0.5, 1.0]
normalize = [false, true]

[schedule]
alpha = [0.1, 0.4]
"#;

#[test]
fn sweeps_are_reproducible_and_parallelism_invariant() {
    for text in [CX, WALK] {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let a = run_sweep_with_jobs(&cfg, 1).unwrap();
        let b = run_sweep_with_jobs(&cfg, 3).unwrap();
        let c = run_sweep(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, c.records);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn record_layout() {
    let cfg = ExperimentConfig::from_toml_str(CX).unwrap();
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.grid.len(), 4);
    // 4 grid points × 3 runs × 4 checkpoints × 3 metrics
    assert_eq!(out.records.len(), 4 * 3 * 4 * 3);
    let seeds: Vec<u64> = out
        .records
        .iter()
        .filter(|r| r.run < 3)
        .map(|r| r.seed)
        .collect();
    assert!(seeds.iter().all(|s| (11..14).contains(s)));
    assert!(out
        .records
        .iter()
        .all(|r| r.step % 500 == 0 && r.value.is_finite()));
    for r in out.records.iter().filter(|r| r.metric == "prob_a1") {
        assert!((0.0..=1.0).contains(&r.value));
    }
}

#[test]
fn written_summary_is_recomputable_from_records() {
    let cfg = ExperimentConfig::from_toml_str(WALK).unwrap();
    let out = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path(), true).unwrap();
    for name in [
        "records.csv",
        "runs.csv",
        "summary.csv",
        "rms_vs_alpha.svg",
        "rms_curves.svg",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let records =
        read_records(std::fs::File::open(dir.path().join("records.csv")).unwrap()).unwrap();
    assert_eq!(records, out.records);
    assert_eq!(summarize(&out.grid, cfg.runs, &records), out.summary);
    let steps: Vec<u64> = out
        .summary
        .iter()
        .filter(|r| r.grid == 0)
        .map(|r| r.step)
        .collect();
    assert_eq!(steps, vec![2, 4, 6]);
}

#[test]
fn zero_horizon_writes_only_headers() {
    let cfg =
        ExperimentConfig::from_toml_str(&WALK.replace("episodes = 6", "episodes = 0")).unwrap();
    let out = run_sweep(&cfg).unwrap();
    assert!(out.records.is_empty() && out.summary.is_empty());
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path(), false).unwrap();
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(text.trim(), "run,seed,step,metric,value");
}

#[test]
fn divergent_runs_are_marked_and_stopped() {
    let text = CX
        .replace(
            "critic = \"emphatic\"\nactor = \"emphatic_ac\"\nlambda = [0.0, 1.0]",
            "critic = \"gtd\"\nactor = \"gradient_ac\"\nlambda = [1.0]",
        )
        .replace("gamma = 0.9", "gamma = 0.99")
        .replace("alpha = [0.01, 0.02]", "alpha = [4.0]")
        .replace("steps = 2000", "steps = 200000");
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let out = run_sweep(&cfg).unwrap();
    let diverged: Vec<_> = out
        .records
        .iter()
        .filter(|r| r.metric == DIVERGED)
        .collect();
    assert!(!diverged.is_empty());
    for d in diverged {
        let later = out
            .records
            .iter()
            .filter(|r| r.run == d.run && r.step > d.step)
            .count();
        assert_eq!(later, 0);
    }
    assert!(out
        .final_rows(Metric::Objective)
        .iter()
        .all(|r| r.mean.is_finite()));
}

#[test]
fn critic_only_rms_shrinks_on_the_walk() {
    let cfg = ExperimentConfig::from_toml_str(
        &WALK
            .replace("episodes = 6", "episodes = 50")
            .replace("record_every = 2", "record_every = 1"),
    )
    .unwrap();
    let out = run_sweep(&cfg).unwrap();
    let first = out
        .summary
        .iter()
        .find(|r| r.grid == 0 && r.step == 1)
        .unwrap()
        .mean;
    let last = out
        .summary
        .iter()
        .find(|r| r.grid == 0 && r.step == 50)
        .unwrap()
        .mean;
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert!(out.best_over_alpha(Metric::Rms, 0.5, false).is_some());
}
