use structlab::c51::QTable;
use structlab::config::{ExperimentConfig, StartMode};
use structlab::distribution::{CategoricalDist, Support};
use structlab::gridworld::{Action, GridSpec, State};
use structlab::harness::{
    aggregate, evaluate_greedy, run_baseline, run_exploration, run_structrl, RunResult,
};
use structlab::seeds::SeedStrategy;
use structlab::Error;

fn short_cfg() -> ExperimentConfig {
    ExperimentConfig {
        training_episodes: 40,
        ..ExperimentConfig::default()
    }
}

fn converged_table(spec: &GridSpec) -> QTable {
    let mut table = QTable::new(spec, Support::new(-100.0, 0.0, 51).unwrap(), 1.0);
    table.sweep_to_fixed_point(spec, 1.0, 0.0, 1000);
    table
}

#[test]
fn baseline_is_deterministic_per_seed() {
    let cfg = short_cfg();
    let a = run_baseline(&cfg, 7).unwrap();
    let b = run_baseline(&cfg, 7).unwrap();
    assert_eq!(a.episodic_returns, b.episodic_returns);
    assert_eq!(a.eval_returns, b.eval_returns);
    assert_eq!(a.sigma_final, b.sigma_final);
    let c = run_baseline(&cfg, 8).unwrap();
    assert_ne!(a.episodic_returns, c.episodic_returns);
}

#[test]
fn structrl_is_deterministic_per_seed() {
    let cfg = short_cfg();
    let a = run_structrl(&cfg, 3).unwrap();
    let b = run_structrl(&cfg, 3).unwrap();
    assert_eq!(a.episodic_returns, b.episodic_returns);
    assert_eq!(a.seeds, b.seeds);
    assert_eq!(a.distance_field, b.distance_field);
}

#[test]
fn exploration_phase_is_shared_between_arms() {
    let cfg = short_cfg();
    for seed in 0..3 {
        let base = run_baseline(&cfg, seed).unwrap();
        let sr = run_structrl(&cfg, seed).unwrap();
        let n = cfg.exploration_episodes;
        let same = base.episodic_returns[..n]
            .iter()
            .zip(&sr.episodic_returns[..n])
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "seed {seed}");
        assert_eq!(base.exploration_graph, sr.exploration_graph);
    }
}

#[test]
fn zero_training_episodes_leaves_only_exploration() {
    let cfg = ExperimentConfig {
        training_episodes: 0,
        ..ExperimentConfig::default()
    };
    let r = run_baseline(&cfg, 0).unwrap();
    assert_eq!(r.episodic_returns.len(), cfg.exploration_episodes);
    assert_eq!(r.eval_returns.len(), cfg.exploration_episodes);
    assert_eq!(r.sigma_trace.len(), cfg.exploration_episodes);
}

#[test]
fn long_baseline_reaches_optimal_eval() {
    let mut cfg = ExperimentConfig::default();
    cfg.training_episodes = 2000 - cfg.exploration_episodes;
    let r = run_baseline(&cfg, 0).unwrap();
    assert_eq!(r.episodic_returns.len(), 2000);
    assert_eq!(r.final_eval(), Some(-18.0));
}

#[test]
fn greedy_eval_on_converged_table() {
    let spec = GridSpec::default_10x10();
    let table = converged_table(&spec);
    assert_eq!(evaluate_greedy(&table, &spec, State::new(9, 9)), -18.0);
    assert_eq!(evaluate_greedy(&table, &spec, State::new(0, 0)), 0.0);
}

#[test]
fn greedy_eval_truncates_a_cycling_policy() {
    let spec = GridSpec::default_10x10();
    let sup = Support::new(-100.0, 0.0, 51).unwrap();
    let mut table = QTable::new(&spec, sup, 1.0);
    // Right looks free everywhere, so the agent pushes into the east wall forever.
    for s in spec.all_states() {
        table.set_dist(s, Action::Right, CategoricalDist::one_hot(51, 50));
    }
    assert_eq!(evaluate_greedy(&table, &spec, State::new(9, 9)), -100.0);
}

fn with_returns(template: &RunResult, returns: Vec<f64>) -> RunResult {
    let mut r = template.clone();
    r.reached_goal = vec![false; returns.len()];
    r.eval_returns = vec![None; returns.len()];
    r.episodic_returns = returns;
    r
}

#[test]
fn aggregate_examples() {
    let cfg = ExperimentConfig {
        training_episodes: 0,
        ..ExperimentConfig::default()
    };
    let template = run_baseline(&cfg, 0).unwrap();

    let single = with_returns(&template, vec![-12.0, -30.0]);
    let s = aggregate(std::slice::from_ref(&single));
    assert_eq!(s.n_runs, 1);
    assert_eq!(s.episodes[0].mean, -12.0);
    assert_eq!(s.episodes[0].median, -12.0);
    assert_eq!(s.episodes[1].mean, -30.0);

    let dup = aggregate(&[single.clone(), single.clone(), single.clone()]);
    assert!(dup.episodes.iter().all(|e| e.iqr() == 0.0));

    let pair = aggregate(&[
        with_returns(&template, vec![-10.0]),
        with_returns(&template, vec![-20.0]),
    ]);
    assert_eq!(pair.episodes[0].mean, -15.0);
}

#[test]
fn seeds_were_visited_during_exploration() {
    let cfg = ExperimentConfig::default();
    for seed in 0..3 {
        let r = run_structrl(&short_cfg(), seed).unwrap();
        for s in r.seeds.as_ref().unwrap().states() {
            assert!(r.exploration_graph.is_visited(*s), "seed {seed}: {s}");
        }
        let d = r.distance_field.as_ref().unwrap();
        for s in r.seeds.as_ref().unwrap().states() {
            assert_eq!(d.get(cfg.grid().unwrap().index(*s)), Some(0));
        }
    }
}

#[test]
fn reward_seeds_fail_when_goal_never_reached() {
    let cfg = ExperimentConfig {
        width: 30,
        height: 30,
        max_steps: 60,
        v_min: -60.0,
        start_mode: StartMode::Fixed,
        exploration_episodes: 3,
        training_episodes: 1,
        seed_strategy: SeedStrategy::Reward,
        ..ExperimentConfig::default()
    };
    cfg.validate().unwrap();
    let outcome = run_exploration(&cfg, 0).unwrap();
    assert!(outcome.buffer.iter().all(|t| !t.terminal));
    match run_structrl(&cfg, 0) {
        Err(Error::SeedSelection { strategy, .. }) => assert_eq!(strategy, "reward"),
        other => panic!("expected a seed-selection failure, got {other:?}"),
    }
}

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.cfg");
    let cfg = ExperimentConfig::load(path).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}
