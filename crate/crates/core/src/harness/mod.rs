//! Experiment orchestration: the C51 baseline, the two-phase structured
//! protocol, greedy evaluation, and the sampling-strategy comparison.
//!
//! Each run owns one master seed split into independent ChaCha streams for
//! start states, action choice, replay and demo sampling, so switching the
//! replay or exploration rule in phase 2 leaves the other streams untouched.

pub mod export;
pub mod stats;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::c51::QTable;
use crate::config::{ExperimentConfig, GraphMode, StartMode};
use crate::dynamics::{
    sampling_weights, stability_counts, t_star, SamplingStrategy, SigmaTrace, StabilityTrace,
    TStarField,
};
use crate::error::{Error, Result};
use crate::gridworld::{GridSpec, State};
use crate::seeds::{
    seeds_from_bellman, seeds_from_reward, seeds_from_tstar, seeds_hybrid, SeedSet, SeedStrategy,
};
use crate::structrl::{select_action, replay_weight, ReplayBuffer, StructPolicyParams, WeightedReplay};
use crate::structure::{bfs_distance, DistanceField, TransitionGraph};

pub use stats::{aggregate, spearman, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Baseline,
    StructRl,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::StructRl => "structrl",
        }
    }
}

const ENV_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;
const SAMPLING_STREAM: u64 = 4;

pub fn stream(run_seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub arm: Arm,
    pub run_seed: u64,
    pub episodic_returns: Vec<f64>,
    pub reached_goal: Vec<bool>,
    /// Greedy return from the evaluation start, every `eval_every` episodes.
    pub eval_returns: Vec<Option<f64>>,
    pub sigma_trace: SigmaTrace,
    /// t* over the whole run.
    pub tstar: TStarField,
    pub sigma_final: Vec<f64>,
    /// Environment steps taken from each state.
    pub visitation: Vec<u64>,
    /// Replay draws per origin state.
    pub replay_visitation: Vec<u64>,
    pub seeds: Option<SeedSet>,
    pub distance_field: Option<DistanceField>,
    /// Transitions observed during the exploration phase.
    pub exploration_graph: TransitionGraph,
    pub table: QTable,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn final_eval(&self) -> Option<f64> {
        self.eval_returns.iter().rev().flatten().next().copied()
    }

    pub fn best_eval(&self) -> Option<f64> {
        self.eval_returns.iter().flatten().copied().reduce(f64::max)
    }

    /// Mean episodic return over the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.episodic_returns[self.episodic_returns.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Roll out the greedy policy from `start`, capped at `max_steps`.
pub fn evaluate_greedy(table: &QTable, spec: &GridSpec, start: State) -> f64 {
    let mut s = start;
    let mut total = 0.0;
    for _ in 0..spec.max_steps() {
        if spec.is_goal(s) {
            break;
        }
        let t = spec
            .step(s, table.greedy_action(s))
            .expect("non-goal state inside the grid");
        total += t.reward;
        s = t.next_state;
    }
    total
}

enum Replay {
    Uniform(ReplayBuffer),
    Weighted(WeightedReplay),
}

impl Replay {
    fn buffer(&self) -> &ReplayBuffer {
        match self {
            Replay::Uniform(b) => b,
            Replay::Weighted(w) => w.buffer(),
        }
    }
}

enum Behaviour {
    EpsilonGreedy(f64),
    Structured {
        field: DistanceField,
        params: StructPolicyParams,
    },
}

struct Trainer<'a> {
    cfg: &'a ExperimentConfig,
    spec: GridSpec,
    table: QTable,
    replay: Replay,
    graph: TransitionGraph,
    sigma: SigmaTrace,
    stability: StabilityTrace,
    env_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    returns: Vec<f64>,
    reached: Vec<bool>,
    evals: Vec<Option<f64>>,
    visits: Vec<u64>,
    replay_visits: Vec<u64>,
    episode: usize,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a ExperimentConfig, run_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.grid()?;
        let table = QTable::new(&spec, cfg.support()?, cfg.gamma);
        let n = spec.n_states();
        Ok(Self {
            cfg,
            table,
            replay: Replay::Uniform(ReplayBuffer::new(cfg.replay_capacity)),
            graph: TransitionGraph::new(&spec),
            sigma: SigmaTrace::new(),
            stability: StabilityTrace::new(cfg.stability_window),
            env_rng: stream(run_seed, ENV_STREAM),
            policy_rng: stream(run_seed, POLICY_STREAM),
            replay_rng: stream(run_seed, REPLAY_STREAM),
            returns: Vec::with_capacity(cfg.total_episodes()),
            reached: Vec::with_capacity(cfg.total_episodes()),
            evals: Vec::with_capacity(cfg.total_episodes()),
            visits: vec![0; n],
            replay_visits: vec![0; n],
            episode: 0,
            spec,
        })
    }

    fn start_state(&mut self) -> State {
        match self.cfg.start_mode {
            StartMode::Fixed => self.cfg.fixed_start(),
            StartMode::Uniform => {
                let n = self.spec.n_states();
                let goal = self.spec.index(self.spec.goal());
                let mut i = self.env_rng.random_range(0..n - 1);
                if i >= goal {
                    i += 1;
                }
                self.spec.state_at(i)
            }
        }
    }

    fn replay_updates(&mut self) -> Result<()> {
        for _ in 0..self.cfg.updates_per_step {
            let batch = match &self.replay {
                Replay::Uniform(b) => b.sample_uniform(self.cfg.batch_size, &mut self.replay_rng)?,
                Replay::Weighted(w) => w.sample(self.cfg.batch_size, &mut self.replay_rng)?,
            };
            for t in &batch {
                self.replay_visits[self.spec.index(t.state)] += 1;
                self.table.update(t, self.cfg.eta);
            }
        }
        Ok(())
    }

    fn run_episode(&mut self, behaviour: &Behaviour) -> Result<()> {
        let mut s = self.start_state();
        let mut total = 0.0;
        let mut reached = false;
        for _ in 0..self.spec.max_steps() {
            let a = match behaviour {
                Behaviour::EpsilonGreedy(eps) => {
                    self.table.epsilon_greedy(s, *eps, &mut self.policy_rng)
                }
                Behaviour::Structured { field, params } => {
                    select_action(&self.spec, s, field, params, &mut self.policy_rng)
                }
            };
            let t = self.spec.step(s, a)?;
            self.visits[self.spec.index(s)] += 1;
            self.graph.observe(&t);
            match (&mut self.replay, behaviour) {
                (Replay::Uniform(b), _) => b.push(t),
                (Replay::Weighted(w), Behaviour::Structured { field, params }) => {
                    let weight = replay_weight(&self.spec, &t, field, params);
                    w.push(t, weight);
                }
                (Replay::Weighted(_), Behaviour::EpsilonGreedy(_)) => {
                    unreachable!("weighted replay is only installed with structured behaviour")
                }
            }
            if self.cfg.online_update {
                self.table.update(&t, self.cfg.eta);
            }
            self.replay_updates()?;
            total += t.reward;
            s = t.next_state;
            if t.terminal {
                reached = true;
                break;
            }
        }
        self.returns.push(total);
        self.reached.push(reached);
        let ep = self.episode;
        self.sigma
            .record_snapshot(ep, &self.table, &self.spec, self.cfg.sigma_reduction)?;
        self.stability.record(ep, &self.table, &self.spec)?;
        let eval = (ep + 1).is_multiple_of(self.cfg.eval_every)
            .then(|| evaluate_greedy(&self.table, &self.spec, self.cfg.eval_start()));
        self.evals.push(eval);
        self.episode += 1;
        Ok(())
    }

    /// The exploration phase, identical for both arms.
    fn explore(&mut self) -> Result<()> {
        let behaviour = Behaviour::EpsilonGreedy(self.cfg.explore_epsilon);
        for _ in 0..self.cfg.exploration_episodes {
            self.run_episode(&behaviour)?;
        }
        Ok(())
    }

    fn finish(
        self,
        arm: Arm,
        run_seed: u64,
        seeds: Option<SeedSet>,
        field: Option<DistanceField>,
        exploration_graph: TransitionGraph,
        started: Instant,
    ) -> Result<RunResult> {
        let tstar = t_star(&self.sigma, self.cfg.smoothing_window)?;
        let sigma_final = self.sigma.last().map(<[f64]>::to_vec).unwrap_or_default();
        Ok(RunResult {
            arm,
            run_seed,
            episodic_returns: self.returns,
            reached_goal: self.reached,
            eval_returns: self.evals,
            sigma_trace: self.sigma,
            tstar,
            sigma_final,
            visitation: self.visits,
            replay_visitation: self.replay_visits,
            seeds,
            distance_field: field,
            exploration_graph,
            table: self.table,
            wall_time: started.elapsed(),
        })
    }
}

/// C51 with epsilon-greedy exploration and uniform replay for the whole budget.
pub fn run_baseline(cfg: &ExperimentConfig, run_seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let mut tr = Trainer::new(cfg, run_seed)?;
    tr.explore()?;
    let exploration_graph = tr.graph.clone();
    let behaviour = Behaviour::EpsilonGreedy(cfg.epsilon);
    for _ in 0..cfg.training_episodes {
        tr.run_episode(&behaviour)?;
    }
    tr.finish(Arm::Baseline, run_seed, None, None, exploration_graph, started)
}

/// Everything the exploration phase leaves behind for seed selection.
#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub sigma: SigmaTrace,
    pub stability: StabilityTrace,
    pub buffer: ReplayBuffer,
    pub graph: TransitionGraph,
    pub table: QTable,
}

/// Runs only the shared exploration phase.
pub fn run_exploration(cfg: &ExperimentConfig, run_seed: u64) -> Result<ExplorationOutcome> {
    let mut tr = Trainer::new(cfg, run_seed)?;
    tr.explore()?;
    Ok(ExplorationOutcome {
        sigma: tr.sigma,
        stability: tr.stability,
        buffer: tr.replay.buffer().clone(),
        graph: tr.graph,
        table: tr.table,
    })
}

/// One seed selector applied to an exploration outcome.
pub fn select_seeds_with(
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    outcome: &ExplorationOutcome,
    strategy: SeedStrategy,
) -> Result<SeedSet> {
    let transitions = outcome.buffer.to_vec();
    let from_tstar = || -> Result<SeedSet> {
        let tstar = t_star(&outcome.sigma, cfg.smoothing_window)?;
        let stab = stability_counts(&outcome.stability);
        seeds_from_tstar(spec, &tstar, &stab, cfg.k, cfg.max_changes)
    };
    let from_reward = || seeds_from_reward(&transitions, cfg.k);
    let from_bellman = || seeds_from_bellman(&outcome.table, &transitions, cfg.k, cfg.bellman_tol);
    match strategy {
        SeedStrategy::TStar => from_tstar(),
        SeedStrategy::Reward => from_reward(),
        SeedStrategy::Bellman => from_bellman(),
        SeedStrategy::Hybrid => seeds_hybrid(vec![from_tstar(), from_reward(), from_bellman()]),
    }
}

fn distance_graph(cfg: &ExperimentConfig, spec: &GridSpec, observed: &TransitionGraph) -> TransitionGraph {
    match cfg.graph_mode {
        GraphMode::Observed => observed.clone(),
        GraphMode::Full => TransitionGraph::complete(spec),
    }
}

/// Two-phase protocol: shared exploration, seed selection and distance
/// construction, then structure-biased exploration and replay.
pub fn run_structrl(cfg: &ExperimentConfig, run_seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let mut tr = Trainer::new(cfg, run_seed)?;
    tr.explore()?;
    let exploration_graph = tr.graph.clone();

    let outcome = ExplorationOutcome {
        sigma: tr.sigma.clone(),
        stability: tr.stability.clone(),
        buffer: tr.replay.buffer().clone(),
        graph: exploration_graph.clone(),
        table: tr.table.clone(),
    };
    let seeds = select_seeds_with(cfg, &tr.spec, &outcome, cfg.seed_strategy)?;
    let mut field = bfs_distance(&distance_graph(cfg, &tr.spec, &exploration_graph), &seeds);
    let params = cfg.policy_params();

    tr.replay = Replay::Weighted(WeightedReplay::from_buffer(
        &tr.spec,
        tr.replay.buffer(),
        &field,
        &params,
    ));
    for phase2_episode in 0..cfg.training_episodes {
        if cfg.refresh_every > 0 && phase2_episode > 0 && phase2_episode % cfg.refresh_every == 0 {
            field = bfs_distance(&distance_graph(cfg, &tr.spec, &tr.graph), &seeds);
            if let Replay::Weighted(w) = &mut tr.replay {
                w.reweight(&tr.spec, &field, &params);
            }
        }
        let behaviour = Behaviour::Structured {
            field: field.clone(),
            params,
        };
        tr.run_episode(&behaviour)?;
    }
    tr.finish(
        Arm::StructRl,
        run_seed,
        Some(seeds),
        Some(field),
        exploration_graph,
        started,
    )
}

pub fn run_arm(cfg: &ExperimentConfig, arm: Arm, run_seed: u64) -> Result<RunResult> {
    match arm {
        Arm::Baseline => run_baseline(cfg, run_seed),
        Arm::StructRl => run_structrl(cfg, run_seed),
    }
}

/// Runs every seed for one arm, `jobs` at a time. Results come back in seed order.
pub fn run_many(
    cfg: &ExperimentConfig,
    arm: Arm,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_arm(cfg, arm, seed))
            .collect()
    })
}

/// One strategy's sampling result: weights, visit frequencies, raw counts.
pub type SamplingGrid = (SamplingStrategy, Vec<f64>, Vec<f64>, Vec<u64>);

/// Per-strategy visitation frequencies from sampling states by weight.
#[derive(Debug, Clone)]
pub struct SamplingComparison {
    pub query_episode: usize,
    pub sigma: Vec<f64>,
    pub tstar: TStarField,
    pub grids: Vec<SamplingGrid>,
}

/// Samples states under the three weightings, using the final spread map and
/// t* of a finished baseline run.
pub fn compare_sampling_from(
    cfg: &ExperimentConfig,
    run: &RunResult,
) -> SamplingComparison {
    let query_episode = cfg
        .sampling_query_episode
        .or_else(|| run.tstar.min_finite())
        .unwrap_or(0);
    let mut rng = stream(run.run_seed, SAMPLING_STREAM);
    let grids = SamplingStrategy::ALL
        .iter()
        .map(|&strategy| {
            let weights = sampling_weights(
                strategy,
                &run.sigma_final,
                &run.tstar,
                query_episode,
                cfg.tau_kernel,
                cfg.sampling_floor,
            );
            let dist = rand::distr::weighted::WeightedIndex::new(&weights)
                .expect("sampling weights are positive");
            let mut counts = vec![0u64; weights.len()];
            for _ in 0..cfg.sampling_draws {
                counts[rand::distr::Distribution::sample(&dist, &mut rng)] += 1;
            }
            let freq = counts
                .iter()
                .map(|&c| c as f64 / cfg.sampling_draws.max(1) as f64)
                .collect();
            (strategy, weights, freq, counts)
        })
        .collect();
    SamplingComparison {
        query_episode,
        sigma: run.sigma_final.clone(),
        tstar: run.tstar.clone(),
        grids,
    }
}

pub fn compare_sampling(cfg: &ExperimentConfig, run_seed: u64) -> Result<SamplingComparison> {
    let run = run_baseline(cfg, run_seed)?;
    Ok(compare_sampling_from(cfg, &run))
}

/// Spearman correlation between finite t* and the true distance to the goal.
pub fn tstar_distance_correlation(spec: &GridSpec, tstar: &TStarField) -> Result<f64> {
    let d = spec.true_distances();
    let xs: Vec<Option<f64>> = tstar.values().iter().map(|t| t.map(|t| t as f64)).collect();
    let ys: Vec<Option<f64>> = d.iter().map(|&d| Some(d as f64)).collect();
    spearman(&xs, &ys)
}
