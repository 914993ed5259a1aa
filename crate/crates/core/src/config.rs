//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file (or the built-in `default`) is a complete configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::c51::SigmaReduction;
use crate::distribution::Support;
use crate::error::{Error, Result};
use crate::gridworld::{GridSpec, State};
use crate::seeds::SeedStrategy;
use crate::structrl::StructPolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// Uniform over non-goal states.
    Uniform,
    /// Always `(start_x, start_y)`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    /// Transitions seen during exploration.
    Observed,
    /// Every environment move.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub width: usize,
    pub height: usize,
    pub goal_x: usize,
    pub goal_y: usize,
    pub step_reward: f64,
    pub max_steps: usize,

    pub v_min: f64,
    pub v_max: f64,
    pub n_atoms: usize,

    pub gamma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub explore_epsilon: f64,

    pub exploration_episodes: usize,
    pub training_episodes: usize,
    pub start_mode: StartMode,
    pub start_x: Option<usize>,
    pub start_y: Option<usize>,
    pub eval_x: Option<usize>,
    pub eval_y: Option<usize>,
    pub eval_every: usize,

    pub replay_capacity: usize,
    pub batch_size: usize,
    pub updates_per_step: usize,
    pub online_update: bool,

    pub sigma_reduction: SigmaReduction,
    pub smoothing_window: usize,

    pub seed_strategy: SeedStrategy,
    pub k: usize,
    pub stability_window: usize,
    pub max_changes: usize,
    pub bellman_tol: f64,

    pub lambda: f64,
    pub alpha: f64,
    pub weight_floor: f64,
    pub graph_mode: GraphMode,
    pub refresh_every: usize,

    pub tau_kernel: f64,
    pub sampling_floor: f64,
    pub sampling_draws: usize,
    pub sampling_query_episode: Option<usize>,
    pub frontier_tau: usize,

    pub n_random_seeds: usize,
    pub rng_seed_base: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            goal_x: 0,
            goal_y: 0,
            step_reward: -1.0,
            max_steps: 100,
            v_min: -100.0,
            v_max: 0.0,
            n_atoms: 51,
            gamma: 1.0,
            eta: 0.1,
            epsilon: 0.1,
            explore_epsilon: 0.1,
            exploration_episodes: 30,
            training_episodes: 300,
            start_mode: StartMode::Uniform,
            start_x: None,
            start_y: None,
            eval_x: None,
            eval_y: None,
            eval_every: 5,
            replay_capacity: 50_000,
            batch_size: 4,
            updates_per_step: 1,
            online_update: true,
            sigma_reduction: SigmaReduction::Greedy,
            smoothing_window: 3,
            seed_strategy: SeedStrategy::Hybrid,
            k: 5,
            stability_window: 5,
            max_changes: 1,
            bellman_tol: 1e-6,
            lambda: 1.0,
            alpha: 1.0,
            weight_floor: 0.05,
            graph_mode: GraphMode::Observed,
            refresh_every: 0,
            tau_kernel: 5.0,
            sampling_floor: 1e-3,
            sampling_draws: 100_000,
            sampling_query_episode: None,
            frontier_tau: 1,
            n_random_seeds: 10,
            rng_seed_base: 0,
        }
    }
}

/// Every recognised key with a one-line description, in manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("width", "grid columns"),
    ("height", "grid rows"),
    ("goal_x", "goal column"),
    ("goal_y", "goal row"),
    ("step_reward", "reward paid on every transition"),
    ("max_steps", "episode length cap (>= width + height)"),
    ("v_min", "lowest return atom"),
    ("v_max", "highest return atom"),
    ("n_atoms", "number of return atoms"),
    ("gamma", "discount factor in [0, 1]"),
    ("eta", "step size of the distribution update, in (0, 1]"),
    ("epsilon", "random-action rate after exploration (both arms)"),
    ("explore_epsilon", "random-action rate during the exploration phase"),
    ("exploration_episodes", "phase-1 episodes (>= 2)"),
    ("training_episodes", "phase-2 episodes"),
    ("start_mode", "training start states: uniform | fixed"),
    ("start_x", "fixed start column; 'auto' = width - 1"),
    ("start_y", "fixed start row; 'auto' = height - 1"),
    ("eval_x", "greedy evaluation start column; 'auto' = width - 1"),
    ("eval_y", "greedy evaluation start row; 'auto' = height - 1"),
    ("eval_every", "episodes between greedy evaluations"),
    ("replay_capacity", "replay buffer capacity (FIFO)"),
    ("batch_size", "transitions per replay batch"),
    ("updates_per_step", "replay batches per environment step"),
    ("online_update", "also update on each transition as it is observed: true | false"),
    ("sigma_reduction", "per-state spread: greedy | mean"),
    ("smoothing_window", "centered moving-average window before t* (1 = off)"),
    ("seed_strategy", "seed selector: hybrid | tstar | reward | bellman"),
    ("k", "target seed-set size"),
    ("stability_window", "final exploration episodes checked for greedy changes"),
    ("max_changes", "greedy changes tolerated for a t* seed"),
    ("bellman_tol", "minimum Bellman improvement for a bellman seed"),
    ("lambda", "exploration bias strength"),
    ("alpha", "replay preference sharpness"),
    ("weight_floor", "minimum replay weight, in (0, 1)"),
    ("graph_mode", "distance graph: observed | full"),
    ("refresh_every", "recompute distances every N phase-2 episodes (0 = never)"),
    ("tau_kernel", "t* sampling kernel width in episodes"),
    ("sampling_floor", "additive floor for sigma / t* sampling weights"),
    ("sampling_draws", "state draws per strategy in the sampling demo"),
    ("sampling_query_episode", "t* kernel centre; 'auto' = earliest finite t*"),
    ("frontier_tau", "max |t*(s) - t*(s')| for frontier transitions"),
    ("n_random_seeds", "independent runs per arm"),
    ("rng_seed_base", "first run seed; run i uses base + i"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "width" => self.width = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "goal_x" => self.goal_x = parse(key, v)?,
            "goal_y" => self.goal_y = parse(key, v)?,
            "step_reward" => self.step_reward = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "v_min" => self.v_min = parse(key, v)?,
            "v_max" => self.v_max = parse(key, v)?,
            "n_atoms" => self.n_atoms = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "explore_epsilon" => self.explore_epsilon = parse(key, v)?,
            "exploration_episodes" => self.exploration_episodes = parse(key, v)?,
            "training_episodes" => self.training_episodes = parse(key, v)?,
            "start_mode" => {
                self.start_mode = match v {
                    "uniform" => StartMode::Uniform,
                    "fixed" => StartMode::Fixed,
                    _ => return Err(Error::Config(format!("start_mode must be uniform or fixed, got {v:?}"))),
                }
            }
            "start_x" => self.start_x = parse_auto(key, v)?,
            "start_y" => self.start_y = parse_auto(key, v)?,
            "eval_x" => self.eval_x = parse_auto(key, v)?,
            "eval_y" => self.eval_y = parse_auto(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "replay_capacity" => self.replay_capacity = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "updates_per_step" => self.updates_per_step = parse(key, v)?,
            "online_update" => self.online_update = parse(key, v)?,
            "sigma_reduction" => {
                self.sigma_reduction = match v {
                    "greedy" => SigmaReduction::Greedy,
                    "mean" => SigmaReduction::MeanOverActions,
                    _ => return Err(Error::Config(format!("sigma_reduction must be greedy or mean, got {v:?}"))),
                }
            }
            "smoothing_window" => self.smoothing_window = parse(key, v)?,
            "seed_strategy" => self.seed_strategy = v.parse()?,
            "k" => self.k = parse(key, v)?,
            "stability_window" => self.stability_window = parse(key, v)?,
            "max_changes" => self.max_changes = parse(key, v)?,
            "bellman_tol" => self.bellman_tol = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "weight_floor" => self.weight_floor = parse(key, v)?,
            "graph_mode" => {
                self.graph_mode = match v {
                    "observed" => GraphMode::Observed,
                    "full" => GraphMode::Full,
                    _ => return Err(Error::Config(format!("graph_mode must be observed or full, got {v:?}"))),
                }
            }
            "refresh_every" => self.refresh_every = parse(key, v)?,
            "tau_kernel" => self.tau_kernel = parse(key, v)?,
            "sampling_floor" => self.sampling_floor = parse(key, v)?,
            "sampling_draws" => self.sampling_draws = parse(key, v)?,
            "sampling_query_episode" => {
                self.sampling_query_episode = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "frontier_tau" => self.frontier_tau = parse(key, v)?,
            "n_random_seeds" => self.n_random_seeds = parse(key, v)?,
            "rng_seed_base" => self.rng_seed_base = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Resolved value of every key, as written to the manifest.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let reduction = match self.sigma_reduction {
            SigmaReduction::Greedy => "greedy",
            SigmaReduction::MeanOverActions => "mean",
        };
        let start = match self.start_mode {
            StartMode::Uniform => "uniform",
            StartMode::Fixed => "fixed",
        };
        let graph = match self.graph_mode {
            GraphMode::Observed => "observed",
            GraphMode::Full => "full",
        };
        let query = self
            .sampling_query_episode
            .map_or_else(|| "auto".to_string(), |e| e.to_string());
        let values: Vec<String> = vec![
            self.width.to_string(),
            self.height.to_string(),
            self.goal_x.to_string(),
            self.goal_y.to_string(),
            self.step_reward.to_string(),
            self.max_steps.to_string(),
            self.v_min.to_string(),
            self.v_max.to_string(),
            self.n_atoms.to_string(),
            self.gamma.to_string(),
            self.eta.to_string(),
            self.epsilon.to_string(),
            self.explore_epsilon.to_string(),
            self.exploration_episodes.to_string(),
            self.training_episodes.to_string(),
            start.to_string(),
            show_auto(self.start_x),
            show_auto(self.start_y),
            show_auto(self.eval_x),
            show_auto(self.eval_y),
            self.eval_every.to_string(),
            self.replay_capacity.to_string(),
            self.batch_size.to_string(),
            self.updates_per_step.to_string(),
            self.online_update.to_string(),
            reduction.to_string(),
            self.smoothing_window.to_string(),
            self.seed_strategy.to_string(),
            self.k.to_string(),
            self.stability_window.to_string(),
            self.max_changes.to_string(),
            self.bellman_tol.to_string(),
            self.lambda.to_string(),
            self.alpha.to_string(),
            self.weight_floor.to_string(),
            graph.to_string(),
            self.refresh_every.to_string(),
            self.tau_kernel.to_string(),
            self.sampling_floor.to_string(),
            self.sampling_draws.to_string(),
            query,
            self.frontier_tau.to_string(),
            self.n_random_seeds.to_string(),
            self.rng_seed_base.to_string(),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `default` selects the built-in configuration; anything else is a path.
    pub fn load(path: &str) -> Result<Self> {
        if path == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(Path::new(path)).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override must be key=value, got {spec:?}")))?;
        self.set(key, value)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ((key, value), (_, doc)) in self.entries().into_iter().zip(KEYS) {
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.width,
            self.height,
            State::new(self.goal_x, self.goal_y),
            self.step_reward,
            self.max_steps,
        )
    }

    pub fn support(&self) -> Result<Support> {
        Support::new(self.v_min, self.v_max, self.n_atoms)
    }

    pub fn policy_params(&self) -> StructPolicyParams {
        StructPolicyParams {
            lambda: self.lambda,
            alpha: self.alpha,
            epsilon: self.epsilon,
            weight_floor: self.weight_floor,
        }
    }

    /// Far corner unless set explicitly.
    pub fn eval_start(&self) -> State {
        State::new(
            self.eval_x.unwrap_or(self.width.saturating_sub(1)),
            self.eval_y.unwrap_or(self.height.saturating_sub(1)),
        )
    }

    pub fn fixed_start(&self) -> State {
        State::new(
            self.start_x.unwrap_or(self.width.saturating_sub(1)),
            self.start_y.unwrap_or(self.height.saturating_sub(1)),
        )
    }

    pub fn total_episodes(&self) -> usize {
        self.exploration_episodes + self.training_episodes
    }

    /// Run seeds `base, base + 1, ...`.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.n_random_seeds as u64)
            .map(|i| self.rng_seed_base.wrapping_add(i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.support()?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        check(unit(self.gamma), "gamma must lie in [0, 1]")?;
        check(self.eta > 0.0 && self.eta <= 1.0, "eta must lie in (0, 1]")?;
        check(unit(self.epsilon), "epsilon must lie in [0, 1]")?;
        check(unit(self.explore_epsilon), "explore_epsilon must lie in [0, 1]")?;
        check(self.exploration_episodes >= 2, "exploration_episodes must be at least 2")?;
        if self.start_mode == StartMode::Fixed {
            check(grid.contains(self.fixed_start()), "fixed start lies outside the grid")?;
            check(!grid.is_goal(self.fixed_start()), "fixed start cannot be the goal")?;
        }
        check(grid.contains(self.eval_start()), "eval start lies outside the grid")?;
        check(grid.n_states() > 1, "grid needs at least one non-goal state")?;
        check(self.eval_every >= 1, "eval_every must be at least 1")?;
        check(self.replay_capacity >= 1, "replay_capacity must be at least 1")?;
        check(self.batch_size >= 1, "batch_size must be at least 1")?;
        check(self.smoothing_window >= 1, "smoothing_window must be at least 1")?;
        check(self.k >= 1, "k must be at least 1")?;
        check(self.stability_window >= 1, "stability_window must be at least 1")?;
        check(self.lambda > 0.0 && self.lambda.is_finite(), "lambda must be positive")?;
        check(self.alpha > 0.0 && self.alpha.is_finite(), "alpha must be positive")?;
        check(
            self.weight_floor > 0.0 && self.weight_floor < 1.0,
            "weight_floor must lie in (0, 1)",
        )?;
        check(self.tau_kernel > 0.0, "tau_kernel must be positive")?;
        check(self.sampling_floor > 0.0, "sampling_floor must be positive")?;
        check(self.n_random_seeds >= 1, "n_random_seeds must be at least 1")?;
        Ok(())
    }
}
