//! Tabular C51: one categorical return distribution per (state, action).

use rand::Rng;

use crate::distribution::{bellman_target, project, CategoricalDist, Support};
use crate::gridworld::{Action, GridSpec, State, Transition};

/// How a per-state spread is read off the four action distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaReduction {
    /// Std of the greedy action's distribution.
    Greedy,
    /// Mean of the four per-action stds.
    MeanOverActions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    n_states: usize,
    dists: Vec<CategoricalDist>,
    sup: Support,
    gamma: f64,
}

impl QTable {
    /// Every (state, action) starts at the uniform distribution over the support.
    pub fn new(spec: &GridSpec, sup: Support, gamma: f64) -> Self {
        let n_states = spec.n_states();
        let dists = vec![CategoricalDist::uniform(sup.n_atoms()); n_states * Action::COUNT];
        Self {
            width: spec.width(),
            n_states,
            dists,
            sup,
            gamma,
        }
    }

    fn slot(&self, s: State, a: Action) -> usize {
        let i = s.y * self.width + s.x;
        assert!(i < self.n_states, "state {s} not in table");
        i * Action::COUNT + a.index()
    }

    pub fn support(&self) -> &Support {
        &self.sup
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dist(&self, s: State, a: Action) -> &CategoricalDist {
        &self.dists[self.slot(s, a)]
    }

    pub fn set_dist(&mut self, s: State, a: Action, dist: CategoricalDist) {
        assert_eq!(dist.len(), self.sup.n_atoms());
        let i = self.slot(s, a);
        self.dists[i] = dist;
    }

    pub fn q_value(&self, s: State, a: Action) -> f64 {
        self.dist(s, a).mean(&self.sup)
    }

    /// Argmax of the expected return; ties go to the earliest action in
    /// [`Action::ALL`].
    pub fn greedy_action(&self, s: State) -> Action {
        let mut best = Action::ALL[0];
        let mut best_q = self.q_value(s, best);
        for a in &Action::ALL[1..] {
            let q = self.q_value(s, *a);
            if q > best_q {
                best = *a;
                best_q = q;
            }
        }
        best
    }

    pub fn state_value(&self, s: State) -> f64 {
        self.q_value(s, self.greedy_action(s))
    }

    pub fn sigma(&self, s: State, reduction: SigmaReduction) -> f64 {
        match reduction {
            SigmaReduction::Greedy => self.dist(s, self.greedy_action(s)).std(&self.sup),
            SigmaReduction::MeanOverActions => {
                Action::ALL
                    .iter()
                    .map(|&a| self.dist(s, a).std(&self.sup))
                    .sum::<f64>()
                    / Action::COUNT as f64
            }
        }
    }

    /// Projected distributional Bellman target for one transition, bootstrapping
    /// from the successor's greedy action.
    pub fn target(&self, t: &Transition) -> CategoricalDist {
        let next = if t.terminal {
            // unused by the terminal branch; any distribution of the right size
            self.dist(t.state, t.action)
        } else {
            self.dist(t.next_state, self.greedy_action(t.next_state))
        };
        let bt = bellman_target(next, t.reward, self.gamma, t.terminal, &self.sup);
        project(&bt.atoms, &bt.probs, &self.sup)
    }

    /// Convex step of size `eta` toward the projected target.
    pub fn update(&mut self, t: &Transition, eta: f64) {
        debug_assert!((0.0..=1.0).contains(&eta), "eta {eta} outside [0, 1]");
        let target = self.target(t);
        let i = self.slot(t.state, t.action);
        self.dists[i].mix_toward(&target, eta);
    }

    /// One synchronous sweep: every target is computed from the table as it was
    /// before the sweep, then all updates are applied.
    pub fn sweep(&mut self, transitions: &[Transition], eta: f64) {
        let targets: Vec<CategoricalDist> = transitions.iter().map(|t| self.target(t)).collect();
        for (t, target) in transitions.iter().zip(&targets) {
            let i = self.slot(t.state, t.action);
            self.dists[i].mix_toward(target, eta);
        }
    }

    /// Repeats full-model sweeps until no probability moves by more than `tol`.
    /// Returns the number of sweeps performed.
    pub fn sweep_to_fixed_point(
        &mut self,
        spec: &GridSpec,
        eta: f64,
        tol: f64,
        max_sweeps: usize,
    ) -> usize {
        let transitions = all_transitions(spec);
        for sweep in 1..=max_sweeps {
            let before = self.dists.clone();
            self.sweep(&transitions, eta);
            let moved = before
                .iter()
                .zip(&self.dists)
                .flat_map(|(a, b)| a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()))
                .fold(0.0f64, f64::max);
            if moved <= tol {
                return sweep;
            }
        }
        max_sweeps
    }

    pub fn epsilon_greedy<R: Rng + ?Sized>(&self, s: State, epsilon: f64, rng: &mut R) -> Action {
        if rng.random::<f64>() < epsilon {
            Action::from_index(rng.random_range(0..Action::COUNT))
        } else {
            self.greedy_action(s)
        }
    }
}

/// Every (state, action) transition of the environment, goal excluded.
pub fn all_transitions(spec: &GridSpec) -> Vec<Transition> {
    spec.all_states()
        .into_iter()
        .filter(|&s| !spec.is_goal(s))
        .flat_map(|s| Action::ALL.map(|a| spec.step(s, a).expect("non-goal state")))
        .collect()
}
