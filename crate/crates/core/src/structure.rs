//! Observed transition graph, multi-source distance to the seed set, and the
//! two distance-difference scores used for exploration and replay.

use std::collections::{BTreeSet, VecDeque};

use crate::gridworld::{Action, GridSpec, State, Transition};
use crate::seeds::SeedSet;

/// Directed state-to-state edges seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionGraph {
    width: usize,
    edges: BTreeSet<(usize, usize)>,
    visited: Vec<bool>,
}

impl TransitionGraph {
    pub fn new(spec: &GridSpec) -> Self {
        Self {
            width: spec.width(),
            edges: BTreeSet::new(),
            visited: vec![false; spec.n_states()],
        }
    }

    /// Every move the environment allows. Not model-free; used for ablations
    /// and as an oracle.
    pub fn complete(spec: &GridSpec) -> Self {
        let mut g = Self::new(spec);
        for s in spec.all_states().into_iter().filter(|&s| !spec.is_goal(s)) {
            for a in Action::ALL {
                g.insert(s, spec.successor(s, a));
            }
        }
        g
    }

    fn idx(&self, s: State) -> usize {
        s.y * self.width + s.x
    }

    fn state(&self, i: usize) -> State {
        State::new(i % self.width, i / self.width)
    }

    pub fn insert(&mut self, from: State, to: State) {
        let (i, j) = (self.idx(from), self.idx(to));
        self.visited[i] = true;
        self.visited[j] = true;
        self.edges.insert((i, j));
    }

    pub fn observe(&mut self, t: &Transition) {
        self.insert(t.state, t.next_state);
    }

    pub fn edges(&self) -> impl Iterator<Item = (State, State)> + '_ {
        self.edges
            .iter()
            .map(|&(i, j)| (self.state(i), self.state(j)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_visited(&self, s: State) -> bool {
        self.visited[self.idx(s)]
    }

    pub fn n_states(&self) -> usize {
        self.visited.len()
    }
}

/// Steps from each state to the nearest seed along observed edges; `None`
/// when no observed path leads there.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    values: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn from_values(values: Vec<Option<u32>>) -> Self {
        Self { values }
    }

    pub fn unreached(n_states: usize) -> Self {
        Self {
            values: vec![None; n_states],
        }
    }

    pub fn get(&self, state_index: usize) -> Option<u32> {
        self.values[state_index]
    }

    pub fn values(&self) -> &[Option<u32>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Multi-source BFS from the seeds over reversed edges, so `d(s)` counts the
/// steps *from* `s` *to* the seed set.
pub fn bfs_distance(graph: &TransitionGraph, seeds: &SeedSet) -> DistanceField {
    let n = graph.n_states();
    let mut predecessors = vec![Vec::new(); n];
    for &(i, j) in &graph.edges {
        if i != j {
            predecessors[j].push(i);
        }
    }
    let mut values = vec![None; n];
    let mut queue = VecDeque::new();
    for &s in seeds.states() {
        let i = graph.idx(s);
        if values[i].is_none() {
            values[i] = Some(0);
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        let dj = values[j].expect("queued states are labelled");
        for &i in &predecessors[j] {
            if values[i].is_none() {
                values[i] = Some(dj + 1);
                queue.push_back(i);
            }
        }
    }
    DistanceField { values }
}

fn difference(d_from: Option<u32>, d_to: Option<u32>) -> Option<f64> {
    Some(d_from? as f64 - d_to? as f64)
}

/// `exp(lambda * (d(s) - d(s')))`; neutral (1) when either side is unreached.
pub fn direction_score(d_from: Option<u32>, d_to: Option<u32>, lambda: f64) -> f64 {
    difference(d_from, d_to).map_or(1.0, |delta| (lambda * delta).exp())
}

/// `tanh(alpha * (d(s) - d(s')))`; neutral (0) when either side is unreached.
pub fn replay_score(d_from: Option<u32>, d_to: Option<u32>, alpha: f64) -> f64 {
    difference(d_from, d_to).map_or(0.0, |delta| (alpha * delta).tanh())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::seeds::SeedStrategy;

    fn seeds(states: Vec<State>) -> SeedSet {
        SeedSet::new(states, SeedStrategy::Reward, 1).unwrap()
    }

    #[test]
    fn seeds_are_at_zero_and_unvisited_unreached() {
        let spec = GridSpec::default_10x10();
        let mut g = TransitionGraph::new(&spec);
        g.insert(State::new(2, 0), State::new(1, 0));
        g.insert(State::new(1, 0), State::new(0, 0));
        let f = bfs_distance(&g, &seeds(vec![State::new(0, 0)]));
        assert_eq!(f.get(0), Some(0));
        assert_eq!(f.get(1), Some(1));
        assert_eq!(f.get(2), Some(2));
        assert_eq!(f.get(spec.index(State::new(5, 5))), None);
        // edges point toward the seed; the reverse direction was never seen
        let f = bfs_distance(&g, &seeds(vec![State::new(2, 0)]));
        assert_eq!(f.get(0), None);
    }

    #[test]
    fn complete_graph_reproduces_true_distance() {
        let spec = GridSpec::default_10x10();
        let g = TransitionGraph::complete(&spec);
        let f = bfs_distance(&g, &seeds(vec![spec.goal()]));
        for s in spec.all_states() {
            let manhattan = (s.x + s.y) as u32;
            assert_eq!(f.get(spec.index(s)), Some(manhattan));
        }
    }

    #[test]
    fn adding_edges_never_increases_distance() {
        let spec = GridSpec::default_10x10();
        let all: Vec<(State, State)> = TransitionGraph::complete(&spec).edges().collect();
        let s0 = seeds(vec![spec.goal()]);
        let mut g = TransitionGraph::new(&spec);
        let mut prev = bfs_distance(&g, &s0);
        // a fixed scrambled insertion order
        for k in 0..all.len() {
            let (a, b) = all[(k * 97) % all.len()];
            g.insert(a, b);
            let next = bfs_distance(&g, &s0);
            for i in 0..spec.n_states() {
                match (prev.get(i), next.get(i)) {
                    (Some(p), Some(n)) => assert!(n <= p),
                    (Some(_), None) => panic!("state {i} lost its distance"),
                    _ => {}
                }
            }
            prev = next;
        }
    }

    #[test]
    fn direction_score_examples() {
        assert_eq!(direction_score(Some(4), Some(4), 3.0), 1.0);
        assert!((direction_score(Some(3), Some(2), 1.0) - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(direction_score(None, Some(2), 1.0), 1.0);
        assert_eq!(direction_score(Some(2), None, 1.0), 1.0);
    }

    #[test]
    fn replay_score_examples() {
        assert_eq!(replay_score(Some(5), Some(5), 2.0), 0.0);
        assert!((replay_score(Some(3), Some(2), 2.0) - 0.964_027_580_075_817).abs() < 1e-12);
        assert!(replay_score(Some(3), Some(2), 1e6) > 1.0 - 1e-12);
        assert_eq!(replay_score(None, Some(2), 2.0), 0.0);
        assert_eq!(
            replay_score(Some(1), Some(4), 0.7),
            -replay_score(Some(4), Some(1), 0.7)
        );
    }

    proptest! {
        #[test]
        fn direction_argmax_is_lambda_free(
            here in 0u32..20,
            cands in prop::collection::vec(0u32..20, 1..5),
        ) {
            let argmax = |lambda: f64| {
                let scores: Vec<f64> = cands
                    .iter()
                    .map(|&c| direction_score(Some(here), Some(c), lambda))
                    .collect();
                // first index of the maximum
                let best = scores.iter().cloned().fold(f64::MIN, f64::max);
                scores.iter().position(|&x| x == best).unwrap()
            };
            let a = argmax(0.1);
            prop_assert_eq!(a, argmax(1.0));
            prop_assert_eq!(a, argmax(10.0));
        }

        #[test]
        fn replay_score_odd_and_bounded(a in 0u32..50, b in 0u32..50, alpha in 0.01f64..5.0) {
            let x = replay_score(Some(a), Some(b), alpha);
            prop_assert!((x + replay_score(Some(b), Some(a), alpha)).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }
}
