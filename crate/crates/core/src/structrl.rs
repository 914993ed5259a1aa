//! Structure-guided control: distance-biased action sampling and
//! distance-biased replay over a FIFO transition buffer.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gridworld::{Action, GridSpec, State, Transition};
use crate::structure::{direction_score, replay_score, DistanceField};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    entries: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    pub fn to_vec(&self) -> Vec<Transition> {
        self.entries.iter().copied().collect()
    }

    /// Uniform sampling with replacement.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch_size)
            .map(|_| self.entries[rng.random_range(0..self.entries.len())])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructPolicyParams {
    /// Strength of the exploration bias.
    pub lambda: f64,
    /// Sharpness of the replay preference.
    pub alpha: f64,
    pub epsilon: f64,
    /// Minimum replay weight, in (0, 1).
    pub weight_floor: f64,
}

impl Default for StructPolicyParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            epsilon: 0.1,
            weight_floor: 0.05,
        }
    }
}

/// Exploit-branch probabilities: each action's successor is simulated and
/// scored by how much it lowers the distance to the seeds.
pub fn action_probabilities(
    spec: &GridSpec,
    s: State,
    field: &DistanceField,
    lambda: f64,
) -> [f64; Action::COUNT] {
    let here = field.get(spec.index(s));
    let mut scores = Action::ALL.map(|a| {
        let next = spec.successor(s, a);
        direction_score(here, field.get(spec.index(next)), lambda)
    });
    let total: f64 = scores.iter().sum();
    scores.iter_mut().for_each(|x| *x /= total);
    scores
}

/// With probability epsilon a uniform action, otherwise an action sampled in
/// proportion to its direction score.
pub fn select_action<R: Rng + ?Sized>(
    spec: &GridSpec,
    s: State,
    field: &DistanceField,
    params: &StructPolicyParams,
    rng: &mut R,
) -> Action {
    debug_assert!(!spec.is_goal(s), "no action from the goal");
    if rng.random::<f64>() < params.epsilon {
        return Action::from_index(rng.random_range(0..Action::COUNT));
    }
    let probs = action_probabilities(spec, s, field, params.lambda);
    let dist = WeightedIndex::new(probs).expect("direction scores are positive and finite");
    Action::from_index(dist.sample(rng))
}

/// Replay weight of one transition: an affine map of the tanh score onto
/// `[weight_floor, 1]`.
pub fn replay_weight(
    spec: &GridSpec,
    t: &Transition,
    field: &DistanceField,
    params: &StructPolicyParams,
) -> f64 {
    let score = replay_score(
        field.get(spec.index(t.state)),
        field.get(spec.index(t.next_state)),
        params.alpha,
    );
    params.weight_floor + (1.0 - params.weight_floor) * (1.0 + score) / 2.0
}

pub fn replay_weights(
    spec: &GridSpec,
    buffer: &ReplayBuffer,
    field: &DistanceField,
    params: &StructPolicyParams,
) -> Vec<f64> {
    buffer
        .iter()
        .map(|t| replay_weight(spec, t, field, params))
        .collect()
}

/// Draws `batch_size` transitions with replacement, weighted by [`replay_weight`].
pub fn sample_batch<R: Rng + ?Sized>(
    spec: &GridSpec,
    buffer: &ReplayBuffer,
    field: &DistanceField,
    params: &StructPolicyParams,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let weights = replay_weights(spec, buffer, field, params);
    let dist = WeightedIndex::new(&weights).expect("replay weights are floored above zero");
    Ok((0..batch_size)
        .map(|_| buffer.entries[dist.sample(rng)])
        .collect())
}

/// Weighted replay over a FIFO ring, backed by a sum tree so that pushes and
/// draws cost `O(log capacity)`. Draws follow the same distribution as
/// [`sample_batch`].
#[derive(Debug, Clone)]
pub struct WeightedReplay {
    buffer: ReplayBuffer,
    // leaves start at `leaf_base`; leaf i holds the weight of ring slot i
    tree: Vec<f64>,
    leaf_base: usize,
    next_slot: usize,
}

impl WeightedReplay {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        let leaf_base = capacity.next_power_of_two();
        Self {
            buffer: ReplayBuffer::new(capacity),
            tree: vec![0.0; 2 * leaf_base],
            leaf_base,
            next_slot: 0,
        }
    }

    /// Seeds the sampler with an existing buffer's contents, oldest first.
    pub fn from_buffer(
        spec: &GridSpec,
        source: &ReplayBuffer,
        field: &DistanceField,
        params: &StructPolicyParams,
    ) -> Self {
        let mut w = Self::new(source.capacity());
        for t in source.iter() {
            w.push(*t, replay_weight(spec, t, field, params));
        }
        w
    }

    fn set_leaf(&mut self, slot: usize, weight: f64) {
        let mut i = self.leaf_base + slot;
        self.tree[i] = weight;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    pub fn push(&mut self, t: Transition, weight: f64) {
        self.buffer.push(t);
        let slot = self.next_slot;
        self.set_leaf(slot, weight);
        self.next_slot = (slot + 1) % self.buffer.capacity();
    }

    /// Ring slot of the `i`-th oldest entry.
    fn slot_of(&self, i: usize) -> usize {
        let len = self.buffer.len();
        let cap = self.buffer.capacity();
        (self.next_slot + cap - len + i) % cap
    }

    /// Recomputes every weight, e.g. after the distance field changed.
    pub fn reweight(&mut self, spec: &GridSpec, field: &DistanceField, params: &StructPolicyParams) {
        let weights = replay_weights(spec, &self.buffer, field, params);
        for (i, w) in weights.into_iter().enumerate() {
            let slot = self.slot_of(i);
            self.set_leaf(slot, w);
        }
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn total_weight(&self) -> f64 {
        self.tree[1]
    }

    /// Weight currently stored for the `i`-th oldest entry.
    pub fn weight(&self, i: usize) -> f64 {
        self.tree[self.leaf_base + self.slot_of(i)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let cap = self.buffer.capacity();
        let len = self.buffer.len();
        let oldest_slot = self.slot_of(0);
        Ok((0..batch_size)
            .map(|_| {
                let mut u = rng.random::<f64>() * self.total_weight();
                let mut i = 1;
                while i < self.leaf_base {
                    let left = self.tree[2 * i];
                    if u < left || self.tree[2 * i + 1] <= 0.0 {
                        i *= 2;
                    } else {
                        u -= left;
                        i = 2 * i + 1;
                    }
                }
                let slot = i - self.leaf_base;
                let age = (slot + cap - oldest_slot) % cap;
                debug_assert!(age < len);
                self.buffer.entries[age.min(len - 1)]
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn spec() -> GridSpec {
        GridSpec::default_10x10()
    }

    fn tr(s: (usize, usize), a: Action) -> Transition {
        spec().step(State::new(s.0, s.1), a).unwrap()
    }

    #[test]
    fn push_and_evict() {
        let mut b = ReplayBuffer::new(2);
        b.push(tr((1, 1), Action::Up));
        assert_eq!(b.len(), 1);
        b.push(tr((2, 2), Action::Up));
        b.push(tr((3, 3), Action::Up));
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0).unwrap().state, State::new(2, 2));

        let mut big = ReplayBuffer::new(10);
        let items: Vec<Transition> = (1..8).map(|x| tr((x, 0), Action::Down)).collect();
        items.iter().for_each(|t| big.push(*t));
        assert_eq!(big.to_vec(), items);
    }

    #[test]
    fn explore_everything_is_uniform() {
        let g = spec();
        let field = DistanceField::from_values((0..100).map(|i| Some(i as u32)).collect());
        let params = StructPolicyParams {
            epsilon: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&g, State::new(5, 5), &field, &params, &mut rng).index()] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn equal_distances_give_equal_probabilities() {
        let g = spec();
        let field = DistanceField::from_values(vec![Some(3); 100]);
        let p = action_probabilities(&g, State::new(5, 5), &field, 2.0);
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn favourable_action_probability() {
        let g = spec();
        let s = State::new(5, 5);
        let mut vals = vec![Some(10u32); 100];
        vals[g.index(s)] = Some(4);
        vals[g.index(State::new(4, 5))] = Some(3); // Left improves
        vals[g.index(State::new(6, 5))] = Some(5);
        vals[g.index(State::new(5, 4))] = Some(5);
        vals[g.index(State::new(5, 6))] = Some(5);
        let field = DistanceField::from_values(vals);
        let p = action_probabilities(&g, s, &field, 2.0);
        let e2 = 2.0f64.exp();
        let expected = e2 / (e2 + 3.0 / e2);
        assert!((p[Action::Left.index()] - expected).abs() < 1e-12);
        assert!((expected - 0.9479).abs() < 1e-4);
    }

    #[test]
    fn unreached_field_replays_uniformly() {
        let g = spec();
        let mut b = ReplayBuffer::new(10);
        b.push(tr((1, 1), Action::Up));
        b.push(tr((4, 4), Action::Left));
        let field = DistanceField::unreached(100);
        let w = replay_weights(&g, &b, &field, &StructPolicyParams::default());
        assert_eq!(w[0], w[1]);
    }

    #[test]
    fn replay_weight_ratio_at_saturation() {
        let g = spec();
        let mut vals = vec![None; 100];
        vals[g.index(State::new(2, 2))] = Some(4);
        vals[g.index(State::new(2, 1))] = Some(3);
        let field = DistanceField::from_values(vals);
        let params = StructPolicyParams {
            alpha: 50.0,
            weight_floor: 0.01,
            ..Default::default()
        };
        let toward = tr((2, 2), Action::Up);
        let away = tr((2, 1), Action::Down);
        let ratio = replay_weight(&g, &toward, &field, &params)
            / replay_weight(&g, &away, &field, &params);
        assert!((ratio - 100.0).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn sum_tree_tracks_buffer_weights() {
        let g = spec();
        let field = DistanceField::from_values((0..100).map(|i| Some(((i % 10) + (i / 10)) as u32)).collect());
        let params = StructPolicyParams::default();
        let mut w = WeightedReplay::new(5);
        let moves = [Action::Up, Action::Left, Action::Down, Action::Right];
        for k in 0..13 {
            let t = tr((1 + k % 8, 1 + k % 7), moves[k % 4]);
            w.push(t, replay_weight(&g, &t, &field, &params));
        }
        assert_eq!(w.buffer().len(), 5);
        let expected = replay_weights(&g, w.buffer(), &field, &params);
        for (i, e) in expected.iter().enumerate() {
            assert!((w.weight(i) - e).abs() < 1e-15);
        }
        assert!((w.total_weight() - expected.iter().sum::<f64>()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50_000;
        let batch = w.sample(n, &mut rng).unwrap();
        let total: f64 = expected.iter().sum();
        for (i, t) in w.buffer().iter().enumerate() {
            let hits = batch.iter().filter(|b| *b == t).count() as f64;
            let p = expected[i] / total;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((hits - n as f64 * p).abs() < 5.0 * sd, "entry {i}");
        }
    }

    #[test]
    fn single_entry_batch() {
        let g = spec();
        let mut b = ReplayBuffer::new(4);
        let t = tr((3, 3), Action::Right);
        b.push(t);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_batch(
            &g,
            &b,
            &DistanceField::unreached(100),
            &StructPolicyParams::default(),
            1,
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch, vec![t]);
        let empty = ReplayBuffer::new(4);
        assert!(sample_batch(
            &g,
            &empty,
            &DistanceField::unreached(100),
            &StructPolicyParams::default(),
            1,
            &mut rng
        )
        .is_err());
    }
}
