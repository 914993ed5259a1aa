//! Learning-dynamics recorders and the analyses built on them: per-state
//! spread traces, the activation time t*, greedy-policy stability, frontier
//! transitions and state-sampling weights.

use crate::c51::{QTable, SigmaReduction};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridSpec, State};
use crate::structure::{DistanceField, TransitionGraph};

/// Increments at or below this are treated as "no change".
const INCREMENT_TOL: f64 = 1e-12;

/// One per-state spread map per completed episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SigmaTrace {
    snapshots: Vec<(usize, Vec<f64>)>,
}

impl SigmaTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a trace from raw snapshots, checking episode order and coverage.
    pub fn from_snapshots(snapshots: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        let mut trace = Self::new();
        for (episode, sigma) in snapshots {
            trace.push(episode, sigma)?;
        }
        Ok(trace)
    }

    fn push(&mut self, episode: usize, sigma: Vec<f64>) -> Result<()> {
        if let Some((last, prev)) = self.snapshots.last() {
            if episode <= *last {
                return Err(Error::NonMonotoneEpisode {
                    episode,
                    last: *last,
                });
            }
            if prev.len() != sigma.len() {
                return Err(Error::Config(format!(
                    "snapshot covers {} states, previous covered {}",
                    sigma.len(),
                    prev.len()
                )));
            }
        }
        self.snapshots.push((episode, sigma));
        Ok(())
    }

    /// Appends the spread of every state's return distribution.
    pub fn record_snapshot(
        &mut self,
        episode: usize,
        table: &QTable,
        spec: &GridSpec,
        reduction: SigmaReduction,
    ) -> Result<()> {
        let sigma = spec
            .all_states()
            .into_iter()
            .map(|s| table.sigma(s, reduction))
            .collect();
        self.push(episode, sigma)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[(usize, Vec<f64>)] {
        &self.snapshots
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.snapshots.last().map(|(_, s)| s.as_slice())
    }

    /// The first `n` snapshots.
    pub fn truncated(&self, n: usize) -> SigmaTrace {
        SigmaTrace {
            snapshots: self.snapshots[..n.min(self.len())].to_vec(),
        }
    }

    pub fn series(&self, state_index: usize) -> Vec<f64> {
        self.snapshots.iter().map(|(_, s)| s[state_index]).collect()
    }
}

/// Episode of strongest spread increase per state; `None` when the state never
/// showed a positive increment.
#[derive(Debug, Clone, PartialEq)]
pub struct TStarField {
    values: Vec<Option<usize>>,
}

impl TStarField {
    pub fn from_values(values: Vec<Option<usize>>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    pub fn get(&self, state_index: usize) -> Option<usize> {
        self.values[state_index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min_finite(&self) -> Option<usize> {
        self.values.iter().flatten().copied().min()
    }
}

/// Centered moving average with edge truncation. A window of 1 is the identity.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    if window == 1 {
        return series.to_vec();
    }
    let left = (window - 1) / 2;
    let right = window - 1 - left;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(series.len() - 1);
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Position of the largest positive one-step increment; earliest on ties.
pub fn strongest_increase(series: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, w) in series.windows(2).enumerate() {
        let inc = w[1] - w[0];
        if inc <= INCREMENT_TOL {
            continue;
        }
        match best {
            Some((_, b)) if inc <= b + INCREMENT_TOL * (1.0 + b.abs()) => {}
            _ => best = Some((t, inc)),
        }
    }
    best.map(|(t, _)| t)
}

/// t*(s): the episode at which the (optionally smoothed) spread series makes
/// its largest positive jump to the next snapshot.
pub fn t_star(trace: &SigmaTrace, smoothing_window: usize) -> Result<TStarField> {
    if trace.len() < 2 {
        return Err(Error::TooFewSnapshots(trace.len()));
    }
    let n_states = trace.snapshots[0].1.len();
    let values = (0..n_states)
        .map(|i| {
            let series = smooth(&trace.series(i), smoothing_window);
            strongest_increase(&series).map(|t| trace.snapshots[t].0)
        })
        .collect();
    Ok(TStarField { values })
}

/// Greedy action of every state, logged once per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrace {
    greedy_log: Vec<(usize, Vec<Action>)>,
    window: usize,
}

impl StabilityTrace {
    pub fn new(window: usize) -> Self {
        Self {
            greedy_log: Vec::new(),
            window: window.max(1),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.greedy_log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.greedy_log.is_empty()
    }

    pub fn push(&mut self, episode: usize, actions: Vec<Action>) -> Result<()> {
        if let Some((last, _)) = self.greedy_log.last() {
            if episode <= *last {
                return Err(Error::NonMonotoneEpisode {
                    episode,
                    last: *last,
                });
            }
        }
        self.greedy_log.push((episode, actions));
        Ok(())
    }

    pub fn record(&mut self, episode: usize, table: &QTable, spec: &GridSpec) -> Result<()> {
        let actions = spec
            .all_states()
            .into_iter()
            .map(|s| table.greedy_action(s))
            .collect();
        self.push(episode, actions)
    }
}

/// Number of greedy-action changes per state within the last `window` log
/// entries. A shorter log is counted in full.
pub fn stability_counts(trace: &StabilityTrace) -> Vec<usize> {
    let Some((_, first)) = trace.greedy_log.first() else {
        return Vec::new();
    };
    let start = trace.greedy_log.len().saturating_sub(trace.window);
    let tail = &trace.greedy_log[start..];
    (0..first.len())
        .map(|i| tail.windows(2).filter(|w| w[0].1[i] != w[1].1[i]).count())
        .collect()
}

/// Observed edges whose endpoints were activated at nearly the same time and
/// which move strictly closer to the seed set.
pub fn frontier_transitions(
    spec: &GridSpec,
    tstar: &TStarField,
    field: &DistanceField,
    tau: usize,
    graph: &TransitionGraph,
) -> Vec<(State, State)> {
    graph
        .edges()
        .filter(|&(s, s2)| {
            let (i, j) = (spec.index(s), spec.index(s2));
            match (tstar.get(i), tstar.get(j), field.get(i), field.get(j)) {
                (Some(a), Some(b), Some(ds), Some(ds2)) => a.abs_diff(b) <= tau && ds2 < ds,
                _ => false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    Uniform,
    Sigma,
    TStar,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 3] = [
        SamplingStrategy::Uniform,
        SamplingStrategy::Sigma,
        SamplingStrategy::TStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplingStrategy::Uniform => "uniform",
            SamplingStrategy::Sigma => "sigma",
            SamplingStrategy::TStar => "tstar",
        }
    }
}

/// Normalized per-state sampling weights.
///
/// `Sigma` weights are proportional to `sigma + floor`. `TStar` weights use an
/// exponential kernel `exp(-|t* - current_episode| / tau_kernel)` plus the
/// floor, and states that never activated get the floor alone.
pub fn sampling_weights(
    strategy: SamplingStrategy,
    sigma: &[f64],
    tstar: &TStarField,
    current_episode: usize,
    tau_kernel: f64,
    floor: f64,
) -> Vec<f64> {
    let floor = floor.max(f64::MIN_POSITIVE);
    let raw: Vec<f64> = match strategy {
        SamplingStrategy::Uniform => vec![1.0; sigma.len()],
        SamplingStrategy::Sigma => sigma.iter().map(|s| s.max(0.0) + floor).collect(),
        SamplingStrategy::TStar => tstar
            .values()
            .iter()
            .map(|t| match t {
                Some(t) => {
                    let gap = t.abs_diff(current_episode) as f64;
                    (-gap / tau_kernel).exp() + floor
                }
                None => floor,
            })
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::distribution::Support;
    use crate::structure::DistanceField;

    fn trace_of(series: &[f64]) -> SigmaTrace {
        SigmaTrace::from_snapshots(
            series
                .iter()
                .enumerate()
                .map(|(t, &v)| (t, vec![v]))
                .collect(),
        )
        .unwrap()
    }

    fn tstar_of(series: &[f64], window: usize) -> Option<usize> {
        t_star(&trace_of(series), window).unwrap().get(0)
    }

    #[test]
    fn t_star_examples() {
        assert_eq!(tstar_of(&[0.0, 0.0, 0.0, 0.0], 1), None);
        assert_eq!(tstar_of(&[0.0, 0.0, 5.0, 5.1], 1), Some(1));
        assert_eq!(tstar_of(&[0.0, 2.0, 0.0, 2.0], 1), Some(0));
        assert_eq!(tstar_of(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], 1), Some(3));
    }

    #[test]
    fn t_star_reports_episode_numbers() {
        let trace =
            SigmaTrace::from_snapshots(vec![(4, vec![1.0]), (9, vec![1.0]), (12, vec![3.0])])
                .unwrap();
        assert_eq!(t_star(&trace, 1).unwrap().get(0), Some(9));
    }

    #[test]
    fn t_star_needs_two_snapshots() {
        assert!(matches!(
            t_star(&trace_of(&[1.0]), 1),
            Err(Error::TooFewSnapshots(1))
        ));
    }

    #[test]
    fn snapshots_must_advance() {
        let mut t = SigmaTrace::new();
        t.push(3, vec![0.0]).unwrap();
        assert!(t.push(3, vec![0.0]).is_err());
    }

    #[test]
    fn smoothing_window() {
        assert_eq!(smooth(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(smooth(&[0.0, 3.0, 0.0, 3.0], 3), vec![1.5, 1.0, 2.0, 1.5]);
    }

    #[test]
    fn snapshot_of_uniform_and_one_hot_tables() {
        let spec = GridSpec::default_10x10();
        let sup = Support::new(-100.0, 0.0, 51).unwrap();
        let mut table = QTable::new(&spec, sup.clone(), 1.0);
        let mut trace = SigmaTrace::new();
        trace
            .record_snapshot(0, &table, &spec, SigmaReduction::Greedy)
            .unwrap();
        let base = trace.last().unwrap()[0];
        assert!(trace.last().unwrap().iter().all(|&s| s == base));

        // one terminal update next to the goal only moves that state's spread
        let tr = spec.step(State::new(1, 0), Action::Left).unwrap();
        table.update(&tr, 0.3);
        trace
            .record_snapshot(1, &table, &spec, SigmaReduction::Greedy)
            .unwrap();
        let snap = trace.last().unwrap();
        let moved: Vec<usize> = (0..snap.len()).filter(|&i| snap[i] != base).collect();
        assert_eq!(moved, vec![spec.index(State::new(1, 0))]);
        // the target is -1 projected onto atoms {-2, 0}: mean -1, second moment 2
        let p: f64 = 0.3;
        let mean = -(1.0 - p) * 50.0 - p;
        let uniform_second = 4.0 * (51.0 * 51.0 - 1.0) / 12.0 + 2500.0;
        let second = (1.0 - p) * uniform_second + p * 2.0;
        let expected = (second - mean * mean).sqrt();
        assert!((snap[moved[0]] - expected).abs() < 1e-9, "{}", snap[moved[0]]);
        assert!(snap[moved[0]] > base);

        let mut hot = QTable::new(&spec, sup, 1.0);
        for s in spec.all_states() {
            for a in Action::ALL {
                hot.set_dist(s, a, crate::distribution::CategoricalDist::one_hot(51, 7));
            }
        }
        let mut t2 = SigmaTrace::new();
        t2.record_snapshot(0, &hot, &spec, SigmaReduction::Greedy)
            .unwrap();
        assert!(t2.last().unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stability_examples() {
        use Action::*;
        let log = |acts: &[Action], window: usize| {
            let mut t = StabilityTrace::new(window);
            for (e, a) in acts.iter().enumerate() {
                t.push(e, vec![*a]).unwrap();
            }
            stability_counts(&t)[0]
        };
        assert_eq!(log(&[Up, Up, Up, Up, Up], 5), 0);
        assert_eq!(log(&[Up, Down, Up, Down, Up], 5), 4);
        assert_eq!(log(&[Left, Left, Right, Right, Right], 4), 1);
        assert_eq!(log(&[Left, Right, Right, Right, Right], 3), 0);
    }

    #[test]
    fn frontier_examples() {
        let spec = GridSpec::new(2, 1, State::new(0, 0), -1.0, 3).unwrap();
        let a = State::new(1, 0);
        let g = spec.goal();
        let mut graph = TransitionGraph::new(&spec);
        graph.insert(a, g);
        let field = DistanceField::from_values(vec![Some(0), Some(1)]);
        let same = TStarField::from_values(vec![Some(1), Some(1)]);
        assert_eq!(
            frontier_transitions(&spec, &same, &field, 0, &graph),
            vec![(a, g)]
        );
        let distinct = TStarField::from_values(vec![Some(1), Some(2)]);
        assert!(frontier_transitions(&spec, &distinct, &field, 0, &graph).is_empty());
        assert_eq!(
            frontier_transitions(&spec, &distinct, &field, 1, &graph).len(),
            1
        );
    }

    #[test]
    fn sampling_weight_examples() {
        let none = TStarField::from_values(vec![None; 100]);
        let w = sampling_weights(SamplingStrategy::Uniform, &[1.0; 100], &none, 0, 5.0, 1e-3);
        assert!(w.iter().all(|&x| (x - 0.01).abs() < 1e-15));
        let w = sampling_weights(SamplingStrategy::Sigma, &[4.2; 100], &none, 0, 5.0, 1e-3);
        assert!(w.iter().all(|&x| (x - 0.01).abs() < 1e-15));

        let ts = TStarField::from_values(vec![Some(2), Some(7), None, Some(12)]);
        let w = sampling_weights(SamplingStrategy::TStar, &[0.0; 4], &ts, 7, 5.0, 1e-3);
        let top = (0..4).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert_eq!(top, 1);
        assert!(w[2] > 0.0 && w[2] < w[0]);
    }

    proptest! {
        #[test]
        fn t_star_ignores_constant_offset(
            series in prop::collection::vec(0.0f64..50.0, 2..40),
            offset in -100.0f64..100.0,
            window in 1usize..5,
        ) {
            let shifted: Vec<f64> = series.iter().map(|v| v + offset).collect();
            prop_assert_eq!(tstar_of(&series, window), tstar_of(&shifted, window));
        }

        #[test]
        fn t_star_is_earliest_maximizer(
            series in prop::collection::vec(0u8..6, 2..30),
        ) {
            let series: Vec<f64> = series.into_iter().map(f64::from).collect();
            let incs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
            let best = incs.iter().cloned().fold(0.0f64, f64::max);
            let expected = if best > 0.0 {
                incs.iter().position(|&x| x == best)
            } else {
                None
            };
            prop_assert_eq!(tstar_of(&series, 1), expected);
        }

        #[test]
        fn sampling_weights_are_positive_and_normalized(
            sigma in prop::collection::vec(0.0f64..40.0, 1..60),
            seed_t in prop::collection::vec(prop::option::of(0usize..300), 60),
            current in 0usize..300,
            strategy in 0usize..3,
        ) {
            let ts = TStarField::from_values(seed_t[..sigma.len()].to_vec());
            let w = sampling_weights(SamplingStrategy::ALL[strategy], &sigma, &ts, current, 5.0, 1e-3);
            prop_assert!(w.iter().all(|x| x.is_finite() && *x > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
