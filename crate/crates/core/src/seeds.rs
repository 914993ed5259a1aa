//! Seed-set selection from a short exploration phase.
//!
//! Three selectors are available: earliest activation filtered by policy
//! stability, origins of goal-reaching transitions, and positive one-step
//! Bellman improvement. The hybrid tries them in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::c51::QTable;
use crate::dynamics::TStarField;
use crate::error::{Error, Result};
use crate::gridworld::{GridSpec, State, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStrategy {
    TStar,
    Reward,
    Bellman,
    Hybrid,
}

impl SeedStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SeedStrategy::TStar => "tstar",
            SeedStrategy::Reward => "reward",
            SeedStrategy::Bellman => "bellman",
            SeedStrategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for SeedStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeedStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tstar" => Ok(SeedStrategy::TStar),
            "reward" => Ok(SeedStrategy::Reward),
            "bellman" => Ok(SeedStrategy::Bellman),
            "hybrid" => Ok(SeedStrategy::Hybrid),
            other => Err(Error::Config(format!(
                "unknown seed strategy {other:?} (expected tstar, reward, bellman or hybrid)"
            ))),
        }
    }
}

/// A non-empty seed set tagged with the selector that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    states: Vec<State>,
    strategy: SeedStrategy,
    k: usize,
}

impl SeedSet {
    pub fn new(states: Vec<State>, strategy: SeedStrategy, k: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::SeedSelection {
                strategy: strategy.name(),
                reason: "empty seed set".into(),
            });
        }
        Ok(Self {
            states,
            strategy,
            k,
        })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn strategy(&self) -> SeedStrategy {
        self.strategy
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contains(&self, s: State) -> bool {
        self.states.contains(&s)
    }
}

fn row_major(s: State) -> (usize, usize) {
    (s.y, s.x)
}

fn failure(strategy: SeedStrategy, reason: impl Into<String>) -> Error {
    Error::SeedSelection {
        strategy: strategy.name(),
        reason: reason.into(),
    }
}

/// The `k` earliest-activated states among those whose greedy action changed at
/// most `max_changes` times. The change limit is relaxed one step at a time
/// until `k` candidates qualify or no further relaxation can help.
pub fn seeds_from_tstar(
    spec: &GridSpec,
    tstar: &TStarField,
    stability: &[usize],
    k: usize,
    max_changes: usize,
) -> Result<SeedSet> {
    let k = k.max(1);
    let active: Vec<usize> = (0..tstar.len())
        .filter(|&i| tstar.get(i).is_some())
        .collect();
    if active.is_empty() {
        return Err(failure(
            SeedStrategy::TStar,
            "no state showed a positive spread increase",
        ));
    }
    let loosest = active.iter().map(|&i| stability[i]).max().unwrap_or(0);
    let mut limit = max_changes;
    let mut candidates: Vec<usize> = loop {
        let c: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| stability[i] <= limit)
            .collect();
        if c.len() >= k || limit >= loosest {
            break c;
        }
        limit += 1;
    };
    candidates.sort_by_key(|&i| (tstar.get(i), i));
    candidates.truncate(k);
    let states = candidates.into_iter().map(|i| spec.state_at(i)).collect();
    SeedSet::new(states, SeedStrategy::TStar, k)
}

/// Origins of observed goal-reaching transitions, most frequent first.
pub fn seeds_from_reward(buffer: &[Transition], k: usize) -> Result<SeedSet> {
    let k = k.max(1);
    let mut counts: BTreeMap<(usize, usize), (State, usize)> = BTreeMap::new();
    for t in buffer.iter().filter(|t| t.terminal) {
        counts.entry(row_major(t.state)).or_insert((t.state, 0)).1 += 1;
    }
    if counts.is_empty() {
        return Err(failure(
            SeedStrategy::Reward,
            "the goal was never reached during exploration",
        ));
    }
    let mut ranked: Vec<(State, usize)> = counts.into_values().collect();
    // stable sort keeps row-major order among equal counts
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let states = ranked.into_iter().take(k).map(|(s, _)| s).collect();
    SeedSet::new(states, SeedStrategy::Reward, k)
}

/// Per-state best one-step improvement `r + gamma * V(s') - V(s)` over the
/// observed transitions, with `V` the greedy expected return and a terminal
/// successor worth zero.
pub fn bellman_improvement(table: &QTable, buffer: &[Transition]) -> BTreeMap<(usize, usize), (State, f64)> {
    let mut best: BTreeMap<(usize, usize), (State, f64)> = BTreeMap::new();
    for t in buffer {
        let next_value = if t.terminal {
            0.0
        } else {
            table.state_value(t.next_state)
        };
        let delta = t.reward + table.gamma() * next_value - table.state_value(t.state);
        let slot = best
            .entry(row_major(t.state))
            .or_insert((t.state, f64::NEG_INFINITY));
        slot.1 = slot.1.max(delta);
    }
    best
}

/// The `k` states with the largest improvement above `tol`.
pub fn seeds_from_bellman(
    table: &QTable,
    buffer: &[Transition],
    k: usize,
    tol: f64,
) -> Result<SeedSet> {
    let k = k.max(1);
    let mut ranked: Vec<(State, f64)> = bellman_improvement(table, buffer)
        .into_values()
        .filter(|(_, d)| *d > tol)
        .collect();
    if ranked.is_empty() {
        return Err(failure(
            SeedStrategy::Bellman,
            "no observed transition shows positive Bellman improvement",
        ));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let states = ranked.into_iter().take(k).map(|(s, _)| s).collect();
    SeedSet::new(states, SeedStrategy::Bellman, k)
}

/// First successful attempt in priority order.
pub fn seeds_hybrid(attempts: Vec<Result<SeedSet>>) -> Result<SeedSet> {
    let mut reasons = Vec::new();
    for attempt in attempts {
        match attempt {
            Ok(set) => return Ok(set),
            Err(e) => reasons.push(e.to_string()),
        }
    }
    Err(Error::AllSeedStrategiesFailed(reasons.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Support;
    use crate::gridworld::Action;

    fn spec() -> GridSpec {
        GridSpec::default_10x10()
    }

    #[test]
    fn tstar_with_no_activation_fails() {
        let ts = TStarField::from_values(vec![None; 100]);
        assert!(seeds_from_tstar(&spec(), &ts, &[0; 100], 5, 1).is_err());
    }

    #[test]
    fn tstar_takes_the_only_qualifiers() {
        let g = spec();
        let mut vals = vec![None; 100];
        let picks = [3usize, 40, 77];
        for (n, &i) in picks.iter().enumerate() {
            vals[i] = Some(20 - n);
        }
        let ts = TStarField::from_values(vals);
        let set = seeds_from_tstar(&g, &ts, &[0; 100], 3, 1).unwrap();
        let mut got: Vec<usize> = set.states().iter().map(|&s| g.index(s)).collect();
        got.sort();
        assert_eq!(got, picks);
        assert_eq!(set.strategy(), SeedStrategy::TStar);
    }

    #[test]
    fn tstar_prefers_early_and_stable_then_relaxes() {
        let g = spec();
        let mut vals = vec![None; 100];
        vals[1] = Some(0);
        vals[2] = Some(1);
        vals[10] = Some(2);
        vals[11] = Some(3);
        let ts = TStarField::from_values(vals);
        let mut stab = vec![0; 100];
        stab[1] = 4; // earliest but unstable
        let set = seeds_from_tstar(&g, &ts, &stab, 2, 1).unwrap();
        assert_eq!(set.states(), &[g.state_at(2), g.state_at(10)]);
        // asking for four forces the unstable state back in
        let set = seeds_from_tstar(&g, &ts, &stab, 4, 1).unwrap();
        assert_eq!(set.states().len(), 4);
        assert_eq!(set.states()[0], g.state_at(1));
        // ties on t* resolve in row-major order
        let ts = TStarField::from_values((0..100).map(|_| Some(5)).collect());
        let set = seeds_from_tstar(&g, &ts, &[0; 100], 2, 1).unwrap();
        assert_eq!(set.states(), &[g.state_at(0), g.state_at(1)]);
    }

    #[test]
    fn reward_examples() {
        let g = spec();
        let t = g.step(State::new(1, 0), Action::Left).unwrap();
        let other = g.step(State::new(5, 5), Action::Up).unwrap();
        let set = seeds_from_reward(&[other, t, other], 5).unwrap();
        assert_eq!(set.states(), &[State::new(1, 0)]);
        assert!(seeds_from_reward(&[other], 5).is_err());

        let up = g.step(State::new(0, 1), Action::Up).unwrap();
        let set = seeds_from_reward(&[t, up, up], 1).unwrap();
        assert_eq!(set.states(), &[State::new(0, 1)]);
    }

    #[test]
    fn bellman_on_fresh_table() {
        let g = spec();
        let table = QTable::new(&g, Support::new(-100.0, 0.0, 51).unwrap(), 1.0);
        let t = g.step(State::new(5, 5), Action::Up).unwrap();
        let delta = bellman_improvement(&table, &[t]);
        let (_, d) = delta.values().next().unwrap();
        assert!((d + 1.0).abs() < 1e-12);
        assert!(seeds_from_bellman(&table, &[t], 3, 1e-6).is_err());
    }

    #[test]
    fn bellman_after_one_terminal_update() {
        let g = spec();
        let mut table = QTable::new(&g, Support::new(-100.0, 0.0, 51).unwrap(), 1.0);
        let into_goal = g.step(State::new(1, 0), Action::Left).unwrap();
        table.update(&into_goal, 1.0);
        // (1,0) now has V = -1; (2,0) and (1,1) still sit at -50
        let from_right = g.step(State::new(2, 0), Action::Left).unwrap();
        let from_below = g.step(State::new(1, 1), Action::Up).unwrap();
        let far = g.step(State::new(7, 7), Action::Up).unwrap();
        let buffer = [into_goal, from_right, from_below, far];
        let delta = bellman_improvement(&table, &buffer);
        let get = |s: State| delta[&(s.y, s.x)].1;
        assert!((get(State::new(2, 0)) - 48.0).abs() < 1e-9);
        assert!((get(State::new(1, 1)) - 48.0).abs() < 1e-9);
        assert!(get(State::new(1, 0)).abs() < 1e-9);
        let set = seeds_from_bellman(&table, &buffer, 5, 1e-6).unwrap();
        assert_eq!(set.states(), &[State::new(2, 0), State::new(1, 1)]);
    }

    #[test]
    fn bellman_on_converged_table_fails() {
        let g = spec();
        let mut table = QTable::new(&g, Support::new(-100.0, 0.0, 51).unwrap(), 1.0);
        table.sweep_to_fixed_point(&g, 1.0, 0.0, 500);
        let buffer = crate::c51::all_transitions(&g);
        assert!(matches!(
            seeds_from_bellman(&table, &buffer, 5, 1e-6),
            Err(Error::SeedSelection { .. })
        ));
    }

    #[test]
    fn hybrid_priority() {
        let a = SeedSet::new(vec![State::new(1, 0)], SeedStrategy::TStar, 1).unwrap();
        let b = SeedSet::new(vec![State::new(0, 1)], SeedStrategy::Reward, 1).unwrap();
        let fail = || failure(SeedStrategy::TStar, "x");
        assert_eq!(
            seeds_hybrid(vec![Ok(a), Ok(b.clone())]).unwrap().strategy(),
            SeedStrategy::TStar
        );
        assert_eq!(
            seeds_hybrid(vec![Err(fail()), Ok(b)]).unwrap().strategy(),
            SeedStrategy::Reward
        );
        assert!(matches!(
            seeds_hybrid(vec![Err(fail()), Err(fail()), Err(fail())]),
            Err(Error::AllSeedStrategiesFailed(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            SeedStrategy::TStar,
            SeedStrategy::Reward,
            SeedStrategy::Bellman,
            SeedStrategy::Hybrid,
        ] {
            assert_eq!(s.name().parse::<SeedStrategy>().unwrap(), s);
        }
        assert!("random".parse::<SeedStrategy>().is_err());
    }
}
