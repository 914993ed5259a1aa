//! Deterministic 4-connected gridworld with a shortest-path oracle.
//!
//! Moves that would leave the grid clamp in place. Every transition pays the
//! same `step_reward`, and reaching the goal ends the episode, so the optimal
//! undiscounted value of a state is `step_reward * true_distance(state)`.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub x: usize,
    pub y: usize,
}

impl State {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// The four moves. Declaration order is the tie-breaking order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "U",
            Action::Down => "D",
            Action::Left => "L",
            Action::Right => "R",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    width: usize,
    height: usize,
    goal: State,
    step_reward: f64,
    max_steps: usize,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        goal: State,
        step_reward: f64,
        max_steps: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "grid must be non-empty, got {width}x{height}"
            )));
        }
        if goal.x >= width || goal.y >= height {
            return Err(Error::Config(format!(
                "goal {goal} outside {width}x{height} grid"
            )));
        }
        if max_steps < width + height {
            return Err(Error::Config(format!(
                "max_steps {max_steps} must be at least width + height = {}",
                width + height
            )));
        }
        if !step_reward.is_finite() {
            return Err(Error::Config("step_reward must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            goal,
            step_reward,
            max_steps,
        })
    }

    /// 10x10, goal in the upper-left corner, reward -1 per step, cap 100.
    pub fn default_10x10() -> Self {
        Self::new(10, 10, State::new(0, 0), -1.0, 100).expect("valid default grid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goal(&self) -> State {
        self.goal
    }

    pub fn step_reward(&self) -> f64 {
        self.step_reward
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, s: State) -> bool {
        s.x < self.width && s.y < self.height
    }

    /// Row-major index of a state.
    pub fn index(&self, s: State) -> usize {
        debug_assert!(self.contains(s), "{s} outside grid");
        s.y * self.width + s.x
    }

    pub fn state_at(&self, index: usize) -> State {
        State::new(index % self.width, index / self.width)
    }

    /// All states in row-major order.
    pub fn all_states(&self) -> Vec<State> {
        (0..self.n_states()).map(|i| self.state_at(i)).collect()
    }

    pub fn is_goal(&self, s: State) -> bool {
        s == self.goal
    }

    /// Position reached by moving from `s` in direction `a`, ignoring the goal.
    pub fn successor(&self, s: State, a: Action) -> State {
        let (dx, dy) = a.offset();
        let nx = s.x as isize + dx;
        let ny = s.y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            s
        } else {
            State::new(nx as usize, ny as usize)
        }
    }

    pub fn step(&self, s: State, a: Action) -> Result<Transition> {
        if !self.contains(s) {
            return Err(Error::OutOfBounds(s));
        }
        if self.is_goal(s) {
            return Err(Error::StepFromTerminal(s));
        }
        let next_state = self.successor(s, a);
        Ok(Transition {
            state: s,
            action: a,
            reward: self.step_reward,
            next_state,
            terminal: self.is_goal(next_state),
        })
    }

    /// Shortest-path step counts to the goal for every state (row-major).
    pub fn true_distances(&self) -> Vec<u32> {
        let n = self.n_states();
        let mut dist = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        dist[self.index(self.goal)] = 0;
        queue.push_back(self.goal);
        // Moves are reversible on an open grid, so searching outward from the
        // goal over forward moves gives distances toward it.
        while let Some(s) = queue.pop_front() {
            let ds = dist[self.index(s)];
            for a in Action::ALL {
                let n = self.successor(s, a);
                let slot = &mut dist[self.index(n)];
                if *slot == u32::MAX {
                    *slot = ds + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn true_distance(&self, s: State) -> u32 {
        self.true_distances()[self.index(s)]
    }
}
