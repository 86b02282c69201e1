//! Gridworld benchmark generator.
//!
//! Cells are addressed `(x, y)` with `0..l` on each axis; the outer ring is
//! wall. Interior cell `(x, y)` becomes state `(y-1)(l-2) + (x-1)` and a single
//! absorbing state `B`, placed last, stands in for every wall cell.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Letter, Mdp, MdpBuilder, MdpError};

pub const ACTIONS: [&str; 4] = ["right", "left", "up", "down"];
const MOVES: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("side length must be at least 4, got {0}")]
    Side(usize),
    #[error("slip probability must lie in (0, 1], got {0}")]
    Slip(f64),
    #[error("cell ({0}, {1}) is not an interior cell")]
    NotInterior(usize, usize),
    #[error("initial and goal cell coincide")]
    InitIsGoal,
    #[error("cell ({0}, {1}) is both a wall and the initial or goal cell")]
    WallOnEndpoint(usize, usize),
    #[error(transparent)]
    Model(#[from] MdpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l: usize,
    /// probability that the intended move happens; otherwise the agent stays
    #[serde(default = "default_slip")]
    pub slip: f64,
    #[serde(default)]
    pub init: Option<(usize, usize)>,
    #[serde(default)]
    pub goal: Option<(usize, usize)>,
    /// interior cells that behave as walls
    #[serde(default)]
    pub walls: Vec<(usize, usize)>,
}

fn default_slip() -> f64 {
    0.9
}

impl GridSpec {
    /// Outer walls only, start bottom-left, goal top-right.
    pub fn new(l: usize) -> Self {
        GridSpec {
            l,
            slip: default_slip(),
            init: None,
            goal: None,
            walls: Vec::new(),
        }
    }

    pub fn with_slip(mut self, slip: f64) -> Self {
        self.slip = slip;
        self
    }

    pub fn init_cell(&self) -> (usize, usize) {
        self.init.unwrap_or((1, 1))
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal
            .unwrap_or((self.l.saturating_sub(2), self.l.saturating_sub(2)))
    }

    fn interior(&self, (x, y): (usize, usize)) -> bool {
        (1..self.l - 1).contains(&x) && (1..self.l - 1).contains(&y)
    }

    pub fn cell_index(&self, (x, y): (usize, usize)) -> usize {
        (y - 1) * (self.l - 2) + (x - 1)
    }

    pub fn n_states(&self) -> usize {
        (self.l - 2).pow(2) + 1
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.l < 4 {
            return Err(EnvError::Side(self.l));
        }
        if !(self.slip > 0.0 && self.slip <= 1.0) {
            return Err(EnvError::Slip(self.slip));
        }
        let (init, goal) = (self.init_cell(), self.goal_cell());
        for &c in [init, goal].iter().chain(&self.walls) {
            if !self.interior(c) {
                return Err(EnvError::NotInterior(c.0, c.1));
            }
        }
        if init == goal {
            return Err(EnvError::InitIsGoal);
        }
        if let Some(&(x, y)) = self.walls.iter().find(|&&c| c == init || c == goal) {
            return Err(EnvError::WallOnEndpoint(x, y));
        }
        Ok(())
    }
}

/// Builds the gridworld MDP with propositions `G` (goal cell) and `B`
/// (aggregate wall state plus interior wall cells).
pub fn gridworld(spec: &GridSpec) -> Result<Mdp, EnvError> {
    spec.validate()?;
    let side = spec.l - 2;
    let n = spec.n_states();
    let bad = n - 1;
    let walls: BTreeSet<(usize, usize)> = spec.walls.iter().copied().collect();
    let goal = spec.goal_cell();

    let mut names = Vec::with_capacity(n);
    for y in 1..=side {
        for x in 1..=side {
            names.push(format!("c{x}_{y}"));
        }
    }
    names.push("B".to_string());
    let mut b = MdpBuilder::with_names(names, ACTIONS.iter().map(|s| s.to_string()).collect());
    b.props(["G", "B"]);
    b.init(spec.cell_index(spec.init_cell()));
    b.label(bad, Letter::EMPTY.with(1));

    for y in 1..=side {
        for x in 1..=side {
            let s = spec.cell_index((x, y));
            if (x, y) == goal {
                b.label(s, Letter::EMPTY.with(0));
                for a in 0..4 {
                    b.set(s, a, s, 1.0);
                }
                continue;
            }
            if walls.contains(&(x, y)) {
                b.label(s, Letter::EMPTY.with(1));
                for a in 0..4 {
                    b.set(s, a, bad, 1.0);
                }
                continue;
            }
            for (a, (dx, dy)) in MOVES.iter().enumerate() {
                let (tx, ty) = (x as i64 + dx, y as i64 + dy);
                let open = (1..=side as i64).contains(&tx) && (1..=side as i64).contains(&ty);
                let target = if open && !walls.contains(&(tx as usize, ty as usize)) {
                    spec.cell_index((tx as usize, ty as usize))
                } else {
                    bad
                };
                let row = b.row_mut(s, a);
                row[target] += spec.slip;
                row[s] += 1.0 - spec.slip;
            }
        }
    }
    for a in 0..4 {
        b.set(bad, a, bad, 1.0);
    }
    Ok(b.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::exact_reach_prob;

    #[test]
    fn sizes() {
        let m = gridworld(&GridSpec::new(6)).unwrap();
        assert_eq!((m.n_states(), m.n_actions()), (17, 4));
        assert_eq!(gridworld(&GridSpec::new(4)).unwrap().n_states(), 5);
    }

    #[test]
    fn min_probability_and_row_shape() {
        let m = gridworld(&GridSpec::new(6)).unwrap();
        assert!((m.validate().unwrap().p_min - 0.1).abs() < 1e-12);
        let goal = m.states_with(0);
        let bad = m.states_with(1);
        for s in (0..m.n_states()).filter(|s| !goal.contains(s) && !bad.contains(s)) {
            for a in 0..4 {
                let row = m.row(s, a);
                let support: Vec<usize> = (0..row.len()).filter(|&t| row[t] > 0.0).collect();
                assert_eq!(support.len(), 2);
                assert!((row[s] - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn labels_and_corners() {
        let spec = GridSpec::new(6);
        let m = gridworld(&spec).unwrap();
        assert_eq!(m.init(), 0);
        assert_eq!(m.states_with(0), [15].into());
        assert_eq!(m.states_with(1), [16].into());
        // moving left from the start hits the wall
        assert!((m.prob(0, 1, 16) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn deterministic_walk_length() {
        for l in 4..9 {
            let spec = GridSpec::new(l).with_slip(1.0);
            let m = gridworld(&spec).unwrap();
            let goal = m.states_with(0);
            let bad = m.states_with(1);
            let sol = exact_reach_prob(&m, &goal, &bad).unwrap();
            assert_eq!(sol.values[m.init()], 1.0);
            let mut s = m.init();
            let mut visited = vec![s];
            while !goal.contains(&s) {
                let a = sol.policy.action(s);
                s = (0..m.n_states()).find(|&t| m.prob(s, a, t) == 1.0).unwrap();
                visited.push(s);
                assert!(visited.len() <= m.n_states());
            }
            assert_eq!(visited.len(), 2 * (l - 3) + 1);
        }
    }

    #[test]
    fn interior_walls_route_to_bad() {
        let mut spec = GridSpec::new(6);
        spec.walls = vec![(2, 2)];
        let m = gridworld(&spec).unwrap();
        assert_eq!(m.n_states(), 17);
        let w = spec.cell_index((2, 2));
        assert!(m.label(w).contains(1));
        assert_eq!(m.prob(w, 0, 16), 1.0);
        assert!((m.prob(spec.cell_index((1, 2)), 0, 16) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(gridworld(&GridSpec::new(3)), Err(EnvError::Side(3)));
        assert_eq!(
            gridworld(&GridSpec::new(5).with_slip(0.0)),
            Err(EnvError::Slip(0.0))
        );
        let mut spec = GridSpec::new(5);
        spec.goal = Some((1, 1));
        assert_eq!(gridworld(&spec), Err(EnvError::InitIsGoal));
        let mut spec = GridSpec::new(5);
        spec.walls = vec![(1, 1)];
        assert_eq!(gridworld(&spec), Err(EnvError::WallOnEndpoint(1, 1)));
        let mut spec = GridSpec::new(5);
        spec.init = Some((0, 2));
        assert_eq!(gridworld(&spec), Err(EnvError::NotInterior(0, 2)));
    }
}
