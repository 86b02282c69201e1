//! Episodic optimistic learner for reach-avoid objectives.
//!
//! Every episode rebuilds the interval model from all samples so far, solves
//! it optimistically, derives a step deadline from the optimistic chain and
//! runs the optimistic policy until the goal or the deadline. Entering a bad
//! state sends the agent back to the start.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::confidence::{build_interval, ConfidenceError, VisitStats};
use crate::evi::{lambda_bound, redirect_rows, run_evi, EviError, EviOptions};
use crate::mdp::{Graph, MdpError, Policy};
use crate::mec::distance_to;
use crate::rng::{child, Purpose};
use crate::sim::Environment;

/// Default cap on the deadline search.
pub const H_MAX: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("deadline search stalled: state {state} never leaks to the goal")]
    Stall { state: usize },
    #[error("deadline exceeds the cap of {0} steps")]
    DeadlineCap(u64),
    #[error("deadline needs k >= 1 and q >= 2, got k = {k}, q = {q}")]
    DeadlineArgs { k: u64, q: u32 },
    #[error("episode {episode}: {source}")]
    Evi { episode: u64, source: EviError },
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Env(#[from] MdpError),
    #[error("goal and bad sets overlap at state {0}")]
    Overlap(usize),
}

/// Substochastic block of the optimistic chain over the non-goal states
/// reachable from the start, with all bad states merged into one row that
/// jumps back to the start.
#[derive(Clone, Debug, PartialEq)]
pub struct DeadlineMatrix {
    /// chain state behind each row, `None` for the merged bad row
    pub states: Vec<Option<usize>>,
    pub dim: usize,
    /// row-major `dim × dim`
    pub q: Vec<f64>,
    /// whether each row sends mass into the goal
    leaks: Vec<bool>,
}

impl DeadlineMatrix {
    pub fn build(
        rows: &[Vec<f64>],
        goal: &BTreeSet<usize>,
        bad: &BTreeSet<usize>,
        init: usize,
    ) -> DeadlineMatrix {
        let redirected = redirect_rows(rows, bad, init);
        // forward reachability from init in the redirected chain, stopping at the goal
        let n = rows.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([init]);
        seen[init] = true;
        while let Some(s) = queue.pop_front() {
            if goal.contains(&s) {
                continue;
            }
            for (t, &p) in redirected[s].iter().enumerate() {
                if p > 0.0 && !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        let transient: Vec<usize> = (0..n)
            .filter(|&s| seen[s] && !goal.contains(&s) && !bad.contains(&s))
            .collect();
        let has_bad = (0..n).any(|s| seen[s] && bad.contains(&s));
        let mut index = vec![usize::MAX; n];
        for (i, &s) in transient.iter().enumerate() {
            index[s] = i;
        }
        let bad_row = transient.len();
        let dim = transient.len() + usize::from(has_bad);
        for &b in bad {
            if b < n && has_bad {
                index[b] = bad_row;
            }
        }
        let mut q = vec![0.0; dim * dim];
        let mut leaks = vec![false; dim];
        for (i, &s) in transient.iter().enumerate() {
            for (t, &p) in rows[s].iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                if goal.contains(&t) {
                    leaks[i] = true;
                } else if index[t] != usize::MAX {
                    q[i * dim + index[t]] += p;
                }
            }
        }
        if has_bad && index[init] < dim {
            q[bad_row * dim + index[init]] = 1.0;
        }
        let mut states: Vec<Option<usize>> = transient.iter().map(|&s| Some(s)).collect();
        if has_bad {
            states.push(None);
        }
        DeadlineMatrix {
            states,
            dim,
            q,
            leaks,
        }
    }

    /// First row that can never pass mass to the goal, if any.
    fn stalled_row(&self) -> Option<usize> {
        let d = self.dim;
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); d];
        for i in 0..d {
            for j in 0..d {
                if self.q[i * d + j] > 0.0 {
                    pred[j].push(i);
                }
            }
        }
        let mut ok = self.leaks.clone();
        let mut stack: Vec<usize> = (0..d).filter(|&i| ok[i]).collect();
        while let Some(j) = stack.pop() {
            for &i in &pred[j] {
                if !ok[i] {
                    ok[i] = true;
                    stack.push(i);
                }
            }
        }
        (0..d).find(|&i| !ok[i])
    }

    /// `‖Qⁿ‖∞` for `n = 1, 2, …`, as `Qⁿ·1` for a nonnegative matrix.
    fn norms(&self) -> impl Iterator<Item = f64> + '_ {
        let d = self.dim;
        let mut x = vec![1.0; d];
        std::iter::from_fn(move || {
            let next: Vec<f64> = (0..d)
                .map(|i| {
                    let v: f64 = self.q[i * d..(i + 1) * d]
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| a * b)
                        .sum();
                    v.min(1.0)
                })
                .collect();
            x = next;
            Some(x.iter().fold(0.0f64, |m, v| m.max(*v)))
        })
    }

    /// Least `n > 1` with `‖Qⁿ‖∞ ≤ k^(−1/q)`.
    pub fn deadline(&self, k: u64, q: u32, cap: u64) -> Result<u64, LearnerError> {
        if k == 0 || q < 2 {
            return Err(LearnerError::DeadlineArgs { k, q });
        }
        if self.dim == 0 {
            return Ok(2);
        }
        if let Some(row) = self.stalled_row() {
            let state = self.states[row].unwrap_or(usize::MAX);
            return Err(LearnerError::Stall { state });
        }
        let threshold = (k as f64).powf(-1.0 / q as f64);
        for (n, norm) in (1u64..).zip(self.norms()) {
            if n > 1 && norm <= threshold {
                return Ok(n);
            }
            if n >= cap {
                break;
            }
        }
        Err(LearnerError::DeadlineCap(cap))
    }
}

/// Episode deadline for the optimistic chain `rows`.
pub fn deadline(
    rows: &[Vec<f64>],
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    init: usize,
    k: u64,
    q: u32,
) -> Result<u64, LearnerError> {
    if goal.contains(&init) {
        return Ok(2);
    }
    DeadlineMatrix::build(rows, goal, bad, init).deadline(k, q, H_MAX)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ReachedG,
    DeadlineHit,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::ReachedG => "reached_G",
            Outcome::DeadlineHit => "deadline_hit",
        }
    }
}

/// One time step. `action` is `None` for a reset out of a bad state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub state: usize,
    pub action: Option<usize>,
    pub next: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub k: u64,
    /// global step index at the start of the episode, from 1
    pub t_k: u64,
    pub h_k: u64,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    pub resets: u64,
    pub policy: Policy,
    /// optimistic value of the start state
    pub optimistic_value: f64,
    /// the optimistic solution could not reach the goal from the start
    pub fallback: bool,
}

/// Runs `policy` from the environment's current state until the goal is
/// reached or more than `h_k` steps have passed.
#[allow(clippy::too_many_arguments)]
pub fn execute_episode<E: Environment>(
    env: &mut E,
    policy: &Policy,
    h_k: u64,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    stats: &mut VisitStats,
    rng: &mut crate::rng::StreamRng,
    k: u64,
) -> Result<EpisodeRecord, LearnerError> {
    let start = stats.t;
    let init = env.init();
    let mut s = env.current();
    let mut steps = Vec::new();
    let mut resets = 0;
    let mut outcome = Outcome::DeadlineHit;
    if goal.contains(&s) {
        outcome = Outcome::ReachedG;
    } else {
        while stats.t - start <= h_k {
            if bad.contains(&s) {
                env.reset();
                stats.tick();
                steps.push(Step {
                    state: s,
                    action: None,
                    next: init,
                });
                resets += 1;
                s = init;
            } else {
                let a = policy.action(s);
                let next = env.step(a, rng)?;
                stats.record(s, a, next)?;
                steps.push(Step {
                    state: s,
                    action: Some(a),
                    next,
                });
                s = next;
            }
            if goal.contains(&s) {
                outcome = Outcome::ReachedG;
                break;
            }
        }
    }
    Ok(EpisodeRecord {
        k,
        t_k: start + 1,
        h_k,
        steps,
        outcome,
        resets,
        policy: policy.clone(),
        optimistic_value: f64::NAN,
        fallback: false,
    })
}

#[derive(Clone, Debug)]
pub struct LearnConfig {
    pub delta: f64,
    pub p_min: f64,
    pub episodes: u64,
    pub q: u32,
    pub seed: u64,
    /// known or learned edge set; restricts optimism when present
    pub graph: Option<Graph>,
    pub max_sweeps: u64,
}

impl LearnConfig {
    pub fn new(delta: f64, p_min: f64, episodes: u64, seed: u64) -> Self {
        LearnConfig {
            delta,
            p_min,
            episodes,
            q: 2,
            seed,
            graph: None,
            max_sweeps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearningRun {
    pub records: Vec<EpisodeRecord>,
    /// hitting-time bound used in the stopping test
    pub lambda: f64,
    /// the bound overflowed and was replaced by infinity
    pub lambda_overflow: bool,
}

impl LearningRun {
    pub fn alpha(&self) -> u64 {
        self.records.iter().map(|r| r.h_k).max().unwrap_or(0)
    }
}

/// Runs `cfg.episodes` learning episodes against `env`.
pub fn run_learning<E: Environment>(
    env: &mut E,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    cfg: &LearnConfig,
) -> Result<LearningRun, LearnerError> {
    if let Some(&s) = goal.intersection(bad).next() {
        return Err(LearnerError::Overlap(s));
    }
    let n = env.n_states();
    let m = env.n_actions();
    let init = env.init();
    let (lambda, lambda_overflow) = match lambda_bound(n, cfg.p_min, cfg.delta) {
        Ok(l) => (l, false),
        Err(EviError::BoundUnderflow { .. }) => (f64::INFINITY, true),
        Err(e) => {
            return Err(LearnerError::Evi {
                episode: 0,
                source: e,
            })
        }
    };
    let rank: Vec<u32> = match &cfg.graph {
        Some(g) => distance_to(g, goal),
        None => (0..n).map(|s| u32::from(!goal.contains(&s))).collect(),
    };
    let opts = EviOptions {
        mask: cfg.graph.as_ref(),
        rank: Some(&rank),
        max_sweeps: cfg.max_sweeps,
    };
    let mut stats = VisitStats::new(n, m);
    let mut records = Vec::with_capacity(cfg.episodes as usize);
    env.reset();
    for k in 1..=cfg.episodes {
        stats.k = k;
        let model = build_interval(&stats, k, cfg.delta)?;
        let sol = run_evi(&model, goal, bad, init, lambda, stats.t + 1, &opts)
            .map_err(|source| LearnerError::Evi { episode: k, source })?;
        let fallback = sol.init_unreachable || bad.contains(&init);
        let (h_k, value) = if fallback {
            (2, 0.0)
        } else {
            (
                deadline(&sol.rows, goal, bad, init, k, cfg.q)?,
                sol.values[init],
            )
        };
        let mut rng = child(cfg.seed, Purpose::Episode, k);
        let mut rec = execute_episode(env, &sol.policy, h_k, goal, bad, &mut stats, &mut rng, k)?;
        rec.optimistic_value = value;
        rec.fallback = fallback;
        records.push(rec);
        env.reset();
    }
    Ok(LearningRun {
        records,
        lambda,
        lambda_overflow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;
    use crate::rng::seeded;
    use crate::sim::MdpEnv;

    #[test]
    fn scalar_deadline() {
        // one transient state with self-loop 0.5, the rest to the goal
        let rows = vec![vec![0.5, 0.5], vec![0.0, 1.0]];
        assert_eq!(
            deadline(&rows, &[1].into(), &BTreeSet::new(), 0, 16, 2).unwrap(),
            2
        );
        assert_eq!(
            deadline(&rows, &[1].into(), &BTreeSet::new(), 0, 1, 2).unwrap(),
            2
        );
        // threshold 1/8 needs 0.5^3
        assert_eq!(
            deadline(&rows, &[1].into(), &BTreeSet::new(), 0, 64, 2).unwrap(),
            3
        );
    }

    #[test]
    fn deadline_grows_with_k() {
        let rows = vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.0, 0.0, 1.0],
        ];
        let hs: Vec<u64> = [4, 16, 64]
            .iter()
            .map(|&k| deadline(&rows, &[2].into(), &BTreeSet::new(), 0, k, 2).unwrap())
            .collect();
        assert!(hs[0] <= hs[1] && hs[1] <= hs[2], "{hs:?}");
    }

    #[test]
    fn trapped_chain_stalls() {
        let rows = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        assert!(matches!(
            deadline(&rows, &[2].into(), &BTreeSet::new(), 0, 4, 2),
            Err(LearnerError::Stall { .. })
        ));
    }

    #[test]
    fn bad_states_merge_into_reset_row() {
        // 0 -> {1 bad: .5, 2 goal: .5}
        let rows = vec![
            vec![0.0, 0.5, 0.5],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let d = DeadlineMatrix::build(&rows, &[2].into(), &[1].into(), 0);
        assert_eq!(d.states, vec![Some(0), None]);
        assert_eq!(d.q, vec![0.0, 0.5, 1.0, 0.0]);
    }

    fn line(n: usize) -> MdpBuilder {
        // action 0 moves right, action 1 stays
        let mut b = MdpBuilder::new(n, 2);
        for s in 0..n {
            b.set(s, 0, (s + 1).min(n - 1), 1.0);
            b.set(s, 1, s, 1.0);
        }
        b
    }

    #[test]
    fn start_in_goal_is_empty_episode() {
        let mut env = MdpEnv::new(line(2).build().unwrap());
        let mut stats = VisitStats::new(2, 2);
        let rec = execute_episode(
            &mut env,
            &Policy::constant(2, 0),
            10,
            &[0].into(),
            &BTreeSet::new(),
            &mut stats,
            &mut seeded(0),
            1,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::ReachedG);
        assert!(rec.steps.is_empty());
    }

    #[test]
    fn walks_to_goal() {
        let mut env = MdpEnv::new(line(3).build().unwrap());
        let mut stats = VisitStats::new(3, 2);
        let rec = execute_episode(
            &mut env,
            &Policy::constant(3, 0),
            10,
            &[2].into(),
            &BTreeSet::new(),
            &mut stats,
            &mut seeded(0),
            1,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::ReachedG);
        assert_eq!(rec.steps.len(), 2);
        assert_eq!(stats.visits(0, 0), 1);
    }

    #[test]
    fn deadline_bounds_the_episode() {
        let mut env = MdpEnv::new(line(3).build().unwrap());
        let mut stats = VisitStats::new(3, 2);
        let rec = execute_episode(
            &mut env,
            &Policy::constant(3, 1),
            5,
            &[2].into(),
            &BTreeSet::new(),
            &mut stats,
            &mut seeded(0),
            1,
        )
        .unwrap();
        assert_eq!(rec.outcome, Outcome::DeadlineHit);
        assert_eq!(rec.steps.len(), 6);
    }

    #[test]
    fn resets_are_steps_but_not_samples() {
        // 0 -a0-> 1 (bad); 1 absorbing
        let mut env = MdpEnv::new(line(3).build().unwrap());
        let mut stats = VisitStats::new(3, 2);
        let rec = execute_episode(
            &mut env,
            &Policy::constant(3, 0),
            3,
            &[2].into(),
            &[1].into(),
            &mut stats,
            &mut seeded(0),
            1,
        )
        .unwrap();
        assert_eq!(rec.resets, 2);
        assert_eq!(rec.steps.len(), 4);
        assert_eq!(stats.t, 4);
        assert_eq!(stats.visits(1, 0) + stats.visits(1, 1), 0);
        assert_eq!(stats.visits(0, 0), 2);
    }

    #[test]
    fn single_action_runs_are_reproducible() {
        let mut b = MdpBuilder::new(3, 1);
        b.set(0, 0, 0, 0.5)
            .set(0, 0, 1, 0.3)
            .set(0, 0, 2, 0.2)
            .set(1, 0, 1, 1.0)
            .set(2, 0, 2, 1.0);
        let m = b.build().unwrap();
        let run = |seed| {
            let mut env = MdpEnv::new(m.clone());
            run_learning(
                &mut env,
                &[1].into(),
                &[2].into(),
                &LearnConfig::new(0.1, 0.2, 30, seed),
            )
            .unwrap()
        };
        let a = run(4);
        let b = run(4);
        assert_eq!(a.records, b.records);
        assert!(a.records.iter().all(|r| r.policy == Policy::constant(3, 0)));
        let t: Vec<u64> = a.records.iter().map(|r| r.t_k).collect();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
}
