//! Learning the edge set of an unknown MDP from samples, given a lower bound
//! on its nonzero transition probabilities.
//!
//! Every `(s, a)` pair is sampled `n*` times, where `n*` is the smallest count
//! for which an edge of probability at least `p_min` would have shown up with
//! the required confidence. Visits are steered by an optimistic graph search:
//! pairs sampled fewer than `n*` times are assumed to possibly lead anywhere.

use thiserror::Error;

use crate::mdp::{Graph, MdpError, Policy};
use crate::rng::StreamRng;
use crate::sim::Environment;

/// Upper end of the sample-count search.
pub const MAX_SAMPLES: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphLearnError {
    #[error("p_min must lie in (0, 1), got {0}")]
    PMinDomain(f64),
    #[error("no sample count up to {MAX_SAMPLES} separates p_min = {0} from zero")]
    Infeasible(f64),
    #[error("state {0} is unreachable in the optimistic graph")]
    Unreachable(usize),
    #[error("state {0} out of range")]
    StateIndex(usize),
    #[error(transparent)]
    Env(#[from] MdpError),
}

fn zeta(n: u64, n_states: usize, n_actions: usize, p_min: f64) -> f64 {
    let n = n as f64;
    let s = n_states as f64;
    (4.0 * n * n * s * s * n_actions as f64 * p_min).ln() / (n - 1.0)
}

/// Deviation bound after `n ≥ 2` samples. NaN where the log is negative.
pub fn psi(n: u64, n_states: usize, n_actions: usize, p_min: f64) -> f64 {
    let z = zeta(n, n_states, n_actions, p_min);
    if z < 0.0 {
        return f64::NAN;
    }
    (z / 2.0).sqrt() + 7.0 / 3.0 * z
}

/// Smallest `n ≥ 2` with `psi(n) < p_min`.
pub fn min_samples(p_min: f64, n_states: usize, n_actions: usize) -> Result<u64, GraphLearnError> {
    if !(p_min > 0.0 && p_min < 1.0) {
        return Err(GraphLearnError::PMinDomain(p_min));
    }
    let ok = |n: u64| psi(n, n_states, n_actions, p_min) < p_min;
    // ζ is decreasing once ln(c n²) ≥ 2; scan up to there, bisect beyond.
    let c = 4.0 * (n_states * n_states * n_actions) as f64 * p_min;
    let monotone_from = ((std::f64::consts::E.powi(2) / c).sqrt().ceil() as u64).max(2);
    let scan_end = monotone_from.min(MAX_SAMPLES);
    for n in 2..=scan_end {
        if ok(n) {
            return Ok(n);
        }
    }
    if !ok(MAX_SAMPLES) {
        return Err(GraphLearnError::Infeasible(p_min));
    }
    let (mut lo, mut hi) = (scan_end, MAX_SAMPLES);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEstimate {
    pub graph: Graph,
    /// samples per `(s, a)`, indexed `s * |A| + a`
    pub counts: Vec<u64>,
    pub n_star: u64,
    pub delta: f64,
    pub samples_total: u64,
    /// states shown unreachable from the initial state
    pub unreachable: Vec<usize>,
    /// false when the step budget ran out first
    pub complete: bool,
}

impl GraphEstimate {
    pub fn new(n_states: usize, n_actions: usize, n_star: u64, delta: f64) -> Self {
        GraphEstimate {
            graph: Graph::empty(n_states, n_actions),
            counts: vec![0; n_states * n_actions],
            n_star,
            delta,
            samples_total: 0,
            unreachable: Vec::new(),
            complete: false,
        }
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.graph.n_actions() + a]
    }

    fn settled(&self, s: usize, a: usize) -> bool {
        self.count(s, a) >= self.n_star
    }

    /// Records one observed transition. Returns true if it added an edge.
    pub fn record(&mut self, s: usize, a: usize, next: usize) -> bool {
        let m = self.graph.n_actions();
        self.counts[s * m + a] += 1;
        self.samples_total += 1;
        self.graph.insert(s, a, next)
    }
}

/// Optimistic hop distance to `target` and the action realizing it.
fn optimistic_distances(est: &GraphEstimate, target: usize) -> (Vec<u32>, Vec<usize>) {
    let n = est.graph.n_states();
    let m = est.graph.n_actions();
    let mut dist = vec![u32::MAX; n];
    let mut choice = vec![0; n];
    dist[target] = 0;
    loop {
        let mut changed = false;
        for s in 0..n {
            if s == target {
                continue;
            }
            for a in 0..m {
                let d = if !est.settled(s, a) {
                    1
                } else {
                    est.graph
                        .successors(s, a)
                        .iter()
                        .map(|&t| dist[t])
                        .min()
                        .map_or(u32::MAX, |d| d.saturating_add(1))
                };
                if d < dist[s] {
                    dist[s] = d;
                    choice[s] = a;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // lowest action among the shortest
    for s in 0..n {
        if s == target || dist[s] == u32::MAX {
            continue;
        }
        choice[s] = (0..m)
            .find(|&a| {
                !est.settled(s, a) && dist[s] == 1
                    || est.settled(s, a)
                        && est
                            .graph
                            .successors(s, a)
                            .iter()
                            .any(|&t| dist[t].saturating_add(1) == dist[s])
            })
            .expect("some action realizes the distance");
    }
    (dist, choice)
}

/// Positional policy under which `target` is reachable from `init` in the
/// optimistic graph, preferring short paths and then low action indices.
pub fn reaching_policy(
    est: &GraphEstimate,
    init: usize,
    target: usize,
) -> Result<Policy, GraphLearnError> {
    let n = est.graph.n_states();
    if target >= n {
        return Err(GraphLearnError::StateIndex(target));
    }
    if init >= n {
        return Err(GraphLearnError::StateIndex(init));
    }
    let (dist, choice) = optimistic_distances(est, target);
    if dist[init] == u32::MAX {
        return Err(GraphLearnError::Unreachable(target));
    }
    Ok(Policy::new(choice))
}

#[derive(Clone, Copy, Debug)]
pub struct GraphLearnConfig {
    pub p_min: f64,
    pub delta: f64,
    /// global cap on environment steps
    pub max_steps: u64,
}

impl GraphLearnConfig {
    pub fn new(p_min: f64, delta: f64) -> Self {
        GraphLearnConfig {
            p_min,
            delta,
            max_steps: 100_000_000,
        }
    }
}

/// Samples every reachable `(s, a)` pair `n*` times and returns the observed
/// edge set.
///
/// A run segment starts at the initial state and follows the reaching policy
/// of the current target. It is abandoned after `|S|·n*` steps without a visit
/// to the target, or as soon as the target is out of optimistic reach.
pub fn learn_graph<E: Environment>(
    env: &mut E,
    cfg: &GraphLearnConfig,
    rng: &mut StreamRng,
) -> Result<GraphEstimate, GraphLearnError> {
    let n = env.n_states();
    let m = env.n_actions();
    let n_star = min_samples(cfg.p_min, n, m)?;
    let mut est = GraphEstimate::new(n, m, n_star, cfg.delta);
    let init = env.init();
    let segment_cap = (n as u64).saturating_mul(n_star);

    for target in 0..n {
        let pending = |est: &GraphEstimate| (0..m).find(|&a| !est.settled(target, a));
        'target: while pending(&est).is_some() {
            let (dist, mut choice) = optimistic_distances(&est, target);
            if dist[init] == u32::MAX {
                est.unreachable.push(target);
                break;
            }
            let mut dist = dist;
            env.reset();
            let mut since_visit = 0u64;
            loop {
                if est.samples_total >= cfg.max_steps {
                    return Ok(est);
                }
                let s = env.current();
                let a = if s == target {
                    match pending(&est) {
                        Some(a) => a,
                        None => break 'target,
                    }
                } else if dist[s] == u32::MAX {
                    break;
                } else {
                    choice[s]
                };
                let was_settled = est.settled(s, a);
                let next = env.step(a, rng)?;
                let new_edge = est.record(s, a, next);
                if s == target {
                    since_visit = 0;
                } else {
                    since_visit += 1;
                }
                if new_edge || (!was_settled && est.settled(s, a)) {
                    (dist, choice) = optimistic_distances(&est, target);
                }
                if since_visit > segment_cap {
                    break;
                }
            }
        }
    }
    est.complete = true;
    Ok(est)
}
