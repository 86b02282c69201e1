//! Ground-truth oracles and regret bookkeeping.
//!
//! These functions read the true kernel. They are for evaluating a learner,
//! never for feeding it.

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::evi::{solve, EviError};
use crate::learner::EpisodeRecord;
use crate::mdp::{Mdp, MdpError, Policy};

/// Value-iteration stopping residual.
pub const VI_TOL: f64 = 1e-12;
/// Value-iteration sweep cap.
pub const VI_MAX_SWEEPS: u64 = 10_000_000;
/// Actions within this gap of the best backup count as optimal.
const TIE_TOL: f64 = 1e-12;
/// Slack before a policy value above the optimum is reported.
const ORACLE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] EviError),
    #[error("episode {episode}: policy value {value} exceeds the optimum {v_star}")]
    OracleInconsistent {
        episode: usize,
        value: f64,
        v_star: f64,
    },
    #[error("goal and bad sets overlap at state {0}")]
    Overlap(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachSolution {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub sweeps: u64,
}

fn flags(n: usize, set: &BTreeSet<usize>) -> Vec<bool> {
    let mut v = vec![false; n];
    for &s in set {
        if s < n {
            v[s] = true;
        }
    }
    v
}

/// States that can reach the goal without passing through a bad state.
fn can_win(mdp: &Mdp, goal: &[bool], bad: &[bool]) -> Vec<bool> {
    let n = mdp.n_states();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| !goal[s] && !bad[s]) {
        for a in 0..mdp.n_actions() {
            for (t, &p) in mdp.row(s, a).iter().enumerate() {
                if p > 0.0 {
                    pred[t].push(s);
                }
            }
        }
    }
    let mut seen = goal.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| goal[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

fn backup(mdp: &Mdp, s: usize, a: usize, v: &[f64]) -> f64 {
    mdp.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum()
}

/// Maximal probability of reaching `goal` before `bad`, with an optimal
/// positional policy.
pub fn exact_reach_prob(
    mdp: &Mdp,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
) -> Result<ReachSolution, MetricsError> {
    if let Some(&s) = goal.intersection(bad).next() {
        return Err(MetricsError::Overlap(s));
    }
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let g = flags(n, goal);
    let b = flags(n, bad);
    let live = can_win(mdp, &g, &b);
    let open: Vec<usize> = (0..n).filter(|&s| live[s] && !g[s]).collect();
    let mut v: Vec<f64> = g.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
    let mut sweeps = 0;
    while sweeps < VI_MAX_SWEEPS {
        sweeps += 1;
        let mut residual = 0.0f64;
        for &s in &open {
            let best = (0..m).map(|a| backup(mdp, s, a, &v)).fold(0.0f64, f64::max);
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual <= VI_TOL {
            break;
        }
    }

    // optimal actions that make progress towards the goal, layer by layer
    let mut choice = vec![0usize; n];
    let mut attr = g.clone();
    loop {
        let mut layer = Vec::new();
        for &s in open.iter().filter(|&&s| !attr[s]) {
            let best = (0..m).map(|a| backup(mdp, s, a, &v)).fold(0.0f64, f64::max);
            let pick = (0..m).find(|&a| {
                backup(mdp, s, a, &v) >= best - TIE_TOL
                    && mdp
                        .row(s, a)
                        .iter()
                        .enumerate()
                        .any(|(t, &p)| p > 0.0 && attr[t])
            });
            if let Some(a) = pick {
                layer.push((s, a));
            }
        }
        if layer.is_empty() {
            break;
        }
        for (s, a) in layer {
            attr[s] = true;
            choice[s] = a;
        }
    }
    for &s in open.iter().filter(|&&s| !attr[s]) {
        choice[s] = (0..m)
            .max_by(|&a, &c| {
                backup(mdp, s, a, &v)
                    .total_cmp(&backup(mdp, s, c, &v))
                    .then(c.cmp(&a))
            })
            .unwrap_or(0);
    }

    // polish: exact evaluation, switching only on strict improvement
    let mut policy = Policy::new(choice);
    let mut exact = policy_value(mdp, &policy, goal, bad)?;
    for _ in 0..n.max(1) * m {
        let mut improved = false;
        let mut next = policy.choices().to_vec();
        for &s in &open {
            let cur = exact[s];
            if let Some(a) = (0..m).find(|&a| backup(mdp, s, a, &exact) > cur + TIE_TOL) {
                next[s] = a;
                improved = true;
            }
        }
        if !improved {
            break;
        }
        policy = Policy::new(next);
        exact = policy_value(mdp, &policy, goal, bad)?;
    }
    Ok(ReachSolution {
        values: exact,
        policy,
        sweeps,
    })
}

/// Probability of reaching `goal` before `bad` under a fixed policy.
pub fn policy_value(
    mdp: &Mdp,
    policy: &Policy,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
) -> Result<Vec<f64>, MetricsError> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let g = flags(n, goal);
    let b = flags(n, bad);
    // states with a positive-probability path to the goal under the policy
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| !g[s] && !b[s]) {
        for (t, &p) in mdp.row(s, policy.action(s)).iter().enumerate() {
            if p > 0.0 {
                pred[t].push(s);
            }
        }
    }
    let mut live = g.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&s| g[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !live[s] {
                live[s] = true;
                stack.push(s);
            }
        }
    }
    let unknowns: Vec<usize> = (0..n).filter(|&s| live[s] && !g[s]).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &s) in unknowns.iter().enumerate() {
        index[s] = i;
    }
    let k = unknowns.len();
    let mut values: Vec<f64> = g.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
    if k == 0 {
        return Ok(values);
    }
    let mut a = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (i, &s) in unknowns.iter().enumerate() {
        a[i * k + i] += 1.0;
        for (t, &p) in mdp.row(s, policy.action(s)).iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            if g[t] {
                rhs[i] += p;
            } else if index[t] != usize::MAX {
                a[i * k + index[t]] -= p;
            }
        }
    }
    let x = solve(&a, &rhs, k)?;
    for (i, &s) in unknowns.iter().enumerate() {
        values[s] = x[i].clamp(0.0, 1.0);
    }
    Ok(values)
}

/// Per-episode gaps and cumulative regret.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretTrace {
    pub v_star: f64,
    pub values: Vec<f64>,
    pub gaps: Vec<f64>,
    /// cumulative regret after each episode
    pub regret: Vec<f64>,
    /// cumulative regret divided by the episode count
    pub normalized: Vec<f64>,
}

impl RegretTrace {
    pub fn final_normalized(&self) -> f64 {
        self.normalized.last().copied().unwrap_or(0.0)
    }
}

pub fn regret(values: &[f64], v_star: f64) -> Result<RegretTrace, MetricsError> {
    let mut gaps = Vec::with_capacity(values.len());
    let mut cum = Vec::with_capacity(values.len());
    let mut norm = Vec::with_capacity(values.len());
    let mut total = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if v > v_star + ORACLE_SLACK {
            return Err(MetricsError::OracleInconsistent {
                episode: i + 1,
                value: v,
                v_star,
            });
        }
        let gap = v_star - v;
        total += gap;
        gaps.push(gap);
        cum.push(total);
        norm.push(total / (i + 1) as f64);
    }
    Ok(RegretTrace {
        v_star,
        values: values.to_vec(),
        gaps,
        regret: cum,
        normalized: norm,
    })
}

/// First episode (from 1) whose normalized regret is below `eps`.
pub fn k_star_reg(trace: &RegretTrace, eps: f64) -> Option<u64> {
    trace
        .normalized
        .iter()
        .position(|&r| r < eps)
        .map(|i| i as u64 + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryBound {
    pub episodes: u64,
    pub bound: f64,
    /// cap on the longest episode deadline
    pub alpha_cap: f64,
    /// the six summands, in order
    pub terms: [f64; 6],
}

/// Regret bound after `episodes` episodes with the deadline length replaced
/// by its cap `⌈3Λ ln(2 K^(1/q))⌉`. The leading big-O term is taken with
/// constant one.
pub fn theory_bound(
    episodes: u64,
    n_states: usize,
    n_actions: usize,
    delta: f64,
    lambda: f64,
    q: u32,
) -> TheoryBound {
    let k = episodes as f64;
    let s = n_states as f64;
    let a = n_actions as f64;
    let alpha = (3.0 * lambda * (2.0 * k.powf(1.0 / q as f64)).ln()).ceil();
    let ka = k * alpha;
    let terms = [
        (2.0 * ka * (1.0 / delta).ln()).sqrt(),
        4.0 * s * (8.0 * a * ka * (2.0 * a * ka / delta).ln()).sqrt(),
        2.0 * (2.0 * ka * (3.0 * ka * ka / delta).ln()).sqrt(),
        alpha * (1.0 + ka.ln()) / 2.0,
        2.0 * k.sqrt() + 2.0 * (2.0 * ka * (2.0 * ka * ka / delta).ln()).sqrt(),
        4.0 * s * (8.0 * a * ka * (2.0 * a * ka / delta).ln()).sqrt(),
    ];
    TheoryBound {
        episodes,
        bound: terms.iter().sum(),
        alpha_cap: alpha,
        terms,
    }
}

/// `printf("%.12g")`-style formatting.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..12).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip(mant), exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        strip(&format!("{x:.decimals$}"))
    }
}

pub const CSV_HEADER: &str =
    "episode,t_k,H_k,outcome,resets,steps,v_k,v_star,delta_k,regret,normalized_regret";

pub fn write_trace_csv<W: Write>(
    out: &mut W,
    records: &[EpisodeRecord],
    trace: &RegretTrace,
) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.t_k,
            r.h_k,
            r.outcome.as_str(),
            r.resets,
            r.steps.len(),
            fmt_g12(trace.values[i]),
            fmt_g12(trace.v_star),
            fmt_g12(trace.gaps[i]),
            fmt_g12(trace.regret[i]),
            fmt_g12(trace.normalized[i]),
        )?;
    }
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
