//! Extended value iteration over an interval model.
//!
//! Each sweep backs up reach-avoid values through the most favourable kernel
//! inside every L1 ball. Iteration stops once the sweep residual drops below
//! `1/(2 t_k)` and the expected time to the goal under the resulting
//! optimistic chain is below the hitting-time bound.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::confidence::IntervalModel;
use crate::mdp::{Graph, Policy};

/// Mass slack tolerated when truncating optimistic rows.
const MASS_TOL: f64 = 1e-12;
/// Actions within this gap of the best backup count as optimal.
const TIE_TOL: f64 = 1e-12;
/// Residual at which the value sequence is considered converged outright.
const CONVERGED: f64 = 1e-12;
/// Above this size linear solves get a refinement pass.
const REFINE_ABOVE: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum EviError {
    #[error("L1 budget must be nonnegative, got {0}")]
    NegativeBudget(f64),
    #[error("row has {got} entries, value vector has {expected}")]
    Shape { expected: usize, got: usize },
    #[error("hitting-time system is singular at pivot {0}")]
    Singular(usize),
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    SweepCap { sweeps: u64, residual: f64 },
    #[error("p_min^|S| underflows for p_min = {p_min}, |S| = {n_states}; use a larger p_min or a smaller model")]
    BoundUnderflow { p_min: f64, n_states: usize },
    #[error("parameter {name} = {value} outside (0, 1)")]
    Domain { name: &'static str, value: f64 },
    #[error("goal and bad sets overlap at state {0}")]
    Overlap(usize),
    #[error("t_k must be at least 1")]
    StepIndex,
}

/// Maximizes `p · values` over distributions `p` with `‖p − hat‖₁ ≤ d`.
///
/// States are ranked by value, highest first, lower index first among equal
/// values.
pub fn inner_max(hat: &[f64], d: f64, values: &[f64]) -> Result<Vec<f64>, EviError> {
    if hat.len() != values.len() {
        return Err(EviError::Shape {
            expected: values.len(),
            got: hat.len(),
        });
    }
    if d.is_nan() || d < 0.0 {
        return Err(EviError::NegativeBudget(d));
    }
    let order = value_order(values, None);
    let mut p = hat.to_vec();
    shift_mass(&mut p, d, &order);
    Ok(p)
}

/// State indices by value descending, then `rank` ascending, then index.
fn value_order(values: &[f64], rank: Option<&[u32]>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .total_cmp(&values[i])
            .then_with(|| match rank {
                Some(r) => r[i].cmp(&r[j]),
                None => std::cmp::Ordering::Equal,
            })
            .then(i.cmp(&j))
    });
    order
}

/// Moves up to `d/2` of mass onto `order[0]`, taking it from the end of
/// `order`. Entries of `p` outside `order` must be zero.
fn shift_mass(p: &mut [f64], d: f64, order: &[usize]) {
    let Some(&top) = order.first() else { return };
    p[top] = (p[top] + d / 2.0).min(1.0);
    // left[i] = 1 - p[order[0]] - ... - p[order[i-1]], subtracted in order
    let mut left = Vec::with_capacity(order.len() + 1);
    left.push(1.0);
    for &j in order {
        let last = *left.last().expect("nonempty");
        left.push(last - p[j]);
    }
    let mut l = order.len() - 1;
    while l > 0 && left[l + 1] < -MASS_TOL {
        p[order[l]] = left[l].max(0.0);
        l -= 1;
    }
    let deficit = if l == order.len() - 1 {
        left[order.len()]
    } else {
        0.0
    };
    if deficit > 0.0 {
        // rows that are not yet distributions (unvisited pairs) are topped up
        p[top] += deficit;
    }
}

/// Options for the optimistic backup beyond the plain algorithm.
#[derive(Clone, Copy, Debug)]
pub struct EviOptions<'a> {
    /// Restricts optimistic mass to these edges (plus any observed ones).
    pub mask: Option<&'a Graph>,
    /// Breaks value ties between states, lower rank first.
    pub rank: Option<&'a [u32]>,
    pub max_sweeps: u64,
}

impl Default for EviOptions<'_> {
    fn default() -> Self {
        EviOptions {
            mask: None,
            rank: None,
            max_sweeps: 1_000_000,
        }
    }
}

/// Result of one optimistic sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Backup {
    pub values: Vec<f64>,
    pub policy: Policy,
    /// optimistic row of the chosen action, per state
    pub rows: Vec<Vec<f64>>,
}

fn membership(n: usize, set: &BTreeSet<usize>) -> Vec<bool> {
    let mut out = vec![false; n];
    for &s in set {
        if s < n {
            out[s] = true;
        }
    }
    out
}

fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[at] = 1.0;
    row
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Sweep workspace shared across iterations.
struct Sweeper<'a> {
    model: &'a IntervalModel,
    goal: Vec<bool>,
    bad: Vec<bool>,
    opts: EviOptions<'a>,
    /// per `(s, a)`, whether optimistic mass may go to each state
    support: Option<Vec<bool>>,
}

impl<'a> Sweeper<'a> {
    fn new(
        model: &'a IntervalModel,
        goal: Vec<bool>,
        bad: Vec<bool>,
        opts: EviOptions<'a>,
    ) -> Self {
        let support = opts.mask.map(|g| {
            let n = model.n_states;
            let mut sup = vec![false; n * model.n_actions * n];
            for s in 0..n {
                for a in 0..model.n_actions {
                    let base = (s * model.n_actions + a) * n;
                    for &t in g.successors(s, a) {
                        sup[base + t] = true;
                    }
                    for (t, &h) in model.hat_row(s, a).iter().enumerate() {
                        if h > 0.0 {
                            sup[base + t] = true;
                        }
                    }
                }
            }
            sup
        });
        Sweeper {
            model,
            goal,
            bad,
            opts,
            support,
        }
    }

    fn optimistic_row(&self, s: usize, a: usize, order: &[usize]) -> Vec<f64> {
        let n = self.model.n_states;
        let mut p = self.model.hat_row(s, a).to_vec();
        let d = self.model.radius(s, a);
        match &self.support {
            None => shift_mass(&mut p, d, order),
            Some(sup) => {
                let base = (s * self.model.n_actions + a) * n;
                let local: Vec<usize> = order.iter().copied().filter(|&t| sup[base + t]).collect();
                if local.is_empty() {
                    // no known successor at all: keep the literal rule
                    shift_mass(&mut p, d, order);
                } else {
                    shift_mass(&mut p, d, &local);
                }
            }
        }
        p
    }

    /// One backup. With `keep_all`, also returns every action's row.
    fn sweep(&self, values: &[f64], keep_all: bool) -> (Backup, Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let n = self.model.n_states;
        let m = self.model.n_actions;
        let order = value_order(values, self.opts.rank);
        let mut out = vec![0.0; n];
        let mut policy = vec![0; n];
        let mut rows = Vec::with_capacity(n);
        let mut all_rows = Vec::new();
        let mut all_q = Vec::new();
        for s in 0..n {
            if self.goal[s] || self.bad[s] {
                out[s] = if self.goal[s] { 1.0 } else { 0.0 };
                rows.push(point_mass(n, s));
                if keep_all {
                    all_rows.push(Vec::new());
                    all_q.push(Vec::new());
                }
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_row = Vec::new();
            let mut per_action = Vec::new();
            let mut qs = Vec::new();
            for a in 0..m {
                let p = self.optimistic_row(s, a, &order);
                let q = dot(&p, values);
                if q > best {
                    best = q;
                    policy[s] = a;
                    best_row = p.clone();
                }
                if keep_all {
                    per_action.push(p);
                    qs.push(q);
                }
            }
            out[s] = best.clamp(0.0, 1.0);
            rows.push(best_row);
            if keep_all {
                all_rows.push(per_action);
                all_q.push(qs);
            }
        }
        (
            Backup {
                values: out,
                policy: Policy::new(policy),
                rows,
            },
            all_rows,
            all_q,
        )
    }
}

/// One optimistic backup with the plain ordering and no mask.
pub fn bellman(
    model: &IntervalModel,
    values: &[f64],
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
) -> Backup {
    bellman_with(model, values, goal, bad, &EviOptions::default())
}

pub fn bellman_with(
    model: &IntervalModel,
    values: &[f64],
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    opts: &EviOptions<'_>,
) -> Backup {
    let n = model.n_states;
    let sweeper = Sweeper::new(model, membership(n, goal), membership(n, bad), *opts);
    sweeper.sweep(values, false).0
}

/// Expected steps to reach `goal` in the chain given by `rows`.
///
/// States that can reach a state from which the goal is unreachable get
/// `f64::INFINITY`.
pub fn hitting_times(rows: &[Vec<f64>], goal: &BTreeSet<usize>) -> Result<Vec<f64>, EviError> {
    let n = rows.len();
    let is_goal = membership(n, goal);
    // states that reach the goal with positive probability
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in rows.iter().enumerate() {
        for (t, &p) in row.iter().enumerate() {
            if p > 0.0 {
                pred[t].push(s);
            }
        }
    }
    let backward = |seeds: Vec<usize>| {
        let mut seen = vec![false; n];
        let mut stack = seeds;
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(t) = stack.pop() {
            for &s in &pred[t] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    };
    let reaches_goal = backward((0..n).filter(|&s| is_goal[s]).collect());
    let doomed = backward((0..n).filter(|&s| !reaches_goal[s]).collect());

    let mut hit = vec![f64::INFINITY; n];
    let mut index = vec![usize::MAX; n];
    let mut unknowns = Vec::new();
    for s in 0..n {
        if is_goal[s] {
            hit[s] = 0.0;
        } else if !doomed[s] {
            index[s] = unknowns.len();
            unknowns.push(s);
        }
    }
    let k = unknowns.len();
    if k == 0 {
        return Ok(hit);
    }
    let mut a = vec![0.0; k * k];
    for (i, &s) in unknowns.iter().enumerate() {
        a[i * k + i] = 1.0;
        for (t, &p) in rows[s].iter().enumerate() {
            if p > 0.0 && index[t] != usize::MAX {
                a[i * k + index[t]] -= p;
            }
        }
    }
    let b = vec![1.0; k];
    let x = solve(&a, &b, k)?;
    for (i, &s) in unknowns.iter().enumerate() {
        hit[s] = x[i];
    }
    Ok(hit)
}

/// Probability of reaching `goal` before `bad` in the chain given by `rows`.
pub fn reach_probabilities(
    rows: &[Vec<f64>],
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
) -> Result<Vec<f64>, EviError> {
    let n = rows.len();
    let is_goal = membership(n, goal);
    let is_bad = membership(n, bad);
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in rows
        .iter()
        .enumerate()
        .filter(|(s, _)| !is_goal[*s] && !is_bad[*s])
    {
        for (t, &p) in row.iter().enumerate() {
            if p > 0.0 {
                pred[t].push(s);
            }
        }
    }
    let mut live = is_goal.clone();
    let mut stack: Vec<usize> = (0..n).filter(|&s| is_goal[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !live[s] {
                live[s] = true;
                stack.push(s);
            }
        }
    }
    let unknowns: Vec<usize> = (0..n).filter(|&s| live[s] && !is_goal[s]).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &s) in unknowns.iter().enumerate() {
        index[s] = i;
    }
    let mut out: Vec<f64> = is_goal.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    let k = unknowns.len();
    if k == 0 {
        return Ok(out);
    }
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for (i, &s) in unknowns.iter().enumerate() {
        a[i * k + i] += 1.0;
        for (t, &p) in rows[s].iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            if is_goal[t] {
                b[i] += p;
            } else if index[t] != usize::MAX {
                a[i * k + index[t]] -= p;
            }
        }
    }
    let x = solve(&a, &b, k)?;
    for (i, &s) in unknowns.iter().enumerate() {
        out[s] = x[i].clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Dense solve of `a x = b` by LU with partial pivoting, refined once for
/// large systems.
pub(crate) fn solve(a: &[f64], b: &[f64], k: usize) -> Result<Vec<f64>, EviError> {
    let lu = Lu::factor(a, k)?;
    let mut x = lu.solve(b);
    if k > REFINE_ABOVE {
        let r: Vec<f64> = (0..k)
            .map(|i| b[i] - dot(&a[i * k..(i + 1) * k], &x))
            .collect();
        let dx = lu.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Ok(x)
}

struct Lu {
    k: usize,
    m: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &[f64], k: usize) -> Result<Lu, EviError> {
        let mut m = a.to_vec();
        let mut perm: Vec<usize> = (0..k).collect();
        let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&i, &j| m[i * k + col].abs().total_cmp(&m[j * k + col].abs()))
                .expect("nonempty range");
            if m[pivot * k + col].abs() <= 1e-14 * scale {
                return Err(EviError::Singular(col));
            }
            if pivot != col {
                for j in 0..k {
                    m.swap(col * k + j, pivot * k + j);
                }
                perm.swap(col, pivot);
            }
            let d = m[col * k + col];
            for i in col + 1..k {
                let f = m[i * k + col] / d;
                if f == 0.0 {
                    continue;
                }
                m[i * k + col] = f;
                for j in col + 1..k {
                    m[i * k + j] -= f * m[col * k + j];
                }
            }
        }
        Ok(Lu { k, m, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..k {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.m[i * k + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..k).rev() {
            let mut acc = y[i];
            for j in i + 1..k {
                acc -= self.m[i * k + j] * y[j];
            }
            y[i] = acc / self.m[i * k + i];
        }
        y
    }
}

/// High-confidence bound `|S| ln δ / ln(1 − p_min^|S|)` on the optimal
/// expected hitting time.
pub fn lambda_bound(n_states: usize, p_min: f64, delta: f64) -> Result<f64, EviError> {
    if !(p_min > 0.0 && p_min < 1.0) {
        return Err(EviError::Domain {
            name: "p_min",
            value: p_min,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EviError::Domain {
            name: "delta",
            value: delta,
        });
    }
    let exponent = i32::try_from(n_states).unwrap_or(i32::MAX);
    let reach = p_min.powi(exponent);
    if reach == 0.0 {
        return Err(EviError::BoundUnderflow { p_min, n_states });
    }
    Ok(n_states as f64 * delta.ln() / (-reach).ln_1p())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EviSolution {
    pub values: Vec<f64>,
    pub policy: Policy,
    /// optimistic row under the policy, per state
    pub rows: Vec<Vec<f64>>,
    /// expected steps to the goal with bad states sent back to the start
    pub hit: Vec<f64>,
    pub iterations: u64,
    pub residual: f64,
    /// the goal is out of reach from the start even optimistically
    pub init_unreachable: bool,
}

/// Rows with every bad state redirected to `init`.
pub fn redirect_rows(rows: &[Vec<f64>], bad: &BTreeSet<usize>, init: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    rows.iter()
        .enumerate()
        .map(|(s, row)| {
            if bad.contains(&s) {
                point_mass(n, init)
            } else {
                row.clone()
            }
        })
        .collect()
}

/// Among near-optimal actions, prefers one that moves mass into the set of
/// states already known to lead to the goal, growing that set layer by layer.
fn attractor_policy(
    backup: &Backup,
    all_rows: &[Vec<Vec<f64>>],
    all_q: &[Vec<f64>],
    goal: &[bool],
    bad: &[bool],
) -> (Policy, Vec<Vec<f64>>) {
    let n = goal.len();
    let mut policy = backup.policy.choices().to_vec();
    let mut rows = backup.rows.clone();
    let mut attr: Vec<bool> = goal.to_vec();
    loop {
        let mut layer = Vec::new();
        for s in 0..n {
            if attr[s] || bad[s] {
                continue;
            }
            let best = backup.values[s];
            let pick = (0..all_q[s].len()).find(|&a| {
                all_q[s][a] >= best - TIE_TOL
                    && all_rows[s][a]
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
            policy[s] = a;
            rows[s] = all_rows[s][a].clone();
        }
    }
    (Policy::new(policy), rows)
}

/// Extended value iteration from the goal indicator.
pub fn run_evi(
    model: &IntervalModel,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    init: usize,
    lambda: f64,
    t_k: u64,
    opts: &EviOptions<'_>,
) -> Result<EviSolution, EviError> {
    if t_k == 0 {
        return Err(EviError::StepIndex);
    }
    if let Some(&s) = goal.intersection(bad).next() {
        return Err(EviError::Overlap(s));
    }
    let n = model.n_states;
    let goal_v = membership(n, goal);
    let bad_v = membership(n, bad);
    let sweeper = Sweeper::new(model, goal_v.clone(), bad_v.clone(), *opts);
    let tol = 1.0 / (2.0 * t_k as f64);
    let mut values: Vec<f64> = goal_v.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let (backup, _, _) = sweeper.sweep(&values, false);
        residual = backup
            .values
            .iter()
            .zip(&values)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        values = backup.values;
        if residual > tol {
            continue;
        }
        // candidate stop: extract the policy on the current values
        let (backup, all_rows, all_q) = sweeper.sweep(&values, true);
        let (policy, rows) = attractor_policy(&backup, &all_rows, &all_q, &goal_v, &bad_v);
        let hit = hitting_times(&redirect_rows(&rows, bad, init), goal)?;
        let init_ok = hit[init].is_finite();
        let bounded = hit.iter().all(|&h| !h.is_finite() || h <= lambda);
        if (init_ok && bounded) || (!init_ok && residual <= CONVERGED) {
            // the sweep residual can understate the distance to the fixpoint on
            // slowly mixing chains; the extracted policy's exact value is a
            // lower bound as well, so keep the larger of the two
            let exact = reach_probabilities(&rows, goal, bad)?;
            for (v, e) in values.iter_mut().zip(exact) {
                *v = v.max(e);
            }
            return Ok(EviSolution {
                values,
                policy,
                rows,
                hit,
                iterations: sweep,
                residual,
                init_unreachable: !init_ok,
            });
        }
    }
    Err(EviError::SweepCap {
        sweeps: opts.max_sweeps,
        residual,
    })
}
