#![allow(dead_code)]

use std::collections::BTreeSet;

use ltl_regret::mdp::{Mdp, MdpBuilder};
use ltl_regret::rng::{child, Purpose, StreamRng};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn rng(seed: u64, index: u64) -> StreamRng {
    child(seed, Purpose::Test, index)
}

/// Random distribution over `support` with every entry at least `floor`.
pub fn random_row<R: Rng>(rng: &mut R, n: usize, support: &[usize], floor: f64) -> Vec<f64> {
    let w: Vec<f64> = support.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let spare = 1.0 - floor * support.len() as f64;
    let mut row = vec![0.0; n];
    for (&t, x) in support.iter().zip(&w) {
        row[t] = floor + spare * x / total;
    }
    // push rounding residue onto the largest entry
    let residue = 1.0 - row.iter().sum::<f64>();
    let top = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    row[top] += residue;
    row
}

pub fn random_support<R: Rng>(rng: &mut R, n: usize, max: usize) -> Vec<usize> {
    let k = rng.gen_range(1..=max.min(n));
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all.sort_unstable();
    all
}

/// Random MDP with sparse rows, every nonzero entry at least `floor`.
pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, m: usize, max_support: usize, floor: f64) -> Mdp {
    let mut b = MdpBuilder::new(n, m);
    for s in 0..n {
        for a in 0..m {
            let support = random_support(rng, n, max_support);
            let row = random_row(rng, n, &support, floor);
            b.row_mut(s, a).copy_from_slice(&row);
        }
    }
    b.build().unwrap()
}

/// Random Markov chain as dense rows.
pub fn random_chain<R: Rng>(rng: &mut R, n: usize, max_support: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let support = random_support(rng, n, max_support);
            random_row(rng, n, &support, 0.0)
        })
        .collect()
}

/// Disjoint random goal (nonempty) and bad sets.
pub fn random_sets<R: Rng>(rng: &mut R, n: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut goal = BTreeSet::new();
    let mut bad = BTreeSet::new();
    for s in 0..n {
        match rng.gen_range(0..4) {
            0 => {
                goal.insert(s);
            }
            1 => {
                bad.insert(s);
            }
            _ => {}
        }
    }
    if goal.is_empty() {
        let s = rng.gen_range(0..n);
        bad.remove(&s);
        goal.insert(s);
    }
    (goal, bad)
}

/// Fraction of `runs` Monte-Carlo walks from `start` that hit `goal` before
/// `bad`, with its standard error. Walks are cut after `cap` steps.
pub fn mc_reach<F: FnMut(usize, &mut StreamRng) -> usize>(
    mut step: F,
    start: usize,
    goal: &BTreeSet<usize>,
    bad: &BTreeSet<usize>,
    runs: u64,
    cap: usize,
    rng: &mut StreamRng,
) -> (f64, f64) {
    let mut hits = 0u64;
    for _ in 0..runs {
        let mut s = start;
        for _ in 0..cap {
            if goal.contains(&s) || bad.contains(&s) {
                break;
            }
            s = step(s, rng);
        }
        if goal.contains(&s) {
            hits += 1;
        }
    }
    let p = hits as f64 / runs as f64;
    (p, (p * (1.0 - p) / runs as f64).sqrt())
}

pub fn sample(row: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (t, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap()
}

/// `max p·values` over the simplex intersected with the L1 ball, by LP.
pub fn lp_inner_max(hat: &[f64], d: f64, values: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let p: Vec<_> = values.iter().map(|&v| lp.add_var(v, (0.0, 1.0))).collect();
    let e: Vec<_> = hat
        .iter()
        .map(|_| lp.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    for i in 0..hat.len() {
        lp.add_constraint(&[(e[i], 1.0), (p[i], -1.0)], ComparisonOp::Ge, -hat[i]);
        lp.add_constraint(&[(e[i], 1.0), (p[i], 1.0)], ComparisonOp::Ge, hat[i]);
    }
    let ones_e: Vec<_> = e.iter().map(|&x| (x, 1.0)).collect();
    lp.add_constraint(&ones_e, ComparisonOp::Le, d);
    let ones_p: Vec<_> = p.iter().map(|&x| (x, 1.0)).collect();
    lp.add_constraint(&ones_p, ComparisonOp::Eq, 1.0);
    lp.solve().expect("feasible: hat itself").objective()
}
