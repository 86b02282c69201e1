mod common;

use ltl_regret::dra::reach_avoid_to_dra;
use ltl_regret::envs::{gridworld, GridSpec};
use ltl_regret::learner::{run_learning, LearnConfig, Outcome};
use ltl_regret::metrics::theory_bound;
use ltl_regret::pipeline::{run_seed, Evaluator, GraphMode, RunSettings};
use ltl_regret::sim::MdpEnv;
use rand::Rng;

use common::*;

#[test]
fn episodes_respect_deadlines_and_counters() {
    for i in 0..20u64 {
        let mut rng = rng(50, i);
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=2);
        let mdp = random_mdp(&mut rng, n, m, n, 0.1);
        let (goal, bad) = random_sets(&mut rng, n);
        let mut env = MdpEnv::new(mdp);
        let mut cfg = LearnConfig::new(0.1, 0.1, 30, i);
        cfg.max_sweeps = 100_000;
        let run = run_learning(&mut env, &goal, &bad, &cfg).unwrap();
        assert_eq!(run.records.len(), 30);
        let mut t = 1;
        for (k, rec) in run.records.iter().enumerate() {
            assert_eq!(rec.k, k as u64 + 1);
            assert_eq!(rec.t_k, t, "episodes start where the previous one ended");
            assert!(rec.steps.len() as u64 <= rec.h_k + 1);
            assert!(rec.h_k >= 2);
            if rec.outcome == Outcome::ReachedG {
                let end = rec.steps.last().map_or(0, |st| st.next);
                assert!(goal.contains(&end));
            }
            for w in rec.steps.windows(2) {
                assert_eq!(w[0].next, w[1].state);
            }
            t += rec.steps.len() as u64;
        }
        assert_eq!(
            run.alpha(),
            run.records.iter().map(|r| r.h_k).max().unwrap()
        );
    }
}

#[test]
fn seeded_runs_are_reproducible() {
    let model = gridworld(&GridSpec::new(5)).unwrap();
    let dra = reach_avoid_to_dra("B", "G").unwrap();
    let eval = Evaluator::new(&model, &dra).unwrap();
    let settings = RunSettings {
        delta: 0.1,
        p_min: 0.1,
        episodes: 40,
        q: 2,
        graph: GraphMode::Known,
    };
    let a = run_seed(&model, &dra, &eval, &settings, 7).unwrap();
    let b = run_seed(&model, &dra, &eval, &settings, 7).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.trace, b.trace);
    for w in a.trace.regret.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "cumulative regret never drops");
    }
}

#[test]
fn learned_graph_pipeline_runs_end_to_end() {
    let model = gridworld(&GridSpec::new(4)).unwrap();
    let dra = reach_avoid_to_dra("B", "G").unwrap();
    let eval = Evaluator::new(&model, &dra).unwrap();
    let settings = RunSettings {
        delta: 0.1,
        p_min: 0.1,
        episodes: 20,
        q: 2,
        graph: GraphMode::Learn,
    };
    let run = run_seed(&model, &dra, &eval, &settings, 3).unwrap();
    assert!(run.graph_samples > 0);
    assert!(run.graph_complete);
    assert_eq!(run.trace.values.len(), 20);
    assert!(run
        .trace
        .values
        .iter()
        .all(|&v| (0.0..=eval.v_star() + 1e-9).contains(&v)));
}

#[test]
fn reported_alpha_respects_the_bound_cap() {
    let model = gridworld(&GridSpec::new(5)).unwrap();
    let dra = reach_avoid_to_dra("B", "G").unwrap();
    let eval = Evaluator::new(&model, &dra).unwrap();
    let settings = RunSettings {
        delta: 0.1,
        p_min: 0.1,
        episodes: 50,
        q: 2,
        graph: GraphMode::Known,
    };
    let run = run_seed(&model, &dra, &eval, &settings, 11).unwrap();
    let bound = theory_bound(50, run.learner_states, 4, 0.1, run.lambda, 2);
    assert!(run.alpha >= 2);
    if run.lambda.is_finite() {
        assert!(run.alpha as f64 <= bound.alpha_cap);
    }
}
