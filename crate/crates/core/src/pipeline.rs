//! End-to-end runs: automaton, graph, product, goal/bad classification,
//! learning and evaluation against the true model.
//!
//! The learner works on the product built from the edge set alone and talks
//! to the model through [`ProductEnv`]. The [`Evaluator`] holds the true
//! product and is never handed to the learner.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dra::{reach_avoid_to_dra, Dra};
use crate::error::Error;
use crate::graph_learn::{learn_graph, GraphLearnConfig};
use crate::learner::{run_learning, EpisodeRecord, LearnConfig};
use crate::ltl::parse_ltl;
use crate::mdp::{Graph, Letter, Mdp, MdpError, Policy};
use crate::mec::{can_reach, classify_mecs, mec_decompose};
use crate::metrics::{exact_reach_prob, policy_value, regret, RegretTrace};
use crate::product::{product, product_graph, project_labels, ProductMdp};
use crate::rng::{child, Purpose, StreamRng};
use crate::sim::{Environment, MdpEnv};

/// Where the objective comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SpecSource {
    ReachAvoid { avoid: String, goal: String },
    Ltl(String),
    Dra(Dra),
}

impl SpecSource {
    /// Parses `reach-avoid:B,G`.
    pub fn parse_reach_avoid(text: &str) -> Result<SpecSource, Error> {
        let body = text.strip_prefix("reach-avoid:").ok_or_else(|| {
            Error::Spec(format!("expected `reach-avoid:AVOID,GOAL`, got `{text}`"))
        })?;
        match body.split(',').map(str::trim).collect::<Vec<_>>()[..] {
            [avoid, goal] if !avoid.is_empty() && !goal.is_empty() => Ok(SpecSource::ReachAvoid {
                avoid: avoid.into(),
                goal: goal.into(),
            }),
            _ => Err(Error::Spec(format!(
                "expected two propositions in `{text}`"
            ))),
        }
    }

    pub fn automaton(&self) -> Result<Dra, Error> {
        match self {
            SpecSource::ReachAvoid { avoid, goal } => Ok(reach_avoid_to_dra(avoid, goal)?),
            SpecSource::Ltl(text) => {
                let f = parse_ltl(text)?;
                let (avoid, goal) = f.as_reach_avoid().ok_or_else(|| {
                    Error::Spec(format!("`{f}` is outside the supported fragment `!a U b`; supply an automaton file"))
                })?;
                Ok(reach_avoid_to_dra(avoid, goal)?)
            }
            SpecSource::Dra(d) => Ok(d.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    #[default]
    Known,
    Learn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub delta: f64,
    pub p_min: f64,
    pub episodes: u64,
    pub q: u32,
    pub graph: GraphMode,
}

/// Sampling handle on `model × automaton`, indexed like a learner-side
/// product. Reaching a pair the learner's product does not know is an error.
#[derive(Clone, Debug)]
pub struct ProductEnv {
    inner: MdpEnv,
    dra: Dra,
    letters: Vec<Letter>,
    index: HashMap<(usize, usize), usize>,
    origins: Vec<(usize, usize)>,
    state: usize,
    n_actions: usize,
}

impl ProductEnv {
    /// `origins[0]` must be `(model init, automaton init)`.
    pub fn new(model: &Mdp, dra: &Dra, origins: Vec<(usize, usize)>) -> Result<ProductEnv, Error> {
        let letters = project_labels(model.labels(), model.props(), dra)?;
        let index = origins.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        Ok(ProductEnv {
            inner: MdpEnv::new(model.clone()),
            dra: dra.clone(),
            letters,
            index,
            origins,
            state: 0,
            n_actions: model.n_actions(),
        })
    }
}

impl Environment for ProductEnv {
    fn n_states(&self) -> usize {
        self.origins.len()
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn init(&self) -> usize {
        0
    }

    fn current(&self) -> usize {
        self.state
    }

    fn reset(&mut self) {
        self.inner.reset();
        self.state = 0;
    }

    fn step(&mut self, a: usize, rng: &mut StreamRng) -> Result<usize, MdpError> {
        let (_, q) = self.origins[self.state];
        let s = self.inner.step(a, rng)?;
        let next_q = self
            .dra
            .step(q, self.letters[s])
            .map_err(|e| MdpError::UnknownState(format!("automaton step from q{q}: {e}")))?;
        self.state = *self.index.get(&(s, next_q)).ok_or_else(|| {
            MdpError::UnknownState(format!("(s{s},q{next_q}) is outside the learner's graph"))
        })?;
        Ok(self.state)
    }
}

/// Accepting MEC states and the states that cannot reach them.
pub fn goal_and_bad(
    graph: &Graph,
    origins: &[(usize, usize)],
    dra: &Dra,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let (goal, _) = classify_mecs(origins, dra, &mec_decompose(graph));
    let winning = can_reach(graph, &goal);
    let bad = (0..graph.n_states())
        .filter(|s| !winning.contains(s))
        .collect();
    (goal, bad)
}

/// Ground truth for one model and automaton.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub product: ProductMdp,
    pub goal: BTreeSet<usize>,
    pub bad: BTreeSet<usize>,
    pub values: Vec<f64>,
    pub optimal: Policy,
}

impl Evaluator {
    pub fn new(model: &Mdp, dra: &Dra) -> Result<Evaluator, Error> {
        let full = product(model, dra)?.restrict_reachable();
        let graph = full.mdp().underlying_graph();
        let (goal, bad) = goal_and_bad(&graph, full.origins(), dra);
        let product = full.labelled(&goal, &bad);
        let sol = exact_reach_prob(product.mdp(), &goal, &bad)?;
        Ok(Evaluator {
            product,
            goal,
            bad,
            values: sol.values,
            optimal: sol.policy,
        })
    }

    pub fn v_star(&self) -> f64 {
        self.values[self.product.mdp().init()]
    }

    /// True value at the start of a learner policy over `origins`. Pairs the
    /// learner does not know take action 0.
    pub fn value_of(&self, origins: &[(usize, usize)], policy: &Policy) -> Result<f64, Error> {
        let lookup: HashMap<(usize, usize), usize> = origins
            .iter()
            .enumerate()
            .map(|(i, &o)| (o, policy.action(i)))
            .collect();
        let mapped = Policy::new(
            self.product
                .origins()
                .iter()
                .map(|o| lookup.get(o).copied().unwrap_or(0))
                .collect(),
        );
        let v = policy_value(self.product.mdp(), &mapped, &self.goal, &self.bad)?;
        Ok(v[self.product.mdp().init()])
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub trace: RegretTrace,
    pub lambda: f64,
    pub lambda_overflow: bool,
    pub alpha: u64,
    pub learner_states: usize,
    /// environment steps spent on graph learning, 0 with a known graph
    pub graph_samples: u64,
    pub graph_complete: bool,
}

/// Learns on one seed and scores every episode policy against `eval`.
pub fn run_seed(
    model: &Mdp,
    dra: &Dra,
    eval: &Evaluator,
    settings: &RunSettings,
    seed: u64,
) -> Result<SeedRun, Error> {
    let (graph, graph_samples, graph_complete) = match settings.graph {
        GraphMode::Known => (model.underlying_graph(), 0, true),
        GraphMode::Learn => {
            let mut env = MdpEnv::new(model.clone());
            let mut rng = child(seed, Purpose::GraphLearning, 0);
            let est = learn_graph(
                &mut env,
                &GraphLearnConfig::new(settings.p_min, settings.delta),
                &mut rng,
            )?;
            (est.graph, est.samples_total, est.complete)
        }
    };
    let (pgraph, origins) =
        product_graph(&graph, model.labels(), model.props(), model.init(), dra)?;
    let (goal, bad) = goal_and_bad(&pgraph, &origins, dra);
    let mut env = ProductEnv::new(model, dra, origins.clone())?;
    let mut cfg = LearnConfig::new(settings.delta, settings.p_min, settings.episodes, seed);
    cfg.q = settings.q;
    cfg.graph = Some(pgraph);
    let run = run_learning(&mut env, &goal, &bad, &cfg)?;
    let values = run
        .records
        .iter()
        .map(|r| eval.value_of(&origins, &r.policy))
        .collect::<Result<Vec<f64>, Error>>()?;
    let trace = regret(&values, eval.v_star())?;
    Ok(SeedRun {
        seed,
        alpha: run.alpha(),
        records: run.records,
        trace,
        lambda: run.lambda,
        lambda_overflow: run.lambda_overflow,
        learner_states: origins.len(),
        graph_samples,
        graph_complete,
    })
}
