//! Product of a labelled MDP with a deterministic Rabin automaton.
//!
//! The product moves to `(s', δ(q, L(s')))` whenever the model moves to `s'`.
//! The initial product state is `(s_init, q_init)`: the label of the initial
//! model state is not read.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::dra::{Dra, DraError};
use crate::mdp::{Graph, Letter, Mdp, MdpError};

/// Propositions carried by product models.
pub const IN_GOAL: &str = "inG";
pub const IN_BAD: &str = "inB";

#[derive(Debug, Error)]
pub enum ProductError {
    #[error("automaton proposition `{0}` is not declared by the model")]
    PropMismatch(String),
    #[error(transparent)]
    Automaton(#[from] DraError),
    #[error(transparent)]
    Model(#[from] MdpError),
}

/// Product model with back-maps to `(model state, automaton state)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMdp {
    mdp: Mdp,
    origin: Vec<(usize, usize)>,
}

impl ProductMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    /// `(model state, automaton state)` behind product state `i`.
    pub fn origin(&self, i: usize) -> (usize, usize) {
        self.origin[i]
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origin
    }

    pub fn index_of(&self, s: usize, q: usize) -> Option<usize> {
        self.origin.iter().position(|&o| o == (s, q))
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    /// Keeps only states reachable from the initial state under some action.
    pub fn restrict_reachable(&self) -> ProductMdp {
        let graph = self.mdp.underlying_graph();
        let keep: Vec<usize> = crate::mec::reachable(&graph, self.mdp.init())
            .into_iter()
            .collect();
        self.restrict(&keep)
    }

    /// Sub-model on `keep`, which must be closed under every action.
    fn restrict(&self, keep: &[usize]) -> ProductMdp {
        let n = self.mdp.n_states();
        let mut new_index = vec![usize::MAX; n];
        for (i, &s) in keep.iter().enumerate() {
            new_index[s] = i;
        }
        let m = self.mdp.n_actions();
        let k = keep.len();
        let mut kernel = vec![0.0; k * m * k];
        for (i, &s) in keep.iter().enumerate() {
            for a in 0..m {
                for (t, &p) in self.mdp.row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        kernel[(i * m + a) * k + new_index[t]] = p;
                    }
                }
            }
        }
        let names = keep
            .iter()
            .map(|&s| self.mdp.state_name(s).to_string())
            .collect();
        let labels = keep.iter().map(|&s| self.mdp.label(s)).collect();
        let mdp = Mdp::from_parts(
            names,
            self.mdp.action_names().to_vec(),
            kernel,
            new_index[self.mdp.init()],
            self.mdp.props().to_vec(),
            labels,
        )
        .expect("closed restriction of a valid model is valid");
        ProductMdp {
            mdp,
            origin: keep.iter().map(|&s| self.origin[s]).collect(),
        }
    }

    /// Same product with `inG`/`inB` labels set from a goal/bad classification.
    pub fn labelled(&self, goal: &BTreeSet<usize>, bad: &BTreeSet<usize>) -> ProductMdp {
        let labels = (0..self.n_states())
            .map(|s| {
                let mut l = Letter::EMPTY;
                if goal.contains(&s) {
                    l = l.with(0);
                }
                if bad.contains(&s) {
                    l = l.with(1);
                }
                l
            })
            .collect();
        let mdp = self
            .mdp
            .relabel(vec![IN_GOAL.into(), IN_BAD.into()], labels)
            .expect("relabelling keeps the kernel valid");
        ProductMdp {
            mdp,
            origin: self.origin.clone(),
        }
    }
}

/// Maps each model label onto the automaton's proposition order.
pub fn project_labels(
    labels: &[Letter],
    model_props: &[String],
    dra: &Dra,
) -> Result<Vec<Letter>, ProductError> {
    let map: Vec<usize> = dra
        .props()
        .iter()
        .map(|p| {
            model_props
                .iter()
                .position(|m| m == p)
                .ok_or_else(|| ProductError::PropMismatch(p.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(labels
        .iter()
        .map(|&l| {
            map.iter()
                .enumerate()
                .fold(Letter::EMPTY, |acc, (i, &src)| {
                    if l.contains(src) {
                        acc.with(i)
                    } else {
                        acc
                    }
                })
        })
        .collect())
}

/// Full product over all `|S|·|Q|` pairs; state `(s, q)` has index `s·|Q| + q`.
pub fn product(mdp: &Mdp, dra: &Dra) -> Result<ProductMdp, ProductError> {
    let letters = project_labels(mdp.labels(), mdp.props(), dra)?;
    let n = mdp.n_states();
    let nq = dra.n_states();
    let m = mdp.n_actions();
    let total = n * nq;
    // successor automaton state for every (q, s')
    let mut next_q = vec![0; nq * n];
    for q in 0..nq {
        for t in 0..n {
            next_q[q * n + t] = dra.step(q, letters[t])?;
        }
    }
    let mut kernel = vec![0.0; total * m * total];
    for s in 0..n {
        for q in 0..nq {
            let from = s * nq + q;
            for a in 0..m {
                for (t, &p) in mdp.row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let to = t * nq + next_q[q * n + t];
                        kernel[(from * m + a) * total + to] = p;
                    }
                }
            }
        }
    }
    let mut names = Vec::with_capacity(total);
    let mut origin = Vec::with_capacity(total);
    for s in 0..n {
        for q in 0..nq {
            names.push(format!("({},q{q})", mdp.state_name(s)));
            origin.push((s, q));
        }
    }
    let init = mdp.init() * nq + dra.init();
    let product = Mdp::from_parts(
        names,
        mdp.action_names().to_vec(),
        kernel,
        init,
        vec![IN_GOAL.into(), IN_BAD.into()],
        vec![Letter::EMPTY; total],
    )?;
    Ok(ProductMdp {
        mdp: product,
        origin,
    })
}

/// Product of an edge set with an automaton: the structural counterpart of
/// [`product`], for when only the graph of the model is known. States are
/// the `(s, q)` pairs reachable from `(init, q_init)`.
pub fn product_graph(
    graph: &Graph,
    labels: &[Letter],
    model_props: &[String],
    init: usize,
    dra: &Dra,
) -> Result<(Graph, Vec<(usize, usize)>), ProductError> {
    let letters = project_labels(labels, model_props, dra)?;
    let m = graph.n_actions();
    let mut index = std::collections::HashMap::new();
    let mut origin = vec![(init, dra.init())];
    index.insert((init, dra.init()), 0usize);
    let mut queue = VecDeque::from([0usize]);
    let mut edges: Vec<Vec<Vec<usize>>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (s, q) = origin[i];
        if edges.len() <= i {
            edges.resize(i + 1, Vec::new());
        }
        let mut per_action = Vec::with_capacity(m);
        for a in 0..m {
            let mut succ = Vec::new();
            for &t in graph.successors(s, a) {
                let key = (t, dra.step(q, letters[t])?);
                let j = *index.entry(key).or_insert_with(|| {
                    origin.push(key);
                    queue.push_back(origin.len() - 1);
                    origin.len() - 1
                });
                succ.push(j);
            }
            per_action.push(succ);
        }
        edges[i] = per_action;
    }
    let mut g = Graph::empty(origin.len(), m);
    for (i, per_action) in edges.iter().enumerate() {
        for (a, succ) in per_action.iter().enumerate() {
            for &j in succ {
                g.insert(i, a, j);
            }
        }
    }
    Ok((g, origin))
}
