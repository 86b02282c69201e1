//! Maximal end components, accepting-component classification and graph
//! reachability.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::dra::Dra;
use crate::mdp::Graph;

/// One maximal end component with the actions that keep it closed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mec {
    pub states: BTreeSet<usize>,
    pub actions: BTreeMap<usize, BTreeSet<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MecDecomposition {
    pub mecs: Vec<Mec>,
    /// MEC index of every state, if any
    pub membership: Vec<Option<usize>>,
}

/// Strongly connected components of the graph restricted to `active` states
/// and the `enabled` actions of each. Returns a component id per state
/// (`usize::MAX` for inactive states).
fn scc(graph: &Graph, active: &[bool], enabled: &[Vec<usize>]) -> Vec<usize> {
    let n = graph.n_states();
    let succ = |s: usize| -> Vec<usize> {
        let mut out: Vec<usize> = enabled[s]
            .iter()
            .flat_map(|&a| graph.successors(s, a).iter().copied())
            .filter(|&t| active[t])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| if active[s] { succ(s) } else { Vec::new() })
        .collect();

    // iterative Tarjan
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if !active[root] || index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Maximal end-component decomposition by iterated SCC refinement.
pub fn mec_decompose(graph: &Graph) -> MecDecomposition {
    let n = graph.n_states();
    let m = graph.n_actions();
    let mut active = vec![true; n];
    let mut enabled: Vec<Vec<usize>> = (0..n).map(|_| (0..m).collect()).collect();
    let comp = loop {
        let comp = scc(graph, &active, &enabled);
        let mut changed = false;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            let before = enabled[s].len();
            enabled[s].retain(|&a| {
                graph
                    .successors(s, a)
                    .iter()
                    .all(|&t| active[t] && comp[t] == comp[s])
            });
            if enabled[s].len() != before {
                changed = true;
            }
            if enabled[s].is_empty() {
                active[s] = false;
                changed = true;
            }
        }
        if !changed {
            break comp;
        }
    };
    let mut by_comp: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in (0..n).filter(|&s| active[s]) {
        by_comp.entry(comp[s]).or_default().push(s);
    }
    let mut mecs: Vec<Mec> = by_comp
        .into_values()
        .map(|states| Mec {
            actions: states
                .iter()
                .map(|&s| (s, enabled[s].iter().copied().collect()))
                .collect(),
            states: states.into_iter().collect(),
        })
        .collect();
    mecs.sort_by_key(|mec| *mec.states.iter().next().expect("nonempty component"));
    let mut membership = vec![None; n];
    for (i, mec) in mecs.iter().enumerate() {
        for &s in &mec.states {
            membership[s] = Some(i);
        }
    }
    MecDecomposition { mecs, membership }
}

/// Splits MEC states of a product into accepting (`goal`) and the rest (`bad`).
///
/// `origins[i]` is the `(model state, automaton state)` pair of product state `i`.
pub fn classify_mecs(
    origins: &[(usize, usize)],
    dra: &Dra,
    decomp: &MecDecomposition,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut goal = BTreeSet::new();
    let mut bad = BTreeSet::new();
    for mec in &decomp.mecs {
        let qs: BTreeSet<usize> = mec.states.iter().map(|&s| origins[s].1).collect();
        if dra.accepting_set(&qs) {
            goal.extend(mec.states.iter().copied());
        } else {
            bad.extend(mec.states.iter().copied());
        }
    }
    (goal, bad)
}

/// States reachable from `from` under any actions, `from` included.
pub fn reachable(graph: &Graph, from: usize) -> BTreeSet<usize> {
    let mut seen = vec![false; graph.n_states()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(s) = queue.pop_front() {
        for a in 0..graph.n_actions() {
            for &t in graph.successors(s, a) {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    (0..graph.n_states()).filter(|&s| seen[s]).collect()
}

/// States with a path into `targets` under some choice of actions.
pub fn can_reach(graph: &Graph, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
    let n = graph.n_states();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, _, t) in graph.edges() {
        pred[t].push(s);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = targets.iter().copied().collect();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &s in &pred[t] {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    (0..n).filter(|&s| seen[s]).collect()
}

/// Shortest hop distance to `targets` under the best action, `u32::MAX` if none.
pub fn distance_to(graph: &Graph, targets: &BTreeSet<usize>) -> Vec<u32> {
    let n = graph.n_states();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, _, t) in graph.edges() {
        pred[t].push(s);
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for &t in targets {
        dist[t] = 0;
        queue.push_back(t);
    }
    while let Some(t) = queue.pop_front() {
        for &s in &pred[t] {
            if dist[s] == u32::MAX {
                dist[s] = dist[t] + 1;
                queue.push_back(s);
            }
        }
    }
    dist
}
