//! Finite MDPs, induced Markov chains, positional policies and the
//! underlying transition graph.
//!
//! States and actions are dense indices into name tables. The kernel is stored
//! densely, one probability row per `(state, action)` pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("negative or non-finite probability {prob} at ({state}, {action}, {next})")]
    BadProbability {
        state: String,
        action: String,
        next: String,
        prob: f64,
    },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown proposition `{0}`")]
    UnknownProp(String),
    #[error("state index {0} out of range")]
    StateIndex(usize),
    #[error("action index {0} out of range")]
    ActionIndex(usize),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("duplicate transition ({0}, {1}, {2})")]
    DuplicateTransition(String, String, String),
    #[error("too many propositions ({0}, at most 64 supported)")]
    TooManyProps(usize),
    #[error("policy covers {got} states, model has {expected}")]
    PartialPolicy { expected: usize, got: usize },
    #[error("invalid probability literal `{0}`")]
    ProbLiteral(String),
    #[error("model must have at least one state and one action")]
    Empty,
    #[error("malformed model file: {0}")]
    Json(String),
}

/// A set of atomic propositions, as a bitset over a declared proposition order.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Letter(pub u64);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn contains(self, prop: usize) -> bool {
        prop < 64 && self.0 & (1u64 << prop) != 0
    }

    pub fn with(self, prop: usize) -> Letter {
        Letter(self.0 | (1u64 << prop))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&i| self.contains(i))
    }
}

/// Finite MDP with a labelled state space.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    kernel: Vec<f64>,
    init: usize,
    props: Vec<String>,
    labels: Vec<Letter>,
}

/// Outcome of a successful validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    /// Smallest strictly positive transition probability in the kernel.
    pub p_min: f64,
}

/// Mutable, unvalidated model under construction.
#[derive(Clone, Debug)]
pub struct MdpBuilder {
    state_names: Vec<String>,
    action_names: Vec<String>,
    kernel: Vec<f64>,
    init: usize,
    props: Vec<String>,
    labels: Vec<Letter>,
}

impl MdpBuilder {
    /// Builder with generated names `s0..`, `a0..`, all-zero kernel and init 0.
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self::with_names(
            (0..n_states).map(|i| format!("s{i}")).collect(),
            (0..n_actions).map(|i| format!("a{i}")).collect(),
        )
    }

    pub fn with_names(state_names: Vec<String>, action_names: Vec<String>) -> Self {
        let n = state_names.len();
        let m = action_names.len();
        MdpBuilder {
            state_names,
            action_names,
            kernel: vec![0.0; n * m * n],
            init: 0,
            props: Vec::new(),
            labels: vec![Letter::EMPTY; n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn set(&mut self, s: usize, a: usize, next: usize, p: f64) -> &mut Self {
        let n = self.n_states();
        let m = self.n_actions();
        assert!(s < n && next < n && a < m, "transition index out of range");
        self.kernel[(s * m + a) * n + next] = p;
        self
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let n = self.n_states();
        let m = self.n_actions();
        let start = (s * m + a) * n;
        &mut self.kernel[start..start + n]
    }

    pub fn init(&mut self, s: usize) -> &mut Self {
        self.init = s;
        self
    }

    pub fn props<S: Into<String>>(&mut self, props: impl IntoIterator<Item = S>) -> &mut Self {
        self.props = props.into_iter().map(Into::into).collect();
        self
    }

    pub fn label(&mut self, s: usize, letter: Letter) -> &mut Self {
        self.labels[s] = letter;
        self
    }

    pub fn build(&self) -> Result<Mdp, MdpError> {
        let mdp = Mdp {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            kernel: self.kernel.clone(),
            init: self.init,
            props: self.props.clone(),
            labels: self.labels.clone(),
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn label(&self, s: usize) -> Letter {
        self.labels[s]
    }

    pub fn labels(&self) -> &[Letter] {
        &self.labels
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.state_names[s]
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.action_names[a]
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn prop_index(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p == name)
    }

    /// States whose label contains `prop`.
    pub fn states_with(&self, prop: usize) -> BTreeSet<usize> {
        (0..self.n_states())
            .filter(|&s| self.labels[s].contains(prop))
            .collect()
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let start = (s * self.n_actions() + a) * n;
        &self.kernel[start..start + n]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// Copy into a builder, e.g. to derive a modified model.
    pub fn to_builder(&self) -> MdpBuilder {
        MdpBuilder {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            kernel: self.kernel.clone(),
            init: self.init,
            props: self.props.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Checks every model invariant and reports the realized minimum positive
    /// transition probability.
    pub fn validate(&self) -> Result<Validation, MdpError> {
        let n = self.n_states();
        let m = self.n_actions();
        if n == 0 || m == 0 {
            return Err(MdpError::Empty);
        }
        if self.kernel.len() != n * m * n || self.labels.len() != n {
            return Err(MdpError::Json(
                "kernel or label table has the wrong size".into(),
            ));
        }
        if self.init >= n {
            return Err(MdpError::StateIndex(self.init));
        }
        if self.props.len() > 64 {
            return Err(MdpError::TooManyProps(self.props.len()));
        }
        check_unique(&self.state_names)?;
        check_unique(&self.action_names)?;
        check_unique(&self.props)?;
        let declared = if self.props.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.props.len()) - 1
        };
        for letter in &self.labels {
            if letter.0 & !declared != 0 {
                let bad = letter.0 & !declared;
                return Err(MdpError::UnknownProp(format!("#{}", bad.trailing_zeros())));
            }
        }
        let mut p_min = f64::INFINITY;
        for s in 0..n {
            for a in 0..m {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        return Err(MdpError::BadProbability {
                            state: self.state_names[s].clone(),
                            action: self.action_names[a].clone(),
                            next: self.state_names[next].clone(),
                            prob: p,
                        });
                    }
                    if p > 0.0 {
                        p_min = p_min.min(p);
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(MdpError::RowSum {
                        state: self.state_names[s].clone(),
                        action: self.action_names[a].clone(),
                        sum,
                    });
                }
            }
        }
        Ok(Validation { p_min })
    }

    /// Draws a successor of `(s, a)` using exactly one uniform draw from `rng`.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize, MdpError> {
        if s >= self.n_states() {
            return Err(MdpError::StateIndex(s));
        }
        if a >= self.n_actions() {
            return Err(MdpError::ActionIndex(a));
        }
        let u: f64 = rng.gen();
        Ok(sample_row(self.row(s, a), u))
    }

    /// Fixes a positional policy, yielding the induced Markov chain.
    pub fn induce_dtmc(&self, policy: &Policy) -> Result<Dtmc, MdpError> {
        self.check_policy(policy)?;
        let n = self.n_states();
        let mut matrix = Vec::with_capacity(n * n);
        for s in 0..n {
            matrix.extend_from_slice(self.row(s, policy.action(s)));
        }
        Ok(Dtmc {
            n,
            matrix,
            init: self.init,
        })
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<(), MdpError> {
        if policy.len() != self.n_states() {
            return Err(MdpError::PartialPolicy {
                expected: self.n_states(),
                got: policy.len(),
            });
        }
        if let Some(&a) = policy.choices().iter().find(|&&a| a >= self.n_actions()) {
            return Err(MdpError::ActionIndex(a));
        }
        Ok(())
    }

    pub fn underlying_graph(&self) -> Graph {
        let n = self.n_states();
        let m = self.n_actions();
        let mut succ = Vec::with_capacity(n * m);
        for s in 0..n {
            for a in 0..m {
                succ.push(
                    self.row(s, a)
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(t, _)| t)
                        .collect(),
                );
            }
        }
        Graph {
            n_states: n,
            n_actions: m,
            succ,
        }
    }

    /// Replaces every row of a blocked state by a point mass on itself.
    pub fn make_absorbing(&self, blocked: &BTreeSet<usize>) -> Result<Mdp, MdpError> {
        let n = self.n_states();
        if let Some(&bad) = blocked.iter().find(|&&s| s >= n) {
            return Err(MdpError::StateIndex(bad));
        }
        let mut out = self.clone();
        let m = self.n_actions();
        for &s in blocked {
            for a in 0..m {
                let start = (s * m + a) * n;
                let row = &mut out.kernel[start..start + n];
                row.iter_mut().for_each(|p| *p = 0.0);
                row[s] = 1.0;
            }
        }
        Ok(out)
    }

    pub(crate) fn from_parts(
        state_names: Vec<String>,
        action_names: Vec<String>,
        kernel: Vec<f64>,
        init: usize,
        props: Vec<String>,
        labels: Vec<Letter>,
    ) -> Result<Mdp, MdpError> {
        let mdp = Mdp {
            state_names,
            action_names,
            kernel,
            init,
            props,
            labels,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Same model with a new proposition table and labelling.
    pub fn relabel(&self, props: Vec<String>, labels: Vec<Letter>) -> Result<Mdp, MdpError> {
        Mdp::from_parts(
            self.state_names.clone(),
            self.action_names.clone(),
            self.kernel.clone(),
            self.init,
            props,
            labels,
        )
    }
}

fn check_unique(names: &[String]) -> Result<(), MdpError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(MdpError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// Inverse-CDF lookup of `u ∈ [0,1)` in a probability row.
pub(crate) fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u just above the accumulated mass
    last
}

/// Deterministic positional policy: one action per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(choice: Vec<usize>) -> Self {
        Policy(choice)
    }

    pub fn constant(n_states: usize, action: usize) -> Self {
        Policy(vec![action; n_states])
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }
}

/// Discrete-time Markov chain over dense states `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtmc {
    n: usize,
    matrix: Vec<f64>,
    init: usize,
}

impl Dtmc {
    pub fn new(n: usize, matrix: Vec<f64>, init: usize) -> Result<Dtmc, MdpError> {
        if matrix.len() != n * n {
            return Err(MdpError::Json(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                n * n
            )));
        }
        if init >= n {
            return Err(MdpError::StateIndex(init));
        }
        for s in 0..n {
            let row = &matrix[s * n..(s + 1) * n];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(MdpError::BadProbability {
                    state: format!("{s}"),
                    action: "-".into(),
                    next: "?".into(),
                    prob: row
                        .iter()
                        .cloned()
                        .find(|p| !p.is_finite() || *p < 0.0)
                        .unwrap_or(f64::NAN),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::RowSum {
                    state: format!("{s}"),
                    action: "-".into(),
                    sum,
                });
            }
        }
        Ok(Dtmc { n, matrix, init })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.matrix[s * self.n..(s + 1) * self.n]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Makes every state of `bad` jump to `init` with probability one.
    pub fn redirect_to_init(&self, bad: &BTreeSet<usize>, init: usize) -> Result<Dtmc, MdpError> {
        let n = self.n;
        if init >= n {
            return Err(MdpError::StateIndex(init));
        }
        if let Some(&s) = bad.iter().find(|&&s| s >= n) {
            return Err(MdpError::StateIndex(s));
        }
        let mut matrix = self.matrix.clone();
        for &s in bad {
            let row = &mut matrix[s * n..(s + 1) * n];
            row.iter_mut().for_each(|p| *p = 0.0);
            row[init] = 1.0;
        }
        Ok(Dtmc {
            n,
            matrix,
            init: self.init,
        })
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        sample_row(self.row(s), u)
    }
}

/// Edge set `{(s, a, s') : T(s, a, s') > 0}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n_states: usize,
    n_actions: usize,
    succ: Vec<Vec<usize>>,
}

impl Graph {
    /// Empty graph (no edges) over the given dimensions.
    pub fn empty(n_states: usize, n_actions: usize) -> Self {
        Graph {
            n_states,
            n_actions,
            succ: vec![Vec::new(); n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn successors(&self, s: usize, a: usize) -> &[usize] {
        &self.succ[s * self.n_actions + a]
    }

    pub fn contains(&self, s: usize, a: usize, next: usize) -> bool {
        self.successors(s, a).binary_search(&next).is_ok()
    }

    pub fn insert(&mut self, s: usize, a: usize, next: usize) -> bool {
        let list = &mut self.succ[s * self.n_actions + a];
        match list.binary_search(&next) {
            Ok(_) => false,
            Err(pos) => {
                list.insert(pos, next);
                true
            }
        }
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n_states).flat_map(move |s| {
            (0..self.n_actions)
                .flat_map(move |a| self.successors(s, a).iter().map(move |&t| (s, a, t)))
        })
    }

    /// Successors of `s` under any action, deduplicated.
    pub fn post(&self, s: usize) -> BTreeSet<usize> {
        (0..self.n_actions)
            .flat_map(|a| self.successors(s, a).iter().copied())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProbLiteral {
    Num(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    states: Vec<String>,
    actions: Vec<String>,
    init: String,
    #[serde(default)]
    props: Vec<String>,
    #[serde(default)]
    labels: BTreeMap<String, Vec<String>>,
    transitions: Vec<(String, String, String, ProbLiteral)>,
}

impl Mdp {
    pub fn from_json(text: &str) -> Result<Mdp, MdpError> {
        let file: MdpFile =
            serde_json::from_str(text).map_err(|e| MdpError::Json(e.to_string()))?;
        let index = |names: &[String]| -> BTreeMap<String, usize> {
            names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect()
        };
        check_unique(&file.states)?;
        check_unique(&file.actions)?;
        check_unique(&file.props)?;
        if file.props.len() > 64 {
            return Err(MdpError::TooManyProps(file.props.len()));
        }
        let states = index(&file.states);
        let actions = index(&file.actions);
        let props = index(&file.props);
        let mut b = MdpBuilder::with_names(file.states.clone(), file.actions.clone());
        let init = *states
            .get(&file.init)
            .ok_or_else(|| MdpError::UnknownState(file.init.clone()))?;
        b.init(init).props(file.props.iter().cloned());
        for (state, names) in &file.labels {
            let s = *states
                .get(state)
                .ok_or_else(|| MdpError::UnknownState(state.clone()))?;
            let mut letter = Letter::EMPTY;
            for p in names {
                let i = *props
                    .get(p)
                    .ok_or_else(|| MdpError::UnknownProp(p.clone()))?;
                letter = letter.with(i);
            }
            b.label(s, letter);
        }
        let mut seen = BTreeSet::new();
        for (s, a, t, p) in &file.transitions {
            let si = *states
                .get(s)
                .ok_or_else(|| MdpError::UnknownState(s.clone()))?;
            let ai = *actions
                .get(a)
                .ok_or_else(|| MdpError::UnknownAction(a.clone()))?;
            let ti = *states
                .get(t)
                .ok_or_else(|| MdpError::UnknownState(t.clone()))?;
            if !seen.insert((si, ai, ti)) {
                return Err(MdpError::DuplicateTransition(
                    s.clone(),
                    a.clone(),
                    t.clone(),
                ));
            }
            let prob = match p {
                ProbLiteral::Num(x) => *x,
                ProbLiteral::Text(txt) => parse_prob(txt)?,
            };
            b.set(si, ai, ti, prob);
        }
        b.build()
    }

    pub fn to_json(&self) -> String {
        let mut labels = BTreeMap::new();
        for s in 0..self.n_states() {
            let letter = self.labels[s];
            if letter != Letter::EMPTY {
                labels.insert(
                    self.state_names[s].clone(),
                    letter.iter().map(|i| self.props[i].clone()).collect(),
                );
            }
        }
        let mut transitions = Vec::new();
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                for (t, &p) in self.row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        transitions.push((
                            self.state_names[s].clone(),
                            self.action_names[a].clone(),
                            self.state_names[t].clone(),
                            ProbLiteral::Num(p),
                        ));
                    }
                }
            }
        }
        let file = MdpFile {
            states: self.state_names.clone(),
            actions: self.action_names.clone(),
            init: self.state_names[self.init].clone(),
            props: self.props.clone(),
            labels,
            transitions,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }
}

/// Accepts decimal strings (`"0.25"`) and simple fractions (`"1/4"`).
fn parse_prob(text: &str) -> Result<f64, MdpError> {
    let t = text.trim();
    let bad = || MdpError::ProbLiteral(text.to_string());
    if let Some((num, den)) = t.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| bad())?;
        let d: f64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0.0 {
            return Err(bad());
        }
        Ok(n / d)
    } else {
        t.parse().map_err(|_| bad())
    }
}

impl fmt::Display for Mdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Mdp({} states, {} actions, init {})",
            self.n_states(),
            self.n_actions(),
            self.state_names[self.init]
        )
    }
}
