//! Deterministic Rabin automata over letters `2^AP`.
//!
//! Transitions are stored per automaton state as explicit `letter → successor`
//! entries plus an optional default successor covering every unlisted letter.
//!
//! Text format:
//!
//! ```text
//! # comment
//! States: 3
//! Start: 0
//! AP: 2 B G
//! Pairs: 1
//! Pair: {0 2} {1}
//! 0 01 1        # letter bits, character i is proposition i
//! 0 default 0
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::mdp::Letter;

/// Largest proposition count for which completeness may be shown by listing
/// every letter explicitly.
const MAX_ENUMERABLE_PROPS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DraError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: second transition for state {state} on letter {letter}")]
    Nondeterministic {
        line: usize,
        state: usize,
        letter: String,
    },
    #[error("state {state} has no successor for letter {letter}")]
    Incomplete { state: usize, letter: String },
    #[error("undeclared automaton state {0}")]
    UndeclaredState(usize),
    #[error("letter {0:#x} uses undeclared propositions")]
    UndeclaredLetter(u64),
    #[error("avoid and goal must be different propositions, both are `{0}`")]
    SameProposition(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RabinPair {
    /// states that must be visited only finitely often
    pub finite: BTreeSet<usize>,
    /// states of which some must be visited infinitely often
    pub infinite: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dra {
    n_states: usize,
    init: usize,
    props: Vec<String>,
    explicit: Vec<BTreeMap<Letter, usize>>,
    default: Vec<Option<usize>>,
    pairs: Vec<RabinPair>,
}

impl Dra {
    pub fn new(
        n_states: usize,
        init: usize,
        props: Vec<String>,
        explicit: Vec<BTreeMap<Letter, usize>>,
        default: Vec<Option<usize>>,
        pairs: Vec<RabinPair>,
    ) -> Result<Dra, DraError> {
        let dra = Dra {
            n_states,
            init,
            props,
            explicit,
            default,
            pairs,
        };
        dra.check()?;
        Ok(dra)
    }

    fn check(&self) -> Result<(), DraError> {
        let n = self.n_states;
        if n == 0 {
            return Err(DraError::Invalid("automaton has no states".into()));
        }
        if self.init >= n {
            return Err(DraError::UndeclaredState(self.init));
        }
        if self.props.len() > 64 {
            return Err(DraError::Invalid(format!(
                "{} propositions, at most 64 supported",
                self.props.len()
            )));
        }
        if self.explicit.len() != n || self.default.len() != n {
            return Err(DraError::Invalid(
                "transition table size differs from state count".into(),
            ));
        }
        for pair in &self.pairs {
            if let Some(&q) = pair.finite.iter().chain(&pair.infinite).find(|&&q| q >= n) {
                return Err(DraError::UndeclaredState(q));
            }
        }
        for q in 0..n {
            for (&letter, &next) in &self.explicit[q] {
                self.check_letter(letter)?;
                if next >= n {
                    return Err(DraError::UndeclaredState(next));
                }
            }
            match self.default[q] {
                Some(next) if next >= n => return Err(DraError::UndeclaredState(next)),
                Some(_) => {}
                None => self.check_listed_complete(q)?,
            }
        }
        Ok(())
    }

    fn check_listed_complete(&self, q: usize) -> Result<(), DraError> {
        let k = self.props.len();
        if k > MAX_ENUMERABLE_PROPS {
            return Err(DraError::Incomplete {
                state: q,
                letter: "default".into(),
            });
        }
        for bits in 0..(1u64 << k) {
            if !self.explicit[q].contains_key(&Letter(bits)) {
                return Err(DraError::Incomplete {
                    state: q,
                    letter: self.letter_bits(Letter(bits)),
                });
            }
        }
        Ok(())
    }

    fn check_letter(&self, letter: Letter) -> Result<(), DraError> {
        let k = self.props.len();
        if k < 64 && letter.0 >> k != 0 {
            return Err(DraError::UndeclaredLetter(letter.0));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn pairs(&self) -> &[RabinPair] {
        &self.pairs
    }

    /// Letter as a bit string, character `i` for proposition `i`.
    pub fn letter_bits(&self, letter: Letter) -> String {
        (0..self.props.len())
            .map(|i| if letter.contains(i) { '1' } else { '0' })
            .collect()
    }

    pub fn step(&self, q: usize, letter: Letter) -> Result<usize, DraError> {
        if q >= self.n_states {
            return Err(DraError::UndeclaredState(q));
        }
        self.check_letter(letter)?;
        Ok(self.explicit[q]
            .get(&letter)
            .copied()
            .or(self.default[q])
            .expect("validated automata are complete"))
    }

    /// Rabin acceptance of the ultimately periodic word `prefix · cycle^ω`.
    pub fn accepts_lasso(&self, prefix: &[Letter], cycle: &[Letter]) -> Result<bool, DraError> {
        if cycle.is_empty() {
            return Err(DraError::Invalid("lasso cycle must be nonempty".into()));
        }
        let mut q = self.init;
        for &l in prefix {
            q = self.step(q, l)?;
        }
        // run whole cycle passes until the state at a pass boundary repeats
        let mut first_pass: HashMap<usize, usize> = HashMap::new();
        let mut passes: Vec<Vec<usize>> = Vec::new();
        while !first_pass.contains_key(&q) {
            first_pass.insert(q, passes.len());
            let mut visited = vec![q];
            for &l in cycle {
                q = self.step(q, l)?;
                visited.push(q);
            }
            passes.push(visited);
        }
        let inf: BTreeSet<usize> = passes[first_pass[&q]..].iter().flatten().copied().collect();
        Ok(self.accepting_set(&inf))
    }

    /// Whether a set of automaton states, visited infinitely often, is accepting.
    pub fn accepting_set(&self, inf: &BTreeSet<usize>) -> bool {
        self.pairs
            .iter()
            .any(|p| p.finite.is_disjoint(inf) && !p.infinite.is_disjoint(inf))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "States: {}", self.n_states);
        let _ = writeln!(out, "Start: {}", self.init);
        let mut ap = format!("AP: {}", self.props.len());
        for p in &self.props {
            ap.push(' ');
            ap.push_str(p);
        }
        let _ = writeln!(out, "{ap}");
        let _ = writeln!(out, "Pairs: {}", self.pairs.len());
        let set = |s: &BTreeSet<usize>| {
            s.iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        for p in &self.pairs {
            let _ = writeln!(out, "Pair: {{{}}} {{{}}}", set(&p.finite), set(&p.infinite));
        }
        for q in 0..self.n_states {
            for (&letter, &next) in &self.explicit[q] {
                let _ = writeln!(out, "{q} {} {next}", self.letter_bits(letter));
            }
            if let Some(next) = self.default[q] {
                let _ = writeln!(out, "{q} default {next}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dra, DraError> {
        parse_dra_file(text)
    }
}

/// Three-state automaton for `!avoid U goal` over the propositions `[avoid, goal]`.
///
/// State 0 waits, state 1 accepts and state 2 rejects. A letter holding the
/// goal wins even when it also holds the avoid proposition.
pub fn reach_avoid_to_dra(avoid: &str, goal: &str) -> Result<Dra, DraError> {
    if avoid == goal {
        return Err(DraError::SameProposition(avoid.to_string()));
    }
    const WAIT: usize = 0;
    const ACCEPT: usize = 1;
    const REJECT: usize = 2;
    let (avoid_bit, goal_bit) = (0, 1);
    let mut explicit = vec![BTreeMap::new(); 3];
    for bits in 0..4u64 {
        let letter = Letter(bits);
        let from_wait = if letter.contains(goal_bit) {
            ACCEPT
        } else if letter.contains(avoid_bit) {
            REJECT
        } else {
            WAIT
        };
        explicit[WAIT].insert(letter, from_wait);
        explicit[ACCEPT].insert(letter, ACCEPT);
        explicit[REJECT].insert(letter, REJECT);
    }
    Dra::new(
        3,
        WAIT,
        vec![avoid.to_string(), goal.to_string()],
        explicit,
        vec![None; 3],
        vec![RabinPair {
            finite: [WAIT, REJECT].into(),
            infinite: [ACCEPT].into(),
        }],
    )
}

pub fn parse_dra_file(text: &str) -> Result<Dra, DraError> {
    let syntax = |line: usize, msg: &str| DraError::Syntax {
        line,
        msg: msg.to_string(),
    };
    let mut n_states: Option<usize> = None;
    let mut init: Option<usize> = None;
    let mut props: Option<Vec<String>> = None;
    let mut n_pairs: Option<usize> = None;
    let mut pairs = Vec::new();
    let mut explicit: Vec<BTreeMap<Letter, usize>> = Vec::new();
    let mut default: Vec<Option<usize>> = Vec::new();
    let mut in_body = false;

    let parse_num = |tok: &str, line: usize| -> Result<usize, DraError> {
        tok.parse::<usize>()
            .map_err(|_| syntax(line, &format!("expected a number, found `{tok}`")))
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some((key, rest)) = content.split_once(':') {
            if in_body {
                return Err(syntax(line, "header after transition lines"));
            }
            let rest = rest.trim();
            match key.trim() {
                "States" => n_states = Some(parse_num(rest, line)?),
                "Start" => init = Some(parse_num(rest, line)?),
                "AP" => {
                    let mut toks = rest.split_whitespace();
                    let k = parse_num(
                        toks.next()
                            .ok_or_else(|| syntax(line, "missing AP count"))?,
                        line,
                    )?;
                    let names: Vec<String> = toks.map(str::to_string).collect();
                    if names.len() != k {
                        return Err(syntax(
                            line,
                            &format!("AP declares {k} names, found {}", names.len()),
                        ));
                    }
                    props = Some(names);
                }
                "Pairs" => n_pairs = Some(parse_num(rest, line)?),
                "Pair" => {
                    let n = n_states.ok_or_else(|| syntax(line, "Pair before States"))?;
                    let sets =
                        parse_pair_sets(rest).ok_or_else(|| syntax(line, "expected `{J} {K}`"))?;
                    let mut parsed = Vec::new();
                    for set in sets {
                        let mut out = BTreeSet::new();
                        for tok in set.split_whitespace() {
                            let q = parse_num(tok, line)?;
                            if q >= n {
                                return Err(DraError::UndeclaredState(q));
                            }
                            out.insert(q);
                        }
                        parsed.push(out);
                    }
                    let infinite = parsed.pop().expect("two sets");
                    let finite = parsed.pop().expect("two sets");
                    pairs.push(RabinPair { finite, infinite });
                }
                other => return Err(syntax(line, &format!("unknown header `{other}`"))),
            }
            continue;
        }
        // transition line
        let n = n_states.ok_or_else(|| syntax(line, "transition before States"))?;
        let ap = props
            .as_ref()
            .ok_or_else(|| syntax(line, "transition before AP"))?;
        if !in_body {
            in_body = true;
            explicit = vec![BTreeMap::new(); n];
            default = vec![None; n];
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(syntax(line, "expected `state letter successor`"));
        }
        let q = parse_num(toks[0], line)?;
        let next = parse_num(toks[2], line)?;
        for s in [q, next] {
            if s >= n {
                return Err(DraError::UndeclaredState(s));
            }
        }
        if toks[1] == "default" {
            if default[q].is_some() {
                return Err(DraError::Nondeterministic {
                    line,
                    state: q,
                    letter: "default".into(),
                });
            }
            default[q] = Some(next);
            continue;
        }
        let bits = toks[1];
        if bits.len() != ap.len() || !bits.chars().all(|c| c == '0' || c == '1') {
            return Err(syntax(
                line,
                &format!("letter `{bits}` must be {} characters of 0/1", ap.len()),
            ));
        }
        let letter =
            bits.chars().enumerate().fold(
                Letter::EMPTY,
                |l, (i, c)| if c == '1' { l.with(i) } else { l },
            );
        if explicit[q].insert(letter, next).is_some() {
            return Err(DraError::Nondeterministic {
                line,
                state: q,
                letter: bits.to_string(),
            });
        }
    }

    let n = n_states.ok_or_else(|| syntax(0, "missing States header"))?;
    let init = init.ok_or_else(|| syntax(0, "missing Start header"))?;
    let props = props.ok_or_else(|| syntax(0, "missing AP header"))?;
    if let Some(m) = n_pairs {
        if m != pairs.len() {
            return Err(syntax(
                0,
                &format!("Pairs declares {m}, found {}", pairs.len()),
            ));
        }
    }
    if !in_body {
        explicit = vec![BTreeMap::new(); n];
        default = vec![None; n];
    }
    Dra::new(n, init, props, explicit, default, pairs)
}

/// Splits `{a b} {c}` into the two brace contents.
fn parse_pair_sets(text: &str) -> Option<[String; 2]> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    for _ in 0..2 {
        rest = rest.strip_prefix('{')?;
        let close = rest.find('}')?;
        out.push(rest[..close].to_string());
        rest = rest[close + 1..].trim_start();
    }
    if !rest.is_empty() {
        return None;
    }
    let b = out.pop()?;
    let a = out.pop()?;
    Some([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: Letter = Letter(0b01);
    const G: Letter = Letter(0b10);
    const BG: Letter = Letter(0b11);
    const NONE: Letter = Letter::EMPTY;

    #[test]
    fn reach_avoid_table() {
        let d = reach_avoid_to_dra("B", "G").unwrap();
        // (from, letter, to) for all 12 combinations, enumerated by hand
        let table = [
            (0, NONE, 0),
            (0, B, 2),
            (0, G, 1),
            (0, BG, 1),
            (1, NONE, 1),
            (1, B, 1),
            (1, G, 1),
            (1, BG, 1),
            (2, NONE, 2),
            (2, B, 2),
            (2, G, 2),
            (2, BG, 2),
        ];
        for (q, l, want) in table {
            assert_eq!(d.step(q, l).unwrap(), want, "delta({q}, {l:?})");
        }
        assert_eq!(d.pairs()[0].finite, [0, 2].into());
        assert_eq!(d.pairs()[0].infinite, [1].into());
        assert!(reach_avoid_to_dra("B", "B").is_err());
    }

    #[test]
    fn reach_avoid_words() {
        let d = reach_avoid_to_dra("B", "G").unwrap();
        assert!(d.accepts_lasso(&[G], &[NONE]).unwrap());
        assert!(!d.accepts_lasso(&[B], &[G]).unwrap());
        assert!(!d.accepts_lasso(&[], &[NONE]).unwrap());
        assert!(d.accepts_lasso(&[NONE, NONE], &[NONE, G]).unwrap());
    }

    #[test]
    fn universal_one_state_automaton() {
        let text = "States: 1\nStart: 0\nAP: 1 p\nPairs: 1\nPair: {} {0}\n0 default 0\n";
        let d = parse_dra_file(text).unwrap();
        assert!(d.accepts_lasso(&[], &[NONE]).unwrap());
        assert!(d.accepts_lasso(&[Letter(1)], &[NONE, Letter(1)]).unwrap());
    }

    #[test]
    fn duplicate_rule_is_nondeterministic() {
        let text = "States: 1\nStart: 0\nAP: 1 p\nPairs: 0\n0 1 0\n0 1 0\n0 default 0\n";
        assert_eq!(
            parse_dra_file(text),
            Err(DraError::Nondeterministic {
                line: 6,
                state: 0,
                letter: "1".into()
            })
        );
        let text = "States: 1\nStart: 0\nAP: 1 p\nPairs: 0\n0 default 0\n0 default 0\n";
        assert!(matches!(
            parse_dra_file(text),
            Err(DraError::Nondeterministic { line: 6, .. })
        ));
    }

    #[test]
    fn missing_letters_are_incomplete() {
        let text = "States: 1\nStart: 0\nAP: 1 p\nPairs: 0\n0 1 0\n";
        assert_eq!(
            parse_dra_file(text),
            Err(DraError::Incomplete {
                state: 0,
                letter: "0".into()
            })
        );
    }

    #[test]
    fn pair_with_undeclared_state() {
        let text = "States: 2\nStart: 0\nAP: 0\nPairs: 1\nPair: {0} {5}\n";
        assert_eq!(parse_dra_file(text), Err(DraError::UndeclaredState(5)));
    }

    #[test]
    fn syntax_errors_have_line_numbers() {
        let text = "States: 1\n# fine\nStart: x\n";
        assert!(matches!(
            parse_dra_file(text),
            Err(DraError::Syntax { line: 3, .. })
        ));
        let text = "States: 1\nStart: 0\nAP: 1 p\n0 11 0\n";
        assert!(matches!(
            parse_dra_file(text),
            Err(DraError::Syntax { line: 4, .. })
        ));
    }

    #[test]
    fn serialize_round_trip() {
        let d = reach_avoid_to_dra("B", "G").unwrap();
        assert_eq!(parse_dra_file(&d.to_text()).unwrap(), d);
        let text = "States: 2\nStart: 1\nAP: 2 a b\nPairs: 2\nPair: {0} {1}\nPair: {} {0 1}\n\
                    0 10 1\n0 default 0\n1 default 1\n";
        let d = parse_dra_file(text).unwrap();
        assert_eq!(parse_dra_file(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let d = reach_avoid_to_dra("B", "G").unwrap();
        assert_eq!(d.step(7, NONE), Err(DraError::UndeclaredState(7)));
        assert_eq!(d.step(0, Letter(0b100)), Err(DraError::UndeclaredLetter(4)));
        assert_eq!(d.step(1, B).unwrap(), 1);
        assert_eq!(d.step(0, G), d.step(0, G));
    }
}
