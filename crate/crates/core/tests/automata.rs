use ltl_regret::dra::{parse_dra_file, reach_avoid_to_dra};
use ltl_regret::ltl::parse_ltl;
use ltl_regret::mdp::{Letter, MdpBuilder};
use ltl_regret::pipeline::{goal_and_bad, Evaluator, SpecSource};
use ltl_regret::product::product;

const INF_OFTEN_P: &str = include_str!("data/inf_often_p.dra");

#[test]
fn goal_move_carries_the_model_probability() {
    let mut b = MdpBuilder::new(2, 1);
    b.props(["B", "G"]);
    b.set(0, 0, 0, 0.3).set(0, 0, 1, 0.7).set(1, 0, 1, 1.0);
    b.label(1, Letter::EMPTY.with(1));
    let m = b.build().unwrap();
    let dra = reach_avoid_to_dra("B", "G").unwrap();
    let p = product(&m, &dra).unwrap();
    let from = p.index_of(0, 0).unwrap();
    let to = p.index_of(1, 1).unwrap();
    assert_eq!(p.mdp().prob(from, 0, to), 0.7);
    assert_eq!(p.mdp().prob(from, 0, p.index_of(0, 0).unwrap()), 0.3);
}

#[test]
fn reach_avoid_product_classification() {
    // s0 may idle (a1) or try for s1 (a0); s1 is a G-labelled sink
    let mut b = MdpBuilder::new(2, 2);
    b.props(["B", "G"]);
    b.set(0, 0, 0, 0.5)
        .set(0, 0, 1, 0.5)
        .set(0, 1, 0, 1.0)
        .set(1, 0, 1, 1.0)
        .set(1, 1, 1, 1.0);
    b.label(1, Letter::EMPTY.with(1));
    let m = b.build().unwrap();
    let dra = reach_avoid_to_dra("B", "G").unwrap();
    let p = product(&m, &dra).unwrap();
    let (goal, bad) = goal_and_bad(&p.mdp().underlying_graph(), p.origins(), &dra);
    let idx = |s, q| p.index_of(s, q).unwrap();
    // every end component sitting in the accepting copy is a goal
    assert!(goal.contains(&idx(1, 1)));
    assert!(goal.contains(&idx(0, 1)));
    // the rejecting copy can never reach the accepting one
    assert!(bad.contains(&idx(1, 2)));
    assert!(bad.contains(&idx(0, 2)));
    assert!(!goal.contains(&idx(0, 0)) && !bad.contains(&idx(0, 0)));
    let eval = Evaluator::new(&m, &dra).unwrap();
    assert!((eval.v_star() - 1.0).abs() < 1e-12);
}

#[test]
fn rabin_file_round_trips() {
    let dra = parse_dra_file(INF_OFTEN_P).unwrap();
    assert_eq!(dra.n_states(), 2);
    assert_eq!(parse_dra_file(&dra.to_text()).unwrap(), dra);
    let p = Letter::EMPTY.with(0);
    let none = Letter::EMPTY;
    assert!(dra.accepts_lasso(&[none], &[p, none]).unwrap());
    assert!(!dra.accepts_lasso(&[p, p], &[none]).unwrap());
}

#[test]
fn recurrence_objective_through_the_product() {
    // a0 alternates s0 <-> s1, a1 stays put; only s1 carries p
    let mut b = MdpBuilder::new(2, 2);
    b.props(["p"]);
    b.set(0, 0, 1, 1.0)
        .set(0, 1, 0, 1.0)
        .set(1, 0, 0, 1.0)
        .set(1, 1, 1, 1.0);
    b.label(1, Letter::EMPTY.with(0));
    let m = b.build().unwrap();
    let dra = parse_dra_file(INF_OFTEN_P).unwrap();
    assert!((Evaluator::new(&m, &dra).unwrap().v_star() - 1.0).abs() < 1e-12);

    // p can only be seen once before a p-free sink
    let mut b = MdpBuilder::new(3, 1);
    b.props(["p"]);
    b.set(0, 0, 1, 1.0).set(1, 0, 2, 1.0).set(2, 0, 2, 1.0);
    b.label(1, Letter::EMPTY.with(0));
    let m = b.build().unwrap();
    assert_eq!(Evaluator::new(&m, &dra).unwrap().v_star(), 0.0);
}

#[test]
fn formula_and_props_give_the_same_automaton() {
    let f = parse_ltl("!crash U (home)").unwrap();
    assert_eq!(f.as_reach_avoid(), Some(("crash", "home")));
    let from_text = SpecSource::Ltl("!crash U home".into()).automaton().unwrap();
    let from_props = SpecSource::parse_reach_avoid("reach-avoid:crash,home")
        .unwrap()
        .automaton()
        .unwrap();
    assert_eq!(from_text, from_props);
}
