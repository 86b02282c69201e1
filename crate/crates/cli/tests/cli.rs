use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ltl_regret::{Letter, Mdp, MdpBuilder};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ltl-regret"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn two_state_model() -> Mdp {
    let mut b = MdpBuilder::new(2, 2);
    b.set(0, 0, 0, 0.5).set(0, 0, 1, 0.5).set(0, 1, 0, 1.0);
    b.set(1, 0, 1, 1.0).set(1, 1, 0, 1.0);
    b.props(["B", "G"]).label(1, Letter::EMPTY.with(1));
    b.build().unwrap()
}

#[test]
fn small_gridworld_has_five_states() {
    let out = run(&["gen-gridworld", "--l", "4"]);
    let m = Mdp::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(m.n_states(), 5);
    assert_eq!(m.n_actions(), 4);
}

#[test]
fn product_of_two_by_three_has_six_states() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    fs::write(&model, two_state_model().to_json()).unwrap();
    let out = dir.path().join("p.json");
    run(&[
        "product",
        "--model",
        model.to_str().unwrap(),
        "--spec",
        "reach-avoid:B,G",
        "--out",
        out.to_str().unwrap(),
    ]);
    let p = Mdp::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(p.n_states(), 6);
    assert_eq!(p.n_actions(), 2);
}

#[test]
fn bound_echoes_worked_inputs() {
    let out = run(&[
        "eval-bound",
        "--states",
        "2",
        "--actions",
        "2",
        "--pmin",
        "0.5",
        "--delta",
        "0.1",
        "--episodes",
        "100",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["lambda"].as_f64().unwrap() - 16.01).abs() < 0.01);
    assert_eq!(v["alpha_cap"].as_f64().unwrap(), 144.0);
    assert_eq!(v["terms"].as_array().unwrap().len(), 6);
}

fn learn_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["learn", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flags = ["--l", "5", "--episodes", "25", "--seeds", "3,4,5"];
    learn_into(a.path(), &flags);
    learn_into(b.path(), &flags);
    for seed in [3, 4, 5] {
        let name = format!("regret_seed{seed}.csv");
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name} differs");
        assert_eq!(String::from_utf8(x).unwrap().lines().count(), 26);
    }
    assert_eq!(
        fs::read(a.path().join("summary.json")).unwrap(),
        fs::read(b.path().join("summary.json")).unwrap()
    );
}

#[test]
fn unsatisfiable_automaton_gives_zero_optimum() {
    let dir = tempfile::tempdir().unwrap();
    // state 1 carries the only accepting pair but is never entered
    let dra = dir.path().join("never.dra");
    fs::write(
        &dra,
        "States: 2\nStart: 0\nAP: 1 G\nPairs: 1\nPair: {} {1}\n0 default 0\n1 default 1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    learn_into(
        &out,
        &[
            "--l",
            "4",
            "--episodes",
            "10",
            "--spec-dra",
            dra.to_str().unwrap(),
        ],
    );
    let s: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["v_star"].as_f64().unwrap(), 0.0);
    assert_eq!(s["normalized_regret"]["mean"].as_f64().unwrap(), 0.0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"gridworld": {"l": 4}, "episodes": 7, "seeds": [9], "delta": 0.2}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    learn_into(
        &out,
        &["--config", cfg.to_str().unwrap(), "--episodes", "4"],
    );
    let csv = fs::read_to_string(out.join("regret_seed9.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let s: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["delta"].as_f64().unwrap(), 0.2);
}

#[test]
fn invalid_settings_are_all_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_ltl-regret"))
        .args(["learn", "--delta", "1.5", "--episodes", "0", "--pmin", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    for field in ["delta", "episodes", "pmin"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }
}

#[test]
fn learned_graph_matches_model_edges() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let m = two_state_model();
    fs::write(&model, m.to_json()).unwrap();
    let out = run(&[
        "learn-graph",
        "--model",
        model.to_str().unwrap(),
        "--pmin",
        "0.5",
        "--seeds",
        "1",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let edges: Vec<(usize, usize, usize)> = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            let e = e.as_array().unwrap();
            let n = |i: usize| e[i].as_u64().unwrap() as usize;
            (n(0), n(1), n(2))
        })
        .collect();
    let truth: Vec<_> = m.underlying_graph().edges().collect();
    assert_eq!(edges, truth);
}
