//! Experiment driver: seeded learning runs, graph learning, products,
//! gridworld generation and bound evaluation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ltl_regret::dra::parse_dra_file;
use ltl_regret::envs::{gridworld, GridSpec};
use ltl_regret::evi::lambda_bound;
use ltl_regret::graph_learn::{learn_graph, GraphLearnConfig};
use ltl_regret::metrics::{k_star_reg, mean_std, theory_bound, write_trace_csv, TheoryBound};
use ltl_regret::pipeline::{run_seed, Evaluator, GraphMode, RunSettings, SeedRun, SpecSource};
use ltl_regret::product::product;
use ltl_regret::rng::{child, Purpose};
use ltl_regret::{Dra, Mdp, MdpEnv};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "ltl-regret",
    version,
    about = "Regret-bounded learning for LTL objectives in MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn on every seed and write one regret CSV per seed plus summary.json
    Learn(RunArgs),
    /// Recover the transition graph of a model by sampling
    LearnGraph(RunArgs),
    /// Write the product of a model with the objective automaton
    Product(RunArgs),
    /// Write a gridworld model as JSON
    GenGridworld(GridArgs),
    /// Print the regret bound evaluation as JSON
    EvalBound(BoundArgs),
    /// Print a readable listing of a model
    DumpModel(RunArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with run settings; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// model JSON file (otherwise a gridworld is generated)
    #[arg(long)]
    model: Option<PathBuf>,
    /// gridworld side length
    #[arg(long)]
    l: Option<usize>,
    /// gridworld probability that a move succeeds
    #[arg(long)]
    slip: Option<f64>,
    /// reach-avoid objective, e.g. `reach-avoid:B,G`
    #[arg(long)]
    spec: Option<String>,
    /// LTL objective of the form `!a U b`
    #[arg(long)]
    spec_ltl: Option<String>,
    /// Rabin automaton file
    #[arg(long)]
    spec_dra: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    /// lower bound on positive transition probabilities
    #[arg(long)]
    pmin: Option<f64>,
    #[arg(long)]
    episodes: Option<u64>,
    /// deadline exponent
    #[arg(long)]
    q: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// output directory for `learn`, output file otherwise (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// `known` uses the model's edge set, `learn` samples it first
    #[arg(long, value_parser = parse_graph_mode)]
    graph: Option<GraphMode>,
    /// threshold for the first episode with normalized regret below it
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 0.9)]
    slip: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    pmin: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    episodes: u64,
    #[arg(long, default_value_t = 2)]
    q: u32,
}

fn parse_graph_mode(s: &str) -> Result<GraphMode, String> {
    match s {
        "known" => Ok(GraphMode::Known),
        "learn" => Ok(GraphMode::Learn),
        _ => Err(format!("expected `known` or `learn`, got `{s}`")),
    }
}

/// Contents of a `--config` file. Field names follow the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<PathBuf>,
    gridworld: Option<GridSpec>,
    spec: Option<String>,
    spec_ltl: Option<String>,
    spec_dra: Option<PathBuf>,
    delta: Option<f64>,
    #[serde(alias = "p_min")]
    pmin: Option<f64>,
    episodes: Option<u64>,
    q: Option<u32>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    graph: Option<GraphMode>,
    epsilon: Option<f64>,
}

enum ModelSource {
    File(PathBuf),
    Grid(GridSpec),
}

enum SpecChoice {
    ReachAvoid(String),
    Ltl(String),
    DraFile(PathBuf),
}

struct RunConfig {
    model: ModelSource,
    spec: SpecChoice,
    delta: f64,
    p_min: Option<f64>,
    episodes: u64,
    q: u32,
    seeds: Vec<u64>,
    out: Option<PathBuf>,
    graph: GraphMode,
    epsilon: f64,
}

impl RunConfig {
    /// Merges flags over the config file and reports every invalid field.
    fn resolve(args: RunArgs) -> Result<RunConfig> {
        let file: ConfigFile = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        let mut problems = Vec::new();

        let model_path = args.model.or(file.model);
        let grid_given = args.l.is_some() || args.slip.is_some() || file.gridworld.is_some();
        let model = match model_path {
            Some(path) => {
                if grid_given {
                    problems.push(
                        "give either a model file or gridworld settings, not both".to_string(),
                    );
                }
                ModelSource::File(path)
            }
            None => {
                let mut spec = file.gridworld.unwrap_or_else(|| GridSpec::new(6));
                if let Some(l) = args.l {
                    spec.l = l;
                }
                if let Some(s) = args.slip {
                    spec.slip = s;
                }
                if let Err(e) = spec.validate() {
                    problems.push(format!("gridworld: {e}"));
                }
                ModelSource::Grid(spec)
            }
        };

        // a spec flag replaces any spec source from the file
        let flag_specs = [
            args.spec.is_some(),
            args.spec_ltl.is_some(),
            args.spec_dra.is_some(),
        ];
        let (spec, spec_ltl, spec_dra) = if flag_specs.iter().any(|&b| b) {
            (args.spec, args.spec_ltl, args.spec_dra)
        } else {
            (file.spec, file.spec_ltl, file.spec_dra)
        };
        let given = [spec.is_some(), spec_ltl.is_some(), spec_dra.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given > 1 {
            problems.push("give at most one of spec, spec-ltl and spec-dra".to_string());
        }
        let spec = match (spec, spec_ltl, spec_dra) {
            (Some(s), _, _) => SpecChoice::ReachAvoid(s),
            (None, Some(s), _) => SpecChoice::Ltl(s),
            (None, None, Some(p)) => SpecChoice::DraFile(p),
            (None, None, None) => SpecChoice::ReachAvoid("reach-avoid:B,G".to_string()),
        };

        let delta = args.delta.or(file.delta).unwrap_or(0.1);
        if !(delta > 0.0 && delta < 1.0) {
            problems.push(format!("delta must lie in (0, 1), got {delta}"));
        }
        let p_min = args.pmin.or(file.pmin);
        if let Some(p) = p_min {
            if !(p > 0.0 && p < 1.0) {
                problems.push(format!("pmin must lie in (0, 1), got {p}"));
            }
        }
        let episodes = args.episodes.or(file.episodes).unwrap_or(1000);
        if episodes < 1 {
            problems.push("episodes must be at least 1".to_string());
        }
        let q = args.q.or(file.q).unwrap_or(2);
        if q < 1 {
            problems.push("q must be at least 1".to_string());
        }
        let seeds = args.seeds.or(file.seeds).unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            problems.push("seeds must not be empty".to_string());
        }
        let epsilon = args.epsilon.or(file.epsilon).unwrap_or(0.1);
        if epsilon.is_nan() || epsilon <= 0.0 {
            problems.push(format!("epsilon must be positive, got {epsilon}"));
        }

        if !problems.is_empty() {
            bail!("invalid configuration:\n  {}", problems.join("\n  "));
        }
        Ok(RunConfig {
            model,
            spec,
            delta,
            p_min,
            episodes,
            q,
            seeds,
            out: args.out.or(file.out),
            graph: args.graph.or(file.graph).unwrap_or_default(),
            epsilon,
        })
    }

    fn load_model(&self) -> Result<Mdp> {
        match &self.model {
            ModelSource::File(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading model {}", path.display()))?;
                Mdp::from_json(&text).map_err(|e| anyhow::anyhow!("mdp: {e}"))
            }
            ModelSource::Grid(spec) => gridworld(spec).map_err(|e| anyhow::anyhow!("envs: {e}")),
        }
    }

    fn load_automaton(&self) -> Result<Dra> {
        let source = match &self.spec {
            SpecChoice::ReachAvoid(text) => SpecSource::parse_reach_avoid(text)?,
            SpecChoice::Ltl(text) => SpecSource::Ltl(text.clone()),
            SpecChoice::DraFile(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading automaton {}", path.display()))?;
                SpecSource::Dra(
                    parse_dra_file(&text).map_err(|e| anyhow::anyhow!("automaton: {e}"))?,
                )
            }
        };
        Ok(source.automaton()?)
    }

    /// Explicit `pmin`, or the smallest positive probability of the model.
    fn p_min_for(&self, model: &Mdp) -> Result<f64> {
        match self.p_min {
            Some(p) => Ok(p),
            None => Ok(model
                .validate()
                .map_err(|e| anyhow::anyhow!("mdp: {e}"))?
                .p_min),
        }
    }
}

/// Writes to `out` or stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Spread {
    mean: f64,
    std: f64,
}

impl Spread {
    fn of(xs: &[f64]) -> Spread {
        let (mean, std) = mean_std(xs);
        Spread { mean, std }
    }
}

#[derive(Serialize)]
struct Summary {
    v_star: f64,
    episodes: u64,
    seeds: Vec<u64>,
    delta: f64,
    p_min: f64,
    q: u32,
    graph: GraphMode,
    learner_states: usize,
    n_actions: usize,
    lambda: Option<f64>,
    normalized_regret: Spread,
    epsilon: f64,
    /// per seed; null when the threshold is never reached
    k_star_reg: Vec<Option<u64>>,
    alpha: Spread,
    alpha_per_seed: Vec<u64>,
    bound: TheoryBound,
}

fn summarize(
    cfg: &RunConfig,
    p_min: f64,
    v_star: f64,
    n_actions: usize,
    runs: &[SeedRun],
) -> Summary {
    let finals: Vec<f64> = runs.iter().map(|r| r.trace.final_normalized()).collect();
    let alphas: Vec<u64> = runs.iter().map(|r| r.alpha).collect();
    let learner_states = runs.iter().map(|r| r.learner_states).max().unwrap_or(0);
    let lambda = runs.first().map_or(f64::INFINITY, |r| r.lambda);
    Summary {
        v_star,
        episodes: cfg.episodes,
        seeds: cfg.seeds.clone(),
        delta: cfg.delta,
        p_min,
        q: cfg.q,
        graph: cfg.graph,
        learner_states,
        n_actions,
        lambda: lambda.is_finite().then_some(lambda),
        normalized_regret: Spread::of(&finals),
        epsilon: cfg.epsilon,
        k_star_reg: runs
            .iter()
            .map(|r| k_star_reg(&r.trace, cfg.epsilon))
            .collect(),
        alpha: Spread::of(&alphas.iter().map(|&a| a as f64).collect::<Vec<_>>()),
        alpha_per_seed: alphas,
        bound: theory_bound(
            cfg.episodes,
            learner_states,
            n_actions,
            cfg.delta,
            lambda,
            cfg.q,
        ),
    }
}

fn cmd_learn(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let model = cfg.load_model()?;
    let dra = cfg.load_automaton()?;
    let p_min = cfg.p_min_for(&model)?;
    let settings = RunSettings {
        delta: cfg.delta,
        p_min,
        episodes: cfg.episodes,
        q: cfg.q,
        graph: cfg.graph,
    };
    // the evaluator sees the full model; learners only get sampling handles
    let eval = Evaluator::new(&model, &dra)?;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&model, &dra, &eval, &settings, seed))
        .collect::<Result<_, _>>()?;

    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for run in &runs {
        let path = dir.join(format!("regret_seed{}.csv", run.seed));
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &run.records, &run.trace)?;
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = summarize(&cfg, p_min, eval.v_star(), model.n_actions(), &runs);
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "v* = {:.6}, mean normalized regret after {} episodes = {:.6} over {} seeds; wrote {}",
        summary.v_star,
        cfg.episodes,
        summary.normalized_regret.mean,
        runs.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_learn_graph(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let model = cfg.load_model()?;
    let p_min = cfg.p_min_for(&model)?;
    let seed = cfg.seeds[0];
    let mut env = MdpEnv::new(model);
    let mut rng = child(seed, Purpose::GraphLearning, 0);
    let est = learn_graph(&mut env, &GraphLearnConfig::new(p_min, cfg.delta), &mut rng)
        .map_err(|e| anyhow::anyhow!("graph learning: {e}"))?;
    let edges: Vec<[usize; 3]> = est.graph.edges().map(|(s, a, t)| [s, a, t]).collect();
    let out = json!({
        "n_states": est.graph.n_states(),
        "n_actions": est.graph.n_actions(),
        "seed": seed,
        "n_star": est.n_star,
        "samples_total": est.samples_total,
        "complete": est.complete,
        "unreachable": est.unreachable,
        "edges": edges,
    });
    emit(
        cfg.out.as_deref(),
        &(serde_json::to_string_pretty(&out)? + "\n"),
    )
}

fn cmd_product(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let model = cfg.load_model()?;
    let dra = cfg.load_automaton()?;
    let prod = product(&model, &dra).map_err(|e| anyhow::anyhow!("product: {e}"))?;
    emit(cfg.out.as_deref(), &(prod.mdp().to_json() + "\n"))
}

fn cmd_gen(args: GridArgs) -> Result<()> {
    let model = gridworld(&GridSpec::new(args.l).with_slip(args.slip))
        .map_err(|e| anyhow::anyhow!("envs: {e}"))?;
    emit(args.out.as_deref(), &(model.to_json() + "\n"))
}

fn cmd_bound(args: BoundArgs) -> Result<()> {
    let lambda = lambda_bound(args.states, args.pmin, args.delta)
        .map_err(|e| anyhow::anyhow!("evi: {e}"))?;
    let bound = theory_bound(
        args.episodes,
        args.states,
        args.actions,
        args.delta,
        lambda,
        args.q,
    );
    let out = json!({
        "states": args.states,
        "actions": args.actions,
        "p_min": args.pmin,
        "delta": args.delta,
        "q": args.q,
        "lambda": lambda,
        "episodes": bound.episodes,
        "alpha_cap": bound.alpha_cap,
        "bound": bound.bound,
        "bound_per_episode": bound.bound / bound.episodes as f64,
        "terms": bound.terms,
    });
    emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))
}

fn cmd_dump(args: RunArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let model = cfg.load_model()?;
    let mut text = format!(
        "{} states, {} actions, init {}\n",
        model.n_states(),
        model.n_actions(),
        model.state_name(model.init())
    );
    text += &format!("propositions: {}\n", model.props().join(" "));
    for s in 0..model.n_states() {
        let label: Vec<&str> = model
            .label(s)
            .iter()
            .map(|p| model.props()[p].as_str())
            .collect();
        text += &format!("{} {{{}}}\n", model.state_name(s), label.join(","));
        for a in 0..model.n_actions() {
            let row: Vec<String> = model
                .row(s, a)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(t, p)| format!("{}:{p}", model.state_name(t)))
                .collect();
            text += &format!("  {} -> {}\n", model.action_name(a), row.join(" "));
        }
    }
    emit(cfg.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::LearnGraph(a) => cmd_learn_graph(a),
        Command::Product(a) => cmd_product(a),
        Command::GenGridworld(a) => cmd_gen(a),
        Command::EvalBound(a) => cmd_bound(a),
        Command::DumpModel(a) => cmd_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_mode_names() {
        assert_eq!(parse_graph_mode("learn"), Ok(GraphMode::Learn));
        assert!(parse_graph_mode("guess").is_err());
    }

    #[test]
    fn defaults_resolve_to_the_benchmark() {
        let cfg = RunConfig::resolve(RunArgs::default()).unwrap();
        assert!(matches!(&cfg.model, ModelSource::Grid(g) if g.l == 6));
        assert!(matches!(&cfg.spec, SpecChoice::ReachAvoid(s) if s == "reach-avoid:B,G"));
        assert_eq!((cfg.delta, cfg.episodes, cfg.q), (0.1, 1000, 2));
        assert_eq!(cfg.seeds, vec![0]);
    }

    #[test]
    fn conflicting_sources_are_rejected() {
        let args = RunArgs {
            model: Some("m.json".into()),
            l: Some(5),
            spec: Some("reach-avoid:B,G".into()),
            spec_ltl: Some("!B U G".into()),
            ..RunArgs::default()
        };
        let err = RunConfig::resolve(args).err().unwrap().to_string();
        assert!(err.contains("not both") && err.contains("at most one"));
    }
}
