use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rhf::controller::ControllerKind;
use rhf::env::EnvKind;
use rhf::grammar::{
    derive, hf_infeasible, parse_grammar, print_grammar, split_trajectory, DerivationResult, Grammar, RuleSet,
    TrajectoryString, DEFAULT_MAX_STEPS,
};
use rhf::harness::{load_run, run_experiment, seed_sweep, verify_against_theory, ConfigFile, RunConfig, DEFAULT_SEEDS};
use rhf::meta::SystemKind;

#[derive(Parser)]
#[command(name = "rhf", version, about = "Recurrent hierarchical RL and its grammar view")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one system on one environment over one or more seeds.
    Train(TrainArgs),
    /// Train every system on every environment and verify the results.
    Replicate(ReplicateArgs),
    /// Derive the string a grammar produces from a start state.
    Derive(DeriveArgs),
    /// Check a grammar file against its definition.
    ValidateGrammar(GrammarArgs),
    /// Look for a state followed by two different goals in a trajectory.
    CheckHfFeasible(HfArgs),
    /// Print the grammar of a trained run's deterministic policy.
    ExtractGrammar(RunDirArgs),
    /// Extract, derive, replay and check a trained run.
    VerifyTheory(RunDirArgs),
}

#[derive(Args)]
struct Common {
    /// Optional TOML file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of episodes per run.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output root; each run gets `<env>_<system>_<hash>/seed-<n>`.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    system: Option<SystemKind>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    exploration_episodes: Option<usize>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Also write a theory report per run.
    #[arg(long)]
    theory: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long)]
    seeds: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GrammarArgs {
    /// Grammar file.
    #[arg(long)]
    grammar: PathBuf,
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(long)]
    grammar: PathBuf,
    /// Start state, e.g. `s3`.
    #[arg(long)]
    start: String,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct HfSource {
    /// Alternating states and goals, e.g. "s3 g6 s6 g0 s0".
    #[arg(long)]
    trajectory: Option<String>,
    /// Derive the trajectory from this grammar (needs --start).
    #[arg(long, requires = "start")]
    grammar: Option<PathBuf>,
}

#[derive(Args)]
struct HfArgs {
    #[command(flatten)]
    source: HfSource,
    #[arg(long)]
    start: Option<String>,
}

#[derive(Args)]
struct RunDirArgs {
    /// A `seed-<n>` directory written by train or replicate.
    #[arg(long)]
    run_dir: PathBuf,
    /// Memory length; defaults to the smallest consistent one.
    #[arg(long)]
    k: Option<usize>,
}

enum Failure {
    Domain(String),
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Replicate(a) => replicate(a),
        Command::Derive(a) => derive_cmd(a),
        Command::ValidateGrammar(a) => validate(a),
        Command::CheckHfFeasible(a) => check_hf(a),
        Command::ExtractGrammar(a) => extract(a),
        Command::VerifyTheory(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run_group(configs: Vec<RunConfig>, out_dir: &Path, theory: bool) -> Outcome {
    for c in &configs {
        c.validate().map_err(Failure::Usage)?;
    }
    eprintln!(
        "training {} on {}: {} seed(s), {} episodes",
        configs[0].system,
        configs[0].env,
        configs.len(),
        configs[0].episodes
    );
    let exp = run_experiment(&configs, Some(out_dir), theory).map_err(domain)?;
    print!("{}", exp.summary_text());
    for (seed, e) in &exp.failures {
        eprintln!("warning: seed {seed} aborted: {e}");
    }
    if exp.runs.is_empty() {
        return Err(Failure::Domain("every run aborted".into()));
    }
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let file = read_config(a.common.config.as_deref())?;
    let env = a
        .env
        .or(file.env)
        .ok_or_else(|| Failure::Usage("--env is required".into()))?;
    let system = a
        .system
        .or(file.system)
        .ok_or_else(|| Failure::Usage("--system is required".into()))?;
    let mut config = RunConfig::new(env, system, 0);
    config.apply(&file);
    config.env = env;
    config.system = system;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.common.episodes {
        config.episodes = e;
    }
    if let Some(e) = a.exploration_episodes {
        config.exploration_episodes = e;
    }
    if let Some(c) = a.controller {
        config.controller = c;
    }
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let first = config.seed;
    let configs = (0..a.seeds as u64)
        .map(|i| RunConfig {
            seed: first + i,
            ..config.clone()
        })
        .collect();
    run_group(configs, &a.common.out_dir, a.theory)
}

fn replicate(a: ReplicateArgs) -> Outcome {
    let file = read_config(a.common.config.as_deref())?;
    if file.env.is_some() || file.system.is_some() {
        return Err(Failure::Usage(
            "replicate covers every env and system; drop them from the config".into(),
        ));
    }
    let seeds = a.seeds.or(file.seeds).unwrap_or(DEFAULT_SEEDS);
    if seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    for env in EnvKind::ALL {
        for system in SystemKind::ALL {
            let mut base = RunConfig::new(env, system, 0);
            base.apply(&file);
            if let Some(e) = a.common.episodes {
                base.episodes = e;
            }
            run_group(seed_sweep(&base, seeds), &a.common.out_dir, true)?;
        }
    }
    Ok(())
}

fn load_grammar(path: &Path) -> Result<Grammar, Failure> {
    let text = fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    parse_grammar(&text).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn derive_string(g: &Grammar, start: &str, max_steps: usize) -> Result<DerivationResult, Failure> {
    let table = g.symbols();
    let start = table
        .state(start)
        .ok_or_else(|| domain(format!("unknown start state `{start}`")))?;
    derive(g, start, max_steps).map_err(domain)
}

fn derive_cmd(a: DeriveArgs) -> Outcome {
    let g = load_grammar(&a.grammar)?;
    let table = g.symbols();
    match derive_string(&g, &a.start, a.max_steps)? {
        DerivationResult::Completed { string, .. } => {
            println!("{}", table.render(&string));
            Ok(())
        }
        DerivationResult::Looping { form, .. } => {
            println!("looping: {}", table.render(&form));
            Ok(())
        }
        DerivationResult::Stuck { form, .. } => Err(domain(format!("no rule applies to `{}`", table.render(&form)))),
        DerivationResult::StepLimit { form, steps } => Err(domain(format!(
            "step limit {steps} reached at `{}`",
            table.render(&form)
        ))),
    }
}

fn validate(a: GrammarArgs) -> Outcome {
    let g = load_grammar(&a.grammar)?;
    let report = g.validate();
    for line in report.render(g.symbols()) {
        eprintln!("{line}");
    }
    if report.is_valid() {
        println!("valid");
        Ok(())
    } else {
        Err(domain(format!("{} violation(s)", report.violations.len())))
    }
}

fn check_hf(a: HfArgs) -> Outcome {
    let trajectory: TrajectoryString = match (a.source.trajectory, a.source.grammar) {
        (Some(t), _) => t.parse().map_err(domain)?,
        (None, Some(path)) => {
            let g = load_grammar(&path)?;
            let start = a.start.expect("clap requires --start");
            match derive_string(&g, &start, DEFAULT_MAX_STEPS)? {
                DerivationResult::Completed { string, .. } => split_trajectory(g.symbols(), &string).map_err(domain)?.0,
                other => {
                    return Err(domain(format!(
                        "derivation did not complete: `{}`",
                        g.symbols().render(other.form())
                    )))
                }
            }
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    match hf_infeasible(&trajectory) {
        Some(w) => println!("{w}"),
        None => println!("none"),
    }
    Ok(())
}

fn extract(a: RunDirArgs) -> Outcome {
    let mut run = load_run(&a.run_dir).map_err(domain)?;
    let report =
        verify_against_theory(run.meta.as_ref(), run.config.env, run.controller.as_mut(), a.k).map_err(domain)?;
    print!("{}", print_grammar(&Grammar::KRecurrent(report.grammar)));
    Ok(())
}

fn verify(a: RunDirArgs) -> Outcome {
    let mut run = load_run(&a.run_dir).map_err(domain)?;
    let report =
        verify_against_theory(run.meta.as_ref(), run.config.env, run.controller.as_mut(), a.k).map_err(domain)?;
    print!("{}", report.render());
    Ok(())
}
