//! Training loop, multi-seed experiments and the theory check that turns a
//! trained meta controller back into a grammar.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::{
    make_controller, run_controller, Controller, ControllerError, ControllerKind, OptimalController, OutcomeKind,
};
use crate::env::{make_env, EnvError, EnvKind, Environment};
use crate::grammar::{
    derive, extract_grammar, hf_infeasible, print_grammar, split_trajectory, DerivationResult, ExtractError, Grammar,
    HfWitness, KRecurrentGrammar, Symbol, SymbolTable, TrajectoryString, DEFAULT_MAX_STEPS,
};
use crate::meta::{
    controller_behaviors, deterministic_policy_map, make_meta, symbol_table, MetaController, MetaError, MetaParams,
    PolicyMapError, SelectMode, StateIndex, SystemKind,
};
use crate::neural::DEFAULT_LR;

pub const MOVING_AVERAGE_WINDOW: usize = 100;
/// Episodes averaged for the end-of-training summary statistic.
pub const FINAL_WINDOW: usize = 1000;
pub const DEFAULT_SEEDS: usize = 10;
pub const META_CHECKPOINT: &str = "meta.ckpt";
pub const CONTROLLER_CHECKPOINT: &str = "controller.ckpt";

pub fn default_episodes(env: EnvKind) -> usize {
    match env {
        EnvKind::Corridor | EnvKind::StochasticCorridor => 10_000,
        EnvKind::Grid => 20_000,
    }
}

/// Uniform-goal warm-up without learning; only the REINFORCE systems use it,
/// and only in the deterministic corridor.
pub fn default_exploration(env: EnvKind, system: SystemKind) -> usize {
    if env == EnvKind::Corridor && system.is_reinforce() {
        1000
    } else {
        0
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvKind,
    pub system: SystemKind,
    pub seed: u64,
    pub episodes: usize,
    pub exploration_episodes: usize,
    pub controller: ControllerKind,
    pub controller_learning_rate: f64,
    pub meta: MetaParams,
}

impl RunConfig {
    pub fn new(env: EnvKind, system: SystemKind, seed: u64) -> Self {
        RunConfig {
            env,
            system,
            seed,
            episodes: default_episodes(env),
            exploration_episodes: default_exploration(env, system),
            controller: ControllerKind::Optimal,
            controller_learning_rate: DEFAULT_LR,
            meta: MetaParams::default(),
        }
    }

    /// Overrides fields present in `file`.
    pub fn apply(&mut self, file: &ConfigFile) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = file.$f.clone() { self.$f = v; })*};
        }
        macro_rules! set_meta {
            ($($f:ident),*) => {$(if let Some(v) = file.$f.clone() { self.meta.$f = v; })*};
        }
        let env_changed = file.env.is_some_and(|e| e != self.env);
        let system_changed = file.system.is_some_and(|s| s != self.system);
        set!(env, system, seed, controller, controller_learning_rate);
        if env_changed {
            self.episodes = default_episodes(self.env);
        }
        if env_changed || system_changed {
            self.exploration_episodes = default_exploration(self.env, self.system);
        }
        set!(episodes, exploration_episodes);
        set_meta!(
            learning_rate,
            gamma,
            gru_units,
            replay_size,
            batch_size,
            target_update_rate,
            epsilon_start,
            epsilon_end,
            epsilon_decay_steps
        );
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = &self.meta;
        if self.episodes == 0 && self.exploration_episodes > 0 {
            return Err("exploration_episodes needs episodes > 0".into());
        }
        if !(m.learning_rate > 0.0 && m.learning_rate.is_finite()) {
            return Err("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&m.gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        if m.gru_units == 0 || m.replay_size == 0 || m.batch_size == 0 {
            return Err("gru_units, replay_size and batch_size must be positive".into());
        }
        if m.batch_size > m.replay_size {
            return Err("batch_size exceeds replay_size".into());
        }
        if !(0.0..=1.0).contains(&m.target_update_rate) {
            return Err("target_update_rate must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything except the seed, so that seeds of one experiment
    /// share a group.
    pub fn group_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn group_name(&self) -> String {
        format!("{}_{}_{}", self.env, self.system, self.group_hash())
    }

    pub fn run_dir(&self, root: &Path) -> PathBuf {
        root.join(self.group_name()).join(format!("seed-{}", self.seed))
    }
}

/// Optional config-file keys; anything missing keeps its default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: Option<EnvKind>,
    pub system: Option<SystemKind>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub episodes: Option<usize>,
    pub exploration_episodes: Option<usize>,
    pub controller: Option<ControllerKind>,
    pub controller_learning_rate: Option<f64>,
    pub learning_rate: Option<f64>,
    pub gamma: Option<f64>,
    pub gru_units: Option<usize>,
    pub replay_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub target_update_rate: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_decay_steps: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub meta_decisions: usize,
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("episode {episode}: {source}")]
    Episode { episode: usize, source: StepError },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Meta(#[from] MetaError),
}

/// One episode of the hierarchical loop: the meta controller picks a goal
/// for the current state, the controller pursues it and reports the
/// accumulated external reward, and the returned state is appended to the
/// meta controller's memory. The meta controller learns once at the end.
pub fn run_episode(
    env: &mut dyn Environment,
    meta: &mut dyn MetaController,
    controller: &mut dyn Controller,
    episode: usize,
    env_seed: u64,
    mode: SelectMode,
) -> Result<EpisodeLog, StepError> {
    meta.begin_episode();
    let mut state = env.reset(env_seed);
    let mut ret = 0.0;
    let mut decisions = 0;
    let truncated = loop {
        let goal = meta.select_goal(&state, mode)?;
        let out = run_controller(controller, env, goal)?;
        decisions += 1;
        ret += out.reward;
        let next = env.spec().observe(env.current());
        let done = !matches!(out.kind, OutcomeKind::GoalReached { .. });
        meta.record(out.reward, &next, done)?;
        if done {
            break out.kind == OutcomeKind::Truncated;
        }
        state = next;
    };
    meta.end_episode(mode == SelectMode::Train)?;
    Ok(EpisodeLog {
        episode,
        ret,
        meta_decisions: decisions,
        truncated,
    })
}

pub struct RunResult {
    pub config: RunConfig,
    pub logs: Vec<EpisodeLog>,
    pub meta: Box<dyn MetaController>,
    pub controller: Box<dyn Controller>,
}

impl RunResult {
    pub fn returns(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.ret).collect()
    }

    pub fn final_moving_average(&self) -> f64 {
        moving_average(&self.returns(), MOVING_AVERAGE_WINDOW)
            .last()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn final_mean(&self, window: usize) -> f64 {
        tail_mean(&self.returns(), window)
    }
}

/// Trains one meta controller for `config.episodes` episodes.
pub fn run_single(config: &RunConfig) -> Result<RunResult, RunError> {
    config.validate().map_err(RunError::Config)?;
    let mut env = make_env(config.env);
    let spec = env.spec().clone();
    let mut meta = make_meta(config.system, &spec, &config.meta, config.seed);
    let mut controller = make_controller(
        config.controller,
        &spec,
        config.controller_learning_rate,
        config.seed.wrapping_add(1),
    );
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0fe1_50de);
    let mut logs = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        let mode = if episode < config.exploration_episodes {
            SelectMode::Explore
        } else {
            SelectMode::Train
        };
        let log = run_episode(
            env.as_mut(),
            meta.as_mut(),
            controller.as_mut(),
            episode,
            seeds.random(),
            mode,
        )
        .map_err(|source| RunError::Episode { episode, source })?;
        logs.push(log);
    }
    Ok(RunResult {
        config: config.clone(),
        logs,
        meta,
        controller,
    })
}

/// Trailing moving average; the first `window - 1` entries average over the
/// episodes seen so far.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    (0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

pub fn tail_mean(values: &[f64], window: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(window)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Per-episode mean over runs of each run's moving average.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCurve {
    pub mean_ma100: Vec<f64>,
}

impl AggregateCurve {
    pub fn from_runs(runs: &[Vec<f64>]) -> Self {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let mut mean = vec![0.0; len];
        for r in runs {
            for (m, v) in mean.iter_mut().zip(moving_average(r, MOVING_AVERAGE_WINDOW)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= runs.len() as f64;
        }
        AggregateCurve { mean_ma100: mean }
    }

    pub fn max(&self) -> f64 {
        self.mean_ma100.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> f64 {
        self.mean_ma100.last().copied().unwrap_or(0.0)
    }
}

/// Statistics of one finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub final_ma100: f64,
    pub max_ma100: f64,
    pub final_mean_1000: f64,
    pub theory: Option<String>,
}

pub struct ExperimentResult {
    pub group: String,
    pub runs: Vec<RunSummary>,
    pub curve: AggregateCurve,
    pub failures: Vec<(u64, String)>,
    pub results: Vec<RunResult>,
}

impl ExperimentResult {
    pub fn mean_final_1000(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.final_mean_1000))
    }

    pub fn count_final_ma_at_least(&self, threshold: f64) -> usize {
        self.runs.iter().filter(|r| r.final_ma100 >= threshold).count()
    }

    pub fn count_final_ma_at_most(&self, threshold: f64) -> usize {
        self.runs.iter().filter(|r| r.final_ma100 <= threshold).count()
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "group = {}", self.group);
        let _ = writeln!(s, "runs_completed = {}", self.runs.len());
        let _ = writeln!(s, "runs_failed = {}", self.failures.len());
        for (seed, e) in &self.failures {
            let _ = writeln!(s, "failure.seed{seed} = {e}");
        }
        let _ = writeln!(
            s,
            "mean_final_ma100 = {}",
            mean(self.runs.iter().map(|r| r.final_ma100))
        );
        let _ = writeln!(
            s,
            "mean_final_{FINAL_WINDOW}_episode_return = {}",
            self.mean_final_1000()
        );
        let _ = writeln!(s, "aggregate_final_ma100 = {}", self.curve.last());
        let _ = writeln!(s, "aggregate_max_ma100 = {}", self.curve.max());
        let _ = writeln!(s, "runs_final_ma100_ge_0.95 = {}", self.count_final_ma_at_least(0.95));
        for r in &self.runs {
            let _ = writeln!(
                s,
                "seed{}.final_ma100 = {}\nseed{}.final_mean_{FINAL_WINDOW} = {}",
                r.seed, r.final_ma100, r.seed, r.final_mean_1000
            );
        }
        s
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn write_episode_csv(path: &Path, logs: &[EpisodeLog]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    if logs.is_empty() {
        w.write_record(["episode", "return", "meta_decisions", "truncated"])?;
    }
    for l in logs {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

fn write_aggregate_csv(path: &Path, curve: &AggregateCurve) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "mean_ma100"])?;
    for (i, v) in curve.mean_ma100.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn run_summary(r: &RunResult, theory: Option<String>) -> RunSummary {
    let ma = moving_average(&r.returns(), MOVING_AVERAGE_WINDOW);
    RunSummary {
        seed: r.config.seed,
        final_ma100: ma.last().copied().unwrap_or(0.0),
        max_ma100: ma.iter().copied().fold(0.0, f64::max),
        final_mean_1000: r.final_mean(FINAL_WINDOW),
        theory,
    }
}

/// Runs every config (in parallel) and aggregates the completed runs. With
/// `out_dir`, writes per-run and aggregate CSVs, summaries, the effective
/// configs, checkpoints and, if `theory` is set, theory reports.
pub fn run_experiment(
    configs: &[RunConfig],
    out_dir: Option<&Path>,
    theory: bool,
) -> Result<ExperimentResult, RunError> {
    assert!(!configs.is_empty(), "need at least one run");
    let group = configs[0].group_name();
    let outcomes: Vec<Result<RunResult, (u64, String)>> = configs
        .par_iter()
        .map(|c| run_single(c).map_err(|e| (c.seed, e.to_string())))
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut runs = Vec::new();
    for r in &mut results {
        let report = if theory {
            let text = match verify_against_theory(r.meta.as_ref(), r.config.env, r.controller.as_mut(), None) {
                Ok(rep) => rep.render(),
                Err(e) => format!("error = {e}\n"),
            };
            Some(text)
        } else {
            None
        };
        runs.push(run_summary(r, report));
    }
    let curve = AggregateCurve::from_runs(&results.iter().map(RunResult::returns).collect::<Vec<_>>());
    let exp = ExperimentResult {
        group,
        runs,
        curve,
        failures,
        results,
    };

    if let Some(root) = out_dir {
        let group_dir = root.join(&exp.group);
        fs::create_dir_all(&group_dir)?;
        for (r, s) in exp.results.iter().zip(&exp.runs) {
            let dir = r.config.run_dir(root);
            fs::create_dir_all(&dir)?;
            write_episode_csv(&dir.join("episodes.csv"), &r.logs)?;
            fs::write(dir.join("config.toml"), r.config.to_toml())?;
            fs::write(dir.join(META_CHECKPOINT), r.meta.save())?;
            if let Some(c) = r.controller.save() {
                fs::write(dir.join(CONTROLLER_CHECKPOINT), c)?;
            }
            let mut summary = String::new();
            let _ = writeln!(summary, "seed = {}", s.seed);
            let _ = writeln!(summary, "episodes = {}", r.logs.len());
            let _ = writeln!(summary, "final_ma100 = {}", s.final_ma100);
            let _ = writeln!(summary, "max_ma100 = {}", s.max_ma100);
            let _ = writeln!(summary, "final_mean_{FINAL_WINDOW} = {}", s.final_mean_1000);
            fs::write(dir.join("summary.txt"), summary)?;
            if let Some(t) = &s.theory {
                fs::write(dir.join("theory.txt"), t)?;
            }
        }
        write_aggregate_csv(&group_dir.join("aggregate.csv"), &exp.curve)?;
        fs::write(group_dir.join("summary.txt"), exp.summary_text())?;
        if let Some(c) = configs.first() {
            fs::write(group_dir.join("config.toml"), c.to_toml())?;
        }
    }
    Ok(exp)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// A trained run restored from its directory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub meta: Box<dyn MetaController>,
    pub controller: Box<dyn Controller>,
}

/// Restores the config, meta controller and (if learned) controller written
/// by [`run_experiment`].
pub fn load_run(dir: &Path) -> Result<LoadedRun, LoadError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| LoadError::Io { path, source })
    };
    let config: RunConfig = toml::from_str(&read("config.toml")?).map_err(|e| LoadError::Config {
        path: dir.join("config.toml"),
        message: e.to_string(),
    })?;
    let spec = crate::env::EnvSpec::new(config.env);
    let mut meta = make_meta(config.system, &spec, &config.meta, config.seed);
    meta.load(&read(META_CHECKPOINT)?)?;
    let mut controller = make_controller(config.controller, &spec, config.controller_learning_rate, config.seed);
    if config.controller == ControllerKind::Learned {
        controller.load(&read(CONTROLLER_CHECKPOINT)?)?;
    }
    Ok(LoadedRun {
        config,
        meta,
        controller,
    })
}

/// Seeds `0..n` of one configuration.
pub fn seed_sweep(base: &RunConfig, seeds: usize) -> Vec<RunConfig> {
    (0..seeds as u64)
        .map(|seed| RunConfig { seed, ..base.clone() })
        .collect()
}

/// Result of replaying a goal sequence in the environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub ret: f64,
    pub actions: usize,
    pub states: Vec<String>,
    pub terminated: bool,
}

/// Feeds `goals` to the controller one after another from a fresh episode.
pub fn replay_goals(
    env: EnvKind,
    controller: &mut dyn Controller,
    goals: &[usize],
    env_seed: u64,
) -> Result<Replay, StepError> {
    let mut env = make_env(env);
    env.reset(env_seed);
    let mut ret = 0.0;
    let mut actions = 0;
    let mut states = vec![env.spec().state_names[env.current().0].clone()];
    let mut terminated = false;
    for g in goals {
        if env.is_done() {
            break;
        }
        let out = run_controller(controller, env.as_mut(), *g)?;
        ret += out.reward;
        actions += out.actions;
        states.push(env.spec().state_names[env.current().0].clone());
        terminated = out.kind == OutcomeKind::Terminated;
    }
    Ok(Replay {
        ret,
        actions,
        states,
        terminated,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error(transparent)]
    PolicyMap(#[from] PolicyMapError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("no memory length up to {0} gives a consistent policy")]
    NoConsistentK(usize),
    #[error("derivation failed: {0}")]
    Derive(String),
}

/// What a trained meta controller's deterministic policy says about
/// expressiveness.
#[derive(Clone, Debug)]
pub struct TheoryReport {
    pub env: EnvKind,
    pub system: SystemKind,
    pub k: usize,
    pub grammar: KRecurrentGrammar,
    pub outcome: TheoryOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TheoryOutcome {
    /// The derivation produced a complete trajectory.
    Trajectory {
        trajectory: TrajectoryString,
        replay_return: f64,
        witness: Option<HfWitness>,
    },
    /// The grammar never terminates on this policy.
    Looping { form: String },
}

impl TheoryReport {
    pub fn trajectory(&self) -> Option<&TrajectoryString> {
        match &self.outcome {
            TheoryOutcome::Trajectory { trajectory, .. } => Some(trajectory),
            TheoryOutcome::Looping { .. } => None,
        }
    }

    pub fn witness(&self) -> Option<&HfWitness> {
        match &self.outcome {
            TheoryOutcome::Trajectory { witness, .. } => witness.as_ref(),
            TheoryOutcome::Looping { .. } => None,
        }
    }

    pub fn replay_return(&self) -> Option<f64> {
        match &self.outcome {
            TheoryOutcome::Trajectory { replay_return, .. } => Some(*replay_return),
            TheoryOutcome::Looping { .. } => None,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "system = {}", self.system);
        let _ = writeln!(s, "k = {}", self.k);
        match &self.outcome {
            TheoryOutcome::Trajectory {
                trajectory,
                replay_return,
                witness,
            } => {
                let _ = writeln!(s, "trajectory = {trajectory}");
                let _ = writeln!(s, "replay_return = {replay_return}");
                let _ = writeln!(s, "hf_infeasible = {}", witness.is_some());
                if let Some(w) = witness {
                    let _ = writeln!(s, "witness = {w}");
                }
            }
            TheoryOutcome::Looping { form } => {
                let _ = writeln!(s, "looping = true");
                let _ = writeln!(s, "form = {form}");
            }
        }
        let _ = writeln!(s, "[grammar]");
        s.push_str(&print_grammar(&Grammar::KRecurrent(self.grammar.clone())));
        s
    }
}

/// Reads the deterministic policy off `meta`, extracts its grammar, derives
/// the trajectory from the start state, replays it in the environment and
/// checks whether a state-only policy could have produced it.
///
/// With `k = None` the smallest memory length with a consistent policy map is
/// used (always 0 for feedforward controllers).
pub fn verify_against_theory(
    meta: &dyn MetaController,
    env: EnvKind,
    controller: &mut dyn Controller,
    k: Option<usize>,
) -> Result<TheoryReport, TheoryError> {
    let spec = crate::env::EnvSpec::new(env);
    let behaviors = controller_behaviors(&spec, &*controller);
    let (k, map) = match k {
        Some(k) => (k, deterministic_policy_map(meta, &spec, &behaviors, k)?),
        None if !meta.kind().is_recurrent() => (0, deterministic_policy_map(meta, &spec, &behaviors, 0)?),
        None => {
            let mut found = None;
            for k in 0..spec.step_limit {
                match deterministic_policy_map(meta, &spec, &behaviors, k) {
                    Ok(m) => {
                        found = Some((k, m));
                        break;
                    }
                    Err(PolicyMapError::Conflict { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            found.ok_or(TheoryError::NoConsistentK(spec.step_limit))?
        }
    };

    let table = symbol_table(&spec);
    let index = StateIndex::new(&spec);
    let start = index.state(spec.start).expect("start is not terminal");
    let grammar = extract_grammar(&table, &map, &behaviors, &[start], k)?;
    let derivation = derive(&grammar, start, DEFAULT_MAX_STEPS).map_err(|e| TheoryError::Derive(e.to_string()))?;
    let outcome = match derivation {
        DerivationResult::Completed { string, .. } => {
            let (trajectory, _) = split_trajectory(&table, &string).map_err(|e| TheoryError::Derive(e.to_string()))?;
            let goals: Vec<usize> = trajectory
                .pairs()
                .map(|(_, g)| table.goal(g).expect("goal from table").0 as usize)
                .collect();
            let replay = replay_goals(env, controller, &goals, 0)?;
            TheoryOutcome::Trajectory {
                witness: hf_infeasible(&trajectory),
                trajectory,
                replay_return: replay.ret,
            }
        }
        DerivationResult::Looping { form, .. } | DerivationResult::StepLimit { form, .. } => TheoryOutcome::Looping {
            form: render_prefix(&table, &form, LOOP_FORM_SYMBOLS),
        },
        DerivationResult::Stuck { form, .. } => {
            return Err(TheoryError::Derive(format!("stuck at `{}`", table.render(&form))))
        }
    };
    Ok(TheoryReport {
        env,
        system: meta.kind(),
        k,
        grammar,
        outcome,
    })
}

/// Symbols of a non-terminating derivation kept in reports.
const LOOP_FORM_SYMBOLS: usize = 41;

fn render_prefix(table: &SymbolTable, form: &[Symbol], n: usize) -> String {
    let mut s = table.render(&form[..form.len().min(n)]);
    if form.len() > n {
        s.push_str(" ...");
    }
    s
}

/// Optimal controller for an environment, boxed for the harness APIs.
pub fn optimal_controller(env: EnvKind) -> OptimalController {
    OptimalController::new(&crate::env::EnvSpec::new(env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;

    fn goals(env: EnvKind, names: &[&str]) -> Vec<usize> {
        let spec = EnvSpec::new(env);
        names
            .iter()
            .map(|n| spec.goals.iter().position(|g| g.name == *n).unwrap())
            .collect()
    }

    #[test]
    fn fixed_goal_sequences_in_the_corridor() {
        let mut c = optimal_controller(EnvKind::Corridor);
        let r = replay_goals(
            EnvKind::Corridor,
            &mut c,
            &goals(EnvKind::Corridor, &["g6", "g5", "g6", "g0"]),
            0,
        )
        .unwrap();
        assert_eq!(r.ret, 1.0);
        assert!(r.terminated);
        assert_eq!(r.states, ["s3", "s6", "s5", "s6", "s0"]);
        let r = replay_goals(EnvKind::Corridor, &mut c, &goals(EnvKind::Corridor, &["g6", "g0"]), 0).unwrap();
        assert_eq!(r.ret, 0.01);
    }

    #[test]
    fn fixed_tour_in_the_grid() {
        let mut c = optimal_controller(EnvKind::Grid);
        let tour = goals(EnvKind::Grid, &["g4", "g0", "g20", "g0", "g24", "g0", "gτ"]);
        let r = replay_goals(EnvKind::Grid, &mut c, &tour, 0).unwrap();
        assert_eq!(r.ret, 1.0);
        // 4 + 4 + 4 + 4 + 8 + 8 + 3
        assert_eq!(r.actions, 35);
        assert!(r.actions <= 60);
    }

    #[test]
    fn moving_average_uses_partial_windows() {
        let v: Vec<f64> = (1..=5).map(f64::from).collect();
        assert_eq!(moving_average(&v, 2), vec![1.0, 1.5, 2.5, 3.5, 4.5]);
        assert_eq!(moving_average(&v, 10), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert!(moving_average(&[], 100).is_empty());
        assert_eq!(tail_mean(&v, 2), 4.5);
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let a = vec![0.0, 1.0, 1.0];
        let b = vec![1.0, 0.0, 0.0];
        let c1 = AggregateCurve::from_runs(&[a.clone(), b.clone()]);
        let c2 = AggregateCurve::from_runs(&[b, a]);
        assert_eq!(c1, c2);
        assert_eq!(c1.mean_ma100, vec![0.5, 0.5, 2.0 / 3.0 * 0.5 + 1.0 / 3.0 * 0.5]);
    }

    #[test]
    fn config_defaults_and_overrides() {
        let c = RunConfig::new(EnvKind::Corridor, SystemKind::RhReinforce, 3);
        assert_eq!((c.episodes, c.exploration_episodes), (10_000, 1000));
        let g = RunConfig::new(EnvKind::Grid, SystemKind::HDqn, 3);
        assert_eq!((g.episodes, g.exploration_episodes), (20_000, 0));
        assert_eq!(
            RunConfig::new(EnvKind::StochasticCorridor, SystemKind::HReinforce, 0).exploration_episodes,
            0
        );

        let file = ConfigFile::parse("env = \"grid\"\nlearning_rate = 0.01\nepisodes = 5\n").unwrap();
        let mut c2 = c.clone();
        c2.apply(&file);
        assert_eq!(c2.env, EnvKind::Grid);
        assert_eq!(c2.episodes, 5);
        assert_eq!(c2.exploration_episodes, 0);
        assert_eq!(c2.meta.learning_rate, 0.01);
        assert!(ConfigFile::parse("lerning_rate = 1").is_err());

        // seeds share a group, other changes do not
        let mut other_seed = c.clone();
        other_seed.seed = 9;
        assert_eq!(c.group_name(), other_seed.group_name());
        assert_ne!(c.group_name(), c2.group_name());
        let parsed: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn zero_episode_run_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(EnvKind::Corridor, SystemKind::HReinforce, 0);
        c.episodes = 0;
        c.exploration_episodes = 0;
        let exp = run_experiment(&[c.clone()], Some(dir.path()), false).unwrap();
        assert!(exp.curve.mean_ma100.is_empty());
        let csv = fs::read_to_string(c.run_dir(dir.path()).join("episodes.csv")).unwrap();
        assert_eq!(csv, "episode,return,meta_decisions,truncated\n");
        let agg = fs::read_to_string(dir.path().join(c.group_name()).join("aggregate.csv")).unwrap();
        assert_eq!(agg, "episode,mean_ma100\n");
    }

    #[test]
    fn saved_runs_reload_to_the_same_policy() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(EnvKind::Corridor, SystemKind::RhReinforce, 2);
        c.episodes = 20;
        c.exploration_episodes = 5;
        c.controller = ControllerKind::Learned;
        let exp = run_experiment(&[c.clone()], Some(dir.path()), true).unwrap();
        let loaded = load_run(&c.run_dir(dir.path())).unwrap();
        assert_eq!(loaded.config, c);
        assert_eq!(loaded.meta.save(), exp.results[0].meta.save());
        assert_eq!(loaded.controller.save(), exp.results[0].controller.save());
        assert!(c.run_dir(dir.path()).join("theory.txt").exists());
    }

    #[test]
    fn episode_return_is_sum_of_decision_rewards_and_runs_are_reproducible() {
        let mut c = RunConfig::new(EnvKind::StochasticCorridor, SystemKind::HDqn, 4);
        c.episodes = 150;
        let a = run_single(&c).unwrap();
        let b = run_single(&c).unwrap();
        assert_eq!(a.logs, b.logs);
        for l in &a.logs {
            assert!([0.0, 0.01, 1.0].contains(&l.ret), "{}", l.ret);
            assert!(l.meta_decisions >= 1);
        }
        assert_eq!(a.meta.save(), b.meta.save());
    }

    #[test]
    fn untrained_policies_give_a_report() {
        for system in SystemKind::ALL {
            for env in EnvKind::ALL {
                let spec = EnvSpec::new(env);
                let meta = make_meta(system, &spec, &MetaParams::default(), 1);
                let mut c = optimal_controller(env);
                match verify_against_theory(meta.as_ref(), env, &mut c, None) {
                    Ok(rep) => {
                        if !system.is_recurrent() {
                            assert_eq!(rep.k, 0);
                            assert_eq!(rep.witness(), None);
                        }
                    }
                    Err(TheoryError::PolicyMap(PolicyMapError::Looping(_))) => {}
                    Err(e) => panic!("{system} {env}: {e}"),
                }
            }
        }
    }
}
