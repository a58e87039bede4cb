//! The `gridcrew` command line: scenario tooling, training, evaluation and comparison.
//!
//! Settings come from flags, then `GRIDCREW_*` environment variables, then the
//! TOML file named by `--config`, then built-in defaults.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::builder::FalseyValueParser;
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Algorithm, BaselineConfig};
use crate::env::EnvConfig;
use crate::error::{NetError, ScenarioError, TrainError};
use crate::generate::{generate, sample_cases, GenParams};
use crate::net::{Activation, Checkpoint, CheckpointMeta, NetConfig, PolicyValueNet};
use crate::scenario::{bundled_names, Case, CaseSet, Scenario, StateEncoding};
use crate::train::{run_episode_dumped, train_loop, trajectory_string, value_scale, MetricsRow, Policy, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, scenario or checkpoint input.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Net(NetError::Config(_)) => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "gridcrew", version, about = "Repair-crew dispatch after storm outages")]
pub struct Cli {
    /// TOML file supplying defaults; see README for its tables.
    #[arg(long, global = true, env = "GRIDCREW_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads for evaluate and compare.
    #[arg(long, global = true, env = "GRIDCREW_JOBS")]
    pub jobs: Option<usize>,
    /// Leave timing columns empty so CSV outputs are byte-reproducible.
    #[arg(long, global = true, env = "GRIDCREW_NO_TIMING", action = ArgAction::SetTrue, value_parser = FalseyValueParser::new())]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-play training; writes metrics.csv, checkpoints and manifest.json.
    Train(TrainArgs),
    /// Plays a checkpoint on fixed cases and writes one CSV row per case and seed.
    Evaluate(EvaluateArgs),
    /// Runs several algorithms on the same cases and seeds.
    Compare(CompareArgs),
    /// Writes a random radial scenario, optionally with sampled cases.
    GenScenario(GenArgs),
    /// Loads a scenario (and cases) and reports what it contains.
    ValidateScenario(ValidateArgs),
}

macro_rules! fill_from {
    ($hi:ident, $lo:ident; $($f:ident),+ $(,)?) => {
        $( if $hi.$f.is_none() { $hi.$f = $lo.$f; } )+
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Scenario file, or a bundled name (eight_node, ieee123_like).
    #[arg(long, env = "GRIDCREW_SCENARIO")]
    pub scenario: Option<String>,
    /// Evaluation cases; defaults to the scenario's bundled or sibling `.cases` file.
    #[arg(long, env = "GRIDCREW_CASES")]
    pub cases: Option<String>,
    /// Output directory.
    #[arg(long, env = "GRIDCREW_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "GRIDCREW_EPISODES")]
    pub episodes: Option<usize>,
    /// Simulations per move.
    #[arg(long, env = "GRIDCREW_SIMS")]
    pub sims: Option<usize>,
    #[arg(long, env = "GRIDCREW_C_PUCT")]
    pub c_puct: Option<f64>,
    #[arg(long, env = "GRIDCREW_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long = "lr", env = "GRIDCREW_LR")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "GRIDCREW_L2")]
    pub l2: Option<f64>,
    #[arg(long, env = "GRIDCREW_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, env = "GRIDCREW_HIDDEN", value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// relu or tanh.
    #[arg(long, env = "GRIDCREW_ACTIVATION")]
    pub activation: Option<String>,
    #[arg(long, env = "GRIDCREW_BUFFER_CAPACITY")]
    pub buffer_capacity: Option<usize>,
    /// Gradient steps after each episode.
    #[arg(long, env = "GRIDCREW_TRAIN_STEPS")]
    pub train_steps: Option<usize>,
    #[arg(long, env = "GRIDCREW_EVAL_EVERY")]
    pub eval_every: Option<usize>,
    /// Episodes played in parallel against one network snapshot.
    #[arg(long, env = "GRIDCREW_ACTORS")]
    pub actors: Option<usize>,
    /// Also keep a checkpoint at every multiple of this many episodes; 0 keeps only the final one.
    #[arg(long, env = "GRIDCREW_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
    #[arg(long, env = "GRIDCREW_TAU_INITIAL")]
    pub tau_initial: Option<f64>,
    #[arg(long, env = "GRIDCREW_TAU_SWITCH_AFTER")]
    pub tau_switch_after: Option<usize>,
    #[arg(long, env = "GRIDCREW_TAU_LATER")]
    pub tau_later: Option<f64>,
    /// Dirichlet concentration of root noise; noise is off unless set.
    #[arg(long, env = "GRIDCREW_NOISE_ALPHA")]
    pub noise_alpha: Option<f64>,
    #[arg(long, env = "GRIDCREW_NOISE_FRACTION")]
    pub noise_fraction: Option<f64>,
    #[arg(long, env = "GRIDCREW_MAX_DECISIONS")]
    pub max_decisions: Option<usize>,
    /// Stop once every line's fault probability is below this.
    #[arg(long, env = "GRIDCREW_EPSILON")]
    pub epsilon: Option<f64>,
    #[arg(long, env = "GRIDCREW_SEED")]
    pub seed: Option<u64>,
    /// Seed for the initial network weights.
    #[arg(long, env = "GRIDCREW_NET_SEED")]
    pub net_seed: Option<u64>,
}

impl TrainArgs {
    fn fill(&mut self, lo: Self) {
        let hi = self;
        fill_from!(hi, lo; scenario, cases, out, episodes, sims, c_puct, gamma, learning_rate, l2, batch_size, hidden,
            activation, buffer_capacity, train_steps, eval_every, actors, checkpoint_every, tau_initial,
            tau_switch_after, tau_later, noise_alpha, noise_fraction, max_decisions, epsilon, seed, net_seed);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long, env = "GRIDCREW_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the scenario recorded in the checkpoint.
    #[arg(long, env = "GRIDCREW_SCENARIO")]
    pub scenario: Option<String>,
    #[arg(long, env = "GRIDCREW_CASES")]
    pub cases: Option<String>,
    /// Case `i` under seed `s` runs with episode seed `1000 s + i`.
    #[arg(long, env = "GRIDCREW_SEEDS", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, env = "GRIDCREW_SIMS")]
    pub sims: Option<usize>,
    #[arg(long, env = "GRIDCREW_C_PUCT")]
    pub c_puct: Option<f64>,
    #[arg(long, env = "GRIDCREW_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long, env = "GRIDCREW_MAX_DECISIONS")]
    pub max_decisions: Option<usize>,
    #[arg(long, env = "GRIDCREW_EPSILON")]
    pub epsilon: Option<f64>,
    /// CSV output path.
    #[arg(long, env = "GRIDCREW_OUT")]
    pub out: Option<PathBuf>,
    /// JSON-lines file receiving every dispatch record.
    #[arg(long, env = "GRIDCREW_EPISODE_LOG")]
    pub episode_log: Option<PathBuf>,
    /// JSON-lines file receiving the root edge statistics of every search.
    #[arg(long, env = "GRIDCREW_TREE_DUMP")]
    pub tree_dump: Option<PathBuf>,
}

impl EvaluateArgs {
    fn fill(&mut self, lo: Self) {
        let hi = self;
        fill_from!(hi, lo; checkpoint, scenario, cases, seeds, sims, c_puct, gamma, max_decisions, epsilon, out,
            episode_log, tree_dump);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareArgs {
    #[arg(long, env = "GRIDCREW_SCENARIO")]
    pub scenario: Option<String>,
    #[arg(long, env = "GRIDCREW_CASES")]
    pub cases: Option<String>,
    /// Needed when `alphazero` is among the algorithms.
    #[arg(long, env = "GRIDCREW_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    /// Any of alphazero, vanilla_mcts, oluct, greedy; comma separated.
    #[arg(long, env = "GRIDCREW_ALGORITHMS", value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    #[arg(long, env = "GRIDCREW_AGENT_SIMS")]
    pub agent_sims: Option<usize>,
    #[arg(long, env = "GRIDCREW_BASELINE_SIMS")]
    pub baseline_sims: Option<usize>,
    #[arg(long, env = "GRIDCREW_C_PUCT")]
    pub c_puct: Option<f64>,
    #[arg(long, env = "GRIDCREW_UCT_C")]
    pub uct_c: Option<f64>,
    #[arg(long, env = "GRIDCREW_ROLLOUT_DEPTH")]
    pub rollout_depth: Option<usize>,
    #[arg(long, env = "GRIDCREW_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long, env = "GRIDCREW_SEEDS", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, env = "GRIDCREW_MAX_DECISIONS")]
    pub max_decisions: Option<usize>,
    #[arg(long, env = "GRIDCREW_EPSILON")]
    pub epsilon: Option<f64>,
    /// Output directory for compare.csv, summary.csv and manifest.json.
    #[arg(long, env = "GRIDCREW_OUT")]
    pub out: Option<PathBuf>,
}

impl CompareArgs {
    fn fill(&mut self, lo: Self) {
        let hi = self;
        fill_from!(hi, lo; scenario, cases, checkpoint, algorithms, agent_sims, baseline_sims, c_puct, uct_c,
            rollout_depth, gamma, seeds, max_decisions, epsilon, out);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// radial or ieee123.
    #[arg(long, env = "GRIDCREW_TEMPLATE")]
    pub template: Option<String>,
    #[arg(long, env = "GRIDCREW_ID")]
    pub id: Option<String>,
    #[arg(long, env = "GRIDCREW_ZONES")]
    pub zones: Option<usize>,
    #[arg(long, env = "GRIDCREW_SEGMENTS")]
    pub segments: Option<usize>,
    #[arg(long, env = "GRIDCREW_LINES")]
    pub lines: Option<usize>,
    #[arg(long, env = "GRIDCREW_CUSTOMERS")]
    pub customers: Option<usize>,
    /// line or segment.
    #[arg(long, env = "GRIDCREW_ENCODING")]
    pub encoding: Option<String>,
    #[arg(long, env = "GRIDCREW_SEED")]
    pub seed: Option<u64>,
    /// Scenario output path.
    #[arg(long, env = "GRIDCREW_OUT")]
    pub out: Option<PathBuf>,
    /// Also sample this many fixed-damage cases into a sibling `.cases` file.
    #[arg(long = "cases", env = "GRIDCREW_CASE_COUNT")]
    pub case_count: Option<usize>,
    #[arg(long, env = "GRIDCREW_MAX_DAMAGED")]
    pub max_damaged: Option<usize>,
}

impl GenArgs {
    fn fill(&mut self, lo: Self) {
        let hi = self;
        fill_from!(hi, lo; template, id, zones, segments, lines, customers, encoding, seed, out, case_count, max_damaged);
    }
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Scenario file or bundled name.
    pub scenario: String,
    /// Case file to check against the scenario.
    #[arg(long)]
    pub cases: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    jobs: Option<usize>,
    no_timing: Option<bool>,
    train: TrainArgs,
    evaluate: EvaluateArgs,
    compare: CompareArgs,
    gen_scenario: GenArgs,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Written before any work starts; replaying `argv` with the same inputs reproduces the run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub scenarios: Vec<String>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub code_version: String,
    /// sha256 of the checkpoint read or written at the start.
    pub checkpoint: Option<String>,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| write_err(path, e))
    }
}

struct Ctx {
    argv: Vec<String>,
    jobs: usize,
    no_timing: bool,
}

impl Ctx {
    fn manifest(&self, command: &str, config: serde_json::Value) -> RunManifest {
        RunManifest {
            command: command.into(),
            argv: self.argv.clone(),
            config,
            scenarios: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            checkpoint: None,
        }
    }

    fn timing(&self, ms: f64) -> Option<f64> {
        (!self.no_timing).then_some(ms)
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let file = read_config(cli.config.as_deref())?;
    let ctx = Ctx {
        argv,
        jobs: cli.jobs.or(file.jobs).unwrap_or(1).max(1),
        no_timing: cli.no_timing || file.no_timing.unwrap_or(false),
    };
    match cli.command {
        Command::Train(mut a) => {
            a.fill(file.train);
            cmd_train(&ctx, a)
        }
        Command::Evaluate(mut a) => {
            a.fill(file.evaluate);
            cmd_evaluate(&ctx, a)
        }
        Command::Compare(mut a) => {
            a.fill(file.compare);
            cmd_compare(&ctx, a)
        }
        Command::GenScenario(mut a) => {
            a.fill(file.gen_scenario);
            cmd_gen_scenario(&ctx, a)
        }
        Command::ValidateScenario(a) => cmd_validate(a),
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required (flag, GRIDCREW_ variable or config file)")))
}

/// Explicit case file, else the bundled set of a bundled scenario, else `<scenario>.cases` beside the file.
fn load_cases(cases: Option<&str>, scenario_arg: &str, scenario: &Scenario) -> Result<CaseSet, CliError> {
    if let Some(c) = cases {
        return Ok(CaseSet::resolve(c, &scenario.grid)?);
    }
    let sibling = Path::new(scenario_arg).with_extension("cases");
    if sibling.is_file() {
        return Ok(CaseSet::load(&sibling, &scenario.grid)?);
    }
    if !Path::new(scenario_arg).exists() {
        if let Some(set) = CaseSet::bundled(scenario_arg, &scenario.grid) {
            return Ok(set);
        }
    }
    Err(CliError::Usage(format!("no case file found for {scenario_arg}; pass --cases")))
}

fn env_config(max_decisions: Option<usize>, epsilon: Option<f64>) -> Result<EnvConfig, CliError> {
    let d = EnvConfig::default();
    let cfg = EnvConfig { max_decisions: max_decisions.unwrap_or(d.max_decisions), epsilon: epsilon.unwrap_or(d.epsilon), ..d };
    if cfg.max_decisions == 0 || !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(CliError::Usage("max_decisions must be positive and epsilon within (0, 1)".into()));
    }
    Ok(cfg)
}

fn load_checkpoint(path: &Path, scenario: Option<&Scenario>) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::load(path).map_err(|e| match e {
        NetError::Io(io) => CliError::Usage(format!("cannot read checkpoint {}: {io}", path.display())),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })?;
    if let Some(s) = scenario {
        let want = NetConfig::for_scenario(s);
        let got = ck.net.config();
        if got.input_dim != want.input_dim || got.policy_dim != want.policy_dim {
            return Err(CliError::Usage(format!(
                "checkpoint {} has input/policy sizes {}/{}, scenario {} needs {}/{}",
                path.display(),
                got.input_dim,
                got.policy_dim,
                s.id,
                want.input_dim,
                want.policy_dim
            )));
        }
    }
    Ok(ck)
}

/// Runs `f` over `items` on `jobs` threads; results keep the order of `items`.
fn fan_out<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R, CliError>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot is filled")).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| write_err(path, e))
}

fn parse_activation(s: &str) -> Result<Activation, CliError> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(CliError::Usage(format!("unknown activation {other:?}; use relu or tanh"))),
    }
}

// ---------------------------------------------------------------------------
// train

#[derive(Serialize)]
struct MetricsCsv {
    episode: usize,
    train_steps: usize,
    eval_outage_hours: f64,
    value_loss: f64,
    policy_loss: f64,
    l2_loss: f64,
    buffer_size: usize,
    wall_s: Option<f64>,
}

fn train_config(a: &TrainArgs, scenario: &Scenario) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::for_scenario(scenario);
    cfg.episodes = a.episodes.unwrap_or(cfg.episodes);
    cfg.sims_per_move = a.sims.unwrap_or(cfg.sims_per_move);
    cfg.c_puct = a.c_puct.unwrap_or(cfg.c_puct);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.net.learning_rate = a.learning_rate.unwrap_or(cfg.net.learning_rate);
    cfg.net.l2 = a.l2.unwrap_or(cfg.net.l2);
    cfg.net.batch_size = a.batch_size.unwrap_or(cfg.net.batch_size);
    if let Some(h) = &a.hidden {
        cfg.net.hidden_dims = h.clone();
    }
    if let Some(act) = &a.activation {
        cfg.net.activation = parse_activation(act)?;
    }
    cfg.net.seed = a.net_seed.unwrap_or(cfg.net.seed);
    cfg.buffer_capacity = a.buffer_capacity.unwrap_or(cfg.buffer_capacity);
    cfg.train_steps_per_episode = a.train_steps.unwrap_or(cfg.train_steps_per_episode);
    cfg.eval_every = a.eval_every.unwrap_or(cfg.eval_every);
    cfg.actors = a.actors.unwrap_or(cfg.actors);
    cfg.tau.initial = a.tau_initial.unwrap_or(cfg.tau.initial);
    cfg.tau.switch_after = a.tau_switch_after.unwrap_or(cfg.tau.switch_after);
    cfg.tau.later = a.tau_later.unwrap_or(cfg.tau.later);
    cfg.root_noise = match (a.noise_alpha, a.noise_fraction) {
        (None, None) => None,
        (Some(alpha), frac) => Some((alpha, frac.unwrap_or(0.25))),
        (None, Some(_)) => return Err(CliError::Usage("--noise-fraction needs --noise-alpha".into())),
    };
    if let Some((alpha, frac)) = cfg.root_noise {
        if !(alpha > 0.0) || !(0.0..=1.0).contains(&frac) {
            return Err(CliError::Usage("noise alpha must be positive and fraction within [0, 1]".into()));
        }
    }
    cfg.env = env_config(a.max_decisions, a.epsilon)?;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let scenario_arg = required(a.scenario.clone(), "scenario")?;
    let scenario = Scenario::resolve(&scenario_arg)?;
    let cases = load_cases(a.cases.as_deref(), &scenario_arg, &scenario)?;
    let cfg = train_config(&a, &scenario)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs/train"));
    let ck_every = a.checkpoint_every.unwrap_or(500);
    std::fs::create_dir_all(out.join("checkpoints")).map_err(|e| write_err(&out, e))?;

    let metrics_path = out.join("metrics.csv");
    let final_path = out.join("final.ckpt");
    let mut manifest = ctx.manifest(
        "train",
        serde_json::json!({ "args": a, "resolved": cfg, "jobs": ctx.jobs, "no_timing": ctx.no_timing }),
    );
    manifest.scenarios = vec![scenario.id.clone()];
    manifest.seeds = vec![cfg.seed];
    manifest.outputs = vec![metrics_path.display().to_string(), final_path.display().to_string()];
    manifest.write(&out.join("manifest.json"))?;

    let mut metrics = csv_writer(&metrics_path)?;
    let scale = value_scale(&scenario.grid);
    // evaluate falls back to this when --scenario is not given
    let source = match std::fs::canonicalize(&scenario_arg) {
        Ok(p) if p.is_file() => p.display().to_string(),
        _ => scenario_arg.clone(),
    };
    let meta = |episodes: usize| CheckpointMeta { config: cfg.net.clone(), value_scale: scale, scenario: source.clone(), episodes };
    let mut on_eval = |row: &MetricsRow, net: &PolicyValueNet| -> Result<(), TrainError> {
        let rec = MetricsCsv {
            episode: row.episode,
            train_steps: row.train_steps,
            eval_outage_hours: row.eval_outage_hours,
            value_loss: row.value_loss,
            policy_loss: row.policy_loss,
            l2_loss: row.l2_loss,
            buffer_size: row.buffer_size,
            wall_s: ctx.timing(row.wall_s),
        };
        metrics.serialize(rec).and_then(|_| Ok(metrics.flush()?)).map_err(|e| TrainError::Net(NetError::Io(std::io::Error::other(e))))?;
        eprintln!(
            "episode {:>6}  eval {:>10.2} h  value {:.5}  policy {:.5}",
            row.episode, row.eval_outage_hours, row.value_loss, row.policy_loss
        );
        if ck_every > 0 && row.episode % ck_every == 0 {
            let ck = Checkpoint { meta: meta(row.episode), net: net.clone(), optimizer: None };
            ck.save(&out.join("checkpoints").join(format!("episode_{:06}.ckpt", row.episode)))?;
        }
        Ok(())
    };
    let outcome = train_loop(&scenario, &cfg, &cases.cases, &mut on_eval)?;
    let ck = Checkpoint { meta: meta(cfg.episodes), net: outcome.net, optimizer: Some(outcome.optimizer) };
    ck.save(&final_path).map_err(|e| write_err(&final_path, e))?;
    println!("wrote {} and {} (sha256 {})", metrics_path.display(), final_path.display(), ck.digest());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Serialize)]
struct EvalCsv {
    case: String,
    seed: u64,
    calls: String,
    damaged: String,
    outage_hours: f64,
    decisions: usize,
    truncated: bool,
    trajectory: String,
    ms_per_decision: Option<f64>,
}

struct EpisodeRun {
    outage_hours: f64,
    decisions: usize,
    truncated: bool,
    trajectory: String,
    ms_per_decision: f64,
    log: Vec<serde_json::Value>,
    dumps: Vec<serde_json::Value>,
}

fn play_case(scenario: &Scenario, env_cfg: EnvConfig, policy: &Policy, case: &Case, seed: u64, keep: (bool, bool)) -> Result<EpisodeRun, CliError> {
    let sc = scenario.with_case(case);
    let mut dumps = Vec::new();
    let mut push = |decision: usize, vehicle: &str, stats: serde_json::Value| {
        dumps.push(serde_json::json!({ "case": case.name, "seed": seed, "decision": decision, "vehicle": vehicle, "root": stats }));
    };
    let dump: Option<&mut dyn FnMut(usize, &str, serde_json::Value)> = if keep.1 { Some(&mut push) } else { None };
    let (_, summary) = run_episode_dumped(&sc, env_cfg, policy, seed, dump)?;
    let log = if keep.0 {
        summary
            .log
            .iter()
            .map(|r| serde_json::json!({ "case": case.name, "seed": seed, "record": r }))
            .collect()
    } else {
        Vec::new()
    };
    Ok(EpisodeRun {
        outage_hours: summary.outage_hours,
        decisions: summary.decisions,
        truncated: summary.truncated,
        trajectory: trajectory_string(&sc, &summary.log),
        ms_per_decision: summary.ms_per_decision(),
        log,
        dumps,
    })
}

fn write_jsonl(path: &Path, items: impl Iterator<Item = serde_json::Value>) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| write_err(path, e))?;
    let mut w = BufWriter::new(f);
    for v in items {
        writeln!(w, "{v}").map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    let ck_path = required(a.checkpoint.clone(), "checkpoint")?;
    let probe = load_checkpoint(&ck_path, None)?;
    let scenario_arg = a.scenario.clone().unwrap_or_else(|| probe.meta.scenario.clone());
    let scenario = Scenario::resolve(&scenario_arg)?;
    let ck = load_checkpoint(&ck_path, Some(&scenario))?;
    let cases = load_cases(a.cases.as_deref(), &scenario_arg, &scenario)?;
    let env_cfg = env_config(a.max_decisions, a.epsilon)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![0]);
    let sims = a.sims.unwrap_or(30);
    if sims == 0 || seeds.is_empty() {
        return Err(CliError::Usage("--sims must be positive and --seeds non-empty".into()));
    }
    let policy = Policy::Agent { net: &ck.net, sims, c_puct: a.c_puct.unwrap_or(1.25), gamma: a.gamma.unwrap_or(1.0) };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("evaluate.csv"));

    let mut manifest = ctx.manifest(
        "evaluate",
        serde_json::json!({ "args": a, "sims": sims, "env": env_cfg, "jobs": ctx.jobs, "no_timing": ctx.no_timing }),
    );
    manifest.scenarios = vec![scenario.id.clone()];
    manifest.seeds = seeds.clone();
    manifest.outputs = std::iter::once(&out).chain(&a.episode_log).chain(&a.tree_dump).map(|p| p.display().to_string()).collect();
    manifest.checkpoint = Some(ck.digest());
    manifest.write(&manifest_path(&out))?;

    let tasks: Vec<(usize, u64)> = (0..cases.cases.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let keep = (a.episode_log.is_some(), a.tree_dump.is_some());
    let runs = fan_out(ctx.jobs, &tasks, |&(i, s)| {
        play_case(&scenario, env_cfg, &policy, &cases.cases[i], episode_seed(s, i), keep)
    })?;

    let mut w = csv_writer(&out)?;
    let mut total = 0.0;
    for (&(i, s), run) in tasks.iter().zip(&runs) {
        let case = &cases.cases[i];
        total += run.outage_hours;
        let row = EvalCsv {
            case: case.name.clone(),
            seed: s,
            calls: case.calls_string(&scenario.grid, &cases.customer_order),
            damaged: case.damaged_ids(&scenario.grid).join(" "),
            outage_hours: run.outage_hours,
            decisions: run.decisions,
            truncated: run.truncated,
            trajectory: run.trajectory.clone(),
            ms_per_decision: ctx.timing(run.ms_per_decision),
        };
        println!("case {:>4}  seed {:>3}  {:>10.2} h  {}", row.case, s, row.outage_hours, row.trajectory);
        w.serialize(row).map_err(|e| write_err(&out, e))?;
    }
    w.flush().map_err(|e| write_err(&out, e))?;
    if let Some(p) = &a.episode_log {
        write_jsonl(p, runs.iter().flat_map(|r| r.log.iter().cloned()))?;
    }
    if let Some(p) = &a.tree_dump {
        write_jsonl(p, runs.iter().flat_map(|r| r.dumps.iter().cloned()))?;
    }
    println!("mean outage {:.3} customer-hours over {} runs; wrote {}", total / runs.len() as f64, runs.len(), out.display());
    Ok(())
}

fn episode_seed(seed: u64, case: usize) -> u64 {
    seed * 1000 + case as u64
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Serialize)]
struct CompareCsv<'a> {
    case: &'a str,
    algorithm: &'a str,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
    outage_hours: f64,
    decisions: usize,
    ms_per_decision: Option<f64>,
}

#[derive(Serialize)]
struct SummaryCsv<'a> {
    case: &'a str,
    algorithm: &'a str,
    #[serde(rename = "M")]
    m: usize,
    runs: usize,
    mean_outage_hours: f64,
    mean_ms_per_decision: Option<f64>,
}

fn parse_algorithm(name: &str) -> Result<Option<Algorithm>, CliError> {
    match name {
        "alphazero" => Ok(None),
        "vanilla_mcts" => Ok(Some(Algorithm::VanillaMcts)),
        "oluct" => Ok(Some(Algorithm::Oluct)),
        "greedy" => Ok(Some(Algorithm::Greedy)),
        other => Err(CliError::Usage(format!("unknown algorithm {other:?}; use alphazero, vanilla_mcts, oluct or greedy"))),
    }
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> Result<(), CliError> {
    let scenario_arg = required(a.scenario.clone(), "scenario")?;
    let scenario = Scenario::resolve(&scenario_arg)?;
    let cases = load_cases(a.cases.as_deref(), &scenario_arg, &scenario)?;
    let env_cfg = env_config(a.max_decisions, a.epsilon)?;
    let names = a.algorithms.clone().unwrap_or_else(|| {
        let mut v: Vec<String> = vec!["vanilla_mcts".into(), "oluct".into()];
        if a.checkpoint.is_some() {
            v.insert(0, "alphazero".into());
        }
        v
    });
    let algos = names.iter().map(|n| parse_algorithm(n)).collect::<Result<Vec<_>, _>>()?;
    let ck = match (algos.iter().any(Option::is_none), &a.checkpoint) {
        (true, Some(p)) => Some(load_checkpoint(p, Some(&scenario))?),
        (true, None) => return Err(CliError::Usage("alphazero needs --checkpoint".into())),
        (false, _) => None,
    };
    let seeds = a.seeds.clone().unwrap_or_else(|| (0..5).collect());
    let agent_sims = a.agent_sims.unwrap_or(30);
    let baseline_sims = a.baseline_sims.unwrap_or(200);
    let gamma = a.gamma.unwrap_or(1.0);
    if agent_sims == 0 || baseline_sims == 0 || seeds.is_empty() || names.is_empty() {
        return Err(CliError::Usage("simulation counts must be positive; seeds and algorithms non-empty".into()));
    }
    let policies: Vec<Policy> = algos
        .iter()
        .map(|alg| match alg {
            None => Policy::Agent {
                net: &ck.as_ref().expect("checkpoint loaded").net,
                sims: agent_sims,
                c_puct: a.c_puct.unwrap_or(1.25),
                gamma,
            },
            Some(alg) => {
                let d = BaselineConfig::new(*alg);
                Policy::Baseline(BaselineConfig {
                    simulations: baseline_sims,
                    uct_c: a.uct_c.unwrap_or(d.uct_c),
                    rollout_depth: a.rollout_depth.unwrap_or(d.rollout_depth),
                    gamma,
                    ..d
                })
            }
        })
        .collect();

    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("runs/compare"));
    std::fs::create_dir_all(&out).map_err(|e| write_err(&out, e))?;
    let long_path = out.join("compare.csv");
    let summary_path = out.join("summary.csv");
    let mut manifest = ctx.manifest(
        "compare",
        serde_json::json!({ "args": a, "algorithms": names, "agent_sims": agent_sims, "baseline_sims": baseline_sims,
            "env": env_cfg, "jobs": ctx.jobs, "no_timing": ctx.no_timing }),
    );
    manifest.scenarios = vec![scenario.id.clone()];
    manifest.seeds = seeds.clone();
    manifest.outputs = vec![long_path.display().to_string(), summary_path.display().to_string()];
    manifest.checkpoint = ck.as_ref().map(Checkpoint::digest);
    manifest.write(&out.join("manifest.json"))?;

    let mut tasks: Vec<(usize, usize, u64)> = Vec::new();
    for i in 0..cases.cases.len() {
        for p in 0..policies.len() {
            tasks.extend(seeds.iter().map(|&s| (i, p, s)));
        }
    }
    let runs = fan_out(ctx.jobs, &tasks, |&(i, p, s)| {
        play_case(&scenario, env_cfg, &policies[p], &cases.cases[i], episode_seed(s, i), (false, false))
    })?;

    let mut w = csv_writer(&long_path)?;
    for (&(i, p, s), run) in tasks.iter().zip(&runs) {
        w.serialize(CompareCsv {
            case: &cases.cases[i].name,
            algorithm: policies[p].name(),
            m: policies[p].simulations(),
            seed: s,
            outage_hours: run.outage_hours,
            decisions: run.decisions,
            ms_per_decision: ctx.timing(run.ms_per_decision),
        })
        .map_err(|e| write_err(&long_path, e))?;
    }
    w.flush().map_err(|e| write_err(&long_path, e))?;

    let mut sw = csv_writer(&summary_path)?;
    let per_case = seeds.len();
    let mut overall = vec![(0.0, 0.0); policies.len()];
    for (i, case) in cases.cases.iter().enumerate() {
        for (p, policy) in policies.iter().enumerate() {
            let block: Vec<&EpisodeRun> =
                tasks.iter().zip(&runs).filter(|((ci, pi, _), _)| *ci == i && *pi == p).map(|(_, r)| r).collect();
            let hours = block.iter().map(|r| r.outage_hours).sum::<f64>() / per_case as f64;
            let ms = block.iter().map(|r| r.ms_per_decision).sum::<f64>() / per_case as f64;
            overall[p].0 += hours;
            overall[p].1 += ms;
            sw.serialize(SummaryCsv {
                case: &case.name,
                algorithm: policy.name(),
                m: policy.simulations(),
                runs: per_case,
                mean_outage_hours: hours,
                mean_ms_per_decision: ctx.timing(ms),
            })
            .map_err(|e| write_err(&summary_path, e))?;
        }
    }
    let n = cases.cases.len().max(1) as f64;
    println!("{:<14} {:>5} {:>14} {:>14}", "algorithm", "M", "mean hours", "ms/decision");
    for (p, policy) in policies.iter().enumerate() {
        let (hours, ms) = (overall[p].0 / n, overall[p].1 / n);
        sw.serialize(SummaryCsv {
            case: "mean",
            algorithm: policy.name(),
            m: policy.simulations(),
            runs: per_case * cases.cases.len(),
            mean_outage_hours: hours,
            mean_ms_per_decision: ctx.timing(ms),
        })
        .map_err(|e| write_err(&summary_path, e))?;
        let ms_text = if ctx.no_timing { "-".to_string() } else { format!("{ms:.2}") };
        println!("{:<14} {:>5} {:>14.3} {:>14}", policy.name(), policy.simulations(), hours, ms_text);
    }
    sw.flush().map_err(|e| write_err(&summary_path, e))?;
    println!("wrote {} and {}", long_path.display(), summary_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// scenario tooling

fn cmd_gen_scenario(ctx: &Ctx, a: GenArgs) -> Result<(), CliError> {
    let seed = a.seed.unwrap_or(0);
    let mut p = match a.template.as_deref().unwrap_or("radial") {
        "radial" => GenParams::radial(a.lines.unwrap_or(7), seed),
        "ieee123" => GenParams::ieee123_like(seed),
        other => return Err(CliError::Usage(format!("unknown template {other:?}; use radial or ieee123"))),
    };
    if let Some(id) = &a.id {
        p.id = id.clone();
    }
    p.zones = a.zones.unwrap_or(p.zones);
    p.segments = a.segments.unwrap_or(p.segments);
    p.lines = a.lines.unwrap_or(p.lines);
    p.customers = a.customers.unwrap_or(p.customers);
    if let Some(enc) = &a.encoding {
        p.encoding = match enc.as_str() {
            "line" => StateEncoding::Line,
            "segment" => StateEncoding::Segment,
            other => return Err(CliError::Usage(format!("unknown encoding {other:?}; use line or segment"))),
        };
    }
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.scenario", p.id)));
    let cases_path = out.with_extension("cases");
    let mut manifest = ctx.manifest("gen-scenario", serde_json::json!({ "args": a }));
    manifest.scenarios = vec![p.id.clone()];
    manifest.seeds = vec![seed];
    manifest.outputs = std::iter::once(&out)
        .chain(a.case_count.map(|_| &cases_path))
        .map(|x| x.display().to_string())
        .collect();
    manifest.write(&manifest_path(&out))?;

    let text = generate(&p).map_err(CliError::Usage)?.to_toml();
    let scenario = Scenario::from_toml(&text, &out)
        .map_err(|e| CliError::Runtime(format!("generated scenario failed validation: {e}")))?;
    std::fs::write(&out, &text).map_err(|e| write_err(&out, e))?;
    let g = &scenario.grid;
    println!(
        "wrote {}: {} road nodes, {} lines, {} segments, {} customer nodes, {} zones",
        out.display(),
        g.road.node_count(),
        g.lines.len(),
        g.segments.len(),
        g.customers.len(),
        g.zones.len()
    );
    if let Some(n) = a.case_count {
        let set = sample_cases(g, n, a.max_damaged.unwrap_or(3), seed);
        std::fs::write(&cases_path, set.to_toml(g)).map_err(|e| write_err(&cases_path, e))?;
        println!("wrote {} with {n} cases", cases_path.display());
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), CliError> {
    let scenario = Scenario::resolve(&a.scenario).map_err(|e| {
        let known = bundled_names().collect::<Vec<_>>().join(", ");
        match e.rule() {
            Some(rule) => CliError::Usage(format!("{e} (rule: {rule})")),
            None if !Path::new(&a.scenario).exists() => CliError::Usage(format!("{e} (bundled names: {known})")),
            None => CliError::Usage(e.to_string()),
        }
    })?;
    let g = &scenario.grid;
    println!("scenario        {}", scenario.id);
    println!("road nodes      {}", g.road.node_count());
    println!("road edges      {}", g.road.edges().len());
    println!("lines           {}", g.lines.len());
    println!("segments        {}", g.segments.len());
    println!("customer nodes  {}", g.customers.len());
    println!("customers       {}", g.total_customers());
    println!("circuits        {}", g.circuits.len());
    println!("zones           {}", g.zones.len());
    println!("vehicles        {}", scenario.vehicles.len());
    println!("max actions     {}", g.max_feasible_actions());
    if let Some(c) = &a.cases {
        let set = CaseSet::resolve(c, g)?;
        println!("cases           {}", set.cases.len());
    }
    Ok(())
}
