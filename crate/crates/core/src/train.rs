//! Self-play episodes, the training loop and policy evaluation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{self, BaselineConfig};
use crate::env::{EnvConfig, EnvState, LogRecord, RoutingAction};
use crate::error::{NetError, TrainError};
use crate::grid::{DistributionGrid, NodeId};
use crate::mcts::{search, search_tree, visit_policy, NetEvaluator, SearchConfig, Selection};
use crate::net::{encode_state, LossParts, NetConfig, PolicyValueNet, ReplayBuffer, RmsProp, Sample};
use crate::scenario::{Case, Scenario};

/// Divides customer-hour values into the range the value output learns.
pub fn value_scale(grid: &DistributionGrid) -> f64 {
    (grid.total_customers() as f64 * grid.horizon_hours()).max(1.0)
}

/// Search temperature by decision index within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauSchedule {
    pub initial: f64,
    pub switch_after: usize,
    pub later: f64,
}

impl Default for TauSchedule {
    fn default() -> Self {
        Self { initial: 1.0, switch_after: 10, later: 0.01 }
    }
}

impl TauSchedule {
    pub fn at(&self, decision: usize) -> f64 {
        if decision < self.switch_after {
            self.initial
        } else {
            self.later
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub sims_per_move: usize,
    pub c_puct: f64,
    pub gamma: f64,
    pub tau: TauSchedule,
    pub net: NetConfig,
    pub buffer_capacity: usize,
    pub train_steps_per_episode: usize,
    pub eval_every: usize,
    /// Episodes played against one network snapshot before training resumes.
    pub actors: usize,
    pub root_noise: Option<(f64, f64)>,
    pub env: EnvConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            episodes: 2000,
            sims_per_move: 30,
            c_puct: 1.25,
            gamma: 1.0,
            tau: TauSchedule::default(),
            net: NetConfig::for_scenario(scenario),
            buffer_capacity: 20_000,
            train_steps_per_episode: 8,
            eval_every: 20,
            actors: 1,
            root_noise: None,
            env: EnvConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let counts = [
            ("episodes", self.episodes),
            ("sims_per_move", self.sims_per_move),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_every", self.eval_every),
            ("actors", self.actors),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be at least 1")));
        }
        if !(self.c_puct > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(TrainError::Config("c_puct must be positive and gamma within [0, 1]".into()));
        }
        if self.tau.initial < 0.0 || self.tau.later < 0.0 {
            return Err(TrainError::Config("temperatures must be non-negative".into()));
        }
        self.net.validate()?;
        Ok(())
    }

    fn search_config(&self, tau: f64, seed: u64) -> SearchConfig {
        SearchConfig {
            simulations: self.sims_per_move,
            selection: Selection::Puct { c: self.c_puct },
            gamma: self.gamma,
            tau,
            root_noise: self.root_noise,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub samples: Vec<Sample>,
    pub outage_hours: f64,
    pub decisions: usize,
    pub truncated: bool,
    pub log: Vec<LogRecord>,
}

/// Plays one episode with sampled damage, searching with `net` at every decision.
pub fn self_play_episode(scenario: &Scenario, net: &PolicyValueNet, cfg: &TrainConfig, seed: u64) -> Result<EpisodeRecord, TrainError> {
    let grid = scenario.grid.clone();
    let scale = value_scale(&grid);
    let eval = NetEvaluator { net, encoding: scenario.encoding, value_scale: scale };
    let mut env = EnvState::reset(scenario, cfg.env, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e1f_9a7e);
    let k = net.config().policy_dim;
    let mut samples = Vec::new();
    while !env.is_terminal() {
        let decision = env.routing.decisions;
        let sc = cfg.search_config(cfg.tau.at(decision), rng.gen());
        let result = search(&grid, &cfg.env, &env.routing, &eval, &sc)?;
        let mut pi = vec![0.0; k];
        pi[..result.policy.len()].copy_from_slice(&visit_policy(&result.visit_counts, 1.0));
        let legal: Vec<bool> = (0..k).map(|i| i < result.actions.len()).collect();
        let x = encode_state(&env.routing, &grid, scenario.encoding);
        samples.push(Sample::new(x, pi, legal, result.value_target / scale)?);
        let to = result.sample_action(&mut rng);
        let vehicle = env.next_to_dispatch()?.to_string();
        env.step_mut(&RoutingAction { vehicle, destination: to })?;
    }
    Ok(EpisodeRecord {
        samples,
        outage_hours: env.outage_hours()?,
        decisions: env.routing.decisions,
        truncated: env.routing.truncated,
        log: env.log().to_vec(),
    })
}

/// A way of choosing destinations during evaluation.
#[derive(Clone, Copy)]
pub enum Policy<'a> {
    /// Network-guided search; plays the most-visited move.
    Agent { net: &'a PolicyValueNet, sims: usize, c_puct: f64, gamma: f64 },
    Baseline(BaselineConfig),
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Agent { .. } => "alphazero",
            Self::Baseline(b) => b.algorithm.name(),
        }
    }

    pub fn simulations(&self) -> usize {
        match self {
            Self::Agent { sims, .. } => *sims,
            Self::Baseline(b) => b.simulations,
        }
    }

    /// Chosen destination, plus the root edge statistics when `dump` is set and the policy searches a tree.
    fn decide(&self, scenario: &Scenario, env: &EnvState, seed: u64, dump: bool) -> Result<(NodeId, Option<serde_json::Value>), TrainError> {
        let grid = &scenario.grid;
        match *self {
            Self::Agent { net, sims, c_puct, gamma } => {
                let eval = NetEvaluator { net, encoding: scenario.encoding, value_scale: value_scale(grid) };
                let sc = SearchConfig { simulations: sims, selection: Selection::Puct { c: c_puct }, gamma, tau: 0.0, root_noise: None, seed };
                let (result, tree) = search_tree(grid, &env.config, &env.routing, &eval, &sc)?;
                Ok((result.most_visited(), dump.then(|| tree.root_json())))
            }
            Self::Baseline(b) => Ok((baselines::decide(grid, &env.config, &env.routing, &BaselineConfig { seed, ..b })?, None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub outage_hours: f64,
    pub decisions: usize,
    pub truncated: bool,
    /// Seconds spent choosing moves.
    pub decision_seconds: f64,
    #[serde(skip)]
    pub log: Vec<LogRecord>,
}

impl EpisodeSummary {
    pub fn ms_per_decision(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            1000.0 * self.decision_seconds / self.decisions as f64
        }
    }
}

/// Runs `policy` to the end of one episode.
pub fn run_episode(scenario: &Scenario, env_cfg: EnvConfig, policy: &Policy, seed: u64) -> Result<(EnvState, EpisodeSummary), TrainError> {
    run_episode_dumped(scenario, env_cfg, policy, seed, None)
}

/// Like [`run_episode`], handing each decision's root statistics to `dump`.
pub fn run_episode_dumped(
    scenario: &Scenario,
    env_cfg: EnvConfig,
    policy: &Policy,
    seed: u64,
    mut dump: Option<&mut dyn FnMut(usize, &str, serde_json::Value)>,
) -> Result<(EnvState, EpisodeSummary), TrainError> {
    let mut env = EnvState::reset(scenario, env_cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1_0000_d15c);
    let mut spent = 0.0;
    while !env.is_terminal() {
        let started = Instant::now();
        let (to, stats) = policy.decide(scenario, &env, rng.gen(), dump.is_some())?;
        spent += started.elapsed().as_secs_f64();
        let vehicle = env.next_to_dispatch()?.to_string();
        if let (Some(f), Some(stats)) = (dump.as_mut(), stats) {
            f(env.routing.decisions, &vehicle, stats);
        }
        env.step_mut(&RoutingAction { vehicle, destination: to })?;
    }
    let summary = EpisodeSummary {
        outage_hours: env.outage_hours()?,
        decisions: env.routing.decisions,
        truncated: env.routing.truncated,
        decision_seconds: spent,
        log: env.log().to_vec(),
    };
    Ok((env, summary))
}

/// Mean outage hours of `policy` over fixed cases, case `i` run with seed `i`.
pub fn evaluate_cases(scenario: &Scenario, env_cfg: EnvConfig, policy: &Policy, cases: &[Case]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (i, case) in cases.iter().enumerate() {
        total += run_episode(&scenario.with_case(case), env_cfg, policy, i as u64)?.1.outage_hours;
    }
    Ok(total / cases.len().max(1) as f64)
}

/// Visited nodes per vehicle, e.g. `0→1→2`; vehicles separated by `; `.
pub fn trajectory_string(scenario: &Scenario, log: &[LogRecord]) -> String {
    scenario
        .vehicles
        .iter()
        .map(|v| {
            let mut nodes = vec![v.depot.to_string()];
            nodes.extend(log.iter().filter(|r| r.vehicle == v.id).map(|r| r.to.to_string()));
            nodes.join("→")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub train_steps: usize,
    pub eval_outage_hours: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
    pub l2_loss: f64,
    pub buffer_size: usize,
    pub wall_s: f64,
}

pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub optimizer: RmsProp,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<MetricsRow>,
    pub train_steps: usize,
}

/// Plays `cfg.episodes` self-play episodes, training after each group of
/// `cfg.actors` episodes, and evaluates on `eval_cases` every `cfg.eval_every`
/// episodes. `on_eval` sees each metrics row with the current network.
pub fn train_loop(
    scenario: &Scenario,
    cfg: &TrainConfig,
    eval_cases: &[Case],
    on_eval: &mut dyn FnMut(&MetricsRow, &PolicyValueNet) -> Result<(), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if eval_cases.is_empty() {
        return Err(TrainError::Config("at least one evaluation case is required".into()));
    }
    let started = Instant::now();
    let mut net = PolicyValueNet::new(cfg.net.clone())?;
    let mut opt = RmsProp::new(&net);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed ^ 0xb0ff);
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut metrics = Vec::new();
    let mut steps = 0;
    let mut recent = LossParts::default();
    let mut episode = 0;
    while episode < cfg.episodes {
        let group = cfg.actors.min(cfg.episodes - episode);
        let group_seeds: Vec<u64> = (0..group).map(|_| seeds.gen()).collect();
        let records = play_group(scenario, &net, cfg, &group_seeds)?;
        for rec in records {
            episode += 1;
            for s in rec.samples {
                buffer.push(s);
            }
            if !buffer.is_empty() && cfg.train_steps_per_episode > 0 {
                let mut sum = LossParts::default();
                for _ in 0..cfg.train_steps_per_episode {
                    let batch = buffer.sample(cfg.net.batch_size)?;
                    let parts = net.train_step(&mut opt, &batch).map_err(|e| diverged(episode, e))?;
                    if !parts.total().is_finite() || net.params().iter().any(|p| !p.is_finite()) {
                        return Err(TrainError::Diverged { episode, source: NetError::NonFiniteLoss { index: 0 } });
                    }
                    sum.value += parts.value;
                    sum.policy += parts.policy;
                    sum.l2 += parts.l2;
                    steps += 1;
                }
                let n = cfg.train_steps_per_episode as f64;
                recent = LossParts { value: sum.value / n, policy: sum.policy / n, l2: sum.l2 / n };
            }
            if episode % cfg.eval_every == 0 || episode == cfg.episodes {
                let policy = Policy::Agent { net: &net, sims: cfg.sims_per_move, c_puct: cfg.c_puct, gamma: cfg.gamma };
                let row = MetricsRow {
                    episode,
                    train_steps: steps,
                    eval_outage_hours: evaluate_cases(scenario, cfg.env, &policy, eval_cases)?,
                    value_loss: recent.value,
                    policy_loss: recent.policy,
                    l2_loss: recent.l2,
                    buffer_size: buffer.len(),
                    wall_s: started.elapsed().as_secs_f64(),
                };
                on_eval(&row, &net)?;
                metrics.push(row);
            }
        }
    }
    Ok(TrainOutcome { net, optimizer: opt, buffer, metrics, train_steps: steps })
}

fn diverged(episode: usize, e: NetError) -> TrainError {
    TrainError::Diverged { episode, source: e }
}

/// Self-play against one snapshot; results come back in seed order.
fn play_group(scenario: &Scenario, net: &PolicyValueNet, cfg: &TrainConfig, seeds: &[u64]) -> Result<Vec<EpisodeRecord>, TrainError> {
    if seeds.len() == 1 {
        return Ok(vec![self_play_episode(scenario, net, cfg, seeds[0])?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || self_play_episode(scenario, net, cfg, s))).collect();
        handles.into_iter().map(|h| h.join().expect("self-play worker panicked")).collect()
    })
}
