//! Multi-vehicle repair dispatch as a sequential decision process.
//!
//! Time is a global clock in minutes. Whenever a vehicle finishes its current
//! move it asks for a new destination; waiting vehicles are served in priority
//! order. A move's outcome (which lines on the traversed road edge are damaged)
//! is fixed when the move starts and becomes part of the belief when the
//! vehicle arrives.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::belief::{Belief, BeliefConfig, Finding, LineStatus, Traversal};
use crate::error::EnvError;
use crate::grid::{DistributionGrid, NodeId};
use crate::scenario::{check_calls_consistent, CallSpec, DamageSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvConfig {
    /// Episode ends once every line's fault probability is below this.
    pub epsilon: f64,
    pub max_decisions: usize,
    /// Mean customer reporting delay in minutes; `None` means every call is known at reset.
    pub call_delay_minutes: Option<f64>,
    pub belief: BeliefConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { epsilon: 0.02, max_decisions: 200, call_delay_minutes: None, belief: BeliefConfig::default() }
    }
}

/// Result of driving over a road edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    NoLineOnEdge,
    /// Bit `i` is set when the `i`-th line on the edge is damaged.
    Lines(u32),
}

impl Observation {
    pub fn is_damaged(&self) -> bool {
        matches!(self, Self::Lines(m) if *m != 0)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::NoLineOnEdge => "no_line",
            Self::Lines(0) => "intact",
            Self::Lines(_) => "damaged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pending {
    pub from: NodeId,
    pub edge: usize,
    /// Clock time the move started.
    pub departed: f64,
    pub findings: Vec<(usize, Finding)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleState {
    pub id: String,
    pub zone: usize,
    pub rank: u32,
    pub position: NodeId,
    /// Clock time the current move finishes.
    pub busy_until: f64,
    #[serde(skip)]
    pub pending: Option<Pending>,
}

impl VehicleState {
    pub fn en_route(&self) -> bool {
        self.pending.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingAction {
    pub vehicle: String,
    pub destination: NodeId,
}

/// Everything the dispatcher can see.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub clock: f64,
    /// Sorted by priority rank.
    pub vehicles: Vec<VehicleState>,
    pub belief: Belief,
    /// Indices into `vehicles` of idle vehicles awaiting a destination, highest priority first.
    pub queue: Vec<usize>,
    pub decisions: usize,
    pub terminal: bool,
    pub truncated: bool,
}

/// Externally scheduled belief changes, such as late trouble calls.
pub trait EventSource {
    fn next_time(&self) -> Option<f64>;
    fn fire(&mut self, grid: &DistributionGrid, belief: &mut Belief, now: f64) -> Result<(), EnvError>;
}

pub struct NoEvents;

impl EventSource for NoEvents {
    fn next_time(&self) -> Option<f64> {
        None
    }
    fn fire(&mut self, _: &DistributionGrid, _: &mut Belief, _: f64) -> Result<(), EnvError> {
        Ok(())
    }
}

/// Expected number of de-energized customers when line `k` is faulted with probability `posterior[k]`.
pub fn expected_outage_of(grid: &DistributionGrid, posterior: &[f64]) -> f64 {
    grid.segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let n = grid.segment_customer_count(s) as f64;
            if n == 0.0 {
                return 0.0;
            }
            let energized: f64 = seg.cut_set.iter().map(|&k| 1.0 - posterior[k]).product();
            (1.0 - energized) * n
        })
        .sum()
}

pub fn expected_outage(grid: &DistributionGrid, belief: &Belief) -> f64 {
    expected_outage_of(grid, belief.posterior())
}

/// Travel plus expected repair minutes for driving `from -> to`.
pub fn expected_duration(grid: &DistributionGrid, belief: &Belief, from: NodeId, to: NodeId) -> f64 {
    let edge = grid.road.edge_between(from, to).expect("legal move");
    let repair: f64 = grid
        .lines_on_edge(edge)
        .iter()
        .map(|&l| belief.posterior()[l] * grid.lines[l].repair_minutes)
        .sum();
    grid.road.edge(edge).minutes + repair
}

/// Customer-hours lost over `minutes` at the current expected outage (never positive).
pub fn reward_of(grid: &DistributionGrid, posterior: &[f64], minutes: f64) -> f64 {
    -expected_outage_of(grid, posterior) * minutes / 60.0
}

/// Expected customer-hours lost while the move `from -> to` is carried out.
pub fn reward(grid: &DistributionGrid, belief: &Belief, from: NodeId, to: NodeId) -> f64 {
    reward_of(grid, belief.posterior(), expected_duration(grid, belief, from, to))
}

impl RoutingState {
    pub fn new(grid: &DistributionGrid, vehicles: Vec<VehicleState>, belief: Belief, cfg: &EnvConfig) -> Result<Self, EnvError> {
        let mut s = Self { clock: 0.0, vehicles, belief, queue: Vec::new(), decisions: 0, terminal: false, truncated: false };
        s.vehicles.sort_by_key(|v| v.rank);
        s.advance(grid, cfg, &mut NoEvents)?;
        Ok(s)
    }

    /// Vehicle index at the head of the request queue.
    pub fn next_to_dispatch(&self) -> Result<usize, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        self.queue.first().copied().ok_or(EnvError::EmptyQueue)
    }

    /// Destinations open to the vehicle at the head of the queue.
    pub fn legal_actions(&self, grid: &DistributionGrid) -> Result<Vec<NodeId>, EnvError> {
        let v = &self.vehicles[self.next_to_dispatch()?];
        Ok(grid.feasible_actions(v.position, v.zone)?)
    }

    fn zone_has_work(&self, grid: &DistributionGrid, zone: usize, epsilon: f64) -> bool {
        let post = self.belief.posterior();
        (0..grid.lines.len()).any(|l| grid.line_zone(l) == zone && post[l] >= epsilon)
    }

    /// Draws the outcome of moving the head vehicle to `to`, treating the
    /// current belief as the truth.
    pub fn sample_observation<R: Rng>(&self, grid: &DistributionGrid, to: NodeId, rng: &mut R) -> Result<Observation, EnvError> {
        let v = &self.vehicles[self.next_to_dispatch()?];
        let edge = grid
            .road
            .edge_between(v.position, to)
            .ok_or_else(|| EnvError::IllegalAction { vehicle: v.id.clone(), from: v.position, to })?;
        let lines = grid.lines_on_edge(edge);
        match lines {
            [] => Ok(Observation::NoLineOnEdge),
            [l] => Ok(Observation::Lines(u32::from(rng.gen::<f64>() < self.belief.posterior()[*l]))),
            _ => {
                // condition each line on the ones drawn before it
                let mut b = self.belief.clone();
                let mut mask = 0;
                for (i, &l) in lines.iter().enumerate() {
                    let damaged = rng.gen::<f64>() < b.posterior()[l];
                    if damaged {
                        mask |= 1 << i;
                    }
                    if b.status()[l] == LineStatus::Unvisited {
                        b.observe_in_place(grid, &[(l, if damaged { Finding::Damaged } else { Finding::Intact })])?;
                    }
                }
                Ok(Observation::Lines(mask))
            }
        }
    }

    /// Exact distribution of outcomes of moving the head vehicle to `to`.
    pub fn observation_distribution(&self, grid: &DistributionGrid, to: NodeId) -> Result<Vec<(Observation, f64)>, EnvError> {
        let v = &self.vehicles[self.next_to_dispatch()?];
        let edge = grid
            .road
            .edge_between(v.position, to)
            .ok_or_else(|| EnvError::IllegalAction { vehicle: v.id.clone(), from: v.position, to })?;
        let lines = grid.lines_on_edge(edge);
        if lines.is_empty() {
            return Ok(vec![(Observation::NoLineOnEdge, 1.0)]);
        }
        let mut out = Vec::new();
        for mask in 0u32..(1 << lines.len()) {
            let mut b = self.belief.clone();
            let mut p = 1.0;
            for (i, &l) in lines.iter().enumerate() {
                let damaged = mask >> i & 1 == 1;
                let q = b.posterior()[l];
                p *= if damaged { q } else { 1.0 - q };
                if p == 0.0 {
                    break;
                }
                if b.status()[l] == LineStatus::Unvisited {
                    b.observe_in_place(grid, &[(l, if damaged { Finding::Damaged } else { Finding::Intact })])?;
                }
            }
            if p > 0.0 {
                out.push((Observation::Lines(mask), p));
            }
        }
        Ok(out)
    }

    /// Dispatches the head vehicle to `to` with a known outcome, then runs the
    /// clock forward to the next decision. Returns (reward, elapsed minutes).
    pub fn apply(
        &mut self,
        grid: &DistributionGrid,
        cfg: &EnvConfig,
        to: NodeId,
        obs: Observation,
        events: &mut dyn EventSource,
    ) -> Result<(f64, f64), EnvError> {
        let vi = self.next_to_dispatch()?;
        let (from, zone) = (self.vehicles[vi].position, self.vehicles[vi].zone);
        let legal = grid.feasible_actions(from, zone)?;
        if !legal.contains(&to) {
            return Err(EnvError::IllegalAction { vehicle: self.vehicles[vi].id.clone(), from, to });
        }
        let r = reward(grid, &self.belief, from, to);
        let edge = grid.road.edge_between(from, to).expect("legal move");
        let lines = grid.lines_on_edge(edge);
        let mut elapsed = grid.road.edge(edge).minutes;
        let mut findings = Vec::with_capacity(2 * lines.len());
        let mask = match obs {
            Observation::NoLineOnEdge => 0,
            Observation::Lines(m) => m,
        };
        for (i, &l) in lines.iter().enumerate() {
            match self.belief.status()[l] {
                LineStatus::Unvisited if mask >> i & 1 == 1 => {
                    elapsed += grid.lines[l].repair_minutes;
                    findings.push((l, Finding::Damaged));
                    findings.push((l, Finding::Repaired));
                }
                LineStatus::Unvisited => findings.push((l, Finding::Intact)),
                _ => {}
            }
        }
        let v = &mut self.vehicles[vi];
        v.position = to;
        v.busy_until = self.clock + elapsed;
        v.pending = Some(Pending { from, edge, departed: self.clock, findings });
        self.queue.remove(0);
        self.decisions += 1;
        self.belief.record_traversal(Traversal { vehicle: vi, edge, minutes: self.clock });
        self.advance(grid, cfg, events)?;
        Ok((r, elapsed))
    }

    /// Replaces the hidden outcome of every move in progress with one drawn
    /// from the current belief, and moves each arrival time to match.
    /// Returns each en-route vehicle with its drawn damage mask.
    pub fn redraw_pending<R: Rng>(&mut self, grid: &DistributionGrid, rng: &mut R) -> Result<Vec<(usize, u32)>, EnvError> {
        let mut scratch: Option<Belief> = None;
        let mut out = Vec::new();
        for vi in 0..self.vehicles.len() {
            let Some(p) = self.vehicles[vi].pending.as_mut() else { continue };
            let b = scratch.get_or_insert_with(|| self.belief.clone());
            let mut elapsed = grid.road.edge(p.edge).minutes;
            let mut mask = 0u32;
            p.findings.clear();
            for (i, &l) in grid.lines_on_edge(p.edge).iter().enumerate() {
                if b.status()[l] != LineStatus::Unvisited {
                    continue;
                }
                let damaged = rng.gen::<f64>() < b.posterior()[l];
                if damaged {
                    mask |= 1 << i;
                    elapsed += grid.lines[l].repair_minutes;
                    p.findings.push((l, Finding::Damaged));
                    p.findings.push((l, Finding::Repaired));
                    b.observe_in_place(grid, &[(l, Finding::Damaged)])?;
                } else {
                    p.findings.push((l, Finding::Intact));
                    b.observe_in_place(grid, &[(l, Finding::Intact)])?;
                }
            }
            self.vehicles[vi].busy_until = p.departed + elapsed;
            out.push((vi, mask));
        }
        Ok(out)
    }

    /// Runs the clock until some vehicle needs a decision or the episode ends.
    /// Returns the vehicles that finished a move, with their completion times.
    pub fn advance(&mut self, grid: &DistributionGrid, cfg: &EnvConfig, events: &mut dyn EventSource) -> Result<Vec<(usize, f64)>, EnvError> {
        let mut finished = Vec::new();
        loop {
            self.queue = (0..self.vehicles.len())
                .filter(|&i| !self.vehicles[i].en_route() && self.zone_has_work(grid, self.vehicles[i].zone, cfg.epsilon))
                .collect();
            if !self.queue.is_empty() && self.decisions < cfg.max_decisions {
                return Ok(finished);
            }
            let next_done = self
                .vehicles
                .iter()
                .filter(|v| v.en_route())
                .map(|v| v.busy_until)
                .min_by(f64::total_cmp);
            let next_event = events.next_time();
            let fire_event = match (next_done, next_event) {
                (None, None) => {
                    self.terminal = true;
                    self.truncated = !self.queue.is_empty();
                    self.queue.clear();
                    return Ok(finished);
                }
                (Some(t), Some(e)) => e < t,
                (Some(_), None) => false,
                (None, Some(_)) => true,
            };
            if fire_event {
                self.clock = self.clock.max(next_event.expect("event"));
                events.fire(grid, &mut self.belief, self.clock)?;
            } else {
                let t = next_done.expect("vehicle en route");
                self.clock = self.clock.max(t);
                let mut all = Vec::new();
                for i in 0..self.vehicles.len() {
                    let v = &mut self.vehicles[i];
                    if v.en_route() && v.busy_until <= t {
                        let p = v.pending.take().expect("en route");
                        all.extend(p.findings);
                        finished.push((i, t));
                    }
                }
                self.belief.observe_in_place(grid, &all)?;
            }
        }
    }
}

/// One dispatch decision in an episode log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub time: f64,
    pub vehicle: String,
    pub from: NodeId,
    pub to: NodeId,
    pub observation: &'static str,
    /// Ids of lines found damaged and repaired on this move.
    pub repaired: Vec<String>,
    pub reward: f64,
    pub elapsed: f64,
    pub completed_at: f64,
    /// Vehicles waiting for dispatch when this decision was made, in queue order.
    pub queue: Vec<String>,
    pub posterior_hash: String,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub elapsed: f64,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Trouble calls that reach the dispatcher after reset.
#[derive(Debug, Clone)]
struct CallSchedule {
    arrivals: Vec<(f64, usize)>,
    next: usize,
    mean_delay: f64,
}

impl EventSource for CallSchedule {
    fn next_time(&self) -> Option<f64> {
        self.arrivals.get(self.next).map(|a| a.0)
    }

    fn fire(&mut self, grid: &DistributionGrid, belief: &mut Belief, now: f64) -> Result<(), EnvError> {
        let mut calls = belief.calls().to_vec();
        while let Some(&(t, k)) = self.arrivals.get(self.next) {
            if t > now {
                break;
            }
            calls[k] = true;
            self.next += 1;
        }
        let scale = 1.0 - (-now / self.mean_delay).exp();
        belief.merge_calls_in_place(grid, &calls, scale)?;
        Ok(())
    }
}

/// Full simulator state: the visible routing state plus the hidden damage.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub grid: Arc<DistributionGrid>,
    pub config: EnvConfig,
    pub routing: RoutingState,
    damage: Vec<bool>,
    calls: Vec<bool>,
    schedule: Option<CallSchedule>,
    log: Vec<LogRecord>,
    rng: ChaCha8Rng,
}

/// Independent Bernoulli damage per line.
pub fn draw_damage<R: Rng>(grid: &DistributionGrid, rng: &mut R) -> Vec<bool> {
    grid.lines.iter().map(|l| rng.gen::<f64>() < l.prior).collect()
}

/// Each customer of a de-energized node calls independently.
pub fn draw_calls<R: Rng>(grid: &DistributionGrid, damage: &[bool], rng: &mut R) -> Vec<bool> {
    let ids: Vec<&str> = (0..grid.lines.len()).filter(|&l| damage[l]).map(|l| grid.lines[l].id.as_str()).collect();
    let dark = grid.affected_by_lines(&ids).expect("known lines");
    grid.customers
        .iter()
        .map(|c| dark.contains(&c.node) && rng.gen::<f64>() >= (1.0 - c.call_probability).powi(c.count as i32))
        .collect()
}

const MAX_RESAMPLE: usize = 100_000;

impl EnvState {
    pub fn reset(scenario: &Scenario, cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let grid = scenario.grid.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (damage, calls) = match (&scenario.damage, &scenario.calls) {
            (DamageSpec::Fixed(lines), calls) => {
                let mut damage = vec![false; grid.lines.len()];
                for &l in lines {
                    damage[l] = true;
                }
                let calls = match calls {
                    CallSpec::Fixed(c) => c.clone(),
                    CallSpec::Sample => draw_calls(&grid, &damage, &mut rng),
                };
                (damage, calls)
            }
            (DamageSpec::Sample, CallSpec::Sample) => {
                let damage = draw_damage(&grid, &mut rng);
                let calls = draw_calls(&grid, &damage, &mut rng);
                (damage, calls)
            }
            (DamageSpec::Sample, CallSpec::Fixed(c)) => {
                let mut found = None;
                for _ in 0..MAX_RESAMPLE {
                    let damage = draw_damage(&grid, &mut rng);
                    let idx: Vec<usize> = (0..damage.len()).filter(|&l| damage[l]).collect();
                    if check_calls_consistent(&grid, &idx, c).is_ok() {
                        found = Some(damage);
                        break;
                    }
                }
                (found.ok_or(EnvError::InconsistentCalls(MAX_RESAMPLE))?, c.clone())
            }
        };
        let idx: Vec<usize> = (0..damage.len()).filter(|&l| damage[l]).collect();
        check_calls_consistent(&grid, &idx, &calls)?;

        let (initial_calls, schedule, scale) = match cfg.call_delay_minutes {
            None => (calls.clone(), None, 1.0),
            Some(mean) => {
                let exp = Exp::new(1.0 / mean).map_err(|_| EnvError::InconsistentCalls(0))?;
                let mut arrivals: Vec<(f64, usize)> = Vec::new();
                for (k, &called) in calls.iter().enumerate() {
                    if called {
                        arrivals.push((exp.sample(&mut rng), k));
                    }
                }
                arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                (vec![false; calls.len()], Some(CallSchedule { arrivals, next: 0, mean_delay: mean }), 0.0)
            }
        };
        let mut belief = Belief::new(&grid, initial_calls, cfg.belief)?;
        if scale != 1.0 {
            let c = belief.calls().to_vec();
            belief.merge_calls_in_place(&grid, &c, scale)?;
        }
        let vehicles = scenario
            .vehicles
            .iter()
            .map(|v| VehicleState { id: v.id.clone(), zone: v.zone, rank: v.rank, position: v.depot, busy_until: 0.0, pending: None })
            .collect();
        let mut routing = RoutingState {
            clock: 0.0,
            vehicles,
            belief,
            queue: Vec::new(),
            decisions: 0,
            terminal: false,
            truncated: false,
        };
        routing.vehicles.sort_by_key(|v| v.rank);
        let mut state = Self { grid, config: cfg, routing, damage, calls, schedule, log: Vec::new(), rng };
        state.run_clock()?;
        Ok(state)
    }

    fn run_clock(&mut self) -> Result<(), EnvError> {
        match &mut self.schedule {
            Some(s) => self.routing.advance(&self.grid, &self.config, s)?,
            None => self.routing.advance(&self.grid, &self.config, &mut NoEvents)?,
        };
        Ok(())
    }

    pub fn is_terminal(&self) -> bool {
        self.routing.terminal
    }

    pub fn next_to_dispatch(&self) -> Result<&str, EnvError> {
        Ok(&self.routing.vehicles[self.routing.next_to_dispatch()?].id)
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn true_damage(&self) -> &[bool] {
        &self.damage
    }

    pub fn true_calls(&self) -> &[bool] {
        &self.calls
    }

    /// RNG carried in the state, for callers that need seeded randomness tied to the episode.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Applies `action` and returns the outcome together with the next state.
    pub fn step(&self, action: &RoutingAction) -> Result<StepOutcome, EnvError> {
        let mut next = self.clone();
        let (observation, reward, elapsed) = next.step_mut(action)?;
        let terminal = next.is_terminal();
        Ok(StepOutcome { observation, reward, elapsed, next_state: next, terminal })
    }

    /// In-place variant of [`step`](Self::step).
    pub fn step_mut(&mut self, action: &RoutingAction) -> Result<(Observation, f64, f64), EnvError> {
        let vi = self.routing.next_to_dispatch()?;
        let head = &self.routing.vehicles[vi];
        if head.id != action.vehicle {
            return Err(EnvError::NotQueueHead { requested: action.vehicle.clone(), head: head.id.clone() });
        }
        let from = head.position;
        let edge = self
            .grid
            .road
            .edge_between(from, action.destination)
            .ok_or_else(|| EnvError::IllegalAction { vehicle: action.vehicle.clone(), from, to: action.destination })?;
        let lines = self.grid.lines_on_edge(edge);
        let obs = if lines.is_empty() {
            Observation::NoLineOnEdge
        } else {
            let mut mask = 0;
            for (i, &l) in lines.iter().enumerate() {
                if self.damage[l] && self.routing.belief.status()[l] == LineStatus::Unvisited {
                    mask |= 1 << i;
                }
            }
            Observation::Lines(mask)
        };
        let repaired: Vec<String> = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| matches!(obs, Observation::Lines(m) if m >> i & 1 == 1))
            .map(|(_, &l)| self.grid.lines[l].id.clone())
            .collect();
        let queue: Vec<String> = self.routing.queue.iter().map(|&i| self.routing.vehicles[i].id.clone()).collect();
        let time = self.routing.clock;
        let hash = self.routing.belief.posterior_hash();
        let grid = self.grid.clone();
        let (reward, elapsed) = match &mut self.schedule {
            Some(s) => self.routing.apply(&grid, &self.config, action.destination, obs, s)?,
            None => self.routing.apply(&grid, &self.config, action.destination, obs, &mut NoEvents)?,
        };
        self.log.push(LogRecord {
            time,
            vehicle: action.vehicle.clone(),
            from,
            to: action.destination,
            observation: obs.label(),
            repaired,
            reward,
            elapsed,
            completed_at: time + elapsed,
            queue,
            posterior_hash: hash,
        });
        Ok((obs, reward, elapsed))
    }

    /// Actual customer-hours lost over the finished episode.
    pub fn outage_hours(&self) -> Result<f64, EnvError> {
        if !self.is_terminal() {
            return Err(EnvError::NotTerminal);
        }
        Ok(episode_outage_hours(&self.grid, &self.damage, &self.log, self.routing.clock))
    }
}

/// Customer-hours lost given the true damage and the repair times recorded in
/// `log`. Damage never repaired is charged up to `end`.
pub fn episode_outage_hours(grid: &DistributionGrid, damage: &[bool], log: &[LogRecord], end: f64) -> f64 {
    let mut fixed_at: Vec<f64> = damage.iter().map(|&d| if d { end } else { 0.0 }).collect();
    for rec in log {
        for id in &rec.repaired {
            if let Some(l) = grid.line_index(id) {
                fixed_at[l] = fixed_at[l].min(rec.completed_at);
            }
        }
    }
    grid.customers
        .iter()
        .map(|c| {
            let restored = grid.segments[c.segment].cut_set.iter().map(|&l| fixed_at[l]).fold(0.0, f64::max);
            restored / 60.0 * f64::from(c.count)
        })
        .sum()
}
