//! Comparison policies: closed-loop UCT with random rollouts, open-loop UCT
//! and a one-line-lookahead greedy rule.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, NoEvents, RoutingState};
use crate::error::SearchError;
use crate::grid::{DistributionGrid, NodeId};
use crate::mcts::{search, Edge, Evaluator, MinMaxStats, RolloutEvaluator, SearchConfig, Selection, select_action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    VanillaMcts,
    Oluct,
    Greedy,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::VanillaMcts => "vanilla_mcts",
            Self::Oluct => "oluct",
            Self::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineConfig {
    pub algorithm: Algorithm,
    pub simulations: usize,
    pub uct_c: f64,
    pub rollout_depth: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm, simulations: 200, uct_c: std::f64::consts::SQRT_2, rollout_depth: 20, gamma: 1.0, seed: 0 }
    }
}

pub fn decide(grid: &DistributionGrid, env: &EnvConfig, state: &RoutingState, cfg: &BaselineConfig) -> Result<NodeId, SearchError> {
    match cfg.algorithm {
        Algorithm::VanillaMcts => vanilla_mcts_decide(grid, env, state, cfg),
        Algorithm::Oluct => oluct_decide(grid, env, state, cfg),
        Algorithm::Greedy => greedy_decide(grid, state),
    }
}

/// UCT over the decision/chance tree with random-rollout leaf values.
pub fn vanilla_mcts_decide(grid: &DistributionGrid, env: &EnvConfig, state: &RoutingState, cfg: &BaselineConfig) -> Result<NodeId, SearchError> {
    let eval = RolloutEvaluator { depth: cfg.rollout_depth, gamma: cfg.gamma };
    let sc = SearchConfig {
        simulations: cfg.simulations,
        selection: Selection::Ucb1 { c: cfg.uct_c },
        gamma: cfg.gamma,
        tau: 0.0,
        root_noise: None,
        seed: cfg.seed,
    };
    Ok(search(grid, env, state, &eval, &sc)?.most_visited())
}

/// UCT whose nodes are move sequences from the root; the state is re-simulated
/// on every pass so different outcomes share statistics.
pub fn oluct_decide(grid: &DistributionGrid, env: &EnvConfig, state: &RoutingState, cfg: &BaselineConfig) -> Result<NodeId, SearchError> {
    if state.terminal {
        return Err(SearchError::TerminalRoot);
    }
    if cfg.simulations == 0 {
        return Err(SearchError::NoSimulations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rollout = RolloutEvaluator { depth: cfg.rollout_depth, gamma: cfg.gamma };
    let sel = Selection::Ucb1 { c: cfg.uct_c };
    let mut nodes: HashMap<Vec<NodeId>, Vec<Edge>> = HashMap::new();
    let mut minmax = MinMaxStats::default();
    let new_edges = |legal: &[NodeId]| -> Vec<Edge> {
        legal
            .iter()
            .map(|&a| Edge { action: a, visits: 0, total: 0.0, prior: 1.0 / legal.len() as f64, reward: None, children: Vec::new() })
            .collect()
    };
    nodes.insert(Vec::new(), new_edges(&state.legal_actions(grid)?));

    for _ in 0..cfg.simulations {
        let mut s = state.clone();
        s.redraw_pending(grid, &mut rng)?;
        let mut seq: Vec<NodeId> = Vec::new();
        // (sequence, edge index, reward)
        let mut path: Vec<(Vec<NodeId>, usize, f64)> = Vec::new();
        let leaf = loop {
            if s.terminal {
                break 0.0;
            }
            let legal = s.legal_actions(grid)?;
            let Some(edges) = nodes.get_mut(&seq) else {
                nodes.insert(seq.clone(), new_edges(&legal));
                break rollout.evaluate(grid, env, &s, &legal, &mut rng)?.1;
            };
            // outcomes may change which vehicle moves next; keep edges for every move seen
            for &a in &legal {
                if !edges.iter().any(|e| e.action == a) {
                    edges.push(Edge { action: a, visits: 0, total: 0.0, prior: 0.0, reward: None, children: Vec::new() });
                }
            }
            let open: Vec<Edge> = edges.iter().filter(|e| legal.contains(&e.action)).cloned().collect();
            let pick = select_action(&open, &minmax, sel, &mut rng)?;
            let a = open[pick].action;
            let ei = edges.iter().position(|e| e.action == a).expect("edge exists");
            let obs = s.sample_observation(grid, a, &mut rng)?;
            let (r, _) = s.apply(grid, env, a, obs, &mut NoEvents)?;
            path.push((seq.clone(), ei, r));
            seq.push(a);
        };
        let mut g = leaf;
        for (key, ei, r) in path.iter().rev() {
            g = r + cfg.gamma * g;
            let e = &mut nodes.get_mut(key).expect("visited node")[*ei];
            e.visits += 1;
            e.total += g;
            minmax.update(e.q());
        }
    }
    let root = &nodes[&Vec::new()];
    let best = root.iter().map(|e| e.visits).max().expect("root has moves");
    Ok(root.iter().filter(|e| e.visits == best).map(|e| e.action).min().expect("non-empty"))
}

/// Heads for the line with the best expected restored customers per minute
/// (posterior times downstream customers over travel to and along the line),
/// one road edge at a time. Lines feeding nobody still block termination, so
/// among equal scores the higher posterior per minute wins; remaining ties go
/// to the lowest node id.
pub fn greedy_decide(grid: &DistributionGrid, state: &RoutingState) -> Result<NodeId, SearchError> {
    let vi = state.next_to_dispatch()?;
    let v = &state.vehicles[vi];
    let legal = grid.feasible_actions(v.position, v.zone).map_err(crate::error::EnvError::from)?;
    let zone = &grid.zones[v.zone];
    let dist = grid.road.travel_times_within(v.position, &zone.nodes);
    let post = state.belief.posterior();
    // (score, posterior per minute, first step) of the best line
    let mut best: Option<(f64, f64, NodeId)> = None;
    for (l, line) in grid.lines.iter().enumerate() {
        if grid.line_zone(l) != v.zone || post[l] <= 0.0 {
            continue;
        }
        let (a, b) = line.endpoints;
        let near = if dist[a] <= dist[b] { a } else { b };
        let far = if near == a { b } else { a };
        let travel = grid.road.edge(line.edge).minutes;
        let minutes = dist[near] + travel;
        if !minutes.is_finite() {
            continue;
        }
        let score = post[l] * grid.downstream_customers(l) as f64 / minutes;
        let rate = post[l] / minutes;
        let step = if near == v.position { far } else { first_step(grid, zone.nodes.as_slice(), v.position, near, &legal) };
        let better = match best {
            None => true,
            Some((s, r, n)) => score > s || (score == s && (rate > r || (rate == r && step < n))),
        };
        if better {
            best = Some((score, rate, step));
        }
    }
    Ok(best.map(|(_, _, n)| n).unwrap_or_else(|| legal[0]))
}

/// Lowest-numbered neighbor on a shortest in-zone path toward `target`.
fn first_step(grid: &DistributionGrid, mask: &[bool], from: NodeId, target: NodeId, legal: &[NodeId]) -> NodeId {
    let to_target = grid.road.travel_times_within(target, mask);
    let mut best = (f64::INFINITY, legal[0]);
    for &n in legal {
        let e = grid.road.edge_between(from, n).expect("legal neighbor");
        let d = grid.road.edge(e).minutes + to_target[n];
        if d < best.0 - 1e-9 {
            best = (d, n);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{Belief, BeliefConfig};
    use crate::env::VehicleState;
    use crate::grid::fixtures::{self, cust, edge, line, seg, single_zone};
    use crate::grid::GridParts;

    fn start(grid: &DistributionGrid, calls: Vec<bool>, max_decisions: usize) -> (RoutingState, EnvConfig) {
        let cfg = EnvConfig { max_decisions, ..EnvConfig::default() };
        let b = Belief::new(grid, calls, BeliefConfig::default()).unwrap();
        let v = VehicleState { id: "1".into(), zone: 0, rank: 1, position: 0, busy_until: 0.0, pending: None };
        (RoutingState::new(grid, vec![v], b, &cfg).unwrap(), cfg)
    }

    fn expectimax(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState) -> f64 {
        if s.terminal {
            return 0.0;
        }
        s.legal_actions(grid).unwrap().into_iter().map(|a| action_value(grid, cfg, s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn action_value(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState, a: NodeId) -> f64 {
        s.observation_distribution(grid, a)
            .unwrap()
            .into_iter()
            .map(|(o, p)| {
                let mut next = s.clone();
                let (r, _) = next.apply(grid, cfg, a, o, &mut NoEvents).unwrap();
                p * (r + expectimax(grid, cfg, &next))
            })
            .sum()
    }

    /// Star around node 0: a short cheap branch to node 1 and a long branch to node 2
    /// feeding many customers.
    fn star() -> DistributionGrid {
        DistributionGrid::build(GridParts {
            node_count: 3,
            edges: vec![edge(0, 1, 10.0), edge(0, 2, 40.0)],
            lines: vec![line("L1", "F", "S1", 0, 1, 0.3), line("L2", "G", "S2", 0, 2, 0.3)],
            segments: vec![seg("S1", 0, None, &[1]), seg("S2", 0, None, &[2])],
            customers: vec![cust(1, "F", 2), cust(2, "G", 50)],
            zones: single_zone(3),
        })
        .unwrap()
    }

    #[test]
    fn greedy_moves_onto_only_suspect_line() {
        let g = fixtures::chain3();
        let (mut s, _) = start(&g, vec![false; 3], 10);
        s.belief = Belief::with_prior(&g, vec![0.0, 0.0, 0.0], vec![false; 3], BeliefConfig::default()).unwrap();
        // nothing suspect: first legal move
        assert_eq!(greedy_decide(&g, &s).unwrap(), 1);
        let (s, _) = start(&g, vec![false; 3], 10);
        assert_eq!(greedy_decide(&g, &s).unwrap(), 1);
    }

    #[test]
    fn greedy_ties_go_to_lowest_node() {
        let g = DistributionGrid::build(GridParts {
            node_count: 3,
            edges: vec![edge(0, 1, 10.0), edge(0, 2, 10.0)],
            lines: vec![line("L1", "F", "S1", 0, 2, 0.2), line("L2", "G", "S2", 0, 1, 0.2)],
            segments: vec![seg("S1", 0, None, &[2]), seg("S2", 0, None, &[1])],
            customers: vec![cust(1, "G", 5), cust(2, "F", 5)],
            zones: single_zone(3),
        })
        .unwrap();
        let (s, _) = start(&g, vec![false; 2], 10);
        assert_eq!(greedy_decide(&g, &s).unwrap(), 1);
    }

    #[test]
    fn greedy_prefers_best_ratio() {
        let g = star();
        let (s, _) = start(&g, vec![false, true], 10);
        // the call pins L2: 1·50/40 beats roughly 0.28·2/10
        assert_eq!(greedy_decide(&g, &s).unwrap(), 2);
    }

    #[test]
    fn baselines_find_dominant_move() {
        let g = star();
        let (s, env) = start(&g, vec![false, false], 3);
        let best = s
            .legal_actions(&g)
            .unwrap()
            .into_iter()
            .max_by(|&a, &b| action_value(&g, &env, &s, a).total_cmp(&action_value(&g, &env, &s, b)))
            .unwrap();
        for alg in [Algorithm::VanillaMcts, Algorithm::Oluct] {
            let hits = (0..100)
                .filter(|&seed| {
                    let cfg = BaselineConfig { seed, ..BaselineConfig::new(alg) };
                    decide(&g, &env, &s, &cfg).unwrap() == best
                })
                .count();
            assert!(hits >= 90, "{alg:?}: {hits}");
        }
    }

    #[test]
    fn open_loop_matches_closed_loop_when_deterministic() {
        let g = fixtures::chain3();
        let (mut s, env) = start(&g, vec![false; 3], 6);
        s.belief = Belief::with_prior(&g, vec![0.0, 0.0, 1.0], vec![false; 3], BeliefConfig::default()).unwrap();
        let v = decide(&g, &env, &s, &BaselineConfig::new(Algorithm::VanillaMcts)).unwrap();
        let o = decide(&g, &env, &s, &BaselineConfig::new(Algorithm::Oluct)).unwrap();
        assert_eq!(v, o);
    }

    #[test]
    fn single_simulation_returns_its_move() {
        let s8 = crate::scenario::Scenario::bundled("eight_node").unwrap();
        let env = EnvConfig::default();
        let st = crate::env::EnvState::reset(&s8, env, 2).unwrap();
        let legal = st.routing.legal_actions(&s8.grid).unwrap();
        for alg in [Algorithm::VanillaMcts, Algorithm::Oluct, Algorithm::Greedy] {
            let cfg = BaselineConfig { simulations: 1, ..BaselineConfig::new(alg) };
            let a = decide(&s8.grid, &env, &st.routing, &cfg).unwrap();
            assert!(legal.contains(&a));
            assert_eq!(a, decide(&s8.grid, &env, &st.routing, &cfg).unwrap());
        }
    }
}
