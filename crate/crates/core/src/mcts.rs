//! Tree search over the dispatch process with decision and chance nodes.
//!
//! A decision node holds a dispatcher state. Each legal move leads to a chance
//! node whose children are keyed by the outcome: what the moving vehicle finds
//! on the traversed edge plus what any other vehicle reports on arrival before
//! the next decision.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::env::{EnvConfig, NoEvents, Observation, RoutingState};
use crate::error::SearchError;
use crate::grid::{DistributionGrid, NodeId};
use crate::net::{encode_state, PolicyValueNet};
use crate::scenario::StateEncoding;

/// Tree policy used while descending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Selection {
    Puct { c: f64 },
    /// Unvisited moves first, then normalized mean plus `c·sqrt(ln N / n)`.
    Ucb1 { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub simulations: usize,
    pub selection: Selection,
    pub gamma: f64,
    pub tau: f64,
    /// Dirichlet noise (alpha, weight) mixed into the root prior.
    pub root_noise: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { simulations: 30, selection: Selection::Puct { c: 1.25 }, gamma: 1.0, tau: 1.0, root_noise: None, seed: 0 }
    }
}

/// Supplies a prior over `legal` and a value estimate (customer-hours, non-positive) for a leaf.
pub trait Evaluator {
    fn evaluate(
        &self,
        grid: &DistributionGrid,
        env: &EnvConfig,
        state: &RoutingState,
        legal: &[NodeId],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, f64), SearchError>;
}

/// Uniform prior, zero value.
pub struct UniformEvaluator;

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, _: &DistributionGrid, _: &EnvConfig, _: &RoutingState, legal: &[NodeId], _: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), SearchError> {
        Ok((vec![1.0 / legal.len() as f64; legal.len()], 0.0))
    }
}

/// Uniform prior; value from a random playout of at most `depth` decisions.
pub struct RolloutEvaluator {
    pub depth: usize,
    pub gamma: f64,
}

impl Evaluator for RolloutEvaluator {
    fn evaluate(
        &self,
        grid: &DistributionGrid,
        env: &EnvConfig,
        state: &RoutingState,
        legal: &[NodeId],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, f64), SearchError> {
        let mut s = state.clone();
        let mut total = 0.0;
        let mut discount = 1.0;
        for _ in 0..self.depth {
            if s.terminal {
                break;
            }
            let moves = s.legal_actions(grid)?;
            let to = *moves.choose(rng).expect("non-terminal state has a move");
            s.redraw_pending(grid, rng)?;
            let obs = s.sample_observation(grid, to, rng)?;
            let (r, _) = s.apply(grid, env, to, obs, &mut NoEvents)?;
            total += discount * r;
            discount *= self.gamma;
        }
        Ok((vec![1.0 / legal.len() as f64; legal.len()], total))
    }
}

/// Network prior and value. Move `i` is the `i`-th legal destination in
/// ascending node order; the value output is multiplied by `value_scale`.
pub struct NetEvaluator<'a> {
    pub net: &'a PolicyValueNet,
    pub encoding: StateEncoding,
    pub value_scale: f64,
}

impl Evaluator for NetEvaluator<'_> {
    fn evaluate(&self, grid: &DistributionGrid, _: &EnvConfig, state: &RoutingState, legal: &[NodeId], _: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64), SearchError> {
        let k = self.net.config().policy_dim;
        let mask: Vec<bool> = (0..k).map(|i| i < legal.len()).collect();
        let x = encode_state(state, grid, self.encoding);
        let (p, v) = self.net.forward_masked(&x, &mask).map_err(|_| SearchError::NonFinite)?;
        Ok((p[..legal.len().min(k)].to_vec(), v * self.value_scale))
    }
}

/// Extremes of the raw Q values seen in one tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinMaxStats {
    pub min_q: f64,
    pub max_q: f64,
}

impl Default for MinMaxStats {
    fn default() -> Self {
        Self { min_q: f64::INFINITY, max_q: f64::NEG_INFINITY }
    }
}

impl MinMaxStats {
    pub fn update(&mut self, q: f64) {
        self.min_q = self.min_q.min(q);
        self.max_q = self.max_q.max(q);
    }

    /// Maps `q` into [0, 1]; zero until two distinct values have been seen.
    pub fn normalize(&self, q: f64) -> f64 {
        if self.max_q > self.min_q {
            ((q - self.min_q) / (self.max_q - self.min_q)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Outcome key of a chance node child.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Outcome {
    pub observation: Observation,
    /// (vehicle index, damage mask) for every other vehicle that arrived.
    pub arrivals: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChanceChild {
    pub outcome: Outcome,
    pub visits: u32,
    pub node: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Edge {
    pub action: NodeId,
    pub visits: u32,
    pub total: f64,
    pub prior: f64,
    pub reward: Option<f64>,
    pub children: Vec<ChanceChild>,
}

impl Edge {
    pub fn q(&self) -> f64 {
        if self.visits > 0 {
            self.total / self.visits as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecisionNode {
    pub state: RoutingState,
    pub expanded: bool,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<DecisionNode>,
    pub minmax: MinMaxStats,
}

impl Tree {
    /// Checks visit conservation and Q = W/N everywhere.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.expanded && !n.edges.is_empty() {
                let mass: f64 = n.edges.iter().map(|e| e.prior).sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(format!("node {i}: priors sum to {mass}"));
                }
            }
            for e in &n.edges {
                let sum: u32 = e.children.iter().map(|c| c.visits).sum();
                if sum != e.visits {
                    return Err(format!("node {i} move {}: children {sum} vs edge {}", e.action, e.visits));
                }
                if e.visits > 0 && (e.q() - e.total / e.visits as f64).abs() > 0.0 {
                    return Err(format!("node {i} move {}: Q != W/N", e.action));
                }
            }
        }
        Ok(())
    }

    /// Root edge statistics for debugging dumps.
    pub fn root_json(&self) -> serde_json::Value {
        let root = &self.nodes[0];
        serde_json::Value::Array(
            root.edges
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "action": e.action,
                        "n": e.visits,
                        "w": e.total,
                        "q": e.q(),
                        "p": e.prior,
                        "r": e.reward,
                        "outcomes": e.children.len(),
                    })
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub actions: Vec<NodeId>,
    pub visit_counts: Vec<u32>,
    pub policy: Vec<f64>,
    pub root_q: Vec<f64>,
    /// Largest raw Q among visited root moves.
    pub value_target: f64,
}

impl SearchResult {
    /// Move with the most visits; ties go to the lowest destination.
    pub fn most_visited(&self) -> NodeId {
        let best = *self.visit_counts.iter().max().expect("non-empty");
        self.actions[self.visit_counts.iter().position(|&n| n == best).expect("present")]
    }

    /// Draws a move from the search policy.
    pub fn sample_action<R: Rng>(&self, rng: &mut R) -> NodeId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in self.actions.iter().zip(&self.policy) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        *self.actions.iter().zip(&self.policy).rev().find(|(_, &p)| p > 0.0).expect("policy has mass").0
    }
}

/// Visit-count policy with temperature `tau`; `tau == 0` splits mass evenly over the most-visited moves.
pub fn visit_policy(visits: &[u32], tau: f64) -> Vec<f64> {
    let max = visits.iter().copied().max().unwrap_or(0);
    if tau <= 0.0 || max == 0 {
        let ties = visits.iter().filter(|&&n| n == max).count() as f64;
        return visits.iter().map(|&n| if n == max { 1.0 / ties } else { 0.0 }).collect();
    }
    if tau == 1.0 {
        let total: f64 = visits.iter().map(|&n| n as f64).sum();
        return visits.iter().map(|&n| n as f64 / total).collect();
    }
    let lmax = (max as f64).ln();
    let w: Vec<f64> = visits
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { (((n as f64).ln() - lmax) / tau).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Index of the move chosen by `sel` among `edges`; exact ties are broken uniformly.
pub fn select_action<R: Rng>(edges: &[Edge], minmax: &MinMaxStats, sel: Selection, rng: &mut R) -> Result<usize, SearchError> {
    if edges.is_empty() {
        return Err(SearchError::Unexpanded);
    }
    let parent: u32 = edges.iter().map(|e| e.visits).sum();
    let scores: Vec<f64> = match sel {
        Selection::Puct { c } => {
            let sqrt_n = (parent.max(1) as f64).sqrt();
            edges
                .iter()
                .map(|e| {
                    let qbar = if e.visits > 0 { minmax.normalize(e.q()) } else { 0.0 };
                    qbar + c * e.prior * sqrt_n / (1.0 + e.visits as f64)
                })
                .collect()
        }
        Selection::Ucb1 { c } => {
            let ln_n = (parent.max(1) as f64).ln();
            edges
                .iter()
                .map(|e| {
                    if e.visits == 0 {
                        f64::INFINITY
                    } else {
                        minmax.normalize(e.q()) + c * (ln_n / e.visits as f64).sqrt()
                    }
                })
                .collect()
        }
    };
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    Ok(*ties.choose(rng).expect("at least one maximal score"))
}

/// Applies `G_l = r_l + gamma·G_{l+1}` from the leaf value upward along
/// `path` of (node, edge, child) steps.
pub fn backpropagate(tree: &mut Tree, path: &[(usize, usize, usize)], leaf_value: f64, gamma: f64) {
    let mut g = leaf_value;
    for &(node, edge, child) in path.iter().rev() {
        let e = &mut tree.nodes[node].edges[edge];
        g = e.reward.expect("reward cached on traversal") + gamma * g;
        e.visits += 1;
        e.total += g;
        e.children[child].visits += 1;
        let q = e.q();
        tree.minmax.update(q);
    }
}

fn expand(
    tree: &mut Tree,
    idx: usize,
    grid: &DistributionGrid,
    env: &EnvConfig,
    eval: &dyn Evaluator,
    rng: &mut ChaCha8Rng,
) -> Result<f64, SearchError> {
    let node = &tree.nodes[idx];
    if node.state.terminal {
        tree.nodes[idx].expanded = true;
        return Ok(0.0);
    }
    let legal = node.state.legal_actions(grid)?;
    let (p, v) = eval.evaluate(grid, env, &node.state, &legal, rng)?;
    if !v.is_finite() || p.len() != legal.len() || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(SearchError::NonFinite);
    }
    let mass: f64 = p.iter().sum();
    let prior: Vec<f64> = if mass > 0.0 { p.iter().map(|x| x / mass).collect() } else { vec![1.0 / legal.len() as f64; legal.len()] };
    let node = &mut tree.nodes[idx];
    node.edges = legal
        .iter()
        .zip(prior)
        .map(|(&a, p)| Edge { action: a, visits: 0, total: 0.0, prior: p, reward: None, children: Vec::new() })
        .collect();
    node.expanded = true;
    Ok(v)
}

/// Moves the head vehicle along edge `ei` of node `idx` under a freshly drawn
/// outcome and returns the index of the matching child.
fn descend(tree: &mut Tree, idx: usize, ei: usize, grid: &DistributionGrid, env: &EnvConfig, rng: &mut ChaCha8Rng) -> Result<usize, SearchError> {
    let mut next = tree.nodes[idx].state.clone();
    let to = tree.nodes[idx].edges[ei].action;
    let others_moving = next.vehicles.iter().any(|v| v.en_route());
    let drawn = next.redraw_pending(grid, rng)?;
    let obs = next.sample_observation(grid, to, rng)?;
    if !others_moving {
        let key = Outcome { observation: obs, arrivals: Vec::new() };
        if let Some(c) = tree.nodes[idx].edges[ei].children.iter().position(|c| c.outcome == key) {
            return Ok(c);
        }
    }
    let (r, _) = next.apply(grid, env, to, obs, &mut NoEvents)?;
    let arrivals: Vec<(usize, u32)> = drawn.into_iter().filter(|&(v, _)| !next.vehicles[v].en_route()).collect();
    let key = Outcome { observation: obs, arrivals };
    let e = &mut tree.nodes[idx].edges[ei];
    e.reward.get_or_insert(r);
    if let Some(c) = e.children.iter().position(|c| c.outcome == key) {
        return Ok(c);
    }
    let node = tree.nodes.len();
    tree.nodes[idx].edges[ei].children.push(ChanceChild { outcome: key, visits: 0, node });
    tree.nodes.push(DecisionNode { state: next, expanded: false, edges: Vec::new() });
    Ok(tree.nodes[idx].edges[ei].children.len() - 1)
}

fn add_root_noise(tree: &mut Tree, alpha: f64, frac: f64, rng: &mut ChaCha8Rng) {
    let edges = &mut tree.nodes[0].edges;
    if edges.len() < 2 {
        return;
    }
    let g = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let noise: Vec<f64> = edges.iter().map(|_| g.sample(rng)).collect();
    let total: f64 = noise.iter().sum();
    if total > 0.0 {
        for (e, n) in edges.iter_mut().zip(noise) {
            e.prior = (1.0 - frac) * e.prior + frac * n / total;
        }
    }
}

/// Runs `cfg.simulations` simulations from `root` and returns the root statistics with the tree.
pub fn search_tree(
    grid: &DistributionGrid,
    env: &EnvConfig,
    root: &RoutingState,
    eval: &dyn Evaluator,
    cfg: &SearchConfig,
) -> Result<(SearchResult, Tree), SearchError> {
    if root.terminal {
        return Err(SearchError::TerminalRoot);
    }
    if cfg.simulations == 0 {
        return Err(SearchError::NoSimulations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = Tree { nodes: vec![DecisionNode { state: root.clone(), expanded: false, edges: Vec::new() }], minmax: MinMaxStats::default() };
    expand(&mut tree, 0, grid, env, eval, &mut rng)?;
    if let Some((alpha, frac)) = cfg.root_noise {
        add_root_noise(&mut tree, alpha, frac, &mut rng);
    }
    let mut path = Vec::new();
    for _ in 0..cfg.simulations {
        path.clear();
        let mut idx = 0;
        let leaf_value = loop {
            let node = &tree.nodes[idx];
            if !node.expanded {
                break expand(&mut tree, idx, grid, env, eval, &mut rng)?;
            }
            if node.state.terminal {
                break 0.0;
            }
            let ei = select_action(&node.edges, &tree.minmax, cfg.selection, &mut rng)?;
            let ci = descend(&mut tree, idx, ei, grid, env, &mut rng)?;
            path.push((idx, ei, ci));
            idx = tree.nodes[idx].edges[ei].children[ci].node;
        };
        backpropagate(&mut tree, &path, leaf_value, cfg.gamma);
    }
    let root = &tree.nodes[0];
    let visit_counts: Vec<u32> = root.edges.iter().map(|e| e.visits).collect();
    let value_target = root
        .edges
        .iter()
        .filter(|e| e.visits > 0)
        .map(Edge::q)
        .fold(f64::NEG_INFINITY, f64::max);
    let result = SearchResult {
        actions: root.edges.iter().map(|e| e.action).collect(),
        policy: visit_policy(&visit_counts, cfg.tau),
        root_q: root.edges.iter().map(Edge::q).collect(),
        visit_counts,
        value_target,
    };
    Ok((result, tree))
}

pub fn search(
    grid: &DistributionGrid,
    env: &EnvConfig,
    root: &RoutingState,
    eval: &dyn Evaluator,
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    search_tree(grid, env, root, eval, cfg).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{Belief, BeliefConfig};
    use crate::env::VehicleState;
    use crate::grid::fixtures;
    use proptest::prelude::*;

    fn edge(n: u32, q: f64, p: f64) -> Edge {
        Edge { action: 0, visits: n, total: q * n as f64, prior: p, reward: Some(0.0), children: Vec::new() }
    }

    fn start(grid: &DistributionGrid, calls: Vec<bool>, max_decisions: usize) -> (RoutingState, EnvConfig) {
        let cfg = EnvConfig { max_decisions, ..EnvConfig::default() };
        let b = Belief::new(grid, calls, BeliefConfig::default()).unwrap();
        let v = VehicleState { id: "1".into(), zone: 0, rank: 1, position: 0, busy_until: 0.0, pending: None };
        (RoutingState::new(grid, vec![v], b, &cfg).unwrap(), cfg)
    }

    /// Exact optimal expected return with gamma = 1.
    fn expectimax(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState) -> f64 {
        if s.terminal {
            return 0.0;
        }
        s.legal_actions(grid)
            .unwrap()
            .into_iter()
            .map(|a| action_value(grid, cfg, s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn action_value(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState, a: NodeId) -> f64 {
        let mut total = 0.0;
        for (o, p) in s.observation_distribution(grid, a).unwrap() {
            let mut next = s.clone();
            let (r, _) = next.apply(grid, cfg, a, o, &mut NoEvents).unwrap();
            total += p * (r + expectimax(grid, cfg, &next));
        }
        total
    }

    #[test]
    fn puct_hand_example() {
        let edges = vec![edge(10, 1.0, 0.5), edge(0, 0.0, 0.5)];
        let mut mm = MinMaxStats::default();
        mm.update(0.0);
        mm.update(1.0);
        let s1 = 1.0 + 1.25 * 0.5 * 10f64.sqrt() / 11.0;
        let s2 = 0.0 + 1.25 * 0.5 * 10f64.sqrt() / 1.0;
        assert!((s1 - 1.1797).abs() < 1e-4 && (s2 - 1.9764).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&edges, &mm, Selection::Puct { c: 1.25 }, &mut rng).unwrap(), 1);
    }

    #[test]
    fn fresh_node_follows_prior() {
        let edges = vec![edge(0, 0.0, 0.2), edge(0, 0.0, 0.5), edge(0, 0.0, 0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&edges, &MinMaxStats::default(), Selection::Puct { c: 1.25 }, &mut rng).unwrap(), 1);
        assert!(matches!(select_action(&[], &MinMaxStats::default(), Selection::Puct { c: 1.0 }, &mut rng), Err(SearchError::Unexpanded)));
    }

    #[test]
    fn ties_are_broken_randomly() {
        let edges = vec![edge(0, 0.0, 0.5), edge(0, 0.0, 0.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picks: Vec<usize> =
            (0..200).map(|_| select_action(&edges, &MinMaxStats::default(), Selection::Puct { c: 1.0 }, &mut rng).unwrap()).collect();
        let ones = picks.iter().filter(|&&i| i == 1).count();
        assert!(ones > 60 && ones < 140);
    }

    #[test]
    fn visit_policy_examples() {
        assert_eq!(visit_policy(&[30, 10], 1.0), vec![0.75, 0.25]);
        assert_eq!(visit_policy(&[30, 10], 0.0), vec![1.0, 0.0]);
        let p = visit_policy(&[30, 10], 0.01);
        assert!(p[0] > 1.0 - 1e-12);
        assert_eq!(visit_policy(&[5, 5, 0], 0.0), vec![0.5, 0.5, 0.0]);
    }

    fn path_tree(rewards: &[f64]) -> (Tree, Vec<(usize, usize, usize)>) {
        let g = fixtures::chain3();
        let (s, _) = start(&g, vec![false; 3], 10);
        let mut nodes = Vec::new();
        let mut path = Vec::new();
        for (i, &r) in rewards.iter().enumerate() {
            let mut e = edge(0, 0.0, 1.0);
            e.reward = Some(r);
            e.children.push(ChanceChild { outcome: Outcome { observation: Observation::NoLineOnEdge, arrivals: vec![] }, visits: 0, node: i + 1 });
            nodes.push(DecisionNode { state: s.clone(), expanded: true, edges: vec![e] });
            path.push((i, 0, 0));
        }
        nodes.push(DecisionNode { state: s, expanded: false, edges: vec![] });
        (Tree { nodes, minmax: MinMaxStats::default() }, path)
    }

    #[test]
    fn single_step_backup() {
        let (mut t, path) = path_tree(&[-2.0]);
        backpropagate(&mut t, &path, -5.0, 1.0);
        let e = &t.nodes[0].edges[0];
        assert_eq!((e.visits, e.total, e.q()), (1, -7.0, -7.0));
        assert_eq!(e.children[0].visits, 1);
    }

    #[test]
    fn three_step_discounted_backup() {
        let (mut t, path) = path_tree(&[-1.0, -2.0, -3.0]);
        let g = 0.99;
        backpropagate(&mut t, &path, -4.0, g);
        let g3 = -3.0 + g * -4.0;
        let g2 = -2.0 + g * g3;
        let g1 = -1.0 + g * g2;
        assert_eq!(t.nodes[2].edges[0].total, g3);
        assert_eq!(t.nodes[1].edges[0].total, g2);
        assert_eq!(t.nodes[0].edges[0].total, g1);
        assert_eq!(t.minmax.min_q, g1);
        assert_eq!(t.minmax.max_q, g3);
    }

    #[test]
    fn zero_discount_keeps_only_own_reward() {
        let (mut t, path) = path_tree(&[-1.0, -2.0]);
        backpropagate(&mut t, &path, -9.0, 0.0);
        assert_eq!(t.nodes[0].edges[0].total, -1.0);
        assert_eq!(t.nodes[1].edges[0].total, -2.0);
    }

    #[test]
    fn net_prior_is_renormalized_over_legal_moves() {
        use crate::net::{NetConfig, Activation};
        let s = crate::scenario::Scenario::bundled("eight_node").unwrap();
        let g = &s.grid;
        let cfg = EnvConfig::default();
        let root = crate::env::EnvState::reset(&s.with_case(&crate::scenario::CaseSet::bundled("eight_node", &s.grid).unwrap().cases[0]), cfg, 0).unwrap();
        let mut nc = NetConfig::for_scenario(&s);
        nc.seed = 3;
        nc.activation = Activation::Tanh;
        let net = PolicyValueNet::new(nc).unwrap();
        let eval = NetEvaluator { net: &net, encoding: s.encoding, value_scale: 10.0 };
        let st = &root.routing;
        let legal = st.legal_actions(g).unwrap();
        let (p, v) = eval.evaluate(g, &cfg, st, &legal, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = encode_state(st, g, s.encoding);
        let (full, raw_v) = net.forward(&x).unwrap();
        let mass: f64 = full[..legal.len()].iter().sum();
        for (a, b) in p.iter().zip(&full) {
            assert!((a - b / mass).abs() < 1e-12);
        }
        assert!((v - raw_v * 10.0).abs() < 1e-12);
    }

    #[test]
    fn terminal_root_rejected() {
        let g = fixtures::chain3();
        let (s, env) = start(&g, vec![false; 3], 10);
        let mut done = s.clone();
        done.terminal = true;
        let cfg = SearchConfig::default();
        assert!(matches!(search(&g, &env, &done, &UniformEvaluator, &cfg), Err(SearchError::TerminalRoot)));
        let zero = SearchConfig { simulations: 0, ..cfg };
        assert!(matches!(search(&g, &env, &s, &UniformEvaluator, &zero), Err(SearchError::NoSimulations)));
    }

    #[test]
    fn search_is_deterministic() {
        let s = crate::scenario::Scenario::bundled("eight_node").unwrap();
        let env = EnvConfig::default();
        let st = crate::env::EnvState::reset(&s, env, 4).unwrap();
        let cfg = SearchConfig { simulations: 50, seed: 9, ..SearchConfig::default() };
        let a = search(&s.grid, &env, &st.routing, &UniformEvaluator, &cfg).unwrap();
        let b = search(&s.grid, &env, &st.routing, &UniformEvaluator, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn search_finds_expectimax_move_on_chain() {
        // calls at node 3 only: the fault is most likely deep in the chain
        let g = fixtures::chain3();
        let (s, env) = start(&g, vec![false, false, true], 3);
        let values: Vec<(NodeId, f64)> =
            s.legal_actions(&g).unwrap().into_iter().map(|a| (a, action_value(&g, &env, &s, a))).collect();
        let best = values.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let mut hits = 0;
        for seed in 0..100 {
            let cfg = SearchConfig { simulations: 400, gamma: 1.0, seed, ..SearchConfig::default() };
            if search(&g, &env, &s, &UniformEvaluator, &cfg).unwrap().most_visited() == best {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn root_noise_keeps_prior_normalized() {
        let s = crate::scenario::Scenario::bundled("eight_node").unwrap();
        let env = EnvConfig::default();
        let st = crate::env::EnvState::reset(&s, env, 4).unwrap();
        let cfg = SearchConfig { simulations: 20, root_noise: Some((0.3, 0.25)), ..SearchConfig::default() };
        let (_, t) = search_tree(&s.grid, &env, &st.routing, &UniformEvaluator, &cfg).unwrap();
        t.check_invariants().unwrap();
        assert_eq!(t.root_json().as_array().unwrap().len(), st.routing.legal_actions(&s.grid).unwrap().len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn visits_are_conserved(seed in 0u64..10_000, m in 1usize..=64) {
            let s = crate::scenario::Scenario::bundled("eight_node").unwrap();
            let env = EnvConfig::default();
            let st = crate::env::EnvState::reset(&s, env, seed).unwrap();
            prop_assume!(!st.is_terminal());
            let cfg = SearchConfig { simulations: m, seed, ..SearchConfig::default() };
            let (r, t) = search_tree(&s.grid, &env, &st.routing, &UniformEvaluator, &cfg).unwrap();
            prop_assert_eq!(r.visit_counts.iter().sum::<u32>() as usize, m);
            prop_assert!((r.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(t.check_invariants().is_ok());
        }

        #[test]
        fn shift_leaves_selection_unchanged(qs in proptest::collection::vec(-50.0f64..0.0, 2..5), shift in -100.0f64..100.0, seed in 0u64..100) {
            let mk = |d: f64| -> (Vec<Edge>, MinMaxStats) {
                let edges: Vec<Edge> = qs.iter().enumerate().map(|(i, &q)| edge(i as u32 + 1, q + d, 1.0 / qs.len() as f64)).collect();
                let mut mm = MinMaxStats::default();
                edges.iter().for_each(|e| mm.update(e.q()));
                (edges, mm)
            };
            let (e1, m1) = mk(0.0);
            let (e2, m2) = mk(shift);
            let a = select_action(&e1, &m1, Selection::Puct { c: 1.25 }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = select_action(&e2, &m2, Selection::Puct { c: 1.25 }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
