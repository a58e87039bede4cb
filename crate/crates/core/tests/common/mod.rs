//! Fixture builders and from-scratch oracles shared by the integration tests.
#![allow(dead_code)]

use gridcrew::belief::{Belief, BeliefConfig, LineStatus};
use gridcrew::env::{EnvConfig, NoEvents, RoutingState, VehicleState};
use gridcrew::grid::{CustomerPart, DistributionGrid, GridParts, LinePart, NodeId, RoadEdge, SegmentPart, ZonePart};

pub fn line(id: &str, circuit: &str, segment: &str, a: NodeId, b: NodeId, prior: f64) -> LinePart {
    LinePart { id: id.into(), circuit: circuit.into(), segment: segment.into(), a, b, prior, repair_minutes: 60.0 }
}

pub fn seg(id: &str, device: NodeId, parent: Option<&str>, customers: &[NodeId]) -> SegmentPart {
    SegmentPart { id: id.into(), device_node: device, parent: parent.map(Into::into), customers: customers.to_vec() }
}

pub fn cust(node: NodeId, circuit: &str, count: u32) -> CustomerPart {
    CustomerPart { node, circuit: circuit.into(), count, call_probability: 0.05 }
}

pub fn edge(a: NodeId, b: NodeId, minutes: f64) -> RoadEdge {
    RoadEdge { a, b, minutes }
}

pub fn one_zone(n: usize) -> Vec<ZonePart> {
    vec![ZonePart { id: "Z1".into(), nodes: (0..n).collect(), vehicle: "1".into(), rank: 1 }]
}

/// Path 0-1-2-3 with one line and one segment per span; customers at 1, 2 and 3.
pub fn chain3() -> DistributionGrid {
    DistributionGrid::build(GridParts {
        node_count: 4,
        edges: vec![edge(0, 1, 10.0), edge(1, 2, 10.0), edge(2, 3, 10.0)],
        lines: vec![line("L1", "F", "S1", 0, 1, 0.1), line("L2", "F", "S2", 1, 2, 0.2), line("L3", "F", "S3", 2, 3, 0.3)],
        segments: vec![seg("S1", 0, None, &[1]), seg("S2", 1, Some("S1"), &[2]), seg("S3", 2, Some("S2"), &[3])],
        customers: vec![cust(1, "F", 5), cust(2, "F", 7), cust(3, "F", 11)],
        zones: one_zone(4),
    })
    .unwrap()
}

/// Node 1 feeds two branches; S2 holds two lines in series.
pub fn fork4() -> DistributionGrid {
    DistributionGrid::build(GridParts {
        node_count: 5,
        edges: vec![edge(0, 1, 15.0), edge(1, 2, 10.0), edge(2, 3, 10.0), edge(1, 4, 20.0)],
        lines: vec![
            line("L1", "F", "S1", 0, 1, 0.1),
            line("L2", "F", "S2", 1, 2, 0.25),
            line("L3", "F", "S2", 2, 3, 0.2),
            line("L4", "F", "S3", 1, 4, 0.3),
        ],
        segments: vec![seg("S1", 0, None, &[1]), seg("S2", 1, Some("S1"), &[2, 3]), seg("S3", 1, Some("S1"), &[4])],
        customers: vec![cust(1, "F", 4), cust(2, "F", 9), cust(3, "F", 12), cust(4, "F", 20)],
        zones: one_zone(5),
    })
    .unwrap()
}

/// Two feeders leave node 0: a short one to a small load and a long one to a large load.
pub fn star() -> DistributionGrid {
    DistributionGrid::build(GridParts {
        node_count: 3,
        edges: vec![edge(0, 1, 10.0), edge(0, 2, 40.0)],
        lines: vec![line("L1", "F", "S1", 0, 1, 0.3), line("L2", "G", "S2", 0, 2, 0.3)],
        segments: vec![seg("S1", 0, None, &[1]), seg("S2", 0, None, &[2])],
        customers: vec![cust(1, "F", 2), cust(2, "G", 50)],
        zones: one_zone(3),
    })
    .unwrap()
}

/// Three feeders leave node 0 along edges 0-1, 0-2 and 0-4; the G feeder
/// continues 2-3. `minutes`, `priors` and `counts` follow that edge order
/// (counts are for nodes 1..=4).
pub fn hub(minutes: [f64; 4], priors: [f64; 4], counts: [u32; 4]) -> DistributionGrid {
    DistributionGrid::build(GridParts {
        node_count: 5,
        edges: vec![edge(0, 1, minutes[0]), edge(0, 2, minutes[1]), edge(2, 3, minutes[2]), edge(0, 4, minutes[3])],
        lines: vec![
            line("L1", "F", "S1", 0, 1, priors[0]),
            line("L2", "G", "S2", 0, 2, priors[1]),
            line("L3", "G", "S3", 2, 3, priors[2]),
            line("L4", "H", "S4", 0, 4, priors[3]),
        ],
        segments: vec![seg("S1", 0, None, &[1]), seg("S2", 0, None, &[2]), seg("S3", 2, Some("S2"), &[3]), seg("S4", 0, None, &[4])],
        customers: vec![cust(1, "F", counts[0]), cust(2, "G", counts[1]), cust(3, "G", counts[2]), cust(4, "H", counts[3])],
        zones: one_zone(5),
    })
    .unwrap()
}

/// Single vehicle parked at node 0 with calls `calls` (indexed like `grid.customers`).
pub fn start(grid: &DistributionGrid, calls: Vec<bool>, max_decisions: usize) -> (RoutingState, EnvConfig) {
    start_at(grid, calls, max_decisions, 0)
}

pub fn start_at(grid: &DistributionGrid, calls: Vec<bool>, max_decisions: usize, position: NodeId) -> (RoutingState, EnvConfig) {
    let cfg = EnvConfig { max_decisions, ..EnvConfig::default() };
    let b = Belief::new(grid, calls, BeliefConfig::default()).unwrap();
    let v = VehicleState { id: "1".into(), zone: 0, rank: 1, position, busy_until: 0.0, pending: None };
    (RoutingState::new(grid, vec![v], b, &cfg).unwrap(), cfg)
}

/// Whether segment `s` is de-energized, walking parent pointers up to the feeder.
pub fn segment_dark(grid: &DistributionGrid, s: usize, faulted: &dyn Fn(usize) -> bool) -> bool {
    let mut cur = Some(s);
    while let Some(c) = cur {
        if grid.segments[c].lines.iter().any(|&l| faulted(l)) {
            return true;
        }
        cur = grid.segments[c].parent;
    }
    false
}

/// Posterior of every line on `circuit` by enumerating all fault combinations.
///
/// Weight of a combination: product of line priors, times for each customer node
/// `1-(1-rho)^n` if it called and is dark, `(1-rho)^n` if silent and dark, `0` if
/// it called while energized and `1` if silent and energized. Observed lines are
/// clamped to what the crew saw. A repaired line counts as faulted when the calls
/// were made but is reported with probability 0, since it carries power now.
pub fn brute_force_posterior(grid: &DistributionGrid, circuit: usize, calls: &[bool], status: &[LineStatus], prior: &[f64]) -> Vec<f64> {
    let lines = &grid.circuits[circuit].lines;
    let n = lines.len();
    let mut mass = vec![0.0; n];
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let faulted_local = |i: usize| mask >> i & 1 == 1;
        let mut w = 1.0;
        for (i, &l) in lines.iter().enumerate() {
            let f = faulted_local(i);
            let allowed = match status[l] {
                LineStatus::Unvisited => true,
                LineStatus::ObservedIntact => !f,
                LineStatus::ObservedDamaged | LineStatus::Repaired => f,
            };
            if !allowed {
                w = 0.0;
                break;
            }
            if status[l] == LineStatus::Unvisited {
                w *= if f { prior[l] } else { 1.0 - prior[l] };
            }
        }
        if w == 0.0 {
            continue;
        }
        let faulted = |l: usize| lines.iter().position(|&x| x == l).is_some_and(faulted_local);
        for &k in &grid.circuits[circuit].customers {
            let c = &grid.customers[k];
            let silent = (1.0 - c.call_probability).powi(c.count as i32);
            let dark = segment_dark(grid, c.segment, &faulted);
            w *= match (dark, calls[k]) {
                (true, true) => 1.0 - silent,
                (true, false) => silent,
                (false, true) => 0.0,
                (false, false) => 1.0,
            };
        }
        total += w;
        for i in 0..n {
            if faulted_local(i) {
                mass[i] += w;
            }
        }
    }
    lines.iter().zip(&mass).map(|(&l, m)| if status[l] == LineStatus::Repaired { 0.0 } else { m / total }).collect()
}

/// Exact value of the best move sequence, maximizing over moves and averaging over outcomes.
pub fn expectimax(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState) -> f64 {
    if s.terminal {
        return 0.0;
    }
    s.legal_actions(grid).unwrap().into_iter().map(|a| action_value(grid, cfg, s, a)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn action_value(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState, a: NodeId) -> f64 {
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

/// Root moves with their exact values, best first.
pub fn ranked_moves(grid: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState) -> Vec<(NodeId, f64)> {
    let mut v: Vec<(NodeId, f64)> = s.legal_actions(grid).unwrap().into_iter().map(|a| (a, action_value(grid, cfg, s, a))).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}
