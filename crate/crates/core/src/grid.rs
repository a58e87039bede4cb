//! Static model of a distribution system and the road network its crews drive on.
//!
//! Road nodes are numbered `0..n`. Every power line spans exactly one road edge,
//! belongs to one protection segment and one circuit. Segments form a radial tree
//! per circuit: a fault anywhere in a segment trips its protective device and
//! de-energizes that segment's customers plus every segment below it.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use crate::error::GridError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct RoadEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub minutes: f64,
}

impl RoadEdge {
    pub fn other(&self, n: NodeId) -> NodeId {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

/// Undirected, connected road graph with positive travel times.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    edges: Vec<RoadEdge>,
    // (neighbor, edge index), sorted by neighbor id
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

impl RoadNetwork {
    pub fn new(node_count: usize, edges: Vec<RoadEdge>) -> Result<Self, GridError> {
        if node_count == 0 {
            return Err(GridError::invalid("road.nonempty", "road network has no nodes"));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for (i, e) in edges.iter().enumerate() {
            if e.a >= node_count || e.b >= node_count {
                return Err(GridError::invalid(
                    "road.edge_endpoints",
                    format!("edge {}-{} references a node outside 0..{node_count}", e.a, e.b),
                ));
            }
            if e.a == e.b {
                return Err(GridError::invalid("road.no_self_loops", format!("edge {}-{} is a loop", e.a, e.b)));
            }
            if !(e.minutes.is_finite() && e.minutes > 0.0) {
                return Err(GridError::invalid(
                    "road.positive_travel_time",
                    format!("edge {}-{} has travel time {}", e.a, e.b, e.minutes),
                ));
            }
            if adjacency[e.a].iter().any(|&(n, _)| n == e.b) {
                return Err(GridError::invalid("road.no_parallel_edges", format!("edge {}-{} is listed twice", e.a, e.b)));
            }
            adjacency[e.a].push((e.b, i));
            adjacency[e.b].push((e.a, i));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let road = Self { edges, adjacency };
        let all: Vec<bool> = vec![true; node_count];
        if !road.connected_within(&all) {
            return Err(GridError::invalid("road.connected", "road network is not connected"));
        }
        Ok(road)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &RoadEdge {
        &self.edges[idx]
    }

    /// Neighbors of `n` in ascending id order.
    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[n].iter().map(|&(m, _)| m)
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(m, _)| m == b)
            .map(|&(_, e)| e)
    }

    fn connected_within(&self, mask: &[bool]) -> bool {
        let Some(start) = mask.iter().position(|&m| m) else {
            return false;
        };
        let mut seen = vec![false; mask.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if mask[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        mask.iter().zip(&seen).all(|(&m, &s)| !m || s)
    }

    /// Shortest travel times (minutes) from `source` using only nodes in `mask`.
    pub fn travel_times_within(&self, source: NodeId, mask: &[bool]) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, NodeId);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }
        let mut dist = vec![f64::INFINITY; self.node_count()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([Item(0.0, source)]);
        while let Some(Item(d, n)) = heap.pop() {
            if d > dist[n] {
                continue;
            }
            for &(m, e) in &self.adjacency[n] {
                if !mask[m] {
                    continue;
                }
                let nd = d + self.edges[e].minutes;
                if nd < dist[m] {
                    dist[m] = nd;
                    heap.push(Item(nd, m));
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone)]
pub struct PowerLine {
    pub id: String,
    pub circuit: usize,
    pub segment: usize,
    pub endpoints: (NodeId, NodeId),
    pub edge: usize,
    pub prior: f64,
    pub repair_minutes: f64,
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: String,
    pub circuit: usize,
    pub lines: Vec<usize>,
    pub device_node: NodeId,
    pub parent: Option<usize>,
    /// Customers fed directly by this segment (not including those further downstream).
    pub customers: Vec<usize>,
    pub children: Vec<usize>,
    /// Lines whose fault de-energizes this segment: its own and every upstream segment's.
    pub cut_set: Vec<usize>,
    /// This segment and everything below it.
    pub subtree: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CustomerNode {
    pub node: NodeId,
    pub circuit: usize,
    pub segment: usize,
    pub count: u32,
    /// Probability that one customer reports an outage.
    pub call_probability: f64,
}

#[derive(Debug, Clone)]
pub struct Circuit {
    pub id: String,
    /// Segments in topological order, root first.
    pub segments: Vec<usize>,
    pub lines: Vec<usize>,
    pub customers: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Zone {
    pub id: String,
    pub nodes: Vec<bool>,
    pub vehicle: String,
    pub rank: u32,
}

impl Zone {
    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.get(n).copied().unwrap_or(false)
    }
}

/// Raw, unvalidated pieces of a grid. [`DistributionGrid::build`] checks them.
#[derive(Debug, Clone, Default)]
pub struct GridParts {
    pub node_count: usize,
    pub edges: Vec<RoadEdge>,
    pub lines: Vec<LinePart>,
    pub segments: Vec<SegmentPart>,
    pub customers: Vec<CustomerPart>,
    pub zones: Vec<ZonePart>,
}

#[derive(Debug, Clone)]
pub struct LinePart {
    pub id: String,
    pub circuit: String,
    pub segment: String,
    pub a: NodeId,
    pub b: NodeId,
    pub prior: f64,
    pub repair_minutes: f64,
}

#[derive(Debug, Clone)]
pub struct SegmentPart {
    pub id: String,
    pub device_node: NodeId,
    pub parent: Option<String>,
    pub customers: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct CustomerPart {
    pub node: NodeId,
    pub circuit: String,
    pub count: u32,
    pub call_probability: f64,
}

#[derive(Debug, Clone)]
pub struct ZonePart {
    pub id: String,
    pub nodes: Vec<NodeId>,
    pub vehicle: String,
    pub rank: u32,
}

#[derive(Debug, Clone)]
pub struct DistributionGrid {
    pub road: RoadNetwork,
    pub circuits: Vec<Circuit>,
    pub segments: Vec<Segment>,
    pub lines: Vec<PowerLine>,
    pub customers: Vec<CustomerNode>,
    pub zones: Vec<Zone>,
    edge_lines: Vec<Vec<usize>>,
    line_zone: Vec<usize>,
}

impl DistributionGrid {
    pub fn build(parts: GridParts) -> Result<Self, GridError> {
        let road = RoadNetwork::new(parts.node_count, parts.edges)?;
        let n = road.node_count();

        // circuits in order of first appearance on a line
        let mut circuit_ids: Vec<String> = Vec::new();
        let circuit_of = |ids: &mut Vec<String>, c: &str| -> usize {
            if let Some(i) = ids.iter().position(|x| x == c) {
                i
            } else {
                ids.push(c.to_string());
                ids.len() - 1
            }
        };

        let seg_index = |id: &str| parts.segments.iter().position(|s| s.id == id);
        let mut seen_seg_ids = BTreeSet::new();
        for s in &parts.segments {
            if !seen_seg_ids.insert(s.id.as_str()) {
                return Err(GridError::invalid("segments.unique_id", format!("segment {} declared twice", s.id)));
            }
            if s.device_node >= n {
                return Err(GridError::invalid(
                    "segments.device_is_road_node",
                    format!("segment {} device node {} is not a road node", s.id, s.device_node),
                ));
            }
        }

        let mut lines = Vec::with_capacity(parts.lines.len());
        let mut edge_lines = vec![Vec::new(); road.edges().len()];
        let mut seg_circuit: Vec<Option<usize>> = vec![None; parts.segments.len()];
        let mut seen_line_ids = BTreeSet::new();
        for lp in &parts.lines {
            if !seen_line_ids.insert(lp.id.as_str()) {
                return Err(GridError::invalid("lines.unique_id", format!("line {} declared twice", lp.id)));
            }
            let edge = road.edge_between(lp.a, lp.b).ok_or_else(|| {
                GridError::invalid(
                    "lines.on_road_edge",
                    format!("line {} spans {}-{}, which is not a road edge", lp.id, lp.a, lp.b),
                )
            })?;
            if !(0.0..=1.0).contains(&lp.prior) {
                return Err(GridError::invalid(
                    "lines.prior_in_unit_interval",
                    format!("line {} prior {} outside [0,1]", lp.id, lp.prior),
                ));
            }
            if !(lp.repair_minutes.is_finite() && lp.repair_minutes > 0.0) {
                return Err(GridError::invalid(
                    "lines.positive_repair_time",
                    format!("line {} repair time {}", lp.id, lp.repair_minutes),
                ));
            }
            let segment = seg_index(&lp.segment).ok_or_else(|| {
                GridError::invalid("lines.known_segment", format!("line {} names unknown segment {}", lp.id, lp.segment))
            })?;
            let circuit = circuit_of(&mut circuit_ids, &lp.circuit);
            match seg_circuit[segment] {
                None => seg_circuit[segment] = Some(circuit),
                Some(c) if c != circuit => {
                    return Err(GridError::invalid(
                        "segments.single_circuit",
                        format!("segment {} has lines on circuits {} and {}", lp.segment, circuit_ids[c], lp.circuit),
                    ))
                }
                _ => {}
            }
            let idx = lines.len();
            edge_lines[edge].push(idx);
            lines.push(PowerLine {
                id: lp.id.clone(),
                circuit,
                segment,
                endpoints: (lp.a, lp.b),
                edge,
                prior: lp.prior,
                repair_minutes: lp.repair_minutes,
            });
        }

        let mut segments = Vec::with_capacity(parts.segments.len());
        for (si, sp) in parts.segments.iter().enumerate() {
            let circuit = seg_circuit[si].ok_or_else(|| {
                GridError::invalid("segments.nonempty", format!("segment {} contains no lines", sp.id))
            })?;
            let parent = match &sp.parent {
                None => None,
                Some(p) => {
                    let pi = seg_index(p).ok_or_else(|| {
                        GridError::invalid("segments.known_parent", format!("segment {} names unknown parent {p}", sp.id))
                    })?;
                    if seg_circuit[pi] != Some(circuit) {
                        return Err(GridError::invalid(
                            "segments.parent_same_circuit",
                            format!("segment {} and its parent {p} are on different circuits", sp.id),
                        ));
                    }
                    Some(pi)
                }
            };
            segments.push(Segment {
                id: sp.id.clone(),
                circuit,
                lines: lines.iter().enumerate().filter(|(_, l)| l.segment == si).map(|(i, _)| i).collect(),
                device_node: sp.device_node,
                parent,
                customers: Vec::new(),
                children: Vec::new(),
                cut_set: Vec::new(),
                subtree: Vec::new(),
            });
        }
        for si in 0..segments.len() {
            if let Some(p) = segments[si].parent {
                segments[p].children.push(si);
            }
        }

        // customers
        let mut customers = Vec::with_capacity(parts.customers.len());
        let mut seen_nodes = BTreeSet::new();
        for cp in &parts.customers {
            if cp.node >= n {
                return Err(GridError::invalid(
                    "customers.road_node",
                    format!("customer node {} is not a road node", cp.node),
                ));
            }
            if !seen_nodes.insert(cp.node) {
                return Err(GridError::invalid("customers.unique_node", format!("customer node {} declared twice", cp.node)));
            }
            if !(cp.call_probability > 0.0 && cp.call_probability <= 1.0) {
                return Err(GridError::invalid(
                    "customers.call_probability",
                    format!("customer node {} calling probability {} outside (0,1]", cp.node, cp.call_probability),
                ));
            }
            let circuit = circuit_ids.iter().position(|c| *c == cp.circuit).ok_or_else(|| {
                GridError::invalid(
                    "customers.known_circuit",
                    format!("customer node {} names circuit {} which has no lines", cp.node, cp.circuit),
                )
            })?;
            let owners: Vec<usize> = parts
                .segments
                .iter()
                .enumerate()
                .filter(|(_, s)| s.customers.contains(&cp.node))
                .map(|(i, _)| i)
                .collect();
            if owners.len() != 1 {
                return Err(GridError::invalid(
                    "customers.exactly_one_segment",
                    format!("customer node {} is fed by {} segments", cp.node, owners.len()),
                ));
            }
            let segment = owners[0];
            if segments[segment].circuit != circuit {
                return Err(GridError::invalid(
                    "customers.segment_circuit",
                    format!("customer node {} is on circuit {} but its segment is not", cp.node, cp.circuit),
                ));
            }
            let idx = customers.len();
            segments[segment].customers.push(idx);
            customers.push(CustomerNode {
                node: cp.node,
                circuit,
                segment,
                count: cp.count,
                call_probability: cp.call_probability,
            });
        }
        for sp in &parts.segments {
            for node in &sp.customers {
                if !seen_nodes.contains(node) {
                    return Err(GridError::invalid(
                        "segments.known_customers",
                        format!("segment {} lists node {node}, which is not a customer node", sp.id),
                    ));
                }
            }
        }

        // circuits: exactly one root segment each, acyclic
        let mut circuits = Vec::with_capacity(circuit_ids.len());
        for (ci, id) in circuit_ids.iter().enumerate() {
            let roots: Vec<usize> = (0..segments.len())
                .filter(|&s| segments[s].circuit == ci && segments[s].parent.is_none())
                .collect();
            if roots.len() != 1 {
                return Err(GridError::invalid(
                    "segments.radial",
                    format!("circuit {id} has {} root segments, expected 1", roots.len()),
                ));
            }
            let mut order = Vec::new();
            let mut queue = VecDeque::from([roots[0]]);
            while let Some(s) = queue.pop_front() {
                order.push(s);
                queue.extend(segments[s].children.iter().copied());
            }
            let total = segments.iter().filter(|s| s.circuit == ci).count();
            if order.len() != total {
                return Err(GridError::invalid(
                    "segments.radial",
                    format!("circuit {id} has segments not reachable from its root (cycle)"),
                ));
            }
            circuits.push(Circuit {
                id: id.clone(),
                segments: order,
                lines: (0..lines.len()).filter(|&l| lines[l].circuit == ci).collect(),
                customers: (0..customers.len()).filter(|&c| customers[c].circuit == ci).collect(),
            });
        }
        for c in &circuits {
            for &s in &c.segments {
                let mut cut = segments[s].lines.clone();
                if let Some(p) = segments[s].parent {
                    cut.extend(segments[p].cut_set.iter().copied());
                }
                cut.sort_unstable();
                segments[s].cut_set = cut;
            }
            for &s in c.segments.iter().rev() {
                let mut sub = vec![s];
                for &ch in &segments[s].children {
                    sub.extend(segments[ch].subtree.iter().copied());
                }
                sub.sort_unstable();
                segments[s].subtree = sub;
            }
        }

        // zones
        let mut zones: Vec<Zone> = Vec::with_capacity(parts.zones.len());
        let mut covered = vec![false; n];
        for zp in &parts.zones {
            if zones.iter().any(|z| z.id == zp.id) {
                return Err(GridError::invalid("zones.unique_id", format!("zone {} declared twice", zp.id)));
            }
            if zones.iter().any(|z| z.vehicle == zp.vehicle) {
                return Err(GridError::invalid(
                    "zones.one_vehicle_each",
                    format!("vehicle {} is assigned to more than one zone", zp.vehicle),
                ));
            }
            if zones.iter().any(|z| z.rank == zp.rank) {
                return Err(GridError::invalid(
                    "zones.total_priority_order",
                    format!("priority rank {} is used twice", zp.rank),
                ));
            }
            let mut mask = vec![false; n];
            for &node in &zp.nodes {
                if node >= n {
                    return Err(GridError::invalid("zones.road_nodes", format!("zone {} lists unknown node {node}", zp.id)));
                }
                mask[node] = true;
                covered[node] = true;
            }
            if !road.connected_within(&mask) {
                return Err(GridError::invalid("zones.connected", format!("zone {} is empty or not connected", zp.id)));
            }
            zones.push(Zone { id: zp.id.clone(), nodes: mask, vehicle: zp.vehicle.clone(), rank: zp.rank });
        }
        if zones.is_empty() {
            return Err(GridError::invalid("zones.nonempty", "no zones declared"));
        }
        if let Some(node) = covered.iter().position(|c| !c) {
            return Err(GridError::invalid("zones.cover_road", format!("road node {node} is in no zone")));
        }
        let mut line_zone = Vec::with_capacity(lines.len());
        for l in &lines {
            let inside: Vec<usize> = (0..zones.len())
                .filter(|&z| zones[z].contains(l.endpoints.0) && zones[z].contains(l.endpoints.1))
                .collect();
            if inside.len() != 1 {
                return Err(GridError::invalid(
                    "zones.line_in_one_zone",
                    format!("line {} lies inside {} zones, expected exactly 1", l.id, inside.len()),
                ));
            }
            line_zone.push(inside[0]);
        }

        Ok(Self { road, circuits, segments, lines, customers, zones, edge_lines, line_zone })
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn customer_at(&self, node: NodeId) -> Option<usize> {
        self.customers.iter().position(|c| c.node == node)
    }

    pub fn zone_of_vehicle(&self, vehicle: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.vehicle == vehicle)
    }

    /// Lines spanning road edge `edge` (usually zero or one).
    pub fn lines_on_edge(&self, edge: usize) -> &[usize] {
        &self.edge_lines[edge]
    }

    pub fn line_zone(&self, line: usize) -> usize {
        self.line_zone[line]
    }

    pub fn total_customers(&self) -> u64 {
        self.customers.iter().map(|c| u64::from(c.count)).sum()
    }

    /// Customers fed directly by segment `s`.
    pub fn segment_customer_count(&self, s: usize) -> u64 {
        self.segments[s].customers.iter().map(|&c| u64::from(self.customers[c].count)).sum()
    }

    /// Customers that lose power if `line` is faulted.
    pub fn downstream_customers(&self, line: usize) -> u64 {
        self.segments[self.lines[line].segment]
            .subtree
            .iter()
            .map(|&s| self.segment_customer_count(s))
            .sum()
    }

    /// Customer nodes of `circuit` de-energized when the lines flagged in
    /// `faulted` (indexed like `circuits[circuit].lines`) trip their devices.
    pub fn affected_nodes(&self, circuit: usize, faulted: &[bool]) -> Result<BTreeSet<NodeId>, GridError> {
        let c = self.circuits.get(circuit).ok_or(GridError::UnknownCircuit(circuit))?;
        if faulted.len() != c.lines.len() {
            return Err(GridError::FaultVectorLength { expected: c.lines.len(), got: faulted.len() });
        }
        let mut tripped = vec![false; self.segments.len()];
        for (&line, &f) in c.lines.iter().zip(faulted) {
            if f {
                tripped[self.lines[line].segment] = true;
            }
        }
        Ok(self.nodes_below(c, &tripped))
    }

    /// Like [`affected_nodes`](Self::affected_nodes) but names the faulted lines by id.
    pub fn affected_by_lines(&self, faulted: &[&str]) -> Result<BTreeSet<NodeId>, GridError> {
        let mut tripped = vec![false; self.segments.len()];
        for id in faulted {
            let l = self.line_index(id).ok_or_else(|| GridError::UnknownLine(id.to_string()))?;
            tripped[self.lines[l].segment] = true;
        }
        let mut out = BTreeSet::new();
        for c in &self.circuits {
            out.extend(self.nodes_below(c, &tripped));
        }
        Ok(out)
    }

    fn nodes_below(&self, c: &Circuit, tripped: &[bool]) -> BTreeSet<NodeId> {
        let mut dark = vec![false; self.segments.len()];
        let mut out = BTreeSet::new();
        for &s in &c.segments {
            let seg = &self.segments[s];
            dark[s] = tripped[s] || seg.parent.is_some_and(|p| dark[p]);
            if dark[s] {
                out.extend(seg.customers.iter().map(|&k| self.customers[k].node));
            }
        }
        out
    }

    /// Road neighbors of `position` that lie inside `zone`, ascending.
    pub fn feasible_actions(&self, position: NodeId, zone: usize) -> Result<Vec<NodeId>, GridError> {
        let z = self.zones.get(zone).ok_or(GridError::UnknownZone(zone))?;
        if !z.contains(position) {
            return Err(GridError::OutsideZone { node: position, zone: z.id.clone() });
        }
        Ok(self.road.neighbors(position).filter(|&m| z.contains(m)).collect())
    }

    /// Largest number of feasible actions over every (zone, node) pair.
    pub fn max_feasible_actions(&self) -> usize {
        let mut best = 0;
        for (zi, z) in self.zones.iter().enumerate() {
            for n in 0..self.road.node_count() {
                if z.contains(n) {
                    best = best.max(self.feasible_actions(n, zi).map(|a| a.len()).unwrap_or(0));
                }
            }
        }
        best
    }

    /// Rough length of a restoration in hours: every road edge driven once
    /// plus the expected repair work.
    pub fn horizon_hours(&self) -> f64 {
        let travel: f64 = self.road.edges().iter().map(|e| e.minutes).sum();
        let repair: f64 = self.lines.iter().map(|l| l.prior * l.repair_minutes).sum();
        (travel + repair) / 60.0 / self.zones.len() as f64
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn line(id: &str, circuit: &str, segment: &str, a: NodeId, b: NodeId, prior: f64) -> LinePart {
        LinePart {
            id: id.into(),
            circuit: circuit.into(),
            segment: segment.into(),
            a,
            b,
            prior,
            repair_minutes: 60.0,
        }
    }

    pub fn seg(id: &str, device: NodeId, parent: Option<&str>, customers: &[NodeId]) -> SegmentPart {
        SegmentPart {
            id: id.into(),
            device_node: device,
            parent: parent.map(Into::into),
            customers: customers.to_vec(),
        }
    }

    pub fn cust(node: NodeId, circuit: &str, count: u32) -> CustomerPart {
        CustomerPart { node, circuit: circuit.into(), count, call_probability: 0.05 }
    }

    pub fn edge(a: NodeId, b: NodeId, minutes: f64) -> RoadEdge {
        RoadEdge { a, b, minutes }
    }

    pub fn single_zone(n: usize) -> Vec<ZonePart> {
        vec![ZonePart { id: "Z1".into(), nodes: (0..n).collect(), vehicle: "1".into(), rank: 1 }]
    }

    /// Radial chain 0-1-2-3, one line and one segment per span, customers at 1, 2, 3.
    pub fn chain3() -> DistributionGrid {
        DistributionGrid::build(GridParts {
            node_count: 4,
            edges: vec![edge(0, 1, 10.0), edge(1, 2, 10.0), edge(2, 3, 10.0)],
            lines: vec![
                line("L1", "F", "S1", 0, 1, 0.1),
                line("L2", "F", "S2", 1, 2, 0.2),
                line("L3", "F", "S3", 2, 3, 0.3),
            ],
            segments: vec![
                seg("S1", 0, None, &[1]),
                seg("S2", 1, Some("S1"), &[2]),
                seg("S3", 2, Some("S2"), &[3]),
            ],
            customers: vec![cust(1, "F", 5), cust(2, "F", 7), cust(3, "F", 11)],
            zones: single_zone(4),
        })
        .unwrap()
    }

    /// Two zones split at node 2 of the path 0-1-2-3-4.
    pub fn two_zone_path() -> DistributionGrid {
        DistributionGrid::build(GridParts {
            node_count: 5,
            edges: vec![edge(0, 1, 5.0), edge(1, 2, 5.0), edge(2, 3, 5.0), edge(3, 4, 5.0)],
            lines: vec![
                line("L1", "F", "S1", 0, 1, 0.1),
                line("L2", "F", "S1", 1, 2, 0.1),
                line("L3", "F", "S2", 2, 3, 0.1),
                line("L4", "F", "S2", 3, 4, 0.1),
            ],
            segments: vec![seg("S1", 0, None, &[1]), seg("S2", 2, Some("S1"), &[4])],
            customers: vec![cust(1, "F", 3), cust(4, "F", 3)],
            zones: vec![
                ZonePart { id: "west".into(), nodes: vec![0, 1, 2], vehicle: "1".into(), rank: 1 },
                ZonePart { id: "east".into(), nodes: vec![2, 3, 4], vehicle: "2".into(), rank: 2 },
            ],
        })
        .unwrap()
    }
}
