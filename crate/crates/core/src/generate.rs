//! Random radial scenarios for stress tests and the bundled multi-zone system.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{draw_calls, draw_damage};
use crate::grid::{DistributionGrid, NodeId};
use crate::scenario::{
    Case, CaseSet, CallsRaw, CustomerRaw, DamageRaw, EdgeRaw, LineRaw, Mode, RoadRaw, ScenarioFile, SegmentRaw, StateEncoding,
    VehicleRaw, ZoneRaw, DEFAULT_CALL_PROBABILITY,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub id: String,
    /// One feeder circuit and one vehicle per zone; all feeders leave substation node 0.
    pub zones: usize,
    pub segments: usize,
    pub lines: usize,
    pub customers: usize,
    /// Repair minutes per zone; cycled if shorter than `zones`.
    pub repair_minutes: Vec<f64>,
    pub prior_range: (f64, f64),
    pub travel_range: (f64, f64),
    pub customer_range: (u32, u32),
    /// Largest number of in-zone road neighbors any node may have.
    pub max_degree: usize,
    pub encoding: StateEncoding,
    pub seed: u64,
}

impl GenParams {
    /// Single feeder with `lines` lines, one per segment.
    pub fn radial(lines: usize, seed: u64) -> Self {
        Self {
            id: format!("radial_{lines}"),
            zones: 1,
            segments: lines.div_ceil(2).max(1),
            lines,
            customers: lines.div_ceil(2).max(1),
            repair_minutes: vec![60.0],
            prior_range: (0.05, 0.4),
            travel_range: (10.0, 40.0),
            customer_range: (10, 60),
            max_degree: 4,
            encoding: StateEncoding::Line,
            seed,
        }
    }

    /// Four zones, 62 segments, 122 lines (123 road nodes) and 42 customer nodes.
    pub fn ieee123_like(seed: u64) -> Self {
        Self {
            id: "ieee123_like".into(),
            zones: 4,
            segments: 62,
            lines: 122,
            customers: 42,
            repair_minutes: vec![60.0, 120.0],
            prior_range: (0.005, 0.04),
            travel_range: (5.0, 20.0),
            customer_range: (5, 60),
            max_degree: 3,
            encoding: StateEncoding::Segment,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.zones == 0 {
            return Err("zones must be at least 1".into());
        }
        if self.segments < self.zones {
            return Err(format!("{} segments cannot cover {} zones", self.segments, self.zones));
        }
        if self.lines < self.segments {
            return Err(format!("{} lines cannot fill {} segments", self.lines, self.segments));
        }
        if self.customers > self.lines {
            return Err(format!("{} customer nodes need at least as many lines", self.customers));
        }
        if self.customers < self.zones {
            return Err("every zone needs at least one customer node".into());
        }
        if self.max_degree < 2 {
            return Err("max_degree must be at least 2".into());
        }
        if self.repair_minutes.is_empty() || self.repair_minutes.iter().any(|&r| r <= 0.0) {
            return Err("repair_minutes must be positive".into());
        }
        let (lo, hi) = self.prior_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err("prior_range must satisfy 0 <= lo <= hi <= 1".into());
        }
        if !(self.travel_range.0 > 0.0 && self.travel_range.0 <= self.travel_range.1) {
            return Err("travel_range must be positive and ordered".into());
        }
        if self.customer_range.0 > self.customer_range.1 {
            return Err("customer_range must be ordered".into());
        }
        Ok(())
    }
}

fn split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i >= parts - total % parts)).collect()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round4(x: f64) -> f64 {
    (x * 10000.0).round() / 10000.0
}

pub fn generate(p: &GenParams) -> Result<ScenarioFile, String> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let seg_split = split(p.segments, p.zones);
    let line_split = split(p.lines, p.zones);
    let cust_split = split(p.customers, p.zones);

    let mut edges = Vec::new();
    let mut lines = IndexMap::new();
    let mut segments = IndexMap::new();
    let mut customers = IndexMap::new();
    let mut zones = IndexMap::new();
    let mut vehicles = IndexMap::new();
    let mut next_node = 1usize;
    let mut line_no = 0usize;
    let mut seg_no = 0usize;

    for z in 0..p.zones {
        let circuit = format!("F{}", z + 1);
        let repair = p.repair_minutes[z % p.repair_minutes.len()];
        let n_segs = seg_split[z];
        if line_split[z] > 3 * n_segs {
            return Err(format!("zone {} needs more than three lines per segment", z + 1));
        }
        // chain length per segment, 1..=3
        let mut lengths = vec![1usize; n_segs];
        for _ in 0..line_split[z] - n_segs {
            let open: Vec<usize> = (0..n_segs).filter(|&s| lengths[s] < 3).collect();
            lengths[*open.choose(&mut rng).expect("capacity checked")] += 1;
        }

        let mut zone_nodes = vec![0usize];
        let mut degree: IndexMap<usize, usize> = IndexMap::from([(0, 0)]);
        // segment that owns the line entering each non-root node
        let mut entering: IndexMap<usize, String> = IndexMap::new();
        let mut seg_customers: IndexMap<String, Vec<usize>> = IndexMap::new();

        for (k, &len) in lengths.iter().enumerate() {
            seg_no += 1;
            let seg_id = format!("S{seg_no}");
            let start = if k == 0 {
                0
            } else {
                let open: Vec<usize> = zone_nodes
                    .iter()
                    .copied()
                    .filter(|&n| n != 0 && degree[&n] < p.max_degree)
                    .collect();
                *open.choose(&mut rng).ok_or("max_degree too small for the requested size")?
            };
            let parent = entering.get(&start).cloned();
            let mut at = start;
            for _ in 0..len {
                let new = next_node;
                next_node += 1;
                line_no += 1;
                let minutes = round2(rng.gen_range(p.travel_range.0..=p.travel_range.1));
                edges.push(EdgeRaw { a: at, b: new, minutes });
                lines.insert(
                    format!("L{line_no}"),
                    LineRaw {
                        circuit: circuit.clone(),
                        segment: seg_id.clone(),
                        a: at,
                        b: new,
                        prior: round4(rng.gen_range(p.prior_range.0..=p.prior_range.1)),
                        repair_minutes: repair,
                    },
                );
                *degree.get_mut(&at).expect("known node") += 1;
                degree.insert(new, 1);
                entering.insert(new, seg_id.clone());
                zone_nodes.push(new);
                at = new;
            }
            seg_customers.insert(seg_id.clone(), Vec::new());
            segments.insert(seg_id, SegmentRaw { device: start, parent, customers: Vec::new() });
        }

        let mut candidates: Vec<usize> = zone_nodes.iter().copied().filter(|&n| n != 0).collect();
        candidates.shuffle(&mut rng);
        let mut chosen: Vec<usize> = candidates.into_iter().take(cust_split[z]).collect();
        chosen.sort_unstable();
        for node in chosen {
            seg_customers.get_mut(&entering[&node]).expect("segment").push(node);
            customers.insert(
                node.to_string(),
                CustomerRaw {
                    circuit: circuit.clone(),
                    count: rng.gen_range(p.customer_range.0..=p.customer_range.1),
                    call_probability: None,
                },
            );
        }
        for (id, nodes) in seg_customers {
            segments.get_mut(&id).expect("segment").customers = nodes;
        }

        let vehicle = (z + 1).to_string();
        zones.insert(format!("Z{}", z + 1), ZoneRaw { nodes: zone_nodes, vehicle: vehicle.clone(), rank: z as u32 + 1 });
        vehicles.insert(vehicle, VehicleRaw { depot: 0 });
    }

    // keep the customers table in node order
    customers.sort_by(|a, _, b, _| a.parse::<usize>().unwrap_or(0).cmp(&b.parse::<usize>().unwrap_or(0)));

    Ok(ScenarioFile {
        id: p.id.clone(),
        seed: p.seed,
        call_probability: DEFAULT_CALL_PROBABILITY,
        state_encoding: p.encoding,
        road: RoadRaw { nodes: next_node, edges },
        lines,
        segments,
        customers,
        zones,
        vehicles,
        damage: DamageRaw { mode: Mode::Sample, lines: Vec::new() },
        calls: CallsRaw { mode: Mode::Sample, nodes: Vec::new() },
    })
}

/// Draws `count` fixed-damage cases from the line priors, skipping draws with no damage
/// or more than `max_damaged` damaged lines.
pub fn sample_cases(grid: &DistributionGrid, count: usize, max_damaged: usize, seed: u64) -> CaseSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count {
        let damage = draw_damage(grid, &mut rng);
        let damaged: Vec<usize> = (0..damage.len()).filter(|&l| damage[l]).collect();
        if damaged.is_empty() || damaged.len() > max_damaged.max(1) {
            continue;
        }
        let calls = draw_calls(grid, &damage, &mut rng);
        cases.push(Case { name: (cases.len() + 1).to_string(), calls, damaged });
    }
    let mut customer_order: Vec<NodeId> = grid.customers.iter().map(|c| c.node).collect();
    customer_order.sort_unstable();
    CaseSet { customer_order, cases }
}
