//! Scenario files: a grid, its vehicles, and how damage and trouble calls are produced.
//!
//! The on-disk format is TOML; `docs/scenario-format.md` describes every field.

use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, ScenarioError};
use crate::grid::{CustomerPart, DistributionGrid, GridParts, LinePart, NodeId, RoadEdge, SegmentPart, ZonePart};

pub const DEFAULT_CALL_PROBABILITY: f64 = 0.05;

const BUNDLED: &[(&str, &str)] = &[
    ("eight_node", include_str!("../scenarios/eight_node.scenario")),
    ("ieee123_like", include_str!("../scenarios/ieee123_like.scenario")),
];

const BUNDLED_CASES: &[(&str, &str)] = &[
    ("eight_node", include_str!("../scenarios/eight_node.cases")),
    ("ieee123_like", include_str!("../scenarios/ieee123_like.cases")),
];

/// Names of the scenarios compiled into the library.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateEncoding {
    /// One belief entry per power line.
    Line,
    /// One belief entry per protection segment.
    Segment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DamageSpec {
    /// Each line fails independently with its prior.
    Sample,
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallSpec {
    /// Each de-energized customer calls independently with its calling probability.
    Sample,
    /// Called flag per customer (indexed like `grid.customers`).
    Fixed(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: String,
    pub depot: NodeId,
    pub zone: usize,
    pub rank: u32,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub grid: Arc<DistributionGrid>,
    pub damage: DamageSpec,
    pub calls: CallSpec,
    /// Sorted by priority rank, highest priority first.
    pub vehicles: Vec<VehicleSpec>,
    pub seed: u64,
    pub encoding: StateEncoding,
}

impl Scenario {
    /// Parses scenario text. `origin` is only used in error messages.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        file.into_scenario().map_err(|source| ScenarioError::Grid { path: origin.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// Loads a file path, or a bundled scenario by name when no such file exists.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        match BUNDLED.iter().find(|(n, _)| *n == name_or_path) {
            Some((n, text)) => Self::from_toml(text, Path::new(&format!("<bundled {n}>"))),
            None => Self::load(path),
        }
    }

    pub fn bundled(name: &str) -> Option<Self> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name)?;
        Some(Self::from_toml(text, Path::new(name)).expect("bundled scenario is valid"))
    }

    /// Same scenario with damage and calls pinned to a case.
    pub fn with_case(&self, case: &Case) -> Self {
        Self {
            damage: DamageSpec::Fixed(case.damaged.clone()),
            calls: CallSpec::Fixed(case.calls.clone()),
            ..self.clone()
        }
    }

    /// Same scenario with both damage and calls drawn at reset.
    pub fn sampled(&self) -> Self {
        Self { damage: DamageSpec::Sample, calls: CallSpec::Sample, ..self.clone() }
    }
}

/// A fixed-damage test case.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub name: String,
    /// Called flag per customer (indexed like `grid.customers`).
    pub calls: Vec<bool>,
    pub damaged: Vec<usize>,
}

impl Case {
    pub fn damaged_ids<'g>(&self, grid: &'g DistributionGrid) -> Vec<&'g str> {
        self.damaged.iter().map(|&l| grid.lines[l].id.as_str()).collect()
    }

    /// Call flags in the order of `customer_order` as a `[0 1 ...]` string.
    pub fn calls_string(&self, grid: &DistributionGrid, customer_order: &[NodeId]) -> String {
        let bits: Vec<&str> = customer_order
            .iter()
            .map(|&n| match grid.customer_at(n) {
                Some(c) if self.calls[c] => "1",
                _ => "0",
            })
            .collect();
        format!("[{}]", bits.join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct CaseSet {
    pub customer_order: Vec<NodeId>,
    pub cases: Vec<Case>,
}

impl CaseSet {
    pub fn from_toml(text: &str, grid: &DistributionGrid, origin: &Path) -> Result<Self, ScenarioError> {
        let parse_err = |message: String| ScenarioError::Parse { path: origin.to_path_buf(), message };
        let file: CasesFile = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut order = Vec::with_capacity(file.customer_order.len());
        for &n in &file.customer_order {
            grid.customer_at(n)
                .ok_or_else(|| parse_err(format!("customer_order lists node {n}, which has no customers")))?;
            order.push(n);
        }
        let mut cases = Vec::with_capacity(file.cases.len());
        for raw in file.cases {
            if raw.calls.len() != order.len() {
                return Err(parse_err(format!(
                    "case {}: {} call flags for {} customer nodes",
                    raw.name,
                    raw.calls.len(),
                    order.len()
                )));
            }
            let mut calls = vec![false; grid.customers.len()];
            for (&n, &flag) in order.iter().zip(&raw.calls) {
                match flag {
                    0 => {}
                    1 => calls[grid.customer_at(n).expect("checked")] = true,
                    other => return Err(parse_err(format!("case {}: call flag {other} is not 0 or 1", raw.name))),
                }
            }
            let mut damaged = Vec::with_capacity(raw.damaged.len());
            for id in &raw.damaged {
                damaged.push(grid.line_index(id).ok_or_else(|| parse_err(format!("case {}: unknown line {id}", raw.name)))?);
            }
            check_calls_consistent(grid, &damaged, &calls)
                .map_err(|e| parse_err(format!("case {}: {e}", raw.name)))?;
            cases.push(Case { name: raw.name, calls, damaged });
        }
        Ok(Self { customer_order: order, cases })
    }

    pub fn load(path: &Path, grid: &DistributionGrid) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, grid, path)
    }

    /// Loads a file path, or the bundled case set of a bundled scenario by name.
    pub fn resolve(name_or_path: &str, grid: &DistributionGrid) -> Result<Self, ScenarioError> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path, grid);
        }
        match BUNDLED_CASES.iter().find(|(n, _)| *n == name_or_path) {
            Some((n, text)) => Self::from_toml(text, grid, Path::new(&format!("<bundled {n} cases>"))),
            None => Self::load(path, grid),
        }
    }

    pub fn bundled(name: &str, grid: &DistributionGrid) -> Option<Self> {
        let (_, text) = BUNDLED_CASES.iter().find(|(n, _)| *n == name)?;
        Some(Self::from_toml(text, grid, Path::new(name)).expect("bundled cases are valid"))
    }

    pub fn to_toml(&self, grid: &DistributionGrid) -> String {
        let file = CasesFile {
            customer_order: self.customer_order.clone(),
            cases: self
                .cases
                .iter()
                .map(|c| CaseRaw {
                    name: c.name.clone(),
                    calls: self
                        .customer_order
                        .iter()
                        .map(|&n| u8::from(c.calls[grid.customer_at(n).expect("customer node")]))
                        .collect(),
                    damaged: c.damaged_ids(grid).into_iter().map(String::from).collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("cases serialize")
    }
}

/// Every called customer must be de-energized by the damaged lines.
pub fn check_calls_consistent(grid: &DistributionGrid, damaged: &[usize], calls: &[bool]) -> Result<(), GridError> {
    let ids: Vec<&str> = damaged.iter().map(|&l| grid.lines[l].id.as_str()).collect();
    let dark = grid.affected_by_lines(&ids)?;
    for (c, &called) in calls.iter().enumerate() {
        let node = grid.customers[c].node;
        if called && !dark.contains(&node) {
            return Err(GridError::invalid(
                "calls.consistent_with_damage",
                format!("node {node} called but stays energized under the damage set"),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// file representation

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rho")]
    pub call_probability: f64,
    #[serde(default = "default_encoding")]
    pub state_encoding: StateEncoding,
    pub road: RoadRaw,
    pub lines: IndexMap<String, LineRaw>,
    pub segments: IndexMap<String, SegmentRaw>,
    pub customers: IndexMap<String, CustomerRaw>,
    pub zones: IndexMap<String, ZoneRaw>,
    pub vehicles: IndexMap<String, VehicleRaw>,
    #[serde(default)]
    pub damage: DamageRaw,
    #[serde(default)]
    pub calls: CallsRaw,
}

fn default_rho() -> f64 {
    DEFAULT_CALL_PROBABILITY
}

fn default_encoding() -> StateEncoding {
    StateEncoding::Line
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadRaw {
    pub nodes: usize,
    pub edges: Vec<EdgeRaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRaw {
    pub a: NodeId,
    pub b: NodeId,
    pub minutes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRaw {
    pub circuit: String,
    pub segment: String,
    pub a: NodeId,
    pub b: NodeId,
    pub prior: f64,
    pub repair_minutes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRaw {
    pub device: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default)]
    pub customers: Vec<NodeId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomerRaw {
    pub circuit: String,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_probability: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneRaw {
    pub nodes: Vec<NodeId>,
    pub vehicle: String,
    pub rank: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleRaw {
    pub depot: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sample,
    Fixed,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageRaw {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallsRaw {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CasesFile {
    customer_order: Vec<NodeId>,
    cases: Vec<CaseRaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRaw {
    name: String,
    calls: Vec<u8>,
    damaged: Vec<String>,
}

impl ScenarioFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn into_scenario(self) -> Result<Scenario, GridError> {
        if !(self.call_probability > 0.0 && self.call_probability <= 1.0) {
            return Err(GridError::invalid(
                "scenario.call_probability",
                format!("call_probability {} outside (0,1]", self.call_probability),
            ));
        }
        let mut customers = Vec::with_capacity(self.customers.len());
        for (key, c) in &self.customers {
            let node: NodeId = key.parse().map_err(|_| {
                GridError::invalid("customers.key_is_node", format!("customer key {key:?} is not a road node id"))
            })?;
            customers.push(CustomerPart {
                node,
                circuit: c.circuit.clone(),
                count: c.count,
                call_probability: c.call_probability.unwrap_or(self.call_probability),
            });
        }
        let parts = GridParts {
            node_count: self.road.nodes,
            edges: self.road.edges.iter().map(|e| RoadEdge { a: e.a, b: e.b, minutes: e.minutes }).collect(),
            lines: self
                .lines
                .iter()
                .map(|(id, l)| LinePart {
                    id: id.clone(),
                    circuit: l.circuit.clone(),
                    segment: l.segment.clone(),
                    a: l.a,
                    b: l.b,
                    prior: l.prior,
                    repair_minutes: l.repair_minutes,
                })
                .collect(),
            segments: self
                .segments
                .iter()
                .map(|(id, s)| SegmentPart {
                    id: id.clone(),
                    device_node: s.device,
                    parent: s.parent.clone(),
                    customers: s.customers.clone(),
                })
                .collect(),
            customers,
            zones: self
                .zones
                .iter()
                .map(|(id, z)| ZonePart { id: id.clone(), nodes: z.nodes.clone(), vehicle: z.vehicle.clone(), rank: z.rank })
                .collect(),
        };
        let grid = DistributionGrid::build(parts)?;

        let mut vehicles = Vec::with_capacity(self.vehicles.len());
        for (id, v) in &self.vehicles {
            let zone = grid.zone_of_vehicle(id).ok_or_else(|| {
                GridError::invalid("vehicles.assigned_zone", format!("vehicle {id} is not assigned to any zone"))
            })?;
            if !grid.zones[zone].contains(v.depot) {
                return Err(GridError::invalid(
                    "vehicles.depot_in_zone",
                    format!("vehicle {id} depot {} is outside zone {}", v.depot, grid.zones[zone].id),
                ));
            }
            vehicles.push(VehicleSpec { id: id.clone(), depot: v.depot, zone, rank: grid.zones[zone].rank });
        }
        for z in &grid.zones {
            if !self.vehicles.contains_key(&z.vehicle) {
                return Err(GridError::invalid(
                    "zones.vehicle_declared",
                    format!("zone {} names vehicle {}, which has no [vehicles] entry", z.id, z.vehicle),
                ));
            }
        }
        vehicles.sort_by_key(|v| v.rank);

        let damage = match self.damage.mode {
            Mode::Sample => DamageSpec::Sample,
            Mode::Fixed => {
                let mut lines = Vec::with_capacity(self.damage.lines.len());
                for id in &self.damage.lines {
                    lines.push(grid.line_index(id).ok_or_else(|| {
                        GridError::invalid("damage.known_lines", format!("damage lists unknown line {id}"))
                    })?);
                }
                DamageSpec::Fixed(lines)
            }
        };
        let calls = match self.calls.mode {
            Mode::Sample => CallSpec::Sample,
            Mode::Fixed => {
                let mut flags = vec![false; grid.customers.len()];
                for &node in &self.calls.nodes {
                    let explainable = grid.customer_at(node).is_some_and(|c| {
                        let seg = &grid.segments[grid.customers[c].segment];
                        seg.cut_set.iter().any(|&l| grid.lines[l].prior > 0.0)
                    });
                    if !explainable {
                        return Err(GridError::invalid(
                            "calls.consistent",
                            format!("a call at node {node} cannot be explained: no line fault de-energizes it"),
                        ));
                    }
                    flags[grid.customer_at(node).expect("checked")] = true;
                }
                CallSpec::Fixed(flags)
            }
        };
        if let (DamageSpec::Fixed(d), CallSpec::Fixed(c)) = (&damage, &calls) {
            check_calls_consistent(&grid, d, c)?;
        }

        Ok(Scenario {
            id: self.id,
            grid: Arc::new(grid),
            damage,
            calls,
            vehicles,
            seed: self.seed,
            encoding: self.state_encoding,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_node_loads() {
        let s = Scenario::bundled("eight_node").unwrap();
        assert_eq!(s.grid.road.node_count(), 8);
        assert_eq!(s.grid.lines.len(), 7);
        assert_eq!(s.vehicles.len(), 1);
        assert_eq!(s.encoding, StateEncoding::Line);
    }

    #[test]
    fn eight_node_vehicle_at_two_reaches_one_three_four_six() {
        let s = Scenario::bundled("eight_node").unwrap();
        assert_eq!(s.grid.feasible_actions(2, 0).unwrap(), vec![1, 3, 4, 6]);
    }

    #[test]
    fn pole_two_device_darkens_four_and_five() {
        let s = Scenario::bundled("eight_node").unwrap();
        let g = &s.grid;
        let seg = g.segments.iter().find(|seg| seg.device_node == 2).unwrap();
        let nodes: Vec<_> = seg.customers.iter().map(|&c| g.customers[c].node).collect();
        assert_eq!(nodes, vec![4, 5]);
    }

    #[test]
    fn ieee123_like_counts() {
        let s = Scenario::bundled("ieee123_like").unwrap();
        assert_eq!(s.grid.zones.len(), 4);
        assert_eq!(s.grid.segments.len(), 62);
        assert_eq!(s.grid.customers.len(), 42);
        assert_eq!(s.vehicles.iter().map(|v| v.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn bundled_cases_are_consistent() {
        for name in bundled_names() {
            let s = Scenario::bundled(name).unwrap();
            let cases = CaseSet::bundled(name, &s.grid).unwrap();
            assert_eq!(cases.cases.len(), 10, "{name}");
        }
    }

    #[test]
    fn table_case_one_round_trips() {
        let s = Scenario::bundled("eight_node").unwrap();
        let cases = CaseSet::bundled("eight_node", &s.grid).unwrap();
        let c = &cases.cases[0];
        assert_eq!(c.calls_string(&s.grid, &cases.customer_order), "[0 0 1 0 0]");
        assert_eq!(c.damaged_ids(&s.grid), vec!["L5"]);
        let again = CaseSet::from_toml(&cases.to_toml(&s.grid), &s.grid, Path::new("x")).unwrap();
        assert_eq!(again.cases, cases.cases);
    }

    const TINY: &str = r#"
id = "tiny"
[road]
nodes = 3
edges = [{ a = 0, b = 1, minutes = 5.0 }, { a = 1, b = 2, minutes = 5.0 }]
[lines.L1]
circuit = "F"
segment = "S1"
a = 0
b = 1
prior = 0.1
repair_minutes = 60.0
[lines.L2]
circuit = "F"
segment = "S2"
a = 1
b = 2
prior = 0.0
repair_minutes = 60.0
[segments.S1]
device = 0
customers = [1]
[segments.S2]
device = 1
parent = "S1"
customers = [2]
[customers.1]
circuit = "F"
count = 4
[customers.2]
circuit = "F"
count = 6
[zones.Z]
nodes = [0, 1, 2]
vehicle = "v"
rank = 1
[vehicles.v]
depot = 0
"#;

    fn tiny_with(extra: &str) -> Result<Scenario, ScenarioError> {
        Scenario::from_toml(&format!("{TINY}{extra}"), Path::new("tiny"))
    }

    #[test]
    fn tiny_defaults() {
        let s = tiny_with("").unwrap();
        assert_eq!(s.damage, DamageSpec::Sample);
        assert_eq!(s.calls, CallSpec::Sample);
        assert_eq!(s.grid.customers[0].call_probability, DEFAULT_CALL_PROBABILITY);
    }

    #[test]
    fn call_nobody_can_explain_is_rejected() {
        // node 2 sits below L2 (prior 0) and L1 (prior 0.1), so make L1 impossible too
        let text = TINY.replace("prior = 0.1", "prior = 0.0");
        let err = Scenario::from_toml(&format!("{text}[calls]\nmode = \"fixed\"\nnodes = [2]\n"), Path::new("t")).unwrap_err();
        assert_eq!(err.rule(), Some("calls.consistent"));
    }

    #[test]
    fn call_inconsistent_with_fixed_damage_is_rejected() {
        let err = tiny_with("[damage]\nmode = \"fixed\"\nlines = [\"L2\"]\n[calls]\nmode = \"fixed\"\nnodes = [1]\n").unwrap_err();
        assert_eq!(err.rule(), Some("calls.consistent_with_damage"));
    }

    #[test]
    fn parse_error_mentions_location() {
        let err = tiny_with("[road.oops\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("parse error"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let err = Scenario::from_toml(&TINY.replace("rank = 1", "rank = 1\ncolour = 3"), Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn missing_file_names_path() {
        let err = Scenario::resolve("/nonexistent/where.scenario").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/where.scenario"));
    }

    #[test]
    fn load_is_deterministic() {
        let a = tiny_with("").unwrap();
        let b = tiny_with("").unwrap();
        assert_eq!(format!("{:?}", a.grid), format!("{:?}", b.grid));
    }
}
