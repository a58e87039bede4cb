//! Load a bundled scenario and walk its protection structure.
//!
//!     cargo run --example load_scenario -- [scenario-file-or-name]

use gridcrew::scenario::{CaseSet, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "eight_node".into());
    let scenario = Scenario::resolve(&name)?;
    let g = &scenario.grid;
    println!("{}: {} road nodes, {} lines, {} customers", scenario.id, g.road.node_count(), g.lines.len(), g.total_customers());

    for seg in &g.segments {
        let lines: Vec<&str> = seg.lines.iter().map(|&l| g.lines[l].id.as_str()).collect();
        let parent = seg.parent.map(|p| g.segments[p].id.clone()).unwrap_or_else(|| "-".into());
        println!("  segment {:<4} parent {:<4} lines {:?}", seg.id, parent, lines);
    }

    // which customer nodes go dark if the first line fails
    let first = g.lines[0].id.as_str();
    println!("fault on {first} darkens nodes {:?}", g.affected_by_lines(&[first])?);

    if let Ok(cases) = CaseSet::resolve(&name, g) {
        for c in cases.cases.iter().take(3) {
            println!("case {}: calls {} damaged {:?}", c.name, c.calls_string(g, &cases.customer_order), c.damaged_ids(g));
        }
    }
    Ok(())
}
