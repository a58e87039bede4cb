//! Random radial scenarios: generate, serialize, reload and recount.
//!
//!     cargo run --example generate_scenario -- [lines] [seed]

use std::path::Path;

use gridcrew::generate::{generate, sample_cases, GenParams};
use gridcrew::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let lines: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    for params in [GenParams::radial(lines, seed), GenParams::ieee123_like(seed)] {
        let text = generate(&params)?.to_toml();
        let s = Scenario::from_toml(&text, Path::new(&params.id))?;
        let g = &s.grid;
        println!(
            "{:<14} asked {}/{}/{} lines/segments/customer nodes, loaded {}/{}/{}; {} zones; {} bytes of TOML",
            params.id,
            params.lines,
            params.segments,
            params.customers,
            g.lines.len(),
            g.segments.len(),
            g.customers.len(),
            g.zones.len(),
            text.len()
        );
        let cases = sample_cases(g, 3, 2, seed);
        for c in &cases.cases {
            println!("    case {}: {:?}", c.name, c.damaged_ids(g));
        }
    }
    Ok(())
}
