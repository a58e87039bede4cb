//! Fault posteriors from trouble calls, then from a crew finding.
//!
//!     cargo run --example belief_update

use gridcrew::belief::{posterior_mc, Belief, BeliefConfig};
use gridcrew::scenario::{CaseSet, Scenario};

fn show(label: &str, scenario: &Scenario, b: &Belief) {
    let cells: Vec<String> = scenario
        .grid
        .lines
        .iter()
        .zip(b.posterior())
        .map(|(l, p)| format!("{}={:.3}", l.id, p))
        .collect();
    println!("{label:<22} {}", cells.join("  "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::bundled("eight_node").expect("bundled");
    let g = &scenario.grid;
    let case = &CaseSet::bundled("eight_node", g).expect("bundled cases").cases[0];

    let prior = Belief::new(g, vec![false; g.customers.len()], BeliefConfig::default())?;
    show("prior, nobody calls", &scenario, &prior);

    let called = Belief::new(g, case.calls.clone(), BeliefConfig::default())?;
    show("after the case calls", &scenario, &called);

    // importance sampling agrees with the exact pass
    let mc = posterior_mc(g, 0, called.calls(), called.status(), called.prior(), 200_000, 7)?;
    let worst = mc.posterior.iter().zip(&g.circuits[0].lines).map(|(p, &l)| (p - called.posterior()[l]).abs()).fold(0.0, f64::max);
    println!("{:<22} max |mc - exact| = {worst:.4}", "monte carlo check");

    // a crew drives the most suspicious line and finds it intact
    let (suspect, _) = called.posterior().iter().enumerate().fold((0, 0.0), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
    let after = called.update_on_observation(g, suspect, false)?;
    show(&format!("{} found intact", g.lines[suspect].id), &scenario, &after);
    Ok(())
}
