//! Four crews on the four-zone system, dispatched by priority whenever several wait at once.
//!
//!     cargo run --release --example multi_vehicle -- [seed]

use gridcrew::baselines::{Algorithm, BaselineConfig};
use gridcrew::env::EnvConfig;
use gridcrew::scenario::Scenario;
use gridcrew::train::{run_episode, trajectory_string, Policy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let scenario = Scenario::bundled("ieee123_like").expect("bundled").sampled();
    let policy = Policy::Baseline(BaselineConfig::new(Algorithm::Greedy));
    let cfg = EnvConfig { max_decisions: 2000, ..EnvConfig::default() };
    let (env, summary) = run_episode(&scenario, cfg, &policy, seed)?;

    let damaged: Vec<&str> = (0..env.true_damage().len())
        .filter(|&l| env.true_damage()[l])
        .map(|l| scenario.grid.lines[l].id.as_str())
        .collect();
    println!("hidden damage {damaged:?}");
    for r in summary.log.iter().filter(|r| r.queue.len() > 1) {
        println!("t={:>7.1}  waiting {:?}  dispatch {}", r.time, r.queue, r.vehicle);
    }
    for (v, path) in scenario.vehicles.iter().zip(trajectory_string(&scenario, &summary.log).split("; ")) {
        println!("vehicle {} (zone {}): {path}", v.id, scenario.grid.zones[v.zone].id);
    }
    println!(
        "{} decisions, max posterior {:.4}, outage {:.1} customer-hours",
        summary.decisions,
        env.routing.belief.max_posterior(),
        summary.outage_hours
    );
    Ok(())
}
