//! Vanilla MCTS, open-loop UCT and the greedy dispatcher on the ten fixed cases.
//!
//!     cargo run --release --example compare_baselines -- [simulations]

use gridcrew::baselines::{Algorithm, BaselineConfig};
use gridcrew::env::EnvConfig;
use gridcrew::scenario::{CaseSet, Scenario};
use gridcrew::train::{run_episode, Policy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sims: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let scenario = Scenario::bundled("eight_node").expect("bundled");
    let cases = CaseSet::bundled("eight_node", &scenario.grid).expect("bundled cases");

    print!("{:<6}", "case");
    let algos = [Algorithm::VanillaMcts, Algorithm::Oluct, Algorithm::Greedy];
    for a in algos {
        print!("{:>14}", a.name());
    }
    println!();
    let mut totals = [0.0; 3];
    for (i, case) in cases.cases.iter().enumerate() {
        print!("{:<6}", case.name);
        for (k, a) in algos.into_iter().enumerate() {
            let policy = Policy::Baseline(BaselineConfig { simulations: sims, ..BaselineConfig::new(a) });
            let (_, summary) = run_episode(&scenario.with_case(case), EnvConfig::default(), &policy, i as u64)?;
            totals[k] += summary.outage_hours;
            print!("{:>14.2}", summary.outage_hours);
        }
        println!();
    }
    print!("{:<6}", "mean");
    for t in totals {
        print!("{:>14.2}", t / cases.cases.len() as f64);
    }
    println!();
    Ok(())
}
