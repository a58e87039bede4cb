//! Step the routing environment by hand with the greedy dispatcher.
//!
//!     cargo run --example dispatch_episode -- [case-number]

use gridcrew::baselines::greedy_decide;
use gridcrew::env::{EnvConfig, EnvState, RoutingAction};
use gridcrew::scenario::{CaseSet, Scenario};
use gridcrew::train::trajectory_string;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pick: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let base = Scenario::bundled("eight_node").expect("bundled");
    let cases = CaseSet::bundled("eight_node", &base.grid).expect("bundled cases");
    let case = &cases.cases[pick.clamp(1, cases.cases.len()) - 1];
    let scenario = base.with_case(case);
    println!("case {}: damaged {:?}", case.name, case.damaged_ids(&scenario.grid));

    let mut env = EnvState::reset(&scenario, EnvConfig::default(), 0)?;
    while !env.is_terminal() {
        let destination = greedy_decide(&scenario.grid, &env.routing)?;
        let vehicle = env.next_to_dispatch()?.to_string();
        let (obs, reward, minutes) = env.step_mut(&RoutingAction { vehicle, destination })?;
        println!(
            "t={:>6.1}  -> {}  {:<16} reward {:>9.2}  took {:>5.1} min  max posterior {:.3}",
            env.routing.clock,
            destination,
            obs.label(),
            reward,
            minutes,
            env.routing.belief.max_posterior()
        );
    }
    println!("trajectory {}", trajectory_string(&scenario, env.log()));
    println!("outage {:.2} customer-hours", env.outage_hours()?);
    Ok(())
}
