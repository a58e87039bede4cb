//! One network-free search from the start of a case, and the root statistics it leaves.
//!
//!     cargo run --release --example stochastic_search -- [simulations]

use gridcrew::env::{EnvConfig, EnvState};
use gridcrew::mcts::{search_tree, SearchConfig, Selection, UniformEvaluator};
use gridcrew::scenario::{CaseSet, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sims: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let base = Scenario::bundled("eight_node").expect("bundled");
    let case = &CaseSet::bundled("eight_node", &base.grid).expect("bundled cases").cases[3];
    let scenario = base.with_case(case);
    let env = EnvState::reset(&scenario, EnvConfig::default(), 0)?;

    let cfg = SearchConfig { simulations: sims, selection: Selection::Puct { c: 1.25 }, gamma: 1.0, tau: 1.0, root_noise: None, seed: 11 };
    let (result, tree) = search_tree(&scenario.grid, &env.config, &env.routing, &UniformEvaluator, &cfg)?;
    tree.check_invariants()?;

    println!("{} decision nodes after {sims} simulations", tree.nodes.len());
    println!("{:>6} {:>7} {:>8} {:>12}", "move", "visits", "pi", "Q (cust-h)");
    for i in 0..result.actions.len() {
        println!("{:>6} {:>7} {:>8.3} {:>12.2}", result.actions[i], result.visit_counts[i], result.policy[i], result.root_q[i]);
    }
    println!("most visited: {}  value target: {:.2}", result.most_visited(), result.value_target);
    println!("{}", serde_json::to_string_pretty(&tree.root_json())?);
    Ok(())
}
