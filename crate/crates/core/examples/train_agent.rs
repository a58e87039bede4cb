//! Short self-play run on the eight-node system, then a checkpoint round trip.
//!
//!     cargo run --release --example train_agent -- [episodes]

use gridcrew::net::{Checkpoint, CheckpointMeta};
use gridcrew::scenario::{CaseSet, Scenario};
use gridcrew::train::{train_loop, value_scale, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let episodes: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let scenario = Scenario::bundled("eight_node").expect("bundled");
    let cases = CaseSet::bundled("eight_node", &scenario.grid).expect("bundled cases");

    let mut cfg = TrainConfig::for_scenario(&scenario);
    cfg.episodes = episodes;
    cfg.eval_every = (episodes / 10).max(1);

    println!("{:>8} {:>12} {:>10} {:>10}", "episode", "eval hours", "value", "policy");
    let outcome = train_loop(&scenario, &cfg, &cases.cases, &mut |row, _| {
        println!("{:>8} {:>12.2} {:>10.5} {:>10.5}", row.episode, row.eval_outage_hours, row.value_loss, row.policy_loss);
        Ok(())
    })?;

    let meta = CheckpointMeta { config: cfg.net.clone(), value_scale: value_scale(&scenario.grid), scenario: scenario.id.clone(), episodes };
    let ck = Checkpoint { meta, net: outcome.net, optimizer: Some(outcome.optimizer) };
    let path = std::env::temp_dir().join("gridcrew_example.ckpt");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back.net.params(), ck.net.params());
    println!("saved {} ({} parameters, sha256 {})", path.display(), ck.net.params().len(), &ck.digest()[..16]);
    Ok(())
}
