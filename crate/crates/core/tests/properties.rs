//! Properties of the grid, belief, environment, search and baselines checked
//! over generated inputs.

mod common;

use std::sync::Arc;

use common::*;
use gridcrew::baselines::{decide, greedy_decide, vanilla_mcts_decide, Algorithm, BaselineConfig};
use gridcrew::belief::{posterior_exact, posterior_mc, LineStatus};
use gridcrew::env::{reward, reward_of, EnvConfig, EnvState, NoEvents, RoutingAction, RoutingState};
use gridcrew::generate::{generate, GenParams};
use gridcrew::grid::{DistributionGrid, GridParts, LinePart};
use gridcrew::mcts::{search, SearchConfig, UniformEvaluator};
use gridcrew::net::{NetConfig, PolicyValueNet};
use gridcrew::scenario::{CallSpec, DamageSpec, Scenario, StateEncoding, VehicleSpec};
use gridcrew::train::{run_episode, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn generated(zones: usize, lines: usize, seed: u64) -> Scenario {
    let params = GenParams {
        zones,
        segments: lines.div_ceil(2).max(zones),
        customers: lines.div_ceil(2).max(zones),
        prior_range: (0.05, 0.5),
        ..GenParams::radial(lines, seed)
    };
    generate(&params).unwrap().into_scenario().unwrap().sampled()
}

/// Plays uniformly random legal moves, calling `each` before every dispatch.
fn random_walk(scenario: &Scenario, seed: u64, each: &mut dyn FnMut(&EnvState)) -> EnvState {
    let cfg = EnvConfig { max_decisions: 40, ..EnvConfig::default() };
    let mut env = EnvState::reset(scenario, cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !env.is_terminal() {
        each(&env);
        let legal = env.routing.legal_actions(&scenario.grid).unwrap();
        let to = legal[rng.gen_range(0..legal.len())];
        let vehicle = env.next_to_dispatch().unwrap().to_string();
        env.step_mut(&RoutingAction { vehicle, destination: to }).unwrap();
    }
    each(&env);
    env
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zones_partition_the_road(zones in 1usize..=4, extra in 0usize..6, seed in 0u64..1000) {
        let s = generated(zones, 2 * zones + extra, seed);
        let g = &s.grid;
        let owners = |n: usize| g.zones.iter().filter(|z| z.contains(n)).count();
        for n in 0..g.road.node_count() {
            prop_assert!(owners(n) >= 1, "node {} lies in no zone", n);
            // feeders all leave the substation, so every zone touches it
            if n != 0 {
                prop_assert_eq!(owners(n), 1, "node {} lies in {} zones", n, owners(n));
            }
        }
        prop_assert_eq!(owners(0), zones);
        let zone_of = |n: usize| g.zones.iter().position(|z| z.contains(n)).unwrap();
        for n in 1..g.road.node_count() {
            for m in g.road.neighbors(n) {
                prop_assert!(m == 0 || zone_of(m) == zone_of(n), "road {}-{} joins two zone interiors", n, m);
            }
        }
    }

    #[test]
    fn posterior_stays_in_unit_interval(zones in 1usize..=2, lines in 3usize..9, seed in 0u64..1000) {
        let s = generated(zones, lines.max(2 * zones), seed);
        let mut bad = None;
        random_walk(&s, seed, &mut |env| {
            if let Some(p) = env.routing.belief.posterior().iter().find(|p| !(0.0..=1.0).contains(*p)) {
                bad = Some(*p);
            }
        });
        prop_assert!(bad.is_none(), "posterior {:?}", bad);
    }

    #[test]
    fn logged_moves_follow_roads_inside_zones(zones in 1usize..=3, extra in 0usize..5, seed in 0u64..1000) {
        let s = generated(zones, 2 * zones + extra, seed);
        let env = random_walk(&s, seed, &mut |_| {});
        let g = &s.grid;
        for r in env.log() {
            let v = s.vehicles.iter().find(|v| v.id == r.vehicle).unwrap();
            prop_assert!(g.road.edge_between(r.from, r.to).is_some(), "{} -> {} is not a road", r.from, r.to);
            prop_assert!(g.zones[v.zone].contains(r.from) && g.zones[v.zone].contains(r.to));
        }
    }

    #[test]
    fn conditioning_on_an_intact_line_renormalizes(seed in 0u64..2000, which in 0usize..4) {
        let g = fork4();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.6)).collect();
        let calls: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.3)).collect();
        let status = vec![LineStatus::Unvisited; 4];
        // joint weights of every fault combination, then keep only those with line `which` intact
        let mut kept = 0.0;
        let mut mass = [0.0; 4];
        for mask in 0u32..16 {
            let faulted = |l: usize| mask >> l & 1 == 1;
            if faulted(which) {
                continue;
            }
            let mut w: f64 = (0..4).map(|l| if faulted(l) { prior[l] } else { 1.0 - prior[l] }).product();
            for (k, c) in g.customers.iter().enumerate() {
                let silent = (1.0 - c.call_probability).powi(c.count as i32);
                w *= match (segment_dark(&g, c.segment, &faulted), calls[k]) {
                    (true, true) => 1.0 - silent,
                    (true, false) => silent,
                    (false, true) => 0.0,
                    (false, false) => 1.0,
                };
            }
            kept += w;
            for (l, m) in mass.iter_mut().enumerate() {
                if faulted(l) {
                    *m += w;
                }
            }
        }
        prop_assume!(kept > 1e-300);
        let mut observed = status.clone();
        observed[which] = LineStatus::ObservedIntact;
        let got = posterior_exact(&g, 0, &calls, &observed, &prior).unwrap();
        for l in 0..4 {
            prop_assert!((got[l] - mass[l] / kept).abs() < 1e-12, "line {}: {} vs {}", l, got[l], mass[l] / kept);
        }
    }

    #[test]
    fn reward_is_negative_when_customers_are_at_risk(p in 0.001f64..1.0, minutes in 0.5f64..200.0) {
        let g = chain3();
        prop_assert!(reward_of(&g, &[0.0, 0.0, p], minutes) < 0.0);
        prop_assert_eq!(reward_of(&g, &[0.0; 3], minutes), 0.0);
    }

    #[test]
    fn baselines_pick_legal_moves_deterministically(zones in 1usize..=2, lines in 3usize..8, seed in 0u64..500, algo in 0usize..3) {
        let s = generated(zones, lines.max(2 * zones), seed);
        let cfg = EnvConfig { max_decisions: 6, ..EnvConfig::default() };
        let env = EnvState::reset(&s, cfg, seed).unwrap();
        prop_assume!(!env.is_terminal());
        let algorithm = [Algorithm::VanillaMcts, Algorithm::Oluct, Algorithm::Greedy][algo];
        let bc = BaselineConfig { simulations: 40, seed, ..BaselineConfig::new(algorithm) };
        let a = decide(&s.grid, &cfg, &env.routing, &bc).unwrap();
        let b = decide(&s.grid, &cfg, &env.routing, &bc).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(env.routing.legal_actions(&s.grid).unwrap().contains(&a));
    }
}

#[test]
fn importance_sampling_within_three_standard_errors() {
    let g = fork4();
    let mut within = 0;
    let mut total = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.5)).collect();
        let calls: Vec<bool> = (0..4).map(|_| rng.gen_bool(0.3)).collect();
        let status = vec![LineStatus::Unvisited; 4];
        let Ok(exact) = posterior_exact(&g, 0, &calls, &status, &prior) else { continue };
        let est = posterior_mc(&g, 0, &calls, &status, &prior, 20_000, seed).unwrap();
        total += 1;
        let ok = est.posterior.iter().zip(&est.std_error).zip(&exact).all(|((m, se), e)| (m - e).abs() <= 3.0 * se + 1e-12);
        within += usize::from(ok);
    }
    assert!(within * 100 >= 95 * total, "{within}/{total} seeds within 3 standard errors");
}

#[test]
fn one_step_search_ranks_moves_by_reward() {
    let fixtures = [(fork4(), vec![false, false, true, false], 1), (star(), vec![true, false], 0), (chain3(), vec![false, false, true], 1)];
    for (g, calls, pos) in fixtures {
        let (s, cfg) = start_at(&g, calls, 1, pos);
        let mut by_reward: Vec<(usize, f64)> = s.legal_actions(&g).unwrap().into_iter().map(|a| (a, reward(&g, &s.belief, pos, a))).collect();
        by_reward.sort_by(|a, b| b.1.total_cmp(&a.1));
        let order: Vec<usize> = by_reward.iter().map(|r| r.0).collect();
        let mut agree = 0;
        for seed in 0..100u64 {
            let sc = SearchConfig { simulations: 1000, seed, ..SearchConfig::default() };
            let r = search(&g, &cfg, &s, &UniformEvaluator, &sc).unwrap();
            let mut ranked: Vec<(usize, u32)> = r.actions.iter().copied().zip(r.visit_counts.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1));
            agree += usize::from(ranked.iter().map(|x| x.0).collect::<Vec<_>>() == order);
        }
        assert!(agree >= 99, "visit ranking matched reward ranking in {agree}/100 seeds, order {order:?}");
    }
}

/// Two routes from the depot to a known fault on edge 2-4: through node 1
/// (minutes `a + b`) or through node 3 (minutes `c + d`).
fn detour(a: f64, b: f64, c: f64, d: f64) -> DistributionGrid {
    let mut faulted: LinePart = line("L3", "F", "S3", 2, 4, 1.0);
    faulted.repair_minutes = 30.0;
    DistributionGrid::build(GridParts {
        node_count: 5,
        edges: vec![edge(0, 1, a), edge(1, 2, b), edge(0, 3, c), edge(3, 2, d), edge(2, 4, 10.0)],
        lines: vec![line("L1", "F", "S1", 0, 1, 0.0), line("L2", "F", "S2", 1, 2, 0.0), faulted],
        segments: vec![seg("S1", 0, None, &[1]), seg("S2", 1, Some("S1"), &[2]), seg("S3", 2, Some("S2"), &[4])],
        customers: vec![cust(1, "F", 5), cust(2, "F", 5), cust(4, "F", 30)],
        zones: one_zone(5),
    })
    .unwrap()
}

/// Fastest arrival over the faulted edge, by trying every simple path.
fn fastest_restoration(g: &DistributionGrid, from: usize, seen: &mut Vec<usize>) -> f64 {
    let mut best = f64::INFINITY;
    for e in g.road.edges() {
        let next = if e.a == from { e.b } else if e.b == from { e.a } else { continue };
        if (e.a, e.b) == (2, 4) || (e.a, e.b) == (4, 2) {
            best = best.min(e.minutes);
        } else if !seen.contains(&next) {
            seen.push(next);
            best = best.min(e.minutes + fastest_restoration(g, next, seen));
            seen.pop();
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vanilla_takes_the_fastest_route_to_a_known_fault(a in 5.0f64..40.0, b in 5.0f64..40.0, c in 5.0f64..40.0, d in 5.0f64..40.0, seed in 0u64..100) {
        prop_assume!(((a + b) - (c + d)).abs() >= 5.0);
        let g = detour(a, b, c, d);
        let (mut s, cfg) = start(&g, vec![false, false, true], 20);
        let best = fastest_restoration(&g, 0, &mut vec![0]);
        let mut travelled = 0.0;
        let mut steps = 0;
        while !s.terminal {
            let bc = BaselineConfig { simulations: 2000, seed: seed + steps, ..BaselineConfig::new(Algorithm::VanillaMcts) };
            let to = vanilla_mcts_decide(&g, &cfg, &s, &bc).unwrap();
            let pos = s.vehicles[0].position;
            travelled += g.road.edge(g.road.edge_between(pos, to).unwrap()).minutes;
            // every line is certainly faulted or certainly intact, so one outcome has all the mass
            let obs = s.observation_distribution(&g, to).unwrap().into_iter().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap().0;
            s.apply(&g, &cfg, to, obs, &mut NoEvents).unwrap();
            steps += 1;
        }
        prop_assert!((travelled - best).abs() < 1e-9, "travelled {} vs fastest {}", travelled, best);
    }
}

fn greedy_value(g: &DistributionGrid, cfg: &EnvConfig, s: &RoutingState) -> f64 {
    if s.terminal {
        return 0.0;
    }
    let a = greedy_decide(g, s).unwrap();
    s.observation_distribution(g, a)
        .unwrap()
        .into_iter()
        .map(|(o, p)| {
            let mut next = s.clone();
            let (r, _) = next.apply(g, cfg, a, o, &mut NoEvents).unwrap();
            p * (r + greedy_value(g, cfg, &next))
        })
        .sum()
}

fn two_lines(series: bool, repair_minutes: f64) -> Arc<DistributionGrid> {
    let mut parts = if series {
        GridParts {
            node_count: 3,
            edges: vec![edge(0, 1, 30.0), edge(1, 2, 30.0)],
            lines: vec![line("L1", "F", "S1", 0, 1, 0.3), line("L2", "F", "S2", 1, 2, 0.3)],
            segments: vec![seg("S1", 0, None, &[1]), seg("S2", 1, Some("S1"), &[2])],
            customers: vec![cust(1, "F", 10), cust(2, "F", 20)],
            zones: one_zone(3),
        }
    } else {
        GridParts {
            node_count: 3,
            edges: vec![edge(0, 1, 30.0), edge(0, 2, 30.0)],
            lines: vec![line("L1", "F", "S1", 0, 1, 0.3), line("L2", "G", "S2", 0, 2, 0.3)],
            segments: vec![seg("S1", 0, None, &[1]), seg("S2", 0, None, &[2])],
            customers: vec![cust(1, "F", 10), cust(2, "G", 20)],
            zones: one_zone(3),
        }
    };
    for l in &mut parts.lines {
        l.repair_minutes = repair_minutes;
    }
    Arc::new(DistributionGrid::build(parts).unwrap())
}

/// Probability of the call pattern `calls` given the faulted set `mask`.
fn call_likelihood(g: &DistributionGrid, mask: u32, calls: &[bool]) -> f64 {
    let faulted = |l: usize| mask >> l & 1 == 1;
    g.customers
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let silent = (1.0 - c.call_probability).powi(c.count as i32);
            match (segment_dark(g, c.segment, &faulted), calls[k]) {
                (true, true) => 1.0 - silent,
                (true, false) => silent,
                (false, true) => 0.0,
                (false, false) => 1.0,
            }
        })
        .product()
}

fn two_line_scenario(g: &Arc<DistributionGrid>, damage: DamageSpec, calls: CallSpec) -> Scenario {
    Scenario {
        id: "two_line".into(),
        grid: g.clone(),
        damage,
        calls,
        vehicles: vec![VehicleSpec { id: "1".into(), depot: 0, zone: 0, rank: 1 }],
        seed: 0,
        encoding: StateEncoding::Line,
    }
}

/// Returns the mean and standard error of greedy outage hours over `runs` sampled episodes.
fn sampled_outage(g: &Arc<DistributionGrid>, runs: u64) -> (f64, f64) {
    let scenario = two_line_scenario(g, DamageSpec::Sample, CallSpec::Sample);
    let policy = Policy::Baseline(BaselineConfig::new(Algorithm::Greedy));
    let xs: Vec<f64> = (0..runs).map(|seed| run_episode(&scenario, EnvConfig::default(), &policy, seed).unwrap().1.outage_hours).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Greedy's expected return under its own belief, averaged over call patterns.
fn expected_return(g: &DistributionGrid) -> f64 {
    let cfg = EnvConfig::default();
    (0u32..4)
        .map(|pattern| {
            let calls: Vec<bool> = (0..2).map(|k| pattern >> k & 1 == 1).collect();
            let p_calls: f64 = (0u32..4)
                .map(|mask| (0..2).map(|l| if mask >> l & 1 == 1 { 0.3 } else { 0.7 }).product::<f64>() * call_likelihood(g, mask, &calls))
                .sum();
            let (s, _) = start(g, calls, cfg.max_decisions);
            p_calls * greedy_value(g, &cfg, &s)
        })
        .sum()
}

#[test]
fn sampled_outage_matches_enumerated_outage() {
    let g = two_lines(true, 10.0);
    let policy = Policy::Baseline(BaselineConfig::new(Algorithm::Greedy));
    let mut exact = 0.0;
    for mask in 0u32..4 {
        let damaged: Vec<usize> = (0..2).filter(|l| mask >> l & 1 == 1).collect();
        let p_damage: f64 = (0..2).map(|l| if mask >> l & 1 == 1 { 0.3 } else { 0.7 }).product();
        for pattern in 0u32..4 {
            let calls: Vec<bool> = (0..2).map(|k| pattern >> k & 1 == 1).collect();
            let p = p_damage * call_likelihood(&g, mask, &calls);
            if p > 0.0 {
                let s = two_line_scenario(&g, DamageSpec::Fixed(damaged.clone()), CallSpec::Fixed(calls));
                exact += p * run_episode(&s, EnvConfig::default(), &policy, 0).unwrap().1.outage_hours;
            }
        }
    }
    let (mean, se) = sampled_outage(&g, 10_000);
    assert!((mean - exact).abs() <= 4.0 * se, "sampled {mean:.4} h (se {se:.4}) vs enumerated {exact:.4} h");
}

#[test]
fn sampled_outage_matches_expected_reward() {
    // separate feeders keep the line posteriors independent, and a negligible repair
    // time removes the correlation between a dark customer and how long the visit takes
    let g = two_lines(false, 0.001);
    let expected = -expected_return(&g);
    let (mean, _) = sampled_outage(&g, 10_000);
    let rel = (mean - expected).abs() / expected;
    assert!(rel <= 0.05, "sampled mean {mean:.4} h vs expected {expected:.4} h ({:.1}% apart)", 100.0 * rel);
}

#[test]
fn agent_evaluation_is_repeatable() {
    let scenario = Scenario::bundled("eight_node").unwrap();
    let net = PolicyValueNet::new(NetConfig::for_scenario(&scenario)).unwrap();
    let policy = Policy::Agent { net: &net, sims: 10, c_puct: 1.25, gamma: 1.0 };
    let cfg = EnvConfig::default();
    for seed in [0, 7, 1003] {
        let (_, a) = run_episode(&scenario, cfg, &policy, seed).unwrap();
        let (_, b) = run_episode(&scenario, cfg, &policy, seed).unwrap();
        assert_eq!((a.outage_hours, a.decisions, a.truncated), (b.outage_hours, b.decisions, b.truncated));
        assert_eq!(a.log, b.log);
    }
}
