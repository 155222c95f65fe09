#![allow(dead_code)]

use std::path::PathBuf;

use kpsa::metrics::{average_path_time, od_deviation};
use kpsa::network::{DemandMatrix, Link, Network};
use kpsa::solver::{link_state_of, subtract_add_pass, OdPathSet, SolverConfig, Stage, SHARE_SCALE};
use kpsa::tntp::ParsedInstance;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn instance_files(dir: &str, stem: &str) -> (PathBuf, PathBuf) {
    let base = data_dir().join(dir);
    (
        base.join(format!("{stem}_net.tntp")),
        base.join(format!("{stem}_trips.tntp")),
    )
}

pub fn sioux_falls() -> ParsedInstance {
    let (net, trips) = instance_files("SiouxFalls", "SiouxFalls");
    ParsedInstance::load(&net, &trips).expect("Sioux Falls data")
}

/// Two parallel links 1->2 with t1 = 1 + v1, t2 = 2 + v2 and q = 3.
pub fn two_link() -> (Network, DemandMatrix) {
    let links = vec![
        Link::bpr(1, 2, 1.0, 1.0, 1.0, 1.0),
        Link::bpr(1, 2, 2.0, 2.0, 1.0, 1.0),
    ];
    let network = Network::new(2, links, 1, 2).unwrap();
    let demand = DemandMatrix::from_entries(2, [(1, 2, 3.0)]).unwrap();
    (network, demand)
}

/// Best simple path per node found by exhaustive enumeration: minimum
/// left-to-right summed cost, ties broken by the smaller link sequence.
/// Nodes below `network.first_thru_node()` are never passed through.
pub fn brute_force_paths(network: &Network, times: &[f64], origin: usize) -> Vec<Option<(f64, Vec<usize>)>> {
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; network.node_count() + 1];
    let mut visited = vec![false; network.node_count() + 1];
    let mut stack = Vec::new();
    visited[origin] = true;
    best[origin] = Some((0.0, Vec::new()));
    explore(network, times, origin, origin, 0.0, &mut visited, &mut stack, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn explore(
    network: &Network,
    times: &[f64],
    origin: usize,
    node: usize,
    cost: f64,
    visited: &mut [bool],
    stack: &mut Vec<usize>,
    best: &mut [Option<(f64, Vec<usize>)>],
) {
    if node != origin && node < network.first_thru_node() {
        return;
    }
    for (index, link) in network.links().iter().enumerate() {
        if link.tail != node || visited[link.head] {
            continue;
        }
        let next_cost = cost + times[index];
        stack.push(index);
        let better = match &best[link.head] {
            None => true,
            Some((c, seq)) => next_cost < *c || (next_cost == *c && stack.as_slice() < seq.as_slice()),
        };
        if better {
            best[link.head] = Some((next_cost, stack.clone()));
        }
        visited[link.head] = true;
        explore(network, times, origin, link.head, next_cost, visited, stack, best);
        visited[link.head] = false;
        stack.pop();
    }
}

/// Random digraph on `2..=8` nodes. With `integer_times` every time is a
/// small integer so equal-cost ties are common.
pub fn random_graph<R: Rng>(rng: &mut R, integer_times: bool, allow_centroids: bool) -> (Network, Vec<f64>) {
    let n = rng.gen_range(2..=8);
    let density: f64 = rng.gen_range(0.2..0.7);
    let mut links = Vec::new();
    let mut times = Vec::new();
    for tail in 1..=n {
        for head in 1..=n {
            if tail == head || !rng.gen_bool(density) {
                continue;
            }
            // occasional parallel link
            let copies = if rng.gen_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                let t = if integer_times {
                    rng.gen_range(1..=4) as f64
                } else {
                    rng.gen_range(0.01..10.0)
                };
                links.push(Link::bpr(tail, head, t, 1.0, 0.15, 4.0));
                times.push(t);
            }
        }
    }
    let first_thru = if allow_centroids { rng.gen_range(1..=n + 1) } else { 1 };
    let network = Network::new(n, links, first_thru, first_thru - 1).unwrap();
    (network, times)
}

/// Demand of `1..=20` (integral) on every ordered pair that is reachable at
/// free flow.
pub fn reachable_demand<R: Rng>(rng: &mut R, network: &Network) -> Option<DemandMatrix> {
    let times = network.free_flow_times();
    let mut entries = Vec::new();
    for origin in 1..=network.zone_count() {
        let tree = kpsa::one_to_all(network, &times, origin).unwrap();
        for destination in (1..=network.zone_count()).filter(|&d| d != origin) {
            if tree.is_reachable(destination) && rng.gen_bool(0.7) {
                entries.push((origin, destination, rng.gen_range(1..=20) as f64));
            }
        }
    }
    if entries.is_empty() {
        return None;
    }
    Some(DemandMatrix::from_entries(network.zone_count(), entries).unwrap())
}

/// Random congestible network on `3..=8` nodes where every node is a zone.
pub fn random_instance<R: Rng>(rng: &mut R) -> Option<(Network, DemandMatrix)> {
    let n = rng.gen_range(3..=8);
    let mut links = Vec::new();
    for tail in 1..=n {
        for head in (1..=n).filter(|&h| h != tail) {
            if rng.gen_bool(0.45) {
                let t0 = rng.gen_range(1..=6) as f64;
                let cap = rng.gen_range(5.0..40.0);
                links.push(Link::bpr(tail, head, t0, cap, 0.15, 4.0));
            }
        }
    }
    let network = Network::new(n, links, 1, n).unwrap();
    let demand = reachable_demand(rng, &network)?;
    Some((network, demand))
}

/// Checks every invariant of a run at each observed stage: exact per-OD
/// conservation, non-negative path flows, non-negative deviations, at most
/// `n` paths per OD after round `n`, and consistency of the reported link
/// state with the path flows.
pub fn check_run_invariants(network: &Network, demand: &DemandMatrix, config: &SolverConfig) -> Result<usize, String> {
    let mut failures = Vec::new();
    let mut stages = 0;
    kpsa::solver::solve_observed(network, demand, config, |stage, sets, _| {
        stages += 1;
        let limit = match stage {
            Stage::AllOrNothing => 1,
            Stage::PathsGenerated { n } | Stage::SubtractAdd { n, .. } => n,
        };
        let state = match link_state_of(network, sets) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{stage:?}: {e}"));
                return;
            }
        };
        let mut origins: Vec<usize> = sets.iter().map(|s| s.origin).collect();
        origins.dedup();
        let trees: Vec<_> = origins
            .iter()
            .map(|&o| kpsa::one_to_all(network, &state.time, o).unwrap())
            .collect();
        for set in sets {
            if !set.is_conserved() || set.shares().iter().sum::<u64>() != SHARE_SCALE {
                failures.push(format!("{stage:?}: {}->{} not conserved", set.origin, set.destination));
            }
            if set.flows().iter().any(|&f| f.is_nan() || f < 0.0) {
                failures.push(format!("{stage:?}: {}->{} negative flow", set.origin, set.destination));
            }
            if set.len() > limit {
                failures.push(format!("{stage:?}: {}->{} has {} paths", set.origin, set.destination, set.len()));
            }
            let tree = &trees[origins.iter().position(|&o| o == set.origin).unwrap()];
            let shortest = tree.dist[set.destination];
            let avg = average_path_time(set, &state.time).unwrap();
            if shortest > 0.0 && od_deviation(avg, shortest).unwrap() < 0.0 {
                failures.push(format!("{stage:?}: {}->{} negative deviation", set.origin, set.destination));
            }
        }
    })
    .map_err(|e| e.to_string())?;
    match failures.first() {
        None => Ok(stages),
        Some(first) => Err(format!("{} violations, first: {first}", failures.len())),
    }
}

/// Runs one pass with the OD list reversed and checks it against the
/// ascending pass.
pub fn pass_is_order_independent(sets: &[OdPathSet], times: &[Vec<f64>], alpha: f64) -> bool {
    let mut ascending = sets.to_vec();
    subtract_add_pass(&mut ascending, times, alpha).unwrap();
    let mut descending: Vec<OdPathSet> = sets.iter().rev().cloned().collect();
    let reversed_times: Vec<Vec<f64>> = times.iter().rev().cloned().collect();
    subtract_add_pass(&mut descending, &reversed_times, alpha).unwrap();
    descending.reverse();
    ascending == descending
}
