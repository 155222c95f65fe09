//! Frank-Wolfe reference equilibrium, used only to check k-PSA results.
//!
//! Minimises the Beckmann objective `sum_a int_0^{v_a} t_a(x) dx` with
//! all-or-nothing directions and an exact line search (bisection on the
//! directional derivative).
//!
//! The relative gap is `1 - SPTT / TSTT`, where `TSTT = sum_a v_a t_a(v_a)`
//! is the current total travel time and `SPTT = sum_a y_a t_a(v_a)` is the
//! total travel time of the all-or-nothing loading `y` under current times
//! (its lower bound).

use crate::error::{Error, Result};
use crate::network::{all_link_times, pow, DemandMatrix, Link, Network};
use crate::shortest_path::{extract_path, trees_for_origins};

const BISECTION_STEPS: usize = 64;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub link_flows: Vec<f64>,
    pub relative_gap: f64,
    pub iterations: usize,
    pub total_system_time: f64,
    pub converged: bool,
    /// Beckmann objective after each iteration.
    pub objective_history: Vec<f64>,
}

/// `int_0^v t(x) dx` for a BPR link.
fn link_objective(link: &Link, flow: f64) -> f64 {
    if link.bpr_power == 0.0 || link.bpr_b == 0.0 {
        return link.free_flow_time * flow;
    }
    let p1 = link.bpr_power + 1.0;
    link.free_flow_time * (flow + link.bpr_b * link.capacity / p1 * pow(flow / link.capacity, p1))
}

pub fn beckmann_objective(network: &Network, flows: &[f64]) -> f64 {
    network.links().iter().zip(flows).map(|(l, &v)| link_objective(l, v)).sum()
}

/// All-or-nothing link loading under `times`.
pub fn all_or_nothing_flows(network: &Network, demand: &DemandMatrix, times: &[f64]) -> Result<Vec<f64>> {
    let origins = demand.origins();
    let trees = trees_for_origins(network, times, &origins)?;
    let mut flows = vec![0.0; network.link_count()];
    for pair in demand.pairs() {
        let slot = origins
            .binary_search(&pair.origin)
            .map_err(|_| Error::Internal("origin without tree".into()))?;
        let path = extract_path(network, &trees[slot], pair.destination)?;
        for link in path.links {
            flows[link] += pair.demand;
        }
    }
    Ok(flows)
}

/// `1 - SPTT / TSTT` for link flows `flows`.
pub fn relative_gap(network: &Network, demand: &DemandMatrix, flows: &[f64]) -> Result<f64> {
    let times = all_link_times(network, flows)?;
    let target = all_or_nothing_flows(network, demand, &times)?;
    Ok(gap_of(flows, &target, &times))
}

fn gap_of(flows: &[f64], target: &[f64], times: &[f64]) -> f64 {
    let tstt: f64 = flows.iter().zip(times).map(|(v, t)| v * t).sum();
    let sptt: f64 = target.iter().zip(times).map(|(y, t)| y * t).sum();
    if tstt > 0.0 {
        (1.0 - sptt / tstt).max(0.0)
    } else {
        0.0
    }
}

/// Step in `[0, 1]` minimising the objective along `flows + step * (target - flows)`.
fn line_search(network: &Network, flows: &[f64], target: &[f64]) -> f64 {
    let derivative = |step: f64| -> f64 {
        network
            .links()
            .iter()
            .zip(flows.iter().zip(target))
            .map(|(link, (&v, &y))| (y - v) * link.time_unchecked(v + step * (y - v)))
            .sum()
    };
    if derivative(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if derivative(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn frank_wolfe_solve(network: &Network, demand: &DemandMatrix, gap_tol: f64, max_iter: usize) -> Result<OracleResult> {
    if !(gap_tol >= 0.0) {
        return Err(Error::Config(format!("gap tolerance {gap_tol} must be non-negative")));
    }
    demand.check_against(network)?;
    let mut flows = all_or_nothing_flows(network, demand, &network.free_flow_times())?;
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let times = all_link_times(network, &flows)?;
        let target = all_or_nothing_flows(network, demand, &times)?;
        gap = gap_of(&flows, &target, &times);
        history.push(beckmann_objective(network, &flows));
        if gap <= gap_tol {
            break;
        }
        let step = line_search(network, &flows, &target);
        for (v, y) in flows.iter_mut().zip(&target) {
            *v += step * (y - *v);
        }
    }
    let times = all_link_times(network, &flows)?;
    if gap > gap_tol {
        gap = relative_gap(network, demand, &flows)?;
    }
    Ok(OracleResult {
        total_system_time: flows.iter().zip(&times).map(|(v, t)| v * t).sum(),
        link_flows: flows,
        relative_gap: gap,
        iterations,
        converged: gap <= gap_tol,
        objective_history: history,
    })
}
