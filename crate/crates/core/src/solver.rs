//! The k-paths subtracting-adding (k-PSA) assignment.
//!
//! Every OD pair starts with its free-flow shortest path carrying the whole
//! demand. Each round adds the current shortest path (if new) and then runs
//! `N_n` subtract-add iterations, each moving `alpha_n * q_rs` from the
//! slowest stored path to the fastest one.
//!
//! Path flows are stored as integer shares of the OD demand out of
//! [`SHARE_SCALE`], so `sum_p q_rs^p = q_rs` holds exactly at every step.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{aggregate_into, all_link_times_into, DemandMatrix, LinkState, Network};
use crate::shortest_path::{extract_path, trees_for_origins, Path};

/// Denominator of a path's demand share. `2^22 * 10^12`, below `2^53` so
/// shares convert to `f64` exactly, and divisible by every decimal fraction
/// down to `1e-12` and its halvings down to `2^-22`.
pub const SHARE_SCALE: u64 = 1_024_000_000_000_000;

/// Paths generated so far for one OD pair and the share of demand on each.
#[derive(Debug, Clone, PartialEq)]
pub struct OdPathSet {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
    paths: Vec<Path>,
    shares: Vec<u64>,
}

impl OdPathSet {
    /// A set holding a single path that carries the whole demand.
    pub fn single(origin: usize, destination: usize, demand: f64, path: Path) -> Self {
        OdPathSet {
            origin,
            destination,
            demand,
            paths: vec![path],
            shares: vec![SHARE_SCALE],
        }
    }

    /// Builds a set from explicit path flows. The flows are converted to
    /// shares of `demand`; their sum must equal `demand` to within 1e-9
    /// relative, any rounding residue going to the largest share.
    pub fn with_flows(origin: usize, destination: usize, demand: f64, paths: Vec<Path>, flows: &[f64]) -> Result<Self> {
        if paths.len() != flows.len() || paths.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: paths.len(),
                actual: flows.len(),
            });
        }
        if !(demand > 0.0) {
            return Err(Error::ZeroDemand { origin, destination });
        }
        let total: f64 = flows.iter().sum();
        if flows.iter().any(|f| !(*f >= 0.0)) || (total - demand).abs() > 1e-9 * demand {
            return Err(Error::Config(format!(
                "path flows for ({origin}, {destination}) sum to {total}, demand is {demand}"
            )));
        }
        let mut shares: Vec<u64> = flows
            .iter()
            .map(|f| (f / demand * SHARE_SCALE as f64).round() as u64)
            .collect();
        let sum: u64 = shares.iter().sum();
        let largest = (0..shares.len()).max_by_key(|&i| (shares[i], usize::MAX - i)).unwrap_or(0);
        if sum > SHARE_SCALE {
            shares[largest] -= sum - SHARE_SCALE;
        } else {
            shares[largest] += SHARE_SCALE - sum;
        }
        Ok(OdPathSet {
            origin,
            destination,
            demand,
            paths,
            shares,
        })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Integer demand shares, summing to [`SHARE_SCALE`].
    pub fn shares(&self) -> &[u64] {
        &self.shares
    }

    pub fn flow(&self, index: usize) -> f64 {
        self.demand * self.shares[index] as f64 / SHARE_SCALE as f64
    }

    pub fn flows(&self) -> Vec<f64> {
        (0..self.paths.len()).map(|i| self.flow(i)).collect()
    }

    /// Appends `path` with zero flow unless an identical path is stored.
    /// Returns whether it was appended.
    pub fn add_path(&mut self, path: Path) -> bool {
        if self.paths.contains(&path) {
            return false;
        }
        self.paths.push(path);
        self.shares.push(0);
        true
    }

    pub fn is_conserved(&self) -> bool {
        self.shares.iter().sum::<u64>() == SHARE_SCALE
    }

    /// Travel time of each stored path under `times`.
    pub fn path_times(&self, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths.len());
        self.path_times_into(times, &mut out);
        out
    }

    fn path_times_into(&self, times: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.paths
                .iter()
                .map(|p| p.links.iter().fold(0.0, |acc, &l| acc + times[l])),
        );
    }

    /// One subtract-add step: shift `alpha_share` (at most the slow path's
    /// share) from the slowest path still carrying flow to the fastest stored
    /// path. An emptied path is never picked as the donor, otherwise a drained
    /// path that stays slowest would freeze the pair.
    fn shift(&mut self, path_times: &[f64], alpha_share: u64) {
        if self.paths.len() < 2 {
            return;
        }
        let mut slowest = usize::MAX;
        let mut fastest = 0;
        for (i, &t) in path_times.iter().enumerate() {
            if self.shares[i] > 0 && (slowest == usize::MAX || t > path_times[slowest]) {
                slowest = i;
            }
            if t < path_times[fastest] {
                fastest = i;
            }
        }
        if slowest == fastest {
            return;
        }
        let moved = alpha_share.min(self.shares[slowest]);
        self.shares[slowest] -= moved;
        self.shares[fastest] += moved;
    }
}

fn link_flows_into(link_count: usize, path_sets: &[OdPathSet], flows: &mut [f64]) -> Result<()> {
    let items = path_sets
        .iter()
        .flat_map(|set| (0..set.paths.len()).map(move |i| (set.paths[i].links.as_slice(), set.flow(i))));
    aggregate_into(link_count, items, flows)
}

/// Link state induced by the path flows in `path_sets`.
pub fn link_state_of(network: &Network, path_sets: &[OdPathSet]) -> Result<LinkState> {
    let mut flow = vec![0.0; network.link_count()];
    link_flows_into(network.link_count(), path_sets, &mut flow)?;
    LinkState::from_flows(network, flow)
}

/// Iterations and shift fraction for the round that grows path sets to `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub iterations: usize,
    pub alpha: f64,
}

impl Phase {
    /// Default schedule: 100 iterations per round; alpha 0.01, 0.005, 0.002,
    /// 0.001 for n = 2..=5, halving for each further n.
    pub fn default_for(n: usize) -> Phase {
        let alpha = match n {
            0..=2 => 0.01,
            3 => 0.005,
            4 => 0.002,
            5 => 0.001,
            _ => 0.001 / 2f64.powi((n - 5) as i32),
        };
        Phase { iterations: 100, alpha }
    }

    fn alpha_share(&self) -> Result<u64> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let share = (self.alpha * SHARE_SCALE as f64).round() as u64;
        if share == 0 {
            return Err(Error::Config(format!("alpha {} below share resolution", self.alpha)));
        }
        Ok(share)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub k: usize,
    schedule: BTreeMap<usize, Phase>,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        let schedule = (2..=k.max(1)).map(|n| (n, Phase::default_for(n))).collect();
        SolverConfig { k, schedule }
    }

    pub fn phase(&self, n: usize) -> Option<Phase> {
        self.schedule.get(&n).copied()
    }

    pub fn set_phase(&mut self, n: usize, phase: Phase) -> &mut Self {
        self.schedule.insert(n, phase);
        self
    }

    pub fn set_alpha(&mut self, n: usize, alpha: f64) -> &mut Self {
        let entry = self.schedule.entry(n).or_insert_with(|| Phase::default_for(n));
        entry.alpha = alpha;
        self
    }

    pub fn set_iterations(&mut self, n: usize, iterations: usize) -> &mut Self {
        let entry = self.schedule.entry(n).or_insert_with(|| Phase::default_for(n));
        entry.iterations = iterations;
        self
    }

    /// `(n, phase)` for every round that will run, in order.
    pub fn schedule(&self) -> Vec<(usize, Phase)> {
        (2..=self.k).filter_map(|n| self.phase(n).map(|p| (n, p))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        for n in 2..=self.k {
            let phase = self
                .phase(n)
                .ok_or_else(|| Error::Config(format!("schedule has no entry for n = {n}")))?;
            phase.alpha_share()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub path_sets: Vec<OdPathSet>,
    pub link_state: LinkState,
    /// Wall-clock solve time in milliseconds.
    pub cpu_ms: f64,
    pub k: usize,
    pub schedule: Vec<(usize, Phase)>,
}

/// Where the solver is when an observer is called.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    AllOrNothing,
    PathsGenerated { n: usize },
    SubtractAdd { n: usize, iteration: usize },
}

pub fn all_or_nothing(network: &Network, demand: &DemandMatrix) -> Result<(Vec<OdPathSet>, LinkState)> {
    demand.check_against(network)?;
    let free_flow = network.free_flow_times();
    let origins = demand.origins();
    let trees = trees_for_origins(network, &free_flow, &origins)?;
    let mut path_sets = Vec::with_capacity(demand.od_count());
    let mut tree_iter = origins.iter().zip(&trees).peekable();
    for pair in demand.pairs() {
        while tree_iter.peek().is_some_and(|(o, _)| **o != pair.origin) {
            tree_iter.next();
        }
        let (_, tree) = tree_iter.peek().ok_or_else(|| Error::Internal("missing tree".into()))?;
        let path = extract_path(network, tree, pair.destination)?;
        path_sets.push(OdPathSet::single(pair.origin, pair.destination, pair.demand, path));
    }
    let state = link_state_of(network, &path_sets)?;
    Ok((path_sets, state))
}

/// Appends each OD pair's current shortest path (with zero flow) when it is
/// not already stored. Returns how many paths were added.
pub fn generate_new_paths(network: &Network, path_sets: &mut [OdPathSet], link_state: &LinkState) -> Result<usize> {
    let mut origins: Vec<usize> = path_sets.iter().map(|s| s.origin).collect();
    origins.sort_unstable();
    origins.dedup();
    let trees = trees_for_origins(network, &link_state.time, &origins)?;
    let mut added = 0;
    for set in path_sets.iter_mut() {
        let slot = origins
            .binary_search(&set.origin)
            .map_err(|_| Error::Internal("origin without tree".into()))?;
        let path = extract_path(network, &trees[slot], set.destination)?;
        if set.add_path(path) {
            added += 1;
        }
    }
    Ok(added)
}

/// One pass over all OD pairs with fixed path times: shifts
/// `min(alpha * q_rs, q_rs^{p1})` from the slowest flow-carrying path `p1` to
/// the fastest stored path `p2` (lowest index wins ties). `path_times[i]` holds the times of
/// `path_sets[i]`'s paths.
pub fn subtract_add_pass(path_sets: &mut [OdPathSet], path_times: &[Vec<f64>], alpha: f64) -> Result<()> {
    if path_times.len() != path_sets.len() {
        return Err(Error::DimensionMismatch {
            expected: path_sets.len(),
            actual: path_times.len(),
        });
    }
    if let Some((set, times)) = path_sets.iter().zip(path_times).find(|(s, t)| s.len() != t.len()) {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            actual: times.len(),
        });
    }
    let share = Phase { iterations: 0, alpha }.alpha_share()?;
    path_sets
        .par_iter_mut()
        .zip(path_times.par_iter())
        .for_each(|(set, times)| set.shift(times, share));
    Ok(())
}

/// Runs `iterations` rounds of: load the network from current path flows,
/// time every path, then [`subtract_add_pass`]. Returns the link state of the
/// final path flows.
pub fn subtract_add(network: &Network, path_sets: &mut [OdPathSet], iterations: usize, alpha: f64) -> Result<LinkState> {
    subtract_add_observed(network, path_sets, iterations, alpha, 0, &mut |_, _, _| {})
}

type Observer<'a> = dyn FnMut(Stage, &[OdPathSet], &LinkState) + 'a;

fn subtract_add_observed(
    network: &Network,
    path_sets: &mut [OdPathSet],
    iterations: usize,
    alpha: f64,
    n: usize,
    observe: &mut Observer<'_>,
) -> Result<LinkState> {
    let link_count = network.link_count();
    let mut flow = vec![0.0; link_count];
    let mut time = vec![0.0; link_count];
    let mut path_times: Vec<Vec<f64>> = path_sets.iter().map(|s| Vec::with_capacity(s.len())).collect();
    for iteration in 1..=iterations {
        link_flows_into(link_count, path_sets, &mut flow)?;
        all_link_times_into(network, &flow, &mut time)?;
        path_sets
            .par_iter()
            .zip(path_times.par_iter_mut())
            .for_each(|(set, out)| set.path_times_into(&time, out));
        subtract_add_pass(path_sets, &path_times, alpha)?;
        if iteration < iterations {
            let state = LinkState {
                flow: flow.clone(),
                time: time.clone(),
            };
            observe(Stage::SubtractAdd { n, iteration }, path_sets, &state);
        } else {
            let state = link_state_of(network, path_sets)?;
            observe(Stage::SubtractAdd { n, iteration }, path_sets, &state);
            return Ok(state);
        }
    }
    link_state_of(network, path_sets)
}

pub fn solve(network: &Network, demand: &DemandMatrix, config: &SolverConfig) -> Result<Solution> {
    solve_observed(network, demand, config, |_, _, _| {})
}

/// [`solve`], calling `observe` after the initial loading, after each path
/// generation and after every subtract-add iteration. The link state passed
/// alongside is the one the step's path times were computed from (for the
/// last iteration of a round, the state after the shift).
pub fn solve_observed<F>(network: &Network, demand: &DemandMatrix, config: &SolverConfig, mut observe: F) -> Result<Solution>
where
    F: FnMut(Stage, &[OdPathSet], &LinkState),
{
    config.validate()?;
    let start = Instant::now();
    let (mut path_sets, mut state) = all_or_nothing(network, demand)?;
    observe(Stage::AllOrNothing, &path_sets, &state);
    for (n, phase) in config.schedule() {
        generate_new_paths(network, &mut path_sets, &state)?;
        observe(Stage::PathsGenerated { n }, &path_sets, &state);
        state = subtract_add_observed(network, &mut path_sets, phase.iterations, phase.alpha, n, &mut observe)?;
    }
    let cpu_ms = start.elapsed().as_secs_f64() * 1000.0;
    Ok(Solution {
        path_sets,
        link_state: state,
        cpu_ms,
        k: config.k,
        schedule: config.schedule(),
    })
}
