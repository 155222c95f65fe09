//! Quality measures for a finished assignment.
//!
//! For each OD pair the flow-weighted mean time of the stored paths is
//! compared with a fresh shortest-path time on the loaded network:
//! `delta_rs = (avg - shortest) / shortest * 100`. `E` is the mean of
//! `delta_rs`, and the Pearson correlation between the two times grades the
//! assignment (`0.99UE` and so on).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::shortest_path::trees_for_origins;
use crate::solver::{OdPathSet, Phase, Solution, SHARE_SCALE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdMetric {
    pub origin: usize,
    pub destination: usize,
    pub avg_time: f64,
    pub shortest_time: f64,
    pub deviation_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    /// `None` for the open-ended last bin.
    pub hi: Option<f64>,
    pub count: usize,
    pub rel_freq: f64,
}

/// Lower edges of the deviation histogram bins, in percent.
pub const BIN_EDGES: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

#[derive(Debug, Clone)]
pub struct AssignmentReport {
    pub instance: String,
    pub k: usize,
    pub od_metrics: Vec<OdMetric>,
    /// Pairs whose shortest time is zero; excluded from every statistic.
    pub degenerate_ods: Vec<(usize, usize)>,
    pub e_percent: f64,
    pub pearson_r: Option<f64>,
    pub histogram: Vec<HistogramBin>,
    pub od_count: usize,
    pub cpu_ms: f64,
    /// Time spent building this report, excluded from `cpu_ms`.
    pub report_ms: f64,
    pub ue_grade: Option<String>,
    pub schedule: Vec<(usize, Phase)>,
}

/// Flow-weighted mean travel time of the stored paths.
pub fn average_path_time(set: &OdPathSet, times: &[f64]) -> Result<f64> {
    if !(set.demand > 0.0) {
        return Err(Error::ZeroDemand {
            origin: set.origin,
            destination: set.destination,
        });
    }
    // q_rs^p / q_rs is exactly the stored share
    Ok(set
        .path_times(times)
        .iter()
        .zip(set.shares())
        .map(|(t, &share)| share as f64 / SHARE_SCALE as f64 * t)
        .sum())
}

/// Relative excess of `avg` over `shortest`, in percent.
pub fn od_deviation(avg: f64, shortest: f64) -> Result<f64> {
    if !(shortest > 0.0) {
        return Err(Error::DegenerateOd {
            origin: 0,
            destination: 0,
        });
    }
    Ok((avg - shortest) / shortest * 100.0)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `r` rounded half-up to two decimals, e.g. `0.98UE`.
pub fn ue_grade(r: f64) -> String {
    let hundredths = (r * 100.0 + 0.5 + 1e-9).floor();
    format!("{:.2}UE", hundredths / 100.0)
}

pub fn histogram(deviations: &[f64]) -> Vec<HistogramBin> {
    let mut counts = [0usize; BIN_EDGES.len()];
    for &d in deviations {
        let bin = BIN_EDGES.iter().rposition(|&lo| d >= lo).unwrap_or(0);
        counts[bin] += 1;
    }
    let total = deviations.len();
    BIN_EDGES
        .iter()
        .enumerate()
        .map(|(i, &lo)| HistogramBin {
            lo,
            hi: BIN_EDGES.get(i + 1).copied(),
            count: counts[i],
            rel_freq: if total == 0 { 0.0 } else { counts[i] as f64 / total as f64 },
        })
        .collect()
}

/// Grades `solution`: recomputes link times from its final flows, runs a
/// fresh shortest-path search per origin and compares each OD pair's average
/// path time against it.
pub fn build_report(network: &Network, solution: &Solution, instance: &str) -> Result<AssignmentReport> {
    let start = Instant::now();
    let state = crate::solver::link_state_of(network, &solution.path_sets)?;
    let times = &state.time;

    let mut origins: Vec<usize> = solution.path_sets.iter().map(|s| s.origin).collect();
    origins.sort_unstable();
    origins.dedup();
    let trees = trees_for_origins(network, times, &origins)?;

    let mut od_metrics = Vec::with_capacity(solution.path_sets.len());
    let mut degenerate_ods = Vec::new();
    for set in &solution.path_sets {
        let slot = origins
            .binary_search(&set.origin)
            .map_err(|_| Error::Internal("origin without tree".into()))?;
        let shortest = trees[slot].dist[set.destination];
        if !shortest.is_finite() {
            return Err(Error::Unreachable {
                origin: set.origin,
                destination: set.destination,
            });
        }
        let mut avg = average_path_time(set, times)?;
        // rounding noise in the weighted mean can land a hair under the minimum
        if avg < shortest && shortest - avg <= 1e-12 * shortest {
            avg = shortest;
        }
        match od_deviation(avg, shortest) {
            Ok(deviation) => od_metrics.push(OdMetric {
                origin: set.origin,
                destination: set.destination,
                avg_time: avg,
                shortest_time: shortest,
                deviation_percent: deviation,
            }),
            Err(Error::DegenerateOd { .. }) => degenerate_ods.push((set.origin, set.destination)),
            Err(e) => return Err(e),
        }
    }

    let deviations: Vec<f64> = od_metrics.iter().map(|m| m.deviation_percent).collect();
    let e_percent = if deviations.is_empty() {
        0.0
    } else {
        deviations.iter().sum::<f64>() / deviations.len() as f64
    };
    let (avg, shortest) = scatter_data(&od_metrics).into_iter().unzip::<_, _, Vec<_>, Vec<_>>();
    let pearson = pearson_r(&avg, &shortest).ok();

    Ok(AssignmentReport {
        instance: instance.to_string(),
        k: solution.k,
        histogram: histogram(&deviations),
        od_count: od_metrics.len(),
        od_metrics,
        degenerate_ods,
        e_percent,
        pearson_r: pearson,
        ue_grade: pearson.map(ue_grade),
        cpu_ms: solution.cpu_ms,
        report_ms: start.elapsed().as_secs_f64() * 1000.0,
        schedule: solution.schedule.clone(),
    })
}

/// `(avg_time, shortest_time)` per OD pair, in OD order.
pub fn scatter_data(od_metrics: &[OdMetric]) -> Vec<(f64, f64)> {
    od_metrics.iter().map(|m| (m.avg_time, m.shortest_time)).collect()
}
