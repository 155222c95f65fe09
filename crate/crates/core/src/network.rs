//! Road network, link performance functions and flow/time aggregation.
//!
//! Nodes are identified by their 1-based TNTP ids; links by their dense
//! 0-based position in the link list.

use crate::error::{Error, Result};

/// A directed link with a BPR performance function
/// `t0 * (1 + b * (flow / capacity)^power)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
    pub free_flow_time: f64,
    pub bpr_b: f64,
    pub bpr_power: f64,
    // Carried through from input; the solver ignores these.
    pub length: f64,
    pub speed_limit: f64,
    pub toll: f64,
    pub link_type: i64,
}

impl Link {
    /// Convenience constructor for the fields the solver uses.
    pub fn bpr(tail: usize, head: usize, free_flow_time: f64, capacity: f64, b: f64, power: f64) -> Self {
        Link {
            tail,
            head,
            capacity,
            free_flow_time,
            bpr_b: b,
            bpr_power: power,
            length: 0.0,
            speed_limit: 0.0,
            toll: 0.0,
            link_type: 1,
        }
    }

    fn has_defined_performance(&self) -> bool {
        !(self.bpr_power > 0.0 && self.capacity <= 0.0)
    }

    /// Travel time at `flow`. Assumes the link has already been validated.
    #[inline]
    pub(crate) fn time_unchecked(&self, flow: f64) -> f64 {
        if self.bpr_power == 0.0 || self.bpr_b == 0.0 {
            return self.free_flow_time;
        }
        let ratio = flow / self.capacity;
        self.free_flow_time * (1.0 + self.bpr_b * pow(ratio, self.bpr_power))
    }

    pub fn travel_time(&self, flow: f64) -> Result<f64> {
        if !self.has_defined_performance() {
            return Err(Error::UndefinedPerformance {
                link: None,
                capacity: self.capacity,
                power: self.bpr_power,
            });
        }
        Ok(self.time_unchecked(flow))
    }
}

/// `base^exp`, using repeated multiplication for small integral exponents.
#[inline]
pub(crate) fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && (0.0..=64.0).contains(&exp) {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// Travel time on `link` carrying `flow`.
pub fn link_travel_time(link: &Link, flow: f64) -> Result<f64> {
    link.travel_time(flow)
}

#[derive(Debug, Clone)]
pub struct Network {
    node_count: usize,
    links: Vec<Link>,
    // outgoing link indices per node, indexed by node id (slot 0 unused)
    adjacency: Vec<Vec<usize>>,
    first_thru_node: usize,
    zone_count: usize,
}

impl Network {
    pub fn new(node_count: usize, links: Vec<Link>, first_thru_node: usize, zone_count: usize) -> Result<Self> {
        if first_thru_node < 1 || first_thru_node > node_count + 1 {
            return Err(Error::Config(format!(
                "first thru node {first_thru_node} outside 1..={}",
                node_count + 1
            )));
        }
        let mut adjacency = vec![Vec::new(); node_count + 1];
        for (index, link) in links.iter().enumerate() {
            for node in [link.tail, link.head] {
                if node == 0 || node > node_count {
                    return Err(Error::InvalidNode(node));
                }
            }
            if !link.has_defined_performance() {
                return Err(Error::UndefinedPerformance {
                    link: Some(index),
                    capacity: link.capacity,
                    power: link.bpr_power,
                });
            }
            adjacency[link.tail].push(index);
        }
        Ok(Network {
            node_count,
            links,
            adjacency,
            first_thru_node,
            zone_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, index: usize) -> &Link {
        &self.links[index]
    }

    /// Outgoing link indices of `node`.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn first_thru_node(&self) -> usize {
        self.first_thru_node
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    /// Whether paths may pass through `node` (TNTP centroid rule).
    pub fn is_thru_node(&self, node: usize) -> bool {
        node >= self.first_thru_node
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.free_flow_time).collect()
    }
}

/// A retained origin-destination pair with positive demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdDemand {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

/// Positive, off-diagonal OD demands sorted by (origin, destination).
#[derive(Debug, Clone, Default)]
pub struct DemandMatrix {
    pairs: Vec<OdDemand>,
    zone_count: usize,
}

impl DemandMatrix {
    /// Builds the matrix from raw entries. Zero-demand and diagonal entries are
    /// dropped; repeated entries for one pair are summed.
    pub fn from_entries<I>(zone_count: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut pairs: Vec<OdDemand> = Vec::new();
        for (origin, destination, demand) in entries {
            if !(demand >= 0.0) || !demand.is_finite() {
                return Err(Error::Config(format!(
                    "demand {demand} for ({origin}, {destination}) must be finite and non-negative"
                )));
            }
            if origin == 0 || destination == 0 {
                return Err(Error::InvalidNode(0));
            }
            if demand == 0.0 || origin == destination {
                continue;
            }
            pairs.push(OdDemand {
                origin,
                destination,
                demand,
            });
        }
        pairs.sort_by_key(|p| (p.origin, p.destination));
        pairs.dedup_by(|next, kept| {
            if next.origin == kept.origin && next.destination == kept.destination {
                kept.demand += next.demand;
                true
            } else {
                false
            }
        });
        Ok(DemandMatrix { pairs, zone_count })
    }

    pub fn pairs(&self) -> &[OdDemand] {
        &self.pairs
    }

    pub fn od_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn zone_count(&self) -> usize {
        self.zone_count
    }

    pub fn total(&self) -> f64 {
        self.pairs.iter().map(|p| p.demand).sum()
    }

    /// Distinct origins in ascending order.
    pub fn origins(&self) -> Vec<usize> {
        let mut origins: Vec<usize> = self.pairs.iter().map(|p| p.origin).collect();
        origins.dedup();
        origins
    }

    pub fn check_against(&self, network: &Network) -> Result<()> {
        for pair in &self.pairs {
            for node in [pair.origin, pair.destination] {
                if node > network.node_count() {
                    return Err(Error::InvalidNode(node));
                }
            }
        }
        Ok(())
    }
}

/// Per-link aggregate flow and the travel time evaluated at that flow.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub flow: Vec<f64>,
    pub time: Vec<f64>,
}

impl LinkState {
    pub fn from_flows(network: &Network, flow: Vec<f64>) -> Result<Self> {
        let time = all_link_times(network, &flow)?;
        Ok(LinkState { flow, time })
    }

    pub fn free_flow(network: &Network) -> Self {
        LinkState {
            flow: vec![0.0; network.link_count()],
            time: network.free_flow_times(),
        }
    }

    /// Total system travel time `sum(v_a * t_a)`.
    pub fn total_system_time(&self) -> f64 {
        self.flow.iter().zip(&self.time).map(|(v, t)| v * t).sum()
    }
}

pub fn all_link_times(network: &Network, flows: &[f64]) -> Result<Vec<f64>> {
    let mut times = vec![0.0; network.link_count()];
    all_link_times_into(network, flows, &mut times)?;
    Ok(times)
}

pub(crate) fn all_link_times_into(network: &Network, flows: &[f64], times: &mut [f64]) -> Result<()> {
    if flows.len() != network.link_count() {
        return Err(Error::DimensionMismatch {
            expected: network.link_count(),
            actual: flows.len(),
        });
    }
    for ((time, link), &flow) in times.iter_mut().zip(network.links()).zip(flows) {
        *time = link.time_unchecked(flow);
    }
    Ok(())
}

/// Sums path flows onto links. Each item is a path's link sequence and the
/// flow it carries.
pub fn aggregate_link_flows<'a, I>(network: &Network, paths: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = (&'a [usize], f64)>,
{
    let mut flows = vec![0.0; network.link_count()];
    aggregate_into(network.link_count(), paths, &mut flows)?;
    Ok(flows)
}

pub(crate) fn aggregate_into<'a, I>(link_count: usize, paths: I, flows: &mut [f64]) -> Result<()>
where
    I: IntoIterator<Item = (&'a [usize], f64)>,
{
    flows.iter_mut().for_each(|f| *f = 0.0);
    for (links, flow) in paths {
        for &link in links {
            if link >= link_count {
                return Err(Error::InvalidLink(link));
            }
            flows[link] += flow;
        }
    }
    Ok(())
}

pub fn path_travel_time(path: &[usize], times: &[f64]) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    path.iter().try_fold(0.0, |acc, &link| {
        times
            .get(link)
            .map(|t| acc + t)
            .ok_or(Error::InvalidLink(link))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_link() -> Link {
        Link::bpr(1, 2, 6.0, 100.0, 0.15, 4.0)
    }

    // Straightforward scalar evaluation, independent of `pow`.
    fn brute_bpr(t0: f64, b: f64, c: f64, p: u32, v: f64) -> f64 {
        let mut ratio = 1.0;
        for _ in 0..p {
            ratio *= v / c;
        }
        t0 * (1.0 + b * ratio)
    }

    #[test]
    fn bpr_examples() {
        let link = sample_link();
        assert_eq!(link_travel_time(&link, 0.0).unwrap(), 6.0);
        assert!((link_travel_time(&link, 100.0).unwrap() - 6.9).abs() < 1e-12);
        let expected = brute_bpr(6.0, 0.15, 100.0, 4, 200.0);
        assert!((expected - 20.4).abs() < 1e-12);
        assert!((link_travel_time(&link, 200.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_power_or_b_is_free_flow() {
        let mut link = sample_link();
        link.bpr_power = 0.0;
        assert_eq!(link.travel_time(1e9).unwrap(), 6.0);
        let mut link = sample_link();
        link.bpr_b = 0.0;
        assert_eq!(link.travel_time(1e9).unwrap(), 6.0);
    }

    #[test]
    fn zero_capacity_is_undefined() {
        let mut link = sample_link();
        link.capacity = 0.0;
        assert!(matches!(link.travel_time(1.0), Err(Error::UndefinedPerformance { .. })));
        assert!(matches!(
            Network::new(2, vec![link], 1, 0),
            Err(Error::UndefinedPerformance { link: Some(0), .. })
        ));
    }

    #[test]
    fn network_rejects_bad_node_and_thru_node() {
        let link = Link::bpr(1, 3, 1.0, 1.0, 0.15, 4.0);
        assert!(matches!(Network::new(2, vec![link], 1, 0), Err(Error::InvalidNode(3))));
        assert!(Network::new(2, vec![], 4, 0).is_err());
        assert!(Network::new(2, vec![], 3, 0).is_ok());
    }

    #[test]
    fn adjacency_lists_every_link_once() {
        let links = vec![
            Link::bpr(1, 2, 1.0, 1.0, 0.15, 4.0),
            Link::bpr(1, 3, 1.0, 1.0, 0.15, 4.0),
            Link::bpr(3, 2, 1.0, 1.0, 0.15, 4.0),
        ];
        let net = Network::new(3, links, 1, 0).unwrap();
        let mut seen: Vec<usize> = (1..=3).flat_map(|n| net.outgoing(n).to_vec()).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2]);
        assert_eq!(net.outgoing(1), &[0, 1]);
    }

    #[test]
    fn all_link_times_cases() {
        let net = Network::new(2, vec![sample_link()], 1, 0).unwrap();
        assert_eq!(all_link_times(&net, &[0.0]).unwrap(), vec![6.0]);
        let t = all_link_times(&net, &[100.0]).unwrap();
        assert!((t[0] - 6.0 * 1.15).abs() < 1e-12);
        assert!(matches!(
            all_link_times(&net, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    fn line_network(n_links: usize) -> Network {
        let links = (0..n_links)
            .map(|i| Link::bpr(i + 1, i + 2, 1.0, 10.0, 0.15, 4.0))
            .collect();
        Network::new(n_links + 1, links, 1, 0).unwrap()
    }

    #[test]
    fn aggregation_cases() {
        let net = line_network(5);
        let empty: Vec<(&[usize], f64)> = vec![];
        assert_eq!(aggregate_link_flows(&net, empty).unwrap(), vec![0.0; 5]);

        let path = [1usize, 2, 3];
        let flows = aggregate_link_flows(&net, [(&path[..], 10.0)]).unwrap();
        assert_eq!(flows, vec![0.0, 10.0, 10.0, 10.0, 0.0]);

        let a = [0usize, 1];
        let b = [1usize, 2];
        let flows = aggregate_link_flows(&net, [(&a[..], 4.0), (&b[..], 7.0)]).unwrap();
        assert_eq!(flows[1], 11.0);
        assert_eq!(flows, vec![4.0, 11.0, 7.0, 0.0, 0.0]);

        let bad = [9usize];
        assert!(matches!(
            aggregate_link_flows(&net, [(&bad[..], 1.0)]),
            Err(Error::InvalidLink(9))
        ));
    }

    #[test]
    fn path_time_cases() {
        assert_eq!(path_travel_time(&[0], &[5.0]).unwrap(), 5.0);
        let times = [0.0, 0.0, 1.5, 2.5, 6.0];
        assert_eq!(path_travel_time(&[2, 3, 4], &times).unwrap(), 10.0);
        assert!(matches!(path_travel_time(&[], &times), Err(Error::EmptyPath)));
        assert!(matches!(path_travel_time(&[7], &times), Err(Error::InvalidLink(7))));
    }

    #[test]
    fn demand_matrix_drops_zero_and_diagonal() {
        let m = DemandMatrix::from_entries(3, [(1, 1, 100.0), (1, 2, 0.0), (2, 1, 5.0), (1, 3, 2.0)]).unwrap();
        assert_eq!(m.od_count(), 2);
        assert_eq!(m.pairs()[0].destination, 3);
        assert_eq!(m.origins(), vec![1, 2]);
        assert!(DemandMatrix::from_entries(3, [(1, 2, -1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn bpr_monotone_and_anchored(
            t0 in 0.0f64..100.0, b in 0.0f64..5.0, c in 0.1f64..1e5,
            p in 0.0f64..8.0, v1 in 0.0f64..1e5, dv in 0.0f64..1e5,
        ) {
            let link = Link::bpr(1, 2, t0, c, b, p);
            prop_assert_eq!(link.travel_time(0.0).unwrap(), t0);
            prop_assert!(link.travel_time(v1).unwrap() <= link.travel_time(v1 + dv).unwrap());
        }

        #[test]
        fn aggregation_is_linear(
            flows in proptest::collection::vec(0.0f64..1e4, 1..6),
            scale in 0.0f64..10.0,
        ) {
            let net = line_network(6);
            let paths: Vec<Vec<usize>> = (0..flows.len()).map(|i| (i..6).collect()).collect();
            let base = aggregate_link_flows(&net, paths.iter().map(Vec::as_slice).zip(flows.iter().copied())).unwrap();
            let scaled = aggregate_link_flows(
                &net,
                paths.iter().map(Vec::as_slice).zip(flows.iter().map(|f| f * scale)),
            ).unwrap();
            for (b, s) in base.iter().zip(&scaled) {
                prop_assert!((b * scale - s).abs() <= 1e-9 * (1.0 + s.abs()));
            }
        }

        #[test]
        fn path_time_concatenates(
            times in proptest::collection::vec(0.0f64..100.0, 8),
            split in 1usize..7,
        ) {
            let path: Vec<usize> = (0..8).collect();
            let whole = path_travel_time(&path, &times).unwrap();
            let parts = path_travel_time(&path[..split], &times).unwrap()
                + path_travel_time(&path[split..], &times).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole));
        }
    }
}
