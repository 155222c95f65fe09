//! One-to-all shortest paths (Dijkstra) with the TNTP centroid rule.
//!
//! Ties between equal labels are resolved in favour of the lexicographically
//! smaller link-id sequence from the origin, so trees are reproducible
//! regardless of heap internals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub origin: usize,
    /// Indexed by node id; slot 0 is unused. `f64::INFINITY` when unreachable.
    pub dist: Vec<f64>,
    /// Incoming tree link per node id.
    pub pred_link: Vec<Option<usize>>,
}

/// A simple path stored as its link sequence from origin to destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub links: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn validate_times(network: &Network, times: &[f64]) -> Result<()> {
    if times.len() != network.link_count() {
        return Err(Error::DimensionMismatch {
            expected: network.link_count(),
            actual: times.len(),
        });
    }
    if let Some((link, &time)) = times.iter().enumerate().find(|(_, t)| !(**t >= 0.0)) {
        return Err(Error::NegativeTime { link, time });
    }
    Ok(())
}

/// Link ids from the origin to `node`, in travel order.
fn sequence_to(network: &Network, pred_link: &[Option<usize>], node: usize) -> Vec<usize> {
    let mut links = Vec::new();
    let mut current = node;
    while let Some(link) = pred_link[current] {
        links.push(link);
        current = network.link(link).tail;
    }
    links.reverse();
    links
}

pub fn one_to_all(network: &Network, times: &[f64], origin: usize) -> Result<ShortestPathTree> {
    validate_times(network, times)?;
    if origin == 0 || origin > network.node_count() {
        return Err(Error::InvalidNode(origin));
    }
    Ok(dijkstra(network, times, origin))
}

fn dijkstra(network: &Network, times: &[f64], origin: usize) -> ShortestPathTree {
    let n = network.node_count();
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut pred_link: Vec<Option<usize>> = vec![None; n + 1];
    let mut heap = BinaryHeap::new();

    dist[origin] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: origin });

    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        // zones are path endpoints only
        if node != origin && !network.is_thru_node(node) {
            continue;
        }
        for &link in network.outgoing(node) {
            let head = network.link(link).head;
            if head == origin {
                continue;
            }
            let candidate = d + times[link];
            if candidate < dist[head] {
                dist[head] = candidate;
                pred_link[head] = Some(link);
                heap.push(HeapEntry { dist: candidate, node: head });
            } else if candidate == dist[head] && pred_link[head] != Some(link) {
                let mut offered = sequence_to(network, &pred_link, node);
                offered.push(link);
                let current = sequence_to(network, &pred_link, head);
                if offered < current {
                    pred_link[head] = Some(link);
                }
            }
        }
    }

    ShortestPathTree {
        origin,
        dist,
        pred_link,
    }
}

/// Shortest-path trees for each origin, returned in the order given.
pub fn trees_for_origins(network: &Network, times: &[f64], origins: &[usize]) -> Result<Vec<ShortestPathTree>> {
    validate_times(network, times)?;
    if let Some(&bad) = origins.iter().find(|&&o| o == 0 || o > network.node_count()) {
        return Err(Error::InvalidNode(bad));
    }
    Ok(origins
        .par_iter()
        .map(|&origin| dijkstra(network, times, origin))
        .collect())
}

impl ShortestPathTree {
    pub fn distance(&self, node: usize) -> f64 {
        self.dist[node]
    }

    pub fn is_reachable(&self, node: usize) -> bool {
        self.dist.get(node).is_some_and(|d| d.is_finite())
    }
}

pub fn extract_path(network: &Network, tree: &ShortestPathTree, destination: usize) -> Result<Path> {
    let unreachable = Error::Unreachable {
        origin: tree.origin,
        destination,
    };
    if destination == tree.origin || !tree.is_reachable(destination) {
        return Err(unreachable);
    }
    let links = sequence_to(network, &tree.pred_link, destination);
    if links.is_empty() {
        return Err(unreachable);
    }
    debug_assert!(is_simple(network, &links));
    Ok(Path { links })
}

/// Whether consecutive links connect and no node repeats.
pub fn is_simple(network: &Network, links: &[usize]) -> bool {
    let Some(&first) = links.first() else {
        return true;
    };
    let mut visited = vec![network.link(first).tail];
    for window in links.windows(2) {
        if network.link(window[0]).head != network.link(window[1]).tail {
            return false;
        }
    }
    for &link in links {
        let head = network.link(link).head;
        if visited.contains(&head) {
            return false;
        }
        visited.push(head);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Link;

    fn net(n: usize, arcs: &[(usize, usize, f64)], first_thru: usize) -> (Network, Vec<f64>) {
        let links = arcs.iter().map(|&(a, b, t)| Link::bpr(a, b, t, 1.0, 0.15, 4.0)).collect();
        let network = Network::new(n, links, first_thru, 0).unwrap();
        let times = network.free_flow_times();
        (network, times)
    }

    #[test]
    fn single_link() {
        let (network, times) = net(2, &[(1, 2, 5.0)], 1);
        let tree = one_to_all(&network, &times, 1).unwrap();
        assert_eq!(tree.dist[1], 0.0);
        assert_eq!(tree.dist[2], 5.0);
        assert_eq!(extract_path(&network, &tree, 2).unwrap().links, vec![0]);
    }

    #[test]
    fn diamond_prefers_short_arm() {
        // 1->2->4 costs 2, 1->3->4 costs 4
        let (network, times) = net(4, &[(1, 2, 1.0), (1, 3, 2.0), (2, 4, 1.0), (3, 4, 2.0)], 1);
        let tree = one_to_all(&network, &times, 1).unwrap();
        assert_eq!(tree.dist[4], 2.0);
        assert_eq!(extract_path(&network, &tree, 4).unwrap().links, vec![0, 2]);
    }

    #[test]
    fn tie_goes_to_smaller_link_sequence() {
        // both arms cost 2; the arm through link 1 is discovered last by id order
        // of the heap but (0, 2) < (1, 3) must win either way
        let (network, times) = net(4, &[(1, 3, 1.0), (1, 2, 1.0), (3, 4, 1.0), (2, 4, 1.0)], 1);
        let tree = one_to_all(&network, &times, 1).unwrap();
        assert_eq!(extract_path(&network, &tree, 4).unwrap().links, vec![0, 2]);
    }

    #[test]
    fn unreachable_names_pair() {
        let (network, times) = net(3, &[(1, 2, 1.0)], 1);
        let tree = one_to_all(&network, &times, 1).unwrap();
        match extract_path(&network, &tree, 3) {
            Err(Error::Unreachable { origin, destination }) => assert_eq!((origin, destination), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn centroids_are_not_transited() {
        // zone 2 sits on the cheap route 1->2->4, but only nodes >= 3 may be transited
        let (network, times) = net(4, &[(1, 2, 1.0), (2, 4, 1.0), (1, 3, 5.0), (3, 4, 5.0)], 3);
        let tree = one_to_all(&network, &times, 1).unwrap();
        assert_eq!(tree.dist[2], 1.0);
        assert_eq!(tree.dist[4], 10.0);
        // but a zone may still be the origin
        let tree = one_to_all(&network, &times, 2).unwrap();
        assert_eq!(tree.dist[4], 1.0);
    }

    #[test]
    fn rejects_negative_and_bad_origin() {
        let (network, _) = net(2, &[(1, 2, 1.0)], 1);
        assert!(matches!(one_to_all(&network, &[-1.0], 1), Err(Error::NegativeTime { link: 0, .. })));
        assert!(matches!(one_to_all(&network, &[1.0], 3), Err(Error::InvalidNode(3))));
        assert!(matches!(one_to_all(&network, &[1.0, 2.0], 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_time_links_allowed() {
        let (network, times) = net(3, &[(1, 2, 0.0), (2, 3, 0.0), (1, 3, 0.0)], 1);
        let tree = one_to_all(&network, &times, 1).unwrap();
        assert_eq!(tree.dist[3], 0.0);
        assert_eq!(extract_path(&network, &tree, 3).unwrap().links, vec![0, 1]);
    }

    #[test]
    fn batch_matches_single() {
        let (network, times) = net(4, &[(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 1, 1.0)], 1);
        let trees = trees_for_origins(&network, &times, &[3, 1, 4]).unwrap();
        assert_eq!(trees[0], one_to_all(&network, &times, 3).unwrap());
        assert_eq!(trees[1].origin, 1);
        assert_eq!(trees[2].dist[3], 3.0);
    }
}
