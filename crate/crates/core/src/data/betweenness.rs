use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{RoadNetwork, SegmentId};

/// Edge betweenness on the directed network with hop-count shortest paths.
///
/// Score of edge `e` is `Σ_{s≠t} σ_st(e) / σ_st` over ordered node pairs;
/// unreachable pairs contribute nothing and scores are not normalized.
/// Brandes' accumulation, one BFS per source.
pub fn compute_edge_betweenness(network: &RoadNetwork) -> BTreeMap<SegmentId, f64> {
    let node_index: HashMap<_, usize> = network
        .nodes()
        .keys()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let n = node_index.len();
    let edge_ids: Vec<&SegmentId> = network.edges().keys().collect();
    // adjacency as (target node, edge index)
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, edge) in network.edges().values().enumerate() {
        out[node_index[&edge.from]].push((node_index[&edge.to], e));
    }

    let mut score = vec![0.0f64; edge_ids.len()];
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    // incoming shortest-path edges as (predecessor node, edge index)
    let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for source in 0..n {
        dist.fill(usize::MAX);
        sigma.fill(0.0);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();

        dist[source] = 0;
        sigma[source] = 1.0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, e) in &out[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push((v, e));
                }
            }
        }

        for &w in order.iter().rev() {
            for &(v, e) in &preds[w] {
                let share = sigma[v] / sigma[w] * (1.0 + delta[w]);
                score[e] += share;
                delta[v] += share;
            }
        }
    }

    edge_ids.into_iter().cloned().zip(score).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::network::load_network;
    use crate::data::network::tests::record;

    fn sid(s: &str) -> SegmentId {
        SegmentId::new(s)
    }

    #[test]
    fn path_graph() {
        let net = load_network(vec![
            record("ab", ("A", 0.0, 0.0), ("B", 1.0, 0.0)),
            record("bc", ("B", 1.0, 0.0), ("C", 2.0, 0.0)),
        ])
        .unwrap();
        let b = compute_edge_betweenness(&net);
        assert_eq!(b[&sid("ab")], 2.0);
        assert_eq!(b[&sid("bc")], 2.0);
    }

    #[test]
    fn directed_cycle() {
        let net = load_network(vec![
            record("ab", ("A", 0.0, 0.0), ("B", 1.0, 0.0)),
            record("bc", ("B", 1.0, 0.0), ("C", 1.0, 1.0)),
            record("ca", ("C", 1.0, 1.0), ("A", 0.0, 0.0)),
        ])
        .unwrap();
        // each edge lies on its own pair plus two two-hop pairs
        let b = compute_edge_betweenness(&net);
        assert!(b.values().all(|&v| v == 3.0));
    }

    #[test]
    fn single_edge() {
        let net = load_network(vec![record("ab", ("A", 0.0, 0.0), ("B", 1.0, 0.0))]).unwrap();
        assert_eq!(compute_edge_betweenness(&net)[&sid("ab")], 1.0);
    }

    #[test]
    fn diamond_splits_paths() {
        // A→B→D and A→C→D: pair (A,D) splits evenly over both routes.
        let net = load_network(vec![
            record("ab", ("A", 0.0, 0.0), ("B", 1.0, 1.0)),
            record("ac", ("A", 0.0, 0.0), ("C", 1.0, -1.0)),
            record("bd", ("B", 1.0, 1.0), ("D", 2.0, 0.0)),
            record("cd", ("C", 1.0, -1.0), ("D", 2.0, 0.0)),
        ])
        .unwrap();
        let b = compute_edge_betweenness(&net);
        assert_eq!(b[&sid("ab")], 1.5);
        assert_eq!(b[&sid("cd")], 1.5);
    }
}
