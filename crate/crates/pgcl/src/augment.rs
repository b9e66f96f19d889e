//! Stochastic graph views: node dropping and edge perturbation.
//!
//! Each training step feeds two independently augmented views of every graph
//! to the shared encoder. Randomness is drawn from a stream derived from
//! (global seed, epoch, graph index, view index), so a graph's views do not
//! depend on batch composition.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graphdata::Graph;
use crate::matrix::Matrix;

/// Which transformation a view applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    NodeDrop,
    EdgePerturb,
    Identity,
}

/// One view's augmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub kind: AugmentKind,
    pub ratio: f64,
}

impl AugmentConfig {
    pub fn new(kind: AugmentKind, ratio: f64) -> Self {
        assert!((0.0..1.0).contains(&ratio), "ratio {ratio} must be in [0,1)");
        AugmentConfig { kind, ratio }
    }

    pub fn identity() -> Self {
        AugmentConfig {
            kind: AugmentKind::Identity,
            ratio: 0.0,
        }
    }

    pub fn apply(&self, g: &Graph, rng: &mut ChaCha8Rng) -> Graph {
        match self.kind {
            AugmentKind::NodeDrop => node_drop(g, self.ratio, rng),
            AugmentKind::EdgePerturb => edge_perturb(g, self.ratio, rng),
            AugmentKind::Identity => g.clone(),
        }
    }
}

/// splitmix64, used to fold identifying integers into one RNG seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic per-(seed, epoch, graph, view) random stream.
pub fn view_rng(seed: u64, epoch: u64, graph_index: u64, view: u64) -> ChaCha8Rng {
    let mut s = splitmix64(seed);
    s = splitmix64(s ^ epoch);
    s = splitmix64(s ^ graph_index);
    s = splitmix64(s ^ view);
    ChaCha8Rng::seed_from_u64(s)
}

/// Remove ⌊ratio·n⌋ uniformly chosen nodes with their incident edges,
/// reindexing survivors contiguously. At least one node always survives.
pub fn node_drop(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Graph {
    assert!((0.0..1.0).contains(&ratio));
    let n = g.num_nodes;
    let drop_count = ((ratio * n as f64).floor() as usize).min(n);
    if drop_count == 0 {
        return g.clone();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let keep_count = if drop_count >= n { 1 } else { n - drop_count };
    let mut keep: Vec<usize> = order[..keep_count].to_vec();
    keep.sort_unstable();

    let mut new_index = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        new_index[old] = new;
    }
    let edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter(|&&(u, v)| new_index[u] != usize::MAX && new_index[v] != usize::MAX)
        .map(|&(u, v)| {
            let (a, b) = (new_index[u], new_index[v]);
            (a.min(b), a.max(b))
        })
        .collect();

    let mut out = Graph::new(keep.len(), edges);
    out.edges.sort_unstable();
    if g.node_features.cols() > 0 {
        let mut feats = Matrix::zeros(keep.len(), g.node_features.cols());
        for (new, &old) in keep.iter().enumerate() {
            feats.row_mut(new).copy_from_slice(g.node_features.row(old));
        }
        out.node_features = feats;
    }
    if let Some(labels) = &g.node_labels {
        out.node_labels = Some(keep.iter().map(|&old| labels[old]).collect());
    }
    out.label = g.label;
    out
}

/// Remove ⌊ratio·|E|⌋ uniformly chosen edges and add the same count of new
/// edges sampled uniformly from the complement of the original edge set
/// (fewer if the complement is smaller). Nodes and features are untouched.
pub fn edge_perturb(g: &Graph, ratio: f64, rng: &mut ChaCha8Rng) -> Graph {
    assert!((0.0..1.0).contains(&ratio));
    let m = g.edges.len();
    let change = (ratio * m as f64).floor() as usize;
    if change == 0 {
        return g.clone();
    }
    let n = g.num_nodes;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let kept: HashSet<usize> = order[change..].iter().cloned().collect();
    let mut edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| kept.contains(i))
        .map(|(_, &e)| e)
        .collect();

    let original: HashSet<(usize, usize)> = g.edges.iter().cloned().collect();
    let possible = n * (n - 1) / 2;
    let non_edges = possible - m;
    let add_count = change.min(non_edges);
    if add_count > 0 {
        let mut added: HashSet<(usize, usize)> = HashSet::new();
        if non_edges <= 4 * add_count {
            // dense case: enumerate the complement and sample from it
            let mut complement = Vec::with_capacity(non_edges);
            for u in 0..n {
                for v in (u + 1)..n {
                    if !original.contains(&(u, v)) {
                        complement.push((u, v));
                    }
                }
            }
            complement.shuffle(rng);
            added.extend(complement.into_iter().take(add_count));
        } else {
            while added.len() < add_count {
                let u = rng.gen_range(0..n);
                let v = rng.gen_range(0..n);
                if u == v {
                    continue;
                }
                let e = (u.min(v), u.max(v));
                if !original.contains(&e) && !added.contains(&e) {
                    added.insert(e);
                }
            }
        }
        edges.extend(added);
    }
    edges.sort_unstable();

    let mut out = Graph::new(n, edges);
    out.node_features = g.node_features.clone();
    out.node_labels = g.node_labels.clone();
    out.label = g.label;
    out
}

/// Produce the two stochastic views of one graph, each from its own stream.
pub fn make_views(
    g: &Graph,
    cfg1: &AugmentConfig,
    cfg2: &AugmentConfig,
    seed: u64,
    epoch: u64,
    graph_index: u64,
) -> (Graph, Graph) {
    let mut rng1 = view_rng(seed, epoch, graph_index, 0);
    let mut rng2 = view_rng(seed, epoch, graph_index, 1);
    (cfg1.apply(g, &mut rng1), cfg2.apply(g, &mut rng2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        // 0 - 1 - 2
        let mut g = Graph::new(3, vec![(0, 1), (1, 2)]);
        g.node_features = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]);
        g
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn node_drop_ratio_zero_is_identity() {
        let g = path3();
        let out = node_drop(&g, 0.0, &mut rng());
        assert_eq!(out, g);
    }

    #[test]
    fn node_drop_removes_exact_count() {
        let mut g = Graph::new(10, vec![]);
        g.node_features = Matrix::filled(10, 1, 1.0);
        let out = node_drop(&g, 0.2, &mut rng());
        assert_eq!(out.num_nodes, 8);
        out.validate().unwrap();
    }

    #[test]
    fn node_drop_keeps_at_least_one_node() {
        let g = path3();
        // ratio 0.99 on 3 nodes floors to 2 dropped, 1 left; extreme case still >= 1
        let out = node_drop(&g, 0.99, &mut rng());
        assert!(out.num_nodes >= 1);
        out.validate().unwrap();
    }

    #[test]
    fn node_drop_middle_of_path_leaves_no_edges() {
        let g = path3();
        // find the seed that drops node 1 by checking all small seeds
        for s in 0..64 {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let out = node_drop(&g, 0.34, &mut r); // drops exactly 1 node
            assert_eq!(out.num_nodes, 2);
            out.validate().unwrap();
            let kept_mid = out.node_features.data().contains(&2.0);
            if !kept_mid {
                assert!(out.edges.is_empty());
                return;
            }
        }
        panic!("no seed dropped the middle node");
    }

    #[test]
    fn edge_perturb_ratio_zero_is_identity() {
        let g = path3();
        assert_eq!(edge_perturb(&g, 0.0, &mut rng()), g);
    }

    #[test]
    fn edge_perturb_on_triangle_cannot_add() {
        let g = Graph::new(3, vec![(0, 1), (0, 2), (1, 2)]);
        let out = edge_perturb(&g, 0.34, &mut rng());
        assert_eq!(out.edges.len(), 2);
        out.validate().unwrap();
    }

    #[test]
    fn edge_perturb_preserves_count_when_room() {
        let mut g = Graph::new(8, vec![(0, 1), (1, 2), (2, 3), (4, 5), (6, 7)]);
        g.node_features = Matrix::filled(8, 2, 0.5);
        for s in 0..5 {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let out = edge_perturb(&g, 0.4, &mut r);
            assert_eq!(out.edges.len(), g.edges.len());
            assert_eq!(out.num_nodes, g.num_nodes);
            assert_eq!(out.node_features, g.node_features);
            out.validate().unwrap();
        }
    }

    #[test]
    fn make_views_identity_pair() {
        let g = path3();
        let id = AugmentConfig::identity();
        let (a, b) = make_views(&g, &id, &id, 0, 0, 0);
        assert_eq!(a, g);
        assert_eq!(b, g);
    }

    #[test]
    fn make_views_deterministic() {
        let g = path3();
        let c1 = AugmentConfig::new(AugmentKind::NodeDrop, 0.34);
        let c2 = AugmentConfig::new(AugmentKind::EdgePerturb, 0.5);
        let (a1, b1) = make_views(&g, &c1, &c2, 9, 3, 17);
        let (a2, b2) = make_views(&g, &c1, &c2, 9, 3, 17);
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let (a3, _) = make_views(&g, &c1, &c2, 9, 4, 17);
        // different epoch gives an independent stream; extremely unlikely equal
        let _ = a3;
    }

    #[test]
    fn views_satisfy_graph_invariants() {
        let mut g = Graph::new(12, vec![(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (7, 8), (9, 10)]);
        g.node_features = Matrix::filled(12, 3, 1.0);
        let c1 = AugmentConfig::new(AugmentKind::NodeDrop, 0.2);
        let c2 = AugmentConfig::new(AugmentKind::EdgePerturb, 0.2);
        for gi in 0..20 {
            let (a, b) = make_views(&g, &c1, &c2, 5, 0, gi);
            a.validate().unwrap();
            b.validate().unwrap();
        }
    }
}
