//! TUDataset ingestion, node features, batching, and CV folds.
//!
//! The TUDataset text format: `<name>_A.txt` holds one `u, v` edge per line
//! (1-based node indices, typically listed in both directions),
//! `<name>_graph_indicator.txt` maps each node line to its 1-based graph id,
//! `<name>_graph_labels.txt` holds one class label per graph, and the
//! optional `<name>_node_labels.txt` one discrete label per node.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PgclError, Result};
use crate::matrix::Matrix;

/// One undirected graph. Edges are stored once, canonically `(min, max)`,
/// with no self-loops; the encoder expands them to both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// num_nodes × F feature matrix; empty (F = 0) until features are built.
    pub node_features: Matrix,
    /// Discrete per-node labels, when the dataset provides them.
    pub node_labels: Option<Vec<usize>>,
    /// Class id in 0..num_classes, used only by evaluation.
    pub label: Option<usize>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        Graph {
            num_nodes,
            edges,
            node_features: Matrix::zeros(num_nodes, 0),
            node_labels: None,
            label: None,
        }
    }

    /// Per-node degree over the symmetric adjacency.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Symmetric adjacency lists.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
        nbrs
    }

    /// Check the structural invariants; used by tests and after augmentation.
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(PgclError::Contract("graph with zero nodes".into()));
        }
        let mut seen = HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.num_nodes || v >= self.num_nodes {
                return Err(PgclError::Contract(format!(
                    "edge ({u},{v}) out of range for {} nodes",
                    self.num_nodes
                )));
            }
            if u == v {
                return Err(PgclError::Contract(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(PgclError::Contract(format!("duplicate edge ({u},{v})")));
            }
        }
        if self.node_features.cols() > 0 && self.node_features.rows() != self.num_nodes {
            return Err(PgclError::Contract(format!(
                "feature rows {} != num_nodes {}",
                self.node_features.rows(),
                self.num_nodes
            )));
        }
        Ok(())
    }
}

/// How node features are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// One-hot of the discrete node label.
    NodeLabels,
    /// One-hot of the node degree, capped.
    DegreeOnehot,
    /// Single all-ones column.
    Constant,
}

/// Degree cap for one-hot degree features; social graphs have extreme hubs.
pub const DEGREE_CAP: usize = 400;

/// Summary of a loaded dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_graphs: usize,
    pub num_classes: usize,
    pub avg_nodes: f64,
    pub feature_dim: usize,
    pub feature_source: Option<FeatureMode>,
}

/// A loaded dataset: graphs plus summary metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label.unwrap_or(0)).collect()
    }

    /// True when every graph carries discrete node labels.
    pub fn has_node_labels(&self) -> bool {
        self.graphs.iter().all(|g| g.node_labels.is_some())
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        PgclError::Ingestion(format!("missing or unreadable file {}: {e}", path.display()))
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_int(file: &Path, line_no: usize, token: &str) -> Result<i64> {
    token.trim().parse::<i64>().map_err(|_| PgclError::Format {
        file: file.display().to_string(),
        line: line_no,
        detail: format!("expected integer, got {token:?}"),
    })
}

/// Load `<dir>/<name>/<name>_*.txt`, remapping 1-based indices to 0-based and
/// class labels to dense ids `0..num_classes`.
pub fn load_tudataset(dir: &Path, name: &str) -> Result<Dataset> {
    let base = dir.join(name);
    let file = |suffix: &str| base.join(format!("{name}_{suffix}.txt"));

    let indicator_path = file("graph_indicator");
    let indicator = read_lines(&indicator_path)?;
    let mut node_graph = Vec::with_capacity(indicator.len());
    for (i, line) in indicator.iter().enumerate() {
        let g = parse_int(&indicator_path, i + 1, line)?;
        if g < 1 {
            return Err(PgclError::Format {
                file: indicator_path.display().to_string(),
                line: i + 1,
                detail: format!("graph id {g} must be >= 1"),
            });
        }
        node_graph.push((g - 1) as usize);
    }
    if node_graph.is_empty() {
        return Err(PgclError::Ingestion(format!(
            "{} lists no nodes",
            indicator_path.display()
        )));
    }
    let num_graphs = node_graph.iter().max().unwrap() + 1;

    // Nodes of one graph must be contiguous in file order; compute offsets.
    let mut counts = vec![0usize; num_graphs];
    for (i, &g) in node_graph.iter().enumerate() {
        if i > 0 && node_graph[i - 1] != g && node_graph[i - 1] + 1 != g {
            return Err(PgclError::Format {
                file: indicator_path.display().to_string(),
                line: i + 1,
                detail: "graph indicator not nondecreasing/contiguous".into(),
            });
        }
        counts[g] += 1;
    }
    let mut offsets = vec![0usize; num_graphs];
    for g in 1..num_graphs {
        offsets[g] = offsets[g - 1] + counts[g - 1];
    }
    let total_nodes = node_graph.len();

    let labels_path = file("graph_labels");
    let label_lines = read_lines(&labels_path)?;
    if label_lines.len() != num_graphs {
        return Err(PgclError::Ingestion(format!(
            "{}: {} labels for {} graphs",
            labels_path.display(),
            label_lines.len(),
            num_graphs
        )));
    }
    let mut raw_labels = Vec::with_capacity(num_graphs);
    for (i, line) in label_lines.iter().enumerate() {
        raw_labels.push(parse_int(&labels_path, i + 1, line)?);
    }
    // Dense remap in sorted raw order.
    let classes: Vec<i64> = {
        let set: std::collections::BTreeSet<i64> = raw_labels.iter().cloned().collect();
        set.into_iter().collect()
    };
    let class_of = |raw: i64| classes.binary_search(&raw).unwrap();

    let mut edge_sets: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); num_graphs];
    let adj_path = file("A");
    let adj_lines = read_lines(&adj_path)?;
    for (i, line) in adj_lines.iter().enumerate() {
        let mut parts = line.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(PgclError::Format {
                file: adj_path.display().to_string(),
                line: i + 1,
                detail: format!("expected 'u, v', got {line:?}"),
            });
        };
        let u = parse_int(&adj_path, i + 1, a)?;
        let v = parse_int(&adj_path, i + 1, b)?;
        if u < 1 || v < 1 || u as usize > total_nodes || v as usize > total_nodes {
            return Err(PgclError::Format {
                file: adj_path.display().to_string(),
                line: i + 1,
                detail: format!("node index out of range: ({u}, {v}) with {total_nodes} nodes"),
            });
        }
        let (u, v) = (u as usize - 1, v as usize - 1);
        let g = node_graph[u];
        if node_graph[v] != g {
            return Err(PgclError::Format {
                file: adj_path.display().to_string(),
                line: i + 1,
                detail: format!("edge spans graphs {} and {}", g + 1, node_graph[v] + 1),
            });
        }
        if u == v {
            continue; // self-contribution is handled by the GIN update
        }
        let (lu, lv) = (u - offsets[g], v - offsets[g]);
        edge_sets[g].insert((lu.min(lv), lu.max(lv)));
    }

    let node_labels_path = file("node_labels");
    let node_labels = if node_labels_path.exists() {
        let lines = read_lines(&node_labels_path)?;
        if lines.len() != total_nodes {
            return Err(PgclError::Ingestion(format!(
                "{}: {} labels for {} nodes",
                node_labels_path.display(),
                lines.len(),
                total_nodes
            )));
        }
        let mut raw = Vec::with_capacity(total_nodes);
        for (i, line) in lines.iter().enumerate() {
            raw.push(parse_int(&node_labels_path, i + 1, line)?);
        }
        let uniq: Vec<i64> = {
            let set: std::collections::BTreeSet<i64> = raw.iter().cloned().collect();
            set.into_iter().collect()
        };
        Some(
            raw.iter()
                .map(|r| uniq.binary_search(r).unwrap())
                .collect::<Vec<usize>>(),
        )
    } else {
        None
    };

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let mut edges: Vec<(usize, usize)> = edge_sets[g].iter().cloned().collect();
        edges.sort_unstable();
        let mut graph = Graph::new(counts[g], edges);
        graph.label = Some(class_of(raw_labels[g]));
        if let Some(all) = &node_labels {
            graph.node_labels = Some(all[offsets[g]..offsets[g] + counts[g]].to_vec());
        }
        graphs.push(graph);
    }

    let meta = DatasetMeta {
        name: name.to_string(),
        num_graphs,
        num_classes: classes.len(),
        avg_nodes: total_nodes as f64 / num_graphs as f64,
        feature_dim: 0,
        feature_source: None,
    };
    Ok(Dataset { graphs, meta })
}

/// Write a dataset back out in TUDataset format (each undirected edge in
/// both directions, 1-based); the inverse of [`load_tudataset`].
pub fn save_tudataset(dataset: &Dataset, dir: &Path, name: &str) -> Result<()> {
    let base = dir.join(name);
    fs::create_dir_all(&base).map_err(|e| PgclError::io(base.display().to_string(), e))?;
    let mut a = String::new();
    let mut ind = String::new();
    let mut glab = String::new();
    let mut nlab = String::new();
    let mut offset = 0usize;
    let with_node_labels = dataset.has_node_labels();
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for &(u, v) in &g.edges {
            a.push_str(&format!("{}, {}\n", offset + u + 1, offset + v + 1));
            a.push_str(&format!("{}, {}\n", offset + v + 1, offset + u + 1));
        }
        for i in 0..g.num_nodes {
            ind.push_str(&format!("{}\n", gi + 1));
            if with_node_labels {
                nlab.push_str(&format!("{}\n", g.node_labels.as_ref().unwrap()[i]));
            }
        }
        glab.push_str(&format!("{}\n", g.label.unwrap_or(0)));
        offset += g.num_nodes;
    }
    let write = |suffix: &str, content: &str| -> Result<()> {
        let path = base.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, content).map_err(|e| PgclError::io(path.display().to_string(), e))
    };
    write("A", &a)?;
    write("graph_indicator", &ind)?;
    write("graph_labels", &glab)?;
    if with_node_labels {
        write("node_labels", &nlab)?;
    }
    Ok(())
}

/// Attach node features to every graph; returns the uniform feature width.
pub fn build_features(graphs: &mut [Graph], mode: FeatureMode) -> Result<usize> {
    let dim = match mode {
        FeatureMode::NodeLabels => {
            let mut max_label = 0usize;
            for g in graphs.iter() {
                let labels = g.node_labels.as_ref().ok_or_else(|| {
                    PgclError::Config(
                        "feature mode node-labels requires a node label file".into(),
                    )
                })?;
                max_label = max_label.max(labels.iter().cloned().max().unwrap_or(0));
            }
            max_label + 1
        }
        FeatureMode::DegreeOnehot => {
            let mut max_deg = 0usize;
            for g in graphs.iter() {
                max_deg = max_deg.max(g.degrees().into_iter().max().unwrap_or(0));
            }
            max_deg.min(DEGREE_CAP) + 1
        }
        FeatureMode::Constant => 1,
    };
    for g in graphs.iter_mut() {
        let mut feats = Matrix::zeros(g.num_nodes, dim);
        match mode {
            FeatureMode::NodeLabels => {
                for (i, &l) in g.node_labels.as_ref().unwrap().iter().enumerate() {
                    feats.set(i, l, 1.0);
                }
            }
            FeatureMode::DegreeOnehot => {
                for (i, d) in g.degrees().into_iter().enumerate() {
                    feats.set(i, d.min(DEGREE_CAP), 1.0);
                }
            }
            FeatureMode::Constant => {
                for i in 0..g.num_nodes {
                    feats.set(i, 0, 1.0);
                }
            }
        }
        g.node_features = feats;
    }
    Ok(dim)
}

/// Build features on a whole dataset and record the choice in its metadata.
pub fn build_dataset_features(dataset: &mut Dataset, mode: FeatureMode) -> Result<()> {
    let dim = build_features(&mut dataset.graphs, mode)?;
    dataset.meta.feature_dim = dim;
    dataset.meta.feature_source = Some(mode);
    Ok(())
}

/// Block-diagonal packing of a list of graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub total_nodes: usize,
    pub node_features: Matrix,
    /// Edges with node indices shifted by cumulative offsets.
    pub edges: Vec<(usize, usize)>,
    /// For every packed node, the index of the graph that owns it.
    pub graph_index: Vec<usize>,
    /// Half-open packed-node range of each graph.
    pub node_ranges: Vec<(usize, usize)>,
    pub batch_size: usize,
}

impl GraphBatch {
    /// Symmetric adjacency lists over packed node indices.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.total_nodes];
        for &(u, v) in &self.edges {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
        nbrs
    }
}

/// Pack graphs block-diagonally. All graphs must share one feature width.
pub fn make_batch(graphs: &[&Graph]) -> GraphBatch {
    assert!(!graphs.is_empty(), "make_batch of an empty list");
    let feat_dim = graphs[0].node_features.cols();
    let total_nodes: usize = graphs.iter().map(|g| g.num_nodes).sum();
    let mut node_features = Matrix::zeros(total_nodes, feat_dim);
    let mut edges = Vec::new();
    let mut graph_index = Vec::with_capacity(total_nodes);
    let mut node_ranges = Vec::with_capacity(graphs.len());
    let mut offset = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        assert_eq!(
            g.node_features.cols(),
            feat_dim,
            "inconsistent feature width in batch"
        );
        for i in 0..g.num_nodes {
            node_features
                .row_mut(offset + i)
                .copy_from_slice(g.node_features.row(i));
            graph_index.push(gi);
        }
        for &(u, v) in &g.edges {
            edges.push((offset + u, offset + v));
        }
        node_ranges.push((offset, offset + g.num_nodes));
        offset += g.num_nodes;
    }
    GraphBatch {
        total_nodes,
        node_features,
        edges,
        graph_index,
        node_ranges,
        batch_size: graphs.len(),
    }
}

/// Recover the individual graphs of a batch (features included, labels lost).
pub fn unbatch(batch: &GraphBatch) -> Vec<Graph> {
    let mut graphs = Vec::with_capacity(batch.batch_size);
    for &(start, end) in &batch.node_ranges {
        let n = end - start;
        let mut feats = Matrix::zeros(n, batch.node_features.cols());
        for i in 0..n {
            feats.row_mut(i).copy_from_slice(batch.node_features.row(start + i));
        }
        let mut edges: Vec<(usize, usize)> = batch
            .edges
            .iter()
            .filter(|&&(u, v)| u >= start && u < end && v >= start && v < end)
            .map(|&(u, v)| (u - start, v - start))
            .collect();
        edges.sort_unstable();
        let mut g = Graph::new(n, edges);
        g.node_features = feats;
        graphs.push(g);
    }
    graphs
}

/// Deterministic stratified k-fold split: `(train, test)` index pairs whose
/// test sets partition `0..labels.len()` with per-class counts within ±1.
pub fn stratified_folds(
    labels: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(PgclError::Stratification(format!("k = {k} must be >= 2")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for (class, members) in &by_class {
        if members.len() < k {
            return Err(PgclError::Stratification(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (i, idx) in shuffled.into_iter().enumerate() {
            test_folds[i % k].push(idx);
        }
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut test = test_folds[f].clone();
        test.sort_unstable();
        let test_set: HashSet<usize> = test.iter().cloned().collect();
        let train: Vec<usize> = (0..labels.len()).filter(|i| !test_set.contains(i)).collect();
        folds.push((train, test));
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_toy(dir: &Path) {
        fs::create_dir_all(dir.join("TOY")).unwrap();
        fs::write(dir.join("TOY/TOY_A.txt"), "1, 2\n2, 1\n").unwrap();
        fs::write(dir.join("TOY/TOY_graph_indicator.txt"), "1\n1\n").unwrap();
        fs::write(dir.join("TOY/TOY_graph_labels.txt"), "1\n").unwrap();
    }

    #[test]
    fn toy_file_parses_to_single_edge_graph() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        let ds = load_tudataset(tmp.path(), "TOY").unwrap();
        assert_eq!(ds.graphs.len(), 1);
        assert_eq!(ds.graphs[0].num_nodes, 2);
        assert_eq!(ds.graphs[0].edges, vec![(0, 1)]);
        assert_eq!(ds.meta.num_graphs, 1);
    }

    #[test]
    fn missing_file_names_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("X")).unwrap();
        let err = load_tudataset(tmp.path(), "X").unwrap_err();
        assert!(err.to_string().contains("X_graph_indicator.txt"), "{err}");
    }

    #[test]
    fn dangling_node_index_reports_line() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("BAD")).unwrap();
        fs::write(tmp.path().join("BAD/BAD_A.txt"), "1, 2\n2, 9\n").unwrap();
        fs::write(tmp.path().join("BAD/BAD_graph_indicator.txt"), "1\n1\n").unwrap();
        fs::write(tmp.path().join("BAD/BAD_graph_labels.txt"), "1\n").unwrap();
        let err = load_tudataset(tmp.path(), "BAD").unwrap_err();
        match err {
            PgclError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn features_node_label_onehot() {
        let mut g = Graph::new(3, vec![(0, 1)]);
        g.node_labels = Some(vec![0, 1, 2]);
        let mut graphs = vec![g];
        let dim = build_features(&mut graphs, FeatureMode::NodeLabels).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(graphs[0].node_features.row(1), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn features_degree_isolated_node() {
        let mut graphs = vec![Graph::new(3, vec![(0, 1)])];
        build_features(&mut graphs, FeatureMode::DegreeOnehot).unwrap();
        // node 2 is isolated: one-hot at position 0
        assert_eq!(graphs[0].node_features.get(2, 0), 1.0);
        assert_eq!(graphs[0].node_features.get(0, 1), 1.0);
    }

    #[test]
    fn features_constant_all_ones() {
        let mut graphs = vec![Graph::new(2, vec![])];
        let dim = build_features(&mut graphs, FeatureMode::Constant).unwrap();
        assert_eq!(dim, 1);
        assert_eq!(graphs[0].node_features.data(), &[1.0, 1.0]);
    }

    #[test]
    fn features_node_labels_missing_is_config_error() {
        let mut graphs = vec![Graph::new(2, vec![])];
        assert!(matches!(
            build_features(&mut graphs, FeatureMode::NodeLabels),
            Err(PgclError::Config(_))
        ));
    }

    #[test]
    fn batch_two_graphs_shifts_edges() {
        let mut g = Graph::new(2, vec![(0, 1)]);
        g.node_features = Matrix::filled(2, 1, 1.0);
        let batch = make_batch(&[&g, &g]);
        assert_eq!(batch.edges, vec![(0, 1), (2, 3)]);
        assert_eq!(batch.graph_index, vec![0, 0, 1, 1]);
        assert_eq!(batch.total_nodes, 4);
    }

    #[test]
    fn batch_single_graph_is_identity() {
        let mut g = Graph::new(2, vec![(0, 1)]);
        g.node_features = Matrix::filled(2, 1, 1.0);
        let batch = make_batch(&[&g]);
        assert_eq!(batch.graph_index, vec![0, 0]);
        let back = unbatch(&batch);
        assert_eq!(back[0].edges, g.edges);
        assert_eq!(back[0].node_features, g.node_features);
    }

    #[test]
    fn batch_offsets_for_mixed_sizes() {
        let mk = |n: usize| {
            let mut g = Graph::new(n, vec![]);
            g.node_features = Matrix::filled(n, 1, 1.0);
            g
        };
        let (a, b, c) = (mk(1), mk(2), mk(3));
        let batch = make_batch(&[&a, &b, &c]);
        assert_eq!(batch.total_nodes, 6);
        assert_eq!(
            batch.node_ranges,
            vec![(0, 1), (1, 3), (3, 6)]
        );
    }

    #[test]
    fn folds_partition_balanced_classes_exactly() {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let folds = stratified_folds(&labels, 10, 7).unwrap();
        for (_, test) in &folds {
            assert_eq!(test.len(), 2);
            let c0 = test.iter().filter(|&&i| labels[i] == 0).count();
            assert_eq!(c0, 1);
        }
        let mut all: Vec<usize> = folds.iter().flat_map(|(_, t)| t.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn folds_deterministic_for_seed() {
        let labels: Vec<usize> = (0..37).map(|i| i % 3).collect();
        let a = stratified_folds(&labels, 5, 42).unwrap();
        let b = stratified_folds(&labels, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = stratified_folds(&labels, 5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn folds_error_on_small_class() {
        let labels = vec![0, 0, 0, 1];
        assert!(matches!(
            stratified_folds(&labels, 3, 0),
            Err(PgclError::Stratification(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        let ds = load_tudataset(tmp.path(), "TOY").unwrap();
        save_tudataset(&ds, tmp.path(), "TOY2").unwrap();
        let ds2 = load_tudataset(tmp.path(), "TOY2").unwrap();
        assert_eq!(ds.graphs[0].edges, ds2.graphs[0].edges);
        assert_eq!(ds.labels(), ds2.labels());
    }
}
