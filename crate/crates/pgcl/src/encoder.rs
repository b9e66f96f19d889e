//! GIN encoder: message-passing layers, layer-concatenated readout, and a
//! two-layer projection head mapping each graph to a D-dimensional embedding.
//!
//! Each layer computes `h'_v = MLP((1+eps)·h_v + Σ_{u∈N(v)} h_u)` with a
//! two-affine-map MLP and a ReLU between; eps is fixed at 0 (GIN-0). The
//! readout pools node vectors per graph at every layer (sum or mean) and
//! concatenates the pooled vectors across layers.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphdata::GraphBatch;
use crate::matrix::Matrix;
use crate::tensor::{PoolKind, Tape, Tensor};

/// Graph-level pooling flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Sum,
    Mean,
}

impl Readout {
    fn pool_kind(self) -> PoolKind {
        match self {
            Readout::Sum => PoolKind::Sum,
            Readout::Mean => PoolKind::Mean,
        }
    }
}

/// Encoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub readout: Readout,
    /// L2-normalize embedding rows so similarities are cosine.
    pub normalize_embeddings: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 3,
            hidden: 32,
            embed_dim: 32,
            readout: Readout::Sum,
            normalize_embeddings: true,
        }
    }
}

/// One affine map `x·W + b` with `W: in×out`, `b: 1×out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Affine {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Affine {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-a..a)),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

/// Parameters of one GIN layer: a two-affine-map MLP with ReLU between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinLayer {
    pub lin1: Affine,
    pub lin2: Affine,
    pub epsilon: f64,
}

/// All trainable encoder parameters, stored as raw matrices between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<GinLayer>,
    pub proj1: Affine,
    pub proj2: Affine,
    pub feature_dim: usize,
}

impl EncoderParams {
    /// Fresh parameters: weights uniform in [-a, a] with
    /// a = sqrt(6 / (fan_in + fan_out)), biases zero, eps fixed at 0.
    pub fn init(cfg: &EncoderConfig, feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(cfg.num_layers);
        let mut width = feature_dim;
        for _ in 0..cfg.num_layers {
            layers.push(GinLayer {
                lin1: Affine::init(width, cfg.hidden, rng),
                lin2: Affine::init(cfg.hidden, cfg.hidden, rng),
                epsilon: 0.0,
            });
            width = cfg.hidden;
        }
        let readout_dim = cfg.num_layers * cfg.hidden;
        EncoderParams {
            layers,
            proj1: Affine::init(readout_dim, cfg.hidden, rng),
            proj2: Affine::init(cfg.hidden, cfg.embed_dim, rng),
            feature_dim,
        }
    }

    /// All parameter matrices in a fixed order (shared with the optimizer).
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.lin1.weight);
            out.push(&l.lin1.bias);
            out.push(&l.lin2.weight);
            out.push(&l.lin2.bias);
        }
        out.push(&self.proj1.weight);
        out.push(&self.proj1.bias);
        out.push(&self.proj2.weight);
        out.push(&self.proj2.bias);
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.lin1.weight);
            out.push(&mut l.lin1.bias);
            out.push(&mut l.lin2.weight);
            out.push(&mut l.lin2.bias);
        }
        out.push(&mut self.proj1.weight);
        out.push(&mut self.proj1.bias);
        out.push(&mut self.proj2.weight);
        out.push(&mut self.proj2.bias);
        out
    }

    /// Put every parameter on a tape; `trainable` controls gradient tracking.
    pub fn to_tape(&self, tape: &Tape, trainable: bool) -> EncoderTapeParams {
        let lift = |m: &Matrix| {
            if trainable {
                tape.var(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        EncoderTapeParams {
            layers: self
                .layers
                .iter()
                .map(|l| GinLayerTensors {
                    w1: lift(&l.lin1.weight),
                    b1: lift(&l.lin1.bias),
                    w2: lift(&l.lin2.weight),
                    b2: lift(&l.lin2.bias),
                    epsilon: l.epsilon,
                })
                .collect(),
            proj1_w: lift(&self.proj1.weight),
            proj1_b: lift(&self.proj1.bias),
            proj2_w: lift(&self.proj2.weight),
            proj2_b: lift(&self.proj2.bias),
        }
    }
}

/// One layer's parameters as tape tensors.
pub struct GinLayerTensors {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub epsilon: f64,
}

/// Encoder parameters as tape tensors for one step.
pub struct EncoderTapeParams {
    pub layers: Vec<GinLayerTensors>,
    pub proj1_w: Tensor,
    pub proj1_b: Tensor,
    pub proj2_w: Tensor,
    pub proj2_b: Tensor,
}

impl EncoderTapeParams {
    /// Tensors in the same order as [`EncoderParams::matrices`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.w1);
            out.push(&l.b1);
            out.push(&l.w2);
            out.push(&l.b2);
        }
        out.push(&self.proj1_w);
        out.push(&self.proj1_b);
        out.push(&self.proj2_w);
        out.push(&self.proj2_b);
        out
    }
}

/// One GIN message-passing layer over packed node features.
pub fn gin_layer_forward(
    h: &Tensor,
    neighbors: &Rc<Vec<Vec<usize>>>,
    layer: &GinLayerTensors,
) -> Result<Tensor> {
    let self_term = if layer.epsilon == 0.0 {
        h.clone()
    } else {
        h.scale(1.0 + layer.epsilon)
    };
    let agg = h.neighbor_sum(Rc::clone(neighbors))?.add(&self_term)?;
    let hidden = agg.matmul(&layer.w1)?.add_row(&layer.b1)?.relu();
    hidden.matmul(&layer.w2)?.add_row(&layer.b2)
}

/// Pool each layer's node matrix per graph, then concatenate across layers.
pub fn readout(
    per_layer: &[Tensor],
    batch: &GraphBatch,
    kind: Readout,
    tape: &Tape,
) -> Result<Tensor> {
    let segments = Rc::new(batch.node_ranges.clone());
    let mut pooled = Vec::with_capacity(per_layer.len());
    for h in per_layer {
        pooled.push(h.segment_pool(Rc::clone(&segments), kind.pool_kind())?);
    }
    tape.concat_cols(&pooled)
}

/// Full encoder forward: N graphs in, N×D embeddings out.
pub fn encode(
    cfg: &EncoderConfig,
    params: &EncoderTapeParams,
    batch: &GraphBatch,
    tape: &Tape,
) -> Result<Tensor> {
    let neighbors = Rc::new(batch.neighbor_lists());
    let mut h = tape.constant(batch.node_features.clone());
    let mut per_layer = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        h = gin_layer_forward(&h, &neighbors, layer)?;
        per_layer.push(h.clone());
    }
    let pooled = readout(&per_layer, batch, cfg.readout, tape)?;
    let z = pooled
        .matmul(&params.proj1_w)?
        .add_row(&params.proj1_b)?
        .relu()
        .matmul(&params.proj2_w)?
        .add_row(&params.proj2_b)?;
    Ok(if cfg.normalize_embeddings {
        z.l2_normalize_rows()
    } else {
        z
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{make_batch, Graph};
    use rand::SeedableRng;

    fn make_identity_layer(tape: &Tape, width: usize) -> GinLayerTensors {
        GinLayerTensors {
            w1: tape.constant(Matrix::identity(width)),
            b1: tape.constant(Matrix::zeros(1, width)),
            w2: tape.constant(Matrix::identity(width)),
            b2: tape.constant(Matrix::zeros(1, width)),
            epsilon: 0.0,
        }
    }

    fn graph_with_features(n: usize, edges: Vec<(usize, usize)>, feats: Matrix) -> Graph {
        let mut g = Graph::new(n, edges);
        g.node_features = feats;
        g
    }

    #[test]
    fn isolated_node_passes_through_identity_mlp() {
        let tape = Tape::new();
        let g = graph_with_features(1, vec![], Matrix::from_vec(1, 2, vec![0.3, -1.2]));
        let batch = make_batch(&[&g]);
        let layer = make_identity_layer(&tape, 2);
        let h = tape.constant(batch.node_features.clone());
        let neighbors = Rc::new(batch.neighbor_lists());
        let out = gin_layer_forward(&h, &neighbors, &layer).unwrap();
        // ReLU clips the negative coordinate of the hidden activation
        assert_eq!(out.value().row(0), &[0.3, 0.0]);
    }

    #[test]
    fn two_connected_nodes_sum_features() {
        let tape = Tape::new();
        let g = graph_with_features(
            2,
            vec![(0, 1)],
            Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 5.0]),
        );
        let batch = make_batch(&[&g]);
        let layer = make_identity_layer(&tape, 2);
        let h = tape.constant(batch.node_features.clone());
        let neighbors = Rc::new(batch.neighbor_lists());
        let out = gin_layer_forward(&h, &neighbors, &layer).unwrap().value();
        assert_eq!(out.row(0), &[4.0, 7.0]);
        assert_eq!(out.row(1), &[4.0, 7.0]);
    }

    #[test]
    fn readout_shapes_and_single_node_concat() {
        let tape = Tape::new();
        let g1 = graph_with_features(1, vec![], Matrix::from_vec(1, 2, vec![1.0, 2.0]));
        let g2 = graph_with_features(
            2,
            vec![(0, 1)],
            Matrix::from_vec(2, 2, vec![5.0, 5.0, 5.0, 5.0]),
        );
        let batch = make_batch(&[&g1, &g2]);
        let h = tape.constant(batch.node_features.clone());
        let out = readout(&[h.clone(), h], &batch, Readout::Sum, &tape).unwrap();
        assert_eq!(out.shape(), (2, 4));
        assert_eq!(out.value().row(0), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn mean_pool_of_identical_nodes_is_one_node() {
        let tape = Tape::new();
        let g = graph_with_features(
            3,
            vec![(0, 1), (1, 2)],
            Matrix::from_vec(3, 2, vec![0.7, -0.1, 0.7, -0.1, 0.7, -0.1]),
        );
        let batch = make_batch(&[&g]);
        let h = tape.constant(batch.node_features.clone());
        let out = readout(&[h], &batch, Readout::Mean, &tape).unwrap().value();
        assert!((out.get(0, 0) - 0.7).abs() < 1e-15);
        assert!((out.get(0, 1) + 0.1).abs() < 1e-15);
    }

    fn random_graph(n: usize, rng: &mut ChaCha8Rng, feat_dim: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen_bool(0.4) {
                    edges.push((u, v));
                }
            }
        }
        graph_with_features(
            n,
            edges,
            Matrix::from_fn(n, feat_dim, |_, _| rng.gen_range(-1.0..1.0)),
        )
    }

    fn permute_graph(g: &Graph, perm: &[usize]) -> Graph {
        // perm[old] = new
        let mut edges: Vec<(usize, usize)> = g
            .edges
            .iter()
            .map(|&(u, v)| {
                let (a, b) = (perm[u], perm[v]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        let mut feats = Matrix::zeros(g.num_nodes, g.node_features.cols());
        for old in 0..g.num_nodes {
            feats
                .row_mut(perm[old])
                .copy_from_slice(g.node_features.row(old));
        }
        let mut out = Graph::new(g.num_nodes, edges);
        out.node_features = feats;
        out
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = EncoderConfig::default();
        let g = random_graph(7, &mut rng, 4);
        let params = EncoderParams::init(&cfg, 4, &mut rng);

        let mut perm: Vec<usize> = (0..7).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let gp = permute_graph(&g, &perm);

        let tape = Tape::new();
        let tp = params.to_tape(&tape, false);
        let z1 = encode(&cfg, &tp, &make_batch(&[&g]), &tape).unwrap().value();
        let z2 = encode(&cfg, &tp, &make_batch(&[&gp]), &tape).unwrap().value();
        assert!(z1.max_abs_diff(&z2) < 1e-9);
    }

    #[test]
    fn duplicated_graph_gives_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EncoderConfig::default();
        let g = random_graph(5, &mut rng, 3);
        let params = EncoderParams::init(&cfg, 3, &mut rng);
        let tape = Tape::new();
        let tp = params.to_tape(&tape, false);
        let z = encode(&cfg, &tp, &make_batch(&[&g, &g]), &tape).unwrap().value();
        let diff: f64 = (0..z.cols())
            .map(|j| (z.get(0, j) - z.get(1, j)).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn normalized_embeddings_have_unit_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = EncoderConfig::default();
        let g = random_graph(6, &mut rng, 3);
        let params = EncoderParams::init(&cfg, 3, &mut rng);
        let tape = Tape::new();
        let tp = params.to_tape(&tape, false);
        let z = encode(&cfg, &tp, &make_batch(&[&g]), &tape).unwrap().value();
        let norm: f64 = z.row(0).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encoder_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = EncoderConfig {
            num_layers: 2,
            hidden: 3,
            embed_dim: 2,
            readout: Readout::Sum,
            normalize_embeddings: true,
        };
        let graphs: Vec<Graph> = (0..3).map(|_| random_graph(4, &mut rng, 3)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let params = EncoderParams::init(&cfg, 3, &mut rng);
        let probe = Matrix::from_fn(3, 2, |i, j| ((i * 2 + j) as f64 * 0.37).sin());

        let loss_for = |p: &EncoderParams| {
            let tape = Tape::new();
            let tp = p.to_tape(&tape, true);
            let z = encode(&cfg, &tp, &make_batch(&refs), &tape).unwrap();
            let loss = z.mul_const(&probe).unwrap().sum_all();
            (tape, tp, loss)
        };

        let (_tape, tp, loss) = loss_for(&params);
        loss.backward().unwrap();
        let analytic: Vec<Matrix> = tp
            .tensors()
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols())))
            .collect();

        let h = 1e-5;
        // check a sample of entries in the first layer and projection weights
        for (pi, (i, j)) in [(0usize, (0usize, 0usize)), (0, (2, 1)), (8, (1, 1)), (10, (2, 0))] {
            let mut plus = params.clone();
            let mut minus = params.clone();
            {
                let mut ms = plus.matrices_mut();
                let v = ms[pi].get(i, j);
                ms[pi].set(i, j, v + h);
            }
            {
                let mut ms = minus.matrices_mut();
                let v = ms[pi].get(i, j);
                ms[pi].set(i, j, v - h);
            }
            let f = |p: &EncoderParams| {
                let (_t, _tp, l) = loss_for(p);
                l.scalar_value()
            };
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an = analytic[pi].get(i, j);
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                ((fd - an) / denom).abs() < 1e-4,
                "param {pi} entry ({i},{j}): fd={fd} analytic={an}"
            );
        }
    }
}
