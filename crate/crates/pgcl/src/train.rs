//! The optimization loop: batch → two augmented views → shared encoder →
//! prototype scores → Sinkhorn targets (off-tape) → combined loss →
//! optimizer update of encoder parameters and prototypes → prototype
//! renormalization.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, AugmentConfig, AugmentKind};
use crate::encoder::{encode, EncoderConfig, EncoderParams};
use crate::error::{PgclError, Result};
use crate::graphdata::{make_batch, Dataset, FeatureMode, Graph};
use crate::losses::{combined, BatchViews, LossConfig};
use crate::matrix::Matrix;
use crate::prototypes::{hard_assign, prototype_scores, sinkhorn, PrototypeBank, SinkhornConfig};
use crate::tensor::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Full training configuration; everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub num_prototypes: usize,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub sinkhorn: SinkhornConfig,
    pub aug1: AugmentConfig,
    pub aug2: AugmentConfig,
    /// Write an epoch-tagged checkpoint every this many epochs.
    pub ckpt_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 20,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            num_prototypes: 10,
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            sinkhorn: SinkhornConfig::default(),
            aug1: AugmentConfig::new(AugmentKind::NodeDrop, 0.2),
            aug2: AugmentConfig::new(AugmentKind::EdgePerturb, 0.2),
            ckpt_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(PgclError::Config(format!(
                "batch_size {} must be >= 2",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(PgclError::Config("epochs must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(PgclError::Config(format!("lr {} must be > 0", self.lr)));
        }
        if self.num_prototypes == 0 {
            return Err(PgclError::Config("num-prototypes must be >= 1".into()));
        }
        if self.loss.tau <= 0.0 {
            return Err(PgclError::Config(format!(
                "tau {} must be > 0",
                self.loss.tau
            )));
        }
        if self.loss.lambda < 0.0 {
            return Err(PgclError::Config(format!(
                "lambda {} must be >= 0",
                self.loss.lambda
            )));
        }
        if self.sinkhorn.eps <= 0.0 || self.sinkhorn.niters == 0 {
            return Err(PgclError::Config(
                "sinkhorn eps must be > 0 and iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// First- and second-moment buffers for Adam; empty for plain SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, shapes: &[(usize, usize)]) -> Self {
        let buffers = || {
            shapes
                .iter()
                .map(|&(r, c)| Matrix::zeros(r, c))
                .collect::<Vec<_>>()
        };
        match kind {
            OptimizerKind::Adam => Optimizer {
                kind,
                m: buffers(),
                v: buffers(),
                t: 0,
            },
            OptimizerKind::Sgd => Optimizer {
                kind,
                m: Vec::new(),
                v: Vec::new(),
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) {
        assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..g.data().len() {
                        let gv = g.data()[i];
                        let mv = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gv;
                        let vv = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gv * gv;
                        m.data_mut()[i] = mv;
                        v.data_mut()[i] = vv;
                        let mhat = mv / bc1;
                        let vhat = vv / bc2;
                        p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Everything mutable across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: EncoderParams,
    pub bank: PrototypeBank,
    pub optimizer: Optimizer,
    /// Next epoch to run (0-based).
    pub next_epoch: usize,
    /// Global step counter.
    pub step: u64,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig, feature_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x1));
        let params = EncoderParams::init(&cfg.encoder, feature_dim, &mut rng);
        let bank = PrototypeBank::init(cfg.num_prototypes, cfg.encoder.embed_dim, &mut rng);
        let mut shapes: Vec<(usize, usize)> = params.matrices().iter().map(|m| m.shape()).collect();
        shapes.push(bank.c.shape());
        let optimizer = Optimizer::new(cfg.optimizer, &shapes);
        TrainState {
            params,
            bank,
            optimizer,
            next_epoch: 0,
            step: 0,
        }
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Diagnostics of one optimization step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub loss_reweighted: f64,
    pub loss_consistency: f64,
    /// Hard-assignment counts per prototype for the view-1 targets.
    pub cluster_histogram: Vec<usize>,
    /// Max |row sum − 1| over both views' Sinkhorn targets.
    pub q_row_sum_err: f64,
    /// Min/max per-prototype share of target mass, over both views.
    pub q_col_frac_min: f64,
    pub q_col_frac_max: f64,
}

/// The line format of `train_log.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogRecord {
    step: u64,
    epoch: usize,
    loss: f64,
    loss_reweighted: f64,
    loss_consistency: f64,
    cluster_histogram: Vec<usize>,
}

impl LogRecord {
    fn of(r: &StepReport) -> Self {
        LogRecord {
            step: r.step,
            epoch: r.epoch,
            loss: r.loss,
            loss_reweighted: r.loss_reweighted,
            loss_consistency: r.loss_consistency,
            cluster_histogram: r.cluster_histogram.clone(),
        }
    }
}

/// One optimization step over `batch` (graphs paired with their dataset
/// indices, so augmentation streams do not depend on batch composition).
pub fn train_step(
    state: &mut TrainState,
    batch: &[(usize, &Graph)],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<StepReport> {
    let n = batch.len();
    if n < 2 {
        return Err(PgclError::Contract(format!(
            "train_step needs >= 2 graphs, got {n}"
        )));
    }

    let views: Vec<(Graph, Graph)> = batch
        .iter()
        .map(|&(idx, g)| make_views(g, &cfg.aug1, &cfg.aug2, cfg.seed, epoch as u64, idx as u64))
        .collect();
    let mut packed_refs: Vec<&Graph> = views.iter().map(|(a, _)| a).collect();
    packed_refs.extend(views.iter().map(|(_, b)| b));
    let packed = make_batch(&packed_refs);

    let tape = Tape::new();
    let tp = state.params.to_tape(&tape, true);
    let c = tape.var(state.bank.c.clone());

    let z_all = encode(&cfg.encoder, &tp, &packed, &tape)?;
    let scores_all = prototype_scores(&z_all, &c)?;
    let z = z_all.slice_rows(0, n)?;
    let zp = z_all.slice_rows(n, n)?;
    let s1 = scores_all.slice_rows(0, n)?;
    let s2 = scores_all.slice_rows(n, n)?;

    // cluster targets, off the tape
    let q = sinkhorn(&s1.value(), &cfg.sinkhorn)?;
    let qp = sinkhorn(&s2.value(), &cfg.sinkhorn)?;
    let clusters = hard_assign(&q.assignments);

    let p = s1.row_softmax(cfg.loss.tau)?;
    let pp = s2.row_softmax(cfg.loss.tau)?;

    let batch_views = BatchViews {
        z,
        zp,
        p,
        pp,
        q: q.assignments.clone(),
        qp: qp.assignments.clone(),
        clusters: clusters.clone(),
    };
    let loss = combined(&batch_views, &state.bank, &cfg.loss)?;
    let loss_value = loss.total.scalar_value();
    if !loss_value.is_finite() {
        return Err(PgclError::NonFiniteLoss {
            epoch,
            step: state.step as usize,
            detail: format!(
                "loss {loss_value}, contrastive {}, consistency {}",
                loss.contrastive, loss.consistency
            ),
        });
    }
    loss.total.backward()?;

    let mut grads: Vec<Matrix> = tp
        .tensors()
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols())))
        .collect();
    grads.push(
        c.grad()
            .unwrap_or_else(|| Matrix::zeros(c.rows(), c.cols())),
    );
    {
        let mut params: Vec<&mut Matrix> = state.params.matrices_mut();
        params.push(&mut state.bank.c);
        state.optimizer.step(&mut params, &grads, cfg.lr);
    }
    let mut renorm_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x7e20 ^ state.step));
    state.bank.renormalize(&mut renorm_rng);

    let k = cfg.num_prototypes;
    let mut histogram = vec![0usize; k];
    for &ci in &clusters {
        histogram[ci] += 1;
    }
    let mut row_err = 0.0f64;
    let mut col_min = f64::INFINITY;
    let mut col_max = 0.0f64;
    for a in [&q.assignments, &qp.assignments] {
        for rs in a.row_sums() {
            row_err = row_err.max((rs - 1.0).abs());
        }
        for cs in a.col_sums() {
            let frac = cs / n as f64;
            col_min = col_min.min(frac);
            col_max = col_max.max(frac);
        }
    }

    let report = StepReport {
        step: state.step,
        epoch,
        loss: loss_value,
        loss_reweighted: loss.contrastive,
        loss_consistency: loss.consistency,
        cluster_histogram: histogram,
        q_row_sum_err: row_err,
        q_col_frac_min: col_min,
        q_col_frac_max: col_max,
    };
    state.step += 1;
    Ok(report)
}

/// A finished (or checkpoint-resumed) training run.
pub struct TrainRun {
    pub state: TrainState,
    pub reports: Vec<StepReport>,
    pub checkpoint_path: PathBuf,
}

/// Serialized snapshot of a run, sufficient to resume it or evaluate it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dataset: String,
    pub feature_mode: FeatureMode,
    pub feature_dim: usize,
    pub config: TrainConfig,
    pub state: TrainState,
}

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string(ckpt)?;
    fs::write(path, json).map_err(|e| PgclError::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)
        .map_err(|e| PgclError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| PgclError::Checkpoint(format!("cannot parse {}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(PgclError::Checkpoint(format!(
            "checkpoint version {} unsupported (expected {})",
            ckpt.version, CHECKPOINT_VERSION
        )));
    }
    Ok(ckpt)
}

/// Train from scratch. The dataset must already have features built.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, out_dir: &Path) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.graphs.is_empty() {
        return Err(PgclError::Config("dataset is empty".into()));
    }
    let state = TrainState::init(cfg, dataset.meta.feature_dim);
    train_from(dataset, cfg, state, out_dir)
}

/// Continue training from an existing state (possibly a loaded checkpoint).
pub fn train_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut state: TrainState,
    out_dir: &Path,
) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.meta.feature_dim != state.params.feature_dim {
        return Err(PgclError::Checkpoint(format!(
            "dataset feature dim {} != checkpoint feature dim {}",
            dataset.meta.feature_dim, state.params.feature_dim
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| PgclError::io(out_dir.display().to_string(), e))?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| PgclError::io(log_path.display().to_string(), e))?;

    let feature_mode = dataset
        .meta
        .feature_source
        .ok_or_else(|| PgclError::Config("dataset has no features built".into()))?;
    let make_ckpt = |state: &TrainState| Checkpoint {
        version: CHECKPOINT_VERSION,
        dataset: dataset.meta.name.clone(),
        feature_mode,
        feature_dim: dataset.meta.feature_dim,
        config: cfg.clone(),
        state: state.clone(),
    };

    let mut reports = Vec::new();
    let num_graphs = dataset.graphs.len();
    for epoch in state.next_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..num_graphs).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x50ff ^ epoch as u64));
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // a trailing singleton has no negatives
            }
            let batch: Vec<(usize, &Graph)> =
                chunk.iter().map(|&i| (i, &dataset.graphs[i])).collect();
            let report = train_step(&mut state, &batch, cfg, epoch)?;
            let line = serde_json::to_string(&LogRecord::of(&report))?;
            writeln!(log, "{line}").map_err(|e| PgclError::io(log_path.display().to_string(), e))?;
            reports.push(report);
        }
        state.next_epoch = epoch + 1;
        if let Some(every) = cfg.ckpt_every {
            if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < cfg.epochs {
                let path = out_dir.join(format!("checkpoint-epoch-{}.json", epoch + 1));
                save_checkpoint(&path, &make_ckpt(&state))?;
            }
        }
    }

    let checkpoint_path = out_dir.join("checkpoint.json");
    save_checkpoint(&checkpoint_path, &make_ckpt(&state))?;
    Ok(TrainRun {
        state,
        reports,
        checkpoint_path,
    })
}
