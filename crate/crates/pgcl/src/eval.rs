//! Downstream evaluation: freeze the encoder, embed every graph, and score
//! the embeddings with an L2-regularized multinomial logistic classifier
//! under stratified k-fold cross-validation repeated several times.
//!
//! The regularization grid is expressed as C values (inverse strength,
//! matching the usual SVM convention); each fold picks its C on an inner
//! validation split of the training portion, ties going to the smaller C.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, EncoderConfig, EncoderParams};
use crate::error::{PgclError, Result};
use crate::graphdata::{make_batch, stratified_folds, Dataset};
use crate::matrix::Matrix;
use crate::tensor::Tape;

/// Evaluation protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Inverse regularization grid, ascending.
    pub c_grid: Vec<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            repeats: 5,
            seed: 0,
            c_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            max_iters: 5000,
            grad_tol: 1e-6,
        }
    }
}

/// Accuracy of one (repeat, fold) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub chosen_c: f64,
}

/// The full evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub folds: usize,
    pub repeats: usize,
    pub scores: Vec<FoldScore>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub runtime_secs: f64,
}

impl EvalReport {
    fn aggregate(dataset: &str, folds: usize, repeats: usize, scores: Vec<FoldScore>, secs: f64) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().map(|s| s.accuracy).sum::<f64>() / n;
        let var = scores
            .iter()
            .map(|s| (s.accuracy - mean).powi(2))
            .sum::<f64>()
            / n;
        EvalReport {
            dataset: dataset.to_string(),
            folds,
            repeats,
            scores,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            runtime_secs: secs,
        }
    }
}

/// Deterministic no-augmentation forward over the whole dataset, in dataset
/// order and without gradient tracking. Returns embeddings and labels.
pub fn embed_all(
    dataset: &Dataset,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<(Matrix, Vec<usize>)> {
    if dataset.meta.feature_dim != params.feature_dim {
        return Err(PgclError::Checkpoint(format!(
            "dataset feature dim {} does not match checkpoint feature dim {}",
            dataset.meta.feature_dim, params.feature_dim
        )));
    }
    let num = dataset.graphs.len();
    let mut embeddings = Matrix::zeros(num, cfg.embed_dim);
    const CHUNK: usize = 256;
    let mut row = 0usize;
    for chunk in dataset.graphs.chunks(CHUNK) {
        let refs: Vec<&crate::graphdata::Graph> = chunk.iter().collect();
        let batch = make_batch(&refs);
        let tape = Tape::new();
        let tp = params.to_tape(&tape, false);
        let z = encode(cfg, &tp, &batch, &tape)?.value();
        for i in 0..z.rows() {
            embeddings.row_mut(row).copy_from_slice(z.row(i));
            row += 1;
        }
    }
    let labels = dataset.labels();
    Ok((embeddings, labels))
}

/// Multinomial logistic regression weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// D×C weight matrix.
    pub weights: Matrix,
    /// 1×C bias row (unregularized).
    pub bias: Matrix,
    pub num_classes: usize,
}

fn class_probabilities(model: &LogisticModel, x: &Matrix) -> Matrix {
    x.matmul(&model.weights)
        .add_row_broadcast(&model.bias)
        .row_softmax(1.0)
}

/// Negative mean log-likelihood plus `l2/2 · ‖W‖²`.
fn objective(model: &LogisticModel, x: &Matrix, y: &[usize], l2: f64) -> f64 {
    let probs = class_probabilities(model, x);
    let n = x.rows() as f64;
    let mut nll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        nll -= probs.get(i, yi).max(1e-300).ln();
    }
    let reg = 0.5 * l2 * model.weights.data().iter().map(|w| w * w).sum::<f64>();
    nll / n + reg
}

fn gradients(model: &LogisticModel, x: &Matrix, y: &[usize], l2: f64) -> (Matrix, Matrix) {
    let mut delta = class_probabilities(model, x);
    let n = x.rows() as f64;
    for (i, &yi) in y.iter().enumerate() {
        delta.set(i, yi, delta.get(i, yi) - 1.0);
    }
    let mut gw = x.transpose().matmul(&delta).scale(1.0 / n);
    for (g, w) in gw.data_mut().iter_mut().zip(model.weights.data()) {
        *g += l2 * w;
    }
    let gb = Matrix::from_vec(1, delta.cols(), delta.col_sums()).scale(1.0 / n);
    (gw, gb)
}

/// Fit by full-batch gradient descent with Armijo backtracking line search,
/// from zero initialization, until the gradient norm drops below `tol` or
/// `max_iters` is reached. Fully deterministic.
pub fn fit_logistic(
    x: &Matrix,
    y: &[usize],
    num_classes: usize,
    l2: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LogisticModel> {
    let present: std::collections::BTreeSet<usize> = y.iter().cloned().collect();
    if present.len() < 2 {
        return Err(PgclError::DegenerateFit(format!(
            "training split has {} class(es)",
            present.len()
        )));
    }
    let d = x.cols();
    let mut model = LogisticModel {
        weights: Matrix::zeros(d, num_classes),
        bias: Matrix::zeros(1, num_classes),
        num_classes,
    };
    let mut obj = objective(&model, x, y, l2);
    let mut eta = 1.0f64;
    for _ in 0..max_iters {
        let (gw, gb) = gradients(&model, x, y, l2);
        let gnorm2 = gw.data().iter().map(|g| g * g).sum::<f64>()
            + gb.data().iter().map(|g| g * g).sum::<f64>();
        if gnorm2.sqrt() < tol {
            break;
        }
        // Armijo backtracking: accept obj decrease of at least 1e-4·eta·‖g‖².
        eta = (eta * 2.0).min(1e4);
        let mut accepted = false;
        for _ in 0..60 {
            let trial = LogisticModel {
                weights: model.weights.zip(&gw, |w, g| w - eta * g),
                bias: model.bias.zip(&gb, |b, g| b - eta * g),
                num_classes,
            };
            let trial_obj = objective(&trial, x, y, l2);
            if trial_obj <= obj - 1e-4 * eta * gnorm2 {
                model = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break; // step collapsed to numerical noise
        }
    }
    Ok(model)
}

pub fn predict(model: &LogisticModel, x: &Matrix) -> Vec<usize> {
    class_probabilities(model, x).argmax_rows()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / pred.len() as f64
}

fn rows_of(e: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), e.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(e.row(i));
    }
    out
}

fn labels_of(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Deterministic ~10% per-class validation carve-out of `idx`; classes too
/// small to give anything up stay entirely in the training part.
fn inner_split(labels: &[usize], idx: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &i in idx {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let take = if shuffled.len() >= 2 {
            ((shuffled.len() as f64) * 0.1).round().max(1.0) as usize
        } else {
            0
        };
        val.extend_from_slice(&shuffled[..take]);
        train.extend_from_slice(&shuffled[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// The full protocol on precomputed embeddings.
pub fn evaluate_embeddings(
    name: &str,
    embeddings: &Matrix,
    labels: &[usize],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let start = Instant::now();
    let num_classes = labels.iter().cloned().max().unwrap_or(0) + 1;
    let mut scores = Vec::with_capacity(cfg.folds * cfg.repeats);
    for repeat in 0..cfg.repeats {
        let fold_seed = cfg.seed + repeat as u64;
        let folds = stratified_folds(labels, cfg.folds, fold_seed)?;
        for (fi, (train_idx, test_idx)) in folds.into_iter().enumerate() {
            let (fit_idx, val_idx) =
                inner_split(labels, &train_idx, mix(fold_seed, fi as u64 | 0xa000));
            let x_fit = rows_of(embeddings, &fit_idx);
            let y_fit = labels_of(labels, &fit_idx);
            let x_val = rows_of(embeddings, &val_idx);
            let y_val = labels_of(labels, &val_idx);

            let mut best_c = cfg.c_grid[0];
            let mut best_acc = -1.0;
            for &c in &cfg.c_grid {
                let model = fit_logistic(&x_fit, &y_fit, num_classes, 1.0 / c, cfg.max_iters, cfg.grad_tol)?;
                let acc = accuracy(&predict(&model, &x_val), &y_val);
                if acc > best_acc {
                    best_acc = acc;
                    best_c = c;
                }
            }

            let x_train = rows_of(embeddings, &train_idx);
            let y_train = labels_of(labels, &train_idx);
            let model = fit_logistic(
                &x_train,
                &y_train,
                num_classes,
                1.0 / best_c,
                cfg.max_iters,
                cfg.grad_tol,
            )?;
            let x_test = rows_of(embeddings, &test_idx);
            let y_test = labels_of(labels, &test_idx);
            scores.push(FoldScore {
                repeat,
                fold: fi,
                accuracy: accuracy(&predict(&model, &x_test), &y_test),
                chosen_c: best_c,
            });
        }
    }
    Ok(EvalReport::aggregate(
        name,
        cfg.folds,
        cfg.repeats,
        scores,
        start.elapsed().as_secs_f64(),
    ))
}

/// Embed the dataset with frozen parameters and run the full protocol.
pub fn evaluate(
    dataset: &Dataset,
    params: &EncoderParams,
    encoder_cfg: &EncoderConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let (embeddings, labels) = embed_all(dataset, params, encoder_cfg)?;
    evaluate_embeddings(&dataset.meta.name, &embeddings, &labels, cfg)
}

/// Write embeddings as CSV: `graph_id,label,dim_0..dim_{D-1}` with 17
/// significant digits.
pub fn export_embeddings(embeddings: &Matrix, labels: &[usize], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("graph_id,label");
    for d in 0..embeddings.cols() {
        out.push_str(&format!(",dim_{d}"));
    }
    out.push('\n');
    for i in 0..embeddings.rows() {
        out.push_str(&format!("{i},{}", labels[i]));
        for d in 0..embeddings.cols() {
            out.push_str(&format!(",{:.16e}", embeddings.get(i, d)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PgclError::io(path.display().to_string(), e))
}

/// Parse a file written by [`export_embeddings`].
pub fn import_embeddings(path: &Path) -> Result<(Matrix, Vec<usize>)> {
    let text =
        fs::read_to_string(path).map_err(|e| PgclError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| {
        PgclError::Format {
            file: path.display().to_string(),
            line: 1,
            detail: "empty file".into(),
        }
    })?;
    let dims = header.split(',').count() - 2;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != dims + 2 {
            return Err(PgclError::Format {
                file: path.display().to_string(),
                line: ln + 2,
                detail: format!("expected {} fields, got {}", dims + 2, parts.len()),
            });
        }
        labels.push(parts[1].parse::<usize>().map_err(|_| PgclError::Format {
            file: path.display().to_string(),
            line: ln + 2,
            detail: "bad label".into(),
        })?);
        let mut row = Vec::with_capacity(dims);
        for p in &parts[2..] {
            row.push(p.parse::<f64>().map_err(|_| PgclError::Format {
                file: path.display().to_string(),
                line: ln + 2,
                detail: "bad float".into(),
            })?);
        }
        rows.push(row);
    }
    Ok((Matrix::from_rows(&rows), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn logistic_separates_linear_toy() {
        // two clusters on a line
        let x = Matrix::from_rows(&[
            vec![-2.0, 0.3],
            vec![-1.5, -0.1],
            vec![-1.0, 0.2],
            vec![1.0, -0.2],
            vec![1.5, 0.1],
            vec![2.0, 0.0],
        ]);
        let y = vec![0, 0, 0, 1, 1, 1];
        let model = fit_logistic(&x, &y, 2, 1e-6, 5000, 1e-6).unwrap();
        assert_eq!(predict(&model, &x), y);
    }

    #[test]
    fn logistic_single_class_is_degenerate() {
        let x = Matrix::filled(4, 2, 1.0);
        let y = vec![1, 1, 1, 1];
        assert!(matches!(
            fit_logistic(&x, &y, 2, 0.1, 100, 1e-6),
            Err(PgclError::DegenerateFit(_))
        ));
    }

    #[test]
    fn logistic_line_search_descends_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Matrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        // replicate fit loop, tracking the objective at every accepted step
        let mut model = LogisticModel {
            weights: Matrix::zeros(3, 3),
            bias: Matrix::zeros(1, 3),
            num_classes: 3,
        };
        let mut obj = objective(&model, &x, &y, 0.0);
        let mut eta = 1.0f64;
        for _ in 0..200 {
            let (gw, gb) = gradients(&model, &x, &y, 0.0);
            let gnorm2 = gw.data().iter().map(|g| g * g).sum::<f64>()
                + gb.data().iter().map(|g| g * g).sum::<f64>();
            if gnorm2.sqrt() < 1e-8 {
                break;
            }
            eta = (eta * 2.0).min(1e4);
            loop {
                let trial = LogisticModel {
                    weights: model.weights.zip(&gw, |w, g| w - eta * g),
                    bias: model.bias.zip(&gb, |b, g| b - eta * g),
                    num_classes: 3,
                };
                let tobj = objective(&trial, &x, &y, 0.0);
                if tobj <= obj - 1e-4 * eta * gnorm2 {
                    assert!(tobj <= obj, "objective increased: {tobj} > {obj}");
                    model = trial;
                    obj = tobj;
                    break;
                }
                eta *= 0.5;
                assert!(eta > 1e-30, "line search failed to find descent");
            }
        }
    }

    #[test]
    fn regularization_path_is_monotone_on_train_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Matrix::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..30).map(|_| rng.gen_range(0..2)).collect();
        let mut prev = f64::INFINITY;
        for l2 in [1e-4, 1e-2, 1.0, 1e2] {
            let model = fit_logistic(&x, &y, 2, l2, 5000, 1e-8).unwrap();
            let acc = accuracy(&predict(&model, &x), &y);
            assert!(
                acc <= prev + 1e-9,
                "train accuracy rose with stronger L2: {acc} after {prev}"
            );
            prev = acc;
        }
    }

    #[test]
    fn perfect_embeddings_score_one() {
        // one-hot by class, 30 samples, 3 classes
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let e = Matrix::from_fn(30, 3, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let cfg = EvalConfig {
            folds: 5,
            repeats: 2,
            ..EvalConfig::default()
        };
        let report = evaluate_embeddings("toy", &e, &labels, &cfg).unwrap();
        assert!((report.mean_accuracy - 1.0).abs() < 1e-12);
        assert_eq!(report.scores.len(), 10);
    }

    #[test]
    fn label_independent_features_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut accs = Vec::new();
        for seed in 0..20 {
            let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
            let e = Matrix::from_fn(40, 4, |_, _| rng.gen_range(-1.0..1.0));
            let cfg = EvalConfig {
                folds: 4,
                repeats: 1,
                seed,
                c_grid: vec![1e-3],
                ..EvalConfig::default()
            };
            let report = evaluate_embeddings("noise", &e, &labels, &cfg).unwrap();
            accs.push(report.mean_accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!(
            (mean - 0.5).abs() < 0.15,
            "chance-level check failed: mean {mean}"
        );
    }

    #[test]
    fn report_mean_matches_stored_folds() {
        let labels: Vec<usize> = (0..24).map(|i| i % 2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = Matrix::from_fn(24, 3, |i, _| labels[i] as f64 + rng.gen_range(-0.3..0.3));
        let cfg = EvalConfig {
            folds: 4,
            repeats: 2,
            c_grid: vec![1e-2, 1.0],
            ..EvalConfig::default()
        };
        let report = evaluate_embeddings("toy", &e, &labels, &cfg).unwrap();
        let recomputed =
            report.scores.iter().map(|s| s.accuracy).sum::<f64>() / report.scores.len() as f64;
        assert_eq!(report.mean_accuracy, recomputed);

        // identical inputs give identical reports
        let report2 = evaluate_embeddings("toy", &e, &labels, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&report.scores).unwrap(),
            serde_json::to_string(&report2.scores).unwrap()
        );
    }

    #[test]
    fn export_import_round_trip() {
        let e = Matrix::from_rows(&[
            vec![0.12345678901234567, -3.5e-7],
            vec![1.0 / 3.0, 2.0f64.sqrt()],
        ]);
        let labels = vec![0, 1];
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("embeddings.csv");
        export_embeddings(&e, &labels, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("graph_id,label,dim_0,dim_1"));
        let (e2, labels2) = import_embeddings(&path).unwrap();
        assert_eq!(labels, labels2);
        for i in 0..2 {
            for j in 0..2 {
                let (a, b) = (e.get(i, j), e2.get(i, j));
                assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }
}
