//! Prototypical graph contrastive learning.
//!
//! Self-supervised graph-level representation learning: a GIN encoder is
//! trained without labels by (a) clustering graph embeddings onto a bank of
//! trainable prototype vectors under an equal-partition constraint solved by
//! Sinkhorn-Knopp, (b) enforcing clustering consistency between two augmented
//! views of each graph via swapped prediction, and (c) contrasting views with
//! negatives drawn from other clusters and reweighted by a Gaussian of their
//! prototype distance. Learned embeddings are evaluated by stratified
//! cross-validated linear classification.
//!
//! Module map:
//! - [`tensor`]: dense matrices with reverse-mode autodiff on a per-step tape
//! - [`graphdata`]: TUDataset ingestion, node features, batching, CV folds
//! - [`augment`]: node-dropping / edge-perturbation views
//! - [`encoder`]: GIN message passing, readout, projection head
//! - [`prototypes`]: prototype bank, Sinkhorn targets, negative weights
//! - [`losses`]: InfoNCE, consistency, masked and reweighted contrastive
//! - [`train`]: the optimization loop
//! - [`eval`]: downstream linear-classification protocol
//! - [`cli`]: the `pgcl` command-line entry point

pub mod augment;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graphdata;
pub mod losses;
pub mod matrix;
pub mod prototypes;
pub mod tensor;
pub mod train;

pub use error::{PgclError, Result};
pub use matrix::Matrix;
