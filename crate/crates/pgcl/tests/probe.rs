use std::path::Path;
use std::rc::Rc;

use pgcl::encoder::{encode, gin_layer_forward, readout, EncoderConfig};
use pgcl::eval::{evaluate_embeddings, EvalConfig};
use pgcl::graphdata::{load_tudataset, build_dataset_features, make_batch, FeatureMode};
use pgcl::matrix::Matrix;
use pgcl::tensor::Tape;
use pgcl::train::{train, TrainConfig, TrainState};

fn embed_post(ds: &pgcl::graphdata::Dataset, params: &pgcl::encoder::EncoderParams, cfg: &EncoderConfig) -> Matrix {
    let refs: Vec<&pgcl::graphdata::Graph> = ds.graphs.iter().collect();
    let batch = make_batch(&refs);
    let tape = Tape::new();
    let tp = params.to_tape(&tape, false);
    encode(cfg, &tp, &batch, &tape).unwrap().value()
}

fn embed_pre(ds: &pgcl::graphdata::Dataset, params: &pgcl::encoder::EncoderParams, cfg: &EncoderConfig) -> Matrix {
    let refs: Vec<&pgcl::graphdata::Graph> = ds.graphs.iter().collect();
    let batch = make_batch(&refs);
    let tape = Tape::new();
    let tp = params.to_tape(&tape, false);
    let neighbors = Rc::new(batch.neighbor_lists());
    let mut h = tape.constant(batch.node_features.clone());
    let mut per_layer = Vec::new();
    for layer in &tp.layers {
        h = gin_layer_forward(&h, &neighbors, layer).unwrap();
        per_layer.push(h.clone());
    }
    readout(&per_layer, &batch, cfg.readout, &tape).unwrap().value()
}

#[test]
#[ignore]
fn probe_variants() {
    let mut ds = load_tudataset(Path::new("../../data"), "MUTAG").unwrap();
    build_dataset_features(&mut ds, FeatureMode::NodeLabels).unwrap();
    let labels = ds.labels();
    let ecfg = EvalConfig { repeats: 2, ..EvalConfig::default() };

    let cfg = TrainConfig::default();
    let state0 = TrainState::init(&cfg, ds.meta.feature_dim);

    let e = embed_post(&ds, &state0.params, &cfg.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("random-init post-proj D=32:  {:.1}%", r.mean_accuracy * 100.0);

    let e = embed_pre(&ds, &state0.params, &cfg.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("random-init pre-proj  D=96:  {:.1}%", r.mean_accuracy * 100.0);

    let tmp = tempfile::tempdir().unwrap();
    let run = train(&ds, &cfg, tmp.path()).unwrap();
    let e = embed_post(&ds, &run.state.params, &cfg.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("trained lr1e-3 post D=32:    {:.1}%", r.mean_accuracy * 100.0);
    let e = embed_pre(&ds, &run.state.params, &cfg.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("trained lr1e-3 pre  D=96:    {:.1}%", r.mean_accuracy * 100.0);

    let cfg2 = TrainConfig { lr: 1e-2, ..TrainConfig::default() };
    let tmp2 = tempfile::tempdir().unwrap();
    let run2 = train(&ds, &cfg2, tmp2.path()).unwrap();
    let e = embed_post(&ds, &run2.state.params, &cfg2.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("trained lr1e-2 post D=32:    {:.1}%", r.mean_accuracy * 100.0);
    let e = embed_pre(&ds, &run2.state.params, &cfg2.encoder);
    let r = evaluate_embeddings("MUTAG", &e, &labels, &ecfg).unwrap();
    println!("trained lr1e-2 pre  D=96:    {:.1}%", r.mean_accuracy * 100.0);
}
