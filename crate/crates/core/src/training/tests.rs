use super::grid::select_best;
use super::*;
use crate::cells::StackConfig;
use crate::corpus::{build_corpus, Split};
use crate::grammar::{GrammarParams, TruncationLimits};
use crate::training::{GridEntry, GridSpec};

fn stream(tokens: usize, split: Split, seed: u64) -> TokenStream {
    let p = GrammarParams::new(0.3, 0.3).unwrap();
    build_corpus(&p, &TruncationLimits::unlimited(), tokens, split, seed).unwrap()
}

fn quick(epochs: usize) -> TrainingConfig {
    TrainingConfig { epochs: Some(epochs), seed: 4, ..Default::default() }
}

#[test]
fn first_window_is_uniform_and_one_epoch_learns() {
    let (tr, va) = (stream(30_000, Split::Train, 1), stream(3_000, Split::Valid, 2));
    let cfg = ModelConfig::new(Architecture::Lstm, 1, 16, 8, 0.1);
    let out = train(&cfg, &quick(1), &tr, &va).unwrap();
    assert!((out.first_loss - 26f64.ln()).abs() < 0.15, "{}", out.first_loss);
    assert!(out.curve[0].valid_ppl < 26.0, "{:?}", out.curve);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let (tr, va) = (stream(4_000, Split::Train, 1), stream(500, Split::Valid, 2));
    let cfg = ModelConfig::new(Architecture::Gru, 2, 4, 4, 0.3);
    let a = train(&cfg, &quick(2), &tr, &va).unwrap();
    let b = train(&cfg, &quick(2), &tr, &va).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
}

#[test]
fn returned_checkpoint_is_the_epoch_best() {
    let (tr, va) = (stream(4_000, Split::Train, 3), stream(500, Split::Valid, 4));
    let cfg = ModelConfig::new(Architecture::Srn, 1, 8, 4, 0.1);
    let out = train(&cfg, &quick(4), &tr, &va).unwrap();
    let best = out.checkpoint.provenance.valid_ppl.unwrap();
    assert!(out.curve.iter().all(|m| best <= m.valid_ppl));
    assert_eq!(perplexity(&out.checkpoint.model, &va), best);
}

#[test]
fn uniform_model_has_perplexity_26() {
    let m = Model::zeros(ModelConfig::new(Architecture::Lstm, 1, 4, 4, 0.1)).unwrap();
    let ppl = perplexity(&m, &stream(2_000, Split::Test, 5));
    assert!((ppl - 26.0).abs() < 1e-9, "{ppl}");
}

#[test]
fn perplexity_ignores_chunking() {
    let m = Model::new(ModelConfig::new(Architecture::Stacklstm, 1, 4, 4, 0.1), 3).unwrap();
    let s = stream(1_500, Split::Test, 6);
    let a = stream_nll(&m, s.ids(), 7);
    let b = stream_nll(&m, s.ids(), 10_000);
    assert_eq!(a, b);
}

#[test]
fn divergence_is_reported() {
    let (tr, va) = (stream(3_000, Split::Train, 1), stream(300, Split::Valid, 2));
    let cfg = ModelConfig::new(Architecture::Srn, 1, 4, 4, 0.1);
    let t = TrainingConfig { lr: 1e300, ..quick(2) };
    assert!(matches!(train(&cfg, &t, &tr, &va), Err(TrainError::Diverged { .. })));
}

#[test]
fn config_validation_and_epoch_rule() {
    let t = TrainingConfig::default();
    assert_eq!(t.epochs_for(Architecture::Lstm), 20);
    assert_eq!(t.epochs_for(Architecture::Stackrnn), 3);
    assert!(TrainingConfig { bptt: 0, ..t }.validate().is_err());
    assert!(TrainingConfig { clip: Some(0.0), ..t }.validate().is_err());
}

#[test]
fn grid_sizes() {
    assert_eq!(GridSpec::full().configs(Architecture::Lstm).len(), 48);
    assert_eq!(GridSpec::full().configs(Architecture::Onlstm).len(), 96);
    assert_eq!(GridSpec::reduced().configs(Architecture::Srn).len(), 4);
}

#[test]
fn single_and_duplicate_configs() {
    let (tr, va) = (stream(3_000, Split::Train, 1), stream(400, Split::Valid, 2));
    let cfg = ModelConfig::new(Architecture::Lstm, 1, 4, 4, 0.1);
    let one = grid_over(&[cfg], &tr, &va, &quick(1), 1).unwrap();
    assert_eq!(one.best, Some(0));
    let dup = grid_over(&[cfg, cfg], &tr, &va, &quick(1), 2).unwrap();
    assert_eq!(dup.entries[0].valid_ppl, dup.entries[1].valid_ppl);
    assert!(grid_over(&[], &tr, &va, &quick(1), 1).is_err());
}

#[test]
fn stack_model_trains_a_window() {
    let (tr, va) = (stream(2_000, Split::Train, 1), stream(200, Split::Valid, 2));
    let cfg = ModelConfig::new(Architecture::Stackrnn, 1, 4, 4, 0.1)
        .with_stack(StackConfig { n_stacks: 1, depth: 8, noop: true });
    let out = train(&cfg, &quick(1), &tr, &va).unwrap();
    assert!(out.curve[0].valid_ppl.is_finite());
}

fn entry(ppl: Option<f64>, params: usize, layers: usize) -> GridEntry {
    GridEntry {
        config: ModelConfig::new(Architecture::Lstm, layers, 4, 4, 0.1),
        parameter_count: params,
        valid_ppl: ppl,
        curve: Vec::new(),
        checkpoint: None,
        error: None,
    }
}

#[test]
fn best_selection_breaks_ties() {
    assert_eq!(select_best(&[entry(Some(5.0), 10, 1), entry(Some(4.0), 99, 2)]), Some(1));
    assert_eq!(select_best(&[entry(Some(4.0), 20, 1), entry(Some(4.0), 10, 2)]), Some(1));
    assert_eq!(select_best(&[entry(Some(4.0), 10, 2), entry(Some(4.0), 10, 1)]), Some(1));
    assert_eq!(select_best(&[entry(None, 1, 1), entry(Some(9.0), 10, 1)]), Some(1));
    assert_eq!(select_best(&[entry(None, 1, 1)]), None);
}

#[test]
fn metrics_csv_roundtrip() {
    let curve = vec![
        EpochMetrics { epoch: 1, train_loss: 2.5, valid_ppl: 11.25 },
        EpochMetrics { epoch: 2, train_loss: 1.0 / 3.0, valid_ppl: 7.0 },
    ];
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &curve).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("epoch,train_loss,valid_ppl\n"));
    assert_eq!(read_metrics_csv(&buf[..]).unwrap(), curve);
}
