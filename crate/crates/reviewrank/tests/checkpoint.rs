//! Checkpoints reproduce every parameter bit and every score.

use std::sync::Arc;

use proptest::prelude::*;
use reviewrank::checkpoint::{Checkpoint, CheckpointError, FORMAT, VERSION};
use reviewrank::config::{validate_config, ModelKind};
use reviewrank::models::{AnyModel, TextInputs};
use reviewrank_core::data::{split_user_level, Dataset, Split};
use reviewrank_core::linalg::Matrix;
use reviewrank_core::model::{Parameterized, Scorer};
use reviewrank_core::synth::{block_dataset, toy_config};
use reviewrank_core::text::{build_vocab, DocumentBuilder, Tokenizer};

fn fixture() -> (Split, TextInputs) {
    let ds = Dataset::from_interactions(block_dataset(&toy_config()));
    let split = split_user_level(&ds, 0.7, 1);
    let tok = Tokenizer::default();
    let vocab = build_vocab(&tok, &split.train, 500);
    let corpus = Arc::new(DocumentBuilder::new(&tok, &vocab, &split).corpus(200));
    (split, TextInputs { corpus, vocab, pretrained: None })
}

fn blocks(m: &mut AnyModel) -> Vec<&mut Matrix> {
    match m {
        AnyModel::Mf(x) => x.blocks_mut(),
        AnyModel::Gmf(x) => x.blocks_mut(),
        AnyModel::Hft(x) => x.blocks_mut(),
        AnyModel::Jrl(x) => x.blocks_mut(),
        AnyModel::TextCnn(x) => x.blocks_mut(),
    }
}

fn bits(m: &mut AnyModel) -> Vec<u64> {
    blocks(m).iter().flat_map(|b| b.as_slice().iter().map(|x| x.to_bits())).collect()
}

fn checkpoint(model: &AnyModel, split: &Split) -> Checkpoint {
    Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        model: model.kind(),
        dim: model.dim(),
        seed: 5,
        config_hash: "c".into(),
        split_hash: "s".into(),
        users: split.train.users().to_vec(),
        items: split.train.items().to_vec(),
        params: model.to_params(),
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_kind_round_trips_bit_exactly(kind_ix in 0usize..5, values in prop::collection::vec(finite(), 64), seed in any::<u64>()) {
        let (split, text) = fixture();
        let kind = ModelKind::ALL[kind_ix];
        let (cfg, _) = validate_config(
            &format!("model = {kind}\ndim = 4\nword_dim = 3\nn_filters = 4\nseed = {}", seed % 1000),
            &[],
        ).unwrap();
        let mut model = AnyModel::build(&cfg, &split, Some(&text)).unwrap();
        // Overwrite a prefix of every block with arbitrary finite values.
        for b in blocks(&mut model) {
            for (x, v) in b.as_mut_slice().iter_mut().zip(&values) {
                *x = *v;
            }
        }
        let ck = checkpoint(&model, &split);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        prop_assert_eq!(&back, &ck);
        let mut restored = AnyModel::from_params(back.params, Some(text.corpus.clone()), back.seed).unwrap();
        prop_assert_eq!(bits(&mut restored), bits(&mut model));
    }
}

#[test]
fn trained_scores_survive_a_file_round_trip() {
    let (split, text) = fixture();
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let (mut cfg, _) = validate_config(&format!("model = {kind}\ndim = 6\nword_dim = 4\nn_filters = 5\nepochs = 1"), &[]).unwrap();
        cfg.train.batch_size = 64;
        let mut model = AnyModel::build(&cfg, &split, Some(&text)).unwrap();
        model.train(&cfg.train, &split, 1, &mut |_| {}).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        checkpoint(&model, &split).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let restored = AnyModel::from_params(back.params, Some(text.corpus.clone()), back.seed).unwrap();
        for u in 0..split.train.n_users() {
            for i in 0..split.train.n_items() {
                assert_eq!(restored.score(u, i).to_bits(), model.score(u, i).to_bits(), "{kind}");
            }
        }
    }
}

#[test]
fn foreign_files_are_rejected() {
    let (split, text) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = validate_config("dim = 3", &[]).unwrap();
    let model = AnyModel::build(&cfg, &split, Some(&text)).unwrap();
    let mut ck = checkpoint(&model, &split);
    ck.version = VERSION + 1;
    let path = dir.path().join("future.json");
    ck.save(&path).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(CheckpointError::Format { .. })));
    std::fs::write(&path, "{}").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(CheckpointError::Json { .. })));
    assert!(matches!(Checkpoint::load(&dir.path().join("absent.json")), Err(CheckpointError::Io { .. })));
}
