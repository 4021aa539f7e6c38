//! Components checked against independent reference computations.

use std::sync::Arc;

use rand::Rng;
use reviewrank_core::conv::{precompute_representations, ConvConfig, TextFeatureModel};
use reviewrank_core::data::{split_user_level, Dataset, Interaction};
use reviewrank_core::eval::retrieve_top_m;
use reviewrank_core::linalg::Matrix;
use reviewrank_core::mf::LatentFactorModel;
use reviewrank_core::model::{Gradients, Parameterized, Scorer};
use reviewrank_core::optim::{Adam, AdamConfig, Optimizer};
use reviewrank_core::pv::{GenerativeCoupling, JrlModel};
use reviewrank_core::rng::{seeded, Rng64};
use reviewrank_core::synth::{block_dataset, BlockConfig};
use reviewrank_core::text::{
    build_vocab, Corpus, Document, DocumentBuilder, EmbeddingTable, Owner, Tokenizer, DEFAULT_DOC_CAP,
};
use reviewrank_core::topic::{gibbs_resample_assignments, AssignmentMode, TopicState};
use reviewrank_core::train::{sample_negatives, TrainConfig, Trainer};

#[test]
fn negative_sampling_is_uniform_over_the_complement() {
    let n_items = 10_000;
    let positives: Vec<usize> = (0..n_items).filter(|i| i % 7 == 3).collect();
    let mut rng = seeded(5);
    let draws = sample_negatives(0, &positives, n_items, 100_000, &mut rng).unwrap();
    let mut counts = vec![0u64; n_items];
    for &j in &draws {
        counts[j] += 1;
    }
    for &p in &positives {
        assert_eq!(counts[p], 0);
    }
    let support = (n_items - positives.len()) as f64;
    let expected = draws.len() as f64 / support;
    let chi2: f64 = (0..n_items)
        .filter(|i| positives.binary_search(i).is_err())
        .map(|i| (counts[i] as f64 - expected).powi(2) / expected)
        .sum();
    let df = support - 1.0;
    assert!((chi2 - df).abs() < 3.0 * (2.0 * df).sqrt(), "chi2 {chi2} df {df}");
    // Overall mass on each half of the complement within 3 sigma.
    let low = draws.iter().filter(|&&j| j < n_items / 2).count() as f64;
    let p_low = (0..n_items / 2).filter(|i| positives.binary_search(i).is_err()).count() as f64 / support;
    let sd = (draws.len() as f64 * p_low * (1.0 - p_low)).sqrt();
    assert!((low - draws.len() as f64 * p_low).abs() < 3.0 * sd);
}

#[test]
fn sampled_topics_follow_the_posterior() {
    let theta = [0.1, 0.4, 0.2, 0.3];
    let phi_col = [0.5, 0.1, 0.3, 0.2];
    let mut phi = Matrix::zeros(4, 2);
    for k in 0..4 {
        phi.set(k, 0, phi_col[k]);
        phi.set(k, 1, 1.0 - phi_col[k]);
    }
    let thetas = Matrix::from_vec(1, 4, theta.to_vec());
    let docs = vec![Document::new(vec![0; 10_000])];
    let mut state = TopicState { phi, kappa: 1.0, assignments: vec![] };
    let mut rng = seeded(17);
    gibbs_resample_assignments(&mut state, &docs, &thetas, AssignmentMode::Sample, &mut rng);
    let mut counts = [0f64; 4];
    for &z in &state.assignments[0] {
        counts[z as usize] += 1.0;
    }
    let w: Vec<f64> = (0..4).map(|k| theta[k] * phi_col[k]).collect();
    let total: f64 = w.iter().sum();
    let chi2: f64 = (0..4)
        .map(|k| {
            let e = 10_000.0 * w[k] / total;
            (counts[k] - e).powi(2) / e
        })
        .sum();
    // 99.9% quantile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.27, "chi2 {chi2}");

    gibbs_resample_assignments(&mut state, &docs, &thetas, AssignmentMode::Hard, &mut rng);
    assert!(state.assignments[0].iter().all(|&z| z == 2));
}

#[test]
fn retrieval_matches_a_full_sort() {
    for seed in 0..50 {
        let mut rng = seeded(1000 + seed);
        let n_items = rng.gen_range(5..80);
        let mut mf = LatentFactorModel::new(2, n_items, 3, &mut rng);
        if seed % 5 == 0 {
            // heavy ties
            mf.blocks_mut()[1].fill(0.0);
        }
        let exclusions: Vec<usize> = (0..n_items).filter(|_| rng.gen_bool(0.3)).collect();
        let m = rng.gen_range(0..n_items + 3);
        for u in 0..2 {
            let mut all: Vec<(f64, usize)> = (0..n_items)
                .filter(|i| !exclusions.contains(i))
                .map(|i| (mf.score(u, i), i))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all.into_iter().take(m).map(|p| p.1).collect();
            assert_eq!(retrieve_top_m(&mf, u, m, &exclusions), expect);
        }
    }
}

#[test]
fn adam_rests_at_a_stationary_point() {
    let mut x = Matrix::from_vec(2, 1, vec![3.0, -1.0]);
    let mut adam = Adam::new(AdamConfig::new(0.05), &[&x]);
    let mut grads = Gradients { blocks: vec![reviewrank_core::model::GradBlock::zeros(2, 1)] };
    // Zero gradient on a touched row leaves it exactly in place.
    grads.blocks[0].row_mut(0)[0] = 0.0;
    adam.step(&mut [&mut x], &grads);
    assert_eq!(x.as_slice(), &[3.0, -1.0]);
    // Minimize (x - 3)^2 from -1 on row 1; row 0 is never touched again.
    for _ in 0..4000 {
        let g = 2.0 * (x.get(1, 0) - 3.0);
        grads.clear();
        grads.blocks[0].row_mut(1)[0] = g;
        adam.step(&mut [&mut x], &grads);
    }
    assert_eq!(x.get(0, 0), 3.0);
    assert!((x.get(1, 0) - 3.0).abs() < 1e-3, "{}", x.get(1, 0));
}

#[test]
fn adam_first_step_is_sign_scaled() {
    let mut x = Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]);
    let cfg = AdamConfig::new(0.1);
    let mut adam = Adam::new(cfg, &[&x]);
    let mut grads = Gradients { blocks: vec![reviewrank_core::model::GradBlock::zeros(1, 3)] };
    grads.blocks[0].row_mut(0).copy_from_slice(&[2.0, -0.5, 1e-3]);
    adam.step(&mut [&mut x], &grads);
    for (k, g) in [2.0f64, -0.5, 1e-3].iter().enumerate() {
        let expect = -0.1 * g / (g.abs() + cfg.epsilon);
        assert!((x.get(0, k) - expect).abs() < 1e-12);
    }
}

fn reviewed_block() -> Dataset {
    Dataset::from_interactions(block_dataset(&BlockConfig { users: 60, items: 40, clusters: 4, ..BlockConfig::default() }))
}

#[test]
fn text_free_joint_model_is_plain_mf() {
    let ds = reviewed_block();
    let split = split_user_level(&ds, 0.7, 3);
    let tok = Tokenizer::default();
    let vocab = build_vocab(&tok, &split.train, 1000);
    let corpus = Arc::new(DocumentBuilder::new(&tok, &vocab, &split).corpus(DEFAULT_DOC_CAP));
    let cfg = TrainConfig { epochs: 3, batch_size: 64, negatives_per_positive: 2, ..TrainConfig::default() };

    let mut rng = seeded(9);
    let mut mf = LatentFactorModel::new(ds.n_users(), ds.n_items(), 8, &mut rng);
    let mut rng = seeded(9);
    let factors = LatentFactorModel::new(ds.n_users(), ds.n_items(), 8, &mut rng);
    let words = EmbeddingTable::random(vocab.len(), 8, &mut rng);
    let mut jrl = JrlModel::new(factors, words, corpus, GenerativeCoupling { lambda_text: 0.0, ..GenerativeCoupling::default() });

    Trainer::new(cfg.clone(), &split.train, &mf).unwrap().fit(&mut mf).unwrap();
    Trainer::new(cfg, &split.train, &jrl).unwrap().fit(&mut jrl).unwrap();
    for b in 0..3 {
        let a: Vec<u64> = mf.blocks()[b].as_slice().iter().map(|x| x.to_bits()).collect();
        let c: Vec<u64> = jrl.blocks()[b].as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, c, "block {b}");
    }
}

#[test]
fn cached_text_scores_match_direct_encoding() {
    let mut rng = seeded(21);
    let vocab = 30;
    let doc = |rng: &mut Rng64| Document::new((0..rng.gen_range(0..25)).map(|_| rng.gen_range(0..vocab as u32)).collect());
    let corpus = Arc::new(Corpus {
        user_docs: (0..40).map(|_| doc(&mut rng)).collect(),
        item_docs: (0..50).map(|_| doc(&mut rng)).collect(),
        vocab_size: vocab,
    });
    let mut model = TextFeatureModel::new(corpus, 50, 6, ConvConfig { word_dim: 5, n_filters: 8, window: 3, dropout: 0.5 }, &mut rng);
    model.item_bias = Matrix::uniform(50, 1, 0.3, &mut rng);
    let cache = precompute_representations(&model);
    assert!(cache.check(&model).is_ok());
    for _ in 0..1000 {
        let (u, i) = (rng.gen_range(0..40), rng.gen_range(0..50));
        assert!((cache.score(u, i) - model.score(u, i)).abs() < 1e-12);
    }
    model.blocks_mut();
    assert!(cache.is_stale(&model));
    assert!(cache.check(&model).is_err());
}

#[test]
fn documents_stop_at_the_token_cap() {
    let words = |prefix: &str| (0..600).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>().join(" ");
    let ds = Dataset::from_interactions(vec![
        Interaction::new("alice", "book", 5.0, &words("first")).at(1),
        Interaction::new("alice", "lamp", 4.0, &words("second")).at(2),
        Interaction::new("alice", "pen", 4.0, "unused").at(3),
        Interaction::new("bob", "book", 3.0, "short words").at(1),
        Interaction::new("bob", "pen", 3.0, "more").at(2),
    ]);
    let split = split_user_level(&ds, 0.99, 1);
    assert!(split.test.is_empty());
    let tok = Tokenizer::from_stopword_list("");
    let vocab = build_vocab(&tok, &split.train, 5000);
    let builder = DocumentBuilder::new(&tok, &vocab, &split);
    let alice = builder.build(Owner::User(ds.user_id("alice").unwrap()), DEFAULT_DOC_CAP);
    assert_eq!(alice.len(), 1000);
    assert_eq!(alice.tokens[0], vocab.id("first0"));
    assert_eq!(alice.tokens[599], vocab.id("first599"));
    assert_eq!(alice.tokens[600], vocab.id("second0"));
    assert_eq!(alice.tokens[999], vocab.id("second399"));
    let book = builder.build(Owner::Item(ds.item_id("book").unwrap()), DEFAULT_DOC_CAP);
    assert_eq!(book.len(), 602);
}
