//! Tokenization, vocabulary, leakage-safe owner documents and word
//! embedding tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use unicode_normalization::UnicodeNormalization;

use crate::data::{Dataset, Split};
use crate::linalg::Matrix;
use crate::rng::{self, Rng64};

/// Bundled English stopword list, version 1. One token per line.
pub const ENGLISH_STOPWORDS: &str = include_str!("stopwords_en.txt");

pub const OOV_ID: u32 = 0;
pub const OOV_TOKEN: &str = "<oov>";
pub const DEFAULT_VOCAB_CAP: usize = 50_000;
pub const DEFAULT_DOC_CAP: usize = 1_000;

#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: BTreeSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::from_stopword_list(ENGLISH_STOPWORDS)
    }
}

impl Tokenizer {
    /// Stopwords given one per line; blank lines and `#` comments ignored.
    pub fn from_stopword_list(list: &str) -> Self {
        let stopwords = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.nfc().collect::<String>().to_lowercase())
            .collect();
        Self { stopwords }
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// NFC-normalize, lowercase, split on runs of non-alphanumeric
    /// characters, drop stopwords.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let normalized: String = text.nfc().collect::<String>().to_lowercase();
        normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(ToString::to_string)
            .collect()
    }
}

/// Frequency table over tokens.
pub fn count_tokens<'a, I>(tokenizer: &Tokenizer, texts: I) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts = BTreeMap::new();
    for text in texts {
        for tok in tokenizer.tokenize(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: BTreeMap<String, u32>,
    tokens: Vec<String>,
    cap: usize,
}

impl Vocabulary {
    /// Keeps the `cap - 1` most frequent tokens (ties broken
    /// lexicographically); id 0 is reserved for out-of-vocabulary.
    pub fn from_counts(counts: &BTreeMap<String, u64>, cap: usize) -> Self {
        assert!(cap >= 1, "vocabulary cap must be at least 1");
        let mut ranked: Vec<(&String, u64)> = counts.iter().map(|(t, &c)| (t, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap - 1);
        let mut tokens = Vec::with_capacity(ranked.len() + 1);
        tokens.push(OOV_TOKEN.to_string());
        tokens.extend(ranked.into_iter().map(|(t, _)| t.clone()));
        Self::from_tokens(tokens, cap)
    }

    /// Rebuild from an id-ordered token list whose first entry is the OOV
    /// placeholder.
    pub fn from_tokens(tokens: Vec<String>, cap: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { index, tokens, cap }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over the training reviews of a split.
pub fn build_vocab(tokenizer: &Tokenizer, train: &Dataset, cap: usize) -> Vocabulary {
    let counts = count_tokens(tokenizer, train.interactions().iter().map(|i| i.review.as_str()));
    Vocabulary::from_counts(&counts, cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Owner {
    User(usize),
    Item(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Per-user and per-item documents built from training reviews only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub user_docs: Vec<Document>,
    pub item_docs: Vec<Document>,
    pub vocab_size: usize,
}

impl Corpus {
    pub fn doc(&self, owner: Owner) -> &Document {
        match owner {
            Owner::User(u) => &self.user_docs[u],
            Owner::Item(i) => &self.item_docs[i],
        }
    }

    /// Token counts over the item documents, indexed by token id. Each
    /// training review lands in exactly one item document.
    pub fn unigram_counts(&self) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; self.vocab_size];
        for d in &self.item_docs {
            for &t in &d.tokens {
                counts[t as usize] += 1;
            }
        }
        counts
    }

    pub fn empty_documents(&self) -> usize {
        self.user_docs.iter().chain(&self.item_docs).filter(|d| d.is_empty()).count()
    }
}

/// Assembles owner documents from a split. Only `split.train` is read, so
/// reviews attached to held-out pairs can never reach a document.
pub struct DocumentBuilder<'a> {
    tokenizer: &'a Tokenizer,
    vocab: &'a Vocabulary,
    train: &'a Dataset,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl<'a> DocumentBuilder<'a> {
    pub fn new(tokenizer: &'a Tokenizer, vocab: &'a Vocabulary, split: &'a Split) -> Self {
        let train = &split.train;
        let mut by_user = alloc::vec![Vec::new(); train.n_users()];
        let mut by_item = alloc::vec![Vec::new(); train.n_items()];
        for (e, &(u, i)) in train.pairs().iter().enumerate() {
            by_user[u].push(e);
            by_item[i].push(e);
        }
        // ascending timestamp, then input order (stable sort)
        let events = train.interactions();
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_by_key(|&e| events[e].timestamp);
        }
        Self {
            tokenizer,
            vocab,
            train,
            by_user,
            by_item,
        }
    }

    /// Concatenated training reviews of `owner`, mapped to ids and cut to
    /// the first `cap` tokens.
    pub fn build(&self, owner: Owner, cap: usize) -> Document {
        let events = match owner {
            Owner::User(u) => &self.by_user[u],
            Owner::Item(i) => &self.by_item[i],
        };
        let mut tokens = Vec::new();
        for &e in events {
            if tokens.len() >= cap {
                break;
            }
            let review = &self.train.interactions()[e].review;
            for tok in self.tokenizer.tokenize(review) {
                if tokens.len() >= cap {
                    break;
                }
                tokens.push(self.vocab.id(&tok));
            }
        }
        Document { tokens }
    }

    pub fn corpus(&self, cap: usize) -> Corpus {
        Corpus {
            user_docs: (0..self.train.n_users()).map(|u| self.build(Owner::User(u), cap)).collect(),
            item_docs: (0..self.train.n_items()).map(|i| self.build(Owner::Item(i), cap)).collect(),
            vocab_size: self.vocab.len(),
        }
    }
}

/// `vocab_size × dim` word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Matrix,
}

impl EmbeddingTable {
    pub fn random(vocab_size: usize, dim: usize, rng: &mut Rng64) -> Self {
        Self {
            vectors: Matrix::uniform(vocab_size, dim, 0.1, rng),
        }
    }

    /// Rows for tokens found in `pretrained` take the first `dim` values of
    /// the pretrained vector; tokens that are missing (or whose vector is
    /// shorter than `dim`) are drawn from uniform(-0.1, 0.1).
    pub fn from_pretrained(
        vocab: &Vocabulary,
        pretrained: &BTreeMap<String, Vec<f64>>,
        dim: usize,
        rng: &mut Rng64,
    ) -> Self {
        let mut vectors = Matrix::zeros(vocab.len(), dim);
        for (id, tok) in vocab.tokens().iter().enumerate() {
            let row = vectors.row_mut(id);
            match pretrained.get(tok) {
                Some(v) if id != OOV_ID as usize && v.len() >= dim => row.copy_from_slice(&v[..dim]),
                _ => row.iter_mut().for_each(|x| *x = rng::uniform_symmetric(rng, 0.1)),
            }
        }
        Self { vectors }
    }

    /// Maps pretrained vectors of any width into `dim` dimensions with a
    /// seeded random linear projection, rescaled so the projected rows have
    /// the same RMS as uniform(-0.1, 0.1) draws. Missing tokens are drawn
    /// from uniform(-0.1, 0.1).
    pub fn from_pretrained_projected(
        vocab: &Vocabulary,
        pretrained: &BTreeMap<String, Vec<f64>>,
        dim: usize,
        rng: &mut Rng64,
    ) -> Self {
        let source = pretrained.values().map(Vec::len).max().unwrap_or(0);
        let projection = Matrix::uniform(source.max(1), dim, 1.0, rng);
        let mut vectors = Matrix::zeros(vocab.len(), dim);
        let mut found = Vec::new();
        for (id, tok) in vocab.tokens().iter().enumerate() {
            match pretrained.get(tok) {
                Some(v) if id != OOV_ID as usize && v.len() == source => {
                    let row = vectors.row_mut(id);
                    for (k, x) in v.iter().enumerate() {
                        crate::math::axpy(*x, projection.row(k), row);
                    }
                    found.push(id);
                }
                _ => vectors
                    .row_mut(id)
                    .iter_mut()
                    .for_each(|x| *x = rng::uniform_symmetric(rng, 0.1)),
            }
        }
        let sq: f64 = found.iter().map(|&r| crate::math::dot(vectors.row(r), vectors.row(r))).sum();
        if sq > 0.0 {
            let rms = crate::math::sqrt(sq / (found.len() * dim) as f64);
            let scale = 0.1 / crate::math::sqrt(3.0) / rms;
            for &r in &found {
                vectors.row_mut(r).iter_mut().for_each(|x| *x *= scale);
            }
        }
        Self { vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_user_level, Interaction};
    use alloc::vec;

    #[test]
    fn tokenize_examples() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("Great product!"), vec!["great", "product"]);
        assert!(t.tokenize("the of and").is_empty());
        assert_eq!(t.tokenize("USB-C cable"), vec!["usb", "c", "cable"]);
        assert!(t.tokenize("").is_empty());
    }

    #[test]
    fn tokenize_normalizes_composed_forms() {
        let t = Tokenizer::default();
        // "café" decomposed (e + combining acute) and precomposed map alike.
        assert_eq!(t.tokenize("cafe\u{301}"), t.tokenize("caf\u{e9}"));
    }

    #[test]
    fn vocab_ranking_and_cap() {
        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 5);
        counts.insert("b".to_string(), 3);
        counts.insert("c".to_string(), 1);
        let v = Vocabulary::from_counts(&counts, 3);
        assert_eq!(v.tokens(), &["<oov>", "a", "b"]);
        assert_eq!(v.id("c"), OOV_ID);
        let big = Vocabulary::from_counts(&counts, DEFAULT_VOCAB_CAP);
        assert_eq!(big.len(), 4);
        assert_eq!(DEFAULT_VOCAB_CAP, 50_000);
    }

    #[test]
    fn vocab_ties_are_lexicographic() {
        let mut counts = BTreeMap::new();
        counts.insert("zeta".to_string(), 2);
        counts.insert("alpha".to_string(), 2);
        let v = Vocabulary::from_counts(&counts, 2);
        assert_eq!(v.tokens(), &["<oov>", "alpha"]);
    }

    #[test]
    fn documents_concatenate_and_truncate() {
        let first: Vec<String> = (0..600).map(|i| alloc::format!("w{i}")).collect();
        let second: Vec<String> = (600..1200).map(|i| alloc::format!("w{i}")).collect();
        let ds = Dataset::from_interactions(vec![
            Interaction::new("u", "i1", 5.0, &second.join(" ")).at(2),
            Interaction::new("u", "i2", 5.0, &first.join(" ")).at(1),
        ]);
        let split = Split {
            train: ds.clone(),
            test: vec![],
            seed: 0,
            train_fraction: 0.7,
        };
        let tok = Tokenizer::default();
        let vocab = build_vocab(&tok, &split.train, DEFAULT_VOCAB_CAP);
        let b = DocumentBuilder::new(&tok, &vocab, &split);
        let doc = b.build(Owner::User(0), 1000);
        assert_eq!(doc.len(), 1000);
        let words: Vec<&str> = doc.tokens.iter().map(|&t| vocab.token(t).unwrap()).collect();
        assert_eq!(words[0], "w0");
        assert_eq!(words[599], "w599");
        assert_eq!(words[600], "w600");
        assert_eq!(words[999], "w999");
    }

    #[test]
    fn test_only_owner_has_empty_document() {
        let ds = Dataset::from_interactions(vec![
            Interaction::new("u", "seen", 5.0, "alpha beta").at(1),
            Interaction::new("u", "held", 5.0, "secret words").at(2),
            Interaction::new("v", "seen", 5.0, "gamma").at(3),
        ]);
        // force "held" into test regardless of shuffle
        let held = ds.item_id("held").unwrap();
        let train: Vec<Interaction> =
            ds.interactions().iter().filter(|i| i.item != "held").cloned().collect();
        let split = Split {
            train: Dataset::with_universe(ds.users().to_vec(), ds.items().to_vec(), train),
            test: vec![(ds.user_id("u").unwrap(), held)],
            seed: 0,
            train_fraction: 0.7,
        };
        let tok = Tokenizer::default();
        let vocab = build_vocab(&tok, &split.train, 100);
        assert_eq!(vocab.id("secret"), OOV_ID);
        let b = DocumentBuilder::new(&tok, &vocab, &split);
        assert!(b.build(Owner::Item(held), 1000).is_empty());
        let real = split_user_level(&ds, 0.7, 3);
        let _ = DocumentBuilder::new(&tok, &vocab, &real).corpus(10);
    }
}
