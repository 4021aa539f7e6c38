//! Split manifest: a text record of which (user, item) pairs went to train
//! and test, sufficient to rebuild the exact split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use reviewrank_core::data::{Dataset, Interaction, Split};

use crate::hash::sha256_hex;

const MAGIC: &str = "# reviewrank split manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub users: usize,
    pub items: usize,
    /// Hash of the prepared data and the settings that shaped it.
    pub data_hash: String,
    pub entries: Vec<(String, String, Partition)>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("not a split manifest (missing `{MAGIC}` header)")]
    BadMagic,
    #[error("manifest line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("manifest header lacks `{0}`")]
    MissingHeader(&'static str),
    #[error("manifest does not match the prepared interactions: {0}")]
    Mismatch(String),
}

impl Manifest {
    pub fn from_split(split: &Split, data_hash: &str) -> Self {
        let ds = &split.train;
        let mut entries: Vec<(usize, usize, Partition)> = ds
            .pairs()
            .iter()
            .map(|&(u, i)| (u, i, Partition::Train))
            .chain(split.test.iter().map(|&(u, i)| (u, i, Partition::Test)))
            .collect();
        entries.sort_by_key(|&(u, i, _)| (u, i));
        Self {
            seed: split.seed,
            train_fraction: split.train_fraction,
            users: ds.n_users(),
            items: ds.n_items(),
            data_hash: data_hash.to_owned(),
            entries: entries
                .into_iter()
                .map(|(u, i, p)| (ds.users()[u].clone(), ds.items()[i].clone(), p))
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let train = self.entries.iter().filter(|e| e.2 == Partition::Train).count();
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "# seed\t{}", self.seed).unwrap();
        writeln!(s, "# train_fraction\t{}", self.train_fraction).unwrap();
        writeln!(s, "# users\t{}", self.users).unwrap();
        writeln!(s, "# items\t{}", self.items).unwrap();
        writeln!(s, "# train\t{train}").unwrap();
        writeln!(s, "# test\t{}", self.entries.len() - train).unwrap();
        writeln!(s, "# data_hash\t{}", self.data_hash).unwrap();
        s.push_str("user\titem\tpartition\n");
        for (u, i, p) in &self.entries {
            writeln!(s, "{u}\t{i}\t{}", p.as_str()).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(ManifestError::BadMagic),
        }
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut entries = Vec::new();
        let bad = |line: usize, message: String| ManifestError::Line { line: line + 1, message };
        for (n, line) in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once('\t').ok_or_else(|| bad(n, "header needs `key<TAB>value`".into()))?;
                header.insert(k.to_owned(), v.to_owned());
                continue;
            }
            if line == "user\titem\tpartition" || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [u, i, p] = f[..] else {
                return Err(bad(n, format!("expected 3 fields, found {}", f.len())));
            };
            let p = match p {
                "train" => Partition::Train,
                "test" => Partition::Test,
                other => return Err(bad(n, format!("unknown partition `{other}`"))),
            };
            entries.push((u.to_owned(), i.to_owned(), p));
        }
        fn get<T: std::str::FromStr>(h: &BTreeMap<String, String>, k: &'static str) -> Result<T, ManifestError> {
            h.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or(ManifestError::MissingHeader(k))
        }
        Ok(Self {
            seed: get(&header, "seed")?,
            train_fraction: get(&header, "train_fraction")?,
            users: get(&header, "users")?,
            items: get(&header, "items")?,
            data_hash: get(&header, "data_hash")?,
            entries,
        })
    }

    /// Rebuilds the split over `ds`, which must contain exactly the pairs
    /// listed in the manifest.
    pub fn to_split(&self, ds: &Dataset) -> Result<Split, ManifestError> {
        if ds.n_users() != self.users || ds.n_items() != self.items {
            return Err(ManifestError::Mismatch(format!(
                "manifest has {} users / {} items, data has {} / {}",
                self.users,
                self.items,
                ds.n_users(),
                ds.n_items()
            )));
        }
        if ds.pairs().len() != self.entries.len() {
            return Err(ManifestError::Mismatch(format!(
                "manifest lists {} pairs, data has {}",
                self.entries.len(),
                ds.pairs().len()
            )));
        }
        let mut partition: BTreeMap<(usize, usize), Partition> = BTreeMap::new();
        for (u, i, p) in &self.entries {
            let (Some(ui), Some(ii)) = (ds.user_id(u), ds.item_id(i)) else {
                return Err(ManifestError::Mismatch(format!("unknown pair ({u}, {i})")));
            };
            partition.insert((ui, ii), *p);
        }
        let mut train: Vec<Interaction> = Vec::new();
        let mut test = Vec::new();
        for (it, &pair) in ds.interactions().iter().zip(ds.pairs()) {
            match partition.get(&pair) {
                Some(Partition::Train) => train.push(it.clone()),
                Some(Partition::Test) => test.push(pair),
                None => {
                    return Err(ManifestError::Mismatch(format!(
                        "pair ({}, {}) missing from manifest",
                        it.user, it.item
                    )))
                }
            }
        }
        test.sort_unstable();
        Ok(Split {
            train: Dataset::with_universe(ds.users().to_vec(), ds.items().to_vec(), train),
            test,
            seed: self.seed,
            train_fraction: self.train_fraction,
        })
    }
}

/// Identity of a manifest file, embedded in downstream artifacts.
pub fn manifest_hash(rendered: &str) -> String {
    sha256_hex(rendered.as_bytes())
}
