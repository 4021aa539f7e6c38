//! Interaction datasets: deduplication, k-core filtering, the per-user
//! train/test split and corpus statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::math;
use crate::rng;

/// One user-item event with its rating and review.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub review: String,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: &str, item: &str, rating: f64, review: &str) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating,
            review: review.into(),
            timestamp: None,
        }
    }

    pub fn at(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }
}

/// Collapse duplicate (user, item) pairs, keeping the latest timestamp.
/// Ties (including two missing timestamps) go to the later occurrence.
/// Survivors keep the position of their first occurrence.
pub fn dedup_latest(interactions: Vec<Interaction>) -> Vec<Interaction> {
    let mut slot: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut out: Vec<Interaction> = Vec::with_capacity(interactions.len());
    for it in interactions {
        let key = (it.user.clone(), it.item.clone());
        match slot.get(&key) {
            Some(&idx) => {
                // None orders below every Some, so a stamped event beats an unstamped one.
                if it.timestamp >= out[idx].timestamp {
                    out[idx] = it;
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(it);
            }
        }
    }
    out
}

/// Users, items and their interactions, with dense index maps.
///
/// Users and items are kept in lexicographic order of their ids, so index
/// assignment does not depend on input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
    interactions: Vec<Interaction>,
    pairs: Vec<(usize, usize)>,
}

impl Dataset {
    /// Builds a dataset whose universe is exactly the users and items that
    /// occur in `interactions`. Duplicates are collapsed with [`dedup_latest`].
    pub fn from_interactions(interactions: Vec<Interaction>) -> Self {
        let users: BTreeSet<String> = interactions.iter().map(|i| i.user.clone()).collect();
        let items: BTreeSet<String> = interactions.iter().map(|i| i.item.clone()).collect();
        Self::with_universe(users.into_iter().collect(), items.into_iter().collect(), interactions)
    }

    /// Builds a dataset over a given universe. Ids are sorted and
    /// deduplicated; interactions referencing unknown ids are dropped.
    pub fn with_universe(
        mut users: Vec<String>,
        mut items: Vec<String>,
        interactions: Vec<Interaction>,
    ) -> Self {
        users.sort();
        users.dedup();
        items.sort();
        items.dedup();
        let user_index: BTreeMap<String, usize> =
            users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_index: BTreeMap<String, usize> =
            items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let mut kept = Vec::with_capacity(interactions.len());
        let mut pairs = Vec::with_capacity(interactions.len());
        for it in dedup_latest(interactions) {
            if let (Some(&u), Some(&i)) = (user_index.get(&it.user), item_index.get(&it.item)) {
                pairs.push((u, i));
                kept.push(it);
            }
        }
        Self {
            users,
            items,
            user_index,
            item_index,
            interactions: kept,
            pairs,
        }
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// `(user index, item index)` for each interaction, aligned with
    /// [`Dataset::interactions`].
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn user_id(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_id(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Per-user sorted item indices.
    pub fn user_items(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.users.len()];
        for &(u, i) in &self.pairs {
            out[u].push(i);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }
}

/// Iteratively removes users and items with fewer than `k` interactions
/// until every survivor has at least `k`. `k = 0` returns the input.
pub fn k_core_filter(ds: &Dataset, k: usize) -> Dataset {
    if k == 0 {
        return ds.clone();
    }
    let mut alive = alloc::vec![true; ds.pairs.len()];
    let mut user_deg = alloc::vec![0usize; ds.n_users()];
    let mut item_deg = alloc::vec![0usize; ds.n_items()];
    for &(u, i) in &ds.pairs {
        user_deg[u] += 1;
        item_deg[i] += 1;
    }
    loop {
        let mut changed = false;
        for (e, &(u, i)) in ds.pairs.iter().enumerate() {
            if alive[e] && (user_deg[u] < k || item_deg[i] < k) {
                alive[e] = false;
                user_deg[u] -= 1;
                item_deg[i] -= 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let kept: Vec<Interaction> = ds
        .interactions
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(it, _)| it.clone())
        .collect();
    Dataset::from_interactions(kept)
}

/// Train partition plus held-out `(user, item)` index pairs.
///
/// `train` keeps the full user/item universe of the split input, so test
/// pairs index into the same maps even when an item has no training events.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Vec<(usize, usize)>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Split {
    /// Held-out items per user, sorted.
    pub fn test_items(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.train.n_users()];
        for &(u, i) in &self.test {
            out[u].push(i);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }
}

/// `⌈fraction · n⌉`, treating products within 1e-9 of an integer as that
/// integer so `0.7 · 10` gives 7 rather than 8.
pub fn train_count(n: usize, fraction: f64) -> usize {
    let x = fraction * n as f64;
    let r = libm::round(x);
    let c = if (x - r).abs() < 1e-9 { r } else { math::ceil(x) };
    (c as usize).min(n)
}

/// Per-user random split: each user's interactions are shuffled with a
/// ChaCha8 generator seeded by `seed` (users visited in index order) and the
/// first `⌈fraction · n⌉` go to train.
pub fn split_user_level(ds: &Dataset, train_fraction: f64, seed: u64) -> Split {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must lie in (0, 1)"
    );
    let mut by_user: Vec<Vec<usize>> = alloc::vec![Vec::new(); ds.n_users()];
    for (e, &(u, _)) in ds.pairs.iter().enumerate() {
        by_user[u].push(e);
    }
    let mut rng = rng::seeded(seed);
    let mut in_train = alloc::vec![false; ds.pairs.len()];
    let mut test = Vec::new();
    for events in &mut by_user {
        events.shuffle(&mut rng);
        let n_train = train_count(events.len(), train_fraction);
        for (pos, &e) in events.iter().enumerate() {
            if pos < n_train {
                in_train[e] = true;
            } else {
                test.push(ds.pairs[e]);
            }
        }
    }
    test.sort_unstable();
    let train_events: Vec<Interaction> = ds
        .interactions
        .iter()
        .zip(&in_train)
        .filter(|(_, &t)| t)
        .map(|(it, _)| it.clone())
        .collect();
    let train = Dataset::with_universe(ds.users.clone(), ds.items.clone(), train_events);
    Split {
        train,
        test,
        seed,
        train_fraction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub density: f64,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let (nu, ni, n) = (ds.n_users(), ds.n_items(), ds.interactions.len());
    let density = if nu == 0 || ni == 0 {
        0.0
    } else {
        n as f64 / (nu as f64 * ni as f64)
    };
    DatasetStats {
        n_users: nu,
        n_items: ni,
        n_interactions: n,
        density,
    }
}
