//! Synthetic review datasets with cluster structure, for tests, demos and
//! sanity checks when real data is unavailable.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Interaction;
use crate::rng;

/// Users and items fall into `clusters` groups (by index modulo the
/// cluster count); users mostly interact within their own group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Probability that a user interacts with each item of its own cluster.
    pub within_rate: f64,
    /// Extra interactions per user with uniformly random items.
    pub noise_per_user: usize,
    pub words_per_review: usize,
    /// Words in each cluster's private vocabulary.
    pub cluster_vocab: usize,
    /// Size of the vocabulary shared by all clusters.
    pub shared_vocab: usize,
    /// Probability that a review word is drawn from the shared vocabulary.
    pub shared_rate: f64,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            users: 200,
            items: 100,
            clusters: 10,
            within_rate: 0.6,
            noise_per_user: 0,
            words_per_review: 12,
            cluster_vocab: 8,
            shared_vocab: 40,
            shared_rate: 0.5,
            seed: 7,
        }
    }
}

pub fn user_name(u: usize) -> String {
    format!("u{u:04}")
}

pub fn item_name(i: usize) -> String {
    format!("i{i:04}")
}

pub fn cluster_word(cluster: usize, k: usize) -> String {
    format!("topic{cluster}x{k}")
}

pub fn shared_word(k: usize) -> String {
    format!("common{k}")
}

fn review<R: Rng>(cfg: &BlockConfig, cluster: usize, rng: &mut R) -> String {
    let words: Vec<String> = (0..cfg.words_per_review)
        .map(|_| {
            if cfg.shared_vocab > 0 && rng.gen_bool(cfg.shared_rate) {
                shared_word(rng.gen_range(0..cfg.shared_vocab))
            } else {
                cluster_word(cluster, rng.gen_range(0..cfg.cluster_vocab.max(1)))
            }
        })
        .collect();
    words.join(" ")
}

/// Every user gets at least two in-cluster interactions so the split
/// leaves something on both sides.
pub fn block_dataset(cfg: &BlockConfig) -> Vec<Interaction> {
    assert!(cfg.clusters > 0 && cfg.items >= cfg.clusters, "need at least one item per cluster");
    let mut rng = rng::seeded(cfg.seed);
    let mut out = Vec::new();
    let mut t = 0i64;
    for u in 0..cfg.users {
        let c = u % cfg.clusters;
        let own: Vec<usize> = (c..cfg.items).step_by(cfg.clusters).collect();
        let mut chosen: Vec<usize> = own.iter().copied().filter(|_| rng.gen_bool(cfg.within_rate)).collect();
        let mut rest: Vec<usize> = own.iter().copied().filter(|i| !chosen.contains(i)).collect();
        rest.shuffle(&mut rng);
        while chosen.len() < 2.min(own.len()) {
            chosen.push(rest.pop().expect("cluster has enough items"));
        }
        for _ in 0..cfg.noise_per_user {
            let i = rng.gen_range(0..cfg.items);
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        for i in chosen {
            t += 1;
            let text = review(cfg, i % cfg.clusters, &mut rng);
            let rating = f64::from(rng.gen_range(3u8..=5));
            out.push(Interaction::new(&user_name(u), &item_name(i), rating, &text).at(t));
        }
    }
    out
}

/// Sparse users: each has `per_user` interactions with items of its own
/// cluster, and every review names the item's cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub per_user: usize,
    pub words_per_review: usize,
    pub cluster_vocab: usize,
    pub shared_vocab: usize,
    pub shared_rate: f64,
    pub seed: u64,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        Self {
            users: 300,
            items: 200,
            clusters: 10,
            per_user: 4,
            words_per_review: 10,
            cluster_vocab: 4,
            shared_vocab: 30,
            shared_rate: 0.3,
            seed: 11,
        }
    }
}

pub fn cold_start_dataset(cfg: &ColdStartConfig) -> Vec<Interaction> {
    let block = BlockConfig {
        users: cfg.users,
        items: cfg.items,
        clusters: cfg.clusters,
        within_rate: 0.0,
        noise_per_user: 0,
        words_per_review: cfg.words_per_review,
        cluster_vocab: cfg.cluster_vocab,
        shared_vocab: cfg.shared_vocab,
        shared_rate: cfg.shared_rate,
        seed: cfg.seed,
    };
    let mut rng = rng::seeded(cfg.seed);
    let mut out = Vec::new();
    let mut t = 0i64;
    for u in 0..cfg.users {
        let c = u % cfg.clusters;
        let mut own: Vec<usize> = (c..cfg.items).step_by(cfg.clusters).collect();
        own.shuffle(&mut rng);
        own.truncate(cfg.per_user);
        own.sort_unstable();
        for i in own {
            t += 1;
            let text = review(&block, c, &mut rng);
            out.push(Interaction::new(&user_name(u), &item_name(i), 5.0, &text).at(t));
        }
    }
    out
}

/// Small block dataset bundled with the command-line tool.
pub fn toy_config() -> BlockConfig {
    BlockConfig {
        users: 60,
        items: 40,
        clusters: 4,
        within_rate: 0.4,
        noise_per_user: 1,
        seed: 2024,
        ..BlockConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    #[test]
    fn block_is_deterministic_and_clustered() {
        let cfg = BlockConfig::default();
        let a = block_dataset(&cfg);
        assert_eq!(a, block_dataset(&cfg));
        let ds = Dataset::from_interactions(a);
        assert_eq!(ds.n_users(), 200);
        for &(u, i) in ds.pairs() {
            let (un, itn) = (&ds.users()[u], &ds.items()[i]);
            let uc: usize = un[1..].parse::<usize>().unwrap() % 10;
            let ic: usize = itn[1..].parse::<usize>().unwrap() % 10;
            assert_eq!(uc, ic);
        }
        assert!(ds.user_items().iter().all(|v| v.len() >= 2));
    }

    #[test]
    fn cold_start_counts() {
        let cfg = ColdStartConfig::default();
        let ds = Dataset::from_interactions(cold_start_dataset(&cfg));
        assert!(ds.user_items().iter().all(|v| v.len() == 4));
        let it = &ds.interactions()[0];
        let c = it.user[1..].parse::<usize>().unwrap() % 10;
        assert!(it.review.split(' ').any(|w| w.starts_with(&format!("topic{c}x"))));
    }
}
