//! Two-stage evaluation: a retrieval model proposes the top M unseen items,
//! the held-out items are added, and the model under test reranks the pool.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::Split;
use crate::metrics::{hit_rate_at_k, ndcg_at_k, HitMode};
use crate::model::Scorer;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_M: usize = 1_000;

/// Descending score, ties by ascending item index.
fn by_score_desc(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Orders `items` by the scorer's scores for `user`.
pub fn rank_items<S: Scorer + ?Sized>(scorer: &S, user: usize, items: &[usize]) -> Vec<usize> {
    let mut scores = Vec::with_capacity(items.len());
    scorer.score_items(user, items, &mut scores);
    let mut pairs: Vec<(f64, usize)> = scores.into_iter().zip(items.iter().copied()).collect();
    pairs.sort_unstable_by(by_score_desc);
    pairs.into_iter().map(|(_, i)| i).collect()
}

/// Top `m` items by score excluding `exclusions` (sorted).
pub fn retrieve_top_m<S: Scorer + ?Sized>(
    retrieval: &S,
    user: usize,
    m: usize,
    exclusions: &[usize],
) -> Vec<usize> {
    let candidates: Vec<usize> = (0..retrieval.n_items())
        .filter(|i| exclusions.binary_search(i).is_err())
        .collect();
    let mut scores = Vec::with_capacity(candidates.len());
    retrieval.score_items(user, &candidates, &mut scores);
    let mut pairs: Vec<(f64, usize)> = scores.into_iter().zip(candidates).collect();
    if m < pairs.len() {
        pairs.select_nth_unstable_by(m, by_score_desc);
        pairs.truncate(m);
    }
    pairs.sort_unstable_by(by_score_desc);
    pairs.into_iter().map(|(_, i)| i).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePool {
    pub user: usize,
    /// Retrieved items in retrieval order, then test items not already
    /// retrieved.
    pub candidates: Vec<usize>,
}

impl CandidatePool {
    pub fn build(user: usize, retrieved: Vec<usize>, test: &[usize]) -> Self {
        let mut candidates = retrieved;
        let mut seen: Vec<usize> = candidates.clone();
        seen.sort_unstable();
        for &t in test {
            if seen.binary_search(&t).is_err() {
                candidates.push(t);
            }
        }
        Self { user, candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Train positives and held-out items per user, derived once from a split.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub k: usize,
    pub m: usize,
    pub hit_mode: HitMode,
    train_items: Vec<Vec<usize>>,
    test_items: Vec<Vec<usize>>,
}

impl EvalPlan {
    pub fn new(split: &Split, k: usize, m: usize, hit_mode: HitMode) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        if m == 0 {
            return Err(Error::Config("M must be positive".into()));
        }
        Ok(Self {
            k,
            m,
            hit_mode,
            train_items: split.train.user_items(),
            test_items: split.test_items(),
        })
    }

    /// Users with at least one held-out item, ascending.
    pub fn evaluated_users(&self) -> Vec<usize> {
        (0..self.test_items.len())
            .filter(|&u| !self.test_items[u].is_empty())
            .collect()
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_items[user]
    }

    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test_items[user]
    }

    pub fn pool<S: Scorer + ?Sized>(&self, retrieval: &S, user: usize) -> CandidatePool {
        let retrieved = retrieve_top_m(retrieval, user, self.m, &self.train_items[user]);
        CandidatePool::build(user, retrieved, &self.test_items[user])
    }

    pub fn pools<S: Scorer + ?Sized>(&self, retrieval: &S) -> Vec<CandidatePool> {
        self.evaluated_users()
            .into_iter()
            .map(|u| self.pool(retrieval, u))
            .collect()
    }

    /// `(HR@K, nDCG@K)` for one user's pool.
    pub fn score_pool<S: Scorer + ?Sized>(&self, model: &S, pool: &CandidatePool) -> Result<(f64, f64)> {
        let ranked = rank_items(model, pool.user, &pool.candidates);
        let test = &self.test_items[pool.user];
        Ok((
            hit_rate_at_k(&ranked, test, self.k, self.hit_mode)?,
            ndcg_at_k(&ranked, test, self.k)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserMetrics {
    pub user: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    pub m: usize,
    pub hit_mode: HitMode,
    /// Ascending by user index.
    pub per_user: Vec<UserMetrics>,
    pub mean_hr: f64,
    pub mean_ndcg: f64,
}

impl EvalReport {
    /// Sums in user order so the means do not depend on how the per-user
    /// results were produced.
    pub fn from_per_user(
        model: String,
        k: usize,
        m: usize,
        hit_mode: HitMode,
        mut per_user: Vec<UserMetrics>,
    ) -> Result<Self> {
        if per_user.is_empty() {
            return Err(Error::NoEvaluableUsers);
        }
        per_user.sort_by_key(|r| r.user);
        let n = per_user.len() as f64;
        let mean_hr = per_user.iter().map(|r| r.hr).sum::<f64>() / n;
        let mean_ndcg = per_user.iter().map(|r| r.ndcg).sum::<f64>() / n;
        Ok(Self {
            model,
            k,
            m,
            hit_mode,
            per_user,
            mean_hr,
            mean_ndcg,
        })
    }

    pub fn users(&self) -> Vec<usize> {
        self.per_user.iter().map(|r| r.user).collect()
    }

    pub fn hr(&self) -> Vec<f64> {
        self.per_user.iter().map(|r| r.hr).collect()
    }

    pub fn ndcg(&self) -> Vec<f64> {
        self.per_user.iter().map(|r| r.ndcg).collect()
    }
}

/// Builds every pool with `retrieval` and ranks it with `model`.
pub fn evaluate<S: Scorer + ?Sized, R: Scorer + ?Sized>(
    model_id: &str,
    model: &S,
    retrieval: &R,
    plan: &EvalPlan,
) -> Result<EvalReport> {
    let pools = plan.pools(retrieval);
    evaluate_pools(model_id, model, plan, &pools)
}

/// Ranks precomputed pools, so several models can share one retrieval pass.
pub fn evaluate_pools<S: Scorer + ?Sized>(
    model_id: &str,
    model: &S,
    plan: &EvalPlan,
    pools: &[CandidatePool],
) -> Result<EvalReport> {
    let per_user = pools
        .iter()
        .map(|p| {
            plan.score_pool(model, p)
                .map(|(hr, ndcg)| UserMetrics { user: p.user, hr, ndcg })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_per_user(model_id.into(), plan.k, plan.m, plan.hit_mode, per_user)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn n_items(&self) -> usize {
            self.0.len()
        }
        fn score(&self, _user: usize, item: usize) -> f64 {
            self.0[item]
        }
    }

    #[test]
    fn retrieval_examples() {
        let s = Fixed(alloc::vec![1.0, 2.0]);
        assert_eq!(retrieve_top_m(&s, 0, 1, &[]), alloc::vec![1]);
        assert_eq!(retrieve_top_m(&s, 0, 5, &[]), alloc::vec![1, 0]);
        assert_eq!(retrieve_top_m(&s, 0, 5, &[1]), alloc::vec![0]);
    }

    #[test]
    fn ties_by_index() {
        let s = Fixed(alloc::vec![0.5, 1.0, 0.5, 1.0]);
        assert_eq!(retrieve_top_m(&s, 0, 3, &[]), alloc::vec![1, 3, 0]);
        assert_eq!(rank_items(&s, 0, &[2, 0, 3, 1]), alloc::vec![1, 3, 0, 2]);
    }

    #[test]
    fn pool_includes_test_items_once() {
        let p = CandidatePool::build(0, alloc::vec![4, 2], &[2, 9]);
        assert_eq!(p.candidates, alloc::vec![4, 2, 9]);
    }
}
