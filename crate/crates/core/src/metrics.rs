//! Top-K ranking metrics for users with one or more held-out items.

use crate::math::log2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HitMode {
    /// Fraction of held-out items found in the top K (recall@K).
    #[default]
    Recall,
    /// 1 if any held-out item is in the top K.
    AnyHit,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::Config("K must be positive".into()))
    } else {
        Ok(())
    }
}

fn hits<'a>(ranked: &'a [usize], test: &'a [usize], k: usize) -> impl Iterator<Item = usize> + 'a {
    let test_sorted = test.windows(2).all(|w| w[0] <= w[1]);
    ranked.iter().take(k).enumerate().filter_map(move |(p, i)| {
        let hit = if test_sorted { test.binary_search(i).is_ok() } else { test.contains(i) };
        hit.then_some(p)
    })
}

/// `|top-K ∩ test| / |test|` (or any-hit). An empty test set scores 0.
pub fn hit_rate_at_k(ranked: &[usize], test: &[usize], k: usize, mode: HitMode) -> Result<f64> {
    check_k(k)?;
    if test.is_empty() {
        return Ok(0.0);
    }
    let n = hits(ranked, test, k).count();
    Ok(match mode {
        HitMode::Recall => n as f64 / test.len() as f64,
        HitMode::AnyHit => (n > 0) as u8 as f64,
    })
}

/// Binary-relevance nDCG@K with ideal DCG over `min(|test|, K)` positions.
pub fn ndcg_at_k(ranked: &[usize], test: &[usize], k: usize) -> Result<f64> {
    check_k(k)?;
    if test.is_empty() {
        return Ok(0.0);
    }
    let dcg: f64 = hits(ranked, test, k).map(|p| 1.0 / log2(p as f64 + 2.0)).sum();
    let ideal: f64 = (0..test.len().min(k)).map(|p| 1.0 / log2(p as f64 + 2.0)).sum();
    Ok(dcg / ideal)
}
