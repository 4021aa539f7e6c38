//! Wall-clock scoring latency, reported as seconds per scored entry.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use reviewrank_core::eval::CandidatePool;
use reviewrank_core::model::Scorer;

pub const DEFAULT_BATCH: usize = 512;
pub const DEFAULT_REPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// Median over repetitions.
    pub sec_per_entry: f64,
    pub samples: Vec<f64>,
    pub entries: usize,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn score_all<S: Scorer + ?Sized>(scorer: &S, pools: &[CandidatePool], batch_size: usize, out: &mut Vec<f64>) {
    for pool in pools {
        for chunk in pool.candidates.chunks(batch_size.max(1)) {
            scorer.score_items(pool.user, chunk, out);
            black_box(&out);
        }
    }
}

/// Scores every pool entry in batches of `batch_size` after one untimed
/// warm-up pass; returns the median of `reps` timed passes.
pub fn speed_benchmark<S: Scorer + ?Sized>(scorer: &S, pools: &[CandidatePool], batch_size: usize, reps: usize) -> BenchResult {
    let entries: usize = pools.iter().map(CandidatePool::len).sum();
    let mut out = Vec::with_capacity(batch_size);
    score_all(scorer, pools, batch_size, &mut out);
    let samples: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            score_all(scorer, pools, batch_size, &mut out);
            t.elapsed().as_secs_f64() / entries.max(1) as f64
        })
        .collect();
    BenchResult {
        sec_per_entry: median(&samples),
        samples,
        entries,
    }
}

/// Throughput variant: pools are scored concurrently on `threads` workers.
/// The figure is wall-clock time per entry, not per-entry latency.
pub fn throughput_benchmark<S: Scorer + Sync + ?Sized>(
    scorer: &S,
    pools: &[CandidatePool],
    batch_size: usize,
    reps: usize,
    threads: usize,
) -> Result<BenchResult, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    let entries: usize = pools.iter().map(CandidatePool::len).sum();
    let run = || {
        pool.install(|| {
            pools.par_iter().for_each_init(Vec::new, |out, p| {
                score_all(scorer, std::slice::from_ref(p), batch_size, out);
            })
        })
    };
    run();
    let samples: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            run();
            t.elapsed().as_secs_f64() / entries.max(1) as f64
        })
        .collect();
    Ok(BenchResult {
        sec_per_entry: median(&samples),
        samples,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    /// `direct`, `uncached`, `cached`, or `throughput-<n>` for the
    /// multi-threaded mode.
    pub mode: String,
    pub result: BenchResult,
}

pub const BENCH_HEADER: &str = "model\tmode\tsec_per_entry\tentries";

pub fn render_bench(rows: &[BenchRow], batch_size: usize, reps: usize) -> String {
    let mut s = format!("# scoring latency, batch {batch_size}, median of {reps} passes; retrieval not included\n{BENCH_HEADER}\n");
    for r in rows {
        writeln!(s, "{}\t{}\t{:.6e}\t{}", r.model, r.mode, r.result.sec_per_entry, r.result.entries).unwrap();
    }
    s
}

/// `(model, mode, sec_per_entry)` triples from a rendered table.
pub fn parse_bench(text: &str) -> Vec<(String, String, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != BENCH_HEADER)
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            match f[..] {
                [m, mode, s, _] => Some((m.to_owned(), mode.to_owned(), s.parse().ok()?)),
                _ => None,
            }
        })
        .collect()
}
