//! Evaluation report files and the merged comparison table.

use std::fmt::Write as _;

use reviewrank_core::eval::EvalReport;
use reviewrank_core::stats::paired_t_test;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "reviewrank-eval";
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

/// An evaluation report plus the identities of the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub format: String,
    pub config_hash: String,
    pub split_hash: String,
    pub retrieval_hash: String,
    pub report: EvalReport,
}

impl EvalFile {
    pub fn new(config_hash: String, split_hash: String, retrieval_hash: String, report: EvalReport) -> Self {
        Self {
            format: FORMAT.into(),
            config_hash,
            split_hash,
            retrieval_hash,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    Hr,
    #[default]
    Ndcg,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("a comparison needs at least two evaluation reports, got {0}")]
    TooFew(usize),
    #[error("reports `{a}` and `{b}` differ in {what}; they must come from the same split, retrieval model, K and M")]
    Incompatible { a: String, b: String, what: &'static str },
    #[error(transparent)]
    Stats(#[from] reviewrank_core::Error),
}

/// `model<TAB>HR@K<TAB>nDCG@K<TAB>sec_per_entry` rows, then a paired t-test
/// row for every pair of reports. `latency` supplies seconds per entry by
/// model name; missing entries print as `NA`.
pub fn render_report(files: &[EvalFile], latency: &dyn Fn(&str) -> Option<f64>, metric: Metric) -> Result<String, ReportError> {
    if files.len() < 2 {
        return Err(ReportError::TooFew(files.len()));
    }
    let first = &files[0];
    for f in &files[1..] {
        let (a, b) = (first.report.model.clone(), f.report.model.clone());
        let what = if f.split_hash != first.split_hash {
            Some("split")
        } else if f.retrieval_hash != first.retrieval_hash {
            Some("retrieval model")
        } else if (f.report.k, f.report.m) != (first.report.k, first.report.m) {
            Some("K or M")
        } else if f.report.hit_mode != first.report.hit_mode {
            Some("hit mode")
        } else if f.report.users() != first.report.users() {
            Some("evaluated users")
        } else {
            None
        };
        if let Some(what) = what {
            return Err(ReportError::Incompatible { a, b, what });
        }
    }
    let k = first.report.k;
    let mut s = format!("model\tHR@{k}\tnDCG@{k}\tsec_per_entry\n");
    for f in files {
        let r = &f.report;
        let lat = latency(&r.model).map_or_else(|| "NA".to_owned(), |x| format!("{x:.6e}"));
        writeln!(s, "{}\t{:.6}\t{:.6}\t{lat}", r.model, r.mean_hr, r.mean_ndcg).unwrap();
    }
    let label = match metric {
        Metric::Hr => format!("HR@{k}"),
        Metric::Ndcg => format!("nDCG@{k}"),
    };
    let values = |r: &EvalReport| match metric {
        Metric::Hr => r.hr(),
        Metric::Ndcg => r.ndcg(),
    };
    writeln!(s, "\n# paired t-test on per-user {label}, {} users", first.report.per_user.len()).unwrap();
    s.push_str("modelA vs modelB\tt\tp\tsignificant@0.01\n");
    for (i, a) in files.iter().enumerate() {
        for b in &files[i + 1..] {
            let t = paired_t_test(&values(&a.report), &values(&b.report))?;
            writeln!(
                s,
                "{} vs {}\t{:.6}\t{:.6}\t{}",
                a.report.model,
                b.report.model,
                t.t,
                t.p,
                if t.significant(SIGNIFICANCE_LEVEL) { "yes" } else { "no" }
            )
            .unwrap();
        }
    }
    Ok(s)
}

/// `user<TAB>HR<TAB>nDCG` per evaluated user.
pub fn render_per_user(report: &EvalReport, user_names: &[String]) -> String {
    let mut s = String::from("user\tHR\tnDCG\n");
    for r in &report.per_user {
        writeln!(s, "{}\t{}\t{}", user_names[r.user], r.hr, r.ndcg).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use reviewrank_core::eval::UserMetrics;
    use reviewrank_core::metrics::HitMode;

    fn file(model: &str, ndcg: &[f64]) -> EvalFile {
        let per_user = ndcg
            .iter()
            .enumerate()
            .map(|(u, &n)| UserMetrics { user: u, hr: n, ndcg: n })
            .collect();
        let report = EvalReport::from_per_user(model.into(), 10, 1000, HitMode::Recall, per_user).unwrap();
        EvalFile::new("c".into(), "s".into(), "r".into(), report)
    }

    #[test]
    fn two_reports_one_test_row() {
        let files = [file("bpr-mf", &[0.1, 0.2, 0.3]), file("jrl", &[0.2, 0.4, 0.3])];
        let text = render_report(&files, &|m| (m == "bpr-mf").then_some(4e-9), Metric::Ndcg).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "model\tHR@10\tnDCG@10\tsec_per_entry");
        assert!(lines[1].starts_with("bpr-mf\t0.200000\t0.200000\t4.000000e-9"));
        assert!(lines[2].ends_with("\tNA"));
        let tests: Vec<&&str> = lines.iter().filter(|l| l.contains(" vs ") && !l.starts_with("modelA")).collect();
        assert_eq!(tests.len(), 1);
        assert!(tests[0].starts_with("bpr-mf vs jrl\t"));
    }

    #[test]
    fn incompatible_reports_rejected() {
        let mut b = file("jrl", &[0.2, 0.4, 0.3]);
        b.split_hash = "other".into();
        let err = render_report(&[file("bpr-mf", &[0.1, 0.2, 0.3]), b], &|_| None, Metric::Hr).unwrap_err();
        assert!(matches!(err, ReportError::Incompatible { what: "split", .. }));
        assert_eq!(render_report(&[file("a", &[0.1, 0.2])], &|_| None, Metric::Hr), Err(ReportError::TooFew(1)));
    }
}
