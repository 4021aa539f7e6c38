//! Line-delimited review records in the Amazon review dump layout
//! (`reviewerID`, `asin`, `overall`, `reviewText`, `unixReviewTime`).

use std::io::{BufRead, Write};

use reviewrank_core::data::{dedup_latest, Interaction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(rename = "reviewerID")]
    reviewer_id: Option<String>,
    asin: Option<String>,
    overall: Option<f64>,
    #[serde(rename = "reviewText")]
    review_text: Option<String>,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: Option<i64>,
}

#[derive(Debug, Serialize)]
struct OutRecord<'a> {
    #[serde(rename = "reviewerID")]
    reviewer_id: &'a str,
    asin: &'a str,
    overall: f64,
    #[serde(rename = "reviewText")]
    review_text: &'a str,
    #[serde(rename = "unixReviewTime", skip_serializing_if = "Option::is_none")]
    unix_review_time: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedReviews {
    /// Deduplicated: one interaction per (user, item), latest timestamp.
    pub interactions: Vec<Interaction>,
    /// Lines that were not valid JSON objects of the expected shape.
    pub malformed: usize,
    /// Records lacking a user, item or rating.
    pub missing_fields: usize,
    /// Records with an empty id or a rating outside [1, 5].
    pub invalid: usize,
    /// Records dropped by (user, item) deduplication.
    pub duplicates: usize,
}

impl ParsedReviews {
    pub fn skipped(&self) -> usize {
        self.malformed + self.missing_fields + self.invalid
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading reviews: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses one record per line. Blank lines are ignored. In strict mode the
/// first malformed line aborts with its 1-based line number; otherwise it is
/// counted and skipped.
pub fn parse_reviews<R: BufRead>(reader: R, strict: bool) -> Result<ParsedReviews, ParseError> {
    let mut out = ParsedReviews::default();
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) if strict => {
                return Err(ParseError::Malformed {
                    line: n + 1,
                    message: e.to_string(),
                })
            }
            Err(_) => {
                out.malformed += 1;
                continue;
            }
        };
        let (Some(user), Some(item), Some(rating)) = (raw.reviewer_id, raw.asin, raw.overall) else {
            out.missing_fields += 1;
            continue;
        };
        if user.is_empty() || item.is_empty() || !(1.0..=5.0).contains(&rating) {
            out.invalid += 1;
            continue;
        }
        records.push(Interaction {
            user,
            item,
            rating,
            review: raw.review_text.unwrap_or_default(),
            timestamp: raw.unix_review_time,
        });
    }
    let before = records.len();
    out.interactions = dedup_latest(records);
    out.duplicates = before - out.interactions.len();
    Ok(out)
}

/// Writes interactions in the same layout [`parse_reviews`] reads.
pub fn write_reviews<W: Write>(mut writer: W, interactions: &[Interaction]) -> std::io::Result<()> {
    for it in interactions {
        let rec = OutRecord {
            reviewer_id: &it.user,
            asin: &it.item,
            overall: it.rating,
            review_text: &it.review,
            unix_review_time: it.timestamp,
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
