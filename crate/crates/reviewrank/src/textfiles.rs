//! Vocabulary, document and pretrained-embedding files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use reviewrank_core::text::{Corpus, Document, Vocabulary};

const VOCAB_MAGIC: &str = "# reviewrank vocabulary v1";
const DOCS_MAGIC: &str = "# reviewrank documents v1";

#[derive(Debug, thiserror::Error)]
pub enum TextFileError {
    #[error("{file}: missing `{magic}` header")]
    BadMagic { file: &'static str, magic: &'static str },
    #[error("{file} line {line}: {message}")]
    Line { file: &'static str, line: usize, message: String },
    #[error("reading {file}: {source}")]
    Io {
        file: &'static str,
        #[source]
        source: std::io::Error,
    },
}

/// `id<TAB>token` per line after a header carrying the cap and data hash.
pub fn render_vocab(vocab: &Vocabulary, data_hash: &str) -> String {
    let mut s = format!("{VOCAB_MAGIC}\n# cap\t{}\n# data_hash\t{data_hash}\n", vocab.cap());
    for (id, tok) in vocab.tokens().iter().enumerate() {
        writeln!(s, "{id}\t{tok}").unwrap();
    }
    s
}

fn header<'a>(text: &'a str, magic: &'static str, file: &'static str) -> Result<(BTreeMap<&'a str, &'a str>, usize), TextFileError> {
    let mut lines = text.lines();
    if lines.next() != Some(magic) {
        return Err(TextFileError::BadMagic { file, magic });
    }
    let mut h = BTreeMap::new();
    let mut n = 1;
    for line in lines {
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some((k, v)) = rest.split_once('\t') {
            h.insert(k, v);
        }
        n += 1;
    }
    Ok((h, n))
}

/// Returns the vocabulary and the data hash recorded in the header.
pub fn parse_vocab(text: &str) -> Result<(Vocabulary, String), TextFileError> {
    const FILE: &str = "vocabulary";
    let (h, skip) = header(text, VOCAB_MAGIC, FILE)?;
    let cap: usize = h.get("cap").and_then(|v| v.parse().ok()).ok_or(TextFileError::Line {
        file: FILE,
        line: 2,
        message: "missing cap".into(),
    })?;
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate().skip(skip) {
        let bad = |message: String| TextFileError::Line { file: FILE, line: n + 1, message };
        let (id, tok) = line.split_once('\t').ok_or_else(|| bad("expected `id<TAB>token`".into()))?;
        let id: usize = id.parse().map_err(|_| bad(format!("bad id `{id}`")))?;
        if id != tokens.len() {
            return Err(bad(format!("ids must be contiguous, expected {}", tokens.len())));
        }
        tokens.push(tok.to_owned());
    }
    let vocab = Vocabulary::from_tokens(tokens, cap);
    Ok((vocab, h.get("data_hash").copied().unwrap_or_default().to_owned()))
}

/// `user|item<TAB>index<TAB>space-separated token ids`.
pub fn render_documents(corpus: &Corpus, data_hash: &str) -> String {
    let mut s = format!(
        "{DOCS_MAGIC}\n# vocab_size\t{}\n# users\t{}\n# items\t{}\n# data_hash\t{data_hash}\n",
        corpus.vocab_size,
        corpus.user_docs.len(),
        corpus.item_docs.len()
    );
    for (kind, docs) in [("user", &corpus.user_docs), ("item", &corpus.item_docs)] {
        for (idx, d) in docs.iter().enumerate() {
            let toks: Vec<String> = d.tokens.iter().map(u32::to_string).collect();
            writeln!(s, "{kind}\t{idx}\t{}", toks.join(" ")).unwrap();
        }
    }
    s
}

pub fn parse_documents(text: &str) -> Result<Corpus, TextFileError> {
    const FILE: &str = "documents";
    let (h, skip) = header(text, DOCS_MAGIC, FILE)?;
    let num = |k: &str| -> Result<usize, TextFileError> {
        h.get(k).and_then(|v| v.parse().ok()).ok_or(TextFileError::Line {
            file: FILE,
            line: 1,
            message: format!("header lacks `{k}`"),
        })
    };
    let vocab_size = num("vocab_size")?;
    let mut corpus = Corpus {
        user_docs: vec![Document::default(); num("users")?],
        item_docs: vec![Document::default(); num("items")?],
        vocab_size,
    };
    for (n, line) in text.lines().enumerate().skip(skip) {
        let bad = |message: String| TextFileError::Line { file: FILE, line: n + 1, message };
        let mut f = line.splitn(3, '\t');
        let (Some(kind), Some(idx), toks) = (f.next(), f.next(), f.next().unwrap_or("")) else {
            return Err(bad("expected `owner<TAB>index<TAB>tokens`".into()));
        };
        let idx: usize = idx.parse().map_err(|_| bad(format!("bad index `{idx}`")))?;
        let tokens = toks
            .split_whitespace()
            .map(|t| match t.parse::<u32>() {
                Ok(id) if (id as usize) < vocab_size.max(1) => Ok(id),
                _ => Err(bad(format!("bad token id `{t}`"))),
            })
            .collect::<Result<Vec<u32>, _>>()?;
        let slot = match kind {
            "user" => corpus.user_docs.get_mut(idx),
            "item" => corpus.item_docs.get_mut(idx),
            other => return Err(bad(format!("unknown owner kind `{other}`"))),
        };
        *slot.ok_or_else(|| bad(format!("index {idx} out of range")))? = Document::new(tokens);
    }
    Ok(corpus)
}

/// Reads `token v1 … vd` lines. The dimension is taken from the first
/// non-blank line; later lines with a different count are errors.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<f64>>, TextFileError> {
    const FILE: &str = "embeddings";
    let mut out = BTreeMap::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TextFileError::Io { file: FILE, source })?;
        let mut parts = line.split_whitespace();
        let Some(tok) = parts.next() else { continue };
        let bad = |message: String| TextFileError::Line { file: FILE, line: n + 1, message };
        let values = parts
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(format!("bad value `{v}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(bad(format!("expected {d} values, found {}", values.len())));
        }
        out.insert(tok.to_owned(), values);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use reviewrank_core::text::Document;

    #[test]
    fn vocab_round_trip() {
        let v = Vocabulary::from_tokens(vec!["<oov>".into(), "b".into(), "a".into()], 10);
        let text = render_vocab(&v, "h");
        let (back, hash) = parse_vocab(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(hash, "h");
    }

    #[test]
    fn documents_round_trip() {
        let c = Corpus {
            user_docs: vec![Document::new(vec![1, 2]), Document::default()],
            item_docs: vec![Document::new(vec![0, 3, 3])],
            vocab_size: 4,
        };
        assert_eq!(parse_documents(&render_documents(&c, "x")).unwrap(), c);
    }

    #[test]
    fn embedding_dimension_enforced() {
        let ok = "good 0.1 0.2\nbad 1 2\n";
        assert_eq!(load_embeddings(ok.as_bytes()).unwrap()["good"], vec![0.1, 0.2]);
        let err = load_embeddings("a 1 2\nb 1 2 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TextFileError::Line { line: 2, .. }));
        assert!(load_embeddings("a 1 x\n".as_bytes()).is_err());
    }
}
