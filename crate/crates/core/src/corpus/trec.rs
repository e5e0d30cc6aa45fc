//! Plain-text collection files: `<doc_id>\t<text>` documents,
//! `<query_id>\t<text>` queries and TREC-layout qrels. Lines starting with
//! `#` are comments.

use std::fs;
use std::path::Path;

use super::{build_corpus, tokenize, Collection, Judgment, Query, RawDocument};
use crate::error::{FwlError, Result};

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> FwlError {
    FwlError::Parse { file: file.to_string(), line, msg: msg.into() }
}

fn parse_tab_lines(file: &str, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(file, i + 1, "expected `<id>\\t<text>`"))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(parse_err(file, i + 1, "empty id"));
        }
        out.push((id.to_string(), body.to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_qrels(file: &str, text: &str) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [qid, _, did, grade] => {
                let grade: i64 = grade
                    .parse()
                    .map_err(|_| parse_err(file, i + 1, format!("bad grade `{grade}`")))?;
                if grade < 0 {
                    return Err(parse_err(file, i + 1, "negative grade"));
                }
                out.push(Judgment {
                    query_id: qid.to_string(),
                    doc_id: did.to_string(),
                    grade: grade as u32,
                });
            }
            _ => {
                return Err(parse_err(
                    file,
                    i + 1,
                    format!("expected 4 fields `<qid> <ignored> <doc_id> <grade>`, got {}", fields.len()),
                ))
            }
        }
    }
    Ok(out)
}

/// Parses the three collection files from in-memory text.
pub fn read_trec(docs: &str, queries: &str, qrels: &str) -> Result<Collection> {
    let raw = parse_tab_lines("docs", docs)?
        .into_iter()
        .map(|(id, text)| RawDocument::from_text(id, &text))
        .collect();
    let corpus = build_corpus(raw)?;
    let mut qs = Vec::new();
    for (i, (id, text)) in parse_tab_lines("queries", queries)?.into_iter().enumerate() {
        qs.push(Query::new(id, tokenize(&text)).map_err(|e| parse_err("queries", i + 1, e.to_string()))?);
    }
    let judgments = parse_qrels("qrels", qrels)?;
    Collection::new(corpus, qs, judgments)
}

pub fn load_trec(
    docs_path: impl AsRef<Path>,
    queries_path: impl AsRef<Path>,
    qrels_path: impl AsRef<Path>,
) -> Result<Collection> {
    read_trec(
        &fs::read_to_string(docs_path)?,
        &fs::read_to_string(queries_path)?,
        &fs::read_to_string(qrels_path)?,
    )
}

/// Writes `docs.tsv`, `queries.tsv` and `qrels.txt` into `dir`.
pub fn write_trec(collection: &Collection, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let corpus = &collection.corpus;
    let mut docs = String::new();
    for d in corpus.docs() {
        docs.push_str(&d.id);
        docs.push('\t');
        let words: Vec<&str> = d.terms.iter().map(|&t| corpus.term(t)).collect();
        docs.push_str(&words.join(" "));
        docs.push('\n');
    }
    let mut queries = String::new();
    for q in &collection.queries {
        queries.push_str(&format!("{}\t{}\n", q.id, q.tokens.join(" ")));
    }
    let mut qrels = String::new();
    for j in &collection.judgments {
        qrels.push_str(&format!("{} 0 {} {}\n", j.query_id, j.doc_id, j.grade));
    }
    fs::write(dir.join("docs.tsv"), docs)?;
    fs::write(dir.join("queries.tsv"), queries)?;
    fs::write(dir.join("qrels.txt"), qrels)?;
    Ok(())
}
