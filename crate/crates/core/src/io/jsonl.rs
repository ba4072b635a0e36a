//! JSONL relevance judgments and question/answer alignments.
//!
//! Qrels lines look like `{"qid": "q1", "did": "d7", "rel": 1}`, alignment
//! lines like `{"qid": "q1", "did": "d7"}`. Ids may be JSON strings or
//! integers. Blank lines are ignored; other fields are ignored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::QrelSet;
use crate::io::dred::write_atomic;

/// Ordered `(question id, answer id)` pairs. Repeats are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairAlignment {
    rows: Vec<(String, String)>,
}

impl PairAlignment {
    pub fn new(rows: Vec<(String, String)>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.rows.iter().map(|(q, d)| (q.as_str(), d.as_str()))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Id {
    Str(String),
    Int(i64),
}

impl From<Id> for String {
    fn from(id: Id) -> Self {
        match id {
            Id::Str(s) => s,
            Id::Int(i) => i.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct QrelLine {
    qid: Id,
    did: Id,
    rel: i64,
}

#[derive(Deserialize)]
struct PairLine {
    qid: Id,
    did: Id,
}

#[derive(Serialize)]
struct QrelOut<'a> {
    qid: &'a str,
    did: &'a str,
    rel: u32,
}

#[derive(Serialize)]
struct PairOut<'a> {
    qid: &'a str,
    did: &'a str,
}

fn for_each_line<T: for<'de> Deserialize<'de>>(
    path: &Path,
    mut f: impl FnMut(usize, T) -> Result<()>,
) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: T = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        f(line_no, parsed)?;
    }
    Ok(())
}

pub fn read_qrels(path: &Path) -> Result<QrelSet> {
    let mut qrels = QrelSet::new();
    for_each_line(path, |line, q: QrelLine| {
        let grade = u32::try_from(q.rel).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("rel must be a nonnegative 32-bit integer, got {}", q.rel),
        })?;
        let (qid, did) = (String::from(q.qid), String::from(q.did));
        if !qrels.insert(qid.clone(), did.clone(), grade) {
            return Err(Error::DuplicateJudgment {
                path: path.to_path_buf(),
                line,
                qid,
                did,
            });
        }
        Ok(())
    })?;
    Ok(qrels)
}

pub fn read_pairs(path: &Path) -> Result<PairAlignment> {
    let mut rows = Vec::new();
    for_each_line(path, |_, p: PairLine| {
        rows.push((p.qid.into(), p.did.into()));
        Ok(())
    })?;
    Ok(PairAlignment::new(rows))
}

pub fn write_qrels(path: &Path, qrels: &QrelSet) -> Result<()> {
    let mut out = String::new();
    for (qid, did, rel) in qrels.iter() {
        out.push_str(&serde_json::to_string(&QrelOut { qid, did, rel }).expect("plain struct"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_pairs(path: &Path, pairs: &PairAlignment) -> Result<()> {
    let mut out = String::new();
    for (qid, did) in pairs.iter() {
        out.push_str(&serde_json::to_string(&PairOut { qid, did }).expect("plain struct"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
