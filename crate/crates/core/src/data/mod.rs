//! Meeting corpora: JSONL loading, flattening into query–summary examples,
//! meeting-level splits, the word tokenizer and a synthetic generator.

mod synth;
mod tokenizer;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use synth::{synth_corpus, LengthProfile, SynthConfig};
pub use tokenizer::{tokenize, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Product,
    Academic,
    Committee,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Product, Domain::Academic, Domain::Committee];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Product => "product",
            Domain::Academic => "academic",
            Domain::Committee => "committee",
        }
    }

    /// Three-letter label used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            Domain::Product => "pro",
            Domain::Academic => "aca",
            Domain::Committee => "com",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "product" | "pro" => Ok(Domain::Product),
            "academic" | "aca" => Ok(Domain::Academic),
            "committee" | "com" => Ok(Domain::Committee),
            other => Err(Error::Config(format!(
                "unknown domain {other:?} (expected product, academic or committee)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    /// Split for a record without an explicit one: 70/15/15 by a hash of the
    /// meeting id, so a meeting never straddles two splits.
    pub fn from_id(id: &str) -> Split {
        let h = Sha256::digest(id.as_bytes());
        match u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % 100 {
            0..=69 => Split::Train,
            70..=84 => Split::Valid,
            _ => Split::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (expected train, valid or test)"))),
        }
    }
}

/// One meeting: speaker turns plus its query–summary pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeetingRecord {
    pub id: String,
    pub domain: Domain,
    pub turns: Vec<(String, String)>,
    pub query_pairs: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl MeetingRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Structure(format!("meeting {:?}: {msg}", self.id)));
        if self.id.is_empty() {
            return bad("empty id".into());
        }
        if self.turns.is_empty() {
            return bad("no turns".into());
        }
        for (i, (q, s)) in self.query_pairs.iter().enumerate() {
            if q.trim().is_empty() {
                return bad(format!("query_pairs[{i}]: empty query"));
            }
            if s.trim().is_empty() {
                return bad(format!("query_pairs[{i}]: empty summary"));
            }
        }
        Ok(())
    }

    pub fn split(&self) -> Split {
        self.split.unwrap_or_else(|| Split::from_id(&self.id))
    }

    /// Turns joined as `SPEAKER: utterance` lines.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for (i, (speaker, utterance)) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(speaker);
            out.push_str(": ");
            out.push_str(utterance);
        }
        out
    }
}

/// Parses a JSONL corpus, one meeting per line. Blank lines are skipped; the
/// first malformed line aborts with its line number and the offending field.
pub fn load_corpus(path: &Path) -> Result<Vec<MeetingRecord>> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<MeetingRecord>> {
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |path: String, msg: String| Error::Parse {
            line: i + 1,
            path: if path.is_empty() || path == "." {
                origin.to_string()
            } else {
                format!("{origin}: {path}")
            },
            msg,
        };
        let de = &mut serde_json::Deserializer::from_str(line);
        let rec: MeetingRecord = serde_path_to_error::deserialize(de)
            .map_err(|e| err(e.path().to_string(), e.inner().to_string()))?;
        rec.validate().map_err(|e| err(String::new(), e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(err("id".into(), format!("duplicate meeting id {:?}", rec.id)));
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::NoRecords(origin.to_string()));
    }
    Ok(records)
}

/// Writes records as JSONL, one per line, in the given order.
pub fn write_corpus(path: &Path, records: &[MeetingRecord]) -> Result<()> {
    crate::model::write_atomic(path, corpus_bytes(records)?.as_slice())
}

pub fn corpus_bytes(records: &[MeetingRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// One (meeting, query) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    /// `<meeting id>#<pair index>`
    pub id: String,
    pub meeting_id: String,
    pub domain: Domain,
    pub query: String,
    pub transcript: String,
    pub summary: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

impl CorpusSplit {
    pub fn get(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Errors if any meeting contributes examples to more than one split.
    pub fn check_disjoint(&self) -> Result<()> {
        let ids = |xs: &[Example]| xs.iter().map(|e| e.meeting_id.clone()).collect::<BTreeSet<_>>();
        let (a, b, c) = (ids(&self.train), ids(&self.valid), ids(&self.test));
        let leaked: Vec<_> = a.intersection(&b).chain(a.intersection(&c)).chain(b.intersection(&c)).collect();
        if let Some(id) = leaked.first() {
            return Err(Error::Structure(format!("meeting {id:?} appears in more than one split")));
        }
        Ok(())
    }
}

/// One example per (meeting, query pair), optionally restricted to one
/// domain, routed to the meeting's split. Order follows the input.
pub fn flatten(records: &[MeetingRecord], domain: Option<Domain>) -> CorpusSplit {
    let mut out = CorpusSplit::default();
    for r in records.iter().filter(|r| domain.map_or(true, |d| r.domain == d)) {
        let transcript = r.transcript();
        let dst = match r.split() {
            Split::Train => &mut out.train,
            Split::Valid => &mut out.valid,
            Split::Test => &mut out.test,
        };
        for (k, (q, s)) in r.query_pairs.iter().enumerate() {
            dst.push(Example {
                id: format!("{}#{k}", r.id),
                meeting_id: r.id.clone(),
                domain: r.domain,
                query: q.clone(),
                transcript: transcript.clone(),
                summary: s.clone(),
            });
        }
    }
    out
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
