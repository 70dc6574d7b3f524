//! Lowercased word tokenizer with a frequency-ranked vocabulary.

use std::collections::{BTreeMap, HashMap};

use super::{sha256_hex, Example};
use crate::error::{Error, Result};
use crate::model::layout::{NUM_SPECIALS, SPECIAL_NAMES, UNK};

/// Lowercases `text` and splits it into alphanumeric runs and single
/// punctuation characters; whitespace separates and is dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Token table: ids `0..NUM_SPECIALS` are the specials, the rest are word
/// types by descending training frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Tokenizer {
    /// Builds the table from the query, transcript and summary text of
    /// `train`, keeping at most `max_vocab` entries including specials.
    pub fn build<'a>(train: impl IntoIterator<Item = &'a Example>, max_vocab: usize) -> Result<Self> {
        if max_vocab <= NUM_SPECIALS {
            return Err(Error::Config(format!(
                "max_vocab {max_vocab} leaves no room beside {NUM_SPECIALS} special tokens"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for ex in train {
            for text in [&ex.query, &ex.transcript, &ex.summary] {
                for t in tokenize(text) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        for s in SPECIAL_NAMES {
            counts.remove(s);
        }
        if counts.is_empty() {
            return Err(Error::Structure("empty training text: no vocabulary to build".into()));
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab - NUM_SPECIALS);
        Self::from_tokens(
            SPECIAL_NAMES
                .iter()
                .map(|s| s.to_string())
                .chain(ranked.into_iter().map(|(t, _)| t))
                .collect(),
        )
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_SPECIALS || tokens[..NUM_SPECIALS] != SPECIAL_NAMES {
            return Err(Error::Structure("token table must start with the special tokens".into()));
        }
        let ids: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if ids.len() != tokens.len() {
            return Err(Error::Structure("token table has duplicate entries".into()));
        }
        Ok(Tokenizer { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Out-of-vocabulary words map to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    /// Space-joined tokens, specials skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= NUM_SPECIALS)
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// JSON object `token → id`, keys sorted.
    pub fn to_json(&self) -> Vec<u8> {
        let map: BTreeMap<&str, usize> = self.ids.iter().map(|(t, &i)| (t.as_str(), i)).collect();
        serde_json::to_vec_pretty(&map).expect("string keys serialize")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let map: BTreeMap<String, usize> = serde_json::from_slice(bytes)?;
        let mut tokens = vec![None; map.len()];
        for (t, i) in map {
            match tokens.get_mut(i) {
                Some(slot @ None) => *slot = Some(t),
                _ => return Err(Error::Structure(format!("token table: id {i} out of range or repeated"))),
            }
        }
        Self::from_tokens(tokens.into_iter().map(|t| t.expect("ids are a permutation")).collect())
    }

    /// SHA-256 of [`Tokenizer::to_json`].
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;

    fn ex(text: &str) -> Example {
        Example {
            id: "m#0".into(),
            meeting_id: "m".into(),
            domain: Domain::Product,
            query: String::new(),
            transcript: text.into(),
            summary: String::new(),
        }
    }

    #[test]
    fn tokenize_splits_words_and_punctuation() {
        assert_eq!(tokenize("PM: We'll use  the RED one."), ["pm", ":", "we", "'", "ll", "use", "the", "red", "one", "."]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("a2b,c"), ["a2b", ",", "c"]);
    }

    #[test]
    fn vocabulary_ranks_by_frequency_then_lexicographically() {
        let e = ex("b b a a c d d d");
        let t = Tokenizer::build([&e], NUM_SPECIALS + 3).unwrap();
        assert_eq!(t.len(), NUM_SPECIALS + 3);
        assert_eq!(t.token(NUM_SPECIALS), Some("d"));
        assert_eq!(t.token(NUM_SPECIALS + 1), Some("a"));
        assert_eq!(t.token(NUM_SPECIALS + 2), Some("b"));
        assert_eq!(t.encode("c a"), vec![UNK, NUM_SPECIALS + 1]);
        for id in NUM_SPECIALS..t.len() {
            assert_eq!(t.id(t.token(id).unwrap()), Some(id));
        }
        assert_eq!(t.decode(&[1, NUM_SPECIALS, 4, NUM_SPECIALS + 2]), "d b");
    }

    #[test]
    fn table_round_trips_through_json() {
        let e = ex("the cat sat on the mat , the end .");
        let t = Tokenizer::build([&e], 100).unwrap();
        let back = Tokenizer::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.hash(), t.hash());
        assert!(Tokenizer::from_json(br#"{"<unk>": 0, "a": 0}"#).is_err());
        assert!(Tokenizer::from_json(br#"{"a": 0}"#).is_err());
    }

    #[test]
    fn empty_training_text_is_rejected() {
        assert!(Tokenizer::build([&ex("  ")], 100).is_err());
        assert!(Tokenizer::build(std::iter::empty(), 100).is_err());
        assert!(Tokenizer::build([&ex("a")], NUM_SPECIALS).unwrap_err().is_config());
    }
}
