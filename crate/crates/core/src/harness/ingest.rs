//! Corpus statistics per domain, in the layout of a dataset summary table.

use super::table::Table;
use crate::data::{tokenize, Domain, MeetingRecord, Split};

/// Meetings, query–summary pairs per split, and mean transcript and summary
/// lengths in tokenizer tokens, per domain.
pub fn corpus_table(records: &[MeetingRecord]) -> Table {
    let mut t = Table::new([
        "domain",
        "meetings",
        "train_pairs",
        "valid_pairs",
        "test_pairs",
        "mean_transcript_tokens",
        "mean_summary_tokens",
    ]);
    for d in Domain::ALL {
        let ms: Vec<&MeetingRecord> = records.iter().filter(|r| r.domain == d).collect();
        let pairs = |s: Split| ms.iter().filter(|r| r.split() == s).map(|r| r.query_pairs.len()).sum::<usize>();
        let mean = |xs: Vec<usize>| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<usize>() as f64 / xs.len() as f64
            }
        };
        let transcript = mean(ms.iter().map(|r| tokenize(&r.transcript()).len()).collect());
        let summary = mean(
            ms.iter()
                .flat_map(|r| r.query_pairs.iter().map(|(_, s)| tokenize(s).len()))
                .collect(),
        );
        t.push([
            d.to_string(),
            ms.len().to_string(),
            pairs(Split::Train).to_string(),
            pairs(Split::Valid).to_string(),
            pairs(Split::Test).to_string(),
            format!("{transcript:.1}"),
            format!("{summary:.1}"),
        ]);
    }
    t
}
