//! Template-grammar meetings for tests and desk-scale runs.
//!
//! Every query asks about one topic of the meeting. Somewhere in the
//! transcript a speaker states a decision sentence about that topic, and the
//! gold summary is a fixed lead-in followed by that sentence verbatim. The
//! rest of the transcript is filler drawn from the domain's own word lists.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tokenize, Domain, MeetingRecord, Split};
use crate::rng::{derive_seed, seeded};

/// Target mean lengths, in tokenizer tokens, per domain in
/// [`Domain::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthProfile {
    pub transcript: [f64; 3],
    /// Mean gold summary length the templates are shaped after; not
    /// enforced per meeting.
    pub summary: [f64; 3],
}

impl Default for LengthProfile {
    /// QMSum's per-domain averages scaled down 50× (transcripts) and 5×
    /// (summaries).
    fn default() -> Self {
        LengthProfile {
            transcript: [6007.7 / 50.0, 13317.3 / 50.0, 13761.9 / 50.0],
            summary: [70.5 / 5.0, 53.7 / 5.0, 80.5 / 5.0],
        }
    }
}

impl LengthProfile {
    pub fn transcript_for(&self, d: Domain) -> f64 {
        self.transcript[d as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub meetings_per_domain: usize,
    pub queries_per_meeting: usize,
    pub profile: LengthProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            meetings_per_domain: 48,
            queries_per_meeting: 6,
            profile: LengthProfile::default(),
        }
    }
}

struct Grammar {
    speakers: &'static [&'static str],
    topics: &'static [&'static str],
    /// Slot fillers for decision sentences.
    choices: &'static [&'static str],
    /// Decision templates; `{t}` is the topic, `{c}` a choice.
    decisions: &'static [&'static str],
    query: &'static [&'static str],
    lead: &'static str,
    filler: &'static [&'static str],
    /// Words substituted for `{w}` in filler.
    words: &'static [&'static str],
}

const PRODUCT: Grammar = Grammar {
    speakers: &["PM", "ID", "UI", "ME"],
    topics: &[
        "remote", "battery", "casing", "buttons", "screen", "colour", "logo", "price", "scroll wheel",
        "speech recognition", "charger", "material", "shape", "display", "packaging", "menu",
    ],
    choices: &[
        "rubber", "plastic", "yellow", "curved", "titanium", "solar", "kinetic", "spongy", "fruit shaped",
        "twelve euro", "double curved", "bright", "simple", "large", "rechargeable", "wooden",
    ],
    decisions: &[
        "the {t} will be {c} to keep the production cost low",
        "we go with a {c} {t} for the first prototype",
        "the {t} should be {c} because the market research asked for it",
    ],
    query: &["what did the group decide about the {t} ?", "summarize the decision on the {t} ."],
    lead: "the team agreed that",
    filler: &[
        "i think the {w} is important for our users",
        "okay so let us look at the {w} again",
        "the marketing report says people want a {w}",
        "maybe we can combine the {w} with the {w}",
        "that sounds good but the {w} costs too much",
        "yeah",
        "i am not sure about the {w}",
        "we still have ten minutes for the {w}",
        "the industrial designer can draw the {w}",
        "right , and the {w} needs a {w}",
    ],
    words: &[
        "design", "trend", "budget", "target group", "user", "function", "prototype", "evaluation",
        "component", "chip", "case", "interface", "style", "fashion", "company", "television",
    ],
};

const ACADEMIC: Grammar = Grammar {
    speakers: &["Professor", "Grad", "PhD", "Postdoc"],
    topics: &[
        "recognizer", "transcripts", "corpus", "alignment", "features", "baseline", "evaluation",
        "noise", "microphones", "backoff", "lattice", "prosody", "parser", "annotation", "server", "paper",
    ],
    choices: &[
        "retrained", "rerun", "rewritten", "merged", "dropped", "extended", "archived", "normalized",
        "simplified", "tested again", "shared", "delayed", "split", "relabeled", "cleaned", "published",
    ],
    decisions: &["the {t} gets {c} before the next meeting", "we agreed the {t} is {c} this week"],
    query: &["what was decided regarding the {t} ?", "what is the plan for the {t} ?"],
    lead: "they decided",
    filler: &[
        "so the {w} results look a bit strange",
        "um i ran the {w} on the {w} yesterday",
        "the {w} has a lot of errors in the {w}",
        "uh huh",
        "i guess we could try another {w} for that",
        "the numbers on the {w} went down after the {w}",
        "did anyone check the {w} for the {w} data",
        "it is the same {w} as last time , right",
        "we should write that down in the {w}",
        "hmm , the {w} is still running on the {w}",
    ],
    words: &[
        "word error rate", "training set", "test set", "neural net", "digits", "channel", "far field",
        "near field", "speaker", "frame", "model", "script", "meeting recorder", "database", "weights",
        "spectrum", "vocabulary", "language model",
    ],
};

const COMMITTEE: Grammar = Grammar {
    speakers: &["Chair", "Councillor", "Minister", "Witness"],
    topics: &[
        "funding", "school budget", "housing plan", "bill", "amendment", "report", "consultation",
        "health service", "transport levy", "inquiry", "welsh language scheme", "grant", "tax",
        "childcare offer", "waiting lists", "teacher pay",
    ],
    choices: &[
        "reviewed by the committee", "put to a public vote", "sent back to the government",
        "extended for two years", "frozen until april", "published in full", "funded from reserves",
        "reduced by ten percent", "approved without changes", "scrutinised in the autumn",
    ],
    decisions: &[
        "the {t} will be {c} after the evidence session",
        "members agreed that the {t} should be {c}",
        "the {t} is to be {c} as proposed by the chair",
    ],
    query: &[
        "what did the committee conclude about the {t} ?",
        "summarize the discussion of the {t} and its outcome .",
    ],
    lead: "the committee concluded",
    filler: &[
        "thank you chair , i want to ask about the {w}",
        "the evidence on the {w} is very clear to us",
        "minister , how does the {w} affect the {w}",
        "we have written to the {w} about that",
        "i would refer members to the {w} in our paper",
        "that is a fair point about the {w}",
        "order , order . can we return to the {w}",
        "the {w} was raised by several {w} last week",
        "yes , absolutely",
        "there is a real concern about the {w} in rural areas",
    ],
    words: &[
        "local authority", "stakeholders", "timescale", "legislation", "public", "evidence", "schools",
        "families", "secretary", "regulations", "accountability", "spending", "department", "sector",
        "pupils", "hospitals", "councils", "guidance",
    ],
};

fn grammar(d: Domain) -> &'static Grammar {
    match d {
        Domain::Product => &PRODUCT,
        Domain::Academic => &ACADEMIC,
        Domain::Committee => &COMMITTEE,
    }
}

fn fill(template: &str, slot: &str, mut pick: impl FnMut() -> &'static str) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(i) = rest.find(slot) {
        out.push_str(&rest[..i]);
        out.push_str(pick());
        rest = &rest[i + slot.len()..];
    }
    out.push_str(rest);
    out
}

fn token_count(speaker: &str, utterance: &str) -> usize {
    tokenize(speaker).len() + 1 + tokenize(utterance).len()
}

fn meeting(domain: Domain, index: usize, cfg: &SynthConfig) -> MeetingRecord {
    let g = grammar(domain);
    let mut rng = seeded(derive_seed(cfg.seed, &format!("synth/{domain}/{index}")));
    let target = (cfg.profile.transcript_for(domain) * rng.gen_range(0.8..1.2)).round() as usize;
    let n_queries = cfg.queries_per_meeting.min(g.topics.len());
    let topics: Vec<&str> = g.topics.choose_multiple(&mut rng, n_queries).copied().collect();
    let mut planted = Vec::with_capacity(n_queries);
    let mut query_pairs = Vec::with_capacity(n_queries);
    for t in &topics {
        let template = g.decisions.choose(&mut rng).expect("nonempty");
        let choice = *g.choices.choose(&mut rng).expect("nonempty");
        let decision = fill(&fill(template, "{t}", || t), "{c}", || choice);
        let query = fill(g.query.choose(&mut rng).expect("nonempty"), "{t}", || t);
        query_pairs.push((query, format!("{} {decision} .", g.lead)));
        planted.push(decision);
    }
    let speaker = |rng: &mut rand_chacha::ChaCha8Rng| *g.speakers.choose(rng).expect("nonempty");
    let mut decision_turns: Vec<(String, String)> = planted
        .into_iter()
        .map(|d| (speaker(&mut rng).to_string(), format!("so {d} .")))
        .collect();
    let planted_len: usize = decision_turns.iter().map(|(s, u)| token_count(s, u)).sum();
    let mut filler = Vec::new();
    let mut len = planted_len;
    while len < target {
        let s = speaker(&mut rng);
        let template = *g.filler.choose(&mut rng).expect("nonempty");
        let u = fill(template, "{w}", || *g.words.choose(&mut rng).expect("nonempty"));
        len += token_count(s, &u);
        filler.push((s.to_string(), u));
    }
    // Decisions go at random positions among the filler turns, in topic order.
    let mut slots: Vec<usize> = (0..decision_turns.len())
        .map(|_| rng.gen_range(0..=filler.len()))
        .collect();
    slots.sort_unstable();
    let mut turns = Vec::with_capacity(filler.len() + decision_turns.len());
    let mut planted_iter = decision_turns.drain(..).zip(slots).peekable();
    for (i, f) in filler.into_iter().enumerate() {
        while let Some((turn, _)) = planted_iter.next_if(|(_, s)| *s == i) {
            turns.push(turn);
        }
        turns.push(f);
    }
    turns.extend(planted_iter.map(|(turn, _)| turn));
    MeetingRecord {
        id: format!("{}-{index:03}", domain.short()),
        domain,
        turns,
        query_pairs,
        split: None,
    }
}

/// `meetings_per_domain` meetings for each domain, in [`Domain::ALL`] order.
/// Within a domain a seeded shuffle sends 70% of meetings to train and 15%
/// each to valid and test. Output depends only on `cfg`.
pub fn synth_corpus(cfg: &SynthConfig) -> Vec<MeetingRecord> {
    let mut out = Vec::new();
    for d in Domain::ALL {
        let n = cfg.meetings_per_domain;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded(derive_seed(cfg.seed, &format!("synth-split/{d}"))));
        let n_train = (0.7 * n as f64).round() as usize;
        let n_valid = (0.15 * n as f64).round() as usize;
        let mut split = vec![Split::Test; n];
        for (rank, &i) in order.iter().enumerate() {
            split[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
        for (i, s) in split.into_iter().enumerate() {
            let mut m = meeting(d, i, cfg);
            m.split = Some(s);
            out.push(m);
        }
    }
    out
}
