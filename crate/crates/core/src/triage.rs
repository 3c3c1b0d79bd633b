//! Lexicon-based priority flagging of a conversation's opening message, and
//! the priority sentence prepended to scorer input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize::tokenize;
use crate::corpus::Conversation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityLevel {
    High,
    Medium,
    Low,
    #[serde(rename = "none")]
    NoGroundTruth,
}

impl PriorityLevel {
    /// Escalation rank: higher is more urgent. `NoGroundTruth` is unranked.
    pub fn rank(self) -> Option<u8> {
        match self {
            PriorityLevel::High => Some(3),
            PriorityLevel::Medium => Some(2),
            PriorityLevel::Low => Some(1),
            PriorityLevel::NoGroundTruth => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PriorityLevel::High => "high",
            PriorityLevel::Medium => "medium",
            PriorityLevel::Low => "low",
            PriorityLevel::NoGroundTruth => "none",
        }
    }

    /// Compare urgency; `None` when either side is `NoGroundTruth`.
    pub fn escalation_cmp(self, other: PriorityLevel) -> Option<std::cmp::Ordering> {
        Some(self.rank()?.cmp(&other.rank()?))
    }
}

impl fmt::Display for PriorityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("lexicon has no entries")]
    Empty,
    #[error("language {language:?}: entry {entry:?} is not lowercase")]
    NotLowercase { language: String, entry: String },
    #[error("language {language:?}: {entry:?} is listed as both high and medium")]
    Overlap { language: String, entry: String },
    #[error("invalid lexicon file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Word lists for one language. Entries may be multi-word phrases; matching
/// is on whole tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelWords {
    #[serde(default)]
    pub high: BTreeSet<String>,
    #[serde(default)]
    pub medium: BTreeSet<String>,
    #[serde(default)]
    pub low: BTreeSet<String>,
}

impl LevelWords {
    fn is_empty(&self) -> bool {
        self.high.is_empty() && self.medium.is_empty() && self.low.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LexiconFileEntry {
    language: String,
    #[serde(flatten)]
    words: LevelWords,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriageLexicon {
    entries: BTreeMap<String, LevelWords>,
}

/// Illustrative word lists shipped with the crate. Real deployments load their own.
pub const DEFAULT_LEXICON_JSON: &str = include_str!("../fixtures/triage_lexicon.json");

impl TriageLexicon {
    pub fn new(entries: BTreeMap<String, LevelWords>) -> Result<Self, LexiconError> {
        if entries.values().all(LevelWords::is_empty) {
            return Err(LexiconError::Empty);
        }
        for (language, words) in &entries {
            for entry in words.high.iter().chain(&words.medium).chain(&words.low) {
                if entry.to_lowercase() != *entry {
                    return Err(LexiconError::NotLowercase {
                        language: language.clone(),
                        entry: entry.clone(),
                    });
                }
            }
            if let Some(entry) = words.high.intersection(&words.medium).next() {
                return Err(LexiconError::Overlap {
                    language: language.clone(),
                    entry: entry.clone(),
                });
            }
        }
        Ok(TriageLexicon { entries })
    }

    /// Parse the lexicon file: a JSON array of
    /// `{"language": .., "high": [..], "medium": [..], "low": [..]}` objects
    /// (a single object is accepted too).
    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let files: Vec<LexiconFileEntry> = if value.is_array() {
            serde_json::from_value(value)?
        } else {
            vec![serde_json::from_value(value)?]
        };
        let mut entries: BTreeMap<String, LevelWords> = BTreeMap::new();
        for f in files {
            let slot = entries.entry(f.language).or_default();
            slot.high.extend(f.words.high);
            slot.medium.extend(f.words.medium);
            slot.low.extend(f.words.low);
        }
        Self::new(entries)
    }

    pub fn to_json(&self) -> String {
        let files: Vec<LexiconFileEntry> = self
            .entries
            .iter()
            .map(|(language, words)| LexiconFileEntry {
                language: language.clone(),
                words: words.clone(),
            })
            .collect();
        serde_json::to_string_pretty(&files).expect("lexicon serializes")
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_LEXICON_JSON).expect("bundled lexicon is valid")
    }

    pub fn languages(&self) -> impl Iterator<Item = (&str, &LevelWords)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn words(&self, language: &str) -> Option<&LevelWords> {
        self.entries.get(language)
    }

    /// Add a word to one level. Used by tests and tooling; keeps invariants.
    pub fn insert(&mut self, language: &str, level: PriorityLevel, word: &str) -> Result<(), LexiconError> {
        let mut entries = self.entries.clone();
        let slot = entries.entry(language.to_string()).or_default();
        let set = match level {
            PriorityLevel::High => &mut slot.high,
            PriorityLevel::Medium => &mut slot.medium,
            PriorityLevel::Low => &mut slot.low,
            PriorityLevel::NoGroundTruth => return Ok(()),
        };
        set.insert(word.to_string());
        *self = Self::new(entries)?;
        Ok(())
    }
}

fn phrase_matches(tokens: &[String], phrase: &str) -> bool {
    let needle = tokenize(phrase);
    match needle.len() {
        0 => false,
        1 => tokens.iter().any(|t| *t == needle[0]),
        n => tokens.windows(n).any(|w| w == needle.as_slice()),
    }
}

/// Flag the opening message: the most urgent level with any matching entry
/// in any language; `Medium` when nothing matches; `NoGroundTruth` for an
/// empty message.
pub fn assign_priority(first_message: &str, lexicon: &TriageLexicon) -> PriorityLevel {
    let tokens = tokenize(first_message);
    if tokens.is_empty() {
        return PriorityLevel::NoGroundTruth;
    }
    let hit = |pick: fn(&LevelWords) -> &BTreeSet<String>| {
        lexicon
            .entries
            .values()
            .any(|words| pick(words).iter().any(|w| phrase_matches(&tokens, w)))
    };
    if hit(|w| &w.high) {
        PriorityLevel::High
    } else if hit(|w| &w.medium) {
        PriorityLevel::Medium
    } else if hit(|w| &w.low) {
        PriorityLevel::Low
    } else {
        PriorityLevel::Medium
    }
}

/// The sentence prepended to scorer input, or `None` for `NoGroundTruth`.
pub fn priority_sentence(priority: PriorityLevel) -> Option<String> {
    match priority {
        PriorityLevel::NoGroundTruth => None,
        p => Some(format!("This conversation is of <<{}>> priority. ", p.as_str())),
    }
}

/// Conversation text with the priority sentence in front.
pub fn priority_prefix(conv: &Conversation) -> String {
    let text = conv.text();
    match priority_sentence(conv.priority) {
        Some(sentence) => sentence + &text,
        None => text,
    }
}
