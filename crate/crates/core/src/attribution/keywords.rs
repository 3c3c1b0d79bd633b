//! Keyword selection from token attributions, lexical filtering, and
//! per-tag aggregation.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{integrated_gradients, AttributionError, AttributionVector};
use crate::corpus::tokenize::SCRUB_TOKEN;
use crate::corpus::Conversation;
use crate::scorer::Scorer;
use crate::tags::IssueTag;

pub const DEFAULT_KEYWORD_PERCENTILE: f64 = 0.9;

/// Linear-interpolation quantile of `values` at `q` in `[0, 1]`; `None` when empty.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (rank - lo as f64))
}

/// Conversation tokens scoring at least `threshold`, first occurrence kept.
/// Without a threshold, uses the 90th percentile of the positive scores;
/// a conversation with no positive score yields nothing.
pub fn extract_keywords(attr: &AttributionVector, threshold: Option<f64>) -> Vec<String> {
    let threshold = match threshold {
        Some(t) => t,
        None => {
            let positive: Vec<f64> = attr.content().map(|(_, s)| s).filter(|s| *s > 0.0).collect();
            match percentile(&positive, DEFAULT_KEYWORD_PERCENTILE) {
                Some(t) => t,
                None => return Vec::new(),
            }
        }
    };
    let mut seen = HashSet::new();
    attr.content()
        .filter(|(_, s)| *s >= threshold)
        .filter(|(t, _)| seen.insert(*t))
        .map(|(t, _)| t.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pos {
    Noun,
    Adjective,
    Verb,
    Adverb,
    Pronoun,
    Determiner,
    Preposition,
    Conjunction,
    Numeral,
    Interjection,
    Other,
}

pub trait PosTagger: Send + Sync {
    fn tag(&self, word: &str) -> Pos;
}

/// Closed-class lexicon first, then suffix rules, defaulting to noun.
#[derive(Debug, Clone, Default)]
pub struct HeuristicTagger;

const PRONOUNS: &[&str] = &[
    "i",
    "me",
    "my",
    "mine",
    "myself",
    "you",
    "your",
    "yours",
    "yourself",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "we",
    "us",
    "our",
    "ours",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "who",
    "whom",
    "whose",
    "someone",
    "anyone",
    "everyone",
    "nobody",
    "somebody",
    "anybody",
    "everybody",
    "something",
    "anything",
    "everything",
    "nothing",
];
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no", "all", "both", "either",
    "neither", "much", "many", "few", "several", "such", "what", "which",
];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "out", "off", "over", "under", "of", "around", "near",
    "without", "within", "since", "until", "toward", "towards", "across", "behind", "like",
];
const CONJUNCTIONS: &[&str] = &[
    "and", "but", "or", "nor", "so", "yet", "because", "if", "when", "while", "although", "though", "unless",
    "whether", "than", "as",
];
const INTERJECTIONS: &[&str] = &[
    "hi", "hey", "hello", "ok", "okay", "yeah", "yes", "no", "oh", "um", "uh", "hmm", "thanks", "bye",
];
const VERBS: &[&str] = &[
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "do",
    "does",
    "did",
    "can",
    "could",
    "will",
    "would",
    "shall",
    "should",
    "may",
    "might",
    "must",
    "get",
    "got",
    "go",
    "went",
    "gone",
    "feel",
    "felt",
    "want",
    "know",
    "knew",
    "think",
    "thought",
    "say",
    "said",
    "tell",
    "told",
    "make",
    "made",
    "take",
    "took",
    "see",
    "saw",
    "come",
    "came",
    "give",
    "gave",
    "keep",
    "kept",
    "let",
    "try",
    "need",
    "seem",
    "hurt",
    "cut",
    "die",
    "kill",
    "cry",
    "hate",
    "talk",
    "help",
    "leave",
    "left",
    "stop",
    "start",
    "eat",
    "sleep",
    "live",
    "love",
    "fight",
    "hit",
    "yell",
    "scream",
    "drink",
    "smoke",
    "lose",
    "lost",
    "miss",
    "call",
    "text",
    "connect",
    "listen",
    "understand",
    "sit",
    "stay",
    "run",
    "ran",
    "find",
    "found",
    "put",
    "mean",
    "meant",
];
const ADVERBS: &[&str] = &[
    "not",
    "very",
    "really",
    "just",
    "too",
    "also",
    "never",
    "always",
    "often",
    "sometimes",
    "again",
    "still",
    "even",
    "ever",
    "here",
    "there",
    "now",
    "then",
    "today",
    "tonight",
    "anymore",
    "maybe",
    "already",
    "soon",
    "almost",
    "how",
    "why",
    "where",
    "away",
    "back",
    "only",
    "well",
    "quite",
    "rather",
];
const ADJECTIVES: &[&str] = &[
    "sad",
    "alone",
    "lonely",
    "scared",
    "afraid",
    "tired",
    "worried",
    "depressed",
    "anxious",
    "stressed",
    "upset",
    "angry",
    "mad",
    "bad",
    "good",
    "hard",
    "sick",
    "ugly",
    "fat",
    "worthless",
    "hopeless",
    "numb",
    "empty",
    "ashamed",
    "isolated",
    "abused",
    "bullied",
    "drunk",
    "high",
    "low",
    "safe",
    "unsafe",
    "gay",
    "trans",
    "queer",
    "dead",
    "old",
    "young",
    "new",
    "big",
    "small",
    "little",
    "other",
    "same",
    "own",
    "able",
    "sure",
    "wrong",
    "right",
    "okay",
    "fine",
    "great",
    "awful",
    "terrible",
    "horrible",
    "broken",
    "overwhelmed",
    "panicked",
    "friendly",
    "ugly",
    "silly",
    "holy",
    "only",
    "lovely",
    "ill",
];

/// Nouns the suffix rules would misread.
const NOUNS: &[&str] = &[
    "family",
    "bully",
    "belly",
    "ally",
    "assembly",
    "reply",
    "supply",
    "anniversary",
    "feeling",
    "feelings",
    "wedding",
    "morning",
    "evening",
    "building",
    "bed",
    "blood",
    "friend",
    "weed",
    "seed",
    "speed",
    "greed",
    "red",
    "shed",
    "medical",
    "hospital",
    "animal",
    "approval",
    "funeral",
    "festival",
    "tribal",
    "criminal",
    "disorder",
    "bedroom",
];

fn in_list(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

impl PosTagger for HeuristicTagger {
    fn tag(&self, word: &str) -> Pos {
        let w = word.to_lowercase();
        if w.chars().any(|c| c.is_ascii_digit()) && w.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            return Pos::Numeral;
        }
        if !w.chars().any(char::is_alphabetic) {
            return Pos::Other;
        }
        // open-class entries before closed ones: "high" and "okay" read as adjectives here
        if in_list(ADJECTIVES, &w) {
            return Pos::Adjective;
        }
        for (list, pos) in [
            (PRONOUNS, Pos::Pronoun),
            (DETERMINERS, Pos::Determiner),
            (PREPOSITIONS, Pos::Preposition),
            (CONJUNCTIONS, Pos::Conjunction),
            (INTERJECTIONS, Pos::Interjection),
            (VERBS, Pos::Verb),
            (ADVERBS, Pos::Adverb),
        ] {
            if in_list(list, &w) {
                return pos;
            }
        }
        if in_list(NOUNS, &w) {
            return Pos::Noun;
        }
        let long = w.chars().count() > 4;
        if long && w.ends_with("ly") {
            Pos::Adverb
        } else if long && (w.ends_with("ing") || w.ends_with("ed")) {
            Pos::Verb
        } else if long
            && ["ous", "ful", "less", "ive", "able", "ible", "ical", "ish", "ic", "al"]
                .iter()
                .any(|s| w.ends_with(s))
        {
            Pos::Adjective
        } else if long && (w.ends_with("ize") || w.ends_with("ise") || w.ends_with("ify")) {
            Pos::Verb
        } else {
            Pos::Noun
        }
    }
}

const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "im",
    "dont",
    "cant",
    "s",
    "t",
    "m",
    "re",
    "ve",
    "ll",
    "d",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordFilterConfig {
    pub stopwords: BTreeSet<String>,
    pub punctuation: BTreeSet<char>,
    pub special_tokens: BTreeSet<String>,
    pub custom: BTreeSet<String>,
    pub pos_keep: BTreeSet<Pos>,
}

impl Default for KeywordFilterConfig {
    fn default() -> Self {
        KeywordFilterConfig {
            stopwords: STOPWORDS.iter().map(|s| s.to_string()).collect(),
            punctuation: ('!'..='~').filter(|c| c.is_ascii_punctuation()).collect(),
            // priority-sentence tokens are excluded by position in `extract_keywords`
            special_tokens: [SCRUB_TOKEN].iter().map(|s| s.to_string()).collect(),
            custom: ["user", "hello", "connect"].iter().map(|s| s.to_string()).collect(),
            pos_keep: [Pos::Noun, Pos::Adjective].into(),
        }
    }
}

impl KeywordFilterConfig {
    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.pos_keep.is_empty() {
            return Err(AttributionError::Invalid("pos_keep must not be empty".into()));
        }
        Ok(())
    }

    fn is_punctuation(&self, word: &str) -> bool {
        !word.is_empty() && word.chars().all(|c| self.punctuation.contains(&c))
    }

    pub fn keeps(&self, word: &str, tagger: &dyn PosTagger) -> bool {
        let lower = word.to_lowercase();
        !(self.stopwords.contains(&lower)
            || self.is_punctuation(word)
            || self.special_tokens.contains(&lower)
            || self.custom.contains(&lower))
            && self.pos_keep.contains(&tagger.tag(word))
    }
}

/// Order-preserving filter of `keywords`.
pub fn filter_keywords(keywords: &[String], config: &KeywordFilterConfig, tagger: &dyn PosTagger) -> Vec<String> {
    keywords.iter().filter(|k| config.keeps(k, tagger)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordTable {
    pub target: IssueTag,
    pub conversations: usize,
    /// Filtered keywords summed over conversations.
    pub total_keywords: usize,
    pub mean_per_conversation: f64,
    /// Keyword and number of conversations contributing it, most frequent
    /// first, ties alphabetical; truncated to `top_n`.
    pub rows: Vec<(String, usize)>,
    /// Filtered keyword list of each conversation, in input order.
    pub per_conversation: Vec<Vec<String>>,
}

impl KeywordTable {
    /// Count keyword occurrences across per-conversation lists.
    pub fn from_lists(target: IssueTag, lists: Vec<Vec<String>>, top_n: Option<usize>) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for list in &lists {
            for k in list {
                *counts.entry(k).or_default() += 1;
            }
        }
        let mut rows: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
        // BTreeMap order is lexicographic and the sort is stable
        rows.sort_by(|a, b| b.1.cmp(&a.1));
        if let Some(n) = top_n {
            rows.truncate(n);
        }
        let total_keywords = lists.iter().map(Vec::len).sum();
        let conversations = lists.len();
        KeywordTable {
            target,
            conversations,
            total_keywords,
            mean_per_conversation: if conversations == 0 {
                0.0
            } else {
                total_keywords as f64 / conversations as f64
            },
            rows,
            per_conversation: lists,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("keyword\tconversations\n");
        for (k, c) in &self.rows {
            out.push_str(&format!("{k}\t{c}\n"));
        }
        out
    }
}

/// Attribute, extract and filter keywords for every conversation in
/// `subset`, then count them.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_keywords(
    subset: &[Conversation],
    scorer: &dyn Scorer,
    target: IssueTag,
    config: &KeywordFilterConfig,
    tagger: &dyn PosTagger,
    steps: usize,
    threshold: Option<f64>,
    top_n: Option<usize>,
) -> Result<KeywordTable, AttributionError> {
    config.validate()?;
    if subset.is_empty() {
        return Err(AttributionError::Invalid(
            "keyword aggregation needs at least one conversation".into(),
        ));
    }
    let lists = subset
        .par_iter()
        .map(|conv| {
            let attr = integrated_gradients(scorer, conv, target, steps)?;
            Ok(filter_keywords(&extract_keywords(&attr, threshold), config, tagger))
        })
        .collect::<Result<Vec<_>, AttributionError>>()?;
    Ok(KeywordTable::from_lists(target, lists, top_n))
}
