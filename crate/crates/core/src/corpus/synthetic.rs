//! Seeded synthetic corpus generator.
//!
//! Each conversation is a run of alternating turns filled with everyday
//! vocabulary, with a handful of per-tag theme words planted in the
//! service-user turns so a bag-of-ngrams model has real signal to learn.
//! Tag counts, tag prevalence and conversation length follow the shapes of
//! a large crisis-line corpus; demographics are drawn independently of text.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::demographics::DemographicCategory;
use super::{Batch, Conversation, DemographicSurvey, Speaker, Turn};
use crate::tags::{IssueTag, TagSet, TAG_COUNT};
use crate::triage::{assign_priority, TriageLexicon};

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("corpus size must be at least 1")]
    ZeroSize,
    #[error("theme lexicon for {tag} has {count} words; at least 10 are required")]
    LexiconTooSmall { tag: IssueTag, count: usize },
    #[error("invalid generator config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicSampling {
    /// Every subgroup equally likely.
    #[default]
    Uniform,
    /// Survey marginals of the reference population.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub size: usize,
    pub tag_lexicons: BTreeMap<IssueTag, Vec<String>>,
    pub noise_vocabulary: Vec<String>,
    /// Relative prevalence weight per tag, canonical order.
    pub tag_prevalence: [f64; TAG_COUNT],
    /// Weight of a conversation carrying `k + 1` tags.
    pub tag_count_weights: Vec<f64>,
    pub median_tokens: f64,
    pub length_sigma: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Inclusive range of theme words planted per true tag. The lower bound is at least 3.
    pub theme_hits: (usize, usize),
    /// Probability of planting one or two theme words from a tag the conversation does not carry.
    pub distractor_rate: f64,
    pub survey_rate: f64,
    pub demographic_sampling: DemographicSampling,
    /// Chance of a high-lexicon word in the opening message for Suicide / Self Harm conversations.
    pub high_risk_rate: f64,
    /// Same, for all other conversations.
    pub base_high_rate: f64,
    pub silent_test_fraction: f64,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

pub fn default_theme_lexicons() -> BTreeMap<IssueTag, Vec<String>> {
    use IssueTag::*;
    let table: [(IssueTag, &[&str]); TAG_COUNT] = [
        (
            ThirdParty,
            &[
                "friend",
                "sister",
                "brother",
                "cousin",
                "roommate",
                "classmate",
                "neighbour",
                "behalf",
                "concerned",
                "bestie",
                "buddy",
                "colleague",
            ],
        ),
        (
            AbuseEmotional,
            &[
                "yelling",
                "insults",
                "belittle",
                "manipulate",
                "gaslighting",
                "threatens",
                "controlling",
                "humiliate",
                "worthless",
                "screaming",
                "guilt",
                "criticize",
            ],
        ),
        (
            AbusePhysical,
            &[
                "hit",
                "punched",
                "slapped",
                "bruises",
                "kicked",
                "beaten",
                "choked",
                "shoved",
                "violent",
                "bruise",
                "strangled",
                "grabbed",
            ],
        ),
        (
            AbuseSexual,
            &[
                "touched", "assault", "raped", "molested", "groped", "consent", "harassed", "unwanted", "forced",
                "abuser", "predator", "exposed",
            ],
        ),
        (
            AnxietyStress,
            &[
                "anxious",
                "panic",
                "stress",
                "stressed",
                "overwhelmed",
                "nervous",
                "exams",
                "deadline",
                "worry",
                "tense",
                "racing",
                "pressure",
            ],
        ),
        (
            Bully,
            &[
                "bullied",
                "bullies",
                "teased",
                "mocked",
                "excluded",
                "gossip",
                "rumours",
                "cyberbullying",
                "picked",
                "bully",
                "taunts",
                "laughed",
            ],
        ),
        (
            Depressed,
            &[
                "depressed",
                "hopeless",
                "empty",
                "numb",
                "sad",
                "crying",
                "tired",
                "unmotivated",
                "worthlessness",
                "darkness",
                "bed",
                "miserable",
            ],
        ),
        (
            Dne,
            &[
                "nevermind",
                "nvm",
                "brb",
                "gtg",
                "hmm",
                "idk",
                "whatever",
                "cya",
                "ttyl",
                "k",
                "lol",
                "meh",
            ],
        ),
        (
            EatingBodyImage,
            &[
                "eating", "weight", "fat", "calories", "binge", "purge", "starving", "diet", "mirror", "body",
                "skinny", "meals",
            ],
        ),
        (
            GenderSexualIdentity,
            &[
                "gay",
                "lesbian",
                "queer",
                "trans",
                "pronouns",
                "coming",
                "closet",
                "bisexual",
                "dysphoria",
                "nonbinary",
                "identity",
                "homophobic",
            ],
        ),
        (
            Grief,
            &[
                "died", "funeral", "passed", "loss", "grieving", "grandma", "grandpa", "mourning", "death", "miss",
                "memorial", "cancer",
            ],
        ),
        (
            Isolated,
            &[
                "lonely",
                "alone",
                "isolated",
                "nobody",
                "friendless",
                "ignored",
                "invisible",
                "disconnected",
                "outcast",
                "solitude",
                "abandoned",
                "loner",
            ],
        ),
        (
            Other,
            &[
                "money",
                "housing",
                "job",
                "rent",
                "landlord",
                "immigration",
                "visa",
                "car",
                "legal",
                "court",
                "bills",
                "debt",
            ],
        ),
        (
            Prank,
            &[
                "prank", "joke", "lmao", "haha", "dare", "trolling", "fake", "kidding", "bored", "funny", "pranking",
                "lolol",
            ],
        ),
        (
            Relationship,
            &[
                "boyfriend",
                "girlfriend",
                "breakup",
                "partner",
                "ex",
                "dating",
                "cheated",
                "dumped",
                "marriage",
                "divorce",
                "crush",
                "argument",
            ],
        ),
        (
            SelfHarm,
            &[
                "cutting",
                "scars",
                "blade",
                "burn",
                "razor",
                "relapse",
                "wounds",
                "bleeding",
                "scratching",
                "harm",
                "urges",
                "bandage",
            ],
        ),
        (
            SubstanceAbuse,
            &[
                "drunk",
                "alcohol",
                "weed",
                "vaping",
                "drugs",
                "addiction",
                "sober",
                "cocaine",
                "smoking",
                "drinking",
                "withdrawal",
                "dealer",
            ],
        ),
        (
            Suicide,
            &[
                "suicidal",
                "die",
                "dying",
                "ending",
                "unalive",
                "jump",
                "bridge",
                "goodbyes",
                "note",
                "disappear",
                "exist",
                "life",
            ],
        ),
        (
            Testing,
            &[
                "test",
                "testing",
                "checking",
                "works",
                "trying",
                "service",
                "bot",
                "real",
                "automated",
                "curious",
                "number",
                "texting",
            ],
        ),
    ];
    table.into_iter().map(|(t, w)| (t, words(w))).collect()
}

pub fn default_noise_vocabulary() -> Vec<String> {
    words(&[
        "the",
        "a",
        "and",
        "i",
        "you",
        "to",
        "of",
        "it",
        "is",
        "in",
        "that",
        "my",
        "me",
        "so",
        "just",
        "but",
        "what",
        "have",
        "not",
        "do",
        "be",
        "was",
        "for",
        "on",
        "with",
        "this",
        "are",
        "like",
        "can",
        "about",
        "know",
        "feel",
        "really",
        "think",
        "get",
        "yeah",
        "want",
        "how",
        "okay",
        "thanks",
        "at",
        "or",
        "one",
        "all",
        "if",
        "when",
        "they",
        "we",
        "out",
        "there",
        "up",
        "time",
        "day",
        "today",
        "now",
        "because",
        "been",
        "would",
        "could",
        "things",
        "something",
        "some",
        "more",
        "go",
        "going",
        "home",
        "school",
        "work",
        "mom",
        "dad",
        "family",
        "people",
        "talk",
        "talking",
        "said",
        "say",
        "told",
        "help",
        "sorry",
        "right",
        "maybe",
        "lot",
        "much",
        "never",
        "always",
        "still",
        "even",
        "back",
        "again",
        "week",
        "night",
        "morning",
        "yesterday",
        "tomorrow",
        "better",
        "good",
        "bad",
        "hard",
        "little",
        "try",
        "make",
        "made",
        "see",
        "look",
        "let",
        "thing",
        "way",
        "understand",
        "sounds",
        "hear",
        "safe",
        "support",
        "together",
        "breathe",
        "strength",
        "proud",
        "share",
        "brave",
        "courage",
        "moment",
        "feelings",
        "reach",
        "glad",
        "listen",
        "your",
        "he",
        "she",
        "them",
        "her",
        "him",
        "our",
        "their",
        "here",
        "where",
        "why",
        "who",
        "which",
        "than",
        "then",
        "very",
        "too",
        "also",
        "only",
        "any",
        "every",
        "no",
        "yes",
        "please",
        "thank",
        "sure",
        "well",
        "kind",
        "need",
        "feeling",
        "felt",
        "tell",
        "mean",
        "pretty",
        "stuff",
        "probably",
        "actually",
        "anything",
        "everything",
        "nothing",
        "someone",
        "everyone",
        "class",
        "room",
        "phone",
        "message",
        "text",
        "weekend",
        "summer",
        "winter",
        "music",
        "game",
        "games",
        "show",
        "movie",
        "food",
        "dinner",
        "lunch",
        "breakfast",
        "sleep",
        "walk",
        "outside",
        "house",
        "town",
        "city",
        "bus",
        "teacher",
        "counsellor",
        "doctor",
        "appointment",
        "plans",
        "later",
        "soon",
        "last",
        "first",
        "next",
        "long",
        "short",
        "new",
        "old",
        "big",
        "small",
        "happy",
        "calm",
        "quiet",
        "loud",
        "busy",
        "free",
        "easy",
        "important",
        "different",
        "same",
        "whole",
        "idea",
        "question",
        "answer",
        "reason",
        "minute",
        "hour",
        "year",
        "month",
        "place",
    ])
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        // Prevalence ranks Anxiety/Stress > Depressed > Relationship > Suicide > Isolated,
        // with Prank rarest at roughly 1% of the top tag.
        let mut tag_prevalence = [0.03; TAG_COUNT];
        let set = |p: &mut [f64; TAG_COUNT], t: IssueTag, v: f64| p[t.index()] = v;
        set(&mut tag_prevalence, IssueTag::AnxietyStress, 0.35);
        set(&mut tag_prevalence, IssueTag::Depressed, 0.25);
        set(&mut tag_prevalence, IssueTag::Relationship, 0.22);
        set(&mut tag_prevalence, IssueTag::Suicide, 0.15);
        set(&mut tag_prevalence, IssueTag::Isolated, 0.12);
        set(&mut tag_prevalence, IssueTag::SelfHarm, 0.08);
        set(&mut tag_prevalence, IssueTag::ThirdParty, 0.05);
        set(&mut tag_prevalence, IssueTag::AbuseEmotional, 0.04);
        set(&mut tag_prevalence, IssueTag::Dne, 0.04);
        set(&mut tag_prevalence, IssueTag::GenderSexualIdentity, 0.04);
        set(&mut tag_prevalence, IssueTag::Grief, 0.04);
        set(&mut tag_prevalence, IssueTag::Testing, 0.01);
        set(&mut tag_prevalence, IssueTag::Prank, 0.004);

        // 54% single-tag; the rest decays geometrically over 2..=9 tags.
        let mut tag_count_weights = vec![0.54];
        let tail: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
        let tail_sum: f64 = tail.iter().sum();
        tag_count_weights.extend(tail.iter().map(|w| 0.46 * w / tail_sum));

        GeneratorConfig {
            size: 1000,
            tag_lexicons: default_theme_lexicons(),
            noise_vocabulary: default_noise_vocabulary(),
            tag_prevalence,
            tag_count_weights,
            median_tokens: 850.0,
            length_sigma: 0.45,
            min_tokens: 40,
            max_tokens: 4000,
            theme_hits: (4, 10),
            distractor_rate: 0.3,
            survey_rate: 0.17,
            demographic_sampling: DemographicSampling::Uniform,
            high_risk_rate: 0.45,
            base_high_rate: 0.04,
            silent_test_fraction: 0.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.size == 0 {
            return Err(GeneratorError::ZeroSize);
        }
        for tag in IssueTag::ALL {
            let count = self.tag_lexicons.get(&tag).map_or(0, Vec::len);
            if count < 10 {
                return Err(GeneratorError::LexiconTooSmall { tag, count });
            }
        }
        let invalid = |m: &str| Err(GeneratorError::Invalid(m.to_string()));
        if self.tag_count_weights.is_empty()
            || self.tag_count_weights.len() > TAG_COUNT
            || self.tag_count_weights.iter().any(|w| !(*w >= 0.0))
            || self.tag_count_weights.iter().sum::<f64>() <= 0.0
        {
            return invalid("tag_count_weights must hold 1..=19 non-negative weights with positive sum");
        }
        if self.tag_prevalence.iter().any(|w| !(*w > 0.0)) {
            return invalid("tag_prevalence weights must be positive");
        }
        if !(self.median_tokens >= 1.0) || !(self.length_sigma >= 0.0) {
            return invalid("length distribution parameters out of range");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return invalid("min_tokens must be in 1..=max_tokens");
        }
        if self.theme_hits.0 < 3 || self.theme_hits.0 > self.theme_hits.1 {
            return invalid("theme_hits must satisfy 3 <= min <= max");
        }
        for (name, p) in [
            ("distractor_rate", self.distractor_rate),
            ("survey_rate", self.survey_rate),
            ("high_risk_rate", self.high_risk_rate),
            ("base_high_rate", self.base_high_rate),
            ("silent_test_fraction", self.silent_test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GeneratorError::Invalid(format!("{name} must be in [0, 1]")));
            }
        }
        let theme: BTreeSet<&String> = self.tag_lexicons.values().flatten().collect();
        if self.noise_vocabulary.iter().filter(|w| !theme.contains(w)).count() < 10 {
            return invalid("noise vocabulary needs at least 10 words outside the theme lexicons");
        }
        Ok(())
    }
}

// Survey marginals (percent) for `DemographicSampling::Observed`, vocabulary order.
const GENDER_PCT: &[f64] = &[15.4, 75.6, 2.3, 0.4, 5.8, 0.5];
const ORIENTATION_PCT: &[f64] = &[55.5, 6.5, 27.0, 3.3, 7.8];
const IDENTITY_PCT: &[f64] = &[16.9, 1.2, 4.6, 5.7, 0.9, 0.8, 67.3, 2.7, 2.7];
const ETHNICITY_PCT: &[f64] = &[78.1, 4.2, 2.1, 6.3, 2.2, 2.7, 2.8, 1.7];

fn weighted_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn plant<'a, R: Rng>(rng: &mut R, turn_words: &mut [Vec<&'a str>], candidates: &[usize], word: &'a str) {
    let t = *candidates.choose(rng).expect("at least one candidate turn");
    let pos = rng.random_range(0..=turn_words[t].len());
    turn_words[t].insert(pos, word);
}

fn sample_tags<R: Rng>(rng: &mut R, config: &GeneratorConfig) -> TagSet {
    let k = weighted_index(rng, &config.tag_count_weights) + 1;
    let mut weights = config.tag_prevalence;
    let mut tags = TagSet::empty();
    for _ in 0..k {
        let i = weighted_index(rng, &weights);
        tags.insert(IssueTag::ALL[i]);
        weights[i] = 0.0;
    }
    tags
}

fn sample_survey<R: Rng>(rng: &mut R, sampling: DemographicSampling) -> DemographicSurvey {
    let mut survey = DemographicSurvey::default();
    for category in DemographicCategory::ALL {
        let vocab = category.vocabulary();
        let i = match sampling {
            DemographicSampling::Uniform => rng.random_range(0..vocab.len()),
            DemographicSampling::Observed => {
                let pct = match category {
                    DemographicCategory::Gender => GENDER_PCT,
                    DemographicCategory::Orientation => ORIENTATION_PCT,
                    DemographicCategory::Identity => IDENTITY_PCT,
                    DemographicCategory::Ethnicity => ETHNICITY_PCT,
                };
                weighted_index(rng, pct)
            }
        };
        survey.set(category, Some(vocab[i])).expect("vocabulary value");
    }
    survey
}

/// Generate with the bundled triage lexicon deciding priorities.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<Vec<Conversation>, GeneratorError> {
    generate_synthetic_with_lexicon(config, seed, &TriageLexicon::builtin())
}

pub fn generate_synthetic_with_lexicon(
    config: &GeneratorConfig,
    seed: u64,
    lexicon: &TriageLexicon,
) -> Result<Vec<Conversation>, GeneratorError> {
    config.validate()?;
    let theme_words: BTreeSet<&String> = config.tag_lexicons.values().flatten().collect();
    let noise: Vec<&str> = config
        .noise_vocabulary
        .iter()
        .filter(|w| !theme_words.contains(w))
        .map(String::as_str)
        .collect();
    // single-token high words from the first language that has any
    let high_words: Vec<&str> = lexicon
        .languages()
        .map(|(_, w)| {
            w.high
                .iter()
                .filter(|h| !h.contains(' '))
                .map(String::as_str)
                .collect::<Vec<_>>()
        })
        .find(|v| !v.is_empty())
        .unwrap_or_default();
    let lexicons: Vec<&Vec<String>> = IssueTag::ALL.iter().map(|t| &config.tag_lexicons[t]).collect();
    let length_dist = LogNormal::new(config.median_tokens.ln(), config.length_sigma)
        .map_err(|e| GeneratorError::Invalid(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // separate stream: demographics never depend on text draws
    let mut demo_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_de30_0000_0001);

    let mut corpus = Vec::with_capacity(config.size);
    for i in 0..config.size {
        let tags = sample_tags(&mut rng, config);
        let target = (length_dist.sample(&mut rng).round() as usize).clamp(config.min_tokens, config.max_tokens);

        // turns of 8..=40 words plus a closing period
        let mut turn_words: Vec<Vec<&str>> = Vec::new();
        let mut total = 0;
        while total < target {
            let len = rng.random_range(8..=40).min(target - total).max(1);
            let body: Vec<&str> = (0..len.saturating_sub(1).max(1))
                .map(|_| *noise.choose(&mut rng).expect("noise vocabulary non-empty"))
                .collect();
            total += body.len() + 1;
            turn_words.push(body);
        }

        let user_turns: Vec<usize> = (0..turn_words.len()).step_by(2).collect();
        for tag in tags.iter() {
            let lex = lexicons[tag.index()];
            let hits = rng.random_range(config.theme_hits.0..=config.theme_hits.1);
            for _ in 0..hits {
                let w = lex.choose(&mut rng).expect("lexicon non-empty");
                plant(&mut rng, &mut turn_words, &user_turns, w);
            }
        }
        if rng.random::<f64>() < config.distractor_rate {
            let others: Vec<IssueTag> = tags.complement().iter().collect();
            if let Some(other) = others.choose(&mut rng) {
                let lex = lexicons[other.index()];
                for _ in 0..rng.random_range(1..=2) {
                    let w = lex.choose(&mut rng).expect("lexicon non-empty");
                    plant(&mut rng, &mut turn_words, &user_turns, w);
                }
            }
        }
        let risky = tags.contains(IssueTag::Suicide) || tags.contains(IssueTag::SelfHarm);
        let high_rate = if risky {
            config.high_risk_rate
        } else {
            config.base_high_rate
        };
        if !high_words.is_empty() && rng.random::<f64>() < high_rate {
            let w = *high_words.choose(&mut rng).expect("non-empty");
            plant(&mut rng, &mut turn_words, &[0], w);
        }

        let turns: Vec<Turn> = turn_words
            .iter()
            .enumerate()
            .map(|(index, body)| Turn {
                speaker: if index % 2 == 0 {
                    Speaker::ServiceUser
                } else {
                    Speaker::Responder
                },
                text: format!("{}.", body.join(" ")),
                index,
            })
            .collect();
        let priority = assign_priority(&turns[0].text, lexicon);

        let demographics = (demo_rng.random::<f64>() < config.survey_rate)
            .then(|| sample_survey(&mut demo_rng, config.demographic_sampling));
        let batch = if rng.random::<f64>() < config.silent_test_fraction {
            Batch::SilentTest
        } else {
            Batch::Development
        };
        corpus.push(Conversation {
            id: format!("syn-{seed}-{i:06}"),
            turns,
            true_tags: tags,
            priority,
            demographics,
            batch,
        });
    }
    Ok(corpus)
}
