//! Transcript generation for synthesized training data and vocabulary
//! statistics per transcript condition.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const DIGIT_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "oh",
];
pub const MIN_WORDS: usize = 3;
pub const MAX_WORDS: usize = 7;
/// Size of the built-in lexicon.
pub const DEFAULT_LEXICON_SIZE: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    RandomDigits,
    RandomWords100,
    RandomWordsFull,
    CloseMatch,
    ExactMatch,
    ExactMatchShuffled,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::RandomDigits,
        Condition::RandomWords100,
        Condition::RandomWordsFull,
        Condition::CloseMatch,
        Condition::ExactMatch,
        Condition::ExactMatchShuffled,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::RandomDigits => "random-digits",
            Condition::RandomWords100 => "random-words-100",
            Condition::RandomWordsFull => "random-words-full",
            Condition::CloseMatch => "close-match",
            Condition::ExactMatch => "exact-match",
            Condition::ExactMatchShuffled => "exact-match-shuffled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown transcript condition '{s}'")))
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptSet {
    pub condition: Condition,
    pub utterances: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabReport {
    pub condition: Condition,
    pub vocab_size: usize,
    pub utterances: usize,
    pub mean_len: f64,
}

impl TranscriptSet {
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.utterances
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// One utterance per line, words separated by single spaces.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for u in &self.utterances {
            s.push_str(&u.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn random_utterance(words: &[String], rng: &mut Rng) -> Vec<String> {
    let len = rng.random_range(MIN_WORDS..=MAX_WORDS);
    (0..len)
        .map(|_| words.choose(rng).expect("non-empty word list").clone())
        .collect()
}

/// Random digit strings of 3-7 tokens over the 11-word digit vocabulary.
pub fn gen_digits(n_utts: usize, rng: &mut Rng) -> TranscriptSet {
    let words: Vec<String> = DIGIT_WORDS.iter().map(|w| w.to_string()).collect();
    TranscriptSet {
        condition: Condition::RandomDigits,
        utterances: (0..n_utts).map(|_| random_utterance(&words, rng)).collect(),
    }
}

/// Draws `subset_size` words (all of them if `None`) from the lexicon
/// without replacement, then builds 3-7 word utterances from the subset.
pub fn gen_random_words(
    lexicon: &[String],
    subset_size: Option<usize>,
    n_utts: usize,
    rng: &mut Rng,
) -> Result<TranscriptSet> {
    let size = subset_size.unwrap_or(lexicon.len());
    if size > lexicon.len() {
        return Err(Error::Parameter(format!(
            "subset of {size} words from a lexicon of {}",
            lexicon.len()
        )));
    }
    if size == 0 {
        return Err(Error::Parameter("empty word subset".into()));
    }
    let subset: Vec<String> = if size == lexicon.len() {
        lexicon.to_vec()
    } else {
        lexicon.choose_multiple(rng, size).cloned().collect()
    };
    let condition = if subset_size.is_none() || size == lexicon.len() {
        Condition::RandomWordsFull
    } else {
        Condition::RandomWords100
    };
    Ok(TranscriptSet {
        condition,
        utterances: (0..n_utts).map(|_| random_utterance(&subset, rng)).collect(),
    })
}

/// Permutes the words of every utterance independently.
pub fn shuffle_words(ts: &TranscriptSet, rng: &mut Rng) -> TranscriptSet {
    let condition = match ts.condition {
        Condition::ExactMatch => Condition::ExactMatchShuffled,
        c => c,
    };
    TranscriptSet {
        condition,
        utterances: ts
            .utterances
            .iter()
            .map(|u| {
                let mut u = u.clone();
                u.shuffle(rng);
                u
            })
            .collect(),
    }
}

/// Splits text into lowercase whitespace-separated utterances, one per
/// non-empty line.
pub fn parse_text_corpus(text: &str, condition: Condition) -> TranscriptSet {
    TranscriptSet {
        condition,
        utterances: text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
            .filter(|u| !u.is_empty())
            .collect(),
    }
}

pub fn load_text_corpus(path: impl AsRef<Path>, condition: Condition) -> Result<TranscriptSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_text_corpus(&text, condition))
}

pub fn vocab_report(ts: &TranscriptSet) -> VocabReport {
    let total: usize = ts.utterances.iter().map(Vec::len).sum();
    VocabReport {
        condition: ts.condition,
        vocab_size: ts.vocabulary().len(),
        utterances: ts.len(),
        mean_len: if ts.is_empty() {
            0.0
        } else {
            total as f64 / ts.len() as f64
        },
    }
}

/// One word per non-empty line, lowercased, duplicates dropped (first
/// occurrence kept).
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = BTreeSet::new();
    let words: Vec<String> = text
        .split_whitespace()
        .map(str::to_lowercase)
        .filter(|w| seen.insert(w.clone()))
        .collect();
    if words.is_empty() {
        return Err(Error::Format(format!("{}: empty lexicon", path.display())));
    }
    Ok(words)
}

const ONSETS: [&str; 24] = [
    "b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "st",
    "tr", "pl", "gr", "sh", "ch", "th",
];
const NUCLEI: [&str; 10] = ["a", "e", "i", "o", "u", "ai", "ee", "oo", "ou", "ia"];
const CODAS: [&str; 10] = ["", "", "", "n", "r", "s", "t", "l", "m", "k"];

/// Deterministic pronounceable pseudo-word lexicon of `size` distinct words
/// built from 1-3 consonant-vowel syllables.
pub fn generate_lexicon(size: usize, seed: u64) -> Vec<String> {
    let mut rng = seed::derive_rng(seed, "lexicon", "");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let syllables = rng.random_range(1..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(&mut rng).unwrap());
            w.push_str(NUCLEI.choose(&mut rng).unwrap());
            w.push_str(CODAS.choose(&mut rng).unwrap());
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// The built-in 6,000-word lexicon.
pub fn default_lexicon() -> Vec<String> {
    generate_lexicon(DEFAULT_LEXICON_SIZE, 0)
}
