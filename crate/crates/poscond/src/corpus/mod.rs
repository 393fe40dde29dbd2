//! Text ingestion: cleaning, word segmentation with stable 1-based indices,
//! scrambled controls, and POS tagging.
//!
//! A word is a whitespace-delimited unit of the cleaned text; punctuation
//! stays attached to its word. Cleaning is NFC normalization, control
//! characters replaced by spaces, and whitespace runs collapsed.

pub mod tagger;

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use tagger::{pos_class_for, PosTagger, RuleTagger};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cleaning produced zero words")]
    EmptyText,
    #[error("no POS tagger backend is configured")]
    TaggerUnavailable,
    #[error("cannot scramble a text that is already scrambled")]
    AlreadyScrambled,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Genre {
    Narrative,
    Encyclopedic,
    Scientific,
    Scrambled,
}

impl std::str::FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "narrative" => Ok(Genre::Narrative),
            "encyclopedic" => Ok(Genre::Encyclopedic),
            "scientific" => Ok(Genre::Scientific),
            "scrambled" => Ok(Genre::Scrambled),
            other => Err(format!("unknown genre {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosClass {
    Content,
    Function,
    Other,
}

impl PosClass {
    pub fn name(&self) -> &'static str {
        match self {
            PosClass::Content => "content",
            PosClass::Function => "function",
            PosClass::Other => "other",
        }
    }
}

/// A surface word with its 1-based text index and POS annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordRecord {
    pub index: usize,
    pub surface: String,
    pub pos_tag: String,
    pub pos_class: PosClass,
}

/// A cleaned, indexed, tagged text. Serializes to the corpus manifest format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusText {
    pub text_id: String,
    pub genre: Genre,
    pub source_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scramble_seed: Option<u64>,
    pub tagger_id: String,
    pub words: Vec<WordRecord>,
}

impl CorpusText {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.surface.as_str()).collect()
    }
}

/// NFC-normalizes, replaces control characters with spaces, and collapses
/// whitespace runs to single spaces.
pub fn clean_text(raw: &str) -> String {
    let normalized: String = raw
        .nfc()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    normalized.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_records(surfaces: Vec<String>, tagger: &dyn PosTagger) -> Vec<WordRecord> {
    let tags = tagger.tag(&surfaces);
    surfaces
        .into_iter()
        .zip(tags)
        .enumerate()
        .map(|(i, (surface, pos_tag))| {
            let pos_class = pos_class_for(&pos_tag);
            WordRecord {
                index: i + 1,
                surface,
                pos_tag,
                pos_class,
            }
        })
        .collect()
}

/// Cleans and segments raw text, assigns 1-based indices, and tags POS over
/// the full word sequence.
pub fn ingest_text(
    raw: &str,
    text_id: &str,
    genre: Genre,
    tagger: Option<&dyn PosTagger>,
) -> Result<CorpusText, CorpusError> {
    let tagger = tagger.ok_or(CorpusError::TaggerUnavailable)?;
    let cleaned = clean_text(raw);
    let surfaces: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if surfaces.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    Ok(CorpusText {
        text_id: text_id.to_string(),
        genre,
        source_digest: sha256_hex(raw.as_bytes()),
        scramble_seed: None,
        tagger_id: tagger.id().to_string(),
        words: build_records(surfaces, tagger),
    })
}

/// Uniformly permutes the word sequence under `seed` (Fisher-Yates over a
/// seeded ChaCha stream; identical seeds give identical permutations). POS
/// tags are recomputed on the scrambled sequence.
pub fn scramble(
    text: &CorpusText,
    seed: u64,
    new_text_id: &str,
    tagger: Option<&dyn PosTagger>,
) -> Result<CorpusText, CorpusError> {
    if text.genre == Genre::Scrambled {
        return Err(CorpusError::AlreadyScrambled);
    }
    let tagger = tagger.ok_or(CorpusError::TaggerUnavailable)?;
    let mut surfaces: Vec<String> = text.words.iter().map(|w| w.surface.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..surfaces.len()).rev() {
        let j = rng.random_range(0..=i);
        surfaces.swap(i, j);
    }
    Ok(CorpusText {
        text_id: new_text_id.to_string(),
        genre: Genre::Scrambled,
        source_digest: text.source_digest.clone(),
        scramble_seed: Some(seed),
        tagger_id: tagger.id().to_string(),
        words: build_records(surfaces, tagger),
    })
}

/// Re-tags every word in place.
pub fn tag_pos(text: &mut CorpusText, tagger: Option<&dyn PosTagger>) -> Result<(), CorpusError> {
    let tagger = tagger.ok_or(CorpusError::TaggerUnavailable)?;
    let surfaces: Vec<String> = text.words.iter().map(|w| w.surface.clone()).collect();
    let tags = tagger.tag(&surfaces);
    for (word, tag) in text.words.iter_mut().zip(tags) {
        word.pos_class = pos_class_for(&tag);
        word.pos_tag = tag;
    }
    text.tagger_id = tagger.id().to_string();
    Ok(())
}

/// Writes the corpus manifest JSON.
pub fn save_manifest(text: &CorpusText, path: &Path) -> Result<(), CorpusError> {
    let json = serde_json::to_string_pretty(text)?;
    std::fs::write(path, json).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a corpus manifest JSON.
pub fn load_manifest(path: &Path) -> Result<CorpusText, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn rule_tagger() -> RuleTagger {
        RuleTagger::new()
    }

    #[test]
    fn ingest_simple_sentence() {
        let tagger = rule_tagger();
        let text = ingest_text("the cat sat", "t", Genre::Narrative, Some(&tagger)).unwrap();
        assert_eq!(text.word_count(), 3);
        assert_eq!(
            text.words.iter().map(|w| w.index).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(text.words[0].surface, "the");
        assert_eq!(text.words[0].pos_tag, "DET");
        assert_eq!(text.words[0].pos_class, PosClass::Function);
    }

    #[test]
    fn cleaning_strips_control_characters() {
        assert_eq!(clean_text("A \u{7}  b"), "A b");
        assert_eq!(clean_text("A\u{7}b"), "A b");
        assert_eq!(clean_text("  x\t\ny  "), "x y");
        let tagger = rule_tagger();
        let text = ingest_text("A \u{7}  b", "t", Genre::Narrative, Some(&tagger)).unwrap();
        assert_eq!(text.surfaces(), vec!["A", "b"]);
    }

    #[test]
    fn nfc_normalization_applies() {
        // e + combining acute composes to a single code point.
        let raw = "cafe\u{301}";
        let cleaned = clean_text(raw);
        assert_eq!(cleaned, "caf\u{e9}");
    }

    #[test]
    fn empty_after_cleaning_is_an_error() {
        let tagger = rule_tagger();
        assert!(matches!(
            ingest_text(" \u{7} \t ", "t", Genre::Narrative, Some(&tagger)),
            Err(CorpusError::EmptyText)
        ));
    }

    #[test]
    fn missing_tagger_is_reported() {
        assert!(matches!(
            ingest_text("some text", "t", Genre::Narrative, None),
            Err(CorpusError::TaggerUnavailable)
        ));
    }

    #[test]
    fn ingestion_is_deterministic() {
        let tagger = rule_tagger();
        let a = ingest_text("many words here today", "t", Genre::Scientific, Some(&tagger)).unwrap();
        let b = ingest_text("many words here today", "t", Genre::Scientific, Some(&tagger)).unwrap();
        assert_eq!(a.words, b.words);
        assert_eq!(a.source_digest, b.source_digest);
    }

    #[test]
    fn scramble_single_word_is_identity() {
        let tagger = rule_tagger();
        let text = ingest_text("lonely", "t", Genre::Narrative, Some(&tagger)).unwrap();
        let scrambled = scramble(&text, 123, "t_s", Some(&tagger)).unwrap();
        assert_eq!(scrambled.surfaces(), vec!["lonely"]);
        assert_eq!(scrambled.genre, Genre::Scrambled);
        assert_eq!(scrambled.scramble_seed, Some(123));
    }

    #[test]
    fn scramble_is_deterministic_per_seed() {
        let tagger = rule_tagger();
        let text = ingest_text(
            "one two three four five six seven eight nine ten",
            "t",
            Genre::Narrative,
            Some(&tagger),
        )
        .unwrap();
        let a = scramble(&text, 7, "s", Some(&tagger)).unwrap();
        let b = scramble(&text, 7, "s", Some(&tagger)).unwrap();
        assert_eq!(a.surfaces(), b.surfaces());
        let c = scramble(&text, 8, "s", Some(&tagger)).unwrap();
        assert_ne!(a.surfaces(), c.surfaces());
    }

    #[test]
    fn scrambling_a_scrambled_text_is_rejected() {
        let tagger = rule_tagger();
        let text = ingest_text("a b c", "t", Genre::Narrative, Some(&tagger)).unwrap();
        let s = scramble(&text, 0, "s", Some(&tagger)).unwrap();
        assert!(matches!(
            scramble(&s, 1, "s2", Some(&tagger)),
            Err(CorpusError::AlreadyScrambled)
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let tagger = rule_tagger();
        let text = ingest_text("the dogs ran oh", "round", Genre::Narrative, Some(&tagger)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.json");
        save_manifest(&text, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.text_id, text.text_id);
        assert_eq!(loaded.words, text.words);
        assert_eq!(loaded.tagger_id, "rule-en-v1");
    }

    #[test]
    fn tag_examples_from_contract() {
        let tagger = rule_tagger();
        let text = ingest_text("the dogs ran oh", "t", Genre::Narrative, Some(&tagger)).unwrap();
        assert_eq!(text.words[1].pos_tag, "NOUN");
        assert_eq!(text.words[1].pos_class, PosClass::Content);
        assert_eq!(text.words[0].pos_tag, "DET");
        assert_eq!(text.words[0].pos_class, PosClass::Function);
        assert_eq!(text.words[3].pos_tag, "INTJ");
        assert_eq!(text.words[3].pos_class, PosClass::Other);
    }

    fn multiset(words: &[&str]) -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for w in words {
            *m.entry(w.to_string()).or_insert(0) += 1;
        }
        m
    }

    proptest! {
        #[test]
        fn scramble_preserves_multiset(
            words in proptest::collection::vec("[a-z]{1,6}", 1..40),
            seed in 0u64..1000,
        ) {
            let tagger = rule_tagger();
            let raw = words.join(" ");
            let text = ingest_text(&raw, "t", Genre::Narrative, Some(&tagger)).unwrap();
            let scrambled = scramble(&text, seed, "s", Some(&tagger)).unwrap();
            prop_assert_eq!(scrambled.word_count(), text.word_count());
            prop_assert_eq!(multiset(&scrambled.surfaces()), multiset(&text.surfaces()));
            // Indices stay contiguous and 1-based.
            for (i, w) in scrambled.words.iter().enumerate() {
                prop_assert_eq!(w.index, i + 1);
                prop_assert!(!w.surface.is_empty());
            }
        }
    }
}
