//! Byte-level BPE tokenizer compatible with GPT-2 `vocab.json` /
//! `merges.txt` files.
//!
//! Text is pre-split with GPT-2's pattern (contractions, optionally
//! space-prefixed letter/digit/symbol runs, whitespace runs), each pre-token
//! is mapped byte-by-byte into the printable byte lexicon, and merges are
//! applied lowest-rank first.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::ModelError;

/// GPT-2's invertible byte -> char table: printable bytes map to themselves,
/// the rest map to 256, 257, ... in order.
pub fn byte_lexicon() -> &'static [char; 256] {
    static TABLE: OnceLock<[char; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = ['\0'; 256];
        let mut extra = 0u32;
        for b in 0..=255u32 {
            let printable = (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b);
            table[b as usize] = if printable {
                char::from_u32(b).unwrap()
            } else {
                let c = char::from_u32(256 + extra).unwrap();
                extra += 1;
                c
            };
        }
        table
    })
}

fn char_to_byte_map() -> &'static HashMap<char, u8> {
    static MAP: OnceLock<HashMap<char, u8>> = OnceLock::new();
    MAP.get_or_init(|| {
        byte_lexicon()
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect()
    })
}

/// Pre-tokenization equivalent to GPT-2's split regex:
/// contractions ('s 't 're 've 'm 'll 'd), then optionally space-prefixed
/// letter runs, digit runs, or other-symbol runs, then whitespace runs
/// (yielding their last space to a following group).
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];
    let mut out = Vec::new();
    let bytes_len = text.len();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut idx = 0usize;
    let end_of = |i: usize| -> usize {
        if i + 1 < n {
            chars[i + 1].0
        } else {
            bytes_len
        }
    };
    while idx < n {
        let (byte_pos, c) = chars[idx];
        // Contractions ('re, 've, 'll are longer; check two-char suffixes too).
        if c == '\'' {
            let rest = &text[byte_pos..];
            if let Some(m) = CONTRACTIONS
                .iter()
                .filter(|m| rest.starts_with(**m))
                .max_by_key(|m| m.len())
            {
                out.push(&text[byte_pos..byte_pos + m.len()]);
                idx += m.chars().count();
                continue;
            }
        }
        if c.is_whitespace() {
            let mut j = idx;
            while j < n && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j == n {
                out.push(&text[byte_pos..bytes_len]);
                idx = j;
                continue;
            }
            if j - idx > 1 {
                // All but the last whitespace char; the last one may attach
                // to the following group.
                out.push(&text[byte_pos..chars[j - 1].0]);
                idx = j - 1;
                continue;
            }
            if c != ' ' {
                // A single non-space whitespace char stands alone.
                out.push(&text[byte_pos..end_of(idx)]);
                idx += 1;
                continue;
            }
            // A single space falls through and attaches to the next group.
        }
        let start = byte_pos;
        let mut cur = idx;
        if chars[cur].1 == ' ' {
            cur += 1;
        }
        let class = |ch: char| -> u8 {
            if ch.is_alphabetic() {
                0
            } else if ch.is_numeric() {
                1
            } else if !ch.is_whitespace() {
                2
            } else {
                3
            }
        };
        let run_class = class(chars[cur].1);
        debug_assert_ne!(run_class, 3);
        let mut j = cur;
        while j < n && class(chars[j].1) == run_class {
            // An apostrophe starting a contraction still belongs to an
            // other-symbol run (greedy), matching the reference pattern.
            j += 1;
        }
        out.push(&text[start..if j < n { chars[j].0 } else { bytes_len }]);
        idx = j;
    }
    out
}

/// Byte-level BPE encoder/decoder.
pub struct ByteLevelBpe {
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    ranks: HashMap<(String, String), usize>,
}

impl ByteLevelBpe {
    pub fn from_files(vocab_json: &str, merges_txt: &str) -> Result<Self, ModelError> {
        let raw: HashMap<String, usize> = serde_json::from_str(vocab_json)
            .map_err(|e| ModelError::WeightsLoad(format!("vocab.json: {e}")))?;
        let size = raw.values().max().map(|m| m + 1).unwrap_or(0);
        let mut tokens = vec![String::new(); size];
        for (tok, &id) in &raw {
            if id >= size {
                return Err(ModelError::WeightsLoad(format!(
                    "vocab id {id} out of range"
                )));
            }
            tokens[id] = tok.clone();
        }
        let mut ranks = HashMap::new();
        for (rank, line) in merges_txt
            .lines()
            .filter(|l| !l.starts_with("#version") && !l.trim().is_empty())
            .enumerate()
        {
            let mut parts = line.split(' ');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(ModelError::WeightsLoad(format!(
                    "malformed merges line {rank}: {line:?}"
                )));
            };
            ranks.insert((a.to_string(), b.to_string()), rank);
        }
        Ok(ByteLevelBpe {
            vocab: raw,
            tokens,
            ranks,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    /// Encodes text to token ids (pre-tokenize, byte-map, merge, look up).
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, ModelError> {
        let table = byte_lexicon();
        let mut ids = Vec::new();
        for piece in pre_tokenize(text) {
            let mapped: String = piece.bytes().map(|b| table[b as usize]).collect();
            for sym in self.merge(mapped) {
                match self.vocab.get(&sym) {
                    Some(&id) => ids.push(id),
                    None => {
                        return Err(ModelError::AlignmentFailure(format!(
                            "symbol {sym:?} missing from vocabulary"
                        )))
                    }
                }
            }
        }
        Ok(ids)
    }

    fn merge(&self, mapped: String) -> Vec<String> {
        let mut word: Vec<String> = mapped.chars().map(String::from).collect();
        if word.len() < 2 {
            return word;
        }
        loop {
            let mut best: Option<(usize, (String, String))> = None;
            for pair in word.windows(2) {
                let key = (pair[0].clone(), pair[1].clone());
                if let Some(&rank) = self.ranks.get(&key) {
                    if best.as_ref().map(|(r, _)| rank < *r).unwrap_or(true) {
                        best = Some((rank, key));
                    }
                }
            }
            let Some((_, (first, second))) = best else {
                break;
            };
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(word[i].clone());
                    i += 1;
                }
            }
            word = merged;
            if word.len() < 2 {
                break;
            }
        }
        word
    }

    /// Decodes ids back to text (unknown bytes become U+FFFD).
    pub fn decode(&self, ids: &[usize]) -> String {
        let map = char_to_byte_map();
        let mut bytes = Vec::new();
        for &id in ids {
            if let Some(tok) = self.tokens.get(id) {
                for c in tok.chars() {
                    if let Some(&b) = map.get(&c) {
                        bytes.push(b);
                    }
                }
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_table_known_values() {
        let table = byte_lexicon();
        assert_eq!(table[b'a' as usize], 'a');
        assert_eq!(table[b' ' as usize], '\u{120}'); // Ġ
        assert_eq!(table[b'\n' as usize], '\u{10a}'); // Ċ
        assert_eq!(table[0], '\u{100}');
        // Invertible.
        let mut seen = std::collections::HashSet::new();
        for c in table.iter() {
            assert!(seen.insert(c));
        }
    }

    #[test]
    fn pre_tokenize_splits_like_reference() {
        assert_eq!(pre_tokenize("hello world"), vec!["hello", " world"]);
        assert_eq!(pre_tokenize(" cat,"), vec![" cat", ","]);
        assert_eq!(pre_tokenize("isn't"), vec!["isn", "'t"]);
        assert_eq!(pre_tokenize("we're 42"), vec!["we", "'re", " 42"]);
        assert_eq!(pre_tokenize("a  b"), vec!["a", " ", " b"]);
        assert_eq!(pre_tokenize("x\ny"), vec!["x", "\n", "y"]);
        assert_eq!(pre_tokenize("end.  "), vec!["end", ".", "  "]);
        assert_eq!(pre_tokenize("rock'n'roll"), vec!["rock", "'", "n", "'", "roll"]);
        assert_eq!(pre_tokenize("!!?"), vec!["!!?"]);
    }

    fn synthetic_bpe() -> ByteLevelBpe {
        // Leaves for every byte plus a few merged tokens.
        let table = byte_lexicon();
        let mut vocab: HashMap<String, usize> = table
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), i))
            .collect();
        let mut next = vocab.len();
        for tok in ["he", "ll", "llo", "hello", "\u{120}w", "\u{120}wo"] {
            vocab.insert(tok.to_string(), next);
            next += 1;
        }
        let merges = "#version: 0.2\nh e\nl l\nll o\nhe llo\n\u{120} w\n\u{120}w o\n";
        let vocab_json = serde_json::to_string(&vocab).unwrap();
        ByteLevelBpe::from_files(&vocab_json, merges).unwrap()
    }

    #[test]
    fn encodes_with_lowest_rank_merges_first() {
        let bpe = synthetic_bpe();
        let ids = bpe.encode("hello world").unwrap();
        let toks: Vec<&str> = ids.iter().map(|&i| bpe.tokens[i].as_str()).collect();
        assert_eq!(toks, vec!["hello", "\u{120}wo", "r", "l", "d"]);
    }

    #[test]
    fn decode_round_trips_multibyte_utf8() {
        let bpe = synthetic_bpe();
        let text = "caf\u{e9} \u{3053}\u{3093}";
        let ids = bpe.encode(text).unwrap();
        assert_eq!(bpe.decode(&ids), text);
    }

    #[test]
    fn multi_token_word_spans_concatenate() {
        let bpe = synthetic_bpe();
        let ids = bpe.encode("hellohe").unwrap();
        let toks: Vec<&str> = ids.iter().map(|&i| bpe.tokens[i].as_str()).collect();
        assert_eq!(toks, vec!["hello", "he"]);
        assert_eq!(bpe.decode(&ids), "hellohe");
    }
}
