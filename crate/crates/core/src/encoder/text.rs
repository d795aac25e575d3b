//! Sentence segmentation and hash tokenization.

use crate::error::{Error, Result};
use crate::rng::fnv1a;

/// Leading classification slot of every token-path input.
pub const CLS_ID: usize = 0;
pub const SEP_ID: usize = 1;
pub const MASK_ID: usize = 2;
/// Ids below this are reserved for the special tokens above.
pub const NUM_SPECIAL: usize = 4;

/// Splits a document at `.`, `?` or `!` when followed by whitespace and then an
/// uppercase letter or a digit. A text without such boundaries is one sentence.
pub fn split_sentences(text: &str) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_whitespace() {
                j += 1;
            }
            let saw_space = j > i + 1;
            if saw_space && j < chars.len() {
                let next = chars[j].1;
                if next.is_uppercase() || next.is_ascii_digit() {
                    let end = pos + c.len_utf8();
                    push_trimmed(&mut out, &text[start..end]);
                    start = chars[j].0;
                    i = j;
                    continue;
                }
            }
        }
        i += 1;
    }
    push_trimmed(&mut out, &text[start..]);
    Ok(out)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Whitespace split, lowercased, with non-alphanumeric characters trimmed from
/// both ends of each word. Words that trim to nothing are dropped.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Hash tokenizer shared by the lower encoder and the token-embedding path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    vocab_size: usize,
}

impl Tokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size <= NUM_SPECIAL {
            return Err(Error::Config(format!(
                "vocabulary size must exceed {NUM_SPECIAL}, got {vocab_size}"
            )));
        }
        Ok(Self { vocab_size })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn bucket(&self, bytes: &[u8]) -> usize {
        NUM_SPECIAL + (fnv1a(bytes) % (self.vocab_size - NUM_SPECIAL) as u64) as usize
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.bucket(word.as_bytes())
    }

    /// Word-level ids for a text.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        words(text).iter().map(|w| self.word_id(w)).collect()
    }

    /// Word ids interleaved with character-trigram ids of `#word#`; the
    /// sub-word units the lower encoder pools over.
    pub fn encode_subwords(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for w in words(text) {
            ids.push(self.word_id(&w));
            let padded: Vec<char> = format!("#{w}#").chars().collect();
            for tri in padded.windows(3) {
                let mut bytes = vec![0x01u8];
                bytes.extend(tri.iter().collect::<String>().as_bytes());
                ids.push(self.bucket(&bytes));
            }
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_at_terminator_before_capital() {
        assert_eq!(
            split_sentences("A cat. The dog ran!").unwrap(),
            vec!["A cat.", "The dog ran!"]
        );
    }

    #[test]
    fn no_terminator_is_single_sentence() {
        assert_eq!(
            split_sentences("no terminator here").unwrap(),
            vec!["no terminator here"]
        );
    }

    #[test]
    fn lowercase_after_abbreviation_does_not_split() {
        assert_eq!(
            split_sentences("e.g. lower case follows.").unwrap(),
            vec!["e.g. lower case follows."]
        );
    }

    #[test]
    fn digit_after_terminator_splits() {
        assert_eq!(
            split_sentences("Step one?  2 more steps.").unwrap(),
            vec!["Step one?", "2 more steps."]
        );
    }

    #[test]
    fn ellipsis_splits_once() {
        assert_eq!(
            split_sentences("Wait... Then go.").unwrap(),
            vec!["Wait...", "Then go."]
        );
    }

    #[test]
    fn whitespace_only_is_empty_document() {
        assert!(matches!(split_sentences("  \n\t"), Err(Error::EmptyDocument)));
    }

    #[test]
    fn words_trim_punctuation_and_lowercase() {
        assert_eq!(words("Hello, World! (x) --"), vec!["hello", "world", "x"]);
    }

    #[test]
    fn token_ids_avoid_special_range() {
        let tok = Tokenizer::new(64).unwrap();
        for id in tok.encode_subwords("the quick brown fox jumps") {
            assert!((NUM_SPECIAL..64).contains(&id));
        }
        assert_eq!(tok.encode("Cat cat CAT."), vec![tok.word_id("cat"); 3]);
    }

    #[test]
    fn tiny_vocabulary_rejected() {
        assert!(Tokenizer::new(NUM_SPECIAL).is_err());
    }
}
