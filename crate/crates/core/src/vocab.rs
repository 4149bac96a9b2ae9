//! Word-level vocabulary and the default tokenizer.
//!
//! Text is split on whitespace; trailing sentence punctuation (`. , ! ? ; :`)
//! is split off into its own tokens, which re-attach to the preceding word on
//! detokenization. Words missing from the vocabulary become `<unk>`, or a run
//! of byte tokens when byte fallback is enabled (lossless).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const END_OF_TURN: &str = "<eot>";
pub const END_OF_DIALOGUE: &str = "<eod>";
pub const AGENT_PREFIX: &str = "AI:";
pub const HUMAN_PREFIX: &str = "H:";

const SPECIALS: [&str; 5] = [UNK, END_OF_TURN, END_OF_DIALOGUE, AGENT_PREFIX, HUMAN_PREFIX];
const TRAILING_PUNCT: [char; 6] = ['.', ',', '!', '?', ';', ':'];

fn is_trailing_punct(c: char) -> bool {
    TRAILING_PUNCT.contains(&c)
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// Collapse whitespace runs, trim, and glue punctuation-only words onto the
/// word before them. `detokenize(tokenize(x)) == canonicalize(x)` whenever
/// every word of `x` is in the vocabulary (always, with byte fallback).
pub fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() && !word.chars().all(is_trailing_punct) {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub unk: TokenId,
    pub end_of_turn: TokenId,
    pub end_of_dialogue: TokenId,
    pub agent_prefix: TokenId,
    pub human_prefix: TokenId,
}

/// Pluggable tokenizer interface. The MDP code only needs ids for the
/// special markers plus an encode/decode pair.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<TokenId>;
    fn detokenize(&self, ids: &[TokenId]) -> String;
    fn specials(&self) -> SpecialTokens;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    #[serde(default)]
    byte_fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    specials: SpecialTokens,
    byte_base: Option<TokenId>,
}

impl TryFrom<VocabFile> for Vocab {
    type Error = CoreError;

    fn try_from(file: VocabFile) -> Result<Self> {
        Vocab::from_tokens(file.tokens, file.byte_fallback)
    }
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            byte_fallback: v.byte_base.is_some(),
            tokens: v.tokens,
        }
    }
}

impl Vocab {
    /// Build a vocabulary from an explicit token list. Special tokens and
    /// punctuation are added if absent; byte tokens are appended when
    /// `byte_fallback` is set.
    pub fn from_tokens(tokens: Vec<String>, byte_fallback: bool) -> Result<Self> {
        let mut all: Vec<String> = Vec::with_capacity(tokens.len() + 300);
        let mut index: HashMap<String, TokenId> = HashMap::new();
        let mut push = |t: String, all: &mut Vec<String>| -> Result<()> {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CoreError::InvalidVocab(format!("bad token {t:?}")));
            }
            if index.contains_key(&t) {
                return Err(CoreError::InvalidVocab(format!("duplicate token {t:?}")));
            }
            index.insert(t.clone(), all.len() as TokenId);
            all.push(t);
            Ok(())
        };
        // Reserved entries always occupy the leading ids in a fixed order so
        // that a serialized vocabulary reloads to identical ids.
        let mut reserved: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        reserved.extend(TRAILING_PUNCT.iter().map(|c| c.to_string()));
        if byte_fallback {
            reserved.extend((0..=255u8).map(byte_token));
        }
        let mut rest = Vec::new();
        for t in tokens {
            if reserved.contains(&t) {
                continue;
            }
            if t.starts_with("<0x") && t.len() == 6 && t.ends_with('>') {
                // Byte tokens are only meaningful as a complete reserved block.
                continue;
            }
            rest.push(t);
        }
        for t in reserved.into_iter().chain(rest) {
            push(t, &mut all)?;
        }
        let id = |s: &str| index[s];
        let specials = SpecialTokens {
            unk: id(UNK),
            end_of_turn: id(END_OF_TURN),
            end_of_dialogue: id(END_OF_DIALOGUE),
            agent_prefix: id(AGENT_PREFIX),
            human_prefix: id(HUMAN_PREFIX),
        };
        let byte_base = byte_fallback.then(|| id(&byte_token(0)));
        Ok(Vocab {
            tokens: all,
            index,
            specials,
            byte_base,
        })
    }

    /// Collect every word core appearing in `texts`.
    pub fn build<'a, I>(texts: I, byte_fallback: bool) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut words = BTreeSet::new();
        for text in texts {
            for word in text.split_whitespace() {
                if SPECIALS.contains(&word) {
                    continue;
                }
                let core = word.trim_end_matches(is_trailing_punct);
                if !core.is_empty() {
                    words.insert(core.to_string());
                }
            }
        }
        Self::from_tokens(words.into_iter().collect(), byte_fallback)
            .expect("word cores are unique and whitespace-free")
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_base.is_some()
    }

    /// Content hash identifying this vocabulary (hex sha256 of the token list).
    pub fn vocab_id(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update([self.byte_fallback() as u8]);
        hex::encode(&h.finalize()[..16])
    }

    fn byte_of(&self, id: TokenId) -> Option<u8> {
        let base = self.byte_base?;
        (id >= base && id < base + 256).then(|| (id - base) as u8)
    }

    fn is_punct_id(&self, id: TokenId) -> bool {
        self.token(id)
            .map(|t| t.len() == 1 && t.chars().all(is_trailing_punct))
            .unwrap_or(false)
    }

    fn push_word(&self, core: &str, out: &mut Vec<TokenId>) {
        if let Some(id) = self.id(core) {
            out.push(id);
            return;
        }
        match self.byte_base {
            Some(base) => {
                let prev_is_byte = out.last().is_some_and(|&p| self.byte_of(p).is_some());
                if prev_is_byte {
                    out.push(base + b' ' as TokenId);
                }
                out.extend(core.bytes().map(|b| base + b as TokenId));
            }
            None => out.push(self.specials.unk),
        }
    }
}

impl Tokenizer for Vocab {
    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            if let Some(&id) = SPECIALS.contains(&word).then(|| &self.index[word]) {
                out.push(id);
                continue;
            }
            let core = word.trim_end_matches(is_trailing_punct);
            if !core.is_empty() {
                self.push_word(core, &mut out);
            }
            for c in word[core.len()..].chars() {
                out.push(self.index[c.encode_utf8(&mut [0; 4]) as &str]);
            }
        }
        out
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut bytes: Vec<u8> = Vec::new();
        let flush = |bytes: &mut Vec<u8>, out: &mut String| {
            if bytes.is_empty() {
                return;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&String::from_utf8_lossy(bytes));
            bytes.clear();
        };
        for &id in ids {
            if let Some(b) = self.byte_of(id) {
                bytes.push(b);
                continue;
            }
            flush(&mut bytes, &mut out);
            let tok = self.token(id).unwrap_or(UNK);
            if !(out.is_empty() || self.is_punct_id(id)) {
                out.push(' ');
            }
            out.push_str(tok);
        }
        flush(&mut bytes, &mut out);
        out
    }

    fn specials(&self) -> SpecialTokens {
        self.specials
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Free-function form of [`Tokenizer::tokenize`].
pub fn tokenize<T: Tokenizer + ?Sized>(text: &str, tokenizer: &T) -> Vec<TokenId> {
    tokenizer.tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture_vocab() -> Vocab {
        Vocab::build(["yo hello there travel agent food tours"], false)
    }

    #[test]
    fn empty_input_gives_no_tokens() {
        assert!(fixture_vocab().tokenize("").is_empty());
        assert!(fixture_vocab().tokenize("   \n\t ").is_empty());
    }

    #[test]
    fn prefix_and_turn_marker_are_single_tokens() {
        let v = fixture_vocab();
        let ids = v.tokenize("AI: yo <eot>");
        assert_eq!(
            ids,
            vec![v.id("AI:").unwrap(), v.id("yo").unwrap(), v.id("<eot>").unwrap()]
        );
        assert_eq!(v.detokenize(&ids), "AI: yo <eot>");
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = fixture_vocab();
        let ids = v.tokenize("hello zebra!");
        assert_eq!(ids[1], v.specials().unk);
        assert_eq!(v.detokenize(&ids), "hello <unk>!");
    }

    #[test]
    fn trailing_punctuation_splits_and_reattaches() {
        let v = fixture_vocab();
        let ids = v.tokenize("hello, there?!");
        assert_eq!(ids.len(), 5);
        assert_eq!(v.detokenize(&ids), "hello, there?!");
        assert_eq!(v.detokenize(&v.tokenize("hello ,  there ?")), "hello, there?");
        assert_eq!(canonicalize("hello ,  there ?"), "hello, there?");
    }

    #[test]
    fn byte_fallback_is_lossless() {
        let v = Vocab::build(["hello"], true);
        let text = "hello naïve wörld, hello x y";
        assert_eq!(v.detokenize(&v.tokenize(text)), canonicalize(text));
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let err = Vocab::from_tokens(vec!["a".into(), "a".into()], false);
        assert!(matches!(err, Err(CoreError::InvalidVocab(_))));
    }

    #[test]
    fn specials_appear_once_and_survive_serde() {
        let v = Vocab::from_tokens(vec!["<eot>".into(), "x".into()], false).unwrap();
        assert_eq!(v.tokens().iter().filter(|t| *t == "<eot>").count(), 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.vocab_id(), v.vocab_id());
    }

    fn fixture_words() -> Vec<&'static str> {
        vec![
            "hello", "there", "I", "recommend", "food", "tours", "the", "beach", "yes", "no", "...",
            "hi!", "what?", "ok,", "great", ":", "AI:", "H:", "<eot>",
        ]
    }

    proptest! {
        // Strings assembled from in-vocabulary words with arbitrary spacing.
        #[test]
        fn round_trip_matches_canonical_form(
            picks in proptest::collection::vec((0usize..19, 0usize..4), 0..30)
        ) {
            let words = fixture_words();
            let v = Vocab::build(words.iter().copied(), false);
            let seps = [" ", "  ", "\n", "\t "];
            let text: String = picks
                .iter()
                .map(|&(w, s)| format!("{}{}", words[w], seps[s]))
                .collect();
            prop_assert_eq!(v.detokenize(&v.tokenize(&text)), canonicalize(&text));
        }

        #[test]
        fn byte_fallback_round_trips_arbitrary_text(text in "\\PC{0,40}") {
            let v = Vocab::build(["hello", "world"], true);
            prop_assert_eq!(v.detokenize(&v.tokenize(&text)), canonicalize(&text));
        }
    }
}
