//! Byte-level byte-pair encoding.
//!
//! The base alphabet is the 256 byte values, preceded by five special tokens
//! with fixed ids. Text is pre-tokenized into pieces of the form
//! `whitespace* non-whitespace+` (plus a trailing whitespace run, if any),
//! so a word keeps the space in front of it and concatenating the pieces
//! gives back the input. Merges never cross piece boundaries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;
pub const MASK: u32 = 4;
pub const SPECIALS: [&str; 5] = ["<s>", "</s>", "<pad>", "<unk>", "<mask>"];
pub const BYTE_OFFSET: u32 = SPECIALS.len() as u32;
/// Specials plus the byte alphabet.
pub const BASE_VOCAB: usize = SPECIALS.len() + 256;

pub const FILE_VERSION: &str = "bpe-v1";

pub fn is_special(id: u32) -> bool {
    id < BYTE_OFFSET
}

/// Splits text into BPE pieces. Concatenating the pieces yields `text`.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (i, ch) in text.char_indices() {
        let ws = ch.is_whitespace();
        if ws && in_word {
            pieces.push(&text[start..i]);
            start = i;
        }
        in_word = !ws;
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub left: u32,
    pub right: u32,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpeConfig {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl BpeConfig {
    /// Desk-scale default.
    pub const DESK: BpeConfig = BpeConfig {
        vocab_size: 4000,
        min_frequency: 2,
    };
    /// Full-scale preset: 30 000 tokens, cut-off 2.
    pub const FULL: BpeConfig = BpeConfig {
        vocab_size: 30_000,
        min_frequency: 2,
    };
}

impl Default for BpeConfig {
    fn default() -> Self {
        Self::DESK
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    merges: Vec<MergeRule>,
    /// Byte string of every id; specials hold their literal text.
    tokens: Vec<Vec<u8>>,
    token_to_id: BTreeMap<Vec<u8>, u32>,
    merge_lookup: BTreeMap<(u32, u32), (usize, u32)>,
}

/// Serialized vocabulary: merges as pairs of byte-mapped symbol strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabFile {
    pub version: String,
    pub specials: Vec<String>,
    pub merges: Vec<[String; 2]>,
}

impl Vocabulary {
    /// Specials and the byte alphabet, no merges.
    pub fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = SPECIALS.iter().map(|s| s.as_bytes().to_vec()).collect();
        let mut token_to_id = BTreeMap::new();
        for b in 0..=255u8 {
            token_to_id.insert(alloc::vec![b], tokens.len() as u32);
            tokens.push(alloc::vec![b]);
        }
        Self {
            merges: Vec::new(),
            tokens,
            token_to_id,
            merge_lookup: BTreeMap::new(),
        }
    }

    /// Rebuilds a vocabulary from an ordered merge list.
    pub fn from_merges(pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut v = Self::base();
        for (left, right) in pairs {
            v.push_merge(left, right)?;
        }
        Ok(v)
    }

    fn push_merge(&mut self, left: u32, right: u32) -> Result<u32> {
        let known = |id: u32| (id as usize) < self.tokens.len() && !is_special(id);
        if !known(left) || !known(right) {
            return Err(Error::Config(alloc::format!(
                "merge ({left}, {right}) references an unknown or special token"
            )));
        }
        if self.merge_lookup.contains_key(&(left, right)) {
            return Err(Error::Config(alloc::format!("duplicate merge ({left}, {right})")));
        }
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = match self.token_to_id.get(&bytes) {
            Some(&id) => id,
            None => {
                let id = self.tokens.len() as u32;
                self.token_to_id.insert(bytes.clone(), id);
                self.tokens.push(bytes);
                id
            }
        };
        let rank = self.merges.len();
        self.merges.push(MergeRule { left, right, rank });
        self.merge_lookup.insert((left, right), (rank, id));
        Ok(id)
    }

    /// Number of distinct tokens, specials included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn token_id(&self, bytes: &[u8]) -> Option<u32> {
        self.token_to_id.get(bytes).copied()
    }

    fn encode_piece(&self, piece: &[u8], out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = piece.iter().map(|&b| BYTE_OFFSET + b as u32).collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_lookup.get(&(w[0], w[1])).map(|&(rank, id)| (rank, w[0], w[1], id)))
                .min();
            let Some((_, left, right, id)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = merged;
        }
        out.extend(symbols);
    }

    /// Byte-level encoding. A whitespace-delimited `<mask>` word becomes the
    /// mask id; its leading whitespace is encoded as ordinary bytes.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for piece in pretokenize(text) {
            let word = piece.trim_start();
            if word == SPECIALS[MASK as usize] {
                let ws = &piece[..piece.len() - word.len()];
                self.encode_piece(ws.as_bytes(), &mut ids);
                ids.push(MASK);
            } else {
                self.encode_piece(piece.as_bytes(), &mut ids);
            }
        }
        ids
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(self.token_bytes(id).ok_or(Error::UnknownTokenId(id))?);
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        String::from_utf8(self.decode_bytes(ids)?).map_err(|_| Error::InvalidUtf8)
    }

    pub fn to_file(&self) -> VocabFile {
        VocabFile {
            version: FILE_VERSION.to_string(),
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            merges: self
                .merges
                .iter()
                .map(|m| {
                    [
                        bytes_to_symbols(&self.tokens[m.left as usize]),
                        bytes_to_symbols(&self.tokens[m.right as usize]),
                    ]
                })
                .collect(),
        }
    }

    pub fn from_file(file: &VocabFile) -> Result<Self> {
        if file.version != FILE_VERSION {
            return Err(Error::Config(alloc::format!("unsupported vocabulary version {:?}", file.version)));
        }
        if file.specials.iter().map(String::as_str).ne(SPECIALS.iter().copied()) {
            return Err(Error::Config("unexpected special tokens".into()));
        }
        let mut v = Self::base();
        for [left, right] in &file.merges {
            let lookup = |sym: &str| {
                symbols_to_bytes(sym)
                    .and_then(|b| v.token_id(&b))
                    .ok_or_else(|| Error::Config(alloc::format!("merge symbol {sym:?} is not in the vocabulary")))
            };
            let (l, r) = (lookup(left)?, lookup(right)?);
            v.push_merge(l, r)?;
        }
        Ok(v)
    }
}

/// Printable stand-in character for each byte, as used by GPT-2 style
/// byte-level vocabularies.
fn byte_char(b: u8) -> char {
    let printable = |b: u8| (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
    if printable(b) {
        return b as char;
    }
    let shift = (0..b).filter(|&x| !printable(x)).count() as u32;
    char::from_u32(256 + shift).expect("valid code point")
}

pub fn bytes_to_symbols(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_char(b)).collect()
}

pub fn symbols_to_bytes(symbols: &str) -> Option<Vec<u8>> {
    symbols
        .chars()
        .map(|c| (0..=255u8).find(|&b| byte_char(b) == c))
        .collect()
}

struct PairStats {
    counts: BTreeMap<(u32, u32), u64>,
    locations: BTreeMap<(u32, u32), BTreeSet<usize>>,
}

impl PairStats {
    fn add_word(&mut self, index: usize, symbols: &[u32], count: u64) {
        for w in symbols.windows(2) {
            *self.counts.entry((w[0], w[1])).or_default() += count;
            self.locations.entry((w[0], w[1])).or_default().insert(index);
        }
    }

    fn remove_word(&mut self, symbols: &[u32], count: u64) {
        for w in symbols.windows(2) {
            let pair = (w[0], w[1]);
            if let Some(c) = self.counts.get_mut(&pair) {
                *c -= count;
                if *c == 0 {
                    self.counts.remove(&pair);
                }
            }
        }
    }
}

/// Greedy BPE training: repeatedly merge the most frequent adjacent pair
/// (ties go to the lexicographically smallest byte pair) until the
/// vocabulary holds `vocab_size` tokens or no pair reaches `min_frequency`.
pub fn train_bpe<'a>(lines: impl IntoIterator<Item = &'a str>, config: BpeConfig) -> Result<Vocabulary> {
    if config.vocab_size <= BASE_VOCAB {
        return Err(Error::Config(alloc::format!(
            "vocab_size must exceed {BASE_VOCAB}, got {}",
            config.vocab_size
        )));
    }
    if config.min_frequency < 1 {
        return Err(Error::Config("min_frequency must be at least 1".into()));
    }
    let mut word_counts: BTreeMap<&[u8], u64> = BTreeMap::new();
    let mut any_line = false;
    for line in lines {
        any_line |= !line.is_empty();
        for piece in pretokenize(line) {
            *word_counts.entry(piece.as_bytes()).or_default() += 1;
        }
    }
    if !any_line {
        return Err(Error::EmptyCorpus);
    }

    let mut vocab = Vocabulary::base();
    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .into_iter()
        .map(|(bytes, c)| (bytes.iter().map(|&b| BYTE_OFFSET + b as u32).collect(), c))
        .collect();
    let mut stats = PairStats {
        counts: BTreeMap::new(),
        locations: BTreeMap::new(),
    };
    for (i, (symbols, count)) in words.iter().enumerate() {
        stats.add_word(i, symbols, *count);
    }

    while vocab.len() < config.vocab_size {
        let best = stats
            .counts
            .iter()
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let key = |p: &(u32, u32)| (vocab.tokens[p.0 as usize].as_slice(), vocab.tokens[p.1 as usize].as_slice());
                    Reverse(key(pa)).cmp(&Reverse(key(pb)))
                })
            })
            .map(|(&pair, &count)| (pair, count));
        let Some(((left, right), count)) = best else { break };
        if count < config.min_frequency {
            break;
        }
        let new_id = vocab.push_merge(left, right)?;
        let affected = stats.locations.remove(&(left, right)).unwrap_or_default();
        for wi in affected {
            let (symbols, wcount) = &mut words[wi];
            if !symbols.windows(2).any(|w| w[0] == left && w[1] == right) {
                continue;
            }
            stats.remove_word(symbols, *wcount);
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = merged;
            let (symbols, wcount) = (&words[wi].0, words[wi].1);
            stats.add_word(wi, symbols, wcount);
        }
        // A pair whose count dropped to zero may linger in `locations`; the
        // containment check above skips it.
        stats.counts.remove(&(left, right));
    }
    Ok(vocab)
}
