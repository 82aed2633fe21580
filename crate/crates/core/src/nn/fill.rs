//! Whole-identifier mask filling.
//!
//! An identifier may span several subword tokens. For every length
//! `1..=max_subwords` the mask slot is widened to that many `<mask>` tokens
//! and filled left to right with a beam search; a candidate's score is the
//! sum of its subword log-probabilities. The first subword must start a new
//! word (a single leading space followed by non-space bytes) and later
//! subwords must not contain whitespace. A first subword that is itself a
//! grammar word such as `)` is refused: masked training positions are often
//! structural, and without this rule `)` followed by any suffix crowds out
//! real names.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::data::encode_masked_context;
use super::model::Model;
use super::Real;
use crate::bpe::{is_special, Vocabulary};
use crate::metamodel::Identifier;
use crate::tree::{is_structural, unescape, SurfaceText};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillConfig {
    pub k: usize,
    pub max_subwords: usize,
    pub beam_width: usize,
}

impl Default for FillConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_subwords: 6,
            beam_width: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: Identifier,
    /// Sum of subword log-probabilities.
    pub score: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Piece {
    Start,
    Continue,
    Never,
}

fn classify(bytes: &[u8]) -> Piece {
    let ws = |b: &u8| b.is_ascii_whitespace();
    match bytes {
        [b' ', rest @ ..] if !rest.is_empty() && !rest.iter().any(ws) => {
            match core::str::from_utf8(rest) {
                Ok(word) if is_structural(word) => Piece::Never,
                _ => Piece::Start,
            }
        }
        _ if !bytes.is_empty() && !bytes.iter().any(ws) => Piece::Continue,
        _ => Piece::Never,
    }
}

fn piece_table(vocab: &Vocabulary, size: usize) -> Vec<Piece> {
    (0..size as u32)
        .map(|id| match vocab.token_bytes(id) {
            Some(bytes) if !is_special(id) => classify(bytes),
            _ => Piece::Never,
        })
        .collect()
}

/// Descending score, then ascending text for a stable order.
fn by_score(a: &(f64, Vec<u32>), b: &(f64, Vec<u32>)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(&b.1))
}

/// Ranked whole-identifier candidates for the single mask in `context`.
pub fn fill_mask_topk<T: Real>(
    model: &Model<T>,
    vocab: &Vocabulary,
    context: &SurfaceText,
    cfg: &FillConfig,
) -> Result<Vec<Candidate>> {
    let max_len = model.config().max_sequence_length;
    let slots = cfg.max_subwords.max(1);
    let ctx = encode_masked_context(vocab, context, max_len, slots)?;
    if cfg.k == 0 || cfg.beam_width == 0 {
        return Ok(Vec::new());
    }
    let table = piece_table(vocab, model.config().vocab_size);
    let start = ctx.slot_position();
    let mut best: BTreeMap<String, f64> = BTreeMap::new();

    for len in 1..=slots {
        let mut beams: Vec<(f64, Vec<u32>)> = alloc::vec![(0.0, Vec::new())];
        for step in 0..len {
            let want = if step == 0 { Piece::Start } else { Piece::Continue };
            let mut next: Vec<(f64, Vec<u32>)> = Vec::new();
            for (score, filled) in &beams {
                let ids = ctx.with_slot(filled, len - step);
                let logp = model.log_probs_at(&ids, start + step)?;
                let mut options: Vec<(f64, Vec<u32>)> = logp
                    .iter()
                    .enumerate()
                    .filter(|(id, _)| table[*id] == want)
                    .map(|(id, lp)| {
                        let mut f = filled.clone();
                        f.push(id as u32);
                        (score + lp.to_f64().unwrap_or(f64::NEG_INFINITY), f)
                    })
                    .collect();
                options.sort_by(by_score);
                options.truncate(cfg.beam_width);
                next.extend(options);
            }
            next.sort_by(by_score);
            next.truncate(cfg.beam_width);
            beams = next;
        }
        for (score, filled) in beams {
            let Ok(bytes) = vocab.decode_bytes(&filled) else { continue };
            let Ok(word) = String::from_utf8(bytes) else { continue };
            let Some(text) = word.strip_prefix(' ').and_then(unescape) else { continue };
            if Identifier::new(text).is_err() || !score.is_finite() {
                continue;
            }
            let entry = best.entry(String::from(text)).or_insert(f64::NEG_INFINITY);
            if score > *entry {
                *entry = score;
            }
        }
    }

    let mut ranked: Vec<Candidate> = best
        .into_iter()
        .map(|(text, score)| Candidate {
            text: Identifier::new(text).expect("validated above"),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.text.cmp(&b.text))
    });
    ranked.truncate(cfg.k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{BpeConfig, train_bpe};
    use crate::nn::model::ModelConfig;
    use crate::Error;

    #[test]
    fn piece_classes() {
        assert!(classify(b" State") == Piece::Start);
        assert!(classify(b"State") == Piece::Continue);
        assert!(classify(b" ") == Piece::Never);
        assert!(classify(b"  x") == Piece::Never);
        assert!(classify(b"a b") == Piece::Never);
        assert!(classify(b" )") == Piece::Never);
        assert!(classify(b" NAME") == Piece::Never);
        assert!(classify(b" )x") == Piece::Start);
        assert!(classify(b")") == Piece::Continue);
    }

    #[test]
    fn k_zero_and_mask_errors() {
        let vocab = train_bpe(["( MM ( CLS ( NAME A ) ( ATTRS ) ( ASSOCS ) ) )"; 3], BpeConfig::DESK).unwrap();
        let model = Model::<f32>::init(ModelConfig::tiny(vocab.len()), 0).unwrap();
        let ctx = SurfaceText::from_line("( MM ( CLS ( NAME <mask> ) ( ATTRS ) ( ASSOCS ) ) )");
        let cfg = FillConfig { k: 0, ..FillConfig::default() };
        assert!(fill_mask_topk(&model, &vocab, &ctx, &cfg).unwrap().is_empty());
        let none = SurfaceText::from_line("( MM ( CLS ( NAME A ) ( ATTRS ) ( ASSOCS ) ) )");
        assert_eq!(fill_mask_topk(&model, &vocab, &none, &FillConfig::default()), Err(Error::MaskCount(0)));

        let cfg = FillConfig { k: 5, max_subwords: 2, beam_width: 3 };
        let out = fill_mask_topk(&model, &vocab, &ctx, &cfg).unwrap();
        assert!(out.len() <= 5);
        assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
        let mut texts: Vec<&str> = out.iter().map(|c| c.text.as_str()).collect();
        texts.sort();
        texts.dedup();
        assert_eq!(texts.len(), out.len());
        assert!(out.iter().all(|c| !crate::tree::is_structural(c.text.as_str())));
    }
}
