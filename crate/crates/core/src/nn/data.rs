//! Turning surface text into model input ids.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bpe::{Vocabulary, BOS, EOS, MASK};
use crate::tree::SurfaceText;
use crate::{Error, Result};

/// `<s> tokens </s>`, dropping trailing class subtrees until the sequence
/// fits in `max_len`.
pub fn encode_surface(vocab: &Vocabulary, text: &SurfaceText, max_len: usize) -> Vec<u32> {
    let wrap = |t: &SurfaceText| {
        let mut ids = Vec::with_capacity(t.len() * 2 + 2);
        ids.push(BOS);
        ids.extend(vocab.encode(&t.to_string()));
        ids.push(EOS);
        ids
    };
    let mut ids = wrap(text);
    let mut keep = text.class_spans().len();
    while ids.len() > max_len && keep > 0 {
        keep -= 1;
        ids = wrap(&text.retain_classes(|i| i < keep));
    }
    ids.truncate(max_len);
    ids
}

/// A context split around its single mask slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedContext {
    /// Starts with `<s>`.
    pub prefix: Vec<u32>,
    /// Ends with `</s>`.
    pub suffix: Vec<u32>,
}

impl MaskedContext {
    /// `prefix ++ filled ++ <mask>×open ++ suffix`.
    pub fn with_slot(&self, filled: &[u32], open: usize) -> Vec<u32> {
        let mut ids = Vec::with_capacity(self.prefix.len() + filled.len() + open + self.suffix.len());
        ids.extend_from_slice(&self.prefix);
        ids.extend_from_slice(filled);
        ids.extend(core::iter::repeat_n(MASK, open));
        ids.extend_from_slice(&self.suffix);
        ids
    }

    pub fn slot_position(&self) -> usize {
        self.prefix.len()
    }

    pub fn base_len(&self) -> usize {
        self.prefix.len() + self.suffix.len()
    }
}

fn split_encode(vocab: &Vocabulary, text: &SurfaceText, at: usize) -> MaskedContext {
    let mut prefix = alloc::vec![BOS];
    prefix.extend(vocab.encode(&text.tokens[..at].join(" ")));
    let mut rest = String::new();
    for tok in &text.tokens[at + 1..] {
        rest.push(' ');
        rest.push_str(tok);
    }
    let mut suffix = vocab.encode(&rest);
    suffix.push(EOS);
    MaskedContext { prefix, suffix }
}

/// Encodes a one-mask context so that `slot` extra positions still fit in
/// `max_len`. Class subtrees not holding the mask are dropped from the end,
/// then from the front; as a last resort the token streams are cropped.
pub fn encode_masked_context(vocab: &Vocabulary, text: &SurfaceText, max_len: usize, slot: usize) -> Result<MaskedContext> {
    let masks = text.mask_count();
    if masks != 1 {
        return Err(Error::MaskCount(masks));
    }
    let budget = max_len.saturating_sub(slot);
    let locate = |t: &SurfaceText| t.mask_position().expect("one mask");
    let mut ctx = split_encode(vocab, text, locate(text));
    if ctx.base_len() <= budget {
        return Ok(ctx);
    }
    let spans = text.class_spans();
    let pos = locate(text);
    let home = spans.iter().position(|s| s.contains(&pos));
    let mut keep: Vec<bool> = alloc::vec![true; spans.len()];
    let order: Vec<usize> = (0..spans.len()).rev().chain(0..spans.len()).collect();
    for ci in order {
        if Some(ci) == home || !keep[ci] {
            continue;
        }
        keep[ci] = false;
        let t = text.retain_classes(|i| keep[i]);
        ctx = split_encode(vocab, &t, locate(&t));
        if ctx.base_len() <= budget {
            return Ok(ctx);
        }
    }
    while ctx.base_len() > budget && ctx.suffix.len() > 1 {
        ctx.suffix.remove(ctx.suffix.len() - 2);
    }
    while ctx.base_len() > budget && ctx.prefix.len() > 1 {
        ctx.prefix.remove(1);
    }
    if ctx.base_len() > budget {
        return Err(Error::Config("max_sequence_length too small for the mask slot".into()));
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::fixtures::fsm;
    use crate::metamodel::ElementRef;
    use crate::tree::{build_tree, flatten, mask_element};

    #[test]
    fn surface_round_trips_through_ids() {
        let vocab = Vocabulary::base();
        let text = flatten(&build_tree(&fsm()));
        let ids = encode_surface(&vocab, &text, 10_000);
        assert_eq!(ids[0], BOS);
        assert_eq!(*ids.last().unwrap(), EOS);
        assert_eq!(vocab.decode(&ids[1..ids.len() - 1]).unwrap(), text.to_string());
    }

    #[test]
    fn truncation_drops_whole_classes() {
        let vocab = Vocabulary::base();
        let text = flatten(&build_tree(&fsm()));
        let full = encode_surface(&vocab, &text, 10_000).len();
        let ids = encode_surface(&vocab, &text, full - 1);
        let decoded = vocab.decode(&ids[1..ids.len() - 1]).unwrap();
        let back = SurfaceText::from_line(&decoded);
        assert_eq!(back.class_spans().len(), 2);
        assert!(crate::tree::parse_surface(&back).is_ok());
    }

    #[test]
    fn masked_context_keeps_the_mask_class() {
        let vocab = Vocabulary::base();
        let (ctx, _) = mask_element(&fsm(), ElementRef::class(2)).unwrap();
        let enc = encode_masked_context(&vocab, &ctx, 10_000, 3).unwrap();
        let ids = enc.with_slot(&[], 1);
        assert_eq!(ids.iter().filter(|&&i| i == MASK).count(), 1);
        assert_eq!(vocab.decode(&ids[1..ids.len() - 1]).unwrap().replace("( NAME<mask>", "( NAME <mask>"), ctx.to_string());

        let small = encode_masked_context(&vocab, &ctx, enc.base_len() + 2, 3).unwrap();
        assert!(small.base_len() + 3 <= enc.base_len() + 2);
        let text = vocab.decode(&small.with_slot(&[], 0)[1..]).unwrap();
        assert!(text.contains("( NAME"));
        assert!(!text.contains("NAME State"));

        let (two, _) = mask_element(&fsm(), ElementRef::class(0)).unwrap();
        let mut two = two;
        two.tokens[10] = crate::tree::MASK.into();
        assert_eq!(encode_masked_context(&vocab, &two, 100, 1), Err(Error::MaskCount(2)));
    }
}
