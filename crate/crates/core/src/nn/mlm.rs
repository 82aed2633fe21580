//! Masked-language-model corruption of token sequences.

use alloc::vec::Vec;

use rand::Rng;

use crate::bpe::{is_special, BYTE_OFFSET, MASK};

/// Corrupted inputs plus `(position, original id)` labels per sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskedBatch {
    pub inputs: Vec<Vec<u32>>,
    pub labels: Vec<Vec<(usize, u32)>>,
}

impl MaskedBatch {
    pub fn label_count(&self) -> usize {
        self.labels.iter().map(Vec::len).sum()
    }
}

/// Selects each non-special position with probability `mask_rate`; a
/// selected position becomes `<mask>` 80% of the time, a random ordinary
/// token 10% of the time, and is left unchanged otherwise.
pub fn apply_mlm_masking<R: Rng + ?Sized>(
    batch: &[Vec<u32>],
    mask_rate: f64,
    vocab_size: usize,
    rng: &mut R,
) -> MaskedBatch {
    let mut out = MaskedBatch::default();
    for seq in batch {
        let mut input = seq.clone();
        let mut labels = Vec::new();
        for (pos, &id) in seq.iter().enumerate() {
            if is_special(id) || rng.random::<f64>() >= mask_rate {
                continue;
            }
            labels.push((pos, id));
            let roll = rng.random::<f64>();
            if roll < 0.8 {
                input[pos] = MASK;
            } else if roll < 0.9 && vocab_size as u32 > BYTE_OFFSET {
                input[pos] = rng.random_range(BYTE_OFFSET..vocab_size as u32);
            }
        }
        out.inputs.push(input);
        out.labels.push(labels);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{BOS, EOS, PAD};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity() {
        let batch = alloc::vec![alloc::vec![0, 10, 11, 12, 1]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_mlm_masking(&batch, 0.0, 100, &mut rng);
        assert_eq!(out.inputs, batch);
        assert_eq!(out.label_count(), 0);
    }

    #[test]
    fn selected_fraction_near_rate() {
        let seq: Vec<u32> = (0..10_000).map(|i| 5 + (i % 50) as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let out = apply_mlm_masking(&[seq], 0.15, 60, &mut rng);
        let frac = out.label_count() as f64 / 10_000.0;
        assert!((frac - 0.15).abs() <= 0.01, "{frac}");
        let masked = out.inputs[0].iter().filter(|&&t| t == MASK).count() as f64;
        assert!((masked / out.label_count() as f64 - 0.8).abs() < 0.05);
    }

    #[test]
    fn specials_never_selected() {
        let seq = alloc::vec![BOS, 7, PAD, 8, PAD, 9, EOS];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let out = apply_mlm_masking(core::slice::from_ref(&seq), 0.5, 40, &mut rng);
            for &(pos, _) in &out.labels[0] {
                assert!(!is_special(seq[pos]));
            }
            for (pos, &id) in seq.iter().enumerate() {
                if is_special(id) {
                    assert_eq!(out.inputs[0][pos], id);
                }
            }
        }
    }
}
