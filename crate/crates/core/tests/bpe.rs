use std::collections::BTreeMap;

use conceptlm_core::bpe::{pretokenize, train_bpe, BpeConfig, Vocabulary, BASE_VOCAB, MASK};
use proptest::prelude::*;

/// Reference trainer: full recount every round, byte strings as symbols.
fn naive_merges(lines: &[String], cfg: BpeConfig) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut words: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for line in lines {
        for piece in pretokenize(line) {
            *words.entry(piece.as_bytes().to_vec()).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<Vec<u8>>, u64)> = words.into_iter().map(|(w, c)| (w.iter().map(|&b| vec![b]).collect(), c)).collect();
    let mut known: std::collections::BTreeSet<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    let mut size = BASE_VOCAB;
    while size < cfg.vocab_size {
        let mut counts: BTreeMap<(Vec<u8>, Vec<u8>), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += c;
            }
        }
        // Highest count; among equals the smallest pair (BTreeMap order).
        let Some(((l, r), c)) = counts.into_iter().fold(None, |best: Option<((Vec<u8>, Vec<u8>), u64)>, (p, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((p, c)),
        }) else { break };
        if c < cfg.min_frequency {
            break;
        }
        let joined = [l.clone(), r.clone()].concat();
        if known.insert(joined.clone()) {
            size += 1;
        }
        for (syms, _) in &mut words {
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(syms[i].clone());
                    i += 1;
                }
            }
            *syms = out;
        }
        merges.push((l, r));
    }
    merges
}

fn merge_bytes(v: &Vocabulary) -> Vec<(Vec<u8>, Vec<u8>)> {
    v.merges()
        .iter()
        .map(|m| (v.token_bytes(m.left).unwrap().to_vec(), v.token_bytes(m.right).unwrap().to_vec()))
        .collect()
}

fn corpus() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(r"\( MM|CLS|[a-d ]{1,12}|State|isFinal|é|数", 1..10).prop_map(|parts| {
        parts.chunks(3).map(|c| c.join(" ")).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_round_trip(lines in corpus(), text in "\\PC{0,40}") {
        let v = train_bpe(lines.iter().map(String::as_str), BpeConfig { vocab_size: 300, min_frequency: 1 }).unwrap();
        prop_assert_eq!(v.decode(&v.encode(&text)).unwrap(), text.clone());
        prop_assert!(v.encode(&text).len() <= text.len());
    }

    #[test]
    fn matches_reference_trainer(lines in corpus(), extra in 1usize..40, min_frequency in 1u64..3) {
        let cfg = BpeConfig { vocab_size: BASE_VOCAB + extra, min_frequency };
        let v = train_bpe(lines.iter().map(String::as_str), cfg).unwrap();
        prop_assert_eq!(merge_bytes(&v), naive_merges(&lines, cfg));
        prop_assert!(v.len() <= cfg.vocab_size);
    }

    #[test]
    fn training_is_deterministic_and_nested(lines in corpus(), a in 1usize..30, b in 1usize..30, probe in "\\PC{0,30}") {
        let (small, large) = (a.min(b), a.max(b));
        let train = |n: usize| train_bpe(lines.iter().map(String::as_str), BpeConfig { vocab_size: BASE_VOCAB + n, min_frequency: 1 }).unwrap();
        let s = train(small);
        prop_assert_eq!(&s, &train(small));
        let l = train(large);
        prop_assert_eq!(&l.merges()[..s.merges().len()], s.merges());
        // More merges never lengthen an encoding.
        for text in lines.iter().map(String::as_str).chain([probe.as_str()]) {
            prop_assert!(l.encode(text).len() <= s.encode(text).len());
        }
    }

    #[test]
    fn frequent_identifier_becomes_one_token(word in "[A-Za-z]{2,8}") {
        let line = format!("( NAME {word} )");
        let v = train_bpe([line.as_str(), line.as_str()], BpeConfig { vocab_size: 400, min_frequency: 2 }).unwrap();
        prop_assert_eq!(v.encode(&format!(" {word}")).len(), 1);
    }

    #[test]
    fn vocab_file_round_trip(lines in corpus()) {
        let v = train_bpe(lines.iter().map(String::as_str), BpeConfig { vocab_size: 320, min_frequency: 1 }).unwrap();
        prop_assert_eq!(Vocabulary::from_file(&v.to_file()).unwrap(), v);
    }

    #[test]
    fn mask_word_is_one_token(prefix in "[a-z]{1,6}", suffix in "[a-z]{1,6}") {
        let v = Vocabulary::base();
        let ids = v.encode(&format!("{prefix} <mask> {suffix}"));
        prop_assert_eq!(ids.iter().filter(|&&i| i == MASK).count(), 1);
    }
}
