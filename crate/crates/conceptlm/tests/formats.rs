use std::collections::BTreeMap;
use std::path::Path;

use conceptlm::canonical::{parse_canonical, to_canonical};
use conceptlm::files::{checkpoint_bytes, parse_checkpoint, sha256_hex};
use conceptlm::pipeline::parse_corpus_file;
use conceptlm::synth::{builtin_domains, generate_corpus};
use conceptlm::xmi::parse_xmi;
use conceptlm_core::metamodel::corpus_stats;
use conceptlm_core::nn::{Checkpoint, Model, ModelConfig};
use conceptlm_core::tree::{build_tree, flatten, unescape};
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn ecore_and_canonical_fixtures_agree() {
    let xmi = parse_corpus_file(&fixture("fsm.ecore"), "fsm.ecore").unwrap();
    let json = parse_corpus_file(&fixture("fsm.json"), "fsm.json").unwrap();
    assert_eq!(xmi.classes, json.classes);
    assert_eq!(xmi.id, "fsm.ecore");
    assert_eq!(xmi.classes.len(), 3);
    assert!(xmi.classes[0].associations[0].is_containment);
    assert!(!xmi.classes[2].associations[0].is_containment);
    assert_eq!(xmi.classes[2].attributes[0].type_name.as_str(), "EString");
}

#[test]
fn broken_xml_is_an_error() {
    let bytes = std::fs::read(fixture("broken.ecore")).unwrap();
    assert!(parse_xmi(&bytes, "broken").is_err());
}

/// Counts names straight off the surface tokens: the word after `NAME`
/// and the last word of every `ATTR`/`ASSOC` group.
fn surface_counts<'a>(corpus: impl IntoIterator<Item = &'a conceptlm_core::Metamodel>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for m in corpus {
        let toks = flatten(&build_tree(m)).tokens;
        for (i, t) in toks.iter().enumerate() {
            let name = match t.as_str() {
                "NAME" => &toks[i + 1],
                "ATTR" | "ASSOC" => &toks[i + 2],
                _ => continue,
            };
            *counts.entry(unescape(name).unwrap().to_string()).or_insert(0) += 1;
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_round_trip(seed in any::<u64>()) {
        for m in generate_corpus(&builtin_domains(), 6, seed).unwrap() {
            let back = parse_canonical(&to_canonical(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn corpus_stats_match_surface_count(seed in any::<u64>(), n in 1usize..12) {
        let corpus = generate_corpus(&builtin_domains(), n, seed).unwrap();
        let counts = surface_counts(&corpus);
        let stats = corpus_stats(&corpus);
        prop_assert_eq!(stats.identifier_count, counts.values().sum::<usize>());
        prop_assert_eq!(stats.type_count, counts.len());
        prop_assert_eq!(stats.hapax_count, counts.values().filter(|&&c| c == 1).count());
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), vocab in 270usize..300, cut in 1usize..64) {
        let model = Model::<f32>::init(ModelConfig::tiny(vocab), seed).unwrap();
        let ckpt = Checkpoint { config: model.config().clone(), params: model.params().to_vec(), log: vec![] };
        let bytes = checkpoint_bytes(&ckpt, "tiny").unwrap();
        let loaded = parse_checkpoint(Path::new("mem"), &bytes).unwrap();
        prop_assert_eq!(&loaded.checkpoint, &ckpt);
        prop_assert_eq!(loaded.preset, "tiny");
        prop_assert_eq!(loaded.sha256, sha256_hex(&bytes));
        prop_assert!(parse_checkpoint(Path::new("mem"), &bytes[..bytes.len() - cut]).is_err());
    }
}
