mod common;

use std::collections::BTreeSet;

use common::eligible_metamodel;
use conceptlm_core::metamodel::ElementKind;
use conceptlm_core::sampler::{sample_global, sample_incremental, sample_local, SamplingStrategy, Strategy};
use proptest::prelude::*;

fn truths(samples: &[conceptlm_core::sampler::TestSample]) -> BTreeSet<(ElementKind, String, usize)> {
    // Identifiers may repeat across classes, so count occurrences.
    let mut seen = std::collections::BTreeMap::new();
    samples
        .iter()
        .map(|s| {
            let n = seen.entry((s.kind, s.ground_truth.to_string())).or_insert(0);
            *n += 1;
            (s.kind, s.ground_truth.to_string(), *n)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sample_counts(m in eligible_metamodel(7), seed in any::<u64>()) {
        let e = m.element_count();
        prop_assert_eq!(sample_global(&m).unwrap().len(), e);
        prop_assert_eq!(sample_local(&m).unwrap().len(), e);
        prop_assert_eq!(sample_incremental(&m, seed).unwrap().len(), e - 1);
    }

    #[test]
    fn every_sample_masks_once(m in eligible_metamodel(6), seed in any::<u64>()) {
        for s in sample_global(&m).unwrap().into_iter()
            .chain(sample_local(&m).unwrap())
            .chain(sample_incremental(&m, seed).unwrap())
        {
            prop_assert_eq!(s.context.mask_count(), 1);
            prop_assert!(s.context_size < m.element_count());
        }
    }

    #[test]
    fn local_contexts_are_no_larger(m in eligible_metamodel(7)) {
        let global = sample_global(&m).unwrap();
        let local = sample_local(&m).unwrap();
        for (g, l) in global.iter().zip(&local) {
            prop_assert_eq!(&g.ground_truth, &l.ground_truth);
            prop_assert!(l.context_size <= g.context_size);
            prop_assert!(l.context.len() <= g.context.len());
            prop_assert_eq!(g.context_size, m.element_count() - 1);
        }
    }

    #[test]
    fn incremental_covers_all_but_one_class(m in eligible_metamodel(7), seed in any::<u64>()) {
        let inc = sample_incremental(&m, seed).unwrap();
        let all = truths(&sample_global(&m).unwrap());
        let got = truths(&inc);
        prop_assert!(got.is_subset(&all));
        let missing: Vec<_> = all.difference(&got).collect();
        prop_assert_eq!(missing.len(), 1);
        prop_assert_eq!(missing[0].0, ElementKind::Class);
        prop_assert!(inc.windows(2).all(|w| w[0].context_size < w[1].context_size));
        prop_assert_eq!(&sample_incremental(&m, seed).unwrap(), &inc);
    }

    #[test]
    fn strategy_dispatch(m in eligible_metamodel(4), seed in any::<u64>()) {
        prop_assert_eq!(SamplingStrategy::new(Strategy::Incremental, seed).sample(&m).unwrap(), sample_incremental(&m, seed).unwrap());
        prop_assert_eq!(SamplingStrategy::new(Strategy::Global, seed).sample(&m).unwrap(), sample_global(&m).unwrap());
        prop_assert!(SamplingStrategy::global().seed().is_none());
    }
}
