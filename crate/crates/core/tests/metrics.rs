use conceptlm_core::metamodel::ElementKind;
use conceptlm_core::metrics::{mrr_at_k, rank_of, recall_at_k, EvalReport, ScoredSample};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = ScoredSample> {
    (0usize..3, 0usize..80, 0usize..30, proptest::option::of(1usize..40)).prop_map(|(k, c, o, rank)| ScoredSample {
        kind: ElementKind::ALL[k],
        context_size: c,
        occurrences: o,
        rank,
    })
}

/// Straight-line reference: a hit when the truth sits within the first k.
fn oracle(run: &[ScoredSample], k: usize) -> (f64, f64) {
    let mut hits = 0.0;
    let mut rr = 0.0;
    for s in run {
        if let Some(r) = s.rank {
            if r <= k {
                hits += 1.0;
                rr += 1.0 / r as f64;
            }
        }
    }
    (hits / run.len() as f64, rr / run.len() as f64)
}

proptest! {
    #[test]
    fn metrics_match_oracle(run in proptest::collection::vec(sample(), 1..60), k in 1usize..30) {
        let (recall, mrr) = oracle(&run, k);
        prop_assert!((recall_at_k(&run, k).unwrap() - recall).abs() < 1e-12);
        prop_assert!((mrr_at_k(&run, k).unwrap() - mrr).abs() < 1e-12);
    }

    #[test]
    fn metric_invariants(run in proptest::collection::vec(sample(), 1..60), k in 1usize..30) {
        let r = recall_at_k(&run, k).unwrap();
        let m = mrr_at_k(&run, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(m <= r + 1e-12);
        prop_assert!(recall_at_k(&run, k + 1).unwrap() >= r);
        prop_assert!(mrr_at_k(&run, k + 1).unwrap() >= m);
        prop_assert!(r >= recall_at_k(&run, 1).unwrap() - 1e-12);
        prop_assert!((mrr_at_k(&run, 1).unwrap() - recall_at_k(&run, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn report_partitions_samples(run in proptest::collection::vec(sample(), 1..60)) {
        let report = EvalReport::with_defaults(&run).unwrap();
        let per_kind: usize = report.per_kind.values().map(|m| m.samples).sum();
        prop_assert_eq!(per_kind, run.len());
        let binned: usize = report.by_context_size.iter().filter_map(|b| b.metrics.as_ref()).map(|m| m.samples).sum();
        prop_assert_eq!(binned, run.len());
        let binned: usize = report.by_occurrence.iter().filter_map(|b| b.metrics.as_ref()).map(|m| m.samples).sum();
        prop_assert_eq!(binned, run.len());
    }

    #[test]
    fn rank_of_is_first_position(list in proptest::collection::vec("[a-c]", 0..8), truth in "[a-c]") {
        match rank_of(&list, &truth) {
            Some(r) => {
                prop_assert_eq!(&list[r - 1], &truth);
                prop_assert!(list[..r - 1].iter().all(|x| x != &truth));
            }
            None => prop_assert!(!list.contains(&truth)),
        }
    }
}
