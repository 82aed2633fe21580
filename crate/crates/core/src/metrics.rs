//! Recall@k and MRR@k over ranked recommendations, with breakdowns by
//! element kind, context size and training-set occurrence count.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metamodel::ElementKind;
use crate::sampler::TestSample;
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 20];

/// One evaluated test sample: where the ground truth landed, if anywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub kind: ElementKind,
    pub context_size: usize,
    /// How often the ground truth occurs in the training corpus.
    pub occurrences: usize,
    /// 1-based rank of the ground truth in the recommendation list.
    pub rank: Option<usize>,
}

/// A test sample with the recommendations made for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub sample: TestSample,
    pub candidates: Vec<String>,
    /// Present iff the ground truth matches a candidate exactly.
    pub rank: Option<usize>,
}

impl ScoredRecord {
    pub fn new(sample: TestSample, candidates: Vec<String>) -> Self {
        let rank = rank_of(&candidates, sample.ground_truth.as_str());
        Self { sample, candidates, rank }
    }

    /// Aggregation view; `occurrences` is the ground truth's training count.
    pub fn scored(&self, occurrences: usize) -> ScoredSample {
        ScoredSample {
            kind: self.sample.kind,
            context_size: self.sample.context_size,
            occurrences,
            rank: self.rank,
        }
    }
}

/// 1-based position of `truth` in `ranked`.
pub fn rank_of<S: AsRef<str>>(ranked: &[S], truth: &str) -> Option<usize> {
    ranked.iter().position(|c| c.as_ref() == truth).map(|i| i + 1)
}

fn hit(rank: Option<usize>, k: usize) -> Option<usize> {
    rank.filter(|&r| r <= k)
}

/// Fraction of samples whose ground truth is in the top `k`.
pub fn recall_at_k(run: &[ScoredSample], k: usize) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::EmptyRun);
    }
    let hits = run.iter().filter(|s| hit(s.rank, k).is_some()).count();
    Ok(hits as f64 / run.len() as f64)
}

/// Mean reciprocal rank with ranks beyond `k` contributing zero.
pub fn mrr_at_k(run: &[ScoredSample], k: usize) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::EmptyRun);
    }
    let sum: f64 = run.iter().filter_map(|s| hit(s.rank, k)).map(|r| 1.0 / r as f64).sum();
    Ok(sum / run.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub recall: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub samples: usize,
    pub top1: f64,
    pub at: Vec<AtK>,
}

impl MetricSet {
    pub fn compute(run: &[ScoredSample], ks: &[usize]) -> Result<Self> {
        let at = ks
            .iter()
            .map(|&k| {
                Ok(AtK {
                    k,
                    recall: recall_at_k(run, k)?,
                    mrr: mrr_at_k(run, k)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            samples: run.len(),
            top1: recall_at_k(run, 1)?,
            at,
        })
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.at.iter().find(|a| a.k == k).map(|a| a.recall)
    }

    pub fn mrr(&self, k: usize) -> Option<f64> {
        self.at.iter().find(|a| a.k == k).map(|a| a.mrr)
    }
}

/// Intervals `[edges[i], edges[i+1] - 1]`; with `open_ended` the last edge
/// also starts an unbounded bin. Values outside every bin are reported in a
/// trailing overflow bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    pub edges: Vec<usize>,
    pub open_ended: bool,
}

impl Binning {
    pub fn new(edges: Vec<usize>, open_ended: bool) -> Result<Self> {
        if edges.is_empty() || (edges.len() < 2 && !open_ended) {
            return Err(Error::Config("binning needs at least one bin".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bin edges must be strictly increasing".into()));
        }
        Ok(Self { edges, open_ended })
    }

    /// Context-size intervals 1-10, 11-20, ..., 51+; an empty context
    /// lands in the overflow bin.
    pub fn context_default() -> Self {
        Self {
            edges: alloc::vec![1, 11, 21, 31, 41, 51],
            open_ended: true,
        }
    }

    /// Occurrence bins: 0 (unseen), 1 (hapax), 2-10, 11+.
    pub fn occurrence_default() -> Self {
        Self {
            edges: alloc::vec![0, 1, 2, 11],
            open_ended: true,
        }
    }

    /// Number of regular bins (the overflow bin excluded).
    pub fn len(&self) -> usize {
        self.edges.len() - usize::from(!self.open_ended)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Regular bin holding `v`, `None` for overflow.
    pub fn bin(&self, v: usize) -> Option<usize> {
        let i = self.edges.iter().rposition(|&e| e <= v)?;
        (i < self.len()).then_some(i)
    }

    pub fn bounds(&self, i: usize) -> (usize, Option<usize>) {
        (self.edges[i], self.edges.get(i + 1).copied())
    }

    pub fn label(&self, i: usize) -> String {
        match self.bounds(i) {
            (lo, None) => format!("{lo}+"),
            (lo, Some(hi)) if hi == lo + 1 => format!("{lo}"),
            (lo, Some(hi)) => format!("{lo}-{}", hi - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub label: String,
    /// `None` for the overflow bin.
    pub lower: Option<usize>,
    /// Exclusive; `None` for an open-ended bin.
    pub upper: Option<usize>,
    pub samples: usize,
    /// `None` when no sample fell into the bin.
    pub metrics: Option<MetricSet>,
}

pub const OVERFLOW: &str = "overflow";

/// Per-bin metrics for the bins of `binning`, followed by the overflow bin.
pub fn bin_by(run: &[ScoredSample], ks: &[usize], binning: &Binning, key: impl Fn(&ScoredSample) -> usize) -> Result<Vec<BinReport>> {
    let n = binning.len();
    let mut groups: Vec<Vec<ScoredSample>> = alloc::vec![Vec::new(); n + 1];
    for s in run {
        groups[binning.bin(key(s)).unwrap_or(n)].push(s.clone());
    }
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (label, lower, upper) = if i < n {
                let (lo, hi) = binning.bounds(i);
                (binning.label(i), Some(lo), hi)
            } else {
                (OVERFLOW.into(), None, None)
            };
            Ok(BinReport {
                label,
                lower,
                upper,
                samples: g.len(),
                metrics: if g.is_empty() { None } else { Some(MetricSet::compute(g, ks)?) },
            })
        })
        .collect()
}

pub fn bin_by_context(run: &[ScoredSample], ks: &[usize], binning: &Binning) -> Result<Vec<BinReport>> {
    bin_by(run, ks, binning, |s| s.context_size)
}

pub fn bin_by_occurrence(run: &[ScoredSample], ks: &[usize], binning: &Binning) -> Result<Vec<BinReport>> {
    bin_by(run, ks, binning, |s| s.occurrences)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub overall: MetricSet,
    pub per_kind: BTreeMap<ElementKind, MetricSet>,
    pub by_context_size: Vec<BinReport>,
    pub by_occurrence: Vec<BinReport>,
}

impl EvalReport {
    pub fn compute(run: &[ScoredSample], ks: &[usize], context: &Binning, occurrence: &Binning) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::Config("no cutoffs given".into()));
        }
        let overall = MetricSet::compute(run, ks)?;
        let mut per_kind = BTreeMap::new();
        for kind in ElementKind::ALL {
            let subset: Vec<ScoredSample> = run.iter().filter(|s| s.kind == kind).cloned().collect();
            if !subset.is_empty() {
                per_kind.insert(kind, MetricSet::compute(&subset, ks)?);
            }
        }
        Ok(Self {
            ks: ks.to_vec(),
            overall,
            per_kind,
            by_context_size: bin_by_context(run, ks, context)?,
            by_occurrence: bin_by_occurrence(run, ks, occurrence)?,
        })
    }

    pub fn with_defaults(run: &[ScoredSample]) -> Result<Self> {
        Self::compute(run, &DEFAULT_KS, &Binning::context_default(), &Binning::occurrence_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(rank: Option<usize>) -> ScoredSample {
        ScoredSample {
            kind: ElementKind::Class,
            context_size: 3,
            occurrences: 1,
            rank,
        }
    }

    #[test]
    fn rank_two_gives_half() {
        let ranked = ["Node", "State", "Place"];
        let r = rank_of(&ranked, "State");
        assert_eq!(r, Some(2));
        let run = [s(r)];
        assert_eq!(recall_at_k(&run, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&run, 5).unwrap(), 1.0);
        assert_eq!(mrr_at_k(&run, 5).unwrap(), 0.5);
        assert_eq!(mrr_at_k(&run, 1).unwrap(), 0.0);
    }

    #[test]
    fn empty_run_is_an_error() {
        assert_eq!(recall_at_k(&[], 3), Err(Error::EmptyRun));
        assert_eq!(mrr_at_k(&[], 3), Err(Error::EmptyRun));
    }

    #[test]
    fn binning_labels_and_lookup() {
        let b = Binning::occurrence_default();
        let labels: Vec<String> = (0..b.len()).map(|i| b.label(i)).collect();
        assert_eq!(labels, ["0", "1", "2-10", "11+"]);
        assert_eq!(b.bin(0), Some(0));
        assert_eq!(b.bin(10), Some(2));
        assert_eq!(b.bin(500), Some(3));
        assert_eq!(Binning::new(vec![5], true).unwrap().bin(4), None);
        assert!(Binning::new(vec![], true).is_err());
        assert!(Binning::new(vec![3], false).is_err());
        assert!(Binning::new(vec![1, 1], false).is_err());
        assert!(Binning::new(vec![2, 1], false).is_err());
    }

    #[test]
    fn closed_context_bins_with_overflow() {
        let b = Binning::new(vec![1, 11, 21], false).unwrap();
        let run: Vec<ScoredSample> = [3, 15, 0, 21]
            .iter()
            .map(|&c| ScoredSample { context_size: c, ..s(Some(1)) })
            .collect();
        let bins = bin_by_context(&run, &[1], &b).unwrap();
        let summary: Vec<(&str, usize)> = bins.iter().map(|b| (b.label.as_str(), b.samples)).collect();
        assert_eq!(summary, [("1-10", 1), ("11-20", 1), ("overflow", 2)]);
    }

    #[test]
    fn worked_examples() {
        let run = [s(Some(1)), s(Some(6)), s(None)];
        assert!((recall_at_k(&run, 5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((recall_at_k(&run, 10).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let run = [s(Some(1)), s(Some(4)), s(None)];
        assert!((mrr_at_k(&run, 5).unwrap() - 1.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_marks_empty_bins() {
        let run = [s(Some(1)), s(None)];
        let report = EvalReport::with_defaults(&run).unwrap();
        assert_eq!(report.overall.recall(1), Some(0.5));
        assert_eq!(report.per_kind.len(), 1);
        assert_eq!(report.overall.top1, 0.5);
        assert!(report.by_context_size[0].metrics.is_some());
        assert!(report.by_context_size[1].metrics.is_none());
        assert_eq!(report.by_context_size.last().unwrap().label, OVERFLOW);
        assert!(report.by_occurrence[0].metrics.is_none());
        assert_eq!(report.by_occurrence[1].metrics.as_ref().unwrap().samples, 2);
    }
}
