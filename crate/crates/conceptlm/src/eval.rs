//! Scoring test samples with the language model or the frequency baseline
//! and writing reports.

use std::path::Path;

use conceptlm_core::baseline::{baseline_rank, FrequencyTable};
use conceptlm_core::bpe::Vocabulary;
use conceptlm_core::metrics::{Binning, EvalReport, ScoredRecord, ScoredSample};
use conceptlm_core::nn::{fill_mask_topk, FillConfig, Model};
use conceptlm_core::sampler::TestSample;
use serde::{Deserialize, Serialize};

use crate::files::{write_atomic, write_json};
use crate::Result;

pub const REPORT_VERSION: &str = "report-v1";
pub const CSV_HEADER: &str = "metric,kind,bin,k,value";

/// Ranked candidates from the model for every sample.
pub fn score_with_model(model: &Model<f32>, vocab: &Vocabulary, samples: &[TestSample], fill: &FillConfig) -> Result<Vec<ScoredRecord>> {
    let one = |s: &TestSample| -> Result<ScoredRecord> {
        let candidates = fill_mask_topk(model, vocab, &s.context, fill)?;
        Ok(ScoredRecord::new(s.clone(), candidates.into_iter().map(|c| c.text.into_string()).collect()))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        samples.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        samples.iter().map(one).collect()
    }
}

/// Most frequent training identifiers of the sample's kind.
pub fn score_with_baseline(table: &FrequencyTable, samples: &[TestSample], k: usize) -> Vec<ScoredRecord> {
    samples
        .iter()
        .map(|s| {
            let candidates = baseline_rank(table, s.kind, k).into_iter().map(|c| c.text.into_string()).collect();
            ScoredRecord::new(s.clone(), candidates)
        })
        .collect()
}

pub fn to_scored(records: &[ScoredRecord], table: &FrequencyTable) -> Vec<ScoredSample> {
    records
        .iter()
        .map(|r| r.scored(table.occurrences(r.sample.ground_truth.as_str())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub version: String,
    /// What produced the recommendations, e.g. `model` or `baseline`.
    pub system: String,
    pub strategy: String,
    pub report: EvalReport,
}

pub fn build_report(records: &[ScoredRecord], table: &FrequencyTable, ks: &[usize], context: &Binning, occurrence: &Binning) -> Result<EvalReport> {
    Ok(EvalReport::compute(&to_scored(records, table), ks, context, occurrence)?)
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// One row per metric × kind × bin × k; metrics of empty bins are `NA`.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut rows = |kind: &str, bin: &str, set: Option<&conceptlm_core::metrics::MetricSet>| {
        out.push_str(&format!("top1,{kind},{bin},1,{}\n", fmt_value(set.map(|s| s.top1))));
        for &k in &report.ks {
            out.push_str(&format!("recall,{kind},{bin},{k},{}\n", fmt_value(set.and_then(|s| s.recall(k)))));
            out.push_str(&format!("mrr,{kind},{bin},{k},{}\n", fmt_value(set.and_then(|s| s.mrr(k)))));
        }
    };
    rows("all", "all", Some(&report.overall));
    for kind in conceptlm_core::ElementKind::ALL {
        rows(kind.as_str(), "all", report.per_kind.get(&kind));
    }
    for b in &report.by_context_size {
        rows("all", &format!("context:{}", b.label), b.metrics.as_ref());
    }
    for b in &report.by_occurrence {
        rows("all", &format!("occurrence:{}", b.label), b.metrics.as_ref());
    }
    out
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn emit_report(file: &ReportFile, dir: &Path, stem: &str) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), file)?;
    write_atomic(&dir.join(format!("{stem}.csv")), report_csv(&file.report).as_bytes())
}
