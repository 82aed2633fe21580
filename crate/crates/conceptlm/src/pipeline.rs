//! The corpus-to-report pipeline as resumable stages.
//!
//! Every stage reads its inputs from the output directory, writes its
//! artifacts there and records a key derived from its configuration and
//! the digests of its inputs. A stage whose key is unchanged and whose
//! outputs still exist is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use conceptlm_core::baseline::FrequencyTable;
use conceptlm_core::bpe::{train_bpe, BpeConfig, Vocabulary};
use conceptlm_core::metamodel::{is_eligible_with, Metamodel};
use conceptlm_core::metrics::{Binning, DEFAULT_KS};
use conceptlm_core::nn::data::encode_surface;
use conceptlm_core::nn::{train, Checkpoint, EpochLog, FillConfig, Model, ModelConfig, TrainConfig};
use conceptlm_core::sampler::{SamplingStrategy, Strategy, TestSample};
use conceptlm_core::tree::{build_tree, flatten};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canonical::{parse_canonical, Document};
use crate::eval::{build_report, emit_report, score_with_baseline, score_with_model, ReportFile, REPORT_VERSION};
use crate::files::{self, read_json, read_jsonl, sha256_hex, write_json, write_jsonl};
use crate::xmi::parse_xmi;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_classes: usize,
    pub max_classes: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_classes: 2,
            max_classes: 15,
        }
    }
}

/// Metamodel-level split; the trainer further holds out its own
/// validation share of the training part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.9, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerConfig {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            vocab_size: BpeConfig::DESK.vocab_size,
            min_frequency: BpeConfig::DESK.min_frequency,
        }
    }
}

/// A named preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub num_layers: Option<usize>,
    pub hidden_size: Option<usize>,
    pub ffn_size: Option<usize>,
    pub num_heads: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub max_sequence_length: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            num_layers: None,
            hidden_size: None,
            ffn_size: None,
            num_heads: None,
            dropout_rate: None,
            max_sequence_length: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, vocab_size: usize, seed: u64) -> Result<ModelConfig> {
        let mut c = ModelConfig::preset(&self.preset, vocab_size)?;
        c.num_layers = self.num_layers.unwrap_or(c.num_layers);
        c.hidden_size = self.hidden_size.unwrap_or(c.hidden_size);
        c.ffn_size = self.ffn_size.unwrap_or(c.ffn_size);
        c.num_heads = self.num_heads.unwrap_or(c.num_heads);
        if let Some(d) = self.dropout_rate {
            c.dropout_rate = d;
            c.attention_dropout_rate = d;
        }
        c.max_sequence_length = self.max_sequence_length.unwrap_or(c.max_sequence_length);
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub strategies: Vec<Strategy>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Global],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub ks: Vec<usize>,
    pub max_subwords: usize,
    pub beam_width: usize,
    pub context_edges: Vec<usize>,
    pub occurrence_edges: Vec<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        let fill = FillConfig::default();
        Self {
            ks: DEFAULT_KS.to_vec(),
            max_subwords: fill.max_subwords,
            beam_width: fill.beam_width,
            context_edges: Binning::context_default().edges,
            occurrence_edges: Binning::occurrence_default().edges,
        }
    }
}

impl EvaluateConfig {
    pub fn fill(&self) -> FillConfig {
        FillConfig {
            k: self.ks.iter().copied().max().unwrap_or(0),
            max_subwords: self.max_subwords,
            beam_width: self.beam_width,
        }
    }

    pub fn binnings(&self) -> Result<(Binning, Binning)> {
        Ok((
            Binning::new(self.context_edges.clone(), true)?,
            Binning::new(self.occurrence_edges.clone(), true)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub tokenizer: TokenizerConfig,
    pub model: ModelSection,
    /// Its `seed` is replaced by the pipeline seed.
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus_dir: "corpus".into(),
            output_dir: "out".into(),
            seed: 0,
            filter: FilterConfig::default(),
            split: SplitConfig::default(),
            tokenizer: TokenizerConfig::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&files::read_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.filter;
        if !(2 <= f.min_classes && f.min_classes <= f.max_classes) {
            return Err(Error::Config("filter bounds must satisfy 2 ≤ min_classes ≤ max_classes".into()));
        }
        let s = &self.split;
        if s.train <= 0.0 || s.test <= 0.0 || (s.train + s.test - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must be positive and sum to 1".into()));
        }
        if self.evaluate.ks.is_empty() || self.evaluate.ks.contains(&0) {
            return Err(Error::Config("evaluate.ks must be non-empty and positive".into()));
        }
        self.evaluate.binnings()?;
        let mut train = self.train.clone();
        train.seed = self.seed;
        train.validate()?;
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kept: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn kept(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.kept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle of `ids`, then consecutive parts; every part after the
/// first gets `floor(ratio · n)` items and the first takes the rest.
pub fn run_split(ids: &[String], ratios: &[f64], seed: u64) -> Result<Vec<Vec<String>>> {
    if ids.len() < ratios.len() {
        return Err(Error::Config(format!("{} files cannot fill {} splits", ids.len(), ratios.len())));
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len() as f64;
    let tail: Vec<usize> = ratios[1..].iter().map(|r| (r * n + 1e-9).floor() as usize).collect();
    let first = ids.len().checked_sub(tail.iter().sum()).ok_or_else(|| Error::Config("ratios exceed 1".into()))?;
    let mut parts = Vec::new();
    let mut rest = shuffled.as_slice();
    for len in std::iter::once(first).chain(tail) {
        if len == 0 {
            return Err(Error::Config(format!("{} files leave a split empty", ids.len())));
        }
        let (head, tail) = rest.split_at(len);
        parts.push(head.to_vec());
        rest = tail;
    }
    Ok(parts)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(path.extension().and_then(|e| e.to_str()), Some("ecore" | "xmi" | "json")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses one corpus file; the id is the path relative to the corpus root.
pub fn parse_corpus_file(path: &Path, id: &str) -> Result<Metamodel> {
    let bytes = files::read(path)?;
    let mut m = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_canonical(std::str::from_utf8(&bytes).map_err(|e| Error::format(path, e.to_string()))?)?,
        _ => parse_xmi(&bytes, id)?,
    };
    m.id = id.to_string();
    Ok(m)
}

/// Output artifacts, all relative to the output directory.
#[derive(Debug, Clone)]
pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn root(&self) -> &Path {
        &self.root
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn metamodels(&self) -> PathBuf {
        self.root.join("metamodels.jsonl")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }
    pub fn train_text(&self) -> PathBuf {
        self.root.join("train.txt")
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.json")
    }
    pub fn samples(&self, s: Strategy) -> PathBuf {
        self.root.join(format!("samples-{}.jsonl", s.as_str()))
    }
    pub fn predictions(&self, s: Strategy) -> PathBuf {
        self.root.join(format!("predictions-{}.jsonl", s.as_str()))
    }
    pub fn report(&self, system: &str, s: Strategy) -> PathBuf {
        self.root.join(format!("{system}-{}.json", s.as_str()))
    }
    fn stage_key(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.key"))
    }
}

/// Model and baseline reports for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub model: ReportFile,
    pub baseline: ReportFile,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub paths: Paths,
    pub verbose: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let paths = Paths::new(&config.output_dir);
        Ok(Self {
            config,
            paths,
            verbose: false,
        })
    }

    fn note(&self, stage: &str, msg: impl std::fmt::Display) {
        if self.verbose {
            eprintln!("[{stage}] {msg}");
        }
    }

    fn digest(&self, stage: &'static str, path: &Path) -> Result<String> {
        if !path.exists() {
            let what = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            return Err(Error::stage(stage, format!("missing {what}; run the earlier stages first")));
        }
        files::sha256_file(path)
    }

    /// Runs `work` unless the stage key and outputs are unchanged. `slot`
    /// names the key file; per-strategy stages need one each.
    fn cached(&self, stage: &'static str, slot: &str, key: &impl Serialize, outputs: &[PathBuf], work: impl FnOnce() -> Result<()>) -> Result<()> {
        let key = sha256_hex(&serde_json::to_vec(&(stage, key))?);
        let key_path = self.paths.stage_key(slot);
        let fresh = files::read_string(&key_path).is_ok_and(|k| k.trim() == key) && outputs.iter().all(|o| o.exists());
        if fresh {
            self.note(stage, "up to date");
            return Ok(());
        }
        let started = Instant::now();
        work().map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::stage(stage, e),
        })?;
        files::write_atomic(&key_path, key.as_bytes())?;
        self.note(stage, format!("done in {:.1}s", started.elapsed().as_secs_f64()));
        Ok(())
    }

    pub fn ingest(&self) -> Result<Manifest> {
        let dir = &self.config.corpus_dir;
        let mut paths = Vec::new();
        collect_files(dir, &mut paths).map_err(|e| Error::stage("ingest", e))?;
        paths.sort();
        // Keyed on file contents, so edits to the corpus invalidate the stage.
        let mut listing = BTreeMap::new();
        for p in &paths {
            listing.insert(p.to_string_lossy().into_owned(), files::sha256_file(p)?);
        }
        let outputs = [self.paths.manifest(), self.paths.metamodels()];
        self.cached("ingest", "ingest", &(&self.config.filter, &listing), &outputs, || {
            let mut entries = Vec::new();
            let mut kept = Vec::new();
            for p in &paths {
                let id = p.strip_prefix(dir).unwrap_or(p).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                let entry = match parse_corpus_file(p, &id) {
                    Err(e) => ManifestEntry {
                        path: id,
                        kept: false,
                        reason: Some(format!("parse: {e}")),
                        classes: None,
                    },
                    Ok(m) => {
                        let n = m.classes.len();
                        let ok = is_eligible_with(&m, self.config.filter.min_classes, self.config.filter.max_classes);
                        if ok {
                            kept.push(Document::from_metamodel(&m));
                        }
                        ManifestEntry {
                            path: id,
                            kept: ok,
                            reason: (!ok).then(|| "class-count".to_string()),
                            classes: Some(n),
                        }
                    }
                };
                entries.push(entry);
            }
            let manifest = Manifest { entries };
            self.note("ingest", format!("{} files, {} kept", manifest.entries.len(), kept.len()));
            write_json(&self.paths.manifest(), &manifest)?;
            write_jsonl(&self.paths.metamodels(), &kept)
        })?;
        read_json(&self.paths.manifest())
    }

    fn metamodels(&self, stage: &'static str) -> Result<BTreeMap<String, Metamodel>> {
        self.digest(stage, &self.paths.metamodels())?;
        read_jsonl::<Document>(&self.paths.metamodels())?
            .into_iter()
            .map(|d| Ok((d.id.clone(), d.to_metamodel()?)))
            .collect()
    }

    pub fn split(&self) -> Result<SplitLists> {
        let input = self.digest("split", &self.paths.manifest())?;
        let key = (&self.config.split, self.config.seed, input);
        self.cached("split", "split", &key, &[self.paths.split()], || {
            let manifest: Manifest = read_json(&self.paths.manifest())?;
            let ids: Vec<String> = manifest.kept().map(|e| e.path.clone()).collect();
            let mut parts = run_split(&ids, &[self.config.split.train, self.config.split.test], self.config.seed)?.into_iter();
            let lists = SplitLists {
                train: parts.next().expect("two parts"),
                test: parts.next().expect("two parts"),
            };
            self.note("split", format!("{} train, {} test", lists.train.len(), lists.test.len()));
            write_json(&self.paths.split(), &lists)
        })?;
        read_json(&self.paths.split())
    }

    fn split_models(&self, stage: &'static str) -> Result<(Vec<Metamodel>, Vec<Metamodel>)> {
        self.digest(stage, &self.paths.split())?;
        let lists: SplitLists = read_json(&self.paths.split())?;
        let mut all = self.metamodels(stage)?;
        let mut take = |ids: &[String]| -> Result<Vec<Metamodel>> {
            ids.iter()
                .map(|id| all.remove(id).ok_or_else(|| Error::stage(stage, format!("split lists unknown metamodel {id}"))))
                .collect()
        };
        let train = take(&lists.train)?;
        let test = take(&lists.test)?;
        Ok((train, test))
    }

    /// Surface text of the training metamodels, one per line.
    pub fn encode(&self) -> Result<()> {
        let key = (self.digest("encode", &self.paths.split())?, self.digest("encode", &self.paths.metamodels())?);
        self.cached("encode", "encode", &key, &[self.paths.train_text()], || {
            let (train, _) = self.split_models("encode")?;
            files::write_lines(&self.paths.train_text(), train.iter().map(|m| flatten(&build_tree(m)).to_string()))
        })
    }

    pub fn train_tokenizer(&self) -> Result<Vocabulary> {
        let key = (&self.config.tokenizer, self.digest("train-tokenizer", &self.paths.train_text())?);
        self.cached("train-tokenizer", "train-tokenizer", &key, &[self.paths.vocab()], || {
            let lines = files::read_lines(&self.paths.train_text())?;
            let cfg = BpeConfig {
                vocab_size: self.config.tokenizer.vocab_size,
                min_frequency: self.config.tokenizer.min_frequency,
            };
            let vocab = train_bpe(lines.iter().map(String::as_str), cfg)?;
            self.note("train-tokenizer", format!("{} tokens", vocab.len()));
            files::save_vocab(&self.paths.vocab(), &vocab)
        })?;
        files::load_vocab(&self.paths.vocab())
    }

    pub fn train_model(&self) -> Result<files::LoadedCheckpoint> {
        let key = (
            &self.config.model,
            self.config.train_config(),
            self.digest("train", &self.paths.vocab())?,
            self.digest("train", &self.paths.train_text())?,
        );
        let outputs = [self.paths.checkpoint(), self.paths.train_log()];
        self.cached("train", "train", &key, &outputs, || {
            let vocab = files::load_vocab(&self.paths.vocab())?;
            let config = self.config.model.resolve(vocab.len(), self.config.seed)?;
            let lines = files::read_lines(&self.paths.train_text())?;
            let sequences: Vec<Vec<u32>> = lines
                .iter()
                .map(|l| encode_surface(&vocab, &conceptlm_core::tree::SurfaceText::from_line(l), config.max_sequence_length))
                .collect();
            let model = Model::<f32>::init(config, self.config.seed)?;
            self.note("train", format!("{} parameters, {} sequences", model.param_count(), sequences.len()));
            let started = Instant::now();
            let mut report = |e: &EpochLog| {
                let val = e.validation_loss.map_or_else(|| "-".into(), |v| format!("{v:.4}"));
                self.note("train", format!("epoch {:>3} train {:.4} val {val} ({:.0}s)", e.epoch, e.train_loss, started.elapsed().as_secs_f64()));
            };
            let outcome = train(model, &sequences, &self.config.train_config(), &mut report)?;
            self.note("train", format!("best epoch {}", outcome.best_epoch));
            let ckpt = Checkpoint::from_outcome(&outcome);
            write_json(&self.paths.train_log(), &ckpt.log)?;
            files::save_checkpoint(&self.paths.checkpoint(), &ckpt, &self.config.model.preset)
        })?;
        files::load_checkpoint(&self.paths.checkpoint())
    }

    pub fn sample(&self, strategy: Strategy) -> Result<Vec<TestSample>> {
        let key = (
            strategy,
            self.config.seed,
            self.digest("sample", &self.paths.split())?,
            self.digest("sample", &self.paths.metamodels())?,
        );
        let out = self.paths.samples(strategy);
        self.cached("sample", &format!("sample-{}", strategy.as_str()), &key, std::slice::from_ref(&out), || {
            let (_, test) = self.split_models("sample")?;
            let sampler = SamplingStrategy::new(strategy, self.config.seed);
            let mut samples = Vec::new();
            for m in &test {
                samples.extend(sampler.sample(m)?);
            }
            self.note("sample", format!("{} {} samples", samples.len(), strategy.as_str()));
            write_jsonl(&out, &samples)
        })?;
        read_jsonl(&out)
    }

    pub fn evaluate(&self, strategy: Strategy) -> Result<Evaluation> {
        const STAGE: &str = "evaluate";
        if !self.paths.checkpoint().exists() {
            return Err(Error::stage(STAGE, format!("missing checkpoint {}", self.paths.checkpoint().display())));
        }
        let key = (
            strategy,
            &self.config.evaluate,
            self.digest(STAGE, &self.paths.checkpoint())?,
            self.digest(STAGE, &self.paths.vocab())?,
            self.digest(STAGE, &self.paths.samples(strategy))?,
            self.digest(STAGE, &self.paths.split())?,
        );
        let outputs = [
            self.paths.predictions(strategy),
            self.paths.report("model", strategy),
            self.paths.report("baseline", strategy),
        ];
        self.cached(STAGE, &format!("evaluate-{}", strategy.as_str()), &key, &outputs, || {
            let loaded = files::load_checkpoint(&self.paths.checkpoint())?;
            let model = loaded.checkpoint.model()?;
            let vocab = files::load_vocab(&self.paths.vocab())?;
            let samples: Vec<TestSample> = read_jsonl(&self.paths.samples(strategy))?;
            let (train, _) = self.split_models(STAGE)?;
            let table = FrequencyTable::from_corpus(&train);
            let (context, occurrence) = self.config.evaluate.binnings()?;
            let ks = &self.config.evaluate.ks;

            let started = Instant::now();
            let records = score_with_model(&model, &vocab, &samples, &self.config.evaluate.fill())?;
            self.note(STAGE, format!("{} samples scored in {:.1}s", records.len(), started.elapsed().as_secs_f64()));
            write_jsonl(&self.paths.predictions(strategy), &records)?;
            let baseline = score_with_baseline(&table, &samples, self.config.evaluate.fill().k);
            for (system, recs) in [("model", &records), ("baseline", &baseline)] {
                let file = ReportFile {
                    version: REPORT_VERSION.into(),
                    system: system.into(),
                    strategy: strategy.as_str().into(),
                    report: build_report(recs, &table, ks, &context, &occurrence)?,
                };
                emit_report(&file, self.paths.root(), &format!("{system}-{}", strategy.as_str()))?;
            }
            Ok(())
        })?;
        Ok(Evaluation {
            model: read_json(&self.paths.report("model", strategy))?,
            baseline: read_json(&self.paths.report("baseline", strategy))?,
        })
    }

    /// All stages in order; one evaluation per configured strategy.
    pub fn run_end_to_end(&self) -> Result<Vec<Evaluation>> {
        self.ingest()?;
        self.split()?;
        self.encode()?;
        self.train_tokenizer()?;
        self.train_model()?;
        let mut out = Vec::new();
        for &s in &self.config.sample.strategies {
            self.sample(s)?;
            out.push(self.evaluate(s)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i:02}")).collect()
    }

    #[test]
    fn split_ratios_and_determinism() {
        let parts = run_split(&ids(10), &[0.9, 0.1], 1).unwrap();
        assert_eq!((parts[0].len(), parts[1].len()), (9, 1));
        assert_eq!(parts, run_split(&ids(10), &[0.9, 0.1], 1).unwrap());
        let mut union: Vec<String> = parts.concat();
        union.sort();
        assert_eq!(union, ids(10));
        assert_eq!(run_split(&ids(200), &[0.9, 0.1], 3).unwrap()[1].len(), 20);
        assert!(run_split(&ids(1), &[0.9, 0.1], 0).is_err());
        assert!(run_split(&ids(5), &[0.9, 0.1], 0).is_err());
    }

    #[test]
    fn config_parsing() {
        let c = PipelineConfig::from_toml(
            "corpus_dir = \"c\"\nseed = 4\n[model]\npreset = \"tiny\"\n[train]\nmax_epochs = 3\n[evaluate]\nks = [1, 5]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.max_epochs, 3);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.evaluate.ks, [1, 5]);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[split]\ntrain = 0.5\ntest = 0.2").is_err());
        assert!(PipelineConfig::from_toml("[filter]\nmin_classes = 1").is_err());
    }
}
