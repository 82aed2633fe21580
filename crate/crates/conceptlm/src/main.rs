use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use conceptlm::pipeline::{Pipeline, PipelineConfig};
use conceptlm::service::{serve, ServeOptions};
use conceptlm::synth::{builtin_domains, run_generate_synthetic};
use conceptlm_core::sampler::Strategy;

#[derive(Parser)]
#[command(name = "conceptlm", version, about = "Learn domain concepts from metamodel corpora")]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus of canonical JSON metamodels.
    Synth {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Parse and filter the corpus into a manifest.
    Ingest,
    /// Split the kept metamodels into train and test.
    Split,
    /// Train the byte-level BPE vocabulary on the training split.
    TrainTokenizer,
    /// Train the masked language model.
    Train,
    /// Generate test samples from the test split.
    Sample {
        #[arg(long, default_value = "global")]
        strategy: Strategy,
    },
    /// Score the samples with the model and the frequency baseline.
    Evaluate {
        #[arg(long, default_value = "global")]
        strategy: Strategy,
        /// Replaces the configured cutoffs, e.g. `--k 1,5,10`.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
    },
    /// Run every stage.
    E2e,
    /// Serve recommendations over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Defaults to the pipeline's output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(p) = &cli.corpus {
        c.corpus_dir = p.clone();
    }
    if let Some(p) = &cli.out {
        c.output_dir = p.clone();
    }
    Ok(c)
}

fn print_report(e: &conceptlm::pipeline::Evaluation) {
    for r in [&e.model, &e.baseline] {
        let o = &r.report.overall;
        let at: Vec<String> = o.at.iter().map(|a| format!("R@{} {:.3} MRR@{} {:.3}", a.k, a.recall, a.k, a.mrr)).collect();
        println!("{:<8} {:<11} n={:<5} top1 {:.3}  {}", r.system, r.strategy, o.samples, o.top1, at.join("  "));
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config(&cli)?;
    if let Command::Evaluate { k: Some(ks), .. } = &cli.command {
        cfg.evaluate.ks = ks.clone();
    }
    let seed = cfg.seed;
    let mut pipeline = Pipeline::new(cfg)?;
    pipeline.verbose = !cli.quiet;
    match cli.command {
        Command::Synth { count, dir } => {
            let ms = run_generate_synthetic(&builtin_domains(), count, seed, &dir)?;
            println!("wrote {} metamodels to {}", ms.len(), dir.display());
        }
        Command::Ingest => {
            let m = pipeline.ingest()?;
            println!("{} files, {} kept", m.entries.len(), m.kept().count());
        }
        Command::Split => {
            let s = pipeline.split()?;
            println!("{} train, {} test", s.train.len(), s.test.len());
        }
        Command::TrainTokenizer => {
            pipeline.encode()?;
            let v = pipeline.train_tokenizer()?;
            println!("{} tokens", v.len());
        }
        Command::Train => {
            let c = pipeline.train_model()?;
            println!("checkpoint {} ({})", pipeline.paths.checkpoint().display(), c.sha256);
        }
        Command::Sample { strategy } => {
            let s = pipeline.sample(strategy)?;
            println!("{} samples", s.len());
        }
        Command::Evaluate { strategy, .. } => print_report(&pipeline.evaluate(strategy)?),
        Command::E2e => {
            for e in pipeline.run_end_to_end()? {
                print_report(&e);
            }
        }
        Command::Serve { addr, checkpoint, vocab } => {
            let fill = pipeline.config.evaluate.fill();
            let opts = ServeOptions {
                addr,
                checkpoint: checkpoint.unwrap_or_else(|| pipeline.paths.checkpoint()),
                vocab: vocab.unwrap_or_else(|| pipeline.paths.vocab()),
                fill,
            };
            let rt = tokio::runtime::Runtime::new().context("starting the runtime")?;
            rt.block_on(serve(opts))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
