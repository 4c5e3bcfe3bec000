//! The `ocean` command line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use oceanvoice_core::config::{EmbedderConfig, Provider, ServerConfig};
use oceanvoice_core::corpus::{
    ingest_corpus, retrieve, HnswParams, RetrievalConfig, VectorIndex, DEFAULT_DIMENSION,
    DEFAULT_TOP_K,
};
use oceanvoice_core::grammar::{grammar_from_tokens, parse_gbnf};
use oceanvoice_core::pipeline::{read_transcript, replay_records};

use crate::Server;

#[derive(Debug, Parser)]
#[command(name = "ocean", version, about = "Ocean conversation exhibit: indexing, grammar tools, server and replay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Mock,
    Http,
}

impl From<ProviderArg> for Provider {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::Mock => Provider::Mock,
            ProviderArg::Http => Provider::Http,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderArg,
    /// Embeddings endpoint base URL for `--provider http`.
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
}

impl EmbedArgs {
    fn config(&self) -> EmbedderConfig {
        EmbedderConfig {
            provider: self.provider.into(),
            url: self.url.clone(),
            model: self.model.clone(),
            ..EmbedderConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk, embed and index a directory of .txt/.md files.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIMENSION)]
        dim: usize,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Query an index and print the hits as JSON lines.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// Exhaustive scan instead of the graph search.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// GBNF grammar utilities.
    Grammar {
        #[command(subcommand)]
        command: GrammarCommand,
    },
    /// Run the HTTP and event-stream server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run a transcript against mock backends and diff the results.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        /// Supplies the index, catalog, rules and prompts.
        #[arg(long, default_value = "config/server.toml")]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GrammarCommand {
    /// Parse a grammar file and report its rules.
    Check { file: PathBuf },
    /// Exit 0 if the grammar accepts the string, 1 if not.
    Match { file: PathBuf, string: String },
    /// Print the grammar accepting exactly the given tokens.
    FromTokens {
        #[arg(required = true)]
        tokens: Vec<String>,
    },
}

pub fn main() -> ExitCode {
    init_tracing();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain on one line, skipping causes already quoted by the
/// message above them.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("OCEAN_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest {
            corpus,
            out,
            dim,
            embed,
        } => {
            let embedder = embed.config().build(dim)?;
            let index = ingest_corpus(&corpus, embedder.as_ref(), HnswParams::default())
                .with_context(|| format!("ingesting {}", corpus.display()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            index
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "indexed {} documents, {} paragraphs, {} sentences (dim {}) into {}",
                index.documents().len(),
                index.paragraphs().len(),
                index.len(),
                index.dimension(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Search {
            index,
            query,
            k,
            exact,
            embed,
        } => {
            let idx = VectorIndex::load(&index).with_context(|| format!("loading {}", index.display()))?;
            let embedder = embed.config().build(idx.dimension())?;
            let cfg = RetrievalConfig {
                k,
                ann_enabled: !exact,
                dimension: idx.dimension(),
            };
            cfg.validate().map_err(anyhow::Error::msg)?;
            for hit in retrieve(&idx, embedder.as_ref(), &query, &cfg)? {
                println!("{}", serde_json::to_string(&hit)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Grammar { command } => grammar(command),
        Command::Serve { config } => {
            let cfg = ServerConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let server = Server::bind(&cfg).await?;
                server.run(shutdown_signal()).await
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { transcript, config } => replay(&transcript, &config),
    }
}

fn grammar(command: GrammarCommand) -> anyhow::Result<ExitCode> {
    let load = |file: &Path| -> anyhow::Result<_> {
        let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        parse_gbnf(&text).with_context(|| format!("parsing {}", file.display()))
    };
    match command {
        GrammarCommand::Check { file } => match load(&file) {
            Ok(g) => {
                println!("ok: {} rules, root `{}`", g.rules().len(), g.root());
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                eprintln!("{}", describe(&e));
                Ok(ExitCode::from(1))
            }
        },
        GrammarCommand::Match { file, string } => {
            if load(&file)?.matches(&string) {
                println!("match");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("no match");
                Ok(ExitCode::from(1))
            }
        }
        GrammarCommand::FromTokens { tokens } => {
            print!("{}", grammar_from_tokens(&tokens)?.to_gbnf());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Everything external is swapped for its mock so the run is deterministic.
pub fn replay_config(cfg: &mut ServerConfig) -> anyhow::Result<()> {
    if cfg.embedder.provider == Provider::Http {
        bail!("replay needs an index built with the mock embedder");
    }
    cfg.embedder.mock_latency_ms = 0;
    cfg.backend.mode = Provider::Mock;
    cfg.speech.stt = Provider::Mock;
    cfg.speech.tts = Provider::Mock;
    cfg.speech.mock_stt_latency_ms = 0;
    cfg.speech.mock_tts_latency_ms = 0;
    Ok(())
}

fn replay(transcript: &Path, config: &Path) -> anyhow::Result<ExitCode> {
    let mut cfg = ServerConfig::load(config)?;
    replay_config(&mut cfg)?;
    let engine = cfg.build_engine(false)?;
    let records = read_transcript(transcript).with_context(|| format!("reading {}", transcript.display()))?;
    let report = replay_records(&engine, &records);
    for rec in &records {
        let status = if report
            .mismatches
            .iter()
            .any(|m| m.session_id == rec.session_id && m.run == rec.run)
        {
            "MISMATCH"
        } else {
            "ok"
        };
        println!("{} run {}: {status}", rec.session_id, rec.run);
    }
    for m in &report.mismatches {
        let at = m
            .expected
            .bytes()
            .zip(m.actual.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| m.expected.len().min(m.actual.len()));
        let window = |s: &str| s.get(at.saturating_sub(40)..(at + 40).min(s.len())).unwrap_or("").to_string();
        println!("--- {} run {} differs at byte {at}", m.session_id, m.run);
        println!("  expected: …{}…", window(&m.expected));
        println!("  actual:   …{}…", window(&m.actual));
    }
    println!("{}/{} records reproduced", report.matched, report.total);
    Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
