//! `streamem` — replay traces, generate synthetic streams, and manage
//! memory snapshots.

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;
use streamem_core::replay::run_trace;
use streamem_core::snapshot::{snapshot_load, snapshot_save};
use streamem_core::synth::{generate_synthetic, parse_needle_spec};
use streamem_core::trace::{parse_trace, write_trace};
use streamem_core::{Backend, EngineConfig, MockBackend, RemoteBackend, RemoteConfig, RunMode};

#[derive(Parser)]
#[command(name = "streamem", about = "Streaming event-memory engine harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace file and write a per-query report.
    Run(RunArgs),
    /// Generate a seeded synthetic trace.
    Gen(GenArgs),
    /// Save or load a memory snapshot.
    Snapshot {
        #[command(subcommand)]
        command: SnapshotCommand,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set n_r=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                EngineConfig::from_kv(&text)?
            }
            None => EngineConfig::default(),
        };
        for entry in &self.set {
            let (key, value) = entry
                .split_once('=')
                .with_context(|| format!("bad --set {entry:?}: expected KEY=VALUE"))?;
            cfg.apply_override(key.trim(), value.trim())?;
        }
        Ok(cfg.validate()?)
    }
}

#[derive(Args)]
struct BackendArgs {
    /// Model backend serving summarize/merge/fold/embed/reason.
    #[arg(long, default_value = "mock")]
    backend: BackendKind,
    /// Chat/embedding endpoint base URL (remote backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Chat model name (remote backend).
    #[arg(long, default_value = "default-chat")]
    chat_model: String,
    /// Embedding model name (remote backend).
    #[arg(long, default_value = "default-embed")]
    embed_model: String,
    /// Per-request timeout in seconds (remote backend).
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

impl BackendArgs {
    fn build(&self, cfg: &EngineConfig) -> Result<Arc<dyn Backend>> {
        match self.backend {
            BackendKind::Mock => Ok(Arc::new(MockBackend::new(cfg.embed_dim))),
            BackendKind::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .context("--endpoint is required with --backend remote")?;
                Ok(Arc::new(RemoteBackend::new(RemoteConfig {
                    base_url: endpoint,
                    chat_model: self.chat_model.clone(),
                    embed_model: self.embed_model.clone(),
                    timeout: Duration::from_secs(self.timeout_secs),
                    embed_dim: cfg.embed_dim,
                })))
            }
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Trace file to replay.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Memory policy or ablation mode.
    #[arg(long, default_value = "oasis")]
    mode: RunMode,
    #[command(flatten)]
    backend: BackendArgs,
    /// Report file (JSON lines); stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Serialize everything in trace order and zero wall-clock fields,
    /// making reports byte-reproducible. Disable for stress replay.
    #[arg(long, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    deterministic: bool,
    /// Save the final engine state to this snapshot path.
    #[arg(long)]
    save_snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    minutes: u32,
    /// Needle spec `plant@query[,plant@query...]` in minutes.
    #[arg(long, default_value = "")]
    needles: String,
    /// Output trace file.
    #[arg(long)]
    out: PathBuf,
    /// Embedding dimensionality the trace will run under (needle
    /// tokens are kept collision-free at this dimension).
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
}

#[derive(Subcommand)]
enum SnapshotCommand {
    /// Replay a trace and snapshot the final state.
    Save {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "oasis")]
        mode: RunMode,
        #[arg(long)]
        path: PathBuf,
    },
    /// Load a snapshot, verify it, and print its shape.
    Load {
        #[arg(long)]
        path: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Gen(args) => gen(args),
        Command::Snapshot { command } => snapshot(command),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let backend = args.backend.build(&cfg)?;
    let text = fs::read_to_string(&args.trace)
        .with_context(|| format!("reading trace {}", args.trace.display()))?;
    let events = parse_trace(&text)?;
    let outcome = run_trace(&events, cfg, args.mode, backend, args.deterministic)?;
    let report = outcome.report.to_jsonl();
    match &args.report {
        Some(path) => fs::write(path, &report)
            .with_context(|| format!("writing report {}", path.display()))?,
        None => print!("{report}"),
    }
    if let Some(path) = &args.save_snapshot {
        let engine = &outcome.engine;
        snapshot_save(path, engine.config(), engine.mode(), engine.state())?;
    }
    let agg = &outcome.report.aggregate;
    eprintln!(
        "replayed {} queries (mode {}), mean coarse tokens {:.0}, max {}",
        agg.queries, args.mode, agg.mean_coarse_total, agg.max_coarse_total
    );
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let needles = parse_needle_spec(&args.needles).map_err(anyhow::Error::msg)?;
    let events = generate_synthetic(args.seed, args.minutes, &needles, args.embed_dim)
        .map_err(anyhow::Error::msg)?;
    fs::write(&args.out, write_trace(&events))
        .with_context(|| format!("writing trace {}", args.out.display()))?;
    eprintln!(
        "wrote {} events ({} needles) to {}",
        events.len(),
        needles.len(),
        args.out.display()
    );
    Ok(())
}

fn snapshot(command: SnapshotCommand) -> Result<()> {
    match command {
        SnapshotCommand::Save {
            trace,
            config,
            mode,
            path,
        } => {
            let cfg = config.load()?;
            let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(cfg.embed_dim));
            let text = fs::read_to_string(&trace)
                .with_context(|| format!("reading trace {}", trace.display()))?;
            let events = parse_trace(&text)?;
            let outcome = run_trace(&events, cfg, mode, backend, true)?;
            let engine = &outcome.engine;
            snapshot_save(&path, engine.config(), engine.mode(), engine.state())?;
            eprintln!(
                "saved snapshot: {} nodes, {} roots, {} qa records",
                engine.state().forest.node_count(),
                engine.state().forest.root_count(),
                engine.state().qa.len()
            );
            Ok(())
        }
        SnapshotCommand::Load { path } => {
            let (cfg, mode, state) = snapshot_load(&path)?;
            println!(
                "mode: {mode}\nnodes: {}\nroots: {}\nflushed_end: {}\nqa_records: {}\nembed_dim: {}",
                state.forest.node_count(),
                state.forest.root_count(),
                state.forest.flushed_end(),
                state.qa.len(),
                cfg.embed_dim
            );
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
