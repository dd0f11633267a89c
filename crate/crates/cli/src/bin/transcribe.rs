//! Transcribes a recorded Go game from a frame stream into SGF.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use kifu_core::engine::{parse_kind, run_session, OutputConfig, SessionConfig, UsmConfig};
use kifu_core::game::GameMeta;
use kifu_core::source::SourceSpec;

#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Directory of numbered frames, or a raw PNM stream.
    #[arg(long)]
    source: Option<PathBuf>,
    /// image-sequence or raw-video.
    #[arg(long)]
    kind: Option<String>,
    /// Board size: 9, 13 or 19.
    #[arg(long)]
    size: Option<usize>,
    /// SGF output; the move log and report are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process every k-th frame.
    #[arg(long)]
    stride: Option<u32>,
    /// Unsharp mask as SIGMA,AMOUNT.
    #[arg(long)]
    usm: Option<UsmConfig>,
    /// Seed for the relocator's sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Operator endpoint address, e.g. 127.0.0.1:7878.
    #[arg(long)]
    serve: Option<String>,
    /// TOML session config; command-line options override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(a: Args) -> Result<SessionConfig> {
    let mut cfg = match &a.config {
        Some(p) => SessionConfig::load(p)?,
        None => {
            let (Some(source), Some(size)) = (&a.source, a.size) else {
                bail!("--source and --size are required without --config");
            };
            SessionConfig::new(size, SourceSpec::image_sequence(source))
        }
    };
    if let Some(s) = a.source {
        cfg.source.path = s;
    }
    if let Some(k) = &a.kind {
        cfg.source.kind = parse_kind(k)?;
    }
    if let Some(n) = a.size {
        if n != cfg.size {
            cfg.size = n;
            cfg.meta = GameMeta { size: n, ..cfg.meta };
        }
    }
    if let Some(k) = a.stride {
        cfg.source.stride = k;
    }
    if let Some(u) = a.usm {
        cfg.filter.usm = Some(u);
    }
    if let Some(s) = a.seed {
        cfg.track.random.seed = s;
    }
    if let Some(s) = a.serve {
        cfg.serve = Some(s);
    }
    match a.out {
        Some(p) => cfg.output = OutputConfig::beside(&p),
        None if cfg.output.sgf.is_none() => bail!("no SGF output: pass --out or set output.sgf"),
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = build_config(Args::parse())?;
    let sgf = cfg.output.sgf.clone();
    let report = run_session(cfg).context("session failed")?;
    log::info!(
        "{} moves from {} frames ({} late, {} warnings, {} grid corrections)",
        report.moves,
        report.frames_processed,
        report.late_insertions,
        report.warnings.len(),
        report.grid_corrections.len()
    );
    if let Some(p) = sgf {
        println!("{}", p.display());
    }
    Ok(())
}
