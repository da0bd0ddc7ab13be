use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vidqa::alliance::{ConsensusMode, StopMode, TeamingReport};
use vidqa::changepoint::candidates_csv;
use vidqa::config::RunConfig;
use vidqa::runner::{
    cmd_partition, cmd_replay, cmd_run_to_file, cmd_team, select_pool, AgentLibrary,
    BenchmarkManifest, VideoRef,
};
use vidqa::{Error, Exec};

#[derive(Parser)]
#[command(name = "vidqa", version, about = "Event-partitioned multi-agent video QA")]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, short, global = true, env = "VIDQA_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// More log output (repeat for debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoPrune {
    Sum,
    Maj,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Questions deliberated concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(long, global = true)]
    n1: Option<usize>,
    #[arg(long, global = true)]
    n2: Option<usize>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Maximum number of blocks B.
    #[arg(long, global = true)]
    max_blocks: Option<usize>,
    #[arg(long, global = true, value_parser = parse_consensus)]
    consensus: Option<ConsensusMode>,
    /// Stop after this many rounds and take the majority answer.
    #[arg(long, global = true, conflicts_with = "no_prune")]
    max_rounds: Option<u32>,
    /// Disable pruning; pick the answer by summed score or by majority.
    #[arg(long, global = true, value_enum)]
    no_prune: Option<NoPrune>,
}

fn parse_consensus(s: &str) -> Result<ConsensusMode, String> {
    match s {
        "full" => Ok(ConsensusMode::Full),
        "majority" => Ok(ConsensusMode::Majority),
        _ => Err(format!("expected full or majority, got {s}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Partition one video into event blocks.
    Partition {
        /// Frame directory, video file, or a JSON synthetic video description.
        video: PathBuf,
        /// Boundary JSON destination (stdout if omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        novelty_csv: Option<PathBuf>,
        #[arg(long)]
        candidates_csv: Option<PathBuf>,
    },
    /// Select the agent team for a task.
    Team {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        library: PathBuf,
        /// Team size (defaults to the config's team_size).
        #[arg(long, short)]
        m: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Answer every question of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        library: PathBuf,
        /// Teaming report from `team`; otherwise the first agents of the library.
        #[arg(long)]
        teaming: Option<PathBuf>,
        /// JSONL trace destination.
        #[arg(long, short)]
        out: PathBuf,
        /// Summary JSON destination (stdout if omitted).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Replay a scripted scenario and print its trace.
    Replay {
        scenario: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(s) = o.seed {
        cfg.deliberation.seed = s;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    if o.sequential {
        cfg.exec = Exec::Sequential;
    }
    if let Some(v) = o.n1 {
        cfg.deliberation.n1 = v;
    }
    if let Some(v) = o.n2 {
        cfg.deliberation.n2 = v;
    }
    if let Some(v) = o.rho {
        cfg.deliberation.rho = v;
    }
    if let Some(v) = o.max_blocks {
        cfg.partition.max_blocks = v;
    }
    if let Some(v) = o.consensus {
        cfg.deliberation.consensus = v;
    }
    if let Some(max_rounds) = o.max_rounds {
        cfg.deliberation.stop = StopMode::FixedRounds { max_rounds };
    }
    match o.no_prune {
        Some(NoPrune::Sum) => cfg.deliberation.stop = StopMode::NoPruneSum,
        Some(NoPrune::Maj) => cfg.deliberation.stop = StopMode::NoPruneMaj,
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("writing stdout", e))
        }
    }
}

fn video_ref(path: &Path) -> Result<VideoRef, Error> {
    if path.extension().is_some_and(|e| e == "json") && path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        return serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e));
    }
    Ok(VideoRef::Path(path.to_path_buf()))
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Config => write_out(None, &cfg.to_toml())?,
        Command::Partition {
            video,
            out,
            novelty_csv,
            candidates_csv: cand_csv,
        } => {
            let report = cmd_partition(&video_ref(video)?, Path::new("."), &cfg)?;
            log::info!(
                "{}: {} blocks in {:.3}s",
                report.video_id,
                report.partition.block_count(),
                report.elapsed_seconds
            );
            write_out(out.as_deref(), &(report.to_json() + "\n"))?;
            if let Some(p) = novelty_csv {
                let csv = report.novelty.as_ref().map(|n| n.to_csv()).unwrap_or_default();
                write_out(Some(p), &csv)?;
            }
            if let Some(p) = cand_csv {
                write_out(Some(p), &candidates_csv(&report.candidates))?;
            }
        }
        Command::Team {
            manifest,
            library,
            m,
            out,
        } => {
            let manifest = BenchmarkManifest::load(manifest)?;
            let library = AgentLibrary::load(library)?.build();
            let report = cmd_team(&manifest, &library, m.unwrap_or(cfg.team_size), &cfg)?;
            report
                .save(out)
                .map_err(|e| Error::io(format!("writing {}", out.display()), e))?;
            log::info!("selected {:?}", report.selected);
        }
        Command::Run {
            manifest,
            library,
            teaming,
            out,
            summary,
        } => {
            let manifest = BenchmarkManifest::load(manifest)?;
            let library = AgentLibrary::load(library)?.build();
            let teaming = match teaming {
                Some(p) => Some(
                    TeamingReport::load(p)
                        .map_err(|e| Error::io(format!("reading {}", p.display()), e))?,
                ),
                None => None,
            };
            let pool = select_pool(&library, teaming.as_ref(), cfg.team_size)?;
            let s = cmd_run_to_file(&manifest, &pool, &cfg, out)?;
            let text = serde_json::to_string_pretty(&s).map_err(|e| Error::json("summary", e))?;
            write_out(summary.as_deref(), &(text + "\n"))?;
            return Ok(s.exit_code());
        }
        Command::Replay { scenario, out } => {
            let r = cmd_replay(scenario, cfg.exec)?;
            let line = serde_json::to_string(&r.deliberation.trace).map_err(|e| Error::json("trace", e))?;
            write_out(out.as_deref(), &(line + "\n"))?;
            if r.deliberation.trace.error.is_some() {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
