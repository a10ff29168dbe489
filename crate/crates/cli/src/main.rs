use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use passval::config::parse_cell;
use passval::pipeline::{self, RateArgs, SimilarArgs, SynthArgs};
use passval::{GameSet, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "passval", version, about = "Value passes, rate players and forecast matches from event data")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Search all subsequences instead of origin-destination clusters.
    #[arg(long, global = true)]
    no_cluster: bool,

    /// Nearest neighbors averaged per subsequence.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Grid cell size in meters, LENGTHxWIDTH.
    #[arg(long, global = true, value_parser = parse_cell)]
    cell: Option<(f64, f64)>,

    #[arg(long, global = true)]
    min_minutes: Option<f64>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse events and dump possession sequences.
    Ingest,
    /// Train the expected-goals model on the training games.
    TrainXg,
    /// Label training subsequences and build the neighbor index.
    BuildIndex,
    /// Value every pass.
    Value,
    /// Aggregate pass values into per-90 ratings.
    Rate {
        /// Games to rate over, e.g. `101-150` or `*`; defaults to the validation games.
        #[arg(long)]
        period: Option<GameSet>,
        /// Only games dated on or after this ISO date.
        #[arg(long)]
        from: Option<String>,
        /// Only games dated on or before this ISO date.
        #[arg(long)]
        to: Option<String>,
    },
    /// Forecast the test games and report log loss.
    Predict,
    /// Players most similar to one player.
    Similar {
        #[arg(long)]
        player: u64,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Only players born after this ISO date.
        #[arg(long)]
        born_after: Option<String>,
    },
    /// Generate a synthetic league.
    Synth {
        #[arg(long, default_value_t = 200)]
        games: usize,
        #[arg(long, default_value_t = 10)]
        teams: usize,
    },
    /// Held-out log loss for several neighbor counts.
    SweepK {
        /// Comma-separated list, e.g. `1,2,5,10`.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if cli.no_cluster {
        cfg.no_cluster = true;
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some((l, w)) = cli.cell {
        cfg.cell_length = l;
        cfg.cell_width = w;
    }
    if let Some(m) = cli.min_minutes {
        cfg.min_minutes = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Command::SweepK { ks: Some(ks) } = &cli.command {
        cfg.sweep_ks = ks.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = config(cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let manifest = match &cli.command {
        Command::Ingest => pipeline::cmd_ingest(&cfg)?,
        Command::TrainXg => pipeline::cmd_train_xg(&cfg)?,
        Command::BuildIndex => pipeline::cmd_build_index(&cfg)?,
        Command::Value => pipeline::cmd_value(&cfg)?,
        Command::Rate { period, from, to } => pipeline::cmd_rate(
            &cfg,
            &RateArgs {
                period: period.clone(),
                from: from.clone(),
                to: to.clone(),
            },
        )?,
        Command::Predict => pipeline::cmd_predict(&cfg)?,
        Command::Similar {
            player,
            top,
            born_after,
        } => {
            let args = SimilarArgs {
                player: *player,
                top: *top,
                born_after: born_after.clone(),
                min_minutes: cli.min_minutes,
            };
            let (m, lines) = pipeline::cmd_similar(&cfg, &args)?;
            for l in lines {
                println!("{l}");
            }
            m
        }
        Command::Synth { games, teams } => pipeline::cmd_synth(
            &cfg,
            &SynthArgs {
                games: *games,
                teams: *teams,
            },
        )?,
        Command::SweepK { .. } => pipeline::cmd_sweep_k(&cfg)?,
    };
    for (stage, secs) in &manifest.timings {
        log::info!("{stage}: {secs:.2}s");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
