//! The stage commands. Each reads its inputs, writes its outputs into the
//! configured output directory and leaves a JSON manifest next to them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use rayon::prelude::*;

use passval_core::event_model::{
    minutes_played, parse_events, parse_lineups, parse_players, EventStore, GameId, Lineup, ParseOptions,
    PlayerId, PlayerInfo, TaxonomyTable,
};
use passval_core::knn_index::{ClusterIndex, INDEX_FORMAT_VERSION};
use passval_core::outcome_eval::{
    baseline_pass_accuracy, forecast_with_ratings, log_loss, parse_fixtures, prior_forecasts, write_forecasts,
    write_log_loss_table, Fixture, GoalStats,
};
use passval_core::possession::{label_sequences, segment_possessions, write_sequences, PossessionSequence};
use passval_core::similarity::{similar_players, SimilarityFilter};
use passval_core::synth::{generate, SynthConfig};
use passval_core::valuation::{
    assign_roles, rate_players, read_pass_values, read_ratings, value_game_sweep, write_pass_values, write_ratings,
    PassValue, PlayerRating,
};
use passval_core::xg::{GbtParams, XgModel};

use crate::manifest::sha256_hex;
use crate::{GameSet, Manifest, PipelineError, RunConfig};

pub const SEQUENCES_FILE: &str = "sequences.csv";
pub const SKIPPED_FILE: &str = "skipped_rows.csv";
pub const XG_FILE: &str = "xg_model.txt";
pub const CLUSTERS_FILE: &str = "index_clusters.csv";
pub const VALUES_FILE: &str = "pass_values.csv";
pub const RATINGS_FILE: &str = "ratings.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const LOG_LOSS_FILE: &str = "log_loss.csv";
pub const SIMILAR_FILE: &str = "similar.csv";
pub const SWEEP_FILE: &str = "sweep_k.csv";
pub const SYNTH_CONFIG_FILE: &str = "passval.toml";

type Result<T> = std::result::Result<T, PipelineError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|_| PipelineError::MissingInput(path.to_path_buf()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn finish(cfg: &RunConfig, mut m: Manifest, outputs: &[&str]) -> Result<Manifest> {
    for name in outputs {
        m.output(&out(cfg, name))?;
    }
    m.write(&cfg.out_dir)?;
    Ok(m)
}

pub fn load_taxonomy(cfg: &RunConfig, m: &mut Manifest) -> Result<TaxonomyTable> {
    match &cfg.taxonomy {
        None => Ok(TaxonomyTable::default()),
        Some(p) => {
            m.input(p)?;
            TaxonomyTable::from_reader(open(p)?)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(Into::into)
        }
    }
}

pub fn load_events(cfg: &RunConfig, m: &mut Manifest) -> Result<EventStore> {
    let taxonomy = load_taxonomy(cfg, m)?;
    m.input(&cfg.events)?;
    let options = ParseOptions {
        strict: cfg.strict,
        direction: cfg.direction,
    };
    let store = parse_events(open(&cfg.events)?, &taxonomy, &options)
        .with_context(|| format!("reading {}", cfg.events.display()))?;
    Ok(store)
}

pub fn load_lineups(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<Lineup>> {
    m.input(&cfg.lineups)?;
    Ok(parse_lineups(open(&cfg.lineups)?).with_context(|| format!("reading {}", cfg.lineups.display()))?)
}

pub fn load_fixtures(cfg: &RunConfig, m: &mut Manifest) -> Result<Vec<Fixture>> {
    m.input(&cfg.fixtures)?;
    Ok(parse_fixtures(open(&cfg.fixtures)?).with_context(|| format!("reading {}", cfg.fixtures.display()))?)
}

pub fn load_players(cfg: &RunConfig, m: &mut Manifest) -> Result<BTreeMap<PlayerId, PlayerInfo>> {
    match &cfg.players {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            m.input(p)?;
            Ok(parse_players(open(p)?).with_context(|| format!("reading {}", p.display()))?)
        }
    }
}

fn parse_timed(cfg: &RunConfig, m: &mut Manifest) -> Result<EventStore> {
    let start = std::time::Instant::now();
    let store = load_events(cfg, m)?;
    m.timings.push(("parse".into(), start.elapsed().as_secs_f64()));
    Ok(store)
}

fn load_xg(cfg: &RunConfig, m: &mut Manifest) -> Result<(XgModel, String)> {
    let path = out(cfg, XG_FILE);
    let hash = m.input(&path)?;
    let text = std::fs::read_to_string(&path).map_err(|_| PipelineError::MissingInput(path.clone()))?;
    let model = XgModel::from_text(&text).with_context(|| format!("reading {}", path.display()))?;
    Ok((model, hash))
}

/// Parses events, segments possessions and reports rejected rows.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("ingest", cfg);
    let store = parse_timed(cfg, &mut m)?;
    let seqs: Vec<PossessionSequence> = m.time("segment", || {
        store.games.values().flat_map(|ev| segment_possessions(ev)).collect()
    });
    write_sequences(create(&out(cfg, SEQUENCES_FILE))?, &seqs).context("writing sequences")?;

    let mut w = csv::Writer::from_writer(create(&out(cfg, SKIPPED_FILE))?);
    w.write_record(["line", "kind", "message"]).context("writing skipped rows")?;
    for r in &store.skipped {
        let kind = if r.validation { "validation" } else { "malformed" };
        w.write_record([r.line.to_string(), kind.to_string(), r.message.clone()])
            .context("writing skipped rows")?;
    }
    w.flush().context("writing skipped rows")?;

    info!(
        "{} games, {} events, {} sequences, {} rows skipped",
        store.games.len(),
        store.event_count(),
        seqs.len(),
        store.skipped.len()
    );
    m.note("games", store.games.len());
    m.note("events", store.event_count());
    m.note("sequences", seqs.len());
    m.note("skipped_rows", store.skipped.len());
    finish(cfg, m, &[SEQUENCES_FILE, SKIPPED_FILE])
}

/// Trains the expected-goals model on the training games.
pub fn cmd_train_xg(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("train-xg", cfg);
    let store = parse_timed(cfg, &mut m)?;
    let shots: Vec<_> = store
        .games
        .iter()
        .filter(|(g, _)| cfg.train_games.contains(**g))
        .flat_map(|(_, ev)| ev.iter().filter(|e| e.is_shot()))
        .collect();
    let params = GbtParams {
        n_trees: cfg.xg_trees,
        ..GbtParams::default()
    };
    let model = m
        .time("train", || XgModel::train(shots.iter().copied(), &params))
        .context("training xG model")?;
    std::fs::create_dir_all(&cfg.out_dir).context("creating output directory")?;
    std::fs::write(out(cfg, XG_FILE), model.to_text()).context("writing xG model")?;
    info!("xG model trained on {} shots", shots.len());
    m.note("shots", shots.len());
    m.note("penalty_rate", model.penalty_rate);
    finish(cfg, m, &[XG_FILE])
}

/// Cache file for the index built from the current inputs.
fn index_cache_path(cfg: &RunConfig, events_hash: &str, xg_hash: &str) -> Result<PathBuf> {
    let grid = cfg.grid()?;
    let key = format!(
        "v{INDEX_FORMAT_VERSION}|{events_hash}|{xg_hash}|{:?}|{}|{:?}|{}",
        grid, cfg.train_games, cfg.direction, cfg.strict
    );
    let taxonomy = match &cfg.taxonomy {
        Some(p) => crate::manifest::hash_file(p)?,
        None => String::new(),
    };
    let digest = sha256_hex(format!("{key}|{taxonomy}").as_bytes());
    Ok(cfg.cache_dir().join(format!("index-{}.bin", &digest[..16])))
}

fn build_index(cfg: &RunConfig, store: &EventStore, xg: &XgModel) -> Result<ClusterIndex> {
    let mut seqs: Vec<PossessionSequence> = store
        .games
        .iter()
        .filter(|(g, _)| cfg.train_games.contains(**g))
        .flat_map(|(_, ev)| segment_possessions(ev))
        .collect();
    label_sequences(&mut seqs, xg);
    let subs: Vec<_> = seqs.iter().flat_map(|s| s.subsequences()).collect();
    Ok(ClusterIndex::build(cfg.grid()?, &subs).context("building index")?)
}

/// Loads the index for the current inputs from the cache, building and
/// caching it when absent.
pub fn obtain_index(cfg: &RunConfig, m: &mut Manifest, store: &EventStore, rebuild: bool) -> Result<ClusterIndex> {
    let events_hash = m.input(&cfg.events)?;
    let (xg, xg_hash) = load_xg(cfg, m)?;
    let path = index_cache_path(cfg, &events_hash, &xg_hash)?;
    if path.exists() {
        match m.time("load-index", || ClusterIndex::load(open(&path)?).map_err(anyhow::Error::from)) {
            Ok(index) => {
                m.note("index_cache", "hit");
                return Ok(index);
            }
            Err(e) => log::warn!("ignoring unreadable index cache {}: {e}", path.display()),
        }
    } else if !rebuild {
        return Err(PipelineError::MissingInput(path));
    }
    let index = m.time("build-index", || build_index(cfg, store, &xg))?;
    let mut w = create(&path)?;
    index.save(&mut w).context("writing index cache")?;
    w.flush().context("writing index cache")?;
    m.note("index_cache", "built");
    Ok(index)
}

/// Labels training sequences and builds the cluster index cache.
pub fn cmd_build_index(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("build-index", cfg);
    let store = parse_timed(cfg, &mut m)?;
    let index = obtain_index(cfg, &mut m, &store, true)?;

    let mut w = csv::Writer::from_writer(create(&out(cfg, CLUSTERS_FILE))?);
    w.write_record(["cluster", "origin_col", "origin_row", "dest_col", "dest_row", "size"])
        .context("writing clusters")?;
    for (key, size) in index.cluster_sizes().filter(|c| c.1 > 0) {
        let (o, d) = index.grid().split_key(key);
        w.write_record([key.0 as usize, o.col, o.row, d.col, d.row, size].map(|v| v.to_string()))
            .context("writing clusters")?;
    }
    w.flush().context("writing clusters")?;
    info!(
        "index: {} subsequences in {} of {} clusters",
        index.len(),
        index.non_empty_clusters(),
        index.grid().cluster_count()
    );
    m.note("subsequences", index.len());
    m.note("non_empty_clusters", index.non_empty_clusters());
    m.note("mean_cluster_size", index.mean_cluster_size());
    finish(cfg, m, &[CLUSTERS_FILE])
}

/// Values the passes of the given games for each `k`, in game order. Games
/// from the training split skip their own sequences in the index.
pub fn value_games(
    cfg: &RunConfig,
    index: &ClusterIndex,
    store: &EventStore,
    games: &GameSet,
    ks: &[usize],
) -> Result<Vec<Vec<PassValue>>> {
    let selected: Vec<(&GameId, &Vec<_>)> = store.games.iter().filter(|(g, _)| games.contains(**g)).collect();
    let per_game = selected
        .par_iter()
        .map(|(g, ev)| value_game_sweep(index, ev, ks, cfg.train_games.contains(**g)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .context("valuing passes")?;
    let mut out = vec![Vec::new(); ks.len()];
    for game in per_game {
        for (i, v) in game.into_iter().enumerate() {
            out[i].extend(v);
        }
    }
    Ok(out)
}

/// Values every pass in the events file.
pub fn cmd_value(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("value", cfg);
    let store = parse_timed(cfg, &mut m)?;
    let index = obtain_index(cfg, &mut m, &store, false)?;
    let values = m
        .time("value", || value_games(cfg, &index, &store, &GameSet::all(), &[cfg.k]))?
        .remove(0);
    write_pass_values(create(&out(cfg, VALUES_FILE))?, &values).context("writing pass values")?;
    info!("valued {} passes with k = {}", values.len(), cfg.k);
    m.note("passes", values.len());
    finish(cfg, m, &[VALUES_FILE])
}

/// Ratings over `period`, with team and position from the lineups.
pub fn ratings_for(
    cfg: &RunConfig,
    values: &[PassValue],
    lineups: &[Lineup],
    period: &GameSet,
) -> Result<Vec<PlayerRating>> {
    let in_period: Vec<PassValue> = values.iter().filter(|v| period.contains(v.game_id)).cloned().collect();
    let minutes = minutes_played(lineups, |g| period.contains(g));
    let mut ratings = rate_players(&in_period, &minutes, cfg.min_minutes).context("rating players")?;
    assign_roles(&mut ratings, lineups, |g| period.contains(g));
    Ok(ratings)
}

/// Which games a rating covers: a game set (validation games by default),
/// optionally narrowed to fixtures dated within `from..=to` (ISO dates).
#[derive(Debug, Clone, Default)]
pub struct RateArgs {
    pub period: Option<GameSet>,
    pub from: Option<String>,
    pub to: Option<String>,
}

pub fn cmd_rate(cfg: &RunConfig, args: &RateArgs) -> Result<Manifest> {
    let mut m = Manifest::new("rate", cfg);
    let mut period = args.period.clone().unwrap_or_else(|| cfg.validation_games.clone());
    if args.from.is_some() || args.to.is_some() {
        let fixtures = load_fixtures(cfg, &mut m)?;
        let from = args.from.as_deref().unwrap_or("");
        let to = args.to.as_deref();
        period = GameSet::from_ids(
            fixtures
                .iter()
                .filter(|f| period.contains(f.game_id))
                .filter(|f| f.date.as_str() >= from && to.is_none_or(|t| f.date.as_str() <= t))
                .map(|f| f.game_id),
        );
    }
    let values_path = out(cfg, VALUES_FILE);
    m.input(&values_path)?;
    let values = read_pass_values(open(&values_path)?).context("reading pass values")?;
    let lineups = load_lineups(cfg, &mut m)?;
    let players = load_players(cfg, &mut m)?;
    let ratings = m.time("rate", || ratings_for(cfg, &values, &lineups, &period))?;
    write_ratings(create(&out(cfg, RATINGS_FILE))?, &ratings, &players).context("writing ratings")?;
    info!("rated {} players over games {period}", ratings.len());
    m.note("period", period.to_string());
    m.note("players", ratings.len());
    finish(cfg, m, &[RATINGS_FILE])
}

fn split_fixtures(cfg: &RunConfig, fixtures: &[Fixture]) -> Result<(GoalStats, Vec<Fixture>)> {
    let calib: Vec<&Fixture> = fixtures
        .iter()
        .filter(|f| cfg.validation_games.contains(f.game_id))
        .collect();
    let goals = GoalStats::from_fixtures(calib.iter().copied())
        .ok_or_else(|| PipelineError::Usage("no validation fixtures to calibrate goal rates".into()))?;
    let test: Vec<Fixture> = fixtures
        .iter()
        .filter(|f| cfg.test_games.contains(f.game_id))
        .cloned()
        .collect();
    if test.is_empty() {
        return Err(PipelineError::Usage("no test fixtures to forecast".into()));
    }
    Ok((goals, test))
}

/// Log loss of the three forecasters on the test games.
pub fn evaluate(
    ratings: &[PlayerRating],
    lineups: &[Lineup],
    test: &[Fixture],
    goals: GoalStats,
    label: &str,
) -> Result<(Vec<(String, f64)>, Vec<passval_core::outcome_eval::GameForecast>)> {
    let run = forecast_with_ratings(test, lineups, ratings, goals);
    if run.games.is_empty() {
        return Err(PipelineError::Usage(
            "every test game was excluded for lack of rated players".into(),
        ));
    }
    // score every method on the same games
    let kept: Vec<Fixture> = test
        .iter()
        .filter(|f| !run.excluded.contains(&f.game_id))
        .cloned()
        .collect();
    let acc = baseline_pass_accuracy(&kept, lineups, ratings, goals);
    let prior = prior_forecasts(&kept);
    let (pf, po): (Vec<_>, Vec<_>) = prior.iter().map(|g| (g.forecast, g.observed)).unzip();
    let rows = vec![
        (label.to_string(), run.log_loss()?),
        ("pass accuracy".to_string(), acc.log_loss()?),
        ("prior".to_string(), log_loss(&pf, &po)?),
    ];
    Ok((rows, run.games))
}

impl From<passval_core::outcome_eval::OutcomeError> for PipelineError {
    fn from(e: passval_core::outcome_eval::OutcomeError) -> Self {
        PipelineError::Other(e.into())
    }
}

/// Forecasts the test games from the ratings file.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("predict", cfg);
    let ratings_path = out(cfg, RATINGS_FILE);
    m.input(&ratings_path)?;
    let ratings = read_ratings(open(&ratings_path)?).context("reading ratings")?;
    let lineups = load_lineups(cfg, &mut m)?;
    let fixtures = load_fixtures(cfg, &mut m)?;
    let (goals, test) = split_fixtures(cfg, &fixtures)?;
    let (rows, games) = m.time("forecast", || evaluate(&ratings, &lineups, &test, goals, &format!("pass value k={}", cfg.k)))?;
    write_forecasts(create(&out(cfg, FORECASTS_FILE))?, &games).context("writing forecasts")?;
    write_log_loss_table(create(&out(cfg, LOG_LOSS_FILE))?, &rows).context("writing log loss")?;
    for (method, loss) in &rows {
        info!("{method}: {loss:.4}");
    }
    m.note("games", games.len());
    m.note("excluded", test.len() - games.len());
    m.note("goal_mean", goals.mean);
    m.note("goal_std", goals.std);
    finish(cfg, m, &[FORECASTS_FILE, LOG_LOSS_FILE])
}

pub struct SimilarArgs {
    pub player: PlayerId,
    pub top: usize,
    pub born_after: Option<String>,
    pub min_minutes: Option<f64>,
}

/// Ranks rated players by similarity to one player.
pub fn cmd_similar(cfg: &RunConfig, args: &SimilarArgs) -> Result<(Manifest, Vec<String>)> {
    let mut m = Manifest::new("similar", cfg);
    let ratings_path = out(cfg, RATINGS_FILE);
    m.input(&ratings_path)?;
    let ratings = read_ratings(open(&ratings_path)?).context("reading ratings")?;
    let players = load_players(cfg, &mut m)?;
    let filter = SimilarityFilter {
        born_after: args.born_after.clone(),
        min_minutes: args.min_minutes.unwrap_or(cfg.min_minutes),
    };
    let ranked = similar_players(args.player, &ratings, &filter, &players, args.top)
        .map_err(|e| PipelineError::Usage(e.to_string()))?;

    let by_id: BTreeMap<PlayerId, &PlayerRating> = ratings.iter().map(|r| (r.player_id, r)).collect();
    let name = |id: PlayerId| {
        players
            .get(&id)
            .map_or_else(|| id.to_string(), |p| p.player_name.clone())
    };
    let mut w = csv::Writer::from_writer(create(&out(cfg, SIMILAR_FILE))?);
    w.write_record(["rank", "player_id", "player", "team", "score"])
        .context("writing similar players")?;
    let mut lines = Vec::new();
    for (rank, (id, score)) in ranked.iter().enumerate() {
        let team = by_id[id].team_id.map_or_else(String::new, |t| t.to_string());
        w.write_record([(rank + 1).to_string(), id.to_string(), name(*id), team.clone(), format!("{score:.4}")])
            .context("writing similar players")?;
        lines.push(format!("{:>3}  {:<24} {:>6}  {score:.4}", rank + 1, name(*id), team));
    }
    w.flush().context("writing similar players")?;
    m.note("target", args.player);
    m.note("results", ranked.len());
    Ok((finish(cfg, m, &[SIMILAR_FILE])?, lines))
}

pub struct SynthArgs {
    pub games: usize,
    pub teams: usize,
}

/// Writes a synthetic league plus a config file that runs the pipeline on it.
pub fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<Manifest> {
    let mut m = Manifest::new("synth", cfg);
    let synth = SynthConfig {
        seed: cfg.seed,
        n_games: args.games,
        n_teams: args.teams,
        ..SynthConfig::default()
    };
    let data = m
        .time("generate", || generate(&synth))
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    data.write_dir(&cfg.out_dir).context("writing synthetic data")?;

    // half the games train, a quarter calibrates, a quarter is forecast
    let n = args.games as u64;
    let (train_end, val_end) = (n / 2, n / 2 + n / 4);
    let per_team = 2.0 * (val_end - train_end) as f64 / args.teams as f64;
    let run = RunConfig {
        events: "events.csv".into(),
        lineups: "lineups.csv".into(),
        fixtures: "fixtures.csv".into(),
        taxonomy: Some("taxonomy.csv".into()),
        players: Some("players.csv".into()),
        out_dir: "run".into(),
        train_games: GameSet::range(1, train_end),
        validation_games: GameSet::range(train_end + 1, val_end),
        test_games: GameSet::range(val_end + 1, n),
        // a third of the minutes a player could log in the calibration games
        min_minutes: (30.0 * per_team).round(),
        seed: cfg.seed,
        ..RunConfig::default()
    };
    let text = toml::to_string(&run).context("serializing synthetic run config")?;
    std::fs::write(out(cfg, SYNTH_CONFIG_FILE), text).context("writing synthetic run config")?;
    m.note("events", data.events.len());
    m.note("games", data.fixtures.len());
    finish(
        cfg,
        m,
        &["events.csv", "lineups.csv", "fixtures.csv", "players.csv", "taxonomy.csv", SYNTH_CONFIG_FILE],
    )
}

/// Log loss on the test games for ratings built with each `k`.
pub fn cmd_sweep_k(cfg: &RunConfig) -> Result<Manifest> {
    let mut m = Manifest::new("sweep-k", cfg);
    let store = parse_timed(cfg, &mut m)?;
    let index = obtain_index(cfg, &mut m, &store, false)?;
    let lineups = load_lineups(cfg, &mut m)?;
    let fixtures = load_fixtures(cfg, &mut m)?;
    let (goals, test) = split_fixtures(cfg, &fixtures)?;
    let per_k = m.time("value", || value_games(cfg, &index, &store, &cfg.validation_games, &cfg.sweep_ks))?;

    let mut rows = Vec::new();
    let mut baselines = Vec::new();
    for (k, values) in cfg.sweep_ks.iter().zip(&per_k) {
        let ratings = ratings_for(cfg, values, &lineups, &cfg.validation_games)?;
        let (r, _) = evaluate(&ratings, &lineups, &test, goals, &format!("k={k}"))?;
        info!("k = {k}: {:.4}", r[0].1);
        rows.push(r[0].clone());
        if baselines.is_empty() {
            baselines = r[1..].to_vec();
        }
    }
    rows.extend(baselines);
    write_log_loss_table(create(&out(cfg, SWEEP_FILE))?, &rows).context("writing sweep")?;
    finish(cfg, m, &[SWEEP_FILE])
}

/// Every stage in order on one config: ingest through sweep-k.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<Manifest>> {
    Ok(vec![
        cmd_ingest(cfg)?,
        cmd_train_xg(cfg)?,
        cmd_build_index(cfg)?,
        cmd_value(cfg)?,
        cmd_rate(cfg, &RateArgs::default())?,
        cmd_predict(cfg)?,
        cmd_sweep_k(cfg)?,
    ])
}
