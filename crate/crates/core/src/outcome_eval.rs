//! Match outcome forecasts from team strengths, scored by log loss.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{GameId, Lineup, PlayerId, Position, TeamId};
use crate::valuation::PlayerRating;

/// Lower bound on a rescaled Poisson mean.
pub const MIN_LAMBDA: f64 = 0.05;
/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-15;
/// Neglected joint mass of the truncated Skellam sum.
pub const SKELLAM_TAIL: f64 = 1e-12;
// p(0) = exp(-lambda) underflows well before this
const MAX_LAMBDA: f64 = 500.0;

pub const PRIOR: OutcomeForecast = OutcomeForecast {
    p_home: 0.4842,
    p_draw: 0.2342,
    p_away: 0.2816,
};

#[derive(Debug, Error)]
pub enum OutcomeError {
    #[error("Poisson mean must be positive and at most {MAX_LAMBDA}, got {0}")]
    BadLambda(f64),

    #[error("team {team_id} has no rated {line} player")]
    MissingLine { team_id: TeamId, line: Position },

    #[error("{forecasts} forecasts for {outcomes} outcomes")]
    Length { forecasts: usize, outcomes: usize },

    #[error("no games to score")]
    Empty,

    #[error("invalid forecast ({0}, {1}, {2})")]
    BadForecast(f64, f64, f64),

    #[error("fixtures line {line}: {message}")]
    Fixture { line: u64, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Home,
    Draw,
    Away,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Home => "home",
            Outcome::Draw => "draw",
            Outcome::Away => "away",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "home" => Ok(Outcome::Home),
            "draw" => Ok(Outcome::Draw),
            "away" => Ok(Outcome::Away),
            _ => Err(format!("unknown outcome {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeForecast {
    pub p_home: f64,
    pub p_draw: f64,
    pub p_away: f64,
}

impl OutcomeForecast {
    pub fn new(p_home: f64, p_draw: f64, p_away: f64) -> Result<Self, OutcomeError> {
        let ok = [p_home, p_draw, p_away].iter().all(|p| (0.0..=1.0).contains(p))
            && (p_home + p_draw + p_away - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(OutcomeError::BadForecast(p_home, p_draw, p_away));
        }
        Ok(OutcomeForecast { p_home, p_draw, p_away })
    }

    pub fn prob(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Home => self.p_home,
            Outcome::Draw => self.p_draw,
            Outcome::Away => self.p_away,
        }
    }
}

/// Smallest `n > lambda` with the Chernoff bound on `P(X >= n)` below `tail`.
fn poisson_cutoff(lambda: f64, tail: f64) -> usize {
    let log_tail = tail.ln();
    let mut n = lambda.floor() as usize + 1;
    loop {
        let nf = n as f64;
        if -lambda + nf * (1.0 + lambda.ln() - nf.ln()) < log_tail {
            return n;
        }
        n += 1;
    }
}

fn poisson_pmf(lambda: f64, n: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n);
    let mut cur = (-lambda).exp();
    for k in 0..n {
        p.push(cur);
        cur *= lambda / (k + 1) as f64;
    }
    p
}

/// Win, draw and loss probabilities for independent Poisson scores.
pub fn skellam_probs(lambda_home: f64, lambda_away: f64) -> Result<OutcomeForecast, OutcomeError> {
    for l in [lambda_home, lambda_away] {
        if !(l > 0.0 && l <= MAX_LAMBDA) {
            return Err(OutcomeError::BadLambda(l));
        }
    }
    let h = poisson_pmf(lambda_home, poisson_cutoff(lambda_home, SKELLAM_TAIL / 2.0));
    let a = poisson_pmf(lambda_away, poisson_cutoff(lambda_away, SKELLAM_TAIL / 2.0));

    let (mut p_home, mut p_draw, mut p_away) = (0.0, 0.0, 0.0);
    // running CDF of the away score below i
    let mut a_below = 0.0;
    for (i, &ph) in h.iter().enumerate() {
        let pa = a.get(i).copied().unwrap_or(0.0);
        p_home += ph * a_below;
        p_draw += ph * pa;
        a_below += pa;
    }
    let mut h_below = 0.0;
    for (j, &pa) in a.iter().enumerate() {
        p_away += pa * h_below;
        h_below += h.get(j).copied().unwrap_or(0.0);
    }
    Ok(OutcomeForecast { p_home, p_draw, p_away })
}

/// Mean negative log-likelihood of the observed outcomes.
pub fn log_loss(forecasts: &[OutcomeForecast], outcomes: &[Outcome]) -> Result<f64, OutcomeError> {
    if forecasts.len() != outcomes.len() {
        return Err(OutcomeError::Length {
            forecasts: forecasts.len(),
            outcomes: outcomes.len(),
        });
    }
    if forecasts.is_empty() {
        return Err(OutcomeError::Empty);
    }
    let total: f64 = forecasts.iter().zip(outcomes).map(|(f, &o)| nll(f, o)).sum();
    Ok(total / forecasts.len() as f64)
}

fn nll(f: &OutcomeForecast, o: Outcome) -> f64 {
    let p = f.prob(o);
    if p < PROB_FLOOR {
        warn!("forecast gives {p} to the observed outcome {o}, clamping to {PROB_FLOOR}");
    }
    -p.max(PROB_FLOOR).ln()
}

pub fn baseline_prior() -> OutcomeForecast {
    PRIOR
}

/// Mean and population standard deviation of goals per team per game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalStats {
    pub mean: f64,
    pub std: f64,
}

impl GoalStats {
    pub fn from_goals(goals: &[f64]) -> Option<Self> {
        let (mean, std) = mean_std(goals)?;
        Some(GoalStats { mean, std })
    }

    pub fn from_fixtures<'a, I>(fixtures: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Fixture>,
    {
        let goals: Vec<f64> = fixtures
            .into_iter()
            .flat_map(|f| [f.home_goals as f64, f.away_goals as f64])
            .collect();
        Self::from_goals(&goals)
    }
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Maps raw team sums onto the goal scale by matching mean and standard
/// deviation, then clamps at [`MIN_LAMBDA`].
pub fn rescale_strengths(raw_sums: &[f64], goals: GoalStats) -> Vec<f64> {
    match_moments(raw_sums, goals)
        .into_iter()
        .map(|l| l.max(MIN_LAMBDA))
        .collect()
}

/// The affine part of [`rescale_strengths`], without the clamp. Constant
/// input maps to the goal mean.
pub fn match_moments(raw_sums: &[f64], goals: GoalStats) -> Vec<f64> {
    let Some((mean, std)) = mean_std(raw_sums) else {
        return Vec::new();
    };
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        return vec![goals.mean; raw_sums.len()];
    }
    raw_sums
        .iter()
        .map(|r| (r - mean) / std * goals.std + goals.mean)
        .collect()
}

/// Per-line average of a team's rated players.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LineAverages([Option<f64>; 4]);

impl LineAverages {
    pub fn from_values<I: IntoIterator<Item = (Position, f64)>>(values: I) -> Self {
        let mut sums = [(0.0, 0usize); 4];
        for (pos, v) in values {
            let s = &mut sums[pos as usize];
            s.0 += v;
            s.1 += 1;
        }
        LineAverages(sums.map(|(s, n)| (n > 0).then(|| s / n as f64)))
    }

    pub fn get(&self, line: Position) -> Option<f64> {
        self.0[line as usize]
    }
}

/// Summed ratings of a starting lineup. Starters without a rating get their
/// team's average in the same line.
pub fn team_strength(
    team_id: TeamId,
    starters: &[(PlayerId, Position)],
    ratings: &HashMap<PlayerId, f64>,
    line_averages: &LineAverages,
) -> Result<f64, OutcomeError> {
    if let Some(&line) = Position::ALL.iter().find(|&&l| line_averages.get(l).is_none()) {
        return Err(OutcomeError::MissingLine { team_id, line });
    }
    Ok(starters
        .iter()
        .map(|(p, pos)| match ratings.get(p) {
            Some(&r) => r,
            None => line_averages.get(*pos).unwrap(),
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub game_id: GameId,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
    pub date: String,
}

impl Fixture {
    pub fn outcome(&self) -> Outcome {
        match self.home_goals.cmp(&self.away_goals) {
            std::cmp::Ordering::Greater => Outcome::Home,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Away,
        }
    }
}

pub fn parse_fixtures<R: Read>(reader: R) -> Result<Vec<Fixture>, OutcomeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<Fixture> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in rdr.deserialize::<Fixture>() {
        let f = row.map_err(|e| OutcomeError::Fixture {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        if f.home_team == f.away_team {
            return Err(OutcomeError::Fixture {
                line,
                message: format!("team {} plays itself", f.home_team),
            });
        }
        if !seen.insert(f.game_id) {
            return Err(OutcomeError::Fixture {
                line,
                message: format!("duplicate game {}", f.game_id),
            });
        }
        out.push(f);
    }
    Ok(out)
}

pub fn write_fixtures<W: Write>(writer: W, fixtures: &[Fixture]) -> Result<(), OutcomeError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(["game_id", "home_team", "away_team", "home_goals", "away_goals", "date"])?;
    for f in fixtures {
        wtr.serialize(f)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A rated player as seen by the forecaster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerStrength {
    pub team_id: TeamId,
    pub position: Position,
    pub value: f64,
}

/// Collects one metric from ratings that carry a team and position.
pub fn player_strengths<F>(ratings: &[PlayerRating], metric: F) -> HashMap<PlayerId, PlayerStrength>
where
    F: Fn(&PlayerRating) -> f64,
{
    ratings
        .iter()
        .filter_map(|r| {
            Some((
                r.player_id,
                PlayerStrength {
                    team_id: r.team_id?,
                    position: r.position?,
                    value: metric(r),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamStrength {
    pub game_id: GameId,
    pub team_id: TeamId,
    pub raw_sum: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameForecast {
    pub game_id: GameId,
    pub forecast: OutcomeForecast,
    pub observed: Outcome,
}

impl GameForecast {
    pub fn neg_log_likelihood(&self) -> f64 {
        nll(&self.forecast, self.observed)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastRun {
    pub games: Vec<GameForecast>,
    pub strengths: Vec<TeamStrength>,
    /// Games dropped because a team lacked a rated player in some line.
    pub excluded: Vec<GameId>,
}

impl ForecastRun {
    pub fn log_loss(&self) -> Result<f64, OutcomeError> {
        let (f, o): (Vec<_>, Vec<_>) = self.games.iter().map(|g| (g.forecast, g.observed)).unzip();
        log_loss(&f, &o)
    }
}

/// Forecasts every fixture from its starting lineups.
///
/// Raw sums of all kept games are rescaled together onto `goals`.
pub fn forecast_games(
    fixtures: &[Fixture],
    lineups: &[Lineup],
    players: &HashMap<PlayerId, PlayerStrength>,
    goals: GoalStats,
) -> ForecastRun {
    let mut per_team: BTreeMap<TeamId, Vec<(Position, f64)>> = BTreeMap::new();
    for p in players.values() {
        per_team.entry(p.team_id).or_default().push((p.position, p.value));
    }
    let averages: BTreeMap<TeamId, LineAverages> = per_team
        .into_iter()
        .map(|(t, mut v)| {
            // fixed summation order, whatever the map iteration order was
            v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            (t, LineAverages::from_values(v))
        })
        .collect();
    let values: HashMap<PlayerId, f64> = players.iter().map(|(&id, p)| (id, p.value)).collect();

    let mut starters: HashMap<(GameId, TeamId), Vec<(PlayerId, Position)>> = HashMap::new();
    for l in lineups.iter().filter(|l| l.is_starter()) {
        starters
            .entry((l.game_id, l.team_id))
            .or_default()
            .push((l.player_id, l.position));
    }

    let mut kept = Vec::new();
    let mut raw = Vec::new();
    let mut run = ForecastRun::default();
    for f in fixtures {
        let sum = |team: TeamId| -> Result<f64, OutcomeError> {
            let xi = starters.get(&(f.game_id, team)).map_or(&[][..], Vec::as_slice);
            if xi.is_empty() {
                return Err(OutcomeError::MissingLine {
                    team_id: team,
                    line: Position::GK,
                });
            }
            let avg = averages.get(&team).copied().unwrap_or_default();
            team_strength(team, xi, &values, &avg)
        };
        match (sum(f.home_team), sum(f.away_team)) {
            (Ok(h), Ok(a)) => {
                kept.push(f);
                raw.push(h);
                raw.push(a);
            }
            (Err(e), _) | (_, Err(e)) => {
                log::debug!("game {} excluded: {e}", f.game_id);
                run.excluded.push(f.game_id);
            }
        }
    }

    let lambdas = rescale_strengths(&raw, goals);
    for (i, f) in kept.iter().enumerate() {
        let (lh, la) = (lambdas[2 * i], lambdas[2 * i + 1]);
        run.strengths.push(TeamStrength {
            game_id: f.game_id,
            team_id: f.home_team,
            raw_sum: raw[2 * i],
            lambda: lh,
        });
        run.strengths.push(TeamStrength {
            game_id: f.game_id,
            team_id: f.away_team,
            raw_sum: raw[2 * i + 1],
            lambda: la,
        });
        run.games.push(GameForecast {
            game_id: f.game_id,
            forecast: skellam_probs(lh, la).expect("rescaled means are clamped positive"),
            observed: f.outcome(),
        });
    }
    run
}

pub fn forecast_with_ratings(
    fixtures: &[Fixture],
    lineups: &[Lineup],
    ratings: &[PlayerRating],
    goals: GoalStats,
) -> ForecastRun {
    forecast_games(fixtures, lineups, &player_strengths(ratings, |r| r.contribution_p90), goals)
}

/// Same pipeline as [`forecast_with_ratings`] with pass accuracy in place of
/// pass contribution.
pub fn baseline_pass_accuracy(
    fixtures: &[Fixture],
    lineups: &[Lineup],
    ratings: &[PlayerRating],
    goals: GoalStats,
) -> ForecastRun {
    forecast_games(fixtures, lineups, &player_strengths(ratings, |r| r.pass_accuracy), goals)
}

/// The constant prior forecast for the given games.
pub fn prior_forecasts<'a, I>(fixtures: I) -> Vec<GameForecast>
where
    I: IntoIterator<Item = &'a Fixture>,
{
    fixtures
        .into_iter()
        .map(|f| GameForecast {
            game_id: f.game_id,
            forecast: baseline_prior(),
            observed: f.outcome(),
        })
        .collect()
}

pub fn write_forecasts<W: Write>(writer: W, games: &[GameForecast]) -> Result<(), OutcomeError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["game_id", "p_home", "p_draw", "p_away", "observed", "neg_log_likelihood"])?;
    for g in games {
        wtr.write_record([
            g.game_id.to_string(),
            g.forecast.p_home.to_string(),
            g.forecast.p_draw.to_string(),
            g.forecast.p_away.to_string(),
            g.observed.to_string(),
            g.neg_log_likelihood().to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes `(method, log loss)` rows in order of increasing loss.
pub fn write_log_loss_table<W: Write>(writer: W, rows: &[(String, f64)]) -> Result<(), OutcomeError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["method", "log_loss"])?;
    for (m, l) in &sorted {
        wtr.write_record([m.clone(), format!("{l:.4}")])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
