//! Seeded synthetic leagues with planted player skill.
//!
//! Each team attacks toward x = 105 in its own frame; the ball location is
//! mirrored whenever possession changes. Players carry a planted pass skill
//! that shifts how far forward they pass and how often passes arrive, so a
//! good valuation should rank them in skill order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::event_model::{
    codes, to_pitch_meters, write_events, write_lineups, Event, EventError, EventKind, GameId, Lineup,
    PitchPoint, PlayerId, Position, SubKind, TeamId, TaxonomyTable, PITCH_LENGTH, PITCH_WIDTH,
};
use crate::outcome_eval::{write_fixtures, Fixture, OutcomeError};
use crate::xg::shot_features;

const HALF_SECONDS: f64 = 45.0 * 60.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),

    #[error(transparent)]
    Event(#[from] EventError),

    #[error(transparent)]
    Outcome(#[from] OutcomeError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Location-only scoring model: `logistic(intercept + angle_coef * angle - dist_coef * dist)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueXg {
    pub intercept: f64,
    pub angle_coef: f64,
    pub dist_coef: f64,
}

impl Default for TrueXg {
    fn default() -> Self {
        TrueXg {
            intercept: -1.8,
            angle_coef: 1.6,
            dist_coef: 0.13,
        }
    }
}

impl TrueXg {
    pub fn prob(&self, p: PitchPoint) -> f64 {
        let f = shot_features(p);
        logistic(self.intercept + self.angle_coef * f.angle - self.dist_coef * f.dist)
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_games: usize,
    pub n_teams: usize,
    /// Squad size per line, in `Position::ALL` order.
    pub squad: [usize; 4],
    /// Starters per line; must sum to 11.
    pub formation: [usize; 4],
    /// Spread of team-level skill shared by a squad.
    pub team_spread: f64,
    /// Spread of individual skill around the team level.
    pub player_spread: f64,
    /// Per-action chance that a challenge ends the possession; possession
    /// lengths are roughly geometric in it.
    pub possession_p: f64,
    pub dribble_p: f64,
    /// Pass success is `logistic(base + skill_slope * skill - length_slope * meters)`.
    pub pass_base: f64,
    pub pass_skill_slope: f64,
    pub pass_length_slope: f64,
    /// Mean forward pass distance is `forward_base + forward_skill * skill`.
    pub forward_base: f64,
    pub forward_skill: f64,
    /// Shot chance is `shot_scale` times the square root of the true scoring
    /// chance at the ball.
    pub shot_scale: f64,
    /// Share of failed passes that leave the pitch rather than being cut out.
    pub out_share: f64,
    pub foul_p: f64,
    pub substitution_p: f64,
    /// Unrecorded time after an open-play turnover, in seconds.
    pub contest_seconds: (f64, f64),
    /// Stoppage after the ball leaves the pitch, in seconds.
    pub out_seconds: (f64, f64),
    pub scoring: TrueXg,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_games: 200,
            n_teams: 10,
            squad: [1, 5, 5, 3],
            formation: [1, 4, 4, 2],
            team_spread: 0.3,
            player_spread: 0.8,
            possession_p: 0.04,
            dribble_p: 0.14,
            pass_base: 2.0,
            pass_skill_slope: 0.9,
            pass_length_slope: 0.045,
            forward_base: 3.0,
            forward_skill: 5.0,
            shot_scale: 0.25,
            out_share: 0.3,
            foul_p: 0.015,
            substitution_p: 0.8,
            contest_seconds: (5.0, 25.0),
            out_seconds: (20.0, 60.0),
            scoring: TrueXg::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_teams < 2 {
            return bad("need at least two teams");
        }
        if self.formation.iter().sum::<usize>() != 11 {
            return bad("formation must field 11 players");
        }
        if self.formation[0] != 1 {
            return bad("formation must field exactly one goalkeeper");
        }
        if self.squad.iter().zip(&self.formation).any(|(s, f)| s < f) {
            return bad("squad smaller than formation in some line");
        }
        if self.squad.iter().any(|&s| s > 99) {
            return bad("at most 99 players per line");
        }
        for (name, p) in [
            ("possession_p", self.possession_p),
            ("dribble_p", self.dribble_p),
            ("out_share", self.out_share),
            ("foul_p", self.foul_p),
            ("substitution_p", self.substitution_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.dribble_p + self.possession_p + self.foul_p > 1.0 {
            return bad("dribble, challenge and foul chances exceed 1");
        }
        let finite = [
            self.team_spread,
            self.player_spread,
            self.pass_base,
            self.pass_skill_slope,
            self.pass_length_slope,
            self.forward_base,
            self.forward_skill,
            self.shot_scale,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.team_spread < 0.0 || self.player_spread < 0.0 {
            return bad("spreads must be finite and non-negative");
        }
        for (name, (lo, hi)) in [("contest_seconds", self.contest_seconds), ("out_seconds", self.out_seconds)] {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(SynthError::Config(format!("{name} must be a range 0 <= lo < hi")));
            }
        }
        if self.shot_scale < 0.0 {
            return bad("shot_scale must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthPlayer {
    pub player_id: PlayerId,
    pub player_name: String,
    pub birth_date: String,
    pub planted_skill: f64,
    #[serde(skip)]
    pub team_id: TeamId,
    #[serde(skip)]
    pub position: Position,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthData {
    pub events: Vec<Event>,
    pub lineups: Vec<Lineup>,
    pub fixtures: Vec<Fixture>,
    pub players: Vec<SynthPlayer>,
}

impl SynthData {
    pub fn events_by_game(&self) -> BTreeMap<GameId, Vec<Event>> {
        let mut out: BTreeMap<GameId, Vec<Event>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.game_id).or_default().push(e.clone());
        }
        out
    }

    /// Writes events, lineups, fixtures, players and the taxonomy used.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>, SynthError> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        write_events(open("events.csv")?, &self.events)?;
        write_lineups(open("lineups.csv")?, &self.lineups)?;
        write_fixtures(open("fixtures.csv")?, &self.fixtures)?;
        TaxonomyTable::default().write(open("taxonomy.csv")?)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(open("players.csv")?);
        w.write_record(["player_id", "player_name", "birth_date", "planted_skill"])?;
        for p in &self.players {
            w.serialize(p)?;
        }
        w.into_inner().map_err(|e| e.into_error())?.flush()?;
        Ok(())
    }
}

/// Generates a league: a repeated double round robin cut at `n_games`.
pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let players = make_players(config, &mut rng);
    let fixtures_plan = schedule(config.n_teams, config.n_games);

    let mut squads: BTreeMap<TeamId, [Vec<usize>; 4]> = BTreeMap::new();
    for (i, p) in players.iter().enumerate() {
        squads.entry(p.team_id).or_default()[p.position as usize].push(i);
    }

    let mut data = SynthData {
        players,
        ..SynthData::default()
    };
    for (n, &(home, away)) in fixtures_plan.iter().enumerate() {
        let game_id = n as GameId + 1;
        // every game has its own stream, so a game does not depend on earlier ones
        let mut game_rng = ChaCha8Rng::seed_from_u64(config.seed ^ game_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut sim = GameSim::new(config, &data.players, game_id, &mut game_rng);
        let lineup_h = sim.pick_lineup(home, &squads[&home]);
        let lineup_a = sim.pick_lineup(away, &squads[&away]);
        let (events, goals) = sim.play([&lineup_h, &lineup_a]);
        data.events.extend(events);
        data.lineups.extend(lineup_h.rows(game_id, &data.players));
        data.lineups.extend(lineup_a.rows(game_id, &data.players));
        data.fixtures.push(Fixture {
            game_id,
            home_team: home,
            away_team: away,
            home_goals: goals[0],
            away_goals: goals[1],
            date: date_of(n / (config.n_teams / 2).max(1)),
        });
    }
    Ok(data)
}

fn make_players(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SynthPlayer> {
    let team_dist = Normal::new(0.0, config.team_spread).unwrap();
    let player_dist = Normal::new(0.0, config.player_spread).unwrap();
    let mut out = Vec::new();
    for team in 1..=config.n_teams as TeamId {
        let level = team_dist.sample(rng);
        let mut number = 0;
        for (line, &count) in Position::ALL.iter().zip(&config.squad) {
            for _ in 0..count {
                number += 1;
                let player_id = team * 100 + number;
                let year = rng.random_range(1985..=2002);
                let month = rng.random_range(1..=12);
                let day = rng.random_range(1..=28);
                out.push(SynthPlayer {
                    player_id,
                    player_name: format!("Player {team}-{number:02}"),
                    birth_date: format!("{year}-{month:02}-{day:02}"),
                    planted_skill: level + player_dist.sample(rng),
                    team_id: team,
                    position: *line,
                });
            }
        }
    }
    out
}

/// Draws `n` shot locations in the attacking third, each scored according
/// to `model`.
pub fn sample_shots(n: usize, seed: u64, model: &TrueXg) -> Vec<(PitchPoint, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lateral = Normal::new(34.0, 9.0).unwrap();
    (0..n)
        .map(|_| {
            // distance from the goal line skews short
            let depth = 35.0 * rng.random::<f64>().powf(1.6);
            let p = quantize(PitchPoint::clamped(PITCH_LENGTH - depth, lateral.sample(&mut rng)));
            (p, rng.random_bool(model.prob(p)))
        })
        .collect()
}

/// Circle-method double round robin, repeated as needed.
fn schedule(n_teams: usize, n_games: usize) -> Vec<(TeamId, TeamId)> {
    let n = n_teams + n_teams % 2;
    let mut rounds: Vec<Vec<(TeamId, TeamId)>> = Vec::new();
    let mut ring: Vec<usize> = (1..n).collect();
    for r in 0..n - 1 {
        let mut round = Vec::new();
        let mut pairs = vec![(0usize, ring[0])];
        for i in 1..n / 2 {
            pairs.push((ring[i], ring[n - 1 - i]));
        }
        for (a, b) in pairs {
            // a bye for the padding team when the count is odd
            if a >= n_teams || b >= n_teams {
                continue;
            }
            let (h, aw) = if r % 2 == 0 { (a, b) } else { (b, a) };
            round.push((h as TeamId + 1, aw as TeamId + 1));
        }
        rounds.push(round);
        ring.rotate_right(1);
    }
    let second: Vec<Vec<_>> = rounds
        .iter()
        .map(|r| r.iter().map(|&(h, a)| (a, h)).collect())
        .collect();
    rounds.extend(second);
    rounds.into_iter().flatten().cycle().take(n_games).collect()
}

/// Calendar date of round `round`, one round per week from 2019-08-03.
fn date_of(round: usize) -> String {
    // days since 1970-01-01, then back to a civil date
    let days = 18_111 + 7 * round as i64;
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}")
}

/// Who is on the pitch for one team, with substitution times in minutes.
struct TeamLineup {
    team_id: TeamId,
    /// (player index, position, minute on, minute off)
    slots: Vec<(usize, Position, f64, f64)>,
}

impl TeamLineup {
    fn on_pitch(&self, minute: f64) -> impl Iterator<Item = &(usize, Position, f64, f64)> {
        self.slots
            .iter()
            .filter(move |s| s.2 <= minute && minute < s.3)
    }

    fn rows(&self, game_id: GameId, players: &[SynthPlayer]) -> Vec<Lineup> {
        self.slots
            .iter()
            .map(|&(i, position, on, off)| Lineup {
                game_id,
                player_id: players[i].player_id,
                team_id: self.team_id,
                position,
                minute_on: on,
                minute_off: off,
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Restart {
    KickOff,
    ThrowIn,
    GoalKick,
    Corner,
    FreeKick,
    Penalty,
    Open,
}

struct GameSim<'a, R: Rng> {
    cfg: &'a SynthConfig,
    players: &'a [SynthPlayer],
    game_id: GameId,
    rng: &'a mut R,
    events: Vec<Event>,
    half: u8,
    t: f64,
}

impl<'a, R: Rng> GameSim<'a, R> {
    fn new(cfg: &'a SynthConfig, players: &'a [SynthPlayer], game_id: GameId, rng: &'a mut R) -> Self {
        GameSim {
            cfg,
            players,
            game_id,
            rng,
            events: Vec::new(),
            half: 1,
            t: 0.0,
        }
    }

    fn pick_lineup(&mut self, team_id: TeamId, squad: &[Vec<usize>; 4]) -> TeamLineup {
        let mut slots = Vec::new();
        for (line, pos) in Position::ALL.iter().enumerate() {
            let mut pool = squad[line].clone();
            // partial shuffle: the first `need` are the starters
            let need = self.cfg.formation[line];
            for i in 0..need {
                let j = self.rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let bench = &pool[need..];
            for (k, &p) in pool[..need].iter().enumerate() {
                let sub = *pos != Position::GK && k < bench.len() && self.rng.random_bool(self.cfg.substitution_p);
                if sub {
                    let minute = self.rng.random_range(55..=85) as f64;
                    slots.push((p, *pos, 0.0, minute));
                    slots.push((bench[k], *pos, minute, 90.0));
                } else {
                    slots.push((p, *pos, 0.0, 90.0));
                }
            }
        }
        TeamLineup { team_id, slots }
    }

    fn minute(&self) -> f64 {
        (self.t / 60.0).min(44.999) + if self.half == 2 { 45.0 } else { 0.0 }
    }

    /// A player of `team` on the pitch, drawn by line weights for the
    /// attacking-frame x coordinate.
    fn player_near(&mut self, lineup: &TeamLineup, x: f64, exclude: Option<usize>) -> usize {
        let w = if x < 30.0 {
            [0.08, 0.5, 0.37, 0.05]
        } else if x < 70.0 {
            [0.0, 0.25, 0.55, 0.2]
        } else {
            [0.0, 0.1, 0.45, 0.45]
        };
        let minute = self.minute();
        let cands: Vec<(usize, f64)> = lineup
            .on_pitch(minute)
            .filter(|s| Some(s.0) != exclude)
            .map(|s| (s.0, w[s.1 as usize]))
            .filter(|c| c.1 > 0.0)
            .collect();
        let total: f64 = cands.iter().map(|c| c.1).sum();
        let mut u = self.rng.random_range(0.0..total);
        for &(p, wt) in &cands {
            if u < wt {
                return p;
            }
            u -= wt;
        }
        cands.last().unwrap().0
    }

    fn emit(&mut self, player: usize, code: (u32, u32), kind: EventKind, subkind: SubKind, start: PitchPoint, end: PitchPoint) {
        let p = &self.players[player];
        self.events.push(Event {
            game_id: self.game_id,
            half: self.half,
            timestamp: (self.t * 100.0).round() / 100.0,
            team_id: p.team_id,
            player_id: p.player_id,
            kind,
            subkind,
            type_code: code.0,
            subtype_code: code.1,
            start: quantize(start),
            end: quantize(end),
        });
    }

    fn gap(&mut self) {
        self.t += self.rng.random_range(1.0..5.0);
    }

    fn stoppage(&mut self, lo: f64, hi: f64) {
        self.t += self.rng.random_range(lo..hi);
    }

    fn play(mut self, lineups: [&TeamLineup; 2]) -> (Vec<Event>, [u32; 2]) {
        let mut goals = [0u32; 2];
        for half in 1..=2u8 {
            self.half = half;
            self.t = 0.0;
            let mut side = usize::from(half == 2);
            let mut restart = Restart::KickOff;
            let mut ball = PitchPoint { x: 52.5, y: 34.0 };
            while self.t < HALF_SECONDS {
                let (next_side, next_restart, next_ball, scored) =
                    self.possession(lineups[side], lineups[1 - side], restart, ball);
                if scored {
                    goals[side] += 1;
                }
                side = if next_side { 1 - side } else { side };
                restart = next_restart;
                ball = next_ball;
            }
        }
        (self.events, goals)
    }

    /// Plays one possession. Returns whether the ball changes side, the
    /// restart and ball location for the next possession in the new owner's
    /// frame, and whether a goal was scored.
    fn possession(
        &mut self,
        lineup: &TeamLineup,
        opponents: &TeamLineup,
        restart: Restart,
        ball: PitchPoint,
    ) -> (bool, Restart, PitchPoint, bool) {
        let cfg = self.cfg;
        let mut pos = ball;
        let mut player = self.player_near(lineup, pos.x, None);

        // the opening restart
        match restart {
            Restart::KickOff => {
                let to = self.pass_target(player, pos, 0.0);
                let to = PitchPoint::clamped(to.x.min(52.5), to.y);
                self.emit(player, codes::SIMPLE_PASS, EventKind::Pass, SubKind::OpenPlay, pos, to);
                pos = to;
            }
            Restart::ThrowIn => {
                let to = PitchPoint::clamped(pos.x + self.rng.random_range(-5.0..12.0), (pos.y - 34.0) * 0.7 + 34.0);
                self.emit(player, codes::THROW_IN, EventKind::SetPiece, SubKind::None, pos, to);
                pos = to;
            }
            Restart::GoalKick => {
                player = lineup.on_pitch(self.minute()).find(|s| s.1 == Position::GK).unwrap().0;
                pos = PitchPoint { x: 5.5, y: self.rng.random_range(25.0..43.0) };
                let to = PitchPoint::clamped(pos.x + self.rng.random_range(20.0..55.0), self.rng.random_range(8.0..60.0));
                if !self.set_pass(player, codes::GOAL_KICK, SubKind::GoalKick, pos, to, 0.75) {
                    return (true, Restart::Open, to.mirrored(), false);
                }
                pos = to;
            }
            Restart::Corner => {
                let y = if pos.y < 34.0 { 0.0 } else { PITCH_WIDTH };
                pos = PitchPoint { x: PITCH_LENGTH, y };
                let to = PitchPoint::clamped(self.rng.random_range(88.0..100.0), self.rng.random_range(26.0..42.0));
                if !self.set_pass(player, codes::CORNER, SubKind::Corner, pos, to, 0.45) {
                    return (true, Restart::Open, to.mirrored(), false);
                }
                pos = to;
            }
            Restart::FreeKick => {
                let to = self.pass_target(player, pos, 4.0);
                if !self.set_pass(player, codes::FREE_KICK, SubKind::FreeKick, pos, to, 0.8) {
                    return (true, Restart::Open, to.mirrored(), false);
                }
                pos = to;
            }
            Restart::Penalty => {
                pos = PitchPoint { x: 94.0, y: 34.0 };
                let scored = self.rng.random_bool(0.76);
                let (code, kind) = if scored {
                    (codes::PENALTY_GOAL, EventKind::Goal)
                } else {
                    (codes::PENALTY, EventKind::Shot)
                };
                let target = self.shot_end(scored);
                self.emit(player, code, kind, SubKind::Penalty, pos, target);
                return self.after_shot(scored);
            }
            Restart::Open => {
                // loose-ball phase before the new owner settles; not recorded
                self.stoppage(cfg.contest_seconds.0, cfg.contest_seconds.1);
            }
        }
        if restart != Restart::Open {
            player = self.player_near(lineup, pos.x, Some(player));
        }

        loop {
            self.gap();
            if self.t >= HALF_SECONDS {
                return (false, Restart::KickOff, PitchPoint { x: 52.5, y: 34.0 }, false);
            }
            let skill = self.players[player].planted_skill;
            let xg = cfg.scoring.prob(pos);
            if pos.x > 60.0 && self.rng.random_bool((cfg.shot_scale * xg.sqrt()).min(0.6)) {
                let scored = self.rng.random_bool(xg);
                let (code, kind) = if scored {
                    (codes::SHOT_GOAL, EventKind::Goal)
                } else {
                    (codes::SHOT, EventKind::Shot)
                };
                let target = self.shot_end(scored);
                self.emit(player, code, kind, SubKind::OpenPlay, pos, target);
                return self.after_shot(scored);
            }

            let u: f64 = self.rng.random();
            if u < cfg.foul_p {
                // opponent fouls the ball carrier
                self.t += 1.0;
                let m = pos.mirrored();
                let opp = self.player_near(opponents, m.x, None);
                self.emit(opp, codes::FOUL, EventKind::Foul, SubKind::None, m, m);
                self.stoppage(15.0, 35.0);
                let in_box = pos.x > PITCH_LENGTH - 16.5 && (pos.y - 34.0).abs() < 20.16;
                let r = if in_box && self.rng.random_bool(0.3) {
                    Restart::Penalty
                } else {
                    Restart::FreeKick
                };
                return (false, r, pos, false);
            }
            if u < cfg.foul_p + cfg.possession_p {
                if self.rng.random_bool(0.2) {
                    // the carrier fouls while shielding the ball
                    self.emit(player, codes::FOUL, EventKind::Foul, SubKind::None, pos, pos);
                    self.stoppage(15.0, 35.0);
                    return (true, Restart::FreeKick, pos.mirrored(), false);
                }
                // tackled or intercepted without a recorded action
                return (true, Restart::Open, pos.mirrored(), false);
            }
            if u < cfg.foul_p + cfg.possession_p + cfg.dribble_p {
                let dx = Normal::new(3.0 + 1.5 * skill, 3.0).unwrap().sample(self.rng);
                let dy = Normal::new(0.0, 3.0).unwrap().sample(self.rng);
                let to = PitchPoint::clamped(pos.x + dx, pos.y + dy);
                self.emit(player, codes::DRIBBLE, EventKind::Dribble, SubKind::None, pos, to);
                if !self.rng.random_bool(logistic(1.6 + 0.5 * skill)) {
                    return (true, Restart::Open, to.mirrored(), false);
                }
                pos = to;
                continue;
            }

            // pass
            let to = self.pass_target(player, pos, 0.0);
            let len = ((to.x - pos.x).powi(2) + (to.y - pos.y).powi(2)).sqrt();
            let (code, subkind) = if to.x > 88.0 && pos.x > 75.0 && (pos.y - 34.0).abs() > 18.0 {
                (codes::CROSS, SubKind::Cross)
            } else if len > 30.0 {
                (codes::HIGH_PASS, SubKind::HighPass)
            } else {
                (codes::SIMPLE_PASS, SubKind::OpenPlay)
            };
            let p_ok = logistic(cfg.pass_base + cfg.pass_skill_slope * skill - cfg.pass_length_slope * len);
            self.emit(player, code, EventKind::Pass, subkind, pos, to);
            if self.rng.random_bool(p_ok) {
                pos = to;
                player = self.player_near(lineup, pos.x, Some(player));
                continue;
            }
            if self.rng.random_bool(cfg.out_share) {
                return self.ball_out(player, to);
            }
            return (true, Restart::Open, to.mirrored(), false);
        }
    }

    /// A set-piece pass that arrives with probability `p_ok`.
    fn set_pass(&mut self, player: usize, code: (u32, u32), sub: SubKind, from: PitchPoint, to: PitchPoint, p_ok: f64) -> bool {
        self.emit(player, code, EventKind::Pass, sub, from, to);
        self.rng.random_bool(p_ok)
    }

    fn after_shot(&mut self, scored: bool) -> (bool, Restart, PitchPoint, bool) {
        if scored {
            self.stoppage(40.0, 70.0);
            return (true, Restart::KickOff, PitchPoint { x: 52.5, y: 34.0 }, true);
        }
        self.stoppage(10.0, 25.0);
        if self.rng.random_bool(0.6) {
            (true, Restart::GoalKick, PitchPoint { x: 5.5, y: 34.0 }, false)
        } else if self.rng.random_bool(0.5) {
            (false, Restart::Corner, PitchPoint { x: PITCH_LENGTH, y: 0.0 }, false)
        } else {
            (true, Restart::Open, PitchPoint { x: 4.0, y: self.rng.random_range(24.0..44.0) }, false)
        }
    }

    /// The ball left the pitch off `player` at `to`.
    fn ball_out(&mut self, player: usize, to: PitchPoint) -> (bool, Restart, PitchPoint, bool) {
        // over the byline when deep, otherwise over a touchline
        let over_byline = to.x > 95.0 && self.rng.random_bool(0.7);
        let at = if over_byline {
            PitchPoint { x: PITCH_LENGTH, y: to.y }
        } else {
            PitchPoint {
                x: to.x,
                y: if to.y < 34.0 { 0.0 } else { PITCH_WIDTH },
            }
        };
        self.t += 1.0;
        self.emit(player, codes::BALL_OUT, EventKind::BallOut, SubKind::None, at, at);
        self.stoppage(self.cfg.out_seconds.0, self.cfg.out_seconds.1);
        if over_byline {
            (true, Restart::GoalKick, PitchPoint { x: 5.5, y: 34.0 }, false)
        } else {
            (true, Restart::ThrowIn, at.mirrored(), false)
        }
    }

    fn pass_target(&mut self, player: usize, pos: PitchPoint, extra: f64) -> PitchPoint {
        let skill = self.players[player].planted_skill;
        let cfg = self.cfg;
        let dx = Normal::new(cfg.forward_base + cfg.forward_skill * skill + extra, 9.0)
            .unwrap()
            .sample(self.rng);
        let dy = Normal::new((34.0 - pos.y) * 0.25, 11.0).unwrap().sample(self.rng);
        PitchPoint::clamped((pos.x + dx).min(PITCH_LENGTH - 1.0), pos.y + dy)
    }

    fn shot_end(&mut self, scored: bool) -> PitchPoint {
        let y = if scored {
            self.rng.random_range(30.5..37.5)
        } else {
            self.rng.random_range(22.0..46.0)
        };
        PitchPoint { x: PITCH_LENGTH, y }
    }

}

/// Snaps a point to the 0.01 percent grid of the file format, so generated
/// events equal what a parser reads back.
fn quantize(p: PitchPoint) -> PitchPoint {
    let pct = |m: f64, len: f64| ((m * 100.0 / len) * 100.0).round().clamp(0.0, 10_000.0) / 100.0;
    to_pitch_meters(pct(p.x, PITCH_LENGTH), pct(p.y, PITCH_WIDTH)).expect("percent within bounds")
}
