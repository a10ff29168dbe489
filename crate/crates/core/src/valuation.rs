//! Pass values and per-90 player ratings.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{Event, GameId, Lineup, PlayerId, PlayerInfo, Position, TeamId};
use crate::knn_index::{cluster_key, ClusterIndex, IndexError};
use crate::possession::{segment_possessions, SequenceId, Subsequence};
use crate::traj::interpolate;

#[derive(Debug, Error)]
pub enum ValuationError {
    #[error(transparent)]
    Index(#[from] IndexError),

    #[error("player {0} has pass values but no recorded minutes")]
    NoMinutes(PlayerId),

    #[error("k must be at least 1")]
    ZeroK,

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Change in expected reward caused by one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassValue {
    pub game_id: GameId,
    pub sequence_id: SequenceId,
    pub pass_index: usize,
    pub player_id: PlayerId,
    pub before: f64,
    pub after: f64,
    pub value: f64,
    pub team_id: TeamId,
    pub successful: bool,
}

/// Values the pass that ends `after`.
///
/// `before` is the prefix ending at the previous pass of the same sequence,
/// or `None` for the first pass, which then starts from zero reward. An
/// unsuccessful pass ends with zero reward.
pub fn value_pass(
    index: &ClusterIndex,
    before: Option<&Subsequence<'_>>,
    after: &Subsequence<'_>,
    successful: bool,
    k: usize,
) -> Result<PassValue, ValuationError> {
    if k == 0 {
        return Err(ValuationError::ZeroK);
    }
    let before = match before {
        Some(s) => index.expected_reward(s, k)?,
        None => 0.0,
    };
    let after_reward = if successful {
        index.expected_reward(after, k)?
    } else {
        0.0
    };
    let pass = after.last();
    Ok(PassValue {
        game_id: after.parent.game_id,
        sequence_id: after.parent.sequence_id,
        pass_index: after.pass_index,
        player_id: pass.player_id,
        before,
        after: after_reward,
        value: after_reward - before,
        team_id: pass.team_id,
        successful,
    })
}

/// Values every pass of one game.
pub fn value_game(index: &ClusterIndex, events: &[Event], k: usize) -> Result<Vec<PassValue>, ValuationError> {
    Ok(value_game_sweep(index, events, &[k], false)?.remove(0))
}

/// Values every pass of one game for several `k` at once.
///
/// Each subsequence is searched once with the largest `k`; smaller `k` reuse
/// the closest hits. With `leave_one_out`, stored entries from the same
/// possession sequence are ignored, which matters only when the game is part
/// of the indexed corpus.
pub fn value_game_sweep(
    index: &ClusterIndex,
    events: &[Event],
    ks: &[usize],
    leave_one_out: bool,
) -> Result<Vec<Vec<PassValue>>, ValuationError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(ValuationError::ZeroK);
    }
    let k_max = *ks.iter().max().unwrap();
    let mut out = vec![Vec::new(); ks.len()];

    for seq in segment_possessions(events) {
        let subs = seq.subsequences();
        let mut prev: Option<Vec<f64>> = None;
        for sub in &subs {
            let successful = seq
                .pass_success(sub.event_index)
                .expect("subsequences end with a pass");
            let after: Vec<f64> = if successful {
                let traj = interpolate(sub.events).map_err(IndexError::from)?;
                let key = cluster_key(index.grid(), sub)?;
                let exclude = leave_one_out.then_some(sub.parent);
                let hits = index.neighbors(&traj, key, k_max, exclude);
                ks.iter().map(|&k| hits.mean_label(k)).collect()
            } else {
                vec![0.0; ks.len()]
            };
            let pass = sub.last();
            for (i, values) in out.iter_mut().enumerate() {
                let before = prev.as_ref().map_or(0.0, |p| p[i]);
                values.push(PassValue {
                    game_id: seq.game_id,
                    sequence_id: seq.sequence_id,
                    pass_index: sub.pass_index,
                    player_id: pass.player_id,
                    before,
                    after: after[i],
                    value: after[i] - before,
                    team_id: pass.team_id,
                    successful,
                });
            }
            prev = Some(after);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRating {
    pub player_id: PlayerId,
    /// Summed pass value per 90 minutes.
    pub contribution_p90: f64,
    pub total_value: f64,
    pub minutes: f64,
    pub passes: usize,
    pub passes_p90: f64,
    pub pass_accuracy: f64,
    pub team_id: Option<TeamId>,
    pub position: Option<Position>,
}

impl PlayerRating {
    pub fn value_per_pass(&self) -> f64 {
        if self.passes == 0 {
            0.0
        } else {
            self.total_value / self.passes as f64
        }
    }
}

#[derive(Default)]
struct Tally {
    total: f64,
    passes: usize,
    successful: usize,
}

/// Aggregates pass values into per-90 ratings for every player with at
/// least `min_minutes`, best first.
pub fn rate_players(
    values: &[PassValue],
    minutes: &BTreeMap<PlayerId, f64>,
    min_minutes: f64,
) -> Result<Vec<PlayerRating>, ValuationError> {
    let mut tallies: BTreeMap<PlayerId, Tally> = BTreeMap::new();
    for v in values {
        let t = tallies.entry(v.player_id).or_default();
        t.total += v.value;
        t.passes += 1;
        t.successful += usize::from(v.successful);
    }
    for &player in tallies.keys() {
        if minutes.get(&player).is_none_or(|&m| m <= 0.0) {
            return Err(ValuationError::NoMinutes(player));
        }
    }

    let mut ratings: Vec<PlayerRating> = minutes
        .iter()
        .filter(|&(_, &m)| m >= min_minutes && m > 0.0)
        .map(|(&player_id, &m)| {
            let t = tallies.get(&player_id);
            let (total, passes, successful) = t.map_or((0.0, 0, 0), |t| (t.total, t.passes, t.successful));
            PlayerRating {
                player_id,
                contribution_p90: total * 90.0 / m,
                total_value: total,
                minutes: m,
                passes,
                passes_p90: passes as f64 * 90.0 / m,
                pass_accuracy: if passes == 0 {
                    0.0
                } else {
                    successful as f64 / passes as f64
                },
                team_id: None,
                position: None,
            }
        })
        .collect();
    ratings.sort_by(|a, b| {
        b.contribution_p90
            .total_cmp(&a.contribution_p90)
            .then(a.player_id.cmp(&b.player_id))
    });
    Ok(ratings)
}

/// Fills team and position from the lineup rows where each player spent the
/// most minutes within the period.
pub fn assign_roles<F>(ratings: &mut [PlayerRating], lineups: &[Lineup], in_period: F)
where
    F: Fn(GameId) -> bool,
{
    let mut minutes: HashMap<PlayerId, BTreeMap<(TeamId, Position), f64>> = HashMap::new();
    for l in lineups.iter().filter(|l| in_period(l.game_id)) {
        *minutes
            .entry(l.player_id)
            .or_default()
            .entry((l.team_id, l.position))
            .or_insert(0.0) += l.minutes();
    }
    for r in ratings {
        if let Some(roles) = minutes.get(&r.player_id) {
            let best = roles
                .iter()
                .fold(None::<(&(TeamId, Position), f64)>, |best, (role, &m)| match best {
                    Some((_, bm)) if bm >= m => best,
                    _ => Some((role, m)),
                });
            if let Some((&(team, pos), _)) = best {
                r.team_id = Some(team);
                r.position = Some(pos);
            }
        }
    }
}

pub fn write_pass_values<W: Write>(writer: W, values: &[PassValue]) -> Result<(), ValuationError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record([
        "game_id",
        "sequence_id",
        "pass_index",
        "player_id",
        "before",
        "after",
        "value",
        "team_id",
        "successful",
    ])?;
    for v in values {
        wtr.serialize(v)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_pass_values<R: Read>(reader: R) -> Result<Vec<PassValue>, ValuationError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RatingRow {
    player_id: PlayerId,
    player_name: String,
    team: Option<TeamId>,
    position: Option<Position>,
    minutes: f64,
    contribution_p90: f64,
    passes_p90: f64,
    pass_accuracy: f64,
    total_value: f64,
    passes: usize,
    value_per_pass: f64,
}

pub fn write_ratings<W: Write>(
    writer: W,
    ratings: &[PlayerRating],
    players: &BTreeMap<PlayerId, PlayerInfo>,
) -> Result<(), ValuationError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "player_id",
        "player_name",
        "team",
        "position",
        "minutes",
        "contribution_p90",
        "passes_p90",
        "pass_accuracy",
        "total_value",
        "passes",
        "value_per_pass",
    ])?;
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(wtr.into_inner().map_err(|e| csv::Error::from(e.into_error()))?);
    for r in ratings {
        wtr.serialize(RatingRow {
            player_id: r.player_id,
            player_name: players
                .get(&r.player_id)
                .map_or_else(String::new, |p| p.player_name.clone()),
            team: r.team_id,
            position: r.position,
            minutes: r.minutes,
            contribution_p90: r.contribution_p90,
            passes_p90: r.passes_p90,
            pass_accuracy: r.pass_accuracy,
            total_value: r.total_value,
            passes: r.passes,
            value_per_pass: r.value_per_pass(),
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<PlayerRating>, ValuationError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<RatingRow>()
        .map(|row| {
            let row = row?;
            Ok(PlayerRating {
                player_id: row.player_id,
                contribution_p90: row.contribution_p90,
                total_value: row.total_value,
                minutes: row.minutes,
                passes: row.passes,
                passes_p90: row.passes_p90,
                pass_accuracy: row.pass_accuracy,
                team_id: row.team,
                position: row.position,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{EventKind, PitchPoint, SubKind};
    use crate::knn_index::Grid;
    use crate::possession::SequenceRef;

    fn pass(t: f64, player: PlayerId, from: (f64, f64), to: (f64, f64)) -> Event {
        Event {
            game_id: 1,
            half: 1,
            timestamp: t,
            team_id: 1,
            player_id: player,
            kind: EventKind::Pass,
            subkind: SubKind::OpenPlay,
            type_code: 8,
            subtype_code: 85,
            start: PitchPoint { x: from.0, y: from.1 },
            end: PitchPoint { x: to.0, y: to.1 },
        }
    }

    fn sub(events: &[Event], label: f64, seq: u32) -> Subsequence<'_> {
        Subsequence {
            parent: SequenceRef {
                game_id: 0,
                sequence_id: seq,
            },
            pass_index: events.iter().filter(|e| e.is_pass()).count() - 1,
            event_index: events.len() - 1,
            events,
            label,
        }
    }

    /// Two clusters: "before" queries land in one, "after" queries in another.
    fn planted() -> (Vec<Vec<Event>>, Vec<f64>) {
        let b = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 5.0))];
        let b_far = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 12.0))];
        let a = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 5.0)), pass(2.0, 9, (20.0, 5.0), (50.0, 40.0))];
        let a_far = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 5.0)), pass(2.0, 9, (20.0, 5.0), (55.0, 48.0))];
        let a_farther = vec![pass(0.0, 9, (6.0, 5.0), (20.0, 5.0)), pass(2.0, 9, (20.0, 5.0), (59.0, 50.0))];
        (
            vec![b.clone(), b_far, a.clone(), a_far, a_farther, b],
            vec![0.0, 0.6, 0.4, 0.5, 1.0, 0.9],
        )
    }

    #[test]
    fn two_nn_worked_example() {
        let (events, labels) = planted();
        // leave out the duplicate of `b` with label 0.9 so the 2-NN of b are 0.0 and 0.6
        let subs: Vec<_> = events[..5]
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (e, &l))| sub(e, l, i as u32))
            .collect();
        let idx = ClusterIndex::build(Grid::default(), &subs).unwrap();
        let q = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 5.0)), pass(2.0, 7, (20.0, 5.0), (50.0, 40.0))];
        let before = sub(&q[..1], 0.0, 100);
        let after = sub(&q, 0.0, 100);
        assert_eq!(idx.expected_reward(&before, 2).unwrap(), 0.3);
        assert_eq!(idx.expected_reward(&after, 2).unwrap(), 0.45);
        let v = value_pass(&idx, Some(&before), &after, true, 2).unwrap();
        assert_eq!((v.before, v.after), (0.3, 0.45));
        assert!((v.value - 0.15).abs() <= f64::EPSILON);
        assert_eq!(v.player_id, 7);
    }

    #[test]
    fn first_and_unsuccessful_passes() {
        let (events, labels) = planted();
        let subs: Vec<_> = events[..5]
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (e, &l))| sub(e, l, i as u32))
            .collect();
        let idx = ClusterIndex::build(Grid::default(), &subs).unwrap();
        let q = vec![pass(0.0, 9, (5.0, 5.0), (20.0, 5.0)), pass(2.0, 7, (20.0, 5.0), (50.0, 40.0))];
        let first = value_pass(&idx, None, &sub(&q[..1], 0.0, 1), true, 2).unwrap();
        assert_eq!(first.before, 0.0);
        assert_eq!(first.value, first.after);
        let lost = value_pass(&idx, Some(&sub(&q[..1], 0.0, 1)), &sub(&q, 0.0, 1), false, 2).unwrap();
        assert_eq!(lost.after, 0.0);
        assert_eq!(lost.value, -0.3);
        assert!(matches!(
            value_pass(&idx, None, &sub(&q, 0.0, 1), true, 0),
            Err(ValuationError::ZeroK)
        ));
    }

    #[test]
    fn pass_free_game_has_no_values() {
        let idx = ClusterIndex::empty(Grid::default());
        let mut e = pass(0.0, 1, (50.0, 30.0), (50.0, 30.0));
        e.kind = EventKind::Dribble;
        assert!(value_game(&idx, &[e], 3).unwrap().is_empty());
        assert!(value_game(&idx, &[], 3).unwrap().is_empty());
    }

    #[test]
    fn ninety_minute_normalization() {
        let values: Vec<PassValue> = (0..12)
            .map(|i| PassValue {
                game_id: 1,
                sequence_id: i,
                pass_index: 0,
                player_id: 5,
                before: 0.0,
                after: 0.1,
                value: 0.1,
                team_id: 1,
                successful: i % 4 != 0,
            })
            .collect();
        let minutes = BTreeMap::from([(5, 1080.0), (6, 899.0)]);
        let r = rate_players(&values, &minutes, 900.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].contribution_p90 - 0.1).abs() < 1e-12);
        assert_eq!(r[0].passes, 12);
        assert!((r[0].pass_accuracy - 0.75).abs() < 1e-12);
        assert!((r[0].passes_p90 - 1.0).abs() < 1e-12);

        let missing = BTreeMap::from([(6, 900.0)]);
        assert!(matches!(
            rate_players(&values, &missing, 0.0),
            Err(ValuationError::NoMinutes(5))
        ));
    }

    #[test]
    fn pass_values_file_round_trip() {
        let v = vec![PassValue {
            game_id: 3,
            sequence_id: 4,
            pass_index: 1,
            player_id: 77,
            before: 0.125,
            after: 0.0,
            value: -0.125,
            team_id: 2,
            successful: false,
        }];
        let mut buf = Vec::new();
        write_pass_values(&mut buf, &v).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("game_id,sequence_id,pass_index,player_id,before,after,value"));
        assert_eq!(read_pass_values(buf.as_slice()).unwrap(), v);
        let mut empty = Vec::new();
        write_pass_values(&mut empty, &[]).unwrap();
        assert!(read_pass_values(empty.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn ratings_file_round_trip() {
        let r = vec![PlayerRating {
            player_id: 4,
            contribution_p90: 0.05,
            total_value: 0.5,
            minutes: 900.0,
            passes: 40,
            passes_p90: 4.0,
            pass_accuracy: 0.8,
            team_id: Some(2),
            position: Some(Position::MF),
        }];
        let mut buf = Vec::new();
        write_ratings(&mut buf, &r, &BTreeMap::new()).unwrap();
        assert_eq!(read_ratings(buf.as_slice()).unwrap(), r);
    }
}
