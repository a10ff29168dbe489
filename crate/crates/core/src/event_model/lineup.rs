use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EventError, GameId, PlayerId, TeamId};

/// Positional line of a player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    GK,
    DF,
    MF,
    FW,
}

impl Position {
    pub const ALL: [Position; 4] = [Position::GK, Position::DF, Position::MF, Position::FW];
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Position::GK => "GK",
            Position::DF => "DF",
            Position::MF => "MF",
            Position::FW => "FW",
        };
        f.write_str(s)
    }
}

impl FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GK" | "G" | "GOALKEEPER" => Ok(Position::GK),
            "DF" | "D" | "DEFENDER" => Ok(Position::DF),
            "MF" | "M" | "MIDFIELDER" => Ok(Position::MF),
            "FW" | "F" | "FORWARD" | "STRIKER" => Ok(Position::FW),
            _ => Err(format!("unknown position {s:?}")),
        }
    }
}

/// One player's participation in one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineup {
    pub game_id: GameId,
    pub player_id: PlayerId,
    pub team_id: TeamId,
    pub position: Position,
    pub minute_on: f64,
    pub minute_off: f64,
}

impl Lineup {
    pub fn minutes(&self) -> f64 {
        self.minute_off - self.minute_on
    }

    pub fn is_starter(&self) -> bool {
        self.minute_on == 0.0
    }
}

#[derive(Deserialize)]
struct LineupRow {
    game_id: GameId,
    player_id: PlayerId,
    team_id: TeamId,
    position: String,
    minute_on: f64,
    minute_off: f64,
}

/// Reads a lineups file, rejecting rows that break the lineup invariants.
pub fn parse_lineups<R: Read>(reader: R) -> Result<Vec<Lineup>, EventError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: LineupRow = record
            .deserialize(Some(&headers))
            .map_err(|e| EventError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let position = row
            .position
            .parse()
            .map_err(|message| EventError::Malformed { line, message })?;
        if !(row.minute_on >= 0.0 && row.minute_on < row.minute_off) {
            return Err(EventError::Validation {
                line,
                message: format!(
                    "minute_on {} must be >= 0 and below minute_off {}",
                    row.minute_on, row.minute_off
                ),
            });
        }
        if !seen.insert((row.game_id, row.player_id)) {
            return Err(EventError::Validation {
                line,
                message: format!("player {} listed twice in game {}", row.player_id, row.game_id),
            });
        }
        out.push(Lineup {
            game_id: row.game_id,
            player_id: row.player_id,
            team_id: row.team_id,
            position,
            minute_on: row.minute_on,
            minute_off: row.minute_off,
        });
    }
    Ok(out)
}

pub fn write_lineups<'a, W, I>(writer: W, lineups: I) -> Result<(), EventError>
where
    W: Write,
    I: IntoIterator<Item = &'a Lineup>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["game_id", "player_id", "team_id", "position", "minute_on", "minute_off"])?;
    for l in lineups {
        wtr.write_record([
            l.game_id.to_string(),
            l.player_id.to_string(),
            l.team_id.to_string(),
            l.position.to_string(),
            l.minute_on.to_string(),
            l.minute_off.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Minutes per player summed over the games accepted by `in_period`.
pub fn minutes_played<F>(lineups: &[Lineup], in_period: F) -> BTreeMap<PlayerId, f64>
where
    F: Fn(GameId) -> bool,
{
    let mut minutes = BTreeMap::new();
    for l in lineups.iter().filter(|l| in_period(l.game_id)) {
        *minutes.entry(l.player_id).or_insert(0.0) += l.minutes();
    }
    minutes
}

/// Optional player metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerInfo {
    pub player_id: PlayerId,
    pub player_name: String,
    /// ISO date, `YYYY-MM-DD`.
    #[serde(default)]
    pub birth_date: Option<String>,
}

pub fn parse_players<R: Read>(reader: R) -> Result<BTreeMap<PlayerId, PlayerInfo>, EventError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<PlayerInfo>() {
        let mut info = row?;
        if info.birth_date.as_deref() == Some("") {
            info.birth_date = None;
        }
        out.insert(info.player_id, info);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lineup(game: GameId, player: PlayerId, on: f64, off: f64) -> Lineup {
        Lineup {
            game_id: game,
            player_id: player,
            team_id: 1,
            position: Position::MF,
            minute_on: on,
            minute_off: off,
        }
    }

    #[test]
    fn full_game() {
        let m = minutes_played(&[lineup(1, 9, 0.0, 90.0)], |_| true);
        assert_eq!(m[&9], 90.0);
    }

    #[test]
    fn minutes_add_across_games() {
        let ls = [lineup(1, 9, 0.0, 60.0), lineup(2, 9, 30.0, 90.0)];
        assert_eq!(minutes_played(&ls, |_| true)[&9], 120.0);
        assert_eq!(minutes_played(&ls, |g| g == 2)[&9], 60.0);
    }

    #[test]
    fn empty_period() {
        let ls = [lineup(1, 9, 0.0, 90.0)];
        assert!(minutes_played(&ls, |_| false).is_empty());
        assert!(minutes_played(&[], |_| true).is_empty());
    }

    #[test]
    fn parse_and_validate() {
        let ok = "game_id,player_id,team_id,position,minute_on,minute_off\n1,2,3,DF,0,90\n";
        let ls = parse_lineups(ok.as_bytes()).unwrap();
        assert_eq!(ls[0].position, Position::DF);

        let dup = format!("{ok}1,2,3,MF,0,45\n");
        assert!(matches!(
            parse_lineups(dup.as_bytes()),
            Err(EventError::Validation { line: 3, .. })
        ));
        let bad = "game_id,player_id,team_id,position,minute_on,minute_off\n1,2,3,DF,50,40\n";
        assert!(parse_lineups(bad.as_bytes()).is_err());
    }

    #[test]
    fn lineups_round_trip() {
        let ls = vec![lineup(1, 9, 0.0, 61.5), lineup(1, 10, 61.5, 90.0)];
        let mut buf = Vec::new();
        write_lineups(&mut buf, &ls).unwrap();
        assert_eq!(parse_lineups(buf.as_slice()).unwrap(), ls);
    }

    #[test]
    fn players_with_missing_birth_date() {
        let text = "player_id,player_name,birth_date\n4,Ann,1995-02-01\n5,Bo,\n";
        let players = parse_players(text.as_bytes()).unwrap();
        assert_eq!(players[&4].birth_date.as_deref(), Some("1995-02-01"));
        assert_eq!(players[&5].birth_date, None);
    }
}
