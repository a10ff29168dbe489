use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EventError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Pass,
    Shot,
    Dribble,
    SetPiece,
    Foul,
    BallOut,
    /// A shot that scored.
    Goal,
    Other,
}

impl EventKind {
    pub fn is_shot(self) -> bool {
        matches!(self, EventKind::Shot | EventKind::Goal)
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Pass => "pass",
            EventKind::Shot => "shot",
            EventKind::Dribble => "dribble",
            EventKind::SetPiece => "set_piece",
            EventKind::Foul => "foul",
            EventKind::BallOut => "ball_out",
            EventKind::Goal => "goal",
            EventKind::Other => "other",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match normalize(s).as_str() {
            "pass" => EventKind::Pass,
            "shot" => EventKind::Shot,
            "dribble" => EventKind::Dribble,
            "setpiece" => EventKind::SetPiece,
            "foul" => EventKind::Foul,
            "ballout" => EventKind::BallOut,
            "goal" => EventKind::Goal,
            "other" => EventKind::Other,
            _ => return Err(format!("unknown event kind {s:?}")),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubKind {
    Cross,
    HighPass,
    Corner,
    FreeKick,
    GoalKick,
    Penalty,
    OpenPlay,
    None,
}

impl SubKind {
    /// Dead-ball restarts.
    pub fn is_set_piece(self) -> bool {
        matches!(
            self,
            SubKind::Corner | SubKind::FreeKick | SubKind::GoalKick | SubKind::Penalty
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SubKind::Cross => "cross",
            SubKind::HighPass => "high_pass",
            SubKind::Corner => "corner",
            SubKind::FreeKick => "free_kick",
            SubKind::GoalKick => "goal_kick",
            SubKind::Penalty => "penalty",
            SubKind::OpenPlay => "open_play",
            SubKind::None => "none",
        }
    }
}

impl fmt::Display for SubKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sub = match normalize(s).as_str() {
            "cross" => SubKind::Cross,
            "highpass" => SubKind::HighPass,
            "corner" => SubKind::Corner,
            "freekick" => SubKind::FreeKick,
            "goalkick" => SubKind::GoalKick,
            "penalty" => SubKind::Penalty,
            "openplay" => SubKind::OpenPlay,
            "none" | "" => SubKind::None,
            _ => return Err(format!("unknown event subkind {s:?}")),
        };
        Ok(sub)
    }
}

fn normalize(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps provider `(type, subtype)` codes to event kinds.
///
/// Unknown pairs resolve to [`EventKind::Other`]. Set-piece passes (corners,
/// free kicks, goal kicks) are passes with a set-piece subkind; throw-ins are
/// the only restart typed as [`EventKind::SetPiece`] by default.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyTable {
    entries: HashMap<(u32, u32), (EventKind, SubKind)>,
}

/// type, subtype, kind, subkind
const DEFAULT_ROWS: &[(u32, u32, EventKind, SubKind)] = &[
    // duels and carries
    (1, 10, EventKind::Other, SubKind::None),
    (1, 11, EventKind::Dribble, SubKind::None),
    (1, 12, EventKind::Other, SubKind::None),
    (1, 13, EventKind::Other, SubKind::None),
    // fouls
    (2, 20, EventKind::Foul, SubKind::None),
    (2, 21, EventKind::Foul, SubKind::None),
    (2, 22, EventKind::Foul, SubKind::None),
    (2, 23, EventKind::Foul, SubKind::None),
    (2, 24, EventKind::Foul, SubKind::None),
    (2, 25, EventKind::Foul, SubKind::None),
    (2, 26, EventKind::Foul, SubKind::None),
    (2, 27, EventKind::Foul, SubKind::None),
    // restarts
    (3, 30, EventKind::Pass, SubKind::Corner),
    (3, 31, EventKind::Pass, SubKind::FreeKick),
    (3, 32, EventKind::Pass, SubKind::FreeKick),
    (3, 33, EventKind::Shot, SubKind::FreeKick),
    (3, 34, EventKind::Pass, SubKind::GoalKick),
    (3, 35, EventKind::Shot, SubKind::Penalty),
    (3, 36, EventKind::SetPiece, SubKind::None),
    (3, 37, EventKind::Goal, SubKind::FreeKick),
    (3, 38, EventKind::Goal, SubKind::Penalty),
    // interruptions
    (5, 50, EventKind::BallOut, SubKind::None),
    (5, 51, EventKind::Other, SubKind::None),
    (6, 0, EventKind::Foul, SubKind::None),
    // other on-ball
    (7, 70, EventKind::Dribble, SubKind::None),
    (7, 71, EventKind::Other, SubKind::None),
    (7, 72, EventKind::Other, SubKind::None),
    // passes
    (8, 80, EventKind::Pass, SubKind::Cross),
    (8, 81, EventKind::Pass, SubKind::OpenPlay),
    (8, 82, EventKind::Pass, SubKind::OpenPlay),
    (8, 83, EventKind::Pass, SubKind::HighPass),
    (8, 84, EventKind::Pass, SubKind::HighPass),
    (8, 85, EventKind::Pass, SubKind::OpenPlay),
    (8, 86, EventKind::Pass, SubKind::OpenPlay),
    // goalkeeping
    (9, 90, EventKind::Other, SubKind::None),
    (9, 91, EventKind::Other, SubKind::None),
    // shots
    (10, 100, EventKind::Shot, SubKind::OpenPlay),
    (10, 101, EventKind::Goal, SubKind::OpenPlay),
];

/// Provider codes used when emitting events of a given kind.
pub mod codes {
    pub const DRIBBLE: (u32, u32) = (1, 11);
    pub const FOUL: (u32, u32) = (2, 20);
    pub const CORNER: (u32, u32) = (3, 30);
    pub const FREE_KICK: (u32, u32) = (3, 31);
    pub const GOAL_KICK: (u32, u32) = (3, 34);
    pub const PENALTY: (u32, u32) = (3, 35);
    pub const THROW_IN: (u32, u32) = (3, 36);
    pub const PENALTY_GOAL: (u32, u32) = (3, 38);
    pub const BALL_OUT: (u32, u32) = (5, 50);
    pub const CROSS: (u32, u32) = (8, 80);
    pub const HIGH_PASS: (u32, u32) = (8, 83);
    pub const SIMPLE_PASS: (u32, u32) = (8, 85);
    pub const SHOT: (u32, u32) = (10, 100);
    pub const SHOT_GOAL: (u32, u32) = (10, 101);
}

impl Default for TaxonomyTable {
    fn default() -> Self {
        let entries = DEFAULT_ROWS
            .iter()
            .map(|&(t, s, k, sk)| ((t, s), (k, sk)))
            .collect();
        TaxonomyTable { entries }
    }
}

#[derive(Deserialize)]
struct TaxonomyRow {
    #[serde(rename = "type")]
    type_code: u32,
    subtype: u32,
    kind: String,
    subkind: String,
}

impl TaxonomyTable {
    pub fn empty() -> Self {
        TaxonomyTable {
            entries: HashMap::new(),
        }
    }

    /// Reads a `type,subtype,kind,subkind` table.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, EventError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = TaxonomyTable::empty();
        let headers = rdr.headers()?.clone();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row: TaxonomyRow = record.deserialize(Some(&headers)).map_err(|e| {
                EventError::Taxonomy {
                    line,
                    message: e.to_string(),
                }
            })?;
            let kind = row
                .kind
                .parse()
                .map_err(|message| EventError::Taxonomy { line, message })?;
            let subkind = row
                .subkind
                .parse()
                .map_err(|message| EventError::Taxonomy { line, message })?;
            table.insert(row.type_code, row.subtype, kind, subkind);
        }
        Ok(table)
    }

    pub fn insert(&mut self, type_code: u32, subtype: u32, kind: EventKind, subkind: SubKind) {
        self.entries.insert((type_code, subtype), (kind, subkind));
    }

    pub fn classify(&self, type_code: u32, subtype: u32) -> (EventKind, SubKind) {
        self.entries
            .get(&(type_code, subtype))
            .copied()
            .unwrap_or((EventKind::Other, SubKind::None))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes the table sorted by code.
    pub fn write<W: std::io::Write>(&self, writer: W) -> Result<(), EventError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["type", "subtype", "kind", "subkind"])?;
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_by_key(|(code, _)| **code);
        for ((t, s), (k, sk)) in rows {
            wtr.write_record([t.to_string(), s.to_string(), k.to_string(), sk.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_codes_are_passes() {
        let t = TaxonomyTable::default();
        assert_eq!(t.classify(8, 85), (EventKind::Pass, SubKind::OpenPlay));
        assert_eq!(t.classify(8, 80), (EventKind::Pass, SubKind::Cross));
    }

    #[test]
    fn unknown_pair_is_other() {
        let t = TaxonomyTable::default();
        assert_eq!(t.classify(99, 999), (EventKind::Other, SubKind::None));
    }

    #[test]
    fn set_piece_passes_keep_pass_kind() {
        let t = TaxonomyTable::default();
        for code in [codes::CORNER, codes::FREE_KICK, codes::GOAL_KICK] {
            let (kind, sub) = t.classify(code.0, code.1);
            assert_eq!(kind, EventKind::Pass);
            assert!(sub.is_set_piece());
        }
    }

    #[test]
    fn file_round_trip() {
        let t = TaxonomyTable::default();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = TaxonomyTable::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bad_kind_rejected() {
        let text = "type,subtype,kind,subkind\n8,85,throw,none\n";
        assert!(TaxonomyTable::from_reader(text.as_bytes()).is_err());
    }

    #[test]
    fn kind_names_parse_loosely() {
        assert_eq!("Set Piece".parse::<EventKind>().unwrap(), EventKind::SetPiece);
        assert_eq!("high_pass".parse::<SubKind>().unwrap(), SubKind::HighPass);
    }
}
