//! Typed play-by-play events in metric pitch coordinates.
//!
//! Providers ship coordinates as percentages of the pitch length and width.
//! Everything downstream of ingestion works in meters on a 105 x 68 pitch,
//! with the acting team attacking toward `x = 105`.

mod io;
mod lineup;
mod taxonomy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    parse_events, percent_from_meters, write_events, AttackDirection, EventStore, ParseOptions,
    RawEvent, RowError,
};
pub use lineup::{minutes_played, parse_lineups, parse_players, write_lineups, Lineup, PlayerInfo, Position};
pub use taxonomy::{codes, EventKind, SubKind, TaxonomyTable};

pub type GameId = u64;
pub type TeamId = u64;
pub type PlayerId = u64;

/// Pitch length in meters.
pub const PITCH_LENGTH: f64 = 105.0;
/// Pitch width in meters.
pub const PITCH_WIDTH: f64 = 68.0;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("coordinate ({x}, {y}) outside [0, 100]")]
    PercentOutOfRange { x: f64, y: f64 },

    #[error("point ({x}, {y}) outside the {PITCH_LENGTH}x{PITCH_WIDTH} pitch")]
    OffPitch { x: f64, y: f64 },

    #[error("line {line}: malformed row: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: invalid row: {message}")]
    Validation { line: u64, message: String },

    #[error("taxonomy line {line}: {message}")]
    Taxonomy { line: u64, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A location on the pitch in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchPoint {
    pub x: f64,
    pub y: f64,
}

impl PitchPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, EventError> {
        if !(0.0..=PITCH_LENGTH).contains(&x) || !(0.0..=PITCH_WIDTH).contains(&y) {
            return Err(EventError::OffPitch { x, y });
        }
        Ok(PitchPoint { x, y })
    }

    /// Same location seen from the opposite attacking direction.
    pub fn mirrored(self) -> Self {
        PitchPoint {
            x: PITCH_LENGTH - self.x,
            y: PITCH_WIDTH - self.y,
        }
    }

    pub fn clamped(x: f64, y: f64) -> Self {
        PitchPoint {
            x: x.clamp(0.0, PITCH_LENGTH),
            y: y.clamp(0.0, PITCH_WIDTH),
        }
    }
}

/// Converts a percent-of-pitch coordinate pair to meters.
pub fn to_pitch_meters(x_pct: f64, y_pct: f64) -> Result<PitchPoint, EventError> {
    if !(0.0..=100.0).contains(&x_pct) || !(0.0..=100.0).contains(&y_pct) {
        return Err(EventError::PercentOutOfRange { x: x_pct, y: y_pct });
    }
    Ok(PitchPoint {
        x: x_pct * PITCH_LENGTH / 100.0,
        y: y_pct * PITCH_WIDTH / 100.0,
    })
}

/// One on-ball action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub game_id: GameId,
    pub half: u8,
    /// Seconds from the start of the half.
    pub timestamp: f64,
    pub team_id: TeamId,
    pub player_id: PlayerId,
    pub kind: EventKind,
    pub subkind: SubKind,
    /// Provider codes the kind was derived from; kept for lossless export.
    pub type_code: u32,
    pub subtype_code: u32,
    pub start: PitchPoint,
    pub end: PitchPoint,
}

impl Event {
    pub fn is_pass(&self) -> bool {
        self.kind == EventKind::Pass
    }

    /// Shots, scored or not.
    pub fn is_shot(&self) -> bool {
        self.kind.is_shot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_map_to_corners() {
        assert_eq!(to_pitch_meters(0.0, 0.0).unwrap(), PitchPoint { x: 0.0, y: 0.0 });
        assert_eq!(
            to_pitch_meters(100.0, 100.0).unwrap(),
            PitchPoint { x: 105.0, y: 68.0 }
        );
    }

    #[test]
    fn table_row_point() {
        let p = to_pitch_meters(58.0, 34.0).unwrap();
        assert!((p.x - 60.9).abs() < 1e-12);
        assert!((p.y - 23.12).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_percent() {
        assert!(to_pitch_meters(100.5, 3.0).is_err());
        assert!(to_pitch_meters(3.0, -0.1).is_err());
        assert!(PitchPoint::new(105.1, 3.0).is_err());
    }

    #[test]
    fn mirror_is_involution() {
        let p = PitchPoint::new(12.5, 60.0).unwrap();
        assert_eq!(p.mirrored().mirrored(), p);
    }
}
