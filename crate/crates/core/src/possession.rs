//! Possession sequences and their pass-terminated subsequences.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{Event, EventKind, GameId, TeamId};
use crate::xg::XgModel;

pub type SequenceId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum PossessionError {
    #[error("event index {index} out of range for a sequence of {len} events")]
    OutOfRange { index: usize, len: usize },

    #[error("event {index} is a {kind}, not a pass")]
    NotAPass { index: usize, kind: EventKind },
}

/// Identity of a possession sequence across the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SequenceRef {
    pub game_id: GameId,
    pub sequence_id: SequenceId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalReason {
    /// The other team touched the ball.
    Turnover,
    /// Ended in a scoring shot.
    Goal,
    /// Ended in a shot that did not score.
    Shot,
    /// Foul (or offside) committed by the team in possession.
    Foul,
    /// Foul committed against the team in possession.
    FoulWon,
    BallOut,
    HalfEnd,
}

impl TerminalReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminalReason::Turnover => "turnover",
            TerminalReason::Goal => "goal",
            TerminalReason::Shot => "shot",
            TerminalReason::Foul => "foul",
            TerminalReason::FoulWon => "foul_won",
            TerminalReason::BallOut => "ball_out",
            TerminalReason::HalfEnd => "half_end",
        }
    }
}

impl fmt::Display for TerminalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerminalReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "turnover" => TerminalReason::Turnover,
            "goal" => TerminalReason::Goal,
            "shot" => TerminalReason::Shot,
            "foul" => TerminalReason::Foul,
            "foul_won" => TerminalReason::FoulWon,
            "ball_out" => TerminalReason::BallOut,
            "half_end" => TerminalReason::HalfEnd,
            _ => return Err(format!("unknown terminal reason {s:?}")),
        })
    }
}

/// A maximal run of consecutive events by one team.
#[derive(Debug, Clone, PartialEq)]
pub struct PossessionSequence {
    pub sequence_id: SequenceId,
    pub game_id: GameId,
    pub team_id: TeamId,
    pub half: u8,
    /// Index of the first event in the game's event list.
    pub first_event: usize,
    pub events: Vec<Event>,
    pub terminal_reason: TerminalReason,
    /// Expected goals of the final shot, 0 for shotless sequences.
    pub label: f64,
}

impl PossessionSequence {
    pub fn reference(&self) -> SequenceRef {
        SequenceRef {
            game_id: self.game_id,
            sequence_id: self.sequence_id,
        }
    }

    pub fn last_event(&self) -> usize {
        self.first_event + self.events.len() - 1
    }

    pub fn pass_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_pass()).count()
    }

    /// Whether the pass at `index` kept the ball for its team.
    ///
    /// Non-terminal passes are successful. A terminal pass succeeds only if
    /// possession ended without losing the ball: the opponent fouled, or the
    /// half ended.
    pub fn pass_success(&self, index: usize) -> Result<bool, PossessionError> {
        let event = self.events.get(index).ok_or(PossessionError::OutOfRange {
            index,
            len: self.events.len(),
        })?;
        if !event.is_pass() {
            return Err(PossessionError::NotAPass {
                index,
                kind: event.kind,
            });
        }
        if index + 1 < self.events.len() {
            return Ok(true);
        }
        Ok(match self.terminal_reason {
            TerminalReason::FoulWon | TerminalReason::HalfEnd => true,
            TerminalReason::Turnover
            | TerminalReason::BallOut
            | TerminalReason::Foul
            | TerminalReason::Goal
            | TerminalReason::Shot => false,
        })
    }

    /// One prefix per pass, each ending right after that pass.
    pub fn subsequences(&self) -> Vec<Subsequence<'_>> {
        enumerate_subsequences(self)
    }
}

/// Prefix of a possession sequence that ends with one of its passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subsequence<'a> {
    pub parent: SequenceRef,
    /// Ordinal of the terminating pass among the parent's passes.
    pub pass_index: usize,
    /// Index of the terminating pass within the parent's events.
    pub event_index: usize,
    pub events: &'a [Event],
    pub label: f64,
}

impl<'a> Subsequence<'a> {
    pub fn last(&self) -> &'a Event {
        &self.events[self.events.len() - 1]
    }
}

struct Open {
    team_id: TeamId,
    half: u8,
    first_event: usize,
    events: Vec<Event>,
}

/// Splits one game's ordered events into possession sequences.
///
/// A sequence ends when the other team acts, on a shot, a foul, the ball
/// going out, or the end of a half. Every event lands in exactly one
/// sequence.
pub fn segment_possessions(events: &[Event]) -> Vec<PossessionSequence> {
    let mut out: Vec<PossessionSequence> = Vec::new();
    let mut open: Option<Open> = None;

    let mut close = |open: &mut Option<Open>, reason: TerminalReason| {
        if let Some(o) = open.take() {
            let sequence_id = out.len() as SequenceId;
            out.push(PossessionSequence {
                sequence_id,
                game_id: o.events[0].game_id,
                team_id: o.team_id,
                half: o.half,
                first_event: o.first_event,
                events: o.events,
                terminal_reason: reason,
                label: 0.0,
            });
        }
    };

    for (i, e) in events.iter().enumerate() {
        if let Some(o) = &open {
            if o.half != e.half {
                close(&mut open, TerminalReason::HalfEnd);
            } else if o.team_id != e.team_id {
                let reason = if e.kind == EventKind::Foul {
                    TerminalReason::FoulWon
                } else {
                    TerminalReason::Turnover
                };
                close(&mut open, reason);
            }
        }
        let o = open.get_or_insert_with(|| Open {
            team_id: e.team_id,
            half: e.half,
            first_event: i,
            events: Vec::new(),
        });
        o.events.push(e.clone());
        let terminal = match e.kind {
            EventKind::Goal => Some(TerminalReason::Goal),
            EventKind::Shot => Some(TerminalReason::Shot),
            EventKind::Foul => Some(TerminalReason::Foul),
            EventKind::BallOut => Some(TerminalReason::BallOut),
            _ => None,
        };
        if let Some(reason) = terminal {
            close(&mut open, reason);
        }
    }
    close(&mut open, TerminalReason::HalfEnd);
    out
}

pub fn enumerate_subsequences(seq: &PossessionSequence) -> Vec<Subsequence<'_>> {
    let parent = seq.reference();
    seq.events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_pass())
        .enumerate()
        .map(|(pass_index, (event_index, _))| Subsequence {
            parent,
            pass_index,
            event_index,
            events: &seq.events[..=event_index],
            label: seq.label,
        })
        .collect()
}

/// Sets each sequence's label to the expected-goals value of its final
/// shot, or 0 when it has none.
pub fn label_sequences(seqs: &mut [PossessionSequence], model: &XgModel) {
    for seq in seqs {
        seq.label = match seq.events.last() {
            Some(last) if last.is_shot() => model.predict_shot(last),
            _ => 0.0,
        };
    }
}

/// Writes the optional sequence dump.
pub fn write_sequences<'a, W, I>(writer: W, seqs: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a PossessionSequence>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "sequence_id",
        "game_id",
        "team_id",
        "first_event_index",
        "last_event_index",
        "terminal_reason",
        "label",
    ])?;
    for s in seqs {
        wtr.write_record([
            s.sequence_id.to_string(),
            s.game_id.to_string(),
            s.team_id.to_string(),
            s.first_event.to_string(),
            s.last_event().to_string(),
            s.terminal_reason.to_string(),
            s.label.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
