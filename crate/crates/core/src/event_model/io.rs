use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    to_pitch_meters, Event, EventError, GameId, PlayerId, TaxonomyTable, TeamId,
    PITCH_LENGTH, PITCH_WIDTH,
};

/// One row of the events interchange file, in provider units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub game_id: GameId,
    pub half: u8,
    pub time: f64,
    pub team: TeamId,
    pub player: PlayerId,
    #[serde(rename = "type")]
    pub type_code: u32,
    pub subtype: u32,
    pub start_x: f64,
    pub end_x: f64,
    pub start_y: f64,
    pub end_y: f64,
}

pub const EVENT_COLUMNS: [&str; 11] = [
    "game_id", "half", "time", "team", "player", "type", "subtype", "start_x", "end_x", "start_y",
    "end_y",
];

/// How provider coordinates relate to the attacking direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AttackDirection {
    /// Every event is already expressed with the acting team attacking toward x = 100.
    #[default]
    Normalized,
    /// Coordinates are absolute. The team with the first event of the first
    /// half attacks toward x = 100 in that half; teams switch ends at half-time.
    Absolute,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
    pub direction: AttackDirection,
}

/// A row rejected during lenient parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
    /// Parsed fine but failed a bound check.
    pub validation: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EventStore {
    /// Events per game in (half, timestamp, ingestion) order.
    pub games: BTreeMap<GameId, Vec<Event>>,
    pub skipped: Vec<RowError>,
}

impl EventStore {
    pub fn event_count(&self) -> usize {
        self.games.values().map(Vec::len).sum()
    }

    pub fn game(&self, id: GameId) -> &[Event] {
        self.games.get(&id).map_or(&[], Vec::as_slice)
    }
}

fn validate(raw: &RawEvent) -> Result<(), String> {
    if raw.half != 1 && raw.half != 2 {
        return Err(format!("half {} not in {{1, 2}}", raw.half));
    }
    if !(raw.time >= 0.0) || !raw.time.is_finite() {
        return Err(format!("time {} is negative or not finite", raw.time));
    }
    for (name, v) in [
        ("start_x", raw.start_x),
        ("end_x", raw.end_x),
        ("start_y", raw.start_y),
        ("end_y", raw.end_y),
    ] {
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("{name} = {v} outside [0, 100]"));
        }
    }
    Ok(())
}

fn to_event(raw: &RawEvent, taxonomy: &TaxonomyTable) -> Result<Event, EventError> {
    let (kind, subkind) = taxonomy.classify(raw.type_code, raw.subtype);
    Ok(Event {
        game_id: raw.game_id,
        half: raw.half,
        timestamp: raw.time,
        team_id: raw.team,
        player_id: raw.player,
        kind,
        subkind,
        type_code: raw.type_code,
        subtype_code: raw.subtype,
        start: to_pitch_meters(raw.start_x, raw.start_y)?,
        end: to_pitch_meters(raw.end_x, raw.end_y)?,
    })
}

/// Parses an events file into per-game ordered events.
///
/// In lenient mode bad rows are logged and collected in
/// [`EventStore::skipped`]; in strict mode the first one aborts the parse.
pub fn parse_events<R: Read>(
    reader: R,
    taxonomy: &TaxonomyTable,
    options: &ParseOptions,
) -> Result<EventStore, EventError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut store = EventStore::default();

    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                reject(&mut store, options, line, e.to_string(), false)?;
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let raw: RawEvent = match record.deserialize(Some(&headers)) {
            Ok(raw) => raw,
            Err(e) => {
                reject(&mut store, options, line, e.to_string(), false)?;
                continue;
            }
        };
        if let Err(message) = validate(&raw) {
            reject(&mut store, options, line, message, true)?;
            continue;
        }
        let event = to_event(&raw, taxonomy)?;
        store.games.entry(event.game_id).or_default().push(event);
    }

    for events in store.games.values_mut() {
        // stable: equal (half, time) keep ingestion order
        events.sort_by(|a, b| {
            a.half
                .cmp(&b.half)
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        if options.direction == AttackDirection::Absolute {
            normalize_direction(events);
        }
    }

    if !store.skipped.is_empty() {
        warn!("skipped {} malformed or invalid event rows", store.skipped.len());
    }
    Ok(store)
}

fn reject(
    store: &mut EventStore,
    options: &ParseOptions,
    line: u64,
    message: String,
    validation: bool,
) -> Result<(), EventError> {
    if options.strict {
        return Err(if validation {
            EventError::Validation { line, message }
        } else {
            EventError::Malformed { line, message }
        });
    }
    warn!("line {line}: skipping row: {message}");
    store.skipped.push(RowError {
        line,
        message,
        validation,
    });
    Ok(())
}

fn normalize_direction(events: &mut [Event]) {
    let Some(first) = events.iter().find(|e| e.half == 1) else {
        return;
    };
    let right_in_first = first.team_id;
    for e in events.iter_mut() {
        let attacks_right = (e.team_id == right_in_first) == (e.half == 1);
        if !attacks_right {
            e.start = e.start.mirrored();
            e.end = e.end.mirrored();
        }
    }
}

/// Inverse of the percent-to-meter conversion along one axis.
///
/// Picks the float that converts back to exactly `meters`, so exported
/// events re-parse to identical values.
pub fn percent_from_meters(meters: f64, axis_len: f64) -> f64 {
    let forward = |p: f64| p * axis_len / 100.0;
    let mut p = (meters * 100.0 / axis_len).clamp(0.0, 100.0);
    for _ in 0..16 {
        let m = forward(p);
        if m == meters {
            break;
        }
        p = if m < meters { p.next_up() } else { p.next_down() };
    }
    p.clamp(0.0, 100.0)
}

pub fn write_events<'a, W, I>(writer: W, events: I) -> Result<(), EventError>
where
    W: Write,
    I: IntoIterator<Item = &'a Event>,
{
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(EVENT_COLUMNS)?;
    for e in events {
        wtr.serialize(raw_of(e))?;
    }
    wtr.flush()?;
    Ok(())
}

fn raw_of(e: &Event) -> RawEvent {
    RawEvent {
        game_id: e.game_id,
        half: e.half,
        time: e.timestamp,
        team: e.team_id,
        player: e.player_id,
        type_code: e.type_code,
        subtype: e.subtype_code,
        start_x: percent_from_meters(e.start.x, PITCH_LENGTH),
        end_x: percent_from_meters(e.end.x, PITCH_LENGTH),
        start_y: percent_from_meters(e.start.y, PITCH_WIDTH),
        end_y: percent_from_meters(e.end.y, PITCH_WIDTH),
    }
}

impl From<&Event> for RawEvent {
    fn from(e: &Event) -> Self {
        raw_of(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::EventKind;

    const HEADER: &str = "game_id,half,time,team,player,type,subtype,start_x,end_x,start_y,end_y\n";

    fn parse(text: &str, strict: bool) -> Result<EventStore, EventError> {
        let opts = ParseOptions {
            strict,
            ..Default::default()
        };
        parse_events(text.as_bytes(), &TaxonomyTable::default(), &opts)
    }

    #[test]
    fn table_one_first_row() {
        let text = format!("{HEADER}7, 1, 8.642, 679, 217031, 8, 85, 58, 66, 34, 9\n");
        let store = parse(&text, true).unwrap();
        let e = &store.game(7)[0];
        assert_eq!(e.kind, EventKind::Pass);
        assert!((e.start.x - 60.9).abs() < 1e-12);
        assert!((e.start.y - 23.12).abs() < 1e-12);
        assert!((e.end.x - 69.3).abs() < 1e-12);
        assert!((e.end.y - 6.12).abs() < 1e-12);
    }

    #[test]
    fn empty_stream() {
        assert_eq!(parse("", true).unwrap().event_count(), 0);
        assert_eq!(parse(HEADER, true).unwrap().event_count(), 0);
    }

    #[test]
    fn out_of_range_coordinate() {
        let text = format!("{HEADER}1,1,3.0,5,6,8,85,120,66,34,9\n");
        match parse(&text, true) {
            Err(EventError::Validation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
        let lenient = parse(&text, false).unwrap();
        assert_eq!(lenient.event_count(), 0);
        assert!(lenient.skipped[0].validation);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{HEADER}1,1,3.0,5,6,8,85,50,66,34,9\n1,1,x,5,6,8,85,50,66,34,9\n");
        match parse(&text, true) {
            Err(EventError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
        let lenient = parse(&text, false).unwrap();
        assert_eq!(lenient.event_count(), 1);
        assert_eq!(lenient.skipped.len(), 1);
        assert_eq!(lenient.skipped[0].line, 3);
        assert!(!lenient.skipped[0].validation);
    }

    #[test]
    fn bad_half_rejected() {
        let text = format!("{HEADER}1,3,3.0,5,6,8,85,50,66,34,9\n");
        assert!(matches!(parse(&text, true), Err(EventError::Validation { .. })));
    }

    #[test]
    fn ordering_by_half_then_time_is_stable() {
        let text = format!(
            "{HEADER}1,2,1.0,5,1,8,85,50,50,50,50\n1,1,9.0,5,2,8,85,50,50,50,50\n\
             1,1,2.0,5,3,8,85,50,50,50,50\n1,1,2.0,5,4,8,85,50,50,50,50\n"
        );
        let store = parse(&text, true).unwrap();
        let players: Vec<_> = store.game(1).iter().map(|e| e.player_id).collect();
        assert_eq!(players, vec![3, 4, 2, 1]);
    }

    #[test]
    fn absolute_coordinates_are_mirrored_for_the_other_team() {
        let text = format!(
            "{HEADER}1,1,0.0,5,1,8,85,50,40,50,50\n1,1,2.0,6,2,8,85,40,30,50,20\n\
             1,2,0.0,5,3,8,85,50,40,50,50\n"
        );
        let opts = ParseOptions {
            strict: true,
            direction: AttackDirection::Absolute,
        };
        let store = parse_events(text.as_bytes(), &TaxonomyTable::default(), &opts).unwrap();
        let g = store.game(1);
        assert!((g[0].end.x - 42.0).abs() < 1e-9);
        assert!((g[1].start.x - 63.0).abs() < 1e-9);
        assert!((g[1].end.y - 54.4).abs() < 1e-9);
        // team 5 attacks left after half-time
        assert!((g[2].end.x - 63.0).abs() < 1e-9);
    }

    #[test]
    fn percent_inverse_is_exact() {
        for i in 0..=10_000 {
            let p = i as f64 / 100.0;
            let m = p * PITCH_LENGTH / 100.0;
            let back = percent_from_meters(m, PITCH_LENGTH);
            assert_eq!(back * PITCH_LENGTH / 100.0, m, "p = {p}");
            let m = p * PITCH_WIDTH / 100.0;
            let back = percent_from_meters(m, PITCH_WIDTH);
            assert_eq!(back * PITCH_WIDTH / 100.0, m, "p = {p}");
        }
    }
}
