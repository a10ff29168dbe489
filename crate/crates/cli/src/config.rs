//! Run configuration: a flat TOML file, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use passval_core::event_model::{AttackDirection, GameId};
use passval_core::knn_index::Grid;

use crate::PipelineError;

/// A set of game ids written as ranges, e.g. `1-100,105`. `*` is every game.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GameSet {
    all: bool,
    ranges: Vec<(GameId, GameId)>,
}

impl GameSet {
    pub fn all() -> Self {
        GameSet {
            all: true,
            ranges: Vec::new(),
        }
    }

    /// `lo..=hi`; empty when `lo > hi`.
    pub fn range(lo: GameId, hi: GameId) -> Self {
        GameSet {
            all: false,
            ranges: if lo <= hi { vec![(lo, hi)] } else { Vec::new() },
        }
    }

    /// Explicit ids, merged into runs.
    pub fn from_ids(ids: impl IntoIterator<Item = GameId>) -> Self {
        let mut ids: Vec<GameId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let mut ranges: Vec<(GameId, GameId)> = Vec::new();
        for id in ids {
            match ranges.last_mut() {
                Some(r) if r.1 + 1 == id => r.1 = id,
                _ => ranges.push((id, id)),
            }
        }
        GameSet { all: false, ranges }
    }

    pub fn contains(&self, game: GameId) -> bool {
        self.all || self.ranges.iter().any(|&(lo, hi)| lo <= game && game <= hi)
    }

    pub fn is_empty(&self) -> bool {
        !self.all && self.ranges.is_empty()
    }

    pub fn overlaps(&self, other: &GameSet) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        if self.all || other.all {
            return true;
        }
        self.ranges
            .iter()
            .any(|&(a, b)| other.ranges.iter().any(|&(c, d)| a <= d && c <= b))
    }
}

impl FromStr for GameSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "*" {
            return Ok(GameSet::all());
        }
        let mut ranges = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |v: &str| {
                v.trim()
                    .parse::<GameId>()
                    .map_err(|_| format!("bad game id {v:?} in {s:?}"))
            };
            let (lo, hi) = match part.split_once('-') {
                Some((a, b)) => (parse(a)?, parse(b)?),
                None => {
                    let v = parse(part)?;
                    (v, v)
                }
            };
            if lo > hi {
                return Err(format!("empty range {part:?}"));
            }
            ranges.push((lo, hi));
        }
        Ok(GameSet { all: false, ranges })
    }
}

impl TryFrom<String> for GameSet {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GameSet> for String {
    fn from(g: GameSet) -> Self {
        g.to_string()
    }
}

impl fmt::Display for GameSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.all {
            return f.write_str("*");
        }
        let parts: Vec<String> = self
            .ranges
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo.to_string() } else { format!("{lo}-{hi}") })
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub events: PathBuf,
    pub lineups: PathBuf,
    pub fixtures: PathBuf,
    /// Optional provider code table; the built-in one is used when unset.
    pub taxonomy: Option<PathBuf>,
    /// Optional player names and birth dates.
    pub players: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub cell_length: f64,
    pub cell_width: f64,
    pub no_cluster: bool,
    pub k: usize,
    pub sweep_ks: Vec<usize>,
    pub min_minutes: f64,
    pub train_games: GameSet,
    pub validation_games: GameSet,
    pub test_games: GameSet,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub xg_trees: usize,
    pub strict: bool,
    pub direction: AttackDirection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            events: "events.csv".into(),
            lineups: "lineups.csv".into(),
            fixtures: "fixtures.csv".into(),
            taxonomy: None,
            players: None,
            out_dir: "out".into(),
            cache_dir: None,
            cell_length: 15.0,
            cell_width: 17.0,
            no_cluster: false,
            k: 10,
            sweep_ks: vec![1, 2, 5, 10, 20, 50, 100],
            min_minutes: 900.0,
            train_games: GameSet::range(1, 100),
            validation_games: GameSet::range(101, 150),
            test_games: GameSet::range(151, 200),
            seed: 7,
            threads: 0,
            xg_trees: 500,
            strict: false,
            direction: AttackDirection::Normalized,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.events, &mut cfg.lineups, &mut cfg.fixtures, &mut cfg.out_dir] {
            *p = base.join(&*p);
        }
        for p in [&mut cfg.taxonomy, &mut cfg.players, &mut cfg.cache_dir].into_iter().flatten() {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.sweep_ks.contains(&0) {
            return bad("sweep_ks must be at least 1".into());
        }
        if !(self.cell_length > 0.0 && self.cell_width > 0.0) || !self.cell_length.is_finite() || !self.cell_width.is_finite() {
            return bad(format!(
                "cell size {}x{} must be positive",
                self.cell_length, self.cell_width
            ));
        }
        if !(self.min_minutes >= 0.0) {
            return bad("min_minutes must be non-negative".into());
        }
        if self.xg_trees == 0 {
            return bad("xg_trees must be at least 1".into());
        }
        let splits = [
            ("train", &self.train_games),
            ("validation", &self.validation_games),
            ("test", &self.test_games),
        ];
        for i in 0..splits.len() {
            for j in i + 1..splits.len() {
                if splits[i].1.overlaps(splits[j].1) {
                    return bad(format!("{} and {} games overlap", splits[i].0, splits[j].0));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, PipelineError> {
        if self.no_cluster {
            return Ok(Grid::single());
        }
        Grid::new(self.cell_length, self.cell_width).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Canonical text used for hashing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parses `15x17` into a cell length and width.
pub fn parse_cell(s: &str) -> Result<(f64, f64), String> {
    let (l, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("cell size {s:?} is not LENGTHxWIDTH"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad cell size {s:?}"));
    Ok((num(l)?, num(w)?))
}
