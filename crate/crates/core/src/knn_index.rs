//! Origin-destination clustering of labeled subsequences and k-NN expected
//! reward queries under DTW distance.
//!
//! The pitch is cut into a grid; a subsequence belongs to the cluster named
//! by the cell it starts in and the cell it ends in. Queries only search
//! their own cluster. When that cluster is empty the search widens to the
//! clusters with the same origin and a destination cell adjacent to the
//! query's, and finally falls back to the global mean label.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use thiserror::Error;

use crate::event_model::{PitchPoint, PITCH_LENGTH, PITCH_WIDTH};
use crate::possession::{SequenceRef, Subsequence};
use crate::traj::{interpolate, subseq_distance_unchecked, TrajError, Trajectory};

pub const DEFAULT_CELL_LENGTH: f64 = 15.0;
pub const DEFAULT_CELL_WIDTH: f64 = 17.0;

const MAGIC: &[u8; 4] = b"PVIX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("point ({x}, {y}) is off the pitch")]
    OffPitch { x: f64, y: f64 },

    #[error("cell size {length} x {width} must be positive")]
    BadCell { length: f64, width: f64 },

    #[error("empty subsequence")]
    EmptySubsequence,

    #[error(transparent)]
    Traj(#[from] TrajError),

    #[error("index file is not an index cache")]
    BadMagic,

    #[error("index file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("index file is corrupt: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub col: usize,
    pub row: usize,
}

/// Rectangular grid over the pitch. The last row and column absorb the
/// remainder when the cell size does not divide the pitch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub cell_length: f64,
    pub cell_width: f64,
    pub cols: usize,
    pub rows: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid::new(DEFAULT_CELL_LENGTH, DEFAULT_CELL_WIDTH).expect("default grid")
    }
}

impl Grid {
    pub fn new(cell_length: f64, cell_width: f64) -> Result<Self, IndexError> {
        if !(cell_length > 0.0 && cell_width > 0.0) || !cell_length.is_finite() || !cell_width.is_finite() {
            return Err(IndexError::BadCell {
                length: cell_length,
                width: cell_width,
            });
        }
        let cols = ((PITCH_LENGTH / cell_length).ceil() as usize).max(1);
        let rows = ((PITCH_WIDTH / cell_width).ceil() as usize).max(1);
        Ok(Grid {
            cell_length,
            cell_width,
            cols,
            rows,
        })
    }

    /// One cell covering the whole pitch: exhaustive search.
    pub fn single() -> Self {
        Grid {
            cell_length: PITCH_LENGTH,
            cell_width: PITCH_WIDTH,
            cols: 1,
            rows: 1,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn cluster_count(&self) -> usize {
        self.cell_count() * self.cell_count()
    }

    pub fn cell_of(&self, p: PitchPoint) -> Result<GridCell, IndexError> {
        if !(0.0..=PITCH_LENGTH).contains(&p.x) || !(0.0..=PITCH_WIDTH).contains(&p.y) {
            return Err(IndexError::OffPitch { x: p.x, y: p.y });
        }
        let col = ((p.x / self.cell_length).floor() as usize).min(self.cols - 1);
        let row = ((p.y / self.cell_width).floor() as usize).min(self.rows - 1);
        Ok(GridCell { col, row })
    }

    pub fn cell_index(&self, c: GridCell) -> usize {
        c.col * self.rows + c.row
    }

    pub fn cell_at(&self, index: usize) -> GridCell {
        GridCell {
            col: index / self.rows,
            row: index % self.rows,
        }
    }

    pub fn key(&self, origin: GridCell, destination: GridCell) -> ClusterKey {
        ClusterKey((self.cell_index(origin) * self.cell_count() + self.cell_index(destination)) as u32)
    }

    pub fn split_key(&self, key: ClusterKey) -> (GridCell, GridCell) {
        let k = key.0 as usize;
        (self.cell_at(k / self.cell_count()), self.cell_at(k % self.cell_count()))
    }

    /// Up to eight cells around `c`, excluding `c`, in column-major order.
    pub fn neighbors(&self, c: GridCell) -> Vec<GridCell> {
        let mut out = Vec::with_capacity(8);
        for dc in -1i64..=1 {
            for dr in -1i64..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                if col >= 0 && row >= 0 && (col as usize) < self.cols && (row as usize) < self.rows {
                    out.push(GridCell {
                        col: col as usize,
                        row: row as usize,
                    });
                }
            }
        }
        out
    }
}

/// Origin-destination cluster id: `origin * cells + destination`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterKey(pub u32);

pub fn cluster_key(grid: &Grid, sub: &Subsequence<'_>) -> Result<ClusterKey, IndexError> {
    let first = sub.events.first().ok_or(IndexError::EmptySubsequence)?;
    let last = sub.last();
    Ok(grid.key(grid.cell_of(first.start)?, grid.cell_of(last.end)?))
}

/// A stored training subsequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub source: SequenceRef,
    /// Position in the training corpus; breaks distance ties.
    pub order: u32,
    pub traj: Trajectory,
    pub label: f64,
}

/// Where the neighbors of a query came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Cluster,
    /// Same origin, adjacent destination cells.
    Widened,
    /// Nothing to search; the global mean label was used.
    Global,
}

/// Nearest neighbors of one query, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    /// `(distance, label)` pairs.
    pub hits: Vec<(f64, f64)>,
    pub pool: Pool,
    pub distance_computations: usize,
    global_mean: f64,
}

impl Neighbors {
    /// Mean label of the `k` closest hits, or of all hits when fewer exist.
    pub fn mean_label(&self, k: usize) -> f64 {
        let k = k.min(self.hits.len());
        if k == 0 {
            return self.global_mean;
        }
        self.hits[..k].iter().map(|&(_, l)| l).sum::<f64>() / k as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    grid: Grid,
    clusters: Vec<Vec<Entry>>,
    len: usize,
    global_mean_label: f64,
}

impl ClusterIndex {
    /// Indexes labeled subsequences in the given order.
    pub fn build(grid: Grid, subs: &[Subsequence<'_>]) -> Result<Self, IndexError> {
        let prepared: Vec<(ClusterKey, Trajectory)> = subs
            .par_iter()
            .map(|s| Ok((cluster_key(&grid, s)?, interpolate(s.events)?)))
            .collect::<Result<_, IndexError>>()?;
        let mut index = ClusterIndex::empty(grid);
        for (order, (sub, (key, traj))) in subs.iter().zip(prepared).enumerate() {
            index.clusters[key.0 as usize].push(Entry {
                source: sub.parent,
                order: order as u32,
                traj,
                label: sub.label,
            });
        }
        index.len = subs.len();
        index.global_mean_label = mean(subs.iter().map(|s| s.label), subs.len());
        Ok(index)
    }

    pub fn empty(grid: Grid) -> Self {
        ClusterIndex {
            grid,
            clusters: vec![Vec::new(); grid.cluster_count()],
            len: 0,
            global_mean_label: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn global_mean_label(&self) -> f64 {
        self.global_mean_label
    }

    pub fn cluster(&self, key: ClusterKey) -> &[Entry] {
        &self.clusters[key.0 as usize]
    }

    pub fn cluster_sizes(&self) -> impl Iterator<Item = (ClusterKey, usize)> + '_ {
        self.clusters
            .iter()
            .enumerate()
            .map(|(k, c)| (ClusterKey(k as u32), c.len()))
    }

    pub fn non_empty_clusters(&self) -> usize {
        self.clusters.iter().filter(|c| !c.is_empty()).count()
    }

    /// Stored subsequences per cluster, over all possible clusters.
    pub fn mean_cluster_size(&self) -> f64 {
        self.len as f64 / self.clusters.len() as f64
    }

    /// The `k` nearest stored trajectories to `traj` within `key`'s cluster,
    /// applying the sparse-cluster fallback. Entries from `exclude` are
    /// skipped.
    pub fn neighbors(
        &self,
        traj: &Trajectory,
        key: ClusterKey,
        k: usize,
        exclude: Option<SequenceRef>,
    ) -> Neighbors {
        let keep = |e: &&Entry| exclude != Some(e.source);
        let own: Vec<&Entry> = self.clusters[key.0 as usize].iter().filter(keep).collect();
        let (pool, kind) = if !own.is_empty() {
            (own, Pool::Cluster)
        } else {
            let (origin, dest) = self.grid.split_key(key);
            let mut widened: Vec<&Entry> = self
                .grid
                .neighbors(dest)
                .into_iter()
                .flat_map(|d| self.clusters[self.grid.key(origin, d).0 as usize].iter())
                .filter(keep)
                .collect();
            widened.sort_by_key(|e| e.order);
            if widened.is_empty() {
                (widened, Pool::Global)
            } else {
                (widened, Pool::Widened)
            }
        };

        let mut scored: Vec<(f64, u32, f64)> = pool
            .iter()
            .map(|e| (subseq_distance_unchecked(traj, &e.traj), e.order, e.label))
            .collect();
        let computations = scored.len();
        let by_distance = |a: &(f64, u32, f64), b: &(f64, u32, f64)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k > 0 && k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_distance);
            scored.truncate(k);
        }
        scored.sort_by(by_distance);
        Neighbors {
            hits: scored.into_iter().map(|(d, _, l)| (d, l)).collect(),
            pool: kind,
            distance_computations: computations,
            global_mean: self.global_mean_label,
        }
    }

    /// k-NN expected reward of a subsequence.
    pub fn expected_reward(&self, query: &Subsequence<'_>, k: usize) -> Result<f64, IndexError> {
        let traj = interpolate(query.events)?;
        let key = cluster_key(&self.grid, query)?;
        Ok(self.neighbors(&traj, key, k, None).mean_label(k))
    }

    /// Writes the index cache file.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_FORMAT_VERSION)?;
        w.write_f64::<LittleEndian>(PITCH_LENGTH)?;
        w.write_f64::<LittleEndian>(PITCH_WIDTH)?;
        w.write_f64::<LittleEndian>(self.grid.cell_length)?;
        w.write_f64::<LittleEndian>(self.grid.cell_width)?;
        w.write_u32::<LittleEndian>(self.grid.cols as u32)?;
        w.write_u32::<LittleEndian>(self.grid.rows as u32)?;
        w.write_u64::<LittleEndian>(self.len as u64)?;
        w.write_f64::<LittleEndian>(self.global_mean_label)?;
        w.write_u32::<LittleEndian>(self.non_empty_clusters() as u32)?;
        for (k, cluster) in self.clusters.iter().enumerate().filter(|(_, c)| !c.is_empty()) {
            w.write_u32::<LittleEndian>(k as u32)?;
            w.write_u32::<LittleEndian>(cluster.len() as u32)?;
            for e in cluster {
                w.write_u64::<LittleEndian>(e.source.game_id)?;
                w.write_u32::<LittleEndian>(e.source.sequence_id)?;
                w.write_u32::<LittleEndian>(e.order)?;
                w.write_f64::<LittleEndian>(e.label)?;
                w.write_u32::<LittleEndian>(e.traj.xs.len() as u32)?;
                for &x in &e.traj.xs {
                    w.write_f64::<LittleEndian>(x)?;
                }
                for &y in &e.traj.ys {
                    w.write_f64::<LittleEndian>(y)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(IndexError::Version {
                found: version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let (pl, pw) = (r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?);
        if pl != PITCH_LENGTH || pw != PITCH_WIDTH {
            return Err(IndexError::Corrupt(format!("pitch {pl} x {pw}")));
        }
        let cell_length = r.read_f64::<LittleEndian>()?;
        let cell_width = r.read_f64::<LittleEndian>()?;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let grid = if cols == 1 && rows == 1 {
            Grid::single()
        } else {
            Grid::new(cell_length, cell_width)?
        };
        if grid.cols != cols || grid.rows != rows {
            return Err(IndexError::Corrupt("grid dimensions disagree with cell size".into()));
        }
        let len = r.read_u64::<LittleEndian>()? as usize;
        let global_mean_label = r.read_f64::<LittleEndian>()?;
        let n_clusters = r.read_u32::<LittleEndian>()? as usize;

        let mut index = ClusterIndex::empty(grid);
        let mut seen = 0usize;
        for _ in 0..n_clusters {
            let key = r.read_u32::<LittleEndian>()? as usize;
            if key >= index.clusters.len() {
                return Err(IndexError::Corrupt(format!("cluster key {key} out of range")));
            }
            let count = r.read_u32::<LittleEndian>()? as usize;
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let game_id = r.read_u64::<LittleEndian>()?;
                let sequence_id = r.read_u32::<LittleEndian>()?;
                let order = r.read_u32::<LittleEndian>()?;
                let label = r.read_f64::<LittleEndian>()?;
                let n = r.read_u32::<LittleEndian>()? as usize;
                let mut xs = vec![0.0; n];
                r.read_f64_into::<LittleEndian>(&mut xs)?;
                let mut ys = vec![0.0; n];
                r.read_f64_into::<LittleEndian>(&mut ys)?;
                entries.push(Entry {
                    source: SequenceRef {
                        game_id,
                        sequence_id,
                    },
                    order,
                    traj: Trajectory { xs, ys },
                    label,
                });
            }
            seen += count;
            index.clusters[key] = entries;
        }
        if seen != len {
            return Err(IndexError::Corrupt(format!("header says {len} entries, found {seen}")));
        }
        index.len = len;
        index.global_mean_label = global_mean_label;
        Ok(index)
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}
