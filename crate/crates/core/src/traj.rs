//! Ball trajectories sampled once per second, and DTW distances between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{Event, PitchPoint};

/// Nominal flight time of the last event of a subsequence, in seconds.
pub const NOMINAL_PASS_SECONDS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("no events to interpolate")]
    Empty,

    #[error("timestamps go backwards at anchor {index} ({from} -> {to})")]
    NonMonotone { index: usize, from: f64, to: f64 },

    #[error("DTW needs two non-empty series")]
    EmptySeries,
}

/// Ball location at a point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub t: f64,
    pub p: PitchPoint,
}

/// Ball path resampled at one-second intervals. Always at least two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn first(&self) -> PitchPoint {
        PitchPoint {
            x: self.xs[0],
            y: self.ys[0],
        }
    }

    pub fn last(&self) -> PitchPoint {
        let n = self.xs.len() - 1;
        PitchPoint {
            x: self.xs[n],
            y: self.ys[n],
        }
    }
}

/// Anchor points of the ball path through `events`.
///
/// An event whose start and end differ contributes `(t, start)` and
/// `(t_next, end)`, where `t_next` is the next event's timestamp, or
/// `t + NOMINAL_PASS_SECONDS` for the last event. Other events contribute
/// `(t, start)` only.
pub fn anchors(events: &[Event]) -> Vec<Anchor> {
    let mut out = Vec::with_capacity(events.len() * 2);
    for (i, e) in events.iter().enumerate() {
        out.push(Anchor {
            t: e.timestamp,
            p: e.start,
        });
        if e.start != e.end {
            let t_next = events
                .get(i + 1)
                .map_or(e.timestamp + NOMINAL_PASS_SECONDS, |n| n.timestamp);
            out.push(Anchor { t: t_next, p: e.end });
        }
    }
    out
}

/// Samples the piecewise-linear path through `anchors` at `t0, t0 + 1, ...`,
/// always ending on the final anchor.
pub fn interpolate_anchors(anchors: &[Anchor]) -> Result<Trajectory, TrajError> {
    let first = anchors.first().ok_or(TrajError::Empty)?;
    for (i, w) in anchors.windows(2).enumerate() {
        if !(w[1].t >= w[0].t) {
            return Err(TrajError::NonMonotone {
                index: i + 1,
                from: w[0].t,
                to: w[1].t,
            });
        }
    }
    let last = anchors[anchors.len() - 1];
    let duration = last.t - first.t;
    let steps = duration.floor() as usize;

    let mut xs = Vec::with_capacity(steps + 2);
    let mut ys = Vec::with_capacity(steps + 2);
    let mut seg = 0;
    for k in 0..=steps {
        let t = first.t + k as f64;
        // first segment whose end is at or after t
        while seg + 1 < anchors.len() - 1 && anchors[seg + 1].t < t {
            seg += 1;
        }
        let p = position_at(anchors, seg, t);
        xs.push(p.x);
        ys.push(p.y);
    }
    if (steps as f64) < duration || xs.len() < 2 {
        xs.push(last.p.x);
        ys.push(last.p.y);
    }
    Ok(Trajectory { xs, ys })
}

fn position_at(anchors: &[Anchor], seg: usize, t: f64) -> PitchPoint {
    if anchors.len() == 1 {
        return anchors[0].p;
    }
    let (a, b) = (anchors[seg], anchors[seg + 1]);
    let span = b.t - a.t;
    if span <= 0.0 {
        // several anchors at one instant: the earliest wins
        return a.p;
    }
    let w = ((t - a.t) / span).clamp(0.0, 1.0);
    PitchPoint {
        x: a.p.x + w * (b.p.x - a.p.x),
        y: a.p.y + w * (b.p.y - a.p.y),
    }
}

/// Trajectory of a run of events (typically a possession subsequence).
pub fn interpolate(events: &[Event]) -> Result<Trajectory, TrajError> {
    interpolate_anchors(&anchors(events))
}

/// Unconstrained DTW with absolute-difference step cost.
///
/// Runs in `O(a.len() * b.len())` time with two rolling rows.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64, TrajError> {
    if a.is_empty() || b.is_empty() {
        return Err(TrajError::EmptySeries);
    }
    Ok(dtw_unchecked(a, b))
}

pub(crate) fn dtw_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];

    let mut acc = 0.0;
    for j in 0..m {
        acc += (a[0] - b[j]).abs();
        prev[j] = acc;
    }
    for &ai in &a[1..] {
        cur[0] = prev[0] + (ai - b[0]).abs();
        for j in 1..m {
            let best = prev[j].min(prev[j - 1]).min(cur[j - 1]);
            cur[j] = best + (ai - b[j]).abs();
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// DTW on x plus DTW on y.
pub fn subseq_distance(p: &Trajectory, q: &Trajectory) -> Result<f64, TrajError> {
    Ok(dtw_distance(&p.xs, &q.xs)? + dtw_distance(&p.ys, &q.ys)?)
}

pub(crate) fn subseq_distance_unchecked(p: &Trajectory, q: &Trajectory) -> f64 {
    dtw_unchecked(&p.xs, &q.xs) + dtw_unchecked(&p.ys, &q.ys)
}
