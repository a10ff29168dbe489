//! Expected-goals model: shot location features and boosted trees.

pub mod gbt;

use thiserror::Error;

use crate::event_model::{Event, PitchPoint, SubKind, PITCH_LENGTH, PITCH_WIDTH};
pub use gbt::{GbtModel, GbtParams};

/// Half the goal mouth, in meters.
pub const GOAL_HALF_WIDTH: f64 = 3.66;
/// Conversion rate used for penalties when training data has none.
pub const DEFAULT_PENALTY_RATE: f64 = 0.76;

#[derive(Debug, Error)]
pub enum XgError {
    #[error("no shots to train on")]
    NoShots,

    #[error("training shots must include both goals and misses")]
    SingleClass,

    #[error("feature rows and targets have inconsistent shapes")]
    Shape,

    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotFeatures {
    pub x: f64,
    pub y: f64,
    /// Distance to the center of the goal mouth.
    pub dist: f64,
    /// Angle subtended by the goal posts, in radians.
    pub angle: f64,
}

impl ShotFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.dist, self.angle]
    }
}

/// Location features of a shot taken at `p`.
///
/// The angle is exactly 0 at a post and exactly pi strictly between the posts
/// on the goal line.
pub fn shot_features(p: PitchPoint) -> ShotFeatures {
    let center_y = PITCH_WIDTH / 2.0;
    let dx = PITCH_LENGTH - p.x;
    let dist = (dx * dx + (center_y - p.y).powi(2)).sqrt();
    // vectors from the shot to each post
    let (ax, ay) = (dx, center_y - GOAL_HALF_WIDTH - p.y);
    let (bx, by) = (dx, center_y + GOAL_HALF_WIDTH - p.y);
    let angle = if (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0) {
        0.0
    } else {
        (ax * by - ay * bx).atan2(ax * bx + ay * by).abs()
    };
    ShotFeatures {
        x: p.x,
        y: p.y,
        dist,
        angle,
    }
}

pub fn train_xg(shots: &[(ShotFeatures, bool)], params: &GbtParams) -> Result<GbtModel, XgError> {
    let rows: Vec<Vec<f64>> = shots.iter().map(|(f, _)| f.as_array().to_vec()).collect();
    let targets: Vec<bool> = shots.iter().map(|&(_, g)| g).collect();
    GbtModel::fit(&rows, &targets, params)
}

pub fn predict_xg(model: &GbtModel, features: &ShotFeatures) -> f64 {
    model.predict(&features.as_array())
}

/// Expected-goals model over shot events.
///
/// Penalties bypass the trees and get the training-set penalty conversion rate.
#[derive(Debug, Clone, PartialEq)]
pub struct XgModel {
    pub trees: GbtModel,
    pub penalty_rate: f64,
}

impl XgModel {
    /// Trains on shot events; a shot is positive when its kind is `Goal`.
    /// Non-shot events are ignored.
    pub fn train<'a, I>(shots: I, params: &GbtParams) -> Result<Self, XgError>
    where
        I: IntoIterator<Item = &'a Event>,
    {
        let mut open_play = Vec::new();
        let (mut penalties, mut scored) = (0usize, 0usize);
        for e in shots.into_iter().filter(|e| e.is_shot()) {
            let goal = e.kind == crate::event_model::EventKind::Goal;
            if e.subkind == SubKind::Penalty {
                penalties += 1;
                scored += usize::from(goal);
            } else {
                open_play.push((shot_features(e.start), goal));
            }
        }
        let penalty_rate = if penalties == 0 {
            DEFAULT_PENALTY_RATE
        } else {
            scored as f64 / penalties as f64
        };
        Ok(XgModel {
            trees: train_xg(&open_play, params)?,
            penalty_rate,
        })
    }

    pub fn predict_shot(&self, shot: &Event) -> f64 {
        if shot.subkind == SubKind::Penalty {
            self.penalty_rate
        } else {
            predict_xg(&self.trees, &shot_features(shot.start))
        }
    }

    pub fn to_text(&self) -> String {
        format!("xg v1\npenalty_rate {}\n{}", self.penalty_rate, self.trees.to_text())
    }

    pub fn from_text(text: &str) -> Result<Self, XgError> {
        let mut parts = text.splitn(3, '\n');
        if parts.next().map(str::trim) != Some("xg v1") {
            return Err(XgError::Format("unsupported xG model header".into()));
        }
        let penalty_rate = parts
            .next()
            .and_then(|l| l.trim().strip_prefix("penalty_rate "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| XgError::Format("missing penalty_rate".into()))?;
        let trees = GbtModel::from_text(parts.next().unwrap_or(""))?;
        Ok(XgModel {
            trees,
            penalty_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn at(x: f64, y: f64) -> ShotFeatures {
        shot_features(PitchPoint { x, y })
    }

    /// Angle subtended by the goal mouth, by summing the angular extent of
    /// many small pieces of the goal line.
    fn sampled_angle(x: f64, y: f64) -> f64 {
        let n = 200_000;
        let lo = 34.0 - GOAL_HALF_WIDTH;
        let step = 2.0 * GOAL_HALF_WIDTH / n as f64;
        (0..n)
            .map(|i| {
                let a = (lo + i as f64 * step - y).atan2(105.0 - x);
                let b = (lo + (i + 1) as f64 * step - y).atan2(105.0 - x);
                (b - a).abs()
            })
            .sum()
    }

    #[test]
    fn goal_center_has_zero_distance() {
        assert_eq!(at(105.0, 34.0).dist, 0.0);
        assert_eq!(at(105.0, 34.0).angle, PI);
    }

    #[test]
    fn penalty_spot() {
        let f = at(94.0, 34.0);
        assert!((f.dist - 11.0).abs() < 1e-12);
        assert!((f.angle - 2.0 * (3.66f64 / 11.0).atan()).abs() < 1e-12);
        assert!((f.angle - 0.6425).abs() < 1e-4);
    }

    #[test]
    fn corner_flag_sees_no_goal() {
        let f = at(105.0, 0.0);
        assert!((f.dist - 34.0).abs() < 1e-12);
        let near = (30.34f64 - 0.0).atan2(0.0);
        let far = (37.66f64 - 0.0).atan2(0.0);
        assert!((f.angle - (near - far).abs()).abs() < 1e-12);
        assert_eq!(f.angle, 0.0);
    }

    #[test]
    fn angle_matches_sampled_oracle() {
        for &(x, y) in &[(94.0, 34.0), (80.0, 10.0), (100.0, 60.0), (30.0, 34.0), (104.0, 31.0)] {
            let f = at(x, y);
            assert!((f.angle - sampled_angle(x, y)).abs() < 1e-9, "({x}, {y})");
        }
    }

    #[test]
    fn at_a_post() {
        assert_eq!(at(105.0, 34.0 - GOAL_HALF_WIDTH).angle, 0.0);
        assert_eq!(at(105.0, 34.0 + GOAL_HALF_WIDTH).angle, 0.0);
        assert_eq!(at(105.0, 33.0).angle, PI);
    }

    #[test]
    fn angle_shrinks_with_distance_on_center_line() {
        let mut prev = PI;
        for i in 1..100 {
            let a = at(105.0 - i as f64, 34.0).angle;
            assert!(a < prev);
            assert!(a >= 0.0);
            prev = a;
        }
    }
}
