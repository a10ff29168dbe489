//! Player look-alikes over three pass metrics.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::event_model::{PlayerId, PlayerInfo};
use crate::valuation::PlayerRating;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("player {0} is not in the rated pool")]
    UnknownTarget(PlayerId),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityFilter {
    /// ISO date; players born on or before it, or without a birth date, are dropped.
    pub born_after: Option<String>,
    pub min_minutes: f64,
}

/// Min-max normalized (contribution_p90, passes_p90, pass_accuracy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerVector {
    pub player_id: PlayerId,
    pub v: [f64; 3],
}

fn metrics(r: &PlayerRating) -> [f64; 3] {
    [r.contribution_p90, r.passes_p90, r.pass_accuracy]
}

/// Normalizes each metric to [0, 1] over `pool`. A metric that is constant
/// over the pool maps to 0 for everyone.
pub fn normalize(pool: &[&PlayerRating]) -> Vec<PlayerVector> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for r in pool {
        for (i, m) in metrics(r).into_iter().enumerate() {
            lo[i] = lo[i].min(m);
            hi[i] = hi[i].max(m);
        }
    }
    pool.iter()
        .map(|r| {
            let m = metrics(r);
            let v = std::array::from_fn(|i| {
                let span = hi[i] - lo[i];
                if span > 0.0 {
                    (m[i] - lo[i]) / span
                } else {
                    0.0
                }
            });
            PlayerVector {
                player_id: r.player_id,
                v,
            }
        })
        .collect()
}

pub fn similarity(a: &PlayerVector, b: &PlayerVector) -> f64 {
    let d: f64 = a.v.iter().zip(&b.v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    (1.0 - d / 3f64.sqrt()).clamp(0.0, 1.0)
}

/// The `top_n` players closest to `target`, best first, ties by player id.
///
/// The target always stays in the normalization pool but never appears in
/// the result.
pub fn similar_players(
    target: PlayerId,
    pool: &[PlayerRating],
    filter: &SimilarityFilter,
    players: &BTreeMap<PlayerId, PlayerInfo>,
    top_n: usize,
) -> Result<Vec<(PlayerId, f64)>, SimilarityError> {
    let target_rating = pool
        .iter()
        .find(|r| r.player_id == target)
        .ok_or(SimilarityError::UnknownTarget(target))?;
    let keep = |r: &PlayerRating| {
        if r.minutes < filter.min_minutes {
            return false;
        }
        match &filter.born_after {
            None => true,
            Some(date) => players
                .get(&r.player_id)
                .and_then(|p| p.birth_date.as_deref())
                .is_some_and(|b| b > date.as_str()),
        }
    };
    let mut members = vec![target_rating];
    members.extend(pool.iter().filter(|r| r.player_id != target && keep(r)));

    let vectors = normalize(&members);
    let mut scored: Vec<(PlayerId, f64)> = vectors[1..]
        .iter()
        .map(|v| (v.player_id, similarity(&vectors[0], v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_n);
    Ok(scored)
}
