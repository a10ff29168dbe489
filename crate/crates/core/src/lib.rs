//! Pass valuation for football event data.
//!
//! Event streams are split into possession sequences, labeled with the
//! expected-goals value of their final shot, and every pass is valued as the
//! change in k-nearest-neighbor expected reward of its possession
//! subsequence. Player ratings derived from pass values are validated by
//! forecasting match outcomes.

pub mod event_model;
pub mod knn_index;
pub mod possession;
pub mod traj;
pub mod valuation;
pub mod xg;
pub mod outcome_eval;
pub mod similarity;
pub mod synth;
