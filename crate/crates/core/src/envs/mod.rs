//! Deterministic multi-agent environments exposed as Markov games.

pub mod foraging;
pub mod grid;
pub mod heatmap;
pub mod map;

pub use foraging::{build_foraging, ForagingConfig, ForagingState, ForagingWorld};
pub use grid::{build_gridworld, GridOptions, GridState, GridWorld, Scenario, ACTION_COUNT, STAY};
pub use heatmap::{leader_heatmap, HeatmapCell};
pub use map::{Cell, GridMap, MapError};
