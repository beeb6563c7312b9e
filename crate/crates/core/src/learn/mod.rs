//! Tabular Q-learning for the leader and the altruist.

pub mod config;
pub mod evaluate;
pub mod qtable;
pub mod train;
pub mod view;

pub use config::{AltruistReward, LeaderBehavior, TrainConfig};
pub use evaluate::{
    evaluate_foraging, evaluate_gridworld, foraging_metrics, grid_metrics, rollouts, Episode,
    ForagingMetrics, GridMetrics,
};
pub use qtable::{softmax_policy, QTable};
pub use train::{
    pretrain_leader, pretrain_pair, train_altruist, AltruistTraining, Checkpoints, Convergence,
    FrozenLeader, LeaderTraining, PairTraining,
};
pub use view::StateView;
