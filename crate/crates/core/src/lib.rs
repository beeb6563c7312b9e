//! Tabular Markov games, choice estimators and altruistic Q-learning.
//!
//! An altruist agent is trained to maximise how much choice a leader agent
//! has over its own future states, without ever seeing the leader's reward.

pub mod choice;
pub mod envs;
pub mod error;
pub mod kernel;
pub mod learn;
pub mod mdp;

pub use choice::{ChoiceEstimate, ChoiceMethod, EmpiricalTransitionModel, ModelFidelity};
pub use error::{Error, Result};
pub use kernel::TransitionMatrix;
pub use mdp::{
    GameSpec, JointAction, MarkovGame, OneHotState, StateDistribution, StateIndex, TabularPolicy,
};
