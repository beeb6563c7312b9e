use std::fmt;
use std::str::FromStr;

use crate::choice::ChoiceMethod;
use crate::envs::grid::GRID_EPISODE_LEN;
use crate::error::{Error, Result};

/// How the frozen leader picks actions while the altruist trains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeaderBehavior {
    Greedy,
    EpsilonGreedy(f64),
    Softmax(f64),
}

impl fmt::Display for LeaderBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeaderBehavior::Greedy => write!(f, "greedy"),
            LeaderBehavior::EpsilonGreedy(e) => write!(f, "epsilon:{e}"),
            LeaderBehavior::Softmax(t) => write!(f, "softmax:{t}"),
        }
    }
}

impl FromStr for LeaderBehavior {
    type Err = Error;

    /// `greedy`, `epsilon:<ε>` or `softmax:<τ>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown leader behaviour {s:?}"));
        if s == "greedy" {
            return Ok(LeaderBehavior::Greedy);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = value.parse().map_err(|_| bad())?;
        match kind {
            "epsilon" => Ok(LeaderBehavior::EpsilonGreedy(v)),
            "softmax" => Ok(LeaderBehavior::Softmax(v)),
            _ => Err(bad()),
        }
    }
}

/// Signal the altruist is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltruistReward {
    /// Leader choice at the post-transition state.
    Choice(ChoiceMethod),
    /// The leader's own environment reward (the "supervised" baseline).
    Shared,
}

impl fmt::Display for AltruistReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AltruistReward::Choice(m) => write!(f, "{}", m.short()),
            AltruistReward::Shared => write!(f, "shared"),
        }
    }
}

/// Q-learning hyperparameters shared by both training phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env_steps: usize,
    pub episode_len: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    /// Fraction of `env_steps` over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Leader discount γ.
    pub discount: f64,
    pub seed: u64,
    pub reward: AltruistReward,
    /// Look-ahead n for DC and EC rewards.
    pub horizon: Option<usize>,
    /// Altruist discount γ_a.
    pub altruist_discount: f64,
    /// Steps between rebuilds of the empirical transition model.
    pub model_refresh: usize,
    /// Softmax temperature of the leader policy used for IC rewards.
    pub ic_temperature: f64,
    pub leader_behavior: LeaderBehavior,
    /// Window (in steps) of the convergence diagnostic.
    pub convergence_window: usize,
    /// Start each pretraining episode from a uniformly drawn reachable
    /// state instead of the scenario's spawn.
    pub exploring_starts: bool,
}

impl TrainConfig {
    /// Tabular gridworld settings: 300k steps, episodes of 25, lr 0.01,
    /// constant ε 0.1, γ 0.9.
    pub fn gridworld() -> Self {
        TrainConfig {
            env_steps: 300_000,
            episode_len: GRID_EPISODE_LEN,
            learning_rate: 0.01,
            epsilon_start: 0.1,
            epsilon_final: 0.1,
            epsilon_decay_fraction: 0.0,
            discount: 0.9,
            seed: 0,
            reward: AltruistReward::Choice(ChoiceMethod::EntropicChoice),
            horizon: Some(12),
            altruist_discount: 0.7,
            model_refresh: 1_000,
            ic_temperature: 1.0,
            leader_behavior: LeaderBehavior::EpsilonGreedy(0.1),
            convergence_window: 10_000,
            exploring_starts: true,
        }
    }

    /// Tabular foraging settings: episodes of 15, ε 1.0 → 0.2 over the first
    /// 80% of steps, γ 0.9. The learning rate is larger than a deep-Q step
    /// size because every table entry is updated individually. The IC
    /// temperature is small because foraging values differ by fractions of
    /// a reward; at τ = 1 every policy is close to uniform. Exploring starts
    /// give the leader a meaningful table away from its usual trajectory;
    /// unvisited states would otherwise look maximally undecided.
    pub fn foraging() -> Self {
        TrainConfig {
            env_steps: 1_000_000,
            episode_len: 15,
            learning_rate: 0.1,
            epsilon_start: 1.0,
            epsilon_final: 0.2,
            epsilon_decay_fraction: 0.8,
            discount: 0.9,
            seed: 0,
            reward: AltruistReward::Choice(ChoiceMethod::ImmediateChoice),
            horizon: None,
            altruist_discount: 0.9,
            model_refresh: 1_000,
            ic_temperature: 0.01,
            leader_behavior: LeaderBehavior::Greedy,
            convergence_window: 10_000,
            exploring_starts: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.env_steps == 0 {
            return fail("env_steps must be positive".into());
        }
        if self.episode_len == 0 {
            return fail("episode_len must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail(format!(
                "learning_rate {} outside (0,1]",
                self.learning_rate
            ));
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_final", self.epsilon_final),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return fail(format!("{name} {e} outside [0,1]"));
            }
        }
        for (name, g) in [
            ("discount", self.discount),
            ("altruist_discount", self.altruist_discount),
        ] {
            if !(0.0..1.0).contains(&g) {
                return fail(format!("{name} {g} outside [0,1)"));
            }
        }
        if self.model_refresh == 0 {
            return fail("model_refresh must be positive".into());
        }
        if self.ic_temperature <= 0.0 || !self.ic_temperature.is_finite() {
            return fail(format!(
                "ic_temperature {} must be positive",
                self.ic_temperature
            ));
        }
        match self.leader_behavior {
            LeaderBehavior::EpsilonGreedy(e) if !(0.0..=1.0).contains(&e) => {
                return fail(format!("leader epsilon {e} outside [0,1]"));
            }
            LeaderBehavior::Softmax(t) if t <= 0.0 || !t.is_finite() => {
                return fail(format!("leader temperature {t} must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Validation plus the altruist-specific requirements.
    pub fn validate_altruist(&self) -> Result<()> {
        self.validate()?;
        if let AltruistReward::Choice(m) = self.reward {
            let needs_horizon = m != ChoiceMethod::ImmediateChoice;
            match self.horizon {
                None if needs_horizon => {
                    return Err(Error::Config(format!(
                        "{} reward requires a horizon",
                        m.short()
                    )))
                }
                Some(0) => return Err(Error::Config("horizon must be at least 1".into())),
                _ => {}
            }
        }
        Ok(())
    }

    /// ε at global step `step`.
    pub fn epsilon_at(&self, step: usize) -> f64 {
        let span = self.epsilon_decay_fraction * self.env_steps as f64;
        if span <= 0.0 {
            return self.epsilon_final;
        }
        let frac = (step as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_final - self.epsilon_start) * frac
    }
}
