//! Flat `key = value` overrides for [`TrainConfig`].

use choicelab::learn::{AltruistReward, LeaderBehavior, TrainConfig};
use choicelab::ChoiceMethod;

use crate::error::{HarnessError, Result};

pub const KEYS: [&str; 16] = [
    "env_steps",
    "episode_len",
    "learning_rate",
    "epsilon_start",
    "epsilon_final",
    "epsilon_decay_fraction",
    "discount",
    "seed",
    "reward",
    "horizon",
    "altruist_discount",
    "model_refresh",
    "ic_temperature",
    "leader_behavior",
    "convergence_window",
    "exploring_starts",
];

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; repeated and unknown keys are errors.
pub fn parse_overrides(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(HarnessError::Config(format!(
                "line {}: unknown key {k:?}",
                i + 1
            )));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(HarnessError::Config(format!(
                "line {}: duplicate key {k:?}",
                i + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_reward(value: &str) -> Result<AltruistReward> {
    if value.eq_ignore_ascii_case("shared") {
        return Ok(AltruistReward::Shared);
    }
    let m: ChoiceMethod = value.parse()?;
    Ok(AltruistReward::Choice(m))
}

pub fn apply(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "env_steps" => config.env_steps = num(key, value)?,
        "episode_len" => config.episode_len = num(key, value)?,
        "learning_rate" => config.learning_rate = num(key, value)?,
        "epsilon_start" => config.epsilon_start = num(key, value)?,
        "epsilon_final" => config.epsilon_final = num(key, value)?,
        "epsilon_decay_fraction" => config.epsilon_decay_fraction = num(key, value)?,
        "discount" => config.discount = num(key, value)?,
        "seed" => config.seed = num(key, value)?,
        "reward" => config.reward = parse_reward(value)?,
        "horizon" => {
            config.horizon = if value.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(num(key, value)?)
            }
        }
        "altruist_discount" => config.altruist_discount = num(key, value)?,
        "model_refresh" => config.model_refresh = num(key, value)?,
        "ic_temperature" => config.ic_temperature = num(key, value)?,
        "leader_behavior" => config.leader_behavior = value.parse::<LeaderBehavior>()?,
        "convergence_window" => config.convergence_window = num(key, value)?,
        "exploring_starts" => config.exploring_starts = num(key, value)?,
        _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Applies every override, then validates the result.
pub fn apply_all(config: &mut TrainConfig, overrides: &[(String, String)]) -> Result<()> {
    for (k, v) in overrides {
        apply(config, k, v)?;
    }
    config.validate()?;
    Ok(())
}

/// The configuration as `key = value` lines, in [`KEYS`] order.
pub fn render(config: &TrainConfig) -> String {
    let horizon = config.horizon.map_or("none".to_string(), |h| h.to_string());
    let values = [
        config.env_steps.to_string(),
        config.episode_len.to_string(),
        config.learning_rate.to_string(),
        config.epsilon_start.to_string(),
        config.epsilon_final.to_string(),
        config.epsilon_decay_fraction.to_string(),
        config.discount.to_string(),
        config.seed.to_string(),
        config.reward.to_string(),
        horizon,
        config.altruist_discount.to_string(),
        config.model_refresh.to_string(),
        config.ic_temperature.to_string(),
        config.leader_behavior.to_string(),
        config.convergence_window.to_string(),
        config.exploring_starts.to_string(),
    ];
    KEYS.iter()
        .zip(values)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
