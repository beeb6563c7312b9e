//! Choice estimators: discrete (support size), entropic (state entropy) and
//! immediate (policy entropy), plus their hold-conditioned and empirical
//! model-based variants.
//!
//! Entropies are in nats throughout. Discrete choice is a count.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::TransitionMatrix;
use crate::mdp::{check_distribution, MarkovGame, StateIndex, TabularPolicy};

/// Probabilities at or below this are treated as float dust, not support.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChoiceMethod {
    DiscreteChoice,
    EntropicChoice,
    ImmediateChoice,
}

impl ChoiceMethod {
    pub fn short(self) -> &'static str {
        match self {
            ChoiceMethod::DiscreteChoice => "DC",
            ChoiceMethod::EntropicChoice => "EC",
            ChoiceMethod::ImmediateChoice => "IC",
        }
    }
}

impl fmt::Display for ChoiceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for ChoiceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DC" | "D" => Ok(ChoiceMethod::DiscreteChoice),
            "EC" | "E" => Ok(ChoiceMethod::EntropicChoice),
            "IC" | "I" => Ok(ChoiceMethod::ImmediateChoice),
            _ => Err(Error::Config(format!("unknown choice method {s:?}"))),
        }
    }
}

/// A choice value tagged with how it was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceEstimate {
    pub method: ChoiceMethod,
    pub horizon: usize,
    /// State count for DC, nats for EC and IC.
    pub value: f64,
}

impl ChoiceEstimate {
    /// Value in nats: `ln(count)` for DC, the value itself otherwise.
    pub fn nats(&self) -> f64 {
        match self.method {
            ChoiceMethod::DiscreteChoice => self.value.ln(),
            _ => self.value,
        }
    }
}

/// Shannon entropy in nats, `0 ln 0 = 0`. No validation.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

fn entropy_sparse(support: &[(u32, f64)]) -> f64 {
    support
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| -p * p.ln())
        .sum()
}

fn check_eps(support_eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&support_eps) {
        return Err(Error::Config(format!(
            "support_eps {support_eps} outside [0,1)"
        )));
    }
    Ok(())
}

/// Number of states whose probability exceeds `support_eps`.
pub fn discrete_choice(dist: &[f64], horizon: usize, support_eps: f64) -> Result<ChoiceEstimate> {
    check_eps(support_eps)?;
    check_distribution(dist)?;
    let count = dist.iter().filter(|&&p| p > support_eps).count();
    Ok(ChoiceEstimate {
        method: ChoiceMethod::DiscreteChoice,
        horizon,
        value: count as f64,
    })
}

/// Entropy of the state distribution.
pub fn entropic_choice(dist: &[f64], horizon: usize) -> Result<ChoiceEstimate> {
    check_distribution(dist)?;
    Ok(ChoiceEstimate {
        method: ChoiceMethod::EntropicChoice,
        horizon,
        value: entropy(dist),
    })
}

/// Entropy of the leader's action distribution at `state`.
///
/// Depends only on the leader policy and the state: simultaneous actions of
/// other agents do not enter.
pub fn immediate_choice(policy: &TabularPolicy, state: StateIndex) -> Result<ChoiceEstimate> {
    if state.0 >= policy.states() {
        return Err(Error::StateOutOfRange(state.0));
    }
    Ok(ChoiceEstimate {
        method: ChoiceMethod::ImmediateChoice,
        horizon: 1,
        value: entropy(policy.row(state)),
    })
}

fn check_conditioning(
    game: &MarkovGame,
    state: StateIndex,
    model: &TransitionMatrix,
) -> Result<()> {
    game.check_state(state)?;
    if model.size() != game.state_count() {
        return Err(Error::Dimension {
            what: "transition model",
            expected: game.state_count(),
            found: model.size(),
        });
    }
    if let Some(cond) = model.conditioning() {
        let actual = game.altruist_state(state);
        if actual != Some(cond) {
            return Err(Error::ConditioningMismatch {
                model: cond,
                state: actual,
            });
        }
    }
    Ok(())
}

/// Entropy of `onehot(state) · T^n` with the altruist held at its current
/// state.
pub fn conditional_entropic_choice(
    game: &MarkovGame,
    state: StateIndex,
    n: usize,
    model: &TransitionMatrix,
) -> Result<ChoiceEstimate> {
    check_conditioning(game, state, model)?;
    Ok(ChoiceEstimate {
        method: ChoiceMethod::EntropicChoice,
        horizon: n,
        value: entropy_sparse(&model.propagate_sparse(state, n)),
    })
}

/// Support size of `onehot(state) · T^n` with the altruist held.
pub fn conditional_discrete_choice(
    game: &MarkovGame,
    state: StateIndex,
    n: usize,
    model: &TransitionMatrix,
    support_eps: f64,
) -> Result<ChoiceEstimate> {
    check_eps(support_eps)?;
    check_conditioning(game, state, model)?;
    let count = model
        .propagate_sparse(state, n)
        .iter()
        .filter(|(_, p)| *p > support_eps)
        .count();
    Ok(ChoiceEstimate {
        method: ChoiceMethod::DiscreteChoice,
        horizon: n,
        value: count as f64,
    })
}

/// Conditional choice by method; IC uses the one-step model row.
pub fn conditional_choice(
    method: ChoiceMethod,
    game: &MarkovGame,
    state: StateIndex,
    n: usize,
    model: &TransitionMatrix,
) -> Result<ChoiceEstimate> {
    match method {
        ChoiceMethod::DiscreteChoice => {
            conditional_discrete_choice(game, state, n, model, DEFAULT_SUPPORT_EPS)
        }
        ChoiceMethod::EntropicChoice => conditional_entropic_choice(game, state, n, model),
        ChoiceMethod::ImmediateChoice => {
            let mut e = conditional_entropic_choice(game, state, 1, model)?;
            e.method = ChoiceMethod::ImmediateChoice;
            Ok(e)
        }
    }
}

/// Relative-frequency estimate of the hold-conditioned kernel.
///
/// Only transitions that leave the altruist component unchanged are counted,
/// since `T(s_A)` is conditioned on the altruist holding its state. Rows never
/// observed derive to self-loops.
#[derive(Debug, Clone)]
pub struct EmpiricalTransitionModel {
    altruist_state: Vec<u32>,
    counts: Vec<Vec<(u32, u64)>>,
    visit_totals: Vec<u64>,
}

impl EmpiricalTransitionModel {
    pub fn new(game: &MarkovGame) -> Result<Self> {
        let altruist_state = (0..game.state_count())
            .map(|s| {
                game.altruist_state(StateIndex(s))
                    .ok_or_else(|| Error::InvalidGame("game has no altruist component".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = game.state_count();
        Ok(EmpiricalTransitionModel {
            altruist_state,
            counts: vec![Vec::new(); n],
            visit_totals: vec![0; n],
        })
    }

    pub fn state_count(&self) -> usize {
        self.visit_totals.len()
    }

    /// Records `from -> to`; returns whether it was counted.
    pub fn observe(&mut self, from: StateIndex, to: StateIndex) -> Result<bool> {
        let n = self.state_count();
        if from.0 >= n {
            return Err(Error::StateOutOfRange(from.0));
        }
        if to.0 >= n {
            return Err(Error::StateOutOfRange(to.0));
        }
        if self.altruist_state[from.0] != self.altruist_state[to.0] {
            return Ok(false);
        }
        let row = &mut self.counts[from.0];
        match row.iter_mut().find(|(j, _)| *j as usize == to.0) {
            Some(entry) => entry.1 += 1,
            None => row.push((to.0 as u32, 1)),
        }
        self.visit_totals[from.0] += 1;
        Ok(true)
    }

    pub fn count(&self, from: StateIndex, to: StateIndex) -> u64 {
        self.counts[from.0]
            .iter()
            .find(|(j, _)| *j as usize == to.0)
            .map_or(0, |(_, c)| *c)
    }

    pub fn visits(&self, state: StateIndex) -> u64 {
        self.visit_totals[state.0]
    }

    /// Counted transitions over all rows.
    pub fn total_observed(&self) -> u64 {
        self.visit_totals.iter().sum()
    }

    /// Block-diagonal estimate holding every `T(s_A)` at once.
    pub fn to_matrix(&self) -> TransitionMatrix {
        let rows = self
            .counts
            .iter()
            .zip(&self.visit_totals)
            .enumerate()
            .map(|(i, (row, &total))| {
                if total == 0 {
                    return vec![(i as u32, 1.0)];
                }
                let mut r: Vec<(u32, f64)> = row
                    .iter()
                    .map(|&(j, c)| (j, c as f64 / total as f64))
                    .collect();
                r.sort_by_key(|(j, _)| *j);
                r
            })
            .collect();
        TransitionMatrix::from_sparse_rows(self.state_count(), rows, None)
            .expect("normalised counts are row-stochastic")
    }
}

/// Agreement between an empirical model and a reference kernel over the
/// rows the model has seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFidelity {
    pub visited_rows: usize,
    pub max_total_variation: f64,
    pub worst_row: Option<StateIndex>,
    /// Visited rows whose total variation exceeds the tolerance.
    pub rows_over_tolerance: usize,
}

impl EmpiricalTransitionModel {
    /// Row-wise total variation against `reference` on every visited row,
    /// optionally only rows with at least `min_visits` counted transitions.
    pub fn fidelity(
        &self,
        reference: &TransitionMatrix,
        tolerance: f64,
        min_visits: u64,
    ) -> Result<ModelFidelity> {
        if reference.size() != self.state_count() {
            return Err(Error::Dimension {
                what: "reference kernel",
                expected: self.state_count(),
                found: reference.size(),
            });
        }
        let estimate = self.to_matrix();
        let mut out = ModelFidelity {
            visited_rows: 0,
            max_total_variation: 0.0,
            worst_row: None,
            rows_over_tolerance: 0,
        };
        for s in (0..self.state_count()).map(StateIndex) {
            let v = self.visits(s);
            if v == 0 || v < min_visits {
                continue;
            }
            out.visited_rows += 1;
            let tv = estimate.row_total_variation(reference, s);
            if tv > tolerance {
                out.rows_over_tolerance += 1;
            }
            if out.worst_row.is_none() || tv > out.max_total_variation {
                out.max_total_variation = tv;
                out.worst_row = Some(s);
            }
        }
        Ok(out)
    }
}

/// Plug-in entropy of the final-state histogram of `num_samples` rollouts.
pub fn monte_carlo_entropic_choice(
    game: &MarkovGame,
    policies: &[&TabularPolicy],
    state: StateIndex,
    n: usize,
    num_samples: usize,
    seed: u64,
) -> Result<ChoiceEstimate> {
    if num_samples == 0 {
        return Err(Error::Config("num_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = vec![0u64; game.state_count()];
    for _ in 0..num_samples {
        let path = game.sample_rollout_with(policies, state, n, &mut rng)?;
        hist[path[n].0] += 1;
    }
    let total = num_samples as f64;
    let value = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(ChoiceEstimate {
        method: ChoiceMethod::EntropicChoice,
        horizon: n,
        value,
    })
}
