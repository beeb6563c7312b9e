//! Finite Markov games over densely enumerated states.
//!
//! A [`MarkovGame`] stores its deterministic joint transition and per-agent
//! rewards as flat tables indexed by `(state, joint action)`. Agent 0 is the
//! leader; agent 1, when present, is the altruist. Every other module works on
//! these tables, so environments only need to enumerate their states once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::TransitionMatrix;

/// Tolerance used for every "sums to one" check.
pub const PROB_TOL: f64 = 1e-9;

/// Dense index of a joint environment state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateIndex(pub usize);

impl StateIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

/// One action id per agent, leader first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn new(actions: Vec<usize>) -> Self {
        JointAction(actions)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Probability vector over the states of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(StateDistribution { probs })
    }

    /// Point mass on `state`.
    pub fn point(state_count: usize, state: StateIndex) -> Result<Self> {
        if state.0 >= state_count {
            return Err(Error::StateOutOfRange(state.0));
        }
        Ok(OneHotState::new(state_count, state)?.into_distribution())
    }

    pub fn uniform(state_count: usize) -> Self {
        assert!(state_count > 0, "uniform distribution over zero states");
        StateDistribution {
            probs: vec![1.0 / state_count as f64; state_count],
        }
    }

    /// Wraps a vector produced by exact propagation; validity is checked in
    /// debug builds only.
    pub(crate) fn from_propagated(probs: Vec<f64>) -> Self {
        debug_assert!(check_distribution(&probs).is_ok());
        StateDistribution { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: StateIndex) -> f64 {
        self.probs[state.0]
    }

    /// Indices with positive mass, in increasing order.
    pub fn support(&self) -> impl Iterator<Item = StateIndex> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| StateIndex(i))
    }

    pub fn total_variation(&self, other: &StateDistribution) -> f64 {
        assert_eq!(self.len(), other.len());
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

pub(crate) fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty vector".into()));
    }
    let mut total = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// One-hot encoding of a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotState {
    len: usize,
    hot: StateIndex,
}

impl OneHotState {
    pub fn new(len: usize, hot: StateIndex) -> Result<Self> {
        if hot.0 >= len {
            return Err(Error::StateOutOfRange(hot.0));
        }
        Ok(OneHotState { len, hot })
    }

    pub fn hot(&self) -> StateIndex {
        self.hot
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        v[self.hot.0] = 1.0;
        v
    }

    pub fn into_distribution(self) -> StateDistribution {
        StateDistribution {
            probs: self.to_vec(),
        }
    }
}

/// Per-state categorical distribution over one agent's actions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if actions == 0 {
            return Err(Error::InvalidPolicy("zero actions".into()));
        }
        if probs.len() != states * actions {
            return Err(Error::Dimension {
                what: "policy entries",
                expected: states * actions,
                found: probs.len(),
            });
        }
        for (s, row) in probs.chunks(actions).enumerate() {
            check_distribution(row).map_err(|e| Error::InvalidPolicy(format!("row {s}: {e}")))?;
        }
        Ok(TabularPolicy { actions, probs })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        TabularPolicy {
            actions,
            probs: vec![1.0 / actions as f64; states * actions],
        }
    }

    /// Deterministic policy taking `choice[s]` in state `s`.
    pub fn deterministic(actions: usize, choice: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; choice.len() * actions];
        for (s, &a) in choice.iter().enumerate() {
            if a >= actions {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} selects action {a} of {actions}"
                )));
            }
            probs[s * actions + a] = 1.0;
        }
        Ok(TabularPolicy { actions, probs })
    }

    pub fn states(&self) -> usize {
        self.probs.len() / self.actions
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn row(&self, state: StateIndex) -> &[f64] {
        &self.probs[state.0 * self.actions..(state.0 + 1) * self.actions]
    }

    /// Most probable action, lowest id on ties.
    pub fn argmax(&self, state: StateIndex) -> usize {
        argmax_lowest(self.row(state))
    }

    pub fn sample(&self, state: StateIndex, rng: &mut impl Rng) -> usize {
        sample_categorical(self.row(state), rng)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // float dust: fall back to the last action with positive mass
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// A finite Markov game with deterministic joint transitions.
#[derive(Debug, Clone)]
pub struct MarkovGame {
    state_count: usize,
    action_counts: Vec<usize>,
    joint_count: usize,
    next: Vec<u32>,
    // rewards[agent][state * joint_count + joint]
    rewards: Vec<Vec<f64>>,
    initial: StateDistribution,
    discounts: Vec<f64>,
    hold_actions: Vec<Option<usize>>,
    altruist_state: Option<Vec<u32>>,
}

/// Inputs for [`MarkovGame::from_fn`] other than the transition closure.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub state_count: usize,
    pub action_counts: Vec<usize>,
    pub initial: StateDistribution,
    pub discounts: Vec<f64>,
    /// Per-agent "hold" action (stay in place), used by conditioned kernels.
    pub hold_actions: Vec<Option<usize>>,
    /// Per-state id of the altruist's own state component, for games with an
    /// altruist (agent 1).
    pub altruist_state: Option<Vec<u32>>,
}

impl MarkovGame {
    /// Builds the dense tables by calling `step(state, joint_actions)` for
    /// every pair; the closure returns the successor and per-agent rewards.
    pub fn from_fn<F>(spec: GameSpec, mut step: F) -> Result<Self>
    where
        F: FnMut(StateIndex, &[usize]) -> Result<(StateIndex, Vec<f64>)>,
    {
        let GameSpec {
            state_count,
            action_counts,
            initial,
            discounts,
            hold_actions,
            altruist_state,
        } = spec;
        let agents = action_counts.len();
        if agents == 0 || state_count == 0 {
            return Err(Error::InvalidGame("empty game".into()));
        }
        if action_counts.contains(&0) {
            return Err(Error::InvalidGame("agent with no actions".into()));
        }
        if state_count > u32::MAX as usize {
            return Err(Error::InvalidGame("too many states".into()));
        }
        if initial.len() != state_count {
            return Err(Error::Dimension {
                what: "initial distribution",
                expected: state_count,
                found: initial.len(),
            });
        }
        if discounts.len() != agents {
            return Err(Error::Dimension {
                what: "discounts",
                expected: agents,
                found: discounts.len(),
            });
        }
        if let Some(g) = discounts.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(Error::InvalidGame(format!("discount {g} outside [0,1)")));
        }
        if hold_actions.len() != agents {
            return Err(Error::Dimension {
                what: "hold actions",
                expected: agents,
                found: hold_actions.len(),
            });
        }
        for (i, h) in hold_actions.iter().enumerate() {
            if let Some(h) = h {
                if *h >= action_counts[i] {
                    return Err(Error::InvalidGame(format!("hold action {h} of agent {i}")));
                }
            }
        }
        if let Some(comp) = &altruist_state {
            if agents < 2 {
                return Err(Error::InvalidGame("altruist state without altruist".into()));
            }
            if comp.len() != state_count {
                return Err(Error::Dimension {
                    what: "altruist state map",
                    expected: state_count,
                    found: comp.len(),
                });
            }
        }

        let joint_count: usize = action_counts.iter().product();
        let mut next = Vec::with_capacity(state_count * joint_count);
        let mut rewards = vec![Vec::with_capacity(state_count * joint_count); agents];
        let mut actions = vec![0usize; agents];
        for s in 0..state_count {
            for j in 0..joint_count {
                decode_joint(j, &action_counts, &mut actions);
                let (succ, r) = step(StateIndex(s), &actions)?;
                if succ.0 >= state_count {
                    return Err(Error::StateOutOfRange(succ.0));
                }
                if r.len() != agents {
                    return Err(Error::Dimension {
                        what: "reward vector",
                        expected: agents,
                        found: r.len(),
                    });
                }
                next.push(succ.0 as u32);
                for (a, v) in r.into_iter().enumerate() {
                    rewards[a].push(v);
                }
            }
        }
        Ok(MarkovGame {
            state_count,
            action_counts,
            joint_count,
            next,
            rewards,
            initial,
            discounts,
            hold_actions,
            altruist_state,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn initial_distribution(&self) -> &StateDistribution {
        &self.initial
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn hold_action(&self, agent: usize) -> Option<usize> {
        self.hold_actions.get(agent).copied().flatten()
    }

    /// The altruist's state component at `state`, when the game has one.
    pub fn altruist_state(&self, state: StateIndex) -> Option<u32> {
        self.altruist_state.as_ref().map(|c| c[state.0])
    }

    pub fn has_altruist_component(&self) -> bool {
        self.altruist_state.is_some()
    }

    /// Encodes per-agent actions as a joint index (leader varies fastest).
    pub fn encode_joint(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.num_agents() {
            return Err(Error::Dimension {
                what: "joint action",
                expected: self.num_agents(),
                found: actions.len(),
            });
        }
        let mut j = 0;
        let mut stride = 1;
        for (i, (&a, &n)) in actions.iter().zip(&self.action_counts).enumerate() {
            if a >= n {
                return Err(Error::InvalidGame(format!("agent {i} action {a} of {n}")));
            }
            j += a * stride;
            stride *= n;
        }
        Ok(j)
    }

    pub fn decode_joint(&self, joint: usize) -> JointAction {
        let mut actions = vec![0; self.num_agents()];
        decode_joint(joint, &self.action_counts, &mut actions);
        JointAction(actions)
    }

    #[inline]
    pub fn next_by_index(&self, state: StateIndex, joint: usize) -> StateIndex {
        StateIndex(self.next[state.0 * self.joint_count + joint] as usize)
    }

    #[inline]
    pub fn reward_by_index(&self, agent: usize, state: StateIndex, joint: usize) -> f64 {
        self.rewards[agent][state.0 * self.joint_count + joint]
    }

    /// States reachable from `start` under some joint-action sequence, in
    /// ascending index order.
    pub fn reachable_from(&self, start: StateIndex) -> Result<Vec<StateIndex>> {
        self.check_state(start)?;
        let mut seen = vec![false; self.state_count];
        seen[start.0] = true;
        let mut stack = vec![start.0];
        while let Some(s) = stack.pop() {
            for j in 0..self.joint_count {
                let n = self.next[s * self.joint_count + j] as usize;
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        Ok((0..self.state_count)
            .filter(|&s| seen[s])
            .map(StateIndex)
            .collect())
    }

    pub fn transition(&self, state: StateIndex, action: &JointAction) -> Result<StateIndex> {
        self.check_state(state)?;
        let j = self.encode_joint(action.as_slice())?;
        Ok(self.next_by_index(state, j))
    }

    pub fn reward(&self, agent: usize, state: StateIndex, action: &JointAction) -> Result<f64> {
        self.check_state(state)?;
        if agent >= self.num_agents() {
            return Err(Error::Dimension {
                what: "agent",
                expected: self.num_agents(),
                found: agent,
            });
        }
        let j = self.encode_joint(action.as_slice())?;
        Ok(self.reward_by_index(agent, state, j))
    }

    pub fn check_state(&self, state: StateIndex) -> Result<()> {
        if state.0 >= self.state_count {
            Err(Error::StateOutOfRange(state.0))
        } else {
            Ok(())
        }
    }

    pub(crate) fn check_policies(&self, policies: &[&TabularPolicy]) -> Result<()> {
        if policies.len() != self.num_agents() {
            return Err(Error::Dimension {
                what: "policies",
                expected: self.num_agents(),
                found: policies.len(),
            });
        }
        for (p, &n) in policies.iter().zip(&self.action_counts) {
            if p.actions() != n {
                return Err(Error::Dimension {
                    what: "policy actions",
                    expected: n,
                    found: p.actions(),
                });
            }
            if p.states() != self.state_count {
                return Err(Error::Dimension {
                    what: "policy states",
                    expected: self.state_count,
                    found: p.states(),
                });
            }
        }
        Ok(())
    }

    /// Calls `f(joint, probability)` for every joint action with positive
    /// probability under independent per-agent policies at `state`.
    fn for_each_joint(
        &self,
        policies: &[&TabularPolicy],
        state: StateIndex,
        mut f: impl FnMut(usize, f64),
    ) {
        let mut actions = vec![0usize; self.num_agents()];
        for j in 0..self.joint_count {
            decode_joint(j, &self.action_counts, &mut actions);
            let mut p = 1.0;
            for (pol, &a) in policies.iter().zip(&actions) {
                p *= pol.row(state)[a];
                if p == 0.0 {
                    break;
                }
            }
            if p > 0.0 {
                f(j, p);
            }
        }
    }

    /// Pushes `dist` one step through the joint kernel induced by `policies`.
    pub fn push(
        &self,
        policies: &[&TabularPolicy],
        dist: &StateDistribution,
    ) -> Result<StateDistribution> {
        self.check_policies(policies)?;
        if dist.len() != self.state_count {
            return Err(Error::Dimension {
                what: "distribution",
                expected: self.state_count,
                found: dist.len(),
            });
        }
        Ok(StateDistribution::from_propagated(
            self.push_raw(policies, dist.as_slice()),
        ))
    }

    fn push_raw(&self, policies: &[&TabularPolicy], dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            self.for_each_joint(policies, StateIndex(s), |j, p| {
                out[self.next_by_index(StateIndex(s), j).0] += mass * p;
            });
        }
        out
    }

    /// Exact distribution of the state `n` steps after `start`.
    ///
    /// `policies` holds one policy per agent, leader first. A horizon of zero
    /// returns the point mass on `start`.
    pub fn n_step_distribution(
        &self,
        policies: &[&TabularPolicy],
        start: StateIndex,
        n: usize,
    ) -> Result<StateDistribution> {
        self.check_policies(policies)?;
        self.check_state(start)?;
        let mut dist = OneHotState::new(self.state_count, start)?.to_vec();
        for _ in 0..n {
            dist = self.push_raw(policies, &dist);
        }
        Ok(StateDistribution::from_propagated(dist))
    }

    /// Samples a trajectory of `n` transitions from `start`; the returned
    /// sequence has `n + 1` states.
    pub fn sample_rollout(
        &self,
        policies: &[&TabularPolicy],
        start: StateIndex,
        n: usize,
        seed: u64,
    ) -> Result<Vec<StateIndex>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_rollout_with(policies, start, n, &mut rng)
    }

    pub fn sample_rollout_with(
        &self,
        policies: &[&TabularPolicy],
        start: StateIndex,
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<StateIndex>> {
        self.check_policies(policies)?;
        self.check_state(start)?;
        let mut out = Vec::with_capacity(n + 1);
        let mut s = start;
        out.push(s);
        let mut actions = vec![0usize; self.num_agents()];
        for _ in 0..n {
            for (slot, pol) in actions.iter_mut().zip(policies) {
                *slot = pol.sample(s, rng);
            }
            let j = self.encode_joint(&actions)?;
            s = self.next_by_index(s, j);
            out.push(s);
        }
        Ok(out)
    }

    /// One-step kernel of the leader (agent 0) acting under `leader_policy`
    /// while every other agent takes its hold action, restricted to states
    /// whose altruist component equals `frozen_altruist_state`.
    ///
    /// Rows of states outside that block are self-loops so the matrix stays
    /// row-stochastic over the whole state space.
    pub fn conditioned_kernel(
        &self,
        leader_policy: &TabularPolicy,
        frozen_altruist_state: u32,
    ) -> Result<TransitionMatrix> {
        let comp = self
            .altruist_state
            .as_ref()
            .ok_or_else(|| Error::InvalidGame("game has no altruist component".into()))?;
        self.hold_rows(
            leader_policy,
            |s| comp[s] == frozen_altruist_state,
            Some(frozen_altruist_state),
        )
    }

    /// All hold-conditioned kernels at once: every state's row is the
    /// leader's one-step distribution with the other agents holding. Equals
    /// `conditioned_kernel(policy, s_A)` on each altruist block.
    pub fn hold_kernel(&self, leader_policy: &TabularPolicy) -> Result<TransitionMatrix> {
        self.hold_rows(leader_policy, |_| true, None)
    }

    /// Hold rows for states where `active` holds, self-loops elsewhere.
    fn hold_rows(
        &self,
        leader_policy: &TabularPolicy,
        active: impl Fn(usize) -> bool,
        conditioning: Option<u32>,
    ) -> Result<TransitionMatrix> {
        let mut actions = self.hold_joint_template()?;
        self.check_leader_policy(leader_policy)?;
        let mut rows = Vec::with_capacity(self.state_count);
        for s in 0..self.state_count {
            if !active(s) {
                rows.push(vec![(s as u32, 1.0)]);
                continue;
            }
            let mut row: Vec<(u32, f64)> = Vec::new();
            for (a, &p) in leader_policy.row(StateIndex(s)).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                actions[0] = a;
                let j = self.encode_joint(&actions)?;
                let succ = self.next_by_index(StateIndex(s), j).0 as u32;
                match row.iter_mut().find(|(t, _)| *t == succ) {
                    Some(entry) => entry.1 += p,
                    None => row.push((succ, p)),
                }
            }
            row.sort_by_key(|(t, _)| *t);
            rows.push(row);
        }
        TransitionMatrix::from_sparse_rows(self.state_count, rows, conditioning)
    }

    /// Exact distribution after `n` steps where the leader follows its policy
    /// and every other agent plays the given per-step actions.
    ///
    /// `others[t]` lists the actions of agents `1..N` at step `t`.
    pub fn leader_distribution_given_actions(
        &self,
        leader_policy: &TabularPolicy,
        start: StateIndex,
        others: &[Vec<usize>],
    ) -> Result<StateDistribution> {
        self.check_leader_policy(leader_policy)?;
        self.check_state(start)?;
        let mut dist = OneHotState::new(self.state_count, start)?.to_vec();
        let mut actions = vec![0usize; self.num_agents()];
        for step in others {
            if step.len() + 1 != self.num_agents() {
                return Err(Error::Dimension {
                    what: "non-leader actions",
                    expected: self.num_agents() - 1,
                    found: step.len(),
                });
            }
            actions[1..].copy_from_slice(step);
            let mut out = vec![0.0; self.state_count];
            for (s, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (a, &p) in leader_policy.row(StateIndex(s)).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    actions[0] = a;
                    let j = self.encode_joint(&actions)?;
                    out[self.next_by_index(StateIndex(s), j).0] += mass * p;
                }
            }
            dist = out;
        }
        Ok(StateDistribution::from_propagated(dist))
    }

    fn check_leader_policy(&self, leader_policy: &TabularPolicy) -> Result<()> {
        if leader_policy.actions() != self.action_counts[0]
            || leader_policy.states() != self.state_count
        {
            return Err(Error::Dimension {
                what: "leader policy",
                expected: self.state_count * self.action_counts[0],
                found: leader_policy.states() * leader_policy.actions(),
            });
        }
        Ok(())
    }

    fn hold_joint_template(&self) -> Result<Vec<usize>> {
        let mut actions = vec![0usize; self.num_agents()];
        for (i, slot) in actions.iter_mut().enumerate().skip(1) {
            *slot = self
                .hold_action(i)
                .ok_or_else(|| Error::InvalidGame(format!("agent {i} has no hold action")))?;
        }
        Ok(actions)
    }
}

fn decode_joint(mut joint: usize, counts: &[usize], out: &mut [usize]) {
    for (slot, &n) in out.iter_mut().zip(counts) {
        *slot = joint % n;
        joint /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Three-state chain 0 -> 1 -> 2 -> 2 with a single action.
    fn chain() -> MarkovGame {
        MarkovGame::from_fn(
            GameSpec {
                state_count: 3,
                action_counts: vec![1],
                initial: StateDistribution::point(3, StateIndex(0)).unwrap(),
                discounts: vec![0.9],
                hold_actions: vec![None],
                altruist_state: None,
            },
            |s, _| Ok((StateIndex((s.0 + 1).min(2)), vec![0.0])),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_two_steps() {
        let g = chain();
        let pol = TabularPolicy::uniform(3, 1);
        let d = g.n_step_distribution(&[&pol], StateIndex(0), 2).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let g = chain();
        let pol = TabularPolicy::uniform(3, 1);
        let d = g.n_step_distribution(&[&pol], StateIndex(1), 0).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn mismatched_policy_dimensions() {
        let g = chain();
        let pol = TabularPolicy::uniform(3, 2);
        assert!(matches!(
            g.n_step_distribution(&[&pol], StateIndex(0), 1),
            Err(Error::Dimension { .. })
        ));
        let short = TabularPolicy::uniform(2, 1);
        assert!(g.n_step_distribution(&[&short], StateIndex(0), 1).is_err());
        assert!(g.n_step_distribution(&[], StateIndex(0), 1).is_err());
    }

    #[test]
    fn rollout_of_deterministic_chain_ignores_seed() {
        let g = chain();
        let pol = TabularPolicy::uniform(3, 1);
        for seed in [0, 1, u64::MAX] {
            let r = g.sample_rollout(&[&pol], StateIndex(0), 3, seed).unwrap();
            assert_eq!(
                r,
                vec![StateIndex(0), StateIndex(1), StateIndex(2), StateIndex(2)]
            );
        }
    }

    #[test]
    fn policy_validation() {
        assert!(TabularPolicy::new(1, 2, vec![0.5, 0.6]).is_err());
        assert!(TabularPolicy::new(1, 2, vec![-0.5, 1.5]).is_err());
        assert!(TabularPolicy::new(2, 2, vec![0.5, 0.5]).is_err());
        assert!(TabularPolicy::deterministic(2, &[0, 2]).is_err());
        let p = TabularPolicy::deterministic(3, &[2, 0]).unwrap();
        assert_eq!(p.row(StateIndex(0)), &[0.0, 0.0, 1.0]);
        assert_eq!(p.argmax(StateIndex(1)), 0);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.0]), 0);
    }

    #[test]
    fn distribution_validation() {
        assert!(StateDistribution::new(vec![0.0, 0.0]).is_err());
        assert!(StateDistribution::new(vec![0.5, 0.5 + 2e-9]).is_err());
        assert!(StateDistribution::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(OneHotState::new(2, StateIndex(2)).is_err());
    }

    #[test]
    fn joint_encoding_round_trip() {
        let g = MarkovGame::from_fn(
            GameSpec {
                state_count: 1,
                action_counts: vec![5, 3],
                initial: StateDistribution::uniform(1),
                discounts: vec![0.9, 0.9],
                hold_actions: vec![Some(4), Some(2)],
                altruist_state: None,
            },
            |s, _| Ok((s, vec![0.0, 0.0])),
        )
        .unwrap();
        for j in 0..g.joint_count() {
            let a = g.decode_joint(j);
            assert_eq!(g.encode_joint(a.as_slice()).unwrap(), j);
        }
        assert!(g.encode_joint(&[5, 0]).is_err());
    }

    #[test]
    fn invalid_discount_rejected() {
        let r = MarkovGame::from_fn(
            GameSpec {
                state_count: 1,
                action_counts: vec![1],
                initial: StateDistribution::uniform(1),
                discounts: vec![1.0],
                hold_actions: vec![None],
                altruist_state: None,
            },
            |s, _| Ok((s, vec![0.0])),
        );
        assert!(matches!(r, Err(Error::InvalidGame(_))));
    }
}
