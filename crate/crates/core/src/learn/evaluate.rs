use rand::Rng;

use super::train::{phase_rng, FrozenLeader};
use crate::choice::entropy;
use crate::envs::{ForagingWorld, GridWorld, ACTION_COUNT, STAY};
use crate::error::{Error, Result};
use crate::mdp::{MarkovGame, StateIndex, TabularPolicy};

const STREAM_EVAL: u64 = 7;

/// One evaluation episode: `states[t]` and the joint action taken there.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<StateIndex>,
    pub actions: Vec<[usize; 2]>,
    pub leader_reward: f64,
}

/// Rolls out `episodes` episodes of `len` steps. Episode `i` starts at
/// `starts[i % starts.len()]`, so every start is used once `episodes`
/// reaches the number of starts.
pub fn rollouts(
    game: &MarkovGame,
    starts: &[StateIndex],
    leader: &TabularPolicy,
    partner: &TabularPolicy,
    len: usize,
    episodes: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Episode>> {
    if starts.is_empty() {
        return Err(Error::Config("at least one start state is required".into()));
    }
    starts.iter().try_for_each(|&s| game.check_state(s))?;
    if game.num_agents() != 2 {
        return Err(Error::InvalidGame("evaluation expects two agents".into()));
    }
    for (p, n) in [
        (leader, game.action_counts()[0]),
        (partner, game.action_counts()[1]),
    ] {
        if p.states() != game.state_count() || p.actions() != n {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}x{}, game needs {}x{}",
                p.states(),
                p.actions(),
                game.state_count(),
                n
            )));
        }
    }
    let n0 = game.action_counts()[0];
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut s = starts[i % starts.len()];
        let mut ep = Episode {
            states: vec![s],
            actions: Vec::with_capacity(len),
            leader_reward: 0.0,
        };
        for _ in 0..len {
            let a = leader.sample(s, rng);
            let b = partner.sample(s, rng);
            let joint = a + n0 * b;
            ep.leader_reward += game.reward_by_index(0, s, joint);
            s = game.next_by_index(s, joint);
            ep.actions.push([a, b]);
            ep.states.push(s);
        }
        out.push(ep);
    }
    Ok(out)
}

/// Gridworld outcome categories over a set of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMetrics {
    /// Whether the leader ate the apple, per episode.
    pub successes: Vec<bool>,
    /// Leader reached the apple in at least one episode.
    pub opens_door: bool,
    /// Leader reached the apple in every episode.
    pub non_blocking: bool,
    /// The altruist never stood on the cell the leader was heading for.
    pub gives_way: bool,
    /// Steps at which the altruist stood on the leader's next cell.
    pub path_occupied: usize,
    /// Steps at which the leader's move was refused because the altruist
    /// occupied its target cell.
    pub blocked_moves: usize,
}

impl GridMetrics {
    pub fn success_rate(&self) -> f64 {
        if self.successes.is_empty() {
            return 0.0;
        }
        self.successes.iter().filter(|&&s| s).count() as f64 / self.successes.len() as f64
    }
}

/// Classifies gridworld episodes.
///
/// The leader's path is the sequence of cells its greedy moves target while
/// the apple is still present. Steps at which the altruist stands on that
/// next cell count as occupied; they are blocked if the leader stays put.
pub fn grid_metrics(world: &GridWorld, episodes: &[Episode]) -> GridMetrics {
    let mut successes = Vec::with_capacity(episodes.len());
    let mut occupied = 0;
    let mut blocked = 0;
    for ep in episodes {
        successes.push(ep.leader_reward > 0.0);
        for (t, &[a, _]) in ep.actions.iter().enumerate() {
            let s = world.decode(ep.states[t]);
            let n = world.decode(ep.states[t + 1]);
            let Some(alt) = s.altruist else {
                continue;
            };
            // the path ends once the leader has its apple
            if a == STAY || !s.apple_present {
                continue;
            }
            let target = world.leader_target(s, a);
            if target == s.leader {
                continue;
            }
            if alt == target {
                occupied += 1;
                if n.leader == s.leader {
                    blocked += 1;
                }
            }
        }
    }
    GridMetrics {
        opens_door: successes.iter().any(|&s| s),
        non_blocking: !successes.is_empty() && successes.iter().all(|&s| s),
        gives_way: occupied == 0,
        path_occupied: occupied,
        blocked_moves: blocked,
        successes,
    }
}

/// Greedy evaluation of a trained altruist next to the frozen leader from
/// the world's spawn state.
pub fn evaluate_gridworld(
    world: &GridWorld,
    leader: &TabularPolicy,
    altruist: &TabularPolicy,
    len: usize,
    episodes: usize,
    seed: u64,
) -> Result<GridMetrics> {
    let mut rng = phase_rng(seed, STREAM_EVAL);
    let eps = rollouts(
        world.game(),
        &[world.initial_index()],
        leader,
        altruist,
        len,
        episodes,
        &mut rng,
    )?;
    Ok(grid_metrics(world, &eps))
}

/// Foraging performance summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForagingMetrics {
    /// Mean leader forage reward per episode.
    pub mean_reward: f64,
    /// Mean policy entropy of the leader over visited states, as a
    /// percentage of the maximum `ln |A|`.
    pub mean_ic_percent: f64,
    /// Fraction of apples foraged per episode.
    pub forage_score: f64,
}

pub fn evaluate_foraging(
    world: &ForagingWorld,
    leader: &FrozenLeader,
    partner: &TabularPolicy,
    episodes: usize,
    seed: u64,
) -> Result<ForagingMetrics> {
    let mut rng = phase_rng(seed, STREAM_EVAL);
    let len = world.config().episode_len;
    let eps = rollouts(
        world.game(),
        &[world.initial_index()],
        leader.greedy(),
        partner,
        len,
        episodes,
        &mut rng,
    )?;
    Ok(foraging_metrics(world, leader, &eps))
}

pub fn foraging_metrics(
    world: &ForagingWorld,
    leader: &FrozenLeader,
    episodes: &[Episode],
) -> ForagingMetrics {
    let max_entropy = (ACTION_COUNT as f64).ln();
    let apples = world.config().apples.len() as f64;
    let mut reward = 0.0;
    let mut ic = 0.0;
    let mut ic_n = 0usize;
    for ep in episodes {
        reward += ep.leader_reward;
        // entropy at every state the leader acted in
        for &s in &ep.states[..ep.states.len() - 1] {
            ic += entropy(leader.ic_policy().row(s)) / max_entropy;
            ic_n += 1;
        }
    }
    let n = episodes.len().max(1) as f64;
    ForagingMetrics {
        mean_reward: reward / n,
        mean_ic_percent: if ic_n == 0 {
            0.0
        } else {
            100.0 * ic / ic_n as f64
        },
        forage_score: if apples > 0.0 {
            reward / n / apples
        } else {
            0.0
        },
    }
}
