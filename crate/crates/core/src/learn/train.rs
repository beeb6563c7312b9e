use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AltruistReward, LeaderBehavior, TrainConfig};
use super::qtable::{softmax_policy, QTable};
use super::view::StateView;
use crate::choice::{entropy, ChoiceMethod, EmpiricalTransitionModel, DEFAULT_SUPPORT_EPS};
use crate::error::{Error, Result};
use crate::kernel::TransitionMatrix;
use crate::mdp::{MarkovGame, StateIndex, TabularPolicy};

const LEADER: usize = 0;
const ALTRUIST: usize = 1;

// Independent random streams per training phase, so that e.g. the altruist
// phase does not replay the leader phase's draws for the same seed.
const STREAM_LEADER: u64 = 1;
const STREAM_PAIR: u64 = 2;
const STREAM_ALTRUIST: u64 = 3;

pub(crate) fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Behaviour policy during learning. Ties between maximal actions are broken
/// uniformly at random: with a zero-initialised table a fixed tie-break would
/// turn exploration into a walk in one direction.
#[inline]
fn epsilon_greedy(q: &QTable, s: StateIndex, eps: f64, rng: &mut impl Rng) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return rng.gen_range(0..q.actions());
    }
    let row = q.row(s);
    let best = q.max(s);
    let ties = row.iter().filter(|&&v| v == best).count();
    if ties == 1 {
        return q.greedy(s);
    }
    let k = rng.gen_range(0..ties);
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(k)
        .map(|(a, _)| a)
        .expect("k < ties")
}

/// Running record of update magnitudes for the convergence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Convergence {
    /// Largest |ΔQ| over the final `convergence_window` steps.
    pub max_abs_delta: f64,
    /// Greedy actions that changed between the start and end of the window.
    pub greedy_changes: usize,
}

impl Convergence {
    pub fn is_converged(&self, tol: f64) -> bool {
        self.max_abs_delta < tol
    }
}

struct ConvergenceTracker {
    window_start: usize,
    snapshot: Option<Vec<usize>>,
    max_delta: f64,
}

impl ConvergenceTracker {
    fn new(config: &TrainConfig) -> Self {
        ConvergenceTracker {
            window_start: config.env_steps.saturating_sub(config.convergence_window),
            snapshot: None,
            max_delta: 0.0,
        }
    }

    fn before_step(&mut self, step: usize, q: &QTable) {
        if step == self.window_start {
            self.snapshot = Some(greedy_actions(q));
        }
    }

    fn record(&mut self, step: usize, delta: f64) {
        if step >= self.window_start {
            self.max_delta = self.max_delta.max(delta);
        }
    }

    fn finish(self, q: &QTable) -> Convergence {
        let now = greedy_actions(q);
        let greedy_changes = self.snapshot.map_or(0, |old| {
            old.iter().zip(&now).filter(|(a, b)| a != b).count()
        });
        Convergence {
            max_abs_delta: self.max_delta,
            greedy_changes,
        }
    }
}

fn greedy_actions(q: &QTable) -> Vec<usize> {
    (0..q.states()).map(|s| q.greedy(StateIndex(s))).collect()
}

fn check_two_agents(game: &MarkovGame, starts: &[StateIndex]) -> Result<()> {
    if game.num_agents() != 2 {
        return Err(Error::InvalidGame(format!(
            "training expects a leader and a partner, found {} agents",
            game.num_agents()
        )));
    }
    if starts.is_empty() {
        return Err(Error::Config("at least one start state is required".into()));
    }
    starts.iter().try_for_each(|&s| game.check_state(s))
}

fn check_view(game: &MarkovGame, view: &StateView) -> Result<()> {
    if view.states() != game.state_count() {
        return Err(Error::Dimension {
            what: "state view",
            expected: game.state_count(),
            found: view.states(),
        });
    }
    Ok(())
}

fn episode_starts(
    game: &MarkovGame,
    starts: &[StateIndex],
    config: &TrainConfig,
) -> Result<Vec<StateIndex>> {
    if !config.exploring_starts {
        return Ok(starts.to_vec());
    }
    let mut all = Vec::new();
    for &s in starts {
        all.extend(game.reachable_from(s)?);
    }
    all.sort();
    all.dedup();
    Ok(all)
}

fn draw_start(starts: &[StateIndex], rng: &mut impl Rng) -> StateIndex {
    if starts.len() == 1 {
        starts[0]
    } else {
        starts[rng.gen_range(0..starts.len())]
    }
}

/// Leader Q-table learnt against a partner acting uniformly at random.
#[derive(Debug, Clone)]
pub struct LeaderTraining {
    /// Indexed by the leader's observations.
    pub q: QTable,
    pub view: StateView,
    pub convergence: Convergence,
    pub episodes: usize,
}

/// ε-greedy Q-learning of the leader for `config.env_steps` steps while the
/// partner acts uniformly at random. Episodes last `config.episode_len`
/// steps and begin at a uniformly drawn member of `starts`, or anywhere
/// reachable from them with `config.exploring_starts`. The leader learns over `view`.
pub fn pretrain_leader(
    game: &MarkovGame,
    starts: &[StateIndex],
    view: &StateView,
    config: &TrainConfig,
) -> Result<LeaderTraining> {
    config.validate()?;
    check_two_agents(game, starts)?;
    check_view(game, view)?;
    let mut rng = phase_rng(config.seed, STREAM_LEADER);
    let [leader_actions, partner_actions] = [game.action_counts()[0], game.action_counts()[1]];
    let mut q = QTable::new(view.observations(), leader_actions);
    let starts = episode_starts(game, starts, config)?;
    let mut tracker = ConvergenceTracker::new(config);
    let mut s = draw_start(&starts, &mut rng);
    let mut t = 0;
    let mut episodes = 0;
    for step in 0..config.env_steps {
        tracker.before_step(step, &q);
        let eps = config.epsilon_at(step);
        let o = view.observe(s);
        let a = epsilon_greedy(&q, o, eps, &mut rng);
        let b = rng.gen_range(0..partner_actions);
        let joint = a + leader_actions * b;
        let next = game.next_by_index(s, joint);
        let r = game.reward_by_index(LEADER, s, joint);
        t += 1;
        let done = t == config.episode_len;
        let boot = (!done).then(|| view.observe(next));
        let d = q.update(o, a, r, boot, config.learning_rate, config.discount);
        tracker.record(step, d);
        if done {
            s = draw_start(&starts, &mut rng);
            t = 0;
            episodes += 1;
        } else {
            s = next;
        }
    }
    Ok(LeaderTraining {
        convergence: tracker.finish(&q),
        q,
        view: view.clone(),
        episodes,
    })
}

/// Two independent Q-learners, each rewarded by its own environment reward
/// (identical for cooperative foraging).
#[derive(Debug, Clone)]
pub struct PairTraining {
    pub leader: QTable,
    pub partner: QTable,
    pub convergence: Convergence,
}

pub fn pretrain_pair(
    game: &MarkovGame,
    starts: &[StateIndex],
    config: &TrainConfig,
) -> Result<PairTraining> {
    config.validate()?;
    check_two_agents(game, starts)?;
    let mut rng = phase_rng(config.seed, STREAM_PAIR);
    let n0 = game.action_counts()[0];
    let mut q0 = QTable::new(game.state_count(), n0);
    let mut q1 = QTable::new(game.state_count(), game.action_counts()[1]);
    let starts = episode_starts(game, starts, config)?;
    let mut tracker = ConvergenceTracker::new(config);
    let mut s = draw_start(&starts, &mut rng);
    let mut t = 0;
    for step in 0..config.env_steps {
        tracker.before_step(step, &q0);
        let eps = config.epsilon_at(step);
        let a = epsilon_greedy(&q0, s, eps, &mut rng);
        let b = epsilon_greedy(&q1, s, eps, &mut rng);
        let joint = a + n0 * b;
        let next = game.next_by_index(s, joint);
        t += 1;
        let done = t == config.episode_len;
        let boot = (!done).then_some(next);
        let lr = config.learning_rate;
        let g = config.discount;
        let d = q0.update(s, a, game.reward_by_index(LEADER, s, joint), boot, lr, g);
        q1.update(s, b, game.reward_by_index(ALTRUIST, s, joint), boot, lr, g);
        tracker.record(step, d);
        if done {
            s = draw_start(&starts, &mut rng);
            t = 0;
        } else {
            s = next;
        }
    }
    Ok(PairTraining {
        convergence: tracker.finish(&q0),
        leader: q0,
        partner: q1,
    })
}

/// A pretrained leader whose learning is switched off. Policies are stored
/// over game states.
#[derive(Debug, Clone)]
pub struct FrozenLeader {
    q: QTable,
    view: StateView,
    behavior: TabularPolicy,
    greedy: TabularPolicy,
    ic_policy: TabularPolicy,
}

impl FrozenLeader {
    /// `q` is indexed by `view`'s observations. `behavior` drives the leader
    /// while the altruist trains; `ic_temperature` sets the softmax policy
    /// whose entropy is the IC reward.
    pub fn new(
        q: QTable,
        view: StateView,
        behavior: LeaderBehavior,
        ic_temperature: f64,
    ) -> Result<Self> {
        if q.states() != view.observations() {
            return Err(Error::Dimension {
                what: "leader Q-table observations",
                expected: view.observations(),
                found: q.states(),
            });
        }
        let greedy = view.lift(&q.greedy_policy())?;
        let behavior = match behavior {
            LeaderBehavior::Greedy => greedy.clone(),
            LeaderBehavior::EpsilonGreedy(e) => view.lift(&q.epsilon_greedy_policy(e)?)?,
            LeaderBehavior::Softmax(t) => view.lift(&softmax_policy(&q, t)?)?,
        };
        let ic_policy = view.lift(&softmax_policy(&q, ic_temperature)?)?;
        Ok(FrozenLeader {
            q,
            view,
            behavior,
            greedy,
            ic_policy,
        })
    }

    pub fn from_training(
        t: LeaderTraining,
        behavior: LeaderBehavior,
        ic_temperature: f64,
    ) -> Result<Self> {
        FrozenLeader::new(t.q, t.view, behavior, ic_temperature)
    }

    pub fn view(&self) -> &StateView {
        &self.view
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn behavior(&self) -> &TabularPolicy {
        &self.behavior
    }

    pub fn greedy(&self) -> &TabularPolicy {
        &self.greedy
    }

    pub fn ic_policy(&self) -> &TabularPolicy {
        &self.ic_policy
    }

    /// Policy entropy at `s` in nats.
    pub fn immediate_choice(&self, s: StateIndex) -> f64 {
        entropy(self.ic_policy.row(s))
    }
}

/// Per-state choice rewards derived from the current transition model.
struct RewardCache {
    method: ChoiceMethod,
    horizon: usize,
    matrix: TransitionMatrix,
    values: Vec<f64>,
}

impl RewardCache {
    fn new(method: ChoiceMethod, horizon: usize, matrix: TransitionMatrix) -> Self {
        let n = matrix.size();
        RewardCache {
            method,
            horizon,
            matrix,
            values: vec![f64::NAN; n],
        }
    }

    fn refresh(&mut self, matrix: TransitionMatrix) {
        self.matrix = matrix;
        self.values.fill(f64::NAN);
    }

    fn get(&mut self, s: StateIndex) -> f64 {
        let v = self.values[s.0];
        if !v.is_nan() {
            return v;
        }
        let dist = self.matrix.propagate_sparse(s, self.horizon);
        let v = match self.method {
            ChoiceMethod::DiscreteChoice => dist
                .iter()
                .filter(|(_, p)| *p > DEFAULT_SUPPORT_EPS)
                .count() as f64,
            _ => dist
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(_, p)| -p * p.ln())
                .sum(),
        };
        self.values[s.0] = v;
        v
    }
}

/// Result of altruist training.
#[derive(Debug, Clone)]
pub struct AltruistTraining {
    pub q: QTable,
    pub policy: TabularPolicy,
    /// Transition statistics gathered during training (choice rewards only).
    pub model: Option<EmpiricalTransitionModel>,
    pub convergence: Convergence,
    pub mean_reward: f64,
}

/// Callback invoked every `every` steps with the number of completed steps
/// and the altruist's current table.
pub struct Checkpoints<'a> {
    pub every: usize,
    pub callback: &'a mut dyn FnMut(usize, &QTable) -> Result<()>,
}

/// ε-greedy Q-learning of agent 1 against the frozen leader. Episodes start
/// at a uniformly drawn member of `starts`.
///
/// With a choice reward the altruist receives the leader's estimated choice
/// at the post-transition state. DC and EC come from an empirical
/// hold-conditioned transition model of the observed transitions, rebuilt
/// every `config.model_refresh` steps; IC is the entropy of the leader's
/// softmax policy. The altruist's discount is `config.altruist_discount`.
pub fn train_altruist(
    game: &MarkovGame,
    starts: &[StateIndex],
    leader: &FrozenLeader,
    config: &TrainConfig,
    mut checkpoints: Option<Checkpoints<'_>>,
) -> Result<AltruistTraining> {
    config.validate_altruist()?;
    check_two_agents(game, starts)?;
    if leader.view.states() != game.state_count() || leader.q.actions() != game.action_counts()[0] {
        return Err(Error::Dimension {
            what: "leader policy states",
            expected: game.state_count(),
            found: leader.view.states(),
        });
    }
    if let Some(c) = &checkpoints {
        if c.every == 0 {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
    }
    let mut rng = phase_rng(config.seed, STREAM_ALTRUIST);
    let n0 = game.action_counts()[0];
    let mut q = QTable::new(game.state_count(), game.action_counts()[1]);

    let model_based = matches!(
        config.reward,
        AltruistReward::Choice(ChoiceMethod::DiscreteChoice | ChoiceMethod::EntropicChoice)
    );
    let mut model = if model_based {
        Some(EmpiricalTransitionModel::new(game)?)
    } else {
        None
    };
    let mut cache = match (config.reward, &model) {
        (AltruistReward::Choice(m), Some(md)) => Some(RewardCache::new(
            m,
            config.horizon.expect("validated"),
            md.to_matrix(),
        )),
        _ => None,
    };

    let mut tracker = ConvergenceTracker::new(config);
    let mut reward_sum = 0.0;
    let mut s = draw_start(starts, &mut rng);
    let mut t = 0;
    for step in 0..config.env_steps {
        if step > 0 && step % config.model_refresh == 0 {
            if let (Some(c), Some(md)) = (cache.as_mut(), model.as_ref()) {
                c.refresh(md.to_matrix());
            }
        }
        tracker.before_step(step, &q);
        let eps = config.epsilon_at(step);
        let a = leader.behavior.sample(s, &mut rng);
        let b = epsilon_greedy(&q, s, eps, &mut rng);
        let joint = a + n0 * b;
        let next = game.next_by_index(s, joint);
        if let Some(md) = model.as_mut() {
            md.observe(s, next)?;
        }
        let r = match config.reward {
            AltruistReward::Shared => game.reward_by_index(LEADER, s, joint),
            AltruistReward::Choice(ChoiceMethod::ImmediateChoice) => leader.immediate_choice(next),
            AltruistReward::Choice(_) => cache.as_mut().expect("model-based reward").get(next),
        };
        reward_sum += r;
        t += 1;
        let done = t == config.episode_len;
        let d = q.update(
            s,
            b,
            r,
            (!done).then_some(next),
            config.learning_rate,
            config.altruist_discount,
        );
        tracker.record(step, d);
        if done {
            s = draw_start(starts, &mut rng);
            t = 0;
        } else {
            s = next;
        }
        if let Some(c) = checkpoints.as_mut() {
            if (step + 1) % c.every == 0 {
                (c.callback)(step + 1, &q)?;
            }
        }
    }
    Ok(AltruistTraining {
        policy: q.greedy_policy(),
        convergence: tracker.finish(&q),
        mean_reward: reward_sum / config.env_steps as f64,
        model,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{
        build_foraging, build_gridworld, ForagingConfig, GridMap, GridOptions, GridWorld, Scenario,
    };

    fn small(steps: usize) -> TrainConfig {
        let mut c = TrainConfig::gridworld();
        c.env_steps = steps;
        c.convergence_window = steps / 2;
        c
    }

    fn door_leader(config: &TrainConfig) -> (GridWorld, LeaderTraining) {
        let w = build_gridworld(Scenario::Door).unwrap();
        let view = StateView::from_keys(&w.leader_view());
        let t = pretrain_leader(w.game(), &[w.initial_index()], &view, config).unwrap();
        (w, t)
    }

    #[test]
    fn same_seed_same_tables() {
        let c = small(20_000);
        let (_, a) = door_leader(&c);
        let (_, b) = door_leader(&c);
        assert_eq!(a.q, b.q);
        let mut c2 = c.clone();
        c2.seed = 1;
        let (_, d) = door_leader(&c2);
        assert_ne!(a.q, d.q);
    }

    #[test]
    fn no_reward_leaves_leader_table_at_zero() {
        let map = GridMap::parse(Scenario::Door.map_text()).unwrap();
        let w = GridWorld::new(
            map,
            GridOptions {
                apple: false,
                ..GridOptions::default()
            },
        )
        .unwrap();
        let view = StateView::from_keys(&w.leader_view());
        let t = pretrain_leader(w.game(), &[w.initial_index()], &view, &small(5_000)).unwrap();
        assert_eq!(t.q.max_abs(), 0.0);
        assert_eq!(t.convergence.max_abs_delta, 0.0);
    }

    #[test]
    fn single_agent_game_is_rejected() {
        let w = build_gridworld(Scenario::OpenGrid).unwrap();
        let view = StateView::full(w.state_count());
        let err = pretrain_leader(w.game(), &[w.initial_index()], &view, &small(10)).unwrap_err();
        assert!(matches!(err, Error::InvalidGame(_)));
        let w = build_gridworld(Scenario::Door).unwrap();
        let view = StateView::full(w.state_count());
        assert!(pretrain_leader(w.game(), &[], &view, &small(10)).is_err());
    }

    #[test]
    fn altruist_needs_matching_leader_and_horizon() {
        let c = small(2_000);
        let (w, t) = door_leader(&c);
        let leader = FrozenLeader::from_training(t, c.leader_behavior, 1.0).unwrap();
        let mut bad = c.clone();
        bad.horizon = None;
        let start = [w.initial_index()];
        let err = train_altruist(w.game(), &start, &leader, &bad, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let f = build_foraging(ForagingConfig::default()).unwrap();
        let err = train_altruist(f.game(), &[f.initial_index()], &leader, &c, None).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn frozen_leader_rejects_wrong_view() {
        let q = QTable::new(3, 5);
        assert!(FrozenLeader::new(q, StateView::full(4), LeaderBehavior::Greedy, 1.0).is_err());
    }

    #[test]
    fn checkpoints_fire_on_schedule() {
        let c = small(3_000);
        let (w, t) = door_leader(&c);
        let leader = FrozenLeader::from_training(t, c.leader_behavior, 1.0).unwrap();
        let mut seen = Vec::new();
        let mut cb = |step: usize, q: &QTable| {
            assert_eq!(q.actions(), 5);
            seen.push(step);
            Ok(())
        };
        train_altruist(
            w.game(),
            &[w.initial_index()],
            &leader,
            &c,
            Some(Checkpoints {
                every: 1_000,
                callback: &mut cb,
            }),
        )
        .unwrap();
        assert_eq!(seen, vec![1_000, 2_000, 3_000]);
    }

    #[test]
    fn immediate_choice_values_are_bounded() {
        let f = build_foraging(ForagingConfig::default()).unwrap();
        let mut c = TrainConfig::foraging();
        c.env_steps = 30_000;
        let pair = pretrain_pair(f.game(), &[f.initial_index()], &c).unwrap();
        let n = f.game().state_count();
        let leader = FrozenLeader::new(
            pair.leader,
            StateView::full(n),
            LeaderBehavior::Greedy,
            c.ic_temperature,
        )
        .unwrap();
        let t = train_altruist(f.game(), &[f.initial_index()], &leader, &c, None).unwrap();
        let bound = 5f64.ln() / (1.0 - c.altruist_discount);
        assert!(t.q.is_finite());
        assert!(t.q.max_abs() <= bound + 1e-6, "{} > {bound}", t.q.max_abs());
        assert!(t.model.is_none());
        assert!(t.mean_reward >= 0.0 && t.mean_reward <= 5f64.ln() + 1e-12);
    }

    #[test]
    fn model_based_training_records_transitions() {
        let c = small(2_000);
        let (w, t) = door_leader(&c);
        let leader = FrozenLeader::from_training(t, c.leader_behavior, 1.0).unwrap();
        let a = train_altruist(w.game(), &[w.initial_index()], &leader, &c, None).unwrap();
        let model = a.model.expect("EC keeps its model");
        assert!(model.total_observed() > 0);
        let b = train_altruist(w.game(), &[w.initial_index()], &leader, &c, None).unwrap();
        assert_eq!(a.q, b.q);
    }
}
