//! Experiment pipelines behind the CLI subcommands.

use rayon::prelude::*;

use choicelab::envs::grid::GRID_EPISODE_LEN;
use choicelab::envs::{
    build_foraging, build_gridworld, leader_heatmap, ForagingConfig, ForagingWorld, GridMap,
    GridOptions, GridWorld, HeatmapCell, Scenario, ACTION_COUNT, STAY,
};
use choicelab::learn::{
    evaluate_foraging, evaluate_gridworld, pretrain_leader, pretrain_pair, rollouts,
    train_altruist, AltruistReward, Checkpoints, FrozenLeader, GridMetrics, LeaderBehavior,
    LeaderTraining, PairTraining, QTable, StateView, TrainConfig,
};
use choicelab::{ChoiceMethod, TabularPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};

/// Greedy episodes per gridworld evaluation. Both policies are
/// deterministic, so every episode is the same; the count only matters for
/// stochastic policies loaded from disk.
pub const GRID_EVAL_EPISODES: usize = 10;
pub const FORAGE_EVAL_EVERY: usize = 10_000;
pub const FORAGE_EVAL_EPISODES: usize = 200;
pub const IC_ANALYSIS_EPISODES: usize = 100;
/// Required ratio of trained-pair to random-pair forage reward.
pub const PAIR_GATE_RATIO: f64 = 10.0;

// ---------------------------------------------------------------- heatmaps

/// Leader-only world for heatmaps. Door and Dead End need `freeze`, which
/// pins the door (open or closed) and removes the apple and altruist.
pub fn heatmap_world(scenario: Scenario, freeze: Option<bool>) -> Result<GridWorld> {
    let map = GridMap::parse(scenario.map_text())
        .map_err(|e| HarnessError::Config(format!("map: {e}")))?;
    let options = match (scenario, freeze) {
        (Scenario::OpenGrid, _) => GridOptions::default(),
        (_, None) => {
            return Err(HarnessError::Config(format!(
                "the {} map has an altruist and an apple; pass --freeze open|closed for a leader-only heatmap",
                scenario.name()
            )))
        }
        (_, Some(open)) => GridOptions {
            altruist: false,
            apple: false,
            frozen_door: map.door.map(|_| open),
        },
    };
    Ok(GridWorld::new(map, options)?)
}

pub fn heatmap(
    scenario: Scenario,
    method: ChoiceMethod,
    horizon: usize,
    freeze: Option<bool>,
) -> Result<Vec<HeatmapCell>> {
    if horizon == 0 && method != ChoiceMethod::ImmediateChoice {
        return Err(HarnessError::Config("horizon must be at least 1".into()));
    }
    let world = heatmap_world(scenario, freeze)?;
    Ok(leader_heatmap(&world, method, horizon)?)
}

// --------------------------------------------------------------- gridworld

pub fn grid_scenario(scenario: Scenario) -> Result<GridWorld> {
    if scenario == Scenario::OpenGrid {
        return Err(HarnessError::Config(
            "the open grid has no altruist; use door or dead-end".into(),
        ));
    }
    Ok(build_gridworld(scenario)?)
}

pub fn leader_view(world: &GridWorld) -> StateView {
    StateView::from_keys(&world.leader_view())
}

/// The leader, acting greedily next to a motionless altruist (parked on the
/// switch when there is one), eats the apple within one episode.
pub fn leader_gate(world: &GridWorld, leader: &FrozenLeader) -> Result<bool> {
    let mut s = world.initial_state();
    if let Some(switch) = world.map().switch {
        s.altruist = Some(switch);
        s.door_open = true;
    }
    let start = world
        .encode(&s)
        .ok_or_else(|| HarnessError::Config("gate state is not a valid state".into()))?;
    let stay = TabularPolicy::deterministic(ACTION_COUNT, &vec![STAY; world.state_count()])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eps = rollouts(
        world.game(),
        &[start],
        leader.greedy(),
        &stay,
        GRID_EPISODE_LEN,
        1,
        &mut rng,
    )?;
    Ok(eps[0].leader_reward > 0.0)
}

/// Pretrains the gridworld leader and freezes it; fails the convergence
/// gate if its greedy policy cannot reach the apple unobstructed.
pub fn grid_leader(
    world: &GridWorld,
    config: &TrainConfig,
) -> Result<(LeaderTraining, FrozenLeader)> {
    let view = leader_view(world);
    let training = pretrain_leader(world.game(), &[world.initial_index()], &view, config)?;
    let frozen = FrozenLeader::new(
        training.q.clone(),
        view,
        config.leader_behavior,
        config.ic_temperature,
    )?;
    if !leader_gate(world, &frozen)? {
        return Err(HarnessError::Convergence(format!(
            "leader (seed {}) does not reach the apple unobstructed after {} steps; max |dQ| {:.3e} over the last {} steps",
            config.seed,
            config.env_steps,
            training.convergence.max_abs_delta,
            config.convergence_window,
        )));
    }
    Ok((training, frozen))
}

pub fn grid_altruist(
    world: &GridWorld,
    leader: &FrozenLeader,
    config: &TrainConfig,
) -> Result<QTable> {
    Ok(train_altruist(world.game(), &[world.initial_index()], leader, config, None)?.q)
}

pub fn grid_eval(
    world: &GridWorld,
    leader: &FrozenLeader,
    altruist: &QTable,
    seed: u64,
) -> Result<GridMetrics> {
    Ok(evaluate_gridworld(
        world,
        leader.greedy(),
        &altruist.greedy_policy(),
        GRID_EPISODE_LEN,
        GRID_EVAL_EPISODES,
        seed,
    )?)
}

/// One column of the outcome table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub method: ChoiceMethod,
    pub horizon: usize,
    pub gamma_a: f64,
}

pub const HORIZONS: [usize; 3] = [1, 3, 12];
pub const ALTRUIST_DISCOUNTS: [f64; 2] = [0.1, 0.7];

/// The 12 cells: estimator × horizon × altruist discount.
pub fn sweep_cells() -> Vec<SweepCell> {
    let mut out = Vec::with_capacity(12);
    for method in [ChoiceMethod::DiscreteChoice, ChoiceMethod::EntropicChoice] {
        for horizon in HORIZONS {
            for gamma_a in ALTRUIST_DISCOUNTS {
                out.push(SweepCell {
                    method,
                    horizon,
                    gamma_a,
                });
            }
        }
    }
    out
}

/// Target outcomes `[opens_door, non_blocking, gives_way]` per horizon and
/// discount; identical for both estimators.
pub fn expected_outcomes(horizon: usize, gamma_a: f64) -> [bool; 3] {
    let long = gamma_a > 0.5;
    match horizon {
        1 => [false, !long, true],
        3 => [long, true, true],
        _ => [true, true, false],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub seed: u64,
    pub opens_door: bool,
    pub non_blocking: bool,
    pub gives_way: bool,
    pub door_success_rate: f64,
    pub dead_end_blocked: usize,
    pub dead_end_occupied: usize,
}

impl SweepRow {
    pub fn outcomes(&self) -> [bool; 3] {
        [self.opens_door, self.non_blocking, self.gives_way]
    }
}

fn cell_config(base: &TrainConfig, cell: SweepCell, seed: u64) -> TrainConfig {
    let mut c = base.clone();
    c.seed = seed;
    c.reward = AltruistReward::Choice(cell.method);
    c.horizon = Some(cell.horizon);
    c.altruist_discount = cell.gamma_a;
    c
}

/// Trains and evaluates every cell for every seed. Opening the door is
/// judged in the Door scenario, the other two categories in Dead End.
pub fn run_sweep(base: &TrainConfig, seeds: &[u64], cells: &[SweepCell]) -> Result<Vec<SweepRow>> {
    let door = grid_scenario(Scenario::Door)?;
    let dead_end = grid_scenario(Scenario::DeadEnd)?;
    let worlds = [&door, &dead_end];

    let leader_jobs: Vec<(usize, u64)> = (0..2)
        .flat_map(|w| seeds.iter().map(move |&s| (w, s)))
        .collect();
    let leaders: Vec<FrozenLeader> = leader_jobs
        .par_iter()
        .map(|&(w, seed)| {
            let mut c = base.clone();
            c.seed = seed;
            grid_leader(worlds[w], &c).map(|(_, f)| f)
        })
        .collect::<Result<_>>()?;
    let leader = |w: usize, seed: u64| {
        let i = leader_jobs
            .iter()
            .position(|&j| j == (w, seed))
            .expect("leader trained");
        &leaders[i]
    };

    let jobs: Vec<(SweepCell, u64)> = cells
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(cell, seed)| {
            let config = cell_config(base, cell, seed);
            let door_q = grid_altruist(&door, leader(0, seed), &config)?;
            let door_m = grid_eval(&door, leader(0, seed), &door_q, seed)?;
            let dead_q = grid_altruist(&dead_end, leader(1, seed), &config)?;
            let dead_m = grid_eval(&dead_end, leader(1, seed), &dead_q, seed)?;
            Ok(SweepRow {
                cell,
                seed,
                opens_door: door_m.opens_door,
                non_blocking: dead_m.non_blocking,
                gives_way: dead_m.gives_way,
                door_success_rate: door_m.success_rate(),
                dead_end_blocked: dead_m.blocked_moves,
                dead_end_occupied: dead_m.path_occupied,
            })
        })
        .collect()
}

/// Per-cell agreement across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: SweepCell,
    /// `Some(v)` when every seed produced `v`.
    pub outcomes: [Option<bool>; 3],
    /// Seeds matching the expected outcome, per category.
    pub matching: [usize; 3],
    pub seeds: usize,
    pub expected: [bool; 3],
}

impl CellSummary {
    pub fn reproduced(&self) -> [bool; 3] {
        let mut out = [false; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.outcomes[k] == Some(self.expected[k]);
        }
        out
    }
}

pub fn summarize(rows: &[SweepRow], cells: &[SweepCell]) -> Vec<CellSummary> {
    cells
        .iter()
        .map(|&cell| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.cell == cell).collect();
            let expected = expected_outcomes(cell.horizon, cell.gamma_a);
            let mut outcomes = [None; 3];
            let mut matching = [0; 3];
            for k in 0..3 {
                let vals: Vec<bool> = mine.iter().map(|r| r.outcomes()[k]).collect();
                if !vals.is_empty() && vals.iter().all(|&v| v == vals[0]) {
                    outcomes[k] = Some(vals[0]);
                }
                matching[k] = vals.iter().filter(|&&v| v == expected[k]).count();
            }
            CellSummary {
                cell,
                outcomes,
                matching,
                seeds: mine.len(),
                expected,
            }
        })
        .collect()
}

// ---------------------------------------------------------------- foraging

pub fn forage_world() -> Result<ForagingWorld> {
    Ok(build_foraging(ForagingConfig::default())?)
}

/// A pretrained cooperative pair and its frozen leader.
#[derive(Debug, Clone)]
pub struct ForagePair {
    pub training: PairTraining,
    pub leader: FrozenLeader,
    pub pair_reward: f64,
    pub random_pair_reward: f64,
}

impl ForagePair {
    pub fn cooperative_partner(&self) -> TabularPolicy {
        self.training.partner.greedy_policy()
    }
}

/// Mean forage reward of two uniformly random agents.
pub fn random_pair_reward(world: &ForagingWorld, episodes: usize, seed: u64) -> Result<f64> {
    let n = world.game().state_count();
    let uniform = TabularPolicy::uniform(n, ACTION_COUNT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = rollouts(
        world.game(),
        &[world.initial_index()],
        &uniform,
        &uniform,
        world.config().episode_len,
        episodes,
        &mut rng,
    )?;
    Ok(eps.iter().map(|e| e.leader_reward).sum::<f64>() / episodes as f64)
}

/// Shared-reward pretraining of the pair, gated on reaching
/// [`PAIR_GATE_RATIO`] times the random pair's forage reward.
pub fn forage_pair(world: &ForagingWorld, config: &TrainConfig) -> Result<ForagePair> {
    let training = pretrain_pair(world.game(), &[world.initial_index()], config)?;
    let n = world.game().state_count();
    let leader = FrozenLeader::new(
        training.leader.clone(),
        StateView::full(n),
        LeaderBehavior::Greedy,
        config.ic_temperature,
    )?;
    let partner = training.partner.greedy_policy();
    let pair_reward =
        evaluate_foraging(world, &leader, &partner, FORAGE_EVAL_EPISODES, config.seed)?.mean_reward;
    let random = random_pair_reward(world, FORAGE_EVAL_EPISODES, config.seed)?;
    if pair_reward <= 0.0 || pair_reward < PAIR_GATE_RATIO * random {
        return Err(HarnessError::Convergence(format!(
            "foraging pair (seed {}) forages {pair_reward:.3} per episode, random pair {random:.3}; need {PAIR_GATE_RATIO}x",
            config.seed
        )));
    }
    Ok(ForagePair {
        training,
        leader,
        pair_reward,
        random_pair_reward: random,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    /// Partner trained on the leader's immediate choice.
    Ours,
    /// Untrained, uniformly random partner.
    Random,
    /// Partner trained on the leader's own reward.
    Supervised,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Ours, Baseline::Random, Baseline::Supervised];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Ours => "ours",
            Baseline::Random => "random",
            Baseline::Supervised => "supervised",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub baseline: Baseline,
    pub seed: u64,
    pub step: usize,
    pub reward: f64,
    pub ic_percent: f64,
}

fn baseline_curve(
    world: &ForagingWorld,
    pair: &ForagePair,
    config: &TrainConfig,
    baseline: Baseline,
    every: usize,
) -> Result<Vec<CurvePoint>> {
    let seed = config.seed;
    let point = |step: usize, partner: &TabularPolicy| -> Result<CurvePoint> {
        let m = evaluate_foraging(world, &pair.leader, partner, FORAGE_EVAL_EPISODES, seed)?;
        Ok(CurvePoint {
            baseline,
            seed,
            step,
            reward: m.mean_reward,
            ic_percent: m.mean_ic_percent,
        })
    };
    let reward = match baseline {
        Baseline::Random => {
            let uniform = TabularPolicy::uniform(world.game().state_count(), ACTION_COUNT);
            let p = point(0, &uniform)?;
            return Ok((every..=config.env_steps)
                .step_by(every)
                .map(|step| CurvePoint { step, ..p })
                .collect());
        }
        Baseline::Ours => AltruistReward::Choice(ChoiceMethod::ImmediateChoice),
        Baseline::Supervised => AltruistReward::Shared,
    };
    let mut c = config.clone();
    c.reward = reward;
    let mut points = Vec::new();
    let mut failure = None;
    let mut callback = |step: usize, q: &QTable| -> choicelab::Result<()> {
        match point(step, &q.greedy_policy()) {
            Ok(p) => points.push(p),
            Err(e) => failure = Some(e),
        }
        Ok(())
    };
    train_altruist(
        world.game(),
        &[world.initial_index()],
        &pair.leader,
        &c,
        Some(Checkpoints {
            every,
            callback: &mut callback,
        }),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(points),
    }
}

/// Learning curves of each baseline for each seed: a fresh pair is
/// pretrained per seed, then each partner trains next to its frozen leader.
pub fn forage_curves(
    config: &TrainConfig,
    seeds: &[u64],
    baselines: &[Baseline],
    every: usize,
) -> Result<Vec<CurvePoint>> {
    if every == 0 {
        return Err(HarnessError::Config(
            "evaluation interval must be positive".into(),
        ));
    }
    let world = forage_world()?;
    let pairs: Vec<ForagePair> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            forage_pair(&world, &c)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Baseline)> = (0..seeds.len())
        .flat_map(|i| baselines.iter().map(move |&b| (i, b)))
        .collect();
    let curves: Vec<Vec<CurvePoint>> = jobs
        .par_iter()
        .map(|&(i, b)| {
            let mut c = config.clone();
            c.seed = seeds[i];
            baseline_curve(&world, &pairs[i], &c, b, every)
        })
        .collect::<Result<_>>()?;
    Ok(curves.into_iter().flatten().collect())
}

/// Mean reward of `baseline` at its last checkpoint, per seed.
pub fn final_rewards(points: &[CurvePoint], baseline: Baseline) -> Vec<f64> {
    let Some(last) = points
        .iter()
        .filter(|p| p.baseline == baseline)
        .map(|p| p.step)
        .max()
    else {
        return Vec::new();
    };
    points
        .iter()
        .filter(|p| p.baseline == baseline && p.step == last)
        .map(|p| p.reward)
        .collect()
}

/// Seed-averaged `(step, reward, ic_percent)` of one baseline.
pub fn mean_curve(points: &[CurvePoint], baseline: Baseline) -> Vec<(usize, f64, f64)> {
    let mut steps: Vec<usize> = points
        .iter()
        .filter(|p| p.baseline == baseline)
        .map(|p| p.step)
        .collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|step| {
            let at: Vec<&CurvePoint> = points
                .iter()
                .filter(|p| p.baseline == baseline && p.step == step)
                .collect();
            let n = at.len() as f64;
            (
                step,
                at.iter().map(|p| p.reward).sum::<f64>() / n,
                at.iter().map(|p| p.ic_percent).sum::<f64>() / n,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcRow {
    pub partner: &'static str,
    pub seed: u64,
    pub ic_percent: f64,
    pub forage_score: f64,
    pub reward: f64,
}

/// Leader IC next to its own cooperative partner and next to a random one.
pub fn ic_analysis(config: &TrainConfig, seeds: &[u64]) -> Result<Vec<IcRow>> {
    let world = forage_world()?;
    let per_seed: Vec<Vec<IcRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            let pair = forage_pair(&world, &c)?;
            let uniform = TabularPolicy::uniform(world.game().state_count(), ACTION_COUNT);
            let mut rows = Vec::with_capacity(2);
            for (name, partner) in [
                ("cooperative", pair.cooperative_partner()),
                ("random", uniform),
            ] {
                let m =
                    evaluate_foraging(&world, &pair.leader, &partner, IC_ANALYSIS_EPISODES, seed)?;
                rows.push(IcRow {
                    partner: name,
                    seed,
                    ic_percent: m.mean_ic_percent,
                    forage_score: m.forage_score,
                    reward: m.mean_reward,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Freezes a leader table loaded from disk.
pub fn leader_from_table(
    world: &GridWorld,
    q: QTable,
    config: &TrainConfig,
) -> Result<FrozenLeader> {
    Ok(FrozenLeader::new(
        q,
        leader_view(world),
        config.leader_behavior,
        config.ic_temperature,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_cells_with_expected_pattern() {
        let cells = sweep_cells();
        assert_eq!(cells.len(), 12);
        assert_eq!(expected_outcomes(12, 0.7), [true, true, false]);
        assert_eq!(expected_outcomes(1, 0.1), [false, true, true]);
        assert_eq!(expected_outcomes(1, 0.7), [false, false, true]);
        assert_eq!(expected_outcomes(3, 0.1), [false, true, true]);
        assert_eq!(expected_outcomes(3, 0.7), [true, true, true]);
    }

    #[test]
    fn heatmaps_need_a_freeze_flag_for_door_worlds() {
        let e = heatmap(Scenario::Door, ChoiceMethod::EntropicChoice, 3, None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let open = heatmap(Scenario::Door, ChoiceMethod::DiscreteChoice, 3, Some(true)).unwrap();
        let closed = heatmap(Scenario::Door, ChoiceMethod::DiscreteChoice, 3, Some(false)).unwrap();
        // the closed door cell itself is unreachable
        assert_eq!(open.len(), closed.len() + 1);
        assert!(closed.iter().any(|c| {
            let o = open.iter().find(|o| o.cell == c.cell).unwrap();
            o.value > c.value
        }));
        assert!(heatmap(
            Scenario::DeadEnd,
            ChoiceMethod::ImmediateChoice,
            1,
            Some(false)
        )
        .is_ok());
    }

    #[test]
    fn summary_requires_unanimity() {
        let cell = sweep_cells()[0];
        let row = |seed, opens| SweepRow {
            cell,
            seed,
            opens_door: opens,
            non_blocking: true,
            gives_way: true,
            door_success_rate: 0.0,
            dead_end_blocked: 0,
            dead_end_occupied: 0,
        };
        let s = summarize(&[row(0, false), row(1, true)], &[cell]);
        assert_eq!(s[0].outcomes, [None, Some(true), Some(true)]);
        assert_eq!(s[0].matching, [1, 2, 2]);
        assert_eq!(s[0].reproduced(), [false, true, true]);
    }

    #[test]
    fn untrained_leader_fails_the_gate() {
        let mut c = TrainConfig::gridworld();
        c.env_steps = 10;
        let world = grid_scenario(Scenario::DeadEnd).unwrap();
        let e = grid_leader(&world, &c).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn baseline_names_parse() {
        for b in Baseline::ALL {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
        assert!("mepol".parse::<Baseline>().is_err());
    }
}
