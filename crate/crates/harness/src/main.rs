use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use choicelab::envs::{build_gridworld, GridWorld, Scenario, ACTION_COUNT};
use choicelab::learn::{AltruistReward, QTable, TrainConfig};
use choicelab::{ChoiceMethod, StateIndex};
use choicelab_harness::config::{apply_all, parse_overrides, parse_reward, render};
use choicelab_harness::experiments::{self as ex, Baseline};
use choicelab_harness::output::{RunOutput, Table};
use choicelab_harness::stats::{mean, spearman, std_dev};
use choicelab_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "choicelab",
    version,
    about = "Altruistic choice-maximising agents in tabular Markov games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// File of `key = value` training overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `runs/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Environment steps per training run.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy)]
enum Door {
    Open,
    Closed,
}

#[derive(Subcommand)]
enum Command {
    /// Choice of a uniformly random leader at every cell of a leader-only map.
    Heatmap {
        #[arg(long, default_value = "open")]
        scenario: Scenario,
        #[arg(long, default_value = "EC")]
        method: ChoiceMethod,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        /// Pin the door of Door or Dead End and drop the apple and altruist.
        #[arg(long)]
        freeze: Option<Door>,
        #[command(flatten)]
        common: Common,
    },
    /// Gridworld outcome table over estimators, horizons and discounts.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// Restrict to one estimator.
        #[arg(long)]
        method: Option<ChoiceMethod>,
        /// Restrict to one horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Restrict to one altruist discount.
        #[arg(long = "gamma-a")]
        gamma_a: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Foraging learning curves of the ours, random and supervised partners.
    Forage {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        /// Evaluation interval in environment steps.
        #[arg(long, default_value_t = ex::FORAGE_EVAL_EVERY)]
        every: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Leader choice next to its cooperative partner versus a random one.
    IcAnalysis {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Pretrains a gridworld leader and writes its Q-table.
    Pretrain {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Trains an altruist next to a pretrained leader.
    Train {
        #[arg(long)]
        scenario: Scenario,
        /// DC, EC, IC or `shared` for the leader's own reward.
        #[arg(long, default_value = "EC")]
        method: String,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long = "gamma-a", default_value_t = 0.7)]
        gamma_a: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leader Q-table written by `pretrain`.
        #[arg(long)]
        leader: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy evaluation of a leader and altruist pair.
    Eval {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        leader: PathBuf,
        #[arg(long)]
        altruist: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Prints a gridworld state.
    Render {
        #[arg(long)]
        scenario: Scenario,
        /// State index (default: the spawn state).
        #[arg(long)]
        state: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Heatmap { .. } => "heatmap",
            Command::Sweep { .. } => "sweep",
            Command::Forage { .. } => "forage",
            Command::IcAnalysis { .. } => "ic-analysis",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Render { .. } => "render",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Heatmap { common, .. }
            | Command::Sweep { common, .. }
            | Command::Forage { common, .. }
            | Command::IcAnalysis { common, .. }
            | Command::Pretrain { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Render { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Preset, then the config file, then `--steps` and `--seed`.
fn load_config(mut base: TrainConfig, common: &Common, seed: Option<u64>) -> Result<TrainConfig> {
    let mut overrides = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            parse_overrides(&text)?
        }
        None => Vec::new(),
    };
    if let Some(steps) = common.steps {
        overrides.push(("env_steps".into(), steps.to_string()));
    }
    if let Some(seed) = seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    apply_all(&mut base, &overrides)?;
    Ok(base)
}

fn open_output(cmd: &Command) -> Result<RunOutput> {
    let dir = cmd
        .common()
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(cmd.name()));
    RunOutput::create(&dir, cmd.name())
}

fn read_table(path: &Path, states: usize) -> Result<QTable> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(QTable::from_csv(&text, states, ACTION_COUNT)?)
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Heatmap {
            scenario,
            method,
            horizon,
            freeze,
            ..
        } => {
            let freeze = freeze.map(|d| matches!(d, Door::Open));
            let cells = ex::heatmap(*scenario, *method, *horizon, freeze)?;
            let mut t = Table::new(&["row", "col", "value"]);
            for c in &cells {
                t.push(vec![
                    (c.cell.row + 1).to_string(),
                    (c.cell.col + 1).to_string(),
                    f(c.value),
                ]);
            }
            let mut out = open_output(cmd)?;
            out.param("scenario", scenario.name());
            out.param("method", method.short());
            out.param("horizon", *horizon);
            if let Some(open) = freeze {
                out.param("door", if open { "open" } else { "closed" });
            }
            out.write_table("heatmap.csv", &t)?;
            out.finish()?;
        }
        Command::Sweep {
            seeds,
            method,
            horizon,
            gamma_a,
            common,
        } => {
            let config = load_config(TrainConfig::gridworld(), common, None)?;
            let cells: Vec<ex::SweepCell> = ex::sweep_cells()
                .into_iter()
                .filter(|c| method.is_none_or(|m| m == c.method))
                .filter(|c| horizon.is_none_or(|h| h == c.horizon))
                .filter(|c| gamma_a.is_none_or(|g| (g - c.gamma_a).abs() < 1e-12))
                .collect();
            if cells.is_empty() || seeds.is_empty() {
                return Err(HarnessError::Config(
                    "no sweep cells or seeds selected".into(),
                ));
            }
            let rows = ex::run_sweep(&config, seeds, &cells)?;
            let mut t = Table::new(&[
                "method",
                "horizon",
                "gamma_a",
                "seed",
                "opens_door",
                "non_blocking",
                "gives_way",
                "door_success_rate",
                "dead_end_occupied",
                "dead_end_blocked",
            ]);
            for r in &rows {
                t.push(vec![
                    r.cell.method.short().into(),
                    r.cell.horizon.to_string(),
                    f(r.cell.gamma_a),
                    r.seed.to_string(),
                    r.opens_door.to_string(),
                    r.non_blocking.to_string(),
                    r.gives_way.to_string(),
                    f(r.door_success_rate),
                    r.dead_end_occupied.to_string(),
                    r.dead_end_blocked.to_string(),
                ]);
            }
            let mut s = Table::new(&[
                "method",
                "horizon",
                "gamma_a",
                "category",
                "observed",
                "expected",
                "matching_seeds",
                "seeds",
            ]);
            let names = ["opens_door", "non_blocking", "gives_way"];
            let mut reproduced = 0;
            let summary = ex::summarize(&rows, &cells);
            for c in &summary {
                for (k, name) in names.iter().enumerate() {
                    let observed = c.outcomes[k].map_or("mixed".to_string(), |v| v.to_string());
                    reproduced += c.reproduced()[k] as usize;
                    s.push(vec![
                        c.cell.method.short().into(),
                        c.cell.horizon.to_string(),
                        f(c.cell.gamma_a),
                        (*name).into(),
                        observed,
                        c.expected[k].to_string(),
                        c.matching[k].to_string(),
                        c.seeds.to_string(),
                    ]);
                }
            }
            let mut out = open_output(cmd)?;
            out.param("seeds", seeds.clone());
            out.param("config", render(&config));
            out.note(format!(
                "{reproduced}/{} outcomes unanimous and as expected",
                3 * summary.len()
            ));
            out.write_table("sweep.csv", &t)?;
            out.write_table("sweep_summary.csv", &s)?;
            out.finish()?;
            println!("{reproduced}/{} outcomes reproduced", 3 * summary.len());
        }
        Command::Forage {
            seeds,
            every,
            common,
        } => {
            let config = load_config(TrainConfig::foraging(), common, None)?;
            let points = ex::forage_curves(&config, seeds, &Baseline::ALL, *every)?;
            let supervised = mean(&ex::final_rewards(&points, Baseline::Supervised));
            let norm = |r: f64| {
                if supervised > 0.0 {
                    r / supervised
                } else {
                    f64::NAN
                }
            };
            let mut t = Table::new(&[
                "baseline",
                "seed",
                "step",
                "reward",
                "normalized_reward",
                "ic_percent",
            ]);
            for p in &points {
                t.push(vec![
                    p.baseline.name().into(),
                    p.seed.to_string(),
                    p.step.to_string(),
                    f(p.reward),
                    f(norm(p.reward)),
                    f(p.ic_percent),
                ]);
            }
            let mut s = Table::new(&[
                "baseline",
                "final_mean",
                "final_std",
                "normalized_mean",
                "ic_reward_spearman",
            ]);
            for b in Baseline::ALL {
                let finals = ex::final_rewards(&points, b);
                let curve: Vec<&ex::CurvePoint> =
                    points.iter().filter(|p| p.baseline == b).collect();
                let rho = spearman(
                    &curve.iter().map(|p| p.ic_percent).collect::<Vec<_>>(),
                    &curve.iter().map(|p| p.reward).collect::<Vec<_>>(),
                );
                s.push(vec![
                    b.name().into(),
                    f(mean(&finals)),
                    f(std_dev(&finals)),
                    f(norm(mean(&finals))),
                    rho.map_or("nan".into(), f),
                ]);
            }
            let mut out = open_output(cmd)?;
            out.param("seeds", seeds.clone());
            out.param("every", *every);
            out.param("episodes", ex::FORAGE_EVAL_EPISODES);
            out.param("config", render(&config));
            out.note("normalized_reward divides by the supervised baseline's final mean reward");
            out.write_table("forage_curves.csv", &t)?;
            out.write_table("forage_summary.csv", &s)?;
            out.finish()?;
        }
        Command::IcAnalysis { seeds, common } => {
            let config = load_config(TrainConfig::foraging(), common, None)?;
            let rows = ex::ic_analysis(&config, seeds)?;
            let mut t = Table::new(&["partner", "seed", "ic_percent", "forage_score", "reward"]);
            for r in &rows {
                t.push(vec![
                    r.partner.into(),
                    r.seed.to_string(),
                    f(r.ic_percent),
                    f(r.forage_score),
                    f(r.reward),
                ]);
            }
            let mut out = open_output(cmd)?;
            out.param("seeds", seeds.clone());
            out.param("episodes", ex::IC_ANALYSIS_EPISODES);
            out.param("config", render(&config));
            out.write_table("ic_analysis.csv", &t)?;
            out.finish()?;
        }
        Command::Pretrain {
            scenario,
            seed,
            common,
        } => {
            let world = ex::grid_scenario(*scenario)?;
            let config = load_config(TrainConfig::gridworld(), common, Some(*seed))?;
            let (training, _) = ex::grid_leader(&world, &config)?;
            let mut out = open_output(cmd)?;
            out.param("scenario", scenario.name());
            out.param("config", render(&config));
            out.param("max_abs_delta", training.convergence.max_abs_delta);
            out.write_text("leader_q.csv", &training.q.to_csv())?;
            out.finish()?;
        }
        Command::Train {
            scenario,
            method,
            horizon,
            gamma_a,
            seed,
            leader,
            common,
        } => {
            let world = ex::grid_scenario(*scenario)?;
            let mut config = load_config(TrainConfig::gridworld(), common, Some(*seed))?;
            config.reward = parse_reward(method)?;
            config.horizon = match config.reward {
                AltruistReward::Choice(ChoiceMethod::ImmediateChoice) | AltruistReward::Shared => {
                    None
                }
                AltruistReward::Choice(_) => Some(*horizon),
            };
            config.altruist_discount = *gamma_a;
            config.validate()?;
            let frozen = load_leader(&world, leader, &config)?;
            let q = ex::grid_altruist(&world, &frozen, &config)?;
            let mut out = open_output(cmd)?;
            out.param("scenario", scenario.name());
            out.param("leader", leader.display().to_string());
            out.param("config", render(&config));
            out.write_text("altruist_q.csv", &q.to_csv())?;
            out.finish()?;
        }
        Command::Eval {
            scenario,
            leader,
            altruist,
            seed,
            common,
        } => {
            let world = ex::grid_scenario(*scenario)?;
            let config = load_config(TrainConfig::gridworld(), common, Some(*seed))?;
            let frozen = load_leader(&world, leader, &config)?;
            let q = read_table(altruist, world.state_count())?;
            let m = ex::grid_eval(&world, &frozen, &q, *seed)?;
            let mut t = Table::new(&[
                "opens_door",
                "non_blocking",
                "gives_way",
                "success_rate",
                "occupied",
                "blocked",
            ]);
            t.push(vec![
                m.opens_door.to_string(),
                m.non_blocking.to_string(),
                m.gives_way.to_string(),
                f(m.success_rate()),
                m.path_occupied.to_string(),
                m.blocked_moves.to_string(),
            ]);
            let mut out = open_output(cmd)?;
            out.param("scenario", scenario.name());
            out.param("episodes", ex::GRID_EVAL_EPISODES);
            out.write_table("eval.csv", &t)?;
            out.finish()?;
        }
        Command::Render {
            scenario,
            state,
            common,
        } => {
            let world = build_gridworld(*scenario)?;
            let s = state.map_or(world.initial_index(), StateIndex);
            if s.0 >= world.state_count() {
                return Err(HarnessError::Config(format!(
                    "state {} out of range (world has {} states)",
                    s.0,
                    world.state_count()
                )));
            }
            let mut text = world.render(world.decode(s));
            if !text.ends_with('\n') {
                text.push('\n');
            }
            print!("{text}");
            if common.out.is_some() {
                let mut out = open_output(cmd)?;
                out.param("scenario", scenario.name());
                out.param("state", s.0);
                out.write_text("render.txt", &text)?;
                out.finish()?;
            }
        }
    }
    Ok(())
}

fn load_leader(
    world: &GridWorld,
    path: &Path,
    config: &TrainConfig,
) -> Result<choicelab::learn::FrozenLeader> {
    let observations = ex::leader_view(world).observations();
    let q = read_table(path, observations)?;
    ex::leader_from_table(world, q, config)
}
