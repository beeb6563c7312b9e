//! Choice of a randomly acting leader placed on each free cell.

use crate::choice::{entropy, ChoiceMethod, DEFAULT_SUPPORT_EPS};
use crate::envs::grid::{GridWorld, ACTION_COUNT};
use crate::envs::map::Cell;
use crate::error::{Error, Result};
use crate::mdp::{StateIndex, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapCell {
    pub cell: Cell,
    pub value: f64,
}

/// One estimate per leader cell, in row-major order, for a leader acting
/// uniformly at random.
///
/// DC and EC use the `horizon`-step state distribution. IC is the entropy of
/// the one-step successor distribution: the policy entropy of a uniform
/// leader is `ln 5` everywhere, so the map shows how many of its actions
/// lead to distinct cells, and equals the policy entropy wherever they all
/// do. The world must be leader-only with no apple; a door must be pinned.
pub fn leader_heatmap(
    world: &GridWorld,
    method: ChoiceMethod,
    horizon: usize,
) -> Result<Vec<HeatmapCell>> {
    if world.has_altruist() || world.has_apple() {
        return Err(Error::Config(
            "heatmaps need a leader-only world without apple".into(),
        ));
    }
    let game = world.game();
    let policy = TabularPolicy::uniform(game.state_count(), ACTION_COUNT);
    let n = match method {
        ChoiceMethod::ImmediateChoice => 1,
        _ => horizon,
    };
    let mut out = Vec::with_capacity(world.state_count());
    for (i, s) in world.states().iter().enumerate() {
        let dist = game.n_step_distribution(&[&policy], StateIndex(i), n)?;
        let p = dist.as_slice();
        let value = match method {
            ChoiceMethod::DiscreteChoice => {
                p.iter().filter(|&&x| x > DEFAULT_SUPPORT_EPS).count() as f64
            }
            _ => entropy(p),
        };
        out.push(HeatmapCell {
            cell: s.leader,
            value,
        });
    }
    out.sort_by_key(|h| (h.cell.row, h.cell.col));
    Ok(out)
}
