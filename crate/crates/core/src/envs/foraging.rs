//! Two-agent cooperative foraging on an open grid.
//!
//! Both agents are level 1 and every apple is level 2, so an apple is only
//! foraged when the two agents stand next to it at the same time. There is
//! no eat action: after a simultaneous move, every apple with both agents on
//! adjacent cells is removed and pays 1.0 to each agent. Uneaten apples block
//! movement. Movement conflicts resolve as in the gridworld (leader first,
//! swaps allowed).

use std::collections::HashMap;

use crate::envs::grid::{ACTION_COUNT, STAY};
use crate::envs::map::Cell;
use crate::error::{Error, Result};
use crate::mdp::{GameSpec, MarkovGame, StateDistribution, StateIndex};

const DELTAS: [(isize, isize); ACTION_COUNT] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForagingConfig {
    pub rows: usize,
    pub cols: usize,
    pub apples: Vec<Cell>,
    pub leader_spawn: Cell,
    pub partner_spawn: Cell,
    pub episode_len: usize,
}

impl Default for ForagingConfig {
    fn default() -> Self {
        ForagingConfig {
            rows: 6,
            cols: 6,
            apples: vec![Cell::one_based(2, 3), Cell::one_based(5, 4)],
            leader_spawn: Cell::one_based(1, 1),
            partner_spawn: Cell::one_based(6, 6),
            episode_len: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForagingState {
    pub leader: Cell,
    pub partner: Cell,
    /// One flag per configured apple.
    pub apple_present: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ForagingWorld {
    config: ForagingConfig,
    states: Vec<ForagingState>,
    index: HashMap<ForagingState, usize>,
    game: MarkovGame,
}

pub fn build_foraging(config: ForagingConfig) -> Result<ForagingWorld> {
    ForagingWorld::new(config)
}

impl ForagingWorld {
    pub fn new(config: ForagingConfig) -> Result<Self> {
        if config.rows == 0 || config.cols == 0 {
            return Err(Error::Config("foraging grid must be non-empty".into()));
        }
        if config.apples.len() > 16 {
            return Err(Error::Config("at most 16 apples".into()));
        }
        let in_grid = |c: &Cell| c.row < config.rows && c.col < config.cols;
        for (i, a) in config.apples.iter().enumerate() {
            if !in_grid(a) {
                return Err(Error::Config(format!("apple {a} outside the grid")));
            }
            if config.apples[..i].contains(a) {
                return Err(Error::Config(format!("duplicate apple {a}")));
            }
        }
        for (who, c) in [
            ("leader", config.leader_spawn),
            ("partner", config.partner_spawn),
        ] {
            if !in_grid(&c) || config.apples.contains(&c) {
                return Err(Error::Config(format!("{who} spawn {c} is not a free cell")));
            }
        }
        if config.leader_spawn == config.partner_spawn {
            return Err(Error::Config("spawns coincide".into()));
        }

        let mut world = ForagingWorld {
            config,
            states: Vec::new(),
            index: HashMap::new(),
            game: MarkovGame::from_fn(
                GameSpec {
                    state_count: 1,
                    action_counts: vec![1],
                    initial: StateDistribution::uniform(1),
                    discounts: vec![0.0],
                    hold_actions: vec![None],
                    altruist_state: None,
                },
                |s, _| Ok((s, vec![0.0])),
            )?,
        };
        world.enumerate();
        world.game = world.build_game()?;
        Ok(world)
    }

    fn enumerate(&mut self) {
        let k = self.config.apples.len();
        let cells: Vec<Cell> = (0..self.config.rows)
            .flat_map(|r| (0..self.config.cols).map(move |c| Cell::new(r, c)))
            .collect();
        // all apples present first, so the initial state sits in the first block
        for mask in (0..(1u32 << k)).rev() {
            let present: Vec<bool> = (0..k).map(|i| mask & (1 << i) != 0).collect();
            let free: Vec<Cell> = cells
                .iter()
                .copied()
                .filter(|c| {
                    !self
                        .config
                        .apples
                        .iter()
                        .zip(&present)
                        .any(|(a, &p)| p && a == c)
                })
                .collect();
            for &partner in &free {
                for &leader in &free {
                    if leader == partner {
                        continue;
                    }
                    let s = ForagingState {
                        leader,
                        partner,
                        apple_present: present.clone(),
                    };
                    self.index.insert(s.clone(), self.states.len());
                    self.states.push(s);
                }
            }
        }
    }

    fn build_game(&self) -> Result<MarkovGame> {
        let cols = self.config.cols;
        let start = self.index[&self.initial_state()];
        MarkovGame::from_fn(
            GameSpec {
                state_count: self.states.len(),
                action_counts: vec![ACTION_COUNT, ACTION_COUNT],
                initial: StateDistribution::point(self.states.len(), StateIndex(start))?,
                discounts: vec![0.9, 0.9],
                hold_actions: vec![Some(STAY), Some(STAY)],
                altruist_state: Some(
                    self.states
                        .iter()
                        .map(|s| (s.partner.row * cols + s.partner.col) as u32)
                        .collect(),
                ),
            },
            |s, a| {
                let (next, r) = self.step(&self.states[s.0], a)?;
                Ok((StateIndex(self.index[&next]), r.to_vec()))
            },
        )
    }

    pub fn config(&self) -> &ForagingConfig {
        &self.config
    }

    pub fn game(&self) -> &MarkovGame {
        &self.game
    }

    pub fn states(&self) -> &[ForagingState] {
        &self.states
    }

    pub fn initial_state(&self) -> ForagingState {
        ForagingState {
            leader: self.config.leader_spawn,
            partner: self.config.partner_spawn,
            apple_present: vec![true; self.config.apples.len()],
        }
    }

    pub fn initial_index(&self) -> StateIndex {
        StateIndex(self.index[&self.initial_state()])
    }

    pub fn encode(&self, s: &ForagingState) -> Option<StateIndex> {
        self.index.get(s).map(|&i| StateIndex(i))
    }

    pub fn decode(&self, s: StateIndex) -> &ForagingState {
        &self.states[s.0]
    }

    fn is_open(&self, c: Cell, present: &[bool]) -> bool {
        !self
            .config
            .apples
            .iter()
            .zip(present)
            .any(|(a, &p)| p && *a == c)
    }

    fn target(&self, from: Cell, action: usize, present: &[bool]) -> Cell {
        let (dr, dc) = DELTAS[action];
        let r = from.row as isize + dr;
        let c = from.col as isize + dc;
        if r < 0 || c < 0 || r as usize >= self.config.rows || c as usize >= self.config.cols {
            return from;
        }
        let t = Cell::new(r as usize, c as usize);
        if self.is_open(t, present) {
            t
        } else {
            from
        }
    }

    pub fn validate(&self, s: &ForagingState) -> Result<()> {
        if s.apple_present.len() != self.config.apples.len() {
            return Err(Error::InvalidState("apple flag count".into()));
        }
        if !self.index.contains_key(s) {
            return Err(Error::InvalidState(format!(
                "{s:?} is not a legal foraging state"
            )));
        }
        Ok(())
    }

    /// One simultaneous move; returns the successor and (leader, partner)
    /// rewards.
    pub fn step(&self, s: &ForagingState, actions: &[usize]) -> Result<(ForagingState, [f64; 2])> {
        if !self.index.is_empty() {
            self.validate(s)?;
        }
        if actions.len() != 2 || actions.iter().any(|&a| a >= ACTION_COUNT) {
            return Err(Error::InvalidState(format!(
                "bad foraging actions {actions:?}"
            )));
        }
        let (l, p) = (s.leader, s.partner);
        let mut lt = self.target(l, actions[0], &s.apple_present);
        let mut pt = self.target(p, actions[1], &s.apple_present);
        if pt == lt || (pt == l && lt == l) {
            pt = p;
        }
        if lt == p && pt == p {
            lt = l;
        }
        let mut present = s.apple_present.clone();
        let mut foraged = 0.0;
        for (apple, flag) in self.config.apples.iter().zip(present.iter_mut()) {
            // distinct cells adjacent to one apple are always on different sides
            if *flag && lt.is_adjacent(*apple) && pt.is_adjacent(*apple) {
                *flag = false;
                foraged += 1.0;
            }
        }
        Ok((
            ForagingState {
                leader: lt,
                partner: pt,
                apple_present: present,
            },
            [foraged, foraged],
        ))
    }

    /// Number of apples still on the grid.
    pub fn apples_left(&self, s: StateIndex) -> usize {
        self.states[s.0]
            .apple_present
            .iter()
            .filter(|&&p| p)
            .count()
    }

    /// Legend: `L` leader, `P` partner, `G` apple, `.` empty.
    pub fn render(&self, s: &ForagingState) -> String {
        let mut out = String::new();
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                let cell = Cell::new(r, c);
                let g = if cell == s.leader {
                    'L'
                } else if cell == s.partner {
                    'P'
                } else if !self.is_open(cell, &s.apple_present) {
                    'G'
                } else {
                    '.'
                };
                out.push(g);
            }
            if r + 1 < self.config.rows {
                out.push('\n');
            }
        }
        out
    }
}
