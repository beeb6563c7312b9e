//! Single-occupancy gridworlds with an optional door, switch and apple.
//!
//! Both agents move simultaneously with actions up, down, left, right, stay.
//! A move into a wall, a blocked cell, a closed door or out of the grid
//! becomes stay. When both agents target the same cell the leader gets it.
//! Agents may swap cells. The door is open exactly while the altruist stands
//! on the switch, is passable only by the leader, and the altruist cannot
//! step off the switch while the leader is in the doorway or entering it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::envs::map::{Cell, GridMap};
use crate::error::{Error, Result};
use crate::mdp::{GameSpec, MarkovGame, StateDistribution, StateIndex};

pub const ACTION_COUNT: usize = 5;
/// Action ids: up, down, left, right, stay.
pub const STAY: usize = 4;
pub const ACTION_NAMES: [&str; ACTION_COUNT] = ["up", "down", "left", "right", "stay"];
const DELTAS: [(isize, isize); ACTION_COUNT] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

pub const OPEN_GRID_MAP: &str = include_str!("../../maps/open.map");
pub const DOOR_MAP: &str = include_str!("../../maps/door.map");
pub const DEAD_END_MAP: &str = include_str!("../../maps/dead_end.map");

/// Episode length for every gridworld scenario.
pub const GRID_EPISODE_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    OpenGrid,
    Door,
    DeadEnd,
}

impl Scenario {
    pub fn map_text(self) -> &'static str {
        match self {
            Scenario::OpenGrid => OPEN_GRID_MAP,
            Scenario::Door => DOOR_MAP,
            Scenario::DeadEnd => DEAD_END_MAP,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::OpenGrid => "open",
            Scenario::Door => "door",
            Scenario::DeadEnd => "dead-end",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "open" | "open-grid" | "opengrid" => Ok(Scenario::OpenGrid),
            "door" => Ok(Scenario::Door),
            "dead-end" | "deadend" => Ok(Scenario::DeadEnd),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub leader: Cell,
    pub altruist: Option<Cell>,
    pub door_open: bool,
    pub apple_present: bool,
}

/// Which map features take part in the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    /// Include the altruist if the map has a spawn for it.
    pub altruist: bool,
    /// Include the apple if the map has one.
    pub apple: bool,
    /// Pin the door state; required for maps with a door but no altruist.
    pub frozen_door: Option<bool>,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            altruist: true,
            apple: true,
            frozen_door: None,
        }
    }
}

/// An enumerated gridworld and its Markov game.
#[derive(Debug, Clone)]
pub struct GridWorld {
    map: GridMap,
    has_altruist: bool,
    has_apple: bool,
    frozen_door: Option<bool>,
    states: Vec<GridState>,
    index: HashMap<GridState, usize>,
    initial: GridState,
    game: MarkovGame,
}

/// Builds one of the shipped scenarios with every feature active.
pub fn build_gridworld(scenario: Scenario) -> Result<GridWorld> {
    let map = GridMap::parse(scenario.map_text())
        .map_err(|e| Error::InvalidGame(format!("shipped {scenario} map: {e}")))?;
    GridWorld::new(map, GridOptions::default())
}

impl GridWorld {
    pub fn new(map: GridMap, options: GridOptions) -> Result<Self> {
        let has_altruist = options.altruist && map.altruist_spawn.is_some();
        let has_apple = options.apple && map.apple.is_some();
        let frozen_door = match (map.door, has_altruist, options.frozen_door) {
            (None, _, _) => None,
            (Some(_), true, None) => None,
            (Some(_), false, None) => {
                return Err(Error::Config(
                    "map has a door but no altruist; pin the door state".into(),
                ))
            }
            (Some(_), true, Some(_)) => {
                return Err(Error::Config(
                    "door is driven by the altruist and cannot be pinned".into(),
                ))
            }
            (Some(_), false, Some(open)) => Some(open),
        };

        let mut world = GridWorld {
            initial: GridState {
                leader: map.leader_spawn,
                altruist: None,
                door_open: false,
                apple_present: has_apple,
            },
            map,
            has_altruist,
            has_apple,
            frozen_door,
            states: Vec::new(),
            index: HashMap::new(),
            game: placeholder_game(),
        };
        world.initial.altruist = if has_altruist {
            world.map.altruist_spawn
        } else {
            None
        };
        world.initial.door_open = world.door_state(world.initial.altruist);
        world.validate(&world.initial)?;
        world.enumerate();
        world.game = world.build_game()?;
        Ok(world)
    }

    fn door_state(&self, altruist: Option<Cell>) -> bool {
        match (self.map.door, self.frozen_door) {
            (None, _) => false,
            (Some(_), Some(open)) => open,
            (Some(_), None) => altruist.is_some() && altruist == self.map.switch,
        }
    }

    fn enumerate(&mut self) {
        let free = self.map.free_cells();
        let altruist_cells: Vec<Option<Cell>> = if self.has_altruist {
            free.iter()
                .copied()
                .filter(|c| Some(*c) != self.map.door)
                .map(Some)
                .collect()
        } else {
            vec![None]
        };
        let apple_states: &[bool] = if self.has_apple {
            &[true, false]
        } else {
            &[false]
        };
        for &apple_present in apple_states {
            for &altruist in &altruist_cells {
                let door_open = self.door_state(altruist);
                for &leader in &free {
                    let s = GridState {
                        leader,
                        altruist,
                        door_open,
                        apple_present,
                    };
                    if self.validate(&s).is_ok() {
                        self.index.insert(s, self.states.len());
                        self.states.push(s);
                    }
                }
            }
        }
    }

    fn build_game(&self) -> Result<MarkovGame> {
        let agents = if self.has_altruist { 2 } else { 1 };
        let start = self.index[&self.initial];
        let cols = self.map.cols();
        let altruist_state = self.has_altruist.then(|| {
            self.states
                .iter()
                .map(|s| {
                    let c = s.altruist.expect("altruist present");
                    (c.row * cols + c.col) as u32
                })
                .collect()
        });
        MarkovGame::from_fn(
            GameSpec {
                state_count: self.states.len(),
                action_counts: vec![ACTION_COUNT; agents],
                initial: StateDistribution::point(self.states.len(), StateIndex(start))?,
                discounts: vec![0.9; agents],
                hold_actions: vec![Some(STAY); agents],
                altruist_state,
            },
            |s, actions| {
                let state = self.states[s.0];
                let (next, rewards) = self.step(&state, actions)?;
                let idx = *self.index.get(&next).ok_or_else(|| {
                    Error::InvalidState(format!("successor {next:?} not enumerated"))
                })?;
                Ok((StateIndex(idx), rewards.to_vec()[..agents].to_vec()))
            },
        )
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn game(&self) -> &MarkovGame {
        &self.game
    }

    pub fn has_altruist(&self) -> bool {
        self.has_altruist
    }

    pub fn has_apple(&self) -> bool {
        self.has_apple
    }

    pub fn states(&self) -> &[GridState] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> GridState {
        self.initial
    }

    pub fn initial_index(&self) -> StateIndex {
        StateIndex(self.index[&self.initial])
    }

    pub fn encode(&self, state: &GridState) -> Option<StateIndex> {
        self.index.get(state).map(|&i| StateIndex(i))
    }

    pub fn decode(&self, index: StateIndex) -> &GridState {
        &self.states[index.0]
    }

    /// Per-state key of what the leader perceives: its own cell, the door
    /// and the apple. States that differ only in the altruist's position
    /// share a key.
    pub fn leader_view(&self) -> Vec<u32> {
        let cells = (self.map.rows() * self.map.cols()) as u32;
        self.states
            .iter()
            .map(|s| {
                let cell = (s.leader.row * self.map.cols() + s.leader.col) as u32;
                cell + cells * (u32::from(s.door_open) + 2 * u32::from(s.apple_present))
            })
            .collect()
    }

    /// Cell of the altruist-state id used by the game's altruist component.
    pub fn altruist_cell(&self, id: u32) -> Cell {
        let cols = self.map.cols();
        Cell::new(id as usize / cols, id as usize % cols)
    }

    pub fn validate(&self, s: &GridState) -> Result<()> {
        let check_cell = |c: Cell, who: &str| -> Result<()> {
            if c.row >= self.map.rows() || c.col >= self.map.cols() {
                return Err(Error::InvalidState(format!(
                    "{who} at {c} is out of bounds"
                )));
            }
            if self.map.is_blocked(c) {
                return Err(Error::InvalidState(format!(
                    "{who} at {c} is on a blocked cell"
                )));
            }
            Ok(())
        };
        check_cell(s.leader, "leader")?;
        match (s.altruist, self.has_altruist) {
            (Some(a), true) => {
                check_cell(a, "altruist")?;
                if a == s.leader {
                    return Err(Error::InvalidState("agents share a cell".into()));
                }
                if Some(a) == self.map.door {
                    return Err(Error::InvalidState("altruist in the doorway".into()));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::InvalidState("unexpected altruist".into())),
            (None, true) => return Err(Error::InvalidState("missing altruist".into())),
        }
        if s.door_open != self.door_state(s.altruist) {
            return Err(Error::InvalidState(
                "door state disagrees with the switch".into(),
            ));
        }
        if Some(s.leader) == self.map.door && !s.door_open {
            return Err(Error::InvalidState("leader on a closed door".into()));
        }
        if s.apple_present && !self.has_apple {
            return Err(Error::InvalidState("apple flag without an apple".into()));
        }
        if s.apple_present && Some(s.leader) == self.map.apple {
            return Err(Error::InvalidState("leader on an uneaten apple".into()));
        }
        Ok(())
    }

    fn target(&self, from: Cell, action: usize, door_open: bool, leader: bool) -> Cell {
        let (dr, dc) = DELTAS[action];
        match self.map.neighbour(from, dr, dc) {
            Some(t) if Some(t) == self.map.door && (!door_open || !leader) => from,
            Some(t) => t,
            None => from,
        }
    }

    /// One simultaneous move. `actions` holds the leader's action and, when
    /// the world has an altruist, the altruist's. Returns the successor and
    /// the (leader, altruist) rewards.
    pub fn step(&self, s: &GridState, actions: &[usize]) -> Result<(GridState, [f64; 2])> {
        self.validate(s)?;
        let agents = if self.has_altruist { 2 } else { 1 };
        if actions.len() != agents {
            return Err(Error::Dimension {
                what: "grid actions",
                expected: agents,
                found: actions.len(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= ACTION_COUNT) {
            return Err(Error::InvalidState(format!("action {a} out of range")));
        }
        let leader = s.leader;
        let mut lt = self.target(leader, actions[0], s.door_open, true);
        let mut at_next = None;
        if let Some(alt) = s.altruist {
            let mut at = self.target(alt, actions[1], s.door_open, false);
            if Some(alt) == self.map.switch
                && at != alt
                && (Some(leader) == self.map.door || Some(lt) == self.map.door)
            {
                at = alt;
            }
            if at == lt || (at == leader && lt == leader) {
                at = alt;
            }
            if lt == alt && at == alt {
                lt = leader;
            }
            at_next = Some(at);
        }
        let mut next = GridState {
            leader: lt,
            altruist: at_next,
            door_open: self.door_state(at_next),
            apple_present: s.apple_present,
        };
        let mut rewards = [0.0, 0.0];
        if s.apple_present && Some(lt) == self.map.apple {
            next.apple_present = false;
            rewards[0] = 1.0;
        }
        debug_assert!(
            self.validate(&next).is_ok(),
            "{s:?} {actions:?} -> {next:?}"
        );
        Ok((next, rewards))
    }

    /// The cell the leader's `action` targets from `s`, ignoring the altruist.
    pub fn leader_target(&self, s: &GridState, action: usize) -> Cell {
        self.target(s.leader, action, s.door_open, true)
    }

    /// One glyph per cell, rows separated by newlines.
    ///
    /// Legend: `#` blocked, `.` free, `L` leader, `A` altruist, `a` altruist
    /// on an uneaten apple, `G` apple, `D` closed door, `d` open door,
    /// `S` switch.
    pub fn render(&self, s: &GridState) -> String {
        let mut out = String::with_capacity(self.map.rows() * (self.map.cols() + 1));
        for r in 0..self.map.rows() {
            for c in 0..self.map.cols() {
                let cell = Cell::new(r, c);
                let apple_here = s.apple_present && Some(cell) == self.map.apple;
                let g = if cell == s.leader {
                    'L'
                } else if Some(cell) == s.altruist {
                    if apple_here {
                        'a'
                    } else {
                        'A'
                    }
                } else if self.map.is_blocked(cell) {
                    '#'
                } else if Some(cell) == self.map.door {
                    if s.door_open {
                        'd'
                    } else {
                        'D'
                    }
                } else if Some(cell) == self.map.switch && self.has_altruist {
                    'S'
                } else if apple_here {
                    'G'
                } else {
                    '.'
                };
                out.push(g);
            }
            if r + 1 < self.map.rows() {
                out.push('\n');
            }
        }
        out
    }

    /// States reachable from the initial state under any joint actions.
    pub fn reachable(&self) -> Vec<StateIndex> {
        let mut seen = vec![false; self.states.len()];
        let start = self.initial_index();
        let mut stack = vec![start];
        seen[start.0] = true;
        let mut out = Vec::new();
        while let Some(s) = stack.pop() {
            out.push(s);
            for j in 0..self.game.joint_count() {
                let t = self.game.next_by_index(s, j);
                if !seen[t.0] {
                    seen[t.0] = true;
                    stack.push(t);
                }
            }
        }
        out.sort();
        out
    }
}

fn placeholder_game() -> MarkovGame {
    MarkovGame::from_fn(
        GameSpec {
            state_count: 1,
            action_counts: vec![1],
            initial: StateDistribution::uniform(1),
            discounts: vec![0.0],
            hold_actions: vec![None],
            altruist_state: None,
        },
        |s, _| Ok((s, vec![0.0])),
    )
    .expect("trivial game")
}

#[cfg(test)]
mod tests {
    use super::*;

    const UP: usize = 0;
    const DOWN: usize = 1;
    const LEFT: usize = 2;
    const RIGHT: usize = 3;

    fn door() -> GridWorld {
        build_gridworld(Scenario::Door).unwrap()
    }

    fn state(w: &GridWorld, leader: (usize, usize), altruist: Option<(usize, usize)>) -> GridState {
        let altruist = altruist.map(|(r, c)| Cell::one_based(r, c));
        GridState {
            leader: Cell::one_based(leader.0, leader.1),
            altruist,
            door_open: w.door_state(altruist),
            apple_present: w.has_apple,
        }
    }

    #[test]
    fn shipped_maps_honour_named_cells() {
        let d = door();
        assert_eq!(d.map().switch, Some(Cell::one_based(1, 8)));
        assert_eq!(d.map().door, Some(Cell::one_based(2, 4)));
        assert_eq!(d.map().apple, Some(Cell::one_based(2, 6)));
        let door_col = d.map().door.unwrap().col;
        assert!(d.map().leader_spawn.col < door_col);
        assert!(d.map().altruist_spawn.unwrap().col > door_col);
        let e = build_gridworld(Scenario::DeadEnd).unwrap();
        let m = e.map();
        assert_eq!(m.apple, Some(Cell::new(0, m.cols() - 1)));
        assert!(m.door.is_none() && m.switch.is_none());
        for c in [Cell::one_based(3, 7), Cell::one_based(1, 6)] {
            assert!(!m.is_blocked(c));
        }
    }

    #[test]
    fn open_grid_is_leader_only() {
        let w = build_gridworld(Scenario::OpenGrid).unwrap();
        assert_eq!(w.game().num_agents(), 1);
        assert_eq!(w.game().action_counts(), &[5]);
        assert_eq!(w.state_count(), w.map().free_cells().len());
        assert!(w.map().door.is_none() && w.map().apple.is_none());
    }

    #[test]
    fn state_count_matches_legal_configurations() {
        let w = door();
        let free = w.map().free_cells().len();
        let switch_pairs = free - 1; // altruist on switch: leader anywhere else, door open
        let other_pairs = (free - 2) * (free - 2); // altruist off door and switch
                                                   // the apple-present half excludes the leader standing on the apple
        let with_apple = switch_pairs - 1 + other_pairs - (free - 3);
        assert_eq!(w.state_count(), with_apple + switch_pairs + other_pairs);
    }

    #[test]
    fn blocked_move_becomes_stay() {
        let w = build_gridworld(Scenario::OpenGrid).unwrap();
        let tip = Cell::one_based(1, 8);
        let s = GridState {
            leader: tip,
            altruist: None,
            door_open: false,
            apple_present: false,
        };
        let (n, _) = w.step(&s, &[UP]).unwrap();
        assert_eq!(n.leader, tip);
    }

    #[test]
    fn leader_wins_contested_cell() {
        let w = build_gridworld(Scenario::DeadEnd).unwrap();
        let s = state(&w, (2, 1), Some((2, 3)));
        let (n, _) = w.step(&s, &[RIGHT, LEFT]).unwrap();
        assert_eq!(n.leader, Cell::one_based(2, 2));
        assert_eq!(n.altruist, Some(Cell::one_based(2, 3)));
    }

    #[test]
    fn cannot_walk_into_a_standing_agent_but_can_swap() {
        let w = build_gridworld(Scenario::DeadEnd).unwrap();
        let s = state(&w, (2, 1), Some((2, 2)));
        let (n, _) = w.step(&s, &[RIGHT, STAY]).unwrap();
        assert_eq!(n.leader, s.leader);
        let (n, _) = w.step(&s, &[STAY, LEFT]).unwrap();
        assert_eq!(n.altruist, s.altruist);
        let (n, _) = w.step(&s, &[RIGHT, LEFT]).unwrap();
        assert_eq!(
            (n.leader, n.altruist),
            (Cell::one_based(2, 2), Some(Cell::one_based(2, 1)))
        );
        // following into a vacated cell is fine
        let (n, _) = w.step(&s, &[DOWN, LEFT]).unwrap();
        assert_eq!(n.altruist, Some(Cell::one_based(2, 1)));
    }

    #[test]
    fn apple_pays_once() {
        let w = door();
        let s = state(&w, (2, 5), Some((1, 8)));
        let (n, r) = w.step(&s, &[RIGHT, STAY]).unwrap();
        assert_eq!(r, [1.0, 0.0]);
        assert!(!n.apple_present);
        let (n2, r2) = w.step(&n, &[LEFT, STAY]).unwrap();
        let (_, r3) = w.step(&n2, &[RIGHT, STAY]).unwrap();
        assert_eq!(r2, [0.0, 0.0]);
        assert_eq!(r3, [0.0, 0.0]);
    }

    #[test]
    fn altruist_never_collects_the_apple() {
        let w = door();
        let s = state(&w, (2, 1), Some((1, 6)));
        let (n, r) = w.step(&s, &[STAY, DOWN]).unwrap();
        assert_eq!(n.altruist, Some(Cell::one_based(2, 6)));
        assert!(n.apple_present);
        assert_eq!(r, [0.0, 0.0]);
    }

    #[test]
    fn closed_door_blocks_and_switch_opens_it() {
        let w = door();
        let s = state(&w, (2, 3), Some((1, 9)));
        let (n, _) = w.step(&s, &[RIGHT, LEFT]).unwrap();
        assert_eq!(n.leader, s.leader, "door was closed when the move started");
        assert!(n.door_open);
        let (n2, _) = w.step(&n, &[RIGHT, STAY]).unwrap();
        assert_eq!(n2.leader, Cell::one_based(2, 4));
        // altruist is pinned to the switch while the leader is in the doorway
        let (n3, _) = w.step(&n2, &[STAY, RIGHT]).unwrap();
        assert_eq!(n3.altruist, Some(Cell::one_based(1, 8)));
        assert!(n3.door_open);
        let (n4, _) = w.step(&n3, &[RIGHT, RIGHT]).unwrap();
        assert_eq!(n4.leader, Cell::one_based(2, 5));
        assert_eq!(n4.altruist, Some(Cell::one_based(1, 8)));
        let (n5, _) = w.step(&n4, &[STAY, RIGHT]).unwrap();
        assert!(!n5.door_open);
    }

    #[test]
    fn invalid_state_rejected() {
        let w = door();
        let mut s = state(&w, (2, 1), Some((3, 5)));
        s.altruist = Some(Cell::one_based(2, 1));
        assert!(w.step(&s, &[STAY, STAY]).is_err());
        let s = state(&w, (1, 4), Some((3, 5)));
        assert!(w.step(&s, &[STAY, STAY]).is_err());
        let s = state(&w, (2, 1), Some((3, 5)));
        assert!(w.step(&s, &[STAY]).is_err());
        assert!(w.step(&s, &[STAY, 5]).is_err());
    }

    #[test]
    fn door_render_glyphs() {
        let w = door();
        let s = w.initial_state();
        let text = w.render(&s);
        assert!(text.contains('D') && !text.contains('d'));
        let open = state(&w, (2, 1), Some((1, 8)));
        assert!(w.render(&open).contains('d'));
    }

    #[test]
    fn open_grid_render_shape() {
        let w = build_gridworld(Scenario::OpenGrid).unwrap();
        let text = w.render(&w.initial_state());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.chars().count() == 9));
    }

    #[test]
    fn leader_only_door_needs_pin() {
        let map = GridMap::parse(DOOR_MAP).unwrap();
        let opts = GridOptions {
            altruist: false,
            apple: false,
            frozen_door: None,
        };
        assert!(GridWorld::new(map.clone(), opts).is_err());
        let w = GridWorld::new(
            map,
            GridOptions {
                frozen_door: Some(false),
                ..opts
            },
        )
        .unwrap();
        assert_eq!(w.game().num_agents(), 1);
        assert_eq!(w.state_count(), w.map().free_cells().len() - 1);
    }

    #[test]
    fn scenario_names_parse() {
        for s in [Scenario::OpenGrid, Scenario::Door, Scenario::DeadEnd] {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("maze".parse::<Scenario>().is_err());
    }
}
