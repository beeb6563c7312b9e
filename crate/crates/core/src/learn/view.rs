use crate::error::{Error, Result};
use crate::mdp::{StateIndex, TabularPolicy};

/// Many-to-one map from game states to the states an agent learns over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateView {
    map: Vec<u32>,
    count: usize,
}

impl StateView {
    /// Every game state is its own observation.
    pub fn full(states: usize) -> Self {
        StateView {
            map: (0..states as u32).collect(),
            count: states,
        }
    }

    /// Compacts arbitrary per-state keys to dense ids, in order of first
    /// appearance.
    pub fn from_keys(keys: &[u32]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let map = keys
            .iter()
            .map(|k| {
                let next = ids.len() as u32;
                *ids.entry(*k).or_insert(next)
            })
            .collect();
        StateView {
            map,
            count: ids.len(),
        }
    }

    /// Number of game states.
    pub fn states(&self) -> usize {
        self.map.len()
    }

    /// Number of distinct observations.
    pub fn observations(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn observe(&self, s: StateIndex) -> StateIndex {
        StateIndex(self.map[s.0] as usize)
    }

    pub fn is_full(&self) -> bool {
        self.count == self.map.len() && self.map.iter().enumerate().all(|(i, &m)| m as usize == i)
    }

    /// Lifts a policy over observations to one over game states.
    pub fn lift(&self, policy: &TabularPolicy) -> Result<TabularPolicy> {
        if policy.states() != self.count {
            return Err(Error::Dimension {
                what: "observation policy states",
                expected: self.count,
                found: policy.states(),
            });
        }
        let n = policy.actions();
        let mut probs = Vec::with_capacity(self.map.len() * n);
        for &o in &self.map {
            probs.extend_from_slice(policy.row(StateIndex(o as usize)));
        }
        TabularPolicy::new(self.map.len(), n, probs)
    }
}
