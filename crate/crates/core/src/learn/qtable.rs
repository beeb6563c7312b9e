use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mdp::{argmax_lowest, StateIndex, TabularPolicy};

/// Action values for one agent, initialised to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        assert!(actions > 0, "QTable needs at least one action");
        QTable {
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.values.len() / self.actions
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    #[inline]
    pub fn get(&self, s: StateIndex, a: usize) -> f64 {
        self.values[s.0 * self.actions + a]
    }

    pub fn set(&mut self, s: StateIndex, a: usize, v: f64) {
        self.values[s.0 * self.actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: StateIndex) -> &[f64] {
        &self.values[s.0 * self.actions..(s.0 + 1) * self.actions]
    }

    pub fn max(&self, s: StateIndex) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; lowest id wins ties.
    #[inline]
    pub fn greedy(&self, s: StateIndex) -> usize {
        argmax_lowest(self.row(s))
    }

    /// Watkins update `Q(s,a) += lr (r + γ max Q(s',·) − Q(s,a))`.
    ///
    /// `next = None` marks the last step of an episode: the target is `r`.
    /// Returns the absolute change of `Q(s,a)`.
    pub fn update(
        &mut self,
        s: StateIndex,
        a: usize,
        reward: f64,
        next: Option<StateIndex>,
        lr: f64,
        gamma: f64,
    ) -> f64 {
        let target = match next {
            Some(n) => reward + gamma * self.max(n),
            None => reward,
        };
        let idx = s.0 * self.actions + a;
        let delta = lr * (target - self.values[idx]);
        self.values[idx] += delta;
        delta.abs()
    }

    pub fn greedy_policy(&self) -> TabularPolicy {
        let choice: Vec<usize> = (0..self.states())
            .map(|s| self.greedy(StateIndex(s)))
            .collect();
        TabularPolicy::deterministic(self.actions, &choice).expect("greedy actions are in range")
    }

    /// Mixture `(1-ε) greedy + ε uniform`, the distribution of the learning
    /// behaviour: greedy mass is split evenly between tied maxima.
    pub fn epsilon_greedy_policy(&self, epsilon: f64) -> Result<TabularPolicy> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon {epsilon} outside [0,1]")));
        }
        let n = self.actions;
        let mut probs = vec![epsilon / n as f64; self.values.len()];
        for s in 0..self.states() {
            let row = self.row(StateIndex(s));
            let best = self.max(StateIndex(s));
            let ties = row.iter().filter(|&&v| v == best).count() as f64;
            for (a, &v) in row.iter().enumerate() {
                if v == best {
                    probs[s * n + a] += (1.0 - epsilon) / ties;
                }
            }
        }
        TabularPolicy::new(self.states(), n, probs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `state_id,action_id,value` rows under a header. Values use Rust's
    /// shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state_id,action_id,value\n");
        for s in 0..self.states() {
            for a in 0..self.actions {
                writeln!(out, "{s},{a},{:?}", self.get(StateIndex(s), a)).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str, states: usize, actions: usize) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("state_id,action_id,value") {
            return Err(Error::Config(
                "Q-table CSV header must be state_id,action_id,value".into(),
            ));
        }
        let mut q = QTable::new(states, actions);
        let mut seen = vec![false; states * actions];
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let bad = |m: &str| Error::Config(format!("Q-table CSV line {line_no}: {m}"));
            let mut parts = line.split(',');
            let (Some(s), Some(a), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected three fields"));
            };
            let s: usize = s.parse().map_err(|_| bad("bad state id"))?;
            let a: usize = a.parse().map_err(|_| bad("bad action id"))?;
            let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
            if s >= states || a >= actions {
                return Err(bad("index out of range"));
            }
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
            if std::mem::replace(&mut seen[s * actions + a], true) {
                return Err(bad("duplicate entry"));
            }
            q.set(StateIndex(s), a, v);
        }
        if seen.iter().any(|x| !x) {
            return Err(Error::Config("Q-table CSV is missing entries".into()));
        }
        Ok(q)
    }
}

/// Row-wise softmax of Q-values at temperature `temperature`.
pub fn softmax_policy(q: &QTable, temperature: f64) -> Result<TabularPolicy> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::Config(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let n = q.actions();
    let mut probs = Vec::with_capacity(q.states() * n);
    for s in 0..q.states() {
        let row = q.row(StateIndex(s));
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = probs.len();
        let mut z = 0.0;
        for &v in row {
            let e = ((v - m) / temperature).exp();
            z += e;
            probs.push(e);
        }
        for p in &mut probs[start..] {
            *p /= z;
        }
    }
    TabularPolicy::new(q.states(), n, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rewarded_update() {
        let mut q = QTable::new(2, 2);
        q.update(StateIndex(0), 1, 1.0, Some(StateIndex(1)), 0.01, 0.9);
        assert!((q.get(StateIndex(0), 1) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn truncation_drops_bootstrap() {
        let mut q = QTable::new(2, 1);
        q.set(StateIndex(1), 0, 100.0);
        q.update(StateIndex(0), 0, 1.0, None, 1.0, 0.9);
        assert_eq!(q.get(StateIndex(0), 0), 1.0);
        q.update(StateIndex(0), 0, 1.0, Some(StateIndex(1)), 1.0, 0.9);
        assert_eq!(q.get(StateIndex(0), 0), 91.0);
    }

    #[test]
    fn two_state_fixed_point() {
        // s0 -> s1 -> s0 ..., reward 1 on every step: Q* = 1 / (1 - γ)
        let gamma = 0.9;
        let mut q = QTable::new(2, 1);
        for i in 0..20_000 {
            let s = StateIndex(i % 2);
            let n = StateIndex((i + 1) % 2);
            q.update(s, 0, 1.0, Some(n), 0.5, gamma);
        }
        for s in 0..2 {
            assert!((q.get(StateIndex(s), 0) - 10.0).abs() < 1e-3);
        }
    }

    #[test]
    fn softmax_uniform_and_limits() {
        let mut q = QTable::new(3, 5);
        let p = softmax_policy(&q, 1.0).unwrap();
        assert!(p
            .row(StateIndex(0))
            .iter()
            .all(|&x| (x - 0.2).abs() < 1e-15));
        q.set(StateIndex(1), 3, 0.01);
        let cold = softmax_policy(&q, 1e-3).unwrap();
        assert!(cold.row(StateIndex(1))[3] > 0.999);
        for (i, v) in [1.0, 1.0, 0.0, 0.0, 0.0].into_iter().enumerate() {
            q.set(StateIndex(2), i, v);
        }
        let p = softmax_policy(&q, 1.0).unwrap();
        let e = std::f64::consts::E;
        let z = 2.0 * e + 3.0;
        let want = [e / z, e / z, 1.0 / z, 1.0 / z, 1.0 / z];
        for (a, b) in p.row(StateIndex(2)).iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(softmax_policy(&q, 0.0).is_err());
        assert!(softmax_policy(&q, -1.0).is_err());
        assert!(softmax_policy(&q, f64::NAN).is_err());
    }

    #[test]
    fn softmax_is_stable_for_large_values() {
        let mut q = QTable::new(1, 2);
        q.set(StateIndex(0), 0, 1e6);
        let p = softmax_policy(&q, 1.0).unwrap();
        assert_eq!(p.row(StateIndex(0)), &[1.0, 0.0]);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut q = QTable::new(2, 2);
        q.set(StateIndex(1), 0, 0.1 + 0.2);
        q.set(StateIndex(0), 1, -1e-300);
        let text = q.to_csv();
        assert_eq!(QTable::from_csv(&text, 2, 2).unwrap(), q);
        assert!(QTable::from_csv("state,action,value\n", 2, 2).is_err());
        assert!(QTable::from_csv("state_id,action_id,value\n0,0,1\n", 2, 2).is_err());
        let dup = "state_id,action_id,value\n0,0,1\n0,0,1\n0,1,0\n1,0,0\n1,1,0\n";
        assert!(QTable::from_csv(dup, 2, 2).is_err());
    }

    #[test]
    fn epsilon_greedy_mixture() {
        let mut q = QTable::new(1, 5);
        q.set(StateIndex(0), 2, 1.0);
        let p = q.epsilon_greedy_policy(0.1).unwrap();
        assert!((p.row(StateIndex(0))[2] - 0.92).abs() < 1e-15);
        assert!((p.row(StateIndex(0))[0] - 0.02).abs() < 1e-15);
        assert!(q.epsilon_greedy_policy(1.5).is_err());
        let flat = QTable::new(1, 4).epsilon_greedy_policy(0.2).unwrap();
        assert!(flat
            .row(StateIndex(0))
            .iter()
            .all(|&p| (p - 0.25).abs() < 1e-15));
    }
}
