//! Sparse row-stochastic transition matrices.

use crate::error::{Error, Result};
use crate::mdp::{StateDistribution, StateIndex, PROB_TOL};

/// Row-stochastic matrix over joint states, stored as sorted sparse rows.
///
/// `conditioning` names the altruist state the matrix was built for. `None`
/// marks a block-diagonal matrix holding `T(s_A)` for every altruist state at
/// once, which is what empirical models produce.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    rows: Vec<Vec<(u32, f64)>>,
    conditioning: Option<u32>,
}

impl TransitionMatrix {
    pub fn from_sparse_rows(
        size: usize,
        rows: Vec<Vec<(u32, f64)>>,
        conditioning: Option<u32>,
    ) -> Result<Self> {
        if rows.len() != size {
            return Err(Error::Dimension {
                what: "matrix rows",
                expected: size,
                found: rows.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            let mut total = 0.0;
            for &(j, p) in row {
                if j as usize >= size {
                    return Err(Error::StateOutOfRange(j as usize));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidDistribution(format!(
                        "row {i} entry {j} is {p}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "row {i} sums to {total}"
                )));
            }
        }
        Ok(TransitionMatrix {
            size,
            rows,
            conditioning,
        })
    }

    /// Builds from a dense row-major `size * size` slice.
    pub fn from_dense(size: usize, entries: &[f64], conditioning: Option<u32>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::Dimension {
                what: "dense matrix",
                expected: size * size,
                found: entries.len(),
            });
        }
        let rows = entries
            .chunks(size)
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, &p)| (j as u32, p))
                    .collect()
            })
            .collect();
        Self::from_sparse_rows(size, rows, conditioning)
    }

    pub fn identity(size: usize, conditioning: Option<u32>) -> Self {
        TransitionMatrix {
            size,
            rows: (0..size).map(|i| vec![(i as u32, 1.0)]).collect(),
            conditioning,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn conditioning(&self) -> Option<u32> {
        self.conditioning
    }

    pub fn row(&self, state: StateIndex) -> &[(u32, f64)] {
        &self.rows[state.0]
    }

    pub fn entry(&self, from: StateIndex, to: StateIndex) -> f64 {
        self.rows[from.0]
            .iter()
            .find(|(j, _)| *j as usize == to.0)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Dense copy of one row.
    pub fn dense_row(&self, state: StateIndex) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for &(j, p) in &self.rows[state.0] {
            out[j as usize] += p;
        }
        out
    }

    /// `dist · T`.
    pub fn push(&self, dist: &StateDistribution) -> Result<StateDistribution> {
        if dist.len() != self.size {
            return Err(Error::Dimension {
                what: "distribution",
                expected: self.size,
                found: dist.len(),
            });
        }
        let mut out = vec![0.0; self.size];
        for (i, &m) in dist.as_slice().iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(j, p) in &self.rows[i] {
                out[j as usize] += m * p;
            }
        }
        Ok(StateDistribution::from_propagated(out))
    }

    /// `onehot(start) · T^n`, computed by `n` sparse vector-matrix products.
    pub fn propagate(&self, start: StateIndex, n: usize) -> Result<StateDistribution> {
        if start.0 >= self.size {
            return Err(Error::StateOutOfRange(start.0));
        }
        let support = self.propagate_sparse(start, n);
        let mut out = vec![0.0; self.size];
        for (j, p) in support {
            out[j as usize] = p;
        }
        Ok(StateDistribution::from_propagated(out))
    }

    /// Same as [`propagate`](Self::propagate) but returns only the support,
    /// sorted by state index.
    pub fn propagate_sparse(&self, start: StateIndex, n: usize) -> Vec<(u32, f64)> {
        let mut cur: Vec<(u32, f64)> = vec![(start.0 as u32, 1.0)];
        let mut scratch = vec![0.0f64; self.size];
        let mut touched: Vec<u32> = Vec::new();
        for _ in 0..n {
            for &(i, m) in &cur {
                for &(j, p) in &self.rows[i as usize] {
                    if scratch[j as usize] == 0.0 {
                        touched.push(j);
                    }
                    scratch[j as usize] += m * p;
                }
            }
            touched.sort_unstable();
            cur.clear();
            for &j in &touched {
                let p = scratch[j as usize];
                scratch[j as usize] = 0.0;
                if p > 0.0 {
                    cur.push((j, p));
                }
            }
            touched.clear();
        }
        cur
    }

    /// Largest deviation of a row sum from one, for diagnostics.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_total_variation(&self, other: &TransitionMatrix, state: StateIndex) -> f64 {
        let a = self.dense_row(state);
        let b = other.dense_row(state);
        0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(TransitionMatrix::from_dense(2, &[0.5, 0.4, 0.0, 1.0], None).is_err());
        assert!(TransitionMatrix::from_dense(2, &[1.5, -0.5, 0.0, 1.0], None).is_err());
        assert!(TransitionMatrix::from_sparse_rows(1, vec![vec![(3, 1.0)]], None).is_err());
    }

    #[test]
    fn propagation_matches_repeated_push() {
        let t =
            TransitionMatrix::from_dense(3, &[0.2, 0.8, 0.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.0], None)
                .unwrap();
        let mut d = StateDistribution::point(3, StateIndex(0)).unwrap();
        for _ in 0..5 {
            d = t.push(&d).unwrap();
        }
        let p = t.propagate(StateIndex(0), 5).unwrap();
        for (a, b) in d.as_slice().iter().zip(p.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_keeps_point_mass() {
        let t = TransitionMatrix::identity(4, Some(2));
        assert_eq!(t.propagate_sparse(StateIndex(3), 7), vec![(3, 1.0)]);
        assert_eq!(t.conditioning(), Some(2));
    }
}
