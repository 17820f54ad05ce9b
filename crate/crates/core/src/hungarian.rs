//! Optimal rectangular linear assignment with a deterministic tie-break.
//!
//! The matrix is padded to a square with zero-cost dummy rows or columns and
//! solved with the shortest-augmenting-path Hungarian method, which also
//! yields dual potentials. Every optimal assignment uses only edges whose
//! reduced cost is zero, so among all optima the lexicographically smallest
//! pair list is recovered greedily: rows are fixed in index order to the
//! smallest tight column that still admits a perfect matching of the
//! remaining rows.

use crate::{Error, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix given {} entries",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cost entry ({}, {}) is not finite",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch(format!("row {r} is ragged")));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearAssignment {
    /// `(row, col)` pairs sorted by row; `min(rows, cols)` of them.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the assigned entries, accumulated in row order.
    pub total: f64,
}

/// Solves the assignment problem for `cost`, minimizing total cost.
#[allow(clippy::needless_range_loop)]
pub fn hungarian(cost: &CostMatrix) -> LinearAssignment {
    let (rows, cols) = (cost.rows, cost.cols);
    if rows == 0 || cols == 0 {
        return LinearAssignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    let n = rows.max(cols);
    let entry = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost.get(i, j)
        } else {
            0.0
        }
    };

    // 1-based potentials and column owners.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let scale = 1.0 + cost.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| entry(i, j) - u[i + 1] - v[j + 1] <= eps)
                .collect()
        })
        .collect();

    let mut match_col = vec![0usize; n];
    let mut match_row = vec![0usize; n];
    for j in 1..=n {
        match_row[owner[j] - 1] = j - 1;
        match_col[j - 1] = owner[j] - 1;
    }

    let mut state = Matching {
        tight: &tight,
        match_row,
        match_col,
    };
    for i in 0..rows {
        for c in 0..n {
            if tight[i][c] && state.try_fix(i, c) {
                break;
            }
        }
    }

    let mut pairs = Vec::with_capacity(rows.min(cols));
    let mut total = 0.0;
    for i in 0..rows {
        let c = state.match_row[i];
        if c < cols {
            pairs.push((i, c));
            total += cost.get(i, c);
        }
    }
    LinearAssignment { pairs, total }
}

struct Matching<'a> {
    tight: &'a [Vec<bool>],
    match_row: Vec<usize>,
    match_col: Vec<usize>,
}

impl Matching<'_> {
    /// Moves row `i` onto column `c` if the rows after `i` can be rematched
    /// along tight edges. Rows before `i` are frozen.
    fn try_fix(&mut self, i: usize, c: usize) -> bool {
        if self.match_row[i] == c {
            return true;
        }
        let displaced = self.match_col[c];
        if displaced < i {
            return false;
        }
        let freed = self.match_row[i];
        let saved = (self.match_row.clone(), self.match_col.clone());
        self.match_row[i] = c;
        self.match_col[c] = i;
        let mut visited = vec![false; self.tight.len()];
        visited[c] = true;
        if self.augment(displaced, freed, i, &mut visited) {
            true
        } else {
            (self.match_row, self.match_col) = saved;
            false
        }
    }

    fn augment(&mut self, row: usize, target: usize, frozen: usize, visited: &mut [bool]) -> bool {
        for x in 0..self.tight.len() {
            if !self.tight[row][x] || visited[x] {
                continue;
            }
            visited[x] = true;
            let ok = if x == target {
                true
            } else {
                let next = self.match_col[x];
                next > frozen && self.augment(next, target, frozen, visited)
            };
            if ok {
                self.match_row[row] = x;
                self.match_col[x] = row;
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(rows: &[Vec<f64>]) -> LinearAssignment {
        hungarian(&CostMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn small_examples() {
        let a = solve(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total, 2.0);

        let id = solve(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
        assert_eq!(id.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(id.total, 0.0);
    }

    #[test]
    fn empty() {
        assert!(solve(&[]).pairs.is_empty());
        assert!(hungarian(&CostMatrix::new(3, 0, vec![]).unwrap()).pairs.is_empty());
    }

    #[test]
    fn lexicographic_ties() {
        let all_zero = solve(&vec![vec![0.0; 3]; 3]);
        assert_eq!(all_zero.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        let tall = solve(&vec![vec![5.0; 2]; 4]);
        assert_eq!(tall.pairs, vec![(0, 0), (1, 1)]);
        let wide = solve(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(wide.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular() {
        let a = solve(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]]);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total, 3.0);
        let t = solve(&[vec![4.0, 2.0], vec![1.0, 0.0], vec![3.0, 5.0]]);
        assert_eq!(t.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(t.total, 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CostMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(CostMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.0], vec![1.0, 2.0]]).is_err());
    }
}
