//! Dense linear assignment.
//!
//! The default solver is Jonker-Volgenant: column reduction, two passes of
//! augmenting row reduction, then shortest augmenting paths for the rows
//! still free. A plain O(n^3) Hungarian solver is kept for differential
//! testing. Rectangular problems are squared up with dummy rows or columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MatchingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LapSolver {
    #[default]
    JonkerVolgenant,
    Hungarian,
}

/// One-to-one assignment between rows (`a`) and columns (`b`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }

    /// Assignment with every row and column unmatched.
    pub fn empty(n_a: usize, n_b: usize) -> Self {
        Self { pairs: Vec::new(), unmatched_a: (0..n_a).collect(), unmatched_b: (0..n_b).collect() }
    }

    /// Number of rows and columns the assignment covers.
    pub fn sizes(&self) -> (usize, usize) {
        (self.pairs.len() + self.unmatched_a.len(), self.pairs.len() + self.unmatched_b.len())
    }

    /// Partner column of row `a`, if any.
    pub fn partner_of_a(&self, a: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == a).map(|p| p.1)
    }
}

/// Minimum-cost assignment of `min(n, m)` pairs.
pub fn solve_lap(cost: &DMatrix<f64>) -> Result<Assignment, MatchingError> {
    solve_lap_with(cost, LapSolver::JonkerVolgenant)
}

pub fn solve_lap_with(cost: &DMatrix<f64>, solver: LapSolver) -> Result<Assignment, MatchingError> {
    let (n, m) = cost.shape();
    if let Some(bad) = cost.iter().find(|v| !v.is_finite()) {
        return Err(MatchingError::InvalidCost(*bad));
    }
    if n == 0 || m == 0 {
        return Ok(Assignment::empty(n, m));
    }
    let dim = n.max(m);
    let max_cost = cost.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let dummy = max_cost * 10.0;
    let square: Vec<f64> = (0..dim * dim)
        .map(|k| {
            let (i, j) = (k / dim, k % dim);
            if i < n && j < m {
                cost[(i, j)]
            } else {
                dummy
            }
        })
        .collect();
    let row_to_col = match solver {
        LapSolver::JonkerVolgenant => lapjv(&square, dim),
        LapSolver::Hungarian => hungarian(&square, dim),
    };

    let mut out = Assignment::default();
    let mut col_used = vec![false; m];
    for (i, &j) in row_to_col.iter().enumerate().take(n) {
        if j < m {
            out.pairs.push((i, j, cost[(i, j)]));
            col_used[j] = true;
        } else {
            out.unmatched_a.push(i);
        }
    }
    out.unmatched_b = (0..m).filter(|&j| !col_used[j]).collect();
    Ok(out)
}

/// Square Jonker-Volgenant. `c` is row-major `dim x dim`. Returns the column
/// assigned to each row.
fn lapjv(c: &[f64], dim: usize) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let cost = |i: usize, j: usize| c[i * dim + j];
    let mut x = vec![NONE; dim]; // row -> col
    let mut y = vec![NONE; dim]; // col -> row
    let mut v = vec![f64::INFINITY; dim];

    // column reduction
    let mut col_min_row = vec![0usize; dim];
    for i in 0..dim {
        for j in 0..dim {
            if cost(i, j) < v[j] {
                v[j] = cost(i, j);
                col_min_row[j] = i;
            }
        }
    }
    let mut unique = vec![true; dim];
    for j in (0..dim).rev() {
        let i = col_min_row[j];
        if x[i] == NONE {
            x[i] = j;
            y[j] = i;
        } else {
            unique[i] = false;
        }
    }
    // reduction transfer
    let mut free: Vec<usize> = Vec::with_capacity(dim);
    for i in 0..dim {
        if x[i] == NONE {
            free.push(i);
        } else if unique[i] {
            let j1 = x[i];
            let mut min = f64::INFINITY;
            for j in 0..dim {
                if j != j1 {
                    min = min.min(cost(i, j) - v[j]);
                }
            }
            if min.is_finite() {
                v[j1] -= min;
            }
        }
    }

    // augmenting row reduction, two passes
    for _ in 0..2 {
        if free.is_empty() {
            break;
        }
        let n_free = free.len();
        let mut current = 0usize;
        let mut new_free = 0usize;
        let mut rr_count = 0usize;
        while current < n_free {
            rr_count += 1;
            let i = free[current];
            current += 1;
            let (mut u1, mut j1) = (cost(i, 0) - v[0], 0usize);
            let (mut u2, mut j2) = (f64::INFINITY, NONE);
            for j in 1..dim {
                let h = cost(i, j) - v[j];
                if h < u2 {
                    if h >= u1 {
                        u2 = h;
                        j2 = j;
                    } else {
                        u2 = u1;
                        u1 = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = y[j1];
            let v1_new = v[j1] - (u2 - u1);
            let v1_lowers = v1_new < v[j1];
            if rr_count < current * dim {
                if v1_lowers {
                    v[j1] = v1_new;
                } else if i0 != NONE && j2 != NONE {
                    j1 = j2;
                    i0 = y[j2];
                }
                if i0 != NONE {
                    if v1_lowers {
                        current -= 1;
                        free[current] = i0;
                    } else {
                        free[new_free] = i0;
                        new_free += 1;
                    }
                }
            } else if i0 != NONE {
                free[new_free] = i0;
                new_free += 1;
            }
            x[i] = j1;
            y[j1] = i;
            if i0 != NONE {
                x[i0] = NONE;
            }
        }
        free.truncate(new_free);
    }

    // shortest augmenting paths
    let mut d = vec![0.0f64; dim];
    let mut pred = vec![0usize; dim];
    let mut cols: Vec<usize> = (0..dim).collect();
    for &free_row in &free {
        for j in 0..dim {
            d[j] = cost(free_row, j) - v[j];
            pred[j] = free_row;
            cols[j] = j;
        }
        // cols[..low] settled, cols[low..up] at the current minimum, rest unscanned
        let mut low = 0usize;
        let mut up = 0usize;
        let mut settled = 0usize;
        let mut min = 0.0f64;
        let end = 'search: loop {
            if up == low {
                settled = low;
                min = d[cols[up]];
                up += 1;
                for k in up..dim {
                    let j = cols[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                }
                for &j in &cols[low..up] {
                    if y[j] == NONE {
                        break 'search j;
                    }
                }
            }
            let j1 = cols[low];
            low += 1;
            let i = y[j1];
            let u1 = cost(i, j1) - v[j1] - min;
            for k in up..dim {
                let j = cols[k];
                let h = cost(i, j) - v[j] - u1;
                if h < d[j] {
                    pred[j] = i;
                    if h == min {
                        if y[j] == NONE {
                            break 'search j;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                    d[j] = h;
                }
            }
        };
        for &j in &cols[..settled] {
            v[j] += d[j] - min;
        }
        let mut j = end;
        loop {
            let i = pred[j];
            y[j] = i;
            std::mem::swap(&mut x[i], &mut j);
            if i == free_row {
                break;
            }
        }
    }
    x
}

/// Square Hungarian method with potentials, O(n^3).
fn hungarian(c: &[f64], dim: usize) -> Vec<usize> {
    let cost = |i: usize, j: usize| c[i * dim + j];
    // 1-based potentials; column 0 is a virtual root
    let mut u = vec![0.0f64; dim + 1];
    let mut v = vec![0.0f64; dim + 1];
    let mut p = vec![0usize; dim + 1];
    let mut way = vec![0usize; dim + 1];
    for i in 1..=dim {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=dim {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=dim {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; dim];
    for j in 1..=dim {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}
