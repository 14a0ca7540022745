//! Minimum-cost rectangular assignment (Hungarian method with potentials).

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("no assignment of size min(rows, cols) avoids the forbidden pairs")]
    Infeasible,
    #[error("cost matrix contains NaN or -inf at ({0}, {1})")]
    InvalidCost(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the assigned entries, accumulated in row order.
    pub total_cost: f64,
}

/// Solves the assignment problem on an `n × m` cost matrix, matching
/// `min(n, m)` pairs. `f64::INFINITY` marks a forbidden pair.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Assignment, AssignmentError> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }
    let mut finite_max: f64 = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let v = cost[(r, c)];
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(AssignmentError::InvalidCost(r, c));
            }
            if v.is_finite() {
                finite_max = finite_max.max(v.abs());
            }
        }
    }
    // Any assignment through a forbidden pair costs more than every fully
    // finite one, so the optimum only uses one when nothing else fits.
    let k = rows.min(cols) as f64;
    let forbidden = (finite_max + 1.0) * (2.0 * k + 1.0);

    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| -> f64 {
        let v = if transposed { cost[(j, i)] } else { cost[(i, j)] };
        if v.is_finite() {
            v
        } else {
            forbidden
        }
    };

    // 1-based potentials formulation; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
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
            for j in 0..=m {
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect();
    pairs.sort_unstable();
    let mut total_cost = 0.0;
    for &(r, c) in &pairs {
        let v = cost[(r, c)];
        if !v.is_finite() {
            return Err(AssignmentError::Infeasible);
        }
        total_cost += v;
    }
    Ok(Assignment { pairs, total_cost })
}
