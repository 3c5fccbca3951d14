//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min c·x` subject to a list of linear rows (`≤`, `≥` or `=`) and
//! `x ≥ 0`. Pivoting follows Bland's rule, so the method terminates on
//! degenerate problems. Intended for problems with a few dozen variables and
//! a few hundred rows.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("row {row} has {got} coefficients, expected {expected}")]
    Dimension {
        row: usize,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LpRow {
    pub fn new(coeffs: Vec<f64>, sense: RowSense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Original,
    Slack,
    Artificial,
}

struct Tableau {
    // rows[i] has `cols + 1` entries; the last one is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    kinds: Vec<ColumnKind>,
}

impl Tableau {
    fn cols(&self) -> usize {
        self.kinds.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols() + 1;
        let p = self.rows[r][c];
        for j in 0..width {
            self.rows[r][j] /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..width {
                    row[j] -= f * pivot_row[j];
                }
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs of `cost` (indexed by column) under the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut reduced = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, r) in reduced.iter_mut().enumerate() {
                    *r -= cb * self.rows[i][j];
                }
            }
        }
        reduced
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        let rhs = self.cols();
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &b)| cost[b] * self.rows[i][rhs])
            .sum()
    }

    /// Runs primal simplex iterations with Bland's rule on `cost`, only
    /// letting columns for which `allowed` holds enter the basis.
    fn optimize(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool) -> Result<(), LpError> {
        let rhs = self.cols();
        loop {
            let reduced = self.reduced_costs(cost);
            let entering = (0..self.cols()).find(|&j| allowed(j) && reduced[j] < -PIVOT_EPS);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rows[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - PIVOT_EPS
                                || (ratio <= lr + PIVOT_EPS && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(LpError::Unbounded),
            }
        }
    }
}

/// Minimizes `objective · x` over `x ≥ 0` subject to `rows`.
pub fn minimize(objective: &[f64], rows: &[LpRow]) -> Result<LpSolution, LpError> {
    let n = objective.len();
    for (i, row) in rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(LpError::Dimension {
                row: i,
                got: row.coeffs.len(),
                expected: n,
            });
        }
    }

    // Normalize to non-negative right-hand sides.
    let normalized: Vec<(Vec<f64>, RowSense, f64)> = rows
        .iter()
        .map(|row| {
            if row.rhs < 0.0 {
                let sense = match row.sense {
                    RowSense::Le => RowSense::Ge,
                    RowSense::Ge => RowSense::Le,
                    RowSense::Eq => RowSense::Eq,
                };
                (row.coeffs.iter().map(|v| -v).collect(), sense, -row.rhs)
            } else {
                (row.coeffs.clone(), row.sense, row.rhs)
            }
        })
        .collect();

    let n_slack = normalized
        .iter()
        .filter(|(_, s, _)| *s != RowSense::Eq)
        .count();
    let n_art = normalized
        .iter()
        .filter(|(_, s, _)| *s != RowSense::Le)
        .count();
    let cols = n + n_slack + n_art;

    let mut kinds = vec![ColumnKind::Original; n];
    kinds.extend(std::iter::repeat_n(ColumnKind::Slack, n_slack));
    kinds.extend(std::iter::repeat_n(ColumnKind::Artificial, n_art));

    let mut tableau_rows = Vec::with_capacity(normalized.len());
    let mut basis = Vec::with_capacity(normalized.len());
    let mut next_slack = n;
    let mut next_art = n + n_slack;
    for (coeffs, sense, rhs) in &normalized {
        let mut row = vec![0.0; cols + 1];
        row[..n].copy_from_slice(coeffs);
        row[cols] = *rhs;
        match sense {
            RowSense::Le => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            RowSense::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            RowSense::Eq => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        tableau_rows.push(row);
    }

    let mut t = Tableau {
        rows: tableau_rows,
        basis,
        kinds,
    };

    // Phase 1: minimize the sum of artificial variables.
    if n_art > 0 {
        let phase1: Vec<f64> = t
            .kinds
            .iter()
            .map(|k| {
                if *k == ColumnKind::Artificial {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        t.optimize(&phase1, |_| true)
            .expect("phase one objective is bounded below by zero");
        if t.objective(&phase1) > FEAS_EPS {
            return Err(LpError::Infeasible);
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        let mut r = 0;
        while r < t.rows.len() {
            if t.kinds[t.basis[r]] == ColumnKind::Artificial {
                let col = (0..t.cols()).find(|&j| {
                    t.kinds[j] != ColumnKind::Artificial && t.rows[r][j].abs() > PIVOT_EPS
                });
                match col {
                    Some(c) => {
                        t.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        // Redundant row.
                        t.rows.remove(r);
                        t.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(objective);
    let kinds = t.kinds.clone();
    t.optimize(&cost, |j| kinds[j] != ColumnKind::Artificial)?;

    let rhs = t.cols();
    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[i][rhs].max(0.0);
        }
    }
    let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, x })
}
