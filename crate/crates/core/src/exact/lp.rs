//! Dense revised simplex for multi-marginal transport on a flattened tensor.
//!
//! Rows are the marginal constraints with the last row of every block after
//! the first dropped (each block sums to one, so those rows are redundant).
//! Phase one starts from an all-artificial basis; Bland's rule is used for
//! both entering and leaving choices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::measure::ProductShape;

pub(crate) struct LpResult {
    /// Basic variables `(flat index, value)` with value > 0.
    pub x: Vec<(usize, f64)>,
    /// One dual vector per marginal; dropped rows carry dual 0.
    pub duals: Vec<Vec<f64>>,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

struct Lp<'a> {
    shape: &'a ProductShape,
    row_of: Vec<Vec<Option<usize>>>,
    rows: usize,
    size: usize,
    b: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
}

impl<'a> Lp<'a> {
    fn column_rows(&self, j: usize, out: &mut Vec<usize>) {
        out.clear();
        if j >= self.size {
            out.push(j - self.size);
            return;
        }
        for k in 0..self.shape.rank() {
            if let Some(r) = self.row_of[k][self.shape.component(j, k)] {
                out.push(r);
            }
        }
    }

    fn ftran(&self, rows_j: &[usize], d: &mut [f64]) {
        let r = self.rows;
        for t in 0..r {
            d[t] = rows_j.iter().map(|&c| self.binv[t * r + c]).sum();
        }
    }

    fn duals(&self, cb: &[f64], y: &mut [f64]) {
        let r = self.rows;
        for c in 0..r {
            y[c] = (0..r).map(|t| cb[t] * self.binv[t * r + c]).sum();
        }
    }

    fn pivot(&mut self, t: usize, entering: usize, d: &[f64]) {
        let r = self.rows;
        let piv = d[t];
        for c in 0..r {
            self.binv[t * r + c] /= piv;
        }
        let theta = self.xb[t] / piv;
        for s in 0..r {
            if s == t || d[s] == 0.0 {
                continue;
            }
            let f = d[s];
            for c in 0..r {
                self.binv[s * r + c] -= f * self.binv[t * r + c];
            }
            self.xb[s] -= theta * f;
        }
        self.xb[t] = theta;
        self.basis[t] = entering;
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<()> {
        let r = self.rows;
        let mut m = vec![0.0f64; r * r];
        let mut rows_j = Vec::new();
        for (t, &j) in self.basis.iter().enumerate() {
            self.column_rows(j, &mut rows_j);
            for &c in &rows_j {
                m[c * r + t] = 1.0;
            }
        }
        let mut inv = vec![0.0; r * r];
        for i in 0..r {
            inv[i * r + i] = 1.0;
        }
        for col in 0..r {
            let mut best = col;
            for row in col + 1..r {
                if m[row * r + col].abs() > m[best * r + col].abs() {
                    best = row;
                }
            }
            if m[best * r + col].abs() < 1e-12 {
                return Err(Error::InvariantViolation("singular simplex basis".into()));
            }
            if best != col {
                for c in 0..r {
                    m.swap(best * r + c, col * r + c);
                    inv.swap(best * r + c, col * r + c);
                }
            }
            let p = m[col * r + col];
            for c in 0..r {
                m[col * r + c] /= p;
                inv[col * r + c] /= p;
            }
            for row in 0..r {
                if row == col {
                    continue;
                }
                let f = m[row * r + col];
                if f != 0.0 {
                    for c in 0..r {
                        m[row * r + c] -= f * m[col * r + c];
                        inv[row * r + c] -= f * inv[col * r + c];
                    }
                }
            }
        }
        self.binv = inv;
        for t in 0..r {
            self.xb[t] = (0..r).map(|c| self.binv[t * r + c] * self.b[c]).sum();
        }
        Ok(())
    }

    /// Runs Bland's-rule simplex for the given column costs. Columns for
    /// which `allowed` is false never enter.
    fn optimize<C: Fn(usize) -> f64, A: Fn(usize) -> bool>(
        &mut self,
        cost: C,
        allowed: A,
        tol: f64,
        pivots: &mut usize,
        max_pivots: usize,
    ) -> Result<Vec<f64>> {
        let r = self.rows;
        let n_cols = self.size + r;
        let mut y = vec![0.0; r];
        let mut d = vec![0.0; r];
        let mut cb = vec![0.0; r];
        let mut rows_j = Vec::new();
        let mut since_refactor = 0;
        loop {
            for t in 0..r {
                cb[t] = cost(self.basis[t]);
            }
            self.duals(&cb, &mut y);
            let mut entering = None;
            for j in 0..n_cols {
                if !allowed(j) {
                    continue;
                }
                self.column_rows(j, &mut rows_j);
                let rc = cost(j) - rows_j.iter().map(|&c| y[c]).sum::<f64>();
                if rc < -tol {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(y) };
            if *pivots >= max_pivots {
                return Err(Error::SolverCycleDetected { pivots: *pivots });
            }
            self.column_rows(j, &mut rows_j);
            self.ftran(&rows_j, &mut d);
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for t in 0..r {
                if d[t] > PIVOT_TOL {
                    let ratio = self.xb[t].max(0.0) / d[t];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best - 1e-13 || (ratio <= best + 1e-13 && self.basis[t] < self.basis[l])
                        }
                    };
                    if better {
                        best = ratio;
                        leave = Some(t);
                    }
                }
            }
            let Some(t) = leave else {
                return Err(Error::InvariantViolation("unbounded transport LP".into()));
            };
            self.pivot(t, j, &d);
            *pivots += 1;
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }
}

pub(crate) fn multi_marginal_simplex(weights: &[&[f64]], shape: &ProductShape, cost: &[f64]) -> Result<LpResult> {
    let mut row_of = Vec::with_capacity(weights.len());
    let mut b = Vec::new();
    for (k, w) in weights.iter().enumerate() {
        let mut rows = Vec::with_capacity(w.len());
        for (i, &wi) in w.iter().enumerate() {
            if k > 0 && i + 1 == w.len() {
                rows.push(None);
            } else {
                rows.push(Some(b.len()));
                b.push(wi);
            }
        }
        row_of.push(rows);
    }
    let rows = b.len();
    let size = shape.size();
    let mut binv = vec![0.0; rows * rows];
    for t in 0..rows {
        binv[t * rows + t] = 1.0;
    }
    let mut lp = Lp {
        shape,
        row_of,
        rows,
        size,
        xb: b.clone(),
        b,
        basis: (size..size + rows).collect(),
        binv,
    };
    let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let max_pivots = 200_000 + 20 * size;
    let mut pivots = 0;

    lp.optimize(|j| if j >= size { 1.0 } else { 0.0 }, |_| true, 1e-11, &mut pivots, max_pivots)?;
    lp.refactor()?;
    let infeasibility: f64 = lp
        .basis
        .iter()
        .zip(&lp.xb)
        .filter(|(&j, _)| j >= size)
        .map(|(_, &x)| x)
        .sum();
    if infeasibility > 1e-9 {
        return Err(Error::InvariantViolation(alloc::format!(
            "transport LP infeasible (phase one residual {infeasibility:e})"
        )));
    }
    // Drive zero-level artificials out of the basis.
    let mut d = vec![0.0; rows];
    let mut rows_j = Vec::new();
    for t in 0..rows {
        if lp.basis[t] < size {
            continue;
        }
        let mut replaced = false;
        for j in 0..size {
            if lp.basis.contains(&j) {
                continue;
            }
            lp.column_rows(j, &mut rows_j);
            lp.ftran(&rows_j, &mut d);
            if d[t].abs() > 1e-9 {
                lp.pivot(t, j, &d);
                pivots += 1;
                replaced = true;
                break;
            }
        }
        if !replaced {
            return Err(Error::InvariantViolation("redundant marginal constraint".into()));
        }
    }
    lp.refactor()?;

    let tol = 1e-11 * (1.0 + cmax);
    let y = lp.optimize(
        |j| if j >= size { 0.0 } else { cost[j] },
        |j| j < size,
        tol,
        &mut pivots,
        max_pivots,
    )?;
    lp.refactor()?;

    let x = lp
        .basis
        .iter()
        .zip(&lp.xb)
        .filter(|(_, &x)| x > 0.0)
        .map(|(&j, &x)| (j, x))
        .collect();
    let duals = lp
        .row_of
        .iter()
        .map(|rows| rows.iter().map(|r| r.map(|r| y[r]).unwrap_or(0.0)).collect())
        .collect();
    Ok(LpResult { x, duals, pivots })
}
