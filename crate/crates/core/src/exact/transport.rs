//! Transportation simplex for two-marginal problems.
//!
//! Supplies are perturbed to `a_i + delta` and the last demand (in traversal
//! order) to `b_n + m delta`. Every basic solution of the perturbed problem is
//! nondegenerate, so each pivot makes strict lexicographic progress. Flows are
//! carried as `value + k delta` with the integer coefficient `k` kept exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::error::{Error, Result};

/// Two flow values closer than this are compared by their delta coefficient.
const FLOW_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
struct Lex {
    v: f64,
    k: i64,
}

impl Lex {
    fn sub(self, o: Lex) -> Lex {
        Lex {
            v: self.v - o.v,
            k: self.k - o.k,
        }
    }

    fn add(self, o: Lex) -> Lex {
        Lex {
            v: self.v + o.v,
            k: self.k + o.k,
        }
    }

    fn cmp(&self, o: &Lex) -> Ordering {
        if (self.v - o.v).abs() <= FLOW_TOL {
            self.k.cmp(&o.k)
        } else if self.v < o.v {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    fn is_positive(&self) -> bool {
        self.cmp(&Lex { v: 0.0, k: 0 }) == Ordering::Greater
    }
}

pub(crate) struct TransportResult {
    /// Basic cells `(i, j, flow)` with the perturbation removed.
    pub flows: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

struct Tree {
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<Lex>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    stack: Vec<usize>,
}

impl Tree {
    fn col(&self, j: usize) -> usize {
        self.m + j
    }

    fn link(&mut self, slot: usize) {
        let (i, j) = self.cells[slot];
        let c = self.col(j);
        self.adj[i].push(slot);
        self.adj[c].push(slot);
    }

    fn unlink(&mut self, slot: usize) {
        let (i, j) = self.cells[slot];
        let c = self.col(j);
        for node in [i, c] {
            let pos = self.adj[node].iter().position(|&s| s == slot).unwrap();
            self.adj[node].swap_remove(pos);
        }
    }

    /// Depth-first traversal from row 0 filling parents and the dual values.
    fn traverse(&mut self, cost: &[f64], n: usize, u: &mut [f64], v: &mut [f64]) {
        let total = self.adj.len();
        const NONE: usize = usize::MAX;
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.parent[0] = 0;
        self.depth[0] = 0;
        u[0] = 0.0;
        self.stack.clear();
        self.stack.push(0);
        let mut seen = 1;
        while let Some(node) = self.stack.pop() {
            for idx in 0..self.adj[node].len() {
                let slot = self.adj[node][idx];
                let (i, j) = self.cells[slot];
                let other = if node == i { self.m + j } else { i };
                if self.parent[other] != NONE {
                    continue;
                }
                self.parent[other] = node;
                self.parent_edge[other] = slot;
                self.depth[other] = self.depth[node] + 1;
                let c = cost[i * n + j];
                if other >= self.m {
                    v[other - self.m] = c - u[i];
                } else {
                    u[other] = c - v[j];
                }
                self.stack.push(other);
                seen += 1;
            }
        }
        debug_assert_eq!(seen, total);
    }
}

/// Solves `min sum c_ij x_ij` over transport plans between `a` and `b`.
///
/// The northwest-corner start visits rows and columns in `row_order` and
/// `col_order`; for one-dimensional convex costs with supports sorted
/// ascending this start is already optimal.
pub(crate) fn transport_simplex(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    row_order: &[usize],
    col_order: &[usize],
) -> Result<TransportResult> {
    let m = a.len();
    let n = b.len();
    debug_assert_eq!(cost.len(), m * n);

    let mut ra: Vec<Lex> = a.iter().map(|&x| Lex { v: x, k: 1 }).collect();
    let mut rb: Vec<Lex> = b.iter().map(|&x| Lex { v: x, k: 0 }).collect();
    rb[col_order[n - 1]].k = m as i64;

    let mut tree = Tree {
        m,
        cells: Vec::with_capacity(m + n - 1),
        flow: Vec::with_capacity(m + n - 1),
        adj: vec![Vec::new(); m + n],
        parent: vec![0; m + n],
        parent_edge: vec![0; m + n],
        depth: vec![0; m + n],
        stack: Vec::with_capacity(m + n),
    };

    let (mut p, mut q) = (0, 0);
    loop {
        let (i, j) = (row_order[p], col_order[q]);
        let f = if ra[i].cmp(&rb[j]) == Ordering::Greater { rb[j] } else { ra[i] };
        tree.cells.push((i, j));
        tree.flow.push(f);
        ra[i] = ra[i].sub(f);
        rb[j] = rb[j].sub(f);
        if p == m - 1 && q == n - 1 {
            break;
        }
        if (q == n - 1 || !ra[i].is_positive()) && p < m - 1 {
            p += 1;
        } else {
            q += 1;
        }
    }
    if tree.cells.len() != m + n - 1 {
        return Err(Error::InvariantViolation(alloc::format!(
            "northwest corner produced {} basic cells, expected {}",
            tree.cells.len(),
            m + n - 1
        )));
    }
    for slot in 0..tree.cells.len() {
        tree.link(slot);
    }

    let cmax = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let rc_tol = 1e-12 * (1.0 + cmax);
    let total = m * n;
    let block = ((total as f64).sqrt() as usize).max(n).max(1);
    let max_pivots = 1_000 + 50 * total;
    let degenerate_limit = 10 * (m + n);

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    let mut path_minus: Vec<usize> = Vec::new();
    let mut path_plus: Vec<usize> = Vec::new();

    loop {
        tree.traverse(cost, n, &mut u, &mut v);

        let mut enter: Option<usize> = None;
        if bland {
            for cell in 0..total {
                let (i, j) = (cell / n, cell % n);
                if cost[cell] - u[i] - v[j] < -rc_tol {
                    enter = Some(cell);
                    break;
                }
            }
        } else {
            let mut scanned = 0;
            let mut best = -rc_tol;
            while scanned < total {
                let stop = (scanned + block).min(total);
                while scanned < stop {
                    let cell = cursor;
                    cursor += 1;
                    if cursor == total {
                        cursor = 0;
                    }
                    scanned += 1;
                    let (i, j) = (cell / n, cell % n);
                    let rc = cost[cell] - u[i] - v[j];
                    if rc < best {
                        best = rc;
                        enter = Some(cell);
                    }
                }
                if enter.is_some() {
                    break;
                }
            }
        }
        let Some(cell) = enter else { break };
        if pivots >= max_pivots {
            return Err(Error::SolverCycleDetected { pivots });
        }
        pivots += 1;

        let (ei, ej) = (cell / n, cell % n);
        // Cycle: entering cell gets +theta, tree path from column ej to row ei alternates -, +, ...
        path_minus.clear();
        path_plus.clear();
        let (mut x, mut y) = (tree.col(ej), ei);
        let (mut sx, mut sy) = (0usize, 0usize);
        while x != y {
            if tree.depth[x] >= tree.depth[y] {
                let e = tree.parent_edge[x];
                if sx % 2 == 0 {
                    path_minus.push(e);
                } else {
                    path_plus.push(e);
                }
                sx += 1;
                x = tree.parent[x];
            } else {
                let e = tree.parent_edge[y];
                if sy % 2 == 0 {
                    path_minus.push(e);
                } else {
                    path_plus.push(e);
                }
                sy += 1;
                y = tree.parent[y];
            }
        }

        let mut leave = path_minus[0];
        for &e in &path_minus[1..] {
            match tree.flow[e].cmp(&tree.flow[leave]) {
                Ordering::Less => leave = e,
                Ordering::Equal => {
                    let (li, lj) = tree.cells[leave];
                    let (ci, cj) = tree.cells[e];
                    if ci * n + cj < li * n + lj {
                        leave = e;
                    }
                }
                Ordering::Greater => {}
            }
        }
        let theta = tree.flow[leave];
        if theta.v.abs() <= FLOW_TOL {
            degenerate_streak += 1;
            if degenerate_streak > degenerate_limit {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
        }
        for &e in &path_minus {
            tree.flow[e] = tree.flow[e].sub(theta);
        }
        for &e in &path_plus {
            tree.flow[e] = tree.flow[e].add(theta);
        }
        tree.unlink(leave);
        tree.cells[leave] = (ei, ej);
        tree.flow[leave] = theta;
        tree.link(leave);
    }

    let flows = tree
        .cells
        .iter()
        .zip(&tree.flow)
        .map(|(&(i, j), f)| (i, j, f.v.max(0.0)))
        .collect();
    Ok(TransportResult { flows, u, v, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn two_by_two_picks_cheaper_diagonal() {
        let a = [0.5, 0.5];
        let b = [0.5, 0.5];
        // anti-diagonal is cheaper
        let c = [1.0, 0.0, 0.0, 1.0];
        let r = transport_simplex(&a, &b, &c, &identity(2), &identity(2)).unwrap();
        let value: f64 = r.flows.iter().map(|&(i, j, x)| x * c[i * 2 + j]).sum();
        assert!(value.abs() < 1e-15);
        for &(i, j, _) in r.flows.iter().filter(|f| f.2 > 0.0) {
            assert!((c[i * 2 + j] - r.u[i] - r.v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_uniform_instance_terminates() {
        let n = 7;
        let a = vec![1.0 / n as f64; n];
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = ((i * 3 + j * 5) % n) as f64;
            }
        }
        let r = transport_simplex(&a, &a, &c, &identity(n), &identity(n)).unwrap();
        let value: f64 = r.flows.iter().map(|&(i, j, x)| x * c[i * n + j]).sum();
        let dual: f64 = r.u.iter().chain(&r.v).sum::<f64>() / n as f64;
        assert!((value - dual).abs() < 1e-12);
        assert!(value.abs() < 1e-12);
    }
}
