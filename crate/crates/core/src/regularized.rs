//! Divergence-regularized transport `OT_{f,eps}`.
//!
//! Both solvers ascend the dual
//! `D(h) = sum_i <h_i, mu_i> - sum_x P(x) f*_eps(h_1(x_1) + ... + h_N(x_N) - c(x))`
//! one potential block at a time, and report the primal value of a feasible
//! plan obtained by rounding the current primal density onto the marginal
//! constraints. Weak duality `value >= dual_value` therefore holds at every
//! iterate, converged or not.

use alloc::vec;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::cost::CostModel;
use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::exact::{solve_exact_ot, Potentials};
use crate::math::{cholesky_solve, kahan_sum};
use crate::measure::{product_weights, Coupling, DiscreteMeasure, ProductShape, PRODUCT_LIMIT};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Threshold on the marginal L1 error and on the relative duality gap.
    pub tol: f64,
    /// Cap on full sweeps over all potential blocks.
    pub max_iter: usize,
    /// Initial potentials; zero when absent.
    pub warm_start: Option<Potentials>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            warm_start: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegSolution {
    /// `int c d plan + eps D_f(plan, P)` for the returned feasible plan.
    pub value: f64,
    pub plan: Coupling,
    pub potentials: Potentials,
    pub dual_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Marginal L1 error of the unrounded primal density.
    pub marginal_error: f64,
    /// `int c d plan`.
    pub transport_cost: f64,
    /// `D_f(plan, P)`.
    pub divergence: f64,
}

impl RegSolution {
    pub fn duality_gap(&self) -> f64 {
        self.value - self.dual_value
    }
}

/// Gap budget `10 tol (1 + |value|)` used for the convergence test.
pub fn gap_budget(tol: f64, value: f64) -> f64 {
    10.0 * tol * (1.0 + value.abs())
}

struct Problem {
    marginals: Vec<DiscreteMeasure>,
    shape: ProductShape,
    c: Vec<f64>,
    p: Vec<f64>,
}

impl Problem {
    fn new(cost: &CostModel, marginals: &[DiscreteMeasure]) -> Result<Self> {
        if marginals.len() < 2 {
            return Err(Error::InvalidArgument("regularized OT needs at least two marginals".into()));
        }
        let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), PRODUCT_LIMIT)?;
        let c = cost.tensor(marginals, PRODUCT_LIMIT)?;
        let p = product_weights(marginals, &shape);
        Ok(Self {
            marginals: marginals.to_vec(),
            shape,
            c,
            p,
        })
    }

    fn n(&self) -> usize {
        self.marginals.len()
    }

    /// Calls `visit(k, idx)` for every flat index in row-major order.
    fn for_each_index<F: FnMut(usize, &[usize])>(&self, mut visit: F) {
        let dims = self.shape.dims();
        let mut idx = vec![0usize; dims.len()];
        for k in 0..self.shape.size() {
            visit(k, &idx);
            for a in (0..dims.len()).rev() {
                idx[a] += 1;
                if idx[a] < dims[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    fn marginals_of(&self, density: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.marginals.iter().map(|m| vec![0.0; m.len()]).collect();
        self.for_each_index(|k, idx| {
            for (i, &a) in idx.iter().enumerate() {
                out[i][a] += density[k];
            }
        });
        out
    }

    fn marginal_error(&self, density: &[f64]) -> f64 {
        self.marginals_of(density)
            .iter()
            .zip(&self.marginals)
            .map(|(r, m)| r.iter().zip(m.weights()).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum()
    }

    /// Projects a nonnegative density onto the coupling polytope: each
    /// marginal is first scaled down to at most its target, then the common
    /// mass deficit is filled with the normalized product of the deficits.
    fn round(&self, density: &[f64]) -> Vec<f64> {
        let mut pi = density.to_vec();
        let n = self.n();
        for i in 0..n {
            let r = &self.marginals_of(&pi)[i];
            let z: Vec<f64> = r
                .iter()
                .zip(self.marginals[i].weights())
                .map(|(&ri, &mi)| if ri > mi { mi / ri } else { 1.0 })
                .collect();
            self.for_each_index(|k, idx| pi[k] *= z[idx[i]]);
        }
        let r = self.marginals_of(&pi);
        let deficits: Vec<Vec<f64>> = r
            .iter()
            .zip(&self.marginals)
            .map(|(ri, m)| ri.iter().zip(m.weights()).map(|(x, y)| (y - x).max(0.0)).collect())
            .collect();
        let totals: Vec<f64> = deficits.iter().map(|d| kahan_sum(d.iter().copied())).collect();
        let delta = totals.iter().sum::<f64>() / n as f64;
        if delta > 0.0 {
            let norm = delta.powi(n as i32 - 1);
            self.for_each_index(|k, idx| {
                let mut add = 1.0;
                for (i, &a) in idx.iter().enumerate() {
                    add *= deficits[i][a];
                }
                pi[k] += add / norm;
            });
        }
        pi
    }

    fn dual_value(&self, h: &Potentials, fd: &FDivergence, eps: f64) -> f64 {
        let linear = h.dual_value(&self.marginals);
        let mut terms = Vec::with_capacity(self.shape.size());
        self.for_each_index(|k, idx| {
            let y = h.sum_at(idx) - self.c[k];
            terms.push(self.p[k] * fd.f_star_eps(y, eps));
        });
        linear - kahan_sum(terms)
    }

    fn finish(
        &self,
        fd: &FDivergence,
        eps: f64,
        density: &[f64],
        h: Potentials,
        iterations: usize,
        converged: bool,
    ) -> Result<RegSolution> {
        let marginal_error = self.marginal_error(density);
        let pi = self.round(density);
        let transport_cost = kahan_sum(pi.iter().zip(&self.c).map(|(w, c)| w * c));
        let divergence = kahan_sum(pi.iter().zip(&self.p).map(|(&w, &p)| fd.f(w / p) * p));
        let value = transport_cost + eps * divergence;
        let dual_value = self.dual_value(&h, fd, eps);
        let plan = Coupling::from_dense(self.marginals.clone(), &pi)?;
        Ok(RegSolution {
            value,
            plan,
            potentials: h,
            dual_value,
            iterations,
            converged,
            marginal_error,
            transport_cost,
            divergence,
        })
    }

    fn initial_potentials(&self, opts: &SolverOptions) -> Result<Potentials> {
        match &opts.warm_start {
            None => Ok(Potentials::zeros(&self.marginals)),
            Some(h) => {
                if h.h.len() != self.n() || h.h.iter().zip(&self.marginals).any(|(v, m)| v.len() != m.len()) {
                    return Err(Error::DimensionMismatch {
                        expected: self.n(),
                        found: h.h.len(),
                    });
                }
                Ok(h.clone())
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("eps = {eps} must be positive and finite")));
    }
    Ok(())
}

/// One solve at a fixed `eps` from given potentials.
struct Stage {
    eps: f64,
    tol: f64,
    max_iter: usize,
    h0: Potentials,
}

/// Sweeps spent at most on each intermediate level of the eps schedule.
const ANNEAL_SWEEPS: usize = 2_000;

/// Runs `solve` at `eps`. Without a warm start, small `eps` is approached
/// through the schedule `R, R/4, R/16, ...` (with `R` the cost range), each
/// level warm-started from the previous potentials.
fn anneal<F>(prob: &Problem, eps: f64, opts: &SolverOptions, mut solve: F) -> Result<RegSolution>
where
    F: FnMut(&Stage) -> Result<RegSolution>,
{
    let mut h0 = prob.initial_potentials(opts)?;
    if opts.warm_start.is_none() {
        let (lo, hi) = prob.c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        let mut level = hi - lo;
        while level > 4.0 * eps {
            let st = Stage {
                eps: level,
                tol: opts.tol.max(1e-6),
                max_iter: ANNEAL_SWEEPS.min(opts.max_iter),
                h0,
            };
            h0 = solve(&st)?.potentials;
            level /= 4.0;
        }
    }
    let st = Stage {
        eps,
        tol: opts.tol,
        max_iter: opts.max_iter,
        h0,
    };
    let sol = solve(&st)?;
    if !sol.converged {
        return Err(Error::NotConverged { iterations: sol.iterations });
    }
    Ok(sol)
}

/// Entropic OT (`f(x) = x log x`) by Sinkhorn iteration.
///
/// Two marginals run kernel scaling on a stabilized kernel
/// `exp((h_1 + h_2 - c) / eps)`; scalings are absorbed into the potentials
/// whenever they leave `[1e-50, 1e50]`, and a row or column whose sum
/// underflows is recomputed by an exact log-sum-exp update. With three or
/// more marginals every block update is a log-sum-exp over the tensor.
pub fn solve_entropic(
    cost: &CostModel,
    marginals: &[DiscreteMeasure],
    eps: f64,
    opts: &SolverOptions,
) -> Result<RegSolution> {
    check_eps(eps)?;
    let prob = Problem::new(cost, marginals)?;
    let fd = FDivergence::entropy();
    anneal(&prob, eps, opts, |st| {
        if prob.n() == 2 {
            sinkhorn_two(&prob, &fd, st)
        } else {
            let e = st.eps;
            block_ascent(&prob, &fd, st, &mut |ys: &[f64], ws: &[f64], _t0: f64| lse_update(ys, ws, e))
        }
    })
}

/// `t` with `sum_k w_k exp((t + y_k) / eps) = 1`.
fn lse_update(ys: &[f64], ws: &[f64], eps: f64) -> Result<f64> {
    let mut m = f64::NEG_INFINITY;
    for (&y, &w) in ys.iter().zip(ws) {
        if w > 0.0 {
            m = m.max(y / eps + w.ln());
        }
    }
    if !m.is_finite() {
        return Err(Error::NumericalUnderflow);
    }
    let s: f64 = ys
        .iter()
        .zip(ws)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&y, &w)| (y / eps + w.ln() - m).exp())
        .sum();
    Ok(-eps * (m + s.ln()))
}

const SCALING_RANGE: f64 = 1e50;

fn sinkhorn_two(prob: &Problem, fd: &FDivergence, st: &Stage) -> Result<RegSolution> {
    let eps = st.eps;
    let (m, n) = (prob.marginals[0].len(), prob.marginals[1].len());
    let a = prob.marginals[0].weights();
    let b = prob.marginals[1].weights();
    let c = &prob.c;
    let h0 = &st.h0;
    let (mut h1, mut h2) = (h0.h[0].clone(), h0.h[1].clone());

    let mut col = vec![0.0; n];
    let mut row = vec![0.0; m];
    // Exact log-domain row update to start from a kernel with unit row sums.
    let lse_rows = |h1: &mut [f64], h2: &[f64], buf: &mut Vec<f64>| -> Result<()> {
        for i in 0..m {
            buf.clear();
            buf.extend((0..n).map(|j| h2[j] - c[i * n + j]));
            h1[i] = lse_update(buf, b, eps)?;
        }
        Ok(())
    };
    let lse_cols = |h1: &[f64], h2: &mut [f64], buf: &mut Vec<f64>| -> Result<()> {
        for j in 0..n {
            buf.clear();
            buf.extend((0..m).map(|i| h1[i] - c[i * n + j]));
            h2[j] = lse_update(buf, a, eps)?;
        }
        Ok(())
    };
    let mut buf = Vec::with_capacity(m.max(n));
    lse_rows(&mut h1, &h2, &mut buf)?;

    let mut kernel = vec![0.0; m * n];
    let build = |kernel: &mut [f64], h1: &[f64], h2: &[f64]| {
        for i in 0..m {
            for j in 0..n {
                kernel[i * n + j] = ((h1[i] + h2[j] - c[i * n + j]) / eps).exp();
            }
        }
    };
    build(&mut kernel, &h1, &h2);
    let mut s1 = vec![1.0; m];
    let mut s2 = vec![1.0; n];
    // row sums of the current kernel against b * s2, cached between sweeps
    let mut rowsum = vec![0.0; m];
    let matvec_rows = |kernel: &[f64], s2: &[f64], out: &mut [f64]| {
        for i in 0..m {
            let r = &kernel[i * n..(i + 1) * n];
            out[i] = r.iter().zip(b).zip(s2).map(|((k, w), s)| k * w * s).sum();
        }
    };
    matvec_rows(&kernel, &s2, &mut rowsum);

    let absorb = |h: &mut [f64], s: &mut [f64]| {
        for (hv, sv) in h.iter_mut().zip(s.iter_mut()) {
            *hv += eps * sv.ln();
            *sv = 1.0;
        }
    };
    let normal = |x: f64| x.is_normal() && x > 0.0;

    let mut sweeps = 0;
    loop {
        // row update
        if rowsum.iter().all(|&t| normal(t)) {
            for i in 0..m {
                s1[i] = 1.0 / rowsum[i];
            }
        } else {
            absorb(&mut h2, &mut s2);
            lse_rows(&mut h1, &h2, &mut buf)?;
            s1.iter_mut().for_each(|s| *s = 1.0);
            build(&mut kernel, &h1, &h2);
        }
        // column update
        col.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let f = a[i] * s1[i];
            let r = &kernel[i * n..(i + 1) * n];
            for (cv, k) in col.iter_mut().zip(r) {
                *cv += f * k;
            }
        }
        if col.iter().all(|&t| normal(t)) {
            for j in 0..n {
                s2[j] = 1.0 / col[j];
            }
        } else {
            absorb(&mut h1, &mut s1);
            lse_cols(&h1, &mut h2, &mut buf)?;
            s2.iter_mut().for_each(|s| *s = 1.0);
            build(&mut kernel, &h1, &h2);
        }
        sweeps += 1;

        let out_of_range = s1.iter().chain(s2.iter()).any(|&s| !(s < SCALING_RANGE && s > 1.0 / SCALING_RANGE));
        if out_of_range {
            absorb(&mut h1, &mut s1);
            absorb(&mut h2, &mut s2);
            build(&mut kernel, &h1, &h2);
        }
        matvec_rows(&kernel, &s2, &mut rowsum);
        for i in 0..m {
            row[i] = a[i] * s1[i] * rowsum[i];
        }
        let err: f64 = row.iter().zip(a).map(|(r, w)| (r - w).abs()).sum();

        if err <= st.tol || sweeps >= st.max_iter {
            let pot = Potentials {
                h: vec![
                    h1.iter().zip(&s1).map(|(h, s)| h + eps * s.ln()).collect(),
                    h2.iter().zip(&s2).map(|(h, s)| h + eps * s.ln()).collect(),
                ],
            };
            let mut density = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    density[i * n + j] = a[i] * b[j] * kernel[i * n + j] * s1[i] * s2[j];
                }
            }
            let sol = prob.finish(fd, eps, &density, pot, sweeps, true)?;
            if sol.duality_gap() <= gap_budget(st.tol, sol.value) && err <= st.tol {
                return Ok(sol);
            }
            if sweeps >= st.max_iter {
                return Ok(RegSolution { converged: false, ..sol });
            }
        }
    }
}

/// Regularized OT for a general divergence by cyclic block coordinate ascent
/// on the dual. Each scalar block equation
/// `sum_k w_k (f*)'((t + y_k) / eps) = 1` is solved by Newton's method
/// safeguarded with bisection on a bracket grown geometrically from the
/// previous value.
pub fn solve_f_dual(
    cost: &CostModel,
    marginals: &[DiscreteMeasure],
    fd: &FDivergence,
    eps: f64,
    opts: &SolverOptions,
) -> Result<RegSolution> {
    check_eps(eps)?;
    let prob = Problem::new(cost, marginals)?;
    anneal(&prob, eps, opts, |st| {
        let e = st.eps;
        block_ascent(&prob, fd, st, &mut |ys: &[f64], ws: &[f64], t0: f64| newton_update(fd, ys, ws, e, t0))
    })
}

fn newton_update(fd: &FDivergence, ys: &[f64], ws: &[f64], eps: f64, t0: f64) -> Result<f64> {
    let eval = |t: f64| {
        let mut f = 0.0;
        let mut df = 0.0;
        for (&y, &w) in ys.iter().zip(ws) {
            let z = (t + y) / eps;
            f += w * fd.f_star_prime(z);
            df += w * fd.f_star_second(z);
        }
        (f - 1.0, df / eps)
    };
    let (g0, _) = eval(t0);
    if g0 == 0.0 {
        return Ok(t0);
    }
    let mut step = eps.max(1e-3 * t0.abs());
    let (mut lo, mut hi);
    let mut tries = 0;
    if g0 < 0.0 {
        lo = t0;
        hi = t0 + step;
        while eval(hi).0 < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            tries += 1;
            if tries > 200 {
                return Err(Error::RootBracketFailure);
            }
        }
    } else {
        hi = t0;
        lo = t0 - step;
        while eval(lo).0 > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            tries += 1;
            if tries > 200 {
                return Err(Error::RootBracketFailure);
            }
        }
    }
    let mut t = if g0 < 0.0 { lo } else { hi };
    for _ in 0..200 {
        let (g, dg) = eval(t);
        if g == 0.0 {
            return Ok(t);
        }
        if g < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // stop only once the bracket is a few ulps wide: at small eps an
        // absolute ulp of t is a large step in (t + y) / eps
        if hi - lo <= 2.0 * f64::EPSILON * t.abs().max(lo.abs()).max(hi.abs()) || g.abs() <= 1e-15 {
            return Ok(t);
        }
        let newton = t - g / dg;
        t = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(t)
}

type BlockUpdate<'a> = dyn FnMut(&[f64], &[f64], f64) -> Result<f64> + 'a;

/// Generic cyclic block ascent over the dense product tensor. `update`
/// receives the fiber values `y_k = sum_{j != i} h_j - c` with the
/// normalized weights `w_k = P / mu_i(a)` and returns the new `h_i(a)`.
fn block_ascent(
    prob: &Problem,
    fd: &FDivergence,
    st: &Stage,
    update: &mut BlockUpdate<'_>,
) -> Result<RegSolution> {
    let eps = st.eps;
    let n_blocks = prob.n();
    let size = prob.shape.size();
    let mut h = st.h0.clone();
    let mut ys = vec![0.0; size];
    let mut ws = vec![0.0; size];
    let mut density = vec![0.0; size];
    let mut sweeps = 0;
    loop {
        for i in 0..n_blocks {
            let len = prob.marginals[i].len();
            let fiber = size / len;
            let mut cursor = vec![0usize; len];
            let mu_i = prob.marginals[i].weights();
            prob.for_each_index(|k, idx| {
                let a = idx[i];
                let pos = a * fiber + cursor[a];
                cursor[a] += 1;
                ys[pos] = h.sum_at(idx) - h.h[i][a] - prob.c[k];
                ws[pos] = prob.p[k] / mu_i[a];
            });
            for a in 0..len {
                let r = a * fiber..(a + 1) * fiber;
                h.h[i][a] = update(&ys[r.clone()], &ws[r], h.h[i][a])?;
            }
        }
        sweeps += 1;
        if sweeps % NEWTON_EVERY == 0 && prob.newton_sized() {
            newton_step(prob, fd, eps, &mut h);
        }

        prob.for_each_index(|k, idx| {
            density[k] = prob.p[k] * fd.f_star_prime((h.sum_at(idx) - prob.c[k]) / eps);
        });
        let err = prob.marginal_error(&density);
        if err <= st.tol || sweeps >= st.max_iter {
            let sol = prob.finish(fd, eps, &density, h.clone(), sweeps, true)?;
            if sol.duality_gap() <= gap_budget(st.tol, sol.value) && err <= st.tol {
                return Ok(sol);
            }
            if sweeps >= st.max_iter {
                return Ok(RegSolution { converged: false, ..sol });
            }
        }
    }
}

/// Block ascent stalls along nearly flat dual directions when `eps` is small
/// against the cost spread; on small problems a full Newton step is tried
/// this often.
const NEWTON_EVERY: usize = 25;
const NEWTON_DIM_LIMIT: usize = 400;
const NEWTON_SIZE_LIMIT: usize = 1 << 16;

impl Problem {
    fn newton_sized(&self) -> bool {
        self.shape.size() <= NEWTON_SIZE_LIMIT && self.shape.dims().iter().sum::<usize>() <= NEWTON_DIM_LIMIT
    }
}

/// One damped Newton step on the full dual, accepted only if it increases
/// the dual by the Armijo amount. The gauge directions (constant shifts
/// between blocks) are handled by a small ridge; the gradient is orthogonal
/// to them.
fn newton_step(prob: &Problem, fd: &FDivergence, eps: f64, h: &mut Potentials) -> bool {
    let dims = prob.shape.dims();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let dim: usize = dims.iter().sum();
    let mut grad = vec![0.0; dim];
    for (i, m) in prob.marginals.iter().enumerate() {
        for (a, &w) in m.weights().iter().enumerate() {
            grad[offsets[i] + a] = w;
        }
    }
    let mut hess = vec![0.0; dim * dim];
    let mut pos = vec![0usize; dims.len()];
    prob.for_each_index(|k, idx| {
        let z = (h.sum_at(idx) - prob.c[k]) / eps;
        let g = prob.p[k] * fd.f_star_prime(z);
        let w = prob.p[k] * fd.f_star_second(z) / eps;
        for (i, &a) in idx.iter().enumerate() {
            pos[i] = offsets[i] + a;
            grad[pos[i]] -= g;
        }
        if w > 0.0 {
            for &r in pos.iter() {
                for &c in pos.iter() {
                    hess[r * dim + c] += w;
                }
            }
        }
    });
    let scale = (0..dim).map(|r| hess[r * dim + r]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return false;
    }
    for r in 0..dim {
        hess[r * dim + r] += 1e-12 * scale;
    }
    let Some(step) = cholesky_solve(&hess, &grad) else {
        return false;
    };
    let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
    if !(slope > 0.0) {
        return false;
    }
    let base = prob.dual_value(h, fd, eps);
    let mut t = 1.0;
    for _ in 0..30 {
        let mut trial = h.clone();
        for (i, hi) in trial.h.iter_mut().enumerate() {
            for (a, v) in hi.iter_mut().enumerate() {
                *v += t * step[offsets[i] + a];
            }
        }
        let d = prob.dual_value(&trial, fd, eps);
        if d.is_finite() && d >= base + 1e-4 * t * slope {
            *h = trial;
            return true;
        }
        t *= 0.5;
    }
    false
}

/// Solves `OT_{f,eps}` with the solver matching the divergence: Sinkhorn
/// for entropy, dual coordinate ascent otherwise.
pub fn solve_regularized(
    cost: &CostModel,
    marginals: &[DiscreteMeasure],
    fd: &FDivergence,
    eps: f64,
    opts: &SolverOptions,
) -> Result<RegSolution> {
    if fd.is_entropy() {
        solve_entropic(cost, marginals, eps, opts)
    } else {
        solve_f_dual(cost, marginals, fd, eps, opts)
    }
}

/// `OT_{f,eps} - OT`.
pub fn gap(cost: &CostModel, marginals: &[DiscreteMeasure], fd: &FDivergence, eps: f64, opts: &SolverOptions) -> Result<f64> {
    let ot = solve_exact_ot(cost, marginals)?.value;
    Ok(solve_regularized(cost, marginals, fd, eps, opts)?.value - ot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::golden_section_min;
    use crate::measure::product_measure;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    /// Regularized objective of the 2x2 coupling [[t, 1/2 - t], [1/2 - t, t]].
    fn two_by_two_oracle(fd: &FDivergence, eps: f64) -> f64 {
        let obj = |t: f64| {
            let cells = [(t, 0.0), (0.5 - t, 1.0), (0.5 - t, 1.0), (t, 0.0)];
            cells.iter().map(|&(w, c)| w * c + eps * 0.25 * fd.f(w / 0.25)).sum::<f64>()
        };
        golden_section_min(obj, 0.0, 0.5, 1e-14).1
    }

    #[test]
    fn zero_cost_gives_product() {
        let mu = line(&[0.0, 1.0, 3.0]);
        let nu = line(&[0.5, 2.0]);
        let s = solve_entropic(&CostModel::zero(), &[mu.clone(), nu.clone()], 0.3, &SolverOptions::default()).unwrap();
        assert!(s.value.abs() < 1e-12);
        let prod = product_measure(&[mu.clone(), nu.clone()]).unwrap();
        for (w, p) in s.plan.weights().iter().zip(prod.weights()) {
            assert!((w - p).abs() < 1e-12);
        }
        let p2 = FDivergence::power(2.0).unwrap();
        let s = solve_f_dual(&CostModel::zero(), &[mu, nu], &p2, 0.3, &SolverOptions::default()).unwrap();
        assert!(s.value.abs() < 1e-12);
    }

    #[test]
    fn two_by_two_matches_oracle() {
        let mu = line(&[0.0, 1.0]);
        for eps in [0.5, 0.1] {
            let e = solve_entropic(&CostModel::sq_euclidean(), &[mu.clone(), mu.clone()], eps, &SolverOptions::default()).unwrap();
            let oracle = two_by_two_oracle(&FDivergence::entropy(), eps);
            assert!((e.value - oracle).abs() < 1e-9, "{} vs {}", e.value, oracle);
            let p2 = FDivergence::power(2.0).unwrap();
            let q = solve_f_dual(&CostModel::sq_euclidean(), &[mu.clone(), mu.clone()], &p2, eps, &SolverOptions::default()).unwrap();
            let oracle = two_by_two_oracle(&p2, eps);
            assert!((q.value - oracle).abs() < 1e-9, "{} vs {}", q.value, oracle);
        }
    }

    #[test]
    fn huge_eps_approaches_product_cost() {
        let mu = line(&[0.0, 0.3, 1.0]);
        let nu = line(&[0.1, 0.8]);
        let cost = CostModel::sq_euclidean();
        let s = solve_entropic(&cost, &[mu.clone(), nu.clone()], 1e3, &SolverOptions::default()).unwrap();
        let prod = product_measure(&[mu.clone(), nu.clone()]).unwrap();
        let cp: f64 = prod.atoms().map(|(i, w)| w * cost.eval_indices(&[mu.clone(), nu.clone()], &i)).sum();
        assert!((s.value - cp).abs() < 1e-3);
    }

    #[test]
    fn weak_duality_and_feasibility() {
        let mu = line(&[0.0, 0.2, 0.5, 0.9]);
        let nu = line(&[0.1, 0.4, 1.2]);
        let s = solve_entropic(&CostModel::sq_euclidean(), &[mu, nu], 0.01, &SolverOptions::default()).unwrap();
        assert!(s.value >= s.dual_value);
        assert!(s.plan.max_marginal_error() < 1e-12);
    }

    #[test]
    fn three_marginal_entropic_above_exact() {
        let a = line(&[0.0, 1.0]);
        let b = line(&[0.2, 0.7, 1.5]);
        let c = line(&[-0.5, 0.5]);
        let cost = CostModel::gangbo_swiech(3);
        let ms = [a, b, c];
        let ot = solve_exact_ot(&cost, &ms).unwrap().value;
        let e = solve_entropic(&cost, &ms, 0.05, &SolverOptions::default()).unwrap();
        let f = solve_f_dual(&cost, &ms, &FDivergence::entropy(), 0.05, &SolverOptions::default()).unwrap();
        assert!(e.value >= ot);
        assert!((e.value - f.value).abs() < 1e-8);
    }

    #[test]
    fn invalid_eps_rejected() {
        let mu = line(&[0.0]);
        let r = solve_entropic(&CostModel::sq_euclidean(), &[mu.clone(), mu], 0.0, &SolverOptions::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
