//! W_p quantization of measures and of optimal plans.

use alloc::vec;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::wasserstein_p;
use crate::math::{dist, dist_pow, kahan_sum, linear_fit, sq_dist};
use crate::measure::{Coupling, DiscreteMeasure, Point};

/// Centroid condition tolerance for martingale couplings.
pub const FIXED_POINT_TOL: f64 = 1e-7;
const LLOYD_MAX_ITER: usize = 1_000;
const WEISZFELD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Quantizer {
    pub codebook: DiscreteMeasure,
    /// Source atom index to codebook index; empty for empirical quantizers.
    pub assignment: Vec<usize>,
    /// `W_p(codebook, source)`.
    pub distortion: f64,
    /// `(sum_x w(x) |x - code(x)|^p)^(1/p)` for the assignment map.
    pub voronoi_distortion: f64,
    pub p: f64,
    pub converged: bool,
}

fn check_p(p: f64) -> Result<()> {
    if p == 1.0 || p == 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidP(p))
    }
}

fn identity_quantizer(mu: &DiscreteMeasure, p: f64) -> Quantizer {
    Quantizer {
        codebook: mu.clone(),
        assignment: (0..mu.len()).collect(),
        distortion: 0.0,
        voronoi_distortion: 0.0,
        p,
        converged: true,
    }
}

/// Index of the nearest code, lowest index on ties.
fn nearest(codes: &[Point], x: &[f64]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (k, c) in codes.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < bd {
            bd = d;
            best = k;
        }
    }
    best
}

/// Weighted geometric median by Weiszfeld iteration with the Vardi-Zhang
/// correction at data points.
pub fn geometric_median(points: &[&[f64]], weights: &[f64], start: &[f64]) -> Point {
    let d = start.len();
    let mut y: Point = start.to_vec();
    for _ in 0..10_000 {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        let mut coincident = 0.0;
        let mut pull = vec![0.0; d];
        for (x, &w) in points.iter().zip(weights) {
            let r = dist(x, &y);
            if r < 1e-14 {
                coincident += w;
                continue;
            }
            for t in 0..d {
                num[t] += w * x[t] / r;
                pull[t] += w * (x[t] - y[t]) / r;
            }
            den += w / r;
        }
        if den == 0.0 {
            return y;
        }
        let t_bar: Point = num.iter().map(|v| v / den).collect();
        let next: Point = if coincident > 0.0 {
            let r = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= coincident {
                return y;
            }
            let lam = coincident / r;
            t_bar.iter().zip(&y).map(|(t, yv)| (1.0 - lam) * t + lam * yv).collect()
        } else {
            t_bar
        };
        let step = dist(&next, &y);
        y = next;
        if step < WEISZFELD_TOL {
            break;
        }
    }
    y
}

struct LloydRun {
    codes: Vec<Point>,
    assignment: Vec<usize>,
    cost: f64,
    converged: bool,
}

fn seed_codes(mu: &DiscreteMeasure, n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let sample = |rng: &mut ChaCha8Rng, w: &[f64]| {
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, &wi) in w.iter().enumerate() {
            if u < wi {
                return i;
            }
            u -= wi;
        }
        w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
    };
    let m = mu.len();
    let first = sample(rng, mu.weights());
    let mut codes = vec![mu.point(first).to_vec()];
    let mut dmin: Vec<f64> = (0..m).map(|i| dist_pow(mu.point(i), &codes[0], p)).collect();
    while codes.len() < n {
        let w: Vec<f64> = (0..m).map(|i| mu.weight(i) * dmin[i]).collect();
        let i = sample(rng, &w);
        let c = mu.point(i).to_vec();
        for (j, dj) in dmin.iter_mut().enumerate() {
            *dj = dj.min(dist_pow(mu.point(j), &c, p));
        }
        codes.push(c);
    }
    codes
}

fn centroid(mu: &DiscreteMeasure, members: &[usize], p: f64, current: &[f64]) -> Point {
    let d = mu.dim();
    let mass: f64 = members.iter().map(|&i| mu.weight(i)).sum();
    if p == 2.0 {
        let mut c = vec![0.0; d];
        for &i in members {
            for (t, x) in mu.point(i).iter().enumerate() {
                c[t] += mu.weight(i) * x;
            }
        }
        c.iter().map(|v| v / mass).collect()
    } else {
        let pts: Vec<&[f64]> = members.iter().map(|&i| mu.point(i)).collect();
        let w: Vec<f64> = members.iter().map(|&i| mu.weight(i) / mass).collect();
        geometric_median(&pts, &w, current)
    }
}

/// Alternates nearest-code assignment and centroid steps until the
/// assignment is stable. Empty cells keep their code.
fn lloyd_iterate(mu: &DiscreteMeasure, mut codes: Vec<Point>, p: f64) -> LloydRun {
    let m = mu.len();
    let mut assignment: Vec<usize> = (0..m).map(|i| nearest(&codes, mu.point(i))).collect();
    let mut converged = false;
    for _ in 0..LLOYD_MAX_ITER {
        let mut members = vec![Vec::new(); codes.len()];
        for (i, &k) in assignment.iter().enumerate() {
            members[k].push(i);
        }
        for (k, cell) in members.iter().enumerate() {
            if !cell.is_empty() {
                codes[k] = centroid(mu, cell, p, &codes[k]);
            }
        }
        let next: Vec<usize> = (0..m).map(|i| nearest(&codes, mu.point(i))).collect();
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }
    let cost = kahan_sum((0..m).map(|i| mu.weight(i) * dist_pow(mu.point(i), &codes[assignment[i]], p)));
    LloydRun {
        codes,
        assignment,
        cost,
        converged,
    }
}

/// Packs codes and an assignment into a quantizer: codes without mass are
/// dropped and the weights are the pushforward of the source weights.
fn assemble(mu: &DiscreteMeasure, codes: &[Point], assignment: &[usize], p: f64, converged: bool) -> Result<Quantizer> {
    let mut mass = vec![0.0; codes.len()];
    for (i, &k) in assignment.iter().enumerate() {
        mass[k] += mu.weight(i);
    }
    let kept: Vec<usize> = (0..codes.len()).filter(|&k| mass[k] > 0.0).collect();
    let mut relabel = vec![usize::MAX; codes.len()];
    for (new, &k) in kept.iter().enumerate() {
        relabel[k] = new;
    }
    let codebook = DiscreteMeasure::new(kept.iter().map(|&k| codes[k].clone()).collect(), kept.iter().map(|&k| mass[k]).collect())?;
    // Coincident codes are merged by the measure constructor.
    let assignment: Vec<usize> = assignment
        .iter()
        .map(|&k| codebook.find(&codes[k]).unwrap_or(relabel[k]))
        .collect();
    let cost = kahan_sum((0..mu.len()).map(|i| mu.weight(i) * dist_pow(mu.point(i), codebook.point(assignment[i]), p)));
    let voronoi_distortion = cost.max(0.0).powf(1.0 / p);
    // Every coupling of source and codebook pays at least the nearest-code
    // distance per unit of mass, and the assignment coupling attains it when
    // the assignment is nearest-code; the real line is certified separately.
    let distortion = if mu.dim() == 1 {
        wasserstein_p(&codebook, mu, p)?.0
    } else {
        voronoi_distortion
    };
    Ok(Quantizer {
        codebook,
        assignment,
        distortion,
        voronoi_distortion,
        p,
        converged,
    })
}

/// Best of `restarts` Lloyd runs with k-means++ seeding. Restart `r` draws
/// from the ChaCha8 stream `r` of `seed`. The centroid step is the weighted
/// mean for `p = 2` and the weighted geometric median for `p = 1`.
pub fn lloyd_quantize(mu: &DiscreteMeasure, n: usize, p: f64, restarts: usize, seed: u64) -> Result<Quantizer> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::InvalidArgument("quantizer size must be at least 1".into()));
    }
    if n >= mu.len() {
        return Ok(identity_quantizer(mu, p));
    }
    let mut best: Option<LloydRun> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let run = lloyd_iterate(mu, seed_codes(mu, n, p, &mut rng), p);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let run = best.unwrap();
    assemble(mu, &run.codes, &run.assignment, p, run.converged)
}

/// Optimal `n`-point quantizer of a measure on the real line: dynamic
/// program over contiguous partitions of the sorted atoms, followed by Lloyd
/// polishing (which cannot increase the distortion).
pub fn optimal_quantize_1d(mu: &DiscreteMeasure, n: usize, p: f64) -> Result<Quantizer> {
    check_p(p)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: mu.dim(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("quantizer size must be at least 1".into()));
    }
    if n >= mu.len() {
        return Ok(identity_quantizer(mu, p));
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu.point(a)[0].total_cmp(&mu.point(b)[0]));
    let xs: Vec<f64> = order.iter().map(|&i| mu.point(i)[0]).collect();
    let ws: Vec<f64> = order.iter().map(|&i| mu.weight(i)).collect();
    let seg = SegmentCost::new(&xs, &ws, p);
    let cuts = partition_dp(&seg, xs.len(), n);
    let mut codes = Vec::with_capacity(n);
    let mut assignment = vec![0; mu.len()];
    for (k, w) in cuts.windows(2).enumerate() {
        codes.push(vec![seg.center(w[0], w[1])]);
        for &i in &order[w[0]..w[1]] {
            assignment[i] = k;
        }
    }
    let polished = lloyd_iterate(mu, codes, p);
    assemble(mu, &polished.codes, &polished.assignment, p, polished.converged)
}

/// O(1) (p = 2) or O(log m) (p = 1) cost of quantizing a run of sorted atoms
/// to one point.
struct SegmentCost<'a> {
    xs: &'a [f64],
    p: f64,
    /// Prefix sums are taken of `x - shift` to limit cancellation.
    shift: f64,
    cw: Vec<f64>,
    cwx: Vec<f64>,
    cwxx: Vec<f64>,
}

impl<'a> SegmentCost<'a> {
    fn new(xs: &'a [f64], ws: &[f64], p: f64) -> Self {
        let shift = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / ws.iter().sum::<f64>();
        let mut cw = vec![0.0; xs.len() + 1];
        let mut cwx = vec![0.0; xs.len() + 1];
        let mut cwxx = vec![0.0; xs.len() + 1];
        for i in 0..xs.len() {
            let x = xs[i] - shift;
            cw[i + 1] = cw[i] + ws[i];
            cwx[i + 1] = cwx[i] + ws[i] * x;
            cwxx[i + 1] = cwxx[i] + ws[i] * x * x;
        }
        Self {
            xs,
            p,
            shift,
            cw,
            cwx,
            cwxx,
        }
    }

    fn median(&self, i: usize, j: usize) -> usize {
        let half = 0.5 * (self.cw[i] + self.cw[j]);
        let k = self.cw[i + 1..=j].partition_point(|&c| c < half);
        (i + k).min(j - 1)
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let w = self.cw[j] - self.cw[i];
        let sx = self.cwx[j] - self.cwx[i];
        if self.p == 2.0 {
            ((self.cwxx[j] - self.cwxx[i]) - sx * sx / w).max(0.0)
        } else {
            let k = self.median(i, j);
            let xm = self.xs[k];
            let (wl, xl) = (self.cw[k] - self.cw[i], self.xs_sum(i, k));
            let (wr, xr) = (self.cw[j] - self.cw[k], self.xs_sum(k, j));
            (xm * wl - xl + xr - xm * wr).max(0.0)
        }
    }

    /// `sum w x` over `[i, j)` in absolute coordinates.
    fn xs_sum(&self, i: usize, j: usize) -> f64 {
        (self.cwx[j] - self.cwx[i]) + self.shift * (self.cw[j] - self.cw[i])
    }

    fn center(&self, i: usize, j: usize) -> f64 {
        if self.p == 2.0 {
            let w = self.cw[j] - self.cw[i];
            self.xs_sum(i, j) / w
        } else {
            self.xs[self.median(i, j)]
        }
    }
}

/// Cut points `0 = c_0 < c_1 < ... < c_n = m` minimizing the summed segment
/// cost; divide and conquer over the monotone optimal split.
fn partition_dp(seg: &SegmentCost<'_>, m: usize, n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut prev: Vec<f64> = (0..=m).map(|j| if j == 0 { 0.0 } else { inf }).collect();
    let mut arg = vec![vec![0usize; m + 1]; n + 1];
    for k in 1..=n {
        let mut cur = vec![inf; m + 1];
        solve_layer(seg, &prev, &mut cur, &mut arg[k], k, m, k - 1, m - 1);
        prev = cur;
    }
    let mut cuts = vec![m];
    let mut j = m;
    for k in (1..=n).rev() {
        j = arg[k][j];
        cuts.push(j);
    }
    cuts.reverse();
    cuts
}

#[allow(clippy::too_many_arguments)]
fn solve_layer(
    seg: &SegmentCost<'_>,
    prev: &[f64],
    cur: &mut [f64],
    arg: &mut [usize],
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut best_i = opt_lo;
    for i in opt_lo..=opt_hi.min(mid - 1) {
        if prev[i].is_infinite() {
            continue;
        }
        let v = prev[i] + seg.cost(i, mid);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    cur[mid] = best;
    arg[mid] = best_i;
    if mid > lo {
        solve_layer(seg, prev, cur, arg, lo, mid - 1, opt_lo, best_i);
    }
    solve_layer(seg, prev, cur, arg, mid + 1, hi, best_i, opt_hi);
}

/// Best of `tries` i.i.d. `n`-samples from `mu` by exact `W_p`. Repeated
/// draws of one atom are merged into a single code of weight `k / n`.
pub fn empirical_quantize(mu: &DiscreteMeasure, n: usize, p: f64, tries: usize, seed: u64) -> Result<Quantizer> {
    if n == 0 {
        return Err(Error::InvalidArgument("quantizer size must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(mu.len());
    let mut acc = 0.0;
    for &w in mu.weights() {
        acc += w;
        cdf.push(acc);
    }
    let mut best: Option<Quantizer> = None;
    for t in 0..tries.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut counts = vec![0usize; mu.len()];
        for _ in 0..n {
            let u = rng.gen::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(mu.len() - 1);
            counts[i] += 1;
        }
        let chosen: Vec<usize> = (0..mu.len()).filter(|&i| counts[i] > 0).collect();
        let codebook = DiscreteMeasure::new(
            chosen.iter().map(|&i| mu.point(i).to_vec()).collect(),
            chosen.iter().map(|&i| counts[i] as f64 / n as f64).collect(),
        )?;
        let distortion = wasserstein_p(&codebook, mu, p)?.0;
        if best.as_ref().is_none_or(|b| distortion < b.distortion) {
            best = Some(Quantizer {
                codebook,
                assignment: Vec::new(),
                distortion,
                voronoi_distortion: distortion,
                p,
                converged: true,
            });
        }
    }
    Ok(best.unwrap())
}

/// Coupling of the codebook (first marginal) and `mu` (second) along the
/// Voronoi assignment. For a W_2 fixed point each code is the barycenter of
/// its cell, which makes the coupling a martingale.
pub fn martingale_coupling(mu: &DiscreteMeasure, q: &Quantizer) -> Result<Coupling> {
    if q.assignment.len() != mu.len() {
        return Err(Error::InvalidArgument("quantizer has no assignment for this measure".into()));
    }
    let d = mu.dim();
    let mut mean = vec![vec![0.0; d]; q.codebook.len()];
    let mut mass = vec![0.0; q.codebook.len()];
    for (i, &k) in q.assignment.iter().enumerate() {
        mass[k] += mu.weight(i);
        for (t, x) in mu.point(i).iter().enumerate() {
            mean[k][t] += mu.weight(i) * x;
        }
    }
    let mut deviation = 0.0f64;
    for k in 0..q.codebook.len() {
        for t in 0..d {
            deviation = deviation.max((mean[k][t] / mass[k] - q.codebook.point(k)[t]).abs());
        }
    }
    if deviation > FIXED_POINT_TOL {
        return Err(Error::NotAFixedPoint { deviation });
    }
    let atoms = q.assignment.iter().enumerate().map(|(i, &k)| (vec![k, i], mu.weight(i))).collect();
    Coupling::new(vec![q.codebook.clone(), mu.clone()], atoms)
}

#[derive(Debug, Clone)]
pub struct PlanQuantizer {
    /// Quantizer of the plan viewed as a measure on the joint space; its
    /// assignment indexes the atoms of the plan.
    pub quantizer: Quantizer,
    /// W_2 distortion of the quantizer of the rotated diagonal marginal.
    pub diagonal_distortion: f64,
}

/// Quantizes an optimal plan for the quadratic cost through its diagonal
/// projection: with `u = (x + y)/sqrt 2` and `v = (x - y)/sqrt 2` the support
/// is the graph of a 1-Lipschitz `v = g(u)`. The law of `u` is quantized with
/// `n` codes (exactly on the real line, by Lloyd otherwise) and every code is
/// lifted to the joint barycenter of its cell, so that the joint distortion is
/// at most `sqrt 2` times the diagonal one.
pub fn quantize_plan_diagonal(pi: &Coupling, n: usize, restarts: usize, seed: u64) -> Result<PlanQuantizer> {
    if pi.n_marginals() != 2 || pi.marginal(0).dim() != pi.marginal(1).dim() {
        return Err(Error::InvalidArgument("plan quantization needs two marginals of equal dimension".into()));
    }
    let d = pi.marginal(0).dim();
    let atoms: Vec<(Point, Point)> = (0..pi.len())
        .map(|k| {
            let idx = pi.indices(k);
            (pi.marginal(0).point(idx[0]).to_vec(), pi.marginal(1).point(idx[1]).to_vec())
        })
        .collect();
    check_monotone(&atoms, seed)?;

    let s = core::f64::consts::FRAC_1_SQRT_2;
    let us: Vec<Point> = atoms.iter().map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a + b) * s).collect()).collect();
    // Distinct atoms of a monotone support have distinct u, so no merging.
    let eta = DiscreteMeasure::new(us.clone(), pi.weights().to_vec())?;
    if eta.len() != pi.len() {
        return Err(Error::MonotonicityViolated { violation: 0.0 });
    }
    let qu = if d == 1 {
        optimal_quantize_1d(&eta, n, 2.0)?
    } else {
        lloyd_quantize(&eta, n, 2.0, restarts, seed)?
    };
    let joint = pi.to_joint_measure()?;
    // to_joint_measure keeps plan atom order
    let mut mass = vec![0.0; qu.codebook.len()];
    let mut sum = vec![vec![0.0; 2 * d]; qu.codebook.len()];
    for k in 0..pi.len() {
        let code = qu.assignment[eta.find(&us[k]).unwrap()];
        let w = pi.weight(k);
        mass[code] += w;
        for (t, z) in joint.point(k).iter().enumerate() {
            sum[code][t] += w * z;
        }
    }
    let codes: Vec<Point> = sum.iter().zip(&mass).map(|(s, m)| s.iter().map(|v| v / m).collect()).collect();
    let assignment: Vec<usize> = (0..pi.len()).map(|k| qu.assignment[eta.find(&us[k]).unwrap()]).collect();
    let mut q = assemble(&joint, &codes, &assignment, 2.0, qu.converged)?;
    // The lifted codes need not form a Voronoi configuration in the joint
    // space, so the distortion is certified by an exact transport solve.
    q.distortion = wasserstein_p(&q.codebook, &joint, 2.0)?.0;
    Ok(PlanQuantizer {
        quantizer: q,
        diagonal_distortion: qu.distortion,
    })
}

const MONOTONE_TOL: f64 = 1e-9;
const MONOTONE_PAIR_BUDGET: usize = 2_000_000;

/// Pairwise monotonicity `<x' - x, y' - y> >= -1e-9` of a plan support; all
/// pairs when affordable, otherwise a seeded sample of pairs.
fn check_monotone(atoms: &[(Point, Point)], seed: u64) -> Result<()> {
    let m = atoms.len();
    let pair = |a: usize, b: usize| -> f64 {
        let (x, y) = &atoms[a];
        let (xp, yp) = &atoms[b];
        x.iter().zip(xp).zip(y.iter().zip(yp)).map(|((x, xp), (y, yp))| (xp - x) * (yp - y)).sum()
    };
    let mut worst = 0.0f64;
    if m * m / 2 <= MONOTONE_PAIR_BUDGET {
        for a in 0..m {
            for b in a + 1..m {
                worst = worst.min(pair(a, b));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MONOTONE_PAIR_BUDGET {
            let a = rng.gen_range(0..m);
            let b = rng.gen_range(0..m);
            worst = worst.min(pair(a, b));
        }
    }
    if worst < -MONOTONE_TOL {
        return Err(Error::MonotonicityViolated { violation: -worst });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub c_hat: f64,
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub n_grid: Vec<usize>,
    /// Running minima of the measured distortions.
    pub distortions: Vec<f64>,
}

/// Least squares fit of `log D = log C - alpha log n` after replacing the
/// distortions by their running minima. A zero distortion truncates the grid
/// there.
pub fn fit_power_law(n_grid: &[usize], distortions: &[f64]) -> Result<RateFit> {
    if n_grid.len() != distortions.len() {
        return Err(Error::DimensionMismatch {
            expected: n_grid.len(),
            found: distortions.len(),
        });
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n grid must be strictly increasing".into()));
    }
    let mut mins = Vec::with_capacity(distortions.len());
    let mut run = f64::INFINITY;
    for &d in distortions {
        run = run.min(d);
        if !(run > 0.0) {
            break;
        }
        mins.push(run);
    }
    if mins.len() < 4 {
        return Err(Error::ZeroDistortion { remaining: mins.len() });
    }
    let grid: Vec<usize> = n_grid[..mins.len()].to_vec();
    let lx: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = mins.iter().map(|d| d.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly);
    Ok(RateFit {
        c_hat: intercept.exp(),
        alpha_hat: -slope,
        r_squared: r2,
        n_grid: grid,
        distortions: mins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizerKind {
    /// Multi-start Lloyd.
    Lloyd { restarts: usize },
    /// Exact dynamic program (real line only).
    Optimal1d,
    /// Best of `tries` uniform samples.
    Empirical { tries: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum QuantSource<'a> {
    Measure(&'a DiscreteMeasure),
    /// An optimal plan for the quadratic cost, quantized along its diagonal.
    Plan(&'a Coupling),
}

/// Measures the distortion on every grid size and fits `C n^{-alpha}`.
pub fn fit_quant_rate(source: QuantSource<'_>, p: f64, n_grid: &[usize], kind: QuantizerKind, seed: u64) -> Result<RateFit> {
    if n_grid.len() < 4 {
        return Err(Error::InvalidArgument("rate fits need at least 4 grid sizes".into()));
    }
    let mut dist = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let q = match (source, kind) {
            (QuantSource::Measure(mu), QuantizerKind::Lloyd { restarts }) => lloyd_quantize(mu, n, p, restarts, seed)?,
            (QuantSource::Measure(mu), QuantizerKind::Optimal1d) => optimal_quantize_1d(mu, n, p)?,
            (QuantSource::Measure(mu), QuantizerKind::Empirical { tries }) => empirical_quantize(mu, n, p, tries, seed)?,
            (QuantSource::Plan(pi), QuantizerKind::Lloyd { restarts }) => quantize_plan_diagonal(pi, n, restarts, seed)?.quantizer,
            (QuantSource::Plan(pi), _) => quantize_plan_diagonal(pi, n, 10, seed)?.quantizer,
        };
        dist.push(q.distortion);
    }
    fit_power_law(n_grid, &dist)
}
