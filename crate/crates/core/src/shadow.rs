//! Kernels, shadows of couplings, and the two coupling constructions behind
//! the upper certificates: the double shadow through quantized marginals and
//! the independent recombination of martingale kernels.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::cost::{CostModel, CostTag};
use crate::divergence::{divergence_cap, CapMode, FDivergence};
use crate::error::{Error, Result};
use crate::exact::wasserstein_p;
use crate::math::{kahan_sum, sq_dist};
use crate::measure::{Coupling, DiscreteMeasure, Point, ProductShape, PRODUCT_LIMIT};
use crate::quantize::{empirical_quantize, lloyd_quantize, optimal_quantize_1d, quantize_plan_diagonal, FIXED_POINT_TOL};

/// Atoms of composed couplings below this weight are dropped.
pub const PRUNE_TOL: f64 = 1e-15;

/// Row-stochastic transition table from the atoms of a source measure to the
/// atoms of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub target: DiscreteMeasure,
    /// `rows[i]` lists `(target index, probability)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Rows of sources without mass; they hold the arbitrary row `[(0, 1)]`.
    pub unused: Vec<bool>,
}

impl Kernel {
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Pushforward `source ⊗ K` on the target support.
    pub fn push(&self, source: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target.len()];
        for (row, &w) in self.rows.iter().zip(source) {
            for &(j, q) in row {
                out[j] += w * q;
            }
        }
        out
    }
}

/// Conditional law of the second coordinate of a two-marginal coupling given
/// the first.
pub fn disintegrate(kappa: &Coupling) -> Result<Kernel> {
    if kappa.n_marginals() != 2 {
        return Err(Error::InvalidArgument("disintegration needs a two-marginal coupling".into()));
    }
    let m = kappa.marginal(0).len();
    let mut rows = vec![Vec::new(); m];
    let mut mass = vec![0.0; m];
    for k in 0..kappa.len() {
        let (i, j) = (kappa.index(k, 0), kappa.index(k, 1));
        rows[i].push((j, kappa.weight(k)));
        mass[i] += kappa.weight(k);
    }
    let mut unused = vec![false; m];
    for i in 0..m {
        if mass[i] > 0.0 {
            for e in rows[i].iter_mut() {
                e.1 /= mass[i];
            }
        } else {
            rows[i] = vec![(0, 1.0)];
            unused[i] = true;
        }
    }
    Ok(Kernel {
        target: kappa.marginal(1).clone(),
        rows,
        unused,
    })
}

/// Second marginal of `pi ⊗ (K_1 ⊗ ... ⊗ K_N)`: every atom of `pi` is spread
/// by the product of the rows of its coordinates. Atoms below [`PRUNE_TOL`]
/// are dropped and the rest renormalized.
pub fn compose(pi: &Coupling, kernels: &[Kernel]) -> Result<Coupling> {
    if kernels.len() != pi.n_marginals() {
        return Err(Error::DimensionMismatch {
            expected: pi.n_marginals(),
            found: kernels.len(),
        });
    }
    let targets: Vec<DiscreteMeasure> = kernels.iter().map(|k| k.target.clone()).collect();
    let shape = ProductShape::new(targets.iter().map(|t| t.len()).collect(), PRODUCT_LIMIT)?;
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let n = kernels.len();
    for k in 0..pi.len() {
        let rows: Vec<&[(usize, f64)]> = (0..n).map(|i| kernels[i].row(pi.index(k, i))).collect();
        let mut pos = vec![0usize; n];
        'outer: loop {
            let mut w = pi.weight(k);
            let mut flat = 0;
            for i in 0..n {
                let (j, q) = rows[i][pos[i]];
                w *= q;
                flat += j * shape.strides()[i];
            }
            *acc.entry(flat).or_insert(0.0) += w;
            for i in (0..n).rev() {
                pos[i] += 1;
                if pos[i] < rows[i].len() {
                    continue 'outer;
                }
                pos[i] = 0;
            }
            break;
        }
    }
    let kept: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, w)| w >= PRUNE_TOL).collect();
    let total = kahan_sum(kept.iter().map(|a| a.1));
    Coupling::from_flat(targets, kept.into_iter().map(|(k, w)| (k, w / total)).collect())
}

#[derive(Debug, Clone)]
pub struct Shadow {
    pub plan: Coupling,
    pub kernels: Vec<Kernel>,
    /// `W_p(mu_i, target_i)` for every marginal.
    pub wp: Vec<f64>,
}

impl Shadow {
    /// `(sum_i W_p(mu_i, target_i)^p)^(1/p)`, which equals `W_p(pi, shadow)`.
    pub fn displacement(&self, p: f64) -> f64 {
        self.wp.iter().map(|w| w.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Shadow of `pi` on `targets`: compose `pi` with the kernels of
/// `W_p`-optimal couplings between its marginals and the targets.
pub fn shadow(pi: &Coupling, targets: &[DiscreteMeasure], p: f64) -> Result<Shadow> {
    if targets.len() != pi.n_marginals() {
        return Err(Error::DimensionMismatch {
            expected: pi.n_marginals(),
            found: targets.len(),
        });
    }
    let mut kernels = Vec::with_capacity(targets.len());
    let mut wp = Vec::with_capacity(targets.len());
    for (mu, t) in pi.marginals().iter().zip(targets) {
        if mu.dim() != t.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                found: t.dim(),
            });
        }
        let (w, kappa) = wasserstein_p(mu, t, p)?;
        kernels.push(disintegrate(&kappa)?);
        wp.push(w);
    }
    let plan = compose(pi, &kernels)?;
    Ok(Shadow { plan, kernels, wp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantKind {
    /// Exact dynamic program on the real line, multi-start Lloyd otherwise.
    Optimal,
    /// Best of several uniform samples.
    Empirical,
}

#[derive(Debug, Clone)]
pub struct DoubleShadow {
    pub plan: Coupling,
    /// Shadow of `pi_star` on `(mu_1, mu_2^{n_2}, ..., mu_N^{n_N})`.
    pub intermediate: Coupling,
    /// Smallest applicable divergence cap for the intermediate coupling.
    pub div_cap_used: f64,
    pub cap_mode: CapMode,
    /// `2 (sum_{i>=2} W_p(mu_i^{n_i}, mu_i)^p)^(1/p)`.
    pub w_bound: f64,
    /// `W_p(mu_i^{n_i}, mu_i)` for `i >= 2`.
    pub quant_wp: Vec<f64>,
}

const QUANT_RESTARTS: usize = 10;

fn quantize_marginal(mu: &DiscreteMeasure, n: usize, p: f64, kind: QuantKind, seed: u64) -> Result<DiscreteMeasure> {
    let q = match kind {
        QuantKind::Optimal if mu.dim() == 1 => optimal_quantize_1d(mu, n, p)?,
        QuantKind::Optimal => lloyd_quantize(mu, n, p, QUANT_RESTARTS, seed)?,
        QuantKind::Empirical => empirical_quantize(mu, n, p, QUANT_RESTARTS, seed)?,
    };
    Ok(q.codebook)
}

/// Quantizes marginals `2..N` of `pi_star` to `sizes`, shadows `pi_star` onto
/// the quantized marginals and shadows the result back onto the original
/// ones.
pub fn double_shadow_coupling(
    pi_star: &Coupling,
    fd: &FDivergence,
    sizes: &[usize],
    p: f64,
    kind: QuantKind,
    seed: u64,
) -> Result<DoubleShadow> {
    let n = pi_star.n_marginals();
    if sizes.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: sizes.len(),
        });
    }
    let mut targets = vec![pi_star.marginal(0).clone()];
    for (i, &s) in sizes.iter().enumerate() {
        targets.push(quantize_marginal(pi_star.marginal(i + 1), s, p, kind, seed.wrapping_add(i as u64))?);
    }
    let there = shadow(pi_star, &targets, p)?;
    let back = shadow(&there.plan, pi_star.marginals(), p)?;
    let quant_wp: Vec<f64> = there.wp[1..].to_vec();
    let w_bound = 2.0 * quant_wp.iter().map(|w| w.powf(p)).sum::<f64>().powf(1.0 / p);

    let actual: Vec<usize> = targets[1..].iter().map(|t| t.len()).collect();
    let mut modes = vec![CapMode::EntropicChain];
    if n == 2 {
        modes.push(CapMode::TwoMarginalConcave);
    }
    if kind == QuantKind::Empirical {
        // repeated draws carry weight k / n, so the cap uses the sample sizes
        modes.push(CapMode::EmpiricalProduct);
    }
    let mut best: Option<(f64, CapMode)> = None;
    for mode in modes {
        let sz = if mode == CapMode::EmpiricalProduct { sizes } else { &actual[..] };
        if let Ok(v) = divergence_cap(fd, mode, sz) {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, mode));
            }
        }
    }
    let (div_cap_used, cap_mode) = best.ok_or(Error::FlagViolation("every divergence cap applicable to this construction"))?;
    Ok(DoubleShadow {
        plan: back.plan,
        intermediate: there.plan,
        div_cap_used,
        cap_mode,
        w_bound,
        quant_wp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanQuantMethod {
    /// Lloyd (p = 2) on the joint space.
    JointLloyd { restarts: usize },
    /// Diagonal projection; quadratic cost with two equal-dimension blocks.
    Diagonal,
}

#[derive(Debug, Clone)]
pub struct MartingaleConstruction {
    /// The recombined coupling in `Pi(mu_1, ..., mu_N)`.
    pub plan: Coupling,
    /// The quantized plan on its own (quantized) marginals.
    pub quantized: Coupling,
    /// `int |x - y|^2 d theta` for the martingale coupling of quantized and
    /// original plan.
    pub theta_cost: f64,
    /// `2 B theta_cost`.
    pub taylor_bound: f64,
    /// Largest blockwise barycenter deviation of the recombined martingale.
    pub barycenter_error: f64,
}

/// Quantizes `pi_star` on `n` points, splits the martingale coupling between
/// the quantized and the original plan into its blocks, and recombines the
/// block kernels independently.
pub fn independent_martingale_coupling(
    pi_star: &Coupling,
    n: usize,
    cost: &CostModel,
    method: PlanQuantMethod,
    seed: u64,
) -> Result<MartingaleConstruction> {
    let b = cost.second_deriv_b().ok_or(Error::MissingB)?;
    let nm = pi_star.n_marginals();
    let joint = pi_star.to_joint_measure()?;
    // joint atom k is plan atom k
    let (codes, assignment): (Vec<Point>, Vec<usize>) = match method {
        PlanQuantMethod::Diagonal => {
            if cost.tag() != CostTag::SqEuclidean {
                return Err(Error::InvalidArgument("diagonal plan quantization needs the quadratic cost".into()));
            }
            let q = quantize_plan_diagonal(pi_star, n, QUANT_RESTARTS, seed)?.quantizer;
            ((0..q.codebook.len()).map(|k| q.codebook.point(k).to_vec()).collect(), q.assignment)
        }
        PlanQuantMethod::JointLloyd { restarts } => {
            let q = lloyd_quantize(&joint, n, 2.0, restarts, seed)?;
            ((0..q.codebook.len()).map(|k| q.codebook.point(k).to_vec()).collect(), q.assignment)
        }
    };

    // theta: code k <- plan atom j; barycenters must match the codes
    let dim = joint.dim();
    let mut mass = vec![0.0; codes.len()];
    let mut mean = vec![vec![0.0; dim]; codes.len()];
    let mut theta_terms = Vec::with_capacity(joint.len());
    for (j, &k) in assignment.iter().enumerate() {
        let w = joint.weight(j);
        mass[k] += w;
        for (t, z) in joint.point(j).iter().enumerate() {
            mean[k][t] += w * z;
        }
        theta_terms.push(w * sq_dist(joint.point(j), &codes[k]));
    }
    let mut deviation = 0.0f64;
    for k in 0..codes.len() {
        for t in 0..dim {
            deviation = deviation.max((mean[k][t] / mass[k] - codes[k][t]).abs());
        }
    }
    if deviation > FIXED_POINT_TOL {
        return Err(Error::NotAFixedPoint { deviation });
    }
    let theta_cost = kahan_sum(theta_terms);

    // quantized marginals mu_i^n: block values of the codes, merged by value
    let offsets: Vec<usize> = pi_star
        .marginals()
        .iter()
        .scan(0, |acc, m| {
            let o = *acc;
            *acc += m.dim();
            Some(o)
        })
        .collect();
    let block = |k: usize, i: usize| -> &[f64] { &codes[k][offsets[i]..offsets[i] + pi_star.marginal(i).dim()] };
    let mut quant_marginals = Vec::with_capacity(nm);
    for i in 0..nm {
        let pts: Vec<Point> = (0..codes.len()).map(|k| block(k, i).to_vec()).collect();
        quant_marginals.push(DiscreteMeasure::new(pts, mass.clone())?);
    }
    let code_index = |k: usize, i: usize| quant_marginals[i].find(block(k, i)).unwrap();
    let quantized = Coupling::new(
        quant_marginals.clone(),
        (0..codes.len()).map(|k| ((0..nm).map(|i| code_index(k, i)).collect(), mass[k])).collect(),
    )?;

    // theta_i on (mu_i^n, mu_i) and its kernel
    let mut kernels = Vec::with_capacity(nm);
    let mut barycenter_error = 0.0f64;
    for i in 0..nm {
        let atoms = assignment
            .iter()
            .enumerate()
            .map(|(j, &k)| (vec![code_index(k, i), pi_star.index(j, i)], pi_star.weight(j)))
            .collect();
        let theta_i = Coupling::new(vec![quant_marginals[i].clone(), pi_star.marginal(i).clone()], atoms)?;
        let kernel = disintegrate(&theta_i)?;
        for (a, row) in kernel.rows.iter().enumerate() {
            let x = quant_marginals[i].point(a);
            for (t, &xt) in x.iter().enumerate() {
                let m: f64 = row.iter().map(|&(j, q)| q * pi_star.marginal(i).point(j)[t]).sum();
                barycenter_error = barycenter_error.max((m - xt).abs());
            }
        }
        kernels.push(kernel);
    }
    let plan = compose(&quantized, &kernels)?;
    Ok(MartingaleConstruction {
        plan,
        quantized,
        theta_cost,
        taylor_bound: 2.0 * b * theta_cost,
        barycenter_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{divergence_to_product, eval_divergence};
    use crate::exact::solve_exact_ot;
    use crate::measure::product_measure;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn product_kernel_rows_are_the_marginal() {
        let a = line(&[0.0, 1.0]);
        let b = DiscreteMeasure::new(vec![vec![0.0], vec![2.0], vec![3.0]], vec![0.2, 0.3, 0.5]).unwrap();
        let k = disintegrate(&product_measure(&[a, b.clone()]).unwrap()).unwrap();
        for row in &k.rows {
            let w: Vec<f64> = row.iter().map(|e| e.1).collect();
            for (x, y) in w.iter().zip(b.weights()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_reassembles_the_coupling() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.3, 0.3, 0.4]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.5, 0.25, 0.25]).unwrap();
        let atoms = vec![
            (vec![0, 0], 0.2),
            (vec![0, 2], 0.1),
            (vec![1, 0], 0.1),
            (vec![1, 1], 0.2),
            (vec![2, 0], 0.2),
            (vec![2, 1], 0.05),
            (vec![2, 2], 0.15),
        ];
        let kappa = Coupling::new(vec![a.clone(), b], atoms).unwrap();
        let k = disintegrate(&kappa).unwrap();
        for (idx, w) in kappa.atoms() {
            let q = k.row(idx[0]).iter().find(|e| e.0 == idx[1]).unwrap().1;
            assert!((a.weight(idx[0]) * q - w).abs() < 1e-15);
        }
    }

    #[test]
    fn shadow_on_own_marginals_is_identity() {
        let a = line(&[0.0, 0.5, 1.0]);
        let b = line(&[2.0, 3.0, 4.0]);
        let pi = Coupling::new(vec![a.clone(), b.clone()], vec![(vec![0, 2], 1.0 / 3.0), (vec![1, 0], 1.0 / 3.0), (vec![2, 1], 1.0 / 3.0)]).unwrap();
        let s = shadow(&pi, &[a, b], 2.0).unwrap();
        assert_eq!(s.plan, pi);
        assert_eq!(s.displacement(2.0), 0.0);
    }

    #[test]
    fn shadow_on_diracs_is_their_product() {
        let pi = product_measure(&[line(&[0.0, 1.0]), line(&[3.0, 4.0, 5.0])]).unwrap();
        let t = [DiscreteMeasure::dirac(vec![0.2]).unwrap(), DiscreteMeasure::dirac(vec![7.0]).unwrap()];
        let s = shadow(&pi, &t, 1.0).unwrap();
        assert_eq!(s.plan.len(), 1);
    }

    #[test]
    fn shadow_displacement_matches_joint_transport() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![0.4], vec![1.0], vec![1.3]], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![-1.0], vec![0.0], vec![0.5], vec![2.0]], vec![0.25, 0.25, 0.3, 0.2]).unwrap();
        let pi = solve_exact_ot(&CostModel::sq_euclidean(), &[a, b]).unwrap().plan;
        let ta = DiscreteMeasure::new(vec![vec![0.1], vec![0.9], vec![1.5]], vec![0.3, 0.3, 0.4]).unwrap();
        let tb = DiscreteMeasure::new(vec![vec![-0.5], vec![0.7], vec![1.0]], vec![0.5, 0.2, 0.3]).unwrap();
        let s = shadow(&pi, &[ta, tb], 2.0).unwrap();
        let joint_w = wasserstein_p(&pi.to_joint_measure().unwrap(), &s.plan.to_joint_measure().unwrap(), 2.0).unwrap().0;
        assert!((joint_w.powi(2) - s.displacement(2.0).powi(2)).abs() < 1e-8);
        let fd = FDivergence::entropy();
        assert!(divergence_to_product(&s.plan, &fd) <= divergence_to_product(&pi, &fd) + 1e-10);
    }

    #[test]
    fn double_shadow_entropy_cap() {
        let mu = DiscreteMeasure::uniform_grid(1, 5, 0.0, 1.0).unwrap();
        let pi = solve_exact_ot(&CostModel::l1_sum(1), &[mu.clone(), mu]).unwrap().plan;
        let fd = FDivergence::entropy();
        let ds = double_shadow_coupling(&pi, &fd, &[2], 1.0, QuantKind::Optimal, 0).unwrap();
        assert!((ds.div_cap_used - 2f64.ln()).abs() < 1e-15);
        let d_tilde = divergence_to_product(&ds.intermediate, &fd);
        assert!(divergence_to_product(&ds.plan, &fd) <= d_tilde + 1e-10);
        assert!(d_tilde <= ds.div_cap_used + 1e-10);
        // transport cost increase is controlled by 2 L W_1
        let c = CostModel::l1_sum(1);
        let cost_of = |q: &Coupling| -> f64 { q.atoms().map(|(i, w)| w * c.eval_indices(q.marginals(), &i)).sum() };
        assert!(cost_of(&ds.plan) - cost_of(&pi) <= ds.w_bound + 1e-12);
        let w = wasserstein_p(&pi.to_joint_measure().unwrap(), &ds.plan.to_joint_measure().unwrap(), 1.0).unwrap().0;
        assert!(w <= ds.w_bound + 1e-12);
    }

    #[test]
    fn full_size_double_shadow_is_trivial() {
        let mu = line(&[0.0, 1.0, 2.0]);
        let pi = Coupling::diagonal(&mu).unwrap();
        let ds = double_shadow_coupling(&pi, &FDivergence::entropy(), &[3], 2.0, QuantKind::Optimal, 0).unwrap();
        assert_eq!(ds.plan, pi);
        assert_eq!(ds.w_bound, 0.0);
    }

    #[test]
    fn martingale_recombination_is_exact_for_linear_cost() {
        let a = DiscreteMeasure::uniform_grid(1, 16, 0.0, 1.0).unwrap();
        let pts: Vec<Point> = (0..16).map(|i| vec![(i as f64 / 15.0).powi(2)]).collect();
        let b = DiscreteMeasure::uniform(pts).unwrap();
        let pi = solve_exact_ot(&CostModel::sq_euclidean(), &[a, b]).unwrap().plan;
        let lin = CostModel::custom(alloc::sync::Arc::new(|x: &[&[f64]]| 2.0 * x[0][0] - 3.0 * x[1][0]), 1.0, None, Some(0.0)).unwrap();
        let mc = independent_martingale_coupling(&pi, 4, &lin, PlanQuantMethod::JointLloyd { restarts: 5 }, 3).unwrap();
        let cost_of = |q: &Coupling| -> f64 { q.atoms().map(|(i, w)| w * lin.eval_indices(q.marginals(), &i)).sum() };
        assert!((cost_of(&mc.plan) - cost_of(&pi)).abs() < 1e-12);
        assert!(mc.barycenter_error < 1e-7);
        assert_eq!(mc.taylor_bound, 0.0);
    }

    #[test]
    fn martingale_taylor_bound_quadratic() {
        let a = DiscreteMeasure::uniform_grid(1, 64, 0.0, 1.0).unwrap();
        let b = DiscreteMeasure::uniform_grid(1, 64, 0.2, 0.9).unwrap();
        let c = CostModel::sq_euclidean();
        let sol = solve_exact_ot(&c, &[a, b]).unwrap();
        let fd = FDivergence::power(2.0).unwrap();
        for n in [2, 4, 8, 16] {
            let mc = independent_martingale_coupling(&sol.plan, n, &c, PlanQuantMethod::Diagonal, 0).unwrap();
            let v: f64 = mc.plan.atoms().map(|(i, w)| w * c.eval_indices(mc.plan.marginals(), &i)).sum();
            assert!(v - sol.value <= mc.taylor_bound + 1e-7);
            assert!(mc.barycenter_error < 1e-7);
            let dq = divergence_to_product(&mc.quantized, &fd);
            let dp = eval_divergence(&mc.plan, &product_measure(mc.plan.marginals()).unwrap(), &fd).unwrap().to_f64();
            assert!(dp <= dq + 1e-10);
        }
    }

    #[test]
    fn missing_b_is_reported() {
        let mu = line(&[0.0, 1.0]);
        let pi = Coupling::diagonal(&mu).unwrap();
        let r = independent_martingale_coupling(&pi, 1, &CostModel::l1_sum(1), PlanQuantMethod::Diagonal, 0);
        assert!(matches!(r, Err(Error::MissingB)));
    }
}
