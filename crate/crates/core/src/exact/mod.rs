//! Exact (unregularized) optimal transport with Kantorovich potentials.

mod lp;
mod transport;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;
use core::cmp::Ordering;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::math::kahan_sum;
use crate::measure::{Coupling, DiscreteMeasure, ProductShape};

/// Largest dense cost matrix accepted by the two-marginal solver.
pub const TWO_MARGINAL_CELL_LIMIT: usize = 1 << 20;
/// Largest product support accepted by the multi-marginal solver.
pub const MULTI_MARGINAL_LIMIT: usize = 200_000;
/// Dual feasibility tolerance on reduced costs.
pub const REDUCED_COST_TOL: f64 = 1e-9;

/// Dual variables `h_i`, one vector per marginal, indexed by support atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub h: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn zeros(marginals: &[DiscreteMeasure]) -> Self {
        Self {
            h: marginals.iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    /// `sum_i <h_i, mu_i>`.
    pub fn dual_value(&self, marginals: &[DiscreteMeasure]) -> f64 {
        kahan_sum(
            self.h
                .iter()
                .zip(marginals)
                .flat_map(|(h, m)| h.iter().zip(m.weights()).map(|(a, w)| a * w)),
        )
    }

    /// `sum_i h_i(x_{idx_i})`.
    pub fn sum_at(&self, idx: &[usize]) -> f64 {
        self.h.iter().zip(idx).map(|(h, &i)| h[i]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub value: f64,
    pub plan: Coupling,
    pub potentials: Potentials,
    pub pivots: usize,
}

fn coordinate_order(m: &DiscreteMeasure) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| {
        for (x, y) in m.point(a).iter().zip(m.point(b)) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.cmp(&b)
    });
    order
}

/// Solves the (multi-marginal) optimal transport problem exactly.
///
/// Two marginals use the transportation simplex; three or more use a dense
/// revised simplex on the flattened product. The returned potentials are
/// checked for dual feasibility and complementary slackness.
pub fn solve_exact_ot(cost: &CostModel, marginals: &[DiscreteMeasure]) -> Result<ExactSolution> {
    if marginals.len() < 2 {
        return Err(Error::InvalidArgument("exact OT needs at least two marginals".into()));
    }
    let limit = if marginals.len() == 2 {
        TWO_MARGINAL_CELL_LIMIT
    } else {
        MULTI_MARGINAL_LIMIT
    };
    let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), limit)?;
    let c = cost.tensor(marginals, limit)?;

    let (atoms, potentials, pivots) = if marginals.len() == 2 {
        let (a, b) = (&marginals[0], &marginals[1]);
        let r = transport::transport_simplex(
            a.weights(),
            b.weights(),
            &c,
            &coordinate_order(a),
            &coordinate_order(b),
        )?;
        let atoms: Vec<(usize, f64)> = r.flows.iter().map(|&(i, j, x)| (i * b.len() + j, x)).collect();
        (atoms, Potentials { h: vec![r.u, r.v] }, r.pivots)
    } else {
        let w: Vec<&[f64]> = marginals.iter().map(|m| m.weights()).collect();
        let r = lp::multi_marginal_simplex(&w, &shape, &c)?;
        (r.x, Potentials { h: r.duals }, r.pivots)
    };

    let plan = Coupling::from_flat(marginals.to_vec(), atoms)?;
    let value = kahan_sum(plan.keys().iter().zip(plan.weights()).map(|(&k, &w)| w * c[k]));
    check_potentials(&shape, &c, &potentials, &plan)?;
    Ok(ExactSolution {
        value,
        plan,
        potentials,
        pivots,
    })
}

fn check_potentials(shape: &ProductShape, c: &[f64], pot: &Potentials, plan: &Coupling) -> Result<()> {
    let scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = REDUCED_COST_TOL * scale;
    let mut idx = vec![0; shape.rank()];
    let mut min_rc = f64::INFINITY;
    for (k, &ck) in c.iter().enumerate() {
        shape.unflat(k, &mut idx);
        min_rc = min_rc.min(ck - pot.sum_at(&idx));
    }
    if min_rc < -tol {
        return Err(Error::InvariantViolation(format!("exact potentials infeasible: min reduced cost {min_rc:e}")));
    }
    for (&k, _) in plan.keys().iter().zip(plan.weights()) {
        shape.unflat(k, &mut idx);
        let rc = c[k] - pot.sum_at(&idx);
        if rc.abs() > tol {
            return Err(Error::InvariantViolation(format!(
                "complementary slackness violated on plan atom: reduced cost {rc:e}"
            )));
        }
    }
    Ok(())
}

/// Dense reduced cost `c - sum_i h_i` over the product support (row-major).
pub fn reduced_cost(cost: &CostModel, potentials: &Potentials, marginals: &[DiscreteMeasure]) -> Result<Vec<f64>> {
    if potentials.h.len() != marginals.len() {
        return Err(Error::DimensionMismatch {
            expected: marginals.len(),
            found: potentials.h.len(),
        });
    }
    for (h, m) in potentials.h.iter().zip(marginals) {
        if h.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                found: h.len(),
            });
        }
    }
    let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), crate::measure::PRODUCT_LIMIT)?;
    let mut c = cost.tensor(marginals, crate::measure::PRODUCT_LIMIT)?;
    let mut idx = vec![0; shape.rank()];
    for (k, v) in c.iter_mut().enumerate() {
        shape.unflat(k, &mut idx);
        *v -= potentials.sum_at(&idx);
    }
    Ok(c)
}

/// Monotone (quantile) coupling of two measures on the real line.
pub fn monotone_coupling(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Coupling> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: mu.dim().max(nu.dim()),
        });
    }
    let oa = coordinate_order(mu);
    let ob = coordinate_order(nu);
    let cdf = |m: &DiscreteMeasure, order: &[usize]| {
        let mut acc = 0.0;
        let mut out: Vec<f64> = order
            .iter()
            .map(|&i| {
                acc += m.weight(i);
                acc
            })
            .collect();
        *out.last_mut().unwrap() = 1.0;
        out
    };
    let fa = cdf(mu, &oa);
    let fb = cdf(nu, &ob);
    let mut atoms = Vec::with_capacity(fa.len() + fb.len());
    let (mut i, mut j) = (0, 0);
    let mut prev = 0.0;
    while i < fa.len() && j < fb.len() {
        let hi = fa[i].min(fb[j]);
        if hi > prev {
            atoms.push((oa[i] * nu.len() + ob[j], hi - prev));
            prev = hi;
        }
        if fa[i] <= fb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Coupling::from_flat(alloc::vec![mu.clone(), nu.clone()], atoms)
}

/// `W_p(mu, nu)` under the Euclidean ground metric, with an optimal plan.
///
/// On the real line the monotone coupling is optimal for every `p >= 1` and
/// is used directly; otherwise the transportation simplex is run on the cost
/// `|x - y|^p`.
pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<(f64, Coupling)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let cost = CostModel::euclidean_power(p)?;
    let (value, plan) = if mu.dim() == 1 {
        let plan = monotone_coupling(mu, nu)?;
        let value = kahan_sum(
            plan.atoms()
                .map(|(idx, w)| w * cost.eval(&[mu.point(idx[0]), nu.point(idx[1])])),
        );
        (value, plan)
    } else {
        let s = solve_exact_ot(&cost, &[mu.clone(), nu.clone()])?;
        (s.value, s.plan)
    };
    Ok((value.max(0.0).powf(1.0 / p), plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn dirac_marginals_have_single_coupling() {
        let d = DiscreteMeasure::dirac(vec![0.3, -1.0]).unwrap();
        let s = solve_exact_ot(&CostModel::sq_euclidean(), &[d.clone(), d]).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.plan.len(), 1);
    }

    #[test]
    fn identical_uniform_pairs_cost_nothing() {
        let mu = line(&[0.0, 1.0]);
        let s = solve_exact_ot(&CostModel::sq_euclidean(), &[mu.clone(), mu]).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.plan.indices(0), vec![0, 0]);
        assert_eq!(s.plan.indices(1), vec![1, 1]);
    }

    #[test]
    fn two_by_two_matches_brute_force_over_free_mass() {
        let mu = line(&[0.0, 1.0]);
        let nu = line(&[0.2, 0.9]);
        let s = solve_exact_ot(&CostModel::sq_euclidean(), &[mu, nu]).unwrap();
        // pi = [[t, 1/2 - t], [1/2 - t, t]]
        let c = [0.04, 0.81, 0.64, 0.01];
        let steps = 1_000_000;
        let best = (0..=steps)
            .map(|k| {
                let t = 0.5 * k as f64 / steps as f64;
                t * c[0] + (0.5 - t) * c[1] + (0.5 - t) * c[2] + t * c[3]
            })
            .fold(f64::INFINITY, f64::min);
        assert!((s.value - best).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_shifted_pairs() {
        let (d, _) = wasserstein_p(&line(&[0.0, 1.0]), &line(&[2.0, 3.0]), 2.0).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        let mu = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::dirac(vec![3.0, 4.0]).unwrap();
        assert!((wasserstein_p(&mu, &nu, 1.0).unwrap().0 - 5.0).abs() < 1e-15);
        assert!(matches!(
            wasserstein_p(&mu, &line(&[1.0]), 2.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reduced_cost_vanishes_on_diagonal() {
        let mu = line(&[0.0, 0.5, 2.0]);
        let cost = CostModel::sq_euclidean();
        let s = solve_exact_ot(&cost, &[mu.clone(), mu.clone()]).unwrap();
        let rc = reduced_cost(&cost, &s.potentials, &[mu.clone(), mu]).unwrap();
        for i in 0..3 {
            assert!(rc[i * 3 + i].abs() < 1e-12);
        }
        assert!(rc.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn zero_cost_zero_potentials_zero_reduced_cost() {
        let mu = line(&[0.0, 1.0]);
        let rc = reduced_cost(&CostModel::zero(), &Potentials::zeros(&[mu.clone(), mu.clone()]), &[mu.clone(), mu]).unwrap();
        assert!(rc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_marginal_lp_is_dual_tight() {
        let a = line(&[0.0, 1.0, 2.0]);
        let b = line(&[0.5, 1.5]);
        let c = line(&[-1.0, 0.0, 3.0]);
        let cost = CostModel::gangbo_swiech(3);
        let s = solve_exact_ot(&cost, &[a.clone(), b.clone(), c.clone()]).unwrap();
        let dual = s.potentials.dual_value(&[a, b, c]);
        assert!((s.value - dual).abs() < 1e-10);
    }

    #[test]
    fn oversized_problem_rejected() {
        let big = DiscreteMeasure::uniform_grid(1, 2000, 0.0, 1.0).unwrap();
        let r = solve_exact_ot(&CostModel::sq_euclidean(), &[big.clone(), big]);
        assert!(matches!(r, Err(Error::SizeLimitExceeded { .. })));
    }
}
