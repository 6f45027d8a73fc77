//! Transport costs with the regularity metadata the rate bounds consume.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::kahan_sum;
use crate::measure::{Coupling, DiscreteMeasure, ProductShape};

/// Evaluator signature for custom costs: one coordinate slice per marginal.
pub type CostFn = dyn Fn(&[&[f64]]) -> f64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostTag {
    /// `|x - y|^2`; for `N > 2` marginals the pairwise sum.
    SqEuclidean,
    /// `sum_k |x_k - y_k|` (coordinatewise L1 distance).
    L1Sum,
    /// `|x - y|^r` under the Euclidean norm.
    EuclideanPower(f64),
    /// `sum_{i<j} |x_i - x_j|^2`.
    GangboSwiech,
    Custom,
}

/// A cost on the product of `N` Euclidean spaces.
///
/// `lipschitz_l` is a constant with `|c(x) - c(x')| <= L sum_i |x_i - x'_i|`.
/// `second_deriv_b` bounds the second-order Taylor remainder,
/// `|c(x + w) - c(x) - c'(x) w| <= B |w|^2`, which is the only form the
/// martingale estimate uses. For the quadratic cost this gives `B = 2`.
#[derive(Clone)]
pub struct CostModel {
    tag: CostTag,
    evaluator: Option<Arc<CostFn>>,
    growth_order: f64,
    lipschitz_l: Option<f64>,
    second_deriv_b: Option<f64>,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("tag", &self.tag)
            .field("growth_order", &self.growth_order)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("second_deriv_b", &self.second_deriv_b)
            .finish()
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pairwise<F: Fn(&[f64], &[f64]) -> f64>(pts: &[&[f64]], f: F) -> f64 {
    let mut s = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            s += f(pts[i], pts[j]);
        }
    }
    s
}

impl CostModel {
    pub fn sq_euclidean() -> Self {
        Self {
            tag: CostTag::SqEuclidean,
            evaluator: None,
            growth_order: 2.0,
            lipschitz_l: None,
            second_deriv_b: Some(2.0),
        }
    }

    /// L1 cost on `R^dim`. It is `sqrt(dim)`-Lipschitz per block in the
    /// Euclidean metric (exactly 1 when `dim = 1`).
    pub fn l1_sum(dim: usize) -> Self {
        Self {
            tag: CostTag::L1Sum,
            evaluator: None,
            growth_order: 1.0,
            lipschitz_l: Some((dim.max(1) as f64).sqrt()),
            second_deriv_b: None,
        }
    }

    pub fn euclidean_power(r: f64) -> Result<Self> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("cost exponent r = {r} must be >= 1")));
        }
        Ok(Self {
            tag: CostTag::EuclideanPower(r),
            evaluator: None,
            growth_order: r,
            lipschitz_l: if r == 1.0 { Some(1.0) } else { None },
            second_deriv_b: if r == 2.0 { Some(2.0) } else { None },
        })
    }

    /// Gangbo–Święch cost for `n_marginals` marginals (`B = N`).
    pub fn gangbo_swiech(n_marginals: usize) -> Self {
        Self {
            tag: CostTag::GangboSwiech,
            evaluator: None,
            growth_order: 2.0,
            lipschitz_l: None,
            second_deriv_b: Some(n_marginals as f64),
        }
    }

    pub fn custom(
        f: Arc<CostFn>,
        growth_order: f64,
        lipschitz_l: Option<f64>,
        second_deriv_b: Option<f64>,
    ) -> Result<Self> {
        if !(growth_order >= 1.0) {
            return Err(Error::InvalidArgument(format!("growth order {growth_order} must be >= 1")));
        }
        for v in [lipschitz_l, second_deriv_b].into_iter().flatten() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("cost constant {v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            tag: CostTag::Custom,
            evaluator: Some(f),
            growth_order,
            lipschitz_l,
            second_deriv_b,
        })
    }

    /// The zero cost (every coupling is optimal).
    pub fn zero() -> Self {
        Self::custom(Arc::new(|_: &[&[f64]]| 0.0), 1.0, Some(0.0), Some(0.0)).unwrap()
    }

    pub fn tag(&self) -> CostTag {
        self.tag
    }

    pub fn growth_order(&self) -> f64 {
        self.growth_order
    }

    pub fn lipschitz_l(&self) -> Option<f64> {
        self.lipschitz_l
    }

    pub fn second_deriv_b(&self) -> Option<f64> {
        self.second_deriv_b
    }

    pub fn eval(&self, pts: &[&[f64]]) -> f64 {
        match self.tag {
            CostTag::SqEuclidean | CostTag::GangboSwiech => pairwise(pts, sq),
            CostTag::L1Sum => pairwise(pts, |a, b| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
            CostTag::EuclideanPower(r) => pairwise(pts, |a, b| {
                let s = sq(a, b);
                if r == 2.0 {
                    s
                } else if r == 1.0 {
                    s.sqrt()
                } else {
                    s.powf(0.5 * r)
                }
            }),
            CostTag::Custom => (self.evaluator.as_ref().unwrap())(pts),
        }
    }

    /// Dense row-major cost tensor over the product of the supports.
    pub fn tensor(&self, marginals: &[DiscreteMeasure], limit: usize) -> Result<Vec<f64>> {
        let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), limit)?;
        let n = marginals.len();
        let mut idx = alloc::vec![0usize; n];
        let mut pts: Vec<&[f64]> = marginals.iter().map(|m| m.point(0)).collect();
        let mut out = Vec::with_capacity(shape.size());
        for _ in 0..shape.size() {
            let v = self.eval(&pts);
            if !v.is_finite() {
                return Err(Error::InvariantViolation(format!("cost is not finite at {idx:?}")));
            }
            out.push(v);
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < marginals[a].len() {
                    pts[a] = marginals[a].point(idx[a]);
                    break;
                }
                idx[a] = 0;
                pts[a] = marginals[a].point(0);
            }
        }
        Ok(out)
    }

    /// Cost of a coupling atom given as marginal indices.
    pub fn eval_indices(&self, marginals: &[DiscreteMeasure], idx: &[usize]) -> f64 {
        let pts: Vec<&[f64]> = marginals.iter().zip(idx).map(|(m, &i)| m.point(i)).collect();
        self.eval(&pts)
    }

    /// `int c d pi`.
    pub fn integrate(&self, pi: &Coupling) -> f64 {
        let mut idx = Vec::with_capacity(pi.n_marginals());
        kahan_sum((0..pi.len()).map(|k| {
            idx.clear();
            idx.extend((0..pi.n_marginals()).map(|a| pi.index(k, a)));
            pi.weight(k) * self.eval_indices(pi.marginals(), &idx)
        }))
    }
}
