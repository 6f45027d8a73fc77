//! Closed-form upper bounds on the regularization gap, the scale `S_eps`
//! balancing transport and divergence terms, rounding factors, and lower
//! bounds from the dual problem.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::cost::CostModel;
use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::exact::{reduced_cost, Potentials};
use crate::math::{bisect_increasing, grid_then_golden_max, kahan_sum};
use crate::measure::{product_weights, DiscreteMeasure, ProductShape, PRODUCT_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    LipEntropic,
    LipGeneral,
    LipModulus,
    SmoothEntropic,
    SmoothGeneral,
    LrhoExplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    /// The rate-determining part of `value`: the divergence term for the
    /// entropic and modulus bounds, `1 / S_eps` for the general ones, and the
    /// whole power law for the explicit bound.
    pub leading_term: f64,
    /// Named inputs and derived scales (`L`, `C`, `B`, `alpha_i`, `beta`,
    /// `N`, `p`, `rho`, `S_eps`, `rounding`).
    pub constants: BTreeMap<String, f64>,
    /// Whether the preconditions of the bound hold.
    pub valid: bool,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("at least one quantization exponent is required".to_string()));
    }
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidAlpha(a));
        }
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

fn constants(pairs: &[(&str, f64)], alphas: &[f64]) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (i, a) in alphas.iter().enumerate() {
        m.insert(format!("alpha_{}", i + 2), *a);
    }
    m
}

/// Which rounding factor: integer quantization sizes `floor(S^{1/alpha_i})`
/// for the marginal quantization argument, or `floor(S^{1/(2 alpha)})` for the
/// plan quantization argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundingKind {
    Lip { p: f64 },
    Smooth,
}

/// Rounding factor `rho(S) >= 1` of replacing `S^{1/alpha}` by its floor.
///
/// `Lip` uses all of `alphas`; `Smooth` uses `alphas[0]`. Lies in `[1, 2]`
/// resp. `[1, 4]` and tends to 1 as `S -> inf`.
pub fn rounding_factor(kind: RoundingKind, s: f64, alphas: &[f64]) -> Result<f64> {
    check_alphas(alphas)?;
    if !(s >= 1.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("rounding factor needs S >= 1, got {s}")));
    }
    Ok(match kind {
        RoundingKind::Lip { p } => {
            if !(p >= 1.0) {
                return Err(Error::InvalidP(p));
            }
            let m = alphas.len() as f64;
            let sum: f64 = alphas
                .iter()
                .map(|&a| {
                    let n = s.powf(1.0 / a).floor();
                    (s / n.powf(a)).powf(p)
                })
                .sum();
            (sum / m).powf(1.0 / p)
        }
        RoundingKind::Smooth => {
            let a = alphas[0];
            let x = s.powf(1.0 / (2.0 * a));
            (x / x.floor()).powf(2.0 * a)
        }
    })
}

/// Upper bound for entropic regularization under Lipschitz-type costs:
/// `(sum 1/alpha_i) eps log(1/eps) + 4 (N-1)^{1/p} L C eps`, where `alphas`
/// holds `alpha_2..alpha_N`.
///
/// With `tightened`, the constant 4 becomes `2 rho(1/eps)`.
pub fn bound_lip_entropic(alphas: &[f64], l: f64, c: f64, p: f64, eps: f64, tightened: bool) -> Result<BoundReport> {
    check_alphas(alphas)?;
    check_eps(eps)?;
    check_nonneg("L", l)?;
    check_nonneg("C", c)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidP(p));
    }
    let m = alphas.len() as f64;
    let inv_sum: f64 = alphas.iter().map(|a| 1.0 / a).sum();
    let factor = if tightened {
        2.0 * rounding_factor(RoundingKind::Lip { p }, 1.0 / eps, alphas)?
    } else {
        4.0
    };
    let leading = inv_sum * eps * (1.0 / eps).ln();
    let value = leading + factor * m.powf(1.0 / p) * l * c * eps;
    Ok(BoundReport {
        kind: BoundKind::LipEntropic,
        value,
        leading_term: leading,
        constants: constants(
            &[("L", l), ("C", c), ("p", p), ("N", m + 1.0), ("beta", inv_sum), ("rounding", factor / 2.0)],
            alphas,
        ),
        valid: true,
    })
}

/// Upper bound for entropic regularization under costs with bounded second
/// derivative: `((N-1) / (2 alpha)) eps log(1/eps) + 8 B C eps`, where
/// `alpha` is the quantization exponent of an optimal plan.
pub fn bound_smooth_entropic(alpha: f64, b: f64, c: f64, n: usize, eps: f64) -> Result<BoundReport> {
    check_alphas(&[alpha])?;
    check_eps(eps)?;
    check_nonneg("B", b)?;
    check_nonneg("C", c)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least two marginals, got {n}")));
    }
    let leading = (n as f64 - 1.0) / (2.0 * alpha) * eps * (1.0 / eps).ln();
    Ok(BoundReport {
        kind: BoundKind::SmoothEntropic,
        value: leading + 8.0 * b * c * eps,
        leading_term: leading,
        constants: constants(&[("B", b), ("C", c), ("N", n as f64), ("alpha", alpha)], &[]),
        valid: true,
    })
}

/// Solves `g(S) = target` for a function increasing on `[1, inf)`.
///
/// The bracket grows geometrically from `[1, 2]`; a strict decrease between
/// bracket endpoints raises `NotIncreasing`. The root satisfies
/// `|g(S) - target| <= 1e-10 target`.
pub fn invert_increasing<G: Fn(f64) -> f64>(g: G, target: f64) -> Result<f64> {
    if !(target.is_finite()) {
        return Err(Error::InvalidArgument(format!("target must be finite, got {target}")));
    }
    let mut lo = 1.0;
    let mut g_lo = g(lo);
    if !(g_lo <= target) {
        return Err(Error::InvalidArgument(format!(
            "target {target} lies below the value {g_lo} at the start of the increasing range"
        )));
    }
    let mut hi = 2.0;
    loop {
        let g_hi = g(hi);
        if !(g_hi > g_lo) {
            return Err(Error::NotIncreasing);
        }
        if g_hi >= target {
            break;
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::RootBracketFailure);
        }
    }
    // monotonicity inside the final bracket
    let mut prev = g(lo);
    for k in 1..=32 {
        let v = g(lo + (hi - lo) * k as f64 / 32.0);
        if v < prev {
            return Err(Error::NotIncreasing);
        }
        prev = v;
    }
    let s = bisect_increasing(&g, target, lo, hi);
    if !((g(s) - target).abs() <= 1e-10 * target.abs().max(1.0)) {
        return Err(Error::RootBracketFailure);
    }
    Ok(s)
}

/// `S_eps = f~^{-1}(1/eps)` with `f~(x) = x phi(x^beta)`.
///
/// Inverted on `[1, inf)`, where `f~(1) = phi(1) = 0` for every generator.
pub fn solve_s_eps(fd: &FDivergence, beta: f64, eps: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    invert_increasing(|x| x * fd.phi(x.powf(beta)), 1.0 / eps)
}

fn general_report(
    kind: BoundKind,
    fd: &FDivergence,
    beta: f64,
    numerator: f64,
    eps: f64,
    flags_ok: bool,
    mut consts: BTreeMap<String, f64>,
) -> Result<BoundReport> {
    let s = solve_s_eps(fd, beta, eps)?;
    consts.insert("S_eps".to_string(), s);
    consts.insert("beta".to_string(), beta);
    Ok(BoundReport {
        kind,
        value: numerator / s,
        leading_term: 1.0 / s,
        constants: consts,
        valid: flags_ok && s >= 1.0 && eps <= 1.0,
    })
}

/// Upper bound `(4 (N-1)^{1/p} L C + 1) / S_eps` for a general divergence
/// under Lipschitz-type costs, with `beta = sum 1/alpha_i`.
///
/// `valid` requires `phi` nondecreasing and either two marginals with
/// concave `phi` or empirical (uniformly weighted) quantization, as signalled
/// by `empirical`.
#[allow(clippy::too_many_arguments)]
pub fn bound_lip_general(
    fd: &FDivergence,
    beta: f64,
    l: f64,
    c: f64,
    p: f64,
    n: usize,
    eps: f64,
    empirical: bool,
) -> Result<BoundReport> {
    check_nonneg("L", l)?;
    check_nonneg("C", c)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidP(p));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least two marginals, got {n}")));
    }
    let flags = fd.flags();
    let flags_ok = flags.phi_nondecreasing && ((n == 2 && flags.phi_concave) || empirical);
    let k = 4.0 * (n as f64 - 1.0).powf(1.0 / p) * l * c;
    let consts = constants(&[("L", l), ("C", c), ("p", p), ("N", n as f64)], &[]);
    general_report(BoundKind::LipGeneral, fd, beta, k + 1.0, eps, flags_ok, consts)
}

/// Upper bound `(8 B C + 1) / S_eps` for two marginals and a general
/// divergence under costs with bounded second derivative, `beta = 1/(2 alpha)`.
pub fn bound_smooth_general(fd: &FDivergence, alpha: f64, b: f64, c: f64, eps: f64) -> Result<BoundReport> {
    check_alphas(&[alpha])?;
    check_nonneg("B", b)?;
    check_nonneg("C", c)?;
    let flags = fd.flags();
    let flags_ok = flags.phi_nondecreasing && flags.phi_concave;
    let consts = constants(&[("B", b), ("C", c), ("N", 2.0), ("alpha", alpha)], &[]);
    general_report(BoundKind::SmoothGeneral, fd, 1.0 / (2.0 * alpha), 8.0 * b * c + 1.0, eps, flags_ok, consts)
}

/// Explicit power-law bound for `f(x) = (x^rho - 1)/rho`, obtained from the
/// minorant `g~(x) = x^{(rho-1) beta + 1} / rho` of the scale function:
/// `numerator (eps / rho)^{1/((rho-1) beta + 1)}`.
///
/// `numerator` is `4 (N-1)^{1/p} L C + 1` or `8 B C + 1`. Never smaller than
/// the corresponding general bound.
pub fn bound_lrho_explicit(rho: f64, beta: f64, numerator: f64, eps: f64) -> Result<BoundReport> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(Error::InvalidRho(rho));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    check_eps(eps)?;
    check_nonneg("numerator", numerator)?;
    let theta = 1.0 / ((rho - 1.0) * beta + 1.0);
    let value = numerator * (eps / rho).powf(theta);
    Ok(BoundReport {
        kind: BoundKind::LrhoExplicit,
        value,
        leading_term: value,
        constants: constants(
            &[("rho", rho), ("beta", beta), ("K", numerator * rho.powf(-theta)), ("theta", theta)],
            &[],
        ),
        valid: true,
    })
}

/// A modulus of continuity `omega` for the integrated cost.
pub enum Modulus<'a> {
    /// `omega(t) = scale t^r` with `0 < r <= 1`.
    Power { scale: f64, r: f64 },
    /// Any increasing concave function on `[0, inf)`.
    Custom(&'a dyn Fn(f64) -> f64),
}

impl Modulus<'_> {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Modulus::Power { scale, r } => scale * t.powf(*r),
            Modulus::Custom(w) => w(t),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Modulus::Power { scale, r } => {
                if !(*r > 0.0 && *r <= 1.0 && *scale >= 0.0) {
                    return Err(Error::NotConcave);
                }
            }
            Modulus::Custom(w) => {
                let ts: Vec<f64> = (0..=400).map(|k| 10f64.powf(-10.0 + 12.0 * k as f64 / 400.0)).collect();
                let vals: Vec<f64> = ts.iter().map(|&t| w(t)).collect();
                if !(vals[0] >= 0.0) {
                    return Err(Error::NotConcave);
                }
                let mut prev_slope = f64::INFINITY;
                for k in 1..ts.len() {
                    let slope = (vals[k] - vals[k - 1]) / (ts[k] - ts[k - 1]);
                    if !(slope > 0.0) || slope > prev_slope * (1.0 + 1e-9) + 1e-300 {
                        return Err(Error::NotConcave);
                    }
                    prev_slope = slope;
                }
            }
        }
        Ok(())
    }
}

/// Entropic upper bound when the integrated cost only has a concave modulus
/// of continuity `omega` in `W_1`, with `alphas` holding `alpha_2..alpha_N`.
///
/// The value is `min_n 2 omega(C sum_i n_i^{-alpha_i}) + eps sum_i log n_i`
/// over `n_i = floor(s^{1/alpha_i})` for `s` on a fine geometric grid. For
/// `omega(t) = k t^r` the closed form
/// `(sum 1/(r alpha_i)) eps log(1/eps) + 2 k (2 (N-1) C)^r eps` is returned
/// as constant `closed_form`; it is itself a valid bound.
pub fn bound_lip_modulus(omega: Modulus<'_>, alphas: &[f64], c: f64, eps: f64) -> Result<BoundReport> {
    check_alphas(alphas)?;
    check_eps(eps)?;
    check_nonneg("C", c)?;
    omega.check()?;
    let objective = |s: f64| -> (f64, f64) {
        let mut quant = 0.0;
        let mut div = 0.0;
        for &a in alphas {
            let n = s.powf(1.0 / a).floor().max(1.0);
            quant += n.powf(-a);
            div += n.ln();
        }
        (2.0 * omega.eval(c * quant) + eps * div, eps * div)
    };
    let mut best = objective(1.0);
    let mut best_s = 1.0;
    // s up to 1e15 covers n_i up to at least 1e15
    for k in 1..=6000 {
        let s = 10f64.powf(15.0 * k as f64 / 6000.0);
        let v = objective(s);
        if v.0 < best.0 {
            best = v;
            best_s = s;
        }
    }
    let m = alphas.len() as f64;
    let mut consts = constants(&[("C", c), ("N", m + 1.0), ("s_opt", best_s)], alphas);
    if let Modulus::Power { scale, r } = omega {
        let inv_sum: f64 = alphas.iter().map(|a| 1.0 / (r * a)).sum();
        let closed = inv_sum * eps * (1.0 / eps).ln() + 2.0 * scale * (2.0 * m * c).powf(r) * eps;
        consts.insert("r".to_string(), r);
        consts.insert("leading_coefficient".to_string(), inv_sum);
        consts.insert("closed_form".to_string(), closed);
    }
    Ok(BoundReport {
        kind: BoundKind::LipModulus,
        value: best.0,
        leading_term: best.1,
        constants: consts,
        valid: true,
    })
}

/// Geometric grid of shifts `a` for [`dual_lower_bound`], covering
/// `[eps 1e-6, a_max]` together with `0` and `extra`.
pub fn default_a_grid(eps: f64, a_max: f64, extra: &[f64]) -> Vec<f64> {
    let lo = eps * 1e-6;
    let hi = a_max.max(lo * 10.0);
    let count = 400;
    let mut grid: Vec<f64> = (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect();
    grid.push(0.0);
    grid.extend_from_slice(extra);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

/// Dual lower bound `sup_a (a - sum_x P(x) f*_eps(a - c^(x)))` for two
/// marginals, with `c^ = c - h_1 - h_2` the reduced cost of `potentials`.
///
/// Maximized over `a_grid`, then refined by golden section between the
/// neighbours of the best grid point. Returns `(best_a, lb)`. When the
/// potentials are optimal for `OT`, `lb` is a lower bound on
/// `OT_{f,eps} - OT`; in general it bounds `OT_{f,eps} - sum_i <h_i, mu_i>`.
pub fn dual_lower_bound(
    cost: &CostModel,
    marginals: &[DiscreteMeasure],
    fd: &FDivergence,
    eps: f64,
    potentials: &Potentials,
    a_grid: &[f64],
) -> Result<(f64, f64)> {
    if marginals.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: marginals.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if a_grid.is_empty() || a_grid.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("a_grid must be nonempty and finite".to_string()));
    }
    let c_hat = reduced_cost(cost, potentials, marginals)?;
    let min_rc = c_hat.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_rc >= -1e-9) {
        return Err(Error::InvalidPotentials {
            min_reduced_cost: min_rc,
        });
    }
    let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), PRODUCT_LIMIT)?;
    let w = product_weights(marginals, &shape);
    // atoms with equal reduced cost share one conjugate evaluation (grids have few distinct values)
    let mut pairs: Vec<(f64, f64)> = c_hat.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for (ch, pw) in pairs {
        match levels.last_mut() {
            Some(last) if last.0 == ch => last.1 += pw,
            _ => levels.push((ch, pw)),
        }
    }
    let objective = |a: f64| a - kahan_sum(levels.iter().map(|&(ch, pw)| pw * fd.f_star_eps(a - ch, eps)));
    let mut grid = a_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let (a, lb) = grid_then_golden_max(objective, &grid, 1e-12);
    Ok((a, lb))
}

/// Instances with closed-form dual lower envelopes: identical uniform
/// marginals on `[0, 1]^d` with the `l1` or squared Euclidean cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SharpnessCase {
    EntropicL1 { d: u32, eps: f64 },
    PowerL1 { d: u32, rho: f64, eps: f64 },
    PowerQuadratic { d: u32, rho: f64, eps: f64 },
}

/// Lower bound on `OT_{f,eps} - OT` for a [`SharpnessCase`].
///
/// `EntropicL1` is `d eps log(1/eps) - (2^d - 1) eps`. The power cases
/// maximize `a - 2^d a^k (a^q / (q eps^{q-1}) + eps/rho) - eps` over `a > 0`,
/// with `k = d` for `l1` and `k = d/2` for the quadratic cost.
pub fn sharpness_closed_form(case: SharpnessCase) -> Result<f64> {
    sharpness_envelope(case, true)
}

/// [`sharpness_closed_form`] with the trailing `-eps` of the power cases
/// optionally dropped, which isolates the leading power law for exponent fits.
pub fn sharpness_envelope(case: SharpnessCase, include_constant: bool) -> Result<f64> {
    let (d, eps) = match case {
        SharpnessCase::EntropicL1 { d, eps } | SharpnessCase::PowerL1 { d, eps, .. } | SharpnessCase::PowerQuadratic { d, eps, .. } => {
            (d, eps)
        }
    };
    check_eps(eps)?;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".to_string()));
    }
    let two_d = 2f64.powi(d as i32);
    let shift = if include_constant { eps } else { 0.0 };
    match case {
        SharpnessCase::EntropicL1 { .. } => Ok(d as f64 * eps * (1.0 / eps).ln() - (two_d - 1.0) * eps),
        SharpnessCase::PowerL1 { rho, .. } | SharpnessCase::PowerQuadratic { rho, .. } => {
            if !(rho > 1.0 && rho.is_finite()) {
                return Err(Error::InvalidRho(rho));
            }
            let q = rho / (rho - 1.0);
            let k = match case {
                SharpnessCase::PowerL1 { .. } => d as f64,
                _ => d as f64 / 2.0,
            };
            let env = |a: f64| a - two_d * a.powf(k) * (a.powf(q) / (q * eps.powf(q - 1.0)) + eps / rho) - shift;
            // beyond a_hi the a^{k+q} term alone exceeds a
            let a_hi = (q * eps.powf(q - 1.0) / two_d).powf(1.0 / (k + q - 1.0));
            let grid: Vec<f64> = (0..600).map(|j| a_hi * 1e-12f64.powf(1.0 - j as f64 / 599.0)).collect();
            let (_, v) = grid_then_golden_max(env, &grid, 1e-13);
            Ok(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact_ot;
    use crate::math::linear_fit;
    use crate::regularized::{gap, SolverOptions};
    use approx::assert_relative_eq;

    #[test]
    fn lip_entropic_examples() {
        let eps = (-1f64).exp();
        let r = bound_lip_entropic(&[1.0, 0.5], 1.0, 1.0, 1.0, eps, false).unwrap();
        assert_relative_eq!(r.value, 3.0 * eps + 8.0 * eps, max_relative = 1e-14);
        let r = bound_lip_entropic(&[0.5], 2.0, 0.5, 2.0, 1.0, false).unwrap();
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-14);
        assert_eq!(r.leading_term, 0.0);
        // N = 2, alpha = 1/d
        let eps = 1e-3;
        let r = bound_lip_entropic(&[1.0 / 3.0], 1.5, 0.7, 1.0, eps, false).unwrap();
        assert_relative_eq!(r.value, 3.0 * eps * (1.0 / eps).ln() + 4.0 * 1.5 * 0.7 * eps, max_relative = 1e-12);
        assert!(matches!(bound_lip_entropic(&[1.5], 1.0, 1.0, 1.0, 0.1, false), Err(Error::InvalidAlpha(_))));
        assert!(bound_lip_entropic(&[1.0], 1.0, 1.0, 1.0, 1.5, false).is_err());
    }

    #[test]
    fn tightened_constant_is_smaller() {
        for &eps in &[0.3, 0.1, 0.017, 1e-4] {
            let a = bound_lip_entropic(&[0.5, 1.0], 1.0, 1.0, 2.0, eps, false).unwrap();
            let b = bound_lip_entropic(&[0.5, 1.0], 1.0, 1.0, 2.0, eps, true).unwrap();
            assert!(b.value <= a.value + 1e-15);
            assert!(b.value >= b.leading_term);
        }
    }

    #[test]
    fn smooth_entropic_examples() {
        let eps = (-1f64).exp();
        let r = bound_smooth_entropic(0.5, 2.0, 0.25, 2, eps).unwrap();
        assert_relative_eq!(r.value, eps + 8.0 * 2.0 * 0.25 * eps, max_relative = 1e-14);
        let r = bound_smooth_entropic(0.5, 2.0, 0.25, 2, 1.0).unwrap();
        assert_relative_eq!(r.value, 4.0);
        let d = 3.0;
        let r = bound_smooth_entropic(1.0 / d, 1.0, 1.0, 2, 1e-2).unwrap();
        assert_relative_eq!(r.leading_term, d / 2.0 * 1e-2 * 100f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn rounding_factor_ranges() {
        let alphas = [1.0, 0.5, 1.0 / 3.0];
        let mut s = 1.0;
        while s < 1e6 {
            let lip = rounding_factor(RoundingKind::Lip { p: 2.0 }, s, &alphas).unwrap();
            assert!((1.0..=2.0 + 1e-12).contains(&lip), "lip {lip} at {s}");
            let sm = rounding_factor(RoundingKind::Smooth, s, &[0.5]).unwrap();
            assert!((1.0..=4.0 + 1e-12).contains(&sm), "smooth {sm} at {s}");
            s *= 1.37;
        }
        let far = rounding_factor(RoundingKind::Lip { p: 1.0 }, 1e9 + 0.5, &[1.0, 0.5]).unwrap();
        assert!(far - 1.0 < 1e-8);
        let far = rounding_factor(RoundingKind::Smooth, 1e9 + 0.5, &[0.5]).unwrap();
        assert!(far - 1.0 < 1e-8);
        assert_eq!(rounding_factor(RoundingKind::Lip { p: 1.0 }, 1.0, &[0.5]).unwrap(), 1.0);
        // S = 1.9, alpha = 1, p = 1: 1.9 / floor(1.9)
        assert_relative_eq!(rounding_factor(RoundingKind::Lip { p: 1.0 }, 1.9, &[1.0]).unwrap(), 1.9);
        // S = 3, alpha = 1/2 each, p = 2: floor(9) = 9, so each ratio is 1
        assert_relative_eq!(rounding_factor(RoundingKind::Lip { p: 2.0 }, 3.0, &[0.5, 0.5]).unwrap(), 1.0);
        // S = 2.5, alpha = (1, 1/2), p = 2: ratios 2.5/2 and 2.5/sqrt(6)
        let direct = ((1.25f64.powi(2) + (2.5 / 6f64.sqrt()).powi(2)) / 2.0).sqrt();
        assert_relative_eq!(
            rounding_factor(RoundingKind::Lip { p: 2.0 }, 2.5, &[1.0, 0.5]).unwrap(),
            direct,
            max_relative = 1e-14
        );
    }

    #[test]
    fn s_eps_round_trip_and_limits() {
        let fds = [FDivergence::entropy(), FDivergence::power(2.0).unwrap(), FDivergence::power(3.5).unwrap()];
        for fd in &fds {
            for &beta in &[0.5, 1.0, 2.0, 3.0] {
                let mut prev_s = 0.0;
                let mut prev_es = f64::INFINITY;
                let first_es = 1.0 * solve_s_eps(fd, beta, 1.0).unwrap();
                for k in 0..12 {
                    let eps = 10f64.powf(-0.5 * k as f64);
                    let s = solve_s_eps(fd, beta, eps).unwrap();
                    let ft = s * fd.phi(s.powf(beta));
                    assert!((ft - 1.0 / eps).abs() <= 1e-9 / eps);
                    assert!(s > prev_s);
                    assert!(eps * s < prev_es);
                    prev_s = s;
                    prev_es = eps * s;
                }
                assert!(prev_es < 0.25 * first_es);
            }
        }
    }

    #[test]
    fn s_eps_entropy_example() {
        // S log S = e is solved by S = e
        let s = solve_s_eps(&FDivergence::entropy(), 1.0, (-1f64).exp()).unwrap();
        assert_relative_eq!(s, core::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn power_closed_form_inverse() {
        for &rho in &[1.5, 2.0, 3.0] {
            for &beta in &[0.5, 1.0, 2.0] {
                let k = (rho - 1.0) * beta + 1.0;
                for &eps in &[0.5, 1e-2, 1e-5] {
                    let s = invert_increasing(|x: f64| x.powf(k) / rho, 1.0 / eps).unwrap();
                    assert_relative_eq!(s, (rho / eps).powf(1.0 / k), max_relative = 1e-9);
                    // f~ <= g~, so S_eps >= the closed form
                    let fd = FDivergence::power(rho).unwrap();
                    assert!(solve_s_eps(&fd, beta, eps).unwrap() >= s * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn not_increasing_is_reported() {
        assert!(matches!(invert_increasing(|x: f64| -x, -0.5), Err(Error::NotIncreasing)));
        assert!(matches!(invert_increasing(|x: f64| (x - 1.0) * (5.0 - x), 10.0), Err(Error::NotIncreasing)));
    }

    #[test]
    fn lip_general_against_explicit() {
        let (l, c, p) = (1.0, 0.5, 1.0);
        let numerator = 4.0 * l * c + 1.0;
        for &rho in &[2.0, 3.0] {
            let fd = FDivergence::power(rho).unwrap();
            for &beta in &[1.0, 2.0] {
                for &eps in &[0.1, 1e-3, 1e-6] {
                    let g = bound_lip_general(&fd, beta, l, c, p, 2, eps, true).unwrap();
                    let e = bound_lrho_explicit(rho, beta, numerator, eps).unwrap();
                    assert!(g.valid);
                    assert!(g.value <= e.value * (1.0 + 1e-12));
                    // same power law up to lower-order terms
                    assert!(g.value >= 0.5 * e.value, "{} vs {}", g.value, e.value);
                    assert_relative_eq!(
                        e.value,
                        e.constants["K"] * eps.powf(1.0 / ((rho - 1.0) * beta + 1.0)),
                        max_relative = 1e-12
                    );
                }
                let far = bound_lip_general(&fd, beta, l, c, p, 2, 1e-12, true).unwrap();
                let far_e = bound_lrho_explicit(rho, beta, numerator, 1e-12).unwrap();
                assert_relative_eq!(far.value, far_e.value, max_relative = 1e-2);
            }
            // larger beta, larger bound
            let b1 = bound_lip_general(&fd, 1.0, l, c, p, 2, 1e-3, true).unwrap();
            let b2 = bound_lip_general(&fd, 2.5, l, c, p, 2, 1e-3, true).unwrap();
            assert!(b2.value > b1.value);
        }
    }

    #[test]
    fn lip_general_validity_flags() {
        let fd = FDivergence::power(3.0).unwrap();
        assert!(!bound_lip_general(&fd, 1.0, 1.0, 1.0, 1.0, 2, 1e-2, false).unwrap().valid);
        assert!(bound_lip_general(&fd, 1.0, 1.0, 1.0, 1.0, 2, 1e-2, true).unwrap().valid);
        let fd = FDivergence::entropy();
        assert!(bound_lip_general(&fd, 1.0, 1.0, 1.0, 1.0, 2, 1e-2, false).unwrap().valid);
        assert!(!bound_lip_general(&fd, 2.0, 1.0, 1.0, 1.0, 3, 1e-2, false).unwrap().valid);
    }

    #[test]
    fn lip_general_sharper_than_entropic_for_divergence_term() {
        // with L C = 0 both bounds reduce to the divergence term
        let fd = FDivergence::entropy();
        for &beta in &[1.0, 2.0, 3.0] {
            let g = bound_lip_general(&fd, beta, 0.0, 0.0, 1.0, 2, 1e-6, true).unwrap();
            let alphas = [1.0 / beta];
            let e = bound_lip_entropic(&alphas, 0.0, 0.0, 1.0, 1e-6, false).unwrap();
            assert!(g.value < e.value);
        }
    }

    #[test]
    fn smooth_general_mirror() {
        let fd = FDivergence::power(2.0).unwrap();
        let (b, c) = (2.0, 0.1);
        for &alpha in &[1.0, 0.5] {
            let beta = 1.0 / (2.0 * alpha);
            for &eps in &[0.5, 1e-3, 1e-6] {
                let g = bound_smooth_general(&fd, alpha, b, c, eps).unwrap();
                let e = bound_lrho_explicit(2.0, beta, 8.0 * b * c + 1.0, eps).unwrap();
                assert!(g.valid);
                assert!(g.value <= e.value * (1.0 + 1e-12));
                assert_relative_eq!(g.value, (8.0 * b * c + 1.0) / solve_s_eps(&fd, beta, eps).unwrap());
            }
        }
        let g = bound_smooth_general(&fd, 1.0, b, c, 1.0).unwrap();
        assert!(g.value.is_finite() && g.value > 0.0);
    }

    #[test]
    fn bounds_vanish_as_eps_decreases() {
        let fd = FDivergence::power(2.0).unwrap();
        let mut prev = [f64::INFINITY; 4];
        let mut first = None;
        for k in 1..14 {
            let eps = 10f64.powf(-0.5 * k as f64);
            let vals = [
                bound_lip_entropic(&[0.5], 1.0, 1.0, 1.0, eps, false).unwrap().value,
                bound_smooth_entropic(0.5, 2.0, 1.0, 2, eps).unwrap().value,
                bound_lip_general(&fd, 2.0, 1.0, 1.0, 1.0, 2, eps, false).unwrap().value,
                bound_smooth_general(&fd, 0.5, 2.0, 1.0, eps).unwrap().value,
            ];
            for (v, p) in vals.iter().zip(prev.iter_mut()) {
                assert!(*v >= 0.0 && *v < *p);
                *p = *v;
            }
            first.get_or_insert(vals);
        }
        let first = first.unwrap();
        assert!(prev.iter().zip(&first).all(|(v, f)| *v < 0.05 * f));
    }

    #[test]
    fn modulus_lipschitz_reduces_to_entropic() {
        let (l, c) = (1.7, 0.3);
        for &eps in &[0.2, 1e-3] {
            let m = bound_lip_modulus(Modulus::Power { scale: l, r: 1.0 }, &[0.5, 1.0], c, eps).unwrap();
            let e = bound_lip_entropic(&[0.5, 1.0], l, c, 1.0, eps, false).unwrap();
            assert_relative_eq!(m.constants["closed_form"], e.value, max_relative = 1e-12);
            assert!(m.value <= m.constants["closed_form"] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn modulus_square_root() {
        let eps = 1e-4;
        let m = bound_lip_modulus(Modulus::Power { scale: 1.0, r: 0.5 }, &[1.0], 1.0, eps).unwrap();
        assert_relative_eq!(m.constants["leading_coefficient"], 2.0);
        let closed = m.constants["closed_form"];
        assert!(m.value <= closed);
        assert!((m.value - closed).abs() <= 0.1 * closed, "{} vs {closed}", m.value);
        // a custom closure with the same modulus gives the same grid minimum
        let w = |t: f64| t.sqrt();
        let m2 = bound_lip_modulus(Modulus::Custom(&w), &[1.0], 1.0, eps).unwrap();
        assert_relative_eq!(m2.value, m.value, max_relative = 1e-12);
        assert!(m.value >= m.leading_term);
    }

    #[test]
    fn modulus_rejects_convex() {
        let w = |t: f64| t * t;
        assert!(matches!(bound_lip_modulus(Modulus::Custom(&w), &[1.0], 1.0, 0.1), Err(Error::NotConcave)));
        assert!(matches!(
            bound_lip_modulus(Modulus::Power { scale: 1.0, r: 1.5 }, &[1.0], 1.0, 0.1),
            Err(Error::NotConcave)
        ));
    }

    fn midpoint_grid(n: usize) -> DiscreteMeasure {
        DiscreteMeasure::uniform_grid(1, n, 0.0, 1.0).unwrap()
    }

    #[test]
    fn dual_lower_bound_entropic_l1() {
        let mu = midpoint_grid(200);
        let marginals = [mu.clone(), mu];
        let cost = CostModel::l1_sum(1);
        let h = Potentials::zeros(&marginals);
        let fd = FDivergence::entropy();
        let eps = 0.05;
        let a_star = eps * (1.0 / eps).ln();
        let grid = default_a_grid(eps, 1.0, &[a_star]);
        let (_, lb) = dual_lower_bound(&cost, &marginals, &fd, eps, &h, &grid).unwrap();
        let closed = sharpness_closed_form(SharpnessCase::EntropicL1 { d: 1, eps }).unwrap();
        assert!(lb >= closed - 0.02 * eps, "{lb} vs {closed}");
        let g = gap(&cost, &marginals, &fd, eps, &SolverOptions::with_tol(1e-10)).unwrap();
        assert!(lb <= g + 1e-8, "{lb} vs gap {g}");
    }

    #[test]
    fn dual_lower_bound_far_left_is_nonnegative_for_entropy() {
        let mu = midpoint_grid(10);
        let marginals = [mu.clone(), mu];
        let h = Potentials::zeros(&marginals);
        let (_, lb) =
            dual_lower_bound(&CostModel::l1_sum(1), &marginals, &FDivergence::entropy(), 0.1, &h, &[-1e3]).unwrap();
        assert!(lb < -999.0);
        let (_, lb) = dual_lower_bound(&CostModel::l1_sum(1), &marginals, &FDivergence::entropy(), 0.1, &h, &[0.0])
            .unwrap();
        assert!(lb >= 0.0);
    }

    #[test]
    fn dual_lower_bound_quadratic_power() {
        // nonzero optimal potentials from the exact solver
        let mu = midpoint_grid(64);
        let nu = DiscreteMeasure::uniform_grid(1, 64, 0.2, 0.9).unwrap();
        let marginals = [mu, nu];
        let cost = CostModel::sq_euclidean();
        let exact = solve_exact_ot(&cost, &marginals).unwrap();
        let fd = FDivergence::power(2.0).unwrap();
        for &eps in &[0.1, 0.03, 0.01] {
            let grid = default_a_grid(eps, 1.0, &[]);
            let (_, lb) = dual_lower_bound(&cost, &marginals, &fd, eps, &exact.potentials, &grid).unwrap();
            let lower = lb + exact.potentials.dual_value(&marginals) - exact.value;
            let g = gap(&cost, &marginals, &fd, eps, &SolverOptions::with_tol(1e-10)).unwrap();
            assert!(lower > 0.0);
            assert!(lower <= g + 1e-7, "{lower} vs {g}");
        }
    }

    #[test]
    fn dual_lower_bound_rejects_infeasible_potentials() {
        let mu = midpoint_grid(5);
        let marginals = [mu.clone(), mu];
        let mut h = Potentials::zeros(&marginals);
        h.h[0][0] = 1.0;
        let r = dual_lower_bound(&CostModel::l1_sum(1), &marginals, &FDivergence::entropy(), 0.1, &h, &[0.0]);
        assert!(matches!(r, Err(Error::InvalidPotentials { .. })));
    }

    #[test]
    fn sharpness_entropic_values() {
        let v = sharpness_closed_form(SharpnessCase::EntropicL1 { d: 1, eps: 0.1 }).unwrap();
        assert_relative_eq!(v, 0.1 * 10f64.ln() - 0.1, max_relative = 1e-14);
        assert!((v - 0.13026).abs() < 1e-5);
        for d in 1..4 {
            let v = sharpness_closed_form(SharpnessCase::EntropicL1 { d, eps: 1.0 }).unwrap();
            assert_eq!(v, -(2f64.powi(d as i32) - 1.0));
        }
    }

    fn envelope_exponent(make: impl Fn(f64) -> SharpnessCase, lo: f64, hi: f64, include_constant: bool) -> f64 {
        let eps: Vec<f64> = (0..25).map(|k| lo * (hi / lo).powf(k as f64 / 24.0)).collect();
        let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = eps
            .iter()
            .map(|&e| sharpness_envelope(make(e), include_constant).unwrap().ln())
            .collect();
        linear_fit(&x, &y).0
    }

    #[test]
    fn sharpness_power_exponents() {
        let l1 = envelope_exponent(|eps| SharpnessCase::PowerL1 { d: 1, rho: 2.0, eps }, 1e-6, 1e-2, false);
        assert!((0.45..=0.55).contains(&l1), "l1 exponent {l1}");
        // leading exponents of the lower and upper envelopes agree
        assert!((l1 - 0.5).abs() < 0.05);
        let quad = envelope_exponent(|eps| SharpnessCase::PowerQuadratic { d: 1, rho: 2.0, eps }, 1e-6, 1e-2, false);
        assert!((quad - 2.0 / 3.0).abs() < 0.05, "quadratic exponent {quad}");
        let l1_2 = envelope_exponent(|eps| SharpnessCase::PowerL1 { d: 2, rho: 2.0, eps }, 1e-6, 1e-2, false);
        assert!((l1_2 - 1.0 / 3.0).abs() < 0.05, "d = 2 exponent {l1_2}");
    }

    #[test]
    fn sharpness_power_is_a_supremum() {
        let eps = 1e-3;
        let (d, rho) = (1u32, 2.0);
        let q = 2.0;
        let v = sharpness_closed_form(SharpnessCase::PowerL1 { d, rho, eps }).unwrap();
        for k in 1..200 {
            let a = k as f64 * 1e-3;
            let env = a - 2.0 * a.powf(1.0 + q) / (q * eps.powf(q - 1.0)) - 2.0 * eps * a / rho - eps;
            assert!(env <= v + 1e-15);
        }
    }
}
