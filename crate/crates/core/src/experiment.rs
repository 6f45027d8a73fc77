//! Gap sweeps over a grid of regularization strengths, certified brackets
//! `lower <= OT_{f,eps} - OT <= upper`, and fits of the observed rate.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Supplies sqrt/exp/ln without std; unused when std is linked in.
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::bounds::{default_a_grid, dual_lower_bound};
use crate::cost::{CostModel, CostTag};
use crate::divergence::{divergence_to_product, FDivergence};
use crate::error::{Error, Result};
use crate::exact::{reduced_cost, solve_exact_ot, ExactSolution, Potentials};
use crate::math::{linear_fit, lstsq2};
use crate::measure::{Coupling, DiscreteMeasure};
use crate::quantize::{fit_quant_rate, QuantSource, QuantizerKind};
use crate::regularized::{solve_regularized, SolverOptions};
use crate::shadow::{double_shadow_coupling, independent_martingale_coupling, PlanQuantMethod, QuantKind};

/// A regularized transport problem: marginals, cost and divergence.
#[derive(Debug, Clone)]
pub struct Instance {
    pub marginals: Vec<DiscreteMeasure>,
    pub cost: CostModel,
    pub fd: FDivergence,
}

/// Solver output at one grid point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub eps: f64,
    pub reg_value: f64,
    pub dual_value: f64,
    pub iterations: usize,
    pub potentials: Potentials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    DoubleShadow,
    IndependentMartingale,
}

impl CandidateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateKind::DoubleShadow => "double_shadow",
            CandidateKind::IndependentMartingale => "independent_martingale",
        }
    }
}

/// One candidate coupling behind an upper certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub kind: CandidateKind,
    /// Quantization sizes: `n_2..n_N` for the double shadow, `[n]` for the
    /// martingale construction.
    pub sizes: Vec<usize>,
    /// `int c d pi_cand`.
    pub transport_cost: f64,
    /// `D_f(pi_cand, P)`.
    pub divergence: f64,
    /// `int c d pi_cand + eps D_f(pi_cand, P) - OT`.
    pub upper: f64,
    /// Double shadow: `W_p(mu_i^{n_i}, mu_i)` for `i >= 2`.
    pub quant_wp: Vec<f64>,
    /// Double shadow: bound on `W_p(pi_cand, pi*)`.
    pub w_bound: Option<f64>,
    /// Double shadow: cap on the divergence of the intermediate coupling.
    pub divergence_cap: Option<f64>,
    /// Martingale: `2 B W_2(theta)^2`, the bound on the transport excess.
    pub taylor_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapBracket {
    pub eps: f64,
    /// `reg_value - ot_value`.
    pub gap: f64,
    pub lower: f64,
    pub upper: f64,
    pub candidate_kind: CandidateKind,
    pub ot_value: f64,
    pub reg_value: f64,
    pub iters: usize,
    /// Every candidate that was built, the selected one included.
    pub candidates: Vec<Candidate>,
}

/// How to size and build the certificate candidates.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    /// Quantization exponents of marginals `2..N`; estimated when absent.
    pub alphas: Option<Vec<f64>>,
    /// Quantization exponent of an optimal plan; estimated when absent.
    pub plan_alpha: Option<f64>,
    pub quant_kind: QuantKind,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            alphas: None,
            plan_alpha: None,
            quant_kind: QuantKind::Optimal,
            restarts: 5,
            seed: 0,
        }
    }
}

fn at_eps(eps: f64) -> impl Fn(Error) -> Error {
    move |e| Error::AtEps {
        eps,
        source: Box::new(e),
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidArgument("empty eps grid".into()));
    }
    for w in eps_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidArgument("eps grid must be strictly decreasing".into()));
        }
    }
    if !(eps_grid[eps_grid.len() - 1] > 0.0 && eps_grid[0].is_finite()) {
        return Err(Error::InvalidArgument("eps values must be positive and finite".into()));
    }
    Ok(())
}

/// Solves the regularized problem along a strictly decreasing `eps_grid`,
/// warm-starting each point from the potentials of the previous one.
pub fn solve_sweep(inst: &Instance, eps_grid: &[f64], opts: &SolverOptions) -> Result<Vec<SweepPoint>> {
    check_grid(eps_grid)?;
    let mut warm = opts.warm_start.clone();
    let mut out = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let o = SolverOptions {
            warm_start: warm.take(),
            ..opts.clone()
        };
        let sol = solve_regularized(&inst.cost, &inst.marginals, &inst.fd, eps, &o).map_err(at_eps(eps))?;
        warm = Some(sol.potentials.clone());
        out.push(SweepPoint {
            eps,
            reg_value: sol.value,
            dual_value: sol.dual_value,
            iterations: sol.iterations,
            potentials: sol.potentials,
        });
    }
    Ok(out)
}

/// Whether the diagonal plan quantizer applies: two marginals of equal
/// dimension under the quadratic cost.
fn diagonal_applies(inst: &Instance) -> bool {
    inst.marginals.len() == 2
        && inst.cost.tag() == CostTag::SqEuclidean
        && inst.marginals[0].dim() == inst.marginals[1].dim()
}

/// Powers of two below `limit`, starting at 2.
fn doubling_grid(limit: usize) -> Vec<usize> {
    let mut g = Vec::new();
    let mut n = 2;
    while n <= limit.min(64) {
        g.push(n);
        n *= 2;
    }
    g
}

fn clamp_alpha(a: f64) -> f64 {
    if a.is_finite() {
        a.clamp(0.05, 1.0)
    } else {
        1.0
    }
}

/// Quantization exponents of marginals `2..N`, fitted on `n = 2, 4, ...`
/// below half the support size. Falls back to `1/d` when the support is too
/// small for a fit.
pub fn estimate_alphas(marginals: &[DiscreteMeasure], p: f64, restarts: usize, seed: u64) -> Vec<f64> {
    marginals[1..]
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let fallback = 1.0 / mu.dim() as f64;
            let grid = doubling_grid(mu.len() / 2);
            if grid.len() < 4 {
                return fallback;
            }
            let kind = if mu.dim() == 1 {
                QuantizerKind::Optimal1d
            } else {
                QuantizerKind::Lloyd { restarts }
            };
            match fit_quant_rate(QuantSource::Measure(mu), p, &grid, kind, seed.wrapping_add(i as u64)) {
                Ok(fit) => clamp_alpha(fit.alpha_hat),
                Err(_) => fallback,
            }
        })
        .collect()
}

/// Quantization exponent of an optimal plan: the diagonal fit when it
/// applies, otherwise `1 / (d_1 + ... + d_N)`.
pub fn estimate_plan_alpha(inst: &Instance, pi_star: &Coupling, restarts: usize, seed: u64) -> f64 {
    let fallback = 1.0 / inst.marginals.iter().map(|m| m.dim()).sum::<usize>() as f64;
    if !diagonal_applies(inst) {
        return fallback;
    }
    let grid = doubling_grid(pi_star.len() / 2);
    if grid.len() < 4 {
        return fallback;
    }
    match fit_quant_rate(QuantSource::Plan(pi_star), 2.0, &grid, QuantizerKind::Lloyd { restarts }, seed) {
        Ok(fit) => clamp_alpha(fit.alpha_hat),
        Err(_) => fallback,
    }
}

/// Exponent `p` of the Wasserstein metric used for shadows of `cost`.
fn shadow_p(cost: &CostModel) -> f64 {
    if cost.growth_order() <= 1.0 {
        1.0
    } else {
        2.0
    }
}

fn size_for(eps: f64, exponent: f64, cap: usize) -> usize {
    let n = eps.powf(-exponent).floor();
    if !(n >= 1.0) {
        1
    } else if n >= cap as f64 {
        cap
    } else {
        n as usize
    }
}

/// Exact solution and certificate sizing shared by every grid point.
#[derive(Debug, Clone)]
pub struct CertifyContext {
    pub exact: ExactSolution,
    pub alphas: Vec<f64>,
    pub plan_alpha: f64,
}

impl CertifyContext {
    pub fn new(inst: &Instance, opts: &CertifyOptions) -> Result<Self> {
        if inst.marginals.len() < 2 {
            return Err(Error::InvalidArgument("need at least two marginals".into()));
        }
        let exact = solve_exact_ot(&inst.cost, &inst.marginals)?;
        let p = shadow_p(&inst.cost);
        let alphas = match &opts.alphas {
            Some(a) => {
                if a.len() + 1 != inst.marginals.len() {
                    return Err(Error::DimensionMismatch {
                        expected: inst.marginals.len() - 1,
                        found: a.len(),
                    });
                }
                for &x in a {
                    if !(x > 0.0 && x <= 1.0) {
                        return Err(Error::InvalidAlpha(x));
                    }
                }
                a.clone()
            }
            None => estimate_alphas(&inst.marginals, p, opts.restarts, opts.seed),
        };
        let plan_alpha = match opts.plan_alpha {
            Some(a) if a > 0.0 && a <= 1.0 => a,
            Some(a) => return Err(Error::InvalidAlpha(a)),
            None => estimate_plan_alpha(inst, &exact.plan, opts.restarts, opts.seed),
        };
        Ok(Self {
            exact,
            alphas,
            plan_alpha,
        })
    }
}

fn tolerance(scale: f64) -> f64 {
    1e-9 * (1.0 + scale.abs())
}

fn double_shadow_candidate(inst: &Instance, ctx: &CertifyContext, eps: f64, opts: &CertifyOptions) -> Result<Candidate> {
    let p = shadow_p(&inst.cost);
    let sizes: Vec<usize> = ctx
        .alphas
        .iter()
        .zip(&inst.marginals[1..])
        .map(|(&a, mu)| size_for(eps, 1.0 / a, mu.len()))
        .collect();
    let ds = double_shadow_coupling(&ctx.exact.plan, &inst.fd, &sizes, p, opts.quant_kind, opts.seed)?;
    let transport_cost = inst.cost.integrate(&ds.plan);
    let divergence = divergence_to_product(&ds.plan, &inst.fd);
    if divergence > ds.div_cap_used + tolerance(ds.div_cap_used) {
        return Err(Error::InvariantViolation(format!(
            "double shadow divergence {divergence} exceeds its cap {}",
            ds.div_cap_used
        )));
    }
    let excess = transport_cost - ctx.exact.value;
    if let Some(l) = inst.cost.lipschitz_l() {
        if excess.abs() > l * ds.w_bound + tolerance(ctx.exact.value) {
            return Err(Error::InvariantViolation(format!(
                "double shadow transport excess {excess} exceeds L W bound {}",
                l * ds.w_bound
            )));
        }
    }
    Ok(Candidate {
        kind: CandidateKind::DoubleShadow,
        sizes,
        transport_cost,
        divergence,
        upper: excess + eps * divergence,
        quant_wp: ds.quant_wp,
        w_bound: Some(ds.w_bound),
        divergence_cap: Some(ds.div_cap_used),
        taylor_bound: None,
    })
}

fn martingale_candidate(inst: &Instance, ctx: &CertifyContext, eps: f64, opts: &CertifyOptions) -> Result<Candidate> {
    let pi = &ctx.exact.plan;
    let n = size_for(eps, 1.0 / (2.0 * ctx.plan_alpha), pi.len());
    let method = if diagonal_applies(inst) {
        PlanQuantMethod::Diagonal
    } else {
        PlanQuantMethod::JointLloyd {
            restarts: opts.restarts,
        }
    };
    let mc = independent_martingale_coupling(pi, n, &inst.cost, method, opts.seed)?;
    if mc.barycenter_error > 1e-7 {
        return Err(Error::NotAFixedPoint {
            deviation: mc.barycenter_error,
        });
    }
    let transport_cost = inst.cost.integrate(&mc.plan);
    let divergence = divergence_to_product(&mc.plan, &inst.fd);
    let excess = transport_cost - ctx.exact.value;
    if excess > mc.taylor_bound + tolerance(ctx.exact.value) {
        return Err(Error::InvariantViolation(format!(
            "martingale transport excess {excess} exceeds the Taylor bound {}",
            mc.taylor_bound
        )));
    }
    Ok(Candidate {
        kind: CandidateKind::IndependentMartingale,
        sizes: vec![n],
        transport_cost,
        divergence,
        upper: excess + eps * divergence,
        quant_wp: Vec::new(),
        w_bound: None,
        divergence_cap: None,
        taylor_bound: Some(mc.taylor_bound),
    })
}

/// Lower bound on `OT_{f,eps} - OT`: the shifted-potential dual bound for two
/// marginals, the solver's dual value otherwise.
fn lower_bound(inst: &Instance, ctx: &CertifyContext, point: &SweepPoint) -> Result<f64> {
    let ot = ctx.exact.value;
    if inst.marginals.len() != 2 {
        return Ok(point.dual_value - ot);
    }
    let pot = &ctx.exact.potentials;
    let c_max = reduced_cost(&inst.cost, pot, &inst.marginals)?
        .into_iter()
        .fold(0.0f64, f64::max);
    let grid = default_a_grid(point.eps, c_max + point.eps, &[point.eps]);
    let (_, lb) = dual_lower_bound(&inst.cost, &inst.marginals, &inst.fd, point.eps, pot, &grid)?;
    Ok(lb + pot.dual_value(&inst.marginals) - ot)
}

/// Brackets the gap at one solved grid point.
pub fn bracket_point(inst: &Instance, ctx: &CertifyContext, point: &SweepPoint, opts: &CertifyOptions) -> Result<GapBracket> {
    let eps = point.eps;
    let run = || -> Result<GapBracket> {
        let mut candidates = vec![double_shadow_candidate(inst, ctx, eps, opts)?];
        if inst.cost.second_deriv_b().is_some() {
            candidates.push(martingale_candidate(inst, ctx, eps, opts)?);
        }
        let best = candidates
            .iter()
            .min_by(|a, b| a.upper.total_cmp(&b.upper))
            .expect("at least one candidate");
        Ok(GapBracket {
            eps,
            gap: point.reg_value - ctx.exact.value,
            lower: lower_bound(inst, ctx, point)?,
            upper: best.upper,
            candidate_kind: best.kind,
            ot_value: ctx.exact.value,
            reg_value: point.reg_value,
            iters: point.iterations,
            candidates,
        })
    };
    run().map_err(at_eps(eps))
}

/// Solves the sweep and brackets every grid point, in grid order.
pub fn run_gap_sweep(
    inst: &Instance,
    eps_grid: &[f64],
    solver: &SolverOptions,
    cert: &CertifyOptions,
) -> Result<Vec<GapBracket>> {
    let ctx = CertifyContext::new(inst, cert)?;
    let points = solve_sweep(inst, eps_grid, solver)?;
    points.iter().map(|pt| bracket_point(inst, &ctx, pt, cert)).collect()
}

/// Brackets the gap at a single `eps`, solved from a cold start.
pub fn certify(inst: &Instance, eps: f64, solver: &SolverOptions, cert: &CertifyOptions) -> Result<GapBracket> {
    run_gap_sweep(inst, &[eps], solver, cert).map(|mut v| v.remove(0))
}

/// Checks `lower - slack <= gap <= upper + slack`.
pub fn check_bracket(b: &GapBracket, slack: f64) -> Result<()> {
    if b.lower - slack <= b.gap && b.gap <= b.upper + slack {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!(
            "bracket violated at eps = {:e}: lower {} gap {} upper {}",
            b.eps, b.lower, b.gap, b.upper
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `gap = A eps log(1/eps) + B eps`.
    EpsLog,
    /// `gap = K eps^theta`.
    Power,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateModelFit {
    pub model: RateModel,
    /// `(A, B)` or `(K, theta)`.
    pub coefficients: (f64, f64),
    /// Root mean square residual: relative residuals for `EpsLog`, log
    /// residuals for `Power`.
    pub residual: f64,
    pub points: usize,
}

/// Fits a rate model to `(eps, gap)` pairs.
///
/// `EpsLog` solves least squares with rows scaled by `1/gap`, constrained to
/// `A >= 0`. `Power` regresses `log gap` on `log eps` over positive gaps.
pub fn fit_rate_model(data: &[(f64, f64)], model: RateModel) -> Result<RateModelFit> {
    let rows: Vec<(f64, f64)> = data.iter().copied().filter(|&(e, g)| e > 0.0 && g > 0.0).collect();
    if rows.len() < 5 {
        return Err(Error::DegenerateDesign("need at least 5 points with positive eps and gap"));
    }
    let distinct = rows.iter().any(|r| r.0 != rows[0].0);
    if !distinct {
        return Err(Error::DegenerateDesign("all eps values coincide"));
    }
    let n = rows.len() as f64;
    match model {
        RateModel::EpsLog => {
            let x1: Vec<f64> = rows.iter().map(|&(e, g)| e * (1.0 / e).ln() / g).collect();
            let x2: Vec<f64> = rows.iter().map(|&(e, g)| e / g).collect();
            let y = vec![1.0; rows.len()];
            let (mut a, mut b) = lstsq2(&x1, &x2, &y).ok_or(Error::DegenerateDesign("collinear design"))?;
            if a < 0.0 {
                a = 0.0;
                b = x2.iter().sum::<f64>() / x2.iter().map(|v| v * v).sum::<f64>();
            }
            let ss: f64 = x1.iter().zip(&x2).map(|(u, v)| (a * u + b * v - 1.0).powi(2)).sum();
            Ok(RateModelFit {
                model,
                coefficients: (a, b),
                residual: (ss / n).sqrt(),
                points: rows.len(),
            })
        }
        RateModel::Power => {
            let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
            let ly: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
            let (theta, intercept, _) = linear_fit(&lx, &ly);
            let ss: f64 = lx.iter().zip(&ly).map(|(x, y)| (intercept + theta * x - y).powi(2)).sum();
            Ok(RateModelFit {
                model,
                coefficients: (intercept.exp(), theta),
                residual: (ss / n).sqrt(),
                points: rows.len(),
            })
        }
    }
}

/// [`fit_rate_model`] on the `(eps, gap)` columns of a sweep.
pub fn fit_brackets(brackets: &[GapBracket], model: RateModel) -> Result<RateModelFit> {
    let data: Vec<(f64, f64)> = brackets.iter().map(|b| (b.eps, b.gap)).collect();
    fit_rate_model(&data, model)
}
