//! Builds instances from configurations and runs sweeps, certificates and
//! rate fits.

use rayon::prelude::*;

use otrate_core::experiment::{
    bracket_point, check_bracket, fit_rate_model, solve_sweep, CertifyContext, CertifyOptions, GapBracket, Instance,
    RateModel, RateModelFit,
};
use otrate_core::quantize::{fit_quant_rate, QuantSource, RateFit};
use otrate_core::shadow::QuantKind;
use otrate_core::{solve_exact_ot, DiscreteMeasure, SolverOptions};

use crate::config::{LoadedConfig, MarginalSpec, QuantizerKindSpec};
use crate::error::{HarnessError, HarnessResult};
use crate::generators::{gaussian_grid, two_point, uniform_grid};
use crate::io::{load_measure, ResultRow};

/// Slack for the row-wise check `lower <= gap <= upper`.
pub const BRACKET_SLACK: f64 = 1e-6;

pub fn build_marginal(spec: &MarginalSpec, loaded: &LoadedConfig) -> HarnessResult<DiscreteMeasure> {
    match spec {
        MarginalSpec::File { path } => {
            let p = if path.is_absolute() {
                path.clone()
            } else {
                loaded.base_dir.join(path)
            };
            load_measure(&p)
        }
        MarginalSpec::UniformGrid { d, n_per_axis, low, high } => uniform_grid(*d, *n_per_axis, *low, *high),
        MarginalSpec::GaussianGrid { d, n, mean, sd } => gaussian_grid(*d, *n, *mean, *sd),
        MarginalSpec::TwoPoint { x, y, p } => two_point(x, y, *p),
    }
}

pub fn build_instance(loaded: &LoadedConfig) -> HarnessResult<Instance> {
    let cfg = &loaded.config;
    let marginals = cfg
        .marginals
        .iter()
        .map(|m| build_marginal(m, loaded))
        .collect::<HarnessResult<Vec<_>>>()?;
    Ok(Instance {
        cost: cfg.cost.build(marginals.len())?,
        fd: cfg.divergence.build()?,
        marginals,
    })
}

pub fn solver_options(loaded: &LoadedConfig) -> SolverOptions {
    SolverOptions {
        tol: loaded.config.solver.tol,
        max_iter: loaded.config.solver.max_iter,
        warm_start: None,
    }
}

pub fn certify_options(loaded: &LoadedConfig) -> CertifyOptions {
    let q = &loaded.config.quantizer;
    CertifyOptions {
        alphas: q.alphas.clone(),
        plan_alpha: q.plan_alpha,
        quant_kind: match q.kind {
            QuantizerKindSpec::Empirical => QuantKind::Empirical,
            _ => QuantKind::Optimal,
        },
        restarts: q.restarts,
        seed: loaded.config.seed,
    }
}

/// Runs `f` on a pool of `threads` workers (the rayon default when 0).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> HarnessResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Solves along the grid with warm starts, then brackets every grid point in
/// parallel. Rows come back in grid order (eps descending).
pub fn run_sweep(loaded: &LoadedConfig, eps_grid: &[f64], threads: usize) -> HarnessResult<Vec<GapBracket>> {
    let inst = build_instance(loaded)?;
    let cert = certify_options(loaded);
    let ctx = CertifyContext::new(&inst, &cert)?;
    let points = solve_sweep(&inst, eps_grid, &solver_options(loaded))?;
    let rows = with_threads(threads, || {
        points
            .par_iter()
            .map(|pt| bracket_point(&inst, &ctx, pt, &cert))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(rows)
}

/// Checks the bracket invariant on every row.
pub fn check_rows(rows: &[GapBracket]) -> HarnessResult<()> {
    for r in rows {
        check_bracket(r, BRACKET_SLACK)?;
    }
    Ok(())
}

/// Exact and regularized values along the grid, without certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRow {
    pub eps: f64,
    pub ot_value: f64,
    pub reg_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iters: usize,
}

pub fn run_solve(loaded: &LoadedConfig, eps_grid: &[f64]) -> HarnessResult<Vec<SolveRow>> {
    let inst = build_instance(loaded)?;
    let exact = solve_exact_ot(&inst.cost, &inst.marginals)?;
    let points = solve_sweep(&inst, eps_grid, &solver_options(loaded))?;
    Ok(points
        .into_iter()
        .map(|p| SolveRow {
            eps: p.eps,
            ot_value: exact.value,
            reg_value: p.reg_value,
            dual_value: p.dual_value,
            gap: p.reg_value - exact.value,
            iters: p.iterations,
        })
        .collect())
}

/// What to quantize in a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantTarget {
    Marginal(usize),
    /// The optimal plan between the first two marginals, along its diagonal.
    Plan,
}

pub fn run_quant_rate(loaded: &LoadedConfig, target: QuantTarget) -> HarnessResult<RateFit> {
    let q = &loaded.config.quantizer;
    let seed = loaded.config.seed;
    match target {
        QuantTarget::Marginal(i) => {
            let spec = loaded
                .config
                .marginals
                .get(i)
                .ok_or_else(|| HarnessError::Config(format!("no marginal with index {i}")))?;
            let mu = build_marginal(spec, loaded)?;
            Ok(fit_quant_rate(QuantSource::Measure(&mu), q.p, &q.n_grid, q.kind_for(mu.dim()), seed)?)
        }
        QuantTarget::Plan => {
            let inst = build_instance(loaded)?;
            let exact = solve_exact_ot(&inst.cost, &inst.marginals[..2])?;
            Ok(fit_quant_rate(
                QuantSource::Plan(&exact.plan),
                2.0,
                &q.n_grid,
                otrate_core::quantize::QuantizerKind::Lloyd { restarts: q.restarts },
                seed,
            )?)
        }
    }
}

pub fn fit_rows(rows: &[ResultRow], model: RateModel) -> HarnessResult<RateModelFit> {
    let data: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.gap)).collect();
    Ok(fit_rate_model(&data, model)?)
}
