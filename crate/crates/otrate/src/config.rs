//! Experiment configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use otrate_core::math::log_space_desc;
use otrate_core::quantize::QuantizerKind;
use otrate_core::{CostModel, FDivergence};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub marginals: Vec<MarginalSpec>,
    pub cost: CostSpec,
    pub divergence: DivergenceSpec,
    pub eps_grid: EpsGridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub quantizer: QuantizerSpec,
    pub seed: u64,
}

/// A marginal: a measure file (`w,x1,...,xd`) or a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    /// Relative paths resolve against the directory of the config file.
    File { path: PathBuf },
    /// Uniform weights on the midpoint grid of `[low, high]^d`.
    UniformGrid { d: usize, n_per_axis: usize, low: f64, high: f64 },
    /// Product of `d` equal-mass quantile grids of `N(mean, sd^2)`, `n` atoms per axis.
    GaussianGrid { d: usize, n: usize, mean: f64, sd: f64 },
    /// `p delta_x + (1 - p) delta_y`.
    TwoPoint { x: Vec<f64>, y: Vec<f64>, p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    SqEuclidean {},
    L1Sum { dim: usize },
    EuclideanPower { r: f64 },
    GangboSwiech {},
}

impl CostSpec {
    pub fn build(&self, n_marginals: usize) -> HarnessResult<CostModel> {
        Ok(match *self {
            CostSpec::SqEuclidean {} => CostModel::sq_euclidean(),
            CostSpec::L1Sum { dim } => CostModel::l1_sum(dim),
            CostSpec::EuclideanPower { r } => CostModel::euclidean_power(r)?,
            CostSpec::GangboSwiech {} => CostModel::gangbo_swiech(n_marginals),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DivergenceSpec {
    Entropy {},
    Power { rho: f64 },
}

impl DivergenceSpec {
    pub fn build(&self) -> HarnessResult<FDivergence> {
        Ok(match *self {
            DivergenceSpec::Entropy {} => FDivergence::entropy(),
            DivergenceSpec::Power { rho } => FDivergence::power(rho)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsGridSpec {
    Values(Vec<f64>),
    LogSpaced { min: f64, max: f64, count: usize },
}

impl EpsGridSpec {
    /// The grid sorted in decreasing order; values must be positive, finite
    /// and distinct.
    pub fn normalized(&self) -> HarnessResult<Vec<f64>> {
        let mut v = match self {
            EpsGridSpec::Values(v) => v.clone(),
            EpsGridSpec::LogSpaced { min, max, count } => {
                if !(*min > 0.0 && max >= min && *count >= 1) {
                    return Err(HarnessError::Config(format!(
                        "log_spaced grid needs 0 < min <= max and count >= 1, got ({min}, {max}, {count})"
                    )));
                }
                log_space_desc(*min, *max, *count)
            }
        };
        if v.is_empty() {
            return Err(HarnessError::Config("eps_grid is empty".into()));
        }
        if let Some(e) = v.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(HarnessError::Config(format!("eps values must be positive and finite, got {e}")));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("eps_grid contains duplicates".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerKindSpec {
    /// Exact dynamic program on the real line, multi-start Lloyd otherwise.
    Optimal,
    Lloyd,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSpec {
    pub kind: QuantizerKindSpec,
    /// Lloyd restarts, or sample tries for the empirical quantizer.
    pub restarts: usize,
    pub n_grid: Vec<usize>,
    /// Wasserstein exponent for rate fits (1 or 2).
    pub p: f64,
    /// Quantization exponents of marginals `2..N` for certificates; fitted
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    /// Quantization exponent of an optimal plan; fitted when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan_alpha: Option<f64>,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self {
            kind: QuantizerKindSpec::Optimal,
            restarts: 5,
            n_grid: vec![2, 4, 8, 16, 32, 64],
            p: 2.0,
            alphas: None,
            plan_alpha: None,
        }
    }
}

impl QuantizerSpec {
    /// The core quantizer for a measure of dimension `dim`.
    pub fn kind_for(&self, dim: usize) -> QuantizerKind {
        match self.kind {
            QuantizerKindSpec::Optimal if dim == 1 => QuantizerKind::Optimal1d,
            QuantizerKindSpec::Optimal | QuantizerKindSpec::Lloyd => QuantizerKind::Lloyd {
                restarts: self.restarts,
            },
            QuantizerKindSpec::Empirical => QuantizerKind::Empirical { tries: self.restarts },
        }
    }
}

/// A parsed configuration with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str) -> HarnessResult<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: "<config>".into(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> HarnessResult<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    let config = parse_config(&text).map_err(|e| match e {
        HarnessError::Parse { line, msg, .. } => HarnessError::Parse {
            path: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

fn validate(cfg: &ExperimentConfig) -> HarnessResult<()> {
    if cfg.marginals.len() < 2 {
        return Err(HarnessError::Config("at least two marginals are required".into()));
    }
    cfg.eps_grid.normalized()?;
    if cfg.solver.tol.is_nan() || cfg.solver.tol <= 0.0 || cfg.solver.max_iter == 0 {
        return Err(HarnessError::Config("solver needs tol > 0 and max_iter >= 1".into()));
    }
    if cfg.quantizer.restarts == 0 {
        return Err(HarnessError::Config("quantizer.restarts must be at least 1".into()));
    }
    if cfg.quantizer.n_grid.contains(&0) {
        return Err(HarnessError::Config("quantizer.n_grid entries must be positive".into()));
    }
    if let Some(a) = &cfg.quantizer.alphas {
        if a.len() + 1 != cfg.marginals.len() {
            return Err(HarnessError::Config(format!(
                "quantizer.alphas needs {} entries, got {}",
                cfg.marginals.len() - 1,
                a.len()
            )));
        }
    }
    Ok(())
}
