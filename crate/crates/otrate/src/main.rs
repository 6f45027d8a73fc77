use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use otrate::error::{HarnessError, HarnessResult};
use otrate::harness::{self, QuantTarget};
use otrate::io::{emit_csv, load_results, write_results};
use otrate::{load_config, LoadedConfig};
use otrate_core::experiment::{Candidate, GapBracket, RateModel};

#[derive(Parser)]
#[command(name = "otrate", version, about = "Convergence rates of regularized optimal transport")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the bracket stage (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and regularized values along the grid.
    Solve,
    /// Gap brackets along the grid.
    Sweep,
    /// Bracket at a single eps, with every candidate as JSON.
    Certify {
        #[arg(long, allow_negative_numbers = true)]
        eps: f64,
    },
    /// Quantization rate of a marginal or of the optimal plan.
    Quantrate {
        #[arg(long, conflicts_with = "plan")]
        marginal: Option<usize>,
        #[arg(long)]
        plan: bool,
    },
    /// Fits a rate model to a results table.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    EpsLog,
    Power,
}

fn main() {
    // clap exits with 2 on usage errors, which is reserved for invariant violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            std::process::exit(1);
        }
        Err(e) => e.exit(),
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn config(cli: &Cli) -> HarnessResult<LoadedConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| HarnessError::Config("--config is required for this command".into()))?;
    let mut loaded = load_config(path)?;
    if let Some(seed) = cli.seed {
        loaded.config.seed = seed;
    }
    Ok(loaded)
}

fn output(out: Option<&Path>) -> HarnessResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: &Cli) -> HarnessResult<()> {
    match &cli.cmd {
        Command::Solve => {
            let loaded = config(cli)?;
            let grid = loaded.config.eps_grid.normalized()?;
            let rows = harness::run_solve(&loaded, &grid)?;
            let mut w = csv::Writer::from_writer(output(cli.out.as_deref())?);
            let io = |e: csv::Error| HarnessError::Io(std::io::Error::other(e));
            w.write_record(["eps", "ot_value", "reg_value", "gap", "dual_value", "iters"])
                .map_err(io)?;
            for r in rows {
                w.write_record([
                    format!("{:.16e}", r.eps),
                    format!("{:.16e}", r.ot_value),
                    format!("{:.16e}", r.reg_value),
                    format!("{:.16e}", r.gap),
                    format!("{:.16e}", r.dual_value),
                    r.iters.to_string(),
                ])
                .map_err(io)?;
            }
            w.flush()?;
        }
        Command::Sweep => {
            let loaded = config(cli)?;
            let grid = loaded.config.eps_grid.normalized()?;
            let rows = harness::run_sweep(&loaded, &grid, cli.threads)?;
            // Rows are written before the check so a failing run leaves its table behind.
            match &cli.out {
                Some(p) => emit_csv(&rows, p)?,
                None => write_results(&rows, std::io::stdout().lock())?,
            }
            harness::check_rows(&rows)?;
        }
        Command::Certify { eps } => {
            let loaded = config(cli)?;
            if !eps.is_finite() || *eps <= 0.0 {
                return Err(HarnessError::Config(format!("eps must be positive, got {eps}")));
            }
            let rows = harness::run_sweep(&loaded, &[*eps], cli.threads)?;
            harness::check_rows(&rows)?;
            let mut w = output(cli.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &bracket_json(&rows[0])).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Command::Quantrate { marginal, plan } => {
            let loaded = config(cli)?;
            let target = if *plan {
                QuantTarget::Plan
            } else {
                QuantTarget::Marginal(marginal.unwrap_or(0))
            };
            let fit = harness::run_quant_rate(&loaded, target)?;
            let v = json!({
                "c_hat": fit.c_hat,
                "alpha_hat": fit.alpha_hat,
                "r_squared": fit.r_squared,
                "n_grid": fit.n_grid,
                "distortions": fit.distortions,
            });
            let mut w = output(cli.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &v).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
        Command::Fit { input, model } => {
            let rows = load_results(input)?;
            let model = match model {
                ModelArg::EpsLog => RateModel::EpsLog,
                ModelArg::Power => RateModel::Power,
            };
            let fit = harness::fit_rows(&rows, model)?;
            let v = match model {
                RateModel::EpsLog => json!({
                    "model": "eps_log",
                    "a": fit.coefficients.0,
                    "b": fit.coefficients.1,
                    "residual": fit.residual,
                    "points": fit.points,
                }),
                RateModel::Power => json!({
                    "model": "power",
                    "c": fit.coefficients.0,
                    "theta": fit.coefficients.1,
                    "residual": fit.residual,
                    "points": fit.points,
                }),
            };
            let mut w = output(cli.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &v).map_err(std::io::Error::other)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn candidate_json(c: &Candidate) -> serde_json::Value {
    json!({
        "kind": c.kind.as_str(),
        "sizes": c.sizes,
        "transport_cost": c.transport_cost,
        "divergence": c.divergence,
        "upper": c.upper,
        "quant_wp": c.quant_wp,
        "w_bound": c.w_bound,
        "divergence_cap": c.divergence_cap,
        "taylor_bound": c.taylor_bound,
    })
}

fn bracket_json(b: &GapBracket) -> serde_json::Value {
    json!({
        "eps": b.eps,
        "gap": b.gap,
        "lower": b.lower,
        "upper": b.upper,
        "candidate_kind": b.candidate_kind.as_str(),
        "ot_value": b.ot_value,
        "reg_value": b.reg_value,
        "iters": b.iters,
        "candidates": b.candidates.iter().map(candidate_json).collect::<Vec<_>>(),
    })
}
