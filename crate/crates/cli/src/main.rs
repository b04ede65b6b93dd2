//! `progeny`: exact recursions, limit transforms, simulation and regime
//! sweeps for near-critical multi-type branching processes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use progeny_cli::model_file::{load_model, LoadedModel};
use progeny_cli::oracle;
use progeny_cli::report;
use progeny_cli::sweep::{self, ExperimentConfig};
use progeny_core::asymptotics::{self, AsymptoticContext};
use progeny_core::montecarlo::{self, Condition, Estimate};
use progeny_core::recursion;
use progeny_core::spectral::spectral_at;
use progeny_core::ImmigrationLaw;

#[derive(Parser)]
#[command(
    name = "progeny",
    version,
    about = "Numerical laboratory for near-critical multi-type branching processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Quantity {
    /// Population p.g.f. iterates f_n(s).
    Fn,
    /// Total-progeny transforms t_n(s).
    Tn,
    /// With-extinction progeny transforms h_n(s).
    Hn,
    /// Extinction-window transforms g_n(s) = h_{n+1}(s) - h_n(s).
    Gn,
    /// Immigration-process transforms phi_n(s); needs an immigration law.
    Phin,
    /// Joint transforms P_n(x, s); x defaults to all ones.
    Joint,
    /// Doomed-process ratios L_n(s, m) at fixed conditioning depth m.
    Doomed,
}

#[derive(Subcommand)]
enum Command {
    /// Perron root and eigenvectors of the mean matrix, plus Q.
    Spectral {
        #[arg(long)]
        model: PathBuf,
    },
    /// Exact generating-function recursions, one value per generation.
    Recurse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: u32,
        /// Evaluation point, one value per type.
        #[arg(long, value_delimiter = ',')]
        s: Vec<f64>,
        #[arg(long, value_enum)]
        quantity: Quantity,
        /// Joint-transform population argument.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        /// Doomed-process conditioning depth.
        #[arg(long, default_value_t = 64)]
        m: u32,
    },
    /// Limiting Laplace transforms for a theorem/regime at given T values.
    Limits {
        #[arg(long)]
        theorem: u8,
        /// i1-sub, i1-super, i1-critical, i2-sub or i2-super.
        #[arg(long)]
        regime: String,
        /// Limit of e^{-n |1 - rho_n|} for i1 regimes.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long = "T", value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Monte Carlo estimate of E(s^{Y_n}) under an optional condition.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Generations; with --immigration this counts arrival epochs.
        #[arg(long)]
        n: u32,
        #[arg(long)]
        paths: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Defaults to all ones.
        #[arg(long, value_delimiter = ',')]
        s: Option<Vec<f64>>,
        /// none, survival, extinct, or survival+M (e.g. survival+30).
        #[arg(long, default_value = "none")]
        condition: String,
        /// Use the model's immigration law and start from its arrivals.
        #[arg(long)]
        immigration: bool,
        /// Starting population; defaults to one individual of type 0.
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<u32>>,
    },
    /// Run a regime sweep and gate it on the configured tolerance.
    Verify {
        /// JSON ExperimentConfig; inline flags below override nothing when
        /// this is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        theorem: Option<u8>,
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long = "T", value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<u32>>,
        #[arg(long)]
        schedule_exponent: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mc_paths: Option<u64>,
        /// Also write the full JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Brute-force joint distribution of (Z_n, Y_n) by forward convolution.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<u32>>,
        #[arg(long, default_value_t = 64)]
        pop_cap: u64,
        #[arg(long, default_value_t = 64)]
        prog_cap: u64,
        /// Use the model's immigration law instead of a fixed start.
        #[arg(long)]
        immigration: bool,
    },
}

fn ones(dim: usize) -> Vec<f64> {
    vec![1.0; dim]
}

fn estimate_json(est: &Estimate) -> serde_json::Value {
    json!({
        "value": est.value,
        "stderr": est.stderr,
        "paths_used": est.paths_used,
        "paths_accepted": est.paths_accepted,
        "paths_capped": est.paths_capped,
    })
}

fn cmd_spectral(model: &Path) -> Result<()> {
    let LoadedModel { law, .. } = load_model(model)?;
    let one = ones(law.dim());
    let spectral = spectral_at(&law, &one)?;
    let q = law.weighted_q(&spectral.v, &one, &spectral.u)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "rho": spectral.rho,
            "u": spectral.u,
            "v": spectral.v,
            "q": q,
            "iterations": spectral.iterations,
            "residual": spectral.residual,
        }))?
    );
    Ok(())
}

fn cmd_recurse(
    model: &Path,
    n: u32,
    s: &[f64],
    quantity: Quantity,
    x: Option<Vec<f64>>,
    m: u32,
) -> Result<()> {
    let LoadedModel { law, immigration } = load_model(model)?;
    let dim = law.dim();
    if s.len() != dim {
        bail!("--s needs {dim} values for this model");
    }
    let values: Vec<serde_json::Value> = match quantity {
        Quantity::Fn | Quantity::Tn | Quantity::Hn => {
            let steps = recursion::progeny_sequences(&law, s, n)?;
            steps
                .iter()
                .map(|st| {
                    json!(match quantity {
                        Quantity::Fn => &st.f,
                        Quantity::Tn => &st.t,
                        _ => &st.h,
                    })
                })
                .collect()
        }
        Quantity::Gn => {
            let steps = recursion::progeny_sequences(&law, s, n + 1)?;
            steps
                .windows(2)
                .map(|w| {
                    let g: Vec<f64> = w[1].h.iter().zip(&w[0].h).map(|(a, b)| a - b).collect();
                    json!(g)
                })
                .collect()
        }
        Quantity::Phin => {
            let imm = immigration.context("phin needs an immigration law in the model file")?;
            (0..=n)
                .map(|k| recursion::immigration_lt(&law, &imm, s, k).map(|v| json!(v)))
                .collect::<Result<_, _>>()?
        }
        Quantity::Joint => {
            let x = x.unwrap_or_else(|| ones(dim));
            if x.len() != dim {
                bail!("--x needs {dim} values for this model");
            }
            (0..=n)
                .map(|k| recursion::joint_pgf(&law, &x, s, k).map(|v| json!(v)))
                .collect::<Result<_, _>>()?
        }
        Quantity::Doomed => (0..=n)
            .map(|k| recursion::doomed_lt(&law, s, k, m).map(|v| json!(v)))
            .collect::<Result<_, _>>()?,
    };
    println!("{}", serde_json::to_string_pretty(&json!(values))?);
    Ok(())
}

fn cmd_limits(theorem: u8, regime: &str, r: f64, t_values: &[f64], model: &Path) -> Result<()> {
    let LoadedModel { law, immigration } = load_model(model)?;
    // The immigration family needs an arrival law for lambda'u; default to
    // a single type-0 immigrant per epoch when the model has none.
    let imm = match immigration {
        Some(imm) => Some(imm),
        None if theorem == 5 => Some(ImmigrationLaw::unit(law.dim())?),
        None => None,
    };
    let ctx = AsymptoticContext::build(&law, imm.as_ref())?;
    let schedule = sweep::parse_schedule(regime, r, 0.5)?;
    let core_regime = schedule.regime();
    let pairs: Vec<serde_json::Value> = t_values
        .iter()
        .map(|&t| {
            asymptotics::limit_transform(&ctx, theorem, core_regime, t)
                .map(|v| json!({"T": t, "value": v}))
        })
        .collect::<Result<_, _>>()?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "theorem": theorem,
            "regime": regime,
            "r": r,
            "context": {
                "rho": ctx.rho(),
                "rho_mu": ctx.rho_mu(),
                "q": ctx.q,
                "q_mu": ctx.q_mu,
                "lambda_dot_u": ctx.lambda_dot_u,
            },
            "values": pairs,
        }))?
    );
    Ok(())
}

fn parse_condition(token: &str) -> Result<Condition> {
    match token {
        "none" => Ok(Condition::None),
        "survival" => Ok(Condition::SurvivalAtN),
        "extinct" => Ok(Condition::ExtinctExactlyAtN),
        other => match other.strip_prefix("survival+") {
            Some(m) => Ok(Condition::SurvivalAtNPlusM(
                m.parse().context("condition window must be an integer")?,
            )),
            None => {
                bail!("unknown condition {other:?}; expected none, survival, extinct or survival+M")
            }
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: &Path,
    n: u32,
    paths: u64,
    seed: u64,
    s: Option<Vec<f64>>,
    condition: &str,
    immigration: bool,
    start: Option<Vec<u32>>,
) -> Result<()> {
    let LoadedModel {
        law,
        immigration: imm,
    } = load_model(model)?;
    let dim = law.dim();
    let s = s.unwrap_or_else(|| ones(dim));
    if s.len() != dim {
        bail!("--s needs {dim} values for this model");
    }
    let condition = parse_condition(condition)?;
    let est = if immigration {
        let imm = imm.context("--immigration needs an immigration law in the model file")?;
        if start.is_some() {
            bail!("--immigration and --start are mutually exclusive");
        }
        montecarlo::estimate_lt(&law, Some(&imm), None, &s, n, condition, paths, seed)?
    } else {
        let start = start.unwrap_or_else(|| {
            let mut e = vec![0u32; dim];
            e[0] = 1;
            e
        });
        if start.len() != dim {
            bail!("--start needs {dim} values for this model");
        }
        montecarlo::estimate_lt(&law, None, Some(&start), &s, n, condition, paths, seed)?
    };
    println!("{}", serde_json::to_string_pretty(&estimate_json(&est))?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    config: Option<PathBuf>,
    family: Option<String>,
    theorem: Option<u8>,
    regime: Option<String>,
    r: Option<f64>,
    t_grid: Option<Vec<f64>>,
    n_grid: Option<Vec<u32>>,
    schedule_exponent: Option<f64>,
    tolerance: Option<f64>,
    output: Option<String>,
    seed: Option<u64>,
    mc_paths: Option<u64>,
    json_path: Option<PathBuf>,
) -> Result<bool> {
    let cfg = match config {
        Some(path) => ExperimentConfig::from_file(&path)?,
        None => {
            let mut cfg = ExperimentConfig::example();
            cfg.family = family.context("--family (or --config) is required")?;
            cfg.theorem = theorem.context("--theorem is required")?;
            cfg.regime = regime.context("--regime is required")?;
            cfg.t_grid = t_grid.context("--T grid is required")?;
            cfg.n_grid = n_grid.context("--n-grid is required")?;
            if let Some(r) = r {
                cfg.r = r;
            }
            if let Some(e) = schedule_exponent {
                cfg.schedule_exponent = e;
            }
            if let Some(tol) = tolerance {
                cfg.tolerance = tol;
            }
            cfg.output = output;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.mc_paths = mc_paths;
            cfg
        }
    };
    let report = sweep::run_verification(&cfg)?;
    match &cfg.output {
        Some(path) => report::write_csv(std::path::Path::new(path), &report.rows)?,
        None => print!("{}", report::csv_string(&report.rows)?),
    }
    if let Some(path) = json_path {
        report::write_json(&path, &report)?;
    }
    let pass = sweep::gate(&report, cfg.tolerance);
    eprintln!(
        "gate at n = {}: {} (tolerance {})",
        cfg.n_grid.last().unwrap(),
        if pass { "pass" } else { "FAIL" },
        cfg.tolerance
    );
    Ok(pass)
}

fn cmd_oracle(
    model: &Path,
    n: u32,
    start: Option<Vec<u32>>,
    pop_cap: u64,
    prog_cap: u64,
    immigration: bool,
) -> Result<()> {
    let LoadedModel {
        law,
        immigration: imm,
    } = load_model(model)?;
    let dist = if immigration {
        let imm = imm.context("--immigration needs an immigration law in the model file")?;
        if start.is_some() {
            bail!("--immigration and --start are mutually exclusive");
        }
        oracle::dp_oracle_immigration(&law, &imm, n, pop_cap, prog_cap)?
    } else {
        let start = start.unwrap_or_else(|| {
            let mut e = vec![0u32; law.dim()];
            e[0] = 1;
            e
        });
        oracle::dp_oracle(&law, &start, n, pop_cap, prog_cap)?
    };
    let mut states: Vec<(&(Vec<u32>, Vec<u32>), &f64)> = dist.probs.iter().collect();
    states.sort_by(|a, b| a.0.cmp(b.0));
    let rows: Vec<serde_json::Value> = states
        .iter()
        .map(|((z, y), p)| json!({"z": z, "y": y, "p": p}))
        .collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "n": dist.n,
            "defect": dist.defect,
            "states": rows,
        }))?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Spectral { model } => cmd_spectral(&model).map(|_| true),
        Command::Recurse {
            model,
            n,
            s,
            quantity,
            x,
            m,
        } => cmd_recurse(&model, n, &s, quantity, x, m).map(|_| true),
        Command::Limits {
            theorem,
            regime,
            r,
            t,
            model,
        } => cmd_limits(theorem, &regime, r, &t, &model).map(|_| true),
        Command::Simulate {
            model,
            n,
            paths,
            seed,
            s,
            condition,
            immigration,
            start,
        } => cmd_simulate(&model, n, paths, seed, s, &condition, immigration, start).map(|_| true),
        Command::Verify {
            config,
            family,
            theorem,
            regime,
            r,
            t_grid,
            n_grid,
            schedule_exponent,
            tolerance,
            output,
            seed,
            mc_paths,
            json,
        } => cmd_verify(
            config,
            family,
            theorem,
            regime,
            r,
            t_grid,
            n_grid,
            schedule_exponent,
            tolerance,
            output,
            seed,
            mc_paths,
            json,
        ),
        Command::Oracle {
            model,
            n,
            start,
            pop_cap,
            prog_cap,
            immigration,
        } => cmd_oracle(&model, n, start, pop_cap, prog_cap, immigration).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
