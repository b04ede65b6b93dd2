//! Regime sweeps: calibrate a family along a near-critical schedule, run
//! the exact conditional transforms against their limiting forms at every
//! (n, T) grid point, and collect rows.
//!
//! Two schedule shapes are supported. The `i1-*` schedules hold
//! n |1 - rho_n| at -ln r by putting rho_n = 1 -+ (-ln r)/n (r = 1 is the
//! exactly critical line); the `i2-*` schedules let n |1 - rho_n| grow,
//! by default rho_n = 1 -+ n^{-1/2}. Grid points are independent and run
//! on a worker pool; rows come out sorted by (n, T index, start type)
//! regardless of thread count, and a fixed config (with its seed) always
//! produces byte-identical output.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use progeny_core::asymptotics::{self, AsymptoticContext, NormalizerKind, Regime, Side};
use progeny_core::compensated;
use progeny_core::model::associated_subcritical;
use progeny_core::montecarlo::{self, Condition, Estimate};
use progeny_core::ImmigrationLaw;

use crate::families::{calibrate_perron, Family, CALIBRATION_TOL};
use crate::report::{ContextEcho, Diagnostic, Report, Row};

/// Sup-norm tolerance for the doomed-process m-doubling extrapolation.
const DOOMED_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// One-knob family to calibrate: "binary" or "pair".
    pub family: String,
    /// 3 survival-conditioned, 4 extinction-at-n, 5 immigration,
    /// 6 doomed.
    pub theorem: u8,
    /// "i1-sub", "i1-super", "i1-critical", "i2-sub" or "i2-super".
    pub regime: String,
    /// Target of n |1 - rho_n| through e^{-x}; only i1 schedules read it.
    #[serde(default = "default_r")]
    pub r: f64,
    /// Aggregate Laplace arguments; split evenly across types.
    pub t_grid: Vec<f64>,
    pub n_grid: Vec<u32>,
    /// Gap exponent for i2 schedules: rho_n = 1 -+ n^{-exponent}.
    #[serde(default = "default_exponent")]
    pub schedule_exponent: f64,
    /// Hard relative tolerance applied to the largest-n rows by `gate`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Enables the Monte Carlo column where a simulation is meaningful.
    #[serde(default)]
    pub mc_paths: Option<u64>,
}

fn default_r() -> f64 {
    1.0
}

fn default_exponent() -> f64 {
    0.5
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn example() -> Self {
        ExperimentConfig {
            family: "binary".into(),
            theorem: 3,
            regime: "i2-sub".into(),
            r: default_r(),
            t_grid: vec![0.0, 1.0],
            n_grid: vec![256, 1024, 4096],
            schedule_exponent: default_exponent(),
            tolerance: default_tolerance(),
            output: None,
            seed: default_seed(),
            mc_paths: None,
        }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(Family, Schedule)> {
        let family = Family::parse(&self.family)?;
        let schedule = parse_schedule(&self.regime, self.r, self.schedule_exponent)?;
        if !(3..=6).contains(&self.theorem) {
            bail!("theorem must be 3..=6, got {}", self.theorem);
        }
        if self.t_grid.is_empty() {
            bail!("empty T grid");
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            bail!("T grid must be finite and nonnegative");
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            bail!("n grid must be nonempty with n >= 1");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!("n grid must be strictly increasing");
        }
        if !(self.tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        Ok((family, schedule))
    }
}

/// Parsed regime token plus its knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    I1 { r: f64, side: Side },
    I2 { exponent: f64, side: Side },
}

pub fn parse_schedule(token: &str, r: f64, exponent: f64) -> Result<Schedule> {
    match token {
        "i1-critical" => {
            if r != 1.0 {
                bail!("i1-critical fixes r = 1; got r = {r}");
            }
            Ok(Schedule::I1 {
                r: 1.0,
                side: Side::Sub,
            })
        }
        "i1-sub" | "i1-super" => {
            if !(r > 0.0 && r < 1.0) {
                bail!("i1 schedules off the critical line need r in (0, 1), got {r}");
            }
            let side = if token == "i1-sub" {
                Side::Sub
            } else {
                Side::Super
            };
            Ok(Schedule::I1 { r, side })
        }
        "i2-sub" | "i2-super" => {
            if !(exponent > 0.0 && exponent < 1.0) {
                bail!("schedule exponent must lie in (0, 1), got {exponent}");
            }
            let side = if token == "i2-sub" {
                Side::Sub
            } else {
                Side::Super
            };
            Ok(Schedule::I2 { exponent, side })
        }
        other => bail!(
            "unknown regime {other:?}; expected i1-sub, i1-super, i1-critical, i2-sub or i2-super"
        ),
    }
}

impl Schedule {
    /// `|1 - rho_n|` as constructed; multiplying back by n recovers
    /// -ln r bitwise on power-of-two grids for i1 schedules.
    pub fn gap(&self, n: u32) -> f64 {
        match *self {
            Schedule::I1 { r, .. } => {
                if r == 1.0 {
                    0.0
                } else {
                    -r.ln() / n as f64
                }
            }
            Schedule::I2 { exponent, .. } => (n as f64).powf(-exponent),
        }
    }

    pub fn rho(&self, n: u32) -> f64 {
        let side = match *self {
            Schedule::I1 { side, .. } | Schedule::I2 { side, .. } => side,
        };
        match side {
            Side::Sub => 1.0 - self.gap(n),
            Side::Super => 1.0 + self.gap(n),
        }
    }

    pub fn regime(&self) -> Regime {
        match *self {
            Schedule::I1 { r, side } => Regime::I1 { r, side },
            Schedule::I2 { side, .. } => Regime::I2 { side },
        }
    }

    fn side(&self) -> Side {
        match *self {
            Schedule::I1 { side, .. } | Schedule::I2 { side, .. } => side,
        }
    }
}

fn normalizer_kind(theorem: u8) -> NormalizerKind {
    match theorem {
        3 => NormalizerKind::M1,
        4 => NormalizerKind::M2,
        5 => NormalizerKind::M3,
        _ => NormalizerKind::M4,
    }
}

fn row_seed(seed: u64, n: u32, t_index: usize, j: usize) -> u64 {
    seed ^ ((n as u64) << 40) ^ ((t_index as u64) << 20) ^ j as u64
}

struct CellValues {
    /// (start type, exact transform); one entry with start None for the
    /// whole-process immigration family.
    exact: Vec<(Option<usize>, Result<f64, String>)>,
    limit: Result<f64, String>,
    mc: Vec<Option<Estimate>>,
    mc_note: Option<String>,
}

/// Everything fallible about one (n, T) cell. An Err here poisons the
/// whole cell; per-quantity failures are carried inside the value.
fn compute_cell(
    cfg: &ExperimentConfig,
    family: Family,
    schedule: Schedule,
    n: u32,
    t_index: usize,
    t: f64,
) -> Result<CellValues> {
    let dim = family.dim();
    let (law, _) = calibrate_perron(family, schedule.rho(n), CALIBRATION_TOL)?;
    let imm = if cfg.theorem == 5 {
        Some(ImmigrationLaw::unit(dim)?)
    } else {
        None
    };
    let ctx = AsymptoticContext::build(&law, imm.as_ref())?;
    let regime = schedule.regime();

    // The doomed family has no direct supercritical form: switch to the
    // associated subcritical law (the transform is invariant) and run its
    // subcritical regime.
    let starred = cfg.theorem == 6 && schedule.side() == Side::Super;
    let (eval_law, eval_ctx, eval_regime);
    if starred {
        let star = associated_subcritical(&law, &ctx.mu)?;
        let star_ctx = AsymptoticContext::build(&star, None)?;
        let flipped = match regime {
            Regime::I1 { r, .. } => Regime::I1 { r, side: Side::Sub },
            Regime::I2 { .. } => Regime::I2 { side: Side::Sub },
        };
        (eval_law, eval_ctx, eval_regime) = (star, star_ctx, flipped);
    } else {
        (eval_law, eval_ctx, eval_regime) = (law.clone(), ctx, regime);
    }

    let m = asymptotics::normalizer(&eval_ctx, normalizer_kind(cfg.theorem), eval_regime, n)?;
    let limit = asymptotics::limit_transform(&eval_ctx, cfg.theorem, eval_regime, t)
        .map_err(|e| e.to_string());

    let t_split = t / dim as f64;
    let eps: Vec<f64> = m.iter().map(|&mk| -(-t_split / mk).exp_m1()).collect();
    let s: Vec<f64> = m.iter().map(|&mk| (-t_split / mk).exp()).collect();

    let exact: Vec<(Option<usize>, Result<f64, String>)> = match cfg.theorem {
        3 => match compensated::conditional_lt_survival_eps::<f64>(&law, &eps, n) {
            Ok(values) => values
                .into_iter()
                .enumerate()
                .map(|(j, v)| (Some(j), Ok(v)))
                .collect(),
            Err(e) => (0..dim).map(|j| (Some(j), Err(e.to_string()))).collect(),
        },
        4 => match compensated::conditional_lt_extinction::<f64>(&law, &s, n) {
            Ok(values) => values
                .into_iter()
                .enumerate()
                .map(|(j, v)| (Some(j), Ok(v)))
                .collect(),
            Err(e) => (0..dim).map(|j| (Some(j), Err(e.to_string()))).collect(),
        },
        5 => {
            let imm = imm.as_ref().expect("family 5 builds an immigration law");
            vec![(
                None,
                compensated::immigration_lt_eps(&law, imm, &eps, n + 1).map_err(|e| e.to_string()),
            )]
        }
        _ => match compensated::doomed_lt_limit(&eval_law, &s, n, DOOMED_TOL) {
            Ok(limit_values) => limit_values
                .value
                .into_iter()
                .enumerate()
                .map(|(j, v)| (Some(j), Ok(v)))
                .collect(),
            Err(e) => (0..dim).map(|j| (Some(j), Err(e.to_string()))).collect(),
        },
    };

    // Monte Carlo column: only where a path simulation estimates the same
    // quantity honestly. The doomed family would need its own conditioned
    // sampler per m, and an s that rounded to 1 would estimate a different
    // transform, so both stay empty.
    let mut mc: Vec<Option<Estimate>> = vec![None; exact.len()];
    let mut mc_note = None;
    if let Some(paths) = cfg.mc_paths {
        let representable = s.iter().all(|&sk| sk < 1.0);
        if (3..=5).contains(&cfg.theorem) && representable && t > 0.0 {
            for (slot, (start, _)) in mc.iter_mut().zip(&exact) {
                let seed = row_seed(cfg.seed, n, t_index, start.unwrap_or(dim));
                let run = match cfg.theorem {
                    3 | 4 => {
                        let j = start.expect("families 3 and 4 fix a start type");
                        let mut e_j = vec![0u32; dim];
                        e_j[j] = 1;
                        let condition = if cfg.theorem == 3 {
                            Condition::SurvivalAtN
                        } else {
                            Condition::ExtinctExactlyAtN
                        };
                        montecarlo::estimate_lt(
                            &law,
                            None,
                            Some(&e_j),
                            &s,
                            n,
                            condition,
                            paths,
                            seed,
                        )
                    }
                    _ => montecarlo::estimate_lt(
                        &law,
                        imm.as_ref().map(|v| &*v),
                        None,
                        &s,
                        n + 1,
                        Condition::None,
                        paths,
                        seed,
                    ),
                };
                match run {
                    Ok(est) => *slot = Some(est),
                    Err(e) => mc_note = Some(format!("mc: {e}")),
                }
            }
        }
    }

    Ok(CellValues {
        exact,
        limit,
        mc,
        mc_note,
    })
}

fn cell_rows(
    cfg: &ExperimentConfig,
    family: Family,
    schedule: Schedule,
    n: u32,
    t_index: usize,
    t: f64,
) -> Vec<Row> {
    let starts: Vec<Option<usize>> = if cfg.theorem == 5 {
        vec![None]
    } else {
        (0..family.dim()).map(Some).collect()
    };
    let base = |start: Option<usize>| Row {
        theorem: cfg.theorem,
        regime: cfg.regime.clone(),
        r: cfg.r,
        n,
        rho: schedule.rho(n),
        t,
        start_type: start,
        exact: None,
        limit: None,
        mc: None,
        mc_stderr: None,
        abs_err: None,
        rel_err: None,
        error: None,
    };

    if t == 0.0 {
        // Every transform and every limit is 1 at T = 0.
        return starts
            .into_iter()
            .map(|start| {
                let mut row = base(start);
                row.exact = Some(1.0);
                row.limit = Some(1.0);
                row.abs_err = Some(0.0);
                row.rel_err = Some(0.0);
                row
            })
            .collect();
    }

    match compute_cell(cfg, family, schedule, n, t_index, t) {
        Ok(values) => values
            .exact
            .into_iter()
            .zip(values.mc)
            .map(|((start, exact), mc)| {
                let mut row = base(start);
                let mut errors = Vec::new();
                match exact {
                    Ok(v) => row.exact = Some(v),
                    Err(e) => errors.push(format!("exact: {e}")),
                }
                match &values.limit {
                    Ok(v) => row.limit = Some(*v),
                    Err(e) => errors.push(format!("limit: {e}")),
                }
                if let (Some(e), Some(l)) = (row.exact, row.limit) {
                    let abs = (e - l).abs();
                    row.abs_err = Some(abs);
                    row.rel_err = Some(abs / l.abs());
                }
                if let Some(est) = mc {
                    row.mc = Some(est.value);
                    row.mc_stderr = Some(est.stderr);
                }
                if let Some(note) = &values.mc_note {
                    errors.push(note.clone());
                }
                if !errors.is_empty() {
                    row.error = Some(errors.join("; "));
                }
                row
            })
            .collect(),
        Err(e) => starts
            .into_iter()
            .map(|start| {
                let mut row = base(start);
                row.error = Some(e.to_string());
                row
            })
            .collect(),
    }
}

fn worker_pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var("PROGENY_WORKERS") {
        Ok(raw) => {
            let workers: usize = raw
                .parse()
                .context("PROGENY_WORKERS must be a positive integer")?;
            if workers == 0 {
                bail!("PROGENY_WORKERS must be a positive integer");
            }
            Ok(Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .context("building worker pool")?,
            ))
        }
        Err(_) => Ok(None),
    }
}

pub fn run_verification(cfg: &ExperimentConfig) -> Result<Report> {
    let (family, schedule) = cfg.validate()?;
    let cells: Vec<(u32, usize, f64)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.t_grid.iter().enumerate().map(move |(i, &t)| (n, i, t)))
        .collect();

    let compute = || {
        cells
            .par_iter()
            .map(|&(n, t_index, t)| cell_rows(cfg, family, schedule, n, t_index, t))
            .collect::<Vec<Vec<Row>>>()
    };
    let nested = match worker_pool()? {
        Some(pool) => pool.install(compute),
        None => compute(),
    };
    let rows: Vec<Row> = nested.concat();

    // Context and continuity diagnostics at the deepest calibrated law.
    let n_max = *cfg.n_grid.last().expect("validated nonempty");
    let (context, diagnostics) =
        match calibrate_perron(family, schedule.rho(n_max), CALIBRATION_TOL) {
            Ok((law, _)) => {
                let imm = if cfg.theorem == 5 {
                    Some(ImmigrationLaw::unit(family.dim())?)
                } else {
                    None
                };
                match AsymptoticContext::build(&law, imm.as_ref()) {
                    Ok(ctx) => {
                        let echo = ContextEcho {
                            n: n_max,
                            rho: ctx.rho(),
                            rho_mu: ctx.rho_mu(),
                            q: ctx.q,
                            q_mu: ctx.q_mu,
                            lambda_dot_u: ctx.lambda_dot_u,
                        };
                        let diags = asymptotics::remark_checks(&ctx)
                            .into_iter()
                            .map(|c| Diagnostic {
                                name: c.name.to_string(),
                                computed: c.computed,
                                expected: c.expected,
                                rel_gap: c.rel_gap,
                                consistent: c.consistent,
                            })
                            .collect();
                        (Some(echo), diags)
                    }
                    Err(_) => (None, Vec::new()),
                }
            }
            Err(_) => (None, Vec::new()),
        };

    Ok(Report {
        config: cfg.clone(),
        context,
        rows,
        diagnostics,
    })
}

/// Hard gate for the `verify` exit code: every largest-n row must carry a
/// relative error at most `tolerance`. Cells that failed to produce both
/// values fail the gate; a failed optional Monte Carlo column does not.
pub fn gate(report: &Report, tolerance: f64) -> bool {
    let n_max = match report.config.n_grid.last() {
        Some(&n) => n,
        None => return false,
    };
    let last: Vec<&Row> = report.rows.iter().filter(|r| r.n == n_max).collect();
    !last.is_empty()
        && last
            .iter()
            .all(|r| matches!(r.rel_err, Some(e) if e <= tolerance))
}
