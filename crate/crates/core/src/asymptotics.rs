//! Closed-form asymptotics: scale functions, normalizing sequences, tail
//! estimates, and the limiting Laplace transforms the sweeps converge to.
//!
//! Everything is indexed by a near-critical regime. Writing `rho_n` for the
//! Perron root along a schedule, case `I1` keeps `n |1 - rho_n|` bounded
//! with limit `-ln r` for some `r` in `(0, 1]` (`r = 1` is the critical
//! line), while case `I2` lets it diverge. Each side of criticality gets
//! its own sign: `Super` means `rho` approaches 1 from above.
//!
//! The limit transforms come in four families, numbered the way reports
//! and the CLI refer to them:
//!
//! * 3: total progeny conditioned on survival at generation `n`,
//! * 4: total progeny conditioned on extinction exactly at `n`,
//! * 5: total progeny of the immigration process,
//! * 6: total progeny of the doomed process (killed at `m + n`, `m` large).

use alloc::vec::Vec;

use crate::error::{invalid, CoreResult};
use crate::math;
use crate::model::{ImmigrationLaw, OffspringLaw};
use crate::recursion::{extinction_mu, SolveOptions};
use crate::spectral::{spectral_at, SpectralData};

/// Direction from which the Perron root approaches 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Sub,
    Super,
}

/// Near-critical regime; see the module docs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// `n |1 - rho_n| -> -ln r`. Use `r = 1` (side ignored) for the
    /// exactly critical line.
    I1 { r: f64, side: Side },
    /// `n |1 - rho_n| -> infinity`.
    I2 { side: Side },
}

const CRITICAL_TOL: f64 = 1e-12;

fn check_regime(regime: Regime) -> CoreResult<()> {
    if let Regime::I1 { r, .. } = regime {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(alloc::format!("regime needs r in (0, 1], got {r}")));
        }
    }
    Ok(())
}

fn is_critical_line(regime: Regime) -> bool {
    matches!(regime, Regime::I1 { r, .. } if math::abs(r - 1.0) < CRITICAL_TOL)
}

// ---------------------------------------------------------------------------
// Scale functions.
//
// All three have removable or polar singularities at 0 where the closed
// forms lose relative accuracy like eps/x^2; below the cutoff they switch
// to series with matched error (~5e-11 worst case at the seam).

const SERIES_CUT: f64 = 0.02;

/// `h_+(x) = (em (emm - 2) + 2x (1 + em)) / em^3`, `em = e^x - 1`,
/// `emm = e^{-x} - 1`; equals 2/3 at 0.
pub fn h_plus(x: f64) -> f64 {
    if math::abs(x) <= SERIES_CUT {
        return 2.0 / 3.0
            + x * (-5.0 / 6.0 + x * (29.0 / 60.0 + x * (-31.0 / 180.0 + x * (43.0 / 1008.0))));
    }
    let em = math::exp_m1(x);
    let emm = math::exp_m1(-x);
    (em * (emm - 2.0) + 2.0 * x * (1.0 + em)) / (em * em * em)
}

/// `h_-(x) = (em^2 - 2 em + 2x) / em^3`; equals 2/3 at 0.
pub fn h_minus(x: f64) -> f64 {
    if math::abs(x) <= SERIES_CUT {
        return 2.0 / 3.0 + x * (-0.5 + x * (3.0 / 20.0 + x * (-1.0 / 60.0 + x * (-1.0 / 560.0))));
    }
    let em = math::exp_m1(x);
    (em * em - 2.0 * em + 2.0 * x) / (em * em * em)
}

/// `h(x) = (x (2 + em) + 2 em) / em^3`, with a double pole `4/x^2` at 0.
pub fn h_plain(x: f64) -> f64 {
    if x == 0.0 {
        return f64::INFINITY;
    }
    if math::abs(x) <= SERIES_CUT {
        return 4.0 / (x * x) - 4.0 / x
            + 11.0 / 6.0
            + x * (-0.5 + x * (1.0 / 12.0 + x * (-1.0 / 180.0)));
    }
    let em = math::exp_m1(x);
    (x * (2.0 + em) + 2.0 * em) / (em * em * em)
}

/// Squared argument of `d_+` minus one: `4y / ((1-r)^2 h_+(ln r))`.
fn d_arg(y: f64, r: f64, scale: f64, four: f64) -> f64 {
    four * y / ((1.0 - r) * (1.0 - r) * scale)
}

pub fn d_plus(y: f64, r: f64) -> f64 {
    math::sqrt(1.0 + d_arg(y, r, h_plus(math::ln(r)), 4.0))
}

pub fn d_minus(y: f64, r: f64) -> f64 {
    math::sqrt(1.0 + d_arg(y, r, h_minus(math::ln(r)), 4.0))
}

pub fn d_plain(y: f64, r: f64) -> f64 {
    math::sqrt(1.0 + d_arg(y, r, h_plain(math::ln(r)), 2.0))
}

/// `z_+(r, y) = sqrt(1 + 4 q y / (1/r - 1 + ln r))`.
pub fn z_plus(q: f64, r: f64, y: f64) -> f64 {
    math::sqrt(1.0 + 4.0 * q * y / (1.0 / r - 1.0 + math::ln(r)))
}

/// `z_-(r, y) = sqrt(1 + 4 q y / (r - 1 - ln r))`.
pub fn z_minus(q: f64, r: f64, y: f64) -> f64 {
    math::sqrt(1.0 + 4.0 * q * y / (r - 1.0 - math::ln(r)))
}

pub fn i_plus(x: f64) -> f64 {
    math::exp(x)
}

pub fn i_minus(_x: f64) -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// Context.

/// Spectral and quadratic data for one law, evaluated at 1 and at the
/// extinction point `mu`, plus the immigration projection when present.
/// Normalizations follow the spectral module: `sum u = 1`, `v'u = 1`;
/// every formula below is invariant under a common rescaling of `(u, v)`
/// because `Q` is built from the same pair.
#[derive(Clone, Debug)]
pub struct AsymptoticContext {
    pub spectral: SpectralData,
    pub spectral_mu: SpectralData,
    pub mu: Vec<f64>,
    /// `Q = v' B[u, u] / 2` at `s = 1`.
    pub q: f64,
    /// Same at `s = mu`; coincides with `q` whenever `rho <= 1`.
    pub q_mu: f64,
    pub lambda: Option<Vec<f64>>,
    /// `lambda' u` with `u` taken at 1.
    pub lambda_dot_u: Option<f64>,
}

impl AsymptoticContext {
    pub fn build(law: &OffspringLaw, imm: Option<&ImmigrationLaw>) -> CoreResult<Self> {
        let ones = alloc::vec![1.0; law.dim()];
        let spectral = spectral_at(law, &ones)?;
        let mu = extinction_mu(law, SolveOptions::default())?.value;
        let spectral_mu = spectral_at(law, &mu)?;
        if spectral_mu.rho > 1.0 + 1e-9 {
            return Err(invalid(alloc::format!(
                "Perron root at mu is {}, expected at most 1",
                spectral_mu.rho
            )));
        }
        let q = law.weighted_q(&spectral.v, &ones, &spectral.u)?;
        let q_mu = law.weighted_q(&spectral_mu.v, &mu, &spectral_mu.u)?;
        if q <= 0.0 {
            return Err(invalid("degenerate law: Q = 0 (no branching)"));
        }
        let (lambda, lambda_dot_u) = match imm {
            Some(imm) => {
                if imm.dim() != law.dim() {
                    return Err(invalid("immigration dimension does not match law"));
                }
                let lambda = imm.lambda();
                let dot = lambda.iter().zip(&spectral.u).map(|(a, b)| a * b).sum();
                (Some(lambda), Some(dot))
            }
            None => (None, None),
        };
        Ok(AsymptoticContext {
            spectral,
            spectral_mu,
            mu,
            q,
            q_mu,
            lambda,
            lambda_dot_u,
        })
    }

    pub fn rho(&self) -> f64 {
        self.spectral.rho
    }

    pub fn rho_mu(&self) -> f64 {
        self.spectral_mu.rho
    }

    /// `theta_n = n ln rho_mu`.
    pub fn theta(&self, n: u32) -> f64 {
        n as f64 * math::ln(self.spectral_mu.rho)
    }
}

// ---------------------------------------------------------------------------
// Elementary sequences.

#[derive(Clone, Copy, Debug)]
pub struct BasicQuantities {
    pub theta_n: f64,
    /// `pi_n = sum_{j=1}^n rho^{j-2}`; 0 at `n = 0`.
    pub pi_n: f64,
    /// `psi_n(x) = rho^n v'x / (1 + pi_n Q v'x)`.
    pub psi_n: f64,
}

pub fn basic_quantities(
    ctx: &AsymptoticContext,
    n: u32,
    arg: &[f64],
) -> CoreResult<BasicQuantities> {
    if arg.len() != ctx.mu.len() {
        return Err(invalid("basic_quantities: argument dimension mismatch"));
    }
    let rho = ctx.spectral.rho;
    let mut pi_n = 0.0;
    let mut term = 1.0 / rho;
    for _ in 0..n {
        pi_n += term;
        term *= rho;
    }
    let vdot: f64 = ctx.spectral.v.iter().zip(arg).map(|(a, b)| a * b).sum();
    let psi_n = math::powu(rho, n as u64) * vdot / (1.0 + pi_n * ctx.q * vdot);
    Ok(BasicQuantities {
        theta_n: ctx.theta(n),
        pi_n,
        psi_n,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct WV {
    pub w: f64,
    pub v: f64,
}

/// `W = 4 Q(mu) v_mu'(1-s) / (1 - rho_mu)^2` and `V = sqrt(1 + W)`.
pub fn wv(ctx: &AsymptoticContext, s: &[f64]) -> CoreResult<WV> {
    if s.len() != ctx.mu.len() {
        return Err(invalid("wv: dimension mismatch"));
    }
    let rho_mu = ctx.spectral_mu.rho;
    if rho_mu >= 1.0 - 1e-9 {
        return Err(invalid("W is undefined at criticality (rho_mu = 1)"));
    }
    let vdot: f64 = ctx
        .spectral_mu
        .v
        .iter()
        .zip(s)
        .map(|(v, s)| v * (1.0 - s))
        .sum();
    let w = 4.0 * ctx.q_mu * vdot / ((1.0 - rho_mu) * (1.0 - rho_mu));
    Ok(WV {
        w,
        v: math::sqrt(1.0 + w),
    })
}

/// `kappa(s) = 1 + u (rho (vs)'u - 1)/(2 (vs)'u Q) (sqrt(1 + 4 (vs)'u Q
/// v'(1-s) / (rho (vs)'u - 1)^2) - 1)`, per starting type. Supercritical
/// laws only.
pub fn kappa(ctx: &AsymptoticContext, s: &[f64]) -> CoreResult<Vec<f64>> {
    if s.len() != ctx.mu.len() {
        return Err(invalid("kappa: dimension mismatch"));
    }
    let rho = ctx.spectral.rho;
    if rho <= 1.0 {
        return Err(invalid("kappa needs a supercritical law (rho > 1)"));
    }
    let u = &ctx.spectral.u;
    let v = &ctx.spectral.v;
    let a: f64 = v.iter().zip(s).zip(u).map(|((v, s), u)| v * s * u).sum();
    let lead = rho * a - 1.0;
    if math::abs(lead) < 1e-12 {
        return Err(invalid("kappa: rho (vs)'u = 1"));
    }
    let vdot: f64 = v.iter().zip(s).map(|(v, s)| v * (1.0 - s)).sum();
    let rad = math::sqrt(1.0 + 4.0 * a * ctx.q * vdot / (lead * lead));
    let scale = lead / (2.0 * a * ctx.q) * (rad - 1.0);
    Ok(u.iter().map(|&uk| 1.0 + uk * scale).collect())
}

// ---------------------------------------------------------------------------
// Normalizing sequences.

/// Which of the four normalizations to evaluate; the index matches the
/// limit-transform family it feeds (1 -> 3, 2 -> 4, 3 -> 5, 4 -> 6).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizerKind {
    M1,
    M2,
    M3,
    M4,
}

/// Scalar normalizer times `v_mu`, componentwise. `rho`-based branches use
/// quantities at 1, `rho_mu`-based branches the ones at `mu`; along the
/// sweeps both agree in the limit.
pub fn normalizer(
    ctx: &AsymptoticContext,
    kind: NormalizerKind,
    regime: Regime,
    n: u32,
) -> CoreResult<Vec<f64>> {
    check_regime(regime)?;
    if n == 0 {
        return Err(invalid("normalizer needs n >= 1"));
    }
    let nf = n as f64;
    let rho = ctx.spectral.rho;
    let rho_mu = ctx.spectral_mu.rho;
    let theta = ctx.theta(n);
    // 1 - rho_mu^n without cancellation.
    let one_minus_rmn = -math::exp_m1(theta);
    let gap_mu = 1.0 - rho_mu;
    let gap = 1.0 - rho;
    let off_line = |what: &str| -> CoreResult<()> {
        if math::abs(gap_mu) < CRITICAL_TOL {
            Err(invalid(alloc::format!(
                "{what} needs rho_mu away from 1; use the r = 1 branch"
            )))
        } else {
            Ok(())
        }
    };
    let scalar = if is_critical_line(regime) {
        match kind {
            NormalizerKind::M1 => 2.0 * ctx.q_mu * nf * nf / 3.0,
            NormalizerKind::M2 => ctx.q_mu * nf * nf / 3.0,
            NormalizerKind::M3 | NormalizerKind::M4 => nf * nf / 2.0,
        }
    } else {
        match (kind, regime) {
            (NormalizerKind::M1, Regime::I1 { side, .. }) => {
                off_line("m1 with r < 1")?;
                let scale = match side {
                    Side::Super => h_plus(theta),
                    Side::Sub => h_minus(theta),
                };
                ctx.q_mu * one_minus_rmn * one_minus_rmn * scale / (gap_mu * gap_mu)
            }
            (NormalizerKind::M1, Regime::I2 { side: Side::Sub }) => 2.0 * ctx.q * nf / gap,
            (NormalizerKind::M1, Regime::I2 { side: Side::Super }) => {
                ctx.q * math::powu(rho, n as u64) / (gap * gap)
            }
            (NormalizerKind::M2, Regime::I1 { .. }) => {
                off_line("m2 with r < 1")?;
                2.0 * ctx.q_mu * one_minus_rmn * one_minus_rmn * h_plain(theta) / (gap_mu * gap_mu)
            }
            (NormalizerKind::M2, Regime::I2 { .. }) => 2.0 * ctx.q_mu * nf / gap_mu,
            (
                NormalizerKind::M3,
                Regime::I1 {
                    side: Side::Sub, ..
                },
            ) => {
                off_line("m3 with r < 1")?;
                (math::exp_m1(theta) + nf * gap_mu) / (gap_mu * gap_mu)
            }
            (
                NormalizerKind::M3,
                Regime::I1 {
                    side: Side::Super, ..
                },
            ) => {
                off_line("m3 with r < 1")?;
                (math::exp_m1(-theta) - nf * gap_mu) / (gap_mu * gap_mu)
            }
            (NormalizerKind::M3, Regime::I2 { side: Side::Sub }) => nf / gap,
            (NormalizerKind::M3, Regime::I2 { side: Side::Super }) => {
                math::powu(rho, n as u64) / (gap * gap)
            }
            (NormalizerKind::M4, Regime::I1 { .. }) => {
                off_line("m4 with r < 1")?;
                (math::exp_m1(theta) + nf * gap_mu) / (gap_mu * gap_mu)
            }
            (NormalizerKind::M4, Regime::I2 { side: Side::Sub }) => nf / gap,
            (NormalizerKind::M4, Regime::I2 { side: Side::Super }) => {
                return Err(invalid("m4 has no supercritical I2 case"));
            }
        }
    };
    Ok(ctx.spectral_mu.v.iter().map(|&vk| scalar * vk).collect())
}

// ---------------------------------------------------------------------------
// Tail estimates.

/// Leading-order `P(Z_n > 0 | Z_0 = e_m)` per starting type.
pub fn tail_survival(ctx: &AsymptoticContext, regime: Regime, n: u32) -> CoreResult<Vec<f64>> {
    check_regime(regime)?;
    if n == 0 {
        return Err(invalid("tail_survival needs n >= 1"));
    }
    match regime {
        Regime::I1 { side, .. } => {
            let rho_mu = ctx.spectral_mu.rho;
            let u = &ctx.spectral_mu.u;
            if math::abs(1.0 - rho_mu) < CRITICAL_TOL {
                let scale = 1.0 / (ctx.q_mu * n as f64);
                return Ok(u.iter().map(|&uk| scale * uk).collect());
            }
            let theta = ctx.theta(n);
            let envelope = match side {
                Side::Sub => i_plus(theta),
                Side::Super => i_minus(theta),
            };
            let scale = (1.0 - rho_mu) * envelope / (ctx.q_mu * -math::exp_m1(theta));
            Ok(u.iter().map(|&uk| scale * uk).collect())
        }
        Regime::I2 { side: Side::Sub } => {
            let rho = ctx.spectral.rho;
            let scale = (1.0 - rho) * math::powu(rho, n as u64) / ctx.q;
            Ok(ctx.spectral.u.iter().map(|&uk| scale * uk).collect())
        }
        // The case formula carries (1 - rho); with rho > 1 the magnitude
        // is what survives to the limit, so take it absolutely.
        Regime::I2 { side: Side::Super } => {
            let scale = math::abs(1.0 - ctx.spectral.rho) / ctx.q;
            Ok(ctx.spectral.u.iter().map(|&uk| scale * uk).collect())
        }
    }
}

/// Leading-order `P(N = n | Z_0 = e_m)` per starting type, `N` the
/// extinction generation.
pub fn tail_extinction_time(
    ctx: &AsymptoticContext,
    regime: Regime,
    n: u32,
) -> CoreResult<Vec<f64>> {
    check_regime(regime)?;
    if n == 0 {
        return Err(invalid("tail_extinction_time needs n >= 1"));
    }
    let rho_mu = ctx.spectral_mu.rho;
    let u = &ctx.spectral_mu.u;
    let theta = ctx.theta(n);
    let scale = match regime {
        Regime::I1 { .. } => {
            if math::abs(1.0 - rho_mu) < CRITICAL_TOL {
                1.0 / (ctx.q_mu * (n as f64) * (n as f64))
            } else {
                let gap = 1.0 - rho_mu;
                let mass = math::exp_m1(theta);
                math::exp(theta) * gap * gap / (ctx.q_mu * mass * mass)
            }
        }
        Regime::I2 { .. } => {
            let gap = 1.0 - rho_mu;
            math::exp(theta) * gap * gap / ctx.q_mu
        }
    };
    Ok(u.iter().map(|&uk| scale * uk).collect())
}

// ---------------------------------------------------------------------------
// Limit transforms.

/// `sqrt(1 + a) - 1` without cancellation for small `a`.
fn sqrt1p_m1(a: f64) -> f64 {
    a / (1.0 + math::sqrt(1.0 + a))
}

fn g1(t: f64, r: f64, side: Side) -> f64 {
    let x = math::ln(r);
    match side {
        Side::Super => {
            let a = d_arg(t, r, h_plus(x), 4.0);
            let dm1 = sqrt1p_m1(a);
            let d = 1.0 + dm1;
            let rd = math::exp(d * x);
            2.0 * (1.0 - r) * rd * (1.0 + a) / ((1.0 - rd) * (dm1 + (d + 1.0) * rd))
        }
        Side::Sub => {
            let a = d_arg(t, r, h_minus(x), 4.0);
            let dm1 = sqrt1p_m1(a);
            let d = 1.0 + dm1;
            let rd = math::exp(d * x);
            2.0 * (1.0 - r) * rd * (1.0 + a) / (r * (1.0 - rd) * (d + 1.0 + dm1 * rd))
        }
    }
}

fn g2(t: f64, r: f64) -> f64 {
    let x = math::ln(r);
    let a = d_arg(t, r, h_plain(x), 2.0);
    let d = 1.0 + sqrt1p_m1(a);
    let rd = math::exp(d * x);
    (1.0 - r) * (1.0 - r) * rd * (1.0 + a) / (r * (1.0 - rd) * (1.0 - rd))
}

/// The bracket the immigration and doomed limits are powers of. The `Sub`
/// side has `|w| > 1`, so it runs on the reciprocal form, which also
/// removes the pole at `t = 0`.
fn psi_bracket(q: f64, t: f64, r: f64, side: Side) -> f64 {
    let x = math::ln(r);
    match side {
        Side::Super => {
            let a = 4.0 * q * t / (1.0 / r - 1.0 + x);
            let z = math::sqrt(1.0 + a);
            let w = sqrt1p_m1(a) / (z + 1.0);
            let half = math::exp(0.5 * z * x);
            (half + w / half) / ((1.0 + w) * math::sqrt(r))
        }
        Side::Sub => {
            let a = 4.0 * q * t / (r - 1.0 - x);
            let z = math::sqrt(1.0 + a);
            let winv = sqrt1p_m1(a) / (z + 1.0);
            let half = math::exp(0.5 * z * x);
            math::sqrt(r) * (winv * half + 1.0 / half) / (winv + 1.0)
        }
    }
}

/// The limiting Laplace-transform value for one of the four families at
/// aggregate argument `T` (the per-type arguments summed).
pub fn limit_transform(
    ctx: &AsymptoticContext,
    theorem: u8,
    regime: Regime,
    t: f64,
) -> CoreResult<f64> {
    check_regime(regime)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("limit_transform needs T >= 0"));
    }
    let critical = is_critical_line(regime);
    let value = match theorem {
        3 => match regime {
            Regime::I1 { .. } if critical => {
                if t == 0.0 {
                    return Ok(1.0);
                }
                let c = math::sqrt(6.0 * t);
                c / math::sinh(c)
            }
            Regime::I1 { r, side } => {
                if t == 0.0 {
                    return Ok(1.0);
                }
                g1(t, r, side)
            }
            Regime::I2 { side: Side::Sub } => math::exp(-t),
            Regime::I2 { side: Side::Super } => 1.0 / (1.0 + t),
        },
        4 => match regime {
            Regime::I1 { .. } if critical => {
                if t == 0.0 {
                    return Ok(1.0);
                }
                let c = math::sinh(math::sqrt(3.0 * t));
                3.0 * t / (c * c)
            }
            Regime::I1 { r, .. } => {
                if t == 0.0 {
                    return Ok(1.0);
                }
                g2(t, r)
            }
            Regime::I2 { .. } => math::exp(-t),
        },
        5 => {
            let lu = ctx
                .lambda_dot_u
                .ok_or_else(|| invalid("family 5 needs an immigration law in the context"))?;
            match regime {
                Regime::I1 { .. } if critical => {
                    math::powf(math::cosh(math::sqrt(2.0 * ctx.q * t)), -lu / ctx.q)
                }
                Regime::I1 { r, side } => math::powf(psi_bracket(ctx.q, t, r, side), -lu / ctx.q),
                Regime::I2 { side: Side::Sub } => math::exp(-lu * t),
                Regime::I2 { side: Side::Super } => math::powf(1.0 + ctx.q * t, -lu / ctx.q),
            }
        }
        6 => match regime {
            Regime::I1 { .. } if critical => {
                let c = math::cosh(math::sqrt(2.0 * ctx.q_mu * t));
                1.0 / (c * c)
            }
            Regime::I1 { r, side: Side::Sub } => {
                let b = psi_bracket(ctx.q_mu, t, r, Side::Sub);
                1.0 / (b * b)
            }
            Regime::I1 {
                side: Side::Super, ..
            }
            | Regime::I2 { side: Side::Super } => {
                return Err(invalid(
                    "family 6 has no direct supercritical case; pass the associated subcritical law",
                ));
            }
            Regime::I2 { side: Side::Sub } => math::exp(-2.0 * ctx.q_mu * t),
        },
        other => {
            return Err(invalid(alloc::format!(
                "unknown limit family {other}; expected 3..=6"
            )));
        }
    };
    Ok(value)
}

// ---------------------------------------------------------------------------
// Continuity diagnostics.
//
// Evaluated-as-printed limits of the r < 1 formulas, compared against the
// stated edge cases. These are recorded, never hard-asserted: one of them
// (family 4 at r -> 1) genuinely disagrees with the printed edge formula,
// because (1-r)^2 h(ln r) -> 4 keeps d(T, r) bounded.

/// One continuity probe: `computed` is the r < 1 formula pushed toward the
/// edge (extrapolated in 1/|ln r| for the r -> 0 probes), `expected` the
/// stated limit.
#[derive(Clone, Debug)]
pub struct RemarkCheck {
    pub name: &'static str,
    pub computed: f64,
    pub expected: f64,
    pub rel_gap: f64,
    pub consistent: bool,
}

const REMARK_TOL: f64 = 0.05;

fn remark(name: &'static str, computed: f64, expected: f64) -> RemarkCheck {
    let rel_gap = math::abs(computed - expected) / math::abs(expected);
    RemarkCheck {
        name,
        computed,
        expected,
        rel_gap,
        consistent: rel_gap < REMARK_TOL,
    }
}

/// Toward r = 0 the formulas converge like 1/|ln r|; two probes and a
/// linear extrapolation in that variable give a usable limit estimate.
fn edge_toward_zero(f: impl Fn(f64) -> f64) -> f64 {
    let g1 = f(1e-6);
    let g2 = f(1e-12);
    2.0 * g2 - g1
}

/// Runs all continuity probes at `T = 1`. Family-5 probes require an
/// immigration projection in the context and are skipped otherwise.
pub fn remark_checks(ctx: &AsymptoticContext) -> Vec<RemarkCheck> {
    let t = 1.0;
    let r1 = 1.0 - 1e-4;
    let mut out = alloc::vec![
        remark(
            "survival limit, super, r -> 1",
            g1(t, r1, Side::Super),
            math::sqrt(6.0 * t) / math::sinh(math::sqrt(6.0 * t)),
        ),
        remark(
            "survival limit, sub, r -> 1",
            g1(t, r1, Side::Sub),
            math::sqrt(6.0 * t) / math::sinh(math::sqrt(6.0 * t)),
        ),
        remark(
            "survival limit, super, r -> 0",
            edge_toward_zero(|r| g1(t, r, Side::Super)),
            1.0 / (1.0 + t),
        ),
        remark(
            "survival limit, sub, r -> 0",
            edge_toward_zero(|r| g1(t, r, Side::Sub)),
            math::exp(-t),
        ),
        remark("extinction-time limit, r -> 1", g2(t, r1), {
            let c = math::sinh(math::sqrt(3.0 * t));
            3.0 * t / (c * c)
        }),
        remark(
            "extinction-time limit, r -> 0",
            edge_toward_zero(|r| g2(t, r)),
            math::exp(-t),
        ),
        remark(
            "doomed limit, r -> 1",
            {
                let b = psi_bracket(ctx.q_mu, t, r1, Side::Sub);
                1.0 / (b * b)
            },
            {
                let c = math::cosh(math::sqrt(2.0 * ctx.q_mu * t));
                1.0 / (c * c)
            },
        ),
    ];
    if let Some(lu) = ctx.lambda_dot_u {
        let q = ctx.q;
        out.push(remark(
            "immigration limit, super, r -> 0",
            edge_toward_zero(|r| math::powf(psi_bracket(q, t, r, Side::Super), -lu / q)),
            math::powf(1.0 + q * t, -lu / q),
        ));
        out.push(remark(
            "immigration limit, sub, r -> 0",
            edge_toward_zero(|r| math::powf(psi_bracket(q, t, r, Side::Sub), -lu / q)),
            math::exp(-lu * t),
        ));
        out.push(remark(
            "immigration limit, sub, r -> 1",
            math::powf(psi_bracket(q, t, r1, Side::Sub), -lu / q),
            math::powf(math::cosh(math::sqrt(2.0 * q * t)), -lu / q),
        ));
    }
    out
}
