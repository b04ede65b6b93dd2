//! One-knob law families for near-critical sweeps.
//!
//! A sweep needs a law at each grid point with a prescribed Perron root
//! rho_n, so a family maps a scalar knob to a law and calibration inverts
//! that map. Bisection against the computed root keeps the interface
//! honest for families without a closed-form rho.

use anyhow::{bail, Result};
use progeny_core::model::pair_law;
use progeny_core::spectral::spectral_at;
use progeny_core::OffspringLaw;

pub const CALIBRATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// d = 1, no offspring or two with probability `p` each way;
    /// rho = 2p, so the knob covers rho in (0, 2).
    Binary,
    /// d = 2: type 1 begets one of each or nothing; type 2 begets two of
    /// type 1 with the knob probability. Critical at knob 0.5.
    Pair,
}

impl Family {
    pub fn parse(name: &str) -> Result<Family> {
        match name {
            "binary" => Ok(Family::Binary),
            "pair" => Ok(Family::Pair),
            other => bail!("unknown family {other:?}; expected binary or pair"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Binary => "binary",
            Family::Pair => "pair",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::Binary => 1,
            Family::Pair => 2,
        }
    }

    pub fn instantiate(&self, knob: f64) -> Result<OffspringLaw> {
        let law = match self {
            Family::Binary => OffspringLaw::binary(knob),
            Family::Pair => pair_law(knob),
        };
        Ok(law?)
    }

    fn knob_bracket(&self) -> (f64, f64) {
        match self {
            Family::Binary => (1e-6, 1.0 - 1e-6),
            Family::Pair => (1e-6, 1.0 - 1e-6),
        }
    }
}

fn rho_of(family: Family, knob: f64) -> Result<f64> {
    let law = family.instantiate(knob)?;
    let ones = vec![1.0; law.dim()];
    Ok(spectral_at(&law, &ones)?.rho)
}

/// Law from `family` whose Perron root is `target_rho` within `tol`,
/// found by bisection on the knob. Also returns the knob.
pub fn calibrate_perron(family: Family, target_rho: f64, tol: f64) -> Result<(OffspringLaw, f64)> {
    let (mut lo, mut hi) = family.knob_bracket();
    let rho_lo = rho_of(family, lo)?;
    let rho_hi = rho_of(family, hi)?;
    if !(rho_lo <= target_rho && target_rho <= rho_hi) {
        bail!("target rho {target_rho} outside family range [{rho_lo}, {rho_hi}]");
    }
    // The families' roots are increasing in the knob.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rho = rho_of(family, mid)?;
        if (rho - target_rho).abs() <= tol {
            return Ok((family.instantiate(mid)?, mid));
        }
        if rho < target_rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * mid {
            break;
        }
    }
    let knob = 0.5 * (lo + hi);
    let rho = rho_of(family, knob)?;
    if (rho - target_rho).abs() <= tol.max(1e-11) {
        return Ok((family.instantiate(knob)?, knob));
    }
    bail!("calibration stalled at rho {rho}, target {target_rho}")
}
