//! Perron root and eigenvectors of nonnegative primitive matrices.
//!
//! Two-sided power iteration with a Rayleigh quotient: `u` picks up the
//! right eigenvector, `v` the left one, and the quotient `v'Mu / v'u`
//! converges at the square of the spectral gap. Normalization follows the
//! convention used everywhere downstream: `sum_k u_k = 1`, then `v'u = 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, CoreError, CoreResult};
use crate::math;
use crate::model::OffspringLaw;

/// Iteration cap for the power method.
pub const POWER_ITERATION_CAP: u64 = 100_000;
/// Successive Rayleigh quotients must agree to this before stopping.
pub const RHO_TOL: f64 = 1e-13;
/// Residual bound `max(|Mu - rho u|, |M'v - rho v|) <= RESIDUAL_TOL * max(1, rho)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Perron root with right (`u`) and left (`v`) eigenvectors, normalized to
/// `sum u = 1` and `v'u = 1`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub rho: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: u64,
    pub residual: f64,
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn mat_t_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut out = vec![0.0; n];
    for (i, row) in m.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            out[j] += a * x[i];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate(m: &[Vec<f64>]) -> CoreResult<usize> {
    let d = m.len();
    if d == 0 {
        return Err(invalid("matrix is empty"));
    }
    for row in m {
        if row.len() != d {
            return Err(invalid("matrix is not square"));
        }
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("matrix entries must be finite and nonnegative"));
        }
    }
    Ok(d)
}

/// True when some power of the pattern of `m` up to `2 d^2` is strictly
/// positive.
pub fn is_primitive(m: &[Vec<f64>]) -> CoreResult<bool> {
    let d = validate(m)?;
    let pattern: Vec<Vec<bool>> = m
        .iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect();
    let mut power = pattern.clone();
    let bound = 2 * (d * d) as u32;
    for _ in 0..bound {
        if power.iter().flatten().all(|&b| b) {
            return Ok(true);
        }
        let mut next = vec![vec![false; d]; d];
        for i in 0..d {
            for k in 0..d {
                if power[i][k] {
                    for j in 0..d {
                        if pattern[k][j] {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        if next == power {
            return Ok(false);
        }
        power = next;
    }
    Ok(power.iter().flatten().all(|&b| b))
}

/// Perron triple of a primitive nonnegative matrix.
pub fn perron(m: &[Vec<f64>]) -> CoreResult<SpectralData> {
    let d = validate(m)?;
    if !is_primitive(m)? {
        return Err(invalid(
            "matrix is not primitive (no power up to 2 d^2 is strictly positive)",
        ));
    }
    let mut u = vec![1.0 / d as f64; d];
    let mut v = vec![1.0 / d as f64; d];
    let mut rho_prev = f64::NAN;
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        let mu = mat_vec(m, &u);
        let mv = mat_t_vec(m, &v);
        let rho = dot(&v, &mu) / dot(&v, &u);
        let su: f64 = mu.iter().sum();
        let sv: f64 = mv.iter().sum();
        if su <= 0.0 || sv <= 0.0 || !rho.is_finite() {
            return Err(CoreError::NumericalFailure(alloc::format!(
                "power iteration degenerated at step {iterations}"
            )));
        }
        u = mu.iter().map(|x| x / su).collect();
        v = mv.iter().map(|x| x / sv).collect();

        let ru = residual(m, &u, rho, false);
        let rv = residual(m, &v, rho, true);
        let res = math::max(ru, rv);
        let scale = math::max(1.0, rho);
        if math::abs(rho - rho_prev) < RHO_TOL && res < RESIDUAL_TOL * scale {
            let vu = dot(&v, &u);
            if vu <= 0.0 {
                return Err(CoreError::NumericalFailure(alloc::format!(
                    "left/right eigenvectors are not compatible (v'u = {vu})"
                )));
            }
            let v = v.iter().map(|x| x / vu).collect();
            return Ok(SpectralData {
                rho,
                u,
                v,
                iterations,
                residual: res,
            });
        }
        if iterations >= POWER_ITERATION_CAP {
            return Err(CoreError::NoConvergence {
                what: "power iteration",
                iterations,
                defect: math::abs(rho - rho_prev),
            });
        }
        rho_prev = rho;
    }
}

fn residual(m: &[Vec<f64>], x: &[f64], rho: f64, transpose: bool) -> f64 {
    let mx = if transpose {
        mat_t_vec(m, x)
    } else {
        mat_vec(m, x)
    };
    mx.iter()
        .zip(x)
        .map(|(a, b)| math::abs(a - rho * b))
        .fold(0.0, math::max)
}

/// Spectral data of the mean matrix `M(s)`; `s` must keep the matrix
/// primitive (strictly positive coordinates in practice).
pub fn spectral_at(law: &OffspringLaw, s: &[f64]) -> CoreResult<SpectralData> {
    perron(&law.mean_matrix(s)?)
}

/// Max entrywise relative deviation of `(M / rho)^n` from the rank-one limit
/// `u v'`. Decays like the spectral gap to the n-th power for primitive
/// matrices.
pub fn power_convergence_diag(m: &[Vec<f64>], data: &SpectralData, n: u32) -> CoreResult<f64> {
    let d = validate(m)?;
    if data.u.len() != d || data.v.len() != d {
        return Err(invalid("spectral data does not match matrix dimension"));
    }
    let mut x: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..n {
        let mut next = vec![vec![0.0; d]; d];
        for i in 0..d {
            for k in 0..d {
                let aik = x[i][k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    next[i][j] += aik * m[k][j];
                }
            }
        }
        for row in &mut next {
            for val in row.iter_mut() {
                *val /= data.rho;
            }
        }
        x = next;
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let limit = data.u[i] * data.v[j];
            if limit <= 0.0 {
                return Err(CoreError::NumericalFailure(alloc::format!(
                    "rank-one limit vanishes at ({i}, {j})"
                )));
            }
            worst = math::max(worst, math::abs(x[i][j] - limit) / limit);
        }
    }
    Ok(worst)
}
