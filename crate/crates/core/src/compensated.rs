//! Cancellation-free difference streams for the progeny recursions.
//!
//! Deep near-critical sweeps need quantities like `1 - f_n(0)` or
//! `t_n - h_n` at depths where the two sides agree to hundreds of bits;
//! differencing final iterates then returns pure rounding noise (or an
//! exact zero once `f_n(0)` rounds to 1). The cure is to never subtract:
//! given `delta = a - b` carried from the previous step, the polynomial
//! difference
//!
//! ```text
//! f_k(a) - f_k(b) = sum_i p_k(i) (a^i - b^i)
//! ```
//!
//! telescopes across coordinates, and each univariate factor splits as
//! `a^m - b^m = (a - b) sum_t a^t b^{m-1-t}`. Every term is a product of
//! nonnegative well-scaled factors times one exact `delta`, so the stream
//! stays fully accurate down to the underflow threshold.
//!
//! The functions are generic over [`Scalar`] so the same streams run in
//! `f64` or in double-double ([`crate::wide::Dd`]) for cross-checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, numerical, CoreError, CoreResult};
use crate::model::{ImmigrationLaw, MultiIndex, OffspringLaw};
use crate::wide::Scalar;

fn lift<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::from_f64(x)).collect()
}

fn ones<S: Scalar>(dim: usize) -> Vec<S> {
    vec![S::ONE; dim]
}

fn had<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

/// Denominator sanity: once a stream drops into the subnormal range it
/// stops contracting (rounding pins it at the smallest subnormals) and
/// ratios against it are garbage, so treat that as underflow.
fn drained<S: Scalar>(x: S) -> bool {
    !(x.to_f64() >= f64::MIN_POSITIVE)
}

/// `sum_{t=0}^{m-1} a^t b^{m-1-t}`, the cofactor of `a - b` in `a^m - b^m`.
fn pow_diff_sum<S: Scalar>(a: S, b: S, m: u32) -> S {
    let mut acc = S::ZERO;
    let mut apow = S::ONE;
    for t in 0..m {
        acc = acc + apow * b.powi(m - 1 - t);
        apow = apow * a;
    }
    acc
}

/// One support entry's contribution to a polynomial difference: the
/// monomial `mass * (upper^index - lower^index)` in telescoped form.
fn monomial_diff<S: Scalar>(
    index: &MultiIndex,
    mass: f64,
    upper: &[S],
    lower: &[S],
    delta: &[S],
    suffix: &mut [S],
) -> S {
    let dim = upper.len();
    // suffix[l] = prod_{j > l} upper_j^{i_j}
    suffix[dim] = S::ONE;
    for l in (0..dim).rev() {
        suffix[l] = suffix[l + 1] * upper[l].powi(index[l]);
    }
    let mass = S::from_f64(mass);
    let mut acc = S::ZERO;
    let mut prefix = S::ONE;
    for l in 0..dim {
        if index[l] > 0 {
            let core = pow_diff_sum(upper[l], lower[l], index[l]);
            acc = acc + mass * prefix * suffix[l + 1] * delta[l] * core;
        }
        prefix = prefix * lower[l].powi(index[l]);
    }
    acc
}

/// `f(upper) - f(lower)` evaluated without subtraction. `delta` must be the
/// true difference `upper - lower` carried by the caller; it is the only
/// signed quantity in the expansion, and it is authoritative: `upper` and
/// `lower` themselves only feed well-scaled cofactors, so they may be
/// rounded proxies of points that `f64` cannot separate.
pub fn pgf_diff<S: Scalar>(law: &OffspringLaw, upper: &[S], lower: &[S], delta: &[S]) -> Vec<S> {
    let dim = law.dim();
    let mut suffix = vec![S::ONE; dim + 1];
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut acc = S::ZERO;
        for (index, mass) in law.support(k) {
            acc = acc + monomial_diff(index, mass, upper, lower, delta, &mut suffix);
        }
        out.push(acc);
    }
    out
}

/// `B(upper) - B(lower)` for an immigration law, same contract as
/// [`pgf_diff`].
pub fn imm_diff<S: Scalar>(imm: &ImmigrationLaw, upper: &[S], lower: &[S], delta: &[S]) -> S {
    let dim = imm.dim();
    let mut suffix = vec![S::ONE; dim + 1];
    let mut acc = S::ZERO;
    for (index, mass) in imm.support() {
        acc = acc + monomial_diff(index, mass, upper, lower, delta, &mut suffix);
    }
    acc
}

/// Survival probabilities `1 - f_k(0)` for `k = 0..=n`, each entry a
/// per-type vector, carried as a difference stream against `f_k(1) = 1`.
pub fn survival_sequence<S: Scalar>(law: &OffspringLaw, n: u32) -> Vec<Vec<S>> {
    let dim = law.dim();
    let one = ones::<S>(dim);
    let mut at_zero = vec![S::ZERO; dim];
    let mut surv = one.clone();
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(surv.clone());
    for _ in 0..n {
        surv = pgf_diff(law, &one, &at_zero, &surv);
        at_zero = law.eval_in(&at_zero);
        out.push(surv.clone());
    }
    out
}

/// `E(s^{Y_n} | Z_n > 0)` per starting type with both the numerator
/// `t_n - h_n` and the denominator `1 - f_n(0)` run as difference streams.
pub fn conditional_lt_survival<S: Scalar>(
    law: &OffspringLaw,
    s: &[f64],
    n: u32,
) -> CoreResult<Vec<S>> {
    law.check_point(s, "compensated survival transform")?;
    let eps: Vec<f64> = s.iter().map(|&x| 1.0 - x).collect();
    conditional_lt_survival_eps(law, &eps, n)
}

/// [`conditional_lt_survival`] with the evaluation point given as
/// `eps = 1 - s`. This is the primary entry for near-critical sweeps:
/// supercritical normalizers grow like `rho^n`, pushing `eps` below the
/// resolution of `1 - eps` in `f64`, so `s` itself must never be formed.
/// The `t` track runs on `tau_n = 1 - t_n(s)`, via
/// `tau_{n+1} = eps + (1 - eps)(f(1) - f(t_n))` with the parenthesized
/// difference telescoped; rounded `1 - tau` proxies only feed cofactors.
pub fn conditional_lt_survival_eps<S: Scalar>(
    law: &OffspringLaw,
    eps: &[f64],
    n: u32,
) -> CoreResult<Vec<S>> {
    check_eps(law, eps)?;
    let dim = law.dim();
    let one = ones::<S>(dim);
    let eps_s = lift::<S>(eps);
    let stilde: Vec<S> = eps_s.iter().map(|&e| S::ONE - e).collect();
    let mut tau = eps_s.clone();
    let mut tvals = co(&tau);
    let mut h = vec![S::ZERO; dim];
    // gap_0 = t_0 - h_0 = 1 - eps; the value may round, the stream keeps
    // relative accuracy from here on.
    let mut gap = stilde.clone();
    let mut at_zero = vec![S::ZERO; dim];
    let mut surv = one.clone();
    for _ in 0..n {
        let drift = pgf_diff(law, &one, &tvals, &tau);
        gap = had(&stilde, &pgf_diff(law, &tvals, &h, &gap));
        h = had(&stilde, &law.eval_in(&h));
        for k in 0..dim {
            tau[k] = eps_s[k] + stilde[k] * drift[k];
        }
        tvals = co(&tau);
        surv = pgf_diff(law, &one, &at_zero, &surv);
        at_zero = law.eval_in(&at_zero);
    }
    gap.iter()
        .zip(&surv)
        .map(|(&num, &den)| {
            if drained(den) {
                Err(numerical(alloc::format!(
                    "survival stream underflowed at n = {n}"
                )))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

fn check_eps(law: &OffspringLaw, eps: &[f64]) -> CoreResult<()> {
    if eps.len() != law.dim() {
        return Err(invalid("eps dimension does not match law"));
    }
    if eps.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
        return Err(invalid("eps must lie in [0, 1] componentwise"));
    }
    Ok(())
}

/// Rounded proxies `1 - tau` for cofactor evaluation.
fn co<S: Scalar>(tau: &[S]) -> Vec<S> {
    tau.iter().map(|&t| S::ONE - t).collect()
}

/// `E(s^{Y0_{n-1}})` for the immigration process at `s = 1 - eps`, i.e.
/// the product of `B(t_k(s))` over `k = 0..n-1`, accumulated in log space
/// with the same `tau` track as [`conditional_lt_survival_eps`]. Callers
/// comparing against simulation at generation `g` pass `n = g + 1`.
pub fn immigration_lt_eps(
    law: &OffspringLaw,
    imm: &ImmigrationLaw,
    eps: &[f64],
    n: u32,
) -> CoreResult<f64> {
    check_eps(law, eps)?;
    if imm.dim() != law.dim() {
        return Err(invalid("immigration dimension does not match law"));
    }
    let dim = law.dim();
    let one = ones::<f64>(dim);
    let stilde: Vec<f64> = eps.iter().map(|&e| 1.0 - e).collect();
    let mut tau = eps.to_vec();
    let mut tvals = co(&tau);
    let mut log_phi = 0.0;
    for _ in 0..n {
        // 1 - B(t_k), telescoped; B is a p.g.f. so this sits in [0, 1].
        let beta = imm_diff(imm, &one, &tvals, &tau);
        log_phi += crate::math::ln_1p(-beta);
        let drift = pgf_diff(law, &one, &tvals, &tau);
        for k in 0..dim {
            tau[k] = eps[k] + stilde[k] * drift[k];
        }
        tvals = co(&tau);
    }
    Ok(crate::math::exp(log_phi))
}

/// Generation gap `h_n - h_{n-1}` at `s`, `n >= 1`, as a difference stream.
fn gap_sequence<S: Scalar>(law: &OffspringLaw, sv: &[S], n: u32) -> Vec<S> {
    let dim = law.dim();
    let mut h_prev = vec![S::ZERO; dim];
    let mut h_cur = had(sv, &law.eval_in(&h_prev));
    let mut gap = h_cur.clone();
    for _ in 1..n {
        gap = had(sv, &pgf_diff(law, &h_cur, &h_prev, &gap));
        h_prev = h_cur;
        h_cur = had(sv, &law.eval_in(&h_prev));
    }
    gap
}

/// `E(s^{Y_n} | N = n)` per starting type: the gap stream at `s` over the
/// gap stream at 1 (which is the extinction-at-`n` mass).
pub fn conditional_lt_extinction<S: Scalar>(
    law: &OffspringLaw,
    s: &[f64],
    n: u32,
) -> CoreResult<Vec<S>> {
    if n == 0 {
        return Err(invalid("extinction at n requires n >= 1"));
    }
    law.check_point(s, "compensated extinction transform")?;
    let num = gap_sequence(law, &lift::<S>(s), n);
    let den = gap_sequence(law, &ones::<S>(law.dim()), n);
    num.iter()
        .zip(&den)
        .map(|(&g, &m)| {
            if drained(m) {
                Err(numerical(alloc::format!(
                    "extinction-at-{n} mass underflowed"
                )))
            } else {
                Ok(g / m)
            }
        })
        .collect()
}

/// Doomed-process ratio `(P_n(mu, s) - P_n(f_m(0), s)) / (mu - f_{m+n}(0))`
/// for laws with `mu = 1` (Perron root at most 1), where both differences
/// run as streams. Supercritical laws should be passed through
/// [`crate::model::associated_subcritical`] first; the ratio is invariant
/// under that transform.
pub fn doomed_transform<S: Scalar>(
    law: &OffspringLaw,
    s: &[f64],
    n: u32,
    m: u32,
) -> CoreResult<Vec<S>> {
    law.check_point(s, "doomed transform")?;
    let dim = law.dim();
    let spectral = crate::spectral::spectral_at(law, &vec![1.0; dim])?;
    if spectral.rho > 1.0 + 1e-9 {
        return Err(invalid(
            "doomed transform needs mu = 1; pass the associated subcritical law",
        ));
    }
    let sv = lift::<S>(s);
    let survival = survival_sequence::<S>(law, m + n);
    let mut f_m = vec![S::ZERO; dim];
    for _ in 0..m {
        f_m = law.eval_in(&f_m);
    }
    let mut upper = sv.clone();
    let mut lower = had(&sv, &f_m);
    let mut diff = had(&sv, &survival[m as usize]);
    for _ in 0..n {
        diff = had(&sv, &pgf_diff(law, &upper, &lower, &diff));
        upper = had(&sv, &law.eval_in(&upper));
        lower = had(&sv, &law.eval_in(&lower));
    }
    diff.iter()
        .zip(&survival[(m + n) as usize])
        .map(|(&num, &den)| {
            if drained(den) {
                Err(numerical(alloc::format!(
                    "doomed denominator underflowed at m + n = {}",
                    m + n
                )))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

/// Result of the doomed-transform extrapolation in `m`.
#[derive(Clone, Debug)]
pub struct DoomedLimit {
    pub value: Vec<f64>,
    /// Final conditioning depth used.
    pub m: u32,
    /// Sup-norm change over the last doubling.
    pub defect: f64,
}

const DOOMED_M0: u32 = 64;
const DOOMED_M_CAP: u32 = 1 << 16;

/// `m -> infinity` limit of [`doomed_transform`], taken by doubling `m`
/// until the sup-norm change of the ratio drops below `tol`.
pub fn doomed_lt_limit(law: &OffspringLaw, s: &[f64], n: u32, tol: f64) -> CoreResult<DoomedLimit> {
    let mut m = DOOMED_M0;
    let mut prev = doomed_transform::<f64>(law, s, n, m)?;
    loop {
        m *= 2;
        let cur = doomed_transform::<f64>(law, s, n, m)?;
        let defect = cur
            .iter()
            .zip(&prev)
            .map(|(a, b)| crate::math::abs(a - b))
            .fold(0.0, crate::math::max);
        if defect < tol {
            return Ok(DoomedLimit {
                value: cur,
                m,
                defect,
            });
        }
        if m >= DOOMED_M_CAP {
            return Err(CoreError::NoConvergence {
                what: "doomed transform extrapolation",
                iterations: m as u64,
                defect,
            });
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;
    use crate::model::{associated_subcritical, pair_law};
    use crate::recursion;
    use crate::wide::Dd;

    #[test]
    fn pow_diff_cofactor() {
        let s = pow_diff_sum::<f64>(2.0, 3.0, 3);
        assert_eq!(s, 19.0); // 4 + 6 + 9
        assert_eq!((2.0 - 3.0) * s, 8.0 - 27.0);
        assert_eq!(pow_diff_sum::<f64>(0.5, 0.25, 1), 1.0);
        assert_eq!(pow_diff_sum::<f64>(0.5, 0.25, 0), 0.0);
    }

    #[test]
    fn pgf_diff_matches_plain_difference() {
        let law = pair_law(0.37).unwrap();
        let a = [0.9, 0.8];
        let b = [0.3, 0.4];
        let delta = [0.6, 0.4];
        let got = pgf_diff::<f64>(&law, &a, &b, &delta);
        let fa = law.eval(&a).unwrap();
        let fb = law.eval(&b).unwrap();
        for k in 0..2 {
            assert!(abs(got[k] - (fa[k] - fb[k])) < 1e-15, "type {k}");
        }
    }

    #[test]
    fn survival_stream_matches_plain_at_shallow_depth() {
        for law in [OffspringLaw::binary(0.5).unwrap(), pair_law(0.5).unwrap()] {
            let dim = law.dim();
            let stream = survival_sequence::<f64>(&law, 30);
            let plain = recursion::iterate_f(&law, &vec![0.0; dim], 30).unwrap();
            for (k, (s, f)) in stream.iter().zip(&plain).enumerate() {
                for j in 0..dim {
                    assert!(abs(s[j] - (1.0 - f[j])) < 1e-14, "step {k} type {j}");
                }
            }
        }
    }

    #[test]
    fn conditional_streams_match_plain_at_shallow_depth() {
        let law = pair_law(0.5).unwrap();
        let s = [0.9, 0.85];

        let surv = conditional_lt_survival::<f64>(&law, &s, 8).unwrap();
        let plain = recursion::conditional_lt_survival(&law, &s, 8).unwrap();
        for k in 0..2 {
            assert!(abs(surv[k] - plain[k]) < 1e-13);
        }

        let ext = conditional_lt_extinction::<f64>(&law, &s, 6).unwrap();
        let plain = recursion::conditional_lt_extinction(&law, &s, 6).unwrap();
        for k in 0..2 {
            assert!(abs(ext[k] - plain[k]) < 1e-13);
        }
    }

    #[test]
    fn extinction_gap_binary_hand_value() {
        let law = OffspringLaw::binary(0.5).unwrap();
        let got = conditional_lt_extinction::<f64>(&law, &[0.9], 2).unwrap();
        assert!(abs(got[0] - 0.729) < 1e-14);
    }

    #[test]
    fn immigration_stream_matches_plain() {
        let law = OffspringLaw::binary(0.5).unwrap();
        let imm = crate::model::ImmigrationLaw::unit(1).unwrap();
        for n in [1u32, 2, 8] {
            let plain = recursion::immigration_lt(&law, &imm, &[0.9], n).unwrap();
            let got = immigration_lt_eps(&law, &imm, &[1.0 - 0.9], n).unwrap();
            assert!(abs(got - plain) < 1e-13, "n = {n}: {got} vs {plain}");
        }
    }

    #[test]
    fn eps_stream_reaches_unrepresentable_transform_points() {
        // Supercritical i2 schedule at n = 1024: the normalizer grows like
        // rho^n, putting eps near 4e-17 where 1 - eps rounds to 1. The
        // conditioned transform must still land on the stated limits,
        // 1/(1+T) for survival conditioning and the immigration power law.
        use crate::asymptotics::{
            limit_transform, AsymptoticContext, NormalizerKind, Regime, Side,
        };
        let regime = Regime::I2 { side: Side::Super };
        let imm = crate::model::ImmigrationLaw::unit(1).unwrap();
        let t = 1.0;

        let run = |n: u32| -> (f64, f64, f64) {
            let rho = 1.0 + (n as f64).powf(-0.5);
            let law = OffspringLaw::binary(rho / 2.0).unwrap();
            let ctx = AsymptoticContext::build(&law, Some(&imm)).unwrap();
            let m1 = crate::asymptotics::normalizer(&ctx, NormalizerKind::M1, regime, n).unwrap();
            let eps_surv = -crate::math::exp_m1(-t / m1[0]);
            let surv = conditional_lt_survival_eps::<f64>(&law, &[eps_surv], n).unwrap()[0];

            let m3 = crate::asymptotics::normalizer(&ctx, NormalizerKind::M3, regime, n).unwrap();
            let eps = [-crate::math::exp_m1(-t / m3[0])];
            let phi = immigration_lt_eps(&law, &imm, &eps, n + 1).unwrap();
            (surv, phi, eps_surv)
        };

        // Limits taken at the critical endpoint of the schedule.
        let ctx =
            AsymptoticContext::build(&OffspringLaw::binary(0.5).unwrap(), Some(&imm)).unwrap();
        let surv_limit = limit_transform(&ctx, 3, regime, t).unwrap();
        assert!(abs(surv_limit - 0.5) < 1e-12);
        let phi_limit = limit_transform(&ctx, 5, regime, t).unwrap();
        assert!(abs(phi_limit - 4.0 / 9.0) < 1e-12);

        let (surv_256, phi_256, _) = run(256);
        let (surv_1024, phi_1024, eps_1024) = run(1024);
        assert!(1.0 - eps_1024 == 1.0, "eps should be below f64 resolution");
        let rel = |a: f64, b: f64| abs(a - b) / b;
        assert!(rel(surv_1024, surv_limit) < 0.1, "survival {surv_1024}");
        assert!(rel(surv_1024, surv_limit) < rel(surv_256, surv_limit));
        assert!(rel(phi_1024, phi_limit) < 0.1, "immigration {phi_1024}");
        assert!(rel(phi_1024, phi_limit) < rel(phi_256, phi_limit));
    }

    #[test]
    fn doomed_matches_plain_and_rejects_supercritical() {
        let law = OffspringLaw::binary(0.45).unwrap();
        let got = doomed_transform::<f64>(&law, &[0.9], 3, 16).unwrap();
        let plain = recursion::doomed_lt(&law, &[0.9], 3, 16).unwrap();
        assert!(abs(got[0] - plain[0]) < 1e-11);

        let sup = OffspringLaw::binary(0.6).unwrap();
        assert!(matches!(
            doomed_transform::<f64>(&sup, &[0.9], 2, 8),
            Err(CoreError::InvalidArgument(_))
        ));
        // The associated subcritical law restores the computation.
        let star = associated_subcritical(&sup, &[2.0 / 3.0]).unwrap();
        assert!(doomed_transform::<f64>(&star, &[0.9], 2, 8).is_ok());
    }

    #[test]
    fn doomed_extrapolation_converges() {
        let law = OffspringLaw::binary(0.45).unwrap();
        let limit = doomed_lt_limit(&law, &[0.9], 2, 1e-10).unwrap();
        assert!(limit.m >= 2 * DOOMED_M0);
        assert!(limit.defect < 1e-10);
        let deep = doomed_transform::<f64>(&law, &[0.9], 2, 1 << 12).unwrap();
        assert!(abs(limit.value[0] - deep[0]) < 1e-10);

        // Past m ~ 2^13 the survival stream for rho = 0.9 drops into the
        // subnormal floor; that must surface as an error, not a plateau.
        assert!(matches!(
            doomed_transform::<f64>(&law, &[0.9], 2, 1 << 13),
            Err(CoreError::NumericalFailure(_))
        ));
    }

    #[test]
    fn deep_subcritical_stream_survives_where_plain_dies() {
        // rho = 63/64: survival at n = 4096 sits around 1e-28, far below
        // the resolution of 1 - f_n(0) in f64. The plain recursion's
        // denominator plateaus one ulp under 1 and the ratio comes out as
        // rounding noise; the stream keeps full relative accuracy.
        let law = OffspringLaw::binary(0.4921875).unwrap();
        let stream = conditional_lt_survival::<f64>(&law, &[0.9995], 4096).unwrap();
        assert!(stream[0] > 0.0 && stream[0] < 1e-20, "got {}", stream[0]);

        let wide = conditional_lt_survival::<Dd>(&law, &[0.9995], 4096).unwrap();
        let rel = abs(stream[0] - wide[0].to_f64()) / wide[0].to_f64();
        assert!(rel < 1e-9, "rel = {rel}");

        match recursion::conditional_lt_survival(&law, &[0.9995], 4096) {
            Err(CoreError::NumericalFailure(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(v) => assert!(
                abs(v[0] - stream[0]) > 0.1,
                "plain recursion should be noise, got {}",
                v[0]
            ),
        }

        let surv = survival_sequence::<f64>(&law, 4096);
        let tail = surv[4096][0];
        assert!(tail > 0.0 && tail < 1e-20, "survival {tail}");
    }

    #[test]
    fn double_double_agrees_with_f64() {
        let law = OffspringLaw::binary(0.5).unwrap();
        let f = conditional_lt_survival::<f64>(&law, &[0.999], 512).unwrap();
        let d = conditional_lt_survival::<Dd>(&law, &[0.999], 512).unwrap();
        let rel = abs(f[0] - d[0].to_f64()) / d[0].to_f64();
        assert!(rel < 1e-10, "rel = {rel}");
    }
}
