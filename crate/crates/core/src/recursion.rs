//! Exact generating-function recursions for populations and total progeny.
//!
//! With `f` the offspring generating function and `s` a point in `[0, 1]^d`,
//! the module iterates (all products componentwise)
//!
//! ```text
//! f_0 = s,  f_{n+1} = f(f_n)                 population transform
//! t_0 = s,  t_{n+1} = s f(t_n)               total progeny transform
//! h_0 = 0,  h_{n+1} = s f(h_n)               progeny restricted to {Z_n = 0}
//! ```
//!
//! so `t_n - h_n` is the progeny transform restricted to survival at `n` and
//! `h_n - h_{n-1}` the one restricted to extinction exactly at `n`. Note the
//! indicator convention: `h_n(1) = f_n(0)` is the probability of being
//! extinct *at* generation `n`, and the extinct-exactly-at transform pairs
//! `h_n - h_{n-1}` with the mass `f_n(0) - f_{n-1}(0)`.
//!
//! Everything here runs in plain `f64` and differences final values, which
//! is fine at moderate depth; the [`crate::compensated`] module carries
//! differences through the recursion instead and should be preferred for
//! deep near-critical sweeps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, numerical, CoreError, CoreResult};
use crate::math;
use crate::model::{ImmigrationLaw, OffspringLaw};

/// One step of the coupled recursions at a fixed evaluation point.
#[derive(Clone, Debug)]
pub struct ProgenyStep {
    pub n: u32,
    /// `f_n(s)` per starting type.
    pub f: Vec<f64>,
    /// `t_n(s)` per starting type.
    pub t: Vec<f64>,
    /// `h_n(s)` per starting type.
    pub h: Vec<f64>,
    /// `1 - f_n(0)` per starting type.
    pub survival: Vec<f64>,
}

/// Options for the Picard fixed-point solvers.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iterations: u64,
    /// Aitken delta-squared acceleration, applied componentwise every third
    /// step when it reduces the defect.
    pub aitken: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-13,
            max_iterations: 10_000_000,
            aitken: false,
        }
    }
}

/// Converged fixed point with iteration count and final defect
/// `max_k |g(x)_k - x_k|`.
#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub value: Vec<f64>,
    pub iterations: u64,
    pub defect: f64,
}

fn check_unit_box(s: &[f64], dim: usize, what: &str) -> CoreResult<()> {
    if s.len() != dim {
        return Err(invalid(alloc::format!(
            "{what}: point length {} does not match dimension {dim}",
            s.len()
        )));
    }
    if s.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid(alloc::format!("{what}: point leaves [0, 1]^d")));
    }
    Ok(())
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Population transforms `f_0(s), ..., f_n(s)`.
pub fn iterate_f(law: &OffspringLaw, s: &[f64], n: u32) -> CoreResult<Vec<Vec<f64>>> {
    check_unit_box(s, law.dim(), "iterate_f")?;
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(s.to_vec());
    for _ in 0..n {
        let next = law.eval(out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// The coupled `f_n`, `t_n`, `h_n` and survival sequences for `n = 0..=n`.
pub fn progeny_sequences(law: &OffspringLaw, s: &[f64], n: u32) -> CoreResult<Vec<ProgenyStep>> {
    check_unit_box(s, law.dim(), "progeny_sequences")?;
    let dim = law.dim();
    let zero = vec![0.0; dim];
    let mut f = s.to_vec();
    let mut t = s.to_vec();
    let mut h = zero.clone();
    let mut f_at_zero = zero;
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(ProgenyStep {
        n: 0,
        f: f.clone(),
        t: t.clone(),
        h: h.clone(),
        survival: vec![1.0; dim],
    });
    for step in 1..=n {
        f = law.eval(&f)?;
        t = hadamard(s, &law.eval(&t)?);
        h = hadamard(s, &law.eval(&h)?);
        f_at_zero = law.eval(&f_at_zero)?;
        out.push(ProgenyStep {
            n: step,
            f: f.clone(),
            t: t.clone(),
            h: h.clone(),
            survival: f_at_zero.iter().map(|x| 1.0 - x).collect(),
        });
    }
    Ok(out)
}

fn picard<G>(map: G, dim: usize, opts: SolveOptions, what: &'static str) -> CoreResult<FixedPoint>
where
    G: Fn(&[f64]) -> CoreResult<Vec<f64>>,
{
    let mut x = vec![0.0; dim];
    let mut history: [Vec<f64>; 2] = [x.clone(), x.clone()];
    let mut iterations = 0u64;
    loop {
        let next = map(&x)?;
        let defect = next
            .iter()
            .zip(&x)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, math::max);
        iterations += 1;
        if defect <= opts.tol {
            return Ok(FixedPoint {
                value: next,
                iterations,
                defect,
            });
        }
        if iterations >= opts.max_iterations {
            return Err(CoreError::NoConvergence {
                what,
                iterations,
                defect,
            });
        }
        if opts.aitken && iterations % 3 == 0 {
            let mut accel = next.clone();
            for k in 0..dim {
                let x0 = history[0][k];
                let x1 = history[1][k];
                let x2 = next[k];
                let den = (x2 - x1) - (x1 - x0);
                if math::abs(den) > 1e-300 {
                    let cand = x2 - (x2 - x1) * (x2 - x1) / den;
                    if (0.0..=1.0).contains(&cand) {
                        accel[k] = cand;
                    }
                }
            }
            // Keep the accelerated point only if it actually helps.
            let accel_defect = map(&accel)?
                .iter()
                .zip(&accel)
                .map(|(a, b)| math::abs(a - b))
                .fold(0.0, math::max);
            if accel_defect < defect {
                history[0] = history[1].clone();
                history[1] = next;
                x = accel;
                continue;
            }
        }
        history[0] = history[1].clone();
        history[1] = next.clone();
        x = next;
    }
}

/// Extinction probability vector: the smallest root of `f(mu) = mu` in
/// `[0, 1]^d`. Exactly one componentwise when the Perron root is at most 1;
/// otherwise found by Picard iteration from 0 (geometric convergence in the
/// supercritical case).
pub fn extinction_mu(law: &OffspringLaw, opts: SolveOptions) -> CoreResult<FixedPoint> {
    let ones = vec![1.0; law.dim()];
    let spectral = crate::spectral::spectral_at(law, &ones)?;
    if spectral.rho <= 1.0 + 1e-12 {
        return Ok(FixedPoint {
            value: ones,
            iterations: 0,
            defect: 0.0,
        });
    }
    picard(|x| law.eval(x), law.dim(), opts, "extinction probability")
}

/// Smallest root of `h = s f(h)` in `[0, 1]^d`, the transform of total
/// progeny over the whole (extinct) tree.
pub fn solve_hstar(law: &OffspringLaw, s: &[f64], opts: SolveOptions) -> CoreResult<FixedPoint> {
    check_unit_box(s, law.dim(), "solve_hstar")?;
    picard(
        |x| Ok(hadamard(s, &law.eval(x)?)),
        law.dim(),
        opts,
        "progeny fixed point",
    )
}

/// `E(s^{Y_n} | Z_n > 0)` per starting type: `(t_n - h_n) / (1 - f_n(0))`.
pub fn conditional_lt_survival(law: &OffspringLaw, s: &[f64], n: u32) -> CoreResult<Vec<f64>> {
    let steps = progeny_sequences(law, s, n)?;
    let last = steps.last().expect("nonempty");
    last.t
        .iter()
        .zip(&last.h)
        .zip(&last.survival)
        .map(|((t, h), surv)| {
            if *surv <= 0.0 {
                Err(numerical(alloc::format!(
                    "survival probability vanished at n = {n}"
                )))
            } else {
                Ok((t - h) / surv)
            }
        })
        .collect()
}

/// `E(s^{Y_n} | N = n)` per starting type, where `N` is the extinction
/// generation: `(h_n - h_{n-1})(s) / (f_n(0) - f_{n-1}(0))`, `n >= 1`.
pub fn conditional_lt_extinction(law: &OffspringLaw, s: &[f64], n: u32) -> CoreResult<Vec<f64>> {
    if n == 0 {
        return Err(invalid("extinction at n requires n >= 1"));
    }
    let steps = progeny_sequences(law, s, n)?;
    let prev = &steps[n as usize - 1];
    let last = &steps[n as usize];
    (0..law.dim())
        .map(|k| {
            let mass = prev.survival[k] - last.survival[k];
            if mass <= 0.0 {
                Err(numerical(alloc::format!(
                    "extinction-at-{n} mass vanished for type {k}"
                )))
            } else {
                Ok((last.h[k] - prev.h[k]) / mass)
            }
        })
        .collect()
}

/// Transform of the immigration process total progeny through generation
/// `n - 1`: `prod_{k=0}^{n-1} B(t_k(s))`. The product over `n` factors
/// covers `Y^0_{n-1}`; callers comparing against simulation at generation
/// `g` should pass `n = g + 1`.
pub fn immigration_lt(
    law: &OffspringLaw,
    imm: &ImmigrationLaw,
    s: &[f64],
    n: u32,
) -> CoreResult<f64> {
    if imm.dim() != law.dim() {
        return Err(invalid("immigration dimension does not match law"));
    }
    check_unit_box(s, law.dim(), "immigration_lt")?;
    let mut t = s.to_vec();
    let mut product = 1.0;
    for _ in 0..n {
        product *= imm.eval(&t)?;
        t = hadamard(s, &law.eval(&t)?);
    }
    Ok(product)
}

/// Joint transform `P_n(x, s) = E(x^{Z_n} s^{Y_n})` per starting type:
/// `P_0 = x s`, `P_{n,j} = s_j f_j(P_{n-1})`.
pub fn joint_pgf(law: &OffspringLaw, x: &[f64], s: &[f64], n: u32) -> CoreResult<Vec<f64>> {
    check_unit_box(s, law.dim(), "joint_pgf s")?;
    check_unit_box(x, law.dim(), "joint_pgf x")?;
    let mut p = hadamard(x, s);
    for _ in 0..n {
        p = hadamard(s, &law.eval(&p)?);
    }
    Ok(p)
}

/// The doomed-process ratio at finite `m`:
/// `(P_n(mu, s) - P_n(f_m(0), s)) / (mu - f_{m+n}(0))` per starting type.
/// This is the exact quantity whose `m`-limit Theorem-style results
/// describe; plain differencing, so keep `m + n` moderate or use the
/// compensated variant.
pub fn doomed_lt(law: &OffspringLaw, s: &[f64], n: u32, m: u32) -> CoreResult<Vec<f64>> {
    check_unit_box(s, law.dim(), "doomed_lt")?;
    let mu = extinction_mu(law, SolveOptions::default())?.value;
    let zeros = vec![0.0; law.dim()];
    let f_seq = iterate_f(law, &zeros, n + m)?;
    let upper = joint_pgf(law, &mu, s, n)?;
    let lower = joint_pgf(law, &f_seq[m as usize], s, n)?;
    (0..law.dim())
        .map(|j| {
            let den = mu[j] - f_seq[(m + n) as usize][j];
            if math::abs(den) < 1e-280 {
                Err(numerical(alloc::format!(
                    "doomed denominator vanished (m = {m}, n = {n})"
                )))
            } else {
                Ok((upper[j] - lower[j]) / den)
            }
        })
        .collect()
}

/// Expected total progeny through generation `n` per starting type:
/// `sum_{j=0}^{n} M(1)^j 1` (row sums of mean-matrix powers).
pub fn progeny_mean(law: &OffspringLaw, n: u32) -> CoreResult<Vec<f64>> {
    let ones = vec![1.0; law.dim()];
    let m = law.mean_matrix(&ones)?;
    let mut w = ones.clone();
    let mut acc = ones;
    for _ in 1..=n {
        w = m
            .iter()
            .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        for (a, b) in acc.iter_mut().zip(&w) {
            *a += b;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;
    use crate::model::pair_law;

    fn binary_critical() -> OffspringLaw {
        OffspringLaw::binary(0.5).unwrap()
    }

    #[test]
    fn population_iterates_are_exact_dyadics() {
        let law = binary_critical();
        let f = iterate_f(&law, &[0.0], 3).unwrap();
        assert_eq!(f[1][0], 0.5);
        assert_eq!(f[2][0], 0.625);
        assert_eq!(f[3][0], 0.6953125);
    }

    #[test]
    fn progeny_steps_match_hand_values() {
        let law = binary_critical();
        let steps = progeny_sequences(&law, &[0.9], 2).unwrap();
        assert!(abs(steps[1].t[0] - 0.8145) < 1e-15);
        assert!(abs(steps[1].h[0] - 0.45) < 1e-15);
        assert!(abs(steps[2].h[0] - 0.541125) < 1e-15);
        assert!(abs(steps[1].survival[0] - 0.5) < 1e-15);
        assert!(abs(steps[2].survival[0] - 0.375) < 1e-15);
    }

    #[test]
    fn sequences_are_monotone_and_ordered() {
        let law = pair_law(0.5).unwrap();
        let steps = progeny_sequences(&law, &[0.9, 0.85], 40).unwrap();
        for w in steps.windows(2) {
            for k in 0..2 {
                assert!(w[1].t[k] <= w[0].t[k] + 1e-15);
                assert!(w[1].h[k] >= w[0].h[k] - 1e-15);
                assert!(w[1].survival[k] <= w[0].survival[k] + 1e-15);
                assert!(w[1].h[k] <= w[1].t[k]);
            }
        }
    }

    #[test]
    fn h_at_one_equals_extinction_probability() {
        let law = pair_law(0.5).unwrap();
        let steps = progeny_sequences(&law, &[1.0, 1.0], 12).unwrap();
        let zeros = iterate_f(&law, &[0.0, 0.0], 12).unwrap();
        for (step, fz) in steps.iter().zip(&zeros) {
            for k in 0..2 {
                assert_eq!(step.h[k], fz[k]);
            }
        }
    }

    #[test]
    fn conditional_transforms_binary_critical() {
        let law = binary_critical();
        // Survive generation 1 <=> two children, so Y_1 = 3 exactly.
        let surv = conditional_lt_survival(&law, &[0.9], 1).unwrap();
        assert!(abs(surv[0] - 0.729) < 1e-15);
        // Die at 1 <=> no children, Y_1 = 1.
        let ext1 = conditional_lt_extinction(&law, &[0.9], 1).unwrap();
        assert!(abs(ext1[0] - 0.9) < 1e-15);
        // Die at 2 <=> two children, both childless: Y_2 = 3.
        let ext2 = conditional_lt_extinction(&law, &[0.9], 2).unwrap();
        assert!(abs(ext2[0] - 0.729) < 1e-12);
    }

    #[test]
    fn immigration_product_matches_hand_value() {
        let law = binary_critical();
        let imm = ImmigrationLaw::unit(1).unwrap();
        assert!(abs(immigration_lt(&law, &imm, &[0.9], 0).unwrap() - 1.0) < 1e-15);
        assert!(abs(immigration_lt(&law, &imm, &[0.9], 1).unwrap() - 0.9) < 1e-15);
        // B(t_0) B(t_1) = 0.9 * 0.8145
        assert!(abs(immigration_lt(&law, &imm, &[0.9], 2).unwrap() - 0.73305) < 1e-15);
    }

    #[test]
    fn joint_pgf_identities() {
        let law = binary_critical();
        let p = joint_pgf(&law, &[0.5], &[1.0], 1).unwrap();
        assert!(abs(p[0] - 0.625) < 1e-15);

        // x = 1 collapses the joint transform onto t_n.
        let pair = pair_law(0.5).unwrap();
        let s = [0.8, 0.9];
        let joint = joint_pgf(&pair, &[1.0, 1.0], &s, 7).unwrap();
        let steps = progeny_sequences(&pair, &s, 7).unwrap();
        for k in 0..2 {
            assert!(abs(joint[k] - steps[7].t[k]) < 1e-14);
        }
        // s = 1 collapses it onto f_n evaluated at x.
        let joint_f = joint_pgf(&pair, &[0.3, 0.6], &[1.0, 1.0], 5).unwrap();
        let f_seq = iterate_f(&pair, &[0.3, 0.6], 5).unwrap();
        for k in 0..2 {
            assert!(abs(joint_f[k] - f_seq[5][k]) < 1e-14);
        }
    }

    #[test]
    fn doomed_ratio_limits() {
        let law = OffspringLaw::binary(0.45).unwrap();
        // n = 0 gives s for every m.
        let l0 = doomed_lt(&law, &[0.9], 0, 50).unwrap();
        assert!(abs(l0[0] - 0.9) < 1e-12);
        // n = 1: the m-limit is s^2 f'(s) / rho = 0.81 * 0.81 / 0.9.
        let l1 = doomed_lt(&law, &[0.9], 1, 200).unwrap();
        assert!(abs(l1[0] - 0.729) < 1e-6, "l1 = {}", l1[0]);
    }

    #[test]
    fn extinction_probability_cases() {
        let sub = OffspringLaw::binary(0.45).unwrap();
        let mu = extinction_mu(&sub, SolveOptions::default()).unwrap();
        assert_eq!(mu.value[0], 1.0);
        assert_eq!(mu.iterations, 0);

        let sup = OffspringLaw::binary(0.6).unwrap();
        let mu = extinction_mu(&sup, SolveOptions::default()).unwrap();
        assert!(abs(mu.value[0] - 2.0 / 3.0) < 1e-9, "mu = {}", mu.value[0]);
    }

    #[test]
    fn hstar_matches_quadratic_formula() {
        // s f(h) = h with f(h) = q + p h^2 has smallest root
        // (1 - sqrt(1 - 4 p q s^2)) / (2 p s).
        let cases = [(0.5, 0.9), (0.6, 0.99), (0.45, 0.95)];
        for &(p, s) in &cases {
            let law = OffspringLaw::binary(p).unwrap();
            let q = 1.0 - p;
            let disc = 1.0 - 4.0 * p * q * s * s;
            let expect = (1.0 - disc.sqrt()) / (2.0 * p * s);
            let got = solve_hstar(&law, &[s], SolveOptions::default()).unwrap();
            assert!(
                abs(got.value[0] - expect) < 1e-9,
                "p={p} s={s}: {} vs {expect}",
                got.value[0]
            );
        }
        // Frozen value for the critical law at s = 0.9.
        let law = binary_critical();
        let got = solve_hstar(&law, &[0.9], SolveOptions::default()).unwrap();
        assert!(abs(got.value[0] - 0.626789006) < 1e-9);
    }

    #[test]
    fn aitken_agrees_and_saves_iterations() {
        let law = binary_critical();
        let slow = solve_hstar(&law, &[0.999], SolveOptions::default()).unwrap();
        let fast = solve_hstar(
            &law,
            &[0.999],
            SolveOptions {
                aitken: true,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert!(abs(slow.value[0] - fast.value[0]) < 1e-10);
        assert!(fast.iterations < slow.iterations);
    }

    #[test]
    fn progeny_mean_examples() {
        let sup = OffspringLaw::binary(0.6).unwrap();
        let m2 = progeny_mean(&sup, 2).unwrap();
        assert!(abs(m2[0] - 3.64) < 1e-12);

        let crit = binary_critical();
        assert!(abs(progeny_mean(&crit, 4).unwrap()[0] - 5.0) < 1e-12);

        let pair = pair_law(0.5).unwrap();
        let m1 = progeny_mean(&pair, 1).unwrap();
        assert!(abs(m1[0] - 2.0) < 1e-12 && abs(m1[1] - 2.0) < 1e-12);
    }

    #[test]
    fn progeny_mean_matches_transform_slope() {
        // d/ds t_n(s) at s = 1 is the expected progeny; one-sided difference.
        let law = OffspringLaw::binary(0.48).unwrap();
        let n = 6;
        let exact = progeny_mean(&law, n).unwrap()[0];
        let h = 1e-7;
        let lo = progeny_sequences(&law, &[1.0 - h], n).unwrap()[n as usize].t[0];
        let slope = (1.0 - lo) / h;
        assert!(abs(slope - exact) / exact < 1e-4, "{slope} vs {exact}");
    }

    #[test]
    fn domain_validation() {
        let law = binary_critical();
        assert!(matches!(
            progeny_sequences(&law, &[1.2], 3),
            Err(CoreError::InvalidArgument(_))
        ));
        assert!(matches!(
            conditional_lt_extinction(&law, &[0.9], 0),
            Err(CoreError::InvalidArgument(_))
        ));
    }
}
