//! Forward simulation of populations and total progeny, as an independent
//! check on the recursion engine.
//!
//! Randomness is counter-based: every decision reads one uniform keyed by
//! `(seed, path_id, generation, individual)` through a splitmix64-style
//! finalizer chain, so trajectories are reproducible under any work split
//! and workers need no shared state. Aggregation uses 64.64 fixed-point
//! integer sums, which makes merged results independent of chunk order
//! down to the last bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, numerical, CoreResult};
use crate::math;
use crate::model::{ImmigrationLaw, OffspringLaw};

/// Default per-generation population bound; paths that cross it are
/// reported as capped and left out of estimates.
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

/// Individual slot reserved for the per-generation immigration draw.
const IMMIGRATION_SLOT: u64 = u64::MAX;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The uniform in `[0, 1)` consumed by `individual` of `generation` on
/// path `path_id`.
pub fn unit_uniform(seed: u64, path_id: u64, generation: u32, individual: u64) -> f64 {
    let mut h = mix(seed ^ 0x243f_6a88_85a3_08d3);
    h = mix(h ^ path_id.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    h = mix(h ^ generation as u64);
    h = mix(h ^ individual);
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// One realized path: populations and cumulative progeny per type for
/// each generation, extinction time when the law runs without
/// immigration, and the generation at which the population cap was hit,
/// if any (later generations are then absent).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub populations: Vec<Vec<u64>>,
    pub progeny: Vec<Vec<u64>>,
    pub extinct_at: Option<u32>,
    pub capped_at: Option<u32>,
}

impl Trajectory {
    fn alive(&self, generation: u32) -> bool {
        self.populations[generation as usize].iter().any(|&z| z > 0)
    }
}

/// Runs one path for `n` generations. `start` gives `Z_0`; when omitted,
/// the immigration law supplies `Z_0 = H_0` (and must be present). With
/// immigration, each later generation adds a fresh arrival on top of the
/// offspring, and `extinct_at` stays unset since the population can
/// return from zero.
pub fn simulate_path(
    law: &OffspringLaw,
    imm: Option<&ImmigrationLaw>,
    start: Option<&[u32]>,
    n: u32,
    seed: u64,
    path_id: u64,
    cap: u64,
) -> CoreResult<Trajectory> {
    let dim = law.dim();
    if let Some(imm) = imm {
        if imm.dim() != dim {
            return Err(invalid("immigration dimension does not match law"));
        }
    }
    let z0: Vec<u64> = match (start, imm) {
        (Some(start), _) => {
            if start.len() != dim {
                return Err(invalid("start dimension does not match law"));
            }
            start.iter().map(|&c| c as u64).collect()
        }
        (None, Some(imm)) => {
            let draw = imm.sample(unit_uniform(seed, path_id, 0, IMMIGRATION_SLOT));
            draw.iter().map(|&c| c as u64).collect()
        }
        (None, None) => {
            return Err(invalid(
                "either a start state or an immigration law is needed",
            ));
        }
    };
    let mut traj = Trajectory {
        populations: Vec::with_capacity(n as usize + 1),
        progeny: Vec::with_capacity(n as usize + 1),
        extinct_at: None,
        capped_at: None,
    };
    traj.populations.push(z0.clone());
    traj.progeny.push(z0);
    if imm.is_none() && !traj.alive(0) {
        traj.extinct_at = Some(0);
    }
    for g in 1..=n {
        if traj.extinct_at.is_some() {
            // Dead without immigration: the remaining generations are 0.
            traj.populations.push(vec![0; dim]);
            let last = traj.progeny.last().expect("nonempty").clone();
            traj.progeny.push(last);
            continue;
        }
        let prev = traj.populations.last().expect("nonempty").clone();
        let mut next = vec![0u64; dim];
        let mut total = 0u64;
        let mut individual = 0u64;
        let mut over = false;
        'types: for k in 0..dim {
            for _ in 0..prev[k] {
                let u = unit_uniform(seed, path_id, g, individual);
                individual += 1;
                for (t, &count) in law.sample(k, u).iter().enumerate() {
                    next[t] += count as u64;
                    total += count as u64;
                }
                if total > cap {
                    over = true;
                    break 'types;
                }
            }
        }
        if let (Some(imm), false) = (imm, over) {
            let u = unit_uniform(seed, path_id, g, IMMIGRATION_SLOT);
            for (t, &count) in imm.sample(u).iter().enumerate() {
                next[t] += count as u64;
                total += count as u64;
            }
            over = total > cap;
        }
        if over {
            traj.capped_at = Some(g);
            break;
        }
        let mut progeny = traj.progeny.last().expect("nonempty").clone();
        for (y, z) in progeny.iter_mut().zip(&next) {
            *y += z;
        }
        traj.populations.push(next);
        traj.progeny.push(progeny);
        if imm.is_none() && !traj.alive(g) {
            traj.extinct_at = Some(g);
        }
    }
    Ok(traj)
}

/// Conditioning applied to the transform estimator, all relative to the
/// evaluation generation `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    None,
    SurvivalAtN,
    ExtinctExactlyAtN,
    /// Survival at `n + m`; the trailing window is simulated but not
    /// counted into the progeny.
    SurvivalAtNPlusM(u32),
}

/// Monte Carlo result.
#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub paths_used: u64,
    pub paths_accepted: u64,
    pub paths_capped: u64,
}

const FIXED_ONE: f64 = 18_446_744_073_709_551_616.0; // 2^64

/// Order-independent sample aggregator: weights in `[0, 1]` are rounded
/// to 64.64 fixed point once and then summed exactly, so merges commute
/// bit-for-bit.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    sum: u128,
    sum_sq: u128,
    used: u64,
    accepted: u64,
    capped: u64,
}

impl Accumulator {
    pub fn accept(&mut self, weight: f64) {
        self.used += 1;
        self.accepted += 1;
        self.sum += math::round(weight * FIXED_ONE) as u128;
        self.sum_sq += math::round(weight * weight * FIXED_ONE) as u128;
    }

    pub fn reject(&mut self) {
        self.used += 1;
    }

    pub fn capped(&mut self) {
        self.used += 1;
        self.capped += 1;
    }

    pub fn merge(mut self, other: Accumulator) -> Accumulator {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.used += other.used;
        self.accepted += other.accepted;
        self.capped += other.capped;
        self
    }

    pub fn into_estimate(self) -> CoreResult<Estimate> {
        if self.accepted == 0 {
            return Err(numerical("no accepted paths; estimate is degenerate"));
        }
        let count = self.accepted as f64;
        let mean = self.sum as f64 / FIXED_ONE / count;
        let mean_sq = self.sum_sq as f64 / FIXED_ONE / count;
        let variance = math::max(mean_sq - mean * mean, 0.0);
        Ok(Estimate {
            value: mean,
            stderr: math::sqrt(variance / count),
            paths_used: self.used,
            paths_accepted: self.accepted,
            paths_capped: self.capped,
        })
    }
}

fn check_transform_inputs(law: &OffspringLaw, s: &[f64]) -> CoreResult<()> {
    if s.len() != law.dim() {
        return Err(invalid("transform point dimension mismatch"));
    }
    if s.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid("transform point leaves [0, 1]^d"));
    }
    Ok(())
}

fn weight_at(s: &[f64], progeny: &[u64]) -> f64 {
    s.iter()
        .zip(progeny)
        .map(|(&sk, &yk)| math::powu(sk, yk))
        .fold(1.0, |a, b| a * b)
}

/// Accumulates `s^{Y_n}` over one contiguous block of path ids. Workers
/// may split the id space arbitrarily and merge the results.
///
/// With immigration and no explicit start, `n` counts arrival epochs and
/// the sample is `s^{Y_{n-1}}` over epochs `0..n`, matching the
/// transform-product convention of the recursion module.
pub fn accumulate_lt(
    law: &OffspringLaw,
    imm: Option<&ImmigrationLaw>,
    start: Option<&[u32]>,
    s: &[f64],
    n: u32,
    condition: Condition,
    seed: u64,
    path_ids: core::ops::Range<u64>,
    cap: u64,
) -> CoreResult<Accumulator> {
    check_transform_inputs(law, s)?;
    let immigration_epochs = imm.is_some() && start.is_none();
    if immigration_epochs && condition != Condition::None {
        return Err(invalid("immigration estimates are unconditional"));
    }
    if matches!(condition, Condition::ExtinctExactlyAtN) && n == 0 {
        return Err(invalid("extinction at n requires n >= 1"));
    }
    let eval_gen = if immigration_epochs {
        n.saturating_sub(1)
    } else {
        n
    };
    let horizon = match condition {
        Condition::SurvivalAtNPlusM(m) => eval_gen + m,
        _ => eval_gen,
    };
    let mut acc = Accumulator::default();
    for path_id in path_ids {
        let traj = simulate_path(law, imm, start, horizon, seed, path_id, cap)?;
        if traj.capped_at.is_some() {
            acc.capped();
            continue;
        }
        let accepted = match condition {
            Condition::None => true,
            Condition::SurvivalAtN => traj.alive(n),
            Condition::ExtinctExactlyAtN => !traj.alive(n) && traj.alive(n - 1),
            Condition::SurvivalAtNPlusM(m) => traj.alive(n + m),
        };
        if accepted {
            acc.accept(weight_at(s, &traj.progeny[eval_gen as usize]));
        } else {
            acc.reject();
        }
    }
    Ok(acc)
}

/// Sample mean of `s^{Y_n}` over accepted paths.
pub fn estimate_lt(
    law: &OffspringLaw,
    imm: Option<&ImmigrationLaw>,
    start: Option<&[u32]>,
    s: &[f64],
    n: u32,
    condition: Condition,
    paths: u64,
    seed: u64,
) -> CoreResult<Estimate> {
    if paths < 1000 {
        return Err(invalid("at least 1000 paths are needed"));
    }
    accumulate_lt(
        law,
        imm,
        start,
        s,
        n,
        condition,
        seed,
        0..paths,
        DEFAULT_POPULATION_CAP,
    )?
    .into_estimate()
}

/// Path events with frequency estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// `Z_n != 0`.
    Survival,
    /// Extinction exactly at `n`.
    ExtinctAt,
}

/// Accumulator form of [`estimate_event`], for worker-split path ranges.
pub fn accumulate_event(
    law: &OffspringLaw,
    start: &[u32],
    n: u32,
    event: Event,
    seed: u64,
    path_ids: core::ops::Range<u64>,
    cap: u64,
) -> CoreResult<Accumulator> {
    if event == Event::ExtinctAt && n == 0 {
        return Err(invalid("extinction at n requires n >= 1"));
    }
    let mut acc = Accumulator::default();
    for path_id in path_ids {
        let traj = simulate_path(law, None, Some(start), n, seed, path_id, cap)?;
        if traj.capped_at.is_some() {
            acc.capped();
            continue;
        }
        let hit = match event {
            Event::Survival => traj.alive(n),
            Event::ExtinctAt => !traj.alive(n) && traj.alive(n - 1),
        };
        // Indicator weights: the fixed-point mean and variance reduce to
        // the binomial frequency and p(1-p).
        acc.accept(if hit { 1.0 } else { 0.0 });
    }
    Ok(acc)
}

/// Frequency of a path event with binomial standard error.
pub fn estimate_event(
    law: &OffspringLaw,
    start: &[u32],
    n: u32,
    event: Event,
    paths: u64,
    seed: u64,
) -> CoreResult<Estimate> {
    if paths < 1000 {
        return Err(invalid("at least 1000 paths are needed"));
    }
    accumulate_event(law, start, n, event, seed, 0..paths, DEFAULT_POPULATION_CAP)?.into_estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::abs;
    use crate::model::pair_law;
    use crate::recursion;

    fn single_child_law() -> OffspringLaw {
        OffspringLaw::new(vec![vec![(vec![1], 1.0)]]).unwrap()
    }

    #[test]
    fn deterministic_line() {
        let law = single_child_law();
        let traj = simulate_path(&law, None, Some(&[1]), 5, 7, 0, 1000).unwrap();
        for g in 0..=5 {
            assert_eq!(traj.populations[g][0], 1);
        }
        assert_eq!(traj.progeny[5][0], 6);
        assert_eq!(traj.extinct_at, None);

        let est = estimate_event(&law, &[1], 4, Event::Survival, 1000, 3).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let law = pair_law(0.5).unwrap();
        let a = simulate_path(&law, None, Some(&[1, 1]), 20, 42, 9, 1 << 20).unwrap();
        let b = simulate_path(&law, None, Some(&[1, 1]), 20, 42, 9, 1 << 20).unwrap();
        assert_eq!(a.populations, b.populations);
        assert_eq!(a.progeny, b.progeny);

        let c = simulate_path(&law, None, Some(&[1, 1]), 20, 42, 10, 1 << 20).unwrap();
        assert_ne!(a.populations, c.populations);
    }

    #[test]
    fn progeny_is_cumulative_population() {
        let law = pair_law(0.4).unwrap();
        let traj = simulate_path(&law, None, Some(&[2, 1]), 15, 11, 3, 1 << 20).unwrap();
        let mut running = [0u64; 2];
        for (z, y) in traj.populations.iter().zip(&traj.progeny) {
            for k in 0..2 {
                running[k] += z[k];
                assert_eq!(running[k], y[k]);
            }
        }
    }

    #[test]
    fn extinction_marker_contract() {
        let law = OffspringLaw::binary(0.5).unwrap();
        for path_id in 0..200 {
            let traj = simulate_path(&law, None, Some(&[1]), 12, 5, path_id, 1 << 20).unwrap();
            if let Some(n) = traj.extinct_at {
                for g in n..=12 {
                    assert!(!traj.alive(g));
                }
                if n > 0 {
                    assert!(traj.alive(n - 1));
                }
            } else {
                assert!(traj.alive(12));
            }
        }
    }

    #[test]
    fn survival_frequency_matches_recursion() {
        let law = OffspringLaw::binary(0.5).unwrap();
        // P(Z_2 > 0) = 1 - f_2(0) = 0.375 exactly.
        let est = estimate_event(&law, &[1], 2, Event::Survival, 20_000, 2024).unwrap();
        assert!(est.stderr > 0.0);
        assert!(
            abs(est.value - 0.375) < 4.0 * est.stderr,
            "{} vs 0.375 (se {})",
            est.value,
            est.stderr
        );

        let est = estimate_event(&law, &[1], 1, Event::ExtinctAt, 20_000, 2025).unwrap();
        assert!(abs(est.value - 0.5) < 4.0 * est.stderr);
    }

    #[test]
    fn conditioned_transform_matches_recursion() {
        let law = OffspringLaw::binary(0.5).unwrap();
        // At n = 1 the conditional law is a point mass: every surviving
        // path has Y_1 = 3, so the estimator must return 0.9^3 with no
        // spread.
        let est = estimate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.9],
            1,
            Condition::SurvivalAtN,
            20_000,
            7,
        )
        .unwrap();
        assert!(abs(est.value - 0.729) < 1e-12);
        assert!(est.stderr < 1e-9);
        assert!(est.paths_accepted < est.paths_used);

        let exact = recursion::conditional_lt_survival(&law, &[0.9], 3).unwrap();
        let est = estimate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.9],
            3,
            Condition::SurvivalAtN,
            20_000,
            8,
        )
        .unwrap();
        assert!(est.stderr > 0.0);
        assert!(abs(est.value - exact[0]) < 4.0 * est.stderr);

        let exact = recursion::conditional_lt_extinction(&law, &[0.9], 3).unwrap();
        let est = estimate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.9],
            3,
            Condition::ExtinctExactlyAtN,
            20_000,
            9,
        )
        .unwrap();
        assert!(est.stderr > 0.0);
        assert!(abs(est.value - exact[0]) < 4.0 * est.stderr);
    }

    #[test]
    fn doomed_conditioning_matches_stream() {
        let law = OffspringLaw::binary(0.45).unwrap();
        let exact = crate::compensated::doomed_transform::<f64>(&law, &[0.9], 2, 30).unwrap();
        let est = estimate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.9],
            2,
            Condition::SurvivalAtNPlusM(30),
            200_000,
            31,
        )
        .unwrap();
        assert!(
            abs(est.value - exact[0]) < 4.0 * est.stderr,
            "{} vs {} (se {})",
            est.value,
            exact[0],
            est.stderr
        );
    }

    #[test]
    fn immigration_epochs_match_transform_product() {
        let law = OffspringLaw::binary(0.5).unwrap();
        let imm = ImmigrationLaw::unit(1).unwrap();
        let exact = recursion::immigration_lt(&law, &imm, &[0.9], 2).unwrap();
        assert!(abs(exact - 0.73305) < 1e-12);
        let est = estimate_lt(
            &law,
            Some(&imm),
            None,
            &[0.9],
            2,
            Condition::None,
            50_000,
            12,
        )
        .unwrap();
        assert!(abs(est.value - exact) < 4.0 * est.stderr);
    }

    #[test]
    fn transform_at_one_is_exact() {
        let law = pair_law(0.5).unwrap();
        let est = estimate_lt(
            &law,
            None,
            Some(&[1, 0]),
            &[1.0, 1.0],
            6,
            Condition::None,
            1000,
            1,
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn chunked_aggregation_is_order_independent() {
        let law = OffspringLaw::binary(0.5).unwrap();
        let run = |splits: &[(u64, u64)]| {
            splits
                .iter()
                .map(|&(a, b)| {
                    accumulate_lt(
                        &law,
                        None,
                        Some(&[1]),
                        &[0.9],
                        3,
                        Condition::SurvivalAtN,
                        99,
                        a..b,
                        1 << 20,
                    )
                    .unwrap()
                })
                .fold(Accumulator::default(), Accumulator::merge)
                .into_estimate()
                .unwrap()
        };
        let one = run(&[(0, 4000)]);
        let two = run(&[(2500, 4000), (0, 2500)]);
        let three = run(&[(1000, 1001), (1001, 4000), (0, 1000)]);
        assert_eq!(one.value.to_bits(), two.value.to_bits());
        assert_eq!(one.value.to_bits(), three.value.to_bits());
        assert_eq!(one.stderr.to_bits(), three.stderr.to_bits());
    }

    #[test]
    fn empirical_offspring_means_match_mean_matrix() {
        let draws = 100_000u64;
        for law in [OffspringLaw::binary(0.5).unwrap(), pair_law(0.5).unwrap()] {
            let dim = law.dim();
            let m = law.mean_matrix(&vec![1.0; dim]).unwrap();
            for k in 0..dim {
                let mut sums = vec![0.0f64; dim];
                let mut sq = vec![0.0f64; dim];
                for i in 0..draws {
                    let brood = law.sample(k, unit_uniform(500 + k as u64, i, 0, 0));
                    for t in 0..dim {
                        sums[t] += brood[t] as f64;
                        sq[t] += (brood[t] as f64) * (brood[t] as f64);
                    }
                }
                for t in 0..dim {
                    let mean = sums[t] / draws as f64;
                    let var = sq[t] / draws as f64 - mean * mean;
                    let se = math::sqrt(var / draws as f64);
                    assert!(
                        abs(mean - m[k][t]) < 4.0 * math::max(se, 1e-12),
                        "type {k} -> {t}: {mean} vs {}",
                        m[k][t]
                    );
                }
            }
        }
    }

    #[test]
    fn capped_paths_are_excluded_and_counted() {
        let law = OffspringLaw::binary(0.9).unwrap();
        let traj = simulate_path(&law, None, Some(&[1]), 40, 3, 17, 50).unwrap();
        assert!(traj.capped_at.is_some());
        assert_eq!(traj.populations.len(), traj.capped_at.unwrap() as usize);

        let acc = accumulate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.99],
            25,
            Condition::None,
            3,
            0..2000,
            50,
        )
        .unwrap();
        let est = acc.into_estimate().unwrap();
        assert!(est.paths_capped > 0);
        assert_eq!(est.paths_used, 2000);
        assert_eq!(est.paths_accepted + est.paths_capped, est.paths_used);
    }

    #[test]
    fn zero_accepted_is_degenerate() {
        let law = single_child_law();
        // The deterministic line never goes extinct.
        let err = estimate_lt(
            &law,
            None,
            Some(&[1]),
            &[0.9],
            3,
            Condition::ExtinctExactlyAtN,
            1000,
            5,
        );
        assert!(err.is_err());
    }
}
