//! Brute-force joint distribution of (population, progeny) by forward
//! convolution.
//!
//! Independent of the generating-function machinery: states are explicit
//! count vectors and each generation convolves every individual's
//! offspring law. Exponential in n, which is the point — it only needs to
//! reach n ~ 4 to pin the recursions down, and anything it can reach it
//! computes exactly (up to the stated caps, whose clipped mass lands in
//! `defect`).

use std::collections::HashMap;

use anyhow::{bail, Result};
use progeny_core::{ImmigrationLaw, OffspringLaw};

pub const STATE_LIMIT: usize = 10_000_000;

type State = (Vec<u32>, Vec<u32>);

#[derive(Clone, Debug)]
pub struct DPJointDistribution {
    /// Mass per (Z_n, Y_n) pair.
    pub probs: HashMap<State, f64>,
    /// Mass clipped by the population/progeny caps.
    pub defect: f64,
    pub n: u32,
}

impl DPJointDistribution {
    /// `sum p(z, y) x^z s^y` over the retained states.
    pub fn transform(&self, x: &[f64], s: &[f64]) -> f64 {
        let pow = |base: f64, c: u32| -> f64 {
            if c == 0 {
                1.0
            } else {
                base.powi(c as i32)
            }
        };
        self.probs
            .iter()
            .map(|((z, y), p)| {
                let mut term = *p;
                for k in 0..x.len() {
                    term *= pow(x[k], z[k]) * pow(s[k], y[k]);
                }
                term
            })
            .sum()
    }

    /// `E x^{Z_n}`.
    pub fn population_pgf(&self, x: &[f64]) -> f64 {
        self.transform(x, &vec![1.0; x.len()])
    }

    /// `E s^{Y_n}`, the unconditioned progeny transform `t_n`.
    pub fn progeny_transform(&self, s: &[f64]) -> f64 {
        self.transform(&vec![1.0; s.len()], s)
    }

    /// `E s^{Y_n} 1{Z_n = 0}`, the with-extinction transform `h_n`.
    pub fn extinct_transform(&self, s: &[f64]) -> f64 {
        self.transform(&vec![0.0; s.len()], s)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }
}

/// Distribution of offspring totals produced by `count` independent
/// individuals of type `k`, as a map from count vectors to mass.
fn convolve_type(
    law: &OffspringLaw,
    k: usize,
    count: u32,
    cap: u64,
) -> (HashMap<Vec<u32>, f64>, f64) {
    let dim = law.dim();
    let mut acc: HashMap<Vec<u32>, f64> = HashMap::new();
    acc.insert(vec![0; dim], 1.0);
    let mut defect = 0.0;
    for _ in 0..count {
        let mut next: HashMap<Vec<u32>, f64> = HashMap::new();
        for (base, p) in &acc {
            for (brood, mass) in law.support(k) {
                let mut sum = base.clone();
                let mut total = 0u64;
                for (t, c) in brood.iter().enumerate() {
                    sum[t] += c;
                    total += sum[t] as u64;
                }
                if total > cap {
                    defect += p * mass;
                } else {
                    *next.entry(sum).or_insert(0.0) += p * mass;
                }
            }
        }
        acc = next;
    }
    (acc, defect)
}

fn total(v: &[u32]) -> u64 {
    v.iter().map(|&c| c as u64).sum()
}

/// Exact joint law of (Z_n, Y_n) from `start`, truncated to total
/// population and total progeny caps.
pub fn dp_oracle(
    law: &OffspringLaw,
    start: &[u32],
    n: u32,
    pop_cap: u64,
    prog_cap: u64,
) -> Result<DPJointDistribution> {
    if start.len() != law.dim() {
        bail!("start vector does not match law dimension");
    }
    if total(start) > pop_cap || total(start) > prog_cap {
        bail!("start state already exceeds a cap");
    }
    let dim = law.dim();
    let mut probs: HashMap<State, f64> = HashMap::new();
    probs.insert((start.to_vec(), start.to_vec()), 1.0);
    let mut defect = 0.0;
    for _ in 0..n {
        let mut next: HashMap<State, f64> = HashMap::new();
        for ((z, y), p) in &probs {
            // Offspring of the whole generation: convolve the per-type
            // batch distributions across types.
            let mut batch: HashMap<Vec<u32>, f64> = HashMap::new();
            batch.insert(vec![0; dim], 1.0);
            for k in 0..dim {
                if z[k] == 0 {
                    continue;
                }
                let (per_type, lost) = convolve_type(law, k, z[k], pop_cap);
                defect += p * lost;
                let mut merged: HashMap<Vec<u32>, f64> = HashMap::new();
                for (a, pa) in &batch {
                    for (b, pb) in &per_type {
                        let sum: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                        if total(&sum) > pop_cap {
                            defect += p * pa * pb;
                        } else {
                            *merged.entry(sum).or_insert(0.0) += pa * pb;
                        }
                    }
                }
                batch = merged;
            }
            for (znext, pz) in batch {
                let ynext: Vec<u32> = y.iter().zip(&znext).map(|(a, b)| a + b).collect();
                if total(&ynext) > prog_cap {
                    defect += p * pz;
                } else {
                    *next.entry((znext, ynext)).or_insert(0.0) += p * pz;
                }
            }
            if next.len() > STATE_LIMIT {
                bail!("state explosion: more than {STATE_LIMIT} (population, progeny) states");
            }
        }
        probs = next;
    }
    Ok(DPJointDistribution { probs, defect, n })
}

/// Immigration variant: `H_0` replaces the fixed start and one arrival
/// vector lands per later generation, mirroring the simulator's epochs.
pub fn dp_oracle_immigration(
    law: &OffspringLaw,
    imm: &ImmigrationLaw,
    n: u32,
    pop_cap: u64,
    prog_cap: u64,
) -> Result<DPJointDistribution> {
    let dim = law.dim();
    let mut probs: HashMap<State, f64> = HashMap::new();
    let mut defect = 0.0;
    for (arrival, mass) in imm.support() {
        if total(arrival) > pop_cap.min(prog_cap) {
            defect += mass;
        } else {
            *probs
                .entry((arrival.clone(), arrival.clone()))
                .or_insert(0.0) += mass;
        }
    }
    for _ in 0..n {
        let mut next: HashMap<State, f64> = HashMap::new();
        for ((z, y), p) in &probs {
            let step = dp_oracle(law, z, 1, pop_cap, u64::MAX)?;
            defect += p * step.defect;
            for ((znext, _), pz) in &step.probs {
                for (arrival, mass) in imm.support() {
                    let zfinal: Vec<u32> = znext.iter().zip(arrival).map(|(a, b)| a + b).collect();
                    let yfinal: Vec<u32> = (0..dim).map(|k| y[k] + zfinal[k]).collect();
                    if total(&zfinal) > pop_cap || total(&yfinal) > prog_cap {
                        defect += p * pz * mass;
                    } else {
                        *next.entry((zfinal, yfinal)).or_insert(0.0) += p * pz * mass;
                    }
                }
            }
        }
        probs = next;
        if probs.len() > STATE_LIMIT {
            bail!("state explosion in immigration oracle");
        }
    }
    Ok(DPJointDistribution { probs, defect, n })
}
