//! Finite-support multi-type offspring and immigration laws.
//!
//! A law of dimension `d` assigns each parent type `k` a probability mass
//! function over offspring multi-indices `i = (i_1, ..., i_d)`. Everything
//! downstream works through the per-type generating functions
//!
//! ```text
//! f_k(s) = sum_i p_k(i) s_1^{i_1} ... s_d^{i_d}
//! ```
//!
//! and their first, second and third partial derivatives, all evaluated
//! analytically from the mass function (no differencing).
//!
//! Masses must be nonnegative and sum to one within [`NORMALIZATION_TOL`]
//! per type; construction fails beyond that rather than renormalizing, so a
//! model file with sloppy masses is rejected loudly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, CoreResult};
use crate::wide::Scalar;

/// Offspring counts per type, one entry per type.
pub type MultiIndex = Vec<u32>;

/// Tolerance for the per-type mass sum at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
struct Table {
    entries: Vec<(MultiIndex, f64)>,
    /// Cumulative masses aligned with `entries`, last value forced to 1.
    cum: Vec<f64>,
}

impl Table {
    fn build(dim: usize, mut entries: Vec<(MultiIndex, f64)>, what: &str) -> CoreResult<Self> {
        if entries.is_empty() {
            return Err(invalid(alloc::format!("{what}: empty support")));
        }
        for (index, mass) in &entries {
            if index.len() != dim {
                return Err(invalid(alloc::format!(
                    "{what}: index length {} does not match dimension {dim}",
                    index.len()
                )));
            }
            if !mass.is_finite() || *mass < 0.0 {
                return Err(invalid(alloc::format!("{what}: mass {mass} out of range")));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(invalid(alloc::format!(
                    "{what}: duplicate index {:?}",
                    pair[0].0
                )));
            }
        }
        entries.retain(|(_, mass)| *mass > 0.0);
        if entries.is_empty() {
            return Err(invalid(alloc::format!("{what}: all masses are zero")));
        }
        let total: f64 = entries.iter().map(|(_, m)| m).sum();
        if crate::math::abs(total - 1.0) > NORMALIZATION_TOL {
            return Err(invalid(alloc::format!(
                "{what}: masses sum to {total}, off by more than {NORMALIZATION_TOL:e}"
            )));
        }
        let mut cum = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (_, mass) in &entries {
            acc += mass;
            cum.push(acc);
        }
        *cum.last_mut().expect("nonempty") = 1.0;
        Ok(Table { entries, cum })
    }

    fn eval<S: Scalar>(&self, s: &[S]) -> S {
        let mut acc = S::ZERO;
        for (index, mass) in &self.entries {
            let mut term = S::from_f64(*mass);
            for (l, &count) in index.iter().enumerate() {
                if count > 0 {
                    term = term * s[l].powi(count);
                }
            }
            acc = acc + term;
        }
        acc
    }

    /// Mixed partial derivative with multiplicities `orders`, evaluated at `s`.
    fn partial(&self, orders: &[u32], s: &[f64]) -> f64 {
        let mut acc = 0.0;
        'entry: for (index, mass) in &self.entries {
            let mut term = *mass;
            for (l, (&count, &order)) in index.iter().zip(orders).enumerate() {
                if count < order {
                    continue 'entry;
                }
                for j in 0..order {
                    term *= (count - j) as f64;
                }
                term *= crate::math::powi(s[l], count - order);
            }
            acc += term;
        }
        acc
    }

    fn mean(&self) -> Vec<f64> {
        let dim = self.entries[0].0.len();
        let mut out = vec![0.0; dim];
        for (index, mass) in &self.entries {
            for (l, &count) in index.iter().enumerate() {
                out[l] += mass * count as f64;
            }
        }
        out
    }

    fn sample(&self, uniform: f64) -> &MultiIndex {
        let pos = self.cum.partition_point(|&c| c <= uniform);
        let pos = pos.min(self.entries.len() - 1);
        &self.entries[pos].0
    }
}

/// Multi-type offspring law with finite support.
#[derive(Clone, Debug)]
pub struct OffspringLaw {
    dim: usize,
    types: Vec<Table>,
}

/// Validation report for the uniformity class with parameters
/// `(a, b, c, power)`: min entry of `M^power` at 1, total second derivative
/// mass, total third derivative mass.
#[derive(Clone, Debug, PartialEq)]
pub struct KClassReport {
    pub power: u32,
    pub min_power_entry: f64,
    pub b_sum: f64,
    pub c_sum: f64,
    pub in_class: bool,
}

/// Validation report for the immigration class `(d1, d2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JClassReport {
    pub lambda_sum: f64,
    pub second_sum: f64,
    pub in_class: bool,
}

impl OffspringLaw {
    /// `entries[k]` lists `(multi-index, mass)` pairs for parent type `k`.
    pub fn new(entries: Vec<Vec<(MultiIndex, f64)>>) -> CoreResult<Self> {
        let dim = entries.len();
        if dim == 0 {
            return Err(invalid("offspring law needs at least one type"));
        }
        let mut types = Vec::with_capacity(dim);
        for (k, list) in entries.into_iter().enumerate() {
            types.push(Table::build(dim, list, &alloc::format!("type {k}"))?);
        }
        Ok(OffspringLaw { dim, types })
    }

    /// Single-type law with masses on 0 and 2 children: `{0: 1-p, 2: p}`.
    /// Critical at `p = 1/2`, mean `2p`.
    pub fn binary(p: f64) -> CoreResult<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(alloc::format!("binary mass {p} outside [0, 1]")));
        }
        OffspringLaw::new(vec![vec![(vec![0], 1.0 - p), (vec![2], p)]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support size per type.
    pub fn support_len(&self, k: usize) -> usize {
        self.types[k].entries.len()
    }

    pub fn support(&self, k: usize) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.types[k].entries.iter().map(|(i, m)| (i, *m))
    }

    /// Largest total brood size over all types and support points.
    pub fn max_brood(&self) -> u64 {
        self.types
            .iter()
            .flat_map(|t| t.entries.iter())
            .map(|(index, _)| index.iter().map(|&c| c as u64).sum())
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn check_point(&self, s: &[f64], what: &str) -> CoreResult<()> {
        if s.len() != self.dim {
            return Err(invalid(alloc::format!(
                "{what}: point length {} does not match dimension {}",
                s.len(),
                self.dim
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(invalid(alloc::format!("{what}: non-finite coordinate")));
        }
        Ok(())
    }

    /// Generating function values `f_k(s)` for all types.
    pub fn eval(&self, s: &[f64]) -> CoreResult<Vec<f64>> {
        self.check_point(s, "eval")?;
        Ok(self.types.iter().map(|t| t.eval(s)).collect())
    }

    /// Generic-scalar evaluation used by the compensated recursion engines.
    pub fn eval_in<S: Scalar>(&self, s: &[S]) -> Vec<S> {
        self.types.iter().map(|t| t.eval(s)).collect()
    }

    /// Mean matrix `M_kl(s) = d f_k / d s_l`, rows indexed by parent type.
    pub fn mean_matrix(&self, s: &[f64]) -> CoreResult<Vec<Vec<f64>>> {
        self.check_point(s, "mean_matrix")?;
        let mut m = vec![vec![0.0; self.dim]; self.dim];
        let mut orders = vec![0u32; self.dim];
        for (k, table) in self.types.iter().enumerate() {
            for l in 0..self.dim {
                orders[l] = 1;
                m[k][l] = table.partial(&orders, s);
                orders[l] = 0;
            }
        }
        Ok(m)
    }

    /// Second partials `b^k_{lm}(s0)` for one parent type, a symmetric d x d
    /// matrix.
    pub fn second_partials(&self, k: usize, s0: &[f64]) -> CoreResult<Vec<Vec<f64>>> {
        self.check_point(s0, "second_partials")?;
        let mut b = vec![vec![0.0; self.dim]; self.dim];
        let mut orders = vec![0u32; self.dim];
        for l in 0..self.dim {
            for m in l..self.dim {
                orders[l] += 1;
                orders[m] += 1;
                let val = self.types[k].partial(&orders, s0);
                orders[l] = 0;
                orders[m] = 0;
                b[l][m] = val;
                b[m][l] = val;
            }
        }
        Ok(b)
    }

    /// Sum of all second partials at 1 over types and index pairs.
    pub fn b_sum(&self) -> f64 {
        let ones = vec![1.0; self.dim];
        let mut total = 0.0;
        for k in 0..self.dim {
            let b = self.second_partials(k, &ones).expect("point validated");
            total += b.iter().flatten().sum::<f64>();
        }
        total
    }

    /// Sum of all third partials at 1 over types and index triples.
    pub fn c_sum(&self) -> f64 {
        let ones = vec![1.0; self.dim];
        let mut orders = vec![0u32; self.dim];
        let mut total = 0.0;
        for table in &self.types {
            for l in 0..self.dim {
                for m in 0..self.dim {
                    for j in 0..self.dim {
                        orders[l] += 1;
                        orders[m] += 1;
                        orders[j] += 1;
                        total += table.partial(&orders, &ones);
                        orders[l] -= 1;
                        orders[m] -= 1;
                        orders[j] -= 1;
                    }
                }
            }
        }
        total
    }

    /// Quadratic form `q_k[s0, x] = 1/2 sum_{l,m} b^k_{lm}(s0) x_l x_m`.
    pub fn q_form(&self, k: usize, s0: &[f64], x: &[f64]) -> CoreResult<f64> {
        self.check_point(x, "q_form weights")?;
        let b = self.second_partials(k, s0)?;
        let mut acc = 0.0;
        for l in 0..self.dim {
            for m in 0..self.dim {
                acc += b[l][m] * x[l] * x[m];
            }
        }
        Ok(0.5 * acc)
    }

    /// `sum_k w_k q_k[s0, x]`; with `w = v`, `s0 = 1`, `x = u` this is the
    /// variance functional Q.
    pub fn weighted_q(&self, weights: &[f64], s0: &[f64], x: &[f64]) -> CoreResult<f64> {
        self.check_point(weights, "weighted_q weights")?;
        let mut acc = 0.0;
        for k in 0..self.dim {
            acc += weights[k] * self.q_form(k, s0, x)?;
        }
        Ok(acc)
    }

    /// Membership report for the class with floor `a` on entries of
    /// `M(1)^power`, floor `b` on the second derivative mass, cap `c` on the
    /// third derivative mass.
    pub fn class_k_report(&self, a: f64, b: f64, c: f64, power: u32) -> CoreResult<KClassReport> {
        if power == 0 {
            return Err(invalid("class power must be at least 1"));
        }
        let ones = vec![1.0; self.dim];
        let m = self.mean_matrix(&ones)?;
        let mut acc = m.clone();
        for _ in 1..power {
            acc = mat_mul(&acc, &m);
        }
        let min_power_entry = acc
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, crate::math::min);
        let b_sum = self.b_sum();
        let c_sum = self.c_sum();
        Ok(KClassReport {
            power,
            min_power_entry,
            b_sum,
            c_sum,
            in_class: min_power_entry >= a && b_sum >= b && c_sum <= c,
        })
    }

    /// One offspring draw for a type-`k` parent by CDF inversion.
    pub fn sample(&self, k: usize, uniform: f64) -> &MultiIndex {
        self.types[k].sample(uniform)
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// Immigration law: one finite-support distribution over multi-indices with
/// generating function `B(s)`.
#[derive(Clone, Debug)]
pub struct ImmigrationLaw {
    dim: usize,
    table: Table,
}

impl ImmigrationLaw {
    pub fn new(dim: usize, entries: Vec<(MultiIndex, f64)>) -> CoreResult<Self> {
        if dim == 0 {
            return Err(invalid("immigration law needs dimension at least 1"));
        }
        let table = Table::build(dim, entries, "immigration")?;
        Ok(ImmigrationLaw { dim, table })
    }

    /// Exactly one type-1 immigrant per generation, `B(s) = s_1`.
    pub fn unit(dim: usize) -> CoreResult<Self> {
        let mut index = vec![0u32; dim];
        index[0] = 1;
        ImmigrationLaw::new(dim, vec![(index, 1.0)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, s: &[f64]) -> CoreResult<f64> {
        if s.len() != self.dim {
            return Err(invalid("immigration eval: dimension mismatch"));
        }
        Ok(self.table.eval(s))
    }

    /// Mean immigration vector.
    pub fn lambda(&self) -> Vec<f64> {
        self.table.mean()
    }

    /// Membership report for the immigration class: mean mass at least `d1`,
    /// second derivative mass at most `d2`. Normalization is already
    /// enforced at construction.
    pub fn class_j_report(&self, d1: f64, d2: f64) -> JClassReport {
        let ones = vec![1.0; self.dim];
        let mut orders = vec![0u32; self.dim];
        let lambda_sum: f64 = self.lambda().iter().sum();
        let mut second_sum = 0.0;
        for k in 0..self.dim {
            for l in 0..self.dim {
                orders[k] += 1;
                orders[l] += 1;
                second_sum += self.table.partial(&orders, &ones);
                orders[k] -= 1;
                orders[l] -= 1;
            }
        }
        JClassReport {
            lambda_sum,
            second_sum,
            in_class: lambda_sum >= d1 && second_sum <= d2,
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.table.entries.iter().map(|(i, m)| (i, *m))
    }

    pub fn max_brood(&self) -> u64 {
        self.table
            .entries
            .iter()
            .map(|(index, _)| index.iter().map(|&c| c as u64).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn sample(&self, uniform: f64) -> &MultiIndex {
        self.table.sample(uniform)
    }
}

/// The two-type law used throughout the tests: type 1 branches into one
/// child of each type with probability 1/2, type 2 into two type-1 children
/// with probability `fertility` (and no children otherwise). Critical at
/// `fertility = 1/2`.
pub fn pair_law(fertility: f64) -> CoreResult<OffspringLaw> {
    if !(0.0..=1.0).contains(&fertility) {
        return Err(invalid(alloc::format!(
            "fertility {fertility} outside [0, 1]"
        )));
    }
    OffspringLaw::new(vec![
        vec![(vec![0, 0], 0.5), (vec![1, 1], 0.5)],
        vec![(vec![0, 0], 1.0 - fertility), (vec![2, 0], fertility)],
    ])
}

/// Harmonic transform of a supercritical law into its associated subcritical
/// one: masses become `p_k(i) mu^i / mu_k`, so the new generating functions
/// are `f_k(mu s) / mu_k` exactly.
pub fn associated_subcritical(law: &OffspringLaw, mu: &[f64]) -> CoreResult<OffspringLaw> {
    if mu.len() != law.dim() {
        return Err(invalid("associated_subcritical: dimension mismatch"));
    }
    if mu.iter().any(|&m| !(m > 0.0) || m > 1.0) {
        return Err(invalid(
            "associated_subcritical: extinction probabilities must lie in (0, 1]",
        ));
    }
    let mut entries = Vec::with_capacity(law.dim());
    for k in 0..law.dim() {
        let mut list: Vec<(MultiIndex, f64)> = Vec::with_capacity(law.support_len(k));
        for (index, mass) in law.support(k) {
            let mut weight = mass / mu[k];
            for (l, &count) in index.iter().enumerate() {
                weight *= crate::math::powi(mu[l], count);
            }
            list.push((index.clone(), weight));
        }
        entries.push(list);
    }
    OffspringLaw::new(entries)
}
