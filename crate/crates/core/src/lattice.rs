//! Lattice laws, their moments, and the exact convolution oracle for the
//! law of a sum of independent sample means.

use std::collections::HashMap;

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::numeric::{CompensatedSum, STANDARDIZED_TOL};

/// Default cap on the number of atoms the exact oracle may produce.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

const PMF_SUM_TOL: f64 = 1e-12;
const MERGE_REL_TOL: f64 = 1e-12;

/// How the parameter of a two-point law on {0, 1} is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BernoulliConvention {
    /// `p = P(X = 0)`, as written for the two-population design.
    #[default]
    Literal,
    /// `p = P(X = 1)`, the usual parameterization.
    SuccessProb,
}

/// A finite distribution on `offset + index * span`.
///
/// Construction reduces the span to the maximal one (gcd of the index gaps
/// is 1) and shifts the offset so the smallest index is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLaw {
    offset: f64,
    span: f64,
    atoms: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMoments {
    pub mean: f64,
    pub variance: f64,
    /// Third central moment.
    pub mu3: f64,
    /// Fourth central moment.
    pub mu4: f64,
}

impl LatticeLaw {
    pub fn new<I>(offset: f64, span: f64, pmf: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, f64)>,
    {
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::InvalidSpan(span));
        }
        if !offset.is_finite() {
            return Err(Error::invalid(format!("offset must be finite, got {offset}")));
        }
        let mut merged: HashMap<i64, f64> = HashMap::new();
        for (index, prob) in pmf {
            if prob.is_nan() || prob < 0.0 {
                return Err(Error::NegativeProbability { index, prob });
            }
            *merged.entry(index).or_insert(0.0) += prob;
        }
        let total = crate::numeric::compensated_sum(merged.values().copied());
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::ProbabilitySum(total));
        }
        let mut atoms: Vec<(i64, f64)> = merged.into_iter().filter(|&(_, p)| p > 0.0).collect();
        if atoms.len() < 2 {
            return Err(Error::Degenerate);
        }
        atoms.sort_by_key(|&(i, _)| i);

        let min_index = atoms[0].0;
        let g = atoms
            .iter()
            .fold(0i64, |g, &(i, _)| g.gcd(&(i - min_index)));
        let atoms = atoms
            .into_iter()
            .map(|(i, p)| ((i - min_index) / g, p))
            .collect();
        Ok(Self {
            offset: offset + min_index as f64 * span,
            span: span * g as f64,
            atoms,
        })
    }

    /// Two-point law on {0, 1} with `P(X = 0) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::bernoulli_with(p, BernoulliConvention::Literal)
    }

    pub fn bernoulli_with(p: f64, convention: BernoulliConvention) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("bernoulli parameter must lie in (0, 1), got {p}")));
        }
        let p_zero = match convention {
            BernoulliConvention::Literal => p,
            BernoulliConvention::SuccessProb => 1.0 - p,
        };
        Self::new(0.0, 1.0, [(0, p_zero), (1, 1.0 - p_zero)])
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    /// `(index, probability)` pairs, indices ascending from 0.
    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn max_index(&self) -> i64 {
        self.atoms.last().map(|a| a.0).unwrap_or(0)
    }

    /// `(support point, probability)` pairs.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms
            .iter()
            .map(move |&(i, p)| (self.offset + i as f64 * self.span, p))
    }

    /// Mean of the index `(X - offset) / span`.
    pub fn index_mean(&self) -> f64 {
        crate::numeric::compensated_sum(self.atoms.iter().map(|&(i, p)| i as f64 * p))
    }

    pub fn moments(&self) -> PopulationMoments {
        let m = self.index_mean();
        let central = |k: i32| {
            crate::numeric::compensated_sum(
                self.atoms
                    .iter()
                    .map(|&(i, p)| p * ((i as f64 - m) * self.span).powi(k)),
            )
        };
        PopulationMoments {
            mean: self.offset + m * self.span,
            variance: central(2),
            mu3: central(3),
            mu4: central(4),
        }
    }

    /// Probability of the support point with the given index.
    pub fn prob(&self, index: i64) -> f64 {
        self.atoms
            .binary_search_by_key(&index, |a| a.0)
            .map(|k| self.atoms[k].1)
            .unwrap_or(0.0)
    }
}

pub fn make_lattice_law<I>(offset: f64, span: f64, pmf: I) -> Result<LatticeLaw>
where
    I: IntoIterator<Item = (i64, f64)>,
{
    LatticeLaw::new(offset, span, pmf)
}

pub fn bernoulli(p: f64) -> Result<LatticeLaw> {
    LatticeLaw::bernoulli(p)
}

pub fn moments(law: &LatticeLaw) -> PopulationMoments {
    law.moments()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub law: LatticeLaw,
    pub n: u64,
}

/// `S = sum_j mean(X_j1, ..., X_jn_j)` over independent populations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSumModel {
    populations: Vec<Population>,
}

impl MeanSumModel {
    pub fn new(populations: Vec<Population>) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::invalid("model needs at least one population"));
        }
        if let Some(j) = populations.iter().position(|p| p.n == 0) {
            return Err(Error::invalid(format!("population {j} has sample size 0")));
        }
        Ok(Self { populations })
    }

    pub fn from_laws<I>(laws: I) -> Result<Self>
    where
        I: IntoIterator<Item = (LatticeLaw, u64)>,
    {
        Self::new(laws.into_iter().map(|(law, n)| Population { law, n }).collect())
    }

    pub fn populations(&self) -> &[Population] {
        &self.populations
    }

    pub fn k(&self) -> usize {
        self.populations.len()
    }

    pub fn sample_sizes(&self) -> Vec<u64> {
        self.populations.iter().map(|p| p.n).collect()
    }

    /// `n = sum_j n_j`.
    pub fn total_n(&self) -> u64 {
        self.populations.iter().map(|p| p.n).sum()
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::compensated_sum(self.populations.iter().map(|p| p.law.moments().mean))
    }

    pub fn variance(&self) -> f64 {
        crate::numeric::compensated_sum(
            self.populations
                .iter()
                .map(|p| p.law.moments().variance / p.n as f64),
        )
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Same laws, new sample sizes.
    pub fn with_sample_sizes(&self, sizes: &[u64]) -> Result<Self> {
        if sizes.len() != self.k() {
            return Err(Error::PopulationCount { expected: self.k(), found: sizes.len() });
        }
        Self::new(
            self.populations
                .iter()
                .zip(sizes)
                .map(|(p, &n)| Population { law: p.law.clone(), n })
                .collect(),
        )
    }
}

/// Exact finite law: strictly increasing support with cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCdf {
    atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl DiscreteCdf {
    /// Atoms need not be sorted; coincident points (relative 1e-12) merge.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|a| !a.0.is_finite() || a.1.is_nan() || a.1 < 0.0) {
            return Err(Error::invalid("atoms must have finite support and nonnegative mass"));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::from_sorted(merge_sorted(atoms)))
    }

    fn from_sorted(atoms: Vec<(f64, f64)>) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative = atoms
            .iter()
            .map(|&(_, p)| {
                acc.add(p);
                acc.value()
            })
            .collect();
        Self { atoms, cumulative }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `P(S <= s)`; exactly 1 from the top of the support on, whatever
    /// rounding the running sums carry.
    pub fn cdf(&self, s: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= s);
        match k {
            0 => 0.0,
            k if k == self.atoms.len() => 1.0,
            k => self.cumulative[k - 1],
        }
    }

    /// `P((S - mean) / sd <= x)`, with lattice points within
    /// [`STANDARDIZED_TOL`] of `x` counted as `<= x`.
    pub fn cdf_standardized(&self, x: f64, mean: f64, sd: f64) -> f64 {
        self.cdf(mean + (x + STANDARDIZED_TOL) * sd)
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::compensated_sum(self.atoms.iter().map(|&(s, p)| s * p))
    }

    pub fn central_moment(&self, k: i32) -> f64 {
        let m = self.mean();
        crate::numeric::compensated_sum(self.atoms.iter().map(|&(s, p)| p * (s - m).powi(k)))
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }
}

fn merge_sorted(atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, CompensatedSum)> = Vec::with_capacity(atoms.len());
    for (s, p) in atoms {
        match out.last_mut() {
            Some((last, acc)) if (s - *last).abs() <= MERGE_REL_TOL * last.abs().max(s.abs()).max(1.0) => {
                acc.add(p)
            }
            _ => {
                let mut acc = CompensatedSum::new();
                acc.add(p);
                out.push((s, acc));
            }
        }
    }
    out.into_iter().map(|(s, acc)| (s, acc.value())).collect()
}

/// Law of `sum_{i <= n} index_i` as a dense pmf on `0..=n * max_index`.
fn self_convolve(law: &LatticeLaw, n: u64) -> Vec<f64> {
    let width = law.max_index() as usize;
    let mut dense = vec![0.0; width + 1];
    for &(i, p) in law.atoms() {
        dense[i as usize] = p;
    }
    let mut out = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; out.len() + width];
        for (a, &pa) in out.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in dense.iter().enumerate() {
                next[a + b] += pa * pb;
            }
        }
        out = next;
    }
    out
}

/// Exact law of `S`, subject to [`DEFAULT_ORACLE_BUDGET`].
pub fn exact_sum_distribution(model: &MeanSumModel) -> Result<DiscreteCdf> {
    exact_sum_distribution_with_budget(model, DEFAULT_ORACLE_BUDGET)
}

/// The budget caps the product of per-population atom counts, which bounds
/// both the convolution work and the size of the result.
pub fn exact_sum_distribution_with_budget(model: &MeanSumModel, budget: u64) -> Result<DiscreteCdf> {
    let mut atoms_bound: u128 = 1;
    for p in model.populations() {
        let count = p.n as u128 * p.law.max_index() as u128 + 1;
        atoms_bound = atoms_bound.saturating_mul(count);
        if atoms_bound > budget as u128 {
            return Err(Error::OracleInfeasible { atoms: atoms_bound, budget });
        }
    }

    let pmfs: Vec<Vec<f64>> = model
        .populations()
        .iter()
        .map(|p| self_convolve(&p.law, p.n))
        .collect();
    let offset_sum = crate::numeric::compensated_sum(model.populations().iter().map(|p| p.law.offset()));

    match integer_grid(model) {
        Some(grid) => Ok(convolve_on_grid(&pmfs, &grid, offset_sum)),
        None => Ok(convolve_float(model, &pmfs, offset_sum)),
    }
}

struct IntegerGrid {
    /// Value of one grid step.
    unit: f64,
    /// Grid steps per unit of each population's index sum.
    multipliers: Vec<u64>,
}

/// Common integer grid for all populations when every span is an integer
/// multiple of the smallest one: steps of `min_span / lcm(n_j)`.
fn integer_grid(model: &MeanSumModel) -> Option<IntegerGrid> {
    let base = model
        .populations()
        .iter()
        .map(|p| p.law.span())
        .fold(f64::INFINITY, f64::min);
    let mut ratios = Vec::with_capacity(model.k());
    for p in model.populations() {
        let r = p.law.span() / base;
        let rr = r.round();
        if (r - rr).abs() > 1e-12 * r || rr < 1.0 {
            return None;
        }
        ratios.push(rr as u64);
    }
    let lcm = model
        .populations()
        .iter()
        .try_fold(1u64, |l, p| {
            let g = l.gcd(&p.n);
            (l / g).checked_mul(p.n)
        })?;
    let mut multipliers = Vec::with_capacity(model.k());
    let mut max_key: u128 = 0;
    for (p, &r) in model.populations().iter().zip(&ratios) {
        let m = r.checked_mul(lcm / p.n)?;
        max_key += m as u128 * p.n as u128 * p.law.max_index() as u128;
        multipliers.push(m);
    }
    // keys must stay exactly representable as f64
    if max_key >= 1u128 << 53 {
        return None;
    }
    Some(IntegerGrid { unit: base / lcm as f64, multipliers })
}

fn convolve_on_grid(pmfs: &[Vec<f64>], grid: &IntegerGrid, offset_sum: f64) -> DiscreteCdf {
    let mut current: Vec<(u64, f64)> = vec![(0, 1.0)];
    for (pmf, &mult) in pmfs.iter().zip(&grid.multipliers) {
        let mut acc: HashMap<u64, CompensatedSum> = HashMap::with_capacity(current.len() * pmf.len());
        for &(key, pa) in &current {
            for (t, &pb) in pmf.iter().enumerate() {
                if pb == 0.0 {
                    continue;
                }
                acc.entry(key + mult * t as u64).or_default().add(pa * pb);
            }
        }
        current = acc.into_iter().map(|(k, s)| (k, s.value())).collect();
        current.sort_unstable_by_key(|a| a.0);
    }
    DiscreteCdf::from_sorted(
        current
            .into_iter()
            .map(|(k, p)| (offset_sum + k as f64 * grid.unit, p))
            .collect(),
    )
}

fn convolve_float(model: &MeanSumModel, pmfs: &[Vec<f64>], offset_sum: f64) -> DiscreteCdf {
    let mut current: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for (pop, pmf) in model.populations().iter().zip(pmfs) {
        let step = pop.law.span() / pop.n as f64;
        let mut next = Vec::with_capacity(current.len() * pmf.len());
        for &(s, pa) in &current {
            for (t, &pb) in pmf.iter().enumerate() {
                if pb != 0.0 {
                    next.push((s + t as f64 * step, pa * pb));
                }
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        current = merge_sorted(next);
    }
    DiscreteCdf::from_sorted(current.into_iter().map(|(s, p)| (offset_sum + s, p)).collect())
}

/// Exact law of `(S - ES) / sqrt(Var S)` for repeated evaluation.
#[derive(Debug, Clone)]
pub struct StandardizedOracle {
    dist: DiscreteCdf,
    mean: f64,
    sd: f64,
}

impl StandardizedOracle {
    pub fn new(model: &MeanSumModel) -> Result<Self> {
        Self::with_budget(model, DEFAULT_ORACLE_BUDGET)
    }

    pub fn with_budget(model: &MeanSumModel, budget: u64) -> Result<Self> {
        Ok(Self {
            dist: exact_sum_distribution_with_budget(model, budget)?,
            mean: model.mean(),
            sd: model.sd(),
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist.cdf_standardized(x, self.mean, self.sd)
    }

    pub fn distribution(&self) -> &DiscreteCdf {
        &self.dist
    }
}

/// `P{(S - ES) / sqrt(Var S) <= x}` computed exactly.
pub fn exact_cdf_standardized(model: &MeanSumModel, x: f64) -> Result<f64> {
    Ok(StandardizedOracle::new(model)?.cdf(x))
}
