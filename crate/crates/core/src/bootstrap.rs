//! Percentile bootstrap for a sum of lattice sample means: resampling,
//! the one-sided interval `(-inf, S - s_hat]`, plug-in expansion terms, and
//! coverage experiments.
//!
//! Observations are kept as integer indices on each population's lattice,
//! so `S* - S` is formed from integer differences and is exactly invariant
//! under shifting a population by a constant.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::edgeworth::{expansion_from_terms, BlockingConfig, ExpansionBreakdown, PopulationTerms, Variant};
use crate::error::{Error, Result};
use crate::lattice::{LatticeLaw, MeanSumModel};
use crate::numeric::{compensated_sum, fmt_real};
use crate::rng::StreamKey;

/// Tolerance when deciding whether a true mean lies on an interval endpoint.
const COVER_TOL: f64 = 1e-9;
/// Observations may sit this far (in units of the span) off the lattice.
const LATTICE_TOL: f64 = 1e-9;

/// Observed sample from one population, stored as lattice indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    offset: f64,
    span: f64,
    indices: Vec<i64>,
}

impl PopulationSample {
    pub fn new(offset: f64, span: f64, indices: Vec<i64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("sample must be nonempty"));
        }
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::InvalidSpan(span));
        }
        Ok(Self { offset, span, indices })
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.indices.iter().map(|&i| self.offset + i as f64 * self.span)
    }

    fn index_sum(&self) -> i64 {
        self.indices.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.offset + self.span * self.index_sum() as f64 / self.n() as f64
    }

    /// Central moment of order `k` of the empirical law (divisor `n`).
    pub fn central_moment(&self, k: i32) -> f64 {
        let n = self.n() as f64;
        let m = self.index_sum() as f64 / n;
        self.span.powi(k) * compensated_sum(self.indices.iter().map(|&i| (i as f64 - m).powi(k))) / n
    }

    /// Expansion inputs with empirical moments and the population span.
    pub fn plugin_terms(&self) -> PopulationTerms {
        let n = self.n() as f64;
        PopulationTerms::new(
            self.span,
            self.mean(),
            self.central_moment(2),
            self.central_moment(3),
            self.n() as u64,
            self.index_sum() as f64 / n,
        )
    }
}

/// One sample per population: the data `X = (X_1, ..., X_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<PopulationSample>,
}

impl SampleSet {
    pub fn new(samples: Vec<PopulationSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        Ok(Self { samples })
    }

    /// Reads observed values against the lattices of `model`'s populations.
    pub fn from_values(model: &MeanSumModel, values: &[Vec<f64>]) -> Result<Self> {
        if values.len() != model.k() {
            return Err(Error::PopulationCount { expected: model.k(), found: values.len() });
        }
        let samples = model
            .populations()
            .iter()
            .zip(values)
            .map(|(p, xs)| {
                let (offset, span) = (p.law.offset(), p.law.span());
                let indices = xs
                    .iter()
                    .map(|&x| {
                        let t = (x - offset) / span;
                        let i = t.round();
                        if (t - i).abs() > LATTICE_TOL * t.abs().max(1.0) {
                            Err(Error::invalid(format!("observation {x} is off the lattice {offset} + {span} Z")))
                        } else {
                            Ok(i as i64)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                PopulationSample::new(offset, span, indices)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    /// Draws `n_j` observations from each population of `model`.
    pub fn draw<R: Rng>(model: &MeanSumModel, rng: &mut R) -> Self {
        let samples = model
            .populations()
            .iter()
            .map(|p| {
                let sampler = IndexSampler::new(&p.law);
                PopulationSample {
                    offset: p.law.offset(),
                    span: p.law.span(),
                    indices: (0..p.n).map(|_| sampler.draw(rng)).collect(),
                }
            })
            .collect();
        Self { samples }
    }

    pub fn samples(&self) -> &[PopulationSample] {
        &self.samples
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.n() as u64).collect()
    }

    /// `S = sum_j mean(X_j)`.
    pub fn mean_sum(&self) -> f64 {
        compensated_sum(self.samples.iter().map(PopulationSample::mean))
    }

    pub fn plugin_terms(&self) -> Vec<PopulationTerms> {
        self.samples.iter().map(PopulationSample::plugin_terms).collect()
    }

    /// `var(S* | X)`.
    pub fn resample_variance(&self) -> f64 {
        compensated_sum(self.samples.iter().map(|s| s.central_moment(2) / s.n() as f64))
    }

    /// `E[{S* - E(S* | X)}^3 | X]`; the third central moment of a mean of
    /// `n` iid draws is `mu3 / n^2`.
    pub fn resample_third_moment(&self) -> f64 {
        compensated_sum(self.samples.iter().map(|s| s.central_moment(3) / (s.n() as f64).powi(2)))
    }
}

/// Inverse-CDF sampler over the indices of a lattice law.
#[derive(Debug, Clone)]
pub(crate) struct IndexSampler {
    cumulative: Vec<f64>,
    indices: Vec<i64>,
}

impl IndexSampler {
    pub(crate) fn new(law: &LatticeLaw) -> Self {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(law.atoms().len());
        let mut indices = Vec::with_capacity(law.atoms().len());
        for &(i, p) in law.atoms() {
            acc += p;
            cumulative.push(acc);
            indices.push(i);
        }
        Self { cumulative, indices }
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|&c| c <= u);
        self.indices[k.min(self.indices.len() - 1)]
    }
}

/// How bootstrap resamples are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleScheme {
    /// Draws with replacement from the observed sample.
    #[default]
    Nonparametric,
    /// Draws from the fitted two-point law; same law as nonparametric for
    /// two-point populations.
    Parametric,
}

impl ResampleScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResampleScheme::Nonparametric => "nonparametric",
            ResampleScheme::Parametric => "parametric",
        }
    }
}

impl fmt::Display for ResampleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResampleScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonparametric" => Ok(Self::Nonparametric),
            "parametric" => Ok(Self::Parametric),
            other => Err(Error::invalid(format!("unknown resampling scheme {other:?}"))),
        }
    }
}

/// Prepared resampler for one data set.
struct Resampler<'a> {
    data: &'a SampleSet,
    scheme: ResampleScheme,
    /// Parametric: `(low index, high index, P(high))` per population.
    two_point: Vec<(i64, i64, f64)>,
    base_sums: Vec<i64>,
}

impl<'a> Resampler<'a> {
    fn new(data: &'a SampleSet, scheme: ResampleScheme) -> Result<Self> {
        let mut two_point = Vec::new();
        if scheme == ResampleScheme::Parametric {
            for (j, s) in data.samples.iter().enumerate() {
                let lo = *s.indices.iter().min().expect("nonempty");
                let hi = *s.indices.iter().max().expect("nonempty");
                if s.indices.iter().any(|&i| i != lo && i != hi) {
                    return Err(Error::invalid(format!(
                        "parametric resampling needs two-point data; population {j} has more values"
                    )));
                }
                let p_hi = s.indices.iter().filter(|&&i| i == hi).count() as f64 / s.n() as f64;
                two_point.push((lo, hi, p_hi));
            }
        }
        Ok(Self { data, scheme, two_point, base_sums: data.samples.iter().map(|s| s.index_sum()).collect() })
    }

    fn index_sum<R: Rng>(&self, j: usize, rng: &mut R) -> i64 {
        let s = &self.data.samples[j];
        match self.scheme {
            ResampleScheme::Nonparametric => {
                let n = s.n();
                (0..n).map(|_| s.indices[rng.gen_range(0..n)]).sum()
            }
            ResampleScheme::Parametric => {
                let (lo, hi, p) = self.two_point[j];
                (0..s.n()).map(|_| if rng.gen::<f64>() < p { hi } else { lo }).sum()
            }
        }
    }

    /// `S* - S`, formed from integer index differences.
    fn centred<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        for (j, s) in self.data.samples.iter().enumerate() {
            let diff = self.index_sum(j, rng) - self.base_sums[j];
            acc += s.span * diff as f64 / s.n() as f64;
        }
        acc
    }

    fn resample_sum<R: Rng>(&self, rng: &mut R) -> f64 {
        compensated_sum(self.data.samples.iter().enumerate().map(|(j, s)| {
            s.offset + s.span * self.index_sum(j, rng) as f64 / s.n() as f64
        }))
    }
}

/// One draw of `S* = sum_j mean(X*_j)`.
pub fn resample_sum<R: Rng>(data: &SampleSet, scheme: ResampleScheme, rng: &mut R) -> Result<f64> {
    Ok(Resampler::new(data, scheme)?.resample_sum(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapQuantile {
    pub alpha: f64,
    pub s_hat: f64,
    pub b: usize,
}

/// `inf{s : #{v <= s} >= alpha * len}`: the `ceil(alpha * len)`-th order
/// statistic. Sorts `values` in place.
pub fn inf_quantile(values: &mut [f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("no values"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    values.sort_unstable_by(f64::total_cmp);
    Ok(values[order_statistic(alpha, values.len()) - 1])
}

fn order_statistic(alpha: f64, b: usize) -> usize {
    // guard against alpha * b landing a hair above an integer
    ((alpha * b as f64 - 1e-9).ceil() as usize).clamp(1, b)
}

fn centred_draws<R: Rng>(data: &SampleSet, b: usize, scheme: ResampleScheme, rng: &mut R) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::invalid("B must be at least 1"));
    }
    let r = Resampler::new(data, scheme)?;
    Ok((0..b).map(|_| r.centred(rng)).collect())
}

/// Bootstrap `alpha`-quantile of `S* - S` from `b` resamples.
pub fn bootstrap_quantile<R: Rng>(
    data: &SampleSet,
    alpha: f64,
    b: usize,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<BootstrapQuantile> {
    let mut draws = centred_draws(data, b, scheme, rng)?;
    let s_hat = inf_quantile(&mut draws, alpha)?;
    Ok(BootstrapQuantile { alpha, s_hat, b })
}

/// Upper endpoint `S - s_hat` of the interval `(-inf, S - s_hat]`.
pub fn percentile_interval<R: Rng>(
    data: &SampleSet,
    alpha: f64,
    b: usize,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<f64> {
    Ok(data.mean_sum() - bootstrap_quantile(data, alpha, b, scheme, rng)?.s_hat)
}

/// The expansion of the bootstrap law of the standardized `S*`, with every
/// moment replaced by its empirical counterpart.
pub fn plugin_expansion(data: &SampleSet, x: f64, variant: Variant, cfg: &BlockingConfig) -> Result<ExpansionBreakdown> {
    expansion_from_terms(&data.plugin_terms(), x, variant, cfg)
}

/// Which interval a coverage experiment scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageConvention {
    /// `(-inf, S - s_hat_alpha]`, nominal coverage `1 - alpha`.
    #[default]
    Literal,
    /// `(-inf, S - s_hat_{1-alpha}]`, nominal coverage `alpha`.
    Complement,
}

impl CoverageConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoverageConvention::Literal => "literal",
            CoverageConvention::Complement => "complement",
        }
    }

    pub fn nominal(&self, alpha: f64) -> f64 {
        match self {
            CoverageConvention::Literal => 1.0 - alpha,
            CoverageConvention::Complement => alpha,
        }
    }

    fn quantile_level(&self, alpha: f64) -> f64 {
        match self {
            CoverageConvention::Literal => alpha,
            CoverageConvention::Complement => 1.0 - alpha,
        }
    }
}

impl fmt::Display for CoverageConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoverageConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "complement" => Ok(Self::Complement),
            other => Err(Error::invalid(format!("unknown coverage convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSettings {
    pub alpha: f64,
    pub reps: u32,
    pub b: usize,
    pub seed: u64,
    pub convention: CoverageConvention,
    pub scheme: ResampleScheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    pub n1: u64,
    pub n2: Option<u64>,
    pub alpha: f64,
    pub convention: CoverageConvention,
    pub coverage: f64,
    pub stderr: f64,
    pub reps: u32,
    pub b: usize,
    pub seed: u64,
}

impl CoverageResult {
    pub const CSV_HEADER: &'static str = "n1,n2,alpha,convention,coverage,stderr,reps,B,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n1,
            self.n2.map(|n| n.to_string()).unwrap_or_default(),
            fmt_real(self.alpha),
            self.convention,
            fmt_real(self.coverage),
            fmt_real(self.stderr),
            self.reps,
            self.b,
            self.seed
        )
    }
}

/// Proportion of simulated data sets whose interval contains `E(S)`.
pub fn coverage_experiment(model: &MeanSumModel, settings: &CoverageSettings) -> Result<CoverageResult> {
    coverage_on_row(model, settings, 0)
}

/// As [`coverage_experiment`], drawing from the streams of experiment row `row`.
pub fn coverage_on_row(model: &MeanSumModel, settings: &CoverageSettings, row: u32) -> Result<CoverageResult> {
    let CoverageSettings { alpha, reps, b, seed, convention, scheme } = *settings;
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if b == 0 {
        return Err(Error::invalid("B must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let truth = model.mean();
    let level = convention.quantile_level(alpha);
    let key = StreamKey::new(seed, row);
    let hits = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<u64> {
            let mut rng = key.replicate(rep);
            let data = SampleSet::draw(model, &mut rng);
            let mut draws = centred_draws(&data, b, scheme, &mut rng)?;
            let upper = data.mean_sum() - inf_quantile(&mut draws, level)?;
            Ok(u64::from(truth <= upper + COVER_TOL * truth.abs().max(1.0)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let coverage = hits as f64 / reps as f64;
    let sizes = model.sample_sizes();
    Ok(CoverageResult {
        n1: sizes[0],
        n2: sizes.get(1).copied(),
        alpha,
        convention,
        coverage,
        stderr: (coverage * (1.0 - coverage) / reps as f64).sqrt(),
        reps,
        b,
        seed,
    })
}
