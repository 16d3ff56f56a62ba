//! Monte Carlo estimates of `P{(S - ES) / sqrt(Var S) <= x}` and the
//! experiment grids that sweep sample sizes, driven by a JSON config.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{coverage_on_row, CoverageConvention, CoverageResult, CoverageSettings, IndexSampler, ResampleScheme};
use crate::edgeworth::{full_expansion, BlockingConfig, Variant};
use crate::error::{Error, Result};
use crate::lattice::{BernoulliConvention, MeanSumModel, StandardizedOracle, DEFAULT_ORACLE_BUDGET};
use crate::model_file::ModelSpec;
use crate::number_theory::{plan_sample_sizes, IrrationalSpec, PlanMode};
use crate::numeric::{fmt_real, normal_quantile, round_half_away, STANDARDIZED_TOL};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Fraction of `reps` simulated sums whose standardized value is at most `x`.
pub fn estimate_p(model: &MeanSumModel, x: f64, reps: u32, key: StreamKey) -> Result<McEstimate> {
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let pops: Vec<_> = model
        .populations()
        .iter()
        .map(|p| (IndexSampler::new(&p.law), p.n, p.law.span(), p.law.index_mean()))
        .collect();
    let sd = model.sd();
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = key.replicate(rep);
            // S - ES from integer index sums, population by population
            let centred: f64 = pops
                .iter()
                .map(|(sampler, n, span, m)| {
                    let total: i64 = (0..*n).map(|_| sampler.draw(&mut rng)).sum();
                    span * (total as f64 / *n as f64 - m)
                })
                .sum();
            u64::from(centred / sd <= x + STANDARDIZED_TOL)
        })
        .sum();
    let p = hits as f64 / reps as f64;
    Ok(McEstimate { estimate: p, stderr: (p * (1.0 - p) / reps as f64).sqrt() })
}

/// How the second sample size follows the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum N2Rule {
    /// `n2 = [rho0 n1]`.
    NearestInt,
    /// `n1 / n2` runs through the convergents of `rho0`.
    Convergent,
    /// `n2 = n1 + [n1^kappa]`.
    OffsetPower(f64),
}

/// Where a table's estimates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonteCarlo,
    Oracle,
    Expansion(Variant),
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MonteCarlo => "mc",
            Method::Oracle => "oracle",
            Method::Expansion(v) => v.as_str(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Method::MonteCarlo),
            "oracle" => Ok(Method::Oracle),
            other => other
                .parse::<Variant>()
                .map(Method::Expansion)
                .map_err(|_| Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `rho0` as a named constant, a decimal string, or a JSON number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rho0 {
    Name(String),
    Number(f64),
}

impl Rho0 {
    pub fn spec(&self) -> Result<IrrationalSpec> {
        match self {
            Rho0::Name(s) => IrrationalSpec::parse(s),
            // Display for f64 never uses an exponent
            Rho0::Number(v) => IrrationalSpec::custom(&v.to_string(), None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct N1Range {
    pub start: u64,
    pub end: u64,
    #[serde(default = "one")]
    pub step: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockingSpec {
    pub alpha: f64,
    pub r0: u32,
    #[serde(default = "default_tail_eps")]
    pub tail_eps: f64,
}

fn default_tail_eps() -> f64 {
    BlockingConfig::default().tail_eps
}

fn default_b() -> usize {
    999
}

/// Experiment description; also the JSON config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Two populations; sample sizes are ignored.
    pub model: ModelSpec,
    /// Read Bernoulli `p` as `P(X = 1)` where a population does not say.
    #[serde(default)]
    pub success_prob: bool,
    #[serde(default = "default_rho0")]
    pub rho0: Rho0,
    pub n1: N1Range,
    pub n2_rule: N2Rule,
    pub alphas: Vec<f64>,
    #[serde(default = "one_u32")]
    pub reps: u32,
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocking: Option<BlockingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_budget: Option<u64>,
    /// Bootstrap resamples per data set (coverage runs).
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub convention: ConventionName,
    #[serde(default)]
    pub parametric: bool,
}

fn default_rho0() -> Rho0 {
    Rho0::Number(1.0)
}

fn one_u32() -> u32 {
    1
}

fn default_method() -> Method {
    Method::MonteCarlo
}

/// Serde face of [`CoverageConvention`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionName {
    #[default]
    Literal,
    Complement,
}

impl From<ConventionName> for CoverageConvention {
    fn from(c: ConventionName) -> Self {
        match c {
            ConventionName::Literal => CoverageConvention::Literal,
            ConventionName::Complement => CoverageConvention::Complement,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with_seed(text, None)
    }

    /// `seed`, when given, replaces (or supplies) the config's seed.
    pub fn from_json_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let malformed = |e: serde_json::Error| Error::invalid(format!("malformed config: {e}"));
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(malformed)?;
        if let (Some(seed), Some(map)) = (seed, value.as_object_mut()) {
            map.insert("seed".to_string(), seed.into());
        }
        let cfg: Self = serde_json::from_value(value).map_err(malformed)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.populations.len() != 2 {
            return Err(Error::PopulationCount { expected: 2, found: self.model.populations.len() });
        }
        self.model.laws(self.bernoulli_convention())?;
        let N1Range { start, end, step } = self.n1;
        if start == 0 || start > end || step == 0 {
            return Err(Error::invalid(format!("empty or invalid n1 range {start}..={end} step {step}")));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("alphas must be a nonempty list of values in (0, 1)"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.b == 0 {
            return Err(Error::invalid("B must be at least 1"));
        }
        if let N2Rule::OffsetPower(k) = self.n2_rule {
            if !(k > 0.0 && k < 1.0) {
                return Err(Error::invalid(format!("offset-power exponent must lie in (0, 1), got {k}")));
            }
        }
        self.blocking()?;
        Ok(())
    }

    pub fn bernoulli_convention(&self) -> BernoulliConvention {
        if self.success_prob {
            BernoulliConvention::SuccessProb
        } else {
            BernoulliConvention::Literal
        }
    }

    pub fn blocking(&self) -> Result<BlockingConfig> {
        match self.blocking {
            Some(b) => BlockingConfig::new(b.alpha, b.r0, b.tail_eps),
            None => Ok(BlockingConfig::default()),
        }
    }

    /// The `(n1, n2)` pairs swept by the experiment, in increasing `n1`.
    pub fn sample_size_pairs(&self) -> Result<Vec<(u64, u64)>> {
        let N1Range { start, end, step } = self.n1;
        let n1s = (start..=end).step_by(step as usize);
        match self.n2_rule {
            N2Rule::NearestInt => {
                let rho = self.rho0.spec()?;
                n1s.map(|n1| match rho.high_precision().round_multiple(n1) {
                    0 => Err(Error::invalid(format!("rho0 * {n1} rounds to a zero sample size"))),
                    n2 => Ok((n1, n2)),
                })
                .collect()
            }
            N2Rule::OffsetPower(k) => Ok(n1s.map(|n1| (n1, n1 + round_half_away((n1 as f64).powf(k)) as u64)).collect()),
            N2Rule::Convergent => {
                let rho = self.rho0.spec()?;
                // the range bounds n1; n2 is whatever the convergent dictates
                let cap = end.max((end as f64 / rho.value()).ceil() as u64).max(2);
                let plan = plan_sample_sizes(&rho, cap, PlanMode::Convergent)?;
                Ok(plan.pairs.iter().filter(|p| (start..=end).contains(&p.n1)).map(|p| (p.n1, p.n2)).collect())
            }
        }
    }

    fn model_for(&self, n1: u64, n2: u64) -> Result<MeanSumModel> {
        self.model.with_sizes(&[n1, n2], self.bernoulli_convention())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    OracleInfeasible,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::OracleInfeasible => "oracle-infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub n1: u64,
    pub n2: u64,
    pub x: f64,
    pub alpha: f64,
    /// Absent when the row could not be computed.
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub method: Method,
    pub seed: u64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTable {
    pub rows: Vec<SimRow>,
}

impl SimTable {
    pub const CSV_HEADER: &'static str = "n1,n2,x,alpha,estimate,stderr,method,seed,status";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.n1,
                r.n2,
                fmt_real(r.x),
                fmt_real(r.alpha),
                opt(r.estimate),
                opt(r.stderr),
                r.method,
                r.seed,
                r.status.as_str()
            ));
        }
        out
    }

    pub fn has_infeasible(&self) -> bool {
        self.rows.iter().any(|r| r.status == RowStatus::OracleInfeasible)
    }
}

/// `P(x)` at `x = z_alpha` for every sample-size pair and level.
pub fn run_figure1(config: &ExperimentConfig) -> Result<SimTable> {
    config.validate()?;
    let pairs = config.sample_size_pairs()?;
    let cfg = config.blocking()?;
    let budget = config.oracle_budget.unwrap_or(DEFAULT_ORACLE_BUDGET);
    let n_alpha = config.alphas.len();
    let blocks = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(n1, n2))| -> Result<Vec<SimRow>> {
            let model = config.model_for(n1, n2)?;
            let oracle = match config.method {
                Method::Oracle => Some(match StandardizedOracle::with_budget(&model, budget) {
                    Ok(o) => Some(o),
                    Err(Error::OracleInfeasible { .. }) => None,
                    Err(e) => return Err(e),
                }),
                _ => None,
            };
            config
                .alphas
                .iter()
                .enumerate()
                .map(|(a, &alpha)| {
                    let x = normal_quantile(alpha);
                    let row = (i * n_alpha + a) as u32;
                    let (estimate, stderr, status) = match config.method {
                        Method::MonteCarlo => {
                            let e = estimate_p(&model, x, config.reps, StreamKey::new(config.seed, row))?;
                            (Some(e.estimate), Some(e.stderr), RowStatus::Ok)
                        }
                        Method::Oracle => match oracle.as_ref().expect("set for oracle method") {
                            Some(o) => (Some(o.cdf(x)), Some(0.0), RowStatus::Ok),
                            None => (None, None, RowStatus::OracleInfeasible),
                        },
                        Method::Expansion(v) => (Some(full_expansion(&model, x, v, &cfg)?.total), Some(0.0), RowStatus::Ok),
                    };
                    Ok(SimRow { n1, n2, x, alpha, estimate, stderr, method: config.method, seed: config.seed, status })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTable { rows: blocks.into_iter().flatten().collect() })
}

/// Bootstrap coverage for every sample-size pair and level.
pub fn run_coverage(config: &ExperimentConfig) -> Result<Vec<CoverageResult>> {
    config.validate()?;
    let pairs = config.sample_size_pairs()?;
    let scheme = if config.parametric { ResampleScheme::Parametric } else { ResampleScheme::Nonparametric };
    let mut out = Vec::with_capacity(pairs.len() * config.alphas.len());
    for (i, &(n1, n2)) in pairs.iter().enumerate() {
        let model = config.model_for(n1, n2)?;
        for (a, &alpha) in config.alphas.iter().enumerate() {
            let settings = CoverageSettings {
                alpha,
                reps: config.reps,
                b: config.b,
                seed: config.seed,
                convention: config.convention.into(),
                scheme,
            };
            out.push(coverage_on_row(&model, &settings, (i * config.alphas.len() + a) as u32)?);
        }
    }
    Ok(out)
}

/// Standard deviation of the estimates at level `alpha` after removing a
/// least-squares trend `a + b / sqrt(n1)`.
pub fn oscillation_amplitude(table: &SimTable, alpha: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| (r.alpha - alpha).abs() <= 1e-12)
        .filter_map(|r| r.estimate.map(|e| (1.0 / (r.n1 as f64).sqrt(), e)))
        .collect();
    if pts.len() < 8 {
        return Err(Error::TooFewRows { needed: 8, found: pts.len() });
    }
    let m = pts.len() as f64;
    let tbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - tbar).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let ss: f64 = pts.iter().map(|p| (p.1 - ybar - slope * (p.0 - tbar)).powi(2)).sum();
    Ok((ss / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{exact_cdf_standardized, LatticeLaw};

    fn model(n1: u64, n2: u64) -> MeanSumModel {
        MeanSumModel::from_laws([(LatticeLaw::bernoulli(0.4).unwrap(), n1), (LatticeLaw::bernoulli(0.6).unwrap(), n2)]).unwrap()
    }

    fn config(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    const MODEL: &str = r#"{"populations":[{"kind":"bernoulli","p":0.4},{"kind":"bernoulli","p":0.6}]}"#;

    #[test]
    fn extreme_thresholds() {
        let m = model(10, 12);
        let hi = estimate_p(&m, 100.0, 500, StreamKey::new(1, 0)).unwrap();
        assert_eq!((hi.estimate, hi.stderr), (1.0, 0.0));
        let lo = estimate_p(&m, -100.0, 500, StreamKey::new(1, 0)).unwrap();
        assert_eq!((lo.estimate, lo.stderr), (0.0, 0.0));
    }

    #[test]
    fn mc_agrees_with_oracle() {
        let m = model(20, 20);
        let x = normal_quantile(0.95);
        let e = estimate_p(&m, x, 100_000, StreamKey::new(0, 0)).unwrap();
        let exact = exact_cdf_standardized(&m, x).unwrap();
        assert!((e.estimate - exact).abs() <= 3.0 * e.stderr, "{} vs {exact}", e.estimate);
    }

    #[test]
    fn amplitude_of_trend_is_zero() {
        let mk = |f: &dyn Fn(u64) -> f64| SimTable {
            rows: (10..30)
                .map(|n1| SimRow {
                    n1,
                    n2: n1,
                    x: 0.0,
                    alpha: 0.5,
                    estimate: Some(f(n1)),
                    stderr: Some(0.0),
                    method: Method::Oracle,
                    seed: 0,
                    status: RowStatus::Ok,
                })
                .collect(),
        };
        assert!(oscillation_amplitude(&mk(&|_| 0.3), 0.5).unwrap() < 1e-15);
        assert!(oscillation_amplitude(&mk(&|n| 0.2 + 0.7 / (n as f64).sqrt()), 0.5).unwrap() < 1e-12);
        assert!(oscillation_amplitude(&mk(&|n| (n % 2) as f64), 0.5).unwrap() > 0.4);
        assert!(matches!(oscillation_amplitude(&mk(&|_| 0.3), 0.9), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn sample_size_rules() {
        let base = format!(r#"{{"model":{MODEL},"n1":{{"start":10,"end":12}},"alphas":[0.95],"seed":1,"#);
        let near = config(&format!(r#"{base}"rho0":"sqrt2","n2_rule":"nearest-int"}}"#));
        assert_eq!(near.sample_size_pairs().unwrap(), vec![(10, 14), (11, 16), (12, 17)]);
        let off = config(&format!(r#"{base}"n2_rule":{{"offset-power":0.6}}}}"#));
        // 10^0.6 = 3.98, 11^0.6 = 4.21, 12^0.6 = 4.44
        assert_eq!(off.sample_size_pairs().unwrap(), vec![(10, 14), (11, 15), (12, 16)]);
        let one = config(&format!(r#"{base}"rho0":1,"n2_rule":"nearest-int"}}"#));
        assert_eq!(one.sample_size_pairs().unwrap(), vec![(10, 10), (11, 11), (12, 12)]);
        let conv = config(&format!(
            r#"{{"model":{MODEL},"n1":{{"start":2,"end":100}},"alphas":[0.95],"seed":1,"rho0":"sqrt2","n2_rule":"convergent"}}"#
        ));
        assert_eq!(conv.sample_size_pairs().unwrap(), vec![(3, 2), (7, 5), (17, 12), (41, 29), (99, 70)]);
    }

    #[test]
    fn config_validation() {
        let ok = format!(r#"{{"model":{MODEL},"n1":{{"start":10,"end":12}},"alphas":[0.95],"seed":1,"n2_rule":"nearest-int""#);
        assert!(ExperimentConfig::from_json(&format!("{ok}}}")).is_ok());
        assert!(ExperimentConfig::from_json(&format!(r#"{ok},"bogus":1}}"#)).is_err());
        assert!(ExperimentConfig::from_json(&format!(r#"{ok},"reps":0}}"#)).is_err());
        assert!(ExperimentConfig::from_json(&format!(r#"{ok},"method":"magic"}}"#)).is_err());
        assert!(ExperimentConfig::from_json(&ok.replace("0.95", "1.5").replace("nearest-int\"", "nearest-int\"}")).is_err());
        assert!(ExperimentConfig::from_json(&ok.replace("\"end\":12", "\"end\":5").replace("nearest-int\"", "nearest-int\"}")).is_err());
        let power = ok.replace("\"nearest-int\"", r#"{"offset-power":1.5}"#);
        assert!(ExperimentConfig::from_json(&format!("{power}}}")).is_err());
    }

    #[test]
    fn figure_rows_and_determinism() {
        let cfg = config(&format!(
            r#"{{"model":{MODEL},"n1":{{"start":10,"end":13}},"alphas":[0.95,0.75],"seed":5,"reps":1,"method":"mc","n2_rule":"nearest-int"}}"#
        ));
        let t = run_figure1(&cfg).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert!(t.rows.iter().all(|r| matches!(r.estimate, Some(e) if e == 0.0 || e == 1.0)));
        assert_eq!(run_figure1(&cfg).unwrap(), t);
        assert!(t.to_csv().starts_with("n1,n2,x,alpha,estimate,stderr,method,seed,status\n10,10,"));
    }

    #[test]
    fn infeasible_rows_are_flagged() {
        let cfg = config(&format!(
            r#"{{"model":{MODEL},"n1":{{"start":10,"end":40,"step":30}},"alphas":[0.95],"seed":5,"method":"oracle","oracle_budget":200,"n2_rule":"nearest-int"}}"#
        ));
        let t = run_figure1(&cfg).unwrap();
        assert_eq!(t.rows[0].status, RowStatus::Ok);
        assert_eq!(t.rows[1].status, RowStatus::OracleInfeasible);
        assert!(t.rows[1].estimate.is_none());
        assert!(t.has_infeasible());
        assert!(t.to_csv().lines().nth(2).unwrap().ends_with(",,oracle,5,oracle-infeasible"));
    }

    #[test]
    fn expansion_method_rows() {
        let cfg = config(&format!(
            r#"{{"model":{MODEL},"n1":{{"start":20,"end":20}},"alphas":[0.95],"seed":0,"method":"two-sample-direct","n2_rule":"nearest-int"}}"#
        ));
        let t = run_figure1(&cfg).unwrap();
        let m = model(20, 20);
        let expected = full_expansion(&m, normal_quantile(0.95), Variant::TwoSampleDirect, &BlockingConfig::default()).unwrap();
        assert_eq!(t.rows[0].estimate, Some(expected.total));
        assert_eq!(t.rows[0].method.to_string(), "two-sample-direct");
    }
}
