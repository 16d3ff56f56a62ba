//! Edgeworth approximations to the law of a standardized sum of lattice
//! sample means: the smooth one-term expansion, the one-sample continuity
//! correction, and the two-sample lattice term `K_n` in its direct and
//! blocked (Taylor-expanded) forms.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{LatticeLaw, MeanSumModel, Population};
use crate::numeric::{normal_cdf, normal_pdf, snapped_floor, snapped_frac, CompensatedSum};

/// Sawtooth `floor(x) - x + 1/2`.
pub fn psi(x: f64) -> f64 {
    x.floor() - x + 0.5
}

/// `psi` with arguments within 1e-9 of an integer treated as that integer,
/// so the right-continuous value is taken at lattice points.
fn psi_at_lattice(x: f64) -> f64 {
    snapped_floor(x) - x + 0.5
}

/// What the expansions need to know about one population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationTerms {
    pub span: f64,
    pub mean: f64,
    pub variance: f64,
    pub mu3: f64,
    pub n: u64,
    /// `frac(n (x - mu) / e)`: where the centred lattice of the sum sits
    /// relative to the origin, in units of the span.
    pub lattice_phase: f64,
}

impl PopulationTerms {
    /// `index_mean` is `(mu - offset) / span`.
    pub fn new(span: f64, mean: f64, variance: f64, mu3: f64, n: u64, index_mean: f64) -> Self {
        Self {
            span,
            mean,
            variance,
            mu3,
            n,
            lattice_phase: snapped_frac(-(n as f64) * index_mean),
        }
    }

    pub fn from_population(p: &Population) -> Self {
        let m = p.law.moments();
        Self::new(p.law.span(), m.mean, m.variance, m.mu3, p.n, p.law.index_mean())
    }

    fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    fn xi(&self) -> f64 {
        self.span / (self.sd() * (self.n as f64).sqrt()) * self.lattice_phase
    }
}

pub fn model_terms(model: &MeanSumModel) -> Vec<PopulationTerms> {
    model.populations().iter().map(PopulationTerms::from_population).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Smooth,
    OneSample,
    TwoSampleDirect,
    TwoSampleBlocked,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Smooth => "smooth",
            Variant::OneSample => "one-sample",
            Variant::TwoSampleDirect => "two-sample-direct",
            Variant::TwoSampleBlocked => "two-sample-blocked",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Variant::Smooth),
            "one-sample" => Ok(Variant::OneSample),
            "two-sample-direct" => Ok(Variant::TwoSampleDirect),
            "two-sample-blocked" => Ok(Variant::TwoSampleBlocked),
            other => Err(Error::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionBreakdown {
    pub x: f64,
    pub normal: f64,
    pub skew: f64,
    pub lattice: f64,
    pub total: f64,
    pub variant: Variant,
}

impl ExpansionBreakdown {
    pub const CSV_HEADER: &'static str = "x,normal,skew,lattice,total,variant";

    fn assemble(x: f64, skew: f64, lattice: f64, variant: Variant) -> Self {
        let normal = normal_cdf(x);
        Self { x, normal, skew, lattice, total: normal + skew + lattice, variant }
    }

    pub fn csv_row(&self) -> String {
        use crate::numeric::fmt_real;
        format!(
            "{},{},{},{},{},{}",
            fmt_real(self.x),
            fmt_real(self.normal),
            fmt_real(self.skew),
            fmt_real(self.lattice),
            fmt_real(self.total),
            self.variant
        )
    }
}

/// Settings for the blocked form of `K_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockingConfig {
    /// Blocks hold `2 floor(n^alpha) + 1` consecutive integers.
    pub alpha: f64,
    /// Highest Taylor order.
    pub r0: u32,
    /// Gaussian factors below this are treated as zero.
    pub tail_eps: f64,
    half_width: Option<u64>,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        Self { alpha: 0.4, r0: 8, tail_eps: 1e-14, half_width: None }
    }
}

impl BlockingConfig {
    pub fn new(alpha: f64, r0: u32, tail_eps: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        let min = Self::min_r0(alpha);
        if r0 < min {
            return Err(Error::invalid(format!("r0 must be at least {min} for alpha = {alpha}, got {r0}")));
        }
        if !(tail_eps > 0.0 && tail_eps <= 1e-6) {
            return Err(Error::invalid(format!("tail_eps must lie in (0, 1e-6], got {tail_eps}")));
        }
        Ok(Self { alpha, r0, tail_eps, half_width: None })
    }

    /// Smallest admissible Taylor order, `ceil(4 alpha / (1 - 2 alpha))`.
    pub fn min_r0(alpha: f64) -> u32 {
        (4.0 * alpha / (1.0 - 2.0 * alpha) - 1e-9).ceil().max(0.0) as u32
    }

    /// Fixed block half-width and Taylor order, bypassing the `n^alpha`
    /// rule and the order constraint. Half-width 0 with `r0 = 0` makes the
    /// blocked form coincide with the direct one.
    pub fn with_fixed_blocks(half_width: u64, r0: u32, tail_eps: f64) -> Self {
        Self { alpha: 0.0, r0, tail_eps, half_width: Some(half_width) }
    }

    pub fn half_width(&self, n: u64) -> u64 {
        self.half_width
            .unwrap_or_else(|| (n as f64).powf(self.alpha).floor() as u64)
    }
}

/// `beta = n^{1/2} sum_j n_j^{-2} mu3_j / (sum_j n_j^{-1} sigma_j^2)^{3/2}`.
pub fn skewness_beta(model: &MeanSumModel) -> f64 {
    skewness_from_terms(&model_terms(model))
}

pub fn skewness_from_terms(terms: &[PopulationTerms]) -> f64 {
    let n: u64 = terms.iter().map(|t| t.n).sum();
    let num = crate::numeric::compensated_sum(terms.iter().map(|t| t.mu3 / (t.n as f64).powi(2)));
    let var = crate::numeric::compensated_sum(terms.iter().map(|t| t.variance / t.n as f64));
    (n as f64).sqrt() * num / var.powf(1.5)
}

fn skew_term(terms: &[PopulationTerms], x: f64) -> f64 {
    let n: u64 = terms.iter().map(|t| t.n).sum();
    let beta = skewness_from_terms(terms);
    beta * (1.0 - x * x) * normal_pdf(x) / (6.0 * (n as f64).sqrt())
}

pub fn smooth_expansion(model: &MeanSumModel, x: f64) -> ExpansionBreakdown {
    let terms = model_terms(model);
    ExpansionBreakdown::assemble(x, skew_term(&terms, x), 0.0, Variant::Smooth)
}

/// One mean with the sawtooth continuity correction
/// `n^{-1/2} (e/sigma) psi{(x - xi_n) sigma n^{1/2} / e} phi(x)`.
pub fn one_sample_expansion(law: &LatticeLaw, n: u64, x: f64) -> Result<ExpansionBreakdown> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let t = PopulationTerms::from_population(&Population { law: law.clone(), n });
    one_sample_from_terms(&t, x)
}

fn one_sample_from_terms(t: &PopulationTerms, x: f64) -> Result<ExpansionBreakdown> {
    let root_n = (t.n as f64).sqrt();
    let sd = t.sd();
    // xi_n = (e / sigma n^{1/2}) {1/2 - psi(n x0 / e)}, and 1/2 - psi(y) = frac(y)
    let xi = t.xi();
    let lattice = (t.span / sd) * psi_at_lattice((x - xi) * sd * root_n / t.span) * normal_pdf(x) / root_n;
    Ok(ExpansionBreakdown::assemble(x, skew_term(std::slice::from_ref(t), x), lattice, Variant::OneSample))
}

/// Coefficients of the two-sample lattice term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub gamma: f64,
    pub xi1n: f64,
    pub xi2n: f64,
    pub n1: u64,
    pub n2: u64,
    pub e1: f64,
    pub e2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

pub fn lattice_coefficients(model: &MeanSumModel) -> Result<LatticeCoefficients> {
    LatticeCoefficients::from_terms(&model_terms(model))
}

impl LatticeCoefficients {
    pub fn from_terms(terms: &[PopulationTerms]) -> Result<Self> {
        let [a, b] = terms else {
            return Err(Error::PopulationCount { expected: 2, found: terms.len() });
        };
        let (n1, n2) = (a.n as f64, b.n as f64);
        let (s1, s2) = (a.sd(), b.sd());
        let total = a.variance / n1 + b.variance / n2;
        Ok(Self {
            c1: (a.variance / n1 / total).sqrt(),
            c2: (b.variance / n2 / total).sqrt(),
            c3: b.span * n1 / (s1 * n2),
            // written with e1 in some sources; e2 is what makes u = nu / n1^{1/2}
            // reproduce the second Gaussian factor of the direct form
            c4: (b.span / s2) * (n1 / n2).sqrt(),
            gamma: (a.span / s1) * (b.span / s2),
            xi1n: a.xi(),
            xi2n: b.xi(),
            n1: a.n,
            n2: b.n,
            e1: a.span,
            e2: b.span,
            sigma1: s1,
            sigma2: s2,
        })
    }

    /// `rho_12 = e2 n1 / (e1 n2)`.
    pub fn lattice_ratio(&self) -> f64 {
        self.e2 * self.n1 as f64 / (self.e1 * self.n2 as f64)
    }

    /// `{x - (c1 xi_1n + c2 xi_2n)} sigma1 n1^{1/2} / (c1 e1)`.
    pub fn xi_n(&self, x: f64) -> f64 {
        (x - (self.c1 * self.xi1n + self.c2 * self.xi2n)) * self.sigma1 * (self.n1 as f64).sqrt() / (self.c1 * self.e1)
    }

    /// Slopes `(a, b)` of the two Gaussian arguments in `nu`:
    /// `phi(x/c1 - a nu) phi(b nu)`.
    fn gaussian_slopes(&self) -> (f64, f64) {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        (self.e2 * n1.sqrt() / (self.sigma1 * n2), self.e2 / (self.sigma2 * n2.sqrt()))
    }

    /// Range of `nu` where both Gaussian factors can exceed `tail_eps`.
    fn nu_window(&self, x: f64, tail_eps: f64) -> Option<(i64, i64)> {
        let reach = (2.0 * (1.0 / tail_eps).ln()).sqrt() + 2.0;
        let (a, b) = self.gaussian_slopes();
        let centre = x / self.c1;
        let lo = (-reach / b).ceil().max(((centre - reach) / a).ceil());
        let hi = (reach / b).floor().min(((centre + reach) / a).floor());
        (lo <= hi).then_some((lo as i64, hi as i64))
    }

    /// `K_n(x)` summed directly over lattice indices.
    pub fn k_direct(&self, x: f64, tail_eps: f64) -> f64 {
        let Some((lo, hi)) = self.nu_window(x, tail_eps) else {
            return 0.0;
        };
        let (a, b) = self.gaussian_slopes();
        let centre = x / self.c1;
        let xi = self.xi_n(x);
        let rho = self.lattice_ratio();
        let mut acc = CompensatedSum::new();
        for nu in lo..=hi {
            let v = nu as f64;
            acc.add(normal_pdf(centre - a * v) * normal_pdf(b * v) * psi_at_lattice(xi - rho * v));
        }
        self.gamma * acc.value()
    }

    /// `K_n(x)` with the Gaussian factor Taylor-expanded to order `r0`
    /// about the centre of each block of consecutive indices.
    pub fn k_blocked(&self, x: f64, cfg: &BlockingConfig) -> f64 {
        let Some((lo, hi)) = self.nu_window(x, cfg.tail_eps) else {
            return 0.0;
        };
        let h = cfg.half_width(self.n1 + self.n2) as i64;
        let width = 2 * h + 1;
        let r0 = cfg.r0 as usize;
        let root_n1 = (self.n1 as f64).sqrt();
        let xi = self.xi_n(x);
        let rho = self.lattice_ratio();
        let centre = x / self.c1;

        // scale[r] = 1 / (r! n1^{r/2})
        let mut scale = vec![1.0; r0 + 1];
        for r in 1..=r0 {
            scale[r] = scale[r - 1] / (r as f64 * root_n1);
        }
        let binom = binomial_rows(r0);

        let mut inner = vec![0.0; r0 + 1];
        let mut acc = CompensatedSum::new();
        for l in (lo + h).div_euclid(width)..=(hi + h).div_euclid(width) {
            let nu_bar = l * width;
            inner.iter_mut().for_each(|v| *v = 0.0);
            for offset in -h..=h {
                let s = psi_at_lattice(xi - rho * (nu_bar + offset) as f64);
                let mut pow = 1.0;
                for v in inner.iter_mut() {
                    *v += pow * s;
                    pow *= offset as f64;
                }
            }
            let u = nu_bar as f64 / root_n1;
            let derivs = gaussian_product_derivatives(centre - self.c3 * u, self.c4 * u, self.c3, self.c4, r0, &binom);
            for r in 0..=r0 {
                acc.add(derivs[r] * scale[r] * inner[r]);
            }
        }
        self.gamma * acc.value()
    }
}

/// Probabilists' Hermite polynomials `He_0..=He_r` at `x`.
fn hermite(x: f64, r: usize) -> Vec<f64> {
    let mut he = vec![1.0; r + 1];
    if r >= 1 {
        he[1] = x;
    }
    for k in 1..r {
        he[k + 1] = x * he[k] - k as f64 * he[k - 1];
    }
    he
}

fn binomial_rows(r: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for k in 1..=r {
        let prev = &rows[k - 1];
        let mut row = vec![1.0; k + 1];
        for s in 1..k {
            row[s] = prev[s - 1] + prev[s];
        }
        rows.push(row);
    }
    rows
}

/// `d^r/du^r [phi(w1) phi(w2)]` for `r = 0..=r_max`, where
/// `w1 = x/c1 - c3 u` and `w2 = c4 u`, by Leibniz' rule with
/// `phi^{(k)} = (-1)^k He_k phi`.
fn gaussian_product_derivatives(w1: f64, w2: f64, c3: f64, c4: f64, r_max: usize, binom: &[Vec<f64>]) -> Vec<f64> {
    let h1 = hermite(w1, r_max);
    let h2 = hermite(w2, r_max);
    let base = normal_pdf(w1) * normal_pdf(w2);
    (0..=r_max)
        .map(|r| {
            let mut s = 0.0;
            for k in 0..=r {
                // d^k/du^k phi(w2) = (-c4)^k He_k(w2) phi(w2); the first factor
                // picks up (-c3)^{r-k} (-1)^{r-k} = c3^{r-k}
                s += binom[r][k] * c3.powi((r - k) as i32) * h1[r - k] * (-c4).powi(k as i32) * h2[k];
            }
            base * s
        })
        .collect()
}

pub fn xi_n(model: &MeanSumModel, x: f64) -> Result<f64> {
    Ok(lattice_coefficients(model)?.xi_n(x))
}

pub fn k_direct(model: &MeanSumModel, x: f64, tail_eps: f64) -> Result<f64> {
    Ok(lattice_coefficients(model)?.k_direct(x, tail_eps))
}

pub fn k_blocked(model: &MeanSumModel, x: f64, cfg: &BlockingConfig) -> Result<f64> {
    Ok(lattice_coefficients(model)?.k_blocked(x, cfg))
}

/// Normal, skewness and lattice terms for the requested variant.
pub fn full_expansion(model: &MeanSumModel, x: f64, variant: Variant, cfg: &BlockingConfig) -> Result<ExpansionBreakdown> {
    expansion_from_terms(&model_terms(model), x, variant, cfg)
}

pub fn expansion_from_terms(
    terms: &[PopulationTerms],
    x: f64,
    variant: Variant,
    cfg: &BlockingConfig,
) -> Result<ExpansionBreakdown> {
    if terms.is_empty() {
        return Err(Error::invalid("no populations"));
    }
    if let Some(j) = terms.iter().position(|t| !(t.variance > 0.0)) {
        return Err(Error::ZeroVariance(j));
    }
    match variant {
        Variant::Smooth => Ok(ExpansionBreakdown::assemble(x, skew_term(terms, x), 0.0, variant)),
        Variant::OneSample => match terms {
            [t] => one_sample_from_terms(t, x),
            _ => Err(Error::PopulationCount { expected: 1, found: terms.len() }),
        },
        Variant::TwoSampleDirect | Variant::TwoSampleBlocked => {
            let coef = LatticeCoefficients::from_terms(terms)?;
            let k = if variant == Variant::TwoSampleDirect {
                coef.k_direct(x, cfg.tail_eps)
            } else {
                coef.k_blocked(x, cfg)
            };
            let lattice = k / ((coef.n1 as f64) * (coef.n2 as f64)).sqrt();
            Ok(ExpansionBreakdown::assemble(x, skew_term(terms, x), lattice, variant))
        }
    }
}
