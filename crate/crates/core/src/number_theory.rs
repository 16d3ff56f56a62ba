//! Continued fractions and convergents of high-precision constants,
//! sample-size planning, and equidistribution diagnostics.

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::edgeworth::psi;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, fmt_real};

/// Exponent `pi^2 / (12 ln 2)` of the Khinchin–Lévy law: `q_k^(1/k)` tends
/// to `exp(KHINCHIN_LEVY_EXPONENT)` for almost every real.
pub const KHINCHIN_LEVY_EXPONENT: f64 = PI * PI / (12.0 * std::f64::consts::LN_2);

/// Lévy's constant, the typical per-step growth of convergent denominators.
pub const LEVY_CONSTANT: f64 = 3.275_822_918_721_811;

const NAMED: &[(&str, &str, Option<f64>, Option<f64>)] = &[
    ("sqrt2", "1.4142135623730950488016887242096980785696718753769480731766797380", Some(1.0), None),
    ("sqrt3", "1.7320508075688772935274463415058723669428052538103806280558069795", Some(1.0), None),
    ("sqrt5", "2.2360679774997896964091736687312762354406183596115257242708972454", Some(1.0), None),
    ("e", "2.7182818284590452353602874713526624977572470936999595749669676277", Some(1.0), None),
    ("pi_over_2", "1.5707963267948966192313216916397514420985846996875529104874722962", None, Some(6.61)),
    ("golden", "1.6180339887498948482045868343656381177203091798057628621354486227", Some(1.0), None),
];

/// A real constant given by a decimal string of at least 50 significant
/// digits, with an optional known type.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrationalSpec {
    pub name: String,
    pub decimal_value: String,
    pub claimed_type: Option<f64>,
    /// Literature upper bound on the type; informational only.
    pub type_upper_bound: Option<f64>,
    value: HighPrecision,
}

impl IrrationalSpec {
    pub fn named(name: &str) -> Result<Self> {
        let &(name, digits, claimed, bound) = NAMED
            .iter()
            .find(|c| c.0 == name)
            .ok_or_else(|| Error::UnknownConstant(name.to_string()))?;
        Ok(Self {
            name: name.to_string(),
            decimal_value: digits.to_string(),
            claimed_type: claimed,
            type_upper_bound: bound,
            value: HighPrecision::parse(digits)?,
        })
    }

    /// User-supplied constant. The digits are trusted, not verified.
    pub fn custom(decimal_value: &str, claimed_type: Option<f64>) -> Result<Self> {
        if let Some(t) = claimed_type {
            if !(t >= 1.0) {
                return Err(Error::invalid(format!("type must be >= 1, got {t}")));
            }
        }
        Ok(Self {
            name: "custom".to_string(),
            decimal_value: decimal_value.to_string(),
            claimed_type,
            type_upper_bound: None,
            value: HighPrecision::parse(decimal_value)?,
        })
    }

    /// A named constant, or a custom decimal string.
    pub fn parse(s: &str) -> Result<Self> {
        match Self::named(s) {
            Ok(spec) => Ok(spec),
            Err(Error::UnknownConstant(_)) if s.starts_with(|c: char| c.is_ascii_digit()) => Self::custom(s, None),
            Err(e) => Err(e),
        }
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        NAMED.iter().map(|c| c.0)
    }

    pub fn value(&self) -> f64 {
        self.value.to_f64()
    }

    pub fn high_precision(&self) -> &HighPrecision {
        &self.value
    }
}

/// Positive decimal `digits / 10^scale`; the represented real lies within
/// one unit of the last retained digit.
#[derive(Debug, Clone, PartialEq)]
pub struct HighPrecision {
    digits: BigInt,
    scale: u32,
}

impl HighPrecision {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        let ok = |p: &str| p.chars().all(|c| c.is_ascii_digit());
        if int_part.is_empty() || !ok(int_part) || !ok(frac_part) {
            return Err(Error::invalid(format!("not a positive decimal: {s:?}")));
        }
        let digits: BigInt = format!("{int_part}{frac_part}")
            .parse()
            .map_err(|_| Error::invalid(format!("not a positive decimal: {s:?}")))?;
        if digits.is_zero() {
            return Err(Error::invalid("value must be positive"));
        }
        Ok(Self { digits, scale: frac_part.len() as u32 })
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.digits, &pow10(self.scale))
    }

    fn denominator(&self) -> BigInt {
        pow10(self.scale)
    }

    /// `<k * value>`, the distance to the nearest integer, for integer `k`.
    pub fn nearest_int_distance_of_multiple(&self, k: u64) -> f64 {
        let den = self.denominator();
        let r = (&self.digits * BigInt::from(k)).mod_floor(&den);
        let other = &den - &r;
        ratio_to_f64(&r.min(other), &den)
    }

    /// Nearest integer to `k * value`, halves rounded up.
    pub fn round_multiple(&self, k: u64) -> u64 {
        let den = self.denominator();
        let num = &self.digits * BigInt::from(2 * k) + &den;
        (num / (den * 2u32)).to_u64().expect("planning range fits in u64")
    }

    /// `|p/q - value|` as a float.
    pub fn abs_error(&self, p: i128, q: i128) -> f64 {
        let den = self.denominator();
        let diff = BigInt::from(p) * &den - &self.digits * BigInt::from(q);
        ratio_to_f64(&diff.abs(), &(den * BigInt::from(q)))
    }

    /// True when `|p/q - x| <= 1/q^2` for every `x` within one unit of the
    /// last digit.
    pub fn certifies_dirichlet_bound(&self, p: i128, q: i128) -> bool {
        let den = self.denominator();
        let q_big = BigInt::from(q);
        let diff = (BigInt::from(p) * &den - &self.digits * &q_big).abs();
        (diff + &q_big) * q_big <= den
    }
}

fn pow10(k: u32) -> BigInt {
    BigInt::from(10u32).pow(k)
}

fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    // integer quotient with ~128 significant bits, then rescale
    let k = (128 + den.bits() as i64 - num.bits() as i64).max(0);
    let q: BigInt = (num.abs() << k as usize) / den.abs();
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    let mut k = k;
    while k > 0 {
        let step = k.min(1000);
        v *= 2f64.powi(-(step as i32));
        k -= step;
    }
    if (num.sign() == num_bigint::Sign::Minus) != (den.sign() == num_bigint::Sign::Minus) {
        -v
    } else {
        v
    }
}

/// Distance from `x` to the nearest integer.
pub fn nearest_int_distance(x: f64) -> f64 {
    let f = x - x.floor();
    f.min(1.0 - f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub quotients: Vec<i128>,
    source: Option<HighPrecision>,
}

impl ContinuedFraction {
    /// Finite continued fraction `[a0; a1, ...]` standing for its own value.
    pub fn from_quotients(quotients: Vec<i128>) -> Result<Self> {
        if quotients.is_empty() {
            return Err(Error::invalid("continued fraction needs at least one quotient"));
        }
        if quotients[1..].iter().any(|&a| a < 1) {
            return Err(Error::invalid("partial quotients after the first must be positive"));
        }
        Ok(Self { quotients, source: None })
    }
}

/// Partial quotients of `value` that are identical for the lower and upper
/// ends of its decimal uncertainty interval.
fn certified_quotients(value: &HighPrecision, max_depth: usize) -> (Vec<i128>, bool) {
    let den = value.denominator();
    let (mut a, mut b) = (&value.digits - 1u32, den.clone());
    let (mut c, mut d) = (&value.digits + 1u32, den);
    let mut out = Vec::new();
    while out.len() < max_depth {
        if b.is_zero() || d.is_zero() {
            return (out, true);
        }
        let (q1, r1) = a.div_mod_floor(&b);
        let (q2, r2) = c.div_mod_floor(&d);
        if q1 != q2 {
            return (out, true);
        }
        match q1.to_i128() {
            Some(q) => out.push(q),
            None => return (out, true),
        }
        a = std::mem::replace(&mut b, r1);
        c = std::mem::replace(&mut d, r2);
    }
    (out, false)
}

/// First `depth` partial quotients, each certified against the precision
/// of the decimal value.
pub fn continued_fraction(value: &IrrationalSpec, depth: usize) -> Result<ContinuedFraction> {
    if depth == 0 {
        return Err(Error::invalid("depth must be positive"));
    }
    let (quotients, exhausted) = certified_quotients(&value.value, depth);
    if exhausted {
        return Err(Error::PrecisionExhausted { depth: quotients.len() + 1 });
    }
    Ok(ContinuedFraction { quotients, source: Some(value.value.clone()) })
}

/// A convergent `p/q` with its certified distance from the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergent {
    pub p: i128,
    pub q: i128,
    pub error_bound: f64,
}

/// Convergents by the three-term recurrence, each checked against
/// `|p/q - rho| <= 1/q^2`.
pub fn convergents(cf: &ContinuedFraction) -> Result<Vec<Convergent>> {
    let raw = convergent_pairs(&cf.quotients)?;
    let &(p_last, q_last) = raw.last().expect("nonempty quotient list");
    raw.into_iter()
        .map(|(p, q)| {
            let (error_bound, ok) = match &cf.source {
                Some(hp) => (hp.abs_error(p, q), hp.certifies_dirichlet_bound(p, q)),
                None => {
                    let diff = (BigInt::from(p) * BigInt::from(q_last) - BigInt::from(p_last) * BigInt::from(q)).abs();
                    let err = ratio_to_f64(&diff, &(BigInt::from(q) * BigInt::from(q_last)));
                    (err, diff * BigInt::from(q) <= BigInt::from(q_last))
                }
            };
            if !ok {
                return Err(Error::BoundViolated { p, q });
            }
            Ok(Convergent { p, q, error_bound })
        })
        .collect()
}

fn convergent_pairs(quotients: &[i128]) -> Result<Vec<(i128, i128)>> {
    if quotients.is_empty() {
        return Err(Error::invalid("continued fraction needs at least one quotient"));
    }
    let (mut p2, mut p1) = (0i128, 1i128);
    let (mut q2, mut q1) = (1i128, 0i128);
    let mut out = Vec::with_capacity(quotients.len());
    for (k, &a) in quotients.iter().enumerate() {
        let step = |x1: i128, x2: i128| a.checked_mul(x1).and_then(|v| v.checked_add(x2));
        let p = step(p1, p2).ok_or(Error::Overflow { index: k })?;
        let q = step(q1, q2).ok_or(Error::Overflow { index: k })?;
        out.push((p, q));
        (p2, p1) = (p1, p);
        (q2, q1) = (q1, q);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// `n1 / n2` runs through the convergents of the target.
    Convergent,
    /// `n2 = [rho0 * n1]` for each `n1`.
    NearestInt,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergent" => Ok(PlanMode::Convergent),
            "nearest-int" => Ok(PlanMode::NearestInt),
            other => Err(Error::invalid(format!("unknown plan mode {other:?}"))),
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Convergent => "convergent",
            PlanMode::NearestInt => "nearest-int",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanPair {
    pub n1: u64,
    pub n2: u64,
    /// Error of the ratio approximating `rho0`: `n1/n2` in convergent mode, `n2/n1` in nearest-int mode.
    pub abs_error: f64,
    /// Inverse square of that ratio's denominator.
    pub bound_q2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergentPlan {
    pub rho0: String,
    pub mode: PlanMode,
    pub pairs: Vec<PlanPair>,
}

impl ConvergentPlan {
    pub const CSV_HEADER: &'static str = "n1,n2,abs_error,bound_q2";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.pairs {
            out.push_str(&format!("{},{},{},{}\n", p.n1, p.n2, fmt_real(p.abs_error), fmt_real(p.bound_q2)));
        }
        out
    }
}

/// Sample-size pairs with both sizes in `2..=n_max`.
pub fn plan_sample_sizes(rho0: &IrrationalSpec, n_max: u64, mode: PlanMode) -> Result<ConvergentPlan> {
    if n_max < 2 {
        return Err(Error::invalid("n_max must be at least 2"));
    }
    let hp = rho0.high_precision();
    let pairs = match mode {
        PlanMode::Convergent => {
            let (quotients, exhausted) = certified_quotients(hp, 256);
            let cf = ContinuedFraction { quotients, source: Some(hp.clone()) };
            let all = convergents(&cf)?;
            let limit = n_max as i128;
            if exhausted && all.last().is_some_and(|c| c.p <= limit && c.q <= limit) {
                return Err(Error::PrecisionExhausted { depth: all.len() + 1 });
            }
            all.into_iter()
                .filter(|c| (2..=limit).contains(&c.p) && (2..=limit).contains(&c.q))
                .map(|c| PlanPair {
                    n1: c.p as u64,
                    n2: c.q as u64,
                    abs_error: c.error_bound,
                    bound_q2: 1.0 / (c.q as f64 * c.q as f64),
                })
                .collect()
        }
        PlanMode::NearestInt => (2..=n_max)
            .map(|n1| {
                let n2 = hp.round_multiple(n1);
                PlanPair {
                    n1,
                    n2,
                    abs_error: hp.abs_error(n2 as i128, n1 as i128),
                    bound_q2: 1.0 / (n1 as f64 * n1 as f64),
                }
            })
            .collect(),
    };
    Ok(ConvergentPlan { rho0: rho0.name.clone(), mode, pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioDiagnostics {
    pub rho: f64,
    pub n: u64,
    /// Best rational approximation of `rho` with denominator at most `L`.
    pub nearest_rational: Convergent,
    /// `(l, sqrt(n) |sin(l rho pi)|)` for `l = 1..=L`.
    pub sin_profile: Vec<(u64, f64)>,
    pub min_entry: f64,
    /// `rho - p/q` for the nearest rational.
    pub epsilon: f64,
    pub condition_fails: bool,
}

impl RatioDiagnostics {
    pub const CSV_HEADER: &'static str = "l,sqrt_n_abs_sin";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for &(l, v) in &self.sin_profile {
            out.push_str(&format!("{},{}\n", l, fmt_real(v)));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "rho={} nearest={}/{} epsilon={} min={} condition-fails={}",
            fmt_real(self.rho),
            self.nearest_rational.p,
            self.nearest_rational.q,
            fmt_real(self.epsilon),
            fmt_real(self.min_entry),
            self.condition_fails
        )
    }
}

/// Exact continued fraction of a finite float, which is a dyadic rational.
fn float_quotients(x: f64, max_terms: usize) -> Vec<i128> {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let (mut a, mut b) = if e >= 0 {
        (BigInt::from(mantissa) << e as usize, BigInt::one())
    } else {
        (BigInt::from(mantissa), BigInt::one() << (-e) as usize)
    };
    let mut out = Vec::new();
    while !b.is_zero() && out.len() < max_terms {
        let (q, r) = a.div_mod_floor(&b);
        match q.to_i128() {
            Some(q) => out.push(q),
            None => break,
        }
        a = std::mem::replace(&mut b, r);
    }
    out
}

/// `sqrt(n) |sin(l rho pi)|` for `l = 1..=L`. An entry is exactly zero when
/// `l rho` is an integer up to 1e-12.
pub fn sin_condition_profile(rho: f64, n: u64, l_max: u64) -> Result<RatioDiagnostics> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    if l_max == 0 {
        return Err(Error::invalid("L must be at least 1"));
    }
    let root_n = (n as f64).sqrt();
    let sin_profile: Vec<(u64, f64)> = (1..=l_max)
        .map(|l| {
            let t = l as f64 * rho;
            let v = if nearest_int_distance(t) <= 1e-12 * t.max(1.0) {
                0.0
            } else {
                root_n * (t * PI).sin().abs()
            };
            (l, v)
        })
        .collect();
    let min_entry = sin_profile.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);

    let pairs = convergent_pairs(&float_quotients(rho, 64))?;
    let &(p, q) = pairs
        .iter()
        .take_while(|&&(_, q)| q <= l_max as i128)
        .last()
        .expect("first convergent has denominator 1");
    let epsilon = rho - p as f64 / q as f64;
    Ok(RatioDiagnostics {
        rho,
        n,
        nearest_rational: Convergent { p, q, error_bound: epsilon.abs() },
        sin_profile,
        min_entry,
        epsilon,
        condition_fails: min_entry == 0.0,
    })
}

/// Diagnostics for `rho = e2 n1 / (e1 n2)` with `n = n1 + n2`.
pub fn ratio_diagnostics(e1: f64, e2: f64, n1: u64, n2: u64, l_max: u64) -> Result<RatioDiagnostics> {
    if !(e1 > 0.0 && e2 > 0.0) || n1 == 0 || n2 == 0 {
        return Err(Error::invalid("spans and sample sizes must be positive"));
    }
    sin_condition_profile(e2 * n1 as f64 / (e1 * n2 as f64), n1 + n2, l_max)
}

/// Dense polynomial `c0 + c1 x + c2 x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn one() -> Self {
        Polynomial(vec![1.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

fn breakpoints(n: u64, tau: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| {
            let t = tau * i as f64;
            t - t.floor()
        })
        .collect()
}

/// Every jump of `z -> sum_i q(i/N) psi(z - tau i)` inside `[0, 1)`, its
/// left neighbour at distance 1e-9, and midpoints between jumps.
pub fn chi_breakpoint_grid(n: u64, tau: f64) -> Vec<f64> {
    let mut b = breakpoints(n, tau);
    b.sort_by(f64::total_cmp);
    b.dedup();
    let mut grid = Vec::with_capacity(3 * b.len() + 1);
    for (k, &z) in b.iter().enumerate() {
        grid.push(z);
        grid.push(z - 1e-9);
        let next = b.get(k + 1).copied().unwrap_or(b[0] + 1.0);
        grid.push(0.5 * (z + next));
    }
    grid
}

/// `max_z |sum_{i=1}^N q(i/N) psi(z - tau i)|` over the supplied grid.
pub fn chi_discrepancy(n: u64, q: &Polynomial, tau: f64, z_grid: &[f64]) -> Result<f64> {
    if n == 0 || z_grid.is_empty() {
        return Err(Error::invalid("chi needs N >= 1 and a nonempty grid"));
    }
    let b = breakpoints(n, tau);
    let w: Vec<f64> = (1..=n).map(|i| q.eval(i as f64 / n as f64)).collect();
    let sup = z_grid
        .par_iter()
        .map(|&z| compensated_sum(b.iter().zip(&w).map(|(&bi, &wi)| wi * psi(z - bi))).abs())
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}

/// [`chi_discrepancy`] over [`chi_breakpoint_grid`].
pub fn chi_sup(n: u64, q: &Polynomial, tau: f64) -> Result<f64> {
    chi_discrepancy(n, q, tau, &chi_breakpoint_grid(n, tau))
}

/// `C (N/m + sum_{l=1}^m 1 / (l |sin(l tau pi)|))`.
pub fn erdos_turan_rhs(n: u64, m: u64, tau: f64, c: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let mut acc = crate::numeric::CompensatedSum::new();
    for l in 1..=m {
        let t = l as f64 * tau;
        if nearest_int_distance(t) <= 1e-12 * t.abs().max(1.0) {
            return Err(Error::RationalTau { m, l });
        }
        acc.add(1.0 / (l as f64 * (t * PI).sin().abs()));
    }
    Ok(c * (n as f64 / m as f64 + acc.value()))
}

/// `sum_{l=1}^m 1 / (l <l rho0>)` from the decimal digits of `rho0`.
pub fn type_sum(rho0: &IrrationalSpec, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let hp = rho0.high_precision();
    let mut acc = crate::numeric::CompensatedSum::new();
    for l in 1..=m {
        let d = hp.nearest_int_distance_of_multiple(l);
        if d == 0.0 {
            return Err(Error::invalid(format!("<{l} rho0> vanishes; rho0 is rational")));
        }
        acc.add(1.0 / (l as f64 * d));
    }
    Ok(acc.value())
}
