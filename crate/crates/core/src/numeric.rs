//! Scalar numerics shared across the crate: the standard normal law,
//! compensated summation, rounding helpers and CSV number formatting.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

/// Tolerance (in standardized units) used when comparing a lattice point with
/// an evaluation point; keeps right-continuous step functions consistent
/// across floating-point routes.
pub const STANDARDIZED_TOL: f64 = 1e-9;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of the standard normal distribution function.
///
/// Acklam's rational approximation followed by one Halley step against
/// `normal_cdf`; absolute error is well below 1e-9 on (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Nearest integer with halves rounded away from zero.
pub fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds half away from zero
    x.round()
}

/// Floor that treats values within a relative 1e-9 of an integer as that
/// integer. Used where floating-point noise would otherwise move a point
/// across a jump of a right-continuous step function.
pub(crate) fn snapped_floor(y: f64) -> f64 {
    let r = y.round();
    if (y - r).abs() <= 1e-9 * y.abs().max(1.0) {
        r
    } else {
        y.floor()
    }
}

/// Fractional part `y - floor(y)` with the same snapping as [`snapped_floor`].
pub(crate) fn snapped_frac(y: f64) -> f64 {
    y - snapped_floor(y)
}

/// Formats a real like C's `%.17g`: 17 significant digits, trailing zeros
/// stripped, exponent form outside `[1e-4, 1e17)`.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(format!("{:.*}", decimals, x))
    } else {
        let m = strip_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", m, sign, exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

/// Grid `start, start+step, ..., <= end`, each point rounded to 12 decimals
/// so that nominal grid values such as 0 or 1.5 are represented exactly.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return if start == end { vec![start] } else { Vec::new() };
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            let x = start + i as f64 * step;
            (x * 1e12).round() / 1e12
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 1e-4, 0.01, 0.05, 0.25, 0.5, 0.75, 0.85, 0.95, 0.999, 1.0 - 1e-9] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-9 * p.max(1e-3), "p={p}");
        }
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
    }

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-15);
        assert_eq!(normal_cdf(-40.0), 0.0);
    }

    #[test]
    fn compensated_beats_naive() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..10_000 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-12).abs() < 1e-24);
    }

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(0.5), "0.5");
        assert_eq!(fmt_real(0.1), "0.10000000000000001");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(-2.75), "-2.75");
        assert_eq!(fmt_real(1e-20), "9.9999999999999995e-21");
        assert_eq!(fmt_real(2.5e-7), "2.4999999999999999e-07");
        assert_eq!(fmt_real(1.5e20), "1.5e+20");
        assert_eq!(fmt_real(123456.0), "123456");
        for &x in &[0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-7, 6.02e23, -0.048] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn grid_hits_nominal_points() {
        let g = linear_grid(-3.0, 3.0, 0.05);
        assert_eq!(g.len(), 121);
        assert_eq!(g[60], 0.0);
        assert_eq!(g[120], 3.0);
        assert_eq!(g[10], -2.5);
    }

    #[test]
    fn snapping() {
        assert_eq!(snapped_floor(-6.000000000000001), -6.0);
        assert_eq!(snapped_floor(2.9999999999999996), 3.0);
        assert_eq!(snapped_floor(-0.25), -1.0);
        assert!(snapped_frac(0.6 * 10.0).abs() < 1e-15);
    }
}
