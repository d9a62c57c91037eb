//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature with
//! caller-supplied breakpoints.
//!
//! The tunneling integrands have a handful of sharp but known features
//! (DOS peaks, Fermi edges). Placing those at interval boundaries lets the
//! bisection concentrate nodes there while the rest of the range is covered
//! by a few panels.

#![allow(clippy::excessive_precision, clippy::needless_range_loop)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

/// Tolerances controlling [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Requested relative accuracy of the integral.
    pub relative_tolerance: f64,
    /// Absolute accuracy floor, in the units of the final rate (1/s).
    pub absolute_floor: f64,
    /// Maximum number of panels before giving up.
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(relative_tolerance: f64, absolute_floor: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            relative_tolerance,
            absolute_floor,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Tolerances for IV-curve evaluation, where ratios of nearly equal
    /// rates never enter.
    pub fn iv() -> Self {
        Self {
            relative_tolerance: 1e-7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance <= 1e-3) {
            return Err(Error::domain(format!(
                "relative tolerance {} outside (0, 1e-3]",
                self.relative_tolerance
            )));
        }
        if !(self.absolute_floor >= 0.0) {
            return Err(Error::domain("absolute floor must be non-negative"));
        }
        if self.max_subdivisions < 16 {
            return Err(Error::domain("max_subdivisions must be at least 16"));
        }
        Ok(())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-9,
            absolute_floor: 1e-30,
            max_subdivisions: 4000,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

// Kronrod abscissae; odd indices are shared with the 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_977_094_816,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Error-rescaled 21-point Kronrod estimate on `[a, b]`.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut f1 = [0.0; 10];
    let mut f2 = [0.0; 10];

    for j in 0..5 {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let v1 = f(center - x);
        let v2 = f(center + x);
        f1[jtw] = v1;
        f2[jtw] = v2;
        res_g += WG[j] * (v1 + v2);
        res_k += WGK[jtw] * (v1 + v2);
        res_abs += WGK[jtw] * (v1.abs() + v2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let x = half * XGK[jtwm1];
        let v1 = f(center - x);
        let v2 = f(center + x);
        f1[jtwm1] = v1;
        f2[jtwm1] = v2;
        res_k += WGK[jtwm1] * (v1 + v2);
        res_abs += WGK[jtwm1] * (v1.abs() + v2.abs());
    }

    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((f1[j] - mean).abs() + (f2[j] - mean).abs());
    }

    let abs_half = half.abs();
    let value = res_k * half;
    res_abs *= abs_half;
    res_asc *= abs_half;
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Panel { a, b, value, error }
}

/// Integrate `f` over `[a, b]`, splitting first at every breakpoint that
/// falls strictly inside the interval.
///
/// Panels are refined worst-first until the summed error estimate drops
/// below `max(relative_tolerance * |I|, absolute)`. `absolute` is in the
/// units of the integral itself; callers convert from rate units.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    relative_tolerance: f64,
    absolute: f64,
    max_subdivisions: usize,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::domain(format!("invalid integration range [{a}, {b}]")));
    }
    let mut points: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(a);
    edges.extend(points);
    edges.push(b);

    let mut heap = BinaryHeap::with_capacity(64);
    // Panels too narrow to split any further; their error is final.
    let mut frozen: Vec<Panel> = Vec::new();
    for w in edges.windows(2) {
        heap.push(kronrod21(&f, w[0], w[1]));
    }
    let mut panels = heap.len();

    loop {
        let (value, error) = heap
            .iter()
            .chain(frozen.iter())
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !error.is_finite() && heap.is_empty() {
            return Err(Error::Quadrature {
                estimate: value,
                error,
                subdivisions: panels,
            });
        }
        let target = (relative_tolerance * value.abs()).max(absolute);
        if error <= target || heap.is_empty() {
            return Ok(Integral { value, error, panels });
        }
        if panels >= max_subdivisions {
            return Err(Error::Quadrature {
                estimate: value,
                error,
                subdivisions: panels,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) < 1e3 * f64::EPSILON * mid.abs() {
            frozen.push(worst);
            continue;
        }
        heap.push(kronrod21(&f, worst.a, mid));
        heap.push(kronrod21(&f, mid, worst.b));
        panels += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &[], 1e-12, 0.0, 100).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn sharp_lorentzian_at_breakpoint() {
        let w = 1e-6;
        let f = |x: f64| w / (x * x + w * w);
        let r = integrate(f, -1.0, 1.0, &[0.0], 1e-10, 0.0, 2000).unwrap();
        let exact = 2.0 * (1.0 / w).atan();
        assert!(((r.value - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn inverse_sqrt_endpoint_singularity() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &[], 1e-9, 0.0, 2000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| (1.0 / x).sin() / x, 1e-9, 1.0, &[], 1e-12, 0.0, 16);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn rejects_bad_range() {
        assert!(integrate(|x| x, 1.0, 0.0, &[], 1e-9, 0.0, 100).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(1e-2, 0.0, 100).is_err());
        assert!(QuadratureSpec::new(1e-9, 0.0, 8).is_err());
        assert!(QuadratureSpec::new(1e-9, 0.0, 16).is_ok());
        QuadratureSpec::default().validate().unwrap();
        QuadratureSpec::iv().validate().unwrap();
    }
}
