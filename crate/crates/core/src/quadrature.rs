//! Globally adaptive Gauss–Kronrod (G10/K21) quadrature.
//!
//! The integrator keeps a priority queue of panels ordered by error estimate
//! and bisects the worst one until the summed error meets
//! `max(abs_tol, rel_tol·|I|)`. Start panels can be supplied explicitly, which
//! is how callers align panels with peaks or with oscillation periods.

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;

use crate::error::{domain, Error, Result};

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
    0.123_491_976_262_065_851_077_702_734_285_583,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the odd-indexed Kronrod nodes `XGK[1], XGK[3], …`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error / self.value.abs()
        }
    }
}

impl core::ops::Add for Estimate {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-15,
            rel_tol: 1e-11,
            max_panels: 200_000,
        }
    }
}

/// One G10/K21 application on `[a, b]`: `(kronrod, |kronrod − gauss|)`.
pub fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
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
        // Ties broken by position so the refinement order is deterministic.
        self.est
            .error
            .total_cmp(&other.est.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Adaptive integration over consecutive start panels given by sorted edges.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    edges: &[f64],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    if edges.len() < 2 {
        return Err(domain!("quadrature needs at least two panel edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(domain!("panel edges must be finite and non-decreasing"));
    }
    let mut heap: BinaryHeap<Panel> = edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| Panel {
            a: w[0],
            b: w[1],
            est: gauss_kronrod_21(&f, w[0], w[1]),
        })
        .collect();
    let scale = edges[edges.len() - 1].abs().max(edges[0].abs()).max(1e-300);
    let fail = |error: f64, intervals: usize| Error::Integrability {
        lower: edges[0],
        upper: edges[edges.len() - 1],
        error,
        intervals,
    };
    let mut frozen = Estimate::default();
    let mut total = heap.iter().fold(frozen, |acc, p| acc + p.est);
    for iteration in 1usize.. {
        if iteration % 1024 == 0 {
            // Re-sum to stop drift in the running totals.
            total = heap.iter().fold(frozen, |acc, p| acc + p.est);
        }
        if !total.value.is_finite() || !total.error.is_finite() {
            return Err(fail(f64::INFINITY, heap.len()));
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * total.value.abs());
        if total.error <= target {
            return Ok(total);
        }
        if heap.len() >= cfg.max_panels || frozen.error > target {
            return Err(fail(total.error, heap.len()));
        }
        let Some(worst) = heap.pop() else {
            return Ok(total);
        };
        if (worst.b - worst.a) <= 1e-13 * scale {
            // Cannot subdivide further in floating point.
            frozen = frozen + worst.est;
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let left = gauss_kronrod_21(&f, worst.a, mid);
        let right = gauss_kronrod_21(&f, mid, worst.b);
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            est: right,
        });
    }
    unreachable!()
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Estimate> {
    integrate_panels(f, &[a, b], cfg)
}

/// `∫_c^∞ f(ω) dω` through the map `ω = c/(1 − u)`, `u ∈ [0, 1)`. Requires `c > 0`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    c: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(domain!(
            "semi-infinite map needs a positive finite lower limit, got {c}"
        ));
    }
    let mapped = |u: f64| {
        let s = 1.0 - u;
        if s <= 0.0 {
            return 0.0;
        }
        let w = c / s;
        let v = f(w) * c / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_panels(mapped, &[0.0, 0.5, 0.75, 0.875, 1.0], cfg)
}

/// Composite Simpson rule on equally spaced samples; `values.len()` must be
/// odd and at least 3.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return Err(domain!(
            "composite Simpson needs an odd number ≥ 3 of samples, got {n}"
        ));
    }
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values[1..n - 1].iter().enumerate() {
        if i % 2 == 0 {
            odd += v;
        } else {
            even += v;
        }
    }
    Ok(h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even))
}
