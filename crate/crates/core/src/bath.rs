//! Spectral densities, the static bath functionals `S` and `X_t`, and the
//! exponential decomposition of the bath correlation function.
//!
//! `S = ∫ (J/π) coth(βω/2) dω` and `X_t = ∫ (2/πω) J (1 − cos ωt) dω` are the
//! only bath inputs the bounds see. The decomposition feeds the hierarchy
//! solver and is available for the underdamped Brownian form only.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64;
#[cfg(not(any(test, feature = "std")))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate_panels, Estimate, QuadConfig};
use crate::spline::CubicSpline;

/// Relative accuracy promised for `S` and `X_t`.
pub const FUNCTIONAL_REL_TOL: f64 = 1e-8;
/// Absolute floor for `X_t` when the value itself is close to zero.
pub const FUNCTIONAL_ABS_FLOOR: f64 = 1e-12;
/// Largest admissible deviation of a decomposition from the numerical `C(t)`.
pub const RECONSTRUCTION_TOL: f64 = 1e-3;

fn quad_cfg() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-16,
        rel_tol: 1e-11,
        max_panels: 400_000,
    }
}

type DensityFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A user-supplied density with the metadata the quadratures need.
#[derive(Clone)]
pub struct CustomDensity {
    func: Arc<DensityFn>,
    scale: f64,
    tail_exponent: f64,
    label: String,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .field("tail_exponent", &self.tail_exponent)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum SpectralDensity {
    /// `J(ω) = γλ²ω / [(ω² − ω₀²)² + γ²ω²]`.
    UnderdampedBrownian {
        omega0: f64,
        gamma: f64,
        lambda: f64,
    },
    Custom(CustomDensity),
}

impl SpectralDensity {
    pub fn underdamped(omega0: f64, gamma: f64, lambda: f64) -> Result<Self> {
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(domain!(
                "resonance frequency must be positive and finite, got {omega0}"
            ));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(domain!("width must be positive and finite, got {gamma}"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(domain!(
                "coupling strength must be non-negative and finite, got {lambda}"
            ));
        }
        Ok(Self::UnderdampedBrownian {
            omega0,
            gamma,
            lambda,
        })
    }

    /// Arbitrary `J(ω)`. `scale` is its characteristic frequency (peak or
    /// cutoff) and `tail_exponent` the `p` in `J ~ ω^{-p}` at large `ω`;
    /// `p > 1` is needed for `S` to exist.
    pub fn custom<F>(
        func: F,
        scale: f64,
        tail_exponent: f64,
        label: impl Into<String>,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(domain!(
                "characteristic frequency must be positive, got {scale}"
            ));
        }
        if !(tail_exponent > 1.0) {
            return Err(domain!(
                "tail exponent must exceed 1 for an integrable density, got {tail_exponent}"
            ));
        }
        Ok(Self::Custom(CustomDensity {
            func: Arc::new(func),
            scale,
            tail_exponent,
            label: label.into(),
        }))
    }

    /// Density sampled at `(ω, J)` pairs. Interpolation is shape preserving
    /// (so it stays non-negative); below the first sample `J` falls linearly
    /// to zero and above the last it decays as `ω^{-p}`.
    pub fn tabulated(omegas: &[f64], values: &[f64], tail_exponent: f64) -> Result<Self> {
        if omegas.first().is_some_and(|&w| w < 0.0) {
            return Err(domain!("tabulated frequencies must be non-negative"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(domain!("tabulated spectral density has negative entries"));
        }
        let spline = CubicSpline::monotone(omegas, values)?;
        let (w_first, w_last) = (omegas[0], omegas[omegas.len() - 1]);
        let (j_first, j_last) = (values[0], values[values.len() - 1]);
        if w_first == 0.0 && j_first != 0.0 {
            return Err(domain!("tabulated density must vanish at ω = 0"));
        }
        let peak = omegas
            .iter()
            .zip(values)
            .fold((w_last, f64::NEG_INFINITY), |acc, (&w, &v)| {
                if v > acc.1 {
                    (w, v)
                } else {
                    acc
                }
            })
            .0
            .max(w_first)
            .max(1e-300);
        let func = move |w: f64| {
            if w <= 0.0 {
                0.0
            } else if w < w_first {
                j_first * w / w_first
            } else if w > w_last {
                j_last * (w / w_last).powf(-tail_exponent)
            } else {
                spline.eval(w).max(0.0)
            }
        };
        let scale = if peak > 0.0 { peak } else { w_last };
        Self::custom(func, scale, tail_exponent, "tabulated")
    }

    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Self::UnderdampedBrownian {
                omega0,
                gamma,
                lambda,
            } => {
                let d = w * w - omega0 * omega0;
                gamma * lambda * lambda * w / (d * d + gamma * gamma * w * w)
            }
            Self::Custom(c) => (c.func)(w),
        }
    }

    /// True when the density vanishes identically.
    pub fn is_zero(&self) -> bool {
        matches!(self, Self::UnderdampedBrownian { lambda, .. } if *lambda == 0.0)
    }

    /// Characteristic frequency: `ω₀` for the underdamped form.
    pub fn scale(&self) -> f64 {
        match self {
            Self::UnderdampedBrownian { omega0, .. } => *omega0,
            Self::Custom(c) => c.scale,
        }
    }

    /// Frequencies where the integrand changes character fastest.
    fn features(&self) -> Vec<f64> {
        match self {
            Self::UnderdampedBrownian { omega0, gamma, .. } => {
                let mut v = vec![*omega0];
                for k in [1.0, 3.0, 10.0, 30.0] {
                    v.push(omega0 - k * gamma);
                    v.push(omega0 + k * gamma);
                }
                v.retain(|w| *w > 0.0);
                v
            }
            Self::Custom(c) => vec![0.5 * c.scale, c.scale, 2.0 * c.scale],
        }
    }

    /// Frequency beyond which `J/ω` and `J·coth` are taken to be decreasing.
    fn monotone_from(&self) -> f64 {
        match self {
            Self::UnderdampedBrownian { omega0, gamma, .. } => {
                (2.0 * omega0).max(omega0 + 30.0 * gamma)
            }
            Self::Custom(c) => 4.0 * c.scale,
        }
    }
}

/// `coth(βω/2)`, with `β = ∞` meaning zero temperature.
pub fn coth_half(beta: f64, w: f64) -> f64 {
    if beta.is_infinite() {
        return 1.0;
    }
    let x = 0.5 * beta * w;
    if x.abs() < 1e-4 {
        1.0 / x + x / 3.0
    } else if x > 20.0 {
        1.0 + 2.0 * (-2.0 * x).exp()
    } else {
        1.0 / x.tanh()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(domain!("inverse temperature must be positive, got {beta}"));
    }
    Ok(())
}

fn sorted_edges(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `∫_c^∞ f` with the map `ω = c/(1 − u)` and extra panel edges at `feats`.
fn integrate_tail<F: Fn(f64) -> f64>(f: F, c: f64, feats: &[f64]) -> Result<Estimate> {
    let mut u = vec![0.0, 0.5, 0.75, 0.875, 0.9375, 1.0];
    u.extend(feats.iter().filter(|&&w| w > c).map(|&w| 1.0 - c / w));
    let u = sorted_edges(u);
    let mapped = |u: f64| {
        let s = 1.0 - u;
        if s <= 0.0 {
            return 0.0;
        }
        let v = f(c / s) * c / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_panels(mapped, &u, &quad_cfg())
}

fn check_accuracy(est: Estimate, lower: f64, floor: f64) -> Result<Estimate> {
    if est.error > FUNCTIONAL_REL_TOL * est.value.abs() + floor {
        return Err(Error::Integrability {
            lower,
            upper: f64::INFINITY,
            error: est.error,
            intervals: 0,
        });
    }
    Ok(est)
}

/// `S = ∫₀^∞ (J/π) coth(βω/2) dω`. `β = f64::INFINITY` gives the
/// zero-temperature value.
pub fn compute_s(j: &SpectralDensity, beta: f64) -> Result<Estimate> {
    check_beta(beta)?;
    if j.is_zero() {
        return Ok(Estimate::default());
    }
    let w0 = j.scale();
    let eps = 1e-6 * w0;
    let f = |w: f64| j.eval(w) / PI * coth_half(beta, w);
    // On [0, ε] the integrand is flat to O(ε²); its midpoint value via the
    // coth series is the patch.
    let patch = eps * f(0.5 * eps);
    let feats = j.features();
    let mut edges = vec![eps, w0];
    edges.extend(feats.iter().copied().filter(|&w| w > eps && w < w0));
    let body = integrate_panels(f, &sorted_edges(edges), &quad_cfg())?;
    let tail = integrate_tail(f, w0, &feats)?;
    let total = Estimate {
        value: patch + body.value + tail.value,
        error: body.error + tail.error + (patch * 1e-10).abs(),
    };
    check_accuracy(total, 0.0, 0.0)
}

/// The plateau `X(∞) = (2/π) ∫₀^∞ J/ω dω`.
pub fn x_limit(j: &SpectralDensity) -> Result<Estimate> {
    if j.is_zero() {
        return Ok(Estimate::default());
    }
    let w0 = j.scale();
    let f = |w: f64| {
        if w > 0.0 {
            2.0 / PI * j.eval(w) / w
        } else {
            0.0
        }
    };
    let feats = j.features();
    let mut edges = vec![0.0, w0];
    edges.extend(feats.iter().copied().filter(|&w| w < w0));
    let body = integrate_panels(f, &sorted_edges(edges), &quad_cfg())?;
    let tail = integrate_tail(f, w0, &feats)?;
    check_accuracy(body + tail, 0.0, FUNCTIONAL_ABS_FLOOR)
}

/// Panels on `[a, b]` split at the density features and at `ω = 2πk/t`.
fn oscillatory_edges(j: &SpectralDensity, t: f64, a: f64, b: f64) -> Vec<f64> {
    let period = 2.0 * PI / t;
    let k0 = (a / period).ceil() as usize;
    let k1 = (b / period).floor() as usize;
    let mut e = vec![a, b];
    e.extend(
        (k0..=k1)
            .map(|k| k as f64 * period)
            .filter(|&w| w > a && w < b),
    );
    e.extend(j.features().into_iter().filter(|&w| w > a && w < b));
    sorted_edges(e)
}

/// First multiple of the oscillation period past the point where the
/// integrands are monotone.
fn oscillation_cutoff(j: &SpectralDensity, t: f64) -> f64 {
    let period = 2.0 * PI / t;
    (j.monotone_from() / period).ceil().max(1.0) * period
}

/// `X_t = ∫₀^∞ (2/πω) J(ω)(1 − cos ωt) dω`.
///
/// The integral is taken over period-aligned panels up to a cutoff `W`.
/// Beyond `W` the non-oscillating half `(2/π)∫J/ω` is integrated exactly and
/// the cosine half is bounded by `4J(W)/(πWt)` (second mean value theorem);
/// `W` is doubled until that bound is negligible.
pub fn compute_x(j: &SpectralDensity, t: f64) -> Result<Estimate> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain!("time must be non-negative and finite, got {t}"));
    }
    if t == 0.0 || j.is_zero() {
        return Ok(Estimate::default());
    }
    let f = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let s = (0.5 * w * t).sin();
        4.0 / (PI * w) * j.eval(w) * s * s
    };
    let g = |w: f64| {
        if w > 0.0 {
            2.0 / PI * j.eval(w) / w
        } else {
            0.0
        }
    };
    let feats = j.features();
    let mut cutoff = oscillation_cutoff(j, t);
    let mut body = integrate_panels(f, &oscillatory_edges(j, t, 0.0, cutoff), &quad_cfg())?;
    for _ in 0..40 {
        let tail = integrate_tail(g, cutoff, &feats)?;
        let bound = 2.0 * g(cutoff) / t;
        let tol = 1e-10 * (body.value + tail.value) + 0.1 * FUNCTIONAL_ABS_FLOOR;
        if bound <= tol {
            let total = Estimate {
                value: body.value + tail.value,
                error: body.error + tail.error + bound,
            };
            return check_accuracy(total, 0.0, FUNCTIONAL_ABS_FLOOR);
        }
        let next = 2.0 * cutoff;
        body = body + integrate_panels(f, &oscillatory_edges(j, t, cutoff, next), &quad_cfg())?;
        cutoff = next;
    }
    Err(Error::Integrability {
        lower: 0.0,
        upper: f64::INFINITY,
        error: 2.0 * g(cutoff) / t,
        intervals: 0,
    })
}

/// Direct numerical `C(t) = (1/π)∫ J [coth(βω/2) cos ωt − i sin ωt] dω`.
/// Returns the value and an absolute error bound.
pub fn correlation_function(j: &SpectralDensity, beta: f64, t: f64) -> Result<(Complex64, f64)> {
    check_beta(beta)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain!("time must be non-negative and finite, got {t}"));
    }
    if j.is_zero() {
        return Ok((Complex64::new(0.0, 0.0), 0.0));
    }
    if t == 0.0 {
        let s = compute_s(j, beta)?;
        return Ok((Complex64::new(s.value, 0.0), s.error));
    }
    let re = |w: f64| j.eval(w) / PI * coth_half(beta, w) * (w * t).cos();
    let im = |w: f64| -j.eval(w) / PI * (w * t).sin();
    let envelope = |w: f64| j.eval(w) / PI * coth_half(beta, w).max(1.0);
    let cfg = QuadConfig {
        abs_tol: 1e-13,
        ..quad_cfg()
    };
    let mut cutoff = oscillation_cutoff(j, t);
    let mut lo = 0.0;
    let (mut vr, mut vi) = (Estimate::default(), Estimate::default());
    loop {
        let edges = oscillatory_edges(j, t, lo, cutoff);
        vr = vr + integrate_panels(re, &edges, &cfg)?;
        vi = vi + integrate_panels(im, &edges, &cfg)?;
        let bound = 2.0 * envelope(cutoff) / t;
        if bound < 1e-9 || cutoff > 1e6 * j.scale() {
            let err = vr.error + vi.error + 2.0 * bound;
            return Ok((Complex64::new(vr.value, vi.value), err));
        }
        lo = cutoff;
        cutoff *= 2.0;
    }
}

/// `S` and a tabulated `X_t` on `[0, τ]`.
#[derive(Debug, Clone)]
pub struct BathFunctionals {
    s: Estimate,
    beta: f64,
    times: Vec<f64>,
    x: Vec<f64>,
    x_error: f64,
    interpolation_error: f64,
    spline: CubicSpline,
}

impl BathFunctionals {
    /// Evaluates `S` and `X_t` on `intervals + 1` uniform points of `[0, τ]`.
    pub fn compute(j: &SpectralDensity, beta: f64, tau: f64, intervals: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(domain!("horizon must be positive and finite, got {tau}"));
        }
        if intervals < 2 {
            return Err(domain!(
                "X table needs at least 2 intervals, got {intervals}"
            ));
        }
        let s = compute_s(j, beta)?;
        let times: Vec<f64> = (0..=intervals)
            .map(|i| tau * i as f64 / intervals as f64)
            .collect();
        let mut x = Vec::with_capacity(times.len());
        let mut x_error: f64 = 0.0;
        for &t in &times {
            let e = compute_x(j, t)?;
            x_error = x_error.max(e.error);
            x.push(e.value);
        }
        Self::assemble(s, beta, times, x, x_error)
    }

    /// Wraps externally computed values (for instance a table evaluated in
    /// parallel with [`compute_x`]). `times` must start at 0.
    pub fn from_parts(
        s: Estimate,
        beta: f64,
        times: Vec<f64>,
        x: Vec<f64>,
        x_error: f64,
    ) -> Result<Self> {
        Self::assemble(s, beta, times, x, x_error)
    }

    /// Prescribed `S` and `X` samples with no quadrature error attached.
    pub fn from_values(s: f64, beta: f64, times: &[f64], x: &[f64]) -> Result<Self> {
        Self::assemble(
            Estimate {
                value: s,
                error: 0.0,
            },
            beta,
            times.to_vec(),
            x.to_vec(),
            0.0,
        )
    }

    fn assemble(
        s: Estimate,
        beta: f64,
        times: Vec<f64>,
        x: Vec<f64>,
        x_error: f64,
    ) -> Result<Self> {
        check_beta(beta)?;
        if !(s.value >= 0.0) || !s.value.is_finite() {
            return Err(domain!(
                "S must be non-negative and finite, got {}",
                s.value
            ));
        }
        if times.first() != Some(&0.0) {
            return Err(domain!("X table must start at t = 0"));
        }
        if x.iter().any(|v| !(*v >= -FUNCTIONAL_ABS_FLOOR)) {
            return Err(domain!("X table has negative or non-finite entries"));
        }
        let spline = CubicSpline::natural(&times, &x)?;
        let interpolation_error = if times.len() >= 5 {
            let coarse_t: Vec<f64> = times.iter().step_by(2).copied().collect();
            let coarse_x: Vec<f64> = x.iter().step_by(2).copied().collect();
            let coarse = CubicSpline::natural(&coarse_t, &coarse_x)?;
            let worst = times
                .iter()
                .zip(&x)
                .skip(1)
                .step_by(2)
                .fold(0.0f64, |m, (t, v)| m.max((coarse.eval(*t) - v).abs()));
            // Halving the spacing cuts the cubic-spline error by about 16.
            worst / 16.0
        } else {
            f64::INFINITY
        };
        Ok(Self {
            s,
            beta,
            times,
            x,
            x_error,
            interpolation_error,
            spline,
        })
    }

    pub fn s(&self) -> f64 {
        self.s.value
    }
    pub fn s_estimate(&self) -> Estimate {
        self.s
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn x_samples(&self) -> &[f64] {
        &self.x
    }
    /// Largest quadrature error among the tabulated `X` values.
    pub fn x_error(&self) -> f64 {
        self.x_error
    }
    /// Estimated spline interpolation error of `X`.
    pub fn interpolation_error(&self) -> f64 {
        self.interpolation_error
    }

    /// Interpolated `X(t)`, clipped at zero.
    pub fn x(&self, t: f64) -> f64 {
        self.spline.eval(t).max(0.0)
    }
}

/// One term `c e^{−νt}` of `C(t)`, together with the coefficient `c̃` of the
/// same exponential in `C(t)*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coefficient: Complex64,
    pub conj_coefficient: Complex64,
    pub rate: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationDecomposition {
    pub terms: Vec<ExpTerm>,
    pub matsubara: usize,
    /// `Σ_{k>K} c_k/ν_k`, the weight a delta-like terminator would carry.
    pub residual_weight: f64,
    pub reconstruction_error: f64,
    pub horizon: f64,
}

impl CorrelationDecomposition {
    pub fn evaluate(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|e| e.coefficient * (-e.rate * t).exp())
            .sum()
    }
}

/// `coth z` that stays finite for large `|Re z|`.
fn coth_complex(z: Complex64) -> Complex64 {
    if z.re < 0.0 {
        return -coth_complex(-z);
    }
    let e = (-2.0 * z).exp();
    (1.0 + e) / (1.0 - e)
}

fn matsubara_coefficient(omega0: f64, gamma: f64, lambda: f64, beta: f64, k: usize) -> (f64, f64) {
    let nu = 2.0 * PI * k as f64 / beta;
    let a = nu * nu + omega0 * omega0;
    let c = -2.0 * gamma * lambda * lambda / beta * nu / (a * a - gamma * gamma * nu * nu);
    (c, nu)
}

/// Resonant pair plus `K` Matsubara exponentials for the underdamped form,
/// checked against [`correlation_function`] on `[0, horizon]`.
pub fn decompose_correlation(
    j: &SpectralDensity,
    beta: f64,
    matsubara: usize,
    horizon: f64,
) -> Result<CorrelationDecomposition> {
    check_beta(beta)?;
    let SpectralDensity::UnderdampedBrownian {
        omega0,
        gamma,
        lambda,
    } = *j
    else {
        return Err(Error::Unsupported(
            "exponential decomposition is only available for the underdamped Brownian density"
                .into(),
        ));
    };
    if beta.is_infinite() {
        return Err(Error::UnsupportedRegime(
            "zero temperature has a continuum of Matsubara rates".into(),
        ));
    }
    if omega0 <= 0.5 * gamma {
        return Err(Error::UnsupportedRegime(alloc::format!(
            "overdamped bath (ω₀ = {omega0} ≤ γ/2 = {})",
            0.5 * gamma
        )));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(domain!(
            "horizon must be non-negative and finite, got {horizon}"
        ));
    }
    if lambda == 0.0 {
        return Ok(CorrelationDecomposition {
            terms: Vec::new(),
            matsubara,
            residual_weight: 0.0,
            reconstruction_error: 0.0,
            horizon,
        });
    }
    let big_omega = (omega0 * omega0 - 0.25 * gamma * gamma).sqrt();
    let amp = lambda * lambda / (4.0 * big_omega);
    let half_beta = 0.5 * beta;
    let w1 = Complex64::new(big_omega, -0.5 * gamma);
    let w2 = Complex64::new(-big_omega, -0.5 * gamma);
    let c1 = amp * (coth_complex(half_beta * w1) + 1.0);
    let c2 = -amp * (coth_complex(half_beta * w2) + 1.0);
    let mut terms = vec![
        ExpTerm {
            coefficient: c1,
            conj_coefficient: c2.conj(),
            rate: Complex64::new(0.5 * gamma, big_omega),
        },
        ExpTerm {
            coefficient: c2,
            conj_coefficient: c1.conj(),
            rate: Complex64::new(0.5 * gamma, -big_omega),
        },
    ];
    for k in 1..=matsubara {
        let (c, nu) = matsubara_coefficient(omega0, gamma, lambda, beta, k);
        let c = Complex64::new(c, 0.0);
        terms.push(ExpTerm {
            coefficient: c,
            conj_coefficient: c,
            rate: Complex64::new(nu, 0.0),
        });
    }

    // Terms fall off as k⁻⁴; stop once they no longer move the sum.
    let mut residual_weight = 0.0;
    for k in matsubara + 1..matsubara + 1_000_000 {
        let (c, nu) = matsubara_coefficient(omega0, gamma, lambda, beta, k);
        residual_weight += c / nu;
        if (c / nu).abs() <= 1e-17 * residual_weight.abs() {
            break;
        }
    }

    let mut decomposition = CorrelationDecomposition {
        terms,
        matsubara,
        residual_weight,
        reconstruction_error: 0.0,
        horizon,
    };
    let samples = if horizon == 0.0 {
        1
    } else {
        ((8.0 * big_omega.max(gamma) * horizon / (2.0 * PI)).ceil() as usize).max(64) + 1
    };
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let t = if samples == 1 {
            0.0
        } else {
            horizon * i as f64 / (samples - 1) as f64
        };
        let (exact, _) = correlation_function(j, beta, t)?;
        worst = worst.max((decomposition.evaluate(t) - exact).norm());
    }
    decomposition.reconstruction_error = worst;
    if worst > RECONSTRUCTION_TOL {
        return Err(Error::InsufficientMatsubara {
            matsubara,
            error: worst,
        });
    }
    Ok(decomposition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig_bath() -> SpectralDensity {
        SpectralDensity::underdamped(1.0, 0.1, 0.1).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    // Independent brute-force oracle: trapezoid on a uniform grid.
    fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut sum = 0.5 * (f(a) + f(b));
        for i in 1..n {
            sum += f(a + h * i as f64);
        }
        sum * h
    }

    #[test]
    fn underdamped_shape() {
        let j = fig_bath();
        assert_eq!(j.eval(0.0), 0.0);
        let w = 0.7;
        let expected = 0.1 * 0.01 * w / ((w * w - 1.0f64).powi(2) + 0.01 * w * w);
        assert!((j.eval(w) - expected).abs() < 1e-18);
        assert!(SpectralDensity::underdamped(0.0, 0.1, 0.1).is_err());
        assert!(SpectralDensity::underdamped(1.0, 0.1, -0.1).is_err());
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let j = SpectralDensity::underdamped(1.0, 0.1, 0.0).unwrap();
        assert_eq!(compute_s(&j, 1.0).unwrap().value, 0.0);
        for t in [0.0, 0.5, 2.0, 50.0] {
            assert_eq!(compute_x(&j, t).unwrap().value, 0.0);
        }
        let d = decompose_correlation(&j, 1.0, 3, 2.0).unwrap();
        assert!(d.terms.is_empty());
    }

    #[test]
    fn x_vanishes_at_zero_time() {
        assert_eq!(compute_x(&fig_bath(), 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn s_matches_dense_trapezoid() {
        let j = fig_bath();
        let s = compute_s(&j, 1.0).unwrap();
        assert!(s.error < 1e-8 * s.value);
        let f = |w: f64| j.eval(w) / PI / (0.5 * w).tanh();
        let oracle = trapezoid(f, 1e-6, 200.0, 10_000_000);
        assert!(rel(s.value, oracle) < 1e-6, "{} vs {}", s.value, oracle);
    }

    #[test]
    fn x_matches_period_aligned_simpson() {
        let j = fig_bath();
        let t = 2.0;
        let x = compute_x(&j, t).unwrap();
        assert!(x.error < 1e-8 * x.value);
        // Simpson with a whole number of samples per period out to a
        // far cutoff where the remaining tail is below 1e-10.
        let period = 2.0 * PI / t;
        let periods = 2000;
        let per = 2000;
        let n = periods * per;
        let h = period / per as f64;
        let f = |w: f64| {
            if w == 0.0 {
                0.0
            } else {
                2.0 / (PI * w) * j.eval(w) * (1.0 - (w * t).cos())
            }
        };
        let mut sum = f(0.0) + f(n as f64 * h);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let oracle = sum * h / 3.0;
        assert!(rel(x.value, oracle) < 1e-6, "{} vs {}", x.value, oracle);
    }

    #[test]
    fn coupling_enters_quadratically() {
        let a = fig_bath();
        let b = SpectralDensity::underdamped(1.0, 0.1, 0.2).unwrap();
        let (sa, sb) = (
            compute_s(&a, 1.0).unwrap().value,
            compute_s(&b, 1.0).unwrap().value,
        );
        assert!(rel(sb, 4.0 * sa) < 1e-10);
        let (xa, xb) = (
            compute_x(&a, 1.3).unwrap().value,
            compute_x(&b, 1.3).unwrap().value,
        );
        assert!(rel(xb, 4.0 * xa) < 1e-10);
    }

    #[test]
    fn high_temperature_scaling() {
        let j = fig_bath();
        let sb: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&b| compute_s(&j, b).unwrap().value * b)
            .collect();
        assert!(rel(sb[1], sb[0]) < 0.02, "{sb:?}");
        assert!(rel(sb[2], sb[1]) < 0.02, "{sb:?}");
    }

    #[test]
    fn zero_temperature_is_lower() {
        let j = fig_bath();
        let s0 = compute_s(&j, f64::INFINITY).unwrap().value;
        let s1 = compute_s(&j, 1.0).unwrap().value;
        assert!(s0 > 0.0 && s0 < s1);
        let oracle = trapezoid(|w| j.eval(w) / PI, 0.0, 200.0, 2_000_000);
        assert!(rel(s0, oracle) < 1e-5);
    }

    #[test]
    fn x_approaches_its_plateau() {
        let j = fig_bath();
        let limit = x_limit(&j).unwrap().value;
        // Oracle for the limit on its own grid.
        let oracle = trapezoid(
            |w| {
                if w > 0.0 {
                    2.0 / PI * j.eval(w) / w
                } else {
                    0.0
                }
            },
            0.0,
            400.0,
            4_000_000,
        );
        assert!(rel(limit, oracle) < 1e-5);
        let ratio = compute_x(&j, 100.0).unwrap().value / limit;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn quadratures_are_deterministic() {
        let j = fig_bath();
        assert_eq!(compute_s(&j, 1.0).unwrap(), compute_s(&j, 1.0).unwrap());
        assert_eq!(compute_x(&j, 1.7).unwrap(), compute_x(&j, 1.7).unwrap());
    }

    #[test]
    fn decomposition_starts_at_s() {
        let j = fig_bath();
        let d = decompose_correlation(&j, 1.0, 3, 2.0).unwrap();
        let s = compute_s(&j, 1.0).unwrap().value;
        assert!(rel(d.evaluate(0.0).re, s) < 0.01);
        assert!(d.reconstruction_error < RECONSTRUCTION_TOL);
        assert_eq!(d.terms.len(), 5);
        assert!(d.residual_weight.abs() < 1e-5);
    }

    #[test]
    fn decomposition_tracks_numerical_correlation() {
        let j = fig_bath();
        let d = decompose_correlation(&j, 2.0, 2, 10.0).unwrap();
        for t in [0.3, 1.1, 4.0, 9.5] {
            let (exact, err) = correlation_function(&j, 2.0, t).unwrap();
            assert!(err < 1e-6);
            assert!((d.evaluate(t) - exact).norm() < 1e-4);
        }
    }

    #[test]
    fn antisymmetric_part_is_temperature_free() {
        let j = fig_bath();
        let a = decompose_correlation(&j, 1.0, 3, 1.0).unwrap();
        let b = decompose_correlation(&j, 10.0, 3, 1.0).unwrap();
        for t in [1e-9, 0.5, 1.0] {
            assert!((a.evaluate(t).im - b.evaluate(t).im).abs() < 1e-6);
        }
        // Against the direct transform as well.
        let (num, _) = correlation_function(&j, 10.0, 0.5).unwrap();
        assert!((a.evaluate(0.5).im - num.im).abs() < 1e-6);
    }

    #[test]
    fn overdamped_is_rejected() {
        let j = SpectralDensity::underdamped(0.1, 1.0, 0.1).unwrap();
        assert!(matches!(
            decompose_correlation(&j, 1.0, 3, 1.0),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn tabulated_density_reproduces_underdamped() {
        let j = fig_bath();
        let ws: Vec<f64> = (1..=4000).map(|i| i as f64 * 0.005).collect();
        let vs: Vec<f64> = ws.iter().map(|&w| j.eval(w)).collect();
        let t = SpectralDensity::tabulated(&ws, &vs, 3.0).unwrap();
        let (a, b) = (
            compute_s(&j, 1.0).unwrap().value,
            compute_s(&t, 1.0).unwrap().value,
        );
        assert!(rel(b, a) < 1e-3, "{a} {b}");
        let (a, b) = (
            compute_x(&j, 2.0).unwrap().value,
            compute_x(&t, 2.0).unwrap().value,
        );
        assert!(rel(b, a) < 1e-3, "{a} {b}");
    }

    #[test]
    fn table_interpolates_x() {
        let j = fig_bath();
        let bath = BathFunctionals::compute(&j, 1.0, 2.0, 200).unwrap();
        assert_eq!(bath.x(0.0), 0.0);
        let direct = compute_x(&j, 1.234).unwrap().value;
        assert!((bath.x(1.234) - direct).abs() < 1e-6 * direct.max(1e-3));
        assert!(bath.interpolation_error() < 1e-7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn functionals_are_non_negative(
            w0 in 0.3f64..3.0, g in 0.02f64..0.5, l in 0.0f64..0.5, beta in 0.05f64..20.0, t in 0.0f64..20.0
        ) {
            let j = SpectralDensity::underdamped(w0, g, l).unwrap();
            prop_assert!(compute_s(&j, beta).unwrap().value >= 0.0);
            prop_assert!(compute_x(&j, t).unwrap().value >= 0.0);
        }
    }
}
