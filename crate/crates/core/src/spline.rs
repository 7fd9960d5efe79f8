//! Piecewise cubic Hermite interpolation on non-uniform knots.
//!
//! Two slope rules are supported: the natural cubic spline (C², used for
//! tabulated data) and the monotone Fritsch–Butland rule (C¹, no overshoot,
//! used for control-point protocols whose plateaus must stay flat).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

fn check_knots(knots: &[f64], values: &[f64]) -> Result<()> {
    if knots.len() != values.len() {
        return Err(domain!(
            "spline needs equal-length knot and value arrays ({} vs {})",
            knots.len(),
            values.len()
        ));
    }
    if knots.len() < 2 {
        return Err(domain!("spline needs at least two knots"));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain!("spline knots must be strictly increasing"));
    }
    if values.iter().chain(knots).any(|v| !v.is_finite()) {
        return Err(domain!("spline data must be finite"));
    }
    Ok(())
}

impl CubicSpline {
    /// Natural cubic spline (zero second derivative at both ends).
    pub fn natural(knots: &[f64], values: &[f64]) -> Result<Self> {
        check_knots(knots, values)?;
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / h[i])
            .collect();

        // Second derivatives; Thomas algorithm on the interior system.
        let mut m2 = vec![0.0; n];
        if n > 2 {
            let len = n - 2;
            let mut diag = vec![0.0; len];
            let mut rhs = vec![0.0; len];
            for i in 0..len {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * (delta[i + 1] - delta[i]);
            }
            for i in 1..len {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m2[len] = rhs[len - 1] / diag[len - 1];
            for i in (0..len - 1).rev() {
                m2[i + 1] = (rhs[i] - h[i + 1] * m2[i + 2]) / diag[i];
            }
        }

        let mut slopes = vec![0.0; n];
        for i in 0..n - 1 {
            slopes[i] = delta[i] - h[i] * (2.0 * m2[i] + m2[i + 1]) / 6.0;
        }
        slopes[n - 1] = delta[n - 2] + h[n - 2] * (m2[n - 2] + 2.0 * m2[n - 1]) / 6.0;
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            slopes,
        })
    }

    /// Shape-preserving piecewise cubic (PCHIP). Flat where the data is flat.
    pub fn monotone(knots: &[f64], values: &[f64]) -> Result<Self> {
        check_knots(knots, values)?;
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / h[i])
            .collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes.fill(delta[0]);
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            slopes,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn interval(&self, x: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= x);
        idx.saturating_sub(1).min(self.knots.len() - 2)
    }

    /// Value and first derivative at `x`. Outside the knot range the end
    /// cubic is extended.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let i = self.interval(x);
        let h = self.knots[i + 1] - self.knots[i];
        let s = (x - self.knots[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * s2 - 6.0 * s;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s2 - 2.0 * s;
        let deriv = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (value, deriv)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
