//! Natural cubic spline interpolation with periodic continuation.

use crate::error::{Error, Result};

/// Natural cubic spline through `(t_j, y_j)`.
///
/// Queries past the last knot wrap around a continuation period, found
/// from the autocorrelation of the knot values when possible and the
/// full knot span otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
    period: f64,
    period_detected: bool,
}

impl CubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Degenerate("spline without knots".into()));
        }
        if knots.len() != values.len() {
            return Err(Error::dim("spline knots and values differ in length"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("spline knots must increase strictly"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline knot value".into()));
        }
        let second = natural_second_derivatives(&knots, &values);
        let (period, period_detected) = match dominant_period(&knots, &values) {
            Some(p) => (p, true),
            None => (knots[knots.len() - 1] - knots[0], false),
        };
        Ok(CubicSpline {
            knots,
            values,
            second,
            period,
            period_detected,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Continuation period for queries beyond the last knot.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Whether the period came from the autocorrelation.
    pub fn period_detected(&self) -> bool {
        self.period_detected
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// True when `t` lies beyond the knots and is served by continuation.
    pub fn extrapolates(&self, t: f64) -> bool {
        t < self.first() || t > self.last()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return self.values[0];
        }
        let t = self.wrap(t);
        let k = match self.knots.binary_search_by(|x| x.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(k) => return self.values[k],
            Err(k) => k.clamp(1, n - 1) - 1,
        };
        let h = self.knots[k + 1] - self.knots[k];
        let a = (self.knots[k + 1] - t) / h;
        let b = (t - self.knots[k]) / h;
        a * self.values[k]
            + b * self.values[k + 1]
            + ((a * a * a - a) * self.second[k] + (b * b * b - b) * self.second[k + 1]) * h * h / 6.0
    }

    fn wrap(&self, t: f64) -> f64 {
        let (t0, t1) = (self.first(), self.last());
        if (t0..=t1).contains(&t) || !(self.period > 0.0) {
            return t.clamp(t0, t1);
        }
        if t > t1 {
            // map into the last period window [t1 - P, t1]
            let start = t1 - self.period;
            start + (t - start).rem_euclid(self.period)
        } else {
            let end = t0 + self.period;
            end - (end - t).rem_euclid(self.period)
        }
    }
}

fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Lag of the first autocorrelation peak after the first zero crossing.
fn dominant_period(t: &[f64], y: &[f64]) -> Option<f64> {
    let n = y.len();
    if n < 8 {
        return None;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    if r0 <= 0.0 {
        return None;
    }
    let max_lag = n / 2;
    let r: Vec<f64> = (0..=max_lag)
        .map(|lag| d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0)
        .collect();
    let crossing = r.iter().position(|&v| v < 0.0)?;
    let mut best: Option<usize> = None;
    for lag in crossing.max(1)..max_lag {
        if r[lag] > 0.0 && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] {
            if best.is_none_or(|b| r[lag] > r[b]) {
                best = Some(lag);
            }
            if r[lag] > 0.5 {
                break;
            }
        }
    }
    let lag = best?;
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    Some(lag as f64 * dt)
}
