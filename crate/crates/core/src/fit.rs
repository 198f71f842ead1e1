//! Log-log slope fits and rank trends for decay tables.

use serde::{Deserialize, Serialize};

/// Least-squares line y = a + b x; returns (b, a, rms residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / n).sqrt();
    (b, a, rms)
}

/// Kendall tau-a of the sequence against its index.
pub fn kendall_tau(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (v[j] - v[i]).signum() * if v[j] == v[i] { 0.0 } else { 1.0 };
        }
    }
    s / (n * (n - 1) / 2) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub pairs: Vec<(f64, f64)>,
    /// Slope of log sup|K| against log t; None with fewer than four points
    /// or less than one decade of t.
    pub slope: Option<f64>,
    pub residual: Option<f64>,
    /// sup|K| t^{1/3}.
    pub normalized: Vec<f64>,
    /// max / min of the normalized sequence.
    pub normalized_ratio: f64,
}

impl DecayFit {
    pub fn new(pairs: Vec<(f64, f64)>) -> Self {
        let normalized: Vec<f64> = pairs.iter().map(|(t, s)| s * t.cbrt()).collect();
        let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
        let span = pairs.last().map(|p| p.0).unwrap_or(0.0) / pairs.first().map(|p| p.0).unwrap_or(1.0);
        let (slope, residual) = if pairs.len() >= 4 && span >= 10.0 {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
            let (b, _, r) = linear_fit(&xs, &ys);
            (Some(b), Some(r))
        } else {
            (None, None)
        };
        Self {
            pairs,
            slope,
            residual,
            normalized,
            normalized_ratio: hi / lo,
        }
    }
}
