//! Smooth periodic potentials given by finite Fourier series.

use crate::error::{Error, Result};
use crate::special::{elliptic_ke, nome};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// P(x) = mean + sum_j cos_coeffs[j-1] cos(2 pi j x / L) + sin_coeffs[j-1] sin(2 pi j x / L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPotential {
    pub period: f64,
    pub mean: f64,
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
}

impl PeriodicPotential {
    pub fn new(period: f64, mean: f64, cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        let all_finite = mean.is_finite()
            && cos_coeffs.iter().chain(&sin_coeffs).all(|c| c.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput("non-finite Fourier coefficient".into()));
        }
        let mut p = Self {
            period,
            mean,
            cos_coeffs,
            sin_coeffs,
        };
        let n = p.cos_coeffs.len().max(p.sin_coeffs.len());
        p.cos_coeffs.resize(n, 0.0);
        p.sin_coeffs.resize(n, 0.0);
        Ok(p)
    }

    /// P = 0 with the given period.
    pub fn free(period: f64) -> Self {
        Self::new(period, 0.0, vec![], vec![]).expect("valid period")
    }

    /// P(x) = 2 q cos(2 pi x), period 1.
    pub fn cosine(q: f64) -> Self {
        Self::new(1.0, 0.0, vec![2.0 * q], vec![]).expect("valid coefficients")
    }

    /// P(x) = 2 kappa^2 sn^2(x, kappa) on its natural period 2 K(kappa).
    /// Unshifted edges are kappa^2, 1 and 1 + kappa^2; every further gap is closed.
    pub fn lame(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidInput(format!("Lame modulus must lie in (0, 1), got {kappa}")));
        }
        let (kk, ee) = elliptic_ke(kappa);
        let q = nome(kappa);
        let mean = 2.0 * (1.0 - ee / kk);
        let scale = 4.0 * PI * PI / (kk * kk);
        let mut cos_coeffs = Vec::new();
        for n in 1..200 {
            let qn = q.powi(n);
            let c = scale * n as f64 * qn / (1.0 - qn * qn);
            if c < 1e-18 * mean.abs().max(1.0) {
                break;
            }
            cos_coeffs.push(-c);
        }
        Self::new(2.0 * kk, mean, cos_coeffs, vec![])
    }

    pub fn harmonics(&self) -> usize {
        self.cos_coeffs.len()
    }

    pub fn is_free(&self) -> bool {
        self.cos_coeffs.iter().chain(&self.sin_coeffs).all(|&c| c == 0.0)
    }

    /// Half the mean value; the constant in the large-k asymptotics E = k^2 + 2 q0 + ...
    pub fn q0(&self) -> f64 {
        0.5 * self.mean
    }

    /// Upper bound for sup |P|.
    pub fn sup_bound(&self) -> f64 {
        self.mean.abs()
            + self
                .cos_coeffs
                .iter()
                .chain(&self.sin_coeffs)
                .map(|c| c.abs())
                .sum::<f64>()
    }

    /// Lower bound for inf P.
    pub fn lower_bound(&self) -> f64 {
        self.mean - (self.sup_bound() - self.mean.abs())
    }

    /// Same potential shifted by a constant.
    pub fn shifted(&self, by: f64) -> Self {
        let mut p = self.clone();
        p.mean += by;
        p
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.cos_coeffs.is_empty() {
            return self.mean;
        }
        let theta = 2.0 * PI * x / self.period;
        let (s1, c1) = theta.sin_cos();
        let (mut c, mut s) = (c1, s1);
        let mut v = self.mean;
        for (a, b) in self.cos_coeffs.iter().zip(&self.sin_coeffs) {
            v += a * c + b * s;
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
        }
        v
    }

    /// Samples at x_j = x0 + j h for j = 0..n, using a stable rotation per step.
    pub fn sample_uniform(&self, x0: f64, h: f64, n: usize, out: &mut Vec<f64>) {
        out.clear();
        if self.cos_coeffs.is_empty() {
            out.resize(n, self.mean);
            return;
        }
        // Exact trig per point keeps the samples free of accumulated drift.
        out.extend((0..n).map(|j| self.eval(x0 + j as f64 * h)));
    }

    /// Second derivative, used by finite-difference checks.
    pub fn eval_second_derivative(&self, x: f64) -> f64 {
        let w = 2.0 * PI / self.period;
        let theta = w * x;
        self.cos_coeffs
            .iter()
            .zip(&self.sin_coeffs)
            .enumerate()
            .map(|(j, (a, b))| {
                let m = (j + 1) as f64;
                let (s, c) = (m * theta).sin_cos();
                -(m * w).powi(2) * (a * c + b * s)
            })
            .sum()
    }
}
