//! Truncated Taylor series in the spectral parameter.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Coefficients of f(lambda0 + eps) = sum_j c[j] eps^j, truncated after eps^3.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet(pub [f64; 4]);

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet([v, 0.0, 0.0, 0.0])
    }

    pub const fn value(&self) -> f64 {
        self.0[0]
    }

    /// j-th derivative with respect to lambda.
    pub fn derivative(&self, j: usize) -> f64 {
        const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
        self.0[j] * FACT[j]
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        let a = self.0;
        let b = o.0;
        Jet([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        let a = self.0;
        let b = o.0;
        Jet([a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        let a = self.0;
        Jet([-a[0], -a[1], -a[2], -a[3]])
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let a = self.0;
        let b = o.0;
        Jet([
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[1] * b[1] + a[2] * b[0],
            a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0],
        ])
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, s: f64) -> Jet {
        let a = self.0;
        Jet([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }
}
