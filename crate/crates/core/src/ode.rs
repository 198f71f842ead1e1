//! Fundamental solutions of -u'' + P u = lambda u with lambda-derivatives.
//!
//! The first-order system Y' = [[0, 1], [P - lambda, 0]] Y is advanced by the
//! fourth-order Magnus integrator with two Gauss points per step. Each step
//! propagator is exp(Omega) = C(z) I + S(z) Omega with z = -det(Omega), so it
//! has unit determinant up to rounding. Derivatives in lambda are carried by
//! running the same recursion on truncated Taylor series.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::potential::PeriodicPotential;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    /// Steps per unit of L sqrt(|lambda| + sup|P|).
    pub steps_per_phase: f64,
    pub min_steps: usize,
    /// Bound on the step-halving estimate, relative to 1 + |entry|.
    pub tolerance: f64,
    pub max_refinements: u32,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            steps_per_phase: 16.0,
            min_steps: 256,
            tolerance: 1e-10,
            max_refinements: 6,
        }
    }
}

/// Monodromy matrix [[c(L), s(L)], [c'(L), s'(L)]] as jets in lambda.
#[derive(Debug, Clone, Copy)]
pub struct Monodromy {
    pub lambda: f64,
    pub m: [[Jet; 2]; 2],
    pub err_est: f64,
    pub steps: usize,
}

impl Monodromy {
    /// Discriminant Delta = trace M.
    pub fn delta(&self) -> Jet {
        self.m[0][0] + self.m[1][1]
    }

    /// Delta^2 - 4 written as (M11 - M22)^2 + 4 M12 M21, free of the
    /// cancellation that the direct form suffers near band edges.
    pub fn gap_function(&self) -> Jet {
        let d = self.m[0][0] - self.m[1][1];
        d * d + self.m[0][1] * self.m[1][0] * 4.0
    }

    pub fn det(&self) -> f64 {
        self.m[0][0].value() * self.m[1][1].value() - self.m[0][1].value() * self.m[1][0].value()
    }

    pub fn values(&self) -> [[f64; 2]; 2] {
        [
            [self.m[0][0].value(), self.m[0][1].value()],
            [self.m[1][0].value(), self.m[1][1].value()],
        ]
    }
}

/// Solutions sampled on the uniform grid x_j = j L / nx, j = 0..=nx.
#[derive(Debug, Clone)]
pub struct GridSolutions {
    pub lambda: f64,
    /// (c, c', s, s') at each grid point.
    pub values: Vec<[f64; 4]>,
    pub err_est: f64,
}

trait StepScalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self> {
    fn one() -> Self;
    fn zero() -> Self;
    /// h (pbar - lambda) with lambda = lambda0 + eps.
    fn gamma(h: f64, pbar: f64, lambda0: f64) -> Self;
    /// (C, S) at z = z0 + dz * eps.
    fn cs(z0: f64, dz: f64) -> (Self, Self);
}

impl StepScalar for f64 {
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn gamma(h: f64, pbar: f64, lambda0: f64) -> Self {
        h * (pbar - lambda0)
    }
    #[inline]
    fn cs(z0: f64, _dz: f64) -> (Self, Self) {
        let (c, s) = cs_derivatives::<1>(z0);
        (c[0], s[0])
    }
}

impl StepScalar for Jet {
    #[inline]
    fn one() -> Self {
        Jet::constant(1.0)
    }
    #[inline]
    fn zero() -> Self {
        Jet::constant(0.0)
    }
    #[inline]
    fn gamma(h: f64, pbar: f64, lambda0: f64) -> Self {
        Jet([h * (pbar - lambda0), -h, 0.0, 0.0])
    }
    #[inline]
    fn cs(z0: f64, dz: f64) -> (Self, Self) {
        let (c, s) = cs_derivatives::<4>(z0);
        let d2 = dz * dz;
        let d3 = d2 * dz;
        (
            Jet([c[0], c[1] * dz, c[2] * d2 * 0.5, c[3] * d3 / 6.0]),
            Jet([s[0], s[1] * dz, s[2] * d2 * 0.5, s[3] * d3 / 6.0]),
        )
    }
}

/// First-order jet, enough for Newton iterations in lambda.
#[derive(Debug, Clone, Copy)]
struct Dual(f64, f64);

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, s: f64) -> Dual {
        Dual(self.0 * s, self.1 * s)
    }
}

impl StepScalar for Dual {
    #[inline]
    fn one() -> Self {
        Dual(1.0, 0.0)
    }
    #[inline]
    fn zero() -> Self {
        Dual(0.0, 0.0)
    }
    #[inline]
    fn gamma(h: f64, pbar: f64, lambda0: f64) -> Self {
        Dual(h * (pbar - lambda0), -h)
    }
    #[inline]
    fn cs(z0: f64, dz: f64) -> (Self, Self) {
        let (c, s) = cs_derivatives::<2>(z0);
        (Dual(c[0], c[1] * dz), Dual(s[0], s[1] * dz))
    }
}

const CS_TERMS: usize = 12;

const fn cs_series_table() -> [[[f64; CS_TERMS]; 2]; 4] {
    // j-th derivative of C and S: sum_m (m+j)!/m! z^m / (2(m+j))! and / (2(m+j)+1)!.
    let mut t = [[[0.0; CS_TERMS]; 2]; 4];
    let mut j = 0;
    while j < 4 {
        let mut m = 0;
        while m < CS_TERMS {
            let mut c = 1.0;
            let mut i = m + 1;
            while i <= m + j {
                c *= i as f64;
                i += 1;
            }
            let mut f = 1.0;
            let mut i = 2;
            while i <= 2 * (m + j) {
                f *= i as f64;
                i += 1;
            }
            t[j][0][m] = c / f;
            t[j][1][m] = c / (f * (2 * (m + j) + 1) as f64);
            m += 1;
        }
        j += 1;
    }
    t
}

static CS_SERIES: [[[f64; CS_TERMS]; 2]; 4] = cs_series_table();

/// Derivatives up to order N-1 of C(z) = sum z^m/(2m)! and S(z) = sum z^m/(2m+1)!.
#[inline]
fn cs_derivatives<const N: usize>(z: f64) -> ([f64; N], [f64; N]) {
    let mut c = [0.0; N];
    let mut s = [0.0; N];
    if z.abs() < 0.5 {
        // Seven terms already reach rounding level for the usual |z| ~ 1e-2.
        let terms = if z.abs() < 0.02 { 7 } else { CS_TERMS };
        for j in 0..N {
            let tc = &CS_SERIES[j][0];
            let ts = &CS_SERIES[j][1];
            let (mut sc, mut ss) = (tc[terms - 1], ts[terms - 1]);
            for m in (0..terms - 1).rev() {
                sc = sc * z + tc[m];
                ss = ss * z + ts[m];
            }
            c[j] = sc;
            s[j] = ss;
        }
    } else {
        if z < 0.0 {
            let th = (-z).sqrt();
            c[0] = th.cos();
            s[0] = th.sin() / th;
        } else {
            let th = z.sqrt();
            c[0] = th.cosh();
            s[0] = th.sinh() / th;
        }
        for j in 0..N - 1 {
            c[j + 1] = 0.5 * s[j];
            s[j + 1] = (c[j] - (2 * j + 1) as f64 * s[j]) / (2.0 * z);
        }
    }
    (c, s)
}

/// Integrator bound to one potential, caching potential samples per step count.
#[derive(Debug)]
pub struct HillSolver {
    pot: PeriodicPotential,
    cfg: OdeConfig,
    samples: Mutex<HashMap<usize, Arc<Vec<[f64; 2]>>>>,
}

impl Clone for HillSolver {
    fn clone(&self) -> Self {
        Self::new(self.pot.clone(), self.cfg)
    }
}

impl HillSolver {
    pub fn new(pot: PeriodicPotential, cfg: OdeConfig) -> Self {
        Self {
            pot,
            cfg,
            samples: Mutex::new(HashMap::new()),
        }
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.pot
    }

    pub fn config(&self) -> &OdeConfig {
        &self.cfg
    }

    /// Base step count for lambda, rounded up to one of eight values per octave.
    pub fn steps_for(&self, lambda: f64) -> usize {
        let raw = self.cfg.steps_per_phase
            * self.pot.period
            * (lambda.abs() + self.pot.sup_bound()).sqrt();
        let n = (raw.ceil() as usize).max(self.cfg.min_steps).max(8);
        let quantum = 1usize << (usize::BITS - 1 - n.leading_zeros()).saturating_sub(3);
        n.div_ceil(quantum) * quantum
    }

    fn gauss_samples(&self, n: usize) -> Arc<Vec<[f64; 2]>> {
        let mut cache = self.samples.lock().expect("sample cache poisoned");
        if let Some(s) = cache.get(&n) {
            return s.clone();
        }
        if cache.len() > 96 {
            cache.clear();
        }
        let h = self.pot.period / n as f64;
        let c1 = 0.5 - SQRT3 / 6.0;
        let c2 = 0.5 + SQRT3 / 6.0;
        let v: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let x = i as f64 * h;
                [self.pot.eval(x + c1 * h), self.pot.eval(x + c2 * h)]
            })
            .collect();
        let arc = Arc::new(v);
        cache.insert(n, arc.clone());
        arc
    }

    #[inline]
    fn step_matrix<S: StepScalar>(h: f64, p1: f64, p2: f64, lambda: f64) -> [[S; 2]; 2] {
        let alpha = SQRT3 * h * h / 12.0 * (p1 - p2);
        let pbar = 0.5 * (p1 + p2);
        let gamma = S::gamma(h, pbar, lambda);
        let z0 = alpha * alpha + h * h * (pbar - lambda);
        let (c, s) = S::cs(z0, -h * h);
        [[c + s * alpha, s * h], [s * gamma, c - s * alpha]]
    }

    #[inline]
    fn apply<S: StepScalar>(u: &[[S; 2]; 2], y: &mut [[S; 2]; 2]) {
        let n00 = u[0][0] * y[0][0] + u[0][1] * y[1][0];
        let n01 = u[0][0] * y[0][1] + u[0][1] * y[1][1];
        let n10 = u[1][0] * y[0][0] + u[1][1] * y[1][0];
        let n11 = u[1][0] * y[0][1] + u[1][1] * y[1][1];
        *y = [[n00, n01], [n10, n11]];
    }

    fn propagate<S: StepScalar>(&self, lambda: f64, n: usize) -> [[S; 2]; 2] {
        let samples = self.gauss_samples(n);
        let h = self.pot.period / n as f64;
        let mut y = [[S::one(), S::zero()], [S::zero(), S::one()]];
        for p in samples.iter() {
            let u = Self::step_matrix::<S>(h, p[0], p[1], lambda);
            Self::apply(&u, &mut y);
        }
        y
    }

    /// Monodromy at lambda with derivatives up to `order` (0..=3).
    pub fn monodromy(&self, lambda: f64, order: usize) -> Result<Monodromy> {
        if !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be finite, got {lambda}")));
        }
        if order > 3 {
            return Err(Error::InvalidInput(format!("derivative order {order} exceeds 3")));
        }
        let mut n = self.steps_for(lambda);
        let mut coarse = self.propagate_order(lambda, n, order);
        let mut last_err = f64::INFINITY;
        for _ in 0..=self.cfg.max_refinements {
            let fine = self.propagate_order(lambda, 2 * n, order);
            let mut err: f64 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    let d = (fine[i][j].value() - coarse[i][j].value()).abs() / 15.0;
                    err = err.max(d / (1.0 + fine[i][j].value().abs()));
                }
            }
            last_err = err;
            if err <= self.cfg.tolerance {
                return Ok(Monodromy {
                    lambda,
                    m: fine,
                    err_est: err,
                    steps: 2 * n,
                });
            }
            n *= 2;
            coarse = fine;
        }
        Err(Error::IntegrationDiverged {
            lambda,
            estimate: last_err,
            tolerance: self.cfg.tolerance,
        })
    }

    /// Monodromy with a fixed step count and no error control.
    pub fn monodromy_fixed(&self, lambda: f64, n_steps: usize, order: usize) -> Monodromy {
        Monodromy {
            lambda,
            m: self.propagate_order(lambda, n_steps.max(1), order.min(3)),
            err_est: f64::NAN,
            steps: n_steps,
        }
    }

    fn propagate_order(&self, lambda: f64, n: usize, order: usize) -> [[Jet; 2]; 2] {
        if order == 0 {
            let y = self.propagate::<f64>(lambda, n);
            [
                [Jet::constant(y[0][0]), Jet::constant(y[0][1])],
                [Jet::constant(y[1][0]), Jet::constant(y[1][1])],
            ]
        } else if order == 1 {
            let y = self.propagate::<Dual>(lambda, n);
            let j = |d: Dual| Jet([d.0, d.1, 0.0, 0.0]);
            [[j(y[0][0]), j(y[0][1])], [j(y[1][0]), j(y[1][1])]]
        } else {
            self.propagate::<Jet>(lambda, n)
        }
    }

    fn grid_pass(&self, lambda: f64, nx: usize, sub: usize) -> Vec<[f64; 4]> {
        let n = nx * sub;
        let samples = self.gauss_samples(n);
        let h = self.pot.period / n as f64;
        let mut y = [[1.0, 0.0], [0.0, 1.0]];
        let mut out = Vec::with_capacity(nx + 1);
        out.push([1.0, 0.0, 0.0, 1.0]);
        for (i, p) in samples.iter().enumerate() {
            let u = Self::step_matrix::<f64>(h, p[0], p[1], lambda);
            Self::apply(&u, &mut y);
            if (i + 1) % sub == 0 {
                out.push([y[0][0], y[1][0], y[0][1], y[1][1]]);
            }
        }
        out
    }

    /// c, c', s, s' on x_j = j L / nx using `sub` steps per grid interval,
    /// without error control.
    pub fn fundamental_on_grid_fixed(&self, lambda: f64, nx: usize, sub: usize) -> Vec<[f64; 4]> {
        self.grid_pass(lambda, nx.max(1), sub.max(1))
    }

    /// c, c', s, s' on x_j = j L / nx, with a step-halving error estimate.
    pub fn fundamental_on_grid(&self, lambda: f64, nx: usize) -> Result<GridSolutions> {
        if nx == 0 {
            return Err(Error::InvalidInput("grid needs at least one interval".into()));
        }
        let mut sub = self.steps_for(lambda).div_ceil(nx);
        let mut coarse = self.grid_pass(lambda, nx, sub);
        let mut last_err = f64::INFINITY;
        for _ in 0..=self.cfg.max_refinements {
            let fine = self.grid_pass(lambda, nx, 2 * sub);
            let err = fine
                .iter()
                .zip(&coarse)
                .flat_map(|(f, c)| f.iter().zip(c.iter()).map(|(a, b)| (a - b).abs() / 15.0 / (1.0 + a.abs())))
                .fold(0.0, f64::max);
            last_err = err;
            if err <= self.cfg.tolerance {
                return Ok(GridSolutions {
                    lambda,
                    values: fine,
                    err_est: err,
                });
            }
            sub *= 2;
            coarse = fine;
        }
        Err(Error::IntegrationDiverged {
            lambda,
            estimate: last_err,
            tolerance: self.cfg.tolerance,
        })
    }
}

/// Monodromy with the default integrator settings.
pub fn monodromy(pot: &PeriodicPotential, lambda: f64, order: usize) -> Result<Monodromy> {
    HillSolver::new(pot.clone(), OdeConfig::default()).monodromy(lambda, order)
}
