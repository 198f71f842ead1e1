//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the band, Bloch or kernel machinery.
#![allow(dead_code)]

use hill_kg::PeriodicPotential;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Sorted band edges of -d^2/dx^2 + P in raw units, from truncated Fourier
/// matrices of the periodic and antiperiodic problems. `half_dim` modes of
/// each parity on either side of zero. Returns s with s[0] = A_0^+,
/// s[2l - 1] = A_l^-, s[2l] = A_l^+.
pub fn hill_matrix_edges(pot: &PeriodicPotential, half_dim: i64) -> Vec<f64> {
    let l = pot.period;
    let coef = |j: i64| -> C64 {
        if j == 0 {
            return C64::new(pot.mean, 0.0);
        }
        let a = j.unsigned_abs() as usize;
        if a > pot.cos_coeffs.len() {
            return C64::new(0.0, 0.0);
        }
        let (c, s) = (pot.cos_coeffs[a - 1], pot.sin_coeffs[a - 1]);
        // c cos + s sin = ((c - i s)/2) e^{i th} + ((c + i s)/2) e^{-i th}
        if j > 0 {
            C64::new(0.5 * c, -0.5 * s)
        } else {
            C64::new(0.5 * c, 0.5 * s)
        }
    };
    let mut all = Vec::new();
    for parity in [0i64, 1] {
        // basis e^{i pi m x / L}, m = 2 j + parity
        let ms: Vec<i64> = (-half_dim..half_dim).map(|j| 2 * j + parity).collect();
        let d = ms.len();
        let h = DMatrix::<C64>::from_fn(d, d, |r, c| {
            let (mr, mc) = (ms[r], ms[c]);
            let diag = if r == c { (PI * mr as f64 / l).powi(2) } else { 0.0 };
            coef((mr - mc) / 2) + diag
        });
        let eig = h.symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        // keep the well-resolved lower half
        all.extend(ev.into_iter().take(d / 2));
    }
    all.sort_by(f64::total_cmp);
    all
}

/// Plain composite Gauss-Legendre on equal panels, no adaptivity and no
/// knowledge of the phase.
pub fn composite_gl(f: impl Fn(f64) -> C64, a: f64, b: f64, panels: usize) -> C64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut sum = C64::new(0.0, 0.0);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let mut part = C64::new(0.0, 0.0);
        for i in 0..x.len() {
            part += f(c + 0.5 * h * x[i]) * w[i];
        }
        sum += part * (0.5 * h);
    }
    sum
}

/// Gauss-Legendre nodes and weights by Newton on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Free Klein-Gordon kernel (1/pi) int_0^inf cos(R k) sin(t eta) eta^{-3/2} dk,
/// eta = sqrt(k^2 + mu), by real-axis quadrature to `k_cut` and the leading
/// integration-by-parts term for the rest.
pub fn free_kernel(t: f64, r: f64, mu: f64, k_cut: f64, panels: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let eta = |k: f64| (k * k + mu).sqrt();
    let body = composite_gl(
        |k| C64::new((r * k).cos() * (t * eta(k)).sin() * eta(k).powf(-1.5), 0.0),
        0.0,
        k_cut,
        panels,
    )
    .re;
    // cos(Rk) sin(t eta) = (sin(t eta + R k) + sin(t eta - R k)) / 2
    let g = 0.5 * eta(k_cut).powf(-1.5);
    let mut tail = 0.0;
    for s in [1.0, -1.0] {
        let phi = t * eta(k_cut) + s * r * k_cut;
        let dphi = t * k_cut / eta(k_cut) + s * r;
        tail += g * phi.cos() / dphi;
    }
    (body + tail) / PI
}

/// P(x) straight from the Fourier coefficients.
pub fn potential_at(pot: &PeriodicPotential, x: f64) -> f64 {
    let th = 2.0 * PI * x / pot.period;
    let mut v = pot.mean;
    for (j, (c, s)) in pot.cos_coeffs.iter().zip(&pot.sin_coeffs).enumerate() {
        let a = (j + 1) as f64 * th;
        v += c * a.cos() + s * a.sin();
    }
    v
}

/// (c, c', s, s') at x_j = j L / n, j = 0..=n, by classical RK4 with
/// `sub` steps per grid cell.
pub fn rk4_fundamental(pot: &PeriodicPotential, lambda: f64, n: usize, sub: usize) -> Vec<[f64; 4]> {
    let h = pot.period / (n * sub) as f64;
    let rhs = |x: f64, u: [f64; 4]| {
        let q = potential_at(pot, x) - lambda;
        [u[1], q * u[0], u[3], q * u[2]]
    };
    let add = |u: [f64; 4], d: [f64; 4], s: f64| [u[0] + s * d[0], u[1] + s * d[1], u[2] + s * d[2], u[3] + s * d[3]];
    let mut u = [1.0, 0.0, 0.0, 1.0];
    let mut out = vec![u];
    let mut x = 0.0;
    for _ in 0..n {
        for _ in 0..sub {
            let k1 = rhs(x, u);
            let k2 = rhs(x + 0.5 * h, add(u, k1, 0.5 * h));
            let k3 = rhs(x + 0.5 * h, add(u, k2, 0.5 * h));
            let k4 = rhs(x + h, add(u, k3, h));
            for i in 0..4 {
                u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            x += h;
        }
        out.push(u);
    }
    out
}

/// Random phase/amplitude pair satisfying the van der Corput hypotheses of
/// order m on [a, b]: |phi^(m)| >= c_m and, for m = 1, phi' monotone.
#[derive(Debug, Clone)]
pub struct VdcInstance {
    pub m: u32,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub c_m: f64,
    /// phi(k) = sum poly[j] (k - a)^j
    pub poly: Vec<f64>,
    /// psi(k) = amp0 + amp1 sin(freq k + shift)
    pub amp: [f64; 4],
}

impl VdcInstance {
    pub fn random(rng: &mut impl rand::Rng, m: u32) -> Self {
        let a = rng.gen_range(-2.0..2.0);
        let b = a + rng.gen_range(0.2..3.0);
        let mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let c_m = rng.gen_range(0.2..3.0);
        let sgn = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        // phi^(m)(k) = sgn (c_m + extra (k - a)), extra >= 0
        let extra = rng.gen_range(0.0..2.0);
        let mut poly = vec![0.0; m as usize + 2];
        for (j, p) in poly.iter_mut().enumerate().take(m as usize) {
            *p = rng.gen_range(-2.0..2.0) / (1 + j) as f64;
        }
        if m == 1 {
            // phi' = sgn (c_1 + extra (k - a)) is monotone
            poly[0] = rng.gen_range(-1.0..1.0);
        }
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        poly[m as usize] = sgn * c_m / fact(m as usize);
        poly[m as usize + 1] = sgn * extra / fact(m as usize + 1);
        let amp0 = rng.gen_range(-2.0..2.0);
        let amp1 = rng.gen_range(0.0..1.5);
        let freq = rng.gen_range(0.0..6.0);
        let shift = rng.gen_range(0.0..6.3);
        Self { m, a, b, mu, c_m, poly, amp: [amp0, amp1, freq, shift] }
    }

    /// Derivatives of mu * phi up to third order.
    pub fn phase(&self, k: f64) -> [f64; 4] {
        let s = k - self.a;
        let mut d = [0.0; 4];
        for (j, &c) in self.poly.iter().enumerate() {
            for (order, slot) in d.iter_mut().enumerate() {
                if j >= order {
                    let falling: f64 = (0..order).map(|i| (j - i) as f64).product();
                    *slot += c * falling * s.powi((j - order) as i32);
                }
            }
        }
        d.map(|v| v * self.mu)
    }

    pub fn psi(&self, k: f64) -> f64 {
        self.amp[0] + self.amp[1] * (self.amp[2] * k + self.amp[3]).sin()
    }

    /// min(|psi(a)|, |psi(b)|) and int |psi'| over [a, b] (exact: psi' changes
    /// sign only at the critical points of the sine).
    pub fn psi_data(&self) -> (f64, f64) {
        let [_, a1, w, sh] = self.amp;
        let mut pts = vec![self.a, self.b];
        if w > 0.0 && a1 > 0.0 {
            let j0 = ((w * self.a + sh - PI / 2.0) / PI).ceil() as i64;
            let mut j = j0;
            loop {
                let k = (PI / 2.0 + j as f64 * PI - sh) / w;
                if k >= self.b {
                    break;
                }
                if k > self.a {
                    pts.push(k);
                }
                j += 1;
            }
        }
        pts.sort_by(f64::total_cmp);
        let var: f64 = pts.windows(2).map(|p| (self.psi(p[1]) - self.psi(p[0])).abs()).sum();
        (self.psi(self.a).abs().min(self.psi(self.b).abs()), var)
    }

    /// Brute-force value with uniform panels fine enough for the largest |h'|.
    pub fn brute_force(&self) -> C64 {
        let slope = (0..=64)
            .map(|i| self.phase(self.a + (self.b - self.a) * i as f64 / 64.0)[1].abs())
            .fold(1.0, f64::max);
        let panels = (((self.b - self.a) * slope).ceil() as usize).max(64) * 2;
        composite_gl(|k| C64::from_polar(self.psi(k), self.phase(k)[0]), self.a, self.b, panels)
    }
}
