//! Reference computations for `--oracle` runs. None of these touch the
//! monodromy, Bloch or kernel code they are compared against.

use hill_kg::PeriodicPotential;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use std::f64::consts::PI;

/// Fourier coefficient of P on e^{2 pi i j x / L}.
fn fourier(pot: &PeriodicPotential, j: i64) -> C64 {
    if j == 0 {
        return C64::new(pot.mean, 0.0);
    }
    let a = j.unsigned_abs() as usize;
    if a > pot.cos_coeffs.len() {
        return C64::new(0.0, 0.0);
    }
    let (c, s) = (pot.cos_coeffs[a - 1], pot.sin_coeffs[a - 1]);
    if j > 0 {
        C64::new(0.5 * c, -0.5 * s)
    } else {
        C64::new(0.5 * c, 0.5 * s)
    }
}

/// Eigenvalues of the Hill operator restricted to e^{i (k + 2 pi j / L) x},
/// |j| <= half_dim, lower half only (the upper half feels the truncation).
pub fn bloch_energies(pot: &PeriodicPotential, k: f64, half_dim: usize) -> Vec<f64> {
    let l = pot.period;
    let js: Vec<i64> = (-(half_dim as i64)..=half_dim as i64).collect();
    let d = js.len();
    let h = DMatrix::<C64>::from_fn(d, d, |r, c| {
        let diag = if r == c { (k + 2.0 * PI * js[r] as f64 / l).powi(2) } else { 0.0 };
        fourier(pot, js[r] - js[c]) + diag
    });
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(d / 2);
    ev
}

/// Sorted band edges: periodic spectrum at k = 0 merged with the
/// antiperiodic spectrum at k = pi / L. s[0] = A_0^+, s[2l-1] = A_l^-, s[2l] = A_l^+.
pub fn hill_edges(pot: &PeriodicPotential, half_dim: usize) -> Vec<f64> {
    let mut all = bloch_energies(pot, 0.0, half_dim);
    all.extend(bloch_energies(pot, PI / pot.period, half_dim));
    all.sort_by(f64::total_cmp);
    all
}

/// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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

/// Composite 20-point Gauss-Legendre on equal panels.
pub fn composite_gl(f: impl Fn(f64) -> C64, a: f64, b: f64, panels: usize) -> C64 {
    let (x, w) = gauss_legendre(20);
    let h = (b - a) / panels as f64;
    let mut sum = C64::new(0.0, 0.0);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let part: C64 = x.iter().zip(&w).map(|(xi, wi)| f(c + 0.5 * h * xi) * wi).sum();
        sum += part * (0.5 * h);
    }
    sum
}

/// Free kernel (1/pi) int_0^inf cos(R k) sin(t eta) eta^{-3/2} dk by real-axis
/// quadrature up to k_cut plus the first integration-by-parts term beyond.
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
    let g = 0.5 * eta(k_cut).powf(-1.5);
    let tail: f64 = [1.0, -1.0]
        .iter()
        .map(|s| {
            let phi = t * eta(k_cut) + s * r * k_cut;
            let dphi = t * k_cut / eta(k_cut) + s * r;
            g * phi.cos() / dphi
        })
        .sum();
    (body + tail) / PI
}

/// Random integral int_a^b psi e^{i mu phi} meeting the order-m van der
/// Corput hypotheses with constant c_m, and phi' monotone when m = 1.
#[derive(Debug, Clone)]
pub struct VdcInstance {
    pub m: u32,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub c_m: f64,
    /// phi(k) = sum poly[j] (k - a)^j
    pub poly: Vec<f64>,
    /// psi(k) = amp[0] + amp[1] sin(amp[2] k + amp[3])
    pub amp: [f64; 4],
}

impl VdcInstance {
    pub fn random(rng: &mut impl Rng, m: u32) -> Self {
        let a = rng.gen_range(-2.0..2.0);
        let b = a + rng.gen_range(0.2..3.0);
        let mu = 10f64.powf(rng.gen_range(0.0..3.0));
        let c_m = rng.gen_range(0.2..3.0);
        let sgn = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        // phi^(m)(k) = sgn (c_m + extra (k - a)) with extra >= 0
        let extra = rng.gen_range(0.0..2.0);
        let mut poly = vec![0.0; m as usize + 2];
        for (j, p) in poly.iter_mut().enumerate().take(m as usize) {
            *p = rng.gen_range(-2.0..2.0) / (1 + j) as f64;
        }
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        poly[m as usize] = sgn * c_m / fact(m as usize);
        poly[m as usize + 1] = sgn * extra / fact(m as usize + 1);
        let amp = [
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.0..1.5),
            rng.gen_range(0.0..6.0),
            rng.gen_range(0.0..6.3),
        ];
        Self { m, a, b, mu, c_m, poly, amp }
    }

    /// mu phi and its first three derivatives.
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

    /// min(|psi(a)|, |psi(b)|) and the exact total variation of psi on [a, b].
    pub fn psi_data(&self) -> (f64, f64) {
        let [_, a1, w, sh] = self.amp;
        let mut pts = vec![self.a, self.b];
        if w > 0.0 && a1 > 0.0 {
            let mut j = ((w * self.a + sh - PI / 2.0) / PI).ceil() as i64;
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
        let var = pts.windows(2).map(|p| (self.psi(p[1]) - self.psi(p[0])).abs()).sum();
        (self.psi(self.a).abs().min(self.psi(self.b).abs()), var)
    }

    /// Uniform-panel quadrature fine enough for the largest phase slope.
    pub fn brute_force(&self) -> C64 {
        let slope = (0..=64)
            .map(|i| self.phase(self.a + (self.b - self.a) * i as f64 / 64.0)[1].abs())
            .fold(1.0, f64::max);
        let panels = (((self.b - self.a) * slope).ceil() as usize).max(64) * 2;
        composite_gl(|k| C64::from_polar(self.psi(k), self.phase(k)[0]), self.a, self.b, panels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_edges_are_squares() {
        let e = hill_edges(&PeriodicPotential::free(1.0), 16);
        for (i, v) in e.iter().take(10).enumerate() {
            let ell = i.div_ceil(2) as f64;
            assert!((v - (ell * PI).powi(2)).abs() < 1e-9, "{i}: {v}");
        }
    }

    #[test]
    fn gl_integrates_polynomials() {
        let v = composite_gl(|x| C64::new(x.powi(9), 0.0), 0.0, 2.0, 1);
        assert!((v.re - 102.4).abs() < 1e-11);
    }
}
