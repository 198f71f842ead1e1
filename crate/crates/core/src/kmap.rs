//! Real quasimomentum map k(lambda) and band-function derivatives.
//!
//! On band n the relation cos(kL) = Delta(lambda)/2 is inverted on the branch
//! k L in [ell pi, (ell + 1) pi]. Derivatives of E = lambda(k) follow from
//! implicit differentiation, always using Delta-derivatives recomputed at the
//! query point.

use crate::bands::BandTable;
use crate::error::{Error, Result};
use crate::ode::{HillSolver, Monodromy};
use crate::par;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmapConfig {
    pub nodes_per_band: usize,
    /// Edge exclusion in w: max(edge_rel * |g|^(1/2), edge_floor).
    pub edge_rel: f64,
    pub edge_floor: f64,
}

impl Default for KmapConfig {
    fn default() -> Self {
        Self {
            nodes_per_band: 64,
            edge_rel: 1e-2,
            edge_floor: 1e-7,
        }
    }
}

/// E(k) and its first three k-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyDerivs {
    pub e: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl EnergyDerivs {
    /// Values at -k, by evenness of E.
    pub fn reflected(self) -> Self {
        Self {
            e: self.e,
            e1: -self.e1,
            e2: self.e2,
            e3: -self.e3,
        }
    }
}

#[derive(Debug, Clone)]
struct BandNodes {
    lambda: Vec<f64>,
    k: Vec<f64>,
    /// PCHIP slopes of lambda(k).
    slope: Vec<f64>,
    /// Fixed step count adequate for the whole band.
    steps: usize,
}

#[derive(Debug, Clone)]
pub struct QuasimomentumMap {
    table: BandTable,
    solver: HillSolver,
    cfg: KmapConfig,
    bands: Vec<BandNodes>,
}

/// k on band `ell` from a monodromy evaluation.
pub fn k_from_monodromy(m: &Monodromy, ell: usize, period: f64) -> f64 {
    let c = 0.5 * m.delta().value();
    let s = 0.5 * (-m.gap_function().value()).max(0.0).sqrt();
    let theta = s.atan2(c);
    let base = ell as f64 * PI;
    let kl = if ell.is_multiple_of(2) { base + theta } else { base + PI - theta };
    kl / period
}

/// Implicit differentiation of cos(kL) = Delta(lambda)/2.
pub fn energy_derivs_from(m: &Monodromy, k: f64, period: f64) -> EnergyDerivs {
    let d = m.delta();
    let (d1, d2, d3) = (d.derivative(1), d.derivative(2), d.derivative(3));
    let (s, c) = (k * period).sin_cos();
    let l1 = -2.0 * s / d1;
    let l2 = (-2.0 * c - d2 * l1 * l1) / d1;
    let l3 = (2.0 * s - d3 * l1 * l1 * l1 - 3.0 * d2 * l1 * l2) / d1;
    EnergyDerivs {
        e: m.lambda,
        e1: period * l1,
        e2: period * period * l2,
        e3: period.powi(3) * l3,
    }
}

/// Node placement in lambda: clustered like the square root near both edges.
fn graded(a: f64, b: f64, i: usize, m: usize) -> f64 {
    let s = i as f64 / (m - 1) as f64;
    a + (b - a) * 0.5 * (1.0 - (PI * s).cos())
}

/// Square-root graded nodes on band n, refined geometrically towards every
/// open-gap edge down to a small fraction of the gap length.
pub fn node_lambdas(table: &BandTable, n: usize, m: usize) -> Vec<f64> {
    let b = &table.bands[n];
    let (a, c) = (b.a_plus, b.a_minus_next);
    let mut v: Vec<f64> = (0..m).map(|i| graded(a, c, i, m)).collect();
    let first = graded(a, c, 1, m) - a;
    let gap_len = |ell: usize| -> Option<f64> {
        let g = table.gaps.get(ell.checked_sub(1)?)?;
        (!g.closed).then_some(g.upper - g.lower)
    };
    let mut extra = Vec::new();
    if n > 0 {
        if let Some(len) = gap_len(n) {
            let mut d = 0.5 * first;
            while d > len / 64.0 {
                extra.push(a + d);
                d *= 0.5;
            }
        }
    }
    if let Some(len) = gap_len(n + 1) {
        let mut d = 0.5 * first;
        while d > len / 64.0 {
            extra.push(c - d);
            d *= 0.5;
        }
    }
    v.extend(extra);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = d[0];
        m[1] = d[0];
        return m;
    }
    for i in 1..n - 1 {
        if d[i - 1] * d[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && v.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            v
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

fn pchip_eval(x: &[f64], y: &[f64], m: &[f64], i: usize, t: f64) -> f64 {
    let h = x[i + 1] - x[i];
    let s = (t - x[i]) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1]
}

/// Tabulates k(lambda) on every band of `table`.
pub fn build_kmap(table: &BandTable, cfg: &KmapConfig) -> Result<QuasimomentumMap> {
    if cfg.nodes_per_band < 16 {
        return Err(Error::InvalidInput("nodes_per_band must be at least 16".into()));
    }
    let solver = table.solver();
    let l = table.period();
    let idx: Vec<usize> = (0..table.n_bands()).collect();
    let built: Vec<Result<BandNodes>> = par::map(&idx, |&n| {
        let b = &table.bands[n];
        let (k_lo, k_hi) = table.k_interval(n);
        let lams = node_lambdas(table, n, cfg.nodes_per_band);
        let m = lams.len();
        let mut lambda = Vec::with_capacity(m);
        let mut k = Vec::with_capacity(m);
        let mut steps = solver.steps_for(b.a_minus_next);
        let mut slope_sign = 0.0;
        for (i, &lam) in lams.iter().enumerate() {
            let kk = if i == 0 {
                k_lo
            } else if i == m - 1 {
                k_hi
            } else {
                let mono = solver.monodromy(lam, 1)?;
                steps = steps.max(mono.steps);
                let d1 = mono.delta().derivative(1);
                if slope_sign == 0.0 {
                    slope_sign = d1.signum();
                } else if d1.signum() != slope_sign {
                    return Err(Error::NonMonotonic { band: n });
                }
                k_from_monodromy(&mono, b.ell, l)
            };
            if let Some(&prev) = k.last() {
                if kk <= prev {
                    return Err(Error::NonMonotonic { band: n });
                }
            }
            lambda.push(lam);
            k.push(kk);
        }
        let slope = pchip_slopes(&k, &lambda);
        Ok(BandNodes {
            lambda,
            k,
            slope,
            steps,
        })
    });
    let bands = built.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(QuasimomentumMap {
        table: table.clone(),
        solver,
        cfg: *cfg,
        bands,
    })
}

impl QuasimomentumMap {
    pub fn table(&self) -> &BandTable {
        &self.table
    }

    pub fn solver(&self) -> &HillSolver {
        &self.solver
    }

    pub fn config(&self) -> &KmapConfig {
        &self.cfg
    }

    pub fn period(&self) -> f64 {
        self.table.period()
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    /// Upper end of the tabulated k range.
    pub fn k_max(&self) -> f64 {
        self.table.k_interval(self.n_bands() - 1).1
    }

    /// Fixed step count used for evaluations on band n.
    pub fn band_steps(&self, n: usize) -> usize {
        self.bands[n].steps
    }

    /// Tabulated (lambda_i, k_i) of band n.
    pub fn nodes(&self, n: usize) -> (&[f64], &[f64]) {
        (&self.bands[n].lambda, &self.bands[n].k)
    }

    /// Band containing |k|, if tabulated.
    pub fn band_of_k(&self, k: f64) -> Option<usize> {
        let kl = k.abs() * self.period() / PI;
        let n = kl.floor() as usize;
        if n < self.n_bands() {
            Some(n)
        } else if n == self.n_bands() && kl == n as f64 {
            Some(n - 1)
        } else {
            None
        }
    }

    /// Exclusion distances in w at the lower and upper edge of band n.
    pub fn edge_exclusion(&self, n: usize) -> (f64, f64) {
        let f = |g: f64| (self.cfg.edge_rel * g.sqrt()).max(self.cfg.edge_floor);
        let lo = if n == 0 { 0.0 } else { f(self.table.gap_w(n)) };
        (lo, f(self.table.gap_w(n + 1)))
    }

    /// Initial guess for lambda(k), k >= 0 inside band n, with its bracket.
    fn guess(&self, n: usize, k: f64) -> (f64, usize) {
        let b = &self.bands[n];
        let i = match b.k.partition_point(|&x| x <= k) {
            0 => 0,
            p if p >= b.k.len() => b.k.len() - 2,
            p => p - 1,
        };
        (pchip_eval(&b.k, &b.lambda, &b.slope, i, k), i)
    }

    /// Solves cos(kL) = Delta/2 for lambda on band n at fixed resolution and
    /// returns the order-3 monodromy at the solution. k must satisfy k >= 0.
    pub fn solve_band(&self, n: usize, k: f64, steps: usize) -> Monodromy {
        let b = &self.bands[n];
        let l = self.period();
        let (guess, i) = self.guess(n, k);
        let (sk, ck) = (k * l).sin_cos();
        let use_gap_form = ck.abs() > 0.5;
        let target = if use_gap_form { -4.0 * sk * sk } else { 2.0 * ck };
        let g_of = |m: &Monodromy| {
            if use_gap_form {
                let f = m.gap_function();
                (f.value() - target, f.derivative(1))
            } else {
                let d = m.delta();
                (d.value() - target, d.derivative(1))
            }
        };
        let node_g = |j: usize| {
            let (s, c) = (b.k[j] * l).sin_cos();
            if use_gap_form {
                -4.0 * s * s - target
            } else {
                2.0 * c - target
            }
        };
        let (mut lo, mut hi) = (b.lambda[i], b.lambda[i + 1]);
        let g_lo = node_g(i);
        if g_lo == 0.0 {
            return self.solver.monodromy_fixed(lo, steps, 3);
        }
        if node_g(i + 1) == 0.0 {
            return self.solver.monodromy_fixed(hi, steps, 3);
        }
        let mut x = guess.clamp(lo, hi);
        for _ in 0..80 {
            let m = self.solver.monodromy_fixed(x, steps, 1);
            let (g, dg) = g_of(&m);
            if g == 0.0 {
                break;
            }
            if g.signum() == g_lo.signum() {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - g / dg;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let done = (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1.0) || hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(1.0);
            x = next;
            if done {
                break;
            }
        }
        self.solver.monodromy_fixed(x, steps, 3)
    }

    /// E and derivatives at any real k in the tabulated range, without the
    /// edge-exclusion check.
    pub fn energy_derivs_unchecked(&self, k: f64) -> Result<EnergyDerivs> {
        let n = self
            .band_of_k(k)
            .ok_or_else(|| Error::InvalidInput(format!("k = {k} beyond the tabulated bands")))?;
        let ka = k.abs();
        let m = self.solve_band(n, ka, self.bands[n].steps);
        let d = energy_derivs_from(&m, ka, self.period());
        Ok(if k < 0.0 { d.reflected() } else { d })
    }

    /// E, E', E'', E''' at k, refusing points inside the edge exclusion zones.
    pub fn energy_derivs(&self, k: f64) -> Result<EnergyDerivs> {
        let d = self.energy_derivs_unchecked(k)?;
        let n = self.band_of_k(k).expect("checked above");
        let (a_lo, a_hi) = self.table.band_w(n);
        let w = d.e.max(0.0).sqrt();
        let (x_lo, x_hi) = self.edge_exclusion(n);
        let dist = (w - a_lo).min(a_hi - w);
        if w - a_lo < x_lo || a_hi - w < x_hi {
            return Err(Error::TooCloseToEdge {
                k,
                distance: dist,
                exclusion: if w - a_lo < x_lo { x_lo } else { x_hi },
            });
        }
        Ok(d)
    }

    /// Energy derivatives at k >= 0 on band n, at the band's resolution and
    /// at twice that; their difference is the noise estimate.
    pub fn energy_derivs_pair(&self, n: usize, k: f64) -> (EnergyDerivs, EnergyDerivs) {
        let st = self.bands[n].steps;
        let l = self.period();
        let a = energy_derivs_from(&self.solve_band(n, k, st), k, l);
        let b = energy_derivs_from(&self.solve_band(n, k, 2 * st), k, l);
        (a, b)
    }

    pub fn energy(&self, k: f64) -> Result<f64> {
        self.energy_derivs_unchecked(k).map(|d| d.e)
    }

    /// k >= 0 and energy derivatives at a normalized energy lambda inside band n.
    pub fn at_lambda(&self, n: usize, lambda: f64) -> Result<(f64, EnergyDerivs)> {
        let b = &self.table.bands[n];
        if !(lambda >= b.a_plus && lambda <= b.a_minus_next) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} outside band {n}")));
        }
        let m = self.solver.monodromy(lambda, 3)?;
        let k = k_from_monodromy(&m, b.ell, self.period());
        Ok((k, energy_derivs_from(&m, k, self.period())))
    }

    /// Band containing w = sqrt(lambda), if any.
    pub fn band_of_w(&self, w: f64) -> Option<usize> {
        (0..self.n_bands()).find(|&n| {
            let (a, b) = self.table.band_w(n);
            w >= a && w <= b
        })
    }

    /// k'(w) and the edge profile A(w) of the bounds k'(w) - 1 ~ A(w).
    pub fn kprime_bounds_check(&self, w: f64) -> Result<KPrimeCheck> {
        let n = self
            .band_of_w(w)
            .ok_or_else(|| Error::InvalidInput(format!("w = {w} is not inside a computed band")))?;
        let (k, d) = self.at_lambda(n, w * w)?;
        let (a_lo, a_hi) = self.table.band_w(n);
        let g_lo = if n == 0 { 0.0 } else { self.table.gap_w(n) };
        let g_hi = self.table.gap_w(n + 1);
        let mut a_w = 0.0;
        if g_lo > 0.0 {
            let s = w - a_lo;
            a_w += g_lo * g_lo / (s.sqrt() * (s + g_lo).powf(1.5));
        }
        if g_hi > 0.0 {
            let s = a_hi - w;
            a_w += g_hi * g_hi / (s.sqrt() * (s + g_hi).powf(1.5));
        }
        Ok(KPrimeCheck {
            w,
            band: n,
            k,
            kprime: 2.0 * w / d.e1,
            a_w,
        })
    }

    /// k''(w) = 2/E' - 4 w^2 E''/E'^3.
    pub fn k_second_deriv_in_w(&self, w: f64) -> Result<f64> {
        let n = self
            .band_of_w(w)
            .ok_or_else(|| Error::InvalidInput(format!("w = {w} is not inside a computed band")))?;
        let (_, d) = self.at_lambda(n, w * w)?;
        Ok(2.0 / d.e1 - 4.0 * w * w * d.e2 / d.e1.powi(3))
    }

    /// Interior tabulated nodes of band n with energy derivatives at the
    /// band resolution and at twice that.
    fn node_pairs(&self, n: usize) -> Vec<(f64, EnergyDerivs, EnergyDerivs)> {
        let (_, ks) = self.nodes(n);
        ks[1..ks.len() - 1]
            .iter()
            .map(|&k| {
                let (a, b) = self.energy_derivs_pair(n, k);
                (k, a, b)
            })
            .collect()
    }

    /// Unique interior sign change w1 of k''(w) on band n, located by a scan
    /// over the tabulated nodes and bisection. Nodes whose k'' moves by more
    /// than 10% when the resolution doubles are skipped. Returns None when
    /// k'' keeps one sign (free bands, and band 0 whose lower edge is the
    /// bottom of the spectrum), and an error if the sign changes more than
    /// once or k'' is not negative below w1.
    pub fn kpp_sign_change(&self, n: usize) -> Result<Option<f64>> {
        let kpp = |d: &EnergyDerivs| 2.0 / d.e1 - 4.0 * d.e * d.e2 / d.e1.powi(3);
        let vals: Vec<(f64, f64)> = self
            .node_pairs(n)
            .iter()
            .filter_map(|(_, a, b)| {
                let (va, vb) = (kpp(a), kpp(b));
                ((va - vb).abs() <= 0.1 * va.abs()).then_some((a.e.sqrt(), va))
            })
            .collect();
        let changes: Vec<usize> = (0..vals.len().saturating_sub(1))
            .filter(|&i| (vals[i].1 < 0.0) != (vals[i + 1].1 < 0.0))
            .collect();
        match changes.len() {
            0 => Ok(None),
            1 => {
                let i = changes[0];
                if vals[..=i].iter().any(|&(_, v)| v >= 0.0) {
                    return Err(Error::HypothesisViolated(format!("k'' not negative below its sign change on band {n}")));
                }
                let (a, b) = crate::roots::bisect_predicate(
                    |w| self.k_second_deriv_in_w(w).map(|v| v >= 0.0).unwrap_or(true),
                    vals[i].0,
                    vals[i + 1].0,
                    1e-13,
                );
                Ok(Some(0.5 * (a + b)))
            }
            c => Err(Error::HypothesisViolated(format!("k'' changes sign {c} times on band {n}"))),
        }
    }

    /// Edge behaviour of E' and the sign pattern of E'' on band n. E' is
    /// probed at `probe_rel` times the band width inside each edge.
    pub fn band_shape(&self, n: usize, probe_rel: f64) -> Result<BandShape> {
        let pairs = self.node_pairs(n);
        let mid = pairs.iter().fold(0.0_f64, |m, (_, a, _)| m.max(a.e1.abs()));
        let b = &self.table.bands[n];
        let width = b.a_minus_next - b.a_plus;
        let probe = probe_rel * width;
        let lo = self.at_lambda(n, b.a_plus + probe)?.1.e1.abs();
        let hi = self.at_lambda(n, b.a_minus_next - probe)?.1.e1.abs();
        let reliable: Vec<f64> = pairs
            .iter()
            .filter(|(_, a, b)| (a.e2 - b.e2).abs() <= 0.1 * a.e2.abs())
            .map(|(_, a, _)| a.e2)
            .collect();
        let changes = reliable.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        let interior_zero = pairs.iter().any(|(_, a, _)| a.e1 <= 0.0);
        Ok(BandShape {
            band: n,
            edge_probe: probe,
            edot_lo_ratio: lo / mid,
            edot_hi_ratio: hi / mid,
            edot_positive: !interior_zero,
            e2_sign_changes: changes,
            nodes: pairs.len(),
            unreliable: pairs.len() - reliable.len(),
        })
    }
}

/// Summary of E' and E'' on one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandShape {
    pub band: usize,
    /// Distance in lambda from each edge at which E' is probed.
    pub edge_probe: f64,
    /// |E'| at the probes relative to its largest value on the band.
    pub edot_lo_ratio: f64,
    pub edot_hi_ratio: f64,
    /// E' > 0 at every interior node.
    pub edot_positive: bool,
    pub e2_sign_changes: usize,
    pub nodes: usize,
    /// Nodes whose E'' moved by more than 10% under resolution doubling.
    pub unreliable: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPrimeCheck {
    pub w: f64,
    pub band: usize,
    pub k: f64,
    pub kprime: f64,
    pub a_w: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{find_n_bands, BandConfig};
    use crate::potential::PeriodicPotential;

    fn free_map() -> QuasimomentumMap {
        let t = find_n_bands(&PeriodicPotential::free(1.0), 6, &BandConfig::default()).unwrap();
        build_kmap(&t, &KmapConfig::default()).unwrap()
    }

    #[test]
    fn free_band_function() {
        let km = free_map();
        let d = km.energy_derivs(3.0).unwrap();
        assert!((d.e - 9.0).abs() < 1e-9);
        assert!((d.e1 - 6.0).abs() < 1e-8);
        assert!((d.e2 - 2.0).abs() < 1e-6);
        assert!(d.e3.abs() < 1e-4);
        let r = km.energy_derivs(-3.0).unwrap();
        assert_eq!(r.e, d.e);
        assert_eq!(r.e1, -d.e1);
        for n in 0..6 {
            let (lams, ks) = km.nodes(n);
            for (l, k) in lams.iter().zip(ks) {
                assert!((k - l.sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn free_kprime_is_one() {
        let km = free_map();
        let c = km.kprime_bounds_check(4.0).unwrap();
        assert!((c.kprime - 1.0).abs() < 1e-9);
        assert_eq!(c.a_w, 0.0);
        assert!(km.k_second_deriv_in_w(4.0).unwrap().abs() < 1e-7);
    }

    #[test]
    fn edge_exclusion_is_enforced() {
        let t = find_n_bands(&PeriodicPotential::cosine(1.0), 4, &BandConfig::default()).unwrap();
        let km = build_kmap(&t, &KmapConfig::default()).unwrap();
        let k = PI + 1e-6;
        assert!(matches!(km.energy_derivs(k), Err(Error::TooCloseToEdge { .. })));
        assert!(km.energy_derivs(1.5 * PI).is_ok());
    }
}
