//! Band edges of the Hill operator from critical points of the discriminant.
//!
//! Each gap (open or closed) contains exactly one critical point of Delta,
//! where |Delta| >= 2 and the sign of Delta alternates. Critical points are
//! located by a sign scan of Delta' on a grid uniform in sqrt(lambda), the
//! zeros of Delta between consecutive critical points separate the gaps, and
//! the edges are the roots of Delta^2 - 4 inside those brackets.

use crate::error::{Error, Result};
use crate::ode::{HillSolver, OdeConfig};
use crate::par;
use crate::potential::PeriodicPotential;
use crate::roots::brent;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const BAND_TABLE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub ode: OdeConfig,
    /// Scan nodes per unit pi/L of sqrt(lambda).
    pub scan_per_band: usize,
    /// A gap is open when Delta^2 - 4 at its critical point exceeds this
    /// multiple of the resolution-doubling noise.
    pub closed_gap_factor: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            ode: OdeConfig::default(),
            scan_per_band: 16,
            closed_gap_factor: 16.0,
        }
    }
}

/// Gap number ell >= 1 with edges A^- <= A^+ (normalized energies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub ell: usize,
    pub lower: f64,
    pub upper: f64,
    /// Critical point of the discriminant inside the gap.
    pub critical: f64,
    pub closed: bool,
}

/// Band n occupies [A_n^+, A_{n+1}^-] in normalized energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub n: usize,
    pub ell: usize,
    pub a_plus: f64,
    pub a_minus_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub schema_version: u32,
    /// Potential shifted so that the bottom of the spectrum is 0.
    pub potential: PeriodicPotential,
    /// Constant subtracted from the input potential.
    pub shift: f64,
    pub bands: Vec<Band>,
    /// gaps[i] is gap ell = i + 1.
    pub gaps: Vec<Gap>,
    pub ode: OdeConfig,
}

impl BandTable {
    pub fn period(&self) -> f64 {
        self.potential.period
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    /// Square-root edges a_n^+ and a_{n+1}^- of band n.
    pub fn band_w(&self, n: usize) -> (f64, f64) {
        let b = &self.bands[n];
        (b.a_plus.max(0.0).sqrt(), b.a_minus_next.max(0.0).sqrt())
    }

    /// |g_ell| = a_ell^+ - a_ell^- in the square-root variable; 0 for closed gaps.
    pub fn gap_w(&self, ell: usize) -> f64 {
        if ell == 0 || ell > self.gaps.len() {
            return 0.0;
        }
        let g = &self.gaps[ell - 1];
        if g.closed {
            0.0
        } else {
            g.upper.max(0.0).sqrt() - g.lower.max(0.0).sqrt()
        }
    }

    /// Quasimomentum interval [ell pi / L, (ell + 1) pi / L] of band n.
    pub fn k_interval(&self, n: usize) -> (f64, f64) {
        let l = self.period();
        let ell = self.bands[n].ell as f64;
        (ell * PI / l, (ell + 1.0) * PI / l)
    }

    /// <ell> |a_n^+ - ell pi / L|, the quantity bounded in the edge asymptotics.
    pub fn edge_offset_times_ell(&self, n: usize) -> f64 {
        let (a, _) = self.band_w(n);
        let ell = self.bands[n].ell as f64;
        (1.0 + ell * ell).sqrt() * (a - ell * PI / self.period()).abs()
    }

    /// Solver for the normalized potential with the integrator settings used here.
    pub fn solver(&self) -> HillSolver {
        HillSolver::new(self.potential.clone(), self.ode)
    }
}

/// Band table covering every band whose upper edge lies below `lambda_max`
/// (measured in the units of the input potential).
pub fn find_bands(pot: &PeriodicPotential, lambda_max: f64, cfg: &BandConfig) -> Result<BandTable> {
    let solver = HillSolver::new(pot.clone(), cfg.ode);
    let l = pot.period;
    let lambda_lo = pot.lower_bound() - 0.5;
    let du = PI / (l * cfg.scan_per_band.max(4) as f64);
    let u_max = (lambda_max - lambda_lo).max(0.0).sqrt() + 2.5 * PI / l;
    let n_scan = (u_max / du).ceil() as usize + 1;
    let lams: Vec<f64> = (0..n_scan).map(|i| lambda_lo + (i as f64 * du).powi(2)).collect();
    let d1: Vec<Result<f64>> = par::map(&lams, |&lam| Ok(solver.monodromy(lam, 1)?.delta().derivative(1)));
    let d1 = d1.into_iter().collect::<Result<Vec<f64>>>()?;

    // Critical points of Delta.
    let brackets: Vec<(f64, f64, f64, f64)> = (0..n_scan - 1)
        .filter(|&i| d1[i] != 0.0 && (d1[i] > 0.0) != (d1[i + 1] > 0.0))
        .map(|i| (lams[i], lams[i + 1], d1[i], d1[i + 1]))
        .collect();
    let crit: Vec<Result<f64>> = par::map(&brackets, |&(a, b, fa, fb)| {
        let mut failure = None;
        let x = brent(
            |lam| match solver.monodromy(lam, 1) {
                Ok(m) => m.delta().derivative(1),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            fa,
            fb,
            1e-15 * b.abs().max(1.0),
            200,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(x),
        }
    });
    let crit = crit.into_iter().collect::<Result<Vec<f64>>>()?;
    if crit.is_empty() {
        return Err(Error::EdgePairingFailed {
            lambda: lambda_max,
            reason: "no critical point of the discriminant below lambda_max".into(),
        });
    }

    // Alternation and |Delta| >= 2 at critical points; gap openness.
    struct CritInfo {
        lambda: f64,
        delta: f64,
        open: bool,
    }
    let infos: Vec<Result<CritInfo>> = crit
        .iter()
        .enumerate()
        .collect::<Vec<_>>()
        .iter()
        .map(|&(i, &lam)| {
            let ell = i + 1;
            let m = solver.monodromy(lam, 0)?;
            let delta = m.delta().value();
            let expected = if ell % 2 == 1 { -1.0 } else { 1.0 };
            if delta * expected < 2.0 - 1e-6 {
                return Err(Error::EdgePairingFailed {
                    lambda: lam,
                    reason: format!("critical point {ell} has Delta = {delta}, expected sign {expected} and |Delta| >= 2"),
                });
            }
            let f = m.gap_function().value();
            // Noise floor from the same evaluation at half the resolution.
            let coarse = solver.monodromy_fixed(lam, m.steps / 2, 0).gap_function().value();
            let noise = (f - coarse).abs() + (64.0 * f64::EPSILON).powi(2);
            Ok(CritInfo {
                lambda: lam,
                delta,
                open: f > cfg.closed_gap_factor * noise,
            })
        })
        .collect();
    let infos = infos.into_iter().collect::<Result<Vec<_>>>()?;

    // Zeros of Delta: z[0] below the first critical point, z[i] between
    // critical points i and i + 1.
    let delta_at = |lam: f64| solver.monodromy(lam, 0).map(|m| m.delta().value());
    let mut zeros = Vec::with_capacity(infos.len());
    let mut left = lambda_lo;
    let mut f_left = delta_at(left)?;
    if f_left <= 2.0 {
        return Err(Error::EdgePairingFailed {
            lambda: left,
            reason: "discriminant below 2 under the spectrum".into(),
        });
    }
    for info in &infos {
        let right = info.lambda;
        let f_right = info.delta;
        zeros.push(find_root(&solver, left, right, f_left, f_right, |m| m.delta().value())?);
        left = right;
        f_left = f_right;
    }

    // Edges.
    let gap_fn = |m: &crate::ode::Monodromy| m.gap_function().value();
    let f_at = |lam: f64| solver.monodromy(lam, 0).map(|m| m.gap_function().value());
    let bottom = find_root(&solver, lambda_lo, zeros[0], f_at(lambda_lo)?, -4.0, gap_fn)?;
    let mut raw_gaps = Vec::new();
    for (i, info) in infos.iter().enumerate() {
        let ell = i + 1;
        if i + 1 >= zeros.len() {
            break;
        }
        let (lower, upper) = if info.open {
            let fc = f_at(info.lambda)?;
            let lo = find_root(&solver, zeros[i], info.lambda, -4.0, fc, gap_fn)?;
            let hi = find_root(&solver, info.lambda, zeros[i + 1], fc, -4.0, gap_fn)?;
            (lo, hi)
        } else {
            (info.lambda, info.lambda)
        };
        raw_gaps.push((ell, lower, upper, info.lambda, !info.open));
    }

    let shift = bottom;
    let gaps: Vec<Gap> = raw_gaps
        .iter()
        .map(|&(ell, lower, upper, critical, closed)| Gap {
            ell,
            lower: lower - shift,
            upper: upper - shift,
            critical: critical - shift,
            closed,
        })
        .collect();
    let mut bands = Vec::new();
    for n in 0..gaps.len() {
        let a_plus = if n == 0 { 0.0 } else { gaps[n - 1].upper };
        let a_minus_next = gaps[n].lower;
        if a_minus_next + shift > lambda_max {
            break;
        }
        bands.push(Band {
            n,
            ell: n,
            a_plus,
            a_minus_next,
        });
    }
    if bands.is_empty() {
        return Err(Error::EdgePairingFailed {
            lambda: lambda_max,
            reason: "no complete band below lambda_max".into(),
        });
    }
    let gaps = gaps[..bands.len()].to_vec();
    Ok(BandTable {
        schema_version: BAND_TABLE_SCHEMA,
        potential: pot.shifted(-shift),
        shift,
        bands,
        gaps,
        ode: cfg.ode,
    })
}

/// Table with exactly `n_bands` bands.
pub fn find_n_bands(pot: &PeriodicPotential, n_bands: usize, cfg: &BandConfig) -> Result<BandTable> {
    let l = pot.period;
    let lambda_max = ((n_bands as f64 + 1.0) * PI / l).powi(2) + 2.0 * pot.sup_bound() + 1.0;
    let mut t = find_bands(pot, lambda_max, cfg)?;
    if t.bands.len() < n_bands {
        return Err(Error::EdgePairingFailed {
            lambda: lambda_max,
            reason: format!("found {} bands, wanted {n_bands}", t.bands.len()),
        });
    }
    t.bands.truncate(n_bands);
    t.gaps.truncate(n_bands);
    Ok(t)
}

fn find_root(
    solver: &HillSolver,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    g: impl Fn(&crate::ode::Monodromy) -> f64,
) -> Result<f64> {
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::EdgePairingFailed {
            lambda: 0.5 * (a + b),
            reason: format!("no sign change on [{a}, {b}]"),
        });
    }
    let mut failure = None;
    let x = brent(
        |lam| match solver.monodromy(lam, 0) {
            Ok(m) => g(&m),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        fa,
        fb,
        4.0 * f64::EPSILON * b.abs().max(1.0),
        300,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(x),
    }
}
