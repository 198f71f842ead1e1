//! One function per subcommand. Each writes its artifacts into the output
//! directory, prints a short human-readable report and returns the checks
//! that failed.

use crate::cache;
use crate::config::{Preset, Provenance, RunConfig, SCHEMA_VERSION};
use crate::oracle;
use crate::output::{num, write_json, Csv};
use anyhow::Result;
use hill_kg::bloch::{eigenrelation_check, forward_transform, inverse_transform, parseval_error, Sampled};
use hill_kg::fit::kendall_tau;
use hill_kg::oscillatory::{oscillatory_quad, vdc_bound, OscConfig};
use hill_kg::phase::nondegeneracy_floor;
use hill_kg::*;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub oracle: bool,
}

#[derive(Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: Provenance,
    #[serde(flatten)]
    body: T,
}

fn report<T: Serialize>(ctx: &Context, out: &mut Outcome, command: &str, body: T) -> Result<()> {
    let r = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config: Provenance::of(&ctx.cfg),
        body,
    };
    out.files.push(write_json(&ctx.out, &format!("{command}.json"), &r)?);
    Ok(())
}

impl Context {
    fn table(&self) -> Result<BandTable> {
        cache::band_table(self.cache.as_deref(), &self.cfg.potential()?, self.cfg.n_max, &self.cfg.band_config())
    }

    fn kmap(&self) -> Result<QuasimomentumMap> {
        Ok(build_kmap(&self.table()?, &self.cfg.kmap_config())?)
    }

    fn tables(&self) -> Result<(QuasimomentumMap, BlochTable)> {
        let km = self.kmap()?;
        let blt = build_bloch_table(&km, self.cfg.n_max, &self.cfg.bloch_config())?;
        Ok((km, blt))
    }

    fn dset(&self, km: &QuasimomentumMap, resolution: usize) -> DegenerateSet {
        let k_max = self.cfg.dset_k_max.unwrap_or(km.k_max()).min(km.k_max());
        let dcfg = DsetConfig {
            resolution,
            ..self.cfg.dset_config()
        };
        find_degenerate_set(km, k_max, &dcfg)
    }
}

// ---------------------------------------------------------------- bands

#[derive(Serialize)]
struct GapReport {
    /// Over bands n >= 1.
    offset_min: f64,
    offset_max: f64,
    offset_kendall_tau: f64,
    /// <ell>^4 |g_ell| for ell = 1..
    weighted_gaps: Vec<f64>,
    /// First ell from which the weighted gaps never increase.
    weighted_nonincreasing_from: usize,
    open_gaps: usize,
}

#[derive(Serialize)]
struct EdgeOracle {
    edges_compared: usize,
    max_abs_err: f64,
    tolerance: f64,
}

#[derive(Serialize)]
struct BandsBody {
    shift: f64,
    /// First edges in the units of the input potential: A_0^+, A_1^-, A_1^+, ...
    raw_edges: Vec<f64>,
    gaps: GapReport,
    oracle: Option<EdgeOracle>,
}

fn normalized_edges(t: &BandTable) -> Vec<f64> {
    let mut e = vec![t.bands[0].a_plus];
    for g in &t.gaps {
        e.extend([g.lower, g.upper]);
    }
    e
}

pub fn bands(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let t = ctx.table()?;
    let mut csv = Csv::new(&["n", "ell_n", "A_plus", "A_minus_next", "gap_w", "edge_offset_times_ell"]);
    for (n, b) in t.bands.iter().enumerate() {
        csv.row(&[
            n.to_string(),
            b.ell.to_string(),
            num(b.a_plus),
            num(b.a_minus_next),
            num(t.gap_w(b.ell)),
            num(t.edge_offset_times_ell(n)),
        ]);
    }
    out.files.push(csv.write(&ctx.out, "bands.csv")?);

    let offsets: Vec<f64> = (1..t.n_bands()).map(|n| t.edge_offset_times_ell(n)).collect();
    let weighted: Vec<f64> = (1..t.n_bands())
        .map(|ell| (1.0 + (ell * ell) as f64).powi(2) * t.gap_w(ell))
        .collect();
    let mut from = weighted.len();
    while from > 0 && (from == weighted.len() || weighted[from - 1] >= weighted[from]) {
        from -= 1;
    }
    let gaps = GapReport {
        offset_min: offsets.iter().copied().fold(f64::INFINITY, f64::min),
        offset_max: offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        offset_kendall_tau: kendall_tau(&offsets),
        weighted_nonincreasing_from: from + 1,
        open_gaps: weighted.iter().filter(|&&w| w > 0.0).count(),
        weighted_gaps: weighted,
    };
    let edges = normalized_edges(&t);
    let oracle = ctx.oracle.then(|| {
        let half = ctx.cfg.oracle_half_dim;
        let reference = oracle::hill_edges(&t.potential, half);
        // the lower half of each parity block resolves edges up to gap half / 2
        let count = edges.len().min(half + 1);
        let err = (0..count).map(|i| (edges[i] - reference[i]).abs()).fold(0.0, f64::max);
        EdgeOracle {
            edges_compared: count,
            max_abs_err: err,
            tolerance: 1e-7,
        }
    });
    println!(
        "bands: {} bands, {} open gaps, <l>|a_l - l pi/L| in [{:.4e}, {:.4e}], tau {:.3}",
        t.n_bands(),
        gaps.open_gaps,
        gaps.offset_min,
        gaps.offset_max,
        gaps.offset_kendall_tau
    );
    if let Some(o) = &oracle {
        println!("bands: oracle max edge error {:.2e} over {} edges", o.max_abs_err, o.edges_compared);
        out.require(o.max_abs_err <= o.tolerance, format!("edge oracle error {:.3e}", o.max_abs_err));
    }
    let body = BandsBody {
        shift: t.shift,
        raw_edges: edges.iter().take(6).map(|e| e + t.shift).collect(),
        gaps,
        oracle,
    };
    report(ctx, &mut out, "bands", body)?;
    Ok(out)
}

// ---------------------------------------------------------------- dset

#[derive(Serialize)]
struct Candidate {
    mu: f64,
    k_witness: f64,
    residual: f64,
}

#[derive(Serialize)]
struct DsetBody {
    k_max: f64,
    candidates: Vec<Candidate>,
    rejected_roots: usize,
    unresolved_nodes: usize,
    /// Candidates from a run at doubled resolution, with --oracle.
    doubled: Option<Vec<Candidate>>,
}

fn candidates(d: &DegenerateSet) -> Vec<Candidate> {
    d.candidates
        .iter()
        .map(|c| Candidate {
            mu: c.mu,
            k_witness: c.k_witness,
            residual: c.residual,
        })
        .collect()
}

pub fn dset(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let km = ctx.kmap()?;
    let d = ctx.dset(&km, ctx.cfg.dset_resolution);
    println!("dset: {} candidates below k = {:.4}: {:?}", d.candidates.len(), d.k_max, d.mus());
    out.require(d.candidates.iter().all(|c| c.residual < 1e-8), "candidate residual above 1e-8");
    let doubled = ctx.oracle.then(|| ctx.dset(&km, 2 * ctx.cfg.dset_resolution));
    if let Some(b) = &doubled {
        let stable = b.candidates.len() == d.candidates.len()
            && b.candidates.iter().zip(&d.candidates).all(|(x, y)| (x.mu - y.mu).abs() <= 1e-6);
        println!("dset: doubled resolution gives {:?}", b.mus());
        out.require(stable, "candidate set changes under resolution doubling");
    }
    let body = DsetBody {
        k_max: d.k_max,
        candidates: candidates(&d),
        rejected_roots: d.rejected_roots,
        unresolved_nodes: d.unresolved_nodes,
        doubled: doubled.as_ref().map(candidates),
    };
    report(ctx, &mut out, "dset", body)?;
    Ok(out)
}

// ---------------------------------------------------------------- bloch-check

#[derive(Serialize)]
struct BlochBody {
    nodes: usize,
    max_floquet_defect: f64,
    parseval_error: f64,
    eigenrelation_error: f64,
    inversion_error: f64,
    /// Largest |E_n(k) - Hill-matrix eigenvalue| over sampled nodes.
    oracle_energy_error: Option<f64>,
}

pub fn bloch_check(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (km, blt) = ctx.tables()?;
    let pot = &km.table().potential;
    let bump = |y: f64| {
        let v = (-2.0 * (y - 0.3) * (y - 0.3)).exp();
        if v < 1e-14 {
            0.0
        } else {
            v
        }
    };
    let f = Sampled::from_fn(-3.5, 4.1, 1521, bump);
    let parseval = parseval_error(&blt, &f);
    let eigen = eigenrelation_check(&blt, pot, &f);
    let xs: Vec<f64> = (0..61).map(|i| -1.5 + 0.06 * i as f64).collect();
    let back = inverse_transform(&blt, &forward_transform(&blt, &f), &xs);
    let (mut num_sq, mut den_sq) = (0.0, 0.0);
    for (x, v) in xs.iter().zip(&back) {
        num_sq += (v - bump(*x)).norm_sqr();
        den_sq += bump(*x).powi(2);
    }
    let inversion = (num_sq / den_sq).sqrt();
    let defect = blt.nodes().map(|(_, _, r)| r.floquet_defect).fold(0.0, f64::max);
    let oracle_err = ctx.oracle.then(|| {
        blt.nodes()
            .step_by(7)
            .map(|(k, _, r)| (r.derivs.e - oracle::bloch_energies(pot, k, ctx.cfg.oracle_half_dim)[r.band]).abs())
            .fold(0.0, f64::max)
    });
    println!(
        "bloch-check: Parseval {parseval:.2e}, eigenrelation {eigen:.2e}, inversion {inversion:.2e}, Floquet defect {defect:.2e}"
    );
    out.require(parseval < 1e-6, format!("Parseval error {parseval:.3e}"));
    out.require(eigen < 1e-5, format!("eigenrelation error {eigen:.3e}"));
    out.require(inversion < 1e-5, format!("inversion error {inversion:.3e}"));
    if let Some(e) = oracle_err {
        println!("bloch-check: oracle energy error {e:.2e}");
        out.require(e < 1e-7, format!("Bloch energy oracle error {e:.3e}"));
    }
    let body = BlochBody {
        nodes: blt.nodes().count(),
        max_floquet_defect: defect,
        parseval_error: parseval,
        eigenrelation_error: eigen,
        inversion_error: inversion,
        oracle_energy_error: oracle_err,
    };
    report(ctx, &mut out, "bloch-check", body)?;
    Ok(out)
}

// ---------------------------------------------------------------- phase-check

#[derive(Serialize)]
struct BandPhase {
    band: usize,
    edot_lo_ratio: Option<f64>,
    edot_hi_ratio: Option<f64>,
    /// Edge ratios at 1e-10 over those at 1e-8; sqrt vanishing gives 0.1.
    sqrt_scaling: Option<[f64; 2]>,
    e2_sign_changes: Option<usize>,
    kpp_zero: Option<f64>,
    error: Option<String>,
    oracle_energy_error: Option<f64>,
}

#[derive(Serialize)]
struct PhaseBody {
    mu: f64,
    nondegeneracy_floor: f64,
    bands: Vec<BandPhase>,
}

pub fn phase_check(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let km = ctx.kmap()?;
    let pot = &km.table().potential;
    let mut rows = Vec::new();
    for n in 0..km.n_bands() {
        let mut row = BandPhase {
            band: n,
            edot_lo_ratio: None,
            edot_hi_ratio: None,
            sqrt_scaling: None,
            e2_sign_changes: None,
            kpp_zero: None,
            error: None,
            oracle_energy_error: None,
        };
        let shapes = km.band_shape(n, 1e-8).and_then(|a| Ok((a, km.band_shape(n, 1e-10)?)));
        match shapes.and_then(|s| Ok((s, km.kpp_sign_change(n)?))) {
            Ok(((a, b), kpp)) => {
                row.edot_lo_ratio = Some(b.edot_lo_ratio);
                row.edot_hi_ratio = Some(b.edot_hi_ratio);
                row.sqrt_scaling = Some([b.edot_lo_ratio / a.edot_lo_ratio, b.edot_hi_ratio / a.edot_hi_ratio]);
                row.e2_sign_changes = Some(b.e2_sign_changes);
                row.kpp_zero = kpp;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        if ctx.oracle {
            let (k_lo, k_hi) = km.table().k_interval(n);
            let err = (1..8)
                .map(|i| k_lo + (k_hi - k_lo) * i as f64 / 8.0)
                .filter_map(|k| km.energy(k).ok().map(|e| (k, e)))
                .map(|(k, e)| (e - oracle::bloch_energies(pot, k, ctx.cfg.oracle_half_dim)[n]).abs())
                .fold(0.0, f64::max);
            out.require(err < 1e-7, format!("band {n}: energy oracle error {err:.3e}"));
            row.oracle_energy_error = Some(err);
        }
        rows.push(row);
    }
    let floor = nondegeneracy_floor(&PhaseModel::new(&km, ctx.cfg.mu)?, ctx.cfg.nodes_per_band);
    for r in &rows {
        match &r.error {
            Some(e) => println!("phase-check: band {:>3}: {e}", r.band),
            None => println!(
                "phase-check: band {:>3}: edge |E'| ratios {:.1e} {:.1e}, E'' sign changes {}, k'' zero {:?}",
                r.band,
                r.edot_lo_ratio.unwrap_or(f64::NAN),
                r.edot_hi_ratio.unwrap_or(f64::NAN),
                r.e2_sign_changes.unwrap_or(0),
                r.kpp_zero
            ),
        }
    }
    println!("phase-check: nondegeneracy floor at mu = {}: {floor:.3e}", ctx.cfg.mu);
    let body = PhaseBody {
        mu: ctx.cfg.mu,
        nondegeneracy_floor: floor,
        bands: rows,
    };
    report(ctx, &mut out, "phase-check", body)?;
    Ok(out)
}

// ---------------------------------------------------------------- kernel

#[derive(Serialize)]
struct KernelOracle {
    method: &'static str,
    value: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct KernelBody {
    request: KernelRequest,
    result: KernelResult,
    oracle: Option<KernelOracle>,
}

pub fn kernel(ctx: &Context, t: f64, x: f64, y: f64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (km, blt) = ctx.tables()?;
    let dset = ctx.cfg.dset_check.then(|| ctx.dset(&km, ctx.cfg.dset_resolution));
    let kcfg = ctx.kernel_cfg();
    let req = KernelRequest::new(t, x, y, ctx.cfg.n_max, ctx.cfg.mu);
    let res = eval_kernel(&req, &km, &blt, dset.as_ref(), &kcfg)?;
    println!(
        "kernel: K({t}, {x}, {y}) = {:.12e} (imag {:.1e}, quad err {:.1e}, tail bound {:.1e}, degenerate {})",
        res.value.re, res.value.im, res.quad_err, res.tail_bound, res.degenerate_mass
    );
    let oracle = if ctx.oracle {
        let o = if ctx.cfg.potential == Preset::Free {
            let v = oracle::free_kernel(t, (x - y).abs(), ctx.cfg.mu, 2e4, 400_000);
            KernelOracle {
                method: "free real-axis quadrature",
                value: v,
                rel_err: (res.value.re - v).abs() / v.abs().max(f64::MIN_POSITIVE),
            }
        } else {
            // whole-band integrals in the other of the two oscillatory forms
            let split = if t > 1.0 { SplitMode::Sine } else { SplitMode::Exponential };
            let whole = KernelRequest {
                partition: false,
                split,
                ..req
            };
            let v = eval_kernel(&whole, &km, &blt, None, &kcfg)?.value.re;
            KernelOracle {
                method: "unpartitioned band integrals, alternate split",
                value: v,
                rel_err: (res.value.re - v).abs() / v.abs().max(f64::MIN_POSITIVE),
            }
        };
        println!("kernel: oracle ({}) {:.12e}, rel err {:.2e}", o.method, o.value, o.rel_err);
        out.require(t == 0.0 || o.rel_err < 1e-4, format!("kernel oracle rel err {:.3e}", o.rel_err));
        Some(o)
    } else {
        None
    };
    report(
        ctx,
        &mut out,
        "kernel",
        KernelBody {
            request: req,
            result: res,
            oracle,
        },
    )?;
    Ok(out)
}

impl Context {
    fn kernel_cfg(&self) -> KernelConfig {
        self.cfg.kernel_config()
    }
}

// ---------------------------------------------------------------- decay

#[derive(Serialize)]
struct DecayBody {
    rows: Vec<DecayRow>,
    fit: DecayFit,
    degenerate_mass: bool,
    /// Relative difference to the free oracle at each sup location.
    oracle_rel_err: Option<Vec<f64>>,
}

pub fn decay(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (km, blt) = ctx.tables()?;
    let mu = ctx.cfg.mu;
    let degenerate = ctx.cfg.dset_check
        && ctx
            .dset(&km, ctx.cfg.dset_resolution)
            .near(mu, ctx.kernel_cfg().degenerate_margin)
            .is_some();
    let grid = ctx.cfg.r_grid();
    let rows = decay_scan(&km, &blt, mu, ctx.cfg.n_max, &ctx.cfg.t_list, grid.as_deref(), &ctx.cfg.decay_config())?;
    let fit = DecayFit::new(rows.iter().map(|r| (r.t, r.sup)).collect());
    let mut csv = Csv::new(&["t", "sup_abs_K", "sup_abs_K_times_t_cbrt"]);
    for r in &rows {
        csv.row(&[num(r.t), num(r.sup), num(r.normalized)]);
    }
    out.files.push(csv.write(&ctx.out, "decay.csv")?);
    for r in &rows {
        println!("decay: t = {:>8.2}: sup|K| = {:.6e} at R = {:.2}, sup|K| t^(1/3) = {:.4}", r.t, r.sup, r.r_at, r.normalized);
    }
    match fit.slope {
        Some(s) => println!("decay: slope {s:.4}, normalized max/min {:.3}", fit.normalized_ratio),
        None => println!("decay: no slope (needs 4 points over a decade), normalized max/min {:.3}", fit.normalized_ratio),
    }
    if degenerate {
        println!("decay: DegenerateMass: mu = {mu} is within the margin of a degenerate candidate; the slope is not meaningful");
    }
    let oracle = (ctx.oracle && ctx.cfg.potential == Preset::Free).then(|| {
        rows.iter()
            .map(|r| {
                let v = oracle::free_kernel(r.t, r.r_at, mu, 2e4, 400_000);
                (r.sup - v.abs()).abs() / v.abs()
            })
            .collect::<Vec<f64>>()
    });
    if let Some(errs) = &oracle {
        let worst = errs.iter().copied().fold(0.0, f64::max);
        println!("decay: free oracle max rel err {worst:.2e}");
        out.require(worst < 1e-4, format!("decay oracle rel err {worst:.3e}"));
    }
    let body = DecayBody {
        rows,
        fit,
        degenerate_mass: degenerate,
        oracle_rel_err: oracle,
    };
    report(ctx, &mut out, "decay", body)?;
    Ok(out)
}

// ---------------------------------------------------------------- vdc-suite

#[derive(Serialize)]
struct VdcBody {
    instances: usize,
    seed: u64,
    violations: usize,
    max_value_over_bound: f64,
    /// Largest |quadrature - brute force|, with --oracle.
    oracle_max_abs_err: Option<f64>,
}

pub fn vdc_suite(ctx: &Context) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut header = vec!["i", "m", "mu", "c_m", "abs_value", "bound", "ratio"];
    if ctx.oracle {
        header.push("brute_force_abs_err");
    }
    let mut csv = Csv::new(&header);
    let (mut violations, mut worst, mut oracle_worst) = (0, 0.0_f64, 0.0_f64);
    for i in 0..ctx.cfg.vdc_instances {
        let m = 1 + (i % 3) as u32;
        let inst = oracle::VdcInstance::random(&mut rng, m);
        let (end, var) = inst.psi_data();
        let bound = vdc_bound(inst.m, inst.c_m, inst.mu, end, var, true)?.bound;
        let value = oscillatory_quad(
            inst.a,
            inst.b,
            |k| inst.phase(k),
            |k| C64::new(inst.psi(k), 0.0),
            &[],
            &OscConfig::default(),
        )?
        .value;
        let ratio = value.norm() / bound;
        if ratio > 1.0 {
            violations += 1;
        }
        worst = worst.max(ratio);
        let mut cells = vec![i.to_string(), m.to_string(), num(inst.mu), num(inst.c_m), num(value.norm()), num(bound), num(ratio)];
        if ctx.oracle {
            let e = (value - inst.brute_force()).norm();
            oracle_worst = oracle_worst.max(e);
            cells.push(num(e));
        }
        csv.row(&cells);
    }
    out.files.push(csv.write(&ctx.out, "vdc-suite.csv")?);
    println!(
        "vdc-suite: {} instances, {violations} violations, largest value/bound {worst:.3}",
        ctx.cfg.vdc_instances
    );
    out.require(violations == 0, format!("{violations} van der Corput violations"));
    if ctx.oracle {
        println!("vdc-suite: brute-force max abs err {oracle_worst:.2e}");
        out.require(oracle_worst < 1e-8, format!("brute-force disagreement {oracle_worst:.3e}"));
    }
    let body = VdcBody {
        instances: ctx.cfg.vdc_instances,
        seed: ctx.cfg.seed,
        violations,
        max_value_over_bound: worst,
        oracle_max_abs_err: ctx.oracle.then_some(oracle_worst),
    };
    report(ctx, &mut out, "vdc-suite", body)?;
    Ok(out)
}

pub fn default_out() -> &'static Path {
    Path::new("out")
}
