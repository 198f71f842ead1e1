//! Browser front end: build the spectral tables for a preset potential, then
//! list band edges, sample the extended-zone dispersion curve and evaluate
//! single kernel values. `Session` is plain Rust so it can be tested off
//! the browser; `Demo` is the thin JavaScript-facing wrapper.

use hill_kg::{
    build_bloch_table, build_kmap, eval_kernel, find_n_bands, BandConfig, BlochConfig, BlochTable, Error,
    KernelConfig, KernelRequest, KmapConfig, PeriodicPotential, QuasimomentumMap,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_BANDS: usize = 24;

pub fn preset(name: &str, param: f64) -> Result<PeriodicPotential, Error> {
    match name {
        "free" => Ok(PeriodicPotential::free(1.0)),
        "cosine" => Ok(PeriodicPotential::cosine(param)),
        "lame" => PeriodicPotential::lame(param),
        other => Err(Error::InvalidInput(format!("unknown preset {other:?}"))),
    }
}

#[derive(Serialize)]
struct EdgeRow {
    n: usize,
    a_plus: f64,
    a_minus_next: f64,
    gap_w: f64,
}

#[derive(Serialize)]
struct KernelSummary {
    re: f64,
    im: f64,
    tail: f64,
    tail_bound: f64,
    quad_err: f64,
}

pub struct Session {
    km: QuasimomentumMap,
    /// Built on the first kernel request; it is the slow part.
    bloch: Option<BlochTable>,
}

impl Session {
    pub fn build(name: &str, param: f64, n_bands: usize) -> Result<Self, Error> {
        if n_bands == 0 || n_bands > MAX_BANDS {
            return Err(Error::InvalidInput(format!("band count must lie in 1..={MAX_BANDS}")));
        }
        let table = find_n_bands(&preset(name, param)?, n_bands, &BandConfig::default())?;
        let km = build_kmap(&table, &KmapConfig::default())?;
        Ok(Self { km, bloch: None })
    }

    pub fn n_bands(&self) -> usize {
        self.km.n_bands()
    }

    /// Normalized band edges and gap widths as a JSON array.
    pub fn edges_json(&self) -> String {
        let t = self.km.table();
        let rows: Vec<EdgeRow> = t
            .bands
            .iter()
            .enumerate()
            .map(|(n, b)| EdgeRow {
                n,
                a_plus: b.a_plus,
                a_minus_next: b.a_minus_next,
                gap_w: t.gap_w(b.ell + 1),
            })
            .collect();
        serde_json::to_string(&rows).expect("plain numbers serialize")
    }

    /// Flattened (k, E) pairs along every band, edges included, with a NaN
    /// pair between bands so a plotter can lift the pen.
    pub fn dispersion(&self, per_band: usize) -> Vec<f64> {
        let t = self.km.table();
        let mut out = Vec::new();
        for n in 0..self.n_bands() {
            let (k_lo, k_hi) = t.k_interval(n);
            out.extend([k_lo, t.bands[n].a_plus]);
            for i in 1..per_band {
                let k = k_lo + (k_hi - k_lo) * i as f64 / per_band as f64;
                if let Ok(d) = self.km.energy_derivs_unchecked(k) {
                    out.extend([k, d.e]);
                }
            }
            out.extend([k_hi, t.bands[n].a_minus_next, f64::NAN, f64::NAN]);
        }
        out
    }

    pub fn kernel(&mut self, t: f64, x: f64, y: f64, mu: f64) -> Result<String, Error> {
        if self.bloch.is_none() {
            self.bloch = Some(build_bloch_table(&self.km, self.n_bands(), &BlochConfig::default())?);
        }
        let blt = self.bloch.as_ref().expect("built above");
        let req = KernelRequest::new(t, x, y, self.n_bands(), mu);
        let r = eval_kernel(&req, &self.km, blt, None, &KernelConfig::default())?;
        let s = KernelSummary {
            re: r.value.re,
            im: r.value.im,
            tail: r.tail,
            tail_bound: r.tail_bound,
            quad_err: r.quad_err,
        };
        Ok(serde_json::to_string(&s).expect("plain numbers serialize"))
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(Session);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, param: f64, n_bands: usize) -> Result<Demo, JsError> {
        Session::build(preset, param, n_bands).map(Demo).map_err(js)
    }

    #[wasm_bindgen(js_name = edges)]
    pub fn edges(&self) -> String {
        self.0.edges_json()
    }

    pub fn dispersion(&self, per_band: usize) -> Vec<f64> {
        self.0.dispersion(per_band)
    }

    pub fn kernel(&mut self, t: f64, x: f64, y: f64, mu: f64) -> Result<String, JsError> {
        self.0.kernel(t, x, y, mu).map_err(js)
    }
}
