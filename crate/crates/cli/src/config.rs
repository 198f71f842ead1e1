//! Run configuration: a flat TOML file with a versioned schema. Every field
//! has a default, so an empty file (or no file) is a valid cosine run.

use anyhow::{bail, Context, Result};
use hill_kg::{
    BandConfig, BlochConfig, DecayConfig, DsetConfig, KernelConfig, KmapConfig, OdeConfig, PeriodicPotential,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Free,
    Cosine,
    Lame,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub potential: Preset,
    /// Cosine strength: P = 2 q cos(2 pi x).
    pub q: f64,
    /// Lame modulus.
    pub kappa: f64,
    /// Period, mean and coefficients of an explicit Fourier potential.
    pub period: f64,
    pub mean: f64,
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    pub mu: f64,
    pub n_max: usize,
    pub nodes_per_band: usize,
    /// Smallest x grid for the periodic Bloch factors.
    pub nx: usize,
    pub t_list: Vec<f64>,
    /// Explicit R grid; when r_max is absent the grid follows the light cone.
    pub r_min: f64,
    pub r_max: Option<f64>,
    pub r_step: f64,
    pub x_offsets: usize,
    pub ode_tol: f64,
    pub quad_budget: usize,
    pub quad_rel_tol: f64,
    /// Edge exclusion relative to sqrt(|gap|).
    pub delta_edge: f64,
    pub cutoff_c: f64,
    pub dset_k_max: Option<f64>,
    pub dset_nodes: usize,
    pub dset_resolution: usize,
    /// Scan for degenerate masses before kernel and decay runs.
    pub dset_check: bool,
    pub vdc_instances: usize,
    pub oracle_half_dim: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            potential: Preset::Cosine,
            q: 1.0,
            kappa: 0.9,
            period: 1.0,
            mean: 0.0,
            cos_coeffs: vec![],
            sin_coeffs: vec![],
            mu: 1.0,
            n_max: 16,
            nodes_per_band: KmapConfig::default().nodes_per_band,
            nx: BlochConfig::default().nx_min,
            t_list: vec![20.0, 40.0, 80.0, 160.0, 320.0],
            r_min: 0.0,
            r_max: None,
            r_step: DecayConfig::default().cone_spacing,
            x_offsets: DecayConfig::default().offsets,
            ode_tol: OdeConfig::default().tolerance,
            quad_budget: KernelConfig::default().osc.max_panels,
            quad_rel_tol: KernelConfig::default().osc.rel_tol,
            delta_edge: KmapConfig::default().edge_rel,
            cutoff_c: KernelConfig::default().cutoff_c,
            dset_k_max: None,
            dset_nodes: DsetConfig::default().nodes_per_band,
            dset_resolution: 1,
            dset_check: true,
            vdc_instances: 200,
            oracle_half_dim: 32,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("config schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        let positive = [
            ("mu", self.mu),
            ("period", self.period),
            ("r_step", self.r_step),
            ("ode_tol", self.ode_tol),
            ("quad_rel_tol", self.quad_rel_tol),
            ("delta_edge", self.delta_edge),
            ("cutoff_c", self.cutoff_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive and finite, got {v}");
            }
        }
        let counts = [
            ("n_max", self.n_max),
            ("nodes_per_band", self.nodes_per_band),
            ("nx", self.nx),
            ("x_offsets", self.x_offsets),
            ("quad_budget", self.quad_budget),
            ("dset_nodes", self.dset_nodes),
            ("dset_resolution", self.dset_resolution),
            ("oracle_half_dim", self.oracle_half_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.t_list.iter().any(|t| !(*t > 0.0)) || self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            bail!("t_list must be positive and strictly increasing");
        }
        if let Some(r) = self.r_max {
            if !(r > self.r_min) {
                bail!("r_max must exceed r_min");
            }
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<PeriodicPotential> {
        Ok(match self.potential {
            Preset::Free => PeriodicPotential::free(self.period),
            Preset::Cosine => PeriodicPotential::cosine(self.q),
            Preset::Lame => PeriodicPotential::lame(self.kappa)?,
            Preset::Fourier => {
                PeriodicPotential::new(self.period, self.mean, self.cos_coeffs.clone(), self.sin_coeffs.clone())?
            }
        })
    }

    pub fn band_config(&self) -> BandConfig {
        BandConfig {
            ode: OdeConfig {
                tolerance: self.ode_tol,
                ..OdeConfig::default()
            },
            ..BandConfig::default()
        }
    }

    pub fn kmap_config(&self) -> KmapConfig {
        KmapConfig {
            nodes_per_band: self.nodes_per_band,
            edge_rel: self.delta_edge,
            ..KmapConfig::default()
        }
    }

    pub fn bloch_config(&self) -> BlochConfig {
        BlochConfig {
            nx_min: self.nx,
            ..BlochConfig::default()
        }
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let mut k = KernelConfig {
            cutoff_c: self.cutoff_c,
            ..KernelConfig::default()
        };
        k.osc.max_panels = self.quad_budget;
        k.osc.rel_tol = self.quad_rel_tol;
        k
    }

    pub fn decay_config(&self) -> DecayConfig {
        DecayConfig {
            offsets: self.x_offsets,
            cone_spacing: self.r_step,
            cutoff_c: self.cutoff_c,
            ..DecayConfig::default()
        }
    }

    pub fn dset_config(&self) -> DsetConfig {
        DsetConfig {
            nodes_per_band: self.dset_nodes,
            resolution: self.dset_resolution,
            ..DsetConfig::default()
        }
    }

    /// Explicit R grid, if one was configured.
    pub fn r_grid(&self) -> Option<Vec<f64>> {
        let r_max = self.r_max?;
        let n = ((r_max - self.r_min) / self.r_step).floor() as usize;
        Some((0..=n).map(|i| self.r_min + self.r_step * i as f64).collect())
    }
}

/// Every numeric setting that shaped a run, library defaults included.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub run: RunConfig,
    pub bands: BandConfig,
    pub kmap: KmapConfig,
    pub bloch: BlochConfig,
    pub kernel: KernelConfig,
    pub decay: DecayConfig,
    pub dset: DsetConfig,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            run: cfg.clone(),
            bands: cfg.band_config(),
            kmap: cfg.kmap_config(),
            bloch: cfg.bloch_config(),
            kernel: cfg.kernel_config(),
            decay: cfg.decay_config(),
            dset: cfg.dset_config(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(toml::from_str::<RunConfig>("nmax = 3").is_err());
        let c: RunConfig = toml::from_str("schema_version = 2").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let c: RunConfig = toml::from_str("mu = 0.0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn explicit_grid() {
        let c: RunConfig = toml::from_str("r_min = 1.0\nr_max = 2.0\nr_step = 0.25").unwrap();
        assert_eq!(c.r_grid().unwrap(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }
}
