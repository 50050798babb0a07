use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::objectives::{EvalSettings, SystemConfig};
use crate::optimize::GaConfig;
use crate::{Error, Result};

/// Names of the fidelity levels, best first. Their index is the latent level.
pub const FIDELITY_NAMES: [&str; 3] = ["high", "mid", "low"];

/// Sampling range of every design variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ranges {
    pub r: (f64, f64),
    pub sigma: (f64, f64),
    pub theta: (f64, f64),
    pub phi: (f64, f64),
    pub v: (f64, f64),
}

impl Default for Ranges {
    fn default() -> Self {
        Ranges {
            r: (3.0, 10.0),
            sigma: (0.06, 3.0),
            theta: (0.15, FRAC_PI_2),
            phi: (0.15, FRAC_PI_2),
            v: (0.15, 0.7),
        }
    }
}

impl Ranges {
    pub fn as_array(&self) -> [(f64, f64); 5] {
        [self.r, self.sigma, self.theta, self.phi, self.v]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in ["r", "sigma", "theta", "phi", "v"].iter().zip(self.as_array()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range of {name} is [{lo}, {hi}]")));
            }
        }
        if self.v.0 <= 0.0 || self.v.1 >= 1.0 {
            return Err(Error::Config("volume fraction range must lie inside (0, 1)".into()));
        }
        Ok(())
    }
}

/// Resolutions and design counts per fidelity, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    pub resolutions: [usize; 3],
    pub counts: [usize; 3],
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            resolutions: [125, 100, 75],
            counts: [69, 131, 206],
        }
    }
}

/// The single-fidelity floating-cluster dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F3Config {
    pub points: usize,
    pub train: usize,
    pub resolution: usize,
    pub realizations: usize,
}

impl Default for F3Config {
    fn default() -> Self {
        F3Config {
            points: 500,
            train: 350,
            resolution: 150,
            realizations: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub omega_bounds: (f64, f64),
    pub log_nugget_bounds: (f64, f64),
    pub folds: usize,
    /// Rows per fidelity (high, mid, low) used for the permeability emulator;
    /// empty means all rows.
    pub eta1_rows: Vec<usize>,
    /// Data fractions for the convergence study; empty skips it.
    pub convergence_fractions: Vec<f64>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            n_starts: 8,
            max_iters: 200,
            omega_bounds: (-3.0, 3.0),
            log_nugget_bounds: (-8.0, -2.0),
            folds: 5,
            eta1_rows: Vec::new(),
            convergence_fractions: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Designs picked from the combined front for simulation.
    pub designs: usize,
    pub export_vtk: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            designs: 7,
            export_vtk: true,
        }
    }
}

/// Everything a campaign needs. Every key has a default; see `config --dump`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Digital shift of the Sobol design; 0 keeps the plain sequence.
    pub doe_scramble: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub ranges: Ranges,
    pub fidelity: FidelityConfig,
    pub f3: F3Config,
    pub system: SystemConfig,
    pub eval: EvalSettings,
    pub surrogate: SurrogateConfig,
    /// Bounds inside are replaced by the training ranges.
    pub ga: GaConfig,
    pub selection: SelectionConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            doe_scramble: 0,
            out_dir: PathBuf::from("campaign"),
            threads: 0,
            ranges: Ranges::default(),
            fidelity: FidelityConfig::default(),
            f3: F3Config::default(),
            system: SystemConfig::default(),
            eval: EvalSettings::default(),
            surrogate: SurrogateConfig::default(),
            ga: GaConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        let r = self.fidelity.resolutions;
        if !(r[0] > r[1] && r[1] > r[2]) {
            return Err(Error::Config(format!("resolutions {r:?} must strictly decrease from high to low")));
        }
        if r[2] < crate::grid::MIN_SIM_DIM {
            return Err(Error::Config(format!("resolution {} is below {}", r[2], crate::grid::MIN_SIM_DIM)));
        }
        let c = self.fidelity.counts;
        if c.iter().any(|&k| k == 0) {
            return Err(Error::Config("every fidelity needs at least one design".into()));
        }
        if !(c[0] <= c[1] && c[1] <= c[2]) {
            return Err(Error::Config(format!(
                "counts {c:?}: nested designs need high <= mid <= low"
            )));
        }
        if self.f3.train > self.f3.points || self.f3.realizations == 0 {
            return Err(Error::Config("f3 split or realization count is inconsistent".into()));
        }
        if !self.surrogate.eta1_rows.is_empty() && self.surrogate.eta1_rows.len() != 3 {
            return Err(Error::Config("eta1_rows needs one entry per fidelity".into()));
        }
        if self
            .surrogate
            .convergence_fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(Error::Config("convergence fractions must lie in (0, 1]".into()));
        }
        if self.selection.designs == 0 {
            return Err(Error::Config("select at least one design".into()));
        }
        self.system.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.eval.lbm.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// sha256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        let h = Sha256::digest(self.to_toml().as_bytes());
        h.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Desk-scale campaign: 40/32/24 voxel cubes with 8/15/20 designs and a
    /// short GA; meant to exercise every stage in minutes.
    pub fn smoke(out_dir: impl Into<PathBuf>) -> Self {
        let mut cfg = CampaignConfig {
            out_dir: out_dir.into(),
            fidelity: FidelityConfig {
                resolutions: [40, 32, 24],
                counts: [8, 15, 20],
            },
            f3: F3Config {
                points: 20,
                train: 14,
                resolution: 24,
                realizations: 5,
            },
            ..Default::default()
        };
        cfg.eval.max_realizations = 10;
        cfg.eval.f3_realizations = 5;
        cfg.eval.lbm.window = 1000;
        cfg.eval.lbm.max_iters = 40_000;
        cfg.surrogate.n_starts = 4;
        cfg.ga.generations = 16;
        cfg.selection.designs = 3;
        cfg
    }

    /// Total Sobol points consumed (multi-fidelity designs then the f3 set).
    pub fn doe_points(&self) -> usize {
        self.fidelity.counts[2] + self.f3.points
    }
}
