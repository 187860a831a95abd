//! Run configuration, read from TOML. Energies are in units of `w`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::model::{ModelParams, Observable};
use crate::sampler::ChainSettings;

/// `w t` from 0 to 3 in steps of 0.25 at `dt w = 0.05`.
pub fn default_n_t() -> Vec<usize> {
    (0..=12).map(|k| 5 * k).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub lx: usize,
    pub ly: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub gamma_over_w: f64,
    #[serde(default = "PhysicsSection::default_dt")]
    pub dt_times_w: f64,
    #[serde(default = "default_n_t")]
    pub n_t: Vec<usize>,
}

impl PhysicsSection {
    fn default_dt() -> f64 {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub kind: Observable,
    #[serde(default = "EstimatorSection::default_n_ratio")]
    pub n_ratio: usize,
}

impl EstimatorSection {
    fn default_n_ratio() -> usize {
        32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_warmup: usize,
    pub n_sweeps: usize,
    pub meas_interval: usize,
    pub n_stab: usize,
    pub drift_tol: f64,
    pub master_seed: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let c = ChainSettings::default();
        Self {
            n_warmup: c.n_warmup,
            n_sweeps: c.n_sweeps,
            meas_interval: c.meas_interval,
            n_stab: c.n_stab,
            drift_tol: c.drift_tol,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutionSection {
    /// 0 uses every available core.
    pub max_parallel_chains: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub physics: PhysicsSection,
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub execution: ExecutionSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn bad(field: &str, msg: &str) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lattice.lx < 2 {
            return Err(bad("lattice.lx", "must be >= 2"));
        }
        if self.lattice.ly < 2 {
            return Err(bad("lattice.ly", "must be >= 2"));
        }
        let p = &self.physics;
        if !p.gamma_over_w.is_finite() || p.gamma_over_w < 0.0 {
            return Err(bad("physics.gamma_over_w", "must be finite and >= 0"));
        }
        if !p.dt_times_w.is_finite() || p.dt_times_w <= 0.0 {
            return Err(bad("physics.dt_times_w", "must be finite and > 0"));
        }
        if p.n_t.is_empty() {
            return Err(bad("physics.n_t", "needs at least one time point"));
        }
        let mut sorted = p.n_t.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("physics.n_t", "contains duplicates"));
        }
        if self.estimator.n_ratio == 0 {
            return Err(bad("estimator.n_ratio", "must be >= 1"));
        }
        let s = &self.sampler;
        if s.n_sweeps < 2 * s.meas_interval.max(1) {
            return Err(bad(
                "sampler.n_sweeps",
                "must give at least two measurements",
            ));
        }
        if s.meas_interval == 0 {
            return Err(bad("sampler.meas_interval", "must be >= 1"));
        }
        if s.n_stab == 0 {
            return Err(bad("sampler.n_stab", "must be >= 1"));
        }
        if s.drift_tol.is_nan() || s.drift_tol <= 0.0 {
            return Err(bad("sampler.drift_tol", "must be > 0"));
        }
        Ok(())
    }

    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec::new(self.lattice.lx, self.lattice.ly).expect("validated lattice")
    }

    pub fn volume(&self) -> usize {
        self.lattice.lx * self.lattice.ly
    }

    pub fn kind(&self) -> Observable {
        self.estimator.kind
    }

    /// Parameters at `w = 1` for one time point, `n_t >= 1`.
    pub fn params(&self, n_t: usize) -> Result<ModelParams> {
        ModelParams::new(
            1.0,
            self.physics.gamma_over_w,
            self.physics.dt_times_w,
            n_t,
            self.estimator.n_ratio,
        )
    }

    pub fn chain_settings(&self, seed: u64) -> ChainSettings {
        let s = &self.sampler;
        ChainSettings {
            n_warmup: s.n_warmup,
            n_sweeps: s.n_sweeps,
            meas_interval: s.meas_interval,
            seed,
            n_stab: s.n_stab,
            drift_tol: s.drift_tol,
        }
    }

    /// Time points sorted by `n_t`.
    pub fn time_points(&self) -> Vec<usize> {
        let mut v = self.physics.n_t.clone();
        v.sort_unstable();
        v
    }
}
