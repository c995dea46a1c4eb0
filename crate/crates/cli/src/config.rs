//! TOML run configuration.

use std::path::{Path, PathBuf};

use flatlayer::forward::{BornOptions, DEFAULT_BORN_TOL, DEFAULT_MAX_ITER};
use flatlayer::grid::GridConfig;
use flatlayer::inverse::DEFAULT_EPS_DIV;
use flatlayer::physics::{Phantom, SourceSet};
use flatlayer::regularize::{Method, RegularizerConfig, Selection};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub frequencies: Vec<f64>,
    pub grid: GridConfig,
    #[serde(default = "SourceSet::line_array")]
    pub sources: SourceSet,
    pub phantom: Phantom,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub regularizer: RegularizerSettings,
    #[serde(default)]
    pub forward: ForwardSettings,
    #[serde(default)]
    pub inversion: InversionSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub bench: BenchSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { delta: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Fixed threshold for exact data, discrepancy principle for noisy data.
    Auto,
    Fixed,
    Discrepancy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSettings {
    pub method: Method,
    pub tsvd_threshold: f64,
    pub tikhonov_alpha: f64,
    pub policy: Policy,
    pub discrepancy_safety: f64,
}

impl Default for RegularizerSettings {
    fn default() -> Self {
        let d = RegularizerConfig::default();
        Self {
            method: d.method,
            tsvd_threshold: d.tsvd_threshold,
            tikhonov_alpha: d.tikhonov_alpha,
            policy: Policy::Auto,
            discrepancy_safety: d.discrepancy_safety,
        }
    }
}

impl RegularizerSettings {
    /// Solver settings for data with relative noise level `delta`.
    pub fn resolve(&self, delta: f64) -> CliResult<RegularizerConfig> {
        let selection = match self.policy {
            Policy::Fixed => Selection::Fixed,
            Policy::Auto if delta == 0.0 => Selection::Fixed,
            Policy::Auto => Selection::Discrepancy { delta },
            Policy::Discrepancy if delta > 0.0 => Selection::Discrepancy { delta },
            Policy::Discrepancy => {
                return Err(CliError::Config(
                    "discrepancy policy needs noisy data (delta > 0)".into(),
                ))
            }
        };
        let reg = RegularizerConfig {
            method: self.method,
            tsvd_threshold: self.tsvd_threshold,
            tikhonov_alpha: self.tikhonov_alpha,
            selection,
            discrepancy_safety: self.discrepancy_safety,
        };
        reg.validate()?;
        Ok(reg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_BORN_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl ForwardSettings {
    pub fn options(&self) -> BornOptions {
        BornOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSettings {
    pub eps_div: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            eps_div: DEFAULT_EPS_DIV,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub kernel_cache: bool,
    pub slice_csv: bool,
    /// Also dump singular values per mode orbit during inversion.
    #[serde(default)]
    pub spectrum_csv: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            kernel_cache: true,
            slice_csv: true,
            spectrum_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    pub n_list: Vec<usize>,
    pub repeats: usize,
    /// Worker threads for the timed runs.
    pub threads: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            n_list: vec![32, 64, 128],
            repeats: 3,
            threads: 1,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub frequencies: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub method: Option<Method>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.noise.seed = seed;
        }
        if let Some(f) = &o.frequencies {
            self.frequencies = f.clone();
        }
        if let Some(d) = o.delta {
            self.noise.delta = d;
        }
        if let Some(m) = o.method {
            self.regularizer.method = m;
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.frequencies.is_empty() {
            return Err(CliError::Config("frequency list is empty".into()));
        }
        if let Some(w) = self.frequencies.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(CliError::Config(format!("frequencies must be positive, got {w}")));
        }
        if !(self.noise.delta >= 0.0) || !self.noise.delta.is_finite() {
            return Err(CliError::Config(format!("noise level must be >= 0, got {}", self.noise.delta)));
        }
        if !(self.inversion.eps_div > 0.0 && self.inversion.eps_div < 1.0) {
            return Err(CliError::Config(format!("eps_div must lie in (0, 1), got {}", self.inversion.eps_div)));
        }
        if !(self.forward.tol > 0.0) || self.forward.max_iter == 0 {
            return Err(CliError::Config("forward tolerance and iteration cap must be positive".into()));
        }
        if self.sources.is_empty() {
            return Err(CliError::Config("no sources".into()));
        }
        flatlayer::make_grids(&self.grid)?;
        self.regularizer.resolve(self.noise.delta)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, with the output directory left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let v = serde_json::to_value(&c).expect("config is always serializable");
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("json value")))
    }
}
