//! TOML run configuration.
//!
//! ```toml
//! representation = "cl"
//! beta = 1.0
//! seed = 7
//!
//! [potential]
//! name = "soft-bumped"
//! a = 1.0
//! m1 = 0.4
//! params = { omega = 1.0, c = 0.2, k = 2.0 }
//!
//! [observable]
//! name = "tanh-squared"
//! m2 = 1.0
//!
//! [grid]
//! n = [2, 4, 8, 16]
//!
//! [sampling]
//! n_samples = 100000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::StdSamplerConfig;
use crate::harness::{SweepMode, SweepPlan};
use crate::oracle::OracleSettings;
use crate::potentials::{ObservableKind, ObservableSpec, PotentialKind, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Std,
    Cl,
    ClDisc,
    Exact,
    Sweep,
    Covariance,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub name: String,
    #[serde(default = "one_dim")]
    pub dim: usize,
    pub a: f64,
    pub m1: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    pub name: String,
    pub m2: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn one_dim() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub d: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub n_quad: Option<usize>,
    #[serde(default = "default_ess_floor")]
    pub ess_floor: f64,
    #[serde(default)]
    pub strict: bool,
}

fn default_samples() -> usize {
    100_000
}

fn default_ess_floor() -> f64 {
    100.0
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { n_samples: default_samples(), n_quad: None, ess_floor: default_ess_floor(), strict: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StdSection {
    pub step_h: f64,
    pub burn_in_frac: f64,
    pub metropolis: bool,
    pub n_chains: usize,
    pub n_batches: usize,
    pub divergence_threshold: f64,
}

impl Default for StdSection {
    fn default() -> Self {
        let d = StdSamplerConfig::default();
        Self {
            step_h: d.step_h,
            burn_in_frac: d.burn_in_frac,
            metropolis: d.metropolis,
            n_chains: d.n_chains,
            n_batches: d.n_batches,
            divergence_threshold: d.divergence_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub n_grid: usize,
    pub q_max: Option<f64>,
    pub tol: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        let d = OracleSettings::default();
        Self { n_grid: d.n_grid, q_max: d.q_max, tol: d.tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub mode: SweepMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSection {
    pub taus: Vec<f64>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_k_max() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSection {
    pub n_modes: usize,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSection {
    /// Multiplies every bound constant; values below 1 exercise the failure
    /// path.
    pub bound_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub representation: RunKind,
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub potential: PotentialSection,
    pub observable: ObservableSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub std: StdSection,
    #[serde(default)]
    pub oracle: OracleSection,
    pub sweep: Option<SweepSection>,
    pub covariance: Option<CovarianceSection>,
    pub holder: Option<HolderSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub debug: Option<DebugSection>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(cfg_err(format!("{name} must be positive, got {v}")))
            }
        };
        positive("beta", self.beta)?;
        positive("potential.a", self.potential.a)?;
        positive("potential.m1", self.potential.m1)?;
        positive("observable.m2", self.observable.m2)?;
        if self.potential.dim == 0 {
            return Err(cfg_err("potential.dim must be positive"));
        }
        if self.threads == Some(0) {
            return Err(cfg_err("threads must be positive"));
        }
        if let Some(d) = &self.debug {
            positive("debug.bound_scale", d.bound_scale)?;
        }
        // Resolve names and parameters now so errors surface as config errors.
        self.potential_spec()?;
        self.observable_spec()?;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(cfg_err(what.to_string())) };
        match self.representation {
            RunKind::Std => need(self.grid.d.len() == 1, "representation std needs exactly one value in grid.d")?,
            RunKind::Cl => need(self.grid.n.len() == 1, "representation cl needs exactly one value in grid.n")?,
            RunKind::ClDisc => need(
                self.grid.n.len() == 1 && self.grid.d.len() == 1,
                "representation cl-disc needs one value each in grid.n and grid.d",
            )?,
            RunKind::Sweep => {
                need(self.sweep.is_some(), "representation sweep needs a [sweep] section")?;
                self.sweep_plan()?.validate()?;
            }
            RunKind::Covariance => {
                need(self.covariance.is_some(), "representation covariance needs a [covariance] section")?
            }
            RunKind::Holder => need(self.holder.is_some(), "representation holder needs a [holder] section")?,
            RunKind::Exact => {}
        }
        Ok(())
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let kind = PotentialKind::from_params(&self.potential.name, &self.potential.params)
            .map_err(|e| cfg_err(format!("potential: {e}")))?;
        PotentialSpec::new(kind, self.potential.dim, self.potential.a, self.potential.m1)
            .map_err(|e| cfg_err(format!("potential: {e}")))
    }

    pub fn observable_spec(&self) -> Result<ObservableSpec> {
        let kind = ObservableKind::from_params(&self.observable.name, &self.observable.params)
            .map_err(|e| cfg_err(format!("observable: {e}")))?;
        ObservableSpec::new(kind, self.potential.dim, self.observable.m2)
            .map_err(|e| cfg_err(format!("observable: {e}")))
    }

    pub fn oracle_settings(&self) -> OracleSettings {
        OracleSettings { n_grid: self.oracle.n_grid, q_max: self.oracle.q_max, tol: self.oracle.tol }
    }

    pub fn std_sampler(&self) -> StdSamplerConfig {
        let s = &self.std;
        let n_kept = self.sampling.n_samples.div_ceil(s.n_chains.max(1)) as f64;
        StdSamplerConfig {
            n_steps: (n_kept / (1.0 - s.burn_in_frac)).ceil() as usize,
            step_h: s.step_h,
            burn_in_frac: s.burn_in_frac,
            metropolis: s.metropolis,
            n_chains: s.n_chains,
            n_batches: s.n_batches,
            seed: self.seed,
            divergence_threshold: s.divergence_threshold,
        }
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let mode = self.sweep.as_ref().ok_or_else(|| cfg_err("missing [sweep] section"))?.mode;
        let mut plan = SweepPlan::new(mode, self.potential_spec()?, self.observable_spec()?, self.beta);
        plan.n_values = self.grid.n.clone();
        plan.d_values = self.grid.d.clone();
        plan.n_samples = self.sampling.n_samples;
        plan.seed = self.seed;
        plan.oracle = self.oracle_settings();
        plan.n_quad = self.sampling.n_quad;
        plan.std_sampler = self.std_sampler();
        plan.bound_scale = self.debug.as_ref().map_or(1.0, |d| d.bound_scale);
        Ok(plan)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form, taken
    /// after command-line overrides.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }
}
