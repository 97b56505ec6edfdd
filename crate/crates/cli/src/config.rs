use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use dualrail::bell::BellConfig;
use dualrail::fock::ModelSpec;
use dualrail::homodyne::edge_list;
use dualrail::maxlik::{default_quad_edges, ReconConfig};
use dualrail::sampler::{PhaseSchedule, RunConfig};
use dualrail::wigner::Plane;

use crate::ExitError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub run: RunSection,
    pub recon: ReconSection,
    pub bell: BellSection,
    pub wigner: WignerSection,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::symmetric_experiment(),
            run: RunSection::default(),
            recon: ReconSection::default(),
            bell: BellSection::default(),
            wigner: WignerSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n_samples: usize,
    pub phase_schedule: PhaseSchedule,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { n_samples: 200_000, phase_schedule: PhaseSchedule::Sweep, seed: 1 }
    }
}

/// Reconstruction settings; `eta_det` falls back to the model's detector efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub eta_det: Option<f64>,
    pub phase_bins: usize,
    #[serde(with = "edge_list")]
    pub quad_edges: Vec<f64>,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for ReconSection {
    fn default() -> Self {
        let d = ReconConfig::default();
        Self {
            eta_det: None,
            phase_bins: d.phase_bins,
            quad_edges: default_quad_edges(),
            max_iterations: d.max_iterations,
            tol: d.tol,
        }
    }
}

impl ReconSection {
    pub fn resolve(&self, model: Option<&ModelSpec>) -> ReconConfig {
        let base = model.map(ReconConfig::for_model).unwrap_or_default();
        ReconConfig {
            eta_det: self.eta_det.unwrap_or(base.eta_det),
            phase_bins: self.phase_bins,
            quad_edges: self.quad_edges.clone(),
            max_iterations: self.max_iterations,
            tol: self.tol,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BellSection {
    pub threshold: f64,
    pub phase_bins: usize,
    pub sweep: Vec<f64>,
    /// Bootstrap resamples for the amplitude error; 0 disables.
    pub bootstrap: usize,
}

impl Default for BellSection {
    fn default() -> Self {
        let d = BellConfig::default();
        Self {
            threshold: d.threshold,
            phase_bins: d.phase_bins,
            sweep: (0..=12).map(|i| 0.1 * i as f64).collect(),
            bootstrap: 0,
        }
    }
}

impl BellSection {
    pub fn config(&self) -> BellConfig {
        BellConfig { threshold: self.threshold, phase_bins: self.phase_bins }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WignerSection {
    pub planes: Vec<Plane>,
    pub range: (f64, f64),
    pub step: f64,
}

impl Default for WignerSection {
    fn default() -> Self {
        Self { planes: Plane::ALL.to_vec(), range: (-3.0, 3.0), step: 0.05 }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ExitError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(ExitError::Runtime)?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))
            .map_err(ExitError::Validation)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ExitError> {
        path.map(Self::load).unwrap_or_else(|| Ok(Self::default()))
    }

    pub fn validate(&self) -> Result<(), ExitError> {
        self.run_config().validate()?;
        self.recon.resolve(Some(&self.model)).validate()?;
        self.bell.config().validate()?;
        for &t in &self.bell.sweep {
            BellConfig::new(t, self.bell.phase_bins)?;
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.model,
            n_samples: self.run.n_samples,
            phase_schedule: self.run.phase_schedule,
            rng_seed: self.run.seed,
        }
    }
}
