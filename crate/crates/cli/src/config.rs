//! Run configuration: one TOML document per run.

use std::path::{Path, PathBuf};

use dynreg::criteria::LadderBudget;
use dynreg::pde::BoundaryData;
use dynreg::{CoefficientField, FieldSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: FieldSpec,
    #[serde(default)]
    pub budget: LadderBudget,
    #[serde(default)]
    pub moments: MomentsOptions,
    #[serde(default)]
    pub appendix: AppendixOptions,
    /// Present only when the run should also solve the PDE.
    #[serde(default)]
    pub pde: Option<PdeOptions>,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsOptions {
    /// Radii `2^{-k}` for `k = 0..levels`.
    pub levels: usize,
}

impl Default for MomentsOptions {
    fn default() -> Self {
        Self { levels: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixOptions {
    pub samples: usize,
}

impl Default for AppendixOptions {
    fn default() -> Self {
        Self { samples: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeOptions {
    pub cells: usize,
    pub boundary: BoundaryData,
    /// Samples per circle for the spherical split.
    pub nodes: usize,
    pub tol: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self { cells: 256, boundary: BoundaryData::X1, nodes: 64, tol: 1e-13 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.budget.validate().map_err(|e| CliError::Config(format!("[budget] {}", strip(&e))))?;
        if self.moments.levels == 0 || self.moments.levels > 60 {
            return Err(CliError::Config(format!("[moments] levels = {} outside 1..=60", self.moments.levels)));
        }
        if self.appendix.samples < 2 {
            return Err(CliError::Config(format!("[appendix] samples = {} must be at least 2", self.appendix.samples)));
        }
        if let Some(p) = &self.pde {
            if !(p.tol > 0.0 && p.tol < 1.0) {
                return Err(CliError::Config(format!("[pde] tol = {} must lie in (0, 1)", p.tol)));
            }
            if p.nodes < 8 {
                return Err(CliError::Config(format!("[pde] nodes = {} must be at least 8", p.nodes)));
            }
            if p.cells % 2 != 0 || !(dynreg::pde::MIN_CELLS..=dynreg::pde::MAX_CELLS).contains(&p.cells) {
                return Err(CliError::Config(format!("[pde] cells = {} must be even and in [16, 2048]", p.cells)));
            }
        }
        self.build_field().map(|_| ())
    }

    pub fn build_field(&self) -> Result<CoefficientField, CliError> {
        self.field.build().map_err(|e| CliError::Config(format!("[field] {e}")))
    }

    /// SHA-256 of the configuration with the output section left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputOptions::default();
        digest(&serde_json::to_string(&c).expect("config serializes"))
    }
}

fn strip(e: &dynreg::Error) -> String {
    match e {
        dynreg::Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
