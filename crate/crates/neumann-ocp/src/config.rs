//! Run configuration, read from flat JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// P1 states, piecewise constant controls.
    Standard,
    /// P1 states, controls at the boundary Gauss nodes.
    Variational,
    /// LOD states with the boundary corrector, piecewise constant controls.
    Multiscale,
}

/// Which mesh size a study halves from level to level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// `n = n0·2^level` with `k` fixed.
    Mesh,
    /// `n = n0` with `k·2^level` boundary segments per edge.
    Boundary,
    /// Coarse `n = n0·2^level` under a fixed fine mesh (multiscale only).
    Coarse,
}

/// Patch radius of the multiscale correctors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layers {
    Ideal,
    Default,
    Count(usize),
}

impl Layers {
    /// `None` means global (ideal) correctors.
    pub fn resolve(self, coarse_h: f64) -> Option<usize> {
        match self {
            Layers::Ideal => None,
            Layers::Default => Some(neumann_ocp_core::multiscale::default_layers(coarse_h)),
            Layers::Count(l) => Some(l),
        }
    }
}

impl fmt::Display for Layers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layers::Ideal => f.write_str("ideal"),
            Layers::Default => f.write_str("default"),
            Layers::Count(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for Layers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Layers::Count(l) => s.serialize_u64(*l as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Layers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(0) => Err(serde::de::Error::custom("layers must be at least 1")),
            Repr::Count(l) => Ok(Layers::Count(l)),
            Repr::Name(s) if s == "ideal" => Ok(Layers::Ideal),
            Repr::Name(s) if s == "default" => Ok(Layers::Default),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "layers must be a positive integer, \"ideal\" or \"default\", got \"{s}\""
            ))),
        }
    }
}

fn default_sweep() -> Sweep {
    Sweep::Mesh
}
fn default_levels() -> usize {
    1
}
fn default_k() -> usize {
    1
}
fn default_layers() -> Layers {
    Layers::Default
}
fn default_tol() -> f64 {
    1e-10
}
fn default_maxit() -> usize {
    50
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    neumann_ocp_core::verification::ROUGH_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Benchmark id: `const-exact`, `smooth-active` or `rough-random`.
    pub case: String,
    pub mode: Mode,
    #[serde(default = "default_sweep")]
    pub sweep: Sweep,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Cells per side of the first level (the coarse mesh in multiscale
    /// mode).
    pub n0: usize,
    /// Boundary segments per fine boundary edge on the first level.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Cells per side of the fine mesh in multiscale mode.
    #[serde(default)]
    pub fine_n: Option<usize>,
    /// Replaces the case's cost parameter.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_layers")]
    pub layers: Layers,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
    /// Output directory; `--out` takes precedence.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Mesh file used by `solve` instead of the unit square (standard and
    /// variational modes).
    #[serde(default)]
    pub mesh_file: Option<PathBuf>,
    /// Also check the a-priori bounds on every solve of a study.
    #[serde(default)]
    pub appendix_bounds: bool,
}

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "NEUMANN_OCP_SEED";

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: StudyConfig = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies `NEUMANN_OCP_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<(), RunError> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                self.seed = v
                    .trim()
                    .parse()
                    .map_err(|_| RunError::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
                Ok(())
            }
            Err(std::env::VarError::NotPresent) => Ok(()),
            Err(e) => Err(RunError::Config(format!("{SEED_ENV}: {e}"))),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if !["const-exact", "smooth-active", "rough-random"].contains(&self.case.as_str()) {
            return bad(format!("unknown case '{}'", self.case));
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.n0 == 0 || self.k == 0 {
            return bad("n0 and k must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("gamma must lie in (0, 1], got {g}"));
            }
        }
        match (self.mode, self.sweep) {
            (Mode::Multiscale, Sweep::Coarse) | (Mode::Standard, Sweep::Mesh | Sweep::Boundary) => {}
            (Mode::Variational, Sweep::Mesh) => {}
            (mode, sweep) => return bad(format!("sweep {sweep:?} is not available in mode {mode:?}")),
        }
        if self.mode == Mode::Multiscale {
            let Some(fine) = self.fine_n else {
                return bad("multiscale mode needs fine_n".into());
            };
            let coarsest = self.n0;
            let finest = self.n0.checked_shl(self.levels as u32 - 1).unwrap_or(usize::MAX);
            for nc in [coarsest, finest] {
                if fine % nc != 0 || !(fine / nc).is_power_of_two() {
                    return bad(format!("fine_n = {fine} is not a power-of-two multiple of coarse n = {nc}"));
                }
            }
            if self.mesh_file.is_some() {
                return bad("mesh_file is not supported in multiscale mode".into());
            }
        } else if self.fine_n.is_some() {
            return bad("fine_n is only used in multiscale mode".into());
        }
        Ok(())
    }
}
