use std::path::PathBuf;

use harmap_core::grassmann::Direction;
use harmap_core::grid::Grid;
use harmap_core::matrix::MatrixJson;
use harmap_core::potential::{PotentialSpec, ZTerm};
use serde::Deserialize;

pub const CONFIG_SCHEMA: u32 = 1;

/// Thresholds a command must meet for exit code 0.
#[derive(Clone, Copy, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Zero-curvature form of `Φ`.
    pub extended: f64,
    /// FD harmonic-map residual of `φ`.
    pub harmonic: f64,
    /// Pointwise identities between two computed sides.
    pub identity: f64,
    /// Factorization, unitarity and path-independence certificates.
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            extended: 1e-5,
            harmonic: 1e-4,
            identity: 1e-6,
            membership: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn uniform(x: f64) -> Self {
        Tolerances {
            extended: x,
            harmonic: x,
            identity: x,
            membership: x,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitonBlock {
    /// `F(z) = Σ_j z^j F_j`, one `n × k` matrix per power of `z`.
    pub frame: Vec<MatrixJson>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleBlock {
    pub a: [f64; 2],
    #[serde(rename = "V")]
    pub v: MatrixJson,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressBlock {
    /// `h(z, λ)` with nonnegative `λ`-powers; drawn from `--seed` when absent.
    pub gauge: Option<Vec<ZTerm>>,
    pub simple: Option<SimpleBlock>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteBlock {
    /// Defaults to `ker η` of a finite-type potential.
    #[serde(rename = "V")]
    pub v: Option<MatrixJson>,
    pub a_sequence: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussBlock {
    pub direction: Direction,
    #[serde(default = "one")]
    pub steps: usize,
}

impl Default for GaussBlock {
    fn default() -> Self {
        GaussBlock {
            direction: Direction::Forward,
            steps: 1,
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    /// A `Φ` field as written by `run`, relative to the config file.
    pub phi: PathBuf,
}

fn default_grid() -> Grid {
    Grid::centered(1.0, 33)
}

fn default_trunc() -> usize {
    32
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid: Grid,
    #[serde(default = "default_trunc")]
    pub trunc: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub potential: Option<PotentialSpec>,
    pub uniton: Option<UnitonBlock>,
    pub dress: Option<DressBlock>,
    pub complete: Option<CompleteBlock>,
    pub gauss: Option<GaussBlock>,
    pub verify: Option<VerifyBlock>,
}

pub const MAX_SAMPLES: usize = 257;
pub const MAX_TRUNC: usize = 256;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(format!(
                "unsupported schema {} (expected {CONFIG_SCHEMA})",
                cfg.schema
            ));
        }
        Ok(cfg)
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("n must be positive".into());
        }
        let g = &self.grid;
        Grid::new(
            num_complex::Complex64::new(g.center[0], g.center[1]),
            g.half_width,
            g.samples,
        )
        .map_err(|e| e.to_string())?;
        if g.samples > MAX_SAMPLES {
            return Err(format!("grid.samples {} above {MAX_SAMPLES}", g.samples));
        }
        if !g.contains_origin() {
            return Err("the grid must contain z = 0".into());
        }
        if self.trunc == 0 || self.trunc > MAX_TRUNC {
            return Err(format!("trunc must lie in 1..={MAX_TRUNC}"));
        }
        let t = &self.tolerances;
        if [t.extended, t.harmonic, t.identity, t.membership]
            .iter()
            .any(|x| !(x.is_finite() && *x > 0.0))
        {
            return Err("tolerances must be positive".into());
        }
        Ok(())
    }
}
