//! TOML run configuration: model selection, grid and wave seeds, pipeline
//! tolerances, benchmark selection, and simulation parameters. Configs
//! round-trip losslessly through serialization so manifests can pin them.

use crate::model::{AdvectiveBrusselator, Brusselator, LambdaOmega, RDSystem};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Model selection with parameters, tagged by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Brusselator {
        alpha: f64,
        b: f64,
    },
    AdvectiveBrusselator {
        alpha: f64,
        b: f64,
        adv: f64,
    },
    LambdaOmega {
        m: f64,
        om: f64,
        gam: f64,
        dl: f64,
        g: f64,
        h: f64,
        a: f64,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Box<dyn RDSystem> {
        match *self {
            ModelConfig::Brusselator { alpha, b } => Box::new(Brusselator::new(alpha, b)),
            ModelConfig::AdvectiveBrusselator { alpha, b, adv } => {
                Box::new(AdvectiveBrusselator::new(alpha, b, adv))
            }
            ModelConfig::LambdaOmega {
                m,
                om,
                gam,
                dl,
                g,
                h,
                a,
            } => Box::new(LambdaOmega {
                m,
                om,
                gam,
                dl,
                g,
                h,
                a,
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Brusselator { .. } => "brusselator",
            ModelConfig::AdvectiveBrusselator { .. } => "advective_brusselator",
            ModelConfig::LambdaOmega { .. } => "lambda_omega",
        }
    }
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_gap_tol() -> f64 {
    1e-4
}
fn default_xi0() -> f64 {
    1.0
}
fn default_h() -> f64 {
    1e-3
}
fn default_theta() -> f64 {
    1e-3
}

/// Pipeline tolerances; all must be strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Newton residual target for the profile solve.
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    /// minimum separation of the critical pair from the stable spectrum
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    /// low-frequency cutoff radius
    #[serde(default = "default_xi0")]
    pub xi0: f64,
    /// finite-difference step for family derivatives in K
    #[serde(default = "default_h")]
    pub h: f64,
    /// diffusivity margin threshold (relative to the damping scale)
    #[serde(default = "default_theta")]
    pub theta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_tol: default_newton_tol(),
            gap_tol: default_gap_tol(),
            xi0: default_xi0(),
            h: default_h(),
            theta: default_theta(),
        }
    }
}

fn default_cells() -> usize {
    32
}
fn default_ppc() -> usize {
    8
}
fn default_source_width() -> f64 {
    0.5
}
fn default_source_amps() -> [f64; 2] {
    [0.05, 0.03]
}
fn default_t_end() -> f64 {
    512.0
}
fn default_dt_whitham() -> f64 {
    1.0
}
fn default_dt_rd() -> f64 {
    0.05
}

/// Super-cell comparison run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// fundamental cells per side of the super-cell
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_ppc")]
    pub points_per_cell: usize,
    /// Gaussian phase source: width in cells and component amplitudes
    #[serde(default = "default_source_width")]
    pub source_width: f64,
    #[serde(default = "default_source_amps")]
    pub source_amps: [f64; 2],
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt_whitham")]
    pub dt_whitham: f64,
    #[serde(default = "default_dt_rd")]
    pub dt_rd: f64,
    /// evolve the reaction-diffusion side too (expensive)
    #[serde(default)]
    pub run_rd: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cells: default_cells(),
            points_per_cell: default_ppc(),
            source_width: default_source_width(),
            source_amps: default_source_amps(),
            t_end: default_t_end(),
            dt_whitham: default_dt_whitham(),
            dt_rd: default_dt_rd(),
            run_rd: false,
        }
    }
}

fn default_grid_n() -> usize {
    16
}
fn default_out() -> String {
    "out".to_string()
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// modes per direction on the fundamental cell
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// wave matrix (wave vectors as columns)
    pub k: [[f64; 2]; 2],
    /// speed seed for the Newton solve
    #[serde(default)]
    pub c: [f64; 2],
    /// optional starting K for continuation (straight path to `k`)
    #[serde(default)]
    pub k_seed: Option<[[f64; 2]; 2]>,
    /// continuation step count when `k_seed` is set
    #[serde(default)]
    pub continuation_steps: Option<usize>,
    /// seed amplitude for the Turing-square initial guess
    #[serde(default)]
    pub seed_eps: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// decay benchmark selection (empty = suite default)
    #[serde(default)]
    pub benchmarks: Vec<String>,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::InputError(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Internal(format!("config encode: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("newton_tol", t.newton_tol),
            ("gap_tol", t.gap_tol),
            ("xi0", t.xi0),
            ("h", t.h),
            ("theta", t.theta),
        ] {
            if !(v > 0.0) {
                return Err(Error::InputError(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        let det = self.k[0][0] * self.k[1][1] - self.k[0][1] * self.k[1][0];
        if det.abs() < 1e-14 {
            return Err(Error::InputError(
                "wave matrix k must be invertible".to_string(),
            ));
        }
        if self.grid_n < 8 || self.grid_n % 2 != 0 {
            return Err(Error::InputError(format!(
                "grid_n must be even and >= 8, got {}",
                self.grid_n
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> RunConfig {
        RunConfig {
            model: ModelConfig::AdvectiveBrusselator {
                alpha: 1.0,
                b: 4.5,
                adv: 0.03,
            },
            grid_n: 16,
            k: [[0.9, 0.0], [0.0, 1.1]],
            c: [0.0, 0.0],
            k_seed: Some([[1.0, 0.0], [0.0, 1.0]]),
            continuation_steps: Some(4),
            seed_eps: Some(0.3),
            tolerances: Tolerances::default(),
            benchmarks: vec!["heat".to_string(), "damped_wave".to_string()],
            output_dir: "out".to_string(),
            seed: 7,
            sim: SimConfig::default(),
        }
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let cfg = example();
        let s = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(cfg, back);
        // and a second pass reproduces the exact text
        assert_eq!(s, back.to_toml_string().unwrap());
    }

    #[test]
    fn minimal_config_with_defaults() {
        let s = r#"
            grid_n = 16
            k = [[0.05, 0.01], [0.0, 0.055]]

            [model]
            name = "lambda_omega"
            m = 1.0
            om = 0.5
            gam = 0.2
            dl = -0.1
            g = 1.0
            h = 0.35
            a = 0.1
        "#;
        let cfg = RunConfig::from_toml_str(s).unwrap();
        assert_eq!(cfg.tolerances.newton_tol, 1e-10);
        assert_eq!(cfg.sim.cells, 32);
        assert_eq!(cfg.model.name(), "lambda_omega");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = example();
        cfg.tolerances.gap_tol = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InputError(_))));
        let mut cfg = example();
        cfg.k = [[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(cfg.validate(), Err(Error::InputError(_))));
        let mut cfg = example();
        cfg.grid_n = 9;
        assert!(cfg.validate().is_err());
    }
}
