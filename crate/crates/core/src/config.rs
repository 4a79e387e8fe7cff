//! Run configuration and its TOML representation.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::grid::{charge_scale, check_neutrality, PhaseGrid, SpeciesParams};
use crate::pnp::DiffusivityMode;
use crate::poisson::NEUTRALITY_TOL;
use crate::transport::ReflectionMode;

/// A single epsilon or a list of them (sweep mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Single(f64),
    List(Vec<f64>),
}

impl EpsilonSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Single(e) => vec![*e],
            Self::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    #[default]
    LowField,
    /// Drift-collision balance; accepted by the parser, rejected by the solver.
    HighField,
}

/// Initial density vocabulary, evaluated at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensityProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(mode * pi * x / L)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
    },
    /// `base + amplitude * exp(-(x - center)^2 / (2 width^2))`.
    Gaussian {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

fn one() -> u32 {
    1
}

impl DensityProfile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Cosine {
                mean,
                amplitude,
                mode,
            } => mean + amplitude * (mode as f64 * PI * x / length).cos(),
            Self::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }

    pub fn sample(&self, grid: &PhaseGrid) -> Vec<f64> {
        grid.x.iter().map(|&x| self.eval(x, grid.length)).collect()
    }
}

/// Permanent background charge `D(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackgroundCharge {
    Constant { value: f64 },
    /// Linear ramp from `left` at `x = 0` to `right` at `x = L`.
    Ramp { left: f64, right: f64 },
    /// One value per spatial cell.
    Table { values: Vec<f64> },
}

impl Default for BackgroundCharge {
    fn default() -> Self {
        Self::Constant { value: 0.0 }
    }
}

impl BackgroundCharge {
    pub fn sample(&self, grid: &PhaseGrid) -> Result<Vec<f64>> {
        match self {
            Self::Constant { value } => Ok(vec![*value; grid.nx]),
            Self::Ramp { left, right } => Ok(grid
                .x
                .iter()
                .map(|x| left + (right - left) * x / grid.length)
                .collect()),
            Self::Table { values } => {
                if values.len() != grid.nx {
                    return Err(Error::Config {
                        path: "background.values".into(),
                        message: format!("expected {} entries, got {}", grid.nx, values.len()),
                    });
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub nv: usize,
    #[serde(default = "unit")]
    pub length: f64,
    /// Defaults to `8 max sqrt(kappa)`.
    #[serde(default)]
    pub v_max: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesConfig {
    #[serde(default)]
    pub label: String,
    pub z: i32,
    pub kappa: f64,
    pub zeta: f64,
    pub initial: DensityProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpConfig {
    #[serde(default = "default_pnp_dt")]
    pub dt: f64,
    #[serde(default)]
    pub diffusivity: DiffusivityMode,
}

fn default_pnp_dt() -> f64 {
    1e-4
}

impl Default for PnpConfig {
    fn default() -> Self {
        Self {
            dt: default_pnp_dt(),
            diffusivity: DiffusivityMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: EpsilonSpec,
    pub varpi: f64,
    pub final_time: f64,
    #[serde(default = "default_output_interval")]
    pub output_interval: f64,
    /// Safety factor of the time-step policy.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub reflection: ReflectionMode,
    pub grid: GridConfig,
    pub species: Vec<SpeciesConfig>,
    #[serde(default)]
    pub background: BackgroundCharge,
    #[serde(default)]
    pub pnp: PnpConfig,
}

fn default_output_interval() -> f64 {
    0.1
}

fn default_cfl() -> f64 {
    0.9
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<root>".into()),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon.values()
    }

    pub fn is_sweep(&self) -> bool {
        self.epsilons().len() > 1
    }

    pub fn species_params(&self) -> Vec<SpeciesParams> {
        self.species
            .iter()
            .enumerate()
            .map(|(i, s)| SpeciesParams {
                label: if s.label.is_empty() {
                    format!("species{i}")
                } else {
                    s.label.clone()
                },
                z: s.z,
                kappa: s.kappa,
                zeta: s.zeta,
            })
            .collect()
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        let v_max = match self.grid.v_max {
            Some(v) => v,
            None => PhaseGrid::default_v_max(&self.species_params()),
        };
        PhaseGrid::new(self.grid.nx, self.grid.length, self.grid.nv, v_max)
    }

    pub fn initial_densities(&self, grid: &PhaseGrid) -> Vec<Vec<f64>> {
        self.species.iter().map(|s| s.initial.sample(grid)).collect()
    }

    /// Check positivity of every parameter and neutrality of the initial data.
    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilons();
        if eps.is_empty() {
            return Err(Error::Config {
                path: "epsilon".into(),
                message: "empty epsilon list".into(),
            });
        }
        for (i, e) in eps.iter().enumerate() {
            let name = if eps.len() == 1 {
                "epsilon".to_string()
            } else {
                format!("epsilon[{i}]")
            };
            require_positive(name, *e)?;
        }
        require_positive("varpi", self.varpi)?;
        require_positive("final_time", self.final_time)?;
        require_positive("output_interval", self.output_interval)?;
        require_positive("cfl", self.cfl)?;
        if self.cfl > 1.0 {
            return Err(Error::Config {
                path: "cfl".into(),
                message: format!("safety factor {} exceeds 1", self.cfl),
            });
        }
        require_positive("grid.length", self.grid.length)?;
        if let Some(v) = self.grid.v_max {
            require_positive("grid.v_max", v)?;
        }
        require_positive("pnp.dt", self.pnp.dt)?;
        if self.species.is_empty() {
            return Err(Error::Config {
                path: "species".into(),
                message: "at least one species is required".into(),
            });
        }
        for (i, s) in self.species_params().iter().enumerate() {
            s.validate(&format!("species[{i}]"))?;
        }
        let grid = self.phase_grid()?;
        let densities = self.initial_densities(&grid);
        for (i, n) in densities.iter().enumerate() {
            if let Some(j) = n.iter().position(|&v| !(v >= 0.0)) {
                return Err(Error::Config {
                    path: format!("species[{i}].initial"),
                    message: format!("negative or invalid density {} in cell {j}", n[j]),
                });
            }
        }
        let background = self.background.sample(&grid)?;
        let species = self.species_params();
        let residual = check_neutrality(&densities, &species, &background, &grid);
        let tolerance = NEUTRALITY_TOL * charge_scale(&densities, &species, &background, &grid);
        if residual.abs() > tolerance {
            return Err(Error::Config {
                path: "species".into(),
                message: format!(
                    "initial data violate global neutrality: residual {residual:e} > {tolerance:e}"
                ),
            });
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config { path: p, message } => Error::Config {
            path: format!("{}: {p}", path.display()),
            message,
        },
        other => other,
    })
}

/// The two-species configuration used for the diffusion-limit acceptance run.
pub fn acceptance_config() -> RunConfig {
    RunConfig::from_toml_str(ACCEPTANCE_TOML).expect("built-in config is valid")
}

pub const ACCEPTANCE_TOML: &str = r#"
epsilon = [0.5, 0.25, 0.125, 0.0625]
varpi = 1.0
final_time = 0.5
output_interval = 0.1

[grid]
nx = 64
nv = 64
length = 1.0

[[species]]
label = "cation"
z = 1
kappa = 1.0
zeta = 1.0
initial = { kind = "cosine", mean = 1.0, amplitude = 0.2 }

[[species]]
label = "anion"
z = -1
kappa = 1.0
zeta = 1.0
initial = { kind = "cosine", mean = 1.0, amplitude = 0.2 }

[background]
kind = "constant"
value = 0.0

[pnp]
dt = 1e-4
diffusivity = "kappa-over-zeta"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
epsilon = 0.25
varpi = 1.0
final_time = 0.2
[grid]
nx = 16
nv = 16
[[species]]
z = 1
kappa = 1.0
zeta = 1.0
initial = { kind = "constant", value = 1.0 }
[[species]]
z = -1
kappa = 1.0
zeta = 1.0
initial = { kind = "constant", value = 1.0 }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.output_interval, 0.1);
        assert_eq!(c.cfl, 0.9);
        assert_eq!(c.reflection, ReflectionMode::Diffuse);
        assert_eq!(c.pnp.diffusivity, DiffusivityMode::KappaOverZeta);
        assert_eq!(c.grid.length, 1.0);
        assert!(!c.is_sweep());
        assert_eq!(c.phase_grid().unwrap().v_max, 8.0);
        let echoed = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(echoed, c);
    }

    #[test]
    fn negative_kappa_is_named() {
        let text = MINIMAL.replacen("kappa = 1.0", "kappa = -1.0", 1);
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("species[0].kappa"), "{err}");
    }

    #[test]
    fn epsilon_list_enables_sweep() {
        let text = MINIMAL.replace("epsilon = 0.25", "epsilon = [0.5, 0.25]");
        let c = RunConfig::from_toml_str(&text).unwrap();
        assert!(c.is_sweep());
        assert_eq!(c.epsilons(), vec![0.5, 0.25]);
    }

    #[test]
    fn charged_initial_data_rejected() {
        let text = MINIMAL.replacen("value = 1.0", "value = 2.0", 1);
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("neutrality"), "{err}");
    }

    #[test]
    fn missing_key_reported() {
        let text = MINIMAL.replace("nv = 16", "");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("nv"), "{err}");
    }

    #[test]
    fn background_variants() {
        let g = PhaseGrid::new(4, 2.0, 2, 1.0).unwrap();
        let ramp = BackgroundCharge::Ramp {
            left: 0.0,
            right: 2.0,
        };
        assert_eq!(ramp.sample(&g).unwrap(), vec![0.25, 0.75, 1.25, 1.75]);
        let bad = BackgroundCharge::Table { values: vec![1.0] };
        assert!(bad.sample(&g).is_err());
    }

    #[test]
    fn acceptance_config_is_valid() {
        let c = acceptance_config();
        assert_eq!(c.epsilons(), vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(c.species.len(), 2);
    }
}
