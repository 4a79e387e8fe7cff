//! Poisson-Nernst-Planck reference solver.
//!
//! `dn_i/dt + dJ_i/dx = 0`, `J_i = -D_i (dn_i/dx + z_i n_i dphi/dx)`, zero flux
//! at both walls, coupled to the Neumann Poisson problem. Face fluxes are
//! Scharfetter-Gummel. Each step is backward Euler in both the densities and
//! the potential, solved by Gummel iteration: alternate a linear implicit
//! density update with the potential frozen and a Poisson solve, until the
//! densities stop changing. The fully implicit step dissipates the discrete
//! energy for any step size; the step bound keeps the iteration contractive.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::fokker_planck::{bernoulli, solve_flux_implicit};
use crate::grid::{PhaseGrid, SpeciesParams};
use crate::poisson::{solve_poisson, FieldState};
use crate::vpfp::h_log;

/// Normalization of the limit diffusivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusivityMode {
    /// `D_i = kappa_i / zeta_i`.
    #[default]
    KappaOverZeta,
    /// `D_i = 1 / zeta_i`.
    OneOverZeta,
}

impl DiffusivityMode {
    pub const ALL: [DiffusivityMode; 2] = [Self::KappaOverZeta, Self::OneOverZeta];

    pub fn diffusivity(self, s: &SpeciesParams) -> f64 {
        match self {
            Self::KappaOverZeta => s.kappa / s.zeta,
            Self::OneOverZeta => 1.0 / s.zeta,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::KappaOverZeta => "kappa-over-zeta",
            Self::OneOverZeta => "one-over-zeta",
        }
    }
}

impl std::str::FromStr for DiffusivityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa-over-zeta" => Ok(Self::KappaOverZeta),
            "one-over-zeta" => Ok(Self::OneOverZeta),
            other => Err(Error::Config {
                path: "pnp.diffusivity".into(),
                message: format!("unknown diffusivity mode `{other}`"),
            }),
        }
    }
}

/// Scharfetter-Gummel flux through the face between cells `left` and `left + 1`:
///
/// `J = -(D/dx) [B(-dpsi) n_R - B(dpsi) n_L]`, `dpsi = z (phi_R - phi_L)`.
///
/// Vanishes exactly when `n_R / n_L = exp(-dpsi)`.
pub fn sg_flux(n: &[f64], phi: &[f64], z: i32, diffusivity: f64, dx: f64, left: usize) -> f64 {
    let dpsi = z as f64 * (phi[left + 1] - phi[left]);
    -diffusivity / dx * (bernoulli(-dpsi) * n[left + 1] - bernoulli(dpsi) * n[left])
}

/// Flux at face `face` of `0..=nx`; the two wall faces carry no flux.
pub fn sg_face_flux(n: &[f64], phi: &[f64], z: i32, diffusivity: f64, dx: f64, face: usize) -> f64 {
    if face == 0 || face >= n.len() {
        0.0
    } else {
        sg_flux(n, phi, z, diffusivity, dx, face - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpState {
    pub t: f64,
    pub density: Vec<Vec<f64>>,
    pub field: FieldState,
    pub mode: DiffusivityMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnpDiagnostics {
    pub t: f64,
    pub mass: Vec<f64>,
    /// `sum_i int n_i log n_i + (varpi/2) int |dphi/dx|^2`.
    pub energy: f64,
    /// `sum_i int D_i n_i |d/dx (log n_i + z_i phi)|^2`, discretised on faces.
    pub dissipation: f64,
    /// Discrete L2 norm of `d/dx (log n_i + z_i phi)` per species.
    pub boltzmann_residual: Vec<f64>,
}

/// Relative max-norm change at which the Gummel iteration stops.
pub const GUMMEL_TOL: f64 = 1e-14;
pub const GUMMEL_MAX_ITER: usize = 100;

pub struct PnpSolver {
    pub grid: PhaseGrid,
    pub species: Vec<SpeciesParams>,
    pub varpi: f64,
    pub dt: f64,
    pub state: PnpState,
    pub steps: usize,
}

impl PnpSolver {
    pub fn new(
        grid: PhaseGrid,
        species: Vec<SpeciesParams>,
        density: Vec<Vec<f64>>,
        background: Vec<f64>,
        varpi: f64,
        dt: f64,
        mode: DiffusivityMode,
    ) -> Result<Self> {
        require_positive("varpi", varpi)?;
        require_positive("pnp.dt", dt)?;
        if density.len() != species.len() || density.iter().any(|n| n.len() != grid.nx) {
            return Err(Error::InvalidGrid("density shape does not match grid and species".into()));
        }
        let field = solve_poisson(&density, &species, &background, varpi, &grid)?;
        Ok(Self {
            grid,
            species,
            varpi,
            dt,
            state: PnpState {
                t: 0.0,
                density,
                field,
                mode,
            },
            steps: 0,
        })
    }

    pub fn from_config(config: &crate::config::RunConfig) -> Result<Self> {
        let grid = config.phase_grid()?;
        let density = config.initial_densities(&grid);
        let background = config.background.sample(&grid)?;
        Self::new(
            grid,
            config.species_params(),
            density,
            background,
            config.varpi,
            config.pnp.dt,
            config.pnp.diffusivity,
        )
    }

    pub fn diffusivities(&self) -> Vec<f64> {
        self.species
            .iter()
            .map(|s| self.state.mode.diffusivity(s))
            .collect()
    }

    /// Dielectric relaxation bound `varpi / sum_i D_i z_i^2 max n_i`; the
    /// Gummel iteration contracts below it.
    pub fn dt_bound(&self) -> f64 {
        let rate: f64 = self
            .species
            .iter()
            .zip(&self.state.density)
            .map(|(s, n)| {
                let nmax = n.iter().copied().fold(0.0, f64::max);
                self.state.mode.diffusivity(s) * (s.z as f64).powi(2) * nmax
            })
            .sum();
        if rate > 0.0 {
            self.varpi / rate
        } else {
            f64::INFINITY
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        self.step_with(dt)
    }

    pub fn step_with(&mut self, dt: f64) -> Result<()> {
        let bound = self.dt_bound();
        if dt > bound {
            return Err(Error::TimeStepTooLarge { dt, bound });
        }
        let nx = self.grid.nx;
        let dx = self.grid.dx;
        let start = self.state.density.clone();
        let diffusivities = self.diffusivities();
        let mut upper = vec![0.0; nx - 1];
        let mut lower = vec![0.0; nx - 1];
        let mut out = vec![0.0; nx];
        let mut scratch = vec![0.0; nx];
        let mut change = f64::INFINITY;
        for _ in 0..GUMMEL_MAX_ITER {
            change = 0.0;
            let phi = &self.state.field.phi;
            for ((s, n), (n_old, d)) in self
                .species
                .iter()
                .zip(self.state.density.iter_mut())
                .zip(start.iter().zip(&diffusivities))
            {
                // -J_{j+1/2} = upper_j n_{j+1} - lower_j n_j
                for j in 0..nx - 1 {
                    let dpsi = s.z as f64 * (phi[j + 1] - phi[j]);
                    upper[j] = d / dx * bernoulli(-dpsi);
                    lower[j] = d / dx * bernoulli(dpsi);
                }
                solve_flux_implicit(&upper, &lower, dt / dx, n_old, &mut out, &mut scratch)
                    .map_err(|(cell, pivot)| Error::Pivot { cell, pivot })?;
                let scale = out.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
                for (a, b) in n.iter().zip(&out) {
                    change = change.max((a - b).abs() / scale);
                }
                n.copy_from_slice(&out);
            }
            self.state.field = solve_poisson(
                &self.state.density,
                &self.species,
                &self.state.field.background,
                self.varpi,
                &self.grid,
            )?;
            if change <= GUMMEL_TOL || self.species.iter().all(|s| s.z == 0) {
                self.state.t += dt;
                self.steps += 1;
                return Ok(());
            }
        }
        Err(Error::NoConvergence {
            iterations: GUMMEL_MAX_ITER,
            change,
        })
    }

    /// Step with the configured `dt` until `t_target`, shortening the last step.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let slack = 1e-12 * t_target.abs().max(1.0);
        while t_target - self.state.t > slack {
            let dt = self.dt.min(t_target - self.state.t);
            self.step_with(dt)?;
        }
        Ok(())
    }

    pub fn diagnostics(&self) -> PnpDiagnostics {
        pnp_energy(&self.state, &self.species, &self.grid)
    }

    /// Face fluxes `J_i` on all `nx + 1` faces.
    pub fn fluxes(&self) -> Vec<Vec<f64>> {
        let phi = &self.state.field.phi;
        self.species
            .iter()
            .zip(&self.state.density)
            .map(|(s, n)| {
                let d = self.state.mode.diffusivity(s);
                (0..=self.grid.nx)
                    .map(|f| sg_face_flux(n, phi, s.z, d, self.grid.dx, f))
                    .collect()
            })
            .collect()
    }
}

/// Energy, dissipation and Boltzmann residual of a PNP state.
pub fn pnp_energy(state: &PnpState, species: &[SpeciesParams], grid: &PhaseGrid) -> PnpDiagnostics {
    let dx = grid.dx;
    let phi = &state.field.phi;
    let mut energy = state.field.energy(grid);
    let mut dissipation = 0.0;
    let mut mass = Vec::with_capacity(species.len());
    let mut residual = Vec::with_capacity(species.len());
    for (s, n) in species.iter().zip(&state.density) {
        energy += n.iter().map(|&v| h_log(v)).sum::<f64>() * dx;
        mass.push(grid.integrate_x(n));
        let d = state.mode.diffusivity(s);
        let mut sq = 0.0;
        for j in 0..grid.nx - 1 {
            if n[j] <= 0.0 || n[j + 1] <= 0.0 {
                continue;
            }
            let dmu = (n[j + 1] / n[j]).ln() + s.z as f64 * (phi[j + 1] - phi[j]);
            let j_face = sg_flux(n, phi, s.z, d, dx, j);
            dissipation -= j_face * dmu;
            sq += dmu * dmu / dx;
        }
        residual.push(sq.sqrt());
    }
    PnpDiagnostics {
        t: state.t,
        mass,
        energy,
        dissipation,
        boltzmann_residual: residual,
    }
}
