//! Phase-space grids, species parameters, dimensionless scaling and velocity
//! moments.
//!
//! Distributions are stored x-major: the value for spatial cell `j` and
//! velocity cell `k` lives at `j * nv + k`. All reductions run in index order
//! so that results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Physical quantities of one species before rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesScales {
    pub label: String,
    pub valence: i32,
    pub mass: f64,
    pub relaxation_time: f64,
}

/// Reference quantities used to rescale the dimensional system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    pub m_ref: f64,
    pub tau_ref: f64,
    /// Squared thermal velocity of the reference particle.
    pub theta_ref: f64,
    pub charge: f64,
    pub permittivity: f64,
    /// k_B T_b of the thermal bath.
    pub thermal_energy: f64,
    pub length: f64,
    pub concentration: f64,
    pub potential: f64,
    pub species: Vec<SpeciesScales>,
}

/// Dimensionless parameters of one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub label: String,
    /// Integer valence z_i.
    pub z: i32,
    /// Mass ratio m_ref / m_i.
    pub kappa: f64,
    /// Relaxation ratio tau_ref / tau_i.
    pub zeta: f64,
}

impl SpeciesParams {
    pub fn new(label: impl Into<String>, z: i32, kappa: f64, zeta: f64) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            z,
            kappa: require_positive("kappa", kappa)?,
            zeta: require_positive("zeta", zeta)?,
        })
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        require_positive(format!("{path}.kappa"), self.kappa)?;
        require_positive(format!("{path}.zeta"), self.zeta)?;
        Ok(())
    }
}

/// Output of [`derive_scales`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimensionless {
    pub epsilon: f64,
    pub nu: f64,
    pub varpi: f64,
    pub species: Vec<SpeciesParams>,
}

/// Rescale a dimensional parameter set around its reference particle.
pub fn derive_scales(p: &PhysicalScales) -> Result<Dimensionless> {
    let m_ref = require_positive("m_ref", p.m_ref)?;
    let tau_ref = require_positive("tau_ref", p.tau_ref)?;
    let theta_ref = require_positive("theta_ref", p.theta_ref)?;
    let q = require_positive("charge", p.charge)?;
    let eps0 = require_positive("permittivity", p.permittivity)?;
    require_positive("thermal_energy", p.thermal_energy)?;
    let length = require_positive("length", p.length)?;
    let n0 = require_positive("concentration", p.concentration)?;
    let phi0 = require_positive("potential", p.potential)?;

    let v_ref = theta_ref.sqrt();
    let u_ref = tau_ref * (q / m_ref) * (phi0 / length);
    let species = p
        .species
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = require_positive(format!("species[{i}].mass"), s.mass)?;
            let tau = require_positive(format!("species[{i}].relaxation_time"), s.relaxation_time)?;
            Ok(SpeciesParams {
                label: s.label.clone(),
                z: s.valence,
                kappa: m_ref / m,
                zeta: tau_ref / tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dimensionless {
        epsilon: tau_ref * v_ref / length,
        nu: v_ref / u_ref,
        varpi: eps0 * phi0 / (q * n0 * length * length),
        species,
    })
}

/// Uniform cell-centred grid on `[0, length] x [-v_max, v_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nv: usize,
    pub length: f64,
    pub v_max: f64,
    pub dx: f64,
    pub dv: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseGrid {
    /// `nv` must be even so that no velocity cell sits on `v = 0` and the
    /// grid is symmetric under `v -> -v`.
    pub fn new(nx: usize, length: f64, nv: usize, v_max: f64) -> Result<Self> {
        require_positive("grid.length", length)?;
        require_positive("grid.v_max", v_max)?;
        if nx < 2 {
            return Err(Error::InvalidGrid(format!("nx = {nx}, need at least 2 cells")));
        }
        if nv < 2 || nv % 2 != 0 {
            return Err(Error::InvalidGrid(format!("nv = {nv}, need an even count >= 2")));
        }
        let dx = length / nx as f64;
        let dv = 2.0 * v_max / nv as f64;
        let x = (0..nx).map(|j| (j as f64 + 0.5) * dx).collect();
        let v = (0..nv).map(|k| -v_max + (k as f64 + 0.5) * dv).collect();
        Ok(Self {
            nx,
            nv,
            length,
            v_max,
            dx,
            dv,
            x,
            v,
        })
    }

    /// Default velocity truncation for a species set: `8 * max sqrt(kappa)`.
    pub fn default_v_max(species: &[SpeciesParams]) -> f64 {
        8.0 * species
            .iter()
            .map(|s| s.kappa.sqrt())
            .fold(0.0_f64, f64::max)
    }

    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.nv + k
    }

    pub fn len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial integral of a cell-centred field.
    pub fn integrate_x(&self, g: &[f64]) -> f64 {
        g.iter().sum::<f64>() * self.dx
    }

    /// Phase-space integral of a distribution-shaped array.
    pub fn integrate_xv(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx * self.dv
    }
}

/// Per-species distributions sharing one [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub t: f64,
    pub f: Vec<Vec<f64>>,
}

impl KineticState {
    pub fn zeros(grid: &PhaseGrid, n_species: usize) -> Self {
        Self {
            t: 0.0,
            f: vec![vec![0.0; grid.len()]; n_species],
        }
    }

    pub fn n_species(&self) -> usize {
        self.f.len()
    }

    pub fn min_value(&self) -> f64 {
        self.f
            .iter()
            .flat_map(|fi| fi.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Densities and currents of every species.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentFields {
    pub density: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
}

impl MomentFields {
    pub fn from_state(state: &KineticState, grid: &PhaseGrid, epsilon: f64) -> Self {
        let density = state.f.iter().map(|fi| density_of(fi, grid)).collect();
        let current = state
            .f
            .iter()
            .map(|fi| current_of(fi, grid, epsilon))
            .collect();
        Self { density, current }
    }
}

/// `n_i(x_j) = sum_k f_i(x_j, v_k) dv`.
pub fn density(state: &KineticState, species: usize, grid: &PhaseGrid) -> Vec<f64> {
    density_of(&state.f[species], grid)
}

pub fn density_of(f: &[f64], grid: &PhaseGrid) -> Vec<f64> {
    f.chunks_exact(grid.nv)
        .map(|row| row.iter().sum::<f64>() * grid.dv)
        .collect()
}

/// `J_i(x_j) = (1/epsilon) sum_k v_k f_i(x_j, v_k) dv`.
pub fn current(state: &KineticState, species: usize, grid: &PhaseGrid, epsilon: f64) -> Vec<f64> {
    current_of(&state.f[species], grid, epsilon)
}

pub fn current_of(f: &[f64], grid: &PhaseGrid, epsilon: f64) -> Vec<f64> {
    f.chunks_exact(grid.nv)
        .map(|row| {
            row.iter()
                .zip(&grid.v)
                .map(|(fk, vk)| vk * fk)
                .sum::<f64>()
                * grid.dv
                / epsilon
        })
        .collect()
}

/// Discrete `sum_i z_i int n_i dx + int D dx`.
pub fn check_neutrality(
    densities: &[Vec<f64>],
    species: &[SpeciesParams],
    background: &[f64],
    grid: &PhaseGrid,
) -> f64 {
    let charge: f64 = densities
        .iter()
        .zip(species)
        .map(|(n, s)| s.z as f64 * grid.integrate_x(n))
        .sum();
    charge + grid.integrate_x(background)
}

/// Scale against which a neutrality residual is judged.
pub fn charge_scale(
    densities: &[Vec<f64>],
    species: &[SpeciesParams],
    background: &[f64],
    grid: &PhaseGrid,
) -> f64 {
    let species_part: f64 = densities
        .iter()
        .zip(species)
        .map(|(n, s)| (s.z as f64).abs() * n.iter().map(|v| v.abs()).sum::<f64>() * grid.dx)
        .sum();
    species_part + background.iter().map(|d| d.abs()).sum::<f64>() * grid.dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_scales() -> PhysicalScales {
        PhysicalScales {
            m_ref: 1.0,
            tau_ref: 1.0,
            theta_ref: 1.0,
            charge: 1.0,
            permittivity: 1.0,
            thermal_energy: 1.0,
            length: 1.0,
            concentration: 1.0,
            potential: 1.0,
            species: vec![SpeciesScales {
                label: "a".into(),
                valence: 1,
                mass: 2.0,
                relaxation_time: 1.0,
            }],
        }
    }

    #[test]
    fn mass_ratio_and_identity_relaxation() {
        let d = derive_scales(&unit_scales()).unwrap();
        assert_eq!(d.species[0].kappa, 0.5);
        assert_eq!(d.species[0].zeta, 1.0);
        assert_eq!(d.nu, 1.0);
        assert_eq!(d.varpi, 1.0);
    }

    #[test]
    fn epsilon_from_mean_free_path() {
        let mut p = unit_scales();
        p.length = 10.0;
        let d = derive_scales(&p).unwrap();
        assert!((d.epsilon - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_with_name() {
        let mut p = unit_scales();
        p.species[0].mass = 0.0;
        let err = derive_scales(&p).unwrap_err().to_string();
        assert!(err.contains("species[0].mass"), "{err}");
        let mut p = unit_scales();
        p.permittivity = -1.0;
        assert!(derive_scales(&p).unwrap_err().to_string().contains("permittivity"));
    }

    #[test]
    fn mass_rescaling_keeps_kappa() {
        let p = unit_scales();
        let mut q = p.clone();
        q.m_ref *= 7.5;
        q.species[0].mass *= 7.5;
        let a = derive_scales(&p).unwrap();
        let b = derive_scales(&q).unwrap();
        assert!((a.species[0].kappa - b.species[0].kappa).abs() < 1e-15);
    }

    #[test]
    fn grid_geometry() {
        let g = PhaseGrid::new(10, 2.0, 8, 4.0).unwrap();
        assert_eq!(g.dx, 0.2);
        assert_eq!(g.dv, 1.0);
        assert_eq!(g.v[0], -3.5);
        assert_eq!(g.v[7], 3.5);
        assert!((g.integrate_x(&vec![1.0; 10]) - 2.0).abs() < 1e-15);
        assert!(PhaseGrid::new(10, 1.0, 7, 4.0).is_err());
        assert!(PhaseGrid::new(1, 1.0, 8, 4.0).is_err());
    }

    fn gaussian_state(grid: &PhaseGrid, c: f64, shift: f64) -> KineticState {
        let mut st = KineticState::zeros(grid, 1);
        for j in 0..grid.nx {
            for k in 0..grid.nv {
                let v = grid.v[k] - shift;
                st.f[0][grid.idx(j, k)] = c * (-v * v / 2.0).exp() / (2.0 * PI).sqrt();
            }
        }
        st
    }

    #[test]
    fn density_of_scaled_maxwellian() {
        let g = PhaseGrid::new(4, 1.0, 32, 8.0).unwrap();
        let st = gaussian_state(&g, 2.0, 0.0);
        for n in density(&st, 0, &g) {
            assert!((n - 2.0).abs() < 1e-8);
        }
        let zero = KineticState::zeros(&g, 1);
        assert!(density(&zero, 0, &g).iter().all(|&n| n == 0.0));
    }

    #[test]
    fn single_cell_indicator() {
        let g = PhaseGrid::new(3, 1.0, 16, 4.0).unwrap();
        let mut st = KineticState::zeros(&g, 1);
        for j in 0..g.nx {
            st.f[0][g.idx(j, 5)] = 1.0;
        }
        for n in density(&st, 0, &g) {
            assert_eq!(n, g.dv);
        }
    }

    #[test]
    fn current_of_even_and_shifted() {
        let g = PhaseGrid::new(2, 1.0, 64, 8.0).unwrap();
        let even = gaussian_state(&g, 1.0, 0.0);
        for j in current(&even, 0, &g, 0.3) {
            assert!(j.abs() < 1e-15);
        }
        // shift by exactly one cell: oracle is the quadrature of v M(v - dv)
        let shifted = gaussian_state(&g, 1.0, g.dv);
        let eps = 0.5;
        let oracle: f64 = g
            .v
            .iter()
            .map(|&v| v * (-(v - g.dv).powi(2) / 2.0).exp() / (2.0 * PI).sqrt() * g.dv)
            .sum::<f64>()
            / eps;
        let j = current(&shifted, 0, &g, eps);
        assert!((j[0] - oracle).abs() < 1e-14);
        let j2 = current(&shifted, 0, &g, 2.0 * eps);
        assert!((j2[0] - 0.5 * j[0]).abs() < 1e-15);
    }

    #[test]
    fn neutrality_residuals() {
        let g = PhaseGrid::new(8, 2.0, 8, 4.0).unwrap();
        let sp = vec![
            SpeciesParams::new("+", 1, 1.0, 1.0).unwrap(),
            SpeciesParams::new("-", -1, 1.0, 1.0).unwrap(),
        ];
        let n = vec![vec![1.3; 8], vec![1.3; 8]];
        assert_eq!(check_neutrality(&n, &sp, &vec![0.0; 8], &g), 0.0);

        let one = &sp[..1];
        let n = vec![vec![1.5; 8]]; // total 3 on [0, 2]
        let bg = vec![-3.0 / 2.0; 8];
        assert!(check_neutrality(&n, one, &bg, &g).abs() < 1e-12);
        assert!(check_neutrality(&n, one, &vec![0.0; 8], &g) > 0.0);
    }
}
