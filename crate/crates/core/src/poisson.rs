//! Neumann Poisson solve `-varpi phi'' = sum_i z_i n_i + D` on `[0, L]`.
//!
//! Cell-centred second-order differences with zero gradient on both boundary
//! faces. The discrete operator is singular (constants are in its kernel); the
//! source is projected onto zero mean after the neutrality check, the
//! tridiagonal system is reduced to its bidiagonal factor (a face-flux sweep
//! from the left wall), and the solution is shifted to zero mean.

use crate::error::{Error, Result};
use crate::grid::{charge_scale, check_neutrality, PhaseGrid, SpeciesParams};

/// Relative tolerance of the neutrality (solvability) check.
pub const NEUTRALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    /// Potential at cell centres, zero mean.
    pub phi: Vec<f64>,
    /// `E = -dphi/dx` on the `nx + 1` faces; both boundary faces are zero.
    pub e_face: Vec<f64>,
    pub background: Vec<f64>,
    pub varpi: f64,
}

impl FieldState {
    pub fn zero(grid: &PhaseGrid, background: Vec<f64>, varpi: f64) -> Self {
        Self {
            phi: vec![0.0; grid.nx],
            e_face: vec![0.0; grid.nx + 1],
            background,
            varpi,
        }
    }

    /// Field averaged to cell centres, as seen by the velocity advection.
    pub fn e_cell(&self) -> Vec<f64> {
        self.e_face.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `(varpi / 2) int |dphi/dx|^2 dx`.
    pub fn energy(&self, grid: &PhaseGrid) -> f64 {
        0.5 * self.varpi * self.e_face.iter().map(|e| e * e).sum::<f64>() * grid.dx
    }

    pub fn max_abs_field(&self) -> f64 {
        self.e_face.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// Total charge density `sum_i z_i n_i + D` per cell.
pub fn charge_density(densities: &[Vec<f64>], species: &[SpeciesParams], background: &[f64]) -> Vec<f64> {
    let mut rho = background.to_vec();
    for (n, s) in densities.iter().zip(species) {
        let z = s.z as f64;
        if z != 0.0 {
            for (r, ni) in rho.iter_mut().zip(n) {
                *r += z * ni;
            }
        }
    }
    rho
}

/// Solve for the potential generated by the species densities and `background`.
pub fn solve_poisson(
    densities: &[Vec<f64>],
    species: &[SpeciesParams],
    background: &[f64],
    varpi: f64,
    grid: &PhaseGrid,
) -> Result<FieldState> {
    let residual = check_neutrality(densities, species, background, grid);
    let scale = charge_scale(densities, species, background, grid);
    let rho = charge_density(densities, species, background);
    solve_with_charge(&rho, residual, scale, background.to_vec(), varpi, grid)
}

/// Solve for an explicit charge density. The total charge must vanish
/// relative to `scale` (pass the integral of `|rho|` when no finer scale is
/// known).
pub fn solve_poisson_charge(rho: &[f64], varpi: f64, grid: &PhaseGrid) -> Result<FieldState> {
    let total = grid.integrate_x(rho);
    let scale = rho.iter().map(|r| r.abs()).sum::<f64>() * grid.dx;
    solve_with_charge(rho, total, scale, vec![0.0; grid.nx], varpi, grid)
}

fn solve_with_charge(
    rho: &[f64],
    total: f64,
    scale: f64,
    background: Vec<f64>,
    varpi: f64,
    grid: &PhaseGrid,
) -> Result<FieldState> {
    let tolerance = NEUTRALITY_TOL * scale;
    if total.abs() > tolerance {
        return Err(Error::NonCompatibleSource {
            residual: total,
            tolerance,
        });
    }
    let nx = grid.nx;
    let dx = grid.dx;
    let mean = rho.iter().sum::<f64>() / nx as f64;

    // varpi (E_{j+1/2} - E_{j-1/2}) / dx = rho_j, E_{-1/2} = 0
    let mut e_face = vec![0.0; nx + 1];
    for j in 0..nx - 1 {
        e_face[j + 1] = e_face[j] + (rho[j] - mean) * dx / varpi;
    }
    let mut phi = vec![0.0; nx];
    for j in 0..nx - 1 {
        phi[j + 1] = phi[j] - e_face[j + 1] * dx;
    }
    let phi_mean = phi.iter().sum::<f64>() / nx as f64;
    for p in &mut phi {
        *p -= phi_mean;
    }
    let mut field = FieldState {
        phi,
        e_face,
        background,
        varpi,
    };
    field.e_face = electric_field(&field, grid);
    if field.phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::Pivot {
            cell: field.phi.iter().position(|p| !p.is_finite()).unwrap_or(0),
            pivot: f64::NAN,
        });
    }
    Ok(field)
}

/// Face field `E = -dphi/dx` from centred differences; zero on both walls.
pub fn electric_field(field: &FieldState, grid: &PhaseGrid) -> Vec<f64> {
    let nx = field.phi.len();
    let mut e = vec![0.0; nx + 1];
    for j in 0..nx - 1 {
        e[j + 1] = -(field.phi[j + 1] - field.phi[j]) / grid.dx;
    }
    e
}

/// Max-norm residual of `-varpi phi'' = rho - mean(rho)` with Neumann ghosts.
pub fn poisson_residual(field: &FieldState, rho: &[f64], grid: &PhaseGrid) -> f64 {
    let nx = grid.nx;
    let mean = rho.iter().sum::<f64>() / nx as f64;
    let phi = &field.phi;
    (0..nx)
        .map(|j| {
            let left = if j == 0 { phi[0] } else { phi[j - 1] };
            let right = if j + 1 == nx { phi[nx - 1] } else { phi[j + 1] };
            let lap = (right - 2.0 * phi[j] + left) / (grid.dx * grid.dx);
            (-field.varpi * lap - (rho[j] - mean)).abs()
        })
        .fold(0.0, f64::max)
}
