//! Phase-space advection and wall reflection.
//!
//! Both advections are conservative first-order upwind updates. The wall
//! traces are identified with the upwind face values: the outgoing trace at a
//! wall is the boundary cell value, and the incoming trace is produced by the
//! reflection law from that outgoing trace. Both enter the boundary face flux of
//! the same x-sweep, so the net discrete wall flux vanishes to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fokker_planck::MaxwellianTable;
use crate::grid::PhaseGrid;

/// Slack on Courant checks so that a step chosen exactly at the bound passes.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReflectionMode {
    #[default]
    Diffuse,
    Specular,
    Inverse,
}

impl ReflectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Diffuse => "diffuse",
            Self::Specular => "specular",
            Self::Inverse => "inverse",
        }
    }
}

impl std::str::FromStr for ReflectionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "diffuse" => Ok(Self::Diffuse),
            "specular" => Ok(Self::Specular),
            "inverse" => Ok(Self::Inverse),
            other => Err(format!("unknown reflection mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    /// `x = 0`, outward normal `-1`.
    Left,
    /// `x = L`, outward normal `+1`.
    Right,
}

impl Wall {
    pub fn normal(self) -> f64 {
        match self {
            Wall::Left => -1.0,
            Wall::Right => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Wall::Left => "left",
            Wall::Right => "right",
        }
    }

    /// Whether velocity cell `k` leaves the domain through this wall.
    #[inline]
    pub fn is_outgoing(self, grid: &PhaseGrid, k: usize) -> bool {
        grid.v[k] * self.normal() > 0.0
    }

    fn boundary_cell(self, grid: &PhaseGrid) -> usize {
        match self {
            Wall::Left => 0,
            Wall::Right => grid.nx - 1,
        }
    }
}

/// Discrete wall measure `M(v) |v . n| dv` of one species.
///
/// Both walls share the same weights because the velocity grid is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct WallQuadrature {
    /// Wall Maxwellian `M` on the velocity grid.
    pub maxwellian: Vec<f64>,
    /// `M_k |v_k| dv`.
    pub weight: Vec<f64>,
    /// `sum over one half-grid of M |v| dv`, identical for both halves.
    pub normalization: f64,
}

impl WallQuadrature {
    pub fn new(table: &MaxwellianTable, grid: &PhaseGrid) -> Self {
        let weight: Vec<f64> = table
            .wall
            .iter()
            .zip(&grid.v)
            .map(|(m, v)| m * v.abs() * grid.dv)
            .collect();
        let normalization = weight[grid.nv / 2..].iter().sum::<f64>();
        Self {
            maxwellian: table.wall.clone(),
            weight,
            normalization,
        }
    }

    /// Probability weight of velocity cell `k` on the outgoing half of `wall`.
    pub fn probability(&self, k: usize) -> f64 {
        self.weight[k] / self.normalization
    }
}

/// Complete the trace at a wall: `trace` holds the outgoing values; the
/// incoming half is overwritten by the reflection law.
pub fn apply_reflection(
    trace: &mut [f64],
    mode: ReflectionMode,
    quad: &WallQuadrature,
    wall: Wall,
    grid: &PhaseGrid,
) {
    let nv = grid.nv;
    match mode {
        ReflectionMode::Diffuse => apply_diffuse_reflection(trace, quad, wall, grid),
        ReflectionMode::Specular | ReflectionMode::Inverse => {
            // in one dimension both laws map v to -v
            for k in 0..nv {
                if !wall.is_outgoing(grid, k) {
                    trace[k] = trace[nv - 1 - k];
                }
            }
        }
    }
}

/// Diffuse (Maxwell) reflection: the incoming half of `trace` becomes
/// `M(v) * (outgoing flux) / (discrete incoming normalization)`.
pub fn apply_diffuse_reflection(trace: &mut [f64], quad: &WallQuadrature, wall: Wall, grid: &PhaseGrid) {
    let nv = grid.nv;
    let outflux: f64 = (0..nv)
        .filter(|&k| wall.is_outgoing(grid, k))
        .map(|k| grid.v[k].abs() * trace[k] * grid.dv)
        .sum();
    let scale = outflux / quad.normalization;
    for k in 0..nv {
        if !wall.is_outgoing(grid, k) {
            trace[k] = quad.maxwellian[k] * scale;
        }
    }
}

/// Outgoing trace of `f` at `wall` (boundary cell values, zero on the incoming half).
pub fn outgoing_trace(f: &[f64], wall: Wall, grid: &PhaseGrid) -> Vec<f64> {
    let j = wall.boundary_cell(grid);
    (0..grid.nv)
        .map(|k| {
            if wall.is_outgoing(grid, k) {
                f[grid.idx(j, k)]
            } else {
                0.0
            }
        })
        .collect()
}

/// Full wall trace of `f` after reflection.
pub fn wall_trace(f: &[f64], mode: ReflectionMode, quad: &WallQuadrature, wall: Wall, grid: &PhaseGrid) -> Vec<f64> {
    let mut trace = outgoing_trace(f, wall, grid);
    apply_reflection(&mut trace, mode, quad, wall, grid);
    trace
}

/// Discrete normal current `(1/eps) sum_k (v_k . n) trace_k dv` at a wall.
pub fn wall_flux(trace: &[f64], wall: Wall, grid: &PhaseGrid, epsilon: f64) -> f64 {
    let n = wall.normal();
    let mut out = 0.0;
    let mut inc = 0.0;
    for k in 0..grid.nv {
        let vn = grid.v[k] * n;
        if vn > 0.0 {
            out += vn * trace[k];
        } else {
            inc += vn * trace[k];
        }
    }
    (out + inc) * grid.dv / epsilon
}

/// Outward fluxes through the two walls during one x-sweep, integrated over v.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WallFluxes {
    pub left: f64,
    pub right: f64,
}

/// Upwind update of `df/dt + (v/eps) df/dx = 0` over one step.
///
/// `left_trace` and `right_trace` supply the incoming wall values (their
/// outgoing halves are ignored). Returns the outward wall fluxes so that
/// `mass_before - mass_after == dt * (left + right)` up to rounding.
pub fn transport_x_step(
    f: &mut [f64],
    grid: &PhaseGrid,
    dt: f64,
    epsilon: f64,
    left_trace: &[f64],
    right_trace: &[f64],
) -> Result<WallFluxes> {
    let v_top = grid.v[grid.nv - 1];
    let courant = dt * v_top / (epsilon * grid.dx);
    if courant > 1.0 + CFL_SLACK {
        return Err(Error::Cfl {
            direction: "x",
            courant,
        });
    }
    let (nx, nv) = (grid.nx, grid.nv);
    let lambda = dt / grid.dx;
    let mut fluxes = WallFluxes::default();
    let mut face = vec![0.0; nx + 1];
    for k in 0..nv {
        let a = grid.v[k] / epsilon;
        if a > 0.0 {
            face[0] = a * left_trace[k];
            for j in 0..nx {
                face[j + 1] = a * f[j * nv + k];
            }
        } else {
            for j in 0..nx {
                face[j] = a * f[j * nv + k];
            }
            face[nx] = a * right_trace[k];
        }
        for j in 0..nx {
            f[j * nv + k] -= lambda * (face[j + 1] - face[j]);
        }
        fluxes.left -= face[0] * grid.dv;
        fluxes.right += face[nx] * grid.dv;
    }
    Ok(fluxes)
}

/// Upwind update of `df/dt + a(x) df/dv = 0` with `a = kappa z E / eps`,
/// `E = -dphi/dx` at cell centres. Faces at `+-v_max` carry no flux.
pub fn transport_v_step(
    f: &mut [f64],
    grid: &PhaseGrid,
    dt: f64,
    e_cell: &[f64],
    kappa: f64,
    z: i32,
    epsilon: f64,
) -> Result<()> {
    if z == 0 {
        return Ok(());
    }
    let nv = grid.nv;
    let coeff = kappa * z as f64 / epsilon;
    let max_a = e_cell.iter().fold(0.0_f64, |m, e| m.max((coeff * e).abs()));
    let courant = dt * max_a / grid.dv;
    if courant > 1.0 + CFL_SLACK {
        return Err(Error::Cfl {
            direction: "v",
            courant,
        });
    }
    let lambda = dt / grid.dv;
    let mut face = vec![0.0; nv + 1];
    for (row, &e) in f.chunks_exact_mut(nv).zip(e_cell) {
        let a = coeff * e;
        if a == 0.0 {
            continue;
        }
        for k in 0..nv - 1 {
            face[k + 1] = if a > 0.0 { a * row[k] } else { a * row[k + 1] };
        }
        for k in 0..nv {
            row[k] -= lambda * (face[k + 1] - face[k]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(nx: usize, nv: usize) -> (PhaseGrid, MaxwellianTable, WallQuadrature) {
        let g = PhaseGrid::new(nx, 1.0, nv, 8.0).unwrap();
        let t = MaxwellianTable::new(1.0, &g);
        let q = WallQuadrature::new(&t, &g);
        (g, t, q)
    }

    #[test]
    fn quadrature_is_probability() {
        let (g, _, q) = setup(4, 64);
        let lower: f64 = q.weight[..g.nv / 2].iter().sum();
        assert!((lower - q.normalization).abs() < 1e-15);
        // half-line midpoint sum of v M(v): O(dv^2) below the continuum value 1
        assert!((q.normalization - 1.0).abs() < 1e-2);
        assert!(q.weight.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn detailed_balance() {
        let (g, _, q) = setup(4, 32);
        for wall in [Wall::Left, Wall::Right] {
            let mut trace: Vec<f64> = (0..g.nv)
                .map(|k| if wall.is_outgoing(&g, k) { 2.5 * q.maxwellian[k] } else { 0.0 })
                .collect();
            apply_diffuse_reflection(&mut trace, &q, wall, &g);
            for k in 0..g.nv {
                assert!((trace[k] - 2.5 * q.maxwellian[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_trace_reflects_to_zero() {
        let (g, _, q) = setup(4, 32);
        let mut trace = vec![0.0; g.nv];
        apply_diffuse_reflection(&mut trace, &q, Wall::Left, &g);
        assert!(trace.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn outgoing_only_trace_has_positive_flux() {
        let (g, t, _) = setup(4, 32);
        let f: Vec<f64> = (0..g.nx).flat_map(|_| t.tilde.clone()).collect();
        for wall in [Wall::Left, Wall::Right] {
            let trace = outgoing_trace(&f, wall, &g);
            assert!(wall_flux(&trace, wall, &g, 0.5) > 0.0);
        }
    }

    #[test]
    fn specular_and_inverse_are_flux_free() {
        let (g, t, q) = setup(4, 32);
        let f: Vec<f64> = (0..g.len()).map(|i| t.tilde[i % g.nv] * (1.0 + 0.3 * ((i * 37) % 11) as f64)).collect();
        for mode in [ReflectionMode::Specular, ReflectionMode::Inverse] {
            for wall in [Wall::Left, Wall::Right] {
                let trace = wall_trace(&f, mode, &q, wall, &g);
                assert!(wall_flux(&trace, wall, &g, 0.1).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_state_is_fixed_by_x_sweep() {
        let (g, t, q) = setup(8, 32);
        let mut f: Vec<f64> = (0..g.nx).flat_map(|_| t.tilde.iter().map(|m| 1.7 * m)).collect();
        let before = f.clone();
        let lt = wall_trace(&f, ReflectionMode::Diffuse, &q, Wall::Left, &g);
        let rt = wall_trace(&f, ReflectionMode::Diffuse, &q, Wall::Right, &g);
        let dt = 0.9 * 0.5 * g.dx / g.v_max;
        transport_x_step(&mut f, &g, dt, 0.5, &lt, &rt).unwrap();
        for (a, b) in f.iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pulse_moves_by_courant_fraction() {
        // 3 cells, one positive velocity row carries the pulse
        let g = PhaseGrid::new(3, 3.0, 2, 2.0).unwrap();
        let mut f = vec![0.0; g.len()];
        f[g.idx(0, 1)] = 1.0; // v = +1
        let eps = 1.0;
        let dt = 0.25;
        let zeros = vec![0.0; g.nv];
        transport_x_step(&mut f, &g, dt, eps, &zeros, &zeros).unwrap();
        // Courant number v dt / (eps dx) = 0.25: a quarter of the pulse moves right
        assert!((f[g.idx(0, 1)] - 0.75).abs() < 1e-15);
        assert!((f[g.idx(1, 1)] - 0.25).abs() < 1e-15);
        let centre: f64 = (0..3).map(|j| g.x[j] * f[g.idx(j, 1)]).sum();
        assert!((centre - (g.x[0] + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn x_cfl_rejected() {
        let (g, t, _) = setup(8, 16);
        let mut f: Vec<f64> = (0..g.nx).flat_map(|_| t.tilde.clone()).collect();
        let zeros = vec![0.0; g.nv];
        let err = transport_x_step(&mut f, &g, 1.0, 1.0, &zeros, &zeros).unwrap_err();
        assert!(matches!(err, Error::Cfl { direction: "x", .. }));
    }

    #[test]
    fn zero_field_leaves_state() {
        let (g, t, _) = setup(4, 32);
        let mut f: Vec<f64> = (0..g.nx).flat_map(|_| t.tilde.clone()).collect();
        let before = f.clone();
        transport_v_step(&mut f, &g, 0.1, &vec![0.0; g.nx], 1.0, 1, 0.5).unwrap();
        assert_eq!(f, before);
    }

    #[test]
    fn constant_field_shifts_mean_velocity() {
        let (g, t, _) = setup(2, 64);
        let mut f: Vec<f64> = (0..g.nx).flat_map(|_| t.tilde.clone()).collect();
        let (kappa, z, eps, e) = (1.0, 1, 0.5, 0.3);
        let a = kappa * z as f64 * e / eps;
        let dt = 0.5 * g.dv / a;
        transport_v_step(&mut f, &g, dt, &vec![e; g.nx], kappa, z, eps).unwrap();
        let mean: f64 = g.v.iter().zip(&f[..g.nv]).map(|(v, fk)| v * fk).sum::<f64>() * g.dv;
        assert!((mean - a * dt).abs() < 1e-12, "{mean} vs {}", a * dt);
        let err = transport_v_step(&mut f, &g, 4.0 * dt, &vec![e; g.nx], kappa, z, eps).unwrap_err();
        assert!(matches!(err, Error::Cfl { direction: "v", .. }));
    }

    #[test]
    fn valence_sign_mirrors_update() {
        let (g, t, _) = setup(3, 32);
        let base: Vec<f64> = (0..g.nx)
            .flat_map(|j| t.tilde.iter().map(move |m| m * (1.0 + j as f64)))
            .collect();
        let e = vec![0.2, -0.1, 0.4];
        let mut plus = base.clone();
        let mut minus = base.clone();
        transport_v_step(&mut plus, &g, 0.05, &e, 1.0, 1, 0.5).unwrap();
        transport_v_step(&mut minus, &g, 0.05, &e, 1.0, -1, 0.5).unwrap();
        for j in 0..g.nx {
            for k in 0..g.nv {
                let mirrored = minus[g.idx(j, g.nv - 1 - k)];
                assert!((plus[g.idx(j, k)] - mirrored).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn diffuse_reflection_has_zero_net_flux(vals in prop::collection::vec(0.0f64..5.0, 32)) {
            let (g, _, q) = setup(4, 32);
            for wall in [Wall::Left, Wall::Right] {
                let mut trace: Vec<f64> = (0..g.nv)
                    .map(|k| if wall.is_outgoing(&g, k) { vals[k] } else { 0.0 })
                    .collect();
                apply_diffuse_reflection(&mut trace, &q, wall, &g);
                let fl = wall_flux(&trace, wall, &g, 1.0);
                let outflux: f64 = (0..g.nv).filter(|&k| wall.is_outgoing(&g, k)).map(|k| g.v[k].abs() * trace[k] * g.dv).sum();
                prop_assert!(fl.abs() <= 1e-15 * outflux.max(1e-300), "{fl:e} vs {outflux}");
                prop_assert!(trace.iter().all(|&x| x >= 0.0));
            }
        }

        #[test]
        fn sweep_conserves_mass_and_positivity(
            vals in prop::collection::vec(0.0f64..2.0, 6 * 16),
            field in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let g = PhaseGrid::new(6, 1.0, 16, 8.0).unwrap();
            let t = MaxwellianTable::new(1.0, &g);
            let q = WallQuadrature::new(&t, &g);
            let eps = 0.3;
            let mut f = vals.clone();
            let m0 = g.integrate_xv(&f);
            let lt = wall_trace(&f, ReflectionMode::Diffuse, &q, Wall::Left, &g);
            let rt = wall_trace(&f, ReflectionMode::Diffuse, &q, Wall::Right, &g);
            let dt = 0.9 * eps * g.dx / g.v_max;
            let w = transport_x_step(&mut f, &g, dt, eps, &lt, &rt).unwrap();
            prop_assert!(w.left.abs() < 1e-12 && w.right.abs() < 1e-12);
            let m1 = g.integrate_xv(&f);
            prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
            prop_assert!(f.iter().all(|&x| x >= 0.0));
            let dt_v = 0.9 * g.dv * eps / field.iter().fold(1e-3_f64, |m, e| m.max(e.abs()));
            transport_v_step(&mut f, &g, dt_v, &field, 1.0, -1, eps).unwrap();
            prop_assert!((g.integrate_xv(&f) - m0).abs() <= 1e-12 * m0);
            prop_assert!(f.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn open_walls_balance_mass(vals in prop::collection::vec(0.0f64..2.0, 5 * 8)) {
            let g = PhaseGrid::new(5, 1.0, 8, 2.0).unwrap();
            let mut f = vals.clone();
            let m0 = g.integrate_xv(&f);
            let zeros = vec![0.0; g.nv];
            let dt = 0.1;
            let w = transport_x_step(&mut f, &g, dt, 1.0, &zeros, &zeros).unwrap();
            let m1 = g.integrate_xv(&f);
            prop_assert!((m0 - m1 - dt * (w.left + w.right)).abs() < 1e-14);
        }
    }
}
