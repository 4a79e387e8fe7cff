//! Split-step integration of the rescaled Vlasov-Poisson-Fokker-Planck system
//! and its kinetic diagnostics.
//!
//! One step of size `dt` performs, for every species,
//!
//! 1. field: the potential of the current densities (kept in sync after each step),
//! 2. x-transport with wall traces completed by the reflection law,
//! 3. v-transport under the force `kappa z E / eps`,
//! 4. backward-Euler collision with `dt_eff = zeta dt / eps^2`,
//!
//! and then re-solves the Poisson equation. The incoming wall traces used by
//! step 2 are the reflection of the outgoing traces left by the previous
//! step, so the reflection closes each cycle.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Scaling};
use crate::error::{Error, Result};
use crate::fokker_planck::{build_maxwellians, fp_implicit_step, FpOperator, MaxwellianTable};
use crate::grid::{check_neutrality, density_of, KineticState, PhaseGrid, SpeciesParams};
use crate::poisson::{solve_poisson, FieldState};
use crate::transport::{
    outgoing_trace, transport_v_step, transport_x_step, wall_flux, wall_trace, ReflectionMode, Wall,
    WallQuadrature,
};

/// Order of the sub-steps inside one cycle, echoed into run manifests.
pub const SPLITTING_ORDER: [&str; 5] = ["field", "x-transport", "v-transport", "collision", "reflection"];

/// `s log s`, extended by 0 at `s = 0`.
#[inline]
pub fn h_log(s: f64) -> f64 {
    if s > 0.0 {
        s * s.ln()
    } else {
        0.0
    }
}

/// Diagnostics of the kinetic state at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass: Vec<f64>,
    pub free_energy: f64,
    pub field_energy: f64,
    pub entropy_production: Vec<f64>,
    /// Boundary information per species, `[left, right]`.
    pub dg_info: Vec<[f64; 2]>,
    /// Discrete normal current per species after reflection, `[left, right]`.
    pub wall_flux: Vec<[f64; 2]>,
    pub neutrality: f64,
    pub min_f: f64,
    pub second_moment: Vec<f64>,
    /// `int int f log f` per species.
    pub entropy: Vec<f64>,
    /// Accumulated `sum_i (zeta_i / kappa_i) int D^i dt`.
    pub production_integral: f64,
    /// Accumulated `sum_i int (I^i_left + I^i_right) dt`.
    pub boundary_integral: f64,
}

/// Per-step output of [`VpfpSolver::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    /// Outward fluxes per species seen by the x-transport, `[left, right]`.
    pub wall_flux: Vec<[f64; 2]>,
    pub dg_info: Vec<[f64; 2]>,
    pub entropy_production: Vec<f64>,
}

pub struct VpfpSolver {
    pub grid: PhaseGrid,
    pub species: Vec<SpeciesParams>,
    pub epsilon: f64,
    pub varpi: f64,
    pub cfl: f64,
    pub mode: ReflectionMode,
    pub maxwellians: Vec<MaxwellianTable>,
    pub walls: Vec<WallQuadrature>,
    operators: Vec<FpOperator>,
    pub state: KineticState,
    pub field: FieldState,
    pub steps: usize,
    pub production_integral: f64,
    pub boundary_integral: f64,
}

impl VpfpSolver {
    /// Solver with the given state; the field is solved immediately.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        grid: PhaseGrid,
        species: Vec<SpeciesParams>,
        state: KineticState,
        background: Vec<f64>,
        epsilon: f64,
        varpi: f64,
        mode: ReflectionMode,
    ) -> Result<Self> {
        crate::error::require_positive("epsilon", epsilon)?;
        crate::error::require_positive("varpi", varpi)?;
        for (i, s) in species.iter().enumerate() {
            s.validate(&format!("species[{i}]"))?;
        }
        if state.n_species() != species.len() || state.f.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::InvalidGrid("state shape does not match grid and species".into()));
        }
        if background.len() != grid.nx {
            return Err(Error::InvalidGrid("background length differs from nx".into()));
        }
        let maxwellians = build_maxwellians(&species, &grid);
        let walls = maxwellians.iter().map(|m| WallQuadrature::new(m, &grid)).collect();
        let operators = species.iter().map(|s| FpOperator::new(s.kappa, &grid)).collect();
        let densities: Vec<Vec<f64>> = state.f.iter().map(|f| density_of(f, &grid)).collect();
        let field = solve_poisson(&densities, &species, &background, varpi, &grid)?;
        Ok(Self {
            grid,
            species,
            epsilon,
            varpi,
            cfl: 0.9,
            mode,
            maxwellians,
            walls,
            operators,
            state,
            field,
            steps: 0,
            production_integral: 0.0,
            boundary_integral: 0.0,
        })
    }

    /// Well-prepared data `f_i = n_i(x) M~_i(v)`.
    #[allow(clippy::too_many_arguments)]
    pub fn well_prepared(
        grid: PhaseGrid,
        species: Vec<SpeciesParams>,
        densities: &[Vec<f64>],
        background: Vec<f64>,
        epsilon: f64,
        varpi: f64,
        mode: ReflectionMode,
    ) -> Result<Self> {
        let tables = build_maxwellians(&species, &grid);
        let mut state = KineticState::zeros(&grid, species.len());
        for ((f, n), table) in state.f.iter_mut().zip(densities).zip(&tables) {
            for j in 0..grid.nx {
                for k in 0..grid.nv {
                    f[grid.idx(j, k)] = n[j] * table.tilde[k];
                }
            }
        }
        Self::from_state(grid, species, state, background, epsilon, varpi, mode)
    }

    pub fn from_config(config: &RunConfig, epsilon: f64) -> Result<Self> {
        if config.scaling == Scaling::HighField {
            return Err(Error::NotImplemented("high-field scaling"));
        }
        let grid = config.phase_grid()?;
        let densities = config.initial_densities(&grid);
        let background = config.background.sample(&grid)?;
        let mut solver = Self::well_prepared(
            grid,
            config.species_params(),
            &densities,
            background,
            epsilon,
            config.varpi,
            config.reflection,
        )?;
        solver.cfl = config.cfl;
        Ok(solver)
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    /// `cfl * eps * min(dx / v_max, dv / (max_i kappa_i |z_i| max|E|))`.
    pub fn stable_dt(&self) -> f64 {
        let dt_x = self.grid.dx / self.grid.v_max;
        let force = self
            .species
            .iter()
            .map(|s| s.kappa * (s.z as f64).abs())
            .fold(0.0, f64::max)
            * self.field.max_abs_field();
        let dt_v = if force > 0.0 { self.grid.dv / force } else { f64::INFINITY };
        self.cfl * self.epsilon * dt_x.min(dt_v)
    }

    /// Advance one splitting cycle of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let grid = &self.grid;
        let eps = self.epsilon;
        let mode = self.mode;
        let e_cell = self.field.e_cell();
        let species = &self.species;
        let walls = &self.walls;
        let operators = &self.operators;
        let tables = &self.maxwellians;

        let per_species: Vec<Result<(f64, f64, [f64; 2], [f64; 2])>> = self
            .state
            .f
            .par_iter_mut()
            .enumerate()
            .map(|(i, f)| {
                let quad = &walls[i];
                let left = wall_trace(f, mode, quad, Wall::Left, grid);
                let right = wall_trace(f, mode, quad, Wall::Right, grid);
                let info = [
                    boundary_information(&left, mode, quad, Wall::Left, grid),
                    boundary_information(&right, mode, quad, Wall::Right, grid),
                ];
                let fluxes = transport_x_step(f, grid, dt, eps, &left, &right)?;
                transport_v_step(f, grid, dt, &e_cell, species[i].kappa, species[i].z, eps)?;
                fp_implicit_step(f, species[i].zeta * dt / (eps * eps), &operators[i], grid)?;
                let d = entropy_production(f, &tables[i], grid);
                Ok((d, species[i].zeta / species[i].kappa, info, [fluxes.left, fluxes.right]))
            })
            .collect();

        let mut report = StepReport {
            dt,
            wall_flux: Vec::with_capacity(species.len()),
            dg_info: Vec::with_capacity(species.len()),
            entropy_production: Vec::with_capacity(species.len()),
        };
        for r in per_species {
            let (d, weight, info, flux) = r?;
            self.production_integral += dt * weight * d;
            self.boundary_integral += dt * (info[0] + info[1]);
            report.entropy_production.push(d);
            report.dg_info.push(info);
            report.wall_flux.push(flux);
        }
        self.state.t += dt;
        self.steps += 1;
        let densities = self.densities();
        self.field = solve_poisson(
            &densities,
            &self.species,
            &self.field.background,
            self.varpi,
            &self.grid,
        )?;
        Ok(report)
    }

    /// Step until `t_target`, shortening the last step to land on it.
    pub fn advance_to(&mut self, t_target: f64, mut on_step: impl FnMut(&Self, &StepReport)) -> Result<()> {
        let slack = 1e-12 * t_target.abs().max(1.0);
        while t_target - self.state.t > slack {
            let dt = self.stable_dt().min(t_target - self.state.t);
            let report = self.step(dt)?;
            on_step(self, &report);
        }
        Ok(())
    }

    pub fn densities(&self) -> Vec<Vec<f64>> {
        self.state.f.iter().map(|f| density_of(f, &self.grid)).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.state
            .f
            .iter()
            .map(|f| self.grid.integrate_xv(f))
            .collect()
    }

    pub fn free_energy(&self) -> f64 {
        free_energy(&self.state, &self.field, &self.species, &self.grid)
    }

    pub fn diagnostics(&self) -> DiagnosticsRecord {
        let grid = &self.grid;
        let n = self.species.len();
        let mut rec = DiagnosticsRecord {
            step: self.steps,
            t: self.state.t,
            mass: self.masses(),
            free_energy: self.free_energy(),
            field_energy: self.field.energy(grid),
            entropy_production: Vec::with_capacity(n),
            dg_info: Vec::with_capacity(n),
            wall_flux: Vec::with_capacity(n),
            neutrality: check_neutrality(&self.densities(), &self.species, &self.field.background, grid),
            min_f: self.state.min_value(),
            second_moment: Vec::with_capacity(n),
            entropy: Vec::with_capacity(n),
            production_integral: self.production_integral,
            boundary_integral: self.boundary_integral,
        };
        for (i, f) in self.state.f.iter().enumerate() {
            let quad = &self.walls[i];
            rec.entropy_production
                .push(entropy_production(f, &self.maxwellians[i], grid));
            let mut info = [0.0; 2];
            let mut flux = [0.0; 2];
            for (w, wall) in [Wall::Left, Wall::Right].into_iter().enumerate() {
                let trace = wall_trace(f, self.mode, quad, wall, grid);
                info[w] = boundary_information(&trace, self.mode, quad, wall, grid);
                flux[w] = wall_flux(&trace, wall, grid, self.epsilon);
            }
            rec.dg_info.push(info);
            rec.wall_flux.push(flux);
            rec.second_moment.push(second_moment(f, grid));
            rec.entropy.push(f.iter().map(|&s| h_log(s)).sum::<f64>() * grid.dx * grid.dv);
        }
        rec
    }
}

/// Outcome of a monitored run: records at `t = 0` and at every sample time,
/// plus invariants checked on every step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VpfpRun {
    pub epsilon: f64,
    pub steps: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub dissipation: DissipationReport,
    /// Largest post-reflection wall current over all steps.
    pub max_wall_flux: f64,
    /// Largest relative mass drift of any species.
    pub mass_drift: f64,
    pub min_f: f64,
}

/// Advance `solver` through `sample_times`, evaluating diagnostics after
/// every step. `on_step` sees each completed step and `on_sample` the state at
/// each sample time.
pub fn run_monitored(
    solver: &mut VpfpSolver,
    sample_times: &[f64],
    tol_per_step: f64,
    mut on_step: impl FnMut(&VpfpSolver, &StepReport),
    mut on_sample: impl FnMut(&VpfpSolver) -> Result<()>,
) -> Result<VpfpRun> {
    let first = solver.diagnostics();
    let m0 = first.mass.clone();
    let mut run = VpfpRun {
        epsilon: solver.epsilon,
        steps: 0,
        records: vec![first.clone()],
        dissipation: verify_dissipation(&[], solver.epsilon, tol_per_step),
        max_wall_flux: 0.0,
        mass_drift: 0.0,
        min_f: first.min_f,
    };
    let mut step_records = vec![first];
    for &t in sample_times {
        solver.advance_to(t, |s, report| {
            on_step(s, report);
            let rec = s.diagnostics();
            for w in &rec.wall_flux {
                run.max_wall_flux = run.max_wall_flux.max(w[0].abs()).max(w[1].abs());
            }
            for (m, m_ref) in rec.mass.iter().zip(&m0) {
                run.mass_drift = run
                    .mass_drift
                    .max((m - m_ref).abs() / m_ref.abs().max(f64::MIN_POSITIVE));
            }
            run.min_f = run.min_f.min(rec.min_f);
            step_records.push(rec);
        })?;
        run.records.push(step_records.last().expect("initial record present").clone());
        on_sample(solver)?;
    }
    run.steps = solver.steps;
    run.dissipation = verify_dissipation(&step_records, solver.epsilon, tol_per_step);
    Ok(run)
}

fn boundary_information(trace: &[f64], mode: ReflectionMode, quad: &WallQuadrature, wall: Wall, grid: &PhaseGrid) -> f64 {
    match mode {
        ReflectionMode::Diffuse => dg_information(trace, quad, wall, grid),
        ReflectionMode::Specular | ReflectionMode::Inverse => 0.0,
    }
}

/// `int int |v|^2 f`.
pub fn second_moment(f: &[f64], grid: &PhaseGrid) -> f64 {
    f.chunks_exact(grid.nv)
        .map(|row| row.iter().zip(&grid.v).map(|(fk, v)| v * v * fk).sum::<f64>())
        .sum::<f64>()
        * grid.dx
        * grid.dv
}

/// Kinetic part `int int (|v|^2 / (2 kappa) f + f log f)` of one species.
pub fn kinetic_free_energy(f: &[f64], kappa: f64, grid: &PhaseGrid) -> f64 {
    let mut total = 0.0;
    for row in f.chunks_exact(grid.nv) {
        for (fk, v) in row.iter().zip(&grid.v) {
            total += v * v / (2.0 * kappa) * fk + h_log(*fk);
        }
    }
    total * grid.dx * grid.dv
}

/// Free energy of the coupled system: kinetic parts plus `(varpi/2) int |E|^2`.
pub fn free_energy(state: &KineticState, field: &FieldState, species: &[SpeciesParams], grid: &PhaseGrid) -> f64 {
    state
        .f
        .iter()
        .zip(species)
        .map(|(f, s)| kinetic_free_energy(f, s.kappa, grid))
        .sum::<f64>()
        + field.energy(grid)
}

/// Discrete entropy production `D = int int (v sqrt f + 2 kappa d_v sqrt f)^2`.
///
/// Uses the identity `v sqrt f + 2 kappa d_v sqrt f = 2 kappa sqrt(M~) d_v g`
/// with `g = sqrt(f / M~)`: forward differences of `g` on interior velocity
/// faces, weighted by the arithmetic mean of `M~` on the two adjacent cells.
/// Faces where `M~` underflows to zero are skipped.
pub fn entropy_production(f: &[f64], table: &MaxwellianTable, grid: &PhaseGrid) -> f64 {
    let m = &table.tilde;
    let nv = grid.nv;
    let mut total = 0.0;
    for row in f.chunks_exact(nv) {
        for k in 0..nv - 1 {
            let (m0, m1) = (m[k], m[k + 1]);
            if m0 <= 0.0 || m1 <= 0.0 {
                continue;
            }
            let dg = (row[k + 1] / m1).sqrt() - (row[k] / m0).sqrt();
            total += dg * dg * 0.5 * (m0 + m1);
        }
    }
    4.0 * table.kappa * table.kappa * total * grid.dx / grid.dv
}

/// Jensen gap of `H(s) = s log s` for the outgoing trace at `wall`, taken
/// against the discrete probability measure `M |v| dv / Z` of the wall.
pub fn dg_information(trace: &[f64], quad: &WallQuadrature, wall: Wall, grid: &PhaseGrid) -> f64 {
    let mut mean = 0.0;
    let mut avg_h = 0.0;
    for k in 0..grid.nv {
        if !wall.is_outgoing(grid, k) || quad.maxwellian[k] <= 0.0 {
            continue;
        }
        let mu = quad.probability(k);
        let w = trace[k] / quad.maxwellian[k];
        mean += mu * w;
        avg_h += mu * h_log(w);
    }
    avg_h - h_log(mean)
}

/// Outgoing-trace helper for callers holding only a distribution.
pub fn dg_information_of(f: &[f64], quad: &WallQuadrature, wall: Wall, grid: &PhaseGrid) -> f64 {
    dg_information(&outgoing_trace(f, wall, grid), quad, wall, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `E(t) + dissipation > E(0) + tol`.
    Inequality,
    /// `E` grew between consecutive records by more than the step allowance.
    EnergyIncrease,
    NegativeProduction,
    NegativeBoundaryInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub kind: ViolationKind,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationReport {
    pub initial_energy: f64,
    /// Largest `E(t) + dissipation - E(0)`; negative means slack.
    pub worst_excess: f64,
    /// Largest `E(t_{n+1}) - E(t_n)` per elapsed step, relative to `|E(0)|`.
    pub worst_increase_per_step: f64,
    pub violations: Vec<Violation>,
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `E(t) + (1/eps^2) sum (zeta/kappa) int D + (1/eps) sum int I <= E(0) + tol`
/// and stepwise monotonicity of `E`, with `tol = tol_per_step |E(0)|` per elapsed step.
pub fn verify_dissipation(records: &[DiagnosticsRecord], epsilon: f64, tol_per_step: f64) -> DissipationReport {
    let mut report = DissipationReport {
        initial_energy: records.first().map_or(0.0, |r| r.free_energy),
        worst_excess: f64::NEG_INFINITY,
        worst_increase_per_step: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    let Some(first) = records.first() else {
        return report;
    };
    let e0 = first.free_energy;
    let unit = tol_per_step * e0.abs().max(f64::MIN_POSITIVE);
    for (idx, r) in records.iter().enumerate() {
        let steps = (r.step - first.step) as f64;
        let lhs = r.free_energy
            + (r.production_integral - first.production_integral) / (epsilon * epsilon)
            + (r.boundary_integral - first.boundary_integral) / epsilon;
        let excess = lhs - e0;
        report.worst_excess = report.worst_excess.max(excess);
        if excess > unit * steps {
            report.violations.push(Violation {
                t: r.t,
                kind: ViolationKind::Inequality,
                amount: excess,
            });
        }
        if let Some(d) = r.entropy_production.iter().copied().find(|d| *d < 0.0) {
            report.violations.push(Violation {
                t: r.t,
                kind: ViolationKind::NegativeProduction,
                amount: d,
            });
        }
        let jensen_tol = 1e-14 * r.mass.iter().fold(1.0, |m: f64, x| m.max(x.abs()));
        if let Some(i) = r.dg_info.iter().flatten().copied().find(|i| *i < -jensen_tol) {
            report.violations.push(Violation {
                t: r.t,
                kind: ViolationKind::NegativeBoundaryInfo,
                amount: i,
            });
        }
        if idx > 0 {
            let prev = &records[idx - 1];
            let elapsed = (r.step - prev.step).max(1) as f64;
            let increase = r.free_energy - prev.free_energy;
            report.worst_increase_per_step = report
                .worst_increase_per_step
                .max(increase / (elapsed * e0.abs().max(f64::MIN_POSITIVE)));
            if increase > unit * elapsed {
                report.violations.push(Violation {
                    t: r.t,
                    kind: ViolationKind::EnergyIncrease,
                    amount: increase,
                });
            }
        }
    }
    report
}
