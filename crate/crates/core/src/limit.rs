//! Diffusion-limit harness: distances to local equilibrium, functional
//! inequalities, the epsilon sweep against the PNP reference and empirical
//! convergence orders.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fokker_planck::MaxwellianTable;
use crate::grid::{current_of, density_of, PhaseGrid, SpeciesParams};
use crate::pnp::{DiffusivityMode, PnpDiagnostics, PnpSolver};
use crate::vpfp::{entropy_production, run_monitored, DiagnosticsRecord, VpfpRun, VpfpSolver};

/// `int int f log(f / (n M~))` with `n = density(f)`; empty cells contribute 0.
pub fn relative_entropy(f: &[f64], table: &MaxwellianTable, grid: &PhaseGrid) -> f64 {
    let n = density_of(f, grid);
    let mut total = 0.0;
    for (row, nj) in f.chunks_exact(grid.nv).zip(&n) {
        if *nj <= 0.0 {
            continue;
        }
        for (fk, m) in row.iter().zip(&table.tilde) {
            if *fk > 0.0 && *m > 0.0 {
                total += fk * (fk / (nj * m)).ln();
            }
        }
    }
    total * grid.dx * grid.dv
}

/// `int int |f - n M~|`.
pub fn equilibrium_distance(f: &[f64], table: &MaxwellianTable, grid: &PhaseGrid) -> f64 {
    let n = density_of(f, grid);
    let mut total = 0.0;
    for (row, nj) in f.chunks_exact(grid.nv).zip(&n) {
        for (fk, m) in row.iter().zip(&table.tilde) {
            total += (fk - nj * m).abs();
        }
    }
    total * grid.dx * grid.dv
}

/// Csiszar-Kullback sides: `((int int |f - n M~|)^2, 4 (int n) H(f | n M~))`.
pub fn ck_check(f: &[f64], table: &MaxwellianTable, grid: &PhaseGrid) -> (f64, f64) {
    let lhs = equilibrium_distance(f, table, grid).powi(2);
    let mass = grid.integrate_xv(f);
    (lhs, 4.0 * mass * relative_entropy(f, table, grid))
}

/// Log-Sobolev sides: `(H(f | n M~), D(f) / (2 kappa))`.
pub fn logsobolev_check(f: &[f64], table: &MaxwellianTable, grid: &PhaseGrid) -> (f64, f64) {
    (
        relative_entropy(f, table, grid),
        entropy_production(f, table, grid) / (2.0 * table.kappa),
    )
}

/// `r = (sqrt f - sqrt(n M~)) / (eps sqrt M~)` for a given density `n`;
/// zero where `M~` underflows.
pub fn remainder_field(f: &[f64], n: &[f64], table: &MaxwellianTable, epsilon: f64, grid: &PhaseGrid) -> Vec<f64> {
    let mut r = vec![0.0; f.len()];
    for (j, nj) in n.iter().enumerate() {
        for (k, m) in table.tilde.iter().enumerate() {
            if *m > 0.0 {
                let idx = grid.idx(j, k);
                r[idx] = (f[idx].sqrt() - (nj * m).sqrt()) / (epsilon * m.sqrt());
            }
        }
    }
    r
}

/// Weighted norms of the remainder field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderNorms {
    /// `int int |r|^2 M~`.
    pub weighted: f64,
    /// `eps int int |r|^2 |v|^2 M~`.
    pub second: f64,
    /// `sqrt(eps) int int |r|^2 |v| M~`.
    pub first: f64,
}

pub fn remainder_norms(r: &[f64], table: &MaxwellianTable, epsilon: f64, grid: &PhaseGrid) -> RemainderNorms {
    let mut out = RemainderNorms {
        weighted: 0.0,
        second: 0.0,
        first: 0.0,
    };
    for row in r.chunks_exact(grid.nv) {
        for ((rk, m), v) in row.iter().zip(&table.tilde).zip(&grid.v) {
            let w = rk * rk * m;
            out.weighted += w;
            out.second += w * v * v;
            out.first += w * v.abs();
        }
    }
    let cell = grid.dx * grid.dv;
    out.weighted *= cell;
    out.second *= epsilon * cell;
    out.first *= epsilon.sqrt() * cell;
    out
}

/// Least-squares fit of `log gap = slope log eps + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
    /// Indices of gaps excluded because they were not positive.
    pub excluded: Vec<usize>,
}

pub fn estimate_order(epsilons: &[f64], gaps: &[f64]) -> Result<OrderFit> {
    if epsilons.len() != gaps.len() {
        return Err(Error::Fit(format!("{} epsilons but {} gaps", epsilons.len(), gaps.len())));
    }
    let mut excluded = Vec::new();
    let mut pts = Vec::new();
    for (i, (&e, &g)) in epsilons.iter().zip(gaps).enumerate() {
        if g > 0.0 && g.is_finite() && e > 0.0 {
            pts.push((e.ln(), g.ln()));
        } else {
            log::warn!("excluding gap {g:e} at epsilon {e} from the order fit");
            excluded.push(i);
        }
    }
    if pts.len() < 3 {
        return Err(Error::Fit(format!("{} usable points, need at least 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all epsilons coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(OrderFit {
        slope,
        intercept,
        residual,
        excluded,
    })
}

/// Time integrals over a run of the current and of the drift-diffusion
/// gradient `-(dn/dx + z n dphi/dx) / zeta` on interior faces, per species.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentAverages {
    pub duration: f64,
    pub current: Vec<Vec<f64>>,
    pub gradient: Vec<Vec<f64>>,
    /// `kappa_i`, the factor separating the two diffusivity modes.
    pub kappa: Vec<f64>,
}

impl CurrentAverages {
    pub fn new(species: &[SpeciesParams], grid: &PhaseGrid) -> Self {
        Self {
            duration: 0.0,
            current: vec![vec![0.0; grid.nx - 1]; species.len()],
            gradient: vec![vec![0.0; grid.nx - 1]; species.len()],
            kappa: species.iter().map(|s| s.kappa).collect(),
        }
    }

    /// Add `dt` times the instantaneous face values of `solver`.
    pub fn accumulate(&mut self, solver: &VpfpSolver, dt: f64) {
        let grid = &solver.grid;
        let phi = &solver.field.phi;
        for (i, (f, s)) in solver.state.f.iter().zip(&solver.species).enumerate() {
            let n = density_of(f, grid);
            let j = current_of(f, grid, solver.epsilon);
            for face in 0..grid.nx - 1 {
                let n_face = 0.5 * (n[face] + n[face + 1]);
                let dn = (n[face + 1] - n[face]) / grid.dx;
                let dphi = (phi[face + 1] - phi[face]) / grid.dx;
                self.current[i][face] += dt * 0.5 * (j[face] + j[face + 1]);
                self.gradient[i][face] -= dt * (dn + s.z as f64 * n_face * dphi) / s.zeta;
            }
        }
        self.duration += dt;
    }

    /// L1 distance between the averaged current and the averaged model flux.
    pub fn discrepancy(&self, mode: DiffusivityMode, dx: f64) -> f64 {
        let mut total = 0.0;
        for (i, (jc, g)) in self.current.iter().zip(&self.gradient).enumerate() {
            let factor = match mode {
                DiffusivityMode::KappaOverZeta => self.kappa[i],
                DiffusivityMode::OneOverZeta => 1.0,
            };
            total += jc
                .iter()
                .zip(g)
                .map(|(a, b)| (a - factor * b).abs())
                .sum::<f64>();
        }
        total * dx / self.duration.max(f64::MIN_POSITIVE)
    }

    /// L1 norm of the averaged current, the scale of [`Self::discrepancy`].
    pub fn scale(&self, dx: f64) -> f64 {
        self.current.iter().flatten().map(|a| a.abs()).sum::<f64>() * dx / self.duration.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeVerdict {
    KappaOverZeta,
    OneOverZeta,
    /// Every species has `kappa = 1`; the two modes coincide.
    Indistinguishable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentReport {
    pub epsilons: Vec<f64>,
    /// Relative L1 discrepancy per epsilon, `kappa / zeta` mode.
    pub kappa_over_zeta: Vec<f64>,
    /// Relative L1 discrepancy per epsilon, `1 / zeta` mode.
    pub one_over_zeta: Vec<f64>,
    pub verdict: ModeVerdict,
    /// Whether the discrepancy of the selected mode (or of both, when
    /// indistinguishable) decreases strictly as epsilon decreases.
    pub decreasing: bool,
}

/// Compare time-averaged currents with both diffusivity normalizations.
/// `runs` must be ordered by decreasing epsilon.
pub fn limit_current_check(epsilons: &[f64], runs: &[CurrentAverages], dx: f64) -> CurrentReport {
    let rel = |a: &CurrentAverages, m| {
        let scale = a.scale(dx);
        let d = a.discrepancy(m, dx);
        if scale > 0.0 {
            d / scale
        } else {
            d
        }
    };
    let koz: Vec<f64> = runs.iter().map(|a| rel(a, DiffusivityMode::KappaOverZeta)).collect();
    let ooz: Vec<f64> = runs.iter().map(|a| rel(a, DiffusivityMode::OneOverZeta)).collect();
    let all_unit = runs.iter().all(|a| a.kappa.iter().all(|&k| k == 1.0));
    let verdict = if all_unit {
        ModeVerdict::Indistinguishable
    } else {
        match (koz.last(), ooz.last()) {
            (Some(a), Some(b)) if b < a => ModeVerdict::OneOverZeta,
            _ => ModeVerdict::KappaOverZeta,
        }
    };
    let strictly_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let decreasing = match verdict {
        ModeVerdict::KappaOverZeta | ModeVerdict::Indistinguishable => strictly_decreasing(&koz),
        ModeVerdict::OneOverZeta => strictly_decreasing(&ooz),
    };
    CurrentReport {
        epsilons: epsilons.to_vec(),
        kappa_over_zeta: koz,
        one_over_zeta: ooz,
        verdict,
        decreasing,
    }
}

/// Quantities recorded at one output time of one epsilon run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSample {
    pub t: f64,
    /// `int int |f_i - n_i M~_i|`.
    pub kinetic_gap: Vec<f64>,
    /// `int |n_i - n_i^PNP|`.
    pub density_gap: Vec<f64>,
    /// `(int |phi - phi^PNP|^2)^{1/2}`.
    pub potential_gap: f64,
    pub ck: Vec<(f64, f64)>,
    pub logsobolev: Vec<(f64, f64)>,
    pub remainder: Vec<RemainderNorms>,
}

/// Uniform-in-epsilon quantities of one run (sup over output times, or
/// totals at the final time for the dissipation integrals).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monitors {
    pub mass: f64,
    pub second_moment: f64,
    pub entropy: f64,
    pub field_energy: f64,
    /// `sum_i (zeta_i/kappa_i) int D^i dt / eps^2`.
    pub production: f64,
    /// `sum_i int I^i dt / eps`.
    pub boundary: f64,
}

impl Monitors {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mass,
            self.second_moment,
            self.entropy,
            self.field_energy,
            self.production,
            self.boundary,
        ]
    }

    pub const NAMES: [&'static str; 6] = [
        "mass",
        "second_moment",
        "entropy",
        "field_energy",
        "production",
        "boundary",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub initial_density_gap: Vec<f64>,
    pub samples: Vec<SweepSample>,
    pub run: VpfpRun,
    pub monitors: Monitors,
    pub currents: CurrentAverages,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub sample_times: Vec<f64>,
    pub pnp: Vec<PnpDiagnostics>,
    pub runs: Vec<EpsilonRun>,
    /// `sup_t int |n_i - n_i^PNP|` per epsilon and species.
    pub sup_density_gap: Vec<Vec<f64>>,
    pub sup_kinetic_gap: Vec<Vec<f64>>,
    pub sup_potential_gap: Vec<f64>,
    /// Order of the density gap per species.
    pub density_order: Vec<Option<OrderFit>>,
    pub kinetic_order: Vec<Option<OrderFit>>,
    pub current: CurrentReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub sample_times: Vec<f64>,
    /// Allowed energy increase per step, relative to `|E(0)|`.
    pub tol_per_step: f64,
}

impl SweepOptions {
    /// Output times `interval, 2 interval, ..., final_time`.
    pub fn from_config(config: &RunConfig) -> Self {
        let count = (config.final_time / config.output_interval - 1e-9).ceil().max(1.0) as usize;
        let mut sample_times: Vec<f64> = (1..=count)
            .map(|i| (i as f64 * config.output_interval).min(config.final_time))
            .collect();
        if let Some(last) = sample_times.last_mut() {
            *last = config.final_time;
        }
        Self {
            sample_times,
            tol_per_step: 1e-6,
        }
    }
}

struct Reference {
    density: Vec<Vec<Vec<f64>>>,
    phi: Vec<Vec<f64>>,
    initial: Vec<Vec<f64>>,
    diagnostics: Vec<PnpDiagnostics>,
}

fn pnp_reference(config: &RunConfig, times: &[f64]) -> Result<Reference> {
    let mut pnp = PnpSolver::from_config(config)?;
    let initial = pnp.state.density.clone();
    let mut out = Reference {
        density: Vec::new(),
        phi: Vec::new(),
        initial,
        diagnostics: vec![pnp.diagnostics()],
    };
    for &t in times {
        pnp.advance_to(t)?;
        out.density.push(pnp.state.density.clone());
        out.phi.push(pnp.state.field.phi.clone());
        out.diagnostics.push(pnp.diagnostics());
    }
    Ok(out)
}

fn l1(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx
}

/// Run one epsilon member of a sweep; the per-step dissipation check is
/// evaluated on every step.
pub fn run_epsilon(config: &RunConfig, epsilon: f64, options: &SweepOptions) -> Result<EpsilonRun> {
    let reference = pnp_reference(config, &options.sample_times)?;
    run_against(config, epsilon, options, &reference)
}

fn run_against(config: &RunConfig, epsilon: f64, options: &SweepOptions, reference: &Reference) -> Result<EpsilonRun> {
    let mut solver = VpfpSolver::from_config(config, epsilon)?;
    let grid = solver.grid.clone();
    let initial_density_gap = solver
        .densities()
        .iter()
        .zip(&reference.initial)
        .map(|(a, b)| l1(a, b, grid.dx))
        .collect();
    let mut currents = CurrentAverages::new(&solver.species, &grid);
    let mut samples = Vec::with_capacity(options.sample_times.len());
    let run = run_monitored(
        &mut solver,
        &options.sample_times,
        options.tol_per_step,
        |s, report| currents.accumulate(s, report.dt),
        |s| {
            samples.push(sample_against(s, reference, samples.len()));
            Ok(())
        },
    )?;
    let records = &run.records;
    let sup = |f: &dyn Fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let last = records.last().expect("at least the initial record");
    let monitors = Monitors {
        mass: sup(&|r| r.mass.iter().sum()),
        second_moment: sup(&|r| r.second_moment.iter().sum()),
        entropy: sup(&|r| r.entropy.iter().map(|e| e.abs()).sum()),
        field_energy: sup(&|r| r.field_energy),
        production: last.production_integral / (epsilon * epsilon),
        boundary: last.boundary_integral / epsilon,
    };
    Ok(EpsilonRun {
        epsilon,
        initial_density_gap,
        samples,
        run,
        monitors,
        currents,
    })
}

fn sample_against(solver: &VpfpSolver, reference: &Reference, index: usize) -> SweepSample {
    let grid = &solver.grid;
    let epsilon = solver.epsilon;
    let densities = solver.densities();
    let mut sample = SweepSample {
        t: solver.time(),
        kinetic_gap: Vec::new(),
        density_gap: Vec::new(),
        potential_gap: solver
            .field
            .phi
            .iter()
            .zip(&reference.phi[index])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .mul_add(grid.dx, 0.0)
            .sqrt(),
        ck: Vec::new(),
        logsobolev: Vec::new(),
        remainder: Vec::new(),
    };
    for (i, f) in solver.state.f.iter().enumerate() {
        let table = &solver.maxwellians[i];
        sample.kinetic_gap.push(equilibrium_distance(f, table, grid));
        sample
            .density_gap
            .push(l1(&densities[i], &reference.density[index][i], grid.dx));
        sample.ck.push(ck_check(f, table, grid));
        sample.logsobolev.push(logsobolev_check(f, table, grid));
        let r = remainder_field(f, &densities[i], table, epsilon, grid);
        sample.remainder.push(remainder_norms(&r, table, epsilon, grid));
    }
    sample
}

/// Run the VPFP system for every epsilon (in parallel) and one PNP reference
/// from the same initial densities. Results are ordered as `epsilons`.
pub fn sweep_epsilon(config: &RunConfig, epsilons: &[f64], options: &SweepOptions) -> Result<SweepResult> {
    let reference = pnp_reference(config, &options.sample_times)?;
    let runs: Vec<EpsilonRun> = epsilons
        .par_iter()
        .map(|&e| run_against(config, e, options, &reference))
        .collect::<Result<_>>()?;
    let n_species = config.species.len();
    let sup_over = |pick: &dyn Fn(&SweepSample) -> f64, run: &EpsilonRun| run.samples.iter().map(pick).fold(0.0, f64::max);
    let sup_density_gap: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| (0..n_species).map(|i| sup_over(&|s| s.density_gap[i], r)).collect())
        .collect();
    let sup_kinetic_gap: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| (0..n_species).map(|i| sup_over(&|s| s.kinetic_gap[i], r)).collect())
        .collect();
    let sup_potential_gap = runs.iter().map(|r| sup_over(&|s| s.potential_gap, r)).collect();
    let fit = |gaps: &[Vec<f64>], i: usize| {
        let g: Vec<f64> = gaps.iter().map(|v| v[i]).collect();
        estimate_order(epsilons, &g).ok()
    };
    let density_order = (0..n_species).map(|i| fit(&sup_density_gap, i)).collect();
    let kinetic_order = (0..n_species).map(|i| fit(&sup_kinetic_gap, i)).collect();
    let averages: Vec<CurrentAverages> = runs.iter().map(|r| r.currents.clone()).collect();
    let dx = config.grid.length / config.grid.nx as f64;
    let current = limit_current_check(epsilons, &averages, dx);
    Ok(SweepResult {
        epsilons: epsilons.to_vec(),
        sample_times: options.sample_times.clone(),
        pnp: reference.diagnostics,
        runs,
        sup_density_gap,
        sup_kinetic_gap,
        sup_potential_gap,
        density_order,
        kinetic_order,
        current,
    })
}

/// Whether `values` decreases strictly along the sequence.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}
