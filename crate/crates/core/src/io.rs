//! Run orchestration and persistence: CSV tables, JSON manifests and gnuplot
//! scripts for the `vpfp`, `pnp`, `sweep` and `checks` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::fokker_planck::{fp_inverse_check, fp_null_space_residual};
use crate::grid::PhaseGrid;
use crate::limit::{strictly_decreasing, ModeVerdict, SweepOptions, SweepResult, sweep_epsilon};
use crate::pnp::{PnpDiagnostics, PnpSolver};
use crate::poisson::{solve_poisson_charge, NEUTRALITY_TOL};
use crate::vpfp::{run_monitored, VpfpRun, VpfpSolver, SPLITTING_ORDER};

/// Allowed energy increase per step, relative to `|E(0)|`.
pub const DISSIPATION_TOL_PER_STEP: f64 = 1e-6;
/// Allowed negative residual of the Csiszar-Kullback and log-Sobolev checks.
pub const INEQUALITY_TOL: f64 = 1e-8;
/// Allowed relative mass drift per step.
pub const MASS_TOL_PER_STEP: f64 = 1e-12;

/// Rounding bound on the post-reflection wall current; the current carries a
/// factor `1/eps`, so the bound scales with it.
pub fn wall_flux_tolerance(epsilon: f64) -> f64 {
    1e-14 * (1.0 / epsilon).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Vpfp,
    Pnp,
    Sweep,
    Checks,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Vpfp => "vpfp",
            Command::Pnp => "pnp",
            Command::Sweep => "sweep",
            Command::Checks => "checks",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Result of a command: written files and invariant violations.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub outputs: Vec<OutputFile>,
    pub violations: Vec<String>,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Formats a float in Rust's shortest round-trip exponent form.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Sink {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }
}

pub const VPFP_COLUMNS: &str = "epsilon,t,step,species,mass,free_energy,field_energy,entropy_production,\
dg_info_left,dg_info_right,wall_flux_left,wall_flux_right,second_moment,entropy,min_f,neutrality,\
production_integral,boundary_integral";

/// One row per (epsilon, output time, species).
pub fn vpfp_csv(runs: &[VpfpRun], labels: &[String]) -> String {
    let mut out = String::from(VPFP_COLUMNS);
    out.push('\n');
    for run in runs {
        for r in &run.records {
            for (i, label) in labels.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    num(run.epsilon),
                    num(r.t),
                    r.step,
                    label,
                    num(r.mass[i]),
                    num(r.free_energy),
                    num(r.field_energy),
                    num(r.entropy_production[i]),
                    num(r.dg_info[i][0]),
                    num(r.dg_info[i][1]),
                    num(r.wall_flux[i][0]),
                    num(r.wall_flux[i][1]),
                    num(r.second_moment[i]),
                    num(r.entropy[i]),
                    num(r.min_f),
                    num(r.neutrality),
                    num(r.production_integral),
                    num(r.boundary_integral),
                );
            }
        }
    }
    out
}

pub const ENERGY_COLUMNS: &str = "epsilon,t,free_energy,dissipation_bulk,dissipation_boundary,energy_balance";

/// Free energy and accumulated dissipation per output time.
pub fn energy_csv(runs: &[VpfpRun]) -> String {
    let mut out = String::from(ENERGY_COLUMNS);
    out.push('\n');
    for run in runs {
        let e = run.epsilon;
        for r in &run.records {
            let bulk = r.production_integral / (e * e);
            let boundary = r.boundary_integral / e;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                num(e),
                num(r.t),
                num(r.free_energy),
                num(bulk),
                num(boundary),
                num(r.free_energy + bulk + boundary)
            );
        }
    }
    out
}

pub const PNP_COLUMNS: &str = "t,species,mass,energy,dissipation,boltzmann_residual";

pub fn pnp_csv(records: &[PnpDiagnostics], labels: &[String]) -> String {
    let mut out = String::from(PNP_COLUMNS);
    out.push('\n');
    for r in records {
        for (i, label) in labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                num(r.t),
                label,
                num(r.mass[i]),
                num(r.energy),
                num(r.dissipation),
                num(r.boltzmann_residual[i])
            );
        }
    }
    out
}

pub const SAMPLE_COLUMNS: &str = "epsilon,t,species,kinetic_gap,density_gap,potential_gap,ck_lhs,ck_rhs,\
ls_lhs,ls_rhs,remainder_weighted,remainder_second,remainder_first";

pub fn sweep_samples_csv(result: &SweepResult, labels: &[String]) -> String {
    let mut out = String::from(SAMPLE_COLUMNS);
    out.push('\n');
    for run in &result.runs {
        for s in &run.samples {
            for (i, label) in labels.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    num(run.epsilon),
                    num(s.t),
                    label,
                    num(s.kinetic_gap[i]),
                    num(s.density_gap[i]),
                    num(s.potential_gap),
                    num(s.ck[i].0),
                    num(s.ck[i].1),
                    num(s.logsobolev[i].0),
                    num(s.logsobolev[i].1),
                    num(s.remainder[i].weighted),
                    num(s.remainder[i].second),
                    num(s.remainder[i].first),
                );
            }
        }
    }
    out
}

/// One row per epsilon with sup-over-samples gaps per species, the current
/// discrepancies and the uniform-bound monitors.
pub fn sweep_summary_csv(result: &SweepResult, labels: &[String]) -> String {
    let mut header = vec!["epsilon".to_string(), "steps".to_string()];
    for l in labels {
        header.push(format!("density_gap_{l}"));
    }
    for l in labels {
        header.push(format!("kinetic_gap_{l}"));
    }
    header.push("potential_gap".into());
    header.push("current_kappa_over_zeta".into());
    header.push("current_one_over_zeta".into());
    header.extend(crate::limit::Monitors::NAMES.iter().map(|n| format!("sup_{n}")));
    let mut out = header.join(",");
    out.push('\n');
    for (k, run) in result.runs.iter().enumerate() {
        let mut row = vec![num(run.epsilon), run.run.steps.to_string()];
        row.extend(result.sup_density_gap[k].iter().map(|&g| num(g)));
        row.extend(result.sup_kinetic_gap[k].iter().map(|&g| num(g)));
        row.push(num(result.sup_potential_gap[k]));
        row.push(num(result.current.kappa_over_zeta[k]));
        row.push(num(result.current.one_over_zeta[k]));
        row.extend(run.monitors.values().iter().map(|&m| num(m)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn sweep_orders_csv(result: &SweepResult, labels: &[String]) -> String {
    let mut out = String::from("quantity,species,slope,intercept,residual,excluded\n");
    for (name, fits) in [("density_gap", &result.density_order), ("kinetic_gap", &result.kinetic_order)] {
        for (label, fit) in labels.iter().zip(fits) {
            match fit {
                Some(f) => {
                    let excluded: Vec<String> = f.excluded.iter().map(|i| i.to_string()).collect();
                    let _ = writeln!(
                        out,
                        "{name},{label},{},{},{},{}",
                        num(f.slope),
                        num(f.intercept),
                        num(f.residual),
                        excluded.join(";")
                    );
                }
                None => {
                    let _ = writeln!(out, "{name},{label},NaN,NaN,NaN,");
                }
            }
        }
    }
    out
}

fn plot_script(command: Command, epsilons: &[f64]) -> String {
    let eps_list: Vec<String> = epsilons.iter().map(|e| num(*e)).collect();
    let mut s = String::from(
        "# gnuplot script; run `gnuplot plot.gp` inside the output directory\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 900,600\n",
    );
    match command {
        Command::Vpfp | Command::Sweep => {
            let _ = write!(
                s,
                "set output 'energy.png'\n\
                 set xlabel 't'\n\
                 set ylabel 'free energy'\n\
                 plot for [e in \"{}\"] 'energy.csv' using 2:(abs($1 - e) < 1e-12 * e ? $3 : NaN) \
                 with linespoints title 'eps='.e\n",
                eps_list.join(" ")
            );
        }
        Command::Pnp => {
            s.push_str(
                "set output 'pnp_energy.png'\n\
                 set xlabel 't'\n\
                 set ylabel 'energy'\n\
                 plot 'pnp.csv' using 1:4 with lines title 'e(t)'\n",
            );
        }
        Command::Checks => {}
    }
    if command == Command::Sweep {
        s.push_str(
            "set output 'gaps.png'\n\
             set logscale xy\n\
             set xlabel 'epsilon'\n\
             set ylabel 'sup over samples'\n\
             plot 'sweep_summary.csv' using 1:3 with linespoints title 'density gap (first species)', \\\n\
             \x20    '' using 1:(column('potential_gap')) with linespoints title 'potential gap'\n",
        );
    }
    s
}

fn manifest(
    command: Command,
    config: Option<&RunConfig>,
    started: SystemTime,
    elapsed: f64,
    outputs: &[OutputFile],
    extra: serde_json::Value,
) -> serde_json::Value {
    let config_toml = config.map(|c| c.to_toml_string());
    let grid = config.and_then(|c| c.phase_grid().ok()).map(|g| {
        json!({"nx": g.nx, "nv": g.nv, "length": g.length, "v_max": g.v_max, "dx": g.dx, "dv": g.dv})
    });
    json!({
        "tool": "vpfp-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.as_str(),
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_clock_seconds": elapsed,
        "config": config,
        "config_sha256": config_toml.as_deref().map(|t| sha256_hex(t.as_bytes())),
        "grid": grid,
        "scheme": {
            "splitting_order": SPLITTING_ORDER,
            "x_transport": "first-order upwind, conservative, explicit",
            "v_transport": "first-order upwind, zero flux at +-v_max",
            "collision": "backward Euler, exponentially fitted (Chang-Cooper) fluxes",
            "reflection": config.map(|c| c.reflection.as_str()),
            "wall_trace": "upwind face values of the boundary cells",
            "entropy_production": "forward differences of sqrt(f/M), arithmetic-mean Maxwellian face weights",
            "time_step": "cfl * eps * min(dx / v_max, dv / (max kappa |z| max|E|))",
            "pnp": "Scharfetter-Gummel fluxes, backward Euler, Gummel iteration to convergence",
            "diffusivity_mode": config.map(|c| c.pnp.diffusivity.as_str()),
        },
        "tolerances": {
            "neutrality": NEUTRALITY_TOL,
            "dissipation_per_step": DISSIPATION_TOL_PER_STEP,
            "inequalities": INEQUALITY_TOL,
            "mass_per_step": MASS_TOL_PER_STEP,
            "wall_flux": "1e-14 * max(1, 1/eps)",
            "gummel": crate::pnp::GUMMEL_TOL,
        },
        "results": extra,
        "outputs": outputs,
    })
}

fn finish(
    mut sink: Sink,
    mut outcome: Outcome,
    command: Command,
    config: Option<&RunConfig>,
    started: SystemTime,
    clock: Instant,
    extra: serde_json::Value,
) -> Result<Outcome> {
    let value = manifest(
        command,
        config,
        started,
        clock.elapsed().as_secs_f64(),
        &sink.outputs,
        extra,
    );
    let text = serde_json::to_string_pretty(&value)?;
    fs::write(sink.dir.join("manifest.json"), &text)?;
    outcome.outputs = std::mem::take(&mut sink.outputs);
    Ok(outcome)
}

fn check_run(run: &VpfpRun, outcome: &mut Outcome) {
    let e = run.epsilon;
    if !run.dissipation.passed() {
        for v in &run.dissipation.violations {
            outcome
                .violations
                .push(format!("eps {e}: dissipation {:?} at t={} by {:e}", v.kind, v.t, v.amount));
        }
    }
    if run.min_f < 0.0 {
        outcome.violations.push(format!("eps {e}: negative f {:e}", run.min_f));
    }
    if run.mass_drift > MASS_TOL_PER_STEP * run.steps.max(1) as f64 {
        outcome
            .violations
            .push(format!("eps {e}: mass drift {:e} over {} steps", run.mass_drift, run.steps));
    }
    if run.max_wall_flux > wall_flux_tolerance(e) {
        outcome
            .violations
            .push(format!("eps {e}: wall current {:e}", run.max_wall_flux));
    }
}

pub fn run_vpfp(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut sink = Sink::new(out)?;
    let options = SweepOptions::from_config(config);
    let mut runs = Vec::new();
    let mut outcome = Outcome::default();
    for eps in config.epsilons() {
        let mut solver = VpfpSolver::from_config(config, eps)?;
        let run = run_monitored(&mut solver, &options.sample_times, options.tol_per_step, |_, _| {}, |_| Ok(()))?;
        check_run(&run, &mut outcome);
        outcome.summary.push(format!(
            "eps {eps}: {} steps, E(0) {:e}, E(T) {:e}, worst dissipation excess {:e}",
            run.steps,
            run.records[0].free_energy,
            run.records.last().map_or(f64::NAN, |r| r.free_energy),
            run.dissipation.worst_excess
        ));
        runs.push(run);
    }
    let labels: Vec<String> = config.species_params().into_iter().map(|s| s.label).collect();
    sink.write("vpfp.csv", &vpfp_csv(&runs, &labels))?;
    sink.write("energy.csv", &energy_csv(&runs))?;
    sink.write("plot.gp", &plot_script(Command::Vpfp, &config.epsilons()))?;
    let extra = json!({
        "runs": runs.iter().map(|r| json!({
            "epsilon": r.epsilon,
            "steps": r.steps,
            "dissipation": r.dissipation,
            "max_wall_flux": r.max_wall_flux,
            "mass_drift": r.mass_drift,
            "min_f": r.min_f,
        })).collect::<Vec<_>>(),
        "violations": outcome.violations,
    });
    finish(sink, outcome, Command::Vpfp, Some(config), started, clock, extra)
}

pub fn run_pnp(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut sink = Sink::new(out)?;
    let options = SweepOptions::from_config(config);
    let mut solver = PnpSolver::from_config(config)?;
    let mut records = vec![solver.diagnostics()];
    let mut outcome = Outcome::default();
    let m0 = records[0].mass.clone();
    let mut prev = records[0].energy;
    let mut worst_increase: f64 = f64::NEG_INFINITY;
    for &t in &options.sample_times {
        while t - solver.state.t > 1e-12 * t.max(1.0) {
            let dt = solver.dt.min(t - solver.state.t);
            solver.step_with(dt)?;
            let e = solver.diagnostics().energy;
            worst_increase = worst_increase.max(e - prev);
            prev = e;
        }
        records.push(solver.diagnostics());
    }
    if worst_increase > 1e-8 {
        outcome
            .violations
            .push(format!("pnp energy increased by {worst_increase:e} in one step"));
    }
    let last = records.last().expect("initial record present");
    for (m, m_ref) in last.mass.iter().zip(&m0) {
        if (m - m_ref).abs() > 1e-13 * solver.steps.max(1) as f64 * m_ref.abs() {
            outcome.violations.push(format!("pnp mass drift {:e}", m - m_ref));
        }
    }
    if solver.state.density.iter().flatten().any(|&n| n < 0.0) {
        outcome.violations.push("pnp density became negative".into());
    }
    outcome.summary.push(format!(
        "{} steps, e(0) {:e}, e(T) {:e}, largest per-step increase {:e}",
        solver.steps, records[0].energy, last.energy, worst_increase
    ));
    let labels: Vec<String> = config.species_params().into_iter().map(|s| s.label).collect();
    sink.write("pnp.csv", &pnp_csv(&records, &labels))?;
    sink.write("plot.gp", &plot_script(Command::Pnp, &[]))?;
    let extra = json!({
        "steps": solver.steps,
        "worst_energy_increase_per_step": worst_increase,
        "violations": outcome.violations,
    });
    finish(sink, outcome, Command::Pnp, Some(config), started, clock, extra)
}

pub fn run_sweep(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut sink = Sink::new(out)?;
    let options = SweepOptions::from_config(config);
    let epsilons = config.epsilons();
    let result = sweep_epsilon(config, &epsilons, &options)?;
    let mut outcome = Outcome::default();
    for run in &result.runs {
        check_run(&run.run, &mut outcome);
        for s in &run.samples {
            for (i, ((cl, cr), (ll, lr))) in s.ck.iter().zip(&s.logsobolev).enumerate() {
                if cr - cl < -INEQUALITY_TOL {
                    outcome
                        .violations
                        .push(format!("eps {}: CK residual {:e} (species {i}, t={})", run.epsilon, cr - cl, s.t));
                }
                if lr - ll < -INEQUALITY_TOL {
                    outcome
                        .violations
                        .push(format!("eps {}: log-Sobolev residual {:e} (species {i}, t={})", run.epsilon, lr - ll, s.t));
                }
            }
        }
    }
    let labels: Vec<String> = config.species_params().into_iter().map(|s| s.label).collect();
    let vpfp_runs: Vec<VpfpRun> = result.runs.iter().map(|r| r.run.clone()).collect();
    sink.write("sweep_samples.csv", &sweep_samples_csv(&result, &labels))?;
    sink.write("sweep_summary.csv", &sweep_summary_csv(&result, &labels))?;
    sink.write("sweep_orders.csv", &sweep_orders_csv(&result, &labels))?;
    sink.write("vpfp.csv", &vpfp_csv(&vpfp_runs, &labels))?;
    sink.write("energy.csv", &energy_csv(&vpfp_runs))?;
    sink.write("pnp.csv", &pnp_csv(&result.pnp, &labels))?;
    sink.write("plot.gp", &plot_script(Command::Sweep, &epsilons))?;

    let density_decreasing: Vec<bool> = (0..labels.len())
        .map(|i| strictly_decreasing(&result.sup_density_gap.iter().map(|g| g[i]).collect::<Vec<_>>()))
        .collect();
    let kinetic_decreasing: Vec<bool> = (0..labels.len())
        .map(|i| strictly_decreasing(&result.sup_kinetic_gap.iter().map(|g| g[i]).collect::<Vec<_>>()))
        .collect();
    for (i, label) in labels.iter().enumerate() {
        let slope = result.density_order[i].as_ref().map(|f| f.slope);
        outcome.summary.push(format!(
            "{label}: sup density gaps {:?}, order {:?}, decreasing {}",
            result.sup_density_gap.iter().map(|g| g[i]).collect::<Vec<_>>(),
            slope,
            density_decreasing[i]
        ));
    }
    let verdict = match result.current.verdict {
        ModeVerdict::KappaOverZeta => "kappa-over-zeta",
        ModeVerdict::OneOverZeta => "one-over-zeta",
        ModeVerdict::Indistinguishable => "indistinguishable (all kappa = 1)",
    };
    outcome.summary.push(format!(
        "diffusivity verdict: {verdict}; discrepancy kappa/zeta {:?}, 1/zeta {:?}",
        result.current.kappa_over_zeta, result.current.one_over_zeta
    ));
    let extra = json!({
        "epsilons": result.epsilons,
        "sample_times": result.sample_times,
        "sup_density_gap": result.sup_density_gap,
        "sup_kinetic_gap": result.sup_kinetic_gap,
        "sup_potential_gap": result.sup_potential_gap,
        "density_gap_decreasing": density_decreasing,
        "kinetic_gap_decreasing": kinetic_decreasing,
        "density_order": result.density_order,
        "kinetic_order": result.kinetic_order,
        "diffusivity_verdict": result.current,
        "monitors": result.runs.iter().map(|r| json!({"epsilon": r.epsilon, "values": r.monitors})).collect::<Vec<_>>(),
        "dissipation": result.runs.iter().map(|r| json!({"epsilon": r.epsilon, "report": r.run.dissipation})).collect::<Vec<_>>(),
        "violations": outcome.violations,
    });
    finish(sink, outcome, Command::Sweep, Some(config), started, clock, extra)
}

/// One operator identity evaluated by `checks`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

/// Maxwellian null space, the inverse identity `L(-v M~) = v M~` under
/// refinement, and the manufactured Poisson solution.
pub fn operator_checks(kappas: &[f64]) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for &kappa in kappas {
        let v_max = 8.0 * kappa.sqrt();
        let grid = PhaseGrid::new(2, 1.0, 64, v_max)?;
        let r = fp_null_space_residual(kappa, &grid);
        out.push(CheckResult {
            name: format!("null_space_kappa_{kappa}"),
            value: r,
            threshold: "<= 1e-12".into(),
            passed: r <= 1e-12,
        });
        let residuals: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&nv| PhaseGrid::new(2, 1.0, nv, v_max).map(|g| fp_inverse_check(kappa, &g)))
            .collect::<Result<_>>()?;
        for (w, nv) in residuals.windows(2).zip([32, 64]) {
            let ratio = w[0] / w[1];
            out.push(CheckResult {
                name: format!("inverse_ratio_kappa_{kappa}_nv_{nv}"),
                value: ratio,
                threshold: "in [3.5, 4.5]".into(),
                passed: in_range(ratio, 3.5, 4.5),
            });
        }
    }
    let errors: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&nx| -> Result<f64> {
            let g = PhaseGrid::new(nx, 1.0, 2, 1.0)?;
            let rho: Vec<f64> = g.x.iter().map(|x| (std::f64::consts::PI * x).cos()).collect();
            let f = solve_poisson_charge(&rho, 1.0, &g)?;
            Ok(g.x
                .iter()
                .zip(&f.phi)
                .map(|(x, p)| (p - (std::f64::consts::PI * x).cos() / std::f64::consts::PI.powi(2)).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    out.push(CheckResult {
        name: "poisson_error_nx_64".into(),
        value: errors[1],
        threshold: "<= 1.5e-3".into(),
        passed: errors[1] <= 1.5e-3,
    });
    for (w, nx) in errors.windows(2).zip([32, 64, 128]) {
        let ratio = w[0] / w[1];
        out.push(CheckResult {
            name: format!("poisson_ratio_nx_{nx}"),
            value: ratio,
            threshold: "in [3.7, 4.3]".into(),
            passed: in_range(ratio, 3.7, 4.3),
        });
    }
    Ok(out)
}

pub fn run_checks(config: Option<&RunConfig>, out: &Path) -> Result<Outcome> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut sink = Sink::new(out)?;
    let mut kappas: Vec<f64> = config
        .map(|c| c.species.iter().map(|s| s.kappa).collect())
        .unwrap_or_else(|| vec![1.0]);
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    let checks = operator_checks(&kappas)?;
    let mut outcome = Outcome::default();
    let mut csv = String::from("name,value,threshold,passed\n");
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{}", c.name, num(c.value), c.threshold, c.passed);
        outcome
            .summary
            .push(format!("{}: {:e} ({}) {}", c.name, c.value, c.threshold, if c.passed { "ok" } else { "FAILED" }));
        if !c.passed {
            outcome.violations.push(format!("{} = {:e} outside {}", c.name, c.value, c.threshold));
        }
    }
    sink.write("checks.csv", &csv)?;
    let extra = json!({ "checks": checks });
    finish(sink, outcome, Command::Checks, config, started, clock, extra)
}

/// Dispatch a command; `checks` does not need a configuration.
pub fn run(command: Command, config: Option<&RunConfig>, out: &Path) -> Result<Outcome> {
    let default;
    let cfg = match config {
        Some(c) => c,
        None => {
            default = crate::config::acceptance_config();
            &default
        }
    };
    match command {
        Command::Vpfp => run_vpfp(cfg, out),
        Command::Pnp => run_pnp(cfg, out),
        Command::Sweep => run_sweep(cfg, out),
        Command::Checks => run_checks(config, out),
    }
}
