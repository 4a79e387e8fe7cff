//! Acceptance criteria 1-10: one PASS/FAIL line each, nonzero exit on failure.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use vpfp_core::config::{acceptance_config, DensityProfile, RunConfig};
use vpfp_core::grid::{PhaseGrid, SpeciesParams};
use vpfp_core::io::{operator_checks, run_sweep};
use vpfp_core::limit::{strictly_decreasing, sweep_epsilon, ModeVerdict, SweepOptions, SweepResult};
use vpfp_core::pnp::{DiffusivityMode, PnpSolver};
use vpfp_core::transport::ReflectionMode;
use vpfp_core::vpfp::VpfpSolver;

const WALL_FLUX_TOL: f64 = 1e-14;
const INEQUALITY_TOL: f64 = 1e-8;
const ORDER_MIN: f64 = 0.8;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn criterion_operators() -> Verdict {
    let clock = Instant::now();
    let checks = operator_checks(&[1.0]).expect("operator checks");
    let elapsed = clock.elapsed().as_secs_f64();
    let ops: Vec<_> = checks.iter().filter(|c| !c.name.starts_with("poisson")).collect();
    let ok = ops.iter().all(|c| c.passed) && elapsed < 1.0;
    let detail = ops
        .iter()
        .map(|c| format!("{}={:.3e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join(" ");
    verdict(ok, format!("{detail} time={elapsed:.3}s"))
}

fn criterion_poisson() -> Verdict {
    let clock = Instant::now();
    let checks = operator_checks(&[1.0]).expect("operator checks");
    let elapsed = clock.elapsed().as_secs_f64();
    let poisson: Vec<_> = checks.iter().filter(|c| c.name.starts_with("poisson")).collect();
    let ok = poisson.iter().all(|c| c.passed) && elapsed < 1.0;
    let detail = poisson
        .iter()
        .map(|c| format!("{}={:.4e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join(" ");
    verdict(ok, format!("{detail} time={elapsed:.3}s"))
}

fn criterion_equilibrium() -> Verdict {
    let grid = PhaseGrid::new(64, 1.0, 64, 8.0).expect("grid");
    let species = vec![
        SpeciesParams::new("cation", 1, 1.0, 1.0).expect("species"),
        SpeciesParams::new("anion", -1, 1.0, 1.0).expect("species"),
    ];
    let mut s = VpfpSolver::well_prepared(
        grid,
        species,
        &[vec![1.0; 64], vec![1.0; 64]],
        vec![0.0; 64],
        0.25,
        1.0,
        ReflectionMode::Diffuse,
    )
    .expect("solver");
    let m0 = s.masses();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let before = s.state.f.clone();
        let dt = s.stable_dt();
        s.step(dt).expect("step");
        let change = before
            .iter()
            .flatten()
            .zip(s.state.f.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(change);
    }
    let drift = s
        .masses()
        .iter()
        .zip(&m0)
        .map(|(m, r)| ((m - r) / r).abs())
        .fold(0.0, f64::max);
    verdict(
        worst <= 1e-10 && drift <= 1e-12,
        format!("max change per step {worst:.3e}, relative mass drift {drift:.3e}"),
    )
}

fn criterion_dissipation(sweeps: &[(&str, &SweepResult)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, r) in sweeps {
        for run in &r.runs {
            let d = &run.run.dissipation;
            ok &= d.passed();
            parts.push(format!(
                "{name} eps={} worst increase/step={:.2e} violations={}",
                run.epsilon,
                d.worst_increase_per_step,
                d.violations.len()
            ));
        }
    }
    verdict(ok, parts.join("; "))
}

fn criterion_wall_flux(sweeps: &[(&str, &SweepResult)]) -> Verdict {
    let worst = sweeps
        .iter()
        .flat_map(|(_, r)| r.runs.iter().map(|run| run.run.max_wall_flux))
        .fold(0.0, f64::max);
    verdict(worst <= WALL_FLUX_TOL, format!("max |J.n| at walls {worst:.3e}"))
}

fn criterion_inequalities(sweeps: &[(&str, &SweepResult)]) -> Verdict {
    let mut ck = f64::INFINITY;
    let mut ls = f64::INFINITY;
    for (_, r) in sweeps {
        for run in &r.runs {
            for s in &run.samples {
                for ((cl, cr), (ll, lr)) in s.ck.iter().zip(&s.logsobolev) {
                    ck = ck.min(cr - cl);
                    ls = ls.min(lr - ll);
                }
            }
        }
    }
    verdict(
        ck >= -INEQUALITY_TOL && ls >= -INEQUALITY_TOL,
        format!("min CK residual {ck:.3e}, min log-Sobolev residual {ls:.3e}"),
    )
}

fn criterion_limit(r: &SweepResult, elapsed: f64) -> Verdict {
    let mut ok = elapsed <= 600.0;
    let mut parts = Vec::new();
    for i in 0..r.sup_density_gap[0].len() {
        let gaps: Vec<f64> = r.sup_density_gap.iter().map(|g| g[i]).collect();
        let kinetic: Vec<f64> = r.sup_kinetic_gap.iter().map(|g| g[i]).collect();
        let slope = r.density_order[i].as_ref().map_or(f64::NAN, |f| f.slope);
        ok &= strictly_decreasing(&gaps) && slope >= ORDER_MIN && strictly_decreasing(&kinetic);
        parts.push(format!(
            "species {i}: density gaps {} order {slope:.3}, kinetic gaps {}",
            fmt_list(&gaps),
            fmt_list(&kinetic)
        ));
    }
    verdict(ok, format!("{} time={elapsed:.1}s", parts.join("; ")))
}

fn criterion_pnp(cfg: &RunConfig) -> Verdict {
    let mut s = PnpSolver::from_config(cfg).expect("pnp");
    let mut prev = s.diagnostics().energy;
    let mut worst = f64::NEG_INFINITY;
    while s.state.t < cfg.final_time - 1e-12 {
        s.step().expect("pnp step");
        let e = s.diagnostics().energy;
        worst = worst.max(e - prev);
        prev = e;
    }

    let grid = PhaseGrid::new(128, 1.0, 2, 1.0).expect("grid");
    let zeta = 1.0;
    let n0: Vec<f64> = grid.x.iter().map(|x| 1.0 + 0.1 * (PI * x).cos()).collect();
    let sp = vec![SpeciesParams::new("neutral", 0, 1.0, zeta).expect("species")];
    let mut h = PnpSolver::new(grid.clone(), sp, vec![n0], vec![0.0; 128], 1.0, 1e-4, DiffusivityMode::default())
        .expect("pnp");
    h.advance_to(0.1).expect("advance");
    let amp: f64 = h.state.density[0]
        .iter()
        .zip(&grid.x)
        .map(|(n, x)| (n - 1.0) * (PI * x).cos())
        .sum::<f64>()
        * grid.dx
        * 2.0
        / 0.1;
    let rel = (amp / (-PI * PI * 0.1 / zeta).exp() - 1.0).abs();
    verdict(
        worst <= 1e-8 && rel <= 1e-2,
        format!("largest energy increase per step {worst:.3e}, heat-mode relative error {rel:.3e}"),
    )
}

fn criterion_verdict(acceptance: &SweepResult, discriminating: &SweepResult) -> Verdict {
    let a = &acceptance.current;
    let d = &discriminating.current;
    let ok = a.verdict == ModeVerdict::Indistinguishable
        && strictly_decreasing(&a.kappa_over_zeta)
        && d.verdict == ModeVerdict::KappaOverZeta
        && strictly_decreasing(&d.kappa_over_zeta);
    verdict(
        ok,
        format!(
            "acceptance: {:?} discrepancy {}; kappa=(2,0.5): {:?} kappa/zeta {} vs 1/zeta {}",
            a.verdict,
            fmt_list(&a.kappa_over_zeta),
            d.verdict,
            fmt_list(&d.kappa_over_zeta),
            fmt_list(&d.one_over_zeta)
        ),
    )
}

fn criterion_determinism(cfg: &RunConfig) -> Verdict {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let first = run_sweep(cfg, a.path()).expect("sweep");
    run_sweep(cfg, b.path()).expect("sweep");
    let mut compared = 0;
    let mut differing = Vec::new();
    for out in first.outputs.iter().filter(|o| o.file.ends_with(".csv")) {
        let x = fs::read(a.path().join(&out.file)).expect("read");
        let y = fs::read(b.path().join(&out.file)).expect("read");
        compared += 1;
        if x != y {
            differing.push(out.file.clone());
        }
    }
    verdict(
        compared > 0 && differing.is_empty(),
        format!("{compared} CSV files compared, differing: {differing:?}"),
    )
}

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn sweep(cfg: &RunConfig) -> (SweepResult, f64) {
    let clock = Instant::now();
    let r = sweep_epsilon(cfg, &cfg.epsilons(), &SweepOptions::from_config(cfg)).expect("sweep");
    (r, clock.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let cfg = acceptance_config();
    let mut opposite = cfg.clone();
    opposite.species[1].initial = DensityProfile::Cosine {
        mean: 1.0,
        amplitude: -0.2,
        mode: 1,
    };
    let mut discriminating = cfg.clone();
    discriminating.species[0].kappa = 2.0;
    discriminating.species[1].kappa = 0.5;

    let (acc, acc_time) = sweep(&cfg);
    let (opp, _) = sweep(&opposite);
    let (disc, _) = sweep(&discriminating);
    let kinetic = [("acceptance", &acc), ("opposite-sign", &opp)];

    let results = [
        ("1 operator identities", criterion_operators()),
        ("2 poisson manufactured solution", criterion_poisson()),
        ("3 equilibrium stationarity", criterion_equilibrium()),
        ("4 dissipation inequality", criterion_dissipation(&kinetic)),
        ("5 wall flux", criterion_wall_flux(&kinetic)),
        ("6 CK and log-Sobolev", criterion_inequalities(&kinetic)),
        ("7 diffusion limit", criterion_limit(&acc, acc_time)),
        ("8 PNP energy and heat mode", criterion_pnp(&cfg)),
        ("9 diffusivity verdict", criterion_verdict(&acc, &disc)),
        ("10 determinism", criterion_determinism(&cfg)),
    ];
    let mut all = true;
    for (name, v) in &results {
        println!("{} criterion {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        all &= v.passed;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
