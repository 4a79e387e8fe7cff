use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vpfp_core::config::{acceptance_config, load_config, RunConfig};
use vpfp_core::io::{run, Command};
use vpfp_core::pnp::DiffusivityMode;
use vpfp_core::transport::ReflectionMode;

#[derive(Parser)]
#[command(name = "vpfp-lab", version, about = "Kinetic and drift-diffusion ion transport solvers")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the kinetic solver for each epsilon in the config
    Vpfp(Opts),
    /// Run the drift-diffusion solver
    Pnp(Opts),
    /// Run the kinetic solver over an epsilon sweep and compare against drift-diffusion
    Sweep(Opts),
    /// Evaluate operator identities and the Poisson manufactured solution
    Checks(Opts),
}

#[derive(Args)]
struct Opts {
    /// TOML run configuration; defaults to the built-in acceptance setup
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit nonzero when an invariant is violated
    #[arg(long)]
    strict: bool,
    /// Wall reflection mode: diffuse, specular or inverse
    #[arg(long, value_parser = parse_reflection)]
    mode: Option<ReflectionMode>,
    /// Limit diffusivity: kappa-over-zeta or one-over-zeta
    #[arg(long, value_parser = parse_diffusivity)]
    diffusivity: Option<DiffusivityMode>,
}

fn parse_reflection(s: &str) -> Result<ReflectionMode, String> {
    s.parse()
}

fn parse_diffusivity(s: &str) -> Result<DiffusivityMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn load(opts: &Opts) -> vpfp_core::Result<Option<RunConfig>> {
    let mut cfg = match &opts.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    if opts.mode.is_some() || opts.diffusivity.is_some() {
        let c = cfg.get_or_insert_with(acceptance_config);
        if let Some(m) = opts.mode {
            c.reflection = m;
        }
        if let Some(d) = opts.diffusivity {
            c.pnp.diffusivity = d;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Sub::Vpfp(o) => (Command::Vpfp, o),
        Sub::Pnp(o) => (Command::Pnp, o),
        Sub::Sweep(o) => (Command::Sweep, o),
        Sub::Checks(o) => (Command::Checks, o),
    };
    let outcome = match load(opts).and_then(|cfg| run(command, cfg.as_ref(), &opts.out)) {
        Ok(o) => o,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for line in &outcome.summary {
        println!("{line}");
    }
    for file in &outcome.outputs {
        println!("wrote {} ({} bytes)", opts.out.join(&file.file).display(), file.bytes);
    }
    for v in &outcome.violations {
        eprintln!("violation: {v}");
    }
    if opts.strict && !outcome.passed() {
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
