use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use calderon_core::experiment::{emit_table, run_experiment, ExperimentConfig};
use calderon_core::verify::run_invariants;
use clap::{Args, Parser, Subcommand};

/// Condition numbers of lumped-mass operator preconditioners on closed curves.
#[derive(Parser)]
#[command(name = "calderon-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement sweep and print one row of condition numbers per level.
    Run(RunArgs),
    /// Check the invariant suite; exits nonzero if any property fails.
    Verify {
        /// Finest corner-refinement level used by the checks.
        #[arg(long, default_value_t = 2)]
        max_level: usize,
    },
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct RunArgs {
    /// `key = value` file; keys as the long flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// square | circle | ellipse
    #[arg(long)]
    geometry: Option<String>,
    /// Side (square) or diameter (circle, major axis of the ellipse); at most 1/√2 for the square.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    ellipse_ratio: Option<String>,
    /// Polynomial degree of the trial space.
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    /// corner | uniform
    #[arg(long)]
    refine: Option<String>,
    #[arg(long)]
    panels_per_chart: Option<String>,
    /// Corner bisections per level.
    #[arg(long)]
    corner_factor: Option<String>,
    /// Comma list, e.g. lumped,mass,richardson:2,jacobi
    #[arg(long)]
    precond: Option<String>,
    /// Weight of the rank-one stabilization of the hypersingular operator, or `balanced`.
    #[arg(long)]
    alpha: Option<String>,
    /// Richardson damping; default from the reference element.
    #[arg(long)]
    omega_override: Option<String>,
    /// Gauss points per panel for separated pairs.
    #[arg(long)]
    quad_n: Option<String>,
    /// exact | mesh-averaged
    #[arg(long)]
    inner_product: Option<String>,
    /// csv | md
    #[arg(long)]
    format: Option<String>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    output: Option<String>,
    /// Directory receiving A, B, M, D and the mesh of every level.
    #[arg(long)]
    dump_matrices: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("geometry", &self.geometry),
            ("scale", &self.scale),
            ("ellipse_ratio", &self.ellipse_ratio),
            ("degree", &self.degree),
            ("levels", &self.levels),
            ("refine", &self.refine),
            ("panels_per_chart", &self.panels_per_chart),
            ("corner_factor", &self.corner_factor),
            ("precond", &self.precond),
            ("alpha", &self.alpha),
            ("omega_override", &self.omega_override),
            ("quad_n", &self.quad_n),
            ("inner_product", &self.inner_product),
            ("format", &self.format),
            ("output", &self.output),
            ("dump_matrices", &self.dump_matrices),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let rows = run_experiment(&cfg)?;
    let table = emit_table(&rows, &cfg.preconds, cfg.format);
    match &cfg.output {
        Some(p) => std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Command::Verify { max_level } => {
            let checks = run_invariants(max_level);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
