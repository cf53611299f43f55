use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nlmc::basis::{basis_decay_profile, BoundaryPolicy};
use nlmc::experiments::config::{parse_config, BasisKind, ExperimentConfig};
use nlmc::experiments::export::{decay_csv, export_field, write_text};
use nlmc::experiments::study::{run_study, StudyPlan};
use nlmc::experiments::Scene;
use nlmc::geometry::Layers;
use nlmc::upscale::RhsMode;
use nlmc::{NlmcError, Result};

#[derive(Parser)]
#[command(name = "nlmc", version, about = "Non-local multi-continua upscaling for fractured porous media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, global = true, env = "NLMC_OUT", default_value = "nlmc_out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    basis: Option<BasisArg>,
    #[arg(long = "bc-policy", global = true, value_enum)]
    bc_policy: Option<PolicyArg>,
    #[arg(long, global = true, value_enum)]
    rhs: Option<RhsArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Simplified,
    Spectral,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Physical,
    Dirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum RhsArg {
    Galerkin,
    Block,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fine steady problem and export the field.
    SolveFine { config: PathBuf },
    /// Build bases for every coarse grid with the given oversampling.
    BuildBasis {
        config: PathBuf,
        #[arg(long)]
        layers: Layers,
    },
    /// Steady error study.
    Upscale { config: PathBuf },
    /// Transient error study.
    Transient { config: PathBuf },
    /// Steady and transient studies with all exports.
    Report { config: PathBuf },
}

fn load(path: &Path, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(b) = common.basis {
        cfg.options.basis = match b {
            BasisArg::Simplified => BasisKind::Simplified,
            BasisArg::Spectral => BasisKind::Spectral,
        };
    }
    if let Some(p) = common.bc_policy {
        cfg.options.bc_policy = match p {
            PolicyArg::Physical => BoundaryPolicy::PhysicalOnDomainBoundary,
            PolicyArg::Dirichlet => BoundaryPolicy::DirichletEverywhere,
        };
    }
    if let Some(r) = common.rhs {
        cfg.options.rhs = match r {
            RhsArg::Galerkin => RhsMode::Galerkin,
            RhsArg::Block => RhsMode::BlockIntegral,
        };
    }
    Ok(cfg)
}

fn study(cfg: &ExperimentConfig, out: &Path, steady: bool, transient: bool, details: bool) -> Result<serde_json::Value> {
    let report = run_study(cfg, &StudyPlan { steady, transient, out: Some(out.to_path_buf()), details })?;
    Ok(json!({
        "out": out,
        "steady": report.steady,
        "transient": report.transient,
    }))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| NlmcError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let out = &cli.common.out;
    match &cli.command {
        Command::SolveFine { config } => {
            let scene = Scene::new(load(config, &cli.common)?)?;
            let u = scene.fine_steady()?;
            let path = out.join("fine_steady.vtk");
            export_field(&scene.mesh, &[("u_fine", &u)], &path)?;
            Ok(json!({ "nodes": u.len(), "field": path }))
        }
        Command::BuildBasis { config, layers } => {
            let cfg = load(config, &cli.common)?;
            let scene = Scene::new(cfg.clone())?;
            let mut levels = Vec::new();
            for spec in &cfg.coarse {
                let level = scene.level(*spec)?;
                let set = level.bases(*layers)?;
                let center = level.coarse.block(level.coarse.nx / 2, level.coarse.ny / 2);
                let k = set.bases.iter().position(|b| b.block == center).unwrap_or(0);
                let case = out.join(format!("H{}_L{layers}", level.h()));
                let psi = set.bases[k].to_dense(&scene.mesh);
                export_field(&scene.mesh, &[("psi", &psi)], &case.join("center_basis.vtk"))?;
                write_text(&case.join("decay.csv"), &decay_csv(&basis_decay_profile(&set.bases[k], &level.coarse)))?;
                levels.push(json!({
                    "H": level.h(),
                    "bases": set.len(),
                    "max_constraint_residual": set.max_constraint_residual(),
                }));
            }
            Ok(json!({ "layers": layers.to_string(), "levels": levels }))
        }
        Command::Upscale { config } => study(&load(config, &cli.common)?, out, true, false, true),
        Command::Transient { config } => study(&load(config, &cli.common)?, out, false, true, false),
        Command::Report { config } => study(&load(config, &cli.common)?, out, true, true, true),
    }
}

fn error_kind(e: &NlmcError) -> &'static str {
    match e {
        NlmcError::Context { source, .. } => error_kind(source),
        NlmcError::Config { .. } => "config",
        NlmcError::IncompatibleSource { .. } => "incompatible_source",
        NlmcError::Io(_) => "io",
        NlmcError::RedundantConstraint { .. } => "redundant_constraint",
        NlmcError::Residual { .. } | NlmcError::SingularSystem(_) | NlmcError::NotPositiveDefinite(_) => "solver",
        _ => "invalid_input",
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let pointer = match &e {
                NlmcError::Config { pointer, .. } => Some(pointer.clone()),
                _ => None,
            };
            eprintln!("{}", json!({ "error": e.to_string(), "kind": error_kind(&e), "pointer": pointer }));
            ExitCode::FAILURE
        }
    }
}
