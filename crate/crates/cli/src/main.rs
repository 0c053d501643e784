use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use linmhd_core::harness::{parse_levels, rate_table, run_case, RunConfig};
use linmhd_core::mesh::{generate_cube_mesh, generate_lshape_mesh};
use linmhd_core::msh::write_msh;

#[derive(Parser)]
#[command(name = "linmhd", version, about = "Stabilized finite element solver for linearized MHD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study for a manufactured case.
    Run(RunArgs),
    /// Write a structured mesh in ASCII Gmsh MSH 2.2 format.
    Mesh(MeshArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// test1, test2 or patch.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    mu_a: Option<f64>,
    #[arg(long)]
    mu_c: Option<f64>,
    #[arg(long)]
    mu_j1: Option<f64>,
    #[arg(long)]
    mu_j2: Option<f64>,
    /// Comma separated mesh parameters, e.g. 1,2,3,4.
    #[arg(long)]
    levels: Option<String>,
    /// Solve on a single imported .msh mesh instead of generated levels.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Cube,
    Lshape,
}

#[derive(clap::Args)]
struct MeshArgs {
    #[arg(long, value_enum, default_value = "cube")]
    domain: DomainArg,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_key_values_with(&text, args.case.as_deref(), args.k)
                .with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::new(args.case.as_deref().unwrap_or("test1"), args.k.unwrap_or(1)),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    apply!(nu, sigma, mu_a, mu_c, mu_j1, mu_j2);
    if let Some(l) = &args.levels {
        cfg.levels = parse_levels(l)?;
    }
    if args.mesh.is_some() {
        cfg.mesh = args.mesh.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    println!(
        "case={} k={} nu={:e} sigma={:e} mu_a={} mu_c={} mu_j1={} mu_j2={}",
        cfg.case, cfg.k, cfg.nu, cfg.sigma, cfg.mu_a, cfg.mu_c, cfg.mu_j1, cfg.mu_j2
    );
    let result = run_case(&cfg)?;
    print!("{}", rate_table(&result.reports()));
    for l in &result.levels {
        println!(
            "n={} residual={:.2e} div={:.2e} grad_defect={:.2e} assemble={:.2}s solve={:.2}s",
            l.report.level,
            l.residual,
            l.structure.div_ratio,
            l.structure.gradient_defect,
            l.assemble_seconds,
            l.solve_seconds
        );
    }
    if let Some(out) = &cfg.out {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Mesh(args) => {
            let mesh = match args.domain {
                DomainArg::Cube => generate_cube_mesh(args.n),
                DomainArg::Lshape => generate_lshape_mesh(args.n),
            };
            std::fs::write(&args.out, write_msh(&mesh)).with_context(|| format!("writing {}", args.out.display()))?;
            Ok(())
        }
    }
}
