//! Assembles one level and prints sizes, timings and pivoting statistics.
//!
//! `cargo run --release --example solver_stats -- <n> <k> [lshape]`

use std::time::Instant;

use linmhd_core::assembly::{assemble_system, solve_system, AssemblyOptions};
use linmhd_core::cases::{ManufacturedCase, Test1, Test2};
use linmhd_core::mesh::{generate_cube_mesh, generate_lshape_mesh};
use linmhd_core::{Discretization, ProblemParams, Triangulation};

fn main() -> linmhd_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: solver_stats <n> <k> [lshape]");
        std::process::exit(2);
    }
    let n: usize = args[0].parse().expect("n");
    let k: usize = args[1].parse().expect("k");
    let lshape = args.get(2).is_some_and(|a| a == "lshape");
    let t = Instant::now();
    let mesh = if lshape { generate_lshape_mesh(n) } else { generate_cube_mesh(n) };
    let disc = Discretization::new(Triangulation::new(mesh)?, k)?;
    let params = ProblemParams::benchmark(k, 1.0);
    let case: &dyn ManufacturedCase = if lshape { &Test2 } else { &Test1 };
    let sys = assemble_system(&disc, &params, case, &AssemblyOptions::for_degree(k))?;
    println!("unknowns {}  nnz {}  assembly {:.2}s", sys.layout.total(), sys.matrix.nnz(), t.elapsed().as_secs_f64());
    let s = solve_system(&sys)?;
    println!(
        "factor {:.2}s  solve {:.2}s  residual {:.1e}  refinement {}",
        s.factor_seconds, s.solve_seconds, s.residual, s.refinement_steps
    );
    println!(
        "largest front {}  delayed {}  off-diagonal pivots {}  nnz(L) {}  nnz(U) {}",
        s.stats.max_front, s.stats.delayed_pivots, s.stats.off_diagonal_pivots, s.stats.nnz_l, s.stats.nnz_u
    );
    Ok(())
}
