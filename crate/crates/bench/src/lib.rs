//! Shared fixtures for the benchmarks.

use linmhd_core::assembly::{assemble_system, AssemblyOptions, Discretization, ProblemParams, SparseSystem};
use linmhd_core::cases::Test1;
use linmhd_core::mesh::{generate_cube_mesh, Triangulation};

/// Test 1 on the cube with `n` subdivisions per side, degree `k`, `nu = 1`.
pub struct Fixture {
    pub disc: Discretization,
    pub params: ProblemParams,
}

impl Fixture {
    pub fn cube(n: usize, k: usize) -> Self {
        let disc = Discretization::new(Triangulation::new(generate_cube_mesh(n)).unwrap(), k).unwrap();
        Self { disc, params: ProblemParams::benchmark(k, 1.0) }
    }

    pub fn system(&self) -> SparseSystem {
        assemble_system(&self.disc, &self.params, &Test1, &AssemblyOptions::for_degree(self.disc.k)).unwrap()
    }
}
