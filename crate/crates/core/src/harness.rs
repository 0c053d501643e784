//! Convergence studies: configuration, the per-level pipeline, structural
//! checks, coercivity sampling and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_magnetic, assemble_operator, assemble_system, assemble_velocity, solve_system, AssemblyOptions,
    CaseAdvection, DiscreteSolution, Discretization, PiecewiseThetaAdvection, ProblemParams, SparseSystem,
    VelocityForm,
};
use crate::cases::{case_by_name, self_check, Domain, ManufacturedCase};
use crate::dofmap::{BoundaryPolicy, FeSpace};
use crate::elements::{lagrange_basis, map_tabulation};
use crate::error::{FemError, Result};
use crate::interpolation::{discrete_gradient, theta_piecewise_constant};
use crate::mesh::{generate_cube_mesh, generate_lshape_mesh, Mesh, Triangulation};
use crate::msh::import_msh;
use crate::norms::{compute_errors_with_theta, convergence_rates, DiscreteFields, ErrorReport, Rate, ERROR_COLUMNS};
use crate::quadrature;
use crate::solver::LuFactors;
use crate::sparse::{dot, CooMatrix, CsrMatrix};

/// Relative tolerance of the finite-difference check run when a case is set up.
pub const SELF_CHECK_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub k: usize,
    /// Sets both `nu_S` and `nu_M`.
    pub nu: f64,
    /// Sets both `sigma_S` and `sigma_M`.
    pub sigma: f64,
    pub mu_a: f64,
    pub mu_c: f64,
    pub mu_j1: f64,
    pub mu_j2: f64,
    pub levels: Vec<usize>,
    pub mesh: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub rhs_degree: Option<usize>,
    pub norm_degree: Option<usize>,
}

impl RunConfig {
    /// Benchmark defaults for a case: levels 1-4 on the cube, 1-3 on the L-shape.
    pub fn new(case: &str, k: usize) -> Self {
        let p = ProblemParams::benchmark(k.clamp(1, 2), 1.0);
        let levels = if case == "test2" { vec![1, 2, 3] } else { vec![1, 2, 3, 4] };
        Self {
            case: case.to_string(),
            k,
            nu: 1.0,
            sigma: 1.0,
            mu_a: p.mu_a,
            mu_c: p.mu_c,
            mu_j1: p.mu_j1,
            mu_j2: p.mu_j2,
            levels,
            mesh: None,
            out: None,
            rhs_degree: None,
            norm_degree: None,
        }
    }

    pub fn params(&self) -> ProblemParams {
        ProblemParams {
            k: self.k,
            sigma_s: self.sigma,
            sigma_m: self.sigma,
            nu_s: self.nu,
            nu_m: self.nu,
            mu_a: self.mu_a,
            mu_c: self.mu_c,
            mu_j1: self.mu_j1,
            mu_j2: self.mu_j2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.mesh.is_none() {
            if self.levels.is_empty() {
                return Err(FemError::Config("no refinement levels".into()));
            }
            if self.levels[0] == 0 || self.levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err(FemError::Config(format!(
                    "levels must be positive and strictly increasing (got {:?})",
                    self.levels
                )));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting; keys mirror the CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('-', "_");
        let value = value.trim();
        let float = |v: &str| v.parse::<f64>().map_err(|_| FemError::Config(format!("{key}: not a number: {v:?}")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| FemError::Config(format!("{key}: not an integer: {v:?}")));
        match key.as_str() {
            "case" => self.case = value.to_string(),
            "k" => self.k = int(value)?,
            "nu" => self.nu = float(value)?,
            "sigma" => self.sigma = float(value)?,
            "mu_a" => self.mu_a = float(value)?,
            "mu_c" => self.mu_c = float(value)?,
            "mu_j1" => self.mu_j1 = float(value)?,
            "mu_j2" => self.mu_j2 = float(value)?,
            "levels" => self.levels = parse_levels(value)?,
            "mesh" => self.mesh = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "rhs_degree" => self.rhs_degree = Some(int(value)?),
            "norm_degree" => self.norm_degree = Some(int(value)?),
            _ => return Err(FemError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. `#` starts a comment. Values that
    /// depend on `case` and `k` (levels, `mu_a`) default accordingly unless set.
    pub fn from_key_values(text: &str) -> Result<Self> {
        Self::from_key_values_with(text, None, None)
    }

    /// As [`RunConfig::from_key_values`], with `case` and `k` taken from the
    /// arguments when given (their dependent defaults follow them).
    pub fn from_key_values_with(text: &str, case: Option<&str>, k: Option<usize>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FemError::Config(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let lookup = |name: &str| pairs.iter().rev().find(|(_, k, _)| k.replace('-', "_") == name).map(|p| p.2.clone());
        let case = case.map(str::to_string).or_else(|| lookup("case")).unwrap_or_else(|| "test1".into());
        let k = match (k, lookup("k")) {
            (Some(k), _) => k,
            (None, Some(v)) => v.parse().map_err(|_| FemError::Config(format!("k: not an integer: {v:?}")))?,
            (None, None) => 1,
        };
        let mut cfg = Self::new(&case, k);
        for (line, key, value) in &pairs {
            if (key == "case" && cfg.case != *value) || (key == "k" && value.parse() != Ok(cfg.k)) {
                continue;
            }
            cfg.set(key, value).map_err(|e| FemError::Config(format!("line {line}: {e}")))?;
        }
        Ok(cfg)
    }
}

pub fn parse_levels(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| FemError::Config(format!("bad level {s:?}"))))
        .collect()
}

/// Looks up a case by name and checks its loads against finite differences.
pub fn registered_case(name: &str, k: usize, params: &ProblemParams) -> Result<Box<dyn ManufacturedCase>> {
    let case = case_by_name(name, k)?;
    let worst = self_check(case.as_ref(), &params.coefficients(), 100, 17);
    if !(worst <= SELF_CHECK_TOL) {
        return Err(FemError::Config(format!(
            "case {name}: loads disagree with finite differences (relative {worst:e})"
        )));
    }
    Ok(case)
}

pub fn mesh_for(domain: Domain, n: usize) -> Mesh {
    match domain {
        Domain::Cube => generate_cube_mesh(n),
        Domain::LShape => generate_lshape_mesh(n),
    }
}

/// Structural quantities of a discrete solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    /// `||div u_h|| / ||u_h||`.
    pub div_ratio: f64,
    /// Dual norm of `q -> sigma_M (B_h, grad q) - l_M(grad q)` over continuous
    /// `P_{k+1}`, relative to `sigma_M ||B_h|| + ||l_M||_*`.
    pub gradient_defect: f64,
    /// Norm of the L2 projection of `B_h` onto discrete gradients, relative to `||B_h||`.
    pub gradient_component: f64,
}

/// L2 norms of `u_h` and `div u_h`.
pub fn divergence_norms(disc: &Discretization, u: &[f64]) -> (f64, f64) {
    let tri = &disc.tri;
    let basis = &disc.vel.basis;
    let rule = quadrature::tet_rule_clamped(2 * disc.k);
    let tab = basis.tabulate(&rule.points);
    let mut uu = 0.0;
    let mut dd = 0.0;
    for c in 0..tri.num_cells() {
        let geom = &tri.geometry[c];
        let mt = map_tabulation(basis, geom, &tab);
        let dofs = disc.vel.dofmap.cell(c);
        for (q, w) in rule.weights.iter().enumerate() {
            let w = w * geom.abs_det;
            let mut v = [0.0; 3];
            let mut d = 0.0;
            for (i, g) in dofs.iter().enumerate() {
                let a = u[*g];
                let vi = mt.value(q, i);
                for (vc, x) in v.iter_mut().zip(vi) {
                    *vc += a * x;
                }
                d += a * mt.div(q, i);
            }
            uu += w * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            dd += w * d * d;
        }
    }
    (uu.sqrt(), dd.sqrt())
}

/// Continuous `P_{k+1}` space and the Nedelec interpolation of its gradients.
pub fn gradient_space(disc: &Discretization) -> Result<(FeSpace, CsrMatrix)> {
    let lag = FeSpace::new(&disc.tri, lagrange_basis(disc.k + 1)?, BoundaryPolicy::Natural)?;
    let g = discrete_gradient(&disc.tri, &lag, &disc.mag);
    Ok((lag, g))
}

/// `sqrt(r^T K^+ r)` for the pinned Gram matrix, with `r` orthogonal to constants.
fn gradient_dual_norm(lu: &LuFactors, r: &[f64]) -> f64 {
    let mut rhs = r.to_vec();
    rhs[0] = 0.0;
    let x = lu.solve(&rhs);
    dot(&x, r).max(0.0).sqrt()
}

/// Factorized Gram matrix `G^T M G` of gradients with the first unknown pinned.
fn pinned_gram(g: &CsrMatrix, mass: &CsrMatrix) -> Result<LuFactors> {
    let k = g.transpose().matmul(&mass.matmul(g));
    let mut coo = CooMatrix::new(k.nrows, k.ncols);
    for r in 1..k.nrows {
        let (idx, val) = k.row(r);
        for (c, v) in idx.iter().zip(val) {
            if *c != 0 {
                coo.push(r, *c, *v);
            }
        }
    }
    coo.push(0, 0, 1.0);
    LuFactors::factorize(&coo.to_csr())
}

pub fn structure_checks(
    disc: &Discretization,
    params: &ProblemParams,
    sys: &SparseSystem,
    sol: &DiscreteSolution,
) -> Result<StructureReport> {
    let (nu, nd) = divergence_norms(disc, &sol.u);
    let (_, g) = gradient_space(disc)?;
    let mass = assemble_magnetic(disc, 1.0, 0.0).to_csr();
    let lu = pinned_gram(&g, &mass)?;
    let gt = g.transpose();
    let mb = mass.matvec(&sol.b);
    let r_b = gt.matvec(&mb);
    let r_l = gt.matvec(&sys.magnetic_load);
    let defect: Vec<f64> = r_b.iter().zip(&r_l).map(|(a, b)| params.sigma_m * a - b).collect();
    let b_norm = dot(&sol.b, &mb).max(0.0).sqrt();
    let l_norm = gradient_dual_norm(&lu, &r_l);
    let denom = params.sigma_m * b_norm + l_norm;
    Ok(StructureReport {
        div_ratio: if nu > 0.0 { nd / nu } else { nd },
        gradient_defect: if denom > 0.0 { gradient_dual_norm(&lu, &defect) / denom } else { 0.0 },
        gradient_component: if b_norm > 0.0 { gradient_dual_norm(&lu, &r_b) / b_norm } else { 0.0 },
    })
}

/// Everything computed on one refinement level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub report: ErrorReport,
    pub structure: StructureReport,
    pub residual: f64,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub levels: Vec<LevelResult>,
}

impl RunResult {
    pub fn reports(&self) -> Vec<ErrorReport> {
        self.levels.iter().map(|l| l.report.clone()).collect()
    }
}

/// Mesh, spaces, assembly, solve and errors on one mesh.
pub fn run_level(
    cfg: &RunConfig,
    case: &dyn ManufacturedCase,
    mesh: Mesh,
    level: usize,
) -> Result<(LevelResult, Discretization, DiscreteSolution)> {
    let params = cfg.params();
    let t0 = Instant::now();
    let disc = Discretization::new(Triangulation::new(mesh)?, cfg.k)?;
    let mut opts = AssemblyOptions::for_degree(cfg.k);
    if let Some(d) = cfg.rhs_degree {
        opts.rhs_degree = d;
    }
    let sys = assemble_system(&disc, &params, case, &opts)?;
    let assemble_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let sol = solve_system(&sys)?;
    let solve_seconds = t1.elapsed().as_secs_f64();
    let theta_h = theta_piecewise_constant(&disc.tri, |x| case.theta(x))?;
    let fields = DiscreteFields { u: &sol.u, p: &sol.p, b: &sol.b };
    let norm_degree = cfg.norm_degree.unwrap_or(2 * cfg.k + 6);
    let mut report = compute_errors_with_theta(&disc, &params, case, fields, &theta_h, norm_degree)?;
    report.level = level;
    let structure = structure_checks(&disc, &params, &sys, &sol)?;
    let result = LevelResult { report, structure, residual: sol.residual, assemble_seconds, solve_seconds };
    Ok((result, disc, sol))
}

/// Runs every level of the configuration in order. Errors carry the level.
pub fn run_case(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let params = cfg.params();
    let case = registered_case(&cfg.case, cfg.k, &params)?;
    run_with_case(cfg, case.as_ref())
}

/// As [`run_case`] with an explicit case (skips the name lookup).
pub fn run_with_case(cfg: &RunConfig, case: &dyn ManufacturedCase) -> Result<RunResult> {
    cfg.validate()?;
    let mut levels = Vec::new();
    let meshes: Vec<(usize, Option<Mesh>)> = match &cfg.mesh {
        Some(path) => vec![(0, Some(import_msh(path)?))],
        None => cfg.levels.iter().map(|&n| (n, None)).collect(),
    };
    for (n, mesh) in meshes {
        let mesh = mesh.unwrap_or_else(|| mesh_for(case.domain(), n));
        let (res, _, _) =
            run_level(cfg, case, mesh, n).map_err(|e| FemError::Level { level: n, source: Box::new(e) })?;
        levels.push(res);
    }
    let result = RunResult { config: cfg.clone(), levels };
    if let Some(out) = &cfg.out {
        emit_csv(&result.reports(), out)?;
    }
    Ok(result)
}

fn rates_or_empty(reports: &[ErrorReport]) -> Vec<Option<[Rate; 6]>> {
    let mut rows = vec![None];
    if reports.len() >= 2 {
        match convergence_rates(reports) {
            Ok(r) => rows.extend(r.into_iter().map(Some)),
            Err(_) => rows.extend((1..reports.len()).map(|_| None)),
        }
    }
    rows
}

/// CSV text: header, then one row per level; numbers with six significant digits.
pub fn format_csv(reports: &[ErrorReport]) -> String {
    let mut s = String::from("h,dofs_u,dofs_p,dofs_B");
    for c in ERROR_COLUMNS {
        s.push(',');
        s.push_str(c);
    }
    for c in ERROR_COLUMNS {
        s.push_str(",rate_");
        s.push_str(c);
    }
    s.push('\n');
    let rates = rates_or_empty(reports);
    for (r, rate) in reports.iter().zip(&rates) {
        let _ = write!(s, "{:.5e},{},{},{}", r.h, r.dofs_u, r.dofs_p, r.dofs_b);
        for v in r.columns() {
            let _ = write!(s, ",{v:.5e}");
        }
        for i in 0..ERROR_COLUMNS.len() {
            s.push(',');
            if let Some(rt) = rate {
                if rt[i].undefined {
                    s.push_str("nan");
                } else {
                    let _ = write!(s, "{:.5e}", rt[i].value);
                }
            }
        }
        s.push('\n');
    }
    s
}

pub fn emit_csv(reports: &[ErrorReport], path: &Path) -> Result<()> {
    std::fs::write(path, format_csv(reports))
        .map_err(|e| FemError::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display()))))
}

/// Human-readable error and rate table.
pub fn rate_table(reports: &[ErrorReport]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:>4} {:>10} {:>8}", "n", "h", "dofs");
    for c in ERROR_COLUMNS {
        let _ = write!(s, " {:>11} {:>5}", c.trim_start_matches("err_"), "rate");
    }
    s.push('\n');
    let rates = rates_or_empty(reports);
    for (r, rate) in reports.iter().zip(&rates) {
        let _ = write!(s, "{:>4} {:>10.4e} {:>8}", r.level, r.h, r.dofs_u + r.dofs_p + r.dofs_b);
        for (i, v) in r.columns().iter().enumerate() {
            let rt = match rate {
                Some(rt) if !rt[i].undefined => format!("{:.2}", rt[i].value),
                Some(_) => "nan".into(),
                None => "-".into(),
            };
            let _ = write!(s, " {v:>11.4e} {rt:>5}");
        }
        s.push('\n');
    }
    s
}

/// Outcome of sampling the stabilized form on random discrete pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivitySample {
    /// Smallest value of `A_stab(v, B; v, B)`.
    pub min_value: f64,
    /// Smallest ratio `A_stab / (||v||_S^2 + |v|_upw^2 + |v|_cip^2 + ||B||_M^2)`.
    pub c_coe: f64,
    pub samples: usize,
}

/// Velocity mass matrix projection onto discretely divergence-free fields with zero normal trace.
struct KernelProjector {
    lu: LuFactors,
    mass: CsrMatrix,
    nu: usize,
    np: usize,
    constrained: Vec<bool>,
}

impl KernelProjector {
    fn new(disc: &Discretization) -> Result<Self> {
        let lay = disc.layout();
        let (nu, np) = (lay.nu, lay.np);
        let mass = assemble_velocity(
            disc,
            &VelocityForm { mass: 1.0, ..Default::default() },
            &CaseAdvection(&crate::cases::Test1),
        )
        .to_csr();
        let b = crate::assembly::assemble_b(disc).to_csr();
        let mean = crate::assembly::pressure_mean_vector(disc);
        let constrained = disc.vel.dofmap.constrained.clone();
        let n = nu + np + 1;
        let mut coo = CooMatrix::new(n, n);
        for r in 0..nu {
            if constrained[r] {
                coo.push(r, r, 1.0);
                continue;
            }
            let (idx, val) = mass.row(r);
            for (c, v) in idx.iter().zip(val) {
                if !constrained[*c] {
                    coo.push(r, *c, *v);
                }
            }
        }
        for r in 0..np {
            let (idx, val) = b.row(r);
            for (c, v) in idx.iter().zip(val) {
                if !constrained[*c] {
                    coo.push(nu + r, *c, *v);
                    coo.push(*c, nu + r, *v);
                }
            }
            coo.push(nu + r, nu + np, mean[r]);
            coo.push(nu + np, nu + r, mean[r]);
        }
        let lu = LuFactors::factorize(&coo.to_csr())?;
        Ok(Self { lu, mass, nu, np, constrained })
    }

    fn project(&self, w: &[f64]) -> Vec<f64> {
        let mw = self.mass.matvec(w);
        let mut rhs = vec![0.0; self.nu + self.np + 1];
        for i in 0..self.nu {
            rhs[i] = if self.constrained[i] { 0.0 } else { mw[i] };
        }
        let x = self.lu.solve(&rhs);
        x[..self.nu].to_vec()
    }
}

/// Samples `A_stab` on random `v` in `Z_h` and random `B` in `W_h`.
pub fn coercivity_sampling(
    disc: &Discretization,
    params: &ProblemParams,
    case: &dyn ManufacturedCase,
    samples: usize,
    seed: u64,
) -> Result<CoercivitySample> {
    let lay = disc.layout();
    let adv = CaseAdvection(case);
    let op = assemble_operator(disc, params, &adv).to_csr();
    let theta_h = theta_piecewise_constant(&disc.tri, |x| case.theta(x))?;
    let h_adv = PiecewiseThetaAdvection { case, theta_h: &theta_h };
    let p = params;
    let s_form = VelocityForm {
        mass: p.sigma_s,
        strain: p.nu_s,
        jump_penalty: p.nu_s * p.mu_a,
        upwind: p.mu_c,
        cip_cross: p.mu_j1,
        ..Default::default()
    };
    // The upwind seminorm and the first jump term use chi and Theta; the
    // second jump term uses Theta_h.
    let mut norm_u = assemble_velocity(disc, &s_form, &adv);
    let cip2 = assemble_velocity(disc, &VelocityForm { cip_curl: p.mu_j2, ..Default::default() }, &h_adv);
    for k in 0..cip2.nnz() {
        norm_u.push(cip2.rows[k], cip2.cols[k], cip2.vals[k]);
    }
    let norm_u = norm_u.to_csr();
    let norm_b = assemble_magnetic(disc, p.sigma_m, p.nu_m).to_csr();
    let proj = KernelProjector::new(disc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_value = f64::INFINITY;
    let mut c_coe = f64::INFINITY;
    for _ in 0..samples {
        let w: Vec<f64> = (0..lay.nu).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = proj.project(&w);
        let bvec: Vec<f64> = (0..lay.nb).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; lay.total()];
        x[..lay.nu].copy_from_slice(&v);
        x[lay.b0()..].copy_from_slice(&bvec);
        let a = op.bilinear(&x, &x);
        let n2 = norm_u.bilinear(&v, &v) + norm_b.bilinear(&bvec, &bvec);
        min_value = min_value.min(a);
        c_coe = c_coe.min(a / n2);
    }
    Ok(CoercivitySample { min_value, c_coe, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{HomogeneousMagnetic, Patch, Test1};

    #[test]
    fn config_file_round_trip() {
        let text = "# comment\ncase = test1\nk = 2\nnu = 1e-6\nmu-a = 25\nlevels = 1, 2,3\nout = /tmp/x.csv\n";
        let cfg = RunConfig::from_key_values(text).unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.nu, 1e-6);
        assert_eq!(cfg.mu_a, 25.0);
        assert_eq!(cfg.levels, vec![1, 2, 3]);
        assert_eq!(cfg.out.as_deref(), Some(Path::new("/tmp/x.csv")));
        // k = 2 default penalty when not overridden.
        assert_eq!(RunConfig::from_key_values("k = 2").unwrap().mu_a, 20.0);
        assert!(RunConfig::from_key_values("bogus = 1").is_err());
        assert!(RunConfig::from_key_values("k 2").is_err());
        let over = RunConfig::from_key_values_with("k = 1\nnu = 0.5", Some("test2"), Some(2)).unwrap();
        assert_eq!((over.case.as_str(), over.k, over.nu, over.mu_a), ("test2", 2, 0.5, 20.0));
        assert_eq!(over.levels, vec![1, 2, 3]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = RunConfig::new("test1", 1);
        cfg.levels = vec![2, 2];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new("test1", 3);
        cfg.levels = vec![1];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new("test1", 1);
        cfg.nu = 0.0;
        assert!(cfg.validate().is_err());
        assert!(run_case(&RunConfig::new("nope", 1)).is_err());
    }

    #[test]
    fn patch_run_has_zero_errors_and_undefined_rates() {
        for k in 1..=2 {
            let mut cfg = RunConfig::new("patch", k);
            cfg.levels = vec![1, 2];
            let res = run_case(&cfg).unwrap();
            for l in &res.levels {
                for v in l.report.columns() {
                    assert!(v <= 1e-8, "k={k}: {:?}", l.report);
                }
            }
            let csv = format_csv(&res.reports());
            let lines: Vec<&str> = csv.lines().collect();
            assert_eq!(lines.len(), 3);
            assert!(lines[1].ends_with(",,,,,,"));
        }
    }

    #[test]
    fn csv_layout_and_determinism() {
        let mut cfg = RunConfig::new("test1", 1);
        cfg.levels = vec![1, 2];
        let a = format_csv(&run_case(&cfg).unwrap().reports());
        let b = format_csv(&run_case(&cfg).unwrap().reports());
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "h,dofs_u,dofs_p,dofs_B,err_u_L2,err_u_H1,err_p_L2,err_B_L2,err_B_curl,err_total,\
             rate_err_u_L2,rate_err_u_H1,rate_err_p_L2,rate_err_B_L2,rate_err_B_curl,rate_err_total"
        );
        assert_eq!(lines[1].split(',').count(), 16);
        assert!(lines[1].ends_with(",,,,,,"));
        assert!(!lines[2].contains(",,"));
        // Six significant digits.
        assert!(lines[1].split(',').next().unwrap().split('e').next().unwrap().len() == 7);
    }

    #[test]
    fn structure_of_solved_systems() {
        let cfg = RunConfig::new("test1", 1);
        let (res, _, _) = run_level(&cfg, &Test1, generate_cube_mesh(2), 2).unwrap();
        assert!(res.structure.div_ratio <= 1e-9, "{:?}", res.structure);
        assert!(res.structure.gradient_defect <= 1e-8, "{:?}", res.structure);
        let (res, _, _) = run_level(&cfg, &HomogeneousMagnetic(Test1), generate_cube_mesh(2), 2).unwrap();
        assert!(res.structure.gradient_component <= 1e-8, "{:?}", res.structure);
    }

    #[test]
    fn level_context_on_failure() {
        let mut cfg = RunConfig::new("test1", 1);
        cfg.mesh = Some(PathBuf::from("/nonexistent/mesh.msh"));
        assert!(run_with_case(&cfg, &Test1).is_err());
        let mut cfg = RunConfig::new("patch", 1);
        cfg.levels = vec![1];
        cfg.out = Some(PathBuf::from("/nonexistent/dir/out.csv"));
        match run_with_case(&cfg, &Patch { k: 1 }) {
            Err(FemError::Io(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coercivity_is_positive_on_small_mesh() {
        let disc = Discretization::new(Triangulation::new(generate_cube_mesh(1)).unwrap(), 1).unwrap();
        let s = coercivity_sampling(&disc, &ProblemParams::benchmark(1, 1.0), &Test1, 10, 1).unwrap();
        assert!(s.min_value > 0.0 && s.c_coe > 0.0);
    }
}
