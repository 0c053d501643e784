//! Assembly of the discrete coupled problem.
//!
//! Unknowns are laid out as `[u | p | lambda | B]`, where `lambda` is the
//! multiplier enforcing zero pressure mean. Jumps and averages follow
//! `[phi] = phi+ - phi-` with the canonical face normal pointing out of the
//! `+` cell; on boundary faces jump and average are the trace and the
//! normal points outward.

use rayon::prelude::*;

use crate::cases::{Coefficients, ManufacturedCase};
use crate::dofmap::{BoundaryPolicy, FeSpace};
use crate::elements::{
    bdm_basis, discontinuous_basis, map_tabulation, nedelec2_basis, MappedTabulation, ReferenceBasis,
};
use crate::error::{FemError, Result};
use crate::geometry::{self, Mat3, Point};
use crate::interpolation::{interpolate, PiecewiseField, INTERP_QUAD_DEGREE};
use crate::mesh::Triangulation;
use crate::quadrature;
use crate::solver::{solve_linear, PivotStats};
use crate::sparse::{CooMatrix, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub k: usize,
    pub sigma_s: f64,
    pub sigma_m: f64,
    pub nu_s: f64,
    pub nu_m: f64,
    pub mu_a: f64,
    pub mu_c: f64,
    pub mu_j1: f64,
    pub mu_j2: f64,
}

impl ProblemParams {
    /// Parameters of the manufactured benchmarks: `sigma = 1`, `mu_J1 = 0.05`,
    /// `mu_J2 = 0.01`, `mu_a = 10` for `k = 1` and `20` for `k = 2`.
    pub fn benchmark(k: usize, nu: f64) -> Self {
        Self {
            k,
            sigma_s: 1.0,
            sigma_m: 1.0,
            nu_s: nu,
            nu_m: nu,
            mu_a: if k == 1 { 10.0 } else { 20.0 },
            mu_c: 0.5,
            mu_j1: 0.05,
            mu_j2: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k != 1 && self.k != 2 {
            return Err(FemError::UnsupportedElementDegree(self.k));
        }
        let nonneg = [
            ("sigma_s", self.sigma_s),
            ("sigma_m", self.sigma_m),
            ("mu_a", self.mu_a),
            ("mu_c", self.mu_c),
            ("mu_j1", self.mu_j1),
            ("mu_j2", self.mu_j2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FemError::Config(format!("{name} must be finite and >= 0 (got {v})")));
            }
        }
        for (name, v) in [("nu_s", self.nu_s), ("nu_m", self.nu_m)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FemError::Config(format!("{name} must be finite and > 0 (got {v})")));
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients { sigma_s: self.sigma_s, sigma_m: self.sigma_m, nu_s: self.nu_s, nu_m: self.nu_m }
    }
}

/// Mesh plus the three discrete spaces.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub tri: Triangulation,
    pub k: usize,
    pub vel: FeSpace,
    pub pre: FeSpace,
    pub mag: FeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nu: usize,
    pub np: usize,
    pub nb: usize,
}

impl Layout {
    pub fn p0(&self) -> usize {
        self.nu
    }
    pub fn lambda(&self) -> usize {
        self.nu + self.np
    }
    pub fn b0(&self) -> usize {
        self.nu + self.np + 1
    }
    pub fn total(&self) -> usize {
        self.nu + self.np + 1 + self.nb
    }
}

impl Discretization {
    pub fn new(tri: Triangulation, k: usize) -> Result<Self> {
        let vel = FeSpace::new(&tri, bdm_basis(k)?, BoundaryPolicy::NormalTrace)?;
        let pre = FeSpace::new(&tri, discontinuous_basis(k - 1)?, BoundaryPolicy::MeanZero)?;
        let mag = FeSpace::new(&tri, nedelec2_basis(k)?, BoundaryPolicy::Natural)?;
        Ok(Self { tri, k, vel, pre, mag })
    }

    pub fn layout(&self) -> Layout {
        Layout { nu: self.vel.ndofs(), np: self.pre.ndofs(), nb: self.mag.ndofs() }
    }

    pub fn matrix_degree(&self) -> usize {
        2 * self.k + 2
    }
}

/// Advective fields as seen by the assembly; `theta` may depend on the cell
/// (piecewise constant approximations are discontinuous).
pub trait Advection: Sync {
    fn chi(&self, x: Point) -> Point;
    /// `Theta` and its gradient on cell `cell`.
    fn theta(&self, cell: usize, x: Point) -> (Point, Mat3);
}

/// Analytic fields of a manufactured case.
pub struct CaseAdvection<'a>(pub &'a dyn ManufacturedCase);

impl Advection for CaseAdvection<'_> {
    fn chi(&self, x: Point) -> Point {
        self.0.chi(x)
    }
    fn theta(&self, _cell: usize, x: Point) -> (Point, Mat3) {
        (self.0.theta(x), self.0.grad_theta(x))
    }
}

/// Analytic `chi` with the cellwise constant `Theta_h`.
pub struct PiecewiseThetaAdvection<'a> {
    pub case: &'a dyn ManufacturedCase,
    pub theta_h: &'a PiecewiseField,
}

impl Advection for PiecewiseThetaAdvection<'_> {
    fn chi(&self, x: Point) -> Point {
        self.case.chi(x)
    }
    fn theta(&self, cell: usize, _x: Point) -> (Point, Mat3) {
        (self.theta_h.cell_mean(cell), [[0.0; 3]; 3])
    }
}

/// Constant fields, for tests.
pub struct ConstantAdvection {
    pub chi: Point,
    pub theta: Point,
}

impl Advection for ConstantAdvection {
    fn chi(&self, _x: Point) -> Point {
        self.chi
    }
    fn theta(&self, _cell: usize, _x: Point) -> (Point, Mat3) {
        (self.theta, [[0.0; 3]; 3])
    }
}

/// Coefficients of the individual velocity-velocity terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VelocityForm {
    /// `(u, v)`.
    pub mass: f64,
    /// `(eps_h u, eps_h v)`.
    pub strain: f64,
    /// `-<{eps(u) n}, [v]> - <[u], {eps(v) n}>` over all faces.
    pub sip_consistency: f64,
    /// `sum_f h_f^-1 <[u], [v]>` over all faces.
    pub jump_penalty: f64,
    /// `((grad u) chi, v) - sum_int <(chi.n)[u], {v}>` plus the boundary inflow term.
    pub convection: f64,
    /// `sum_int <|chi.n| [u], [v]>`.
    pub upwind: f64,
    /// `sum_all <[Theta x u], [Theta x v]>`.
    pub cip_cross: f64,
    /// `sum_int h_f^2 <[curl(u x Theta)], [curl(v x Theta)]>`.
    pub cip_curl: f64,
}

impl VelocityForm {
    /// The full velocity operator of the scheme.
    pub fn operator(p: &ProblemParams) -> Self {
        Self {
            mass: p.sigma_s,
            strain: p.nu_s,
            sip_consistency: p.nu_s,
            jump_penalty: p.nu_s * p.mu_a,
            convection: 1.0,
            upwind: p.mu_c,
            cip_cross: p.mu_j1,
            cip_curl: p.mu_j2,
        }
    }

    /// `nu_S a_S^h` alone.
    pub fn sip(p: &ProblemParams) -> Self {
        Self { strain: p.nu_s, sip_consistency: p.nu_s, jump_penalty: p.nu_s * p.mu_a, ..Default::default() }
    }

    pub fn convection_only(mu_c: f64) -> Self {
        Self { convection: 1.0, upwind: mu_c, ..Default::default() }
    }

    pub fn cip_only(mu_j1: f64, mu_j2: f64) -> Self {
        Self { cip_cross: mu_j1, cip_curl: mu_j2, ..Default::default() }
    }

    fn has_face_terms(&self) -> bool {
        self.sip_consistency != 0.0
            || self.jump_penalty != 0.0
            || self.convection != 0.0
            || self.upwind != 0.0
            || self.cip_cross != 0.0
            || self.cip_curl != 0.0
    }
}

pub fn sym(g: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (g[i][j] + g[j][i])))
}

fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// `curl(v x Theta) = (div Theta) v - (div v) Theta + (grad v) Theta - (grad Theta) v`.
pub fn curl_cross(v: Point, gv: &Mat3, th: Point, gth: &Mat3) -> Point {
    let dt = geometry::div_of(gth);
    let dv = geometry::div_of(gv);
    let a = geometry::mat_vec(gv, th);
    let b = geometry::mat_vec(gth, v);
    std::array::from_fn(|i| dt * v[i] - dv * th[i] + a[i] - b[i])
}

/// Quadrature on one face, with the incident cells as `+`/`-` sides.
#[derive(Debug, Clone)]
pub struct FaceQuad {
    pub face: usize,
    pub points: Vec<Point>,
    /// Physical weights (sum to the face area).
    pub weights: Vec<f64>,
    /// Canonical normal on interior faces, outward normal on boundary faces.
    pub normal: Point,
    pub h: f64,
    pub boundary: bool,
    pub cells: Vec<usize>,
    /// Jump sign of each side (`+1`, `-1`; `+1` on boundary faces).
    pub jump_sign: Vec<f64>,
    /// Average weight of each side (`1/2`; `1` on boundary faces).
    pub avg_weight: Vec<f64>,
    pub ref_points: Vec<Vec<Point>>,
}

pub fn face_quad(tri: &Triangulation, f: usize, degree: usize) -> FaceQuad {
    let face = &tri.faces.faces[f];
    let rule = quadrature::tri_rule_clamped(degree);
    let x = face.vertices.map(|v| tri.mesh.vertices[v]);
    let e1 = geometry::sub(x[1], x[0]);
    let e2 = geometry::sub(x[2], x[0]);
    let points: Vec<Point> = rule
        .points
        .iter()
        .map(|q| geometry::add(x[0], geometry::add(geometry::scale(e1, q[0]), geometry::scale(e2, q[1]))))
        .collect();
    let weights = rule.weights.iter().map(|w| 2.0 * face.area * w).collect();
    let boundary = face.is_boundary();
    let cells: Vec<usize> = face.incidence.iter().map(|i| i.cell).collect();
    let ref_points = cells.iter().map(|&c| points.iter().map(|p| tri.geometry[c].pullback(*p)).collect()).collect();
    FaceQuad {
        face: f,
        points,
        weights,
        normal: if boundary { face.oriented_normal() } else { face.normal },
        h: face.diameter,
        boundary,
        jump_sign: if boundary { vec![1.0] } else { vec![1.0, -1.0] },
        avg_weight: if boundary { vec![1.0] } else { vec![0.5, 0.5] },
        cells,
        ref_points,
    }
}

impl FaceQuad {
    pub fn side_tabulation(&self, tri: &Triangulation, basis: &ReferenceBasis, side: usize) -> MappedTabulation {
        let c = self.cells[side];
        map_tabulation(basis, &tri.geometry[c], &basis.tabulate(&self.ref_points[side]))
    }

    fn local_dofs(&self, space: &FeSpace) -> Vec<usize> {
        self.cells.iter().flat_map(|&c| space.dofmap.cell(c).iter().copied()).collect()
    }
}

type Local = (Vec<usize>, Vec<usize>, Vec<f64>);

fn insert_all(coo: &mut CooMatrix, locals: Vec<Local>, scale: f64) {
    for (rows, cols, m) in locals {
        coo.push_block(&rows, &cols, &m, scale);
    }
}

struct CellQuad {
    points: Vec<Point>,
    weights: Vec<f64>,
}

fn cell_rule(degree: usize) -> CellQuad {
    let r = quadrature::tet_rule_clamped(degree);
    CellQuad { points: r.points.clone(), weights: r.weights.clone() }
}

/// Velocity-velocity matrix for the given combination of terms.
pub fn assemble_velocity(disc: &Discretization, form: &VelocityForm, adv: &dyn Advection) -> CooMatrix {
    let tri = &disc.tri;
    let basis = &disc.vel.basis;
    let n = basis.ndofs;
    let rule = cell_rule(disc.matrix_degree());
    let tab = basis.tabulate(&rule.points);
    let cells: Vec<Local> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mt = map_tabulation(basis, geom, &tab);
            let mut m = vec![0.0; n * n];
            for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let w = w * geom.abs_det;
                let x = geom.map(*xh);
                let chi = if form.convection != 0.0 { adv.chi(x) } else { [0.0; 3] };
                let eps: Vec<Mat3> = (0..n).map(|j| sym(mt.grad(q, j))).collect();
                for i in 0..n {
                    let vi = mt.value(q, i);
                    for j in 0..n {
                        let vj = mt.value(q, j);
                        let mut a = 0.0;
                        if form.mass != 0.0 {
                            a += form.mass * geometry::dot(vi, vj);
                        }
                        if form.strain != 0.0 {
                            a += form.strain * ddot(&eps[i], &eps[j]);
                        }
                        if form.convection != 0.0 {
                            a += form.convection * geometry::dot(geometry::mat_vec(mt.grad(q, j), chi), vi);
                        }
                        m[i * n + j] += w * a;
                    }
                }
            }
            let dofs = disc.vel.dofmap.cell(c).to_vec();
            (dofs.clone(), dofs, m)
        })
        .collect();
    let mut coo = CooMatrix::new(disc.vel.ndofs(), disc.vel.ndofs());
    insert_all(&mut coo, cells, 1.0);
    if form.has_face_terms() {
        let faces: Vec<Local> =
            (0..tri.faces.faces.len()).into_par_iter().map(|f| velocity_face(disc, f, form, adv)).collect();
        insert_all(&mut coo, faces, 1.0);
    }
    coo
}

fn velocity_face(disc: &Discretization, f: usize, form: &VelocityForm, adv: &dyn Advection) -> Local {
    let tri = &disc.tri;
    let basis = &disc.vel.basis;
    let fq = face_quad(tri, f, disc.matrix_degree());
    let nside = fq.cells.len();
    let n = basis.ndofs;
    let nl = n * nside;
    let tabs: Vec<MappedTabulation> = (0..nside).map(|s| fq.side_tabulation(tri, basis, s)).collect();
    let nrm = fq.normal;
    let mut m = vec![0.0; nl * nl];
    let mut jump = vec![[0.0; 3]; nl];
    let mut avg = vec![[0.0; 3]; nl];
    let mut eps_avg = vec![[0.0; 3]; nl];
    let mut cross_jump = vec![[0.0; 3]; nl];
    let mut curl_jump = vec![[0.0; 3]; nl];
    for (q, (x, w)) in fq.points.iter().zip(&fq.weights).enumerate() {
        for s in 0..nside {
            let (th, gth) = adv.theta(fq.cells[s], *x);
            for i in 0..n {
                let a = s * n + i;
                let v = tabs[s].value(q, i);
                let g = tabs[s].grad(q, i);
                jump[a] = geometry::scale(v, fq.jump_sign[s]);
                avg[a] = geometry::scale(v, fq.avg_weight[s]);
                eps_avg[a] = geometry::scale(geometry::mat_vec(&sym(g), nrm), fq.avg_weight[s]);
                cross_jump[a] = geometry::scale(geometry::cross(th, v), fq.jump_sign[s]);
                curl_jump[a] = geometry::scale(curl_cross(v, g, th, &gth), fq.jump_sign[s]);
            }
        }
        let chin = if form.convection != 0.0 || form.upwind != 0.0 { geometry::dot(adv.chi(*x), nrm) } else { 0.0 };
        let pen = form.jump_penalty / fq.h;
        for a in 0..nl {
            for b in 0..nl {
                let mut val = 0.0;
                if form.sip_consistency != 0.0 {
                    val -= form.sip_consistency
                        * (geometry::dot(eps_avg[b], jump[a]) + geometry::dot(jump[b], eps_avg[a]));
                }
                if pen != 0.0 {
                    val += pen * geometry::dot(jump[b], jump[a]);
                }
                if form.convection != 0.0 {
                    if fq.boundary {
                        val += form.convection * (-chin).max(0.0) * geometry::dot(jump[b], jump[a]);
                    } else {
                        val -= form.convection * chin * geometry::dot(jump[b], avg[a]);
                    }
                }
                if form.upwind != 0.0 && !fq.boundary {
                    val += form.upwind * chin.abs() * geometry::dot(jump[b], jump[a]);
                }
                if form.cip_cross != 0.0 {
                    val += form.cip_cross * geometry::dot(cross_jump[b], cross_jump[a]);
                }
                if form.cip_curl != 0.0 && !fq.boundary {
                    val += form.cip_curl * fq.h * fq.h * geometry::dot(curl_jump[b], curl_jump[a]);
                }
                m[a * nl + b] += w * val;
            }
        }
    }
    let dofs = fq.local_dofs(&disc.vel);
    (dofs.clone(), dofs, m)
}

/// `mass (B, H) + curl (curl B, curl H)`.
pub fn assemble_magnetic(disc: &Discretization, mass: f64, curl: f64) -> CooMatrix {
    let tri = &disc.tri;
    let basis = &disc.mag.basis;
    let n = basis.ndofs;
    let rule = cell_rule(disc.matrix_degree());
    let tab = basis.tabulate(&rule.points);
    let locals: Vec<Local> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mt = map_tabulation(basis, geom, &tab);
            let mut m = vec![0.0; n * n];
            for (q, w) in rule.weights.iter().enumerate() {
                let w = w * geom.abs_det;
                let curls: Vec<Point> = (0..n).map(|j| mt.curl(q, j)).collect();
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] += w
                            * (mass * geometry::dot(mt.value(q, i), mt.value(q, j))
                                + curl * geometry::dot(curls[i], curls[j]));
                    }
                }
            }
            let dofs = disc.mag.dofmap.cell(c).to_vec();
            (dofs.clone(), dofs, m)
        })
        .collect();
    let mut coo = CooMatrix::new(disc.mag.ndofs(), disc.mag.ndofs());
    insert_all(&mut coo, locals, 1.0);
    coo
}

/// `D[i][j] = d(H_j, v_i) = (curl H_j x Theta, v_i)`, of size `nu x nb`.
pub fn assemble_d(disc: &Discretization, adv: &dyn Advection) -> CooMatrix {
    let tri = &disc.tri;
    let (bv, bm) = (&disc.vel.basis, &disc.mag.basis);
    let (nv, nm) = (bv.ndofs, bm.ndofs);
    let rule = cell_rule(disc.matrix_degree());
    let tv = bv.tabulate(&rule.points);
    let tm = bm.tabulate(&rule.points);
    let locals: Vec<Local> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mv = map_tabulation(bv, geom, &tv);
            let mm = map_tabulation(bm, geom, &tm);
            let mut m = vec![0.0; nv * nm];
            for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let w = w * geom.abs_det;
                let (th, _) = adv.theta(c, geom.map(*xh));
                for j in 0..nm {
                    let ct = geometry::cross(mm.curl(q, j), th);
                    for i in 0..nv {
                        m[i * nm + j] += w * geometry::dot(ct, mv.value(q, i));
                    }
                }
            }
            (disc.vel.dofmap.cell(c).to_vec(), disc.mag.dofmap.cell(c).to_vec(), m)
        })
        .collect();
    let mut coo = CooMatrix::new(disc.vel.ndofs(), disc.mag.ndofs());
    insert_all(&mut coo, locals, 1.0);
    coo
}

/// `Bm[i][j] = (div v_j, q_i)`, of size `np x nu`.
pub fn assemble_b(disc: &Discretization) -> CooMatrix {
    let tri = &disc.tri;
    let (bv, bp) = (&disc.vel.basis, &disc.pre.basis);
    let (nv, np) = (bv.ndofs, bp.ndofs);
    let rule = cell_rule(2 * disc.k);
    let tv = bv.tabulate(&rule.points);
    let tp = bp.tabulate(&rule.points);
    let locals: Vec<Local> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mv = map_tabulation(bv, geom, &tv);
            let mut m = vec![0.0; np * nv];
            for (q, w) in rule.weights.iter().enumerate() {
                let w = w * geom.abs_det;
                for j in 0..nv {
                    let d = mv.div(q, j);
                    for i in 0..np {
                        m[i * nv + j] += w * d * tp.value(q, i)[0];
                    }
                }
            }
            (disc.pre.dofmap.cell(c).to_vec(), disc.vel.dofmap.cell(c).to_vec(), m)
        })
        .collect();
    let mut coo = CooMatrix::new(disc.pre.ndofs(), disc.vel.ndofs());
    insert_all(&mut coo, locals, 1.0);
    coo
}

/// Mass matrix of the pressure space.
pub fn assemble_pressure_mass(disc: &Discretization) -> CooMatrix {
    let tri = &disc.tri;
    let bp = &disc.pre.basis;
    let np = bp.ndofs;
    let rule = cell_rule(2 * disc.k);
    let tp = bp.tabulate(&rule.points);
    let mut coo = CooMatrix::new(disc.pre.ndofs(), disc.pre.ndofs());
    for c in 0..tri.num_cells() {
        let d = tri.geometry[c].abs_det;
        let mut m = vec![0.0; np * np];
        for (q, w) in rule.weights.iter().enumerate() {
            for i in 0..np {
                for j in 0..np {
                    m[i * np + j] += w * d * tp.value(q, i)[0] * tp.value(q, j)[0];
                }
            }
        }
        let dofs = disc.pre.dofmap.cell(c);
        coo.push_block(dofs, dofs, &m, 1.0);
    }
    coo
}

/// `m_i = (q_i, 1)`.
pub fn pressure_mean_vector(disc: &Discretization) -> Vec<f64> {
    let tri = &disc.tri;
    let bp = &disc.pre.basis;
    let rule = cell_rule(disc.k);
    let tp = bp.tabulate(&rule.points);
    let mut m = vec![0.0; disc.pre.ndofs()];
    for c in 0..tri.num_cells() {
        let d = tri.geometry[c].abs_det;
        for (i, g) in disc.pre.dofmap.cell(c).iter().enumerate() {
            m[*g] += rule.weights.iter().enumerate().map(|(q, w)| w * d * tp.value(q, i)[0]).sum::<f64>();
        }
    }
    m
}

/// Right-hand sides of the velocity and magnetic equations.
#[derive(Debug, Clone)]
pub struct LoadVectors {
    pub velocity: Vec<f64>,
    pub magnetic: Vec<f64>,
}

/// Loads of a manufactured case, including the boundary-data terms that make
/// the scheme consistent for non-vanishing traces.
pub fn assemble_rhs(
    disc: &Discretization,
    params: &ProblemParams,
    case: &dyn ManufacturedCase,
    rhs_degree: usize,
) -> LoadVectors {
    let tri = &disc.tri;
    let coef = params.coefficients();
    let (bv, bm) = (&disc.vel.basis, &disc.mag.basis);
    let (nv, nm) = (bv.ndofs, bm.ndofs);
    let magnetic = case.magnetic_loads();
    let rule = cell_rule(rhs_degree);
    let tv = bv.tabulate(&rule.points);
    let tm = bm.tabulate(&rule.points);
    let cells: Vec<(Vec<f64>, Vec<f64>)> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mv = map_tabulation(bv, geom, &tv);
            let mm = map_tabulation(bm, geom, &tm);
            let mut fu = vec![0.0; nv];
            let mut fb = vec![0.0; nm];
            for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let w = w * geom.abs_det;
                let x = geom.map(*xh);
                let f = case.f(&coef, x);
                for (i, o) in fu.iter_mut().enumerate() {
                    *o += w * geometry::dot(f, mv.value(q, i));
                }
                if magnetic {
                    let g = case.g(&coef, x);
                    for (i, o) in fb.iter_mut().enumerate() {
                        *o += w * geometry::dot(g, mm.value(q, i));
                    }
                }
            }
            (fu, fb)
        })
        .collect();
    let mut velocity = vec![0.0; disc.vel.ndofs()];
    let mut mag = vec![0.0; disc.mag.ndofs()];
    for (c, (fu, fb)) in cells.iter().enumerate() {
        for (g, v) in disc.vel.dofmap.cell(c).iter().zip(fu) {
            velocity[*g] += v;
        }
        for (g, v) in disc.mag.dofmap.cell(c).iter().zip(fb) {
            mag[*g] += v;
        }
    }
    let boundary: Vec<usize> = (0..tri.faces.faces.len()).filter(|&f| tri.faces.faces[f].is_boundary()).collect();
    let faces: Vec<(usize, Vec<f64>, Vec<f64>)> = boundary
        .par_iter()
        .map(|&f| {
            let fq = face_quad(tri, f, rhs_degree);
            let c = fq.cells[0];
            let mv = fq.side_tabulation(tri, bv, 0);
            let mm = fq.side_tabulation(tri, bm, 0);
            let n = fq.normal;
            let mut fu = vec![0.0; nv];
            let mut fb = vec![0.0; nm];
            for (q, (x, w)) in fq.points.iter().zip(&fq.weights).enumerate() {
                let g = case.u(*x);
                let th = case.theta(*x);
                let inflow = (-geometry::dot(case.chi(*x), n)).max(0.0);
                let tg = geometry::cross(th, g);
                for (i, o) in fu.iter_mut().enumerate() {
                    let v = mv.value(q, i);
                    let en = geometry::mat_vec(&sym(mv.grad(q, i)), n);
                    let sip = params.nu_s * (-geometry::dot(g, en) + params.mu_a / fq.h * geometry::dot(g, v));
                    let cip = params.mu_j1 * geometry::dot(tg, geometry::cross(th, v));
                    *o += w * (sip + cip + inflow * geometry::dot(g, v));
                }
                if magnetic {
                    // nu <curl B x n, H> + <n x (g x Theta), H>
                    let nat = geometry::scale(geometry::cross(case.curl_b(*x), n), params.nu_m);
                    let cpl = geometry::cross(n, geometry::cross(g, th));
                    let t = geometry::add(nat, cpl);
                    for (i, o) in fb.iter_mut().enumerate() {
                        *o += w * geometry::dot(t, mm.value(q, i));
                    }
                }
            }
            (c, fu, fb)
        })
        .collect();
    for (c, fu, fb) in faces {
        for (g, v) in disc.vel.dofmap.cell(c).iter().zip(&fu) {
            velocity[*g] += v;
        }
        for (g, v) in disc.mag.dofmap.cell(c).iter().zip(&fb) {
            mag[*g] += v;
        }
    }
    LoadVectors { velocity, magnetic: mag }
}

/// Assembled coupled system after elimination of the constrained velocity dofs.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub layout: Layout,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Eliminated velocity dofs and their prescribed values.
    pub constrained: Vec<(usize, f64)>,
    /// Magnetic load vector before elimination.
    pub magnetic_load: Vec<f64>,
    pub pressure_mean: Vec<f64>,
}

/// Options controlling quadrature of the loads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub rhs_degree: usize,
    pub boundary_degree: usize,
}

impl AssemblyOptions {
    pub fn for_degree(k: usize) -> Self {
        Self { rhs_degree: 2 * k + 6, boundary_degree: INTERP_QUAD_DEGREE }
    }
}

/// Full operator before elimination, blockwise.
pub fn assemble_operator(disc: &Discretization, params: &ProblemParams, adv: &dyn Advection) -> CooMatrix {
    let lay = disc.layout();
    let n = lay.total();
    let mut coo = CooMatrix::new(n, n);
    let a_uu = assemble_velocity(disc, &VelocityForm::operator(params), adv);
    let d = assemble_d(disc, adv);
    let b = assemble_b(disc);
    let a_bb = assemble_magnetic(disc, params.sigma_m, params.nu_m);
    let mean = pressure_mean_vector(disc);
    let shift = |m: &CooMatrix, r0: usize, c0: usize, s: f64, coo: &mut CooMatrix| {
        for k in 0..m.nnz() {
            coo.push(r0 + m.rows[k], c0 + m.cols[k], s * m.vals[k]);
        }
    };
    shift(&a_uu, 0, 0, 1.0, &mut coo);
    // Velocity rows: + b(v, p) - d(B, v).
    for k in 0..b.nnz() {
        coo.push(b.cols[k], lay.p0() + b.rows[k], b.vals[k]);
    }
    shift(&d, 0, lay.b0(), -1.0, &mut coo);
    // Pressure rows: b(u, q) + lambda (q, 1).
    shift(&b, lay.p0(), 0, 1.0, &mut coo);
    for (i, m) in mean.iter().enumerate() {
        coo.push(lay.p0() + i, lay.lambda(), *m);
        coo.push(lay.lambda(), lay.p0() + i, *m);
    }
    // Magnetic rows: sigma (B, H) + nu a_M(B, H) + d(H, u).
    shift(&a_bb, lay.b0(), lay.b0(), 1.0, &mut coo);
    for k in 0..d.nnz() {
        coo.push(lay.b0() + d.cols[k], d.rows[k], d.vals[k]);
    }
    coo
}

/// Values of the constrained velocity dofs: normal-trace moments of the exact velocity.
pub fn constrained_values(disc: &Discretization, case: &dyn ManufacturedCase, degree: usize) -> Vec<(usize, f64)> {
    let all = interpolate(&disc.tri, &disc.vel, |x| case.u(x), degree);
    disc.vel.dofmap.constrained_dofs().into_iter().map(|g| (g, all[g])).collect()
}

/// Moves constrained columns to the right-hand side and replaces their rows by identity rows.
pub fn eliminate(a: &CsrMatrix, rhs: &mut [f64], constrained: &[(usize, f64)]) -> CsrMatrix {
    let n = a.nrows;
    let mut value = vec![None; n];
    for &(g, v) in constrained {
        value[g] = Some(v);
    }
    let mut coo = CooMatrix::new(n, n);
    for r in 0..n {
        if let Some(v) = value[r] {
            coo.push(r, r, 1.0);
            rhs[r] = v;
            continue;
        }
        let (idx, val) = a.row(r);
        for (c, x) in idx.iter().zip(val) {
            match value[*c] {
                Some(v) => rhs[r] -= x * v,
                None => coo.push(r, *c, *x),
            }
        }
    }
    coo.to_csr()
}

pub fn assemble_system(
    disc: &Discretization,
    params: &ProblemParams,
    case: &dyn ManufacturedCase,
    opts: &AssemblyOptions,
) -> Result<SparseSystem> {
    params.validate()?;
    if params.k != disc.k {
        return Err(FemError::DimensionMismatch(format!(
            "parameters for k = {} but spaces of degree {}",
            params.k, disc.k
        )));
    }
    let lay = disc.layout();
    let adv = CaseAdvection(case);
    let a = assemble_operator(disc, params, &adv).to_csr();
    let loads = assemble_rhs(disc, params, case, opts.rhs_degree);
    let mut rhs = vec![0.0; lay.total()];
    rhs[..lay.nu].copy_from_slice(&loads.velocity);
    rhs[lay.b0()..].copy_from_slice(&loads.magnetic);
    let constrained = constrained_values(disc, case, opts.boundary_degree);
    let matrix = eliminate(&a, &mut rhs, &constrained);
    Ok(SparseSystem {
        layout: lay,
        matrix,
        rhs,
        constrained,
        magnetic_load: loads.magnetic,
        pressure_mean: pressure_mean_vector(disc),
    })
}

/// Interpolant of the exact solution in the system layout (`lambda = 0`).
pub fn exact_dof_vector(disc: &Discretization, case: &dyn ManufacturedCase, degree: usize) -> Vec<f64> {
    let lay = disc.layout();
    let mut x = vec![0.0; lay.total()];
    let u = interpolate(&disc.tri, &disc.vel, |y| case.u(y), degree);
    let p = interpolate(&disc.tri, &disc.pre, |y| [case.p(y), 0.0, 0.0], degree);
    let b = interpolate(&disc.tri, &disc.mag, |y| case.b(y), degree);
    x[..lay.nu].copy_from_slice(&u);
    x[lay.p0()..lay.lambda()].copy_from_slice(&p);
    x[lay.b0()..].copy_from_slice(&b);
    x
}

/// Solution of the coupled system, split into fields.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub residual: f64,
    pub refinement_steps: usize,
    pub stats: PivotStats,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
}

pub fn solve_system(sys: &SparseSystem) -> Result<DiscreteSolution> {
    let lay = sys.layout;
    let sol = solve_linear(&sys.matrix, &sys.rhs)?;
    let x = &sol.x;
    let mut p = x[lay.p0()..lay.lambda()].to_vec();
    let vol: f64 = sys.pressure_mean.iter().sum();
    let mean = crate::sparse::dot(&sys.pressure_mean, &p) / vol;
    // Constants have all nodal coefficients equal.
    p.iter_mut().for_each(|v| *v -= mean);
    Ok(DiscreteSolution {
        u: x[..lay.nu].to_vec(),
        p,
        b: x[lay.b0()..].to_vec(),
        lambda: x[lay.lambda()],
        residual: sol.residual,
        refinement_steps: sol.refinement_steps,
        stats: sol.stats,
        factor_seconds: sol.factor_seconds,
        solve_seconds: sol.solve_seconds,
    })
}
