//! Reference bases on the unit tetrahedron.
//!
//! Every family spans a full polynomial space and is defined by a set of
//! degree-of-freedom functionals; the basis is the dual basis obtained by
//! inverting the moment matrix of the functionals against monomials.
//!
//! Functionals on shared entities are written in terms of the entity's
//! sorted vertices, which makes them identical from every incident cell
//! once cells use the sorted local numbering (see [`crate::mesh`]).

use nalgebra::DMatrix;

use crate::error::{FemError, Result};
use crate::geometry::{self, CellGeometry, Mat3, Point};
use crate::mesh::{REF_EDGES, REF_FACES};
use crate::quadrature;

pub const REF_VERTICES: [Point; 4] = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Brezzi-Douglas-Marini, H(div)-conforming, full `(P_k)^3`.
    Bdm,
    /// Nedelec of the second kind, H(curl)-conforming, full `(P_k)^3`.
    Nedelec2,
    /// Discontinuous scalar `P_m`.
    DiscontinuousP,
    /// Continuous scalar Lagrange `P_m`.
    Lagrange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Vertex = 0,
    Edge = 1,
    Face = 2,
    Cell = 3,
}

/// A linear functional `l(v) = sum_q w_q . v(x_q)` on reference fields.
#[derive(Debug, Clone)]
pub struct Functional {
    pub points: Vec<Point>,
    /// Vector weights; scalar functionals use component 0 only.
    pub weights: Vec<Point>,
}

impl Functional {
    pub fn apply(&self, f: impl Fn(Point) -> Point) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| geometry::dot(*w, f(*x))).sum()
    }
}

#[derive(Debug, Clone)]
pub struct DofInfo {
    pub kind: EntityKind,
    /// Local entity index (vertex 0..4, edge 0..6, face 0..4, cell 0).
    pub entity: usize,
    pub functional: Functional,
}

/// Exponents of all monomials of total degree `<= degree`, graded order.
pub fn monomials(degree: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        for a in (0..=d).rev() {
            for b in (0..=(d - a)).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

fn ipow(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

fn eval_monomials(monos: &[[u32; 3]], x: Point, vals: &mut [f64], grads: &mut [Point]) {
    for (j, e) in monos.iter().enumerate() {
        let p = [ipow(x[0], e[0]), ipow(x[1], e[1]), ipow(x[2], e[2])];
        vals[j] = p[0] * p[1] * p[2];
        let d = |k: usize| -> f64 {
            if e[k] == 0 {
                0.0
            } else {
                e[k] as f64 * ipow(x[k], e[k] - 1)
            }
        };
        grads[j] = [d(0) * p[1] * p[2], p[0] * d(1) * p[2], p[0] * p[1] * d(2)];
    }
}

/// Reference values and first derivatives of a basis at a set of points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub npts: usize,
    pub ndofs: usize,
    /// `values[p * ndofs + i]`; scalar bases use component 0.
    pub values: Vec<Point>,
    /// `grads[p * ndofs + i][c][j] = d phi_i,c / d x_hat_j`.
    pub grads: Vec<Mat3>,
}

impl Tabulation {
    #[inline]
    pub fn value(&self, p: usize, i: usize) -> Point {
        self.values[p * self.ndofs + i]
    }

    #[inline]
    pub fn grad(&self, p: usize, i: usize) -> &Mat3 {
        &self.grads[p * self.ndofs + i]
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    pub family: Family,
    /// `k` for the vector families, `m` for the scalar ones.
    pub degree: usize,
    pub poly_degree: usize,
    pub value_size: usize,
    pub ndofs: usize,
    pub dofs: Vec<DofInfo>,
    /// Number of dofs attached to one vertex, edge, face and cell.
    pub dofs_per_entity: [usize; 4],
    /// 2-norm condition number of the moment matrix.
    pub moment_condition: f64,
    monos: Vec<[u32; 3]>,
    /// `coeffs[i * span + c * nmono + m]`.
    coeffs: Vec<f64>,
}

fn face_frame(f: usize) -> (Point, Point, Point) {
    let [a, b, c] = REF_FACES[f];
    (REF_VERTICES[a], REF_VERTICES[b], REF_VERTICES[c])
}

/// Homogeneous degree-`k` products of barycentrics, as exponent tuples.
fn bary_exponents_2(k: usize) -> Vec<[u32; 2]> {
    match k {
        0 => vec![[0, 0]],
        1 => vec![[1, 0], [0, 1]],
        2 => vec![[2, 0], [0, 2], [1, 1]],
        _ => unreachable!(),
    }
}

fn bary_exponents_3(k: usize) -> Vec<[u32; 3]> {
    match k {
        0 => vec![[0, 0, 0]],
        1 => vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        2 => vec![[2, 0, 0], [0, 2, 0], [0, 0, 2], [1, 1, 0], [1, 0, 1], [0, 1, 1]],
        _ => unreachable!(),
    }
}

fn bdm_functionals(k: usize, qdeg: usize) -> Vec<DofInfo> {
    let mut dofs = Vec::new();
    let tri = quadrature::tri_rule_clamped(qdeg);
    for f in 0..4 {
        let (a, b, c) = face_frame(f);
        let e1 = geometry::sub(b, a);
        let e2 = geometry::sub(c, a);
        let n = geometry::cross(e1, e2);
        let area2 = geometry::norm(n);
        let n = geometry::scale(n, 1.0 / area2);
        for ex in bary_exponents_3(k) {
            let mut points = Vec::with_capacity(tri.len());
            let mut weights = Vec::with_capacity(tri.len());
            for (p, w) in tri.points.iter().zip(&tri.weights) {
                let (s, t) = (p[0], p[1]);
                let l = [1.0 - s - t, s, t];
                let q = ipow(l[0], ex[0]) * ipow(l[1], ex[1]) * ipow(l[2], ex[2]);
                points.push(geometry::add(a, geometry::add(geometry::scale(e1, s), geometry::scale(e2, t))));
                weights.push(geometry::scale(n, w * area2 * q));
            }
            dofs.push(DofInfo { kind: EntityKind::Face, entity: f, functional: Functional { points, weights } });
        }
    }
    if k == 2 {
        let tet = quadrature::tet_rule_clamped(qdeg);
        // First-kind Nedelec of degree 1: constants and b x x.
        let fields: [fn(Point) -> Point; 6] = [
            |_| [1.0, 0.0, 0.0],
            |_| [0.0, 1.0, 0.0],
            |_| [0.0, 0.0, 1.0],
            |x| [0.0, -x[2], x[1]],
            |x| [x[2], 0.0, -x[0]],
            |x| [-x[1], x[0], 0.0],
        ];
        for w in fields {
            let points = tet.points.clone();
            let weights = tet.points.iter().zip(&tet.weights).map(|(x, q)| geometry::scale(w(*x), *q)).collect();
            dofs.push(DofInfo { kind: EntityKind::Cell, entity: 0, functional: Functional { points, weights } });
        }
    }
    dofs
}

fn nedelec2_functionals(k: usize, qdeg: usize) -> Vec<DofInfo> {
    let mut dofs = Vec::new();
    let line = quadrature::line_rule(qdeg);
    for (e, [ia, ib]) in REF_EDGES.iter().enumerate() {
        let (a, b) = (REF_VERTICES[*ia], REF_VERTICES[*ib]);
        let tau = geometry::sub(b, a);
        for ex in bary_exponents_2(k) {
            let mut points = Vec::with_capacity(line.len());
            let mut weights = Vec::with_capacity(line.len());
            for (p, w) in line.points.iter().zip(&line.weights) {
                let t = p[0];
                let q = ipow(1.0 - t, ex[0]) * ipow(t, ex[1]);
                points.push(geometry::add(a, geometry::scale(tau, t)));
                weights.push(geometry::scale(tau, w * q));
            }
            dofs.push(DofInfo { kind: EntityKind::Edge, entity: e, functional: Functional { points, weights } });
        }
    }
    if k == 2 {
        let tri = quadrature::tri_rule_clamped(qdeg);
        for f in 0..4 {
            let (a, b, c) = face_frame(f);
            let e1 = geometry::sub(b, a);
            let e2 = geometry::sub(c, a);
            // Lowest-order Raviart-Thomas on the face, normalised by the face area.
            for which in 0..3 {
                let mut points = Vec::with_capacity(tri.len());
                let mut weights = Vec::with_capacity(tri.len());
                for (p, w) in tri.points.iter().zip(&tri.weights) {
                    let rel = geometry::add(geometry::scale(e1, p[0]), geometry::scale(e2, p[1]));
                    let psi = match which {
                        0 => e1,
                        1 => e2,
                        _ => rel,
                    };
                    points.push(geometry::add(a, rel));
                    weights.push(geometry::scale(psi, 2.0 * w));
                }
                dofs.push(DofInfo { kind: EntityKind::Face, entity: f, functional: Functional { points, weights } });
            }
        }
    }
    dofs
}

fn point_dof(kind: EntityKind, entity: usize, x: Point) -> DofInfo {
    DofInfo { kind, entity, functional: Functional { points: vec![x], weights: vec![[1.0, 0.0, 0.0]] } }
}

fn lagrange_functionals(m: usize, continuous: bool) -> Vec<DofInfo> {
    let mut dofs = Vec::new();
    if m == 0 {
        dofs.push(point_dof(EntityKind::Cell, 0, [0.25; 3]));
        return dofs;
    }
    let kind = |k: EntityKind| if continuous { k } else { EntityKind::Cell };
    let ent = |i: usize| if continuous { i } else { 0 };
    for (v, x) in REF_VERTICES.iter().enumerate() {
        dofs.push(point_dof(kind(EntityKind::Vertex), ent(v), *x));
    }
    for (e, [ia, ib]) in REF_EDGES.iter().enumerate() {
        for j in 1..m {
            let t = j as f64 / m as f64;
            let x = geometry::add(geometry::scale(REF_VERTICES[*ia], 1.0 - t), geometry::scale(REF_VERTICES[*ib], t));
            dofs.push(point_dof(kind(EntityKind::Edge), ent(e), x));
        }
    }
    if m == 3 {
        for f in 0..4 {
            let (a, b, c) = face_frame(f);
            dofs.push(point_dof(kind(EntityKind::Face), ent(f), geometry::centroid3([a, b, c])));
        }
    }
    dofs
}

impl ReferenceBasis {
    pub fn new(family: Family, degree: usize) -> Result<Self> {
        let (value_size, poly_degree, dofs) = match family {
            Family::Bdm => {
                check_k(degree)?;
                (3, degree, bdm_functionals(degree, 2 * degree + 2))
            }
            Family::Nedelec2 => {
                check_k(degree)?;
                (3, degree, nedelec2_functionals(degree, 2 * degree + 2))
            }
            Family::DiscontinuousP => {
                if degree > 3 {
                    return Err(FemError::UnsupportedElementDegree(degree));
                }
                (1, degree, lagrange_functionals(degree, false))
            }
            Family::Lagrange => {
                if !(1..=3).contains(&degree) {
                    return Err(FemError::UnsupportedElementDegree(degree));
                }
                (1, degree, lagrange_functionals(degree, true))
            }
        };
        let monos = monomials(poly_degree);
        let nm = monos.len();
        let span = value_size * nm;
        let ndofs = dofs.len();
        if ndofs != span {
            return Err(FemError::DimensionMismatch(format!(
                "{family:?}{degree}: {ndofs} functionals for a span of dimension {span}"
            )));
        }
        // moment[i][j] = l_i(phi_j), phi_j = monomial m in component c (j = c * nm + m).
        let mut moment = DMatrix::<f64>::zeros(ndofs, span);
        let mut vals = vec![0.0; nm];
        let mut grads = vec![[0.0; 3]; nm];
        for (i, dof) in dofs.iter().enumerate() {
            for (x, w) in dof.functional.points.iter().zip(&dof.functional.weights) {
                eval_monomials(&monos, *x, &mut vals, &mut grads);
                for c in 0..value_size {
                    for m in 0..nm {
                        moment[(i, c * nm + m)] += w[c] * vals[m];
                    }
                }
            }
        }
        let sv = moment.clone().singular_values();
        let cond = sv.max() / sv.min();
        if !(cond < 1e6) {
            return Err(FemError::DimensionMismatch(format!(
                "{family:?}{degree}: moment matrix ill-conditioned ({cond:e})"
            )));
        }
        let inv = moment
            .try_inverse()
            .ok_or_else(|| FemError::DimensionMismatch(format!("{family:?}{degree}: singular moment matrix")))?;
        // Basis i = sum_j inv[j][i] phi_j.
        let mut coeffs = vec![0.0; ndofs * span];
        for i in 0..ndofs {
            for j in 0..span {
                coeffs[i * span + j] = inv[(j, i)];
            }
        }
        let mut dofs_per_entity = [0usize; 4];
        for kind in [EntityKind::Vertex, EntityKind::Edge, EntityKind::Face, EntityKind::Cell] {
            dofs_per_entity[kind as usize] = dofs.iter().filter(|d| d.kind == kind && d.entity == 0).count();
        }
        Ok(Self {
            family,
            degree,
            poly_degree,
            value_size,
            ndofs,
            dofs,
            dofs_per_entity,
            moment_condition: cond,
            monos,
            coeffs,
        })
    }

    /// Dof functionals regenerated with a quadrature of the given degree
    /// (for interpolating non-polynomial fields). Point-value families ignore it.
    pub fn functionals(&self, qdeg: usize) -> Vec<DofInfo> {
        match self.family {
            Family::Bdm => bdm_functionals(self.degree, qdeg),
            Family::Nedelec2 => nedelec2_functionals(self.degree, qdeg),
            Family::DiscontinuousP => lagrange_functionals(self.degree, false),
            Family::Lagrange => lagrange_functionals(self.degree, true),
        }
    }

    pub fn tabulate(&self, points: &[Point]) -> Tabulation {
        let nm = self.monos.len();
        let span = self.value_size * nm;
        let mut vals = vec![0.0; nm];
        let mut mgrads = vec![[0.0; 3]; nm];
        let mut values = vec![[0.0; 3]; points.len() * self.ndofs];
        let mut grads = vec![[[0.0; 3]; 3]; points.len() * self.ndofs];
        for (p, x) in points.iter().enumerate() {
            eval_monomials(&self.monos, *x, &mut vals, &mut mgrads);
            for i in 0..self.ndofs {
                let row = &self.coeffs[i * span..(i + 1) * span];
                let mut v = [0.0; 3];
                let mut g = [[0.0; 3]; 3];
                for c in 0..self.value_size {
                    let cr = &row[c * nm..(c + 1) * nm];
                    for m in 0..nm {
                        let a = cr[m];
                        if a != 0.0 {
                            v[c] += a * vals[m];
                            g[c][0] += a * mgrads[m][0];
                            g[c][1] += a * mgrads[m][1];
                            g[c][2] += a * mgrads[m][2];
                        }
                    }
                }
                values[p * self.ndofs + i] = v;
                grads[p * self.ndofs + i] = g;
            }
        }
        Tabulation { npts: points.len(), ndofs: self.ndofs, values, grads }
    }

    /// Pulls a physical field back to the reference cell with the map
    /// appropriate for this family.
    pub fn pullback(&self, geom: &CellGeometry, v: Point) -> Point {
        match self.family {
            Family::Bdm => geom.pullback_contravariant(v),
            Family::Nedelec2 => geom.pullback_covariant(v),
            Family::DiscontinuousP | Family::Lagrange => v,
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 1 || k == 2 {
        Ok(())
    } else {
        Err(FemError::UnsupportedElementDegree(k))
    }
}

pub fn bdm_basis(k: usize) -> Result<ReferenceBasis> {
    ReferenceBasis::new(Family::Bdm, k)
}

pub fn nedelec2_basis(k: usize) -> Result<ReferenceBasis> {
    ReferenceBasis::new(Family::Nedelec2, k)
}

pub fn discontinuous_basis(m: usize) -> Result<ReferenceBasis> {
    ReferenceBasis::new(Family::DiscontinuousP, m)
}

pub fn lagrange_basis(m: usize) -> Result<ReferenceBasis> {
    ReferenceBasis::new(Family::Lagrange, m)
}

/// Physical values and derivatives of a basis on one cell.
#[derive(Debug, Clone)]
pub struct MappedTabulation {
    pub npts: usize,
    pub ndofs: usize,
    pub values: Vec<Point>,
    pub grads: Vec<Mat3>,
}

impl MappedTabulation {
    #[inline]
    pub fn value(&self, p: usize, i: usize) -> Point {
        self.values[p * self.ndofs + i]
    }

    #[inline]
    pub fn grad(&self, p: usize, i: usize) -> &Mat3 {
        &self.grads[p * self.ndofs + i]
    }

    #[inline]
    pub fn div(&self, p: usize, i: usize) -> f64 {
        geometry::div_of(self.grad(p, i))
    }

    #[inline]
    pub fn curl(&self, p: usize, i: usize) -> Point {
        geometry::curl_of(self.grad(p, i))
    }

    /// Scalar gradient (scalar families store it in row 0).
    #[inline]
    pub fn grad_scalar(&self, p: usize, i: usize) -> Point {
        self.grad(p, i)[0]
    }
}

/// Applies the family's Piola map to a reference tabulation.
pub fn map_tabulation(basis: &ReferenceBasis, geom: &CellGeometry, tab: &Tabulation) -> MappedTabulation {
    let n = tab.values.len();
    let mut values = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    match basis.family {
        Family::Bdm => {
            let s = 1.0 / geom.det;
            for (v, g) in tab.values.iter().zip(&tab.grads) {
                values.push(geometry::scale(geometry::mat_vec(&geom.jac, *v), s));
                grads.push(geom.grad_contravariant(g));
            }
        }
        Family::Nedelec2 => {
            for (v, g) in tab.values.iter().zip(&tab.grads) {
                values.push(geometry::mat_t_vec(&geom.jac_inv, *v));
                grads.push(geom.grad_covariant(g));
            }
        }
        Family::DiscontinuousP | Family::Lagrange => {
            for (v, g) in tab.values.iter().zip(&tab.grads) {
                values.push(*v);
                grads.push([geom.grad_scalar(g[0]), [0.0; 3], [0.0; 3]]);
            }
        }
    }
    MappedTabulation { npts: tab.npts, ndofs: tab.ndofs, values, grads }
}
