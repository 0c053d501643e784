//! Global degree-of-freedom numbering and finite element functions.
//!
//! Dofs are numbered entity by entity (vertices, edges, faces, cells). Each
//! cell's local dofs are written against its sorted vertex numbering, so
//! shared entities get identical global indices from every incident cell
//! and no orientation signs are needed: every sign is `+1`.

use crate::elements::{map_tabulation, EntityKind, Family, ReferenceBasis, Tabulation};
use crate::error::{FemError, Result};
use crate::geometry::{Mat3, Point};
use crate::mesh::Triangulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// No constraint (natural boundary conditions).
    Natural,
    /// All dofs on boundary faces are constrained (strong normal trace).
    NormalTrace,
    /// One global zero-mean constraint.
    MeanZero,
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub ndofs_per_cell: usize,
    pub num_dofs: usize,
    cell_dofs: Vec<usize>,
    pub constrained: Vec<bool>,
    pub mean_constraint: bool,
}

impl DofMap {
    #[inline]
    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c * self.ndofs_per_cell..(c + 1) * self.ndofs_per_cell]
    }

    pub fn num_cells(&self) -> usize {
        self.cell_dofs.len() / self.ndofs_per_cell.max(1)
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs).filter(|&i| self.constrained[i]).collect()
    }

    pub fn num_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&b| b).count()
    }
}

pub fn build_dofmap(tri: &Triangulation, basis: &ReferenceBasis, policy: BoundaryPolicy) -> Result<DofMap> {
    match (basis.family, policy) {
        (Family::Bdm, BoundaryPolicy::MeanZero)
        | (Family::Nedelec2 | Family::Lagrange, BoundaryPolicy::NormalTrace) => {
            return Err(FemError::DimensionMismatch(format!(
                "boundary policy {policy:?} does not apply to {:?}",
                basis.family
            )));
        }
        _ => {}
    }
    let ncells = tri.num_cells();
    let counts = [tri.mesh.num_vertices(), tri.edges.edges.len(), tri.faces.faces.len(), ncells];
    let mut offsets = [0usize; 4];
    let mut total = 0;
    for k in 0..4 {
        offsets[k] = total;
        total += counts[k] * basis.dofs_per_entity[k];
    }
    let nloc = basis.ndofs;
    let mut cell_dofs = vec![0usize; ncells * nloc];
    let mut constrained = vec![false; total];
    for c in 0..ncells {
        let sorted = tri.mesh.sorted_cell(c);
        let mut seen = [[0usize; 6]; 4];
        for (i, dof) in basis.dofs.iter().enumerate() {
            let kind = dof.kind as usize;
            let global_entity = match dof.kind {
                EntityKind::Vertex => sorted[dof.entity],
                EntityKind::Edge => tri.edges.cell_edges[c][dof.entity],
                EntityKind::Face => tri.faces.cell_faces[c][dof.entity],
                EntityKind::Cell => c,
            };
            let j = seen[kind][dof.entity];
            seen[kind][dof.entity] += 1;
            let g = offsets[kind] + global_entity * basis.dofs_per_entity[kind] + j;
            cell_dofs[c * nloc + i] = g;
            if policy == BoundaryPolicy::NormalTrace
                && dof.kind == EntityKind::Face
                && tri.faces.faces[global_entity].is_boundary()
            {
                constrained[g] = true;
            }
        }
    }
    Ok(DofMap {
        ndofs_per_cell: nloc,
        num_dofs: total,
        cell_dofs,
        constrained,
        mean_constraint: policy == BoundaryPolicy::MeanZero,
    })
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    pub basis: ReferenceBasis,
    pub dofmap: DofMap,
}

impl FeSpace {
    pub fn new(tri: &Triangulation, basis: ReferenceBasis, policy: BoundaryPolicy) -> Result<Self> {
        let dofmap = build_dofmap(tri, &basis, policy)?;
        Ok(Self { basis, dofmap })
    }

    pub fn ndofs(&self) -> usize {
        self.dofmap.num_dofs
    }
}

#[derive(Debug, Clone)]
pub struct FeFunction<'a> {
    pub space: &'a FeSpace,
    pub coeffs: Vec<f64>,
}

impl<'a> FeFunction<'a> {
    pub fn zero(space: &'a FeSpace) -> Self {
        Self { space, coeffs: vec![0.0; space.ndofs()] }
    }

    pub fn from_coeffs(space: &'a FeSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(FemError::DimensionMismatch(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.ndofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn local_coeffs(&self, c: usize) -> Vec<f64> {
        self.space.dofmap.cell(c).iter().map(|&g| self.coeffs[g]).collect()
    }

    /// Physical values and gradients on cell `c` at the tabulated reference points.
    /// Scalar spaces return the value in component 0 and the gradient in row 0.
    pub fn eval_cell(&self, tri: &Triangulation, c: usize, tab: &Tabulation) -> Vec<(Point, Mat3)> {
        let mapped = map_tabulation(&self.space.basis, &tri.geometry[c], tab);
        let local = self.local_coeffs(c);
        (0..tab.npts)
            .map(|p| {
                let mut v = [0.0; 3];
                let mut g = [[0.0; 3]; 3];
                for (i, a) in local.iter().enumerate() {
                    let vi = mapped.value(p, i);
                    let gi = mapped.grad(p, i);
                    for r in 0..3 {
                        v[r] += a * vi[r];
                        for s in 0..3 {
                            g[r][s] += a * gi[r][s];
                        }
                    }
                }
                (v, g)
            })
            .collect()
    }

    /// Value and gradient at a single reference point of cell `c`.
    pub fn eval_point(&self, tri: &Triangulation, c: usize, xhat: Point) -> (Point, Mat3) {
        let tab = self.space.basis.tabulate(&[xhat]);
        self.eval_cell(tri, c, &tab)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{bdm_basis, discontinuous_basis, lagrange_basis, nedelec2_basis};
    use crate::geometry;
    use crate::mesh::generate_cube_mesh;
    use crate::quadrature;

    fn cube(n: usize) -> Triangulation {
        Triangulation::new(generate_cube_mesh(n)).unwrap()
    }

    #[test]
    fn cube1_bdm1_counts() {
        let t = cube(1);
        let d = build_dofmap(&t, &bdm_basis(1).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
        assert_eq!(d.num_dofs, 54);
        assert_eq!(d.num_constrained(), 36);
    }

    #[test]
    fn cube1_p0_counts() {
        let t = cube(1);
        let d = build_dofmap(&t, &discontinuous_basis(0).unwrap(), BoundaryPolicy::MeanZero).unwrap();
        assert_eq!(d.num_dofs, 6);
        assert!(d.mean_constraint);
    }

    #[test]
    fn policy_mismatch_rejected() {
        let t = cube(1);
        assert!(build_dofmap(&t, &nedelec2_basis(1).unwrap(), BoundaryPolicy::NormalTrace).is_err());
    }

    #[test]
    fn lagrange_counts() {
        let t = cube(2);
        let nv = t.mesh.num_vertices();
        let ne = t.edges.edges.len();
        let nf = t.faces.faces.len();
        let p2 = build_dofmap(&t, &lagrange_basis(2).unwrap(), BoundaryPolicy::Natural).unwrap();
        assert_eq!(p2.num_dofs, nv + ne);
        let p3 = build_dofmap(&t, &lagrange_basis(3).unwrap(), BoundaryPolicy::Natural).unwrap();
        assert_eq!(p3.num_dofs, nv + 2 * ne + nf);
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    // Values of a function on interior face f from both sides at the face quadrature points.
    fn face_traces(t: &Triangulation, u: &FeFunction, f: usize) -> Vec<(Point, Point, Point)> {
        let face = &t.faces.faces[f];
        let rule = quadrature::tri_rule(4).unwrap();
        let p = face.vertices.map(|v| t.mesh.vertices[v]);
        let e1 = geometry::sub(p[1], p[0]);
        let e2 = geometry::sub(p[2], p[0]);
        rule.points
            .iter()
            .map(|q| {
                let x = geometry::add(p[0], geometry::add(geometry::scale(e1, q[0]), geometry::scale(e2, q[1])));
                let side = |k: usize| {
                    let c = face.incidence[k].cell;
                    u.eval_point(t, c, t.geometry[c].pullback(x)).0
                };
                (side(0), side(1), face.normal)
            })
            .collect()
    }

    #[test]
    fn bdm_normal_trace_single_valued() {
        let t = cube(2);
        for k in 1..=2 {
            let s = FeSpace::new(&t, bdm_basis(k).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
            let u = FeFunction::from_coeffs(&s, pseudo_random(s.ndofs(), 7)).unwrap();
            let mut worst = 0.0f64;
            let mut tangential = 0.0f64;
            for f in 0..t.faces.faces.len() {
                if t.faces.faces[f].is_boundary() {
                    continue;
                }
                for (a, b, n) in face_traces(&t, &u, f) {
                    let jump = geometry::sub(a, b);
                    worst = worst.max(geometry::dot(jump, n).abs());
                    tangential = tangential.max(geometry::norm(geometry::cross(jump, n)));
                }
            }
            assert!(worst < 1e-10, "k={k}: {worst}");
            assert!(tangential > 1e-3);
        }
    }

    #[test]
    fn nedelec_tangential_trace_single_valued() {
        let t = cube(2);
        for k in 1..=2 {
            let s = FeSpace::new(&t, nedelec2_basis(k).unwrap(), BoundaryPolicy::Natural).unwrap();
            let u = FeFunction::from_coeffs(&s, pseudo_random(s.ndofs(), 11)).unwrap();
            let mut worst = 0.0f64;
            for f in 0..t.faces.faces.len() {
                if t.faces.faces[f].is_boundary() {
                    continue;
                }
                for (a, b, n) in face_traces(&t, &u, f) {
                    worst = worst.max(geometry::norm(geometry::cross(geometry::sub(a, b), n)));
                }
            }
            assert!(worst < 1e-10, "k={k}: {worst}");
        }
    }

    #[test]
    fn lagrange_continuous() {
        let t = cube(2);
        let s = FeSpace::new(&t, lagrange_basis(3).unwrap(), BoundaryPolicy::Natural).unwrap();
        let u = FeFunction::from_coeffs(&s, pseudo_random(s.ndofs(), 3)).unwrap();
        for f in 0..t.faces.faces.len() {
            if t.faces.faces[f].is_boundary() {
                continue;
            }
            for (a, b, _) in face_traces(&t, &u, f) {
                assert!((a[0] - b[0]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn boundary_face_dofs_are_the_constrained_ones() {
        let t = cube(1);
        let s = FeSpace::new(&t, bdm_basis(2).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
        for c in 0..t.num_cells() {
            let dofs = s.dofmap.cell(c);
            for (i, d) in s.basis.dofs.iter().enumerate() {
                let on_boundary =
                    d.kind == EntityKind::Face && t.faces.faces[t.faces.cell_faces[c][d.entity]].is_boundary();
                assert_eq!(s.dofmap.constrained[dofs[i]], on_boundary);
            }
        }
    }
}
