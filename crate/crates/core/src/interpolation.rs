//! Interpolants, elementwise L2 projections and Oswald averaging.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dofmap::{FeFunction, FeSpace};
use crate::elements::{discontinuous_basis, Family, ReferenceBasis, Tabulation};
use crate::error::{FemError, Result};
use crate::geometry::{self, Point};
use crate::mesh::{MacroMesh, Triangulation};
use crate::quadrature;
use crate::sparse::{CooMatrix, CsrMatrix};

/// Default quadrature degree for moments of non-polynomial fields.
pub const INTERP_QUAD_DEGREE: usize = 14;

/// Degree-of-freedom interpolant into any of the conforming spaces.
/// Scalar spaces read component 0 of the callback.
pub fn interpolate<F>(tri: &Triangulation, space: &FeSpace, f: F, qdeg: usize) -> Vec<f64>
where
    F: Fn(Point) -> Point + Sync,
{
    let basis = &space.basis;
    let functionals = basis.functionals(qdeg);
    let local: Vec<Vec<f64>> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            functionals.iter().map(|d| d.functional.apply(|xh| basis.pullback(geom, f(geom.map(xh))))).collect()
        })
        .collect();
    let mut coeffs = vec![0.0; space.ndofs()];
    for (c, vals) in local.iter().enumerate() {
        for (g, v) in space.dofmap.cell(c).iter().zip(vals) {
            coeffs[*g] = *v;
        }
    }
    coeffs
}

pub fn interp_bdm<'a, F>(tri: &Triangulation, space: &'a FeSpace, f: F) -> Result<FeFunction<'a>>
where
    F: Fn(Point) -> Point + Sync,
{
    if space.basis.family != Family::Bdm {
        return Err(FemError::DimensionMismatch("interp_bdm needs a BDM space".into()));
    }
    FeFunction::from_coeffs(space, interpolate(tri, space, f, INTERP_QUAD_DEGREE))
}

pub fn interp_nedelec<'a, F>(tri: &Triangulation, space: &'a FeSpace, f: F) -> Result<FeFunction<'a>>
where
    F: Fn(Point) -> Point + Sync,
{
    if space.basis.family != Family::Nedelec2 {
        return Err(FemError::DimensionMismatch("interp_nedelec needs a Nedelec space".into()));
    }
    FeFunction::from_coeffs(space, interpolate(tri, space, f, INTERP_QUAD_DEGREE))
}

/// Matrix of the Nedelec interpolant of gradients of a continuous Lagrange space.
/// Entries are cell independent because the covariant pullback of a gradient
/// is the reference gradient.
pub fn discrete_gradient(tri: &Triangulation, lagrange: &FeSpace, nedelec: &FeSpace) -> CsrMatrix {
    let lb = &lagrange.basis;
    let functionals = nedelec.basis.functionals(2 * lb.degree);
    let local: Vec<Vec<f64>> = functionals
        .iter()
        .map(|d| {
            let tab = lb.tabulate(&d.functional.points);
            (0..lb.ndofs)
                .map(|j| {
                    d.functional.weights.iter().enumerate().map(|(p, w)| geometry::dot(*w, tab.grad(p, j)[0])).sum()
                })
                .collect()
        })
        .collect();
    let mut visited = vec![false; nedelec.ndofs()];
    let mut coo = CooMatrix::new(nedelec.ndofs(), lagrange.ndofs());
    for c in 0..tri.num_cells() {
        let lcols = lagrange.dofmap.cell(c);
        for (i, &row) in nedelec.dofmap.cell(c).iter().enumerate() {
            if visited[row] {
                continue;
            }
            visited[row] = true;
            for (j, &col) in lcols.iter().enumerate() {
                if local[i][j].abs() > 1e-14 {
                    coo.push(row, col, local[i][j]);
                }
            }
        }
    }
    coo.to_csr()
}

/// Discontinuous piecewise polynomial field with up to three components,
/// stored as nodal coefficients of the reference `P_m` basis.
#[derive(Debug, Clone)]
pub struct PiecewiseField {
    pub degree: usize,
    pub ncomp: usize,
    pub basis: ReferenceBasis,
    /// `coeffs[(c * ncomp + comp) * nloc + i]`.
    pub coeffs: Vec<f64>,
}

impl PiecewiseField {
    pub fn zeros(degree: usize, ncomp: usize, ncells: usize) -> Result<Self> {
        let basis = discontinuous_basis(degree)?;
        let n = basis.ndofs;
        Ok(Self { degree, ncomp, basis, coeffs: vec![0.0; ncells * ncomp * n] })
    }

    #[inline]
    pub fn nloc(&self) -> usize {
        self.basis.ndofs
    }

    pub fn num_cells(&self) -> usize {
        self.coeffs.len() / (self.ncomp * self.nloc())
    }

    pub fn cell_coeffs(&self, c: usize, comp: usize) -> &[f64] {
        let n = self.nloc();
        let start = (c * self.ncomp + comp) * n;
        &self.coeffs[start..start + n]
    }

    pub fn cell_coeffs_mut(&mut self, c: usize, comp: usize) -> &mut [f64] {
        let n = self.nloc();
        let start = (c * self.ncomp + comp) * n;
        &mut self.coeffs[start..start + n]
    }

    /// Values at tabulated reference points (tabulation of `self.basis`).
    pub fn eval_tab(&self, c: usize, tab: &Tabulation, p: usize) -> Point {
        let mut out = [0.0; 3];
        for (comp, o) in out.iter_mut().enumerate().take(self.ncomp) {
            *o = self.cell_coeffs(c, comp).iter().enumerate().map(|(i, a)| a * tab.value(p, i)[0]).sum();
        }
        out
    }

    pub fn eval(&self, c: usize, xhat: Point) -> Point {
        let tab = self.basis.tabulate(&[xhat]);
        self.eval_tab(c, &tab, 0)
    }

    /// Cell mean of each component.
    pub fn cell_mean(&self, c: usize) -> Point {
        if self.degree == 0 {
            let mut out = [0.0; 3];
            for comp in 0..self.ncomp {
                out[comp] = self.cell_coeffs(c, comp)[0];
            }
            return out;
        }
        let rule = quadrature::tet_rule_clamped(self.degree);
        let tab = self.basis.tabulate(&rule.points);
        let mut out = [0.0; 3];
        for (p, w) in rule.weights.iter().enumerate() {
            out = geometry::add(out, geometry::scale(self.eval_tab(c, &tab, p), 6.0 * w));
        }
        out
    }
}

/// Elementwise L2 projection onto `P_m` of the first `ncomp` components.
pub fn l2_project<F>(tri: &Triangulation, m: usize, ncomp: usize, f: F) -> Result<PiecewiseField>
where
    F: Fn(Point) -> Point + Sync,
{
    l2_project_with_degree(tri, m, ncomp, f, (2 * m + 8).min(quadrature::MAX_DEGREE))
}

pub fn l2_project_with_degree<F>(
    tri: &Triangulation,
    m: usize,
    ncomp: usize,
    f: F,
    qdeg: usize,
) -> Result<PiecewiseField>
where
    F: Fn(Point) -> Point + Sync,
{
    let mut out = PiecewiseField::zeros(m, ncomp, tri.num_cells())?;
    let rule = quadrature::tet_rule(qdeg)?;
    let tab = out.basis.tabulate(&rule.points);
    let n = out.nloc();
    // Reference mass matrix; the physical one is |det J| times it on affine cells.
    let mut mass = DMatrix::<f64>::zeros(n, n);
    for (p, w) in rule.weights.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                mass[(i, j)] += w * tab.value(p, i)[0] * tab.value(p, j)[0];
            }
        }
    }
    let chol = mass
        .cholesky()
        .ok_or_else(|| FemError::DimensionMismatch("reference mass matrix not positive definite".into()))?;
    let per_cell: Vec<Vec<f64>> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mut rhs = vec![DVector::<f64>::zeros(n); ncomp];
            for (p, (x, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let v = f(geom.map(*x));
                for (comp, r) in rhs.iter_mut().enumerate() {
                    for i in 0..n {
                        r[i] += w * v[comp] * tab.value(p, i)[0];
                    }
                }
            }
            rhs.into_iter().flat_map(|r| chol.solve(&r).iter().copied().collect::<Vec<_>>()).collect()
        })
        .collect();
    for (c, vals) in per_cell.into_iter().enumerate() {
        let start = c * ncomp * n;
        out.coeffs[start..start + ncomp * n].copy_from_slice(&vals);
    }
    Ok(out)
}

/// Best piecewise constant approximation of a vector field.
pub fn theta_piecewise_constant<F>(tri: &Triangulation, theta: F) -> Result<PiecewiseField>
where
    F: Fn(Point) -> Point + Sync,
{
    l2_project(tri, 0, 3, theta)
}

/// Oswald-type averaging of a scalar piecewise `P_{k-1}` field.
///
/// Degree 1 input is averaged at the vertices into a continuous `P_1` field;
/// degree 0 input is replaced by its volume-weighted mean on each macroelement.
pub fn oswald(tri: &Triangulation, p: &PiecewiseField, macros: Option<&MacroMesh>) -> Result<PiecewiseField> {
    if p.ncomp != 1 {
        return Err(FemError::DimensionMismatch("oswald expects a scalar field".into()));
    }
    let mut out = p.clone();
    match p.degree {
        0 => {
            let macros = macros.ok_or(FemError::MissingPrerequisite("macro mesh required for k = 1"))?;
            for cells in &macros.macros {
                let vol: f64 = cells.iter().map(|&c| tri.geometry[c].volume()).sum();
                let mean = cells.iter().map(|&c| tri.geometry[c].volume() * p.cell_coeffs(c, 0)[0]).sum::<f64>() / vol;
                for &c in cells {
                    out.cell_coeffs_mut(c, 0)[0] = mean;
                }
            }
        }
        1 => {
            let nv = tri.mesh.num_vertices();
            let mut sum = vec![0.0; nv];
            let mut count = vec![0usize; nv];
            for c in 0..tri.num_cells() {
                let s = tri.mesh.sorted_cell(c);
                for (i, v) in s.iter().enumerate() {
                    sum[*v] += p.cell_coeffs(c, 0)[i];
                    count[*v] += 1;
                }
            }
            for c in 0..tri.num_cells() {
                let s = tri.mesh.sorted_cell(c);
                let local = out.cell_coeffs_mut(c, 0);
                for (i, v) in s.iter().enumerate() {
                    local[i] = sum[*v] / count[*v] as f64;
                }
            }
        }
        d => return Err(FemError::UnsupportedElementDegree(d + 1)),
    }
    Ok(out)
}

/// `sum_E h_E^2 |(I - I_O) p|_E^2 / sum_{interior f} h_f^3 |[p]|_f^2`.
pub fn oswald_jump_ratio(tri: &Triangulation, p: &PiecewiseField, averaged: &PiecewiseField) -> f64 {
    let rule = quadrature::tet_rule_clamped(2 * p.degree + 2);
    let tab = p.basis.tabulate(&rule.points);
    let mut num = 0.0;
    for c in 0..tri.num_cells() {
        let h = tri.cell_diameters[c];
        let vol6 = tri.geometry[c].abs_det;
        let mut s = 0.0;
        for (q, w) in rule.weights.iter().enumerate() {
            let d = p.eval_tab(c, &tab, q)[0] - averaged.eval_tab(c, &tab, q)[0];
            s += w * vol6 * d * d;
        }
        num += h * h * s;
    }
    let tri_rule = quadrature::tri_rule_clamped(2 * p.degree + 2);
    let mut den = 0.0;
    for face in tri.faces.faces.iter().filter(|f| !f.is_boundary()) {
        let x = face.vertices.map(|v| tri.mesh.vertices[v]);
        let e1 = geometry::sub(x[1], x[0]);
        let e2 = geometry::sub(x[2], x[0]);
        let mut s = 0.0;
        for (q, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
            let y = geometry::add(x[0], geometry::add(geometry::scale(e1, q[0]), geometry::scale(e2, q[1])));
            let side = |k: usize| {
                let c = face.incidence[k].cell;
                p.eval(c, tri.geometry[c].pullback(y))[0]
            };
            let j = side(0) - side(1);
            s += w * 2.0 * face.area * j * j;
        }
        den += face.diameter.powi(3) * s;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dofmap::BoundaryPolicy;
    use crate::elements::{bdm_basis, nedelec2_basis};
    use crate::mesh::{build_macro_mesh, generate_cube_mesh, generate_lshape_mesh, Mesh};
    use std::collections::HashMap;
    use std::f64::consts::PI;

    fn cube(n: usize) -> Triangulation {
        Triangulation::new(generate_cube_mesh(n)).unwrap()
    }

    fn quadratic(x: Point) -> Point {
        [1.0 + x[0] - 2.0 * x[1] * x[2] + 0.5 * x[2] * x[2], -0.3 + x[0] * x[0] + x[1], x[0] * x[1] - x[2] + 2.0]
    }

    fn linear(x: Point) -> Point {
        [1.0 + x[0] - 2.0 * x[1], -0.3 + x[2], 2.0 + x[0] + x[1] - x[2]]
    }

    fn max_pointwise_error(tri: &Triangulation, u: &FeFunction, f: impl Fn(Point) -> Point) -> f64 {
        let pts = [[0.1, 0.2, 0.3], [0.25, 0.25, 0.25], [0.6, 0.1, 0.2]];
        let mut worst = 0.0f64;
        for c in 0..tri.num_cells() {
            for xh in pts {
                let v = u.eval_point(tri, c, xh).0;
                worst = worst.max(geometry::norm(geometry::sub(v, f(tri.geometry[c].map(xh)))));
            }
        }
        worst
    }

    #[test]
    fn bdm_reproduces_polynomials() {
        let t = cube(2);
        let s1 = FeSpace::new(&t, bdm_basis(1).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
        let s2 = FeSpace::new(&t, bdm_basis(2).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
        assert!(max_pointwise_error(&t, &interp_bdm(&t, &s1, linear).unwrap(), linear) < 1e-10);
        assert!(max_pointwise_error(&t, &interp_bdm(&t, &s2, quadratic).unwrap(), quadratic) < 1e-10);
    }

    #[test]
    fn nedelec_reproduces_polynomials() {
        let t = cube(2);
        let s1 = FeSpace::new(&t, nedelec2_basis(1).unwrap(), BoundaryPolicy::Natural).unwrap();
        let s2 = FeSpace::new(&t, nedelec2_basis(2).unwrap(), BoundaryPolicy::Natural).unwrap();
        assert!(max_pointwise_error(&t, &interp_nedelec(&t, &s1, linear).unwrap(), linear) < 1e-10);
        assert!(max_pointwise_error(&t, &interp_nedelec(&t, &s2, quadratic).unwrap(), quadratic) < 1e-10);
    }

    #[test]
    fn gradient_interpolant_is_curl_free() {
        let t = cube(2);
        let s = FeSpace::new(&t, nedelec2_basis(1).unwrap(), BoundaryPolicy::Natural).unwrap();
        let h = interp_nedelec(&t, &s, |_| [0.4, -1.0, 2.5]).unwrap();
        for c in 0..t.num_cells() {
            let g = h.eval_point(&t, c, [0.2, 0.3, 0.1]).1;
            assert!(geometry::norm(geometry::curl_of(&g)) < 1e-10);
        }
    }

    fn div_error_against_projection(
        k: usize,
        f: impl Fn(Point) -> Point + Sync,
        div: impl Fn(Point) -> Point + Sync,
    ) -> f64 {
        let t = cube(2);
        let s = FeSpace::new(&t, bdm_basis(k).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
        let u = interp_bdm(&t, &s, f).unwrap();
        let proj = l2_project(&t, k - 1, 1, div).unwrap();
        let mut worst = 0.0f64;
        for c in 0..t.num_cells() {
            for xh in [[0.1, 0.2, 0.3], [0.5, 0.2, 0.1]] {
                let d = geometry::div_of(&u.eval_point(&t, c, xh).1);
                worst = worst.max((d - proj.eval(c, xh)[0]).abs());
            }
        }
        worst
    }

    #[test]
    fn divergence_free_field_interpolates_divergence_free() {
        let u = |x: Point| {
            let (sx, sy, sz) = ((PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).sin());
            let (cx, cy, cz) = ((PI * x[0]).cos(), (PI * x[1]).cos(), (PI * x[2]).cos());
            [sx * cy * cz, cx * sy * cz, -2.0 * cx * cy * sz]
        };
        for k in 1..=2 {
            let e = div_error_against_projection(k, u, |_| [0.0; 3]);
            assert!(e < 1e-9, "k={k}: {e}");
        }
    }

    #[test]
    fn commuting_divergence() {
        let v = |x: Point| [(x[0] * x[1]).sin(), x[2].exp() * x[0], (x[1] + x[2]).cos()];
        let div = |x: Point| [x[1] * (x[0] * x[1]).cos() - (x[1] + x[2]).sin(), 0.0, 0.0];
        for k in 1..=2 {
            assert!(div_error_against_projection(k, v, div) < 1e-9);
        }
    }

    #[test]
    fn moment_orthogonality_on_lshape() {
        let t = Triangulation::new(generate_lshape_mesh(1)).unwrap();
        let v = |x: Point| [x[1] * x[1], x[2] * x[2], x[0] * x[0]];
        for k in 1..=2usize {
            let s = FeSpace::new(&t, bdm_basis(k).unwrap(), BoundaryPolicy::NormalTrace).unwrap();
            let u = interp_bdm(&t, &s, v).unwrap();
            let rule = quadrature::tet_rule(10).unwrap();
            let tab = s.basis.tabulate(&rule.points);
            let monos = crate::elements::monomials(k - 1);
            let mut worst = 0.0f64;
            for c in 0..t.num_cells() {
                let g = &t.geometry[c];
                let vals = u.eval_cell(&t, c, &tab);
                for e in &monos {
                    let mut acc = [0.0; 3];
                    for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                        let q_val = xh[0].powi(e[0] as i32) * xh[1].powi(e[1] as i32) * xh[2].powi(e[2] as i32);
                        let d = geometry::sub(v(g.map(*xh)), vals[q].0);
                        acc = geometry::add(acc, geometry::scale(d, w * g.abs_det * q_val));
                    }
                    worst = worst.max(geometry::norm(acc));
                }
            }
            assert!(worst < 1e-9, "k={k}: {worst}");
        }
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let t = cube(2);
        let p = l2_project(&t, 2, 3, quadratic).unwrap();
        for c in 0..t.num_cells() {
            let xh = [0.3, 0.1, 0.2];
            let v = p.eval(c, xh);
            assert!(geometry::norm(geometry::sub(v, quadratic(t.geometry[c].map(xh)))) < 1e-12);
        }
    }

    #[test]
    fn projection_of_sine_matches_cell_averages() {
        // Cell average of sin(pi x) over a Kuhn tetrahedron inside the
        // sub-cube [a, a + h] along x: integrate the marginal density in x.
        let t = cube(2);
        let p = l2_project(&t, 0, 1, |x| [(PI * x[0]).sin(), 0.0, 0.0]).unwrap();
        let line = quadrature::line_rule(30);
        for c in 0..t.num_cells() {
            let xs = t.mesh.cells[c].map(|v| t.mesh.vertices[v][0]);
            let a = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let b = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // x is the largest, middle or smallest of the three ordered
            // sub-cube coordinates depending on how many vertices sit at x = b.
            let upper = xs.iter().filter(|&&x| (x - b).abs() < 1e-12).count();
            let density = |s: f64| match upper {
                3 => 3.0 * s * s,
                2 => 6.0 * s * (1.0 - s),
                _ => 3.0 * (1.0 - s) * (1.0 - s),
            };
            let mean: f64 = line
                .points
                .iter()
                .zip(&line.weights)
                .map(|(s, w)| w * density(s[0]) * (PI * (a + (b - a) * s[0])).sin())
                .sum();
            assert!((p.cell_coeffs(c, 0)[0] - mean).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_rate() {
        let f = |x: Point| [(PI * x[0]).sin() * (PI * x[1]).cos() * x[2].exp(), 0.0, 0.0];
        let err = |n: usize, m: usize| {
            let t = cube(n);
            let p = l2_project(&t, m, 1, f).unwrap();
            let rule = quadrature::tet_rule(10).unwrap();
            let tab = p.basis.tabulate(&rule.points);
            let mut s = 0.0;
            for c in 0..t.num_cells() {
                for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                    let d = p.eval_tab(c, &tab, q)[0] - f(t.geometry[c].map(*xh))[0];
                    s += w * t.geometry[c].abs_det * d * d;
                }
            }
            s.sqrt()
        };
        for m in 0..=1usize {
            let rate = (err(2, m) / err(4, m)).log2();
            assert!((rate - (m as f64 + 1.0)).abs() < 0.2, "m={m}: {rate}");
        }
    }

    #[test]
    fn theta_constant_unchanged() {
        let t = Triangulation::new(generate_lshape_mesh(1)).unwrap();
        let th = theta_piecewise_constant(&t, |_| [1.0, -1.0, 2.0]).unwrap();
        for c in 0..t.num_cells() {
            assert!(geometry::norm(geometry::sub(th.cell_mean(c), [1.0, -1.0, 2.0])) < 1e-13);
        }
    }

    #[test]
    fn theta_sampling_bound() {
        let theta = |x: Point| [(PI * x[1]).sin(), (PI * x[2]).sin(), (PI * x[0]).sin()];
        let lip = PI;
        for n in [1, 2, 4] {
            let t = cube(n);
            let th = theta_piecewise_constant(&t, theta).unwrap();
            for c in 0..t.num_cells() {
                let m = th.cell_mean(c);
                for xh in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.2, 0.3, 0.1]] {
                    let d = geometry::sub(theta(t.geometry[c].map(xh)), m);
                    let linf = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                    assert!(linf <= lip * t.cell_diameters[c]);
                }
            }
        }
    }

    #[test]
    fn oswald_needs_macro_mesh_for_p0() {
        let t = cube(1);
        let p = PiecewiseField::zeros(0, 1, t.num_cells()).unwrap();
        assert!(matches!(oswald(&t, &p, None), Err(FemError::MissingPrerequisite(_))));
    }

    #[test]
    fn oswald_is_a_projection() {
        let t = cube(2);
        let cont = l2_project(&t, 1, 1, |x| [1.0 + x[0] - 3.0 * x[2], 0.0, 0.0]).unwrap();
        let avg = oswald(&t, &cont, None).unwrap();
        for (a, b) in avg.coeffs.iter().zip(&cont.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
        let macros = build_macro_mesh(&t.mesh, &t.faces).unwrap();
        let constant = l2_project(&t, 0, 1, |_| [2.5, 0.0, 0.0]).unwrap();
        let avg = oswald(&t, &constant, Some(&macros)).unwrap();
        assert!(avg.coeffs.iter().all(|a| (a - 2.5).abs() < 1e-12));
    }

    #[test]
    fn oswald_two_cell_macro() {
        // Two unit tetrahedra sharing a face, reflected through z = 0.
        let vertices = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        let cells = vec![[0, 1, 2, 3], [0, 2, 1, 4]];
        let t = Triangulation::new(Mesh::new(vertices, cells, HashMap::new()).unwrap()).unwrap();
        let mut p = PiecewiseField::zeros(0, 1, 2).unwrap();
        p.coeffs = vec![1.0, 3.0];
        let macros = MacroMesh { macro_of_cell: vec![0, 0], macros: vec![vec![0, 1]], star_centers: vec![0] };
        let avg = oswald(&t, &p, Some(&macros)).unwrap();
        assert!((avg.coeffs[0] - 2.0).abs() < 1e-14 && (avg.coeffs[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn oswald_jump_bound_is_bounded_under_refinement() {
        let mut ratios = Vec::new();
        for n in [2, 3] {
            let t = cube(n);
            let macros = build_macro_mesh(&t.mesh, &t.faces).unwrap();
            for m in 0..=1usize {
                let mut p = PiecewiseField::zeros(m, 1, t.num_cells()).unwrap();
                let mut s = 12345u64 + n as u64;
                for a in p.coeffs.iter_mut() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    *a = (s >> 11) as f64 / (1u64 << 53) as f64;
                }
                let avg = oswald(&t, &p, Some(&macros)).unwrap();
                ratios.push(oswald_jump_ratio(&t, &p, &avg));
            }
        }
        assert!(ratios.iter().all(|r| r.is_finite() && *r < 50.0), "{ratios:?}");
    }
}
