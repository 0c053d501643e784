//! Tetrahedral meshes, structured generators and connectivity.
//!
//! Cells are stored with positive orientation. All finite element
//! computations, however, use a *sorted* local numbering: local vertex `i`
//! of a cell is its `i`-th smallest global vertex index. With that
//! convention every shared edge and face is traversed in the same
//! direction from each incident cell, so no per-cell orientation flips are
//! needed for the conforming spaces.

use std::collections::{BTreeMap, HashMap};

use crate::error::{FemError, Result};
use crate::geometry::{self, CellGeometry, Point};

/// Local faces in sorted numbering: face `i` is opposite local vertex `i`.
pub const REF_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
/// Local edges in sorted numbering.
pub const REF_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 4]>,
    /// Boundary tags keyed by the sorted vertex triple of the face.
    pub boundary_tags: HashMap<[usize; 3], i32>,
}

fn signed_volume(v: &[Point], c: &[usize; 4]) -> f64 {
    let a = geometry::sub(v[c[1]], v[c[0]]);
    let b = geometry::sub(v[c[2]], v[c[0]]);
    let d = geometry::sub(v[c[3]], v[c[0]]);
    geometry::dot(a, geometry::cross(b, d)) / 6.0
}

pub(crate) fn sorted3(mut t: [usize; 3]) -> [usize; 3] {
    t.sort_unstable();
    t
}

impl Mesh {
    /// Builds a mesh, rejecting cells with non-positive signed volume.
    pub fn new(vertices: Vec<Point>, cells: Vec<[usize; 4]>, boundary_tags: HashMap<[usize; 3], i32>) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            if c.iter().any(|&v| v >= vertices.len()) {
                return Err(FemError::Structural(format!("cell {i} references a missing vertex")));
            }
            let vol = signed_volume(&vertices, c);
            if vol <= 0.0 {
                return Err(FemError::Structural(format!("cell {i} has non-positive signed volume {vol:e}")));
            }
        }
        Ok(Self { vertices, cells, boundary_tags })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        signed_volume(&self.vertices, &self.cells[c])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// Cell vertices in ascending global order.
    pub fn sorted_cell(&self, c: usize) -> [usize; 4] {
        let mut s = self.cells[c];
        s.sort_unstable();
        s
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let v = &self.cells[c];
        let mut h = 0.0f64;
        for e in REF_EDGES {
            h = h.max(geometry::norm(geometry::sub(self.vertices[v[e[1]]], self.vertices[v[e[0]]])));
        }
        h
    }

    /// Global mesh size `h = max_E h_E`.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    /// Radius of the inscribed sphere.
    pub fn cell_inradius(&self, c: usize) -> f64 {
        let v = &self.cells[c];
        let area: f64 = REF_FACES
            .iter()
            .map(|f| {
                let p = [self.vertices[v[f[0]]], self.vertices[v[f[1]]], self.vertices[v[f[2]]]];
                geometry::triangle_area(p)
            })
            .sum();
        3.0 * self.cell_volume(c) / area
    }

    /// Shape-regularity constant `max_E h_E / rho_E`.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c) / self.cell_inradius(c)).fold(0.0, f64::max)
    }

    pub fn cell_geometry(&self, c: usize) -> Result<CellGeometry> {
        let s = self.sorted_cell(c);
        CellGeometry::new([self.vertices[s[0]], self.vertices[s[1]], self.vertices[s[2]], self.vertices[s[3]]])
            .map_err(|_| FemError::DegenerateCell { cell: c, det: self.cell_volume(c) * 6.0 })
    }
}

// Kuhn decomposition of the unit cube: one tetrahedron per permutation of
// the axes, all sharing the main diagonal.
const KUHN_PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn kuhn_cells(corner: [usize; 3], index: &impl Fn([usize; 3]) -> usize) -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for (t, perm) in KUHN_PERMS.iter().enumerate() {
        let mut p = corner;
        let mut cell = [0; 4];
        cell[0] = index(p);
        for (step, &axis) in perm.iter().enumerate() {
            p[axis] += 1;
            cell[step + 1] = index(p);
        }
        out[t] = cell;
    }
    out
}

fn orient_positive(vertices: &[Point], mut c: [usize; 4]) -> [usize; 4] {
    if signed_volume(vertices, &c) < 0.0 {
        c.swap(2, 3);
    }
    c
}

/// Tags boundary faces of an axis-aligned box-like domain by the plane they lie on.
fn tag_boundary(
    vertices: &[Point],
    cells: &[[usize; 4]],
    plane_tag: impl Fn([Point; 3]) -> i32,
) -> HashMap<[usize; 3], i32> {
    let mut count: HashMap<[usize; 3], usize> = HashMap::new();
    for c in cells {
        for f in REF_FACES {
            *count.entry(sorted3([c[f[0]], c[f[1]], c[f[2]]])).or_default() += 1;
        }
    }
    count
        .into_iter()
        .filter(|(_, n)| *n == 1)
        .map(|(f, _)| (f, plane_tag([vertices[f[0]], vertices[f[1]], vertices[f[2]]])))
        .collect()
}

fn common_plane(p: [Point; 3], planes: &[(usize, f64, i32)]) -> i32 {
    for &(axis, value, tag) in planes {
        if p.iter().all(|q| (q[axis] - value).abs() < 1e-12) {
            return tag;
        }
    }
    0
}

/// Kuhn-split tetrahedral mesh of `[0,1]^3` with `n` subdivisions per edge.
///
/// Boundary tags: 1/2 for x = 0/1, 3/4 for y = 0/1, 5/6 for z = 0/1.
pub fn generate_cube_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "cube mesh needs at least one subdivision");
    let np = n + 1;
    let h = 1.0 / n as f64;
    let index = |p: [usize; 3]| p[0] + np * (p[1] + np * p[2]);
    let mut vertices = vec![[0.0; 3]; np * np * np];
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices[index([i, j, k])] = [i as f64 * h, j as f64 * h, k as f64 * h];
            }
        }
    }
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for c in kuhn_cells([i, j, k], &index) {
                    cells.push(orient_positive(&vertices, c));
                }
            }
        }
    }
    let planes = [(0, 0.0, 1), (0, 1.0, 2), (1, 0.0, 3), (1, 1.0, 4), (2, 0.0, 5), (2, 1.0, 6)];
    let tags = tag_boundary(&vertices, &cells, |p| common_plane(p, &planes));
    Mesh { vertices, cells, boundary_tags: tags }
}

/// Kuhn-split mesh of the extruded L-shape `[-1,1]^3 \ ([-1,0)^2 x [-1,1])`
/// with `n` subdivisions per unit length. The reentrant edge `x = y = 0` is
/// a union of mesh edges at every resolution.
///
/// Boundary tags: 1..6 for the bounding box planes as in the cube, 7 for the
/// reentrant face `x = 0`, 8 for the reentrant face `y = 0`.
pub fn generate_lshape_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "L-shape mesh needs at least one subdivision");
    let m = 2 * n;
    let np = m + 1;
    let h = 1.0 / n as f64;
    let grid_index = |p: [usize; 3]| p[0] + np * (p[1] + np * p[2]);
    let coord = |i: usize| -1.0 + i as f64 * h;
    let mut grid_vertices = vec![[0.0; 3]; np * np * np];
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                grid_vertices[grid_index([i, j, k])] = [coord(i), coord(j), coord(k)];
            }
        }
    }
    let mut raw_cells = Vec::new();
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                // Skip sub-cubes inside the removed quadrant x < 0, y < 0.
                if i < n && j < n {
                    continue;
                }
                for c in kuhn_cells([i, j, k], &grid_index) {
                    raw_cells.push(orient_positive(&grid_vertices, c));
                }
            }
        }
    }
    let mut remap = vec![usize::MAX; grid_vertices.len()];
    let mut vertices = Vec::new();
    let mut cells = Vec::with_capacity(raw_cells.len());
    for c in raw_cells {
        let mut out = [0; 4];
        for (slot, &g) in out.iter_mut().zip(c.iter()) {
            if remap[g] == usize::MAX {
                remap[g] = vertices.len();
                vertices.push(grid_vertices[g]);
            }
            *slot = remap[g];
        }
        cells.push(out);
    }
    let planes =
        [(0, -1.0, 1), (0, 1.0, 2), (1, -1.0, 3), (1, 1.0, 4), (2, -1.0, 5), (2, 1.0, 6), (0, 0.0, 7), (1, 0.0, 8)];
    let tags = tag_boundary(&vertices, &cells, |p| common_plane(p, &planes));
    Mesh { vertices, cells, boundary_tags: tags }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceIncidence {
    pub cell: usize,
    /// Local face index in the cell's sorted numbering.
    pub local_face: usize,
    /// `+1` if the canonical face normal points out of this cell, `-1` otherwise.
    pub sign: f64,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Global vertex indices in ascending order.
    pub vertices: [usize; 3],
    /// Unit normal `(x_b - x_a) x (x_c - x_a)` normalised (right-hand rule on sorted vertices).
    pub normal: Point,
    pub area: f64,
    /// Face diameter `h_f`.
    pub diameter: f64,
    /// One (boundary) or two (interior) incident cells. For interior faces the
    /// first entry is the cell the canonical normal points out of.
    pub incidence: Vec<FaceIncidence>,
    pub boundary_tag: Option<i32>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.incidence.len() == 1
    }

    /// Normal pointing out of the domain for boundary faces, canonical
    /// normal otherwise.
    pub fn oriented_normal(&self) -> Point {
        let s = self.incidence[0].sign;
        geometry::scale(self.normal, s)
    }
}

#[derive(Debug, Clone)]
pub struct FaceSet {
    pub faces: Vec<Face>,
    /// Face index for each local face of each cell (sorted numbering).
    pub cell_faces: Vec<[usize; 4]>,
}

impl FaceSet {
    pub fn num_interior(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn num_boundary(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Cells sharing a face with cell `c`.
    pub fn neighbours(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.cell_faces[c].iter().filter_map(move |&f| self.faces[f].incidence.iter().map(|i| i.cell).find(|&o| o != c))
    }
}

/// Enumerates faces with canonical orientation and incidence.
pub fn build_face_connectivity(mesh: &Mesh) -> Result<FaceSet> {
    let mut index: HashMap<[usize; 3], usize> = HashMap::with_capacity(2 * mesh.num_cells() + 16);
    let mut faces: Vec<Face> = Vec::new();
    let mut cell_faces = vec![[0usize; 4]; mesh.num_cells()];
    for c in 0..mesh.num_cells() {
        let s = mesh.sorted_cell(c);
        for (lf, f) in REF_FACES.iter().enumerate() {
            let key = [s[f[0]], s[f[1]], s[f[2]]];
            let opposite = mesh.vertices[s[lf]];
            let fid = *index.entry(key).or_insert_with(|| {
                let p = [mesh.vertices[key[0]], mesh.vertices[key[1]], mesh.vertices[key[2]]];
                let n = geometry::cross(geometry::sub(p[1], p[0]), geometry::sub(p[2], p[0]));
                let len = geometry::norm(n);
                let diameter = [(0, 1), (0, 2), (1, 2)]
                    .iter()
                    .map(|&(a, b)| geometry::norm(geometry::sub(p[b], p[a])))
                    .fold(0.0, f64::max);
                faces.push(Face {
                    vertices: key,
                    normal: geometry::scale(n, 1.0 / len),
                    area: 0.5 * len,
                    diameter,
                    incidence: Vec::with_capacity(2),
                    boundary_tag: None,
                });
                faces.len() - 1
            });
            let face = &mut faces[fid];
            if face.incidence.len() == 2 {
                return Err(FemError::Structural(format!("face {key:?} is shared by more than two cells")));
            }
            let outward = geometry::dot(face.normal, geometry::sub(mesh.vertices[key[0]], opposite)) > 0.0;
            face.incidence.push(FaceIncidence { cell: c, local_face: lf, sign: if outward { 1.0 } else { -1.0 } });
            cell_faces[c][lf] = fid;
        }
    }
    for face in faces.iter_mut() {
        match face.incidence.len() {
            1 => face.boundary_tag = Some(mesh.boundary_tags.get(&face.vertices).copied().unwrap_or(0)),
            2 => {
                if face.incidence[0].sign < 0.0 {
                    face.incidence.swap(0, 1);
                }
                if face.incidence[0].sign * face.incidence[1].sign > 0.0 {
                    return Err(FemError::Structural(format!(
                        "cells {} and {} overlap across face {:?}",
                        face.incidence[0].cell, face.incidence[1].cell, face.vertices
                    )));
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(FaceSet { faces, cell_faces })
}

#[derive(Debug, Clone)]
pub struct EdgeSet {
    /// Global vertex pairs in ascending order.
    pub edges: Vec<[usize; 2]>,
    /// Edge index for each local edge of each cell (sorted numbering).
    pub cell_edges: Vec<[usize; 6]>,
}

pub fn build_edges(mesh: &Mesh) -> EdgeSet {
    let mut index: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut cell_edges = vec![[0usize; 6]; mesh.num_cells()];
    for c in 0..mesh.num_cells() {
        let s = mesh.sorted_cell(c);
        for (le, e) in REF_EDGES.iter().enumerate() {
            let key = [s[e[0]], s[e[1]]];
            let id = *index.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
            cell_edges[c][le] = id;
        }
    }
    EdgeSet { edges, cell_edges }
}

/// Partition of the cells into agglomerated macroelements, each containing
/// the full vertex star of at least one vertex.
#[derive(Debug, Clone)]
pub struct MacroMesh {
    pub macro_of_cell: Vec<usize>,
    pub macros: Vec<Vec<usize>>,
    /// The vertex whose full star is contained in each macroelement.
    pub star_centers: Vec<usize>,
}

impl MacroMesh {
    /// Largest macroelement cardinality (the bookkeeping constant of the agglomeration).
    pub fn max_cardinality(&self) -> usize {
        self.macros.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Greedy vertex-star agglomeration.
///
/// Vertices are visited interior-first, then by decreasing star size; a
/// star whose cells are all unassigned becomes a new macroelement. Cells
/// left over afterwards are merged into a face-adjacent macroelement.
pub fn build_macro_mesh(mesh: &Mesh, faces: &FaceSet) -> Result<MacroMesh> {
    let nv = mesh.num_vertices();
    let mut stars: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (c, cell) in mesh.cells.iter().enumerate() {
        for &v in cell {
            stars[v].push(c);
        }
    }
    let mut on_boundary = vec![false; nv];
    for f in faces.faces.iter().filter(|f| f.is_boundary()) {
        for &v in &f.vertices {
            on_boundary[v] = true;
        }
    }
    let mut order: Vec<usize> = (0..nv).filter(|&v| !stars[v].is_empty()).collect();
    order.sort_by_key(|&v| (on_boundary[v], std::cmp::Reverse(stars[v].len()), v));

    let mut macro_of_cell = vec![usize::MAX; mesh.num_cells()];
    let mut macros: Vec<Vec<usize>> = Vec::new();
    let mut star_centers = Vec::new();
    for v in order {
        if stars[v].iter().all(|&c| macro_of_cell[c] == usize::MAX) {
            let id = macros.len();
            for &c in &stars[v] {
                macro_of_cell[c] = id;
            }
            macros.push(stars[v].clone());
            star_centers.push(v);
        }
    }
    if macros.is_empty() {
        return Err(FemError::Structural("mesh has no vertex star".into()));
    }
    // Merge leftovers into adjacent macroelements, sweeping until stable.
    loop {
        let mut changed = false;
        let mut pending = false;
        for c in 0..mesh.num_cells() {
            if macro_of_cell[c] != usize::MAX {
                continue;
            }
            // Smallest adjacent macroelement keeps cardinalities balanced.
            let target = faces
                .neighbours(c)
                .filter(|&o| macro_of_cell[o] != usize::MAX)
                .map(|o| macro_of_cell[o])
                .min_by_key(|&m| (macros[m].len(), m));
            match target {
                Some(m) => {
                    macro_of_cell[c] = m;
                    macros[m].push(c);
                    changed = true;
                }
                None => pending = true,
            }
        }
        if !pending {
            break;
        }
        if !changed {
            return Err(FemError::Structural("some cells cannot join a star-containing macroelement".into()));
        }
    }
    for m in macros.iter_mut() {
        m.sort_unstable();
    }
    Ok(MacroMesh { macro_of_cell, macros, star_centers })
}

/// Checks that every macroelement is connected through shared faces.
pub fn macro_is_face_connected(faces: &FaceSet, macro_cells: &[usize], macro_of_cell: &[usize]) -> bool {
    let Some(&first) = macro_cells.first() else { return false };
    let id = macro_of_cell[first];
    let mut seen: BTreeMap<usize, bool> = macro_cells.iter().map(|&c| (c, false)).collect();
    let mut stack = vec![first];
    seen.insert(first, true);
    while let Some(c) = stack.pop() {
        for o in faces.neighbours(c) {
            if macro_of_cell[o] == id && !seen[&o] {
                seen.insert(o, true);
                stack.push(o);
            }
        }
    }
    seen.values().all(|&v| v)
}

/// Mesh with its connectivity and per-cell affine maps.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub mesh: Mesh,
    pub faces: FaceSet,
    pub edges: EdgeSet,
    pub geometry: Vec<CellGeometry>,
    pub cell_diameters: Vec<f64>,
    pub h: f64,
}

impl Triangulation {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let faces = build_face_connectivity(&mesh)?;
        let edges = build_edges(&mesh);
        let geometry = (0..mesh.num_cells()).map(|c| mesh.cell_geometry(c)).collect::<Result<Vec<_>>>()?;
        let cell_diameters: Vec<f64> = (0..mesh.num_cells()).map(|c| mesh.cell_diameter(c)).collect();
        let h = cell_diameters.iter().copied().fold(0.0, f64::max);
        Ok(Self { mesh, faces, edges, geometry, cell_diameters, h })
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    /// Local quasi-uniformity: `max h_{E+} / h_{E-}` over interior faces.
    pub fn quasi_uniformity(&self) -> f64 {
        self.faces
            .faces
            .iter()
            .filter(|f| !f.is_boundary())
            .map(|f| {
                let a = self.cell_diameters[f.incidence[0].cell];
                let b = self.cell_diameters[f.incidence[1].cell];
                a.max(b) / a.min(b)
            })
            .fold(1.0, f64::max)
    }
}
