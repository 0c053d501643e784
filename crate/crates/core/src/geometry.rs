//! Small-vector helpers, affine cell maps and Piola transformations.

use crate::error::{FemError, Result};

pub type Point = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm2(a: Point) -> f64 {
    dot(a, a)
}

pub fn triangle_area(p: [Point; 3]) -> f64 {
    0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0])))
}

pub fn centroid3(p: [Point; 3]) -> Point {
    scale(add(add(p[0], p[1]), p[2]), 1.0 / 3.0)
}

#[inline]
pub fn mat_vec(m: &Mat3, v: Point) -> Point {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

#[inline]
pub fn mat_t_vec(m: &Mat3, v: Point) -> Point {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn det3(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

/// Divergence of a vector field from its Jacobian `grad[i][j] = d v_i / d x_j`.
#[inline]
pub fn div_of(grad: &Mat3) -> f64 {
    grad[0][0] + grad[1][1] + grad[2][2]
}

#[inline]
pub fn curl_of(grad: &Mat3) -> Point {
    [grad[2][1] - grad[1][2], grad[0][2] - grad[2][0], grad[1][0] - grad[0][1]]
}

/// Affine map `x = x0 + J x_hat` from the reference tetrahedron.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub x0: Point,
    /// `jac[i][j] = d x_i / d x_hat_j`.
    pub jac: Mat3,
    pub jac_inv: Mat3,
    /// Signed determinant; negative when the vertex order is left-handed.
    pub det: f64,
    pub abs_det: f64,
}

impl CellGeometry {
    pub fn new(v: [Point; 4]) -> Result<Self> {
        let e = [sub(v[1], v[0]), sub(v[2], v[0]), sub(v[3], v[0])];
        let jac = [[e[0][0], e[1][0], e[2][0]], [e[0][1], e[1][1], e[2][1]], [e[0][2], e[1][2], e[2][2]]];
        let det = det3(&jac);
        let scale_ref = e.iter().map(|x| norm(*x)).fold(0.0, f64::max).powi(3);
        if !(det.abs() > 1e-13 * scale_ref) {
            return Err(FemError::DegenerateCell { cell: usize::MAX, det });
        }
        // Inverse via the adjugate: rows of J^{-1} are cross products of the columns.
        let c0 = [jac[0][0], jac[1][0], jac[2][0]];
        let c1 = [jac[0][1], jac[1][1], jac[2][1]];
        let c2 = [jac[0][2], jac[1][2], jac[2][2]];
        let r0 = scale(cross(c1, c2), 1.0 / det);
        let r1 = scale(cross(c2, c0), 1.0 / det);
        let r2 = scale(cross(c0, c1), 1.0 / det);
        Ok(Self { x0: v[0], jac, jac_inv: [r0, r1, r2], det, abs_det: det.abs() })
    }

    pub fn identity() -> Self {
        Self::new([[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap()
    }

    pub fn volume(&self) -> f64 {
        self.abs_det / 6.0
    }

    #[inline]
    pub fn map(&self, xh: Point) -> Point {
        add(self.x0, mat_vec(&self.jac, xh))
    }

    #[inline]
    pub fn pullback(&self, x: Point) -> Point {
        mat_vec(&self.jac_inv, sub(x, self.x0))
    }

    /// Scalar gradient `J^{-T} grad_hat`.
    #[inline]
    pub fn grad_scalar(&self, ghat: Point) -> Point {
        mat_t_vec(&self.jac_inv, ghat)
    }

    /// Gradient of a contravariantly mapped field: `J grad_hat J^{-1} / det J`.
    #[inline]
    pub fn grad_contravariant(&self, ghat: &Mat3) -> Mat3 {
        let m = mat_mul(&mat_mul(&self.jac, ghat), &self.jac_inv);
        let s = 1.0 / self.det;
        m.map(|r| r.map(|x| x * s))
    }

    /// Gradient of a covariantly mapped field: `J^{-T} grad_hat J^{-1}`.
    #[inline]
    pub fn grad_covariant(&self, ghat: &Mat3) -> Mat3 {
        mat_mul(&mat_mul(&transpose(&self.jac_inv), ghat), &self.jac_inv)
    }

    /// Reference field pulled back from a physical H(div) field: `det J * J^{-1} v`.
    #[inline]
    pub fn pullback_contravariant(&self, v: Point) -> Point {
        scale(mat_vec(&self.jac_inv, v), self.det)
    }

    /// Reference field pulled back from a physical H(curl) field: `J^T H`.
    #[inline]
    pub fn pullback_covariant(&self, h: Point) -> Point {
        mat_t_vec(&self.jac, h)
    }
}

/// Contravariant Piola map: `v = J v_hat / det J`, `div v = div_hat v_hat / det J`.
pub fn piola_contravariant(geom: &CellGeometry, ref_values: &[Point], ref_divs: &[f64]) -> (Vec<Point>, Vec<f64>) {
    let s = 1.0 / geom.det;
    let values = ref_values.iter().map(|v| scale(mat_vec(&geom.jac, *v), s)).collect();
    let divs = ref_divs.iter().map(|d| d * s).collect();
    (values, divs)
}

/// Covariant Piola map: `H = J^{-T} H_hat`, `curl H = J curl_hat H_hat / det J`.
pub fn piola_covariant(geom: &CellGeometry, ref_values: &[Point], ref_curls: &[Point]) -> (Vec<Point>, Vec<Point>) {
    let s = 1.0 / geom.det;
    let values = ref_values.iter().map(|h| mat_t_vec(&geom.jac_inv, *h)).collect();
    let curls = ref_curls.iter().map(|c| scale(mat_vec(&geom.jac, *c), s)).collect();
    (values, curls)
}
