//! Quadrature on the reference simplices.
//!
//! Reference tetrahedron: `{x, y, z >= 0, x + y + z <= 1}` (measure 1/6).
//! Reference triangle: `{x, y >= 0, x + y <= 1}` (measure 1/2).
//!
//! Degrees 0 and 1 use the one-point centroid rule. Higher degrees use
//! collapsed-coordinate (Stroud conical product) rules built from
//! Gauss-Jacobi nodes; all weights are positive and every point lies
//! strictly inside the simplex.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FemError, Result};

/// Highest exactness degree supported by [`tet_rule`] and [`tri_rule`].
pub const MAX_DEGREE: usize = 14;

#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Reference coordinates. Triangle rules leave the third entry at zero.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
    pub has_negative_weights: bool,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss-Jacobi nodes and weights on `[-1, 1]` for the weight `(1-t)^a (1+t)^b`,
/// computed with the Golub-Welsch eigenvalue method.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fi = i as f64;
        let s = 2.0 * fi + a + b;
        let diag = if i == 0 { (b - a) / (a + b + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) };
        jac[(i, i)] = diag;
        if i + 1 < n {
            let m = fi + 1.0;
            let s = 2.0 * m + a + b;
            let num = 4.0 * m * (m + a) * (m + b) * (m + a + b);
            let den = s * s * (s + 1.0) * (s - 1.0);
            let off = (num / den).sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let mu0 = 2f64.powf(a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

// Jacobi exponents used here are non-negative integers.
fn gamma(x: f64) -> f64 {
    debug_assert!((x - x.round()).abs() < 1e-12 && x >= 1.0);
    (1..x.round() as i64).map(|i| i as f64).product()
}

/// Gauss-Jacobi rule mapped to `[0, 1]` for the weight `(1-u)^a`.
fn collapsed_line(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_jacobi(n, a, 0.0);
    let scale = 0.5f64.powf(a + 1.0);
    let u = t.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let w = w.iter().map(|w| w * scale).collect();
    (u, w)
}

/// Gauss-Legendre rule on `[0, 1]` exact to the requested degree.
pub fn line_rule(degree: usize) -> QuadRule {
    let n = degree / 2 + 1;
    let (u, w) = collapsed_line(n, 0.0);
    QuadRule {
        points: u.into_iter().map(|u| [u, 0.0, 0.0]).collect(),
        weights: w,
        exactness_degree: 2 * n - 1,
        has_negative_weights: false,
    }
}

fn build_tet(degree: usize) -> QuadRule {
    if degree <= 1 {
        return QuadRule {
            points: vec![[0.25, 0.25, 0.25]],
            weights: vec![1.0 / 6.0],
            exactness_degree: 1,
            has_negative_weights: false,
        };
    }
    let n = degree / 2 + 1;
    let (u, wu) = collapsed_line(n, 2.0);
    let (v, wv) = collapsed_line(n, 1.0);
    let (w, ww) = collapsed_line(n, 0.0);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let x = u[i];
                let y = (1.0 - u[i]) * v[j];
                let z = (1.0 - u[i]) * (1.0 - v[j]) * w[l];
                points.push([x, y, z]);
                weights.push(wu[i] * wv[j] * ww[l]);
            }
        }
    }
    QuadRule { points, weights, exactness_degree: 2 * n - 1, has_negative_weights: false }
}

fn build_tri(degree: usize) -> QuadRule {
    if degree <= 1 {
        return QuadRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0, 0.0]],
            weights: vec![0.5],
            exactness_degree: 1,
            has_negative_weights: false,
        };
    }
    let n = degree / 2 + 1;
    let (u, wu) = collapsed_line(n, 1.0);
    let (v, wv) = collapsed_line(n, 0.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push([u[i], (1.0 - u[i]) * v[j], 0.0]);
            weights.push(wu[i] * wv[j]);
        }
    }
    QuadRule { points, weights, exactness_degree: 2 * n - 1, has_negative_weights: false }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Closed form of `∫ x^a y^b z^c` over the reference tetrahedron.
pub fn tet_monomial_integral(a: u32, b: u32, c: u32) -> f64 {
    factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
}

/// Closed form of `∫ x^a y^b` over the reference triangle.
pub fn tri_monomial_integral(a: u32, b: u32) -> f64 {
    factorial(a) * factorial(b) / factorial(a + b + 2)
}

fn check_tet_exactness(rule: &QuadRule) -> bool {
    let d = rule.exactness_degree as u32;
    for a in 0..=d {
        for b in 0..=(d - a) {
            for c in 0..=(d - a - b) {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                    .sum();
                let exact = tet_monomial_integral(a, b, c);
                if ((q - exact) / exact).abs() > 1e-12 {
                    return false;
                }
            }
        }
    }
    true
}

fn check_tri_exactness(rule: &QuadRule) -> bool {
    let d = rule.exactness_degree as u32;
    for a in 0..=d {
        for b in 0..=(d - a) {
            let q: f64 =
                rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
            let exact = tri_monomial_integral(a, b);
            if ((q - exact) / exact).abs() > 1e-12 {
                return false;
            }
        }
    }
    true
}

static TET_RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();
static TRI_RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();

fn tet_table() -> &'static [QuadRule] {
    TET_RULES.get_or_init(|| {
        (0..=MAX_DEGREE)
            .map(|d| {
                let r = build_tet(d);
                debug_assert!(check_tet_exactness(&r), "tet rule {d} not exact");
                r
            })
            .collect()
    })
}

fn tri_table() -> &'static [QuadRule] {
    TRI_RULES.get_or_init(|| {
        (0..=MAX_DEGREE)
            .map(|d| {
                let r = build_tri(d);
                debug_assert!(check_tri_exactness(&r), "triangle rule {d} not exact");
                r
            })
            .collect()
    })
}

/// Rule on the reference tetrahedron exact for polynomials of total degree `degree`.
pub fn tet_rule(degree: usize) -> Result<&'static QuadRule> {
    tet_table().get(degree).ok_or(FemError::UnsupportedDegree { degree, max: MAX_DEGREE })
}

/// Rule on the reference triangle exact for polynomials of total degree `degree`.
pub fn tri_rule(degree: usize) -> Result<&'static QuadRule> {
    tri_table().get(degree).ok_or(FemError::UnsupportedDegree { degree, max: MAX_DEGREE })
}

/// Tetrahedron rule for `degree`, clamped to the supported maximum.
pub fn tet_rule_clamped(degree: usize) -> &'static QuadRule {
    &tet_table()[degree.min(MAX_DEGREE)]
}

/// Triangle rule for `degree`, clamped to the supported maximum.
pub fn tri_rule_clamped(degree: usize) -> &'static QuadRule {
    &tri_table()[degree.min(MAX_DEGREE)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_is_centroid() {
        let t = tet_rule(0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.points[0], [0.25, 0.25, 0.25]);
        assert!((t.weights[0] - 1.0 / 6.0).abs() < 1e-15);
        let f = tri_rule(0).unwrap();
        assert_eq!(f.len(), 1);
        assert!((f.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for d in 0..=MAX_DEGREE {
            assert!((tet_rule(d).unwrap().weight_sum() - 1.0 / 6.0).abs() < 1e-14);
            assert!((tri_rule(d).unwrap().weight_sum() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn xyz_over_tet() {
        assert!((tet_monomial_integral(1, 1, 1) - 1.0 / 720.0).abs() < 1e-18);
        for d in 3..=MAX_DEGREE {
            let r = tet_rule(d).unwrap();
            let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[1] * p[2]).sum();
            assert!((q - 1.0 / 720.0).abs() < 1e-15, "degree {d}");
        }
    }

    #[test]
    fn x2y_over_triangle() {
        assert!((tri_monomial_integral(2, 1) - 1.0 / 60.0).abs() < 1e-18);
        for d in 3..=MAX_DEGREE {
            let r = tri_rule(d).unwrap();
            let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[0] * p[1]).sum();
            assert!((q - 1.0 / 60.0).abs() < 1e-15, "degree {d}");
        }
    }

    #[test]
    fn exhaustive_monomial_exactness() {
        for d in 0..=MAX_DEGREE {
            let t = tet_rule(d).unwrap();
            assert!(t.exactness_degree >= d);
            assert!(check_tet_exactness(t), "tet degree {d}");
            let f = tri_rule(d).unwrap();
            assert!(f.exactness_degree >= d);
            assert!(check_tri_exactness(f), "tri degree {d}");
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(tet_rule(MAX_DEGREE + 1), Err(FemError::UnsupportedDegree { .. })));
        assert!(tri_rule(99).is_err());
    }

    #[test]
    fn points_inside_and_weights_positive() {
        for d in 0..=MAX_DEGREE {
            let t = tet_rule(d).unwrap();
            assert!(!t.has_negative_weights);
            for (p, w) in t.points.iter().zip(&t.weights) {
                assert!(*w > 0.0 && w.is_finite());
                assert!(p.iter().all(|&c| c > 0.0) && p.iter().sum::<f64>() < 1.0);
            }
        }
    }

    #[test]
    fn line_rule_exact() {
        for d in 0..12 {
            let r = line_rule(d);
            for m in 0..=d {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(m as i32)).sum();
                assert!((q - 1.0 / (m as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
