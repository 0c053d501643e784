//! Manufactured solutions.
//!
//! Each case supplies the exact fields with hand-derived derivatives; the
//! loads `f` and `G` are composed from them and checked against finite
//! differences by [`self_check`].

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FemError, Result};
use crate::geometry::{self, Mat3, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Cube,
    LShape,
}

/// Coefficients entering the loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub sigma_s: f64,
    pub sigma_m: f64,
    pub nu_s: f64,
    pub nu_m: f64,
}

pub trait ManufacturedCase: Sync + Send {
    fn name(&self) -> &str;
    fn domain(&self) -> Domain;

    fn u(&self, x: Point) -> Point;
    /// `grad_u[i][j] = d u_i / d x_j`.
    fn grad_u(&self, x: Point) -> Mat3;
    fn div_eps_u(&self, x: Point) -> Point;
    fn p(&self, x: Point) -> f64;
    fn grad_p(&self, x: Point) -> Point;
    fn b(&self, x: Point) -> Point;
    fn curl_b(&self, x: Point) -> Point;
    fn curl_curl_b(&self, x: Point) -> Point;
    fn chi(&self, x: Point) -> Point;
    fn theta(&self, x: Point) -> Point;
    fn grad_theta(&self, x: Point) -> Mat3;

    /// Whether the magnetic loads (volume and boundary) are applied.
    fn magnetic_loads(&self) -> bool {
        true
    }

    /// `curl(u x Theta) = (div Theta) u - (div u) Theta + (grad u) Theta - (grad Theta) u`.
    fn curl_u_cross_theta(&self, x: Point) -> Point {
        let u = self.u(x);
        let gu = self.grad_u(x);
        let th = self.theta(x);
        let gt = self.grad_theta(x);
        let a = geometry::scale(u, geometry::div_of(&gt));
        let b = geometry::scale(th, geometry::div_of(&gu));
        let c = geometry::mat_vec(&gu, th);
        let d = geometry::mat_vec(&gt, u);
        [a[0] - b[0] + c[0] - d[0], a[1] - b[1] + c[1] - d[1], a[2] - b[2] + c[2] - d[2]]
    }

    /// `f = sigma u - nu div eps(u) + (grad u) chi + Theta x curl B - grad p`.
    fn f(&self, c: &Coefficients, x: Point) -> Point {
        let u = self.u(x);
        let de = self.div_eps_u(x);
        let conv = geometry::mat_vec(&self.grad_u(x), self.chi(x));
        let lor = geometry::cross(self.theta(x), self.curl_b(x));
        let gp = self.grad_p(x);
        std::array::from_fn(|i| c.sigma_s * u[i] - c.nu_s * de[i] + conv[i] + lor[i] - gp[i])
    }

    /// `G = sigma B + nu curl curl B - curl(u x Theta)`.
    fn g(&self, c: &Coefficients, x: Point) -> Point {
        let b = self.b(x);
        let cc = self.curl_curl_b(x);
        let ut = self.curl_u_cross_theta(x);
        std::array::from_fn(|i| c.sigma_m * b[i] + c.nu_m * cc[i] - ut[i])
    }
}

/// Smooth solution on the unit cube with `chi = u` and `Theta = B`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Test1;

fn trig(x: Point) -> ([f64; 3], [f64; 3]) {
    (
        [(PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).sin()],
        [(PI * x[0]).cos(), (PI * x[1]).cos(), (PI * x[2]).cos()],
    )
}

impl ManufacturedCase for Test1 {
    fn name(&self) -> &str {
        "test1"
    }
    fn domain(&self) -> Domain {
        Domain::Cube
    }
    fn u(&self, x: Point) -> Point {
        let (s, c) = trig(x);
        [s[0] * c[1] * c[2], c[0] * s[1] * c[2], -2.0 * c[0] * c[1] * s[2]]
    }
    fn grad_u(&self, x: Point) -> Mat3 {
        let (s, c) = trig(x);
        [
            [PI * c[0] * c[1] * c[2], -PI * s[0] * s[1] * c[2], -PI * s[0] * c[1] * s[2]],
            [-PI * s[0] * s[1] * c[2], PI * c[0] * c[1] * c[2], -PI * c[0] * s[1] * s[2]],
            [2.0 * PI * s[0] * c[1] * s[2], 2.0 * PI * c[0] * s[1] * s[2], -2.0 * PI * c[0] * c[1] * c[2]],
        ]
    }
    fn div_eps_u(&self, x: Point) -> Point {
        // div u = 0 and every component is an eigenfunction of the Laplacian.
        geometry::scale(self.u(x), -1.5 * PI * PI)
    }
    fn p(&self, x: Point) -> f64 {
        let (s, _) = trig(x);
        s[0] + s[1] - 2.0 * s[2]
    }
    fn grad_p(&self, x: Point) -> Point {
        let (_, c) = trig(x);
        [PI * c[0], PI * c[1], -2.0 * PI * c[2]]
    }
    fn b(&self, x: Point) -> Point {
        let (s, _) = trig(x);
        [s[1], s[2], s[0]]
    }
    fn curl_b(&self, x: Point) -> Point {
        let (_, c) = trig(x);
        [-PI * c[2], -PI * c[0], -PI * c[1]]
    }
    fn curl_curl_b(&self, x: Point) -> Point {
        geometry::scale(self.b(x), PI * PI)
    }
    fn chi(&self, x: Point) -> Point {
        self.u(x)
    }
    fn theta(&self, x: Point) -> Point {
        self.b(x)
    }
    fn grad_theta(&self, x: Point) -> Mat3 {
        let (_, c) = trig(x);
        [[0.0, PI * c[1], 0.0], [0.0, 0.0, PI * c[2]], [PI * c[0], 0.0, 0.0]]
    }
}

/// Singular magnetic field `B = grad r` on the extruded L-shape.
#[derive(Debug, Clone, Copy, Default)]
pub struct Test2;

impl Test2 {
    pub const CHI: Point = [1.0, 2.0, -1.0];
    pub const THETA: Point = [1.0, -1.0, 2.0];

    /// `r = rho^(2/3) sin(2/3 (theta + pi/2))` with the polar angle taken
    /// from `atan2`, so the angle runs over `[0, 3 pi / 2]` on the domain.
    pub fn r(x: Point) -> f64 {
        let rho = x[0].hypot(x[1]);
        let phi = 2.0 / 3.0 * (x[1].atan2(x[0]) + PI / 2.0);
        rho.powf(2.0 / 3.0) * phi.sin()
    }
}

impl ManufacturedCase for Test2 {
    fn name(&self) -> &str {
        "test2"
    }
    fn domain(&self) -> Domain {
        Domain::LShape
    }
    fn u(&self, x: Point) -> Point {
        [x[1] * x[1], x[2] * x[2], x[0] * x[0]]
    }
    fn grad_u(&self, x: Point) -> Mat3 {
        [[0.0, 2.0 * x[1], 0.0], [0.0, 0.0, 2.0 * x[2]], [2.0 * x[0], 0.0, 0.0]]
    }
    fn div_eps_u(&self, _x: Point) -> Point {
        [1.0, 1.0, 1.0]
    }
    fn p(&self, _x: Point) -> f64 {
        0.0
    }
    fn grad_p(&self, _x: Point) -> Point {
        [0.0; 3]
    }
    fn b(&self, x: Point) -> Point {
        let rho = x[0].hypot(x[1]);
        if rho < 1e-14 {
            // Limit along the reentrant edge of the tangential part.
            return [0.0; 3];
        }
        let th = x[1].atan2(x[0]);
        let phi = 2.0 / 3.0 * (th + PI / 2.0);
        let a = 2.0 / 3.0 * rho.powf(-1.0 / 3.0);
        [a * (phi - th).sin(), a * (phi - th).cos(), 0.0]
    }
    fn curl_b(&self, _x: Point) -> Point {
        [0.0; 3]
    }
    fn curl_curl_b(&self, _x: Point) -> Point {
        [0.0; 3]
    }
    fn chi(&self, _x: Point) -> Point {
        Self::CHI
    }
    fn theta(&self, _x: Point) -> Point {
        Self::THETA
    }
    fn grad_theta(&self, _x: Point) -> Mat3 {
        [[0.0; 3]; 3]
    }
}

/// Polynomial solution contained in the discrete spaces of degree `k`.
#[derive(Debug, Clone, Copy)]
pub struct Patch {
    pub k: usize,
}

impl Patch {
    pub const CHI: Point = [1.0, 2.0, -1.0];
    pub const THETA: Point = [1.0, -1.0, 2.0];
}

impl ManufacturedCase for Patch {
    fn name(&self) -> &str {
        "patch"
    }
    fn domain(&self) -> Domain {
        Domain::Cube
    }
    fn u(&self, x: Point) -> Point {
        if self.k == 1 {
            [x[1], x[2], x[0]]
        } else {
            [x[1] * x[1], x[2] * x[2], x[0] * x[0]]
        }
    }
    fn grad_u(&self, x: Point) -> Mat3 {
        if self.k == 1 {
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
        } else {
            [[0.0, 2.0 * x[1], 0.0], [0.0, 0.0, 2.0 * x[2]], [2.0 * x[0], 0.0, 0.0]]
        }
    }
    fn div_eps_u(&self, _x: Point) -> Point {
        if self.k == 1 {
            [0.0; 3]
        } else {
            [1.0, 1.0, 1.0]
        }
    }
    fn p(&self, x: Point) -> f64 {
        if self.k == 1 {
            0.0
        } else {
            x[0] - x[1] + 2.0 * x[2] - 1.0
        }
    }
    fn grad_p(&self, _x: Point) -> Point {
        if self.k == 1 {
            [0.0; 3]
        } else {
            [1.0, -1.0, 2.0]
        }
    }
    fn b(&self, x: Point) -> Point {
        if self.k == 1 {
            [x[2], x[0], x[1]]
        } else {
            [x[1] * x[1] + x[0], x[2] * x[2], x[0] * x[0] - x[2]]
        }
    }
    fn curl_b(&self, x: Point) -> Point {
        if self.k == 1 {
            [1.0, 1.0, 1.0]
        } else {
            [-2.0 * x[2], -2.0 * x[0], -2.0 * x[1]]
        }
    }
    fn curl_curl_b(&self, _x: Point) -> Point {
        if self.k == 1 {
            [0.0; 3]
        } else {
            [-2.0, -2.0, -2.0]
        }
    }
    fn chi(&self, _x: Point) -> Point {
        Self::CHI
    }
    fn theta(&self, _x: Point) -> Point {
        Self::THETA
    }
    fn grad_theta(&self, _x: Point) -> Mat3 {
        [[0.0; 3]; 3]
    }
}

/// The same velocity problem with all magnetic loads removed.
pub struct HomogeneousMagnetic<C>(pub C);

macro_rules! delegate {
    ($($name:ident -> $t:ty),*) => {
        $(fn $name(&self, x: Point) -> $t { self.0.$name(x) })*
    };
}

impl<C: ManufacturedCase> ManufacturedCase for HomogeneousMagnetic<C> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn domain(&self) -> Domain {
        self.0.domain()
    }
    delegate!(u -> Point, grad_u -> Mat3, div_eps_u -> Point, p -> f64, grad_p -> Point,
        b -> Point, curl_b -> Point, curl_curl_b -> Point, chi -> Point, theta -> Point, grad_theta -> Mat3);
    fn magnetic_loads(&self) -> bool {
        false
    }
}

pub fn case_by_name(name: &str, k: usize) -> Result<Box<dyn ManufacturedCase>> {
    match name {
        "test1" => Ok(Box::new(Test1)),
        "test2" => Ok(Box::new(Test2)),
        "patch" => Ok(Box::new(Patch { k })),
        other => Err(FemError::Config(format!("unknown case {other:?} (expected test1, test2 or patch)"))),
    }
}

/// Random point strictly inside the domain, away from the reentrant edge.
pub fn sample_point(domain: Domain, rng: &mut impl Rng) -> Point {
    loop {
        let x: Point = match domain {
            Domain::Cube => std::array::from_fn(|_| rng.random_range(0.02..0.98)),
            Domain::LShape => std::array::from_fn(|_| rng.random_range(-0.98..0.98)),
        };
        if domain == Domain::LShape && (x[0] < 0.02 && x[1] < 0.02 || x[0].hypot(x[1]) < 0.2) {
            continue;
        }
        return x;
    }
}

/// Finite-difference cross-check of the hand-coded derivatives and loads at
/// `samples` random interior points. Returns the worst relative discrepancy.
pub fn self_check(case: &dyn ManufacturedCase, c: &Coefficients, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let d = |f: &dyn Fn(Point) -> Point, x: Point, j: usize| -> Point {
        let mut xp = x;
        let mut xm = x;
        xp[j] += h;
        xm[j] -= h;
        let (a, b) = (f(xp), f(xm));
        std::array::from_fn(|i| (a[i] - b[i]) / (2.0 * h))
    };
    let jac = |f: &dyn Fn(Point) -> Point, x: Point| -> Mat3 {
        let cols = [d(f, x, 0), d(f, x, 1), d(f, x, 2)];
        std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i]))
    };
    let rel = |a: Point, b: Point, scale: f64| geometry::norm(geometry::sub(a, b)) / scale.max(1.0);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = sample_point(case.domain(), &mut rng);
        // First derivatives of the exact fields.
        let gu = jac(&|y| case.u(y), x);
        let gb = jac(&|y| case.b(y), x);
        let gt = jac(&|y| case.theta(y), x);
        for i in 0..3 {
            worst = worst.max(rel(gu[i], case.grad_u(x)[i], geometry::norm(gu[i])));
            worst = worst.max(rel(gt[i], case.grad_theta(x)[i], geometry::norm(gt[i])));
        }
        let gp = d(&|y| [case.p(y), 0.0, 0.0], x, 0)[0];
        let gp = [gp, d(&|y| [case.p(y), 0.0, 0.0], x, 1)[0], d(&|y| [case.p(y), 0.0, 0.0], x, 2)[0]];
        worst = worst.max(rel(gp, case.grad_p(x), geometry::norm(gp)));
        worst = worst.max(rel(geometry::curl_of(&gb), case.curl_b(x), geometry::norm(case.curl_b(x))));
        // Second derivatives from differences of the analytic first derivatives.
        let eps = |y: Point| -> Mat3 {
            let g = case.grad_u(y);
            std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (g[i][j] + g[j][i])))
        };
        let mut div_eps = [0.0; 3];
        for j in 0..3 {
            let dj = d(&|y| std::array::from_fn(|i| eps(y)[i][j]), x, j);
            div_eps = geometry::add(div_eps, dj);
        }
        worst = worst.max(rel(div_eps, case.div_eps_u(x), geometry::norm(div_eps)));
        let cc = geometry::curl_of(&jac(&|y| case.curl_b(y), x));
        worst = worst.max(rel(cc, case.curl_curl_b(x), geometry::norm(cc)));
        let ut = geometry::curl_of(&jac(&|y| geometry::cross(case.u(y), case.theta(y)), x));
        worst = worst.max(rel(ut, case.curl_u_cross_theta(x), geometry::norm(ut)));
        // Loads assembled from the finite-difference pieces.
        let f_fd: Point = std::array::from_fn(|i| {
            c.sigma_s * case.u(x)[i] - c.nu_s * div_eps[i]
                + geometry::mat_vec(&gu, case.chi(x))[i]
                + geometry::cross(case.theta(x), geometry::curl_of(&gb))[i]
                - gp[i]
        });
        let g_fd: Point = std::array::from_fn(|i| c.sigma_m * case.b(x)[i] + c.nu_m * cc[i] - ut[i]);
        let f = case.f(c, x);
        let g = case.g(c, x);
        worst = worst.max(rel(f_fd, f, geometry::norm(f)));
        worst = worst.max(rel(g_fd, g, geometry::norm(g)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: Coefficients = Coefficients { sigma_s: 1.0, sigma_m: 1.0, nu_s: 1.0, nu_m: 1.0 };

    #[test]
    fn loads_match_finite_differences() {
        let cases: Vec<Box<dyn ManufacturedCase>> =
            vec![Box::new(Test1), Box::new(Test2), Box::new(Patch { k: 1 }), Box::new(Patch { k: 2 })];
        for case in &cases {
            for nu in [1.0, 1e-6] {
                let c = Coefficients { nu_s: nu, nu_m: nu, ..UNIT };
                let err = self_check(case.as_ref(), &c, 100, 1);
                assert!(err < 1e-5, "{}: {err}", case.name());
            }
        }
    }

    #[test]
    fn velocities_are_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cases: Vec<Box<dyn ManufacturedCase>> =
            vec![Box::new(Test1), Box::new(Test2), Box::new(Patch { k: 1 }), Box::new(Patch { k: 2 })];
        for case in &cases {
            for _ in 0..50 {
                let x = sample_point(case.domain(), &mut rng);
                assert!(geometry::div_of(&case.grad_u(x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn test1_pressure_has_zero_mean() {
        let line = crate::quadrature::line_rule(24);
        let mut m = 0.0;
        for (a, wa) in line.points.iter().zip(&line.weights) {
            for (b, wb) in line.points.iter().zip(&line.weights) {
                for (c, wc) in line.points.iter().zip(&line.weights) {
                    m += wa * wb * wc * Test1.p([a[0], b[0], c[0]]);
                }
            }
        }
        assert!(m.abs() < 1e-12, "{m}");
    }

    #[test]
    fn test2_field_is_curl_free_and_harmonic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-5;
        for _ in 0..100 {
            let x = sample_point(Domain::LShape, &mut rng);
            // B against the finite-difference gradient of r.
            let g: Point = std::array::from_fn(|j| {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                (Test2::r(xp) - Test2::r(xm)) / (2.0 * h)
            });
            let b = Test2.b(x);
            assert!(geometry::norm(geometry::sub(g, b)) < 1e-6 * geometry::norm(b).max(1.0));
        }
        // r vanishes on both faces adjacent to the reentrant edge.
        assert!(Test2::r([0.0, -0.5, 0.3]).abs() < 1e-14);
        assert!(Test2::r([-0.5, 0.0, 0.3]).abs() < 1e-14);
    }

    #[test]
    fn unknown_case_rejected() {
        assert!(case_by_name("test3", 1).is_err());
        assert_eq!(case_by_name("patch", 2).unwrap().name(), "patch");
    }
}
