//! Error norms between manufactured solutions and discrete solutions, and
//! observed convergence rates.

use rayon::prelude::*;

use crate::assembly::{
    curl_cross, face_quad, sym, Advection, CaseAdvection, Discretization, PiecewiseThetaAdvection, ProblemParams,
};
use crate::cases::ManufacturedCase;
use crate::elements::{map_tabulation, MappedTabulation};
use crate::error::{FemError, Result};
use crate::geometry::{self, Mat3, Point};
use crate::interpolation::{theta_piecewise_constant, PiecewiseField};
use crate::quadrature;

/// Names of the error columns, in output order.
pub const ERROR_COLUMNS: [&str; 6] = ["err_u_L2", "err_u_H1", "err_p_L2", "err_B_L2", "err_B_curl", "err_total"];

/// Components of the velocity stability norm (each unsquared).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StabComponents {
    pub s: f64,
    pub upw: f64,
    pub cip: f64,
    pub curl: f64,
}

impl StabComponents {
    pub fn total(&self) -> f64 {
        (self.s * self.s + self.upw * self.upw + self.cip * self.cip + self.curl * self.curl).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub level: usize,
    pub h: f64,
    pub dofs_u: usize,
    pub dofs_p: usize,
    pub dofs_b: usize,
    pub err_u_l2: f64,
    pub err_u_h1: f64,
    pub err_p_l2: f64,
    pub err_b_l2: f64,
    pub err_b_curl: f64,
    pub err_total: f64,
    pub stab: StabComponents,
    pub err_u_stab: f64,
    pub err_b_m: f64,
}

impl ErrorReport {
    /// Values in the order of [`ERROR_COLUMNS`].
    pub fn columns(&self) -> [f64; 6] {
        [self.err_u_l2, self.err_u_h1, self.err_p_l2, self.err_b_l2, self.err_b_curl, self.err_total]
    }
}

/// Discrete fields as coefficient vectors of the three spaces.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteFields<'a> {
    pub u: &'a [f64],
    pub p: &'a [f64],
    pub b: &'a [f64],
}

/// `gamma = max(h, nu_M)`.
pub fn gamma(h: f64, nu_m: f64) -> f64 {
    h.max(nu_m)
}

fn local_eval(tab: &MappedTabulation, q: usize, coeffs: &[f64], dofs: &[usize]) -> (Point, Mat3) {
    let mut v = [0.0; 3];
    let mut g = [[0.0; 3]; 3];
    for (i, d) in dofs.iter().enumerate() {
        let a = coeffs[*d];
        if a != 0.0 {
            v = geometry::add(v, geometry::scale(tab.value(q, i), a));
            let gi = tab.grad(q, i);
            for r in 0..3 {
                for c in 0..3 {
                    g[r][c] += a * gi[r][c];
                }
            }
        }
    }
    (v, g)
}

fn mat_sub(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] - b[i][j]))
}

fn frob2(a: &Mat3) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

#[derive(Default, Clone, Copy)]
struct CellSums {
    u2: f64,
    gu2: f64,
    eps2: f64,
    p2: f64,
    b2: f64,
    cb2: f64,
    curl_th: f64,
}

#[derive(Default, Clone, Copy)]
struct FaceSums {
    jump_pen: f64,
    upw: f64,
    cip1: f64,
    cip2_h: f64,
    cip2: f64,
}

/// All error norms at the given quadrature degree (at least `2k + 4`).
pub fn compute_errors(
    disc: &Discretization,
    params: &ProblemParams,
    case: &dyn ManufacturedCase,
    fields: DiscreteFields,
    degree: usize,
) -> Result<ErrorReport> {
    let theta_h = theta_piecewise_constant(&disc.tri, |x| case.theta(x))?;
    compute_errors_with_theta(disc, params, case, fields, &theta_h, degree)
}

pub fn compute_errors_with_theta(
    disc: &Discretization,
    params: &ProblemParams,
    case: &dyn ManufacturedCase,
    fields: DiscreteFields,
    theta_h: &PiecewiseField,
    degree: usize,
) -> Result<ErrorReport> {
    let lay = disc.layout();
    if fields.u.len() != lay.nu || fields.p.len() != lay.np || fields.b.len() != lay.nb {
        return Err(FemError::DimensionMismatch(format!(
            "fields of sizes ({}, {}, {}) for spaces ({}, {}, {})",
            fields.u.len(),
            fields.p.len(),
            fields.b.len(),
            lay.nu,
            lay.np,
            lay.nb
        )));
    }
    let degree = degree.max(2 * disc.k + 4);
    let tri = &disc.tri;
    let rule = quadrature::tet_rule_clamped(degree);
    let (bv, bp, bm) = (&disc.vel.basis, &disc.pre.basis, &disc.mag.basis);
    let tv = bv.tabulate(&rule.points);
    let tp = bp.tabulate(&rule.points);
    let tm = bm.tabulate(&rule.points);
    let cells: Vec<CellSums> = (0..tri.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = &tri.geometry[c];
            let mv = map_tabulation(bv, geom, &tv);
            let mp = map_tabulation(bp, geom, &tp);
            let mm = map_tabulation(bm, geom, &tm);
            let th = theta_h.cell_mean(c);
            let he2 = tri.cell_diameters[c].powi(2);
            let mut s = CellSums::default();
            for (q, (xh, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let w = w * geom.abs_det;
                let x = geom.map(*xh);
                let (uh, guh) = local_eval(&mv, q, fields.u, disc.vel.dofmap.cell(c));
                let (ph, _) = local_eval(&mp, q, fields.p, disc.pre.dofmap.cell(c));
                let (bh, gbh) = local_eval(&mm, q, fields.b, disc.mag.dofmap.cell(c));
                let eu = geometry::sub(case.u(x), uh);
                let geu = mat_sub(&case.grad_u(x), &guh);
                let ep = case.p(x) - ph[0];
                let eb = geometry::sub(case.b(x), bh);
                let ecb = geometry::sub(case.curl_b(x), geometry::curl_of(&gbh));
                s.u2 += w * geometry::norm2(eu);
                s.gu2 += w * frob2(&geu);
                s.eps2 += w * frob2(&sym(&geu));
                s.p2 += w * ep * ep;
                s.b2 += w * geometry::norm2(eb);
                s.cb2 += w * geometry::norm2(ecb);
                s.curl_th += w * he2 * geometry::norm2(curl_cross(eu, &geu, th, &[[0.0; 3]; 3]));
            }
            s
        })
        .collect();
    let exact_adv = CaseAdvection(case);
    let h_adv = PiecewiseThetaAdvection { case, theta_h };
    let faces: Vec<FaceSums> = (0..tri.faces.faces.len())
        .into_par_iter()
        .map(|f| {
            let fq = face_quad(tri, f, degree);
            let tabs: Vec<MappedTabulation> = (0..fq.cells.len()).map(|s| fq.side_tabulation(tri, bv, s)).collect();
            let mut s = FaceSums::default();
            for (q, (x, w)) in fq.points.iter().zip(&fq.weights).enumerate() {
                let (u, gu) = (case.u(*x), case.grad_u(*x));
                let mut jump = [0.0; 3];
                let mut jc = [0.0; 3];
                let mut jc_h = [0.0; 3];
                for (side, tab) in tabs.iter().enumerate() {
                    let c = fq.cells[side];
                    let sign = fq.jump_sign[side];
                    let (uh, guh) = local_eval(tab, q, fields.u, disc.vel.dofmap.cell(c));
                    let e = geometry::sub(u, uh);
                    let ge = mat_sub(&gu, &guh);
                    jump = geometry::add(jump, geometry::scale(e, sign));
                    let (t, gt) = exact_adv.theta(c, *x);
                    jc = geometry::add(jc, geometry::scale(curl_cross(e, &ge, t, &gt), sign));
                    let (t, gt) = h_adv.theta(c, *x);
                    jc_h = geometry::add(jc_h, geometry::scale(curl_cross(e, &ge, t, &gt), sign));
                }
                let j2 = geometry::norm2(jump);
                s.jump_pen += w * j2 / fq.h;
                s.cip1 += w * geometry::norm2(geometry::cross(case.theta(*x), jump));
                if !fq.boundary {
                    s.upw += w * geometry::dot(case.chi(*x), fq.normal).abs() * j2;
                    s.cip2 += w * fq.h * fq.h * geometry::norm2(jc);
                    s.cip2_h += w * fq.h * fq.h * geometry::norm2(jc_h);
                }
            }
            s
        })
        .collect();
    let mut cs = CellSums::default();
    for s in &cells {
        cs.u2 += s.u2;
        cs.gu2 += s.gu2;
        cs.eps2 += s.eps2;
        cs.p2 += s.p2;
        cs.b2 += s.b2;
        cs.cb2 += s.cb2;
        cs.curl_th += s.curl_th;
    }
    let mut fs = FaceSums::default();
    for s in &faces {
        fs.jump_pen += s.jump_pen;
        fs.upw += s.upw;
        fs.cip1 += s.cip1;
        fs.cip2 += s.cip2;
        fs.cip2_h += s.cip2_h;
    }
    let p = params;
    let stab = StabComponents {
        s: (p.sigma_s * cs.u2 + p.nu_s * cs.eps2 + p.nu_s * p.mu_a * fs.jump_pen).sqrt(),
        upw: (p.mu_c * fs.upw).sqrt(),
        cip: (p.mu_j1 * fs.cip1 + p.mu_j2 * fs.cip2_h).sqrt(),
        curl: (cs.curl_th / gamma(tri.h, p.nu_m)).sqrt(),
    };
    let (err_u_l2, err_u_h1) = (cs.u2.sqrt(), cs.gu2.sqrt());
    let (err_b_l2, err_b_curl) = (cs.b2.sqrt(), cs.cb2.sqrt());
    // Mixed scaling as printed: weighted norms unsquared, jump sums squared.
    let err_total = p.sigma_s * err_u_l2
        + p.nu_s * err_u_h1
        + p.sigma_m * err_b_l2
        + p.nu_m * err_b_curl
        + p.mu_j1 * fs.cip1
        + p.mu_j2 * fs.cip2;
    let report = ErrorReport {
        level: 0,
        h: tri.h,
        dofs_u: lay.nu,
        dofs_p: lay.np,
        dofs_b: lay.nb,
        err_u_l2,
        err_u_h1,
        err_p_l2: cs.p2.sqrt(),
        err_b_l2,
        err_b_curl,
        err_total,
        stab,
        err_u_stab: stab.total(),
        err_b_m: (p.sigma_m * cs.b2 + p.nu_m * cs.cb2).sqrt(),
    };
    Ok(report)
}

/// Observed order between two consecutive levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    /// Set when an error is zero (or not finite) and the order is undefined.
    pub undefined: bool,
}

pub fn rate(e0: f64, e1: f64, h0: f64, h1: f64) -> Rate {
    if !(e0 > 0.0 && e1 > 0.0 && e0.is_finite() && e1.is_finite()) {
        return Rate { value: f64::NAN, undefined: true };
    }
    Rate { value: (e0 / e1).ln() / (h0 / h1).ln(), undefined: false }
}

/// Rates between consecutive reports, one row per pair.
pub fn convergence_rates(reports: &[ErrorReport]) -> Result<Vec<[Rate; 6]>> {
    if reports.len() < 2 {
        return Err(FemError::Config("convergence rates need at least two levels".into()));
    }
    for w in reports.windows(2) {
        if !(w[1].h < w[0].h) {
            return Err(FemError::Config(format!("mesh sizes must strictly decrease ({} then {})", w[0].h, w[1].h)));
        }
    }
    Ok(reports
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].columns(), w[1].columns());
            std::array::from_fn(|i| rate(a[i], b[i], w[0].h, w[1].h))
        })
        .collect())
}
