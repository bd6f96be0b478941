//! First- and second-order Hardy inequalities against a distance-type
//! function `ρ`: the geometry, the first Dirichlet eigenpair, the ratio
//! reports, and seeded test families.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::conformal::{laplace_beltrami, ConformalChart};
use crate::error::{Error, Result};
use crate::grid::{
    gradient_flat, hessian_flat, laplacian_flat, pairwise_sum, same_grid, Grid4, ScalarField, VectorField,
};
use crate::noise::{rng, scalar_noise, NoiseSpec};

/// Analytic domains whose distance function is known in closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    /// The grid's own box `[lo, hi]`.
    Box,
    /// `B_r(center)`; must fit inside the grid box.
    Ball { center: [f64; 4], radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Distance,
    Eigenfunction,
}

/// `ρ` with its stencil derivatives and admissibility flags.
#[derive(Clone, Debug)]
pub struct DomainGeometry {
    pub grid: Arc<Grid4>,
    pub rho: ScalarField,
    pub grad_rho: VectorField,
    pub lap_rho: ScalarField,
    pub kind: GeometryKind,
    /// Nodes where `ρ` is not smooth across the stencil (cut locus, ridges,
    /// the kink at the boundary of a ball). Excluded from pointwise checks.
    pub flagged: Vec<bool>,
    pub superharmonic_ok: bool,
    /// Largest `Δ_h ρ` over unflagged nodes with `ρ > 0`.
    pub max_violation: f64,
}

/// Tolerance for `Δ_h ρ <= 0` at smooth nodes, `10 h`.
pub fn superharmonic_tolerance(grid: &Grid4) -> f64 {
    10.0 * grid.spacing().iter().cloned().fold(0.0, f64::max)
}

impl DomainGeometry {
    /// Validates `ρ` (non-negative, zero on the outer layer, not constant)
    /// and derives gradient, Laplacian and the superharmonicity check.
    pub fn from_rho(rho: ScalarField, kind: GeometryKind, flagged: Vec<bool>) -> Result<Self> {
        let grid = rho.grid().clone();
        if flagged.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), actual: flagged.len() });
        }
        if let Some(node) = rho.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        if rho.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidDomain("distance function must be non-negative".into()));
        }
        if grid.is_periodic() {
            return Err(Error::InvalidDomain("distance functions need a boundary".into()));
        }
        if (0..grid.len()).any(|i| grid.depth(i) == 0 && rho.at(i) != 0.0) {
            return Err(Error::InvalidDomain("distance function must vanish on the boundary".into()));
        }
        let first = rho.at(0);
        if rho.values().iter().all(|&v| v == first) {
            return Err(Error::InvalidDomain("distance function is constant".into()));
        }
        let grad_rho = gradient_flat(&rho);
        let lap_rho = laplacian_flat(&rho);
        let tol = superharmonic_tolerance(&grid);
        let mut max_violation = f64::NEG_INFINITY;
        for i in 0..grid.len() {
            if grid.depth(i) >= 1 && !flagged[i] && rho.at(i) > 0.0 {
                max_violation = max_violation.max(lap_rho.at(i));
            }
        }
        if max_violation == f64::NEG_INFINITY {
            max_violation = 0.0;
        }
        Ok(DomainGeometry {
            grid,
            rho,
            grad_rho,
            lap_rho,
            kind,
            flagged,
            superharmonic_ok: max_violation <= tol,
            max_violation,
        })
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// Exact distance to the boundary of `spec`, with cut-locus flags.
pub fn distance_field(grid: &Arc<Grid4>, spec: &DomainSpec) -> Result<DomainGeometry> {
    let lo = grid.origin();
    let hi = grid.upper();
    let h = grid.spacing();
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    match *spec {
        DomainSpec::Box => {
            let face = |x: [f64; 4]| -> (f64, usize) {
                let mut best = (f64::INFINITY, 0);
                for a in 0..4 {
                    for (s, d) in [(0, x[a] - lo[a]), (1, hi[a] - x[a])] {
                        if d < best.0 {
                            best = (d, 2 * a + s);
                        }
                    }
                }
                best
            };
            let rho = ScalarField::from_fn(grid, |x| face(x).0.max(0.0));
            // a node is on a ridge when its stencil sees more than one nearest face
            let owner: Vec<usize> = (0..grid.len()).map(|i| face(grid.position(i)).1).collect();
            let ties: Vec<bool> = (0..grid.len())
                .map(|i| {
                    let x = grid.position(i);
                    let (d, _) = face(x);
                    let mut count = 0;
                    for a in 0..4 {
                        for e in [x[a] - lo[a], hi[a] - x[a]] {
                            if (e - d).abs() <= 1e-12 * hmax {
                                count += 1;
                            }
                        }
                    }
                    count > 1
                })
                .collect();
            let flagged = (0..grid.len())
                .map(|i| {
                    if grid.depth(i) == 0 {
                        return false;
                    }
                    ties[i]
                        || (0..4).any(|a| {
                            [grid.minus(i, a), grid.plus(i, a)]
                                .into_iter()
                                .flatten()
                                .any(|j| owner[j] != owner[i] || ties[j])
                        })
                })
                .collect();
            DomainGeometry::from_rho(rho, GeometryKind::Distance, flagged)
        }
        DomainSpec::Ball { center, radius } => {
            if !(radius > 0.0) {
                return Err(Error::InvalidDomain(format!("ball radius {radius} must be positive")));
            }
            for a in 0..4 {
                if center[a] - radius < lo[a] - 1e-12 || center[a] + radius > hi[a] + 1e-12 {
                    return Err(Error::InvalidDomain("ball does not fit inside the grid box".into()));
                }
            }
            let r = |x: [f64; 4]| (0..4).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
            let rho = ScalarField::from_fn(grid, |x| (radius - r(x)).max(0.0));
            let inside: Vec<bool> = (0..grid.len()).map(|i| r(grid.position(i)) < radius).collect();
            let flagged = (0..grid.len())
                .map(|i| {
                    if grid.depth(i) == 0 {
                        return false;
                    }
                    let near_center = r(grid.position(i)) < 2.0 * hmax;
                    let crosses = (0..4).any(|a| {
                        [grid.minus(i, a), grid.plus(i, a)].into_iter().flatten().any(|j| inside[j] != inside[i])
                    });
                    near_center || crosses
                })
                .collect();
            DomainGeometry::from_rho(rho, GeometryKind::Distance, flagged)
        }
    }
}

/// First Dirichlet eigenpair of `-Δ_g`.
#[derive(Clone, Debug)]
pub struct EigenData {
    /// Positive at interior nodes, zero on the boundary, `sup ψ = 1`.
    pub psi: ScalarField,
    pub lambda1: f64,
    pub iterations: usize,
    /// `‖Aψ - λMψ‖_{M⁻¹} / ‖ψ‖_M`.
    pub residual: f64,
}

/// Stopping thresholds for [`first_eigenpair`].
pub const EIGEN_RQ_TOL: f64 = 1e-10;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
pub const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Conservative discretization `A f = -div(e^{2φ} ∇f)` on interior nodes
/// (depth >= 1) with homogeneous Dirichlet data; `M = diag(e^{4φ})`.
struct DirichletOperator<'a> {
    grid: &'a Grid4,
    /// `e^{2φ}` averaged onto the link from `i` forward along each axis.
    link: Vec<[f64; 4]>,
    mass: Vec<f64>,
    interior: Vec<bool>,
}

impl<'a> DirichletOperator<'a> {
    fn new(chart: &'a ConformalChart) -> Self {
        let grid = chart.grid().as_ref();
        let phi = chart.phi();
        let e2: Vec<f64> = phi.values().iter().map(|p| (2.0 * p).exp()).collect();
        let link = (0..grid.len())
            .map(|i| {
                std::array::from_fn(|a| match grid.plus(i, a) {
                    Some(j) => 0.5 * (e2[i] + e2[j]),
                    None => 0.0,
                })
            })
            .collect();
        DirichletOperator {
            grid,
            link,
            mass: chart.volume_weight().values().to_vec(),
            interior: (0..grid.len()).map(|i| grid.depth(i) >= 1).collect(),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let h = self.grid.spacing();
        for i in 0..self.grid.len() {
            if !self.interior[i] {
                out[i] = 0.0;
                continue;
            }
            let mut s = 0.0;
            for a in 0..4 {
                let p = self.grid.nb(i, a, true);
                let m = self.grid.nb(i, a, false);
                let xp = if self.interior[p] { x[p] } else { 0.0 };
                let xm = if self.interior[m] { x[m] } else { 0.0 };
                s -= (self.link[i][a] * (xp - x[i]) - self.link[m][a] * (x[i] - xm)) / (h[a] * h[a]);
            }
            out[i] = s;
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let t: Vec<f64> = a.iter().zip(b).zip(&self.interior).map(|((x, y), &m)| if m { x * y } else { 0.0 }).collect();
        pairwise_sum(&t)
    }

    /// Conjugate gradients for `A x = b`, warm-started from `x`.
    fn solve(&self, b: &[f64], x: &mut [f64], tol: f64) -> Result<usize> {
        let n = b.len();
        let mut r = vec![0.0; n];
        let mut ap = vec![0.0; n];
        self.apply(x, &mut ap);
        for i in 0..n {
            r[i] = if self.interior[i] { b[i] - ap[i] } else { 0.0 };
        }
        let bnorm = self.dot(b, b).sqrt().max(f64::MIN_POSITIVE);
        let mut p = r.clone();
        let mut rr = self.dot(&r, &r);
        let max_iter = 20 * n.max(100);
        for it in 0..max_iter {
            if rr.sqrt() <= tol * bnorm {
                return Ok(it);
            }
            self.apply(&p, &mut ap);
            let alpha = rr / self.dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = self.dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        Err(Error::SolverNonConvergence { iterations: max_iter, residual: rr.sqrt() / bnorm })
    }
}

/// Inverse iteration for the smallest eigenvalue of `A ψ = λ M ψ`. Stops once
/// the Rayleigh quotient changes by at most [`EIGEN_RQ_TOL`] (relative) and
/// the eigen-residual is at most [`EIGEN_RESIDUAL_TOL`].
pub fn first_eigenpair(chart: &ConformalChart) -> Result<EigenData> {
    let grid = chart.grid();
    if grid.is_periodic() {
        return Err(Error::InvalidDomain("Dirichlet eigenproblem needs a boundary".into()));
    }
    let op = DirichletOperator::new(chart);
    let n = grid.len();
    let lo = grid.origin();
    let hi = grid.upper();
    // positive start vector vanishing on the boundary
    let mut psi: Vec<f64> = (0..n)
        .map(|i| {
            if !op.interior[i] {
                return 0.0;
            }
            let x = grid.position(i);
            (0..4).map(|a| (x[a] - lo[a]) * (hi[a] - x[a])).product()
        })
        .collect();
    let mut apsi = vec![0.0; n];
    let mut mpsi = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut x = vec![0.0; n];
    for it in 1..=EIGEN_MAX_ITERATIONS {
        for i in 0..n {
            mpsi[i] = op.mass[i] * psi[i];
        }
        if lambda.is_finite() {
            for i in 0..n {
                x[i] = psi[i] / lambda;
            }
        }
        op.solve(&mpsi, &mut x, 1e-13)?;
        let mnorm = x.iter().zip(&op.mass).map(|(v, m)| v * v * m).sum::<f64>().sqrt();
        for i in 0..n {
            psi[i] = x[i] / mnorm;
            mpsi[i] = op.mass[i] * psi[i];
        }
        op.apply(&psi, &mut apsi);
        let rq = op.dot(&psi, &apsi) / op.dot(&psi, &mpsi);
        let res: Vec<f64> = (0..n)
            .map(|i| if op.interior[i] { (apsi[i] - rq * mpsi[i]).powi(2) / op.mass[i] } else { 0.0 })
            .collect();
        residual = pairwise_sum(&res).sqrt() / op.dot(&psi, &mpsi).sqrt();
        let change = if lambda.is_finite() { (rq - lambda).abs() / rq.abs() } else { f64::INFINITY };
        lambda = rq;
        if change <= EIGEN_RQ_TOL && residual <= EIGEN_RESIDUAL_TOL {
            let sup = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let inf = psi.iter().cloned().fold(f64::INFINITY, f64::min);
            let s = if sup.abs() >= inf.abs() { 1.0 / sup } else { 1.0 / inf };
            psi.iter_mut().for_each(|v| *v *= s);
            return Ok(EigenData { psi: ScalarField::from_values(grid, psi)?, lambda1: lambda, iterations: it, residual });
        }
    }
    Err(Error::EigenNonConvergence { iterations: EIGEN_MAX_ITERATIONS, residual })
}

/// Geometry with `ψ` in place of `ρ`.
pub fn eigen_geometry(eig: &EigenData) -> Result<DomainGeometry> {
    let mut psi = eig.psi.clone();
    // clip rounding-level negatives so the field is admissible
    psi.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let flagged = vec![false; psi.grid().len()];
    DomainGeometry::from_rho(psi, GeometryKind::Eigenfunction, flagged)
}

/// `L = sup ψ/ρ` and `δ = inf |∇ψ|` over the first interior layer, relative
/// to the box distance.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EigenComparison {
    pub sup_psi_over_rho: f64,
    pub inf_boundary_gradient: f64,
}

pub fn eigen_comparison(eig: &EigenData, dist: &DomainGeometry) -> EigenComparison {
    let grid = &dist.grid;
    let grad = gradient_flat(&eig.psi);
    let mut l: f64 = 0.0;
    let mut d = f64::INFINITY;
    for i in 0..grid.len() {
        if dist.rho.at(i) > 0.0 {
            l = l.max(eig.psi.at(i) / dist.rho.at(i));
        }
        if grid.depth(i) == 1 {
            d = d.min(grad.at(i).iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    EigenComparison { sup_psi_over_rho: l, inf_boundary_gradient: if d.is_finite() { d } else { 0.0 } }
}

/// Two sides of an inequality `lhs <= C·rhs`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, reported as 0 when both vanish.
    pub ratio: f64,
}

impl RatioReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
        RatioReport { lhs, rhs, ratio }
    }
}

/// Bound of the first-order inequality with the 10% allowance.
pub const HARDY1_BOUND: f64 = 4.0 * 1.1;

fn check_w(w: &ScalarField, geom: &DomainGeometry, chart: &ConformalChart) -> Result<()> {
    same_grid(w.grid(), &geom.grid)?;
    same_grid(w.grid(), chart.grid())?;
    let grid = w.grid();
    if let Some(node) = (0..grid.len()).find(|&i| grid.depth(i) < 2 && w.at(i) != 0.0) {
        return Err(Error::RegionTooShallow { required: 2, node, depth: grid.depth(node) });
    }
    Ok(())
}

fn node_sum(grid: &Grid4, f: impl Fn(usize) -> f64) -> f64 {
    let cell = grid.cell_volume();
    let t: Vec<f64> = (0..grid.len()).map(|i| f(i) * cell).collect();
    pairwise_sum(&t)
}

fn grad_sq_g(v: &[f64], phi: f64) -> f64 {
    (-2.0 * phi).exp() * v.iter().map(|x| x * x).sum::<f64>()
}

/// `∫ w²|∇ρ|²_g/ρ² dv_g` against `∫ |∇w|²_g dv_g`; passes when the ratio is at most 4.4.
pub fn hardy1_ratio(w: &ScalarField, geom: &DomainGeometry, chart: &ConformalChart) -> Result<RatioReport> {
    check_w(w, geom, chart)?;
    let grid = w.grid();
    let gw = gradient_flat(w);
    let phi = chart.phi();
    let vw = chart.volume_weight();
    let lhs = node_sum(grid, |i| {
        let r = geom.rho.at(i);
        if r > 0.0 && w.at(i) != 0.0 {
            w.at(i).powi(2) / (r * r) * grad_sq_g(geom.grad_rho.at(i), phi.at(i)) * vw.at(i)
        } else {
            0.0
        }
    });
    let rhs = node_sum(grid, |i| if grid.depth(i) >= 1 { grad_sq_g(gw.at(i), phi.at(i)) * vw.at(i) } else { 0.0 });
    Ok(RatioReport::new(lhs, rhs))
}

/// `∫ w²/ρ⁴ dv_g` against `∫ |Δ_g w|² dv_g`.
pub fn hardy2_ratio(w: &ScalarField, geom: &DomainGeometry, chart: &ConformalChart) -> Result<RatioReport> {
    check_w(w, geom, chart)?;
    let grid = w.grid();
    let lw = laplace_beltrami(w, chart)?;
    let vw = chart.volume_weight();
    let lhs = node_sum(grid, |i| {
        let r = geom.rho.at(i);
        if r > 0.0 && w.at(i) != 0.0 {
            w.at(i).powi(2) / r.powi(4) * vw.at(i)
        } else {
            0.0
        }
    });
    let rhs = node_sum(grid, |i| lw.at(i).powi(2) * vw.at(i));
    Ok(RatioReport::new(lhs, rhs))
}

/// `∫ w²|∇ρ|²_g/ρ⁴ dv_g` against `∫ |Δ_g w|²(1 + |∇ρ|_g⁻²) dv_g`.
/// Nodes where `∇ρ` vanishes (critical points of an eigenfunction) drop the
/// `|∇ρ|⁻²` term; it is integrable in 4-D and such nodes carry `O(h²)` of it.
pub fn hardy2v2_ratio(w: &ScalarField, geom: &DomainGeometry, chart: &ConformalChart) -> Result<RatioReport> {
    check_w(w, geom, chart)?;
    let grid = w.grid();
    let lw = laplace_beltrami(w, chart)?;
    let vw = chart.volume_weight();
    let phi = chart.phi();
    let sup = (0..grid.len()).map(|i| grad_sq_g(geom.grad_rho.at(i), phi.at(i))).fold(0.0, f64::max);
    let floor = 1e-24 * sup;
    let lhs = node_sum(grid, |i| {
        let r = geom.rho.at(i);
        if r > 0.0 && w.at(i) != 0.0 {
            w.at(i).powi(2) * grad_sq_g(geom.grad_rho.at(i), phi.at(i)) / r.powi(4) * vw.at(i)
        } else {
            0.0
        }
    });
    let rhs = node_sum(grid, |i| {
        let l2 = lw.at(i).powi(2);
        if l2 == 0.0 {
            return 0.0;
        }
        let g2 = grad_sq_g(geom.grad_rho.at(i), phi.at(i));
        let inv = if g2 > floor { 1.0 / g2 } else { 0.0 };
        l2 * (1.0 + inv) * vw.at(i)
    });
    Ok(RatioReport::new(lhs, rhs))
}

/// The intermediate step `3∫w²|∇ρ|²/ρ⁴ <= ∫w² Δ(1/(2ρ²))` (flat quantities).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Largest relative nodal gap between the stencil Laplacian of `1/(2ρ²)`
    /// and `-Δρ/ρ³ + 3|∇ρ|²/ρ⁴`, over unflagged nodes whose stencil has `ρ > 0`.
    pub identity_deviation: f64,
    pub excluded_nodes: usize,
}

/// Evaluates the chain step on unflagged nodes. The right side is assembled
/// from the identity `Δ(1/(2ρ²)) = -Δρ/ρ³ + 3|∇ρ|²/ρ⁴`, so the inequality
/// reduces to the sign of `Δ_h ρ` node by node.
pub fn chain_check(w: &ScalarField, geom: &DomainGeometry, chart: &ConformalChart) -> Result<ChainReport> {
    check_w(w, geom, chart)?;
    let grid = w.grid();
    let rho = &geom.rho;
    let inv = ScalarField::from_values(
        grid,
        rho.values().iter().map(|&r| if r > 0.0 { 0.5 / (r * r) } else { 0.0 }).collect(),
    )?;
    let lap_inv = laplacian_flat(&inv);
    let mut excluded = 0;
    let mut dev: f64 = 0.0;
    let mut lhs_t = vec![0.0; grid.len()];
    let mut slack_t = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let r = rho.at(i);
        if w.at(i) == 0.0 || r <= 0.0 {
            continue;
        }
        if geom.flagged[i] {
            excluded += 1;
            continue;
        }
        let g2: f64 = geom.grad_rho.at(i).iter().map(|x| x * x).sum();
        let w2 = w.at(i).powi(2);
        lhs_t[i] = 3.0 * w2 * g2 / r.powi(4);
        slack_t[i] = -w2 * geom.lap_rho.at(i) / r.powi(3);
        let stencil_positive = (0..4).all(|a| {
            [grid.minus(i, a), grid.plus(i, a)].into_iter().flatten().all(|j| rho.at(j) > 0.0)
        });
        if stencil_positive {
            let ident = -geom.lap_rho.at(i) / r.powi(3) + 3.0 * g2 / r.powi(4);
            dev = dev.max((lap_inv.at(i) - ident).abs() / ident.abs().max(f64::MIN_POSITIVE));
        }
    }
    let cell = grid.cell_volume();
    let lhs = pairwise_sum(&lhs_t) * cell;
    let slack = pairwise_sum(&slack_t) * cell;
    let rhs = lhs + slack;
    Ok(ChainReport { lhs, rhs, holds: slack >= -1e-12 * lhs, identity_deviation: dev, excluded_nodes: excluded })
}

/// `∫|∇²w|² - ∫|Δw|²` on a flat chart (zero in the continuum for compact
/// support) and, given `ρ`, the ratio of `∫|∇w|²|∇ρ|²/ρ²` to `∫|∇²w|²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HessianLaplaceReport {
    pub hessian_sq: f64,
    pub laplacian_sq: f64,
    pub difference: f64,
    pub gradient_hardy: Option<RatioReport>,
}

pub fn hessian_laplace_identity(w: &ScalarField, chart: &ConformalChart, geom: Option<&DomainGeometry>) -> Result<HessianLaplaceReport> {
    same_grid(w.grid(), chart.grid())?;
    if !chart.is_flat() {
        return Err(Error::InvalidDomain("the Hessian identity is evaluated on flat charts".into()));
    }
    let grid = w.grid();
    if let Some(node) = (0..grid.len()).find(|&i| grid.depth(i) < 2 && w.at(i) != 0.0) {
        return Err(Error::RegionTooShallow { required: 2, node, depth: grid.depth(node) });
    }
    let hess = hessian_flat(w);
    let lap = laplacian_flat(w);
    let hessian_sq = node_sum(grid, |i| hess[i].norm_sq());
    let laplacian_sq = node_sum(grid, |i| lap.at(i).powi(2));
    let gradient_hardy = geom.map(|g| {
        let gw = gradient_flat(w);
        let lhs = node_sum(grid, |i| {
            let r = g.rho.at(i);
            let gw2: f64 = gw.at(i).iter().map(|x| x * x).sum();
            if r > 0.0 && gw2 > 0.0 {
                gw2 * g.grad_rho.at(i).iter().map(|x| x * x).sum::<f64>() / (r * r)
            } else {
                0.0
            }
        });
        RatioReport::new(lhs, hessian_sq)
    });
    Ok(HessianLaplaceReport { hessian_sq, laplacian_sq, difference: hessian_sq - laplacian_sq, gradient_hardy })
}

/// Which inequality a family feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    First,
    Second,
}

/// Seeded family `w = ρ^p · trig(x) · (1 + noise(x))`, masked below depth 2.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilySpec {
    pub order: Order,
    pub members: usize,
    pub seed: u64,
    /// Overrides the default radial powers of the order.
    pub powers: Option<Vec<f64>>,
}

impl FamilySpec {
    pub fn new(order: Order, members: usize, seed: u64) -> Self {
        FamilySpec { order, members, seed, powers: None }
    }

    pub fn with_powers(mut self, powers: Vec<f64>) -> Self {
        self.powers = Some(powers);
        self
    }

    pub fn powers(&self) -> &[f64] {
        if let Some(p) = &self.powers {
            return p;
        }
        match self.order {
            Order::First => &[1.0, 1.5, 2.0, 3.0],
            Order::Second => &[2.0, 2.5, 3.0],
        }
    }
}

/// One family member with its parameters.
#[derive(Clone, Debug)]
pub struct Member {
    pub id: usize,
    pub power: f64,
    pub w: ScalarField,
}

/// Builds member `id`. The parameters come from stream `id` of the seed, so
/// the member is the same function on every grid.
pub fn family_member(spec: &FamilySpec, id: usize, geom: &DomainGeometry) -> Result<Member> {
    let grid = &geom.grid;
    let powers = spec.powers();
    let power = powers[id % powers.len()];
    let mut r = rng(spec.seed, id as u64);
    let lo = grid.origin();
    let hi = grid.upper();
    let ext: [f64; 4] = std::array::from_fn(|a| hi[a] - lo[a]);
    let freq: [f64; 4] = std::array::from_fn(|a| r.random_range(0.0..2.0) * PI / ext[a]);
    let shift: f64 = r.random_range(0.0..2.0 * PI);
    let mix: f64 = r.random_range(0.2..0.8);
    let noise_amp: f64 = r.random_range(0.0..0.5);
    let radius = 0.25 * ext.iter().cloned().fold(f64::INFINITY, f64::min);
    let noise = NoiseSpec {
        amplitude: noise_amp,
        bumps: 4,
        radius,
        margin: 0.0,
        power: 4,
        min_depth: 0,
        seed: spec.seed ^ 0x9e37_79b9_7f4a_7c15,
        stream: id as u64,
    };
    let nz = scalar_noise(grid, &noise)?;
    let values = (0..grid.len())
        .map(|i| {
            if grid.depth(i) < 2 {
                return 0.0;
            }
            let x = grid.position(i);
            let phase: f64 = (0..4).map(|a| freq[a] * (x[a] - lo[a])).sum::<f64>() + shift;
            let trig = 1.0 + mix * phase.sin();
            geom.rho.at(i).powf(power) * trig * (1.0 + nz.at(i))
        })
        .collect();
    Ok(Member { id, power, w: ScalarField::from_values(grid, values)? })
}

/// One row of the Hardy report.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyRow {
    pub id: usize,
    pub power: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub h: f64,
    pub chain_holds: Option<bool>,
}

/// Evaluates every member; `first` order uses [`hardy1_ratio`], `second`
/// uses [`hardy2_ratio`] plus the chain check.
pub fn evaluate_family(spec: &FamilySpec, geom: &DomainGeometry, chart: &ConformalChart) -> Result<Vec<FamilyRow>> {
    let h = geom.grid.spacing()[0];
    (0..spec.members)
        .map(|id| {
            let m = family_member(spec, id, geom)?;
            let (rep, chain) = match spec.order {
                Order::First => (hardy1_ratio(&m.w, geom, chart)?, None),
                Order::Second => (hardy2_ratio(&m.w, geom, chart)?, Some(chain_check(&m.w, geom, chart)?.holds)),
            };
            Ok(FamilyRow { id, power: m.power, lhs: rep.lhs, rhs: rep.rhs, ratio: rep.ratio, h, chain_holds: chain })
        })
        .collect()
}

/// Empirical constant: the largest second-order ratio over the family.
pub fn estimate_constant(spec: &FamilySpec, geom: &DomainGeometry, chart: &ConformalChart) -> Result<f64> {
    let spec = FamilySpec { order: Order::Second, ..spec.clone() };
    Ok(evaluate_family(&spec, geom, chart)?.iter().map(|r| r.ratio).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(n: usize) -> (Arc<Grid4>, DomainGeometry) {
        let g = Grid4::cube(n, -1.0, 1.0).unwrap();
        let geom = distance_field(&g, &DomainSpec::Ball { center: [0.0; 4], radius: 1.0 }).unwrap();
        (g, geom)
    }

    #[test]
    fn ball_distance_is_superharmonic() {
        let (g, geom) = ball(12);
        assert!(geom.superharmonic_ok, "{}", geom.max_violation);
        assert!(geom.max_violation <= 0.0);
        for i in 0..g.len() {
            if g.depth(i) == 0 {
                assert_eq!(geom.rho.at(i), 0.0);
            }
        }
        // closed form Δρ = -3/|x| away from the center and the kink
        for i in (0..g.len()).filter(|&i| !geom.flagged[i] && geom.rho.at(i) > 0.3) {
            let r = g.position(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((geom.lap_rho.at(i) + 3.0 / r).abs() < 0.5, "{} {}", geom.lap_rho.at(i), r);
        }
    }

    #[test]
    fn box_distance_flags_ridges() {
        let g = Grid4::cube(9, 0.0, 1.0).unwrap();
        let geom = distance_field(&g, &DomainSpec::Box).unwrap();
        assert!(geom.superharmonic_ok);
        assert!(geom.flagged_count() > 0);
        for i in (0..g.len()).filter(|&i| !geom.flagged[i] && g.depth(i) >= 1) {
            assert!(geom.lap_rho.at(i).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_rho_rejected() {
        let g = Grid4::cube(6, 0.0, 1.0).unwrap();
        let rho = ScalarField::constant(&g, 0.5);
        assert!(DomainGeometry::from_rho(rho, GeometryKind::Distance, vec![false; g.len()]).is_err());
    }

    #[test]
    fn zero_function_reports_zero_ratio() {
        let (g, geom) = ball(8);
        let chart = ConformalChart::flat(&g);
        let w = ScalarField::zeros(&g);
        assert_eq!(hardy1_ratio(&w, &geom, &chart).unwrap().ratio, 0.0);
        assert_eq!(hardy2_ratio(&w, &geom, &chart).unwrap().ratio, 0.0);
        assert!(chain_check(&w, &geom, &chart).unwrap().holds);
    }

    #[test]
    fn polynomial_member_within_bound() {
        let (g, geom) = ball(16);
        let chart = ConformalChart::flat(&g);
        let w = ScalarField::from_fn(&g, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 < 1.0 { (1.0 - r2).powi(2) } else { 0.0 }
        });
        let w = mask_shallow(&w);
        let r1 = hardy1_ratio(&w, &geom, &chart).unwrap();
        assert!(r1.ratio <= HARDY1_BOUND, "{r1:?}");
        let r2 = hardy2_ratio(&w, &geom, &chart).unwrap();
        assert!(r2.ratio.is_finite() && r2.ratio > 0.0);
        assert!(chain_check(&w, &geom, &chart).unwrap().holds);
    }

    fn mask_shallow(w: &ScalarField) -> ScalarField {
        let g = w.grid().clone();
        ScalarField::from_values(&g, (0..g.len()).map(|i| if g.depth(i) < 2 { 0.0 } else { w.at(i) }).collect()).unwrap()
    }

    #[test]
    fn flat_box_eigenpair() {
        let g = Grid4::cube(9, 0.0, PI).unwrap();
        let eig = first_eigenpair(&ConformalChart::flat(&g)).unwrap();
        let h = g.spacing()[0];
        let exact = 4.0 * (2.0 - 2.0 * h.cos()) / (h * h);
        assert!((eig.lambda1 - exact).abs() < 1e-9, "{} {}", eig.lambda1, exact);
        assert!(eig.residual <= EIGEN_RESIDUAL_TOL);
        for i in 0..g.len() {
            if g.depth(i) == 0 {
                assert_eq!(eig.psi.at(i), 0.0);
            } else {
                assert!(eig.psi.at(i) > 0.0);
            }
        }
    }

    #[test]
    fn family_is_reproducible() {
        let (_, geom) = ball(8);
        let spec = FamilySpec::new(Order::Second, 3, 11);
        let a = family_member(&spec, 2, &geom).unwrap();
        let b = family_member(&spec, 2, &geom).unwrap();
        assert_eq!(a.w.values(), b.w.values());
        assert_eq!(a.power, 3.0);
    }
}
