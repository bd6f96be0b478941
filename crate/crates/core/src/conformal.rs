//! Conformally flat charts `g = e^{2φ}·(flat)` and the geometry derived from
//! the factor: Ricci and scalar curvature, the Laplace–Beltrami operator,
//! volume, and total Q-curvature.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{
    gradient_raw, hessian_flat, integrate_flat, laplacian_raw, same_grid, sum_flat,
    Grid4, Region, ScalarField, Sym4, VectorField,
};
use crate::sphere::{tension_flat, SphereMap};

/// Closed-form conformal factors.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiPreset {
    Flat,
    Constant(f64),
    /// `φ = ln(2 / (1 + |x - c|²))`: stereographic coordinates on the unit round sphere.
    Stereographic { center: [f64; 4] },
    /// `amplitude · (1 - |x - c|²/r²)^power` inside the ball of radius `r`, zero outside.
    Bump { amplitude: f64, center: [f64; 4], radius: f64, power: i32 },
}

impl PhiPreset {
    pub fn eval(&self, x: [f64; 4]) -> f64 {
        match *self {
            PhiPreset::Flat => 0.0,
            PhiPreset::Constant(c) => c,
            PhiPreset::Stereographic { center } => (2.0 / (1.0 + dist_sq(x, center))).ln(),
            PhiPreset::Bump { amplitude, center, radius, power } => {
                amplitude * bump_profile(dist_sq(x, center) / (radius * radius), power)
            }
        }
    }

    pub fn field(&self, grid: &Arc<Grid4>) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }
}

/// `(1 - s2)^power` for `s2 < 1`, zero otherwise.
pub fn bump_profile(s2: f64, power: i32) -> f64 {
    if s2 < 1.0 {
        (1.0 - s2).powi(power)
    } else {
        0.0
    }
}

fn dist_sq(x: [f64; 4], c: [f64; 4]) -> f64 {
    (0..4).map(|a| (x[a] - c[a]) * (x[a] - c[a])).sum()
}

/// A conformal factor on a grid with its curvature cached at construction.
#[derive(Clone, Debug)]
pub struct ConformalChart {
    grid: Arc<Grid4>,
    phi: ScalarField,
    grad_phi: VectorField,
    lap_phi: ScalarField,
    scalar_curvature: ScalarField,
    ricci: Vec<Sym4>,
    volume_weight: ScalarField,
}

/// Builds the chart for `g = e^{2φ}·flat`, caching
/// `Ric = -2(Hess φ - dφ⊗dφ) - (Δ̄φ + 2|∇̄φ|²)·flat` (coordinate components) and
/// `Sc = e^{-2φ}(-6Δ̄φ - 6|∇̄φ|²)`.
///
/// Second derivatives are masked on the outer layer, so curvature there is
/// not meaningful; every consumer works at depth >= 1.
pub fn curvature_from_phi(grid: &Arc<Grid4>, phi: &ScalarField) -> Result<ConformalChart> {
    same_grid(grid, phi.grid())?;
    if let Some(node) = phi.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    let n = grid.len();
    let grad = gradient_raw(grid, phi.values(), 1);
    let lap = laplacian_raw(grid, phi.values(), 1);
    let hess = hessian_flat(phi);
    let mut sc = vec![0.0; n];
    let mut ricci = vec![Sym4::zero(); n];
    let mut vw = vec![0.0; n];
    for i in 0..n {
        let d = &grad[i * 4..i * 4 + 4];
        let g2: f64 = d.iter().map(|x| x * x).sum();
        let trace_part = lap[i] + 2.0 * g2;
        let mut r = Sym4::zero();
        for a in 0..4 {
            for b in 0..4 {
                r.0[a][b] = -2.0 * (hess[i].0[a][b] - d[a] * d[b]);
            }
            r.0[a][a] -= trace_part;
        }
        ricci[i] = r;
        let e2 = (-2.0 * phi.at(i)).exp();
        sc[i] = e2 * (-6.0 * lap[i] - 6.0 * g2);
        vw[i] = (4.0 * phi.at(i)).exp();
    }
    Ok(ConformalChart {
        grid: grid.clone(),
        phi: phi.clone(),
        grad_phi: VectorField::from_values(grid, 4, grad)?,
        lap_phi: ScalarField::from_values(grid, lap)?,
        scalar_curvature: ScalarField::from_values(grid, sc)?,
        ricci,
        volume_weight: ScalarField::from_values(grid, vw)?,
    })
}

impl ConformalChart {
    pub fn flat(grid: &Arc<Grid4>) -> ConformalChart {
        curvature_from_phi(grid, &ScalarField::zeros(grid)).expect("zero factor is finite")
    }

    pub fn from_preset(grid: &Arc<Grid4>, preset: &PhiPreset) -> Result<ConformalChart> {
        curvature_from_phi(grid, &preset.field(grid))
    }

    pub fn grid(&self) -> &Arc<Grid4> {
        &self.grid
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn grad_phi(&self) -> &VectorField {
        &self.grad_phi
    }

    pub fn lap_phi(&self) -> &ScalarField {
        &self.lap_phi
    }

    pub fn scalar_curvature(&self) -> &ScalarField {
        &self.scalar_curvature
    }

    /// Ricci tensor, coordinate (lower-index) components.
    pub fn ricci(&self) -> &[Sym4] {
        &self.ricci
    }

    /// `e^{4φ}`, the density of `dv_g` against `dx`.
    pub fn volume_weight(&self) -> &ScalarField {
        &self.volume_weight
    }

    /// True when the factor is identically zero.
    pub fn is_flat(&self) -> bool {
        self.phi.values().iter().all(|&v| v == 0.0)
    }

    /// `|Ric|²_g = e^{-4φ} Σ Ric_{αβ}²` at node `i`.
    pub fn ricci_norm_sq(&self, i: usize) -> f64 {
        (-4.0 * self.phi.at(i)).exp() * self.ricci[i].norm_sq()
    }

    /// Recomputes curvature from the stored factor and compares bit for bit.
    pub fn cache_is_consistent(&self) -> bool {
        match curvature_from_phi(&self.grid, &self.phi) {
            Ok(fresh) => {
                fresh.scalar_curvature.values() == self.scalar_curvature.values()
                    && fresh.ricci == self.ricci
                    && fresh.volume_weight.values() == self.volume_weight.values()
            }
            Err(_) => false,
        }
    }
}

pub(crate) fn laplace_beltrami_raw(chart: &ConformalChart, vals: &[f64], ncomp: usize) -> Vec<f64> {
    let grid = &chart.grid;
    let lap = laplacian_raw(grid, vals, ncomp);
    let grad = gradient_raw(grid, vals, ncomp);
    let mut out = vec![0.0; lap.len()];
    for i in 0..grid.len() {
        let dphi = chart.grad_phi.at(i);
        let e2 = (-2.0 * chart.phi.at(i)).exp();
        for c in 0..ncomp {
            let g = &grad[(i * ncomp + c) * 4..(i * ncomp + c) * 4 + 4];
            let cross: f64 = (0..4).map(|a| dphi[a] * g[a]).sum();
            out[i * ncomp + c] = e2 * (lap[i * ncomp + c] + 2.0 * cross);
        }
    }
    out
}

/// `Δ_g f = e^{-2φ}(Δ̄f + 2∇̄φ·∇̄f)`; masked to zero on the outer layer.
pub fn laplace_beltrami(f: &ScalarField, chart: &ConformalChart) -> Result<ScalarField> {
    same_grid(f.grid(), &chart.grid)?;
    ScalarField::from_values(&chart.grid, laplace_beltrami_raw(chart, f.values(), 1))
}

/// Component-wise `Δ_g` of an ambient vector field.
pub fn laplace_beltrami_vec(f: &VectorField, chart: &ConformalChart) -> Result<VectorField> {
    same_grid(f.grid(), &chart.grid)?;
    VectorField::from_values(&chart.grid, f.dim(), laplace_beltrami_raw(chart, f.values(), f.dim()))
}

/// `∫ f dv_g` over `region` (trapezoid weights times `e^{4φ}`).
pub fn integrate_g(f: &ScalarField, chart: &ConformalChart, region: &Region) -> Result<f64> {
    let weighted = f.zip_with(&chart.volume_weight, |a, w| a * w)?;
    integrate_flat(&weighted, region)
}

/// `κ = (1/12) ∫ (Sc² - 3|Ric|²_g) dv_g` with one full cell per node, so the
/// value is additive over disjoint regions.
pub fn total_q_curvature(chart: &ConformalChart, region: &Region) -> Result<f64> {
    region.require_depth(&chart.grid, 2)?;
    let integrand = ScalarField::from_values(
        &chart.grid,
        (0..chart.grid.len())
            .map(|i| {
                let sc = chart.scalar_curvature.at(i);
                (sc * sc - 3.0 * chart.ricci_norm_sq(i)) * chart.volume_weight.at(i) / 12.0
            })
            .collect(),
    )?;
    sum_flat(&integrand, region)
}

/// Outcome of comparing the two sides of the conformal change of the tension field.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TensionIdentityReport {
    /// Largest nodal `|τ_g(u) - e^{-2φ}(τ̄(u) + 2⟨∇̄φ, du⟩)|` over depth >= 2.
    pub max_deviation: f64,
    /// Largest nodal `|τ_g(u)|`, for scale.
    pub max_tension: f64,
}

/// Compares `τ_g(u)` (tangential part of `Δ_g u`) with
/// `e^{-2φ}τ̄(u) + 2e^{-2φ}⟨∇̄φ, du⟩` where `φ = chart.phi + phi_pert`.
/// Both sides are computed independently; the right side is not projected.
pub fn conformal_tension_identity_check(
    u: &SphereMap,
    chart: &ConformalChart,
    phi_pert: &ScalarField,
) -> Result<TensionIdentityReport> {
    same_grid(u.grid(), &chart.grid)?;
    let phi = chart.phi.add(phi_pert)?;
    let perturbed = curvature_from_phi(&chart.grid, &phi)?;
    let lhs = crate::sphere::tension(u, &perturbed)?;
    let flat = tension_flat(u);
    let grad_u = gradient_raw(&chart.grid, u.values(), u.ambient_dim());
    let k = u.ambient_dim();
    let grid = &chart.grid;
    let mut dev: Vec<f64> = Vec::new();
    let mut mags: Vec<f64> = Vec::new();
    for i in (0..grid.len()).filter(|&i| grid.depth(i) >= 2) {
        let e2 = (-2.0 * phi.at(i)).exp();
        let dphi = perturbed.grad_phi.at(i);
        let mut d2 = 0.0;
        let mut m2 = 0.0;
        for c in 0..k {
            let g = &grad_u[(i * k + c) * 4..(i * k + c) * 4 + 4];
            let cross: f64 = (0..4).map(|a| dphi[a] * g[a]).sum();
            let rhs = e2 * flat.at(i)[c] + 2.0 * e2 * cross;
            let l = lhs.at(i)[c];
            d2 += (l - rhs) * (l - rhs);
            m2 += l * l;
        }
        dev.push(d2.sqrt());
        mags.push(m2.sqrt());
    }
    let max = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
    Ok(TensionIdentityReport { max_deviation: max(&dev), max_tension: max(&mags) })
}

/// Max nodal errors of `Sc` against 12 and of `Ric` against `3g` for the
/// stereographic factor, over depth >= 1.
pub fn stereographic_curvature_error(chart: &ConformalChart) -> (f64, f64) {
    let grid = &chart.grid;
    let mut sc_err: f64 = 0.0;
    let mut ric_err: f64 = 0.0;
    for i in (0..grid.len()).filter(|&i| grid.depth(i) >= 1) {
        sc_err = sc_err.max((chart.scalar_curvature.at(i) - 12.0).abs());
        let target = Sym4::identity_scaled(3.0 * (2.0 * chart.phi.at(i)).exp());
        ric_err = ric_err.max(chart.ricci[i].max_abs_diff(&target));
    }
    (sc_err, ric_err)
}

/// Sum of `e^{4φ}` times cell volume over `region`, for quick volume checks.
pub fn volume_g(chart: &ConformalChart, region: &Region) -> Result<f64> {
    integrate_g(&ScalarField::constant(&chart.grid, 1.0), chart, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian_flat;

    fn grid(n: usize) -> Arc<Grid4> {
        Grid4::cube(n, -0.5, 0.5).unwrap()
    }

    #[test]
    fn flat_factor_has_no_curvature() {
        let g = grid(6);
        let chart = ConformalChart::flat(&g);
        assert!(chart.scalar_curvature().values().iter().all(|&v| v == 0.0));
        assert!(chart.ricci().iter().all(|r| r.norm_sq() == 0.0));
        assert!(chart.volume_weight().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_factor_scales_volume_only() {
        let g = grid(6);
        let chart = ConformalChart::from_preset(&g, &PhiPreset::Constant(0.3)).unwrap();
        assert!(chart.scalar_curvature().max_abs() < 1e-12);
        assert!(chart.ricci().iter().all(|r| r.norm_sq() < 1e-20));
        let e = (1.2f64).exp();
        assert!(chart.volume_weight().values().iter().all(|&v| (v - e).abs() < 1e-14));
        let vol = volume_g(&chart, &Region::all(&g)).unwrap();
        assert!((vol - e).abs() < 1e-12);
    }

    #[test]
    fn non_finite_factor_rejected() {
        let g = grid(5);
        let mut phi = ScalarField::zeros(&g);
        phi.values_mut()[17] = f64::NAN;
        assert!(matches!(curvature_from_phi(&g, &phi), Err(Error::NonFinite { node: 17 })));
    }

    #[test]
    fn stereographic_round_sphere() {
        let g = grid(9);
        let chart =
            ConformalChart::from_preset(&g, &PhiPreset::Stereographic { center: [0.0; 4] }).unwrap();
        let (sc, ric) = stereographic_curvature_error(&chart);
        assert!(sc < 0.5 && ric < 0.5, "{sc} {ric}");
        for i in 0..g.len() {
            if g.depth(i) >= 1 {
                assert!(chart.scalar_curvature().at(i) > 0.0);
            }
        }
        assert!(chart.cache_is_consistent());
    }

    #[test]
    fn flat_laplace_beltrami_is_flat_laplacian() {
        let g = grid(6);
        let chart = ConformalChart::flat(&g);
        let f = ScalarField::from_fn(&g, |x| (x[0] * 3.0).sin() * x[2] + x[1] * x[3]);
        let lb = laplace_beltrami(&f, &chart).unwrap();
        assert_eq!(lb.values(), laplacian_flat(&f).values());
    }

    #[test]
    fn laplace_beltrami_closed_form() {
        // φ = 0.3 x₁, f = x₁²: Δ_g f = e^{-0.6 x₁}(2 + 2·0.3·2x₁)
        let err = |n: usize| {
            let g = grid(n);
            let phi = ScalarField::from_fn(&g, |x| 0.3 * x[0] + 0.2 * x[1] * x[1]);
            let chart = curvature_from_phi(&g, &phi).unwrap();
            let f = ScalarField::from_fn(&g, |x| (x[0] + x[1]).sin());
            let lb = laplace_beltrami(&f, &chart).unwrap();
            (0..g.len())
                .filter(|&i| g.depth(i) >= 1)
                .map(|i| {
                    let x = g.position(i);
                    let s = (x[0] + x[1]).sin();
                    let c = (x[0] + x[1]).cos();
                    let exact = (-2.0 * (0.3 * x[0] + 0.2 * x[1] * x[1])).exp()
                        * (-2.0 * s + 2.0 * (0.3 * c + 0.4 * x[1] * c));
                    (lb.at(i) - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(9) / err(17);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn q_curvature_vanishes_without_curvature() {
        let g = grid(7);
        let region = Region::depth_at_least(&g, 2);
        assert_eq!(total_q_curvature(&ConformalChart::flat(&g), &region).unwrap(), 0.0);
        let c = ConformalChart::from_preset(&g, &PhiPreset::Constant(-0.7)).unwrap();
        assert!(total_q_curvature(&c, &region).unwrap().abs() < 1e-12);
        assert!(total_q_curvature(&c, &Region::all(&g)).is_err());
    }

    #[test]
    fn q_curvature_additive() {
        let g = grid(9);
        let chart =
            ConformalChart::from_preset(&g, &PhiPreset::Stereographic { center: [0.0; 4] }).unwrap();
        let deep = Region::depth_at_least(&g, 2);
        let left = deep.intersect(&Region::from_fn(&g, |x| x[0] < 0.0));
        let right = deep.intersect(&Region::from_fn(&g, |x| x[0] >= 0.0));
        let whole = total_q_curvature(&chart, &deep).unwrap();
        let parts = total_q_curvature(&chart, &left).unwrap() + total_q_curvature(&chart, &right).unwrap();
        assert!((whole - parts).abs() <= 1e-13 * whole.abs());
    }
}
