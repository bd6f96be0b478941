//! Maps into the unit sphere `Sⁿ ⊂ R^{n+1}`, the tangent/normal projections
//! `P = Id - uuᵀ` and `P⊥ = uuᵀ`, and tension fields.

use std::sync::Arc;

use crate::conformal::{laplace_beltrami_vec, ConformalChart};
use crate::error::{Error, Result};
use crate::grid::{dot, gradient_raw, laplacian_raw, same_grid, Grid4, ScalarField, VectorField};
use crate::noise::{tangent_noise, NoiseSpec};

/// Raw vectors shorter than this cannot be projected.
pub const MIN_PROJECTION_NORM: f64 = 1e-8;

/// Allowed deviation of `|u|` from one.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// An ambient `(n+1)`-vector of unit length at every node.
#[derive(Clone, Debug)]
pub struct SphereMap {
    field: VectorField,
}

/// Closed-form maps used by experiments and tests.
#[derive(Clone, Debug, PartialEq)]
pub enum MapPreset {
    Constant { point: Vec<f64> },
    /// `(cos a·x, sin a·x, 0, …)`.
    GreatCircle { wave: [f64; 4] },
    /// Great circle tilted out of its plane by `eps·sin(b·x + 0.3)`, smooth everywhere.
    Smooth { wave: [f64; 4], eps: f64 },
    /// Great circle plus seeded tangential noise supported away from the boundary.
    PerturbedGreatCircle { wave: [f64; 4], noise: NoiseSpec },
}

/// Fixed secondary wave vector of [`MapPreset::Smooth`].
pub const SMOOTH_TILT_WAVE: [f64; 4] = [2.0, -1.0, 1.5, 0.5];

impl MapPreset {
    pub fn build(&self, grid: &Arc<Grid4>, target_dim: usize) -> Result<SphereMap> {
        if target_dim == 0 {
            return Err(Error::InvalidDomain("target dimension must be at least 1".into()));
        }
        let k = target_dim + 1;
        match self {
            MapPreset::Constant { point } => {
                if point.len() != k {
                    return Err(Error::ShapeMismatch { expected: k, actual: point.len() });
                }
                let p = point.clone();
                project_to_sphere(&VectorField::from_fn(grid, k, |_, out| out.copy_from_slice(&p)))
            }
            MapPreset::GreatCircle { wave } => Ok(great_circle(grid, *wave, target_dim)),
            MapPreset::Smooth { wave, eps } => {
                if k < 3 {
                    return Err(Error::InvalidDomain("tilted map needs target dimension >= 2".into()));
                }
                let raw = VectorField::from_fn(grid, k, |x, out| {
                    let t = phase(*wave, x);
                    out[0] = t.cos();
                    out[1] = t.sin();
                    out[2] = eps * (phase(SMOOTH_TILT_WAVE, x) + 0.3).sin();
                });
                project_to_sphere(&raw)
            }
            MapPreset::PerturbedGreatCircle { wave, noise } => {
                let base = great_circle(grid, *wave, target_dim);
                let xi = tangent_noise(&base, noise)?;
                base.perturb(&xi)
            }
        }
    }
}

fn phase(a: [f64; 4], x: [f64; 4]) -> f64 {
    (0..4).map(|i| a[i] * x[i]).sum()
}

/// `u(x) = (cos a·x, sin a·x, 0, …)`.
pub fn great_circle(grid: &Arc<Grid4>, wave: [f64; 4], target_dim: usize) -> SphereMap {
    let field = VectorField::from_fn(grid, target_dim + 1, |x, out| {
        let t = phase(wave, x);
        out[0] = t.cos();
        out[1] = t.sin();
    });
    SphereMap { field }
}

/// Nearest-point projection `Π(raw) = raw / |raw|`, node by node.
pub fn project_to_sphere(raw: &VectorField) -> Result<SphereMap> {
    if raw.dim() < 2 {
        return Err(Error::InvalidDomain("ambient dimension must be at least 2".into()));
    }
    let mut out = raw.clone();
    let k = raw.dim();
    for (node, v) in out.values_mut().chunks_exact_mut(k).enumerate() {
        let norm = dot(v, v).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite { node });
        }
        if norm < MIN_PROJECTION_NORM {
            return Err(Error::DegenerateProjection { node, norm });
        }
        v.iter_mut().for_each(|c| *c /= norm);
    }
    Ok(SphereMap { field: out })
}

impl SphereMap {
    /// Wraps values that must already be unit vectors (within [`UNIT_TOLERANCE`]).
    pub fn from_field(field: VectorField) -> Result<SphereMap> {
        if field.dim() < 2 {
            return Err(Error::InvalidDomain("ambient dimension must be at least 2".into()));
        }
        for (node, v) in field.values().chunks_exact(field.dim()).enumerate() {
            let n = dot(v, v).sqrt();
            if !n.is_finite() {
                return Err(Error::NonFinite { node });
            }
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::DegenerateProjection { node, norm: n });
            }
        }
        Ok(SphereMap { field })
    }

    pub fn grid(&self) -> &Arc<Grid4> {
        self.field.grid()
    }

    pub fn ambient_dim(&self) -> usize {
        self.field.dim()
    }

    pub fn target_dim(&self) -> usize {
        self.field.dim() - 1
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        self.field.at(i)
    }

    pub fn as_field(&self) -> &VectorField {
        &self.field
    }

    pub fn into_field(self) -> VectorField {
        self.field
    }

    /// `Π(u + ξ)`. Nodes where `ξ` is exactly zero keep their bits.
    pub fn perturb(&self, xi: &VectorField) -> Result<SphereMap> {
        same_grid(self.grid(), xi.grid())?;
        if xi.dim() != self.ambient_dim() {
            return Err(Error::ShapeMismatch { expected: self.ambient_dim(), actual: xi.dim() });
        }
        let k = self.ambient_dim();
        let mut out = self.field.clone();
        for i in 0..self.grid().len() {
            let d = xi.at(i);
            if d.iter().all(|&c| c == 0.0) {
                continue;
            }
            let v = out.at_mut(i);
            for c in 0..k {
                v[c] += d[c];
            }
            let norm = dot(v, v).sqrt();
            if norm < MIN_PROJECTION_NORM {
                return Err(Error::DegenerateProjection { node: i, norm });
            }
            v.iter_mut().for_each(|c| *c /= norm);
        }
        Ok(SphereMap { field: out })
    }

    /// Largest `||u(x)| - 1|`.
    pub fn max_unit_deviation(&self) -> f64 {
        self.field
            .values()
            .chunks_exact(self.ambient_dim())
            .map(|v| (dot(v, v).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `P(v) = v - (u·v)u`.
pub fn tangent_project(u: &[f64], v: &[f64]) -> Vec<f64> {
    let s = dot(u, v);
    u.iter().zip(v).map(|(ui, vi)| vi - s * ui).collect()
}

/// `P⊥(v) = (u·v)u`.
pub fn normal_project(u: &[f64], v: &[f64]) -> Vec<f64> {
    let s = dot(u, v);
    u.iter().map(|ui| s * ui).collect()
}

#[inline]
pub(crate) fn tangent_project_in_place(u: &[f64], v: &mut [f64]) {
    let s = dot(u, v);
    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= s * ui);
}

/// Projects every node of an ambient field onto the tangent space at `u`.
pub fn tangent_project_field(u: &SphereMap, v: &VectorField) -> Result<VectorField> {
    same_grid(u.grid(), v.grid())?;
    if v.dim() != u.ambient_dim() {
        return Err(Error::ShapeMismatch { expected: u.ambient_dim(), actual: v.dim() });
    }
    let mut out = v.clone();
    for i in 0..u.grid().len() {
        tangent_project_in_place(u.at(i), out.at_mut(i));
    }
    Ok(out)
}

/// `|∇̄u|²` per node; `A(u)(∇u, ∇u) = u·|∇̄u|²` for the round sphere.
pub fn second_fundamental_energy_density(u: &SphereMap) -> ScalarField {
    let k = u.ambient_dim();
    let grad = gradient_raw(u.grid(), u.values(), k);
    let values = grad.chunks_exact(4 * k).map(|g| dot(g, g)).collect();
    ScalarField::from_values(u.grid(), values).expect("one value per node")
}

/// `τ(u) = P(Δ_g u)`; zero on the outer layer.
pub fn tension(u: &SphereMap, chart: &ConformalChart) -> Result<VectorField> {
    let lap = laplace_beltrami_vec(u.as_field(), chart)?;
    tangent_project_field(u, &lap)
}

/// `τ̄(u) = P(Δ̄_h u)` against the flat metric.
pub fn tension_flat(u: &SphereMap) -> VectorField {
    let k = u.ambient_dim();
    let mut lap = laplacian_raw(u.grid(), u.values(), k);
    for (i, v) in lap.chunks_exact_mut(k).enumerate() {
        tangent_project_in_place(u.at(i), v);
    }
    VectorField::from_values(u.grid(), k, lap).expect("one vector per node")
}

/// Pointwise Cauchy–Schwarz check `(u·Δ_h u)² ≤ |Δ_h u|²`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CsReport {
    /// Nodes (depth >= 1) checked.
    pub nodes: usize,
    /// Nodes where the Lagrange form `Σ_{i<j}(u_i L_j - u_j L_i)²` is negative. Always 0.
    pub violations: usize,
    /// Largest `(u·L)² - |L|²` as evaluated naively, relative to `|L|²`
    /// (rounding only; positive values are not violations).
    pub naive_excess: f64,
    /// Smallest relative gap `(|L|² - (u·L)²)/|L|²`; 0 in the equality case.
    pub min_relative_gap: f64,
    /// Largest `|u·Δ_h u + |∇_h u|²|`, an O(h²) discrete slack.
    pub identity_slack: f64,
}

impl CsReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// With `|u| = 1` the inequality is Lagrange's identity
/// `|u|²|L|² - (u·L)² = Σ_{i<j}(u_i L_j - u_j L_i)²`; the right side is a sum
/// of squares, so it is evaluated in that form.
pub fn pointwise_cs_bound(u: &SphereMap) -> CsReport {
    let grid = u.grid();
    let k = u.ambient_dim();
    let lap = laplacian_raw(grid, u.values(), k);
    let grad = gradient_raw(grid, u.values(), k);
    let mut rep = CsReport {
        nodes: 0,
        violations: 0,
        naive_excess: 0.0,
        min_relative_gap: f64::INFINITY,
        identity_slack: 0.0,
    };
    for i in (0..grid.len()).filter(|&i| grid.depth(i) >= 1) {
        let uu = u.at(i);
        let l = &lap[i * k..(i + 1) * k];
        let mut lagrange = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                let m = uu[a] * l[b] - uu[b] * l[a];
                lagrange += m * m;
            }
        }
        rep.nodes += 1;
        if lagrange < 0.0 {
            rep.violations += 1;
        }
        let ul = dot(uu, l);
        let ll = dot(l, l);
        if ll > 0.0 {
            rep.naive_excess = rep.naive_excess.max((ul * ul - ll) / ll);
            rep.min_relative_gap = rep.min_relative_gap.min(lagrange / ll);
        }
        let g = &grad[i * k * 4..(i + 1) * k * 4];
        rep.identity_slack = rep.identity_slack.max((ul + dot(g, g)).abs());
    }
    if !rep.min_relative_gap.is_finite() {
        rep.min_relative_gap = 0.0;
    }
    rep
}

/// Largest `|u·D_α u|` over depth >= 1, relative to the largest `|D_α u|`.
pub fn unit_gradient_slack(u: &SphereMap) -> f64 {
    let grid = u.grid();
    let k = u.ambient_dim();
    let grad = gradient_raw(grid, u.values(), k);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in (0..grid.len()).filter(|&i| grid.depth(i) >= 1) {
        for a in 0..4 {
            let mut s = 0.0;
            let mut n2 = 0.0;
            for c in 0..k {
                let d = grad[(i * k + c) * 4 + a];
                s += u.at(i)[c] * d;
                n2 += d * d;
            }
            worst = worst.max(s.abs());
            scale = scale.max(n2.sqrt());
        }
    }
    if scale > 0.0 {
        worst / scale
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::PhiPreset;

    fn grid(n: usize) -> Arc<Grid4> {
        Grid4::cube(n, 0.0, 1.0).unwrap()
    }

    #[test]
    fn projection_normalizes() {
        let g = grid(5);
        let raw = VectorField::from_fn(&g, 3, |_, o| o.copy_from_slice(&[1.0, 1.0, 0.0]));
        let u = project_to_sphere(&raw).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((u.at(3)[0] - s).abs() < 1e-16 && (u.at(3)[1] - s).abs() < 1e-16);
        let raw = VectorField::from_fn(&g, 3, |_, o| o.copy_from_slice(&[2.0, 0.0, 0.0]));
        assert_eq!(project_to_sphere(&raw).unwrap().at(0), &[1.0, 0.0, 0.0]);
        let again = project_to_sphere(u.as_field()).unwrap();
        assert!(again.values().iter().zip(u.values()).all(|(a, b)| (a - b).abs() < 4e-16));
    }

    #[test]
    fn degenerate_projection_names_node() {
        let g = grid(5);
        let mut raw = VectorField::from_fn(&g, 3, |_, o| o[2] = 1.0);
        raw.at_mut(42).fill(0.0);
        match project_to_sphere(&raw) {
            Err(Error::DegenerateProjection { node, .. }) => assert_eq!(node, 42),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn projector_identities() {
        let u = [0.6, 0.0, 0.8];
        assert!(tangent_project(&u, &u).iter().all(|c| c.abs() < 1e-16));
        assert_eq!(normal_project(&u, &u), u.to_vec());
        let v = [0.0, 1.0, 0.0];
        assert_eq!(tangent_project(&u, &v), v.to_vec());
    }

    #[test]
    fn great_circle_flat_tension_vanishes() {
        let g = grid(7);
        let u = great_circle(&g, [1.1, -0.4, 0.7, 0.3], 2);
        let t = tension_flat(&u);
        assert!(t.values().iter().all(|c| c.abs() < 1e-12), "{}", t.max_norm());
        let cs = pointwise_cs_bound(&u);
        assert!(cs.holds());
        assert!(cs.min_relative_gap < 1e-24);
    }

    #[test]
    fn great_circle_gradient_density() {
        let a = [1.1, -0.4, 0.7, 0.3];
        let a2: f64 = a.iter().map(|x| x * x).sum();
        let g = grid(11);
        let d = second_fundamental_energy_density(&great_circle(&g, a, 2));
        for i in 0..g.len() {
            if g.depth(i) >= 1 {
                assert!((d.at(i) - a2).abs() < 1e-2 * a2);
            }
        }
    }

    #[test]
    fn tension_is_tangential() {
        let g = grid(7);
        let u = MapPreset::Smooth { wave: [1.0, 2.0, 0.5, -1.0], eps: 0.6 }.build(&g, 2).unwrap();
        let chart =
            ConformalChart::from_preset(&g, &PhiPreset::Stereographic { center: [0.5; 4] }).unwrap();
        let t = tension(&u, &chart).unwrap();
        for i in 0..g.len() {
            assert!(dot(t.at(i), u.at(i)).abs() < 1e-12);
        }
        assert!(u.max_unit_deviation() < 1e-15);
        assert!(pointwise_cs_bound(&u).holds());
    }

    #[test]
    fn constant_map_is_trivial() {
        let g = grid(5);
        let u = MapPreset::Constant { point: vec![0.0, 0.0, 2.0] }.build(&g, 2).unwrap();
        assert!(tension_flat(&u).values().iter().all(|&c| c == 0.0));
        assert!(second_fundamental_energy_density(&u).values().iter().all(|&c| c == 0.0));
        let cs = pointwise_cs_bound(&u);
        assert!(cs.holds() && cs.identity_slack == 0.0);
    }

    #[test]
    fn from_field_rejects_off_sphere() {
        let g = grid(5);
        let raw = VectorField::from_fn(&g, 3, |_, o| o[0] = 1.0 + 1e-9);
        assert!(SphereMap::from_field(raw).is_err());
    }
}
