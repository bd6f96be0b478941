//! Seeded smooth random fields built from compactly supported bumps placed
//! in continuum coordinates, so the same seed gives the same field on every
//! resolution (up to sampling).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conformal::bump_profile;
use crate::error::{Error, Result};
use crate::grid::{dot, Grid4, ScalarField, VectorField};
use crate::sphere::{tangent_project_in_place, SphereMap};

/// Counter-based generator: one stream per family member or pair index.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Parameters of a tangential noise field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSpec {
    /// Target value of `sup |ξ|`.
    pub amplitude: f64,
    pub bumps: usize,
    /// Bump radius in length units.
    pub radius: f64,
    /// Distance from the domain boundary that bump supports must keep.
    pub margin: f64,
    /// Exponent of the `(1 - s²)^power` profile.
    pub power: i32,
    /// Nodes shallower than this are forced to zero.
    pub min_depth: u32,
    pub seed: u64,
    pub stream: u64,
}

impl NoiseSpec {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        NoiseSpec { amplitude, bumps: 6, radius: 0.2, margin: 0.2, power: 4, min_depth: 3, seed, stream: 0 }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

struct Bump {
    center: [f64; 4],
    coeffs: Vec<f64>,
}

fn draw_bumps(grid: &Grid4, spec: &NoiseSpec, ncomp: usize) -> Result<Vec<Bump>> {
    let lo = grid.origin();
    let hi = grid.upper();
    let inset = spec.margin + spec.radius;
    for a in 0..4 {
        if lo[a] + inset > hi[a] - inset {
            return Err(Error::InvalidDomain(format!(
                "noise bumps of radius {} with margin {} do not fit on axis {a}",
                spec.radius, spec.margin
            )));
        }
    }
    let mut r = rng(spec.seed, spec.stream);
    Ok((0..spec.bumps)
        .map(|_| {
            let center = std::array::from_fn(|a| r.random_range(lo[a] + inset..=hi[a] - inset));
            let coeffs = (0..ncomp).map(|_| r.random_range(-1.0..=1.0)).collect();
            Bump { center, coeffs }
        })
        .collect())
}

fn sum_bumps(grid: &Grid4, spec: &NoiseSpec, bumps: &[Bump], i: usize, out: &mut [f64]) {
    out.fill(0.0);
    if grid.depth(i) < spec.min_depth {
        return;
    }
    let x = grid.position(i);
    let r2 = spec.radius * spec.radius;
    for b in bumps {
        let d2: f64 = (0..4).map(|a| (x[a] - b.center[a]).powi(2)).sum();
        let w = bump_profile(d2 / r2, spec.power);
        if w != 0.0 {
            out.iter_mut().zip(&b.coeffs).for_each(|(o, c)| *o += w * c);
        }
    }
}

/// Tangential field `ξ` along `u` with `ξ·u = 0` at every node, supported on
/// depth `>= spec.min_depth`, scaled so that `sup |ξ| = spec.amplitude`.
pub fn tangent_noise(u: &SphereMap, spec: &NoiseSpec) -> Result<VectorField> {
    let grid = u.grid();
    let k = u.ambient_dim();
    let mut xi = VectorField::zeros(grid, k);
    if spec.amplitude == 0.0 || spec.bumps == 0 {
        return Ok(xi);
    }
    let bumps = draw_bumps(grid, spec, k)?;
    for i in 0..grid.len() {
        let v = xi.at_mut(i);
        sum_bumps(grid, spec, &bumps, i, v);
        tangent_project_in_place(u.at(i), v);
    }
    let sup = xi.max_norm();
    if sup > 0.0 {
        let s = spec.amplitude / sup;
        xi.values_mut().iter_mut().for_each(|c| *c *= s);
    }
    Ok(xi)
}

/// Scalar bump noise normalized to `sup = spec.amplitude` (no projection).
pub fn scalar_noise(grid: &std::sync::Arc<Grid4>, spec: &NoiseSpec) -> Result<ScalarField> {
    let mut f = ScalarField::zeros(grid);
    if spec.amplitude == 0.0 || spec.bumps == 0 {
        return Ok(f);
    }
    let bumps = draw_bumps(grid, spec, 1)?;
    let mut buf = [0.0];
    for i in 0..grid.len() {
        sum_bumps(grid, spec, &bumps, i, &mut buf);
        f.values_mut()[i] = buf[0];
    }
    let sup = f.max_abs();
    if sup > 0.0 {
        let s = spec.amplitude / sup;
        f.values_mut().iter_mut().for_each(|c| *c *= s);
    }
    Ok(f)
}

/// Largest `|ξ·u|` over all nodes; rounding level for a tangential field.
pub fn max_normal_component(u: &SphereMap, xi: &VectorField) -> f64 {
    (0..u.grid().len()).map(|i| dot(u.at(i), xi.at(i)).abs()).fold(0.0, f64::max)
}
