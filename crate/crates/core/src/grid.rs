//! Uniform 4-D lattices with second-order finite-difference calculus against
//! the flat background metric.
//!
//! Fields are stored row-major (last axis fastest) and node-major for
//! multi-component fields: component `c` of node `i` lives at `i * dim + c`.
//! There are no ghost nodes. First derivatives fall back to second-order
//! one-sided stencils on the outer layer; second derivatives are masked
//! (zero) there.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Sentinel in the neighbour table for "no neighbour" (outside a clamped grid).
const NONE: u32 = u32::MAX;

/// Depth reported for every node of a periodic grid.
pub const PERIODIC_DEPTH: u32 = u32::MAX;

/// A uniform rectangular lattice in four dimensions.
#[derive(Clone, Debug)]
pub struct Grid4 {
    dims: [usize; 4],
    spacing: [f64; 4],
    origin: [f64; 4],
    periodic: bool,
    strides: [usize; 4],
    depth: Vec<u32>,
    nbr: Vec<u32>,
}

impl PartialEq for Grid4 {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.origin == other.origin
            && self.periodic == other.periodic
    }
}

impl Grid4 {
    /// Clamped (non-periodic) lattice with explicit spacing and origin.
    pub fn new(dims: [usize; 4], spacing: [f64; 4], origin: [f64; 4]) -> Result<Arc<Grid4>> {
        Self::build(dims, spacing, origin, false)
    }

    /// `nodes` points per axis spanning `[lo, hi]^4`, endpoints included.
    pub fn cube(nodes: usize, lo: f64, hi: f64) -> Result<Arc<Grid4>> {
        Self::with_bounds([nodes; 4], [lo; 4], [hi; 4])
    }

    pub fn with_bounds(dims: [usize; 4], lo: [f64; 4], hi: [f64; 4]) -> Result<Arc<Grid4>> {
        let mut spacing = [0.0; 4];
        for a in 0..4 {
            if dims[a] < 2 {
                return Err(Error::InvalidGrid(format!("axis {a} needs at least 2 nodes")));
            }
            spacing[a] = (hi[a] - lo[a]) / (dims[a] - 1) as f64;
        }
        Self::build(dims, spacing, lo, false)
    }

    /// Periodic lattice on the torus `[lo, hi)^4`; node `n` coincides with node `0`.
    pub fn periodic(dims: [usize; 4], lo: [f64; 4], hi: [f64; 4]) -> Result<Arc<Grid4>> {
        let mut spacing = [0.0; 4];
        for a in 0..4 {
            if dims[a] == 0 {
                return Err(Error::InvalidGrid(format!("axis {a} is empty")));
            }
            spacing[a] = (hi[a] - lo[a]) / dims[a] as f64;
        }
        Self::build(dims, spacing, lo, true)
    }

    fn build(dims: [usize; 4], spacing: [f64; 4], origin: [f64; 4], periodic: bool) -> Result<Arc<Grid4>> {
        for a in 0..4 {
            if dims[a] < 5 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has {} nodes; stencils need at least 5",
                    dims[a]
                )));
            }
            if !(spacing[a].is_finite() && spacing[a] > 0.0) {
                return Err(Error::InvalidGrid(format!("axis {a} spacing {} is not positive", spacing[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} origin is not finite")));
            }
        }
        let total = dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let total = match total {
            Some(t) if t < NONE as usize => t,
            _ => return Err(Error::InvalidGrid("too many nodes".into())),
        };
        let strides = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1];
        let mut depth = vec![0u32; total];
        let mut nbr = vec![NONE; total * 8];
        let mut i = 0;
        for c0 in 0..dims[0] {
            for c1 in 0..dims[1] {
                for c2 in 0..dims[2] {
                    for c3 in 0..dims[3] {
                        let c = [c0, c1, c2, c3];
                        let mut d = u32::MAX;
                        for a in 0..4 {
                            let s = strides[a];
                            let n = dims[a];
                            if !periodic {
                                d = d.min(c[a].min(n - 1 - c[a]) as u32);
                            }
                            let minus = if c[a] > 0 {
                                Some(i - s)
                            } else if periodic {
                                Some(i + (n - 1) * s)
                            } else {
                                None
                            };
                            let plus = if c[a] + 1 < n {
                                Some(i + s)
                            } else if periodic {
                                Some(i - (n - 1) * s)
                            } else {
                                None
                            };
                            nbr[i * 8 + 2 * a] = minus.map_or(NONE, |j| j as u32);
                            nbr[i * 8 + 2 * a + 1] = plus.map_or(NONE, |j| j as u32);
                        }
                        depth[i] = if periodic { PERIODIC_DEPTH } else { d };
                        i += 1;
                    }
                }
            }
        }
        Ok(Arc::new(Grid4 { dims, spacing, origin, periodic, strides, depth, nbr }))
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 4] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 4] {
        self.origin
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn strides(&self) -> [usize; 4] {
        self.strides
    }

    /// Product of the spacings: the volume of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Lattice distance to the nearest boundary node (`PERIODIC_DEPTH` on a torus).
    #[inline]
    pub fn depth(&self, i: usize) -> u32 {
        self.depth[i]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        self.depth.iter().map(|&d| d >= 1).collect()
    }

    pub fn coords(&self, mut i: usize) -> [usize; 4] {
        let mut c = [0; 4];
        for a in 0..4 {
            c[a] = i / self.strides[a];
            i %= self.strides[a];
        }
        c
    }

    pub fn index(&self, c: [usize; 4]) -> usize {
        (0..4).map(|a| c[a] * self.strides[a]).sum()
    }

    pub fn position(&self, i: usize) -> [f64; 4] {
        let c = self.coords(i);
        std::array::from_fn(|a| self.origin[a] + c[a] as f64 * self.spacing[a])
    }

    /// Upper corner of the lattice (last node on a clamped grid).
    pub fn upper(&self) -> [f64; 4] {
        std::array::from_fn(|a| {
            let steps = if self.periodic { self.dims[a] } else { self.dims[a] - 1 };
            self.origin[a] + steps as f64 * self.spacing[a]
        })
    }

    /// Neighbour of `i` one step backward along `axis`.
    #[inline]
    pub fn minus(&self, i: usize, axis: usize) -> Option<usize> {
        let j = self.nbr[i * 8 + 2 * axis];
        (j != NONE).then_some(j as usize)
    }

    /// Neighbour of `i` one step forward along `axis`.
    #[inline]
    pub fn plus(&self, i: usize, axis: usize) -> Option<usize> {
        let j = self.nbr[i * 8 + 2 * axis + 1];
        (j != NONE).then_some(j as usize)
    }

    /// Unchecked neighbour lookup for nodes known to have one (depth >= 1).
    #[inline]
    pub(crate) fn nb(&self, i: usize, axis: usize, forward: bool) -> usize {
        self.nbr[i * 8 + 2 * axis + forward as usize] as usize
    }
}

/// Symmetric 4x4 matrix (Hessians, Ricci tensors).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym4(pub [[f64; 4]; 4]);

impl Sym4 {
    pub fn zero() -> Self {
        Sym4([[0.0; 4]; 4])
    }

    pub fn identity_scaled(s: f64) -> Self {
        let mut m = [[0.0; 4]; 4];
        for (a, row) in m.iter_mut().enumerate() {
            row[a] = s;
        }
        Sym4(m)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[a][b]
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|a| self.0[a][a]).sum()
    }

    /// Frobenius norm squared (flat index contraction).
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &Sym4) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                m = m.max((self.0[a][b] - other.0[a][b]).abs());
            }
        }
        m
    }
}

/// One real per node.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid4>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid4>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid4>, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: &Arc<Grid4>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), actual: values.len() });
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    /// Samples a closed-form function at every node position.
    pub fn from_fn(grid: &Arc<Grid4>, f: impl Fn([f64; 4]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid4> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|x| s * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

/// `dim` reals per node, stored node-major.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<Grid4>,
    dim: usize,
    values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid4>, dim: usize) -> Self {
        VectorField { grid: grid.clone(), dim, values: vec![0.0; grid.len() * dim] }
    }

    pub fn from_values(grid: &Arc<Grid4>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch { expected: grid.len(), actual: 0 });
        }
        if values.len() != grid.len() * dim {
            return Err(Error::ShapeMismatch { expected: grid.len() * dim, actual: values.len() });
        }
        Ok(VectorField { grid: grid.clone(), dim, values })
    }

    pub fn from_fn(grid: &Arc<Grid4>, dim: usize, f: impl Fn([f64; 4], &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for (i, chunk) in values.chunks_exact_mut(dim).enumerate() {
            f(grid.position(i), chunk);
        }
        VectorField { grid: grid.clone(), dim, values }
    }

    pub fn grid(&self) -> &Arc<Grid4> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Component `c` as a scalar field.
    pub fn component(&self, c: usize) -> ScalarField {
        let values = self.values.iter().skip(c).step_by(self.dim).copied().collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Euclidean norm squared at every node.
    pub fn norm_sq(&self) -> ScalarField {
        let values = self.values.chunks_exact(self.dim).map(|v| dot(v, v)).collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        same_grid(&self.grid, &other.grid)?;
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch { expected: self.values.len(), actual: other.values.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(VectorField { grid: self.grid.clone(), dim: self.dim, values })
    }

    pub fn max_norm(&self) -> f64 {
        self.values.chunks_exact(self.dim).fold(0.0, |m: f64, v| m.max(dot(v, v).sqrt()))
    }
}

pub(crate) fn same_grid(a: &Arc<Grid4>, b: &Arc<Grid4>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A set of nodes to integrate over.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    mask: Vec<bool>,
}

impl Region {
    pub fn all(grid: &Grid4) -> Self {
        Region { mask: vec![true; grid.len()] }
    }

    /// Nodes at boundary depth `>= k` (every node on a periodic grid).
    pub fn depth_at_least(grid: &Grid4, k: u32) -> Self {
        Region { mask: grid.depths().iter().map(|&d| d >= k).collect() }
    }

    pub fn from_mask(grid: &Grid4, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), actual: mask.len() });
        }
        Ok(Region { mask })
    }

    /// Nodes whose position satisfies `pred`.
    pub fn from_fn(grid: &Grid4, pred: impl Fn([f64; 4]) -> bool) -> Self {
        Region { mask: (0..grid.len()).map(|i| pred(grid.position(i))).collect() }
    }

    /// Axis-aligned box `[lo, hi]` (inclusive, with a small tolerance).
    pub fn boxed(grid: &Grid4, lo: [f64; 4], hi: [f64; 4]) -> Self {
        let tol = 1e-9 * grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
        Self::from_fn(grid, |x| (0..4).all(|a| x[a] >= lo[a] - tol && x[a] <= hi[a] + tol))
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region { mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect() }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    /// Smallest boundary depth among the region's nodes.
    pub fn min_depth(&self, grid: &Grid4) -> Option<(usize, u32)> {
        self.nodes().map(|i| (i, grid.depth(i))).min_by_key(|&(_, d)| d)
    }

    pub(crate) fn require_depth(&self, grid: &Grid4, k: u32) -> Result<()> {
        match self.min_depth(grid) {
            Some((node, depth)) if depth < k => Err(Error::RegionTooShallow { required: k, node, depth }),
            _ => Ok(()),
        }
    }
}

/// Pairwise summation in a fixed order; reproducible and accurate.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Central first difference along `axis`, one-sided second order on the outer layer.
#[inline]
fn d1(grid: &Grid4, vals: &[f64], ncomp: usize, i: usize, c: usize, axis: usize) -> f64 {
    let h = grid.spacing[axis];
    match (grid.minus(i, axis), grid.plus(i, axis)) {
        (Some(m), Some(p)) => (vals[p * ncomp + c] - vals[m * ncomp + c]) / (2.0 * h),
        (None, Some(p)) => {
            let pp = grid.plus(p, axis).expect("grid has at least 5 nodes per axis");
            (-3.0 * vals[i * ncomp + c] + 4.0 * vals[p * ncomp + c] - vals[pp * ncomp + c]) / (2.0 * h)
        }
        (Some(m), None) => {
            let mm = grid.minus(m, axis).expect("grid has at least 5 nodes per axis");
            (3.0 * vals[i * ncomp + c] - 4.0 * vals[m * ncomp + c] + vals[mm * ncomp + c]) / (2.0 * h)
        }
        (None, None) => unreachable!("axis with a single node"),
    }
}

/// Raw gradient kernel: output layout `[node][component][axis]`.
pub(crate) fn gradient_raw(grid: &Grid4, vals: &[f64], ncomp: usize) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; n * ncomp * 4];
    for i in 0..n {
        for c in 0..ncomp {
            for a in 0..4 {
                out[(i * ncomp + c) * 4 + a] = d1(grid, vals, ncomp, i, c, a);
            }
        }
    }
    out
}

/// Raw Laplacian kernel; zero at boundary depth 0.
pub(crate) fn laplacian_raw(grid: &Grid4, vals: &[f64], ncomp: usize) -> Vec<f64> {
    let n = grid.len();
    let inv_h2: [f64; 4] = std::array::from_fn(|a| 1.0 / (grid.spacing[a] * grid.spacing[a]));
    let mut out = vec![0.0; n * ncomp];
    for i in 0..n {
        if grid.depth(i) == 0 {
            continue;
        }
        for c in 0..ncomp {
            let centre = vals[i * ncomp + c];
            let mut s = 0.0;
            for a in 0..4 {
                let m = grid.nb(i, a, false);
                let p = grid.nb(i, a, true);
                s += (vals[p * ncomp + c] - 2.0 * centre + vals[m * ncomp + c]) * inv_h2[a];
            }
            out[i * ncomp + c] = s;
        }
    }
    out
}

/// Second difference (diagonal) or mixed central difference (off-diagonal)
/// of component `c` at an interior node.
#[inline]
pub(crate) fn d2(grid: &Grid4, vals: &[f64], ncomp: usize, i: usize, c: usize, a: usize, b: usize) -> f64 {
    let ha = grid.spacing[a];
    if a == b {
        let m = grid.nb(i, a, false);
        let p = grid.nb(i, a, true);
        (vals[p * ncomp + c] - 2.0 * vals[i * ncomp + c] + vals[m * ncomp + c]) / (ha * ha)
    } else {
        let hb = grid.spacing[b];
        let p = grid.nb(i, a, true);
        let m = grid.nb(i, a, false);
        let pp = grid.nb(p, b, true);
        let pm = grid.nb(p, b, false);
        let mp = grid.nb(m, b, true);
        let mm = grid.nb(m, b, false);
        (vals[pp * ncomp + c] - vals[pm * ncomp + c] - vals[mp * ncomp + c] + vals[mm * ncomp + c])
            / (4.0 * ha * hb)
    }
}

/// Flat gradient of a scalar field: one 4-vector per node.
pub fn gradient_flat(f: &ScalarField) -> VectorField {
    let values = gradient_raw(&f.grid, &f.values, 1);
    VectorField { grid: f.grid.clone(), dim: 4, values }
}

/// Flat gradient of a vector field: `dim * 4` values per node, component-major.
pub fn gradient_flat_vec(f: &VectorField) -> VectorField {
    let values = gradient_raw(&f.grid, &f.values, f.dim);
    VectorField { grid: f.grid.clone(), dim: f.dim * 4, values }
}

/// Flat Laplacian; masked to zero on the outer layer.
pub fn laplacian_flat(f: &ScalarField) -> ScalarField {
    let values = laplacian_raw(&f.grid, &f.values, 1);
    ScalarField { grid: f.grid.clone(), values }
}

pub fn laplacian_flat_vec(f: &VectorField) -> VectorField {
    let values = laplacian_raw(&f.grid, &f.values, f.dim);
    VectorField { grid: f.grid.clone(), dim: f.dim, values }
}

/// Flat Hessian from central differences; zero matrix on the outer layer.
pub fn hessian_flat(f: &ScalarField) -> Vec<Sym4> {
    let grid = &f.grid;
    (0..grid.len())
        .map(|i| {
            let mut m = Sym4::zero();
            if grid.depth(i) == 0 {
                return m;
            }
            for a in 0..4 {
                for b in a..4 {
                    let v = d2(grid, &f.values, 1, i, 0, a, b);
                    m.0[a][b] = v;
                    m.0[b][a] = v;
                }
            }
            m
        })
        .collect()
}

/// Trapezoid-type quadrature weights: cell volume, halved once per axis on
/// which the node sits on a face of the region.
pub fn trapezoid_weights(grid: &Grid4, region: &Region) -> Vec<f64> {
    let cell = grid.cell_volume();
    (0..grid.len())
        .map(|i| {
            if !region.contains(i) {
                return 0.0;
            }
            let mut w = cell;
            for a in 0..4 {
                let inside = |j: Option<usize>| j.is_some_and(|j| region.contains(j));
                if !(inside(grid.minus(i, a)) && inside(grid.plus(i, a))) {
                    w *= 0.5;
                }
            }
            w
        })
        .collect()
}

/// `∫ f dx` over `region` with trapezoid halving on region faces.
pub fn integrate_flat(f: &ScalarField, region: &Region) -> Result<f64> {
    if region.mask.len() != f.grid.len() {
        return Err(Error::ShapeMismatch { expected: f.grid.len(), actual: region.mask.len() });
    }
    let w = trapezoid_weights(&f.grid, region);
    let terms: Vec<f64> = f.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    Ok(pairwise_sum(&terms))
}

/// Midpoint-per-node quadrature: every region node carries one full cell.
/// Additive over disjoint regions.
pub fn sum_flat(f: &ScalarField, region: &Region) -> Result<f64> {
    if region.mask.len() != f.grid.len() {
        return Err(Error::ShapeMismatch { expected: f.grid.len(), actual: region.mask.len() });
    }
    let cell = f.grid.cell_volume();
    let terms: Vec<f64> =
        f.values.iter().zip(&region.mask).map(|(&v, &m)| if m { v * cell } else { 0.0 }).collect();
    Ok(pairwise_sum(&terms))
}
