//! Convexity of the energy around a critical map: admissible perturbations,
//! the energy gap against the second-order distance, and the exact sphere
//! identities used by the estimate.

use rand::Rng;
use serde::Serialize;

use crate::conformal::{laplace_beltrami_vec, ConformalChart};
use crate::energy::paneitz_energy;
use crate::error::{Error, Result};
use crate::flow::{init_flow, run_until, FlowParams, FlowReport};
use crate::grid::{dot, gradient_raw, laplacian_raw, pairwise_sum, same_grid, VectorField};
use crate::noise::{rng, tangent_noise, NoiseSpec};
use crate::sphere::{tension_flat, SphereMap};

/// Both smallness quantities at most this define the tested regime.
pub const SMALLNESS: f64 = 0.05;
/// Bound on `∫|Δ̄(v-u)|² / ∫|τ̄(v)-τ̄(u)|²` with the 10% allowance.
pub const TAU_LAPLACE_BOUND: f64 = 4.0 * 1.1;

/// `v = Π(u + ξ)` with tangential seeded noise `ξ` supported at depth >= 3,
/// `sup|ξ| = amplitude`. The two outer layers of `v` are bit-identical to `u`.
pub fn admissible_pair(u: &SphereMap, seed: u64, stream: u64, amplitude: f64) -> Result<SphereMap> {
    let spec = NoiseSpec::new(amplitude, seed).with_stream(stream);
    u.perturb(&tangent_noise(u, &spec)?)
}

fn diff(v: &SphereMap, u: &SphereMap) -> Result<VectorField> {
    same_grid(v.grid(), u.grid())?;
    v.as_field().sub(u.as_field())
}

/// `Σ cell · f(i) · e^{4φ}` over all nodes.
fn integrate_nodes(chart: &ConformalChart, f: impl Fn(usize) -> f64) -> f64 {
    let grid = chart.grid();
    let cell = grid.cell_volume();
    let vw = chart.volume_weight();
    let t: Vec<f64> = (0..grid.len()).map(|i| f(i) * vw.at(i) * cell).collect();
    pairwise_sum(&t)
}

fn integrate_flat_nodes(grid: &crate::grid::Grid4, f: impl Fn(usize) -> f64) -> f64 {
    let cell = grid.cell_volume();
    let t: Vec<f64> = (0..grid.len()).map(|i| f(i) * cell).collect();
    pairwise_sum(&t)
}

/// Smallness quantities and the exact discrete domination
/// `∫(u·Δ_h u)² <= ∫|Δ_h u|²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmallnessRecord {
    /// `∫|Δ_g u|² dv_g`.
    pub laplace_u_sq: f64,
    /// `∫|∇v|⁴_g dv_g`.
    pub grad4_v: f64,
    /// `∫(u·Δ_h u)²` (flat).
    pub normal_part_sq: f64,
    /// `∫|Δ_h u|²` (flat).
    pub laplace_flat_sq: f64,
    pub domination_holds: bool,
    pub in_hypothesis: bool,
}

pub fn smallness_report(u: &SphereMap, v: &SphereMap, chart: &ConformalChart) -> Result<SmallnessRecord> {
    same_grid(u.grid(), chart.grid())?;
    same_grid(v.grid(), chart.grid())?;
    let grid = chart.grid();
    let k = u.ambient_dim();
    let lu = laplace_beltrami_vec(u.as_field(), chart)?;
    let laplace_u_sq = integrate_nodes(chart, |i| dot(lu.at(i), lu.at(i)));
    let gv = gradient_raw(grid, v.values(), k);
    let phi = chart.phi();
    let grad4_v = integrate_nodes(chart, |i| {
        let g = &gv[i * 4 * k..(i + 1) * 4 * k];
        let s = (-2.0 * phi.at(i)).exp() * dot(g, g);
        s * s
    });
    let lh = laplacian_raw(grid, u.values(), k);
    let mut normal = vec![0.0; grid.len()];
    let mut full = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let l = &lh[i * k..(i + 1) * k];
        let ul = dot(u.at(i), l);
        // |L|² = (u·L)² + Σ_{a<b}(u_a L_b - u_b L_a)² for unit u
        let mut lagrange = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                let m = u.at(i)[a] * l[b] - u.at(i)[b] * l[a];
                lagrange += m * m;
            }
        }
        normal[i] = ul * ul;
        full[i] = ul * ul + lagrange;
    }
    let normal_part_sq = integrate_flat_nodes(grid, |i| normal[i]);
    let laplace_flat_sq = integrate_flat_nodes(grid, |i| full[i]);
    let domination_holds = (0..grid.len()).all(|i| normal[i] <= full[i]) && normal_part_sq <= laplace_flat_sq;
    Ok(SmallnessRecord {
        laplace_u_sq,
        grad4_v,
        normal_part_sq,
        laplace_flat_sq,
        domination_holds,
        in_hypothesis: laplace_u_sq <= SMALLNESS && grad4_v <= SMALLNESS,
    })
}

/// `∫|Δ̄(v-u)|² / ∫|τ̄(v)-τ̄(u)|²`, both flat; `None` when both vanish.
pub fn tau_laplace_ratio(u: &SphereMap, v: &SphereMap) -> Result<Option<f64>> {
    let d = diff(v, u)?;
    let grid = u.grid();
    let k = u.ambient_dim();
    let ld = laplacian_raw(grid, d.values(), k);
    let td = tension_flat(v).sub(&tension_flat(u))?;
    let num = integrate_flat_nodes(grid, |i| dot(&ld[i * k..(i + 1) * k], &ld[i * k..(i + 1) * k]));
    let den = integrate_flat_nodes(grid, |i| dot(td.at(i), td.at(i)));
    if num == 0.0 && den == 0.0 {
        return Ok(None);
    }
    Ok(Some(num / den))
}

/// One admissible pair.
#[derive(Clone, Debug, Serialize)]
pub struct PairRecord {
    pub id: usize,
    pub energy_u: f64,
    pub energy_v: f64,
    /// `E(v) - E(u)`.
    pub gap: f64,
    /// `∫|Δ_g(v-u)|² dv_g`.
    pub diff_norm: f64,
    /// `gap / diff_norm`; 0 when `v = u`.
    pub ratio: f64,
    /// Flat charts only.
    pub tau_ratio: Option<f64>,
    pub smallness: SmallnessRecord,
}

impl PairRecord {
    /// `E(v) >= E(u)` up to `10⁻¹⁰|E(u)| + 10⁻¹⁴`.
    pub fn gap_ok(&self) -> bool {
        self.gap >= -1e-10 * self.energy_u.abs() - 1e-14
    }
}

pub fn convexity_gap(u: &SphereMap, v: &SphereMap, chart: &ConformalChart) -> Result<PairRecord> {
    let eu = paneitz_energy(u, chart)?.total;
    let ev = paneitz_energy(v, chart)?.total;
    let d = diff(v, u)?;
    let ld = laplace_beltrami_vec(&d, chart)?;
    let diff_norm = integrate_nodes(chart, |i| dot(ld.at(i), ld.at(i)));
    let gap = ev - eu;
    Ok(PairRecord {
        id: 0,
        energy_u: eu,
        energy_v: ev,
        gap,
        diff_norm,
        ratio: if diff_norm > 0.0 { gap / diff_norm } else { 0.0 },
        tau_ratio: if chart.is_flat() { tau_laplace_ratio(u, v)? } else { None },
        smallness: smallness_report(u, v, chart)?,
    })
}

/// Aggregate over seeded pairs.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub pairs: Vec<PairRecord>,
    /// Residual of `u`, propagated so violations can be attributed.
    pub residual_u: f64,
    /// Smallest ratio over in-hypothesis pairs with `v != u` (empirical `1/C`).
    pub min_ratio: f64,
    pub violations: usize,
    pub in_hypothesis: usize,
    pub max_tau_ratio: f64,
}

impl ConvexityReport {
    pub fn from_pairs(pairs: Vec<PairRecord>, residual_u: f64) -> Self {
        let inside: Vec<&PairRecord> = pairs.iter().filter(|p| p.smallness.in_hypothesis).collect();
        let min_ratio = inside.iter().filter(|p| p.diff_norm > 0.0).map(|p| p.ratio).fold(f64::INFINITY, f64::min);
        ConvexityReport {
            residual_u,
            min_ratio: if min_ratio.is_finite() { min_ratio } else { 0.0 },
            violations: inside.iter().filter(|p| !p.gap_ok()).count(),
            in_hypothesis: inside.len(),
            max_tau_ratio: inside.iter().filter_map(|p| p.tau_ratio).fold(0.0, f64::max),
            pairs,
        }
    }
}

/// Evaluates `count` pairs `admissible_pair(u, seed, id, amplitude)`.
pub fn convexity_experiment(
    u: &SphereMap,
    chart: &ConformalChart,
    count: usize,
    seed: u64,
    amplitude: f64,
    residual_u: f64,
) -> Result<ConvexityReport> {
    let pairs = (0..count)
        .map(|id| {
            let v = admissible_pair(u, seed, id as u64, amplitude)?;
            Ok(PairRecord { id, ..convexity_gap(u, &v, chart)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvexityReport::from_pairs(pairs, residual_u))
}

/// Two flows with the same clamp from different seeded starts.
#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport {
    pub linf: f64,
    /// `(∫|Δ_g(u₁-u₂)|² dv_g)^{1/2}`.
    pub laplace_distance: f64,
    pub tolerance: f64,
    pub flows: [FlowReport; 2],
    /// `linf <= 10 · tolerance`.
    pub pass: bool,
}

/// Runs the flow from `Π(base + ξ_s)` for the two seeds and compares the endpoints.
pub fn uniqueness_check(
    base: &SphereMap,
    chart: &ConformalChart,
    params: &FlowParams,
    noise: &NoiseSpec,
    seeds: [u64; 2],
) -> Result<UniquenessReport> {
    if params.tol <= 0.0 {
        return Err(Error::Config("uniqueness check needs a positive tolerance".into()));
    }
    let mut ends = Vec::with_capacity(2);
    for s in seeds {
        let spec = NoiseSpec { seed: s, ..noise.clone() };
        let u0 = base.perturb(&tangent_noise(base, &spec)?)?;
        let (state, report) = run_until(init_flow(&u0, chart, params)?, chart, params)?;
        ends.push((state.u, report));
    }
    let (b, rb) = ends.pop().expect("two flows");
    let (a, ra) = ends.pop().expect("two flows");
    let d = diff(&a, &b)?;
    let linf = d.max_norm();
    let ld = laplace_beltrami_vec(&d, chart)?;
    let laplace_distance = integrate_nodes(chart, |i| dot(ld.at(i), ld.at(i))).sqrt();
    Ok(UniquenessReport { linf, laplace_distance, tolerance: params.tol, flows: [ra, rb], pass: linf <= 10.0 * params.tol })
}

/// Deviations of the pointwise sphere identities on random exact data.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SphereIdentityReport {
    pub samples: usize,
    /// Largest `|II integrand|`, relative to `|∇u|⁴|v-u|`.
    pub term2: f64,
    /// Largest `|III lhs - |∇u|²∇u·∇(v-u)|`, relative to `|∇u|³|∇(v-u)|`.
    pub term3: f64,
    /// Largest `|IV lhs + |∇u|⁴u·(v-u)|`, relative to `|∇u|⁴|v-u|`.
    pub term4: f64,
    /// Largest `|u·(v-u) + ½|v-u|²|`.
    pub rewrite: f64,
}

impl SphereIdentityReport {
    pub fn max_deviation(&self) -> f64 {
        self.term2.max(self.term3).max(self.term4).max(self.rewrite)
    }
}

fn random_unit(r: &mut impl Rng, k: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = dot(&x, &x).sqrt();
        if n > 0.1 {
            return x.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Data at one point: `u`, `v` on the sphere, tangent `ξ_α = ∇_α u`
/// (`ξ_α·u = 0` to rounding), and arbitrary `η_α = ∇_α(v - u)`.
pub struct IdentitySample {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub xi: [Vec<f64>; 4],
    pub eta: [Vec<f64>; 4],
}

impl IdentitySample {
    pub fn random(r: &mut impl Rng, target_dim: usize) -> Self {
        let k = target_dim + 1;
        let u = random_unit(r, k);
        let v = random_unit(r, k);
        let xi = std::array::from_fn(|_| {
            let mut x: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
            let s = dot(&x, &u);
            x.iter_mut().zip(&u).for_each(|(xi, ui)| *xi -= s * ui);
            x
        });
        let eta = std::array::from_fn(|_| (0..k).map(|_| r.random_range(-1.0..1.0)).collect());
        IdentitySample { u, v, xi, eta }
    }
}

/// `(∇_α P⊥)_{ij} = ξ_α^i u^j + u^i ξ_α^j`.
fn d_pperp(u: &[f64], xi: &[f64], i: usize, j: usize) -> f64 {
    xi[i] * u[j] + u[i] * xi[j]
}

/// `D_{u^k} D_{u^β} (P⊥)_{im} = δ_{ik}δ_{mβ} + δ_{iβ}δ_{mk}`.
fn dd_pperp(k: usize, b: usize, i: usize, m: usize) -> f64 {
    ((i == k && m == b) as u8 + (i == b && m == k) as u8) as f64
}

fn proj(u: &[f64], l: usize, k: usize) -> f64 {
    (l == k) as u8 as f64 - u[l] * u[k]
}

/// Full index contractions of the three terms, no simplification applied.
/// Returns `(II, III lhs, IV lhs)`.
pub fn identity_terms(s: &IdentitySample) -> (f64, f64, f64) {
    let k = s.u.len();
    let u = &s.u;
    let w: Vec<f64> = s.v.iter().zip(u).map(|(a, b)| a - b).collect();
    // A_i = Σ_{α,j} ∇_α P⊥_{ij} ∇_α u^j
    let a: Vec<f64> = (0..k)
        .map(|i| (0..4).map(|al| (0..k).map(|j| d_pperp(u, &s.xi[al], i, j) * s.xi[al][j]).sum::<f64>()).sum())
        .collect();
    let mut t2 = 0.0;
    for l in 0..k {
        for kk in 0..k {
            let p = proj(u, l, kk);
            if p == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for i in 0..k {
                for b in 0..k {
                    for m in 0..k {
                        let c = dd_pperp(kk, b, i, m);
                        if c == 0.0 {
                            continue;
                        }
                        let g: f64 = (0..4).map(|ga| s.xi[ga][b] * s.xi[ga][m]).sum();
                        inner += a[i] * c * g;
                    }
                }
            }
            t2 += p * inner * w[l];
        }
    }
    let mut t3 = 0.0;
    let mut t4 = 0.0;
    for be in 0..4 {
        for sidx in 0..k {
            let mut c3 = 0.0;
            let mut c4 = 0.0;
            for i in 0..k {
                for kk in 0..k {
                    let dp = a[i] * d_pperp(u, &s.xi[be], i, kk);
                    c3 += dp * proj(u, kk, sidx);
                    // ∇_β P = -∇_β P⊥
                    c4 -= dp * d_pperp(u, &s.xi[be], kk, sidx);
                }
            }
            t3 += c3 * s.eta[be][sidx];
            t4 += c4 * w[sidx];
        }
    }
    (t2, t3, t4)
}

/// Checks the term II/III/IV identities on `samples` seeded points.
pub fn sphere_identity_oracle(samples: usize, seed: u64, target_dim: usize) -> SphereIdentityReport {
    let mut r = rng(seed, 0);
    let mut rep = SphereIdentityReport { samples, term2: 0.0, term3: 0.0, term4: 0.0, rewrite: 0.0 };
    for _ in 0..samples {
        let s = IdentitySample::random(&mut r, target_dim);
        let (t2, t3, t4) = identity_terms(&s);
        let g2: f64 = s.xi.iter().map(|x| dot(x, x)).sum();
        let w: Vec<f64> = s.v.iter().zip(&s.u).map(|(a, b)| a - b).collect();
        let wn = dot(&w, &w).sqrt();
        let scale4 = (g2 * g2 * wn).max(f64::MIN_POSITIVE);
        rep.term2 = rep.term2.max(t2.abs() / scale4);
        let rhs3: f64 = g2 * (0..4).map(|b| dot(&s.xi[b], &s.eta[b])).sum::<f64>();
        let eta_n: f64 = s.eta.iter().map(|x| dot(x, x)).sum::<f64>().sqrt();
        rep.term3 = rep.term3.max((t3 - rhs3).abs() / (g2 * g2.sqrt() * eta_n).max(f64::MIN_POSITIVE));
        let uw = dot(&s.u, &w);
        rep.term4 = rep.term4.max((t4 + g2 * g2 * uw).abs() / scale4);
        rep.rewrite = rep.rewrite.max((uw + 0.5 * wn * wn).abs());
    }
    rep
}
