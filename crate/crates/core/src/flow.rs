//! Negative `L²(g)` gradient flow of the Paneitz energy with two clamped
//! boundary layers (Dirichlet plus Neumann data of the initial map).
//!
//! Flow time is the accumulated step size of accepted steps. Every accepted
//! step satisfies the Armijo condition on the same discrete energy, so the
//! energy trace is non-increasing by construction.

use serde::Serialize;

use crate::conformal::ConformalChart;
use crate::energy::{el_residual, free_region, gradient_g, lamm_riviere_residual, norm_l2_flat, norm_l2_g, paneitz_energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::grid::{dot, pairwise_sum, VectorField};
use crate::sphere::{tangent_project_in_place, SphereMap};

/// Armijo constant.
pub const ARMIJO_C1: f64 = 1e-4;
/// Backtracking halvings before a step is declared stagnant.
pub const MAX_HALVINGS: u32 = 40;
/// Step growth factor after an accepted step.
pub const DT_GROWTH: f64 = 1.2;

/// Search direction used by [`run_until`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Steepest descent with Armijo backtracking; one call of [`step`] per iteration.
    Gradient,
    /// Polak–Ribière (PR+) conjugate directions, transported by tangent
    /// projection, with the same Armijo acceptance test and a quadratic
    /// interpolation of the first trial step.
    ConjugateGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowParams {
    pub dt0: f64,
    pub dt_max: f64,
    /// Stop when `‖el_residual‖_{L²(g)} <= tol`. Zero never stops on residual.
    pub tol: f64,
    pub t_max: f64,
    pub max_steps: usize,
    /// Residual evaluation cadence in accepted steps.
    pub residual_every: usize,
    pub method: Method,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            dt0: 1e-6,
            dt_max: 1.0,
            tol: 1e-3,
            t_max: 1e6,
            max_steps: 200_000,
            residual_every: 25,
            method: Method::ConjugateGradient,
        }
    }
}

/// One row of the flow trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub dt: f64,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
    pub residual_norm: Option<f64>,
    pub backtracks: u32,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: SphereMap,
    pub t: f64,
    pub dt: f64,
    pub energy_history: Vec<(f64, EnergyBreakdown)>,
    pub residual_history: Vec<(f64, f64)>,
    /// The initial map; its layers at depth 0 and 1 are the boundary data.
    pub clamp: SphereMap,
    pub trace: Vec<TraceRow>,
    pub steps: usize,
    energy: EnergyBreakdown,
    cg: Option<CgMemory>,
}

#[derive(Clone, Debug)]
struct CgMemory {
    grad: VectorField,
    dir: VectorField,
}

fn inner_g(a: &VectorField, b: &VectorField, chart: &ConformalChart) -> f64 {
    let cell = chart.grid().cell_volume();
    let vw = chart.volume_weight();
    let terms: Vec<f64> = (0..a.grid().len()).map(|i| dot(a.at(i), b.at(i)) * vw.at(i) * cell).collect();
    pairwise_sum(&terms)
}

fn scaled(v: &VectorField, s: f64) -> VectorField {
    let mut out = v.clone();
    out.values_mut().iter_mut().for_each(|c| *c *= s);
    out
}

/// Starts a flow at `t = 0` with the initial energy recorded.
pub fn init_flow(u0: &SphereMap, chart: &ConformalChart, params: &FlowParams) -> Result<FlowState> {
    if !(params.dt0 > 0.0 && params.dt_max >= params.dt0) {
        return Err(Error::Config(format!("need 0 < dt0 <= dt_max (got {} and {})", params.dt0, params.dt_max)));
    }
    let energy = paneitz_energy(u0, chart)?;
    let grad = gradient_g(u0, chart)?;
    let grad_norm = norm_l2_g(&grad, chart, &free_region(chart.grid()))?;
    let residual = norm_l2_g(&el_residual(u0, chart)?, chart, &free_region(chart.grid()))?;
    Ok(FlowState {
        u: u0.clone(),
        t: 0.0,
        dt: params.dt0,
        energy_history: vec![(0.0, energy)],
        residual_history: vec![(0.0, residual)],
        clamp: u0.clone(),
        trace: vec![TraceRow { t: 0.0, dt: params.dt0, energy, grad_norm, residual_norm: Some(residual), backtracks: 0 }],
        steps: 0,
        energy,
        cg: None,
    })
}

impl FlowState {
    pub fn energy(&self) -> EnergyBreakdown {
        self.energy
    }

    /// True when every layer at depth 0 and 1 matches the initial map bit for bit.
    pub fn clamp_intact(&self) -> bool {
        let grid = self.u.grid();
        (0..grid.len()).filter(|&i| grid.depth(i) < 2).all(|i| self.u.at(i) == self.clamp.at(i))
    }

    /// True when accepted energies never increase.
    pub fn energy_monotone(&self) -> bool {
        self.energy_history.windows(2).all(|w| w[1].1.total <= w[0].1.total)
    }
}

/// Outcome of one accepted step.
#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub dt_used: f64,
    pub backtracks: u32,
    pub grad_norm: f64,
}

fn stagnation(state: &FlowState, halvings: u32) -> Error {
    Error::Stagnation { halvings, state: Box::new(state.clone()) }
}

/// Armijo backtracking along `dir` (a descent direction with slope
/// `slope = ⟨grad, dir⟩_{L²(g)} < 0`) starting from `alpha`.
fn line_search(
    state: &FlowState,
    chart: &ConformalChart,
    dir: &VectorField,
    slope: f64,
    mut alpha: f64,
) -> Result<(SphereMap, EnergyBreakdown, f64, u32)> {
    let e0 = state.energy.total;
    let mut halvings = 0;
    loop {
        let cand = state.u.perturb(&scaled(dir, alpha))?;
        let e = paneitz_energy(&cand, chart)?;
        if e.total <= e0 + ARMIJO_C1 * alpha * slope {
            return Ok((cand, e, alpha, halvings));
        }
        if halvings == MAX_HALVINGS {
            return Err(stagnation(state, halvings));
        }
        alpha *= 0.5;
        halvings += 1;
    }
}

fn accept(state: &mut FlowState, u: SphereMap, energy: EnergyBreakdown, dt_used: f64, backtracks: u32, grad_norm: f64) {
    state.u = u;
    state.energy = energy;
    state.t += dt_used;
    state.steps += 1;
    state.energy_history.push((state.t, energy));
    state.trace.push(TraceRow { t: state.t, dt: dt_used, energy, grad_norm, residual_norm: None, backtracks });
}

/// One steepest-descent step: `u⁺ = Π(u - dt·grad)` on free nodes with Armijo
/// backtracking. A zero gradient leaves `u` untouched and only grows `dt`.
pub fn step(state: &mut FlowState, chart: &ConformalChart, params: &FlowParams) -> Result<StepInfo> {
    let grad = gradient_g(&state.u, chart)?;
    let gn2 = inner_g(&grad, &grad, chart);
    let grad_norm = gn2.sqrt();
    if gn2 == 0.0 {
        let dt = state.dt;
        state.dt = (dt * DT_GROWTH).min(params.dt_max);
        let (u, e) = (state.u.clone(), state.energy);
        accept(state, u, e, dt, 0, 0.0);
        return Ok(StepInfo { dt_used: dt, backtracks: 0, grad_norm });
    }
    let dir = scaled(&grad, -1.0);
    let (u, e, dt, halvings) = line_search(state, chart, &dir, -gn2, state.dt)?;
    state.dt = (dt * DT_GROWTH).min(params.dt_max);
    accept(state, u, e, dt, halvings, grad_norm);
    state.cg = None;
    Ok(StepInfo { dt_used: dt, backtracks: halvings, grad_norm })
}

/// One conjugate-direction step with the same acceptance rule as [`step`].
pub fn cg_step(state: &mut FlowState, chart: &ConformalChart, params: &FlowParams) -> Result<StepInfo> {
    let grad = gradient_g(&state.u, chart)?;
    let gn2 = inner_g(&grad, &grad, chart);
    let grad_norm = gn2.sqrt();
    if gn2 == 0.0 {
        return step(state, chart, params);
    }
    let mut dir = scaled(&grad, -1.0);
    if let Some(mem) = &state.cg {
        let mut prev_g = mem.grad.clone();
        let mut prev_d = mem.dir.clone();
        for i in 0..state.u.grid().len() {
            tangent_project_in_place(state.u.at(i), prev_g.at_mut(i));
            tangent_project_in_place(state.u.at(i), prev_d.at_mut(i));
        }
        let denom = inner_g(&mem.grad, &mem.grad, chart);
        let diff = grad.sub(&prev_g)?;
        let beta = (inner_g(&grad, &diff, chart) / denom).max(0.0);
        if beta > 0.0 {
            for (d, p) in dir.values_mut().iter_mut().zip(prev_d.values()) {
                *d += beta * p;
            }
        }
    }
    let mut slope = inner_g(&grad, &dir, chart);
    if slope >= -1e-12 * gn2 {
        dir = scaled(&grad, -1.0);
        slope = -gn2;
    }
    let e0 = state.energy.total;
    // quadratic model through E(0), E'(0) and E(trial)
    let trial = state.dt;
    let cand = state.u.perturb(&scaled(&dir, trial))?;
    let e_trial = paneitz_energy(&cand, chart)?.total;
    let curv = e_trial - e0 - slope * trial;
    let mut alpha = trial;
    if curv > 0.0 {
        alpha = (-slope * trial * trial / (2.0 * curv)).min(4.0 * trial).min(params.dt_max);
    }
    let (u, e, used, halvings) = line_search(state, chart, &dir, slope, alpha)?;
    state.dt = (used * DT_GROWTH).clamp(f64::MIN_POSITIVE, params.dt_max);
    accept(state, u, e, used, halvings, grad_norm);
    state.cg = Some(CgMemory { grad, dir });
    Ok(StepInfo { dt_used: used, backtracks: halvings, grad_norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TimeLimit,
    StepLimit,
    Stagnated,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub stop: StopReason,
    pub steps: usize,
    pub t: f64,
    pub energy: EnergyBreakdown,
    /// `‖grad_g‖_{L²(g)}` at the final map.
    pub gradient_norm: f64,
    /// `‖el_residual‖_{L²(g)}` at the final map.
    pub residual_norm: f64,
    /// `‖conservation-form residual‖_{L²}` at the final map (flat charts only).
    pub lr_residual_norm: Option<f64>,
    pub energy_monotone: bool,
    pub clamp_intact: bool,
    pub max_unit_deviation: f64,
}

fn residual_norm(u: &SphereMap, chart: &ConformalChart) -> Result<f64> {
    norm_l2_g(&el_residual(u, chart)?, chart, &free_region(chart.grid()))
}

/// Runs the flow until the residual tolerance, the time limit, the step
/// limit, or stagnation. `observe` sees the state after every accepted step.
pub fn run_until_with(
    mut state: FlowState,
    chart: &ConformalChart,
    params: &FlowParams,
    mut observe: impl FnMut(&FlowState) -> Result<()>,
) -> Result<(FlowState, FlowReport)> {
    let mut stop = None;
    let last_res = state.residual_history.last().map(|r| r.1).unwrap_or(f64::INFINITY);
    if params.tol > 0.0 && last_res <= params.tol {
        stop = Some(StopReason::Converged);
    }
    while stop.is_none() {
        if state.t >= params.t_max {
            stop = Some(StopReason::TimeLimit);
            break;
        }
        if state.steps >= params.max_steps {
            stop = Some(StopReason::StepLimit);
            break;
        }
        let r = match params.method {
            Method::Gradient => step(&mut state, chart, params),
            Method::ConjugateGradient => cg_step(&mut state, chart, params),
        };
        match r {
            Ok(_) => {}
            Err(Error::Stagnation { .. }) => {
                stop = Some(StopReason::Stagnated);
                break;
            }
            Err(e) => return Err(e),
        }
        if state.steps % params.residual_every.max(1) == 0 {
            let res = residual_norm(&state.u, chart)?;
            state.residual_history.push((state.t, res));
            if let Some(row) = state.trace.last_mut() {
                row.residual_norm = Some(res);
            }
            if params.tol > 0.0 && res <= params.tol {
                stop = Some(StopReason::Converged);
            }
        }
        observe(&state)?;
    }
    let region = free_region(chart.grid());
    let grad = gradient_g(&state.u, chart)?;
    let report = FlowReport {
        stop: stop.unwrap_or(StopReason::StepLimit),
        steps: state.steps,
        t: state.t,
        energy: state.energy,
        gradient_norm: norm_l2_g(&grad, chart, &region)?,
        residual_norm: residual_norm(&state.u, chart)?,
        lr_residual_norm: if chart.is_flat() {
            Some(norm_l2_flat(&lamm_riviere_residual(&state.u)?, &region))
        } else {
            None
        },
        energy_monotone: state.energy_monotone(),
        clamp_intact: state.clamp_intact(),
        max_unit_deviation: state.u.max_unit_deviation(),
    };
    Ok((state, report))
}

pub fn run_until(state: FlowState, chart: &ConformalChart, params: &FlowParams) -> Result<(FlowState, FlowReport)> {
    run_until_with(state, chart, params, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid4;
    use crate::noise::NoiseSpec;
    use crate::sphere::MapPreset;

    #[test]
    fn constant_map_is_a_fixed_point() {
        let g = Grid4::cube(7, 0.0, 1.0).unwrap();
        let chart = ConformalChart::flat(&g);
        let u0 = MapPreset::Constant { point: vec![1.0, 0.0, 0.0] }.build(&g, 2).unwrap();
        let params = FlowParams { dt0: 0.1, dt_max: 0.5, ..FlowParams::default() };
        let mut s = init_flow(&u0, &chart, &params).unwrap();
        for _ in 0..20 {
            step(&mut s, &chart, &params).unwrap();
        }
        assert_eq!(s.u.values(), u0.values());
        assert_eq!(s.dt, 0.5);
        let (_, rep) = run_until(init_flow(&u0, &chart, &params).unwrap(), &chart, &params).unwrap();
        assert_eq!(rep.stop, StopReason::Converged);
        assert_eq!(rep.steps, 0);
    }

    fn perturbed(n: usize) -> (ConformalChart, SphereMap) {
        let g = Grid4::cube(n, 0.0, 1.0).unwrap();
        let noise = NoiseSpec { radius: 0.25, margin: 0.0, min_depth: 2, ..NoiseSpec::new(0.1, 5) };
        let u0 = MapPreset::PerturbedGreatCircle { wave: [0.8, 0.3, 0.0, 0.2], noise }.build(&g, 2).unwrap();
        (ConformalChart::flat(&g), u0)
    }

    #[test]
    fn huge_first_step_backtracks_and_descends() {
        let (chart, u0) = perturbed(8);
        let params = FlowParams { dt0: 1e6, dt_max: 1e6, method: Method::Gradient, ..FlowParams::default() };
        let mut s = init_flow(&u0, &chart, &params).unwrap();
        let e0 = s.energy().total;
        let info = step(&mut s, &chart, &params).unwrap();
        assert!(info.backtracks > 0);
        assert!(s.energy().total < e0);
        assert!(s.clamp_intact());
        assert!(s.u.max_unit_deviation() < 1e-12);
    }

    #[test]
    fn both_methods_descend_monotonically() {
        let (chart, u0) = perturbed(8);
        for method in [Method::Gradient, Method::ConjugateGradient] {
            let params = FlowParams { method, max_steps: 30, tol: 0.0, ..FlowParams::default() };
            let (s, rep) = run_until(init_flow(&u0, &chart, &params).unwrap(), &chart, &params).unwrap();
            assert!(rep.energy_monotone && rep.clamp_intact);
            assert!(s.energy().total < s.energy_history[0].1.total);
            assert!(rep.max_unit_deviation < 1e-12);
        }
    }

    #[test]
    fn zero_tolerance_runs_to_time_limit() {
        let (chart, u0) = perturbed(7);
        let params = FlowParams { tol: 0.0, t_max: 1e-9, dt0: 1e-9, ..FlowParams::default() };
        let (_, rep) = run_until(init_flow(&u0, &chart, &params).unwrap(), &chart, &params).unwrap();
        assert_eq!(rep.stop, StopReason::TimeLimit);
    }
}
