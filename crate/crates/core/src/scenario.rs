//! Runs a configured experiment, writes `summary.json` plus CSV traces, and
//! maps the outcome to an exit code.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::conformal::{curvature_from_phi, stereographic_curvature_error, ConformalChart, PhiPreset};
use crate::config::{DomainConfig, Experiment, HardyRoute, PhiConfig, ScenarioConfig};
use crate::convex::{convexity_experiment, sphere_identity_oracle, uniqueness_check, TAU_LAPLACE_BOUND};
use crate::energy::conformal_invariance_check;
use crate::error::{Error, Result};
use crate::fieldio::{dump_field, load_scalar};
use crate::flow::{init_flow, run_until_with, FlowReport, FlowState, StopReason, MAX_HALVINGS};
use crate::grid::{Grid4, ScalarField};
use crate::hardy::{
    distance_field, eigen_comparison, eigen_geometry, evaluate_family, family_member, first_eigenpair, hardy2v2_ratio,
    DomainSpec, FamilySpec, Order, HARDY1_BOUND,
};
use crate::sphere::{pointwise_cs_bound, MapPreset, SphereMap};

/// One checked claim in the summary.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    /// Acceptance criterion this check belongs to.
    pub criterion: &'static str,
    pub pass: bool,
    pub value: f64,
    pub bound: String,
}

/// Result of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub assertions: Vec<Assertion>,
    pub summary_path: PathBuf,
}

/// Simple CSV builder with fixed float formatting (shortest round-trip, exponent form).
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&parts.join(","));
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.text)?;
        Ok(())
    }
}

pub enum Cell {
    F(f64),
    I(u64),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:e}"),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn opt(v: Option<f64>) -> Cell {
        v.map(Cell::F).unwrap_or(Cell::Empty)
    }
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    assertions: Vec<Assertion>,
}

impl Run<'_> {
    fn check(&mut self, name: impl Into<String>, criterion: &'static str, pass: bool, value: f64, bound: impl Into<String>) {
        self.assertions.push(Assertion { name: name.into(), criterion, pass, value, bound: bound.into() });
    }

    fn grid(&self, n: usize) -> Result<Arc<Grid4>> {
        match self.cfg.domain {
            DomainConfig::Box { lo, hi } => Grid4::cube(n, lo, hi),
            DomainConfig::Ball { radius } => Grid4::cube(n, -radius, radius),
        }
    }

    fn chart(&self, grid: &Arc<Grid4>) -> Result<ConformalChart> {
        match &self.cfg.phi {
            PhiConfig::Preset(p) => ConformalChart::from_preset(grid, p),
            PhiConfig::File(path) => {
                let phi = load_scalar(path)?;
                let g = phi.grid();
                if g.dims() != grid.dims() || g.spacing() != grid.spacing() || g.origin() != grid.origin() {
                    return Err(Error::Config(format!(
                        "phi_file {} does not match the {}-node grid",
                        path.display(),
                        grid.dims()[0]
                    )));
                }
                curvature_from_phi(grid, &ScalarField::from_values(grid, phi.into_values())?)
            }
        }
    }

    fn map(&self, grid: &Arc<Grid4>) -> Result<SphereMap> {
        self.cfg.map.build(grid, self.cfg.target_dim)
    }

    fn write_csv(&self, name: &str, csv: &Csv) -> Result<()> {
        csv.write(&self.out.join(name))
    }
}

fn h_of(grid: &Grid4) -> f64 {
    grid.spacing()[0]
}

fn ratios(values: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    out.extend(values.windows(2).map(|w| Some(w[0].abs() / w[1].abs())));
    out
}

fn in_range(r: f64, lo: f64, hi: f64) -> bool {
    r >= lo && r <= hi
}

fn drift(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(b.abs())
}

/// Runs `cfg` and writes its artifacts under `cfg.out`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out)?;
    let mut run = Run { cfg, out: &cfg.out, assertions: Vec::new() };
    let results = match cfg.experiment {
        Experiment::Invariance => invariance(&mut run)?,
        Experiment::Flow => flow(&mut run)?,
        Experiment::Hardy => hardy(&mut run)?,
        Experiment::Convexity => convexity(&mut run)?,
        Experiment::Curvature => curvature(&mut run)?,
        Experiment::Identities => identities(&mut run)?,
    };
    let pass = run.assertions.iter().all(|a| a.pass);
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "levels": cfg.levels(),
        "config": cfg.echo,
        "results": results,
        "assertions": run.assertions,
        "pass": pass,
    });
    let summary_path = cfg.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&summary_path, text + "\n")?;
    Ok(Outcome { exit_code: if pass { 0 } else { 1 }, assertions: run.assertions, summary_path })
}

fn invariance(run: &mut Run) -> Result<Value> {
    let mut csv = Csv::new(&["nodes", "h", "energy_base", "energy_bumped", "difference", "relative", "ratio"]);
    let mut diffs = Vec::new();
    let mut rows = Vec::new();
    for n in run.cfg.levels() {
        let grid = run.grid(n)?;
        let base = run.chart(&grid)?;
        let u = run.map(&grid)?;
        let rep = conformal_invariance_check(&u, base.phi(), &run.cfg.bump.field(&grid))?;
        diffs.push(rep.difference);
        rows.push((n, h_of(&grid), rep));
    }
    let r = ratios(&diffs);
    for (k, (n, h, rep)) in rows.iter().enumerate() {
        csv.row(&[
            Cell::I(*n as u64),
            Cell::F(*h),
            Cell::F(rep.energy_base),
            Cell::F(rep.energy_bumped),
            Cell::F(rep.difference),
            Cell::F(rep.relative),
            Cell::opt(r[k]),
        ]);
        if let Some(ratio) = r[k] {
            run.check(format!("difference_ratio_{}_{}", rows[k - 1].0, n), "conformal_invariance", in_range(ratio, 3.0, 5.0), ratio, "[3, 5]");
        }
    }
    let (n, _, last) = rows.last().expect("at least one level");
    run.check(format!("relative_difference_{n}"), "conformal_invariance", last.relative <= 0.02, last.relative, "<= 0.02");
    run.write_csv("invariance.csv", &csv)?;
    Ok(json!({ "levels": rows.iter().map(|(n, h, r)| json!({"nodes": n, "h": h, "report": r})).collect::<Vec<_>>() }))
}

fn trace_csv(state: &FlowState) -> Csv {
    let mut csv = Csv::new(&[
        "t",
        "dt",
        "E_total",
        "E_tension",
        "E_scalar",
        "E_ricci",
        "grad_norm",
        "residual_norm",
        "backtracks",
    ]);
    for row in &state.trace {
        csv.row(&[
            Cell::F(row.t),
            Cell::F(row.dt),
            Cell::F(row.energy.total),
            Cell::F(row.energy.tension),
            Cell::F(row.energy.scalar),
            Cell::F(row.energy.ricci),
            Cell::F(row.grad_norm),
            Cell::opt(row.residual_norm),
            Cell::I(row.backtracks as u64),
        ]);
    }
    csv
}

fn flow_to_end(run: &Run, u0: &SphereMap, chart: &ConformalChart, tag: &str) -> Result<(FlowState, FlowReport)> {
    let cfg = run.cfg;
    let every = cfg.checkpoint_every;
    let out = run.out.to_path_buf();
    let (state, report) = run_until_with(init_flow(u0, chart, &cfg.flow)?, chart, &cfg.flow, |s| {
        if every > 0 && s.steps % every == 0 {
            dump_field(&out.join(format!("checkpoint_{tag}_{:06}.pxl4", s.steps)), s.u.as_field())?;
        }
        Ok(())
    })?;
    if report.stop == StopReason::Stagnated {
        return Err(Error::Stagnation { halvings: MAX_HALVINGS, state: Box::new(state) });
    }
    Ok((state, report))
}

fn flow(run: &mut Run) -> Result<Value> {
    let mut levels = Vec::new();
    for n in run.cfg.levels() {
        let grid = run.grid(n)?;
        let chart = run.chart(&grid)?;
        let u0 = run.map(&grid)?;
        let (state, report) = flow_to_end(run, &u0, &chart, &n.to_string())?;
        run.write_csv(&format!("flow_trace_{n}.csv"), &trace_csv(&state))?;
        dump_field(&run.out.join(format!("u_final_{n}.pxl4")), state.u.as_field())?;
        run.check(format!("energy_monotone_{n}"), "flow", report.energy_monotone, report.steps as f64, "non-increasing");
        run.check(format!("clamp_intact_{n}"), "flow", report.clamp_intact, 0.0, "bit-identical");
        if run.cfg.flow.tol > 0.0 {
            let tol = run.cfg.flow.tol;
            run.check(format!("terminal_residual_{n}"), "flow", report.residual_norm <= tol, report.residual_norm, format!("<= {tol:e}"));
        }
        if let MapPreset::Constant { .. } = run.cfg.map {
            let same = state.u.values() == u0.values();
            run.check(format!("constant_fixed_point_{n}"), "flow", same, state.steps as f64, "unchanged");
        }
        levels.push(json!({ "nodes": n, "report": report }));
    }
    Ok(json!({ "levels": levels }))
}

fn hardy(run: &mut Run) -> Result<Value> {
    match run.cfg.hardy_route {
        HardyRoute::Distance => hardy_distance(run),
        HardyRoute::Eigenfunction => hardy_eigen(run),
    }
}

fn hardy_distance(run: &mut Run) -> Result<Value> {
    let spec = match run.cfg.domain {
        DomainConfig::Box { .. } => DomainSpec::Box,
        DomainConfig::Ball { radius } => DomainSpec::Ball { center: [0.0; 4], radius },
    };
    let mut csv = Csv::new(&["nodes", "h", "order", "id", "power", "lhs", "rhs", "ratio", "chain_holds", "flagged_nodes"]);
    let mut sups = Vec::new();
    let mut levels = Vec::new();
    for n in run.cfg.levels() {
        let grid = run.grid(n)?;
        let chart = run.chart(&grid)?;
        let geom = distance_field(&grid, &spec)?;
        run.check(format!("superharmonic_{n}"), "hardy_second_order", geom.superharmonic_ok, geom.max_violation, "<= 10h");
        let flagged = geom.flagged_count() as u64;
        let mut sup1: f64 = 0.0;
        let mut sup2: f64 = 0.0;
        let mut finite = true;
        let mut chain = true;
        for order in [Order::First, Order::Second] {
            let fam = FamilySpec::new(order, run.cfg.hardy_members, run.cfg.seed);
            for row in evaluate_family(&fam, &geom, &chart)? {
                csv.row(&[
                    Cell::I(n as u64),
                    Cell::F(row.h),
                    Cell::S(if order == Order::First { "first" } else { "second" }.into()),
                    Cell::I(row.id as u64),
                    Cell::F(row.power),
                    Cell::F(row.lhs),
                    Cell::F(row.rhs),
                    Cell::F(row.ratio),
                    row.chain_holds.map(Cell::B).unwrap_or(Cell::Empty),
                    Cell::I(flagged),
                ]);
                match order {
                    Order::First => sup1 = sup1.max(row.ratio),
                    Order::Second => {
                        sup2 = sup2.max(row.ratio);
                        finite &= row.ratio.is_finite() && row.rhs > 0.0;
                        chain &= row.chain_holds == Some(true);
                    }
                }
            }
        }
        run.check(format!("first_order_max_{n}"), "hardy_first_order", sup1 <= HARDY1_BOUND, sup1, "<= 4.4");
        run.check(format!("second_order_finite_{n}"), "hardy_second_order", finite, sup2, "finite");
        run.check(format!("chain_inequality_{n}"), "hardy_second_order", chain, 0.0, "holds for every member");
        sups.push(sup2);
        levels.push(json!({"nodes": n, "first_order_max": sup1, "second_order_max": sup2, "flagged_nodes": flagged,
            "max_superharmonic_violation": geom.max_violation}));
    }
    for (k, w) in sups.windows(2).enumerate() {
        let d = drift(w[0], w[1]);
        let lv = run.cfg.levels();
        run.check(format!("second_order_drift_{}_{}", lv[k], lv[k + 1]), "hardy_second_order", d < 0.1, d, "< 0.1");
    }
    run.write_csv("hardy.csv", &csv)?;
    Ok(json!({ "levels": levels }))
}

fn hardy_eigen(run: &mut Run) -> Result<Value> {
    let DomainConfig::Box { lo, hi } = run.cfg.domain else {
        return Err(Error::Config("the eigenfunction route runs on a box domain".into()));
    };
    let exact = if matches!(run.cfg.phi, PhiConfig::Preset(PhiPreset::Flat)) { Some(4.0 * PI * PI / ((hi - lo) * (hi - lo))) } else { None };
    let mut csv = Csv::new(&[
        "nodes",
        "h",
        "lambda1",
        "iterations",
        "residual",
        "error",
        "error_ratio",
        "hardy2v2_max",
        "sup_psi_over_rho",
        "inf_boundary_gradient",
    ]);
    let mut rows = Vec::new();
    for n in run.cfg.levels() {
        let grid = run.grid(n)?;
        let chart = run.chart(&grid)?;
        let eig = first_eigenpair(&chart)?;
        run.check(format!("eigen_residual_{n}"), "eigenfunction_route", eig.residual <= 1e-8, eig.residual, "<= 1e-8");
        let positive = (0..grid.len()).all(|i| if grid.depth(i) == 0 { eig.psi.at(i) == 0.0 } else { eig.psi.at(i) > 0.0 });
        run.check(format!("eigen_positivity_{n}"), "eigenfunction_route", positive, 0.0, "psi > 0 inside, 0 on boundary");
        let geom = eigen_geometry(&eig)?;
        let dist = distance_field(&grid, &DomainSpec::Box)?;
        let cmp = eigen_comparison(&eig, &dist);
        let fam = FamilySpec::new(Order::Second, run.cfg.hardy_members, run.cfg.seed).with_powers(vec![3.0, 3.5, 4.0]);
        let mut v2: f64 = 0.0;
        let mut finite = true;
        for id in 0..fam.members {
            let m = family_member(&fam, id, &geom)?;
            let r = hardy2v2_ratio(&m.w, &geom, &chart)?;
            finite &= r.ratio.is_finite() && r.rhs > 0.0;
            v2 = v2.max(r.ratio);
        }
        run.check(format!("hardy2v2_finite_{n}"), "eigenfunction_route", finite, v2, "finite");
        rows.push((n, h_of(&grid), eig, v2, cmp));
    }
    let errors: Vec<f64> = match exact {
        Some(l) => rows.iter().map(|r| (r.2.lambda1 - l).abs()).collect(),
        None => vec![f64::NAN; rows.len()],
    };
    let er = ratios(&errors);
    let levels = run.cfg.levels();
    for (k, (n, h, eig, v2, cmp)) in rows.iter().enumerate() {
        csv.row(&[
            Cell::I(*n as u64),
            Cell::F(*h),
            Cell::F(eig.lambda1),
            Cell::I(eig.iterations as u64),
            Cell::F(eig.residual),
            Cell::opt(exact.map(|_| errors[k])),
            Cell::opt(er[k].filter(|v| v.is_finite())),
            Cell::F(*v2),
            Cell::F(cmp.sup_psi_over_rho),
            Cell::F(cmp.inf_boundary_gradient),
        ]);
        if let Some(r) = er[k].filter(|v| v.is_finite()) {
            run.check(format!("lambda1_error_ratio_{}_{}", levels[k - 1], n), "eigenfunction_route", in_range(r, 3.0, 5.0), r, "[3, 5]");
        }
        if k > 0 {
            let d = drift(rows[k - 1].3, *v2);
            run.check(format!("hardy2v2_drift_{}_{}", levels[k - 1], n), "eigenfunction_route", d < 0.1, d, "< 0.1");
        }
    }
    run.write_csv("eigen.csv", &csv)?;
    Ok(json!({ "levels": rows.iter().map(|(n, h, e, v2, c)| json!({"nodes": n, "h": h, "lambda1": e.lambda1,
        "iterations": e.iterations, "residual": e.residual, "hardy2v2_max": v2, "comparison": c})).collect::<Vec<_>>() }))
}

fn convexity(run: &mut Run) -> Result<Value> {
    let cfg = run.cfg;
    let mut csv = Csv::new(&[
        "nodes",
        "id",
        "energy_u",
        "energy_v",
        "gap",
        "diff_norm",
        "ratio",
        "tau_ratio",
        "laplace_u_sq",
        "grad4_v",
        "in_hypothesis",
    ]);
    let mut mins = Vec::new();
    let mut levels = Vec::new();
    let mut uniq = Value::Null;
    for (k, n) in cfg.levels().into_iter().enumerate() {
        let grid = run.grid(n)?;
        let chart = run.chart(&grid)?;
        let base = run.map(&grid)?;
        let (state, flow) = flow_to_end(run, &base, &chart, &n.to_string())?;
        let converged = flow.stop == StopReason::Converged;
        run.check(format!("base_converged_{n}"), "convexity", converged, flow.residual_norm, format!("<= {:e}", cfg.flow.tol));
        let rep = convexity_experiment(&state.u, &chart, cfg.pairs, cfg.seed, cfg.pair_amplitude, flow.residual_norm)?;
        for p in &rep.pairs {
            csv.row(&[
                Cell::I(n as u64),
                Cell::I(p.id as u64),
                Cell::F(p.energy_u),
                Cell::F(p.energy_v),
                Cell::F(p.gap),
                Cell::F(p.diff_norm),
                Cell::F(p.ratio),
                Cell::opt(p.tau_ratio),
                Cell::F(p.smallness.laplace_u_sq),
                Cell::F(p.smallness.grad4_v),
                Cell::B(p.smallness.in_hypothesis),
            ]);
        }
        run.check(format!("pairs_in_hypothesis_{n}"), "convexity", rep.in_hypothesis > 0, rep.in_hypothesis as f64, "> 0");
        run.check(format!("gap_nonnegative_{n}"), "convexity", rep.violations == 0, rep.violations as f64, "0 violations");
        run.check(format!("min_ratio_positive_{n}"), "convexity", rep.min_ratio > 0.0, rep.min_ratio, "> 0");
        if chart.is_flat() {
            run.check(format!("tau_laplace_{n}"), "convexity", rep.max_tau_ratio <= TAU_LAPLACE_BOUND, rep.max_tau_ratio, "<= 4.4");
        }
        mins.push(rep.min_ratio);
        if k == 0 && cfg.uniqueness {
            let u = uniqueness_check(&state.u, &chart, &cfg.flow, &cfg.noise, [cfg.seed, cfg.seed.wrapping_add(1)])?;
            let mut ucsv = Csv::new(&["nodes", "linf", "laplace_distance", "tolerance", "steps_a", "steps_b"]);
            ucsv.row(&[
                Cell::I(n as u64),
                Cell::F(u.linf),
                Cell::F(u.laplace_distance),
                Cell::F(u.tolerance),
                Cell::I(u.flows[0].steps as u64),
                Cell::I(u.flows[1].steps as u64),
            ]);
            run.write_csv("uniqueness.csv", &ucsv)?;
            run.check(format!("uniqueness_{n}"), "uniqueness", u.pass, u.linf, format!("<= {:e}", 10.0 * u.tolerance));
            uniq = serde_json::to_value(&u).map_err(|e| Error::Config(e.to_string()))?;
        }
        let aggregate = json!({"nodes": n, "residual_u": rep.residual_u, "min_ratio": rep.min_ratio,
            "violations": rep.violations, "in_hypothesis": rep.in_hypothesis, "max_tau_ratio": rep.max_tau_ratio});
        levels.push(aggregate);
    }
    let lv = cfg.levels();
    for (k, w) in mins.windows(2).enumerate() {
        let d = drift(w[0], w[1]);
        run.check(format!("min_ratio_drift_{}_{}", lv[k], lv[k + 1]), "convexity", d < 0.2, d, "< 0.2");
    }
    run.write_csv("convexity.csv", &csv)?;
    let agg = json!({ "levels": levels, "uniqueness": uniq });
    let text = serde_json::to_string_pretty(&agg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(run.out.join("convexity.json"), text + "\n")?;
    Ok(agg)
}

fn curvature(run: &mut Run) -> Result<Value> {
    if !matches!(run.cfg.phi, PhiConfig::Preset(PhiPreset::Stereographic { .. })) {
        return Err(Error::Config("the curvature experiment needs `phi = stereographic`".into()));
    }
    let mut csv = Csv::new(&["nodes", "h", "sc_error", "ric_error", "sc_ratio", "ric_ratio"]);
    let mut sc = Vec::new();
    let mut ric = Vec::new();
    let mut hs = Vec::new();
    let lv = run.cfg.levels();
    for &n in &lv {
        let grid = run.grid(n)?;
        let (s, r) = stereographic_curvature_error(&run.chart(&grid)?);
        sc.push(s);
        ric.push(r);
        hs.push(h_of(&grid));
    }
    let (rs, rr) = (ratios(&sc), ratios(&ric));
    for k in 0..lv.len() {
        csv.row(&[Cell::I(lv[k] as u64), Cell::F(hs[k]), Cell::F(sc[k]), Cell::F(ric[k]), Cell::opt(rs[k]), Cell::opt(rr[k])]);
        if let (Some(a), Some(b)) = (rs[k], rr[k]) {
            run.check(format!("scalar_curvature_ratio_{}_{}", lv[k - 1], lv[k]), "curvature_oracle", in_range(a, 3.0, 5.0), a, "[3, 5]");
            run.check(format!("ricci_ratio_{}_{}", lv[k - 1], lv[k]), "curvature_oracle", in_range(b, 3.0, 5.0), b, "[3, 5]");
        }
    }
    run.write_csv("curvature.csv", &csv)?;
    Ok(json!({ "nodes": lv, "h": hs, "sc_error": sc, "ric_error": ric }))
}

fn identities(run: &mut Run) -> Result<Value> {
    let rep = sphere_identity_oracle(run.cfg.samples, run.cfg.seed, run.cfg.target_dim);
    let mut csv = Csv::new(&["samples", "term2", "term3", "term4", "rewrite"]);
    csv.row(&[Cell::I(rep.samples as u64), Cell::F(rep.term2), Cell::F(rep.term3), Cell::F(rep.term4), Cell::F(rep.rewrite)]);
    run.write_csv("identities.csv", &csv)?;
    run.check("sphere_identities", "exact_algebra", rep.max_deviation() <= 1e-12, rep.max_deviation(), "<= 1e-12");
    let mut cs = Csv::new(&["nodes", "checked", "violations", "naive_excess", "min_relative_gap", "identity_slack"]);
    let mut levels = Vec::new();
    for n in run.cfg.levels() {
        let grid = run.grid(n)?;
        let u = run.map(&grid)?;
        let r = pointwise_cs_bound(&u);
        cs.row(&[
            Cell::I(n as u64),
            Cell::I(r.nodes as u64),
            Cell::I(r.violations as u64),
            Cell::F(r.naive_excess),
            Cell::F(r.min_relative_gap),
            Cell::F(r.identity_slack),
        ]);
        run.check(format!("pointwise_domination_{n}"), "exact_algebra", r.holds(), r.violations as f64, "0 violations");
        levels.push(r);
    }
    run.write_csv("cs.csv", &cs)?;
    Ok(json!({ "oracle": rep, "cs": levels }))
}

/// Human-readable one-line-per-assertion digest.
pub fn render_assertions(assertions: &[Assertion]) -> String {
    let mut s = String::new();
    for a in assertions {
        let _ = writeln!(s, "{} {} [{}] value={:e} bound {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.criterion, a.value, a.bound);
    }
    s
}
