//! Line-oriented scenario configuration: `key = value` pairs, `#` comments.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::conformal::PhiPreset;
use crate::error::{Error, Result};
use crate::flow::{FlowParams, Method};
use crate::noise::NoiseSpec;
use crate::sphere::MapPreset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Invariance,
    Flow,
    Hardy,
    Convexity,
    Curvature,
    Identities,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Invariance => "invariance",
            Experiment::Flow => "flow",
            Experiment::Hardy => "hardy",
            Experiment::Convexity => "convexity",
            Experiment::Curvature => "curvature",
            Experiment::Identities => "identities",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainConfig {
    /// `[lo, hi]⁴`.
    Box { lo: f64, hi: f64 },
    /// `B_R(0)` inside the grid box `[-R, R]⁴`.
    Ball { radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhiConfig {
    Preset(PhiPreset),
    File(PathBuf),
}

/// Which `ρ` the Hardy experiment uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardyRoute {
    Distance,
    Eigenfunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub domain: DomainConfig,
    pub grid: usize,
    /// Number of grids; level `k` has `round((grid - 1) · refine_factor^k) + 1`
    /// nodes per axis, so a factor of 2 halves the spacing.
    pub refine: usize,
    pub refine_factor: f64,
    pub phi: PhiConfig,
    /// Compactly supported change of `φ` for the invariance experiment.
    pub bump: PhiPreset,
    pub target_dim: usize,
    pub map: MapPreset,
    /// Tangential noise for perturbed starts.
    pub noise: NoiseSpec,
    pub seed: u64,
    pub flow: FlowParams,
    /// Dump `u` every this many accepted steps; 0 disables.
    pub checkpoint_every: usize,
    pub hardy_members: usize,
    pub hardy_route: HardyRoute,
    pub pairs: usize,
    pub pair_amplitude: f64,
    pub uniqueness: bool,
    pub samples: usize,
    pub out: PathBuf,
    /// Every key with its resolved value, for the summary echo.
    pub echo: BTreeMap<String, String>,
}

const DEFAULTS: &[(&str, &str)] = &[
    ("experiment", ""),
    ("domain", "box"),
    ("box_lo", "0"),
    ("box_hi", "1"),
    ("ball_radius", "1"),
    ("grid", "12"),
    ("refine", "1"),
    ("refine_factor", "2"),
    ("phi", "flat"),
    ("phi_value", "0"),
    ("phi_center", "0.5,0.5,0.5,0.5"),
    ("phi_amplitude", "0.3"),
    ("phi_radius", "0.3"),
    ("phi_power", "4"),
    ("phi_file", ""),
    ("bump_amplitude", "0.3"),
    ("bump_center", "0.5,0.5,0.5,0.5"),
    ("bump_radius", "0.3"),
    ("bump_power", "4"),
    ("target_dim", "2"),
    ("map", "great_circle"),
    ("map_wave", "1,0.5,0,0"),
    ("map_eps", "0.2"),
    ("map_point", ""),
    ("noise_amplitude", "0.1"),
    ("noise_bumps", "6"),
    ("noise_radius", "0.2"),
    ("noise_margin", "0.2"),
    ("seed", "1"),
    ("dt0", "1e-6"),
    ("dt_max", "1"),
    ("tol", "1e-3"),
    ("t_max", "1e6"),
    ("max_steps", "200000"),
    ("residual_every", "25"),
    ("method", "cg"),
    ("checkpoint_every", "0"),
    ("hardy_members", "50"),
    ("hardy_route", "distance"),
    ("pairs", "20"),
    ("pair_amplitude", "0.05"),
    ("uniqueness", "true"),
    ("samples", "1000"),
    ("out", "out"),
];

/// Parses the text form. Unknown keys, duplicates and a missing
/// `experiment` are errors.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut given: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
        let k = k.trim().to_string();
        if !DEFAULTS.iter().any(|(d, _)| *d == k) {
            return Err(Error::Config(format!("line {line_no}: unknown key `{k}`")));
        }
        if let Some((first, _)) = given.get(&k) {
            return Err(Error::Config(format!("line {line_no}: duplicate key `{k}` (first set on line {first})")));
        }
        given.insert(k, (line_no, v.trim().to_string()));
    }
    if !given.contains_key("experiment") {
        return Err(Error::Config("missing: experiment".into()));
    }
    let mut m: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for (k, (_, v)) in given {
        m.insert(k, v);
    }
    from_map(m)
}

fn get<'a>(m: &'a BTreeMap<String, String>, k: &str) -> &'a str {
    m.get(k).map(String::as_str).unwrap_or("")
}

fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<T> {
    get(m, k).parse().map_err(|_| Error::Config(format!("`{k}`: cannot parse `{}`", get(m, k))))
}

fn list(m: &BTreeMap<String, String>, k: &str) -> Result<Vec<f64>> {
    let s = get(m, k);
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("`{k}`: cannot parse `{s}`"))))
        .collect()
}

fn vec4(m: &BTreeMap<String, String>, k: &str) -> Result<[f64; 4]> {
    let v = list(m, k)?;
    v.try_into().map_err(|_| Error::Config(format!("`{k}` needs four comma-separated numbers")))
}

fn positive(k: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{k}` must be positive (got {v})")))
    }
}

fn from_map(m: BTreeMap<String, String>) -> Result<ScenarioConfig> {
    let experiment = match get(&m, "experiment") {
        "invariance" => Experiment::Invariance,
        "flow" => Experiment::Flow,
        "hardy" => Experiment::Hardy,
        "convexity" => Experiment::Convexity,
        "curvature" => Experiment::Curvature,
        "identities" => Experiment::Identities,
        other => return Err(Error::Config(format!("`experiment`: unknown value `{other}`"))),
    };
    let domain = match get(&m, "domain") {
        "box" => {
            let lo: f64 = num(&m, "box_lo")?;
            let hi: f64 = num(&m, "box_hi")?;
            if !(hi > lo) {
                return Err(Error::Config(format!("`box_hi` ({hi}) must exceed `box_lo` ({lo})")));
            }
            DomainConfig::Box { lo, hi }
        }
        "ball" => DomainConfig::Ball { radius: positive("ball_radius", num(&m, "ball_radius")?)? },
        other => return Err(Error::Config(format!("`domain`: unknown value `{other}`"))),
    };
    let grid: usize = num(&m, "grid")?;
    if grid < 5 {
        return Err(Error::Config(format!("`grid` must be at least 5 (got {grid})")));
    }
    let refine: usize = num(&m, "refine")?;
    if refine == 0 {
        return Err(Error::Config("`refine` must be at least 1".into()));
    }
    let refine_factor = num(&m, "refine_factor")?;
    if !(refine_factor > 1.0) {
        return Err(Error::Config("`refine_factor` must exceed 1".into()));
    }
    let phi = match get(&m, "phi") {
        "flat" => PhiConfig::Preset(PhiPreset::Flat),
        "constant" => PhiConfig::Preset(PhiPreset::Constant(num(&m, "phi_value")?)),
        "stereographic" => PhiConfig::Preset(PhiPreset::Stereographic { center: vec4(&m, "phi_center")? }),
        "bump" => PhiConfig::Preset(PhiPreset::Bump {
            amplitude: num(&m, "phi_amplitude")?,
            center: vec4(&m, "phi_center")?,
            radius: positive("phi_radius", num(&m, "phi_radius")?)?,
            power: num(&m, "phi_power")?,
        }),
        "file" => {
            let p = get(&m, "phi_file");
            if p.is_empty() {
                return Err(Error::Config("`phi = file` needs `phi_file`".into()));
            }
            PhiConfig::File(PathBuf::from(p))
        }
        other => return Err(Error::Config(format!("`phi`: unknown value `{other}`"))),
    };
    let bump = PhiPreset::Bump {
        amplitude: num(&m, "bump_amplitude")?,
        center: vec4(&m, "bump_center")?,
        radius: positive("bump_radius", num(&m, "bump_radius")?)?,
        power: num(&m, "bump_power")?,
    };
    let target_dim: usize = num(&m, "target_dim")?;
    if target_dim == 0 {
        return Err(Error::Config("`target_dim` must be at least 1".into()));
    }
    let seed: u64 = num(&m, "seed")?;
    let wave = vec4(&m, "map_wave")?;
    let noise = NoiseSpec {
        amplitude: num(&m, "noise_amplitude")?,
        bumps: num(&m, "noise_bumps")?,
        radius: positive("noise_radius", num(&m, "noise_radius")?)?,
        margin: num(&m, "noise_margin")?,
        ..NoiseSpec::new(0.0, seed)
    };
    let map = match get(&m, "map") {
        "constant" => {
            let mut point = list(&m, "map_point")?;
            if point.is_empty() {
                point = vec![0.0; target_dim + 1];
                point[0] = 1.0;
            }
            if point.len() != target_dim + 1 {
                return Err(Error::Config(format!("`map_point` needs {} components", target_dim + 1)));
            }
            MapPreset::Constant { point }
        }
        "great_circle" => MapPreset::GreatCircle { wave },
        "smooth" => MapPreset::Smooth { wave, eps: num(&m, "map_eps")? },
        "perturbed_great_circle" => MapPreset::PerturbedGreatCircle { wave, noise: noise.clone() },
        other => return Err(Error::Config(format!("`map`: unknown value `{other}`"))),
    };
    let tol: f64 = num(&m, "tol")?;
    if !(tol >= 0.0) {
        return Err(Error::Config(format!("`tol` must be non-negative (got {tol})")));
    }
    let flow = FlowParams {
        dt0: positive("dt0", num(&m, "dt0")?)?,
        dt_max: positive("dt_max", num(&m, "dt_max")?)?,
        tol,
        t_max: positive("t_max", num(&m, "t_max")?)?,
        max_steps: num(&m, "max_steps")?,
        residual_every: num(&m, "residual_every")?,
        method: match get(&m, "method") {
            "cg" => Method::ConjugateGradient,
            "gd" => Method::Gradient,
            other => return Err(Error::Config(format!("`method`: unknown value `{other}`"))),
        },
    };
    if flow.dt_max < flow.dt0 {
        return Err(Error::Config("`dt_max` must be at least `dt0`".into()));
    }
    let hardy_route = match get(&m, "hardy_route") {
        "distance" => HardyRoute::Distance,
        "eigenfunction" => HardyRoute::Eigenfunction,
        other => return Err(Error::Config(format!("`hardy_route`: unknown value `{other}`"))),
    };
    let uniqueness = match get(&m, "uniqueness") {
        "true" => true,
        "false" => false,
        other => return Err(Error::Config(format!("`uniqueness`: expected true or false, got `{other}`"))),
    };
    Ok(ScenarioConfig {
        experiment,
        domain,
        grid,
        refine,
        refine_factor,
        phi,
        bump,
        target_dim,
        map,
        noise,
        seed,
        flow,
        checkpoint_every: num(&m, "checkpoint_every")?,
        hardy_members: num(&m, "hardy_members")?,
        hardy_route,
        pairs: num(&m, "pairs")?,
        pair_amplitude: num(&m, "pair_amplitude")?,
        uniqueness,
        samples: num(&m, "samples")?,
        out: PathBuf::from(get(&m, "out")),
        echo: m,
    })
}

impl ScenarioConfig {
    /// Applies command-line overrides and re-validates.
    pub fn with_overrides(self, grid: Option<usize>, refine: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut m = self.echo;
        if let Some(g) = grid {
            m.insert("grid".into(), g.to_string());
        }
        if let Some(r) = refine {
            m.insert("refine".into(), r.to_string());
        }
        if let Some(s) = seed {
            m.insert("seed".into(), s.to_string());
        }
        if let Some(o) = out {
            m.insert("out".into(), o.to_string_lossy().into_owned());
        }
        from_map(m)
    }

    /// Nodes per axis at each refinement level.
    pub fn levels(&self) -> Vec<usize> {
        (0..self.refine)
            .map(|k| ((self.grid - 1) as f64 * self.refine_factor.powi(k as i32)).round() as usize + 1)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_missing_experiment() {
        let e = parse_config("").unwrap_err();
        assert_eq!(e.to_string(), "config: missing: experiment");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn minimal_text_fills_defaults() {
        let c = parse_config("experiment = flow\n").unwrap();
        assert_eq!(c.experiment, Experiment::Flow);
        assert_eq!(c.grid, 12);
        assert_eq!(c.flow.tol, 1e-3);
        assert_eq!(c.echo["method"], "cg");
        assert_eq!(c.levels(), vec![12]);
    }

    #[test]
    fn duplicates_and_unknown_keys_name_the_line() {
        let e = parse_config("experiment = flow\n# note\ngrid = 8\ngrid = 9\n").unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
        let e = parse_config("experiment = flow\ncolour = red\n").unwrap_err();
        assert!(e.to_string().contains("`colour`"), "{e}");
    }

    #[test]
    fn ranges_are_validated() {
        assert!(parse_config("experiment = flow\ngrid = 4").is_err());
        assert!(parse_config("experiment = flow\ntol = -1").is_err());
        assert!(parse_config("experiment = flow\ntol = 0").is_ok());
        assert!(parse_config("experiment = nothing").is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config("experiment = hardy  # trailing comment\n").unwrap();
        let c = c.with_overrides(Some(16), Some(2), Some(9), None).unwrap();
        assert_eq!(c.levels(), vec![16, 31]);
        assert_eq!(c.seed, 9);
    }
}
