//! Run configuration: a TOML document with the sections `[domain]`, `[time]`,
//! `[params]`, `[experiment]`, `[solver]` and `[output]`.
//!
//! Only `experiment.kind` is required. Every other key falls back to the preset of
//! the chosen experiment, so a two-line file reproduces the standard runs. Unknown
//! keys are rejected.

use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use chmhd_core::scheme::{KrylovConfig, LinearSolver};
use chmhd_core::{PhysParams, Rect, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Converge,
    Spinodal,
    Bubble,
    Custom,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Converge => "converge",
            ExperimentKind::Spinodal => "spinodal",
            ExperimentKind::Bubble => "bubble",
            ExperimentKind::Custom => "custom",
        })
    }
}

/// Initial data of a custom run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Exact,
    Spinodal,
    Bubble,
}

/// Boundary preset of a custom run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Walls,
    Manufactured,
    Bubble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Auto,
    Direct,
    Krylov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub m1: f64,
    pub m2: f64,
    pub mu: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub gravity: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Mean phase of the spinodal mixture.
    pub psi0: f64,
    /// Noise amplitude of the spinodal mixture.
    pub amplitude: f64,
    pub radius: f64,
    pub center: [f64; 2],
    /// Uniform applied magnetic field of the bubble container.
    pub field: [f64; 2],
    /// Convergence study: cells per side of each mesh.
    pub levels: Vec<usize>,
    /// Convergence study: `rho2 / rho1` settings, each run with `rho1` from `[params]`.
    pub density_ratios: Vec<f64>,
    /// Convergence study: final time.
    pub t_final: f64,
    /// Spinodal: time steps to sweep; empty means `time.dt` alone.
    pub dt_sweep: Vec<f64>,
    /// Spinodal: steps per sweep entry; zero means run to `time.t_end`.
    pub steps: usize,
    pub initial: InitialKind,
    pub boundary: BoundaryKind,
    /// Add the manufactured-solution forcing (custom runs).
    pub manufactured_sources: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_rtol: f64,
    pub newton_max: usize,
    pub line_search: bool,
    pub predictor: bool,
    pub linear: LinearKind,
    /// `auto` switches from direct to Krylov above this many unknowns.
    pub direct_limit: usize,
    pub krylov_restart: usize,
    pub krylov_max_iter: usize,
    pub krylov_refactor_after: usize,
    pub krylov_forcing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write a VTK snapshot every this many steps; zero disables.
    pub vtk_every: usize,
    /// Additional snapshot times (matched to the nearest step).
    pub snapshot_times: Vec<f64>,
    pub energy_csv: String,
    pub mass_csv: String,
    pub centroid_csv: String,
    pub errors_csv: String,
    pub metadata: String,
}

/// A fully resolved and validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub params: ParamsConfig,
    pub experiment: ExperimentConfig,
    pub solver: SolverSection,
    pub output: OutputConfig,
}

impl ParamsConfig {
    pub fn to_params(&self) -> PhysParams {
        PhysParams {
            rho1: self.rho1,
            rho2: self.rho2,
            eta1: self.eta1,
            eta2: self.eta2,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            m1: self.m1,
            m2: self.m2,
            mu: self.mu,
            gamma: self.gamma,
            epsilon: self.epsilon,
            lambda: self.lambda,
            gravity: self.gravity,
        }
    }

    fn from_params(p: &PhysParams) -> Self {
        ParamsConfig {
            rho1: p.rho1,
            rho2: p.rho2,
            eta1: p.eta1,
            eta2: p.eta2,
            sigma1: p.sigma1,
            sigma2: p.sigma2,
            m1: p.m1,
            m2: p.m2,
            mu: p.mu,
            gamma: p.gamma,
            epsilon: p.epsilon,
            lambda: p.lambda,
            gravity: p.gravity,
        }
    }
}

impl DomainConfig {
    pub fn rect(&self) -> Result<Rect> {
        Rect::new(self.x0, self.x1, self.y0, self.y1).map_err(|e| anyhow!("domain: {e}"))
    }
}

impl SolverSection {
    pub fn to_solver(&self, dt: f64) -> SolverConfig {
        let krylov = KrylovConfig {
            restart: self.krylov_restart,
            max_iter: self.krylov_max_iter,
            refactor_after: self.krylov_refactor_after,
            forcing: self.krylov_forcing,
        };
        SolverConfig {
            dt,
            newton_tol: self.newton_tol,
            newton_rtol: self.newton_rtol,
            newton_max: self.newton_max,
            line_search: self.line_search,
            predictor: self.predictor,
            linear: match self.linear {
                LinearKind::Direct => LinearSolver::Direct,
                LinearKind::Krylov => LinearSolver::Krylov(krylov),
                LinearKind::Auto => LinearSolver::Auto(self.direct_limit),
            },
        }
    }
}

impl RunConfig {
    /// The standard setup of each experiment (desk-scale resolutions).
    pub fn preset(kind: ExperimentKind) -> Self {
        let unit = |n: usize| DomainConfig { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, nx: n, ny: n };
        let defaults = SolverConfig::new(1.0);
        let kc = KrylovConfig::default();
        let solver = SolverSection {
            newton_tol: defaults.newton_tol,
            newton_rtol: defaults.newton_rtol,
            newton_max: defaults.newton_max,
            line_search: defaults.line_search,
            predictor: defaults.predictor,
            linear: LinearKind::Auto,
            direct_limit: match defaults.linear {
                LinearSolver::Auto(n) => n,
                _ => 0,
            },
            krylov_restart: kc.restart,
            krylov_max_iter: kc.max_iter,
            krylov_refactor_after: kc.refactor_after,
            krylov_forcing: kc.forcing,
        };
        let mut experiment = ExperimentConfig {
            kind,
            seed: 1,
            psi0: -0.05,
            amplitude: 0.001,
            radius: 0.2,
            center: [0.5, 0.3],
            field: [0.0, 1.0],
            levels: vec![8, 16, 32],
            density_ratios: vec![1.0, 1e-3],
            t_final: 0.1,
            dt_sweep: Vec::new(),
            steps: 0,
            initial: InitialKind::Spinodal,
            boundary: BoundaryKind::Walls,
            manufactured_sources: false,
        };
        let mut output = OutputConfig {
            directory: PathBuf::from(format!("out/{kind}")),
            vtk_every: 0,
            snapshot_times: Vec::new(),
            energy_csv: "energy.csv".into(),
            mass_csv: "mass.csv".into(),
            centroid_csv: "centroid.csv".into(),
            errors_csv: "errors.csv".into(),
            metadata: "metadata.toml".into(),
        };
        let base = PhysParams::default();
        let (domain, time, params) = match kind {
            ExperimentKind::Converge => (unit(8), TimeConfig { dt: 1.0 / 64.0, t_end: 0.1 }, base),
            ExperimentKind::Spinodal => {
                experiment.dt_sweep = vec![1.0, 0.1, 0.01, 0.001];
                experiment.steps = 50;
                output.snapshot_times = vec![0.0001, 0.05, 0.2, 1.0];
                let p = PhysParams { rho2: 1e-3, gamma: 0.01, epsilon: 0.01, ..base };
                (unit(32), TimeConfig { dt: 0.001, t_end: 0.05 }, p)
            }
            ExperimentKind::Bubble => {
                experiment.initial = InitialKind::Bubble;
                experiment.boundary = BoundaryKind::Bubble;
                output.snapshot_times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
                // Heavier ambient fluid I (phi = -1) around a lighter bubble of fluid II.
                let p = PhysParams {
                    rho1: 9.0,
                    rho2: 1.0,
                    m1: 1e-4,
                    m2: 1e-4,
                    lambda: 5.0,
                    epsilon: 0.01,
                    gravity: [0.0, -10.0],
                    ..base
                };
                let domain = DomainConfig { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.5, nx: 64, ny: 96 };
                (domain, TimeConfig { dt: 0.001, t_end: 1.0 }, p)
            }
            ExperimentKind::Custom => (unit(16), TimeConfig { dt: 0.01, t_end: 0.1 }, base),
        };
        RunConfig { domain, time, params: ParamsConfig::from_params(&params), experiment, solver, output }
    }

    /// Checks every invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.x1 > d.x0 && d.y1 > d.y0) || ![d.x0, d.x1, d.y0, d.y1].iter().all(|v| v.is_finite()) {
            bail!("invariant violated: domain must satisfy x0 < x1 and y0 < y1 (got [{}, {}] x [{}, {}])", d.x0, d.x1, d.y0, d.y1);
        }
        if d.nx == 0 || d.ny == 0 {
            bail!("invariant violated: domain.nx and domain.ny must be at least 1");
        }
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            bail!("invariant violated: time.dt must be positive (got {})", self.time.dt);
        }
        if !(self.time.t_end >= 0.0) {
            bail!("invariant violated: time.t_end must be non-negative (got {})", self.time.t_end);
        }
        if let Err(e) = self.params.to_params().validate() {
            bail!("invariant violated: params.{} must be strictly positive and finite (got {})", e.name, e.value);
        }
        let e = &self.experiment;
        match e.kind {
            ExperimentKind::Converge => {
                if e.levels.is_empty() || e.levels.contains(&0) {
                    bail!("invariant violated: experiment.levels must be a non-empty list of positive cell counts");
                }
                if e.density_ratios.is_empty() || e.density_ratios.iter().any(|r| !(*r > 0.0)) {
                    bail!("invariant violated: experiment.density_ratios must be a non-empty list of positive ratios");
                }
                if !(e.t_final > 0.0) {
                    bail!("invariant violated: experiment.t_final must be positive (got {})", e.t_final);
                }
            }
            ExperimentKind::Spinodal => {
                if e.dt_sweep.iter().any(|dt| !(*dt > 0.0 && dt.is_finite())) {
                    bail!("invariant violated: experiment.dt_sweep entries must be positive");
                }
                if !(e.amplitude >= 0.0) {
                    bail!("invariant violated: experiment.amplitude must be non-negative (got {})", e.amplitude);
                }
            }
            ExperimentKind::Bubble | ExperimentKind::Custom => {}
        }
        let needs_bubble = e.kind == ExperimentKind::Bubble || (e.kind == ExperimentKind::Custom && e.initial == InitialKind::Bubble);
        if needs_bubble {
            if !(e.radius > 0.0) {
                bail!("invariant violated: experiment.radius must be positive (got {})", e.radius);
            }
            let [cx, cy] = e.center;
            if !(cx > d.x0 && cx < d.x1 && cy > d.y0 && cy < d.y1) {
                bail!("invariant violated: experiment.center must lie inside the domain (got ({cx}, {cy}))");
            }
        }
        let s = &self.solver;
        if !(s.newton_tol > 0.0 && s.newton_rtol > 0.0) {
            bail!("invariant violated: solver.newton_tol and solver.newton_rtol must be positive");
        }
        if s.newton_max == 0 {
            bail!("invariant violated: solver.newton_max must be at least 1");
        }
        if s.krylov_restart == 0 || s.krylov_max_iter == 0 {
            bail!("invariant violated: solver.krylov_restart and solver.krylov_max_iter must be at least 1");
        }
        if !(s.krylov_forcing > 0.0 && s.krylov_forcing < 1.0) {
            bail!("invariant violated: solver.krylov_forcing must lie in (0, 1) (got {})", s.krylov_forcing);
        }
        if self.output.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            bail!("invariant violated: output.snapshot_times must be non-negative");
        }
        Ok(())
    }
}

/// Parses a configuration document, applies `key=value` overrides (dotted paths such
/// as `params.sigma1=1000`) and resolves defaults from the experiment preset.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().context("configuration is not valid TOML")?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let kind = table
        .get("experiment")
        .and_then(|e| e.get("kind"))
        .ok_or_else(|| anyhow!("missing required key experiment.kind"))?
        .clone();
    let kind: ExperimentKind = kind
        .try_into()
        .map_err(|e| anyhow!("experiment.kind: {e} (expected converge, spinodal, bubble or custom)"))?;

    // Unknown keys and type errors are reported against the document the user wrote,
    // with line context, before defaults are merged in.
    let checked = if overrides.is_empty() { text.to_owned() } else { toml::to_string(&table)? };
    toml::from_str::<RawConfig>(&checked).map_err(|e| anyhow!("invalid configuration: {e}"))?;

    let mut merged = toml::Table::try_from(RunConfig::preset(kind))?;
    merge(&mut merged, table);
    let cfg: RunConfig = toml::Value::Table(merged).try_into().map_err(|e| anyhow!("invalid configuration: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A preset with overrides applied, for the subcommand shortcuts.
pub fn preset_with_overrides(kind: ExperimentKind, overrides: &[String]) -> Result<RunConfig> {
    parse_config(&format!("[experiment]\nkind = \"{kind}\"\n"), overrides)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw) = item.split_once('=').ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let path: Vec<&str> = path.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override `{item}` has an empty key");
    }
    // Values are TOML literals; anything that does not parse is taken as a string.
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| anyhow!("override `{item}`: `{p}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

// Mirror of `RunConfig` with every key optional, used to reject unknown keys and
// mistyped values with the parser's line information.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawConfig {
    domain: Option<RawDomain>,
    time: Option<RawTime>,
    params: Option<RawParams>,
    experiment: Option<RawExperiment>,
    solver: Option<RawSolver>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawDomain {
    x0: Option<f64>,
    x1: Option<f64>,
    y0: Option<f64>,
    y1: Option<f64>,
    nx: Option<usize>,
    ny: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawTime {
    dt: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawParams {
    rho1: Option<f64>,
    rho2: Option<f64>,
    eta1: Option<f64>,
    eta2: Option<f64>,
    sigma1: Option<f64>,
    sigma2: Option<f64>,
    m1: Option<f64>,
    m2: Option<f64>,
    mu: Option<f64>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
    gravity: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawExperiment {
    kind: ExperimentKind,
    seed: Option<u64>,
    psi0: Option<f64>,
    amplitude: Option<f64>,
    radius: Option<f64>,
    center: Option<[f64; 2]>,
    field: Option<[f64; 2]>,
    levels: Option<Vec<usize>>,
    density_ratios: Option<Vec<f64>>,
    t_final: Option<f64>,
    dt_sweep: Option<Vec<f64>>,
    steps: Option<usize>,
    initial: Option<InitialKind>,
    boundary: Option<BoundaryKind>,
    manufactured_sources: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawSolver {
    newton_tol: Option<f64>,
    newton_rtol: Option<f64>,
    newton_max: Option<usize>,
    line_search: Option<bool>,
    predictor: Option<bool>,
    linear: Option<LinearKind>,
    direct_limit: Option<usize>,
    krylov_restart: Option<usize>,
    krylov_max_iter: Option<usize>,
    krylov_refactor_after: Option<usize>,
    krylov_forcing: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct RawOutput {
    directory: Option<PathBuf>,
    vtk_every: Option<usize>,
    snapshot_times: Option<Vec<f64>>,
    energy_csv: Option<String>,
    mass_csv: Option<String>,
    centroid_csv: Option<String>,
    errors_csv: Option<String>,
    metadata: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_converge_config_fills_defaults() {
        let cfg = parse_config("[experiment]\nkind = \"converge\"\n", &[]).unwrap();
        assert_eq!(cfg.experiment.kind, ExperimentKind::Converge);
        assert_eq!(cfg.experiment.levels, vec![8, 16, 32]);
        assert_eq!(cfg.experiment.density_ratios, vec![1.0, 1e-3]);
        assert_eq!(cfg.experiment.t_final, 0.1);
        assert_eq!(cfg.solver.newton_tol, 1e-10);
        assert_eq!(cfg.solver.newton_max, 20);
        assert_eq!(cfg.params.to_params(), PhysParams::default());
    }

    #[test]
    fn lorentz_bubble_variant() {
        let text = "[experiment]\nkind = \"bubble\"\n[params]\nlambda = 5.0\nsigma1 = 1000.0\nsigma2 = 1000.0\nmu = 0.001\n";
        let cfg = parse_config(text, &[]).unwrap();
        let p = cfg.params.to_params();
        assert_eq!((p.sigma1, p.sigma2, p.mu, p.lambda), (1000.0, 1000.0, 0.001, 5.0));
        // Untouched keys keep the bubble preset.
        assert_eq!(p.m1, 1e-4);
        assert_eq!(p.gravity, [0.0, -10.0]);
        assert_eq!(cfg.domain.y1, 1.5);
    }

    #[test]
    fn negative_epsilon_names_the_invariant() {
        let err = parse_config("[experiment]\nkind = \"spinodal\"\n[params]\nepsilon = -0.01\n", &[]).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("invariant violated: params.epsilon"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse_config("[experiment]\nkind = \"bubble\"\n[params]\nrho3 = 2.0\n", &[]).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("rho3") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn type_mismatch_is_rejected() {
        let err = parse_config("[experiment]\nkind = \"bubble\"\n[domain]\nnx = \"many\"\n", &[]).unwrap_err();
        assert!(format!("{err:#}").contains("nx"));
    }

    #[test]
    fn missing_kind_is_rejected() {
        let err = parse_config("[time]\ndt = 0.1\n", &[]).unwrap_err();
        assert!(format!("{err:#}").contains("experiment.kind"));
    }

    #[test]
    fn overrides_apply_and_are_checked() {
        let cfg = preset_with_overrides(ExperimentKind::Bubble, &["params.sigma1=1000".into(), "domain.nx=32".into()]).unwrap();
        assert_eq!(cfg.params.sigma1, 1000.0);
        assert_eq!(cfg.domain.nx, 32);
        let cfg = preset_with_overrides(ExperimentKind::Bubble, &["output.directory=/tmp/b".into()]).unwrap();
        assert_eq!(cfg.output.directory, PathBuf::from("/tmp/b"));
        assert!(preset_with_overrides(ExperimentKind::Bubble, &["params.bogus=1".into()]).is_err());
        assert!(preset_with_overrides(ExperimentKind::Bubble, &["no_equals".into()]).is_err());
        assert!(preset_with_overrides(ExperimentKind::Bubble, &["time.dt=0".into()]).is_err());
    }

    #[test]
    fn presets_are_valid_and_round_trip() {
        for kind in [ExperimentKind::Converge, ExperimentKind::Spinodal, ExperimentKind::Bubble, ExperimentKind::Custom] {
            let cfg = RunConfig::preset(kind);
            cfg.validate().unwrap();
            let text = toml::to_string(&cfg).unwrap();
            assert_eq!(parse_config(&text, &[]).unwrap(), cfg);
        }
    }

    #[test]
    fn bubble_center_outside_domain() {
        let err = preset_with_overrides(ExperimentKind::Bubble, &["experiment.center=[2.0, 0.3]".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("experiment.center"));
    }
}
