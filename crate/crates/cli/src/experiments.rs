//! The experiment drivers: manufactured-solution convergence study, spinodal
//! decomposition, rising bubble and free-form custom runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chmhd_core::diagnostics::{self, eoc, ErrorReport};
use chmhd_core::mesh::build_mesh;
use chmhd_core::physics::{ExactSolution, InitialData};
use chmhd_core::scheme::{CoefficientBounds, Sources};
use chmhd_core::{BcSet, DiagnosticsRecord, PhysParams, State, Stepper};
use serde::{Deserialize, Serialize};

use crate::config::{BoundaryKind, ExperimentKind, InitialKind, RunConfig};
use crate::output::{write_csv, write_metadata, write_vtk};

/// One row of the convergence tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub density_ratio: f64,
    pub n: usize,
    /// Mesh width `1 / n`.
    pub h: f64,
    pub dt: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    pub vel_l2: f64,
    pub vel_h1: f64,
    pub mag_l2: f64,
    pub mag_h1: f64,
    pub pres_l2: f64,
    /// Largest `(div u_h, q)` residual over all steps after the first.
    pub max_divergence: f64,
    /// Largest deviation of the mass from the discrete balance with the phase source.
    pub max_mass_drift: f64,
    pub newton_iterations: usize,
}

/// Observed orders between consecutive levels, per error column.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub phi_l2: Vec<Option<f64>>,
    pub phi_h1: Vec<Option<f64>>,
    pub vel_l2: Vec<Option<f64>>,
    pub vel_h1: Vec<Option<f64>>,
    pub mag_l2: Vec<Option<f64>>,
    pub mag_h1: Vec<Option<f64>>,
    pub pres_l2: Vec<Option<f64>>,
}

impl Rates {
    pub fn of(rows: &[ConvergeRow]) -> Self {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let col = |f: fn(&ConvergeRow) -> f64| eoc(&rows.iter().map(f).collect::<Vec<_>>(), &hs);
        Rates {
            phi_l2: col(|r| r.phi_l2),
            phi_h1: col(|r| r.phi_h1),
            vel_l2: col(|r| r.vel_l2),
            vel_h1: col(|r| r.vel_h1),
            mag_l2: col(|r| r.mag_l2),
            mag_h1: col(|r| r.mag_h1),
            pres_l2: col(|r| r.pres_l2),
        }
    }

    /// Rates between the two finest levels, in column order.
    pub fn finest(&self) -> [Option<f64>; 7] {
        let last = |v: &Vec<Option<f64>>| v.last().copied().flatten();
        [
            last(&self.phi_l2),
            last(&self.phi_h1),
            last(&self.vel_l2),
            last(&self.vel_h1),
            last(&self.mag_l2),
            last(&self.mag_h1),
            last(&self.pres_l2),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeStudy {
    pub density_ratio: f64,
    pub rows: Vec<ConvergeRow>,
    pub rates: Rates,
    pub bounds: CoefficientBounds,
    pub bounds_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergeSummary {
    pub studies: Vec<ConvergeStudy>,
    pub table: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub dt: f64,
    pub step: usize,
    pub time: f64,
    pub kinetic: f64,
    pub magnetic: f64,
    pub gradient: f64,
    pub potential: f64,
    pub total: f64,
    /// Energy change plus all dissipation terms; zero for the exact scheme.
    pub identity_defect: f64,
    pub newton_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub dt: f64,
    pub step: usize,
    pub time: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidRow {
    pub step: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub energy: f64,
    pub mass: f64,
}

/// Time series of a single run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSeries {
    pub dt: f64,
    pub energy: Vec<EnergyRow>,
    pub mass: Vec<MassRow>,
    pub final_state: Option<State>,
    pub bounds: CoefficientBounds,
    pub bounds_ok: bool,
    /// `int (phi - mean)^2` of the final state.
    pub phase_variance: f64,
}

impl RunSeries {
    /// Largest energy increase between consecutive steps (negative if it always decays).
    pub fn max_energy_increase(&self) -> f64 {
        self.energy.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_identity_defect(&self) -> f64 {
        self.energy.iter().map(|r| r.identity_defect.abs()).fold(0.0, f64::max)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass.first().map_or(0.0, |r| r.mass);
        self.mass.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinodalSummary {
    pub runs: Vec<RunSeries>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BubbleSummary {
    pub centroid: Vec<CentroidRow>,
    pub max_mass_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomSummary {
    pub series: RunSeries,
    /// Error against the smooth solution when the run starts from it.
    pub errors: Option<ErrorReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Summary {
    Converge(ConvergeSummary),
    Spinodal(SpinodalSummary),
    Bubble(BubbleSummary),
    Custom(CustomSummary),
}

/// Runs the configured experiment, writing its outputs and metadata.
pub fn run(cfg: &RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let dir = &cfg.output.directory;
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut notes = Vec::new();
    let summary = match cfg.experiment.kind {
        ExperimentKind::Converge => {
            notes.push(format!(
                "dt = T / ceil(T / h^2), the largest step not above h^2 that divides T = {}",
                cfg.experiment.t_final
            ));
            notes.push(format!("density ratios rho2/rho1 = {:?} with rho1 = {}", cfg.experiment.density_ratios, cfg.params.rho1));
            Summary::Converge(run_converge(cfg)?)
        }
        ExperimentKind::Spinodal => {
            if cfg.experiment.steps > 0 {
                notes.push(format!("each time step runs a fixed {} steps", cfg.experiment.steps));
            }
            Summary::Spinodal(run_spinodal(cfg)?)
        }
        ExperimentKind::Bubble => Summary::Bubble(run_bubble(cfg)?),
        ExperimentKind::Custom => Summary::Custom(run_custom(cfg)?),
    };
    write_metadata(cfg, &notes, &dir.join(&cfg.output.metadata))?;
    Ok(summary)
}

fn stepper(cfg: &RunConfig, nx: usize, ny: usize, params: PhysParams, dt: f64, bcs: BcSet, sources: Sources) -> Result<Stepper> {
    let mesh = build_mesh(cfg.domain.rect()?, nx, ny)?;
    Ok(Stepper::new(mesh, params, cfg.solver.to_solver(dt), bcs, sources)?)
}

/// Time step of the convergence study: `dt <= h^2` with a whole number of steps to `t_final`.
pub fn converge_dt(n: usize, t_final: f64) -> f64 {
    let h = 1.0 / n as f64;
    t_final / (t_final / (h * h)).ceil()
}

pub fn run_converge(cfg: &RunConfig) -> Result<ConvergeSummary> {
    let e = &cfg.experiment;
    let mut studies = Vec::new();
    let mut all_rows = Vec::new();
    for &ratio in &e.density_ratios {
        let params = PhysParams { rho2: ratio * cfg.params.rho1, ..cfg.params.to_params() };
        let mut rows = Vec::new();
        let mut bounds = CoefficientBounds::default();
        for &n in &e.levels {
            let ctx = || format!("convergence run h=1/{n}, rho2/rho1={ratio}");
            let dt = converge_dt(n, e.t_final);
            let mut st = stepper(cfg, n, n, params, dt, BcSet::manufactured(), Sources::Manufactured).with_context(ctx)?;
            let s0 = st.initial_state(&InitialData::Exact, 0.0).with_context(ctx)?;
            let (mesh, spaces) = (st.mesh.clone(), st.spaces.clone());
            // The forced phase equation changes the mass by dt times the source integral.
            let steps = (e.t_final / dt).round() as usize;
            let source: Vec<f64> = (0..=steps).map(|k| dt * st.phase_source(k as f64 * dt)).collect();
            let (mut max_div, mut its, mut expected, mut drift) = (0.0f64, 0, 0.0, 0.0f64);
            let fin = st
                .run(s0, e.t_final, |r, s| {
                    its += r.newton_iterations;
                    if r.step == 0 {
                        expected = r.mass;
                    } else {
                        expected += source[r.step];
                        // The initial interpolant is not discretely divergence free.
                        max_div = max_div.max(diagnostics::divergence_residual(s, &mesh, &spaces));
                    }
                    drift = drift.max((r.mass - expected).abs());
                })
                .with_context(ctx)?;
            let rep = diagnostics::error_norms(&fin, &ExactSolution::new(&params), &st.mesh, &st.spaces, fin.time, dt);
            bounds.merge(&st.bounds);
            log::info!("converge ratio={ratio} n={n}: {rep:?}");
            rows.push(ConvergeRow {
                density_ratio: ratio,
                n,
                h: 1.0 / n as f64,
                dt,
                phi_l2: rep.phi_l2,
                phi_h1: rep.phi_h1,
                vel_l2: rep.vel_l2,
                vel_h1: rep.vel_h1,
                mag_l2: rep.mag_l2,
                mag_h1: rep.mag_h1,
                pres_l2: rep.pres_l2,
                max_divergence: max_div,
                max_mass_drift: drift,
                newton_iterations: its,
            });
        }
        all_rows.extend_from_slice(&rows);
        let rates = Rates::of(&rows);
        studies.push(ConvergeStudy { density_ratio: ratio, rows, rates, bounds, bounds_ok: bounds.within(&params) });
    }
    write_csv(&all_rows, &cfg.output.directory.join(&cfg.output.errors_csv))?;
    let table = format_tables(&studies);
    println!("{table}");
    Ok(ConvergeSummary { studies, table })
}

/// Error and rate tables, one per density setting.
pub fn format_tables(studies: &[ConvergeStudy]) -> String {
    let mut s = String::new();
    for st in studies {
        s.push_str(&format!("rho2/rho1 = {}\n", st.density_ratio));
        s.push_str(&format!(
            "{:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>10} {:>6} {:>9} {:>9}\n",
            "h", "|phi|", "rate", "|grad phi|", "rate", "|u|", "rate", "|grad u|", "rate", "|B|", "rate", "|grad B|", "rate", "|p|", "rate", "div", "mass"
        ));
        let r = &st.rates;
        for (i, row) in st.rows.iter().enumerate() {
            let rate = |v: &Vec<Option<f64>>| match i.checked_sub(1).and_then(|j| v[j]) {
                Some(x) => format!("{x:6.2}"),
                None => format!("{:>6}", "-"),
            };
            s.push_str(&format!(
                "{:>6} {:10.4e} {} {:10.4e} {} {:10.4e} {} {:10.4e} {} {:10.4e} {} {:10.4e} {} {:10.4e} {} {:9.2e} {:9.2e}\n",
                format!("1/{}", row.n),
                row.phi_l2,
                rate(&r.phi_l2),
                row.phi_h1,
                rate(&r.phi_h1),
                row.vel_l2,
                rate(&r.vel_l2),
                row.vel_h1,
                rate(&r.vel_h1),
                row.mag_l2,
                rate(&r.mag_l2),
                row.mag_h1,
                rate(&r.mag_h1),
                row.pres_l2,
                rate(&r.pres_l2),
                row.max_divergence,
                row.max_mass_drift,
            ));
        }
    }
    s
}

/// Steps of the nearest grid time for each requested snapshot time, plus every
/// `every`-th step.
fn snapshot_steps(times: &[f64], every: usize, dt: f64, steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = times
        .iter()
        .map(|t| (t / dt).round())
        .filter(|k| *k <= steps as f64)
        .map(|k| k as usize)
        .collect();
    if every > 0 {
        out.extend((0..=steps).step_by(every));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Runs `steps` steps from `initial`, collecting the energy and mass series and
/// writing the requested snapshots as `<prefix>_<step>.vtk`.
fn run_series(
    st: &mut Stepper,
    initial: State,
    steps: usize,
    snapshots: &[usize],
    dir: &Path,
    prefix: &str,
    mut extra: impl FnMut(&DiagnosticsRecord, &State) -> Result<()>,
) -> Result<RunSeries> {
    let dt = st.cfg.dt;
    let t_end = initial.time + steps as f64 * dt;
    let (mesh, spaces) = (st.mesh.clone(), st.spaces.clone());
    let mut series = RunSeries { dt, ..RunSeries::default() };
    let mut failure: Option<anyhow::Error> = None;
    let fin = st.run(initial, t_end, |r, s| {
        if failure.is_some() {
            return;
        }
        series.energy.push(EnergyRow {
            dt,
            step: r.step,
            time: r.time,
            kinetic: r.energy.kinetic,
            magnetic: r.energy.magnetic,
            gradient: r.energy.gradient,
            potential: r.energy.potential,
            total: r.energy.total(),
            identity_defect: r.identity.map_or(0.0, |i| i.defect()),
            newton_iterations: r.newton_iterations,
        });
        series.mass.push(MassRow { dt, step: r.step, time: r.time, mass: r.mass });
        let mut res = extra(r, s);
        if res.is_ok() && snapshots.binary_search(&r.step).is_ok() {
            res = write_vtk(s, &mesh, &spaces, &dir.join(format!("{prefix}_{:06}.vtk", r.step)));
        }
        if let Err(e) = res {
            failure = Some(e);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let fin = fin?;
    series.phase_variance = diagnostics::phase_variance(&fin.phi, &st.mesh);
    series.final_state = Some(fin);
    series.bounds = st.bounds;
    series.bounds_ok = st.bounds.within(&st.params);
    Ok(series)
}

fn steps_to(t_end: f64, t0: f64, dt: f64) -> Result<usize> {
    let k = ((t_end - t0) / dt).round();
    if k < 0.0 || ((k * dt) - (t_end - t0)).abs() > 1e-9 * t_end.abs().max(1.0) {
        bail!("invariant violated: time.t_end = {t_end} is not a whole number of steps of dt = {dt}");
    }
    Ok(k as usize)
}

fn dt_label(dt: f64) -> String {
    format!("dt{dt:e}")
}

pub fn run_spinodal(cfg: &RunConfig) -> Result<SpinodalSummary> {
    let e = &cfg.experiment;
    let dts = if e.dt_sweep.is_empty() { vec![cfg.time.dt] } else { e.dt_sweep.clone() };
    let dir = &cfg.output.directory;
    let initial = InitialData::Spinodal { psi0: e.psi0, amplitude: e.amplitude, seed: e.seed };
    let mut runs = Vec::new();
    for &dt in &dts {
        let ctx = || format!("spinodal run dt={dt}");
        let steps = if e.steps > 0 { e.steps } else { steps_to(cfg.time.t_end, 0.0, dt)? };
        let mut st = stepper(cfg, cfg.domain.nx, cfg.domain.ny, cfg.params.to_params(), dt, BcSet::walls(), Sources::None)
            .with_context(ctx)?;
        let s0 = st.initial_state(&initial, 0.0).with_context(ctx)?;
        let snaps = snapshot_steps(&cfg.output.snapshot_times, cfg.output.vtk_every, dt, steps);
        let series = run_series(&mut st, s0, steps, &snaps, dir, &format!("spinodal_{}", dt_label(dt)), |_, _| Ok(()))
            .with_context(ctx)?;
        log::info!(
            "spinodal dt={dt}: max energy increase {:.3e}, identity defect {:.3e}, mass drift {:.3e}",
            series.max_energy_increase(),
            series.max_identity_defect(),
            series.max_mass_drift()
        );
        runs.push(series);
    }
    let energy: Vec<EnergyRow> = runs.iter().flat_map(|r| r.energy.iter().copied()).collect();
    let mass: Vec<MassRow> = runs.iter().flat_map(|r| r.mass.iter().copied()).collect();
    write_csv(&energy, &dir.join(&cfg.output.energy_csv))?;
    write_csv(&mass, &dir.join(&cfg.output.mass_csv))?;
    Ok(SpinodalSummary { runs })
}

fn bubble_initial(cfg: &RunConfig) -> InitialData {
    let e = &cfg.experiment;
    InitialData::Bubble { radius: e.radius, center: e.center, field: e.field }
}

pub fn run_bubble(cfg: &RunConfig) -> Result<BubbleSummary> {
    let dt = cfg.time.dt;
    let dir = &cfg.output.directory;
    let steps = steps_to(cfg.time.t_end, 0.0, dt)?;
    let mut st = stepper(
        cfg,
        cfg.domain.nx,
        cfg.domain.ny,
        cfg.params.to_params(),
        dt,
        BcSet::bubble(cfg.experiment.field),
        Sources::None,
    )?;
    let s0 = st.initial_state(&bubble_initial(cfg), 0.0)?;
    let snaps = snapshot_steps(&cfg.output.snapshot_times, cfg.output.vtk_every, dt, steps);
    let mesh = st.mesh.clone();
    let mut centroid = Vec::with_capacity(steps + 1);
    let series = run_series(&mut st, s0, steps, &snaps, dir, "bubble", |r, s| {
        let [x, y] = diagnostics::bubble_centroid(&s.phi, &mesh).with_context(|| format!("step {}", r.step))?;
        let [width, height] = diagnostics::bubble_extent(&s.phi, &mesh).with_context(|| format!("step {}", r.step))?;
        if r.step % 50 == 0 {
            log::info!("bubble step {} t={:.4}: centroid ({x:.5}, {y:.5})", r.step, r.time);
        }
        centroid.push(CentroidRow { step: r.step, time: r.time, x, y, width, height, energy: r.energy.total(), mass: r.mass });
        Ok(())
    })?;
    write_csv(&centroid, &dir.join(&cfg.output.centroid_csv))?;
    Ok(BubbleSummary { centroid, max_mass_drift: series.max_mass_drift() })
}

pub fn run_custom(cfg: &RunConfig) -> Result<CustomSummary> {
    let e = &cfg.experiment;
    let dt = cfg.time.dt;
    let dir = &cfg.output.directory;
    let params = cfg.params.to_params();
    let bcs = match e.boundary {
        BoundaryKind::Walls => BcSet::walls(),
        BoundaryKind::Manufactured => BcSet::manufactured(),
        BoundaryKind::Bubble => BcSet::bubble(e.field),
    };
    let sources = if e.manufactured_sources { Sources::Manufactured } else { Sources::None };
    let initial = match e.initial {
        InitialKind::Exact => InitialData::Exact,
        InitialKind::Spinodal => InitialData::Spinodal { psi0: e.psi0, amplitude: e.amplitude, seed: e.seed },
        InitialKind::Bubble => bubble_initial(cfg),
    };
    let steps = steps_to(cfg.time.t_end, 0.0, dt)?;
    let mut st = stepper(cfg, cfg.domain.nx, cfg.domain.ny, params, dt, bcs, sources)?;
    let s0 = st.initial_state(&initial, 0.0)?;
    let snaps = snapshot_steps(&cfg.output.snapshot_times, cfg.output.vtk_every, dt, steps);
    let series = run_series(&mut st, s0, steps, &snaps, dir, "custom", |_, _| Ok(()))?;
    write_csv(&series.energy, &dir.join(&cfg.output.energy_csv))?;
    write_csv(&series.mass, &dir.join(&cfg.output.mass_csv))?;
    let errors = match (e.initial, &series.final_state) {
        (InitialKind::Exact, Some(fin)) => {
            let rep = diagnostics::error_norms(fin, &ExactSolution::new(&params), &st.mesh, &st.spaces, fin.time, dt);
            write_csv(&[rep_row(&rep)], &dir.join(&cfg.output.errors_csv))?;
            Some(rep)
        }
        _ => None,
    };
    Ok(CustomSummary { series, errors })
}

#[derive(Serialize)]
struct ErrorRow {
    h: f64,
    dt: f64,
    phi_l2: f64,
    phi_h1: f64,
    vel_l2: f64,
    vel_h1: f64,
    mag_l2: f64,
    mag_h1: f64,
    pres_l2: f64,
}

fn rep_row(r: &ErrorReport) -> ErrorRow {
    ErrorRow {
        h: r.h,
        dt: r.dt,
        phi_l2: r.phi_l2,
        phi_h1: r.phi_h1,
        vel_l2: r.vel_l2,
        vel_h1: r.vel_h1,
        mag_l2: r.mag_l2,
        mag_h1: r.mag_h1,
        pres_l2: r.pres_l2,
    }
}

/// Output directory of a run, for callers that post-process the files.
pub fn output_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.directory.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converge_steps_divide_final_time() {
        for n in [8, 16, 32, 64] {
            let dt = converge_dt(n, 0.1);
            let h2 = 1.0 / (n * n) as f64;
            assert!(dt <= h2 * (1.0 + 1e-12));
            let k = 0.1 / dt;
            assert!((k - k.round()).abs() < 1e-9);
        }
        assert_eq!(converge_dt(8, 0.1), 0.1 / 7.0);
    }

    #[test]
    fn snapshot_steps_match_nearest_grid_time() {
        assert_eq!(snapshot_steps(&[0.0001, 0.05, 0.2, 1.0], 0, 0.001, 50), vec![0, 50]);
        assert_eq!(snapshot_steps(&[0.0001, 0.05, 0.2, 1.0], 0, 1.0, 50), vec![0, 1]);
        assert_eq!(snapshot_steps(&[], 20, 0.1, 50), vec![0, 20, 40]);
    }

    #[test]
    fn whole_step_check() {
        assert_eq!(steps_to(1.0, 0.0, 0.001).unwrap(), 1000);
        assert!(steps_to(0.1, 0.0, 0.03).is_err());
    }

    #[test]
    fn series_statistics() {
        let row = |step: usize, total: f64| EnergyRow {
            dt: 1.0,
            step,
            time: step as f64,
            kinetic: 0.0,
            magnetic: 0.0,
            gradient: 0.0,
            potential: total,
            total,
            identity_defect: -(step as f64) * 1e-12,
            newton_iterations: 1,
        };
        let s = RunSeries {
            energy: vec![row(0, 3.0), row(1, 2.0), row(2, 2.5)],
            mass: [1.0, 1.0 + 1e-12, 1.0 - 3e-12].iter().enumerate().map(|(step, &mass)| MassRow { dt: 1.0, step, time: 0.0, mass }).collect(),
            ..RunSeries::default()
        };
        assert_eq!(s.max_energy_increase(), 0.5);
        assert_eq!(s.max_identity_defect(), 2e-12);
        assert!((s.max_mass_drift() - 3e-12).abs() < 1e-15);
    }
}
