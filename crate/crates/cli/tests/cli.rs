use std::fs;
use std::path::Path;
use std::process::Command;

use chmhd::experiments::{CentroidRow, EnergyRow, MassRow, Summary};
use chmhd::output::read_csv;
use chmhd::{parse_config, preset_with_overrides, ExperimentKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chmhd"))
}

fn dir_override(dir: &Path) -> String {
    format!("output.directory=\"{}\"", dir.display())
}

#[test]
fn run_with_config_file_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = format!(
        "[domain]\nnx = 6\nny = 6\n[time]\ndt = 0.01\nt_end = 0.03\n[experiment]\nkind = \"custom\"\ninitial = \"spinodal\"\n\
         amplitude = 0.1\n[output]\ndirectory = \"{}\"\nvtk_every = 1\n",
        out.display()
    );
    let path = tmp.path().join("run.toml");
    fs::write(&path, cfg).unwrap();
    let res = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let energy: Vec<EnergyRow> = read_csv(&out.join("energy.csv")).unwrap();
    let mass: Vec<MassRow> = read_csv(&out.join("mass.csv")).unwrap();
    assert_eq!(energy.len(), 4);
    assert_eq!(mass.len(), 4);
    assert!(energy.windows(2).all(|w| w[1].total <= w[0].total));
    for k in 0..4 {
        let vtk = fs::read_to_string(out.join(format!("custom_{k:06}.vtk"))).unwrap();
        assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(vtk.contains("POINTS 49 double") && vtk.contains("CELLS 72 288"));
    }
    // The metadata records the resolved configuration, defaults included.
    let meta: toml::Table = fs::read_to_string(out.join("metadata.toml")).unwrap().parse().unwrap();
    let cfg = &meta["config"];
    assert_eq!(cfg["solver"]["newton_max"].as_integer(), Some(20));
    assert_eq!(cfg["params"]["rho1"].as_float(), Some(1.0));
    assert_eq!(cfg["experiment"]["kind"].as_str(), Some("custom"));
}

#[test]
fn invalid_config_exits_with_machine_readable_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[experiment]\nkind = \"spinodal\"\n[params]\nepsilon = -0.01\n").unwrap();
    let res = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    let line = err.lines().find(|l| l.starts_with("error: ")).expect("error line");
    assert!(line.starts_with("error: kind=config message=\""), "{line}");
    assert!(line.contains("params.epsilon"), "{line}");

    let res = bin().args(["bubble", "--override", "params.rho3=1"]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("rho3"));

    let res = bin().args(["run", "--config", "/nonexistent/cfg.toml"]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("error: kind=io"));
}

#[test]
fn converge_shortcut_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["converge", "--override", "experiment.levels=[2, 4]", "--override", "experiment.density_ratios=[1.0]"])
        .args(["--override", "experiment.t_final=0.05", "--override"])
        .arg(dir_override(tmp.path()))
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(tmp.path().join("errors.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("density_ratio,n,h,dt,phi_l2"));
    assert_eq!(lines.count(), 2);
    // The console table carries the rate columns.
    assert!(String::from_utf8_lossy(&res.stdout).contains("rate"));
}

#[test]
fn bubble_rises_on_a_coarse_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset_with_overrides(
        ExperimentKind::Bubble,
        // A wider interface than the default, resolved by the coarse mesh.
        &[
            "domain.nx=16".into(),
            "domain.ny=24".into(),
            "params.epsilon=0.04".into(),
            "time.dt=0.01".into(),
            "time.t_end=0.2".into(),
            dir_override(tmp.path()),
        ],
    )
    .unwrap();
    let Summary::Bubble(sum) = chmhd::run(&cfg).unwrap() else { panic!("bubble summary expected") };
    assert_eq!(sum.centroid.len(), 21);
    let rows: Vec<CentroidRow> = read_csv(&tmp.path().join("centroid.csv")).unwrap();
    assert_eq!(rows, sum.centroid);
    assert!(rows.windows(2).all(|w| w[1].y > w[0].y), "{rows:?}");
    assert!(sum.max_mass_drift < 1e-10);
    assert!(tmp.path().join("bubble_000000.vtk").exists());
}

fn variance_at(mobility: f64) -> f64 {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nkind = \"spinodal\"\ndt_sweep = [0.01]\nsteps = 20\n[params]\nm1 = {mobility}\nm2 = {mobility}\n\
         [output]\ndirectory = \"{}\"\nsnapshot_times = []\n",
        tmp.path().display()
    );
    let Summary::Spinodal(sum) = chmhd::run(&parse_config(&text, &[]).unwrap()).unwrap() else { panic!() };
    sum.runs[0].phase_variance
}

#[test]
fn mobility_changes_coarsening_speed() {
    // Phase variance at t = 0.2 of otherwise identical mixtures.
    let fast = variance_at(1.0);
    let slow = variance_at(0.001);
    let rel = (fast - slow).abs() / fast.max(slow);
    assert!(rel > 0.1, "variances {fast:e} vs {slow:e}");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let run = |dir: &Path| {
        let cfg = preset_with_overrides(
            ExperimentKind::Spinodal,
            &["domain.nx=8".into(), "domain.ny=8".into(), "experiment.steps=5".into(), "experiment.amplitude=0.2".into(), dir_override(dir)],
        )
        .unwrap();
        chmhd::run(&cfg).unwrap();
        (fs::read(dir.join("energy.csv")).unwrap(), fs::read(dir.join("mass.csv")).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
}
