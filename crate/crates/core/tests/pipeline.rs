//! End-to-end runs through the public API: mesh → stepper → diagnostics.

use chmhd_core::diagnostics::{self, DiagnosticsRecord};
use chmhd_core::mesh::build_mesh;
use chmhd_core::physics::{ExactSolution, InitialData};
use chmhd_core::scheme::Sources;
use chmhd_core::{BcSet, PhysParams, Rect, SolverConfig, State, Stepper};

fn record_run(st: &mut Stepper, s0: State, t_end: f64) -> (State, Vec<DiagnosticsRecord>, f64) {
    let mut recs = Vec::new();
    let mut div = 0.0f64;
    let (mesh, spaces) = (st.mesh.clone(), st.spaces.clone());
    let fin = st
        .run(s0, t_end, |r, s| {
            if r.step > 0 {
                div = div.max(diagnostics::divergence_residual(s, &mesh, &spaces));
            }
            recs.push(*r);
        })
        .unwrap();
    (fin, recs, div)
}

#[test]
fn density_contrast_mixture_is_stable_and_conservative() {
    let mesh = build_mesh(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), 8, 8).unwrap();
    let params = PhysParams { rho2: 1e-3, epsilon: 0.05, gamma: 0.05, ..PhysParams::default() };
    let mut st = Stepper::new(mesh, params, SolverConfig::new(0.05), BcSet::walls(), Sources::None).unwrap();
    let s0 = st.initial_state(&InitialData::Spinodal { psi0: -0.05, amplitude: 0.5, seed: 11 }, 0.0).unwrap();
    let (_, recs, div) = record_run(&mut st, s0, 0.5);
    assert_eq!(recs.len(), 11);
    let e0 = recs[0].energy.total();
    for w in recs.windows(2) {
        assert!(w[1].energy.total() <= w[0].energy.total() + 1e-12 * e0.max(1.0));
        assert!((w[1].mass - recs[0].mass).abs() < 1e-12);
        let id = w[1].identity.unwrap();
        assert!(id.defect().abs() < 1e-8 * e0.max(1.0), "{id:?}");
    }
    assert!(div < 1e-10, "{div:e}");
}

#[test]
fn manufactured_solution_is_tracked_and_refinement_helps() {
    let err_at = |n: usize| {
        let mesh = build_mesh(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(), n, n).unwrap();
        let params = PhysParams::default();
        let dt = 0.1 / (n * n) as f64;
        let mut st = Stepper::new(mesh, params, SolverConfig::new(dt), BcSet::manufactured(), Sources::Manufactured).unwrap();
        let s0 = st.initial_state(&InitialData::Exact, 0.0).unwrap();
        let steps = 4;
        let (fin, _, _) = record_run(&mut st, s0, steps as f64 * dt);
        let exact = ExactSolution::new(&st.params);
        diagnostics::error_norms(&fin, &exact, &st.mesh, &st.spaces, fin.time, dt)
    };
    let (coarse, fine) = (err_at(4), err_at(8));
    assert!(fine.phi_l2 < coarse.phi_l2 && fine.vel_l2 < coarse.vel_l2 && fine.mag_l2 < coarse.mag_l2, "{coarse:?} {fine:?}");
    assert!(fine.phi_l2.is_finite() && fine.phi_l2 < 0.1);
}

#[test]
fn bubble_centroid_moves_up() {
    let mesh = build_mesh(Rect::new(0.0, 1.0, 0.0, 1.5).unwrap(), 16, 24).unwrap();
    let params = PhysParams { rho1: 9.0, epsilon: 0.04, gravity: [0.0, -10.0], ..PhysParams::default() };
    let mut st = Stepper::new(mesh, params, SolverConfig::new(0.01), BcSet::bubble([0.0, 1.0]), Sources::None).unwrap();
    let s0 = st.initial_state(&InitialData::Bubble { radius: 0.2, center: [0.5, 0.3], field: [0.0, 1.0] }, 0.0).unwrap();
    let y0 = diagnostics::bubble_centroid(&s0.phi, &st.mesh).unwrap()[1];
    let (fin, recs, _) = record_run(&mut st, s0, 0.2);
    let y1 = diagnostics::bubble_centroid(&fin.phi, &st.mesh).unwrap()[1];
    assert!(y1 > y0, "{y0} -> {y1}");
    assert!(recs.iter().all(|r| (r.mass - recs[0].mass).abs() < 1e-11));
}
