//! Discrete energy, mass, energy-law bookkeeping, error norms, convergence rates and
//! bubble metrics. Every integral uses the same degree-5 rule and the same cut-off
//! conventions as the assembly in [`crate::scheme`].

use alloc::vec::Vec;
use core::fmt;

use crate::fem::{ElementGeometry, FieldVec, QuadRule, ScalarShapes, SpaceKind};
use crate::math::{ln, sq, sqrt};
use crate::mesh::Mesh;
use crate::physics::{self, Coefficients, ExactSolution, PhysParams};
use crate::scheme::{PointValues, Spaces, State};

/// The four parts of the discrete energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyComponents {
    /// `1/2 int rho(phi) |u|^2`
    pub kinetic: f64,
    /// `1/(2 mu) int |B|^2`
    pub magnetic: f64,
    /// `gamma eps / 2 int |grad phi|^2`
    pub gradient: f64,
    /// `gamma / (4 eps) int (phi^2 - 1)^2`
    pub potential: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.kinetic + self.magnetic + self.gradient + self.potential
    }
}

/// Terms of the one-step energy law. With no sources and unit capillary scaling,
/// `energy_change + dissipation()` vanishes at the exact discrete solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityTerms {
    pub energy_change: f64,
    /// `1/2 int rho^k |u - u^k|^2`
    pub kinetic_increment: f64,
    /// `2 dt int eta^k |D(u)|^2`
    pub viscous: f64,
    /// `1/(2 mu) int |B - B^k|^2`
    pub magnetic_increment: f64,
    /// `dt / mu^2 int (|curl B|^2 + |div B|^2) / sigma^k`
    pub ohmic: f64,
    /// `dt int M^k |grad omega|^2`
    pub mobility: f64,
    /// `gamma eps / 2 int |grad(phi - phi^k)|^2`
    pub gradient_increment: f64,
    /// `gamma/eps int [(phi^2 - phi_k^2)^2 / 4 + phi^2 (phi - phi^k)^2 / 2 + (phi - phi^k)^2 / 2]`
    pub potential_increment: f64,
}

impl IdentityTerms {
    /// Sum of the nonnegative dissipation and increment terms.
    pub fn dissipation(&self) -> f64 {
        self.kinetic_increment
            + self.viscous
            + self.magnetic_increment
            + self.ohmic
            + self.mobility
            + self.gradient_increment
            + self.potential_increment
    }

    /// Left side of the energy law; zero up to solver tolerance.
    pub fn defect(&self) -> f64 {
        self.energy_change + self.dissipation()
    }
}

/// Per-step summary emitted by the time loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyComponents,
    /// Integral of the phase field.
    pub mass: f64,
    /// Energy-law terms relative to the previous step (absent for the initial state).
    pub identity: Option<IdentityTerms>,
    pub newton_iterations: usize,
}

/// Per-field error norms against the smooth solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub dt: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    pub vel_l2: f64,
    pub vel_h1: f64,
    pub mag_l2: f64,
    pub mag_h1: f64,
    pub pres_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticsError {
    /// No quadrature point has a positive phase field.
    EmptyBubble,
}

impl fmt::Display for DiagnosticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagnosticsError::EmptyBubble => f.write_str("bubble vanished: phase field is nowhere positive"),
        }
    }
}

impl core::error::Error for DiagnosticsError {}

/// Calls `f(weight, point, values)` at every quadrature point of the mesh.
fn for_each_point(mesh: &Mesh, spaces: &Spaces, state: &State, mut f: impl FnMut(usize, f64, [f64; 2], &PointValues, &ScalarShapes)) {
    let quad = QuadRule::degree5();
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let p1 = ScalarShapes::eval(SpaceKind::P1Scalar, &geo, *l);
            let mini = ScalarShapes::eval(SpaceKind::MiniVector2, &geo, *l);
            let v = state.sample(spaces, t, &p1, &mini);
            f(t, geo.weight(w), geo.point(l), &v, &p1);
        }
    }
}

pub fn discrete_energy(state: &State, params: &PhysParams, mesh: &Mesh, spaces: &Spaces) -> EnergyComponents {
    let mut e = EnergyComponents::default();
    for_each_point(mesh, spaces, state, |_, w, _, v, _| {
        let rho = Coefficients::at(params, v.phi).rho;
        e.kinetic += w * 0.5 * rho * (v.u[0] * v.u[0] + v.u[1] * v.u[1]);
        e.magnetic += w * 0.5 / params.mu * (v.b[0] * v.b[0] + v.b[1] * v.b[1]);
        e.gradient += w * 0.5 * params.gamma * params.epsilon * (v.grad_phi[0] * v.grad_phi[0] + v.grad_phi[1] * v.grad_phi[1]);
        e.potential += w * params.gamma / params.epsilon * physics::double_well_f(v.phi);
    });
    e
}

/// Integrals of the P1 hat functions (lumped mass).
pub fn lumped_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = alloc::vec![0.0; mesh.num_nodes()];
    for t in 0..mesh.num_triangles() {
        let third = mesh.signed_area(t).abs() / 3.0;
        for &n in &mesh.triangles[t] {
            w[n] += third;
        }
    }
    w
}

/// Exact integral of a P1 field.
pub fn mass(phi: &FieldVec, mesh: &Mesh) -> f64 {
    lumped_weights(mesh).iter().zip(&phi.coeffs).map(|(w, c)| w * c).sum()
}

/// Terms of the energy law between consecutive states.
pub fn energy_identity(old: &State, new: &State, params: &PhysParams, mesh: &Mesh, spaces: &Spaces, dt: f64) -> IdentityTerms {
    let quad = QuadRule::degree5();
    let (g, e, mu) = (params.gamma, params.epsilon, params.mu);
    let mut it = IdentityTerms {
        energy_change: discrete_energy(new, params, mesh, spaces).total() - discrete_energy(old, params, mesh, spaces).total(),
        ..IdentityTerms::default()
    };
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let wq = geo.weight(w);
            let p1 = ScalarShapes::eval(SpaceKind::P1Scalar, &geo, *l);
            let mini = ScalarShapes::eval(SpaceKind::MiniVector2, &geo, *l);
            let a = new.sample(spaces, t, &p1, &mini);
            let k = old.sample(spaces, t, &p1, &mini);
            let ck = Coefficients::at(params, k.phi);
            let du = [a.u[0] - k.u[0], a.u[1] - k.u[1]];
            it.kinetic_increment += wq * 0.5 * ck.rho * (du[0] * du[0] + du[1] * du[1]);
            let gu = a.grad_u;
            let d01 = 0.5 * (gu[0][1] + gu[1][0]);
            it.viscous += wq * 2.0 * dt * ck.eta * (gu[0][0] * gu[0][0] + 2.0 * d01 * d01 + gu[1][1] * gu[1][1]);
            let db = [a.b[0] - k.b[0], a.b[1] - k.b[1]];
            it.magnetic_increment += wq * 0.5 / mu * (db[0] * db[0] + db[1] * db[1]);
            it.ohmic += wq * dt / (mu * mu * ck.sigma) * (a.curl_b * a.curl_b + a.div_b * a.div_b);
            it.mobility += wq * dt * ck.mobility * (a.grad_omega[0] * a.grad_omega[0] + a.grad_omega[1] * a.grad_omega[1]);
            let dg = [a.grad_phi[0] - k.grad_phi[0], a.grad_phi[1] - k.grad_phi[1]];
            it.gradient_increment += wq * 0.5 * g * e * (dg[0] * dg[0] + dg[1] * dg[1]);
            let dphi = a.phi - k.phi;
            let dsq = a.phi * a.phi - k.phi * k.phi;
            it.potential_increment += wq * g / e * (0.25 * dsq * dsq + 0.5 * a.phi * a.phi * dphi * dphi + 0.5 * dphi * dphi);
        }
    }
    it
}

/// Diagnostics for `new`, with energy-law terms when the previous state is given.
#[allow(clippy::too_many_arguments)]
pub fn step_record(
    step: usize,
    mesh: &Mesh,
    spaces: &Spaces,
    params: &PhysParams,
    dt: f64,
    old: Option<&State>,
    new: &State,
    newton_iterations: usize,
) -> DiagnosticsRecord {
    DiagnosticsRecord {
        step,
        time: new.time,
        energy: discrete_energy(new, params, mesh, spaces),
        mass: mass(&new.phi, mesh),
        identity: old.map(|o| energy_identity(o, new, params, mesh, spaces, dt)),
        newton_iterations,
    }
}

/// L2 and H1-seminorm errors against the smooth solution at time `t`.
pub fn error_norms(state: &State, exact: &ExactSolution, mesh: &Mesh, spaces: &Spaces, t: f64, dt: f64) -> ErrorReport {
    let mut r = ErrorReport { h: mesh.h, dt, ..ErrorReport::default() };
    let (mut p_err_int, mut p_err_sq) = (0.0, 0.0);
    for_each_point(mesh, spaces, state, |_, w, x, v, _| {
        let (px, py) = (x[0], x[1]);
        let phi = exact.phi(px, py, t);
        r.phi_l2 += w * sq(v.phi - phi.value);
        r.phi_h1 += w * (sq(v.grad_phi[0] - phi.grad[0]) + sq(v.grad_phi[1] - phi.grad[1]));
        let (u, gu) = (exact.vel(px, py, t), exact.vel_grad(px, py, t));
        let (b, gb) = (exact.mag(px, py, t), exact.mag_grad(px, py, t));
        for c in 0..2 {
            r.vel_l2 += w * sq(v.u[c] - u[c]);
            r.mag_l2 += w * sq(v.b[c] - b[c]);
            for d in 0..2 {
                r.vel_h1 += w * sq(v.grad_u[c][d] - gu[c][d]);
                r.mag_h1 += w * sq(v.grad_b[c][d] - gb[c][d]);
            }
        }
        let pe = v.p - exact.pres(px, py, t).value;
        p_err_int += w * pe;
        p_err_sq += w * pe * pe;
    });
    // Both pressures compared with zero mean.
    let area = mesh.rect.area();
    r.pres_l2 = sqrt((p_err_sq - p_err_int * p_err_int / area).max(0.0));
    for v in [&mut r.phi_l2, &mut r.phi_h1, &mut r.vel_l2, &mut r.vel_h1, &mut r.mag_l2, &mut r.mag_h1] {
        *v = sqrt(*v);
    }
    r
}

/// Observed orders between successive refinements; `None` where an error is not positive.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] > 0.0 && e[1] > 0.0 && h[0] > 0.0 && h[1] > 0.0 && h[0] != h[1] {
                Some(ln(e[0] / e[1]) / ln(h[0] / h[1]))
            } else {
                None
            }
        })
        .collect()
}

/// Centroid of the region where the phase field is positive.
///
/// `phi` is linear on each triangle, so the region is a union of clipped polygons
/// whose area and first moments are computed exactly; the centroid therefore moves
/// continuously with the nodal values.
pub fn bubble_centroid(phi: &FieldVec, mesh: &Mesh) -> Result<[f64; 2], DiagnosticsError> {
    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    let mut poly: Vec<[f64; 2]> = Vec::with_capacity(4);
    for tri in &mesh.triangles {
        poly.clear();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (fa, fb) = (phi.coeffs[a], phi.coeffs[b]);
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            if fa > 0.0 {
                poly.push(pa);
            }
            if (fa > 0.0) != (fb > 0.0) {
                let s = fa / (fa - fb);
                poly.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            }
        }
        // Shoelace area and first moments of the (convex) clipped polygon.
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let cross = p[0] * q[1] - q[0] * p[1];
            area += 0.5 * cross;
            mx += cross * (p[0] + q[0]) / 6.0;
            my += cross * (p[1] + q[1]) / 6.0;
        }
    }
    if area <= 0.0 {
        return Err(DiagnosticsError::EmptyBubble);
    }
    Ok([mx / area, my / area])
}

/// Width and height of the bounding box of the positive-phase region, measured on the
/// zero level set interpolated along mesh edges.
pub fn bubble_extent(phi: &FieldVec, mesh: &Mesh) -> Result<[f64; 2], DiagnosticsError> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut grow = |p: [f64; 2]| {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    };
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (fa, fb) = (phi.coeffs[a], phi.coeffs[b]);
            if fa > 0.0 {
                grow(mesh.nodes[a]);
            }
            if (fa > 0.0) != (fb > 0.0) {
                let s = fa / (fa - fb);
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                grow([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            }
        }
    }
    if lo[0] > hi[0] {
        return Err(DiagnosticsError::EmptyBubble);
    }
    Ok([hi[0] - lo[0], hi[1] - lo[1]])
}

/// Largest `|(div u, q_i)|` over all P1 test functions.
pub fn divergence_residual(state: &State, mesh: &Mesh, spaces: &Spaces) -> f64 {
    let mut r = alloc::vec![0.0; spaces.scalar.dof_count];
    for_each_point(mesh, spaces, state, |t, w, _, v, p1| {
        let div = v.grad_u[0][0] + v.grad_u[1][1];
        for (i, &d) in spaces.scalar.dofs(t).iter().enumerate() {
            r[d] += w * div * p1.values[i];
        }
    });
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `int (phi - mean)^2`: grows as the mixture separates.
pub fn phase_variance(phi: &FieldVec, mesh: &Mesh) -> f64 {
    let space = crate::fem::Space::new(SpaceKind::P1Scalar, mesh);
    let mean = mass(phi, mesh) / mesh.rect.area();
    let quad = QuadRule::degree5();
    let mut acc = 0.0;
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let (v, _) = phi.eval_in(&space, &geo, t, *l);
            acc += geo.weight(w) * sq(v[0] - mean);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{self, Space};
    use crate::mesh::{build_mesh, Rect};
    use proptest::prelude::*;

    fn setup(n: usize) -> (Mesh, Spaces) {
        let m = build_mesh(Rect::UNIT_SQUARE, n, n).unwrap();
        let s = Spaces::new(&m);
        (m, s)
    }

    #[test]
    fn energy_examples() {
        let (m, sp) = setup(4);
        let p = PhysParams::default();
        let mut s = State::zeros(&sp, 0.0);
        assert!((discrete_energy(&s, &p, &m, &sp).total() - 0.25).abs() < 1e-14);
        s.phi.coeffs.iter_mut().for_each(|c| *c = 1.0);
        assert!(discrete_energy(&s, &p, &m, &sp).total().abs() < 1e-15);
        s.phi.coeffs.iter_mut().for_each(|c| *c = 0.0);
        for n in 0..m.num_nodes() {
            s.mag.coeffs[sp.mag.node_dof(n, 0)] = 1.0;
        }
        let e = discrete_energy(&s, &p, &m, &sp);
        assert!((e.total() - 0.75).abs() < 1e-14 && (e.magnetic - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mass_examples() {
        let (m, sp) = setup(5);
        let c = FieldVec { kind: SpaceKind::P1Scalar, coeffs: alloc::vec![-0.05; sp.scalar.dof_count] };
        assert!((mass(&c, &m) + 0.05).abs() < 1e-16);
        let x = fem::interpolate(&sp.scalar, &m, &|x, _| [x, 0.0]);
        assert!((mass(&x, &m) - 0.5).abs() < 1e-15);
        let via_quad = fem::integrate_field(&x, &sp.scalar, &m)[0];
        assert!((via_quad - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eoc_examples() {
        let r = eoc(&[0.1, 0.025], &[1.0 / 8.0, 1.0 / 16.0]);
        assert!((r[0].unwrap() - 2.0).abs() < 1e-14);
        assert!((eoc(&[0.1, 0.05], &[0.5, 0.25])[0].unwrap() - 1.0).abs() < 1e-14);
        let paper = eoc(&[0.0193, 0.0049], &[1.0 / 32.0, 1.0 / 64.0])[0].unwrap();
        assert!((paper - 1.98).abs() < 0.005);
        assert_eq!(eoc(&[0.0, 0.1], &[0.5, 0.25]), alloc::vec![None]);
    }

    #[test]
    fn centroid_examples() {
        let m = build_mesh(Rect::new(0.0, 1.0, 0.0, 1.5).unwrap(), 32, 48).unwrap();
        let s = Space::new(SpaceKind::P1Scalar, &m);
        let c = [0.5, 0.3];
        let phi = fem::interpolate(&s, &m, &|x, y| [physics::bubble_profile(x, y, 0.2, c, 0.01), 0.0]);
        let g = bubble_centroid(&phi, &m).unwrap();
        assert!((g[0] - c[0]).abs() < m.h && (g[1] - c[1]).abs() < m.h);
        let ext = bubble_extent(&phi, &m).unwrap();
        assert!((ext[0] - 0.4).abs() < m.h && (ext[1] - 0.4).abs() < m.h);
        let one = FieldVec { kind: SpaceKind::P1Scalar, coeffs: alloc::vec![1.0; s.dof_count] };
        let g = bubble_centroid(&one, &m).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.75).abs() < 1e-12);
        // A half plane cut through cell diagonals: the exact centroid of x > 0.3.
        let ramp = fem::interpolate(&s, &m, &|x, _| [x - 0.3, 0.0]);
        let g = bubble_centroid(&ramp, &m).unwrap();
        assert!((g[0] - 0.65).abs() < 1e-12 && (g[1] - 0.75).abs() < 1e-12, "{g:?}");
        // Moving the interface moves the centroid, however small the shift.
        let shifted = fem::interpolate(&s, &m, &|x, _| [x - 0.3 - 1e-7, 0.0]);
        let g2 = bubble_centroid(&shifted, &m).unwrap();
        assert!(g2[0] > g[0] && (g2[0] - g[0] - 0.5e-7).abs() < 1e-12);
        let neg = FieldVec { kind: SpaceKind::P1Scalar, coeffs: alloc::vec![-1.0; s.dof_count] };
        assert_eq!(bubble_centroid(&neg, &m), Err(DiagnosticsError::EmptyBubble));
        assert_eq!(bubble_extent(&neg, &m), Err(DiagnosticsError::EmptyBubble));
    }

    fn interpolated_exact(m: &Mesh, sp: &Spaces, ex: &ExactSolution, t: f64) -> State {
        let mut s = State::zeros(sp, t);
        s.phi = fem::interpolate(&sp.scalar, m, &|x, y| [ex.phi(x, y, t).value, 0.0]);
        s.vel = fem::interpolate(&sp.vel, m, &|x, y| ex.vel(x, y, t));
        s.pres = fem::interpolate(&sp.scalar, m, &|x, y| [ex.pres(x, y, t).value, 0.0]);
        s.mag = fem::interpolate(&sp.mag, m, &|x, y| ex.mag(x, y, t));
        s
    }

    #[test]
    fn interpolation_errors_converge_at_optimal_rates() {
        let ex = ExactSolution::new(&PhysParams::default());
        let t = 0.1;
        let reports: Vec<ErrorReport> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let (m, sp) = setup(n);
                error_norms(&interpolated_exact(&m, &sp, &ex, t), &ex, &m, &sp, t, 0.0)
            })
            .collect();
        let hs: Vec<f64> = reports.iter().map(|r| r.h).collect();
        let rate = |f: fn(&ErrorReport) -> f64| eoc(&reports.iter().map(f).collect::<Vec<_>>(), &hs)[1].unwrap();
        for (name, r) in [("phi", rate(|r| r.phi_l2)), ("u", rate(|r| r.vel_l2)), ("B", rate(|r| r.mag_l2)), ("p", rate(|r| r.pres_l2))] {
            assert!((1.8..=2.2).contains(&r), "{name} L2 rate {r}");
        }
        for (name, r) in [("phi", rate(|r| r.phi_h1)), ("u", rate(|r| r.vel_h1)), ("B", rate(|r| r.mag_h1))] {
            assert!((0.8..=1.2).contains(&r), "{name} H1 rate {r}");
        }
    }

    #[test]
    fn identical_fields_have_zero_error_and_zero_identity_increments() {
        let (m, sp) = setup(4);
        let ex = ExactSolution::new(&PhysParams::default());
        let s = interpolated_exact(&m, &sp, &ex, 0.0);
        let it = energy_identity(&s, &s, &PhysParams::default(), &m, &sp, 0.1);
        assert_eq!(it.energy_change, 0.0);
        assert_eq!(it.kinetic_increment + it.magnetic_increment + it.gradient_increment + it.potential_increment, 0.0);
        assert!(it.viscous > 0.0 && it.ohmic > 0.0);
    }

    #[test]
    fn divergence_residual_vanishes_for_nodal_divergence_free_fields() {
        let (m, sp) = setup(4);
        let mut s = State::zeros(&sp, 0.0);
        s.vel = fem::interpolate(&sp.vel, &m, &|x, y| [1.0 + y, 2.0 - x]);
        assert!(divergence_residual(&s, &m, &sp) < 1e-14);
        s.vel = fem::interpolate(&sp.vel, &m, &|x, _| [x, 0.0]);
        assert!(divergence_residual(&s, &m, &sp) > 1e-3);
    }

    proptest! {
        #[test]
        fn mass_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let (m, sp) = setup(3);
            let n = sp.scalar.dof_count;
            let f = |k: u64| FieldVec {
                kind: SpaceKind::P1Scalar,
                coeffs: physics::zero_mean_noise(&alloc::vec![1.0; n], k).iter().map(|v| v + 0.3).collect(),
            };
            let (x, y) = (f(seed), f(seed + 1));
            let z = FieldVec { kind: SpaceKind::P1Scalar, coeffs: x.coeffs.iter().zip(&y.coeffs).map(|(p, q)| a * p + b * q).collect() };
            let lhs = mass(&z, &m);
            let rhs = a * mass(&x, &m) + b * mass(&y, &m);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn energy_components_are_nonnegative(seed in 0u64..500) {
            let (m, sp) = setup(3);
            let mut s = State::zeros(&sp, 0.0);
            let r = physics::zero_mean_noise(&alloc::vec![1.0; sp.vel.dof_count], seed);
            s.vel.coeffs.copy_from_slice(&r);
            s.phi.coeffs.iter_mut().zip(&r).for_each(|(p, v)| *p = 2.0 * v);
            s.mag.coeffs.iter_mut().zip(r.iter().rev()).for_each(|(p, v)| *p = *v);
            let e = discrete_energy(&s, &PhysParams { rho1: 1e-3, ..PhysParams::default() }, &m, &sp);
            prop_assert!(e.kinetic >= 0.0 && e.magnetic >= 0.0 && e.gradient >= 0.0 && e.potential >= 0.0);
        }
    }
}
