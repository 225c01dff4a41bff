//! Model coefficients, the double-well potential, the manufactured smooth solution
//! with its source terms, and initial data for the bundled experiments.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math::{cos, sin, sqrt, tanh};

/// Material and model constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
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
    /// Scaling of the capillary force `phi grad(omega)` in the momentum equation.
    pub lambda: f64,
    pub gravity: [f64; 2],
}

impl Default for PhysParams {
    /// All constants one, no gravity.
    fn default() -> Self {
        PhysParams {
            rho1: 1.0,
            rho2: 1.0,
            eta1: 1.0,
            eta2: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            m1: 1.0,
            m2: 1.0,
            mu: 1.0,
            gamma: 1.0,
            epsilon: 1.0,
            lambda: 1.0,
            gravity: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parameter `{}` must be strictly positive and finite (got {})", self.name, self.value)
    }
}

impl core::error::Error for ParamError {}

impl PhysParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamError { name, value });
            }
        }
        for (name, value) in [("lambda", self.lambda), ("gravity_x", self.gravity[0]), ("gravity_y", self.gravity[1])] {
            if !value.is_finite() {
                return Err(ParamError { name, value });
            }
        }
        Ok(())
    }

    /// `(fluid I, fluid II)` constants of a coefficient law.
    pub fn pair(&self, kind: CoeffKind) -> (f64, f64) {
        match kind {
            CoeffKind::Density => (self.rho1, self.rho2),
            CoeffKind::Viscosity => (self.eta1, self.eta2),
            CoeffKind::Conductivity => (self.sigma1, self.sigma2),
            CoeffKind::Mobility => (self.m1, self.m2),
        }
    }

    /// Slope of a coefficient law with respect to `phi`.
    pub fn slope(&self, kind: CoeffKind) -> f64 {
        let (a, b) = self.pair(kind);
        0.5 * (b - a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoeffKind {
    Density,
    Viscosity,
    Conductivity,
    Mobility,
}

impl CoeffKind {
    pub const ALL: [CoeffKind; 4] = [CoeffKind::Density, CoeffKind::Viscosity, CoeffKind::Conductivity, CoeffKind::Mobility];
}

/// Affine interpolation between the two fluid constants; `phi = -1` is fluid I.
#[inline]
pub fn coeff_eval(kind: CoeffKind, params: &PhysParams, phi: f64) -> f64 {
    let (a, b) = params.pair(kind);
    // Weighted form hits both endpoints exactly.
    0.5 * (1.0 - phi) * a + 0.5 * (1.0 + phi) * b
}

/// Clips to `[-1, 1]`.
#[inline]
pub fn cut_off(phi: f64) -> f64 {
    phi.clamp(-1.0, 1.0)
}

/// Derivative of [`cut_off`] (taken as 0 at the kinks).
#[inline]
pub fn cut_off_derivative(phi: f64) -> f64 {
    if phi.abs() < 1.0 { 1.0 } else { 0.0 }
}

/// All four coefficients evaluated at the cut-off of `phi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub rho: f64,
    pub eta: f64,
    pub sigma: f64,
    pub mobility: f64,
}

impl Coefficients {
    pub fn at(params: &PhysParams, phi: f64) -> Self {
        let c = cut_off(phi);
        let eval = |kind| {
            let (a, b) = params.pair(kind);
            // Guard against one-ulp excursions past the fluid constants.
            coeff_eval(kind, params, c).clamp(a.min(b), a.max(b))
        };
        Coefficients {
            rho: eval(CoeffKind::Density),
            eta: eval(CoeffKind::Viscosity),
            sigma: eval(CoeffKind::Conductivity),
            mobility: eval(CoeffKind::Mobility),
        }
    }

    pub fn get(&self, kind: CoeffKind) -> f64 {
        match kind {
            CoeffKind::Density => self.rho,
            CoeffKind::Viscosity => self.eta,
            CoeffKind::Conductivity => self.sigma,
            CoeffKind::Mobility => self.mobility,
        }
    }
}

/// Double-well potential `(phi^2 - 1)^2 / 4`.
#[inline]
pub fn double_well_f(phi: f64) -> f64 {
    let s = phi * phi - 1.0;
    0.25 * s * s
}

/// Derivative of the double well.
#[inline]
pub fn double_well_derivative(phi: f64) -> f64 {
    phi * phi * phi - phi
}

/// Convex-concave split of the double-well derivative: implicit cube, explicit linear part.
#[inline]
pub fn convex_split_f(phi_new: f64, phi_old: f64) -> f64 {
    phi_new * phi_new * phi_new - phi_old
}

/// Values and derivatives of the manufactured smooth solution on the unit square.
///
/// With `C(s) = cos^2(pi s)`, `S(s) = sin^2(pi s)`, `T(s) = sin(2 pi s)` and `c = cos t`:
/// `phi = c C(x) C(y)`, `u = c pi (S(x) T(y), -T(x) S(y))`, `p = c (2x-2)(2y-1)`,
/// `B = c (sin(pi x) cos(pi y), -sin(pi y) cos(pi x))`.
#[derive(Clone, Copy, Debug)]
pub struct ExactSolution {
    pub gamma: f64,
    pub epsilon: f64,
}

/// `C(s) = cos^2(pi s)` and its first four derivatives.
fn c_fn(s: f64) -> [f64; 5] {
    let (s2, c2) = (sin(2.0 * PI * s), cos(2.0 * PI * s));
    let c = cos(PI * s);
    [c * c, -PI * s2, -2.0 * PI * PI * c2, 4.0 * PI * PI * PI * s2, 8.0 * PI * PI * PI * PI * c2]
}

/// `S(s) = sin^2(pi s)` and its first two derivatives.
fn s_fn(s: f64) -> [f64; 3] {
    let sn = sin(PI * s);
    [sn * sn, PI * sin(2.0 * PI * s), 2.0 * PI * PI * cos(2.0 * PI * s)]
}

/// `T(s) = sin(2 pi s)` and its first two derivatives.
fn t_fn(s: f64) -> [f64; 3] {
    let w = 2.0 * PI;
    [sin(w * s), w * cos(w * s), -w * w * sin(w * s)]
}

/// Scalar with gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
}

impl ExactSolution {
    pub fn new(params: &PhysParams) -> Self {
        ExactSolution { gamma: params.gamma, epsilon: params.epsilon }
    }

    pub fn phi(&self, x: f64, y: f64, t: f64) -> Jet {
        let (cx, cy, c) = (c_fn(x), c_fn(y), cos(t));
        Jet { value: c * cx[0] * cy[0], grad: [c * cx[1] * cy[0], c * cx[0] * cy[1]] }
    }

    pub fn phi_t(&self, x: f64, y: f64, t: f64) -> f64 {
        -sin(t) * c_fn(x)[0] * c_fn(y)[0]
    }

    /// `(laplacian, grad laplacian, bilaplacian)` of phi.
    fn phi_higher(&self, x: f64, y: f64, t: f64) -> (f64, [f64; 2], f64) {
        let (cx, cy, c) = (c_fn(x), c_fn(y), cos(t));
        let lap = c * (cx[2] * cy[0] + cx[0] * cy[2]);
        let glap = [c * (cx[3] * cy[0] + cx[1] * cy[2]), c * (cx[2] * cy[1] + cx[0] * cy[3])];
        let bilap = c * (cx[4] * cy[0] + 2.0 * cx[2] * cy[2] + cx[0] * cy[4]);
        (lap, glap, bilap)
    }

    /// Continuous chemical potential `-gamma eps lap(phi) + (gamma/eps)(phi^3 - phi)`.
    pub fn omega(&self, x: f64, y: f64, t: f64) -> Jet {
        let (g, e) = (self.gamma, self.epsilon);
        let p = self.phi(x, y, t);
        let (lap, glap, _) = self.phi_higher(x, y, t);
        let fp = 3.0 * p.value * p.value - 1.0;
        Jet {
            value: -g * e * lap + g / e * double_well_derivative(p.value),
            grad: [-g * e * glap[0] + g / e * fp * p.grad[0], -g * e * glap[1] + g / e * fp * p.grad[1]],
        }
    }

    pub fn omega_laplacian(&self, x: f64, y: f64, t: f64) -> f64 {
        let (g, e) = (self.gamma, self.epsilon);
        let p = self.phi(x, y, t);
        let (lap, _, bilap) = self.phi_higher(x, y, t);
        let gp2 = p.grad[0] * p.grad[0] + p.grad[1] * p.grad[1];
        -g * e * bilap + g / e * ((3.0 * p.value * p.value - 1.0) * lap + 6.0 * p.value * gp2)
    }

    pub fn vel(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let c = PI * cos(t);
        [c * s_fn(x)[0] * t_fn(y)[0], -c * t_fn(x)[0] * s_fn(y)[0]]
    }

    pub fn vel_t(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let c = -PI * sin(t);
        [c * s_fn(x)[0] * t_fn(y)[0], -c * t_fn(x)[0] * s_fn(y)[0]]
    }

    /// `grad[i][j] = d_j u_i`.
    pub fn vel_grad(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let c = PI * cos(t);
        let (sx, sy, tx, ty) = (s_fn(x), s_fn(y), t_fn(x), t_fn(y));
        [[c * sx[1] * ty[0], c * sx[0] * ty[1]], [-c * tx[1] * sy[0], -c * tx[0] * sy[1]]]
    }

    pub fn vel_laplacian(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let c = PI * cos(t);
        let (sx, sy, tx, ty) = (s_fn(x), s_fn(y), t_fn(x), t_fn(y));
        [c * (sx[2] * ty[0] + sx[0] * ty[2]), -c * (tx[2] * sy[0] + tx[0] * sy[2])]
    }

    pub fn pres(&self, x: f64, y: f64, t: f64) -> Jet {
        let c = cos(t);
        Jet { value: c * (2.0 * x - 2.0) * (2.0 * y - 1.0), grad: [2.0 * c * (2.0 * y - 1.0), 2.0 * c * (2.0 * x - 2.0)] }
    }

    pub fn mag(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        exact_mag(x, y, t)
    }

    pub fn mag_grad(&self, x: f64, y: f64, t: f64) -> [[f64; 2]; 2] {
        let c = PI * cos(t);
        let (sx, cx, sy, cy) = (sin(PI * x), cos(PI * x), sin(PI * y), cos(PI * y));
        [[c * cx * cy, -c * sx * sy], [c * sx * sy, -c * cy * cx]]
    }

    /// Scalar curl `d_x B2 - d_y B1` with its gradient.
    pub fn current(&self, x: f64, y: f64, t: f64) -> Jet {
        let c = 2.0 * PI * cos(t);
        let (sx, cx, sy, cy) = (sin(PI * x), cos(PI * x), sin(PI * y), cos(PI * y));
        Jet { value: c * sx * sy, grad: [c * PI * cx * sy, c * PI * sx * cy] }
    }
}

/// Exact magnetic field, usable as a boundary-data function pointer.
pub fn exact_mag(x: f64, y: f64, t: f64) -> [f64; 2] {
    let c = cos(t);
    [c * sin(PI * x) * cos(PI * y), -c * sin(PI * y) * cos(PI * x)]
}

/// Source terms that make the smooth solution satisfy the model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Forcing {
    pub f_u: [f64; 2],
    pub f_b: [f64; 2],
    pub f_phi: f64,
    pub f_omega: f64,
}

/// Evaluates the sources at point `(x, y)` and time `t`.
///
/// The momentum source matches the energy-conserving discrete form of the inertia
/// terms: `rho u_t + (W.grad)u + (1/2)(rho_t + div W) u` with `W = rho u - a M grad(omega)`
/// and `a` the density slope. For a solenoidal `u` the bracket equals `a f_phi`.
pub fn manufactured_forcing(params: &PhysParams, x: f64, y: f64, t: f64) -> Forcing {
    let ex = ExactSolution::new(params);
    let phi = ex.phi(x, y, t);
    let om = ex.omega(x, y, t);
    let u = ex.vel(x, y, t);
    let gu = ex.vel_grad(x, y, t);
    let coef = Coefficients::at(params, phi.value);
    let h = cut_off_derivative(phi.value);
    let (a_rho, a_eta, a_sig, a_m) = (
        params.slope(CoeffKind::Density) * h,
        params.slope(CoeffKind::Viscosity) * h,
        params.slope(CoeffKind::Conductivity) * h,
        params.slope(CoeffKind::Mobility) * h,
    );

    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];

    let f_phi = ex.phi_t(x, y, t) + dot(u, phi.grad) - a_m * dot(phi.grad, om.grad) - coef.mobility * ex.omega_laplacian(x, y, t);

    let ut = ex.vel_t(x, y, t);
    let lap_u = ex.vel_laplacian(x, y, t);
    let gp = ex.pres(x, y, t).grad;
    let b = ex.mag(x, y, t);
    let gb = ex.mag_grad(x, y, t);
    let j = ex.current(x, y, t);
    let a_full = params.slope(CoeffKind::Density);
    let w = [
        coef.rho * u[0] - a_full * coef.mobility * om.grad[0],
        coef.rho * u[1] - a_full * coef.mobility * om.grad[1],
    ];
    let grad_eta = [a_eta * phi.grad[0], a_eta * phi.grad[1]];
    let mut f_u = [0.0; 2];
    for c in 0..2 {
        let d_row = [0.5 * (gu[c][0] + gu[0][c]), 0.5 * (gu[c][1] + gu[1][c])];
        f_u[c] = coef.rho * ut[c] + 0.5 * a_rho * f_phi * u[c] + dot(w, gu[c]) - coef.eta * lap_u[c] - 2.0 * dot(d_row, grad_eta)
            + gp[c]
            + params.lambda * phi.value * om.grad[c]
            - coef.rho * params.gravity[c];
    }
    f_u[0] += j.value * b[1] / params.mu;
    f_u[1] -= j.value * b[0] / params.mu;

    // B_t + curl(j / (mu sigma)) - curl(u x B), with curl s = (d_y s, -d_x s).
    let sig = coef.sigma;
    let grad_jsig = [
        (j.grad[0] - j.value * a_sig * phi.grad[0] / sig) / sig,
        (j.grad[1] - j.value * a_sig * phi.grad[1] / sig) / sig,
    ];
    let grad_s = [
        gu[0][0] * b[1] + u[0] * gb[1][0] - gu[1][0] * b[0] - u[1] * gb[0][0],
        gu[0][1] * b[1] + u[0] * gb[1][1] - gu[1][1] * b[0] - u[1] * gb[0][1],
    ];
    let b0 = exact_mag(x, y, 0.0);
    let bt = [-sin(t) * b0[0], -sin(t) * b0[1]];
    let f_b = [
        bt[0] + grad_jsig[1] / params.mu - grad_s[1],
        bt[1] - grad_jsig[0] / params.mu + grad_s[0],
    ];

    Forcing { f_u, f_b, f_phi, f_omega: 0.0 }
}

/// Initial data of the bundled experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialData {
    /// The manufactured solution at the initial time.
    Exact,
    /// Constant phase plus zero-mean bounded noise; quiescent flow, no field.
    Spinodal { psi0: f64, amplitude: f64, seed: u64 },
    /// Circular bubble of fluid II in fluid I at rest, uniform vertical field.
    Bubble { radius: f64, center: [f64; 2], field: [f64; 2] },
}

/// Zero-mean noise in `[-1, 1]` per node.
///
/// Uniform draws are shifted by their `weights`-weighted mean (the lumped mass gives
/// the exact discrete integral of a P1 field) and rescaled by `1 / (1 + |mean|)`, which
/// keeps every value inside `[-1, 1]` while preserving the zero integral.
pub fn zero_mean_noise(weights: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = weights
        .iter()
        .map(|_| {
            // 53 random bits mapped onto [-1, 1].
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            2.0 * u - 1.0
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mean = raw.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>() / total;
    let scale = 1.0 / (1.0 + mean.abs());
    raw.iter().map(|r| (r - mean) * scale).collect()
}

/// Diffuse circular interface: positive inside the bubble, zero on the circle.
pub fn bubble_profile(x: f64, y: f64, radius: f64, center: [f64; 2], epsilon: f64) -> f64 {
    let d = crate::math::hypot(x - center[0], y - center[1]);
    tanh((radius - d) / (sqrt(2.0) * epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_core::RngCore;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn coefficient_laws() {
        let p = PhysParams::default();
        assert_eq!(coeff_eval(CoeffKind::Density, &p, 0.3), 1.0);
        let p = PhysParams { rho2: 1000.0, ..PhysParams::default() };
        assert_eq!(coeff_eval(CoeffKind::Density, &p, 1.0), 1000.0);
        assert_eq!(coeff_eval(CoeffKind::Density, &p, 0.0), 500.5);
        let p = PhysParams {
            rho1: 2.0,
            rho2: 7.0,
            eta1: 0.5,
            eta2: 3.0,
            sigma1: 10.0,
            sigma2: 1.0,
            m1: 1e-3,
            m2: 4.0,
            ..PhysParams::default()
        };
        for kind in CoeffKind::ALL {
            let (a, b) = p.pair(kind);
            assert_eq!(coeff_eval(kind, &p, -1.0), a);
            assert_eq!(coeff_eval(kind, &p, 1.0), b);
        }
    }

    #[test]
    fn cut_off_examples() {
        assert_eq!(cut_off(1.5), 1.0);
        assert_eq!(cut_off(-0.3), -0.3);
        assert_eq!(cut_off(-2.0), -1.0);
    }

    #[test]
    fn potential_examples() {
        assert_eq!(double_well_f(1.0), 0.0);
        assert_eq!(double_well_f(0.0), 0.25);
        assert_eq!(double_well_f(2.0), 2.25);
        assert_eq!(convex_split_f(1.0, 1.0), 0.0);
        assert_eq!(convex_split_f(0.5, -1.0), 1.125);
    }

    #[test]
    fn derivative_of_double_well() {
        let d = 1e-4;
        for i in 0..=400 {
            let phi = -2.0 + 0.01 * i as f64;
            let fd = (double_well_f(phi + d) - double_well_f(phi - d)) / (2.0 * d);
            assert!((double_well_derivative(phi) - fd).abs() <= 1e-7);
        }
    }

    #[test]
    fn validation_names_the_parameter() {
        let p = PhysParams { epsilon: -0.01, ..PhysParams::default() };
        assert_eq!(p.validate().unwrap_err().name, "epsilon");
        assert!(PhysParams { gravity: [0.0, f64::NAN], ..PhysParams::default() }.validate().is_err());
        assert!(PhysParams::default().validate().is_ok());
    }

    #[test]
    fn exact_solution_examples() {
        let ex = ExactSolution::new(&PhysParams::default());
        let u = ex.vel(0.0, 0.5, 0.7);
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
        assert_eq!(ex.phi(0.0, 0.0, 0.0).value, 1.0);
    }

    /// Fourth-order central difference.
    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn exact_fields_are_solenoidal_and_satisfy_boundary_conditions() {
        let ex = ExactSolution::new(&PhysParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        for _ in 0..10 {
            let (x, y, t) = (r(), r(), r());
            let g = ex.vel_grad(x, y, t);
            assert!((g[0][0] + g[1][1]).abs() < 1e-12);
            let h = 1e-3;
            let div_fd = fd(|s| ex.vel(s, y, t)[0], x, h) + fd(|s| ex.vel(x, s, t)[1], y, h);
            assert!(div_fd.abs() < 1e-9);
            let divb = fd(|s| ex.mag(s, y, t)[0], x, h) + fd(|s| ex.mag(x, s, t)[1], y, h);
            assert!(divb.abs() < 1e-10);
            let gb = ex.mag_grad(x, y, t);
            assert!((gb[0][0] + gb[1][1]).abs() < 1e-12);
            // No-slip walls and zero normal derivative of phi.
            for (bx, by) in [(0.0, y), (1.0, y), (x, 0.0), (x, 1.0)] {
                let u = ex.vel(bx, by, t);
                assert!(u[0].abs() < 1e-14 && u[1].abs() < 1e-14);
            }
            assert!(ex.phi(0.0, y, t).grad[0].abs() < 1e-14 && ex.phi(x, 1.0, t).grad[1].abs() < 1e-13);
        }
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        let p = PhysParams { gamma: 0.7, epsilon: 0.9, ..PhysParams::default() };
        let ex = ExactSolution::new(&p);
        let (x, y, t, h) = (0.31, 0.67, 0.4, 1e-3);
        let tol = 1e-7;
        let phi = ex.phi(x, y, t);
        assert!(close(phi.grad[0], fd(|s| ex.phi(s, y, t).value, x, h), tol));
        assert!(close(phi.grad[1], fd(|s| ex.phi(x, s, t).value, y, h), tol));
        assert!(close(ex.phi_t(x, y, t), fd(|s| ex.phi(x, y, s).value, t, h), tol));
        let om = ex.omega(x, y, t);
        assert!(close(om.grad[0], fd(|s| ex.omega(s, y, t).value, x, h), 1e-6));
        assert!(close(om.grad[1], fd(|s| ex.omega(x, s, t).value, y, h), 1e-6));
        let lap_om = fd(|s| ex.omega(s, y, t).grad[0], x, h) + fd(|s| ex.omega(x, s, t).grad[1], y, h);
        assert!(close(ex.omega_laplacian(x, y, t), lap_om, 1e-6));
        let g = ex.vel_grad(x, y, t);
        for c in 0..2 {
            assert!(close(g[c][0], fd(|s| ex.vel(s, y, t)[c], x, h), tol));
            assert!(close(g[c][1], fd(|s| ex.vel(x, s, t)[c], y, h), tol));
            let lap = fd(|s| ex.vel_grad(s, y, t)[c][0], x, h) + fd(|s| ex.vel_grad(x, s, t)[c][1], y, h);
            assert!(close(ex.vel_laplacian(x, y, t)[c], lap, 1e-6));
            assert!(close(ex.vel_t(x, y, t)[c], fd(|s| ex.vel(x, y, s)[c], t, h), tol));
        }
        let gb = ex.mag_grad(x, y, t);
        for c in 0..2 {
            assert!(close(gb[c][0], fd(|s| ex.mag(s, y, t)[c], x, h), tol));
            assert!(close(gb[c][1], fd(|s| ex.mag(x, s, t)[c], y, h), tol));
        }
        let j = ex.current(x, y, t);
        assert!(close(j.value, gb[1][0] - gb[0][1], 1e-14));
        assert!(close(j.grad[0], fd(|s| ex.current(s, y, t).value, x, h), tol));
        let pg = ex.pres(x, y, t).grad;
        assert!(close(pg[1], fd(|s| ex.pres(x, s, t).value, y, h), tol));
    }

    /// Independent evaluation of the sources: every derivative by finite differences of
    /// the closed-form fields, with the flux expressions written in conservative form.
    fn forcing_by_differences(p: &PhysParams, x: f64, y: f64, t: f64) -> Forcing {
        let ex = ExactSolution::new(p);
        let h = 1e-3;
        let dx = |f: &dyn Fn(f64, f64) -> f64| fd(|s| f(s, y), x, h);
        let dy = |f: &dyn Fn(f64, f64) -> f64| fd(|s| f(x, s), y, h);
        let co = |x: f64, y: f64| Coefficients::at(p, ex.phi(x, y, t).value);
        let a = p.slope(CoeffKind::Density);
        let om = |x: f64, y: f64| ex.omega(x, y, t).value;
        let gom = |x: f64, y: f64| [fd(|s| om(s, y), x, h), fd(|s| om(x, s), y, h)];
        let phi = |x: f64, y: f64| ex.phi(x, y, t).value;
        let u = |x: f64, y: f64| ex.vel(x, y, t);

        // div(phi u) - div(M grad omega)
        let flux = |c: usize| move |x: f64, y: f64| phi(x, y) * u(x, y)[c] - co(x, y).mobility * gom(x, y)[c];
        let f_phi = fd(|s| ex.phi(x, y, s).value, t, h) + dx(&flux(0)) + dy(&flux(1));

        let rho = co(x, y).rho;
        let w = |x: f64, y: f64| {
            let g = gom(x, y);
            let c = co(x, y);
            [c.rho * u(x, y)[0] - a * c.mobility * g[0], c.rho * u(x, y)[1] - a * c.mobility * g[1]]
        };
        let div_w = dx(&|x, y| w(x, y)[0]) + dy(&|x, y| w(x, y)[1]);
        let rho_t = fd(|s| Coefficients::at(p, ex.phi(x, y, s).value).rho, t, h);
        let b = ex.mag(x, y, t);
        let cur = |x: f64, y: f64| {
            let bb = |x: f64, y: f64| ex.mag(x, y, t);
            fd(|s| bb(s, y)[1], x, h) - fd(|s| bb(x, s)[0], y, h)
        };
        let j = cur(x, y);
        let mut f_u = [0.0; 2];
        for c in 0..2 {
            let uc = |x: f64, y: f64| u(x, y)[c];
            let ww = w(x, y);
            let conv = ww[0] * dx(&uc) + ww[1] * dy(&uc);
            // div(2 eta D(u)) row c
            let tau = |k: usize| {
                move |x: f64, y: f64| {
                    let g = [
                        [fd(|s| u(s, y)[0], x, h), fd(|s| u(x, s)[0], y, h)],
                        [fd(|s| u(s, y)[1], x, h), fd(|s| u(x, s)[1], y, h)],
                    ];
                    co(x, y).eta * (g[c][k] + g[k][c])
                }
            };
            let visc = dx(&tau(0)) + dy(&tau(1));
            let pc = |x: f64, y: f64| ex.pres(x, y, t).value;
            let gp = if c == 0 { dx(&pc) } else { dy(&pc) };
            let ut = fd(|s| ex.vel(x, y, s)[c], t, h);
            let lorentz = if c == 0 { j * b[1] } else { -j * b[0] } / p.mu;
            f_u[c] = rho * ut + 0.5 * (rho_t + div_w) * u(x, y)[c] + conv - visc + gp + lorentz + p.lambda * phi(x, y) * gom(x, y)[c]
                - rho * p.gravity[c];
        }
        let jsig = |x: f64, y: f64| cur(x, y) / (p.mu * co(x, y).sigma);
        let cross = |x: f64, y: f64| {
            let (uu, bb) = (u(x, y), ex.mag(x, y, t));
            uu[0] * bb[1] - uu[1] * bb[0]
        };
        let g = |x: f64, y: f64| jsig(x, y) - cross(x, y);
        let f_b = [fd(|s| ex.mag(x, y, s)[0], t, h) + dy(&g), fd(|s| ex.mag(x, y, s)[1], t, h) - dx(&g)];
        Forcing { f_u, f_b, f_phi, f_omega: 0.0 }
    }

    fn check_forcing(p: &PhysParams, x: f64, y: f64, t: f64) {
        let a = manufactured_forcing(p, x, y, t);
        let b = forcing_by_differences(p, x, y, t);
        let scale = 1.0 + a.f_u[0].abs().max(a.f_u[1].abs());
        assert!((a.f_phi - b.f_phi).abs() < 1e-6 * (1.0 + a.f_phi.abs()), "f_phi {} vs {}", a.f_phi, b.f_phi);
        for c in 0..2 {
            assert!((a.f_u[c] - b.f_u[c]).abs() < 1e-6 * scale, "f_u[{c}] {} vs {}", a.f_u[c], b.f_u[c]);
            assert!((a.f_b[c] - b.f_b[c]).abs() < 1e-6 * (1.0 + a.f_b[c].abs()), "f_b[{c}] {} vs {}", a.f_b[c], b.f_b[c]);
        }
    }

    #[test]
    fn forcing_matches_difference_oracle_for_matched_constants() {
        check_forcing(&PhysParams::default(), 0.5, 0.5, 0.0);
        check_forcing(&PhysParams::default(), 0.23, 0.71, 0.05);
    }

    #[test]
    fn forcing_matches_difference_oracle_for_contrasting_constants() {
        let p = PhysParams {
            rho1: 1.0,
            rho2: 1e-3,
            eta1: 1.0,
            eta2: 2.0,
            sigma1: 3.0,
            sigma2: 1.5,
            m1: 0.5,
            m2: 1.2,
            mu: 0.8,
            gamma: 0.9,
            epsilon: 1.1,
            lambda: 2.0,
            gravity: [0.3, -1.0],
        };
        check_forcing(&p, 0.37, 0.21, 0.08);
        check_forcing(&p, 0.81, 0.44, 0.6);
    }

    #[test]
    fn forcing_factorizes_in_time_when_transport_terms_vanish() {
        // Along x = 1/2 the time factor enters only linearly or through sin/cos; compare
        // t and -t, for which cos agrees and sin flips: only the time-derivative parts
        // change sign.
        let p = PhysParams::default();
        let (x, y, t) = (0.3, 0.6, 0.4);
        let plus = manufactured_forcing(&p, x, y, t);
        let minus = manufactured_forcing(&p, x, y, -t);
        let ex = ExactSolution::new(&p);
        let dphi = ex.phi_t(x, y, t);
        assert!(close(plus.f_phi - minus.f_phi, 2.0 * dphi, 1e-12));
        let b = ex.mag(x, y, t);
        let bt = [-b[0] * libm::tan(t), -b[1] * libm::tan(t)];
        for c in 0..2 {
            assert!(close(plus.f_b[c] - minus.f_b[c], 2.0 * bt[c], 1e-12));
        }
    }

    #[test]
    fn noise_is_zero_mean_and_bounded() {
        let w: Vec<f64> = (0..97).map(|i| if i % 5 == 0 { 0.5 } else { 1.0 }).collect();
        let n = zero_mean_noise(&w, 42);
        let m: f64 = n.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!(m.abs() < 1e-13);
        assert!(n.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(n, zero_mean_noise(&w, 42));
        assert_ne!(n, zero_mean_noise(&w, 43));
    }

    #[test]
    fn bubble_profile_levels() {
        let c = [0.5, 0.3];
        assert!(bubble_profile(0.7, 0.3, 0.2, c, 0.01).abs() < 1e-12);
        assert!((bubble_profile(0.0, 1.4, 0.2, c, 0.01) + 1.0).abs() < 1e-6);
        assert!(bubble_profile(0.5, 0.3, 0.2, c, 0.01) > 0.999);
    }

    proptest! {
        #[test]
        fn cut_off_is_idempotent_and_lipschitz(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert_eq!(cut_off(cut_off(a)), cut_off(a));
            prop_assert!((cut_off(a) - cut_off(b)).abs() <= (a - b).abs());
            prop_assert!(cut_off(a).abs() <= 1.0);
        }

        #[test]
        fn convex_split_identity(a in -3.0f64..3.0, d in -3.0f64..3.0) {
            let lhs = convex_split_f(a, d) * (a - d);
            let rhs = double_well_f(a) - double_well_f(d)
                + 0.25 * (a * a - d * d).powi(2)
                + 0.5 * a * a * (a - d).powi(2)
                + 0.5 * (a - d).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert!(0.25 * (a * a - d * d).powi(2) + 0.5 * a * a * (a - d).powi(2) + 0.5 * (a - d).powi(2) >= 0.0);
        }

        #[test]
        fn coefficients_stay_in_bounds(phi in -5.0f64..5.0, r1 in 1e-3f64..1e3, r2 in 1e-3f64..1e3) {
            let p = PhysParams { rho1: r1, rho2: r2, ..PhysParams::default() };
            let c = Coefficients::at(&p, phi);
            prop_assert!(c.rho >= r1.min(r2) && c.rho <= r1.max(r2));
        }
    }
}
