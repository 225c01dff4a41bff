//! The fully discrete, semi-implicit time stepper.
//!
//! Each step solves the coupled nonlinear system for `(phi, omega, u, p, B)` at the
//! new time level with Newton's method. Coefficients (density, viscosity, conductivity,
//! mobility) are frozen at the old level and evaluated at the cut-off phase field, the
//! double-well derivative is split convex-implicit / concave-explicit, and the inertia
//! terms use the form
//!
//! ```text
//! ((rho^{k+1} + rho^k)/2 u - rho^k u^k, v)/dt + ((W.grad)u, v)/2 - ((W.grad)v, u)/2,
//! W = rho^k u - a M^k grad(omega),
//! ```
//!
//! with `rho^{k+1}` the density of the cut-off new phase field and `a` the density
//! slope. Testing with `v = u` produces the kinetic energy difference plus a
//! nonnegative increment and no convective contribution, so the discrete energy law
//! holds exactly at Newton convergence.
//!
//! Unknown vector layout: `[phi (N) | omega (N) | u (2 (N + T)) | p (N) | B (2N) | l]`,
//! where `N` counts nodes, `T` triangles, and `l` is the multiplier enforcing a zero
//! pressure mean.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::fem::{self, ElementGeometry, FemError, FieldVec, QuadRule, ScalarShapes, Space, SpaceKind};
use crate::mesh::{Mesh, Side};
use crate::physics::{self, CoeffKind, Coefficients, Forcing, InitialData, PhysParams};
use crate::sparse::{gmres, BlockPreconditioner, CompressedMatrix, DirectSolver, SparseError};

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeError {
    InvalidConfig(&'static str),
    InvalidParams(physics::ParamError),
    Fem(FemError),
    Solve(SparseError),
    /// A non-finite value appeared in the named block of the residual.
    NonFinite { term: &'static str },
    NewtonDiverged { history: Vec<f64> },
    /// `t_end` is not reachable with whole steps.
    TimeGrid { t_end: f64, dt: f64 },
    Step { index: usize, source: Box<SchemeError> },
}

impl fmt::Display for SchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeError::InvalidConfig(what) => write!(f, "invalid solver configuration: {what}"),
            SchemeError::InvalidParams(e) => write!(f, "{e}"),
            SchemeError::Fem(e) => write!(f, "{e}"),
            SchemeError::Solve(e) => write!(f, "linear solve failed: {e}"),
            SchemeError::NonFinite { term } => write!(f, "non-finite value in the {term} equation"),
            SchemeError::NewtonDiverged { history } => {
                write!(f, "Newton did not converge in {} iterations; residuals:", history.len())?;
                for r in history {
                    write!(f, " {r:.3e}")?;
                }
                Ok(())
            }
            SchemeError::TimeGrid { t_end, dt } => write!(f, "final time {t_end} is not a whole number of steps of {dt}"),
            SchemeError::Step { index, source } => write!(f, "step {index}: {source}"),
        }
    }
}

impl core::error::Error for SchemeError {}

impl From<FemError> for SchemeError {
    fn from(e: FemError) -> Self {
        SchemeError::Fem(e)
    }
}

impl From<SparseError> for SchemeError {
    fn from(e: SparseError) -> Self {
        SchemeError::Solve(e)
    }
}

/// The finite element spaces of the five unknowns.
#[derive(Clone, Debug)]
pub struct Spaces {
    /// P1, shared by phase field, chemical potential and pressure.
    pub scalar: Space,
    pub vel: Space,
    pub mag: Space,
}

impl Spaces {
    pub fn new(mesh: &Mesh) -> Self {
        Spaces {
            scalar: Space::new(SpaceKind::P1Scalar, mesh),
            vel: Space::new(SpaceKind::MiniVector2, mesh),
            mag: Space::new(SpaceKind::P1Vector2, mesh),
        }
    }
}

/// All discrete fields at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub phi: FieldVec,
    pub omega: FieldVec,
    pub vel: FieldVec,
    pub pres: FieldVec,
    pub mag: FieldVec,
    pub time: f64,
}

impl State {
    pub fn zeros(spaces: &Spaces, time: f64) -> Self {
        State {
            phi: FieldVec::zeros(&spaces.scalar),
            omega: FieldVec::zeros(&spaces.scalar),
            vel: FieldVec::zeros(&spaces.vel),
            pres: FieldVec::zeros(&spaces.scalar),
            mag: FieldVec::zeros(&spaces.mag),
            time,
        }
    }

    /// Field values at one quadrature point.
    pub fn sample(&self, spaces: &Spaces, t: usize, p1: &ScalarShapes, mini: &ScalarShapes) -> PointValues {
        let (phi, gphi) = self.phi.eval_shapes(&spaces.scalar, t, p1);
        let (omega, gomega) = self.omega.eval_shapes(&spaces.scalar, t, p1);
        let (u, gu) = self.vel.eval_shapes(&spaces.vel, t, mini);
        let (p, _) = self.pres.eval_shapes(&spaces.scalar, t, p1);
        let (b, gb) = self.mag.eval_shapes(&spaces.mag, t, p1);
        PointValues {
            phi: phi[0],
            grad_phi: gphi[0],
            omega: omega[0],
            grad_omega: gomega[0],
            u,
            grad_u: gu,
            p: p[0],
            b,
            grad_b: gb,
            curl_b: gb[1][0] - gb[0][1],
            div_b: gb[0][0] + gb[1][1],
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PointValues {
    pub phi: f64,
    pub grad_phi: [f64; 2],
    pub omega: f64,
    pub grad_omega: [f64; 2],
    pub u: [f64; 2],
    pub grad_u: [[f64; 2]; 2],
    pub p: f64,
    pub b: [f64; 2],
    pub grad_b: [[f64; 2]; 2],
    pub curl_b: f64,
    pub div_b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    /// Absolute tolerance on the residual infinity norm.
    pub newton_tol: f64,
    /// Relative tolerance on the Newton increment.
    pub newton_rtol: f64,
    pub newton_max: usize,
    /// Halve the Newton step while the residual grows.
    pub line_search: bool,
    /// Start each step's Newton iteration from the linear extrapolation of the two
    /// previous states instead of the last one.
    pub predictor: bool,
    pub linear: LinearSolver,
}

/// How each Newton correction is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearSolver {
    /// Sparse LU of the full Jacobian every iteration.
    Direct,
    /// GMRES preconditioned by block Gauss–Seidel over (phase, flow, magnetic field),
    /// with the block factorizations kept across iterations and steps.
    Krylov(KrylovConfig),
    /// `Direct` up to the given number of unknowns, `Krylov` (defaults) above.
    Auto(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovConfig {
    pub restart: usize,
    pub max_iter: usize,
    /// Refactor the preconditioner once a solve needs more iterations than this.
    pub refactor_after: usize,
    /// Linear residual target relative to the current Newton residual.
    pub forcing: f64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { restart: 60, max_iter: 400, refactor_after: 25, forcing: 1e-4 }
    }
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        SolverConfig {
            dt,
            newton_tol: 1e-10,
            newton_rtol: 1e-8,
            newton_max: 20,
            line_search: true,
            predictor: false,
            linear: LinearSolver::Auto(4000),
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SchemeError::InvalidConfig("dt must be positive"));
        }
        if !(self.newton_tol > 0.0 && self.newton_rtol > 0.0) {
            return Err(SchemeError::InvalidConfig("Newton tolerances must be positive"));
        }
        if self.newton_max == 0 {
            return Err(SchemeError::InvalidConfig("newton_max must be at least 1"));
        }
        if let LinearSolver::Krylov(k) = self.linear {
            if k.restart == 0 || k.max_iter == 0 {
                return Err(SchemeError::InvalidConfig("Krylov restart and max_iter must be at least 1"));
            }
            if !(k.forcing > 0.0 && k.forcing < 1.0) {
                return Err(SchemeError::InvalidConfig("Krylov forcing term must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Boundary data: a constant or a function of `(x, y, t)`.
#[derive(Clone, Copy, Debug)]
pub enum BcValue {
    Const([f64; 2]),
    Func(fn(f64, f64, f64) -> [f64; 2]),
}

impl BcValue {
    pub const ZERO: BcValue = BcValue::Const([0.0, 0.0]);

    pub fn eval(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self {
            BcValue::Const(v) => *v,
            BcValue::Func(f) => f(x, y, t),
        }
    }
}

/// Prescription for a vector field on one side.
#[derive(Clone, Copy, Debug)]
pub enum VectorBc {
    /// Nothing imposed strongly.
    Natural,
    /// Both components.
    Full(BcValue),
    /// One component (0 or 1) taken from the data.
    Component(usize, BcValue),
    /// The tangential component of the data (`n x B = n x g`).
    Tangential(BcValue),
}

/// Strong boundary conditions for velocity and magnetic field, per side in the order
/// `Left, Right, Bottom, Top`. Phase field and chemical potential always carry natural
/// (zero-flux) conditions.
#[derive(Clone, Copy, Debug)]
pub struct BcSet {
    pub vel: [VectorBc; 4],
    pub mag: [VectorBc; 4],
}

/// Sides in decreasing priority when two prescriptions meet at a corner.
pub const SIDE_PRECEDENCE: [Side; 4] = [Side::Bottom, Side::Top, Side::Left, Side::Right];

fn side_index(s: Side) -> usize {
    match s {
        Side::Left => 0,
        Side::Right => 1,
        Side::Bottom => 2,
        Side::Top => 3,
    }
}

impl BcSet {
    /// No-slip walls and a vanishing magnetic field on the boundary.
    pub fn walls() -> Self {
        BcSet { vel: [VectorBc::Full(BcValue::ZERO); 4], mag: [VectorBc::Full(BcValue::ZERO); 4] }
    }

    /// No-slip walls and the magnetic field of the smooth test solution.
    pub fn manufactured() -> Self {
        BcSet { vel: [VectorBc::Full(BcValue::ZERO); 4], mag: [VectorBc::Full(BcValue::Func(physics::exact_mag)); 4] }
    }

    /// Rising-bubble container: no-slip floor and lid, free slip on the side walls,
    /// tangential magnetic field matching the uniform field `b`.
    pub fn bubble(b: [f64; 2]) -> Self {
        let slip = VectorBc::Component(0, BcValue::ZERO);
        let noslip = VectorBc::Full(BcValue::ZERO);
        let tang = VectorBc::Tangential(BcValue::Const(b));
        BcSet { vel: [slip, slip, noslip, noslip], mag: [tang; 4] }
    }

    pub fn side(&self, field: BcField, s: Side) -> VectorBc {
        match field {
            BcField::Vel => self.vel[side_index(s)],
            BcField::Mag => self.mag[side_index(s)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcField {
    Vel,
    Mag,
}

/// One strongly imposed unknown.
#[derive(Clone, Copy, Debug)]
pub struct Constraint {
    /// Index into the global unknown vector.
    pub dof: usize,
    pub node: usize,
    pub component: usize,
    pub value: BcValue,
}

impl Constraint {
    pub fn value_at(&self, mesh: &Mesh, t: f64) -> f64 {
        let p = mesh.nodes[self.node];
        self.value.eval(p[0], p[1], t)[self.component]
    }
}

/// Offsets of each field inside the global unknown vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
    pub omega: usize,
    pub vel: usize,
    pub pres: usize,
    pub mag: usize,
    pub multiplier: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(spaces: &Spaces) -> Self {
        let n = spaces.scalar.dof_count;
        let vel = 2 * n;
        let pres = vel + spaces.vel.dof_count;
        let mag = pres + n;
        let multiplier = mag + spaces.mag.dof_count;
        Layout { nodes: n, omega: n, vel, pres, mag, multiplier, len: multiplier + 1 }
    }

    pub fn pack(&self, s: &State, multiplier: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len);
        for f in [&s.phi, &s.omega, &s.vel, &s.pres, &s.mag] {
            x.extend_from_slice(&f.coeffs);
        }
        x.push(multiplier);
        x
    }

    pub fn unpack(&self, x: &[f64], time: f64) -> State {
        let field = |kind, a: usize, b: usize| FieldVec { kind, coeffs: x[a..b].to_vec() };
        State {
            phi: field(SpaceKind::P1Scalar, 0, self.omega),
            omega: field(SpaceKind::P1Scalar, self.omega, self.vel),
            vel: field(SpaceKind::MiniVector2, self.vel, self.pres),
            pres: field(SpaceKind::P1Scalar, self.pres, self.mag),
            mag: field(SpaceKind::P1Vector2, self.mag, self.multiplier),
            time,
        }
    }
}

/// Source terms added to the equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sources {
    None,
    /// Forcing that makes the smooth test solution exact.
    Manufactured,
}

/// Range of every coefficient seen at quadrature points since the last reset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientBounds {
    /// Indexed like [`CoeffKind::ALL`].
    pub min: [f64; 4],
    pub max: [f64; 4],
    pub samples: u64,
}

impl Default for CoefficientBounds {
    fn default() -> Self {
        CoefficientBounds { min: [f64::INFINITY; 4], max: [f64::NEG_INFINITY; 4], samples: 0 }
    }
}

impl CoefficientBounds {
    fn observe(&mut self, c: &Coefficients) {
        for (k, kind) in CoeffKind::ALL.iter().enumerate() {
            let v = c.get(*kind);
            self.min[k] = self.min[k].min(v);
            self.max[k] = self.max[k].max(v);
        }
        self.samples += 1;
    }

    fn observe_density(&mut self, rho: f64) {
        self.min[0] = self.min[0].min(rho);
        self.max[0] = self.max[0].max(rho);
    }

    /// Whether every observed value lies between the two fluid constants.
    pub fn within(&self, params: &PhysParams) -> bool {
        CoeffKind::ALL.iter().enumerate().all(|(k, kind)| {
            let (a, b) = params.pair(*kind);
            self.samples == 0 || (self.min[k] >= a.min(b) && self.max[k] <= a.max(b))
        })
    }

    pub fn merge(&mut self, other: &CoefficientBounds) {
        for k in 0..4 {
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
        self.samples += other.samples;
    }
}

/// Result of one converged time step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    /// Linear solves performed.
    pub iterations: usize,
    /// Residual infinity norms, one per assembled iterate.
    pub history: Vec<f64>,
}

// Local unknowns per triangle.
const NL: usize = 23;
const PHI: usize = 0;
const OM: usize = 3;
const VEL: usize = 6;
const PRES: usize = 14;
const MAG: usize = 17;

fn block_of(i: usize) -> usize {
    match i {
        0..=2 => 0,
        3..=5 => 1,
        6..=13 => 2,
        14..=16 => 3,
        _ => 4,
    }
}

// Which field blocks (phi, omega, u, p, B) each equation depends on.
const COUPLED: [[bool; 5]; 5] = [
    [true, true, true, false, false],
    [true, true, false, false, false],
    [true, true, true, true, true],
    [false, false, true, true, false],
    [false, false, true, false, true],
];

/// Time stepper owning the mesh, spaces, sparsity pattern and factorization cache.
pub struct Stepper {
    pub mesh: Mesh,
    pub spaces: Spaces,
    pub params: PhysParams,
    pub cfg: SolverConfig,
    pub bcs: BcSet,
    pub sources: Sources,
    pub layout: Layout,
    pub constraints: Vec<Constraint>,
    /// Coefficient ranges observed during assembly.
    pub bounds: CoefficientBounds,
    quad: QuadRule,
    local_to_global: Vec<[usize; NL]>,
    pattern: CompressedMatrix,
    /// CSR position of each coupled local pair, `u32::MAX` otherwise.
    elem_map: Vec<u32>,
    /// CSR positions of `(p_i, l)` and `(l, p_i)` per node.
    mult_col: Vec<usize>,
    mult_row: Vec<usize>,
    constrained: Vec<bool>,
    solver: DirectSolver,
    precond: Option<BlockPreconditioner>,
    forcing_cache: Vec<Forcing>,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper")
            .field("unknowns", &self.layout.len)
            .field("nnz", &self.pattern.nnz())
            .field("params", &self.params)
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl Stepper {
    pub fn new(mesh: Mesh, params: PhysParams, cfg: SolverConfig, bcs: BcSet, sources: Sources) -> Result<Self, SchemeError> {
        params.validate().map_err(SchemeError::InvalidParams)?;
        cfg.validate()?;
        let spaces = Spaces::new(&mesh);
        let layout = Layout::new(&spaces);
        let local_to_global: Vec<[usize; NL]> = (0..mesh.num_triangles())
            .map(|t| {
                let tri = mesh.triangles[t];
                let mut g = [0usize; NL];
                for k in 0..3 {
                    g[PHI + k] = tri[k];
                    g[OM + k] = layout.omega + tri[k];
                    g[PRES + k] = layout.pres + tri[k];
                }
                for (k, d) in spaces.vel.dofs(t).iter().enumerate() {
                    g[VEL + k] = layout.vel + d;
                }
                for (k, d) in spaces.mag.dofs(t).iter().enumerate() {
                    g[MAG + k] = layout.mag + d;
                }
                g
            })
            .collect();
        let (pattern, elem_map, mult_col, mult_row) = build_pattern(&layout, &local_to_global);
        let constraints = resolve_constraints(&mesh, &spaces, &layout, &bcs);
        let mut constrained = alloc::vec![false; layout.len];
        for c in &constraints {
            constrained[c.dof] = true;
        }
        log::debug!(
            "stepper: {} unknowns, {} nonzeros, {} constrained",
            layout.len,
            pattern.nnz(),
            constraints.len()
        );
        Ok(Stepper {
            mesh,
            spaces,
            params,
            cfg,
            bcs,
            sources,
            layout,
            constraints,
            bounds: CoefficientBounds::default(),
            quad: QuadRule::degree5(),
            local_to_global,
            pattern,
            elem_map,
            mult_col,
            mult_row,
            constrained,
            solver: DirectSolver::new(),
            precond: None,
            forcing_cache: Vec::new(),
        })
    }

    pub fn num_unknowns(&self) -> usize {
        self.layout.len
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    /// Projects initial data onto the discrete spaces.
    pub fn initial_state(&mut self, data: &InitialData, t0: f64) -> Result<State, SchemeError> {
        let mesh = &self.mesh;
        let sp = &self.spaces;
        let mut s = State::zeros(sp, t0);
        let pinned = |field: BcField| -> Vec<(usize, f64)> {
            let (off, len) = match field {
                BcField::Vel => (self.layout.vel, sp.vel.dof_count),
                BcField::Mag => (self.layout.mag, sp.mag.dof_count),
            };
            self.constraints
                .iter()
                .filter(|c| c.dof >= off && c.dof < off + len)
                .map(|c| (c.dof - off, c.value_at(mesh, t0)))
                .collect()
        };
        match *data {
            InitialData::Exact => {
                let ex = physics::ExactSolution::new(&self.params);
                s.phi = fem::l2_project(&sp.scalar, mesh, &|x, y| [ex.phi(x, y, t0).value, 0.0])?;
                s.omega = fem::l2_project(&sp.scalar, mesh, &|x, y| [ex.omega(x, y, t0).value, 0.0])?;
                s.vel = fem::l2_project_constrained(&sp.vel, mesh, &|x, y| ex.vel(x, y, t0), &pinned(BcField::Vel))?;
                s.pres = fem::l2_project(&sp.scalar, mesh, &|x, y| [ex.pres(x, y, t0).value, 0.0])?;
                s.mag = fem::l2_project_constrained(&sp.mag, mesh, &|x, y| ex.mag(x, y, t0), &pinned(BcField::Mag))?;
            }
            InitialData::Spinodal { psi0, amplitude, seed } => {
                let noise = physics::zero_mean_noise(&diagnostics::lumped_weights(mesh), seed);
                s.phi.coeffs = noise.iter().map(|r| psi0 + amplitude * r).collect();
                s.omega = chemical_potential(&s.phi, mesh, sp, &self.params)?;
                s.mag = fem::l2_project_constrained(&sp.mag, mesh, &|_, _| [0.0, 0.0], &pinned(BcField::Mag))?;
            }
            InitialData::Bubble { radius, center, field } => {
                let eps = self.params.epsilon;
                s.phi = fem::l2_project(&sp.scalar, mesh, &|x, y| [physics::bubble_profile(x, y, radius, center, eps), 0.0])?;
                s.omega = chemical_potential(&s.phi, mesh, sp, &self.params)?;
                s.mag = fem::l2_project_constrained(&sp.mag, mesh, &|_, _| field, &pinned(BcField::Mag))?;
            }
        }
        let mean = fem::integrate_field(&s.pres, &sp.scalar, mesh)[0] / mesh.rect.area();
        for p in &mut s.pres.coeffs {
            *p -= mean;
        }
        Ok(s)
    }

    /// Integral of the phase-equation source at time `t` (zero without sources).
    ///
    /// Summing the phase rows gives the discrete mass balance
    /// `mass(k+1) - mass(k) = dt * phase_source(t_{k+1})`.
    pub fn phase_source(&self, t: f64) -> f64 {
        if self.sources == Sources::None {
            return 0.0;
        }
        let mut acc = 0.0;
        for e in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, e);
            for (l, &w) in self.quad.points.iter().zip(&self.quad.weights) {
                let x = geo.point(l);
                acc += geo.weight(w) * physics::manufactured_forcing(&self.params, x[0], x[1], t).f_phi;
            }
        }
        acc
    }

    fn refresh_forcing(&mut self, t_new: f64) {
        self.forcing_cache.clear();
        if self.sources == Sources::None {
            return;
        }
        for t in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, t);
            for l in &self.quad.points {
                let x = geo.point(l);
                self.forcing_cache.push(physics::manufactured_forcing(&self.params, x[0], x[1], t_new));
            }
        }
    }

    /// Residual and (optionally) Jacobian of the step equations at iterate `x`, without
    /// boundary conditions. The Jacobian is written into `values` on the fixed pattern.
    fn assemble_raw(&mut self, old: &State, x: &[f64], values: Option<&mut [f64]>) -> Vec<f64> {
        let p = self.params;
        let dt = self.cfg.dt;
        let a_rho = p.slope(CoeffKind::Density);
        let (ge, g_over_e) = (p.gamma * p.epsilon, p.gamma / p.epsilon);
        let inv_mu = 1.0 / p.mu;
        let mult = x[self.layout.multiplier];
        let want_jac = values.is_some();
        let mut jac_values = values;
        if let Some(v) = jac_values.as_deref_mut() {
            v.iter_mut().for_each(|e| *e = 0.0);
        }
        let mut res = alloc::vec![0.0; self.layout.len];
        let nq = self.quad.len();
        let mut bounds = self.bounds;

        for t in 0..self.mesh.num_triangles() {
            let geo = ElementGeometry::of(&self.mesh, t);
            let g = &self.local_to_global[t];
            let mut xl = [0.0; NL];
            for i in 0..NL {
                xl[i] = x[g[i]];
            }
            let mut rl = [0.0; NL];
            let mut jl = [[0.0; NL]; NL];
            let mut mult_local = [0.0; 3];

            for q in 0..nq {
                let l = self.quad.points[q];
                let wq = geo.weight(self.quad.weights[q]);
                let ps = ScalarShapes::eval(SpaceKind::P1Scalar, &geo, l);
                let ms = ScalarShapes::eval(SpaceKind::MiniVector2, &geo, l);
                let (pv, pg, mv, mg) = (&ps.values, &ps.grads, &ms.values, &ms.grads);

                // Iterate.
                let mut phi = 0.0;
                let mut gphi = [0.0; 2];
                let mut om = 0.0;
                let mut gom = [0.0; 2];
                let mut pr = 0.0;
                let mut b = [0.0; 2];
                let mut gb = [[0.0; 2]; 2];
                for k in 0..3 {
                    phi += xl[PHI + k] * pv[k];
                    om += xl[OM + k] * pv[k];
                    pr += xl[PRES + k] * pv[k];
                    for d in 0..2 {
                        gphi[d] += xl[PHI + k] * pg[k][d];
                        gom[d] += xl[OM + k] * pg[k][d];
                    }
                    for c in 0..2 {
                        let bc = xl[MAG + 3 * c + k];
                        b[c] += bc * pv[k];
                        gb[c][0] += bc * pg[k][0];
                        gb[c][1] += bc * pg[k][1];
                    }
                }
                let mut u = [0.0; 2];
                let mut gu = [[0.0; 2]; 2];
                for c in 0..2 {
                    for k in 0..4 {
                        let uc = xl[VEL + 4 * c + k];
                        u[c] += uc * mv[k];
                        gu[c][0] += uc * mg[k][0];
                        gu[c][1] += uc * mg[k][1];
                    }
                }
                let curl_b = gb[1][0] - gb[0][1];
                let div_b = gb[0][0] + gb[1][1];
                let div_u = gu[0][0] + gu[1][1];

                // Old level.
                let (ov, _) = old.phi.eval_shapes(&self.spaces.scalar, t, &ps);
                let (uk, _) = old.vel.eval_shapes(&self.spaces.vel, t, &ms);
                let (bk, _) = old.mag.eval_shapes(&self.spaces.mag, t, &ps);
                let phik = ov[0];
                let ck = Coefficients::at(&p, phik);
                let rho_new = physics::coeff_eval(CoeffKind::Density, &p, physics::cut_off(phi));
                let h_new = physics::cut_off_derivative(phi);
                bounds.observe(&ck);
                bounds.observe_density(rho_new);
                debug_assert!(
                    CoeffKind::ALL.iter().all(|k| {
                        let (lo, hi) = p.pair(*k);
                        let v = ck.get(*k);
                        v >= lo.min(hi) && v <= lo.max(hi)
                    }) && rho_new >= p.rho1.min(p.rho2)
                        && rho_new <= p.rho1.max(p.rho2),
                    "coefficient outside the fluid constants"
                );

                let am = a_rho * ck.mobility;
                let w = [ck.rho * u[0] - am * gom[0], ck.rho * u[1] - am * gom[1]];
                let rho_avg = 0.5 * (rho_new + ck.rho);
                let nu_b = inv_mu / ck.sigma;
                let cross = u[0] * bk[1] - u[1] * bk[0];
                let f = if self.forcing_cache.is_empty() { Forcing::default() } else { self.forcing_cache[t * nq + q] };

                // Phase and chemical potential rows.
                for i in 0..3 {
                    let psi = pv[i];
                    let gpsi = pg[i];
                    rl[PHI + i] += wq
                        * ((phi - phik) / dt * psi - phik * (u[0] * gpsi[0] + u[1] * gpsi[1]) + ck.mobility * (gom[0] * gpsi[0] + gom[1] * gpsi[1])
                            - f.f_phi * psi);
                    rl[OM + i] += wq
                        * (om * psi - ge * (gphi[0] * gpsi[0] + gphi[1] * gpsi[1]) - g_over_e * (phi * phi * phi - phik) * psi - f.f_omega * psi);
                    rl[PRES + i] += wq * (-div_u * psi + mult * psi);
                    mult_local[i] += wq * psi;
                }
                // Momentum rows.
                for c in 0..2 {
                    let lorentz_dir = if c == 0 { bk[1] } else { -bk[0] };
                    for i in 0..4 {
                        let s = mv[i];
                        let gs = mg[i];
                        let d_row = [gu[c][0] + gu[0][c], gu[c][1] + gu[1][c]];
                        let visc = ck.eta * (d_row[0] * gs[0] + d_row[1] * gs[1]);
                        let conv = 0.5 * ((w[0] * gu[c][0] + w[1] * gu[c][1]) * s - (w[0] * gs[0] + w[1] * gs[1]) * u[c]);
                        rl[VEL + 4 * c + i] += wq
                            * ((rho_avg * u[c] - ck.rho * uk[c]) / dt * s + conv + visc - pr * gs[c]
                                + inv_mu * curl_b * lorentz_dir * s
                                + p.lambda * phik * gom[c] * s
                                - ck.rho * p.gravity[c] * s
                                - f.f_u[c] * s);
                    }
                }
                // Induction rows.
                for c in 0..2 {
                    for i in 0..3 {
                        let r = pv[i];
                        let curl_c = if c == 0 { -pg[i][1] } else { pg[i][0] };
                        rl[MAG + 3 * c + i] += wq
                            * ((b[c] - bk[c]) / dt * r + nu_b * (curl_b * curl_c + div_b * pg[i][c]) - cross * curl_c - f.f_b[c] * r);
                    }
                }
                // Multiplier row.
                res[self.layout.multiplier] += wq * pr;

                if !want_jac {
                    continue;
                }

                // Phase rows.
                for i in 0..3 {
                    let psi = pv[i];
                    let gpsi = pg[i];
                    for m in 0..3 {
                        jl[PHI + i][PHI + m] += wq * pv[m] * psi / dt;
                        jl[PHI + i][OM + m] += wq * ck.mobility * (pg[m][0] * gpsi[0] + pg[m][1] * gpsi[1]);
                        jl[OM + i][OM + m] += wq * pv[m] * psi;
                        jl[OM + i][PHI + m] += wq
                            * (-ge * (pg[m][0] * gpsi[0] + pg[m][1] * gpsi[1]) - g_over_e * 3.0 * phi * phi * pv[m] * psi);
                    }
                    for d in 0..2 {
                        for m in 0..4 {
                            jl[PHI + i][VEL + 4 * d + m] += wq * (-phik * mv[m] * gpsi[d]);
                            jl[PRES + i][VEL + 4 * d + m] += wq * (-mg[m][d] * psi);
                        }
                    }
                }
                // Momentum rows.
                for c in 0..2 {
                    let lorentz_dir = if c == 0 { bk[1] } else { -bk[0] };
                    for i in 0..4 {
                        let s = mv[i];
                        let gs = mg[i];
                        let row = VEL + 4 * c + i;
                        let w_gs = w[0] * gs[0] + w[1] * gs[1];
                        for m in 0..3 {
                            jl[row][PHI + m] += wq * 0.5 * a_rho * h_new * pv[m] * u[c] * s / dt;
                            let gchi = pg[m];
                            jl[row][OM + m] += wq
                                * (0.5 * am * (-(gchi[0] * gu[c][0] + gchi[1] * gu[c][1]) * s + (gchi[0] * gs[0] + gchi[1] * gs[1]) * u[c])
                                    + p.lambda * phik * gchi[c] * s);
                            jl[row][PRES + m] += wq * (-pv[m] * gs[c]);
                            for e in 0..2 {
                                let curl_e = if e == 0 { -pg[m][1] } else { pg[m][0] };
                                jl[row][MAG + 3 * e + m] += wq * inv_mu * curl_e * lorentz_dir * s;
                            }
                        }
                        for d in 0..2 {
                            for m in 0..4 {
                                let tv = mv[m];
                                let gt = mg[m];
                                let mut v = 0.5 * (ck.rho * tv * gu[c][d] * s - ck.rho * tv * gs[d] * u[c]) + ck.eta * gt[c] * gs[d];
                                if c == d {
                                    v += rho_avg * tv * s / dt
                                        + 0.5 * ((w[0] * gt[0] + w[1] * gt[1]) * s - tv * w_gs)
                                        + ck.eta * (gt[0] * gs[0] + gt[1] * gs[1]);
                                }
                                jl[row][VEL + 4 * d + m] += wq * v;
                            }
                        }
                    }
                }
                // Induction rows.
                for c in 0..2 {
                    for i in 0..3 {
                        let r = pv[i];
                        let curl_c = if c == 0 { -pg[i][1] } else { pg[i][0] };
                        let row = MAG + 3 * c + i;
                        for e in 0..2 {
                            for m in 0..3 {
                                let curl_e = if e == 0 { -pg[m][1] } else { pg[m][0] };
                                let mut v = nu_b * (curl_e * curl_c + pg[m][e] * pg[i][c]);
                                if e == c {
                                    v += pv[m] * r / dt;
                                }
                                jl[row][MAG + 3 * e + m] += wq * v;
                            }
                        }
                        for m in 0..4 {
                            jl[row][VEL + m] += wq * (-mv[m] * bk[1] * curl_c);
                            jl[row][VEL + 4 + m] += wq * (mv[m] * bk[0] * curl_c);
                        }
                    }
                }
            }

            for i in 0..NL {
                res[g[i]] += rl[i];
            }
            for i in 0..3 {
                let node = self.mesh.triangles[t][i];
                if let Some(v) = jac_values.as_deref_mut() {
                    v[self.mult_col[node]] += mult_local[i];
                    v[self.mult_row[node]] += mult_local[i];
                }
            }
            if let Some(v) = jac_values.as_deref_mut() {
                let map = &self.elem_map[t * NL * NL..(t + 1) * NL * NL];
                for i in 0..NL {
                    for j in 0..NL {
                        let pos = map[i * NL + j];
                        if pos != u32::MAX {
                            v[pos as usize] += jl[i][j];
                        }
                    }
                }
            }
        }
        self.bounds = bounds;
        res
    }

    fn check_finite(&self, r: &[f64]) -> Result<(), SchemeError> {
        let l = &self.layout;
        let blocks: [(&'static str, usize, usize); 6] = [
            ("phase", 0, l.omega),
            ("chemical potential", l.omega, l.vel),
            ("momentum", l.vel, l.pres),
            ("continuity", l.pres, l.mag),
            ("induction", l.mag, l.multiplier),
            ("pressure mean", l.multiplier, l.len),
        ];
        for (term, a, b) in blocks {
            if r[a..b].iter().any(|v| !v.is_finite()) {
                return Err(SchemeError::NonFinite { term });
            }
        }
        Ok(())
    }

    /// Replaces constrained rows by `x_d - g_d` and eliminates the constrained columns.
    fn apply_constraints(&self, x: &[f64], t_new: f64, values: Option<&mut [f64]>, res: &mut [f64]) {
        let mut rd = alloc::vec![0.0; self.layout.len];
        for c in &self.constraints {
            rd[c.dof] = x[c.dof] - c.value_at(&self.mesh, t_new);
        }
        let pat = &self.pattern;
        match values {
            Some(v) => {
                for r in 0..pat.nrows {
                    let (a, b) = (pat.row_ptr[r], pat.row_ptr[r + 1]);
                    if self.constrained[r] {
                        for k in a..b {
                            v[k] = if pat.col_idx[k] == r { 1.0 } else { 0.0 };
                        }
                        res[r] = rd[r];
                    } else {
                        for k in a..b {
                            let col = pat.col_idx[k];
                            if self.constrained[col] {
                                res[r] -= v[k] * rd[col];
                                v[k] = 0.0;
                            }
                        }
                    }
                }
            }
            None => {
                for c in &self.constraints {
                    res[c.dof] = rd[c.dof];
                }
            }
        }
    }

    /// Jacobian and residual of the step from `old` at the iterate `iterate`, with
    /// constrained rows replaced and columns eliminated. A Newton update solves
    /// `J d = -r`.
    pub fn assemble_newton_system(&mut self, old: &State, iterate: &State, multiplier: f64) -> Result<(CompressedMatrix, Vec<f64>), SchemeError> {
        let t_new = old.time + self.cfg.dt;
        self.refresh_forcing(t_new);
        let x = self.layout.pack(iterate, multiplier);
        let mut values = alloc::vec![0.0; self.pattern.nnz()];
        let mut res = self.assemble_raw(old, &x, Some(&mut values));
        self.check_finite(&res)?;
        self.apply_constraints(&x, t_new, Some(&mut values), &mut res);
        let mut jac = self.pattern.clone();
        jac.values = values;
        Ok((jac, res))
    }

    /// Unconstrained residual and Jacobian at a raw unknown vector (for verification).
    pub fn residual_and_jacobian(&mut self, old: &State, x: &[f64]) -> (Vec<f64>, CompressedMatrix) {
        self.refresh_forcing(old.time + self.cfg.dt);
        let mut values = alloc::vec![0.0; self.pattern.nnz()];
        let res = self.assemble_raw(old, x, Some(&mut values));
        let mut jac = self.pattern.clone();
        jac.values = values;
        (res, jac)
    }

    /// Unconstrained residual at a raw unknown vector.
    pub fn residual(&mut self, old: &State, x: &[f64]) -> Vec<f64> {
        self.refresh_forcing(old.time + self.cfg.dt);
        self.assemble_raw(old, x, None)
    }

    /// Advances one step from `old` with Newton's method started at `old`.
    pub fn newton_step(&mut self, old: &State) -> Result<StepOutcome, SchemeError> {
        self.newton_step_from(old, None)
    }

    /// Advances one step from `old`, starting Newton at `guess` when given. Boundary
    /// values are imposed on the starting point either way.
    pub fn newton_step_from(&mut self, old: &State, guess: Option<&State>) -> Result<StepOutcome, SchemeError> {
        let t_new = old.time + self.cfg.dt;
        self.refresh_forcing(t_new);
        let mut x = self.layout.pack(guess.unwrap_or(old), 0.0);
        for c in &self.constraints {
            x[c.dof] = c.value_at(&self.mesh, t_new);
        }
        let n = self.layout.len;
        let mut values = alloc::vec![0.0; self.pattern.nnz()];
        let mut res = self.assemble_raw(old, &x, Some(&mut values));
        self.check_finite(&res)?;
        self.apply_constraints(&x, t_new, Some(&mut values), &mut res);
        let mut rnorm = inf_norm(&res);
        let mut history = alloc::vec![rnorm];
        let mut jac = self.pattern.clone();

        for it in 0..self.cfg.newton_max {
            if rnorm <= self.cfg.newton_tol {
                return Ok(StepOutcome { state: self.layout.unpack(&x, t_new), iterations: it, history });
            }
            jac.values.copy_from_slice(&values);
            let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = self.linear_solve(&jac, &rhs, rnorm)?;

            let mut alpha = 1.0;
            let (x_new, res_new, r_new) = loop {
                let trial: Vec<f64> = (0..n).map(|i| x[i] + alpha * delta[i]).collect();
                let mut r = self.assemble_raw(old, &trial, Some(&mut values));
                self.check_finite(&r)?;
                self.apply_constraints(&trial, t_new, Some(&mut values), &mut r);
                let rn = inf_norm(&r);
                if !self.cfg.line_search || rn < rnorm || alpha < 1.0 / 64.0 {
                    break (trial, r, rn);
                }
                log::debug!("newton: residual {rn:.3e} >= {rnorm:.3e}, halving step");
                alpha *= 0.5;
            };
            let step = alpha * inf_norm(&delta);
            x = x_new;
            res = res_new;
            rnorm = r_new;
            history.push(rnorm);
            if rnorm <= self.cfg.newton_tol || step <= self.cfg.newton_rtol * (1.0 + inf_norm(&x)) {
                return Ok(StepOutcome { state: self.layout.unpack(&x, t_new), iterations: it + 1, history });
            }
        }
        Err(SchemeError::NewtonDiverged { history })
    }

    fn linear_mode(&self) -> LinearSolver {
        match self.cfg.linear {
            LinearSolver::Auto(limit) if self.layout.len <= limit => LinearSolver::Direct,
            LinearSolver::Auto(_) => LinearSolver::Krylov(KrylovConfig::default()),
            other => other,
        }
    }

    /// Solves `J d = rhs` for a Newton correction; `rnorm` is the current residual.
    fn linear_solve(&mut self, jac: &CompressedMatrix, rhs: &[f64], rnorm: f64) -> Result<Vec<f64>, SchemeError> {
        let kc = match self.linear_mode() {
            LinearSolver::Krylov(k) => k,
            _ => return Ok(self.solver.solve(jac, rhs)?),
        };
        let tol = (kc.forcing * rnorm).max(0.5 * self.cfg.newton_tol);
        let mut fresh = false;
        if self.precond.as_ref().is_none_or(|p| !p.is_factored()) {
            self.refactor(jac)?;
            fresh = true;
        }
        loop {
            let pc = self.precond.as_ref().expect("preconditioner");
            let mut d = alloc::vec![0.0; rhs.len()];
            let stats = gmres(
                |v, out| {
                    for (r, o) in out.iter_mut().enumerate() {
                        *o = jac.row(r).map(|(c, a)| a * v[c]).sum();
                    }
                },
                |r| pc.apply(jac, r),
                rhs,
                &mut d,
                tol,
                kc.restart,
                kc.max_iter,
            )?;
            log::trace!("gmres: {} iterations, residual {:.3e}", stats.iterations, stats.residual);
            if stats.converged && (fresh || stats.iterations <= kc.refactor_after) {
                self.balance_mass(jac, rhs, &mut d);
                return Ok(d);
            }
            if fresh {
                return Err(SchemeError::Solve(SparseError::Inaccurate { residual: stats.residual, bound: tol }));
            }
            // The kept factors have gone stale: rebuild them from this Jacobian. If the
            // stale solve converged anyway its answer is kept.
            log::debug!("gmres: {} iterations with kept factors, refactoring", stats.iterations);
            self.refactor(jac)?;
            if stats.converged {
                self.balance_mass(jac, rhs, &mut d);
                return Ok(d);
            }
            fresh = true;
        }
    }

    /// The phase rows summed (test function 1) form the linear mass balance. An
    /// iterative solve leaves a small defect in it; a uniform shift of the phase
    /// correction removes it so mass is conserved to rounding, as with a direct solve.
    fn balance_mass(&self, jac: &CompressedMatrix, rhs: &[f64], d: &mut [f64]) {
        let phase = 0..self.layout.omega;
        let (mut defect, mut weight) = (0.0, 0.0);
        for r in phase.clone() {
            for (c, a) in jac.row(r) {
                defect += a * d[c];
                if phase.contains(&c) {
                    weight += a;
                }
            }
            defect -= rhs[r];
        }
        if weight != 0.0 {
            let shift = defect / weight;
            d[phase].iter_mut().for_each(|v| *v -= shift);
        }
    }

    fn refactor(&mut self, jac: &CompressedMatrix) -> Result<(), SchemeError> {
        let l = self.layout;
        let pc = self.precond.get_or_insert_with(|| {
            let block_of = (0..l.len)
                .map(|i| match i {
                    _ if i < l.vel => 0,
                    _ if i < l.mag => 1,
                    _ if i < l.multiplier => 2,
                    _ => 3,
                })
                .collect();
            // The mean-pressure mode is controlled by the multiplier, which sits in its
            // own block; pinning one pressure keeps the flow block invertible.
            BlockPreconditioner::new(block_of).pin(l.pres).pin(l.multiplier)
        });
        pc.factor(jac)?;
        Ok(())
    }

    /// Runs whole steps from `initial` up to `t_end`, reporting a diagnostics record
    /// for the initial state and after every step.
    pub fn run(
        &mut self,
        initial: State,
        t_end: f64,
        mut observer: impl FnMut(&DiagnosticsRecord, &State),
    ) -> Result<State, SchemeError> {
        let dt = self.cfg.dt;
        let span = t_end - initial.time;
        let steps_f = libm::round(span / dt);
        if span < -1e-12 || (steps_f * dt - span).abs() > 1e-12 * span.abs().max(1.0) {
            return Err(SchemeError::TimeGrid { t_end, dt });
        }
        let steps = steps_f as usize;
        let t0 = initial.time;
        let rec = diagnostics::step_record(0, &self.mesh, &self.spaces, &self.params, dt, None, &initial, 0);
        observer(&rec, &initial);
        let mut state = initial;
        let mut previous: Option<State> = None;
        for k in 1..=steps {
            let guess = match &previous {
                Some(prev) if self.cfg.predictor => Some(extrapolate(prev, &state)),
                _ => None,
            };
            let out = self
                .newton_step_from(&state, guess.as_ref())
                .map_err(|e| SchemeError::Step { index: k, source: Box::new(e) })?;
            let mut next = out.state;
            next.time = t0 + k as f64 * dt;
            let rec = diagnostics::step_record(k, &self.mesh, &self.spaces, &self.params, dt, Some(&state), &next, out.iterations);
            log::debug!("step {k}: t = {:.6}, E = {:.10e}, newton {}", next.time, rec.energy.total(), out.iterations);
            observer(&rec, &next);
            previous = Some(core::mem::replace(&mut state, next));
        }
        Ok(state)
    }
}

/// `2 cur - prev`, field by field.
fn extrapolate(prev: &State, cur: &State) -> State {
    let lin = |a: &FieldVec, b: &FieldVec| FieldVec {
        kind: b.kind,
        coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(p, c)| 2.0 * c - p).collect(),
    };
    State {
        phi: lin(&prev.phi, &cur.phi),
        omega: lin(&prev.omega, &cur.omega),
        vel: lin(&prev.vel, &cur.vel),
        pres: lin(&prev.pres, &cur.pres),
        mag: lin(&prev.mag, &cur.mag),
        time: 2.0 * cur.time - prev.time,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparsity pattern of the coupled Jacobian and the element scatter map.
fn build_pattern(layout: &Layout, l2g: &[[usize; NL]]) -> (CompressedMatrix, Vec<u32>, Vec<usize>, Vec<usize>) {
    let n = layout.len;
    let mut pairs: Vec<u64> = Vec::with_capacity(l2g.len() * NL * NL / 2 + 3 * n);
    let key = |r: usize, c: usize| ((r as u64) << 32) | c as u64;
    for g in l2g {
        for i in 0..NL {
            for j in 0..NL {
                if COUPLED[block_of(i)][block_of(j)] {
                    pairs.push(key(g[i], g[j]));
                }
            }
        }
    }
    for r in 0..n {
        pairs.push(key(r, r));
    }
    for node in 0..layout.nodes {
        pairs.push(key(layout.pres + node, layout.multiplier));
        pairs.push(key(layout.multiplier, layout.pres + node));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut row_ptr = alloc::vec![0usize; n + 1];
    let mut col_idx = Vec::with_capacity(pairs.len());
    for &k in &pairs {
        row_ptr[(k >> 32) as usize + 1] += 1;
        col_idx.push((k & 0xffff_ffff) as usize);
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    let pattern = CompressedMatrix::from_pattern(n, n, row_ptr, col_idx);
    let mut elem_map = alloc::vec![u32::MAX; l2g.len() * NL * NL];
    for (t, g) in l2g.iter().enumerate() {
        for i in 0..NL {
            for j in 0..NL {
                if COUPLED[block_of(i)][block_of(j)] {
                    elem_map[t * NL * NL + i * NL + j] = pattern.find(g[i], g[j]).expect("pattern entry") as u32;
                }
            }
        }
    }
    let mult_col = (0..layout.nodes).map(|k| pattern.find(layout.pres + k, layout.multiplier).unwrap()).collect();
    let mult_row = (0..layout.nodes).map(|k| pattern.find(layout.multiplier, layout.pres + k).unwrap()).collect();
    (pattern, elem_map, mult_col, mult_row)
}

/// Turns per-side prescriptions into per-unknown constraints, resolving corners by
/// [`SIDE_PRECEDENCE`].
pub fn resolve_constraints(mesh: &Mesh, spaces: &Spaces, layout: &Layout, bcs: &BcSet) -> Vec<Constraint> {
    let mut out = Vec::new();
    for (field, offset, space) in [(BcField::Vel, layout.vel, &spaces.vel), (BcField::Mag, layout.mag, &spaces.mag)] {
        for &node in &mesh.boundary_nodes {
            let sides: Vec<Side> = mesh.node_sides(node).collect();
            let mut chosen: [Option<(Side, BcValue)>; 2] = [None, None];
            for side in SIDE_PRECEDENCE.iter().filter(|s| sides.contains(s)) {
                let comps: Vec<(usize, BcValue)> = match bcs.side(field, *side) {
                    VectorBc::Natural => Vec::new(),
                    VectorBc::Full(v) => alloc::vec![(0, v), (1, v)],
                    VectorBc::Component(c, v) => alloc::vec![(c, v)],
                    VectorBc::Tangential(v) => alloc::vec![(side.tangential_component(), v)],
                };
                for (c, v) in comps {
                    match chosen[c] {
                        None => chosen[c] = Some((*side, v)),
                        Some((winner, w)) => {
                            let p = mesh.nodes[node];
                            let (a, b) = (w.eval(p[0], p[1], 0.0)[c], v.eval(p[0], p[1], 0.0)[c]);
                            if a != b {
                                log::warn!(
                                    "{field:?} component {c} at corner node {node}: {side} prescribes {b}, keeping {winner} value {a}"
                                );
                            }
                        }
                    }
                }
            }
            for (c, ch) in chosen.iter().enumerate() {
                if let Some((_, value)) = ch {
                    out.push(Constraint { dof: offset + space.node_dof(node, c), node, component: c, value: *value });
                }
            }
        }
    }
    out
}

/// Discrete chemical potential of a phase field:
/// `(omega, chi) = gamma eps (grad phi, grad chi) + (gamma/eps)(phi^3 - phi, chi)`.
pub fn chemical_potential(phi: &FieldVec, mesh: &Mesh, spaces: &Spaces, params: &PhysParams) -> Result<FieldVec, SchemeError> {
    let sp = &spaces.scalar;
    let quad = QuadRule::degree5();
    let mut rhs = alloc::vec![0.0; sp.dof_count];
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let dofs = sp.dofs(t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let shapes = ScalarShapes::eval(SpaceKind::P1Scalar, &geo, *l);
            let (v, g) = phi.eval_shapes(sp, t, &shapes);
            let wq = geo.weight(w);
            for i in 0..3 {
                rhs[dofs[i]] += wq
                    * (params.gamma * params.epsilon * (g[0][0] * shapes.grads[i][0] + g[0][1] * shapes.grads[i][1])
                        + params.gamma / params.epsilon * physics::double_well_derivative(v[0]) * shapes.values[i]);
            }
        }
    }
    let mass = fem::assemble_mass(sp, mesh);
    let coeffs = crate::sparse::solve_direct(&mass, &rhs)?;
    Ok(FieldVec { kind: SpaceKind::P1Scalar, coeffs })
}
