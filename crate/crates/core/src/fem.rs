//! P1 and MINI finite element spaces on triangles: shape functions, quadrature,
//! DOF numbering, generic bilinear-form assembly, L2 projection and point evaluation.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::mesh::{Mesh, MeshError};
use crate::sparse::{self, CompressedMatrix, SparseError, Triplets};

#[derive(Clone, Debug, PartialEq)]
pub enum FemError {
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    Mesh(MeshError),
    Solve(SparseError),
}

impl fmt::Display for FemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FemError::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            FemError::Mesh(e) => write!(f, "{e}"),
            FemError::Solve(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FemError {}

impl From<MeshError> for FemError {
    fn from(e: MeshError) -> Self {
        FemError::Mesh(e)
    }
}

impl From<SparseError> for FemError {
    fn from(e: SparseError) -> Self {
        FemError::Solve(e)
    }
}

/// Quadrature on the reference triangle: barycentric points and weights summing to 1/2.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Radon's 7-point rule, exact for polynomials of total degree 5.
    pub fn degree5() -> Self {
        let s15 = math::sqrt(15.0);
        let a1 = (6.0 - s15) / 21.0;
        let a2 = (6.0 + s15) / 21.0;
        let w1 = 0.5 * (155.0 - s15) / 1200.0;
        let w2 = 0.5 * (155.0 + s15) / 1200.0;
        let b1 = 1.0 - 2.0 * a1;
        let b2 = 1.0 - 2.0 * a2;
        QuadRule {
            points: alloc::vec![
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [a1, a1, b1],
                [a1, b1, a1],
                [b1, a1, a1],
                [a2, a2, b2],
                [a2, b2, a2],
                [b2, a2, a2],
            ],
            weights: alloc::vec![0.5 * 9.0 / 40.0, w1, w1, w1, w2, w2, w2],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Affine map data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    /// Twice the (positive) area.
    pub det: f64,
    /// Physical gradients of the three barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let g = |pj: [f64; 2], pk: [f64; 2]| [(pj[1] - pk[1]) / det, (pk[0] - pj[0]) / det];
        ElementGeometry { vertices, det, grad_lambda: [g(p1, p2), g(p2, p0), g(p0, p1)] }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.vertices(t))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    pub fn point(&self, l: &[f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    /// Physical weight of a reference quadrature weight.
    pub fn weight(&self, w: f64) -> f64 {
        w * self.det
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    P1Scalar,
    P1Vector2,
    MiniVector2,
}

impl SpaceKind {
    pub fn components(self) -> usize {
        match self {
            SpaceKind::P1Scalar => 1,
            _ => 2,
        }
    }

    /// Scalar shape functions per component on one triangle.
    pub fn scalar_shapes(self) -> usize {
        match self {
            SpaceKind::MiniVector2 => 4,
            _ => 3,
        }
    }

    pub fn local_dofs(self) -> usize {
        self.components() * self.scalar_shapes()
    }
}

pub const BUBBLE_SCALE: f64 = 27.0;

/// Values and reference-coordinate gradients of the scalar shape functions of `kind`
/// at barycentric point `l`. Reference coordinates are `(xi, eta)` with
/// `l = (1 - xi - eta, xi, eta)`. The fourth entry (MINI only) is the cubic bubble.
pub fn shape_eval(kind: SpaceKind, l: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut values = alloc::vec![l[0], l[1], l[2]];
    let mut grads = alloc::vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    if kind == SpaceKind::MiniVector2 {
        let db = bubble_bary_derivatives(l);
        values.push(bubble(l));
        grads.push([db[1] - db[0], db[2] - db[0]]);
    }
    (values, grads)
}

#[inline]
pub fn bubble(l: [f64; 3]) -> f64 {
    BUBBLE_SCALE * l[0] * l[1] * l[2]
}

/// Partial derivatives of the bubble with respect to each barycentric coordinate.
#[inline]
pub fn bubble_bary_derivatives(l: [f64; 3]) -> [f64; 3] {
    [BUBBLE_SCALE * l[1] * l[2], BUBBLE_SCALE * l[0] * l[2], BUBBLE_SCALE * l[0] * l[1]]
}

/// Scalar shape values and physical gradients at one point of one element.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScalarShapes {
    pub n: usize,
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
}

impl ScalarShapes {
    pub fn eval(kind: SpaceKind, geo: &ElementGeometry, l: [f64; 3]) -> Self {
        let gl = geo.grad_lambda;
        let mut s = ScalarShapes {
            n: 3,
            values: [l[0], l[1], l[2], 0.0],
            grads: [gl[0], gl[1], gl[2], [0.0; 2]],
        };
        if kind == SpaceKind::MiniVector2 {
            let db = bubble_bary_derivatives(l);
            s.n = 4;
            s.values[3] = bubble(l);
            s.grads[3] = [
                db[0] * gl[0][0] + db[1] * gl[1][0] + db[2] * gl[2][0],
                db[0] * gl[0][1] + db[1] * gl[1][1] + db[2] * gl[2][1],
            ];
        }
        s
    }
}

/// A finite element space over a mesh: kind, size, and per-triangle local-to-global map.
///
/// Local DOFs are ordered component-major: all scalar shapes of component 0, then all
/// of component 1. Global vector DOFs are also component-major: component `c` of
/// scalar DOF `k` lives at `c * scalar_dofs + k`. For MINI the scalar DOFs are the mesh
/// nodes followed by one bubble per triangle.
#[derive(Clone, Debug)]
pub struct Space {
    pub kind: SpaceKind,
    pub scalar_dofs: usize,
    pub dof_count: usize,
    pub local_to_global: Vec<[usize; 8]>,
}

impl Space {
    pub fn new(kind: SpaceKind, mesh: &Mesh) -> Self {
        let nn = mesh.num_nodes();
        let nt = mesh.num_triangles();
        let scalar_dofs = match kind {
            SpaceKind::MiniVector2 => nn + nt,
            _ => nn,
        };
        let ns = kind.scalar_shapes();
        let local_to_global = mesh
            .triangles
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let mut map = [usize::MAX; 8];
                for c in 0..kind.components() {
                    for k in 0..3 {
                        map[c * ns + k] = c * scalar_dofs + tri[k];
                    }
                    if ns == 4 {
                        map[c * ns + 3] = c * scalar_dofs + nn + t;
                    }
                }
                map
            })
            .collect();
        Space { kind, scalar_dofs, dof_count: scalar_dofs * kind.components(), local_to_global }
    }

    pub fn local_dofs(&self) -> usize {
        self.kind.local_dofs()
    }

    pub fn dofs(&self, t: usize) -> &[usize] {
        &self.local_to_global[t][..self.local_dofs()]
    }

    /// Global DOF of component `c` at mesh node `n`.
    pub fn node_dof(&self, n: usize, c: usize) -> usize {
        c * self.scalar_dofs + n
    }
}

/// Coefficient vector of a discrete field in some space.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldVec {
    pub kind: SpaceKind,
    pub coeffs: Vec<f64>,
}

impl FieldVec {
    pub fn zeros(space: &Space) -> Self {
        FieldVec { kind: space.kind, coeffs: alloc::vec![0.0; space.dof_count] }
    }

    pub fn check(&self, space: &Space) -> Result<(), FemError> {
        if self.kind != space.kind || self.coeffs.len() != space.dof_count {
            return Err(FemError::DimensionMismatch {
                what: "field coefficients",
                expected: space.dof_count,
                found: self.coeffs.len(),
            });
        }
        Ok(())
    }

    /// Value and gradient (`grad[i][j] = d_j v_i`) at barycentric point `l` of triangle `t`.
    pub fn eval_in(&self, space: &Space, geo: &ElementGeometry, t: usize, l: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
        let shapes = ScalarShapes::eval(space.kind, geo, l);
        self.eval_shapes(space, t, &shapes)
    }

    pub fn eval_shapes(&self, space: &Space, t: usize, shapes: &ScalarShapes) -> ([f64; 2], [[f64; 2]; 2]) {
        let dofs = space.dofs(t);
        let mut value = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for c in 0..space.kind.components() {
            for k in 0..shapes.n {
                let coef = self.coeffs[dofs[c * shapes.n + k]];
                value[c] += coef * shapes.values[k];
                grad[c][0] += coef * shapes.grads[k][0];
                grad[c][1] += coef * shapes.grads[k][1];
            }
        }
        (value, grad)
    }
}

/// Evaluates a field at physical point `(x, y)`.
pub fn eval_field(field: &FieldVec, space: &Space, mesh: &Mesh, x: f64, y: f64) -> Result<([f64; 2], [[f64; 2]; 2]), FemError> {
    field.check(space)?;
    let (t, l) = mesh.locate(x, y)?;
    let geo = ElementGeometry::of(mesh, t);
    Ok(field.eval_in(space, &geo, t, l))
}

/// One basis function sampled at a quadrature point.
#[derive(Clone, Copy, Debug, Default)]
pub struct BasisSample {
    pub value: [f64; 2],
    /// `grad[i][j] = d_j v_i`.
    pub grad: [[f64; 2]; 2],
}

impl BasisSample {
    pub fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

/// Everything a bilinear-form kernel may depend on at a quadrature point.
pub struct KernelPoint<'a> {
    pub x: [f64; 2],
    pub trial: BasisSample,
    pub test: BasisSample,
    /// Frozen coefficient fields, flattened by component in the order they were given.
    pub coeffs: &'a [f64],
}

fn samples(kind: SpaceKind, shapes: &ScalarShapes) -> [BasisSample; 8] {
    let mut out = [BasisSample::default(); 8];
    for c in 0..kind.components() {
        for k in 0..shapes.n {
            let s = &mut out[c * shapes.n + k];
            s.value[c] = shapes.values[k];
            s.grad[c] = shapes.grads[k];
        }
    }
    out
}

/// Assembles `A[i][j] = sum_K sum_q w * kernel(trial_j, test_i)` with the degree-5 rule.
///
/// `coeffs` are discrete fields frozen at quadrature points (each paired with its space);
/// `coeff_arity` is the number of scalar values the kernel expects from them.
pub fn assemble_weighted_operator(
    trial: &Space,
    test: &Space,
    mesh: &Mesh,
    coeffs: &[(&FieldVec, &Space)],
    coeff_arity: usize,
    kernel: impl Fn(&KernelPoint) -> f64,
) -> Result<CompressedMatrix, FemError> {
    for s in [trial, test] {
        if s.local_to_global.len() != mesh.num_triangles() {
            return Err(FemError::DimensionMismatch {
                what: "space triangles",
                expected: mesh.num_triangles(),
                found: s.local_to_global.len(),
            });
        }
    }
    let provided: usize = coeffs.iter().map(|(f, s)| s.kind.components().min(f.kind.components())).sum();
    if provided != coeff_arity {
        return Err(FemError::DimensionMismatch { what: "kernel coefficient arity", expected: coeff_arity, found: provided });
    }
    for (f, s) in coeffs {
        f.check(s)?;
    }

    let quad = QuadRule::degree5();
    let mut trip = Triplets::new(test.dof_count, trial.dof_count);
    let mut cvals = alloc::vec![0.0; coeff_arity];
    let (nl_trial, nl_test) = (trial.local_dofs(), test.local_dofs());
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let mut local = alloc::vec![0.0; nl_test * nl_trial];
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let wq = geo.weight(w);
            let x = geo.point(l);
            let mut k = 0;
            for (f, s) in coeffs {
                let (v, _) = f.eval_in(s, &geo, t, *l);
                for c in 0..s.kind.components() {
                    cvals[k] = v[c];
                    k += 1;
                }
            }
            let tr = samples(trial.kind, &ScalarShapes::eval(trial.kind, &geo, *l));
            let te = samples(test.kind, &ScalarShapes::eval(test.kind, &geo, *l));
            for i in 0..nl_test {
                for j in 0..nl_trial {
                    let kp = KernelPoint { x, trial: tr[j], test: te[i], coeffs: &cvals };
                    local[i * nl_trial + j] += wq * kernel(&kp);
                }
            }
        }
        let (rows, cols) = (test.dofs(t), trial.dofs(t));
        for i in 0..nl_test {
            for j in 0..nl_trial {
                trip.push(rows[i], cols[j], local[i * nl_trial + j]);
            }
        }
    }
    Ok(sparse::compress(&trip)?)
}

pub fn assemble_mass(space: &Space, mesh: &Mesh) -> CompressedMatrix {
    assemble_weighted_operator(space, space, mesh, &[], 0, |k| {
        k.trial.value[0] * k.test.value[0] + k.trial.value[1] * k.test.value[1]
    })
    .expect("mass assembly on a consistent space")
}

pub fn assemble_stiffness(space: &Space, mesh: &Mesh) -> CompressedMatrix {
    assemble_weighted_operator(space, space, mesh, &[], 0, |k| {
        let (a, b) = (k.trial.grad, k.test.grad);
        a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
    })
    .expect("stiffness assembly on a consistent space")
}

/// Analytic field sampled at physical points. Scalar fields use component 0.
pub type AnalyticFn<'a> = &'a dyn Fn(f64, f64) -> [f64; 2];

/// Load vector `b_i = integral f . phi_i`.
pub fn assemble_load(space: &Space, mesh: &Mesh, f: AnalyticFn) -> Vec<f64> {
    let quad = QuadRule::degree5();
    let mut b = alloc::vec![0.0; space.dof_count];
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        let dofs = space.dofs(t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let wq = geo.weight(w);
            let x = geo.point(l);
            let fx = f(x[0], x[1]);
            let te = samples(space.kind, &ScalarShapes::eval(space.kind, &geo, *l));
            for (i, s) in te.iter().take(space.local_dofs()).enumerate() {
                b[dofs[i]] += wq * (fx[0] * s.value[0] + fx[1] * s.value[1]);
            }
        }
    }
    b
}

/// L2 projection onto `space` with some DOFs pinned to prescribed values.
///
/// Pinned rows and columns are eliminated symmetrically, so the remaining system is
/// the mass matrix restricted to the free DOFs.
pub fn l2_project_constrained(space: &Space, mesh: &Mesh, f: AnalyticFn, pinned: &[(usize, f64)]) -> Result<FieldVec, FemError> {
    let mass = assemble_mass(space, mesh);
    let mut rhs = assemble_load(space, mesh, f);
    let mut fixed: Vec<Option<f64>> = alloc::vec![None; space.dof_count];
    for &(d, v) in pinned {
        fixed[d] = Some(v);
    }
    let mut trip = Triplets::new(space.dof_count, space.dof_count);
    for r in 0..mass.nrows {
        if let Some(v) = fixed[r] {
            trip.push(r, r, 1.0);
            rhs[r] = v;
            continue;
        }
        for (c, m) in mass.row(r) {
            match fixed[c] {
                Some(v) => rhs[r] -= m * v,
                None => trip.push(r, c, m),
            }
        }
    }
    let a = sparse::compress(&trip)?;
    let coeffs = sparse::solve_direct(&a, &rhs)?;
    Ok(FieldVec { kind: space.kind, coeffs })
}

pub fn l2_project(space: &Space, mesh: &Mesh, f: AnalyticFn) -> Result<FieldVec, FemError> {
    l2_project_constrained(space, mesh, f, &[])
}

/// Nodal interpolant of an analytic field (bubble coefficients are zero).
pub fn interpolate(space: &Space, mesh: &Mesh, f: AnalyticFn) -> FieldVec {
    let mut field = FieldVec::zeros(space);
    for (n, p) in mesh.nodes.iter().enumerate() {
        let v = f(p[0], p[1]);
        for c in 0..space.kind.components() {
            field.coeffs[space.node_dof(n, c)] = v[c];
        }
    }
    field
}

/// Integral of each component of a field over the domain.
pub fn integrate_field(field: &FieldVec, space: &Space, mesh: &Mesh) -> [f64; 2] {
    let quad = QuadRule::degree5();
    let mut acc = [0.0; 2];
    for t in 0..mesh.num_triangles() {
        let geo = ElementGeometry::of(mesh, t);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let (v, _) = field.eval_in(space, &geo, t, *l);
            acc[0] += geo.weight(w) * v[0];
            acc[1] += geo.weight(w) * v[1];
        }
    }
    acc
}

/// Boxed analytic function, handy for building projections from closures.
pub type BoxedFn = Box<dyn Fn(f64, f64) -> [f64; 2]>;
