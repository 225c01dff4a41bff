//! Sparse matrices: triplet accumulation, compressed sparse row storage, products,
//! and a pivoting direct solver for the (nonsymmetric, indefinite) Newton systems.
//!
//! The factorization itself is delegated to faer's supernodal sparse LU with partial
//! pivoting. A CSR matrix is handed to faer as the CSC representation of its
//! transpose, so no copy is made and the solve goes through `A^T`'s transpose.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

#[derive(Clone, Debug, PartialEq)]
pub enum SparseError {
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    DimensionMismatch { expected: usize, found: usize },
    NotSquare { nrows: usize, ncols: usize },
    /// No usable pivot at elimination step `pivot`.
    Singular { pivot: usize },
    /// The computed solution failed the backward-error check.
    Inaccurate { residual: f64, bound: f64 },
    Backend,
}

impl fmt::Display for SparseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparseError::IndexOutOfRange { row, col, nrows, ncols } => {
                write!(f, "entry ({row}, {col}) outside a {nrows}x{ncols} matrix")
            }
            SparseError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            SparseError::NotSquare { nrows, ncols } => write!(f, "matrix is not square ({nrows}x{ncols})"),
            SparseError::Singular { pivot } => write!(f, "singular matrix: no pivot at step {pivot}"),
            SparseError::Inaccurate { residual, bound } => {
                write!(f, "direct solve residual {residual:e} exceeds bound {bound:e}")
            }
            SparseError::Backend => f.write_str("sparse LU backend failure"),
        }
    }
}

impl core::error::Error for SparseError {}

/// Unordered `(row, col, value)` entries; duplicates are summed on compression.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: &Triplets) {
        self.entries.extend_from_slice(&other.entries);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Sums duplicates and sorts columns within each row.
///
/// Entries are ordered by `(row, col, value bits)` before summation, so the result is
/// bit-identical for any permutation of the input.
pub fn compress(t: &Triplets) -> Result<CompressedMatrix, SparseError> {
    for &(row, col, _) in &t.entries {
        if row >= t.nrows || col >= t.ncols {
            return Err(SparseError::IndexOutOfRange { row, col, nrows: t.nrows, ncols: t.ncols });
        }
    }
    let mut sorted = t.entries.clone();
    sorted.sort_unstable_by(|a, b| (a.0, a.1, a.2.to_bits()).cmp(&(b.0, b.1, b.2.to_bits())));

    let mut row_ptr = alloc::vec![0usize; t.nrows + 1];
    let mut col_idx = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for (row, col, v) in sorted {
        if last == Some((row, col)) {
            *values.last_mut().unwrap() += v;
        } else {
            col_idx.push(col);
            values.push(v);
            row_ptr[row + 1] += 1;
            last = Some((row, col));
        }
    }
    for r in 0..t.nrows {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(CompressedMatrix { nrows: t.nrows, ncols: t.ncols, row_ptr, col_idx, values })
}

impl CompressedMatrix {
    /// Structure-only matrix with zero values.
    pub fn from_pattern(nrows: usize, ncols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        let nnz = col_idx.len();
        CompressedMatrix { nrows, ncols, row_ptr, col_idx, values: alloc::vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        CompressedMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: alloc::vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Position of `(row, col)` in `values`, if structurally present.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()].binary_search(&col).ok().map(|k| span.start + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.find(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = alloc::vec![alloc::vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[r][c] += v;
            }
        }
        d
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol * (1.0 + v.abs())))
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: fmt::Write>(&self, out: &mut W) -> fmt::Result {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(out, "{} {} {:e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn matvec(a: &CompressedMatrix, x: &[f64]) -> Result<Vec<f64>, SparseError> {
    if x.len() != a.ncols {
        return Err(SparseError::DimensionMismatch { expected: a.ncols, found: x.len() });
    }
    Ok((0..a.nrows).map(|r| a.row(r).map(|(c, v)| v * x[c]).sum()).collect())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Direct solver that keeps the symbolic factorization of the last sparsity pattern
/// it saw, so repeated solves on one pattern (Newton iterations, time steps) only pay
/// for the numeric phase.
#[derive(Default)]
pub struct DirectSolver {
    cached: Option<(Arc<(Vec<usize>, Vec<usize>)>, SymbolicLu<usize>)>,
}

impl fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectSolver").field("has_symbolic", &self.cached.is_some()).finish()
    }
}

/// Relative backward-error bound accepted by [`DirectSolver::solve`].
pub const SOLVE_RESIDUAL_FACTOR: f64 = 1e-10;

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Numeric LU of `a`, reusing the cached symbolic analysis when the pattern matches.
    pub fn factor(&mut self, a: &CompressedMatrix) -> Result<Factorization, SparseError> {
        if a.nrows != a.ncols {
            return Err(SparseError::NotSquare { nrows: a.nrows, ncols: a.ncols });
        }
        let n = a.nrows;
        // CSR of A read as CSC is A^T.
        let sym_t = SymbolicSparseColMatRef::new_checked(n, n, &a.row_ptr, None, &a.col_idx);
        let reuse = matches!(&self.cached, Some((p, _)) if p.0 == a.row_ptr && p.1 == a.col_idx);
        if !reuse {
            let symbolic = SymbolicLu::try_new(sym_t).map_err(|_| SparseError::Backend)?;
            self.cached = Some((Arc::new((a.row_ptr.clone(), a.col_idx.clone())), symbolic));
        }
        let symbolic = self.cached.as_ref().unwrap().1.clone();
        let mat_t = SparseColMatRef::new(sym_t, &a.values);
        let lu = Lu::try_new_with_symbolic(symbolic, mat_t).map_err(|e| match e {
            LuError::SymbolicSingular { index } => SparseError::Singular { pivot: index },
            LuError::Generic(_) => SparseError::Backend,
        })?;
        Ok(Factorization { n, lu })
    }

    /// Factor and solve, then check the backward error.
    pub fn solve(&mut self, a: &CompressedMatrix, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        if b.len() != a.nrows {
            return Err(SparseError::DimensionMismatch { expected: a.nrows, found: b.len() });
        }
        if a.nrows == 0 && a.ncols == 0 {
            return Ok(Vec::new());
        }
        let lu = self.factor(a)?;
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x)?;
        let ax = matvec(a, &x)?;
        let residual = ax.iter().zip(b).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
        let bound = SOLVE_RESIDUAL_FACTOR * (a.norm_inf() * inf_norm(&x) + inf_norm(b));
        if residual > bound {
            return Err(SparseError::Inaccurate { residual, bound });
        }
        Ok(x)
    }
}

/// A numeric LU factorization that can be applied repeatedly.
pub struct Factorization {
    n: usize,
    lu: Lu<usize, f64>,
}

impl fmt::Debug for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factorization").field("n", &self.n).finish()
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `x` (the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<(), SparseError> {
        if x.len() != self.n {
            return Err(SparseError::DimensionMismatch { expected: self.n, found: x.len() });
        }
        if self.n == 0 {
            return Ok(());
        }
        self.lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(x, self.n, 1));
        match x.iter().position(|v| !v.is_finite()) {
            Some(pivot) => Err(SparseError::Singular { pivot }),
            None => Ok(()),
        }
    }
}

/// One-shot direct solve with partial pivoting.
pub fn solve_direct(a: &CompressedMatrix, b: &[f64]) -> Result<Vec<f64>, SparseError> {
    DirectSolver::new().solve(a, b)
}

/// Block lower-triangular (Gauss–Seidel) preconditioner.
///
/// Every unknown belongs to one block; the diagonal blocks are factored with
/// [`DirectSolver`] and may be kept while the full matrix evolves, since the
/// off-diagonal couplings are read from whichever matrix is passed to [`apply`].
///
/// [`apply`]: BlockPreconditioner::apply
#[derive(Debug)]
pub struct BlockPreconditioner {
    block_of: Vec<usize>,
    local: Vec<usize>,
    members: Vec<Vec<usize>>,
    pinned: Vec<bool>,
    solvers: Vec<DirectSolver>,
    factors: Vec<Option<Factorization>>,
}

impl BlockPreconditioner {
    pub fn new(block_of: Vec<usize>) -> Self {
        let nblocks = block_of.iter().copied().max().map_or(0, |b| b + 1);
        let mut members = alloc::vec![Vec::new(); nblocks];
        let mut local = alloc::vec![0; block_of.len()];
        for (i, &b) in block_of.iter().enumerate() {
            local[i] = members[b].len();
            members[b].push(i);
        }
        let solvers = (0..nblocks).map(|_| DirectSolver::new()).collect();
        let factors = (0..nblocks).map(|_| None).collect();
        let pinned = alloc::vec![false; block_of.len()];
        BlockPreconditioner { block_of, local, members, pinned, solvers, factors }
    }

    /// Replaces the row and column of `dof` in its diagonal block by the identity,
    /// e.g. to remove a null space the full matrix controls through another block.
    pub fn pin(mut self, dof: usize) -> Self {
        self.pinned[dof] = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_factored(&self) -> bool {
        self.factors.iter().all(Option::is_some)
    }

    /// Extracts and factors the diagonal blocks of `a`.
    pub fn factor(&mut self, a: &CompressedMatrix) -> Result<(), SparseError> {
        if a.nrows != self.dim() || a.ncols != self.dim() {
            return Err(SparseError::DimensionMismatch { expected: self.dim(), found: a.nrows });
        }
        for (b, rows) in self.members.iter().enumerate() {
            let mut row_ptr = Vec::with_capacity(rows.len() + 1);
            let mut col_idx = Vec::new();
            let mut values = Vec::new();
            row_ptr.push(0);
            for &r in rows {
                if self.pinned[r] {
                    col_idx.push(self.local[r]);
                    values.push(1.0);
                    row_ptr.push(col_idx.len());
                    continue;
                }
                // Columns of a CSR row are sorted and local numbering is monotone
                // within a block, so the extracted row stays sorted.
                for (c, v) in a.row(r) {
                    if self.block_of[c] == b && !self.pinned[c] {
                        col_idx.push(self.local[c]);
                        values.push(v);
                    }
                }
                row_ptr.push(col_idx.len());
            }
            let block = CompressedMatrix { nrows: rows.len(), ncols: rows.len(), row_ptr, col_idx, values };
            self.factors[b] = Some(self.solvers[b].factor(&block)?);
        }
        Ok(())
    }

    /// Overwrites `r` with `P^{-1} r`, sweeping the blocks in order.
    pub fn apply(&self, a: &CompressedMatrix, r: &mut [f64]) -> Result<(), SparseError> {
        let mut done = alloc::vec![false; self.members.len()];
        let mut buf = Vec::new();
        for (b, rows) in self.members.iter().enumerate() {
            buf.clear();
            for &i in rows {
                let coupled: f64 = a
                    .row(i)
                    .filter(|&(c, _)| done[self.block_of[c]])
                    .map(|(c, v)| v * r[c])
                    .sum();
                buf.push(r[i] - coupled);
            }
            let lu = self.factors[b].as_ref().ok_or(SparseError::Backend)?;
            lu.solve_in_place(&mut buf)?;
            for (&i, &v) in rows.iter().zip(&buf) {
                r[i] = v;
            }
            done[b] = true;
        }
        Ok(())
    }
}

/// Outcome of a Krylov solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final true residual, infinity norm.
    pub residual: f64,
    pub converged: bool,
}

/// Restarted GMRES with right preconditioning, `A M^{-1} y = b`, `x = M^{-1} y`.
///
/// Stops once `‖b − A x‖∞ ≤ tol`; `x` holds the initial guess on entry. Inside a cycle
/// the 2-norm estimate is converted with the `∞/2` norm ratio of the cycle's starting
/// residual; the true residual is re-evaluated at every restart and at exit, so a poor
/// conversion only costs another cycle.
pub fn gmres<A, P>(
    mut apply: A,
    mut precondition: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovStats, SparseError>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]) -> Result<(), SparseError>,
{
    let n = b.len();
    if x.len() != n {
        return Err(SparseError::DimensionMismatch { expected: n, found: x.len() });
    }
    let m = restart.max(1);
    let mut r = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let mut z = alloc::vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = alloc::vec![0.0; (m + 1) * m];
    let (mut cs, mut sn, mut g) = (alloc::vec![0.0; m], alloc::vec![0.0; m], alloc::vec![0.0; m + 1]);
    let mut iterations = 0;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    loop {
        apply(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let res = inf_norm(&r);
        if res <= tol || iterations >= max_iter {
            return Ok(KrylovStats { iterations, residual: res, converged: res <= tol });
        }
        let beta = crate::math::sqrt(dot(&r, &r));
        let ratio = res / beta;
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < max_iter {
            z.copy_from_slice(&basis[k]);
            precondition(&mut z)?;
            apply(&z, &mut w);
            for j in 0..=k {
                let h = dot(&w, &basis[j]);
                hess[j * m + k] = h;
                for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                    *wi -= h * vi;
                }
            }
            let norm = crate::math::sqrt(dot(&w, &w));
            hess[(k + 1) * m + k] = norm;
            for j in 0..k {
                let (a, c) = (hess[j * m + k], hess[(j + 1) * m + k]);
                hess[j * m + k] = cs[j] * a + sn[j] * c;
                hess[(j + 1) * m + k] = -sn[j] * a + cs[j] * c;
            }
            let (a, c) = (hess[k * m + k], hess[(k + 1) * m + k]);
            let d = crate::math::hypot(a, c);
            let (cj, sj) = if d == 0.0 { (1.0, 0.0) } else { (a / d, c / d) };
            cs[k] = cj;
            sn[k] = sj;
            hess[k * m + k] = d;
            hess[(k + 1) * m + k] = 0.0;
            g[k + 1] = -sj * g[k];
            g[k] *= cj;
            iterations += 1;
            k += 1;
            if g[k].abs() * ratio <= 0.5 * tol || norm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / norm).collect());
        }
        // Back-substitution for the least-squares coefficients.
        let mut y = alloc::vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[i * m + j] * y[j];
            }
            y[i] = acc / hess[i * m + i];
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (yj, vj) in y.iter().zip(&basis) {
            for (wi, vi) in w.iter_mut().zip(vj) {
                *wi += yj * vi;
            }
        }
        precondition(&mut w)?;
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += wi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::Backend);
        }
    }
}
