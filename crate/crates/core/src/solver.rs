//! Compressed-row sparse matrices and a Jacobi-preconditioned BiCGSTAB for the
//! (generally nonsymmetric) condensed systems, plus a dense LU reference
//! solver for small systems.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest system the dense LU path accepts.
pub const DIRECT_LIMIT: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),
    #[error("dimension mismatch: matrix is {n}x{n}, vector has {len} entries")]
    Dimension { n: usize, len: usize },
    #[error("dense solve limited to n <= {DIRECT_LIMIT} (got {0})")]
    TooLargeForDirect(usize),
    #[error("matrix is singular")]
    Singular,
    #[error("entry ({0}, {1}) is not in the sparsity pattern")]
    NotInPattern(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given pattern; each row's columns are sorted and
    /// deduplicated.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut columns = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            columns.extend(row);
            row_offsets.push(columns.len());
        }
        let values = vec![0.0; columns.len()];
        Self {
            n,
            row_offsets,
            columns,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| m[(i, j)] != 0.0 || i == j).collect())
            .collect();
        let mut a = Self::from_pattern(rows);
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    a.add(i, j, m[(i, j)]).expect("entry in pattern");
                }
            }
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.columns[r.clone()], &self.values[r])
    }

    pub fn row_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.columns[r.clone()], &mut self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        let cols = &self.columns[start..self.row_offsets[i + 1]];
        cols.binary_search(&j).ok().map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), SolverError> {
        let p = self.position(i, j).ok_or(SolverError::NotInPattern(i, j))?;
        self.values[p] += v;
        Ok(())
    }

    /// Overwrites row `i` with the identity row, keeping its pattern.
    pub fn set_identity_row(&mut self, i: usize) {
        for p in self.row_offsets[i]..self.row_offsets[i + 1] {
            self.values[p] = if self.columns[p] == i { 1.0 } else { 0.0 };
        }
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = (usize, usize, &mut f64)> {
        let columns = &self.columns;
        let offsets = &self.row_offsets;
        self.values.iter_mut().enumerate().map(move |(p, v)| {
            let i = offsets.partition_point(|&o| o <= p) - 1;
            (i, columns[p], v)
        })
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n == other.n && self.row_offsets == other.row_offsets && self.columns == other.columns
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[p] * x[self.columns[p]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `||A x - b|| / ||b||`, or `||A x||` when `b` is zero.
pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm(b);
    if nb > 0.0 {
        norm(&r) / nb
    } else {
        norm(&r)
    }
}

/// Diagonal (Jacobi) scaling `M^-1 = diag(A)^-1`.
#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inverse_diagonal: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolverError> {
        let inverse_diagonal = a
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d == 0.0 {
                    Err(SolverError::ZeroDiagonal(i))
                } else {
                    Ok(1.0 / d)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { inverse_diagonal })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inverse_diagonal: vec![1.0; n],
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for ((o, x), m) in out.iter_mut().zip(v).zip(&self.inverse_diagonal) {
            *o = m * x;
        }
    }

    /// `||M^-1 v||`.
    pub fn scaled_norm(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.inverse_diagonal)
            .map(|(x, m)| (m * x).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `||M^-1 (b - A x)|| / ||M^-1 b||`, or the numerator when `b` is zero.
    pub fn scaled_residual(&self, a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        let nb = self.scaled_norm(b);
        if nb > 0.0 {
            self.scaled_norm(&r) / nb
        } else {
            self.scaled_norm(&r)
        }
    }

    /// `M^-1 A v`.
    pub fn apply_preconditioned(&self, a: &CsrMatrix, v: &[f64]) -> Vec<f64> {
        let av = a.mul_vec(v);
        let mut out = vec![0.0; av.len()];
        self.apply(&av, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target, measured as `||M^-1 (b - Ax)|| / ||M^-1 b||`
    /// so rows of very different scale (high-contrast materials) weigh equally.
    /// Without preconditioning this is the plain relative residual.
    pub tol: f64,
    /// Defaults to `10 n`.
    pub max_iter: Option<usize>,
    pub precondition: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Recomputed (scaled) relative residual of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    pub restarts: usize,
    pub breakdown: bool,
}

/// Right-preconditioned BiCGSTAB. On breakdown (`rho` or `omega` vanishing)
/// the iteration restarts once from the current iterate with a fresh shadow
/// residual; a second breakdown ends the solve unconverged. Convergence
/// claimed by the recursive residual is confirmed against the true residual
/// before returning.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    options: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let n = a.n();
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(SolverError::Dimension { n, len });
        }
    }
    let precond = if options.precondition {
        JacobiPreconditioner::new(a)?
    } else {
        JacobiPreconditioner::identity(n)
    };
    let max_iter = options.max_iter.unwrap_or(10 * n.max(1));
    let tol = options.tol;
    let mut x = x0.to_vec();
    let nb = precond.scaled_norm(b);
    if nb == 0.0 {
        let x = vec![0.0; n];
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
                restarts: 0,
                breakdown: false,
            },
        ));
    }

    let true_residual = |x: &[f64], r: &mut Vec<f64>| {
        a.mul_vec_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    };

    let mut r = vec![0.0; n];
    true_residual(&x, &mut r);
    let mut shadow = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut breakdowns = 0;
    let mut breakdown = false;
    let converged = precond.scaled_norm(&r) / nb <= tol;

    while !converged && iterations < max_iter {
        iterations += 1;
        let rho = dot(&shadow, &r);
        let small = f64::EPSILON * f64::EPSILON * norm(&shadow) * norm(&r);
        let mut broke = rho.abs() <= small;
        if !broke {
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond.apply(&p, &mut p_hat);
            a.mul_vec_into(&p_hat, &mut v);
            let sv = dot(&shadow, &v);
            if sv.abs() <= small {
                broke = true;
            } else {
                alpha = rho / sv;
                for i in 0..n {
                    s[i] = r[i] - alpha * v[i];
                }
                if precond.scaled_norm(&s) / nb <= tol {
                    for i in 0..n {
                        x[i] += alpha * p_hat[i];
                    }
                    true_residual(&x, &mut r);
                    if precond.scaled_norm(&r) / nb <= tol {
                        break;
                    }
                    // Recursive residual drifted: refresh and keep going.
                    shadow.copy_from_slice(&r);
                    p.iter_mut().for_each(|v| *v = 0.0);
                    v.iter_mut().for_each(|v| *v = 0.0);
                    (rho_old, alpha, omega) = (1.0, 1.0, 1.0);
                    restarts += 1;
                    continue;
                }
                precond.apply(&s, &mut s_hat);
                a.mul_vec_into(&s_hat, &mut t);
                let tt = dot(&t, &t);
                omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
                for i in 0..n {
                    x[i] += alpha * p_hat[i] + omega * s_hat[i];
                    r[i] = s[i] - omega * t[i];
                }
                rho_old = rho;
                if precond.scaled_norm(&r) / nb <= tol {
                    true_residual(&x, &mut r);
                    if precond.scaled_norm(&r) / nb <= tol {
                        break;
                    }
                    shadow.copy_from_slice(&r);
                    p.iter_mut().for_each(|v| *v = 0.0);
                    v.iter_mut().for_each(|v| *v = 0.0);
                    (rho_old, alpha, omega) = (1.0, 1.0, 1.0);
                    restarts += 1;
                    continue;
                }
                if omega == 0.0 {
                    broke = true;
                }
            }
        }
        if broke {
            breakdowns += 1;
            if breakdowns > 1 {
                breakdown = true;
                break;
            }
            true_residual(&x, &mut r);
            shadow.copy_from_slice(&r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|v| *v = 0.0);
            (rho_old, alpha, omega) = (1.0, 1.0, 1.0);
            restarts += 1;
        }
    }

    let residual = precond.scaled_residual(a, &x, b);
    Ok((
        x,
        SolveReport {
            iterations,
            residual,
            converged: residual <= tol,
            restarts,
            breakdown,
        },
    ))
}

/// Dense LU solve, for reference solutions on small systems.
pub fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = a.n();
    if b.len() != n {
        return Err(SolverError::Dimension { n, len: b.len() });
    }
    if n > DIRECT_LIMIT {
        return Err(SolverError::TooLargeForDirect(n));
    }
    let lu = a.to_dense().lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or(SolverError::Singular)
}
