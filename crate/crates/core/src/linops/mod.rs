//! Dense symmetric linear algebra: operator application, inner products,
//! energy norms, SPD/SPSD solves and small-scale eigenvalue oracles.
//!
//! Storage is dense throughout. The eigen oracles are only meant for
//! desk-scale operators and refuse anything above [`ORACLE_CAP`].

pub mod mm;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Default relative residual tolerance for [`solve_spsd`].
pub const SOLVER_TOL: f64 = 1e-12;
/// Absolute tolerance for semidefiniteness checks on unit-scaled operators.
pub const PSD_TOL: f64 = 1e-9;
/// Largest dimension accepted by the eigen oracles.
pub const ORACLE_CAP: usize = 2000;

const SCHUR_SWEEPS: usize = 100;

/// A self-adjoint linear map on `R^n`, stored densely.
///
/// Symmetry is exact: `entries[(i, j)] == entries[(j, i)]` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricOperator {
    entries: Matrix,
}

impl SymmetricOperator {
    /// Wraps a matrix after checking that it is square and exactly symmetric.
    pub fn new(entries: Matrix) -> Result<Self> {
        check_dim(entries.nrows(), entries.ncols())?;
        if entries.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for j in 0..entries.ncols() {
            for i in (j + 1)..entries.nrows() {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Builds `(m + mᵀ) / 2`, for products that are symmetric only up to rounding.
    pub fn symmetrized(m: &Matrix) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        let n = m.nrows();
        let mut s = m.clone();
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Self::new(s)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            entries: Matrix::from_diagonal(&Vector::from_column_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        apply(self, x)
    }

    /// `(op x, x)`.
    pub fn quadratic_form(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(quadratic_form(&self.entries, x))
    }

    /// Max absolute row sum, the scale used by relative tolerances.
    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.entries)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SymmetricOperator) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Self::new(&self.entries + &other.entries * alpha)
    }
}

pub(crate) fn quadratic_form(m: &Matrix, x: &Vector) -> f64 {
    (m * x).dot(x)
}

pub(crate) fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `op · x`.
pub fn apply(op: &SymmetricOperator, x: &Vector) -> Result<Vector> {
    check_dim(op.dim(), x.len())?;
    Ok(&op.entries * x)
}

/// Euclidean inner product `(x, y)`.
pub fn inner(x: &Vector, y: &Vector) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    Ok(x.dot(y))
}

/// `||x||_D = (D x, x)^{1/2}`.
///
/// Slightly negative quadratic forms caused by rounding are clamped to zero;
/// anything below `-PSD_TOL * ||D|| * ||x||²` is reported as non-PSD.
pub fn energy_norm(d: &SymmetricOperator, x: &Vector) -> Result<f64> {
    let q = d.quadratic_form(x)?;
    if q >= 0.0 {
        return Ok(q.sqrt());
    }
    let scale = d.norm_inf().max(f64::MIN_POSITIVE) * x.norm_squared();
    if q < -PSD_TOL * scale {
        Err(Error::NotPsd { value: q })
    } else {
        Ok(0.0)
    }
}

/// Solves `op x = rhs` for symmetric positive semidefinite `op` with
/// conjugate gradients started from zero.
///
/// On consistent singular systems the iterates stay in the range of `op`,
/// so the result is the minimum-norm solution.
pub fn solve_spsd(
    op: &SymmetricOperator,
    rhs: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<Vector> {
    check_dim(op.dim(), rhs.len())?;
    conjugate_gradient(&op.entries, rhs, tol, max_iter)
}

pub(crate) fn conjugate_gradient(
    m: &Matrix,
    rhs: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<Vector> {
    let run = cg_run(m, rhs, tol, max_iter)?;
    if run.converged {
        Ok(run.x)
    } else {
        Err(Error::SolverFailure {
            iterations: run.iterations,
            residual: run.residual,
        })
    }
}

/// Outcome of a CG solve, kept even when the target was missed.
pub(crate) struct CgRun {
    pub x: Vector,
    pub iterations: usize,
    /// Relative true residual `||rhs - m x|| / ||rhs||`.
    pub residual: f64,
    pub converged: bool,
    /// Stopped because the residual stopped decreasing, not because of the cap.
    pub stagnated: bool,
}

pub(crate) fn cg_run(m: &Matrix, rhs: &Vector, tol: f64, max_iter: usize) -> Result<CgRun> {
    let n = rhs.len();
    let b_norm = rhs.norm();
    let mut x = Vector::zeros(n);
    if b_norm == 0.0 {
        return Ok(CgRun {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
            stagnated: false,
        });
    }
    let scale = norm_inf(m).max(f64::MIN_POSITIVE);
    let target = tol * b_norm;
    let mut iterations = 0;
    // Outer restarts recompute the true residual so that recurrence drift
    // cannot fake convergence.
    loop {
        let mut r = rhs - m * &x;
        let mut rr = r.norm_squared();
        if rr.sqrt() <= target {
            return Ok(CgRun {
                x,
                iterations,
                residual: rr.sqrt() / b_norm,
                converged: true,
                stagnated: false,
            });
        }
        let mut p = r.clone();
        let mut progressed = false;
        while iterations < max_iter {
            iterations += 1;
            let mp = m * &p;
            let curvature = p.dot(&mp);
            let p_sq = p.norm_squared();
            if curvature <= PSD_TOL * f64::EPSILON * scale * p_sq {
                if curvature < -PSD_TOL * scale * p_sq {
                    return Err(Error::NotPsd {
                        value: curvature / p_sq,
                    });
                }
                // Zero curvature along a search direction: the residual has
                // stagnated in the kernel, so restart from the true residual.
                break;
            }
            let alpha = rr / curvature;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &mp, 1.0);
            let rr_new = r.norm_squared();
            progressed = true;
            if rr_new.sqrt() <= target {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            p *= beta;
            p += &r;
        }
        let true_res = (rhs - m * &x).norm();
        if true_res <= target || iterations >= max_iter || !progressed {
            return Ok(CgRun {
                x,
                iterations,
                residual: true_res / b_norm,
                converged: true_res <= target,
                stagnated: !progressed,
            });
        }
    }
}

/// Cached Cholesky factorization of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Cholesky {
    /// Factors `m`; fails if `m` is not square or not numerically positive definite.
    ///
    /// Pivots below `1e-10` of the largest diagonal entry count as failure so
    /// that semidefinite matrices are routed to the Krylov solver instead.
    pub fn factor(m: &Matrix) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        let max_diag = m.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let factor = nalgebra::Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = factor.l_dirty();
        let min_pivot = (0..m.nrows())
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-10 * max_diag) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &Vector) -> Vector {
        self.factor.solve(rhs)
    }

    pub fn solve_in_place(&self, rhs: &mut Vector) {
        self.factor.solve_mut(rhs)
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen(m: &Matrix, cap: usize) -> Result<(Vector, Matrix)> {
    check_dim(m.nrows(), m.ncols())?;
    if m.nrows() > cap {
        return Err(Error::OracleCap {
            dim: m.nrows(),
            cap,
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(Error::OracleFailure)?;
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(m.nrows(), m.ncols());
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

pub(crate) fn symmetric_eigenvalues(m: &Matrix, cap: usize) -> Result<Vector> {
    check_dim(m.nrows(), m.ncols())?;
    if m.nrows() > cap {
        return Err(Error::OracleCap {
            dim: m.nrows(),
            cap,
        });
    }
    let mut values = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(Error::OracleFailure)?
        .eigenvalues;
    values.as_mut_slice().sort_by(f64::total_cmp);
    Ok(values)
}

/// Smallest eigenvalue of a symmetric operator (dimension capped at [`ORACLE_CAP`]).
pub fn min_eigenvalue(op: &SymmetricOperator) -> Result<f64> {
    Ok(symmetric_eigenvalues(op.matrix(), ORACLE_CAP)?[0])
}

/// Largest eigenvalue of a symmetric operator (dimension capped at [`ORACLE_CAP`]).
pub fn max_eigenvalue(op: &SymmetricOperator) -> Result<f64> {
    let values = symmetric_eigenvalues(op.matrix(), ORACLE_CAP)?;
    Ok(values[values.len() - 1])
}

/// Largest eigenvalue modulus of a general square matrix, via a real Schur form.
/// `tol` is the convergence threshold of the QR iteration, which is capped
/// at `SCHUR_SWEEPS` iterations per row before reporting an oracle failure.
pub fn spectral_radius(m: &Matrix, tol: f64) -> Result<f64> {
    check_dim(m.nrows(), m.ncols())?;
    if m.nrows() > ORACLE_CAP {
        return Err(Error::OracleCap {
            dim: m.nrows(),
            cap: ORACLE_CAP,
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    match m.clone().try_schur(tol.max(f64::EPSILON), SCHUR_SWEEPS * m.nrows().max(1)) {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        None => {
            log::debug!("Schur iteration stalled at dim {}, using Gelfand estimate", m.nrows());
            Ok(gelfand_radius(m))
        }
    }
}

/// `ρ(M) = lim ||M^k||^{1/k}` along `k = 2^j`, with the scale kept in
/// logarithms so that neither decay nor growth under- or overflows.
fn gelfand_radius(m: &Matrix) -> f64 {
    const DOUBLINGS: i32 = 60;
    let mut log_scale = 0.0;
    let mut power = m.clone();
    for j in 0..=DOUBLINGS {
        let norm = power.norm();
        if norm == 0.0 {
            return 0.0;
        }
        power /= norm;
        log_scale += norm.ln();
        if j < DOUBLINGS {
            power = &power * &power;
            log_scale *= 2.0;
        }
    }
    (log_scale / f64::powi(2.0, DOUBLINGS)).exp()
}

/// Spectral norm (largest singular value).
pub(crate) fn spectral_norm(m: &Matrix) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0, |a: f64, &v| a.max(v))
}

/// Probes boundedness of the powers of `m` by repeated squaring:
/// returns `max_j ||observable · m^(2^j)||₂` for `j = 0..=doublings`
/// (`observable = I` when absent). `doublings = 14` covers 16384 steps.
pub fn power_growth(m: &Matrix, observable: Option<&Matrix>, doublings: u32) -> Result<f64> {
    check_dim(m.nrows(), m.ncols())?;
    if let Some(obs) = observable {
        check_dim(m.nrows(), obs.ncols())?;
    }
    let mut power = m.clone();
    let mut growth: f64 = 0.0;
    for j in 0..=doublings {
        let seen = match observable {
            Some(obs) => spectral_norm(&(obs * &power)),
            None => spectral_norm(&power),
        };
        growth = growth.max(seen);
        if !growth.is_finite() {
            return Ok(f64::INFINITY);
        }
        if j < doublings {
            power = &power * &power;
        }
    }
    Ok(growth)
}
