//! Stability certificates and the amplification-matrix oracle.

use super::{SchemeKind, Stepper};
use crate::assembly::BlockOperator;
use crate::error::{Error, Result};
use crate::linops::{min_eigenvalue, Matrix, SymmetricOperator, Vector, ORACLE_CAP};

/// `D = τ(μC0 - ½C) + τ²(σB0 - ¼B)`.
#[allow(clippy::too_many_arguments)]
pub fn d_operator(
    c: &BlockOperator,
    c0: &BlockOperator,
    b: &BlockOperator,
    b0: &BlockOperator,
    tau: f64,
    mu: f64,
    sigma: f64,
) -> Result<SymmetricOperator> {
    let d = c0
        .scaled(tau * mu)
        .add_scaled(-0.5 * tau, c)?
        .add_scaled(tau * tau * sigma, b0)?
        .add_scaled(-0.25 * tau * tau, b)?;
    SymmetricOperator::symmetrized(&d.to_dense())
}

/// Smallest eigenvalue of [`d_operator`].
#[allow(clippy::too_many_arguments)]
pub fn check_d_operator(
    c: &BlockOperator,
    c0: &BlockOperator,
    b: &BlockOperator,
    b0: &BlockOperator,
    tau: f64,
    mu: f64,
    sigma: f64,
) -> Result<f64> {
    min_eigenvalue(&d_operator(c, c0, b, b0, tau, mu, sigma)?)
}

/// `σB0 - ½B`.
pub fn two_level_operator(b: &BlockOperator, b0: &BlockOperator, sigma: f64) -> Result<SymmetricOperator> {
    let m = b0.scaled(sigma).add_scaled(-0.5, b)?;
    SymmetricOperator::symmetrized(&m.to_dense())
}

/// Smallest eigenvalue of [`two_level_operator`].
pub fn two_level_certificate(b: &BlockOperator, b0: &BlockOperator, sigma: f64) -> Result<f64> {
    min_eigenvalue(&two_level_operator(b, b0, sigma)?)
}

/// `G = (σ - ½)B + σ²τ B1 B2`.
pub fn factorized_g_operator(
    b: &BlockOperator,
    b1: &BlockOperator,
    b2: &BlockOperator,
    tau: f64,
    sigma: f64,
) -> Result<SymmetricOperator> {
    let g = b.to_dense() * (sigma - 0.5) + b1.to_dense() * b2.to_dense() * (sigma * sigma * tau);
    SymmetricOperator::symmetrized(&g)
}

/// Smallest eigenvalue of [`factorized_g_operator`].
pub fn factorized_certificate(
    b: &BlockOperator,
    b1: &BlockOperator,
    b2: &BlockOperator,
    tau: f64,
    sigma: f64,
) -> Result<f64> {
    min_eigenvalue(&factorized_g_operator(b, b1, b2, tau, sigma)?)
}

/// The operator whose nonnegativity makes `stepper`'s scheme stable: `D` for
/// three-level schemes (with `C = C0 = I`, `μ = ½` in the direct-sum case),
/// `σB0 - ½B` for the two-level scheme, `G` for the factorized scheme. The
/// implicit schemes need none.
pub fn certificate_operator(stepper: &Stepper) -> Result<Option<SymmetricOperator>> {
    let p = stepper.params();
    let ops = stepper.operators();
    let sigma = p.sigma.unwrap_or(1.0);
    let op = match p.scheme {
        SchemeKind::ImplicitScalar | SchemeKind::ImplicitVector => return Ok(None),
        SchemeKind::ThreeLevelSplit => d_operator(&ops.c, &ops.c0, &ops.b, &ops.b0, p.tau, p.mu.unwrap_or(0.5), sigma)?,
        SchemeKind::ThreeLevelDirectsum => d_operator(&ops.c, &ops.c0, &ops.b, &ops.b0, p.tau, 0.5, sigma)?,
        SchemeKind::TwoLevelDirectsum => two_level_operator(&ops.b, &ops.b0, sigma)?,
        SchemeKind::Factorized => factorized_g_operator(&ops.b, &ops.b1, &ops.b2, p.tau, sigma)?,
    };
    Ok(Some(op))
}

/// One-step map of the homogeneous scheme, built column by column from unit
/// states. Three-level schemes act on the stacked pair `(w^n, w^{n-1})`.
pub fn amplification_matrix(stepper: &Stepper) -> Result<Matrix> {
    let d = stepper.state_dim();
    let three = stepper.params().scheme.is_three_level();
    let dim = if three { 2 * d } else { d };
    if dim > ORACLE_CAP {
        return Err(Error::OracleCap { dim, cap: ORACLE_CAP });
    }
    let zero = Vector::zeros(d);
    let mut m = Matrix::zeros(dim, dim);
    for k in 0..dim {
        let mut e = Vector::zeros(dim);
        e[k] = 1.0;
        if three {
            let w = e.rows(0, d).into_owned();
            let w_prev = e.rows(d, d).into_owned();
            let next = stepper.step_flat(&w, Some(&w_prev), &zero)?;
            m.view_mut((0, k), (d, 1)).copy_from(&next);
            m.view_mut((d, k), (d, 1)).copy_from(&w);
        } else {
            let next = stepper.step_flat(&e, None, &zero)?;
            m.set_column(k, &next);
        }
    }
    Ok(m)
}

/// Maps a state to `Lᵀ y` with `A = L Lᵀ`, so its Euclidean norm is the
/// A-norm of the reconstructed solution; for three-level schemes `y` is the
/// half-step average `(y^n + y^{n-1}) / 2`.
pub fn observable_matrix(stepper: &Stepper) -> Result<Matrix> {
    let a = stepper.a().matrix();
    let lt = nalgebra::Cholesky::new(a.clone())
        .ok_or(Error::NotPositiveDefinite)?
        .l()
        .transpose();
    let prolong = if stepper.params().scheme == SchemeKind::ImplicitScalar {
        Matrix::identity(a.nrows(), a.nrows())
    } else {
        stepper.family().stacked_restriction().transpose()
    };
    let obs = lt * prolong;
    if stepper.params().scheme.is_three_level() {
        let d = obs.ncols();
        let mut out = Matrix::zeros(obs.nrows(), 2 * d);
        out.columns_mut(0, d).copy_from(&(&obs * 0.5));
        out.columns_mut(d, d).copy_from(&(&obs * 0.5));
        Ok(out)
    } else {
        Ok(obs)
    }
}
