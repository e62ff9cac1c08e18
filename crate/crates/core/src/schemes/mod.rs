//! Time steppers for `C dv/dt + B v = f` on block states, and the scalar
//! implicit scheme they are compared against.
//!
//! Every stepper works on the flat layout of a [`BlockVector`]; the public
//! `step_*` functions wrap the same kernels that [`Stepper`] runs with cached
//! factorizations.

mod certificates;
mod monitor;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_mass, assemble_stiffness, diagonal_part, triangular_split, BlockDiagonalSolver,
    BlockOperator,
};
use crate::decomposition::{decompose, BlockVector, DecompositionFamily, FamilyKind};
use crate::error::{check_dim, Error, Result};
use crate::linops::{self, mm, Cholesky, SymmetricOperator, Vector, SOLVER_TOL};
use crate::problems::EvolutionProblem;

pub use certificates::{
    amplification_matrix, certificate_operator, check_d_operator, d_operator, factorized_certificate,
    factorized_g_operator, observable_matrix, two_level_certificate, two_level_operator,
};
pub use monitor::{max_violation_ratio, monitor_energy, MonitorRecord, SLACK};

/// Accepted residual of the consistent singular solve in the vector scheme.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ImplicitScalar,
    ImplicitVector,
    ThreeLevelSplit,
    ThreeLevelDirectsum,
    TwoLevelDirectsum,
    Factorized,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::ImplicitScalar,
        SchemeKind::ImplicitVector,
        SchemeKind::ThreeLevelSplit,
        SchemeKind::ThreeLevelDirectsum,
        SchemeKind::TwoLevelDirectsum,
        SchemeKind::Factorized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ImplicitScalar => "implicit_scalar",
            SchemeKind::ImplicitVector => "implicit_vector",
            SchemeKind::ThreeLevelSplit => "three_level_split",
            SchemeKind::ThreeLevelDirectsum => "three_level_directsum",
            SchemeKind::TwoLevelDirectsum => "two_level_directsum",
            SchemeKind::Factorized => "factorized",
        }
    }

    pub fn is_three_level(self) -> bool {
        matches!(self, SchemeKind::ThreeLevelSplit | SchemeKind::ThreeLevelDirectsum)
    }

    pub fn needs_direct_sum(self) -> bool {
        matches!(
            self,
            SchemeKind::ThreeLevelDirectsum | SchemeKind::TwoLevelDirectsum | SchemeKind::Factorized
        )
    }

    pub fn uses_mu(self) -> bool {
        self == SchemeKind::ThreeLevelSplit
    }

    pub fn uses_sigma(self) -> bool {
        !matches!(self, SchemeKind::ImplicitScalar | SchemeKind::ImplicitVector)
    }

    /// Sufficient unconditional-stability thresholds `(mu_min, sigma_min)`
    /// for a family of `p` components.
    pub fn thresholds(self, p: usize) -> (Option<f64>, Option<f64>) {
        let p = p as f64;
        match self {
            SchemeKind::ImplicitScalar | SchemeKind::ImplicitVector => (None, None),
            SchemeKind::ThreeLevelSplit => (Some(p / 2.0), Some(p / 4.0)),
            SchemeKind::ThreeLevelDirectsum => (None, Some(p / 4.0)),
            SchemeKind::TwoLevelDirectsum => (None, Some(p / 2.0)),
            SchemeKind::Factorized => (None, Some(0.5)),
        }
    }

    /// Formal order in time for the given weight.
    pub fn expected_order(self, sigma: Option<f64>) -> f64 {
        match self {
            SchemeKind::ThreeLevelSplit => 1.0,
            SchemeKind::ThreeLevelDirectsum => 2.0,
            SchemeKind::Factorized if sigma == Some(0.5) => 2.0,
            _ => 1.0,
        }
    }

    /// Forcing sample used when the configuration leaves it open. The
    /// factorized scheme at `σ = 1/2` is a Crank-Nicolson perturbation and
    /// needs the midpoint value to be second order.
    pub fn default_forcing(self) -> ForcingSample {
        match self {
            SchemeKind::Factorized => ForcingSample::Midpoint,
            _ => ForcingSample::Left,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Where in `[t^n, t^{n+1}]` the right-hand side is sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingSample {
    #[default]
    Left,
    Midpoint,
}

impl ForcingSample {
    pub fn time(self, n: usize, tau: f64) -> f64 {
        match self {
            ForcingSample::Left => n as f64 * tau,
            ForcingSample::Midpoint => (n as f64 + 0.5) * tau,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ForcingSample::Left => "left",
            ForcingSample::Midpoint => "midpoint",
        }
    }
}

/// How three-level schemes obtain `w^1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStep {
    /// One step of the implicit vector scheme.
    #[default]
    Implicit,
    /// Decomposition of the exact solution at `t = τ`.
    Exact,
}

impl FirstStep {
    pub fn name(self) -> &'static str {
        match self {
            FirstStep::Implicit => "implicit",
            FirstStep::Exact => "exact",
        }
    }
}

/// User-facing scheme parameters. Unset weights default to the stability
/// thresholds of the family, unset `steps` to `round(T / τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub steps: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub forcing: Option<ForcingSample>,
    pub first_step: FirstStep,
    pub parallel: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::ImplicitScalar,
            tau: 0.01,
            mu: None,
            sigma: None,
            steps: None,
            tol: SOLVER_TOL,
            max_iter: 10_000,
            forcing: None,
            first_step: FirstStep::Implicit,
            parallel: false,
        }
    }
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, tau: f64) -> Self {
        Self {
            scheme,
            tau,
            ..Self::default()
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = Some(steps);
        self
    }

    pub fn with_forcing(mut self, forcing: ForcingSample) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_first_step(mut self, first_step: FirstStep) -> Self {
        self.first_step = first_step;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Fills defaults for a family of `p` components and horizon `T`.
    pub fn resolve(&self, p: usize, horizon: f64) -> Result<Params> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("solver tol and max_iter must be positive".into()));
        }
        let (mu_min, sigma_min) = self.scheme.thresholds(p);
        let mu = mu_min.map(|m| self.mu.unwrap_or(m));
        let sigma = sigma_min.map(|s| self.sigma.unwrap_or(s));
        for (name, v) in [("mu", mu), ("sigma", sigma)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
                }
            }
        }
        if mu == Some(0.0) && sigma == Some(0.0) {
            return Err(Error::Config("mu and sigma cannot both vanish".into()));
        }
        let steps = match self.steps {
            Some(n) => n,
            None => {
                if !(horizon > 0.0) {
                    return Err(Error::Config("steps unset and horizon not positive".into()));
                }
                (horizon / self.tau).round() as usize
            }
        };
        Ok(Params {
            scheme: self.scheme,
            tau: self.tau,
            mu,
            sigma,
            steps,
            tol: self.tol,
            max_iter: self.max_iter,
            forcing: self.forcing.unwrap_or(self.scheme.default_forcing()),
            first_step: self.first_step,
            parallel: self.parallel,
        })
    }
}

/// Fully resolved scheme parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub scheme: SchemeKind,
    pub tau: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub forcing: ForcingSample,
    pub first_step: FirstStep,
    pub parallel: bool,
}

impl Params {
    fn mu(&self) -> f64 {
        self.mu.unwrap_or(0.5)
    }

    fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(1.0)
    }
}

/// Warnings for weights below the sufficient stability thresholds.
pub fn regime_warnings(params: &Params, p: usize) -> Vec<String> {
    let (mu_min, sigma_min) = params.scheme.thresholds(p);
    let mut out = Vec::new();
    let checks = [("mu", params.mu, mu_min), ("sigma", params.sigma, sigma_min)];
    for (name, value, min) in checks {
        if let (Some(v), Some(m)) = (value, min) {
            if v < m {
                out.push(format!(
                    "outside guaranteed regime: {} with {name} = {v} < {m} (p = {p})",
                    params.scheme
                ));
            }
        }
    }
    out
}

/// Block operators of one family, assembled once per run.
#[derive(Clone, Debug)]
pub struct SchemeOperators {
    pub c: BlockOperator,
    pub c0: BlockOperator,
    pub b: BlockOperator,
    pub b0: BlockOperator,
    pub b1: BlockOperator,
    pub b2: BlockOperator,
}

impl SchemeOperators {
    pub fn assemble(family: &DecompositionFamily, a: &SymmetricOperator) -> Result<Self> {
        let c = assemble_mass(family);
        let b = assemble_stiffness(family, a)?;
        let (b1, b2) = triangular_split(&b)?;
        Ok(Self {
            c0: diagonal_part(&c),
            b0: diagonal_part(&b),
            c,
            b,
            b1,
            b2,
        })
    }
}

/// Solver for `C + τB`: Cholesky when it factors, otherwise conjugate
/// gradients with a consistency check on the residual.
#[derive(Clone, Debug)]
pub(crate) struct VectorSolver {
    system: SymmetricOperator,
    chol: Option<Cholesky>,
    tol: f64,
    max_iter: usize,
}

impl VectorSolver {
    pub(crate) fn new(c: &BlockOperator, b: &BlockOperator, tau: f64, tol: f64, max_iter: usize) -> Result<Self> {
        let system = c.add_scaled(tau, b)?.to_symmetric_operator()?;
        let chol = Cholesky::factor(system.matrix()).ok();
        Ok(Self {
            system,
            chol,
            tol,
            max_iter,
        })
    }

    pub(crate) fn solve(&self, rhs: &Vector) -> Result<Vector> {
        if let Some(chol) = &self.chol {
            return Ok(chol.solve(rhs));
        }
        let run = linops::cg_run(self.system.matrix(), rhs, self.tol, self.max_iter)?;
        if run.converged || run.residual <= CONSISTENCY_TOL {
            Ok(run.x)
        } else if run.stagnated {
            Err(Error::AssemblyMismatch {
                residual: run.residual,
            })
        } else {
            Err(Error::SolverFailure {
                iterations: run.iterations,
                residual: run.residual,
            })
        }
    }
}

fn implicit_scalar_kernel(chol: &Cholesky, y: &Vector, f: &Vector, tau: f64) -> Vector {
    chol.solve(&(y + f * tau))
}

fn implicit_vector_kernel(solver: &VectorSolver, c: &BlockOperator, f: &Vector, w: &Vector, tau: f64) -> Result<Vector> {
    let mut rhs = f * tau;
    c.apply_flat_into(w, 1.0, &mut rhs);
    solver.solve(&rhs)
}

/// `w^{n+1} = w^n + r + M⁻¹(f - B w^n - C r / τ)` with `r = w^n - w^{n-1}`
/// and the block-diagonal `M = (μ/τ) C0 + σ B0`; `c = None` means `C = I`.
#[allow(clippy::too_many_arguments)]
fn three_level_kernel(
    diag: &BlockDiagonalSolver,
    c: Option<&BlockOperator>,
    b: &BlockOperator,
    f: &Vector,
    w: &Vector,
    w_prev: &Vector,
    tau: f64,
    parallel: bool,
) -> Vector {
    let r = w - w_prev;
    let mut g = f.clone();
    b.apply_flat_into(w, -1.0, &mut g);
    match c {
        Some(c) => c.apply_flat_into(&r, -1.0 / tau, &mut g),
        None => g.axpy(-1.0 / tau, &r, 1.0),
    }
    diag.solve_in_place(&mut g, parallel);
    g + w + r
}

/// `(I + τσB0)(w^{n+1} - w^n) = τ(f - B w^n)`.
fn two_level_kernel(diag: &BlockDiagonalSolver, b: &BlockOperator, f: &Vector, w: &Vector, tau: f64, parallel: bool) -> Vector {
    let mut g = f * tau;
    b.apply_flat_into(w, -tau, &mut g);
    diag.solve_in_place(&mut g, parallel);
    g + w
}

/// `(I + τσB1)(I + τσB2) z = f - B w^n`, `w^{n+1} = w^n + τ z`, by a forward
/// sweep over block rows of `B1` and a backward sweep over `B2`; both
/// diagonal solves use the factors of `I + τσ B1_ii`.
#[allow(clippy::too_many_arguments)]
fn factorized_kernel(
    diag: &BlockDiagonalSolver,
    b: &BlockOperator,
    b1: &BlockOperator,
    b2: &BlockOperator,
    f: &Vector,
    w: &Vector,
    tau: f64,
    sigma: f64,
) -> Vector {
    let p = b.p();
    let (offsets, dims) = (b.offsets(), b.dims());
    let ts = tau * sigma;
    let mut g = f.clone();
    b.apply_flat_into(w, -1.0, &mut g);

    let mut x = Vector::zeros(g.len());
    for i in 0..p {
        let mut xi = g.rows(offsets[i], dims[i]).into_owned();
        b1.row_apply_into(i, 0..i, &x, -ts, &mut xi);
        diag.factor(i).solve_in_place(&mut xi);
        x.rows_mut(offsets[i], dims[i]).copy_from(&xi);
    }
    let mut z = Vector::zeros(g.len());
    for i in (0..p).rev() {
        let mut zi = x.rows(offsets[i], dims[i]).into_owned();
        b2.row_apply_into(i, i + 1..p, &z, -ts, &mut zi);
        diag.factor(i).solve_in_place(&mut zi);
        z.rows_mut(offsets[i], dims[i]).copy_from(&zi);
    }
    z * tau + w
}

fn require_direct_sum(kind: SchemeKind, family: &DecompositionFamily) -> Result<()> {
    if kind.needs_direct_sum() && family.kind() != FamilyKind::DirectSum {
        return Err(Error::SchemePrecondition(format!(
            "{kind} needs a direct-sum family, got {:?}",
            family.kind()
        )));
    }
    Ok(())
}

fn require_direct_sum_ops(kind: SchemeKind, c: Option<&BlockOperator>, b: &BlockOperator) -> Result<()> {
    let identity = BlockOperator::identity(b.dims());
    if let Some(c) = c {
        if c.to_dense() != identity.to_dense() {
            return Err(Error::SchemePrecondition(format!("{kind} needs C = I (direct-sum family)")));
        }
    }
    Ok(())
}

fn check_blocks(b: &BlockOperator, vs: &[&BlockVector]) -> Result<()> {
    for v in vs {
        check_dim(b.p(), v.num_parts())?;
        check_dim(b.total_dim(), v.flat().len())?;
    }
    Ok(())
}

/// `(I + τA) y^{n+1} = y^n + τ f^n`.
pub fn step_implicit_scalar(a: &SymmetricOperator, f_n: &Vector, y_n: &Vector, tau: f64) -> Result<Vector> {
    check_dim(a.dim(), y_n.len())?;
    check_dim(a.dim(), f_n.len())?;
    let system = SymmetricOperator::identity(a.dim()).add_scaled(tau, a)?;
    let chol = Cholesky::factor(system.matrix())?;
    Ok(implicit_scalar_kernel(&chol, y_n, f_n, tau))
}

/// `(C + τB) w = C w^n + τ f^n`; singular systems of overlapping families are
/// solved by conjugate gradients from zero.
pub fn step_implicit_vector(
    c: &BlockOperator,
    b: &BlockOperator,
    f_n: &BlockVector,
    w_n: &BlockVector,
    tau: f64,
) -> Result<BlockVector> {
    check_blocks(b, &[f_n, w_n])?;
    let solver = VectorSolver::new(c, b, tau, SOLVER_TOL, 10 * b.total_dim().max(100))?;
    w_n.with_data(implicit_vector_kernel(&solver, c, f_n.flat(), w_n.flat(), tau)?)
}

/// Explicit-implicit three-level step with block-diagonal `(μ/τ)C0 + σB0`.
#[allow(clippy::too_many_arguments)]
pub fn step_three_level_split(
    c: &BlockOperator,
    c0: &BlockOperator,
    b: &BlockOperator,
    b0: &BlockOperator,
    f_n: &BlockVector,
    w_n: &BlockVector,
    w_nm1: &BlockVector,
    tau: f64,
    mu: f64,
    sigma: f64,
) -> Result<BlockVector> {
    check_blocks(b, &[f_n, w_n, w_nm1])?;
    let diag = BlockDiagonalSolver::new(&c0.scaled(mu / tau).add_scaled(sigma, b0)?)?;
    w_n.with_data(three_level_kernel(&diag, Some(c), b, f_n.flat(), w_n.flat(), w_nm1.flat(), tau, false))
}

/// `w^1` from one implicit vector step.
pub fn first_step(
    c: &BlockOperator,
    b: &BlockOperator,
    f_0: &BlockVector,
    v0_blocks: &BlockVector,
    tau: f64,
) -> Result<BlockVector> {
    step_implicit_vector(c, b, f_0, v0_blocks, tau)
}

/// Three-level step for direct sums, with block-diagonal `I/(2τ) + σB0`.
#[allow(clippy::too_many_arguments)]
pub fn step_three_level_directsum(
    c: &BlockOperator,
    b: &BlockOperator,
    b0: &BlockOperator,
    f_n: &BlockVector,
    w_n: &BlockVector,
    w_nm1: &BlockVector,
    tau: f64,
    sigma: f64,
) -> Result<BlockVector> {
    check_blocks(b, &[f_n, w_n, w_nm1])?;
    require_direct_sum_ops(SchemeKind::ThreeLevelDirectsum, Some(c), b)?;
    let m = BlockOperator::identity(b.dims()).scaled(0.5 / tau).add_scaled(sigma, b0)?;
    let diag = BlockDiagonalSolver::new(&m)?;
    w_n.with_data(three_level_kernel(&diag, None, b, f_n.flat(), w_n.flat(), w_nm1.flat(), tau, false))
}

/// Two-level step for direct sums, with block-diagonal `I + τσB0`.
#[allow(clippy::too_many_arguments)]
pub fn step_two_level_directsum(
    c: &BlockOperator,
    b: &BlockOperator,
    b0: &BlockOperator,
    f_n: &BlockVector,
    w_n: &BlockVector,
    tau: f64,
    sigma: f64,
) -> Result<BlockVector> {
    check_blocks(b, &[f_n, w_n])?;
    require_direct_sum_ops(SchemeKind::TwoLevelDirectsum, Some(c), b)?;
    let diag = BlockDiagonalSolver::new(&BlockOperator::identity(b.dims()).add_scaled(tau * sigma, b0)?)?;
    w_n.with_data(two_level_kernel(&diag, b, f_n.flat(), w_n.flat(), tau, false))
}

/// Factorized step `(I + τσB1)(I + τσB2)(w^{n+1} - w^n)/τ + B w^n = f^n`.
#[allow(clippy::too_many_arguments)]
pub fn step_factorized(
    c: &BlockOperator,
    b: &BlockOperator,
    b1: &BlockOperator,
    b2: &BlockOperator,
    f_n: &BlockVector,
    w_n: &BlockVector,
    tau: f64,
    sigma: f64,
) -> Result<BlockVector> {
    check_blocks(b, &[f_n, w_n])?;
    require_direct_sum_ops(SchemeKind::Factorized, Some(c), b)?;
    let diag = factorized_diag(b1, tau, sigma)?;
    w_n.with_data(factorized_kernel(&diag, b, b1, b2, f_n.flat(), w_n.flat(), tau, sigma))
}

fn factorized_diag(b1: &BlockOperator, tau: f64, sigma: f64) -> Result<BlockDiagonalSolver> {
    BlockDiagonalSolver::new(&BlockOperator::identity(b1.dims()).add_scaled(tau * sigma, &diagonal_part(b1))?)
}

/// Current (and for three-level schemes previous) block state.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeState {
    pub current: BlockVector,
    pub previous: Option<BlockVector>,
    pub step: usize,
}

#[derive(Clone, Debug)]
enum Kernel {
    Scalar(Cholesky),
    Vector(VectorSolver),
    ThreeLevel {
        first: Option<VectorSolver>,
        diag: BlockDiagonalSolver,
    },
    TwoLevel(BlockDiagonalSolver),
    Factorized(BlockDiagonalSolver),
}

/// A scheme instance with operators assembled and per-block systems factored once.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: Params,
    family: DecompositionFamily,
    a: SymmetricOperator,
    ops: SchemeOperators,
    kernel: Kernel,
}

impl Stepper {
    pub fn new(a: &SymmetricOperator, family: &DecompositionFamily, params: &Params) -> Result<Self> {
        check_dim(family.n(), a.dim())?;
        require_direct_sum(params.scheme, family)?;
        let ops = SchemeOperators::assemble(family, a)?;
        Self::with_operators(a, family, params, ops)
    }

    pub fn with_operators(
        a: &SymmetricOperator,
        family: &DecompositionFamily,
        params: &Params,
        ops: SchemeOperators,
    ) -> Result<Self> {
        require_direct_sum(params.scheme, family)?;
        let tau = params.tau;
        let vector = || VectorSolver::new(&ops.c, &ops.b, tau, params.tol, params.max_iter);
        let kernel = match params.scheme {
            SchemeKind::ImplicitScalar => {
                let system = SymmetricOperator::identity(a.dim()).add_scaled(tau, a)?;
                Kernel::Scalar(Cholesky::factor(system.matrix())?)
            }
            SchemeKind::ImplicitVector => Kernel::Vector(vector()?),
            SchemeKind::ThreeLevelSplit | SchemeKind::ThreeLevelDirectsum => {
                let m = if params.scheme == SchemeKind::ThreeLevelSplit {
                    ops.c0.scaled(params.mu() / tau).add_scaled(params.sigma(), &ops.b0)?
                } else {
                    BlockOperator::identity(ops.b.dims())
                        .scaled(0.5 / tau)
                        .add_scaled(params.sigma(), &ops.b0)?
                };
                let first = match params.first_step {
                    FirstStep::Implicit => Some(vector()?),
                    FirstStep::Exact => None,
                };
                Kernel::ThreeLevel {
                    first,
                    diag: BlockDiagonalSolver::new(&m)?,
                }
            }
            SchemeKind::TwoLevelDirectsum => Kernel::TwoLevel(BlockDiagonalSolver::new(
                &BlockOperator::identity(ops.b.dims()).add_scaled(tau * params.sigma(), &ops.b0)?,
            )?),
            SchemeKind::Factorized => Kernel::Factorized(factorized_diag(&ops.b1, tau, params.sigma())?),
        };
        Ok(Self {
            params: *params,
            family: family.clone(),
            a: a.clone(),
            ops,
            kernel,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn family(&self) -> &DecompositionFamily {
        &self.family
    }

    pub fn operators(&self) -> &SchemeOperators {
        &self.ops
    }

    pub fn a(&self) -> &SymmetricOperator {
        &self.a
    }

    fn is_scalar(&self) -> bool {
        self.params.scheme == SchemeKind::ImplicitScalar
    }

    /// Dimension of the stepped state (`n` for the scalar scheme, the total
    /// component dimension otherwise).
    pub fn state_dim(&self) -> usize {
        if self.is_scalar() {
            self.a.dim()
        } else {
            self.family.total_dim()
        }
    }

    fn block_dims(&self) -> Vec<usize> {
        if self.is_scalar() {
            vec![self.a.dim()]
        } else {
            self.family.dims()
        }
    }

    pub fn initial_state(&self, u0: &Vector) -> Result<SchemeState> {
        check_dim(self.a.dim(), u0.len())?;
        let current = if self.is_scalar() {
            BlockVector::from_flat(u0.clone(), &[u0.len()])?
        } else {
            decompose(&self.family, u0)?
        };
        Ok(SchemeState {
            current,
            previous: None,
            step: 0,
        })
    }

    pub fn reconstruct(&self, w: &BlockVector) -> Result<Vector> {
        if self.is_scalar() {
            Ok(w.flat().clone())
        } else {
            crate::decomposition::reconstruct(&self.family, w)
        }
    }

    /// Forcing in the state layout: `f` itself or `{R_i f}`.
    pub fn forcing_blocks(&self, f: &Vector) -> Vector {
        if self.is_scalar() {
            f.clone()
        } else {
            self.family.restrict_all(f).into_flat()
        }
    }

    /// One step of the homogeneous or forced scheme on flat states. For
    /// three-level schemes `w_prev` must be present.
    pub fn step_flat(&self, w: &Vector, w_prev: Option<&Vector>, f: &Vector) -> Result<Vector> {
        let tau = self.params.tau;
        let parallel = self.params.parallel;
        let ops = &self.ops;
        match &self.kernel {
            Kernel::Scalar(chol) => Ok(implicit_scalar_kernel(chol, w, f, tau)),
            Kernel::Vector(solver) => implicit_vector_kernel(solver, &ops.c, f, w, tau),
            Kernel::ThreeLevel { diag, .. } => {
                let w_prev = w_prev.ok_or_else(|| {
                    Error::SchemePrecondition("three-level step needs the previous level".into())
                })?;
                let c = (self.params.scheme == SchemeKind::ThreeLevelSplit).then_some(&ops.c);
                Ok(three_level_kernel(diag, c, &ops.b, f, w, w_prev, tau, parallel))
            }
            Kernel::TwoLevel(diag) => Ok(two_level_kernel(diag, &ops.b, f, w, tau, parallel)),
            Kernel::Factorized(diag) => Ok(factorized_kernel(
                diag,
                &ops.b,
                &ops.b1,
                &ops.b2,
                f,
                w,
                tau,
                self.params.sigma(),
            )),
        }
    }

    /// Advances `state` by one step with the sampled forcing `f`. The first
    /// step of a three-level scheme uses the implicit vector scheme or, with
    /// [`FirstStep::Exact`], the decomposition of `exact_next`.
    pub fn advance(&self, state: &mut SchemeState, f: &Vector, exact_next: Option<&Vector>) -> Result<()> {
        let n = state.step;
        let fb = self.forcing_blocks(f);
        let next = match (&self.kernel, &state.previous) {
            (Kernel::ThreeLevel { first, .. }, None) => match first {
                Some(solver) => implicit_vector_kernel(solver, &self.ops.c, &fb, state.current.flat(), self.params.tau),
                None => {
                    let u1 = exact_next.ok_or_else(|| {
                        Error::MissingExact("exact first step requested without an exact solution".into())
                    })?;
                    Ok(decompose(&self.family, u1)?.into_flat())
                }
            },
            (_, prev) => self.step_flat(state.current.flat(), prev.as_ref().map(|p| p.flat()), &fb),
        }
        .map_err(|e| e.at_step(n + 1))?;
        let next = BlockVector::from_flat(next, &self.block_dims())?;
        let old = std::mem::replace(&mut state.current, next);
        if self.params.scheme.is_three_level() {
            state.previous = Some(old);
        }
        state.step += 1;
        Ok(())
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: Params,
    pub times: Vec<f64>,
    /// `y^n`, `n = 0..=N`.
    pub solutions: Vec<Vector>,
    /// `y^{n+1/2} = (y^{n+1} + y^n) / 2` for three-level schemes.
    pub half_steps: Option<Vec<Vector>>,
    /// Block states `w^n`.
    pub states: Vec<BlockVector>,
    /// `||f^k||²` of the sample used in step `k -> k+1`.
    pub forcing_norms_sq: Vec<f64>,
    pub records: Vec<MonitorRecord>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_solution(&self) -> &Vector {
        self.solutions.last().expect("trajectory always holds y^0")
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.records.iter().all(|r| r.bound_ok && r.decay_ok != Some(false))
    }

    /// Writes `n, t, norm_a, energy_bound, flag` per monitor record.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["n", "t", "norm_a", "energy_bound", "flag"])
            .map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                format!("{:.12e}", r.time),
                format!("{:.12e}", r.energy.max(0.0).sqrt()),
                format!("{:.12e}", r.bound),
                (r.bound_ok && r.decay_ok != Some(false)).to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes every `y^n` as a Matrix Market array file `y_<n>.mtx` in `dir`.
    pub fn dump_solutions(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (n, y) in self.solutions.iter().enumerate() {
            mm::write_vector_file(dir.join(format!("y_{n:06}.mtx")), y)?;
        }
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Runs `config` on `problem` with `family`, reconstructing `y^n` and
/// evaluating the energy estimates at every step.
pub fn run(problem: &EvolutionProblem, family: &DecompositionFamily, config: &SchemeConfig) -> Result<Trajectory> {
    let params = config.resolve(family.p(), problem.horizon)?;
    let stepper = Stepper::new(&problem.a, family, &params)?;
    run_stepper(problem, &stepper)
}

pub fn run_stepper(problem: &EvolutionProblem, stepper: &Stepper) -> Result<Trajectory> {
    let params = *stepper.params();
    let tau = params.tau;
    let warnings = regime_warnings(&params, stepper.family().p());
    for w in &warnings {
        log::warn!("{w}");
    }
    if params.first_step == FirstStep::Exact && params.scheme.is_three_level() && problem.exact.is_none() {
        return Err(Error::MissingExact(problem.name.clone()));
    }
    let mut state = stepper.initial_state(&problem.initial)?;
    let mut solutions = vec![problem.initial.clone()];
    let mut states = vec![state.current.clone()];
    let mut forcing_norms_sq = Vec::with_capacity(params.steps);
    for n in 0..params.steps {
        let f = problem.forcing_at(params.forcing.time(n, tau));
        forcing_norms_sq.push(f.norm_squared());
        let exact_next = if n == 0 && params.first_step == FirstStep::Exact {
            problem.exact_at(tau)
        } else {
            None
        };
        stepper.advance(&mut state, &f, exact_next.as_ref())?;
        solutions.push(stepper.reconstruct(&state.current)?);
        states.push(state.current.clone());
    }
    let half_steps = params.scheme.is_three_level().then(|| {
        solutions
            .windows(2)
            .map(|w| (&w[0] + &w[1]) * 0.5)
            .collect::<Vec<_>>()
    });
    let mut traj = Trajectory {
        params,
        times: (0..=params.steps).map(|n| n as f64 * tau).collect(),
        solutions,
        half_steps,
        states,
        forcing_norms_sq,
        records: Vec::new(),
        warnings,
    };
    traj.records = monitor_energy(&traj, &problem.a, stepper.operators());
    Ok(traj)
}

#[cfg(test)]
mod tests;
