//! Test problems: finite-difference heat operators, manufactured solutions
//! and an exact modal-solution oracle.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{
    direct_sum_family, interleaved_sets, overlapping_family, overlapping_strip_sets, strip_sets,
    DecompositionFamily,
};
use crate::error::{check_dim, Error, Result};
use crate::linops::{symmetric_eigen, Matrix, SymmetricOperator, Vector, ORACLE_CAP};

/// `A = (1/h²) tridiag(-1, 2, -1)` with `h = length / (m + 1)`, homogeneous Dirichlet.
pub fn heat_1d(m: usize, length: f64) -> Result<SymmetricOperator> {
    if m < 1 {
        return Err(Error::Config("heat_1d needs at least one interior node".into()));
    }
    if !(length > 0.0) {
        return Err(Error::Config(format!("heat_1d length must be positive, got {length}")));
    }
    let h = length / (m + 1) as f64;
    let inv = 1.0 / (h * h);
    SymmetricOperator::new(Matrix::from_fn(m, m, |i, j| {
        if i == j {
            2.0 * inv
        } else if i.abs_diff(j) == 1 {
            -inv
        } else {
            0.0
        }
    }))
}

/// Closed-form spectrum of [`heat_1d`], ascending.
pub fn heat_1d_eigenvalues(m: usize, length: f64) -> Vec<f64> {
    let h = length / (m + 1) as f64;
    (1..=m)
        .map(|k| 4.0 / (h * h) * (k as f64 * PI * h / (2.0 * length)).sin().powi(2))
        .collect()
}

/// 5-point Laplacian on the unit square with `mx x my` interior nodes,
/// index `i + mx * j`.
pub fn heat_2d(mx: usize, my: usize) -> Result<SymmetricOperator> {
    if mx < 1 || my < 1 {
        return Err(Error::Config("heat_2d needs at least one node per direction".into()));
    }
    let (hx, hy) = (1.0 / (mx + 1) as f64, 1.0 / (my + 1) as f64);
    let (ix, iy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let n = mx * my;
    let mut a = Matrix::zeros(n, n);
    for j in 0..my {
        for i in 0..mx {
            let k = i + mx * j;
            a[(k, k)] = 2.0 * ix + 2.0 * iy;
            if i > 0 {
                a[(k, k - 1)] = -ix;
                a[(k - 1, k)] = -ix;
            }
            if j > 0 {
                a[(k, k - mx)] = -iy;
                a[(k - mx, k)] = -iy;
            }
        }
    }
    SymmetricOperator::new(a)
}

/// Spatial grid behind a heat operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grid {
    Line { m: usize, length: f64 },
    Rect { mx: usize, my: usize },
}

impl Grid {
    pub fn dim(&self) -> usize {
        match *self {
            Grid::Line { m, .. } => m,
            Grid::Rect { mx, my } => mx * my,
        }
    }

    pub fn operator(&self) -> Result<SymmetricOperator> {
        match *self {
            Grid::Line { m, length } => heat_1d(m, length),
            Grid::Rect { mx, my } => heat_2d(mx, my),
        }
    }

    /// `sin(k π x / L)` (times `sin(k π y)` in 2-D) sampled at the nodes.
    fn sine_mode(&self, k: f64) -> Vector {
        match *self {
            Grid::Line { m, length } => {
                let h = length / (m + 1) as f64;
                Vector::from_fn(m, |i, _| (k * PI * (i + 1) as f64 * h / length).sin())
            }
            Grid::Rect { mx, my } => {
                let (hx, hy) = (1.0 / (mx + 1) as f64, 1.0 / (my + 1) as f64);
                Vector::from_fn(mx * my, |idx, _| {
                    let (i, j) = (idx % mx, idx / mx);
                    (k * PI * (i + 1) as f64 * hx).sin() * (k * PI * (j + 1) as f64 * hy).sin()
                })
            }
        }
    }
}

/// A vector-valued function of time.
pub type TimeFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// `du/dt + A u = f(t)`, `u(0) = u0` on `[0, T]`.
#[derive(Clone)]
pub struct EvolutionProblem {
    pub name: String,
    pub a: SymmetricOperator,
    pub forcing: TimeFn,
    /// Skips forcing evaluation when the right-hand side vanishes.
    pub zero_forcing: bool,
    pub initial: Vector,
    pub horizon: f64,
    pub exact: Option<TimeFn>,
}

impl fmt::Debug for EvolutionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvolutionProblem")
            .field("name", &self.name)
            .field("dim", &self.a.dim())
            .field("horizon", &self.horizon)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl EvolutionProblem {
    pub fn new(
        name: impl Into<String>,
        a: SymmetricOperator,
        forcing: TimeFn,
        initial: Vector,
        horizon: f64,
    ) -> Result<Self> {
        check_dim(a.dim(), initial.len())?;
        check_dim(a.dim(), forcing(0.0).len())?;
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            a,
            forcing,
            zero_forcing: false,
            initial,
            horizon,
            exact: None,
        })
    }

    /// `f ≡ 0`.
    pub fn homogeneous(
        name: impl Into<String>,
        a: SymmetricOperator,
        initial: Vector,
        horizon: f64,
    ) -> Result<Self> {
        let n = a.dim();
        let mut p = Self::new(name, a, Arc::new(move |_| Vector::zeros(n)), initial, horizon)?;
        p.zero_forcing = true;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn forcing_at(&self, t: f64) -> Vector {
        if self.zero_forcing {
            Vector::zeros(self.dim())
        } else {
            (self.forcing)(t)
        }
    }

    pub fn exact_at(&self, t: f64) -> Option<Vector> {
        self.exact.as_ref().map(|e| e(t))
    }

    pub fn with_exact(mut self, exact: TimeFn) -> Self {
        self.exact = Some(exact);
        self
    }
}

/// Smooth exact solutions for convergence studies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `u = sin(πx) e^{-t}`.
    #[default]
    Sine,
    /// `u = sin(πx) cos(t) + ½ sin(2πx) sin(2t)`.
    Oscillating,
}

/// Manufactured problem whose forcing `f = u' + A u` uses the discrete `A`,
/// so the sampled exact solution solves the semi-discrete system exactly.
pub fn manufactured(
    a: &SymmetricOperator,
    grid: &Grid,
    profile: Profile,
    horizon: f64,
) -> Result<EvolutionProblem> {
    check_dim(grid.dim(), a.dim())?;
    let s1 = grid.sine_mode(1.0);
    let s2 = grid.sine_mode(2.0);
    let as1 = a.apply(&s1)?;
    let as2 = a.apply(&s2)?;
    // u(t) = α(t) s1 + β(t) s2
    type Scalar = fn(f64) -> f64;
    let (alpha, dalpha, beta, dbeta): (Scalar, Scalar, Scalar, Scalar) = match profile {
        Profile::Sine => (|t| (-t).exp(), |t| -(-t).exp(), |_| 0.0, |_| 0.0),
        Profile::Oscillating => (
            |t| t.cos(),
            |t| -t.sin(),
            |t| 0.5 * (2.0 * t).sin(),
            |t| (2.0 * t).cos(),
        ),
    };
    let (fs1, fs2) = (s1.clone(), s2.clone());
    let forcing: TimeFn = Arc::new(move |t| {
        &fs1 * dalpha(t) + &as1 * alpha(t) + &fs2 * dbeta(t) + &as2 * beta(t)
    });
    let exact: TimeFn = Arc::new(move |t| &s1 * alpha(t) + &s2 * beta(t));
    let initial = exact(0.0);
    let name = match profile {
        Profile::Sine => "manufactured-sine",
        Profile::Oscillating => "manufactured-oscillating",
    };
    Ok(EvolutionProblem::new(name, a.clone(), forcing, initial, horizon)?.with_exact(exact))
}

/// Exact solution of `u' + A u = f` by diagonalizing `A` and integrating each
/// mode by variation of constants.
pub struct ModalOracle {
    eigenvalues: Vector,
    eigenvectors: Matrix,
    initial: Vector,
    initial_coeffs: Vector,
    forcing: Option<TimeFn>,
}

impl ModalOracle {
    pub fn new(problem: &EvolutionProblem) -> Result<Self> {
        let (eigenvalues, eigenvectors) = symmetric_eigen(problem.a.matrix(), ORACLE_CAP)?;
        let initial_coeffs = eigenvectors.tr_mul(&problem.initial);
        Ok(Self {
            eigenvalues,
            eigenvectors,
            initial: problem.initial.clone(),
            initial_coeffs,
            forcing: (!problem.zero_forcing).then(|| problem.forcing.clone()),
        })
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    /// `u(t)`; `t = 0` returns `u^0` itself rather than its modal synthesis.
    pub fn at(&self, t: f64) -> Vector {
        if t == 0.0 {
            return self.initial.clone();
        }
        let mut coeffs = Vector::from_fn(self.eigenvalues.len(), |k, _| {
            (-self.eigenvalues[k] * t).exp() * self.initial_coeffs[k]
        });
        if let Some(f) = &self.forcing {
            if t > 0.0 {
                coeffs += self.duhamel(f, t);
            }
        }
        &self.eigenvectors * coeffs
    }

    /// `∫_0^t e^{-λ_k (t-s)} (f(s), φ_k) ds` on panels graded toward `s = t`,
    /// each split into sub-panels with 10-point Gauss-Legendre.
    fn duhamel(&self, f: &TimeFn, t: f64) -> Vector {
        let lambda_max = self.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
        let levels = ((lambda_max * t).max(1.0).log2().ceil() as usize) + 8;
        let mut breaks = vec![0.0];
        for j in 1..=levels {
            breaks.push(t - t * 0.5_f64.powi(j as i32));
        }
        breaks.push(t);
        let mut acc = Vector::zeros(self.eigenvalues.len());
        const SUB: usize = 8;
        for w in breaks.windows(2) {
            let width = (w[1] - w[0]) / SUB as f64;
            for s in 0..SUB {
                let a = w[0] + s as f64 * width;
                for (node, weight) in GAUSS_LEGENDRE_10 {
                    let x = a + 0.5 * width * (node + 1.0);
                    let g = self.eigenvectors.tr_mul(&f(x));
                    for k in 0..acc.len() {
                        acc[k] += 0.5 * width * weight * (-self.eigenvalues[k] * (t - x)).exp() * g[k];
                    }
                }
            }
        }
        acc
    }
}

/// Convenience wrapper around [`ModalOracle`].
pub fn modal_exact(problem: &EvolutionProblem, t: f64) -> Result<Vector> {
    Ok(ModalOracle::new(problem)?.at(t))
}

const GAUSS_LEGENDRE_10: [(f64, f64); 10] = [
    (-0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
    (-0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (-0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
    (-0.433_395_394_129_247_2, 0.269_266_719_309_996_35),
    (-0.148_874_338_981_631_2, 0.295_524_224_714_752_87),
    (0.148_874_338_981_631_2, 0.295_524_224_714_752_87),
    (0.433_395_394_129_247_2, 0.269_266_719_309_996_35),
    (0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
    (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
];

/// Uniform random vector in `[-1, 1]^n` from a seeded ChaCha stream.
pub fn random_vector(n: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0))
}

/// Builds a family from a short name:
/// `trivial`, `strips-<p>`, `interleaved-<p>`, `overlap-<p>-<width>`,
/// `boxes-<px>x<py>` and `boxes-<px>x<py>-<width>` (2-D grids only).
pub fn named_family(name: &str, grid: &Grid) -> Result<DecompositionFamily> {
    let n = grid.dim();
    let bad = || Error::Config(format!("unknown family `{name}`"));
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let parts: Vec<&str> = name.split('-').collect();
    match parts.as_slice() {
        ["trivial"] => direct_sum_family(n, &[(0..n).collect()]),
        ["strips", p] => direct_sum_family(n, &strip_sets(n, num(p)?.max(1))),
        ["interleaved", p] => direct_sum_family(n, &interleaved_sets(n, num(p)?.max(1))),
        ["overlap", p, w] => overlapping_family(n, &overlapping_strip_sets(n, num(p)?.max(1), num(w)?), None),
        ["boxes", shape] | ["boxes", shape, _] => {
            let Grid::Rect { mx, my } = *grid else {
                return Err(Error::Config(format!("family `{name}` needs a 2-D grid")));
            };
            let (px, py) = shape.split_once('x').ok_or_else(bad)?;
            let width = if parts.len() == 3 { num(parts[2])? } else { 0 };
            let sets = box_sets(mx, my, num(px)?.max(1), num(py)?.max(1), width);
            if width == 0 {
                direct_sum_family(n, &sets)
            } else {
                overlapping_family(n, &sets, None)
            }
        }
        _ => Err(bad()),
    }
}

/// Tensor-product boxes on an `mx x my` grid, extended by `overlap` nodes.
pub fn box_sets(mx: usize, my: usize, px: usize, py: usize, overlap: usize) -> Vec<Vec<usize>> {
    let xs = strip_sets(mx, px);
    let ys = strip_sets(my, py);
    let mut out = Vec::new();
    for ys_j in &ys {
        for xs_i in &xs {
            let (x0, x1) = (xs_i[0].saturating_sub(overlap), (xs_i[xs_i.len() - 1] + overlap).min(mx - 1));
            let (y0, y1) = (ys_j[0].saturating_sub(overlap), (ys_j[ys_j.len() - 1] + overlap).min(my - 1));
            let mut set = Vec::new();
            for j in y0..=y1 {
                for i in x0..=x1 {
                    set.push(i + mx * j);
                }
            }
            out.push(set);
        }
    }
    out
}

/// The example families exercised by the acceptance suite, for 1-D grids.
pub const SHIPPED_FAMILIES: [&str; 7] = [
    "trivial",
    "strips-2",
    "interleaved-3",
    "strips-4",
    "overlap-2-2",
    "overlap-3-2",
    "overlap-4-1",
];

pub fn shipped_families(grid: &Grid) -> Result<Vec<(String, DecompositionFamily)>> {
    SHIPPED_FAMILIES
        .iter()
        .map(|name| Ok((name.to_string(), named_family(name, grid)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{validate_family, FamilyKind};
    use crate::linops::{min_eigenvalue, symmetric_eigenvalues};

    #[test]
    fn heat_1d_examples() {
        assert_eq!(heat_1d(1, 2.0).unwrap().matrix()[(0, 0)], 2.0);
        let a = heat_1d(4, 1.0).unwrap();
        let h = 0.2;
        let expected = (2.0 - 2.0 * (PI / 5.0).cos()) / (h * h);
        assert!((min_eigenvalue(&a).unwrap() - expected).abs() < 1e-9 * expected);
        for row in a.matrix().row_iter() {
            let diag_dominant = row.iter().sum::<f64>() >= -1e-12;
            assert!(diag_dominant);
        }
        assert!(heat_1d(0, 1.0).is_err());
    }

    #[test]
    fn heat_1d_spectrum_closed_form() {
        let (m, l) = (12, 3.0);
        let got = symmetric_eigenvalues(heat_1d(m, l).unwrap().matrix(), 100).unwrap();
        let want = heat_1d_eigenvalues(m, l);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * want[m - 1]);
        }
    }

    #[test]
    fn heat_2d_examples() {
        assert_eq!(heat_2d(1, 1).unwrap().matrix()[(0, 0)], 16.0);
        let a = heat_2d(4, 3).unwrap();
        let mut got: Vec<f64> = symmetric_eigenvalues(a.matrix(), 100).unwrap().iter().copied().collect();
        let mut want: Vec<f64> = heat_1d_eigenvalues(4, 1.0)
            .iter()
            .flat_map(|x| heat_1d_eigenvalues(3, 1.0).into_iter().map(move |y| x + y))
            .collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * want[want.len() - 1]);
        }
        let sq = heat_2d(4, 4).unwrap();
        assert!(min_eigenvalue(&sq).unwrap() > 0.0);
        assert!(heat_2d(0, 3).is_err());
    }

    #[test]
    fn manufactured_residual_vanishes() {
        for grid in [Grid::Line { m: 16, length: 1.0 }, Grid::Rect { mx: 5, my: 4 }] {
            for profile in [Profile::Sine, Profile::Oscillating] {
                let a = grid.operator().unwrap();
                let prob = manufactured(&a, &grid, profile, 1.0).unwrap();
                let exact = prob.exact.clone().unwrap();
                for k in 0..10 {
                    let t = 0.137 * k as f64;
                    let dt = 1e-6;
                    // derivative of the analytic time factor, checked by the known closed form
                    let du = match profile {
                        Profile::Sine => -exact(t),
                        Profile::Oscillating => {
                            let s1 = grid.sine_mode(1.0);
                            let s2 = grid.sine_mode(2.0);
                            &s1 * -t.sin() + &s2 * (2.0 * t).cos()
                        }
                    };
                    let res = &du + a.apply(&exact(t)).unwrap() - prob.forcing_at(t);
                    assert!(res.amax() < 1e-12 * (1.0 + prob.forcing_at(t).amax()));
                    // and the closed-form derivative agrees with a central difference
                    let fd = (exact(t + dt) - exact(t - dt)) / (2.0 * dt);
                    assert!((fd - du).amax() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn manufactured_initial_is_sampled_sine() {
        let grid = Grid::Line { m: 7, length: 1.0 };
        let a = grid.operator().unwrap();
        let prob = manufactured(&a, &grid, Profile::Sine, 1.0).unwrap();
        for i in 0..7 {
            assert_eq!(prob.initial[i], (PI * (i + 1) as f64 / 8.0).sin());
        }
    }

    #[test]
    fn modal_oracle_cases() {
        let grid = Grid::Line { m: 12, length: 1.0 };
        let a = grid.operator().unwrap();
        let u0 = random_vector(12, 3);
        let hom = EvolutionProblem::homogeneous("h", a.clone(), u0.clone(), 1.0).unwrap();
        let oracle = ModalOracle::new(&hom).unwrap();
        assert!((oracle.at(0.0) - &u0).amax() < 1e-13);

        // steady forcing: long-time limit is A^{-1} f
        let f = Vector::from_fn(12, |i, _| 1.0 + i as f64);
        let ff = f.clone();
        let steady = EvolutionProblem::new("s", a.clone(), Arc::new(move |_| ff.clone()), u0, 50.0).unwrap();
        let limit = a.matrix().clone().lu().solve(&f).unwrap();
        let got = modal_exact(&steady, 50.0).unwrap();
        assert!((got - &limit).amax() < 1e-9 * limit.amax());

        let prob = manufactured(&a, &grid, Profile::Oscillating, 1.0).unwrap();
        let exact = prob.exact_at(0.5).unwrap();
        assert!((modal_exact(&prob, 0.5).unwrap() - exact).amax() < 1e-9);
    }

    #[test]
    fn modal_oracle_stiff_manufactured() {
        let grid = Grid::Line { m: 32, length: 1.0 };
        let a = grid.operator().unwrap();
        let prob = manufactured(&a, &grid, Profile::Sine, 1.0).unwrap();
        let got = modal_exact(&prob, 0.5).unwrap();
        assert!((got - prob.exact_at(0.5).unwrap()).amax() < 1e-9);
    }

    #[test]
    fn named_families() {
        let line = Grid::Line { m: 32, length: 1.0 };
        for (name, fam) in shipped_families(&line).unwrap() {
            let r = validate_family(&fam);
            assert!(r.is_valid(), "{name}");
            assert_eq!(r.direct_sum, !name.starts_with("overlap"), "{name}");
        }
        let rect = Grid::Rect { mx: 6, my: 4 };
        let f = named_family("boxes-2x2", &rect).unwrap();
        assert_eq!(f.kind(), FamilyKind::DirectSum);
        assert_eq!(f.p(), 4);
        let f = named_family("boxes-2x2-1", &rect).unwrap();
        assert_eq!(f.kind(), FamilyKind::Overlapping);
        assert!(named_family("boxes-2x2", &line).is_err());
        assert!(named_family("wobble-3", &line).is_err());
    }
}
