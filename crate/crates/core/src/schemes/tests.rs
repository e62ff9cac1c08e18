use std::sync::Arc;

use super::*;
use crate::decomposition::{direct_sum_family, overlapping_family, reconstruct};
use crate::linops::{max_eigenvalue, power_growth, spectral_radius, Matrix};
use crate::problems::{manufactured, named_family, random_vector, Grid, ModalOracle, Profile};

fn scalar_a(v: f64) -> SymmetricOperator {
    SymmetricOperator::new(Matrix::from_element(1, 1, v)).unwrap()
}

fn trivial(n: usize) -> DecompositionFamily {
    direct_sum_family(n, &[(0..n).collect()]).unwrap()
}

fn bv(ops: &SchemeOperators, data: Vector) -> BlockVector {
    BlockVector::from_flat(data, ops.b.dims()).unwrap()
}

fn line(m: usize) -> (Grid, SymmetricOperator) {
    let grid = Grid::Line { m, length: 1.0 };
    (grid, grid.operator().unwrap())
}

fn homogeneous(a: &SymmetricOperator, seed: u64, horizon: f64) -> EvolutionProblem {
    EvolutionProblem::homogeneous("random", a.clone(), random_vector(a.dim(), seed), horizon).unwrap()
}

#[test]
fn implicit_scalar_examples() {
    let a = scalar_a(1.0);
    let y = step_implicit_scalar(&a, &Vector::zeros(1), &Vector::from_element(1, 1.0), 1.0).unwrap();
    assert!((y[0] - 0.5).abs() <= 2.0 * f64::EPSILON);

    let (_, a) = line(8);
    let u_star = random_vector(8, 1);
    let f = a.apply(&u_star).unwrap();
    let y = step_implicit_scalar(&a, &f, &u_star, 0.3).unwrap();
    assert!((y - &u_star).amax() < 1e-12 * u_star.amax().max(1.0) * 100.0);
}

#[test]
fn implicit_scalar_matches_modal_amplification() {
    let (_, a) = line(8);
    let prob = homogeneous(&a, 5, 1.0);
    let tau = 0.05;
    let traj = run(&prob, &trivial(8), &SchemeConfig::new(SchemeKind::ImplicitScalar, tau)).unwrap();
    let (lam, phi) = crate::linops::symmetric_eigen(a.matrix(), 100).unwrap();
    let c0 = phi.tr_mul(&prob.initial);
    for (n, y) in traj.solutions.iter().enumerate() {
        let coeffs = Vector::from_fn(8, |k, _| c0[k] * (1.0 + tau * lam[k]).powi(-(n as i32)));
        let want = &phi * coeffs;
        assert!((y - &want).norm() <= 1e-10 * want.norm().max(1e-300), "step {n}");
    }
}

#[test]
fn implicit_vector_examples() {
    let (_, a) = line(6);
    let y0 = random_vector(6, 2);
    let f = random_vector(6, 3);
    let tau = 0.1;
    let scalar = step_implicit_scalar(&a, &f, &y0, tau).unwrap();

    let fam = trivial(6);
    let ops = SchemeOperators::assemble(&fam, &a).unwrap();
    let w = step_implicit_vector(&ops.c, &ops.b, &fam.restrict_all(&f), &decompose(&fam, &y0).unwrap(), tau).unwrap();
    assert!((w.flat() - &scalar).amax() < 1e-12);

    let ds = direct_sum_family(6, &[vec![0, 3, 4], vec![1, 2, 5]]).unwrap();
    let ops = SchemeOperators::assemble(&ds, &a).unwrap();
    let w = step_implicit_vector(&ops.c, &ops.b, &ds.restrict_all(&f), &decompose(&ds, &y0).unwrap(), tau).unwrap();
    let y = reconstruct(&ds, &w).unwrap();
    assert!((y - &scalar).amax() < 1e-10 * scalar.amax());

    let (_, a3) = line(3);
    let ov = overlapping_family(3, &[vec![0, 1], vec![1, 2]], None).unwrap();
    let ops = SchemeOperators::assemble(&ov, &a3).unwrap();
    let y0 = Vector::from_vec(vec![1.0, -2.0, 0.5]);
    let f = Vector::from_vec(vec![0.3, 0.0, 1.0]);
    let w = step_implicit_vector(&ops.c, &ops.b, &ov.restrict_all(&f), &decompose(&ov, &y0).unwrap(), 0.2).unwrap();
    let y = reconstruct(&ov, &w).unwrap();
    let want = step_implicit_scalar(&a3, &f, &y0, 0.2).unwrap();
    assert!((y - want).amax() < 1e-8);
}

#[test]
fn implicit_vector_kernel_invariance() {
    let (_, a) = line(10);
    let ov = named_family("overlap-3-2", &Grid::Line { m: 10, length: 1.0 }).unwrap();
    let ops = SchemeOperators::assemble(&ov, &a).unwrap();
    let w = decompose(&ov, &random_vector(10, 7)).unwrap();
    let f = ov.restrict_all(&random_vector(10, 8));
    // kernel vector: z = v - decompose(reconstruct(v)) for the weighted decomposition
    let v = BlockVector::from_flat(random_vector(ov.total_dim(), 9), &ov.dims()).unwrap();
    let z = v.flat() - decompose(&ov, &reconstruct(&ov, &v).unwrap()).unwrap().flat();
    assert!(reconstruct(&ov, &bv(&ops, z.clone())).unwrap().amax() < 1e-12);
    let w2 = bv(&ops, w.flat() + z);
    let y1 = reconstruct(&ov, &step_implicit_vector(&ops.c, &ops.b, &f, &w, 0.05).unwrap()).unwrap();
    let y2 = reconstruct(&ov, &step_implicit_vector(&ops.c, &ops.b, &f, &w2, 0.05).unwrap()).unwrap();
    assert!((y1 - &y2).amax() < 1e-10 * y2.amax());
}

#[test]
fn inconsistent_vector_system_is_reported() {
    let (_, a3) = line(3);
    let ov = overlapping_family(3, &[vec![0, 1], vec![1, 2]], None).unwrap();
    let ops = SchemeOperators::assemble(&ov, &a3).unwrap();
    let solver = VectorSolver::new(&ops.c, &ops.b, 0.1, 1e-12, 100).unwrap();
    // a right-hand side with a kernel component is not in the range of C + τB
    let v = BlockVector::from_flat(Vector::from_vec(vec![0.0, 1.0, -1.0, 0.0]), &ov.dims()).unwrap();
    assert!(reconstruct(&ov, &v).unwrap().amax() < 1e-15);
    match solver.solve(v.flat()) {
        Err(Error::AssemblyMismatch { residual }) => assert!(residual > 1e-3),
        other => panic!("expected assembly mismatch, got {other:?}"),
    }
}

#[test]
fn three_level_split_scalar_hand_value() {
    let a = scalar_a(1.0);
    let fam = trivial(1);
    let ops = SchemeOperators::assemble(&fam, &a).unwrap();
    let one = |x: f64| bv(&ops, Vector::from_element(1, x));
    let w2 = step_three_level_split(&ops.c, &ops.c0, &ops.b, &ops.b0, &one(0.0), &one(0.5), &one(1.0), 1.0, 1.0, 1.0)
        .unwrap();
    // (w² - 0.5) + (w² - 0.5 + 1) = 0
    assert!(w2.flat()[0].abs() < 1e-15);
}

/// Right-hand side and matrix of the three-level split step written out
/// term by term, solved monolithically.
#[allow(clippy::too_many_arguments)]
fn three_level_dense(
    ops: &SchemeOperators,
    f: &Vector,
    w: &Vector,
    wp: &Vector,
    tau: f64,
    mu: f64,
    sigma: f64,
) -> Vector {
    let (c, c0, b, b0) = (ops.c.to_dense(), ops.c0.to_dense(), ops.b.to_dense(), ops.b0.to_dense());
    let lhs = &c0 * (mu / tau) + &b0 * sigma;
    let rhs = f + &c0 * w * (mu / tau) - &c0 * (w - wp) * ((1.0 - mu) / tau) - (&c - &c0) * (w - wp) / tau
        - &b0 * (w * (1.0 - 2.0 * sigma) + wp * sigma)
        - (&b - &b0) * w;
    lhs.lu().solve(&rhs).unwrap()
}

#[test]
fn three_level_split_matches_dense_oracle() {
    let grid = Grid::Line { m: 12, length: 1.0 };
    let a = grid.operator().unwrap();
    for name in ["strips-2", "interleaved-3", "overlap-2-2", "overlap-4-1"] {
        let fam = named_family(name, &grid).unwrap();
        let ops = SchemeOperators::assemble(&fam, &a).unwrap();
        let d = fam.total_dim();
        let (f, w, wp) = (random_vector(d, 1), random_vector(d, 2), random_vector(d, 3));
        for (tau, mu, sigma) in [(0.01, 1.0, 0.5), (0.3, 2.0, 0.7), (1e-4, 0.6, 0.1)] {
            let got = step_three_level_split(&ops.c, &ops.c0, &ops.b, &ops.b0, &bv(&ops, f.clone()), &bv(&ops, w.clone()), &bv(&ops, wp.clone()), tau, mu, sigma).unwrap();
            let want = three_level_dense(&ops, &f, &w, &wp, tau, mu, sigma);
            assert!((got.flat() - &want).amax() <= 1e-10 * want.amax(), "{name} {tau}");
        }
    }
}

#[test]
fn fixed_points_of_every_stepper() {
    let grid = Grid::Line { m: 10, length: 1.0 };
    let a = grid.operator().unwrap();
    let fam = named_family("strips-2", &grid).unwrap();
    let ops = SchemeOperators::assemble(&fam, &a).unwrap();
    let w_star = bv(&ops, random_vector(10, 4));
    let f = bv(&ops, ops.b.apply_flat(w_star.flat()));
    let tau = 0.07;
    let scale = w_star.flat().amax();
    let close = |x: &BlockVector| (x.flat() - w_star.flat()).amax() <= 1e-10 * scale;
    assert!(close(&step_implicit_vector(&ops.c, &ops.b, &f, &w_star, tau).unwrap()));
    assert!(close(&step_three_level_split(&ops.c, &ops.c0, &ops.b, &ops.b0, &f, &w_star, &w_star, tau, 1.0, 0.5).unwrap()));
    assert!(close(&step_three_level_directsum(&ops.c, &ops.b, &ops.b0, &f, &w_star, &w_star, tau, 0.5).unwrap()));
    assert!(close(&step_two_level_directsum(&ops.c, &ops.b, &ops.b0, &f, &w_star, tau, 1.0).unwrap()));
    assert!(close(&step_factorized(&ops.c, &ops.b, &ops.b1, &ops.b2, &f, &w_star, tau, 0.5).unwrap()));
    let y = step_implicit_scalar(&a, &reconstruct(&fam, &f).unwrap(), w_star.flat(), tau).unwrap();
    assert!((y - w_star.flat()).amax() <= 1e-10 * scale);
}

#[test]
fn first_step_examples() {
    let (_, a) = line(6);
    let u0 = random_vector(6, 10);
    let f0 = random_vector(6, 11);
    let tau = 0.02;
    let scalar = step_implicit_scalar(&a, &f0, &u0, tau).unwrap();
    for fam in [trivial(6), direct_sum_family(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap()] {
        let ops = SchemeOperators::assemble(&fam, &a).unwrap();
        let w1 = first_step(&ops.c, &ops.b, &fam.restrict_all(&f0), &decompose(&fam, &u0).unwrap(), tau).unwrap();
        assert!((reconstruct(&fam, &w1).unwrap() - &scalar).amax() < 1e-10 * scalar.amax());
        let zero = first_step(&ops.c, &ops.b, &fam.restrict_all(&Vector::zeros(6)), &decompose(&fam, &Vector::zeros(6)).unwrap(), tau).unwrap();
        assert_eq!(zero.flat().amax(), 0.0);
    }
}

#[test]
fn three_level_directsum_scalar_recurrence() {
    let a = scalar_a(1.0);
    let prob = EvolutionProblem::homogeneous("unit", a.clone(), Vector::from_element(1, 1.0), 1.0).unwrap();
    let tau = 0.25;
    let cfg = SchemeConfig::new(SchemeKind::ThreeLevelDirectsum, tau).with_sigma(0.5).with_steps(12);
    let traj = run(&prob, &trivial(1), &cfg).unwrap();
    // (w+ - w-)/(2τ) + (σw+ + (1-2σ)w + σw-) = 0, w¹ from (1 + τ) w¹ = w⁰
    let mut w = vec![1.0, 1.0 / (1.0 + tau)];
    for n in 1..12 {
        let wm = w[n - 1];
        w.push((wm / (2.0 * tau) - 0.5 * wm) / (1.0 / (2.0 * tau) + 0.5));
    }
    for (n, y) in traj.solutions.iter().enumerate() {
        assert!((y[0] - w[n]).abs() < 1e-14, "step {n}");
    }
}

#[test]
fn two_level_examples() {
    let (_, a) = line(8);
    let fam = trivial(8);
    let prob = homogeneous(&a, 12, 1.0);
    let tau = 0.03;
    let two = run(&prob, &fam, &SchemeConfig::new(SchemeKind::TwoLevelDirectsum, tau).with_sigma(1.0)).unwrap();
    let sc = run(&prob, &fam, &SchemeConfig::new(SchemeKind::ImplicitScalar, tau)).unwrap();
    for (x, y) in two.solutions.iter().zip(&sc.solutions) {
        assert!((x - y).amax() <= 1e-12 * y.amax().max(1e-300));
    }

    let grid = Grid::Line { m: 8, length: 1.0 };
    let s4 = named_family("strips-4", &grid).unwrap();
    let at = SchemeConfig::new(SchemeKind::TwoLevelDirectsum, tau).with_sigma(2.0).resolve(4, 1.0).unwrap();
    assert!(regime_warnings(&at, 4).is_empty());
    let below = SchemeConfig::new(SchemeKind::TwoLevelDirectsum, tau).with_sigma(1.99).resolve(4, 1.0).unwrap();
    let warns = regime_warnings(&below, 4);
    assert_eq!(warns.len(), 1);
    assert!(warns[0].contains("outside guaranteed regime"));

    let ops = SchemeOperators::assemble(&s4, &a).unwrap();
    let (f, w) = (random_vector(8, 1), random_vector(8, 2));
    for sigma in [0.0, 0.7, 2.0] {
        let got = step_two_level_directsum(&ops.c, &ops.b, &ops.b0, &bv(&ops, f.clone()), &bv(&ops, w.clone()), tau, sigma).unwrap();
        let (b, b0) = (ops.b.to_dense(), ops.b0.to_dense());
        let lhs = Matrix::identity(8, 8) / tau + &b0 * sigma;
        let rhs = &f + &w / tau - &b0 * &w * (1.0 - sigma) - (&b - &b0) * &w;
        let want = lhs.lu().solve(&rhs).unwrap();
        assert!((got.flat() - &want).amax() <= 1e-10 * want.amax());
    }
}

#[test]
fn directsum_schemes_reject_overlap() {
    let (_, a) = line(6);
    let ov = overlapping_family(6, &[vec![0, 1, 2, 3], vec![2, 3, 4, 5]], None).unwrap();
    for kind in [SchemeKind::ThreeLevelDirectsum, SchemeKind::TwoLevelDirectsum, SchemeKind::Factorized] {
        let params = SchemeConfig::new(kind, 0.1).resolve(2, 1.0).unwrap();
        assert!(matches!(Stepper::new(&a, &ov, &params), Err(Error::SchemePrecondition(_))));
    }
    let ops = SchemeOperators::assemble(&ov, &a).unwrap();
    let z = bv(&ops, Vector::zeros(ov.total_dim()));
    assert!(matches!(
        step_two_level_directsum(&ops.c, &ops.b, &ops.b0, &z, &z, 0.1, 1.0),
        Err(Error::SchemePrecondition(_))
    ));
}

#[test]
fn factorized_hand_value_and_dense_oracle() {
    let a = scalar_a(1.0);
    let fam = trivial(1);
    let ops = SchemeOperators::assemble(&fam, &a).unwrap();
    let w1 = step_factorized(&ops.c, &ops.b, &ops.b1, &ops.b2, &bv(&ops, Vector::zeros(1)), &bv(&ops, Vector::from_element(1, 1.0)), 1.0, 0.5).unwrap();
    assert!((w1.flat()[0] - 0.36).abs() < 1e-15);

    let grid = Grid::Line { m: 9, length: 1.0 };
    let a = grid.operator().unwrap();
    for name in ["strips-2", "interleaved-3", "strips-4"] {
        let fam = named_family(name, &grid).unwrap();
        let ops = SchemeOperators::assemble(&fam, &a).unwrap();
        let (f, w) = (random_vector(9, 3), random_vector(9, 4));
        for (tau, sigma) in [(0.01, 0.5), (0.2, 1.0)] {
            let got = step_factorized(&ops.c, &ops.b, &ops.b1, &ops.b2, &bv(&ops, f.clone()), &bv(&ops, w.clone()), tau, sigma).unwrap();
            let i = Matrix::identity(9, 9);
            let lhs = (&i + ops.b1.to_dense() * (tau * sigma)) * (&i + ops.b2.to_dense() * (tau * sigma));
            let z = lhs.lu().solve(&(&f - ops.b.to_dense() * &w)).unwrap();
            let want = &w + z * tau;
            assert!((got.flat() - &want).amax() <= 1e-10 * want.amax(), "{name}");
        }
    }
}

#[test]
fn run_with_zero_steps() {
    let (_, a) = line(5);
    let prob = homogeneous(&a, 1, 1.0);
    for kind in SchemeKind::ALL {
        let traj = run(&prob, &trivial(5), &SchemeConfig::new(kind, 0.1).with_steps(0)).unwrap();
        assert_eq!(traj.solutions.len(), 1);
        assert_eq!(traj.solutions[0], prob.initial);
        if kind.is_three_level() {
            assert_eq!(traj.half_steps.as_ref().unwrap().len(), 0);
        }
    }
}

#[test]
fn implicit_scalar_run_matches_modal_oracle_with_forcing() {
    // piecewise-constant forcing sampled at t^n: per mode the implicit step is
    // exact for (1 + τλ)^{-1} applied to y^n + τ f^n
    let grid = Grid::Line { m: 10, length: 1.0 };
    let a = grid.operator().unwrap();
    let prob = manufactured(&a, &grid, Profile::Oscillating, 0.5).unwrap();
    let tau = 0.01;
    let traj = run(&prob, &trivial(10), &SchemeConfig::new(SchemeKind::ImplicitScalar, tau)).unwrap();
    let (lam, phi) = crate::linops::symmetric_eigen(a.matrix(), 100).unwrap();
    let mut c = phi.tr_mul(&prob.initial);
    for n in 0..traj.params.steps {
        let g = phi.tr_mul(&prob.forcing_at(n as f64 * tau));
        c = Vector::from_fn(10, |k, _| (c[k] + tau * g[k]) / (1.0 + tau * lam[k]));
        let want = &phi * &c;
        assert!((&traj.solutions[n + 1] - &want).amax() <= 1e-10 * want.amax());
    }
    // and the continuous modal oracle agrees to first order
    let oracle = ModalOracle::new(&prob).unwrap();
    let err = (traj.final_solution() - oracle.at(0.5)).amax();
    assert!(err < 0.05 * oracle.at(0.5).amax());
}

#[test]
fn three_level_split_energy_nonincreasing_at_thresholds() {
    let grid = Grid::Line { m: 16, length: 1.0 };
    let a = grid.operator().unwrap();
    let lmax = max_eigenvalue(&a).unwrap();
    for name in ["overlap-2-2", "strips-2", "overlap-3-2"] {
        let fam = named_family(name, &grid).unwrap();
        for tl in [1.0, 1e2, 1e4] {
            let prob = homogeneous(&a, 3, 1.0);
            let cfg = SchemeConfig::new(SchemeKind::ThreeLevelSplit, tl / lmax).with_steps(100);
            let traj = run(&prob, &fam, &cfg).unwrap();
            assert!(traj.warnings.is_empty());
            assert!(traj.all_bounds_hold(), "{name} {tl}");
            let es: Vec<f64> = traj.records.iter().map(|r| r.three_level_energy.unwrap()).collect();
            for w in es.windows(2) {
                assert!(w[1] <= w[0] + SLACK * w[0].abs().max(1.0));
            }
        }
    }
}

#[test]
fn d_operator_examples() {
    let a = scalar_a(3.0);
    let ops = SchemeOperators::assemble(&trivial(1), &a).unwrap();
    let v = check_d_operator(&ops.c, &ops.c0, &ops.b, &ops.b0, 0.7, 0.5, 0.25).unwrap();
    assert_eq!(v, 0.0);

    let grid = Grid::Line { m: 12, length: 1.0 };
    let a = grid.operator().unwrap();
    let ov = named_family("overlap-2-2", &grid).unwrap();
    let ops = SchemeOperators::assemble(&ov, &a).unwrap();
    for tau in [1e-3, 1e-1, 10.0] {
        assert!(check_d_operator(&ops.c, &ops.c0, &ops.b, &ops.b0, tau, 1.0, 0.5).unwrap() >= -1e-9);
        assert!(check_d_operator(&ops.c, &ops.c0, &ops.b, &ops.b0, tau, 3.0, 2.0).unwrap() > 0.0);
    }
}

#[test]
fn amplification_examples() {
    let a = scalar_a(1.0);
    let params = SchemeConfig::new(SchemeKind::ImplicitScalar, 1.0).resolve(1, 1.0).unwrap();
    let st = Stepper::new(&a, &trivial(1), &params).unwrap();
    assert!((amplification_matrix(&st).unwrap()[(0, 0)] - 0.5).abs() <= 2.0 * f64::EPSILON);

    let grid = Grid::Line { m: 8, length: 1.0 };
    let a = grid.operator().unwrap();
    let lmax = max_eigenvalue(&a).unwrap();
    for name in ["strips-2", "interleaved-3", "strips-4"] {
        let fam = named_family(name, &grid).unwrap();
        for tl in [1.0, 1e2, 1e4] {
            let params = SchemeConfig::new(SchemeKind::TwoLevelDirectsum, tl / lmax).resolve(fam.p(), 1.0).unwrap();
            let st = Stepper::new(&a, &fam, &params).unwrap();
            let rho = spectral_radius(&amplification_matrix(&st).unwrap(), 1e-14).unwrap();
            assert!(rho <= 1.0 + 1e-10, "{name} {tl}: {rho}");
        }
    }
}

#[test]
fn three_level_split_powers_bounded_on_overlap() {
    let grid = Grid::Line { m: 8, length: 1.0 };
    let a = grid.operator().unwrap();
    let lmax = max_eigenvalue(&a).unwrap();
    for name in ["overlap-2-2", "strips-2"] {
        let fam = named_family(name, &grid).unwrap();
        for tl in [1.0, 1e2, 1e4] {
            let params = SchemeConfig::new(SchemeKind::ThreeLevelSplit, tl / lmax).resolve(2, 1.0).unwrap();
            let st = Stepper::new(&a, &fam, &params).unwrap();
            let m = amplification_matrix(&st).unwrap();
            let obs = observable_matrix(&st).unwrap();
            let base = crate::linops::spectral_norm(&obs);
            let growth = power_growth(&m, Some(&obs), 14).unwrap();
            assert!(growth <= 10.0 * base, "{name} {tl}: {growth} vs {base}");
        }
    }
}

#[test]
fn monitor_examples() {
    let grid = Grid::Line { m: 16, length: 1.0 };
    let a = grid.operator().unwrap();
    let lmax = max_eigenvalue(&a).unwrap();
    let prob = homogeneous(&a, 21, 1.0);
    let traj = run(&prob, &trivial(16), &SchemeConfig::new(SchemeKind::ImplicitScalar, 0.01)).unwrap();
    for w in traj.records.windows(2) {
        assert!(w[1].energy <= w[0].energy);
    }

    let fam = named_family("strips-2", &grid).unwrap();
    let forced = manufactured(&a, &grid, Profile::Oscillating, 1.0).unwrap();
    let cfg = SchemeConfig::new(SchemeKind::TwoLevelDirectsum, 1e3 / lmax).with_steps(50);
    assert!(run(&forced, &fam, &cfg).unwrap().all_bounds_hold());

    let explicit = SchemeConfig::new(SchemeKind::TwoLevelDirectsum, 1e3 / lmax).with_sigma(0.0).with_steps(50);
    let traj = run(&prob, &fam, &explicit).unwrap();
    assert!(!traj.all_bounds_hold());
    assert!(max_violation_ratio(&traj.records) > 1e3);
}

#[test]
fn factorized_g_psd_at_half() {
    let grid = Grid::Line { m: 12, length: 1.0 };
    let a = grid.operator().unwrap();
    for name in ["strips-2", "interleaved-3", "strips-4"] {
        let fam = named_family(name, &grid).unwrap();
        let ops = SchemeOperators::assemble(&fam, &a).unwrap();
        for tau in [1e-4, 1e-2, 1.0] {
            assert!(factorized_certificate(&ops.b, &ops.b1, &ops.b2, tau, 0.5).unwrap() >= -1e-9);
        }
    }
}

#[test]
fn exact_first_step_requires_exact_solution() {
    let (_, a) = line(4);
    let prob = homogeneous(&a, 2, 1.0);
    let cfg = SchemeConfig::new(SchemeKind::ThreeLevelDirectsum, 0.1).with_first_step(FirstStep::Exact);
    assert!(matches!(run(&prob, &trivial(4), &cfg), Err(Error::MissingExact(_))));
    let with_exact = prob.clone().with_exact(Arc::new(|_| Vector::zeros(4)));
    let traj = run(&with_exact, &trivial(4), &cfg.with_steps(2)).unwrap();
    assert_eq!(traj.solutions[1].amax(), 0.0);
}

#[test]
fn scheme_names_round_trip() {
    for k in SchemeKind::ALL {
        assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
    }
    assert!("crank".parse::<SchemeKind>().is_err());
    let cfg: SchemeConfig = toml::from_str("scheme = \"factorized\"\ntau = 0.5\nsigma = 1.0").unwrap();
    assert_eq!(cfg.scheme, SchemeKind::Factorized);
    assert!(toml::from_str::<SchemeConfig>("scheme = \"factorized\"\nbogus = 1").is_err());
}
