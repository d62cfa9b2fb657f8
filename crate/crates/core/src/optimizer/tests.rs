use super::*;
use crate::linalg::{c as cx, inverse};
use crate::rng::{complex_normal_matrix, seeded};
use proptest::prelude::*;

fn halve_until_feasible(mut u: CMat, s: &RMat, b: f64) -> CMat {
    while max_constraint_value(&real_embed(&u), s) > b {
        u /= cx(2.0, 0.0);
    }
    u
}

/// Every complex admissible transform for `n <= 2`: permutation times a
/// diagonal of fourth roots of unity.
fn all_atms(n: usize) -> Vec<CMat> {
    let roots = [cx(1.0, 0.0), cx(-1.0, 0.0), cx(0.0, 1.0), cx(0.0, -1.0)];
    let perms: Vec<Vec<usize>> = if n == 1 { vec![vec![0]] } else { vec![vec![0, 1], vec![1, 0]] };
    let mut out = Vec::new();
    for p in &perms {
        let mut digits = vec![0usize; n];
        loop {
            let mut t = CMat::zeros(n, n);
            for r in 0..n {
                t[(r, p[r])] = roots[digits[r]];
            }
            out.push(t);
            let mut k = 0;
            while k < n {
                digits[k] += 1;
                if digits[k] < 4 {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    out
}

/// All `4^n` vectors of 4-QAM corner symbols, scaled so each axis is `+-lambda`.
fn corner_symbols(n: usize, lambda: f64) -> CMat {
    let total = 1usize << (2 * n);
    CMat::from_fn(n, total, |r, col| {
        let bits = (col >> (2 * r)) & 3;
        let re = if bits & 1 == 0 { lambda } else { -lambda };
        let im = if bits & 2 == 0 { lambda } else { -lambda };
        cx(re, im)
    })
}

#[test]
fn embed_identity_and_imaginary_unit() {
    let e = real_embed(&CMat::identity(3, 3));
    assert_eq!(e, RMat::identity(6, 6));
    let e = real_embed(&(CMat::identity(2, 2) * cx(0.0, 1.0)));
    let mut expect = RMat::zeros(4, 4);
    expect[(0, 2)] = -1.0;
    expect[(1, 3)] = -1.0;
    expect[(2, 0)] = 1.0;
    expect[(3, 1)] = 1.0;
    assert_eq!(e, expect);
}

#[test]
fn embed_then_extract_is_identity() {
    let mut rng = seeded(3);
    let a = complex_normal_matrix(&mut rng, 3, 3, 1.0);
    let back = complex_extract(&real_embed(&a), 1e-8).unwrap();
    assert!((back - &a).norm() < 1e-15);
    let eye = complex_extract(&RMat::identity(4, 4), 1e-8).unwrap();
    assert_eq!(eye, CMat::identity(2, 2));
}

#[test]
fn extract_matches_block_average_of_inverse() {
    let mut rng = seeded(4);
    for n in 1..=4 {
        let a = complex_normal_matrix(&mut rng, n, n, 1.0);
        let u = real_embed(&a);
        let uinv = u.clone().try_inverse().unwrap();
        // Independent oracle: average the diagonal blocks for the real part and
        // the antisymmetric off-diagonal blocks for the imaginary part.
        let oracle = CMat::from_fn(n, n, |r, c| {
            let b11 = uinv[(r, c)];
            let b22 = uinv[(n + r, n + c)];
            let b12 = uinv[(r, n + c)];
            let b21 = uinv[(n + r, c)];
            cx((b11 + b22) / 2.0, (b21 - b12) / 2.0)
        });
        let lhs = inverse(&complex_extract(&u, 1e-8).unwrap(), "test").unwrap();
        assert!((lhs - oracle).norm() < 1e-10);
    }
}

#[test]
fn extract_rejects_unstructured() {
    let mut u = RMat::identity(4, 4);
    u[(0, 0)] = 1.5;
    match complex_extract(&u, 1e-8) {
        Err(Error::StructureViolation { residual }) => assert!((residual - 0.5).abs() < 1e-15),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn objective_at_identity() {
    let n = 2;
    let x = matrix_to_params(&RMat::identity(4, 4));
    let (v, g) = objective_and_gradient(&x, n).unwrap();
    assert_eq!(v, 0.0);
    // dA = G11 + G22 = 2I, dB = G21 - G12 = 0.
    let expect = [2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0];
    for (a, b) in g.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn objective_of_doubled_scalar() {
    let (v, _) = objective_and_gradient(&[2.0, 0.0], 1).unwrap();
    assert!((v - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn objective_singular() {
    assert!(matches!(objective_and_gradient(&[0.0, 0.0], 1), Err(Error::SingularMatrix(_))));
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = seeded(5);
    for n in 1..=3 {
        let a = complex_normal_matrix(&mut rng, n, n, 1.0);
        let x = matrix_to_params(&real_embed(&a));
        let (_, g) = objective_and_gradient(&x, n).unwrap();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (objective_and_gradient(&xp, n).unwrap().0 - objective_and_gradient(&xm, n).unwrap().0) / (2.0 * h);
            let rel = (fd - g[k]).abs() / g[k].abs().max(1.0);
            assert!(rel <= 1e-6, "n={n} k={k} fd={fd} g={}", g[k]);
        }
    }
}

#[test]
fn objective_is_twice_complex_log_det() {
    let mut rng = seeded(6);
    let a = complex_normal_matrix(&mut rng, 3, 3, 1.0);
    let x = matrix_to_params(&real_embed(&a));
    let (v, _) = objective_and_gradient(&x, 3).unwrap();
    assert!((v - 2.0 * a.determinant().norm().ln()).abs() < 1e-10);
}

#[test]
fn cube_is_its_own_fit() {
    for n in 1..=2 {
        let dim = 2 * n;
        let bound = 0.7;
        let s = RMat::from_fn(dim, 1 << dim, |r, c| if (c >> r) & 1 == 0 { bound } else { -bound });
        let p = FittingProblem::new(s, bound, Tolerances::default()).unwrap();
        let sol = solve(&p, &(CMat::identity(n, n) * cx(0.5, 0.0))).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((&sol.u - RMat::identity(dim, dim)).amax() < 1e-9, "n={n}: {}", sol.u);
    }
}

#[test]
fn noiseless_fit_recovers_admissible_transform() {
    let lambda = 1.0 / 2f64.sqrt();
    for n in 1..=2 {
        let atms = all_atms(n);
        assert_eq!(atms.len(), if n == 1 { 4 } else { 32 });
        for trial in 0..10u64 {
            let mut rng = seeded(100 + trial + 10 * n as u64);
            let h = complex_normal_matrix(&mut rng, n, n, 1.0);
            let y = &h * corner_symbols(n, lambda);
            let p = FittingProblem::from_complex(&y, lambda, Tolerances::default()).unwrap();
            let start = complex_normal_matrix(&mut rng, n, n, 1.0);
            let start = halve_until_feasible(start, p.samples(), lambda);
            let sol = solve(&p, &start).unwrap();
            let t = sol.complex() * &h;
            let best = atms.iter().map(|a| (&t - a).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-4, "n={n} trial={trial} distance {best}, status {:?}", sol.status);
        }
    }
}

#[test]
fn scaling_samples_and_bound_keeps_argmax() {
    let mut rng = seeded(8);
    let h = complex_normal_matrix(&mut rng, 2, 2, 1.0);
    let x = complex_normal_matrix(&mut rng, 2, 24, 0.5);
    let y = &h * &x;
    let start = complex_normal_matrix(&mut rng, 2, 2, 1.0);
    let p1 = FittingProblem::from_complex(&y, 1.0, Tolerances::default()).unwrap();
    let u0 = halve_until_feasible(start, p1.samples(), 1.0);
    let s1 = solve(&p1, &u0).unwrap();
    let p3 = FittingProblem::from_complex(&(&y * cx(3.0, 0.0)), 3.0, Tolerances::default()).unwrap();
    let s3 = solve(&p3, &u0).unwrap();
    assert!((&s1.u - &s3.u).amax() < 1e-6, "{} vs {}", s1.u, s3.u);
}

#[test]
fn rejects_infeasible_start_and_rank_deficiency() {
    let y = CMat::from_row_slice(1, 2, &[cx(1.0, 0.0), cx(0.0, 1.0)]);
    let p = FittingProblem::from_complex(&y, 0.5, Tolerances::default()).unwrap();
    assert!(matches!(solve(&p, &CMat::identity(1, 1)), Err(Error::InfeasibleStart { .. })));
    let y = CMat::from_row_slice(1, 2, &[cx(1.0, 0.0), cx(2.0, 0.0)]);
    let p = FittingProblem::from_complex(&y, 5.0, Tolerances::default()).unwrap();
    assert!(matches!(solve(&p, &CMat::identity(1, 1)), Err(Error::InvalidArgument(_))));
    assert!(FittingProblem::from_complex(&CMat::zeros(2, 3), 1.0, Tolerances::default()).is_err());
    assert!(FittingProblem::from_complex(&CMat::zeros(1, 3), 0.0, Tolerances::default()).is_err());
}

#[test]
fn augmentation_leaves_fit_unchanged() {
    let mut rng = seeded(9);
    let h = complex_normal_matrix(&mut rng, 2, 2, 1.0);
    let x = complex_normal_matrix(&mut rng, 2, 16, 0.5);
    let y = &h * &x;
    let aug = crate::modem::augment(&y);
    let p = FittingProblem::from_complex(&y, 1.0, Tolerances::default()).unwrap();
    let pa = FittingProblem::from_complex(&aug, 1.0, Tolerances::default()).unwrap();
    let u0 = halve_until_feasible(complex_normal_matrix(&mut rng, 2, 2, 1.0), pa.samples(), 1.0);
    let s = solve(&p, &u0).unwrap();
    let sa = solve(&pa, &u0).unwrap();
    assert!((s.objective - sa.objective).abs() < 1e-6);
    assert!((&s.u - &sa.u).amax() < 1e-6, "{} vs {}", s.u, sa.u);
}

#[test]
fn window_off_gives_same_solution() {
    let mut rng = seeded(10);
    let h = complex_normal_matrix(&mut rng, 2, 2, 1.0);
    let y = &h * complex_normal_matrix(&mut rng, 2, 30, 0.5);
    let all = Tolerances { active_window: None, ..Tolerances::default() };
    let p = FittingProblem::from_complex(&y, 1.0, Tolerances::default()).unwrap();
    let q = FittingProblem::from_complex(&y, 1.0, all).unwrap();
    let u0 = halve_until_feasible(complex_normal_matrix(&mut rng, 2, 2, 1.0), p.samples(), 1.0);
    let a = solve(&p, &u0).unwrap();
    let b = solve(&q, &u0).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn det_of_embedding_is_squared_modulus(seed in any::<u64>(), n in 1usize..5) {
        let a = complex_normal_matrix(&mut seeded(seed), n, n, 1.0);
        let d = real_embed(&a).determinant();
        let m = a.determinant().norm_sqr();
        prop_assert!(d >= -1e-12);
        prop_assert!((d - m).abs() <= 1e-9 * m.max(1.0));
    }

    #[test]
    fn solution_is_feasible_structured_and_not_worse(seed in any::<u64>(), n in 1usize..4, extra in 0usize..20) {
        let mut rng = seeded(seed);
        let h = complex_normal_matrix(&mut rng, n, n, 1.0);
        let y = &h * complex_normal_matrix(&mut rng, n, 2 * n + extra, 1.0);
        let p = FittingProblem::from_complex(&y, 1.0, Tolerances::default()).unwrap();
        let u0 = halve_until_feasible(complex_normal_matrix(&mut rng, n, n, 1.0), p.samples(), 1.0);
        let f0 = objective_and_gradient(&matrix_to_params(&real_embed(&u0)), n).unwrap().0;
        let sol = solve(&p, &u0).unwrap();
        prop_assert!(max_constraint_value(&sol.u, p.samples()) <= 1.0 + 1e-8);
        prop_assert_eq!(structure_residual(&sol.u), 0.0);
        prop_assert!(sol.objective >= f0 - 1e-9);
        prop_assert!(sol.u.determinant().abs() > 0.0);
    }
}
