mod common;

use proptest::prelude::*;

use common::{consistent, lambda_min, max_abs_diff, random_spd};
use sketchsolve::io::generate::{generate, GeneratorSpec};
use sketchsolve::io::problem::ridge_system;
use sketchsolve::linalg::dense::sub;
use sketchsolve::linalg::{
    b_norm, lambda_extreme, norm2, pseudo_inverse_symmetric, spd_inverse_sqrt_conjugate, symmetric_eigen, Cholesky,
    DenseMatrix, Geometry, Matrix,
};
use sketchsolve::probopt::{build_projectors, optimize_probabilities, OptConfig};
use sketchsolve::rates::{expected_z_discrete, rho_convenient, rho_exact, rho_via_cholesky};
use sketchsolve::rng::{gaussian_matrix, gaussian_vec, seeded};
use sketchsolve::sketch::{
    convenient_probabilities, partition_blocks, row_sketches, DiscreteSampling, Sketch, SubsetTarget,
};
use sketchsolve::solver::{
    general_step, preset, run_solver, IterateState, LinearSystem, Method, PresetOptions, SolverConfig, StopMetric,
};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn rank_deficient(seed: u64, m: usize, n: usize, r: usize) -> DenseMatrix {
    let mut rng = seeded(seed);
    let u = gaussian_matrix(&mut rng, m, r);
    let v = gaussian_matrix(&mut rng, r, n);
    u.matmul(&v)
}

fn sorted_eigs(m: &DenseMatrix) -> Vec<f64> {
    symmetric_eigen(&m.symmetrized()).unwrap().eigenvalues
}

/// All eigenvalues of a symmetric 3×3 matrix, by the trigonometric formula.
fn cubic_eigs(m: &DenseMatrix) -> (f64, f64) {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = m.trace() / 3.0;
    let p2 = (0..3).map(|i| (m[(i, i)] - q).powi(2)).sum::<f64>() + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return (q, q);
    }
    let mut bm = m.clone();
    for i in 0..3 {
        bm[(i, i)] -= q;
    }
    let bm = bm.scaled(1.0 / p);
    let det = bm[(0, 0)] * (bm[(1, 1)] * bm[(2, 2)] - bm[(1, 2)] * bm[(2, 1)])
        - bm[(0, 1)] * (bm[(1, 0)] * bm[(2, 2)] - bm[(1, 2)] * bm[(2, 0)])
        + bm[(0, 2)] * (bm[(1, 0)] * bm[(2, 1)] - bm[(1, 1)] * bm[(2, 0)]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    (lo, hi)
}

fn symmetric_from(n: usize, upper: &[i32]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = upper[k] as f64;
            m[(j, i)] = upper[k] as f64;
            k += 1;
        }
    }
    m
}

fn gaussian_problem(seed: u64, m: usize, n: usize) -> (LinearSystem, Vec<f64>) {
    let mut rng = seeded(seed);
    let a = gaussian_matrix(&mut rng, m, n);
    consistent(&mut rng, a)
}

fn spd_problem(seed: u64, n: usize) -> (LinearSystem, Vec<f64>) {
    let mut rng = seeded(seed);
    let a = random_spd(&mut rng, n);
    consistent(&mut rng, a)
}

fn rho_for(samples: Vec<Sketch>, probs: Vec<f64>, a: &Matrix, g: &Geometry) -> f64 {
    let d = DiscreteSampling::on_support(samples, probs).unwrap();
    rho_exact(&expected_z_discrete(&d, a, g).unwrap(), g).unwrap().rho
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn pseudoinverse_satisfies_penrose(seed in any::<u64>(), r in 1usize..=5) {
        let m = rank_deficient(seed, 5, 8, r);
        let mt = m.transpose();
        let left = pseudo_inverse_symmetric(&mt.matmul(&m)).unwrap().matmul(&mt);
        let right = mt.matmul(&pseudo_inverse_symmetric(&m.matmul(&mt)).unwrap());
        let scale = m.max_abs().max(1.0);
        prop_assert!(left.sub(&right).max_abs() <= 1e-7 * left.max_abs().max(1.0));
        let x = left;
        prop_assert!(m.matmul(&x).matmul(&m).sub(&m).max_abs() <= 1e-8 * scale);
        prop_assert!(x.matmul(&m).matmul(&x).sub(&x).max_abs() <= 1e-8 * x.max_abs().max(1.0));
        prop_assert!(m.matmul(&x).asymmetry() <= 1e-8);
        prop_assert!(x.matmul(&m).asymmetry() <= 1e-8);
    }

    #[test]
    fn identity_geometry_norm_is_euclidean(v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
        let g = Geometry::identity(v.len());
        let got = b_norm(&v, &g).unwrap();
        prop_assert!((got - norm2(&v)).abs() <= 1e-12 * norm2(&v).max(1.0));
    }

    #[test]
    fn extreme_eigenvalues_of_2x2(upper in prop::collection::vec(-3i32..=3, 3)) {
        let m = symmetric_from(2, &upper);
        let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        let mid = (a + c) / 2.0;
        let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
        let (lo, hi) = lambda_extreme(&m).unwrap();
        prop_assert!((lo - (mid - rad)).abs() <= 1e-10);
        prop_assert!((hi - (mid + rad)).abs() <= 1e-10);
    }

    #[test]
    fn extreme_eigenvalues_of_3x3(upper in prop::collection::vec(-3i32..=3, 6)) {
        let m = symmetric_from(3, &upper);
        let (lo, hi) = lambda_extreme(&m).unwrap();
        let (elo, ehi) = cubic_eigs(&m);
        prop_assert!((lo - elo).abs() <= 1e-8, "{lo} vs {elo}");
        prop_assert!((hi - ehi).abs() <= 1e-8, "{hi} vs {ehi}");
    }

    #[test]
    fn conjugation_preserves_the_spectrum_of_b_inverse_m(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = seeded(seed);
        let b = random_spd(&mut rng, n);
        let h = gaussian_matrix(&mut rng, n, n);
        let m = h.t_matmul(&h).symmetrized();
        let w = spd_inverse_sqrt_conjugate(&m, &Geometry::explicit_spd(b.clone()).unwrap()).unwrap();
        let oracle = Cholesky::factor(&b).unwrap().congruence(&m);
        let (x, y) = (sorted_eigs(&w), sorted_eigs(&oracle));
        let scale = y.last().copied().unwrap_or(1.0).abs().max(1.0);
        prop_assert!(max_abs_diff(&x, &y) <= 1e-9 * scale);
    }

    #[test]
    fn sketch_and_project_never_increases_the_error(seed in any::<u64>(), q in 1usize..4) {
        let (m, n) = (7, 5);
        let (sys, xstar) = gaussian_problem(seed, m, n);
        let mut rng = seeded(seed ^ 0xABCD);
        let g = Geometry::explicit_spd(random_spd(&mut rng, n)).unwrap();
        let mut state = IterateState::new(gaussian_vec(&mut rng, n));
        for _ in 0..10 {
            let before = b_norm(&sub(&state.x, &xstar), &g).unwrap();
            let s = Sketch::Dense(gaussian_matrix(&mut rng, m, q));
            general_step(&mut state, &s, &sys, &g).unwrap();
            let after = b_norm(&sub(&state.x, &xstar), &g).unwrap();
            prop_assert!(after <= before + 1e-10 * before.max(1.0), "{after} > {before}");
        }
    }

    #[test]
    fn rates_agree_between_conjugation_and_cholesky(seed in any::<u64>(), q in 1usize..4) {
        let (sys, _) = gaussian_problem(seed, 9, 4);
        let mut rng = seeded(seed ^ 7);
        let g = Geometry::explicit_spd(random_spd(&mut rng, 4)).unwrap();
        let samples = partition_blocks(9, q, SubsetTarget::Coords).unwrap();
        let d = DiscreteSampling::uniform(samples).unwrap();
        let ez = expected_z_discrete(&d, sys.a(), &g).unwrap();
        let a = rho_exact(&ez, &g).unwrap();
        let b = rho_via_cholesky(&ez, &g).unwrap();
        prop_assert!((a.rho - b).abs() <= 1e-9);
        // the rate certifies E[Z] ⪰ (1 − ρ)B
        let mut gap = ez.matrix.clone();
        gap.add_scaled_in_place(-(1.0 - a.rho), &g.dense());
        prop_assert!(lambda_min(&gap.symmetrized()) >= -1e-9 * g.dense().max_abs());
    }

    #[test]
    fn convenient_rate_bounds_the_exact_rate(seed in any::<u64>(), q in 1usize..4) {
        let (sys, _) = gaussian_problem(seed, 8, 5);
        let g = Geometry::identity(5);
        let blocks = partition_blocks(8, q, SubsetTarget::Coords).unwrap();
        let p = convenient_probabilities(&blocks, sys.a(), &g).unwrap();
        let rc = rho_convenient(&blocks, sys.a(), &g).unwrap();
        let rho = rho_for(blocks, p, sys.a(), &g);
        prop_assert!(rho <= rc + 1e-10, "{rho} > {rc}");

        let rows = row_sketches(8);
        let p = convenient_probabilities(&rows, sys.a(), &g).unwrap();
        let rc = rho_convenient(&rows, sys.a(), &g).unwrap();
        let rho = rho_for(rows, p, sys.a(), &g);
        prop_assert!((rho - rc).abs() <= 1e-10, "{rho} vs {rc}");
    }

    #[test]
    fn generated_problems_are_consistent(seed in any::<u64>(), m in 3usize..25, n in 2usize..12) {
        let specs = [
            GeneratorSpec::Gaussian { m, n },
            GeneratorSpec::Uniform { m, n },
            GeneratorSpec::Sprandn { m, n, density: 0.4, rc: 0.2 },
        ];
        for spec in &specs {
            let p = generate(spec, seed).unwrap();
            let xstar = p.xstar.as_ref().expect("generated problems carry a solution");
            let r = norm2(&p.system.residual(xstar));
            prop_assert!(r <= 1e-8 * p.system.rhs_norm().max(1e-300), "{}: {r}", spec.name());
        }
    }

    #[test]
    fn ridge_systems_dominate_lambda(seed in any::<u64>(), lambda in 1e-3f64..10.0) {
        let mut rng = seeded(seed);
        let data = gaussian_matrix(&mut rng, 12, 5);
        let labels: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = ridge_system("ridge", &Matrix::Dense(data), &labels, lambda).unwrap();
        prop_assert!(lambda_min(&p.system.a().to_dense()) >= lambda * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn solutions_are_fixed_points_of_every_kernel(seed in any::<u64>()) {
        let general = gaussian_problem(seed, 9, 5);
        let spd = spd_problem(seed, 6);
        let mut rng = seeded(seed);
        for method in Method::ALL {
            let (sys, xstar) = if method.needs_spd() { &spd } else { &general };
            let (g, dist) = preset(method, sys, &PresetOptions::default()).unwrap();
            let cfg = SolverConfig::new(method, g, dist);
            for _ in 0..5 {
                let s = cfg.distribution.draw(&mut rng);
                let mut state = IterateState::new(xstar.clone());
                if method == Method::General {
                    general_step(&mut state, &s, sys, &cfg.geometry).unwrap();
                } else {
                    sketchsolve::solver::specialized_step(method, &mut state, &s, sys).unwrap();
                }
                let moved = max_abs_diff(&state.x, xstar);
                prop_assert!(moved <= 1e-9, "{} moved the solution by {moved}", method.name());
            }
        }
    }

    #[test]
    fn b_norm_error_is_monotone(seed in any::<u64>(), spd in any::<bool>()) {
        let (sys, xstar, method) = if spd {
            let (s, x) = spd_problem(seed, 8);
            (s, x, Method::CDpd)
        } else {
            let (s, x) = gaussian_problem(seed, 15, 6);
            (s, x, Method::RK)
        };
        let (g, dist) = preset(method, &sys, &PresetOptions::default()).unwrap();
        let mut cfg = SolverConfig::new(method, g, dist);
        cfg.max_iters = 300;
        cfg.tolerance = 1e-12;
        cfg.seed = seed;
        cfg.log_stride = Some(1);
        cfg.stop = StopMetric::BNormError;
        let report = run_solver(&sys, Some(&xstar), &cfg).unwrap();
        let errs: Vec<f64> = report.log.entries.iter().map(|e| e.b_norm_error.unwrap()).collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14, "{} after {}", w[1], w[0]);
        }
    }

    #[test]
    fn equal_seeds_reproduce_bit_for_bit(seed in any::<u64>(), method in prop::sample::select(vec![
        Method::RK, Method::BlockRK, Method::GaussKaczmarz, Method::CDls, Method::GaussLS,
    ])) {
        let (sys, xstar) = gaussian_problem(seed, 20, 6);
        let run = || {
            let (g, dist) = preset(method, &sys, &PresetOptions::default()).unwrap();
            let mut cfg = SolverConfig::new(method, g, dist);
            cfg.max_iters = 200;
            cfg.seed = seed;
            run_solver(&sys, Some(&xstar), &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.x), bits(&b.x));
        prop_assert_eq!(a.log.to_csv(false), b.log.to_csv(false));
    }

    #[test]
    fn optimal_rate_is_concave_and_beats_defaults(seed in any::<u64>(), t in 0.0f64..1.0) {
        let (sys, _) = gaussian_problem(seed, 6, 4);
        let g = Geometry::identity(4);
        let samples = row_sketches(6);
        let bundle = build_projectors(&samples, sys.a(), &g).unwrap();
        let mut rng = seeded(seed ^ 99);
        let simplex = |rng: &mut _| {
            let w: Vec<f64> = sketchsolve::rng::uniform_vec(rng, 6).iter().map(|u| -f64::ln(1.0 - u)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (p, q) = (simplex(&mut rng), simplex(&mut rng));
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let f = |v: &[f64]| bundle.objective(v).unwrap();
        prop_assert!(f(&mix) >= t * f(&p) + (1.0 - t) * f(&q) - 1e-10);

        let opt = optimize_probabilities(&bundle, &OptConfig::default()).unwrap();
        let uniform = 1.0 - f(&bundle.uniform());
        let convenient = 1.0 - f(&bundle.convenient());
        prop_assert!(opt.rho_star <= uniform + 1e-12);
        prop_assert!(opt.rho_star <= convenient + 1e-12);
        let direct = rho_for(samples, opt.p_star.clone(), sys.a(), &g);
        prop_assert!((direct - opt.rho_star).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(cases(6))]

    #[test]
    fn three_sample_optimum_matches_a_simplex_grid(seed in any::<u64>()) {
        let (sys, _) = gaussian_problem(seed, 6, 4);
        let samples = partition_blocks(6, 2, SubsetTarget::Coords).unwrap();
        let bundle = build_projectors(&samples, sys.a(), &Geometry::identity(4)).unwrap();
        let steps = 100;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps - i {
                let p = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                best = best.max(bundle.objective(&p).unwrap());
            }
        }
        let cfg = OptConfig::default();
        let opt = optimize_probabilities(&bundle, &cfg).unwrap();
        prop_assert!(opt.f_star >= best - cfg.tol, "{} below grid {best}", opt.f_star);
        prop_assert!(opt.f_star + opt.certified_gap >= best - 1e-12);
    }
}
