//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured figure. Tolerances are pinned in the assertions.

use mcarma::cones::{ConeSpec, SampleParams};
use mcarma::levy::{CompoundPoisson, JumpLaw, LevySpec};
use mcarma::linop::LinOpNM;
use mcarma::matops::{expm, fro, hadamard, spectral_bound, sylvester_solve, vec_of, Mat};
use mcarma::model::{classify, rmfd_eval, transfer_function, MCARMAModel, ModelKind};
use mcarma::moments;
use mcarma::positivity::{build_positive_mcar, certify_causal_kernel, certify_internal_positivity, validate_paths};
use mcarma::quad::QuadParams;
use mcarma::rng::StreamFactory;
use mcarma::simulate::{
    simulate_state, simulate_state_path, simulate_stationary_causal, simulate_vectorized_replay,
    simulate_wellbalanced_ou, IntegrationMethod,
};
use mcarma::stochvol::{
    acov_vec_series, integrated_cov_increments, mean_vec_series, realized_returns,
    simulate_price, squared_return_series, CovProcess, StochCovModel,
};
use nalgebra::Complex;
use rand::Rng;
use std::time::Instant;

fn psd_levy(d: usize, rate: f64) -> LevySpec {
    LevySpec::new(
        Mat::zeros(d, d),
        None,
        Some(CompoundPoisson { rate, law: JumpLaw::RankOnePsd { d, shape: 2.0, rate: 2.0 } }),
    )
    .unwrap()
}

fn cor312_model(d: usize, a1: Mat, a2: Mat) -> MCARMAModel {
    MCARMAModel::new(
        vec![LinOpNM::lyapunov(&a1).unwrap(), LinOpNM::conjugation(&a2).unwrap()],
        vec![LinOpNM::identity(d, d)],
        Some(ConeSpec::psd(d)),
        psd_levy(d, 2.0),
    )
    .unwrap()
}

#[test]
fn acceptance_1_vectorization_equivalence() {
    let start = Instant::now();
    let a1 = Mat::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -0.4]);
    let a2 = Mat::from_row_slice(2, 2, &[0.25, 0.1, 0.05, 0.3]);
    let model = cor312_model(2, a1, a2);
    let form = model.build_companion();
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect(); // rate 2 on [0,5]: ~10 jumps
    let factory = StreamFactory::new(1001);
    let z0 = {
        let mut z = Mat::zeros(4, 2);
        z.view_mut((0, 0), (2, 2)).copy_from(&(Mat::identity(2, 2) * 0.5));
        z.view_mut((2, 0), (2, 2)).copy_from(&(Mat::identity(2, 2) * 0.2));
        z
    };
    let mut worst: f64 = 0.0;
    let mut total_jumps = 0;
    for k in 0..10 {
        let mut rng = factory.stream(k);
        let noise = model.levy().sample_increments(&grid, &mut rng).unwrap();
        total_jumps += noise.jump_count();
        let (_, xs) = simulate_state_path(&form, &noise, &z0).unwrap();
        let replay = simulate_vectorized_replay(&form, &noise, &z0).unwrap();
        for (a, b) in xs.iter().zip(&replay.x_paths[0]) {
            worst = worst.max((a - b).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-10, "max deviation {worst:e}");
    assert!(secs < 5.0, "runtime {secs:.2} s");
    println!(
        "acceptance 1 [vectorized state-space equivalence]: PASS (max dev {worst:.2e}, {total_jumps} jumps, {secs:.2} s)"
    );
}

#[test]
fn acceptance_2_transfer_function_mfd_identity() {
    let shapes = [(1usize, 1usize), (2, 1), (1, 2), (2, 2)];
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    for seed in 0..20usize {
        let (n, m) = shapes[seed % shapes.len()];
        let p = 1 + seed % 3;
        let q = seed % p.min(2);
        let nm = n * m;
        let mk = |k: usize| {
            Mat::from_fn(nm, nm, |i, j| {
                ((i * 7 + j * 3 + k * 13 + seed * 31) as f64 * 0.61).sin() * 0.8
            })
        };
        let a_ops = (0..p).map(|i| LinOpNM::general(n, m, mk(i)).unwrap()).collect();
        let c_ops = (0..=q).map(|j| LinOpNM::general(n, m, mk(50 + j)).unwrap()).collect();
        let model =
            MCARMAModel::new(a_ops, c_ops, None, LevySpec::drift_only(Mat::zeros(n, m))).unwrap();
        let form = model.build_companion();
        for k in 0..20 {
            let lam = Complex::new(
                1.9 * ((k * 17 + seed) as f64 * 0.37).sin(),
                1.5 * ((k * 11 + 2 * seed) as f64 * 0.53).cos(),
            );
            let h = match transfer_function(&form, lam) {
                Ok(h) => h,
                Err(_) => continue,
            };
            let rm = rmfd_eval(&form, lam).unwrap();
            let rel = (&h - &rm).norm() / (1.0 + h.norm());
            worst = worst.max(rel);
            evaluated += 1;
        }
    }
    assert!(worst <= 1e-8, "worst relative error {worst:e}");
    assert!(evaluated >= 380);
    println!(
        "acceptance 2 [transfer function vs right matrix fraction]: PASS (max rel err {worst:.2e} over {evaluated} evaluations)"
    );
}

#[test]
fn acceptance_3_laplace_transform_identity() {
    let fixtures: Vec<(&str, MCARMAModel)> = vec![
        (
            "scalar mcarma(2,1)",
            MCARMAModel::new(
                vec![
                    LinOpNM::general(1, 1, Mat::from_element(1, 1, -3.0)).unwrap(),
                    LinOpNM::general(1, 1, Mat::from_element(1, 1, -2.0)).unwrap(),
                ],
                vec![
                    LinOpNM::identity(1, 1),
                    LinOpNM::general(1, 1, Mat::from_element(1, 1, 0.5)).unwrap(),
                ],
                None,
                LevySpec::drift_only(Mat::zeros(1, 1)),
            )
            .unwrap(),
        ),
        ("psd mcar(2) lyapunov factors", {
            let f1 = LinOpNM::lyapunov(&Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -1.2])).unwrap();
            let f2 = LinOpNM::lyapunov(&Mat::from_row_slice(2, 2, &[-0.6, 0.1, 0.1, -0.8])).unwrap();
            MCARMAModel::new(
                vec![f1.add(&f2).unwrap(), f1.compose(&f2).unwrap().scale(-1.0)],
                vec![LinOpNM::identity(2, 2)],
                None,
                LevySpec::drift_only(Mat::zeros(2, 2)),
            )
            .unwrap()
        }),
    ];
    let mut worst: f64 = 0.0;
    for (name, model) in &fixtures {
        let form = model.build_companion();
        let cls = classify(&form).unwrap();
        assert_eq!(cls.kind, ModelKind::Causal, "{name}");
        let t_max = (1e-12f64.ln() / cls.tau).min(600.0);
        for lam in [0.5, 1.0, 2.0] {
            let quad = mcarma::quad::integrate_mat(
                |s| mcarma::model::kernel(&form, s).unwrap().rep() * (-lam * s).exp(),
                0.0,
                t_max,
                &QuadParams::default(),
            )
            .unwrap();
            let closed = model.qp_eval_real(lam).unwrap();
            let rel = (&quad - &closed).norm() / (1.0 + closed.norm());
            assert!(rel <= 1e-6, "{name} at lambda {lam}: {rel:e}");
            worst = worst.max(rel);
        }
    }
    println!("acceptance 3 [Laplace transform of the kernel]: PASS (max rel err {worst:.2e})");
}

#[test]
fn acceptance_4_positivity_soundness() {
    let start = Instant::now();
    let params = SampleParams { samples: 500, ..Default::default() };
    let factory = StreamFactory::new(44);
    let mut lines = Vec::new();

    // certified causal fixture built from quasi-positive stable factors
    {
        let f1 = LinOpNM::lyapunov(&Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -1.2])).unwrap();
        let f2 = LinOpNM::lyapunov(&Mat::from_row_slice(2, 2, &[-0.6, 0.1, 0.1, -0.8])).unwrap();
        let mut rng = factory.stream(0);
        let (model, verdict) = build_positive_mcar(
            &[f1, f2],
            vec![LinOpNM::identity(2, 2)],
            ConeSpec::psd(2),
            psd_levy(2, 2.0),
            &params,
            &mut rng,
        )
        .unwrap();
        assert!(verdict.is_positive());
        let form = model.build_companion();
        let cls = classify(&form).unwrap();
        let kv = certify_causal_kernel(&model, &form, None, &params, 91).unwrap();
        assert!(kv.is_positive());
        let horizon = 50.0 / cls.tau.abs();
        let grid: Vec<f64> = (0..=500).map(|k| k as f64 * horizon / 500.0).collect();
        let bundle = simulate_stationary_causal(&model, &grid, 200, &factory, 10, 1e-10).unwrap();
        let val = validate_paths(&bundle, model.cone().unwrap()).unwrap();
        assert!(val.pass, "causal PSD fixture margin {}", val.min_margin);
        lines.push(format!("causal psd factors margin {:.1e}", val.min_margin));
    }

    // certified non-stable orthant fixture (entrywise conditions)
    {
        let a1 = Mat::from_row_slice(2, 2, &[-1.0, 0.2, 0.1, -0.8]);
        let a2 = Mat::from_row_slice(2, 2, &[0.02, 0.01, 0.0, 0.015]);
        let model = MCARMAModel::new(
            vec![
                LinOpNM::general(2, 1, a1).unwrap(),
                LinOpNM::general(2, 1, a2).unwrap(),
            ],
            vec![LinOpNM::identity(2, 1)],
            Some(ConeSpec::orthant(2)),
            LevySpec::new(
                Mat::zeros(2, 1),
                None,
                Some(CompoundPoisson {
                    rate: 2.0,
                    law: JumpLaw::ScaledAtom {
                        base: Mat::from_column_slice(2, 1, &[1.0, 0.5]),
                        shape: 1.0,
                        rate: 2.0,
                    },
                }),
            )
            .unwrap(),
        )
        .unwrap();
        let form = model.build_companion();
        let cls = classify(&form).unwrap();
        assert!(cls.tau >= 0.0, "fixture must be non-stable, tau = {}", cls.tau);
        let mut rng = factory.stream(1);
        let (v, _) = certify_internal_positivity(&model, &params, &mut rng).unwrap();
        assert!(v.is_certified());
        let grid: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect(); // horizon 50
        let z0 = Mat::from_column_slice(4, 1, &[0.5, 0.2, 0.1, 0.3]); // in C^p
        let bundle = simulate_state(&model, &grid, &z0, 200, &factory, 400, ).unwrap();
        let val = validate_paths(&bundle, model.cone().unwrap()).unwrap();
        assert!(val.pass, "orthant non-stable fixture margin {}", val.min_margin);
        lines.push(format!("non-stable orthant margin {:.1e}", val.min_margin));
    }

    // certified non-stable PSD fixture (structural tags)
    {
        let a1 = Mat::from_row_slice(2, 2, &[-0.5, 0.1, 0.0, -0.4]);
        let a2 = Mat::from_row_slice(2, 2, &[0.25, 0.1, 0.05, 0.3]);
        let model = cor312_model(2, a1, a2);
        let form = model.build_companion();
        let cls = classify(&form).unwrap();
        assert!(cls.tau >= 0.0);
        let mut rng = factory.stream(2);
        let (v, _) = certify_internal_positivity(&model, &params, &mut rng).unwrap();
        assert!(v.is_certified());
        let grid: Vec<f64> = (0..=500).map(|k| k as f64 * 0.1).collect();
        let mut z0 = Mat::zeros(4, 2);
        z0.view_mut((0, 0), (2, 2)).copy_from(&(Mat::identity(2, 2) * 0.4));
        z0.view_mut((2, 0), (2, 2)).copy_from(&(Mat::identity(2, 2) * 0.1));
        let bundle = simulate_state(&model, &grid, &z0, 200, &factory, 900).unwrap();
        let val = validate_paths(&bundle, model.cone().unwrap()).unwrap();
        assert!(val.pass, "psd non-stable fixture margin {}", val.min_margin);
        lines.push(format!("non-stable psd margin {:.1e}", val.min_margin));
    }

    // engineered refuted fixture whose paths exit the cone
    {
        let bad = Mat::from_row_slice(2, 2, &[-1.0, -0.5, 0.0, -1.0]);
        let model = MCARMAModel::new(
            vec![LinOpNM::general(2, 1, bad).unwrap()],
            vec![LinOpNM::identity(2, 1)],
            Some(ConeSpec::orthant(2)),
            LevySpec::new(
                Mat::zeros(2, 1),
                None,
                Some(CompoundPoisson {
                    rate: 2.0,
                    law: JumpLaw::Atoms(vec![(Mat::from_column_slice(2, 1, &[0.0, 1.0]), 1.0)]),
                }),
            )
            .unwrap(),
        )
        .unwrap();
        let form = model.build_companion();
        let kv = certify_causal_kernel(&model, &form, None, &params, 77).unwrap();
        assert!(kv.is_refuted());
        let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
        let bundle = simulate_stationary_causal(&model, &grid, 200, &factory, 1500, 1e-10).unwrap();
        let val = validate_paths(&bundle, model.cone().unwrap()).unwrap();
        assert!(!val.pass, "refuted fixture must exit the cone");
        lines.push(format!("refuted fixture exits at margin {:.1e}", val.min_margin));
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "runtime {secs:.1} s");
    println!("acceptance 4 [positivity soundness]: PASS ({}; {secs:.1} s)", lines.join("; "));
}

#[test]
fn acceptance_5_stationary_ou_law_d2() {
    let start = Instant::now();
    // A = Lyapunov(a) with stable -A; PSD jump noise
    let a_gen = Mat::from_row_slice(2, 2, &[0.8, 0.2, 0.0, 1.0]);
    let a_op = LinOpNM::lyapunov(&a_gen).unwrap();
    let levy = psd_levy(2, 2.0);
    let model = MCARMAModel::ou(&a_op, Some(ConeSpec::psd(2)), levy.clone()).unwrap();
    let form = model.build_companion();

    let delta = 0.5;
    let n_samples = 100_000usize;
    let grid: Vec<f64> = (0..=n_samples).map(|k| k as f64 * delta).collect();
    let factory = StreamFactory::new(550);
    let bundle = simulate_stationary_causal(&model, &grid, 1, &factory, 0, 1e-10).unwrap();
    let series: Vec<Vec<mcarma::Vecf>> = bundle
        .x_paths
        .iter()
        .map(|p| p.iter().map(vec_of).collect())
        .collect();

    let mut max_z: f64 = 0.0;
    // mean vs A^{-1} mu_L
    let theory_mean = moments::ou_mean(a_op.rep(), &levy).unwrap();
    let (est, se) = mean_vec_series(&series).unwrap();
    for j in 0..2 {
        for i in 0..2 {
            let idx = i + 2 * j;
            let z = (est[idx] - theory_mean[(i, j)]) / se[idx].max(1e-300);
            max_z = max_z.max(z.abs());
        }
    }
    // acov at h in {0, 0.5, 1} vs e^{-h A^vec} D^{-1} Q^vec
    let q = levy.covariance_operator().unwrap().rep().clone();
    for (h, steps) in [(0.0, 0usize), (0.5, 1), (1.0, 2)] {
        let theory = moments::ou_acov(a_op.rep(), &q, h).unwrap();
        let (est, se) = acov_vec_series(&series, steps).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                let z = (est[(i, j)] - theory[(i, j)]) / se[(i, j)].max(1e-300);
                max_z = max_z.max(z.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(max_z < 4.0, "max |z| = {max_z:.2}");
    assert!(secs < 120.0, "runtime {secs:.1} s");
    println!(
        "acceptance 5 [stationary OU law, d=2, 1e5 windows]: PASS (max |z| {max_z:.2}, {secs:.1} s)"
    );
}

#[test]
fn acceptance_6_well_balanced_ou() {
    let start = Instant::now();
    let mut max_z: f64 = 0.0;
    let mut min_margin = f64::INFINITY;
    for d in [1usize, 2] {
        let (a_op, levy) = if d == 1 {
            (
                LinOpNM::general(1, 1, Mat::from_element(1, 1, 1.0)).unwrap(),
                LevySpec::new(
                    Mat::zeros(1, 1),
                    None,
                    Some(CompoundPoisson {
                        rate: 2.0,
                        law: JumpLaw::ScaledAtom {
                            base: Mat::identity(1, 1),
                            shape: 1.0,
                            rate: 1.0,
                        },
                    }),
                )
                .unwrap(),
            )
        } else {
            (
                LinOpNM::lyapunov(&Mat::from_row_slice(2, 2, &[0.8, 0.2, 0.0, 1.0])).unwrap(),
                psd_levy(2, 2.0),
            )
        };
        let delta = 0.5;
        let n_samples = 100_000usize;
        let grid: Vec<f64> = (0..=n_samples).map(|k| k as f64 * delta).collect();
        let factory = StreamFactory::new(660 + d as u64);
        let bundle =
            simulate_wellbalanced_ou(&a_op, &levy, &grid, 1, &factory, 0, 1e-10).unwrap();
        let series: Vec<Vec<mcarma::Vecf>> = bundle
            .x_paths
            .iter()
            .map(|p| p.iter().map(vec_of).collect())
            .collect();

        let theory_mean = moments::wb_mean(a_op.rep(), &levy).unwrap();
        let (est, se) = mean_vec_series(&series).unwrap();
        for j in 0..d {
            for i in 0..d {
                let idx = i + d * j;
                let z = (est[idx] - theory_mean[(i, j)]) / se[idx].max(1e-300);
                max_z = max_z.max(z.abs());
            }
        }
        let q = levy.covariance_operator().unwrap().rep().clone();
        for (h, steps) in [(0.0, 0usize), (1.0, 2), (2.0, 4)] {
            let theory = moments::wb_acov(a_op.rep(), &q, h).unwrap();
            let (est, se) = acov_vec_series(&series, steps).unwrap();
            for j in 0..d * d {
                for i in 0..d * d {
                    let z = (est[(i, j)] - theory[(i, j)]) / se[(i, j)].max(1e-300);
                    max_z = max_z.max(z.abs());
                }
            }
        }
        let cone = if d == 1 { ConeSpec::orthant(1) } else { ConeSpec::psd(d) };
        let cone = match (d, cone) {
            (1, _) => ConeSpec::psd(1), // scalar PSD = nonnegative reals
            (_, c) => c,
        };
        let val = validate_paths(&bundle, &cone).unwrap();
        assert!(val.pass, "d = {d}: margin {}", val.min_margin);
        min_margin = min_margin.min(val.min_margin);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(max_z < 4.0, "max |z| = {max_z:.2}");
    assert!(secs < 120.0, "runtime {secs:.1} s");
    println!(
        "acceptance 6 [well-balanced OU, d in {{1,2}}, 1e5 windows]: PASS (max |z| {max_z:.2}, min margin {min_margin:.1e}, {secs:.1} s)"
    );
}

#[test]
fn acceptance_7_rpp_consistency() {
    let quad_params = QuadParams::default();
    let mut worst_quad: f64 = 0.0;
    let mut worst_second: f64 = 0.0;

    // scalar and d = 2 fixtures (a = A^vec)
    let fixtures: Vec<(Mat, Mat)> = vec![
        (Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 2.0)),
        (
            {
                let a = Mat::from_row_slice(2, 2, &[0.8, 0.2, 0.0, 1.0]);
                let i = Mat::identity(2, 2);
                i.kronecker(&a) + a.kronecker(&i)
            },
            psd_levy(2, 2.0).covariance_operator().unwrap().rep().clone(),
        ),
    ];
    for (a, q) in &fixtures {
        // closed forms vs adaptive double quadrature
        for t in [0.8, 1.6] {
            let ou_closed = moments::r_pp_ou(a, q, t).unwrap();
            let ou_quad =
                moments::r_plus_plus(|u| moments::ou_acov(a, q, u), t, &quad_params).unwrap();
            let e1 = (&ou_closed - &ou_quad).norm() / (1.0 + ou_closed.norm());
            let wb_closed = moments::r_pp_wb(a, q, t).unwrap();
            let wb_quad =
                moments::r_plus_plus(|u| moments::wb_acov(a, q, u), t, &quad_params).unwrap();
            let e2 = (&wb_closed - &wb_quad).norm() / (1.0 + wb_closed.norm());
            assert!(e1 <= 1e-6 && e2 <= 1e-6, "quadrature errs {e1:e} {e2:e}");
            worst_quad = worst_quad.max(e1.max(e2));
        }
        // second differences of the closed-form r++ vs the closed forms
        let delta = 0.7;
        for h in [1usize, 2] {
            let gen_ou =
                moments::acov_realized(|t| moments::r_pp_ou(a, q, t), delta, h).unwrap();
            let ou = moments::acov_sqret_ou(a, q, delta, h).unwrap();
            let e1 = (&gen_ou - &ou).norm();
            let gen_wb =
                moments::acov_realized(|t| moments::r_pp_wb(a, q, t), delta, h).unwrap();
            let wb = moments::acov_sqret_wb(a, q, delta, h).unwrap();
            let e2 = (&gen_wb - &wb).norm();
            assert!(e1 <= 1e-8 && e2 <= 1e-8, "second-difference errs {e1:e} {e2:e}");
            worst_second = worst_second.max(e1.max(e2));
        }
    }

    // scalar OU spot value: (1 - e^{-1})^2 at Delta = 1, h = 1, Sigma = 1
    let a = Mat::from_element(1, 1, 1.0);
    let q = Mat::from_element(1, 1, 2.0);
    let spot = moments::acov_sqret_ou(&a, &q, 1.0, 1).unwrap()[(0, 0)];
    let expect = (1.0 - (-1.0f64).exp()).powi(2);
    assert!((spot - expect).abs() <= 1e-9, "spot {spot} vs {expect}");

    println!(
        "acceptance 7 [r++ consistency]: PASS (closed vs quadrature {worst_quad:.2e}, second differences {worst_second:.2e}, spot |err| {:.1e})",
        (spot - expect).abs()
    );
}

#[test]
fn acceptance_8_squared_return_identity() {
    let start = Instant::now();
    // OU covariance fixture: d = 1, A = 1, Q = 2 (rate 1, Gamma(1,1) jumps)
    let a_op = LinOpNM::general(1, 1, Mat::from_element(1, 1, 1.0)).unwrap();
    let levy = LevySpec::new(
        Mat::zeros(1, 1),
        None,
        Some(CompoundPoisson {
            rate: 1.0,
            law: JumpLaw::ScaledAtom { base: Mat::identity(1, 1), shape: 1.0, rate: 1.0 },
        }),
    )
    .unwrap();
    let q = levy.covariance_operator().unwrap().rep().clone();
    assert!((q[(0, 0)] - 2.0).abs() < 1e-12);
    let model = StochCovModel {
        d: 1,
        alpha: mcarma::Vecf::zeros(1),
        beta: mcarma::Vecf::zeros(1),
        cov: CovProcess::Ou { a: a_op.clone(), levy: levy.clone() },
        delta: 1.0,
        delta_sim: 1.0 / 64.0,
    };
    let n_paths = 100;
    let n_returns = 1000; // 1e5 returns total
    let factory = StreamFactory::new(888);
    let cov = model.simulate_cov(n_paths, n_returns, &factory, 0, 1e-10).unwrap();
    let (prices, clamp) = simulate_price(&model, &cov, &factory, 500_000).unwrap();
    let returns = realized_returns(&prices, model.steps_per_return()).unwrap();
    let sq = squared_return_series(&returns);

    let mut max_z: f64 = 0.0;
    for h in [1usize, 2] {
        let theory = model.sqret_acov_theory(h).unwrap();
        let (est, se) = acov_vec_series(&sq, h).unwrap();
        let z = (est[(0, 0)] - theory[(0, 0)]) / se[(0, 0)].max(1e-300);
        max_z = max_z.max(z.abs());
    }

    // identity: acov of squared returns = acov of integrated-covariance
    // increments (exact integration through the OU identity)
    let ints = mcarma::simulate::integrated_output(
        &cov,
        &IntegrationMethod::ExactMcar1 { a_vec: a_op.rep().clone() },
    )
    .unwrap();
    let xser = integrated_cov_increments(&ints, model.steps_per_return()).unwrap();
    let (yy_acov, yy_se) = acov_vec_series(&sq, 1).unwrap();
    let (xx_acov, xx_se) = acov_vec_series(&xser, 1).unwrap();
    let gap = (yy_acov[(0, 0)] - xx_acov[(0, 0)]).abs();
    let budget = 4.0 * (yy_se[(0, 0)] + xx_se[(0, 0)]);
    assert!(gap <= budget, "identity gap {gap} vs budget {budget}");

    // wb fixture decays strictly slower than the matched OU (closed forms)
    let ou_ratio = moments::acov_sqret_ou(a_op.rep(), &q, 1.0, 2).unwrap()[(0, 0)]
        / moments::acov_sqret_ou(a_op.rep(), &q, 1.0, 1).unwrap()[(0, 0)];
    let wb_ratio = moments::acov_sqret_wb(a_op.rep(), &q, 1.0, 2).unwrap()[(0, 0)]
        / moments::acov_sqret_wb(a_op.rep(), &q, 1.0, 1).unwrap()[(0, 0)];
    assert!(
        wb_ratio > ou_ratio,
        "wb normalized decay {wb_ratio} must exceed ou {ou_ratio}"
    );

    let clamp_frac = clamp.fraction();
    assert!(clamp_frac < 1e-6, "clamp fraction {clamp_frac}");
    let secs = start.elapsed().as_secs_f64();
    assert!(max_z < 4.0, "max |z| = {max_z:.2}");
    println!(
        "acceptance 8 [squared-return identity, 1e5 returns]: PASS (max |z| {max_z:.2}, identity gap {gap:.2e} <= {budget:.2e}, wb/ou lag ratio {wb_ratio:.3} > {ou_ratio:.3}, clamps {clamp_frac:.1e}, {secs:.1} s)"
    );
}

#[test]
fn acceptance_9_property_suites() {
    let start = Instant::now();
    let params = SampleParams { samples: 300, ..Default::default() };
    let factory = StreamFactory::new(990);
    let mut rng = factory.stream(0);

    // Lemma on resolvent positivity: 50 random quasi-positive stable generators
    for k in 0..50 {
        let (op, cone): (LinOpNM, ConeSpec) = if k % 2 == 0 {
            let d = 2 + k % 3;
            let mut m = Mat::from_fn(d, d, |_, _| rng.gen::<f64>() * 0.7);
            for i in 0..d {
                let rowsum: f64 = (0..d).map(|j| m[(i, j)]).sum();
                m[(i, i)] = -rowsum - 0.2 - rng.gen::<f64>();
            }
            (LinOpNM::general(d, 1, m).unwrap(), ConeSpec::orthant(d))
        } else {
            let d = 2;
            let a = Mat::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5)
                - Mat::identity(d, d) * (1.0 + rng.gen::<f64>());
            (LinOpNM::lyapunov(&a).unwrap(), ConeSpec::psd(d))
        };
        assert!(spectral_bound(op.rep()).unwrap() < 0.0);
        let neg_inv = LinOpNM::general(
            op.dims().0,
            op.dims().1,
            -op.rep().clone().try_inverse().unwrap(),
        )
        .unwrap();
        let v = mcarma::cones::is_positive_operator(&neg_inv, &cone, &params, &mut rng).unwrap();
        assert!(v.is_positive(), "generator {k}: {v:?}");
    }

    // Hadamard submultiplicativity: 100 random nonnegative pairs, n <= 5
    for k in 0..100 {
        let d = 2 + k % 4;
        let a = Mat::from_fn(d, d, |_, _| rng.gen::<f64>() * 1.2);
        let b = Mat::from_fn(d, d, |_, _| rng.gen::<f64>() * 1.2);
        let had = hadamard(&a, &b).unwrap();
        let mut ha = had.clone();
        let mut pa = a.clone();
        let mut pb = b.clone();
        for _ in 1..5 {
            ha = &ha * &had;
            pa = &pa * &a;
            pb = &pb * &b;
        }
        let bound = hadamard(&pa, &pb).unwrap();
        let slack = 1e-12 * fro(&bound).max(1.0);
        for i in 0..d {
            for j in 0..d {
                assert!(ha[(i, j)] <= bound[(i, j)] + slack, "pair {k} entry ({i},{j})");
            }
        }
    }

    // Sylvester residuals
    let mut worst_syl: f64 = 0.0;
    for k in 0..20 {
        let n = 3 + k % 3;
        let a = Mat::from_fn(n, n, |i, j| ((i * 5 + j * 13 + k) as f64 * 0.71).sin())
            - Mat::identity(n, n) * 3.0;
        let b = Mat::from_fn(n, n, |i, j| ((i * 3 + j * 7 + 2 * k) as f64 * 0.41).cos())
            - Mat::identity(n, n) * 2.5;
        let c = Mat::from_fn(n, n, |i, j| ((i + 2 * j + k) as f64 * 0.9).sin());
        let x = sylvester_solve(&a, &b, &c).unwrap();
        let resid = fro(&(&a * &x + &x * &b - &c)) / fro(&c).max(1.0);
        assert!(resid <= 1e-10, "k = {k}: residual {resid:e}");
        worst_syl = worst_syl.max(resid);
    }

    // expm semigroup
    let mut worst_semi: f64 = 0.0;
    for k in 0..20 {
        let n = 3;
        let a = Mat::from_fn(n, n, |i, j| ((i * 2 + j * 5 + k) as f64 * 0.77).sin() * 1.5);
        let norm = fro(&a).max(1e-9);
        let (t, s) = (3.0 / norm, 5.0 / norm);
        let lhs = expm(&(&a * (t + s))).unwrap();
        let rhs = expm(&(&a * t)).unwrap() * expm(&(&a * s)).unwrap();
        let err = fro(&(&lhs - &rhs)) / (1.0 + fro(&rhs));
        assert!(err <= 1e-10, "k = {k}: {err:e}");
        worst_semi = worst_semi.max(err);
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "runtime {secs:.1} s");
    println!(
        "acceptance 9 [property suites]: PASS (sylvester {worst_syl:.1e}, semigroup {worst_semi:.1e}, {secs:.1} s)"
    );
}
