use std::f64::consts::PI;

use num_complex::Complex64;

use doa_core::array_model::{circular_distance, synthesize, Scenario, Snapshot, SteeringModel};
use doa_core::audit::{audit_report, AuditOptions};
use doa_core::bench::{builtin_scenario, matched_mse, run_sweep, run_sweep_with_threads, SweepAxis, SweepSpec};
use doa_core::estimators::{classo, classo_h, final_polish, ml_estimate, relax, sps_lasso};
use doa_core::spectrum::{global_peak, SearchOptions};
use doa_core::{estimate, EstimatorOptions, Method, Status};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense brute-force maximum of `|a(phi)^H r|`.
fn brute_max(m: usize, r: &[Complex64], points: usize) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for i in 0..points {
        let phi = -PI + 2.0 * PI * i as f64 / points as f64;
        let z: Complex64 = r
            .iter()
            .enumerate()
            .map(|(k, v)| Complex64::from_polar(1.0, -(k as f64) * phi) * v)
            .sum();
        if z.norm() > best.1 {
            best = (phi, z.norm());
        }
    }
    let _ = m;
    best
}

fn fig1_snapshot(snr: f64, trial: usize) -> (SteeringModel, Snapshot, Scenario) {
    let spec = builtin_scenario("fig1").unwrap();
    let sc = spec.scenario(snr, trial);
    (sc.model().unwrap(), synthesize(&sc).unwrap(), sc)
}

#[test]
fn global_peak_matches_brute_force_scan() {
    for t in 0..10 {
        let (model, x, _) = fig1_snapshot(5.0 + t as f64, t);
        let pk = global_peak(&model, &x.x, &[], 0.0, &SearchOptions::default()).unwrap();
        let (bphi, bp) = brute_max(15, &x.x, 200_000);
        assert!(pk.p >= bp * (1.0 - 1e-12), "{} < {}", pk.p, bp);
        assert!(pk.p <= bp * (1.0 + 1e-8));
        assert!(circular_distance(pk.phi, bphi) < 1e-4);
    }
}

#[test]
fn lambda_path_starts_at_data_peak_and_decreases() {
    for t in 0..10 {
        let (model, x, _) = fig1_snapshot(12.0, t);
        let (_, bp) = brute_max(15, &x.x, 200_000);
        for f in [classo, classo_h] {
            let rep = f(&model, &x, &EstimatorOptions::with_order(2)).unwrap();
            assert_eq!(rep.status, Status::Converged);
            assert!((rep.lambda_path[0].0 - bp).abs() <= 1e-8 * bp);
            for w in rep.lambda_path.windows(2) {
                assert!(w[1].0 < w[0].0);
            }
            assert_eq!(rep.doas.len(), 2);
            assert!(circular_distance(rep.doas[0], rep.doas[1]) > rep.guard.unwrap());
            assert!(rep.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite()));
        }
    }
}

#[test]
fn jump_and_equilevel_paths_find_the_same_singular_points() {
    for t in 0..8 {
        let (model, x, _) = fig1_snapshot(15.0, t);
        let opts = EstimatorOptions {
            report_lambda_factor: 1.0,
            ..EstimatorOptions::with_order(2)
        };
        let a = classo(&model, &x, &opts).unwrap();
        let b = classo_h(&model, &x, &opts).unwrap();
        let la = a.lambda_path[1].0;
        let lb = b.lambda_path[1].0;
        assert!((la - lb).abs() <= 1e-5 * la, "birth levels {la} vs {lb}");
    }
}

#[test]
fn polish_shrinks_bias_linearly_for_a_single_source() {
    let m = 15;
    let model = SteeringModel::new(m).unwrap();
    let x = Snapshot::new(model.steering(0.7));
    let mut prev = -1.0;
    for f in [1.0, 0.8, 0.5, 0.2] {
        let opts = EstimatorOptions {
            report_lambda_factor: f,
            ..EstimatorOptions::with_order(1)
        };
        let rep = classo(&model, &x, &opts).unwrap();
        let modulus = rep.amplitudes[0].norm();
        assert!(modulus > prev);
        assert!((modulus - (1.0 - f)).abs() < 1e-9, "factor {f}: {modulus}");
        prev = modulus;
    }
}

#[test]
fn final_polish_continues_a_converged_state() {
    let (model, x, _) = fig1_snapshot(20.0, 2);
    let at_birth = EstimatorOptions {
        report_lambda_factor: 1.0,
        ..EstimatorOptions::with_order(2)
    };
    let rep = classo(&model, &x, &at_birth).unwrap();
    let state = rep.state().unwrap();
    let polished = final_polish(&model, &x, &state, &EstimatorOptions::with_order(2)).unwrap();
    let direct = classo(&model, &x, &EstimatorOptions::with_order(2)).unwrap();
    assert!((polished.lambda - direct.lambda.unwrap()).abs() < 1e-9 * polished.lambda);
    for (p, q) in polished.support.iter().zip(&direct.doas) {
        assert!(circular_distance(*p, *q) < 1e-8);
    }
}

#[test]
fn three_sources_are_born_in_decreasing_level_order() {
    let spec = builtin_scenario("fig3").unwrap();
    let sc = spec.scenario(40.0, 0);
    let model = sc.model().unwrap();
    let x = synthesize(&sc).unwrap();
    let rep = classo_h(&model, &x, &EstimatorOptions::with_order(3)).unwrap();
    assert_eq!(rep.status, Status::Converged);
    let sizes: Vec<usize> = rep.lambda_path.iter().map(|p| p.1).collect();
    assert_eq!(&sizes[..3], &[1, 2, 3]);
    assert!(matched_mse(&rep.doas, &sc.doas).unwrap() < 1e-2);
}

#[test]
fn sps_and_classo_agree_at_the_singular_point_on_a_fine_grid() {
    let model = SteeringModel::new(8).unwrap();
    let cell = 2.0 * PI / 4096.0;
    for seed in 0..5 {
        let sc = Scenario {
            m: 8,
            doas: vec![-1.1, 0.9],
            amplitudes: vec![c(1.0, 0.0), c(0.0, 0.8)],
            noise_std: 0.05,
            seed,
        };
        let x = synthesize(&sc).unwrap();
        let opts = EstimatorOptions {
            report_lambda_factor: 1.0,
            grid_size: 4096,
            ..EstimatorOptions::with_order(2)
        };
        let a = classo(&model, &x, &opts).unwrap();
        let b = sps_lasso(&model, &x, &opts).unwrap();
        let mut da = a.doas.clone();
        let mut db = b.doas.clone();
        da.sort_by(f64::total_cmp);
        db.sort_by(f64::total_cmp);
        for (p, q) in da.iter().zip(&db) {
            assert!((p - q).abs() <= cell, "{da:?} vs {db:?}");
        }
    }
}

#[test]
fn converged_l1_reports_pass_the_audit() {
    let opts = AuditOptions::default();
    for t in 0..10 {
        let (model, x, _) = fig1_snapshot(8.0 + t as f64, t);
        for method in [Method::Classo, Method::ClassoH, Method::Sps] {
            let rep = estimate(method, &model, &x, &EstimatorOptions::with_order(2)).unwrap();
            if rep.status != Status::Converged {
                continue;
            }
            let a = audit_report(&model, &x, &rep, &opts).unwrap();
            assert!(a.passed, "{method} trial {t}: {a:?}");
        }
        let ml = ml_estimate(&model, &x, &EstimatorOptions::with_order(2)).unwrap();
        assert!(audit_report(&model, &x, &ml, &opts).is_err());
    }
}

#[test]
fn audit_detects_a_perturbed_doa() {
    let (model, x, _) = fig1_snapshot(20.0, 1);
    let mut rep = classo(&model, &x, &EstimatorOptions::with_order(2)).unwrap();
    rep.doas[0] += 0.01;
    let a = audit_report(&model, &x, &rep, &AuditOptions::default()).unwrap();
    assert!(!a.passed);
    assert!(a.max_support_residual > 1e3 * AuditOptions::default().support_tol);
}

#[test]
fn relax_and_ml_agree_at_high_snr() {
    for t in 0..5 {
        let (model, x, sc) = fig1_snapshot(30.0, t);
        let opts = EstimatorOptions::with_order(2);
        let a = relax(&model, &x, &opts).unwrap();
        let b = ml_estimate(&model, &x, &opts).unwrap();
        let ea = matched_mse(&a.doas, &sc.doas).unwrap();
        let eb = matched_mse(&b.doas, &sc.doas).unwrap();
        assert!((ea - eb).abs() < 1e-8, "{ea} vs {eb}");
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let mut spec = builtin_scenario("fig1").unwrap();
    spec.values = vec![4.0, 16.0];
    spec.trials = 6;
    let a = run_sweep_with_threads(&spec, 1).unwrap();
    let b = run_sweep_with_threads(&spec, 5).unwrap();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.mse.to_bits(), q.mse.to_bits());
        assert_eq!(p.undefined_rate, q.undefined_rate);
        assert_eq!(p.trials_used, q.trials_used);
        assert!((p.undefined_rate + p.trials_used as f64 / 6.0 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ml_error_decreases_with_snr_at_high_snr() {
    let mut spec = builtin_scenario("fig1").unwrap();
    spec.values = vec![24.0, 26.0, 28.0, 30.0, 32.0, 34.0, 36.0];
    spec.estimators = vec![Method::Ml];
    let rows = run_sweep(&spec).unwrap();
    let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let smooth: Vec<f64> = mse.windows(3).map(|w| (w[0] + w[1] + w[2]) / 3.0).collect();
    for w in smooth.windows(2) {
        assert!(w[1] < w[0], "{mse:?}");
    }
}

#[test]
fn separation_sweep_reports_undefined_for_coincident_sources() {
    let spec = SweepSpec {
        name: "close".into(),
        base: Scenario {
            m: 15,
            doas: vec![0.0, 0.0],
            amplitudes: vec![c(1.0, 0.0), c(1.0, 0.0)],
            noise_std: 0.0,
            seed: 0,
        },
        axis: SweepAxis::Separation,
        values: vec![0.0, 1.0],
        trials: 2,
        estimators: vec![Method::Classo],
        master_seed: 9,
        snr_db: None,
        options: EstimatorOptions::default(),
    };
    let rows = run_sweep(&spec).unwrap();
    assert!(rows[0].undefined_rate > 0.0, "{rows:?}");
    assert_eq!(rows[1].undefined_rate, 0.0);
    assert!(rows[1].mse < 1e-4);
}
