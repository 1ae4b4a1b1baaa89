use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn point(x: f64, y: f64, t: f64) -> GpInput {
    GpInput::new([x, y], [x + 0.01, y], t)
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize) -> Vec<GpInput> {
    (0..n)
        .map(|_| {
            GpInput::new(
                [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                rng.gen_range(0.0..1.0),
            )
        })
        .collect()
}

fn side(deg_u: f64, deg_v: f64, numeric: f64, cat: usize) -> Arc<SideInfo> {
    let mut onehot = vec![0.0; 3];
    onehot[cat] = 1.0;
    Arc::new(SideInfo {
        node_from: vec![deg_u],
        node_to: vec![deg_v],
        edge_numeric: vec![numeric],
        edge_categorical: vec![onehot],
    })
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in &mut m[c] {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(&pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Posterior mean and variance from an explicitly inverted covariance.
fn oracle_posterior(
    x: &[GpInput],
    y: &[f64],
    theta: &KernelConfig,
    mu: f64,
    q: &GpInput,
) -> (f64, f64) {
    let n = x.len();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    spacetime_kernel(&x[a], &x[b], theta).unwrap()
                        + if a == b { theta.noise_variance } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let inv = invert(&cov);
    let k: Vec<f64> = x.iter().map(|xi| spacetime_kernel(xi, q, theta).unwrap()).collect();
    let mut mean = mu;
    let mut quad = 0.0;
    for a in 0..n {
        for b in 0..n {
            mean += k[a] * inv[a][b] * (y[b] - mu);
            quad += k[a] * inv[a][b] * k[b];
        }
    }
    (mean, spacetime_kernel(q, q, theta).unwrap() - quad)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

#[test]
fn rbf_identity_and_unit_decay() {
    assert_eq!(rbf(&[0.3, 0.4], &[0.3, 0.4], 0.7, RbfForm::Unsquared), 1.0);
    // distance 0.25 = l² with l = 0.5
    let v = rbf(&[0.0, 0.0], &[0.15, 0.2], 0.5, RbfForm::Unsquared);
    assert_abs_diff_eq!(v, (-1.0f64).exp(), epsilon = 1e-12);
    assert_abs_diff_eq!(v, 0.3678794, epsilon = 1e-7);
    let sq = rbf(&[0.0], &[0.5], 0.5, RbfForm::Squared);
    assert_abs_diff_eq!(sq, (-1.0f64).exp(), epsilon = 1e-12);
}

#[test]
fn rbf_decreases_with_distance() {
    let mut last = 1.0;
    for d in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let v = rbf(&[0.0], &[d], 0.8, RbfForm::Unsquared);
        assert!(v < last && v > 0.0);
        last = v;
    }
}

#[test]
fn edge_kernel_is_directed() {
    let a = GpInput::new([0.0, 0.0], [0.1, 0.0], 0.5);
    let rev = GpInput::new([0.1, 0.0], [0.0, 0.0], 0.5);
    assert_eq!(edge_kernel(&a, &a, 0.3, RbfForm::Unsquared), 1.0);
    let v = edge_kernel(&a, &rev, 0.3, RbfForm::Unsquared);
    assert!(v < 1.0);
    let r = rbf(&a.from, &a.to, 0.3, RbfForm::Unsquared);
    assert_abs_diff_eq!(v, r * r, epsilon = 1e-15);

    let shares_head = GpInput::new([0.05, 0.05], [0.1, 0.0], 0.5);
    assert_abs_diff_eq!(
        edge_kernel(&a, &shares_head, 0.3, RbfForm::Unsquared),
        rbf(&a.from, &shares_head.from, 0.3, RbfForm::Unsquared),
        epsilon = 1e-15
    );
}

#[test]
fn spacetime_kernel_diagonal_is_signal_variance() {
    let theta = KernelConfig::new(0.4, 0.2, 3.5, 0.1);
    let q = point(0.2, 0.3, 0.4);
    assert_abs_diff_eq!(spacetime_kernel(&q, &q, &theta).unwrap(), 3.5, epsilon = 1e-15);
}

#[test]
fn side_info_adds_constant_and_categorical_dot() {
    let plain = KernelConfig::new(0.4, 0.2, 2.0, 0.1);
    let theta = plain.clone().with_side_info(vec![1.0, 1.0]);
    let s = side(0.5, -0.2, 1.0, 1);
    let a = point(0.0, 0.0, 0.1).with_side(s.clone());
    let b = point(0.3, 0.1, 0.6).with_side(s);
    let base = spacetime_kernel(&a, &b, &plain).unwrap();
    // identical side info: 1 (node pair) + 1 (numeric) + 1 (same category)
    assert_abs_diff_eq!(spacetime_kernel(&a, &b, &theta).unwrap(), base + 3.0, epsilon = 1e-12);

    let c = point(0.3, 0.1, 0.6).with_side(side(0.5, -0.2, 1.0, 2));
    assert_abs_diff_eq!(spacetime_kernel(&a, &c, &theta).unwrap(), base + 2.0, epsilon = 1e-12);
}

#[test]
fn side_info_required_when_enabled() {
    let theta = KernelConfig::new(0.4, 0.2, 2.0, 0.1).with_side_info(vec![1.0, 1.0]);
    let a = point(0.0, 0.0, 0.1);
    assert!(matches!(
        spacetime_kernel(&a, &a, &theta),
        Err(GpError::MissingSideInfo(_))
    ));
    let mismatched = KernelConfig::new(0.4, 0.2, 2.0, 0.1).with_side_info(vec![1.0]);
    let b = point(0.0, 0.0, 0.1).with_side(side(0.0, 0.0, 0.0, 0));
    assert!(matches!(
        spacetime_kernel(&b, &b, &mismatched),
        Err(GpError::SideInfoMismatch(_))
    ));
}

#[test]
fn gram_single_point_and_duplicates() {
    let theta = KernelConfig::new(0.4, 0.2, 1.7, 0.3);
    let g = gram(&[point(0.1, 0.1, 0.2)], &theta).unwrap();
    assert_eq!(g.shape(), &[1, 1]);
    assert_abs_diff_eq!(g[[0, 0]], 1.7, epsilon = 1e-15);
    // noise enters at factorization: a 1×1 model has LML of N(0, σ_f² + σ²)
    let lml = log_marginal_likelihood(&[point(0.1, 0.1, 0.2)], &[0.0], &theta, 0.0).unwrap();
    assert_abs_diff_eq!(lml, -0.5 * (2.0 * PI * 2.0).ln(), epsilon = 1e-12);

    let x = vec![point(0.1, 0.1, 0.2), point(0.5, 0.2, 0.7), point(0.1, 0.1, 0.2)];
    let g = gram(&x, &theta).unwrap();
    for j in 0..3 {
        assert_eq!(g[[0, j]], g[[2, j]]);
        assert_eq!(g[[j, 0]], g[[j, 2]]);
    }
}

#[test]
fn gram_symmetric_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for form in [RbfForm::Unsquared, RbfForm::Squared] {
        let x = random_inputs(&mut rng, 20);
        let theta = KernelConfig {
            form,
            ..KernelConfig::new(0.6, 0.4, 1.3, 0.01)
        };
        let g = gram(&x, &theta).unwrap();
        for a in 0..20 {
            for b in 0..20 {
                assert!((g[[a, b]] - g[[b, a]]).abs() <= 1e-12);
            }
        }
        let rows: Vec<Vec<f64>> = g.outer_iter().map(|r| r.to_vec()).collect();
        let min = jacobi_eigenvalues(rows).into_iter().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "min eigenvalue {min}");
    }
}

#[test]
fn lml_scalar_normal() {
    let theta = KernelConfig::new(1.0, 1.0, 0.75, 0.25);
    let lml = log_marginal_likelihood(&[point(0.0, 0.0, 0.0)], &[42.0], &theta, 42.0).unwrap();
    assert_abs_diff_eq!(lml, -0.9189385, epsilon = 1e-7);
}

#[test]
fn lml_of_duplicate_pair_matches_bivariate_density() {
    let theta = KernelConfig::new(1.0, 1.0, 1.0, 0.5);
    let x = point(0.2, 0.2, 0.3);
    let single = log_marginal_likelihood(&[x.clone()], &[1.2], &theta, 1.0).unwrap();
    let pair = log_marginal_likelihood(&[x.clone(), x.clone()], &[1.2, 1.2], &theta, 1.0).unwrap();

    // bivariate normal with covariance [[s+n, s], [s, s+n]]
    let (s, n): (f64, f64) = (1.0, 0.5);
    let (a, b) = (s + n, s);
    let det = a * a - b * b;
    let d = 0.2;
    let quad = (a * d * d - 2.0 * b * d * d + a * d * d) / det;
    let oracle = -0.5 * quad - 0.5 * det.ln() - (2.0 * PI).ln();
    assert_abs_diff_eq!(pair, oracle, epsilon = 1e-12);
    // chain rule: the duplicate adds log N(y | conditional mean, conditional variance)
    let cond_var = a - b * b / a;
    let cond_mean = 1.0 + b / a * d;
    let cond = -0.5 * (1.2 - cond_mean) * (1.2 - cond_mean) / cond_var - 0.5 * (2.0 * PI * cond_var).ln();
    assert_abs_diff_eq!(pair - single, cond, epsilon = 1e-12);
}

#[test]
fn lml_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_inputs(&mut rng, 8);
    let y: Vec<f64> = (0..8).map(|_| rng.gen_range(20.0..40.0)).collect();
    let theta = KernelConfig::new(0.5, 0.3, 4.0, 0.2);
    let base = log_marginal_likelihood(&x, &y, &theta, 30.0).unwrap();
    let order = [3, 7, 0, 5, 1, 6, 2, 4];
    let xp: Vec<_> = order.iter().map(|&i| x[i].clone()).collect();
    let yp: Vec<_> = order.iter().map(|&i| y[i]).collect();
    let perm = log_marginal_likelihood(&xp, &yp, &theta, 30.0).unwrap();
    assert_abs_diff_eq!(base, perm, epsilon = 1e-10);
}

#[test]
fn posterior_interpolates_without_noise() {
    let x = vec![point(0.0, 0.0, 0.1), point(0.5, 0.3, 0.5), point(0.9, 0.8, 0.9)];
    let y = vec![31.0, 24.5, 40.0];
    let theta = KernelConfig::new(0.5, 0.5, 30.0, 1e-10);
    let model = GpModel::new(x.clone(), y.clone(), theta, 32.0).unwrap();
    let p = model.predict(&x).unwrap();
    for i in 0..3 {
        assert!((p.mean[i] - y[i]).abs() < 1e-5);
        assert!(p.variance[i] <= 1e-4);
    }
}

#[test]
fn posterior_reverts_to_prior_far_away() {
    let x = vec![point(0.0, 0.0, 0.1), point(0.01, 0.0, 0.2)];
    let theta = KernelConfig::new(0.05, 0.05, 9.0, 0.1);
    let model = GpModel::new(x, vec![10.0, 50.0], theta, 30.0).unwrap();
    let far = point(50.0, 50.0, 0.9);
    let p = model.predict(&[far]).unwrap();
    assert_abs_diff_eq!(p.mean[0], 30.0, epsilon = 1e-9);
    assert_abs_diff_eq!(p.variance[0], 9.0, epsilon = 1e-9);
}

#[test]
fn posterior_matches_direct_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = random_inputs(&mut rng, 3);
        let y: Vec<f64> = (0..3).map(|_| rng.gen_range(10.0..60.0)).collect();
        let theta = KernelConfig::new(
            rng.gen_range(0.3..1.5),
            rng.gen_range(0.2..1.0),
            rng.gen_range(1.0..50.0),
            rng.gen_range(0.01..2.0),
        );
        let q = random_inputs(&mut rng, 1).pop().unwrap();
        let model = GpModel::new(x.clone(), y.clone(), theta.clone(), 35.0).unwrap();
        let p = model.predict(&[q.clone()]).unwrap();
        let (mean, var) = oracle_posterior(&x, &y, &theta, 35.0, &q);
        assert_abs_diff_eq!(p.raw_mean[0], mean, epsilon = 1e-8);
        assert_abs_diff_eq!(p.variance[0], var, epsilon = 1e-8);
    }
}

#[test]
fn variance_never_grows_with_more_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let x = random_inputs(&mut rng, 5);
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(10.0..60.0)).collect();
        let theta = KernelConfig::new(0.7, 0.5, 10.0, 0.5);
        let queries = random_inputs(&mut rng, 4);
        for q in &queries {
            let (_, smaller) = oracle_posterior(&x[..4], &y[..4], &theta, 30.0, q);
            let (_, larger) = oracle_posterior(&x, &y, &theta, 30.0, q);
            assert!(larger <= smaller + 1e-8);
            let model = GpModel::new(x.clone(), y.clone(), theta.clone(), 30.0).unwrap();
            let v = model.predict(&[q.clone()]).unwrap().variance[0];
            assert_abs_diff_eq!(v, larger, epsilon = 1e-8);
            assert!(v >= 0.0 && v <= 10.0 + 1e-8);
        }
    }
}

#[test]
fn predictions_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = random_inputs(&mut rng, 6);
    let y: Vec<f64> = (0..6).map(|_| rng.gen_range(10.0..60.0)).collect();
    let theta = KernelConfig::new(0.6, 0.4, 20.0, 0.3);
    let q = random_inputs(&mut rng, 5);
    let a = GpModel::new(x.clone(), y.clone(), theta.clone(), 30.0).unwrap();
    let order = [5, 2, 4, 0, 3, 1];
    let b = GpModel::new(
        order.iter().map(|&i| x[i].clone()).collect(),
        order.iter().map(|&i| y[i]).collect(),
        theta,
        30.0,
    )
    .unwrap();
    let (pa, pb) = (a.predict(&q).unwrap(), b.predict(&q).unwrap());
    for i in 0..5 {
        assert_abs_diff_eq!(pa.raw_mean[i], pb.raw_mean[i], epsilon = 1e-10);
        assert_abs_diff_eq!(pa.variance[i], pb.variance[i], epsilon = 1e-10);
    }
}

#[test]
fn mean_is_clamped_but_raw_kept() {
    let x = vec![point(0.0, 0.0, 0.1)];
    let theta = KernelConfig::new(0.5, 0.5, 100.0, 1e-6);
    let model = GpModel::new(x.clone(), vec![-20.0], theta, 5.0).unwrap();
    let p = model.predict(&x).unwrap();
    assert!(p.raw_mean[0] < 0.0);
    assert_eq!(p.mean[0], 0.0);
}

#[test]
fn predict_rejects_missing_side_info() {
    let s = side(0.0, 0.0, 0.0, 0);
    let x = vec![point(0.0, 0.0, 0.1).with_side(s.clone()), point(0.1, 0.0, 0.3).with_side(s)];
    let theta = KernelConfig::new(0.5, 0.5, 1.0, 0.1).with_side_info(vec![1.0, 1.0]);
    let model = GpModel::new(x, vec![1.0, 2.0], theta, 1.5).unwrap();
    assert!(matches!(
        model.predict(&[point(0.0, 0.0, 0.2)]),
        Err(GpError::MissingSideInfo(0))
    ));
}

#[test]
fn model_validation() {
    let theta = KernelConfig::new(0.5, 0.5, 1.0, 0.1);
    assert_eq!(GpModel::new(vec![], vec![], theta.clone(), 0.0).unwrap_err(), GpError::Empty);
    assert!(matches!(
        GpModel::new(vec![point(0.0, 0.0, 0.1)], vec![1.0, 2.0], theta.clone(), 0.0),
        Err(GpError::LengthMismatch { .. })
    ));
    assert_eq!(
        GpModel::new(vec![point(0.0, 0.0, 1.0)], vec![1.0], theta.clone(), 0.0).unwrap_err(),
        GpError::BadInput(0)
    );
    assert_eq!(
        GpModel::new(vec![point(0.0, 0.0, 0.1)], vec![f64::NAN], theta, 0.0).unwrap_err(),
        GpError::NonFiniteResponse(0)
    );
    let bad = KernelConfig::new(-1.0, 0.5, 1.0, 0.1);
    assert!(matches!(
        GpModel::new(vec![point(0.0, 0.0, 0.1)], vec![1.0], bad, 0.0),
        Err(GpError::InvalidHyperparameter { .. })
    ));
}

fn sample_time_gp(seed: u64, theta: &KernelConfig, n: usize) -> (Vec<GpInput>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<GpInput> = (0..n).map(|_| point(0.0, 0.0, rng.gen_range(0.0..1.0))).collect();
    let g = gram(&x, theta).unwrap();
    let mut cov: Vec<f64> = g.iter().copied().collect();
    for i in 0..n {
        cov[i * n + i] += theta.noise_variance;
    }
    let chol = Cholesky::new(&cov, n, 0.0).unwrap();
    let z: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let l = chol.factor();
    let y = (0..n)
        .map(|i| 30.0 + (0..=i).map(|j| l[i * n + j] * z[j]).sum::<f64>())
        .collect();
    (x, y)
}

#[test]
fn fit_matches_or_beats_generating_hyperparameters() {
    let generating = KernelConfig::new(1.0, 0.4, 4.0, 0.3);
    for seed in 0..5 {
        let (x, y) = sample_time_gp(seed, &generating, 10);
        let mu = y.iter().sum::<f64>() / 10.0;
        let floor = log_marginal_likelihood(&x, &y, &generating, mu).unwrap();
        let model = fit(&x, &y, false, seed, &FitOptions::default()).unwrap();
        assert_eq!(model.prior_mean(), mu);
        assert!(
            model.log_marginal_likelihood() >= floor - 1e-6,
            "seed {seed}: fitted {} < generating {floor}",
            model.log_marginal_likelihood()
        );
        let report = model.fit_report().unwrap();
        assert!(report.evaluations <= 200);
        assert!(report.lml_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn fit_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = random_inputs(&mut rng, 15);
    let y: Vec<f64> = (0..15).map(|_| rng.gen_range(20.0..45.0)).collect();
    let a = fit(&x, &y, false, 7, &FitOptions::default()).unwrap();
    let b = fit(&x, &y, false, 7, &FitOptions::default()).unwrap();
    assert_eq!(a.theta(), b.theta());
    assert_eq!(a.log_marginal_likelihood(), b.log_marginal_likelihood());
}

#[test]
fn fit_respects_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = random_inputs(&mut rng, 12);
    let y: Vec<f64> = (0..12).map(|_| rng.gen_range(20.0..45.0)).collect();
    let mu = y.iter().sum::<f64>() / 12.0;
    let var = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 12.0;
    let m = fit(&x, &y, false, 1, &FitOptions::default()).unwrap();
    let t = m.theta();
    for l in [t.spatial_lengthscale, t.temporal_lengthscale] {
        assert!((1e-3 * (1.0 - 1e-12)..=1e3 * (1.0 + 1e-12)).contains(&l));
    }
    assert!(t.noise_variance >= MIN_NOISE_VARIANCE * (1.0 - 1e-12));
    assert!(t.noise_variance <= var * (1.0 + 1e-12));
}

#[test]
fn fit_constant_targets_predicts_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let x = random_inputs(&mut rng, 8);
    let y = vec![27.5; 8];
    let model = fit(&x, &y, false, 0, &FitOptions::default()).unwrap();
    let q = random_inputs(&mut rng, 5);
    for m in model.predict(&q).unwrap().mean {
        assert_abs_diff_eq!(m, 27.5, epsilon = 1e-9);
    }
}

#[test]
fn fit_with_side_info() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x: Vec<GpInput> = random_inputs(&mut rng, 10)
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.with_side(side(i as f64 * 0.1, 0.5, -(i as f64) * 0.2, i % 3)))
        .collect();
    let y: Vec<f64> = (0..10).map(|i| 25.0 + (i % 3) as f64 * 5.0).collect();
    let model = fit(&x, &y, true, 3, &FitOptions::default()).unwrap();
    assert!(model.theta().use_side_info);
    assert_eq!(model.theta().side_lengthscales.len(), 2);
    assert!(model.log_marginal_likelihood().is_finite());
    assert!(fit(&x[..1], &y[..1], true, 3, &FitOptions::default()).is_err());
}

#[test]
fn diagnostics_serialize() {
    let x = vec![point(0.0, 0.0, 0.1), point(0.2, 0.1, 0.4), point(0.4, 0.0, 0.8)];
    let model = fit(&x, &[20.0, 30.0, 25.0], false, 0, &FitOptions::default()).unwrap();
    let text = model.diagnostics();
    assert!(text.contains("log_marginal_likelihood"));
    assert!(text.contains("spatial_lengthscale"));
}
