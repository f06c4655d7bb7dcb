//! Evaluation routines against independent brute-force references.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionembed::evaluation::{
    ari, fold_indices, kfold_regress, kkt_violation, kmeans, lasso_fit, nmi, scores, standardize,
};
use regionembed::Tensor;

/// Least squares with intercept through the normal equations and
/// Gauss-Jordan elimination with partial pivoting.
fn ols(x: &Tensor, y: &[f64]) -> (f64, Vec<f64>) {
    let (n, p) = x.shape();
    let m = p + 1;
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(x.row(i).iter().copied()).collect() };
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        let r = row(i);
        for u in 0..m {
            for v in 0..m {
                a[u][v] += r[u] * r[v];
            }
            a[u][m] += r[u] * y[i];
        }
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
    (sol[0], sol[1..].to_vec())
}

fn fixture(n: usize, p: usize, seed: u64) -> (Tensor, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
    let w: Vec<f64> = (0..p).map(|j| (j as f64 - 1.0) * 1.5).collect();
    let y = (0..n).map(|i| 4.0 + x.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.5..0.5)).collect();
    (x, y)
}

#[test]
fn lasso_without_penalty_is_least_squares() {
    for seed in 0..5 {
        let (x, y) = fixture(30, 4, seed);
        let m = lasso_fit(&x, &y, 0.0).unwrap();
        let (b, w) = ols(&x, &y);
        assert!((m.intercept - b).abs() < 1e-4, "seed {seed}: {} vs {b}", m.intercept);
        for (a, e) in m.coef.iter().zip(&w) {
            assert!((a - e).abs() < 1e-4, "seed {seed}: {a} vs {e}");
        }
    }
}

#[test]
fn lasso_kkt_on_five_by_two() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 4.0], vec![4.0, 3.0], vec![5.0, 6.0]]);
    let y = [3.1, 3.9, 7.2, 7.8, 11.1];
    let m = lasso_fit(&x, &y, 0.1).unwrap();
    // Independent subgradient check on the standardized problem.
    let s = standardize(&x, &y).unwrap();
    let resid: Vec<f64> = (0..5)
        .map(|i| s.y_centered[i] - s.columns.iter().zip(&m.std_coef).map(|(c, w)| c[i] * w).sum::<f64>())
        .collect();
    for (col, &w) in s.columns.iter().zip(&m.std_coef) {
        let g: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / 5.0;
        if w == 0.0 {
            assert!(g.abs() <= 0.1 + 1e-6);
        } else {
            assert!((g - 0.1 * w.signum()).abs() <= 1e-6, "g {g} w {w}");
        }
    }
}

/// Grid `[0]` reduces the nested search to plain least squares, so each
/// fold can be recomputed with the closed form.
#[test]
fn kfold_matches_fold_by_fold_least_squares() {
    let (x, y) = fixture(23, 3, 7);
    let report = kfold_regress("fixture", &x, &y, 5, Some(&[0.0]), 7).unwrap();
    let folds = fold_indices(23, 5, 7);
    let (mut mae, mut rmse, mut r2) = (0.0, 0.0, 0.0);
    for test in 0..5 {
        let train: Vec<usize> = (0..5).filter(|&f| f != test).flat_map(|f| folds[f].clone()).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let (b, w) = ols(&xt, &yt);
        let truth: Vec<f64> = folds[test].iter().map(|&i| y[i]).collect();
        let pred: Vec<f64> =
            folds[test].iter().map(|&i| b + x.row(i).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>()).collect();
        let n = truth.len() as f64;
        let mean = truth.iter().sum::<f64>() / n;
        mae += truth.iter().zip(&pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
        let ss: f64 = truth.iter().zip(&pred).map(|(t, p)| (t - p).powi(2)).sum();
        rmse += (ss / n).sqrt();
        r2 += 1.0 - ss / truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>();
    }
    assert!((report.mae - mae / 5.0).abs() < 1e-4, "{} vs {}", report.mae, mae / 5.0);
    assert!((report.rmse - rmse / 5.0).abs() < 1e-4);
    assert!((report.r2 - r2 / 5.0).abs() < 1e-4);
    assert_eq!(report.fold_l1_weights, vec![0.0; 5]);
}

#[test]
fn kmeans_reaches_exhaustive_optimum_on_eight_points() {
    let x = Tensor::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 0.5],
        vec![0.3, 1.2],
        vec![2.0, 2.1],
        vec![5.0, 5.0],
        vec![6.1, 4.4],
        vec![5.5, 6.3],
        vec![3.2, 3.9],
    ]);
    let cost = |mask: u32| -> f64 {
        (0..2)
            .map(|c| {
                let members: Vec<usize> = (0..8).filter(|&i| ((mask >> i) & 1) == c).collect();
                if members.is_empty() {
                    return 0.0;
                }
                let m = members.len() as f64;
                let cx = members.iter().map(|&i| x.get(i, 0)).sum::<f64>() / m;
                let cy = members.iter().map(|&i| x.get(i, 1)).sum::<f64>() / m;
                members.iter().map(|&i| (x.get(i, 0) - cx).powi(2) + (x.get(i, 1) - cy).powi(2)).sum::<f64>()
            })
            .sum()
    };
    let best = (1..255u32).map(cost).fold(f64::INFINITY, f64::min);
    let r = kmeans(&x, 2, 0).unwrap();
    assert!(r.inertia <= best * 1.0001, "{} vs {best}", r.inertia);
}

fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let count = |f: &dyn Fn(usize) -> bool| (0..a.len()).filter(|&i| f(i)).count() as f64;
    let la: std::collections::BTreeSet<usize> = a.iter().copied().collect();
    let lb: std::collections::BTreeSet<usize> = b.iter().copied().collect();
    let h = |labels: &std::collections::BTreeSet<usize>, v: &[usize]| -> f64 {
        labels.iter().map(|&l| count(&|i| v[i] == l) / n).map(|p| -p * p.ln()).sum()
    };
    let mut mi = 0.0;
    for &p in &la {
        for &q in &lb {
            let nij = count(&|i| a[i] == p && b[i] == q);
            if nij > 0.0 {
                let pa = count(&|i| a[i] == p);
                let pb = count(&|i| b[i] == q);
                mi += nij / n * (n * nij / (pa * pb)).ln();
            }
        }
    }
    mi / (0.5 * (h(&la, a) + h(&lb, b)))
}

fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut same_a, mut same_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            same_a += f64::from(u8::from(sa));
            same_b += f64::from(u8::from(sb));
            both += f64::from(u8::from(sa && sb));
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let expected = same_a * same_b / total;
    (both - expected) / (0.5 * (same_a + same_b) - expected)
}

#[test]
fn partition_metrics_match_oracles() {
    let a = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 3, 3];
    let b = [1, 1, 0, 0, 1, 2, 2, 2, 0, 2, 3, 0];
    assert!((nmi(&a, &b).unwrap() - nmi_oracle(&a, &b)).abs() < 1e-12);
    assert!((ari(&a, &b).unwrap() - ari_oracle(&a, &b)).abs() < 1e-12);
}

#[test]
fn ari_is_chance_corrected() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mean: f64 = (0..1000)
        .map(|_| {
            let a: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
            ari(&a, &b).unwrap()
        })
        .sum::<f64>()
        / 1000.0;
    assert!(mean.abs() < 0.05, "{mean}");
}

fn labels(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n))
}

proptest! {
    #[test]
    fn partition_metrics_symmetric_and_rename_invariant((a, b) in (2usize..40).prop_flat_map(labels)) {
        let renamed: Vec<usize> = a.iter().map(|l| 100 - 7 * l).collect();
        let n1 = nmi(&a, &b).unwrap();
        prop_assert!((n1 - nmi(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((n1 - nmi(&renamed, &b).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&n1));
        let r1 = ari(&a, &b).unwrap();
        prop_assert!((r1 - ari(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((r1 - ari(&renamed, &b).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r1));
        prop_assert_eq!(nmi(&a, &renamed).unwrap(), 1.0);
        prop_assert_eq!(ari(&a, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = scores(&t, &p);
        prop_assert!(s.mae >= 0.0);
        prop_assert!(s.mae <= s.rmse * (1.0 + 1e-12) + 1e-12);
        let exact = scores(&t, &t);
        prop_assert_eq!((exact.mae, exact.rmse), (0.0, 0.0));
    }

    #[test]
    fn lasso_solutions_satisfy_kkt(seed in 0u64..1000, frac in 0.0f64..1.0) {
        let (x, y) = fixture(25, 5, seed);
        let top = regionembed::evaluation::lambda_max(&x, &y).unwrap();
        let l = frac * top;
        let m = lasso_fit(&x, &y, l).unwrap();
        let s = standardize(&x, &y).unwrap();
        prop_assert!(kkt_violation(&s, &m.std_coef, l) <= 1e-6);
    }

    #[test]
    fn kmeans_inertia_never_increases(seed in 0u64..500, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(30, 3, |_, _| rng.random_range(-5.0..5.0));
        let r = kmeans(&x, k, seed).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(r.inertia <= *r.history.last().unwrap() * (1.0 + 1e-12));
    }
}

/// Full nested search with the default grid, frozen from a single run.
#[test]
fn kfold_seed_seven_is_frozen() {
    let (x, y) = fixture(23, 3, 7);
    let r = kfold_regress("fixture", &x, &y, 5, None, 7).unwrap();
    assert!((r.mae - 0.35447164113487123).abs() < 1e-4);
    assert!((r.rmse - 0.39084917272064423).abs() < 1e-4);
    assert!((r.r2 - 0.9705871745621953).abs() < 1e-4);
    assert!((r.l1_weight - 0.08122407503364294).abs() < 1e-6);
}
