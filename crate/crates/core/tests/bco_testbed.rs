use arena_core::bco::{one_point_gradient, run_bco, unit_sphere, BcoParams, QuadraticTestbed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn bandit_run_approaches_oracle() {
    let opt = QuadraticTestbed::new(0.0, 0).oracle().unwrap();
    let mut costs = Vec::new();
    let mut viol = Vec::new();
    for seed in 0..10 {
        let t = run_bco(&mut QuadraticTestbed::new(0.0, seed), 5000, &BcoParams { seed, ..Default::default() }).unwrap();
        costs.push(t.mean_cost());
        viol.push(t.violation());
    }
    let (c, v) = (median(costs), median(viol));
    assert!((c - opt.cost).abs() <= 0.1 * opt.cost, "median cost {c} vs {}", opt.cost);
    assert!(v <= 0.05, "median violation {v}");
}

#[test]
fn exact_gradient_gap_shrinks_with_horizon() {
    let opt = QuadraticTestbed::new(0.0, 0).oracle().unwrap();
    let mut gaps = Vec::new();
    for e in [500, 1000, 2000, 4000] {
        let per_seed: Vec<f64> = (0..10)
            .map(|seed| {
                let p = BcoParams { seed, exact_gradients: true, ..Default::default() };
                let t = run_bco(&mut QuadraticTestbed::new(0.0, seed), e, &p).unwrap();
                (t.mean_cost() - opt.cost).abs()
            })
            .collect();
        gaps.push(median(per_seed));
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn antithetic_estimator_matches_quadratic_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let d = 3;
    // random positive definite quadratic 0.5 x'Ax + b'x
    let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> =
        (0..d).map(|i| (0..d).map(|j| (0..d).map(|k| m[k][i] * m[k][j]).sum::<f64>() + f64::from(u8::from(i == j))).collect()).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = |x: &[f64]| {
        let mut v = 0.0;
        for i in 0..d {
            v += b[i] * x[i];
            for j in 0..d {
                v += 0.5 * a[i][j] * x[i] * x[j];
            }
        }
        v
    };
    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad: Vec<f64> = (0..d).map(|i| b[i] + (0..d).map(|j| a[i][j] * x[j]).sum::<f64>()).collect();
    let n = 100_000;
    let mut acc = vec![0.0; d];
    for _ in 0..n / 2 {
        let u = unit_sphere(&mut rng, d);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let g1 = one_point_gradient(f, &x, 0.05, &u).unwrap();
        let g2 = one_point_gradient(f, &x, 0.05, &neg).unwrap();
        for i in 0..d {
            acc[i] += g1[i] + g2[i];
        }
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let err = acc.iter().zip(&grad).map(|(s, g)| (s / n as f64 - g).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 0.02 * norm, "error {err} vs norm {norm}");
}
