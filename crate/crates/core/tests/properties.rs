use dqma::distributions::{ald_cdf, pinball_loss, AldParams};
use dqma::dma::{combine_quantile_forecast, predict_weights, update_weights, update_weights_log};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("nonzero mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn pinball_is_convex(a in -50.0f64..50.0, b in -50.0f64..50.0, w in 0.0f64..1.0, tau in 0.01f64..0.99) {
        let mid = pinball_loss(w * a + (1.0 - w) * b, tau);
        prop_assert!(mid <= w * pinball_loss(a, tau) + (1.0 - w) * pinball_loss(b, tau) + 1e-12);
    }

    #[test]
    fn pinball_is_positively_homogeneous(u in -50.0f64..50.0, c in 0.0f64..20.0, tau in 0.01f64..0.99) {
        let lhs = pinball_loss(c * u, tau);
        let rhs = c * pinball_loss(u, tau);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        prop_assert!(pinball_loss(u, tau) >= 0.0);
    }

    #[test]
    fn ald_location_is_the_tau_quantile(tau in 0.01f64..0.99, loc in -5.0f64..5.0, scale in 0.05f64..10.0, x in -30.0f64..30.0) {
        let p = AldParams::new(tau, loc, scale).unwrap();
        prop_assert!((ald_cdf(loc, &p) - tau).abs() < 1e-12);
        prop_assert!(ald_cdf(x, &p) <= ald_cdf(x + 0.1, &p));
    }

    #[test]
    fn forgetting_step_is_a_floored_distribution(
        w in (1usize..12).prop_flat_map(simplex),
        alpha in 0.01f64..=1.0,
        xi in 0.0f64..0.1,
    ) {
        let k = w.len() as f64;
        let p = predict_weights(&w, alpha, xi);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // sum_j w_j^alpha <= K^(1-alpha) by concavity
        let floor = xi / (k.powf(1.0 - alpha) + k * xi);
        for &v in &p {
            prop_assert!(v >= floor * (1.0 - 1e-12));
            if xi > 0.0 {
                prop_assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn forgetting_step_identity_and_symmetry(w in (1usize..12).prop_flat_map(simplex), alpha in 0.01f64..=1.0, xi in 0.0f64..0.1) {
        let id = predict_weights(&w, 1.0, 0.0);
        for (a, b) in id.iter().zip(&w) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let k = w.len();
        let u = predict_weights(&vec![1.0 / k as f64; k], alpha, xi);
        for v in u {
            prop_assert!((v - 1.0 / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn update_is_normalized_and_permutation_equivariant(
        (k, l) in (2usize..7, 1usize..5),
        seed in any::<u64>(),
    ) {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / (1u64 << 53) as f64
        };
        let pred = DMatrix::from_fn(k, l, |_, _| next() + 1e-3);
        let pred = DMatrix::from_fn(k, l, |i, j| pred[(i, j)] / pred.column(j).sum());
        let dens = DMatrix::from_fn(k, l, |_, _| 3.0 * next());
        let up = update_weights(&pred, &dens).unwrap();
        for col in up.upd.column_iter() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let perm: Vec<usize> = (0..k).rev().collect();
        let pp = DMatrix::from_fn(k, l, |i, j| pred[(perm[i], j)]);
        let dp = DMatrix::from_fn(k, l, |i, j| dens[(perm[i], j)]);
        let upp = update_weights(&pp, &dp).unwrap();
        for i in 0..k {
            for j in 0..l {
                prop_assert!((upp.upd[(i, j)] - up.upd[(perm[i], j)]).abs() < 1e-12);
            }
        }
        let logd = dens.map(|v| v.ln());
        let ul = update_weights_log(&pred, &logd).unwrap();
        prop_assert!((&ul.upd - &up.upd).amax() < 1e-12);
    }

    #[test]
    fn averaged_forecast_is_a_convex_combination(
        (w, f) in (1usize..10).prop_flat_map(|k| (simplex(k), prop::collection::vec(-100.0f64..100.0, k))),
    ) {
        let c = combine_quantile_forecast(&w, &f);
        let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= lo - 1e-9 && c <= hi + 1e-9);
    }
}
