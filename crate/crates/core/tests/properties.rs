use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sigssar::estimators::{predict, RidgeFit, SarFit};
use sigssar::sigcore::{build_design_matrix, chen_concat, signature, signature_tensor, Augment, Path};
use sigssar::spatial::{knn_weights, Coordinates};

fn path_strategy(max_dim: usize) -> impl Strategy<Value = Path> {
    (1..=max_dim, 2usize..7).prop_flat_map(|(dim, len)| {
        (
            prop::collection::vec(0.1f64..2.0, len),
            prop::collection::vec(-3.0f64..3.0, dim * len),
        )
            .prop_map(move |(gaps, values)| {
                let times = gaps
                    .iter()
                    .scan(0.0, |t, g| {
                        let now = *t;
                        *t += g;
                        Some(now)
                    })
                    .collect();
                Path::new(times, dim, values).unwrap()
            })
    })
}

fn points_strategy(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::hash_set((0i32..40, 0i32..40), n)
        .prop_map(|cells| cells.into_iter().map(|(x, y)| [x as f64, y as f64]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chen_identity_at_every_knot(x in path_strategy(3), order in 1usize..5) {
        let whole = signature_tensor(&x, order).unwrap();
        for k in 1..x.len() - 1 {
            let left = signature_tensor(&x.slice(0, k + 1).unwrap(), order).unwrap();
            let right = signature_tensor(&x.slice(k, x.len()).unwrap(), order).unwrap();
            let joined = chen_concat(&left, &right).unwrap();
            for (a, b) in whole.levels().iter().flatten().zip(joined.levels().iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn raw_signature_ignores_translation_and_time(x in path_strategy(3), shift in -5.0f64..5.0, scale in 0.2f64..4.0) {
        let base = signature(&x, 3).unwrap().coeffs;
        let moved = x.translated(&vec![shift; x.dim()]).unwrap();
        let stretched = x.with_times(x.times().iter().map(|t| t * scale).collect()).unwrap();
        for other in [moved, stretched] {
            for (a, b) in base.iter().zip(&signature(&other, 3).unwrap().coeffs) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn lower_order_design_is_column_prefix(paths in prop::collection::vec(path_strategy(2), 3)) {
        let dim = paths[0].dim();
        let paths: Vec<Path> = paths.into_iter().filter(|p| p.dim() == dim).collect();
        let high = build_design_matrix(&paths, 3, Augment::default()).unwrap();
        let low = build_design_matrix(&paths, 2, Augment::default()).unwrap();
        prop_assert_eq!(high.columns(0, low.ncols()).clone_owned(), low);
    }

    #[test]
    fn knn_rows_are_averages(points in points_strategy(15), k in 1usize..6) {
        let w = knn_weights(&Coordinates::new(points).unwrap(), k).unwrap();
        for (i, s) in w.row_sums().iter().enumerate() {
            prop_assert!((s - 1.0).abs() <= 1e-15);
            prop_assert_eq!(w.matrix()[(i, i)], 0.0);
            prop_assert_eq!(w.matrix().row(i).iter().filter(|v| **v > 0.0).count(), k);
        }
        let sub: Vec<usize> = (0..15).step_by(2).collect();
        for s in w.restrict(&sub).row_sums() {
            prop_assert!(s == 0.0 || (s - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn prediction_solves_the_simultaneous_system(points in points_strategy(12), rho in -0.9f64..0.9, seed in 0u64..1000) {
        let w = knn_weights(&Coordinates::new(points).unwrap(), 3).unwrap();
        let xi = DMatrix::from_fn(12, 2, |i, j| ((seed + (i * 7 + j * 3) as u64) % 11) as f64 - 5.0);
        let fit = SarFit::from(RidgeFit {
            rho_hat: rho,
            alpha_hat: 0.5,
            beta_hat: vec![0.3, -0.2],
            lambda: 1.0,
            order: 1,
            objective: 0.0,
        });
        let y = predict(&fit, &w, &xi).unwrap();
        let linear = (&xi * DVector::from_vec(vec![0.3, -0.2])).add_scalar(0.5);
        let back = &y - w.mul_vec(&y) * rho;
        prop_assert!((back - linear).amax() <= 1e-10);
    }
}
