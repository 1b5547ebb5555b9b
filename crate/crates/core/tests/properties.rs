//! Randomized invariant checks over the numeric kernels and designs.

use proptest::prelude::*;
use rct_core::designs::{gsw_design_traced, GswConfig};
use rct_core::estimation::{ht_error, observe, tau_ht, tau_true, PotentialOutcomes};
use rct_core::numerics::{self, Matrix};
use rct_core::rng;

fn symmetric_matrix(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim).prop_flat_map(|n| {
        proptest::collection::vec(-3.0..3.0f64, n * n).prop_map(move |data| {
            Matrix::from_fn(n, n, |i, j| 0.5 * (data[i * n + j] + data[j * n + i]))
        })
    })
}

fn diagonally_dominant_system() -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    (1usize..7).prop_flat_map(|n| {
        (
            proptest::collection::vec(-1.0..1.0f64, n * n),
            proptest::collection::vec(-5.0..5.0f64, n),
        )
            .prop_map(move |(data, x)| {
                let a = Matrix::from_fn(n, n, |i, j| {
                    data[i * n + j] + if i == j { n as f64 + 1.0 } else { 0.0 }
                });
                (a, x)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigen_decomposition_preserves_trace_and_reconstructs(a in symmetric_matrix(5)) {
        let eig = numerics::sym_eigen(&a).expect("symmetric input");
        let trace = a.trace();
        let sum: f64 = eig.values.iter().sum();
        prop_assert!((sum - trace).abs() <= 1e-9 * (1.0 + trace.abs()));
        let n = a.rows();
        let lambda = Matrix::from_fn(n, n, |i, j| if i == j { eig.values[i] } else { 0.0 });
        let rebuilt = eig.vectors.matmul(&lambda).matmul(&eig.vectors.transpose());
        prop_assert!(rebuilt.sub(&a).max_abs() <= 1e-8 * (1.0 + a.max_abs()));
    }

    #[test]
    fn solve_round_trips_on_diagonally_dominant_systems((a, x) in diagonally_dominant_system()) {
        let b = a.matvec(&x);
        let solved = numerics::solve(&a, &b).expect("well conditioned");
        let err = solved
            .iter()
            .zip(&x)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(err <= 1e-9 * (1.0 + numerics::norm2(&x)));
    }

    #[test]
    fn psd_sqrt_squares_back(g in symmetric_matrix(4)) {
        let a = g.transpose().matmul(&g);
        let s = numerics::psd_sqrt(&a).expect("gram matrix is psd");
        let back = s.matmul(&s);
        prop_assert!(back.sub(&a).max_abs() <= 1e-7 * (1.0 + a.max_abs()));
    }

    #[test]
    fn ht_estimate_minus_truth_equals_error_identity(
        signs in proptest::collection::vec(any::<bool>(), 2..9),
        seed in any::<u64>(),
    ) {
        let n = signs.len();
        let mut r = rng::stream(seed, 0);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let po = PotentialOutcomes::new(a, b).expect("finite outcomes");
        let z = rct_core::designs::Assignment::new(
            signs.iter().map(|&s| if s { 1 } else { -1 }).collect(),
        );
        let y = observe(&po, &z).expect("lengths match");
        let est = tau_ht(&y, &z).expect("lengths match");
        let identity = est - tau_true(&po);
        let direct = ht_error(&po, &z).expect("lengths match");
        prop_assert!((identity - direct).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn balanced_walk_always_lands_on_a_vertex_within_n_steps(
        n in 2usize..8,
        d in 1usize..4,
        phi in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut r = rng::stream(seed, 1);
        let x = Matrix::from_fn(n, d, |_, _| r.random_range(-2.0..2.0));
        let cfg = GswConfig::new(phi, x).expect("valid configuration");
        let (z, trace) = gsw_design_traced(&cfg, &mut r);
        prop_assert_eq!(z.len(), n);
        prop_assert!(trace.iterations() <= n);
        for i in 0..n {
            prop_assert!(z.sign(i) == 1.0 || z.sign(i) == -1.0);
        }
    }
}
