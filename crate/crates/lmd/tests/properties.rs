//! Randomized invariants over the numerical core.

use lmd::factor::{estimate_latent_dim, factorize_trivial};
use lmd::graph::{build_full_graph, laplacian, laplacian_spectrum, Bandwidth, DataSet};
use lmd::linalg::{eig_symmetric, pseudo_inverse, svd, Matrix};
use lmd::uhn::{retrieve, separation, MemoryBank, Separation, Similarity, UHNConfig};
use proptest::prelude::*;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim)
        .prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |data| Matrix::new(r, c, data).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn singular_values_are_nonnegative_and_sorted(a in matrix_strategy(10)) {
        let f = svd(&a).unwrap();
        for pair in f.s.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        prop_assert!(f.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn svd_largest_singular_value_bounds_frobenius(a in matrix_strategy(10)) {
        let f = svd(&a).unwrap();
        let fro = a.frobenius_norm();
        let sigma_max = f.s.first().copied().unwrap_or(0.0);
        prop_assert!(sigma_max <= fro + 1.0e-9);
        let sum_sq: f64 = f.s.iter().map(|s| s * s).sum();
        prop_assert!((sum_sq.sqrt() - fro).abs() <= 1.0e-8 * fro.max(1.0));
    }

    #[test]
    fn pseudo_inverse_of_pseudo_inverse_is_identity_map(a in matrix_strategy(8)) {
        let p = pseudo_inverse(&a).unwrap();
        let pp = pseudo_inverse(&p).unwrap();
        let dist = pp.frobenius_distance(&a).unwrap();
        prop_assert!(dist <= 1.0e-7 * a.frobenius_norm().max(1.0), "distance {dist}");
    }

    #[test]
    fn symmetric_eig_reconstructs(a in matrix_strategy(8)) {
        // symmetrize to get a valid input
        let sym = a.matmul(&a.transpose()).unwrap();
        let e = eig_symmetric(&sym).unwrap();
        let d = Matrix::diagonal(&e.values).unwrap();
        let recon = e
            .vectors
            .matmul(&d)
            .unwrap()
            .matmul(&e.vectors.transpose())
            .unwrap();
        let dist = recon.frobenius_distance(&sym).unwrap();
        prop_assert!(dist <= 1.0e-7 * sym.frobenius_norm().max(1.0));
    }

    #[test]
    fn trivial_residuals_are_nonincreasing_in_rank(a in matrix_strategy(8)) {
        let kmax = a.rows().min(a.cols());
        let mut prev = f64::INFINITY;
        for k in 1..=kmax {
            let f = factorize_trivial(&a, k).unwrap();
            prop_assert!(f.residual_to_w <= prev + 1.0e-12);
            prev = f.residual_to_w;
        }
    }

    #[test]
    fn latent_dim_estimate_grows_with_energy(
        s in proptest::collection::vec(0.0f64..10.0, 1..12),
    ) {
        let mut sorted = s;
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lo = estimate_latent_dim(&sorted, 0.5).unwrap();
        let hi = estimate_latent_dim(&sorted, 0.99).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!(hi <= sorted.len().max(1));
    }

    #[test]
    fn laplacian_is_psd_and_annihilates_constants(points in matrix_strategy(8)) {
        prop_assume!(points.rows() >= 2);
        let data = DataSet::new(points, None).unwrap();
        let g = build_full_graph(&data, Bandwidth::Auto).unwrap();
        let spec = laplacian_spectrum(&g).unwrap();
        prop_assert!(spec.values[0] >= -1.0e-8 * spec.values.last().unwrap().max(1.0));
        let ones = vec![1.0; g.adjacency.rows()];
        let lv = laplacian(&g).matvec(&ones).unwrap();
        prop_assert!(lv.iter().all(|v| v.abs() <= 1.0e-9));
    }

    #[test]
    fn softmax_separation_is_a_distribution(
        scores in proptest::collection::vec(-5.0f64..5.0, 1..16),
        beta in 0.1f64..20.0,
    ) {
        let out = separation(&scores, Separation::Softmax(beta)).unwrap();
        let sum: f64 = out.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1.0e-10);
        prop_assert!(out.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn uncorrupted_query_is_a_fixed_point_under_sharp_softmax(
        seed in 0u64..1000,
        stored in 2usize..8,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dim = 16;
        let patterns = Matrix::new(
            stored,
            dim,
            (0..stored * dim)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        let bank = MemoryBank::auto(patterns.clone());
        let cfg = UHNConfig {
            similarity: Similarity::Dot,
            separation: Separation::Softmax(40.0),
        };
        let target = rng.gen_range(0..stored);
        // duplicated patterns make the fixed point ambiguous; skip those
        let unique = (0..stored).all(|other| {
            other == target || patterns.row(other) != patterns.row(target)
        });
        prop_assume!(unique);
        let z = retrieve(&bank, patterns.row(target), &cfg).unwrap();
        for (a, b) in z.iter().zip(patterns.row(target)) {
            prop_assert!((*a >= 0.0) == (*b >= 0.0));
        }
    }
}
