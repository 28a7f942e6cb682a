//! Property-based invariants for the transform and sharing layers.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use sdmc::field::{Fe, FieldSpec};
use sdmc::matrix::{mat_mul, MatrixFq};
use sdmc::sharing::{
    make_left_shares, make_right_shares, reconstruct_constant, reconstruct_matrix, share_add,
    share_scale,
};

fn field29() -> FieldSpec {
    FieldSpec::new(29).unwrap()
}

proptest! {
    #[test]
    fn dft_idft_round_trip(raw in proptest::collection::vec(0u64..29, 7), q_pick in 0usize..3) {
        let (q, n) = [(29u64, 7usize), (11, 5), (113, 16)][q_pick];
        let field = FieldSpec::new(q).unwrap();
        let coeffs: Vec<Fe> = raw.iter().take(n).chain(raw.iter().cycle()).take(n)
            .map(|&v| field.elem(v)).collect();
        let evals = field.dft(&coeffs).unwrap();
        prop_assert_eq!(field.idft(&evals).unwrap(), coeffs);
    }

    #[test]
    fn share_reconstruct_identity(seed in any::<u64>(), k in 1usize..4, t in 0usize..3) {
        let field = field29();
        let n = 7;
        prop_assume!(k + 2 * t <= n);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = MatrixFq::random(&field, 2, 2 * k, &mut rng);
        let (left, _) = make_left_shares(&a, n, k, t, &mut rng, "a").unwrap();
        prop_assert_eq!(reconstruct_matrix(&left).unwrap(), a.clone());
        let b = MatrixFq::random(&field, 2 * k, 2, &mut rng);
        let (right, _) = make_right_shares(&b, n, k, t, &mut rng, "b").unwrap();
        prop_assert_eq!(reconstruct_matrix(&right).unwrap(), b);
    }

    #[test]
    fn shares_are_linear(seed in any::<u64>(), c in 0u64..29) {
        let field = field29();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = MatrixFq::random(&field, 2, 3, &mut rng);
        let b = MatrixFq::random(&field, 2, 3, &mut rng);
        let (sa, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        let (sb, _) = make_left_shares(&b, 7, 3, 2, &mut rng, "b").unwrap();
        let combo: Vec<_> = sa.iter().zip(&sb)
            .map(|(x, y)| share_add(&share_scale(field.elem(c), x), y).unwrap())
            .collect();
        let expected = a.scale(field.elem(c)).add(&b).unwrap();
        prop_assert_eq!(reconstruct_matrix(&combo).unwrap(), expected);
    }

    #[test]
    fn product_constant_term(seed in any::<u64>()) {
        let field = field29();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let a = MatrixFq::random(&field, 2, 3, &mut rng);
        let b = MatrixFq::random(&field, 3, 2, &mut rng);
        let (sa, _) = make_left_shares(&a, 7, 3, 2, &mut rng, "a").unwrap();
        let (sb, _) = make_right_shares(&b, 7, 3, 2, &mut rng, "b").unwrap();
        let products: Vec<_> = sa.iter().zip(&sb).map(|(x, y)| {
            let mut p = x.clone();
            p.payload = mat_mul(&x.payload, &y.payload).unwrap();
            p
        }).collect();
        // The average of the share products is exactly the constant term of
        // the product polynomial, which the key placement makes equal to AB.
        prop_assert_eq!(reconstruct_constant(&products).unwrap(), mat_mul(&a, &b).unwrap());
    }
}
