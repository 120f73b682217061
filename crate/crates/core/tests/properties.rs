use hidden_gibbs::oracle::oracle_eigen;
use hidden_gibbs::projective::{hilbert_distance, range_index};
use hidden_gibbs::{
    birkhoff_sum_periodic, hilbert_metric, normalized_product, perron_data, phi_of, project_apply,
    tau_of, Alphabet, AmalgamationMap, IndexedMatrix, LocallyConstantPotential, SimplexVector, Word,
};
use proptest::prelude::*;

fn positive_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..5.0, cols), rows)
}

fn positive_vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, n)
}

fn simplex(v: &[f64]) -> SimplexVector {
    SimplexVector::from_positive(range_index(v.len()), v.to_vec()).unwrap()
}

fn square_with_vectors() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..=6).prop_flat_map(|n| (positive_matrix(n, n), positive_vector(n), positive_vector(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projective_action_contracts((rows, x, y) in square_with_vectors()) {
        let m = IndexedMatrix::from_rows(&rows).unwrap();
        let (x, y) = (simplex(&x), simplex(&y));
        let before = hilbert_metric(&x, &y).unwrap();
        let after = hilbert_metric(&project_apply(&m, &x).unwrap(), &project_apply(&m, &y).unwrap()).unwrap();
        prop_assert!(after <= tau_of(&m) * before + 1e-12);
    }

    #[test]
    fn cross_ratio_ignores_diagonal_scaling(
        (rows, d1, d2) in square_with_vectors(),
        c in 0.001f64..1000.0,
    ) {
        let m = IndexedMatrix::from_rows(&rows).unwrap();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, v)| c * d1[i] * v * d2[j]).collect())
            .collect();
        let s = IndexedMatrix::from_rows(&scaled).unwrap();
        let (a, b) = (phi_of(&m), phi_of(&s));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{} vs {}", a, b);
        prop_assert!(phi_of(&m) > 0.0 && phi_of(&m) <= 1.0);
    }

    #[test]
    fn perron_root_scales((rows, _, _) in square_with_vectors(), c in 0.01f64..100.0) {
        let m = IndexedMatrix::from_rows(&rows).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| c * v).collect()).collect();
        let a = perron_data(&m, 1e-12).unwrap();
        let b = perron_data(&IndexedMatrix::from_rows(&scaled).unwrap(), 1e-12).unwrap();
        prop_assert!((b.log_rho - a.log_rho - c.ln()).abs() < 1e-10);
        prop_assert!(hilbert_distance(a.right.entries(), b.right.entries()) < 1e-10);
    }

    #[test]
    fn normalized_product_matches_direct_product(
        chain in prop::collection::vec(positive_matrix(3, 3), 1..6),
        seed in positive_vector(3),
    ) {
        let mats: Vec<IndexedMatrix> = chain.iter().map(|r| IndexedMatrix::from_rows(r).unwrap()).collect();
        let seed = simplex(&seed);
        let (x, log_scale) = normalized_product(&mats, &seed).unwrap();
        let mut direct = mats[0].clone();
        for m in &mats[1..] {
            direct = direct.matmul(m).unwrap();
        }
        let y: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| direct.entry(i, j) * seed.entries()[j]).sum())
            .collect();
        let norm: f64 = y.iter().sum();
        prop_assert!(hilbert_distance(x.entries(), &y) < 1e-12);
        prop_assert!((log_scale - norm.ln()).abs() < 1e-12 * norm.ln().abs().max(1.0));
    }

    #[test]
    fn birkhoff_sums_are_rotation_invariant(
        table in prop::collection::vec(-3.0f64..3.0, 27),
        word in prop::collection::vec(0u8..3, 1..10),
        shift in 0usize..10,
    ) {
        let alphabet = Alphabet::numeric(3).unwrap();
        let pot = LocallyConstantPotential::new(&alphabet, 2, table).unwrap();
        let k = shift % word.len();
        let rotated: Vec<u8> = word[k..].iter().chain(&word[..k]).copied().collect();
        let (a, b) = (birkhoff_sum_periodic(&pot, &word), birkhoff_sum_periodic(&pot, &rotated));
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn words_round_trip(letters in prop::collection::vec(0u8..4, 1..12)) {
        let alphabet = Alphabet::new(["ab", "c", "de", "f"]).unwrap();
        let w = Word::new(&alphabet, letters.clone()).unwrap();
        let text = w.render(",");
        prop_assert_eq!(Word::parse(&alphabet, &text, ",").unwrap(), w);
    }

    #[test]
    fn fiber_sizes_multiply(b in prop::collection::vec(0u8..2, 1..8)) {
        let a = Alphabet::numeric(5).unwrap();
        let target = Alphabet::numeric(2).unwrap();
        let map = AmalgamationMap::new(&a, &target, &[0, 1, 1, 0, 1]).unwrap();
        let expected: u128 = b.iter().map(|&x| if x == 0 { 2 } else { 3 }).product();
        prop_assert_eq!(map.fiber_size(&b), expected);
        let fiber = map.fiber_letter_words(&b, u64::MAX).unwrap();
        prop_assert_eq!(fiber.len() as u128, expected);
        prop_assert!(fiber.iter().all(|w| map.amalgamate_letters(w) == b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn perron_agrees_with_dense_eigensolver(rows in positive_matrix(8, 8)) {
        let m = IndexedMatrix::from_rows(&rows).unwrap();
        let p = perron_data(&m, 1e-13).unwrap();
        let o = oracle_eigen(&rows).unwrap();
        prop_assert!((p.rho - o.rho).abs() <= 1e-11 * o.rho);
        for (a, b) in p.right.entries().iter().zip(&o.right) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3));
        }
        let dot: f64 = p.left.iter().zip(p.right.entries()).map(|(l, r)| l * r).sum();
        prop_assert!((dot - 1.0).abs() < 1e-12);
    }
}
