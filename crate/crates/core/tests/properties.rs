use ggrqr_core::counting::{cgr_count_formula, gr_count_formula, OpCounter};
use ggrqr_core::ggr::{cgr_factorize, ggr_factorize, partial_inner_sums, tail_norms};
use ggrqr_core::householder::householder_vector;
use ggrqr_core::matcore::{format_csv, format_matrix_market, metrics, parse_csv, parse_matrix_market};
use ggrqr_core::rotations::gr_factorize;
use ggrqr_core::tilepar::{parallel_ggr, partition};
use ggrqr_core::{factorize, Algorithm, DenseMatrix, FactorizeOptions};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_cols)
        .prop_flat_map(move |n| (n..=max_rows.max(n), Just(n)))
        .prop_flat_map(|(m, n)| proptest::collection::vec(-1.0f64..1.0, m * n).prop_map(move |d| DenseMatrix::from_col_major(m, n, d).unwrap()))
}

fn square(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max).prop_flat_map(|n| {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| DenseMatrix::from_col_major(n, n, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_algorithm_factorizes(a in matrix(14, 10), panel in 1usize..6) {
        let gate = 50.0 * a.rows() as f64 * f64::EPSILON;
        for alg in Algorithm::ALL {
            let opts = FactorizeOptions { accumulate_q: true, panel: Some(panel.min(a.cols())) };
            let res = factorize(alg, &a, opts, None).unwrap();
            let m = metrics(&a, res.q.as_ref().unwrap(), &res.r).unwrap();
            prop_assert!(m.reconstruction_residual <= gate, "{} residual {}", alg, m.reconstruction_residual);
            prop_assert!(m.orthogonality_defect <= gate, "{} orthogonality {}", alg, m.orthogonality_defect);
            prop_assert_eq!(m.max_lower_triangle, 0.0);
            for i in 0..a.cols() {
                prop_assert!(res.r[(i, i)] >= 0.0);
            }
        }
    }

    #[test]
    fn column_wise_and_generalized_agree_bitwise(a in matrix(12, 12)) {
        let mut cc = OpCounter::default();
        let mut gc = OpCounter::default();
        let c = cgr_factorize(&a, true, Some(&mut cc)).unwrap();
        let g = ggr_factorize(&a, true, Some(&mut gc)).unwrap();
        prop_assert_eq!(c.r, g.r);
        prop_assert_eq!(c.q, g.q);
        prop_assert_eq!(cc, gc);
    }

    #[test]
    fn square_counts_hit_closed_forms(a in square(12)) {
        let n = a.rows() as u64;
        let mut gr = OpCounter::default();
        let mut cgr = OpCounter::default();
        gr_factorize(&a, false, Some(&mut gr)).unwrap();
        cgr_factorize(&a, false, Some(&mut cgr)).unwrap();
        prop_assert_eq!(gr.muldiv(), gr_count_formula(n).unwrap());
        prop_assert_eq!(cgr.muldiv(), cgr_count_formula(n).unwrap());
    }

    #[test]
    fn tail_norms_are_suffix_norms(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        let q = tail_norms(&v);
        for t in 0..v.len() {
            let direct = v[t..].iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((q[t] - direct).abs() <= 1e-13 * direct.max(1e-300));
            if t > 0 {
                prop_assert!(q[t] <= q[t - 1]);
            }
        }
    }

    #[test]
    fn partial_sums_are_suffix_dots(pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40)) {
        let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = partial_inner_sums(&v, &w);
        prop_assert_eq!(s.len(), v.len() - 1);
        for t in 0..s.len() {
            let direct: f64 = (t + 1..v.len()).map(|u| v[u] * w[u]).sum();
            let bound: f64 = (t + 1..v.len()).map(|u| (v[u] * w[u]).abs()).sum();
            prop_assert!((s[t] - direct).abs() <= 1e-14 * bound.max(1.0));
        }
    }

    #[test]
    fn reflector_annihilates(v in proptest::collection::vec(-1.0f64..1.0, 1..20)) {
        let h = householder_vector(&v).unwrap();
        let d: f64 = h.v.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, (&x, &vi)) in v.iter().zip(&h.v).enumerate() {
            let y = x - h.tau * d * vi;
            let want = if i == 0 { h.beta } else { 0.0 };
            prop_assert!((y - want).abs() <= 1e-14 * norm.max(1.0));
        }
        prop_assert!((h.beta.abs() - norm).abs() <= 1e-14 * norm.max(1.0));
    }

    #[test]
    fn single_worker_grid_is_sequential(a in square(10)) {
        let n = a.rows();
        let seq = ggr_factorize(&a, false, None).unwrap().r;
        let par = parallel_ggr(&a, &partition(n, 1, 1).unwrap()).unwrap().r;
        prop_assert_eq!(par, seq);
    }

    #[test]
    fn text_formats_roundtrip(a in matrix(6, 6)) {
        prop_assert_eq!(&parse_matrix_market(&format_matrix_market(&a)).unwrap(), &a);
        prop_assert_eq!(&parse_csv(&format_csv(&a)).unwrap(), &a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tile_grid_matches_sequential(seed in any::<u64>(), k in 2usize..4, block in 1usize..4) {
        let n = k * block * 3;
        let a = DenseMatrix::random_uniform(n, n, seed);
        let seq = ggr_factorize(&a, false, None).unwrap().r;
        let grid = partition(n, k, block).unwrap();
        let par = parallel_ggr(&a, &grid).unwrap();
        let again = parallel_ggr(&a, &grid).unwrap();
        prop_assert_eq!(&par.r, &again.r);
        let diff: f64 = par.r.data().iter().zip(seq.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-12 * a.frobenius_norm());
    }
}
