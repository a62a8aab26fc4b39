use ndarray::{Array1, Array2};
use ndd_osr::ingest::{self, FeatureVector, MmsScope, RoiTimeSeries};
use proptest::prelude::*;

fn series_strategy() -> impl Strategy<Value = Array2<f64>> {
    (3usize..=50, 2usize..=20)
        .prop_flat_map(|(t, r)| prop::collection::vec(-10.0f64..10.0, t * r).prop_map(move |v| Array2::from_shape_vec((t, r), v).unwrap()))
}

/// Textbook two-pass Pearson per pair of columns.
fn pearson_oracle(x: &Array2<f64>) -> Array2<f64> {
    let (t, r) = x.dim();
    let mut out = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            let mi = (0..t).map(|k| x[[k, i]]).sum::<f64>() / t as f64;
            let mj = (0..t).map(|k| x[[k, j]]).sum::<f64>() / t as f64;
            let mut sij = 0.0;
            let mut sii = 0.0;
            let mut sjj = 0.0;
            for k in 0..t {
                sij += (x[[k, i]] - mi) * (x[[k, j]] - mj);
                sii += (x[[k, i]] - mi).powi(2);
                sjj += (x[[k, j]] - mj).powi(2);
            }
            out[[i, j]] = sij / (sii * sjj).sqrt();
        }
    }
    out
}

fn vector_strategy() -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2..200).prop_map(Array1::from)
}

fn per_subject(v: &Array1<f64>) -> Array1<f64> {
    ingest::mms_scale(&FeatureVector::unscaled(v.clone()), -1.0, 1.0, MmsScope::PerSubject, None)
        .unwrap()
        .vector
        .values
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn pearson_matches_brute_force(x in series_strategy()) {
        let fc = ingest::pearson_fc(&RoiTimeSeries::new(x.clone()).unwrap()).unwrap();
        let oracle = pearson_oracle(&x);
        for ((i, j), v) in fc.values().indexed_iter() {
            let want = if i == j { 1.0 } else { oracle[[i, j]] };
            prop_assert!((v - want).abs() <= 1e-12, "({i},{j}) {v} vs {want}");
        }
    }

    #[test]
    fn pearson_positive_affine_invariant(x in series_strategy(), alpha in 0.1f64..10.0, beta in -5.0f64..5.0) {
        let mut y = x.clone();
        y.column_mut(0).mapv_inplace(|v| alpha * v + beta);
        let a = ingest::pearson_fc(&RoiTimeSeries::new(x).unwrap()).unwrap();
        let b = ingest::pearson_fc(&RoiTimeSeries::new(y).unwrap()).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn upper_triangle_round_trip(x in series_strategy()) {
        let fc = ingest::pearson_fc(&RoiTimeSeries::new(x).unwrap()).unwrap();
        let v = ingest::vectorize_upper(&fc);
        prop_assert_eq!(v.len(), ingest::upper_len(fc.regions()));
        let back = ingest::symmetric_from_upper(v.values.as_slice().unwrap(), 1.0).unwrap();
        prop_assert_eq!(&back, fc.values());
    }

    #[test]
    fn mms_standardizes(v in vector_strategy()) {
        prop_assume!(v.iter().any(|&x| x != v[0]));
        let mapped = ingest::min_max_map(&v, -1.0, 1.0).unwrap();
        prop_assert_eq!(mapped.iter().copied().fold(f64::INFINITY, f64::min), -1.0);
        prop_assert_eq!(mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        let out = per_subject(&v);
        let n = out.len() as f64;
        let mean = out.sum() / n;
        let std = (out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() <= 1e-9);
        prop_assert!((std - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn mms_affine_invariant_and_idempotent(v in vector_strategy(), alpha in 0.01f64..100.0, beta in -50.0f64..50.0) {
        prop_assume!(v.iter().any(|&x| x != v[0]));
        let once = per_subject(&v);
        prop_assert!(max_abs_diff(&once, &per_subject(&v.mapv(|x| alpha * x + beta))) <= 1e-9);
        prop_assert!(max_abs_diff(&once, &per_subject(&once)) <= 1e-9);
    }
}
