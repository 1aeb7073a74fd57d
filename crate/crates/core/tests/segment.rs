use proptest::prelude::*;

use tkgx::bench::naive;
use tkgx::segment::{indicator_matrix_sum, segment_argmax, segment_max, segment_softmax, segment_sum, segment_sum_rows, SegmentedVector};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
    (1usize..12).prop_flat_map(|n| {
        prop::collection::vec((-50.0f64..50.0, 0..n), 0..80).prop_map(move |v| {
            let (x, s) = v.into_iter().unzip();
            (x, s, n)
        })
    })
}

proptest! {
    #[test]
    fn kernels_match_per_segment_loops((x, s, n) in instance()) {
        let sv = SegmentedVector::new(&x, &s).unwrap();
        prop_assert_eq!(segment_sum(sv, n).unwrap(), naive::sum(&x, &s, n));
        prop_assert_eq!(segment_argmax(sv, n).unwrap(), naive::argmax(&x, &s, n));
        for (a, b) in segment_softmax(sv, n).unwrap().iter().zip(naive::softmax(&x, &s, n)) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        let dense = indicator_matrix_sum(sv, n).unwrap();
        for (a, b) in dense.iter().zip(naive::sum(&x, &s, n)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn softmax_partitions_each_segment((x, s, n) in instance()) {
        let sv = SegmentedVector::new(&x, &s).unwrap();
        let sm = segment_softmax(sv, n).unwrap();
        let totals = segment_sum(SegmentedVector::new(&sm, &s).unwrap(), n).unwrap();
        for k in 0..n {
            if s.contains(&k) {
                prop_assert!((totals[k] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_is_shift_stable((x, s, n) in instance()) {
        let shifted: Vec<f64> = x.iter().map(|v| v + 1e4).collect();
        let a = segment_softmax(SegmentedVector::new(&x, &s).unwrap(), n).unwrap();
        let b = segment_softmax(SegmentedVector::new(&shifted, &s).unwrap(), n).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!(q.is_finite());
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_points_at_the_max((x, s, n) in instance()) {
        let sv = SegmentedVector::new(&x, &s).unwrap();
        let max = segment_max(sv, n).unwrap();
        for (k, idx) in segment_argmax(sv, n).unwrap().into_iter().enumerate() {
            match idx {
                Some(i) => {
                    prop_assert_eq!(s[i], k);
                    prop_assert_eq!(x[i], max[k]);
                }
                None => prop_assert!(!s.contains(&k)),
            }
        }
    }
}

#[test]
fn huge_logits_do_not_overflow() {
    let x = [1e4, 1e4 + 1.0, -1e4];
    let s = [0, 0, 1];
    let sm = segment_softmax(SegmentedVector::new(&x, &s).unwrap(), 2).unwrap();
    let e = 1f64.exp();
    assert!((sm[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    assert!((sm[1] - e / (1.0 + e)).abs() < 1e-15);
    assert_eq!(sm[2], 1.0);
}

#[test]
fn row_sums_group_whole_rows() {
    let rows = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    assert_eq!(segment_sum_rows(&rows, 2, &[1, 0, 1], 2).unwrap(), vec![3.0, 4.0, 6.0, 8.0]);
    assert!(segment_sum_rows(&rows, 2, &[0, 0], 1).is_err());
}

#[test]
fn bench_report_contains_each_kernel() {
    let r = tkgx::bench::run(2_000, 20, 1, 1).unwrap();
    let names: Vec<&str> = r.timings.iter().map(|t| t.kernel.as_str()).collect();
    assert_eq!(names, ["sum", "softmax", "argmax"]);
    assert!(r.timings.iter().all(|t| t.naive_secs > 0.0 && t.kernel_secs >= 0.0));
    assert!(tkgx::bench::run(0, 1, 1, 0).is_err());
}
