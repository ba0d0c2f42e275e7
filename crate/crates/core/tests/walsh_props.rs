use cs_lab_core::walsh::{dyadic_xor, fwht_sequency, sequency_hadamard, walsh_eval, Normalization};
use cs_lab_core::{DyadicPoint, WalshIndex};
use nalgebra::DVector;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = DyadicPoint> {
    (0u32..=8)
        .prop_flat_map(|p| (0u64..(1 << p)).prop_map(move |t| DyadicPoint::new(t, p).unwrap()))
}

proptest! {
    #[test]
    fn multiplicative(n in 0u64..=256, x in point(), y in point()) {
        let n = WalshIndex(n);
        prop_assert_eq!(walsh_eval(n, dyadic_xor(x, y)), walsh_eval(n, x) * walsh_eval(n, y));
    }

    #[test]
    fn scaling(n in 0u64..=256, x in point(), j in 0u32..=4) {
        let lhs = walsh_eval(WalshIndex(n), x.scale_down(j).unwrap());
        prop_assert_eq!(lhs, walsh_eval(WalshIndex(n >> j), x));
    }

    #[test]
    fn fast_transform_matches_dense(r in 0u32..=6, seed in any::<u64>()) {
        let n = 1usize << r;
        let mut s = seed | 1;
        let x: Vec<f64> = (0..n).map(|_| {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            (s % 2001) as f64 / 1000.0 - 1.0
        }).collect();
        let fast = fwht_sequency(&x, Normalization::Unnormalized).unwrap();
        let dense = sequency_hadamard(r).unwrap() * DVector::from_column_slice(&x);
        for (a, b) in fast.iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn rows_have_sequency_sign_changes() {
    for r in 0..=8u32 {
        let v = sequency_hadamard(r).unwrap();
        for n in 0..v.nrows() {
            let changes = (1..v.ncols())
                .filter(|&t| v[(n, t)] != v[(n, t - 1)])
                .count();
            assert_eq!(changes, n, "r={r} n={n}");
        }
        let n = v.nrows() as f64;
        let dev =
            (&v * v.transpose() / n - nalgebra::DMatrix::identity(v.nrows(), v.nrows())).amax();
        assert!(dev <= 1e-12);
    }
}
