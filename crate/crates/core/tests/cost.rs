use deepshift::complexity::{
    count_deep_shifting, count_normal_deepest_fixed, count_normal_input_fixed, measure_naive_ops,
    measure_steady_shift_ops, reconcile, speedup_factor, CostParams,
};
use proptest::prelude::*;

// per-layer output lengths summed by hand
fn naive_oracle(n: usize, w: usize, t_in: usize) -> u64 {
    let mut len = t_in;
    let mut total = 0;
    for _ in 0..n {
        if len < w {
            break;
        }
        len = len - w + 1;
        total += len as u64;
    }
    total
}

#[test]
fn zero_parameters_are_rejected() {
    assert!(reconcile(CostParams::new(0, 3, 2)).is_err());
    assert!(reconcile(CostParams::new(2, 0, 2)).is_err());
    assert!(reconcile(CostParams::new(2, 3, 0)).is_err());
}

#[test]
fn worked_speedup_example() {
    let p = CostParams::new(2, 10, 3);
    assert_eq!(speedup_factor(p).unwrap(), 7.0);
    assert_eq!(count_normal_input_fixed(p).unwrap(), 14);
}

proptest! {
    #[test]
    fn counters_match_series(n in 1usize..7, t in 1usize..40, w in 1usize..7) {
        let p = CostParams::new(n, t, w);
        let a = count_normal_deepest_fixed(p);
        prop_assert_eq!(a, naive_oracle(n, w, t + n * (w - 1)));
        prop_assert_eq!(a, measure_naive_ops(n, w, t + n * (w - 1)).unwrap());
        match count_normal_input_fixed(p) {
            Ok(b) => {
                prop_assert_eq!(b, naive_oracle(n, w, t));
                prop_assert_eq!(b, measure_naive_ops(n, w, t).unwrap());
                prop_assert_eq!(speedup_factor(p).unwrap() * n as f64, b as f64);
            }
            Err(_) => prop_assert!(t <= n * (w - 1)),
        }
    }

    #[test]
    fn cached_cost_is_one_per_layer(n in 1usize..6, w in 1usize..6) {
        prop_assert_eq!(measure_steady_shift_ops(n, w).unwrap(), n as u64);
        prop_assert_eq!(count_deep_shifting(CostParams::new(n, 5, w)), n as u64);
    }
}
