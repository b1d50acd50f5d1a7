use proptest::prelude::*;

use tar4c::connectivity::{tci, tgci, DelayTally};

fn tally_strategy() -> impl Strategy<Value = DelayTally> {
    (1usize..60, 1usize..16).prop_flat_map(|(n, d)| {
        proptest::collection::vec((0..=n).prop_flat_map(|c| (Just(c), 0..=c)), d).prop_map(move |pairs| DelayTally {
            n_by_delay: pairs.iter().map(|p| p.0).collect(),
            wald_by_delay: pairs.iter().map(|p| p.1).collect(),
            n_subjects: n,
        })
    })
}

proptest! {
    #[test]
    fn indices_are_bounded_and_ordered(t in tally_strategy(), majority in 0.0f64..=1.0) {
        let (a, b) = (tci(&t, majority), tgci(&t, majority));
        prop_assert!((0.0..=100.0).contains(&a));
        prop_assert!((0.0..=100.0).contains(&b));
        prop_assert!(b <= a);
    }

    #[test]
    fn raising_a_gated_count_never_lowers_tci(t in tally_strategy(), k in any::<prop::sample::Index>()) {
        let i = k.index(t.n_by_delay.len());
        let before = tci(&t, 0.7);
        let mut up = t.clone();
        if up.n_by_delay[i] < up.n_subjects {
            up.n_by_delay[i] += 1;
        }
        prop_assert!(tci(&up, 0.7) >= before);
        let mut w = t.clone();
        if w.wald_by_delay[i] < w.n_by_delay[i] {
            w.wald_by_delay[i] += 1;
        }
        prop_assert!(tgci(&w, 0.7) >= tgci(&t, 0.7));
    }

    #[test]
    fn delay_order_is_irrelevant(t in tally_strategy()) {
        let mut r = t.clone();
        r.n_by_delay.reverse();
        r.wald_by_delay.reverse();
        prop_assert!((tci(&t, 0.7) - tci(&r, 0.7)).abs() < 1e-9);
        prop_assert!((tgci(&t, 0.7) - tgci(&r, 0.7)).abs() < 1e-9);
    }

    #[test]
    fn no_gate_gives_mean_rate(t in tally_strategy()) {
        let total: usize = t.n_by_delay.iter().sum();
        let mean = total as f64 / (t.n_by_delay.len() * t.n_subjects) as f64 * 100.0;
        prop_assert!((tci(&t, 0.0) - mean).abs() < 1e-9);
    }
}
