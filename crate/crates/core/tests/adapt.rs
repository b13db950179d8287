use proptest::prelude::*;
use whackamole::adapt::{rebalance_step, severity_objective, whack, Rebalance, SeverityWeights};
use whackamole::rational::Rational;
use whackamole::{PathProfile, ResidualCursor};

fn arb_profile() -> impl Strategy<Value = PathProfile> {
    proptest::collection::vec(0u64..300, 2..8)
        .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
        .prop_map(|c| PathProfile::from_counts(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn whack_conserves_and_never_grows_the_target(
        profile in arb_profile(),
        path_pick in any::<usize>(),
        num in 0i128..=16,
        r0 in any::<usize>(),
    ) {
        let mut p = profile.clone();
        let n = p.n();
        let path = path_pick % n;
        let mut cursor = ResidualCursor::at(r0 % n);
        let alpha = Rational::new(num, 16);
        let summary = whack(&mut p, &mut cursor, path, alpha).unwrap();
        prop_assert_eq!(p.m(), profile.m());
        let removed = (alpha * Rational::from_integer(profile.count(path) as i128)).floor();
        prop_assert_eq!(summary.removed as i128, *removed.numer());
        // the whacked path gets back at most its even share plus one leftover
        prop_assert!(p.count(path) <= profile.count(path) - summary.removed + summary.per_bin + 1);
    }

    #[test]
    fn rebalancing_descends(
        profile in arb_profile(),
        raw in proptest::collection::vec(0i64..5, 8),
        budget in 1u64..200,
        steps in 1usize..20,
    ) {
        let mut p = profile.clone();
        let n = p.n();
        let weights = SeverityWeights::from_integers(&raw[..n]).unwrap();
        let mut cursor = ResidualCursor::new();
        let mut last = severity_objective(&p, &weights).unwrap();
        for _ in 0..steps {
            match rebalance_step(&mut p, &mut cursor, &weights, budget).unwrap() {
                Rebalance::Applied { before, after, removal } => {
                    prop_assert_eq!(before, last);
                    prop_assert!(after <= before);
                    prop_assert!(removal.total() <= budget);
                    last = after;
                }
                Rebalance::NoImprovement => break,
            }
            prop_assert_eq!(p.m(), profile.m());
        }
        prop_assert_eq!(severity_objective(&p, &weights).unwrap(), last);
    }
}
