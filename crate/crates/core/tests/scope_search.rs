mod common;

use proptest::prelude::*;
use sbps::balance;
use sbps::data::Dataset;
use sbps::matching;
use sbps::propensity::{precompute_fits, score};
use sbps::search::{self, Objective};
use sbps::{Criterion, ScopeVector};

fn criterion() -> impl Strategy<Value = Criterion> {
    prop_oneof![Just(Criterion::Smd), Just(Criterion::Psw)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_are_local_to_each_subgroup(seed in 0u64..10_000, a in any::<u64>(), b in any::<u64>()) {
        let ds = common::small_dataset(5, 40, seed);
        let cache = precompute_fits(&ds).unwrap();
        let (s, t) = (ScopeVector::from_mask(a % 32, 5), ScopeVector::from_mask(b % 32, 5));
        let (ps, pt) = (score(&ds, &cache, &s).unwrap(), score(&ds, &cache, &t).unwrap());
        for (i, u) in ds.units.iter().enumerate() {
            if s.values()[u.g - 1] == t.values()[u.g - 1] {
                prop_assert_eq!(ps.e_hat[i].to_bits(), pt.e_hat[i].to_bits());
                prop_assert_eq!(ps.logit[i].to_bits(), pt.logit[i].to_bits());
            }
        }
    }

    #[test]
    fn scoring_is_bit_reproducible(seed in 0u64..10_000, mask in 0u64..16) {
        let ds = common::small_dataset(4, 40, seed);
        let s = ScopeVector::from_mask(mask, 4);
        let first = score(&ds, &precompute_fits(&ds).unwrap(), &s).unwrap();
        let second = score(&ds, &precompute_fits(&ds).unwrap(), &s).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&first.e_hat), bits(&second.e_hat));
    }

    #[test]
    fn restart_ends_at_a_local_optimum(seed in 0u64..10_000, l in 0u64..50, c in criterion()) {
        let ds = common::small_dataset(6, 30, seed);
        let cache = precompute_fits(&ds).unwrap();
        let obj = Objective::new(&ds, &cache, c).unwrap();
        let (s, f, _) = search::restart(&obj, seed, l);
        for r in 0..s.len() {
            let mut t = s.clone();
            t.flip(r);
            prop_assert!(obj.value(&t) >= f, "flip {r} improves {f}");
        }
    }

    #[test]
    fn search_never_returns_worse_than_all_ones(seed in 0u64..10_000, c in criterion(), restarts in 1usize..20) {
        let ds = common::small_dataset(5, 30, seed);
        let cache = precompute_fits(&ds).unwrap();
        let obj = Objective::new(&ds, &cache, c).unwrap();
        let all_ones = search::evaluate(&ds, &cache, &ScopeVector::all_ones(5), c).unwrap();
        let res = search::stochastic(&obj, restarts, seed).unwrap();
        prop_assert!(res.f_min <= res.f_all_ones);
        // Cached aggregation and a fresh evaluation may differ in the last bits.
        prop_assert!((res.f_all_ones - all_ones).abs() <= 1e-10 * (1.0 + all_ones));
        prop_assert!(search::exhaustive(&obj, 15).unwrap().f_min <= res.f_min);
    }

    #[test]
    fn incremental_flips_match_full_evaluation(
        seed in 0u64..10_000,
        c in criterion(),
        flips in prop::collection::vec(0usize..5, 1..30),
    ) {
        let ds = common::small_dataset(5, 30, seed);
        let cache = precompute_fits(&ds).unwrap();
        let obj = Objective::new(&ds, &cache, c).unwrap();
        let mut st = obj.state(&ScopeVector::all_ones(5));
        for r in flips {
            let predicted = obj.flipped_value(&st, r);
            obj.apply_flip(&mut st, r);
            let full = common::criterion_value(&ds, &cache, &st.scope, c);
            prop_assert!((predicted - full).abs() <= 1e-10 * (1.0 + full.abs()), "{predicted} vs {full}");
            prop_assert!((obj.value_of(&st) - full).abs() <= 1e-10 * (1.0 + full.abs()));
        }
    }

    #[test]
    fn criteria_are_non_negative(seed in 0u64..10_000, mask in 0u64..16, c in criterion()) {
        let ds = common::small_dataset(4, 30, seed);
        let cache = precompute_fits(&ds).unwrap();
        prop_assert!(common::criterion_value(&ds, &cache, &ScopeVector::from_mask(mask, 4), c) >= 0.0);
    }

    #[test]
    fn subgroup_terms_ignore_other_subgroups_order(seed in 0u64..10_000, mask in 0u64..16, other in 0usize..4, rot in 1usize..20) {
        let ds = common::small_dataset(4, 30, seed);
        let s = ScopeVector::from_mask(mask, 4);
        let terms = |d: &Dataset| {
            let p = score(d, &precompute_fits(d).unwrap(), &s).unwrap();
            let m = matching::match_all(d, &p).unwrap();
            balance::smd_moments(d, &m).unwrap()
        };
        let base = terms(&ds);
        // Rotate the units of one subgroup among their own positions.
        let pos: Vec<usize> = (0..ds.len()).filter(|&i| ds.units[i].g == other + 1).collect();
        let mut moved = ds.clone();
        for (j, &i) in pos.iter().enumerate() {
            moved.units[i] = ds.units[pos[(j + rot) % pos.len()]].clone();
        }
        let after = terms(&moved);
        for r in (0..4).filter(|&r| r != other) {
            for (a, b) in base.subgroup[r].iter().zip(&after.subgroup[r]) {
                prop_assert!((a - b).abs() <= 1e-9, "subgroup {r}: {a} vs {b}");
            }
        }
    }
}
