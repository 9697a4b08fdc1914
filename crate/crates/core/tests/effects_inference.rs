mod common;

use proptest::prelude::*;
use sbps::data::{build_index, Dataset, UnitRecord};
use sbps::inference::{bh_adjust, bootstrap_se, BootstrapMode};
use sbps::pipeline::Prepared;
use sbps::{Estimator, Method, PipelineConfig, ScopeVector, SearchMode};

fn with_outcomes(ds: &Dataset, f: impl Fn(f64) -> f64) -> Dataset {
    let mut out = ds.clone();
    for u in &mut out.units {
        u.y = u.y.map(&f);
    }
    out
}

fn estimator() -> impl Strategy<Value = Estimator> {
    prop_oneof![Just(Estimator::Direct), Just(Estimator::Psw)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimates_are_shift_and_scale_equivariant(
        seed in 0u64..10_000,
        mask in 0u64..16,
        shift in -50.0f64..50.0,
        scale in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
        e in estimator(),
    ) {
        let ds = common::small_dataset(4, 40, seed);
        let s = ScopeVector::from_mask(mask, 4);
        let tau = |d: &Dataset| Prepared::new(d).unwrap().estimate(&s, e).unwrap().tau;
        let base = tau(&ds);
        let shifted = tau(&with_outcomes(&ds, |y| y + shift));
        let scaled = tau(&with_outcomes(&ds, |y| y * scale));
        for r in 0..4 {
            match (base[r], shifted[r], scaled[r]) {
                (Some(b), Some(t), Some(c)) => {
                    prop_assert!((t - b).abs() <= 1e-9 * (1.0 + shift.abs() + b.abs()));
                    prop_assert!((c - scale * b).abs() <= 1e-9 * (1.0 + (scale * b).abs()));
                }
                (None, None, None) => {}
                other => prop_assert!(false, "definedness changed: {other:?}"),
            }
        }
    }

    #[test]
    fn bh_is_monotone_and_bounded(
        p in prop::collection::vec(0.0f64..=1.0, 1..60),
        bump in prop::collection::vec(0.0f64..0.05, 60),
    ) {
        let q = bh_adjust(&p);
        for (pi, qi) in p.iter().zip(&q) {
            prop_assert!(*pi <= *qi + 1e-15 && *qi <= 1.0);
        }
        // Raise every value while keeping ranks: sort, bump cumulatively, map back.
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        let mut raised = p.clone();
        let mut extra = 0.0;
        for (k, &i) in order.iter().enumerate() {
            extra += bump[k];
            raised[i] = (p[i] + extra).min(1.0);
        }
        let q2 = bh_adjust(&raised);
        for (a, b) in q.iter().zip(&q2) {
            prop_assert!(a <= b, "{a} > {b}");
        }
        prop_assert_eq!(q, common::bh_oracle(&p));
    }

    #[test]
    fn index_flattens_to_every_position_once(groups in 1usize..6, cells in prop::collection::vec((0usize..6, any::<bool>()), 1..80)) {
        let units: Vec<UnitRecord> = cells
            .iter()
            .enumerate()
            .map(|(i, &(g, z))| UnitRecord::new(i.to_string(), u8::from(z), g % groups + 1, vec![i as f64], Some(0.0)))
            .collect();
        let ds = Dataset::new(units, groups, vec!["x".into()]);
        let index = build_index(&ds).unwrap();
        prop_assert_eq!(index.flatten(), (0..ds.len()).collect::<Vec<_>>());
        for r in 0..groups {
            let count = |z: u8| ds.units.iter().filter(|u| u.g == r + 1 && u.z == z).count();
            prop_assert_eq!(index.treated[r].len(), count(1));
            prop_assert_eq!(index.control[r].len(), count(0));
        }
    }
}

#[test]
fn bootstrap_is_reproducible_under_a_fixed_seed() {
    let ds = common::small_dataset(4, 50, 3);
    let config = PipelineConfig {
        method: Method::SbpsSmd,
        estimator: Estimator::Direct,
        search: SearchMode::Stochastic { restarts: 10 },
        seed: 5,
    };
    for mode in [BootstrapMode::Reoptimize, BootstrapMode::FixedScope] {
        let a = bootstrap_se(&ds, &config, 30, 99, mode).unwrap();
        let b = bootstrap_se(&ds, &config, 30, 99, mode).unwrap();
        assert_eq!(a, b);
        assert!(a.se.iter().all(|s| s.is_some_and(|v| v > 0.0)));
        let c = bootstrap_se(&ds, &config, 30, 100, mode).unwrap();
        assert_ne!(a.se, c.se);
    }
}
