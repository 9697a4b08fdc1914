mod common;

use proptest::prelude::*;
use sbps::logistic::{self, DesignMatrix};

fn rescaled(design: &DesignMatrix, col: usize, a: f64, b: f64) -> DesignMatrix {
    let rows: Vec<Vec<f64>> = (0..design.n_rows())
        .map(|i| {
            let mut row = design.row(i).to_vec();
            row[col] = a * row[col] + b;
            row
        })
        .collect();
    DesignMatrix::from_rows(&rows, design.labels().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_rescaling_leaves_probabilities_unchanged(
        seed in any::<u64>(),
        a in prop_oneof![0.05f64..20.0, -20.0f64..-0.05],
        b in -5.0f64..5.0,
        col in 1usize..3,
    ) {
        let (design, z) = common::logistic_problem(seed, 400, &[0.3, 0.8, -0.5]);
        let base = logistic::fit(&design, &z).unwrap();
        let moved = rescaled(&design, col, a, b);
        let fit = logistic::fit(&moved, &z).unwrap();
        prop_assert!((fit.beta[col] * a - base.beta[col]).abs() <= 1e-6 * (1.0 + base.beta[col].abs()));
        let p0 = logistic::predict(&design, &base).unwrap();
        let p1 = logistic::predict(&moved, &fit).unwrap();
        for (u, v) in p0.iter().zip(&p1) {
            prop_assert!((u - v).abs() <= 1e-8, "{u} vs {v}");
        }
    }

    #[test]
    fn converged_fit_solves_score_equations(seed in any::<u64>(), n in 60usize..400) {
        let (design, z) = common::logistic_problem(seed, n, &[-0.2, 0.5, 0.5, -1.0]);
        prop_assume!(z.contains(&1) && z.contains(&0));
        let fit = logistic::fit(&design, &z).unwrap();
        prop_assume!(!fit.quasi_separated);
        let g = logistic::score(&design, &z, &fit.beta).unwrap();
        let worst = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / n as f64;
        prop_assert!(worst <= 1e-6, "residual {worst}");
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), beta in prop::collection::vec(-1.5f64..1.5, 2..5)) {
        let (design, z) = common::logistic_problem(seed, 50, &beta);
        let at: Vec<f64> = beta.iter().map(|b| b * 0.7 + 0.1).collect();
        let analytic = logistic::score(&design, &z, &at).unwrap();
        let fd = common::fd_gradient(|b| logistic::log_likelihood(&design, &z, b).unwrap(), &at, 1e-5);
        for (a, f) in analytic.iter().zip(&fd) {
            prop_assert!((a - f).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {f}");
        }
    }
}
