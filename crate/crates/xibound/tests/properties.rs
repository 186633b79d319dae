//! Property-based invariants over randomized inputs.

use ndarray::Array2;
use proptest::prelude::*;

use xibound::bench::{summarize, TraceRow};
use xibound::discrete_exact::{
    exact_jsinfo, exact_mi, mi_from_posterior, optimal_ce_and_identities, JointTable,
};
use xibound::joint_range::{jacobian, phi, BernoulliPoint};
use xibound::mi_estimators::{cpc_objective, mine_objective, nwj_objective, Estimator, PairedScores};
use xibound::scalar_bound::{bernoulli_js, bernoulli_kl, xi, xi_inverse, LN_2};
use xibound::synth_data::Transform;

fn table_strategy() -> impl Strategy<Value = JointTable> {
    (2usize..8)
        .prop_flat_map(|k| {
            proptest::collection::vec(1e-6f64..1.0, k * k).prop_map(move |mut cells| {
                for _ in 0..2 {
                    let sum: f64 = cells.iter().sum();
                    for c in &mut cells {
                        *c /= sum;
                    }
                }
                JointTable::new(cells, k).unwrap()
            })
        })
        .no_shrink()
}

fn score_matrix() -> impl Strategy<Value = Array2<f64>> {
    (2usize..7)
        .prop_flat_map(|b| {
            proptest::collection::vec(-5.0f64..5.0, b * b)
                .prop_map(move |v| Array2::from_shape_vec((b, b), v).unwrap())
        })
        .no_shrink()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn xi_inverse_is_monotone_and_bounded(a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let xl = xi_inverse(lo).unwrap();
        let xh = xi_inverse(hi).unwrap();
        prop_assert!(xl <= xh);
        prop_assert!((0.0..LN_2).contains(&xh));
    }

    #[test]
    fn xi_round_trips_in_x_space(y in 0.0f64..18.0) {
        let x = xi_inverse(y).unwrap();
        let back = xi_inverse(xi(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 1e-12, "x = {x}, back = {back}");
    }

    #[test]
    fn bernoulli_envelope_holds(mu in 0.0f64..=1.0, nu in 1e-9f64..=1.0) {
        let js = bernoulli_js(mu, nu).unwrap();
        let kl = bernoulli_kl(mu, nu).unwrap();
        let bound = xi(js.min(f64::from_bits(LN_2.to_bits() - 1))).unwrap();
        prop_assert!(bound <= kl + 1e-9, "({mu},{nu}): bound {bound} kl {kl}");
    }

    #[test]
    fn phi_jacobian_negative_on_random_interior(mu in 0.01f64..0.99, gap in 0.01f64..0.9) {
        let nu = mu * (1.0 - gap);
        prop_assume!(nu > 0.0 && nu < mu && mu < 1.0);
        let p = BernoulliPoint::interior(mu, nu).unwrap();
        prop_assert!(jacobian(&p).unwrap().det < 0.0);
        let v = phi(&p);
        prop_assert!(v.jsd <= v.kld + 1e-12);
    }

    #[test]
    fn posterior_identity_on_random_tables(j in table_strategy()) {
        prop_assert!((mi_from_posterior(&j) - exact_mi(&j)).abs() <= 1e-12);
        let ids = optimal_ce_and_identities(&j);
        prop_assert!((ids.i_js - exact_jsinfo(&j)).abs() <= 1e-12);
        prop_assert!(exact_jsinfo(&j) <= exact_mi(&j) + 1e-12);
    }

    #[test]
    fn nwj_below_mine_and_cpc_capped(m in score_matrix()) {
        let b = m.nrows();
        let s = PairedScores { matrix: m };
        prop_assert!(nwj_objective(&s) <= mine_objective(&s) + 1e-12);
        prop_assert!(cpc_objective(&s) <= (b as f64).ln() + 1e-12);
    }

    #[test]
    fn transforms_preserve_order(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        prop_assume!(a != b);
        for t in [Transform::Identity, Transform::Cubic, Transform::Asinh, Transform::HalfCube] {
            prop_assert_eq!(a < b, t.apply(a) < t.apply(b), "{}", t);
        }
    }

    #[test]
    fn summary_mse_identity(
        estimates in proptest::collection::vec(-2.0f64..12.0, 2..10),
        target in 0.5f64..10.0,
    ) {
        let mut traces = Vec::new();
        for (seed, &v) in estimates.iter().enumerate() {
            for it in 0..10 {
                traces.push(TraceRow {
                    iteration: it,
                    estimator: Estimator::Mine,
                    objective: v,
                    mi_estimate: v,
                    true_mi: target,
                    seed: seed as u64,
                    diverged: false,
                });
            }
        }
        let s = summarize(&traces, 0.2).unwrap();
        prop_assert_eq!(s.rows.len(), 1);
        let r = &s.rows[0];
        prop_assert!((r.mse - r.bias * r.bias - r.variance).abs() <= 1e-9);
        prop_assert_eq!(r.n_seeds, estimates.len());
    }
}
