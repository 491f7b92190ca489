use mechsqueeze::bayes::{bayes_report_from, excess_q_analytic, BayesVariant, CostSpec, ForceConversion};
use mechsqueeze::dynamics::{Numerics, PeriodicTrajectory};
use mechsqueeze::gaussian::check_mat4_physicality;
use mechsqueeze::markov::{default_lambda_grid, lambda_scan, markov_report_from, MarkovVariant};
use mechsqueeze::model::{
    adiabatic_variance, conditional_steady_state, conditional_variance_analytic, zeta, SystemParams,
};
use proptest::prelude::*;

fn physical(traj: &PeriodicTrajectory) -> bool {
    traj.values.iter().all(|s| check_mat4_physicality(s, 1e-9).unwrap().physical)
}

fn variant_strategy() -> impl Strategy<Value = MarkovVariant> {
    prop_oneof![
        Just(MarkovVariant::Ideal),
        Just(MarkovVariant::CavityLimited),
        Just(MarkovVariant::MechanicalLimited),
        (0.0f64..1.5).prop_map(|lambda| MarkovVariant::ForceLimited { lambda }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn markov_states_are_physical_and_penalized(
        lg in -3.0f64..-0.3,
        lk in -1.5f64..2.0,
        variant in variant_strategy(),
    ) {
        let p = SystemParams { g: 10f64.powf(lg), kappa: 10f64.powf(lk), ..Default::default() };
        let numerics = Numerics::default();
        let sigma_c = conditional_steady_state(&p, &numerics).unwrap();
        prop_assert!(physical(&sigma_c));
        match markov_report_from(&p, variant, &sigma_c, &numerics) {
            Ok(r) => {
                prop_assert!(physical(&r.sigma_fb));
                prop_assert!(r.var_fb.mean >= r.var_c - 1e-9, "{} < {}", r.var_fb.mean, r.var_c);
                prop_assert!(r.var_fb.min <= r.var_fb.mean && r.var_fb.mean <= r.var_fb.max);
            }
            Err(mechsqueeze::Error::NotHurwitz { .. }) => {
                let limited = matches!(variant, MarkovVariant::ForceLimited { .. });
                prop_assert!(limited);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn bayes_states_are_physical_and_penalized(
        lg in -3.0f64..-0.3,
        lk in -1.5f64..2.0,
        lchi in -3.0f64..1.0,
        force in any::<bool>(),
    ) {
        let p = SystemParams { g: 10f64.powf(lg), kappa: 10f64.powf(lk), rwa: !force, ..Default::default() };
        let numerics = Numerics::default();
        let sigma_c = conditional_steady_state(&p, &numerics).unwrap();
        let variant = if force { BayesVariant::ForceLimited } else { BayesVariant::Ideal };
        let r = bayes_report_from(
            &p, &CostSpec::with_chi(10f64.powf(lchi)), variant, &sigma_c, &numerics, &ForceConversion::default(),
        ).unwrap();
        prop_assert!(physical(&r.sigma_c));
        prop_assert!(physical(&r.sigma_fb));
        prop_assert!(r.var_fb.mean >= r.var_c - 1e-9);
    }

    #[test]
    fn closed_forms_increase_with_thermal_occupation(
        lg in -3.0f64..0.0,
        lk in -3.0f64..2.0,
        n1 in 0.0f64..50.0,
        dn in 0.01f64..50.0,
    ) {
        let a = SystemParams { g: 10f64.powf(lg), kappa: 10f64.powf(lk), nbar: n1, ..Default::default() };
        let b = SystemParams { nbar: n1 + dn, ..a };
        prop_assert!(zeta(&b) > zeta(&a));
        prop_assert!(conditional_variance_analytic(&b).unwrap() > conditional_variance_analytic(&a).unwrap());
        prop_assert!(adiabatic_variance(&b).unwrap() > adiabatic_variance(&a).unwrap());
    }

    #[test]
    fn bayes_excess_factorizes_in_cost(
        lg in -3.0f64..0.0,
        lk in -3.0f64..2.0,
        c1 in 1e-3f64..10.0,
        c2 in 1e-3f64..10.0,
    ) {
        let p = SystemParams { g: 10f64.powf(lg), kappa: 10f64.powf(lk), ..Default::default() };
        let scaled = |chi: f64| excess_q_analytic(&p, chi).unwrap() * (4.0 + p.gamma * p.gamma * chi).sqrt() / chi.sqrt();
        let (a, b) = (scaled(c1), scaled(c2));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }
}

#[test]
fn lambda_scan_is_continuous() {
    let p = SystemParams { g: 0.05, kappa: 0.3, rwa: false, ..Default::default() };
    let numerics = Numerics::default();
    let sigma_c = conditional_steady_state(&p, &numerics).unwrap();
    let grid = default_lambda_grid();
    let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let coarse = lambda_scan(&p, &grid, &sigma_c, &numerics).unwrap();
    let mid = lambda_scan(&p, &mids, &sigma_c, &numerics).unwrap();
    for (k, m) in mid.iter().enumerate() {
        let (a, b) = (coarse[k].var_fb.mean, coarse[k + 1].var_fb.mean);
        let slack = (a - b).abs() + 1e-6 * a.max(b);
        let v = m.var_fb.mean;
        assert!(v >= a.min(b) - slack && v <= a.max(b) + slack, "lambda={}: {a} {v} {b}", m.lambda);
    }
}
