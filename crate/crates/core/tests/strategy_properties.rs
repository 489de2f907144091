use pension_dc::auxiliary::{ode_oracle, phi_fn, AuxSettings};
use pension_dc::sde::generate_path;
use pension_dc::strategy::{
    foc_solve, optimal_exposures, pi1_star, pi2_star, pi3_star, strategy_at, FocSystem,
    FormulaVariant, PlanConfig,
};
use pension_dc::verifier::foc_residual;
use pension_dc::{MarketParams, RngPolicy, SimulationGrid};
use proptest::prelude::*;

fn market_strategy() -> impl Strategy<Value = (MarketParams, f64, f64, f64)> {
    (
        (
            0.05f64..1.0,
            0.0f64..0.1,
            0.005f64..0.05,
            -0.3f64..0.5,
            -0.05f64..0.05,
        ),
        (0.005f64..0.1, -0.05f64..0.15, 0.05f64..0.4, 0.01f64..0.3),
        (0.0f64..0.05, 0.0f64..0.3),
        (-10.0f64..0.9, 0.0f64..19.5, -0.02f64..0.12),
    )
        .prop_map(
            |(
                (a, r_bar, sigma_r, xi, mu_i),
                (sigma_i, mu, sigma, sigma_s),
                (s1, s2),
                (alpha, t, r),
            )| {
                let p = MarketParams {
                    a,
                    r_bar,
                    sigma_r,
                    xi,
                    mu_i: mu_i.into(),
                    sigma_i: sigma_i.into(),
                    mu: mu.into(),
                    sigma: sigma.into(),
                    sigma_s: sigma_s.into(),
                    sigma1: s1.into(),
                    sigma2: s2.into(),
                    ..MarketParams::reference()
                };
                let alpha = if alpha.abs() < 1e-3 { -0.5 } else { alpha };
                (p, alpha, t, r)
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn foc_pi1_is_closed_form((p, alpha, t, r) in market_strategy(), phi in 0.0f64..0.2) {
        let cfg = PlanConfig::default().with_alpha(alpha);
        let s = foc_solve(&p, &cfg, t, r, phi).unwrap();
        let closed = pi1_star(&p, &cfg, t).unwrap();
        prop_assert!((s.pi1 - closed).abs() <= 1e-12 * closed.abs().max(1.0));
    }

    #[test]
    fn foc_zeroes_residuals((p, alpha, t, r) in market_strategy(), phi in 0.0f64..0.2) {
        let cfg = PlanConfig::default().with_alpha(alpha);
        let s = foc_solve(&p, &cfg, t, r, phi).unwrap();
        let scale = 1.0 + s.pi1.abs() + s.pi2.abs() + s.pi3.abs();
        for v in foc_residual(&p, &cfg, t, r, &s, phi) {
            prop_assert!(v.abs() < 1e-10 * scale, "residual {v}");
        }
        let sys = FocSystem::assemble(&p, &cfg, t, r, phi).residual([s.pi1, s.pi2, s.pi3]);
        for v in sys {
            prop_assert!(v.abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn equal_vols_recover_printed_pi3((p, alpha, t, r) in market_strategy()) {
        let p = MarketParams { sigma_s: p.sigma.clone(), ..p };
        let cfg = PlanConfig::default().with_alpha(alpha);
        let s = foc_solve(&p, &cfg, t, r, 0.0).unwrap();
        let printed = pi3_star(&p, &cfg, t, r).unwrap();
        prop_assert!((s.pi3 - printed).abs() <= 1e-10 * printed.abs().max(1.0));
    }

    #[test]
    fn safe_weight_closes_budget((p, alpha, t, r) in market_strategy(), kappa in 0.0f64..0.99) {
        let cfg = PlanConfig { kappa, ..PlanConfig::default().with_alpha(alpha) };
        let s = foc_solve(&p, &cfg, t, r, 0.0).unwrap();
        let total = kappa + s.pi1 + s.pi2 + s.pi3 + s.safe_weight;
        prop_assert!((total - 1.0).abs() < 1e-9 * (1.0 + s.pi2.abs() + s.pi3.abs()));
    }

    #[test]
    fn allocation_ignores_wealth(y0 in 0.01f64..1e4, t in 0.0f64..19.0, r in 0.0f64..0.1) {
        let p = MarketParams::reference();
        let cfg = PlanConfig { y0, ..PlanConfig::default() };
        let base = foc_solve(&p, &PlanConfig::default(), t, r, 0.01).unwrap();
        prop_assert_eq!(foc_solve(&p, &cfg, t, r, 0.01).unwrap(), base);
    }
}

#[test]
fn pi1_constant_along_a_path() {
    let p = MarketParams::reference();
    let grid = SimulationGrid::new(20.0, 240).unwrap();
    for alpha in [-3.0, 0.5] {
        let cfg = PlanConfig::default().with_alpha(alpha);
        let first = pi1_star(&p, &cfg, 0.0).unwrap();
        let path = generate_path(&p, grid, RngPolicy::new(21, 0));
        let dev = path
            .iter()
            .map(|s| (foc_solve(&p, &cfg, s.t.min(19.999), s.r, 0.0).unwrap().pi1 - first).abs())
            .fold(0.0, f64::max);
        assert_eq!(dev, 0.0);
        assert!(first < 0.0);
    }
}

#[test]
fn golden_allocations_at_start() {
    let p = MarketParams::reference();
    let settings = AuxSettings::default();
    let cases = [
        (
            -3.0,
            -2.7333333333333334,
            1.5145429362880887,
            2.4808304226041233,
            59.819611001759924,
        ),
        (
            0.5,
            -21.866666666666667,
            5.816343490304709,
            16.994402771814418,
            329.28962947544096,
        ),
    ];
    for (alpha, pi1, pi3, pi2_foc, pi2_paper) in cases {
        let cfg = PlanConfig::default().with_alpha(alpha);
        // ode_oracle with zero terminal value gives phi(0) = 0
        let phi0 = ode_oracle(&p, &cfg, FormulaVariant::FocOracle, 0.0, 240)
            .unwrap()
            .eval(0.0);
        assert_eq!(phi0, 0.0);
        let s = foc_solve(&p, &cfg, 0.0, 0.03, phi0).unwrap();
        assert!((s.pi1 - pi1).abs() < 1e-12);
        assert!((s.pi3 - pi3).abs() < 1e-12 * pi3.abs());
        assert!((s.pi2 - pi2_foc).abs() < 1e-12 * pi2_foc.abs());
        let paper = pi2_star(&p, &cfg, 0.0, 0.03, phi0, FormulaVariant::PaperVerbatim).unwrap();
        assert!((paper - pi2_paper).abs() < 1e-12 * pi2_paper.abs());

        // the quadrature phi is positive and moves pi2 through the bracket
        let phi = phi_fn(&p, &cfg, FormulaVariant::FocOracle, &settings).unwrap();
        let with_phi = foc_solve(&p, &cfg, 0.0, 0.03, phi.eval(0.0)).unwrap();
        let b = p.bond_exposure(0.0).unwrap();
        let expected_shift = p.sigma_r * phi.eval(0.0) / ((alpha - 1.0) * b);
        assert!((with_phi.pi2 - s.pi2 - expected_shift).abs() < 1e-12);
    }
}

#[test]
fn exposures_are_finite_at_maturity() {
    let p = MarketParams::reference();
    let cfg = PlanConfig::default();
    let ex = optimal_exposures(&p, &cfg, 20.0, 0.05, 0.0, FormulaVariant::FocOracle).unwrap();
    assert!(ex.bond_exposure.is_finite() && ex.pi3.is_finite());
}

#[test]
fn delayed_information_shifts_the_rate_argument() {
    let p = MarketParams::reference();
    let grid = SimulationGrid::new(20.0, 240).unwrap();
    let path = generate_path(&p, grid, RngPolicy::new(8, 3));
    let lag = grid.lag_steps(1.0);
    let cfg = PlanConfig {
        theta: 1.0,
        ..PlanConfig::default()
    };
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let observed = &path[k.saturating_sub(lag)];
        let delayed = strategy_at(&p, &cfg, t, observed, 0.0, FormulaVariant::FocOracle).unwrap();
        let full = strategy_at(&p, &cfg, t, &path[k], 0.0, FormulaVariant::FocOracle).unwrap();
        if k >= lag {
            let earlier = foc_solve(&p, &cfg, grid.time(k - lag), path[k - lag].r, 0.0).unwrap();
            assert_eq!(delayed.pi3, earlier.pi3);
            assert_eq!(delayed.pi1, earlier.pi1);
            assert_eq!(
                delayed,
                foc_solve(&p, &cfg, t, path[k - lag].r, 0.0).unwrap()
            );
        } else {
            assert_eq!(delayed, foc_solve(&p, &cfg, t, p.r0, 0.0).unwrap());
        }
        if k == 0 {
            assert_eq!(delayed, full);
        }
    }
    // theta beyond the horizon freezes the rate at its initial observation
    let frozen = grid.lag_steps(25.0);
    assert!(frozen >= grid.n_steps());
    let last = grid.n_steps() - 1;
    let s = strategy_at(
        &p,
        &cfg,
        grid.time(last),
        &path[last.saturating_sub(frozen)],
        0.0,
        FormulaVariant::FocOracle,
    )
    .unwrap();
    assert_eq!(s.pi3, foc_solve(&p, &cfg, 0.0, p.r0, 0.0).unwrap().pi3);
}
