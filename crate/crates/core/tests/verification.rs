use pension_dc::auxiliary::{AuxSettings, AuxiliaryFunctions};
use pension_dc::numerics::{adaptive_simpson, Table};
use pension_dc::strategy::{foc_solve, optimal_strategy, ConstantMix, FormulaVariant};
use pension_dc::verifier::{
    bsde_residual_ensemble, deterministic_a2, estimate_a2, foc_residual, integrability_diagnostics,
    terminal_identity_error, A2Variant,
};
use pension_dc::wealth::{simulate_recorded, SimConfig, WealthModel};
use pension_dc::{MarketParams, MortalityLaw, PlanConfig, SimulationGrid, StrategyVector};

fn reference_model() -> WealthModel {
    WealthModel::new(
        MarketParams::reference(),
        MortalityLaw::default(),
        PlanConfig::default(),
    )
}

fn aux(model: &WealthModel) -> AuxiliaryFunctions {
    AuxiliaryFunctions::build(model, FormulaVariant::FocOracle, &AuxSettings::default()).unwrap()
}

#[test]
fn ansatz_terminal_conditions_are_exact() {
    let model = reference_model();
    let aux = aux(&model);
    assert_eq!(aux.phi.eval(20.0), 0.0);
    assert_eq!(aux.varphi.eval(20.0), 0.0);
    let grid = SimulationGrid::new(20.0, 240).unwrap();
    let paths = simulate_recorded(
        &model,
        &aux.strategy(),
        &SimConfig::new(grid, 500, 3),
        false,
    )
    .unwrap();
    assert_eq!(
        terminal_identity_error(&model.plan, &paths, &aux.phi, &aux.varphi),
        0.0
    );
}

#[test]
fn bsde_residual_is_first_order_in_dt() {
    let model = reference_model();
    let aux = aux(&model);
    let residual = |steps: usize| {
        let grid = SimulationGrid::new(20.0, steps).unwrap();
        let paths = simulate_recorded(
            &model,
            &aux.strategy(),
            &SimConfig::new(grid, 1000, 12),
            true,
        )
        .unwrap();
        bsde_residual_ensemble(&model, &paths, grid, &aux.phi, &aux.varphi)
            .unwrap()
            .mean_abs
    };
    let (a, b, c) = (residual(240), residual(480), residual(960));
    for ratio in [a / b, b / c] {
        assert!((1.7..=2.3).contains(&ratio), "ratios {} {}", a / b, b / c);
    }
}

#[test]
fn zero_volatility_residual_vanishes_with_dt() {
    let market = MarketParams {
        sigma_r: 0.0,
        sigma_i: 0.0.into(),
        sigma: 0.0.into(),
        sigma_s: 0.0.into(),
        sigma1: 0.0.into(),
        sigma2: 0.0.into(),
        ..MarketParams::reference()
    };
    let model = WealthModel::new(market, MortalityLaw::default(), PlanConfig::default());
    let strategy = ConstantMix(StrategyVector::new(0.1, 0.2, 0.3, 0.1));
    let flat = Table::constant(0.0, 20.0, 0.0);
    let residual = |steps: usize| {
        let grid = SimulationGrid::new(20.0, steps).unwrap();
        let paths =
            simulate_recorded(&model, &strategy, &SimConfig::new(grid, 100, 1), true).unwrap();
        bsde_residual_ensemble(&model, &paths, grid, &flat, &flat).unwrap()
    };
    let (coarse, fine) = (residual(120), residual(960));
    assert_eq!(coarse.std_error, 0.0);
    assert!(fine.mean_abs < coarse.mean_abs / 7.0);
}

#[test]
fn printed_pi3_leaves_a_residual() {
    let model = reference_model();
    let (p, cfg) = (&model.market, &model.plan);
    let s = optimal_strategy(p, cfg, 1.0, 0.04, 0.01, FormulaVariant::PaperVerbatim).unwrap();
    let res = foc_residual(p, cfg, 1.0, 0.04, &s, 0.01);
    assert!(res[1].abs() < 1e-12);
    assert!(res[2].abs() > 1e-3, "pi3 row residual {}", res[2]);
    let s = foc_solve(p, cfg, 1.0, 0.04, 0.01).unwrap();
    assert!(foc_residual(p, cfg, 1.0, 0.04, &s, 0.01)
        .iter()
        .all(|v| v.abs() < 1e-10));
}

fn still_market() -> WealthModel {
    let market = MarketParams {
        sigma_r: 0.0,
        sigma_i: 0.0.into(),
        sigma: 0.0.into(),
        sigma_s: 0.0.into(),
        sigma1: 0.0.into(),
        sigma2: 0.0.into(),
        ..MarketParams::reference()
    };
    WealthModel::new(market, MortalityLaw::default(), PlanConfig::default())
}

/// `-kappa int_t^T e^{-a(s-t)} h(s) y(s)^alpha ds` with `y` from a fine RK4
/// solution of the deterministic wealth equation.
fn local_a2(model: &WealthModel, s: &StrategyVector, phi: &Table, varphi: &Table, t: f64) -> f64 {
    let n = 200_000;
    let h = 20.0 / n as f64;
    let rhs = |u: f64, y: f64| {
        model
            .drift(u, model.market.vasicek_mean(u.min(20.0)).unwrap(), y, s)
            .unwrap()
    };
    let mut y = vec![model.plan.y0; n + 1];
    for k in 0..n {
        let u = k as f64 * h;
        let k1 = rhs(u, y[k]);
        let k2 = rhs(u + 0.5 * h, y[k] + 0.5 * h * k1);
        let k3 = rhs(u + 0.5 * h, y[k] + 0.5 * h * k2);
        let k4 = rhs(u + h, y[k] + h * k3);
        y[k + 1] = y[k] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let y = Table::from_values(0.0, 20.0, y).unwrap();
    let a = model.market.a;
    let integrand = |u: f64| {
        let r = model.market.vasicek_mean(u).unwrap();
        (-a * (u - t)).exp()
            * (varphi.eval(u) + phi.eval(u) * r).exp()
            * y.eval(u).powf(model.plan.alpha)
    };
    -model.plan.kappa * adaptive_simpson(integrand, t, 20.0, 1e-12).unwrap()
}

#[test]
fn a2_matches_quadrature_in_deterministic_case() {
    let model = still_market();
    let s = StrategyVector::new(0.1, 0.2, 0.3, 0.1);
    let strategy = ConstantMix(s);
    let phi = Table::tabulate(0.0, 20.0, 200, |t| 0.01 * (20.0 - t) / 20.0).unwrap();
    let varphi = Table::tabulate(0.0, 20.0, 200, |t| -0.02 * (20.0 - t)).unwrap();
    let estimate = |steps: usize, t: f64| {
        let grid = SimulationGrid::new(20.0, steps).unwrap();
        let paths =
            simulate_recorded(&model, &strategy, &SimConfig::new(grid, 10_000, 8), false).unwrap();
        estimate_a2(
            &model,
            &paths,
            grid,
            &phi,
            &varphi,
            t,
            A2Variant::Discounted,
            2,
        )
        .unwrap()
    };
    for t in [0.0, 5.0] {
        let coarse = estimate(240, t);
        let fine = estimate(480, t);
        let exact = local_a2(&model, &s, &phi, &varphi, t);
        let library =
            deterministic_a2(&model, &s, &phi, &varphi, t, A2Variant::Discounted, 20_000).unwrap();
        assert!((library - exact).abs() < 1e-9 * exact.abs());
        let bias = 2.0 * (coarse.mean - fine.mean).abs();
        assert_eq!(fine.std_error, 0.0);
        assert!(
            (fine.mean - exact).abs() <= 3.0 * fine.std_error + bias,
            "t = {t}: {} vs {exact} (bias allowance {bias})",
            fine.mean
        );
        assert!(fine.mean < 0.0);
    }
    // at the horizon the integral is empty
    assert_eq!(estimate(240, 20.0).mean, 0.0);
}

#[test]
fn a2_variants_and_kappa_zero() {
    let model = reference_model();
    let aux = aux(&model);
    let grid = SimulationGrid::new(20.0, 120).unwrap();
    let paths = simulate_recorded(
        &model,
        &aux.strategy(),
        &SimConfig::new(grid, 2000, 4),
        false,
    )
    .unwrap();
    let disc = estimate_a2(
        &model,
        &paths,
        grid,
        &aux.phi,
        &aux.varphi,
        2.0,
        A2Variant::Discounted,
        2,
    )
    .unwrap();
    let plain = estimate_a2(
        &model,
        &paths,
        grid,
        &aux.phi,
        &aux.varphi,
        2.0,
        A2Variant::PaperUndiscounted,
        2,
    )
    .unwrap();
    assert!(disc.mean < 0.0 && plain.mean < disc.mean);
    assert_eq!(disc.coefficients.len(), 6);

    let free = WealthModel {
        plan: PlanConfig {
            kappa: 0.0,
            ..model.plan
        },
        ..model.clone()
    };
    for t in [0.0, 3.0, 20.0] {
        let est = estimate_a2(
            &free,
            &paths,
            grid,
            &aux.phi,
            &aux.varphi,
            t,
            A2Variant::Discounted,
            2,
        )
        .unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }
}

#[test]
fn integrability_moments_are_finite() {
    let model = reference_model();
    let aux = aux(&model);
    let grid = SimulationGrid::new(20.0, 120).unwrap();
    let paths = simulate_recorded(
        &model,
        &aux.strategy(),
        &SimConfig::new(grid, 1000, 6),
        true,
    )
    .unwrap();
    for d in integrability_diagnostics(&model, &paths, grid, &aux.phi, &aux.varphi) {
        assert!(d.full_sample.is_finite() && d.full_sample > 0.0, "{d:?}");
        assert!(d.growth().is_finite());
    }
}
