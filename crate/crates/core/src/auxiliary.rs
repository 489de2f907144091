//! The deterministic functions `phi`, `varphi`, `K`, `calK`, `M`, `Q` of the
//! exponential-affine ansatz `A1 = Y^(alpha - 1) exp(varphi(t) + phi(t) r)`.
//!
//! Both `phi` and `varphi` are evaluated along deterministic proxies: the
//! Vasicek mean path for `r` and, for `varphi`, the pathwise median of a
//! pilot wealth simulation for `y`. Since `M` depends on the strategy and the
//! optimal `pi2` depends on `phi`, `phi` is found by fixed-point iteration.

use crate::error::{domain, ModelError, Result};
use crate::market::MarketParams;
use crate::mortality::MortalityLaw;
use crate::numerics::{adaptive_simpson, quantile_sorted, rk4_backward, Table};
use crate::sde::SimulationGrid;
use crate::strategy::{optimal_exposures, Exposures, FormulaVariant, OptimalStrategy, PlanConfig};
use crate::wealth::{simulate_recorded, SimConfig, WealthModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxSettings {
    /// Intervals of the `phi` and `varphi` tables.
    pub intervals: usize,
    /// Absolute tolerance of each per-interval quadrature.
    pub quad_tol: f64,
    pub fixed_point_tol: f64,
    pub max_iterations: usize,
    pub pilot_paths: usize,
    pub pilot_steps: usize,
    pub pilot_seed: u64,
}

impl Default for AuxSettings {
    fn default() -> Self {
        AuxSettings {
            intervals: 400,
            quad_tol: 1e-13,
            fixed_point_tol: 1e-15,
            max_iterations: 100,
            pilot_paths: 1000,
            pilot_steps: 240,
            pilot_seed: 0x5eed,
        }
    }
}

/// `Q(t) = kappa r + mu_ell - beta - sigma1^2 - sigma2^2`.
pub fn q_value(
    params: &MarketParams,
    mortality: &MortalityLaw,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
) -> Result<f64> {
    let (s1, s2) = (params.sigma1.at(t), params.sigma2.at(t));
    Ok(cfg.kappa * r + params.mu_ell.at(t) - mortality.force_of_mortality(t)? - s1 * s1 - s2 * s2)
}

/// `M(t) = a (r_bar - r) + (alpha - 1) sigma_r (sigma_S pi3 - b pi2 - sigma1) / 2`.
pub fn m_value(params: &MarketParams, cfg: &PlanConfig, t: f64, r: f64, ex: &Exposures) -> f64 {
    let rate_vol = params.sigma_s.at(t) * ex.pi3 - ex.bond_exposure - params.sigma1.at(t);
    params.a * (params.r_bar - r) + 0.5 * (cfg.alpha - 1.0) * params.sigma_r * rate_vol
}

/// `K(t)` exactly as it appears in the ansatz drift, including the `xi`
/// factor on the bond terms and the `(alpha - 2)` quadratic coefficients.
#[allow(clippy::too_many_arguments)]
pub fn k_value(
    params: &MarketParams,
    mortality: &MortalityLaw,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    y: f64,
    ex: &Exposures,
) -> Result<f64> {
    let p = params;
    let beta = mortality.force_of_mortality(t)?;
    let (s1, s2, s_i, s_s) = (
        p.sigma1.at(t),
        p.sigma2.at(t),
        p.sigma_i.at(t),
        p.sigma_s.at(t),
    );
    let xb = p.xi * ex.bond_exposure;
    let half = 0.5 * (cfg.alpha - 2.0);
    let contribution = (1.0 - mortality.epsilon() * t * beta) * cfg.delta / y;
    let bracket = p.mu_i.at(t) * ex.pi1 + p.mu.at(t) * ex.pi3 + xb - cfg.kappa * r + beta
        - p.mu_ell.at(t)
        + s1 * s1
        + s2 * s2
        - s_s * s2 * ex.pi3
        + half * ex.pi1 * ex.pi1 * s_i * s_i
        - (s_s * ex.pi3 - xb) * s1
        + half * (s_s * ex.pi3 - s2).powi(2)
        + half * (s_s * ex.pi3 - xb - s1).powi(2)
        - contribution;
    Ok((cfg.alpha - 1.0) * bracket)
}

/// `calK(t) = K(t) - [Q(t) + (alpha - 1)(pi1 sigma1 sigma_I + sigma2 (pi3 sigma_S - sigma2))]`.
#[allow(clippy::too_many_arguments)]
pub fn script_k_value(
    params: &MarketParams,
    mortality: &MortalityLaw,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    y: f64,
    ex: &Exposures,
) -> Result<f64> {
    let (s1, s2) = (params.sigma1.at(t), params.sigma2.at(t));
    let k = k_value(params, mortality, cfg, t, r, y, ex)?;
    let q = q_value(params, mortality, cfg, t, r)?;
    let cross = ex.pi1 * s1 * params.sigma_i.at(t) + s2 * (ex.pi3 * params.sigma_s.at(t) - s2);
    Ok(k - (q + (cfg.alpha - 1.0) * cross))
}

/// Cumulative `int_t^end f` on a uniform table over `[start, end]`, one
/// adaptive quadrature per interval.
fn tail_integrals<F: Fn(f64) -> f64>(
    f: &F,
    start: f64,
    end: f64,
    intervals: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let h = (end - start) / intervals as f64;
    let node = |i: usize| {
        if i == intervals {
            end
        } else {
            start + i as f64 * h
        }
    };
    let mut out = vec![0.0; intervals + 1];
    for i in (0..intervals).rev() {
        out[i] = out[i + 1] + adaptive_simpson(f, node(i), node(i + 1), tol / intervals as f64)?;
    }
    Ok(out)
}

fn check_positive_rate<R: Fn(f64) -> f64>(
    rate: &R,
    start: f64,
    end: f64,
    intervals: usize,
) -> Result<()> {
    let h = (end - start) / intervals as f64;
    for i in 0..=intervals {
        let t = start + i as f64 * h;
        let r = rate(t);
        if !(r > 0.0) {
            return Err(domain(
                "phi",
                format!("proxy rate {r} is not positive at t = {t}"),
            ));
        }
    }
    Ok(())
}

/// `phi(t) = sigma_r^2 / 2 exp(-int_t^T M / r) int_t^T 1 / r` for a general
/// `M(t, phi(t))` and positive proxy rate, solved by fixed-point iteration
/// when `M` depends on `phi`.
pub fn phi_from<M, R>(
    m: M,
    rate: R,
    sigma_r: f64,
    horizon: f64,
    settings: &AuxSettings,
) -> Result<Table>
where
    M: Fn(f64, f64) -> f64,
    R: Fn(f64) -> f64,
{
    let n = settings.intervals;
    check_positive_rate(&rate, 0.0, horizon, n)?;
    let inv = tail_integrals(&|s| 1.0 / rate(s), 0.0, horizon, n, settings.quad_tol)?;
    let mut table = Table::constant(0.0, horizon, 0.0);
    for _ in 0..settings.max_iterations {
        let current = &table;
        let drift = tail_integrals(
            &|s| m(s, current.eval(s)) / rate(s),
            0.0,
            horizon,
            n,
            settings.quad_tol,
        )?;
        let values: Vec<f64> = drift
            .iter()
            .zip(&inv)
            .map(|(d, i)| 0.5 * sigma_r * sigma_r * (-d).exp() * i)
            .collect();
        let next = Table::from_values(0.0, horizon, values)?;
        let change = (0..=n)
            .map(|i| {
                let t = i as f64 * horizon / n as f64;
                (next.eval(t) - table.eval(t)).abs()
            })
            .fold(0.0, f64::max);
        table = next;
        if change <= settings.fixed_point_tol {
            return Ok(table);
        }
    }
    Err(ModelError::Numeric {
        what: "phi",
        detail: format!(
            "fixed point not reached in {} iterations",
            settings.max_iterations
        ),
    })
}

/// `phi` along the Vasicek mean path with `M` evaluated at the optimal
/// strategy of `variant`.
pub fn phi_fn(
    params: &MarketParams,
    cfg: &PlanConfig,
    variant: FormulaVariant,
    settings: &AuxSettings,
) -> Result<Table> {
    let m = |t: f64, phi: f64| {
        let r = params.rate_mean_unchecked(t);
        match optimal_exposures(params, cfg, t, r, phi, variant) {
            Ok(ex) => m_value(params, cfg, t, r, &ex),
            Err(_) => f64::NAN,
        }
    };
    // Surface parameter errors directly rather than as a quadrature failure.
    optimal_exposures(params, cfg, 0.0, params.r0, 0.0, variant)?;
    phi_from(
        m,
        |t| params.rate_mean_unchecked(t),
        params.sigma_r,
        params.horizon,
        settings,
    )
}

/// Backward RK4 solution of `r phi' + M phi + sigma_r^2 phi^2 / 2 = 0`,
/// `phi(T) = terminal`, for general `M(t, phi)` and proxy rate.
pub fn ode_from<M, R>(
    m: M,
    rate: R,
    sigma_r: f64,
    horizon: f64,
    terminal: f64,
    steps: usize,
) -> Result<Table>
where
    M: Fn(f64, f64) -> f64,
    R: Fn(f64) -> f64,
{
    check_positive_rate(&rate, 0.0, horizon, steps)?;
    rk4_backward(
        |t, phi| -(m(t, phi) * phi + 0.5 * sigma_r * sigma_r * phi * phi) / rate(t),
        0.0,
        horizon,
        terminal,
        steps,
    )
}

/// The backward-ODE characterisation of `phi` along the Vasicek mean path.
pub fn ode_oracle(
    params: &MarketParams,
    cfg: &PlanConfig,
    variant: FormulaVariant,
    terminal: f64,
    steps: usize,
) -> Result<Table> {
    optimal_exposures(params, cfg, 0.0, params.r0, 0.0, variant)?;
    let m = |t: f64, phi: f64| {
        let r = params.rate_mean_unchecked(t);
        optimal_exposures(params, cfg, t, r, phi, variant)
            .map(|ex| m_value(params, cfg, t, r, &ex))
            .unwrap_or(f64::NAN)
    };
    ode_from(
        m,
        |t| params.rate_mean_unchecked(t),
        params.sigma_r,
        params.horizon,
        terminal,
        steps,
    )
}

/// `varphi(t) = -int_t^T calK(s) ds` tabulated on `intervals` intervals.
pub fn varphi_from<K: Fn(f64) -> f64>(
    script_k: K,
    horizon: f64,
    intervals: usize,
    tol: f64,
) -> Result<Table> {
    let tail = tail_integrals(&script_k, 0.0, horizon, intervals, tol)?;
    Table::from_values(0.0, horizon, tail.into_iter().map(|v| -v).collect())
}

/// `varphi` along the rate proxy and a given relative-wealth proxy.
pub fn varphi_fn(
    model: &WealthModel,
    variant: FormulaVariant,
    phi: &Table,
    y_proxy: &Table,
    settings: &AuxSettings,
) -> Result<Table> {
    let (p, law, cfg) = (&model.market, &model.mortality, &model.plan);
    law.validate(p.horizon)?;
    let script_k = |t: f64| {
        let r = p.rate_mean_unchecked(t);
        optimal_exposures(p, cfg, t, r, phi.eval(t), variant)
            .and_then(|ex| script_k_value(p, law, cfg, t, r, y_proxy.eval(t), &ex))
            .unwrap_or(f64::NAN)
    };
    varphi_from(script_k, p.horizon, settings.intervals, settings.quad_tol)
}

/// Median relative wealth across a pilot simulation, per grid time.
pub fn pilot_median(
    model: &WealthModel,
    strategy: &OptimalStrategy,
    settings: &AuxSettings,
) -> Result<Table> {
    let grid = SimulationGrid::new(model.market.horizon, settings.pilot_steps)?;
    let sim = SimConfig::new(grid, settings.pilot_paths, settings.pilot_seed);
    let paths = simulate_recorded(model, strategy, &sim, false)?;
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    for k in 0..=grid.n_steps() {
        let mut column: Vec<f64> = paths.iter().filter_map(|p| p.y.get(k).copied()).collect();
        if column.is_empty() {
            return Err(domain(
                "pilot median",
                format!("every pilot path failed before t = {}", grid.time(k)),
            ));
        }
        column.sort_by(f64::total_cmp);
        values.push(quantile_sorted(&column, 0.5));
    }
    Table::from_values(0.0, grid.horizon(), values)
}

/// Tabulated `phi`, `varphi` and the proxies they were computed on.
#[derive(Debug, Clone)]
pub struct AuxiliaryFunctions {
    pub model: WealthModel,
    pub variant: FormulaVariant,
    pub phi: Table,
    pub varphi: Table,
    pub y_proxy: Table,
}

impl AuxiliaryFunctions {
    /// Uses the pilot median of the variant's own strategy as wealth proxy.
    pub fn build(
        model: &WealthModel,
        variant: FormulaVariant,
        settings: &AuxSettings,
    ) -> Result<Self> {
        let phi = phi_fn(&model.market, &model.plan, variant, settings)?;
        let strategy = OptimalStrategy::new(model.market.clone(), model.plan, variant, phi.clone());
        let y_proxy = pilot_median(model, &strategy, settings)?;
        Self::assemble(model, variant, phi, y_proxy, settings)
    }

    /// Uses a given wealth proxy, e.g. one whose own pilot never survives.
    pub fn with_proxy(
        model: &WealthModel,
        variant: FormulaVariant,
        y_proxy: Table,
        settings: &AuxSettings,
    ) -> Result<Self> {
        let phi = phi_fn(&model.market, &model.plan, variant, settings)?;
        Self::assemble(model, variant, phi, y_proxy, settings)
    }

    fn assemble(
        model: &WealthModel,
        variant: FormulaVariant,
        phi: Table,
        y_proxy: Table,
        settings: &AuxSettings,
    ) -> Result<Self> {
        let varphi = varphi_fn(model, variant, &phi, &y_proxy, settings)?;
        Ok(AuxiliaryFunctions {
            model: model.clone(),
            variant,
            phi,
            varphi,
            y_proxy,
        })
    }

    pub fn strategy(&self) -> OptimalStrategy {
        OptimalStrategy::new(
            self.model.market.clone(),
            self.model.plan,
            self.variant,
            self.phi.clone(),
        )
    }

    fn exposures_at(&self, t: f64) -> Result<(f64, Exposures)> {
        let p = &self.model.market;
        let r = p.rate_mean_unchecked(t);
        Ok((
            r,
            optimal_exposures(p, &self.model.plan, t, r, self.phi.eval(t), self.variant)?,
        ))
    }

    pub fn m_at(&self, t: f64) -> Result<f64> {
        let (r, ex) = self.exposures_at(t)?;
        Ok(m_value(&self.model.market, &self.model.plan, t, r, &ex))
    }

    pub fn q_at(&self, t: f64) -> Result<f64> {
        let r = self.model.market.rate_mean_unchecked(t);
        q_value(
            &self.model.market,
            &self.model.mortality,
            &self.model.plan,
            t,
            r,
        )
    }

    pub fn k_at(&self, t: f64) -> Result<f64> {
        let (r, ex) = self.exposures_at(t)?;
        let m = &self.model;
        k_value(
            &m.market,
            &m.mortality,
            &m.plan,
            t,
            r,
            self.y_proxy.eval(t),
            &ex,
        )
    }

    pub fn script_k_at(&self, t: f64) -> Result<f64> {
        let (r, ex) = self.exposures_at(t)?;
        let m = &self.model;
        script_k_value(
            &m.market,
            &m.mortality,
            &m.plan,
            t,
            r,
            self.y_proxy.eval(t),
            &ex,
        )
    }

    /// Residual `r phi' + M phi + sigma_r^2 phi^2 / 2` of the tabulated `phi`
    /// at interior node `i`, with `phi'` by central differences.
    pub fn ode_residual_at(&self, i: usize) -> Result<f64> {
        let nodes: Vec<(f64, f64)> = self.phi.nodes().collect();
        if i == 0 || i + 1 >= nodes.len() {
            return Err(domain("ode residual", "needs an interior node"));
        }
        let (t, phi) = nodes[i];
        let slope = (nodes[i + 1].1 - nodes[i - 1].1) / (nodes[i + 1].0 - nodes[i - 1].0);
        let r = self.model.market.rate_mean_unchecked(t);
        let sr = self.model.market.sigma_r;
        Ok(r * slope + self.m_at(t)? * phi + 0.5 * sr * sr * phi * phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::trapezoid;
    use approx::assert_relative_eq;

    fn settings() -> AuxSettings {
        AuxSettings {
            intervals: 200,
            ..AuxSettings::default()
        }
    }

    #[test]
    fn degenerate_phi() {
        let table = phi_from(|_, _| 0.0, |_| 0.03, 0.02, 20.0, &settings()).unwrap();
        assert_relative_eq!(
            table.eval(0.0),
            0.5 * 0.0004 * 20.0 / 0.03,
            max_relative = 1e-12
        );
        assert_relative_eq!(table.eval(0.0), 0.1333333, epsilon = 5e-8);
        assert_eq!(table.eval(20.0), 0.0);
    }

    #[test]
    fn phi_terminal_and_positive() {
        let p = MarketParams::reference();
        let cfg = PlanConfig::default();
        for variant in [FormulaVariant::FocOracle, FormulaVariant::PaperVerbatim] {
            let table = phi_fn(&p, &cfg, variant, &settings()).unwrap();
            assert_eq!(table.eval(20.0), 0.0);
            assert!(table.values()[..200].iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn phi_rejects_nonpositive_rate() {
        let p = MarketParams {
            r0: -0.02,
            ..MarketParams::reference()
        };
        let err = phi_fn(
            &p,
            &PlanConfig::default(),
            FormulaVariant::FocOracle,
            &settings(),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Domain { .. }));
    }

    #[test]
    fn ode_zero_terminal_is_identically_zero() {
        let p = MarketParams::reference();
        let table = ode_oracle(
            &p,
            &PlanConfig::default(),
            FormulaVariant::FocOracle,
            0.0,
            400,
        )
        .unwrap();
        assert!(table.values().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn ode_matches_separable_closed_form() {
        let (c, sr, r) = (1e-3, 0.02, 0.03);
        let table = ode_from(|_, _| 0.0, |_| r, sr, 20.0, c, 400).unwrap();
        for (t, v) in table.nodes() {
            let exact = c / (1.0 - c * sr * sr / (2.0 * r) * (20.0 - t));
            assert!((v - exact).abs() < 1e-8, "t = {t}: {v} vs {exact}");
        }
    }

    #[test]
    fn ode_converges_at_fourth_order() {
        let p = MarketParams::reference();
        let cfg = PlanConfig::default();
        let solve = |n| {
            ode_oracle(&p, &cfg, FormulaVariant::FocOracle, 1e-3, n)
                .unwrap()
                .eval(0.0)
        };
        let (a, b, c) = (solve(10), solve(20), solve(40));
        assert!(a != 0.0);
        let ratio = (a - b) / (b - c);
        assert!((10.0..=22.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn varphi_of_constant_integrand() {
        let table = varphi_from(|_| 1.0, 20.0, 50, 1e-12).unwrap();
        assert_relative_eq!(table.eval(0.0), -20.0, epsilon = 1e-12);
        assert_eq!(table.eval(20.0), 0.0);
    }

    #[test]
    fn varphi_quadrature_matches_trapezoid() {
        let model = WealthModel::new(
            MarketParams::reference(),
            MortalityLaw::default(),
            PlanConfig::default(),
        );
        let phi = phi_fn(
            &model.market,
            &model.plan,
            FormulaVariant::FocOracle,
            &settings(),
        )
        .unwrap();
        // smooth wealth proxy so the trapezoid error is governed by curvature only
        let y_proxy = Table::tabulate(0.0, 20.0, 2000, |t| 10.0 + 2.0 * t).unwrap();
        let table = varphi_fn(
            &model,
            FormulaVariant::FocOracle,
            &phi,
            &y_proxy,
            &settings(),
        )
        .unwrap();
        let (p, law, cfg) = (&model.market, &model.mortality, &model.plan);
        let script_k = |t: f64| {
            let r = p.rate_mean_unchecked(t);
            let ex =
                optimal_exposures(p, cfg, t, r, phi.eval(t), FormulaVariant::FocOracle).unwrap();
            script_k_value(p, law, cfg, t, r, 10.0 + 2.0 * t, &ex).unwrap()
        };
        let trap = -trapezoid(script_k, 0.0, 20.0, 10_000);
        assert!(
            (table.eval(0.0) - trap).abs() < 1e-8,
            "{} vs {trap}",
            table.eval(0.0)
        );
    }

    #[test]
    fn q_examples() {
        let p = MarketParams::reference();
        let law = MortalityLaw::default();
        let q = q_value(&p, &law, &PlanConfig::default(), 0.0, 0.03).unwrap();
        assert_relative_eq!(
            q,
            0.1 * 0.03 + 0.01 - 0.0125 - 0.014f64.powi(2) - 0.171f64.powi(2),
            epsilon = 1e-15
        );
    }
}
