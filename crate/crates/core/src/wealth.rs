//! Relative-wealth dynamics and Monte Carlo estimation of expected terminal
//! utility.
//!
//! Relative wealth `Y = X / ell` is stepped by Euler-Maruyama in levels.
//! Paths on which `Y` reaches zero or below are flagged inadmissible, stop
//! evolving and are valued at the utility floor.

use rayon::prelude::*;

use crate::error::{argument, ModelError, Result};
use crate::market::MarketParams;
use crate::mortality::MortalityLaw;
use crate::numerics::{compensated_sum, mean_and_se, quantile_sorted};
use crate::sde::{Increments, MarketStepper, PathState, RngPolicy, SimulationGrid};
use crate::strategy::{PlanConfig, Strategy, StrategyVector};

/// Which form of the relative-wealth drift to integrate.
///
/// `Displayed` is the printed SDE. `ItoConsistent` is what Ito's formula
/// gives for `X / ell` from the nominal wealth SDE: the stock cross term is
/// `pi3 sigma sigma2` rather than `pi3 sigma_S sigma2`, and contributions
/// enter with a plus sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WealthConvention {
    #[default]
    Displayed,
    ItoConsistent,
}

/// Power utility `U(y) = y^alpha / alpha` with a floor used for
/// inadmissible paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    pub alpha: f64,
    /// Wealth level whose utility is assigned to failed paths.
    pub floor_wealth: f64,
}

impl UtilitySpec {
    pub const DEFAULT_FLOOR: f64 = 1e-6;

    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_floor(alpha, Self::DEFAULT_FLOOR)
    }

    pub fn with_floor(alpha: f64, floor_wealth: f64) -> Result<Self> {
        if !(alpha < 1.0) || alpha == 0.0 {
            return Err(argument(
                "alpha",
                format!("must be < 1 and non-zero, got {alpha}"),
            ));
        }
        if !(floor_wealth > 0.0) {
            return Err(argument("utility_floor", "floor wealth must be positive"));
        }
        Ok(UtilitySpec {
            alpha,
            floor_wealth,
        })
    }

    #[inline]
    pub fn utility(&self, y: f64) -> f64 {
        y.powf(self.alpha) / self.alpha
    }

    pub fn marginal(&self, y: f64) -> f64 {
        y.powf(self.alpha - 1.0)
    }

    pub fn curvature(&self, y: f64) -> f64 {
        (self.alpha - 1.0) * y.powf(self.alpha - 2.0)
    }

    pub fn floor_utility(&self) -> f64 {
        self.utility(self.floor_wealth)
    }

    /// Utility of a terminal value; `None` marks a failed path.
    pub fn terminal(&self, y: Option<f64>) -> f64 {
        match y {
            Some(y) if y > 0.0 => self.utility(y),
            _ => self.floor_utility(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_failed: usize,
}

/// Everything the wealth equation depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthModel {
    pub market: MarketParams,
    pub mortality: MortalityLaw,
    pub plan: PlanConfig,
    pub convention: WealthConvention,
}

impl WealthModel {
    pub fn new(market: MarketParams, mortality: MortalityLaw, plan: PlanConfig) -> Self {
        WealthModel {
            market,
            mortality,
            plan,
            convention: WealthConvention::default(),
        }
    }

    pub fn with_convention(self, convention: WealthConvention) -> Self {
        WealthModel { convention, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.mortality.validate(self.market.horizon)?;
        self.plan.validate()
    }

    /// Diffusion loadings of `dY / Y` on `(W_r, W_I, W_S)`.
    #[inline]
    pub fn volatilities(&self, t: f64, s: &StrategyVector) -> Increments {
        let p = &self.market;
        let bond = p.bond_exposure_unchecked(t) * s.pi2;
        Increments {
            dw_r: s.pi3 * p.sigma_s.at(t) - bond - p.sigma1.at(t),
            dw_i: s.pi1 * p.sigma_i.at(t),
            dw_s: s.pi3 * p.sigma.at(t) - p.sigma2.at(t),
        }
    }

    /// Drift of `dY` at `(t, r, y)`.
    pub fn drift(&self, t: f64, r: f64, y: f64, s: &StrategyVector) -> Result<f64> {
        let p = &self.market;
        let beta = self.mortality.force_of_mortality(t)?;
        let contribution = (1.0 - self.mortality.epsilon() * t * beta) * self.plan.delta;
        let bond = p.bond_exposure_unchecked(t) * s.pi2;
        let (sigma1, sigma2) = (p.sigma1.at(t), p.sigma2.at(t));
        let common = p.mu_i.at(t) * s.pi1 + p.xi * bond + (r + p.mu.at(t)) * s.pi3
            - self.plan.kappa * r
            + beta
            - p.mu_ell.at(t)
            + sigma1 * sigma1
            + sigma2 * sigma2
            - (s.pi3 * p.sigma_s.at(t) - bond) * sigma1;
        Ok(match self.convention {
            WealthConvention::Displayed => {
                y * (common - s.pi3 * p.sigma_s.at(t) * sigma2) - contribution
            }
            WealthConvention::ItoConsistent => {
                y * (common - s.pi3 * p.sigma.at(t) * sigma2) + contribution
            }
        })
    }

    /// One Euler step of relative wealth from `state` (whose `wealth` must be
    /// set) over `dt` with increments `dw`.
    pub fn step_relative_wealth(
        &self,
        state: &PathState,
        s: &StrategyVector,
        dw: &Increments,
        dt: f64,
    ) -> Result<f64> {
        let y = state
            .wealth
            .ok_or_else(|| argument("state", "relative wealth is not attached"))?;
        if !(y > 0.0) {
            return Err(ModelError::Inadmissible {
                t: state.t,
                wealth: y,
            });
        }
        let v = self.volatilities(state.t, s);
        let drift = self.drift(state.t, state.r, y, s)?;
        Ok(y + drift * dt + y * (v.dw_r * dw.dw_r + v.dw_i * dw.dw_i + v.dw_s * dw.dw_s))
    }

    /// One Euler step of nominal wealth `x` with salary `salary` at the left
    /// end of the step.
    #[allow(clippy::too_many_arguments)]
    pub fn step_nominal_wealth(
        &self,
        t: f64,
        r: f64,
        x: f64,
        salary: f64,
        s: &StrategyVector,
        dw: &Increments,
        dt: f64,
    ) -> Result<f64> {
        if !(x > 0.0) {
            return Err(ModelError::Inadmissible { t, wealth: x });
        }
        let p = &self.market;
        let beta = self.mortality.force_of_mortality(t)?;
        let contribution = (1.0 - self.mortality.epsilon() * t * beta) * self.plan.delta * salary;
        let bond = p.bond_exposure_unchecked(t) * s.pi2;
        let rate = (1.0 - self.plan.kappa) * r
            + p.mu_i.at(t) * s.pi1
            + p.xi * bond
            + (r + p.mu.at(t)) * s.pi3
            + beta;
        let shock = s.pi1 * p.sigma_i.at(t) * dw.dw_i
            + (s.pi3 * p.sigma_s.at(t) - bond) * dw.dw_r
            + s.pi3 * p.sigma.at(t) * dw.dw_s;
        Ok(x + (x * rate + contribution) * dt + x * shock)
    }
}

/// Path count, grid, seed and worker cap of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub grid: SimulationGrid,
    pub n_paths: usize,
    pub seed: u64,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(grid: SimulationGrid, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            grid,
            n_paths,
            seed,
            threads: None,
        }
    }

    pub fn with_threads(self, threads: Option<usize>) -> Self {
        SimConfig { threads, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(argument("n_paths", "need at least one path"));
        }
        Ok(())
    }
}

/// Maps `f` over path indices in parallel; output is in index order.
pub fn par_paths<T, F>(threads: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match threads {
        None => run(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| ModelError::Numeric {
                what: "thread pool",
                detail: e.to_string(),
            })?
            .install(run),
    }
}

/// What a path observer sees at each grid point for each strategy.
pub struct StepView<'a> {
    pub strategy: usize,
    pub k: usize,
    pub market: &'a PathState,
    /// `None` once the path has failed.
    pub wealth: Option<f64>,
    /// Allocation chosen at `t_k`; absent at the horizon and after failure.
    pub allocation: Option<&'a StrategyVector>,
}

/// Evolves one market path and the relative wealth of every strategy on it.
/// Returns the terminal wealth per strategy, `None` for failed paths.
pub fn run_path<F>(
    model: &WealthModel,
    strategies: &[&dyn Strategy],
    grid: SimulationGrid,
    policy: RngPolicy,
    mut observe: F,
) -> Result<Vec<Option<f64>>>
where
    F: FnMut(StepView<'_>),
{
    let lag = grid.lag_steps(model.plan.theta);
    let dt = grid.dt();
    let mut stepper = MarketStepper::new(&model.market, grid, policy);
    let mut history = Vec::with_capacity(grid.n_steps() + 1);
    history.push(*stepper.state());
    let mut wealth: Vec<Option<f64>> = vec![Some(model.plan.y0); strategies.len()];
    let mut allocations = vec![StrategyVector::zero(model.plan.kappa); strategies.len()];

    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let observed = history[k.saturating_sub(lag)];
        for (j, strat) in strategies.iter().enumerate() {
            if wealth[j].is_some() {
                allocations[j] = strat.allocate(t, &observed)?;
            }
        }
        let next = stepper.advance().expect("grid has remaining steps");
        let current = history[k];
        for j in 0..strategies.len() {
            observe(StepView {
                strategy: j,
                k,
                market: &current,
                wealth: wealth[j],
                allocation: wealth[j].map(|_| &allocations[j]),
            });
            if let Some(y) = wealth[j] {
                let state = PathState {
                    wealth: Some(y),
                    ..current
                };
                let y_next = model.step_relative_wealth(&state, &allocations[j], &next.dw, dt)?;
                wealth[j] = (y_next > 0.0 && y_next.is_finite()).then_some(y_next);
            }
        }
        history.push(next);
    }
    let last = history[grid.n_steps()];
    for (j, w) in wealth.iter().enumerate() {
        observe(StepView {
            strategy: j,
            k: grid.n_steps(),
            market: &last,
            wealth: *w,
            allocation: None,
        });
    }
    Ok(wealth)
}

fn estimate(utilities: &[f64], n_failed: usize) -> UtilityEstimate {
    let (mean, std_error) = mean_and_se(utilities);
    UtilityEstimate {
        mean,
        std_error,
        n_paths: utilities.len(),
        n_failed,
    }
}

/// Monte Carlo estimate of `E[U(Y(T))]`.
pub fn simulate_terminal(
    model: &WealthModel,
    strategy: &dyn Strategy,
    sim: &SimConfig,
    utility: &UtilitySpec,
) -> Result<UtilityEstimate> {
    sim.check()?;
    let terminal = par_paths(sim.threads, sim.n_paths, |i| {
        let out = run_path(
            model,
            &[strategy],
            sim.grid,
            RngPolicy::new(sim.seed, i as u64),
            |_| {},
        )?;
        Ok(out[0])
    })?;
    let n_failed = terminal.iter().filter(|y| y.is_none()).count();
    let utilities: Vec<f64> = terminal.iter().map(|y| utility.terminal(*y)).collect();
    Ok(estimate(&utilities, n_failed))
}

/// Cross-sectional summary of relative wealth at one report time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanPoint {
    pub t: f64,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    /// Paths already flagged inadmissible; excluded from the statistics.
    pub n_failed: usize,
}

/// Like [`simulate_terminal`], also summarising `Y` every `report_every`
/// steps (and at the horizon).
pub fn simulate_fan(
    model: &WealthModel,
    strategy: &dyn Strategy,
    sim: &SimConfig,
    utility: &UtilitySpec,
    report_every: usize,
) -> Result<(UtilityEstimate, Vec<FanPoint>)> {
    sim.check()?;
    let every = report_every.max(1);
    let n = sim.grid.n_steps();
    let report: Vec<usize> = (0..=n).filter(|k| k % every == 0 || *k == n).collect();
    let rows = par_paths(sim.threads, sim.n_paths, |i| {
        let mut samples = Vec::with_capacity(report.len());
        let out = run_path(
            model,
            &[strategy],
            sim.grid,
            RngPolicy::new(sim.seed, i as u64),
            |v| {
                if v.k % every == 0 || v.k == n {
                    samples.push(v.wealth);
                }
            },
        )?;
        Ok((out[0], samples))
    })?;
    let n_failed = rows.iter().filter(|(y, _)| y.is_none()).count();
    let utilities: Vec<f64> = rows.iter().map(|(y, _)| utility.terminal(*y)).collect();
    let fan = report
        .iter()
        .enumerate()
        .map(|(col, &k)| {
            let mut alive: Vec<f64> = rows.iter().filter_map(|(_, s)| s[col]).collect();
            let failed = rows.len() - alive.len();
            alive.sort_by(f64::total_cmp);
            let (mean, q05, q95) = if alive.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    compensated_sum(alive.iter().copied()) / alive.len() as f64,
                    quantile_sorted(&alive, 0.05),
                    quantile_sorted(&alive, 0.95),
                )
            };
            FanPoint {
                t: sim.grid.time(k),
                mean,
                q05,
                q95,
                n_failed: failed,
            }
        })
        .collect();
    Ok((estimate(&utilities, n_failed), fan))
}

/// Paired comparison of the candidate against one rival.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub rival: String,
    /// Mean of `U(candidate) - U(rival)` over paths.
    pub mean: f64,
    pub std_error: f64,
    /// One-sided 95% lower confidence bound.
    pub lower95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub candidate: UtilityEstimate,
    pub rivals: Vec<(String, UtilityEstimate)>,
    pub differences: Vec<PairedDifference>,
}

/// One-sided 95% standard-normal quantile.
pub const Z95: f64 = 1.6448536269514722;

/// Evaluates the candidate and every rival on common random numbers.
pub fn compare_strategies(
    model: &WealthModel,
    candidate: &dyn Strategy,
    rivals: &[(String, &dyn Strategy)],
    sim: &SimConfig,
    utility: &UtilitySpec,
) -> Result<ComparisonReport> {
    sim.check()?;
    if rivals.is_empty() {
        return Err(argument("rivals", "need at least one rival"));
    }
    let mut all: Vec<&dyn Strategy> = vec![candidate];
    all.extend(rivals.iter().map(|(_, s)| *s));
    let terminal = par_paths(sim.threads, sim.n_paths, |i| {
        run_path(
            model,
            &all,
            sim.grid,
            RngPolicy::new(sim.seed, i as u64),
            |_| {},
        )
    })?;
    let column = |j: usize| -> (Vec<f64>, usize) {
        let failed = terminal.iter().filter(|row| row[j].is_none()).count();
        (
            terminal
                .iter()
                .map(|row| utility.terminal(row[j]))
                .collect(),
            failed,
        )
    };
    let (base, base_failed) = column(0);
    let mut out_rivals = Vec::with_capacity(rivals.len());
    let mut differences = Vec::with_capacity(rivals.len());
    for (j, (name, _)) in rivals.iter().enumerate() {
        let (u, failed) = column(j + 1);
        let diff: Vec<f64> = base.iter().zip(&u).map(|(a, b)| a - b).collect();
        let (mean, std_error) = mean_and_se(&diff);
        differences.push(PairedDifference {
            rival: name.clone(),
            mean,
            std_error,
            lower95: mean - Z95 * std_error,
        });
        out_rivals.push((name.clone(), estimate(&u, failed)));
    }
    Ok(ComparisonReport {
        candidate: estimate(&base, base_failed),
        rivals: out_rivals,
        differences,
    })
}

/// A simulated path kept for verification.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordedPath {
    pub r: Vec<f64>,
    /// Relative wealth; truncated at the first inadmissible step.
    pub y: Vec<f64>,
    /// Increments of step `k -> k + 1`; only filled in detailed mode.
    pub dw: Vec<Increments>,
    /// Allocation on step `k -> k + 1`; only filled in detailed mode.
    pub allocations: Vec<StrategyVector>,
    pub failed: bool,
}

/// Simulates and stores `n_paths` paths of one strategy.
pub fn simulate_recorded(
    model: &WealthModel,
    strategy: &dyn Strategy,
    sim: &SimConfig,
    detailed: bool,
) -> Result<Vec<RecordedPath>> {
    sim.check()?;
    let n = sim.grid.n_steps();
    par_paths(sim.threads, sim.n_paths, |i| {
        let mut rec = RecordedPath {
            r: Vec::with_capacity(n + 1),
            y: Vec::with_capacity(n + 1),
            ..RecordedPath::default()
        };
        let mut pending: Option<StrategyVector> = None;
        let out = run_path(
            model,
            &[strategy],
            sim.grid,
            RngPolicy::new(sim.seed, i as u64),
            |v| {
                rec.r.push(v.market.r);
                if detailed && v.k > 0 && pending.is_some() {
                    rec.dw.push(v.market.dw);
                    rec.allocations.push(pending.take().expect("checked"));
                }
                if let Some(y) = v.wealth {
                    rec.y.push(y);
                }
                pending = v.allocation.copied();
            },
        )?;
        rec.failed = out[0].is_none();
        Ok(rec)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::ConstantMix;
    use approx::assert_relative_eq;

    fn quiet_model() -> WealthModel {
        let market = MarketParams {
            sigma1: 0.0.into(),
            sigma2: 0.0.into(),
            ..MarketParams::reference()
        };
        let mortality = MortalityLaw {
            tau: 1e300,
            ..MortalityLaw::default()
        };
        let plan = PlanConfig {
            delta: 0.0,
            ..PlanConfig::default()
        };
        WealthModel::new(market, mortality, plan)
    }

    #[test]
    fn drift_only_step() {
        let m = quiet_model();
        let state = PathState {
            wealth: Some(2.0),
            ..PathState::initial(&m.market)
        };
        let dw = Increments {
            dw_r: 0.3,
            dw_i: -0.2,
            dw_s: 0.1,
        };
        let y = m
            .step_relative_wealth(&state, &StrategyVector::zero(0.1), &dw, 0.5)
            .unwrap();
        assert_eq!(y, 2.0 * (1.0 + (-0.1 * 0.03 - 0.01) * 0.5));
    }

    #[test]
    fn premium_return_shifts_drift() {
        let base = WealthModel::new(
            MarketParams::reference(),
            MortalityLaw::default(),
            PlanConfig::default(),
        );
        let without = WealthModel {
            mortality: MortalityLaw {
                premium_return: false,
                ..MortalityLaw::default()
            },
            ..base.clone()
        };
        let s = StrategyVector::new(0.2, 0.3, 0.4, 0.1);
        let t = 7.0;
        let gap = base.drift(t, 0.04, 3.0, &s).unwrap() - without.drift(t, 0.04, 3.0, &s).unwrap();
        let beta = base.mortality.force_of_mortality(t).unwrap();
        assert_relative_eq!(gap, t * beta * 0.12, max_relative = 1e-12);
    }

    #[test]
    fn nonpositive_wealth_is_rejected() {
        let m = quiet_model();
        let state = PathState {
            wealth: Some(0.0),
            ..PathState::initial(&m.market)
        };
        let err = m
            .step_relative_wealth(
                &state,
                &StrategyVector::zero(0.1),
                &Increments::default(),
                0.1,
            )
            .unwrap_err();
        assert!(matches!(err, ModelError::Inadmissible { .. }));
    }

    #[test]
    fn utility_properties() {
        for alpha in [-3.0, 0.5] {
            let u = UtilitySpec::new(alpha).unwrap();
            for i in 1..=100 {
                let y = i as f64 * 0.1;
                assert!(u.curvature(y) < 0.0);
                assert!(u.utility(y + 0.01) > u.utility(y));
            }
            assert_eq!(u.terminal(None), u.utility(1e-6));
        }
        assert!(UtilitySpec::new(1.0).is_err());
        assert!(UtilitySpec::new(0.0).is_err());
    }

    #[test]
    fn deterministic_run_has_zero_error() {
        let mut m = quiet_model();
        m.market.sigma_r = 0.0;
        m.market.r0 = 0.05;
        let grid = SimulationGrid::new(20.0, 40).unwrap();
        let sim = SimConfig::new(grid, 64, 9);
        let u = UtilitySpec::new(-3.0).unwrap();
        let est = simulate_terminal(&m, &ConstantMix::all_safe(0.1), &sim, &u).unwrap();
        let mut y = m.plan.y0;
        for _ in 0..40 {
            y *= 1.0 + (-0.1 * 0.05 - 0.01) * 0.5;
        }
        assert_eq!(est.std_error, 0.0);
        assert_relative_eq!(est.mean, u.utility(y), max_relative = 1e-14);
        assert_eq!(est.n_failed, 0);
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let m = WealthModel::new(
            MarketParams::reference(),
            MortalityLaw::default(),
            PlanConfig::default(),
        );
        let s = ConstantMix(StrategyVector::new(0.1, 0.2, 0.3, 0.1));
        let grid = SimulationGrid::new(20.0, 24).unwrap();
        let sim = SimConfig::new(grid, 200, 4);
        let u = UtilitySpec::new(-3.0).unwrap();
        let report = compare_strategies(&m, &s, &[("self".into(), &s)], &sim, &u).unwrap();
        assert_eq!(report.differences[0].mean, 0.0);
        assert_eq!(report.differences[0].std_error, 0.0);
        assert!(compare_strategies(&m, &s, &[], &sim, &u).is_err());
    }

    #[test]
    fn zero_paths_rejected() {
        let m = quiet_model();
        let grid = SimulationGrid::new(20.0, 4).unwrap();
        let sim = SimConfig::new(grid, 0, 1);
        let u = UtilitySpec::new(-3.0).unwrap();
        assert!(simulate_terminal(&m, &ConstantMix::all_safe(0.1), &sim, &u).is_err());
    }
}
