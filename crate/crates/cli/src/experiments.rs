//! The four subcommands: strategy tables, terminal-utility simulation,
//! the verification suite and the paired strategy comparison.

use std::path::Path;
use std::time::Instant;

use pension_dc::auxiliary::{phi_fn, AuxiliaryFunctions};
use pension_dc::numerics::{adaptive_simpson, mean_and_se, Table};
use pension_dc::sde::generate_path;
use pension_dc::strategy::{optimal_strategy, ConstantMix, OptimalStrategy, Scaled};
use pension_dc::verifier::{
    affinity_check, ansatz_adjoint, bsde_residual_ensemble, control_gradient, deterministic_a2,
    estimate_a2, fd_gradient, foc_residual, integrability_diagnostics, terminal_identity_error,
    A2Variant, MIN_A2_PATHS,
};
use pension_dc::wealth::{
    compare_strategies, par_paths, simulate_fan, simulate_recorded, RecordedPath, SimConfig,
    UtilitySpec, WealthModel,
};
use pension_dc::{
    FormulaVariant, MarketParams, ModelError, MortalityLaw, PathState, PlanConfig, RngPolicy,
    SimulationGrid, Strategy, StrategyVector,
};

use crate::config::{Rival, RunConfig, KEYS};
use crate::error::CliError;
use crate::output::{fmt_f64, sha256_hex, CheckSummary, Csv, GridSpec, OutputDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Strategies,
    Simulate,
    Verify,
    Compare,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Strategies => "strategies",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        }
    }
}

/// One row of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub status: Status,
}

impl Check {
    fn asserted(
        name: impl Into<String>,
        value: f64,
        tolerance: impl Into<String>,
        ok: bool,
    ) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: tolerance.into(),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    /// `value <= tol` (false for NaN).
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check::asserted(name, value, format!("<= {}", fmt_f64(tol)), value <= tol)
    }

    fn info(name: impl Into<String>, value: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: String::new(),
            status: Status::Info,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    /// Whether every asserted check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Runs `command` and writes its files and `manifest.json` into `out`.
pub fn run(
    command: Command,
    cfg: &RunConfig,
    out: &Path,
    threads: Option<usize>,
) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut dir = OutputDir::create(out)?;
    let checks = match command {
        Command::Strategies => strategies(cfg, &mut dir, threads)?,
        Command::Simulate => simulate(cfg, &mut dir, threads)?,
        Command::Verify => verify(cfg, &mut dir, threads)?,
        Command::Compare => compare(cfg, &mut dir, threads)?,
    };
    let grid = cfg.grid()?;
    let resolved = cfg.render();
    let mut config: Vec<[String; 2]> = KEYS
        .iter()
        .map(|k| [k.to_string(), cfg.get(k).expect("listed key")])
        .collect();
    if cfg.verify.inject_pi2_fault != 0.0 {
        config.push([
            "verify.inject_pi2_fault".into(),
            format!("{}", cfg.verify.inject_pi2_fault),
        ]);
    }
    let manifest = RunManifest {
        command: command.name().into(),
        config_sha256: sha256_hex(resolved.as_bytes()),
        config,
        seed: cfg.seed,
        grid: GridSpec {
            horizon: grid.horizon(),
            n_steps: grid.n_steps(),
            dt: grid.dt(),
        },
        variant: cfg.variant.label().into(),
        alphas: cfg.alphas.clone(),
        outputs: dir.files().to_vec(),
        checks: checks
            .iter()
            .map(|c| CheckSummary {
                name: c.name.clone(),
                status: c.status.label().into(),
            })
            .collect(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    dir.write("manifest.json", &manifest.to_json())?;
    Ok(RunOutcome { manifest, checks })
}

fn model_for(cfg: &RunConfig, alpha: f64) -> WealthModel {
    WealthModel::new(
        cfg.market.clone(),
        cfg.mortality,
        cfg.plan.with_alpha(alpha),
    )
    .with_convention(cfg.wealth_convention)
}

fn sim_config(
    cfg: &RunConfig,
    grid: SimulationGrid,
    n_paths: usize,
    threads: Option<usize>,
) -> SimConfig {
    SimConfig::new(grid, n_paths, cfg.seed).with_threads(threads)
}

fn other(variant: FormulaVariant) -> FormulaVariant {
    match variant {
        FormulaVariant::FocOracle => FormulaVariant::PaperVerbatim,
        FormulaVariant::PaperVerbatim => FormulaVariant::FocOracle,
    }
}

fn candidate(
    model: &WealthModel,
    variant: FormulaVariant,
    cfg: &RunConfig,
) -> Result<OptimalStrategy, CliError> {
    let phi = phi_fn(&model.market, &model.plan, variant, &cfg.aux)?;
    Ok(OptimalStrategy::new(
        model.market.clone(),
        model.plan,
        variant,
        phi,
    ))
}

/// Auxiliary functions of `variant` on the wealth proxy of the FOC rule, so
/// that both variants share one proxy even when the printed rule ruins
/// every pilot path.
fn auxiliary(
    model: &WealthModel,
    variant: FormulaVariant,
    cfg: &RunConfig,
) -> Result<AuxiliaryFunctions, CliError> {
    let foc = AuxiliaryFunctions::build(model, FormulaVariant::FocOracle, &cfg.aux)?;
    Ok(match variant {
        FormulaVariant::FocOracle => foc,
        FormulaVariant::PaperVerbatim => {
            AuxiliaryFunctions::with_proxy(model, variant, foc.y_proxy, &cfg.aux)?
        }
    })
}

fn at_rate(params: &MarketParams, t: f64, r: f64) -> PathState {
    PathState {
        t,
        r,
        ..PathState::initial(params)
    }
}

fn tag(alpha: f64) -> String {
    format!("alpha{alpha}")
}

fn write_checks(dir: &mut OutputDir, name: &str, checks: &[Check]) -> Result<(), CliError> {
    let mut csv = Csv::new(&["check", "value", "tolerance", "status"]);
    for c in checks {
        csv.row(&[
            c.name.clone(),
            fmt_f64(c.value),
            c.tolerance.clone(),
            c.status.label().into(),
        ]);
    }
    dir.write(name, &csv.render())
}

/// Allocation, `phi` and `varphi` on the grid (excluding the horizon, where
/// the bond exposure vanishes) with the rate held at its initial value.
fn strategies(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    _threads: Option<usize>,
) -> Result<Vec<Check>, CliError> {
    let grid = cfg.grid()?;
    let mut checks = Vec::new();
    for &alpha in &cfg.alphas {
        let model = model_for(cfg, alpha);
        for variant in [FormulaVariant::FocOracle, FormulaVariant::PaperVerbatim] {
            let aux = auxiliary(&model, variant, cfg)?;
            let strategy = aux.strategy();
            let mut csv = Csv::new(&["t", "pi1", "pi2", "pi3", "safe_weight", "phi", "varphi"]);
            let mut max_pi1 = f64::NEG_INFINITY;
            for k in 0..grid.n_steps() {
                let t = grid.time(k);
                let s = strategy.allocate(t, &at_rate(&model.market, t, model.market.r0))?;
                max_pi1 = max_pi1.max(s.pi1);
                csv.row(&[
                    fmt_f64(t),
                    fmt_f64(s.pi1),
                    fmt_f64(s.pi2),
                    fmt_f64(s.pi3),
                    fmt_f64(s.safe_weight),
                    fmt_f64(aux.phi.eval(t)),
                    fmt_f64(aux.varphi.eval(t)),
                ]);
            }
            dir.write(
                &format!("strategies_{}_{}.csv", tag(alpha), variant.label()),
                &csv.render(),
            )?;
            checks.push(Check::asserted(
                format!("pi1_negative[{},{}]", tag(alpha), variant.label()),
                max_pi1,
                "< 0",
                max_pi1 < 0.0,
            ));
        }
    }
    Ok(checks)
}

fn simulate(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    threads: Option<usize>,
) -> Result<Vec<Check>, CliError> {
    let grid = cfg.grid()?;
    let sim = sim_config(cfg, grid, cfg.n_paths, threads);
    let mut summary = Csv::new(&[
        "alpha",
        "variant",
        "mean_utility",
        "std_error",
        "n_paths",
        "n_failed",
    ]);
    let mut checks = Vec::new();
    for &alpha in &cfg.alphas {
        let model = model_for(cfg, alpha);
        let strategy = candidate(&model, cfg.variant, cfg)?;
        let utility = UtilitySpec::with_floor(alpha, cfg.utility_floor)?;
        let (est, fan) = simulate_fan(&model, &strategy, &sim, &utility, cfg.report_every)?;
        let mut csv = Csv::new(&["t", "mean", "q05", "q95", "n_failed"]);
        for p in &fan {
            csv.row(&[
                fmt_f64(p.t),
                fmt_f64(p.mean),
                fmt_f64(p.q05),
                fmt_f64(p.q95),
                p.n_failed.to_string(),
            ]);
        }
        dir.write(
            &format!("fan_{}_{}.csv", tag(alpha), cfg.variant.label()),
            &csv.render(),
        )?;
        summary.row(&[
            fmt_f64(alpha),
            cfg.variant.label().into(),
            fmt_f64(est.mean),
            fmt_f64(est.std_error),
            est.n_paths.to_string(),
            est.n_failed.to_string(),
        ]);
        checks.push(Check::info(
            format!("failed_fraction[{}]", tag(alpha)),
            est.n_failed as f64 / est.n_paths as f64,
        ));
    }
    dir.write("utility.csv", &summary.render())?;
    Ok(checks)
}

fn compare(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    threads: Option<usize>,
) -> Result<Vec<Check>, CliError> {
    let grid = cfg.grid()?;
    let sim = sim_config(cfg, grid, cfg.n_paths, threads);
    let mut checks = Vec::new();
    for &alpha in &cfg.alphas {
        let model = model_for(cfg, alpha);
        let kappa = model.plan.kappa;
        let cand = candidate(&model, cfg.variant, cfg)?;
        let alternative = if cfg.rivals.contains(&Rival::OtherVariant) {
            Some(candidate(&model, other(cfg.variant), cfg)?)
        } else {
            None
        };
        let owned: Vec<(String, Box<dyn Strategy + '_>)> = cfg
            .rivals
            .iter()
            .map(|rival| {
                let rule: Box<dyn Strategy + '_> = match rival {
                    Rival::Identity => Box::new(Scaled {
                        inner: &cand,
                        factor: 1.0,
                        kappa,
                    }),
                    Rival::Scale(factor) => Box::new(Scaled {
                        inner: &cand,
                        factor: *factor,
                        kappa,
                    }),
                    Rival::AllSafe => Box::new(ConstantMix::all_safe(kappa)),
                    Rival::OtherVariant => Box::new(alternative.clone().expect("built above")),
                    Rival::Mix([a, b, c]) => {
                        Box::new(ConstantMix(StrategyVector::new(*a, *b, *c, kappa)))
                    }
                };
                (rival.label(), rule)
            })
            .collect();
        let rivals: Vec<(String, &dyn Strategy)> =
            owned.iter().map(|(n, r)| (n.clone(), r.as_ref())).collect();
        let utility = UtilitySpec::with_floor(alpha, cfg.utility_floor)?;
        let report = compare_strategies(&model, &cand, &rivals, &sim, &utility)?;

        let mut csv = Csv::new(&[
            "strategy",
            "mean_utility",
            "std_error",
            "n_failed",
            "difference",
            "difference_se",
            "lower95",
        ]);
        let c = &report.candidate;
        csv.row(&[
            format!("candidate_{}", cfg.variant.label()),
            fmt_f64(c.mean),
            fmt_f64(c.std_error),
            c.n_failed.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ]);
        for ((name, est), diff) in report.rivals.iter().zip(&report.differences) {
            csv.row(&[
                name.clone(),
                fmt_f64(est.mean),
                fmt_f64(est.std_error),
                est.n_failed.to_string(),
                fmt_f64(diff.mean),
                fmt_f64(diff.std_error),
                fmt_f64(diff.lower95),
            ]);
            checks.push(Check::info(
                format!("lower95[{},{name}]", tag(alpha)),
                diff.lower95,
            ));
        }
        dir.write(&format!("compare_{}.csv", tag(alpha)), &csv.render())?;
    }
    Ok(checks)
}

fn verify(
    cfg: &RunConfig,
    dir: &mut OutputDir,
    threads: Option<usize>,
) -> Result<Vec<Check>, CliError> {
    let mut checks = market_checks(cfg, threads)?;
    checks.extend(mortality_checks(&cfg.mortality, cfg.market.horizon)?);
    for &alpha in &cfg.alphas {
        checks.extend(model_checks(cfg, alpha, threads)?);
    }
    write_checks(dir, "verify.csv", &checks)?;
    Ok(checks)
}

/// Vasicek moments of `r(T)` from exact transitions, as z-scores.
fn market_checks(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<Check>, CliError> {
    let p = &cfg.market;
    let grid = SimulationGrid::new(p.horizon, p.horizon.ceil().max(1.0) as usize)?;
    let terminal = par_paths(threads, cfg.verify.market_paths, |i| {
        Ok(generate_path(p, grid, RngPolicy::new(cfg.seed, i as u64))
            .last()
            .expect("non-empty")
            .r)
    })?;
    let (mean, se) = mean_and_se(&terminal);
    let n = terminal.len() as f64;
    let var = terminal.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let fourth = terminal.iter().map(|r| (r - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((fourth - var * var) / n).sqrt();
    let mean_z = (mean - p.vasicek_mean(p.horizon)?).abs() / se;
    let var_z = (var - p.vasicek_variance(p.horizon)?).abs() / var_se;
    Ok(vec![
        Check::at_most("vasicek_mean_zscore", mean_z, 3.0),
        Check::at_most("vasicek_variance_zscore", var_z, 3.0),
    ])
}

fn mortality_checks(law: &MortalityLaw, horizon: f64) -> Result<Vec<Check>, CliError> {
    let times: Vec<f64> = (0..=40).map(|i| horizon * i as f64 / 40.0).collect();
    let mut semigroup: f64 = 0.0;
    let mut quadrature: f64 = 0.0;
    for (i, &s) in times.iter().enumerate() {
        for &u in &times[..=i] {
            let split = law.survival_probability(0.0, u)? * law.survival_probability(u, s)?;
            semigroup = semigroup.max((split - law.survival_probability(0.0, s)?).abs());
        }
        let hazard = adaptive_simpson(
            |v| law.force_of_mortality(v).unwrap_or(f64::NAN),
            0.0,
            s,
            1e-13,
        )?;
        quadrature = quadrature.max(((-hazard).exp() - law.survival_probability(0.0, s)?).abs());
    }
    let reference = MortalityLaw::default().survival_probability(0.0, 20.0)?;
    Ok(vec![
        Check::at_most("mortality_semigroup", semigroup, 1e-12),
        Check::at_most("mortality_quadrature", quadrature, 1e-10),
        Check::at_most(
            "mortality_reference_survival_20y",
            (reference - 0.75).abs(),
            0.0,
        ),
    ])
}

fn all_still(market: &MarketParams) -> MarketParams {
    MarketParams {
        sigma_r: 0.0,
        sigma_i: 0.0.into(),
        sigma: 0.0.into(),
        sigma_s: 0.0.into(),
        sigma1: 0.0.into(),
        sigma2: 0.0.into(),
        ..market.clone()
    }
}

fn model_checks(
    cfg: &RunConfig,
    alpha: f64,
    threads: Option<usize>,
) -> Result<Vec<Check>, CliError> {
    let label = |name: &str| format!("{name}[{}]", tag(alpha));
    let model = model_for(cfg, alpha);
    let (p, plan) = (&model.market, &model.plan);
    let grid = cfg.grid()?;
    let lag = grid.lag_steps(plan.theta);
    let mut checks = Vec::new();

    let aux = auxiliary(&model, cfg.variant, cfg)?;
    let foc = candidate(&model, FormulaVariant::FocOracle, cfg)?;
    let mut probe = foc.clone();
    probe.pi2_perturbation = cfg.verify.inject_pi2_fault;

    // closed-form pi1 and the first-order conditions along one market path
    let path = generate_path(p, grid, RngPolicy::new(cfg.seed, 0));
    let first = probe.allocate(0.0, &path[0])?.pi1;
    let (mut drift, mut max_pi1, mut max_res) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let observed = &path[k.saturating_sub(lag)];
        let s = probe.allocate(t, observed)?;
        drift = drift.max((s.pi1 - first).abs());
        max_pi1 = max_pi1.max(s.pi1);
        let res = foc_residual(p, plan, t, observed.r, &s, foc.phi.eval(t));
        max_res = res.iter().fold(max_res, |m, v| m.max(v.abs()));
    }
    checks.push(Check::at_most(label("pi1_constant_along_path"), drift, 0.0));
    checks.push(Check::asserted(
        label("pi1_negative"),
        max_pi1,
        "< 0",
        max_pi1 < 0.0,
    ));
    checks.push(Check::at_most(label("foc_residual_max"), max_res, 1e-10));
    let printed = optimal_strategy(
        p,
        plan,
        0.0,
        p.r0,
        foc.phi.eval(0.0),
        FormulaVariant::PaperVerbatim,
    )?;
    let printed_res = foc_residual(p, plan, 0.0, p.r0, &printed, foc.phi.eval(0.0));
    checks.push(Check::info(
        label("paper_pi3_residual"),
        printed_res[2].abs(),
    ));

    // ansatz terminal conditions and the Euler residual order of A1
    let horizon = p.horizon;
    checks.push(Check::at_most(
        label("phi_terminal"),
        aux.phi.eval(horizon).abs(),
        0.0,
    ));
    checks.push(Check::at_most(
        label("varphi_terminal"),
        aux.varphi.eval(horizon).abs(),
        0.0,
    ));
    let strategy = aux.strategy();
    let mut ensembles: Vec<(SimulationGrid, Vec<RecordedPath>)> = Vec::new();
    for per_year in [12.0, 24.0, 48.0] {
        let g = SimulationGrid::new(horizon, (per_year * horizon).round().max(1.0) as usize)?;
        let paths = simulate_recorded(
            &model,
            &strategy,
            &sim_config(cfg, g, cfg.verify.bsde_paths, threads),
            true,
        )?;
        ensembles.push((g, paths));
    }
    let (g0, paths) = &ensembles[0];
    let terminal = terminal_identity_error(plan, paths, &aux.phi, &aux.varphi);
    checks.push(Check::at_most(label("a1_terminal_identity"), terminal, 0.0));
    let residuals = ensembles
        .iter()
        .map(|(g, paths)| {
            Ok(bsde_residual_ensemble(&model, paths, *g, &aux.phi, &aux.varphi)?.mean_abs)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    for (i, w) in residuals.windows(2).enumerate() {
        let ratio = w[0] / w[1];
        let name = format!("a1_residual_ratio_{}", ["12_24", "24_48"][i]);
        checks.push(Check::asserted(
            label(&name),
            ratio,
            "[1.7, 2.3]",
            (1.7..=2.3).contains(&ratio),
        ));
    }

    // Hamiltonian structure at simulated states; the adjoint belongs to a
    // scaled rule so that the control gradient does not vanish
    let (mut worst_affine, mut worst_grad) = (0.0f64, 0.0f64);
    for rec in paths.iter().filter(|r| !r.failed).take(10) {
        for k in (0..g0.n_steps()).step_by(24) {
            let t = g0.time(k);
            let (r, y) = (rec.r[k], rec.y[k]);
            let s = rec.allocations[k];
            let adj = ansatz_adjoint(
                p,
                plan,
                t,
                r,
                y,
                &s.scaled(0.9, plan.kappa),
                aux.phi.eval(t),
                aux.varphi.eval(t),
            );
            worst_affine =
                worst_affine.max(affinity_check(&model, t, r, y, &s, &adj, 0.1)?.worst());
            let fd = fd_gradient(&model, t, r, y, &s, &adj, 1e-3)?;
            let exact = control_gradient(p, t, r, y, &adj);
            let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = fd
                .iter()
                .zip(&exact)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst_grad = worst_grad.max(err / scale);
        }
    }
    checks.push(Check::at_most(
        label("hamiltonian_second_difference"),
        worst_affine,
        1e-10,
    ));
    checks.push(Check::at_most(
        label("hamiltonian_gradient_relative_error"),
        worst_grad,
        1e-8,
    ));

    let u = UtilitySpec::with_floor(alpha, cfg.utility_floor)?;
    let curvature = (0..100)
        .map(|i| u.curvature(10f64.powf(-3.0 + 6.0 * i as f64 / 99.0)))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::asserted(
        label("utility_curvature_max"),
        curvature,
        "< 0",
        curvature < 0.0,
    ));

    // A2: zero source, the empty integral and the deterministic oracle
    let free = WealthModel {
        plan: PlanConfig {
            kappa: 0.0,
            ..*plan
        },
        ..model.clone()
    };
    let zero = estimate_a2(
        &free,
        paths,
        *g0,
        &aux.phi,
        &aux.varphi,
        0.0,
        A2Variant::Discounted,
        2,
    )?;
    checks.push(Check::at_most(label("a2_kappa_zero"), zero.mean.abs(), 0.0));
    let survivors = |name: &str, got: usize| Check {
        name: label(name),
        value: got as f64,
        tolerance: format!("skipped: fewer than {MIN_A2_PATHS} surviving paths"),
        status: Status::Info,
    };
    let estimate = |t: f64, variant: A2Variant| {
        estimate_a2(&model, paths, *g0, &aux.phi, &aux.varphi, t, variant, 2)
    };
    match estimate(horizon, A2Variant::Discounted) {
        Ok(end) => checks.push(Check::at_most(label("a2_at_horizon"), end.mean.abs(), 0.0)),
        Err(ModelError::InsufficientSample { got, .. }) => {
            checks.push(survivors("a2_at_horizon", got))
        }
        Err(e) => return Err(e.into()),
    }
    for (name, variant) in [
        ("a2_discounted_t0", A2Variant::Discounted),
        ("a2_undiscounted_t0", A2Variant::PaperUndiscounted),
    ] {
        match estimate(0.0, variant) {
            Ok(est) => checks.push(Check::info(label(name), est.mean)),
            Err(ModelError::InsufficientSample { got, .. }) => checks.push(survivors(name, got)),
            Err(e) => return Err(e.into()),
        }
    }
    checks.push(a2_deterministic(
        cfg,
        &model,
        &aux.phi,
        &aux.varphi,
        threads,
        &label("a2_deterministic_error"),
    )?);

    for d in integrability_diagnostics(&model, paths, *g0, &aux.phi, &aux.varphi) {
        checks.push(Check::info(
            label(&format!("integrability_growth {}", d.name)),
            d.growth(),
        ));
    }
    let nodes = aux.phi.values().len();
    let mut ode: f64 = 0.0;
    for i in 1..nodes - 1 {
        ode = ode.max(aux.ode_residual_at(i)?.abs());
    }
    checks.push(Check::info(label("phi_ode_residual_max"), ode));
    Ok(checks)
}

/// With every volatility zero the estimate must match quadrature up to
/// three standard errors plus twice the change under halving `dt`.
fn a2_deterministic(
    cfg: &RunConfig,
    model: &WealthModel,
    phi: &Table,
    varphi: &Table,
    threads: Option<usize>,
    name: &str,
) -> Result<Check, CliError> {
    let still = WealthModel {
        market: all_still(&model.market),
        ..model.clone()
    };
    let s = StrategyVector::new(0.1, 0.2, 0.3, still.plan.kappa);
    let rule = ConstantMix(s);
    let coarse_grid = cfg.grid()?;
    let mut estimates = Vec::new();
    for g in [coarse_grid, coarse_grid.refined()] {
        let paths = simulate_recorded(
            &still,
            &rule,
            &sim_config(cfg, g, cfg.verify.a2_paths, threads),
            false,
        )?;
        estimates.push(estimate_a2(
            &still,
            &paths,
            g,
            phi,
            varphi,
            0.0,
            A2Variant::Discounted,
            2,
        )?);
    }
    let exact = deterministic_a2(&still, &s, phi, varphi, 0.0, A2Variant::Discounted, 20_000)?;
    let fine = &estimates[1];
    let tol = 3.0 * fine.std_error + 2.0 * (estimates[0].mean - fine.mean).abs();
    Ok(Check::at_most(name, (fine.mean - exact).abs(), tol))
}
