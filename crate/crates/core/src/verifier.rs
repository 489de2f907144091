//! Numerical checks of the adjoint construction: the Hamiltonian and its
//! control gradient, affinity in the controls, first-order-condition
//! residuals, Euler residuals of the `A1` ansatz along simulated paths, and a
//! least-squares Monte Carlo estimate of `A2`.
//!
//! The Hamiltonian keeps the printed layout, in which the inflation-bond
//! diffusion multiplies `B_r` and the rate diffusion multiplies `B_I`; the
//! first-order conditions then take the triangular form solved in
//! [`crate::strategy::FocSystem`].

use nalgebra::{DMatrix, DVector};

use crate::error::{argument, ModelError, Result};
use crate::market::MarketParams;
use crate::numerics::{adaptive_simpson, mean_and_se, Table};
use crate::sde::SimulationGrid;
use crate::strategy::{PlanConfig, StrategyVector};
use crate::wealth::{RecordedPath, WealthConvention, WealthModel};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjointState {
    pub a1: f64,
    pub a2: f64,
    pub b_r: f64,
    pub b_i: f64,
    pub b_s: f64,
    pub b4: f64,
}

impl AdjointState {
    pub fn scaled(&self, k: f64) -> Self {
        AdjointState {
            a1: self.a1 * k,
            a2: self.a2 * k,
            b_r: self.b_r * k,
            b_i: self.b_i * k,
            b_s: self.b_s * k,
            b4: self.b4 * k,
        }
    }
}

/// `A1 = y^(alpha - 1) exp(varphi + phi r)` and the diffusion coefficients
/// Ito's formula assigns to it; `A2` and `B4` are left at zero.
#[allow(clippy::too_many_arguments)]
pub fn ansatz_adjoint(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    y: f64,
    s: &StrategyVector,
    phi_t: f64,
    varphi_t: f64,
) -> AdjointState {
    let a1 = y.powf(cfg.alpha - 1.0) * (varphi_t + phi_t * r).exp();
    let am1 = cfg.alpha - 1.0;
    let b = params.bond_exposure_unchecked(t);
    AdjointState {
        a1,
        a2: 0.0,
        b_r: a1
            * (am1 * (params.sigma_s.at(t) * s.pi3 - b * s.pi2 - params.sigma1.at(t))
                + params.sigma_r * phi_t),
        b_i: a1 * am1 * s.pi1 * params.sigma_i.at(t),
        b_s: a1 * am1 * (params.sigma.at(t) * s.pi3 - params.sigma2.at(t)),
        b4: 0.0,
    }
}

fn displayed(model: &WealthModel) -> WealthModel {
    model.clone().with_convention(WealthConvention::Displayed)
}

/// The Hamiltonian at `(t, r, y)` for allocation `s`.
pub fn hamiltonian(
    model: &WealthModel,
    t: f64,
    r: f64,
    y: f64,
    s: &StrategyVector,
    adj: &AdjointState,
) -> Result<f64> {
    let m = displayed(model);
    hamiltonian_with(&m, t, r, y, s, adj)
}

fn hamiltonian_with(
    m: &WealthModel,
    t: f64,
    r: f64,
    y: f64,
    s: &StrategyVector,
    adj: &AdjointState,
) -> Result<f64> {
    let p = &m.market;
    let v = m.volatilities(t, s);
    Ok(m.drift(t, r, y, s)? * adj.a1
        + p.a * (p.r_bar - r) * adj.a2
        + v.dw_i * y * adj.b_r
        + v.dw_s * y * adj.b_s
        + v.dw_r * y * adj.b_i
        + p.sigma_r * adj.b4)
}

/// Analytic gradient of the Hamiltonian in `(pi1, pi2, pi3)`.
pub fn control_gradient(
    params: &MarketParams,
    t: f64,
    r: f64,
    y: f64,
    adj: &AdjointState,
) -> [f64; 3] {
    let b = params.bond_exposure_unchecked(t);
    let (s1, s2, s_s) = (
        params.sigma1.at(t),
        params.sigma2.at(t),
        params.sigma_s.at(t),
    );
    let mu_s = r + params.mu.at(t);
    [
        y * (params.mu_i.at(t) * adj.a1 + params.sigma_i.at(t) * adj.b_r),
        y * b * ((params.xi + s1) * adj.a1 - adj.b_i),
        y * ((mu_s - s_s * s2 - s_s * s1) * adj.a1 + params.sigma.at(t) * adj.b_s + s_s * adj.b_i),
    ]
}

fn controls(x: [f64; 3], kappa: f64) -> StrategyVector {
    StrategyVector::new(x[0], x[1], x[2], kappa)
}

/// Central finite-difference gradient of the Hamiltonian with step `h`.
pub fn fd_gradient(
    model: &WealthModel,
    t: f64,
    r: f64,
    y: f64,
    s: &StrategyVector,
    adj: &AdjointState,
    h: f64,
) -> Result<[f64; 3]> {
    let m = displayed(model);
    let base = [s.pi1, s.pi2, s.pi3];
    let mut out = [0.0; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let (mut up, mut down) = (base, base);
        up[i] += h;
        down[i] -= h;
        let kappa = m.plan.kappa;
        let hu = hamiltonian_with(&m, t, r, y, &controls(up, kappa), adj)?;
        let hd = hamiltonian_with(&m, t, r, y, &controls(down, kappa), adj)?;
        *slot = (hu - hd) / (2.0 * h);
    }
    Ok(out)
}

/// Second central differences of `f` at `base` along each control and each
/// pair of controls (mixed differences), with step `h`.
pub fn second_differences<F: Fn([f64; 3]) -> f64>(
    f: F,
    base: [f64; 3],
    h: f64,
) -> Vec<(String, f64)> {
    let shifted = |moves: &[(usize, f64)]| {
        let mut x = base;
        for &(i, d) in moves {
            x[i] += d;
        }
        f(x)
    };
    let mut out = Vec::with_capacity(6);
    let center = f(base);
    for i in 0..3 {
        let d2 = shifted(&[(i, h)]) - 2.0 * center + shifted(&[(i, -h)]);
        out.push((format!("pi{}", i + 1), d2));
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let d2 =
            shifted(&[(i, h), (j, h)]) - shifted(&[(i, h), (j, -h)]) - shifted(&[(i, -h), (j, h)])
                + shifted(&[(i, -h), (j, -h)]);
        out.push((format!("pi{}-pi{}", i + 1, j + 1), d2));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityReport {
    pub differences: Vec<(String, f64)>,
    pub tolerance: f64,
}

impl AffinityReport {
    pub fn passed(&self) -> bool {
        self.differences
            .iter()
            .all(|(_, d)| d.abs() <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.differences
            .iter()
            .map(|(_, d)| d.abs())
            .fold(0.0, f64::max)
    }
}

pub const AFFINITY_TOL: f64 = 1e-10;

/// Second differences of the Hamiltonian in the controls around `s`.
#[allow(clippy::too_many_arguments)]
pub fn affinity_check(
    model: &WealthModel,
    t: f64,
    r: f64,
    y: f64,
    s: &StrategyVector,
    adj: &AdjointState,
    h: f64,
) -> Result<AffinityReport> {
    let m = displayed(model);
    // Evaluate once to surface domain errors before the closure swallows them.
    hamiltonian_with(&m, t, r, y, s, adj)?;
    let kappa = m.plan.kappa;
    let f =
        |x: [f64; 3]| hamiltonian_with(&m, t, r, y, &controls(x, kappa), adj).unwrap_or(f64::NAN);
    Ok(AffinityReport {
        differences: second_differences(f, [s.pi1, s.pi2, s.pi3], h),
        tolerance: AFFINITY_TOL,
    })
}

/// The three first-order conditions with the ansatz adjoint relations
/// substituted, divided by `A1`: the pi1, pi2 and pi3 conditions in order.
pub fn foc_residual(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    s: &StrategyVector,
    phi_t: f64,
) -> [f64; 3] {
    let unit = ansatz_adjoint(params, cfg, t, r, 1.0, s, phi_t, -phi_t * r);
    let mu_s = r + params.mu.at(t);
    let (s1, s2, s_s) = (
        params.sigma1.at(t),
        params.sigma2.at(t),
        params.sigma_s.at(t),
    );
    [
        params.mu_i.at(t) + params.sigma_i.at(t) * unit.b_r,
        (params.xi + s1) - unit.b_i,
        (mu_s - s_s * (s1 + s2)) + s_s * unit.b_i + params.sigma.at(t) * unit.b_s,
    ]
}

/// Mean absolute relative Euler residual of the `A1` adjoint equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsdeResidual {
    pub mean_abs: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// Per-step residuals `(A_{k+1} - A_k - f_k dt - B_k . dW_k) / A_k` along one
/// detailed path; the mean of their absolute values.
pub fn bsde_residual_a1(
    model: &WealthModel,
    path: &RecordedPath,
    grid: SimulationGrid,
    phi: &Table,
    varphi: &Table,
) -> Result<Option<f64>> {
    let (p, cfg) = (&model.market, &model.plan);
    let steps = path.y.len().saturating_sub(1).min(path.allocations.len());
    if steps == 0 {
        return Ok(None);
    }
    let dt = grid.dt();
    let mut total = 0.0;
    for k in 0..steps {
        let t = grid.time(k);
        let s = &path.allocations[k];
        let adj = ansatz_adjoint(
            p,
            cfg,
            t,
            path.r[k],
            path.y[k],
            s,
            phi.eval(t),
            varphi.eval(t),
        );
        let t1 = grid.time(k + 1);
        let a_next = path.y[k + 1].powf(cfg.alpha - 1.0)
            * (varphi.eval(t1) + phi.eval(t1) * path.r[k + 1]).exp();
        let (s1, s2) = (p.sigma1.at(t), p.sigma2.at(t));
        let level = model.mortality.force_of_mortality(t)? - cfg.kappa * path.r[k] - p.mu_ell.at(t)
            + s1 * s1
            + s2 * s2;
        let f = -(level * adj.a1 - s1 * adj.b_i - s2 * adj.b_s);
        let dw = &path.dw[k];
        let noise = adj.b_r * dw.dw_r + adj.b_i * dw.dw_i + adj.b_s * dw.dw_s;
        total += ((a_next - adj.a1 - f * dt - noise) / adj.a1).abs();
    }
    Ok(Some(total / steps as f64))
}

/// [`bsde_residual_a1`] averaged over the detailed paths that stay admissible
/// up to the horizon; the ansatz `Y^(alpha - 1)` is undefined once `Y` hits 0.
pub fn bsde_residual_ensemble(
    model: &WealthModel,
    paths: &[RecordedPath],
    grid: SimulationGrid,
    phi: &Table,
    varphi: &Table,
) -> Result<BsdeResidual> {
    let mut per_path = Vec::with_capacity(paths.len());
    for path in paths.iter().filter(|p| !p.failed) {
        if let Some(v) = bsde_residual_a1(model, path, grid, phi, varphi)? {
            per_path.push(v);
        }
    }
    if per_path.is_empty() {
        return Err(argument("paths", "no path has a complete step"));
    }
    let (mean_abs, std_error) = mean_and_se(&per_path);
    Ok(BsdeResidual {
        mean_abs,
        std_error,
        n_paths: per_path.len(),
    })
}

/// Largest `|A1(T) - Y(T)^(alpha - 1)|` over surviving paths.
pub fn terminal_identity_error(
    cfg: &PlanConfig,
    paths: &[RecordedPath],
    phi: &Table,
    varphi: &Table,
) -> f64 {
    let t = phi.end();
    paths
        .iter()
        .filter(|p| !p.failed)
        .map(|p| {
            let (y, r) = (
                *p.y.last().expect("non-empty"),
                *p.r.last().expect("non-empty"),
            );
            let ansatz = y.powf(cfg.alpha - 1.0) * (varphi.eval(t) + phi.eval(t) * r).exp();
            (ansatz - y.powf(cfg.alpha - 1.0)).abs()
        })
        .fold(0.0, f64::max)
}

/// Whether the `A2` representation carries the `e^{-a (s - t)}` factor that
/// the linear BSDE `dA2 = [kappa Y A1 + a A2] dt + ...` requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum A2Variant {
    #[default]
    Discounted,
    PaperUndiscounted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2Estimate {
    /// Sample mean of the regression fit, i.e. the estimate of `E[A2(t)]`.
    pub mean: f64,
    pub std_error: f64,
    pub n_used: usize,
    /// Paths dropped because they failed before the horizon.
    pub n_excluded: usize,
    /// Regression coefficients on the basis `1, r, y, r^2, r y, y^2`
    /// (truncated to the requested degree).
    pub coefficients: Vec<f64>,
}

pub const MIN_A2_PATHS: usize = 100;

fn basis(r: f64, y: f64, degree: usize) -> Vec<f64> {
    match degree {
        0 => vec![1.0],
        1 => vec![1.0, r, y],
        _ => vec![1.0, r, y, r * r, r * y, y * y],
    }
}

/// Least-squares Monte Carlo estimate of
/// `A2(t) = -E[kappa int_t^T D(s, t) h(s) y(s)^alpha ds | E_t]`,
/// `h = exp(varphi + phi r)`, regressing the pathwise integral on the delayed
/// observation `(r, y)` at `t - theta`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_a2(
    model: &WealthModel,
    paths: &[RecordedPath],
    grid: SimulationGrid,
    phi: &Table,
    varphi: &Table,
    t: f64,
    variant: A2Variant,
    degree: usize,
) -> Result<A2Estimate> {
    let (p, cfg) = (&model.market, &model.plan);
    p.check_time("estimate_a2", t)?;
    if paths.len() < MIN_A2_PATHS {
        return Err(ModelError::InsufficientSample {
            required: MIN_A2_PATHS,
            got: paths.len(),
        });
    }
    if degree > 2 {
        return Err(argument("degree", "regression degree must be at most 2"));
    }
    let n = grid.n_steps();
    if cfg.kappa == 0.0 {
        return Ok(A2Estimate {
            mean: 0.0,
            std_error: 0.0,
            n_used: paths.len(),
            n_excluded: 0,
            coefficients: vec![0.0; basis(0.0, 0.0, degree).len()],
        });
    }
    let dt = grid.dt();
    let start = ((t / dt) + 1e-9).floor() as usize;
    let start = start.min(n);
    let observe_at = start.saturating_sub(grid.lag_steps(cfg.theta));

    let mut rows = Vec::new();
    let mut response = Vec::new();
    for path in paths.iter().filter(|p| !p.failed) {
        let mut integral = 0.0;
        for k in start..n {
            let s = grid.time(k);
            let h = (varphi.eval(s) + phi.eval(s) * path.r[k]).exp();
            let discount = match variant {
                A2Variant::Discounted => (-p.a * (s - t)).exp(),
                A2Variant::PaperUndiscounted => 1.0,
            };
            integral += discount * h * path.y[k].powf(cfg.alpha) * dt;
        }
        rows.push(basis(path.r[observe_at], path.y[observe_at], degree));
        response.push(-cfg.kappa * integral);
    }
    let n_used = response.len();
    let n_excluded = paths.len() - n_used;
    if n_used < MIN_A2_PATHS {
        return Err(ModelError::InsufficientSample {
            required: MIN_A2_PATHS,
            got: n_used,
        });
    }
    let width = rows[0].len();
    let design = DMatrix::from_fn(n_used, width, |i, j| rows[i][j]);
    let rhs = DVector::from_vec(response.clone());
    let svd = design.clone().svd(true, true);
    let scale = svd.singular_values.max();
    let coefficients = svd
        .solve(&rhs, scale * 1e-12)
        .map_err(|e| ModelError::Numeric {
            what: "estimate_a2",
            detail: e.to_string(),
        })?;
    let fitted = &design * &coefficients;
    let (mean, _) = mean_and_se(fitted.as_slice());
    let (_, std_error) = mean_and_se(&response);
    Ok(A2Estimate {
        mean,
        std_error,
        n_used,
        n_excluded,
        coefficients: coefficients.iter().copied().collect(),
    })
}

/// Quadrature oracle for [`estimate_a2`] when every volatility vanishes and
/// the allocation is the constant `s`: relative wealth follows an ODE,
/// solved here by forward RK4 on `steps` intervals, and the integral is
/// evaluated by adaptive Simpson.
#[allow(clippy::too_many_arguments)]
pub fn deterministic_a2(
    model: &WealthModel,
    s: &StrategyVector,
    phi: &Table,
    varphi: &Table,
    t: f64,
    variant: A2Variant,
    steps: usize,
) -> Result<f64> {
    let (p, cfg) = (&model.market, &model.plan);
    p.check_time("deterministic_a2", t)?;
    if steps == 0 {
        return Err(argument("steps", "need at least one step"));
    }
    let horizon = p.horizon;
    let h = horizon / steps as f64;
    let rate = |u: f64| p.rate_mean_unchecked(u.min(horizon));
    let rhs = |u: f64, y: f64| model.drift(u.min(horizon), rate(u), y, s);
    let mut y = vec![cfg.y0; steps + 1];
    for k in 0..steps {
        let u = k as f64 * h;
        let k1 = rhs(u, y[k])?;
        let k2 = rhs(u + 0.5 * h, y[k] + 0.5 * h * k1)?;
        let k3 = rhs(u + 0.5 * h, y[k] + 0.5 * h * k2)?;
        let k4 = rhs(u + h, y[k] + h * k3)?;
        y[k + 1] = y[k] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(ModelError::Inadmissible {
            t: horizon,
            wealth: y.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    if cfg.kappa == 0.0 || t >= horizon {
        return Ok(0.0);
    }
    let y = Table::from_values(0.0, horizon, y)?;
    let integrand = |u: f64| {
        let discount = match variant {
            A2Variant::Discounted => (-p.a * (u - t)).exp(),
            A2Variant::PaperUndiscounted => 1.0,
        };
        discount * (varphi.eval(u) + phi.eval(u) * rate(u)).exp() * y.eval(u).powf(cfg.alpha)
    };
    Ok(-cfg.kappa * adaptive_simpson(integrand, t, horizon, 1e-12)?)
}

/// Empirical moments behind the integrability requirements of the
/// sufficiency theorem, on the first half and on all of the sample. A value
/// that keeps growing with the sample hints at a divergent expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityDiagnostic {
    pub name: &'static str,
    pub half_sample: f64,
    pub full_sample: f64,
}

impl IntegrabilityDiagnostic {
    pub fn growth(&self) -> f64 {
        self.full_sample / self.half_sample
    }
}

pub fn integrability_diagnostics(
    model: &WealthModel,
    paths: &[RecordedPath],
    grid: SimulationGrid,
    phi: &Table,
    varphi: &Table,
) -> Vec<IntegrabilityDiagnostic> {
    let (p, cfg) = (&model.market, &model.plan);
    let dt = grid.dt();
    let per_path: Vec<[f64; 2]> = paths
        .iter()
        .map(|path| {
            let steps = path.y.len().saturating_sub(1).min(path.allocations.len());
            let mut acc = [0.0; 2];
            for k in 0..steps {
                let t = grid.time(k);
                let s = &path.allocations[k];
                let y = path.y[k];
                let adj = ansatz_adjoint(p, cfg, t, path.r[k], y, s, phi.eval(t), varphi.eval(t));
                let v = model.volatilities(t, s);
                acc[0] += y * y * (adj.b_r * adj.b_r + adj.b_i * adj.b_i + adj.b_s * adj.b_s) * dt;
                acc[1] += adj.a1
                    * adj.a1
                    * y
                    * y
                    * (v.dw_r * v.dw_r + v.dw_i * v.dw_i + v.dw_s * v.dw_s)
                    * dt;
            }
            acc
        })
        .collect();
    let mean = |slice: &[[f64; 2]], j: usize| {
        slice.iter().map(|a| a[j]).sum::<f64>() / slice.len().max(1) as f64
    };
    let half = &per_path[..per_path.len() / 2];
    ["E int Y^2 |B|^2 dt", "E int A1^2 |sigma_Y|^2 dt"]
        .iter()
        .enumerate()
        .map(|(j, name)| IntegrabilityDiagnostic {
            name,
            half_sample: mean(half, j),
            full_sample: mean(&per_path, j),
        })
        .collect()
}
