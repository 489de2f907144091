//! Optimal allocation rules under power utility.
//!
//! Two routes produce `(pi1, pi2, pi3)`:
//!
//! * the closed forms ([`pi1_star`], [`pi2_star`], [`pi3_star`]), kept in
//!   their printed shape under [`FormulaVariant::PaperVerbatim`];
//! * [`foc_solve`], which assembles the first-order conditions of the
//!   Hamiltonian with the adjoint relations of the `A1` ansatz substituted,
//!   divides out `A1`, and solves the resulting triangular 3x3 system.
//!
//! Adjoint diffusion coefficients are indexed by their Brownian driver:
//! `B_r` multiplies `dW_r`, `B_I` multiplies `dW_I`, `B_S` multiplies
//! `dW_S`. After dividing by `A1` the ansatz gives
//!
//! ```text
//! B_r / A1 = (alpha - 1)(sigma_S pi3 - b pi2 - sigma1) + sigma_r phi
//! B_I / A1 = (alpha - 1) sigma_I pi1
//! B_S / A1 = (alpha - 1)(sigma pi3 - sigma2)
//! ```
//!
//! with `b(t)` the bond exposure. The three conditions read
//!
//! ```text
//! mu_I + sigma_I B_r / A1                                   = 0   (pi1 row)
//! (xi + sigma1) - B_I / A1                                  = 0   (pi2 row)
//! mu_S - sigma_S (sigma1 + sigma2) + sigma_S B_I / A1 + sigma B_S / A1 = 0   (pi3 row)
//! ```
//!
//! so `pi1` comes from the pi2 row, `pi3` from the pi3 row and `pi2` from the
//! pi1 row.

use crate::error::{argument, singular, Result};
use crate::market::MarketParams;
use crate::sde::PathState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    /// Fraction of salary contributed.
    pub delta: f64,
    /// Fraction of wealth held in the risk-free asset by rule.
    pub kappa: f64,
    /// Power-utility exponent.
    pub alpha: f64,
    /// Initial relative wealth `X(0) / ell(0)`.
    pub y0: f64,
    /// Information delay in years.
    pub theta: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            delta: 0.12,
            kappa: 0.1,
            alpha: -3.0,
            y0: 10.0,
            theta: 0.0,
        }
    }
}

impl PlanConfig {
    pub fn with_alpha(self, alpha: f64) -> Self {
        PlanConfig { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(argument(
                "delta",
                format!("must lie in (0, 1), got {}", self.delta),
            ));
        }
        if !(self.kappa >= 0.0 && self.kappa < 1.0) {
            return Err(argument(
                "kappa",
                format!("must lie in [0, 1), got {}", self.kappa),
            ));
        }
        if !(self.alpha < 1.0) || self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(argument(
                "alpha",
                format!("must be < 1 and non-zero, got {}", self.alpha),
            ));
        }
        if !(self.y0 > 0.0 && self.y0.is_finite()) {
            return Err(argument("Y0", format!("must be positive, got {}", self.y0)));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(argument(
                "theta",
                format!("must be non-negative, got {}", self.theta),
            ));
        }
        Ok(())
    }
}

/// Portfolio proportions in the inflation-linked bond, the zero-coupon bond
/// and the stock; the rest (`safe_weight`) sits in the risk-free asset on top
/// of the `kappa` floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyVector {
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    pub safe_weight: f64,
}

impl StrategyVector {
    pub fn new(pi1: f64, pi2: f64, pi3: f64, kappa: f64) -> Self {
        StrategyVector {
            pi1,
            pi2,
            pi3,
            safe_weight: 1.0 - kappa - pi1 - pi2 - pi3,
        }
    }

    pub fn zero(kappa: f64) -> Self {
        Self::new(0.0, 0.0, 0.0, kappa)
    }

    pub fn scaled(&self, factor: f64, kappa: f64) -> Self {
        Self::new(
            self.pi1 * factor,
            self.pi2 * factor,
            self.pi3 * factor,
            kappa,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.pi1.is_finite() && self.pi2.is_finite() && self.pi3.is_finite()
    }
}

/// Which closed form of `pi2` and `pi3` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormulaVariant {
    /// Solution of the first-order-condition system.
    #[default]
    FocOracle,
    /// The printed expressions: `pi3` over `(1 - alpha) sigma sigma_S`,
    /// `pi2` with the extra `2 / xi` factor.
    PaperVerbatim,
}

impl FormulaVariant {
    pub fn label(&self) -> &'static str {
        match self {
            FormulaVariant::FocOracle => "foc",
            FormulaVariant::PaperVerbatim => "paper",
        }
    }
}

/// Allocation with the bond leg expressed as its rate exposure `b(t) pi2`,
/// which stays finite at maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposures {
    pub pi1: f64,
    pub bond_exposure: f64,
    pub pi3: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha == 1.0 {
        return Err(singular("optimal strategy", "alpha - 1"));
    }
    Ok(())
}

/// `pi1* = (xi + sigma1) / ((alpha - 1) sigma_I)`.
pub fn pi1_star(params: &MarketParams, cfg: &PlanConfig, t: f64) -> Result<f64> {
    params.check_time("pi1_star", t)?;
    check_alpha(cfg.alpha)?;
    let sigma_i = params.sigma_i.at(t);
    if sigma_i == 0.0 {
        return Err(singular("pi1_star", "sigma_I"));
    }
    Ok((params.xi + params.sigma1.at(t)) / ((cfg.alpha - 1.0) * sigma_i))
}

fn pi3_numerator(params: &MarketParams, cfg: &PlanConfig, t: f64, r: f64) -> f64 {
    let mu_s = r + params.mu.at(t);
    let (sigma, sigma_s, sigma2) = (
        params.sigma.at(t),
        params.sigma_s.at(t),
        params.sigma2.at(t),
    );
    mu_s - sigma_s * sigma2 + params.xi * sigma_s + (1.0 - cfg.alpha) * sigma * sigma2
}

/// The printed `pi3* = (mu_S - sigma_S sigma2 + xi sigma_S + (1 - alpha) sigma sigma2)
/// / ((1 - alpha) sigma sigma_S)`.
pub fn pi3_star(params: &MarketParams, cfg: &PlanConfig, t: f64, r: f64) -> Result<f64> {
    params.check_time("pi3_star", t)?;
    check_alpha(cfg.alpha)?;
    let denom = (1.0 - cfg.alpha) * params.sigma.at(t) * params.sigma_s.at(t);
    if denom == 0.0 {
        return Err(singular("pi3_star", "(1 - alpha) sigma sigma_S"));
    }
    Ok(pi3_numerator(params, cfg, t, r) / denom)
}

/// `pi3` from the pi3 row of the first-order system: the printed numerator
/// over `(1 - alpha) sigma^2`.
fn pi3_foc(params: &MarketParams, cfg: &PlanConfig, t: f64, r: f64) -> Result<f64> {
    let sigma = params.sigma.at(t);
    let denom = (1.0 - cfg.alpha) * sigma * sigma;
    if denom == 0.0 {
        return Err(singular("pi3 (first-order system)", "(1 - alpha) sigma^2"));
    }
    Ok(pi3_numerator(params, cfg, t, r) / denom)
}

/// Closed-form allocation in exposure coordinates. Defined on all of
/// `[0, T]`, including maturity.
pub fn optimal_exposures(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    phi_t: f64,
    variant: FormulaVariant,
) -> Result<Exposures> {
    let pi1 = pi1_star(params, cfg, t)?;
    let pi3 = match variant {
        FormulaVariant::FocOracle => pi3_foc(params, cfg, t, r)?,
        FormulaVariant::PaperVerbatim => pi3_star(params, cfg, t, r)?,
    };
    let sigma_i = params.sigma_i.at(t);
    let am1 = cfg.alpha - 1.0;
    let bracket = params.sigma_r * sigma_i * phi_t
        + params.mu_i.at(t)
        + am1 * sigma_i * (params.sigma_s.at(t) * pi3 - params.sigma1.at(t));
    let bond_exposure = match variant {
        FormulaVariant::FocOracle => bracket / (am1 * sigma_i),
        FormulaVariant::PaperVerbatim => {
            if params.xi == 0.0 {
                return Err(singular("pi2_star (paper form)", "xi"));
            }
            2.0 * bracket / (am1 * sigma_i * params.xi)
        }
    };
    Ok(Exposures {
        pi1,
        bond_exposure,
        pi3,
    })
}

/// `pi2*`: the bracket `sigma_r sigma_I phi + mu_I + (alpha - 1) sigma_I
/// (sigma_S pi3 - sigma1)` divided by `(alpha - 1) sigma_I b(t)`, with the
/// additional factor `2 / xi` in the printed variant. Diverges at maturity.
pub fn pi2_star(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    phi_t: f64,
    variant: FormulaVariant,
) -> Result<f64> {
    let exposures = optimal_exposures(params, cfg, t, r, phi_t, variant)?;
    let b = params.bond_exposure_unchecked(t);
    if b == 0.0 {
        return Err(singular(
            "pi2_star",
            format!("bond exposure at maturity t = {t}"),
        ));
    }
    Ok(exposures.bond_exposure / b)
}

/// Coefficients of the first-order conditions, already divided by `A1`,
/// as an affine map `residual(pi) = matrix * pi - rhs`. Rows are the
/// pi1, pi2 and pi3 conditions; the pi2 row is additionally divided by
/// `b(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocSystem {
    pub matrix: [[f64; 3]; 3],
    pub rhs: [f64; 3],
}

impl FocSystem {
    pub fn assemble(params: &MarketParams, cfg: &PlanConfig, t: f64, r: f64, phi_t: f64) -> Self {
        let am1 = cfg.alpha - 1.0;
        let b = params.bond_exposure_unchecked(t);
        let sigma_i = params.sigma_i.at(t);
        let sigma = params.sigma.at(t);
        let sigma_s = params.sigma_s.at(t);
        let sigma1 = params.sigma1.at(t);
        let sigma2 = params.sigma2.at(t);
        let mu_s = r + params.mu.at(t);
        FocSystem {
            matrix: [
                [0.0, -am1 * sigma_i * b, am1 * sigma_i * sigma_s],
                [-am1 * sigma_i, 0.0, 0.0],
                [am1 * sigma_s * sigma_i, 0.0, am1 * sigma * sigma],
            ],
            rhs: [
                -(params.mu_i.at(t) + sigma_i * params.sigma_r * phi_t - am1 * sigma_i * sigma1),
                -(params.xi + sigma1),
                -(mu_s - sigma_s * (sigma1 + sigma2) - am1 * sigma * sigma2),
            ],
        }
    }

    pub fn residual(&self, pi: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        std::array::from_fn(|i| m[i][0] * pi[0] + m[i][1] * pi[1] + m[i][2] * pi[2] - self.rhs[i])
    }

    /// Triangular solve: pivots are `m[1][0]`, `m[2][2]`, `m[0][1]`.
    pub fn solve(&self) -> Result<[f64; 3]> {
        let m = &self.matrix;
        let pivot = |value: f64, name: &str| {
            if value == 0.0 || !value.is_finite() {
                Err(singular("foc_solve", name.to_string()))
            } else {
                Ok(value)
            }
        };
        let pi1 = self.rhs[1] / pivot(m[1][0], "pi2-row pivot (alpha - 1) sigma_I")?;
        let pi3 =
            (self.rhs[2] - m[2][0] * pi1) / pivot(m[2][2], "pi3-row pivot (alpha - 1) sigma^2")?;
        let pi2 = (self.rhs[0] - m[0][2] * pi3)
            / pivot(
                m[0][1],
                "pi1-row pivot (alpha - 1) sigma_I b(t) (b vanishes at maturity)",
            )?;
        Ok([pi1, pi2, pi3])
    }
}

/// Solves the first-order conditions at `(t, r)` given `phi(t)`.
pub fn foc_solve(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    phi_t: f64,
) -> Result<StrategyVector> {
    params.check_time("foc_solve", t)?;
    check_alpha(cfg.alpha)?;
    let [pi1, pi2, pi3] = FocSystem::assemble(params, cfg, t, r, phi_t).solve()?;
    Ok(StrategyVector::new(pi1, pi2, pi3, cfg.kappa))
}

/// Optimal strategy under the chosen formula variant.
pub fn optimal_strategy(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    r: f64,
    phi_t: f64,
    variant: FormulaVariant,
) -> Result<StrategyVector> {
    match variant {
        FormulaVariant::FocOracle => foc_solve(params, cfg, t, r, phi_t),
        FormulaVariant::PaperVerbatim => {
            let pi1 = pi1_star(params, cfg, t)?;
            let pi2 = pi2_star(params, cfg, t, r, phi_t, variant)?;
            let pi3 = pi3_star(params, cfg, t, r)?;
            Ok(StrategyVector::new(pi1, pi2, pi3, cfg.kappa))
        }
    }
}

/// Strategy evaluated on delayed information: `observed` must be the path
/// state at `max(0, t - theta)`; only its rate enters.
pub fn strategy_at(
    params: &MarketParams,
    cfg: &PlanConfig,
    t: f64,
    observed: &PathState,
    phi_t: f64,
    variant: FormulaVariant,
) -> Result<StrategyVector> {
    optimal_strategy(params, cfg, t, observed.r, phi_t, variant)
}

/// A feedback rule mapping time and the (possibly delayed) observation to
/// an allocation.
pub trait Strategy: Sync {
    fn allocate(&self, t: f64, observed: &PathState) -> Result<StrategyVector>;
}

/// The closed-form optimal rule with a tabulated `phi`.
#[derive(Debug, Clone)]
pub struct OptimalStrategy {
    pub params: MarketParams,
    pub cfg: PlanConfig,
    pub variant: FormulaVariant,
    pub phi: crate::numerics::Table,
    /// Added to `pi2` after solving; non-zero only for fault injection.
    pub pi2_perturbation: f64,
}

impl OptimalStrategy {
    pub fn new(
        params: MarketParams,
        cfg: PlanConfig,
        variant: FormulaVariant,
        phi: crate::numerics::Table,
    ) -> Self {
        OptimalStrategy {
            params,
            cfg,
            variant,
            phi,
            pi2_perturbation: 0.0,
        }
    }
}

impl Strategy for OptimalStrategy {
    fn allocate(&self, t: f64, observed: &PathState) -> Result<StrategyVector> {
        let mut s = strategy_at(
            &self.params,
            &self.cfg,
            t,
            observed,
            self.phi.eval(t),
            self.variant,
        )?;
        if self.pi2_perturbation != 0.0 {
            s = StrategyVector::new(s.pi1, s.pi2 + self.pi2_perturbation, s.pi3, self.cfg.kappa);
        }
        Ok(s)
    }
}

/// Another rule with every proportion multiplied by `factor`.
pub struct Scaled<'a> {
    pub inner: &'a dyn Strategy,
    pub factor: f64,
    pub kappa: f64,
}

impl Strategy for Scaled<'_> {
    fn allocate(&self, t: f64, observed: &PathState) -> Result<StrategyVector> {
        Ok(self
            .inner
            .allocate(t, observed)?
            .scaled(self.factor, self.kappa))
    }
}

/// Fixed proportions; all zero is the all-safe rule.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMix(pub StrategyVector);

impl ConstantMix {
    pub fn all_safe(kappa: f64) -> Self {
        ConstantMix(StrategyVector::zero(kappa))
    }
}

impl Strategy for ConstantMix {
    fn allocate(&self, _t: f64, _observed: &PathState) -> Result<StrategyVector> {
        Ok(self.0)
    }
}
