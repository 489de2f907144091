//! Coefficients of the four-factor market: Vasicek short rate, zero-coupon
//! bond, inflation index / inflation-linked bond, stock and salary.
//!
//! The bond is described through its SDE
//!
//! ```text
//! dP/P = (r + xi * b(t)) dt - b(t) dW_r,     b(t) = (sigma_r / a) (1 - e^{-a (T - t)})
//! ```
//!
//! and is never priced from the pathwise exponential of the integrated rate.

use crate::error::{argument, domain, Result};

/// Slack allowed when checking that a time lies in `[0, T]`.
const TIME_EPS: f64 = 1e-12;

/// A deterministic coefficient: either constant or a right-continuous step
/// function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// `values[i]` applies on `[knots[i], knots[i + 1])`; the last value
    /// extends to infinity. `knots[0]` must be `0`.
    Steps {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Coefficient {
    pub fn steps(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(argument(
                "steps",
                "knots and values must be non-empty and of equal length",
            ));
        }
        if knots[0] != 0.0 {
            return Err(argument("steps", "first knot must be 0"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(argument("steps", "knots must be strictly increasing"));
        }
        if values.iter().chain(knots.iter()).any(|v| !v.is_finite()) {
            return Err(argument("steps", "knots and values must be finite"));
        }
        Ok(Coefficient::Steps { knots, values })
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(v) => *v,
            Coefficient::Steps { knots, values } => {
                let idx = knots.partition_point(|&k| k <= t);
                values[idx.saturating_sub(1)]
            }
        }
    }

    /// Smallest value taken on `[0, horizon]`.
    pub fn min_on(&self, horizon: f64) -> f64 {
        match self {
            Coefficient::Constant(v) => *v,
            Coefficient::Steps { knots, values } => knots
                .iter()
                .zip(values)
                .filter(|(k, _)| **k <= horizon)
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

impl From<f64> for Coefficient {
    fn from(v: f64) -> Self {
        Coefficient::Constant(v)
    }
}

/// All market coefficients.
///
/// Fields hold raw values; [`MarketParams::validate`] enforces the positivity
/// requirements of the closed-form strategies. Degenerate markets (zero
/// volatilities) can still be built for limit checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    /// Mean-reversion speed of the short rate.
    pub a: f64,
    /// Long-run mean of the short rate.
    pub r_bar: f64,
    pub sigma_r: f64,
    pub r0: f64,
    /// Market price of interest-rate risk in the bond drift.
    pub xi: f64,
    pub mu_i: Coefficient,
    pub sigma_i: Coefficient,
    /// Stock excess return: the stock drift is `r + mu`.
    pub mu: Coefficient,
    /// Stock loading on `W_S`.
    pub sigma: Coefficient,
    /// Stock loading on `W_r`.
    pub sigma_s: Coefficient,
    pub mu_ell: Coefficient,
    /// Salary loading on `W_r`.
    pub sigma1: Coefficient,
    /// Salary loading on `W_S`.
    pub sigma2: Coefficient,
    pub ell0: f64,
    pub horizon: f64,
}

impl MarketParams {
    /// The numerical example used throughout: a 20-year horizon with the
    /// coefficients of the reference parameter table.
    pub fn reference() -> Self {
        MarketParams {
            a: 0.2,
            r_bar: 0.05,
            sigma_r: 0.02,
            r0: 0.03,
            xi: 0.15,
            mu_i: (-0.01).into(),
            sigma_i: 0.015.into(),
            mu: 0.06.into(),
            sigma: 0.19.into(),
            sigma_s: 0.06.into(),
            mu_ell: 0.01.into(),
            sigma1: 0.014.into(),
            sigma2: 0.171.into(),
            ell0: 100.0,
            horizon: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("sigma_r", self.sigma_r),
            ("T", self.horizon),
            ("ell0", self.ell0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(
                    "market parameters",
                    format!("{name} must be positive, got {v}"),
                ));
            }
        }
        for (name, v) in [("r_bar", self.r_bar), ("r0", self.r0), ("xi", self.xi)] {
            if !v.is_finite() {
                return Err(domain(
                    "market parameters",
                    format!("{name} must be finite"),
                ));
            }
        }
        let vols = [
            ("sigma_I", &self.sigma_i),
            ("sigma", &self.sigma),
            ("sigma_S", &self.sigma_s),
        ];
        for (name, c) in vols {
            let m = c.min_on(self.horizon);
            if !(m > 0.0) {
                return Err(domain(
                    "market parameters",
                    format!("{name} must be positive on [0, T], minimum is {m}"),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn check_time(&self, what: &'static str, t: f64) -> Result<()> {
        if !(t >= -TIME_EPS && t <= self.horizon + TIME_EPS) {
            return Err(domain(
                what,
                format!("t = {t} outside [0, {}]", self.horizon),
            ));
        }
        Ok(())
    }

    /// `E[r(t)] = r_bar + (r0 - r_bar) e^{-a t}`.
    pub fn vasicek_mean(&self, t: f64) -> Result<f64> {
        self.check_time("vasicek_mean", t)?;
        Ok(self.rate_mean_unchecked(t))
    }

    #[inline]
    pub(crate) fn rate_mean_unchecked(&self, t: f64) -> f64 {
        self.r_bar + (self.r0 - self.r_bar) * (-self.a * t).exp()
    }

    /// `Var[r(t)] = sigma_r^2 (1 - e^{-2 a t}) / (2 a)`, with the Brownian
    /// limit `sigma_r^2 t` as `a -> 0`.
    pub fn vasicek_variance(&self, t: f64) -> Result<f64> {
        self.check_time("vasicek_variance", t)?;
        Ok(self.sigma_r * self.sigma_r * decay_integral(2.0 * self.a, t))
    }

    /// Volatility loading `(sigma_r / a)(1 - e^{-a (T - t)})` of the
    /// zero-coupon bond on `W_r`.
    pub fn bond_exposure(&self, t: f64) -> Result<f64> {
        self.check_time("bond_exposure", t)?;
        Ok(self.bond_exposure_unchecked(t))
    }

    #[inline]
    pub(crate) fn bond_exposure_unchecked(&self, t: f64) -> f64 {
        let tau = (self.horizon - t).max(0.0);
        self.sigma_r * decay_integral(self.a, tau)
    }

    /// Drift and volatility coefficients of every traded factor at `(t, r)`.
    pub fn coefficients_at(&self, t: f64, r: f64) -> Result<CoefficientSet> {
        self.check_time("coefficients_at", t)?;
        if !r.is_finite() {
            return Err(argument("r", "rate must be finite"));
        }
        let b = self.bond_exposure_unchecked(t);
        Ok(CoefficientSet {
            bond_drift: r + self.xi * b,
            bond_vol_r: -b,
            inflation_bond_drift: r + self.mu_i.at(t),
            inflation_bond_vol_i: self.sigma_i.at(t),
            stock_drift: r + self.mu.at(t),
            stock_vol_s: self.sigma.at(t),
            stock_vol_r: self.sigma_s.at(t),
            salary_drift: self.mu_ell.at(t) + r,
            salary_vol_r: self.sigma1.at(t),
            salary_vol_s: self.sigma2.at(t),
        })
    }
}

/// `(1 - e^{-k x}) / k`, continuous at `k = 0`.
#[inline]
pub(crate) fn decay_integral(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        x
    } else {
        -(-k * x).exp_m1() / k
    }
}

/// Instantaneous coefficients of the traded assets and the salary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub bond_drift: f64,
    pub bond_vol_r: f64,
    pub inflation_bond_drift: f64,
    pub inflation_bond_vol_i: f64,
    pub stock_drift: f64,
    pub stock_vol_s: f64,
    pub stock_vol_r: f64,
    pub salary_drift: f64,
    pub salary_vol_r: f64,
    pub salary_vol_s: f64,
}
