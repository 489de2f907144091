//! De Moivre mortality and the inputs of the premium-return clause.

use crate::error::{argument, domain, Result};

/// Which De Moivre hazard to use.
///
/// `Corrected` is the standard law `1 / (tau - t0 - t)` whose survival
/// ratio is `(tau - t0 - s) / (tau - t0 - t)`. `PaperVerbatim` keeps the
/// printed hazard `1 / (tau + t0 - t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MortalityConvention {
    PaperVerbatim,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MortalityLaw {
    /// Maximum-age parameter.
    pub tau: f64,
    /// Entry age.
    pub t0: f64,
    /// Premium-return clause switch (`epsilon = 1` when set).
    pub premium_return: bool,
    pub convention: MortalityConvention,
}

impl Default for MortalityLaw {
    fn default() -> Self {
        MortalityLaw {
            tau: 105.0,
            t0: 25.0,
            premium_return: true,
            convention: MortalityConvention::Corrected,
        }
    }
}

impl MortalityLaw {
    pub fn epsilon(&self) -> f64 {
        if self.premium_return {
            1.0
        } else {
            0.0
        }
    }

    /// Remaining-lifetime constant `c` such that the hazard is `1 / (c - t)`.
    fn exhaustion_time(&self) -> f64 {
        match self.convention {
            MortalityConvention::Corrected => self.tau - self.t0,
            MortalityConvention::PaperVerbatim => self.tau + self.t0,
        }
    }

    fn bound_name(&self) -> &'static str {
        match self.convention {
            MortalityConvention::Corrected => "t < tau - t0",
            MortalityConvention::PaperVerbatim => "t < tau + t0",
        }
    }

    /// Checks the law is finite on `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(domain(
                "mortality law",
                format!("entry age t0 must be positive, got {}", self.t0),
            ));
        }
        if !(self.exhaustion_time() > horizon) {
            return Err(domain(
                "mortality law",
                format!(
                    "hazard unbounded before the horizon: need {} for all t <= {horizon}",
                    self.bound_name()
                ),
            ));
        }
        Ok(())
    }

    fn remaining(&self, what: &'static str, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(domain(what, format!("t = {t} must be non-negative")));
        }
        let left = self.exhaustion_time() - t;
        if !(left > 0.0) {
            return Err(domain(
                what,
                format!("t = {t} violates {}", self.bound_name()),
            ));
        }
        Ok(left)
    }

    /// Force of mortality `beta(t)` at time `t` after entry.
    pub fn force_of_mortality(&self, t: f64) -> Result<f64> {
        Ok(1.0 / self.remaining("force_of_mortality", t)?)
    }

    /// `exp(-int_t^s beta(u) du)` for `t <= s`.
    pub fn survival_probability(&self, t: f64, s: f64) -> Result<f64> {
        if s < t {
            return Err(argument("s", format!("s = {s} precedes t = {t}")));
        }
        let from = self.remaining("survival_probability", t)?;
        let to = self.remaining("survival_probability", s)?;
        Ok(to / from)
    }

    /// Expected number of the `m0` entrants still alive at `t`.
    pub fn expected_survivors(&self, m0: f64, t: f64) -> Result<f64> {
        if !(m0 >= 0.0) {
            return Err(argument("m0", "member count must be non-negative"));
        }
        Ok(m0 * self.survival_probability(0.0, t)?)
    }

    /// Contribution multiplier `1 - epsilon * t * beta(t)` of the clause.
    pub fn contribution_factor(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.epsilon() * t * self.force_of_mortality(t)?)
    }
}
