//! Flat `key = value` run configuration.
//!
//! Every key has a default; a file only lists the keys it overrides. Lines
//! starting with `#` and blank lines are ignored, and a `#` after a value
//! starts a trailing comment.

use std::fmt::Write as _;
use std::path::Path;

use pension_dc::auxiliary::AuxSettings;
use pension_dc::wealth::WealthConvention;
use pension_dc::{
    Coefficient, FormulaVariant, MarketParams, MortalityConvention, MortalityLaw, PlanConfig,
    SimulationGrid,
};

use crate::error::CliError;

/// A rival allocation rule for `compare`.
#[derive(Debug, Clone, PartialEq)]
pub enum Rival {
    /// The candidate itself; its paired difference is identically zero.
    Identity,
    /// The candidate with `(pi1, pi2, pi3)` multiplied by a factor.
    Scale(f64),
    /// Zero risky exposure.
    AllSafe,
    /// The candidate's formulas with the other variant.
    OtherVariant,
    /// Fixed proportions `(pi1, pi2, pi3)`.
    Mix([f64; 3]),
}

impl Rival {
    pub fn label(&self) -> String {
        match self {
            Rival::Identity => "self".into(),
            Rival::Scale(f) => format!("scale:{f}"),
            Rival::AllSafe => "all_safe".into(),
            Rival::OtherVariant => "other_variant".into(),
            Rival::Mix([a, b, c]) => format!("mix:{a}:{b}:{c}"),
        }
    }

    fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        match parts.as_slice() {
            ["self"] => Ok(Rival::Identity),
            ["all_safe"] => Ok(Rival::AllSafe),
            ["other_variant"] => Ok(Rival::OtherVariant),
            ["scale", f] => Ok(Rival::Scale(number(f)?)),
            ["mix", a, b, c] => Ok(Rival::Mix([number(a)?, number(b)?, number(c)?])),
            _ => Err(format!(
                "unknown rival `{text}` (expected self, all_safe, other_variant, scale:F or mix:F:F:F)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    /// Paths for the Vasicek moment check.
    pub market_paths: usize,
    /// Paths per step size for the `A1` residual order check.
    pub bsde_paths: usize,
    /// Paths for the `A2` checks.
    pub a2_paths: usize,
    /// Added to `pi2` of the candidate; a negative control for the checks.
    pub inject_pi2_fault: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            market_paths: 100_000,
            bsde_paths: 1000,
            a2_paths: 10_000,
            inject_pi2_fault: 0.0,
        }
    }
}

/// The fully resolved configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketParams,
    pub mortality: MortalityLaw,
    /// Plan parameters; `alpha` is overwritten by each entry of `alphas`.
    pub plan: PlanConfig,
    pub alphas: Vec<f64>,
    pub variant: FormulaVariant,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub utility_floor: f64,
    pub wealth_convention: WealthConvention,
    pub report_every: usize,
    pub rivals: Vec<Rival>,
    pub aux: AuxSettings,
    pub verify: VerifySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            market: MarketParams::reference(),
            mortality: MortalityLaw::default(),
            plan: PlanConfig::default(),
            alphas: vec![-3.0, 0.5],
            variant: FormulaVariant::FocOracle,
            n_steps: 240,
            n_paths: 10_000,
            seed: 20_240_601,
            utility_floor: 1e-6,
            wealth_convention: WealthConvention::Displayed,
            report_every: 12,
            rivals: vec![
                Rival::Identity,
                Rival::Scale(0.5),
                Rival::Scale(0.9),
                Rival::Scale(1.1),
                Rival::Scale(1.5),
                Rival::AllSafe,
                Rival::OtherVariant,
            ],
            aux: AuxSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

/// Every recognised key in the order the resolved configuration is echoed.
/// `plan.alpha` is also accepted on input as a one-element `experiment.alphas`.
pub const KEYS: &[&str] = &[
    "market.a",
    "market.r_bar",
    "market.sigma_r",
    "market.r0",
    "market.xi",
    "market.mu_I",
    "market.sigma_I",
    "market.mu",
    "market.sigma",
    "market.sigma_S",
    "market.mu_ell",
    "market.sigma1",
    "market.sigma2",
    "market.ell0",
    "market.T",
    "mortality.tau",
    "mortality.t0",
    "mortality.epsilon",
    "mortality.convention",
    "plan.delta",
    "plan.kappa",
    "plan.theta",
    "plan.Y0",
    "experiment.alphas",
    "strategy.variant",
    "sim.n_steps",
    "sim.n_paths",
    "sim.seed",
    "sim.utility_floor",
    "sim.wealth_convention",
    "sim.report_every",
    "compare.rivals",
    "aux.intervals",
    "aux.quad_tol",
    "aux.fixed_point_tol",
    "aux.max_iterations",
    "aux.pilot_paths",
    "aux.pilot_steps",
    "aux.pilot_seed",
    "verify.market_paths",
    "verify.bsde_paths",
    "verify.a2_paths",
];

fn number(text: &str) -> Result<f64, String> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

fn count(text: &str) -> Result<usize, String> {
    text.trim()
        .parse()
        .map_err(|_| format!("`{text}` is not a non-negative integer"))
}

fn list(text: &str) -> Result<Vec<f64>, String> {
    let values = text.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(values)
}

/// `0.06` or a step function `0:0.06,10:0.07` (knot:value pairs).
fn coefficient(text: &str) -> Result<Coefficient, String> {
    if !text.contains(':') {
        return Ok(number(text)?.into());
    }
    let mut knots = Vec::new();
    let mut values = Vec::new();
    for pair in text.split(',') {
        let (k, v) = pair
            .split_once(':')
            .ok_or_else(|| format!("`{pair}` is not a knot:value pair"))?;
        knots.push(number(k)?);
        values.push(number(v)?);
    }
    Coefficient::steps(knots, values).map_err(|e| e.to_string())
}

fn render_coefficient(c: &Coefficient) -> String {
    match c {
        Coefficient::Constant(v) => format!("{v}"),
        Coefficient::Steps { knots, values } => knots
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(","),
    }
}

fn render_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn variant(text: &str) -> Result<FormulaVariant, String> {
    match text {
        "foc" => Ok(FormulaVariant::FocOracle),
        "paper" => Ok(FormulaVariant::PaperVerbatim),
        _ => Err(format!("unknown variant `{text}` (expected foc or paper)")),
    }
}

impl RunConfig {
    /// Assigns one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let m = &mut self.market;
        match key {
            "market.a" => m.a = number(value)?,
            "market.r_bar" => m.r_bar = number(value)?,
            "market.sigma_r" => m.sigma_r = number(value)?,
            "market.r0" => m.r0 = number(value)?,
            "market.xi" => m.xi = number(value)?,
            "market.mu_I" => m.mu_i = coefficient(value)?,
            "market.sigma_I" => m.sigma_i = coefficient(value)?,
            "market.mu" => m.mu = coefficient(value)?,
            "market.sigma" => m.sigma = coefficient(value)?,
            "market.sigma_S" => m.sigma_s = coefficient(value)?,
            "market.mu_ell" => m.mu_ell = coefficient(value)?,
            "market.sigma1" => m.sigma1 = coefficient(value)?,
            "market.sigma2" => m.sigma2 = coefficient(value)?,
            "market.ell0" => m.ell0 = number(value)?,
            "market.T" => m.horizon = number(value)?,
            "mortality.tau" => self.mortality.tau = number(value)?,
            "mortality.t0" => self.mortality.t0 = number(value)?,
            "mortality.epsilon" => {
                self.mortality.premium_return = match value {
                    "0" => false,
                    "1" => true,
                    _ => return Err(format!("`{value}` must be 0 or 1")),
                }
            }
            "mortality.convention" => {
                self.mortality.convention = match value {
                    "corrected" => MortalityConvention::Corrected,
                    "paper" => MortalityConvention::PaperVerbatim,
                    _ => {
                        return Err(format!(
                            "unknown convention `{value}` (expected corrected or paper)"
                        ))
                    }
                }
            }
            "plan.delta" => self.plan.delta = number(value)?,
            "plan.kappa" => self.plan.kappa = number(value)?,
            "plan.theta" => self.plan.theta = number(value)?,
            "plan.Y0" => self.plan.y0 = number(value)?,
            "plan.alpha" => self.alphas = vec![number(value)?],
            "experiment.alphas" => self.alphas = list(value)?,
            "strategy.variant" => self.variant = variant(value)?,
            "sim.n_steps" => self.n_steps = count(value)?,
            "sim.n_paths" => self.n_paths = count(value)?,
            "sim.seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a u64 seed"))?
            }
            "sim.utility_floor" => self.utility_floor = number(value)?,
            "sim.wealth_convention" => {
                self.wealth_convention = match value {
                    "displayed" => WealthConvention::Displayed,
                    "ito" => WealthConvention::ItoConsistent,
                    _ => {
                        return Err(format!(
                            "unknown convention `{value}` (expected displayed or ito)"
                        ))
                    }
                }
            }
            "sim.report_every" => self.report_every = count(value)?,
            "compare.rivals" => {
                self.rivals = value
                    .split(',')
                    .map(|r| Rival::parse(r.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "aux.intervals" => self.aux.intervals = count(value)?,
            "aux.quad_tol" => self.aux.quad_tol = number(value)?,
            "aux.fixed_point_tol" => self.aux.fixed_point_tol = number(value)?,
            "aux.max_iterations" => self.aux.max_iterations = count(value)?,
            "aux.pilot_paths" => self.aux.pilot_paths = count(value)?,
            "aux.pilot_steps" => self.aux.pilot_steps = count(value)?,
            "aux.pilot_seed" => {
                self.aux.pilot_seed = value
                    .parse()
                    .map_err(|_| format!("`{value}` is not a u64 seed"))?
            }
            "verify.market_paths" => self.verify.market_paths = count(value)?,
            "verify.bsde_paths" => self.verify.bsde_paths = count(value)?,
            "verify.a2_paths" => self.verify.a2_paths = count(value)?,
            "verify.inject_pi2_fault" => self.verify.inject_pi2_fault = number(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// The textual value of a key from [`KEYS`].
    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.market;
        let v = match key {
            "market.a" => format!("{}", m.a),
            "market.r_bar" => format!("{}", m.r_bar),
            "market.sigma_r" => format!("{}", m.sigma_r),
            "market.r0" => format!("{}", m.r0),
            "market.xi" => format!("{}", m.xi),
            "market.mu_I" => render_coefficient(&m.mu_i),
            "market.sigma_I" => render_coefficient(&m.sigma_i),
            "market.mu" => render_coefficient(&m.mu),
            "market.sigma" => render_coefficient(&m.sigma),
            "market.sigma_S" => render_coefficient(&m.sigma_s),
            "market.mu_ell" => render_coefficient(&m.mu_ell),
            "market.sigma1" => render_coefficient(&m.sigma1),
            "market.sigma2" => render_coefficient(&m.sigma2),
            "market.ell0" => format!("{}", m.ell0),
            "market.T" => format!("{}", m.horizon),
            "mortality.tau" => format!("{}", self.mortality.tau),
            "mortality.t0" => format!("{}", self.mortality.t0),
            "mortality.epsilon" => format!("{}", self.mortality.epsilon()),
            "mortality.convention" => match self.mortality.convention {
                MortalityConvention::Corrected => "corrected".into(),
                MortalityConvention::PaperVerbatim => "paper".into(),
            },
            "plan.delta" => format!("{}", self.plan.delta),
            "plan.kappa" => format!("{}", self.plan.kappa),
            "plan.theta" => format!("{}", self.plan.theta),
            "plan.Y0" => format!("{}", self.plan.y0),
            "experiment.alphas" => render_list(&self.alphas),
            "strategy.variant" => self.variant.label().into(),
            "sim.n_steps" => self.n_steps.to_string(),
            "sim.n_paths" => self.n_paths.to_string(),
            "sim.seed" => self.seed.to_string(),
            "sim.utility_floor" => format!("{}", self.utility_floor),
            "sim.wealth_convention" => match self.wealth_convention {
                WealthConvention::Displayed => "displayed".into(),
                WealthConvention::ItoConsistent => "ito".into(),
            },
            "sim.report_every" => self.report_every.to_string(),
            "compare.rivals" => self
                .rivals
                .iter()
                .map(Rival::label)
                .collect::<Vec<_>>()
                .join(","),
            "aux.intervals" => self.aux.intervals.to_string(),
            "aux.quad_tol" => format!("{:e}", self.aux.quad_tol),
            "aux.fixed_point_tol" => format!("{:e}", self.aux.fixed_point_tol),
            "aux.max_iterations" => self.aux.max_iterations.to_string(),
            "aux.pilot_paths" => self.aux.pilot_paths.to_string(),
            "aux.pilot_steps" => self.aux.pilot_steps.to_string(),
            "aux.pilot_seed" => self.aux.pilot_seed.to_string(),
            "verify.market_paths" => self.verify.market_paths.to_string(),
            "verify.bsde_paths" => self.verify.bsde_paths.to_string(),
            "verify.a2_paths" => self.verify.a2_paths.to_string(),
            "verify.inject_pi2_fault" => format!("{}", self.verify.inject_pi2_fault),
            _ => return None,
        };
        Some(v)
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
                line: Some(line),
                key: content.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let slot = if key == "plan.alpha" {
                "experiment.alphas"
            } else {
                key
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == slot) {
                return Err(CliError::Config {
                    line: Some(line),
                    key: key.into(),
                    message: format!("already set on line {first}"),
                });
            }
            cfg.set(key, value).map_err(|message| CliError::Config {
                line: Some(line),
                key: key.into(),
                message,
            })?;
            if let Some(k) = KEYS
                .iter()
                .chain(["verify.inject_pi2_fault"].iter())
                .find(|k| **k == slot)
            {
                seen.push((k, line));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            line: None,
            key: path.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?;
        RunConfig::parse(&text)
    }

    /// Applies a command-line override.
    pub fn override_key(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        self.set(key, value).map_err(|message| CliError::Config {
            line: None,
            key: key.into(),
            message,
        })
    }

    /// Checks the model parameters for every configured `alpha`.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |key: &str, message: String| CliError::Config {
            line: None,
            key: key.into(),
            message,
        };
        self.market
            .validate()
            .map_err(|e| invalid("market", e.to_string()))?;
        self.mortality
            .validate(self.market.horizon)
            .map_err(|e| invalid("mortality", e.to_string()))?;
        for &alpha in &self.alphas {
            self.plan
                .with_alpha(alpha)
                .validate()
                .map_err(|e| invalid("experiment.alphas", e.to_string()))?;
        }
        self.grid()
            .map_err(|e| invalid("sim.n_steps", e.to_string()))?;
        if self.n_paths == 0 {
            return Err(invalid("sim.n_paths", "need at least one path".into()));
        }
        if self.utility_floor.is_nan() || self.utility_floor <= 0.0 {
            return Err(invalid(
                "sim.utility_floor",
                "floor wealth must be positive".into(),
            ));
        }
        if self.rivals.is_empty() {
            return Err(invalid("compare.rivals", "need at least one rival".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> pension_dc::Result<SimulationGrid> {
        SimulationGrid::new(self.market.horizon, self.n_steps)
    }

    /// The resolved configuration in [`KEYS`] order, one `key = value` per
    /// line; the fault hook is echoed only when set.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        if self.verify.inject_pi2_fault != 0.0 {
            let _ = writeln!(
                out,
                "verify.inject_pi2_fault = {}",
                self.verify.inject_pi2_fault
            );
        }
        out
    }
}
