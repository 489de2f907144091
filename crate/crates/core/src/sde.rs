//! Seeded Brownian drivers and time stepping of the market state
//! `(r, I, S, ell)`.
//!
//! The short rate moves by its exact Ornstein-Uhlenbeck transition. The
//! inflation index, stock and salary take log-Euler steps with `r` frozen at
//! the left end of each step. `W_r` and the rate transition share one normal
//! draw per step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{argument, Result};
use crate::market::{decay_integral, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    horizon: f64,
    n_steps: usize,
}

impl SimulationGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(argument("n_steps", "grid needs at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(argument(
                "horizon",
                format!("must be positive, got {horizon}"),
            ));
        }
        Ok(SimulationGrid { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Grid point `t_k`; `time(n_steps)` is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Number of whole steps covered by a lag of `theta` years.
    pub fn lag_steps(&self, theta: f64) -> usize {
        if theta <= 0.0 {
            return 0;
        }
        ((theta / self.dt()) + 1e-9).floor() as usize
    }

    /// Grid with twice as many steps.
    pub fn refined(&self) -> Self {
        SimulationGrid {
            horizon: self.horizon,
            n_steps: self.n_steps * 2,
        }
    }
}

/// Brownian increments over one step, in the order `(W_r, W_I, W_S)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Increments {
    pub dw_r: f64,
    pub dw_i: f64,
    pub dw_s: f64,
}

impl Increments {
    pub fn scaled(&self, k: f64) -> Self {
        Increments {
            dw_r: self.dw_r * k,
            dw_i: self.dw_i * k,
            dw_s: self.dw_s * k,
        }
    }
}

/// One time point of a simulated path. The increments are those of the step
/// that led into this state (zero at `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub r: f64,
    pub inflation: f64,
    pub stock: f64,
    pub salary: f64,
    /// Relative wealth, when a wealth process is attached to the path.
    pub wealth: Option<f64>,
    pub dw: Increments,
}

impl PathState {
    pub fn initial(params: &MarketParams) -> Self {
        PathState {
            t: 0.0,
            r: params.r0,
            inflation: 1.0,
            stock: 1.0,
            salary: params.ell0,
            wealth: None,
            dw: Increments::default(),
        }
    }
}

/// Identifies the random stream of one path. The stream is a pure function
/// of `(master_seed, path_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPolicy {
    pub master_seed: u64,
    pub path_index: u64,
}

impl RngPolicy {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        RngPolicy {
            master_seed,
            path_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.path_index);
        rng
    }
}

/// Exact Ornstein-Uhlenbeck transition of the short rate over `dt`.
#[inline]
pub fn step_rate_exact(params: &MarketParams, r: f64, dt: f64, z: f64) -> f64 {
    let decay = (-params.a * dt).exp();
    let sd = params.sigma_r * decay_integral(2.0 * params.a, dt).sqrt();
    r * decay + params.r_bar * (1.0 - decay) + sd * z
}

/// Log-Euler step `x exp((drift - sum sigma^2 / 2) dt + sum sigma dW)` for a
/// geometric factor; `vols` holds `(volatility, increment)` pairs.
pub fn step_lognormal(x: f64, drift: f64, dt: f64, vols: &[(f64, f64)]) -> Result<f64> {
    if !(x > 0.0) {
        return Err(argument(
            "x",
            format!("lognormal factor must be positive, got {x}"),
        ));
    }
    Ok(lognormal_unchecked(x, drift, dt, vols))
}

#[inline]
fn lognormal_unchecked(x: f64, drift: f64, dt: f64, vols: &[(f64, f64)]) -> f64 {
    let (var, shock) = vols.iter().fold((0.0, 0.0), |(v, s), &(sig, dw)| {
        (v + sig * sig, s + sig * dw)
    });
    x * ((drift - 0.5 * var) * dt + shock).exp()
}

/// Step-by-step generator of one market path.
pub struct MarketStepper<'a> {
    params: &'a MarketParams,
    grid: SimulationGrid,
    rng: ChaCha8Rng,
    state: PathState,
    k: usize,
}

impl<'a> MarketStepper<'a> {
    pub fn new(params: &'a MarketParams, grid: SimulationGrid, policy: RngPolicy) -> Self {
        MarketStepper {
            params,
            grid,
            rng: policy.rng(),
            state: PathState::initial(params),
            k: 0,
        }
    }

    pub fn state(&self) -> &PathState {
        &self.state
    }

    /// Draws the next increments and advances the market; `None` at the
    /// horizon. The returned state carries the increments just used.
    pub fn advance(&mut self) -> Option<PathState> {
        if self.k == self.grid.n_steps() {
            return None;
        }
        let sqrt_dt = self.grid.dt().sqrt();
        let z_r: f64 = StandardNormal.sample(&mut self.rng);
        let z_i: f64 = StandardNormal.sample(&mut self.rng);
        let z_s: f64 = StandardNormal.sample(&mut self.rng);
        let dw = Increments {
            dw_r: sqrt_dt * z_r,
            dw_i: sqrt_dt * z_i,
            dw_s: sqrt_dt * z_s,
        };
        self.advance_with(dw)
    }

    /// Advances with externally supplied increments instead of the path's own
    /// stream. Used to couple grids of different resolution.
    pub fn advance_with(&mut self, dw: Increments) -> Option<PathState> {
        if self.k == self.grid.n_steps() {
            return None;
        }
        let dt = self.grid.dt();
        let z_r = dw.dw_r / dt.sqrt();
        let p = self.params;
        let s = &self.state;
        let t = s.t;
        let r = s.r;
        let inflation =
            lognormal_unchecked(s.inflation, p.mu_i.at(t), dt, &[(p.sigma_i.at(t), dw.dw_i)]);
        let stock = lognormal_unchecked(
            s.stock,
            r + p.mu.at(t),
            dt,
            &[(p.sigma.at(t), dw.dw_s), (p.sigma_s.at(t), dw.dw_r)],
        );
        let salary = lognormal_unchecked(
            s.salary,
            p.mu_ell.at(t) + r,
            dt,
            &[(p.sigma1.at(t), dw.dw_r), (p.sigma2.at(t), dw.dw_s)],
        );
        self.k += 1;
        self.state = PathState {
            t: self.grid.time(self.k),
            r: step_rate_exact(p, r, dt, z_r),
            inflation,
            stock,
            salary,
            wealth: None,
            dw,
        };
        Some(self.state)
    }
}

impl Iterator for MarketStepper<'_> {
    type Item = PathState;

    fn next(&mut self) -> Option<PathState> {
        self.advance()
    }
}

/// Generates the `n_steps + 1` states of one market path.
pub fn generate_path(
    params: &MarketParams,
    grid: SimulationGrid,
    policy: RngPolicy,
) -> Vec<PathState> {
    let mut stepper = MarketStepper::new(params, grid, policy);
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    out.push(*stepper.state());
    out.extend(&mut stepper);
    out
}
