//! Quadrature, a backward Runge-Kutta integrator and tabulated functions.

use crate::error::{argument, ModelError, Result};

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    if !value.is_finite() {
        return Err(ModelError::Numeric {
            what: "adaptive_simpson",
            detail: format!("non-finite integral on [{a}, {b}]"),
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 || !delta.is_finite() {
        return Err(ModelError::Numeric {
            what: "adaptive_simpson",
            detail: format!("no convergence on [{a}, {b}], last error estimate {delta:e}"),
        });
    }
    Ok(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Composite trapezoid rule with `n` panels.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

/// A function sampled on a uniform grid over `[start, end]`, evaluated by
/// linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl Table {
    pub fn from_values(start: f64, end: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(end > start) {
            return Err(argument(
                "table",
                "need at least two samples on a non-empty interval",
            ));
        }
        let step = (end - start) / (values.len() - 1) as f64;
        Ok(Table {
            start,
            step,
            values,
        })
    }

    pub fn tabulate<F: FnMut(f64) -> f64>(
        start: f64,
        end: f64,
        intervals: usize,
        mut f: F,
    ) -> Result<Self> {
        let step = (end - start) / intervals as f64;
        let values = (0..=intervals)
            .map(|i| f(start + i as f64 * step))
            .collect();
        Self::from_values(start, end, values)
    }

    pub fn constant(start: f64, end: f64, value: f64) -> Self {
        Table {
            start,
            step: end - start,
            values: vec![value, value],
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.start + i as f64 * self.step, *v))
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let x = (t - self.start) / self.step;
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        let i = x.floor() as usize;
        if i >= last {
            return self.values[last];
        }
        let w = x - i as f64;
        let (lo, hi) = (self.values[i], self.values[i + 1]);
        // Exact at nodes, so terminal values survive interpolation unchanged.
        if w == 0.0 {
            lo
        } else {
            lo + w * (hi - lo)
        }
    }
}

/// Integrates `y' = f(t, y)` backward from `y(end) = terminal` to `start`
/// with classical fourth-order Runge-Kutta on `steps` equal steps. Returns
/// the solution tabulated on the same grid.
pub fn rk4_backward<F: Fn(f64, f64) -> f64>(
    f: F,
    start: f64,
    end: f64,
    terminal: f64,
    steps: usize,
) -> Result<Table> {
    if steps == 0 {
        return Err(argument("steps", "need at least one step"));
    }
    let h = (end - start) / steps as f64;
    if !(h.abs() > f64::EPSILON * end.abs().max(1.0)) {
        return Err(ModelError::Numeric {
            what: "rk4_backward",
            detail: format!("step size {h:e} underflows"),
        });
    }
    let mut values = vec![0.0; steps + 1];
    values[steps] = terminal;
    let mut y = terminal;
    for i in (0..steps).rev() {
        let t = start + (i + 1) as f64 * h;
        // Stepping with -h from t to t - h.
        let k1 = f(t, y);
        let k2 = f(t - 0.5 * h, y - 0.5 * h * k1);
        let k3 = f(t - 0.5 * h, y - 0.5 * h * k2);
        let k4 = f(t - h, y - h * k3);
        y -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Err(ModelError::Numeric {
                what: "rk4_backward",
                detail: format!("solution diverged near t = {}", t - h),
            });
        }
        values[i] = y;
    }
    Table::from_values(start, end, values)
}

/// Neumaier-compensated sum; deterministic for a fixed input order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
        return (values[0], 0.0);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// Linear-interpolation quantile (type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
