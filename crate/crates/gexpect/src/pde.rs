//! Finite-difference solver for the one-dimensional nonlinear heat equation
//! `du/dt = g(d2u/dx2)` with `g(a) = (sigma_high_sq * a+ - sigma_low_sq * a-) / 2`.
//!
//! The explicit scheme marches the terminal payoff backward in time-to-go:
//! `u <- u + dt * g(second difference / dx^2)`. It is monotone — hence
//! convergent to the viscosity solution — exactly when
//! `dt * sigma_high_sq / dx^2 <= 1`, which construction and every solve
//! enforce. The boundary copies itself forward (zero second difference),
//! which is harmless as long as the domain keeps the stated eight standard
//! deviations of padding around the origin.

use crate::error::{Error, Result};
use crate::payoff::{CylinderFn, PathState, Payoff};
use crate::volatility::GCoefficients;

/// A uniform space/time grid for the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    dx: f64,
    dt: f64,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, dx: f64, dt: f64) -> Result<Self> {
        if !(x_min < 0.0 && 0.0 < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid(
                "domain must be finite and contain the origin strictly".into(),
            ));
        }
        if !(dx > 0.0) || !dx.is_finite() || !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidGrid("dx and dt must be positive".into()));
        }
        let span = (x_max - x_min) / dx;
        if (span - span.round()).abs() > 1e-9 || span.round() < 8.0 {
            return Err(Error::InvalidGrid(
                "dx must divide the domain into at least eight intervals".into(),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            dx,
            dt,
        })
    }

    /// Grid whose time step saturates the monotonicity bound:
    /// `dt = dx^2 / sigma_high_sq`.
    pub fn cfl_tight(coef: GCoefficients, x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if coef.sigma_high_sq() <= 0.0 {
            return Err(Error::InvalidGrid(
                "a CFL-tight step needs sigma_high_sq > 0".into(),
            ));
        }
        Self::new(x_min, x_max, dx, dx * dx / coef.sigma_high_sq())
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_points(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| self.x(j)).collect()
    }

    /// `dt * sigma_high_sq / dx^2`; the scheme is monotone iff this is <= 1.
    pub fn cfl_number(&self, coef: GCoefficients) -> f64 {
        self.dt * coef.sigma_high_sq() / (self.dx * self.dx)
    }

    fn check_cfl(&self, coef: GCoefficients) -> Result<()> {
        let lambda = self.cfl_number(coef);
        if lambda > 1.0 + 1e-12 {
            return Err(Error::CflViolation(lambda));
        }
        Ok(())
    }

    fn check_width(&self, coef: GCoefficients, t: f64) -> Result<()> {
        let required = 8.0 * coef.sigma_high() * t.sqrt();
        let half_width = (-self.x_min).min(self.x_max);
        if half_width < required {
            return Err(Error::DomainTooNarrow {
                half_width,
                required,
            });
        }
        Ok(())
    }
}

/// A function sampled on the spatial grid.
#[derive(Debug, Clone)]
pub struct Field1D {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl Field1D {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation, clamped to the domain.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.values[0];
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let dx = self.xs[1] - self.xs[0];
        let j = (((x - self.xs[0]) / dx).floor() as usize).min(n - 2);
        let w = (x - self.xs[j]) / dx;
        (1.0 - w) * self.values[j] + w * self.values[j + 1]
    }
}

/// Advances `u` by `duration` of time-to-go, in `ceil(duration / grid.dt)`
/// equal steps.
fn march(
    coef: GCoefficients,
    grid: &Grid1D,
    u: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    duration: f64,
) -> Result<()> {
    grid.check_cfl(coef)?;
    if duration <= 0.0 {
        return Ok(());
    }
    let steps = (duration / grid.dt - 1e-12).ceil().max(1.0) as usize;
    let dt_eff = duration / steps as f64;
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    let n = u.len();
    scratch.resize(n, 0.0);
    for _ in 0..steps {
        scratch[0] = u[0];
        scratch[n - 1] = u[n - 1];
        for j in 1..n - 1 {
            let d2 = (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_dx2;
            scratch[j] = u[j] + dt_eff * coef.g(d2);
        }
        std::mem::swap(u, scratch);
    }
    Ok(())
}

fn terminal_slice(p: &Payoff, grid: &Grid1D) -> Result<Vec<f64>> {
    if !p.position_only() {
        return Err(Error::InvalidPayoff(
            "the solver evaluates terminal-position payoffs only".into(),
        ));
    }
    (0..grid.n_points())
        .map(|j| p.eval(&PathState::position(grid.x(j))))
        .collect()
}

/// Solves the terminal value problem over horizon `t` and returns the whole
/// value function at time-to-go `t`.
pub fn solve_g_heat(coef: GCoefficients, p: &Payoff, t: f64, grid: &Grid1D) -> Result<Field1D> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter("horizon must be nonnegative".into()));
    }
    grid.check_width(coef, t)?;
    let mut values = terminal_slice(p, grid)?;
    let mut scratch = Vec::new();
    march(coef, grid, &mut values, &mut scratch, t)?;
    Ok(Field1D {
        xs: grid.points(),
        values,
    })
}

/// Worst-case expectation of `p` under the band at horizon `t`: the solution
/// evaluated at the origin.
pub fn expect_gnormal(coef: GCoefficients, p: &Payoff, t: f64, grid: &Grid1D) -> Result<f64> {
    Ok(solve_g_heat(coef, p, t, grid)?.value_at(0.0))
}

/// Worst-case expectation of a cylinder payoff `func(x(t_1), ..., x(t_k))`
/// by nested solves: the stage over `[t_{j-1}, t_j]` turns a `j`-coordinate
/// tensor into a `(j-1)`-coordinate one, evaluating each marched slice at its
/// anchor grid node so no interpolation enters. Cost grows as
/// `n_points^(k-1)` slices per stage; keep the grid coarse for `k = 3`.
pub fn expect_cylinder(
    coef: GCoefficients,
    times: &[f64],
    func: CylinderFn,
    grid: &Grid1D,
) -> Result<f64> {
    Payoff::cylinder(times.to_vec(), func)?;
    let k = times.len();
    let last = *times.last().expect("validated nonempty");
    grid.check_width(coef, last)?;
    grid.check_cfl(coef)?;

    let pts = grid.points();
    let p_count = pts.len();
    let mut w = vec![0.0f64; p_count.pow(k as u32)];
    let mut coords = vec![0.0f64; k];
    for (idx, slot) in w.iter_mut().enumerate() {
        let mut rest = idx;
        for j in (0..k).rev() {
            coords[j] = pts[rest % p_count];
            rest /= p_count;
        }
        *slot = func.eval(&coords);
    }

    let mut scratch = Vec::new();
    let mut slice = vec![0.0f64; p_count];
    for j in (1..=k).rev() {
        let tau = times[j - 1] - if j >= 2 { times[j - 2] } else { 0.0 };
        if j == 1 {
            march(coef, grid, &mut w, &mut scratch, tau)?;
            let field = Field1D {
                xs: pts,
                values: w,
            };
            return Ok(field.value_at(0.0));
        }
        let tuples = p_count.pow((j - 1) as u32);
        let mut next = vec![0.0f64; tuples];
        for (idx, slot) in next.iter_mut().enumerate() {
            slice.copy_from_slice(&w[idx * p_count..(idx + 1) * p_count]);
            march(coef, grid, &mut slice, &mut scratch, tau)?;
            *slot = slice[idx % p_count];
        }
        w = next;
    }
    unreachable!("the stage loop returns at j = 1")
}
