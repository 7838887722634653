//! Stein operators for densities on the real line and the exact solution of
//! the normal Stein equation on a grid.
//!
//! For a density `p` with score `psi = p'/p`, the operator
//! `f -> f' + psi f` has mean zero under `p`. Its equation
//! `f' + psi f = h - E h(Z)` is solved by
//! `f(x) p(x) = int_{-inf}^x (h - E h(Z)) p`, or equivalently by minus the
//! integral over `(x, inf)`. Both are evaluated in density-weighted form,
//! cell by cell, so that `1/p` is never formed away from the current cell.

use std::fmt;
use std::sync::Arc;

use crate::dist::gauss_legendre;
use crate::error::{Error, Result};
use crate::functions::{TestFunction, C1};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Log-density drop (in nats) beyond which the far tails are ignored.
const TAIL_DROP: f64 = 40.0;
const MAX_EXTENSION_CELLS: usize = 2_000_000;

/// A (possibly unnormalised) density described by its log-density and its
/// score `psi = p'/p`, on an open interval.
#[derive(Clone)]
pub struct DensitySpec {
    log_density: RealFn,
    psi: RealFn,
    support: (f64, f64),
    standard_normal: bool,
}

impl DensitySpec {
    pub fn new(
        log_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Result<Self> {
        if !(support.0 < support.1) {
            return Err(Error::domain(format!("empty support {support:?}")));
        }
        Ok(DensitySpec {
            log_density: Arc::new(log_density),
            psi: Arc::new(psi),
            support,
            standard_normal: false,
        })
    }

    /// `N(0,1)`, with `psi(x) = -x`.
    pub fn standard_normal() -> Self {
        const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
        DensitySpec {
            log_density: Arc::new(|x| -0.5 * x * x - LN_SQRT_2PI),
            psi: Arc::new(|x| -x),
            support: (f64::NEG_INFINITY, f64::INFINITY),
            standard_normal: true,
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        (self.log_density)(x)
    }

    pub fn psi(&self, x: f64) -> f64 {
        (self.psi)(x)
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn is_standard_normal(&self) -> bool {
        self.standard_normal
    }

    fn in_interior(&self, x: f64) -> bool {
        self.support.0 < x && x < self.support.1
    }
}

impl fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensitySpec")
            .field("support", &self.support)
            .field("standard_normal", &self.standard_normal)
            .finish_non_exhaustive()
    }
}

/// Equally spaced evaluation grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain(format!("invalid grid [{lo}, {hi}] step {step}")));
        }
        Ok(Grid { lo, hi, step })
    }

    /// The grid used for normal residual checks: `[-8, 8]` with step `1e-3`.
    pub fn standard() -> Self {
        Grid {
            lo: -8.0,
            hi: 8.0,
            step: 1e-3,
        }
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `i`-th grid point; `i` may be negative or beyond the end.
    pub fn point(&self, i: i64) -> f64 {
        self.lo + i as f64 * self.step
    }
}

/// Values of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid function has non-finite values"));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.point(i as i64)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `f'(x) + psi(x) f(x)` for a general density.
pub fn general_stein_apply(d: &DensitySpec, f: f64, fprime: f64, x: f64) -> Result<f64> {
    if !d.in_interior(x) {
        return Err(Error::domain(format!("{x} is outside the support {:?}", d.support)));
    }
    Ok(fprime + d.psi(x) * f)
}

/// The normal Stein operator `f'(w) - w f(w)`.
pub fn normal_stein_apply(f: f64, fprime: f64, w: f64) -> f64 {
    fprime - w * f
}

/// The Ornstein-Uhlenbeck generator `-w f'(w) + f''(w)`.
pub fn ou_generator_apply(fprime: f64, fsecond: f64, w: f64) -> f64 {
    -w * fprime + fsecond
}

/// Lyapounov bound `(3/2) sum E|X_i|^3 ||f_h''||` for sums of independent
/// centred summands with unit total variance.
pub fn lyapounov_bound(moments3: &[f64], f2norm: f64) -> Result<f64> {
    if let Some(m) = moments3.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::domain(format!("third absolute moment {m} is negative")));
    }
    if !(f2norm >= 0.0) {
        return Err(Error::domain(format!("norm {f2norm} is negative")));
    }
    Ok(1.5 * moments3.iter().sum::<f64>() * f2norm)
}

/// Which integral representation a one-sided solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `f(x) p(x) = int_{-inf}^x (h - Eh) p`.
    FromLeft,
    /// `f(x) p(x) = -int_x^inf (h - Eh) p`.
    FromRight,
}

/// Tabulated solution of `f' + psi f = h - E h(Z)`.
#[derive(Debug, Clone)]
pub struct NormalSteinSolution {
    f: GridFunction,
    fprime: GridFunction,
    mean_h: f64,
    h: TestFunction,
    density: DensitySpec,
}

impl NormalSteinSolution {
    pub fn f(&self) -> &GridFunction {
        &self.f
    }

    /// `f'` on the grid, read off the equation: `h - Eh - psi f`.
    pub fn fprime(&self) -> &GridFunction {
        &self.fprime
    }

    /// The value of `E h(Z)` used to centre `h`.
    pub fn mean_h(&self) -> f64 {
        self.mean_h
    }

    pub fn grid(&self) -> &Grid {
        self.f.grid()
    }

    pub fn sup_norm(&self) -> f64 {
        self.f.sup_norm()
    }

    pub fn derivative_norm(&self) -> f64 {
        self.fprime.sup_norm()
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let g = self.grid();
        lo >= g.lo && hi <= g.point(g.len() as i64 - 1)
    }

    /// Cubic Hermite interpolation of `f` between grid points, using the
    /// tabulated derivative. Returns NaN off the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let g = *self.grid();
        let last = g.len() - 1;
        let pos = (x - g.lo) / g.step;
        if !(pos >= -1e-9 && pos <= last as f64 + 1e-9) {
            return f64::NAN;
        }
        let i = (pos.floor().max(0.0) as usize).min(last.saturating_sub(1));
        let t = pos - i as f64;
        let (y0, y1) = (self.f.values[i], self.f.values[i + 1]);
        let (d0, d1) = (self.fprime.values[i] * g.step, self.fprime.values[i + 1] * g.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1
    }
}

impl C1 for NormalSteinSolution {
    fn value(&self, x: f64) -> f64 {
        self.interpolate(x)
    }

    /// `f'(x) = h(x) - Eh - psi(x) f(x)`; exact given `f(x)`, including the
    /// one-sided values at jumps of `h`.
    fn d1(&self, x: f64) -> f64 {
        self.h.eval(x) - self.mean_h - self.density.psi(x) * self.interpolate(x)
    }
}

/// Nodes `grid.lo + k step` for `k` in `first..=last`, extended beyond the grid
/// until the log-density has dropped by `TAIL_DROP` or the support ends.
struct Sweep<'a> {
    h: &'a TestFunction,
    density: &'a DensitySpec,
    grid: Grid,
    first: i64,
    last: i64,
}

impl<'a> Sweep<'a> {
    fn new(h: &'a TestFunction, density: &'a DensitySpec, grid: Grid) -> Result<Self> {
        let n = grid.len() as i64;
        let (s0, s1) = density.support();
        if !(grid.lo > s0 && grid.point(n - 1) < s1) {
            return Err(Error::domain("grid is not inside the open support"));
        }
        let extend = |dir: i64, edge: i64| -> Result<i64> {
            let base = density.log_density(grid.point(edge));
            let mut k = edge;
            for _ in 0..MAX_EXTENSION_CELLS {
                let next = grid.point(k + dir);
                if next <= s0 || next >= s1 {
                    return Ok(k);
                }
                k += dir;
                if base - density.log_density(next) >= TAIL_DROP {
                    return Ok(k);
                }
            }
            Err(Error::domain("density tails decay too slowly to truncate"))
        };
        Ok(Sweep {
            h,
            density,
            grid,
            first: extend(-1, 0)?,
            last: extend(1, n - 1)?,
        })
    }

    fn x(&self, k: i64) -> f64 {
        self.grid.point(k)
    }

    /// `int_a^b g(t) e^{log p(t) - log p(reference)} dt`, split at jumps of `h`.
    fn cell_integral(&self, a: f64, b: f64, reference: f64, g: impl Fn(f64) -> f64) -> f64 {
        let lp_ref = self.density.log_density(reference);
        let integrand = |t: f64| g(t) * (self.density.log_density(t) - lp_ref).exp();
        let mut total = 0.0;
        let mut from = a;
        for &j in self.h.jumps().iter().filter(|&&j| a < j && j < b) {
            total += gauss_legendre(from, j, integrand);
            from = j;
        }
        total + gauss_legendre(from, b, integrand)
    }

    /// `E h(Z)` by cellwise quadrature over the extended range.
    fn mean_h(&self) -> Result<f64> {
        let mode = (self.first..=self.last)
            .map(|k| self.density.log_density(self.x(k)))
            .fold(f64::NEG_INFINITY, f64::max);
        let weight = |t: f64| (self.density.log_density(t) - mode).exp();
        let mut num = 0.0;
        let mut abs = 0.0;
        let mut den = 0.0;
        for k in self.first..self.last {
            let (a, b) = (self.x(k), self.x(k + 1));
            let mut from = a;
            let mut pieces: Vec<(f64, f64)> = Vec::new();
            for &j in self.h.jumps().iter().filter(|&&j| a < j && j < b) {
                pieces.push((from, j));
                from = j;
            }
            pieces.push((from, b));
            for (u, v) in pieces {
                num += gauss_legendre(u, v, |t| self.h.eval(t) * weight(t));
                abs += gauss_legendre(u, v, |t| self.h.eval(t).abs() * weight(t));
                den += gauss_legendre(u, v, weight);
            }
        }
        if !(abs.is_finite() && den > 0.0) {
            return Err(Error::domain("test function is not integrable"));
        }
        Ok(num / den)
    }

    /// One-sided sweep; returns values at grid indices `0..grid.len()`.
    fn sweep(&self, mean_h: f64, direction: Direction) -> Vec<f64> {
        let g = |t: f64| self.h.eval(t) - mean_h;
        let n = self.grid.len() as i64;
        let mut out = vec![0.0; n as usize];
        let lp = |k: i64| self.density.log_density(self.x(k));
        let mut store = |k: i64, v: f64| {
            if (0..n).contains(&k) {
                out[k as usize] = v;
            }
        };
        let mut f = 0.0;
        match direction {
            Direction::FromLeft => {
                store(self.first, f);
                for k in self.first..self.last {
                    let ratio = (lp(k) - lp(k + 1)).exp();
                    let f_next = if ratio == 0.0 { 0.0 } else { f * ratio };
                    f = f_next + self.cell_integral(self.x(k), self.x(k + 1), self.x(k + 1), g);
                    store(k + 1, f);
                }
            }
            Direction::FromRight => {
                store(self.last, f);
                for k in (self.first..self.last).rev() {
                    let ratio = (lp(k + 1) - lp(k)).exp();
                    let f_next = if ratio == 0.0 { 0.0 } else { f * ratio };
                    f = f_next - self.cell_integral(self.x(k), self.x(k + 1), self.x(k), g);
                    store(k, f);
                }
            }
        }
        out
    }

    fn resolve_mean(&self) -> Result<f64> {
        match (self.density.is_standard_normal(), self.h.normal_mean()) {
            (true, Some(m)) => Ok(m),
            _ => self.mean_h(),
        }
    }
}

fn finish(
    h: &TestFunction,
    density: &DensitySpec,
    grid: Grid,
    mean_h: f64,
    values: Vec<f64>,
) -> Result<NormalSteinSolution> {
    let fprime: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let x = grid.point(i as i64);
            h.eval(x) - mean_h - density.psi(x) * f
        })
        .collect();
    Ok(NormalSteinSolution {
        f: GridFunction::new(grid, values)?,
        fprime: GridFunction::new(grid, fprime)?,
        mean_h,
        h: h.clone(),
        density: density.clone(),
    })
}

/// Solves `f' + psi f = h - E h(Z)` on `grid`.
///
/// Points up to the mode of the density (on the grid) use the left-tail
/// integral, points beyond it the right-tail integral, so both sweeps run
/// towards the centre where `1/p` stays moderate. `E h(Z)` comes from the
/// test function when it is known in closed form for the standard normal,
/// and from cellwise Gauss-Legendre quadrature otherwise.
pub fn solve_stein_normal(
    h: &TestFunction,
    density: &DensitySpec,
    grid: &Grid,
) -> Result<NormalSteinSolution> {
    let sweep = Sweep::new(h, density, *grid)?;
    let mean_h = sweep.resolve_mean()?;
    let left = sweep.sweep(mean_h, Direction::FromLeft);
    let right = sweep.sweep(mean_h, Direction::FromRight);
    let mode = (0..grid.len())
        .max_by(|&i, &j| {
            density
                .log_density(grid.point(i as i64))
                .total_cmp(&density.log_density(grid.point(j as i64)))
        })
        .unwrap_or(0);
    let values = left[..=mode]
        .iter()
        .chain(&right[mode + 1..])
        .copied()
        .collect();
    finish(h, density, *grid, mean_h, values)
}

/// Solves with a single integral representation over the whole grid. Only
/// accurate on the side where the sweep is contracting; used to check that
/// the two representations agree.
pub fn solve_stein_normal_one_sided(
    h: &TestFunction,
    density: &DensitySpec,
    grid: &Grid,
    direction: Direction,
) -> Result<NormalSteinSolution> {
    let sweep = Sweep::new(h, density, *grid)?;
    let mean_h = sweep.resolve_mean()?;
    let values = sweep.sweep(mean_h, direction);
    finish(h, density, *grid, mean_h, values)
}

/// Largest residual of the Stein equation on the grid when `f'` is taken
/// from finite differences of the tabulated `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub at: f64,
    pub points: usize,
}

/// Checks `f' + psi f = h - Eh` with fourth-order finite differences.
///
/// Central stencils are used where they avoid the jumps of `h`, otherwise
/// one-sided ones on the jump-free side. The four points nearest each end of
/// the grid and any point within half a step of a jump are skipped.
pub fn finite_difference_residual(sol: &NormalSteinSolution) -> ResidualReport {
    let grid = *sol.grid();
    let n = grid.len();
    let f = sol.f.values();
    let step = grid.step;
    let jumps = sol.h.jumps();
    let clean = |a: usize, b: usize| {
        let (xa, xb) = (grid.point(a as i64), grid.point(b as i64));
        !jumps.iter().any(|&j| xa < j && j < xb)
    };
    let mut report = ResidualReport {
        max_abs: 0.0,
        at: f64::NAN,
        points: 0,
    };
    for i in 4..n.saturating_sub(4) {
        let x = grid.point(i as i64);
        if jumps.iter().any(|&j| (x - j).abs() < 0.5 * step) {
            continue;
        }
        let derivative = if clean(i - 2, i + 2) {
            (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * step)
        } else if clean(i, i + 4) {
            (-25.0 * f[i] + 48.0 * f[i + 1] - 36.0 * f[i + 2] + 16.0 * f[i + 3] - 3.0 * f[i + 4])
                / (12.0 * step)
        } else if clean(i - 4, i) {
            (25.0 * f[i] - 48.0 * f[i - 1] + 36.0 * f[i - 2] - 16.0 * f[i - 3] + 3.0 * f[i - 4])
                / (12.0 * step)
        } else {
            continue;
        };
        let r = (derivative + sol.density.psi(x) * f[i] - (sol.h.eval(x) - sol.mean_h)).abs();
        report.points += 1;
        if r > report.max_abs {
            report.max_abs = r;
            report.at = x;
        }
    }
    report
}
