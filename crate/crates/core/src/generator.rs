//! Stein operators from Markov generators.
//!
//! The coordinate-resampling chain on product spaces yields the normal
//! operator `-w f'(w) + f''(w)` up to an explicit remainder; the
//! immigration-death chain yields the Poisson operator. Poisson equations
//! on finite chains are solved by dense linear algebra.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::dist::{for_each_outcome, poisson_tail_after, FiniteRv, DEFAULT_OUTCOME_BUDGET};
use crate::error::{Error, Result};
use crate::functions::C2;

const ROW_SUM_TOL: f64 = 1e-12;
const MOMENT_TOL: f64 = 1e-10;
const TRUNCATION_TAIL: f64 = 1e-10;

/// Generator of a continuous-time Markov chain on finitely many states.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcGenerator {
    states: Vec<i64>,
    rates: DMatrix<f64>,
}

impl CtmcGenerator {
    pub fn new(states: Vec<i64>, rates: DMatrix<f64>) -> Result<Self> {
        let n = states.len();
        if n == 0 || rates.nrows() != n || rates.ncols() != n {
            return Err(Error::domain(format!(
                "{} states but a {}x{} rate matrix",
                n,
                rates.nrows(),
                rates.ncols()
            )));
        }
        for i in 0..n {
            let row = rates.row(i);
            if (0..n).any(|j| j != i && !(row[j] >= 0.0)) {
                return Err(Error::domain(format!("negative off-diagonal rate in row {i}")));
            }
            let scale = row.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if row.sum().abs() > ROW_SUM_TOL * scale {
                return Err(Error::domain(format!("row {i} sums to {}", row.sum())));
            }
        }
        Ok(CtmcGenerator { states, rates })
    }

    pub fn states(&self) -> &[i64] {
        &self.states
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `(Q f)(i) = sum_j Q[i, j] f(j)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        Ok((&self.rates * DVector::from_column_slice(f)).as_slice().to_vec())
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::domain(format!(
                "function has {} values for {} states",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Whether every state can reach every other through positive rates.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    let rate = if forward { self.rates[(i, j)] } else { self.rates[(j, i)] };
                    if j != i && rate > 0.0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Stationary law: `pi Q = 0`, `sum pi = 1`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        if !self.is_irreducible() {
            return Err(Error::precondition("generator is reducible"));
        }
        let n = self.len();
        let mut a = self.rates.transpose();
        a.row_mut(n - 1).fill(1.0);
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("stationary equations are singular".into()))?;
        Ok(pi.iter().map(|p| p.max(0.0)).collect())
    }
}

/// Two-state chain jumping `0 -> 1` at rate `alpha` and `1 -> 0` at rate `beta`.
pub fn two_state_chain(alpha: f64, beta: f64) -> Result<CtmcGenerator> {
    CtmcGenerator::new(vec![0, 1], DMatrix::from_row_slice(2, 2, &[-alpha, alpha, beta, -beta]))
}

/// Immigration-death generator on `{0, ..., n}`: immigration at rate
/// `lambda`, death at rate `w` from state `w`, no immigration out of `n`.
///
/// The stationary law of the truncated chain is `Po(lambda)` conditioned on
/// `{0, ..., n}`, so its distance from `Po(lambda)` is `P(Z > n)`. Requires
/// `n >= ceil(lambda) + 10 sqrt(lambda)` and `P(Z > n) <= 1e-10`; for small
/// rates the second condition is the binding one.
pub fn immigration_death_generator(lambda: f64, n: usize) -> Result<CtmcGenerator> {
    if !(lambda > 0.0 && lambda <= 700.0) {
        return Err(Error::domain(format!("immigration rate {lambda} outside (0, 700]")));
    }
    let needed = lambda.ceil() + 10.0 * lambda.sqrt();
    if (n as f64) < needed {
        return Err(Error::precondition(format!(
            "truncation level {n} below ceil(lambda) + 10 sqrt(lambda) = {needed}"
        )));
    }
    let mut p_n = (-lambda).exp();
    for k in 1..=n {
        p_n *= lambda / k as f64;
    }
    let tail = poisson_tail_after(lambda, n, p_n);
    if tail > TRUNCATION_TAIL {
        return Err(Error::precondition(format!(
            "Po({lambda}) mass {tail:e} above truncation level {n} exceeds {TRUNCATION_TAIL:e}"
        )));
    }
    truncated_immigration_death(lambda, n)
}

/// Smallest level accepted by [`immigration_death_generator`].
pub fn minimal_truncation(lambda: f64) -> usize {
    let mut n = (lambda.ceil() + 10.0 * lambda.sqrt()).ceil() as usize;
    while immigration_death_generator(lambda, n).is_err() && n < 10_000 {
        n += 1;
    }
    n
}

/// The same chain without the truncation-level requirement.
pub fn truncated_immigration_death(lambda: f64, n: usize) -> Result<CtmcGenerator> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("immigration rate {lambda} must be positive")));
    }
    let size = n + 1;
    let mut q = DMatrix::zeros(size, size);
    for w in 0..size {
        if w < n {
            q[(w, w + 1)] = lambda;
        }
        if w > 0 {
            q[(w, w - 1)] = w as f64;
        }
        q[(w, w)] = -(q.row(w).sum());
    }
    CtmcGenerator::new((0..=n as i64).collect(), q)
}

/// Solves `Q f = -(h - pi h)` with `pi f = 0`.
///
/// Since `pi (h - pi h) = 0`, this is the unique solution of
/// `(Q + 1 pi^T) f = -(h - pi h)`, which is nonsingular for irreducible `Q`.
pub fn solve_poisson_equation(q: &CtmcGenerator, h: &[f64]) -> Result<Vec<f64>> {
    q.check_len(h)?;
    let pi = q.stationary()?;
    let mean: f64 = pi.iter().zip(h).map(|(p, v)| p * v).sum();
    let n = q.len();
    let a = q.rates() + DMatrix::from_fn(n, n, |_, j| pi[j]);
    let b = DVector::from_iterator(n, h.iter().map(|v| mean - v));
    let f = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("Poisson equation is singular".into()))?;
    Ok(f.as_slice().to_vec())
}

/// The recurrent potential `-int_0^inf E[h(Z_t) - pi h | Z_0 = w] dt`,
/// which solves `Q f = h - pi h`; it is the negative of
/// [`solve_poisson_equation`].
pub fn recurrent_potential(q: &CtmcGenerator, h: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_poisson_equation(q, h)?.into_iter().map(|v| -v).collect())
}

/// `max_w |(Q f)(w) + h(w) - pi h|`.
pub fn poisson_equation_residual(q: &CtmcGenerator, f: &[f64], h: &[f64]) -> Result<f64> {
    q.check_len(h)?;
    let pi = q.stationary()?;
    let mean: f64 = pi.iter().zip(h).map(|(p, v)| p * v).sum();
    Ok(q.apply(f)?
        .iter()
        .zip(h)
        .map(|(qf, v)| (qf + v - mean).abs())
        .fold(0.0, f64::max))
}

/// `|sum_w pi(w) (Q f)(w)|`, which vanishes for the stationary law.
pub fn stationarity_check(q: &CtmcGenerator, f: &[f64]) -> Result<f64> {
    let pi = q.stationary()?;
    let qf = q.apply(f)?;
    Ok(pi.iter().zip(&qf).map(|(p, v)| p * v).sum::<f64>().abs())
}

/// Laws of the coordinates of the coordinate-resampling chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateChainSpec {
    coords: Vec<FiniteRv>,
}

impl CoordinateChainSpec {
    pub fn new(coords: Vec<FiniteRv>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("coordinate chain needs at least one coordinate"));
        }
        Ok(CoordinateChainSpec { coords })
    }

    pub fn coords(&self) -> &[FiniteRv] {
        &self.coords
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    fn check_configuration(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::domain(format!("configuration has {} coordinates, expected {}", z.len(), self.n())));
        }
        match z.iter().zip(&self.coords).position(|(&zi, x)| x.position(zi).is_none()) {
            Some(i) => Err(Error::domain(format!("z[{i}] = {} is not an atom of X_{i}", z[i]))),
            None => Ok(()),
        }
    }

    fn check_standardised(&self) -> Result<()> {
        if let Some(i) = self.coords.iter().position(|x| x.mean().abs() > MOMENT_TOL) {
            return Err(Error::precondition(format!("X_{i} is not centred")));
        }
        let var: f64 = self.coords.iter().map(|x| x.moment(2)).sum();
        if (var - 1.0).abs() > MOMENT_TOL {
            return Err(Error::precondition(format!("sum of E X_i^2 is {var}, not 1")));
        }
        Ok(())
    }
}

/// `(1/n) sum_i E{f(z + e_i (X_i - z_i)) - f(z)}`.
pub fn coordinate_generator_apply(
    spec: &CoordinateChainSpec,
    f: impl Fn(&[f64]) -> f64,
    z: &[f64],
) -> Result<f64> {
    spec.check_configuration(z)?;
    Ok(coordinate_generator_unchecked(spec, &f, z))
}

fn coordinate_generator_unchecked(spec: &CoordinateChainSpec, f: &impl Fn(&[f64]) -> f64, z: &[f64]) -> f64 {
    let base = f(z);
    let mut y = z.to_vec();
    let mut total = 0.0;
    for (i, x) in spec.coords.iter().enumerate() {
        for &(v, p) in x.atoms() {
            y[i] = v;
            total += p * (f(&y) - base);
        }
        y[i] = z[i];
    }
    total / spec.n() as f64
}

/// `E_pi[L~ f]` under the product law of the coordinates; zero by
/// stationarity.
pub fn coordinate_dynkin_check(spec: &CoordinateChainSpec, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for_each_outcome(&spec.coords, DEFAULT_OUTCOME_BUDGET, |z, p| {
        total += p * coordinate_generator_unchecked(spec, &f, z);
    })?;
    Ok(total.abs())
}

/// The three quantities of the second-order expansion of `n L~(f o g)(z)`
/// with `g(z) = sum z_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionTerms {
    /// `n L~(f o g)(z)`.
    pub lhs: f64,
    /// `E(f, g, z)`, the sum of second-order Taylor remainders.
    pub remainder: f64,
    /// `-g f'(g) + (1/2)(1 + sum z_i^2) f''(g) + E(f, g, z)`.
    pub rhs: f64,
}

fn taylor_remainder(spec: &CoordinateChainSpec, f: &impl C2, z: &[f64]) -> f64 {
    let g: f64 = z.iter().sum();
    let (f0, f1, f2) = (f.value(g), f.d1(g), f.d2(g));
    spec.coords
        .iter()
        .zip(z)
        .map(|(x, &zi)| x.expect(|v| {
            let d = v - zi;
            f.value(g + d) - f0 - d * f1 - 0.5 * d * d * f2
        }))
        .sum()
}

/// Expands `n L~(f o g)(z)` around `g(z)`. Needs centred coordinates with
/// `sum E X_i^2 = 1`, under which `lhs == rhs` exactly.
pub fn projection_expansion(spec: &CoordinateChainSpec, f: &impl C2, z: &[f64]) -> Result<ProjectionTerms> {
    spec.check_configuration(z)?;
    spec.check_standardised()?;
    let g: f64 = z.iter().sum();
    let lhs = spec.n() as f64 * coordinate_generator_unchecked(spec, &|y: &[f64]| f.value(y.iter().sum()), z);
    let remainder = taylor_remainder(spec, f, z);
    let sq: f64 = z.iter().map(|v| v * v).sum();
    let rhs = -g * f.d1(g) + 0.5 * (1.0 + sq) * f.d2(g) + remainder;
    Ok(ProjectionTerms { lhs, remainder, rhs })
}

/// Both sides of `-E Lf(W) = (1/2) E{(sum X_i^2 - 1) f''(W)} + E E(f, g, X)`
/// for `L f(w) = -w f'(w) + f''(w)`, by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn stein_identity_from_generator(rvs: &[FiniteRv], f: &impl C2) -> Result<IdentityResidual> {
    let spec = CoordinateChainSpec::new(rvs.to_vec())?;
    spec.check_standardised()?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for_each_outcome(rvs, DEFAULT_OUTCOME_BUDGET, |x, p| {
        let w: f64 = x.iter().sum();
        let sq: f64 = x.iter().map(|v| v * v).sum();
        lhs -= p * (-w * f.d1(w) + f.d2(w));
        rhs += p * (0.5 * (sq - 1.0) * f.d2(w) + taylor_remainder(&spec, f, x));
    })?;
    Ok(IdentityResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}
