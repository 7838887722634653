//! Poisson process approximation on a finite ground space `U = {0, ..., n-1}`.
//!
//! Counting measures are count vectors indexed by site. Laws live on boxes
//! `{0..=cap_0} x ... x {0..=cap_{n-1}}` with any remaining mass recorded as a
//! tail. `PP(lambda)` is the equilibrium of the spatial immigration-death
//! process with immigration intensity `lambda` and unit per capita death rate.

use nalgebra::{DMatrix, DVector};

use crate::certificate::{BoundCertificate, ChainCheck, Scale};
use crate::dist::{compensated_sum, poisson_tail_after, DistanceInterval, MASS_TOL};
use crate::error::{Error, Result};
use crate::generator::IdentityResidual;
use crate::stein_poisson::{BernoulliEnsemble, MAX_ENUMERATED};

pub type CountingMeasure = Vec<u32>;

/// Largest configuration space any routine here will enumerate.
pub const MAX_STATES: usize = 1_000_000;
/// Aggregate tail allowed when truncating a Poisson process law.
pub const PROCESS_TAIL_TOL: f64 = 1e-10;
/// Site count up to which the independent-indicator identity is enumerated.
pub const MAX_IDENTITY_SITES: usize = 12;
/// Above this many states the Stein equation is solved by the series form.
pub const DENSE_LIMIT: usize = 1500;

/// The box of counting measures with `xi_u <= cap_u`, indexed with site 0
/// varying fastest. With all caps equal to 1 the index is the bit mask of
/// the configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigSpace {
    caps: Vec<u32>,
    strides: Vec<usize>,
    len: usize,
}

impl ConfigSpace {
    pub fn new(caps: Vec<u32>) -> Result<Self> {
        let mut strides = Vec::with_capacity(caps.len());
        let mut len = 1usize;
        for &c in &caps {
            strides.push(len);
            len = len
                .checked_mul(c as usize + 1)
                .filter(|&l| l <= MAX_STATES)
                .ok_or_else(|| Error::resource(format!("configuration space exceeds {MAX_STATES} states")))?;
        }
        Ok(ConfigSpace { caps, strides, len })
    }

    pub fn uniform(sites: usize, cap: u32) -> Result<Self> {
        ConfigSpace::new(vec![cap; sites])
    }

    pub fn sites(&self) -> usize {
        self.caps.len()
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, xi: &[u32]) -> bool {
        xi.len() == self.caps.len() && xi.iter().zip(&self.caps).all(|(x, c)| x <= c)
    }

    pub fn index(&self, xi: &[u32]) -> Option<usize> {
        self.contains(xi)
            .then(|| xi.iter().zip(&self.strides).map(|(&x, s)| x as usize * s).sum())
    }

    pub fn config(&self, mut index: usize) -> CountingMeasure {
        self.caps
            .iter()
            .map(|&c| {
                let x = index % (c as usize + 1);
                index /= c as usize + 1;
                x as u32
            })
            .collect()
    }

    /// Visits every configuration in index order.
    pub fn for_each(&self, mut visit: impl FnMut(usize, &[u32])) {
        let mut xi = vec![0u32; self.sites()];
        for idx in 0..self.len {
            visit(idx, &xi);
            for (x, &c) in xi.iter_mut().zip(&self.caps) {
                if *x < c {
                    *x += 1;
                    break;
                }
                *x = 0;
            }
        }
    }

    /// No birth leaves the box from `xi`.
    fn is_interior(&self, xi: &[u32]) -> bool {
        xi.iter().zip(&self.caps).all(|(x, c)| x < c)
    }
}

/// Law of a point process on the sites, stored on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessLaw {
    space: ConfigSpace,
    pmf: Vec<f64>,
    tail_mass: f64,
}

impl ProcessLaw {
    pub fn new(space: ConfigSpace, pmf: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if pmf.len() != space.len() {
            return Err(Error::domain(format!(
                "{} probabilities for {} configurations",
                pmf.len(),
                space.len()
            )));
        }
        if pmf.iter().chain([&tail_mass]).any(|q| !(*q >= 0.0)) {
            return Err(Error::domain("probabilities must be nonnegative"));
        }
        let total = compensated_sum(pmf.iter().copied()) + tail_mass;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!("process law has mass {total}")));
        }
        Ok(ProcessLaw { space, pmf, tail_mass })
    }

    pub fn site_count(&self) -> usize {
        self.space.sites()
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Stored probability of `xi`; zero outside the box.
    pub fn prob(&self, xi: &[u32]) -> f64 {
        self.space.index(xi).map_or(0.0, |i| self.pmf[i])
    }

    pub fn expect(&self, f: impl Fn(&[u32]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.space.for_each(|i, xi| {
            if self.pmf[i] != 0.0 {
                acc += self.pmf[i] * f(xi);
            }
        });
        acc
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        Some(q) => Err(Error::domain(format!("probability {q} outside [0,1]"))),
        None => Ok(()),
    }
}

fn check_intensities(lambda: &[f64]) -> Result<()> {
    match lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        Some(l) => Err(Error::domain(format!("intensity {l} must be finite and nonnegative"))),
        None => Ok(()),
    }
}

/// `Xi = sum_i X_i delta_i` for independent `X_i ~ Be(p_i)`.
pub fn bernoulli_process_law(p: &[f64]) -> Result<ProcessLaw> {
    check_probabilities(p)?;
    if p.len() > MAX_ENUMERATED {
        return Err(Error::resource(format!(
            "{} sites exceed the enumeration cap {MAX_ENUMERATED}",
            p.len()
        )));
    }
    let space = ConfigSpace::uniform(p.len(), 1)?;
    let pmf = (0..space.len())
        .map(|mask| {
            p.iter()
                .enumerate()
                .map(|(i, &q)| if mask >> i & 1 == 1 { q } else { 1.0 - q })
                .product()
        })
        .collect();
    ProcessLaw::new(space, pmf, 0.0)
}

/// Law of `sum_i X_i delta_i` under the joint law of the ensemble.
pub fn ensemble_process_law(e: &BernoulliEnsemble) -> Result<ProcessLaw> {
    let joint = e
        .joint()
        .ok_or_else(|| Error::precondition("process law needs the joint law"))?;
    ProcessLaw::new(ConfigSpace::uniform(e.n(), 1)?, joint.to_vec(), 0.0)
}

/// `Po(lambda)` weights on `{0..=cap}` and `P(Po(lambda) > cap)`.
fn site_poisson(lambda: f64, cap: u32) -> (Vec<f64>, f64) {
    let mut w = vec![(-lambda).exp()];
    for k in 1..=cap {
        let next = w[k as usize - 1] * lambda / k as f64;
        w.push(next);
    }
    let tail = if lambda == 0.0 {
        0.0
    } else if cap as f64 + 1.0 > lambda {
        poisson_tail_after(lambda, cap as usize, w[cap as usize])
    } else {
        (1.0 - w.iter().sum::<f64>()).max(0.0)
    };
    (w, tail)
}

/// `1 - prod (1 - t_u)` without cancellation.
fn union_tail(tails: impl Iterator<Item = f64>) -> f64 {
    -tails.map(|t| (-t).ln_1p()).sum::<f64>().exp_m1()
}

/// Independent `Po(lambda_u)` counts truncated at `cap` on every site.
pub fn product_poisson_law(lambda: &[f64], cap: u32) -> Result<ProcessLaw> {
    check_intensities(lambda)?;
    let sites: Vec<(Vec<f64>, f64)> = lambda.iter().map(|&l| site_poisson(l, cap)).collect();
    let tail = union_tail(sites.iter().map(|s| s.1));
    if tail > PROCESS_TAIL_TOL {
        return Err(Error::precondition(format!(
            "cap {cap} leaves tail mass {tail:e} above {PROCESS_TAIL_TOL:e}"
        )));
    }
    let space = ConfigSpace::uniform(lambda.len(), cap)?;
    let mut pmf = vec![0.0; space.len()];
    space.for_each(|i, xi| {
        pmf[i] = xi.iter().zip(&sites).map(|(&x, s)| s.0[x as usize]).product();
    });
    ProcessLaw::new(space, pmf, tail)
}

/// Smallest uniform cap whose aggregate tail is at most `eps`.
pub fn minimal_cap(lambda: &[f64], eps: f64) -> Result<u32> {
    check_intensities(lambda)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("tail tolerance {eps} outside (0,1)")));
    }
    (0..=u32::from(u16::MAX))
        .find(|&cap| union_tail(lambda.iter().map(|&l| site_poisson(l, cap).1)) <= eps)
        .ok_or_else(|| Error::resource("no cap reaches the requested tail"))
}

/// `d_TV` between two stored process laws, bracketed for their tails.
pub fn process_tv(p: &ProcessLaw, q: &ProcessLaw) -> Result<DistanceInterval> {
    if p.site_count() != q.site_count() {
        return Err(Error::domain(format!(
            "laws on {} and {} sites",
            p.site_count(),
            q.site_count()
        )));
    }
    if p == q {
        return Ok(DistanceInterval::zero());
    }
    let caps = p.space.caps().iter().zip(q.space.caps()).map(|(a, b)| *a.max(b)).collect();
    let union = ConfigSpace::new(caps)?;
    let mut diffs = Vec::with_capacity(union.len());
    union.for_each(|_, xi| diffs.push((p.prob(xi) - q.prob(xi)).abs()));
    let stored = 0.5 * compensated_sum(diffs);
    let slack = 0.5 * (p.tail_mass + q.tail_mass);
    let hi = (stored + slack).min(1.0);
    Ok(DistanceInterval::new((stored - slack).clamp(0.0, hi), hi))
}

/// `d_TV(law, PP(lambda))`, using the exact Poisson mass off the box of `law`:
/// `(1/2) [sum_box |P - Q| + Q(outside the box)]`.
pub fn poisson_process_tv(law: &ProcessLaw, lambda: &[f64]) -> Result<DistanceInterval> {
    check_intensities(lambda)?;
    if law.site_count() != lambda.len() {
        return Err(Error::domain(format!(
            "law on {} sites, intensity on {}",
            law.site_count(),
            lambda.len()
        )));
    }
    let sites: Vec<(Vec<f64>, f64)> = lambda
        .iter()
        .zip(law.space.caps())
        .map(|(&l, &c)| site_poisson(l, c))
        .collect();
    let mut diffs = Vec::with_capacity(law.space.len());
    law.space.for_each(|i, xi| {
        let q: f64 = xi.iter().zip(&sites).map(|(&x, s)| s.0[x as usize]).product();
        diffs.push((law.pmf[i] - q).abs());
    });
    let outside = union_tail(sites.iter().map(|s| s.1));
    let stored = 0.5 * (compensated_sum(diffs) + outside);
    let slack = 0.5 * law.tail_mass;
    let hi = (stored + slack).min(1.0);
    Ok(DistanceInterval::new((stored - slack).clamp(0.0, hi), hi))
}

/// `Lf(xi) = sum_u lambda_u {f(xi + delta_u) - f(xi)} + sum_u xi_u {f(xi - delta_u) - f(xi)}`.
///
/// `f` returns `None` off its domain; a needed neighbour there is an error.
pub fn spatial_generator_apply(
    f: impl Fn(&[u32]) -> Option<f64>,
    xi: &[u32],
    lambda: &[f64],
) -> Result<f64> {
    if xi.len() != lambda.len() {
        return Err(Error::domain(format!(
            "measure on {} sites, intensity on {}",
            xi.len(),
            lambda.len()
        )));
    }
    let missing = |eta: &[u32]| Error::domain(format!("f is not defined at {eta:?}"));
    let here = f(xi).ok_or_else(|| missing(xi))?;
    let mut eta = xi.to_vec();
    let mut acc = 0.0;
    for u in 0..xi.len() {
        if lambda[u] != 0.0 {
            eta[u] += 1;
            acc += lambda[u] * (f(&eta).ok_or_else(|| missing(&eta))? - here);
            eta[u] -= 1;
        }
        if xi[u] > 0 {
            eta[u] -= 1;
            acc += xi[u] as f64 * (f(&eta).ok_or_else(|| missing(&eta))? - here);
            eta[u] += 1;
        }
    }
    Ok(acc)
}

/// The immigration-death generator on the box, with births blocked at the caps.
fn truncated_apply(space: &ConfigSpace, lambda: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; space.len()];
    space.for_each(|i, xi| {
        let mut acc = 0.0;
        for u in 0..xi.len() {
            let s = space.strides[u];
            if xi[u] < space.caps[u] {
                acc += lambda[u] * (f[i + s] - f[i]);
            }
            if xi[u] > 0 {
                acc += xi[u] as f64 * (f[i - s] - f[i]);
            }
        }
        out[i] = acc;
    });
    out
}

fn exit_rate(space: &ConfigSpace, lambda: &[f64], xi: &[u32]) -> f64 {
    xi.iter()
        .zip(lambda)
        .zip(&space.caps)
        .map(|((&x, &l), &c)| x as f64 + if x < c { l } else { 0.0 })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense LU below `DENSE_LIMIT` states, the series form above.
    Auto,
    Dense,
    /// `f = -(1/R) sum_k K^k (h - pi h)` with `K = I + L/R` (uniformization of
    /// the recurrent potential).
    Series,
}

/// Solution of `Lf = h - E h(Pi)` on a box, normalised by `E f(Pi) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSteinSolution {
    space: ConfigSpace,
    values: Vec<f64>,
    mean_h: f64,
    interior_residual: f64,
}

impl ProcessSteinSolution {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, xi: &[u32]) -> Option<f64> {
        self.space.index(xi).map(|i| self.values[i])
    }

    /// `E h` under the truncated product Poisson law.
    pub fn mean_h(&self) -> f64 {
        self.mean_h
    }

    /// `max |Lf - (h - E h)|` over states with no birth leaving the box.
    pub fn interior_residual(&self) -> f64 {
        self.interior_residual
    }

    /// `sup |f(xi + 2 delta_u) - 2 f(xi + delta_u) + f(xi)|` over the box.
    pub fn second_difference_sup(&self) -> f64 {
        let mut sup = 0.0f64;
        self.space.for_each(|i, xi| {
            for u in 0..xi.len() {
                if xi[u] + 2 <= self.space.caps[u] {
                    let s = self.space.strides[u];
                    let d = self.values[i + 2 * s] - 2.0 * self.values[i + s] + self.values[i];
                    sup = sup.max(d.abs());
                }
            }
        });
        sup
    }
}

pub fn solve_process_stein(
    h: impl Fn(&[u32]) -> f64,
    lambda: &[f64],
    cap: u32,
) -> Result<ProcessSteinSolution> {
    solve_process_stein_with(h, lambda, cap, SolveMethod::Auto)
}

pub fn solve_process_stein_with(
    h: impl Fn(&[u32]) -> f64,
    lambda: &[f64],
    cap: u32,
    method: SolveMethod,
) -> Result<ProcessSteinSolution> {
    let law = product_poisson_law(lambda, cap)?;
    let space = law.space.clone();
    let mass = compensated_sum(law.pmf.iter().copied());
    let pi: Vec<f64> = law.pmf.iter().map(|q| q / mass).collect();
    let mut hv = vec![0.0; space.len()];
    space.for_each(|i, xi| hv[i] = h(xi));
    let mean_h: f64 = pi.iter().zip(&hv).map(|(a, b)| a * b).sum();
    let g: Vec<f64> = hv.iter().map(|v| v - mean_h).collect();

    let method = match method {
        SolveMethod::Auto if space.len() <= DENSE_LIMIT => SolveMethod::Dense,
        SolveMethod::Auto => SolveMethod::Series,
        m => m,
    };
    let mut values = match method {
        SolveMethod::Dense => solve_dense(&space, lambda, &pi, &g)?,
        _ => solve_series(&space, lambda, &pi, &g)?,
    };
    let centre: f64 = pi.iter().zip(&values).map(|(a, b)| a * b).sum();
    values.iter_mut().for_each(|v| *v -= centre);

    let lf = truncated_apply(&space, lambda, &values);
    let mut interior_residual = 0.0f64;
    space.for_each(|i, xi| {
        if space.is_interior(xi) {
            interior_residual = interior_residual.max((lf[i] - g[i]).abs());
        }
    });
    Ok(ProcessSteinSolution {
        space,
        values,
        mean_h,
        interior_residual,
    })
}

fn solve_dense(space: &ConfigSpace, lambda: &[f64], pi: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let n = space.len();
    let mut a = DMatrix::from_fn(n, n, |_, j| pi[j]);
    space.for_each(|i, xi| {
        for u in 0..xi.len() {
            let s = space.strides[u];
            if xi[u] < space.caps[u] {
                a[(i, i + s)] += lambda[u];
                a[(i, i)] -= lambda[u];
            }
            if xi[u] > 0 {
                a[(i, i - s)] += xi[u] as f64;
                a[(i, i)] -= xi[u] as f64;
            }
        }
    });
    a.lu()
        .solve(&DVector::from_column_slice(g))
        .map(|f| f.as_slice().to_vec())
        .ok_or_else(|| Error::Singular("process generator system is singular".into()))
}

const SERIES_MAX_TERMS: usize = 1_000_000;

fn solve_series(space: &ConfigSpace, lambda: &[f64], pi: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let mut rate = 0.0f64;
    space.for_each(|_, xi| rate = rate.max(exit_rate(space, lambda, xi)));
    if rate == 0.0 {
        return Ok(vec![0.0; space.len()]);
    }
    // Slack keeps K away from period two on this bipartite chain.
    let rate = 1.5 * rate;
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let stop = 1e-14 * scale / rate;
    let mut f = vec![0.0; space.len()];
    let mut term = g.to_vec();
    for _ in 0..SERIES_MAX_TERMS {
        let sup = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup <= stop {
            return Ok(f);
        }
        for (fi, t) in f.iter_mut().zip(&term) {
            *fi -= t / rate;
        }
        let lt = truncated_apply(space, lambda, &term);
        for (t, l) in term.iter_mut().zip(&lt) {
            *t += l / rate;
        }
        let drift: f64 = pi.iter().zip(&term).map(|(a, b)| a * b).sum();
        term.iter_mut().for_each(|t| *t -= drift);
    }
    Err(Error::resource(format!("series did not converge in {SERIES_MAX_TERMS} terms")))
}

/// Both sides of
/// `E Lf(Xi) = sum_i p_i E{f(Xi_i + delta_i + X_i delta_i) - f(Xi_i + X_i delta_i) - f(Xi_i + delta_i) + f(Xi_i)}`
/// for independent indicators, where `Xi_i = Xi - X_i delta_i`.
pub fn independent_identity_check(p: &[f64], f: impl Fn(&[u32]) -> f64) -> Result<IdentityResidual> {
    if p.len() > MAX_IDENTITY_SITES {
        return Err(Error::precondition(format!(
            "{} sites exceed {MAX_IDENTITY_SITES}",
            p.len()
        )));
    }
    let law = bernoulli_process_law(p)?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut eta = vec![0u32; p.len()];
    let mut first_error = None;
    law.space.for_each(|i, xi| {
        let q = law.pmf[i];
        if q == 0.0 {
            return;
        }
        match spatial_generator_apply(|e| Some(f(e)), xi, p) {
            Ok(v) => lhs += q * v,
            Err(e) => first_error = first_error.take().or(Some(e)),
        }
        eta.copy_from_slice(xi);
        for (i, &pi) in p.iter().enumerate() {
            let x = xi[i];
            eta[i] = 1 + x;
            let a = f(&eta);
            eta[i] = x;
            let b = f(&eta);
            eta[i] = 1;
            let c = f(&eta);
            eta[i] = 0;
            let d = f(&eta);
            eta[i] = x;
            rhs += q * pi * (a - b - c + d);
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(IdentityResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `d_TV(L(Xi), PP(p)) <= sum p_i^2` for independent indicators; on the
/// `|E h(Xi) - E h(Pi)|` scale for `|h| <= 1` this is `2 sum p_i^2`.
pub fn process_bound(p: &[f64]) -> Result<BoundCertificate> {
    check_probabilities(p)?;
    let sum_sq: f64 = p.iter().map(|q| q * q).sum();
    let exact = poisson_process_tv(&bernoulli_process_law(p)?, p)?;
    Ok(
        BoundCertificate::new("process_independent", Scale::TotalVariation, sum_sq, exact)
            .with_component("sum_p_squared", sum_sq)
            .with_component("second_difference_sup", 2.0)
            .with_component("test_function_scale_bound", 2.0 * sum_sq)
            .with_check(ChainCheck::at_most("exact_within_bound", exact.hi, sum_sq, 0.0)),
    )
}

/// For locally dependent indicators with `Xi = X_i delta_i + H_i + Xi~_i`,
/// `H_i` the other sites of the neighbourhood of `i` and `Y_i = H_i(U)`:
///
/// `|E h(Xi) - E h(Pi)| <= c_1 sum {p_i^2 + p_i E Y_i + E(X_i Y_i)}
///  + c_0 sum E|E(X_i | Xi~_i) - p_i|` with `c_0 = c_1 = 2`.
///
/// The certificate is on the total-variation scale (half the above); the
/// test-function scale value is kept as a component.
pub fn dependent_process_bound(e: &BernoulliEnsemble) -> Result<BoundCertificate> {
    const C0: f64 = 2.0;
    const C1: f64 = 2.0;
    let joint = e
        .joint()
        .ok_or_else(|| Error::precondition("dependent process bound needs the joint law"))?;
    let neighborhoods = e
        .neighborhoods()
        .ok_or_else(|| Error::precondition("dependent process bound needs neighbourhoods"))?;
    let n = e.n();
    if n > MAX_IDENTITY_SITES {
        return Err(Error::precondition(format!("{n} sites exceed {MAX_IDENTITY_SITES}")));
    }
    let exact = poisson_process_tv(&ensemble_process_law(e)?, e.p())?;
    let mut near = 0.0;
    let mut conditional = 0.0;
    let mut mass = vec![0.0; joint.len()];
    let mut x_mass = vec![0.0; joint.len()];
    for i in 0..n {
        let bit = 1usize << i;
        let hood: usize = neighborhoods[i].iter().map(|&j| 1usize << j).sum();
        let others = hood & !bit;
        mass.iter_mut().for_each(|m| *m = 0.0);
        x_mass.iter_mut().for_each(|m| *m = 0.0);
        let mut mean_y = 0.0;
        let mut mean_xy = 0.0;
        for (mask, &q) in joint.iter().enumerate() {
            let x = (mask & bit != 0) as u32 as f64;
            let y = (mask & others).count_ones() as f64;
            mean_y += q * y;
            mean_xy += q * x * y;
            // Keyed by the configuration outside the neighbourhood.
            mass[mask & !hood] += q;
            x_mass[mask & !hood] += q * x;
        }
        let pi = e.p()[i];
        near += pi * pi + pi * mean_y + mean_xy;
        conditional += mass
            .iter()
            .zip(&x_mass)
            .map(|(m, a)| (a - pi * m).abs())
            .sum::<f64>();
    }
    let h_scale = C1 * near + C0 * conditional;
    let bound = 0.5 * h_scale;
    Ok(
        BoundCertificate::new("process_local_dependence", Scale::TotalVariation, bound, exact)
            .with_component("neighbourhood_term", near)
            .with_component("conditional_term", conditional)
            .with_component("test_function_scale_bound", h_scale)
            .with_check(ChainCheck::at_most("exact_within_bound", exact.hi, bound, 0.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{convolve_bernoulli, poisson_pmf, tv_distance};
    use crate::generator::{recurrent_potential, truncated_immigration_death};
    use crate::stein_poisson::independent_bound;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn total(xi: &[u32]) -> f64 {
        xi.iter().map(|&x| x as f64).sum()
    }

    #[test]
    fn space_indexing_round_trips() {
        let s = ConfigSpace::new(vec![2, 0, 3]).unwrap();
        assert_eq!(s.len(), 12);
        let mut seen = 0;
        s.for_each(|i, xi| {
            assert_eq!(s.index(xi), Some(i));
            assert_eq!(s.config(i), xi);
            seen += 1;
        });
        assert_eq!(seen, 12);
        assert_eq!(s.index(&[3, 0, 0]), None);
        assert!(matches!(ConfigSpace::uniform(7, 9), Err(Error::Resource(_))));
    }

    #[test]
    fn bernoulli_law_examples() {
        let law = bernoulli_process_law(&[0.1, 0.2]).unwrap();
        for (xi, q) in [([0, 0], 0.72), ([1, 0], 0.08), ([0, 1], 0.18), ([1, 1], 0.02)] {
            assert_abs_diff_eq!(law.prob(&xi), q, epsilon = 1e-15);
        }
        assert_eq!(law.tail_mass(), 0.0);
        assert_eq!(bernoulli_process_law(&[0.0; 3]).unwrap().prob(&[0, 0, 0]), 1.0);
        assert_eq!(bernoulli_process_law(&[1.0]).unwrap().prob(&[1]), 1.0);
        assert!(matches!(bernoulli_process_law(&[0.1; 21]), Err(Error::Resource(_))));
    }

    #[test]
    fn product_poisson_examples() {
        let law = product_poisson_law(&[0.1], 6).unwrap();
        let mut fact = 1.0;
        for k in 0..=6u32 {
            if k > 0 {
                fact *= k as f64;
            }
            let q = (-0.1f64).exp() * 0.1f64.powi(k as i32) / fact;
            assert_abs_diff_eq!(law.prob(&[k]), q, epsilon = 1e-16);
        }
        assert!(law.tail_mass() < 1e-10);
        assert_eq!(product_poisson_law(&[0.0, 0.0], 3).unwrap().prob(&[0, 0]), 1.0);
        let two = product_poisson_law(&[0.1, 0.2], 8).unwrap();
        assert_abs_diff_eq!(two.prob(&[0, 0]), (-0.3f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(two.prob(&[0, 0]), 0.740_818, epsilon = 1e-6);
        assert!(matches!(product_poisson_law(&[2.0], 5), Err(Error::Precondition(_))));
        let cap = minimal_cap(&[0.1, 0.2], 1e-10).unwrap();
        assert!(product_poisson_law(&[0.1, 0.2], cap).is_ok());
        assert!(product_poisson_law(&[0.1, 0.2], cap - 1).is_err());
    }

    #[test]
    fn tv_examples() {
        let law = bernoulli_process_law(&[0.1, 0.3]).unwrap();
        assert_eq!(process_tv(&law, &law).unwrap(), DistanceInterval::zero());

        let single = poisson_process_tv(&bernoulli_process_law(&[0.1]).unwrap(), &[0.1]).unwrap();
        assert_abs_diff_eq!(single.mid(), 0.009_516_3, epsilon = 1e-7);
        let reduced = tv_distance(&convolve_bernoulli(&[0.1]).unwrap(), &poisson_pmf(0.1, 1e-14).unwrap());
        assert_abs_diff_eq!(single.mid(), reduced.mid(), epsilon = 1e-10);

        let p = [0.1; 6];
        let d = poisson_process_tv(&bernoulli_process_law(&p).unwrap(), &p).unwrap();
        assert!(d.hi <= 0.06);
        // Oracle: brute force over the capped box with Poisson masses from scratch.
        let cap = 8u32;
        let mut sum = 0.0;
        let mut inside = 0.0;
        ConfigSpace::uniform(6, cap).unwrap().for_each(|_, xi| {
            let q: f64 = xi
                .iter()
                .map(|&k| (-0.1f64).exp() * 0.1f64.powi(k as i32) / (1..=k).map(f64::from).product::<f64>())
                .product();
            let pb = if xi.iter().all(|&k| k <= 1) {
                xi.iter().map(|&k| if k == 1 { 0.1 } else { 0.9 }).product()
            } else {
                0.0
            };
            sum += (pb - q).abs();
            inside += q;
        });
        let oracle = 0.5 * (sum + (1.0 - inside));
        assert_abs_diff_eq!(d.mid(), oracle, epsilon = 1e-12);

        let generic = process_tv(&bernoulli_process_law(&p).unwrap(), &product_poisson_law(&p, cap).unwrap()).unwrap();
        assert!(generic.lo <= d.hi + 1e-13 && d.lo <= generic.hi + 1e-13);
        assert!(process_tv(&law, &bernoulli_process_law(&[0.1]).unwrap()).is_err());
    }

    #[test]
    fn generator_examples() {
        let lam = [0.3, 1.2];
        let xi = [2, 5];
        assert_eq!(spatial_generator_apply(|_| Some(3.0), &xi, &lam).unwrap(), 0.0);
        assert_abs_diff_eq!(
            spatial_generator_apply(|e| Some(total(e)), &xi, &lam).unwrap(),
            1.5 - 7.0,
            epsilon = 1e-14
        );
        for x in 0..6u32 {
            let xf = x as f64;
            let v = spatial_generator_apply(|e| Some((e[0] as f64).powi(2)), &[x], &[0.7]).unwrap();
            assert_abs_diff_eq!(v, 0.7 * (2.0 * xf + 1.0) + xf * (1.0 - 2.0 * xf), epsilon = 1e-12);
        }
        let boxed = |e: &[u32]| (e[0] <= 2).then(|| e[0] as f64);
        assert!(spatial_generator_apply(boxed, &[2], &[0.5]).is_err());
        assert!(spatial_generator_apply(boxed, &[2], &[0.0]).is_ok());
    }

    #[test]
    fn solve_examples() {
        let c = solve_process_stein(|_| 0.4, &[0.3, 0.5], 12).unwrap();
        assert!(c.values().iter().all(|v| v.abs() <= 1e-12));

        let two = solve_process_stein(|e| (total(e) == 0.0) as u8 as f64, &[0.3, 0.5], 12).unwrap();
        assert!(two.interior_residual() <= 1e-8);
        assert_abs_diff_eq!(two.mean_h(), (-0.8f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn single_site_solution_matches_chain() {
        let (lambda, cap) = (1.3, 20u32);
        let h = |k: u32| ((k as f64) - 1.0).abs().min(2.0);
        let sol = solve_process_stein(|e| h(e[0]), &[lambda], cap).unwrap();
        let q = truncated_immigration_death(lambda, cap as usize).unwrap();
        let hv: Vec<f64> = (0..=cap).map(h).collect();
        let oracle = recurrent_potential(&q, &hv).unwrap();
        for (a, b) in sol.values().iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn dense_and_series_agree() {
        let lam = [0.4, 0.5, 0.2];
        let h = |e: &[u32]| ((e[0] + 2 * e[1]) as f64).sin() + (e[2] == 1) as u8 as f64;
        let dense = solve_process_stein_with(h, &lam, 10, SolveMethod::Dense).unwrap();
        let series = solve_process_stein_with(h, &lam, 10, SolveMethod::Series).unwrap();
        assert!(dense.interior_residual() <= 1e-10);
        assert!(series.interior_residual() <= 1e-8);
        for (a, b) in dense.values().iter().zip(series.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let tv = solve_process_stein(|e| (e[0] == 0) as u8 as f64, &[1.0, 1.0], 16).unwrap();
        assert!(tv.second_difference_sup() <= 2.0);
    }

    #[test]
    fn identity_examples() {
        let p = [0.1, 0.4, 0.7];
        let c = independent_identity_check(&p, |_| 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let t = independent_identity_check(&p, total).unwrap();
        assert_abs_diff_eq!(t.lhs, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.rhs, 0.0, epsilon = 1e-15);
        assert!(independent_identity_check(&[0.1; 13], total).is_err());
    }

    #[test]
    fn bound_examples() {
        let c = process_bound(&[0.1; 6]).unwrap();
        assert_abs_diff_eq!(c.bound, 0.06, epsilon = 1e-15);
        assert!(c.passed());
        let one = process_bound(&[0.1]).unwrap();
        assert_abs_diff_eq!(one.bound, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(one.exact.mid(), 0.009_516_3, epsilon = 1e-7);
        let scalar = independent_bound(&[0.1]).unwrap();
        assert_abs_diff_eq!(one.exact.mid(), scalar.exact.mid(), epsilon = 1e-10);
        assert_abs_diff_eq!(one.bound, scalar.bound, epsilon = 1e-10);
        let zero = process_bound(&[0.0; 4]).unwrap();
        assert_eq!((zero.bound, zero.exact), (0.0, DistanceInterval::zero()));
        for n in [2, 4, 6] {
            for p in [0.05, 0.1, 0.2] {
                assert!(process_bound(&vec![p; n]).unwrap().passed());
            }
        }
    }

    #[test]
    fn dependent_bound_examples() {
        let p = vec![0.1, 0.25, 0.05, 0.3];
        let ind = dependent_process_bound(&BernoulliEnsemble::independent(p.clone()).unwrap()).unwrap();
        let sum_sq: f64 = p.iter().map(|q| q * q).sum();
        assert_abs_diff_eq!(ind.component("test_function_scale_bound").unwrap(), 2.0 * sum_sq, epsilon = 1e-14);
        assert!(ind.passed());

        let pairs = BernoulliEnsemble::markov_pairs(3, 0.15, 0.5).unwrap();
        let c = dependent_process_bound(&pairs).unwrap();
        assert!(c.passed(), "{c:?}");
        // Oracle for the neighbourhood term: each pair has E(X_i X_j) = p(p + rho(1 - p)).
        let (q, rho) = (0.15, 0.5);
        let near = 6.0 * (q * q + q * q + q * (q + rho * (1.0 - q)));
        assert_abs_diff_eq!(c.component("neighbourhood_term").unwrap(), near, epsilon = 1e-13);
        assert_abs_diff_eq!(c.component("conditional_term").unwrap(), 0.0, epsilon = 1e-14);

        let zero = dependent_process_bound(&BernoulliEnsemble::independent(vec![0.0; 3]).unwrap()).unwrap();
        assert_eq!(zero.bound, 0.0);
        assert!(zero.passed());
    }

    #[test]
    fn conditional_term_sees_configuration() {
        // X_1 copies a fair X_0 and X_2 is an independent fair coin. Given the
        // count of the other two sites X_0 is sometimes undetermined, given
        // their configuration it never is.
        let mut joint = vec![0.0; 8];
        for (a, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            joint[a | a << 1 | c << 2] = 0.25;
        }
        let e = BernoulliEnsemble::from_joint(joint, vec![vec![0], vec![1], vec![2]]).unwrap();
        let c = dependent_process_bound(&e).unwrap();
        assert_abs_diff_eq!(c.component("conditional_term").unwrap(), 1.0, epsilon = 1e-15);
        assert!(c.passed());
        let scalar = crate::stein_poisson::local_dependence_bound(&e).unwrap();
        assert_abs_diff_eq!(scalar.component("conditional_term").unwrap(), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn identity_on_random_tables(
            p in proptest::collection::vec(0.0f64..1.0, 1..=6),
            table in proptest::collection::vec(-1.0f64..1.0, 729),
        ) {
            let space = ConfigSpace::uniform(p.len(), 2).unwrap();
            let f = |e: &[u32]| table[space.index(e).unwrap()];
            prop_assert!(independent_identity_check(&p, f).unwrap().residual <= 1e-12);
        }

        #[test]
        fn generator_kills_stationary_law(
            lam in proptest::collection::vec(0.0f64..0.6, 1..=3),
            table in proptest::collection::vec(-1.0f64..1.0, 1728),
        ) {
            let cap = minimal_cap(&lam, 1e-12).unwrap().max(1);
            let law = product_poisson_law(&lam, cap).unwrap();
            let outer = ConfigSpace::uniform(lam.len(), cap + 1).unwrap();
            let f = |e: &[u32]| outer.index(e).map(|i| table[i % table.len()]);
            let mean = law.expect(|xi| spatial_generator_apply(f, xi, &lam).unwrap());
            prop_assert!(mean.abs() <= 1e-9, "{}", mean);
        }

        #[test]
        fn process_bound_certifies(p in proptest::collection::vec(0.0f64..1.0, 1..=8)) {
            prop_assert!(process_bound(&p).unwrap().passed());
        }
    }
}
