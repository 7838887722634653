//! Exchangeable pairs for normal approximation.
//!
//! A pair `(W, W')` with `(W, W') =_d (W', W)` and `E[W' | W] = (1 - lambda) W`
//! gives a Kolmogorov bound for `W`. The canonical construction resamples
//! one uniformly chosen coordinate of a sum of independent variables, which
//! satisfies the regression condition with `lambda = 1/n`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificate::{BoundCertificate, ChainCheck, Scale};
use crate::dist::{
    convolve_finite, kolmogorov_distance_to_normal, DistanceInterval, FiniteRv, ATOM_MERGE_TOL,
    DEFAULT_PAIR_BUDGET, MASS_TOL,
};
use crate::error::{Error, Result};
use crate::functions::{C1, C2};

/// Largest regression deviation accepted by the bound and identity checks.
pub const REGRESSION_TOL: f64 = 1e-9;
const ANTISYMMETRY_TOL: f64 = 1e-12;

/// How [`coordinate_resample_pair`] obtains the joint law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Enumerate every (configuration, index, replacement) triple.
    Exact,
    /// Empirical law of `samples` independent draws of the pair.
    Sampled { seed: u64, samples: usize },
}

/// Joint law of `(W, W')` on finitely many points.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLaw {
    values: Vec<f64>,
    /// `(index of w, index of w', probability)`, sorted by index pair.
    entries: Vec<(usize, usize, f64)>,
    lambda: Option<f64>,
    samples: Option<usize>,
}

impl PairLaw {
    /// Builds a law from `(w, w', probability)` triples; values within the
    /// atom merge tolerance are identified. Exchangeability is not required
    /// here; see [`PairLaw::exchangeability_defect`].
    pub fn new(support: Vec<(f64, f64, f64)>, lambda: Option<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::domain("pair law needs at least one point"));
        }
        if support
            .iter()
            .any(|&(w, v, p)| !(w.is_finite() && v.is_finite() && p >= 0.0))
        {
            return Err(Error::domain("pair law has invalid points or probabilities"));
        }
        let total: f64 = support.iter().map(|s| s.2).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!("pair law has mass {total}")));
        }
        if let Some(l) = lambda {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::domain(format!("declared lambda {l} outside (0, 1]")));
            }
        }
        Ok(Self::canonical(support, lambda, None))
    }

    fn canonical(support: Vec<(f64, f64, f64)>, lambda: Option<f64>, samples: Option<usize>) -> Self {
        let mut raw: Vec<(f64, usize)> = support
            .iter()
            .enumerate()
            .flat_map(|(k, &(w, v, _))| [(w, 2 * k), (v, 2 * k + 1)])
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cluster = vec![0usize; raw.len()];
        let mut values: Vec<f64> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for &(x, slot) in &raw {
            if values.is_empty() || x - last > ATOM_MERGE_TOL {
                values.push(x);
            }
            cluster[slot] = values.len() - 1;
            last = x;
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (k, &(_, _, p)) in support.iter().enumerate() {
            if p > 0.0 {
                *merged.entry((cluster[2 * k], cluster[2 * k + 1])).or_default() += p;
            }
        }
        PairLaw {
            values,
            entries: merged.into_iter().map(|((a, b), p)| (a, b, p)).collect(),
            lambda,
            samples,
        }
    }

    pub fn support(&self) -> Vec<(f64, f64, f64)> {
        self.entries
            .iter()
            .map(|&(a, b, p)| (self.values[a], self.values[b], p))
            .collect()
    }

    /// The regression constant declared by the construction, if any.
    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    /// Number of draws behind a sampled law.
    pub fn sample_count(&self) -> Option<usize> {
        self.samples
    }

    /// Monte Carlo standard error of an estimated probability `p`, for
    /// sampled laws.
    pub fn standard_error(&self, p: f64) -> Option<f64> {
        self.samples.map(|n| (p * (1.0 - p) / n as f64).sqrt())
    }

    pub fn expect(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.entries
            .iter()
            .map(|&(a, b, p)| p * f(self.values[a], self.values[b]))
            .sum()
    }

    fn marginal(&self, second: bool) -> Vec<f64> {
        let mut m = vec![0.0; self.values.len()];
        for &(a, b, p) in &self.entries {
            m[if second { b } else { a }] += p;
        }
        m
    }

    fn marginal_rv(&self, second: bool) -> Result<FiniteRv> {
        FiniteRv::new(self.values.iter().copied().zip(self.marginal(second)).collect())
    }

    /// Law of `W`.
    pub fn marginal_w(&self) -> Result<FiniteRv> {
        self.marginal_rv(false)
    }

    /// Law of `W'`.
    pub fn marginal_w_prime(&self) -> Result<FiniteRv> {
        self.marginal_rv(true)
    }

    /// `max |P(w, w') - P(w', w)|` over the support.
    pub fn exchangeability_defect(&self) -> f64 {
        let lookup: BTreeMap<(usize, usize), f64> =
            self.entries.iter().map(|&(a, b, p)| ((a, b), p)).collect();
        self.entries
            .iter()
            .map(|&(a, b, p)| (p - lookup.get(&(b, a)).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |P(W = x) - P(W' = x)|`.
    pub fn marginal_defect(&self) -> f64 {
        self.marginal(false)
            .iter()
            .zip(self.marginal(true))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per atom `w` of `W`: `(w, P(W = w), E[W' | W = w], E[(W' - W)^2 | W = w])`.
    pub fn conditional_moments(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut acc = vec![(0.0, 0.0, 0.0); self.values.len()];
        for &(a, b, p) in &self.entries {
            let (w, v) = (self.values[a], self.values[b]);
            acc[a].0 += p;
            acc[a].1 += p * v;
            acc[a].2 += p * (v - w) * (v - w);
        }
        acc.iter()
            .enumerate()
            .filter(|(_, m)| m.0 > 0.0)
            .map(|(i, &(m, s1, s2))| (self.values[i], m, s1 / m, s2 / m))
            .collect()
    }
}

/// The pair `(W, W')` with `W = sum X_i` and `W'` obtained by replacing a
/// uniformly chosen coordinate with an independent copy.
///
/// Exact mode enumerates `(W - X_i, X_i, X_i')` for each `i`, using the law of
/// `W - X_i`; its cost, `sum_i |W - X_i| |X_i|^2`, must stay within
/// `DEFAULT_PAIR_BUDGET`. Sampled mode draws from a ChaCha8 stream seeded by
/// `seed`; the resulting law carries its sample count for standard errors.
pub fn coordinate_resample_pair(rvs: &[FiniteRv], mode: PairMode) -> Result<PairLaw> {
    if rvs.is_empty() {
        return Err(Error::domain("need at least one coordinate"));
    }
    let n = rvs.len();
    match mode {
        PairMode::Exact => {
            let rests: Vec<FiniteRv> = (0..n)
                .map(|i| {
                    let others: Vec<FiniteRv> = rvs
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, x)| x.clone())
                        .collect();
                    if others.is_empty() {
                        Ok(FiniteRv::point_mass(0.0))
                    } else {
                        convolve_finite(&others)
                    }
                })
                .collect::<Result<_>>()?;
            let work = rests
                .iter()
                .zip(rvs)
                .try_fold(0usize, |acc, (r, x)| acc.checked_add(r.len().checked_mul(x.len() * x.len())?))
                .filter(|&w| w <= DEFAULT_PAIR_BUDGET)
                .ok_or_else(|| {
                    Error::resource(format!(
                        "exact pair law needs more than {DEFAULT_PAIR_BUDGET} triples; use sampled mode"
                    ))
                })?;
            let mut support = Vec::with_capacity(work);
            let weight = 1.0 / n as f64;
            for (rest, x) in rests.iter().zip(rvs) {
                for &(s, ps) in rest.atoms() {
                    for &(a, pa) in x.atoms() {
                        for &(b, pb) in x.atoms() {
                            support.push((s + a, s + b, weight * ps * (pa * pb)));
                        }
                    }
                }
            }
            Ok(PairLaw::canonical(support, Some(weight), None))
        }
        PairMode::Sampled { seed, samples } => {
            if samples == 0 {
                return Err(Error::domain("sampled mode needs at least one sample"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cdfs: Vec<Vec<f64>> = rvs
                .iter()
                .map(|x| {
                    x.atoms()
                        .iter()
                        .scan(0.0, |c, a| {
                            *c += a.1;
                            Some(*c)
                        })
                        .collect()
                })
                .collect();
            let draw = |rng: &mut ChaCha8Rng, i: usize| {
                let u: f64 = rng.random::<f64>() * cdfs[i].last().copied().unwrap_or(1.0);
                let k = cdfs[i].partition_point(|&c| c <= u).min(rvs[i].len() - 1);
                rvs[i].atoms()[k].0
            };
            let mut counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
            for _ in 0..samples {
                let xs: Vec<f64> = (0..n).map(|i| draw(&mut rng, i)).collect();
                let w: f64 = xs.iter().sum();
                let i = rng.random_range(0..n);
                let w_prime = w - xs[i] + draw(&mut rng, i);
                *counts.entry((w.to_bits(), w_prime.to_bits())).or_default() += 1;
            }
            let support = counts
                .into_iter()
                .map(|((a, b), c)| (f64::from_bits(a), f64::from_bits(b), c as f64 / samples as f64))
                .collect();
            Ok(PairLaw::canonical(support, Some(1.0 / n as f64), Some(samples)))
        }
    }
}

/// Outcome of checking `E[W' | W] = (1 - lambda) W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionReport {
    /// `1 - E[W'/W | W]`, averaged over the atoms `w != 0` with weights `P(W = w)`.
    pub lambda_hat: f64,
    /// `max_w |E[W' | W = w] - (1 - lambda_hat) w|`.
    pub max_dev: f64,
    /// Whether `lambda_hat` lies in `(0, 1]`.
    pub in_range: bool,
}

pub fn regression_check(pl: &PairLaw) -> Result<RegressionReport> {
    let moments = pl.conditional_moments();
    let (mut num, mut den) = (0.0, 0.0);
    for &(w, m, cond, _) in &moments {
        if w.abs() > ATOM_MERGE_TOL {
            num += m * cond / w;
            den += m;
        }
    }
    if den == 0.0 {
        return Err(Error::precondition("W is concentrated at 0; regression constant undefined"));
    }
    let lambda_hat = 1.0 - num / den;
    let max_dev = moments
        .iter()
        .map(|&(w, _, cond, _)| (cond - (1.0 - lambda_hat) * w).abs())
        .fold(0.0, f64::max);
    Ok(RegressionReport {
        lambda_hat,
        max_dev,
        in_range: lambda_hat > 0.0 && lambda_hat <= 1.0,
    })
}

/// The regression constant, after checking the regression condition and any
/// declared value.
fn verified_lambda(pl: &PairLaw) -> Result<f64> {
    let r = regression_check(pl)?;
    if r.max_dev > REGRESSION_TOL {
        return Err(Error::precondition(format!(
            "linear regression condition fails: deviation {:e}",
            r.max_dev
        )));
    }
    if !r.in_range {
        return Err(Error::precondition(format!(
            "regression constant {} outside (0, 1]",
            r.lambda_hat
        )));
    }
    if let Some(declared) = pl.lambda {
        if (declared - r.lambda_hat).abs() > REGRESSION_TOL {
            return Err(Error::precondition(format!(
                "declared lambda {declared} but the law gives {}",
                r.lambda_hat
            )));
        }
    }
    Ok(r.lambda_hat)
}

/// Kolmogorov bound for `W` from an exchangeable pair:
///
/// `2 sqrt(E(1 - E^W[(W' - W)^2] / (2 lambda))^2) + (2 pi)^{-1/4} sqrt(E|W - W'|^3 / lambda)`,
///
/// against the exact Kolmogorov distance of the marginal of `W`.
pub fn pair_bound(pl: &PairLaw) -> Result<BoundCertificate> {
    let lambda = verified_lambda(pl)?;
    let defect = pl.exchangeability_defect();
    if defect > ANTISYMMETRY_TOL {
        return Err(Error::precondition(format!("pair is not exchangeable (defect {defect:e})")));
    }
    let variance_term: f64 = pl
        .conditional_moments()
        .iter()
        .map(|&(_, m, _, sq)| m * (1.0 - sq / (2.0 * lambda)).powi(2))
        .sum();
    let third = pl.expect(|w, v| (w - v).abs().powi(3));
    let first = 2.0 * variance_term.sqrt();
    let second = (2.0 * std::f64::consts::PI).powf(-0.25) * (third / lambda).sqrt();
    let exact = kolmogorov_distance_to_normal(&pl.marginal_w()?);
    let exact = DistanceInterval::new((exact - 1e-12).max(0.0), exact + 1e-12);
    let second_moment = pl.expect(|w, v| (v - w) * (v - w));
    let var_w = pl.expect(|w, _| w * w);
    Ok(
        BoundCertificate::new("exchangeable_pair", Scale::Kolmogorov, first + second, exact)
            .with_component("lambda", lambda)
            .with_component("variance_term", first)
            .with_component("third_moment_term", second)
            .with_check(ChainCheck::equal(
                "mean_square_increment",
                second_moment,
                2.0 * lambda * var_w,
                1e-10,
            )),
    )
}

/// `|E F(W, W')|` for an antisymmetric `F`; zero for exchangeable pairs.
pub fn antisymmetry_identity_check(pl: &PairLaw, f: impl Fn(f64, f64) -> f64) -> Result<f64> {
    for (w, v, _) in pl.support() {
        let (a, b) = (f(w, v), f(v, w));
        if (a + b).abs() > ANTISYMMETRY_TOL * a.abs().max(1.0) {
            return Err(Error::precondition(format!("F is not antisymmetric at ({w}, {v})")));
        }
    }
    Ok(pl.expect(f).abs())
}

/// `(w - w')(f(w) + f(w'))`.
pub fn stein_antisymmetric(f: impl Fn(f64) -> f64) -> impl Fn(f64, f64) -> f64 {
    move |w, v| (w - v) * (f(w) + f(v))
}

/// The terms of `0 = lambda E{-W f'(W) + f''(W)} + lambda E{(E^W(W' - W)^2 / (2 lambda) - 1) f''(W)} + E E'(f, W, W')`
/// with `E'(f, W, W') = f(W') - f(W) - (W' - W) f'(W) - (W' - W)^2 f''(W) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderTerms {
    pub generator_term: f64,
    pub variance_term: f64,
    pub remainder_term: f64,
    pub residual: f64,
}

pub fn remainder_identity_check(pl: &PairLaw, f: &impl C2) -> Result<RemainderTerms> {
    let lambda = verified_lambda(pl)?;
    let generator_term = lambda * pl.marginal_w()?.expect(|w| -w * f.d1(w) + f.d2(w));
    let variance_term: f64 = lambda
        * pl.conditional_moments()
            .iter()
            .map(|&(w, m, _, sq)| m * (sq / (2.0 * lambda) - 1.0) * f.d2(w))
            .sum::<f64>();
    let remainder_term = pl.expect(|w, v| {
        let d = v - w;
        f.value(v) - f.value(w) - d * f.d1(w) - 0.5 * d * d * f.d2(w)
    });
    Ok(RemainderTerms {
        generator_term,
        variance_term,
        remainder_term,
        residual: (generator_term + variance_term + remainder_term).abs(),
    })
}

/// Both sides of
/// `E{W f(W) - f'(W)} = E{f'(W)((W - W')^2 / (2 lambda) - 1)} + E{(W - W')(f(W) - f(W') - (W - W') f'(W))} / (2 lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn regression_identity_check(pl: &PairLaw, f: &impl C1) -> Result<IdentitySides> {
    let lambda = verified_lambda(pl)?;
    let lhs = pl.marginal_w()?.expect(|w| w * f.value(w) - f.d1(w));
    let rhs = pl.expect(|w, v| {
        let d = w - v;
        f.d1(w) * (d * d / (2.0 * lambda) - 1.0)
            + d * (f.value(w) - f.value(v) - d * f.d1(w)) / (2.0 * lambda)
    });
    Ok(IdentitySides {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `|E f(W') - E f(W)|`, which vanishes whenever `W =_d W'`.
pub fn equal_distribution_identity(pl: &PairLaw, f: impl Fn(f64) -> f64) -> Result<f64> {
    let defect = pl.marginal_defect();
    if defect > MASS_TOL {
        return Err(Error::precondition(format!("marginals differ by {defect:e}")));
    }
    Ok(pl.expect(|w, v| f(v) - f(w)).abs())
}
