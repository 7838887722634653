//! The Poisson Stein operator `lambda f(w+1) - w f(w)`, its exact solution,
//! and total-variation bounds for sums of Bernoulli variables.

use crate::certificate::{BoundCertificate, ChainCheck, Scale};
use crate::dist::{
    convolve_bernoulli, poisson_pmf, poisson_tail_after, tv_distance, DistanceInterval, LatticePmf,
    DEFAULT_TRUNCATION_EPS, MASS_TOL,
};
use crate::error::{Error, Result};

/// Largest ensemble whose joint law is enumerated exactly.
pub const MAX_ENUMERATED: usize = 20;

/// A function on `{0, ..., J}` together with its rate and norms.
///
/// Values are stored in the form used by `lambda f(w+1) - w f(w)`; the
/// value at 0 never enters that operator and is fixed to 0 by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinSolution {
    pub values: Vec<f64>,
    pub lambda: f64,
    pub sup_norm: f64,
    /// `max |f(w+1) - f(w)|` over the window.
    pub diff_norm: f64,
    /// `max |f(w+2) - 2 f(w+1) + f(w)|` over the window.
    pub diff2_norm: f64,
}

impl SteinSolution {
    pub fn from_values(values: Vec<f64>, lambda: f64) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("function values must be finite and nonempty"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("rate {lambda} must be positive")));
        }
        let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, |m: f64, v| m.max(v.abs()));
        let sup_norm = max_abs(&mut values.iter().copied());
        let diff_norm = max_abs(&mut values.windows(2).map(|w| w[1] - w[0]));
        let diff2_norm = max_abs(&mut values.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]));
        Ok(SteinSolution {
            values,
            lambda,
            sup_norm,
            diff_norm,
            diff2_norm,
        })
    }

    /// Largest `w` stored.
    pub fn window(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, w: usize) -> Result<f64> {
        self.values.get(w).copied().ok_or_else(|| {
            Error::Range(format!("w = {w} beyond the stored window 0..={}", self.window()))
        })
    }

    /// The same solution written for `f(j) - j f(j-1) / lambda`, that is
    /// `lambda f(j + 1)`.
    pub fn backward_form(&self, j: usize) -> Result<f64> {
        Ok(self.lambda * self.value(j + 1)?)
    }
}

/// `lambda f(w+1) - w f(w)`.
pub fn poisson_op_apply(f: &SteinSolution, w: usize) -> Result<f64> {
    Ok(f.lambda * f.value(w + 1)? - w as f64 * f.value(w)?)
}

/// `E[lambda f(W+1) - W f(W)]` by exact summation over a law on `{0, ...}`.
pub fn operator_expectation(f: &SteinSolution, law: &LatticePmf) -> Result<f64> {
    if law.origin() < 0 {
        return Err(Error::domain("law must live on the nonnegative integers"));
    }
    law.iter()
        .filter(|&(_, p)| p > 0.0)
        .map(|(w, p)| Ok(p * poisson_op_apply(f, w as usize)?))
        .sum()
}

/// Solves `lambda f(w+1) - w f(w) = h(w) - E h(Z)` for `w < J`, where
/// `h` is given on `{0, ..., J}` and `Z ~ Po(lambda)`.
///
/// With `F(k) = lambda f(k+1)`, the solution satisfies
/// `F(k) p(k) = sum_{j<=k} (h(j) - Eh) p(j) = -sum_{j>k} (h(j) - Eh) p(j)`.
/// Up to the mode the first form is run as the contracting recurrence
/// `F(k) = g(k) + (k/lambda) F(k-1)`; beyond it the second form is run
/// downwards as `F(k) = (lambda/(k+1)) (F(k+1) - g(k+1))`. Beyond `J`, `h`
/// `h` is continued by the constant `h(J)`, which starts the downward pass at
/// `F(J) = (Eh - h(J)) P(Z > J) / p(J)`.
pub fn solve_stein_poisson(h: &[f64], lambda: f64) -> Result<SteinSolution> {
    if !(lambda > 0.0 && lambda <= 700.0) {
        return Err(Error::domain(format!("rate {lambda} outside (0, 700]")));
    }
    if h.is_empty() || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("h must be finite and nonempty"));
    }
    let big_j = h.len() - 1;
    let mut p = Vec::with_capacity(h.len());
    p.push((-lambda).exp());
    for j in 0..big_j {
        p.push(p[j] * lambda / (j + 1) as f64);
    }
    let tail_ratio = if (big_j + 1) as f64 > lambda {
        poisson_tail_after(lambda, big_j, 1.0)
    } else {
        f64::INFINITY
    };
    let tail = tail_ratio * p[big_j];
    if !(tail <= DEFAULT_TRUNCATION_EPS) {
        return Err(Error::precondition(format!(
            "Po({lambda}) mass {tail:e} beyond J = {big_j} exceeds {DEFAULT_TRUNCATION_EPS:e}"
        )));
    }
    let mean_h: f64 = h.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() + h[big_j] * tail;
    let g = |j: usize| h[j] - mean_h;

    let mode = (lambda.floor() as usize).min(big_j);
    let mut big_f = vec![0.0; big_j + 1];
    big_f[0] = g(0);
    for k in 1..=mode {
        big_f[k] = g(k) + k as f64 / lambda * big_f[k - 1];
    }
    if mode < big_j {
        big_f[big_j] = (mean_h - h[big_j]) * tail_ratio;
        for k in (mode + 1..big_j).rev() {
            big_f[k] = lambda / (k + 1) as f64 * (big_f[k + 1] - g(k + 1));
        }
    }
    let mut values = Vec::with_capacity(big_j + 1);
    values.push(0.0);
    values.extend(big_f[..big_j].iter().map(|v| v / lambda));
    SteinSolution::from_values(values, lambda)
}

/// Bounds on `||Delta f_h||` and `||f_h||` over `|h| <= 1`:
/// `(2 min(1, 1/lambda), 2 min(1, lambda^{-1/2}))`.
pub fn magic_factor_bounds(lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("rate {lambda} must be positive")));
    }
    Ok((2.0 * lambda.recip().min(1.0), 2.0 * lambda.sqrt().recip().min(1.0)))
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        Some(q) => Err(Error::domain(format!("probability {q} outside [0,1]"))),
        None => Ok(()),
    }
}

fn exact_tv_to_poisson(law: &LatticePmf, lambda: f64) -> Result<DistanceInterval> {
    if lambda == 0.0 {
        return Ok(tv_distance(law, &LatticePmf::point_mass(0)));
    }
    Ok(tv_distance(law, &poisson_pmf(lambda, DEFAULT_TRUNCATION_EPS)?))
}

/// `d_TV(L(W), Po(lambda)) <= min(1, 1/lambda) sum p_i^2` for a sum of
/// independent `Be(p_i)`, certified against the exact distance.
pub fn independent_bound(p: &[f64]) -> Result<BoundCertificate> {
    check_probabilities(p)?;
    let lambda: f64 = p.iter().sum();
    if lambda <= 0.0 {
        return Err(Error::precondition("total rate sum p_i must be positive"));
    }
    let sum_sq: f64 = p.iter().map(|q| q * q).sum();
    let factor = lambda.recip().min(1.0);
    let exact = exact_tv_to_poisson(&convolve_bernoulli(p)?, lambda)?;
    Ok(
        BoundCertificate::new("poisson_independent", Scale::TotalVariation, factor * sum_sq, exact)
            .with_component("lambda", lambda)
            .with_component("sum_p_squared", sum_sq)
            .with_component("min_1_inv_lambda", factor),
    )
}

/// Le Cam's bound `8 min(1, 1/lambda) sum p_i^2`, valid when every
/// `p_i <= 1/4`.
pub fn lecam_bound(p: &[f64]) -> Result<f64> {
    check_probabilities(p)?;
    if let Some(q) = p.iter().find(|&&q| q > 0.25) {
        return Err(Error::precondition(format!("p_i = {q} exceeds 1/4")));
    }
    let lambda: f64 = p.iter().sum();
    let sum_sq: f64 = p.iter().map(|q| q * q).sum();
    Ok(8.0 * lambda.recip().min(1.0) * sum_sq)
}

/// `c p min(1, n p)` for `d_TV(Bi(n, p), Po(np))`; the constant is the
/// caller's.
pub fn prohorov_binomial_bound(n: u64, p: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("constant {c} must be positive")));
    }
    check_probabilities(&[p])?;
    Ok(c * p * (n as f64 * p).min(1.0))
}

/// Bernoulli indicators with optional dependence neighbourhoods and an
/// optional exact joint law.
///
/// The joint law is indexed by bit mask: bit `i` of the index is `X_i`.
/// Neighbourhoods always contain their own index.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliEnsemble {
    p: Vec<f64>,
    neighborhoods: Option<Vec<Vec<usize>>>,
    joint: Option<Vec<f64>>,
}

impl BernoulliEnsemble {
    /// Independent indicators. The product joint law is attached when
    /// `n <= MAX_ENUMERATED`, with singleton neighbourhoods.
    pub fn independent(p: Vec<f64>) -> Result<Self> {
        check_probabilities(&p)?;
        let n = p.len();
        let (neighborhoods, joint) = if n <= MAX_ENUMERATED {
            let mut joint = vec![1.0; 1 << n];
            for (mask, q) in joint.iter_mut().enumerate() {
                for (i, &pi) in p.iter().enumerate() {
                    *q *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
                }
            }
            (Some((0..n).map(|i| vec![i]).collect()), Some(joint))
        } else {
            (None, None)
        };
        Ok(BernoulliEnsemble {
            p,
            neighborhoods,
            joint,
        })
    }

    /// Indicators with the given joint law on `{0,1}^n`; marginals are read
    /// off the joint.
    pub fn from_joint(joint: Vec<f64>, neighborhoods: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighborhoods.len();
        if n > MAX_ENUMERATED {
            return Err(Error::resource(format!(
                "{n} indicators exceed the enumeration cap {MAX_ENUMERATED}"
            )));
        }
        if joint.len() != 1 << n {
            return Err(Error::domain(format!(
                "joint law has {} entries, expected 2^{n}",
                joint.len()
            )));
        }
        if joint.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::domain("joint probabilities must be nonnegative"));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!("joint law has mass {total}")));
        }
        let mut neighborhoods = neighborhoods;
        for (i, nb) in neighborhoods.iter_mut().enumerate() {
            if let Some(j) = nb.iter().find(|&&j| j >= n) {
                return Err(Error::domain(format!("neighbour {j} of {i} out of range")));
            }
            nb.push(i);
            nb.sort_unstable();
            nb.dedup();
        }
        let p = (0..n)
            .map(|i| {
                joint
                    .iter()
                    .enumerate()
                    .filter(|(mask, _)| mask >> i & 1 == 1)
                    .map(|(_, q)| q)
                    .sum()
            })
            .collect();
        Ok(BernoulliEnsemble {
            p,
            neighborhoods: Some(neighborhoods),
            joint: Some(joint),
        })
    }

    /// `blocks` independent pairs; within a pair the second indicator
    /// follows the first through a stationary two-state Markov step with
    /// `P(1 | 1) = p + rho (1 - p)` and `P(1 | 0) = p (1 - rho)`. Each pair is
    /// its own neighbourhood.
    pub fn markov_pairs(blocks: usize, p: f64, rho: f64) -> Result<Self> {
        check_probabilities(&[p])?;
        let stay = p + rho * (1.0 - p);
        let enter = p * (1.0 - rho);
        check_probabilities(&[stay, enter])?;
        let pair = [
            (1.0 - p) * (1.0 - enter),
            p * (1.0 - stay),
            (1.0 - p) * enter,
            p * stay,
        ];
        let n = 2 * blocks;
        if n > MAX_ENUMERATED {
            return Err(Error::resource(format!(
                "{n} indicators exceed the enumeration cap {MAX_ENUMERATED}"
            )));
        }
        let joint = (0..1usize << n)
            .map(|mask| (0..blocks).map(|b| pair[mask >> (2 * b) & 3]).product())
            .collect();
        let neighborhoods = (0..n).map(|i| vec![i ^ 1]).collect();
        Self::from_joint(joint, neighborhoods)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn lambda(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn neighborhoods(&self) -> Option<&[Vec<usize>]> {
        self.neighborhoods.as_deref()
    }

    pub fn joint(&self) -> Option<&[f64]> {
        self.joint.as_deref()
    }

    /// Exact law of `W = sum X_i` from the joint law.
    pub fn law_of_sum(&self) -> Result<LatticePmf> {
        let joint = self
            .joint
            .as_ref()
            .ok_or_else(|| Error::precondition("ensemble has no joint law"))?;
        let mut weights = vec![0.0; self.n() + 1];
        for (mask, q) in joint.iter().enumerate() {
            weights[mask.count_ones() as usize] += q;
        }
        LatticePmf::new(0, weights, 0.0)
    }
}

/// Local-dependence bound for `d_TV(L(W), Po(lambda))`:
///
/// `sum {p_i^2 + p_i E Y_i + E(X_i Y_i)} min(1, 1/lambda)
///  + sum E|E(X_i | W~_i) - p_i| 2 min(1, lambda^{-1/2})`,
///
/// where `Y_i` sums the other indicators in the neighbourhood of `i` and
/// `W~_i = W - X_i - Y_i`. All expectations are exact sums over the joint law.
pub fn local_dependence_bound(e: &BernoulliEnsemble) -> Result<BoundCertificate> {
    let joint = e
        .joint()
        .ok_or_else(|| Error::precondition("local dependence bound needs the joint law"))?;
    let neighborhoods = e
        .neighborhoods()
        .ok_or_else(|| Error::precondition("local dependence bound needs neighbourhoods"))?;
    let n = e.n();
    let lambda = e.lambda();
    let exact = exact_tv_to_poisson(&e.law_of_sum()?, lambda)?;
    if lambda == 0.0 {
        return Ok(BoundCertificate::new("poisson_local_dependence", Scale::TotalVariation, 0.0, exact)
            .with_component("lambda", 0.0));
    }
    let mut near = 0.0;
    let mut conditional = 0.0;
    for i in 0..n {
        let bit = 1usize << i;
        let hood: usize = neighborhoods[i].iter().map(|&j| 1usize << j).sum();
        let others = hood & !bit;
        let mut mean_y = 0.0;
        let mut mean_xy = 0.0;
        // Per value t of W~_i: P(W~_i = t) and P(X_i = 1, W~_i = t).
        let mut mass = vec![0.0; n + 1];
        let mut x_mass = vec![0.0; n + 1];
        for (mask, &q) in joint.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let x = (mask & bit != 0) as u32 as f64;
            let y = (mask & others).count_ones() as f64;
            let t = (mask & !hood).count_ones() as usize;
            mean_y += q * y;
            mean_xy += q * x * y;
            mass[t] += q;
            x_mass[t] += q * x;
        }
        let pi = e.p()[i];
        near += pi * pi + pi * mean_y + mean_xy;
        conditional += mass
            .iter()
            .zip(&x_mass)
            .map(|(m, a)| (a - pi * m).abs())
            .sum::<f64>();
    }
    let (diff_factor, sup_factor) = (lambda.recip().min(1.0), 2.0 * lambda.sqrt().recip().min(1.0));
    let bound = near * diff_factor + conditional * sup_factor;
    Ok(
        BoundCertificate::new("poisson_local_dependence", Scale::TotalVariation, bound, exact)
            .with_component("lambda", lambda)
            .with_component("neighbourhood_term", near)
            .with_component("conditional_term", conditional)
            .with_check(ChainCheck::at_most("exact_within_bound", exact.hi, bound, 0.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn window(lambda: f64) -> usize {
        poisson_pmf(lambda, DEFAULT_TRUNCATION_EPS).unwrap().end() as usize + 1
    }

    fn max_residual(h: &[f64], sol: &SteinSolution) -> f64 {
        let pmf: f64 = {
            let mut p = (-sol.lambda).exp();
            let mut s = 0.0;
            for (j, hj) in h.iter().enumerate() {
                if j > 0 {
                    p *= sol.lambda / j as f64;
                }
                s += hj * p;
            }
            s
        };
        (0..h.len() - 1)
            .map(|w| (poisson_op_apply(sol, w).unwrap() - (h[w] - pmf)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn operator_examples() {
        let id = |lambda, len: usize| {
            SteinSolution::from_values((0..len).map(|w| w as f64).collect(), lambda).unwrap()
        };
        assert_eq!(poisson_op_apply(&id(1.0, 10), 3).unwrap(), -5.0);
        let law = poisson_pmf(2.0, 1e-15).unwrap();
        let e = operator_expectation(&id(2.0, law.end() as usize + 2), &law).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
        let ones = SteinSolution::from_values(vec![1.0; 6], 3.0).unwrap();
        assert_eq!(poisson_op_apply(&ones, 3).unwrap(), 0.0);
        assert!(matches!(poisson_op_apply(&ones, 5), Err(Error::Range(_))));
    }

    #[test]
    fn indicator_of_zero_at_rate_one() {
        let mut h = vec![0.0; window(1.0)];
        h[0] = 1.0;
        let sol = solve_stein_poisson(&h, 1.0).unwrap();
        let e1 = (-1.0f64).exp();
        assert_abs_diff_eq!(sol.backward_form(0).unwrap(), 1.0 - e1, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.backward_form(1).unwrap(), 1.0 - 2.0 * e1, epsilon = 1e-14);
        assert_eq!(sol.values[0], 0.0);
    }

    #[test]
    fn constant_h_gives_zero() {
        let sol = solve_stein_poisson(&vec![0.7; window(3.0)], 3.0).unwrap();
        assert!(sol.sup_norm <= 1e-15);
    }

    #[test]
    fn short_window_is_rejected() {
        let err = solve_stein_poisson(&[0.0; 5], 4.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn two_forms_agree_with_direct_sums() {
        // Oracle: F(k) p(k) = sum_{j<=k} g(j) p(j), evaluated where it is accurate.
        let lambda = 5.0;
        let len = window(lambda);
        let h: Vec<f64> = (0..len).map(|j| ((j * 7) % 5) as f64 / 4.0).collect();
        let sol = solve_stein_poisson(&h, lambda).unwrap();
        let law = poisson_pmf(lambda, 1e-300).unwrap();
        let mean = law.expect(|j| h[(j as usize).min(len - 1)]);
        let mut partial = 0.0;
        for k in 0..12 {
            partial += (h[k] - mean) * law.prob(k as i64);
            let direct = partial / law.prob(k as i64);
            assert_abs_diff_eq!(sol.backward_form(k).unwrap(), direct, epsilon = 1e-11);
        }
    }

    #[test]
    fn magic_factor_examples() {
        assert_eq!(magic_factor_bounds(4.0).unwrap(), (0.5, 1.0));
        assert_eq!(magic_factor_bounds(0.25).unwrap(), (2.0, 2.0));
        assert_eq!(magic_factor_bounds(1.0).unwrap(), (2.0, 2.0));
        assert!(magic_factor_bounds(0.0).is_err());
    }

    #[test]
    fn independent_bound_examples() {
        let c = independent_bound(&[0.05; 50]).unwrap();
        assert_abs_diff_eq!(c.bound, 0.05, epsilon = 1e-15);
        assert!(c.passed());
        let c = independent_bound(&[0.1]).unwrap();
        assert_abs_diff_eq!(c.bound, 0.01, epsilon = 1e-15);
        let e = (-0.1f64).exp();
        let oracle = 0.5 * ((0.9 - e).abs() + (0.1 - 0.1 * e).abs() + (1.0 - e - 0.1 * e));
        assert!(c.exact.lo - 1e-15 <= oracle && oracle <= c.exact.hi + 1e-15);
        assert!(matches!(independent_bound(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn lecam_and_prohorov_examples() {
        assert_abs_diff_eq!(lecam_bound(&[0.05; 50]).unwrap(), 0.4, epsilon = 1e-14);
        assert!(matches!(lecam_bound(&[0.3, 0.1]), Err(Error::Precondition(_))));
        assert_abs_diff_eq!(lecam_bound(&[0.25]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(prohorov_binomial_bound(100, 0.01, 1.0).unwrap(), 0.01, epsilon = 1e-15);
        assert_eq!(prohorov_binomial_bound(7, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(prohorov_binomial_bound(10, 0.5, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn local_dependence_collapses_under_independence() {
        let p = vec![0.1, 0.2, 0.05, 0.3, 0.15];
        let e = BernoulliEnsemble::independent(p.clone()).unwrap();
        let local = local_dependence_bound(&e).unwrap();
        let indep = independent_bound(&p).unwrap();
        assert_abs_diff_eq!(local.bound, indep.bound, epsilon = 1e-14);
        assert_abs_diff_eq!(local.component("conditional_term").unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(local.exact.hi, indep.exact.hi, epsilon = 1e-14);
    }

    #[test]
    fn local_dependence_markov_pairs() {
        let e = BernoulliEnsemble::markov_pairs(3, 0.1, 0.4).unwrap();
        assert_eq!(e.n(), 6);
        for &q in e.p() {
            assert_abs_diff_eq!(q, 0.1, epsilon = 1e-15);
        }
        let c = local_dependence_bound(&e).unwrap();
        assert!(c.passed(), "{c:?}");
        // Blocks are independent of each other, so W~_i is independent of X_i.
        assert_abs_diff_eq!(c.component("conditional_term").unwrap(), 0.0, epsilon = 1e-15);
        // Oracle for the neighbourhood term: per index p^2 + p^2 + P(X_i = X_j = 1).
        let expected = 6.0 * (0.01 + 0.01 + 0.1 * (0.1 + 0.4 * 0.9));
        assert_abs_diff_eq!(c.component("neighbourhood_term").unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn local_dependence_with_global_dependence() {
        // Two indicators sharing no neighbourhood but correlated.
        let joint = vec![0.7, 0.1, 0.1, 0.1];
        let e = BernoulliEnsemble::from_joint(joint, vec![vec![], vec![]]).unwrap();
        let c = local_dependence_bound(&e).unwrap();
        assert!(c.component("conditional_term").unwrap() > 0.0);
        assert!(c.passed());
    }

    #[test]
    fn zero_ensemble() {
        let e = BernoulliEnsemble::independent(vec![0.0; 4]).unwrap();
        let c = local_dependence_bound(&e).unwrap();
        assert_eq!(c.bound, 0.0);
        assert_eq!(c.exact, DistanceInterval::zero());
    }

    #[test]
    fn missing_joint_is_rejected() {
        let e = BernoulliEnsemble::independent(vec![0.01; 25]).unwrap();
        assert!(matches!(local_dependence_bound(&e), Err(Error::Precondition(_))));
    }

    const RATES: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

    proptest! {
        #[test]
        fn residual_is_exact(seed in proptest::collection::vec(-1.0f64..1.0, 60), k in 0usize..5) {
            let lambda = RATES[k];
            let len = window(lambda);
            let h: Vec<f64> = seed.iter().cycle().take(len).copied().collect();
            let sol = solve_stein_poisson(&h, lambda).unwrap();
            prop_assert!(max_residual(&h, &sol) <= 1e-12);
        }

        #[test]
        fn magic_factors_dominate(seed in proptest::collection::vec(-1.0f64..1.0, 60), k in 0usize..5) {
            let lambda = RATES[k];
            let h: Vec<f64> = seed.iter().cycle().take(window(lambda)).copied().collect();
            let sol = solve_stein_poisson(&h, lambda).unwrap();
            let (diff, sup) = magic_factor_bounds(lambda).unwrap();
            prop_assert!(sol.diff_norm <= diff);
            prop_assert!(sol.sup_norm <= sup);
        }

        #[test]
        fn stein_identity_reproduces_mean_difference(
            raw in proptest::collection::vec(0.0f64..1.0, 1..15),
            seed in proptest::collection::vec(-1.0f64..1.0, 40),
            k in 0usize..5,
        ) {
            let lambda = RATES[k];
            let len = window(lambda).max(raw.len() + 2);
            let h: Vec<f64> = seed.iter().cycle().take(len).copied().collect();
            let sol = solve_stein_poisson(&h, lambda).unwrap();
            let total: f64 = raw.iter().sum();
            let law = LatticePmf::new(0, raw.iter().map(|r| r / total).collect(), 0.0).unwrap();
            let po = poisson_pmf(lambda, 1e-15).unwrap();
            let eh_w = law.expect(|j| h[j as usize]);
            let eh_z = po.expect(|j| h.get(j as usize).copied().unwrap_or(0.0));
            prop_assert!((operator_expectation(&sol, &law).unwrap() - (eh_w - eh_z)).abs() <= 1e-10);
        }

        #[test]
        fn independent_bound_dominates_and_le_cam_is_weaker(p in proptest::collection::vec(0.0f64..0.25, 1..40)) {
            prop_assume!(p.iter().sum::<f64>() > 1e-3);
            let c = independent_bound(&p).unwrap();
            prop_assert!(c.passed());
            prop_assert!(c.bound <= lecam_bound(&p).unwrap());
        }
    }
}
