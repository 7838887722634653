//! The concentration argument behind the Berry-Esseen theorem for sums of
//! i.i.d. variables `W_n = X_1 + ... + X_n` with `E X = 0`, `E X^2 = 1/n`.
//!
//! Everything rests on the identity `E{W_n f(W_n)} = E int f'(W_{n-1} + t) K(t) dt`
//! with the K-function `K(t) = n E X [1(0 < t < X) - 1(X < t < 0)]`. `K` is a
//! probability density, piecewise constant between 0 and the atoms of `X`,
//! so integrals of derivatives against it are exact telescoping sums.

use crate::certificate::{BoundCertificate, ChainCheck, Scale};
use crate::dist::{convolve_power, DistanceInterval, FiniteRv};
use crate::error::{Error, Result};
use crate::functions::C1;

const MOMENT_TOL: f64 = 1e-12;
const K_TOL: f64 = 1e-12;

/// Piecewise-constant K-function of a centred variable.
#[derive(Debug, Clone, PartialEq)]
pub struct KFunction {
    breakpoints: Vec<f64>,
    plateau_values: Vec<f64>,
    beta: f64,
    n: usize,
}

impl KFunction {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Value on `(breakpoints[k], breakpoints[k + 1])`.
    pub fn plateau_values(&self) -> &[f64] {
        &self.plateau_values
    }

    /// `n^{3/2} E|X|^3`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn plateaus(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.plateau_values)
            .map(|(b, &k)| (b[0], b[1], k))
    }

    /// `K(t)`; at a breakpoint, the value on the plateau to its right.
    pub fn eval(&self, t: f64) -> f64 {
        self.plateaus()
            .find(|&(lo, hi, _)| lo <= t && t < hi)
            .map_or(0.0, |p| p.2)
    }

    pub fn integral(&self) -> f64 {
        self.plateaus().map(|(lo, hi, k)| k * (hi - lo)).sum()
    }

    /// `int |t| K(t) dt`; no plateau straddles 0.
    pub fn abs_first_moment(&self) -> f64 {
        self.plateaus()
            .map(|(lo, hi, k)| k * 0.5 * (hi * hi - lo * lo).abs())
            .sum()
    }

    /// `int_{lo <= t <= hi} K(t) dt`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.plateaus()
            .map(|(a, b, k)| k * (b.min(hi) - a.max(lo)).max(0.0))
            .sum()
    }

    /// `int f'(w + t) K(t) dt` for absolutely continuous `f`, as
    /// `sum_k K_k (f(w + b_{k+1}) - f(w + b_k))`.
    pub fn integrate_derivative(&self, f: impl Fn(f64) -> f64, w: f64) -> f64 {
        self.plateaus()
            .map(|(lo, hi, k)| k * (f(w + hi) - f(w + lo)))
            .sum()
    }
}

fn check_moments(x: &FiniteRv, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("sample count must be positive"));
    }
    let mean = x.mean();
    if mean.abs() > MOMENT_TOL {
        return Err(Error::precondition(format!("E X = {mean}, not 0")));
    }
    let second = x.moment(2);
    let target = 1.0 / n as f64;
    if (second - target).abs() > MOMENT_TOL {
        return Err(Error::precondition(format!("E X^2 = {second}, not 1/n = {target}")));
    }
    Ok(())
}

/// Builds `K(t) = n E X [1(0 < t < X) - 1(X < t < 0)]` exactly, and checks
/// `int K = 1` and `int |t| K = beta / (2 sqrt n)`.
pub fn k_function(x: &FiniteRv, n: usize) -> Result<KFunction> {
    check_moments(x, n)?;
    let nf = n as f64;
    let mut breakpoints: Vec<f64> = x.values().chain([0.0]).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let plateau_values = breakpoints
        .windows(2)
        .map(|b| {
            let (lo, hi) = (b[0], b[1]);
            if lo >= 0.0 {
                nf * x.atoms().iter().filter(|a| a.0 >= hi).map(|a| a.0 * a.1).sum::<f64>()
            } else {
                nf * x.atoms().iter().filter(|a| a.0 <= lo).map(|a| -a.0 * a.1).sum::<f64>()
            }
        })
        .collect();
    let k = KFunction {
        breakpoints,
        plateau_values,
        beta: nf.powf(1.5) * x.abs_moment(3),
        n,
    };
    let mass = k.integral();
    if (mass - 1.0).abs() > K_TOL {
        return Err(Error::precondition(format!("K integrates to {mass}")));
    }
    let moment = k.abs_first_moment();
    let target = k.beta / (2.0 * nf.sqrt());
    if (moment - target).abs() > K_TOL {
        return Err(Error::precondition(format!("int |t| K = {moment}, expected {target}")));
    }
    Ok(k)
}

fn partial_sums(x: &FiniteRv, n: usize) -> Result<(FiniteRv, FiniteRv)> {
    Ok((convolve_power(x, n - 1)?, convolve_power(x, n)?))
}

/// Both sides of `E{W_n f(W_n)} = E int f'(W_{n-1} + t) K(t) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluates both sides exactly from the laws of `W_{n-1}` and `W_n`.
/// Only values of `f` are needed; the right side telescopes over the
/// plateaus of `K`.
pub fn identity_check(x: &FiniteRv, n: usize, f: impl Fn(f64) -> f64) -> Result<IdentitySides> {
    let k = k_function(x, n)?;
    let (w_prev, w_n) = partial_sums(x, n)?;
    let lhs = w_n.expect(|w| w * f(w));
    let rhs = w_prev.expect(|w| k.integrate_derivative(&f, w));
    Ok(IdentitySides {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `E{W_n f(W_n)}` through exchangeability of the summands:
/// `n E[X_n (f(W_{n-1} + X_n) - f(W_{n-1}))]`.
pub fn symmetry_form(x: &FiniteRv, n: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    check_moments(x, n)?;
    let w_prev = convolve_power(x, n - 1)?;
    Ok(n as f64 * w_prev.expect(|w| x.expect(|v| v * (f(w + v) - f(w)))))
}

/// The ramp `g_x`: constant `-(b - a)/2 - x` up to `a - x`, slope one on
/// `[a - x, b + x]`, constant `(b - a)/2 + x` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    a: f64,
    b: f64,
    x: f64,
}

impl Ramp {
    pub fn sup_norm(&self) -> f64 {
        0.5 * (self.b - self.a) + self.x
    }
}

impl C1 for Ramp {
    fn value(&self, w: f64) -> f64 {
        (w - 0.5 * (self.a + self.b)).clamp(-self.sup_norm(), self.sup_norm())
    }

    fn d1(&self, w: f64) -> f64 {
        if self.a - self.x <= w && w <= self.b + self.x {
            1.0
        } else {
            0.0
        }
    }
}

pub fn g_x(a: f64, b: f64, x: f64) -> Result<Ramp> {
    if !(a < b) {
        return Err(Error::domain(format!("need a < b, got a = {a}, b = {b}")));
    }
    if !(x > 0.0) {
        return Err(Error::domain(format!("ramp width {x} must be positive")));
    }
    Ok(Ramp { a, b, x })
}

/// `P(a <= W_{n-1} <= b) <= (b - a) + 2 beta / sqrt n`, certified against the
/// exact probability, with every step of the argument checked numerically.
pub fn concentration_lemma_check(x: &FiniteRv, n: usize, a: f64, b: f64) -> Result<BoundCertificate> {
    let k = k_function(x, n)?;
    let c = k.beta() / (n as f64).sqrt();
    let ramp = g_x(a, b, c)?;
    let (w_prev, w_n) = partial_sums(x, n)?;
    let prob = w_prev.prob_between(a, b);
    let bound = (b - a) + 2.0 * c;

    let below = k.mass_between(f64::NEG_INFINITY, c);
    let within = k.mass_between(-c, c);
    let ramp_integral = w_prev.expect(|w| k.integrate_derivative(|u| ramp.value(u), w));
    let mean_wg = w_n.expect(|w| w * ramp.value(w));
    let mean_abs_wg = w_n.expect(|w| (w * ramp.value(w)).abs());

    Ok(
        BoundCertificate::new("concentration_lemma", Scale::Probability, bound, DistanceInterval::exact(prob))
            .with_component("beta", k.beta())
            .with_component("window", b - a)
            .with_component("ramp_sup", ramp.sup_norm())
            .with_check(ChainCheck::at_most("half_mass_below", 0.5, below, K_TOL))
            .with_check(ChainCheck::at_most("half_mass_within", 0.5, within, K_TOL))
            .with_check(ChainCheck::at_most("ramp_integral_lower", prob * within, ramp_integral, 1e-12))
            .with_check(ChainCheck::equal("k_identity", mean_wg, ramp_integral, 1e-10))
            .with_check(ChainCheck::at_most("probability_vs_mean", prob, 2.0 * mean_wg, 1e-12))
            .with_check(ChainCheck::at_most("mean_vs_abs", mean_wg, mean_abs_wg, 1e-12))
            .with_check(ChainCheck::at_most("abs_vs_bound", 2.0 * mean_abs_wg, bound, 1e-12)),
    )
}

/// `E int {f'(W_{n-1} + X_n) - f'(W_{n-1} + t)} K(t) dt`, which equals
/// `E{f'(W_n) - W_n f(W_n)}`. Fails if `f` is not finite on the points it is
/// evaluated at (for example outside the grid of a tabulated solution).
pub fn berry_esseen_rhs(x: &FiniteRv, n: usize, f: &impl C1) -> Result<f64> {
    let k = k_function(x, n)?;
    let (w_prev, w_n) = partial_sums(x, n)?;
    let first = w_n.expect(|w| f.d1(w));
    let second = w_prev.expect(|w| k.integrate_derivative(|u| f.value(u), w));
    let value = first - second;
    if !value.is_finite() {
        return Err(Error::domain("f does not cover the support of W_n"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{for_each_outcome, kolmogorov_distance_to_normal, std_normal_cdf};
    use crate::functions::Polynomial;
    use crate::stein_normal::{solve_stein_normal, DensitySpec, Grid};
    use crate::TestFunction;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sign(n: usize) -> FiniteRv {
        FiniteRv::symmetric_sign((n as f64).sqrt().recip())
    }

    /// Centred variable with the given atoms and weights, scaled to variance 1/n.
    fn population(values: &[f64], weights: &[f64], n: usize) -> FiniteRv {
        let total: f64 = weights.iter().sum();
        let raw = FiniteRv::new(values.iter().zip(weights).map(|(&v, &w)| (v, w / total)).collect()).unwrap();
        let m = raw.mean();
        let centred = FiniteRv::new(raw.atoms().iter().map(|&(v, p)| (v - m, p)).collect()).unwrap();
        centred.scaled((centred.moment(2) * n as f64).sqrt().recip())
    }

    #[test]
    fn symmetric_two_point_k() {
        for n in [1usize, 4, 25, 100] {
            let k = k_function(&sign(n), n).unwrap();
            let s = (n as f64).sqrt();
            assert_abs_diff_eq!(k.beta(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(k.eval(0.5 / s), s / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(k.eval(-0.5 / s), s / 2.0, epsilon = 1e-12);
            assert_eq!(k.eval(2.0 / s), 0.0);
            assert_abs_diff_eq!(k.integral(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(k.abs_first_moment(), 0.5 / s, epsilon = 1e-14);
        }
    }

    #[test]
    fn three_point_k_against_direct_formula() {
        let n = 7;
        let x = population(&[-1.0, 0.5, 2.0], &[0.3, 0.5, 0.2], n);
        let k = k_function(&x, n).unwrap();
        assert_eq!(k.plateau_values().len(), 3);
        // Oracle: evaluate n E X [1(0 < t < X) - 1(X < t < 0)] at interior points.
        for w in k.breakpoints().windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let direct = n as f64
                * x.expect(|v| v * (((0.0 < t && t < v) as u8 as f64) - ((v < t && t < 0.0) as u8 as f64)));
            assert_abs_diff_eq!(k.eval(t), direct, epsilon = 1e-14);
        }
        assert!(k.plateau_values().iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(k.integral(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn uncentred_is_rejected() {
        let x = FiniteRv::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!(matches!(k_function(&x, 4), Err(Error::Precondition(_))));
    }

    #[test]
    fn identity_examples() {
        let x = sign(3);
        let lin = identity_check(&x, 3, |w| w).unwrap();
        assert_abs_diff_eq!(lin.lhs, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lin.rhs, 1.0, epsilon = 1e-14);
        let sq = identity_check(&x, 3, |w| w * w).unwrap();
        assert_abs_diff_eq!(sq.lhs, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.rhs, 0.0, epsilon = 1e-15);
        let cube = identity_check(&x, 3, |w| w.powi(3)).unwrap();
        // Oracle: the eight outcomes of (X_1, X_2, X_3).
        let mut lhs = 0.0;
        for_each_outcome(&[x.clone(), x.clone(), x.clone()], 8, |v, p| {
            let w: f64 = v.iter().sum();
            lhs += p * w.powi(4);
        })
        .unwrap();
        assert_abs_diff_eq!(cube.lhs, lhs, epsilon = 1e-14);
        assert!(cube.residual <= 1e-12);
    }

    #[test]
    fn ramp_examples() {
        let g = g_x(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(g.value(0.0), 0.0);
        assert_eq!(g.value(-1.0 - 0.5 - 7.0), -1.5);
        assert_eq!(g_x(0.0, 0.2, 0.1).unwrap().sup_norm(), 0.2);
        assert_eq!(g.d1(1.5), 1.0);
        assert_eq!(g.d1(1.6), 0.0);
        assert!(g_x(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn lemma_anchor() {
        let n = 100;
        let c = concentration_lemma_check(&sign(n), n, -0.1, 0.1).unwrap();
        assert_abs_diff_eq!(c.bound, 0.4, epsilon = 1e-12);
        // Oracle: W_99 sits on odd multiples of 0.1; the window holds +-0.1, i.e.
        // 50 or 49 heads out of 99, each with mass C(99, 49) / 2^99.
        let mut c99_49 = 1u128;
        for k in 0..49u128 {
            c99_49 = c99_49 * (99 - k) / (k + 1);
        }
        let oracle = 2.0 * c99_49 as f64 / 2f64.powi(99);
        assert_abs_diff_eq!(c.exact.hi, oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(c.exact.hi, 0.159, epsilon = 1e-3);
        assert!(c.passed(), "{c:?}");
    }

    #[test]
    fn near_degenerate_window() {
        let n = 16;
        let c = concentration_lemma_check(&sign(n), n, 0.25 - 1e-9, 0.25).unwrap();
        assert_abs_diff_eq!(c.bound, 2.0 / 4.0, epsilon = 1e-8);
        let w15 = convolve_power(&sign(n), 15).unwrap();
        assert_abs_diff_eq!(c.exact.hi, w15.atoms()[w15.position(0.25).unwrap()].1, epsilon = 1e-15);
        assert!(c.passed());
        let empty = concentration_lemma_check(&sign(n), n, 0.1, 0.1 + 1e-9).unwrap();
        assert_eq!(empty.exact.hi, 0.0);
    }

    #[test]
    fn two_forms_of_the_first_identity() {
        let n = 6;
        let x = population(&[-2.0, -0.5, 1.0, 3.0], &[0.2, 0.3, 0.4, 0.1], n);
        for f in [
            Polynomial::new(vec![0.1, 0.7, -0.3, 0.2]),
            Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]),
        ] {
            let sym = symmetry_form(&x, n, |w| f.eval(w)).unwrap();
            let k = identity_check(&x, n, |w| f.eval(w)).unwrap();
            assert_abs_diff_eq!(sym, k.lhs, epsilon = 1e-10);
            assert_abs_diff_eq!(sym, k.rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn berry_esseen_rhs_matches_distribution_gap() {
        let n = 9;
        let x = sign(n);
        let h = TestFunction::half_line(0.0);
        let sol = solve_stein_normal(&h, &DensitySpec::standard_normal(), &Grid::standard()).unwrap();
        let rhs = berry_esseen_rhs(&x, n, &sol).unwrap();
        let w = convolve_power(&x, n).unwrap();
        let gap = w.cdf(0.0) - std_normal_cdf(0.0);
        assert_abs_diff_eq!(rhs, gap, epsilon = 1e-8);
        assert!(rhs.abs() <= 0.5 * k_function(&x, n).unwrap().beta() / 3.0);

        let linear = Polynomial::new(vec![0.3, 2.0]);
        assert_eq!(berry_esseen_rhs(&x, n, &linear).unwrap(), 2.0 - w.expect(|v| v * linear.eval(v)) - (2.0 - 2.0));

        let far = TestFunction::half_line(10.0);
        let sol = solve_stein_normal(&far, &DensitySpec::standard_normal(), &Grid::standard()).unwrap();
        assert!(berry_esseen_rhs(&sign(4), 4, &sol).unwrap().abs() <= 1e-6);

        let narrow = Grid::new(-1.0, 1.0, 1e-3).unwrap();
        let sol = solve_stein_normal(&h, &DensitySpec::standard_normal(), &narrow).unwrap();
        assert!(berry_esseen_rhs(&x, n, &sol).is_err());
    }

    #[test]
    fn kolmogorov_rate_is_stable() {
        let scaled: Vec<f64> = [25usize, 100, 400]
            .iter()
            .map(|&n| {
                let w = convolve_power(&sign(n), n).unwrap();
                kolmogorov_distance_to_normal(&w) * (n as f64).sqrt()
            })
            .collect();
        let mean = scaled.iter().sum::<f64>() / 3.0;
        assert!(scaled.iter().all(|s| (s - mean).abs() <= 0.2 * mean), "{scaled:?}");
    }

    fn random_population() -> impl Strategy<Value = (FiniteRv, usize)> {
        (
            proptest::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 2..6),
            2usize..=10,
        )
            .prop_filter_map("degenerate", |(atoms, n)| {
                let values: Vec<f64> = atoms.iter().map(|a| a.0).collect();
                let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
                let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - values.iter().cloned().fold(f64::INFINITY, f64::min);
                (spread > 0.1).then(|| (population(&values, &weights, n), n))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn k_invariants((x, n) in random_population()) {
            let k = k_function(&x, n).unwrap();
            prop_assert!((k.integral() - 1.0).abs() <= 1e-12);
            prop_assert!((k.abs_first_moment() - k.beta() / (2.0 * (n as f64).sqrt())).abs() <= 1e-12);
            prop_assert!(k.plateau_values().iter().all(|&v| v >= 0.0));
            let c = k.beta() / (n as f64).sqrt();
            prop_assert!(k.mass_between(f64::NEG_INFINITY, c) >= 0.5 - 1e-12);
        }

        #[test]
        fn lemma_holds_on_random_windows((x, n) in random_population(), a in -2.0f64..2.0, width in 0.001f64..1.5) {
            let c = concentration_lemma_check(&x, n, a, a + width).unwrap();
            prop_assert!(c.passed(), "{:?}", c);
        }

        #[test]
        fn first_identity_on_polynomials((x, n) in random_population(), coeffs in proptest::collection::vec(-1.0f64..1.0, 1..6)) {
            let f = Polynomial::new(coeffs);
            prop_assert!(identity_check(&x, n, |w| f.eval(w)).unwrap().residual <= 1e-10);
        }
    }
}
