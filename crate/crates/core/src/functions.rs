//! Real functions shared by the Stein operators: differentiable test
//! functions, polynomials and (possibly discontinuous) test functions `h`.

use std::fmt;
use std::sync::Arc;

use crate::dist::std_normal_cdf;

/// A real function together with its first derivative.
pub trait C1 {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
}

/// A real function with first and second derivatives.
pub trait C2: C1 {
    fn d2(&self, x: f64) -> f64;
}

/// Dense polynomial with coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    /// The monomial `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial { coeffs: vec![0.0] };
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c)
            .collect();
        Polynomial { coeffs }
    }
}

impl C1 for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn d1(&self, x: f64) -> f64 {
        self.derivative().eval(x)
    }
}

impl C2 for Polynomial {
    fn d2(&self, x: f64) -> f64 {
        self.derivative().derivative().eval(x)
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth function given by closures for the value and two derivatives.
#[derive(Clone)]
pub struct Smooth {
    f: RealFn,
    df: RealFn,
    d2f: RealFn,
}

impl Smooth {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Smooth {
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }
}

impl fmt::Debug for Smooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Smooth(..)")
    }
}

impl C1 for Smooth {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn d1(&self, x: f64) -> f64 {
        (self.df)(x)
    }
}

impl C2 for Smooth {
    fn d2(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }
}

/// A test function `h` for the normal Stein equation.
///
/// Discontinuities must be declared through `jumps` so that quadrature
/// never integrates across them. When `E h(Z)` for `Z ~ N(0,1)` is known in
/// closed form it can be attached and is used instead of quadrature.
#[derive(Clone)]
pub struct TestFunction {
    eval: RealFn,
    jumps: Vec<f64>,
    normal_mean: Option<f64>,
}

impl TestFunction {
    pub fn new(h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction {
            eval: Arc::new(h),
            jumps: Vec::new(),
            normal_mean: None,
        }
    }

    pub fn with_jumps(mut self, mut jumps: Vec<f64>) -> Self {
        jumps.sort_by(f64::total_cmp);
        jumps.dedup();
        self.jumps = jumps;
        self
    }

    pub fn with_normal_mean(mut self, mean: f64) -> Self {
        self.normal_mean = Some(mean);
        self
    }

    /// Indicator of the half line `(-inf, a]`.
    pub fn half_line(a: f64) -> Self {
        TestFunction::new(move |x| if x <= a { 1.0 } else { 0.0 })
            .with_jumps(vec![a])
            .with_normal_mean(std_normal_cdf(a))
    }

    pub fn constant(c: f64) -> Self {
        TestFunction::new(move |_| c).with_normal_mean(c)
    }

    pub fn identity() -> Self {
        TestFunction::new(|x| x).with_normal_mean(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn normal_mean(&self) -> Option<f64> {
        self.normal_mean
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("jumps", &self.jumps)
            .field("normal_mean", &self.normal_mean)
            .finish_non_exhaustive()
    }
}
