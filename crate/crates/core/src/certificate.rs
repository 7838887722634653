//! Certificates pairing a computed error bound with the exact distance it
//! is supposed to dominate.

use std::fmt;

use crate::dist::DistanceInterval;

/// The scale on which a bound and its exact counterpart are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// `d_TV(P, Q) = sup_A |P(A) - Q(A)|`.
    TotalVariation,
    /// `sup_{|h| <= 1} |E h(W) - E h(Z)|`, which equals `2 d_TV`.
    TestFunctionDifference,
    /// `sup_z |P(W <= z) - Phi(z)|`.
    Kolmogorov,
    /// A plain probability, as in a concentration inequality.
    Probability,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::TotalVariation => "total_variation",
            Scale::TestFunctionDifference => "test_function_difference",
            Scale::Kolmogorov => "kolmogorov",
            Scale::Probability => "probability",
        })
    }
}

/// One numerically verified inequality `lhs <= rhs` from the chain of steps
/// behind a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ChainCheck {
    /// Records `lhs <= rhs + tol`.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        ChainCheck {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs + tol,
        }
    }

    /// Records `|lhs - rhs| <= tol`.
    pub fn equal(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        ChainCheck {
            name: name.into(),
            lhs,
            rhs,
            holds: (lhs - rhs).abs() <= tol,
        }
    }
}

/// A computed bound, its named components, and the exact distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    pub theorem: String,
    pub scale: Scale,
    pub bound: f64,
    pub components: Vec<(String, f64)>,
    pub exact: DistanceInterval,
    /// `bound - exact.hi`; the certificate passes iff this is nonnegative.
    pub margin: f64,
    pub checks: Vec<ChainCheck>,
}

impl BoundCertificate {
    pub fn new(theorem: impl Into<String>, scale: Scale, bound: f64, exact: DistanceInterval) -> Self {
        BoundCertificate {
            theorem: theorem.into(),
            scale,
            bound,
            components: Vec::new(),
            exact,
            margin: bound - exact.hi,
            checks: Vec::new(),
        }
    }

    pub fn with_component(mut self, name: impl Into<String>, value: f64) -> Self {
        self.components.push((name.into(), value));
        self
    }

    pub fn with_check(mut self, check: ChainCheck) -> Self {
        self.checks.push(check);
        self
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    pub fn passed(&self) -> bool {
        self.margin >= 0.0 && self.checks.iter().all(|c| c.holds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_and_pass() {
        let c = BoundCertificate::new("t", Scale::TotalVariation, 0.1, DistanceInterval::new(0.05, 0.06))
            .with_component("x", 2.0);
        assert!((c.margin - 0.04).abs() < 1e-15);
        assert!(c.passed());
        assert_eq!(c.component("x"), Some(2.0));
        let failing = c.with_check(ChainCheck::at_most("step", 1.0, 0.5, 0.0));
        assert!(!failing.passed());
    }
}
