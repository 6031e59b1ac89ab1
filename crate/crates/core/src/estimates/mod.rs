//! Evaluation of the gradient-decay bounds, the Poincaré inequality, the
//! Bernstein pointwise quotient and the `y`-functional decay machinery
//! against recorded trajectories.
//!
//! Every check produces a [`CheckRecord`] with a signed relative margin:
//! positive means the bound holds with slack, `-0.03` means the measured
//! quantity exceeds the bound by 3%.

mod bounds;
mod decay;

use serde::Serialize;

use crate::error::{invalid, Result};

pub use bounds::{
    bernstein_diagnostic, bound_power, bound_sqrt, check_gradient_bounds, poincare_check,
    BernsteinCase, BernsteinTheta,
};
pub use decay::{
    empirical_envelope, fit_decay_rate, select_beta, window_decay_check, y_functional,
    y_shape_check, BetaChoice, DecayFit, DecayModel, Envelope, YFunctional,
};

/// Default relative slack of every bound check.
pub const DEFAULT_TOLERANCE: f64 = 0.05;
/// Absolute slack added on top of the relative one.
pub const ABS_TOLERANCE: f64 = 1e-12;

/// Exponents of the `y`-functional argument for dimension `n`, power `p`
/// and the free parameter `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayParams {
    pub n: usize,
    pub p: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl DecayParams {
    /// `β` must be strictly larger than this.
    pub fn threshold(n: usize, p: f64) -> f64 {
        let n = n as f64;
        ((2.0 * p + 1.0 - n) / n).max(0.0)
    }

    /// Strictly admissible default: `1.25 * threshold + 0.5`.
    pub fn default_beta(n: usize, p: f64) -> f64 {
        Self::threshold(n, p) * 1.25 + 0.5
    }
}

pub fn decay_params(n: usize, p: f64, beta: f64) -> Result<DecayParams> {
    if n == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(invalid(format!("p = {p} must be positive")));
    }
    let threshold = DecayParams::threshold(n, p);
    if !(beta > threshold && beta.is_finite()) {
        return Err(invalid(format!(
            "beta = {beta} is not admissible for N = {n}, p = {p}: need beta > {threshold}"
        )));
    }
    let gamma = n as f64 * (beta + 1.0);
    let eta = gamma - p;
    // written so that p = 1 gives exactly α = 1
    let alpha = (1.0 + eta) / ((1.0 + eta) + (1.0 - p));
    Ok(DecayParams {
        n,
        p,
        beta,
        gamma,
        eta,
        alpha,
    })
}

/// Where the worst margin of a check was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Time { t: f64 },
    Pair { s: f64, t: f64 },
    Node { t: f64, x: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// `(bound - value) / bound` at the worst point; 1 when nothing was
    /// evaluated.
    pub worst_margin: f64,
    pub location: Option<Location>,
    pub tolerance: f64,
    pub passed: bool,
    /// Number of inequalities evaluated.
    pub evaluated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    pub records: Vec<CheckRecord>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn extend(&mut self, other: BoundReport) {
        self.records.extend(other.records);
        self.notes.extend(other.notes);
    }
}

/// Signed relative slack of `value <= bound`, finite for all finite inputs.
pub fn margin(value: f64, bound: f64) -> f64 {
    if bound > ABS_TOLERANCE {
        (bound - value) / bound
    } else {
        ((ABS_TOLERANCE - value) / ABS_TOLERANCE).min(1.0)
    }
}

/// Accumulates `value <= bound * (1 + tol) + ABS_TOLERANCE` over many points.
pub struct Tracker {
    name: String,
    tolerance: f64,
    worst: f64,
    location: Option<Location>,
    passed: bool,
    evaluated: usize,
}

impl Tracker {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            tolerance,
            worst: 1.0,
            location: None,
            passed: true,
            evaluated: 0,
        }
    }

    pub fn check(&mut self, value: f64, bound: f64, at: Location) {
        self.evaluated += 1;
        let ok = value <= bound * (1.0 + self.tolerance) + ABS_TOLERANCE;
        let m = margin(value, bound);
        if !ok {
            self.passed = false;
        }
        if m < self.worst || self.location.is_none() {
            self.worst = m.min(self.worst);
            self.location = Some(at);
        }
    }

    pub fn finish(self) -> CheckRecord {
        CheckRecord {
            name: self.name,
            worst_margin: self.worst,
            location: self.location,
            tolerance: self.tolerance,
            passed: self.passed,
            evaluated: self.evaluated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn params_one_dimension_quadratic() {
        assert_eq!(DecayParams::threshold(1, 2.0), 4.0);
        assert!(decay_params(1, 2.0, 4.0).is_err());
        let d = decay_params(1, 2.0, 5.0).unwrap();
        assert_eq!((d.gamma, d.eta), (6.0, 4.0));
        assert_relative_eq!(d.alpha, 1.25, max_relative = 1e-15);
    }

    #[test]
    fn params_two_dimensions_sublinear() {
        assert_eq!(DecayParams::threshold(2, 0.5), 0.0);
        let d = decay_params(2, 0.5, 1.0).unwrap();
        assert_eq!((d.gamma, d.eta), (4.0, 3.5));
        assert_relative_eq!(d.alpha, 0.9, max_relative = 1e-15);
    }

    #[test]
    fn params_linear_is_strict_and_exact() {
        assert!(decay_params(1, 1.0, 2.0).is_err());
        let d = decay_params(1, 1.0, 2.5).unwrap();
        assert_eq!((d.gamma, d.eta, d.alpha), (3.5, 2.5, 1.0));
    }

    #[test]
    fn params_reject_bad_input() {
        assert!(decay_params(0, 1.0, 3.0).is_err());
        assert!(decay_params(1, 0.0, 3.0).is_err());
        assert!(decay_params(1, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn default_beta_is_admissible() {
        for n in 1..=3 {
            for p in [0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 7.0] {
                assert!(decay_params(n, p, DecayParams::default_beta(n, p)).is_ok());
            }
        }
    }

    #[test]
    fn margins_are_finite_and_signed() {
        assert_eq!(margin(1.0, 2.0), 0.5);
        assert_relative_eq!(margin(2.2, 2.0), -0.1, max_relative = 1e-12);
        assert_eq!(margin(0.0, 0.0), 1.0);
        assert!(margin(1.0, 0.0).is_finite() && margin(1.0, 0.0) < 0.0);
    }

    #[test]
    fn tracker_applies_relative_and_absolute_slack() {
        let mut t = Tracker::new("x", 0.05);
        t.check(1.04, 1.0, Location::Time { t: 1.0 });
        t.check(1e-13, 0.0, Location::Time { t: 2.0 });
        let r = t.finish();
        assert!(r.passed);
        assert_eq!(r.evaluated, 2);
        assert_eq!(r.location, Some(Location::Time { t: 1.0 }));
        let mut t = Tracker::new("x", 0.05);
        t.check(1.06, 1.0, Location::Time { t: 1.0 });
        assert!(!t.finish().passed);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn alpha_trichotomy(n in 1usize..4, p in 0.01f64..6.0, extra in 1e-6f64..10.0) {
            let beta = DecayParams::threshold(n, p) + extra;
            let d = decay_params(n, p, beta).unwrap();
            prop_assert!(d.eta > p + 1.0);
            prop_assert_eq!(d.alpha < 1.0, p < 1.0);
            prop_assert_eq!(d.alpha > 1.0, p > 1.0);
        }

        #[test]
        fn alpha_is_one_only_at_linear(n in 1usize..4, extra in 1e-6f64..10.0) {
            let d = decay_params(n, 1.0, DecayParams::threshold(n, 1.0) + extra).unwrap();
            prop_assert_eq!(d.alpha, 1.0);
        }
    }
}
