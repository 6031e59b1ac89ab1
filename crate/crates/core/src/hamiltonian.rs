//! The gradient nonlinearity `a|ξ|^p` and its smooth regularisation `F_ε`.
//!
//! Everything here is radial, so functions take `s = |ξ|²` instead of the
//! vector `ξ`.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Which closed form of the regularised nonlinearity applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `0 < p <= 1`: `a (ε + s)^{p/2}`
    Sublinear,
    /// `1 < p < 2`: `a (s - ε)(ε + s)^{(p-2)/2}`
    Intermediate,
    /// `p >= 2`: `a s^{p/2}` (no regularisation)
    Superquadratic,
}

impl Branch {
    pub fn of(p: f64) -> Self {
        if p <= 1.0 {
            Branch::Sublinear
        } else if p < 2.0 {
            Branch::Intermediate
        } else {
            Branch::Superquadratic
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub a: f64,
    pub p: f64,
    #[serde(default)]
    pub eps: f64,
}

impl HamiltonianSpec {
    pub fn new(a: f64, p: f64, eps: f64) -> Result<Self> {
        let spec = Self { a, p, eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(invalid(format!("coefficient a = {} is not finite", self.a)));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(invalid(format!("exponent p = {} must be positive", self.p)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(invalid(format!("eps = {} must lie in [0, 1)", self.eps)));
        }
        Ok(())
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Self { eps, ..self }
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn branch(&self) -> Branch {
        Branch::of(self.p)
    }

    /// Constant `K` of the Hölder estimate
    /// `|F(ξ1) - F(ξ2)| <= K ρ^{max(p-1,0)} |ξ1-ξ2|^{min(p,1)}`.
    pub fn holder_constant(&self) -> f64 {
        match self.branch() {
            Branch::Sublinear => self.a,
            Branch::Intermediate => 4.0 * self.a,
            Branch::Superquadratic => self.a * self.p,
        }
    }

    /// `F_ε(0)`, the drift a constant state picks up per unit time.
    pub fn drift_at_rest(&self) -> f64 {
        match self.branch() {
            Branch::Sublinear => self.a * self.eps.powf(0.5 * self.p),
            Branch::Intermediate => -self.a * self.eps.powf(0.5 * self.p),
            Branch::Superquadratic => 0.0,
        }
    }
}

fn check_s(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("|ξ|² = {s} is negative")))
    }
}

/// `a s^{p/2}`.
pub fn h_exact(s: f64, spec: &HamiltonianSpec) -> Result<f64> {
    check_s(s)?;
    Ok(spec.a * s.powf(0.5 * spec.p))
}

#[inline]
pub(crate) fn f_eps_unchecked(s: f64, spec: &HamiltonianSpec) -> f64 {
    let HamiltonianSpec { a, p, eps } = *spec;
    match Branch::of(p) {
        Branch::Sublinear => a * pow(eps + s, 0.5 * p),
        Branch::Intermediate => {
            if eps == 0.0 {
                a * pow(s, 0.5 * p)
            } else {
                a * (s - eps) * pow(eps + s, 0.5 * (p - 2.0))
            }
        }
        Branch::Superquadratic => a * pow(s, 0.5 * p),
    }
}

/// `x^e` for `x >= 0`, with square-root fast paths for the exponents that
/// common choices of `p` produce.
#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 0.5 {
        x.sqrt()
    } else if e == 0.25 {
        x.sqrt().sqrt()
    } else if e == 1.0 {
        x
    } else if e == 1.5 {
        x * x.sqrt()
    } else {
        x.powf(e)
    }
}

/// Regularised nonlinearity `F_ε` evaluated at `|ξ|² = s`.
pub fn f_eps(s: f64, spec: &HamiltonianSpec) -> Result<f64> {
    check_s(s)?;
    Ok(f_eps_unchecked(s, spec))
}

/// `(∇F_ε)(ξ)·ξ`, from the closed-form radial derivative.
pub fn radial_flux(s: f64, spec: &HamiltonianSpec) -> Result<f64> {
    check_s(s)?;
    let HamiltonianSpec { a, p, eps } = *spec;
    let r = eps + s;
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(match spec.branch() {
        Branch::Sublinear => a * p * s * r.powf(0.5 * p - 1.0),
        Branch::Intermediate => {
            let q = 0.5 * (p - 2.0);
            2.0 * s * a * (r.powf(q) + q * (s - eps) * r.powf(q - 1.0))
        }
        Branch::Superquadratic => a * p * s.powf(0.5 * p),
    })
}

/// `(∇F_ε)(ξ)·ξ − F_ε(ξ) − a(p−1)|ξ|^p`.
///
/// Non-positive for `0 < p <= 1` and non-negative for `p > 1` when `a > 0`.
pub fn structural_defect(s: f64, spec: &HamiltonianSpec) -> Result<f64> {
    check_s(s)?;
    if !(spec.a > 0.0) {
        return Err(invalid("structural_defect requires a > 0"));
    }
    let HamiltonianSpec { a, p, eps } = *spec;
    let r = eps + s;
    let reference = a * (p - 1.0) * s.powf(0.5 * p);
    let euler = match spec.branch() {
        Branch::Superquadratic => return Ok(0.0),
        _ if r == 0.0 => 0.0,
        Branch::Sublinear => a * ((p - 1.0) * s - eps) / r.powf(1.0 - 0.5 * p),
        Branch::Intermediate => {
            let num = (p - 1.0) * r * r + 3.0 * eps * (2.0 - p) * s + eps * eps * (2.0 - p);
            a * num / r.powf(2.0 - 0.5 * p)
        }
    };
    Ok(euler - reference)
}

/// Slack in the Hölder estimate for collinear `ξ1, ξ2` pointing the same way,
/// with `|ξ1|² = s1`, `|ξ2|² = s2`, both inside the ball of radius `rho`.
pub fn holder_gap(s1: f64, s2: f64, rho: f64, spec: &HamiltonianSpec) -> Result<f64> {
    check_s(s1)?;
    check_s(s2)?;
    if !(spec.a > 0.0) {
        return Err(invalid("holder_gap requires a > 0"));
    }
    if !(rho > 0.0) {
        return Err(invalid(format!("radius {rho} must be positive")));
    }
    let (r1, r2) = (s1.sqrt(), s2.sqrt());
    if r1 > rho || r2 > rho {
        return Err(invalid(format!(
            "magnitudes ({r1}, {r2}) exceed the radius {rho}"
        )));
    }
    let p = spec.p;
    let rhs =
        spec.holder_constant() * rho.powf((p - 1.0).max(0.0)) * (r1 - r2).abs().powf(p.min(1.0));
    let lhs = (f_eps_unchecked(s1, spec) - f_eps_unchecked(s2, spec)).abs();
    Ok(rhs - lhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(a: f64, p: f64, eps: f64) -> HamiltonianSpec {
        HamiltonianSpec::new(a, p, eps).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HamiltonianSpec::new(1.0, 0.0, 0.0).is_err());
        assert!(HamiltonianSpec::new(1.0, 1.0, 1.0).is_err());
        assert!(HamiltonianSpec::new(1.0, 1.0, -0.1).is_err());
        assert!(HamiltonianSpec::new(f64::NAN, 1.0, 0.0).is_err());
        assert!(h_exact(-1.0, &spec(1.0, 1.0, 0.0)).is_err());
        assert!(f_eps(-1e-3, &spec(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn exact_values() {
        assert_eq!(h_exact(0.0, &spec(1.0, 0.3, 0.0)).unwrap(), 0.0);
        assert_eq!(h_exact(4.0, &spec(1.0, 3.0, 0.0)).unwrap(), 8.0);
        assert_eq!(h_exact(1.0, &spec(-2.0, 0.5, 0.0)).unwrap(), -2.0);
    }

    #[test]
    fn regularised_values() {
        assert_relative_eq!(f_eps(0.0, &spec(1.0, 1.0, 0.25)).unwrap(), 0.5);
        assert_relative_eq!(
            f_eps(0.0, &spec(1.0, 1.5, 0.25)).unwrap(),
            -0.25 * 2f64.sqrt(),
            epsilon = 1e-15
        );
        let sp = spec(1.3, 2.5, 0.9);
        for s in [0.0, 0.1, 1.0, 7.5] {
            assert_eq!(f_eps(s, &sp).unwrap(), h_exact(s, &sp).unwrap());
        }
    }

    #[test]
    fn eps_zero_matches_exact() {
        for p in [0.2, 0.5, 1.0, 1.2, 1.5, 1.9, 2.0, 3.0] {
            let sp = spec(0.7, p, 0.0);
            for s in [0.0, 1e-6, 0.3, 2.0, 11.0] {
                assert_relative_eq!(
                    f_eps(s, &sp).unwrap(),
                    h_exact(s, &sp).unwrap(),
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn defect_special_cases() {
        for s in [0.0, 0.5, 3.0] {
            assert_eq!(structural_defect(s, &spec(2.0, 2.7, 0.4)).unwrap(), 0.0);
            assert_eq!(structural_defect(s, &spec(1.0, 1.0, 0.0)).unwrap(), 0.0);
        }
        assert!(structural_defect(1.0, &spec(-1.0, 0.5, 0.1)).is_err());
    }

    #[test]
    fn radial_flux_matches_finite_difference() {
        // ξ·∇F(ξ) = d/dλ F(λξ) at λ = 1, i.e. 2 s dF/ds.
        for (p, eps) in [(0.5, 0.1), (1.0, 0.3), (1.5, 0.2), (1.8, 0.05), (3.0, 0.5)] {
            let sp = spec(1.0, p, eps);
            for s in [0.05, 1.0, 4.0] {
                let h = 1e-6_f64;
                let fd = (f_eps(s * (1.0 + h).powi(2), &sp).unwrap()
                    - f_eps(s * (1.0 - h).powi(2), &sp).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(radial_flux(s, &sp).unwrap(), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn defect_sublinear_example() {
        let sp = spec(1.0, 0.5, 0.1);
        let s = 1.0;
        let h = 1e-6_f64;
        let flux = (f_eps(s * (1.0 + h).powi(2), &sp).unwrap()
            - f_eps(s * (1.0 - h).powi(2), &sp).unwrap())
            / (2.0 * h);
        let oracle = flux - f_eps(s, &sp).unwrap() - (0.5 - 1.0) * 1.0;
        let d = structural_defect(s, &sp).unwrap();
        assert!(d < 0.0);
        assert_relative_eq!(d, oracle, epsilon = 1e-8);
    }

    #[test]
    fn holder_gap_simple_cases() {
        let sp = spec(1.0, 1.0, 0.0);
        let gap = holder_gap(4.0, 1.0, 3.0, &sp).unwrap();
        assert_eq!(gap, 0.0);
        let sp = spec(1.0, 1.6, 0.2);
        let g = holder_gap(2.0, 2.0, 2.0, &sp).unwrap();
        assert_eq!(g, 0.0);
        assert!(holder_gap(9.0, 1.0, 2.0, &sp).is_err());
    }

    #[test]
    fn drift_at_rest_matches_f_eps() {
        for p in [0.5, 1.0, 1.5, 2.5] {
            let sp = spec(1.5, p, 0.3);
            assert_relative_eq!(
                sp.drift_at_rest(),
                f_eps(0.0, &sp).unwrap(),
                epsilon = 1e-15
            );
        }
    }
}
