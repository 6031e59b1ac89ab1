use serde::{Deserialize, Serialize};

use super::{BoundReport, Location, Tracker};
use crate::error::{invalid, Error, Result};
use crate::grid::{gradient_magnitude, gradient_squared, oscillation, q_norm, Domain, Field};
use crate::solver::Trajectory;

/// `‖∇u(s + Δt)‖∞ <= sqrt(1/2) osc(s) Δt^{-1/2}`, valid for every `a` and `p`.
pub fn bound_sqrt(osc0: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time lag {dt} must be positive")));
    }
    if !(osc0 >= 0.0) {
        return Err(invalid(format!("oscillation {osc0} must be non-negative")));
    }
    Ok(std::f64::consts::FRAC_1_SQRT_2 * osc0 / dt.sqrt())
}

/// `‖∇u(s + Δt)‖∞ <= (max(p,2) / (a p |1-p|))^{1/p} osc(s)^{1/p} Δt^{-1/p}`.
pub fn bound_power(osc0: f64, dt: f64, a: f64, p: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time lag {dt} must be positive")));
    }
    if !(osc0 >= 0.0) {
        return Err(invalid(format!("oscillation {osc0} must be non-negative")));
    }
    if !(a > 0.0) || !(p > 0.0) || p == 1.0 {
        return Err(invalid(format!(
            "power bound needs a > 0, p > 0, p != 1 (got a = {a}, p = {p})"
        )));
    }
    Ok(power_constant(a, p) * (osc0 / dt).powf(1.0 / p))
}

fn power_constant(a: f64, p: f64) -> f64 {
    (p.max(2.0) / (a * p * (1.0 - p).abs())).powf(1.0 / p)
}

/// Checks both sup-norm gradient bounds at every ordered pair of samples.
///
/// For `a < 0` the bounds are applied with `|a|`; this relies on the
/// `u -> -u` symmetry and is flagged in the report notes.
pub fn check_gradient_bounds(traj: &Trajectory, a: f64, p: f64, tol: f64) -> Result<BoundReport> {
    if !(p > 0.0) || !a.is_finite() {
        return Err(invalid(format!(
            "need p > 0 and finite a (got a = {a}, p = {p})"
        )));
    }
    let samples = &traj.samples;
    let osc: Vec<f64> = samples.iter().map(|s| s.osc().max(0.0)).collect();
    let mut report = BoundReport::default();

    let mut sqrt = Tracker::new("bound_sqrt", tol);
    for (j, late) in samples.iter().enumerate() {
        for (i, early) in samples[..j].iter().enumerate() {
            let lag = late.t - early.t;
            let bound = std::f64::consts::FRAC_1_SQRT_2 * osc[i] / lag.sqrt();
            sqrt.check(
                late.grad_sup,
                bound,
                Location::Pair {
                    s: early.t,
                    t: late.t,
                },
            );
        }
    }
    report.records.push(sqrt.finish());

    if p == 1.0 || a == 0.0 {
        report
            .notes
            .push("bound_power skipped: it requires p != 1 and a != 0".into());
        return Ok(report);
    }
    if a < 0.0 {
        report
            .notes
            .push("a < 0: bound_power evaluated with |a| through the u -> -u symmetry".into());
    }
    let c = power_constant(a.abs(), p);
    let mut power = Tracker::new("bound_power", tol);
    for (j, late) in samples.iter().enumerate() {
        for (i, early) in samples[..j].iter().enumerate() {
            let lag = late.t - early.t;
            let bound = c * (osc[i] / lag).powf(1.0 / p);
            power.check(
                late.grad_sup,
                bound,
                Location::Pair {
                    s: early.t,
                    t: late.t,
                },
            );
        }
    }
    report.records.push(power.finish());
    Ok(report)
}

/// Returns `(osc(f), C ‖∇f‖_q)` with the explicit Morrey-type constant
/// `C = 2 diam / vol^{1/q} * q / (q - N)`.
pub fn poincare_check(f: &Field, q: f64, d: &Domain) -> Result<(f64, f64)> {
    let n = d.dim() as f64;
    if !(q > n) || !q.is_finite() {
        return Err(invalid(format!(
            "Poincaré exponent q = {q} must exceed N = {n}"
        )));
    }
    f.check_shape(d)?;
    let lhs = oscillation(f)?;
    let grad = gradient_magnitude(f, d)?;
    let c = 2.0 * d.diameter() / d.volume().powf(1.0 / q) * (q / (q - n));
    Ok((lhs, c * q_norm(&grad, q, d)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BernsteinCase {
    /// `|∇u|² <= θ(u) / t`
    Sqrt,
    /// `|∇u|² <= θ(u) t^{-2/p}`
    Power,
}

/// Auxiliary function `θ` of the Bernstein quotient `|∇u|² / θ(u)`, written
/// for `a >= 0`; `max0`, `min0` are the extremes of the initial data and
/// `delta > 0` keeps `θ` positive on `[min0, max0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinTheta {
    case: BernsteinCase,
    a: f64,
    p: f64,
    max0: f64,
    min0: f64,
    delta: f64,
}

impl BernsteinTheta {
    pub fn new(
        case: BernsteinCase,
        a: f64,
        p: f64,
        max0: f64,
        min0: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(delta > 0.0) || !(max0 >= min0) || !(p > 0.0) || !(a >= 0.0) {
            return Err(invalid(format!(
                "theta needs delta > 0, max0 >= min0, p > 0, a >= 0 \
                 (got delta = {delta}, max0 = {max0}, min0 = {min0}, p = {p}, a = {a})"
            )));
        }
        if case == BernsteinCase::Power && (p == 1.0 || a == 0.0) {
            return Err(invalid("power-case theta needs p != 1 and a > 0"));
        }
        Ok(Self {
            case,
            a,
            p,
            max0,
            min0,
            delta,
        })
    }

    fn span(&self) -> f64 {
        self.max0 - self.min0 + self.delta
    }

    /// `θ(ξ)`, clipped at zero outside the range where it is positive.
    pub fn eval(&self, xi: f64) -> f64 {
        let (a, p, d) = (self.a, self.p, self.span());
        let value = match self.case {
            BernsteinCase::Sqrt if p <= 1.0 => 0.5 * d * d - 0.5 * (self.max0 - xi).powi(2),
            BernsteinCase::Sqrt => 0.5 * d * d - 0.5 * (xi - self.min0).powi(2),
            BernsteinCase::Power if p < 1.0 => {
                (2.0 / (a * p * (1.0 - p))).powf(2.0 / p)
                    * d.powf((2.0 - p) / p)
                    * (xi - self.min0 + self.delta)
            }
            BernsteinCase::Power if p < 2.0 => {
                (2.0 / (a * p * (p - 1.0))).powf(2.0 / p)
                    * d.powf((2.0 - p) / p)
                    * (self.max0 - xi + self.delta)
            }
            BernsteinCase::Power => {
                ((self.max0 - xi + self.delta).max(0.0) / (a * (p - 1.0))).powf(2.0 / p)
            }
        };
        value.max(0.0)
    }

    /// Time weight multiplying `θ` in the pointwise bound.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self.case {
            BernsteinCase::Sqrt => 1.0 / t,
            BernsteinCase::Power => t.powf(-2.0 / self.p),
        }
    }
}

/// Pointwise check `|∇u(t,x)|² <= θ(u(t,x)) w(t)` at every snapshot node
/// with `t > 0`.
pub fn bernstein_diagnostic(
    traj: &Trajectory,
    d: &Domain,
    a: f64,
    p: f64,
    case: BernsteinCase,
    delta: f64,
    tol: f64,
) -> Result<BoundReport> {
    let first = traj.samples.first().ok_or(Error::MissingSnapshots)?;
    if !traj.samples.iter().any(|s| s.snapshot.is_some()) {
        return Err(Error::MissingSnapshots);
    }
    // for a < 0 the function v = -u solves the equation with |a|
    let flip = a < 0.0;
    let (max0, min0) = if flip {
        (-first.min, -first.max)
    } else {
        (first.max, first.min)
    };
    let theta = BernsteinTheta::new(case, a.abs(), p, max0, min0, delta)?;
    let name = match case {
        BernsteinCase::Sqrt => "bernstein_sqrt",
        BernsteinCase::Power => "bernstein_power",
    };
    let mut tracker = Tracker::new(name, tol);
    for sample in traj.samples.iter().filter(|s| s.t > 0.0) {
        let Some(u) = &sample.snapshot else { continue };
        let grad_sq = gradient_squared(u, d)?;
        let w = theta.time_factor(sample.t);
        for (i, (&v, &g2)) in u.values().iter().zip(&grad_sq).enumerate() {
            let xi = if flip { -v } else { v };
            tracker.check(
                g2,
                theta.eval(xi) * w,
                Location::Node {
                    t: sample.t,
                    x: d.coords(i),
                },
            );
        }
    }
    let mut report = BoundReport::default();
    report.records.push(tracker.finish());
    if flip {
        report
            .notes
            .push("a < 0: diagnostic applied to -u with |a|".into());
    }
    Ok(report)
}
