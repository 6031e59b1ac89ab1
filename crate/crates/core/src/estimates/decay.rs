use serde::{Deserialize, Serialize};

use super::{decay_params, BoundReport, DecayParams, Location, Tracker};
use crate::error::{invalid, Error, Result};
use crate::solver::Trajectory;

/// `y(t) = ∫_t^T (s - t) osc(s)^γ ds` on the sample grid, with `osc^γ`
/// interpolated linearly between samples and integrated exactly.
///
/// `y'' = osc^γ >= 0` holds for the interpolant, so `y` is convex and
/// nonincreasing up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct YFunctional {
    times: Vec<f64>,
    osc: Vec<f64>,
    g: Vec<f64>,
    values: Vec<f64>,
    /// `∫_t^T osc^γ = -y'(t)` at the samples.
    flux: Vec<f64>,
    gamma: f64,
    /// Estimate of the truncated part `∫_T^∞ s osc(s)^γ ds`, extrapolating
    /// an exponential fitted to the last quarter of the samples. Infinite
    /// when the tail does not decay.
    pub tail_bound: f64,
}

impl YFunctional {
    /// Builds `y` from raw `(t, osc)` samples with strictly increasing times.
    pub fn from_series(times: &[f64], osc: &[f64], gamma: f64) -> Result<Self> {
        if times.len() != osc.len() || times.len() < 2 {
            return Err(invalid("y-functional needs at least two (t, osc) samples"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma = {gamma} must be positive")));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(invalid(format!(
                "sample times not increasing at t = {}",
                w[1]
            )));
        }
        let osc: Vec<f64> = osc.iter().map(|o| o.max(0.0)).collect();
        let (first, last) = (osc[0], osc[osc.len() - 1]);
        if first > 0.0 && last > 0.01 * first {
            return Err(Error::InsufficientDecay {
                ratio: last / first,
            });
        }
        let g: Vec<f64> = osc.iter().map(|o| o.powf(gamma)).collect();
        let n = times.len();
        let mut values = vec![0.0; n];
        let mut flux = vec![0.0; n];
        for k in (0..n - 1).rev() {
            let dt = times[k + 1] - times[k];
            flux[k] = flux[k + 1] + 0.5 * dt * (g[k] + g[k + 1]);
            values[k] = values[k + 1] + dt * flux[k + 1] + segment_moment(dt, g[k], g[k + 1]);
        }
        let tail_bound = tail_bound(times, &g);
        Ok(Self {
            times: times.to_vec(),
            osc,
            g,
            values,
            flux,
            gamma,
            tail_bound,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y'` at the samples.
    pub fn derivatives(&self) -> Vec<f64> {
        self.flux.iter().map(|f| -f).collect()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    /// Locates `tau` in the sample grid; `None` past the last sample.
    fn segment(&self, tau: f64) -> Option<(usize, f64, f64)> {
        let t_end = self.times[self.times.len() - 1];
        if tau >= t_end {
            return None;
        }
        let tau = tau.max(self.times[0]);
        let k = self.times.partition_point(|&t| t <= tau) - 1;
        let dt = self.times[k + 1] - self.times[k];
        let w = (tau - self.times[k]) / dt;
        let g_tau = (1.0 - w) * self.g[k] + w * self.g[k + 1];
        Some((k, self.times[k + 1] - tau, g_tau))
    }

    /// Exact `y(τ)` for the interpolated integrand; clamped to the sampled
    /// range (zero past the last sample).
    pub fn eval(&self, tau: f64) -> f64 {
        match self.segment(tau) {
            None => 0.0,
            Some((k, rest, g_tau)) => {
                self.values[k + 1]
                    + rest * self.flux[k + 1]
                    + segment_moment(rest, g_tau, self.g[k + 1])
            }
        }
    }

    /// Exact `y'(τ)`.
    pub fn derivative(&self, tau: f64) -> f64 {
        match self.segment(tau) {
            None => 0.0,
            Some((k, rest, g_tau)) => -(self.flux[k + 1] + 0.5 * rest * (g_tau + self.g[k + 1])),
        }
    }
}

/// `∫_0^h s ℓ(s) ds` for the linear `ℓ` with `ℓ(0) = g_left`, `ℓ(h) = g_right`.
fn segment_moment(h: f64, g_left: f64, g_right: f64) -> f64 {
    h * h * (g_left / 6.0 + g_right / 3.0)
}

fn tail_bound(times: &[f64], g: &[f64]) -> f64 {
    let n = times.len();
    let (t_end, g_end) = (times[n - 1], g[n - 1]);
    if g_end == 0.0 {
        return 0.0;
    }
    let from = n - (n / 4).max(2);
    let pts: Vec<(f64, f64)> = (from..n)
        .filter(|&k| g[k] > 0.0)
        .map(|k| (times[k], g[k].ln()))
        .collect();
    let rate = match least_squares(&pts) {
        Some((slope, _)) => -slope,
        None => return f64::INFINITY,
    };
    if rate > 0.0 && rate.is_finite() {
        g_end * (t_end / rate + 1.0 / (rate * rate))
    } else {
        f64::INFINITY
    }
}

pub fn y_functional(traj: &Trajectory, gamma: f64) -> Result<YFunctional> {
    YFunctional::from_series(&traj.times(), &traj.oscillations(), gamma)
}

/// Checks that `y` is nonincreasing and has nondecreasing difference
/// quotients at every sample, to relative tolerance `tol`.
pub fn y_shape_check(y: &YFunctional, tol: f64) -> BoundReport {
    let (t, v) = (&y.times, &y.values);
    let mut mono = Tracker::new("y_nonincreasing", tol);
    let mut convex = Tracker::new("y_convex", tol);
    for k in 0..t.len() - 1 {
        mono.check(v[k + 1], v[k], Location::Time { t: t[k + 1] });
        if k > 0 {
            let left = (v[k - 1] - v[k]) / (t[k] - t[k - 1]);
            let right = (v[k] - v[k + 1]) / (t[k + 1] - t[k]);
            convex.check(right, left, Location::Time { t: t[k] });
        }
    }
    BoundReport {
        records: vec![mono.finish(), convex.finish()],
        notes: Vec::new(),
    }
}

/// `osc(t) <= (8 y(t/2) / t²)^{1/γ}` at every sample with `t > 0`.
pub fn window_decay_check(traj: &Trajectory, gamma: f64, tol: f64) -> Result<BoundReport> {
    let y = y_functional(traj, gamma)?;
    let mut tracker = Tracker::new("window_decay_check", tol);
    for (&t, &osc) in y.times.iter().zip(&y.osc).filter(|(t, _)| **t > 0.0) {
        let bound = (8.0 * y.eval(0.5 * t) / (t * t)).powf(1.0 / gamma);
        tracker.check(osc, bound, Location::Time { t });
    }
    let mut report = BoundReport::default();
    report.records.push(tracker.finish());
    Ok(report)
}

/// Solution `f` of `f' = -f^α / C`, `f(0) = y(0)`, fitted to a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    /// Smallest `C` with `y' + y^α / C <= 0` on the refined sample grid.
    pub c_emp: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub y0: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub report: BoundReport,
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        envelope_value(self.y0, self.c_emp, self.alpha, t)
    }

    /// Oscillation bound `(8 f(t/2) / t²)^{1/γ}` implied by the envelope.
    pub fn osc_bound(&self, t: f64) -> f64 {
        (8.0 * self.eval(0.5 * t) / (t * t)).powf(1.0 / self.gamma)
    }
}

fn envelope_value(y0: f64, c: f64, alpha: f64, t: f64) -> f64 {
    if y0 == 0.0 {
        return 0.0;
    }
    if alpha == 1.0 {
        return y0 * (-t / c).exp();
    }
    let base = y0.powf(1.0 - alpha) + (alpha - 1.0) * t / c;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / (1.0 - alpha))
    }
}

pub fn empirical_envelope(traj: &Trajectory, params: &DecayParams, tol: f64) -> Result<Envelope> {
    let y = y_functional(traj, params.gamma)?;
    envelope_from(&y, params.alpha, tol)
}

/// Sub-points per sample interval at which `y^α / -y'` is maximised.
const ENVELOPE_REFINE: usize = 8;

fn envelope_from(y: &YFunctional, alpha: f64, tol: f64) -> Result<Envelope> {
    let (t, v) = (&y.times, &y.values);
    let n = t.len();
    let y0 = v[0];
    let mut c_emp = 0.0_f64;
    for k in 0..n - 1 {
        for j in 0..ENVELOPE_REFINE {
            let s = t[k] + (t[k + 1] - t[k]) * j as f64 / ENVELOPE_REFINE as f64;
            let value = y.eval(s);
            if value <= 0.0 {
                continue;
            }
            let slope = y.derivative(s);
            if !(slope < 0.0) {
                return Err(Error::NonMonotone { t: s });
            }
            c_emp = c_emp.max(value.powf(alpha) / -slope);
        }
    }
    if y0 > 0.0 && c_emp == 0.0 {
        return Err(invalid(
            "envelope needs a positive y before the last sample",
        ));
    }
    let mut env = Envelope {
        c_emp,
        alpha,
        gamma: y.gamma,
        y0,
        times: t.clone(),
        values: Vec::new(),
        report: BoundReport::default(),
    };
    env.values = t.iter().map(|&s| env.eval(s)).collect();
    let mut bound_y = Tracker::new("envelope_y", tol);
    let mut bound_osc = Tracker::new("envelope_decay", tol);
    for k in 0..n {
        bound_y.check(v[k], env.values[k], Location::Time { t: t[k] });
        if t[k] > 0.0 {
            bound_osc.check(y.osc[k], env.osc_bound(t[k]), Location::Time { t: t[k] });
        }
    }
    env.report = BoundReport {
        records: vec![bound_y.finish(), bound_osc.finish()],
        notes: Vec::new(),
    };
    Ok(env)
}

/// The admissible `β` among `candidates` whose envelope gives the smallest
/// oscillation bound at `t_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaChoice {
    pub beta: f64,
    pub params: DecayParams,
    pub osc_bound: f64,
    pub envelope: Envelope,
}

pub fn select_beta(
    traj: &Trajectory,
    n: usize,
    p: f64,
    candidates: &[f64],
    t_ref: f64,
    tol: f64,
) -> Result<BetaChoice> {
    if !(t_ref > 0.0 && t_ref.is_finite()) {
        return Err(invalid(format!("reference time {t_ref} must be positive")));
    }
    let mut best: Option<BetaChoice> = None;
    let mut first_err = None;
    for &beta in candidates {
        let attempt = decay_params(n, p, beta).and_then(|params| {
            let envelope = empirical_envelope(traj, &params, tol)?;
            Ok(BetaChoice {
                beta,
                params,
                osc_bound: envelope.osc_bound(t_ref),
                envelope,
            })
        });
        match attempt {
            Ok(c) if best.as_ref().is_none_or(|b| c.osc_bound < b.osc_bound) => best = Some(c),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| invalid("no beta candidates given")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `osc ≈ C e^{-rate t}`
    Exponential,
    /// `osc ≈ C t^{-rate}`
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln osc` over the trailing `window` fraction of the
/// samples.
pub fn fit_decay_rate(traj: &Trajectory, model: DecayModel, window: f64) -> Result<DecayFit> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(invalid(format!(
            "window fraction {window} must lie in (0, 1]"
        )));
    }
    let n = traj.samples.len();
    let take = ((window * n as f64).ceil() as usize).clamp(0, n);
    let mut pts = Vec::with_capacity(take);
    for s in &traj.samples[n - take..] {
        let x = match model {
            DecayModel::Exponential => s.t,
            DecayModel::Algebraic if s.t > 0.0 => s.t.ln(),
            DecayModel::Algebraic => continue,
        };
        let osc = s.osc();
        if !(osc > 0.0) {
            return Err(Error::Extinct { t: s.t });
        }
        pts.push((x, osc.ln()));
    }
    let (slope, r_squared) =
        least_squares(&pts).ok_or_else(|| invalid("decay fit needs two distinct sample times"))?;
    Ok(DecayFit {
        model,
        rate: -slope,
        r_squared,
        points: pts.len(),
    })
}

/// Slope and coefficient of determination of the best line through `pts`.
fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some((slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::decay_params;
    use crate::solver::Sample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn traj(times: &[f64], osc: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory::from_samples(
            times
                .iter()
                .map(|&t| Sample {
                    t,
                    max: osc(t),
                    min: 0.0,
                    grad_sup: 0.0,
                    grad_q: 0.0,
                    snapshot: None,
                })
                .collect(),
        )
    }

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
    }

    #[test]
    fn zero_oscillation_gives_zero_y() {
        let tr = traj(&grid(1.0, 10), |_| 0.0);
        let y = y_functional(&tr, 2.0).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
        assert_eq!(y.tail_bound, 0.0);
        let r = window_decay_check(&tr, 2.0, 0.05).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn exponential_oscillation_matches_closed_form() {
        let tr = traj(&grid(30.0, 6000), |t| (-t).exp());
        let y = y_functional(&tr, 1.0).unwrap();
        for (t, v) in y.times().iter().zip(y.values()).step_by(250) {
            assert!((v - (-t).exp()).abs() < 1e-4, "t = {t}: {v}");
        }
        assert_relative_eq!(y.eval(1.2345), (-1.2345_f64).exp(), max_relative = 1e-4);
        assert_relative_eq!(
            y.derivative(1.2345),
            -(-1.2345_f64).exp(),
            max_relative = 1e-4
        );
        assert!(y.tail_bound > 0.0 && y.tail_bound < 1e-11);
    }

    #[test]
    fn insufficient_decay_is_rejected() {
        let tr = traj(&grid(1.0, 10), |t| (-t).exp());
        assert!(matches!(
            y_functional(&tr, 1.0),
            Err(Error::InsufficientDecay { .. })
        ));
    }

    #[test]
    fn eval_agrees_with_nodes() {
        let tr = traj(&grid(8.0, 37), |t| (-t).exp() / (1.0 + t));
        let y = y_functional(&tr, 1.5).unwrap();
        for (t, v) in y.times().iter().zip(y.values()) {
            assert_relative_eq!(y.eval(*t), *v, max_relative = 1e-12);
        }
        assert_eq!(y.eval(100.0), 0.0);
    }

    #[test]
    fn window_check_exponential_example() {
        let tr = traj(&grid(30.0, 3000), |t| (-t).exp());
        let r = window_decay_check(&tr, 1.0, 0.0).unwrap();
        assert!(r.passed());
        assert!(r.records[0].worst_margin > 0.0);
    }

    #[test]
    fn window_bound_ratio_exceeds_one() {
        // 8 e^{t/2} / t² is minimal at t = 4 with value 8e²/16 = e²/2 > 1
        let ratio = |t: f64| 8.0 * (0.5 * t).exp() / (t * t);
        let min = (1..20000)
            .map(|k| ratio(k as f64 * 1e-3))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(min, std::f64::consts::E.powi(2) / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn envelope_of_exponential_is_exact() {
        let tr = traj(&grid(40.0, 8000), |t| (-t).exp());
        let y = y_functional(&tr, 1.0).unwrap();
        let env = envelope_from(&y, 1.0, 0.05).unwrap();
        assert!(env.report.passed());
        // exact y is e^{-t}; truncation at T only lowers the late values
        assert_relative_eq!(env.c_emp, 1.0, max_relative = 1e-3);
        assert_relative_eq!(env.eval(2.0), (-2.0_f64).exp(), max_relative = 2e-3);
    }

    #[test]
    fn envelope_of_power_law_recovers_constant() {
        // y = (1 + t)^{-4} has y'' = 20 (1 + t)^{-6} and y^{5/4} = -y' / 4
        let alpha = 1.25;
        let times = grid(100.0, 20_000);
        let osc: Vec<f64> = times.iter().map(|t| 20.0 * (1.0 + t).powi(-6)).collect();
        let y = YFunctional::from_series(&times, &osc, 1.0).unwrap();
        let env = envelope_from(&y, alpha, 0.05).unwrap();
        assert_relative_eq!(env.c_emp, alpha - 1.0, max_relative = 1e-3);
        for t in [0.0, 0.5, 1.0, 2.0, 5.0] {
            assert_relative_eq!(env.eval(t), (1.0 + t).powi(-4), max_relative = 2e-3);
        }
    }

    #[test]
    fn sublinear_envelope_reaches_zero() {
        assert_eq!(envelope_value(1.0, 1.0, 0.5, 10.0), 0.0);
        assert!(envelope_value(1.0, 1.0, 0.5, 1.0) > 0.0);
    }

    #[test]
    fn beta_selection_picks_the_tightest_admissible_bound() {
        let tr = traj(&grid(4.0, 800), |t| (-3.0 * t).exp());
        let candidates = [1.0, 2.0, 3.0, 5.0];
        let choice = select_beta(&tr, 1, 1.0, &candidates, 1.0, 0.05).unwrap();
        // beta = 1 and 2 are not above the threshold 2 for N = 1, p = 1
        assert!(choice.beta > 2.0);
        for beta in [3.0, 5.0] {
            let params = decay_params(1, 1.0, beta).unwrap();
            let env = empirical_envelope(&tr, &params, 0.05).unwrap();
            assert!(choice.osc_bound <= env.osc_bound(1.0));
        }
        assert!(select_beta(&tr, 1, 1.0, &[1.0], 1.0, 0.05).is_err());
        assert!(select_beta(&tr, 1, 1.0, &[], 1.0, 0.05).is_err());
    }

    #[test]
    fn envelope_of_real_params_on_synthetic_data() {
        let params = decay_params(1, 1.0, 2.5).unwrap();
        let tr = traj(&grid(4.0, 800), |t| (-3.0 * t).exp());
        let env = empirical_envelope(&tr, &params, 0.05).unwrap();
        assert!(env.c_emp.is_finite() && env.c_emp > 0.0);
        assert!(env.report.passed(), "{:?}", env.report);
    }

    #[test]
    fn fit_exact_models() {
        let times = grid(5.0, 100);
        let tr = traj(&times, |t| 3.0 * (-2.0 * t).exp());
        let f = fit_decay_rate(&tr, DecayModel::Exponential, 0.5).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-10);
        let tr = traj(&times, |t| 5.0 * t.max(1e-300).powi(-3));
        let f = fit_decay_rate(&tr, DecayModel::Algebraic, 0.5).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_extinct_window() {
        let tr = traj(&grid(2.0, 20), |t| (1.0 - t).max(0.0));
        assert!(matches!(
            fit_decay_rate(&tr, DecayModel::Exponential, 0.5),
            Err(Error::Extinct { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn monotone_trajectories_never_fail_window_check(
            drops in prop::collection::vec(0.0f64..1.0, 5..60),
            steps in prop::collection::vec(1e-3f64..0.5, 60),
            gamma in 0.5f64..8.0,
        ) {
            let mut osc = vec![1.0];
            for d in &drops {
                let last = *osc.last().unwrap();
                osc.push(last * d);
            }
            osc.push(0.0);
            let mut times = vec![0.0];
            for k in 1..osc.len() {
                times.push(times[k - 1] + steps[k % steps.len()]);
            }
            let y = YFunctional::from_series(&times, &osc, gamma).unwrap();
            let shape = y_shape_check(&y, 1e-8);
            prop_assert!(shape.passed(), "{:?}", shape);
            let tr = Trajectory::from_samples(
                times.iter().zip(&osc).map(|(&t, &o)| Sample {
                    t, max: o, min: 0.0, grad_sup: 0.0, grad_q: 0.0, snapshot: None,
                }).collect(),
            );
            let r = window_decay_check(&tr, gamma, 0.0).unwrap();
            prop_assert!(r.passed(), "{:?}", r);
        }
    }
}
