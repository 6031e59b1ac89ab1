//! IMEX time integration of `u_t - Δu = F_ε(∇u)` with Neumann conditions.
//!
//! Each step evaluates the Hamiltonian explicitly from central-difference
//! gradients and solves the diffusion implicitly, `(I - dt Δ_h) u⁺ = u + dt g`,
//! in the cosine eigenbasis. Runs with `a < 0` integrate `v = -u` with `-a`
//! and negate every output, so the sign symmetry holds bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{gradient_squared, max_min, Domain, Field};
use crate::hamiltonian::{f_eps_unchecked, Branch, HamiltonianSpec};
use crate::semigroup::SpectralPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = safety * h / max(1, p |a| ‖∇u‖∞^{p-1})`
    Adaptive {
        safety: f64,
    },
}

/// Geometric ε-continuation: `ε_k = initial * decay^{⌊k / phase_steps⌋}`,
/// snapped to `floor` after `max_phases` phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsSchedule {
    /// `None` starts from the grid spacing.
    pub initial: Option<f64>,
    pub decay: f64,
    pub floor: f64,
    pub phase_steps: usize,
    pub max_phases: usize,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            initial: None,
            decay: 0.5,
            floor: 0.0,
            phase_steps: 10,
            max_phases: 20,
        }
    }
}

impl EpsSchedule {
    /// No regularisation at all.
    pub fn off() -> Self {
        Self {
            initial: Some(0.0),
            ..Self::default()
        }
    }

    fn start(&self, domain: &Domain) -> f64 {
        self.initial.unwrap_or_else(|| domain.min_spacing())
    }

    pub fn at_step(&self, step: usize, domain: &Domain) -> f64 {
        let eps0 = self.start(domain);
        if eps0 <= self.floor {
            return self.floor;
        }
        let phase = step / self.phase_steps.max(1);
        if phase >= self.max_phases {
            self.floor
        } else {
            (eps0 * self.decay.powi(phase as i32)).max(self.floor)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    None,
    /// Every k-th recorded sample, starting with the first.
    EveryKth(usize),
    /// About `n + 1` snapshots at evenly spaced times over `[0, t_end]`.
    Spread(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub t_end: f64,
    pub dt: DtPolicy,
    pub eps: EpsSchedule,
    /// Gradient sup-norm below which the solution counts as extinct.
    /// `None` uses `1e-8 (π / min length) osc(0)`.
    pub extinction_threshold: Option<f64>,
    /// Stop at `factor * t_star` once a persistent extinction is under way.
    pub extinction_horizon: Option<f64>,
    /// Steps between samples.
    pub record_stride: usize,
    /// Minimum time between samples, on top of the stride.
    pub record_interval: Option<f64>,
    pub snapshots: SnapshotPolicy,
    /// Exponent of the recorded gradient Lebesgue norm.
    pub grad_q: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: DtPolicy::Adaptive { safety: 0.5 },
            eps: EpsSchedule::default(),
            extinction_threshold: None,
            extinction_horizon: None,
            record_stride: 1,
            record_interval: None,
            snapshots: SnapshotPolicy::None,
            grad_q: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end = {} must be positive", self.t_end)));
        }
        match self.dt {
            DtPolicy::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return Err(invalid(format!("fixed dt = {dt} must be positive")))
            }
            DtPolicy::Adaptive { safety } if !(safety > 0.0 && safety <= 1.0) => {
                return Err(invalid(format!(
                    "safety factor {safety} must lie in (0, 1]"
                )))
            }
            _ => {}
        }
        let e = &self.eps;
        if let Some(eps0) = e.initial {
            if !(0.0..1.0).contains(&eps0) || eps0 < e.floor {
                return Err(invalid(format!(
                    "eps schedule needs 1 > initial >= floor >= 0, got {eps0} / {}",
                    e.floor
                )));
            }
        }
        if !(e.floor >= 0.0) || !(e.decay > 0.0 && e.decay < 1.0) {
            return Err(invalid("eps schedule needs floor >= 0 and decay in (0, 1)"));
        }
        if let Some(tau) = self.extinction_threshold {
            if !(tau > 0.0) {
                return Err(invalid(format!(
                    "extinction threshold {tau} must be positive"
                )));
            }
        }
        if let Some(f) = self.extinction_horizon {
            if !(f > 1.0) {
                return Err(invalid(format!(
                    "extinction horizon factor {f} must exceed 1"
                )));
            }
        }
        if self.record_stride == 0 {
            return Err(invalid("record stride must be at least 1"));
        }
        if !(self.grad_q >= 1.0) {
            return Err(invalid(format!("grad_q = {} must be >= 1", self.grad_q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub max: f64,
    pub min: f64,
    pub grad_sup: f64,
    pub grad_q: f64,
    pub snapshot: Option<Field>,
}

impl Sample {
    pub fn osc(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// First time after which `‖∇u‖∞` stays below the extinction threshold.
    pub t_star: Option<f64>,
    pub extinction_threshold: f64,
    /// Time at which ε reached its floor, if it did.
    pub eps_settled_at: Option<f64>,
    pub final_field: Option<Field>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    /// Trajectory made of recorded samples only (e.g. read back from disk).
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        Self {
            samples,
            t_star: None,
            extinction_threshold: 0.0,
            eps_settled_at: Some(0.0),
            final_field: None,
            steps: 0,
            warnings: Vec::new(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn oscillations(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::osc).collect()
    }

    /// Copy restricted to the samples with `t <= t_max`; the final field is
    /// kept only when no sample is dropped.
    pub fn until(&self, t_max: f64) -> Trajectory {
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| s.t <= t_max)
            .cloned()
            .collect();
        let complete = samples.len() == self.samples.len();
        Trajectory {
            samples,
            final_field: if complete {
                self.final_field.clone()
            } else {
                None
            },
            warnings: self.warnings.clone(),
            ..*self
        }
    }

    pub fn initial_osc(&self) -> f64 {
        self.samples.first().map_or(0.0, Sample::osc)
    }

    /// Largest increase of `M` or decrease of `m` between consecutive samples,
    /// restricted to samples after ε settled.
    pub fn monotonicity_violation(&self) -> f64 {
        let from = self.eps_settled_at.unwrap_or(f64::INFINITY);
        self.samples
            .windows(2)
            .filter(|w| w[0].t >= from)
            .map(|w| (w[1].max - w[0].max).max(w[0].min - w[1].min))
            .fold(0.0, f64::max)
    }
}

/// Integrates `u_t - Δ_h u = F_ε(∇_h u)` for `a >= 0` in place.
struct Integrator<'a> {
    domain: &'a Domain,
    plan: &'a SpectralPlan,
    cfg: &'a SolverConfig,
    spec: HamiltonianSpec,
    flip: bool,
    u: Field,
    grad_sq: Vec<f64>,
    t: f64,
    steps: usize,
    threshold: f64,
    candidate: Option<f64>,
    eps_settled_at: Option<f64>,
    recorder: Recorder,
}

impl<'a> Integrator<'a> {
    fn new(
        mu0: &Field,
        spec: &HamiltonianSpec,
        cfg: &'a SolverConfig,
        domain: &'a Domain,
        plan: &'a SpectralPlan,
    ) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        mu0.check_shape(domain)?;
        if let Some(index) = mu0.first_non_finite() {
            return Err(Error::NonFinite { index });
        }
        let flip = spec.a < 0.0;
        let u = if flip { mu0.negated() } else { mu0.clone() };
        let spec = spec.with_a(spec.a.abs());
        let (hi, lo) = max_min(&u)?;
        let threshold = cfg.extinction_threshold.unwrap_or_else(|| {
            let tau = 1e-8 * std::f64::consts::PI / domain.min_length() * (hi - lo);
            if tau > 0.0 {
                tau
            } else {
                f64::MIN_POSITIVE
            }
        });
        let grad_sq = gradient_squared(&u, domain)?;
        let mut it = Self {
            domain,
            plan,
            cfg,
            spec,
            flip,
            u,
            grad_sq,
            t: 0.0,
            steps: 0,
            threshold,
            candidate: None,
            eps_settled_at: None,
            recorder: Recorder::new(cfg, domain),
        };
        it.observe();
        let view = View {
            t: it.t,
            u: &it.u,
            grad_sq: &it.grad_sq,
            flip: it.flip,
        };
        it.recorder.record(&view, true);
        Ok(it)
    }

    fn eps(&self) -> f64 {
        self.cfg.eps.at_step(self.steps, self.domain)
    }

    fn grad_sup(&self) -> f64 {
        self.grad_sq.iter().copied().fold(0.0, f64::max).sqrt()
    }

    fn observe(&mut self) {
        if self.grad_sup() < self.threshold {
            self.candidate.get_or_insert(self.t);
        } else {
            self.candidate = None;
        }
        if self.eps_settled_at.is_none() && self.eps() <= self.cfg.eps.floor {
            self.eps_settled_at = Some(self.t);
        }
    }

    fn horizon(&self) -> f64 {
        match (self.cfg.extinction_horizon, self.candidate) {
            (Some(factor), Some(tc)) => (factor * tc).min(self.cfg.t_end),
            _ => self.cfg.t_end,
        }
    }

    fn suggested_dt(&self) -> f64 {
        match self.cfg.dt {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Adaptive { safety } => {
                let speed = hamiltonian_speed(
                    &self.spec.with_eps(self.eps()),
                    self.grad_sup(),
                    self.threshold,
                );
                safety * self.domain.min_spacing() / speed.max(1.0)
            }
        }
    }

    fn advance(&mut self, dt: f64, end: f64) -> Result<()> {
        let spec = self.spec.with_eps(self.eps());
        let next = imex_update(&self.u, &self.grad_sq, dt, &spec, self.plan)?;
        let t_next = if self.t + dt >= end { end } else { self.t + dt };
        if next.first_non_finite().is_some() {
            return Err(Error::BlowUp { t: t_next });
        }
        self.u = next;
        self.t = t_next;
        self.steps += 1;
        self.grad_sq = gradient_squared(&self.u, self.domain)?;
        self.observe();
        let force = self.t >= end;
        let view = View {
            t: self.t,
            u: &self.u,
            grad_sq: &self.grad_sq,
            flip: self.flip,
        };
        self.recorder.record(&view, force);
        Ok(())
    }

    /// Field in the caller's sign convention.
    fn field(&self) -> Field {
        if self.flip {
            self.u.negated()
        } else {
            self.u.clone()
        }
    }

    fn finish(self) -> Trajectory {
        let mut warnings = Vec::new();
        if self.eps() > self.cfg.eps.floor {
            warnings.push(format!(
                "eps schedule unconverged at t_end: eps = {:e} > floor {:e}",
                self.eps(),
                self.cfg.eps.floor
            ));
        }
        let final_field = Some(self.field());
        Trajectory {
            samples: self.recorder.samples,
            t_star: self.candidate,
            extinction_threshold: self.threshold,
            eps_settled_at: self.eps_settled_at,
            final_field,
            steps: self.steps,
            warnings,
        }
    }
}

/// Characteristic speed of the Hamiltonian term at gradient size `g`.
fn hamiltonian_speed(spec: &HamiltonianSpec, g: f64, floor: f64) -> f64 {
    let p = spec.p;
    if g == 0.0 {
        return 0.0;
    }
    let g_eff = match spec.branch() {
        Branch::Sublinear if p < 1.0 => g.max(spec.eps.sqrt()).max(floor),
        _ => g,
    };
    p * spec.a.abs() * g_eff.powf(p - 1.0)
}

struct View<'a> {
    t: f64,
    u: &'a Field,
    grad_sq: &'a [f64],
    flip: bool,
}

struct Recorder {
    stride: usize,
    interval: Option<f64>,
    snapshots: SnapshotPolicy,
    t_end: f64,
    q: f64,
    weights: Vec<f64>,
    since_last: usize,
    last_t: f64,
    next_snapshot: usize,
    samples: Vec<Sample>,
}

impl Recorder {
    fn new(cfg: &SolverConfig, domain: &Domain) -> Self {
        Self {
            stride: cfg.record_stride,
            interval: cfg.record_interval,
            snapshots: cfg.snapshots,
            t_end: cfg.t_end,
            q: cfg.grad_q,
            weights: domain.weights(),
            since_last: 0,
            last_t: f64::NEG_INFINITY,
            next_snapshot: 0,
            samples: Vec::new(),
        }
    }

    fn record(&mut self, view: &View<'_>, force: bool) {
        self.since_last += 1;
        let due = self.samples.is_empty()
            || (self.since_last >= self.stride
                && self.interval.is_none_or(|dt| view.t - self.last_t >= dt));
        if !(due || force) || view.t <= self.last_t {
            return;
        }
        self.since_last = 0;
        self.last_t = view.t;

        let (hi, lo) = max_min(view.u).expect("fields are never empty");
        let (max, min) = if view.flip { (-lo, -hi) } else { (hi, lo) };
        let grad_sup = view.grad_sq.iter().copied().fold(0.0, f64::max).sqrt();
        let grad_q = view
            .grad_sq
            .iter()
            .zip(&self.weights)
            .map(|(g2, w)| w * g2.powf(0.5 * self.q))
            .sum::<f64>()
            .powf(1.0 / self.q);
        let take = match self.snapshots {
            SnapshotPolicy::None => false,
            SnapshotPolicy::EveryKth(k) => self.samples.len().is_multiple_of(k.max(1)),
            SnapshotPolicy::Spread(n) => {
                let n = n.max(1);
                let target = self.t_end * self.next_snapshot as f64 / n as f64;
                if view.t >= target || force {
                    while self.t_end * self.next_snapshot as f64 / n as f64 <= view.t {
                        self.next_snapshot += 1;
                    }
                    true
                } else {
                    false
                }
            }
        };
        let snapshot = take.then(|| {
            if view.flip {
                view.u.negated()
            } else {
                view.u.clone()
            }
        });
        self.samples.push(Sample {
            t: view.t,
            max,
            min,
            grad_sup,
            grad_q,
            snapshot,
        });
    }
}

fn imex_update(
    u: &Field,
    grad_sq: &[f64],
    dt: f64,
    spec: &HamiltonianSpec,
    plan: &SpectralPlan,
) -> Result<Field> {
    let rhs: Vec<f64> = u
        .values()
        .iter()
        .zip(grad_sq)
        .map(|(v, g2)| v + dt * f_eps_unchecked(*g2, spec))
        .collect();
    plan.resolvent(&Field::from_raw(u.nodes(), rhs), dt)
}

/// One IMEX step of `u_t - Δu = F_ε(∇u)` for `a >= 0`.
pub fn step(
    u: &Field,
    dt: f64,
    spec: &HamiltonianSpec,
    d: &Domain,
    plan: &SpectralPlan,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step {dt} must be positive")));
    }
    if spec.a < 0.0 {
        return Err(invalid("step expects a >= 0; run() handles the sign flip"));
    }
    spec.validate()?;
    let grad_sq = gradient_squared(u, d)?;
    let next = imex_update(u, &grad_sq, dt, spec, plan)?;
    if let Some(index) = next.first_non_finite() {
        return Err(Error::NonFinite { index });
    }
    Ok(next)
}

/// Integrates from `mu0` to `cfg.t_end`, recording the trajectory.
///
/// `spec.eps` is ignored; the regularisation follows `cfg.eps`.
pub fn run(
    mu0: &Field,
    spec: &HamiltonianSpec,
    cfg: &SolverConfig,
    d: &Domain,
) -> Result<Trajectory> {
    let plan = SpectralPlan::new(d);
    run_with_plan(mu0, spec, cfg, d, &plan)
}

pub fn run_with_plan(
    mu0: &Field,
    spec: &HamiltonianSpec,
    cfg: &SolverConfig,
    d: &Domain,
    plan: &SpectralPlan,
) -> Result<Trajectory> {
    let mut it = Integrator::new(mu0, spec, cfg, d, plan)?;
    loop {
        let end = it.horizon();
        if it.t >= end {
            break;
        }
        let dt = it.suggested_dt().min(end - it.t);
        it.advance(dt, end)?;
    }
    Ok(it.finish())
}

/// Output of [`run_pair`].
#[derive(Debug, Clone)]
pub struct PairRun {
    pub low: Trajectory,
    pub high: Trajectory,
    /// `sup (u_low - u_high)_+` over all steps and nodes.
    pub max_violation: f64,
}

/// Integrates two ordered initial data with a shared time-step sequence and
/// measures the worst breach of the ordering.
pub fn run_pair(
    mu0_low: &Field,
    mu0_high: &Field,
    spec: &HamiltonianSpec,
    cfg: &SolverConfig,
    d: &Domain,
) -> Result<PairRun> {
    if let Some((i, _)) = mu0_low
        .values()
        .iter()
        .zip(mu0_high.values())
        .enumerate()
        .find(|(_, (l, h))| l > h)
    {
        return Err(invalid(format!("initial data are not ordered at node {i}")));
    }
    let plan = SpectralPlan::new(d);
    let mut low = Integrator::new(mu0_low, spec, cfg, d, &plan)?;
    let mut high = Integrator::new(mu0_high, spec, cfg, d, &plan)?;
    let violation = |low: &Integrator<'_>, high: &Integrator<'_>| -> f64 {
        let sign = if low.flip { -1.0 } else { 1.0 };
        low.u
            .values()
            .iter()
            .zip(high.u.values())
            .map(|(l, h)| (sign * (l - h)).max(0.0))
            .fold(0.0, f64::max)
    };
    let mut worst = violation(&low, &high);
    let end = cfg.t_end;
    while low.t < end {
        let dt = low.suggested_dt().min(high.suggested_dt()).min(end - low.t);
        low.advance(dt, end)?;
        high.advance(dt, end)?;
        worst = worst.max(violation(&low, &high));
    }
    Ok(PairRun {
        low: low.finish(),
        high: high.finish(),
        max_violation: worst,
    })
}

/// `(1/a) log S(t) e^{a μ0}`: exact solution of `u_t - Δu = a|∇u|²` through
/// the Cole–Hopf transform, with the heat flow taken from `plan`.
pub fn cole_hopf_oracle(mu0: &Field, a: f64, t: f64, plan: &SpectralPlan) -> Result<Field> {
    if a == 0.0 || !a.is_finite() {
        return Err(invalid("Cole-Hopf oracle needs a finite a != 0"));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!("oracle time t = {t} must be non-negative")));
    }
    mu0.check_shape(plan.domain())?;
    if t == 0.0 {
        return Ok(mu0.clone());
    }
    let (hi, lo) = max_min(mu0)?;
    let spread = a.abs() * (hi - lo);
    if spread > 300.0 {
        return Err(Error::Overflow(spread));
    }
    // Centre the exponent so e^{a(μ0 - c)} stays O(1); S(t) commutes with the
    // constant factor e^{ac}.
    let c = if a > 0.0 { hi } else { lo };
    let w = mu0.map(|v| (a * (v - c)).exp());
    let sw = plan.heat_apply(&w, t)?;
    Ok(sw.map(|v| v.ln() / a + c))
}
