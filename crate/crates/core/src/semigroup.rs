//! Exact Neumann heat semigroup of the semi-discrete Laplacian.
//!
//! The mirror-ghost Laplacian on `n` nodes has eigenvectors
//! `cos(π k j / (n - 1))` and eigenvalues `(4/h²) sin²(π k / (2(n - 1)))`,
//! so any function of it is applied with a forward type-I cosine transform,
//! a diagonal multiplier and the inverse transform. The type-I transform is
//! computed from a complex FFT of the even extension of length `2(n - 1)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::grid::{gradient_magnitude, max_min, sup_norm, Domain, Field};

/// Eigenvalues and FFT plans for one domain. Immutable once built.
#[derive(Clone)]
pub struct SpectralPlan {
    domain: Domain,
    eigenvalues: Vec<Vec<f64>>,
    ffts: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("nodes", &self.domain.nodes())
            .finish_non_exhaustive()
    }
}

impl SpectralPlan {
    pub fn new(domain: &Domain) -> Self {
        let mut planner = FftPlanner::new();
        let mut eigenvalues = Vec::with_capacity(domain.dim());
        let mut ffts = Vec::with_capacity(domain.dim());
        for (&n, &h) in domain.nodes().iter().zip(domain.spacing()) {
            let m = n - 1;
            eigenvalues.push(
                (0..n)
                    .map(|k| {
                        let s = (std::f64::consts::PI * k as f64 / (2 * m) as f64).sin();
                        4.0 * s * s / (h * h)
                    })
                    .collect(),
            );
            ffts.push(planner.plan_fft_forward(2 * m));
        }
        Self {
            domain: domain.clone(),
            eigenvalues,
            ffts,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Eigenvalues of the 1D Neumann Laplacian along `axis`, ascending.
    pub fn eigenvalues(&self, axis: usize) -> &[f64] {
        &self.eigenvalues[axis]
    }

    /// Smallest nonzero eigenvalue over all axes.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|ev| ev[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// In-place type-I cosine transform of every line along `axis`.
    /// Unnormalised: applying it twice multiplies by `2(n - 1)`.
    ///
    /// The even extension of a real line has a real spectrum, so two lines
    /// share one complex FFT: one in the real part, one in the imaginary part.
    fn dct1_axis(&self, data: &mut [f64], axis: usize) {
        let nodes = self.domain.nodes();
        let n = nodes[axis];
        let m = n - 1;
        let fft = &self.ffts[axis];
        let stride = if axis == 0 { 1 } else { nodes[0] };
        let lines = data.len() / n;
        // axis 0 lines are contiguous rows; axis 1 lines start at each x index
        let base = |line: usize| if axis == 0 { line * n } else { line };
        let pairs = lines.div_ceil(2);
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * m * pairs];
        for (pair, chunk) in buf.chunks_exact_mut(2 * m).enumerate() {
            let (first, second) = (2 * pair, 2 * pair + 1);
            for j in 0..n {
                let re = data[base(first) + j * stride];
                let im = if second < lines {
                    data[base(second) + j * stride]
                } else {
                    0.0
                };
                chunk[j] = Complex::new(re, im);
            }
            for j in 1..m {
                chunk[2 * m - j] = chunk[j];
            }
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (pair, chunk) in buf.chunks_exact(2 * m).enumerate() {
            let (first, second) = (2 * pair, 2 * pair + 1);
            for k in 0..n {
                data[base(first) + k * stride] = chunk[k].re;
                if second < lines {
                    data[base(second) + k * stride] = chunk[k].im;
                }
            }
        }
    }

    /// Applies `g(λ)` to the discrete Laplacian spectrum, `λ = -eigenvalue of Δ_h`.
    ///
    /// `g(0)` must be 1; the field is shifted by its first value before the
    /// transform so constant inputs come back bit-for-bit.
    pub fn apply_multiplier(&self, f: &Field, g: impl Fn(f64) -> f64) -> Result<Field> {
        f.check_shape(&self.domain)?;
        let nodes = self.domain.nodes();
        let shift = f.values()[0];
        let mut data: Vec<f64> = f.values().iter().map(|v| v - shift).collect();
        if data.iter().all(|v| *v == 0.0) {
            return Ok(f.clone());
        }
        for axis in 0..self.domain.dim() {
            self.dct1_axis(&mut data, axis);
        }
        let mut norm = 1.0;
        for &n in nodes {
            norm *= (2 * (n - 1)) as f64;
        }
        let n0 = nodes[0];
        for (flat, v) in data.iter_mut().enumerate() {
            let lambda = match self.domain.dim() {
                1 => self.eigenvalues[0][flat],
                _ => self.eigenvalues[0][flat % n0] + self.eigenvalues[1][flat / n0],
            };
            *v *= g(lambda) / norm;
        }
        for axis in 0..self.domain.dim() {
            self.dct1_axis(&mut data, axis);
        }
        for v in data.iter_mut() {
            *v += shift;
        }
        Ok(Field::from_raw(nodes, data))
    }

    /// `S(t) f`.
    pub fn heat_apply(&self, f: &Field, t: f64) -> Result<Field> {
        if !(t >= 0.0) {
            return Err(invalid(format!("heat time t = {t} must be non-negative")));
        }
        f.check_shape(&self.domain)?;
        if t == 0.0 {
            return Ok(f.clone());
        }
        self.apply_multiplier(f, |lambda| (-lambda * t).exp())
    }

    /// Solves `(I - dt Δ_h) u = f`.
    pub fn resolvent(&self, f: &Field, dt: f64) -> Result<Field> {
        if !(dt >= 0.0) {
            return Err(invalid(format!("time step {dt} must be non-negative")));
        }
        self.apply_multiplier(f, |lambda| 1.0 / (1.0 + dt * lambda))
    }
}

/// Output of [`smoothing_sequence`].
#[derive(Debug, Clone)]
pub struct SmoothedData {
    /// `u_0^n = S(t_n)(μ0 + 2^{-n})`
    pub field: Field,
    pub t_n: f64,
    /// `sup |S(t_n) v - v|`, inside `(2^{-(n+3)}, 2^{-(n+2)})` unless the
    /// data are constant.
    pub deviation: f64,
}

/// Neumann-compatible smooth approximation `u_0^n` of continuous data.
///
/// Lifts the data by `2^{-n}` and runs the heat flow for a time `t_n` chosen
/// by bisection so that the flow moves no node by more than `2^{-(n+2)}` and
/// at least one by more than `2^{-(n+3)}`.
pub fn smoothing_sequence(mu0: &Field, n: u32, plan: &SpectralPlan) -> Result<SmoothedData> {
    if n < 1 {
        return Err(invalid("smoothing index n must be >= 1"));
    }
    mu0.check_shape(plan.domain())?;
    let lift = 0.5f64.powi(n as i32);
    let v0 = mu0.map(|v| v + lift);
    let (hi, lo) = max_min(mu0)?;
    if hi == lo {
        return Ok(SmoothedData {
            field: v0,
            t_n: 0.0,
            deviation: 0.0,
        });
    }
    let upper = 0.5f64.powi(n as i32 + 2);
    let lower = 0.5f64.powi(n as i32 + 3);
    let deviation = |t: f64| -> Result<(Field, f64)> {
        let v = plan.heat_apply(&v0, t)?;
        let dev = v
            .values()
            .iter()
            .zip(v0.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok((v, dev))
    };
    let in_band = |d: f64| d > lower && d < upper;

    let h = plan.domain().min_spacing();
    let mut lo_t = 0.0;
    let mut hi_t = h * h;
    let mut doublings = 0;
    loop {
        let (v, d) = deviation(hi_t)?;
        if in_band(d) {
            return Ok(SmoothedData {
                field: v,
                t_n: hi_t,
                deviation: d,
            });
        }
        if d >= upper {
            break;
        }
        lo_t = hi_t;
        hi_t *= 2.0;
        doublings += 1;
        // S(t) v0 reaches the mean after a few multiples of 1/λ1.
        if doublings > 200 || hi_t * plan.spectral_gap() > 200.0 {
            return Err(Error::BracketFailure(format!(
                "heat flow never moves the data by more than 2^-{}: max deviation {d}",
                n + 3
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_t + hi_t);
        let (v, d) = deviation(mid)?;
        if in_band(d) {
            return Ok(SmoothedData {
                field: v,
                t_n: mid,
                deviation: d,
            });
        }
        if d <= lower {
            lo_t = mid;
        } else {
            hi_t = mid;
        }
    }
    Err(Error::BracketFailure(format!(
        "bisection did not land in ({lower}, {upper})"
    )))
}

/// Empirical constant in `‖∇S(t)μ0‖∞ <= C ‖μ0‖∞ t^{-1/2}` over `t_grid`.
pub fn smoothing_estimate(mu0: &Field, t_grid: &[f64], plan: &SpectralPlan) -> Result<f64> {
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0)) {
        return Err(invalid(format!(
            "smoothing times must be positive, got {t}"
        )));
    }
    let norm = sup_norm(mu0);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for &t in t_grid {
        let u = plan.heat_apply(mu0, t)?;
        let g = sup_norm(&gradient_magnitude(&u, plan.domain())?);
        best = best.max(g * t.sqrt() / norm);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::oscillation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(d: &Domain, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::new(d, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Dense O(n²) type-I cosine transform used as an independent reference.
    fn dct1_dense(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let m = (n - 1) as f64;
        (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                x[0] + sign * x[n - 1]
                    + 2.0
                        * (1..n - 1)
                            .map(|j| x[j] * (PI * (j * k) as f64 / m).cos())
                            .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn fft_transform_matches_dense_reference() {
        let d = Domain::unit_interval(13).unwrap();
        let plan = SpectralPlan::new(&d);
        let f = random_field(&d, 3);
        let mut data = f.values().to_vec();
        plan.dct1_axis(&mut data, 0);
        for (a, b) in data.iter().zip(dct1_dense(f.values())) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_are_those_of_the_stencil() {
        let d = Domain::new(&[2.0, 1.0], &[9, 6]).unwrap();
        let plan = SpectralPlan::new(&d);
        for axis in 0..2 {
            let ev = plan.eigenvalues(axis);
            assert_eq!(ev[0], 0.0);
            assert!(ev[1..].iter().all(|v| *v > 0.0));
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        }
        // Multiplier λ applied through the transform equals -Δ_h.
        let f = random_field(&d, 5);
        let via_plan = plan.apply_multiplier(&f, |l| 1.0 - l).unwrap();
        let lap = crate::grid::laplacian(&f, &d).unwrap();
        for ((a, b), c) in via_plan.values().iter().zip(lap.values()).zip(f.values()) {
            assert_relative_eq!(*a, c + b, epsilon = 1e-10);
        }
    }

    #[test]
    fn constants_are_fixed_exactly() {
        let d = Domain::new(&[1.0, 1.0], &[8, 8]).unwrap();
        let plan = SpectralPlan::new(&d);
        let c = Field::constant(&d, -2.75).unwrap();
        for t in [0.0, 1e-3, 1.0, 50.0] {
            assert_eq!(plan.heat_apply(&c, t).unwrap(), c);
        }
        assert!(plan.heat_apply(&c, -1.0).is_err());
    }

    #[test]
    fn single_mode_decays_at_its_eigenvalue() {
        let d = Domain::unit_interval(65).unwrap();
        let plan = SpectralPlan::new(&d);
        let f = Field::from_fn(&d, |x| (PI * x[0]).cos()).unwrap();
        let lambda1 = plan.eigenvalues(0)[1];
        assert!((lambda1 - PI * PI).abs() < PI.powi(4_i32) * d.spacing()[0].powi(2) / 12.0 * 1.01);
        let t = 0.07;
        let u = plan.heat_apply(&f, t).unwrap();
        for (a, b) in u.values().iter().zip(f.values()) {
            assert_relative_eq!(*a, (-lambda1 * t).exp() * b, epsilon = 1e-14);
        }
    }

    #[test]
    fn mean_is_preserved() {
        let d = Domain::new(&[1.0, 0.7], &[17, 12]).unwrap();
        let plan = SpectralPlan::new(&d);
        let f = random_field(&d, 11);
        let m0 = f.mean(&d).unwrap();
        for t in [1e-4, 0.01, 0.3, 10.0] {
            let m = plan.heat_apply(&f, t).unwrap().mean(&d).unwrap();
            assert!((m - m0).abs() < 1e-13, "t={t}: {m} vs {m0}");
        }
    }

    #[test]
    fn semigroup_and_contraction() {
        let d = Domain::new(&[1.0, 1.0], &[16, 16]).unwrap();
        let plan = SpectralPlan::new(&d);
        let f = random_field(&d, 7);
        let (s, t) = (0.003, 0.011);
        let two = plan
            .heat_apply(&plan.heat_apply(&f, s).unwrap(), t)
            .unwrap();
        let one = plan.heat_apply(&f, s + t).unwrap();
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for t in [1e-5, 1e-3, 0.1] {
            let u = plan.heat_apply(&f, t).unwrap();
            assert!(sup_norm(&u) <= sup_norm(&f) + 1e-14);
            assert!(oscillation(&u).unwrap() <= oscillation(&f).unwrap() + 1e-14);
        }
    }

    #[test]
    fn smoothing_of_constant_data() {
        let d = Domain::unit_interval(33).unwrap();
        let plan = SpectralPlan::new(&d);
        let c = Field::constant(&d, 1.5).unwrap();
        let out = smoothing_sequence(&c, 4, &plan).unwrap();
        assert_eq!(out.t_n, 0.0);
        assert!(out.field.values().iter().all(|v| *v == 1.5 + 1.0 / 16.0));
        assert!(smoothing_sequence(&c, 0, &plan).is_err());
    }

    #[test]
    fn smoothing_bounds_for_cosine() {
        let d = Domain::unit_interval(129).unwrap();
        let plan = SpectralPlan::new(&d);
        let mu0 = Field::from_fn(&d, |x| (PI * x[0]).cos()).unwrap();
        let out = smoothing_sequence(&mu0, 3, &plan).unwrap();
        assert!(out.deviation > 1.0 / 64.0 && out.deviation < 1.0 / 32.0);
        for v in out.field.values() {
            assert!(*v >= -1.0 + 1.0 / 16.0 && *v <= 1.0 + 0.25);
        }
    }

    #[test]
    fn smoothing_sequence_decreases_in_n() {
        let d = Domain::unit_interval(101).unwrap();
        let plan = SpectralPlan::new(&d);
        let mu0 = Field::from_fn(&d, |x| (x[0] - 0.4).abs()).unwrap();
        let mut prev: Option<Field> = None;
        for n in 1..=6 {
            let cur = smoothing_sequence(&mu0, n, &plan).unwrap().field;
            if let Some(p) = &prev {
                let gap = 0.5f64.powi(n as i32 + 2);
                for (a, b) in p.values().iter().zip(cur.values()) {
                    assert!(a - b >= gap - 1e-15, "n={n}: {a} - {b} < {gap}");
                }
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn smoothing_estimate_single_mode() {
        let d = Domain::unit_interval(257).unwrap();
        let plan = SpectralPlan::new(&d);
        let mu0 = Field::from_fn(&d, |x| (PI * x[0]).cos()).unwrap();
        let lambda1 = plan.eigenvalues(0)[1];
        let t_peak = 1.0 / (2.0 * lambda1);
        let grid: Vec<f64> = (1..=400).map(|i| t_peak * i as f64 / 200.0).collect();
        let c = smoothing_estimate(&mu0, &grid, &plan).unwrap();
        let expected = PI / (2.0 * std::f64::consts::E * lambda1).sqrt();
        assert_relative_eq!(c, expected, max_relative = 1e-3);
        let zero = Field::constant(&d, 0.0).unwrap();
        assert_eq!(smoothing_estimate(&zero, &grid, &plan).unwrap(), 0.0);
        assert!(smoothing_estimate(&mu0, &[0.0], &plan).is_err());
    }

    #[test]
    fn smoothing_estimate_is_stable_under_grid_refinement() {
        let d = Domain::unit_interval(257).unwrap();
        let plan = SpectralPlan::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let coeffs: Vec<f64> = (1..=5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mu0 = Field::from_fn(&d, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (PI * (k + 1) as f64 * x[0]).cos())
                .sum()
        })
        .unwrap();
        let geometric = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| 1e-4 * (1e4f64).powf(i as f64 / (n - 1) as f64))
                .collect()
        };
        let coarse = smoothing_estimate(&mu0, &geometric(20), &plan).unwrap();
        let fine = smoothing_estimate(&mu0, &geometric(80), &plan).unwrap();
        assert!((coarse - fine).abs() <= 0.05 * fine, "{coarse} vs {fine}");
    }
}
