//! Deterministic initial-data generators.

use std::f64::consts::PI;

use anyhow::{bail, Context};
use hjlab_core::grid::oscillation;
use hjlab_core::{Domain, Field};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::InitialSpec;

pub fn generate_initial_data(spec: &InitialSpec, d: &Domain) -> anyhow::Result<Field> {
    let field = match spec {
        InitialSpec::Constant { value } => Field::constant(d, *value)?,
        InitialSpec::CosineMode {
            wavenumbers,
            amplitude,
        } => {
            if wavenumbers.len() != d.dim() {
                bail!(
                    "cosine_mode needs {} wavenumbers, got {}",
                    d.dim(),
                    wavenumbers.len()
                );
            }
            let lengths = d.lengths().to_vec();
            let k = wavenumbers.clone();
            Field::from_fn(d, |x| {
                amplitude
                    * (0..lengths.len())
                        .map(|i| (k[i] as f64 * PI * x[i] / lengths[i]).cos())
                        .product::<f64>()
            })?
        }
        InitialSpec::CosinePoly { modes, seed, osc } => {
            scale_to_osc(cosine_poly(d, *modes, *seed)?, *osc)?
        }
        InitialSpec::PiecewiseLinear { knots, seed, osc } => {
            scale_to_osc(piecewise_linear(d, *knots, *seed)?, *osc)?
        }
        InitialSpec::File { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading initial data {}", path.display()))?;
            let values: Vec<f64> = serde_json::from_str(&text)
                .with_context(|| format!("parsing initial data {}", path.display()))?;
            Field::new(d, values)?
        }
    };
    if let Some(index) = field.first_non_finite() {
        bail!("initial data are not finite at node {index}");
    }
    Ok(field)
}

fn multi_indices(dim: usize, modes: usize) -> Vec<[usize; 2]> {
    let second = if dim == 2 { modes } else { 0 };
    let mut out = Vec::new();
    for k1 in 0..=second {
        for k0 in 0..=modes {
            if k0 + k1 > 0 {
                out.push([k0, k1]);
            }
        }
    }
    out
}

/// `Σ c_k Π cos(k_i π x_i / L_i)` with `c_k` uniform in `(-1, 1) / |k|₁`.
fn cosine_poly(d: &Domain, modes: usize, seed: u64) -> anyhow::Result<Field> {
    if modes == 0 {
        bail!("cosine_poly needs at least one mode");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<([usize; 2], f64)> = multi_indices(d.dim(), modes)
        .into_iter()
        .map(|k| (k, rng.gen_range(-1.0..1.0) / (k[0] + k[1]) as f64))
        .collect();
    let lengths = d.lengths().to_vec();
    Ok(Field::from_fn(d, |x| {
        terms
            .iter()
            .map(|(k, c)| {
                c * (0..lengths.len())
                    .map(|i| (k[i] as f64 * PI * x[i] / lengths[i]).cos())
                    .product::<f64>()
            })
            .sum()
    })?)
}

/// Linear (1D) or bilinear (2D) interpolant of uniform random knot values.
fn piecewise_linear(d: &Domain, knots: usize, seed: u64) -> anyhow::Result<Field> {
    if knots == 0 {
        bail!("piecewise_linear needs at least one cell between knots");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_axis = knots + 1;
    let second = if d.dim() == 2 { per_axis } else { 1 };
    let table: Vec<f64> = (0..per_axis * second)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let lengths = d.lengths().to_vec();
    let locate = |x: f64, len: f64| -> (usize, f64) {
        let s = (x / len * knots as f64).clamp(0.0, knots as f64);
        let i = (s.floor() as usize).min(knots - 1);
        (i, s - i as f64)
    };
    Ok(Field::from_fn(d, |x| {
        let (i, fx) = locate(x[0], lengths[0]);
        let at = |i: usize, j: usize| table[j * per_axis + i];
        if lengths.len() == 1 {
            at(i, 0) * (1.0 - fx) + at(i + 1, 0) * fx
        } else {
            let (j, fy) = locate(x[1], lengths[1]);
            (at(i, j) * (1.0 - fx) + at(i + 1, j) * fx) * (1.0 - fy)
                + (at(i, j + 1) * (1.0 - fx) + at(i + 1, j + 1) * fx) * fy
        }
    })?)
}

/// Rescales so that `max - min` equals `target` without exceeding it.
fn scale_to_osc(f: Field, target: f64) -> anyhow::Result<Field> {
    if !(target > 0.0 && target.is_finite()) {
        bail!("target oscillation {target} must be positive");
    }
    let osc = oscillation(&f)?;
    if osc == 0.0 {
        bail!("generated data are constant and cannot be scaled to oscillation {target}");
    }
    let mut factor = target / osc;
    loop {
        let scaled = f.map(|v| v * factor);
        if oscillation(&scaled)? <= target {
            return Ok(scaled);
        }
        factor *= 1.0 - f64::EPSILON;
    }
}
