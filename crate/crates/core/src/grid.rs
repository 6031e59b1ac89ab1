//! Node-centred tensor grids on axis-aligned boxes and the discrete operators
//! used by the solver.
//!
//! Nodes sit at `x = i * h` with `h = length / (nodes - 1)`, so both faces of
//! every axis carry nodes. Homogeneous Neumann conditions are imposed with a
//! mirror ghost node: the value outside the face equals the first interior
//! neighbour. With that convention the Laplacian is self-adjoint for the
//! trapezoidal inner product and is diagonalised by the type-I cosine basis.

use crate::error::{Error, Result};

/// An interval (1D) or rectangle (2D) with its node layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lengths: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
}

impl Domain {
    pub fn new(lengths: &[f64], nodes: &[usize]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if lengths.len() != nodes.len() {
            return Err(Error::InvalidDomain(
                "lengths and node counts differ in dimension".into(),
            ));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!("length {l} is not positive")));
        }
        if let Some(n) = nodes.iter().find(|n| **n < 3) {
            return Err(Error::InvalidDomain(format!(
                "need at least 3 nodes per axis, got {n}"
            )));
        }
        let spacing = lengths
            .iter()
            .zip(nodes)
            .map(|(l, n)| l / (*n - 1) as f64)
            .collect();
        Ok(Self {
            lengths: lengths.to_vec(),
            nodes: nodes.to_vec(),
            spacing,
        })
    }

    /// Unit interval with `nodes` nodes.
    pub fn unit_interval(nodes: usize) -> Result<Self> {
        Self::new(&[1.0], &[nodes])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diameter(&self) -> f64 {
        self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub(crate) fn strides(&self) -> [usize; 2] {
        [1, self.nodes[0]]
    }

    /// Multi-index of a flat node index.
    pub fn index_of(&self, flat: usize) -> [usize; 2] {
        let n0 = self.nodes[0];
        [flat % n0, flat / n0]
    }

    /// Physical coordinates of a flat node index (unused axes are zero).
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let idx = self.index_of(flat);
        let mut x = [0.0; 2];
        for (axis, h) in self.spacing.iter().enumerate() {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Trapezoidal quadrature weights; they sum to the volume.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| {
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect()
            })
            .collect();
        (0..self.len())
            .map(|flat| {
                let idx = self.index_of(flat);
                per_axis
                    .iter()
                    .enumerate()
                    .map(|(axis, w)| w[idx[axis]])
                    .product()
            })
            .collect()
    }
}

/// Nodal values of a scalar function on a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl Field {
    /// Wraps nodal values, rejecting wrong lengths and non-finite entries.
    pub fn new(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch {
                expected: domain.nodes().to_vec(),
                found: vec![values.len()],
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            nodes: domain.nodes().to_vec(),
            values,
        })
    }

    /// Same as [`Field::new`] but without the finiteness scan. Used for
    /// intermediate results whose finiteness is checked by the caller.
    pub(crate) fn from_raw(nodes: &[usize], values: Vec<f64>) -> Self {
        debug_assert_eq!(nodes.iter().product::<usize>(), values.len());
        Self {
            nodes: nodes.to_vec(),
            values,
        }
    }

    pub fn constant(domain: &Domain, c: f64) -> Result<Self> {
        Self::new(domain, vec![c; domain.len()])
    }

    /// Samples `f` at the node coordinates.
    pub fn from_fn(domain: &Domain, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..domain.len()).map(|i| f(domain.coords(i))).collect();
        Self::new(domain, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matches(&self, domain: &Domain) -> bool {
        self.nodes == domain.nodes()
    }

    pub fn check_shape(&self, domain: &Domain) -> Result<()> {
        if self.matches(domain) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: domain.nodes().to_vec(),
                found: self.nodes.clone(),
            })
        }
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.nodes, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn negated(&self) -> Self {
        self.map(|v| -v)
    }

    /// Trapezoidal mean over the domain.
    pub fn mean(&self, domain: &Domain) -> Result<f64> {
        self.check_shape(domain)?;
        let w = domain.weights();
        let total: f64 = self.values.iter().zip(&w).map(|(v, w)| v * w).sum();
        Ok(total / domain.volume())
    }
}

/// Visits, for every node and axis, the mirrored neighbours `(left, right)`.
#[inline]
fn neighbours(idx: usize, n: usize, stride: usize, flat: usize) -> (usize, usize) {
    let left = if idx == 0 {
        flat + stride
    } else {
        flat - stride
    };
    let right = if idx == n - 1 {
        flat - stride
    } else {
        flat + stride
    };
    (left, right)
}

/// Second-order Neumann Laplacian with ghost mirror reflection.
pub fn laplacian(f: &Field, d: &Domain) -> Result<Field> {
    f.check_shape(d)?;
    let strides = d.strides();
    let u = f.values();
    let out = (0..u.len())
        .map(|flat| {
            let idx = d.index_of(flat);
            (0..d.dim())
                .map(|axis| {
                    let h = d.spacing()[axis];
                    let (l, r) = neighbours(idx[axis], d.nodes()[axis], strides[axis], flat);
                    (u[l] - 2.0 * u[flat] + u[r]) / (h * h)
                })
                .sum()
        })
        .collect();
    Ok(Field::from_raw(d.nodes(), out))
}

/// Squared gradient magnitude; the normal component vanishes on faces.
pub fn gradient_squared(f: &Field, d: &Domain) -> Result<Vec<f64>> {
    f.check_shape(d)?;
    let u = f.values();
    let nodes = d.nodes();
    let nx = nodes[0];
    let ny = if d.dim() == 2 { nodes[1] } else { 1 };
    let cx = 0.5 / d.spacing()[0];
    let cy = if d.dim() == 2 {
        0.5 / d.spacing()[1]
    } else {
        0.0
    };
    let mut out = vec![0.0; u.len()];
    for j in 0..ny {
        let row = j * nx;
        for i in 1..nx - 1 {
            let g = (u[row + i + 1] - u[row + i - 1]) * cx;
            out[row + i] = g * g;
        }
        if j > 0 && j < ny - 1 {
            for i in 0..nx {
                let g = (u[row + nx + i] - u[row - nx + i]) * cy;
                out[row + i] += g * g;
            }
        }
    }
    Ok(out)
}

/// `|∇f|` by central differences, with the normal component set to zero on
/// boundary faces.
pub fn gradient_magnitude(f: &Field, d: &Domain) -> Result<Field> {
    let sq = gradient_squared(f, d)?;
    Ok(Field::from_raw(
        d.nodes(),
        sq.into_iter().map(f64::sqrt).collect(),
    ))
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `(∫|f|^q)^{1/q}` with trapezoidal weights.
pub fn q_norm(f: &Field, q: f64, d: &Domain) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "q-norm needs q >= 1, got {q}"
        )));
    }
    f.check_shape(d)?;
    let w = d.weights();
    let integral: f64 = f
        .values()
        .iter()
        .zip(&w)
        .map(|(v, w)| w * v.abs().powf(q))
        .sum();
    Ok(integral.powf(1.0 / q))
}

/// `(max, min)` over all nodes.
pub fn max_min(f: &Field) -> Result<(f64, f64)> {
    let mut it = f.values().iter().copied();
    let first = it.next().ok_or(Error::EmptyField)?;
    Ok(it.fold((first, first), |(hi, lo), v| (hi.max(v), lo.min(v))))
}

pub fn oscillation(f: &Field) -> Result<f64> {
    let (hi, lo) = max_min(f)?;
    Ok(hi - lo)
}
