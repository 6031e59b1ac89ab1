//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use hjlab_core::{Domain, Field};

/// Square grid with `cells` cells per axis in `dim` dimensions on the unit
/// interval or square.
pub fn grid(dim: usize, cells: usize) -> Domain {
    let lengths = vec![1.0; dim];
    let nodes = vec![cells + 1; dim];
    Domain::new(&lengths, &nodes).expect("valid benchmark grid")
}

/// Smooth Neumann-compatible data with a few active modes.
pub fn smooth_field(d: &Domain) -> Field {
    Field::from_fn(d, |x| {
        (PI * x[0]).cos() * (1.0 + 0.5 * (2.0 * PI * x[1]).cos()) + 0.3 * (3.0 * PI * x[0]).cos()
    })
    .expect("valid field")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_match_their_grids() {
        for dim in [1, 2] {
            let d = grid(dim, 16);
            assert_eq!(smooth_field(&d).len(), 17usize.pow(dim as u32));
        }
    }
}
