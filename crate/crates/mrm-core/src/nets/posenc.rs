//! Fixed sinusoidal positional encodings.

use crate::error::{Error, Result};
use crate::linalg::Scalar;

/// Frequencies are geometric: omega_f = 10000^(-f / F) for f in 0..F.
fn omega(f: usize, count: usize) -> f64 {
    1.0 / 10000f64.powf(f as f64 / count as f64)
}

/// Encode a scalar position into `dim` channels as interleaved sin/cos
/// pairs over `dim/2` frequencies.
fn encode_axis<T: Scalar>(out: &mut [T], pos: f64) {
    let freqs = out.len() / 2;
    for f in 0..freqs {
        let angle = pos * omega(f, freqs);
        out[2 * f] = T::from_f64(angle.sin());
        out[2 * f + 1] = T::from_f64(angle.cos());
    }
}

/// 2-D sin-cos table for a patch grid, flat `[rows*cols, dim]` in row-major
/// cell order. The first half of the channels encodes the row coordinate,
/// the second half the column.
pub fn sincos_2d<T: Scalar>(grid_rows: usize, grid_cols: usize, dim: usize) -> Result<Vec<T>> {
    if dim % 4 != 0 {
        return Err(Error::Argument(format!("2-D sin-cos dim {dim} must be divisible by 4")));
    }
    let half = dim / 2;
    let mut table = vec![T::zero(); grid_rows * grid_cols * dim];
    for r in 0..grid_rows {
        for c in 0..grid_cols {
            let row = &mut table[(r * grid_cols + c) * dim..(r * grid_cols + c + 1) * dim];
            encode_axis(&mut row[..half], r as f64);
            encode_axis(&mut row[half..], c as f64);
        }
    }
    Ok(table)
}

/// 1-D sin-cos table for sequence positions, flat `[len, dim]`.
pub fn sincos_1d<T: Scalar>(len: usize, dim: usize) -> Result<Vec<T>> {
    if dim % 2 != 0 {
        return Err(Error::Argument(format!("1-D sin-cos dim {dim} must be even")));
    }
    let mut table = vec![T::zero(); len * dim];
    for p in 0..len {
        encode_axis(&mut table[p * dim..(p + 1) * dim], p as f64);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims() {
        assert!(sincos_2d::<f64>(2, 2, 6).is_err());
        assert!(sincos_1d::<f64>(4, 3).is_err());
    }

    #[test]
    fn all_entries_in_unit_interval() {
        let t = sincos_2d::<f64>(7, 5, 16).unwrap();
        assert!(t.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn distinct_cells_distinct_vectors() {
        // Exhaustive pairwise check on a 4x4 grid.
        let dim = 8;
        let t = sincos_2d::<f64>(4, 4, dim).unwrap();
        for a in 0..16 {
            for b in (a + 1)..16 {
                let va = &t[a * dim..(a + 1) * dim];
                let vb = &t[b * dim..(b + 1) * dim];
                assert_ne!(va, vb, "cells {a} and {b} collide");
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = sincos_2d::<f32>(3, 3, 12).unwrap();
        let b = sincos_2d::<f32>(3, 3, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_dimensional_rows_distinct() {
        let dim = 6;
        let t = sincos_1d::<f64>(32, dim).unwrap();
        for a in 0..32 {
            for b in (a + 1)..32 {
                assert_ne!(&t[a * dim..(a + 1) * dim], &t[b * dim..(b + 1) * dim]);
            }
        }
    }
}
