use nalgebra::DMatrix;
use num_complex::Complex64;

use super::SimError;
use crate::C64;

/// Largest matrix the permanent routines accept.
pub const MAX_PERMANENT_DIM: usize = 12;

/// Exact permanent by Ryser's inclusion–exclusion formula, visiting column
/// subsets in Gray-code order so each step updates the row sums by one
/// column: O(2ⁿ·n).
pub fn permanent(m: &DMatrix<C64>) -> Result<C64, SimError> {
    if !m.is_square() {
        return Err(SimError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let n = m.nrows();
    if n > MAX_PERMANENT_DIM {
        return Err(SimError::TooManyPhotons { n, max: MAX_PERMANENT_DIM });
    }
    Ok(ryser(m))
}

pub(crate) fn ryser(m: &DMatrix<C64>) -> C64 {
    let n = m.nrows();
    match n {
        0 => return Complex64::new(1.0, 0.0),
        1 => return m[(0, 0)],
        2 => return m[(0, 0)] * m[(1, 1)] + m[(0, 1)] * m[(1, 0)],
        _ => {}
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray = 0u64;
    for k in 1..(1u64 << n) {
        let next = k ^ (k >> 1);
        let flipped = next ^ gray;
        let col = flipped.trailing_zeros() as usize;
        if next & flipped != 0 {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += m[(i, col)];
            }
        } else {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= m[(i, col)];
            }
        }
        gray = next;
        let prod: C64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

/// Permanent by direct expansion over all permutations. O(n!·n); meant for
/// cross-checks on small matrices.
pub fn permanent_naive(m: &DMatrix<C64>) -> C64 {
    use itertools::Itertools;
    let n = m.nrows();
    (0..n)
        .permutations(n)
        .map(|p| p.iter().enumerate().map(|(i, &j)| m[(i, j)]).product::<C64>())
        .sum()
}
