use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Largest matrix dimension accepted by [`permanent`].
pub const DEFAULT_PERMANENT_CAP: usize = 8;

/// Permanent of a square complex matrix with the default size cap.
pub fn permanent(m: &DMatrix<Complex64>) -> Result<Complex64> {
    permanent_with_cap(m, DEFAULT_PERMANENT_CAP)
}

/// Ryser's inclusion–exclusion formula walked in Gray-code order, O(2ⁿ·n):
///
/// `perm(A) = (−1)ⁿ Σ_{S ⊆ cols} (−1)^{|S|} Π_i Σ_{j∈S} a_ij`
pub fn permanent_with_cap(m: &DMatrix<Complex64>, cap: usize) -> Result<Complex64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::domain(format!(
            "permanent needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n > cap {
        return Err(Error::domain(format!(
            "matrix dimension {n} exceeds permanent cap {cap}"
        )));
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }

    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if added {
                *s += m[(i, flipped)];
            } else {
                *s -= m[(i, flipped)];
            }
        }
        gray = next;
        let prod = row_sums
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s);
        if next.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        total = -total;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, data: &[f64]) -> DMatrix<Complex64> {
        let v: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        DMatrix::from_row_slice(rows, rows, &v)
    }

    #[test]
    fn small_known_values() {
        assert_eq!(
            permanent(&real(2, &[1., 1., 1., 1.])).unwrap(),
            Complex64::new(2.0, 0.0)
        );
        let id3 = DMatrix::<Complex64>::identity(3, 3);
        assert_eq!(permanent(&id3).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(
            permanent(&real(2, &[1., 2., 3., 4.])).unwrap(),
            Complex64::new(10.0, 0.0)
        );
    }

    #[test]
    fn all_ones_is_factorial() {
        let m = DMatrix::from_element(5, 5, Complex64::new(1.0, 0.0));
        assert!((permanent(&m).unwrap() - Complex64::new(120.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn rejects_non_square_and_oversized() {
        let m = DMatrix::from_element(2, 3, Complex64::new(1.0, 0.0));
        assert!(permanent(&m).is_err());
        let big = DMatrix::<Complex64>::identity(9, 9);
        assert!(permanent(&big).is_err());
        assert!(permanent_with_cap(&big, 9).is_ok());
    }
}
