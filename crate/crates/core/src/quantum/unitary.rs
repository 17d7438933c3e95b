use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Largest entry of `|U·U† − I|` accepted for a [`LinearUnitary`].
pub const UNITARITY_TOLERANCE: f64 = 1e-9;

/// Transfer matrix of a lossless linear-optical network over `m` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearUnitary {
    entries: DMatrix<Complex64>,
}

impl LinearUnitary {
    /// Wraps a matrix after checking that it is square and unitary.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::domain(format!(
                "unitary must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let u = LinearUnitary { entries };
        let err = u.unitarity_error();
        if err >= UNITARITY_TOLERANCE {
            return Err(Error::domain(format!(
                "matrix is not unitary: max |UU†-I| = {err:e}"
            )));
        }
        Ok(u)
    }

    pub fn identity(modes: usize) -> Self {
        LinearUnitary {
            entries: DMatrix::identity(modes, modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[(row, col)]
    }

    /// `max |U·U† − I|` over all entries.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.modes();
        let prod = &self.entries * self.entries.adjoint();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// The network `self` followed by `next`.
    pub fn then(&self, next: &LinearUnitary) -> Result<LinearUnitary> {
        if self.modes() != next.modes() {
            return Err(Error::domain("cannot compose unitaries of different size"));
        }
        Ok(LinearUnitary {
            entries: &next.entries * &self.entries,
        })
    }
}

/// Two-mode coupler with power reflectivity (cross fraction) `r` and a
/// symmetric `i`-phase convention on the cross terms:
///
/// ```text
/// [[ √t,            i·e^{iφ}·√r ],
///  [ i·e^{-iφ}·√r,  √t          ]]      t = 1 − r
/// ```
pub fn beamsplitter_unitary(reflectivity: f64, phase: f64) -> Result<LinearUnitary> {
    if !(0.0..=1.0).contains(&reflectivity) {
        return Err(Error::domain(format!(
            "reflectivity {reflectivity} outside [0, 1]"
        )));
    }
    let t = (1.0 - reflectivity).sqrt();
    let r = reflectivity.sqrt();
    let i = Complex64::i();
    let cross_up = i * Complex64::from_polar(r, phase);
    let cross_down = i * Complex64::from_polar(r, -phase);
    let entries = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(t, 0.0),
            cross_up,
            cross_down,
            Complex64::new(t, 0.0),
        ],
    );
    Ok(LinearUnitary { entries })
}

/// Embeds `u` so it acts on `target_modes` (in order) of a `total_modes`
/// network, leaving every other mode untouched.
pub fn embed_unitary(
    u: &LinearUnitary,
    target_modes: &[usize],
    total_modes: usize,
) -> Result<LinearUnitary> {
    if target_modes.len() != u.modes() {
        return Err(Error::domain(format!(
            "{} target modes given for a {}-mode unitary",
            target_modes.len(),
            u.modes()
        )));
    }
    let mut seen = vec![false; total_modes];
    for &m in target_modes {
        if m >= total_modes {
            return Err(Error::domain(format!(
                "mode {m} out of range for {total_modes} modes"
            )));
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(Error::domain(format!("mode {m} listed twice")));
        }
    }
    let mut entries = DMatrix::identity(total_modes, total_modes);
    for (a, &row) in target_modes.iter().enumerate() {
        for (b, &col) in target_modes.iter().enumerate() {
            entries[(row, col)] = u.entry(a, b);
        }
    }
    Ok(LinearUnitary { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn transmissive_splitter_is_identity() {
        let u = beamsplitter_unitary(0.0, 0.0).unwrap();
        assert_eq!(u, LinearUnitary::identity(2));
    }

    #[test]
    fn reflective_splitter_swaps_with_i_phase() {
        let u = beamsplitter_unitary(1.0, 0.0).unwrap();
        let i = Complex64::i();
        assert!(close(u.entry(0, 0), Complex64::new(0.0, 0.0)));
        assert!(close(u.entry(0, 1), i));
        assert!(close(u.entry(1, 0), i));
        assert!(close(u.entry(1, 1), Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn balanced_splitter_entries() {
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((u.entry(i, j).norm() - FRAC_1_SQRT_2).abs() < 1e-15);
            }
        }
        assert!(u.unitarity_error() < 1e-12);
    }

    #[test]
    fn reflectivity_out_of_range() {
        assert!(matches!(
            beamsplitter_unitary(1.2, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            beamsplitter_unitary(-0.1, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn embed_identity_and_balanced() {
        let id = embed_unitary(&LinearUnitary::identity(2), &[0, 1], 4).unwrap();
        assert_eq!(id, LinearUnitary::identity(4));

        let bs = beamsplitter_unitary(0.5, 0.0).unwrap();
        let u = embed_unitary(&bs, &[1, 2], 4).unwrap();
        for &row in &[0usize, 3] {
            for col in 0..4 {
                let expect = if col == row { 1.0 } else { 0.0 };
                assert!(close(u.entry(row, col), Complex64::new(expect, 0.0)));
            }
        }
        assert!(u.unitarity_error() < UNITARITY_TOLERANCE);
    }

    #[test]
    fn embed_rejects_bad_modes() {
        let bs = beamsplitter_unitary(0.5, 0.0).unwrap();
        assert!(embed_unitary(&bs, &[1, 1], 4).is_err());
        assert!(embed_unitary(&bs, &[1, 4], 4).is_err());
        assert!(embed_unitary(&bs, &[1], 4).is_err());
    }

    #[test]
    fn new_rejects_non_unitary() {
        let m = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(LinearUnitary::new(m).is_err());
        let m = DMatrix::from_element(2, 3, Complex64::new(0.0, 0.0));
        assert!(LinearUnitary::new(m).is_err());
    }

    proptest! {
        #[test]
        fn random_embeds_stay_unitary(
            r in 0.0f64..=1.0,
            phase in -10.0f64..10.0,
            a in 0usize..5,
            b in 0usize..5,
            r2 in 0.0f64..=1.0,
        ) {
            prop_assume!(a != b);
            let bs = beamsplitter_unitary(r, phase).unwrap();
            let u = embed_unitary(&bs, &[a, b], 5).unwrap();
            prop_assert!(u.unitarity_error() < UNITARITY_TOLERANCE);
            let second = embed_unitary(&beamsplitter_unitary(r2, 0.3).unwrap(), &[b, (b + 1) % 5], 5).unwrap();
            let net = u.then(&second).unwrap();
            prop_assert!(net.unitarity_error() < UNITARITY_TOLERANCE);
        }
    }
}
