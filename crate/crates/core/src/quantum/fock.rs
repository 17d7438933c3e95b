use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use super::permanent::permanent_with_cap;
use super::unitary::LinearUnitary;
use crate::{Error, Result};

/// Default photon-number cap for exact output distributions.
pub const DEFAULT_PHOTON_CAP: usize = 4;

/// Photon count per optical mode; mode ids are the vector indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockOccupation {
    counts: Vec<u32>,
}

impl FockOccupation {
    pub fn new(counts: Vec<u32>) -> Self {
        FockOccupation { counts }
    }

    pub fn vacuum(modes: usize) -> Self {
        FockOccupation {
            counts: vec![0; modes],
        }
    }

    /// Occupation with one photon in each listed mode (repeats allowed).
    pub fn from_photon_modes(modes: usize, photon_modes: &[usize]) -> Result<Self> {
        let mut counts = vec![0u32; modes];
        for &m in photon_modes {
            *counts.get_mut(m).ok_or_else(|| {
                Error::domain(format!("mode {m} out of range for {modes} modes"))
            })? += 1;
        }
        Ok(FockOccupation { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, mode: usize) -> u32 {
        self.counts[mode]
    }

    pub fn modes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Mode index of every photon, repeated by occupation, in mode order.
    pub fn photon_modes(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| std::iter::repeat_n(m, c as usize))
            .collect()
    }

    fn factorial_product(&self) -> f64 {
        self.counts.iter().map(|&c| factorial(c)).product()
    }

    fn add(&self, other: &FockOccupation) -> FockOccupation {
        FockOccupation {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl fmt::Display for FockOccupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "⟩")
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Internal (spectral/temporal) mode of a photon. Label 0 is the common mode;
/// photons with different labels never interfere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InternalLabel(pub u32);

impl InternalLabel {
    pub const COMMON: InternalLabel = InternalLabel(0);
}

/// Probability of every output occupation with the input's photon number.
pub type FockDistribution = BTreeMap<FockOccupation, f64>;

/// All occupations of `photons` photons over `modes` modes, in lexicographic
/// order of the count vector.
pub fn enumerate_occupations(modes: usize, photons: usize) -> Vec<FockOccupation> {
    fn rec(modes: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<FockOccupation>) {
        if prefix.len() + 1 == modes {
            prefix.push(left);
            out.push(FockOccupation::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(modes, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if modes == 0 {
        if photons == 0 {
            out.push(FockOccupation::new(Vec::new()));
        }
        return out;
    }
    rec(
        modes,
        photons as u32,
        &mut Vec::with_capacity(modes),
        &mut out,
    );
    out
}

pub fn output_distribution(u: &LinearUnitary, input: &FockOccupation) -> Result<FockDistribution> {
    output_distribution_with_cap(u, input, DEFAULT_PHOTON_CAP)
}

/// Output law of a Fock input of mutually indistinguishable photons:
/// `P(s|t) = |Perm(U_{s,t})|² / (Π s_i! · Π t_j!)`, where `U_{s,t}` repeats
/// row `i` of `U` `s_i` times and column `j` `t_j` times.
pub fn output_distribution_with_cap(
    u: &LinearUnitary,
    input: &FockOccupation,
    cap: usize,
) -> Result<FockDistribution> {
    let modes = u.modes();
    if input.modes() != modes {
        return Err(Error::domain(format!(
            "input has {} modes, unitary has {modes}",
            input.modes()
        )));
    }
    let n = input.total();
    if n > cap {
        return Err(Error::Capacity { photons: n, cap });
    }
    let cols = input.photon_modes();
    let input_norm = input.factorial_product();
    let mut dist = FockDistribution::new();
    for output in enumerate_occupations(modes, n) {
        let rows = output.photon_modes();
        let sub = DMatrix::from_fn(n, n, |a, b| u.entry(rows[a], cols[b]));
        let perm = permanent_with_cap(&sub, n.max(1))?;
        let p = perm.norm_sqr() / (output.factorial_product() * input_norm);
        dist.insert(output, p);
    }
    Ok(dist)
}

pub fn multilabel_distribution(
    u: &LinearUnitary,
    photons: &[(usize, InternalLabel)],
) -> Result<FockDistribution> {
    multilabel_distribution_with_cap(u, photons, DEFAULT_PHOTON_CAP)
}

/// Output law of photons carrying internal labels. Photons sharing a label
/// interfere; groups with different labels evolve independently and their
/// output occupations add.
pub fn multilabel_distribution_with_cap(
    u: &LinearUnitary,
    photons: &[(usize, InternalLabel)],
    cap: usize,
) -> Result<FockDistribution> {
    if photons.len() > cap {
        return Err(Error::Capacity {
            photons: photons.len(),
            cap,
        });
    }
    let modes = u.modes();
    let mut groups: BTreeMap<InternalLabel, Vec<usize>> = BTreeMap::new();
    for &(mode, label) in photons {
        groups.entry(label).or_default().push(mode);
    }

    let mut acc = FockDistribution::new();
    acc.insert(FockOccupation::vacuum(modes), 1.0);
    for photon_modes in groups.values() {
        let input = FockOccupation::from_photon_modes(modes, photon_modes)?;
        let group = output_distribution_with_cap(u, &input, cap)?;
        let mut next = FockDistribution::new();
        for (occ_a, p_a) in &acc {
            for (occ_b, p_b) in &group {
                *next.entry(occ_a.add(occ_b)).or_insert(0.0) += p_a * p_b;
            }
        }
        acc = next;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::beamsplitter_unitary;

    fn occ(c: &[u32]) -> FockOccupation {
        FockOccupation::new(c.to_vec())
    }

    #[test]
    fn hom_bunching_on_balanced_splitter() {
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        let d = output_distribution(&u, &occ(&[1, 1])).unwrap();
        assert!((d[&occ(&[2, 0])] - 0.5).abs() < 1e-12);
        assert!((d[&occ(&[0, 2])] - 0.5).abs() < 1e-12);
        assert!(d[&occ(&[1, 1])].abs() < 1e-12);
    }

    #[test]
    fn single_photon_splits_evenly() {
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        let d = output_distribution(&u, &occ(&[1, 0])).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[&occ(&[1, 0])] - 0.5).abs() < 1e-12);
        assert!((d[&occ(&[0, 1])] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_coincidence_is_t_minus_r_squared() {
        // Two-path amplitude sum: √t·√t + (i√r)(i√r) = t − r.
        let u = beamsplitter_unitary(0.3, 0.0).unwrap();
        let d = output_distribution(&u, &occ(&[1, 1])).unwrap();
        assert!((d[&occ(&[1, 1])] - 0.16).abs() < 1e-12);
    }

    #[test]
    fn capacity_and_shape_errors() {
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        assert!(matches!(
            output_distribution(&u, &occ(&[3, 2])),
            Err(Error::Capacity { photons: 5, cap: 4 })
        ));
        assert!(output_distribution(&u, &occ(&[1, 0, 0])).is_err());
        assert!(output_distribution_with_cap(&u, &occ(&[3, 2]), 5).is_ok());
    }

    #[test]
    fn labels_control_interference() {
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        let same =
            multilabel_distribution(&u, &[(0, InternalLabel(0)), (1, InternalLabel(0))]).unwrap();
        assert!(same.get(&occ(&[1, 1])).copied().unwrap_or(0.0) < 1e-12);

        let diff =
            multilabel_distribution(&u, &[(0, InternalLabel(1)), (1, InternalLabel(2))]).unwrap();
        assert!((diff[&occ(&[1, 1])] - 0.5).abs() < 1e-12);
        assert!((diff.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_labels_average_to_partial_visibility() {
        // Same label with probability 0.94, otherwise distinguishable.
        let u = beamsplitter_unitary(0.5, 0.0).unwrap();
        let p = 0.94;
        let same =
            multilabel_distribution(&u, &[(0, InternalLabel(0)), (1, InternalLabel(0))]).unwrap();
        let diff =
            multilabel_distribution(&u, &[(0, InternalLabel(1)), (1, InternalLabel(2))]).unwrap();
        let key = occ(&[1, 1]);
        let coincidence = p * same.get(&key).copied().unwrap_or(0.0) + (1.0 - p) * diff[&key];
        assert!((coincidence - 0.03).abs() < 1e-12);
    }

    #[test]
    fn occupation_enumeration_counts() {
        // C(n+m-1, n)
        assert_eq!(enumerate_occupations(2, 2).len(), 3);
        assert_eq!(enumerate_occupations(4, 3).len(), 20);
        assert_eq!(enumerate_occupations(3, 0).len(), 1);
    }

    #[test]
    fn display_is_ket() {
        assert_eq!(occ(&[2, 0]).to_string(), "|2,0⟩");
    }
}
