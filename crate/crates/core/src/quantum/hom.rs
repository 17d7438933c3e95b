use crate::units::sinc;
use crate::{Error, Result};

/// Coincidence probability of two photons with mode overlap `overlap` on a
/// coupler of reflectivity `r`: `t² + r² − 2·t·r·V`, `t = 1 − r`.
pub fn hom_coincidence_prob(reflectivity: f64, overlap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&reflectivity) {
        return Err(Error::domain(format!(
            "reflectivity {reflectivity} outside [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::domain(format!("overlap {overlap} outside [0, 1]")));
    }
    let t = 1.0 - reflectivity;
    let r = reflectivity;
    Ok(t * t + r * r - 2.0 * t * r * overlap)
}

/// Overlap of two rectangular-spectrum wavepackets with bandwidth
/// `bandwidth_hz` delayed by `delay_s`: `V0 · sinc²(π·Δν·τ)`.
pub fn overlap_vs_delay(base_overlap: f64, bandwidth_hz: f64, delay_s: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain(format!(
            "bandwidth {bandwidth_hz} must be positive"
        )));
    }
    if !(0.0..=1.0).contains(&base_overlap) {
        return Err(Error::domain(format!(
            "overlap {base_overlap} outside [0, 1]"
        )));
    }
    let s = sinc(std::f64::consts::PI * bandwidth_hz * delay_s);
    Ok(base_overlap * s * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hom_limits() {
        assert!(hom_coincidence_prob(0.5, 1.0).unwrap().abs() < 1e-15);
        assert!((hom_coincidence_prob(0.5, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((hom_coincidence_prob(0.5, 0.94).unwrap() - 0.03).abs() < 1e-12);
        assert!(hom_coincidence_prob(1.5, 0.5).is_err());
        assert!(hom_coincidence_prob(0.5, -0.1).is_err());
    }

    #[test]
    fn overlap_profile() {
        let dnu = 25e9;
        assert_eq!(overlap_vs_delay(0.9, dnu, 0.0).unwrap(), 0.9);
        assert!(overlap_vs_delay(0.9, dnu, 1.0 / dnu).unwrap() < 1e-30);
        let half = overlap_vs_delay(1.0, dnu, 0.5 / dnu).unwrap();
        let expect = (2.0 / std::f64::consts::PI).powi(2);
        assert!((half - expect).abs() < 1e-12);
        assert!((half - 0.405).abs() < 1e-3);
        assert!(overlap_vs_delay(1.0, 0.0, 1e-12).is_err());
    }
}
