//! Unit conversions shared across modules.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Optical path length in millimetres per picosecond of delay.
pub const MM_PER_PS: f64 = SPEED_OF_LIGHT * 1e-9;

/// Converts an attenuation in dB to a linear power transmission.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Converts a linear power transmission to an attenuation in dB.
#[inline]
pub fn linear_to_db(transmission: f64) -> f64 {
    -10.0 * transmission.log10()
}

/// Optical frequency in GHz of a vacuum wavelength in nm.
#[inline]
pub fn wavelength_nm_to_ghz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / wavelength_nm
}

/// `sin(x)/x`, with the removable singularity at zero handled by its series.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
