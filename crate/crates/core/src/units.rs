//! Physical constants and the one place where velocities become frequencies.
//!
//! Every rate, detuning and Rabi frequency in this crate is an ordinary
//! (not angular) frequency in MHz. Velocities are in m/s, wavelengths in nm.

/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass unit, kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Doppler shift `v / λ` in MHz for a velocity in m/s and a wavelength in nm.
#[inline]
pub fn doppler_shift_mhz(velocity: f64, wavelength_nm: f64) -> f64 {
    1.0e3 * velocity / wavelength_nm
}

/// Inverse of [`doppler_shift_mhz`]: the velocity (m/s) producing `shift` MHz.
#[inline]
pub fn velocity_for_shift(shift_mhz: f64, wavelength_nm: f64) -> f64 {
    shift_mhz * wavelength_nm * 1.0e-3
}

/// Wave-number-like factor `1/λ` expressed in MHz per (m/s).
#[inline]
pub fn doppler_rate(wavelength_nm: f64) -> f64 {
    doppler_shift_mhz(1.0, wavelength_nm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_round_trip() {
        let v = velocity_for_shift(251.0, 852.0);
        assert!((v - 213.852).abs() < 1e-9);
        assert!((doppler_shift_mhz(v, 852.0) - 251.0).abs() < 1e-12);
    }
}
