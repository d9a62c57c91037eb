//! Physical constants (exact SI 2019 values) and lab-unit conversions.

use std::f64::consts::PI;

/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// von Klitzing constant h/e² (Ω).
pub const VON_KLITZING: f64 = PLANCK / (E_CHARGE * E_CHARGE);

pub fn micro_ev(x: f64) -> f64 {
    x * 1e-6 * E_CHARGE
}

pub fn to_micro_ev(energy: f64) -> f64 {
    energy / (1e-6 * E_CHARGE)
}

pub fn micro_volt(x: f64) -> f64 {
    x * 1e-6
}

pub fn milli_kelvin(x: f64) -> f64 {
    x * 1e-3
}

/// Angular frequency (rad/s) of a frequency given in GHz.
pub fn ghz_to_angular(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz * 1e9
}

/// Angular frequency (rad/s) of a frequency given in MHz.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

pub fn angular_to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e9)
}

pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

/// Power in watts of a level given in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
